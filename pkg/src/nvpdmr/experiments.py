"""Simulated measurements: physics + sequence + detector, then a model fit.

Every sweep point draws from its own random stream,
``SeedSequence(seed, spawn_key=(point_index,))``, so results do not depend
on how points are scheduled across workers.

Differential currents are segment A minus segment B in amperes. Rabi and
CPMG results are divided by the readout-laser duty of the window, i.e.
they are the current difference during the readout pulse.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import detector as det
from . import kernels
from . import physics as phy
from . import sequence as sq
from .fitting import FitError, FitReport, curve_fit, get_model, r_squared

KINDS = ("odmr", "saturation", "bias", "rabi", "cpmg", "plsd")

AC_AMPLITUDE = 0.16e-3  # T, half of the 3.2 G peak-to-peak test field
DEFAULT_TONES = tuple(
    phy.ACTone(tuple(AC_AMPLITUDE * phy.NV_AXES[0]), f) for f in (1e3, 1e4, 1e5, 1e6, 1e7)
)
DEFAULT_ENV = phy.MagneticEnvironment((0.0, 0.0, 0.0), DEFAULT_TONES)


def default_points(kind):
    if kind == "odmr":
        return tuple(np.linspace(2.84e9, 2.90e9, 50))
    if kind == "saturation":
        return tuple(np.arange(0.0, 9.01, 0.5))
    if kind == "bias":
        return (0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0)
    if kind == "rabi":
        return tuple(np.arange(0, 801, 4) * 1e-9)
    if kind == "cpmg":
        return tuple(np.arange(0, 31) * 200e-9)
    if kind == "plsd":
        return (-0.2, -0.15, -0.1, -0.05, 0.0, 0.05, 0.1, 0.15, 0.2)
    raise ValueError(f"unknown sweep kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class Sweep:
    kind: str = "odmr"
    points: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sweep kind {self.kind!r}; expected one of {KINDS}")
        pts = default_points(self.kind) if self.points is None else self.points
        pts = tuple(float(p) for p in pts)
        if not pts:
            raise ValueError("sweep points must not be empty")
        if not all(math.isfinite(p) for p in pts):
            raise ValueError("sweep points must be finite")
        if any(b <= a for a, b in zip(pts, pts[1:])):
            raise ValueError("sweep points must be strictly increasing")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol settings the measurements need beyond the physical parameters.

    ``plsd_conversion`` is the calibrated field-to-current slope at the
    microwave operating point in A/T (0.78 pA/mT).
    """

    mw_amplitudes: tuple = (0.25, 0.5, 0.75, 1.0)
    rabi_rate_per_amplitude: float = 12.5e6
    mw_detuning: float = 0.0
    laser_pulse: float = 5e-6
    gap: float = 1e-6
    plsd_duty: float = 0.25
    plsd_conversion: float = 0.78e-9
    plsd_quadrature: bool = False
    nv_axis: int = 0
    saturation_bias_v: float = 25.0
    fluorescence_per_mw: float = 2.75e10

    def __post_init__(self):
        object.__setattr__(self, "mw_amplitudes", tuple(float(a) for a in self.mw_amplitudes))
        if not self.mw_amplitudes or any(a < 0 for a in self.mw_amplitudes):
            raise ValueError("mw_amplitudes must be non-empty and >= 0")
        if not 0 < self.plsd_duty < 1:
            raise ValueError("plsd_duty must lie in (0, 1)")
        if self.nv_axis not in (0, 1, 2, 3):
            raise ValueError("nv_axis must be 0..3")
        if self.rabi_rate_per_amplitude <= 0 or self.laser_pulse <= 0 or self.gap < 0:
            raise ValueError("rabi rate and laser pulse must be > 0, gap >= 0")


@dataclass(frozen=True)
class ExperimentConfig:
    nv: phy.NVParams = phy.NVParams()
    env: phy.MagneticEnvironment = DEFAULT_ENV
    ipcd: det.IPCDConfig = det.IPCDConfig()
    drive: phy.OperatingPoint = phy.OperatingPoint()
    protocol: ProtocolConfig = ProtocolConfig()
    sweep: Sweep = Sweep()
    cycles_per_point: int = 100
    seed: int = 0
    detector: str = "ipcd"

    def __post_init__(self):
        if self.cycles_per_point < 1:
            raise ValueError("cycles_per_point must be >= 1")
        if self.detector not in ("ipcd", "ideal"):
            raise ValueError("detector must be 'ipcd' or 'ideal'")

    def with_(self, **changes):
        return replace(self, **changes)

    def noiseless(self, detector="ideal"):
        return replace(self, ipcd=replace(self.ipcd, noise_rms_lsb=0.0), detector=detector)


@dataclass(frozen=True)
class ExperimentResult:
    kind: str
    sweep_values: tuple
    mean_differential: tuple
    std: tuple
    n_cycles: tuple
    fit: FitReport
    extra_fits: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sweep_values)
        if n == 0:
            raise ValueError("an experiment result needs at least one point")
        if not (len(self.mean_differential) == len(self.std) == len(self.n_cycles) == n):
            raise ValueError("result columns differ in length")
        if any(s < 0 for s in self.std):
            raise ValueError("std must be >= 0")


@dataclass(frozen=True)
class _Point:
    mean: float
    std: float
    n: int
    floor: float = 0.0  # per-cycle noise floor in the units of mean
    aux: dict = field(default_factory=dict)


def point_rng(seed, index) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def _map_points(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda args: fn(*args), items))
    return [fn(*args) for args in items]


# -- detector front end ------------------------------------------------------

def _read(cfg, current, rng, n):
    """n readings of a window-averaged current (A), as currents."""
    if cfg.detector == "ideal":
        noise = cfg.ipcd.noise_rms_lsb * cfg.ipcd.lsb_current
        if noise > 0:
            return current + rng.normal(0.0, noise, size=n)
        return np.full(n, float(current))
    return det.quantize_mean_current(current, cfg.ipcd, rng, size=n) * cfg.ipcd.lsb_current


def _stats(values):
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std(ddof=1)) if len(v) > 1 else 0.0


def _differential(cfg, current_a, current_b, rng, scale=1.0):
    n = cfg.cycles_per_point
    a = _read(cfg, current_a, rng, n)
    b = _read(cfg, current_b, rng, n)
    mean, std = _stats((a - b) * scale)
    floor = det.quantization_noise_floor(cfg.ipcd) * abs(scale)
    return _Point(mean, std, n, floor, {"mean_b": float(np.mean(b))})


def _sigma(points):
    s = np.array([max(p.std, p.floor) / math.sqrt(p.n) for p in points])
    return s if np.all(s > 0) else None


def _safe_fit(model, x, y, sigma=None, **kw):
    try:
        return curve_fit(model, x, y, sigma=sigma, **kw)
    except (FitError, ValueError) as exc:
        return FitReport.failed(model, get_model(model).param_names, str(exc))


def _pa_to_a(pa):
    return pa * 1e-12


def segment_current(seg: sq.Segment, params, drive, window, contrast_of=None):
    """Window-averaged photocurrent (A) produced by the laser events of one segment.

    ``contrast_of(event)`` gives the spin contrast seen by a laser event
    (default 0). Charge outside the laser pulses is not collected.
    """
    charge = 0.0
    for ev in seg.channel_events("laser"):
        contrast = contrast_of(ev) if contrast_of else 0.0
        i_on = phy.steady_state_photocurrent(params, ev.attr("power"), drive.bias_v, contrast, drive.v_ref)
        charge += _pa_to_a(i_on) * ev.duration_s
    return charge * seg.repeat / window


def _readout_fraction(seg: sq.Segment, window, readouts):
    return sum(e.duration_s for e in readouts) * seg.repeat / window


# -- CW experiments ----------------------------------------------------------

def _axis_response(cfg, f):
    proj = np.abs(phy.axis_projections(cfg.env.b_static))
    return float(np.mean([phy.odmr_response(cfg.nv, f, p) for p in proj]))


def run_odmr_scan(cfg: ExperimentConfig, workers=1) -> ExperimentResult:
    window = cfg.ipcd.t_integrate
    power = cfg.drive.laser_power_mw

    def point(index, f):
        (_, seq), = sq.gen_odmr([f], laser_power=power)
        response = _axis_response(cfg, f)
        a = segment_current(seq.segment("A"), cfg.nv, cfg.drive, window,
                            lambda ev: response)
        b = segment_current(seq.segment("B"), cfg.nv, cfg.drive, window)
        return _differential(cfg, a, b, point_rng(cfg.seed, index))

    xs = cfg.sweep.points
    pts = _map_points(point, list(enumerate(xs)), workers)
    ys = [p.mean for p in pts]
    fit = _safe_fit("gaussian_dips", xs, ys, _sigma(pts))
    extra = {}
    if fit.converged:
        extra["dip_depth_A"] = abs(fit["depth"])
        extra["fwhm_Hz"] = abs(fit["fwhm"])
        extra["center_Hz"] = fit["center"]
    extra["peak_abs_differential_A"] = float(np.max(np.abs(ys)))
    return _result("odmr", xs, pts, fit, extra=extra)


def run_saturation_scan(cfg: ExperimentConfig, workers=1) -> ExperimentResult:
    """Photocurrent and fluorescence versus laser power at the sweep bias.

    The current column holds absolute (single-segment) readings. Fluorescence
    is linear in power with Poisson counting noise when noise is enabled.
    """
    bias = cfg.protocol.saturation_bias_v
    window = cfg.ipcd.t_integrate
    noisy = cfg.ipcd.noise_rms_lsb > 0

    def point(index, p):
        rng = point_rng(cfg.seed, index)
        current = _pa_to_a(phy.steady_state_photocurrent(cfg.nv, p, bias, 0.0, cfg.drive.v_ref))
        reads = _read(cfg, current, rng, cfg.cycles_per_point)
        mean, std = _stats(reads)
        rate = cfg.protocol.fluorescence_per_mw * p
        if noisy:
            counts = rng.poisson(rate * window, size=cfg.cycles_per_point) / window
        else:
            counts = np.full(cfg.cycles_per_point, rate)
        fl_mean, fl_std = _stats(counts)
        floor = cfg.ipcd.noise_rms_lsb * cfg.ipcd.lsb_current
        return _Point(mean, std, cfg.cycles_per_point, floor,
                      {"fluorescence": fl_mean, "fluorescence_std": fl_std})

    xs = cfg.sweep.points
    pts = _map_points(point, list(enumerate(xs)), workers)
    ys_pa = np.array([p.mean for p in pts]) * 1e12
    sig = _sigma(pts)
    fit = _safe_fit("saturation", xs, ys_pa, None if sig is None else sig * 1e12)
    fl = [p.aux["fluorescence"] for p in pts]
    fl_fit = _safe_fit("linear", xs, fl)
    return _result("saturation", xs, pts, fit, {"fluorescence": fl_fit},
                   {"fluorescence_cps": fl, "current_units": "fit in pA, mW"})


def run_bias_scan(cfg: ExperimentConfig, workers=1) -> ExperimentResult:
    """Absolute current and resonant dip depth versus bias voltage.

    Resonant microwaves are taken to address the full CW contrast.
    """
    power = cfg.drive.laser_power_mw
    contrast = -cfg.nv.contrast_cw

    def point(index, v):
        on = _pa_to_a(phy.steady_state_photocurrent(cfg.nv, power, v, contrast, cfg.drive.v_ref))
        off = _pa_to_a(phy.steady_state_photocurrent(cfg.nv, power, v, 0.0, cfg.drive.v_ref))
        return _differential(cfg, on, off, point_rng(cfg.seed, index))

    xs = cfg.sweep.points
    pts = _map_points(point, list(enumerate(xs)), workers)
    ys = [p.mean for p in pts]
    absolute = [p.aux["mean_b"] for p in pts]
    fit = _safe_fit("linear", xs, ys, _sigma(pts))
    abs_fit = _safe_fit("linear", xs, absolute)
    extra = {
        "absolute_current_A": absolute,
        "r_squared_depth": r_squared("linear", fit, xs, ys) if fit.converged else float("nan"),
        "r_squared_absolute": r_squared("linear", abs_fit, xs, absolute) if abs_fit.converged else float("nan"),
    }
    if fit.converged and abs_fit.converged and abs_fit["slope"] != 0:
        extra["depth_to_current_slope_ratio"] = abs(fit["slope"]) / abs_fit["slope"]
    return _result("bias", xs, pts, fit, {"absolute_current": abs_fit}, extra)


# -- pulsed experiments ------------------------------------------------------

def rabi_signal_point(cfg, seq, rate_per_amplitude, rng):
    window = cfg.ipcd.t_integrate
    seg_a, seg_b = seq.segment("A"), seq.segment("B")
    state = phy.TwoLevelState()
    for ev in seg_a.channel_events("mw"):
        state = phy.evolve_two_level(state, rate_per_amplitude * ev.attr("amplitude", 1.0),
                                     ev.attr("phase", 0.0), ev.attr("detuning", 0.0),
                                     ev.duration_s, cfg.nv)
    contrast = -cfg.nv.contrast_cw * state.excited_population
    readout = seg_a.channel_events("laser")
    a = segment_current(seg_a, cfg.nv, cfg.drive, window, lambda ev: contrast)
    b = segment_current(seg_b, cfg.nv, cfg.drive, window)
    scale = 1.0 / _readout_fraction(seg_a, window, readout)
    pt = _differential(cfg, a, b, rng, scale)
    pt.aux["excited_population"] = state.excited_population
    return pt


def run_rabi(cfg: ExperimentConfig, workers=1) -> ExperimentResult:
    """Rabi oscillations for each configured microwave amplitude.

    Per amplitude a damped cosine is fitted to the differential trace; the
    main fit is a line through the fitted Rabi frequencies versus amplitude.
    """
    p = cfg.protocol
    taus = cfg.sweep.points
    items = []
    for ia, amp in enumerate(p.mw_amplitudes):
        seqs = sq.gen_rabi(taus, laser_pulse=p.laser_pulse, mw_amplitude=amp, gap=p.gap,
                           laser_power=cfg.drive.laser_power_mw, detuning=p.mw_detuning)
        for it, seq in enumerate(seqs):
            items.append((ia * len(taus) + it, (amp, seq)))

    def point(index, payload):
        amp, seq = payload
        return rabi_signal_point(cfg, seq, p.rabi_rate_per_amplitude, point_rng(cfg.seed, index))

    pts = _map_points(point, items, workers)
    scale = cfg.nv.contrast_cw * _pa_to_a(phy.steady_state_photocurrent(
        cfg.nv, cfg.drive.laser_power_mw, cfg.drive.bias_v, 0.0, cfg.drive.v_ref))
    fits, freqs, decays, contrasts = {}, [], [], []
    n = len(taus)
    for ia, amp in enumerate(p.mw_amplitudes):
        chunk = pts[ia * n:(ia + 1) * n]
        ys = [q.mean for q in chunk]
        contrasts.append(float(np.max(np.abs(ys)) / scale) if scale else 0.0)
        if amp == 0 or np.ptp(ys) == 0:
            fits[f"amplitude_{amp!r}"] = FitReport.failed("damped_sine", get_model("damped_sine").param_names,
                                                          "flat trace")
            freqs.append(0.0 if amp == 0 else float("nan"))
            decays.append(float("nan"))
            continue
        f = _safe_fit("damped_sine", taus, ys, _sigma(chunk))
        fits[f"amplitude_{amp!r}"] = f
        freqs.append(abs(f["frequency"]) if f.converged else float("nan"))
        decays.append(f["decay"] if f.converged else float("nan"))
    amps = np.array(p.mw_amplitudes)
    ok = np.isfinite(freqs)
    if ok.sum() >= 3:
        lin = _safe_fit("linear", amps[ok], np.array(freqs)[ok])
        r2 = r_squared("linear", lin, amps[ok], np.array(freqs)[ok]) if lin.converged else float("nan")
    else:
        lin = FitReport.failed("linear", ("slope", "intercept"), "fewer than 3 fitted amplitudes")
        r2 = float("nan")
    xs = tuple(t for _ in p.mw_amplitudes for t in taus)
    extra = {"amplitudes": list(p.mw_amplitudes), "rabi_frequencies_Hz": freqs,
             "envelope_decay_s": decays, "normalized_contrast": contrasts, "r_squared": r2}
    return _result("rabi", xs, pts, lin, fits, extra)


def cpmg_signal_point(cfg, seq, rate_per_amplitude, rng):
    """Echo readout: pulses dephase with T2*, refocused waits decay with T2."""
    window = cfg.ipcd.t_integrate
    seg_a, seg_b = seq.segment("A"), seq.segment("B")
    mw = seg_a.channel_events("mw")
    state = phy.TwoLevelState()
    prev_end = None
    for ev in mw:
        if prev_end is not None and ev.t_start > prev_end:
            state = phy.evolve_two_level(state, 0.0, 0.0, 0.0, (ev.t_start - prev_end) * 1e-9,
                                         cfg.nv, dephasing_time=cfg.nv.t2)
        state = phy.evolve_two_level(state, rate_per_amplitude * ev.attr("amplitude", 1.0), ev.attr("phase", 0.0),
                                     ev.attr("detuning", 0.0), ev.duration_s, cfg.nv)
        prev_end = ev.end
    contrast = -cfg.nv.contrast_cw * state.excited_population
    lasers = seg_a.channel_events("laser")
    readout = [ev for ev in lasers if mw and ev.t_start >= mw[-1].end]

    def contrast_of(ev):
        return contrast if ev in readout else 0.0

    a = segment_current(seg_a, cfg.nv, cfg.drive, window, contrast_of)
    b = segment_current(seg_b, cfg.nv, cfg.drive, window)
    scale = 1.0 / _readout_fraction(seg_a, window, readout)
    pt = _differential(cfg, a, b, rng, scale)
    pt.aux["excited_population"] = state.excited_population
    return pt


def run_cpmg(cfg: ExperimentConfig, workers=1) -> ExperimentResult:
    p = cfg.protocol
    taus = cfg.sweep.points
    rate = p.rabi_rate_per_amplitude
    seqs = sq.gen_cpmg(taus, rabi_rate=rate, laser_pulse=p.laser_pulse, gap=p.gap,
                       laser_power=cfg.drive.laser_power_mw)
    t180 = sq.cpmg_pulse_times(rate)[1]
    free = []
    for seq in seqs:
        mw = seq.segment("A").channel_events("mw")
        free.append((mw[2].t_start - mw[0].end - t180) * 1e-9)

    def point(index, seq):
        return cpmg_signal_point(cfg, seq, rate, point_rng(cfg.seed, index))

    pts = _map_points(point, list(enumerate(seqs)), workers)
    ys = [q.mean for q in pts]
    fit = _safe_fit("exp_decay", free, ys, _sigma(pts))
    extra = {"free_precession_s": free}
    if fit.converged:
        extra["t2_s"] = fit["tau"]
    return _result("cpmg", taus, pts, fit, extra=extra)


# -- PLSD --------------------------------------------------------------------

def _segment_field_integral(seg, tones, axis, b_static, duty_phase):
    """Integral over all laser pulses of the axis-projected field, T*s."""
    total = 0.0
    period = seg.duration * 1e-9
    for ev in seg.channel_events("laser"):
        t0, w = ev.start_s, ev.duration_s
        total += float(b_static @ axis) * w * seg.repeat
        for tone in tones:
            amp = float(np.asarray(tone.amplitude) @ axis)
            if amp == 0:
                continue
            omega = 2.0 * math.pi * tone.frequency
            phase = math.pi / 2.0 - duty_phase + tone.phase
            total += amp * kernels.pulse_train_sin_integral(t0, period, w, seg.repeat, omega, phase)
    return total


def plsd_segment_currents(cfg, seq, tones, f_tone, b_static=None):
    """Window-averaged current (A) for each segment of a PLSD sequence.

    Segment-local time zero is locked to the field so that a pulse of the
    nominal width starting at zero is centred on a field maximum.
    """
    p = cfg.protocol
    axis = phy.NV_AXES[p.nv_axis]
    b_static = np.asarray(cfg.env.b_static if b_static is None else b_static, float)
    window = cfg.ipcd.t_integrate
    gain = det.lowpass_gain(f_tone, cfg.ipcd.bandwidth_f0)
    duty_phase = math.pi * p.plsd_duty
    out = []
    for seg in seq.segments:
        base = segment_current(seg, cfg.nv, cfg.drive, window)
        static_part = float(b_static @ axis) * seg.on_time("laser") * 1e-9 * seg.repeat
        integral = _segment_field_integral(seg, tones, axis, b_static, duty_phase)
        ac_part = integral - static_part
        out.append(base + p.plsd_conversion * (static_part + gain * ac_part) / window)
    return out


def _plsd_sequence(cfg, f_tone, rel):
    p = cfg.protocol
    return sq.gen_plsd(f_tone * (1.0 + rel), p.plsd_duty, cfg.drive.laser_power_mw,
                       quadrature=p.plsd_quadrature, pulse_width=p.plsd_duty / f_tone)


def plsd_dc_ratio(cfg: ExperimentConfig, tone_index=0) -> float:
    """On-resonance PLSD amplitude relative to a DC field of equal magnitude (noise free).

    The AC amplitude is half the A-B difference; the DC reference is the
    segment-A current shift produced by a static field equal to the tone
    amplitude. Both include the same pulse train, so only the sinusoidal
    averaging (and the detector roll-off) remains.
    """
    tone = cfg.env.ac_tones[tone_index]
    seq = _plsd_sequence(cfg, tone.frequency, 0.0)
    ac = plsd_segment_currents(cfg, seq, [tone], tone.frequency, b_static=(0.0, 0.0, 0.0))
    dc = plsd_segment_currents(cfg, seq, [], tone.frequency, b_static=tone.amplitude)
    ref = plsd_segment_currents(cfg, seq, [], tone.frequency, b_static=(0.0, 0.0, 0.0))
    return 0.5 * (ac[0] - ac[1]) / (dc[0] - ref[0])


def run_plsd_sweep(cfg: ExperimentConfig, workers=1) -> ExperimentResult:
    """Probe-frequency sweeps around each AC tone, one tone applied at a time.

    Sweep points are relative detunings of the probe from the tone. The main
    fit is the low-pass law through the per-tone peak magnitudes.
    """
    tones = cfg.env.ac_tones
    if not tones:
        raise ValueError("PLSD needs at least one AC tone in the environment")
    rels = cfg.sweep.points
    items = []
    for it, tone in enumerate(tones):
        for ir, rel in enumerate(rels):
            items.append((it * len(rels) + ir, (tone, rel)))

    def point(index, payload):
        tone, rel = payload
        seq = _plsd_sequence(cfg, tone.frequency, rel)
        currents = plsd_segment_currents(cfg, seq, [tone], tone.frequency)
        rng = point_rng(cfg.seed, index)
        if len(currents) == 4:
            n = cfg.cycles_per_point
            reads = [_read(cfg, c, rng, n) for c in currents]
            xq, yq = reads[0] - reads[2], reads[1] - reads[3]
            mean, std = _stats(np.hypot(xq, yq))
            pt = _Point(mean, std, n, det.quantization_noise_floor(cfg.ipcd))
        else:
            pt = _differential(cfg, currents[0], currents[1], rng)
        pt.aux["probe_Hz"] = 1e9 / seq.segments[0].duration
        return pt

    pts = _map_points(point, items, workers)
    xs = tuple(q.aux["probe_Hz"] for q in pts)
    n = len(rels)
    peaks, peak_freqs, detuned_ratio, peak_sigma = [], [], [], []
    for it, tone in enumerate(tones):
        chunk = pts[it * n:(it + 1) * n]
        mags = np.abs([q.mean for q in chunk])
        k = int(np.argmax(mags))  # first maximum = lowest probe frequency on ties
        peaks.append(float(mags[k]))
        peak_freqs.append(tone.frequency)
        peak_sigma.append(max(chunk[k].std, chunk[k].floor) / math.sqrt(chunk[k].n))
        edge = [mags[i] for i, r in enumerate(rels) if abs(r) >= 0.2 - 1e-12]
        detuned_ratio.append(float(max(edge) / mags[k]) if edge and mags[k] > 0 else float("nan"))
    sig = np.array(peak_sigma)
    if len(tones) >= 3:
        fit = _safe_fit("lowpass", peak_freqs, peaks, sig if np.all(sig > 0) else None)
    else:
        fit = FitReport.failed("lowpass", ("i0", "f0"), "fewer than 3 tones")
    extra = {"tone_Hz": peak_freqs, "peak_abs_differential_A": peaks,
             "detuned_to_peak_ratio": detuned_ratio,
             "peak_probe_Hz": [pts[it * n + int(np.argmax(np.abs([q.mean for q in pts[it * n:(it + 1) * n]])))].aux["probe_Hz"]
                               for it in range(len(tones))]}
    return _result("plsd", xs, pts, fit, extra=extra)


# ---------------------------------------------------------------------------

def _result(kind, xs, pts, fit, extra_fits=None, extra=None):
    return ExperimentResult(
        kind=kind,
        sweep_values=tuple(float(x) for x in xs),
        mean_differential=tuple(p.mean for p in pts),
        std=tuple(p.std for p in pts),
        n_cycles=tuple(p.n for p in pts),
        fit=fit,
        extra_fits=dict(extra_fits or {}),
        extra=dict(extra or {}),
    )


RUNNERS = {
    "odmr": run_odmr_scan,
    "saturation": run_saturation_scan,
    "bias": run_bias_scan,
    "rabi": run_rabi,
    "cpmg": run_cpmg,
    "plsd": run_plsd_sweep,
}


def run_experiment(cfg: ExperimentConfig, workers=1) -> ExperimentResult:
    return RUNNERS[cfg.sweep.kind](cfg, workers)
