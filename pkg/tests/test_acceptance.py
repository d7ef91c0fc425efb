"""End-to-end acceptance checks, one test per criterion.

Each test records one ``[ACCEPT n] PASS|FAIL ...`` line; the lines are
printed together at the end of the pytest run.
"""
import itertools
import math
import time

import numpy as np

from nvpdmr import detector as det
from nvpdmr import experiments as ex
from nvpdmr import fitting as fit
from nvpdmr import physics as phy
from nvpdmr import sensitivity as sens
from nvpdmr import sequence as sq
from nvpdmr.results import sidecar_paths, write_results


class Report:
    def __init__(self, log, number, title):
        self.log, self.number, self.title = log, number, title
        self.checks = []
        self.t0 = time.perf_counter()

    def check(self, label, ok, detail=""):
        self.checks.append((label, bool(ok), detail))

    def finish(self, budget_s=None):
        elapsed = time.perf_counter() - self.t0
        if budget_s is not None:
            self.check(f"runtime < {budget_s:g} s", elapsed < budget_s, f"{elapsed:.2f} s")
        ok = all(c[1] for c in self.checks)
        failed = [f"{c[0]} ({c[2]})" for c in self.checks if not c[1]]
        summary = "; ".join(f"{c[0]}: {c[2]}" for c in self.checks if c[2])
        self.log.append(f"[ACCEPT {self.number:>2}] {'PASS' if ok else 'FAIL'} {self.title} | {summary}")
        assert ok, "failed: " + "; ".join(failed)


def cfg_for(kind, **kw):
    kw.setdefault("sweep", ex.Sweep(kind))
    return ex.ExperimentConfig(**kw)


def test_01_zeeman_shift(acceptance_log):
    rep = Report(acceptance_log, 1, "resonance shift 28 MHz/mT")
    nv = phy.NVParams()
    worst = 0.0
    for b in (1e-3, -2.5e-3, 0.37e-3, 1e-6):
        p1, m1 = phy.resonance_frequencies(nv, b)
        p0, m0 = phy.resonance_frequencies(nv, 0.0)
        worst = max(worst, abs((p1 - p0) - 28e9 * b), abs((m0 - m1) - 28e9 * b))
    eps = 4 * np.spacing(nv.d_gs)
    rep.check("shift = gamma*B", worst <= eps, f"max error {worst:.2g} Hz (ulp bound {eps:.2g})")
    p, m = phy.resonance_frequencies(nv.with_(intrinsic_splitting=0.0), 1e-3)
    rep.check("1 mT splitting", (p, m) == (2.898e9, 2.842e9), f"{p:.6g}/{m:.6g} Hz")
    rep.finish()


def test_02_saturation_refit(acceptance_log):
    rep = Report(acceptance_log, 2, "saturation law refit")
    model = fit.get_model("saturation")
    x = np.arange(0.0, 9.01, 0.5)
    clean = model(x, [1.26, -0.07])
    res = ex.run_experiment(cfg_for("saturation").noiseless())
    err_a, err_b = abs(res.fit["alpha"] / 1.26 - 1), abs(res.fit["beta"] / -0.07 - 1)
    rep.check("noise-free within 1%", max(err_a, err_b) < 0.01, f"{err_a:.1e}, {err_b:.1e}")
    # 2% additive Gaussian noise on each point, fitted with the known per-point sigma
    sigma = np.maximum(0.02 * clean, 1e-9)
    worst = np.zeros(2)
    for seed in range(50):
        y = clean + np.random.default_rng(seed).normal(0.0, 1.0, len(x)) * 0.02 * clean
        r = fit.curve_fit("saturation", x, y, sigma=sigma)
        worst = np.maximum(worst, [abs(r["alpha"] / 1.26 - 1), abs(r["beta"] / -0.07 - 1)])
    rep.check("2% noise, all 50 seeds within 5%", np.all(worst < 0.05),
              f"worst alpha {worst[0]:.1%}, beta {worst[1]:.1%}")
    rep.finish(1.0)


def test_03_ipcd_quantization(acceptance_log):
    rep = Report(acceptance_log, 3, "IPCD quantization and noise")
    quiet = det.IPCDConfig(noise_rms_lsb=0.0)
    code = det.integrate_and_quantize(det.PhotocurrentTrace.constant(75e-12, 0.2, 1e-3), quiet).code
    rep.check("75 pA -> code 1500", code == 1500, str(code))
    cfg = det.IPCDConfig(seed=0)
    codes = det.quantize_mean_current(75e-12, cfg, cfg.rng(), size=10_000)
    std = float(np.std(codes * cfg.lsb_current, ddof=1)) / cfg.lsb_current
    rep.check("std 1.2 LSB +- 5%", abs(std / 1.2 - 1) < 0.05, f"{std:.3f} LSB")
    rep.finish(1.0)


def test_04_noise_budget(acceptance_log):
    rep = Report(acceptance_log, 4, "noise budget")
    nb = det.noise_budget(75e-12)
    rep.check("shot ~ 4.8 fA within 3%", abs(nb.shot / 4.8e-15 - 1) < 0.03, f"{nb.shot * 1e15:.3f} fA/rtHz")
    rep.check("quantization 84.85 fA", abs(nb.quantization - 84.85e-15) < 0.005e-15,
              f"{nb.quantization * 1e15:.3f} fA/rtHz")
    rep.check("quantization ~ 84 fA within 2%", abs(nb.quantization / 84e-15 - 1) < 0.02, "")
    rep.check("johnson 0.6 fA at 46 GOhm", abs(nb.johnson * 1e15 - 0.6) < 0.005, f"{nb.johnson * 1e15:.3f} fA/rtHz")
    rep.finish()


def test_05_cw_pdmr(acceptance_log):
    rep = Report(acceptance_log, 5, "differential CW-PDMR")
    res = ex.run_experiment(cfg_for("odmr", cycles_per_point=1000))
    depth, fwhm = res.extra.get("dip_depth_A", math.nan), res.extra.get("fwhm_Hz", math.nan)
    rep.check("fit converged", res.fit.converged, res.fit.message)
    rep.check("50 points x 1e3 cycles", len(res.sweep_values) == 50 and set(res.n_cycles) == {1000}, "")
    rep.check("dip depth 2 pA +- 10%", abs(depth / 2e-12 - 1) < 0.10, f"{depth * 1e12:.3f} pA")
    rep.check("FWHM 11 MHz +- 5%", abs(fwhm / 11e6 - 1) < 0.05, f"{fwhm / 1e6:.2f} MHz")
    rep.finish(10.0)


def test_06_plsd(acceptance_log):
    rep = Report(acceptance_log, 6, "PLSD")
    # the 10 MHz peak is ~0.2 LSB after the detector roll-off, so noise is averaged over 1e6 cycles
    cfg = cfg_for("plsd", cycles_per_point=1_000_000)
    res = ex.run_experiment(cfg, workers=4)
    for f in (1e3, 1e5, 1e6, 1e7):
        k = res.extra["tone_Hz"].index(f)
        rel = res.extra["peak_probe_Hz"][k] / f - 1
        rep.check(f"peak at {f:g} Hz", abs(rel) < 1e-6 and res.extra["peak_abs_differential_A"][k] > 0,
                  f"{res.extra['peak_abs_differential_A'][k]:.3g} A")
    worst = max(res.extra["detuned_to_peak_ratio"])
    rep.check("20% detuned < 5% of peak (noise on)", worst < 0.05, f"worst {worst:.2e}")
    quiet = max(ex.run_experiment(cfg.with_(cycles_per_point=1).noiseless()).extra["detuned_to_peak_ratio"])
    rep.check("20% detuned < 5% of peak (noise free)", quiet < 0.05, f"worst {quiet:.2e}")
    ratio = ex.plsd_dc_ratio(cfg.noiseless())
    rep.check("AC/DC ratio 0.900 +- 0.01", abs(ratio - 0.900) <= 0.01, f"{ratio:.5f}")
    f0 = res.fit["f0"]
    rep.check("low-pass f0 5 MHz within 20%", res.fit.converged and abs(f0 / 5e6 - 1) < 0.2,
              f"{f0 / 1e6:.3f} +- {res.fit.uncertainties['f0'] / 1e6:.3f} MHz")
    rep.finish(60.0)


def test_07_rabi(acceptance_log):
    rep = Report(acceptance_log, 7, "Rabi")
    res = ex.run_experiment(cfg_for("rabi", cycles_per_point=1000))
    r2 = res.extra["r_squared"]
    rep.check("frequency vs amplitude R2 > 0.99", r2 > 0.99, f"R2 {r2:.6f}")
    decays = np.array(res.extra["envelope_decay_s"])
    rep.check("envelope decay 185 ns +- 10%", np.all(np.abs(decays / 185e-9 - 1) < 0.10),
              "/".join(f"{d * 1e9:.0f}" for d in decays) + " ns")
    omega = 12.5e6
    delta = 10 * omega
    off = cfg_for("rabi", protocol=ex.ProtocolConfig(mw_amplitudes=(1.0,), mw_detuning=delta),
                  sweep=ex.Sweep("rabi", tuple(np.arange(0, 201) * 1e-9))).noiseless()
    contrast = ex.run_experiment(off).extra["normalized_contrast"][0]
    bound = 1.02 * omega**2 / delta**2
    rep.check("10x detuned contrast < 1.02 Omega^2/Delta^2", contrast < bound,
              f"{contrast:.5f} < {bound:.5f}")
    rep.finish(30.0)


def test_08_cpmg(acceptance_log):
    rep = Report(acceptance_log, 8, "CPMG")
    res = ex.run_experiment(cfg_for("cpmg", cycles_per_point=10_000))
    t2 = res.extra.get("t2_s", math.nan)
    rep.check("T2 1.73 us +- 5%", abs(t2 / 1.73e-6 - 1) < 0.05, f"{t2 * 1e6:.3f} us")
    rabi = ex.run_experiment(cfg_for("rabi"))
    t2_star = float(np.mean(rabi.extra["envelope_decay_s"]))
    rep.check("T2/T2* >= 9", t2 / t2_star >= 9, f"{t2 / t2_star:.2f}")
    rep.finish(30.0)


def test_09_sensitivity(acceptance_log):
    rep = Report(acceptance_log, 9, "sensitivity arithmetic")
    reference = {"optical raw": 53.2e-6, "optical nominal": 71e-9, "electrical CW": 1.6e-6,
                 "electrical PLSD": 2.4e-6}
    rows = sens.comparison_table()
    computed = {}
    for row in rows:
        key = next(k for k in reference if row.label.startswith(k))
        computed[key] = row.computed
        rep.check(f"{key} within 25%", abs(row.relative_deviation) < 0.25,
                  f"{row.computed:.3g} vs {row.reference:.3g} ({row.relative_deviation:+.1%})")
    worst = 0.0
    for a, b in itertools.combinations(reference, 2):
        worst = max(worst, abs((computed[a] / computed[b]) / (reference[a] / reference[b]) - 1))
    rep.check("pairwise ratios within 5%", worst < 0.05, f"worst {worst:.1%}")
    pen = sens.plsd_penalty(0.25)
    rep.check("penalty(0.25) = 1.570796", f"{pen:.6f}" == "1.570796", f"{pen:.9f}")
    rep.finish()


def test_10_paschen(acceptance_log):
    rep = Report(acceptance_log, 10, "Paschen check")
    ok = det.bias_field_check(24.0, 15e-6)
    rep.check("24 V / 15 um = 1.6 V/um passes", ok.ok and abs(ok.field - 1.6) < 1e-12, f"{ok.field:.3f} V/um")
    edge = det.bias_field_check(45.0, 15e-6)
    rep.check("3 V/um boundary rejected", not edge.ok, f"{edge.field:.3f} V/um")
    rep.finish()


def _fuzzed(n, seed=7):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        k = rng.integers(4)
        if k == 0:
            out += [s for _, s in sq.gen_odmr(rng.uniform(2.8e9, 2.95e9, 2), cw=bool(rng.integers(2)),
                                              laser_power=float(rng.uniform(0, 10)))]
        elif k == 1:
            out.append(sq.gen_plsd(float(10 ** rng.uniform(1.5, 7.3)), float(rng.uniform(0.05, 0.95)),
                                   float(rng.uniform(0, 10)), quadrature=bool(rng.integers(2))))
        elif k == 2:
            out += sq.gen_rabi(rng.uniform(0, 1e-6, 2), mw_amplitude=float(rng.uniform(0, 1)),
                               phase=float(rng.uniform(-math.pi, math.pi)), detuning=float(rng.normal(0, 1e7)))
        else:
            out += sq.gen_cpmg(rng.uniform(0, 6e-6, 2), rabi_rate=float(rng.uniform(2e6, 2e7)))
    return out[:n]


def _output_bytes(result, path):
    write_results(result, path)
    return path.read_bytes() + sidecar_paths(path)[0].read_bytes()


def test_11_properties(acceptance_log, tmp_path):
    rep = Report(acceptance_log, 11, "property suites")
    seqs = _fuzzed(1000)
    diffs = sum(sq.parse_sequence(sq.format_sequence(s)) != s for s in seqs)
    rep.check("1000 sequences round-trip", diffs == 0, f"{diffs} diffs")

    differing = []
    for kind in ex.KINDS:
        cfg = cfg_for(kind, seed=21, cycles_per_point=50)
        serial = _output_bytes(ex.run_experiment(cfg, workers=1), tmp_path / "out.csv")
        parallel = _output_bytes(ex.run_experiment(cfg, workers=4), tmp_path / "out.csv")
        if serial != parallel:
            differing.append(kind)
    rep.check("serial and parallel output bytes equal", not differing, ",".join(differing) or "all kinds")

    nv = phy.NVParams()
    state = phy.SpinPopulations()
    worst = 0.0
    for power, mw in ((8.0, False), (8.0, True), (0.0, False), (3.0, True)):
        state = phy.propagate_steps(state, nv, power, mw, nv.tau_excited / 10, 250_000)
        worst = max(worst, abs(state.total - 1.0))
        if min(state.levels) < -1e-12:
            worst = math.inf
    rep.check("1e6 rate steps conserve population within 1e-3", worst < 1e-3, f"drift {worst:.1e}")
    rep.finish(60.0)
