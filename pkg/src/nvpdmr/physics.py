"""Physical model of the NV ensemble.

Resonance frequencies, the lumped five-level optical rate model, coherent
two-level evolution, and the spin-dependent photocurrent used by the
experiment drivers.

Units: frequencies in Hz, fields in T, times in s, laser power in mW,
photocurrent in pA (the detector module works in A).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from . import kernels

# <111> family of NV symmetry axes, normalized.
NV_AXES = np.array(
    [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
) / math.sqrt(3.0)

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class DomainError(ValueError):
    """Input outside the validity domain of a model law."""


@dataclass(frozen=True)
class NVParams:
    d_gs: float = 2.87e9
    gamma: float = 28e9
    intrinsic_splitting: float = 8e6
    tau_shelf: float = 200e-9
    tau_excited: float = 12e-9
    branch_shelf: float = 0.5
    branch_repolarize: float = 0.7
    alpha_sat: float = 1.26
    beta_sat: float = -0.07
    linewidth_fwhm: float = 11e6
    contrast_cw: float = 0.026
    t2_star: float = 185e-9
    t2: float = 1.73e-6
    nv_density_ppm: float = 8.0

    def __post_init__(self):
        for name in ("d_gs", "gamma", "tau_shelf", "tau_excited", "linewidth_fwhm",
                     "t2_star", "t2", "nv_density_ppm"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"NVParams.{name} must be finite and > 0, got {value!r}")
        if not (math.isfinite(self.intrinsic_splitting) and self.intrinsic_splitting >= 0):
            raise ValueError("NVParams.intrinsic_splitting must be finite and >= 0")
        for name in ("branch_shelf", "branch_repolarize", "contrast_cw"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"NVParams.{name} must lie in [0, 1], got {value!r}")
        if not (math.isfinite(self.alpha_sat) and math.isfinite(self.beta_sat)):
            raise ValueError("saturation coefficients must be finite")

    def with_(self, **changes) -> "NVParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class RateConfig:
    """Optical rates of the lumped level scheme, none of which are measured.

    Pumping and ionization scale linearly with laser power relative to
    ``power_ref``. ``mw_mixing_rate`` is the incoherent population exchange
    rate between ground m_s=0 and m_s=+-1 under resonant microwaves.
    """

    pump_rate_ref: float = 5e7
    ionization_rate_ref: float = 2e7
    power_ref: float = 8.0
    mw_mixing_rate: float = 1e7

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"RateConfig.{f.name} must be finite and >= 0")
        if self.power_ref <= 0:
            raise ValueError("RateConfig.power_ref must be > 0")


@dataclass(frozen=True)
class ACTone:
    amplitude: tuple
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        amp = tuple(float(a) for a in self.amplitude)
        if len(amp) != 3 or not all(math.isfinite(a) for a in amp):
            raise ValueError("ACTone.amplitude must be a finite 3-vector")
        if not (math.isfinite(self.frequency) and self.frequency > 0):
            raise ValueError("ACTone.frequency must be > 0")
        object.__setattr__(self, "amplitude", amp)


@dataclass(frozen=True)
class MagneticEnvironment:
    b_static: tuple = (0.0, 0.0, 0.0)
    ac_tones: tuple = ()

    def __post_init__(self):
        b = tuple(float(v) for v in self.b_static)
        if len(b) != 3 or not all(math.isfinite(v) for v in b):
            raise ValueError("b_static must be a finite 3-vector")
        object.__setattr__(self, "b_static", b)
        object.__setattr__(self, "ac_tones", tuple(self.ac_tones))

    def field_at(self, t):
        """Field vector(s) at time(s) ``t``; shape ``(3,)`` or ``(len(t), 3)``."""
        t = np.asarray(t, dtype=float)
        b = np.broadcast_to(np.array(self.b_static), t.shape + (3,)).copy()
        for tone in self.ac_tones:
            s = np.sin(2 * np.pi * tone.frequency * t + tone.phase)
            b += s[..., None] * np.array(tone.amplitude)
        return b


@dataclass(frozen=True)
class SpinPopulations:
    """Occupations of {g0, g+-1, e0, e+-1, shelf}; ``carriers`` tallies ionization events."""

    p_g0: float = 1.0
    p_g1: float = 0.0
    p_e0: float = 0.0
    p_e1: float = 0.0
    p_shelf: float = 0.0
    q_neutral: float = 0.0
    carriers: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.q_neutral <= 1.0:
            raise ValueError("q_neutral must lie in [0, 1]")

    @property
    def levels(self) -> np.ndarray:
        return np.array([self.p_g0, self.p_g1, self.p_e0, self.p_e1, self.p_shelf])

    @property
    def total(self) -> float:
        return float(self.levels.sum())

    def _vector(self) -> np.ndarray:
        return np.append(self.levels, self.carriers)

    def _from_vector(self, x) -> "SpinPopulations":
        return SpinPopulations(*(float(v) for v in x[:5]), q_neutral=self.q_neutral,
                               carriers=float(x[5]))


@dataclass(frozen=True)
class TwoLevelState:
    """Bloch vector of the {m_s=0, m_s=+1} pseudo-spin; +z is m_s=0."""

    bloch: tuple = (0.0, 0.0, 1.0)
    coherence_scale: float = 1.0

    def __post_init__(self):
        b = tuple(float(v) for v in self.bloch)
        if len(b) != 3:
            raise ValueError("bloch must be a 3-vector")
        if math.sqrt(sum(v * v for v in b)) > 1.0 + 1e-9:
            raise ValueError("|bloch| must not exceed 1")
        object.__setattr__(self, "bloch", b)

    @property
    def excited_population(self) -> float:
        """Population transferred to m_s=+1."""
        return 0.5 * (1.0 - self.bloch[2])


@dataclass(frozen=True)
class OperatingPoint:
    """Laser/bias working point for the photocurrent model.

    ``v_ref`` is the bias at which the saturation law holds (25 V, the
    power-sweep bias). The default ``bias_v`` is calibrated so that the
    8 mW operating point yields 75 pA.
    """

    laser_power_mw: float = 8.0
    bias_v: float | None = None
    v_ref: float = 25.0

    def __post_init__(self):
        if self.bias_v is None:
            object.__setattr__(self, "bias_v", calibrated_bias(75.0, self.laser_power_mw, self.v_ref))
        if self.v_ref <= 0 or self.bias_v < 0 or self.laser_power_mw < 0:
            raise ValueError("operating point requires v_ref > 0, bias_v >= 0, power >= 0")


def resonance_frequencies(params: NVParams, b_projection: float):
    """Return ``(nu_plus, nu_minus)`` in Hz for a field projection along the NV axis."""
    half = 0.5 * params.intrinsic_splitting
    shift = params.gamma * b_projection
    return params.d_gs + half + shift, params.d_gs - half - shift


def axis_projections(b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (3,) or not np.all(np.isfinite(b)):
        raise ValueError("b must be a finite 3-vector")
    return NV_AXES @ b


def _gauss(x, fwhm):
    return np.exp(-0.5 * (x * (1.0 / (fwhm * FWHM_TO_SIGMA))) ** 2)


def odmr_response(params: NVParams, mw_frequency, b_projection: float = 0.0):
    """Relative CW contrast (<= 0) at ``mw_frequency``.

    Two Gaussian dips of depth ``contrast_cw / 2`` each, centered on the two
    transitions. Accepts scalars or arrays for ``mw_frequency``.
    """
    f = np.asarray(mw_frequency, dtype=float)
    if np.any(f <= 0):
        raise ValueError("mw_frequency must be > 0")
    nu_p, nu_m = resonance_frequencies(params, b_projection)
    w = params.linewidth_fwhm
    out = -0.5 * params.contrast_cw * (_gauss(f - nu_p, w) + _gauss(f - nu_m, w))
    return float(out) if out.ndim == 0 else out


def max_dip_slope(depth: float, fwhm: float) -> float:
    """Largest |d(response)/d(frequency)| of one Gaussian dip of given depth."""
    return depth * math.sqrt(8.0 * math.log(2.0) / math.e) / fwhm


def photocurrent_saturation(params: NVParams, power: float) -> float:
    """Two-photon saturation law ``alpha P^2 / (1 + beta P)`` in pA."""
    if power < 0:
        raise DomainError("power must be >= 0")
    denom = 1.0 + params.beta_sat * power
    if denom <= 1e-6:
        raise DomainError(
            f"saturation law undefined at P={power} mW (pole at {-1.0 / params.beta_sat:.4g} mW)"
        )
    return params.alpha_sat * power * power / denom


def bias_scaling(current_ref: float, v_ref: float, v: float) -> float:
    if v_ref <= 0:
        raise ValueError("v_ref must be > 0")
    if v < 0:
        raise ValueError("bias voltage must be >= 0")
    return current_ref * v / v_ref


def calibrated_bias(target_pa: float, power: float, v_ref: float, params: NVParams | None = None) -> float:
    """Bias voltage at which ``power`` produces ``target_pa`` under the saturation law."""
    params = params or NVParams()
    return v_ref * target_pa / photocurrent_saturation(params, power)


def steady_state_photocurrent(params: NVParams, power: float, bias_v: float,
                              spin_contrast_input: float = 0.0, v_ref: float = 25.0) -> float:
    if not -params.contrast_cw - 1e-12 <= spin_contrast_input <= 1e-12:
        raise ValueError(
            f"spin_contrast_input must lie in [-{params.contrast_cw}, 0], got {spin_contrast_input}"
        )
    base = bias_scaling(photocurrent_saturation(params, power), v_ref, bias_v)
    return base * (1.0 + spin_contrast_input)


# -- rate model ------------------------------------------------------------

def rate_matrix(params: NVParams, laser_power: float, mw_resonant: bool,
                rates: RateConfig = RateConfig()) -> np.ndarray:
    """Generator of the 5-level model plus a carrier-tally row (6x6).

    Order: g0, g1, e0, e1, shelf, carriers. Columns of the first five rows
    sum to zero. Ionization returns the centre to the ground state of the
    same spin projection (instant recombination) and only tallies carriers.
    """
    if laser_power < 0:
        raise ValueError("laser_power must be >= 0")
    scale = laser_power / rates.power_ref
    k_pump = rates.pump_rate_ref * scale
    k_ion = rates.ionization_rate_ref * scale
    g_exc = 1.0 / params.tau_excited
    g_shelf = 1.0 / params.tau_shelf
    b, r = params.branch_shelf, params.branch_repolarize

    m = np.zeros((6, 6))

    def move(src, dst, rate):
        m[src, src] -= rate
        m[dst, src] += rate

    move(0, 2, k_pump)
    move(1, 3, k_pump)
    move(2, 0, g_exc + k_ion)
    move(3, 1, (1.0 - b) * g_exc + k_ion)
    move(3, 4, b * g_exc)
    move(4, 0, r * g_shelf)
    move(4, 1, (1.0 - r) * g_shelf)
    if mw_resonant:
        move(0, 1, rates.mw_mixing_rate)
        move(1, 0, rates.mw_mixing_rate)
    m[5, 2] += k_ion
    m[5, 3] += k_ion
    return m


def _check_step(params: NVParams, dt: float):
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if dt > params.tau_excited / 10.0 * (1.0 + 1e-12):
        raise ValueError(
            f"step size {dt:.3g} s exceeds the guard tau_excited/10 = {params.tau_excited / 10:.3g} s"
        )


def propagate_rate_equations(state: SpinPopulations, params: NVParams, laser_power: float,
                             mw_resonant: bool, dt: float,
                             rates: RateConfig = RateConfig()) -> SpinPopulations:
    """Advance the rate model by one explicit RK4 step of length ``dt``."""
    return propagate_steps(state, params, laser_power, mw_resonant, dt, 1, rates)


def propagate_steps(state: SpinPopulations, params: NVParams, laser_power: float,
                    mw_resonant: bool, dt: float, n_steps: int,
                    rates: RateConfig = RateConfig()) -> SpinPopulations:
    """Advance by ``n_steps`` fixed steps under constant drive."""
    _check_step(params, dt)
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    m = rate_matrix(params, laser_power, mw_resonant, rates)
    x = kernels.rk4_linear(m, state._vector(), dt, n_steps)
    return state._from_vector(x)


def propagate_for(state: SpinPopulations, params: NVParams, laser_power: float,
                  mw_resonant: bool, duration: float, dt: float | None = None,
                  rates: RateConfig = RateConfig()) -> SpinPopulations:
    """Advance by ``duration``; the step is shrunk so it divides the duration."""
    dt = params.tau_excited / 10.0 if dt is None else dt
    n = max(1, math.ceil(duration / dt - 1e-9))
    return propagate_steps(state, params, laser_power, mw_resonant, duration / n, n, rates)


# -- coherent dynamics -------------------------------------------------------

def evolve_two_level(state: TwoLevelState, rabi_rate: float, phase: float, detuning: float,
                     duration: float, params: NVParams,
                     dephasing_time: float | None = None) -> TwoLevelState:
    """Rotate the Bloch vector under a (possibly detuned) drive.

    The rotation axis is ``(Omega cos(phase), Omega sin(phase), Delta)`` and the
    angle ``2 pi sqrt(Omega^2 + Delta^2) duration``. Components perpendicular
    to the rotation axis decay by ``exp(-duration / T)``, T defaulting to
    ``t2_star``; with no drive the axis is z, so this is plain transverse
    dephasing. Pass ``dephasing_time=params.t2`` for refocused intervals.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    t_dec = params.t2_star if dephasing_time is None else dephasing_time
    v = np.array(state.bloch)
    omega_g = math.hypot(rabi_rate, detuning)
    if omega_g > 0:
        n = np.array([rabi_rate * math.cos(phase), rabi_rate * math.sin(phase), detuning]) / omega_g
    else:
        n = np.array([0.0, 0.0, 1.0])
    theta = 2.0 * math.pi * omega_g * duration
    c, s = math.cos(theta), math.sin(theta)
    v = v * c + np.cross(n, v) * s + n * (n @ v) * (1.0 - c)

    decay = math.exp(-duration / t_dec) if math.isfinite(t_dec) else 1.0
    along = n * (n @ v)
    v = along + decay * (v - along)
    norm = float(np.linalg.norm(v))
    if norm > 1.0:  # rounding only
        v = v / norm
    return TwoLevelState(tuple(v), state.coherence_scale * decay)


def echo_coherence(params: NVParams, total_tau: float, n_pi: int = 1) -> float:
    """Coherence after ``total_tau`` of free precession; refocused if ``n_pi >= 1``."""
    if total_tau < 0:
        raise ValueError("total_tau must be >= 0")
    if n_pi < 0:
        raise ValueError("n_pi must be >= 0")
    t = params.t2 if n_pi >= 1 else params.t2_star
    return math.exp(-total_tau / t)
