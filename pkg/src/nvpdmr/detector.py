"""Integrated photocurrent detector (IPCD), reference lock-in, and noise sources.

Currents here are in amperes. The ADC is signed and mid-tread: the code is
the nearest integer to ``mean_current / lsb_current`` plus Gaussian input
noise, clamped at ``+-(2**(bits-1) - 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

E_CHARGE = 1.602176634e-19
K_B = 1.380649e-23

# Effective input resistance back-solved from a 0.6 fA/sqrt(Hz) Johnson
# figure at 300 K; the physical amplifier input is not characterized.
DEFAULT_RESISTANCE = 46e9
DEFAULT_TEMPERATURE = 300.0
PASCHEN_LIMIT_V_PER_UM = 3.0


class TraceTooShort(ValueError):
    pass


@dataclass(frozen=True)
class IPCDConfig:
    lsb_current: float = 50e-15
    bits: int = 16
    noise_rms_lsb: float = 1.2
    t_integrate: float = 0.2
    bandwidth_f0: float = 5e6
    seed: int = 0

    def __post_init__(self):
        if not self.lsb_current > 0:
            raise ValueError("lsb_current must be > 0")
        if not 8 <= self.bits <= 24:
            raise ValueError("bits must lie in [8, 24]")
        if not self.t_integrate > 0:
            raise ValueError("t_integrate must be > 0")
        if not self.bandwidth_f0 > 0:
            raise ValueError("bandwidth_f0 must be > 0")
        if not self.noise_rms_lsb >= 0:
            raise ValueError("noise_rms_lsb must be >= 0")

    @property
    def code_limit(self) -> int:
        return 2 ** (self.bits - 1) - 1

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class PhotocurrentTrace:
    sample_interval: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be > 0")
        if not np.all(np.isfinite(samples)):
            raise ValueError("trace samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) * self.sample_interval

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) * self.sample_interval

    @classmethod
    def constant(cls, current, duration, sample_interval):
        n = int(round(duration / sample_interval))
        return cls(sample_interval, np.full(n, float(current)))


@dataclass(frozen=True)
class DetectorReading:
    code: int
    lsb_current: float

    @property
    def current_estimate(self) -> float:
        return self.code * self.lsb_current


def quantize_mean_current(mean_current, cfg: IPCDConfig, rng: np.random.Generator | None = None,
                          size=None):
    """ADC codes for a window-averaged input current (scalar or array).

    ``size`` draws that many independent readings of the same input.
    """
    x = np.asarray(mean_current, dtype=float) / cfg.lsb_current
    if size is not None:
        x = np.broadcast_to(x, size)
    if cfg.noise_rms_lsb > 0:
        rng = cfg.rng() if rng is None else rng
        x = x + rng.normal(0.0, cfg.noise_rms_lsb, size=np.shape(x))
    codes = np.floor(x + 0.5)
    return np.clip(codes, -cfg.code_limit, cfg.code_limit).astype(np.int64)


def integrate_and_quantize(trace: PhotocurrentTrace, cfg: IPCDConfig,
                           rng: np.random.Generator | None = None) -> DetectorReading:
    """Average one integration window through the input low-pass and digitize it.

    The window is the first ``t_integrate`` of the trace. ``rng`` is advanced
    in place; without one a fresh generator is seeded from ``cfg.seed``.
    """
    n = int(round(cfg.t_integrate / trace.sample_interval))
    if n < 1 or len(trace.samples) < n:
        raise TraceTooShort(
            f"trace spans {trace.duration:.6g} s, need {cfg.t_integrate:.6g} s"
        )
    alpha = -math.expm1(-2.0 * math.pi * cfg.bandwidth_f0 * trace.sample_interval)
    filtered = kernels.lowpass_iir(trace.samples[:n], alpha, 0.0)
    code = quantize_mean_current(filtered.mean(), cfg, rng)
    return DetectorReading(int(code), cfg.lsb_current)


def differential_readout(reading_a: DetectorReading, reading_b: DetectorReading) -> float:
    if reading_a.lsb_current != reading_b.lsb_current:
        raise ValueError("readings come from detectors with different LSB")
    return reading_a.current_estimate - reading_b.current_estimate


def lockin_demodulate(trace: PhotocurrentTrace, f_ref: float, time_constant: float,
                      calibration: float = 2.0):
    """Dual-phase lock-in: mix with sin/cos at ``f_ref``, first-order low-pass.

    Returns the filter outputs at the end of the trace times ``calibration``;
    with the default of 2 a matched ``A sin(2 pi f_ref t)`` reads ``x = A``.
    """
    if f_ref <= 0 or time_constant <= 0:
        raise ValueError("f_ref and time_constant must be > 0")
    if trace.duration < 5.0 * time_constant * (1 - 1e-12):
        raise TraceTooShort(
            f"trace spans {trace.duration:.6g} s, need 5 time constants ({5 * time_constant:.6g} s)"
        )
    phase = 2.0 * math.pi * f_ref * trace.times
    alpha = -math.expm1(-trace.sample_interval / time_constant)
    x = kernels.lowpass_iir(trace.samples * np.sin(phase), alpha)[-1]
    y = kernels.lowpass_iir(trace.samples * np.cos(phase), alpha)[-1]
    return calibration * x, calibration * y


def lowpass_gain(f, f0: float):
    """Response ``1 / (1 + f/f0)`` used for the PLSD bandwidth."""
    if f0 <= 0:
        raise ValueError("f0 must be > 0")
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("f must be >= 0")
    g = 1.0 / (1.0 + f / f0)
    return float(g) if g.ndim == 0 else g


def shot_noise_density(current: float) -> float:
    if current < 0:
        raise ValueError("current must be >= 0")
    return math.sqrt(2.0 * E_CHARGE * current)


def johnson_noise_density(resistance: float, temperature: float = DEFAULT_TEMPERATURE) -> float:
    if not resistance > 0 or not temperature > 0:
        raise ValueError("resistance and temperature must be > 0")
    if math.isinf(resistance):
        return 0.0
    return math.sqrt(4.0 * K_B * temperature / resistance)


def quantization_noise_floor(cfg: IPCDConfig) -> float:
    """Differential readout noise referred to a 1 Hz differential-sample rate.

    Each differential sample combines two independent readings, hence the
    sqrt(2) on the per-reading RMS; one differential sample per second maps
    the RMS current directly onto A/sqrt(Hz).
    """
    return math.sqrt(2.0) * cfg.noise_rms_lsb * cfg.lsb_current


@dataclass(frozen=True)
class NoiseBudget:
    shot: float
    johnson: float
    quantization: float
    total: float

    def signal_ratio(self, signal: float) -> float:
        return signal / self.total if self.total > 0 else math.inf

    def dominant(self) -> str:
        parts = {"shot": self.shot, "johnson": self.johnson, "quantization": self.quantization}
        return max(parts, key=parts.get)


def noise_budget(current: float, resistance: float = DEFAULT_RESISTANCE,
                 temperature: float = DEFAULT_TEMPERATURE,
                 cfg: IPCDConfig = IPCDConfig()) -> NoiseBudget:
    shot = shot_noise_density(current)
    johnson = johnson_noise_density(resistance, temperature)
    quant = quantization_noise_floor(cfg)
    return NoiseBudget(shot, johnson, quant, math.sqrt(shot**2 + johnson**2 + quant**2))


@dataclass(frozen=True)
class BiasCheck:
    ok: bool
    field: float  # V/um
    limit: float = PASCHEN_LIMIT_V_PER_UM

    @property
    def message(self) -> str:
        verdict = "ok" if self.ok else "exceeds"
        return f"{self.field:.3g} V/um {verdict} the {self.limit:g} V/um breakdown limit of air"


def bias_field_check(voltage: float, gap: float, limit: float = PASCHEN_LIMIT_V_PER_UM) -> BiasCheck:
    """Field across an electrode gap (``gap`` in metres) against air breakdown."""
    if not gap > 0:
        raise ValueError("gap must be > 0")
    field = abs(voltage) / (gap * 1e6)
    ok = field < limit and not math.isclose(field, limit, rel_tol=1e-12)
    return BiasCheck(ok, field, limit)
