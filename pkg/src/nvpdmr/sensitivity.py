"""Closed-form magnetic sensitivity and scaling estimates.

All results are in T/sqrt(Hz). The electron gyromagnetic ratio stands in
for ``g_e mu_B / h``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .detector import E_CHARGE

GAMMA_E = 28e9  # Hz/T
DIAMOND_ATOMS_PER_UM3 = 1.76e11  # 1.76e23 cm^-3
ENSEMBLE_THETA = math.acos(1.0 / math.sqrt(3.0))  # 1/cos(theta) = sqrt(3)


@dataclass(frozen=True)
class SensitivityInputs:
    linewidth_fwhm: float = 11e6
    contrast: float = 0.026
    rate: float = 4e5
    theta: float = ENSEMBLE_THETA
    attenuation_od: float = 0.0
    gamma: float = GAMMA_E

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be > 0")
        if not 0 < self.contrast <= 1:
            raise ValueError("contrast must lie in (0, 1]")
        if not self.linewidth_fwhm > 0:
            raise ValueError("linewidth_fwhm must be > 0")
        if not self.attenuation_od >= 0:
            raise ValueError("attenuation_od must be >= 0")
        if math.cos(self.theta) <= 0:
            raise ValueError("theta must satisfy cos(theta) > 0")

    @property
    def effective_rate(self) -> float:
        return self.rate * 10.0**self.attenuation_od


def sensitivity_cw(inputs: SensitivityInputs) -> float:
    """Minimum detectable field of a differential CW measurement."""
    prefactor = math.sqrt(2.0) / math.cos(inputs.theta) * 4.0 / (3.0 * math.sqrt(3.0))
    return prefactor / inputs.gamma * inputs.linewidth_fwhm / (
        inputs.contrast * math.sqrt(inputs.effective_rate))


def carrier_rate_from_current(current: float) -> float:
    if current < 0:
        raise ValueError("current must be >= 0")
    return current / E_CHARGE


def plsd_penalty(duty: float) -> float:
    """Sensitivity penalty of stroboscopic readout at duty cycle ``f * tau_L``."""
    if not 0 < duty < 1:
        raise ValueError("duty must lie in (0, 1)")
    return math.pi * math.sqrt(duty) / (math.sqrt(2.0) * math.sin(math.pi * duty))


def sensitivity_plsd(inputs: SensitivityInputs, duty: float) -> float:
    return sensitivity_cw(inputs) * plsd_penalty(duty)


def sensor_volume(rate_unfiltered: float, density_ppm: float, per_nv_rate: float) -> float:
    """Probed volume in um^3 from a total rate and the rate per NV centre."""
    if rate_unfiltered < 0:
        raise ValueError("rate must be >= 0")
    if not (density_ppm > 0 and per_nv_rate > 0):
        raise ValueError("density and per-NV rate must be > 0")
    return rate_unfiltered / (per_nv_rate * density_ppm * 1e-6 * DIAMOND_ATOMS_PER_UM3)


def scaling_projection(base_sensitivity: float, volume_ratio: float, current_gain: float = 1.0) -> float:
    """Sensitivity after scaling the collected rate by volume and per-NV current gain."""
    if not (volume_ratio > 0 and current_gain > 0):
        raise ValueError("volume_ratio and current_gain must be > 0")
    return base_sensitivity / math.sqrt(volume_ratio * current_gain)


# Detection rates (1/s) behind the reference sensitivity values.
REFERENCE_RATES = {"optical_raw": 4e5, "electrical": 4.7e8, "optical_nominal": 2.2e11}


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    computed: float
    reference: float

    @property
    def relative_deviation(self) -> float:
        return self.computed / self.reference - 1.0


def comparison_table(linewidth=11e6, contrast=0.026, duty=0.25):
    """Computed sensitivities next to the reference values; nothing is rescaled."""
    def cw(rate):
        return sensitivity_cw(SensitivityInputs(linewidth, contrast, rate))

    return [
        ComparisonRow("optical raw (4e5 /s)", cw(REFERENCE_RATES["optical_raw"]), 53.2e-6),
        ComparisonRow("optical nominal (2.2e11 /s)", cw(REFERENCE_RATES["optical_nominal"]), 71e-9),
        ComparisonRow("electrical CW (4.7e8 /s)", cw(REFERENCE_RATES["electrical"]), 1.6e-6),
        ComparisonRow(f"electrical PLSD (duty {duty:g})",
                      cw(REFERENCE_RATES["electrical"]) * plsd_penalty(duty), 2.4e-6),
    ]
