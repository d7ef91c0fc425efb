"""Damped least-squares (Levenberg-Marquardt) fitting of the measurement models.

Every accepted step lowers the weighted sum of squares; the iteration log in
:attr:`FitReport.history` records each accepted ``(iteration, chi2, lambda)``.
The fit converges when an accepted step changes chi2 by less than ``rtol``
relative, or when the largest cosine between the residual and a Jacobian
column falls below ``gtol``. Uncertainties come from the inverse curvature
scaled by the reduced chi2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LN2x4 = 4.0 * math.log(2.0)


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Model:
    name: str
    param_names: tuple
    func: object
    jac: object = None
    guess: object = None

    def __call__(self, x, p):
        return self.func(np.asarray(x, dtype=float), np.asarray(p, dtype=float))


@dataclass(frozen=True)
class FitReport:
    model: str
    params: dict
    uncertainties: dict
    residual_norm: float
    gradient_norm: float
    converged: bool
    iterations: int = 0
    message: str = ""
    history: tuple = field(default=(), repr=False)

    def __getitem__(self, name):
        return self.params[name]

    def to_dict(self):
        return {
            "model": self.model,
            "params": dict(self.params),
            "uncertainties": dict(self.uncertainties),
            "residual_norm": self.residual_norm,
            "gradient_norm": self.gradient_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message,
        }

    @classmethod
    def failed(cls, model, param_names, message):
        nan = float("nan")
        return cls(model, {k: nan for k in param_names}, {k: nan for k in param_names},
                   nan, nan, False, 0, message)


# -- model functions -------------------------------------------------------

def _linear(x, p):
    return p[0] * x + p[1]


def _linear_jac(x, p):
    return np.column_stack([x, np.ones_like(x)])


def _linear_guess(x, y):
    i, j = int(np.argmin(x)), int(np.argmax(x))
    slope = (y[j] - y[i]) / (x[j] - x[i]) if x[j] != x[i] else 0.0
    return [slope, float(np.mean(y) - slope * np.mean(x))]


def _saturation(x, p):
    return p[0] * x * x / (1.0 + p[1] * x)


def _saturation_jac(x, p):
    d = 1.0 + p[1] * x
    return np.column_stack([x * x / d, -p[0] * x**3 / d**2])


def _saturation_guess(x, y):
    # x^2 / y = 1/alpha + (beta/alpha) x
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return [1.0, 0.0]
    slope, icpt = np.polyfit(x[ok], x[ok] ** 2 / y[ok], 1)
    alpha = 1.0 / icpt if icpt > 0 else float(np.median(y[ok] / x[ok] ** 2))
    return [alpha, slope * alpha]


def _exp_decay(x, p):
    return p[0] * np.exp(-x / p[1]) + p[2]


def _exp_decay_jac(x, p):
    e = np.exp(-x / p[1])
    return np.column_stack([e, p[0] * e * x / p[1] ** 2, np.ones_like(x)])


def _exp_decay_guess(x, y):
    order = np.argsort(x)
    x, y = x[order], y[order]
    tail = max(1, len(y) // 10)
    c0 = float(np.mean(y[-tail:]))
    a0 = float(y[0] - c0)
    dev = (y - c0) / a0 if a0 != 0 else np.zeros_like(y)
    ok = dev > 0.1
    if ok.sum() >= 2 and np.ptp(x[ok]) > 0:
        slope = np.polyfit(x[ok], np.log(dev[ok]), 1)[0]
        tau = -1.0 / slope if slope < 0 else np.ptp(x)
    else:
        tau = np.ptp(x) / 3.0 or 1.0
    return [a0, float(tau), c0]


def _damped_sine(x, p):
    a, f, ph, t, c = p
    return a * np.exp(-x / t) * np.cos(2 * np.pi * f * x + ph) + c


def _damped_sine_jac(x, p):
    a, f, ph, t, c = p
    e = np.exp(-x / t)
    arg = 2 * np.pi * f * x + ph
    cs, sn = np.cos(arg), np.sin(arg)
    return np.column_stack([
        e * cs,
        -a * e * sn * 2 * np.pi * x,
        -a * e * sn,
        a * e * cs * x / t**2,
        np.ones_like(x),
    ])


def dominant_frequency(x, y, oversample=16):
    """Frequency of the largest spectral peak of ``y(x)`` (mean removed).

    Evaluated as a direct Fourier sum on a grid ``oversample`` times finer
    than the natural resolution; exact ties go to the lowest frequency.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float) - np.mean(y)
    span = np.ptp(x)
    if span == 0 or len(x) < 3:
        return 0.0
    f_nyq = 0.5 * (len(x) - 1) / span
    freqs = np.arange(1, int(oversample * f_nyq * span) + 1) / (oversample * span)
    power = np.abs(np.exp(-2j * np.pi * np.outer(freqs, x)) @ y)
    return float(freqs[int(np.argmax(power))])  # argmax picks the first maximum


def _damped_sine_guess(x, y):
    order = np.argsort(x)
    x, y = x[order], y[order]
    c = float(np.mean(y))
    f = dominant_frequency(x, y)
    z = np.sum((y - c) * np.exp(-2j * np.pi * f * x))
    ph = float(np.angle(z))
    half = len(x) // 2
    a1 = np.sqrt(np.mean((y[:half] - c) ** 2))
    a2 = np.sqrt(np.mean((y[half:] - c) ** 2))
    dx = np.mean(x[half:]) - np.mean(x[:half])
    t = dx / math.log(a1 / a2) if a2 > 0 and a1 > a2 else 3.0 * np.ptp(x)
    amp = float(np.sqrt(2.0) * a1 * math.exp(np.mean(x[:half]) / t)) if t > 0 else float(np.ptp(y) / 2)
    # refit the offset: a decaying trace settles on it, the mean is biased
    c = float(np.mean(y[-max(1, len(y) // 5):])) if t < np.ptp(x) / 3 else c
    return [amp, f, ph, float(t), c]


def _lowpass(x, p):
    return p[0] / (1.0 + x / p[1])


def _lowpass_jac(x, p):
    d = 1.0 + x / p[1]
    return np.column_stack([1.0 / d, p[0] * x / (p[1] ** 2 * d**2)])


def _lowpass_guess(x, y):
    order = np.argsort(x)
    x, y = x[order], y[order]
    i0 = float(y[0])
    ratio = y / i0 if i0 != 0 else np.ones_like(y)
    below = np.nonzero(ratio < 0.5)[0]
    if len(below) and below[0] > 0:
        k = below[0]
        f0 = float(math.sqrt(x[k] * x[k - 1])) if x[k - 1] > 0 else float(x[k])
    else:
        # from the last point: y/i0 = 1/(1 + x/f0)
        r = ratio[-1]
        f0 = float(x[-1] * r / (1.0 - r)) if 0 < r < 1 else float(2.0 * x[-1] or 1.0)
    return [i0 * (1.0 + x[0] / f0), f0]


def gaussian_dips(x, offset, depth, center, splitting, fwhm):
    """Two Gaussian dips of depth ``depth/2`` each at ``center +- splitting/2``."""
    x = np.asarray(x, float)
    g1 = np.exp(-LN2x4 * ((x - center - splitting / 2) / fwhm) ** 2)
    g2 = np.exp(-LN2x4 * ((x - center + splitting / 2) / fwhm) ** 2)
    return offset - 0.5 * depth * (g1 + g2)


def _gaussian_dips(x, p):
    return gaussian_dips(x, *p)


def _gaussian_dips_jac(x, p):
    o, d, c, s, w = p
    u1 = x - c - s / 2
    u2 = x - c + s / 2
    g1 = np.exp(-LN2x4 * (u1 / w) ** 2)
    g2 = np.exp(-LN2x4 * (u2 / w) ** 2)
    k = LN2x4 / w**2
    return np.column_stack([
        np.ones_like(x),
        -0.5 * (g1 + g2),
        -0.5 * d * 2 * k * (g1 * u1 + g2 * u2),
        -0.5 * d * k * (g1 * u1 - g2 * u2),
        -0.5 * d * 2 * k / w * (g1 * u1**2 + g2 * u2**2),
    ])


def _gaussian_dips_guess(x, y):
    order = np.argsort(x)
    x, y = x[order], y[order]
    n_edge = max(1, len(x) // 10)
    base = float(np.median(np.concatenate([y[:n_edge], y[-n_edge:]])))
    sign = 1.0 if base - y.min() >= y.max() - base else -1.0  # dips or peaks
    d = np.clip(sign * (base - y), 0.0, None)
    if d.sum() == 0:
        return [base, 0.0, float(np.mean(x)), 0.0, float(np.ptp(x) / 4 or 1.0)]
    x0 = float(np.mean(x))
    u = x - x0
    c = float(np.sum(u * d) / d.sum())
    m2 = float(np.sum((u - c) ** 2 * d) / d.sum())
    m4 = float(np.sum((u - c) ** 4 * d) / d.sum())
    a4 = 0.5 * (3.0 * m2 * m2 - m4)
    a = a4**0.25 if a4 > 0 else 0.0
    var = m2 - a * a if m2 - a * a > 0.1 * m2 else 0.5 * m2
    w = math.sqrt(var) * 2.0 * math.sqrt(2.0 * math.log(2.0))
    a = max(a, 0.1 * w)
    peak = float(d.max())
    depth = sign * 2.0 * peak / (1.0 + math.exp(-LN2x4 * (2 * a / w) ** 2))
    return [base, depth, x0 + c, 2.0 * a, w]


MODELS = {
    "linear": Model("linear", ("slope", "intercept"), _linear, _linear_jac, _linear_guess),
    "saturation": Model("saturation", ("alpha", "beta"), _saturation, _saturation_jac, _saturation_guess),
    "exp_decay": Model("exp_decay", ("amplitude", "tau", "offset"), _exp_decay, _exp_decay_jac, _exp_decay_guess),
    "damped_sine": Model("damped_sine", ("amplitude", "frequency", "phase", "decay", "offset"),
                         _damped_sine, _damped_sine_jac, _damped_sine_guess),
    "lowpass": Model("lowpass", ("i0", "f0"), _lowpass, _lowpass_jac, _lowpass_guess),
    "gaussian_dips": Model("gaussian_dips", ("offset", "depth", "center", "splitting", "fwhm"),
                           _gaussian_dips, _gaussian_dips_jac, _gaussian_dips_guess),
}


def get_model(model) -> Model:
    if isinstance(model, Model):
        return model
    try:
        return MODELS[model]
    except KeyError:
        raise ValueError(f"unknown model {model!r}; known: {sorted(MODELS)}") from None


def initial_guess(model, xs, ys):
    m = get_model(model)
    return np.asarray(m.guess(np.asarray(xs, float), np.asarray(ys, float)), dtype=float)


def numeric_jacobian(func, x, p, rel_step=1e-6):
    p = np.asarray(p, float)
    cols = []
    for i in range(len(p)):
        h = rel_step * max(abs(p[i]), 1e-12)
        hi, lo = p.copy(), p.copy()
        hi[i] += h
        lo[i] -= h
        cols.append((func(x, hi) - func(x, lo)) / (2 * h))
    return np.column_stack(cols)


# -- solver ---------------------------------------------------------------

def _gradient_cosine(j, r, floor=0.0):
    """Largest |cos| between ``r`` and a Jacobian column.

    Residual norms below ``floor`` count as the floor, so an exact fit whose
    residual is rounding noise reports a gradient near zero.
    """
    rn = max(np.linalg.norm(r), floor)
    if rn == 0:
        return 0.0
    cn = np.linalg.norm(j, axis=0)
    g = np.abs(j.T @ r)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(cn > 0, g / (cn * rn), 0.0)
    return float(np.max(cos)) if cos.size else 0.0


def curve_fit(model, xs, ys, sigma=None, initial_guess=None, max_iter=500,
              rtol=1e-10, gtol=1e-12) -> FitReport:
    """Fit ``model`` (a name from :data:`MODELS` or a :class:`Model`) to data.

    ``sigma`` holds per-point standard deviations (weights ``1/sigma^2``).
    Raises :class:`FitError` when the curvature at the solution is rank
    deficient; returns ``converged=False`` with the best point otherwise.
    """
    m = get_model(model)
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    k = len(m.param_names)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D arrays of equal length")
    if len(x) < k + 1:
        raise ValueError(f"{m.name} needs at least {k + 1} points, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite data")
    if sigma is None:
        w = np.ones_like(y)
    else:
        s = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("sigma must be finite and > 0")
        w = 1.0 / s
    p = np.asarray(initial_guess if initial_guess is not None else m.guess(x, y), dtype=float)
    if p.shape != (k,) or not np.all(np.isfinite(p)):
        raise ValueError(f"initial guess must be {k} finite numbers")

    def residual(q):
        with np.errstate(all="ignore"):
            return (m.func(x, q) - y) * w

    def jacobian(q):
        j = m.jac(x, q) if m.jac is not None else numeric_jacobian(m.func, x, q)
        return j * w[:, None]

    r = residual(p)
    if not np.all(np.isfinite(r)):
        raise FitError("model is not finite at the initial guess")
    # model rounding (e.g. GHz-scale differences inside an exponent) can sit
    # well above machine epsilon; residuals this small count as an exact fit
    floor = 1e-6 * float(np.linalg.norm(y * w))
    chi2 = float(r @ r)
    j = jacobian(p)
    lam = 1e-3
    history = [(0, chi2, lam)]
    converged = chi2 == 0.0 or _gradient_cosine(j, r, floor) < gtol
    message = "initial guess is optimal" if converged else ""
    it = 0
    while not converged and it < max_iter:
        it += 1
        scale = np.linalg.norm(j, axis=0)
        scale[scale == 0] = 1.0
        js = j / scale
        aug = np.vstack([js, math.sqrt(lam) * np.eye(k)])
        rhs = np.concatenate([-r, np.zeros(k)])
        step = np.linalg.lstsq(aug, rhs, rcond=None)[0] / scale
        p_new = p + step
        r_new = residual(p_new)
        chi2_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
        if chi2_new <= chi2:
            rel = (chi2 - chi2_new) / chi2 if chi2 > 0 else 0.0
            p, r, chi2 = p_new, r_new, chi2_new
            j = jacobian(p)
            lam = max(lam / 10.0, 1e-15)
            history.append((it, chi2, lam))
            if chi2 == 0.0 or rel < rtol:
                converged, message = True, "relative change of chi2 below tolerance"
                # Undamped Gauss-Newton polish, exact for models linear in p. Near
                # the minimum chi2 cannot resolve the remaining damping error, so
                # a tie to rounding is accepted; it is not an LM step and stays
                # out of the history.
                scale = np.linalg.norm(j, axis=0)
                scale[scale == 0] = 1.0
                p_gn = p + np.linalg.lstsq(j / scale, -r, rcond=None)[0] / scale
                r_gn = residual(p_gn)
                chi2_gn = float(r_gn @ r_gn) if np.all(np.isfinite(r_gn)) else math.inf
                if chi2_gn <= chi2 * (1.0 + 1e-12):
                    p, r, chi2 = p_gn, r_gn, chi2_gn
                    j = jacobian(p)
            elif _gradient_cosine(j, r, floor) < gtol:
                converged, message = True, "gradient below tolerance"
        else:
            lam *= 10.0
            if lam > 1e20:
                message = "step control failed to reduce chi2"
                break
    if not converged and not message:
        message = f"no convergence after {max_iter} iterations"

    n = len(x)
    scale = np.linalg.norm(j, axis=0)
    if np.any(scale == 0):
        raise FitError(f"{m.name}: rank-deficient curvature (parameter without influence)")
    _, sv, vt = np.linalg.svd(j / scale, full_matrices=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise FitError(f"{m.name}: rank-deficient curvature (condition {sv[0] / sv[-1]:.3g})")
    cov = (vt.T / sv**2) @ vt / np.outer(scale, scale)
    cov *= chi2 / (n - k)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitReport(
        model=m.name,
        params={name: float(v) for name, v in zip(m.param_names, p)},
        uncertainties={name: float(e) for name, e in zip(m.param_names, err)},
        residual_norm=math.sqrt(chi2),
        gradient_norm=_gradient_cosine(j, r, floor),
        converged=bool(converged),
        iterations=it,
        message=message,
        history=tuple(history),
    )


def r_squared(model, report: FitReport, xs, ys) -> float:
    m = get_model(model)
    y = np.asarray(ys, float)
    resid = y - m(xs, [report.params[n] for n in m.param_names])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
