import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from nvpdmr import fitting as fit

TRUTH = {
    "linear": (np.linspace(0, 24, 7), [2.5, -1.0]),
    "saturation": (np.linspace(0, 9, 19), [1.26, -0.07]),
    "exp_decay": (np.linspace(0, 6e-6, 31), [-0.8, 1.73e-6, -1.0]),
    "damped_sine": (np.arange(0, 801, 4) * 1e-9, [0.5, 6.25e6, 0.3, 185e-9, -0.5]),
    "lowpass": (np.array([1e3, 1e4, 1e5, 1e6, 1e7]), [5.6e-14, 5e6]),
    "gaussian_dips": (np.linspace(2.84e9, 2.90e9, 50), [0.0, 1.95e-12, 2.87e9, 8e6, 11e6]),
}


@pytest.mark.parametrize("name", sorted(TRUTH))
def test_exact_guess_needs_no_iterations(name):
    x, p = TRUTH[name]
    y = fit.get_model(name)(x, p)
    rep = fit.curve_fit(name, x, y, initial_guess=p)
    assert rep.converged and rep.iterations == 0
    assert rep.residual_norm == pytest.approx(0.0, abs=1e-12 * np.abs(y).max())


@pytest.mark.parametrize("name", sorted(TRUTH))
def test_recovers_noise_free_parameters_from_own_guess(name):
    x, p = TRUTH[name]
    y = fit.get_model(name)(x, p)
    rep = fit.curve_fit(name, x, y)
    assert rep.converged
    got = [rep.params[k] for k in fit.get_model(name).param_names]
    np.testing.assert_allclose(got, p, rtol=1e-6, atol=1e-9 * np.abs(p).max())


@pytest.mark.parametrize("name", sorted(TRUTH))
def test_analytic_jacobian_matches_finite_differences(name):
    x, p = TRUTH[name]
    m = fit.get_model(name)
    p = np.asarray(p, float) * 1.03
    np.testing.assert_allclose(m.jac(x, p), fit.numeric_jacobian(m.func, x, p), rtol=1e-5,
                               atol=1e-7 * np.abs(m.jac(x, p)).max())


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 40), st.integers(0, 2**32 - 1))
def test_linear_matches_normal_equations(n, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-10, 10, n))
    if np.ptp(x) < 1e-3:
        return
    y = 1.7 * x - 0.3 + rng.normal(0, 0.5, n)
    a = np.column_stack([x, np.ones_like(x)])
    ref = np.linalg.solve(a.T @ a, a.T @ y)
    rep = fit.curve_fit("linear", x, y)
    np.testing.assert_allclose([rep["slope"], rep["intercept"]], ref, rtol=1e-12, atol=1e-12)


def test_weighted_linear_matches_weighted_normal_equations():
    rng = np.random.default_rng(0)
    x = np.linspace(0, 5, 12)
    s = rng.uniform(0.1, 2.0, 12)
    y = 3 * x + 1 + rng.normal(0, s)
    a = np.column_stack([x, np.ones_like(x)]) / s[:, None]
    ref = np.linalg.solve(a.T @ a, a.T @ (y / s))
    rep = fit.curve_fit("linear", x, y, sigma=s)
    np.testing.assert_allclose([rep["slope"], rep["intercept"]], ref, rtol=1e-12)


def test_uncertainties_match_scipy():
    x, p = TRUTH["exp_decay"]
    y = fit.get_model("exp_decay")(x, p) + np.random.default_rng(1).normal(0, 0.01, len(x))
    rep = fit.curve_fit("exp_decay", x, y)
    popt, pcov = scipy.optimize.curve_fit(lambda t, a, tau, c: a * np.exp(-t / tau) + c, x, y, p0=p)
    np.testing.assert_allclose([rep["amplitude"], rep["tau"], rep["offset"]], popt, rtol=1e-6)
    np.testing.assert_allclose(list(rep.uncertainties.values()), np.sqrt(np.diag(pcov)), rtol=1e-4)


def test_gaussian_dips_coverage_monte_carlo():
    x, p = TRUTH["gaussian_dips"]
    m = fit.get_model("gaussian_dips")
    clean = m(x, p)
    noise = 0.01 * p[1]
    inside = np.zeros(5)
    trials = 200
    for seed in range(trials):
        y = clean + np.random.default_rng(seed).normal(0, noise, len(x))
        rep = fit.curve_fit("gaussian_dips", x, y)
        assert rep.converged
        got = np.array([rep.params[k] for k in m.param_names])
        err = np.array([rep.uncertainties[k] for k in m.param_names])
        inside += np.abs(got - p) <= 3 * err
    assert np.all(inside / trials >= 0.95), inside / trials


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(sorted(TRUTH)), st.integers(0, 2**32 - 1), st.floats(0.0, 0.05))
def test_accepted_steps_never_increase_chi2(name, seed, rel_noise):
    x, p = TRUTH[name]
    y = fit.get_model(name)(x, p)
    y = y + np.random.default_rng(seed).normal(0, rel_noise * np.abs(y).max() + 1e-300, len(x))
    try:
        rep = fit.curve_fit(name, x, y)
    except fit.FitError:
        return
    chi2 = [c for _, c, _ in rep.history]
    assert all(b <= a for a, b in zip(chi2, chi2[1:]))
    assert rep.iterations <= 500
    if rep.converged:
        assert np.isfinite(rep.residual_norm)
        assert rep.gradient_norm < 1e-6


def test_rank_deficient_raises():
    x = np.linspace(0, 1, 10)
    model = fit.Model("flat", ("a", "b"), lambda x, p: p[0] + 0 * p[1] * x,
                      lambda x, p: np.column_stack([np.ones_like(x), np.zeros_like(x)]),
                      lambda x, y: [0.0, 1.0])
    with pytest.raises(fit.FitError):
        fit.curve_fit(model, x, x + 1)


def test_input_checks():
    with pytest.raises(ValueError):
        fit.curve_fit("linear", [0, 1], [0, 1])
    with pytest.raises(ValueError):
        fit.curve_fit("linear", [0, 1, 2], [0, np.nan, 1])
    with pytest.raises(ValueError):
        fit.curve_fit("linear", [0, 1, 2], [0, 1, 2], sigma=[1, 0, 1])
    with pytest.raises(ValueError):
        fit.get_model("cubic")


def test_non_convergence_reports_best_point():
    x, p = TRUTH["damped_sine"]
    y = fit.get_model("damped_sine")(x, p)
    rep = fit.curve_fit("damped_sine", x, y, initial_guess=[0.1, 1e7, 0, 1e-6, 0], max_iter=2)
    assert not rep.converged and "2 iterations" in rep.message
    assert np.isfinite(rep.residual_norm)


def test_dominant_frequency_prefers_lowest_on_ties():
    x = np.arange(1024) / 64.0
    y = np.sin(2 * np.pi * 4 * x) + np.sin(2 * np.pi * 8 * x)
    assert fit.dominant_frequency(x, y) == pytest.approx(4.0, rel=0.01)


def test_failed_report_and_dict():
    rep = fit.FitReport.failed("linear", ("slope", "intercept"), "nope")
    assert not rep.converged and np.isnan(rep["slope"])
    d = fit.curve_fit("linear", [0, 1, 2], [1, 2, 3.1]).to_dict()
    assert d["model"] == "linear" and set(d["params"]) == {"slope", "intercept"}


def test_r_squared():
    x = np.arange(10.0)
    rep = fit.curve_fit("linear", x, 2 * x + 1)
    assert fit.r_squared("linear", rep, x, 2 * x + 1) == pytest.approx(1.0)
