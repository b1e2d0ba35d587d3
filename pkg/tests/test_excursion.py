import numpy as np
import pytest

from induct_mc import excursion as ex
from induct_mc import finite_chain as fc
from induct_mc.errors import (
    BatchTooSmall,
    ExcursionCapExceeded,
    GridTooCoarse,
    MomentTooLow,
    NonNegativeDrift,
)
from induct_mc.lindley import DiscreteMixture, Normal, discretize

PM1 = DiscreteMixture(((1.0, 1 / 3), (-1.0, 2 / 3)))
DOWN = DiscreteMixture(((-1.0, 1.0),))
X_MAX = 60


@pytest.fixture(scope="module")
def exact():
    P, _ = discretize(PM1, X_MAX)
    Y = fc.ReturnSet.from_indices(P.n, [0])
    return P, fc.induced_operators(P, Y), fc.invariant_measure(P)


def test_deterministic_examples():
    assert ex.sample_excursion(DOWN, 0.0, [ex.identity, ex.constant(5.0)], 1) == (1, [0.0, 5.0])
    # X_2 + Y_3 = 0 triggers the stop, so tau = 3 and the sum is 3 + 2 + 1
    assert ex.sample_excursion(DOWN, 3.0, [ex.identity], 1) == (3, [6.0])
    assert ex.r_estimate(DOWN, ex.identity, 3.0, 50, 0) == (6.0, 0.0)
    assert ex.r_estimate(PM1, ex.constant(0.0), 2.0, 50, 0) == (0.0, 0.0)
    assert ex.phi_moment(DOWN, 3.0, "quadratic", 20, 0) == (9.0, 0.0)


def test_phi_normalization():
    one = np.array([1])
    for phi in ("linear", "quadratic", ("exponential", 0.3)):
        assert ex._phi(phi)(one)[0] == 1.0
    with pytest.raises(ValueError):
        ex._phi(("exponential", 1.5))


def test_excursions_end_at_zero():
    for rho in (PM1, Normal(-1.0, 1.0), Normal(-0.2, 2.0)):
        b = ex.sample_excursions(rho, 1.7, [], 2000, 5)
        assert (b.end_states == 0.0).all() and (b.tau >= 1).all()


def test_kac_constant_is_one():
    for seed in (0, 1, 2):
        assert ex.kac_estimator(PM1, [ex.constant(1.0)], 100 + seed, seed)[0].value == 1.0


def test_kac_against_geometric_oracle(exact):
    _, _, mu = exact
    f0, fid = ex.kac_estimator(PM1, [ex.indicator_zero, ex.identity], 100_000, 42)
    assert abs(f0.value - 0.5) <= 3 * f0.se
    assert abs(fid.value - 1.0) <= 3 * fid.se
    # the truncated chain agrees with the series oracle to the truncation level
    assert mu.weights[0] == pytest.approx(0.5, abs=1e-12)
    assert mu.integrate(np.arange(X_MAX + 1.0)) == pytest.approx(1.0, abs=1e-9)


def test_linearity_on_shared_batch():
    f, g = ex.identity, (lambda x: np.cos(x))
    b = ex.sample_excursions(PM1, 0.0, [f, g, lambda x: 2.5 * f(x) - 4.0 * g(x)], 5000, 9)
    ef, eg, eh = ex.kac_from_batch(b)
    assert eh.value == pytest.approx(2.5 * ef.value - 4.0 * eg.value, abs=1e-12)


def test_r1_equals_linear_phi_on_same_batch():
    for x in (0.0, 3.0):
        r = ex.r_estimate(PM1, ex.constant(1.0), x, 4000, 13)
        m = ex.phi_moment(PM1, x, "linear", 4000, 13)
        assert r.value == m.value


def test_hitting_time_oracles(exact):
    _, sys, _ = exact
    e0 = ex.phi_moment(PM1, 0.0, "linear", 100_000, 3)
    assert abs(e0.value - 2.0) <= 3 * e0.se
    assert sys.mean_return[0] == pytest.approx(2.0, abs=1e-12)
    q = ex.phi_moment(PM1, 0.0, "quadratic", 100_000, 3)
    # E tau^2 = 2/3 + (1/3) E(1 + T)^2 with T the 1 -> 0 passage time (mean 3, variance 24)
    assert abs(q.value - 14.0) <= 3 * q.se
    for x in (1.0, 5.0):
        r = ex.r_estimate(PM1, ex.identity, x, 100_000, 4)
        assert abs(r.value - (sys.R @ np.arange(X_MAX + 1.0))[int(x)]) <= 3 * r.se


def test_exponential_phi_oracle():
    # for DOWN from x >= 1, tau = x deterministically
    assert ex.phi_moment(DOWN, 2.0, ("exponential", 0.5), 10, 0).value == pytest.approx(0.5**-1)


def test_poisson_constant_is_zero():
    sol = ex.poisson_solve(PM1, ex.constant(2.0), np.arange(6.0), 200, 1, n_excursions_kac=1000)
    assert sol.mu_f == 2.0
    np.testing.assert_array_equal(sol.g_hat, 0.0)
    assert np.nanmax(np.abs(sol.residual)) == 0.0


def test_poisson_against_exact(exact):
    P, sys, mu = exact
    f = np.arange(X_MAX + 1.0)
    g_exact, mean = fc.poisson_exact(P, sys.Y, f, mu)
    grid = np.arange(21.0)
    sol = ex.poisson_solve(PM1, ex.identity, grid, 20_000, 7)
    assert np.all(np.abs(sol.g_hat - g_exact[:21]) <= 3 * sol.se)
    assert abs(sol.g_hat[0]) <= 3 * sol.se[0]
    ok = ~np.isnan(sol.residual)
    assert ok[:-1].all() and not ok[-1]
    assert np.all(np.abs(sol.residual[ok]) <= 3 * sol.residual_se[ok])
    assert sol.interp_error_bound == 0.0


def test_poisson_continuous_and_coarse_grid():
    rho = Normal(-1.0, 1.0)
    grid_c = np.linspace(0.0, 10.0, 41)
    sol = ex.poisson_solve(rho, ex.identity, grid_c, 4000, 3,
                           n_excursions_kac=20_000)
    ok = ~np.isnan(sol.residual)
    # the step law has support within about 7.1 sd at tail 1e-12
    assert ok[grid_c + 7.2 <= 10.0].all()
    assert np.all(np.abs(sol.residual[ok]) <= 4 * sol.residual_se[ok])
    with pytest.raises(GridTooCoarse):
        ex.poisson_solve(rho, lambda x: np.asarray(x, float) ** 3, np.array([0.0, 4.0, 8.0, 12.0, 16.0]), 4000, 3,
                         n_excursions_kac=20_000, interp_tol=1e-3)


def test_sigma2_via_g(exact):
    P, _, _ = exact
    truth = fc.asymptotic_variance(P, fc.ReturnSet.from_indices(P.n, [0]), (np.arange(P.n) == 0).astype(float))
    assert truth == pytest.approx(1.25, abs=1e-12)
    assert ex.sigma2_via_g(PM1, ex.constant(3.0), np.arange(6.0), 1000, 0, n_excursions_per_point=100) == (0.0, 0.0)
    est = ex.sigma2_via_g(PM1, ex.indicator_zero, np.arange(21.0), 100_000, 11)
    assert est.value >= 0
    assert est.value == pytest.approx(truth, rel=0.05)
    # the SE includes the noise of g, so it covers the exact value
    assert abs(est.value - truth) <= 3 * est.se


def test_clt_small_run():
    rep = ex.clt_experiment(PM1, ex.identity, 0.0, 10**6, 1000, 21)
    assert abs(rep.mu_hat - 1.0) <= 3 * rep.mu_se
    rep = ex.clt_experiment(PM1, ex.indicator_zero, 0.0, 10**6, 1000, 21)
    assert abs(rep.mu_hat - 0.5) <= 3 * rep.mu_se
    assert rep.sigma2_n[-1][0] == 10**6 and rep.sigma2_n[-2][0] == 5 * 10**5
    rows = rep.series_rows()
    assert all(len(r) == 3 for r in rows)


def test_clt_degenerate():
    rep = ex.clt_experiment(PM1, ex.constant(4.0), 0.0, 20_000, 1000, 1)
    assert rep.degenerate and rep.sigma2_limit == 0.0
    assert all(v == 0.0 for _, v in rep.sigma2_n if not np.isnan(v))


def test_preconditions():
    with pytest.raises(NonNegativeDrift):
        ex.kac_estimator(Normal(0.5, 1.0), [ex.identity], 1000, 0)
    with pytest.raises(BatchTooSmall):
        ex.clt_experiment(PM1, ex.identity, 0.0, 10_000, 10, 0)
    with pytest.raises(MomentTooLow):
        ex.clt_experiment(Normal(-1.0, 1.0, 4.0), ex.identity, 0.0, 10_000, 1000, 0)
    with pytest.raises(ExcursionCapExceeded):
        ex.sample_excursions(DOWN, 50.0, [], 3, 0, cap=10)
    with pytest.raises(ValueError):
        ex.kac_estimator(PM1, [ex.identity], 10, 0)


def test_workers_determinism():
    a = ex.sample_excursions(PM1, 2.0, [ex.identity], 3001, 17, workers=3)
    b = ex.sample_excursions(PM1, 2.0, [ex.identity], 3001, 17, workers=3)
    np.testing.assert_array_equal(a.tau, b.tau)
    np.testing.assert_array_equal(a.f_sums, b.f_sums)
    assert a.count == 3001 and a.workers == 3
