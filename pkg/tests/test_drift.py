import math

import numpy as np
import pytest

from induct_mc import finite_chain as fc
from induct_mc.drift import (
    DriftFunctionSpec,
    drift_report,
    f_norm,
    sandwich_constants,
    sandwich_holds,
    sandwich_profile,
)
from induct_mc.errors import EmptyGrid, MomentTooLow, NonNegativeDrift
from induct_mc.lindley import DiscreteMixture, Normal, discretize, kernel_apply

PM1 = DiscreteMixture(((1.0, 1 / 3), (-1.0, 2 / 3)))
U2 = DriftFunctionSpec.power(2)


def test_f_norm_examples():
    grid = np.linspace(0.0, 100.0, 10_001)
    assert f_norm(U2, U2, 1, grid) == 1.0
    assert f_norm(lambda x: x, U2, 1, grid) == pytest.approx(0.5, abs=1e-15)
    assert f_norm(lambda x: 0 * x, U2, 2, grid) == 0.0
    with pytest.raises(EmptyGrid):
        f_norm(U2, U2, 1, [])


def test_drift_function_spec():
    assert U2(np.array([0.0, 2.0]))[1] == 5.0
    np.testing.assert_array_equal(DriftFunctionSpec.power(0)(np.arange(3.0)), 2.0)
    with pytest.raises(ValueError):
        DriftFunctionSpec.tabulated([1.0, 0.5])


def test_finite_chain_constant_u():
    rng = np.random.default_rng(0)
    P = fc.random_irreducible(6, rng)
    Y = fc.ReturnSet.from_indices(6, [0, 3])
    rep = drift_report(P, DriftFunctionSpec.tabulated([1.0] * 6), Y=Y)
    assert rep.B_u == 1.0 and rep.passed
    np.testing.assert_allclose(rep.w, 1.0, atol=1e-15)
    assert rep.sup_Qu == pytest.approx(1.0)
    assert rep.sup_Etau_over_u == pytest.approx(fc.induced_operators(P, Y).mean_return.max())


def test_normal_negative_drift_passes():
    rho = Normal(-1.0, 1.0)
    grid = np.arange(201.0)
    rep = drift_report(rho, U2, grid=grid, n_excursions=100, seed=1)
    assert rep.passed and not rep.sup_at_edge
    assert rep.inf_w >= 1.0 - 1e-9
    # E(x + Y)^2 - x^2 = -2x + 2 once the reflection is negligible
    diff = rep.Pu - rep.u
    np.testing.assert_allclose(diff[50:], -2.0 * grid[50:] + 2.0, atol=1e-8)
    assert rep.asymptotic_slope == -2.0
    assert rep.domain == (0.0, 200.0)


def test_positive_drift_fails():
    rep = drift_report(Normal(1.0, 1.0), U2)
    assert not rep.passed and rep.sup_at_edge
    assert math.isinf(rep.sup_Etau_over_u)


def test_default_grid_pm1_report():
    rep = drift_report(PM1, U2, n_excursions=50, seed=2)
    assert rep.passed and rep.domain == (0.0, 200.0)
    assert (rep.w >= 1.0 - 1e-9).all()


def exact_pu(s, x):
    u = DriftFunctionSpec.power(s)
    return u(x + 1) / 3 + 2 * u(np.maximum(x - 1, 0)) / 3


def test_sandwich_pm1_exact_sums():
    grid = np.arange(101.0)
    B, ratio, _ = sandwich_profile(PM1, 2, grid)
    u2, u1 = DriftFunctionSpec.power(2), DriftFunctionSpec.power(1)
    oracle_B = float(np.max(exact_pu(2, grid) - u2(grid))) + 1
    assert B == pytest.approx(oracle_B, abs=1e-12)
    np.testing.assert_allclose(ratio, (u2(grid) - exact_pu(2, grid) + oracle_B) / u1(grid), atol=1e-12)
    assert ratio[-1] == pytest.approx(2 / 3, abs=0.02)
    assert abs(ratio[-1] - 2 / 3) < abs(ratio[10] - 2 / 3)


def test_sandwich_kernel_vs_discretized_matrix():
    P, _ = discretize(PM1, 100)
    x = np.arange(101.0)
    u = DriftFunctionSpec.power(2)
    by_matrix = P.entries @ u(x)
    by_kernel = kernel_apply(PM1, u, x)
    # 1e-12 relative to the size of u: values reach 1e4, where one ulp is ~2e-12
    tol = 1e-12 * u(x)
    assert np.all(np.abs(by_kernel - by_matrix)[1:100] <= tol[1:100])
    assert np.all(np.abs(by_kernel - exact_pu(2, x)) <= tol)


@pytest.mark.parametrize("rho", [PM1, Normal(-1.0, 1.0)], ids=["pm1", "normal"])
def test_sandwich_minimality(rho):
    B, N = sandwich_constants(rho, 2)
    assert math.isfinite(N) and N <= 10
    assert sandwich_holds(rho, 2, B, N * (1 + 1e-12))
    assert not sandwich_holds(rho, 2, B, N / 2)


def test_sandwich_s1_constant_lower_function():
    grid = np.arange(51.0)
    B, ratio, _ = sandwich_profile(PM1, 1, grid)
    u1 = DriftFunctionSpec.power(1)
    np.testing.assert_allclose(ratio, (u1(grid) - exact_pu(1, grid) + B) / 2.0, atol=1e-12)


def test_monotone_in_s():
    grid = np.arange(101.0)
    for s in (2, 3, 4):
        B, N = sandwich_constants(PM1, s, grid)
        assert math.isfinite(B) and math.isfinite(N)


def test_sandwich_preconditions():
    with pytest.raises(MomentTooLow):
        sandwich_constants(Normal(-1.0, 1.0, 1.5), 2)
    with pytest.raises(NonNegativeDrift):
        sandwich_constants(Normal(0.5, 1.0), 2)
