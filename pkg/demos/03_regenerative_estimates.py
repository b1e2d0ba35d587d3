# %% Invariant-measure integrals from excursions out of 0
import numpy as np

from induct_mc import excursion as ex
from induct_mc.lindley import DiscreteMixture, Normal

pm1 = DiscreteMixture(((1.0, 1 / 3), (-1.0, 2 / 3)))

# %% mu(f) = E_0 sum_{k<tau} f(X_k) / E_0 tau
for name, est in zip(["1_{x=0}", "x", "1"],
                     ex.kac_estimator(pm1, [ex.indicator_zero, ex.identity, ex.constant(1.0)], 100_000, seed=42)):
    print(f"{name:8s} {est.value:.5f} +/- {est.se:.5f}")

# %% Return-time moments
print("E_0 tau  ", ex.phi_moment(pm1, 0.0, "linear", 100_000, seed=3))
print("E_0 tau^2", ex.phi_moment(pm1, 0.0, "quadratic", 100_000, seed=3))
print("E_5 tau  ", ex.phi_moment(pm1, 5.0, "linear", 100_000, seed=3))

# %% Continuous steps work the same way
gauss = Normal(-1.0, 1.0)
print(ex.kac_estimator(gauss, [ex.indicator_zero, ex.identity], 100_000, seed=7, workers=2))
