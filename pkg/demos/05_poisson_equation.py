# %% Poisson's equation g - Pg = f - mu(f) for f(x) = x on the +-1 walk
import numpy as np

from induct_mc import excursion as ex
from induct_mc import finite_chain as fc
from induct_mc.lindley import DiscreteMixture, discretize

pm1 = DiscreteMixture(((1.0, 1 / 3), (-1.0, 2 / 3)))
grid = np.arange(21.0)
sol = ex.poisson_solve(pm1, ex.identity, grid, 20_000, seed=7)

# %% Compare with the exact solve on the truncated chain
P, _ = discretize(pm1, 60)
g_exact, mean = fc.poisson_exact(P, fc.ReturnSet.from_indices(P.n, [0]), np.arange(61.0))
z = (sol.g_hat - g_exact[:21]) / sol.se
print("mu(f):", sol.mu_f, "+/-", sol.mu_se, "exact", mean)
for x, g, e, zz in zip(grid[::4], sol.g_hat[::4], g_exact[:21:4], z[::4]):
    print(f"x={x:4.0f}  g_hat={g:9.3f}  exact={e:9.3f}  z={zz:+.2f}")

# %% Residual of the fitted solution, in units of its standard error
ok = ~np.isnan(sol.residual)
print(np.round(sol.residual[ok] / sol.residual_se[ok], 2))

# %% Asymptotic variance from g, against the exact value 1.25 for 1_{x=0}
print(ex.sigma2_via_g(pm1, ex.indicator_zero, grid, 100_000, seed=11))
print(fc.asymptotic_variance(P, [True] + [False] * 60, (np.arange(61) == 0).astype(float)))
