# %% The reflected walk X_{n+1} = max(X_n + Y_{n+1}, 0)
import numpy as np

from induct_mc import finite_chain as fc
from induct_mc.lindley import DiscreteMixture, Normal, discretize, kernel_apply, sample_path

pm1 = DiscreteMixture(((1.0, 1 / 3), (-1.0, 2 / 3)))
gauss = Normal(-1.0, 1.0)

# %% One-step expectations: the atom at 0 is exact, the rest is quadrature
x = np.array([0.0, 0.5, 2.0, 10.0])
print(kernel_apply(pm1, lambda z: z, x))
print(kernel_apply(gauss, lambda z: z, x))
print(kernel_apply(gauss, lambda z: np.ones_like(z), x))

# %% A sample path and its CSV export
path = sample_path(gauss, 0.0, 10, seed=1)
print(np.round(path.states, 3))
path.to_csv("path.csv")

# %% Truncating the +-1 walk gives an exact finite chain; its stationary law is geometric
P, tail = discretize(pm1, 60)
pi = fc.invariant_measure(P).weights
print(pi[:6], "tail bound", tail)
print(np.abs(pi[:21] - 2.0 ** -(np.arange(21) + 1)).max())
