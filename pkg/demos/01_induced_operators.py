# %% Return-time operators on a finite chain
import numpy as np

from induct_mc import finite_chain as fc

P = fc.validate_stochastic([[0.5, 0.5], [0.5, 0.5]])
Y = fc.ReturnSet.from_indices(2, [1])
sys = fc.induced_operators(P, Y)
print("R =\n", sys.R)
print("S =\n", sys.S)
print("Q =\n", sys.Q)
print("E tau =", sys.mean_return)

# %% The four operator relations hold to round-off
print(fc.check_identities(P, sys).deviations)

# %% Same check on a random 12-state chain with a 4-state return set
rng = np.random.default_rng(0)
P12 = fc.random_irreducible(12, rng)
Y12 = fc.ReturnSet.from_indices(12, rng.choice(12, 4, replace=False))
rep = fc.check_identities(P12, fc.induced_operators(P12, Y12))
print(max(rep.deviations.values()))

# %% Kac: integrating f against mu equals integrating SRf
f = rng.standard_normal(12)
print(fc.kac_check(P12, Y12, f))
print("sum_Y mu(y) E_y tau, mu(X):", fc.classical_kac(P12, Y12))

# %% S* and R* carry invariant measures back and forth
bij = fc.measure_bijection_check(P12, Y12)
print(bij.deviations)
print("mass of S* mu:", bij.s_mu.mass)
