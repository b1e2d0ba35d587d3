# %% Drift functions u_s(x) = 1 + x^s, checked on grids
from induct_mc.drift import DriftFunctionSpec, drift_report, sandwich_constants
from induct_mc.lindley import DiscreteMixture, Normal

pm1 = DiscreteMixture(((1.0, 1 / 3), (-1.0, 2 / 3)))
u2 = DriftFunctionSpec.power(2)

# %%
for rho in (pm1, Normal(-1.0, 1.0)):
    rep = drift_report(rho, u2, n_excursions=200, seed=0)
    print(rho.kind, rep.passed, f"B_u={rep.B_u:.4f}", f"sup Pw/w={rep.sup_ratio_Pw_w:.4f}",
          f"sup E tau/u={rep.sup_Etau_over_u:.4f}", "grid", rep.domain)

# %% Positive drift: Pu - u grows along the grid, so no drift function exists
rep = drift_report(Normal(1.0, 1.0), u2)
print(rep.passed, rep.sup_at_edge, rep.sup_Etau_over_u)

# %% u_{s-1}/N_s <= u_s - P u_s + B_s <= N_s u_{s-1}
for rho in (pm1, Normal(-1.0, 1.0)):
    for s in (2, 3):
        print(rho.kind, s, sandwich_constants(rho, s))
