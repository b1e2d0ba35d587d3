"""Induced chains, Kac's lemma and regenerative Monte Carlo for the reflected walk.

Modules
-------
finite_chain
    Exact return-time operators ``S, R, Q`` on finite chains.
lindley
    The reflected walk ``X_{n+1} = max(X_n + Y_{n+1}, 0)``: kernel, paths,
    truncation to a finite chain.
excursion
    Excursion sampling, Kac ratio estimates, Poisson solutions, CLT runs.
drift
    Drift-function checks and the ``u_s`` sandwich on grids.
stats
    Ratio CIs, KS test, LIL and Lindeberg statistics.
cli
    ``induct-mc`` command-line front end.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .finite_chain import (  # noqa: F401
    InducedSystem,
    MeasureVec,
    ReturnSet,
    StochasticMatrix,
    check_identities,
    classical_kac,
    induced_operators,
    invariant_measure,
    kac_check,
    measure_bijection_check,
    validate_stochastic,
)
from .lindley import DiscreteMixture, Normal, StepDistribution, Uniform, discretize, kernel_apply, sample_path  # noqa: F401
