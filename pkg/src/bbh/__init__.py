"""Bogoliubov free-energy minimisation for the Bose-Hubbard model on a 3-torus grid."""

from .canonical import (CanonicalResult, classify_canonical, critical_temperature, solve_canonical,
                        solve_canonical_global)
from .errors import (BBHError, BracketError, BranchInfeasible, DomainError, NonConvergence,
                     NoSolution, NuBracketFailure, SingularDerivative)
from .functional import (BBHState, CanonicalParams, ModelParams, free_energy_canonical,
                         free_energy_grand, load_state, save_state, variational_derivatives)
from .grand import (Branch, MinimizerResult, PhaseLabel, classify_phase, critical_interaction,
                    double_minimize, minimize)
from .grid import ScalarField, TorusGrid, bose_integral, invert_bose_integral, make_grid
from .kernels import BACKEND

__all__ = [
    "BACKEND", "BBHError", "BBHState", "Branch", "BracketError", "BranchInfeasible",
    "CanonicalParams", "CanonicalResult", "DomainError", "MinimizerResult", "ModelParams",
    "NoSolution", "NonConvergence", "NuBracketFailure", "PhaseLabel", "ScalarField",
    "SingularDerivative", "TorusGrid", "bose_integral", "classify_canonical", "classify_phase",
    "critical_interaction", "critical_temperature", "double_minimize", "free_energy_canonical",
    "free_energy_grand", "invert_bose_integral", "load_state", "make_grid", "minimize",
    "save_state", "solve_canonical", "solve_canonical_global", "variational_derivatives",
]
