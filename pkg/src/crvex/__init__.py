"""Crouzeix-Raviart approximation of the variable-exponent p(x)-Dirichlet problem.

Modules: ``mesh`` (criss-cross meshes, red refinement), ``nfunction``
(the (p, delta) operator and its N-function calculus), ``fem`` (CR, P1,
RT0 spaces and quadrature), ``solver`` (damped Newton), ``duality``
(flux reconstruction and the primal/dual audit), ``study`` (EOC studies).
"""

from .duality import DualityAudit, audit, dual_energy, marini_flux, primal_energy
from .errors import ConvergenceError, DomainError, NumericalError
from .manufactured import ManufacturedCase
from .mesh import Triangulation, build_criss_cross, red_refine, refine_to
from .nfunction import ExponentField, discretize_exponent
from .solver import SolverConfig, newton_solve
from .study import StudyConfig, eoc, run_study

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError", "DomainError", "DualityAudit", "ExponentField", "ManufacturedCase",
    "NumericalError", "SolverConfig", "StudyConfig", "Triangulation", "audit",
    "build_criss_cross", "discretize_exponent", "dual_energy", "eoc", "marini_flux",
    "newton_solve", "primal_energy", "red_refine", "refine_to", "run_study",
]
