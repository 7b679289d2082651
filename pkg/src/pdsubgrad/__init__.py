"""Primal-dual subgradient methods for strongly convex problems.

The switching proximal subgradient method and Lagrangian proximal dual
averaging, with computable optimality certificates, stepsize/weight
schedules and benchmark instances.
"""

from .certificates import CertificateReport, gaps, stopping
from .model_algebra import QuadraticModel
from .schedules import Schedule
from .solvers import ProblemInstance, RunLog, dual_step, primal_step, run, switching_select

__all__ = [
    "CertificateReport",
    "ProblemInstance",
    "QuadraticModel",
    "RunLog",
    "Schedule",
    "dual_step",
    "gaps",
    "primal_step",
    "run",
    "stopping",
    "switching_select",
]

__version__ = "0.1.0"
