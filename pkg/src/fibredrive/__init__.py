"""Fibre derivatives, singular Lagrangians and their primary dynamics.

The package builds, from a Lagrangian ``L(q, v)`` and a compatible Hamiltonian
with primary constraints, the resolution of the identity on the velocity
chart, the primary Lagrangian constraints, the primary dynamical fields and a
numeric stabilisation algorithm.  All derivatives are exact forward-mode jets.
"""

from .dynamics import (
    ConstraintFunction,
    MultiplierRelation,
    Round,
    StabilisationReport,
    Trajectory,
    d0_prim_residual,
    field_Du,
    integrate,
    primary_constraints,
    primary_field_D0,
    project_to_surface,
    stabilise,
    tangency_residual,
    x0_independence_residual,
)
from .errors import (
    DegenerateConstraintsError,
    DomainError,
    EvaluationError,
    FibreDriveError,
    InconsistentLinkError,
    IntegrationError,
    RankChangeError,
    SurfaceSamplingError,
)
from .fibrecalc import BundleMap, fibre_derivative, fibre_hessian, run_calculus_suite
from .hamlink import (
    HamiltonianLink,
    dlambda,
    gamma_apply,
    gamma_field,
    gamma_matrix,
    matrix_M,
    resolution_check,
    solve_lambda,
    upsilon_apply,
    validate_link,
)
from .jets import ChartPoint, Jet, Jet2, eval_jet2, taylor
from .lagrangian import (
    LagrangianModel,
    SecondOrderField,
    VerticalField,
    energy,
    euler_lagrange,
    hessian_W,
    kernel_basis,
    legendre,
    zero_field,
)
from .models import ModelRegistryEntry, get_model, model_names

__version__ = "0.1.0"
