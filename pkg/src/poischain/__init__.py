"""Involutive function families on product Poisson manifolds.

Build Poisson structures on coordinate charts, verify Jacobi/Casimir/
Poisson-map claims numerically over seeded sample points, construct
families of functions in involution by pulling back through Poisson maps
along multiplication chains, and integrate the resulting Hamiltonian
flows with conservation monitoring.
"""

from .expr import (
    DomainError,
    EvaluationError,
    Expression,
    ExpressionError,
    ParseError,
    UnboundVariableError,
    UnknownFunctionError,
    differentiate,
    evaluate,
    free_variables,
    parse,
    simplify,
    substitute,
    to_string,
)
from .poisson import (
    Chart,
    NamedFunction,
    PoissonStructure,
    bracket,
    is_casimir,
    jacobi_residual,
    named,
    product,
    sample_points,
    structure_from_json,
    structure_points,
    structure_to_json,
)
from .construct import (
    ChainSpec,
    FunctionFamily,
    PoissonMap,
    VerificationError,
    VerificationReport,
    build_chain,
    check_involution,
    extend_family,
    independence_rank,
    map_from_json,
    map_to_json,
    poisson_map,
    product_map,
    pullback,
    seed_family,
    verify_poisson_map,
)
from .dynamics import (
    ConservationReport,
    Trajectory,
    VectorFieldSpec,
    conservation_report,
    hamiltonian_field,
    integrate,
    trajectory_to_csv,
)
from .catalog import (
    CatalogError,
    Hamiltonian,
    ParameterSet,
    SystemDefinition,
    canonical_hamiltonians,
    classical_limit,
    get_system,
    standard_family,
    triangular_restriction,
)

__version__ = "0.1.0"
