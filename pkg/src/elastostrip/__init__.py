"""Time-harmonic elastic waves in a traction-free strip: cross-section pencil,
Jordan chains, flux-normalized modal bases, strip and half-strip solvers."""

from .cross_section import (
    FormMatrices,
    ProblemConfig,
    assemble_forms,
    build_grid,
    evaluate_pencil,
    validate_config,
)
from .errors import (
    AssumptionViolation,
    ConfigError,
    ElastostripError,
    NumericalError,
)
from .halfstrip import (
    DirichletData,
    HalfStripSolution,
    ScatteringMatrix,
    TruncatedDomain,
    coefficient_crosscheck,
    dtn_operator,
    lift_dirichlet,
    prepare_halfstrip,
    scattering_matrix,
    solve_endreflection,
    solve_halfstrip,
)
from .modes import (
    Classification,
    ModalBasis,
    Wave,
    canonical_basis,
    classify_wave,
    make_wave,
    symplectic_gram,
    symplectic_pairing,
)
from .pencil import (
    Eigenmode,
    JordanChain,
    ModeSet,
    SpectralWindow,
    compute_jordan_chains,
    solve_qep,
)
from .strip import Bump, SeparableSource, laplace_line_solve, verify_strip_asymptotics

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
