"""Gauss-Lobatto SBP multiblock Laplacian and acoustic wave solver."""

from .sbp1d import (
    SbpOperator1D,
    derivative_matrix,
    lobatto_nodes_weights,
    make_operator,
    sbp_residual,
    second_derivative_variable,
)
from .mesh import (
    Block,
    CurvedEdge,
    Interface,
    MeshError,
    MultiblockMesh,
    arc_edge,
    block_grid,
    coons_patch,
    generate_circle_mesh,
    line_edge,
    load_mesh,
    polynomial_edge,
    refine_mesh,
    save_mesh,
    validate_mesh,
)
from .geometry import (
    BlockOperators,
    MappingError,
    build_block_operators,
    green_residual_block,
)
from .assembly import (
    ConfigurationError,
    EmbeddingOperator,
    GlobalOperators,
    InconsistentMeshError,
    build_embedding,
    build_global_operators,
    green_residual_global,
)
from .wave import (
    DivergenceError,
    SemiDiscreteSystem,
    WaveProblem,
    WaveState,
    build_system,
    convergence_rate,
    discrete_energy,
    forcing,
    l2_error,
    rk4_step,
    simulate,
    stable_dt,
)
from .analytic import PointSourceSolution, exact_field, exact_u

__version__ = "0.1.0"
