"""Complex-domain Newton load flow for distribution feeders."""
from .grid import (
    BranchRecord,
    ConnectivityError,
    GridError,
    GridModel,
    IngestOptions,
    LoadRecord,
    ParseError,
    build_grid,
    build_ybus,
    load_grid_dir,
    load_ieee69,
    parse_grid,
    partition,
    set_tie_lines,
)
from .linsolve import ConjugateBlockSystem, realify, solve_conjugate_block
from .newton import (
    IterationRecord,
    SolveResult,
    SolverConfig,
    SolverError,
    batch_solve,
    compute_losses,
    solve,
    solve_constant_power,
    solve_zip,
)
from .oracle import OracleConfig, fixed_point_solve, residual_certificate, two_bus_closed_form
from .wirtinger import (
    JacobianBlocks,
    WirtingerPair,
    assemble_jacobian_cp,
    assemble_jacobian_zip,
    nodal_currents,
    power_mismatch,
    wirtinger_fd,
    zip_residual,
)

__version__ = "0.1.0"
