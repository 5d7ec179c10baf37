"""Online sparse + low-dimensional separation of vector streams."""

import os as _os

# honor the thread cap before numpy configures its thread pools
_cap = _os.environ.get("REPROCS_THREADS")
if _cap:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _cap)
del _os, _cap

from .engine import (
    EngineParams,
    EngineState,
    FrameResult,
    Mode,
    Phase,
    initialize,
    process_frame,
    separate,
    set_compressive,
    update_subspace_projection,
    update_subspace_recursive,
)
from .linalg import (
    Projector,
    basis_by_energy,
    basis_by_rank,
    complement_ric,
    empty_basis,
    incremental_svd,
    project_out,
    subspace_error,
    support_coherence,
)
from .metrics import (
    BenchmarkResult,
    MetricReport,
    nmse,
    nmse_per_frame,
    run_benchmark,
    verify_denseness,
    verify_slow_subspace_change,
    verify_support_dynamics,
)
from .sparse import (
    L1Problem,
    L1Result,
    LinearMap,
    SolverConfig,
    least_squares_on_support,
    prune,
    solve_weighted_l1,
    support_overlap_policy,
    thresh,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
