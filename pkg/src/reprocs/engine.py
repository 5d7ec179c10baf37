"""Online separation of a vector stream into sparse and low-dimensional parts.

Each incoming frame is projected orthogonal to the current subspace estimate,
the sparse part is recovered by (weighted) l1 minimization with add/least-
squares/delete support refinement, and the residual low-dimensional part
feeds one of two subspace trackers:

* projection update ("ppca"): every ``alpha`` frames the buffered residuals
  are projected orthogonal to the last settled basis; a change is declared
  when the projected spectrum rises above the training noise floor, after
  which newly appearing directions are re-estimated each window until the
  estimate stabilizes;
* recursive update ("rpca"): a running incremental SVD of all residuals,
  truncated back to the training rank on a fixed cadence.

A compressive mode recovers the sparse part from undersampled measurements
``A @ sparse + low``; only the compressed image of the low-dimensional part
is tracked.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .linalg import (
    Projector,
    fix_signs,
    incremental_svd,
    modified_gram_schmidt,
    orthonormality_drift,
    project_out,
    scaled_window_basis,
)
from .sparse import (
    IllConditionedSupport,
    L1Problem,
    LinearMap,
    SolverConfig,
    empty_support,
    least_squares_on_support,
    prune,
    solve_weighted_l1,
    support_overlap_policy,
    thresh,
)

Array = np.ndarray

STOP_RATIO = 0.01
PRUNE_GROWTH = 1.4


class Mode(str, Enum):
    PPCA = "ppca"
    RECURSIVE = "rpca"
    COMPRESSIVE = "compressive"


class Phase(str, Enum):
    DETECT = "detect"
    PPCA = "ppca"


@dataclass
class EngineParams:
    alpha: int = 20
    k_min: int = 3
    k_max: int = 10
    b_percent: float = 95.0
    q: float = 1.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    # alternate support threshold proportional to the projected-noise level
    # instead of the frame RMS; off by default
    omega_from_residual: bool = False

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if not 1 <= self.k_min <= self.k_max:
            raise ValueError("need 1 <= k_min <= k_max")
        if not 0.0 < self.b_percent <= 100.0:
            raise ValueError("b_percent must be in (0, 100]")
        if self.q <= 0:
            raise ValueError("q must be positive")


@dataclass
class FrameResult:
    s_hat: Array
    t_hat: Array
    l_hat: Array
    solver_converged: bool
    phase: Phase
    xi: float
    solver_iters: int


@dataclass
class EngineState:
    mode: Mode
    params: EngineParams
    t: int  # index of the last processed frame (training counts)
    t_train: int
    basis: Array  # current subspace estimate
    basis_settled: Array  # last finalized basis (before the change in progress)
    sigma_floor: float  # detection threshold from the training spectrum
    rank_train: int
    phase: Phase
    change_count: int
    ppca_step: int  # completed projection-update steps in the current change
    change_start: int
    buffer: deque  # trailing low-dimensional estimates (maxlen alpha)
    new_history: list  # per-step new-direction bases for the stop criterion
    support_prev1: Array
    support_prev2: Array
    lowrank_prev: Array
    x_warm: Array | None = None
    # recursive-update mode
    track_basis: Array | None = None
    track_sigma: Array | None = None
    truncate_every: int = 0
    # compressive mode
    operator: Array | None = None
    operator_norm: float = 0.0
    n_sparse: int = 0

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]


def initialize(
    training: Array, params: EngineParams | None = None, mode: Mode = Mode.PPCA
) -> EngineState:
    """Train on sparse-free frames: approximate basis of the scaled training
    matrix, with the smallest retained singular value as the noise floor."""
    params = params or EngineParams()
    training = np.asarray(training, dtype=float)
    if training.ndim != 2 or training.shape[1] == 0:
        raise ValueError("empty training")
    mode = Mode(mode)
    t_train = training.shape[1]
    basis, spectrum = scaled_window_basis(training, params.b_percent)
    rank = basis.shape[1]
    sigma_floor = float(spectrum[-1]) if rank else 0.0

    tail = min(params.alpha, t_train)
    buffer = deque(
        (training[:, j].copy() for j in range(t_train - tail, t_train)),
        maxlen=params.alpha,
    )
    state = EngineState(
        mode=mode,
        params=params,
        t=t_train,
        t_train=t_train,
        basis=basis,
        basis_settled=basis,
        sigma_floor=sigma_floor,
        rank_train=rank,
        phase=Phase.DETECT,
        change_count=0,
        ppca_step=0,
        change_start=t_train,
        buffer=buffer,
        new_history=[],
        support_prev1=empty_support(),
        support_prev2=empty_support(),
        lowrank_prev=training[:, -1].copy(),
        n_sparse=training.shape[0],
    )
    if mode is Mode.RECURSIVE:
        state.track_basis = basis.copy()
        # unscaled spectrum so the running SVD tracks the raw frame matrix
        state.track_sigma = spectrum * math.sqrt(t_train)
        state.truncate_every = max(3 * rank, 1)
    return state


def set_compressive(state: EngineState, operator: Array) -> EngineState:
    """Attach the measurement operator mapping sparse vectors into the
    (possibly undersampled) measurement space."""
    operator = np.asarray(operator, dtype=float)
    if operator.ndim != 2 or operator.shape[0] != state.ambient_dim:
        raise ValueError(
            f"dimension mismatch: operator rows {operator.shape} "
            f"vs measurements of length {state.ambient_dim}"
        )
    state.operator = operator
    state.operator_norm = float(np.linalg.norm(operator, 2))
    state.n_sparse = operator.shape[1]
    return state


def _recovery_map(state: EngineState, proj: Projector) -> LinearMap:
    if state.mode is Mode.COMPRESSIVE:
        op = state.operator
        return LinearMap(
            apply=lambda v: proj.apply(op @ v),
            adjoint=lambda w: op.T @ proj.apply(w),
            shape=(state.ambient_dim, state.n_sparse),
            opnorm_hint=state.operator_norm,
        )
    return LinearMap(
        apply=proj.apply,
        adjoint=proj.apply,
        shape=(state.ambient_dim, state.ambient_dim),
        opnorm_hint=1.0,
    )


def _ls_shrinking(
    op: LinearMap, y: Array, support: Array, rank_by: Array
) -> tuple[Array, Array]:
    """Least squares on the support, dropping the smallest-magnitude
    candidates until the restricted operator is well conditioned."""
    support = np.asarray(support, dtype=np.int64)
    while support.size:
        try:
            return least_squares_on_support(op, y, support), support
        except IllConditionedSupport:
            weakest = support[np.argmin(np.abs(rank_by[support]))]
            support = support[support != weakest]
    return np.zeros(op.shape[1]), support


def process_frame(state: EngineState, frame: Array) -> FrameResult:
    """Separate one frame and update the subspace estimate in place."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (state.ambient_dim,):
        raise ValueError(
            f"frame length {frame.shape} does not match dimension {state.ambient_dim}"
        )
    if state.mode is Mode.COMPRESSIVE and state.operator is None:
        raise ValueError("compressive mode requires a measurement operator")
    state.t += 1
    params = state.params

    proj = Projector(state.basis)
    y = proj.apply(frame)
    noise_proj = proj.apply(state.lowrank_prev)
    xi = float(np.linalg.norm(noise_proj))
    op = _recovery_map(state, proj)

    frame_norm = float(np.linalg.norm(frame))
    converged = True
    iters = 0
    if frame_norm == 0.0:
        # a zero frame carries no signal
        support = empty_support()
        s_hat = np.zeros(state.n_sparse)
    else:
        if params.omega_from_residual:
            omega = params.q * float(np.max(np.abs(noise_proj)))
        else:
            omega = params.q * frame_norm / math.sqrt(state.n_sparse)
        use_weighted, lam = support_overlap_policy(
            state.support_prev2, state.support_prev1
        )
        y_norm = float(np.linalg.norm(y))
        if y_norm <= max(xi, 1e-12 * frame_norm):
            # zero already attains the constraint; it is the optimum
            x_cs = np.zeros(state.n_sparse)
        else:
            prob = L1Problem(
                op=op,
                y=y,
                radius=xi,
                weight_set=state.support_prev1 if use_weighted else empty_support(),
                lam=lam if use_weighted else 1.0,
            )
            result = solve_weighted_l1(prob, params.solver, x0=state.x_warm)
            x_cs, converged, iters = result.x, result.converged, result.iterations
            state.x_warm = x_cs

        if use_weighted:
            grow = math.ceil(PRUNE_GROWTH * state.support_prev1.size)
            candidates = prune(x_cs, grow)
            refined, _ = _ls_shrinking(op, y, candidates, x_cs)
            support = thresh(refined, omega)
            base_values = refined
        else:
            support = thresh(x_cs, omega)
            base_values = x_cs
        s_hat, support = _ls_shrinking(op, y, support, base_values)

    if state.mode is Mode.COMPRESSIVE:
        l_hat = frame - state.operator @ s_hat
    else:
        l_hat = frame - s_hat
        s_hat, l_hat = _exact_complement(frame, s_hat, l_hat)

    state.buffer.append(l_hat)
    state.support_prev2 = state.support_prev1
    state.support_prev1 = support
    state.lowrank_prev = l_hat

    if state.mode is Mode.RECURSIVE:
        update_subspace_recursive(state)
    else:
        update_subspace_projection(state)

    return FrameResult(
        s_hat=s_hat,
        t_hat=support,
        l_hat=l_hat,
        solver_converged=converged,
        phase=state.phase,
        xi=xi,
        solver_iters=iters,
    )


def _exact_complement(frame: Array, s_hat: Array, l_hat: Array) -> tuple[Array, Array]:
    # force s_hat + l_hat == frame bitwise (the split is only defined up to
    # rounding; re-deriving one side from the other converges immediately)
    for _ in range(3):
        bad = (s_hat + l_hat) != frame
        if not bad.any():
            break
        s_hat = np.where(bad, frame - l_hat, s_hat)
        l_hat = np.where((s_hat + l_hat) != frame, frame - s_hat, l_hat)
    return s_hat, l_hat


def _window(state: EngineState) -> Array:
    cols = list(state.buffer)[-state.params.alpha :]
    return np.column_stack(cols)


def _stop_ratio(history: list, z: Array, i: int) -> float:
    """Relative change of the projection of the window sum between the
    (i-1)-th and i-th new-direction estimates; i is 1-based."""
    prev, cur = history[i - 2], history[i - 1]
    proj_prev = prev @ (prev.T @ z)
    num = float(np.linalg.norm(proj_prev - cur @ (cur.T @ z)))
    den = float(np.linalg.norm(proj_prev))
    if den <= 1e-15 * max(float(np.linalg.norm(z)), 1.0):
        return 0.0 if num <= 1e-15 * max(float(np.linalg.norm(z)), 1.0) else np.inf
    return num / den


def update_subspace_projection(state: EngineState) -> None:
    """Detect subspace changes and re-estimate new directions, on the
    ``alpha``-frame cadence anchored at the last change. No-op off-cadence."""
    params = state.params
    alpha = params.alpha
    if (state.t - state.change_start + 1) % alpha != 0:
        return
    if len(state.buffer) < alpha:
        return
    window = _window(state)
    projected = project_out(state.basis_settled, window) / math.sqrt(alpha)
    u, svals, _ = np.linalg.svd(projected, full_matrices=False)

    if state.phase is Phase.DETECT:
        if not np.any(svals > state.sigma_floor):
            return
        state.phase = Phase.PPCA
        state.change_count += 1
        state.change_start = state.t - alpha + 1
        state.ppca_step = 0
        state.new_history = []
        # the detection window doubles as the first estimation window

    count = int(np.sum(svals > state.sigma_floor))
    count = min(count, math.ceil(alpha / 3))
    new_dirs = fix_signs(u[:, :count])
    state.new_history.append(new_dirs)
    state.ppca_step += 1
    state.basis = np.hstack([state.basis_settled, new_dirs])
    if orthonormality_drift(state.basis) > 1e-8:
        state.basis = modified_gram_schmidt(state.basis)

    k = state.ppca_step
    stop = k >= params.k_max
    if not stop and k >= max(params.k_min, 3) and len(state.new_history) >= 4:
        z = window.sum(axis=1)
        stop = all(
            _stop_ratio(state.new_history, z, i) < STOP_RATIO
            for i in (k - 2, k - 1, k)
        )
    if stop:
        state.basis_settled = state.basis
        state.phase = Phase.DETECT
        state.ppca_step = 0
        state.new_history = []


def update_subspace_recursive(state: EngineState) -> None:
    """Fold the buffered residuals into the running SVD every ``alpha``
    frames; truncate the tracked rank back to the training rank every
    ``truncate_every`` frames. No-op off-cadence."""
    alpha = state.params.alpha
    since_train = state.t - state.t_train
    if since_train % alpha == 0 and len(state.buffer) >= alpha:
        state.track_basis, state.track_sigma = incremental_svd(
            state.track_basis, state.track_sigma, _window(state)
        )
        state.basis = np.ascontiguousarray(state.track_basis[:, : state.rank_train])
    if state.truncate_every and since_train % state.truncate_every == 0:
        state.track_basis = np.ascontiguousarray(
            state.track_basis[:, : state.rank_train]
        )
        state.track_sigma = state.track_sigma[: state.rank_train]


def separate(
    state: EngineState, frames: Array
) -> tuple[Array, Array, list[Array], list[FrameResult]]:
    """Process a block of frames (columns); convenience wrapper around
    ``process_frame`` that stacks the outputs."""
    frames = np.asarray(frames, dtype=float)
    s_out = np.zeros((state.n_sparse, frames.shape[1]))
    l_out = np.zeros((state.ambient_dim, frames.shape[1]))
    supports: list[Array] = []
    results: list[FrameResult] = []
    for t in range(frames.shape[1]):
        res = process_frame(state, frames[:, t])
        s_out[:, t] = res.s_hat
        l_out[:, t] = res.l_hat
        supports.append(res.t_hat)
        results.append(res)
    return s_out, l_out, supports, results
