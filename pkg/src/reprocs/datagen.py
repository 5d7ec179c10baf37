"""Synthetic data generators: low-rank autoregressive sequences with subspace
change, correlated moving-block sparse supports, a moving foreground block
with uniform intensities, and Gaussian measurement operators.

Every generator is a pure function of (config, seed) and also returns the
ground truth needed to score an estimator against it.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Array = np.ndarray

VARIANCE_RATIO = 0.7079
REMOVAL_FLOOR = 1e-6


def default_variance_profile(r0: int) -> Array:
    """Geometric coordinate variances 1e4, 1e4*0.7079, ... (r0 values)."""
    return 1e4 * VARIANCE_RATIO ** np.arange(r0)


@dataclass
class LowRankConfig:
    n: int
    r0: int
    t_train: int
    t_total: int
    t_change: int | None = None  # frame index of the subspace change; None = no change
    c_new: int = 0
    ar_coeff: float = 0.1
    decay_rate: float = 0.1
    variances: Array | None = None  # defaults to the geometric profile
    new_variances: Sequence[float] = (60.0, 50.0)
    seed: int = 0

    def __post_init__(self):
        if self.r0 + self.c_new > self.n:
            raise ValueError("total rank exceeds ambient dimension")
        if self.t_change is not None and self.t_change <= self.t_train:
            raise ValueError("subspace change must occur after training")


@dataclass
class LowRankData:
    frames: Array  # n x t_total
    basis0: Array  # n x r0
    basis_new: Array  # n x c_new
    variances: Array  # (r0 + c_new) x t_total variance schedule
    t_change: int | None


def lowrank_ar_sequence(cfg: LowRankConfig) -> LowRankData:
    """Low-dimensional frames driven by per-coordinate AR(1) coefficients.

    Coordinates have the configured stationary variances.  At ``t_change``,
    ``c_new`` orthogonal directions appear with ``new_variances`` and the two
    smallest-variance existing directions start decaying exponentially at
    ``decay_rate``; a direction whose variance falls below 1e-6 is removed.
    """
    rng = np.random.default_rng(cfg.seed)
    r_total = cfg.r0 + cfg.c_new
    gauss = rng.standard_normal((cfg.n, r_total))
    basis, _ = np.linalg.qr(gauss)
    basis0, basis_new = basis[:, : cfg.r0], basis[:, cfg.r0 :]

    profile = (
        np.asarray(cfg.variances, dtype=float)
        if cfg.variances is not None
        else default_variance_profile(cfg.r0)
    )
    if profile.size != cfg.r0:
        raise ValueError("variance profile length must equal r0")

    var = np.zeros((r_total, cfg.t_total))
    var[: cfg.r0, :] = profile[:, None]
    if cfg.t_change is not None:
        tc = cfg.t_change
        steps = np.arange(cfg.t_total - tc)
        if cfg.c_new:
            new_var = np.asarray(cfg.new_variances[: cfg.c_new], dtype=float)
            var[cfg.r0 :, tc:] = new_var[:, None]
        decay_idx = np.argsort(profile, kind="stable")[:2]
        var[decay_idx, tc:] = profile[decay_idx, None] * np.exp(
            -cfg.decay_rate * (steps + 1.0)
        )
    var[var < REMOVAL_FLOOR] = 0.0

    rho = cfg.ar_coeff
    coeffs = np.zeros((r_total, cfg.t_total))
    coeffs[:, 0] = rng.standard_normal(r_total) * np.sqrt(var[:, 0])
    for t in range(1, cfg.t_total):
        innov_var = np.maximum(var[:, t] - rho * rho * var[:, t - 1], 0.0)
        coeffs[:, t] = rho * coeffs[:, t - 1] + rng.standard_normal(r_total) * np.sqrt(
            innov_var
        )
        coeffs[var[:, t] == 0.0, t] = 0.0

    return LowRankData(
        frames=basis @ coeffs,
        basis0=basis0,
        basis_new=basis_new,
        variances=var,
        t_change=cfg.t_change,
    )


@dataclass
class BlockSupportConfig:
    n: int
    block_len: int
    magnitude: float
    start: int | None = None  # None: drawn uniformly over valid positions
    p_static: float = 0.8
    p_up: float = 0.1
    p_down: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not math.isclose(self.p_static + self.p_up + self.p_down, 1.0):
            raise ValueError("move probabilities must sum to 1")
        if self.block_len > self.n:
            raise ValueError("block does not fit in the vector")
        if self.start is not None and not 0 <= self.start <= self.n - self.block_len:
            raise ValueError("start position out of range")


def moving_block_sparse(
    cfg: BlockSupportConfig, frames: int
) -> tuple[list[Array], Array]:
    """Contiguous block support doing a lazy random walk, reflecting at the
    boundaries; the sparse frames carry ``magnitude`` on the support.
    """
    rng = np.random.default_rng(cfg.seed)
    top = cfg.n - cfg.block_len
    pos = cfg.start if cfg.start is not None else int(rng.integers(0, top + 1))
    supports: list[Array] = []
    sparse = np.zeros((cfg.n, frames))
    for t in range(frames):
        support = np.arange(pos, pos + cfg.block_len, dtype=np.int64)
        supports.append(support)
        sparse[support, t] = cfg.magnitude
        draw = rng.random()
        if draw < cfg.p_static:
            step = 0
        elif draw < cfg.p_static + cfg.p_up:
            step = -1
        else:
            step = 1
        nxt = pos + step
        if not 0 <= nxt <= top:
            nxt = pos - step  # reflect
        pos = min(max(nxt, 0), top)
    return supports, sparse


@dataclass
class MotionBlockConfig:
    block_shape: tuple[int, int] = (45, 25)  # rows x cols
    intensity_range: tuple[float, float] = (170.0, 230.0)
    pos0: float = 27.0
    vel0: float = 0.5
    accel_var: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.accel_var < 0:
            raise ValueError("acceleration variance must be nonnegative")


def _truncated_gaussian(rng: np.random.Generator, std: float) -> float:
    # rejection sampling of N(0, std^2) truncated to |x| < 2*std
    if std == 0.0:
        return 0.0
    while True:
        x = rng.standard_normal() * std
        if abs(x) < 2.0 * std:
            return float(x)


def motion_foreground(
    cfg: MotionBlockConfig, dims: tuple[int, int], frames: int
) -> tuple[Array, list[Array]]:
    """Foreground block on a rows x cols raster moving horizontally with
    constant velocity plus small truncated-Gaussian acceleration.

    The block is centered vertically; its pixels get iid uniform intensities
    each frame.  Frames are vectorized row-major, one column per frame.
    When the block would leave the frame the velocity is reflected.
    """
    rows, cols = dims
    bh, bw = cfg.block_shape
    if bh > rows or bw > cols:
        raise ValueError("block does not fit in the image")
    rng = np.random.default_rng(cfg.seed)
    std = math.sqrt(cfg.accel_var)
    lo, hi = cfg.intensity_range
    half = bw // 2
    min_c, max_c = half, cols - (bw - half)  # valid centroid columns

    n = rows * cols
    fg = np.zeros((n, frames))
    supports: list[Array] = []
    row0 = (rows - bh) // 2
    row_idx = np.arange(row0, row0 + bh)

    pos, vel = float(cfg.pos0), float(cfg.vel0)
    for t in range(frames):
        center = int(round(pos))
        center = min(max(center, min_c), max_c)
        col_idx = np.arange(center - half, center - half + bw)
        pix = (row_idx[:, None] * cols + col_idx[None, :]).ravel()
        support = np.sort(pix).astype(np.int64)
        supports.append(support)
        fg[support, t] = rng.uniform(lo, hi, size=support.size)

        accel = _truncated_gaussian(rng, std)
        pos, vel = pos + vel, vel + accel
        if pos < min_c or pos > max_c:
            vel = -vel
            pos = min(max(pos, float(min_c)), float(max_c))
    return fg, supports


def overlay(
    background: Array,
    foreground: Array,
    supports: Sequence[Array],
    t_train: int | None = None,
) -> tuple[Array, Array, Array]:
    """Composite the foreground over the background on the given supports.

    Returns ``(composite, sparse_truth, mean)`` where the sparse truth is
    foreground minus background on each support (zero elsewhere) and
    ``mean`` is the per-pixel mean of the first ``t_train`` background
    frames (all frames when ``t_train`` is None).
    """
    if background.shape != foreground.shape:
        raise ValueError("background/foreground shape mismatch")
    composite = background.copy()
    sparse = np.zeros_like(background)
    for t, support in enumerate(supports):
        if support.size == 0:
            continue
        composite[support, t] = foreground[support, t]
        sparse[support, t] = foreground[support, t] - background[support, t]
    span = background[:, :t_train] if t_train else background
    return composite, sparse, span.mean(axis=1)


def gaussian_operator(
    m: int, n: int, seed: int = 0, orthonormalize: bool = False
) -> Array:
    """m x n matrix with iid N(0, 1/m) entries; deterministic per seed.

    With ``orthonormalize`` (requires m >= n) the columns are orthonormalized,
    which zeroes the order-1 restricted-isometry constant.
    """
    if m < 1 or n < 1:
        raise ValueError("operator dimensions must be positive")
    rng = np.random.default_rng(seed)
    mat = rng.standard_normal((m, n)) / math.sqrt(m)
    if orthonormalize:
        if m < n:
            raise ValueError("orthonormalization requires m >= n")
        mat, _ = np.linalg.qr(mat)
    return mat


# ---------------------------------------------------------------------------
# Benchmark scenarios

TABLE_CASES = {
    "9-large": (9, 100.0, 1.0),
    "27-large": (27, 100.0, 1.0),
    "9-small": (9, 10.0, 0.25),
    "27-small": (27, 10.0, 0.25),
}


@dataclass
class ScenarioData:
    measurements: Array  # n x t_total, training frames included
    lowrank: Array
    sparse: Array
    supports: list[Array]  # empty arrays during training
    basis0: Array
    basis_new: Array
    t_train: int
    t_change: int | None
    q: float
    b_percent: float
    config: dict = field(default_factory=dict)


def build_table_scenario(
    case: str,
    seed: int = 0,
    n: int = 100,
    r0: int = 20,
    c_new: int = 2,
    t_train: int = 2000,
    post_frames: int = 80,
    change_offset: int = 5,
) -> ScenarioData:
    """One realization of a simulated benchmark case.

    ``case`` selects block length and magnitude: "9-large", "27-large",
    "9-small", "27-small" (block of 9 or 27 entries at magnitude 100 or 10).
    The sequence has ``t_train`` sparse-free frames, a subspace change of
    ``c_new`` directions shortly after training, and a moving-block sparse
    component on every post-training frame.
    """
    if case not in TABLE_CASES:
        raise ValueError(f"unknown case {case!r}; choose from {sorted(TABLE_CASES)}")
    block_len, magnitude, q = TABLE_CASES[case]
    t_total = t_train + post_frames
    seed_low, seed_block = np.random.SeedSequence(seed).spawn(2)

    low_cfg = LowRankConfig(
        n=n,
        r0=r0,
        c_new=c_new,
        t_train=t_train,
        t_total=t_total,
        t_change=t_train + change_offset,
        seed=seed_low,
    )
    low = lowrank_ar_sequence(low_cfg)

    block_cfg = BlockSupportConfig(
        n=n, block_len=block_len, magnitude=magnitude, seed=seed_block
    )
    post_supports, post_sparse = moving_block_sparse(block_cfg, post_frames)

    sparse = np.zeros((n, t_total))
    sparse[:, t_train:] = post_sparse
    supports = [np.empty(0, dtype=np.int64)] * t_train + post_supports
    measurements = low.frames + sparse

    return ScenarioData(
        measurements=measurements,
        lowrank=low.frames,
        sparse=sparse,
        supports=supports,
        basis0=low.basis0,
        basis_new=low.basis_new,
        t_train=t_train,
        t_change=low.t_change,
        q=q,
        b_percent=99.99,
        config={
            "case": case,
            "seed": seed,
            "n": n,
            "r0": r0,
            "c_new": c_new,
            "t_train": t_train,
            "t_change": low_cfg.t_change,
            "t_total": t_total,
            "block_len": block_len,
            "magnitude": magnitude,
            "q": q,
            "b_percent": 99.99,
        },
    )


def build_motion_scenario(
    seed: int = 0,
    dims: tuple[int, int] = (72, 90),
    r0: int = 20,
    t_train: int = 1420,
    post_frames: int = 80,
    background_level: float = 128.0,
    foreground: MotionBlockConfig | None = None,
) -> ScenarioData:
    """Synthetic image sequence: low-dimensional background wobble plus a
    moving rectangular foreground block with uniform intensities.

    Emulates an approximately low-rank video at desk scale; frames are
    mean-subtracted so the training part is directly usable.
    """
    rows, cols = dims
    n = rows * cols
    t_total = t_train + post_frames
    seed_bg, seed_fg = np.random.SeedSequence(seed).spawn(2)

    low_cfg = LowRankConfig(
        n=n, r0=r0, t_train=t_train, t_total=t_total, seed=seed_bg
    )
    low = lowrank_ar_sequence(low_cfg)
    background = background_level + low.frames

    fg_cfg = dataclasses.replace(foreground or MotionBlockConfig(), seed=seed_fg)
    fg_post, post_supports = motion_foreground(fg_cfg, dims, post_frames)
    foreground = np.zeros((n, t_total))
    foreground[:, t_train:] = fg_post
    supports = [np.empty(0, dtype=np.int64)] * t_train + post_supports

    composite, sparse, mean = overlay(background, foreground, supports, t_train)
    measurements = composite - mean[:, None]

    return ScenarioData(
        measurements=measurements,
        lowrank=background - mean[:, None],
        sparse=sparse,
        supports=supports,
        basis0=low.basis0,
        basis_new=low.basis_new,
        t_train=t_train,
        t_change=None,
        q=1.0,
        b_percent=95.0,
        config={
            "case": "lake-like-motion",
            "seed": seed,
            "rows": rows,
            "cols": cols,
            "n": n,
            "r0": r0,
            "t_train": t_train,
            "t_total": t_total,
            "q": 1.0,
            "b_percent": 95.0,
        },
    )
