"""Dense linear-algebra kernels: SVD-based bases, incremental SVD, projections.

All bases are plain ``numpy`` arrays of shape ``(n, r)`` with orthonormal
columns; ``r = 0`` (an empty basis) is legal everywhere.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

Array = np.ndarray


def empty_basis(n: int) -> Array:
    """An ``n x 0`` basis (the empty subspace)."""
    return np.zeros((n, 0))


def fix_signs(q: Array) -> Array:
    """Flip columns so each column's largest-magnitude entry is nonnegative.

    Pins the sign ambiguity of singular vectors so that repeated runs (and
    tests) can compare vectors, not just projectors.
    """
    if q.shape[1] == 0:
        return q
    lead = np.argmax(np.abs(q), axis=0)
    signs = np.sign(q[lead, np.arange(q.shape[1])])
    signs[signs == 0] = 1.0
    return q * signs


def orthonormality_drift(q: Array) -> float:
    """Max-norm deviation of q'q from the identity."""
    if q.shape[1] == 0:
        return 0.0
    gram = q.T @ q
    return float(np.max(np.abs(gram - np.eye(q.shape[1]))))


def modified_gram_schmidt(q: Array) -> Array:
    """Re-orthonormalize columns in place order; drops dependent columns."""
    cols: list[Array] = []
    for i in range(q.shape[1]):
        v = q[:, i].copy()
        for u in cols:
            v -= u * (u @ v)
        nrm = float(np.linalg.norm(v))
        if nrm > 1e-12:
            cols.append(v / nrm)
    if not cols:
        return empty_basis(q.shape[0])
    return np.column_stack(cols)


def basis_by_energy(mat: Array, energy_percent: float) -> tuple[Array, Array]:
    """Smallest leading set of left singular vectors holding the given
    fraction of squared singular-value energy.

    Returns ``(basis, spectrum)`` where ``spectrum`` holds the retained
    singular values (nonincreasing).
    """
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        raise ValueError("empty input")
    if not 0.0 < energy_percent <= 100.0:
        raise ValueError(f"energy percent must be in (0, 100], got {energy_percent}")
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    energy = s**2
    total = float(energy.sum())
    if total == 0.0:
        return empty_basis(mat.shape[0]), s[:0]
    target = (energy_percent / 100.0) * total
    rank = int(np.searchsorted(np.cumsum(energy), target) + 1)
    rank = min(rank, s.size)
    return fix_signs(u[:, :rank]), s[:rank].copy()


def basis_by_rank(mat: Array, rank: int) -> Array:
    """The ``rank`` leading left singular vectors of ``mat``."""
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        raise ValueError("empty input")
    if not 1 <= rank <= min(mat.shape):
        raise ValueError(f"rank {rank} out of range for shape {mat.shape}")
    u, _, _ = np.linalg.svd(mat, full_matrices=False)
    return fix_signs(u[:, :rank])


def incremental_svd(
    basis: Array,
    sigma: Array,
    new_cols: Array,
    reorth_tol: float = 1e-8,
) -> tuple[Array, Array]:
    """Left singular vectors/values of ``[basis @ diag(sigma), new_cols]``.

    Project the new columns, QR the residual, SVD the small core matrix and
    rotate.  Residual columns with norm <= 1e-10 * ||new_cols||_F are treated
    as already contained in the span.  The output is re-orthonormalized with
    modified Gram-Schmidt whenever accumulated drift exceeds ``reorth_tol``.
    """
    basis = np.asarray(basis, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    new_cols = np.asarray(new_cols, dtype=float)
    if new_cols.ndim == 1:
        new_cols = new_cols[:, None]
    if basis.shape[0] != new_cols.shape[0]:
        raise ValueError(
            f"dimension mismatch: basis has {basis.shape[0]} rows, "
            f"new columns have {new_cols.shape[0]}"
        )
    if basis.shape[1] != sigma.size:
        raise ValueError("basis/spectrum size mismatch")
    r, d = basis.shape[1], new_cols.shape[1]

    par = basis.T @ new_cols
    resid = new_cols - basis @ par
    scale = float(np.linalg.norm(new_cols))
    keep = np.linalg.norm(resid, axis=0) > 1e-10 * scale
    if np.any(keep):
        j, k_kept = np.linalg.qr(resid[:, keep])
    else:
        j = empty_basis(basis.shape[0])
        k_kept = np.zeros((0, 0))
    kk = j.shape[1]
    k_full = np.zeros((kk, d))
    k_full[:, keep] = k_kept

    core = np.zeros((r + kk, r + d))
    core[:r, :r] = np.diag(sigma)
    core[:r, r:] = par
    core[r:, r:] = k_full
    u, s, _ = np.linalg.svd(core, full_matrices=False)

    out = fix_signs(np.hstack([basis, j]) @ u)
    if orthonormality_drift(out) > reorth_tol:
        out = modified_gram_schmidt(out)
        s = s[: out.shape[1]]
    return out, s


def project_out(basis: Array, v: Array) -> Array:
    """Apply ``I - basis @ basis'`` to a vector or matrix without forming it.

    Cost O(n r) per column; the n x n projector is never materialized.
    """
    if basis.shape[1] == 0:
        return np.array(v, dtype=float, copy=True)
    return v - basis @ (basis.T @ v)


class Projector:
    """Matrix-free handle for projection onto the complement of a subspace."""

    __slots__ = ("basis",)

    def __init__(self, basis: Array):
        self.basis = basis

    def apply(self, v: Array) -> Array:
        return project_out(self.basis, v)


def support_coherence(basis: Array, support: Array) -> float:
    """Spectral norm of the row restriction of ``basis`` to ``support``.

    Values near 1 mean the subspace concentrates on those rows; values near
    sqrt(|support| / n) mean it is spread out.
    """
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0 or basis.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(basis[support, :], 2))


def complement_ric(basis: Array, s: int) -> float:
    """Exact restricted-isometry constant of ``I - basis @ basis'`` at
    sparsity ``s`` by exhaustive support enumeration.

    Exponential in n; guarded to n <= 12.  Test/diagnostic use only.
    """
    basis = np.asarray(basis, dtype=float)
    n = basis.shape[0]
    if n > 12:
        raise ValueError("exponential cost guard: n must be <= 12")
    proj = np.eye(n) - basis @ basis.T
    worst = 0.0
    for size in range(1, min(s, n) + 1):
        for support in itertools.combinations(range(n), size):
            cols = proj[:, list(support)]
            eigs = np.linalg.eigvalsh(cols.T @ cols)
            worst = max(worst, float(eigs[-1] - 1.0), float(1.0 - eigs[0]))
    return worst


def subspace_error(target: Array, estimate: Array) -> float:
    """Spectral norm of ``(I - estimate @ estimate') @ target``.

    The sine of the largest principal angle of ``target`` not captured by
    ``estimate``; 0 when the estimate contains the target span, 1 when some
    target direction is fully missed.
    """
    target = np.asarray(target, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if target.shape[0] != estimate.shape[0]:
        raise ValueError("ambient dimension mismatch")
    if target.shape[1] == 0:
        return 0.0
    return float(np.linalg.norm(project_out(estimate, target), 2))


def scaled_window_basis(frames: Array, energy_percent: float) -> tuple[Array, Array]:
    """``basis_by_energy`` of ``frames / sqrt(n_frames)``.

    The 1/sqrt(batch length) scale makes spectra from different batch sizes
    comparable (sample covariance scaling).
    """
    frames = np.asarray(frames, dtype=float)
    if frames.size == 0:
        raise ValueError("empty input")
    return basis_by_energy(frames / math.sqrt(frames.shape[1]), energy_percent)
