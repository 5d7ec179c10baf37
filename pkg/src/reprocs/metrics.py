"""Recovery metrics, model-verification procedures, and the Monte-Carlo
benchmark harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import datagen
from .engine import EngineParams, Mode, initialize, separate
from .linalg import basis_by_energy, project_out

Array = np.ndarray


@dataclass
class MetricReport:
    per_frame: Array
    aggregate: float  # mean of the per-frame series
    label: str


def _as_pairs(s_true, s_hat) -> list[tuple[Array, Array]]:
    if isinstance(s_true, np.ndarray) and s_true.ndim == 2:
        pairs = [(s_true, s_hat)]
    else:
        pairs = list(zip(s_true, s_hat))
    for truth, est in pairs:
        if truth.shape != est.shape:
            raise ValueError("shape mismatch between truth and estimate")
    return pairs


def nmse(s_true, s_hat) -> float:
    """Ratio of summed squared error energy to summed signal energy.

    Accepts a single pair of matrices or sequences of matrices (one per
    realization); the sums run over everything supplied.
    """
    err = 0.0
    sig = 0.0
    for truth, est in _as_pairs(s_true, s_hat):
        err += float(np.sum((truth - est) ** 2))
        sig += float(np.sum(truth**2))
    if sig == 0.0:
        raise ValueError("zero-energy truth")
    return err / sig


def nmse_per_frame(s_true: Array, s_hat: Array) -> MetricReport:
    """Per-frame normalized squared error; frames with zero truth energy and
    zero error report 0."""
    if s_true.shape != s_hat.shape:
        raise ValueError("shape mismatch between truth and estimate")
    err = np.sum((s_true - s_hat) ** 2, axis=0)
    sig = np.sum(s_true**2, axis=0)
    out = np.zeros(s_true.shape[1])
    nz = sig > 0
    out[nz] = err[nz] / sig[nz]
    out[(~nz) & (err > 0)] = np.inf
    return MetricReport(out, float(np.mean(out)), "nmse_per_frame")


def verify_slow_subspace_change(
    frames: Array, tau: int, b_percent: float
) -> MetricReport:
    """Energy fraction of each frame outside the previous window's basis.

    Frames are cut into windows of ``tau``; each window gets an energy basis
    at ``b_percent``; for every frame from the second window on, the series
    holds ||frame - window_{j-1} projection|| / ||frame||.  Small values that
    grow gradually indicate a slowly changing subspace.
    """
    frames = np.asarray(frames, dtype=float)
    if tau < 1:
        raise ValueError("tau must be >= 1")
    total = frames.shape[1]
    if total < 2 * tau:
        raise ValueError("need at least 2*tau frames")
    n_windows = total // tau
    bases = [
        basis_by_energy(frames[:, j * tau : (j + 1) * tau], b_percent)[0]
        for j in range(n_windows)
    ]
    ratios = np.zeros(total - tau)
    for t in range(tau, total):
        prev = bases[min(t // tau, n_windows) - 1]
        nrm = float(np.linalg.norm(frames[:, t]))
        if nrm == 0.0:
            ratios[t - tau] = 0.0
        else:
            ratios[t - tau] = float(np.linalg.norm(project_out(prev, frames[:, t]))) / nrm
    return MetricReport(ratios, float(np.mean(ratios)), "slow_subspace_change")


def verify_denseness(basis: Array, supports: Sequence[Array]) -> MetricReport:
    """Per frame, the largest energy any single basis column puts on the
    frame's support rows."""
    vals = np.zeros(len(supports))
    for t, support in enumerate(supports):
        if support.size == 0 or basis.shape[1] == 0:
            continue
        vals[t] = float(np.max(np.linalg.norm(basis[support, :], axis=0)))
    return MetricReport(vals, float(np.mean(vals)) if vals.size else 0.0, "denseness")


def verify_support_dynamics(
    supports: Sequence[Array], n: int
) -> tuple[MetricReport, MetricReport, MetricReport]:
    """Support size fraction plus per-frame addition and removal fractions."""
    if len(supports) < 2:
        raise ValueError("need at least 2 frames of supports")
    sizes = np.array([s.size for s in supports], dtype=float)
    frac = sizes / n
    additions = np.zeros(len(supports) - 1)
    removals = np.zeros(len(supports) - 1)
    for t in range(1, len(supports)):
        cur, prev = supports[t], supports[t - 1]
        if cur.size == 0:
            continue
        added = np.setdiff1d(cur, prev, assume_unique=True).size
        removed = np.setdiff1d(prev, cur, assume_unique=True).size
        additions[t - 1] = added / cur.size
        removals[t - 1] = removed / cur.size
    return (
        MetricReport(frac, float(np.mean(frac)), "support_fraction"),
        MetricReport(additions, float(np.mean(additions)), "addition_fraction"),
        MetricReport(removals, float(np.mean(removals)), "removal_fraction"),
    )


@dataclass
class RealizationRow:
    realization: int
    err_energy: float
    sig_energy: float
    nmse: float
    exact_support_frames: int
    frames: int
    train_seconds: float
    stream_seconds: float


@dataclass
class BenchmarkResult:
    case: str
    realizations: int
    seed: int
    nmse: float
    exact_support_rate: float
    per_frame_nmse: Array  # mean over realizations
    rows: list[RealizationRow] = field(default_factory=list)

    @property
    def csv_rows(self) -> list[list]:
        return [
            [
                r.realization,
                repr(r.err_energy),
                repr(r.sig_energy),
                repr(r.nmse),
                r.exact_support_frames,
                r.frames,
                f"{r.train_seconds:.3f}",
                f"{r.stream_seconds:.3f}",
            ]
            for r in self.rows
        ]


BENCH_CSV_HEADER = [
    "realization",
    "err_energy",
    "sig_energy",
    "nmse",
    "exact_support_frames",
    "frames",
    "train_seconds",
    "stream_seconds",
]


def run_benchmark(
    case: str,
    realizations: int = 10,
    seed: int = 0,
    params: EngineParams | None = None,
    mode: Mode = Mode.PPCA,
    operator_fraction: float | None = None,
    out_csv=None,
) -> BenchmarkResult:
    """Monte-Carlo benchmark on a simulated case: generate, separate, score.

    Realization ``r`` uses seed ``seed + r``, so single realizations can be
    reproduced independently.  ``operator_fraction`` switches to compressive
    measurements with an m = fraction * n Gaussian operator.  ``out_csv``
    writes one row per realization with the raw energies, so the aggregate
    is recomputable from the file.
    """
    rows: list[RealizationRow] = []
    per_frame_acc: Array | None = None
    s_trues: list[Array] = []
    s_hats: list[Array] = []
    exact = 0
    total_frames = 0

    for r in range(realizations):
        scenario = datagen.build_table_scenario(case, seed=seed + r)
        run_params = params or EngineParams(
            b_percent=scenario.b_percent, q=scenario.q
        )
        training = scenario.measurements[:, : scenario.t_train]
        post = scenario.measurements[:, scenario.t_train :]
        operator = None
        if operator_fraction is not None:
            m = int(round(operator_fraction * scenario.measurements.shape[0]))
            operator = datagen.gaussian_operator(
                m, scenario.measurements.shape[0], seed=seed + r
            )
            training = operator @ training
            post = operator @ post

        t0 = time.perf_counter()
        if operator is not None:
            state = initialize(training, run_params, Mode.COMPRESSIVE)
            from .engine import set_compressive

            set_compressive(state, operator)
        else:
            state = initialize(training, run_params, mode)
        t1 = time.perf_counter()
        s_hat, _, supports, _ = separate(state, post)
        t2 = time.perf_counter()

        s_true = scenario.sparse[:, scenario.t_train :]
        true_supports = scenario.supports[scenario.t_train :]
        err = float(np.sum((s_true - s_hat) ** 2))
        sig = float(np.sum(s_true**2))
        hits = sum(
            int(np.array_equal(est, truth))
            for est, truth in zip(supports, true_supports)
        )
        exact += hits
        total_frames += len(true_supports)
        s_trues.append(s_true)
        s_hats.append(s_hat)
        rows.append(
            RealizationRow(
                realization=r,
                err_energy=err,
                sig_energy=sig,
                nmse=err / sig if sig else 0.0,
                exact_support_frames=hits,
                frames=len(true_supports),
                train_seconds=t1 - t0,
                stream_seconds=t2 - t1,
            )
        )
        frame_err = np.sum((s_true - s_hat) ** 2, axis=0)
        frame_sig = np.sum(s_true**2, axis=0)
        ratio = np.divide(
            frame_err,
            frame_sig,
            out=np.zeros_like(frame_err),
            where=frame_sig > 0,
        )
        per_frame_acc = ratio if per_frame_acc is None else per_frame_acc + ratio

    result = BenchmarkResult(
        case=case,
        realizations=realizations,
        seed=seed,
        nmse=nmse(s_trues, s_hats),
        exact_support_rate=exact / total_frames if total_frames else 0.0,
        per_frame_nmse=per_frame_acc / realizations,
        rows=rows,
    )
    if out_csv is not None:
        from .seqio import write_csv

        write_csv(out_csv, BENCH_CSV_HEADER, result.csv_rows)
    return result
