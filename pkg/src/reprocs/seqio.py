"""File formats: the binary frame-sequence container, checkpoints, PGM
ingestion, plain-text manifests/run configs, and CSV emission.

Sequence container layout (version 1): magic ``RPCS``, u32 version, u64 rows
``n``, u64 columns ``T``, then ``8*n*T`` bytes of little-endian float64 in
column-major order (one contiguous column per frame, so appending a frame is
a file append).
"""

from __future__ import annotations

import csv
import os
import struct
from collections import deque
from pathlib import Path

import numpy as np

from .engine import EngineParams, EngineState, Mode, Phase
from .sparse import SolverConfig, empty_support

Array = np.ndarray

MAGIC = b"RPCS"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")


class FormatError(Exception):
    """Malformed input file or configuration."""


def write_seq(path, arr: Array) -> None:
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, arr.shape[0], arr.shape[1]))
        fh.write(np.ascontiguousarray(arr.T, dtype="<f8").tobytes())


def read_seq(path) -> Array:
    with SeqReader(path) as reader:
        return reader.read_all()


def _read_header(fh, path) -> tuple[int, int]:
    head = fh.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, t = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"{path}: unrecognized magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return int(n), int(t)


class SeqReader:
    """Random/streaming access to a sequence file; one frame is one column."""

    def __init__(self, path):
        self.path = str(path)
        self._fh = open(path, "rb")
        try:
            self.n, self.t = _read_header(self._fh, self.path)
        except Exception:
            self._fh.close()
            raise
        size = os.fstat(self._fh.fileno()).st_size
        if size - _HEADER.size != 8 * self.n * self.t:
            self._fh.close()
            raise FormatError(f"{self.path}: payload length mismatch")

    def frame(self, index: int) -> Array:
        if not 0 <= index < self.t:
            raise IndexError(index)
        self._fh.seek(_HEADER.size + 8 * self.n * index)
        return np.frombuffer(self._fh.read(8 * self.n), dtype="<f8").astype(float)

    def iter_frames(self):
        self._fh.seek(_HEADER.size)
        for _ in range(self.t):
            yield np.frombuffer(self._fh.read(8 * self.n), dtype="<f8").astype(float)

    def read_all(self) -> Array:
        self._fh.seek(_HEADER.size)
        data = np.frombuffer(self._fh.read(8 * self.n * self.t), dtype="<f8")
        # C-contiguous so resumed arrays follow the same BLAS paths (and hence
        # the same rounding) as freshly computed ones
        return np.ascontiguousarray(data.reshape((self.n, self.t), order="F"))

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SeqWriter:
    """Streaming writer; the frame count is fixed up front so each append is
    a pure file append."""

    def __init__(self, path, n: int, t_total: int):
        self.n, self.t_total = n, t_total
        self.written = 0
        self._fh = open(path, "wb")
        self._fh.write(_HEADER.pack(MAGIC, VERSION, n, t_total))

    def append(self, frame: Array) -> None:
        frame = np.asarray(frame, dtype=float)
        if frame.shape != (self.n,):
            raise FormatError("frame length mismatch on append")
        if self.written >= self.t_total:
            raise FormatError("sequence already full")
        self._fh.write(frame.astype("<f8").tobytes())
        self.written += 1

    def close(self):
        self._fh.close()
        if self.written != self.t_total:
            raise FormatError(
                f"wrote {self.written} frames, declared {self.t_total}"
            )

    def __enter__(self):
        return self

    def __exit__(self, exc_type, *exc):
        if exc_type is None:
            self.close()
        else:
            self._fh.close()


# ---------------------------------------------------------------------------
# PGM ingestion


def read_pgm(path) -> Array:
    """Binary (P5) PGM with maxval 255, returned as a rows x cols uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: malformed PGM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval} (need 255)")
    payload = data[pos : pos + width * height]
    if len(payload) != width * height:
        raise FormatError(f"{path}: payload length mismatch")
    return np.frombuffer(payload, dtype=np.uint8).reshape((height, width))


def ingest_pgm_dir(directory) -> tuple[Array, tuple[int, int]]:
    """Stack all PGM frames in a directory (lexicographic order) into a
    sequence: each frame flattens row-major into one float64 column."""
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".pgm")
    if not paths:
        raise FormatError(f"{directory}: no .pgm files found")
    frames = []
    dims = None
    for p in paths:
        img = read_pgm(p)
        if dims is None:
            dims = img.shape
        elif img.shape != dims:
            raise FormatError(
                f"{p}: frame size {img.shape} differs from first frame {dims}"
            )
        frames.append(img.reshape(-1).astype(float))
    return np.column_stack(frames), dims


# ---------------------------------------------------------------------------
# Plain-text manifests and run configuration


def write_manifest(path, entries: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key}={value}\n")


def read_manifest(path) -> dict:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{line_no}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


RUN_CONFIG_SCHEMA = {
    "mode": str,
    "alpha": int,
    "kmin": int,
    "kmax": int,
    "b_percent": float,
    "q": float,
    "seed": int,
    "input": str,
    "ckpt": str,
    "out_dir": str,
    "operator": str,
}


def parse_run_config(path) -> dict:
    """key=value run configuration; unknown keys are rejected."""
    raw = read_manifest(path)
    out: dict[str, object] = {}
    for key, value in raw.items():
        if key not in RUN_CONFIG_SCHEMA:
            raise FormatError(f"{path}: unknown configuration key {key!r}")
        caster = RUN_CONFIG_SCHEMA[key]
        try:
            out[key] = caster(value)
        except ValueError as exc:
            raise FormatError(f"{path}: bad value for {key!r}: {value!r}") from exc
    if "mode" in out and out["mode"] not in {m.value for m in Mode}:
        raise FormatError(f"{path}: unknown mode {out['mode']!r}")
    return out


# ---------------------------------------------------------------------------
# Engine checkpoints (directory of sequence files plus a scalar manifest)


def _support_str(support: Array) -> str:
    return " ".join(str(int(i)) for i in support)


def _support_from_str(text: str) -> Array:
    text = text.strip()
    if not text:
        return empty_support()
    return np.array([int(tok) for tok in text.split()], dtype=np.int64)


def save_state(directory, state: EngineState) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {
        "format": "checkpoint-v1",
        "mode": state.mode.value,
        "phase": state.phase.value,
        "t": state.t,
        "t_train": state.t_train,
        "sigma_floor": repr(state.sigma_floor),
        "rank_train": state.rank_train,
        "change_count": state.change_count,
        "ppca_step": state.ppca_step,
        "change_start": state.change_start,
        "alpha": state.params.alpha,
        "kmin": state.params.k_min,
        "kmax": state.params.k_max,
        "b_percent": repr(state.params.b_percent),
        "q": repr(state.params.q),
        "omega_from_residual": int(state.params.omega_from_residual),
        "max_iters": state.params.solver.max_iters,
        "rel_tol": repr(state.params.solver.rel_tol),
        "feas_slack": repr(state.params.solver.feas_slack),
        "n_sparse": state.n_sparse,
        "truncate_every": state.truncate_every,
        "support_prev1": _support_str(state.support_prev1),
        "support_prev2": _support_str(state.support_prev2),
        "buffer_len": len(state.buffer),
        "new_history_len": len(state.new_history),
        "has_track": int(state.track_basis is not None),
        "has_operator": int(state.operator is not None),
        "has_warm": int(state.x_warm is not None),
    }
    write_manifest(directory / "manifest.txt", entries)
    write_seq(directory / "basis.seq", state.basis)
    write_seq(directory / "basis_settled.seq", state.basis_settled)
    write_seq(directory / "lowrank_prev.seq", state.lowrank_prev)
    if len(state.buffer):
        write_seq(directory / "buffer.seq", np.column_stack(list(state.buffer)))
    for i, h in enumerate(state.new_history):
        write_seq(directory / f"new_history_{i}.seq", h)
    if state.track_basis is not None:
        write_seq(directory / "track_basis.seq", state.track_basis)
        write_seq(directory / "track_sigma.seq", state.track_sigma)
    if state.operator is not None:
        write_seq(directory / "operator.seq", state.operator)
    if state.x_warm is not None:
        write_seq(directory / "x_warm.seq", state.x_warm)


def load_state(directory) -> EngineState:
    directory = Path(directory)
    mpath = directory / "manifest.txt"
    if not mpath.exists():
        raise FormatError(f"{directory}: missing checkpoint manifest")
    m = read_manifest(mpath)
    if m.get("format") != "checkpoint-v1":
        raise FormatError(f"{directory}: not a checkpoint directory")
    params = EngineParams(
        alpha=int(m["alpha"]),
        k_min=int(m["kmin"]),
        k_max=int(m["kmax"]),
        b_percent=float(m["b_percent"]),
        q=float(m["q"]),
        solver=SolverConfig(
            max_iters=int(m["max_iters"]),
            rel_tol=float(m["rel_tol"]),
            feas_slack=float(m["feas_slack"]),
        ),
        omega_from_residual=bool(int(m["omega_from_residual"])),
    )
    basis = read_seq(directory / "basis.seq")
    buffer = deque(maxlen=params.alpha)
    if int(m["buffer_len"]):
        buf = read_seq(directory / "buffer.seq")
        for j in range(buf.shape[1]):
            buffer.append(buf[:, j].copy())
    state = EngineState(
        mode=Mode(m["mode"]),
        params=params,
        t=int(m["t"]),
        t_train=int(m["t_train"]),
        basis=basis,
        basis_settled=read_seq(directory / "basis_settled.seq"),
        sigma_floor=float(m["sigma_floor"]),
        rank_train=int(m["rank_train"]),
        phase=Phase(m["phase"]),
        change_count=int(m["change_count"]),
        ppca_step=int(m["ppca_step"]),
        change_start=int(m["change_start"]),
        buffer=buffer,
        new_history=[
            read_seq(directory / f"new_history_{i}.seq")
            for i in range(int(m["new_history_len"]))
        ],
        support_prev1=_support_from_str(m["support_prev1"]),
        support_prev2=_support_from_str(m["support_prev2"]),
        lowrank_prev=read_seq(directory / "lowrank_prev.seq")[:, 0],
        n_sparse=int(m["n_sparse"]),
        truncate_every=int(m["truncate_every"]),
    )
    if int(m["has_track"]):
        state.track_basis = read_seq(directory / "track_basis.seq")
        state.track_sigma = read_seq(directory / "track_sigma.seq")[:, 0]
    if int(m["has_operator"]):
        from .engine import set_compressive

        set_compressive(state, read_seq(directory / "operator.seq"))
    if int(m["has_warm"]):
        state.x_warm = read_seq(directory / "x_warm.seq")[:, 0]
    return state


# ---------------------------------------------------------------------------
# CSV helpers


def write_csv(path, header: list, rows) -> None:
    """UTF-8 CSV with '.' decimals and LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_supports_csv(path, supports) -> None:
    rows = [
        [t, s.size, " ".join(str(int(i)) for i in s)] for t, s in enumerate(supports)
    ]
    write_csv(path, ["frame", "size", "indices"], rows)


def read_supports_csv(path) -> list[Array]:
    supports: list[Array] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["frame", "size"]:
            raise FormatError(f"{path}: not a supports CSV")
        for row in reader:
            supports.append(_support_from_str(row[2] if len(row) > 2 else ""))
    return supports
