"""Command-line front door: train / separate / simulate / verify / bench /
ingest over the binary sequence format.

Heavy imports happen inside the subcommands so ``--help`` stays fast and the
``REPROCS_THREADS`` cap can be applied before numpy loads.

Exit codes: 0 success, 1 internal failure, 2 usage or format error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

USAGE_EXIT = 2


def _apply_thread_cap() -> None:
    cap = os.environ.get("REPROCS_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _engine_params(args, defaults: dict):
    from .engine import EngineParams

    def pick(flag, key, fallback):
        val = getattr(args, flag, None)
        if val is not None:
            return val
        return defaults.get(key, fallback)

    return EngineParams(
        alpha=int(pick("alpha", "alpha", 20)),
        k_min=int(pick("kmin", "kmin", 3)),
        k_max=int(pick("kmax", "kmax", 10)),
        b_percent=float(pick("b", "b_percent", 95.0)),
        q=float(pick("q", "q", 1.0)),
    )


def _load_config(args) -> dict:
    from .seqio import parse_run_config

    if getattr(args, "config", None):
        return parse_run_config(args.config)
    return {}


def cmd_train(args) -> int:
    from . import seqio
    from .engine import Mode, initialize

    cfg = _load_config(args)
    input_path = args.input or cfg.get("input")
    out = args.out or cfg.get("ckpt")
    if not input_path or not out:
        raise seqio.FormatError("train requires --input and --out")
    params = _engine_params(args, cfg)
    mode = Mode(args.mode or cfg.get("mode", "ppca"))

    training = seqio.read_seq(input_path)
    mean = None
    if args.center:
        mean = training.mean(axis=1)
        training = training - mean[:, None]
    state = initialize(training, params, mode)
    seqio.save_state(out, state)
    if mean is not None:
        seqio.write_seq(Path(out) / "mean.seq", mean)
    print(
        f"trained on {training.shape[1]} frames: rank={state.rank_train} "
        f"sigma_floor={state.sigma_floor:.6g}"
    )
    return 0


def cmd_separate(args) -> int:
    import numpy as np

    from . import seqio
    from .engine import Mode, process_frame, set_compressive

    cfg = _load_config(args)
    ckpt = args.ckpt or cfg.get("ckpt")
    input_path = args.input or cfg.get("input")
    out_dir = args.out_dir or cfg.get("out_dir")
    if not ckpt or not input_path or not out_dir:
        raise seqio.FormatError("separate requires --ckpt, --input and --out-dir")
    state = seqio.load_state(ckpt)
    mode = Mode(args.mode or cfg.get("mode", state.mode.value))
    if mode is not state.mode:
        raise seqio.FormatError(
            f"checkpoint was trained in mode {state.mode.value!r}, got {mode.value!r}"
        )
    operator_path = args.operator or cfg.get("operator")
    if mode is Mode.COMPRESSIVE and state.operator is None:
        if not operator_path:
            raise seqio.FormatError("compressive mode requires --operator")
        set_compressive(state, seqio.read_seq(operator_path))
    mean_path = Path(ckpt) / "mean.seq"
    mean = seqio.read_seq(mean_path)[:, 0] if mean_path.exists() else None

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sizes = []
    xis = []
    with seqio.SeqReader(input_path) as reader:
        if reader.n != state.ambient_dim:
            raise seqio.FormatError(
                f"input dimension {reader.n} does not match checkpoint "
                f"dimension {state.ambient_dim}"
            )
        s_writer = seqio.SeqWriter(out / "S_hat.seq", state.n_sparse, reader.t)
        l_writer = seqio.SeqWriter(out / "L_hat.seq", state.ambient_dim, reader.t)
        sup_fh = open(out / "supports.csv", "w", encoding="utf-8", newline="\n")
        met_fh = open(out / "metrics.csv", "w", encoding="utf-8", newline="\n")
        sup_fh.write("frame,size,indices\n")
        met_fh.write(
            "frame,phase,support_size,xi,solver_converged,solver_iters,rank\n"
        )
        try:
            # online contract: each frame is fully written out before the
            # next one is read
            for t, frame in enumerate(reader.iter_frames()):
                if mean is not None:
                    frame = frame - mean
                res = process_frame(state, frame)
                s_writer.append(res.s_hat)
                l_writer.append(res.l_hat)
                idx = " ".join(str(int(i)) for i in res.t_hat)
                sup_fh.write(f"{t},{res.t_hat.size},{idx}\n")
                met_fh.write(
                    f"{t},{res.phase.value},{res.t_hat.size},{res.xi!r},"
                    f"{int(res.solver_converged)},{res.solver_iters},"
                    f"{state.basis.shape[1]}\n"
                )
                sizes.append(res.t_hat.size)
                xis.append(res.xi)
        finally:
            sup_fh.close()
            met_fh.close()
            s_writer.close()
            l_writer.close()

    from .figures import save_two_panel

    save_two_panel(
        out / "metrics.png",
        ("support size", np.array(sizes, dtype=float)),
        ("projected noise level", np.array(xis, dtype=float)),
        "frame",
        title="per-frame separation diagnostics",
    )
    print(f"separated {len(sizes)} frames into {out}")
    return 0


_SCENARIOS = {
    "table1-9-large": ("table", "9-large"),
    "table1-27-large": ("table", "27-large"),
    "table1-9-small": ("table", "9-small"),
    "table1-27-small": ("table", "27-small"),
    "lake-like-motion": ("motion", None),
}


def cmd_simulate(args) -> int:
    from . import datagen, seqio

    kind, case = _SCENARIOS[args.scenario]
    if kind == "table":
        data = datagen.build_table_scenario(case, seed=args.seed)
    else:
        data = datagen.build_motion_scenario(seed=args.seed)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seqio.write_seq(out / "M.seq", data.measurements)
    seqio.write_seq(out / "L.seq", data.lowrank)
    seqio.write_seq(out / "S.seq", data.sparse)
    seqio.write_seq(out / "M_train.seq", data.measurements[:, : data.t_train])
    seqio.write_seq(out / "M_stream.seq", data.measurements[:, data.t_train :])
    seqio.write_seq(out / "basis0.seq", data.basis0)
    if data.basis_new.shape[1]:
        seqio.write_seq(out / "basis_new.seq", data.basis_new)
    seqio.write_supports_csv(out / "supports.csv", data.supports)

    manifest = dict(data.config)
    manifest.update(
        {
            "measurements": "M.seq",
            "lowrank": "L.seq",
            "sparse": "S.seq",
            "training": "M_train.seq",
            "stream": "M_stream.seq",
            "basis0": "basis0.seq",
            "supports": "supports.csv",
        }
    )
    if data.basis_new.shape[1]:
        manifest["basis_new"] = "basis_new.seq"
    seqio.write_manifest(out / "manifest.txt", manifest)
    print(f"wrote scenario {args.scenario} to {out}")
    return 0


def cmd_verify(args) -> int:
    import numpy as np

    from . import seqio
    from .linalg import basis_by_energy
    from .metrics import (
        verify_denseness,
        verify_slow_subspace_change,
        verify_support_dynamics,
    )

    frames = seqio.read_seq(args.input)
    report = verify_slow_subspace_change(frames, args.tau, args.b)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seqio.write_csv(
        out / "slowchange.csv",
        ["frame", "ratio"],
        [[args.tau + i, repr(float(v))] for i, v in enumerate(report.per_frame)],
    )
    from .figures import save_series_plot

    save_series_plot(
        out / "slowchange.png",
        {"energy outside previous window basis": report.per_frame},
        "frame",
        "ratio",
        title="slow subspace change",
    )
    if args.supports:
        supports = seqio.read_supports_csv(args.supports)
        basis, _ = basis_by_energy(frames, args.b)
        dense = verify_denseness(basis, supports)
        seqio.write_csv(
            out / "denseness.csv",
            ["frame", "value"],
            [[t, repr(float(v))] for t, v in enumerate(dense.per_frame)],
        )
        frac, adds, dels = verify_support_dynamics(supports, frames.shape[0])
        rows = []
        for t in range(len(supports)):
            rows.append(
                [
                    t,
                    repr(float(frac.per_frame[t])),
                    repr(float(adds.per_frame[t - 1])) if t >= 1 else "",
                    repr(float(dels.per_frame[t - 1])) if t >= 1 else "",
                ]
            )
        seqio.write_csv(
            out / "support_dynamics.csv",
            ["frame", "support_fraction", "addition_fraction", "removal_fraction"],
            rows,
        )
        save_series_plot(
            out / "support_dynamics.png",
            {
                "support fraction": frac.per_frame,
                "additions": np.concatenate([[0.0], adds.per_frame]),
                "removals": np.concatenate([[0.0], dels.per_frame]),
            },
            "frame",
            "fraction",
            title="support dynamics",
        )
    print(f"wrote verification CSVs to {out}")
    return 0


def cmd_bench(args) -> int:
    from .metrics import run_benchmark

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"bench_{args.case}"
    result = run_benchmark(
        args.case,
        realizations=args.realizations,
        seed=args.seed,
        out_csv=out / f"{stem}.csv",
    )
    from .figures import save_series_plot

    save_series_plot(
        out / f"{stem}_nmse.png",
        {"mean per-frame NMSE": result.per_frame_nmse},
        "frame after training",
        "NMSE",
        logy=True,
        title=f"case {args.case}, {args.realizations} realizations",
    )
    print(
        f"case={args.case} realizations={args.realizations} "
        f"nmse={result.nmse:.4e} exact_support_rate={result.exact_support_rate:.3f}"
    )
    return 0


def cmd_ingest(args) -> int:
    from . import seqio

    frames, dims = seqio.ingest_pgm_dir(args.dir)
    seqio.write_seq(args.out, frames)
    print(f"ingested {frames.shape[1]} frames of {dims[0]}x{dims[1]} into {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reprocs",
        description=(
            "Online separation of a vector stream into a sparse component and "
            "a slowly-changing low-dimensional component."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_engine_flags(p):
        p.add_argument("--alpha", type=int, help="subspace update batch size")
        p.add_argument("--kmin", type=int, help="min update steps per change")
        p.add_argument("--kmax", type=int, help="max update steps per change")
        p.add_argument("--q", type=float, help="support threshold scale")
        p.add_argument("--config", help="key=value run configuration file")

    p_train = sub.add_parser("train", help="estimate the initial subspace")
    p_train.add_argument("--input", help="training sequence (.seq)")
    p_train.add_argument("--b", type=float, help="energy percent for the basis")
    p_train.add_argument("--out", help="checkpoint directory")
    p_train.add_argument(
        "--mode", choices=["ppca", "rpca", "compressive"], help="tracking mode"
    )
    p_train.add_argument(
        "--center",
        action="store_true",
        help="subtract the training mean (store it in the checkpoint)",
    )
    add_engine_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sep = sub.add_parser("separate", help="stream frames through a checkpoint")
    p_sep.add_argument("--ckpt", help="checkpoint directory")
    p_sep.add_argument("--input", help="measurement sequence (.seq)")
    p_sep.add_argument("--mode", choices=["ppca", "rpca", "compressive"])
    p_sep.add_argument("--operator", help="measurement operator (.seq), compressive")
    p_sep.add_argument("--out-dir", help="output directory")
    p_sep.add_argument("--config", help="key=value run configuration file")
    p_sep.set_defaults(func=cmd_separate)

    p_sim = sub.add_parser("simulate", help="generate a benchmark scenario")
    p_sim.add_argument("--scenario", choices=sorted(_SCENARIOS), required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out-dir", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_ver = sub.add_parser("verify", help="model-verification CSVs and figures")
    p_ver.add_argument("--input", required=True, help="frame sequence (.seq)")
    p_ver.add_argument("--tau", type=int, default=725, help="window length")
    p_ver.add_argument("--b", type=float, default=95.0, help="energy percent")
    p_ver.add_argument("--supports", help="supports CSV for dynamics/denseness")
    p_ver.add_argument("--out-dir", required=True)
    p_ver.set_defaults(func=cmd_verify)

    p_bench = sub.add_parser("bench", help="Monte-Carlo benchmark table")
    p_bench.add_argument(
        "--case", choices=["9-large", "27-large", "9-small", "27-small"], required=True
    )
    p_bench.add_argument("--realizations", type=int, default=10)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out-dir", required=True)
    p_bench.set_defaults(func=cmd_bench)

    p_ing = sub.add_parser("ingest", help="stack a directory of PGM frames")
    p_ing.add_argument("--dir", required=True)
    p_ing.add_argument("--out", required=True)
    p_ing.set_defaults(func=cmd_ingest)

    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    from .seqio import FormatError

    try:
        return args.func(args) or 0
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (ValueError, OSError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
