"""Command line harness: ``coroica simulate|fit|bench|climate``.

All commands read one YAML/JSON config (``--config``), write into ``--out``
and are deterministic given config, inputs and ``--seed`` (which overrides
the config's top-level ``seed``).

Exit codes: 0 success, 1 some bench cells errored (see ``errors.json``),
2 invalid config or arguments, 3 unreadable or malformed input files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from coroica.bench import plan, run_bench
from coroica.causal import ECS_LIKELY_BAND, IrregularSeries, climate_pipeline
from coroica.config import U64_MAX, ConfigError, load_config
from coroica.covstats import equal_blocks
from coroica.fileio import (
    CsvFormatError,
    fmt_float,
    read_matrix_csv,
    read_series_csv,
    read_signal_csv,
    write_json,
    write_matrix_csv,
    write_rows_csv,
    write_signal_csv,
)
from coroica.metrics import md_index, mcis
from coroica.rng import derive_seed
from coroica.separation import fit, random_unmixing
from coroica.simgen import generate

EXIT_OK, EXIT_CELLS, EXIT_CONFIG, EXIT_INPUT = 0, 1, 2, 3
SCORE_HEADER = ["method", "seed", "draw", "scope", "group", "metric", "value"]
ECS_HEADER = ["lag", "method", "alpha", "beta", "ecs", "status"]


class UsageError(Exception):
    pass


def _need(section, name):
    if section is None:
        raise UsageError(f"config has no '{name}' section")
    return section


def _seed(args, cfg) -> int:
    return cfg.seed if args.seed is None else args.seed


def _say(msg: str) -> None:
    print(msg, flush=True)


def cmd_simulate(args, cfg) -> int:
    gen = _need(cfg.simulate, "simulate")
    seed = _seed(args, cfg)
    inst = generate(gen.spec(seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    subset = inst.subset_labels()
    write_signal_csv(out / "X.csv", inst.X, inst.group_labels)
    write_signal_csv(out / "S.csv", inst.S, inst.group_labels, [f"s{i}" for i in range(inst.S.shape[0])])
    write_signal_csv(out / "H.csv", inst.H, inst.group_labels, [f"h{i}" for i in range(inst.H.shape[0])])
    write_matrix_csv(out / "A.csv", inst.A)
    write_rows_csv(out / "groups.csv", ["group", "subset"], zip(inst.group_labels.tolist(), subset.tolist()))
    d, n = inst.X.shape
    manifest = {
        "spec": inst.spec_dict(),
        "files": {
            "X.csv": {"rows": n, "channels": d, "group_column": True},
            "S.csv": {"rows": n, "channels": d, "group_column": True},
            "H.csv": {"rows": n, "channels": d, "group_column": True},
            "A.csv": {"rows": d, "cols": d},
            "groups.csv": {"rows": n, "columns": ["group", "subset"]},
        },
    }
    write_json(out / "manifest.json", manifest)
    for name, info in manifest["files"].items():
        _say(f"{out / name}: {info}")
    return EXIT_OK


def _mcis_rows(V, X, labels, train, length, base) -> list:
    rows = []
    S_hat = V @ X
    for g in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == g)
        blocks = equal_blocks(idx.size, length)
        scope = "in_sample" if g in train else "out_of_sample"
        value = mcis(S_hat[:, idx], blocks) if len(blocks) >= 2 else float("nan")
        rows.append(base + [scope, str(g), "mcis", fmt_float(value)])
    return rows


def cmd_fit(args, cfg) -> int:
    sec = _need(cfg.fit, "fit")
    if not args.data:
        raise UsageError("fit needs --data X.csv")
    X, labels, _ = read_signal_csv(args.data)
    A = read_matrix_csv(args.truth) if args.truth else None
    if A is not None and A.shape[0] != X.shape[0]:
        raise CsvFormatError(f"{args.truth}: {A.shape[0]} x {A.shape[0]} mixing for {X.shape[0]} channels")
    labels = np.zeros(X.shape[1], dtype=np.int64) if labels is None else labels
    all_groups = sorted(set(labels.tolist()))
    train = set(all_groups if sec.train_groups is None else sec.train_groups)
    missing = train - set(all_groups)
    if missing:
        raise UsageError(f"train_groups {sorted(missing)} do not occur in {args.data}")
    mask = np.isin(labels, sorted(train))
    m = sec.method
    length = sec.score_partition_length or m.first_length()
    if length is None:
        raise UsageError("fit.score_partition_length is required for methods without partition_length")
    seed = _seed(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    if m.method == "random":
        Vs = []
        for draw in range(m.n_random):
            V = random_unmixing(X.shape[0], derive_seed(seed, "random", draw)).V
            Vs.append(V)
            base = [m.name, str(seed), str(draw)]
            if A is not None:
                rows.append(base + ["all", "", "md", fmt_float(md_index(V, A).value)])
            rows.extend(_mcis_rows(V, X, labels, train, length, base))
        write_matrix_csv(out / "V.csv", np.vstack(Vs))
        diag = {"draws": m.n_random}
    else:
        model = fit(X[:, mask], labels[mask], m.separation_config(seed))
        V = model.V
        base = [m.name, str(seed), "0"]
        if A is not None:
            rows.append(base + ["all", "", "md", fmt_float(md_index(V, A).value)])
        rows.extend(_mcis_rows(V, X, labels, train, length, base))
        write_matrix_csv(out / "V.csv", V)
        r = model.diagnostics
        diag = {} if r is None else {"converged": r.converged, "iterations": r.iterations, "final_loss": r.final_loss}
    write_rows_csv(out / "scores.csv", SCORE_HEADER, rows)
    write_json(
        out / "model.json",
        {"method": m.model_dump(), "seed": seed, "train_groups": sorted(train), "diagnostics": diag},
    )
    _say(f"wrote {out / 'V.csv'} and {len(rows)} score rows to {out / 'scores.csv'}")
    for row in rows[: min(len(rows), 12)]:
        _say("  " + " ".join(f"{k}={v}" for k, v in zip(SCORE_HEADER, row) if v != ""))
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    sec = _need(cfg.bench, "bench")
    seed = _seed(args, cfg)
    n_cells = len(plan(sec))
    _say(f"bench: {n_cells} cells x {sec.replicates} replicates, jobs={args.jobs}")
    report = run_bench(sec, args.out, seed=seed, jobs=args.jobs)
    _say(f"ran {report.ran} units, skipped {report.skipped} finished (cell, replicate) pairs")
    for r in report.summary:
        _say(f"  {r[1]:<40} {r[2]:<24} {r[3]:<5} n={r[4]:<4} median={float(r[5]):.4f}")
    if report.errors:
        _say(f"{len(report.errors)} errored rows; see {Path(args.out) / 'errors.json'}")
        return EXIT_CELLS
    return EXIT_OK


def _series(path) -> IrregularSeries:
    ages, values = read_series_csv(path)
    return IrregularSeries.from_ages(ages, values)


def cmd_climate(args, cfg) -> int:
    sec = _need(cfg.climate, "climate")
    if not (args.co2 and args.temp):
        raise UsageError("climate needs --co2 and --temp")
    co2, temp = _series(args.co2), _series(args.temp)
    seed = _seed(args, cfg)
    lags = sec.lag_list()
    rows, notes = [], []
    for m in sec.methods:
        fits = climate_pipeline(co2, temp, lags, m.separation_config(seed), sec.step, sec.criterion, sec.spline)
        for f in fits:
            rows.append([str(f.lag_order), m.name, fmt_float(f.alpha), fmt_float(f.beta), fmt_float(f.ecs), f.status])
            if f.message:
                notes.append({"lag": f.lag_order, "method": m.name, "status": f.status, "message": f.message})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_rows_csv(out / "ecs.csv", ECS_HEADER, rows)
    lo, hi = ECS_LIKELY_BAND
    lines = []
    for m in sec.methods:
        ok = [float(r[4]) for r in rows if r[1] == m.name and r[5] == "ok"]
        inside = sum(lo <= v <= hi for v in ok)
        lines.append(f"{m.name}: {inside} of {len(ok)} identified lags inside [{lo}, {hi}] (of {len(lags)} lags)")
    write_json(out / "summary.json", {"band": [lo, hi], "summary": lines, "notes": notes})
    for line in lines:
        _say(line)
    return EXIT_OK


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coroica", description="confounding-robust ICA benchmarks")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML/JSON run config")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=_u64, default=None, help="overrides the config seed")
    common.add_argument("--jobs", type=_positive, default=1, help="worker processes (bench)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="draw a synthetic data set")
    p_fit = sub.add_parser("fit", parents=[common], help="fit one method and score it")
    p_fit.add_argument("--data", help="signal CSV (as written by simulate)")
    p_fit.add_argument("--truth", help="true mixing matrix CSV, enables MD")
    sub.add_parser("bench", parents=[common], help="run a benchmark sweep")
    p_cl = sub.add_parser("climate", parents=[common], help="ECS lag sweep on ice-core series")
    p_cl.add_argument("--co2", help="two-column CSV: age (years BP), CO2")
    p_cl.add_argument("--temp", help="two-column CSV: age (years BP), temperature")
    return parser


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "bench": cmd_bench, "climate": cmd_climate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CsvFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
