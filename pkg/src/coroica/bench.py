"""Benchmark sweeps: generator grid x methods x replicates, scored into a
long-format table.

Each (generator cell, replicate) pair is one unit of work with its own
derived seed, so results do not depend on scheduling. Workers return rows;
the parent process is the only writer. Rows already present with status
``ok`` are skipped on rerun, and the final file is rewritten in canonical
order so reruns and parallel runs produce identical bytes.
"""

from __future__ import annotations

import csv
import math
import statistics
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from coroica.config import BLOCKVAR_AXES, GARCH_AXES, BenchSection, MethodConfig
from coroica.covstats import equal_blocks
from coroica.fileio import fmt_float, read_rows_csv, write_json, write_rows_csv
from coroica.metrics import md_index, mcis
from coroica.rng import derive_seed
from coroica.separation import fit, random_unmixing
from coroica.simgen import generate

RESULT_HEADER = ["generator", "cell", "method", "replicate", "draw", "seed", "metric", "value", "status", "message"]
SUMMARY_HEADER = ["generator", "cell", "method", "metric", "count", "median"]
RESULTS_FILE = "results.csv"
SUMMARY_FILE = "summary.csv"
ERRORS_FILE = "errors.json"


def cell_key(gen_cfg) -> str:
    axes = BLOCKVAR_AXES if gen_cfg.kind == "blockvar" else GARCH_AXES
    return ";".join(f"{a}={getattr(gen_cfg, a)}" for a in axes)


def plan(section: BenchSection) -> list:
    """All (generator cell, method) pairs in canonical order."""
    return [(g, m) for g in section.generator.cells() for m in section.methods]


def group_scores(S_hat: np.ndarray, labels: np.ndarray, length: int) -> float:
    """MCIS averaged over groups, each group cut into equal blocks of ``length``."""
    values = []
    for g in dict.fromkeys(labels.tolist()):
        idx = np.flatnonzero(labels == g)
        blocks = equal_blocks(idx.size, length)
        values.append(mcis(S_hat[:, idx], blocks))
    return float(np.mean(values))


def _score(V, inst, metrics, score_length) -> list:
    out = []
    for metric in metrics:
        if metric == "md":
            out.append(("md", md_index(V, inst.A).value))
        else:
            if score_length is None:
                raise ValueError("mcis needs score_partition_length (or a method partition_length)")
            out.append(("mcis", group_scores(V @ inst.X, inst.group_labels, score_length)))
    return out


@dataclass(frozen=True)
class Unit:
    cell_index: int
    gen_cfg: object
    replicate: int
    methods: tuple
    metrics: tuple
    score_length: object
    seed: int


def _method_rows(unit: Unit, key: str, inst, m: MethodConfig, inst_seed: int) -> list:
    base = (unit.gen_cfg.kind, key, m.name, str(unit.replicate))
    score_length = unit.score_length or m.first_length()
    rows = []
    if m.method == "random":
        for draw in range(m.n_random):
            model = random_unmixing(inst.X.shape[0], derive_seed(inst_seed, "random", draw))
            for metric, value in _score(model.V, inst, unit.metrics, score_length):
                rows.append(base + (str(draw), str(inst_seed), metric, fmt_float(value), "ok", ""))
        return rows
    model = fit(inst.X, inst.group_labels, m.separation_config(inst_seed))
    for metric, value in _score(model.V, inst, unit.metrics, score_length):
        rows.append(base + ("0", str(inst_seed), metric, fmt_float(value), "ok", ""))
    return rows


def run_unit(unit: Unit) -> list:
    key = cell_key(unit.gen_cfg)
    inst_seed = derive_seed(unit.seed, "bench", unit.gen_cfg.kind, key, unit.replicate)
    try:
        inst = generate(unit.gen_cfg.spec(inst_seed))
    except Exception as exc:  # recorded, sweep continues
        return [_error_row(unit, key, m, inst_seed, f"generator: {exc}") for m in unit.methods]
    rows = []
    for m in unit.methods:
        try:
            rows.extend(_method_rows(unit, key, inst, m, inst_seed))
        except Exception as exc:
            rows.append(_error_row(unit, key, m, inst_seed, f"{type(exc).__name__}: {exc}"))
    return rows


def _error_row(unit, key, m, inst_seed, message) -> tuple:
    return (unit.gen_cfg.kind, key, m.name, str(unit.replicate), "0", str(inst_seed), "", "", "error", message)


def _sort_key(row, cell_order, method_order, metric_order):
    # rows from cells or methods no longer in the config sort last
    return (
        cell_order.get(row[1], math.inf),
        row[1],
        method_order.get(row[2], math.inf),
        row[2],
        int(row[3]),
        int(row[4]),
        metric_order.get(row[6], math.inf),
    )


def _summarize(rows) -> list:
    groups = {}
    for r in rows:
        if r[8] == "ok":
            groups.setdefault((r[0], r[1], r[2], r[6]), []).append(float(r[7]))
    return [
        list(k) + [str(len(v)), fmt_float(statistics.median(v))] for k, v in groups.items()
    ]


def _complete(rows, section: BenchSection) -> list:
    """Drop (cell, method, replicate) groups that an interrupted run left partial."""
    expected = {
        m.name: (m.n_random if m.method == "random" else 1) * len(section.metrics) for m in section.methods
    }
    counts = {}
    for r in rows:
        counts[(r[1], r[2], r[3])] = counts.get((r[1], r[2], r[3]), 0) + 1
    return [r for r in rows if counts[(r[1], r[2], r[3])] == expected.get(r[2], -1)]


@dataclass
class BenchReport:
    rows: list
    summary: list
    errors: list
    skipped: int
    ran: int


def run_bench(section: BenchSection, out_dir, seed: int = 0, jobs: int = 1, progress=None) -> BenchReport:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / RESULTS_FILE
    cells = section.generator.cells()
    cell_order = {cell_key(g): i for i, g in enumerate(cells)}
    method_order = {m.name: i for i, m in enumerate(section.methods)}
    metric_order = {m: i for i, m in enumerate(section.metrics)}

    kept = []
    if results_path.exists():
        header, old = read_rows_csv(results_path)
        if header != RESULT_HEADER:
            raise ValueError(f"{results_path} has an unexpected header; refusing to merge")
        kept = [tuple(r) for r in old if len(r) == len(RESULT_HEADER) and r[8] == "ok"]
    kept = _complete(kept, section)
    done = {(r[1], r[2], int(r[3])) for r in kept}

    units = []
    skipped = 0
    for ci, g in enumerate(cells):
        key = cell_key(g)
        for rep in range(section.replicates):
            todo = tuple(m for m in section.methods if (key, m.name, rep) not in done)
            skipped += len(section.methods) - len(todo)
            if todo:
                units.append(
                    Unit(ci, g, rep, todo, tuple(section.metrics), section.score_partition_length, int(seed))
                )

    rows = list(kept)
    sort = lambda rs: sorted(rs, key=lambda r: _sort_key(r, cell_order, method_order, metric_order))
    write_rows_csv(results_path, RESULT_HEADER, sort(rows))
    # single writer: rows are appended as units finish so an interrupted
    # sweep can resume, then the file is rewritten in canonical order
    with open(results_path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")

        def collect(new_rows):
            rows.extend(new_rows)
            writer.writerows(new_rows)
            fh.flush()
            if progress:
                progress(len(rows))

        if jobs <= 1 or len(units) <= 1:
            for u in units:
                collect(run_unit(u))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(run_unit, u) for u in units]
                for fut in as_completed(futures):
                    collect(fut.result())

    rows = sort(rows)
    write_rows_csv(results_path, RESULT_HEADER, rows)
    summary = _summarize(rows)
    summary.sort(
        key=lambda r: (
            cell_order.get(r[1], math.inf),
            r[1],
            method_order.get(r[2], math.inf),
            r[2],
            metric_order.get(r[3], math.inf),
        )
    )
    write_rows_csv(out_dir / SUMMARY_FILE, SUMMARY_HEADER, summary)

    errors = [
        {"generator": r[0], "cell": r[1], "method": r[2], "replicate": int(r[3]), "seed": r[5], "message": r[9]}
        for r in rows
        if r[8] == "error"
    ]
    err_path = out_dir / ERRORS_FILE
    if errors:
        write_json(err_path, {"errors": errors, "count": len(errors)})
    elif err_path.exists():
        err_path.unlink()
    return BenchReport(rows, summary, errors, skipped, len(units))
