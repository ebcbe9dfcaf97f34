"""Run every (mechanism, grid point, repetition) cell of an experiment.

Cells are independent: each builds its own stream, requirements, publisher,
ledger and random source from seeds derived from ``master_seed``, so they
can run in any order or in parallel and the merged table is the same.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from epdp.accountant import audit, write_requirements_csv
from epdp.bench.config import ExperimentConfig, GridPoint, assign_requirements, conservative_bound
from epdp.mechanisms import PUBLISHERS, make_baseline, true_counts
from epdp.metrics import ajsd, amre
from epdp.noise import RandomSource, derive_seed
from epdp.streams import GENERATORS, GridSpec, ingest_csv

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["mechanism", "epsilon", "window", "ratio", "repetition", "seed", "amre", "ajsd", "runtime_ms", "audit_ok"]
SUMMARY_COLUMNS = [
    "mechanism", "epsilon", "window", "ratio", "repetitions",
    "amre_mean", "amre_median", "ajsd_mean", "ajsd_median",
    "ln_amre_mean", "ln_amre_median", "runtime_ms_mean", "audit_ok",
]


@dataclass(frozen=True)
class Cell:
    mechanism: str
    point: GridPoint
    repetition: int


def cells(config: ExperimentConfig) -> list[Cell]:
    return [
        Cell(m, p, r)
        for p in config.grid_points()
        for m in config.mechanisms
        for r in range(config.repetitions)
    ]


def build_stream(config: ExperimentConfig, repetition: int):
    """The data stream for one repetition; shared by every mechanism and grid point."""
    if config.synthetic:
        rng = RandomSource(derive_seed(config.master_seed, "stream", config.dataset, repetition), zero_noise=config.zero_noise)
        return GENERATORS[config.dataset](config.n_users, config.T, rng=rng)
    return ingest_csv(config.dataset, GridSpec() if config.grid else config.domain_size)


def cell_seed(config: ExperimentConfig, cell: Cell) -> int:
    return derive_seed(config.master_seed, cell.mechanism, cell.point.key(), cell.repetition)


def build_publisher(config: ExperimentConfig, cell: Cell, stream):
    req_rng = RandomSource(derive_seed(config.master_seed, "requirements", cell.point.key(), cell.repetition))
    reqs = assign_requirements(config.model_for(cell.point), stream.n_users, req_rng, user_ids=stream.user_ids)
    rng = RandomSource(cell_seed(config, cell), zero_noise=config.zero_noise)
    if cell.mechanism in ("BD", "BA"):
        w, eps = conservative_bound(reqs)
        return make_baseline(
            cell.mechanism, w, eps, stream.n_users, stream.domain_size, rng,
            sensitivity=config.sensitivity, user_ids=stream.user_ids,
        )
    return PUBLISHERS[cell.mechanism](reqs, stream.domain_size, rng, sensitivity=config.sensitivity)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


_stream_cache: dict = {}


def run_cell(config: ExperimentConfig, cell: Cell) -> dict:
    key = (config.dataset, config.n_users, config.T, config.domain_size, config.grid,
           config.master_seed, config.zero_noise, cell.repetition)
    if key not in _stream_cache:
        _stream_cache.clear()
        _stream_cache[key] = build_stream(config, cell.repetition)
    stream = _stream_cache[key]
    pub = build_publisher(config, cell, stream)
    start = time.perf_counter()
    pub.run(stream)
    elapsed = (time.perf_counter() - start) * 1000.0
    violations = audit(pub.ledger)
    if violations:
        log.error("%s %s rep %d: %d budget violations", cell.mechanism, cell.point, cell.repetition, len(violations))
    truth = true_counts(stream)
    releases = pub.releases()
    w, eps = conservative_bound(pub.requirements) if cell.point.epsilon is None else (cell.point.window, cell.point.epsilon)
    if config.save_ledgers:
        name = f"{cell.mechanism}_e{eps}_w{w}_o{_fmt(cell.point.ratio) or 'na'}_r{cell.repetition}"
        stem = os.path.join(config.output_dir, "ledgers", name)
        os.makedirs(os.path.dirname(stem), exist_ok=True)
        pub.ledger.to_csv(stem + "_ledger.csv")
        write_requirements_csv(stem + "_requirements.csv", pub.requirements)
    return {
        "mechanism": cell.mechanism,
        "epsilon": float(eps),
        "window": int(w),
        "ratio": cell.point.ratio,
        "repetition": cell.repetition,
        "seed": cell_seed(config, cell),
        "amre": amre(releases, truth),
        "ajsd": ajsd(releases, truth, skip_empty=not config.synthetic),
        "runtime_ms": round(elapsed, 3) if config.record_timing else 0,
        "audit_ok": not violations,
    }


def _run_chunk(args):
    config, chunk = args
    return [run_cell(config, c) for c in chunk]


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """All result rows, in deterministic cell order."""
    todo = cells(config)
    if jobs <= 1:
        return [run_cell(config, c) for c in todo]
    # one chunk per repetition keeps the per-process stream cache useful
    by_rep: dict[int, list[Cell]] = {}
    for c in todo:
        by_rep.setdefault(c.repetition, []).append(c)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        done = list(pool.map(_run_chunk, [(config, chunk) for chunk in by_rep.values()]))
    rows = {(r["mechanism"], c.point.key(), c.repetition): r for chunk, rs in zip(by_rep.values(), done) for c, r in zip(chunk, rs)}
    return [rows[(c.mechanism, c.point.key(), c.repetition)] for c in todo]


def _ln(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def emit_summary(results: list[dict]) -> list[dict]:
    """Per (mechanism, grid point): mean/median AMRE and AJSD with log columns."""
    if not results:
        raise ValueError("no results to summarize")
    groups: dict[tuple, list[dict]] = {}
    for row in results:
        groups.setdefault((row["mechanism"], row["epsilon"], row["window"], row["ratio"]), []).append(row)
    out = []
    for (mech, eps, w, o), rows in groups.items():
        a = np.array([r["amre"] for r in rows], dtype=np.float64)
        j = np.array([r["ajsd"] for r in rows], dtype=np.float64)
        amre_mean = float(a.mean())
        amre_median = float(np.median(a))
        out.append({
            "mechanism": mech, "epsilon": eps, "window": w, "ratio": o,
            "repetitions": len(rows),
            "amre_mean": amre_mean, "amre_median": amre_median,
            "ajsd_mean": float(j.mean()), "ajsd_median": float(np.median(j)),
            "ln_amre_mean": _ln(amre_mean), "ln_amre_median": _ln(amre_median),
            "runtime_ms_mean": float(np.mean([r["runtime_ms"] for r in rows])),
            "audit_ok": all(r["audit_ok"] for r in rows),
        })
    return out


def write_rows(path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(columns)
        for r in rows:
            out.writerow([_fmt(r[c]) for c in columns])


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_and_write(config: ExperimentConfig, jobs: int = 1) -> tuple[list[dict], list[dict]]:
    os.makedirs(config.output_dir, exist_ok=True)
    results = run_experiment(config, jobs)
    summary = emit_summary(results)
    write_rows(os.path.join(config.output_dir, "results.csv"), results, RESULT_COLUMNS)
    write_rows(os.path.join(config.output_dir, "summary.csv"), summary, SUMMARY_COLUMNS)
    return results, summary
