"""Seed-parallel experiment runner with append-per-seed CSV records.

Record files are ``<out>/<experiment>.csv``: a header row whose columns carry
units in parentheses, then one row per (config digest, seed).  Rows are
appended and fsynced as seeds finish, so a crash loses at most the seeds in
flight; when the pool drains the body is rewritten sorted by digest and seed,
which makes it independent of worker count and completion order.  Wall-clock
timings go to a separate ``<experiment>.timing.csv``.
"""
from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, field

from .config import ExperimentConfig
from .experiments import EXPERIMENTS, BudgetExceeded

__all__ = ["ExperimentRecord", "RunResult", "run", "read_records", "format_value", "record_path"]


@dataclass(frozen=True)
class ExperimentRecord:
    experiment: str
    digest: str
    seed: int
    observables: dict
    timing: float = math.nan


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list
    summary: dict
    truncated: bool
    paths: dict = field(default_factory=dict)
    skipped: int = 0


def format_value(v):
    """Deterministic text for a scalar: integers as is, floats by ``repr``."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def record_path(out, experiment):
    return os.path.join(out, f"{experiment}.csv")


def _header(cfg):
    obs = EXPERIMENTS[cfg.experiment].observables(cfg)
    return "digest,seed," + ",".join(f"{n}({u})" for n, u in obs) + "\n"


def _line(rec: ExperimentRecord, names):
    return ",".join([rec.digest, str(rec.seed)] + [format_value(rec.observables[n]) for n in names]) + "\n"


def _strip_unit(col):
    return col.split("(", 1)[0]


def read_records(path):
    """Parse a record file into ``(columns, rows)``; a torn final line (no newline) is dropped."""
    with open(path) as fh:
        text = fh.read()
    lines = text.split("\n")
    if not lines or not lines[0]:
        raise ValueError(f"{path}: empty record file")
    header = lines[0].split(",")
    body = lines[1:-1] if not text.endswith("\n") and len(lines) > 1 else lines[1:]
    rows = []
    for ln in body:
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != len(header):
            continue
        rows.append(dict(zip(header, parts)))
    return header, rows


def _append(path, text):
    fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
    try:
        os.write(fd, text.encode())
        os.fsync(fd)
    finally:
        os.close(fd)


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _run_one(cfg, ctx, seed):
    t0 = time.perf_counter()
    try:
        obs = EXPERIMENTS[cfg.experiment].run_seed(cfg, ctx, seed)
    except BudgetExceeded as exc:
        return seed, None, str(exc), time.perf_counter() - t0
    return seed, obs, None, time.perf_counter() - t0


def _rows_to_floats(rows, names):
    return [{n: float(r[n]) for n in names} for r in rows]


def summarize_file(cfg, path):
    """Summary of the records of ``cfg``'s digest in ``path`` (seeds sorted)."""
    header, rows = read_records(path)
    names = [n for n, _ in EXPERIMENTS[cfg.experiment].observables(cfg)]
    cols = {_strip_unit(c): c for c in header}
    missing = [n for n in ["digest", "seed"] + names if n not in cols]
    if missing:
        raise ValueError(f"{path}: missing columns {', '.join(missing)}")
    mine = sorted((r for r in rows if r["digest"] == cfg.digest), key=lambda r: int(r["seed"]))
    floats = [{n: float(r[cols[n]]) for n in names} for r in mine]
    if not floats:
        raise ValueError(f"{path}: no records for digest {cfg.digest}")
    return EXPERIMENTS[cfg.experiment].summarize(cfg, floats), [int(r["seed"]) for r in mine]


def run(cfg: ExperimentConfig, log=None):
    """Run every seed of ``cfg`` not yet recorded under its digest, then write the sorted body and summary.

    Returns a :class:`RunResult`; ``truncated`` is set when the wall-clock
    budget stopped submission or a seed exceeded the cell budget.
    """
    exp = EXPERIMENTS[cfg.experiment]
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    path = record_path(out, cfg.experiment)
    tpath = os.path.join(out, f"{cfg.experiment}.timing.csv")
    header = _header(cfg)
    names = [n for n, _ in exp.observables(cfg)]
    done = set()
    if os.path.exists(path):
        with open(path) as fh:
            first = fh.readline()
        if first != header:
            raise ValueError(f"{path}: header does not match the experiment's columns")
        _, rows = read_records(path)
        done = {(r["digest"], int(r["seed"])) for r in rows}
        # rewrite without a torn final line before appending
        _atomic_write(path, header + "".join(",".join(r[c] for c in first.rstrip("\n").split(",")) + "\n"
                                             for r in rows))
    else:
        _atomic_write(path, header)
    if not os.path.exists(tpath):
        _atomic_write(tpath, "digest,seed,wall(s)\n")
    _atomic_write(os.path.join(out, f"{cfg.experiment}.{cfg.digest}.config"), cfg.canonical(include_run=True))
    todo = [s for s in cfg.seeds if (cfg.digest, s) not in done]
    skipped = len(cfg.seeds) - len(todo)
    ctx = exp.prepare(cfg) if (exp.prepare and todo) else None
    records = []
    truncated = False
    notes = []
    start = time.monotonic()
    budget = cfg["budget_seconds"]

    def accept(result):
        nonlocal truncated
        seed, obs, err, wall = result
        if obs is None:
            truncated = True
            notes.append(f"seed {seed}: {err}")
            return
        rec = ExperimentRecord(cfg.experiment, cfg.digest, seed, obs, wall)
        _append(path, _line(rec, names))
        _append(tpath, f"{cfg.digest},{seed},{wall!r}\n")
        records.append(rec)
        if log:
            log(f"seed {seed} done in {wall:.2f}s")

    if cfg["workers"] <= 1:
        for s in todo:
            if time.monotonic() - start > budget:
                truncated = True
                notes.append("wall-clock budget reached")
                break
            accept(_run_one(cfg, ctx, s))
    else:
        with ProcessPoolExecutor(cfg["workers"]) as pool:
            pending = set()
            queue = list(todo)
            while queue or pending:
                while queue and len(pending) < cfg["workers"]:
                    if time.monotonic() - start > budget:
                        truncated = True
                        notes.append("wall-clock budget reached")
                        queue.clear()
                        break
                    pending.add(pool.submit(_run_one, cfg, ctx, queue.pop(0)))
                if not pending:
                    break
                finished, pending = wait(pending, return_when=FIRST_COMPLETED)
                for f in finished:
                    accept(f.result())
    # sorted body: independent of completion order and worker count
    hdr, rows = read_records(path)
    rows.sort(key=lambda r: (r["digest"], int(r["seed"])))
    _atomic_write(path, header + "".join(",".join(r[c] for c in hdr) + "\n" for r in rows))
    summary = {}
    try:
        summary, seeds = summarize_file(cfg, path)
        summary = {"experiment": cfg.experiment, "digest": cfg.digest, "seeds": seeds, "truncated": truncated,
                   "notes": notes, **summary}
        _atomic_write(os.path.join(out, f"{cfg.experiment}.{cfg.digest}.summary.json"),
                      json.dumps(_jsonable(summary), indent=1, sort_keys=True) + "\n")
    except ValueError as exc:
        notes.append(str(exc))
        summary = {"experiment": cfg.experiment, "digest": cfg.digest, "truncated": truncated, "notes": notes}
    return RunResult(cfg, records, summary, truncated, {"records": path, "timing": tpath}, skipped)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "tolist"):
        return _jsonable(x.tolist())
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x
