"""Metrics rows and their CSV / JSON serialisation.

CSV columns (fixed order)::

    run_id, phase, meta_iteration, adaptation_step, task_id,
    episode_return, avg_queue, wall_ms

``phase`` is ``train`` (one row per meta-iteration, averaged over the
meta-batch, ``adaptation_step`` = -1) or ``test`` (one row per evaluation
episode).  ``avg_queue`` is empty for navigation.  ``wall_ms`` is 0 unless
wall-clock recording is switched on, which keeps reruns byte-identical.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import astuple, dataclass, fields


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    phase: str
    meta_iteration: int
    adaptation_step: int
    task_id: int
    episode_return: float
    avg_queue: float | None
    wall_ms: int = 0


COLUMNS = tuple(f.name for f in fields(MetricsRecord))


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow([_cell(v) for v in astuple(r)])
    return buf.getvalue()


def write_csv(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(records))


def read_csv(path) -> list[MetricsRecord]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(MetricsRecord(
                run_id=row["run_id"], phase=row["phase"],
                meta_iteration=int(row["meta_iteration"]),
                adaptation_step=int(row["adaptation_step"]),
                task_id=int(row["task_id"]),
                episode_return=float(row["episode_return"]),
                avg_queue=float(row["avg_queue"]) if row["avg_queue"] else None,
                wall_ms=int(row["wall_ms"]),
            ))
    return out


def _mean_std(xs):
    n = len(xs)
    m = sum(xs) / n
    sd = math.sqrt(sum((x - m) ** 2 for x in xs) / (n - 1)) if n > 1 else 0.0
    return m, sd


def summarize_test(records) -> list[dict]:
    """Mean and sample std over tasks, per adaptation step."""
    by_step = defaultdict(list)
    for r in records:
        if r.phase == "test":
            by_step[r.adaptation_step].append(r)
    out = []
    for k in sorted(by_step):
        rows = by_step[k]
        m, sd = _mean_std([r.episode_return for r in rows])
        entry = {"adaptation_step": k, "n_tasks": len(rows), "return_mean": m, "return_std": sd}
        qs = [r.avg_queue for r in rows if r.avg_queue is not None]
        if qs:
            entry["avg_queue_mean"], entry["avg_queue_std"] = _mean_std(qs)
        out.append(entry)
    return out
