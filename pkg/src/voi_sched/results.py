"""CSV and metadata writers.

Every float goes through ``fmt`` (17 significant digits), rows are written in
a fixed order and the metadata carries no timestamps, so identical inputs give
byte-identical files.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

import numpy as np

TRAJECTORY_HEADER = ("experiment", "policy", "replication", "slot", "e2", "decision_packet", "delivered")
SUMMARY_HEADER = ("experiment", "policy", "mean_cost", "se", "n_reps")
VERIFY_HEADER = ("experiment", "check", "instance", "metric", "value", "tolerance", "passed")


class OutputError(OSError):
    pass


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return "" if v is None else str(v)


@dataclass
class Trajectories:
    """Per-slot rows of a batch of replications; ``decisions[r, t-1] = -1`` when idle."""

    policy: str
    e2: np.ndarray
    decisions: np.ndarray
    delivered: np.ndarray
    first_replication: int = 0
    filename: str = "trajectories.csv"

    def rows(self, experiment: str) -> Iterable[tuple]:
        n, horizon = self.e2.shape
        for i in range(n):
            rep = self.first_replication + i
            for slot in range(1, horizon + 1):
                if slot < horizon:
                    dec, ok = int(self.decisions[i, slot - 1]), int(self.delivered[i, slot - 1])
                else:
                    dec, ok = -1, 0
                yield (experiment, self.policy, rep, slot, self.e2[i, slot - 1], dec, ok)


@dataclass
class ResultBundle:
    experiment: str
    trajectories: list[Trajectories] = field(default_factory=list)
    summary: list[tuple] = field(default_factory=list)  # SUMMARY_HEADER rows
    tables: dict[str, tuple[Sequence[str], list[tuple]]] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)
    passed: Optional[bool] = None  # verification outcome, None for simulations


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(v) for v in row])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_metadata(path, metadata: dict[str, Any]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def emit_results(bundle: ResultBundle, out_dir) -> list[str]:
    """Write every file of ``bundle`` into ``out_dir``; returns the paths written."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc}") from exc
    written = []

    def path(name):
        full = os.path.join(out_dir, name)
        written.append(full)
        return full

    by_file: dict[str, list[Trajectories]] = {}
    for tr in bundle.trajectories:
        by_file.setdefault(tr.filename, []).append(tr)
    for name, blocks in by_file.items():
        write_csv(path(name), TRAJECTORY_HEADER, (r for b in blocks for r in b.rows(bundle.experiment)))
    if bundle.summary or bundle.experiment in ("single", "compare", "multiproc", "spsa"):
        write_csv(path("summary.csv"), SUMMARY_HEADER, bundle.summary)
    for name, (header, rows) in bundle.tables.items():
        write_csv(path(name), header, rows)
    write_metadata(path("metadata.json"), bundle.metadata)
    return written
