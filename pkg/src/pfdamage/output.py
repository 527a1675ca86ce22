"""CSV and plain-text writers.  Floats use 17 significant digits so reruns
compare byte for byte."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .diagnostics import LEDGER_COLUMNS


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def trajectory_columns(grid) -> list[str]:
    cols = ["k", "t", "node"] + ["x", "y"][: grid.dim] + ["c"]
    cols += [f"u{i + 1}" for i in range(grid.dim)] + ["z", "mu", "xi"]
    return cols


def write_trajectory(path, traj, grid, stride: int = 1) -> Path:
    path = Path(path)
    M = len(traj.states) - 1
    keep = sorted(set(range(0, M + 1, stride)) | {M})
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trajectory_columns(grid))
        for k in keep:
            s = traj.states[k]
            u = np.atleast_2d(s.u)
            for i in range(grid.num_nodes):
                row = [k, s.t, i] + [grid.x[d, i] for d in range(grid.dim)] + [s.c[i]]
                row += [u[d, i] for d in range(grid.dim)] + [s.z[i], traj.mu[k][i], traj.xi[k][i]]
                w.writerow([fmt(v) for v in row])
    return path


def write_ledger(path, ledger) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for row in ledger.table():
            w.writerow([fmt(row[c]) for c in LEDGER_COLUMNS])
    return path


def write_table(path, rows: list[dict], columns=None) -> Path:
    path = Path(path)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_summary(path, summary: dict, failures=(), assumptions=None) -> Path:
    path = Path(path)
    lines = [f"{k} = {fmt(v)}" for k, v in summary.items()]
    if assumptions is not None:
        lines.append("")
        lines.append("[assumptions]")
        lines += assumptions.lines()
    lines.append("")
    lines.append("[certification]")
    lines += list(failures) or ["all checks passed"]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_run(out_dir, outcome, grid) -> list[Path]:
    out = Path(out_dir)
    files = []
    traj = outcome.trajectory
    if traj is not None:
        files.append(write_trajectory(out / "trajectory.csv", traj, grid, outcome.config.stride))
        if traj.ledger is not None:
            files.append(write_ledger(out / "ledger.csv", traj.ledger))
    files.append(write_summary(out / "summary.txt", outcome.summary, outcome.failures,
                               outcome.assumptions))
    return files
