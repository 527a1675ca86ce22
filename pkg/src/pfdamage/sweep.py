"""Refinement sweeps along the time step or the regularization weight."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import diagnostics as dg
from .config import RunConfig
from .grid import build_grid

MONITORS = ("sup_grad_c", "sup_v", "sup_grad_z_p", "dissipation", "sup_sqrt_delta_h2")
DEFAULT_FACTOR = {"tau": 2.0, "delta": 10.0}
BOUND_FACTOR = 2.0
ERROR_DECREASE = 1.5
FLOOR = 1e-12


class SweepError(ValueError):
    pass


@dataclass
class SweepReport:
    axis: str
    rows: list
    checks: list = field(default_factory=list)  # (name, passed, detail)
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(ok for _, ok, _ in self.checks)


def level_configs(cfg: RunConfig, axis: str, levels: int, factor: float | None = None) -> list[RunConfig]:
    if axis not in DEFAULT_FACTOR:
        raise SweepError(f"sweep axis must be 'tau' or 'delta', got {axis!r}")
    if levels < 3:
        raise SweepError(f"a sweep needs at least 3 levels, got {levels}")
    factor = DEFAULT_FACTOR[axis] if factor is None else factor
    if not factor > 1:
        raise SweepError("refinement factor must exceed 1")
    base = getattr(cfg.stepper, axis)
    if not base > 0:
        raise SweepError(f"{axis} must be positive to refine it")
    return [cfg.with_stepper(**{axis: base / factor**j}) for j in range(levels)]


def _run_level(cfg: RunConfig) -> dict:
    from .runner import execute

    outcome = execute(cfg, write=False)
    grid = build_grid(cfg.grid)
    row = {"tau": cfg.stepper.tau, "delta": cfg.stepper.delta, "passed": outcome.passed,
           "error": outcome.error}
    traj = outcome.trajectory
    if traj is not None and outcome.error is None:
        row.update(dg.monitors(traj, grid, cfg.material, cfg.stepper))
        row["worst_slack"] = traj.ledger.worst_slack
        row["e4_total"] = traj.ledger.rows[-1]["e4"] if traj.ledger.rows else 0.0
    return row


def assess(axis: str, rows: list) -> list:
    checks = []
    for j, r in enumerate(rows):
        checks.append((f"level {j} certified", bool(r["passed"]), r.get("error") or ""))
    if not all(r["passed"] and r.get("error") is None for r in rows):
        return checks
    for key in MONITORS:
        ref = rows[0][key]
        worst = max(r[key] for r in rows)
        ok = worst <= BOUND_FACTOR * ref + FLOOR
        checks.append((f"{key} bounded", ok, f"max {worst:.6g} vs first level {ref:.6g}"))
    if axis == "tau":
        for j in range(1, len(rows)):
            a, b = rows[j - 1]["error_integral"], rows[j]["error_integral"]
            ratio = a / b if b > 0 else float("inf")
            ok = b <= FLOOR or ratio >= ERROR_DECREASE
            checks.append((f"error integral decrease {j - 1}->{j}", ok, f"factor {ratio:.4g}"))
    else:
        ref = rows[0]["sqrt_delta_cdot_l2"]
        worst = max(r["sqrt_delta_cdot_l2"] for r in rows)
        checks.append(("sqrt_delta_cdot_l2 bounded", worst <= BOUND_FACTOR * ref + FLOOR,
                       f"max {worst:.6g} vs first level {ref:.6g}"))
        for j in range(1, len(rows)):
            a, b = rows[j - 1]["sup_delta_h2_form"], rows[j]["sup_delta_h2_form"]
            ok = b < a or (a <= FLOOR and b <= FLOOR)
            checks.append((f"delta*H2 form decrease {j - 1}->{j}", ok, f"{a:.6g} -> {b:.6g}"))
    return checks


def run_sweep(cfg: RunConfig, axis: str, levels: int = 3, factor: float | None = None,
              out_dir=None, jobs: int = 1, figures: bool = True) -> SweepReport:
    """Rerun the configuration on refined levels and check boundedness of
    the a priori monitors and decay of the error integrals (tau axis) or of
    the second-gradient energy (delta axis)."""
    configs = level_configs(cfg, axis, levels, factor)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_level, configs))
    else:
        rows = [_run_level(c) for c in configs]
    for j, r in enumerate(rows):
        r["level"] = j
    report = SweepReport(axis=axis, rows=rows, checks=assess(axis, rows))
    if out_dir is not None:
        from . import output

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = ["level", "tau", "delta", *MONITORS, "sup_delta_h2_form", "sqrt_delta_cdot_l2",
                "error_integral", "e4_total", "worst_slack", "passed"]
        report.files.append(output.write_table(out / f"sweep_{axis}.csv", rows, cols))
        lines = [f"{'PASS' if ok else 'FAIL'} {name}: {detail}".rstrip() for name, ok, detail in report.checks]
        (out / f"sweep_{axis}.txt").write_text("\n".join(lines) + "\n")
        report.files.append(out / f"sweep_{axis}.txt")
        if figures and all(r.get("error") is None and "sup_v" in r for r in rows):
            from . import plotting

            report.files.append(plotting.sweep_figure(out / f"sweep_{axis}.png", rows, axis,
                                                      [*MONITORS, "error_integral"]))
    return report
