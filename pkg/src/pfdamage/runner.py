"""Single run of a configuration: validate, simulate, certify, write outputs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig
from .grid import build_grid
from .material import AssumptionReport, validate_assumptions
from .scenarios import build_scenario
from .stepper import SimulationError, Trajectory, run_simulation

log = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    config: RunConfig
    assumptions: AssumptionReport
    trajectory: Trajectory | None = None
    error: str | None = None
    failures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.error is None and not self.failures and self.assumptions.passed


def _subgradient_failures(traj, grid, seed, threshold=dg.ZERO_THRESHOLD, trials=10):
    rng = np.random.default_rng(seed)
    out = []
    for k, (s, xi) in enumerate(zip(traj.states, traj.xi)):
        if np.any(xi > 0):
            out.append(f"step {k}: subgradient xi has positive entries")
        if np.any((xi != 0) & (s.z > threshold)):
            out.append(f"step {k}: subgradient xi supported where z > {threshold:g}")
        for _ in range(trials if np.any(xi) else 0):
            zeta = rng.uniform(0.0, 2.0, s.z.shape)
            if dg.xi_pairing(grid, xi, s.z, zeta) > 1e-14:
                out.append(f"step {k}: int xi (zeta - z) > 0 for a nonnegative zeta")
                break
    return out


def damage_onset(traj, grid, material) -> dict:
    """First step where the damage driving force exceeds the threshold
    somewhere, and first step where z actually decreases."""
    drive_k = onset_k = None
    for k, s in enumerate(traj.states):
        if drive_k is None:
            wz = dg.damage_driving_force(grid, material, s.c, s.u, s.z)
            if np.max(wz) > material.alpha:
                drive_k = k
        if onset_k is None and k > 0 and np.any(s.z < traj.states[0].z):
            onset_k = k
    t = lambda k: None if k is None else traj.states[k].t
    return {"drive_exceeds_alpha_t": t(drive_k), "damage_onset_t": t(onset_k)}


def summarize(outcome: RunOutcome, grid, material) -> dict:
    traj = outcome.trajectory
    cfg = outcome.config
    s = {"scenario": cfg.scenario, "tau": cfg.stepper.tau, "delta": cfg.stepper.delta,
         "T": cfg.stepper.T, "assumptions_passed": outcome.assumptions.passed}
    if traj is not None and traj.ledger is not None and traj.ledger.rows:
        led = traj.ledger
        last = led.rows[-1]
        s.update({
            "steps": len(led.rows),
            "E0": led.E0, "K0": led.K0,
            "E_final": last["E"], "K_final": last["K"], "D_total": last["D"],
            "W_ext_total": last["W_ext"],
            "max_r1": max(r["r1"] for r in led.rows), "max_r2": max(r["r2"] for r in led.rows),
            "max_r3": max(r["r3"] for r in led.rows), "max_r4": max(r["r4"] for r in led.rows),
            "worst_slack": led.worst_slack, "slack_tolerance": led.tol_slack,
            "solver_budget": led.budget,
            "max_mass_dev": max(r["mass_dev"] for r in led.rows),
            "max_irrev_viol": max(r["irrev_viol"] for r in led.rows),
            "min_z": float(min(np.min(st.z) for st in traj.states)),
        })
        s.update(damage_onset(traj, grid, material))
    s["error"] = outcome.error
    s["failures"] = len(outcome.failures)
    s["passed"] = outcome.passed
    return s


def execute(cfg: RunConfig, out_dir=None, write: bool = True, figures: bool | None = None) -> RunOutcome:
    """Validate the material, run the scenario and certify every step.  With
    ``write`` the trajectory, ledger and summary land in ``out_dir``."""
    from . import output

    report = validate_assumptions(cfg.material, seed=cfg.seed)
    outcome = RunOutcome(config=cfg, assumptions=report)
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    grid = build_grid(cfg.grid)
    if not report.passed:
        outcome.failures += [f"assumption {c.name} violated (margin {c.margin:.3g})"
                             for c in report.failures()]
    else:
        scenario = build_scenario(cfg.scenario, grid, cfg.scenario_params, seed=cfg.seed)
        try:
            outcome.trajectory = run_simulation(scenario, cfg.stepper, cfg.material, grid)
        except SimulationError as exc:
            outcome.error = str(exc)
            outcome.trajectory = exc.trajectory
        except ValueError as exc:
            outcome.error = str(exc)
        traj = outcome.trajectory
        if traj is not None and traj.ledger is not None:
            outcome.failures += traj.ledger.failures
            outcome.failures += _subgradient_failures(traj, grid, cfg.seed)
    outcome.summary = summarize(outcome, grid, cfg.material)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        outcome.files = output.write_run(out, outcome, grid)
        if cfg.figures if figures is None else figures:
            from . import plotting

            outcome.files += plotting.run_figures(out, outcome, grid)
    return outcome
