"""PNG figures for runs and sweeps (matplotlib, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def energy_figure(path, ledger) -> Path:
    rows = ledger.table()
    t = np.array([r["t"] for r in rows])
    fig, (ax, bx) = plt.subplots(1, 2, figsize=(10, 4))
    for key in ("E", "K", "D", "W_ext"):
        ax.plot(t, [r[key] for r in rows], label=key)
    lhs = [r["E"] + r["K"] + r["D"] + r["e1"] + r["e2"] + r["e3"] + r["e4"] for r in rows]
    ax.plot(t, lhs, "k--", lw=1, label="E+K+D+int e")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("energy balance")
    bx.plot(t, [r["slack"] for r in rows], marker=".")
    bx.axhline(-ledger.tol_slack, color="r", lw=0.8, ls=":")
    bx.set_xlabel("t")
    bx.set_title("slack")
    return _save(fig, path)


def residual_figure(path, ledger, tol) -> Path:
    rows = ledger.rows
    fig, ax = plt.subplots(figsize=(6, 4))
    t = [r["t"] for r in rows]
    for key in ("r1", "r2", "r3", "r4"):
        vals = np.maximum([r[key] for r in rows], 1e-18)
        ax.semilogy(t, vals, marker=".", label=key)
    ax.axhline(tol, color="r", ls=":", lw=0.8)
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("Euler-Lagrange residuals")
    return _save(fig, path)


def field_figure(path, traj, grid) -> Path:
    s = traj.states[-1]
    names = ["c", "z", "mu"]
    data = [s.c, s.z, traj.mu[-1]]
    u = np.atleast_2d(s.u)
    for d in range(grid.dim):
        names.append(f"u{d + 1}")
        data.append(u[d])
    fig, axes = plt.subplots(1, len(names), figsize=(3.2 * len(names), 3))
    for ax, name, f in zip(axes, names, data):
        if grid.dim == 1:
            ax.plot(grid.x[0], f)
            ax.set_xlabel("x")
        else:
            im = ax.imshow(grid.reshape(f).T, origin="lower",
                           extent=(0, grid.lengths[0], 0, grid.lengths[1]))
            fig.colorbar(im, ax=ax, shrink=0.8)
        ax.set_title(f"{name} at t={s.t:.3g}")
    return _save(fig, path)


def run_figures(out_dir, outcome, grid) -> list[Path]:
    traj = outcome.trajectory
    if traj is None or traj.ledger is None or not traj.ledger.rows:
        return []
    out = Path(out_dir)
    return [energy_figure(out / "energy.png", traj.ledger),
            residual_figure(out / "residuals.png", traj.ledger, outcome.config.stepper.tol_outer),
            field_figure(out / "fields.png", traj, grid)]


def sweep_figure(path, rows, axis, keys) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    x = [r[axis] for r in rows]
    for key in keys:
        vals = np.array([r[key] for r in rows], dtype=float)
        if np.all(vals > 0):
            ax.loglog(x, vals, marker="o", label=key)
    ax.set_xlabel(axis)
    if ax.get_lines():
        ax.legend(fontsize=7)
    else:
        ax.text(0.5, 0.5, "all monitors vanish", ha="center", transform=ax.transAxes)
    ax.set_title(f"{axis} sweep monitors")
    return _save(fig, path)
