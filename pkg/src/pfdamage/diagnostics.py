"""Certification of accepted steps.

Residuals of the discrete Euler-Lagrange system, the discrete energy
inequality with its four consistency error terms, the subgradient of the
constraint z >= 0, and exact-feasibility checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import energy as en
from . import material as mat
from .grid import GridDesc, integrate, second_gradient_form

ZERO_THRESHOLD = 1e-10
SLACK_RTOL = 1e-8


@dataclass
class ResidualReport:
    r1: float
    r2: float
    r3: float
    r4: float
    mass_dev: float = 0.0
    irrev_viol: float = 0.0
    bounds_viol: float = 0.0

    @property
    def max_el(self) -> float:
        return max(self.r1, self.r2, self.r3, self.r4)

    def as_dict(self) -> dict:
        return {"r1": self.r1, "r2": self.r2, "r3": self.r3, "r4": self.r4,
                "mass_dev": self.mass_dev, "irrev_viol": self.irrev_viol}


def _dual_norm(g: GridDesc, R) -> float:
    """Dual L2 norm of a nodal load vector against the lumped mass."""
    R = np.atleast_2d(R)
    return float(np.sqrt(np.sum(R**2 / g.weights)))


def conservation_checks(g: GridDesc, c, z, z_prev, mass0: float) -> tuple[float, float, float]:
    """Relative mass deviation, irreversibility violation and bounds violation."""
    dev = abs(integrate(g, c) - mass0) / (abs(mass0) + 1.0)
    irrev = float(max(0.0, np.max(z - z_prev)))
    bounds = float(max(0.0, np.max(-z), np.max(z - 1.0)))
    return dev, irrev, bounds


def el_residuals_problem(prob, c, u, z, mu) -> ResidualReport:
    """Residual report for a candidate of a :class:`~pfdamage.stepper.StepProblem`.

    r1: defect of the potential equation (rate of c against the mobility flux).
    r2: defect of the equation defining mu.
    r3: defect of the force balance on non-Dirichlet nodes.
    r4: worst violation of the damage inequality over nodal admissible directions.
    """
    g, mm, tau, delta = prob.g, prob.mm, prob.tau, prob.delta
    u = np.atleast_2d(u)
    w = g.weights
    d = c - prob.c1
    R1 = w * d / tau + prob.v0.K @ mu
    R2 = w * mu - (prob.K1 @ c + en.elastic_grad_c(g, mm, c, u, z)
                   + w * mat.psi_prime(mm, c) + delta * w * d / tau)
    gu = prob.grad_u(c, u, z)
    gz = prob.grad_z(c, u, z)
    dev, irrev, bounds = conservation_checks(g, c, z, prob.z1, prob.mass0)
    return ResidualReport(r1=_dual_norm(g, R1), r2=_dual_norm(g, R2), r3=_dual_norm(g, gu),
                          r4=prob.z_stationarity(z, gz), mass_dev=dev, irrev_viol=irrev,
                          bounds_viol=bounds)


def el_residuals(state, mu, history, scenario, params, material, grid,
                 mass0: float | None = None) -> ResidualReport:
    from .stepper import StepProblem

    prob = StepProblem(grid, material, params, scenario, history, mass0)
    return el_residuals_problem(prob, state.c, state.u, state.z, np.asarray(mu, dtype=float))


def damage_driving_force(g: GridDesc, mm, c, u, z) -> np.ndarray:
    """Nodal density of W_,z (the lumped pairing divided by the node weight)."""
    return en.elastic_grad_z(g, mm, c, np.atleast_2d(u), z) / g.weights


def subgradient_xi(g: GridDesc, mm, state, threshold: float = ZERO_THRESHOLD) -> np.ndarray:
    """xi = -chi_{z = 0} max(0, W_,z + f'), with {z = 0} read as z <= threshold."""
    z = state.z
    drive = damage_driving_force(g, mm, state.c, state.u, z) + mat.f_prime(mm, z)
    xi = np.where(z <= threshold, -np.maximum(0.0, drive), 0.0)
    return xi + 0.0


def xi_pairing(g: GridDesc, xi, z, zeta) -> float:
    """int xi (zeta - z) dx; nonpositive for every zeta >= 0."""
    return integrate(g, xi * (zeta - z))


# ----------------------------------------------------------------------
def kinetic_energy(g: GridDesc, v) -> float:
    return 0.5 * en.l2_sq(g, v)


def _b_rate(scenario, tau, k):
    """Rate of the piecewise-linear interpolant of b on ((k-1) tau, k tau];
    at k = 0 the exact rate of the data is used."""
    if k == 0:
        return np.atleast_2d(scenario.b_dot(0.0))
    return (np.atleast_2d(scenario.b(k * tau)) - np.atleast_2d(scenario.b((k - 1) * tau))) / tau


def energy_terms(state, history, scenario, params, material, grid, mu) -> dict:
    """E and K at the new state, the dissipation increment and the bulk part
    of the external-work increment (load and boundary-drive terms, without
    the summation-by-parts terms, which the ledger assembles cumulatively)."""
    g, mm, tau, delta = grid, material, params.tau, params.delta
    k = state.k
    zdot = (state.z - history.z) / tau
    cdot = (state.c - history.c) / tau
    Km = g.stiffness(mat.mobility(mm, history.c, history.z))
    D_inc = tau * (en.l2_sq(g, zdot) + delta * en.l2_sq(g, cdot) + float(mu @ (Km @ mu)))
    bdot = _b_rate(scenario, tau, k)
    l = np.atleast_2d(scenario.l(k * tau))
    u = np.atleast_2d(state.u)
    work = (en.elastic_work(g, mm, state.c, u, state.z, bdot)
            + delta * second_gradient_form(g, u, bdot)
            + en.l2_inner(g, l, np.atleast_2d(state.v) - bdot))
    return {
        "E": en.free_energy(g, mm, delta, state.c, u, state.z),
        "K": kinetic_energy(g, state.v),
        "D_inc": D_inc,
        "W_bulk_inc": tau * work,
        "b_rate": bdot,
    }


def error_terms(state, history, params, material, grid) -> tuple[float, float, float, float]:
    """Consistency error rates e1..e4 of the step (to be integrated over one
    time step, i.e. multiplied by tau)."""
    g, mm, tau = grid, material, params.tau
    c, z = state.c, state.z
    u = np.atleast_2d(state.u)
    c1, z1 = history.c, history.z
    u1 = np.atleast_2d(history.u)
    zdot = (z - z1) / tau
    cdot = (c - c1) / tau
    W = lambda cc, uu, zz: en.elastic_total(g, mm, cc, uu, zz)
    e1 = (W(c, u1, z1) - W(c, u1, z)) / tau + float(en.elastic_grad_z(g, mm, c, u, z) @ zdot)
    e2 = (W(c1, u1, z1) - W(c, u1, z1)) / tau + float(en.elastic_grad_c(g, mm, c, u, z) @ cdot)
    w = g.weights
    e3 = float(w @ (mat.chemical_energy(mm, c1) - mat.chemical_energy(mm, c))) / tau \
        + float(w @ (mat.psi_prime(mm, c) * cdot))
    e4 = float(w @ (mat.damage_drop(mm, z1, z) + mat.f_prime(mm, z) * (z - z1))) / tau
    return e1, e2, e3, e4


def slack_tolerance(E0: float, K0: float) -> float:
    return SLACK_RTOL * (1.0 + abs(E0 + K0))


def check_energy_inequality(row: dict, tol: float | None = None) -> tuple[float, bool]:
    """Slack of the discrete energy inequality and whether it is certified."""
    slack = (row["E0"] + row["K0"] + row["W_ext"]) - (
        row["E"] + row["K"] + row["D"] + row["E1"] + row["E2"] + row["E3"] + row["E4"])
    tol = slack_tolerance(row["E0"], row["K0"]) if tol is None else tol
    return slack, slack >= -tol


LEDGER_COLUMNS = ("k", "t", "E", "K", "D", "W_ext", "e1", "e2", "e3", "e4", "slack",
                  "r1", "r2", "r3", "r4", "mass_dev", "irrev_viol")


@dataclass
class EnergyLedger:
    """Running energy balance.  Columns e1..e4 hold the cumulative error
    integrals int_0^t e^i ds."""

    grid: GridDesc
    material: object
    params: object
    scenario: object
    E0: float
    K0: float
    mass0: float
    v0: np.ndarray
    b_rate0: np.ndarray
    rows: list = field(default_factory=list)
    history: object = None
    tol_slack: float = 0.0
    budget: float = 0.0
    _bulk: float = 0.0
    _ibp_sum: float = 0.0
    _D: float = 0.0
    _E: tuple = (0.0, 0.0, 0.0, 0.0)
    _prev_rate: np.ndarray = None
    _prev_v: np.ndarray = None
    failures: list = field(default_factory=list)

    @classmethod
    def start(cls, grid, material, params, scenario, state) -> "EnergyLedger":
        E0 = en.free_energy(grid, material, params.delta, state.c, state.u, state.z)
        K0 = kinetic_energy(grid, state.v)
        rate0 = _b_rate(scenario, params.tau, 0)
        led = cls(grid=grid, material=material, params=params, scenario=scenario, E0=E0, K0=K0,
                  mass0=integrate(grid, scenario.c0), v0=np.atleast_2d(state.v).copy(),
                  b_rate0=rate0, history=state, tol_slack=slack_tolerance(E0, K0))
        led._prev_rate = rate0
        led._prev_v = np.atleast_2d(state.v).copy()
        return led

    @property
    def initial_row(self) -> dict:
        nan = float("nan")
        return {"k": 0, "t": 0.0, "E": self.E0, "K": self.K0, "D": 0.0, "W_ext": 0.0,
                "e1": 0.0, "e2": 0.0, "e3": 0.0, "e4": 0.0, "slack": 0.0,
                "r1": nan, "r2": nan, "r3": nan, "r4": nan, "mass_dev": 0.0, "irrev_viol": 0.0}

    def record(self, result) -> dict:
        g, p = self.grid, self.params
        tau = p.tau
        state, hist = result.state, self.history
        terms = energy_terms(state, hist, self.scenario, p, self.material, g, result.mu)
        errs = error_terms(state, hist, p, self.material, g)
        rate = terms["b_rate"]
        self._bulk += terms["W_bulk_inc"]
        self._ibp_sum += en.l2_inner(g, self._prev_v, rate - self._prev_rate)
        self._D += terms["D_inc"]
        self._E = tuple(a + tau * e for a, e in zip(self._E, errs))
        v = np.atleast_2d(state.v)
        W_ext = (self._bulk - en.l2_inner(g, self.v0, self.b_rate0)
                 + en.l2_inner(g, v, rate) - self._ibp_sum)
        row = {"k": state.k, "t": state.t, "E": terms["E"], "K": terms["K"], "D": self._D,
               "W_ext": W_ext, "E0": self.E0, "K0": self.K0,
               "E1": self._E[0], "E2": self._E[1], "E3": self._E[2], "E4": self._E[3]}
        slack, ok = check_energy_inequality(row, self.tol_slack)
        rep = result.residuals
        out = {"k": state.k, "t": state.t, "E": terms["E"], "K": terms["K"], "D": self._D,
               "W_ext": W_ext, "e1": self._E[0], "e2": self._E[1], "e3": self._E[2],
               "e4": self._E[3], "slack": slack, **rep.as_dict(),
               "bounds_viol": rep.bounds_viol, "e_rates": errs}
        self.budget += self._step_budget(result, hist)
        out["budget"] = self.budget
        self._check(out, ok)
        self.rows.append(out)
        self._prev_rate = rate
        self._prev_v = v.copy()
        self.history = state
        return out

    def _step_budget(self, result, hist) -> float:
        """First-order bound on how far solver residuals can move the slack:
        each residual times the dual size of the test function it is paired
        with in the energy argument."""
        g, tau = self.grid, self.params.tau
        st, rep = result.state, result.residuals
        l2 = lambda f: math.sqrt(en.l2_sq(g, f))
        du = np.atleast_2d(st.u) - np.atleast_2d(hist.u)
        return (rep.r1 * tau * l2(result.mu) + rep.r2 * l2(st.c - hist.c) + rep.r3 * l2(du)
                + rep.r4 * float(np.sum(np.sqrt(g.weights) * np.abs(st.z - hist.z))))

    def _check(self, row, slack_ok):
        p = self.params
        k = row["k"]
        if not slack_ok:
            self.failures.append(f"step {k}: energy inequality slack {row['slack']:.3e} "
                                 f"below -{self.tol_slack:.1e}")
        worst = max(row["r1"], row["r2"], row["r3"], row["r4"])
        if not worst <= p.tol_outer:
            self.failures.append(f"step {k}: Euler-Lagrange residual {worst:.3e} above {p.tol_outer:.1e}")
        if row["mass_dev"] > 1e-12:
            self.failures.append(f"step {k}: mass deviation {row['mass_dev']:.3e}")
        if row["irrev_viol"] > 0:
            self.failures.append(f"step {k}: irreversibility violated by {row['irrev_viol']:.3e}")
        if row["bounds_viol"] > 0:
            self.failures.append(f"step {k}: damage outside [0, 1] by {row['bounds_viol']:.3e}")
        if self.rows and row["D"] < self.rows[-1]["D"]:
            self.failures.append(f"step {k}: dissipation decreased")

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def worst_slack(self) -> float:
        return min((r["slack"] for r in self.rows), default=0.0)

    def table(self) -> list[dict]:
        return [self.initial_row] + [{c: r[c] for c in LEDGER_COLUMNS} for r in self.rows]


# ----------------------------------------------------------------------
def monitors(traj, grid: GridDesc, material, params) -> dict:
    """A priori monitors: sup-in-time norms and time integrals that must stay
    bounded under refinement."""
    g, p = grid, material.p
    grad_c = grad_z = vel = h2 = dh2 = 0.0
    cdot_sq = 0.0
    for k, s in enumerate(traj.states):
        gc = g.corner_gradient(s.c)
        gz = g.corner_gradient(s.z)
        grad_c = max(grad_c, math.sqrt(g.quad(np.sum(gc**2, axis=-1))))
        grad_z = max(grad_z, g.quad(np.sum(gz**2, axis=-1) ** (p / 2)) ** (1 / p))
        vel = max(vel, math.sqrt(en.l2_sq(g, s.v)))
        form = second_gradient_form(g, s.u, s.u)
        h2 = max(h2, math.sqrt(params.delta * max(form, 0.0)))
        dh2 = max(dh2, params.delta * form)
        if k > 0:
            cdot_sq += params.tau * en.l2_sq(g, (s.c - traj.states[k - 1].c) / params.tau)
    ledger = traj.ledger
    D = ledger.rows[-1]["D"] if ledger is not None and ledger.rows else 0.0
    err = 0.0
    if ledger is not None:
        err = sum(params.tau * sum(abs(e) for e in r["e_rates"][:3]) for r in ledger.rows)
    return {"sup_grad_c": grad_c, "sup_v": vel, "sup_grad_z_p": grad_z, "dissipation": D,
            "sup_sqrt_delta_h2": h2, "sup_delta_h2_form": dh2,
            "sqrt_delta_cdot_l2": math.sqrt(params.delta * cdot_sq), "error_integral": err}
