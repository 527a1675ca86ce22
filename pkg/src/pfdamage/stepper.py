"""Semi-implicit time stepping by constrained minimization.

Each step minimizes the incremental functional

    F(c, u, z) = int [ |grad z|^p/p + |grad c|^2/2 + W(c, eps(u), z) + f(z) + Psi(c) - l.u ]
                 + delta/2 <A u, u> + tau/2 ||(z - z1)/tau||^2
                 + tau^2/2 ||(u - 2 u1 + u2)/tau^2||^2
                 + tau/2 ||(c - c1)/tau||_V0^2 + delta tau/2 ||(c - c1)/tau||^2

over {int c = int c0} x {u = b(k tau) on Gamma_D} x {0 <= z <= z1}.  The
V0 metric is frozen at m(c1, z1).  Minimization is block-cyclic
(u, then c, then z).  It stops once the discrete Euler-Lagrange system is
satisfied.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import energy as en
from . import material as mat
from .grid import GridDesc, apply_dirichlet, integrate, second_gradient_form
from .hminus import SolverError, WeightedPoissonProblem, pcg

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


class InfeasibleError(ValueError):
    pass


class LineSearchError(RuntimeError):
    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class StepError(RuntimeError):
    def __init__(self, message, best=None, residuals=None):
        super().__init__(message)
        self.best = best
        self.residuals = residuals


class SimulationError(RuntimeError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class StepperParams:
    tau: float
    delta: float = 1e-3
    T: float = 1.0
    tol_outer: float = 1e-6
    tol_block: float = 1e-10
    max_outer: int = 100
    max_inner: int = 100
    armijo: float = 1e-4
    backtrack: float = 0.5
    zero_threshold: float = 1e-10
    # sweeps continue past tol_outer towards this target while they still help
    outer_target: float = 1e-9

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not (self.tol_outer > 0 and self.tol_block > 0):
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration budgets must be positive")

    @property
    def num_steps(self) -> int:
        return max(1, int(math.floor(self.T / self.tau + 1e-9)))


@dataclass
class Scenario:
    """Data of one run.  ``b`` is a full-field extension of the boundary
    displacement (shape (n, N)); only its trace on Gamma_D is imposed, the
    bulk values enter the external work."""

    name: str
    c0: np.ndarray
    u0: np.ndarray
    v0: np.ndarray
    z0: np.ndarray
    b: Callable[[float], np.ndarray]
    b_dot: Callable[[float], np.ndarray]
    l: Callable[[float], np.ndarray]
    quiescent: bool = False

    def __post_init__(self):
        z0 = np.asarray(self.z0, dtype=float)
        if np.any(z0 < 0) or np.any(z0 > 1):
            raise ValueError("initial damage must lie in [0, 1]")


@dataclass
class State:
    c: np.ndarray
    u: np.ndarray
    z: np.ndarray
    v: np.ndarray
    c_prev: np.ndarray
    u_prev: np.ndarray
    u_prev2: np.ndarray
    z_prev: np.ndarray
    k: int = 0
    t: float = 0.0

    def copy(self) -> "State":
        return State(*(np.array(getattr(self, f)) for f in
                       ("c", "u", "z", "v", "c_prev", "u_prev", "u_prev2", "z_prev")),
                     k=self.k, t=self.t)


def initial_state(scenario: Scenario, params: StepperParams) -> State:
    c0 = np.array(scenario.c0, dtype=float)
    u0 = np.atleast_2d(np.array(scenario.u0, dtype=float))
    v0 = np.atleast_2d(np.array(scenario.v0, dtype=float))
    z0 = np.array(scenario.z0, dtype=float)
    u_m1 = u0 - params.tau * v0
    return State(c=c0, u=u0, z=z0, v=v0, c_prev=c0.copy(), u_prev=u_m1, u_prev2=u_m1.copy(),
                 z_prev=z0.copy(), k=0, t=0.0)


@dataclass
class Gradient:
    c: np.ndarray          # raw nodal derivative
    u: np.ndarray          # (n, N), zero on Dirichlet nodes
    z: np.ndarray
    c_projected: np.ndarray  # density with the mass multiplier removed
    z_active_lower: np.ndarray
    z_active_upper: np.ndarray


class StepProblem:
    """Incremental functional of step k = history.k + 1 and its block solvers."""

    def __init__(self, grid: GridDesc, material: mat.MaterialModel, params: StepperParams,
                 scenario: Scenario, history: State, mass0: float | None = None):
        if material.dim != grid.dim:
            raise ValueError("material and grid dimensions differ")
        if material.p < 2:
            raise ValueError("the stepper needs a damage gradient exponent p >= 2")
        self.g = grid
        self.mm = material
        self.params = params
        self.scenario = scenario
        self.history = history
        self.k = history.k + 1
        self.t = self.k * params.tau
        tau = params.tau
        self.tau = tau
        self.delta = params.delta
        self.c1 = history.c
        self.z1 = history.z
        self.u1 = history.u
        self.u2 = history.u_prev
        self.b = np.atleast_2d(scenario.b(self.t))
        self.l = np.atleast_2d(scenario.l(self.t))
        self.mass0 = integrate(grid, scenario.c0) if mass0 is None else mass0
        self.weight = mat.mobility(material, self.c1, self.z1)
        self.v0 = WeightedPoissonProblem(grid, self.weight, method="direct")
        self.K1 = grid.stiffness(1.0)
        self.w = grid.weights
        n, N = grid.dim, grid.num_nodes
        self.free_u = np.tile(~grid.dirichlet_mask, n)
        self._strain_ops = grid.strain_operators()
        Mi = sp.diags(np.tile(self.w, n))
        self._u_fixed = (Mi / tau**2 + self.delta * sp.kron(sp.identity(n), grid.hessian_form)).tocsr()
        # reduced coordinates of the zero-mean subspace: last node absorbs the mass
        Z = np.zeros((N, N - 1))
        Z[:-1, :] = np.eye(N - 1)
        Z[-1, :] = -self.w[:-1] / self.w[-1]
        self._Z = Z
        self._v0_hess = None

    # ------------------------------------------------------------------
    def check_feasible(self, c, u, z, mass_rtol=1e-9):
        g = self.g
        m = integrate(g, c)
        if abs(m - self.mass0) > mass_rtol * (1.0 + abs(self.mass0)):
            raise InfeasibleError(f"mass constraint violated ({m!r} vs {self.mass0!r})")
        u = np.atleast_2d(u)
        if not np.allclose(u[:, g.dirichlet_mask], self.b[:, g.dirichlet_mask], rtol=0, atol=1e-12):
            raise InfeasibleError("displacement does not match the Dirichlet data")
        if np.any(z < 0) or np.any(z > self.z1):
            raise InfeasibleError("damage outside [0, z_prev]")

    def objective_parts(self, c, u, z, check=True) -> dict:
        if check:
            self.check_feasible(c, u, z)
        g, mm, tau, delta = self.g, self.mm, self.tau, self.delta
        u = np.atleast_2d(u)
        d = c - self.c1
        parts = {
            "grad_z": en.p_energy(g, z, mm.p),
            "grad_c": en.grad_c_energy(g, c),
            "elastic": en.elastic_total(g, mm, c, u, z),
            "damage": float(self.w @ mat.damage_potential(mm, z)),
            "chemical": float(self.w @ mat.chemical_energy(mm, c)),
            "load": -en.l2_inner(g, self.l, u),
            "second_gradient": 0.5 * delta * second_gradient_form(g, u, u),
            "damage_rate": 0.5 / tau * en.l2_sq(g, z - self.z1),
            "inertia": 0.5 / tau**2 * en.l2_sq(g, u - 2.0 * self.u1 + self.u2),
            "v0_rate": 0.5 / tau * self._v0_sq(d),
            "c_rate": 0.5 * delta / tau * en.l2_sq(g, d),
        }
        return parts

    def objective(self, c, u, z, check=True) -> float:
        return float(sum(self.objective_parts(c, u, z, check).values()))

    def _v0_phi(self, d):
        return self.v0.solve(d - integrate(self.g, d) / self.g.volume)

    def _v0_sq(self, d):
        if not np.any(d):
            return 0.0
        phi = self._v0_phi(d)
        return float(self.w @ (phi * d))

    # block gradients ---------------------------------------------------
    def grad_c(self, c, u, z) -> np.ndarray:
        g, mm, tau, delta = self.g, self.mm, self.tau, self.delta
        d = c - self.c1
        out = self.K1 @ c + en.elastic_grad_c(g, mm, c, np.atleast_2d(u), z)
        out = out + self.w * mat.psi_prime(mm, c) + delta / tau * self.w * d
        if np.any(d):
            out = out + self.w * self._v0_phi(d) / tau
        return out

    def grad_u(self, c, u, z) -> np.ndarray:
        g, mm = self.g, self.mm
        u = np.atleast_2d(u)
        out = en.elastic_grad_u(g, mm, c, u, z) - self.w * self.l
        out = out + self.delta * np.stack([g.hessian_form @ uk for uk in u])
        out = out + self.w * (u - 2.0 * self.u1 + self.u2) / self.tau**2
        out[:, g.dirichlet_mask] = 0.0
        return out

    def grad_z(self, c, u, z) -> np.ndarray:
        g, mm = self.g, self.mm
        out = en.p_energy_grad(g, z, mm.p) + en.elastic_grad_z(g, mm, c, np.atleast_2d(u), z)
        return out + self.w * mat.f_prime(mm, z) + self.w * (z - self.z1) / self.tau

    def gradient(self, c, u, z, check=True) -> Gradient:
        if check:
            self.check_feasible(c, u, z)
        gc = self.grad_c(c, u, z)
        dens = gc / self.w
        dens = dens - integrate(self.g, dens) / self.g.volume
        return Gradient(c=gc, u=self.grad_u(c, u, z), z=self.grad_z(c, u, z), c_projected=dens,
                        z_active_lower=z <= 0.0, z_active_upper=z >= self.z1)

    # measures ------------------------------------------------------------
    def c_stationarity(self, gc) -> float:
        """Dual L2 norm of the c-gradient after removing the mass multiplier."""
        lam = gc.sum() / self.g.volume
        R = gc - lam * self.w
        return float(np.sqrt(np.sum(R**2 / self.w)))

    def u_stationarity(self, gu) -> float:
        return float(np.sqrt(np.sum(gu**2 / self.w)))

    def z_violation(self, z, gz) -> np.ndarray:
        """Nodal violation of the variational inequality over the nodal
        generating set of admissible directions."""
        up = np.where(z < self.z1, np.maximum(0.0, -gz), 0.0)
        down = np.where(z > 0.0, np.maximum(0.0, gz), 0.0)
        return np.maximum(up, down)

    def z_stationarity(self, z, gz) -> float:
        return float(np.max(self.z_violation(z, gz) / np.sqrt(self.w)))

    # ------------------------------------------------------------------
    def _armijo(self, f, x, fx, slope, direction, project=None, what="block"):
        p = self.params
        alpha = 1.0
        slack = 16 * _EPS * (abs(fx) + 1.0)
        for _ in range(60):
            trial = x + alpha * direction
            if project is not None:
                trial = project(trial)
                lin = None
            else:
                lin = alpha * slope
            ft = f(trial)
            if lin is None:
                lin = float(self._last_grad @ (trial - x))
            if ft <= fx + p.armijo * lin + slack:
                return trial, ft
            alpha *= p.backtrack
        raise LineSearchError(f"{what}: line search step underflow", iterate=x)

    def u_hessian(self, z) -> sp.csr_matrix:
        g = self.g
        n = g.dim
        zc = g.corner_values(z)
        C = mat.stiffness_tensor(self.mm, zc)  # (corners, cells, n, n, n, n)
        H = self._u_fixed
        for k, ops in enumerate(self._strain_ops):
            for a in range(n):
                for b in range(n):
                    for i in range(n):
                        for j in range(n):
                            coef = C[k, :, a, b, i, j]
                            if not np.any(coef):
                                continue
                            H = H + ops[a][b].T @ sp.diags(g.qweight * coef) @ ops[i][j]
        return sp.csr_matrix(H)

    def minimize_u_block(self, c, z, u_init=None) -> np.ndarray:
        """Exact minimizer in u: a symmetric positive definite linear solve."""
        g = self.g
        u0 = self.u1 if u_init is None else u_init
        u0 = apply_dirichlet(g, np.atleast_2d(u0), self.b)
        u0[:, ~g.dirichlet_mask] = 0.0
        rhs = -self.grad_u(c, u0, z).ravel()[self.free_u]
        if not np.any(rhs):
            return u0
        H = self.u_hessian(z)[self.free_u][:, self.free_u]
        tol = min(self.params.tol_block, 1e-13) * max(1.0, float(np.linalg.norm(rhs)))
        x, _, _ = pcg(H, rhs, precond=H.diagonal(), tol=tol,
                      maxiter=max(10 * rhs.size, self.params.max_inner))
        u = u0.ravel().copy()
        u[self.free_u] = x
        return u.reshape(u0.shape)

    def _v0_hessian(self):
        if self._v0_hess is None:
            G = self.v0.dense_inverse()
            W = self.w[:, None] * G * self.w[None, :]
            self._v0_hess = W / self.tau
        return self._v0_hess

    def c_hessian(self, c, u, z, convex_only=False) -> np.ndarray:
        g, mm = self.g, self.mm
        H = self.K1.toarray() + self._v0_hessian()
        second = mat.psi1_second(mm, c) if convex_only else mat.psi_second(mm, c)
        diag = self.w * second + self.delta / self.tau * self.w
        diag = diag + en.elastic_cc_diag(g, mm, c, np.atleast_2d(u), z)
        H[np.diag_indices_from(H)] += diag
        return H

    def minimize_c_block(self, u, z, c_init=None) -> tuple[np.ndarray, int]:
        """Mass-constrained minimization in c by projected Newton descent with
        Armijo backtracking; the Hessian drops the concave part of Psi when
        the full one is not positive definite on the constraint set."""
        p = self.params
        c = np.array(self.c1 if c_init is None else c_init, dtype=float)
        Z = self._Z
        f = lambda cc: self.objective(cc, u, z, check=False)
        fc = f(c)
        for it in range(p.max_inner):
            gc = self.grad_c(c, u, z)
            if self.c_stationarity(gc) <= p.tol_block:
                return c, it
            Hr = None
            for convex_only in (False, True):
                H = Z.T @ self.c_hessian(c, u, z, convex_only) @ Z
                try:
                    Hr = sla.cho_factor(H)
                    break
                except np.linalg.LinAlgError:
                    continue
            y = -sla.cho_solve(Hr, Z.T @ gc)
            step = Z @ y
            step -= (self.w @ step) / self.g.volume
            slope = float(gc @ step)
            if slope >= 0:
                break
            c, fc = self._armijo(f, c, fc, slope, step, what="c-block")
        gc = self.grad_c(c, u, z)
        if self.c_stationarity(gc) <= max(p.tol_block, p.tol_outer * 1e-2):
            return c, p.max_inner
        raise LineSearchError(f"c-block did not converge (stationarity "
                              f"{self.c_stationarity(gc):.3e})", iterate=c)

    def z_hessian(self, z) -> sp.csr_matrix:
        return (en.p_energy_hessian(self.g, z, self.mm.p) + sp.diags(self.w / self.tau)).tocsr()

    def minimize_z_block(self, c, u, z_init=None) -> tuple[np.ndarray, int]:
        """Box-constrained minimization in z over [0, z_prev] by projected
        Newton descent (reduced Newton step on the free set, scaled gradient
        on the epsilon-active set, Armijo search along the projection arc)."""
        p = self.params
        lo = np.zeros_like(self.z1)
        hi = self.z1
        z = np.clip(np.array(self.z1 if z_init is None else z_init, dtype=float), lo, hi)
        f = lambda zz: self.objective(c, u, zz, check=False)
        fz = f(z)
        proj = lambda zz: np.minimum(np.maximum(zz, lo), hi)
        for it in range(p.max_inner):
            gz = self.grad_z(c, u, z)
            if self.z_stationarity(z, gz) <= p.tol_block:
                return z, it
            H = self.z_hessian(z)
            dH = H.diagonal()
            gap = float(np.linalg.norm(z - proj(z - gz / dH)))
            eps = min(1e-3, gap)
            active = ((z <= lo + eps) & (gz > 0)) | ((z >= hi - eps) & (gz < 0)) | (hi <= lo)
            free = ~active
            step = np.zeros_like(z)
            step[active] = -gz[active] / dH[active]
            if np.any(free):
                Hf = H[free][:, free].toarray()
                step[free] = -sla.solve(Hf, gz[free], assume_a="pos")
            self._last_grad = gz
            z, fz = self._armijo(f, z, fz, None, step, project=proj, what="z-block")
        gz = self.grad_z(c, u, z)
        if self.z_stationarity(z, gz) <= max(p.tol_block, p.tol_outer * 1e-2):
            return z, p.max_inner
        raise LineSearchError(f"z-block did not converge (violation "
                              f"{self.z_stationarity(z, gz):.3e})", iterate=z)

    # ------------------------------------------------------------------
    def recover_mu(self, c) -> np.ndarray:
        """Chemical potential: -A^{-1}((c - c1)/tau) plus the constant fixed
        by testing the potential equation with zeta = 1."""
        g, mm, tau, delta = self.g, self.mm, self.tau, self.delta
        d = c - self.c1
        phi = self._v0_phi(d) if np.any(d) else np.zeros_like(c)
        u = self._u_current
        z = self._z_current
        total = en.elastic_grad_c(g, mm, c, u, z).sum()
        total += self.w @ (mat.psi_prime(mm, c) + delta * d / tau)
        return total / g.volume - phi / tau

    def set_current(self, u, z):
        self._u_current = np.atleast_2d(u)
        self._z_current = z


@dataclass
class StepResult:
    state: State
    mu: np.ndarray
    xi: np.ndarray
    residuals: object
    objective_trace: list = field(default_factory=list)
    objective_start: float = float("nan")
    sweeps: int = 0


def step(history: State, scenario: Scenario, params: StepperParams,
         material: mat.MaterialModel, grid: GridDesc, mass0: float | None = None) -> StepResult:
    """Advance one time step by cyclic block minimization."""
    from . import diagnostics as dg

    prob = StepProblem(grid, material, params, scenario, history, mass0)
    c = history.c.copy()
    z = history.z.copy()
    u = apply_dirichlet(grid, history.u, prob.b)
    start = prob.objective(c, u, z)
    trace = []
    best = None
    prev_worst = math.inf
    for sweep in range(1, params.max_outer + 1):
        u = prob.minimize_u_block(c, z, u)
        trace.append(prob.objective(c, u, z))
        c, _ = prob.minimize_c_block(u, z, c)
        trace.append(prob.objective(c, u, z))
        z, _ = prob.minimize_z_block(c, u, z)
        trace.append(prob.objective(c, u, z))
        prob.set_current(u, z)
        mu = prob.recover_mu(c)
        report = dg.el_residuals_problem(prob, c, u, z, mu)
        worst = report.max_el
        best = (c, u, z, mu, report)
        if worst <= params.outer_target:
            break
        if worst <= params.tol_outer and worst > 0.5 * prev_worst:
            break
        prev_worst = worst
    c, u, z, mu, report = best
    if report.max_el > params.tol_outer:
        raise StepError(f"step {prob.k}: Euler-Lagrange residuals {report.max_el:.3e} above "
                        f"{params.tol_outer:.1e} after {sweep} sweeps", best=best, residuals=report)
    new = State(c=c, u=u, z=z, v=(u - prob.u1) / params.tau, c_prev=history.c, u_prev=history.u,
                u_prev2=history.u_prev, z_prev=history.z, k=prob.k, t=prob.t)
    xi = dg.subgradient_xi(grid, material, new, params.zero_threshold)
    return StepResult(state=new, mu=mu, xi=xi, residuals=report, objective_trace=trace,
                      objective_start=start, sweeps=sweep)


def recover_mu(c, history: State, scenario: Scenario, params: StepperParams,
               material: mat.MaterialModel, grid: GridDesc, u=None, z=None,
               mass0: float | None = None) -> np.ndarray:
    prob = StepProblem(grid, material, params, scenario, history, mass0)
    prob.set_current(history.u if u is None else u, history.z if z is None else z)
    return prob.recover_mu(np.asarray(c, dtype=float))


# ----------------------------------------------------------------------
@dataclass
class Trajectory:
    """Time-discrete solution at t_k = k tau, k = 0..M, with the interpolants
    used in the analysis."""

    tau: float
    states: list
    mu: list
    xi: list
    results: list = field(default_factory=list)
    ledger: object = None

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])

    def _field(self, name, k):
        if name == "mu":
            return self.mu[k]
        if name == "xi":
            return self.xi[k]
        return getattr(self.states[k], name)

    def _index(self, t):
        M = len(self.states) - 1
        k = int(math.ceil(t / self.tau - 1e-12))
        return min(max(k, 0), M)

    def piecewise_constant(self, name, t):
        """w_tau(t) = w^k with k = ceil(t / tau)."""
        return self._field(name, self._index(t))

    def piecewise_constant_prev(self, name, t):
        """w_tau^-(t) = w^{max(0, k-1)}."""
        return self._field(name, max(0, self._index(t) - 1))

    def piecewise_linear(self, name, t):
        """Linear interpolation between w^{k-1} and w^k."""
        k = self._index(t)
        if k == 0:
            return self._field(name, 0)
        beta = (t - (k - 1) * self.tau) / self.tau
        return beta * self._field(name, k) + (1.0 - beta) * self._field(name, k - 1)


def run_simulation(scenario: Scenario, params: StepperParams, material: mat.MaterialModel,
                   grid: GridDesc, callback=None) -> Trajectory:
    """Advance M = floor(T / tau) steps from the scenario's initial data."""
    from . import diagnostics as dg

    if params.delta <= 0:
        raise ValueError("the time-discrete scheme needs delta > 0; study delta -> 0 with the "
                         "delta sweep driver (pfdamage sweep --axis delta)")
    state = initial_state(scenario, params)
    b0 = np.atleast_2d(scenario.b(0.0))
    if not np.allclose(state.u[:, grid.dirichlet_mask], b0[:, grid.dirichlet_mask], atol=1e-12, rtol=0):
        raise ValueError("initial displacement must match the boundary data on Gamma_D")
    mass0 = integrate(grid, scenario.c0)
    xi0 = dg.subgradient_xi(grid, material, state, params.zero_threshold)
    traj = Trajectory(tau=params.tau, states=[state], mu=[np.zeros_like(state.c)], xi=[xi0])
    ledger = dg.EnergyLedger.start(grid, material, params, scenario, state)
    traj.ledger = ledger
    for k in range(1, params.num_steps + 1):
        try:
            res = step(state, scenario, params, material, grid, mass0)
        except (StepError, LineSearchError, SolverError) as exc:
            raise SimulationError(f"step {k} failed: {exc}", trajectory=traj) from exc
        state = res.state
        traj.states.append(state)
        traj.mu.append(res.mu)
        traj.xi.append(res.xi)
        traj.results.append(res)
        ledger.record(res)
        log.info("step %d t=%.4g sweeps=%d max_el=%.2e slack=%.3e", k, state.t, res.sweeps,
                 res.residuals.max_el, ledger.rows[-1]["slack"])
        if callback is not None:
            callback(res, ledger)
    # mu at t=0 is not defined by the scheme; the piecewise-constant interpolant uses mu^1 there
    if len(traj.mu) > 1:
        traj.mu[0] = traj.mu[1]
    return traj
