"""Mobility-weighted H^{-1}-type metric on zero-mean fields.

For a zero-mean density ``v`` the potential ``phi = A^{-1} v`` solves the
discrete Neumann problem ``(m grad phi, grad zeta) = (v, zeta)`` for every
nodal ``zeta``.  It is normalised to ``int phi = 0``.  The inner product
is ``<v, w>_V0 = (A^{-1} v, w)_{L^2}``.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .grid import GridDesc, integrate


class SolverError(RuntimeError):
    def __init__(self, message, residual=None, iterate=None):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class NotInV0Error(ValueError):
    pass


def pcg(A, b, x0=None, *, precond=None, tol=1e-10, maxiter=None, project=None):
    """Preconditioned conjugate gradients for symmetric positive
    (semi-)definite ``A``.

    ``project`` is applied to every residual; pass a mean-removal map when
    ``A`` is singular with a known kernel so that round-off cannot drift the
    residual out of the range.  Stops when ``||r||_2 <= tol``.
    """
    n = b.shape[0]
    maxiter = 10 * n if maxiter is None else maxiter
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    if project is not None:
        r = project(r)
    if precond is None:
        precond = np.ones(n)
    z = r / precond
    p = z.copy()
    rz = r @ z
    res = float(np.linalg.norm(r))
    for it in range(maxiter + 1):
        if res <= tol:
            return x, it, res
        if it == maxiter:
            break
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        a = rz / pAp
        x += a * p
        r -= a * Ap
        if project is not None:
            r = project(r)
        res = float(np.linalg.norm(r))
        z = r / precond
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"conjugate gradients did not reach {tol:.1e} (residual {res:.3e})",
                      residual=res, iterate=x)


class WeightedPoissonProblem:
    """Discrete operator ``A: phi -> (m grad phi, grad .)`` on zero-mean fields.

    ``method="cg"`` uses Jacobi-preconditioned CG on the singular but
    consistent system.  ``method="direct"`` factors the augmented matrix
    ``K + s w w^T`` once; that matrix is nonsingular and its solution of a
    consistent system is exactly the zero-mean potential.
    """

    def __init__(self, grid: GridDesc, weight, tol: float = 1e-10, maxiter: int | None = None,
                 method: str = "cg", mean_tol: float = 1e-9):
        weight = np.broadcast_to(np.asarray(weight, dtype=float), (grid.num_nodes,)).copy()
        if not np.all(weight > 0):
            raise ValueError("weight must be strictly positive")
        if not tol > 0:
            raise ValueError("tolerance must be positive")
        if method not in ("cg", "direct"):
            raise ValueError(f"unknown method {method!r}")
        self.grid = grid
        self.weight = weight
        self.tol = tol
        self.maxiter = maxiter
        self.method = method
        self.mean_tol = mean_tol
        self.K = grid.stiffness(weight)
        self._diag = self.K.diagonal()
        self._chol = None
        self._dense_inv = None

    # ------------------------------------------------------------------
    def _rhs_vector(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        g = self.grid
        mean = integrate(g, rhs)
        scale = max(1.0, float(g.weights @ np.abs(rhs)))
        if abs(mean) > self.mean_tol * scale:
            raise NotInV0Error(f"right-hand side has nonzero mean {mean:.3e}")
        r = g.weights * rhs
        return r - r.sum() / r.size

    def _augmented(self):
        w = self.grid.weights
        s = float(np.mean(self._diag)) / float(w @ w)
        return self.K.toarray() + s * np.outer(w, w)

    def _zero_mean(self, phi):
        g = self.grid
        return phi - integrate(g, phi) / g.volume

    def solve(self, rhs) -> np.ndarray:
        """Zero-mean potential of a zero-mean nodal density."""
        r = self._rhs_vector(rhs)
        if not np.any(r):
            return np.zeros_like(r)
        if self.method == "direct":
            if self._chol is None:
                self._chol = sla.cho_factor(self._augmented())
            return self._zero_mean(sla.cho_solve(self._chol, r))
        phi, _, _ = pcg(self.K, r, precond=self._diag, tol=self.tol, maxiter=self.maxiter,
                        project=lambda v: v - v.sum() / v.size)
        return self._zero_mean(phi)

    def dense_inverse(self) -> np.ndarray:
        """Matrix G with ``G @ r`` the zero-mean potential for every load
        vector ``r`` with ``sum(r) == 0``."""
        if self._dense_inv is None:
            if self._chol is None:
                self._chol = sla.cho_factor(self._augmented())
            G = sla.cho_solve(self._chol, np.eye(self.grid.num_nodes))
            self._dense_inv = 0.5 * (G + G.T)
        return self._dense_inv

    def weak_residual(self, phi, rhs) -> np.ndarray:
        """Defect of the weak form against every nodal basis function."""
        return self.K @ phi - self.grid.weights * np.asarray(rhs, dtype=float)


def solve_weighted_neumann(prob: WeightedPoissonProblem, rhs) -> np.ndarray:
    return prob.solve(rhs)


def v0_inner(prob: WeightedPoissonProblem, v, w) -> float:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if not np.any(v) or not np.any(w):
        prob._rhs_vector(v)
        prob._rhs_vector(w)
        return 0.0
    prob._rhs_vector(w)
    return integrate(prob.grid, prob.solve(v) * w)


def v0_norm_sq(prob: WeightedPoissonProblem, v) -> float:
    return v0_inner(prob, v, v)

