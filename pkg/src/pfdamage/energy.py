"""Discrete free-energy pieces and their exact nodal gradients.

Everything is evaluated with the corner quadrature of :mod:`pfdamage.grid`,
so the gradient of each integral is the exact derivative of its discrete
value.  The discrete Euler-Lagrange equations are those derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import material as mat
from .grid import GridDesc, second_gradient_form


@dataclass
class CornerFields:
    c: np.ndarray       # (corners, cells)
    z: np.ndarray
    strain: np.ndarray  # (corners, cells, n, n)


def corner_fields(g: GridDesc, c, u, z) -> CornerFields:
    return CornerFields(g.corner_values(c), g.corner_values(z), g.corner_strain(u))


def elastic_total(g, mm, c, u, z, cf: CornerFields | None = None) -> float:
    cf = cf or corner_fields(g, c, u, z)
    return g.quad(mat.elastic_energy(mm, cf.c, cf.strain, cf.z))


def elastic_grad_c(g, mm, c, u, z, cf=None) -> np.ndarray:
    """d/dc_i of int W: the pairing int W_,c zeta_i."""
    cf = cf or corner_fields(g, c, u, z)
    return g.corner_values_T(g.qweight * mat.elastic_dc(mm, cf.c, cf.strain, cf.z))


def elastic_grad_z(g, mm, c, u, z, cf=None) -> np.ndarray:
    cf = cf or corner_fields(g, c, u, z)
    return g.corner_values_T(g.qweight * mat.elastic_dz(mm, cf.c, cf.strain, cf.z))


def elastic_grad_u(g, mm, c, u, z, cf=None) -> np.ndarray:
    """Pairing int W_,e : eps(zeta) for every nodal vector test function."""
    cf = cf or corner_fields(g, c, u, z)
    return g.corner_strain_T(g.qweight * mat.elastic_de(mm, cf.c, cf.strain, cf.z))


def elastic_work(g, mm, c, u, z, w) -> float:
    """int W_,e(c, eps(u), z) : eps(w) dx."""
    cf = corner_fields(g, c, u, z)
    return g.quad(np.sum(mat.elastic_de(mm, cf.c, cf.strain, cf.z) * g.corner_strain(w), axis=(-2, -1)))


def elastic_cc_diag(g, mm, c, u, z) -> np.ndarray:
    cf = corner_fields(g, c, u, z)
    return g.corner_values_T(g.qweight * mat.elastic_dcc(mm, cf.c, cf.strain, cf.z))


def p_energy(g: GridDesc, z, p: float) -> float:
    """(1/p) int |grad z|^p."""
    gz = g.corner_gradient(z)
    return g.quad(np.sum(gz**2, axis=-1) ** (p / 2.0)) / p


def p_energy_grad(g: GridDesc, z, p: float) -> np.ndarray:
    gz = g.corner_gradient(z)
    nrm2 = np.sum(gz**2, axis=-1)
    fac = nrm2 ** ((p - 2.0) / 2.0) if p != 2 else np.ones_like(nrm2)
    return g.corner_gradient_T(g.qweight * fac[..., None] * gz)


def p_energy_hessian(g: GridDesc, z, p: float):
    """Sparse Hessian of (1/p) int |grad z|^p (p >= 2)."""
    import scipy.sparse as sp

    gz = g.corner_gradient(z)
    nrm2 = np.sum(gz**2, axis=-1)
    n = g.dim
    H = sp.csr_matrix((g.num_nodes, g.num_nodes))
    for k, Gs in enumerate(g._diff):
        base = nrm2[k] ** ((p - 2.0) / 2.0) if p != 2 else np.ones_like(nrm2[k])
        if p != 2:
            safe = np.where(nrm2[k] > 0, nrm2[k], 1.0)
            rank1 = np.where(nrm2[k] > 0, (p - 2.0) * safe ** ((p - 4.0) / 2.0), 0.0)
        for d1 in range(n):
            for d2 in range(n):
                coef = np.zeros(g.num_cells)
                if d1 == d2:
                    coef = coef + base
                if p != 2:
                    coef = coef + rank1 * gz[k, :, d1] * gz[k, :, d2]
                H = H + Gs[d1].T @ sp.diags(g.qweight * coef) @ Gs[d2]
    return sp.csr_matrix(H)


def grad_c_energy(g: GridDesc, c) -> float:
    gc = g.corner_gradient(c)
    return 0.5 * g.quad(np.sum(gc**2, axis=-1))


def l2_sq(g: GridDesc, f) -> float:
    """Squared (lumped) L2 norm of a scalar or vector nodal field."""
    f = np.atleast_2d(np.asarray(f, dtype=float))
    return float(sum(g.weights @ (fk * fk) for fk in f))


def l2_inner(g: GridDesc, a, b) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return float(sum(g.weights @ (ak * bk) for ak, bk in zip(a, b)))


@dataclass
class FreeEnergyParts:
    grad_z: float
    grad_c: float
    elastic: float
    damage: float
    chemical: float
    second_gradient: float

    @property
    def total(self) -> float:
        return (self.grad_z + self.grad_c + self.elastic + self.damage + self.chemical
                + self.second_gradient)


def free_energy_parts(g: GridDesc, mm, delta: float, c, u, z) -> FreeEnergyParts:
    return FreeEnergyParts(
        grad_z=p_energy(g, z, mm.p),
        grad_c=grad_c_energy(g, c),
        elastic=elastic_total(g, mm, c, u, z),
        damage=float(g.weights @ mat.damage_potential(mm, z)),
        chemical=float(g.weights @ mat.chemical_energy(mm, c)),
        second_gradient=0.5 * delta * second_gradient_form(g, u, u),
    )


def free_energy(g: GridDesc, mm, delta: float, c, u, z) -> float:
    return free_energy_parts(g, mm, delta, c, u, z).total
