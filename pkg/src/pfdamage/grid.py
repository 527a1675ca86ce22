"""Structured tensor-product grids in one and two space dimensions.

Nodal scalar fields are flat arrays of length ``N`` (C order, x-axis
slowest); vector fields have shape ``(n, N)``.

All volume integrals go through one corner quadrature: every cell is
sampled at its ``2**n`` corners with weight ``|cell| / 2**n``.  At a corner,
the derivative along an axis is the difference quotient over the cell edge
that starts at that corner.  For nodal functions the rule reduces to the
tensor trapezoid rule, and for ``|grad c|**2`` it reproduces the standard
five-point stencil.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DIRICHLET = "DIRICHLET"
NEUMANN = "NEUMANN"

FACES = {1: ("left", "right"), 2: ("left", "right", "bottom", "top")}
# face -> (axis, side); side 0 is the low end of the axis
_FACE_AXIS = {"left": (0, 0), "right": (0, 1), "bottom": (1, 0), "top": (1, 1)}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    lengths: tuple[float, ...]
    nodes: tuple[int, ...]
    tags: dict[str, str] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.lengths)


def _first_difference(m: int, h: float) -> sp.csr_matrix:
    """(m-1) x m forward difference quotient."""
    return sp.diags([-np.ones(m - 1), np.ones(m - 1)], [0, 1], shape=(m - 1, m)) / h


def _second_difference(m: int, h: float) -> sp.csr_matrix:
    """m x m central second difference; the two boundary rows copy their
    interior neighbours (one-sided stencils)."""
    rows = sp.lil_matrix((m, m))
    for i in range(m):
        j = min(max(i, 1), m - 2)
        rows[i, j - 1] = 1.0
        rows[i, j] = -2.0
        rows[i, j + 1] = 1.0
    return rows.tocsr() / h**2


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return sp.csr_matrix(out)


class GridDesc:
    """Uniform box grid with tagged boundary faces and corner quadrature."""

    def __init__(self, config: GridConfig):
        n = config.dim
        if n not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {n}")
        if len(config.nodes) != n:
            raise GridError("need one node count per axis")
        for L in config.lengths:
            if not L > 0:
                raise GridError(f"axis lengths must be positive, got {L}")
        for m in config.nodes:
            if int(m) < 3:
                raise GridError(f"need at least 3 nodes per axis, got {m}")

        faces = FACES[n]
        unknown = set(config.tags) - set(faces)
        if unknown:
            raise GridError(f"unknown boundary faces {sorted(unknown)} for dimension {n}")
        face_tags = {}
        for f in faces:
            tag = str(config.tags.get(f, NEUMANN)).upper()
            if tag not in (DIRICHLET, NEUMANN):
                raise GridError(f"face {f}: tag must be DIRICHLET or NEUMANN, got {tag}")
            face_tags[f] = tag
        if DIRICHLET not in face_tags.values():
            raise GridError("the Dirichlet boundary must be nonempty")

        self.dim = n
        self.shape = tuple(int(m) for m in config.nodes)
        self.lengths = tuple(float(L) for L in config.lengths)
        self.spacing = tuple(L / (m - 1) for L, m in zip(self.lengths, self.shape))
        self.face_tags = face_tags
        self.num_nodes = int(np.prod(self.shape))
        self.cell_shape = tuple(m - 1 for m in self.shape)
        self.num_cells = int(np.prod(self.cell_shape))
        self.cell_volume = float(np.prod(self.spacing))
        self.volume = float(np.prod(self.lengths))

        axes = [np.linspace(0.0, L, m) for L, m in zip(self.lengths, self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.x = np.stack([a.ravel() for a in mesh])  # (n, N)

        idx = np.arange(self.num_nodes).reshape(self.shape)
        on_face = {}
        for f in faces:
            axis, side = _FACE_AXIS[f]
            sl = [slice(None)] * n
            sl[axis] = 0 if side == 0 else -1
            mask = np.zeros(self.num_nodes, dtype=bool)
            mask[idx[tuple(sl)].ravel()] = True
            on_face[f] = mask
        self.face_masks = on_face
        self.dirichlet_mask = np.zeros(self.num_nodes, dtype=bool)
        boundary = np.zeros(self.num_nodes, dtype=bool)
        for f, mask in on_face.items():
            boundary |= mask
            if face_tags[f] == DIRICHLET:
                self.dirichlet_mask |= mask
        self.boundary_mask = boundary
        self.neumann_mask = boundary & ~self.dirichlet_mask
        self.normals = {}
        for f in faces:
            axis, side = _FACE_AXIS[f]
            nu = np.zeros(n)
            nu[axis] = -1.0 if side == 0 else 1.0
            self.normals[f] = nu

        self._build_operators(idx)

    # ------------------------------------------------------------------
    def _build_operators(self, idx):
        n = self.dim
        cs = self.cell_shape
        self.corner_offsets = list(itertools.product((0, 1), repeat=n))
        self.num_corners = len(self.corner_offsets)
        self.qweight = self.cell_volume / self.num_corners

        self._select = []
        self._diff = []
        cells = np.arange(self.num_cells)
        for off in self.corner_offsets:
            sl = tuple(slice(o, o + m) for o, m in zip(off, cs))
            node = idx[sl].ravel()
            S = sp.csr_matrix((np.ones(self.num_cells), (cells, node)),
                              shape=(self.num_cells, self.num_nodes))
            Gs = []
            for d in range(n):
                lo_off = list(off)
                lo_off[d] = 0
                hi_off = list(off)
                hi_off[d] = 1
                lo = idx[tuple(slice(o, o + m) for o, m in zip(lo_off, cs))].ravel()
                hi = idx[tuple(slice(o, o + m) for o, m in zip(hi_off, cs))].ravel()
                h = self.spacing[d]
                G = sp.csr_matrix(
                    (np.r_[np.full(self.num_cells, -1.0 / h), np.full(self.num_cells, 1.0 / h)],
                     (np.r_[cells, cells], np.r_[lo, hi])),
                    shape=(self.num_cells, self.num_nodes))
                Gs.append(G)
            self._select.append(S)
            self._diff.append(Gs)

        self.weights = np.asarray(
            sum(S.T @ np.full(self.num_cells, self.qweight) for S in self._select)).ravel()
        self.mass = sp.diags(self.weights, format="csr")

        eye = [sp.identity(m, format="csr") for m in self.shape]
        second = []
        for d in range(n):
            mats = list(eye)
            mats[d] = _second_difference(self.shape[d], self.spacing[d])
            second.append(_kron_all(mats))
        self._second = second
        self._mixed = None
        if n == 2:
            self._mixed = _kron_all([_first_difference(self.shape[0], self.spacing[0]),
                                     _first_difference(self.shape[1], self.spacing[1])])
        H = sum(D.T @ self.mass @ D for D in second)
        if self._mixed is not None:
            H = H + 2.0 * self.cell_volume * (self._mixed.T @ self._mixed)
        self.hessian_form = sp.csr_matrix(H)

    # ------------------------------------------------------------------
    # corner quadrature primitives
    def corner_values(self, f: np.ndarray) -> np.ndarray:
        """Nodal values at every quadrature corner, shape (corners, cells)."""
        return np.stack([S @ f for S in self._select])

    def corner_values_T(self, q: np.ndarray) -> np.ndarray:
        return sum(S.T @ q[k] for k, S in enumerate(self._select))

    def corner_gradient(self, f: np.ndarray) -> np.ndarray:
        """Edge difference quotients at every corner, shape (corners, cells, n)."""
        return np.stack([np.stack([G @ f for G in Gs], axis=-1) for Gs in self._diff])

    def corner_gradient_T(self, q: np.ndarray) -> np.ndarray:
        out = np.zeros(self.num_nodes)
        for k, Gs in enumerate(self._diff):
            for d, G in enumerate(Gs):
                out += G.T @ q[k, :, d]
        return out

    def corner_strain(self, u: np.ndarray) -> np.ndarray:
        """Symmetrized gradient of a vector field, shape (corners, cells, n, n)."""
        grads = np.stack([self.corner_gradient(u[k]) for k in range(self.dim)], axis=-2)
        return 0.5 * (grads + np.swapaxes(grads, -1, -2))

    def corner_strain_T(self, q: np.ndarray) -> np.ndarray:
        """Adjoint of corner_strain for symmetric corner tensors q."""
        qs = 0.5 * (q + np.swapaxes(q, -1, -2))
        return np.stack([self.corner_gradient_T(qs[..., k, :]) for k in range(self.dim)])

    def quad(self, q: np.ndarray) -> float:
        """Corner quadrature of a field sampled at corners."""
        return float(self.qweight * np.sum(q))

    def stiffness(self, weight: np.ndarray | float = 1.0) -> sp.csr_matrix:
        """Matrix of the form (phi, psi) -> int weight grad phi . grad psi,
        with the nodal weight sampled at the corner node."""
        wt = np.broadcast_to(np.asarray(weight, dtype=float), (self.num_nodes,))
        K = sp.csr_matrix((self.num_nodes, self.num_nodes))
        for S, Gs in zip(self._select, self._diff):
            D = sp.diags(self.qweight * (S @ wt))
            for G in Gs:
                K = K + G.T @ D @ G
        return sp.csr_matrix(K)

    def strain_operators(self):
        """Sparse maps u (flattened (n*N,)) -> strain component (k, l) at each
        corner, as a list over corners of n x n nested lists."""
        n, N = self.dim, self.num_nodes
        ops = []
        for Gs in self._diff:
            comp = []
            for k in range(n):
                row = []
                for l in range(n):
                    blocks_k = [sp.csr_matrix((self.num_cells, N))] * n
                    blocks_k = list(blocks_k)
                    blocks_k[k] = blocks_k[k] + 0.5 * Gs[l]
                    blocks_k[l] = blocks_k[l] + 0.5 * Gs[k]
                    row.append(sp.hstack(blocks_k, format="csr"))
                comp.append(row)
            ops.append(comp)
        return ops

    # ------------------------------------------------------------------
    def reshape(self, f: np.ndarray) -> np.ndarray:
        return np.asarray(f).reshape(self.shape)

    def node_tags(self) -> np.ndarray:
        """Per-node tag: '' for interior nodes, otherwise DIRICHLET or NEUMANN."""
        tags = np.full(self.num_nodes, "", dtype=object)
        tags[self.neumann_mask] = NEUMANN
        tags[self.dirichlet_mask] = DIRICHLET
        return tags

    def __repr__(self):
        return f"GridDesc(dim={self.dim}, shape={self.shape}, lengths={self.lengths})"


def build_grid(config: GridConfig) -> GridDesc:
    return GridDesc(config)


def integrate(g: GridDesc, field: np.ndarray) -> float:
    """Tensor trapezoid rule of a nodal scalar field."""
    return float(g.weights @ np.asarray(field, dtype=float))


def gradient(g: GridDesc, field: np.ndarray) -> np.ndarray:
    """Cell-centred gradient, shape (cells, n): the mean of the corner
    difference quotients of each cell."""
    return g.corner_gradient(np.asarray(field, dtype=float)).mean(axis=0)


def symmetric_gradient(g: GridDesc, u: np.ndarray) -> np.ndarray:
    """Cell-centred strain (grad u + grad u^T)/2, shape (cells, n, n)."""
    return g.corner_strain(np.asarray(u, dtype=float)).mean(axis=0)


def second_gradient_form(g: GridDesc, u: np.ndarray, w: np.ndarray) -> float:
    """sum_{i,j,k} int d_ij u_k d_ij w_k dx.

    Pure second differences live on nodes (trapezoid weights, one-sided at the
    boundary); mixed ones on cell centres as composed first differences.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    return float(sum(uk @ (g.hessian_form @ wk) for uk, wk in zip(u, w)))


def apply_dirichlet(g: GridDesc, u: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Copy of u with every Dirichlet node overwritten by b."""
    out = np.array(u, dtype=float, copy=True)
    b = np.broadcast_to(np.asarray(b, dtype=float), out.shape)
    out[..., g.dirichlet_mask] = b[..., g.dirichlet_mask]
    return out
