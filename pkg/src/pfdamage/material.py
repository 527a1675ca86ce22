"""Constitutive functions: stiffness, eigenstrain, elastic and chemical
energies, damage potential and mobility, plus a sampling validator for the
structural assumptions the time-discrete scheme relies on.

Strains are arrays of shape ``(..., n, n)``; concentrations and damage
values broadcast against the leading dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DAMAGE_LAWS = ("increasing", "decreasing")


class MaterialError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialModel:
    """Material data.

    The stiffness is ``C(z) = s(z) C0`` with ``C0 e = 2 mu e + lam tr(e) I``
    and ``s(z) = eta + z`` (``damage_law="increasing"``).  The
    ``"decreasing"`` law ``s(z) = eta + 1 - z`` exists only to exercise the
    validator.  The double well ``psi_scale/4 (c^2 - 1)^2`` splits into the
    convex part ``psi_scale (c^4 + 1)/4`` and the concave part
    ``-psi_scale c^2/2``.
    """

    dim: int = 1
    eta: float = 0.1
    lame_lambda: float = 0.0
    lame_mu: float = 0.5
    ehat: tuple = ()
    alpha: float = 0.05
    psi_scale: float = 1.0
    m0: float = 1.0
    m1: float = 0.0
    mob_min: float | None = None
    mob_max: float | None = None
    p: float | None = None
    damage_law: str = "increasing"
    sobolev_exponent: float | None = None

    def __post_init__(self):
        n = self.dim
        if n not in (1, 2):
            raise MaterialError(f"dim must be 1 or 2, got {n}")
        eh = np.asarray(self.ehat, dtype=float)
        if eh.size == 0:
            eh = np.zeros((n, n))
        elif eh.size == 1:
            eh = float(eh.ravel()[0]) * np.eye(n)
        elif eh.size == n * n:
            eh = eh.reshape(n, n)
        else:
            raise MaterialError(f"ehat needs 1 or {n * n} entries, got {eh.size}")
        if not np.allclose(eh, eh.T):
            raise MaterialError("eigenstrain slope ehat must be symmetric")
        object.__setattr__(self, "ehat", tuple(map(tuple, eh)))
        if self.p is None:
            object.__setattr__(self, "p", 2.0 if n == 1 else 4.0)
        if self.sobolev_exponent is None:
            object.__setattr__(self, "sobolev_exponent", math.inf if n <= 2 else 2 * n / (n - 2))
        lo = self.m0 + min(0.0, self.m1)
        hi = self.m0 + max(0.0, self.m1)
        if self.mob_min is None:
            object.__setattr__(self, "mob_min", lo)
        if self.mob_max is None:
            object.__setattr__(self, "mob_max", hi)
        if self.damage_law not in DAMAGE_LAWS:
            raise MaterialError(f"damage_law must be one of {DAMAGE_LAWS}")
        if not self.eta > 0:
            raise MaterialError("eta must be positive")
        if self.lame_mu <= 0 or self.lame_lambda < 0:
            raise MaterialError("need lame_mu > 0 and lame_lambda >= 0")
        if self.alpha < 0:
            raise MaterialError("alpha must be nonnegative")
        if not (0 < self.mob_min <= self.mob_max):
            raise MaterialError("mobility bounds must satisfy 0 < C1 <= C2")

    @property
    def ehat_matrix(self) -> np.ndarray:
        return np.array(self.ehat, dtype=float)


def _check_z(z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0) or np.any(z > 1.0):
        raise MaterialError("damage variable outside [0, 1]")
    return z


def _trace(e):
    return np.trace(e, axis1=-2, axis2=-1)


def _ddot(a, b):
    return np.sum(a * b, axis=(-2, -1))


def stiffness_scale(mm: MaterialModel, z):
    z = np.asarray(z, dtype=float)
    return mm.eta + z if mm.damage_law == "increasing" else mm.eta + 1.0 - z


def stiffness_scale_prime(mm: MaterialModel, z):
    one = np.ones_like(np.asarray(z, dtype=float))
    return one if mm.damage_law == "increasing" else -one


def base_stiffness_apply(mm: MaterialModel, e):
    e = np.asarray(e, dtype=float)
    n = e.shape[-1]
    return 2.0 * mm.lame_mu * e + mm.lame_lambda * _trace(e)[..., None, None] * np.eye(n)


def stiffness_apply(mm: MaterialModel, z, e):
    """C(z) e."""
    z = _check_z(z)
    return stiffness_scale(mm, z)[..., None, None] * base_stiffness_apply(mm, e)


def stiffness_tensor(mm: MaterialModel, z) -> np.ndarray:
    """Components C_klij(z), shape z.shape + (n, n, n, n)."""
    z = _check_z(z)
    n = mm.dim
    C0 = np.zeros((n, n, n, n))
    for i in range(n):
        for j in range(n):
            unit = np.zeros((n, n))
            unit[i, j] = 1.0
            C0[:, :, i, j] = base_stiffness_apply(mm, unit)
    return stiffness_scale(mm, z)[..., None, None, None, None] * C0


def eigenstrain(mm: MaterialModel, c):
    """Vegard's law: e*(c) = c ehat."""
    c = np.asarray(c, dtype=float)
    return c[..., None, None] * mm.ehat_matrix


def _mismatch(mm, c, e):
    return np.asarray(e, dtype=float) - eigenstrain(mm, c)


def elastic_energy(mm: MaterialModel, c, e, z):
    """W = 1/2 C(z)(e - e*(c)) : (e - e*(c))."""
    z = _check_z(z)
    d = _mismatch(mm, c, e)
    return 0.5 * stiffness_scale(mm, z) * _ddot(base_stiffness_apply(mm, d), d)


def elastic_de(mm: MaterialModel, c, e, z):
    """W_,e = C(z)(e - e*(c))."""
    return stiffness_apply(mm, z, _mismatch(mm, c, e))


def elastic_dc(mm: MaterialModel, c, e, z):
    """W_,c = -C(z)(e - e*(c)) : ehat."""
    return -_ddot(elastic_de(mm, c, e, z), mm.ehat_matrix)


def elastic_dz(mm: MaterialModel, c, e, z):
    """W_,z = 1/2 C'(z)(e - e*(c)) : (e - e*(c))."""
    z = _check_z(z)
    d = _mismatch(mm, c, e)
    return 0.5 * stiffness_scale_prime(mm, z) * _ddot(base_stiffness_apply(mm, d), d)


def elastic_dcc(mm: MaterialModel, c, e, z):
    """W_,cc = C(z) ehat : ehat (independent of c and e)."""
    z = _check_z(z)
    eh = mm.ehat_matrix
    return stiffness_scale(mm, z) * _ddot(base_stiffness_apply(mm, eh), eh) + 0.0 * np.asarray(c)


def psi1(mm: MaterialModel, c):
    c = np.asarray(c, dtype=float)
    return mm.psi_scale * 0.25 * (c**4 + 1.0)


def psi2(mm: MaterialModel, c):
    c = np.asarray(c, dtype=float)
    return -mm.psi_scale * 0.5 * c**2


def chemical_energy(mm: MaterialModel, c):
    """Double well psi_scale/4 (c^2 - 1)^2."""
    c = np.asarray(c, dtype=float)
    return mm.psi_scale * 0.25 * (c**2 - 1.0) ** 2


def psi_prime(mm: MaterialModel, c):
    c = np.asarray(c, dtype=float)
    return mm.psi_scale * (c**3 - c)


def psi1_prime(mm: MaterialModel, c):
    return mm.psi_scale * np.asarray(c, dtype=float) ** 3


def psi2_prime(mm: MaterialModel, c):
    return -mm.psi_scale * np.asarray(c, dtype=float)


def psi1_second(mm: MaterialModel, c):
    return 3.0 * mm.psi_scale * np.asarray(c, dtype=float) ** 2


def psi_second(mm: MaterialModel, c):
    return mm.psi_scale * (3.0 * np.asarray(c, dtype=float) ** 2 - 1.0)


def damage_potential(mm: MaterialModel, z):
    """f(z) = alpha (1 - z)."""
    z = _check_z(z)
    return mm.alpha * (1.0 - z)


def f_prime(mm: MaterialModel, z):
    z = _check_z(z)
    return -mm.alpha * np.ones_like(z)


def damage_drop(mm: MaterialModel, z_old, z_new):
    """f(z_old) - f(z_new), written as alpha (z_new - z_old) so the
    difference of the affine potential carries no cancellation error."""
    return mm.alpha * (_check_z(z_new) - _check_z(z_old))


def mobility(mm: MaterialModel, c, z):
    """m0 + m1 z clamped to [C1, C2]; constant m0 when m1 == 0."""
    z = _check_z(z)
    c = np.asarray(c, dtype=float)
    m = mm.m0 + mm.m1 * z + 0.0 * c
    return np.clip(m, mm.mob_min, mm.mob_max)


# ----------------------------------------------------------------------
@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class AssumptionReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def lines(self):
        return [f"{'PASS' if c.passed else 'FAIL'} {c.name}: margin={c.margin:.6g} {c.detail}".rstrip()
                for c in self.checks]


def _random_unit_strains(rng, n, count):
    a = rng.standard_normal((count, n, n))
    e = 0.5 * (a + np.swapaxes(a, -1, -2))
    return e / np.linalg.norm(e, axis=(-2, -1))[:, None, None]


def validate_assumptions(mm: MaterialModel, seed: int = 0, samples: int = 256,
                         c_box: float = 3.0, atol: float = 1e-12) -> AssumptionReport:
    """Sample the standing assumptions on a bounded box.

    Inequality checks report their worst margin (negative = violated); the
    two growth checks report the smallest constant that works on the box
    and pass when it is finite."""
    rng = np.random.default_rng(seed)
    n = mm.dim
    report = AssumptionReport()
    e = _random_unit_strains(rng, n, samples)
    zs = np.linspace(0.0, 1.0, 21)
    ee = e[:, None]
    zz = zs[None, :]

    ce = _ddot(stiffness_apply(mm, zz, ee), ee)
    margin = float(np.min(ce - mm.eta))
    report.checks.append(AssumptionCheck("coercivity", margin >= -atol, margin, "min C(z)e:e - eta|e|^2"))

    dce = stiffness_scale_prime(mm, zz) * _ddot(base_stiffness_apply(mm, ee), ee)
    margin = float(np.min(dce))
    report.checks.append(AssumptionCheck("stiffness_monotone", margin >= -atol, margin, "min C'(z)e:e"))

    cs = np.linspace(-c_box, c_box, 241)
    m = mobility(mm, cs[:, None], zz)
    margin = float(min(np.min(m - mm.mob_min), np.min(mm.mob_max - m), mm.mob_min))
    report.checks.append(AssumptionCheck("mobility_bounds", margin >= -atol, margin, "C1 <= m <= C2, C1 > 0"))

    p1 = psi1(mm, cs)
    second = p1[:-2] - 2.0 * p1[1:-1] + p1[2:]
    margin = float(np.min(second))
    report.checks.append(AssumptionCheck("psi1_convex", margin >= -atol, margin, "second differences of Psi1"))
    margin = float(np.min(p1))
    report.checks.append(AssumptionCheck("psi1_nonnegative", margin >= -atol, margin))
    split = float(np.max(np.abs(psi1(mm, cs) + psi2(mm, cs) - chemical_energy(mm, cs))))
    report.checks.append(AssumptionCheck("psi_split", split <= 1e-12 * (1 + np.max(np.abs(p1))), -split))

    margin = float(np.min(damage_potential(mm, zs)))
    report.checks.append(AssumptionCheck("f_nonnegative", margin >= -atol, margin))

    margin = float(mm.p - n)
    report.checks.append(AssumptionCheck("p_exceeds_dim", margin > 0, margin, f"p={mm.p}, n={n}"))

    # growth constants over the sample box; finite constants mean the bound holds there
    q = mm.sobolev_exponent / 2.0
    if math.isinf(q):
        growth = 0.0
        detail = "critical exponent infinite for n <= 2"
    else:
        growth = float(np.max(np.abs(psi_prime(mm, cs)) / (1.0 + np.abs(cs) ** q)))
        detail = "growth constant |Psi'| <= C(1 + |c|^(2*/2))"
    report.checks.append(AssumptionCheck("psi_growth", bool(np.isfinite(growth)), growth, detail))
    g2 = float(np.max(np.abs(psi2_prime(mm, cs)) / (np.abs(cs) + 1.0)))
    report.checks.append(AssumptionCheck("psi2_growth", bool(np.isfinite(g2)), g2,
                                         "growth constant |Psi2'| <= C(|c| + 1)"))
    return report
