"""Scenario library: equilibrium, stretch and phase-separation."""

from __future__ import annotations

import numpy as np

from .grid import GridDesc, integrate
from .stepper import Scenario

# parameter name -> (type, default)
SCENARIO_PARAMS = {
    "equilibrium": {},
    "stretch": {"b1": (float, 1.0), "c_amp": (float, 0.1)},
    "phase-separation": {"amplitude": (float, 0.05), "modes": (int, 3), "mean": (float, 0.0)},
}


class ScenarioError(ValueError):
    pass


def _zeros_vec(g: GridDesc):
    return np.zeros((g.dim, g.num_nodes))


def equilibrium(g: GridDesc) -> Scenario:
    zero_vec = lambda t: _zeros_vec(g)
    return Scenario(name="equilibrium", c0=np.zeros(g.num_nodes), u0=_zeros_vec(g),
                    v0=_zeros_vec(g), z0=np.ones(g.num_nodes), b=zero_vec, b_dot=zero_vec,
                    l=zero_vec, quiescent=True)


def stretch(g: GridDesc, b1: float = 1.0, c_amp: float = 0.1) -> Scenario:
    """Uniaxial stretch along x: b(x, t) = t b1 x / L_x on the whole domain,
    imposed on Gamma_D.  The initial velocity matches the drive so the bar
    starts in a homogeneous state of motion."""
    L = g.lengths[0]
    x = g.x[0]
    profile = _zeros_vec(g)
    profile[0] = b1 * x / L
    c0 = c_amp * np.cos(np.pi * x / L)
    return Scenario(name="stretch", c0=c0, u0=_zeros_vec(g), v0=profile.copy(),
                    z0=np.ones(g.num_nodes), b=lambda t: t * profile,
                    b_dot=lambda t: profile.copy(), l=lambda t: _zeros_vec(g))


def phase_separation(g: GridDesc, amplitude: float = 0.05, modes: int = 3, mean: float = 0.0,
                     seed: int = 0) -> Scenario:
    """Small zero-mean perturbation of a uniform mixture built from the lowest
    cosine modes with seeded random coefficients; no mechanical loading."""
    rng = np.random.default_rng(seed)
    c = np.zeros(g.num_nodes)
    for d in range(g.dim):
        for j in range(1, modes + 1):
            c += rng.uniform(-1.0, 1.0) * np.cos(j * np.pi * g.x[d] / g.lengths[d])
    c -= integrate(g, c) / g.volume
    scale = np.max(np.abs(c))
    c = amplitude * c / scale if scale > 0 else c
    zero_vec = lambda t: _zeros_vec(g)
    return Scenario(name="phase-separation", c0=mean + c, u0=_zeros_vec(g), v0=_zeros_vec(g),
                    z0=np.ones(g.num_nodes), b=zero_vec, b_dot=zero_vec, l=zero_vec,
                    quiescent=True)


def build_scenario(name: str, g: GridDesc, params: dict | None = None, seed: int = 0) -> Scenario:
    params = dict(params or {})
    if name not in SCENARIO_PARAMS:
        raise ScenarioError(f"unknown scenario {name!r}; choose from {sorted(SCENARIO_PARAMS)}")
    unknown = set(params) - set(SCENARIO_PARAMS[name])
    if unknown:
        raise ScenarioError(f"scenario {name!r} has no parameters {sorted(unknown)}")
    if name == "equilibrium":
        return equilibrium(g)
    if name == "stretch":
        if g.face_tags.get("right") != "DIRICHLET" or g.face_tags.get("left") != "DIRICHLET":
            raise ScenarioError("stretch needs DIRICHLET tags on the left and right faces")
        return stretch(g, **params)
    return phase_separation(g, seed=seed, **params)
