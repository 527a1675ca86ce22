import numpy as np
import pytest

from pfdamage.grid import GridConfig, build_grid
from pfdamage.material import MaterialModel
from pfdamage.stepper import StepperParams, initial_state


def grid1d(nodes=5, length=1.0, left="DIRICHLET", right="NEUMANN"):
    return build_grid(GridConfig((length,), (nodes,), {"left": left, "right": right}))


def grid2d(nodes=(4, 3), lengths=(1.0, 0.8), **tags):
    tags = tags or {"left": "DIRICHLET"}
    return build_grid(GridConfig(tuple(lengths), tuple(nodes), tags))


def random_history(g, scenario, params, seed=0, c_scale=0.3, motion=0.05):
    """A history state with every field generic: z_prev in (0.3, 1), nonzero
    velocities, c away from constants."""
    rng = np.random.default_rng(seed)
    st = initial_state(scenario, params)
    n, N = g.dim, g.num_nodes
    st.c = scenario.c0 + c_scale * rng.standard_normal(N)
    st.c += (scenario.c0 @ g.weights - st.c @ g.weights) / g.volume
    st.z = rng.uniform(0.3, 1.0, N)
    b = np.atleast_2d(scenario.b(0.0))
    st.u = b + motion * rng.standard_normal((n, N))
    st.u[:, g.dirichlet_mask] = b[:, g.dirichlet_mask]
    st.u_prev = st.u - params.tau * motion * rng.standard_normal((n, N))
    return st


@pytest.fixture
def g1():
    return grid1d()


@pytest.fixture
def mm1():
    return MaterialModel(dim=1, ehat=(0.3,))


@pytest.fixture
def mm2():
    return MaterialModel(dim=2, ehat=(0.2, 0.05, 0.05, 0.1), lame_lambda=0.3)


@pytest.fixture
def params():
    return StepperParams(tau=0.05, delta=1e-2, T=0.2)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
