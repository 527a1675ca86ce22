import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid1d, grid2d, random_history
from pfdamage import energy as en
from pfdamage.diagnostics import (EnergyLedger, LEDGER_COLUMNS, check_energy_inequality,
                                  conservation_checks, el_residuals, energy_terms, error_terms,
                                  monitors, slack_tolerance, subgradient_xi, xi_pairing)
from pfdamage.grid import integrate
from pfdamage.material import MaterialModel
from pfdamage.scenarios import equilibrium, phase_separation, stretch
from pfdamage.stepper import StepperParams, StepResult, initial_state, run_simulation, step


def strained_state(strain, z, nodes=5):
    """1D bar with uniform strain, c = 0 and the given damage values."""
    g = grid1d(nodes, right="DIRICHLET")
    sc = stretch(g, b1=0.0, c_amp=0.0)
    st_ = initial_state(sc, StepperParams(tau=0.1))
    st_.u = strain * np.atleast_2d(g.x[0])
    st_.z = np.asarray(z, dtype=float)
    return g, st_


# --- conservation --------------------------------------------------------
def test_conservation_checks_corruptions():
    g = grid1d(9)
    c = 0.2 * np.cos(np.pi * g.x[0])
    z = np.full(9, 0.7)
    assert conservation_checks(g, c, z, z, integrate(g, c)) == (0.0, 0.0, 0.0)
    dev, _, _ = conservation_checks(g, c + 0.1, z, z, integrate(g, c))
    assert dev == pytest.approx(0.1 / (abs(integrate(g, c)) + 1.0), rel=1e-12)
    z_bad = z.copy()
    z_bad[4] += 0.05
    _, irrev, _ = conservation_checks(g, c, z_bad, z, integrate(g, c))
    assert irrev == pytest.approx(0.05)
    z_bad[4] = -0.01
    assert conservation_checks(g, c, z_bad, z, integrate(g, c))[2] == pytest.approx(0.01)


# --- subgradient ---------------------------------------------------------
def test_xi_zero_when_undamaged():
    g, s = strained_state(1.0, np.full(5, 0.5))
    assert np.all(subgradient_xi(g, MaterialModel(dim=1, alpha=0.2), s) == 0.0)


@pytest.mark.parametrize("strain_sq,expected", [(1.0, -0.3), (0.2, 0.0)])
def test_xi_hand_values(strain_sq, expected):
    # W_,z = strain^2 / 2 for c = 0, f' = -alpha
    z = np.array([0.5, 0.5, 0.0, 0.5, 0.5])
    g, s = strained_state(np.sqrt(strain_sq), z)
    xi = subgradient_xi(g, MaterialModel(dim=1, alpha=0.2), s)
    assert xi[2] == pytest.approx(expected, abs=1e-12)
    assert np.all(xi[[0, 1, 3, 4]] == 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_xi_sign_support_and_pairing(seed):
    rng = np.random.default_rng(seed)
    z = np.where(rng.random(9) < 0.5, 0.0, rng.uniform(0, 1, 9))
    g, s = strained_state(rng.uniform(0, 2), z, nodes=9)
    s.c = 0.3 * rng.standard_normal(9)
    xi = subgradient_xi(g, MaterialModel(dim=1, ehat=(0.3,), alpha=0.1), s)
    assert np.all(xi <= 0.0)
    assert np.all(xi[z > 1e-10] == 0.0)
    for _ in range(10):
        zeta = rng.uniform(0, 2, 9)
        assert xi_pairing(g, xi, z, zeta) <= 0.0


# --- energy terms --------------------------------------------------------
def test_energy_terms_equilibrium():
    g = grid2d((5, 4))
    mm = MaterialModel(dim=2, ehat=(0.5,))
    p = StepperParams(tau=0.1)
    sc = equilibrium(g)
    hist = initial_state(sc, p)
    res = step(hist, sc, p, mm, g)
    t = energy_terms(res.state, hist, sc, p, mm, g, res.mu)
    E0 = en.free_energy(g, mm, p.delta, hist.c, hist.u, hist.z)
    assert t["E"] == E0
    assert t["K"] == 0.0 and t["D_inc"] == 0.0 and t["W_bulk_inc"] == 0.0


def test_damage_only_dissipation_hand_sum():
    g = grid1d(3)
    mm = MaterialModel(dim=1)
    p = StepperParams(tau=0.1)
    sc = equilibrium(g)
    hist = initial_state(sc, p)
    s = hist.copy()
    s.z = np.array([0.9, 0.8, 0.9])
    s.k, s.t = 1, 0.1
    t = energy_terms(s, hist, sc, p, mm, g, np.zeros(3))
    # weights (1/4, 1/2, 1/4), rates (-1, -2, -1): 0.1 * (0.25 + 2 + 0.25)
    assert t["D_inc"] == pytest.approx(0.25, rel=1e-13)


# --- error terms ---------------------------------------------------------
def test_error_terms_vanish_without_motion():
    g = grid1d(7, right="DIRICHLET")
    mm = MaterialModel(dim=1, ehat=(0.3,))
    p = StepperParams(tau=0.1)
    hist = random_history(g, stretch(g), p, seed=2)
    assert error_terms(hist, hist, p, mm, g) == (0.0, 0.0, 0.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_e4_exactly_zero_for_linear_f(seed):
    rng = np.random.default_rng(seed)
    g = grid1d(9, right="DIRICHLET")
    mm = MaterialModel(dim=1, ehat=(0.3,), alpha=rng.uniform(0, 1))
    p = StepperParams(tau=rng.uniform(0.001, 0.5))
    hist = random_history(g, stretch(g), p, seed=seed)
    s = hist.copy()
    s.z = hist.z * rng.uniform(0, 1, 9)
    s.c = hist.c + 0.1 * rng.standard_normal(9)
    assert error_terms(s, hist, p, mm, g)[3] == 0.0


def test_e2_quadratic_taylor_remainder():
    # u and z frozen, W quadratic in c with W_,cc = (eta + z) * 2 mu * ehat^2;
    # e2 is the exact second-order remainder int W_,cc d^2 / 2 / tau
    g = grid1d(5, right="DIRICHLET")
    mm = MaterialModel(dim=1, ehat=(0.3,))
    p = StepperParams(tau=0.1)
    hist = initial_state(stretch(g, b1=0.5, c_amp=0.0), p)
    hist.u = 0.4 * np.atleast_2d(g.x[0])
    s = hist.copy()
    d = np.array([0.1, -0.2, 0.05, 0.0, 0.3])
    s.c = hist.c + d
    a = (0.1 + 1.0) * 1.0 * 0.3**2
    hand = a * np.sum(np.array([0.125, 0.25, 0.25, 0.25, 0.125]) * d**2) / 2 / 0.1
    assert error_terms(s, hist, p, mm, g)[1] == pytest.approx(hand, rel=1e-12)


# --- ledger --------------------------------------------------------------
def test_ledger_equilibrium_slack_zero():
    g = grid1d(9)
    p = StepperParams(tau=0.1, T=0.3)
    traj = run_simulation(equilibrium(g), p, MaterialModel(ehat=(0.2,)), g)
    assert [r["slack"] for r in traj.ledger.rows] == [0.0, 0.0, 0.0]
    assert traj.ledger.passed
    assert list(traj.ledger.table()[0]) == list(LEDGER_COLUMNS)


def test_ledger_stretch_slack_and_work_identity():
    g = grid1d(17, right="DIRICHLET")
    mm = MaterialModel(dim=1, ehat=(0.3,), alpha=0.02)
    sc = stretch(g, b1=1.0, c_amp=0.2)
    p = StepperParams(tau=0.02, T=0.3)
    traj = run_simulation(sc, p, mm, g)
    led = traj.ledger
    assert led.passed, led.failures
    tol = slack_tolerance(led.E0, led.K0)
    assert all(r["slack"] >= -tol for r in led.rows)
    assert all(b["D"] >= a["D"] for a, b in zip(led.rows, led.rows[1:]))
    # summation by parts: the assembled boundary terms equal sum_j (v_j - v_{j-1}) . b_rate_j
    bulk = sbp = 0.0
    for k in range(1, len(traj.states)):
        s, h = traj.states[k], traj.states[k - 1]
        terms = energy_terms(s, h, sc, p, mm, g, traj.mu[k])
        bulk += terms["W_bulk_inc"]
        sbp += en.l2_inner(g, np.atleast_2d(s.v) - np.atleast_2d(h.v), terms["b_rate"])
        assert led.rows[k - 1]["W_ext"] == pytest.approx(bulk + sbp, rel=1e-10, abs=1e-14)


def test_quiescent_no_work_and_monotone():
    g = grid1d(33, length=8.0)
    mm = MaterialModel(dim=1, ehat=(0.1,))
    p = StepperParams(tau=0.05, T=0.5)
    traj = run_simulation(phase_separation(g, amplitude=0.2, seed=1), p, mm, g)
    rows = traj.ledger.rows
    assert all(r["W_ext"] == 0.0 for r in rows)
    tol = slack_tolerance(traj.ledger.E0, traj.ledger.K0)
    totals = [traj.ledger.E0 + traj.ledger.K0] + [r["E"] + r["K"] + r["D"] for r in rows]
    assert all(b <= a + tol for a, b in zip(totals, totals[1:]))


def test_check_energy_inequality_flags():
    row = {"E0": 1.0, "K0": 0.0, "W_ext": 0.0, "E": 0.9, "K": 0.0, "D": 0.1,
           "E1": 0.0, "E2": 0.0, "E3": 0.0, "E4": 0.0}
    slack, ok = check_energy_inequality(row)
    assert slack == pytest.approx(0.0, abs=1e-15) and ok
    row["E"] = 1.0
    slack, ok = check_energy_inequality(row)
    assert slack == pytest.approx(-0.1) and not ok


def test_corrupted_step_flagged():
    g = grid1d(9, right="DIRICHLET")
    mm = MaterialModel(dim=1, ehat=(0.3,))
    sc = stretch(g)
    p = StepperParams(tau=0.05)
    hist = initial_state(sc, p)
    hist.z = np.full(9, 0.6)
    sc.z0 = hist.z.copy()
    res = step(hist, sc, p, mm, g)
    bad = res.state.copy()
    bad.z = bad.z.copy()
    bad.z[4] = 0.9
    rep = el_residuals(bad, res.mu, hist, sc, p, mm, g)
    assert rep.irrev_viol == pytest.approx(0.3)
    led = EnergyLedger.start(g, mm, p, sc, hist)
    led.record(StepResult(state=bad, mu=res.mu, xi=res.xi, residuals=rep,
                          objective_trace=[], objective_start=0.0, sweeps=0))
    assert not led.passed
    assert any("irreversibility" in f for f in led.failures)


# --- residuals -----------------------------------------------------------
def test_r4_hand_built_violation():
    g = grid1d(5, right="DIRICHLET")
    mm = MaterialModel(dim=1)
    sc = stretch(g, b1=0.0)
    p = StepperParams(tau=0.1)
    hist = initial_state(sc, p)
    s = hist.copy()
    s.k, s.t = 1, 0.1
    assert el_residuals(s, np.zeros(5), hist, sc, p, mm, g).r4 == 0.0  # upper bound active, f' < 0
    s.z = hist.z.copy()
    s.z[2] = 0.5  # interior node with nonzero W_,z + f' + zdot
    assert el_residuals(s, np.zeros(5), hist, sc, p, mm, g).r4 > 0.0


def test_r1_dense_cross_check():
    g = grid1d(5)
    mm = MaterialModel(dim=1, m0=0.7)
    sc = equilibrium(g)
    p = StepperParams(tau=0.1)
    hist = initial_state(sc, p)
    s = hist.copy()
    s.c = np.array([0.1, -0.1, 0.05, 0.0, -0.05])
    s.c -= integrate(g, s.c)
    sc.c0 = hist.c
    mu = np.array([0.3, -0.2, 0.1, 0.4, 0.0])
    h = 0.25
    K = np.zeros((5, 5))
    for i in range(4):
        K[np.ix_([i, i + 1], [i, i + 1])] += 0.7 / h * np.array([[1, -1], [-1, 1]])
    w = np.array([h / 2, h, h, h, h / 2])
    R = w * (s.c - hist.c) / p.tau + K @ mu
    rep = el_residuals(s, mu, hist, sc, p, mm, g)
    assert rep.r1 == pytest.approx(np.sqrt(np.sum(R**2 / w)), rel=1e-12)


# --- monitors ------------------------------------------------------------
def test_monitors_equilibrium_zero():
    g = grid1d(9)
    p = StepperParams(tau=0.1, T=0.3)
    traj = run_simulation(equilibrium(g), p, MaterialModel(), g)
    m = monitors(traj, g, MaterialModel(), p)
    assert all(v == 0.0 for v in m.values())
