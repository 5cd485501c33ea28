import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netfunnel import analysis as an
from netfunnel.dynamics import AgentModel, NetworkModel
from netfunnel.errors import ConventionMismatch, HypothesisViolated, NonMonotoneInput
from netfunnel.funnel import TAN, ConstantPerformance, CouplingFunction, EdgeFunnel, ExponentialPerformance
from netfunnel.graph import UndirectedNetwork
from netfunnel.sim import IntegratorConfig, ReferenceLog, SimState, TrajectoryLog, run, run_reference


def net(agents, edges, psi, mu=TAN):
    f = EdgeFunnel.uniform(psi, mu)
    return NetworkModel(agents, UndirectedNetwork(agents, edges, {e: f for e in edges}))


@pytest.fixture(scope="module")
def small_run():
    agents = {i: AgentModel.from_strings([f"-y1 + {b}"], Gamma=[["2"]]) for i, b in ((1, 1.0), (2, -1.0), (3, 0.5))}
    model = net(agents, [(1, 2), (2, 3)], ExponentialPerformance(3.0, 0.3, 1.0))
    init = SimState(0.0, {1: [0.5], 2: [-0.5], 3: [0.0]}, {1: [], 2: [], 3: []})
    return agents, model, init, run(model, [], (0.0, 10.0), init, IntegratorConfig(sample_dt=0.1))


def synthetic(t, ys, edges, psi):
    """Log with outputs ``ys[i]`` (K,), all agents in one component, ratios from ``psi`` (K,)."""
    K = len(t)
    nodes = sorted(ys)
    y = {i: np.asarray(ys[i], dtype=float).reshape(K, 1) for i in nodes}
    ratio = {e: (y[e[1]] - y[e[0]]) / psi.reshape(K, 1) for e in edges}
    return TrajectoryLog(np.asarray(t, dtype=float), nodes, 1, {i: 0 for i in nodes}, y,
                         {i: np.zeros((K, 0)) for i in nodes}, {i: np.zeros((K, 1)) for i in nodes},
                         ratio, {e: psi.reshape(K, 1).copy() for e in edges},
                         {i: np.zeros(K, dtype=int) + nodes[0] for i in nodes})


# funnel ----------------------------------------------------------------------

def test_funnel_uncoupled_log_vacuous():
    a = AgentModel.from_strings(["-y1"])
    lg = run(NetworkModel({1: a}, UndirectedNetwork([1], [])), [], (0, 1), SimState(0, {1: [1.0]}, {1: []}))
    rep = an.check_funnel(lg)
    assert rep.passed and rep.max_ratio == 0.0 and rep.per_edge == {}


def test_funnel_planted_breach(small_run):
    lg = copy.deepcopy(small_run[3])
    assert an.check_funnel(lg).passed
    lg.ratio[(1, 2)][40, 0] = 1.01
    rep = an.check_funnel(lg)
    assert not rep.passed and rep.breaches == [(lg.t[40], (1, 2), 0, 1.01)]
    assert rep.max_ratio == 1.01 and rep.margin < 0


def test_demo_funnel(demo_log):
    rep = an.check_funnel(demo_log)
    assert rep.passed and 0 < rep.max_ratio < 1


# sync ------------------------------------------------------------------------

def test_sync_two_agents_one_edge():
    t = np.linspace(0, 1, 11)
    psi = np.full(11, 2.0)
    lg = synthetic(t, {1: np.zeros(11), 2: np.linspace(-1.9, 1.9, 11)}, [(1, 2)], psi)
    rep = an.check_sync_bound(lg)
    assert rep.passed
    s = rep.series[(1, 2)]
    assert np.all(s["d_G"] == 1) and np.all(s["spread"] <= psi)


@given(st.integers(0, 2 ** 31 - 1))
def test_sync_path_of_three_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    K = 20
    psi = rng.uniform(0.1, 3.0, K)
    y1 = rng.uniform(-5, 5, K)
    y2 = y1 + rng.uniform(-0.999, 0.999, K) * psi
    y3 = y2 + rng.uniform(-0.999, 0.999, K) * psi
    lg = synthetic(np.arange(K, dtype=float), {1: y1, 2: y2, 3: y3}, [(1, 2), (2, 3)], psi)
    assert an.check_funnel(lg).passed
    rep = an.check_sync_bound(lg)
    assert rep.passed
    assert np.all(np.abs(y3 - y1) <= 2 * psi)
    assert np.all(rep.series[(1, 2, 3)]["d_G"] == 2)


def test_sync_detects_planted_violation():
    t = np.arange(3, dtype=float)
    psi = np.ones(3)
    lg = synthetic(t, {1: np.zeros(3), 2: np.array([0.5, 0.5, 1.5])}, [(1, 2)], psi)
    rep = an.check_sync_bound(lg)
    assert not rep.passed and rep.violations[0][0] == 2.0


def test_demo_sync_diameter_after_last_join(demo_log):
    rep = an.check_sync_bound(demo_log)
    assert rep.passed
    s = rep.series[(1, 2, 3, 4)]
    late = demo_log.t >= 220
    assert np.all(s["d_G"][late] == 3)


# input bounds ----------------------------------------------------------------

def test_zero_coupling_bound():
    a = AgentModel.from_strings(["-y1"])
    model = net({1: a, 2: a}, [(1, 2)], ConstantPerformance(1.0))
    lg = run(model, [], (0, 2), SimState(0, {1: [0.3], 2: [0.3]}, {1: [], 2: []}))
    rep = an.check_input_bounds(lg)
    assert rep.M_u == 0.0 and rep.finite and not rep.flagged


def test_planted_diverging_input_flagged(small_run):
    lg = copy.deepcopy(small_run[3])
    assert not an.check_input_bounds(lg, window=5).flagged
    lg.u[2][-1, 0] = 1e9
    rep = an.check_input_bounds(lg, window=5)
    assert rep.M_u == 1e9 and rep.flagged


def test_gain_monitor_warns(small_run, caplog):
    agents = {i: AgentModel.from_strings(["-y1"], Gamma=[["2"]], M_Gamma=0.1) for i in (1, 2, 3)}
    rep = an.check_input_bounds(small_run[3], agents)
    assert rep.ginv_max == 0.5 and not rep.gain_ok
    assert "M_Gamma" in caplog.text


# cancellation ----------------------------------------------------------------

def test_cancellation_small_run(small_run):
    agents, _, _, lg = small_run
    assert an.check_coupling_cancellation(lg, agents) < 1e-12


def test_cancellation_single_agent():
    a = AgentModel.from_strings(["-y1"])
    lg = run(NetworkModel({1: a}, UndirectedNetwork([1], [])), [], (0, 1), SimState(0, {1: [1.0]}, {1: []}))
    assert an.check_coupling_cancellation(lg, {1: a}) == 0.0


def test_cancellation_detects_non_odd_coupling():
    mu = CouplingFunction("custom", func=lambda s: math.tan(math.pi * s / 2) + 0.3 * s * s)
    a = AgentModel.from_strings(["-y1"])
    b = AgentModel.from_strings(["-y1 + 1"])
    model = net({1: a, 2: b}, [(1, 2)], ConstantPerformance(2.0), mu)
    lg = run(model, [], (0, 3), SimState(0, {1: [0.0], 2: [0.5]}, {1: [], 2: []}))
    assert an.check_coupling_cancellation(lg, {1: a, 2: b}) > 1e-3


def test_demo_cancellation(demo, demo_log):
    # direct summation oracle at a few samples
    for k in (0, 1000, 3000, len(demo_log.t) - 1):
        for comp in demo_log.components(k):
            assert abs(sum(100.0 * demo_log.u[i][k, 0] for i in comp)) < 1e-10
    assert an.check_coupling_cancellation(demo_log, demo.library) < 1e-10


# emergence -------------------------------------------------------------------

def test_identical_agents_track_blended_exactly():
    a = AgentModel.from_strings(["-y1 + z1"], ["-z1 + sin(y1)"])
    model = net({1: a, 2: a}, [(1, 2)], ConstantPerformance(1.0))
    init = SimState(0, {1: [0.4], 2: [0.4]}, {1: [0.1], 2: [0.1]})
    cfg = IntegratorConfig(rtol=1e-8, atol=1e-10, sample_dt=0.1)
    lg = run(model, [], (0, 5), init, cfg)
    ref = run_reference(model, (0, 5), init, cfg)
    rep = an.compare_blended(lg, ref, "full")
    assert rep.tail < 1e-7 and np.max(rep.max_error) < 1e-7


def test_linear_benchmark_bound():
    """y_i' = -y_i: blended solution is the mean times exp(-t)."""
    a = AgentModel.from_strings(["-y1"])
    model = net({1: a, 2: a}, [(1, 2)], ExponentialPerformance(2.0, 0.05, 1.0))
    init = SimState(0, {1: [1.0], 2: [-0.6]}, {1: [], 2: []})
    cfg = IntegratorConfig(rtol=1e-8, atol=1e-10, sample_dt=0.1)
    lg = run(model, [], (0, 6), init, cfg)
    ref = run_reference(model, (0, 6), init, cfg)
    assert np.allclose(ref.s[:, 0], 0.2 * np.exp(-ref.t), rtol=1e-6, atol=1e-9)
    rep = an.compare_blended(lg, ref, "full")
    assert np.all(rep.max_error <= rep.bound + 10 * cfg.rtol)


def test_convention_mismatch(small_run):
    _, model, init, lg = small_run
    ref = run_reference(model, (0, 10), init, IntegratorConfig(sample_dt=0.1))
    with pytest.raises(ConventionMismatch):
        an.compare_blended(lg, ref, "reduced-cor3")
    shifted = ReferenceLog(ref.t, ref.kind, ref.nodes, ref.s + 1.0, ref.z)
    with pytest.raises(ConventionMismatch):
        an.compare_blended(lg, shifted, "full")


def test_reduced_conventions(demo):
    state = SimState(0.0, {i: [1.0 + 0.1 * i] for i in range(1, 5)},
                     {i: [0.1 * i, 0.0, -0.1 * i] for i in range(1, 5)})
    cfg = IntegratorConfig(sample_dt=0.5)
    cor2 = an.reference_for(demo.model, state, (0, 1), "reduced-cor2", cfg)
    cor3 = an.reference_for(demo.model, state, (0, 1), "reduced-cor3", cfg)
    assert np.allclose(cor2.z[0], state.z[1])
    assert np.allclose(cor3.z[0], np.mean([state.z[i] for i in range(1, 5)], axis=0))
    assert cor2.s[0, 0] == cor3.s[0, 0] == pytest.approx(1.25)


# gamma -----------------------------------------------------------------------

def closed_form():
    return an.construct_gamma(lambda r, t: r * math.exp(-t), lambda s: s, lambda t: math.exp(-t), 0.5, 0.5)


def test_gamma_closed_form():
    gc = closed_form()
    assert gc.M_x == 1.0
    assert gc(0.01) == pytest.approx(0.2, abs=1e-6)
    for s, v in gc.table():
        assert v == pytest.approx(2 * math.sqrt(s), rel=1e-6)


def test_gamma_tilde_inverse_identity():
    gc = closed_form()
    for eps in np.geomspace(1e-6, gc.eps_max, 25):
        assert gc(gc.gamma_tilde_inv(eps)) == pytest.approx(eps, rel=1e-10)
        assert gc.gamma_tilde_inv(eps) == pytest.approx(eps * eps / 4, rel=1e-10)


def test_gamma_linear_extension():
    gc = closed_form()
    assert gc(2 * gc.s_max) == pytest.approx(2 * gc(gc.s_max))
    assert gc(0.0) == 0.0


def test_gamma_rejects_non_monotone_inputs():
    beta = lambda r, t: r * math.exp(-t)
    with pytest.raises(NonMonotoneInput):
        an.construct_gamma(beta, lambda s: s, lambda t: 1 + t, 1, 1)
    with pytest.raises(NonMonotoneInput):
        an.construct_gamma(beta, lambda s: math.sin(s), lambda t: math.exp(-t), 1, 1)
    with pytest.raises(NonMonotoneInput):
        an.construct_gamma(lambda r, t: r * (1 + t), lambda s: s, lambda t: math.exp(-t), 1, 1)


@settings(max_examples=30)
@given(c=st.floats(1, 5), lam=st.floats(0.1, 5), k=st.floats(0.2, 5), p=st.floats(0.3, 3),
       om=st.floats(0.05, 3), Mx0=st.floats(0.1, 10), Mu=st.floats(0.1, 10))
def test_gamma_relation_random(c, lam, k, p, om, Mx0, Mu):
    gc = an.construct_gamma(lambda r, t: c * r * math.exp(-lam * t), lambda s: k * s ** p,
                            lambda t: math.exp(-om * t), Mx0, Mu, n_grid=20)
    assert np.all(np.diff(gc.values) > 0)
    assert max(gc.relation_residual(s) for s in gc.grid) < 1e-8


# decay bound -----------------------------------------------------------------

def scalar_traj(x0, t, u_fn, rtol=1e-10):
    from scipy.integrate import solve_ivp
    sol = solve_ivp(lambda tt, x: -x + u_fn(tt), (t[0], t[-1]), [x0], t_eval=t, rtol=rtol, atol=1e-12)
    return sol.y[0]


def test_decay_bound_zero_input():
    gc = an.construct_gamma(lambda r, t: r * math.exp(-t), lambda s: s, lambda t: math.exp(-t), 1.0, 1.0)
    t = np.linspace(0, 5, 51)
    x = 0.8 * np.exp(-t)
    assert an.check_decay_bound(t, np.abs(x), np.zeros_like(t), gc)


def test_decay_bound_closed_form_input():
    gc = an.construct_gamma(lambda r, t: r * math.exp(-t), lambda s: s, lambda t: math.exp(-t / 4), 1.0, 1.0)
    t = np.linspace(0, 10, 201)
    x0 = 0.7
    x = (x0 - 2) * np.exp(-t) + 2 * np.exp(-t / 2)
    assert np.allclose(x, scalar_traj(x0, t, lambda s: math.exp(-s / 2)), atol=1e-8)
    lhs, rhs = an.decay_bound_series(t, np.abs(x), np.exp(-t / 2), gc)
    assert np.all(lhs <= rhs)


def test_decay_bound_halved_beta_rejected():
    beta = lambda r, t: r * math.exp(-t)
    gc = an.construct_gamma(beta, lambda s: s, lambda t: math.exp(-t), 1.0, 1.0)
    t = np.linspace(0, 5, 51)
    x = 0.8 * np.exp(-t)
    assert not an.check_decay_bound(t, x, np.zeros_like(t), gc, beta=lambda r, tt: 0.5 * beta(r, tt))


def test_decay_bound_hypotheses():
    gc = closed_form()
    t = np.linspace(0, 1, 5)
    with pytest.raises(HypothesisViolated):
        an.check_decay_bound(t, np.full(5, 2.0), np.zeros(5), gc)
    with pytest.raises(HypothesisViolated):
        an.check_decay_bound(t, np.zeros(5), np.full(5, 3.0), gc)


def test_distance_helpers():
    assert an.point_distance([1.0, -3.0]) == 3.0
    assert an.point_distance(2.0, 0.5) == 1.5
    assert an.z_consensus_distance([[1.0, 0.0], [3.0, 0.0]]) == 1.0


# small gain ------------------------------------------------------------------

def test_small_gain_examples():
    grid = np.geomspace(1e-3, 100, 60)
    assert an.check_small_gain(lambda s: s / 4, grid)
    assert not an.check_small_gain(lambda s: s, grid)
    g = lambda s: s / (2 + s)
    assert np.allclose([s - g(2 * s) for s in grid], grid ** 2 / (1 + grid), rtol=1e-12)
    assert an.check_small_gain(g, grid)
