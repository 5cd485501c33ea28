import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import cumulative_simpson

from netfunnel.dynamics import (
    AgentModel, ComponentSystem, NetworkModel, build_blended, build_reduced_blended,
)
from netfunnel.errors import (
    DuplicateJoin, FiniteEscapeSuspected, FunnelBreach, InitialConditionOutsideFunnel, UnknownNode,
)
from netfunnel.events import EventSchedule, Handshake, Join, JoinEdge, Leave
from netfunnel.funnel import TAN, ConstantPerformance, EdgeFunnel, ExponentialPerformance
from netfunnel.graph import UndirectedNetwork, connected_components
from netfunnel.sim import (
    IntegratorConfig, SimState, apply_event, run, run_reference, sample_times, step,
    verify_initial_funnel,
)

HALF_PI = math.pi / 2
METHODS = ["radau5", "dopri5"]


def net(agents, edges, psi=1.0):
    f = EdgeFunnel.uniform(ConstantPerformance(psi) if isinstance(psi, float) else psi, TAN)
    return NetworkModel(agents, UndirectedNetwork(agents, edges, {tuple(sorted(e)): f for e in edges}))


def state(t, ys, zs=None):
    return SimState(t, {i: [v] for i, v in ys.items()}, zs or {i: [] for i in ys})


@pytest.mark.parametrize("method", METHODS)
def test_single_agent_decay(method):
    a = AgentModel.from_strings(["-y1"])
    cfg = IntegratorConfig(method=method, rtol=1e-8, atol=1e-10, sample_dt=0.25)
    lg = run(net({1: a}, []), [], (0.0, 1.0), state(0.0, {1: 1.0}), cfg)
    assert lg.y[1][-1, 0] == pytest.approx(math.exp(-1), abs=1e-8)
    assert list(lg.t) == [0.0, 0.25, 0.5, 0.75, 1.0]


@pytest.mark.parametrize("method", METHODS)
def test_two_coupled_integrators_match_closed_form(method):
    # nu = y2 - y1 obeys nu' = -2 tan(pi nu / 2), so sin(pi nu / 2) decays like exp(-pi t)
    a = AgentModel.from_strings(["0"])
    cfg = IntegratorConfig(method=method, rtol=1e-9, atol=1e-12, sample_dt=0.05)
    lg = run(net({1: a, 2: a}, [(1, 2)]), [], (0.0, 2.0), state(0.0, {1: 0.1, 2: -0.1}), cfg)
    nu = lg.y[2][:, 0] - lg.y[1][:, 0]
    exact = (2 / math.pi) * np.arcsin(math.sin(math.pi * -0.2 / 2) * np.exp(-math.pi * lg.t))
    assert np.max(np.abs(nu - exact)) < 1e-7
    assert np.all(np.diff(np.abs(nu)) < 0)
    assert lg.max_ratio() < 1
    assert np.allclose(lg.y[1][:, 0] + lg.y[2][:, 0], 0.0, atol=1e-12)


@pytest.mark.parametrize("method", METHODS)
def test_zero_field_step_grows_to_dt_max(method):
    a = AgentModel.from_strings(["0"], ["0"])
    cfg = IntegratorConfig(method=method, dt_max=0.5)
    cs = ComponentSystem(net({1: a, 2: a}, [(1, 2)]))
    x = cs.pack({1: [0.2], 2: [0.2]}, {1: [1.0], 2: [2.0]})
    t, h = 0.0, 1e-3
    for _ in range(40):
        x2, used, h = step(cs, t, x, cfg, h)
        assert np.array_equal(x2, x)
        t += used
    assert h == 0.5


def test_step_shrinks_near_boundary():
    # pulled apart by +-c, held together by the funnel; equilibrium ratio (2/pi) atan(c/2)
    c = 2000.0
    agents = {1: AgentModel.from_strings([f"-{c}"]), 2: AgentModel.from_strings([f"{c}"])}
    cs = ComponentSystem(net(agents, [(1, 2)]))
    s_eq = (2 / math.pi) * math.atan(c / 2)
    assert s_eq > 0.999
    x = cs.pack({1: [-0.4995], 2: [0.4995]}, {1: [], 2: []})
    x2, used, _ = step(cs, 0.0, x, IntegratorConfig(method="dopri5"), 0.5)
    assert used < 0.5
    r, _ = cs.max_ratio(used, x2)
    assert r < 1 - 1e-9


@pytest.mark.parametrize("method", METHODS)
def test_cosine_quadrature(method):
    a = AgentModel.from_strings(["cos(t)"])
    cfg = IntegratorConfig(method=method, rtol=1e-6, atol=1e-9, sample_dt=1.0)
    lg = run(net({1: a}, []), [], (0.0, math.pi), state(0.0, {1: 0.0}), cfg)
    assert abs(lg.y[1][-1, 0] - math.sin(math.pi)) < 10 * cfg.rtol


@pytest.mark.parametrize("method", METHODS)
def test_error_decreases_with_tolerance(method):
    a = AgentModel.from_strings(["-y1 + sin(3*t)"])
    # y' = -y + sin 3t, y(0) = 1
    exact = lambda t: (math.sin(3 * t) - 3 * math.cos(3 * t)) / 10 + 1.3 * math.exp(-t)
    errs = []
    for rtol in (1e-4, 1e-6, 1e-8):
        cfg = IntegratorConfig(method=method, rtol=rtol, atol=rtol * 1e-2, sample_dt=5.0)
        lg = run(net({1: a}, []), [], (0.0, 5.0), state(0.0, {1: 1.0}), cfg)
        errs.append(abs(lg.y[1][-1, 0] - exact(5.0)))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 1e-7


def test_blowup_detected():
    a = AgentModel.from_strings(["y1^2"])
    with pytest.raises(FiniteEscapeSuspected):
        run(net({1: a}, []), [], (0.0, 2.0), state(0.0, {1: 1.0}), IntegratorConfig(blowup_norm=1e6))


def test_funnel_breach_reported():
    agents = {1: AgentModel.from_strings(["-1e6"]), 2: AgentModel.from_strings(["1e6"])}
    cfg = IntegratorConfig(method="dopri5", dt_min=1e-6)
    with pytest.raises(FunnelBreach) as exc:
        run(net(agents, [(1, 2)]), [], (0.0, 1.0), state(0.0, {1: 0.0, 2: 0.0}), cfg)
    assert exc.value.edge == (1, 2)


def test_initial_condition_outside_funnel():
    a = AgentModel.from_strings(["0"])
    model = net({1: a, 2: a}, [(1, 2)], psi=1.5)
    bad = state(0.0, {1: 0.0, 2: 2.0})
    assert not verify_initial_funnel(model, bad)
    assert verify_initial_funnel(model, state(0.0, {1: 0.3, 2: 0.3}))
    with pytest.raises(InitialConditionOutsideFunnel):
        run(model, [], (0.0, 1.0), bad)


def test_demo_initial_state_in_funnel(demo):
    assert verify_initial_funnel(demo.model, demo.init)


def test_sample_grid_anchored_at_zero():
    assert sample_times(0.0, 0.3, 0.1) == [0.0, 0.1, 0.2, 0.3]
    a = sample_times(0.0, 1.0, 0.1)
    b = sample_times(0.35, 1.0, 0.1)
    assert b[0] == 0.35 and set(b[1:-1]) <= set(a)


@given(st.floats(0, 100), st.floats(0.01, 50), st.floats(0.01, 5))
def test_sample_grid_properties(t0, length, dt):
    ts = sample_times(t0, t0 + length, dt)
    assert ts[0] == t0 and ts[-1] == t0 + length
    assert all(b > a for a, b in zip(ts, ts[1:]))


# events ----------------------------------------------------------------------

def test_join_into_empty_graph():
    a = AgentModel.from_strings(["-y1"])
    empty = NetworkModel({}, UndirectedNetwork([], []))
    m2, s2 = apply_event(empty, SimState(1.0, {}, {}), Join(1.0, 5, (), (0.5,), (), a))
    assert connected_components(m2.graph) == [[5]] and s2.y[5][0] == 0.5


def test_demo_join_of_agent_one(demo, demo_log):
    k = demo_log.index_of(100.0)
    assert demo_log.membership[1][k] == 1
    assert abs(demo_log.ratio[(1, 4)][k, 0]) < 1
    psi = demo_log.psi[(1, 4)][k, 0]
    assert psi == pytest.approx(HALF_PI * (8.9 + 0.1), rel=1e-15)


def test_leave_cut_vertex_splits_and_preserves_states():
    a = AgentModel.from_strings(["-y1"], ["-z1"])
    model = net({1: a, 2: a, 3: a}, [(1, 2), (2, 3)], psi=5.0)
    st0 = SimState(2.0, {1: [0.1], 2: [0.2], 3: [0.3]}, {1: [1.0], 2: [2.0], 3: [3.0]})
    m2, s2 = apply_event(model, st0, Leave(2.0, 2))
    assert connected_components(m2.graph) == [[1], [3]]
    for i in (1, 3):
        assert s2.y[i].tobytes() == st0.y[i].tobytes() and s2.z[i].tobytes() == st0.z[i].tobytes()
    assert 2 in s2.frozen and 2 not in s2.y
    with pytest.raises(UnknownNode):
        apply_event(m2, s2, Leave(2.0, 2))
    with pytest.raises(DuplicateJoin):
        apply_event(m2, s2, Join(2.0, 1, (), (0.0,), (0.0,), a))


def test_leave_then_components_integrated_independently():
    agents = {1: AgentModel.from_strings(["-y1 + 1"]), 2: AgentModel.from_strings(["-y1"]),
              3: AgentModel.from_strings(["-y1 - 1"])}
    model = net(agents, [(1, 2), (2, 3)], psi=ExponentialPerformance(4.0, 2.0, 1.0))
    lg = run(model, [Leave(1.0, 2)], (0.0, 3.0), state(0.0, {1: 0.0, 2: 0.0, 3: 0.0}),
             IntegratorConfig(sample_dt=0.5, rtol=1e-9, atol=1e-12))
    k = lg.index_of(1.0)
    y1 = lg.y[1][k, 0]
    # after the leave agent 1 is alone: y' = -y + 1
    assert lg.y[1][-1, 0] == pytest.approx(1 + (y1 - 1) * math.exp(-2.0), abs=1e-8)
    assert np.all(np.isnan(lg.u[2][k:, 0])) and np.all(lg.membership[2][k:] == -1)
    assert np.all(lg.y[2][k:, 0] == lg.y[2][k, 0])
    assert lg.components(len(lg.t) - 1) == [[1], [3]]


def test_handshake_join_and_rejoin_uses_frozen_state():
    a = AgentModel.from_strings(["-y1 + 1"])
    b = AgentModel.from_strings(["-y1 - 1"])
    model = net({1: a, 2: b}, [(1, 2)], psi=3.0)
    sched = EventSchedule.of([Leave(1.0, 2), Join(2.0, 2, (JoinEdge(1, handshake=Handshake(0.1)),))])
    lg = run(model, sched, (0.0, 4.0), state(0.0, {1: 0.0, 2: 0.0}), IntegratorConfig(sample_dt=0.5))
    k1, k2 = lg.index_of(1.0), lg.index_of(2.0)
    assert lg.y[2][k2, 0] == lg.y[2][k1, 0]
    assert lg.events[-1]["kind"] == "join" and lg.max_ratio() < 1


def test_event_rows_record_post_event_state(demo_log):
    ks = np.flatnonzero(demo_log.t == 50.0)
    assert len(ks) == 1 and demo_log.membership[1][ks[0]] == -1


# references ------------------------------------------------------------------

def test_reference_of_constant_agents_is_a_line():
    model = net({1: AgentModel.from_strings(["2"]), 2: AgentModel.from_strings(["5"])}, [(1, 2)])
    ref = run_reference(model, (0.0, 2.0), state(0.0, {1: 1.0, 2: 3.0}), IntegratorConfig(sample_dt=0.5))
    assert np.allclose(ref.s[:, 0], 2.0 + 3.5 * ref.t, rtol=0, atol=1e-12)


def test_demo_blended_reference_bounded(demo):
    ref = run_reference(demo.model, (0.0, 30.0), demo.init, demo.cfg)
    assert ref.s[0, 0] == 1.0 and np.all(np.isfinite(ref.s))
    assert np.max(np.abs(ref.s)) < 10


def test_reduced_matches_full_blended_with_equal_inits(demo):
    cfg = IntegratorConfig(rtol=1e-8, atol=1e-10, sample_dt=0.5)
    bm = build_blended(demo.model)
    red = build_reduced_blended(demo.model)
    z0 = np.array([0.2, -0.1, 0.3])
    x_full = np.concatenate([[1.0], np.tile(z0, 4)])
    x_red = np.concatenate([[1.0], z0])
    a = run_reference(bm, (0.0, 20.0), x_full, cfg)
    b = run_reference(red, (0.0, 20.0), x_red, cfg)
    scale = max(1.0, np.max(np.abs(a.s)))
    assert np.max(np.abs(a.s - b.s)) < 10 * 1e-6 * scale
    for i in bm.nodes:
        assert np.max(np.abs(a.z[i] - b.z)) < 10 * 1e-6 * max(1.0, np.max(np.abs(b.z)))


# whole runs ------------------------------------------------------------------

def test_run_is_deterministic():
    agents = {i: AgentModel.from_strings([f"-y1^3 + {i}*z1"], ["-z1 + sin(y1)"]) for i in range(1, 4)}
    model = net(agents, [(1, 2), (2, 3)], psi=ExponentialPerformance(3.0, 0.2, 2.0))
    init = SimState(0.0, {1: [0.5], 2: [-0.5], 3: [1.0]}, {1: [0.0], 2: [0.1], 3: [0.2]})
    a = run(model, [], (0.0, 5.0), init)
    b = run(model, [], (0.0, 5.0), init)
    for i in agents:
        assert a.y[i].tobytes() == b.y[i].tobytes() and a.u[i].tobytes() == b.u[i].tobytes()


def test_mean_output_follows_mean_field():
    agents = {i: AgentModel.from_strings([f"-y1 + z1 + {b}"], ["-z1 + 0.5*y1"], Gamma=[["3"]])
              for i, b in zip((1, 2, 3), (1.0, -2.0, 0.5))}
    model = net(agents, [(1, 2), (2, 3)], psi=ExponentialPerformance(3.0, 0.5, 1.0))
    init = SimState(0.0, {1: [0.5], 2: [-0.5], 3: [1.0]}, {1: [0.0], 2: [0.1], 3: [0.2]})
    cfg = IntegratorConfig(rtol=1e-9, atol=1e-11, sample_dt=0.005)
    lg = run(model, [], (0.0, 2.0), init, cfg)
    ybar = np.mean([lg.y[i][:, 0] for i in agents], axis=0)
    fbar = np.mean([[agents[i].eval_F(t, lg.y[i][k], lg.z[i][k])[0] for k, t in enumerate(lg.t)]
                    for i in agents], axis=0)
    s = ybar[0] + cumulative_simpson(fbar, x=lg.t, initial=0.0)
    assert np.max(np.abs(s - ybar)) < 10 * cfg.rtol


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        IntegratorConfig(dt_min=1.0, dt_max=0.5)
    with pytest.raises(ValueError):
        IntegratorConfig(boundary_guard=1.5)


@pytest.mark.parametrize("method", METHODS)
def test_steps_land_on_kinks(method):
    """y' = 1 until y reaches 0.6, then y' = 3 - y: closed form on both sides."""
    a = AgentModel.from_strings(["if(y1 < 0.6, 1, 3 - y1)"])
    cfg = IntegratorConfig(method=method, rtol=1e-9, atol=1e-12, sample_dt=0.25, dt_max=0.3)
    lg = run(net({1: a}, []), [], (0.0, 2.0), state(0.0, {1: 0.0}), cfg)
    assert lg.meta["kinks_located"] >= 1
    t = lg.t
    exact = np.where(t <= 0.6, t, 3 - 2.4 * np.exp(-(t - 0.6)))
    assert np.max(np.abs(lg.y[1][:, 0] - exact)) < 1e-9


def test_blended_reference_locates_kinks(demo):
    ref = run_reference(demo.model, (0.0, 5.0), demo.init, IntegratorConfig(sample_dt=0.5))
    assert np.all(np.isfinite(ref.s))


def test_demo_recovers_from_near_boundary_underflow(demo):
    # on this sample grid an accepted step near t=8.4 leaves Newton stranded; the
    # integrator must roll back and redo it with shorter steps
    d = demo.with_overrides(sample_dt=0.5, t_end=9.0)
    lg = run(d.model, d.schedule, d.t_span, d.init, d.cfg, d.library)
    assert lg.meta["rollbacks"] >= 1
    assert lg.t[-1] == 9.0
    assert lg.max_ratio() < 1.0
