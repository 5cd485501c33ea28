import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from netfunnel.errors import DimensionMismatch, EvaluatedBeforeActivation, RatioOutOfFunnel
from netfunnel.funnel import (
    RATIONAL, TAN, ConstantPerformance, CouplingFunction, EdgeFunnel, ExponentialPerformance,
    TabulatedPerformance, check_symmetry, compute_coupling_input, eval_coupling,
    eval_performance, handshake,
)

HALF_PI = math.pi / 2
DEMO_PSI = ExponentialPerformance(HALF_PI, 0.1 * HALF_PI, 1.0, 0.0)


def test_demo_performance_values():
    assert eval_performance(DEMO_PSI, 0.0) == pytest.approx(HALF_PI * (0.9 + 0.1), rel=1e-15)
    assert eval_performance(DEMO_PSI, 0.0) == pytest.approx(1.570796, abs=1e-6)
    assert eval_performance(DEMO_PSI, 800.0) == pytest.approx(0.1570796, abs=1e-7)
    t = 2.3
    assert DEMO_PSI.value(t) == pytest.approx(HALF_PI * (0.9 * math.exp(-t) + 0.1), rel=1e-14)


def test_constant_performance():
    c = ConstantPerformance(1.0)
    assert eval_performance(c, 17.0) == 1.0 and c.derivative(3.0) == 0.0


def test_evaluated_before_activation():
    psi = ExponentialPerformance(2.0, 0.5, 1.0, 10.0)
    with pytest.raises(EvaluatedBeforeActivation):
        eval_performance(psi, 9.0)


def test_exponential_rejects_bad_parameters():
    with pytest.raises(ValueError):
        ExponentialPerformance(0.1, 0.2, 1.0)
    with pytest.raises(ValueError):
        ExponentialPerformance(1.0, 0.0, 1.0)


def test_tabulated_performance_interpolates():
    tab = TabulatedPerformance([0.0, 1.0, 2.0], [3.0, 2.0, 1.5])
    assert tab.value(1.0) == pytest.approx(2.0)
    assert 1.5 < tab.value(1.5) < 2.0
    assert tab.derivative(1.0) < 0


def test_coupling_examples():
    assert eval_coupling(TAN, 0.0) == 0.0
    assert eval_coupling(TAN, 0.5) == pytest.approx(1.0, rel=1e-15)
    assert eval_coupling(RATIONAL, 0.5) == 1.0
    with pytest.raises(RatioOutOfFunnel):
        eval_coupling(TAN, 1.0)
    with pytest.raises(RatioOutOfFunnel):
        eval_coupling(RATIONAL, -1.2)


def test_scaled_coupling():
    mu = CouplingFunction("tan", 8.9)
    assert mu(0.5) == pytest.approx(8.9)
    assert mu.to_dict() == {"kind": "scaled", "base": "tan", "scale": 8.9}


@pytest.mark.parametrize("mu", [TAN, RATIONAL, CouplingFunction("rational", 3.0)])
def test_slope_matches_finite_difference(mu):
    for s in (-0.8, -0.3, 0.0, 0.4, 0.9):
        h = 1e-6
        fd = (mu.raw(s + h) - mu.raw(s - h)) / (2 * h)
        assert mu.slope(s) == pytest.approx(fd, rel=1e-5)


def test_coupling_input_examples():
    f = EdgeFunnel.uniform(ConstantPerformance(2.0))
    u, terms = compute_coupling_input(1, 0.0, {1: [3.0], 2: [3.0], 3: [3.0]}, {2: f, 3: f}, [[1.0]])
    assert np.all(u == 0)
    # nu / psi = 1/2 on one edge with gain 100
    u, terms = compute_coupling_input(1, 0.0, {1: [0.0], 2: [1.0]}, {2: f}, [[1 / 100]])
    assert terms[2][0] == pytest.approx(math.tan(math.pi / 4))
    assert u[0] == pytest.approx(0.01, rel=1e-15)
    u, _ = compute_coupling_input(1, 0.0, {1: [0.0], 2: [1.0], 3: [-1.0]}, {2: f, 3: f}, [[1.0]])
    assert u[0] == 0.0


def test_coupling_input_errors():
    f = EdgeFunnel.uniform(ConstantPerformance(1.0))
    with pytest.raises(RatioOutOfFunnel) as exc:
        compute_coupling_input(1, 0.0, {1: [0.0], 2: [1.5]}, {2: f}, [[1.0]])
    assert exc.value.edge == (1, 2)
    with pytest.raises(DimensionMismatch):
        compute_coupling_input(1, 0.0, {1: [0.0, 0.0], 2: [0.1, 0.1]}, {2: f}, np.eye(2))


def test_check_symmetry_examples():
    assert check_symmetry(EdgeFunnel.uniform(DEMO_PSI, TAN))
    skew = CouplingFunction("custom", func=lambda s: s + 0.1)
    # mu(-0.5) = -0.4 but -mu(0.5) = -0.6
    assert skew.raw(-0.5) != -skew.raw(0.5)
    assert not check_symmetry(EdgeFunnel.uniform(DEMO_PSI, skew))
    assert check_symmetry(EdgeFunnel.uniform(DEMO_PSI, RATIONAL), (-0.9, -0.5, 0.0, 0.5, 0.9))


def test_handshake_examples():
    eta = 0.157
    f = handshake([1.0], [1.0], 5.0, eta, 1.0)
    assert f.psi[0].B == 2 * eta and f.psi[0].value(5.0) > 0
    f = handshake([0.0], [2.0], 5.0, eta, 1.0, margin=0.1)
    assert f.psi[0].B == pytest.approx(2.2 + eta)
    assert f.psi[0].value(5.0) == pytest.approx(2.357) and f.psi[0].value(5.0) > 2
    assert f.psi[0].t_k == 5.0


def test_demo_join_funnel_matches_closed_form():
    psi = ExponentialPerformance(HALF_PI * 9.0, HALF_PI * 0.1, 1.0, 100.0)
    for t in (100.0, 101.0, 130.0):
        assert psi.value(t) == pytest.approx(HALF_PI * (8.9 * math.exp(-(t - 100)) + 0.1), rel=1e-14)


# properties ------------------------------------------------------------------

@given(B=st.floats(0.01, 100), frac=st.floats(0.001, 1.0), lam=st.floats(0.01, 10),
       t=st.floats(0, 50))
def test_exponential_positive_and_derivative_bounded(B, frac, lam, t):
    psi = ExponentialPerformance(B, B * frac, lam, 0.0)
    assert psi.value(t) > 0
    assert abs(psi.derivative(t)) <= lam * (B - B * frac) * (1 + 1e-12)


@given(st.floats(-0.999, 0.999), st.sampled_from([TAN, RATIONAL, CouplingFunction("tan", 4.9)]))
def test_builtin_coupling_odd(s, mu):
    assert eval_coupling(mu, s) + eval_coupling(mu, -s) == 0


@pytest.mark.parametrize("mu", [TAN, RATIONAL])
def test_coupling_diverges_monotonically(mu):
    vals = [mu(s) for s in (0.9, 0.99, 0.999, 0.999999)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 1e5


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=3), st.data(),
       st.floats(1e-3, 10), st.floats(1e-3, 1.0))
def test_handshake_contains_initial_difference(yi, data, eta, margin):
    yj = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(yi), max_size=len(yi)))
    f = handshake(yi, yj, 1.0, eta, 1.0, margin)
    for p, (a, b) in enumerate(zip(yi, yj)):
        assert abs(a - b) < f.psi[p].value(1.0)


@given(st.integers(2, 7), st.integers(0, 2 ** 31 - 1), st.integers(1, 2))
def test_symmetric_cancellation(n, seed, m):
    rng = np.random.default_rng(seed)
    # random spanning tree plus extra edges
    edges = {tuple(sorted((k, int(rng.integers(0, k))))) for k in range(1, n)}
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < 0.3:
                edges.add((a, b))
    f = EdgeFunnel.uniform(ConstantPerformance(10.0), TAN, m)
    y = {i: rng.uniform(-4, 4, m) for i in range(n)}
    gammas = {i: np.eye(m) * rng.uniform(0.5, 2) + 0.1 * rng.standard_normal((m, m)) for i in range(n)}
    total = np.zeros(m)
    for i in range(n):
        nbrs = {j: f for e in edges for j in e if i in e and j != i}
        u, _ = compute_coupling_input(i, 0.0, y, nbrs, np.linalg.inv(gammas[i]))
        total += gammas[i] @ u
    assert np.max(np.abs(total)) < 1e-12
