import os
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def demo():
    from netfunnel.scenario import load_demo
    return load_demo("neuromorphic")


@pytest.fixture(scope="session")
def demo_log(demo):
    """Full 0..300 run of the built-in neuromorphic scenario (shared, about 6 s)."""
    from netfunnel.sim import run
    t0 = time.perf_counter()
    lg = run(demo.model, demo.schedule, demo.t_span, demo.init, demo.cfg, demo.library)
    lg.meta["wall_s"] = time.perf_counter() - t0
    return lg


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


SMALL_TOML = """\
name = "chain"

[coupling]
kind = "tan"

[agents.1]
F = ["-y1 + 1"]
y0 = [0.0]

[agents.2]
F = ["-y1"]
y0 = [0.5]

[agents.3]
F = ["-y1 - 1"]
y0 = [1.0]

[graph]
edges = [[1, 2], [2, 3]]

[funnels.default]
kind = "exponential"
B = 3.0
eta = 0.5
lambda = 1.0

[[events]]
t = 2.0
kind = "leave"
node = 3

[[events]]
t = 4.0
kind = "join"
node = 3
edges = [{ neighbor = 1, handshake = { eta = 0.5 } }]

[integrator]
t_end = 6.0
rtol = 1e-8
atol = 1e-10

[outputs]
sample_dt = 0.5
"""


@pytest.fixture
def small_toml(tmp_path):
    p = tmp_path / "chain.toml"
    p.write_text(SMALL_TOML, encoding="utf-8")
    return p
