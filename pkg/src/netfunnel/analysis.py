"""Post-hoc checks on trajectory logs and the comparison-function toolkit.

Everything here works on sampled data: suprema are taken over log samples,
never over interpolated trajectories.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .dynamics import AgentModel, NetworkModel, build_blended, build_reduced_blended
from .errors import ConventionMismatch, HypothesisViolated, NonMonotoneInput, SchemaMismatch
from .funnel import EdgeFunnel, ExponentialPerformance
from .graph import UndirectedNetwork, diameter
from .sim import IntegratorConfig, ReferenceLog, SimState, TrajectoryLog, run, run_reference

log = logging.getLogger(__name__)

__all__ = [
    "FunnelReport", "SyncReport", "BoundReport", "EmergenceReport", "SweepReport",
    "GammaConstruction", "check_funnel", "check_sync_bound", "check_input_bounds",
    "check_coupling_cancellation", "compare_blended", "reference_for", "eta_sweep",
    "construct_gamma", "decay_bound_series", "check_decay_bound", "check_small_gain",
    "point_distance", "z_consensus_distance",
]

SYNC_SLACK = 1e-12


def _validate(log_: TrajectoryLog, model: NetworkModel | None = None):
    K = len(log_.t)
    if K == 0:
        raise SchemaMismatch("log has no samples")
    if np.any(np.diff(log_.t) < 0):
        raise SchemaMismatch("sample times are not monotone")
    for name in ("y", "u"):
        for i, arr in getattr(log_, name).items():
            if arr.shape != (K, log_.m):
                raise SchemaMismatch(f"{name}[{i}] has shape {arr.shape}, expected {(K, log_.m)}")
    for name in ("ratio", "psi"):
        for e, arr in getattr(log_, name).items():
            if arr.shape != (K, log_.m):
                raise SchemaMismatch(f"{name}{e} has shape {arr.shape}, expected {(K, log_.m)}")
    if model is not None:
        missing = set(model.agents) - set(log_.nodes)
        if missing:
            raise SchemaMismatch(f"agents {sorted(missing)} missing from the log")
        if model.agents and model.m != log_.m:
            raise SchemaMismatch(f"model output dimension {model.m} != log dimension {log_.m}")


# ---------------------------------------------------------------------------
# funnel objective

@dataclass
class FunnelReport:
    per_edge: dict            # (i, j, p) -> {"max_ratio", "t_max"}
    max_ratio: float
    breaches: list            # [(t, (i, j), p, ratio)]

    @property
    def passed(self) -> bool:
        return not self.breaches

    @property
    def margin(self) -> float:
        return 1.0 - self.max_ratio

    def to_dict(self) -> dict:
        return {
            "passed": self.passed, "max_ratio": self.max_ratio, "margin": self.margin,
            "per_edge": {f"{i}-{j}/{p + 1}": v for (i, j, p), v in sorted(self.per_edge.items())},
            "breaches": [{"t": t, "edge": list(e), "component": p + 1, "ratio": r}
                         for t, e, p, r in self.breaches],
        }


def check_funnel(log_: TrajectoryLog, model: NetworkModel | None = None) -> FunnelReport:
    _validate(log_, model)
    per_edge, breaches = {}, []
    best = 0.0
    for e in log_.edges:
        r = np.abs(log_.ratio[e])
        for p in range(log_.m):
            col = r[:, p]
            ok = ~np.isnan(col)
            if not ok.any():
                continue
            k = int(np.nanargmax(col))
            per_edge[(e[0], e[1], p)] = {"max_ratio": float(col[k]), "t_max": float(log_.t[k])}
            best = max(best, float(col[k]))
            for kk in np.nonzero(ok & (col >= 1.0))[0]:
                breaches.append((float(log_.t[kk]), e, p, float(log_.ratio[e][kk, p])))
    breaches.sort()
    return FunnelReport(per_edge, best, breaches)


# ---------------------------------------------------------------------------
# synchronisation bound

@dataclass
class SyncReport:
    t: np.ndarray
    series: dict              # component tuple -> dict of arrays (NaN where absent)
    violations: list          # [(t, component, quantity, value, bound)]

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        comps = {}
        for comp, s in self.series.items():
            ok = ~np.isnan(s["bound"])
            comps["-".join(map(str, comp))] = {
                "samples": int(ok.sum()),
                "d_G": int(np.nanmax(s["d_G"])) if ok.any() else None,
                "max_spread_over_bound": float(np.nanmax(s["spread"][ok] / s["bound"][ok])) if ok.any() else None,
                "max_z_spread": float(np.nanmax(s["z_spread"])) if ok.any() and np.any(~np.isnan(s["z_spread"])) else None,
            }
        return {"passed": self.passed, "components": comps,
                "violations": [{"t": t, "component": list(c), "quantity": q, "value": v, "bound": b}
                               for t, c, q, v, b in self.violations]}


def check_sync_bound(log_: TrajectoryLog, model: NetworkModel | None = None,
                     slack: float = SYNC_SLACK) -> SyncReport:
    """Per component: ``max_ij |y_i - y_j|`` and ``max_i |e_i|`` against ``d_G * Psi(t)``.

    ``Psi`` is the largest performance value over the component's edges and
    components; ``d_G`` is the component diameter in the logged topology.
    """
    _validate(log_, model)
    K = len(log_.t)
    series, violations = {}, []
    diam_cache = {}
    for k in range(K):
        edges = log_.active_edges(k)
        for comp in log_.components(k):
            if len(comp) < 2:
                continue
            key = tuple(comp)
            cs = set(comp)
            cedges = tuple(e for e in edges if e[0] in cs)
            if (key, cedges) not in diam_cache:
                diam_cache[(key, cedges)] = diameter(UndirectedNetwork(comp, cedges))
            d_G = diam_cache[(key, cedges)]
            psi = max(float(np.max(log_.psi[e][k])) for e in cedges)
            Y = np.array([log_.y[i][k] for i in comp])
            spread = float(np.max(np.max(Y, axis=0) - np.min(Y, axis=0)))
            e_max = float(np.max(np.abs(Y - Y.mean(axis=0))))
            ns = {log_.n[i] for i in comp}
            if len(ns) == 1 and next(iter(ns)) > 0:
                Zs = np.array([log_.z[i][k] for i in comp])
                z_spread = float(np.max(np.max(Zs, axis=0) - np.min(Zs, axis=0)))
            else:
                z_spread = math.nan
            s = series.get(key)
            if s is None:
                s = series[key] = {q: np.full(K, np.nan) for q in ("spread", "e_max", "bound", "d_G", "z_spread")}
            bound = d_G * psi
            s["spread"][k] = spread
            s["e_max"][k] = e_max
            s["bound"][k] = bound
            s["d_G"][k] = d_G
            s["z_spread"][k] = z_spread
            if spread > bound + slack:
                violations.append((float(log_.t[k]), key, "spread", spread, bound))
            if e_max > bound + slack:
                violations.append((float(log_.t[k]), key, "e_max", e_max, bound))
    return SyncReport(log_.t, series, violations)


# ---------------------------------------------------------------------------
# input bounds

@dataclass
class BoundReport:
    M_u: float
    M_yz: float
    running_sup_start: float
    running_sup_end: float
    window: float
    drift_tol: float
    ginv_max: Optional[float] = None
    M_Gamma: Optional[float] = None
    M_F_tilde: Optional[float] = None
    per_agent_u: dict = field(default_factory=dict)

    @property
    def drift(self) -> float:
        if self.running_sup_start == 0:
            return 0.0 if self.running_sup_end == 0 else math.inf
        return self.running_sup_end / self.running_sup_start - 1.0

    @property
    def finite(self) -> bool:
        return math.isfinite(self.M_u) and math.isfinite(self.M_yz)

    @property
    def gain_ok(self) -> bool:
        return self.M_Gamma is None or self.ginv_max is None or self.ginv_max <= self.M_Gamma

    @property
    def flagged(self) -> bool:
        return not self.finite or self.drift > self.drift_tol

    def to_dict(self) -> dict:
        return {
            "M_u": self.M_u, "M_yz": self.M_yz, "finite": self.finite,
            "window": self.window, "running_sup_start": self.running_sup_start,
            "running_sup_end": self.running_sup_end, "drift": self.drift,
            "drift_tol": self.drift_tol, "flagged": self.flagged,
            "ginv_max": self.ginv_max, "M_Gamma": self.M_Gamma, "gain_ok": self.gain_ok,
            "M_F_tilde": self.M_F_tilde,
            "per_agent_u": {str(i): v for i, v in self.per_agent_u.items()},
        }


def check_input_bounds(log_: TrajectoryLog, agents: Mapping[int, AgentModel] | None = None,
                       window: float = 50.0, drift_tol: float = 0.01) -> BoundReport:
    """Observed suprema of ``|u_i|``, ``|(y_i, z_i)|`` and optional ``|Gamma_i^-1|``.

    The drift statistic compares the running sup of ``max_i |u_i|`` at the
    end of the log with its value ``window`` time units earlier.
    """
    _validate(log_)
    K = len(log_.t)
    umax = np.zeros(K)
    per_agent = {}
    for i in log_.nodes:
        a = np.abs(log_.u[i])
        ok = ~np.isnan(a)
        if ok.any():
            per_agent[i] = float(np.nanmax(a))
            umax = np.maximum(umax, np.max(np.where(ok, a, 0.0), axis=1))
    running = np.maximum.accumulate(umax)
    k0 = int(np.searchsorted(log_.t, log_.t[-1] - window, side="right")) - 1
    k0 = max(k0, 0)
    yz = 0.0
    for i in log_.nodes:
        act = log_.membership[i] >= 0
        if act.any():
            yz = max(yz, float(np.max(np.abs(log_.y[i][act]))))
            if log_.n[i]:
                yz = max(yz, float(np.max(np.abs(log_.z[i][act]))))
    ginv_max = M_Gamma = M_F = None
    if agents:
        declared = [a.M_Gamma for a in agents.values() if a.M_Gamma is not None]
        M_Gamma = max(declared) if declared else None
        for i in log_.nodes:
            ag = agents.get(i)
            if ag is None:
                continue
            for k in np.nonzero(log_.membership[i] >= 0)[0]:
                y, z = log_.y[i][k], log_.z[i][k]
                if not ag.constant_gain or ginv_max is None:
                    _, _, nrm = ag.gain_and_inverse(log_.t[k], y, z)
                    ginv_max = nrm if ginv_max is None else max(ginv_max, nrm)
                if ag.F_tilde:
                    v = float(np.max(np.abs(ag.eval_F_tilde(log_.t[k], y, z))))
                    M_F = v if M_F is None else max(M_F, v)
        if M_Gamma is not None and ginv_max is not None and ginv_max > M_Gamma:
            log.warning("observed |Gamma^-1| = %.6g exceeds declared M_Gamma = %.6g", ginv_max, M_Gamma)
    return BoundReport(
        M_u=float(running[-1]), M_yz=yz, running_sup_start=float(running[k0]),
        running_sup_end=float(running[-1]), window=window, drift_tol=drift_tol,
        ginv_max=ginv_max, M_Gamma=M_Gamma, M_F_tilde=M_F, per_agent_u=per_agent,
    )


# ---------------------------------------------------------------------------
# coupling cancellation

def check_coupling_cancellation(log_: TrajectoryLog, agents: Mapping[int, AgentModel]) -> float:
    """``max_t max_components |sum_i Gamma_i u_i|_inf`` over the logged samples."""
    _validate(log_)
    worst = 0.0
    for k in range(len(log_.t)):
        for comp in log_.components(k):
            acc = np.zeros(log_.m)
            for i in comp:
                g = agents[i].gain(log_.t[k], log_.y[i][k], log_.z[i][k])
                acc += g @ log_.u[i][k]
            worst = max(worst, float(np.max(np.abs(acc))))
    return worst


# ---------------------------------------------------------------------------
# emergence

MODES = ("full", "reduced-cor2", "reduced-cor3")


@dataclass
class EmergenceReport:
    mode: str
    t: np.ndarray
    errors: dict              # agent -> array
    tail_start: float
    bound: Optional[np.ndarray] = None   # d_G * Psi(t) along the samples

    @property
    def max_error(self) -> np.ndarray:
        return np.max(np.array(list(self.errors.values())), axis=0)

    @property
    def tail(self) -> float:
        sel = self.t >= self.tail_start
        return float(np.max(self.max_error[sel]))

    def tail_per_agent(self) -> dict:
        sel = self.t >= self.tail_start
        return {i: float(np.max(e[sel])) for i, e in self.errors.items()}

    def to_dict(self) -> dict:
        return {"mode": self.mode, "t0": float(self.t[0]), "t_end": float(self.t[-1]),
                "tail_start": self.tail_start, "tail": self.tail,
                "tail_per_agent": {str(i): v for i, v in self.tail_per_agent().items()},
                "max_error": float(np.max(self.max_error))}


def _close(a, b, tol=1e-9):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b))))


def compare_blended(log_: TrajectoryLog, ref: ReferenceLog, mode: str = "full",
                    tail_fraction: float = 0.2) -> EmergenceReport:
    """Per-agent distance between the network and a blended/reduced reference.

    ``full`` compares ``(y_i, z_i)`` with ``(s, z_hat_i)``; the reduced modes
    compare with ``(s, z)``. The reference's initial condition must follow
    the convention of the mode, otherwise :class:`ConventionMismatch`.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    _validate(log_)
    expected_kind = "blended" if mode == "full" else "reduced"
    if ref.kind != expected_kind:
        raise ConventionMismatch(f"mode {mode!r} needs a {expected_kind} reference, got {ref.kind!r}")
    idx = []
    for tt in ref.t:
        k = int(np.searchsorted(log_.t, tt, side="right")) - 1
        if k < 0 or log_.t[k] != tt:
            raise SchemaMismatch(f"reference time {tt} is not a log sample")
        idx.append(k)
    idx = np.array(idx)
    k0 = idx[0]
    nodes = list(ref.nodes)
    for i in nodes:
        if i not in log_.membership or log_.membership[i][k0] < 0:
            raise SchemaMismatch(f"agent {i} is not active at t={ref.t[0]}")
    y0 = np.array([log_.y[i][k0] for i in nodes])
    if not _close(ref.s[0], y0.mean(axis=0)):
        raise ConventionMismatch("reference output does not start at the mean agent output")
    if mode == "full":
        for i in nodes:
            if not _close(ref.z[i][0], log_.z[i][k0]):
                raise ConventionMismatch(f"blended copy z_hat_{i} does not start at z_{i}")
    elif mode == "reduced-cor3":
        zbar = np.mean([log_.z[i][k0] for i in nodes], axis=0)
        if not _close(ref.z[0], zbar):
            raise ConventionMismatch("reduced internal state does not start at the mean internal state")
    errors = {}
    for i in nodes:
        dy = np.abs(log_.y[i][idx] - ref.s)
        zr = ref.z[i] if mode == "full" else ref.z
        dz = np.abs(log_.z[i][idx] - zr)
        parts = [dy] + ([dz] if dz.shape[1] else [])
        errors[i] = np.max(np.hstack(parts), axis=1)
    t = np.asarray(ref.t)
    tail_start = float(t[-1] - tail_fraction * (t[-1] - t[0]))
    bound = np.full(len(t), np.nan)
    comp_edges = [e for e in log_.edges if e[0] in nodes and e[1] in nodes]
    if comp_edges:
        d_G = diameter(UndirectedNetwork(nodes, comp_edges))
        psi = np.nanmax(np.hstack([log_.psi[e][idx] for e in comp_edges]), axis=1)
        bound = d_G * psi
    return EmergenceReport(mode, t, errors, tail_start, bound)


def reference_for(model: NetworkModel, state: SimState, t_span, mode: str = "full",
                  cfg: IntegratorConfig | None = None, component=None) -> ReferenceLog:
    """Reference trajectory with the initial-condition convention of ``mode``.

    ``reduced-cor2`` starts the shared internal state at the internal state
    of the lowest-numbered agent, ``reduced-cor3`` at the mean.
    """
    nodes = sorted(model.agents if component is None else component)
    if mode == "full":
        return run_reference(build_blended(model, nodes), t_span, state, cfg)
    red = build_reduced_blended(model, nodes)
    x0 = red.initial_state(state.y, state.z)
    if mode == "reduced-cor2":
        x0[red.m:] = state.z[nodes[0]]
    elif mode != "reduced-cor3":
        raise ValueError(f"mode must be one of {MODES}")
    out = run_reference(red, t_span, x0, cfg)
    out.meta["convention"] = {"s0": "mean", "z0": "mean" if mode == "reduced-cor3" else f"agent {nodes[0]}"}
    return out


@dataclass
class SweepReport:
    etas: list
    tails: list
    slack: float
    reports: list

    @property
    def monotone(self) -> bool:
        return all(b <= a * (1.0 + self.slack) for a, b in zip(self.tails, self.tails[1:]))

    def to_dict(self) -> dict:
        return {"etas": self.etas, "tails": self.tails, "slack": self.slack,
                "monotone": self.monotone, "runs": [r.to_dict() for r in self.reports]}


def refunnel(model: NetworkModel, t: float, eta: float, lam: float = 1.0) -> NetworkModel:
    """Same topology, every edge restarted at ``t`` with residual level ``eta``.

    Each new funnel starts at the current performance value (at least
    ``eta``), so a state inside the old funnels is inside the new ones.
    """
    attrs = {}
    for e in model.graph.edges:
        f = model.funnel(*e)
        psis = tuple(ExponentialPerformance(max(p.value(t), eta), eta, lam, t) for p in f.psi)
        attrs[e] = EdgeFunnel(psis, f.mu)
    g = UndirectedNetwork(model.graph.nodes, model.graph.edges, attrs)
    return NetworkModel(model.agents, g)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NETFUNNEL_THREADS", "1")))
    except ValueError:
        return 1


def eta_sweep(model: NetworkModel, state: SimState, t_span, etas: Sequence[float],
              mode: str = "full", cfg: IntegratorConfig | None = None, lam: float = 1.0,
              slack: float = 0.1, reference: ReferenceLog | None = None) -> SweepReport:
    """Re-run a fixed-graph segment for each ``eta`` and compare tail emergence errors."""
    cfg = cfg or IntegratorConfig()
    if reference is None:
        reference = reference_for(model, state, t_span, mode, cfg)

    def one(eta):
        m2 = refunnel(model, t_span[0], eta, lam)
        lg = run(m2, [], t_span, state, cfg)
        return compare_blended(lg, reference, mode)

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        reports = list(ex.map(one, etas))
    return SweepReport(list(etas), [r.tail for r in reports], slack, reports)


# ---------------------------------------------------------------------------
# comparison functions

def _inverse_increasing(f: Callable[[float], float], v: float, lo: float = 0.0, hi: float = 1.0) -> float:
    """Solve ``f(x) = v`` for increasing ``f`` with ``f(lo) <= v``.

    The root is first bracketed within a factor of two (by doubling or
    halving) so brentq converges quickly at any scale.
    """
    if f(lo) >= v:
        return lo
    n = 0
    while f(hi) < v:
        lo, hi = hi, hi * 2.0
        n += 1
        if n > 2100:
            raise NonMonotoneInput(f"value {v!r} not reached; function may be bounded")
    while lo == 0.0 or hi > 2.0 * lo:
        mid = hi * 0.5 if lo == 0.0 else max(lo, hi * 0.5)
        if mid == 0.0 or mid == lo:
            break
        if f(mid) < v:
            lo = mid
            break
        hi = mid
    return brentq(lambda x: f(x) - v, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def _inverse_decreasing(f: Callable[[float], float], v: float) -> float:
    """Solve ``f(t) = v`` for decreasing ``f`` on ``[0, inf)`` with ``f -> 0``."""
    if v >= f(0.0):
        return 0.0
    return _inverse_increasing(lambda t: -f(t), -v)


def _require(cond, msg):
    if not cond:
        raise NonMonotoneInput(msg)


@dataclass
class GammaConstruction:
    """Gain ``gamma`` built from ``(beta, gamma_hat, w)`` and the bounds ``M_x0``, ``M_u``.

    On ``(0, s_max]`` the value is ``gamma_tilde(s)``, the inverse of
    ``eps -> w(T(eps/2)) * gamma_hat^{-1}(eps/2)`` with ``T`` the inverse of
    ``t -> beta(M_x, t)``. Beyond ``s_max`` it continues linearly.
    """

    beta: Callable[[float, float], float]
    gammahat: Callable[[float], float]
    w: Callable[[float], float]
    M_x0: float
    M_u: float
    M_x: float
    s_max: float
    eps_max: float
    grid: np.ndarray
    values: np.ndarray

    def beta_Mx(self, t: float) -> float:
        return self.beta(self.M_x, t)

    def beta_Mx_inv(self, v: float) -> float:
        return _inverse_decreasing(self.beta_Mx, v)

    def gammahat_inv(self, v: float) -> float:
        return _inverse_increasing(self.gammahat, v)

    def gamma_tilde_inv(self, eps: float) -> float:
        if not 0 < eps <= self.eps_max * (1 + 1e-15):
            raise ValueError(f"eps={eps!r} outside (0, {self.eps_max!r}]")
        h = 0.5 * min(eps, self.eps_max)
        return self.w(self.beta_Mx_inv(h)) * self.gammahat_inv(h)

    def __call__(self, s: float) -> float:
        if s <= 0:
            return 0.0
        if s >= self.s_max:
            return self.eps_max * s / self.s_max
        return _inverse_increasing(lambda e: self.gamma_tilde_inv(e) if e > 0 else 0.0, s,
                                   0.0, self.eps_max)

    def T_star(self, s: float) -> float:
        return self.beta_Mx_inv(self(s) / 2.0)

    def relation_residual(self, s: float) -> float:
        """Relative residual of ``gamma(s) = 2 gamma_hat(s / w(T*(s)))``."""
        g = self(s)
        rhs = 2.0 * self.gammahat(s / self.w(self.T_star(s)))
        return abs(g - rhs) / max(abs(g), 1e-300)

    def table(self) -> list:
        return [(float(s), float(v)) for s, v in zip(self.grid, self.values)]


def construct_gamma(beta: Callable[[float, float], float], gammahat: Callable[[float], float],
                    w: Callable[[float], float], M_x0: float, M_u: float,
                    n_grid: int = 50, decades: float = 8.0) -> GammaConstruction:
    """Tabulate the gain on a log grid spanning ``decades`` below ``s_max``."""
    if not (M_x0 > 0 and M_u > 0):
        raise ValueError("M_x0 and M_u must be positive")
    rs = np.linspace(0.0, 2.0 * M_x0, 9)[1:]
    ts = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 13)])
    for t in ts:
        vals = [beta(r, t) for r in rs]
        # values that underflowed to zero at large t carry no information
        _require(all(b > a or a == b == 0.0 for a, b in zip(vals, vals[1:])), f"beta(., {t:g}) is not increasing")
    for r in rs:
        vals = [beta(r, t) for t in ts]
        _require(all(b <= a for a, b in zip(vals, vals[1:])), f"beta({r:g}, .) is not non-increasing")
    ss = np.concatenate([[0.0], np.geomspace(1e-6, 1e6, 25)])
    gv = [gammahat(s) for s in ss]
    _require(gv[0] == 0 and all(b > a for a, b in zip(gv, gv[1:])), "gamma_hat is not strictly increasing from 0")
    wv = [w(t) for t in ts]
    _require(0 < wv[0] <= 1.0, "w(0) must lie in (0, 1]")
    _require(all(0 <= b <= a for a, b in zip(wv, wv[1:])), "w is not non-increasing")
    _require(all(b < a for a, b in zip(wv, wv[1:]) if a > 0), "w is not decreasing")
    M_x = beta(M_x0, 0.0) + gammahat(M_u)
    eps_max = 2.0 * beta(M_x, 0.0)
    gc = GammaConstruction(beta, gammahat, w, M_x0, M_u, M_x, 0.0, eps_max, np.zeros(0), np.zeros(0))
    gc.s_max = w(0.0) * gc.gammahat_inv(eps_max / 2.0)
    grid = np.geomspace(gc.s_max * 10.0 ** (-decades), gc.s_max, n_grid)
    values = np.array([gc(s) for s in grid])
    if np.any(np.diff(values) <= 0):
        raise NonMonotoneInput("constructed gain is not strictly increasing on its grid")
    gc.grid, gc.values = grid, values
    return gc


def point_distance(x, point=0.0) -> float:
    """``|x - point|_inf`` for the set ``{point}``."""
    return float(np.max(np.abs(np.atleast_1d(np.asarray(x, dtype=float) - point))))


def z_consensus_distance(zs: Sequence[Sequence[float]]) -> float:
    """Distance of stacked internal states from the consensus subspace (max deviation from mean)."""
    Z = np.atleast_2d(np.asarray(zs, dtype=float))
    return float(np.max(np.abs(Z - Z.mean(axis=0)))) if Z.size else 0.0


def decay_bound_series(t: Sequence[float], dist: Sequence[float], u_norm: Sequence[float],
                       gc: GammaConstruction, beta: Callable[[float, float], float] | None = None) -> tuple:
    """``(lhs, rhs)`` of the decay inequality at each sample.

    ``rhs[k] = beta(dist[0], t_k - t_0) + gamma(delta_k)`` where
    ``delta_k = max_{j<k} u_norm[j] * w(t_k - t_j)`` (zero at ``k = 0``).
    """
    beta = beta or gc.beta
    t = np.asarray(t, dtype=float)
    dist = np.asarray(dist, dtype=float)
    u = np.abs(np.asarray(u_norm, dtype=float))
    if not (t.shape == dist.shape == u.shape) or t.ndim != 1:
        raise ValueError("t, dist and u_norm must be 1-D of equal length")
    if dist[0] > gc.M_x0:
        raise HypothesisViolated(f"initial distance {dist[0]!r} exceeds M_x0={gc.M_x0!r}")
    if np.max(u) > gc.M_u:
        raise HypothesisViolated(f"input bound {np.max(u)!r} exceeds M_u={gc.M_u!r}")
    rhs = np.empty_like(t)
    for k in range(len(t)):
        delta = 0.0
        if k:
            wv = np.array([gc.w(t[k] - tj) for tj in t[:k]])
            delta = float(np.max(u[:k] * wv))
        rhs[k] = beta(dist[0], t[k] - t[0]) + gc(delta)
    return dist, rhs


def check_decay_bound(t, dist, u_norm, gc: GammaConstruction, beta=None) -> bool:
    lhs, rhs = decay_bound_series(t, dist, u_norm, gc, beta)
    return bool(np.all(lhs <= rhs))


def check_small_gain(gammahat: Callable[[float], float], grid: Sequence[float], growth: float = 0.01) -> bool:
    """Sampled test that ``s - gamma_hat(2 s)`` is positive, increasing and growing.

    Unboundedness cannot be sampled; it is replaced by requiring
    ``alpha(s_max) >= growth * s_max`` at the largest grid point.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or len(g) < 2 or np.any(g <= 0) or np.any(np.diff(g) <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    alpha = np.array([s - gammahat(2.0 * s) for s in g])
    return bool(np.all(alpha > 0) and np.all(np.diff(alpha) > 0) and alpha[-1] >= growth * g[-1])
