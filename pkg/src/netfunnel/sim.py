"""Time integration of the closed loop, plug-and-play events and trajectory logs.

Two embedded Runge-Kutta steppers share one driver:

* ``radau5``: three-stage Radau IIA (order 5, L-stable) with simplified
  Newton iterations. This is the default because the funnel coupling is very
  stiff once the ratios sit close to the boundary.
* ``dopri5``: explicit Dormand-Prince 5(4), fine for non-stiff problems.

Both reject any trial step whose stages reach a ratio of ``1 - boundary_guard``
and halve the step instead.
"""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.optimize import brentq

from .dynamics import (
    AgentModel, BlendedModel, ComponentSystem, NetworkModel, ReducedBlendedModel,
    build_blended,
)
from .errors import (
    DuplicateJoin, FiniteEscapeSuspected, FunnelBreach, InitialConditionOutsideFunnel,
    NonFiniteResult, StepUnderflow, UnknownNode,
)
from .events import EventSchedule, Join, Leave
from .funnel import handshake
from .graph import connected_components

log = logging.getLogger(__name__)

__all__ = [
    "IntegratorConfig", "SimState", "TrajectoryLog", "ReferenceLog",
    "run", "step", "integrate", "apply_event", "verify_initial_funnel", "run_reference",
    "sample_times",
]

EPS = np.finfo(float).eps
_ROLLBACK_DEPTH = 4
_MAX_ROLLBACKS = 50


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "radau5"
    rtol: float = 1e-6
    atol: float = 1e-8
    dt_min: float = 1e-12
    dt_max: float = 1.0
    boundary_guard: float = 1e-9
    blowup_norm: float = 1e8
    sample_dt: float = 0.1
    dt_init: float = 1e-3

    def __post_init__(self):
        if self.method not in ("radau5", "dopri5"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not 0 < self.dt_min < self.dt_max:
            raise ValueError("need 0 < dt_min < dt_max")
        if not 0 < self.boundary_guard < 1:
            raise ValueError("boundary_guard must lie in (0, 1)")
        if not (self.blowup_norm > 0 and self.sample_dt > 0 and self.dt_init > 0):
            raise ValueError("blowup_norm, sample_dt and dt_init must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------------------
# systems seen by the steppers

class _Plain:
    """Adapter for a right-hand side without funnel edges."""

    def __init__(self, f: Callable[[float, np.ndarray], np.ndarray], size: int, switches=None):
        self.f = f
        self.size = size
        if switches is not None:
            self.switch_values = switches

    def rhs(self, t, x):
        return self.f(t, x), 0.0, None

    def max_ratio(self, t, x):
        return 0.0, None


def _fd_jacobian(system, t, x, f0):
    n = x.shape[0]
    J = np.empty((n, n))
    for c in range(n):
        h = 1e-8 * max(1.0, abs(x[c]))
        xp = x.copy()
        xp[c] += h
        J[:, c] = (system.rhs(t, xp)[0] - f0) / h
    return J


def _rms(v):
    return math.sqrt(float(np.dot(v, v)) / v.size) if v.size else 0.0


class _GuardRejected(Exception):
    pass


class _Stepper:
    """Shared step-size bookkeeping: guard, underflow and blow-up handling."""

    def __init__(self, system, cfg: IntegratorConfig, guard: bool = True):
        self.sys = system
        self.cfg = cfg
        self.guard = guard
        self.limit = 1.0 - cfg.boundary_guard
        self.n_accepted = 0
        self.n_rejected = 0
        self.max_ratio = 0.0

    def _check_guard(self, t, x):
        if not self.guard:
            return
        r, where = self.sys.max_ratio(t, x)
        if r >= self.limit:
            raise _GuardRejected(r, where)

    def _shrink(self, t, h, reason, info=None):
        h *= 0.5
        self.n_rejected += 1
        if h < self.cfg.dt_min:
            if reason == "guard":
                r, where = info
                edge, p = where if where is not None else (None, None)
                raise FunnelBreach(t, edge, p, r)
            if reason == "nonfinite":
                raise FiniteEscapeSuspected(t, float("inf"))
            raise StepUnderflow(t, h)
        return h

    def reset(self, factor: float):
        """Forget step history after a rollback and restart with a shorter step."""
        self.h *= factor

    def _accepted(self, t, x):
        self.n_accepted += 1
        nrm = float(np.max(np.abs(x))) if x.size else 0.0
        if not nrm <= self.cfg.blowup_norm:
            raise FiniteEscapeSuspected(t, nrm)
        if self.guard:
            r, _ = self.sys.max_ratio(t, x)
            self.max_ratio = max(self.max_ratio, r)


# Dormand-Prince 5(4)
_DP_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


class DoPri5(_Stepper):
    def __init__(self, system, cfg, guard=True, t=0.0, x=None, h=None):
        super().__init__(system, cfg, guard)
        self.t = t
        self.x = np.array(x, dtype=float)
        self.h = min(h or cfg.dt_init, cfg.dt_max)
        self.k1 = None

    def _eval(self, t, x):
        dx = self.sys.rhs(t, x)[0]
        if not np.all(np.isfinite(dx)):
            raise FloatingPointError
        return dx

    def interpolate(self, before: dict, tau: float) -> np.ndarray:
        """Cubic Hermite state on the last step (``before`` is the pre-step snapshot)."""
        t0, x0 = before["t"], before["x"]
        f0 = before["k1"] if before["k1"] is not None else self._eval(t0, x0)
        h = self.t - t0
        s = (tau - t0) / h
        h00, h10 = (1 + 2 * s) * (1 - s) ** 2, s * (1 - s) ** 2
        h01, h11 = s * s * (3 - 2 * s), s * s * (s - 1)
        return h00 * x0 + h10 * h * f0 + h01 * self.x + h11 * h * self.k1

    def advance(self, t_stop: float) -> float:
        cfg = self.cfg
        t, x = self.t, self.x
        if self.k1 is None:
            self.k1 = self._eval(t, x)
        h = self.h
        while True:
            clipped = t + h >= t_stop
            h_eff = t_stop - t if clipped else h
            try:
                K = [self.k1]
                for s in range(1, 7):
                    xs = x + h_eff * sum(a * k for a, k in zip(_DP_A[s], K) if a != 0.0)
                    ts = t + _DP_C[s] * h_eff
                    self._check_guard(ts, xs)
                    K.append(self._eval(ts, xs))
            except _GuardRejected as exc:
                h = self._shrink(t, h_eff, "guard", exc.args)
                continue
            except (FloatingPointError, NonFiniteResult, OverflowError, ZeroDivisionError, ValueError):
                h = self._shrink(t, h_eff, "nonfinite")
                continue
            x_new = xs
            err = h_eff * (np.array(K).T @ _DP_E)
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(x), np.abs(x_new))
            en = _rms(err / scale)
            if en <= 1.0:
                fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                h_next = h_eff * fac
                if clipped:
                    h_next = max(h_next, h)
                self.h = min(h_next, cfg.dt_max)
                self.t = t_stop if clipped else t + h_eff
                self.x = x_new
                self.k1 = K[6]
                self._accepted(self.t, x_new)
                return self.t
            fac = max(0.2, 0.9 * en ** -0.2)
            h = h_eff * fac
            self.n_rejected += 1
            if h < cfg.dt_min:
                raise StepUnderflow(t, h)


# Radau IIA, three stages
_S6 = 6 ** 0.5
_RC = np.array([(4 - _S6) / 10, (4 + _S6) / 10, 1.0])
_RE = np.array([-13 - 7 * _S6, -13 + 7 * _S6, -1]) / 3
_MU_REAL = 3 + 3 ** (2 / 3) - 3 ** (1 / 3)
_MU_COMPLEX = 3 + 0.5 * (3 ** (1 / 3) - 3 ** (2 / 3)) - 0.5j * (3 ** (5 / 6) + 3 ** (7 / 6))
_RT = np.array([
    [0.09443876248897524, -0.14125529502095421, 0.03002919410514742],
    [0.25021312296533332, 0.20412935229379994, -0.38294211275726192],
    [1, 1, 0]])
_RTI = np.array([
    [4.17871859155190428, 0.32768282076106237, 0.52337644549944951],
    [-4.17871859155190428, -0.32768282076106237, 0.47662355450055044],
    [0.50287263494578682, -2.57192694985560522, 0.59603920482822492]])
_RTI_REAL = _RTI[0]
_RTI_COMPLEX = _RTI[1] + 1j * _RTI[2]
_RP = np.array([
    [13 / 3 + 7 * _S6 / 3, -23 / 3 - 22 * _S6 / 3, 10 / 3 + 5 * _S6],
    [13 / 3 - 7 * _S6 / 3, -23 / 3 + 22 * _S6 / 3, 10 / 3 - 5 * _S6],
    [1 / 3, -8 / 3, 10 / 3]])
_NEWTON_MAXITER = 6


class Radau5(_Stepper):
    def __init__(self, system, cfg, guard=True, t=0.0, x=None, h=None):
        super().__init__(system, cfg, guard)
        self.t = t
        self.x = np.array(x, dtype=float)
        self.h = min(h or cfg.dt_init, cfg.dt_max)
        self.f = None
        self.J = None
        self.current_jac = False
        self.lu = None  # (h, LU_real, LU_complex)
        self.dense = None  # (t_old, h_old, x_old, Q)
        self.h_old = None
        self.err_old = None
        self.newton_tol = max(10 * EPS / cfg.rtol, min(0.03, cfg.rtol ** 0.5))
        self.n_jac = 0

    def _rhs(self, t, x):
        return self.sys.rhs(t, x)[0]

    def reset(self, factor: float):
        super().reset(factor)
        self.dense = None
        self.h_old = self.err_old = None
        self.J = None
        self.lu = None

    def interpolate(self, before: dict, tau: float) -> np.ndarray:
        """Collocation polynomial of the last accepted step."""
        t0, h0, x0, Q = self.dense
        s = (tau - t0) / h0
        return x0 + Q @ np.array([s, s * s, s ** 3])

    def _jac(self, t, x):
        self.n_jac += 1
        jac = getattr(self.sys, "jacobian", None)
        if jac is not None:
            return jac(t, x)
        return _fd_jacobian(self.sys, t, x, self.f)

    def _factor(self, h):
        if self.lu is None or self.lu[0] != h:
            n = self.x.shape[0]
            I = np.eye(n)
            self.lu = (h, lu_factor(_MU_REAL / h * I - self.J, check_finite=False),
                       lu_factor(_MU_COMPLEX / h * I - self.J, check_finite=False))
        return self.lu[1], self.lu[2]

    def _collocation(self, t, x, h, Z0, scale):
        lu_r, lu_c = self._factor(h)
        m_real = _MU_REAL / h
        m_complex = _MU_COMPLEX / h
        W = _RTI @ Z0
        Z = Z0
        F = np.empty((3, x.shape[0]))
        ch = h * _RC
        dW = np.empty_like(W)
        dW_norm_old = None
        rate = None
        for k in range(_NEWTON_MAXITER):
            for i in range(3):
                F[i] = self._rhs(t + ch[i], x + Z[i])
            if not np.all(np.isfinite(F)):
                break
            f_real = F.T @ _RTI_REAL - m_real * W[0]
            f_complex = F.T @ _RTI_COMPLEX - m_complex * (W[1] + 1j * W[2])
            dW_real = lu_solve(lu_r, f_real, check_finite=False)
            dW_complex = lu_solve(lu_c, f_complex, check_finite=False)
            dW[0] = dW_real
            dW[1] = dW_complex.real
            dW[2] = dW_complex.imag
            dW_norm = _rms((dW / scale).ravel())
            if dW_norm_old is not None:
                rate = dW_norm / dW_norm_old
            if rate is not None and (rate >= 1 or rate ** (_NEWTON_MAXITER - k) / (1 - rate) * dW_norm > self.newton_tol):
                break
            W = W + dW
            Z = _RT @ W
            if dW_norm == 0 or (rate is not None and rate / (1 - rate) * dW_norm < self.newton_tol):
                return True, k + 1, Z, rate
            dW_norm_old = dW_norm
        return False, k + 1, Z, rate

    def _predict(self, h, en):
        if not self.err_old or self.h_old is None or en == 0:
            mult = 1.0
        else:
            mult = h / self.h_old * (self.err_old / en) ** 0.25
        return min(1.0, mult) * (en ** -0.25 if en > 0 else math.inf)

    def advance(self, t_stop: float) -> float:
        cfg = self.cfg
        t, x = self.t, self.x
        if self.f is None:
            self.f = self._rhs(t, x)
        if self.J is None:
            self.J = self._jac(t, x)
            self.current_jac = True
            self.lu = None
        h = self.h
        while True:
            if h < cfg.dt_min:
                raise StepUnderflow(t, h)
            clipped = t + h >= t_stop
            h_eff = t_stop - t if clipped else h
            if self.dense is None or h_eff > 10 * self.dense[1]:
                # no history, or extrapolating a much shorter step would mislead Newton
                Z0 = np.zeros((3, x.shape[0]))
            else:
                t_old, h_old, x_old, Q = self.dense
                s = (t + h_eff * _RC - t_old) / h_old
                Z0 = (Q @ np.vstack([s, s * s, s ** 3])).T + x_old - x
            scale = cfg.atol + np.abs(x) * cfg.rtol
            try:
                while True:
                    ok, n_iter, Z, rate = self._collocation(t, x, h_eff, Z0, scale)
                    if ok or self.current_jac:
                        break
                    self.J = self._jac(t, x)
                    self.current_jac = True
                    self.lu = None
            except (NonFiniteResult, OverflowError, ZeroDivisionError, ValueError, FloatingPointError):
                ok = False
                Z = None
            if not ok:
                nonfinite = Z is None or not np.all(np.isfinite(Z))
                reason, info = ("nonfinite" if nonfinite else "newton"), None
                if not nonfinite and self.guard:
                    # Newton wandering past the funnel boundary counts as a guard rejection
                    r, where = max((self.sys.max_ratio(t + _RC[i] * h_eff, x + Z[i]) for i in range(3)),
                                   key=lambda rw: rw[0])
                    if r >= self.limit:
                        reason, info = "guard", (r, where)
                h = self._shrink(t, h_eff, reason, info)
                self.dense = None
                continue
            try:
                for i in range(3):
                    self._check_guard(t + _RC[i] * h_eff, x + Z[i])
            except _GuardRejected as exc:
                h = self._shrink(t, h_eff, "guard", exc.args)
                self.dense = None
                continue
            x_new = x + Z[-1]
            lu_r, _ = self._factor(h_eff)
            ZE = Z.T @ _RE / h_eff
            err = lu_solve(lu_r, self.f + ZE, check_finite=False)
            scale = cfg.atol + np.maximum(np.abs(x), np.abs(x_new)) * cfg.rtol
            safety = 0.9 * (2 * _NEWTON_MAXITER + 1) / (2 * _NEWTON_MAXITER + n_iter)
            # Always use the filtered estimate: the plain one under-reports errors in the
            # very stiff directions that open up close to the funnel boundary.
            try:
                err = lu_solve(lu_r, self._rhs(t, x + err) + ZE, check_finite=False)
            except (NonFiniteResult, OverflowError, ZeroDivisionError, ValueError):
                pass
            en = _rms(err / scale)
            if not en <= 1:
                fac = self._predict(h_eff, en) if math.isfinite(en) else 0.2
                h = h_eff * max(0.2, safety * fac)
                self.n_rejected += 1
                continue
            break
        recompute_jac = n_iter > 2 and rate is not None and rate > 1e-3
        fac = min(10.0, safety * self._predict(h_eff, en))
        if not recompute_jac and fac < 1.2:
            fac = 1.0
        h_next = h_eff * fac
        if clipped:
            h_next = max(h_next, h)
        h_next = min(h_next, cfg.dt_max)
        t_new = t_stop if clipped else t + h_eff
        self.f = self._rhs(t_new, x_new)
        if recompute_jac:
            self.J = self._jac(t_new, x_new)
            self.current_jac = True
            self.lu = None
        else:
            self.current_jac = False
        if not (clipped and h_eff < 0.1 * h):
            # forced short steps (landing on a target or kink) say nothing about the error trend
            self.h_old = h_eff
            self.err_old = en
        self.h = h_next
        self.dense = (t, h_eff, x, Z.T @ _RP)
        self.t, self.x = t_new, x_new
        self._accepted(t_new, x_new)
        return t_new


_STEPPERS = {"radau5": Radau5, "dopri5": DoPri5}


def _stepper(system, cfg, guard, t, x, h=None):
    return _STEPPERS[cfg.method](system, cfg, guard, t, x, h)


def step(system, t: float, x, cfg: IntegratorConfig, dt_try: float, guard: bool = True) -> tuple:
    """One accepted step of at most ``dt_try``: returns ``(x_new, dt_used, dt_next)``.

    ``system`` is a :class:`~netfunnel.dynamics.ComponentSystem` or any
    object with ``rhs(t, x) -> (dx, max_ratio, where)`` and ``max_ratio``.
    """
    st = _stepper(system, cfg, guard, t, x, dt_try)
    t_new = st.advance(t + dt_try)
    return st.x.copy(), t_new - t, st.h


def _switches(system, t, x):
    fn = getattr(system, "switch_values", None)
    if fn is None:
        return None
    try:
        g = fn(t, x)
    except (NonFiniteResult, OverflowError, ZeroDivisionError, ValueError):
        return None
    return None if g is None or not np.all(np.isfinite(g)) else g


def _first_crossing(st, before, g0, g1):
    """Earliest time inside the last step where a switching function changes sign."""
    t0, t1 = before["t"], st.t
    idx = np.flatnonzero(g0 * g1 < 0)
    if not idx.size:
        return None
    best = t1
    for k in idx:
        def g(tau, k=k):
            v = _switches(st.sys, tau, st.interpolate(before, tau))
            return math.nan if v is None else float(v[k])
        lo, hi = g(t0), g(t1)
        if math.isfinite(lo) and math.isfinite(hi) and lo * hi < 0:
            tc = brentq(g, t0, t1, xtol=1e-14 * max(1.0, abs(t1)), rtol=4 * EPS)
        else:
            tc = t0 + (t1 - t0) * g0[k] / (g0[k] - g1[k])
        best = min(best, tc)
    tiny = 1e-12 * max(1.0, abs(t1))
    if best - t0 < tiny or t1 - best < tiny:
        return None
    # land just past the surface so the next step starts on the new branch
    return best + 64 * EPS * max(1.0, abs(best))


def integrate(system, t0: float, x0, targets: Sequence[float], cfg: IntegratorConfig,
              guard: bool = True, stats: Optional[dict] = None) -> list:
    """States at each of the increasing ``targets``; steps land on them exactly.

    Steps also end on sign changes of the system's switching functions (the
    ``if``/``abs``/``min``/``max`` kinks of the fields), so error control never
    straddles a non-smooth point.
    """
    st = _stepper(system, cfg, guard, t0, x0)
    out = []
    n_kinks = n_rollbacks = 0
    history = deque(maxlen=_ROLLBACK_DEPTH)
    depth = 0
    g = _switches(system, st.t, st.x)
    for tt in targets:
        if tt < st.t:
            raise ValueError("targets must be increasing and not before t0")
        while st.t < tt:
            before = dict(st.__dict__)
            try:
                st.advance(tt)
            except StepUnderflow:
                # An accepted step can land close to the boundary on a slightly wrong
                # branch from which Newton cannot recover; redo the last few steps shorter.
                if not history or n_rollbacks >= _MAX_ROLLBACKS:
                    raise
                depth += 1
                n_rollbacks += 1
                for _ in range(min(depth, len(history)) - 1):
                    history.pop()
                snap, g = history.pop()
                counts = (st.n_accepted, st.n_rejected, st.max_ratio)
                st.__dict__.update(snap)
                st.n_accepted, st.n_rejected, st.max_ratio = counts
                st.reset(0.1 ** depth)
                continue
            history.append((before, g))
            g1 = _switches(system, st.t, st.x)
            tc = None if g is None or g1 is None else _first_crossing(st, before, g, g1)
            if tc is not None:
                counts = (st.n_accepted, st.n_rejected, st.max_ratio)
                st.__dict__.update(before)
                st.n_accepted, st.n_rejected, st.max_ratio = counts
                st.advance(tc)
                g1 = _switches(system, st.t, st.x)
                n_kinks += 1
            g = g1
            if len(history) == history.maxlen:
                depth = 0
        out.append(st.x.copy())
    if stats is not None:
        stats["accepted"] = stats.get("accepted", 0) + st.n_accepted
        stats["rejected"] = stats.get("rejected", 0) + st.n_rejected
        stats["max_ratio"] = max(stats.get("max_ratio", 0.0), st.max_ratio)
        stats["kinks"] = stats.get("kinks", 0) + n_kinks
        stats["rollbacks"] = stats.get("rollbacks", 0) + n_rollbacks
    return out


# ---------------------------------------------------------------------------
# state, events

@dataclass
class SimState:
    """Active agents' outputs and internal states, plus frozen departed agents."""

    t: float
    y: dict
    z: dict
    frozen: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = {int(k): np.array(v, dtype=float).reshape(-1) for k, v in self.y.items()}
        self.z = {int(k): np.array(v, dtype=float).reshape(-1) for k, v in self.z.items()}

    def copy(self) -> "SimState":
        return SimState(self.t, {k: v.copy() for k, v in self.y.items()},
                        {k: v.copy() for k, v in self.z.items()},
                        {k: (a.copy(), b.copy()) for k, (a, b) in self.frozen.items()})


def verify_initial_funnel(model: NetworkModel, state: SimState) -> bool:
    return _first_violation(model, state) is None


def _first_violation(model, state):
    for i, j in sorted(model.graph.edges):
        f = model.funnel(i, j)
        for p in range(f.m):
            nu = state.y[j][p] - state.y[i][p]
            psi = f.psi[p].value(state.t)
            if not abs(nu) < psi:
                return (i, j), p, nu, psi
    return None


def apply_event(model: NetworkModel, state: SimState, event, library: Mapping[int, AgentModel] | None = None) -> tuple:
    """Apply one join or leave at ``state.t``; other agents' states are untouched."""
    if event.t != state.t:
        raise ValueError(f"event at t={event.t} applied to state at t={state.t}")
    state = state.copy()
    agents = dict(model.agents)
    g = model.graph
    if isinstance(event, Leave):
        if event.node not in agents:
            raise UnknownNode(f"agent {event.node} is not in the network")
        state.frozen[event.node] = (state.y.pop(event.node), state.z.pop(event.node))
        del agents[event.node]
        g = g.without_node(event.node)
        return NetworkModel(agents, g), state
    if not isinstance(event, Join):
        raise TypeError(f"unknown event {event!r}")
    i = event.node
    if i in agents:
        raise DuplicateJoin(f"agent {i} is already in the network")
    agent = event.agent
    if agent is None:
        if library is None or i not in library:
            raise UnknownNode(f"no agent model for {i}")
        agent = library[i]
    prev = state.frozen.pop(i, None)
    y0 = event.y0 if event.y0 is not None else (prev[0] if prev else None)
    z0 = event.z0 if event.z0 is not None else (prev[1] if prev else None)
    if y0 is None:
        raise UnknownNode(f"agent {i} joins without an initial state")
    if z0 is None:
        z0 = np.zeros(agent.n)
    y0 = np.array(y0, dtype=float)
    z0 = np.array(z0, dtype=float)
    if y0.shape != (agent.m,) or z0.shape != (agent.n,):
        raise ValueError(f"initial state of agent {i} has wrong dimensions")
    state.y[i] = y0
    state.z[i] = z0
    agents[i] = agent
    g = g.with_node(i)
    for je in event.edges:
        j = je.neighbor
        if j not in agents or j == i:
            raise UnknownNode(f"agent {i} cannot connect to {j}")
        if je.funnel is not None:
            f = je.funnel
        else:
            hs = je.handshake
            f = handshake(state.y[i], state.y[j], state.t, hs.eta, hs.lam, hs.margin, hs.mu)
        g = g.with_edge(i, j, f)
    return NetworkModel(agents, g), state


# ---------------------------------------------------------------------------
# logs

@dataclass
class TrajectoryLog:
    """Sampled network trajectory. Entries are NaN while an agent or edge is absent.

    Departed agents keep their frozen ``y``/``z`` but have NaN inputs and a
    membership label of -1. Otherwise the label is the smallest node id of
    the agent's connected component.
    """

    t: np.ndarray
    nodes: list
    m: int
    n: dict
    y: dict
    z: dict
    u: dict
    ratio: dict
    psi: dict
    membership: dict
    events: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    # (model, state) at the end of the run, kept so a segment can be restarted
    final: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def edges(self) -> list:
        return sorted(self.ratio)

    def active(self, k: int) -> list:
        return [i for i in self.nodes if self.membership[i][k] >= 0]

    def components(self, k: int) -> list:
        groups = {}
        for i in self.nodes:
            lab = int(self.membership[i][k])
            if lab >= 0:
                groups.setdefault(lab, []).append(i)
        return [groups[c] for c in sorted(groups)]

    def active_edges(self, k: int) -> list:
        return [e for e in self.edges if not np.isnan(self.ratio[e][k, 0])]

    def max_ratio(self) -> float:
        vals = [np.nanmax(np.abs(r)) for r in self.ratio.values() if np.any(~np.isnan(r))]
        return float(max(vals)) if vals else 0.0

    def sup_u(self) -> dict:
        out = {}
        for i, u in self.u.items():
            out[i] = float(np.nanmax(np.abs(u))) if np.any(~np.isnan(u)) else 0.0
        return out

    def index_of(self, t: float) -> int:
        """Last sample index with time ``t`` (post-event row for event times)."""
        k = int(np.searchsorted(self.t, t, side="right")) - 1
        if k < 0 or self.t[k] != t:
            raise KeyError(f"no sample at t={t}")
        return k

    def summary(self) -> dict:
        comp_hist = []
        last = None
        for k in range(len(self.t)):
            comps = self.components(k)
            if comps != last:
                comp_hist.append({"t": float(self.t[k]), "components": comps})
                last = comps
        return {
            "max_ratio": self.max_ratio(),
            "sup_u": {str(i): v for i, v in self.sup_u().items()},
            "events": self.events,
            "component_history": comp_hist,
            **self.meta,
        }


@dataclass
class ReferenceLog:
    """Sampled blended (``kind="blended"``) or reduced (``kind="reduced"``) trajectory.

    ``z`` is ``{node: (K, n_i)}`` for blended references and a ``(K, n)``
    array for reduced ones.
    """

    t: np.ndarray
    kind: str
    nodes: list
    s: np.ndarray
    z: object
    meta: dict = field(default_factory=dict)


def sample_times(t0: float, t_end: float, dt: float) -> list:
    """``t0``, every multiple ``k * dt`` strictly inside, and ``t_end``.

    The grid is anchored at zero, so runs that start at different times
    still share sample instants bit for bit.
    """
    tol = 1e-9 * max(1.0, abs(t0), abs(t_end))
    k = math.floor(t0 / dt) + 1
    ts = [float(t0)]
    while k * dt < t_end - tol:
        if k * dt > t0 + tol:
            ts.append(k * dt)
        k += 1
    ts.append(float(t_end))
    return ts


class _Recorder:
    def __init__(self, m):
        self.m = m
        self.rows = []
        self.nodes = set()
        self.edges = set()
        self.n = {}

    def add(self, t, model, state, observed):
        membership = {}
        for comp in connected_components(model.graph):
            for a in comp:
                membership[a] = comp[0]
        for a in state.y:
            self.n[a] = state.z[a].shape[0]
        for a, (_, zf) in state.frozen.items():
            self.n[a] = zf.shape[0]
        self.nodes.update(state.y)
        self.nodes.update(state.frozen)
        self.edges.update(observed["ratio"])
        self.rows.append((t, {a: (v.copy(), state.z[a].copy()) for a, v in state.y.items()},
                          {a: (yf.copy(), zf.copy()) for a, (yf, zf) in state.frozen.items()},
                          observed, membership))

    def build(self, events, meta) -> TrajectoryLog:
        K = len(self.rows)
        m = self.m
        nodes = sorted(self.nodes)
        edges = sorted(self.edges)
        t = np.array([r[0] for r in self.rows])
        y = {a: np.full((K, m), np.nan) for a in nodes}
        z = {a: np.full((K, self.n[a]), np.nan) for a in nodes}
        u = {a: np.full((K, m), np.nan) for a in nodes}
        ratio = {e: np.full((K, m), np.nan) for e in edges}
        psi = {e: np.full((K, m), np.nan) for e in edges}
        memb = {a: np.full(K, -1, dtype=int) for a in nodes}
        for k, (_, act, frz, obs, mem) in enumerate(self.rows):
            for a, (yv, zv) in list(act.items()) + list(frz.items()):
                y[a][k] = yv
                z[a][k] = zv
            for a, uv in obs["u"].items():
                u[a][k] = uv
            for e, rv in obs["ratio"].items():
                ratio[e][k] = rv
                psi[e][k] = obs["psi"][e]
            for a, lab in mem.items():
                memb[a][k] = lab
        return TrajectoryLog(t, nodes, m, dict(self.n), y, z, u, ratio, psi, memb, events, meta)


def _observe(model, state, systems=None):
    obs = {"u": {}, "ratio": {}, "psi": {}, "ginv_norm": {}}
    if not model.agents:
        return obs
    if systems is None:
        systems = [ComponentSystem(model, comp) for comp in connected_components(model.graph)]
    for cs in systems:
        x = cs.pack(state.y, state.z)
        o = cs.observe(state.t, x)
        for key in obs:
            obs[key].update({k: np.asarray(v, dtype=float) if key != "ginv_norm" else v
                             for k, v in o[key].items()})
    return obs


def _event_record(ev, model):
    if isinstance(ev, Leave):
        return {"t": ev.t, "kind": "leave", "node": ev.node}
    edges = []
    for je in ev.edges:
        edges.append({"neighbor": je.neighbor,
                      "funnel": model.funnel(ev.node, je.neighbor).to_dict()})
    return {"t": ev.t, "kind": "join", "node": ev.node, "edges": edges}


def run(model: NetworkModel, schedule: EventSchedule | Iterable, t_span: Sequence[float], init: SimState,
        cfg: IntegratorConfig | None = None, library: Mapping[int, AgentModel] | None = None) -> TrajectoryLog:
    """Integrate the closed loop over ``t_span`` applying scheduled events.

    Each connected component is integrated on its own between events, all
    on a shared sample grid. Event rows carry the post-event state.
    """
    cfg = cfg or IntegratorConfig()
    t0, t_end = float(t_span[0]), float(t_span[1])
    if not t_end > t0:
        raise ValueError("t_span must be increasing")
    if not isinstance(schedule, EventSchedule):
        schedule = EventSchedule.of(list(schedule))
    lib = dict(library or {})
    for k, a in model.agents.items():
        lib.setdefault(k, a)
    for ev in schedule:
        if isinstance(ev, Join) and ev.agent is not None:
            lib.setdefault(ev.node, ev.agent)
    state = init.copy()
    state.t = t0
    if set(state.y) != set(model.agents):
        raise ValueError("initial state must cover exactly the active agents")
    events = [ev for ev in schedule if ev.t <= t_end]
    if any(ev.t < t0 for ev in events):
        raise ValueError("event scheduled before the start time")
    ev_times = sorted({ev.t for ev in events})
    samples = sample_times(t0, t_end, cfg.sample_dt)
    rec = _Recorder(model.m or next(iter(lib.values())).m)
    ev_log = []
    stats = {"accepted": 0, "rejected": 0, "max_ratio": 0.0}

    def do_events(t, model, state):
        for ev in [e for e in events if e.t == t]:
            model, state = apply_event(model, state, ev, lib)
            ev_log.append(_event_record(ev, model))
        return model, state

    def check_start(model, state):
        bad = _first_violation(model, state)
        if bad is not None:
            edge, p, nu, psi = bad
            raise InitialConditionOutsideFunnel(
                f"t={state.t}: edge {edge} component {p + 1}: |nu|={abs(nu):.6g} >= psi={psi:.6g}")

    model, state = do_events(t0, model, state)
    check_start(model, state)
    rec.add(t0, model, state, _observe(model, state))
    breaks = [tb for tb in ev_times if tb > t0] + ([t_end] if not ev_times or ev_times[-1] < t_end else [])
    cur = t0
    for seg_end in breaks:
        targets = [s for s in samples if cur < s < seg_end] + [seg_end]
        comps = connected_components(model.graph)
        systems = [ComponentSystem(model, comp) for comp in comps]
        traj = []
        for cs in systems:
            x0 = cs.pack(state.y, state.z)
            traj.append(integrate(cs, cur, x0, targets, cfg, True, stats))
        for k, tt in enumerate(targets):
            st = SimState(tt, {}, {}, state.frozen)
            for cs, xs in zip(systems, traj):
                yy, zz = cs.unpack(xs[k])
                st.y.update(yy)
                st.z.update(zz)
            if k == len(targets) - 1:
                state = st
                if tt in ev_times:
                    model, state = do_events(tt, model, state)
                    check_start(model, state)
                    rec.add(tt, model, state, _observe(model, state))
                else:
                    rec.add(tt, model, state, _observe(model, state, systems))
            else:
                rec.add(tt, model, st, _observe(model, st, systems))
        cur = seg_end
    meta = {"steps_accepted": stats["accepted"], "steps_rejected": stats["rejected"],
            "kinks_located": stats.get("kinks", 0),
            "rollbacks": stats.get("rollbacks", 0),
            "integrator": cfg.to_dict()}
    out = rec.build(ev_log, meta)
    out.final = (model, state)
    return out


def run_reference(ref, t_span: Sequence[float], init, cfg: IntegratorConfig | None = None,
                  component: Iterable[int] | None = None) -> ReferenceLog:
    """Integrate blended or reduced dynamics without funnel guards.

    ``ref`` is a :class:`BlendedModel`, :class:`ReducedBlendedModel` or a
    :class:`NetworkModel` (its blended dynamics over ``component``).
    ``init`` is a state vector in the reference layout or a
    :class:`SimState` of the network, from which the initial condition is
    formed by averaging outputs (and, for reduced models, internal states).
    """
    cfg = cfg or IntegratorConfig()
    if isinstance(ref, NetworkModel):
        ref = build_blended(ref, component)
    if isinstance(init, SimState):
        x0 = ref.initial_state(init.y, init.z)
        convention = {"s0": "mean", "z0": "agents" if isinstance(ref, BlendedModel) else "mean"}
    else:
        x0 = np.asarray(init, dtype=float)
        convention = {"s0": "given", "z0": "given"}
    if x0.shape != (ref.size,):
        raise ValueError(f"initial state has shape {x0.shape}, expected {(ref.size,)}")
    t0, t_end = float(t_span[0]), float(t_span[1])
    targets = sample_times(t0, t_end, cfg.sample_dt)
    system = _Plain(ref.rhs, ref.size, getattr(ref, "switch_values", None))
    xs = [x0.copy()] + integrate(system, t0, x0, targets[1:], cfg, guard=False)
    X = np.array(xs)
    m = ref.m
    if isinstance(ref, BlendedModel):
        z = {a: X[:, ref.offsets[a]:ref.offsets[a] + ref.agents[a].n] for a in ref.nodes}
        kind = "blended"
    else:
        z = X[:, m:]
        kind = "reduced"
    return ReferenceLog(np.array(targets), kind, list(ref.nodes), X[:, :m], z,
                        {"convention": convention, "x0": x0.tolist()})
