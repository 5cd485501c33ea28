"""Performance functions, coupling functions and per-edge funnels.

An :class:`EdgeFunnel` is stored once per undirected edge and shared by both
directions, so ``psi_ij == psi_ji`` holds by construction. With an odd
coupling function this also gives ``mu_ij(-s) == -mu_ji(s)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, EvaluatedBeforeActivation, RatioOutOfFunnel

__all__ = [
    "ExponentialPerformance", "ConstantPerformance", "TabulatedPerformance",
    "CouplingFunction", "TAN", "RATIONAL", "EdgeFunnel",
    "eval_performance", "eval_coupling", "compute_coupling_input",
    "check_symmetry", "handshake", "CLAMP",
]

# trial-stage clamp for ratios that reach the funnel boundary
CLAMP = 1.0 - 1e-12


class _Performance:
    t_k: float = 0.0

    def _check(self, t):
        if t < self.t_k:
            raise EvaluatedBeforeActivation(f"psi evaluated at t={t!r} < t_k={self.t_k!r}")


@dataclass(frozen=True)
class ExponentialPerformance(_Performance):
    """``psi(t) = (B - eta) exp(-lam (t - t_k)) + eta`` for ``t >= t_k``."""

    B: float
    eta: float
    lam: float
    t_k: float = 0.0

    def __post_init__(self):
        if not (self.B > 0 and self.eta > 0 and self.lam > 0):
            raise ValueError("B, eta and lambda must be positive")
        if self.B < self.eta:
            raise ValueError(f"B={self.B!r} must not be below eta={self.eta!r}")

    def value(self, t: float) -> float:
        if t < self.t_k:
            self._check(t)
        return (self.B - self.eta) * math.exp(-self.lam * (t - self.t_k)) + self.eta

    def derivative(self, t: float) -> float:
        self._check(t)
        return -self.lam * (self.B - self.eta) * math.exp(-self.lam * (t - self.t_k))

    def to_dict(self) -> dict:
        return {"kind": "exponential", "B": self.B, "eta": self.eta,
                "lambda": self.lam, "t_k": self.t_k}


@dataclass(frozen=True)
class ConstantPerformance(_Performance):
    level: float
    t_k: float = 0.0

    def __post_init__(self):
        if not self.level > 0:
            raise ValueError("constant performance level must be positive")

    def value(self, t: float) -> float:
        if t < self.t_k:
            self._check(t)
        return self.level

    def derivative(self, t: float) -> float:
        self._check(t)
        return 0.0

    def to_dict(self) -> dict:
        return {"kind": "constant", "value": self.level, "t_k": self.t_k}


class TabulatedPerformance(_Performance):
    """Shape-preserving C^1 interpolation of positive samples, held constant past the end."""

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        from scipy.interpolate import PchipInterpolator

        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or len(times) < 2:
            raise ValueError("need matching 1-D times/values with at least two samples")
        if np.any(np.diff(times) <= 0) or np.any(values <= 0):
            raise ValueError("times must increase and values must be positive")
        self.times = times
        self.values = values
        self.t_k = float(times[0])
        self._interp = PchipInterpolator(times, values, extrapolate=False)
        self._deriv = self._interp.derivative()

    def value(self, t: float) -> float:
        self._check(t)
        if t >= self.times[-1]:
            return float(self.values[-1])
        return float(self._interp(t))

    def derivative(self, t: float) -> float:
        self._check(t)
        if t >= self.times[-1]:
            return 0.0
        return float(self._deriv(t))

    def to_dict(self) -> dict:
        return {"kind": "tabulated", "times": self.times.tolist(), "values": self.values.tolist()}

    def __eq__(self, other):
        return (isinstance(other, TabulatedPerformance)
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.times.tobytes(), self.values.tobytes()))


def eval_performance(psi, t: float) -> float:
    v = psi.value(t)
    if not v > 0:
        raise ValueError(f"performance function not positive at t={t!r}")
    return v


# ---------------------------------------------------------------------------
# coupling functions

def _tan_mu(s):
    return math.tan(0.5 * math.pi * s)


def _rational_mu(s):
    return s / (1.0 - abs(s))


_BASES = {"tan": _tan_mu, "rational": _rational_mu}


@dataclass(frozen=True)
class CouplingFunction:
    """Map from ``(-1, 1)`` onto the reals diverging at the endpoints.

    Built-in kinds are ``tan`` (``tan(pi s / 2)``) and ``rational``
    (``s / (1 - |s|)``), optionally multiplied by a positive ``scale``.
    ``kind="custom"`` wraps an arbitrary callable and makes no oddness promise.
    """

    kind: str = "tan"
    scale: float = 1.0
    func: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "custom":
            if self.func is None:
                raise ValueError("custom coupling function needs a callable")
        elif self.kind not in _BASES:
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if not self.scale > 0:
            raise ValueError("coupling scale must be positive")

    @property
    def odd(self) -> bool:
        return self.kind != "custom"

    def raw(self, s: float) -> float:
        """Evaluate without the funnel-domain check."""
        base = self.func if self.kind == "custom" else _BASES[self.kind]
        v = base(s)
        return v if self.scale == 1.0 else self.scale * v

    def slope(self, s: float) -> float:
        """``d mu / ds`` (finite difference for custom kinds)."""
        if self.kind == "tan":
            v = math.tan(0.5 * math.pi * s)
            d = 0.5 * math.pi * (1.0 + v * v)
        elif self.kind == "rational":
            r = 1.0 - abs(s)
            d = 1.0 / (r * r)
        else:
            h = 1e-7 * max(1.0, abs(s))
            return (self.func(s + h) - self.func(s - h)) / (2 * h) * self.scale
        return d if self.scale == 1.0 else self.scale * d

    def __call__(self, s: float) -> float:
        return eval_coupling(self, s)

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise ValueError("custom coupling functions are not serializable")
        if self.scale == 1.0:
            return {"kind": self.kind}
        return {"kind": "scaled", "base": self.kind, "scale": self.scale}


TAN = CouplingFunction("tan")
RATIONAL = CouplingFunction("rational")


def eval_coupling(mu: CouplingFunction, s: float) -> float:
    if not abs(s) < 1.0:
        raise RatioOutOfFunnel(s)
    return mu.raw(s)


# ---------------------------------------------------------------------------
# edge funnels

@dataclass(frozen=True)
class EdgeFunnel:
    """Per output component ``(psi, mu)`` pairs shared by both edge directions."""

    psi: tuple
    mu: tuple

    def __post_init__(self):
        object.__setattr__(self, "psi", tuple(self.psi))
        object.__setattr__(self, "mu", tuple(self.mu))
        if len(self.psi) != len(self.mu) or not self.psi:
            raise DimensionMismatch("psi and mu need one entry per output component")

    @property
    def m(self) -> int:
        return len(self.psi)

    @property
    def t_k(self) -> float:
        return max(p.t_k for p in self.psi)

    @classmethod
    def uniform(cls, psi, mu: CouplingFunction = TAN, m: int = 1) -> "EdgeFunnel":
        return cls((psi,) * m, (mu,) * m)

    def psi_values(self, t: float) -> list:
        return [p.value(t) for p in self.psi]

    def to_dict(self) -> dict:
        return {"components": [{**p.to_dict(), "mu": mu.to_dict()}
                               for p, mu in zip(self.psi, self.mu)]}


def edge_term(funnel: EdgeFunnel, t: float, nu: Sequence[float]) -> np.ndarray:
    """``u_ij``: component-wise ``mu(nu / psi)`` with ``nu = y_j - y_i``."""
    if len(nu) != funnel.m:
        raise DimensionMismatch(f"nu has {len(nu)} components, funnel has {funnel.m}")
    out = np.empty(funnel.m)
    for p in range(funnel.m):
        s = nu[p] / funnel.psi[p].value(t)
        if not abs(s) < 1.0:
            raise RatioOutOfFunnel(s, component=p)
        out[p] = funnel.mu[p].raw(s)
    return out


def compute_coupling_input(i: int, t: float, y: Mapping[int, Sequence[float]],
                           funnels: Mapping[int, EdgeFunnel], gamma_inv) -> tuple:
    """Coupling input of agent ``i``.

    ``y`` maps agent ids to outputs (agent ``i`` and its neighbours);
    ``funnels`` maps each neighbour ``j`` to the shared funnel of edge
    ``{i, j}``. Returns ``(u_i, {j: u_ij})``.
    """
    yi = np.asarray(y[i], dtype=float)
    gamma_inv = np.atleast_2d(np.asarray(gamma_inv, dtype=float))
    m = yi.shape[0]
    if gamma_inv.shape != (m, m):
        raise DimensionMismatch(f"gamma inverse has shape {gamma_inv.shape}, expected {(m, m)}")
    total = np.zeros(m)
    terms = {}
    for j in sorted(funnels):
        yj = np.asarray(y[j], dtype=float)
        if yj.shape != yi.shape:
            raise DimensionMismatch(f"output of agent {j} has shape {yj.shape}")
        try:
            term = edge_term(funnels[j], t, yj - yi)
        except RatioOutOfFunnel as exc:
            raise RatioOutOfFunnel(exc.ratio, (i, j), exc.component) from None
        terms[j] = term
        total += term
    return gamma_inv @ total, terms


def check_symmetry(e: EdgeFunnel, grid_s: Sequence[float] = (-0.9, -0.5, 0.0, 0.5, 0.9)) -> bool:
    """Check ``mu_ij(-s) == -mu_ji(s)`` on a grid of ratios.

    Both directions read the same stored functions, so ``psi_ij == psi_ji``
    holds structurally and the ``mu`` identity reduces to oddness. Built-in
    kinds always pass; the check exists for custom callables.
    """
    for mu in e.mu:
        for s in grid_s:
            if abs(s) >= 1.0:
                continue
            a, b = mu.raw(-s), -mu.raw(s)
            if not math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12):
                return False
    return True


def handshake(y_i: Sequence[float], y_j: Sequence[float], t_k: float, eta: float,
              lam: float, margin: float = 0.1, mu: CouplingFunction = TAN) -> EdgeFunnel:
    """Negotiate funnels for a new edge at time ``t_k``.

    ``B = max(eta, (1 + margin) |y_i - y_j|) + eta`` per component, which
    keeps ``psi(t_k) = B`` strictly above the current output difference.
    """
    if not margin > 0 or not eta > 0:
        raise ValueError("margin and eta must be positive")
    y_i = np.atleast_1d(np.asarray(y_i, dtype=float))
    y_j = np.atleast_1d(np.asarray(y_j, dtype=float))
    if y_i.shape != y_j.shape:
        raise DimensionMismatch("outputs differ in dimension")
    psis = []
    for a, b in zip(y_i, y_j):
        B = max(eta, (1.0 + margin) * abs(float(a) - float(b))) + eta
        psis.append(ExponentialPerformance(B, eta, lam, t_k))
    return EdgeFunnel(tuple(psis), (mu,) * len(psis))
