"""Agent models, the coupled network, and blended reference dynamics.

Each agent follows

    y' = F(t, y, z) + Gamma(t, w) u,   z' = Z(t, z, y),   w = W(y, z)

with ``u = Gamma^{-1} sum_j mu(nu_ij / psi_ij)`` over its neighbours. Since
``Gamma u`` is just the sum of edge terms, the terms cancel pairwise when
summed over a connected component, and the average output follows the
average of the ``F`` fields. That average is the blended dynamics.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from . import exprlang
from .errors import (
    DimensionMismatch, DisconnectedComponent, HeterogeneousInternalDynamics,
    RatioOutOfFunnel, SingularGain,
)
from .funnel import CLAMP, EdgeFunnel
from .graph import UndirectedNetwork, connected_components

log = logging.getLogger(__name__)

__all__ = [
    "AgentModel", "NetworkModel", "ComponentSystem", "BlendedModel", "ReducedBlendedModel",
    "invert_gain", "eval_rhs", "build_blended", "build_reduced_blended",
    "builtin_neuromorphic",
]

COND_LIMIT = 1e12


def invert_gain(gamma) -> tuple:
    """Return ``(Gamma^{-1}, ||Gamma^{-1}||_inf)``; raises :class:`SingularGain`."""
    g = np.atleast_2d(np.asarray(gamma, dtype=float))
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise DimensionMismatch(f"gain must be square, got shape {g.shape}")
    if g.shape == (1, 1):
        if g[0, 0] == 0.0 or not math.isfinite(g[0, 0]):
            raise SingularGain(f"scalar gain {g[0, 0]!r} is not invertible")
        inv = np.array([[1.0 / g[0, 0]]])
    else:
        if not np.all(np.isfinite(g)):
            raise SingularGain("gain has non-finite entries")
        cond = np.linalg.cond(g)
        if not cond <= COND_LIMIT:
            raise SingularGain(f"gain condition number {cond:.3g} exceeds {COND_LIMIT:g}")
        inv = np.linalg.inv(g)
    return inv, float(np.abs(inv).sum(axis=1).max())


def _parse_all(srcs) -> tuple:
    return tuple(exprlang.parse(s) if isinstance(s, str) else s for s in srcs)


@dataclass(frozen=True)
class AgentModel:
    """Vector fields of one agent as parsed expressions.

    ``F`` and ``Z`` see ``t, y1..ym, z1..zn``; ``W`` sees ``y1..ym, z1..zn``;
    ``Gamma`` (m x m, row-major) sees ``t, w1..wk``. ``F_tilde`` is an
    optional bounded part of ``F`` whose observed sup is reported.
    """

    m: int
    n: int
    F: tuple
    Z: tuple = ()
    W: tuple = ()
    Gamma: tuple = ()
    M_Gamma: Optional[float] = None
    F_tilde: tuple = ()
    _compiled: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "F", _parse_all(self.F))
        object.__setattr__(self, "Z", _parse_all(self.Z))
        object.__setattr__(self, "W", _parse_all(self.W))
        object.__setattr__(self, "F_tilde", _parse_all(self.F_tilde))
        gamma = self.Gamma
        if not gamma:
            gamma = tuple(tuple("1" if p == q else "0" for q in range(self.m)) for p in range(self.m))
        object.__setattr__(self, "Gamma", tuple(_parse_all(row) for row in gamma))
        if len(self.F) != self.m:
            raise DimensionMismatch(f"F has {len(self.F)} entries, m={self.m}")
        if len(self.Z) != self.n:
            raise DimensionMismatch(f"Z has {len(self.Z)} entries, n={self.n}")
        if self.F_tilde and len(self.F_tilde) != self.m:
            raise DimensionMismatch("F_tilde must have m entries")
        if len(self.Gamma) != self.m or any(len(r) != self.m for r in self.Gamma):
            raise DimensionMismatch(f"Gamma must be {self.m}x{self.m}")
        state = self.state_names
        for e in self.F + self.Z + self.F_tilde:
            extra = exprlang.free_vars(e) - set(("t",) + state)
            if extra:
                raise exprlang.UnboundVariable(", ".join(sorted(extra)))
        for e in self.W:
            extra = exprlang.free_vars(e) - set(state)
            if extra:
                raise exprlang.UnboundVariable(", ".join(sorted(extra)))
        for row in self.Gamma:
            for e in row:
                extra = exprlang.free_vars(e) - set(("t",) + self.w_names)
                if extra:
                    raise exprlang.UnboundVariable(", ".join(sorted(extra)))
        self._compile()

    @classmethod
    def from_strings(cls, F, Z=(), W=(), Gamma=(), M_Gamma=None, F_tilde=()) -> "AgentModel":
        F, Z = list(F), list(Z)
        m = len(F)
        return cls(m=m, n=len(Z), F=tuple(F), Z=tuple(Z), W=tuple(W),
                   Gamma=tuple(tuple(r) for r in Gamma), M_Gamma=M_Gamma, F_tilde=tuple(F_tilde))

    @property
    def y_names(self) -> tuple:
        return tuple(f"y{p + 1}" for p in range(self.m))

    @property
    def z_names(self) -> tuple:
        return tuple(f"z{k + 1}" for k in range(self.n))

    @property
    def w_names(self) -> tuple:
        return tuple(f"w{k + 1}" for k in range(len(self.W)))

    @property
    def state_names(self) -> tuple:
        return self.y_names + self.z_names

    def _compile(self):
        c = self._compiled
        state = self.state_names
        c["fields"] = exprlang.compile_many(self.F + self.Z, ("t",) + state)
        c["W"] = exprlang.compile_many(self.W, state) if self.W else None
        flat = [e for row in self.Gamma for e in row]
        const = all(not exprlang.free_vars(e) for e in flat)
        c["gamma_fn"] = exprlang.compile_many(flat, ("t",) + self.w_names)
        if const:
            g = np.array(c["gamma_fn"](0.0, *([0.0] * len(self.W)))).reshape(self.m, self.m)
            inv, norm = invert_gain(g)
            c["const_gain"] = (g, inv, norm)
            c["gain_lists"] = (g.tolist(), inv.tolist())
        else:
            c["const_gain"] = None
        c["F_tilde"] = (exprlang.compile_many(self.F_tilde, ("t",) + state)
                        if self.F_tilde else None)
        sw = []
        for e in self.F + self.Z:
            sw += [g for g in exprlang.switching_functions(e) if g not in sw]
        c["switches"] = exprlang.compile_many(sw, ("t",) + state) if sw else None

    @property
    def fields(self) -> Callable[..., tuple]:
        """Compiled ``(t, y1.., z1..) -> (F1.., Z1..)``."""
        return self._compiled["fields"]

    @property
    def switches(self) -> Optional[Callable[..., tuple]]:
        """Compiled ``(t, y1.., z1..) -> (g1, ..)`` whose sign changes mark kinks of F, Z."""
        return self._compiled["switches"]

    @property
    def constant_gain(self) -> bool:
        return self._compiled["const_gain"] is not None

    def eval_F(self, t, y, z) -> np.ndarray:
        return np.array(self.fields(t, *y, *z)[: self.m])

    def eval_Z(self, t, z, y) -> np.ndarray:
        return np.array(self.fields(t, *y, *z)[self.m:])

    def eval_W(self, y, z) -> np.ndarray:
        if self._compiled["W"] is None:
            return np.zeros(0)
        return np.array(self._compiled["W"](*y, *z))

    def eval_F_tilde(self, t, y, z):
        fn = self._compiled["F_tilde"]
        return None if fn is None else np.array(fn(t, *y, *z))

    def gain(self, t, y, z) -> np.ndarray:
        const = self._compiled["const_gain"]
        if const is not None:
            return const[0]
        w = self.eval_W(y, z)
        return np.array(self._compiled["gamma_fn"](t, *w)).reshape(self.m, self.m)

    def gain_and_inverse(self, t, y, z) -> tuple:
        const = self._compiled["const_gain"]
        if const is not None:
            return const
        g = self.gain(t, y, z)
        inv, norm = invert_gain(g)
        return g, inv, norm

    def structural_key(self) -> tuple:
        """Z fields after parsing; equal keys mean identical internal dynamics."""
        return (self.n, self.Z)

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "F": [exprlang.pretty(e) for e in self.F],
            "Z": [exprlang.pretty(e) for e in self.Z],
            "W": [exprlang.pretty(e) for e in self.W],
            "Gamma": [[exprlang.pretty(e) for e in row] for row in self.Gamma],
        }
        if self.M_Gamma is not None:
            d["M_Gamma"] = self.M_Gamma
        if self.F_tilde:
            d["F_tilde"] = [exprlang.pretty(e) for e in self.F_tilde]
        return d


@dataclass(frozen=True)
class NetworkModel:
    """Active agents, their undirected graph, and one funnel per edge."""

    agents: Mapping[int, AgentModel]
    graph: UndirectedNetwork

    def __post_init__(self):
        agents = {int(k): v for k, v in sorted(self.agents.items())}
        object.__setattr__(self, "agents", agents)
        if set(agents) != set(self.graph.nodes):
            raise ValueError(f"graph nodes {sorted(self.graph.nodes)} != agents {sorted(agents)}")
        ms = {a.m for a in agents.values()}
        if len(ms) > 1:
            raise DimensionMismatch(f"agents disagree on output dimension: {sorted(ms)}")
        for e in self.graph.edges:
            f = self.graph.attrs.get(e)
            if not isinstance(f, EdgeFunnel):
                raise ValueError(f"edge {e} has no funnel")
            if ms and f.m != next(iter(ms)):
                raise DimensionMismatch(f"funnel on edge {e} has {f.m} components")

    @property
    def m(self) -> int:
        return next(iter(self.agents.values())).m if self.agents else 0

    def funnel(self, i: int, j: int) -> EdgeFunnel:
        return self.graph.attr(i, j)

    def components(self) -> list:
        return connected_components(self.graph)

    def with_graph(self, graph: UndirectedNetwork, agents=None) -> "NetworkModel":
        return NetworkModel(dict(self.agents if agents is None else agents), graph)


# ---------------------------------------------------------------------------
# compiled closed loop of one component

class ComponentSystem:
    """Closed-loop right-hand side for a set of agents, state packed in one vector.

    Layout: for each agent in ascending id order, ``y`` (m entries) then
    ``z`` (n entries). With ``clamp=True`` ratios at or beyond the funnel
    boundary are clamped to ``CLAMP`` so trial stages stay evaluable; the
    largest raw ratio is returned so the integrator can reject the step.
    """

    def __init__(self, model: NetworkModel, nodes: Iterable[int] | None = None, clamp: bool = True):
        nodes = sorted(model.agents if nodes is None else nodes)
        self.model = model
        self.nodes = nodes
        self.m = model.m
        self.clamp = clamp
        self.offsets = {}
        off = 0
        for a in nodes:
            self.offsets[a] = off
            off += self.m + model.agents[a].n
        self.size = off
        index = {a: k for k, a in enumerate(nodes)}
        node_set = set(nodes)
        self.edges = sorted(e for e in model.graph.edges if e[0] in node_set and e[1] in node_set)
        self._edge_data = []
        for i, j in self.edges:
            f = model.funnel(i, j)
            self._edge_data.append((
                index[i], index[j], self.offsets[i], self.offsets[j],
                f.psi, f.mu, tuple(mu.odd for mu in f.mu), (i, j),
            ))
        self._agent_data = []
        for a in nodes:
            ag = model.agents[a]
            const = ag._compiled["const_gain"]
            self._agent_data.append((
                ag, self.offsets[a], ag.n, ag.fields,
                const and const[2] and ag._compiled["gain_lists"],
            ))

    def switch_values(self, t: float, x: np.ndarray) -> Optional[np.ndarray]:
        xs = x.tolist()
        out = []
        for ag, o, n, _, _ in self._agent_data:
            if ag.switches is not None:
                out.extend(ag.switches(t, *xs[o:o + self.m + n]))
        return np.array(out) if out else None

    def pack(self, y: Mapping[int, Sequence[float]], z: Mapping[int, Sequence[float]]) -> np.ndarray:
        x = np.empty(self.size)
        for a in self.nodes:
            o = self.offsets[a]
            x[o:o + self.m] = y[a]
            x[o + self.m:o + self.m + self.model.agents[a].n] = z[a]
        return x

    def unpack(self, x: np.ndarray) -> tuple:
        y, z = {}, {}
        for a in self.nodes:
            o = self.offsets[a]
            y[a] = x[o:o + self.m].copy()
            z[a] = x[o + self.m:o + self.m + self.model.agents[a].n].copy()
        return y, z

    def _coupling(self, t, xs):
        """Sum of edge terms per agent plus the largest raw |ratio| and its location."""
        m = self.m
        acc = [[0.0] * m for _ in self.nodes]
        maxr = 0.0
        where = None
        clamp = self.clamp
        for ia, ib, oa, ob, psis, mus, odds, edge in self._edge_data:
            acc_a = acc[ia]
            acc_b = acc[ib]
            for p in range(m):
                s = (xs[ob + p] - xs[oa + p]) / psis[p].value(t)
                r = s if s >= 0.0 else -s
                if r > maxr or where is None:
                    if r > maxr:
                        maxr = r
                    where = (edge, p)
                if r >= CLAMP:
                    if not clamp:
                        raise RatioOutOfFunnel(s, edge, p)
                    s = CLAMP if s > 0 else -CLAMP
                mu = mus[p]
                va = mu.raw(s)
                acc_a[p] += va
                acc_b[p] += -va if odds[p] else mu.raw(-s)
        return acc, maxr, where

    def rhs(self, t: float, x: np.ndarray) -> tuple:
        """``(dx, max_ratio, (edge, component))`` at ``(t, x)``."""
        xs = x.tolist()
        m = self.m
        acc, maxr, where = self._coupling(t, xs)
        out = [0.0] * self.size
        for k, (ag, o, n, fields, gl) in enumerate(self._agent_data):
            vals = fields(t, *xs[o:o + m + n])
            c = acc[k]
            if gl:
                g, inv = gl
                u = [sum(inv[p][q] * c[q] for q in range(m)) for p in range(m)]
                gu = [sum(g[p][q] * u[q] for q in range(m)) for p in range(m)]
            else:
                y = xs[o:o + m]
                z = xs[o + m:o + m + n]
                g, inv, _ = ag.gain_and_inverse(t, y, z)
                gu = (g @ (inv @ np.array(c))).tolist()
            for p in range(m):
                out[o + p] = vals[p] + gu[p]
            out[o + m:o + m + n] = vals[m:]
        return np.array(out), maxr, where

    def max_ratio(self, t: float, x: np.ndarray) -> tuple:
        """Largest raw ``|nu / psi|`` over edges and components, with its location."""
        xs = x.tolist()
        maxr, where = 0.0, None
        for ia, ib, oa, ob, psis, mus, odds, edge in self._edge_data:
            for p in range(self.m):
                r = abs(xs[ob + p] - xs[oa + p]) / psis[p].value(t)
                if r > maxr or where is None:
                    maxr = max(maxr, r)
                    where = (edge, p)
        return maxr, where

    def jacobian(self, t: float, x: np.ndarray) -> np.ndarray:
        """Analytic coupling part plus per-agent finite differences of ``F``/``Z``.

        ``Gamma Gamma^{-1}`` is the identity, so the input enters the output
        derivative as the plain sum of edge terms.
        """
        xs = x.tolist()
        J = np.zeros((self.size, self.size))
        m = self.m
        for ia, ib, oa, ob, psis, mus, odds, edge in self._edge_data:
            for p in range(m):
                psi = psis[p].value(t)
                s = (xs[ob + p] - xs[oa + p]) / psi
                if s >= CLAMP or s <= -CLAMP:
                    continue  # clamped: locally constant
                ka = mus[p].slope(s) / psi
                kb = ka if odds[p] else mus[p].slope(-s) / psi
                a, b = oa + p, ob + p
                J[a, b] += ka
                J[a, a] -= ka
                J[b, a] += kb
                J[b, b] -= kb
        for ag, o, n, fields, gl in self._agent_data:
            k = m + n
            loc = xs[o:o + k]
            f0 = fields(t, *loc)
            for c in range(k):
                h = 1e-8 * max(1.0, abs(loc[c]))
                pert = list(loc)
                pert[c] += h
                f1 = fields(t, *pert)
                for r in range(k):
                    J[o + r, o + c] += (f1[r] - f0[r]) / h
        return J

    def observe(self, t: float, x: np.ndarray) -> dict:
        """Coupling inputs, signed ratios and psi values at an accepted state."""
        xs = x.tolist()
        m = self.m
        acc = [[0.0] * m for _ in self.nodes]
        ratios, psis_out = {}, {}
        for ia, ib, oa, ob, psis, mus, odds, edge in self._edge_data:
            rs, ps = [], []
            for p in range(m):
                psi = psis[p].value(t)
                s = (xs[ob + p] - xs[oa + p]) / psi
                if not abs(s) < 1.0:
                    raise RatioOutOfFunnel(s, edge, p)
                va = mus[p].raw(s)
                acc[ia][p] += va
                acc[ib][p] += -va if odds[p] else mus[p].raw(-s)
                rs.append(s)
                ps.append(psi)
            ratios[edge] = rs
            psis_out[edge] = ps
        u, ginv_norm = {}, {}
        for k, (ag, o, n, fields, gl) in enumerate(self._agent_data):
            y = xs[o:o + m]
            z = xs[o + m:o + m + n]
            _, inv, norm = ag.gain_and_inverse(t, y, z)
            u[self.nodes[k]] = inv @ np.array(acc[k])
            ginv_norm[self.nodes[k]] = norm
            if ag.M_Gamma is not None and norm > ag.M_Gamma:
                log.warning("agent %s: ||Gamma^-1|| = %.6g exceeds declared M_Gamma = %.6g at t=%.6g",
                            self.nodes[k], norm, ag.M_Gamma, t)
        return {"u": u, "ratio": ratios, "psi": psis_out, "ginv_norm": ginv_norm}


def eval_rhs(model: NetworkModel, t: float, y: Mapping[int, Sequence[float]],
             z: Mapping[int, Sequence[float]]) -> tuple:
    """Closed-loop derivative ``({i: dy_i}, {i: dz_i})`` for all active agents.

    Raises :class:`RatioOutOfFunnel` if any edge ratio is not strictly
    inside the funnel.
    """
    sys_ = ComponentSystem(model, clamp=False)
    for i, j in sys_.edges:
        f = model.funnel(i, j)
        for p in range(sys_.m):
            s = (y[j][p] - y[i][p]) / f.psi[p].value(t)
            if not abs(s) < 1.0:
                raise RatioOutOfFunnel(s, (i, j), p)
    dx, _, _ = sys_.rhs(t, sys_.pack(y, z))
    return sys_.unpack(dx)


# ---------------------------------------------------------------------------
# blended dynamics

InputFn = Callable[[float], np.ndarray]


class BlendedModel:
    """Average of the output fields with one internal state copy per agent.

    State layout: ``s`` (m), then ``z_hat_i`` for each agent in ascending id
    order. ``inputs(t)`` returns an ``(N, m)`` array of output errors
    ``e_i``; when absent the model is the unperturbed blended dynamics.
    """

    def __init__(self, agents: Mapping[int, AgentModel], inputs: Optional[InputFn] = None):
        self.agents = {k: agents[k] for k in sorted(agents)}
        self.nodes = list(self.agents)
        self.N = len(self.nodes)
        self.m = next(iter(self.agents.values())).m
        self.inputs = inputs
        self.offsets = {}
        off = self.m
        for a in self.nodes:
            self.offsets[a] = off
            off += self.agents[a].n
        self.size = off

    def initial_state(self, y0: Mapping[int, Sequence[float]], z0: Mapping[int, Sequence[float]]) -> np.ndarray:
        """``s(t0)`` = mean output, ``z_hat_i(t0) = z_i(t0)``."""
        x = np.empty(self.size)
        x[:self.m] = np.mean([np.asarray(y0[a], dtype=float) for a in self.nodes], axis=0)
        for a in self.nodes:
            o = self.offsets[a]
            x[o:o + self.agents[a].n] = z0[a]
        return x

    def rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        xs = x.tolist()
        m = self.m
        s = xs[:m]
        e = None if self.inputs is None else np.asarray(self.inputs(t), dtype=float).tolist()
        out = [0.0] * self.size
        acc = [0.0] * m
        for k, a in enumerate(self.nodes):
            ag = self.agents[a]
            o = self.offsets[a]
            ys = s if e is None else [s[p] + e[k][p] for p in range(m)]
            vals = ag.fields(t, *ys, *xs[o:o + ag.n])
            for p in range(m):
                acc[p] += vals[p]
            out[o:o + ag.n] = vals[m:]
        for p in range(m):
            out[p] = acc[p] / self.N
        return np.array(out)

    def switch_values(self, t: float, x: np.ndarray) -> Optional[np.ndarray]:
        xs = x.tolist()
        s = xs[:self.m]
        e = None if self.inputs is None else np.asarray(self.inputs(t), dtype=float).tolist()
        out = []
        for k, a in enumerate(self.nodes):
            ag = self.agents[a]
            if ag.switches is not None:
                ys = s if e is None else [s[p] + e[k][p] for p in range(self.m)]
                o = self.offsets[a]
                out.extend(ag.switches(t, *ys, *xs[o:o + ag.n]))
        return np.array(out) if out else None

    def split(self, x: np.ndarray) -> tuple:
        """``(s, {i: z_hat_i})``."""
        return x[:self.m].copy(), {a: x[self.offsets[a]:self.offsets[a] + self.agents[a].n].copy()
                                   for a in self.nodes}


class ReducedBlendedModel:
    """Blended dynamics with one shared internal state (all ``Z_i`` identical).

    State layout: ``s`` (m) then ``z`` (n). Optional inputs: ``e0(t)`` (m),
    ``e(t)`` (N x m) and ``d(t)`` (N x n).
    """

    def __init__(self, agents: Mapping[int, AgentModel], e0: Optional[InputFn] = None,
                 e: Optional[InputFn] = None, d: Optional[InputFn] = None):
        self.agents = {k: agents[k] for k in sorted(agents)}
        self.nodes = list(self.agents)
        self.N = len(self.nodes)
        first = next(iter(self.agents.values()))
        keys = {ag.structural_key() for ag in self.agents.values()}
        if len(keys) != 1:
            raise HeterogeneousInternalDynamics(
                f"internal dynamics differ across agents {self.nodes}")
        self.m = first.m
        self.n = first.n
        self.size = self.m + self.n
        self.e0, self.e, self.d = e0, e, d
        self._z_fields = exprlang.compile_many(first.Z, ("t",) + first.state_names) if first.n else None

    def initial_state(self, y0: Mapping[int, Sequence[float]], z0: Mapping[int, Sequence[float]],
                      z_init: str | Sequence[float] = "mean") -> np.ndarray:
        """``s(t0)`` = mean output; ``z(t0)`` = mean internal state unless given."""
        x = np.empty(self.size)
        x[:self.m] = np.mean([np.asarray(y0[a], dtype=float) for a in self.nodes], axis=0)
        if isinstance(z_init, str):
            if z_init != "mean":
                raise ValueError(f"unknown z_init {z_init!r}")
            x[self.m:] = np.mean([np.asarray(z0[a], dtype=float) for a in self.nodes], axis=0) \
                if self.n else []
        else:
            x[self.m:] = z_init
        return x

    def rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        xs = x.tolist()
        m, n = self.m, self.n
        s, z = xs[:m], xs[m:]
        e = None if self.e is None else np.asarray(self.e(t), dtype=float).tolist()
        d = None if self.d is None else np.asarray(self.d(t), dtype=float).tolist()
        acc = [0.0] * m
        for k, a in enumerate(self.nodes):
            ys = s if e is None else [s[p] + e[k][p] for p in range(m)]
            zs = z if d is None else [z[q] + d[k][q] for q in range(n)]
            vals = self.agents[a].fields(t, *ys, *zs)
            for p in range(m):
                acc[p] += vals[p]
        out = [v / self.N for v in acc]
        if n:
            if self.e0 is None:
                ys = s
            else:
                e0 = np.asarray(self.e0(t), dtype=float).tolist()
                ys = [s[p] + e0[p] for p in range(m)]
            out.extend(self._z_fields(t, *ys, *z))
        return np.array(out)

    def switch_values(self, t: float, x: np.ndarray) -> Optional[np.ndarray]:
        xs = x.tolist()
        m, n = self.m, self.n
        s, z = xs[:m], xs[m:]
        e = None if self.e is None else np.asarray(self.e(t), dtype=float).tolist()
        d = None if self.d is None else np.asarray(self.d(t), dtype=float).tolist()
        out = []
        for k, a in enumerate(self.nodes):
            sw = self.agents[a].switches
            if sw is not None:
                ys = s if e is None else [s[p] + e[k][p] for p in range(m)]
                zs = z if d is None else [z[q] + d[k][q] for q in range(n)]
                out.extend(sw(t, *ys, *zs))
        return np.array(out) if out else None

    def split(self, x: np.ndarray) -> tuple:
        return x[:self.m].copy(), x[self.m:].copy()


def _check_component(model: NetworkModel, component) -> list:
    nodes = sorted(model.agents if component is None else component)
    missing = set(nodes) - set(model.agents)
    if missing:
        raise DisconnectedComponent(f"nodes {sorted(missing)} are not in the network")
    parts = connected_components(model.graph.subgraph(nodes))
    if len(parts) != 1:
        raise DisconnectedComponent(f"nodes {nodes} form {len(parts)} components")
    return nodes


def build_blended(model: NetworkModel, component: Iterable[int] | None = None,
                  inputs: Optional[InputFn] = None) -> BlendedModel:
    nodes = _check_component(model, component)
    return BlendedModel({a: model.agents[a] for a in nodes}, inputs)


def build_reduced_blended(model: NetworkModel, component: Iterable[int] | None = None,
                          e0: Optional[InputFn] = None, e: Optional[InputFn] = None,
                          d: Optional[InputFn] = None) -> ReducedBlendedModel:
    nodes = _check_component(model, component)
    return ReducedBlendedModel({a: model.agents[a] for a in nodes}, e0, e, d)


def builtin_neuromorphic():
    """The four-agent neuromorphic demo: ``(model, schedule, init, t_span)``."""
    from .scenario import load_demo

    sc = load_demo("neuromorphic")
    return sc.model, sc.schedule, sc.init, sc.t_span
