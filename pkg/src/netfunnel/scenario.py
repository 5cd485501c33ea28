"""Scenario files: parsing, validation, canonical form and built-in demos.

A scenario is a JSON or TOML document with the sections ``agents``,
``graph``, ``funnels``, ``events``, ``integrator`` and ``outputs`` plus an
optional ``coupling`` default. :func:`resolve` fills in defaults and
normalises it; the SHA-256 of the canonical JSON of the resolved form is the
configuration hash.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import exprlang
from .dynamics import AgentModel, NetworkModel
from .errors import NetFunnelError, ParseError, ScenarioError, UnboundVariable
from .events import EventSchedule, Handshake, Join, JoinEdge, Leave
from .funnel import (
    ConstantPerformance, CouplingFunction, EdgeFunnel, ExponentialPerformance,
    TabulatedPerformance,
)
from .graph import UndirectedNetwork
from .sim import IntegratorConfig, SimState

__all__ = ["Scenario", "load", "loads", "load_demo", "resolve", "config_hash", "dumps", "DEMOS"]

SECTIONS = ("name", "agents", "graph", "funnels", "coupling", "events", "integrator", "outputs")
INTEGRATOR_KEYS = ("method", "rtol", "atol", "dt_min", "dt_max", "boundary_guard",
                   "blowup_norm", "dt_init", "t_start", "t_end")
OUTPUT_KEYS = ("sample_dt", "csv", "summary", "manifest")


class _Ctx:
    """Carries the source text so errors can point at a line."""

    def __init__(self, path: str, text: str | None):
        self.path = path
        self.text = text

    def fail(self, keypath: str, message: str):
        raise ScenarioError(self.path, f"{keypath}: {message}", self._line(keypath), self.text)

    def _line(self, keypath: str):
        """Best-effort source line for a dotted key path like ``events[2].t``."""
        if not self.text:
            return None
        lines = self.text.splitlines()
        tokens = re.findall(r"\[(\d+)\]|([^.\[\]]+)", keypath)
        pos, found = 0, None
        for n, (_, name) in enumerate(tokens):
            if not name:
                continue
            k = int(tokens[n + 1][0]) if n + 1 < len(tokens) and tokens[n + 1][0] else 0
            header = re.compile(r"^\s*\[+\s*([^\]]*\.)?" + re.escape(name) + r"(\.[^\]]*)?\s*\]")
            assign = re.compile(r'(^|[\s{,"\[])"?' + re.escape(name) + r'"?\s*[=:]')
            hits = [no for no in range(pos, len(lines)) if header.search(lines[no])]
            if len(hits) > k:
                hit = hits[k]
            else:
                hits = [no for no in range(pos, len(lines)) if assign.search(lines[no])]
                hit = hits[0] if hits else None
            if hit is None:
                break
            found = pos = hit
        return None if found is None else found + 1


def _num(ctx, v, where, positive=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        ctx.fail(where, f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        ctx.fail(where, "must be finite")
    if positive and not v > 0:
        ctx.fail(where, "must be positive")
    return v


def _expr_list(ctx, v, where):
    if not isinstance(v, list):
        ctx.fail(where, "expected a list of expressions")
    out = []
    for k, e in enumerate(v):
        if isinstance(e, (int, float)) and not isinstance(e, bool):
            e = repr(float(e))
        if not isinstance(e, str):
            ctx.fail(f"{where}[{k}]", f"expected an expression string, got {e!r}")
        try:
            out.append(exprlang.pretty(exprlang.parse(e)))
        except ParseError as exc:
            ctx.fail(f"{where}[{k}]", f"parse error at byte {exc.position}: {exc.message}")
    return out


def _check_keys(ctx, d, allowed, where):
    if not isinstance(d, Mapping):
        ctx.fail(where, "expected a table")
    extra = sorted(set(d) - set(allowed))
    if extra:
        ctx.fail(f"{where}.{extra[0]}" if where else extra[0], "unknown key")


def _node(ctx, v, where):
    if isinstance(v, str) and v.isdigit():
        v = int(v)
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        ctx.fail(where, f"node ids are non-negative integers, got {v!r}")
    return v


def _coupling(ctx, v, where, default):
    if v is None:
        return dict(default)
    if isinstance(v, str):
        v = {"kind": v}
    _check_keys(ctx, v, ("kind", "base", "scale"), where)
    kind = v.get("kind", "tan")
    if kind == "scaled":
        base = v.get("base", "tan")
        scale = _num(ctx, v.get("scale", 1.0), f"{where}.scale", positive=True)
    else:
        base = kind
        scale = _num(ctx, v.get("scale", 1.0), f"{where}.scale", positive=True)
    if base not in ("tan", "rational"):
        ctx.fail(f"{where}.kind", f"unknown coupling kind {base!r}")
    return {"kind": base, "scale": scale}


def _performance(ctx, v, where, t_default):
    kind = v.get("kind", "exponential")
    if kind == "exponential":
        _check_keys(ctx, v, ("kind", "B", "eta", "lambda", "t_k", "mu"), where)
        for k in ("B", "eta", "lambda"):
            if k not in v:
                ctx.fail(f"{where}.{k}", "missing")
        out = {"kind": kind, "B": _num(ctx, v["B"], f"{where}.B", True),
               "eta": _num(ctx, v["eta"], f"{where}.eta", True),
               "lambda": _num(ctx, v["lambda"], f"{where}.lambda", True),
               "t_k": _num(ctx, v.get("t_k", t_default), f"{where}.t_k")}
        if out["B"] < out["eta"]:
            ctx.fail(f"{where}.B", "must not be below eta")
        return out
    if kind == "constant":
        _check_keys(ctx, v, ("kind", "value", "t_k", "mu"), where)
        return {"kind": kind, "value": _num(ctx, v.get("value"), f"{where}.value", True),
                "t_k": _num(ctx, v.get("t_k", t_default), f"{where}.t_k")}
    if kind == "tabulated":
        _check_keys(ctx, v, ("kind", "times", "values", "mu"), where)
        ts = [_num(ctx, x, f"{where}.times") for x in v.get("times", [])]
        vs = [_num(ctx, x, f"{where}.values", True) for x in v.get("values", [])]
        if len(ts) < 2 or len(ts) != len(vs) or any(b <= a for a, b in zip(ts, ts[1:])):
            ctx.fail(f"{where}.times", "need at least two increasing times matching values")
        return {"kind": kind, "times": ts, "values": vs}
    ctx.fail(f"{where}.kind", f"unknown performance kind {kind!r}")


def _funnel_spec(ctx, v, where, m, coupling_default, t_default):
    """Per-component list of ``{performance..., mu}`` from a shorthand or full spec."""
    if not isinstance(v, Mapping):
        ctx.fail(where, "expected a funnel table")
    if "components" in v:
        comps = v["components"]
        if not isinstance(comps, list) or len(comps) != m:
            ctx.fail(f"{where}.components", f"expected {m} component specs")
    else:
        comps = [v] * m
    out = []
    for p, c in enumerate(comps):
        w = f"{where}.components[{p}]" if "components" in v else where
        spec = _performance(ctx, {k: x for k, x in c.items() if k != "edge"}, w, t_default)
        spec["mu"] = _coupling(ctx, c.get("mu"), f"{w}.mu", coupling_default)
        out.append(spec)
    return out


def resolve(raw: Mapping[str, Any], path: str = "<scenario>", text: str | None = None) -> dict:
    """Validate ``raw`` and return the canonical resolved configuration."""
    ctx = _Ctx(path, text)
    _check_keys(ctx, raw, SECTIONS, "")
    coupling = _coupling(ctx, raw.get("coupling"), "coupling", {"kind": "tan", "scale": 1.0})

    agents_raw = raw.get("agents")
    if not isinstance(agents_raw, Mapping) or not agents_raw:
        ctx.fail("agents", "at least one agent is required")
    agents = {}
    m = None
    for key in sorted(agents_raw, key=lambda k: int(k) if str(k).isdigit() else -1):
        a = agents_raw[key]
        where = f"agents.{key}"
        node = _node(ctx, key, where)
        _check_keys(ctx, a, ("n", "F", "Z", "W", "Gamma", "M_Gamma", "F_tilde", "y0", "z0", "active"), where)
        if "F" not in a:
            ctx.fail(f"{where}.F", "missing")
        F = _expr_list(ctx, a["F"], f"{where}.F")
        Z = _expr_list(ctx, a.get("Z", []), f"{where}.Z")
        W = _expr_list(ctx, a.get("W", []), f"{where}.W")
        if "n" in a and a["n"] != len(Z):
            ctx.fail(f"{where}.n", f"n={a['n']!r} but Z has {len(Z)} entries")
        if m is None:
            m = len(F)
        elif len(F) != m:
            ctx.fail(f"{where}.F", f"expected {m} entries (shared output dimension)")
        gamma_raw = a.get("Gamma")
        if gamma_raw is None:
            gamma = [["1.0" if p == q else "0.0" for q in range(m)] for p in range(m)]
        else:
            if not isinstance(gamma_raw, list) or len(gamma_raw) != m:
                ctx.fail(f"{where}.Gamma", f"expected {m} rows")
            gamma = [_expr_list(ctx, row, f"{where}.Gamma[{r}]") for r, row in enumerate(gamma_raw)]
            if any(len(row) != m for row in gamma):
                ctx.fail(f"{where}.Gamma", f"expected a {m}x{m} matrix")
        entry = {"n": len(Z), "F": F, "Z": Z, "W": W, "Gamma": gamma,
                 "active": bool(a.get("active", True))}
        if a.get("M_Gamma") is not None:
            entry["M_Gamma"] = _num(ctx, a["M_Gamma"], f"{where}.M_Gamma", True)
        if a.get("F_tilde"):
            entry["F_tilde"] = _expr_list(ctx, a["F_tilde"], f"{where}.F_tilde")
        if "y0" in a:
            y0 = a["y0"] if isinstance(a["y0"], list) else [a["y0"]]
            entry["y0"] = [_num(ctx, v, f"{where}.y0") for v in y0]
            if len(entry["y0"]) != m:
                ctx.fail(f"{where}.y0", f"expected {m} values")
        elif entry["active"]:
            ctx.fail(f"{where}.y0", "active agents need an initial output")
        z0 = a.get("z0", [0.0] * len(Z))
        entry["z0"] = [_num(ctx, v, f"{where}.z0") for v in z0]
        if len(entry["z0"]) != len(Z):
            ctx.fail(f"{where}.z0", f"expected {len(Z)} values")
        try:
            AgentModel.from_strings(F, Z, W, gamma, entry.get("M_Gamma"), entry.get("F_tilde", ()))
        except UnboundVariable as exc:
            ctx.fail(where, f"unbound variable {exc}")
        except NetFunnelError as exc:
            ctx.fail(where, str(exc))
        agents[str(node)] = entry

    integ_raw = raw.get("integrator", {})
    _check_keys(ctx, integ_raw, INTEGRATOR_KEYS, "integrator")
    defaults = IntegratorConfig()
    integ = {}
    for k in INTEGRATOR_KEYS:
        if k == "method":
            integ[k] = integ_raw.get(k, defaults.method)
            if integ[k] not in ("radau5", "dopri5"):
                ctx.fail("integrator.method", f"unknown method {integ[k]!r}")
        elif k == "t_start":
            integ[k] = _num(ctx, integ_raw.get(k, 0.0), "integrator.t_start")
        elif k == "t_end":
            if k not in integ_raw:
                ctx.fail("integrator.t_end", "missing")
            integ[k] = _num(ctx, integ_raw[k], "integrator.t_end")
        else:
            integ[k] = _num(ctx, integ_raw.get(k, getattr(defaults, k)), f"integrator.{k}", True)
    if not integ["t_end"] > integ["t_start"]:
        ctx.fail("integrator.t_end", "must exceed t_start")

    out_raw = raw.get("outputs", {})
    _check_keys(ctx, out_raw, OUTPUT_KEYS, "outputs")
    outputs = {
        "sample_dt": _num(ctx, out_raw.get("sample_dt", defaults.sample_dt), "outputs.sample_dt", True),
        "csv": str(out_raw.get("csv", "trajectory.csv")),
        "summary": str(out_raw.get("summary", "summary.json")),
        "manifest": str(out_raw.get("manifest", "manifest.json")),
    }

    t0 = integ["t_start"]
    graph_raw = raw.get("graph", {})
    _check_keys(ctx, graph_raw, ("nodes", "edges"), "graph")
    active = sorted(int(k) for k, a in agents.items() if a["active"])
    nodes = graph_raw.get("nodes")
    if nodes is None:
        nodes = active
    nodes = sorted(_node(ctx, v, "graph.nodes") for v in nodes)
    for v in nodes:
        if str(v) not in agents:
            ctx.fail("graph.nodes", f"node {v} has no agent definition")
    if nodes != active:
        ctx.fail("graph.nodes", f"initial nodes {nodes} differ from active agents {active}")
    edges = []
    for k, e in enumerate(graph_raw.get("edges", [])):
        if not isinstance(e, list) or len(e) != 2:
            ctx.fail(f"graph.edges[{k}]", "expected [i, j]")
        i, j = sorted(_node(ctx, v, f"graph.edges[{k}]") for v in e)
        if i == j:
            ctx.fail(f"graph.edges[{k}]", "self-edges are not allowed")
        if i not in nodes or j not in nodes:
            ctx.fail(f"graph.edges[{k}]", f"edge ({i}, {j}) references an inactive or unknown node")
        if [i, j] in edges:
            ctx.fail(f"graph.edges[{k}]", "duplicate edge")
        edges.append([i, j])
    edges.sort()

    fun_raw = raw.get("funnels", {})
    _check_keys(ctx, fun_raw, ("default", "edges"), "funnels")
    default = fun_raw.get("default")
    per_edge = {}
    for k, spec in enumerate(fun_raw.get("edges", [])):
        if not isinstance(spec, Mapping) or "edge" not in spec:
            ctx.fail(f"funnels.edges[{k}]", "expected a table with an 'edge' key")
        e = sorted(_node(ctx, v, f"funnels.edges[{k}].edge") for v in spec["edge"])
        if e not in edges:
            ctx.fail(f"funnels.edges[{k}].edge", f"edge {e} is not in the graph")
        per_edge[tuple(e)] = _funnel_spec(ctx, spec, f"funnels.edges[{k}]", m, coupling, t0)
    funnels = []
    for e in edges:
        if tuple(e) in per_edge:
            comps = per_edge[tuple(e)]
        elif default is not None:
            comps = _funnel_spec(ctx, default, "funnels.default", m, coupling, t0)
        else:
            ctx.fail("funnels", f"edge {e} has no funnel and there is no default")
        funnels.append({"edge": e, "components": comps})
    funnels = {"edges": funnels}

    events = []
    ev_raw = raw.get("events", [])
    if not isinstance(ev_raw, list):
        ctx.fail("events", "expected a list")
    last_t = -math.inf
    for k, ev in enumerate(ev_raw):
        where = f"events[{k}]"
        if not isinstance(ev, Mapping):
            ctx.fail(where, "expected a table")
        kind = ev.get("kind")
        t = _num(ctx, ev.get("t"), f"{where}.t")
        if t < last_t:
            ctx.fail(f"{where}.t", "event times must be non-decreasing")
        last_t = t
        node = _node(ctx, ev.get("node"), f"{where}.node")
        if str(node) not in agents:
            ctx.fail(f"{where}.node", f"agent {node} is not declared")
        if kind == "leave":
            _check_keys(ctx, ev, ("t", "kind", "node"), where)
            events.append({"t": t, "kind": "leave", "node": node})
            continue
        if kind != "join":
            ctx.fail(f"{where}.kind", f"expected 'join' or 'leave', got {kind!r}")
        _check_keys(ctx, ev, ("t", "kind", "node", "y0", "z0", "edges"), where)
        out = {"t": t, "kind": "join", "node": node, "edges": []}
        if "y0" in ev:
            out["y0"] = [_num(ctx, v, f"{where}.y0") for v in (ev["y0"] if isinstance(ev["y0"], list) else [ev["y0"]])]
        if "z0" in ev:
            out["z0"] = [_num(ctx, v, f"{where}.z0") for v in ev["z0"]]
        for q, je in enumerate(ev.get("edges", [])):
            w = f"{where}.edges[{q}]"
            _check_keys(ctx, je, ("neighbor", "funnel", "handshake"), w)
            nb = _node(ctx, je.get("neighbor"), f"{w}.neighbor")
            if str(nb) not in agents:
                ctx.fail(f"{w}.neighbor", f"agent {nb} is not declared")
            if ("funnel" in je) == ("handshake" in je):
                ctx.fail(w, "give exactly one of 'funnel' or 'handshake'")
            if "funnel" in je:
                comps = _funnel_spec(ctx, je["funnel"], f"{w}.funnel", m, coupling, t)
                out["edges"].append({"neighbor": nb, "funnel": {"components": comps}})
            else:
                hs = je["handshake"]
                _check_keys(ctx, hs, ("eta", "lambda", "margin", "mu"), f"{w}.handshake")
                out["edges"].append({"neighbor": nb, "handshake": {
                    "eta": _num(ctx, hs.get("eta"), f"{w}.handshake.eta", True),
                    "lambda": _num(ctx, hs.get("lambda", 1.0), f"{w}.handshake.lambda", True),
                    "margin": _num(ctx, hs.get("margin", 0.1), f"{w}.handshake.margin", True),
                    "mu": _coupling(ctx, hs.get("mu"), f"{w}.handshake.mu", coupling)}})
        events.append(out)

    return {
        "name": str(raw.get("name", "")),
        "coupling": coupling,
        "agents": agents,
        "graph": {"nodes": nodes, "edges": edges},
        "funnels": funnels,
        "events": events,
        "integrator": integ,
        "outputs": outputs,
    }


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True, allow_nan=False)


def config_hash(resolved: Mapping) -> str:
    return hashlib.sha256(_canonical(resolved).encode("ascii")).hexdigest()


def dumps(resolved: Mapping) -> str:
    """Resolved configuration as a JSON scenario document (loads back to the same hash)."""
    return json.dumps(resolved, sort_keys=True, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# building runtime objects

def _mu(spec) -> CouplingFunction:
    return CouplingFunction(spec["kind"], spec["scale"])


def _psi(spec):
    kind = spec["kind"]
    if kind == "exponential":
        return ExponentialPerformance(spec["B"], spec["eta"], spec["lambda"], spec["t_k"])
    if kind == "constant":
        return ConstantPerformance(spec["value"], spec["t_k"])
    return TabulatedPerformance(spec["times"], spec["values"])


def _edge_funnel(comps) -> EdgeFunnel:
    return EdgeFunnel(tuple(_psi(c) for c in comps), tuple(_mu(c["mu"]) for c in comps))


@dataclass
class Scenario:
    resolved: dict
    path: str = "<scenario>"
    library: dict = field(default_factory=dict)

    def __post_init__(self):
        self.library = {}
        for key, a in self.resolved["agents"].items():
            self.library[int(key)] = AgentModel.from_strings(
                a["F"], a["Z"], a["W"], a["Gamma"], a.get("M_Gamma"), a.get("F_tilde", ()))

    @property
    def hash(self) -> str:
        return config_hash(self.resolved)

    @property
    def name(self) -> str:
        return self.resolved["name"]

    @property
    def t_span(self) -> tuple:
        it = self.resolved["integrator"]
        return (it["t_start"], it["t_end"])

    @property
    def cfg(self) -> IntegratorConfig:
        it = self.resolved["integrator"]
        kw = {k: it[k] for k in INTEGRATOR_KEYS if k not in ("t_start", "t_end")}
        return IntegratorConfig(sample_dt=self.resolved["outputs"]["sample_dt"], **kw)

    @property
    def model(self) -> NetworkModel:
        g = self.resolved["graph"]
        attrs = {tuple(f["edge"]): _edge_funnel(f["components"]) for f in self.resolved["funnels"]["edges"]}
        net = UndirectedNetwork(g["nodes"], [tuple(e) for e in g["edges"]], attrs)
        return NetworkModel({i: self.library[i] for i in g["nodes"]}, net)

    @property
    def init(self) -> SimState:
        a = self.resolved["agents"]
        nodes = self.resolved["graph"]["nodes"]
        return SimState(self.t_span[0], {i: a[str(i)]["y0"] for i in nodes},
                        {i: a[str(i)]["z0"] for i in nodes})

    @property
    def schedule(self) -> EventSchedule:
        evs = []
        for ev in self.resolved["events"]:
            if ev["kind"] == "leave":
                evs.append(Leave(ev["t"], ev["node"]))
                continue
            edges = []
            for je in ev["edges"]:
                if "funnel" in je:
                    edges.append(JoinEdge(je["neighbor"], funnel=_edge_funnel(je["funnel"]["components"])))
                else:
                    hs = je["handshake"]
                    edges.append(JoinEdge(je["neighbor"], handshake=Handshake(
                        hs["eta"], hs["lambda"], hs["margin"], _mu(hs["mu"]))))
            evs.append(Join(ev["t"], ev["node"], tuple(edges), ev.get("y0"), ev.get("z0")))
        return EventSchedule(tuple(evs))

    def with_overrides(self, **kw) -> "Scenario":
        """Copy with integrator/output fields replaced (``None`` values ignored)."""
        r = copy.deepcopy(self.resolved)
        for k, v in kw.items():
            if v is None:
                continue
            if k in r["integrator"]:
                r["integrator"][k] = v
            elif k in r["outputs"]:
                r["outputs"][k] = v
            else:
                raise KeyError(k)
        return Scenario(resolve(r, self.path), self.path)


def loads(text: str, path: str = "<scenario>", fmt: str | None = None) -> Scenario:
    if fmt is None:
        fmt = "toml" if path.endswith(".toml") else "json"
    try:
        if fmt == "toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(path, f"invalid JSON: {exc.msg}", exc.lineno, text) from None
    except Exception as exc:  # TOMLDecodeError
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioError(path, f"invalid TOML: {exc}", int(m.group(1)) if m else None, text) from None
    return Scenario(resolve(raw, path, text), path)


def load(path) -> Scenario:
    """Load a scenario file or a ``demo://NAME`` URI."""
    path = str(path)
    if path.startswith("demo://"):
        return load_demo(path[len("demo://"):])
    text = Path(path).read_text(encoding="utf-8")
    return loads(text, path)


# ---------------------------------------------------------------------------
# built-in demos

_HALF_PI = math.pi / 2

_NEURO_Z = [
    "-100*z1 + 100*y1",
    "if(y1 + 0.5 < 0, -z2 + 0.4*(y1 + 0.5), -z2 + 7*(y1 + 0.5))",
    "1/20*if(y1 + 1 < 0, -z3, -z3 + 50*(y1 + 1))",
]
_NEURO_F = {
    1: "-100/3*y1^3 + 400*z1 + 1100",
    2: "-100/3*y1^3 - 1600*z2 - 5500/3",
    3: "-100/3*y1^3 + 1600*z2 - (20*z2 - 22)^2 + 1100/3",
    4: "-100/3*y1^3 - 400*z3 + 5500/3",
}


def _neuro_funnel(scale: float, t_k: float) -> dict:
    return {"kind": "exponential", "B": _HALF_PI * (scale + 0.1), "eta": _HALF_PI * 0.1,
            "lambda": 1.0, "t_k": t_k}


def neuromorphic_raw(leave_times=(50.0, 130.0, 150.0), t_end: float = 300.0, sample_dt: float = 0.05) -> dict:
    """The four-agent demo. ``leave_times`` are when agents 1, 3 and 2 leave."""
    agents = {str(i): {"F": [_NEURO_F[i]], "Z": list(_NEURO_Z), "Gamma": [["100"]],
                       "M_Gamma": 0.01, "y0": [1.0], "z0": [0.0, 0.0, 0.0]} for i in range(1, 5)}
    l1, l3, l2 = leave_times
    return {
        "name": "neuromorphic",
        "coupling": {"kind": "tan"},
        "agents": agents,
        "graph": {"edges": [[1, 4], [2, 4], [2, 3]]},
        "funnels": {"default": _neuro_funnel(0.9, 0.0)},
        "events": sorted([
            {"t": l1, "kind": "leave", "node": 1},
            {"t": l3, "kind": "leave", "node": 3},
            {"t": l2, "kind": "leave", "node": 2},
            {"t": 100.0, "kind": "join", "node": 1, "edges": [{"neighbor": 4, "funnel": _neuro_funnel(8.9, 100.0)}]},
            {"t": 170.0, "kind": "join", "node": 2, "edges": [{"neighbor": 4, "funnel": _neuro_funnel(0.9, 170.0)}]},
            {"t": 220.0, "kind": "join", "node": 3, "edges": [{"neighbor": 2, "funnel": _neuro_funnel(4.9, 220.0)}]},
        ], key=lambda e: e["t"]),
        "integrator": {"t_start": 0.0, "t_end": t_end, "rtol": 1e-6, "atol": 1e-8, "dt_max": 0.5},
        "outputs": {"sample_dt": sample_dt},
    }


DEMOS = {"neuromorphic": neuromorphic_raw}


def load_demo(name: str) -> Scenario:
    if name not in DEMOS:
        raise ScenarioError(f"demo://{name}", f"unknown demo {name!r}; available: {sorted(DEMOS)}")
    return Scenario(resolve(DEMOS[name](), f"demo://{name}"), f"demo://{name}")
