"""Command line entry point.

Exit codes (all subcommands):

    0  success
    1  usage, file, schema or other error
    2  funnel breach, failed check, or loop detected
    3  finite escape suspected
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, logio
from .errors import (
    FiniteEscapeSuspected, FunnelBreach, LoopDetected, NetFunnelError, ScenarioError,
)
from .exprlang import compile_expr, parse
from .graph import (
    DirectedGraph, compute_flow_weights, compute_potential, find_loop,
    flow_identity_residual, is_connected, node_conservation_residual,
)
from .scenario import load
from .sim import run

log = logging.getLogger("netfunnel")

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_ESCAPE = 0, 1, 2, 3
CANCEL_TOL = 1e-10

# (flag dest, scenario key) for run overrides
_OVERRIDES = (("t_end", "t_end"), ("rtol", "rtol"), ("atol", "atol"), ("max_step", "dt_max"),
              ("sample_dt", "sample_dt"), ("method", "method"))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=logio.json_default))


def _collect_overrides(args) -> tuple:
    """Last occurrence wins; repeated flags are reported."""
    kw, repeated = {}, {}
    for dest, key in _OVERRIDES:
        vals = getattr(args, dest, None)
        if vals:
            kw[key] = vals[-1]
            if len(vals) > 1:
                repeated[dest.replace("_", "-")] = {"given": vals, "used": vals[-1]}
    return kw, repeated


# ---------------------------------------------------------------------------
# run

def cmd_run(args) -> int:
    started = _now()
    sc = load(args.scenario)
    kw, repeated = _collect_overrides(args)
    for flag in repeated:
        log.warning("--%s given %d times; using the last value", flag, len(repeated[flag]["given"]))
    if kw:
        sc = sc.with_overrides(**kw)
    out = Path(args.out)
    outputs = sc.resolved["outputs"]
    paths = {k: out / outputs[k] for k in ("csv", "summary", "manifest")}
    manifest = {
        "scenario": args.scenario, "name": sc.name, "hash": sc.hash, "version": __version__,
        "argv": list(args.argv), "overrides": kw, "repeated_flags": repeated,
        "started": started, "outputs": {k: str(p) for k, p in paths.items()},
    }
    t0 = time.perf_counter()
    try:
        lg = run(sc.model, sc.schedule, sc.t_span, sc.init, sc.cfg, sc.library)
    except (FunnelBreach, FiniteEscapeSuspected) as exc:
        manifest.update(finished=_now(), status="failed", error=f"{type(exc).__name__}: {exc}")
        logio.write_json(manifest, paths["manifest"])
        raise
    elapsed = time.perf_counter() - t0
    logio.write_csv(lg, paths["csv"])
    summary = lg.summary()
    summary.update(name=sc.name, hash=sc.hash, agents=len(lg.nodes),
                   joins=sum(e["kind"] == "join" for e in lg.events),
                   leaves=sum(e["kind"] == "leave" for e in lg.events))
    logio.write_json(summary, paths["summary"])
    manifest.update(finished=_now(), status="ok", runtime_s=round(elapsed, 3))
    logio.write_json(manifest, paths["manifest"])
    print(f"{sc.name}: {len(lg.t)} samples, {len(lg.nodes)} agents, max ratio {lg.max_ratio():.6f}")
    print(f"wrote {paths['csv']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# check

def cmd_check(args) -> int:
    sc = load(args.scenario)
    lg = logio.read_csv(args.csv)
    funnel = analysis.check_funnel(lg)
    sync = analysis.check_sync_bound(lg)
    bounds = analysis.check_input_bounds(lg, sc.library, window=args.window)
    cancel = analysis.check_coupling_cancellation(lg, sc.library)
    report = {
        "funnel": funnel.to_dict(), "sync": sync.to_dict(), "input_bounds": bounds.to_dict(),
        "cancellation": {"max_residual": cancel, "tol": CANCEL_TOL, "passed": cancel < CANCEL_TOL},
    }
    ok = funnel.passed and sync.passed and cancel < CANCEL_TOL
    report["passed"] = ok
    path = logio.write_json(report, Path(args.out) / "check.json")
    print(f"funnel {'ok' if funnel.passed else 'FAIL'} (max ratio {funnel.max_ratio:.6g}), "
          f"sync {'ok' if sync.passed else 'FAIL'} ({len(sync.violations)} violations), "
          f"cancellation {'ok' if cancel < CANCEL_TOL else 'FAIL'} ({cancel:.3g})")
    if bounds.flagged:
        print(f"note: input bound flagged (drift {bounds.drift:.3g})")
    print(f"wrote {path}")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# compare

def _state_at(sc, T):
    """Network model and state at time ``T`` after the events scheduled there."""
    t0 = sc.t_span[0]
    if T == t0 and not [e for e in sc.schedule if e.t == t0]:
        return sc.model, sc.init
    if T <= t0:
        raise ValueError(f"--from {T} must not precede the start time {t0}")
    lg = run(sc.model, sc.schedule, (t0, T), sc.init, sc.cfg, sc.library)
    return lg.final


def cmd_compare(args) -> int:
    sc = load(args.scenario)
    mode = {"blended": "full", "reduced": "reduced-cor2", "reduced_cor3": "reduced-cor3"}[args.mode]
    t_end = sc.t_span[1] if args.t_end is None else args.t_end
    if args.start is None:
        times = [e.t for e in sc.schedule if e.t < t_end]
        T = max(times) if times else sc.t_span[0]
    else:
        T = args.start
    if not t_end > T:
        raise ValueError(f"segment [{T}, {t_end}] is empty")
    cfg = sc.cfg
    model, state = _state_at(sc, T)
    if not is_connected(model.graph):
        raise ValueError(f"graph at t={T} is disconnected; choose a fixed connected segment with --from")
    reference = analysis.reference_for(model, state, (T, t_end), mode, cfg)
    out = Path(args.out)
    if args.eta_sweep:
        etas = [float(v) for v in args.eta_sweep.split(",") if v.strip()]
        sw = analysis.eta_sweep(model, state, (T, t_end), etas, mode, cfg, lam=args.lam,
                                slack=args.slack, reference=reference)
        rep = {"mode": mode, "segment": [T, t_end], **sw.to_dict()}
        path = logio.write_json(rep, out / "sweep.json")
        for eta, tail in zip(sw.etas, sw.tails):
            print(f"eta={eta:g}: tail error {tail:.6g}")
        print(f"monotone within {sw.slack:.0%}: {'yes' if sw.monotone else 'NO'}")
        print(f"wrote {path}")
        return EXIT_OK if sw.monotone else EXIT_FAIL
    lg = run(model, [], (T, t_end), state, cfg)
    er = analysis.compare_blended(lg, reference, mode)
    rep = {"segment": [T, t_end], **er.to_dict()}
    path = logio.write_json(rep, out / "compare.json")
    print(f"{mode}: max error {float(np.max(er.max_error)):.6g}, tail error {er.tail:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gamma

def _fn(src: str, argnames):
    return compile_expr(parse(src), argnames)


def cmd_gamma(args) -> int:
    beta = _fn(args.beta, ["s", "t"])
    gammahat = _fn(args.gammahat, ["s"])
    w = _fn(args.w, ["t"])
    gc = analysis.construct_gamma(beta, gammahat, w, args.Mx0, args.Mu, n_grid=args.n_grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = [gc.relation_residual(s) for s in gc.grid]
    lines = ["s,gamma,residual"] + [f"{s:.17g},{v:.17g},{r:.17g}" for s, v, r in zip(gc.grid, gc.values, res)]
    (out / "gamma.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    rep = {"M_x": gc.M_x, "s_max": gc.s_max, "eps_max": gc.eps_max, "residual_max": max(res),
           "eval": {repr(s): gc(s) for s in (args.eval or [])}}
    logio.write_json(rep, out / "gamma.json")
    _emit(rep)
    return EXIT_OK


# ---------------------------------------------------------------------------
# graph

def cmd_graph(args) -> int:
    g = DirectedGraph.parse(args.edges)
    loop = find_loop(g)
    want = args.what or "all"
    rep = {"loop": loop is not None}
    if loop is not None:
        rep["cycle"] = loop
    if want == "loop":
        _emit(rep)
        return EXIT_OK
    try:
        if want in ("potential", "all"):
            rep["potential"] = {str(k): v for k, v in compute_potential(g).items()}
        if want in ("flow", "all") and g.edges:
            w = compute_flow_weights(g)
            rep["flow"] = {f"{j}->{i}": float(v) for (j, i), v in sorted(w.items())}
            rep["flow_exact"] = {f"{j}->{i}": str(v) for (j, i), v in sorted(w.items())}
            rng = np.random.default_rng(0)
            resid = [flow_identity_residual(g, w, rng.standard_normal(len(g.nodes))) for _ in range(20)]
            rep["residual_max"] = max(resid + [node_conservation_residual(g, w)])
    except LoopDetected:
        _emit(rep)
        raise
    _emit(rep)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netfunnel", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate a scenario and write CSV, summary and manifest")
    r.add_argument("scenario", help="scenario file (.toml/.json) or demo://NAME")
    r.add_argument("--t-end", type=float, action="append")
    r.add_argument("--rtol", type=float, action="append")
    r.add_argument("--atol", type=float, action="append")
    r.add_argument("--max-step", type=float, action="append")
    r.add_argument("--sample-dt", type=float, action="append")
    r.add_argument("--method", choices=("radau5", "dopri5"), action="append")
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run all trajectory checks on a CSV")
    c.add_argument("csv")
    c.add_argument("scenario")
    c.add_argument("--window", type=float, default=50.0)
    c.add_argument("--out", default="out")
    c.set_defaults(func=cmd_check)

    m = sub.add_parser("compare", help="compare a network segment with its blended dynamics")
    m.add_argument("scenario")
    g = m.add_mutually_exclusive_group()
    g.add_argument("--blended", dest="mode", action="store_const", const="blended")
    g.add_argument("--reduced", dest="mode", action="store_const", const="reduced")
    g.add_argument("--reduced-cor3", dest="mode", action="store_const", const="reduced_cor3")
    m.set_defaults(mode="blended")
    m.add_argument("--eta-sweep", help="comma-separated residual levels")
    m.add_argument("--from", dest="start", type=float, help="segment start (default: last event time)")
    m.add_argument("--t-end", type=float)
    m.add_argument("--lambda", dest="lam", type=float, default=1.0)
    m.add_argument("--slack", type=float, default=0.1)
    m.add_argument("--out", default="out")
    m.set_defaults(func=cmd_compare)

    a = sub.add_parser("gamma", help="construct the gain gamma from beta, gamma_hat and w")
    a.add_argument("--beta", required=True, help="expression in s (the level r) and t")
    a.add_argument("--gammahat", required=True, help="expression in s")
    a.add_argument("--w", required=True, help="expression in t")
    a.add_argument("--Mx0", type=float, required=True)
    a.add_argument("--Mu", type=float, required=True)
    a.add_argument("--eval", type=float, nargs="+")
    a.add_argument("--n-grid", type=int, default=50)
    a.add_argument("--out", default="out")
    a.set_defaults(func=cmd_gamma)

    q = sub.add_parser("graph", help="loop check, potential and flow weights of a directed graph")
    q.add_argument("edges", nargs="+", help="edges as j->i tokens")
    h = q.add_mutually_exclusive_group()
    h.add_argument("--flow", dest="what", action="store_const", const="flow")
    h.add_argument("--potential", dest="what", action="store_const", const="potential")
    h.add_argument("--loop", dest="what", action="store_const", const="loop")
    q.set_defaults(func=cmd_graph)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FunnelBreach, LoopDetected) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except FiniteEscapeSuspected as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ESCAPE
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_ERROR
    except (NetFunnelError, OSError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
