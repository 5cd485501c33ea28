"""Trajectory CSV and JSON summary files.

CSV columns: ``t``, then per agent ``y{i}_{p}`` and ``z{i}_{k}``, then
``u{i}_{p}``, then per edge ``ratio_{i}_{j}_{p}`` and ``psi_{i}_{j}_{p}``
(1-based ``p``/``k``, ``i < j``). Values use 17 significant digits; absent
entries are empty cells.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import SchemaMismatch
from .graph import UndirectedNetwork, connected_components
from .sim import TrajectoryLog

__all__ = ["write_csv", "csv_text", "read_csv", "write_json", "json_default"]

_Y = re.compile(r"y(\d+)_(\d+)\Z")
_Z = re.compile(r"z(\d+)_(\d+)\Z")
_U = re.compile(r"u(\d+)_(\d+)\Z")
_R = re.compile(r"(ratio|psi)_(\d+)_(\d+)_(\d+)\Z")


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else format(v, ".17g")


def _columns(log: TrajectoryLog) -> list:
    cols = [("t", None)]
    for i in log.nodes:
        cols += [(f"y{i}_{p + 1}", (log.y[i], p)) for p in range(log.m)]
        cols += [(f"z{i}_{k + 1}", (log.z[i], k)) for k in range(log.n[i])]
    for i in log.nodes:
        cols += [(f"u{i}_{p + 1}", (log.u[i], p)) for p in range(log.m)]
    for e in log.edges:
        cols += [(f"ratio_{e[0]}_{e[1]}_{p + 1}", (log.ratio[e], p)) for p in range(log.m)]
        cols += [(f"psi_{e[0]}_{e[1]}_{p + 1}", (log.psi[e], p)) for p in range(log.m)]
    return cols


def csv_text(log: TrajectoryLog) -> str:
    cols = _columns(log)
    buf = io.StringIO()
    buf.write(",".join(name for name, _ in cols) + "\n")
    data = [log.t] + [arr[:, c] for _, (arr, c) in cols[1:]]
    for k in range(len(log.t)):
        buf.write(",".join(_fmt(float(col[k])) for col in data) + "\n")
    return buf.getvalue()


def write_csv(log: TrajectoryLog, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(log))
    return path


def read_csv(path) -> TrajectoryLog:
    """Read a trajectory CSV back; membership is rebuilt from the non-empty cells."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t":
        raise SchemaMismatch(f"{path}: first column must be 't'")
    if not body:
        raise SchemaMismatch(f"{path}: no data rows")
    ys, zs, us, es = {}, {}, {}, {}
    m = 0
    for c, name in enumerate(header[1:], 1):
        if mt := _Y.match(name):
            ys[(int(mt[1]), int(mt[2]))] = c
            m = max(m, int(mt[2]))
        elif mt := _Z.match(name):
            zs[(int(mt[1]), int(mt[2]))] = c
        elif mt := _U.match(name):
            us[(int(mt[1]), int(mt[2]))] = c
        elif mt := _R.match(name):
            i, j = int(mt[2]), int(mt[3])
            if not i < j:
                raise SchemaMismatch(f"{path}: edge column {name!r} needs i < j")
            es[(mt[1], i, j, int(mt[4]))] = c
        else:
            raise SchemaMismatch(f"{path}: unknown column {name!r}")
    K = len(body)
    try:
        data = np.array([[float(v) if v != "" else np.nan for v in r] for r in body])
    except ValueError as exc:
        raise SchemaMismatch(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise SchemaMismatch(f"{path}: rows do not match the header width")
    nodes = sorted({i for i, _ in ys})
    n = {i: max([k for a, k in zs if a == i], default=0) for i in nodes}
    y = {i: np.column_stack([data[:, ys[(i, p)]] for p in range(1, m + 1)]) for i in nodes}
    z = {i: (np.column_stack([data[:, zs[(i, k)]] for k in range(1, n[i] + 1)]) if n[i] else np.zeros((K, 0)))
         for i in nodes}
    try:
        u = {i: np.column_stack([data[:, us[(i, p)]] for p in range(1, m + 1)]) for i in nodes}
        edges = sorted({(i, j) for _, i, j, _ in es})
        ratio = {e: np.column_stack([data[:, es[("ratio",) + e + (p,)]] for p in range(1, m + 1)]) for e in edges}
        psi = {e: np.column_stack([data[:, es[("psi",) + e + (p,)]] for p in range(1, m + 1)]) for e in edges}
    except KeyError as exc:
        raise SchemaMismatch(f"{path}: missing column for {exc}") from None
    memb = {i: np.full(K, -1, dtype=int) for i in nodes}
    for k in range(K):
        active = [i for i in nodes if not np.isnan(u[i][k, 0])]
        act_edges = [e for e in edges if not np.isnan(ratio[e][k, 0])]
        try:
            g = UndirectedNetwork(active, act_edges)
        except ValueError as exc:
            raise SchemaMismatch(f"{path}: row {k + 1}: {exc}") from None
        for comp in connected_components(g):
            for i in comp:
                memb[i][k] = comp[0]
    return TrajectoryLog(data[:, 0].copy(), nodes, m, n, y, z, u, ratio, psi, memb, [], {"source": str(path)})


def json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=json_default) + "\n", encoding="utf-8")
    return path
