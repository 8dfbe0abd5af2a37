"""Problem instances from JSON config files.

Layout::

    {
      "graph": {"vertices": [{"id": "a", "m": 1.0}, ...],
                "edges": [{"u": "a", "v": "b", "b": 1.0}, ...]},
      "bundle": {"rank": 2},
      "connection": [{"u": "a", "v": "b", "matrix": [[[re, im], ...], ...]}],
      "potential": [{"vertex": "a", "matrix": [[[re, im], ...], ...]}],
      "hbar": 1.0
    }

A connection record gives Phi(u, v), the map from the fiber at ``u`` to the
fiber at ``v``; the reverse orientation is derived.  Missing connection
entries are the identity, missing potential entries zero.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bundle import TOL, Connection, Potential, is_hermitian, is_unitary
from .errors import DomainError
from .graph import Violation, WeightedGraph, validate_graph


class ConfigError(Exception):
    """The config file is missing or not parseable as a problem instance."""


@dataclass(frozen=True)
class ProblemConfig:
    graph: WeightedGraph
    connection: Connection
    potential: Potential | None
    hbar: float
    sha256: str

    @property
    def rank(self) -> int:
        return self.connection.rank


def parse_matrix(raw, nu: int, what: str) -> np.ndarray:
    """``nu x nu`` nested list of ``[re, im]`` pairs (bare reals allowed) to a complex array."""
    try:
        a = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: matrix is not numeric") from exc
    if a.shape == (nu, nu, 2):
        return a[..., 0] + 1j * a[..., 1]
    if a.shape == (nu, nu):
        return a.astype(complex)
    raise DomainError(f"{what}: matrix shape {a.shape} does not match rank {nu}")


def matrix_to_pairs(a) -> list:
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def read_raw(path) -> tuple[dict, str]:
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "graph" not in raw:
        raise ConfigError(f"{path} has no graph section")
    return raw, hashlib.sha256(data).hexdigest()


def _graph_records(raw: dict):
    g = raw.get("graph") or {}
    try:
        verts = [(str(v["id"]), float(v["m"])) for v in g.get("vertices", [])]
        edges = [(str(e["u"]), str(e["v"]), float(e["b"])) for e in g.get("edges", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed graph record: {exc!r}") from exc
    return verts, edges


def _rank(raw: dict) -> int:
    try:
        nu = int((raw.get("bundle") or {}).get("rank", 1))
    except (TypeError, ValueError) as exc:
        raise ConfigError("bundle.rank must be an integer") from exc
    return nu


def validate_config(raw: dict) -> list[Violation]:
    """All violations in a parsed config, without raising on bad data."""
    verts, edges = _graph_records(raw)
    out: list[Violation] = []
    ids = [v for v, _ in verts]
    seen = set()
    for v in ids:
        if v in seen:
            out.append(Violation("duplicate_vertex", (v,)))
        seen.add(v)
    measure = {v: m for v, m in verts}
    weights: dict = {}
    undirected = set()
    for u, v, b in edges:
        key = frozenset((u, v))
        if u == v:
            out.append(Violation("diagonal", (u, v), f"b={b}"))
            continue
        if key in undirected:
            out.append(Violation("duplicate_edge", (u, v)))
            continue
        undirected.add(key)
        if not b > 0:
            out.append(Violation("nonpositive_weight", (u, v), f"b={b}"))
            continue
        weights[(u, v)] = b
        weights[(v, u)] = b
    out.extend(validate_graph(weights, measure))

    nu = _rank(raw)
    if nu < 1:
        out.append(Violation("bad_rank", (), f"rank={nu}"))
        return out
    conn_seen = set()
    for rec in raw.get("connection") or []:
        try:
            u, v = str(rec["u"]), str(rec["v"])
            a = parse_matrix(rec["matrix"], nu, f"Phi({u},{v})")
        except DomainError as exc:
            out.append(Violation("rank_mismatch", (rec.get("u"), rec.get("v")), str(exc)))
            continue
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed connection record: {exc!r}") from exc
        if frozenset((u, v)) not in undirected:
            out.append(Violation("connection_off_edge", (u, v)))
        if frozenset((u, v)) in conn_seen:
            out.append(Violation("duplicate_connection", (u, v)))
        conn_seen.add(frozenset((u, v)))
        if not is_unitary(a, TOL):
            out.append(Violation("non_unitary", (u, v)))
    for rec in raw.get("potential") or []:
        try:
            x = str(rec["vertex"])
            a = parse_matrix(rec["matrix"], nu, f"V({x})")
        except DomainError as exc:
            out.append(Violation("rank_mismatch", (rec.get("vertex"),), str(exc)))
            continue
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed potential record: {exc!r}") from exc
        if x not in measure:
            out.append(Violation("unknown_vertex", (x,), "potential"))
        if not is_hermitian(a, TOL):
            out.append(Violation("non_hermitian", (x,)))
    hbar = raw.get("hbar", 1.0)
    if not (isinstance(hbar, (int, float)) and hbar > 0):
        out.append(Violation("bad_hbar", (), f"hbar={hbar}"))
    return out


def build_config(raw: dict, sha256: str = "") -> ProblemConfig:
    """Construct the instance; raises :class:`DomainError` listing all violations."""
    problems = validate_config(raw)
    if problems:
        raise DomainError("; ".join(map(str, problems)))
    verts, edges = _graph_records(raw)
    labels = [v for v, _ in verts]
    index = {v: i for i, v in enumerate(labels)}
    g = WeightedGraph([m for _, m in verts], [(index[u], index[v], b) for u, v, b in edges], labels)
    nu = _rank(raw)
    conn = {}
    for rec in raw.get("connection") or []:
        conn[(index[str(rec["u"])], index[str(rec["v"])])] = parse_matrix(rec["matrix"], nu, "Phi")
    pot = {}
    for rec in raw.get("potential") or []:
        pot[index[str(rec["vertex"])]] = parse_matrix(rec["matrix"], nu, "V")
    V = Potential(nu, pot) if pot else None
    return ProblemConfig(g, Connection(nu, conn, g), V, float(raw.get("hbar", 1.0)), sha256)


def load_config(path) -> ProblemConfig:
    raw, digest = read_raw(path)
    return build_config(raw, digest)


def instance_to_config(graph: WeightedGraph, phi: Connection, V: Potential | None = None, hbar: float = 1.0) -> dict:
    """Serialize an instance to the config layout (inverse of :func:`build_config`)."""
    lab = graph.labels
    out = {
        "graph": {
            "vertices": [{"id": lab[x], "m": graph.measure(x)} for x in graph.vertices()],
            "edges": [{"u": lab[u], "v": lab[v], "b": w} for (u, v), w in graph.edges().items()],
        },
        "bundle": {"rank": phi.rank},
        "connection": [{"u": lab[u], "v": lab[v], "matrix": matrix_to_pairs(a)} for (u, v), a in sorted(phi.items())],
        "hbar": hbar,
    }
    if V is not None:
        out["potential"] = [{"vertex": lab[x], "matrix": matrix_to_pairs(a)} for x, a in sorted(V.items())]
    return out
