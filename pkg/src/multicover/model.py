"""Instance and solution data model for multi-layer covering problems.

Two instance families are supported:

* :class:`MultiLayerGraphInstance` -- ``h`` edge-weighted layers over a shared
  node set, with an optional root per layer (tree problems).
* :class:`CoverInstance` -- ``h`` layers of serving sets over a shared client
  set, with opening and connection costs plus a per-client extra cost
  (set-cover and facility-location problems).

All costs are exact :class:`fractions.Fraction` values.  A missing edge or
connection is the distinct sentinel ``INF`` (``math.inf``), never a large
number.  Node, client and set ids are dense 0-based integers; layer indices
are 0-based internally and rendered 1-based in reports.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

INF = math.inf

__all__ = [
    "INF",
    "Weights",
    "GraphLayer",
    "MultiLayerGraphInstance",
    "ServingSet",
    "CoverInstance",
    "TreeLayerSolution",
    "CoverLayerSolution",
    "Solution",
    "SolveReport",
    "Verdict",
    "MalformedSolution",
    "Infeasible",
    "Unreachable",
    "Uncoverable",
    "Disconnected",
    "BudgetExceeded",
    "BadParams",
    "BadTarget",
    "BadSize",
    "NotMetric",
    "InfeasibleInput",
    "IterationLimit",
    "Unbounded",
    "frac",
    "frac_str",
    "parse_frac",
    "metric_closure",
    "solution_cost",
    "validate_solution",
    "instance_to_json",
    "instance_from_json",
    "solution_to_json",
    "solution_from_json",
    "canonical_dumps",
]


class MalformedSolution(Exception):
    """Solution payload references unknown nodes, sets or clients."""


class Infeasible(Exception):
    """No feasible solution exists within the problem's constraints."""


class Unreachable(Exception):
    """Fewer terminals than required are connected to the root."""


class Uncoverable(Exception):
    """Fewer elements than required appear in any serving set."""


class Disconnected(Exception):
    """Required nodes lie in different components."""


class BudgetExceeded(Exception):
    """Instance exceeds the configured enumeration budget."""


class BadParams(Exception):
    """Parameters out of range for the requested construction."""


class BadTarget(Exception):
    """Unknown reduction target."""


class BadSize(Exception):
    """Requested subset size out of range."""


class NotMetric(Exception):
    """Triangle inequality violated where a metric is required."""


class InfeasibleInput(Exception):
    """Fractional input does not support the demanded flows."""


class IterationLimit(Exception):
    """Cutting-plane loop exceeded its cut budget."""


class Unbounded(Exception):
    """LP objective is unbounded below."""


def frac(value) -> Fraction:
    """Coerce ints, strings like ``"3/4"``, or Fractions to Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return parse_frac(value)
    raise TypeError(f"cannot interpret {value!r} as an exact rational")


def frac_str(value: Fraction) -> str:
    """Canonical ``p/q`` form (q >= 1, reduced)."""
    return f"{value.numerator}/{value.denominator}"


def parse_frac(text: str) -> Fraction:
    if "/" in text:
        num, den = text.split("/", 1)
        return Fraction(int(num), int(den))
    return Fraction(int(text))


def canonical_dumps(obj) -> str:
    """Bit-exact canonical JSON: sorted keys, compact separators, newline."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


# ---------------------------------------------------------------------------
# graph instances


class Weights:
    """Symmetric nonnegative edge weights over nodes ``0..size-1``.

    Absent pairs are ``INF``; the diagonal is zero.  Entries are exact
    rationals.
    """

    __slots__ = ("size", "_entries")

    def __init__(self, size: int, entries: Optional[dict] = None):
        if size < 0:
            raise BadParams("negative node count")
        self.size = size
        self._entries: dict[tuple[int, int], Fraction] = {}
        if entries:
            for (u, v), w in entries.items():
                self.set(u, v, w)

    def _key(self, u: int, v: int) -> tuple[int, int]:
        if not (0 <= u < self.size and 0 <= v < self.size):
            raise BadParams(f"node out of range: ({u},{v})")
        return (u, v) if u < v else (v, u)

    def set(self, u: int, v: int, w) -> None:
        if u == v:
            raise BadParams("no self-loops")
        w = frac(w)
        if w < 0:
            raise BadParams("negative weight")
        self._entries[self._key(u, v)] = w

    def get(self, u: int, v: int):
        """Weight of ``{u,v}``; 0 on the diagonal, INF if absent."""
        if u == v:
            if not 0 <= u < self.size:
                raise BadParams(f"node out of range: {u}")
            return Fraction(0)
        return self._entries.get(self._key(u, v), INF)

    def items(self):
        """Finite entries as ((u, v), weight) with u < v, sorted."""
        return sorted(self._entries.items())

    def copy(self) -> "Weights":
        w = Weights(self.size)
        w._entries = dict(self._entries)
        return w

    def common_denominator(self) -> int:
        return math.lcm(1, *(w.denominator for w in self._entries.values()))

    def to_grid(self) -> tuple[list[list], int]:
        """Dense matrix of scaled integer weights (INF kept), plus the scale.

        ``grid[u][v] / scale`` equals ``get(u, v)``.  Integer arithmetic on
        the grid is exact and much faster than Fraction arithmetic.
        """
        scale = self.common_denominator()
        grid = [[INF] * self.size for _ in range(self.size)]
        for u in range(self.size):
            grid[u][u] = 0
        for (u, v), w in self._entries.items():
            val = w.numerator * (scale // w.denominator)
            grid[u][v] = val
            grid[v][u] = val
        return grid, scale

    @staticmethod
    def from_grid(grid: Sequence[Sequence], scale: int) -> "Weights":
        n = len(grid)
        w = Weights(n)
        for u in range(n):
            for v in range(u + 1, n):
                if grid[u][v] is not INF and grid[u][v] != INF:
                    w.set(u, v, Fraction(grid[u][v], scale))
        return w

    def is_metric(self) -> bool:
        """Triangle inequality over all finite triples."""
        grid, _ = self.to_grid()
        n = self.size
        for a in range(n):
            for b in range(a + 1, n):
                ab = grid[a][b]
                if ab == INF:
                    continue
                for c in range(n):
                    if c == a or c == b:
                        continue
                    ac, cb = grid[a][c], grid[c][b]
                    if ac != INF and cb != INF and ac + cb < ab:
                        return False
        return True

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Weights)
            and self.size == other.size
            and self._entries == other._entries
        )

    def __repr__(self) -> str:
        return f"Weights(size={self.size}, edges={len(self._entries)})"


def metric_closure(w: Weights) -> Weights:
    """All-pairs shortest-path closure; INF preserved for disconnected pairs.

    Idempotent, and never above any original finite weight.
    """
    grid, scale = w.to_grid()
    n = w.size
    for m in range(n):
        row_m = grid[m]
        for a in range(n):
            am = grid[a][m]
            if am == INF:
                continue
            row_a = grid[a]
            for b in range(n):
                mb = row_m[b]
                if mb != INF and am + mb < row_a[b]:
                    row_a[b] = am + mb
    return Weights.from_grid(grid, scale)


@dataclass(frozen=True)
class GraphLayer:
    """One layer: an edge-weight function plus an optional root node."""

    weights: Weights
    root: Optional[int] = None

    def is_metric(self) -> bool:
        return self.weights.is_metric()


@dataclass(frozen=True)
class MultiLayerGraphInstance:
    """``h`` weighted layers over nodes ``0..n-1`` with coverage target ``k``.

    When rooted, roots are excluded from coverage counting, so
    ``k <= n - |roots|``.  Kinds: ``union-kmst`` or ``intersection-kmst``.
    """

    kind: str
    n: int
    h: int
    layers: tuple[GraphLayer, ...]
    k: int
    rooted: bool

    def __post_init__(self):
        if self.kind not in ("union-kmst", "intersection-kmst"):
            raise BadParams(f"unknown graph kind {self.kind!r}")
        if self.h != len(self.layers):
            raise BadParams("layer count mismatch")
        for layer in self.layers:
            if layer.weights.size != self.n:
                raise BadParams("layers must share the node set")
            if self.rooted:
                if layer.root is None or not 0 <= layer.root < self.n:
                    raise BadParams("rooted instance needs a root per layer")
            elif layer.root is not None:
                raise BadParams("unrooted instance must not carry roots")
        limit = self.n - len(self.roots()) if self.rooted else self.n
        if not 0 <= self.k <= limit:
            raise BadParams(f"target k={self.k} out of range (max {limit})")

    def roots(self) -> frozenset:
        return frozenset(l.root for l in self.layers if l.root is not None)


# ---------------------------------------------------------------------------
# cover instances


@dataclass(frozen=True)
class ServingSet:
    """A facility / set: opening cost plus finite connection costs.

    ``conn`` maps the allowed clients to their connection cost; clients
    absent from ``conn`` are at INF (not servable by this set).
    """

    open_cost: Fraction
    conn: dict[int, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "open_cost", frac(self.open_cost))
        object.__setattr__(
            self, "conn", {c: frac(w) for c, w in sorted(self.conn.items())}
        )
        if self.open_cost < 0 or any(w < 0 for w in self.conn.values()):
            raise BadParams("negative cost")

    @property
    def allowed(self) -> frozenset:
        return frozenset(self.conn)

    def conn_cost(self, client: int):
        return self.conn.get(client, INF)


@dataclass(frozen=True)
class CoverInstance:
    """Clients served per layer by serving sets, plus per-client extra cost.

    Pure set cover is the special case ``conn == 0`` on members and
    ``extra_cost == 0``.  Kinds: ``cover-union`` or ``cover-intersection``.
    """

    kind: str
    clients: tuple[int, ...]
    h: int
    layers: tuple[tuple[ServingSet, ...], ...]
    extra_cost: dict[int, Fraction]
    k: int
    metric_flags: tuple[bool, ...] = ()

    def __post_init__(self):
        if self.kind not in ("cover-union", "cover-intersection"):
            raise BadParams(f"unknown cover kind {self.kind!r}")
        if self.h != len(self.layers):
            raise BadParams("layer count mismatch")
        if not self.metric_flags:
            object.__setattr__(self, "metric_flags", (False,) * self.h)
        if len(self.metric_flags) != self.h:
            raise BadParams("one metric flag per layer")
        cs = set(self.clients)
        object.__setattr__(
            self,
            "extra_cost",
            {c: frac(w) for c, w in sorted(self.extra_cost.items())},
        )
        if any(w < 0 for w in self.extra_cost.values()):
            raise BadParams("negative extra cost")
        if not set(self.extra_cost) <= cs:
            raise BadParams("extra cost for unknown client")
        for sets in self.layers:
            for s in sets:
                if not s.allowed <= cs:
                    raise BadParams("serving set references unknown client")
        if not 0 <= self.k <= len(self.clients):
            raise BadParams(f"target k={self.k} out of range")

    def extra(self, client: int) -> Fraction:
        return self.extra_cost.get(client, Fraction(0))


# ---------------------------------------------------------------------------
# solutions


@dataclass(frozen=True)
class TreeLayerSolution:
    """Tree payload for one layer: node set plus edge list.

    ``nodes`` is kept explicitly so an edgeless singleton tree is
    representable.  An empty layer has ``nodes == frozenset()``.
    """

    nodes: frozenset
    edges: tuple[tuple[int, int], ...]

    @staticmethod
    def make(nodes: Iterable[int], edges: Iterable[tuple[int, int]]):
        es = tuple(sorted((u, v) if u < v else (v, u) for u, v in edges))
        return TreeLayerSolution(frozenset(nodes), es)


@dataclass(frozen=True)
class CoverLayerSolution:
    """Cover payload for one layer: chosen set indices plus assignment."""

    sets: tuple[int, ...]
    assign: dict[int, int]

    @staticmethod
    def make(sets: Iterable[int], assign: dict[int, int]):
        return CoverLayerSolution(tuple(sorted(set(sets))), dict(sorted(assign.items())))


@dataclass(frozen=True)
class Solution:
    """Per-layer payloads, the covered set ``K`` and the total cost."""

    kind: str  # union-tree | intersection-tree | cover
    layers: tuple
    covered: frozenset
    cost: Fraction


@dataclass
class SolveReport:
    """Per-run accounting: costs, bounds, enforced ratio envelope, timing."""

    algorithm: str
    cost: Fraction
    oracle_cost: Optional[Fraction] = None
    lp_bound: Optional[Fraction] = None
    ratio: Optional[Fraction] = None
    envelope: Optional[Fraction] = None
    elapsed: Optional[float] = None
    seed: Optional[int] = None
    trace: Optional[dict] = None

    def finish(self) -> "SolveReport":
        if self.oracle_cost is not None and self.oracle_cost > 0:
            self.ratio = self.cost / self.oracle_cost
        elif self.oracle_cost is not None and self.cost == 0:
            self.ratio = Fraction(1)
        return self

    def passes(self) -> Optional[bool]:
        if self.ratio is None or self.envelope is None:
            return None
        return self.ratio <= self.envelope

    def to_json(self, include_elapsed: bool = False) -> dict:
        out = {"algorithm": self.algorithm, "cost": frac_str(self.cost)}
        for name in ("oracle_cost", "lp_bound", "ratio", "envelope"):
            val = getattr(self, name)
            if val is not None:
                out[name] = frac_str(val)
        if self.seed is not None:
            out["seed"] = self.seed
        if self.trace is not None:
            out["trace"] = self.trace
        if include_elapsed and self.elapsed is not None:
            out["elapsed"] = self.elapsed
        if self.passes() is not None:
            out["pass"] = self.passes()
        return out


@dataclass(frozen=True)
class Verdict:
    ok: bool
    failures: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


# ---------------------------------------------------------------------------
# cost accounting and validation


def _tree_cost(weights: Weights, layer: TreeLayerSolution) -> Fraction:
    total = Fraction(0)
    for u, v in layer.edges:
        w = weights.get(u, v)
        if w == INF:
            raise MalformedSolution(f"edge ({u},{v}) has infinite weight")
        total += w
    return total


def _cover_layer_cost(sets: Sequence[ServingSet], layer: CoverLayerSolution) -> Fraction:
    total = Fraction(0)
    for s in layer.sets:
        if not 0 <= s < len(sets):
            raise MalformedSolution(f"unknown set index {s}")
        total += sets[s].open_cost
    for c, s in layer.assign.items():
        if s not in layer.sets:
            raise MalformedSolution(f"client {c} assigned to unopened set {s}")
        w = sets[s].conn_cost(c)
        if w == INF:
            raise MalformedSolution(f"client {c} not allowed in set {s}")
        total += w
    return total


def solution_cost(inst, sol: Solution) -> Fraction:
    """Exact recomputed cost of ``sol`` under ``inst``'s cost functions."""
    if isinstance(inst, MultiLayerGraphInstance):
        if len(sol.layers) != inst.h:
            raise MalformedSolution("layer count mismatch")
        total = Fraction(0)
        for layer, payload in zip(inst.layers, sol.layers):
            if not isinstance(payload, TreeLayerSolution):
                raise MalformedSolution("expected tree payload")
            if any(n >= inst.n or n < 0 for n in payload.nodes):
                raise MalformedSolution("unknown node in payload")
            total += _tree_cost(layer.weights, payload)
        return total
    if isinstance(inst, CoverInstance):
        if len(sol.layers) != inst.h:
            raise MalformedSolution("layer count mismatch")
        total = Fraction(0)
        for sets, payload in zip(inst.layers, sol.layers):
            if not isinstance(payload, CoverLayerSolution):
                raise MalformedSolution("expected cover payload")
            total += _cover_layer_cost(sets, payload)
        for c in sorted(sol.covered):
            if c not in inst.extra_cost and c not in set(inst.clients):
                raise MalformedSolution(f"unknown client {c}")
            total += inst.extra(c)
        return total
    raise MalformedSolution(f"unknown instance type {type(inst)!r}")


def _is_tree(nodes: frozenset, edges: tuple) -> bool:
    if not nodes:
        return not edges
    if len(edges) != len(nodes) - 1:
        return False
    parent = {v: v for v in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        if u not in nodes or v not in nodes:
            return False
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def validate_solution(inst, sol: Solution) -> Verdict:
    """Feasibility verdict with diagnostics; never raises on bad content."""
    failures = []
    try:
        recomputed = solution_cost(inst, sol)
        if recomputed != sol.cost:
            failures.append(
                f"cost mismatch: stated {sol.cost}, recomputed {recomputed}"
            )
    except MalformedSolution as exc:
        return Verdict(False, (f"malformed: {exc}",))

    if isinstance(inst, MultiLayerGraphInstance):
        union_mode = inst.kind == "union-kmst"
        roots = inst.roots()
        per_layer_nodes = []
        for i, (layer, payload) in enumerate(zip(inst.layers, sol.layers)):
            nodes = payload.nodes
            for u, v in payload.edges:
                if u not in nodes or v not in nodes:
                    failures.append(f"layer {i + 1}: edge endpoint outside node set")
            if not _is_tree(nodes, payload.edges):
                failures.append(f"layer {i + 1}: payload is not a tree")
            if inst.rooted and nodes and layer.root not in nodes:
                failures.append(f"layer {i + 1}: tree misses its root")
            per_layer_nodes.append(nodes)
        if union_mode:
            covered = frozenset().union(*per_layer_nodes) if per_layer_nodes else frozenset()
            covered -= roots
            if covered != sol.covered:
                failures.append("covered set does not match union of layer trees")
        else:
            for i, nodes in enumerate(per_layer_nodes):
                missing = sol.covered - nodes
                if missing:
                    failures.append(
                        f"layer {i + 1}: nodes {sorted(missing)} not in its tree"
                    )
    elif isinstance(inst, CoverInstance):
        union_mode = inst.kind == "cover-union"
        if union_mode:
            covered = frozenset().union(
                *(frozenset(p.assign) for p in sol.layers)
            ) if sol.layers else frozenset()
            if covered != sol.covered:
                failures.append("covered set does not match union of assignments")
        else:
            for i, payload in enumerate(sol.layers):
                missing = sol.covered - frozenset(payload.assign)
                if missing:
                    failures.append(
                        f"layer {i + 1}: clients {sorted(missing)} unassigned"
                    )
    else:
        return Verdict(False, ("unknown instance type",))

    if len(sol.covered) < inst.k:
        failures.append(f"coverage deficit {inst.k - len(sol.covered)}")
    return Verdict(not failures, tuple(failures))


# ---------------------------------------------------------------------------
# canonical JSON serialization


def instance_to_json(inst) -> dict:
    if isinstance(inst, MultiLayerGraphInstance):
        return {
            "kind": inst.kind,
            "n": inst.n,
            "h": inst.h,
            "k": inst.k,
            "rooted": inst.rooted,
            "layers": [
                {
                    "root": layer.root,
                    "edges": [
                        [u, v, frac_str(w)] for (u, v), w in layer.weights.items()
                    ],
                }
                for layer in inst.layers
            ],
        }
    if isinstance(inst, CoverInstance):
        return {
            "kind": inst.kind,
            "h": inst.h,
            "k": inst.k,
            "clients": list(inst.clients),
            "extra_cost": {str(c): frac_str(w) for c, w in inst.extra_cost.items()},
            "layers": [
                {
                    "metric": bool(flag),
                    "sets": [
                        {
                            "open": frac_str(s.open_cost),
                            "conn": {str(c): frac_str(w) for c, w in s.conn.items()},
                        }
                        for s in sets
                    ],
                }
                for sets, flag in zip(inst.layers, inst.metric_flags)
            ],
        }
    raise BadParams(f"unknown instance type {type(inst)!r}")


def instance_from_json(data: dict):
    kind = data["kind"]
    if kind in ("union-kmst", "intersection-kmst"):
        n = data["n"]
        layers = []
        for layer in data["layers"]:
            w = Weights(n)
            for u, v, ws in layer["edges"]:
                w.set(u, v, parse_frac(ws))
            layers.append(GraphLayer(w, layer.get("root")))
        return MultiLayerGraphInstance(
            kind=kind,
            n=n,
            h=data["h"],
            layers=tuple(layers),
            k=data["k"],
            rooted=data["rooted"],
        )
    if kind in ("cover-union", "cover-intersection"):
        layers = []
        flags = []
        for layer in data["layers"]:
            flags.append(bool(layer.get("metric", False)))
            layers.append(
                tuple(
                    ServingSet(
                        parse_frac(s["open"]),
                        {int(c): parse_frac(w) for c, w in s["conn"].items()},
                    )
                    for s in layer["sets"]
                )
            )
        return CoverInstance(
            kind=kind,
            clients=tuple(data["clients"]),
            h=data["h"],
            layers=tuple(layers),
            extra_cost={int(c): parse_frac(w) for c, w in data["extra_cost"].items()},
            k=data["k"],
            metric_flags=tuple(flags),
        )
    raise BadParams(f"unknown instance kind {kind!r}")


def solution_to_json(sol: Solution) -> dict:
    layers = []
    for payload in sol.layers:
        if isinstance(payload, TreeLayerSolution):
            layers.append(
                {
                    "nodes": sorted(payload.nodes),
                    "edges": [[u, v] for u, v in payload.edges],
                }
            )
        else:
            layers.append(
                {
                    "sets": list(payload.sets),
                    "assign": {str(c): s for c, s in payload.assign.items()},
                }
            )
    return {
        "kind": sol.kind,
        "cost": frac_str(sol.cost),
        "covered": sorted(sol.covered),
        "layers": layers,
    }


def solution_from_json(data: dict) -> Solution:
    layers = []
    for layer in data["layers"]:
        if "edges" in layer:
            layers.append(
                TreeLayerSolution.make(
                    layer["nodes"], [tuple(e) for e in layer["edges"]]
                )
            )
        else:
            layers.append(
                CoverLayerSolution.make(
                    layer["sets"], {int(c): s for c, s in layer["assign"].items()}
                )
            )
    return Solution(
        kind=data["kind"],
        layers=tuple(layers),
        covered=frozenset(data["covered"]),
        cost=parse_frac(data["cost"]),
    )
