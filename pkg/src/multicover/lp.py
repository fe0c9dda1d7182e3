"""Exact rational LP machinery.

A two-phase primal simplex over an integer-scaled tableau (fraction-free
pivoting, Bland's rule) gives deterministic exact optima.  Cut-family models
are solved by a cutting-plane loop whose separation oracle is an exact
max-flow / min-cut computation.  Builders produce the five relaxations used
by the multi-layer solvers, and ``splitting_off`` eliminates non-terminal
nodes from fractional tree solutions at cost factor at most two.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .model import (
    INF,
    BadParams,
    CoverInstance,
    Infeasible,
    InfeasibleInput,
    IterationLimit,
    MultiLayerGraphInstance,
    NotMetric,
    Unbounded,
    Weights,
    frac,
    frac_str,
)

__all__ = [
    "LpModel",
    "FractionalSolution",
    "solve_simplex",
    "solve_cutting_plane",
    "build_lp",
    "separation_mincut",
    "splitting_off",
    "maxflow_directed",
    "maxflow_undirected",
    "all_cut_rows",
]


# ---------------------------------------------------------------------------
# model


@dataclass
class LpModel:
    """Sparse minimization LP: named variables, >= rows, optional cut hook."""

    variables: list = field(default_factory=list)
    lower: dict = field(default_factory=dict)
    upper: dict = field(default_factory=dict)
    objective: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)  # (coeffs: dict, rhs: Fraction)
    separation: Optional[Callable] = None
    cut_limit: Optional[int] = None
    meta: dict = field(default_factory=dict)

    def add_var(self, name: str, lb=0, ub=None, obj=0) -> str:
        if name in self.lower:
            raise BadParams(f"duplicate variable {name}")
        lb = frac(lb)
        ubf = None if ub is None else frac(ub)
        if ubf is not None and ubf < lb:
            raise BadParams(f"bounds lo>hi for {name}")
        self.variables.append(name)
        self.lower[name] = lb
        if ubf is not None:
            self.upper[name] = ubf
        obj = frac(obj)
        if obj:
            self.objective[name] = obj
        return name

    def _check(self, coeffs: dict) -> dict:
        out = {}
        for name, c in coeffs.items():
            if name not in self.lower:
                raise BadParams(f"constraint references unknown variable {name}")
            c = frac(c)
            if c:
                out[name] = c
        return out

    def add_ge(self, coeffs: dict, rhs) -> None:
        self.rows.append((self._check(coeffs), frac(rhs)))

    def add_le(self, coeffs: dict, rhs) -> None:
        self.add_ge({n: -c for n, c in coeffs.items()}, -frac(rhs))

    def row_key(self, coeffs: dict, rhs) -> tuple:
        return (tuple(sorted(coeffs.items())), frac(rhs))

    def dump(self) -> str:
        """Plain textual LP (minimize section, rows, bounds), p/q literals."""
        lines = ["Minimize"]
        obj = " + ".join(
            f"{frac_str(c)} {n}" for n, c in sorted(self.objective.items())
        )
        lines.append(f"  obj: {obj if obj else '0/1'}")
        lines.append("Subject To")
        for i, (coeffs, rhs) in enumerate(self.rows):
            body = " + ".join(
                f"{frac_str(c)} {n}" for n, c in sorted(coeffs.items())
            )
            lines.append(f"  r{i}: {body if body else '0/1'} >= {frac_str(rhs)}")
        lines.append("Bounds")
        for name in self.variables:
            hi = self.upper.get(name)
            hi_s = frac_str(hi) if hi is not None else "inf"
            lines.append(f"  {frac_str(self.lower[name])} <= {name} <= {hi_s}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FractionalSolution:
    """Exact variable values and objective of a solved LP."""

    values: dict
    objective: Fraction

    def value(self, name: str) -> Fraction:
        return self.values.get(name, Fraction(0))


# ---------------------------------------------------------------------------
# simplex

_PIVOT_CAP = 200_000


def _standard_form(model: LpModel):
    """Shift lower bounds to zero and scale rows to integers.

    Returns (names, obj_coeffs, int_rows, art_flags, offset) where each row
    of ``int_rows`` is (coeff list over vars, surplus sign, rhs) and
    ``art_flags[i]`` says whether row i needs an artificial variable.
    """
    names = list(model.variables)
    index = {n: j for j, n in enumerate(names)}
    shift = [model.lower[n] for n in names]
    offset = sum(
        (model.objective.get(n, Fraction(0)) * s for n, s in zip(names, shift)),
        Fraction(0),
    )
    rows = []
    for coeffs, rhs in model.rows:
        r = rhs - sum(coeffs[n] * shift[index[n]] for n in coeffs)
        rows.append((dict(coeffs), r))
    for n in names:
        hi = model.upper.get(n)
        if hi is not None:
            rows.append(({n: Fraction(-1)}, -(hi - model.lower[n])))

    int_rows = []
    for coeffs, rhs in rows:
        if not coeffs:
            if rhs > 0:
                raise Infeasible("constant row 0 >= positive rhs")
            continue
        den = math.lcm(rhs.denominator, *(c.denominator for c in coeffs.values()))
        vec = [0] * len(names)
        for n, c in coeffs.items():
            vec[index[n]] = c.numerator * (den // c.denominator)
        b = rhs.numerator * (den // rhs.denominator)
        int_rows.append((vec, b))
    return names, index, shift, offset, int_rows


def solve_simplex(model: LpModel) -> FractionalSolution:
    """Exact optimum of the explicit LP; deterministic via Bland's rule.

    Raises :class:`Infeasible` or :class:`Unbounded`.
    """
    names, index, shift, offset, int_rows = _standard_form(model)
    nv = len(names)
    m = len(int_rows)

    # columns: vars | surplus (one per row) | artificials | rhs
    art_rows = []
    tableau = []
    for i, (vec, b) in enumerate(int_rows):
        row = list(vec) + [0] * m
        if b > 0:
            row[nv + i] = -1
            art_rows.append(i)
        else:
            row = [-a for a in row]
            row[nv + i] = 1
            b = -b
        tableau.append((row, b))

    na = len(art_rows)
    ncols = nv + m + na
    M = []
    basis = []
    art_cols = {}
    for i, (row, b) in enumerate(tableau):
        full = row + [0] * na + [b]
        if i in art_rows:
            c = nv + m + art_rows.index(i)
            full[c] = 1
            art_cols[i] = c
            basis.append(c)
        else:
            basis.append(nv + i)
        M.append(full)

    # objective rows: phase 2 (real objective), phase 1 (sum of artificials)
    obj_den = math.lcm(1, *(c.denominator for c in model.objective.values()))
    obj2 = [0] * (ncols + 1)
    for n, c in model.objective.items():
        obj2[index[n]] = c.numerator * (obj_den // c.denominator)
    obj1 = [0] * (ncols + 1)
    for i in art_rows:
        c = art_cols[i]
        obj1[c] = 1
    for i in art_rows:
        row = M[i]
        obj1 = [a - b for a, b in zip(obj1, row)]
        obj1[art_cols[i]] = 0

    d = 1
    rhs = ncols
    banned = set(art_cols.values())  # artificials may never (re)enter

    def pivot(r: int, c: int):
        nonlocal d, M, obj1, obj2
        if M[r][c] < 0:
            M[r] = [-a for a in M[r]]
        piv = M[r][c]
        row_r = M[r]
        new_M = []
        for i, row in enumerate(M):
            if i == r:
                new_M.append(row)
                continue
            f = row[c]
            if f == 0 and piv == d:
                new_M.append(row)
            else:
                new_M.append([(piv * a - f * b) // d for a, b in zip(row, row_r)])
        M = new_M
        f1, f2 = obj1[c], obj2[c]
        obj1 = [(piv * a - f1 * b) // d for a, b in zip(obj1, row_r)]
        obj2 = [(piv * a - f2 * b) // d for a, b in zip(obj2, row_r)]
        d = piv
        basis[r] = c

    def run_phase(obj_row_getter, allowed_cols) -> None:
        nonlocal d
        for _ in range(_PIVOT_CAP):
            obj = obj_row_getter()
            enter = -1
            for j in allowed_cols:
                if obj[j] < 0:
                    enter = j
                    break
            if enter < 0:
                return
            best = -1
            bnum = bden = 0
            for i, row in enumerate(M):
                a = row[enter]
                if a > 0:
                    num, den = row[rhs], a
                    if best < 0 or num * bden < bnum * den or (
                        num * bden == bnum * den and basis[i] < basis[best]
                    ):
                        best, bnum, bden = i, num, den
            if best < 0:
                raise Unbounded("improving direction is unbounded")
            pivot(best, enter)
        raise IterationLimit("simplex pivot cap exceeded")

    if na:
        run_phase(lambda: obj1, range(nv + m))
        infeas = sum(
            (Fraction(M[i][rhs], d) for i in range(m) if basis[i] in banned),
            Fraction(0),
        )
        if infeas > 0:
            raise Infeasible("phase-1 optimum positive")
        # drive leftover zero-valued artificials out of the basis
        for i in range(m):
            if basis[i] in banned:
                piv_col = -1
                for j in range(nv + m):
                    if M[i][j] != 0:
                        piv_col = j
                        break
                if piv_col >= 0:
                    pivot(i, piv_col)
        keep = [i for i in range(m) if basis[i] not in banned]
        M = [M[i][: nv + m] + [M[i][rhs]] for i in keep]
        basis = [basis[i] for i in keep]
        obj2 = obj2[: nv + m] + [obj2[rhs]]
        rhs = nv + m

    run_phase(lambda: obj2, range(nv + m))

    values = dict(zip(names, shift))
    for i, row in enumerate(M):
        if basis[i] < nv:
            if row[basis[i]] != d:
                raise AssertionError("tableau scale invariant broken")
            values[names[basis[i]]] = Fraction(row[rhs], d) + shift[basis[i]]
    objective = sum(
        (model.objective.get(n, Fraction(0)) * values[n] for n in names),
        Fraction(0),
    )
    return FractionalSolution(values, objective)


def solve_cutting_plane(model: LpModel, cut_limit: Optional[int] = None) -> FractionalSolution:
    """Solve a cut-family LP: alternate explicit solves and separation.

    Terminates when the separation hook reports no violated constraint; the
    result then equals the optimum over the full (exponential) row family.
    """
    if model.separation is None:
        return solve_simplex(model)
    limit = cut_limit if cut_limit is not None else model.cut_limit
    seen = {model.row_key(c, r) for c, r in model.rows}
    added = 0
    while True:
        sol = solve_simplex(model)
        new_rows = model.separation(sol.values)
        fresh = []
        for coeffs, rhs in new_rows:
            key = model.row_key(coeffs, rhs)
            if key not in seen:
                seen.add(key)
                fresh.append((coeffs, rhs))
        if not fresh:
            return sol
        for coeffs, rhs in fresh:
            model.add_ge(coeffs, rhs)
        added += len(fresh)
        if limit is not None and added > limit:
            raise IterationLimit(f"cut budget {limit} exceeded")


# ---------------------------------------------------------------------------
# exact max-flow / min-cut


def maxflow_directed(n: int, arcs: dict, s: int, t: int):
    """Edmonds-Karp max flow on arc capacities; returns (value, source side).

    Capacities may be ints or Fractions; arithmetic stays exact.  The
    returned set is the residual-reachable side of a minimum cut.
    """
    res = {}
    adj = [set() for _ in range(n)]
    for (u, v), c in arcs.items():
        if c <= 0 or u == v:
            continue
        adj[u].add(v)
        adj[v].add(u)
        res[(u, v)] = res.get((u, v), 0) + c
        res.setdefault((v, u), 0)
    adj = [sorted(a) for a in adj]
    flow = 0
    if s == t:
        return flow, {s}
    while True:
        parent = {s: s}
        queue = deque([s])
        while queue and t not in parent:
            u = queue.popleft()
            for v in adj[u]:
                if v not in parent and res.get((u, v), 0) > 0:
                    parent[v] = u
                    queue.append(v)
        if t not in parent:
            break
        bottleneck = None
        v = t
        while v != s:
            u = parent[v]
            c = res[(u, v)]
            bottleneck = c if bottleneck is None else min(bottleneck, c)
            v = u
        v = t
        while v != s:
            u = parent[v]
            res[(u, v)] -= bottleneck
            res[(v, u)] = res.get((v, u), 0) + bottleneck
            v = u
        flow = flow + bottleneck
    reach = {s}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in reach and res.get((u, v), 0) > 0:
                reach.add(v)
                queue.append(v)
    return flow, reach


def maxflow_undirected(n: int, edges: dict, s: int, t: int):
    """Max flow where each undirected edge may carry its capacity either way."""
    arcs = {}
    for (u, v), c in edges.items():
        if c <= 0:
            continue
        arcs[(u, v)] = arcs.get((u, v), 0) + c
        arcs[(v, u)] = arcs.get((v, u), 0) + c
    return maxflow_directed(n, arcs, s, t)


def separation_mincut(edge_values: dict, zvalue: Fraction, n: int, root: int, v: int):
    """Violated cut for node ``v``: S with v in S, root not in S and
    undirected capacity below ``zvalue``; ``None`` if the demand is met."""
    flow, reach = maxflow_undirected(n, edge_values, v, root)
    if flow >= zvalue:
        return None
    return frozenset(reach)


# ---------------------------------------------------------------------------
# LP builders


def _edge_var(i: int, u: int, v: int) -> str:
    return f"x{i}_{u}_{v}" if u < v else f"x{i}_{v}_{u}"


def _finite_edges(weights: Weights, nodes) -> list:
    keep = set(nodes)
    return [
        ((u, v), w)
        for (u, v), w in weights.items()
        if u in keep and v in keep
    ]


def _layer_separation(i: int, nodes: list, root: int, edges: list):
    """Separation closure for one layer's cut family."""

    node_list = sorted(set(nodes) | {root})
    pos = {v: j for j, v in enumerate(node_list)}

    def separate(values: dict) -> list:
        rows = []
        caps = {}
        for (u, v), _w in edges:
            val = values.get(_edge_var(i, u, v), Fraction(0))
            if val > 0:
                caps[(pos[u], pos[v])] = val
        for v in node_list:
            if v == root:
                continue
            zname = f"zl{i}_{v}"
            zval = values.get(zname, Fraction(0))
            if zval <= 0:
                continue
            cut = separation_mincut(caps, zval, len(node_list), pos[root], pos[v])
            if cut is None:
                continue
            side = {node_list[j] for j in cut}
            coeffs = {}
            for (a, b), _w in edges:
                if (a in side) != (b in side):
                    coeffs[_edge_var(i, a, b)] = Fraction(1)
            coeffs[zname] = coeffs.get(zname, Fraction(0)) - 1
            rows.append((coeffs, Fraction(0)))
        return rows

    return separate


def all_cut_rows(i: int, nodes: list, root: int, edges: list, terminals) -> list:
    """Every (v, S) cut row of one layer, fully enumerated (test oracle)."""
    import itertools

    others = sorted(set(nodes) - {root})
    terminals = set(terminals)
    rows = []
    for size in range(1, len(others) + 1):
        for subset in itertools.combinations(others, size):
            side = set(subset)
            coeffs = {}
            for (a, b), _w in edges:
                if (a in side) != (b in side):
                    coeffs[_edge_var(i, a, b)] = Fraction(1)
            for v in subset:
                if v not in terminals:
                    continue
                row = dict(coeffs)
                row[f"zl{i}_{v}"] = row.get(f"zl{i}_{v}", Fraction(0)) - 1
                rows.append((row, Fraction(0)))
    return rows


def _seed_singleton_cuts(model: LpModel, i: int, root: int, edges: list, terminals):
    for v in sorted(terminals):
        if v == root:
            continue
        coeffs = {}
        for (a, b), _w in edges:
            if v in (a, b):
                coeffs[_edge_var(i, a, b)] = Fraction(1)
        coeffs[f"zl{i}_{v}"] = coeffs.get(f"zl{i}_{v}", Fraction(0)) - 1
        model.add_ge(coeffs, 0)


def _build_kst(weights: Weights, terminals, allowed, root: int, k: int, i: int = 0) -> LpModel:
    allowed = sorted(set(allowed) | {root})
    terminals = sorted(set(terminals) - {root})
    if root is None or not 0 <= root < weights.size:
        raise BadParams("root missing for rooted relaxation")
    if not set(terminals) <= set(allowed):
        raise BadParams("terminals must be allowed nodes")
    if not 0 <= k <= len(terminals):
        raise BadParams(f"k={k} out of range")
    model = LpModel()
    edges = _finite_edges(weights, allowed)
    for (u, v), w in edges:
        model.add_var(_edge_var(i, u, v), obj=w)
    for v in terminals:
        model.add_var(f"zl{i}_{v}", ub=1)
    model.add_ge({f"zl{i}_{v}": 1 for v in terminals}, k)
    _seed_singleton_cuts(model, i, root, edges, terminals)
    model.separation = _layer_separation(i, allowed, root, edges)
    model.cut_limit = 10 * (1 << weights.size)
    model.meta = {
        "kind": "kst",
        "edges": {0: [e for e, _ in edges]},
        "terminals": {0: terminals},
        "root": {0: root},
    }
    return model


def _reachable(weights: Weights, root: int) -> set:
    grid, _ = weights.to_grid()
    n = weights.size
    seen = {root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in range(n):
            if v not in seen and grid[u][v] != INF:
                seen.add(v)
                queue.append(v)
    return seen


def _build_ukmst(inst: MultiLayerGraphInstance, node_sets=None) -> LpModel:
    if not inst.rooted:
        raise BadParams("LP_ukMST needs a rooted instance")
    roots = inst.roots()
    model = LpModel()
    layer_edges = {}
    layer_terms = {}
    separations = []
    for i, layer in enumerate(inst.layers):
        nodes = set(node_sets[i]) if node_sets is not None else _reachable(
            layer.weights, layer.root
        )
        nodes.add(layer.root)
        edges = _finite_edges(layer.weights, nodes)
        terms = sorted(nodes - roots)
        layer_edges[i] = [e for e, _ in edges]
        layer_terms[i] = terms
        for (u, v), w in edges:
            model.add_var(_edge_var(i, u, v), obj=w)
        for v in terms:
            model.add_var(f"zl{i}_{v}")
        separations.append(_layer_separation(i, sorted(nodes), layer.root, edges))
    globals_ = sorted({v for terms in layer_terms.values() for v in terms})
    for v in globals_:
        model.add_var(f"z_{v}", ub=1)
    for v in globals_:
        coeffs = {f"zl{i}_{v}": Fraction(1) for i in range(inst.h) if v in set(layer_terms[i])}
        coeffs[f"z_{v}"] = Fraction(-1)
        model.add_ge(coeffs, 0)
    model.add_ge({f"z_{v}": 1 for v in globals_}, inst.k)
    for i in range(inst.h):
        edges = [(e, None) for e in layer_edges[i]]
        _seed_singleton_cuts(model, i, inst.layers[i].root, edges, layer_terms[i])

    def separate(values: dict) -> list:
        rows = []
        for sep in separations:
            rows.extend(sep(values))
        return rows

    model.separation = separate
    model.cut_limit = 10 * (1 << inst.n)
    model.meta = {
        "kind": "ukmst",
        "edges": layer_edges,
        "terminals": layer_terms,
        "root": {i: inst.layers[i].root for i in range(inst.h)},
    }
    return model


def _build_kmfl(sets, clients, k: int, i: int = 0, extra=None) -> LpModel:
    clients = sorted(clients)
    if not 0 <= k <= len(clients):
        raise BadParams(f"k={k} out of range")
    model = LpModel()
    for f, s in enumerate(sets):
        model.add_var(f"y{i}_{f}", obj=s.open_cost)
    for f, s in enumerate(sets):
        for c in clients:
            w = s.conn_cost(c)
            if w != INF:
                model.add_var(f"x{i}_{c}_{f}", obj=w)
    for c in clients:
        model.add_var(f"zc{i}_{c}", ub=1, obj=(extra or {}).get(c, 0))
    for f, s in enumerate(sets):
        for c in clients:
            if s.conn_cost(c) != INF:
                model.add_ge({f"y{i}_{f}": 1, f"x{i}_{c}_{f}": -1}, 0)
    for c in clients:
        coeffs = {
            f"x{i}_{c}_{f}": Fraction(1)
            for f, s in enumerate(sets)
            if s.conn_cost(c) != INF
        }
        coeffs[f"zc{i}_{c}"] = Fraction(-1)
        model.add_ge(coeffs, 0)
    model.add_ge({f"zc{i}_{c}": 1 for c in clients}, k)
    model.meta = {"kind": "kmfl", "clients": clients, "nsets": {0: len(sets)}}
    return model


def _build_ukmfl(inst: CoverInstance, facility_sets=None) -> LpModel:
    clients = sorted(inst.clients)
    model = LpModel()
    layer_fac = {}
    for i, sets in enumerate(inst.layers):
        fac = sorted(facility_sets[i]) if facility_sets is not None else list(
            range(len(sets))
        )
        layer_fac[i] = fac
        for f in fac:
            model.add_var(f"y{i}_{f}", obj=sets[f].open_cost)
        for f in fac:
            for c in clients:
                w = sets[f].conn_cost(c)
                if w != INF:
                    model.add_var(f"x{i}_{c}_{f}", obj=w)
        for c in clients:
            model.add_var(f"zc{i}_{c}")
    for c in clients:
        model.add_var(f"z_{c}", ub=1, obj=inst.extra(c))
    for i, sets in enumerate(inst.layers):
        for f in layer_fac[i]:
            for c in clients:
                if sets[f].conn_cost(c) != INF:
                    model.add_ge({f"y{i}_{f}": 1, f"x{i}_{c}_{f}": -1}, 0)
        for c in clients:
            coeffs = {
                f"x{i}_{c}_{f}": Fraction(1)
                for f in layer_fac[i]
                if sets[f].conn_cost(c) != INF
            }
            coeffs[f"zc{i}_{c}"] = Fraction(-1)
            model.add_ge(coeffs, 0)
    for c in clients:
        coeffs = {f"zc{i}_{c}": Fraction(1) for i in range(inst.h)}
        coeffs[f"z_{c}"] = Fraction(-1)
        model.add_ge(coeffs, 0)
    model.add_ge({f"z_{c}": 1 for c in clients}, inst.k)
    model.meta = {"kind": "ukmfl", "clients": clients, "facilities": layer_fac}
    return model


def build_lp(kind: str, instance, params: Optional[dict] = None) -> LpModel:
    """Build one of the five relaxations.

    kind: ``kst`` | ``kmst`` | ``ukmst`` | ``kmfl`` | ``ukmfl``.  ``params``
    supplies W / r / k for the single-layer kinds and optional pre-filtered
    node or facility sets for the union kinds.
    """
    params = params or {}
    if kind == "kst":
        return _build_kst(
            instance,
            params["terminals"],
            params["allowed"],
            params["root"],
            params["k"],
        )
    if kind == "kmst":
        w: Weights = instance
        root = params["root"]
        allowed = params.get("allowed", range(w.size))
        return _build_kst(w, set(allowed) - {root}, allowed, root, params["k"])
    if kind == "ukmst":
        return _build_ukmst(instance, params.get("node_sets"))
    if kind == "kmfl":
        return _build_kmfl(
            params["sets"],
            params["clients"],
            params["k"],
            extra=params.get("extra"),
        )
    if kind == "ukmfl":
        return _build_ukmfl(instance, params.get("facility_sets"))
    raise BadParams(f"unknown LP kind {kind!r}")


# ---------------------------------------------------------------------------
# splitting off


def _scaled_caps(x: dict) -> tuple[dict, int]:
    den = math.lcm(1, *(frac(v).denominator for v in x.values()))
    return (
        {e: frac(v).numerator * (den // frac(v).denominator) for e, v in x.items()},
        den,
    )


def splitting_off(
    x: dict,
    z: dict,
    weights: Weights,
    terminals,
    root: int,
    step_budget: int = 100_000,
) -> dict:
    """Eliminate non-terminal nodes from a fractional tree solution.

    ``x`` maps undirected edges to capacities feasible for the cut family of
    the terminals' demands ``z``; ``weights`` must be metric.  The result is
    a capacity reservation on terminal/root pairs that still routes ``z_v``
    from every terminal ``v`` to ``root``, at no more than twice the cost.

    Each elimination step bidirects the capacities (Eulerian), then shifts
    capacity from the lexicographically first in/out arc pair at the lowest
    busy non-terminal whose shift provably preserves every terminal's
    max-flow to the root (such a pair always exists for Eulerian capacities).
    """
    terminals = set(terminals)
    if not weights.is_metric():
        raise NotMetric("splitting off requires a metric")
    n = weights.size
    caps, den = _scaled_caps({k: v for k, v in x.items() if frac(v) > 0})
    demands = {v: frac(zv) for v, zv in z.items() if frac(zv) > 0 and v in terminals}

    def flows_ok(arcs: dict) -> bool:
        for v, zv in demands.items():
            flow, _ = maxflow_directed(n, arcs, v, root)
            if Fraction(flow, den) < zv:
                return False
        return True

    alpha = {}
    for (u, v), c in caps.items():
        if c > 0:
            alpha[(u, v)] = alpha.get((u, v), 0) + c
            alpha[(v, u)] = alpha.get((v, u), 0) + c
    if not flows_ok(alpha):
        raise InfeasibleInput("a demand exceeds its max-flow in x")

    nonterminals = [v for v in range(n) if v not in terminals and v != root]
    steps = 0
    while True:
        busy = None
        for v in nonterminals:
            if any(
                c > 0 and v in (a, b) for (a, b), c in alpha.items()
            ):
                busy = v
                break
        if busy is None:
            break
        v = busy
        ins = sorted(u for (u, t), c in alpha.items() if t == v and c > 0)
        outs = sorted(t for (u, t), c in alpha.items() if u == v and c > 0)
        done = False
        for u in ins:
            for t in outs:
                delta = min(alpha[(u, v)], alpha[(v, t)])
                trial = dict(alpha)
                trial[(u, v)] -= delta
                trial[(v, t)] -= delta
                if u != t:
                    trial[(u, t)] = trial.get((u, t), 0) + delta
                if flows_ok(trial):
                    alpha = {e: c for e, c in trial.items() if c > 0}
                    done = True
                    break
            if done:
                break
        if not done:
            raise AssertionError("no flow-preserving split found (not Eulerian?)")
        steps += 1
        if steps > step_budget:
            raise IterationLimit("splitting-off step budget exceeded")

    merged = {}
    for (u, v), c in alpha.items():
        if c <= 0:
            continue
        key = (u, v) if u < v else (v, u)
        merged[key] = merged.get(key, 0) + c
    return {e: Fraction(c, 2 * den) for e, c in merged.items() if c > 0}
