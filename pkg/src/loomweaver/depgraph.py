"""Dependence graph IR: coarse producer/consumer edges between computes and
per-compute distance/direction vectors, plus a brute-force oracle."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .affine import AffineExpr
from .frontend import After, Compute, Diagnostic, Function, Load, iter_loads


class CycleError(Exception):
    pass


@dataclass(frozen=True)
class SelfDep:
    distance: tuple[int, ...]
    known: bool
    array: str
    kind: str  # "flow", "anti", "output" or "reduction"
    load: Load | None = None  # the read side, None for reductions/output deps

    @property
    def direction(self) -> tuple[str, ...]:
        if not self.known:
            return tuple("*" for _ in self.distance)
        return tuple("<" if d > 0 else ">" if d < 0 else "=" for d in self.distance)

    def carried_level(self) -> int | None:
        """Outermost level with a nonzero distance (None if loop-independent)."""
        for k, d in enumerate(self.distance):
            if d != 0:
                return k
        return None

    def to_json(self) -> dict:
        return {"distance": list(self.distance) if self.known else None,
                "direction": list(self.direction), "array": self.array, "kind": self.kind}


@dataclass(frozen=True)
class NodeAttr:
    self_deps: tuple[SelfDep, ...]
    reduction_dims: frozenset[int]


@dataclass(frozen=True)
class DepEdge:
    producer: str
    consumer: str
    array: str


@dataclass
class DepGraph:
    nodes: list[str]
    edges: list[DepEdge]
    attrs: dict[str, NodeAttr]
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def successors(self, n: str) -> list[str]:
        order = {m: k for k, m in enumerate(self.nodes)}
        return sorted({e.consumer for e in self.edges if e.producer == n}, key=order.__getitem__)

    def predecessors(self, n: str) -> list[str]:
        order = {m: k for k, m in enumerate(self.nodes)}
        return sorted({e.producer for e in self.edges if e.consumer == n}, key=order.__getitem__)


# ---------------------------------------------------------------------------
# Execution order of computes (declaration order adjusted by `after`)


def compute_statics(f: Function) -> dict[str, tuple[int, ...]]:
    """Static schedule coordinates of each compute over its original
    iterators, after applying every `after` directive in source order."""
    statics = {c.name: [k] + [0] * c.depth for k, c in enumerate(f.computes)}
    iters = {c.name: c.iter_names for c in f.computes}
    for d in f.directives:
        if not isinstance(d, After):
            continue
        n = -1 if d.level is None else iters[d.other].index(d.level)
        s1 = statics[d.compute]
        s2 = statics[d.other]
        s1[:n + 1] = s2[:n + 1]
        s1[n + 1] = s2[n + 1] + 1
        prefix, dims = s1[:n + 1], iters[d.compute][:n + 1]
        peers = [statics[m] for m in statics if m != d.compute
                 and statics[m][:n + 1] == prefix and iters[m][:n + 1] == dims]
        if any(p[n + 1] == s1[n + 1] for p in peers):
            s1[n + 1] = max(p[n + 1] for p in peers) + 1
    return {k: tuple(v) for k, v in statics.items()}


def instance_key(statics: Sequence[int], point: Sequence[int], width: int) -> tuple:
    """Global time tuple of one instance; shorter computes pad with a loop
    slot of -inf so they precede deeper siblings at the same statics."""
    out: list = [statics[0]]
    for v, c in zip(point, statics[1:]):
        out += [v, c]
    out += [-math.inf, 0] * (width - len(point))
    return tuple(out)


def compute_order(f: Function) -> list[str]:
    st = compute_statics(f)
    width = max((c.depth for c in f.computes), default=0)
    padded = {n: tuple(s) + (0,) * (width + 1 - len(s)) for n, s in st.items()}
    return sorted(padded, key=lambda n: (padded[n], [c.name for c in f.computes].index(n)))


# ---------------------------------------------------------------------------
# Coarse graph


def reads_of(c: Compute) -> set[str]:
    out = {ld.array for ld in iter_loads(c.rhs)}
    if c.op == "accumulate":
        out.add(c.dest)
    return out


def build_dep_graph(f: Function) -> DepGraph:
    order = compute_order(f)
    by_name = {c.name: c for c in f.computes}
    edges: list[DepEdge] = []
    diags: list[Diagnostic] = []
    last_writer: dict[str, str] = {}
    for name in order:
        c = by_name[name]
        for arr in sorted(reads_of(c)):
            p = last_writer.get(arr)
            if p is not None and p != name:
                edges.append(DepEdge(p, name, arr))
        if c.dest in last_writer and last_writer[c.dest] != name:
            diags.append(Diagnostic(
                f"computes '{last_writer[c.dest]}' and '{name}' both write '{c.dest}'; "
                f"later readers depend on '{name}' only", severity="warning"))
        last_writer[c.dest] = name
    decl = [c.name for c in f.computes]
    edges.sort(key=lambda e: (decl.index(e.producer), decl.index(e.consumer), e.array))
    attrs = {c.name: analyze_node(c) for c in f.computes}
    return DepGraph(decl, edges, attrs, diags)


def collect_paths(g: DepGraph) -> list[list[str]]:
    """All maximal source-to-sink paths, in declaration order of branches."""
    state: dict[str, int] = {}

    def check(n: str):
        state[n] = 1
        for m in g.successors(n):
            if state.get(m) == 1:
                raise CycleError(f"dependence cycle through '{n}' and '{m}'")
            if m not in state:
                check(m)
        state[n] = 2

    for n in g.nodes:
        if n not in state:
            check(n)
    paths: list[list[str]] = []

    def walk(path: list[str]):
        succ = g.successors(path[-1])
        if not succ:
            paths.append(list(path))
        for m in succ:
            walk(path + [m])

    for n in g.nodes:
        if not g.predecessors(n):
            walk([n])
    return paths


# ---------------------------------------------------------------------------
# Per-node analysis


def _solve_uniform(c: Compute, write: Sequence[AffineExpr], read: Sequence[AffineExpr]):
    """Distance d with W*d = w - r when each array dim names one iterator.

    Returns (distance, free levels) or None for "no dependence"; raises
    ValueError when the access pattern is outside the uniform case.
    """
    names = c.iter_names
    values: dict[str, int] = {}
    for w, r in zip(write, read):
        if w.terms != r.terms:
            raise ValueError("different linear parts")
        delta = w.const - r.const
        if not w.terms:
            if delta != 0:
                return None
            continue
        if len(w.terms) > 1:
            raise ValueError("coupled subscript")
        (n, a), = w.terms
        if delta % a:
            return None
        v = delta // a
        if values.setdefault(n, v) != v:
            return None
    extent = {v.name: v.extent for v in c.iters}
    if any(abs(v) >= extent[n] for n, v in values.items()):
        return None
    free = [k for k, n in enumerate(names) if n not in values]
    return [values.get(n, 0) for n in names], free


def _lex_sign(d: Sequence[int]) -> int:
    for v in d:
        if v:
            return 1 if v > 0 else -1
    return 0


def analyze_node(c: Compute) -> NodeAttr:
    depth = c.depth
    dest_names = set().union(*(e.names for e in c.dest_indices)) if c.dest_indices else set()
    reduction = frozenset(k for k, n in enumerate(c.iter_names) if n not in dest_names) \
        if c.op == "accumulate" else frozenset()
    deps: list[SelfDep] = []

    def add(dep: SelfDep):
        if dep not in deps:
            deps.append(dep)

    if reduction:
        d = [0] * depth
        d[max(reduction)] = 1
        add(SelfDep(tuple(d), True, c.dest, "reduction"))
    elif c.op == "assign":
        free = [k for k, n in enumerate(c.iter_names) if n not in dest_names]
        if free:
            d = [0] * depth
            d[max(free)] = 1
            add(SelfDep(tuple(d), True, c.dest, "output"))
    for ld in iter_loads(c.rhs):
        if ld.array != c.dest:
            continue
        try:
            sol = _solve_uniform(c, c.dest_indices, ld.indices)
        except ValueError:
            add(SelfDep((0,) * depth, False, c.dest, "flow", ld))
            continue
        if sol is None:
            continue
        d, free = sol
        kind = "flow"
        if _lex_sign(d) < 0:
            d = [-v for v in d]
            kind = "anti"
        if _lex_sign(d) == 0:
            if not free:
                continue
            d[max(free)] = 1
        add(SelfDep(tuple(d), True, c.dest, kind, ld))
    return NodeAttr(tuple(deps), reduction)


# ---------------------------------------------------------------------------
# Oracle


def clamped_ranges(c: Compute, clamp: int | Sequence[int]) -> list[range]:
    caps = [clamp] * c.depth if isinstance(clamp, int) else list(clamp)
    return [range(v.lower, v.lower + min(v.extent, cap)) for v, cap in zip(c.iters, caps)]


def accesses(c: Compute, point: Sequence[int]) -> tuple[tuple, list[tuple]]:
    """(written cell, read cells) of one instance."""
    env = dict(zip(c.iter_names, point))
    w = (c.dest,) + tuple(e.evaluate(env) for e in c.dest_indices)
    rs = [(ld.array,) + tuple(e.evaluate(env) for e in ld.indices) for ld in iter_loads(c.rhs)]
    if c.op == "accumulate":
        rs.append(w)
    return w, rs


def brute_force_dependences(c: Compute, clamp: int | Sequence[int] = 8) -> set[tuple[tuple, tuple]]:
    """Ordered (source, sink) instance pairs touching one cell, at least one
    of them writing it, sink later in lexicographic order."""
    ranges = clamped_ranges(c, clamp)
    if math.prod(len(r) for r in ranges) > 10 ** 6:
        raise ValueError("clamped domain too large for the oracle")
    touched: dict[tuple, list[tuple[tuple, bool]]] = {}
    for p in itertools.product(*ranges):
        w, rs = accesses(c, p)
        for cell in set(rs):
            touched.setdefault(cell, []).append((p, False))
        touched.setdefault(w, []).append((p, True))
    out: set[tuple[tuple, tuple]] = set()
    for acc in touched.values():
        for (p, pw), (q, qw) in itertools.combinations(acc, 2):
            if (pw or qw) and p != q:
                out.add((p, q))
    return out


def distance_set(pairs: Iterable[tuple[tuple, tuple]]) -> set[tuple[int, ...]]:
    return {tuple(b - a for a, b in zip(src, dst)) for src, dst in pairs}


def deps_json(g: DepGraph, f: Function) -> dict:
    depth = {c.name: c.depth for c in f.computes}
    try:
        paths = collect_paths(g)
    except CycleError:
        paths = []
    return {
        "nodes": [{"name": n, "depth": depth[n], "reductionDims": sorted(g.attrs[n].reduction_dims),
                   "selfDeps": [d.to_json() for d in g.attrs[n].self_deps]} for n in g.nodes],
        "edges": [{"from": e.producer, "to": e.consumer, "array": e.array} for e in g.edges],
        "paths": paths,
    }
