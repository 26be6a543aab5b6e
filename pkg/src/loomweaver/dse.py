"""Two-stage design-space exploration.

Stage 1 rewrites loop orders so that tight loop-carried dependences sit on
outer loops, splitting and re-fusing loop nests when statements disagree.
Stage 2 walks a parallelism ladder on the bottleneck node of the critical
path, one step at a time, under a resource budget.

Every schedule change is checked against a brute-force oracle that replays
all conflicting memory accesses on clamped domains.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .depgraph import DepEdge, DepGraph, accesses, build_dep_graph, clamped_ranges, collect_paths
from .frontend import Directive, Function, Interchange, Partition, Pipeline, Split, Unroll, format_directive
from .loopir import LoopIR
from .perfmodel import (DEFAULT_BUDGET, Estimate, PerfModel, Resources, array_memory, fraction_json,
                        parallelism, root_stmts)
from .pipeline import lower_program, schedule_program
from .polyhedral import PolyStmt, ScheduleMap, annotate, interchange, rename_dims, split


@dataclass
class DseConfig:
    max_stage1_iterations: int = 5
    ladder: tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    budget: Resources = DEFAULT_BUDGET
    reuse: bool = False
    allow_reassoc: bool | None = None  # None: enabled when any array is floating point
    costs: Mapping | None = None
    clamp: int = 8

    def __post_init__(self):
        if self.max_stage1_iterations < 1:
            raise ValueError("max_stage1_iterations must be >= 1")
        if list(self.ladder) != sorted(set(self.ladder)) or not self.ladder or self.ladder[0] < 1:
            raise ValueError("ladder must be strictly ascending positive integers")


@dataclass
class DseResult:
    stmts: list[PolyStmt]
    ir: LoopIR
    report: dict
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Legality oracle


def schedule_preserves(f: Function, before: Mapping[str, PolyStmt], after: Mapping[str, PolyStmt],
                       clamp: int = 8) -> bool:
    """True when ``after`` orders every pair of conflicting accesses (same
    cell, at least one write) like ``before`` and stays total, on domains
    clamped to ``clamp`` values per iterator."""
    wb = max((s.depth for s in before.values()), default=0)
    wa = max((s.depth for s in after.values()), default=0)
    cells: dict[tuple, list[tuple[tuple, tuple, bool]]] = {}
    seen: set[tuple] = set()
    for c in f.computes:
        sb, sa = before[c.name], after[c.name]
        for p in itertools.product(*clamped_ranges(c, clamp)):
            point = dict(zip(c.iter_names, p))
            tb, ta = sb.time(point, wb), sa.time(point, wa)
            if ta in seen:
                return False
            seen.add(ta)
            w, rs = accesses(c, p)
            for cell in set(rs) - {w}:
                cells.setdefault(cell, []).append((tb, ta, False))
            cells.setdefault(w, []).append((tb, ta, True))
    for acc in cells.values():
        if not any(x[2] for x in acc):
            continue
        acc.sort(key=lambda x: x[0])
        for k, (tb1, ta1, w1) in enumerate(acc):
            for tb2, ta2, w2 in acc[k + 1:]:
                if (w1 or w2) and tb1 != tb2 and not ta1 < ta2:
                    return False
    return True


# ---------------------------------------------------------------------------
# Dependence helpers


def _mapped(s: PolyStmt, g: DepGraph):
    """(dependence, distance vectors over current dims) for each self dependence."""
    out = []
    for dep in g.attrs[s.name].self_deps:
        if not dep.known:
            out.append((dep, None))
            continue
        out.append((dep, s.map_distance(dict(zip(s.compute.iter_names, dep.distance)))))
    return out


def tight_levels(s: PolyStmt, g: DepGraph) -> list[int]:
    """Levels carrying a dependence of distance 1 or 2 among the two
    innermost loops."""
    out: set[int] = set()
    for dep, vecs in _mapped(s, g):
        for v in vecs or ():
            for k, x in enumerate(v):
                if x:
                    if 1 <= abs(x) <= 2 and k >= s.depth - 2:
                        out.add(k)
                    break
    return sorted(out)


def proposal(s: PolyStmt, g: DepGraph) -> tuple[str, ...]:
    tight = tight_levels(s, g)
    front = [s.dims[k] for k in tight]
    return tuple(front + [d for d in s.dims if d not in front])


# ---------------------------------------------------------------------------
# Node bookkeeping


def node_name(names: Sequence[str]) -> str:
    return "+".join(names)


def _renumber(nodes: list[list[str]], stmts: dict[str, PolyStmt]) -> None:
    for k, group in enumerate(nodes):
        for n in group:
            st = stmts[n].schedule.statics
            if st[0] != k:
                stmts[n] = replace(stmts[n], schedule=ScheduleMap((k,) + st[1:], stmts[n].dims))


def _group(stmts: dict[str, PolyStmt], order: Sequence[str]) -> list[list[str]]:
    by: dict[int, list[str]] = {}
    for n in order:
        by.setdefault(stmts[n].schedule.statics[0], []).append(n)
    return [by[k] for k in sorted(by)]


def _fully_shared(names: Sequence[str], stmts: Mapping[str, PolyStmt]) -> bool:
    """All statements share every loop (same dims, same statics except the
    innermost one)."""
    first = stmts[names[0]]
    for n in names[1:]:
        s = stmts[n]
        if s.dims != first.dims or s.schedule.statics[:-1] != first.schedule.statics[:-1]:
            return False
    return True


def _box(s: PolyStmt) -> list[tuple[int, int]] | None:
    dom = s.domain.simplify()
    if any(len(c.terms) > 1 for c in dom.constraints):
        return None
    return [dom.dim_range(d) for d in s.dims]


# ---------------------------------------------------------------------------
# Stage 1


def stage1_transform(f: Function, stmts: dict[str, PolyStmt], g: DepGraph, cfg: DseConfig):
    stmts = dict(stmts)
    order = [c.name for c in f.computes]
    nodes = _group(stmts, order)
    trace: list[dict] = []

    def legal(new: dict[str, PolyStmt]) -> bool:
        return schedule_preserves(f, stmts, new, cfg.clamp)

    for _ in range(cfg.max_stage1_iterations):
        changed = False
        # (1)-(2) proposals, splitting nodes whose statements disagree
        new_nodes: list[list[str]] = []
        for group in nodes:
            props = {n: proposal(stmts[n], g) for n in group}
            perms = {n: tuple(stmts[n].dims.index(d) for d in props[n]) for n in group}
            moving = [n for n in group if perms[n] != tuple(range(stmts[n].depth))]
            if len(group) > 1 and moving and len(set(perms.values())) > 1:
                ordered = sorted(group, key=lambda n: (stmts[n].schedule.statics, stmts[n].order))
                trial = dict(stmts)
                pieces = [[n] for n in ordered]
                _renumber(new_nodes + pieces + _after(nodes, group), trial)
                if legal(trial):
                    stmts = trial
                    new_nodes.extend(pieces)
                    trace.append({"op": "split", "node": node_name(group), "into": [node_name(p) for p in pieces]})
                    changed = True
                    continue
            new_nodes.append(group)
        nodes = new_nodes
        _renumber(nodes, stmts)
        # (3) interchange towards each proposal
        for group in nodes:
            props = {n: proposal(stmts[n], g) for n in group}
            perms = {tuple(stmts[n].dims.index(d) for d in props[n]) for n in group}
            if len(perms) != 1:
                continue
            perm = perms.pop()
            if perm == tuple(range(len(perm))):
                continue
            trial = dict(stmts)
            steps = []
            for n in group:
                s = trial[n]
                want = props[n]
                for k, d in enumerate(want):
                    if s.dims[k] != d:
                        steps.append({"op": "interchange", "stmt": n, "dims": [s.dims[k], d]})
                        s = interchange(s, s.dims[k], d)
                trial[n] = s
            if legal(trial):
                stmts = trial
                trace.extend(steps)
                changed = True
        # (4) conservative fusion of adjacent nodes
        k = 0
        while k + 1 < len(nodes):
            a, b = nodes[k], nodes[k + 1]
            fused = _try_fuse(a, b, stmts, g)
            if fused is not None:
                trial = dict(stmts)
                trial.update(fused)
                merged = nodes[:k] + [a + b] + nodes[k + 2:]
                _renumber(merged, trial)
                if legal(trial) and not _conflicts(a + b, trial, g):
                    stmts = trial
                    trace.append({"op": "fuse", "nodes": [node_name(a), node_name(b)], "into": node_name(a + b)})
                    nodes = merged
                    changed = True
                    continue
            k += 1
        if not changed:
            break
        if not any(tight_levels(stmts[n], g) and max(tight_levels(stmts[n], g)) >= stmts[n].depth - 1
                   for grp in nodes for n in grp):
            break
    return stmts, nodes, trace


def _after(nodes: list[list[str]], group: list[str]) -> list[list[str]]:
    return nodes[nodes.index(group) + 1:]


def _conflicts(group: Sequence[str], stmts: Mapping[str, PolyStmt], g: DepGraph) -> bool:
    perms = {tuple(stmts[n].dims.index(d) for d in proposal(stmts[n], g)) for n in group}
    return len(perms) > 1


def _try_fuse(a: list[str], b: list[str], stmts: Mapping[str, PolyStmt], g: DepGraph):
    if not _fully_shared(a, stmts) or not _fully_shared(b, stmts):
        return None
    lead, other = stmts[a[0]], stmts[b[0]]
    if lead.depth != other.depth or lead.depth == 0:
        return None
    box_a, box_b = _box(lead), _box(other)
    if box_a is None or box_a != box_b:
        return None
    mapping = dict(zip(other.dims, lead.dims))
    top = max(stmts[n].schedule.statics[-1] for n in a)
    out = {}
    for n in b:
        s = rename_dims(stmts[n], mapping)
        st = lead.schedule.statics[:-1] + (top + 1 + s.schedule.statics[-1],)
        out[n] = replace(s, schedule=ScheduleMap(st, s.dims))
    return out


# ---------------------------------------------------------------------------
# Stage 2


@dataclass
class _Candidate:
    stmts: dict[str, PolyStmt]
    directives: list[Directive]
    tiles: list[int]
    partitions: dict[tuple[str, int], int]


def _fresh_name(base: str, used: set[str]) -> str:
    name = base
    while name in used:
        name += "_"
    used.add(name)
    return name


def unrollable_dims(names: Sequence[str], stmts: Mapping[str, PolyStmt], g: DepGraph, reassoc: bool) -> list[str]:
    """Innermost loops of a fully shared node carrying no dependence
    (reductions too when reassociation is allowed)."""
    lead = stmts[names[0]]
    ok: list[str] = []
    for k in range(lead.depth - 1, -1, -1):
        free = True
        for n in names:
            for dep, vecs in _mapped(stmts[n], g):
                if vecs is None:
                    free = False
                    continue
                if any(v[k] for v in vecs) and not (reassoc and dep.kind == "reduction"):
                    free = False
        if not free:
            break
        ok.append(lead.dims[k])
    return ok


def distribute(p: int, dims: Sequence[str], trips: Mapping[str, int]) -> dict[str, int]:
    """Spread a parallelism degree over dims, innermost first, using
    factors that divide both the trip count and what is left of ``p``."""
    out = {}
    rem = p
    for d in dims:
        f = math.gcd(trips[d], rem)
        out[d] = f
        rem //= f
    return out


def build_candidate(f: Function, names: Sequence[str], base: Mapping[str, PolyStmt], g: DepGraph,
                    p: int, reassoc: bool, used: set[str]) -> _Candidate:
    stmts = {n: base[n] for n in names}
    directives: list[Directive] = []
    partitions: dict[tuple[str, int], int] = {}
    if not _fully_shared(names, base):
        for n in names:
            s = stmts[n]
            if s.depth:
                stmts[n] = annotate(s, "pipeline", s.dims[-1], 1)
                directives.append(Pipeline(n, s.dims[-1], 1))
        return _Candidate(stmts, directives, [], partitions)
    lead = base[names[0]]
    trips = {d: hi - lo + 1 for d, (lo, hi) in zip(lead.dims, (lead.domain.dim_range(d) for d in lead.dims))}
    udims = unrollable_dims(names, base, g, reassoc)
    factors = distribute(p, udims, trips)
    outer: list[str] = []
    inner: list[str] = []
    splits: dict[str, tuple[str, str]] = {}
    for d in lead.dims:
        fct = factors.get(d, 1)
        if fct <= 1:
            outer.append(d)
        elif fct >= trips[d]:
            inner.append(d)
        else:
            o, i = _fresh_name(f"{d}0", used), _fresh_name(f"{d}1", used)
            splits[d] = (o, i)
            outer.append(o)
            inner.append(i)
    target = outer + inner
    for n in names:
        s = stmts[n]
        for d, (o, i) in splits.items():
            s = split(s, d, factors[d], o, i)
            directives.append(Split(n, d, factors[d], o, i))
        for k, d in enumerate(target):
            if s.dims[k] != d:
                directives.append(Interchange(n, s.dims[k], d))
                s = interchange(s, s.dims[k], d)
        if outer:
            s = annotate(s, "pipeline", outer[-1], 1)
            directives.append(Pipeline(n, outer[-1], 1))
        for d in inner:
            lo, hi = s.domain.dim_range(d)
            s = annotate(s, "unroll", d, hi - lo + 1)
            directives.append(Unroll(n, d, hi - lo + 1))
        stmts[n] = s
        c = s.compute
        sub = base[n].subst
        accs = [(c.dest, c.dest_indices)] + [(ld.array, ld.indices) for ld in _loads(c)]
        for arr, idx in accs:
            for k, e in enumerate(idx):
                e = e.substitute(sub)
                if len(e.terms) == 1:
                    (it, coef), = e.terms
                    fct = factors.get(it, 1)
                    if fct > 1:
                        key = (arr, k + 1)
                        partitions[key] = max(partitions.get(key, 1), fct * abs(coef))
    tiles = [factors.get(d, 1) for d in lead.dims]
    return _Candidate(stmts, directives, tiles, partitions)


def _loads(c):
    from .frontend import iter_loads
    return list(iter_loads(c.rhs))


def _partition_directives(f: Function, parts: Mapping[tuple[str, int], int]) -> list[Partition]:
    out = []
    for p in f.placeholders:
        facs = [min(parts.get((p.name, k + 1), 1), p.shape[k]) for k in range(p.rank)]
        if any(x > 1 for x in facs):
            out.append(Partition(p.name, tuple(facs), "cyclic"))
    return out


class _Evaluator:
    def __init__(self, f: Function, g: DepGraph, cfg: DseConfig, nodes: list[list[str]]):
        self.f, self.g, self.cfg, self.nodes = f, g, cfg, nodes
        self.model = PerfModel({p.name: p.dtype for p in f.placeholders}, g.attrs, cfg.costs)
        names = [node_name(n) for n in nodes]
        members = {node_name(n): set(n) for n in nodes}
        edges = []
        for a, b in itertools.combinations(names, 2):
            if any(e.producer in members[a] and e.consumer in members[b] for e in g.edges):
                edges.append(DepEdge(a, b, ""))
        self.node_graph = DepGraph(names, edges, {})
        self.paths = collect_paths(self.node_graph)

    def evaluate(self, cands: Mapping[str, _Candidate]):
        stmts = []
        parts: dict[tuple[str, int], int] = {}
        for grp in self.nodes:
            c = cands[node_name(grp)]
            stmts.extend(c.stmts[n] for n in grp)
            for k, v in c.partitions.items():
                parts[k] = max(parts.get(k, 1), v)
        part_dirs = _partition_directives(self.f, parts)
        ir = lower_program(self.f, stmts, part_dirs)
        per_node: dict[str, Estimate] = {node_name(n): Estimate(0, Resources()) for n in self.nodes}
        owner = {n: node_name(grp) for grp in self.nodes for n in grp}
        for r in ir.roots:
            est = self.model.estimate_nodes([r])
            key = owner[sorted(root_stmts(r))[0]]
            cur = per_node[key]
            ii = dict(cur.ii)
            ii.update(est.ii)
            per_node[key] = Estimate(cur.latency + est.latency, cur.resources + est.resources, ii)
        total = Resources()
        for e in per_node.values():
            total = total + e.resources
        if self.cfg.reuse and per_node:
            total = Resources(max(e.resources.dsp for e in per_node.values()), total.lut, total.ff, total.bram)
        total = total + array_memory(ir)
        lat = max((sum(per_node[n].latency for n in path) for path in self.paths), default=0)
        return ir, stmts, per_node, Estimate(lat, total), part_dirs

    def bottleneck(self, per_node: Mapping[str, Estimate], opt: Sequence[str]) -> str | None:
        decl = [node_name(n) for n in self.nodes]
        ranked = sorted(self.paths, key=lambda p: (-sum(per_node[n].latency for n in p), decl.index(p[0])))
        for path in ranked:
            live = [n for n in path if n in opt]
            if live:
                return max(live, key=lambda n: (per_node[n].latency, -decl.index(n)))
        return None


def stage2_optimize(f: Function, stmts: Mapping[str, PolyStmt], nodes: list[list[str]], g: DepGraph,
                    cfg: DseConfig):
    reassoc = cfg.allow_reassoc
    if reassoc is None:
        reassoc = any(p.dtype.is_float for p in f.placeholders)
    used = {v.name for v in f.iters} | {d for s in stmts.values() for d in s.dims} \
        | {p.name for p in f.placeholders} | {c.name for c in f.computes}
    ev = _Evaluator(f, g, cfg, nodes)
    names = [node_name(n) for n in nodes]
    members = {node_name(n): n for n in nodes}
    current = {n: _Candidate({m: stmts[m] for m in members[n]}, [], [], {}) for n in names}
    level = {n: -1 for n in names}
    ir, flat, per_node, total, parts = ev.evaluate(current)
    steps: list[dict] = []
    opt = list(names)
    while opt:
        node = ev.bottleneck(per_node, opt)
        if node is None:
            break
        nxt = level[node] + 1
        if nxt >= len(cfg.ladder):
            opt.remove(node)
            continue
        cand = build_candidate(f, members[node], {m: stmts[m] for m in members[node]}, g,
                               cfg.ladder[nxt], reassoc, set(used))
        record = {"node": node, "parallelism": cfg.ladder[nxt],
                  "directives": [format_directive(d) for d in cand.directives], "accepted": False}
        prev_tiles = math.prod(current[node].tiles) if level[node] >= 0 else None
        if prev_tiles is not None and math.prod(cand.tiles or [1]) <= prev_tiles:
            record["reason"] = "maximum parallelism reached"
            steps.append(record)
            opt.remove(node)
            continue
        trial = dict(current)
        trial[node] = cand
        before = {m: s for c in current.values() for m, s in c.stmts.items()}
        after = {m: s for c in trial.values() for m, s in c.stmts.items()}
        if not schedule_preserves(f, before, after, cfg.clamp):
            record["reason"] = "illegal schedule"
            steps.append(record)
            opt.remove(node)
            continue
        t_ir, t_flat, t_per, t_total, t_parts = ev.evaluate(trial)
        record["estimate"] = {"node": node, "nodeLatency": t_per[node].latency, "latency": t_total.latency,
                              "resources": t_total.resources.to_json(), "ii": dict(t_per[node].ii)}
        if not t_total.resources.fits(cfg.budget):
            record["reason"] = "over budget"
        elif t_per[node].latency >= per_node[node].latency:
            record["reason"] = "no latency reduction"
        else:
            record["accepted"] = True
            record["previousNodeLatency"] = per_node[node].latency
            current, level[node] = trial, nxt
            ir, flat, per_node, total, parts = t_ir, t_flat, t_per, t_total, t_parts
        steps.append(record)
        if not record["accepted"]:
            opt.remove(node)
    final = {"latency": total.latency, "resources": total.resources.to_json(), "nodes": {},
             "tiles": {}, "ii": {}, "parallelism": {}}
    for n in names:
        c = current[n]
        lead = stmts[members[n][0]]
        tiles = c.tiles or [1] * lead.depth
        ii = max(per_node[n].ii.values(), default=None)
        final["tiles"][n] = tiles
        final["ii"][n] = ii
        final["parallelism"][n] = fraction_json(parallelism(tiles, ii)) if ii else None
        final["nodes"][n] = {"latency": per_node[n].latency, "resources": per_node[n].resources.to_json(),
                             "directives": [format_directive(d) for d in c.directives]}
    final["partitions"] = [format_directive(p) for p in parts]
    return flat, ir, steps, final


def auto_dse(f: Function, cfg: DseConfig | None = None, g: DepGraph | None = None) -> DseResult:
    cfg = cfg or DseConfig()
    g = g or build_dep_graph(f)
    base = {s.name: s for s in schedule_program(f, hardware=False)}
    if not base:
        ir = lower_program(f, [])
        return DseResult([], ir, {"stage1Trace": [], "steps": [], "final": None})
    stmts, nodes, trace = stage1_transform(f, base, g, cfg)
    flat, ir, steps, final = stage2_optimize(f, stmts, nodes, g, cfg)
    report = {"stage1Trace": trace, "steps": steps, "final": final,
              "budget": cfg.budget.to_json(), "nodes": [node_name(n) for n in nodes]}
    return DseResult(flat, ir, report)
