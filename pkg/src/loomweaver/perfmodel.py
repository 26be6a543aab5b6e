"""Analytical latency/resource model over loop IR.

Pipelined loops cost ``(N - 1) * II + D`` where N counts the flattened
iterations of the loop and everything inside it (unrolled loops collapse),
D is the deepest statement underneath, and II is raised by loop-carried
recurrences to ``ceil(D_dep / delta)``. Sequential loops multiply their body
latency by their trip count. Resources are per statement copy times the
unroll replication around it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .affine import bound_interval
from .depgraph import DepGraph, NodeAttr, SelfDep
from .frontend import BinOp, Compute, DataType, Expr, Load, Neg
from .loopir import IfNode_, LoopIR, LoopNode, Node, StmtNode, statements
from .semantics import common_type, expr_type


@dataclass(frozen=True)
class OpCost:
    latency: int
    dsp: int = 0
    lut: int = 0
    ff: int = 0


DEFAULT_COSTS: dict[str, OpCost] = {
    "f32.add": OpCost(4, 2, 214, 227),
    "f32.mul": OpCost(3, 3, 135, 128),
    "f32.div": OpCost(16, 0, 800, 1400),
    "f64.add": OpCost(5, 3, 708, 682),
    "f64.mul": OpCost(4, 11, 203, 320),
    "f64.div": OpCost(16, 0, 3100, 3200),
    "int.add": OpCost(1, 0, 32, 32),
    "int.mul": OpCost(3, 3, 20, 40),
    "int.div": OpCost(16, 0, 400, 500),
}

BRAM_BITS = 18432


@dataclass(frozen=True)
class Resources:
    dsp: int = 0
    lut: int = 0
    ff: int = 0
    bram: int = 0

    def __add__(self, o: "Resources") -> "Resources":
        return Resources(self.dsp + o.dsp, self.lut + o.lut, self.ff + o.ff, self.bram + o.bram)

    def scale(self, k: int) -> "Resources":
        return Resources(self.dsp * k, self.lut * k, self.ff * k, self.bram * k)

    def fits(self, budget: "Resources") -> bool:
        return all(getattr(self, f.name) <= getattr(budget, f.name) for f in fields(self))

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_BUDGET = Resources(dsp=220, lut=53200, ff=106400, bram=280)


@dataclass
class Estimate:
    latency: int
    resources: Resources
    ii: dict[str, int] = field(default_factory=dict)
    parallelism: Fraction | None = None

    def to_json(self) -> dict:
        out = {"latency": self.latency, "resources": self.resources.to_json(), "ii": dict(self.ii)}
        if self.parallelism is not None:
            out["parallelism"] = fraction_json(self.parallelism)
        return out


def fraction_json(x: Fraction):
    return int(x) if x.denominator == 1 else float(x)


def parallelism(tiles: Sequence[int], ii: int) -> Fraction:
    if ii < 1:
        raise ValueError("achieved II must be >= 1")
    return Fraction(math.prod(tiles), ii)


# ---------------------------------------------------------------------------
# Configuration


def load_config(path: str | Path) -> tuple[dict[str, OpCost], dict[str, int]]:
    """Read ``key = value`` lines: ``f32.add.latency = 5``,
    ``int.mul.dsp = 1`` or ``budget.dsp = 100``. ``#`` starts a comment."""
    costs = dict(DEFAULT_COSTS)
    budget: dict[str, int] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            num = int(value)
        except ValueError:
            raise ValueError(f"{path}:{lineno}: value must be an integer") from None
        if num < 0:
            raise ValueError(f"{path}:{lineno}: value must be non-negative")
        parts = key.split(".")
        if parts[0] == "budget" and len(parts) == 2 and parts[1] in ("dsp", "lut", "ff", "bram"):
            budget[parts[1]] = num
        elif len(parts) == 3 and parts[2] in ("latency", "dsp", "lut", "ff"):
            op = f"{parts[0]}.{parts[1]}"
            if parts[2] == "latency" and num < 1:
                raise ValueError(f"{path}:{lineno}: latency must be >= 1")
            old = costs.get(op, OpCost(1))
            costs[op] = OpCost(**{**old.__dict__, parts[2]: num})
        else:
            raise ValueError(f"{path}:{lineno}: unknown key '{key}'")
    return costs, budget


# ---------------------------------------------------------------------------
# Statement costs


_OP_NAMES = {"+": "add", "-": "add", "*": "mul", "/": "div"}


def op_key(op: str, t: DataType) -> str:
    fam = f"f{t.bits}" if t.is_float else "int"
    return fam + "." + _OP_NAMES[op]


class StmtCost:
    """Depth, dependence-chain latencies and resources of one compute."""

    def __init__(self, c: Compute, dtypes: Mapping[str, DataType], costs: Mapping[str, OpCost]):
        self.c, self.dtypes, self.costs = c, dtypes, costs
        dest = dtypes[c.dest]
        self.dest_t = dest
        self.final = None
        if c.op == "accumulate":
            t = common_type(dest, expr_type(c.rhs, dtypes, dest))
            self.final = costs[op_key("+", t)]
        res = self._resources(c.rhs)
        if self.final is not None:
            res = res + Resources(self.final.dsp, self.final.lut, self.final.ff)
        self.resources = res
        body = self._depth(c.rhs)
        self.depth = max(1, body + (self.final.latency if self.final else 0))

    def _op(self, e: Expr) -> OpCost | None:
        if isinstance(e, BinOp):
            t = expr_type(e, self.dtypes, self.dest_t)
            return self.costs[op_key(e.op, t)]
        if isinstance(e, Neg):
            t = expr_type(e, self.dtypes, self.dest_t)
            return None if t.is_float else self.costs["int.add"]
        return None

    def _depth(self, e: Expr) -> int:
        op = self._op(e)
        own = op.latency if op else 0
        if isinstance(e, BinOp):
            return own + max(self._depth(e.lhs), self._depth(e.rhs))
        if isinstance(e, Neg):
            return own + self._depth(e.operand)
        return 0

    def _resources(self, e: Expr) -> Resources:
        op = self._op(e)
        r = Resources(op.dsp, op.lut, op.ff) if op else Resources()
        if isinstance(e, BinOp):
            return r + self._resources(e.lhs) + self._resources(e.rhs)
        if isinstance(e, Neg):
            return r + self._resources(e.operand)
        return r

    def _path_to(self, e: Expr, target: Load) -> int | None:
        if e is target:
            return 0
        op = self._op(e)
        own = op.latency if op else 0
        kids = [e.lhs, e.rhs] if isinstance(e, BinOp) else [e.operand] if isinstance(e, Neg) else []
        for k in kids:
            sub = self._path_to(k, target)
            if sub is not None:
                return own + sub
        return None

    def dep_latency(self, dep: SelfDep) -> int:
        """Latency of the read-to-write chain that a dependence closes."""
        if not dep.known:
            return self.depth
        final = self.final.latency if self.final else 0
        if dep.kind == "reduction":
            return max(1, final)
        if dep.kind == "flow" and dep.load is not None:
            path = self._path_to(self.c.rhs, dep.load)
            if path is None:
                return self.depth
            return max(1, path + final)
        return 1


# ---------------------------------------------------------------------------
# Loop IR walk


def _unroll_of(loop: LoopNode, trip: int) -> int:
    u = loop.unroll
    if u is None:
        return 1
    return trip if u.full else min(u.factor, max(trip, 1))


def _trip(loop: LoopNode, ranges: Mapping[str, tuple[int, int]]) -> int:
    lo, _ = bound_interval(loop.lower, ranges)
    _, hi = bound_interval(loop.upper, ranges)
    return max(0, hi - lo + 1)


class PerfModel:
    def __init__(self, dtypes: Mapping[str, DataType], attrs: Mapping[str, NodeAttr],
                 costs: Mapping[str, OpCost] | None = None):
        self.dtypes = dtypes
        self.attrs = attrs
        self.costs = dict(costs or DEFAULT_COSTS)
        self._stmt: dict[str, StmtCost] = {}

    def stmt_cost(self, s: StmtNode) -> StmtCost:
        if s.name not in self._stmt:
            self._stmt[s.name] = StmtCost(s.compute, self.dtypes, self.costs)
        return self._stmt[s.name]

    # latency ---------------------------------------------------------------

    def estimate_nodes(self, nodes: Sequence[Node]) -> Estimate:
        """Latency, achieved IIs and resources of a sequence of nodes
        (typically one top-level loop nest)."""
        ii: dict[str, int] = {}
        lat = self._latency(nodes, {}, (), ii)
        res = self._resources(nodes, {}, 1)
        return Estimate(lat, res, ii)

    def _latency(self, nodes: Sequence[Node], ranges, path: tuple[tuple[LoopNode, int, int], ...], ii) -> int:
        total = 0
        for n in nodes:
            if isinstance(n, StmtNode):
                total += self.stmt_cost(n).depth
            elif isinstance(n, IfNode_):
                total += self._latency(n.body, ranges, path, ii)
            else:
                trip = _trip(n, ranges)
                u = _unroll_of(n, trip)
                inner = dict(ranges)
                lo, _ = bound_interval(n.lower, ranges)
                _, hi = bound_interval(n.upper, ranges)
                inner[n.iv] = (lo, hi)
                here = path + ((n, trip, u),)
                if trip == 0:
                    continue
                if n.pipeline is not None:
                    count = math.ceil(trip / u) * self._iterations(n.body, inner)
                    depth = max((self.stmt_cost(s).depth for s in statements(n.body)), default=1)
                    achieved = max([n.pipeline.ii] + [self._recurrence(s, here, inner)
                                                      for s in self._stmts_with_path(n.body, inner, here)])
                    key = "/".join(p[0].iv for p in here)
                    ii[key] = achieved
                    total += (count - 1) * achieved + depth
                else:
                    total += math.ceil(trip / u) * self._latency(n.body, inner, here, ii)
        return total

    def _iterations(self, nodes: Sequence[Node], ranges) -> int:
        loops = 0
        has_stmt = False
        for n in nodes:
            if isinstance(n, StmtNode):
                has_stmt = True
            elif isinstance(n, IfNode_):
                k = self._iterations(n.body, ranges)
                loops += k if any(isinstance(x, (LoopNode, IfNode_)) for x in n.body) else 0
                has_stmt = has_stmt or any(isinstance(x, StmtNode) for x in n.body)
            else:
                trip = _trip(n, ranges)
                u = _unroll_of(n, trip)
                inner = dict(ranges)
                lo, _ = bound_interval(n.lower, ranges)
                _, hi = bound_interval(n.upper, ranges)
                inner[n.iv] = (lo, hi)
                loops += math.ceil(trip / u) * self._iterations(n.body, inner) if trip else 0
        return loops + (1 if has_stmt else 0)

    def _stmts_with_path(self, nodes, ranges, path):
        for n in nodes:
            if isinstance(n, StmtNode):
                yield n, path
            elif isinstance(n, IfNode_):
                yield from self._stmts_with_path(n.body, ranges, path)
            else:
                trip = _trip(n, ranges)
                inner = dict(ranges)
                lo, _ = bound_interval(n.lower, ranges)
                _, hi = bound_interval(n.upper, ranges)
                inner[n.iv] = (lo, hi)
                yield from self._stmts_with_path(n.body, inner, path + ((n, trip, _unroll_of(n, trip)),))

    def _recurrence(self, item, pipe_path, ranges) -> int:
        """Recurrence II of one statement under the innermost loop of
        ``pipe_path`` (the pipelined loop)."""
        s, path = item
        if s.stmt is None or s.name not in self.attrs:
            return 1
        cost = self.stmt_cost(s)
        pl = len(pipe_path) - 1
        levels = {p[0].iv: k for k, p in enumerate(path)}
        worst = 1
        for dep in self.attrs[s.name].self_deps:
            dlat = cost.dep_latency(dep)
            if not dep.known:
                worst = max(worst, dlat)
                continue
            dist = dict(zip(s.compute.iter_names, dep.distance))
            for vec in s.stmt.map_distance(dist):
                by_loop = [0] * len(path)
                for d, v in zip(s.stmt.dims, vec):
                    if d in levels:
                        by_loop[levels[d]] = v
                if any(by_loop[:pl]):
                    continue
                delta = 0
                stride = 1
                nonzero = False
                for k in range(len(path) - 1, pl - 1, -1):
                    _, trip, u = path[k]
                    v = by_loop[k]
                    if u >= trip:
                        continue
                    step = -(-abs(v) // u) * (1 if v >= 0 else -1)
                    if step:
                        nonzero = True
                    delta += step * stride
                    stride *= -(-trip // u)
                if not nonzero:
                    continue
                delta = max(delta, 1)
                worst = max(worst, -(-dlat // delta))
        return worst

    # resources --------------------------------------------------------------

    def _resources(self, nodes: Sequence[Node], ranges, rep: int) -> Resources:
        total = Resources()
        for n in nodes:
            if isinstance(n, StmtNode):
                total = total + self.stmt_cost(n).resources.scale(rep)
            elif isinstance(n, IfNode_):
                total = total + self._resources(n.body, ranges, rep)
            else:
                trip = _trip(n, ranges)
                inner = dict(ranges)
                lo, _ = bound_interval(n.lower, ranges)
                _, hi = bound_interval(n.upper, ranges)
                inner[n.iv] = (lo, hi)
                total = total + self._resources(n.body, inner, rep * _unroll_of(n, trip))
        return total


def array_memory(ir: LoopIR) -> Resources:
    """BRAM (or registers, when fully partitioned) for every array."""
    total = Resources()
    for a in ir.arrays:
        p = a.placeholder
        banks = math.prod(a.banks(k + 1) for k in range(p.rank))
        elems = math.prod(p.shape)
        if banks >= elems:
            total = total + Resources(ff=elems * p.dtype.bits)
            continue
        per_bank = -(-elems // banks) * p.dtype.bits
        total = total + Resources(bram=banks * -(-per_bank // BRAM_BITS))
    return total


def root_stmts(root: Node) -> set[str]:
    return {s.name for s in statements([root])}


def estimate_roots(ir: LoopIR, model: PerfModel) -> list[Estimate]:
    return [model.estimate_nodes([r]) for r in ir.roots]


def estimate_function(ir: LoopIR, g: DepGraph, model: PerfModel, reuse: bool = False,
                      per_root: list[Estimate] | None = None) -> Estimate:
    """Longest dependence path over top-level nests; resources summed (DSP
    maxed under ``reuse``) plus array memory."""
    ests = per_root if per_root is not None else estimate_roots(ir, model)
    names = [root_stmts(r) for r in ir.roots]
    best = [0] * len(ests)
    for b in range(len(ests)):
        preds = [a for a in range(b) if any(e.producer in names[a] and e.consumer in names[b] for e in g.edges)]
        best[b] = ests[b].latency + max((best[a] for a in preds), default=0)
    latency = max(best, default=0)
    res = Resources()
    for e in ests:
        res = res + e.resources
    if reuse and ests:
        res = Resources(max(e.resources.dsp for e in ests), res.lut, res.ff, res.bram)
    res = res + array_memory(ir)
    ii: dict[str, int] = {}
    for k, e in enumerate(ests):
        for key, v in e.ii.items():
            ii[f"{'+'.join(sorted(names[k]))}:{key}"] = v
    return Estimate(latency, res, ii)
