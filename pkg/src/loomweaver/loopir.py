"""Pragma-annotated loop IR lowered from the polyhedral AST."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Sequence, Union

from .affine import AffineExpr, Bound, bound_interval, format_affine, format_bound
from .frontend import (Compute, Expr, Function, Partition, Pipeline, Placeholder, Unroll, format_expr,
                       map_indices)
from .polyhedral import AstNode, BlockNode, Cond, IfNode, PolyStmt, UserNode


class LoweringError(Exception):
    pass


@dataclass(frozen=True)
class PipelineAttr:
    ii: int


@dataclass(frozen=True)
class UnrollAttr:
    factor: int
    full: bool = False


@dataclass(frozen=True)
class PartitionAttr:
    array: str
    kind: str  # cyclic, block or complete
    factor: int
    dim: int  # 1-based


PragmaAttr = Union[PipelineAttr, UnrollAttr, PartitionAttr]


@dataclass(frozen=True)
class StmtNode:
    """One statement instance template; indices are affine in enclosing ivs.

    ``iter_values`` gives each original iterator as an affine expression
    over the ivs, for iterator names used as values in the rhs.
    """

    name: str
    dest: str
    dest_indices: tuple[AffineExpr, ...]
    op: str
    rhs: Expr
    iter_values: tuple[tuple[str, AffineExpr], ...]
    stmt: PolyStmt | None = None

    @property
    def compute(self) -> Compute | None:
        return self.stmt.compute if self.stmt is not None else None


@dataclass(frozen=True)
class IfNode_:
    conds: tuple[Cond, ...]
    body: tuple["Node", ...]


@dataclass(frozen=True)
class LoopNode:
    iv: str
    lower: Bound
    upper: Bound
    body: tuple["Node", ...]
    attrs: tuple[PragmaAttr, ...] = ()
    step: int = 1

    @property
    def pipeline(self) -> PipelineAttr | None:
        return next((a for a in self.attrs if isinstance(a, PipelineAttr)), None)

    @property
    def unroll(self) -> UnrollAttr | None:
        return next((a for a in self.attrs if isinstance(a, UnrollAttr)), None)


Node = Union[LoopNode, IfNode_, StmtNode]
GuardNode = IfNode_


@dataclass(frozen=True)
class ArrayInfo:
    placeholder: Placeholder
    partitions: tuple[PartitionAttr, ...] = ()

    @property
    def name(self) -> str:
        return self.placeholder.name

    def banks(self, dim: int) -> int:
        """Number of banks along a 1-based dim."""
        for p in self.partitions:
            if p.dim == dim:
                return self.placeholder.shape[dim - 1] if p.kind == "complete" else p.factor
        return 1


@dataclass(frozen=True)
class LoopIR:
    name: str
    arrays: tuple[ArrayInfo, ...]
    roots: tuple[Node, ...]

    def array(self, name: str) -> ArrayInfo:
        for a in self.arrays:
            if a.name == name:
                return a
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Lowering


def lower_ast(ast: AstNode, f: Function, partitions: Sequence[Partition] = ()) -> LoopIR:
    ir = LoopIR(f.name, tuple(ArrayInfo(p) for p in f.placeholders), tuple(_lower(ast, {})))
    for d in partitions:
        ir = attach_hw(ir, d)
    return ir


def _lower(n: AstNode, ranges: dict[str, tuple[int, int]]) -> list[Node]:
    if isinstance(n, BlockNode):
        out: list[Node] = []
        for c in n.children:
            out.extend(_lower(c, ranges))
        return out
    if isinstance(n, IfNode):
        return [IfNode_(n.conds, tuple(_lower(n.child, ranges)))]
    if isinstance(n, UserNode):
        return [_stmt_node(n.stmt)]
    lo, _ = bound_interval(n.lower, ranges)
    _, hi = bound_interval(n.upper, ranges)
    trip = hi - lo + 1
    attrs: list[PragmaAttr] = []
    for stmt_name, h in n.annotations:
        if h.kind == "pipeline":
            a: PragmaAttr = PipelineAttr(h.value)
        else:
            if h.value > trip:
                raise LoweringError(f"unroll factor {h.value} of loop '{n.iv}' in '{stmt_name}' "
                                    f"exceeds its trip count {trip}")
            a = UnrollAttr(h.value, h.value == trip)
        attrs = _add_attr(attrs, a, n.iv)
    inner = dict(ranges)
    inner[n.iv] = (lo, hi)
    return [LoopNode(n.iv, n.lower, n.upper, tuple(_lower(n.child, inner)), tuple(attrs))]


def _add_attr(attrs: list[PragmaAttr], a: PragmaAttr, iv: str) -> list[PragmaAttr]:
    for old in attrs:
        if type(old) is type(a):
            if old != a:
                raise LoweringError(f"conflicting {type(a).__name__[:-4].lower()} attributes on loop '{iv}'")
            return attrs
    return attrs + [a]


def _stmt_node(s: PolyStmt) -> StmtNode:
    dead = [h.dim for h in s.hw if h.dim not in s.dims]
    if dead:
        raise LoweringError(f"'{s.name}' has a hardware directive on loop '{dead[0]}', "
                            "which an earlier transformation eliminated")
    sub = s.subst
    c = s.compute
    return StmtNode(c.name, c.dest, tuple(e.substitute(sub) for e in c.dest_indices), c.op,
                    map_indices(c.rhs, lambda e: e.substitute(sub)),
                    tuple((n, sub[n]) for n in c.iter_names), s)


def trip_count(loop: LoopNode, ranges: dict[str, tuple[int, int]]) -> int:
    lo, _ = bound_interval(loop.lower, ranges)
    _, hi = bound_interval(loop.upper, ranges)
    return max(0, hi - lo + 1)


def walk(nodes: Sequence[Node], ranges: dict[str, tuple[int, int]] | None = None,
         path: tuple[LoopNode, ...] = ()) -> Iterator[tuple[Node, tuple[LoopNode, ...], dict]]:
    """Pre-order traversal yielding (node, enclosing loops, iv ranges)."""
    ranges = dict(ranges or {})
    for n in nodes:
        yield n, path, ranges
        if isinstance(n, LoopNode):
            inner = dict(ranges)
            lo, _ = bound_interval(n.lower, ranges)
            _, hi = bound_interval(n.upper, ranges)
            inner[n.iv] = (lo, hi)
            yield from walk(n.body, inner, path + (n,))
        elif isinstance(n, IfNode_):
            yield from walk(n.body, ranges, path)


def statements(nodes: Sequence[Node]) -> list[StmtNode]:
    return [n for n, _, _ in walk(nodes) if isinstance(n, StmtNode)]


def attach_hw(ir: LoopIR, d: Union[Pipeline, Unroll, Partition]) -> LoopIR:
    """Record one hardware directive on the loop IR."""
    if isinstance(d, Partition):
        try:
            info = ir.array(d.array)
        except KeyError:
            raise LoweringError(f"unknown array '{d.array}'") from None
        if len(d.factors) > info.placeholder.rank:
            raise LoweringError(f"partition of '{d.array}' lists {len(d.factors)} factors for rank "
                                f"{info.placeholder.rank}")
        parts = list(info.partitions)
        for k, fac in enumerate(d.factors, start=1):
            if fac <= 1 and d.kind != "complete":
                continue
            if fac < 1:
                continue
            new = PartitionAttr(d.array, d.kind, fac, k)
            old = [p for p in parts if p.dim == k]
            if old and old[0] != new:
                raise LoweringError(f"conflicting partitions of '{d.array}' dim {k}")
            if not old:
                parts.append(new)
        parts.sort(key=lambda p: p.dim)
        arrays = tuple(replace(a, partitions=tuple(parts)) if a.name == d.array else a for a in ir.arrays)
        return replace(ir, arrays=arrays)
    found = [False]

    def visit(nodes: Sequence[Node], ranges) -> tuple[Node, ...]:
        out = []
        for n in nodes:
            if isinstance(n, LoopNode):
                inner = dict(ranges)
                lo, _ = bound_interval(n.lower, ranges)
                _, hi = bound_interval(n.upper, ranges)
                inner[n.iv] = (lo, hi)
                body = visit(n.body, inner)
                if n.iv == d.dim and any(s.name == d.compute for s in statements(n.body)):
                    found[0] = True
                    trip = hi - lo + 1
                    if isinstance(d, Pipeline):
                        a: PragmaAttr = PipelineAttr(d.ii)
                    else:
                        if d.factor > trip:
                            raise LoweringError(f"unroll factor {d.factor} exceeds trip count {trip} of '{d.dim}'")
                        a = UnrollAttr(d.factor, d.factor == trip)
                    n = replace(n, attrs=tuple(_add_attr(list(n.attrs), a, n.iv)))
                out.append(replace(n, body=body))
            elif isinstance(n, IfNode_):
                out.append(replace(n, body=visit(n.body, ranges)))
            else:
                out.append(n)
        return tuple(out)

    roots = visit(ir.roots, {})
    if not found[0]:
        raise LoweringError(f"compute '{d.compute}' has no loop '{d.dim}'")
    return replace(ir, roots=roots)


# ---------------------------------------------------------------------------
# Text form


def _attr_text(a: PragmaAttr) -> str:
    if isinstance(a, PipelineAttr):
        return f"@pipeline(II={a.ii})"
    if isinstance(a, UnrollAttr):
        return "@unroll(full)" if a.full else f"@unroll(factor={a.factor})"
    return f"@partition({a.kind}, factor={a.factor}, dim={a.dim})"


def format_loopir(ir: LoopIR) -> str:
    lines = [f"func {ir.name} {{"]
    for a in ir.arrays:
        p = a.placeholder
        dims = "".join(f"[{e}]" for e in p.shape)
        attrs = "".join(" " + _attr_text(x) for x in a.partitions)
        lines.append(f"  array {p.name}: {p.dtype}{dims} {p.direction}{attrs}")
    _format_nodes(ir.roots, 1, lines)
    lines.append("}")
    return "\n".join(lines) + "\n"


def _format_nodes(nodes: Sequence[Node], depth: int, lines: list[str]):
    pad = "  " * depth
    for n in nodes:
        if isinstance(n, LoopNode):
            attrs = "".join(" " + _attr_text(a) for a in n.attrs)
            lines.append(f"{pad}for {n.iv} in [{format_bound(n.lower)}, {format_bound(n.upper)}]{attrs} {{")
            _format_nodes(n.body, depth + 1, lines)
            lines.append(f"{pad}}}")
        elif isinstance(n, IfNode_):
            cond = " && ".join(f"{format_bound(c.lower)} <= {c.iv} <= {format_bound(c.upper)}" for c in n.conds)
            lines.append(f"{pad}if ({cond}) {{")
            _format_nodes(n.body, depth + 1, lines)
            lines.append(f"{pad}}}")
        else:
            idx = "".join(f"[{format_affine(e)}]" for e in n.dest_indices)
            op = "+=" if n.op == "accumulate" else "="
            vals = dict(n.iter_values)
            rhs = format_expr(_iters_as_values(n.rhs, vals))
            lines.append(f"{pad}{n.name}: {n.dest}{idx} {op} {rhs};")


def _iters_as_values(e: Expr, vals: dict[str, AffineExpr]) -> Expr:
    """Show iterator values by their affine expressions (text form only)."""
    from .frontend import BinOp, IterRef, Neg
    if isinstance(e, IterRef):
        v = vals[e.name]
        if v == AffineExpr.var(e.name):
            return e
        return IterRef(f"({format_affine(v)})")
    if isinstance(e, BinOp):
        return BinOp(e.op, _iters_as_values(e.lhs, vals), _iters_as_values(e.rhs, vals))
    if isinstance(e, Neg):
        return Neg(_iters_as_values(e.operand, vals))
    return e
