"""Restricted polyhedral IR.

Each statement is an integer set over its current loop dimensions plus a
2d+1 schedule that interleaves static ordering coordinates with those
dimensions. Loop transformations rewrite the set and schedule; ``build_ast``
scans the union of statements back into a loop tree, deriving bounds by
Fourier-Motzkin projection.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence, Union

from .affine import (AffineExpr, Bound, CeilDiv, FloorDiv, eval_bound, floordiv,
                     format_affine, format_bound, make_max, make_min)
from .frontend import Compute


class PolyError(Exception):
    pass


# ---------------------------------------------------------------------------
# Constraints and Fourier-Motzkin elimination
#
# Constraints are AffineExprs read as ``expr >= 0`` unless flagged as
# equalities. FALSE is a canonical unsatisfiable constraint.

FALSE = AffineExpr.constant(-1)


def _tighten(e: AffineExpr) -> AffineExpr:
    """Divide an inequality by the gcd of its coefficients, flooring the
    constant; valid for integer points only."""
    g = e.content()
    if g <= 1:
        return e
    return AffineExpr(tuple((n, c // g) for n, c in e.terms), floordiv(e.const, g))


def _clean(cons: Iterable[AffineExpr]) -> list[AffineExpr]:
    """Tighten, drop tautologies, keep only the strongest constant per
    linear part. Returns [FALSE] for a trivially empty system."""
    best: dict[tuple, int] = {}
    for c in cons:
        c = _tighten(c)
        if c.is_constant():
            if c.const < 0:
                return [FALSE]
            continue
        if c.terms not in best or c.const < best[c.terms]:
            best[c.terms] = c.const
    # Opposite pairs e >= 0 and -e + k >= 0 with k < 0 cannot both hold.
    for terms, k in best.items():
        neg = tuple((n, -c) for n, c in terms)
        if neg in best and k + best[neg] < 0:
            return [FALSE]
    return [AffineExpr(t, k) for t, k in sorted(best.items())]


def eliminate(cons: Sequence[AffineExpr], var: str) -> list[AffineExpr]:
    lower, upper, rest = [], [], []
    for c in cons:
        a = c.coeff(var)
        (lower if a > 0 else upper if a < 0 else rest).append(c)
    for lo in lower:
        a = lo.coeff(var)
        for up in upper:
            b = -up.coeff(var)
            rest.append(lo * b + up * a)
    return _clean(rest)


def is_empty(cons: Sequence[AffineExpr]) -> bool:
    """True when no integer point satisfies ``cons`` (sound, not complete)."""
    cur = _clean(cons)
    names = sorted({n for c in cur for n in c.names})
    for n in names:
        if cur == [FALSE]:
            return True
        cur = eliminate(cur, n)
    return cur == [FALSE]


def _bound_of(c: AffineExpr, var: str) -> tuple[str, Bound]:
    a = c.coeff(var)
    rest = c - AffineExpr.var(var, a)
    if a > 0:
        num = -rest
        return "lower", num if a == 1 else CeilDiv(num, a)
    num = rest
    return "upper", num if a == -1 else FloorDiv(num, -a)


def _as_ratio(b: Bound) -> tuple[AffineExpr, int]:
    if isinstance(b, AffineExpr):
        return b, 1
    return b.expr, b.div


def _prune(bounds: list[Bound], context: Sequence[AffineExpr], lower: bool) -> list[Bound]:
    """Drop bounds that never win the max (lower) / min (upper) under the
    constraints in ``context``."""
    kept = list(dict.fromkeys(bounds))
    changed = True
    while changed and len(kept) > 1:
        changed = False
        for b1 in kept:
            n1, d1 = _as_ratio(b1)
            for b2 in kept:
                if b2 is b1:
                    continue
                n2, d2 = _as_ratio(b2)
                diff = n1 * d2 - n2 * d1
                violation = diff - 1 if lower else -diff - 1
                if is_empty(list(context) + [violation]):
                    kept.remove(b1)
                    changed = True
                    break
            if changed:
                break
    return kept


# ---------------------------------------------------------------------------
# Integer sets


@dataclass(frozen=True)
class IntegerSet:
    """Conjunction of affine constraints over ordered dims.

    ``locals`` are existential dims; ``equalities`` lists indices of
    constraints that are ``= 0`` instead of ``>= 0``. Transformations here
    eliminate locals by substitution, so both are usually empty.
    """

    dims: tuple[str, ...]
    constraints: tuple[AffineExpr, ...]
    locals: tuple[str, ...] = ()
    equalities: frozenset[int] = frozenset()

    @staticmethod
    def box(ranges: Sequence[tuple[str, int, int]]) -> "IntegerSet":
        """Rectangular set from inclusive (name, lo, hi) triples."""
        cons = []
        for n, lo, hi in ranges:
            cons.append(AffineExpr.var(n) - lo)
            cons.append(AffineExpr.constant(hi) - AffineExpr.var(n))
        return IntegerSet(tuple(n for n, _, _ in ranges), tuple(cons))

    def inequalities(self) -> list[AffineExpr]:
        out = []
        for k, c in enumerate(self.constraints):
            out.append(c)
            if k in self.equalities:
                out.append(-c)
        return out

    def _eliminated_locals(self) -> list[AffineExpr]:
        cons = self.inequalities()
        for n in self.locals:
            cons = eliminate(cons, n)
        return cons

    def contains(self, point: Mapping[str, int]) -> bool:
        if self.locals:
            rng = [range(lo, hi + 1) for lo, hi in (self._local_range(n, point) for n in self.locals)]
            for vals in itertools.product(*rng):
                env = dict(point, **dict(zip(self.locals, vals)))
                if all(c.evaluate(env) >= 0 for c in self.inequalities()):
                    return True
            return False
        return all(c.evaluate(point) >= 0 for c in self.inequalities())

    def _local_range(self, name: str, point: Mapping[str, int]) -> tuple[int, int]:
        fixed = [c.substitute({d: AffineExpr.constant(point[d]) for d in self.dims}) for c in self.inequalities()]
        return _constant_range(fixed, name)

    def dim_range(self, name: str) -> tuple[int, int]:
        """Constant (lo, hi) hull of one dim."""
        return _constant_range(self.inequalities(), name)

    def points(self) -> list[tuple[int, ...]]:
        """All integer points in dim order, by filtering the bounding box."""
        box = [self.dim_range(d) for d in self.dims]
        out = []
        for p in itertools.product(*(range(lo, hi + 1) for lo, hi in box)):
            if self.contains(dict(zip(self.dims, p))):
                out.append(p)
        return out

    def is_empty(self) -> bool:
        return is_empty(self.inequalities())

    def simplify(self) -> "IntegerSet":
        """Tighten constraints and remove redundant ones, trying constraints
        over more dims first so that simple bounds survive."""
        if self.locals or self.equalities:
            return self
        cons = _clean(self.constraints)
        if cons == [FALSE]:
            return IntegerSet(self.dims, (FALSE,))
        order = sorted(range(len(cons)), key=lambda k: (-len(cons[k].terms), k))
        alive = set(range(len(cons)))
        for k in order:
            others = [cons[m] for m in alive if m != k]
            if is_empty(others + [-cons[k] - 1]):
                alive.discard(k)
        return IntegerSet(self.dims, tuple(cons[k] for k in sorted(alive)))

    def canonical(self) -> frozenset:
        """Normal form for structural comparison of two sets over the same dims."""
        s = self.simplify()
        return frozenset((c.terms, c.const) for c in s.constraints)

    def rename(self, mapping: Mapping[str, str]) -> "IntegerSet":
        return IntegerSet(tuple(mapping.get(d, d) for d in self.dims),
                          tuple(c.rename(mapping) for c in self.constraints),
                          self.locals, self.equalities)

    def __str__(self) -> str:
        body = " and ".join(
            f"{format_affine(c, self.dims)} {'=' if k in self.equalities else '>='} 0"
            for k, c in enumerate(self.constraints))
        ex = f"exists {', '.join(self.locals)}: " if self.locals else ""
        return f"{{ ({', '.join(self.dims)}) : {ex}{body} }}"


def _constant_range(cons: Sequence[AffineExpr], name: str) -> tuple[int, int]:
    cur = _clean(cons)
    for n in sorted({m for c in cur for m in c.names} - {name}):
        cur = eliminate(cur, n)
    if cur == [FALSE]:
        return 0, -1
    lo, hi = [], []
    for c in cur:
        kind, b = _bound_of(c, name)
        v = eval_bound(b, {})
        (lo if kind == "lower" else hi).append(v)
    if not lo or not hi:
        raise PolyError(f"dimension '{name}' is unbounded")
    return max(lo), min(hi)


def prefix_projections(s: IntegerSet) -> list[list[AffineExpr]]:
    """``out[k]`` holds the constraints of ``s`` projected onto dims[0..k]."""
    cur = _clean(s._eliminated_locals())
    out: list[list[AffineExpr]] = [[] for _ in s.dims]
    for k in range(len(s.dims) - 1, -1, -1):
        out[k] = cur
        cur = eliminate(cur, s.dims[k])
    return out


def fm_project(s: IntegerSet, keep: Sequence[str]) -> tuple[list[Bound], list[Bound]]:
    """Lower (max-list) and upper (min-list) bounds of the innermost kept dim
    after projecting out every dim not in ``keep``."""
    keep = tuple(keep)
    if s.dims[:len(keep)] != keep:
        raise PolyError("fm_project keeps a prefix of the set's dims")
    if not keep:
        return [], []
    cons = prefix_projections(s)[len(keep) - 1]
    context = eliminate(cons, keep[-1]) if cons != [FALSE] else [FALSE]
    return _bounds_for(cons, keep[-1], context)


def _bounds_for(cons: list[AffineExpr], var: str, context: list[AffineExpr]) -> tuple[list[Bound], list[Bound]]:
    if cons == [FALSE]:
        return [AffineExpr.constant(0)], [AffineExpr.constant(-1)]
    lowers, uppers = [], []
    for c in cons:
        if c.coeff(var) == 0:
            continue
        kind, b = _bound_of(c, var)
        (lowers if kind == "lower" else uppers).append(b)
    return _prune(lowers, context, True), _prune(uppers, context, False)


# ---------------------------------------------------------------------------
# Schedules and statements


@dataclass(frozen=True)
class ScheduleMap:
    """2d+1 schedule ``[c0, e1, c1, ..., ed, cd]``; loop slots are dims."""

    statics: tuple[int, ...]
    dims: tuple[str, ...]

    def __post_init__(self):
        if len(self.statics) != len(self.dims) + 1:
            raise PolyError("schedule needs one more static than loop dims")

    @property
    def output(self) -> list[Union[int, AffineExpr]]:
        out: list[Union[int, AffineExpr]] = [self.statics[0]]
        for d, c in zip(self.dims, self.statics[1:]):
            out += [AffineExpr.var(d), c]
        return out

    def apply(self, point: Mapping[str, int], width: int | None = None) -> tuple:
        """Time tuple for a point; padded to ``width`` loop slots with
        statics 0 and loop slots -inf (a finished statement runs before any
        iteration of a sibling's deeper loop)."""
        out: list = [self.statics[0]]
        for d, c in zip(self.dims, self.statics[1:]):
            out += [point[d], c]
        if width is not None:
            out += [-math.inf, 0] * (width - len(self.dims))
        return tuple(out)

    def __str__(self) -> str:
        return "[" + ", ".join(str(x) for x in self.output) + "]"


@dataclass(frozen=True)
class HwAnnotation:
    kind: str  # "pipeline" or "unroll"
    dim: str
    value: int


@dataclass(frozen=True)
class PolyStmt:
    name: str
    compute: Compute
    domain: IntegerSet
    schedule: ScheduleMap
    iter_map: tuple[tuple[str, AffineExpr], ...]
    history: tuple[tuple, ...] = ()
    hw: tuple[HwAnnotation, ...] = ()
    order: int = 0  # declaration index, for deterministic tie-breaking

    @property
    def dims(self) -> tuple[str, ...]:
        return self.domain.dims

    @property
    def depth(self) -> int:
        return len(self.dims)

    @property
    def subst(self) -> dict[str, AffineExpr]:
        """Original iterator -> affine expression over current dims."""
        return dict(self.iter_map)

    def forward(self, point: Mapping[str, int]) -> dict[str, int]:
        """Map an original iteration vector (by iterator name) to values of
        the current dims."""
        p = dict(point)
        for step in self.history:
            kind = step[0]
            if kind == "split":
                _, i, t, i0, i1 = step
                v = p.pop(i)
                p[i0], p[i1] = floordiv(v, t), v % t
            elif kind == "skew":
                _, i, j, t1, t2, ni, nj = step
                vi, vj = p.pop(i), p.pop(j)
                p[ni], p[nj] = vi, t1 * vi + t2 * vj
            elif kind == "rename":
                old = dict(p)
                for a, b in step[1]:
                    p.pop(a, None)
                for a, b in step[1]:
                    p[b] = old[a]
        return p

    def map_distance(self, dist: Mapping[str, int]) -> list[tuple[int, ...]]:
        """Distance vectors over current dims that an original distance (by
        iterator name) can take; splits make one distance fan out to two."""
        vecs = [dict(dist)]
        for step in self.history:
            kind = step[0]
            nxt = []
            for v in vecs:
                v = dict(v)
                if kind == "split":
                    _, i, t, i0, i1 = step
                    q, r = divmod(v.pop(i), t)
                    nxt.append({**v, i0: q, i1: r})
                    if r:
                        nxt.append({**v, i0: q + 1, i1: r - t})
                elif kind == "skew":
                    _, i, j, t1, t2, ni, nj = step
                    vi, vj = v.pop(i), v.pop(j)
                    nxt.append({**v, ni: vi, nj: t1 * vi + t2 * vj})
                else:
                    old = dict(v)
                    for a, _ in step[1]:
                        v.pop(a, None)
                    for a, b in step[1]:
                        v[b] = old[a]
                    nxt.append(v)
            vecs = nxt
        out = []
        for v in vecs:
            t = tuple(v[d] for d in self.dims)
            if t not in out:
                out.append(t)
        return out

    def time(self, point: Mapping[str, int], width: int | None = None) -> tuple:
        """Schedule tuple of an original iteration vector."""
        return self.schedule.apply(self.forward(point), width)


def lift(c: Compute, attrs=None, order_index: int = 0) -> PolyStmt:
    """Rectangular domain and identity schedule for a compute."""
    domain = IntegerSet.box([(v.name, v.lower, v.upper - 1) for v in c.iters])
    sched = ScheduleMap((order_index,) + (0,) * c.depth, c.iter_names)
    return PolyStmt(c.name, c, domain, sched, tuple((n, AffineExpr.var(n)) for n in c.iter_names),
                    order=order_index)


def _need(s: PolyStmt, *dims: str):
    for d in dims:
        if d not in s.dims:
            raise PolyError(f"compute '{s.name}' has no loop '{d}'")


def _fresh(s: PolyStmt, *names: str, allow: Sequence[str] = ()):
    for n in names:
        if (n in s.dims and n not in allow) or names.count(n) > 1:
            raise PolyError(f"loop name '{n}' is not fresh in compute '{s.name}'")


def _subst_stmt(s: PolyStmt, dims: Sequence[str], statics: Sequence[int],
                constraints: Iterable[AffineExpr], mapping: Mapping[str, AffineExpr], step: tuple) -> PolyStmt:
    dom = IntegerSet(tuple(dims), tuple(constraints))
    return replace(s, domain=dom, schedule=ScheduleMap(tuple(statics), tuple(dims)),
                   iter_map=tuple((n, e.substitute(mapping)) for n, e in s.iter_map),
                   history=s.history + (step,))


def interchange(s: PolyStmt, a: str, b: str) -> PolyStmt:
    _need(s, a, b)
    dims = list(s.dims)
    x, y = dims.index(a), dims.index(b)
    dims[x], dims[y] = dims[y], dims[x]
    dom = IntegerSet(tuple(dims), s.domain.constraints, s.domain.locals, s.domain.equalities)
    return replace(s, domain=dom, schedule=ScheduleMap(s.schedule.statics, tuple(dims)))


def reorder(s: PolyStmt, order: Sequence[str]) -> PolyStmt:
    """Permute dims into ``order`` by successive interchanges."""
    if sorted(order) != sorted(s.dims):
        raise PolyError(f"reorder of '{s.name}' must permute its loops")
    for k, want in enumerate(order):
        if s.dims[k] != want:
            s = interchange(s, s.dims[k], want)
    return s


def split(s: PolyStmt, i: str, t: int, i0: str, i1: str) -> PolyStmt:
    if t < 2:
        raise PolyError(f"split factor must be >= 2, got {t}")
    return _split(s, i, t, i0, i1)


def _split(s: PolyStmt, i: str, t: int, i0: str, i1: str) -> PolyStmt:
    _need(s, i)
    _fresh(s, i0, i1)
    if t < 1:
        raise PolyError(f"split factor must be positive, got {t}")
    lo, hi = s.domain.dim_range(i)
    k = s.dims.index(i)
    dims = s.dims[:k] + (i0, i1) + s.dims[k + 1:]
    statics = s.schedule.statics[:k + 1] + (0,) + s.schedule.statics[k + 1:]
    mapping = {i: AffineExpr.var(i0, t) + AffineExpr.var(i1)}
    cons = [c.substitute(mapping) for c in s.domain.inequalities()]
    v0, v1 = AffineExpr.var(i0), AffineExpr.var(i1)
    cons += [v1, (t - 1) - v1, v0 - floordiv(lo, t), floordiv(hi, t) - v0]
    out = _subst_stmt(s, dims, statics, cons, mapping, ("split", i, t, i0, i1))
    return replace(out, domain=out.domain.simplify())


def tile(s: PolyStmt, i: str, j: str, t1: int, t2: int, i0: str, j0: str, i1: str, j1: str) -> PolyStmt:
    """Split both loops and order the four new loops as (i0, j0, i1, j1) at
    the position of ``i``."""
    _need(s, i, j)
    if i == j:
        raise PolyError("tile needs two different loops")
    _fresh(s, i0, j0, i1, j1)
    before = [d for d in s.dims[:s.dims.index(i)] if d != j]
    s = _split(s, i, t1, i0, i1)
    s = _split(s, j, t2, j0, j1)
    after = [d for d in s.dims if d not in before and d not in (i0, j0, i1, j1)]
    return reorder(s, before + [i0, j0, i1, j1] + after)


def skew(s: PolyStmt, i: str, j: str, t1: int, t2: int, ni: str, nj: str) -> PolyStmt:
    """New loops ni = i and nj = t1*i + t2*j; only t2 == 1 is supported."""
    _need(s, i, j)
    if t2 != 1:
        raise PolyError(f"unsupported skew: second factor must be 1, got {t2}")
    if s.dims.index(i) >= s.dims.index(j):
        raise PolyError(f"skew: loop '{i}' must be outside '{j}'")
    if ni == nj or ni == j or nj == i:
        raise PolyError("skew: new loop names may only reuse the loop they replace")
    _fresh(s, ni, nj, allow=(i, j))
    dims = tuple(ni if d == i else nj if d == j else d for d in s.dims)
    mapping = {i: AffineExpr.var(ni), j: AffineExpr.var(nj) - AffineExpr.var(ni, t1)}
    cons = [c.substitute(mapping) for c in s.domain.inequalities()]
    return _subst_stmt(s, dims, s.schedule.statics, cons, mapping, ("skew", i, j, t1, t2, ni, nj))


def rename_dims(s: PolyStmt, mapping: Mapping[str, str]) -> PolyStmt:
    """Simultaneous renaming of loop dims (a permutation of names is fine)."""
    mapping = {a: b for a, b in mapping.items() if a != b}
    if not mapping:
        return s
    _need(s, *mapping)
    new = [mapping.get(d, d) for d in s.dims]
    if len(set(new)) != len(new):
        raise PolyError(f"renaming makes loop names of '{s.name}' collide")
    amap = {a: AffineExpr.var(b) for a, b in mapping.items()}
    hw = tuple(replace(h, dim=mapping.get(h.dim, h.dim)) for h in s.hw)
    return replace(s, domain=s.domain.rename(mapping), schedule=ScheduleMap(s.schedule.statics, tuple(new)),
                   iter_map=tuple((n, e.substitute(amap)) for n, e in s.iter_map),
                   history=s.history + (("rename", tuple(mapping.items())),), hw=hw)


def order_after(s1: PolyStmt, s2: PolyStmt, level: str | None) -> tuple[PolyStmt, PolyStmt]:
    """Run ``s1`` after ``s2`` inside their shared loops up to ``level``
    (None: no shared loops)."""
    if level is None:
        n = -1
    else:
        if level not in s2.dims:
            raise PolyError(f"compute '{s2.name}' has no loop '{level}'")
        n = s2.dims.index(level)
        if s1.dims[:n + 1] != s2.dims[:n + 1]:
            raise PolyError(f"'{s1.name}' and '{s2.name}' do not share loops up to '{level}'")
    st = list(s1.schedule.statics)
    st[:n + 1] = s2.schedule.statics[:n + 1]
    st[n + 1] = s2.schedule.statics[n + 1] + 1
    return replace(s1, schedule=ScheduleMap(tuple(st), s1.dims)), s2


def annotate(s: PolyStmt, kind: str, dim: str, value: int) -> PolyStmt:
    _need(s, dim)
    return replace(s, hw=s.hw + (HwAnnotation(kind, dim, value),))


# ---------------------------------------------------------------------------
# Polyhedral AST


@dataclass(frozen=True)
class Cond:
    """Guard ``lower <= iv <= upper``."""

    iv: str
    lower: Bound
    upper: Bound


@dataclass(frozen=True)
class UserNode:
    stmt: PolyStmt

    @property
    def subst(self) -> dict[str, AffineExpr]:
        return self.stmt.subst


@dataclass(frozen=True)
class IfNode:
    conds: tuple[Cond, ...]
    child: "AstNode"


@dataclass(frozen=True)
class BlockNode:
    children: tuple["AstNode", ...]


@dataclass(frozen=True)
class ForNode:
    iv: str
    lower: Bound
    upper: Bound
    child: "AstNode"
    step: int = 1
    annotations: tuple[tuple[str, HwAnnotation], ...] = ()  # (stmt name, annotation)


AstNode = Union[UserNode, IfNode, BlockNode, ForNode]


@dataclass
class _StmtScan:
    stmt: PolyStmt
    proj: list[list[AffineExpr]]
    guards: list[Cond] = field(default_factory=list)


def build_ast(stmts: Sequence[PolyStmt], warnings: list[str] | None = None) -> BlockNode:
    """Scan the union of statement domains in schedule order."""
    scans = []
    for s in stmts:
        if s.domain.is_empty():
            if warnings is not None:
                warnings.append(f"compute '{s.name}' has an empty domain")
            continue
        scans.append(_StmtScan(s, prefix_projections(s.domain)))
    return BlockNode(tuple(_gen_static(scans, 0, warnings)))


def _statics(sc: _StmtScan, k: int) -> int:
    st = sc.stmt.schedule.statics
    return st[k] if k < len(st) else 0


def _gen_static(group: list[_StmtScan], k: int, warnings) -> list[AstNode]:
    out: list[AstNode] = []
    keys = sorted({_statics(sc, k) for sc in group})
    for key in keys:
        sub = [sc for sc in group if _statics(sc, k) == key]
        out.extend(_gen_loop(sub, k, warnings))
    return out


def _leaf(sc: _StmtScan) -> AstNode:
    node: AstNode = UserNode(sc.stmt)
    if sc.guards:
        node = IfNode(tuple(sc.guards), node)
    return node


def _rename_level(sc: _StmtScan, k: int, iv: str) -> _StmtScan:
    old = sc.stmt.dims[k]
    if old == iv:
        return sc
    stmt = rename_dims(sc.stmt, {old: iv, iv: old} if iv in sc.stmt.dims else {old: iv})
    return _StmtScan(stmt, prefix_projections(stmt.domain), list(sc.guards))


def _gen_loop(group: list[_StmtScan], k: int, warnings) -> list[AstNode]:
    done = [sc for sc in group if sc.stmt.depth == k]
    if len(done) > 1:
        names = ", ".join(sc.stmt.name for sc in done)
        raise PolyError(f"schedules of {names} are not comparable (identical time tuples)")
    out: list[AstNode] = [_leaf(sc) for sc in done]
    live = sorted((sc for sc in group if sc.stmt.depth > k), key=lambda sc: sc.stmt.order)
    by_dim: dict[str, list[_StmtScan]] = {}
    if live:
        # one loop per schedule slot: statements naming it differently are
        # renamed to the first statement's name (swapping if that name is
        # used deeper in the statement)
        iv = live[0].stmt.dims[k]
        by_dim[iv] = [_rename_level(sc, k, iv) for sc in live]
    for iv, sub in by_dim.items():
        per = []
        for sc in sub:
            cons = sc.proj[k]
            ctx = sc.proj[k - 1] if k > 0 else []
            lo, hi = _bounds_for(cons, iv, ctx)
            if not lo or not hi:
                raise PolyError(f"loop '{iv}' of '{sc.stmt.name}' is unbounded")
            per.append((make_max(lo), make_min(hi)))
        if all(p == per[0] for p in per):
            lower, upper = per[0]
        else:
            lower = make_min([p[0] for p in per])
            upper = make_max([p[1] for p in per])
        if isinstance(lower, AffineExpr) and isinstance(upper, AffineExpr) \
                and lower.is_constant() and upper.is_constant() and lower.const > upper.const:
            if warnings is not None:
                warnings.append(f"loop '{iv}' is empty and was dropped")
            continue
        inner = []
        for sc, (lo, hi) in zip(sub, per):
            guards = list(sc.guards)
            if (lo, hi) != (lower, upper):
                guards.append(Cond(iv, lo, hi))
            inner.append(_StmtScan(sc.stmt, sc.proj, guards))
        body = _gen_static(inner, k + 1, warnings)
        child = body[0] if len(body) == 1 else BlockNode(tuple(body))
        anns = tuple((sc.stmt.name, h) for sc in sub for h in sc.stmt.hw if h.dim == iv)
        out.append(ForNode(iv, lower, upper, child, 1, anns))
    return out


def ast_instances(node: AstNode, env: dict[str, int] | None = None) -> list[tuple[str, dict[str, int]]]:
    """Execute the AST symbolically: (statement name, original iterator
    values) in execution order."""
    env = dict(env or {})
    out: list[tuple[str, dict[str, int]]] = []

    def walk(n: AstNode):
        if isinstance(n, UserNode):
            sub = n.stmt.subst
            out.append((n.stmt.name, {k: sub[k].evaluate(env) for k in n.stmt.compute.iter_names}))
        elif isinstance(n, BlockNode):
            for c in n.children:
                walk(c)
        elif isinstance(n, IfNode):
            if all(eval_bound(c.lower, env) <= env[c.iv] <= eval_bound(c.upper, env) for c in n.conds):
                walk(n.child)
        else:
            lo, hi = eval_bound(n.lower, env), eval_bound(n.upper, env)
            for v in range(lo, hi + 1):
                env[n.iv] = v
                walk(n.child)
            env.pop(n.iv, None)

    walk(node)
    return out


def format_ast(node: AstNode, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(node, BlockNode):
        return "".join(format_ast(c, indent) for c in node.children)
    if isinstance(node, UserNode):
        s = node.stmt
        sub = s.subst
        args = ", ".join(format_affine(sub[n], s.dims) for n in s.compute.iter_names)
        return f"{pad}{s.name}({args})\n"
    if isinstance(node, IfNode):
        cond = " && ".join(f"{format_bound(c.lower)} <= {c.iv} <= {format_bound(c.upper)}" for c in node.conds)
        return f"{pad}if ({cond}) {{\n" + format_ast(node.child, indent + 1) + f"{pad}}}\n"
    anns = []
    for _, h in node.annotations:
        text = f"@pipeline(II={h.value})" if h.kind == "pipeline" else f"@unroll(factor={h.value})"
        if text not in anns:
            anns.append(text)
    head = "".join(f"{a} " for a in anns)
    return (f"{pad}{head}for {node.iv} in [{format_bound(node.lower)}, {format_bound(node.upper)}] {{\n"
            + format_ast(node.child, indent + 1) + f"{pad}}}\n")
