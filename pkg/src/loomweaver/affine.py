"""Affine expressions and the small bound-expression language shared by the
polyhedral layer, the loop IR and the C emitter."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Union


def floordiv(n: int, d: int) -> int:
    return n // d


def ceildiv(n: int, d: int) -> int:
    return -((-n) // d)


@dataclass(frozen=True)
class AffineExpr:
    """Linear combination of named dimensions plus an integer constant.

    ``terms`` is kept sorted by name with zero coefficients dropped, so two
    equal expressions always compare and hash equal.
    """

    terms: tuple[tuple[str, int], ...] = ()
    const: int = 0

    @staticmethod
    def build(coeffs: Mapping[str, int] | Iterable[tuple[str, int]] = (), const: int = 0) -> "AffineExpr":
        acc: dict[str, int] = {}
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        for name, c in items:
            acc[name] = acc.get(name, 0) + c
        return AffineExpr(tuple(sorted((n, c) for n, c in acc.items() if c != 0)), const)

    @staticmethod
    def var(name: str, coeff: int = 1) -> "AffineExpr":
        return AffineExpr.build({name: coeff})

    @staticmethod
    def constant(value: int) -> "AffineExpr":
        return AffineExpr((), value)

    @property
    def coeffs(self) -> dict[str, int]:
        return dict(self.terms)

    def coeff(self, name: str) -> int:
        for n, c in self.terms:
            if n == name:
                return c
        return 0

    @property
    def names(self) -> set[str]:
        return {n for n, _ in self.terms}

    def is_constant(self) -> bool:
        return not self.terms

    def __add__(self, other: "AffineExpr | int") -> "AffineExpr":
        if isinstance(other, int):
            return AffineExpr(self.terms, self.const + other)
        return AffineExpr.build(list(self.terms) + list(other.terms), self.const + other.const)

    __radd__ = __add__

    def __neg__(self) -> "AffineExpr":
        return AffineExpr(tuple((n, -c) for n, c in self.terms), -self.const)

    def __sub__(self, other: "AffineExpr | int") -> "AffineExpr":
        return self + (-other)

    def __rsub__(self, other: int) -> "AffineExpr":
        return (-self) + other

    def __mul__(self, k: int) -> "AffineExpr":
        if k == 0:
            return AffineExpr((), 0)
        return AffineExpr(tuple((n, c * k) for n, c in self.terms), self.const * k)

    __rmul__ = __mul__

    def substitute(self, mapping: Mapping[str, "AffineExpr"]) -> "AffineExpr":
        out = AffineExpr.constant(self.const)
        for n, c in self.terms:
            out = out + (mapping[n] * c if n in mapping else AffineExpr.var(n, c))
        return out

    def rename(self, mapping: Mapping[str, str]) -> "AffineExpr":
        return AffineExpr.build([(mapping.get(n, n), c) for n, c in self.terms], self.const)

    def evaluate(self, env: Mapping[str, int]) -> int:
        return self.const + sum(c * env[n] for n, c in self.terms)

    def content(self) -> int:
        """gcd of the coefficients (0 for a constant)."""
        g = 0
        for _, c in self.terms:
            g = math.gcd(g, c)
        return g

    def interval(self, ranges: Mapping[str, tuple[int, int]]) -> tuple[int, int]:
        lo = hi = self.const
        for n, c in self.terms:
            a, b = ranges[n]
            if c > 0:
                lo += c * a
                hi += c * b
            else:
                lo += c * b
                hi += c * a
        return lo, hi

    def __str__(self) -> str:
        return format_affine(self)

    def __repr__(self) -> str:
        return f"AffineExpr({format_affine(self)!r})"


def format_affine(e: AffineExpr, order: Iterable[str] | None = None) -> str:
    terms = list(e.terms)
    if order is not None:
        rank = {n: i for i, n in enumerate(order)}
        terms.sort(key=lambda t: (rank.get(t[0], len(rank)), t[0]))
    parts: list[str] = []
    for n, c in terms:
        if c == 1:
            s = n
        elif c == -1:
            s = f"-{n}"
        else:
            s = f"{c}*{n}"
        parts.append(s)
    if e.const or not parts:
        parts.append(str(e.const))
    out = parts[0]
    for p in parts[1:]:
        out += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
    return out


# Bound expressions: affine, floor/ceil division by a positive constant, and
# n-ary max/min. Loop bounds are always inclusive.

@dataclass(frozen=True)
class FloorDiv:
    expr: AffineExpr
    div: int


@dataclass(frozen=True)
class CeilDiv:
    expr: AffineExpr
    div: int


@dataclass(frozen=True)
class Max:
    args: tuple["Bound", ...]


@dataclass(frozen=True)
class Min:
    args: tuple["Bound", ...]


Bound = Union[AffineExpr, FloorDiv, CeilDiv, Max, Min]


def eval_bound(b: Bound, env: Mapping[str, int]) -> int:
    if isinstance(b, AffineExpr):
        return b.evaluate(env)
    if isinstance(b, FloorDiv):
        return floordiv(b.expr.evaluate(env), b.div)
    if isinstance(b, CeilDiv):
        return ceildiv(b.expr.evaluate(env), b.div)
    if isinstance(b, Max):
        return max(eval_bound(a, env) for a in b.args)
    return min(eval_bound(a, env) for a in b.args)


def bound_interval(b: Bound, ranges: Mapping[str, tuple[int, int]]) -> tuple[int, int]:
    """Conservative value range of ``b`` when each name varies in ``ranges``."""
    if isinstance(b, AffineExpr):
        return b.interval(ranges)
    if isinstance(b, FloorDiv):
        lo, hi = b.expr.interval(ranges)
        return floordiv(lo, b.div), floordiv(hi, b.div)
    if isinstance(b, CeilDiv):
        lo, hi = b.expr.interval(ranges)
        return ceildiv(lo, b.div), ceildiv(hi, b.div)
    ivs = [bound_interval(a, ranges) for a in b.args]
    if isinstance(b, Max):
        return max(i[0] for i in ivs), max(i[1] for i in ivs)
    return min(i[0] for i in ivs), min(i[1] for i in ivs)


def bound_names(b: Bound) -> set[str]:
    if isinstance(b, AffineExpr):
        return b.names
    if isinstance(b, (FloorDiv, CeilDiv)):
        return b.expr.names
    out: set[str] = set()
    for a in b.args:
        out |= bound_names(a)
    return out


def rename_bound(b: Bound, mapping: Mapping[str, str]) -> Bound:
    if isinstance(b, AffineExpr):
        return b.rename(mapping)
    if isinstance(b, FloorDiv):
        return FloorDiv(b.expr.rename(mapping), b.div)
    if isinstance(b, CeilDiv):
        return CeilDiv(b.expr.rename(mapping), b.div)
    return type(b)(tuple(rename_bound(a, mapping) for a in b.args))


def format_bound(b: Bound) -> str:
    if isinstance(b, AffineExpr):
        return format_affine(b)
    if isinstance(b, FloorDiv):
        return f"floord({format_affine(b.expr)}, {b.div})"
    if isinstance(b, CeilDiv):
        return f"ceild({format_affine(b.expr)}, {b.div})"
    name = "max" if isinstance(b, Max) else "min"
    return f"{name}(" + ", ".join(format_bound(a) for a in b.args) + ")"


def make_max(args: Iterable[Bound]) -> Bound:
    return _fold(list(args), lower=True)


def make_min(args: Iterable[Bound]) -> Bound:
    return _fold(list(args), lower=False)


def _fold(args: list[Bound], lower: bool) -> Bound:
    flat: list[Bound] = []
    cls = Max if lower else Min
    for a in args:
        flat.extend(a.args if isinstance(a, cls) else [a])
    # Drop an affine term whenever another affine term differs from it by a
    # constant in the dominating direction.
    kept: list[Bound] = []
    for a in flat:
        if a in kept:
            continue
        if isinstance(a, AffineExpr):
            dominated = False
            survivors = []
            for k in kept:
                if isinstance(k, AffineExpr) and k.terms == a.terms:
                    better = k.const >= a.const if lower else k.const <= a.const
                    if better:
                        dominated = True
                        survivors.append(k)
                    continue
                survivors.append(k)
            kept = survivors if dominated else survivors + [a]
        else:
            kept.append(a)
    if not kept:
        raise ValueError("empty bound list")
    if len(kept) == 1:
        return kept[0]
    return cls(tuple(kept))
