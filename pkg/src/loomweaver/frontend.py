"""Textual DSL: program model, parser, validator and pretty-printer.

A program declares iterators and arrays, then a list of computes (one
statement each over an ordered iterator list) and an optional schedule block
of directives that never touch the algorithm itself::

    func gemm {
      iter i = 0..32; iter j = 0..32; iter k = 0..32;
      array A: f32[32][32] in; array B: f32[32][32] in; array C: f32[32][32] out;
      compute S1 (i, j, k) { C[i][j] += A[i][k] * B[k][j]; }
      schedule { S1.tile(i, j, 4, 4, i0, j0, i1, j1); S1.pipeline(j0, 1); }
    }
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

from .affine import AffineExpr, format_affine


class DslError(Exception):
    def __init__(self, diagnostics: list["Diagnostic"]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int | None = None
    col: int | None = None
    severity: str = "error"

    def __str__(self) -> str:
        loc = f"{self.line}:{self.col}: " if self.line is not None else ""
        return f"{loc}{self.severity}: {self.message}"

    def to_json(self) -> dict:
        return {"severity": self.severity, "message": self.message, "line": self.line, "col": self.col}


# ---------------------------------------------------------------------------
# Program model

INT_WIDTHS = (8, 16, 32, 64)
FLOAT_WIDTHS = (32, 64)


@dataclass(frozen=True)
class DataType:
    kind: str  # "int", "uint" or "float"
    bits: int

    def __post_init__(self):
        widths = FLOAT_WIDTHS if self.kind == "float" else INT_WIDTHS
        if self.kind not in ("int", "uint", "float") or self.bits not in widths:
            raise ValueError(f"unsupported data type {self.kind}{self.bits}")

    @property
    def is_float(self) -> bool:
        return self.kind == "float"

    @staticmethod
    def parse(text: str) -> "DataType":
        m = re.fullmatch(r"([iuf])(\d+)", text)
        if not m:
            raise ValueError(f"unknown data type '{text}'")
        kind = {"i": "int", "u": "uint", "f": "float"}[m.group(1)]
        return DataType(kind, int(m.group(2)))

    def __str__(self) -> str:
        return {"int": "i", "uint": "u", "float": "f"}[self.kind] + str(self.bits)


@dataclass(frozen=True)
class IterVar:
    name: str
    lower: int
    upper: int  # exclusive

    @property
    def extent(self) -> int:
        return self.upper - self.lower


DIRECTIONS = ("in", "out", "inout", "temp")


@dataclass(frozen=True)
class Placeholder:
    name: str
    dtype: DataType
    shape: tuple[int, ...]
    direction: str

    @property
    def rank(self) -> int:
        return len(self.shape)


@dataclass(frozen=True)
class Const:
    value: Union[int, float]


@dataclass(frozen=True)
class IterRef:
    name: str


@dataclass(frozen=True)
class Load:
    array: str
    indices: tuple[AffineExpr, ...]


@dataclass(frozen=True)
class BinOp:
    op: str  # + - * /
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


Expr = Union[Const, IterRef, Load, BinOp, Neg]


def iter_loads(e: Expr) -> Iterator[Load]:
    """Loads in left-to-right source order."""
    if isinstance(e, Load):
        yield e
    elif isinstance(e, BinOp):
        yield from iter_loads(e.lhs)
        yield from iter_loads(e.rhs)
    elif isinstance(e, Neg):
        yield from iter_loads(e.operand)


def expr_iters(e: Expr) -> set[str]:
    if isinstance(e, IterRef):
        return {e.name}
    if isinstance(e, Load):
        out: set[str] = set()
        for ix in e.indices:
            out |= ix.names
        return out
    if isinstance(e, BinOp):
        return expr_iters(e.lhs) | expr_iters(e.rhs)
    if isinstance(e, Neg):
        return expr_iters(e.operand)
    return set()


def map_indices(e: Expr, fn) -> Expr:
    """Rebuild ``e`` with every load index (and iterator reference) rewritten
    through ``fn``, which maps an AffineExpr to an AffineExpr."""
    if isinstance(e, Load):
        return Load(e.array, tuple(fn(ix) for ix in e.indices))
    if isinstance(e, BinOp):
        return BinOp(e.op, map_indices(e.lhs, fn), map_indices(e.rhs, fn))
    if isinstance(e, Neg):
        return Neg(map_indices(e.operand, fn))
    return e


@dataclass(frozen=True)
class Compute:
    name: str
    iters: tuple[IterVar, ...]
    dest: str
    dest_indices: tuple[AffineExpr, ...]
    op: str  # "assign" or "accumulate"
    rhs: Expr

    @property
    def iter_names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.iters)

    @property
    def depth(self) -> int:
        return len(self.iters)


# Schedule directives. Each carries its source line for diagnostics only.

@dataclass(frozen=True)
class Interchange:
    compute: str
    i: str
    j: str
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Split:
    compute: str
    dim: str
    factor: int
    outer: str
    inner: str
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Tile:
    compute: str
    i: str
    j: str
    fi: int
    fj: int
    i0: str
    j0: str
    i1: str
    j1: str
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Skew:
    compute: str
    i: str
    j: str
    fi: int
    fj: int
    ni: str
    nj: str
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class After:
    compute: str
    other: str
    level: str | None  # None: no shared loops
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Pipeline:
    compute: str
    dim: str
    ii: int
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Unroll:
    compute: str
    dim: str
    factor: int
    line: int | None = field(default=None, compare=False)


PARTITION_KINDS = ("cyclic", "block", "complete")


@dataclass(frozen=True)
class Partition:
    array: str
    factors: tuple[int, ...]
    kind: str
    line: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class AutoDse:
    function: str
    path: str | None = None
    line: int | None = field(default=None, compare=False)


Directive = Union[Interchange, Split, Tile, Skew, After, Pipeline, Unroll, Partition, AutoDse]
LOOP_DIRECTIVES = (Interchange, Split, Tile, Skew, After)
HW_DIRECTIVES = (Pipeline, Unroll, Partition)


@dataclass(frozen=True)
class Function:
    name: str
    iters: tuple[IterVar, ...]
    placeholders: tuple[Placeholder, ...]
    computes: tuple[Compute, ...]
    directives: tuple[Directive, ...] = ()

    def array(self, name: str) -> Placeholder:
        for p in self.placeholders:
            if p.name == name:
                return p
        raise KeyError(name)

    def compute(self, name: str) -> Compute:
        for c in self.computes:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def wants_dse(self) -> bool:
        return any(isinstance(d, AutoDse) for d in self.directives)


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<float>\d+\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<string>"[^"\n]*")
  | (?P<punct>\.\.|\+=|[{}()\[\],;:.=+\-*/])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise DslError([Diagnostic(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)])
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            tokens.append(Token(kind, tok, line, pos - line_start + 1))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def error(self, msg: str, tok: Token | None = None) -> DslError:
        t = tok or self.tok
        return DslError([Diagnostic(msg, t.line, t.col)])

    def accept(self, text: str) -> Token | None:
        if self.tok.text == text and self.tok.kind in ("punct", "ident"):
            t = self.tok
            self.pos += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            shown = self.tok.text or "end of input"
            raise self.error(f"expected '{text}', found '{shown}'")
        return t

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found '{self.tok.text or 'end of input'}'")
        t = self.tok
        self.pos += 1
        return t

    def integer(self) -> int:
        neg = self.accept("-") is not None
        if self.tok.kind != "int":
            raise self.error(f"expected integer, found '{self.tok.text or 'end of input'}'")
        v = int(self.tok.text)
        self.pos += 1
        return -v if neg else v

    # program := "func" IDENT "{" decl* compute* sched? "}"
    def program(self) -> tuple[str, list, list, list, list]:
        self.expect("func")
        name = self.ident()
        self.expect("{")
        iters, arrays, computes, directives = [], [], [], []
        while self.tok.text in ("iter", "array"):
            if self.accept("iter"):
                n = self.ident()
                self.expect("=")
                lo = self.integer()
                self.expect("..")
                hi = self.integer()
                self.expect(";")
                iters.append((n, lo, hi))
            else:
                self.expect("array")
                n = self.ident()
                self.expect(":")
                dt_tok = self.ident()
                dims = []
                while self.accept("["):
                    dims.append((self.integer(), self.toks[self.pos - 1]))
                    self.expect("]")
                if not dims:
                    raise self.error("array needs at least one dimension")
                dir_tok = self.ident()
                if dir_tok.text not in DIRECTIONS:
                    raise self.error(f"unknown array direction '{dir_tok.text}'", dir_tok)
                self.expect(";")
                arrays.append((n, dt_tok, dims, dir_tok.text))
        while self.tok.text == "compute":
            computes.append(self.compute())
        if self.accept("schedule"):
            self.expect("{")
            while not self.accept("}"):
                directives.append(self.directive())
        self.expect("}")
        if self.tok.kind != "eof":
            raise self.error(f"unexpected '{self.tok.text}' after end of function")
        return name, iters, arrays, computes, directives

    def compute(self):
        self.expect("compute")
        name = self.ident()
        self.expect("(")
        its = [self.ident()]
        while self.accept(","):
            its.append(self.ident())
        self.expect(")")
        self.expect("{")
        dest = self.ident()
        idx = []
        if self.tok.text != "[":
            raise self.error("statement destination must be an array access")
        while self.accept("["):
            idx.append(self.expr())
            self.expect("]")
        if self.accept("+="):
            op = "accumulate"
        else:
            self.expect("=")
            op = "assign"
        rhs = self.expr()
        self.expect(";")
        self.expect("}")
        return name, its, dest, idx, op, rhs

    def expr(self):
        lhs = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "punct":
            op = self.tok
            self.pos += 1
            lhs = ("bin", op.text, lhs, self.term(), op)
        return lhs

    def term(self):
        lhs = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "punct":
            op = self.tok
            self.pos += 1
            lhs = ("bin", op.text, lhs, self.unary(), op)
        return lhs

    def unary(self):
        if self.tok.text == "-" and self.tok.kind == "punct":
            t = self.tok
            self.pos += 1
            return ("neg", self.unary(), t)
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "int":
            self.pos += 1
            return ("const", int(t.text), t)
        if t.kind == "float":
            self.pos += 1
            return ("const", float(t.text), t)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.pos += 1
            if self.tok.text == "[":
                idx = []
                while self.accept("["):
                    idx.append(self.expr())
                    self.expect("]")
                return ("load", t.text, idx, t)
            return ("name", t.text, t)
        raise self.error(f"expected expression, found '{t.text or 'end of input'}'")

    def directive(self):
        target = self.ident()
        self.expect(".")
        prim = self.ident()
        self.expect("(")
        args = []
        if not self.accept(")"):
            args.append(self.arg())
            while self.accept(","):
                args.append(self.arg())
            self.expect(")")
        self.expect(";")
        return target, prim, args

    def arg(self):
        t = self.tok
        if t.kind == "string":
            self.pos += 1
            return ("str", t.text[1:-1], t)
        if t.kind == "ident":
            self.pos += 1
            return ("name", t.text, t)
        if self.accept("{"):
            vals = [self.integer()]
            while self.accept(","):
                vals.append(self.integer())
            self.expect("}")
            return ("list", tuple(vals), t)
        return ("int", self.integer(), t)


_WRAP = 1 << 64


def wrap64(v: int) -> int:
    """Two's-complement 64-bit wraparound used for constant folding."""
    v %= _WRAP
    return v - _WRAP if v >= 1 << 63 else v


def _to_affine(node, allowed: set[str]) -> AffineExpr:
    kind = node[0]
    if kind == "const":
        if isinstance(node[1], float):
            raise DslError([Diagnostic("non-affine index expression (float constant)", node[2].line, node[2].col)])
        return AffineExpr.constant(wrap64(node[1]))
    if kind == "name":
        if node[1] not in allowed:
            raise DslError([Diagnostic(f"unknown iterator '{node[1]}' in index", node[2].line, node[2].col)])
        return AffineExpr.var(node[1])
    if kind == "neg":
        return -_to_affine(node[1], allowed)
    if kind == "load":
        raise DslError([Diagnostic("non-affine index expression (array load)", node[3].line, node[3].col)])
    _, op, lhs, rhs, tok = node
    a, b = _to_affine(lhs, allowed), _to_affine(rhs, allowed)
    if op == "+":
        return AffineExpr.build(list(a.terms) + list(b.terms), wrap64(a.const + b.const))
    if op == "-":
        return AffineExpr.build(list(a.terms) + [(n, -c) for n, c in b.terms], wrap64(a.const - b.const))
    if op == "*":
        if a.is_constant():
            return AffineExpr.build([(n, c * a.const) for n, c in b.terms], wrap64(a.const * b.const))
        if b.is_constant():
            return AffineExpr.build([(n, c * b.const) for n, c in a.terms], wrap64(a.const * b.const))
    raise DslError([Diagnostic("non-affine index expression", tok.line, tok.col)])


def _directive(target: Token, prim: Token, args: list) -> Directive:
    line = target.line
    sig = {
        "interchange": ("name", "name"),
        "split": ("name", "int", "name", "name"),
        "tile": ("name", "name", "int", "int", "name", "name", "name", "name"),
        "skew": ("name", "name", "int", "int", "name", "name"),
        "after": ("name", "level"),
        "pipeline": ("name", "int"),
        "unroll": ("name", "int"),
        "partition": ("list", "str"),
        "auto_dse": ("str?",),
    }
    name = prim.text
    if name == "auto_DSE":
        name = "auto_dse"
    if name not in sig:
        raise DslError([Diagnostic(f"unknown scheduling primitive '{prim.text}'", prim.line, prim.col)])
    expected = sig[name]
    optional = sum(1 for e in expected if e.endswith("?"))
    if not len(expected) - optional <= len(args) <= len(expected):
        raise DslError([Diagnostic(f"{name} takes {len(expected)} argument(s), got {len(args)}", prim.line, prim.col)])
    vals = []
    for (kind, value, tok), want in zip(args, expected):
        want = want.rstrip("?")
        if want == "level":
            if kind == "int" and value == -1:
                vals.append(None)
                continue
            want = "name"
        if kind != want:
            raise DslError([Diagnostic(f"{name}: expected {want} argument, got {kind}", tok.line, tok.col)])
        vals.append(value)
    t = target.text
    if name == "interchange":
        return Interchange(t, *vals, line=line)
    if name == "split":
        return Split(t, *vals, line=line)
    if name == "tile":
        return Tile(t, *vals, line=line)
    if name == "skew":
        return Skew(t, *vals, line=line)
    if name == "after":
        return After(t, *vals, line=line)
    if name == "pipeline":
        return Pipeline(t, *vals, line=line)
    if name == "unroll":
        return Unroll(t, *vals, line=line)
    if name == "partition":
        return Partition(t, vals[0], vals[1], line=line)
    return AutoDse(t, vals[0] if vals else None, line=line)


def _build_expr(node, allowed: set[str], arrays: dict[str, Placeholder]) -> Expr:
    kind = node[0]
    if kind == "const":
        return Const(node[1])
    if kind == "name":
        if node[1] not in allowed:
            raise DslError([Diagnostic(f"unknown identifier '{node[1]}'", node[2].line, node[2].col)])
        return IterRef(node[1])
    if kind == "neg":
        return Neg(_build_expr(node[1], allowed, arrays))
    if kind == "load":
        _, name, idx, tok = node
        if name not in arrays:
            raise DslError([Diagnostic(f"unknown array '{name}'", tok.line, tok.col)])
        if len(idx) != arrays[name].rank:
            raise DslError([Diagnostic(
                f"rank mismatch: '{name}' has rank {arrays[name].rank}, accessed with {len(idx)} index(es)",
                tok.line, tok.col)])
        return Load(name, tuple(_to_affine(i, allowed) for i in idx))
    _, op, lhs, rhs, _tok = node
    return BinOp(op, _build_expr(lhs, allowed, arrays), _build_expr(rhs, allowed, arrays))


def parse_program(text: str | bytes) -> Function:
    """Parse DSL source into a Function.

    Raises DslError carrying line/column diagnostics for every failure mode;
    no other exception escapes.
    """
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DslError([Diagnostic(f"input is not valid UTF-8 ({exc.reason} at byte {exc.start})")]) from None
    try:
        return _parse(text)
    except RecursionError:
        raise DslError([Diagnostic("expression nesting too deep")]) from None


def _parse(text: str) -> Function:
    p = _Parser(text)
    fname, raw_iters, raw_arrays, raw_computes, raw_dirs = p.program()
    seen: dict[str, str] = {}

    def claim(tok: Token, what: str):
        if tok.text in seen:
            raise DslError([Diagnostic(f"duplicate name '{tok.text}' (already declared as {seen[tok.text]})",
                                       tok.line, tok.col)])
        seen[tok.text] = what

    iters: dict[str, IterVar] = {}
    for tok, lo, hi in raw_iters:
        claim(tok, "iterator")
        if lo >= hi:
            raise DslError([Diagnostic(f"iterator '{tok.text}' has empty range {lo}..{hi}", tok.line, tok.col)])
        iters[tok.text] = IterVar(tok.text, lo, hi)
    arrays: dict[str, Placeholder] = {}
    for tok, dt_tok, dims, direction in raw_arrays:
        claim(tok, "array")
        try:
            dtype = DataType.parse(dt_tok.text)
        except ValueError as exc:
            raise DslError([Diagnostic(str(exc), dt_tok.line, dt_tok.col)]) from None
        for extent, etok in dims:
            if extent < 1:
                raise DslError([Diagnostic(f"array '{tok.text}' has non-positive extent {extent}", etok.line, etok.col)])
        arrays[tok.text] = Placeholder(tok.text, dtype, tuple(e for e, _ in dims), direction)
    computes = []
    for name_tok, it_toks, dest_tok, idx, op, rhs in raw_computes:
        claim(name_tok, "compute")
        its = []
        for t in it_toks:
            if t.text not in iters:
                raise DslError([Diagnostic(f"unknown iterator '{t.text}'", t.line, t.col)])
            if any(v.name == t.text for v in its):
                raise DslError([Diagnostic(f"iterator '{t.text}' listed twice", t.line, t.col)])
            its.append(iters[t.text])
        allowed = {v.name for v in its}
        if dest_tok.text not in arrays:
            raise DslError([Diagnostic(f"unknown array '{dest_tok.text}'", dest_tok.line, dest_tok.col)])
        dest = arrays[dest_tok.text]
        if len(idx) != dest.rank:
            raise DslError([Diagnostic(
                f"rank mismatch: '{dest.name}' has rank {dest.rank}, accessed with {len(idx)} index(es)",
                dest_tok.line, dest_tok.col)])
        computes.append(Compute(
            name_tok.text, tuple(its), dest.name,
            tuple(_to_affine(i, allowed) for i in idx), op,
            _build_expr(rhs, allowed, arrays)))
    directives = tuple(_directive(*d) for d in raw_dirs)
    return Function(fname.text, tuple(iters.values()), tuple(arrays.values()), tuple(computes), directives)


# ---------------------------------------------------------------------------
# Validation


def validate(f: Function) -> list[Diagnostic]:
    """Check type invariants and directive referents; never raises."""
    out: list[Diagnostic] = []

    def err(msg: str, line: int | None = None):
        out.append(Diagnostic(msg, line))

    names: set[str] = set()
    for group in (f.iters, f.placeholders, f.computes):
        for obj in group:
            if obj.name in names:
                err(f"duplicate name '{obj.name}'")
            names.add(obj.name)
    for v in f.iters:
        if v.lower >= v.upper:
            err(f"iterator '{v.name}' has empty range")
    arrays = {p.name: p for p in f.placeholders}
    for p in f.placeholders:
        if not p.shape or any(e < 1 for e in p.shape):
            err(f"array '{p.name}' needs positive extents")
        if p.direction not in DIRECTIONS:
            err(f"array '{p.name}' has unknown direction '{p.direction}'")

    dims: dict[str, list[str]] = {}
    for c in f.computes:
        own = set(c.iter_names)
        if len(own) != len(c.iters):
            err(f"compute '{c.name}' repeats an iterator")
        dims[c.name] = list(c.iter_names)
        dest = arrays.get(c.dest)
        if dest is None:
            err(f"compute '{c.name}': unknown array '{c.dest}'")
        else:
            if dest.direction == "in":
                err(f"compute '{c.name}' writes input array '{c.dest}'")
            if len(c.dest_indices) != dest.rank:
                err(f"compute '{c.name}': rank mismatch on '{c.dest}'")
        used = expr_iters(c.rhs)
        for ix in c.dest_indices:
            used |= ix.names
        for n in sorted(used - own):
            err(f"compute '{c.name}' references iterator '{n}' outside its iteration list")
        for ld in iter_loads(c.rhs):
            a = arrays.get(ld.array)
            if a is None:
                err(f"compute '{c.name}': unknown array '{ld.array}'")
            elif len(ld.indices) != a.rank:
                err(f"compute '{c.name}': rank mismatch on '{ld.array}'")

    original = {c.name: set(c.iter_names) for c in f.computes}
    for d in f.directives:
        line = d.line
        if isinstance(d, Partition):
            a = arrays.get(d.array)
            if a is None:
                err(f"partition: unknown array '{d.array}'", line)
                continue
            if len(d.factors) > a.rank:
                err(f"partition: {len(d.factors)} factors for array '{d.array}' of rank {a.rank}", line)
            if d.kind not in PARTITION_KINDS:
                err(f"partition: unknown type '{d.kind}'", line)
            for k, fac in enumerate(d.factors):
                if fac < 0 or (d.kind != "complete" and k < a.rank and fac > a.shape[k]):
                    err(f"partition: bad factor {fac} for dimension {k + 1} of '{d.array}'", line)
            continue
        if isinstance(d, AutoDse):
            if d.function != f.name:
                err(f"auto_dse: unknown function '{d.function}'", line)
            continue
        if d.compute not in dims:
            err(f"unknown compute '{d.compute}'", line)
            continue
        cur = dims[d.compute]

        def need(n: str):
            if n not in cur:
                err(f"{type(d).__name__.lower()}: compute '{d.compute}' has no loop '{n}'", line)
                return False
            return True

        def fresh(*ns: str, allow: tuple[str, ...] = ()):
            ok = True
            for n in ns:
                if (n in cur and n not in allow) or ns.count(n) > 1:
                    err(f"{type(d).__name__.lower()}: loop name '{n}' is not fresh", line)
                    ok = False
            return ok

        if isinstance(d, Interchange):
            if need(d.i) and need(d.j):
                a, b = cur.index(d.i), cur.index(d.j)
                cur[a], cur[b] = cur[b], cur[a]
        elif isinstance(d, Split):
            if d.factor < 2:
                err(f"split: factor must be >= 2, got {d.factor}", line)
            elif need(d.dim) and fresh(d.outer, d.inner):
                k = cur.index(d.dim)
                cur[k:k + 1] = [d.outer, d.inner]
        elif isinstance(d, Tile):
            if d.fi < 1 or d.fj < 1:
                err("tile: factors must be >= 1", line)
            elif d.i == d.j:
                err("tile: the two loops must differ", line)
            elif need(d.i) and need(d.j) and fresh(d.i0, d.j0, d.i1, d.j1):
                k = cur.index(d.i)
                rest = [n for n in cur if n not in (d.i, d.j)]
                before = [n for n in cur[:k] if n in rest]
                after = [n for n in rest if n not in before]
                cur[:] = before + [d.i0, d.j0, d.i1, d.j1] + after
        elif isinstance(d, Skew):
            if d.fj != 1:
                err(f"skew: only unimodular skews (second factor 1) are supported, got {d.fj}", line)
            elif need(d.i) and need(d.j):
                if cur.index(d.i) >= cur.index(d.j):
                    err(f"skew: loop '{d.i}' must be outside '{d.j}'", line)
                elif fresh(d.ni, d.nj, allow=(d.i, d.j)) and d.ni != d.nj:
                    if d.ni == d.j or d.nj == d.i:
                        err("skew: new loop names may only reuse the loop they replace", line)
                    else:
                        cur[cur.index(d.i)] = d.ni
                        cur[cur.index(d.j)] = d.nj
        elif isinstance(d, After):
            if d.other not in dims:
                err(f"after: unknown compute '{d.other}'", line)
            elif d.other == d.compute:
                err("after: a compute cannot be ordered after itself", line)
            elif d.level is not None:
                if d.level not in original[d.compute] or d.level not in original[d.other]:
                    err(f"after: level '{d.level}' must be an original iterator of both computes", line)
                else:
                    mine, theirs = dims[d.compute], dims[d.other]
                    if d.level not in mine or d.level not in theirs:
                        err(f"after: loop '{d.level}' no longer exists", line)
                    elif mine[:mine.index(d.level) + 1] != theirs[:theirs.index(d.level) + 1]:
                        err(f"after: '{d.compute}' and '{d.other}' do not share loops up to '{d.level}'", line)
        elif isinstance(d, Pipeline):
            if d.ii < 1:
                err(f"pipeline: II must be >= 1, got {d.ii}", line)
            need(d.dim)
        elif isinstance(d, Unroll):
            if d.factor < 1:
                err(f"unroll: factor must be >= 1, got {d.factor}", line)
            need(d.dim)
    return out


# ---------------------------------------------------------------------------
# Pretty-printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_expr(e: Expr, iter_order: tuple[str, ...] = ()) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, IterRef):
        return e.name
    if isinstance(e, Load):
        return e.array + "".join(f"[{format_affine(ix, iter_order)}]" for ix in e.indices)
    if isinstance(e, Neg):
        inner = format_expr(e.operand, iter_order)
        return f"-({inner})" if isinstance(e.operand, (BinOp, Neg)) else f"-{inner}"
    prec = _PREC[e.op]
    left = format_expr(e.lhs, iter_order)
    right = format_expr(e.rhs, iter_order)
    if isinstance(e.lhs, BinOp) and _PREC[e.lhs.op] < prec:
        left = f"({left})"
    if isinstance(e.rhs, BinOp) and _PREC[e.rhs.op] <= prec:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def format_directive(d: Directive) -> str:
    if isinstance(d, Interchange):
        return f"{d.compute}.interchange({d.i}, {d.j});"
    if isinstance(d, Split):
        return f"{d.compute}.split({d.dim}, {d.factor}, {d.outer}, {d.inner});"
    if isinstance(d, Tile):
        return f"{d.compute}.tile({d.i}, {d.j}, {d.fi}, {d.fj}, {d.i0}, {d.j0}, {d.i1}, {d.j1});"
    if isinstance(d, Skew):
        return f"{d.compute}.skew({d.i}, {d.j}, {d.fi}, {d.fj}, {d.ni}, {d.nj});"
    if isinstance(d, After):
        return f"{d.compute}.after({d.other}, {d.level if d.level is not None else -1});"
    if isinstance(d, Pipeline):
        return f"{d.compute}.pipeline({d.dim}, {d.ii});"
    if isinstance(d, Unroll):
        return f"{d.compute}.unroll({d.dim}, {d.factor});"
    if isinstance(d, Partition):
        return f"{d.array}.partition({{{', '.join(map(str, d.factors))}}}, \"{d.kind}\");"
    return f"{d.function}.auto_dse(" + (f'"{d.path}"' if d.path is not None else "") + ");"


def format_function(f: Function) -> str:
    lines = [f"func {f.name} {{"]
    for v in f.iters:
        lines.append(f"  iter {v.name} = {v.lower}..{v.upper};")
    for p in f.placeholders:
        dims = "".join(f"[{e}]" for e in p.shape)
        lines.append(f"  array {p.name}: {p.dtype}{dims} {p.direction};")
    for c in f.computes:
        order = c.iter_names
        dest = c.dest + "".join(f"[{format_affine(ix, order)}]" for ix in c.dest_indices)
        op = "+=" if c.op == "accumulate" else "="
        lines.append(f"  compute {c.name} ({', '.join(order)}) {{ {dest} {op} {format_expr(c.rhs, order)}; }}")
    if f.directives:
        lines.append("  schedule {")
        for d in f.directives:
            lines.append("    " + format_directive(d))
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"
