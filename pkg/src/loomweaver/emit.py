"""HLS C emission from loop IR, plus a standalone test driver used to
compare compiled output against the interpreter."""

from __future__ import annotations

import math
import shutil
import subprocess
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .affine import AffineExpr, Bound, CeilDiv, FloorDiv, Max, Min, format_affine
from .frontend import Const, DataType, Expr, Function, IterRef, Load, Neg
from .loopir import IfNode_, LoopIR, LoopNode, Node, PipelineAttr, StmtNode, UnrollAttr
from .semantics import literal_type

C_TYPES = {
    ("int", 8): "int8_t", ("int", 16): "int16_t", ("int", 32): "int32_t", ("int", 64): "int64_t",
    ("uint", 8): "uint8_t", ("uint", 16): "uint16_t", ("uint", 32): "uint32_t", ("uint", 64): "uint64_t",
    ("float", 32): "float", ("float", 64): "double",
}

_HELPERS = {
    "floord": "static int floord(int n, int d) { return n >= 0 ? n / d : -((-n + d - 1) / d); }",
    "ceild": "static int ceild(int n, int d) { return n >= 0 ? (n + d - 1) / d : -((-n) / d); }",
}


class EmitError(Exception):
    pass


def c_type(t: DataType) -> str:
    return C_TYPES[(t.kind, t.bits)]


def c_affine(e: AffineExpr) -> str:
    return format_affine(e).replace("*", " * ")


def c_bound(b: Bound, used: set[str]) -> str:
    if isinstance(b, AffineExpr):
        return c_affine(b)
    if isinstance(b, FloorDiv):
        used.add("floord")
        return f"floord({c_affine(b.expr)}, {b.div})"
    if isinstance(b, CeilDiv):
        used.add("ceild")
        return f"ceild({c_affine(b.expr)}, {b.div})"
    if isinstance(b, (Max, Min)):
        rel = ">" if isinstance(b, Max) else "<"
        out = c_bound(b.args[0], used)
        for a in b.args[1:]:
            x = c_bound(a, used)
            out = f"(({out}) {rel} ({x}) ? ({out}) : ({x}))"
        return out
    raise EmitError(f"unsupported bound form {b!r}")


def _upper_exclusive(b: Bound, used: set[str]) -> str:
    if isinstance(b, AffineExpr):
        return c_affine(b + 1)
    return f"{c_bound(b, used)} + 1"


def c_literal(value, t: DataType) -> str:
    if t.is_float:
        if not math.isfinite(value):
            raise EmitError(f"non-finite literal {value}")
        if t.bits == 32:
            return f"{float(np.float32(value))!r}f"
        return repr(float(value))
    if t.bits == 64:
        return f"INT64_C({value})"
    return str(value)


def c_expr(e: Expr, dtypes: Mapping[str, DataType], dest: DataType, vals: Mapping[str, AffineExpr]) -> str:
    if isinstance(e, Const):
        return c_literal(e.value, literal_type(e.value, dest))
    if isinstance(e, IterRef):
        return f"({c_affine(vals[e.name])})"
    if isinstance(e, Load):
        return e.array + "".join(f"[{c_affine(ix)}]" for ix in e.indices)
    if isinstance(e, Neg):
        return f"(-{c_expr(e.operand, dtypes, dest, vals)})"
    return f"({c_expr(e.lhs, dtypes, dest, vals)} {e.op} {c_expr(e.rhs, dtypes, dest, vals)})"


def _strip(s: str) -> str:
    return s[1:-1] if s.startswith("(") and s.endswith(")") and _balanced(s[1:-1]) else s


def _balanced(s: str) -> bool:
    depth = 0
    for ch in s:
        depth += ch == "("
        depth -= ch == ")"
        if depth < 0:
            return False
    return depth == 0


def _pragmas(n: LoopNode) -> list[str]:
    out = []
    for a in n.attrs:
        if isinstance(a, PipelineAttr):
            out.append(f"#pragma HLS pipeline II={a.ii}")
        elif isinstance(a, UnrollAttr):
            out.append("#pragma HLS unroll" if a.full else f"#pragma HLS unroll factor={a.factor}")
    return out


def _body(nodes: Sequence[Node], depth: int, dtypes, lines: list[str], used: set[str]):
    pad = "  " * depth
    for n in nodes:
        if isinstance(n, LoopNode):
            lo = c_bound(n.lower, used)
            hi = _upper_exclusive(n.upper, used)
            lines.append(f"{pad}for (int {n.iv} = {lo}; {n.iv} < {hi}; {n.iv}++) {{")
            for p in _pragmas(n):
                lines.append(f"{pad}  {p}")
            _body(n.body, depth + 1, dtypes, lines, used)
            lines.append(f"{pad}}}")
        elif isinstance(n, IfNode_):
            conds = []
            for c in n.conds:
                conds.append(f"{c_bound(c.lower, used)} <= {c.iv} && {c.iv} <= {c_bound(c.upper, used)}")
            lines.append(f"{pad}if ({' && '.join(conds)}) {{")
            _body(n.body, depth + 1, dtypes, lines, used)
            lines.append(f"{pad}}}")
        else:
            lines.append(pad + c_statement(n, dtypes))


def c_statement(s: StmtNode, dtypes: Mapping[str, DataType]) -> str:
    dest = s.dest + "".join(f"[{c_affine(ix)}]" for ix in s.dest_indices)
    op = "+=" if s.op == "accumulate" else "="
    rhs = _strip(c_expr(s.rhs, dtypes, dtypes[s.dest], dict(s.iter_values)))
    return f"{dest} {op} {rhs};"


def emit_hls_c(ir: LoopIR, f: Function) -> str:
    dtypes = {p.name: p.dtype for p in f.placeholders}
    used: set[str] = set()
    body: list[str] = []
    for p in f.placeholders:
        if p.direction == "temp":
            dims = "".join(f"[{e}]" for e in p.shape)
            body.append(f"  {c_type(p.dtype)} {p.name}{dims};")
            body.append(f"  memset({p.name}, 0, sizeof({p.name}));")
    for a in ir.arrays:
        for p in a.partitions:
            if p.kind == "complete":
                body.append(f"  #pragma HLS array_partition variable={p.array} complete dim={p.dim}")
            else:
                body.append(f"  #pragma HLS array_partition variable={p.array} {p.kind} factor={p.factor} dim={p.dim}")
    _body(ir.roots, 1, dtypes, body, used)
    params = [f"{c_type(p.dtype)} {p.name}{''.join(f'[{e}]' for e in p.shape)}"
              for p in f.placeholders if p.direction != "temp"]
    head = ["#include <stdint.h>"]
    if any(p.direction == "temp" for p in f.placeholders):
        head.append("#include <string.h>")
    head.append("")
    for h in sorted(used):
        head.append(_HELPERS[h])
    if used:
        head.append("")
    sig = f"void {f.name}({', '.join(params) if params else 'void'}) {{"
    return "\n".join(head + [sig] + body + ["}"]) + "\n"


# ---------------------------------------------------------------------------
# Compile-and-run check


def _c_value(v, t: DataType) -> str:
    if t.is_float:
        return float(v).hex()
    return f"INT64_C({int(v)})" if t.kind == "int" else f"UINT64_C({int(v)})"


def _initializer(a: np.ndarray, t: DataType) -> str:
    if a.ndim == 1:
        return "{" + ", ".join(_c_value(v, t) for v in a) + "}"
    return "{" + ", ".join(_initializer(x, t) for x in a) + "}"


def emit_test_driver(f: Function, inputs: Mapping[str, np.ndarray]) -> str:
    """C main() that feeds ``inputs`` to the kernel and prints every output
    element (floats as hex for exact round-tripping)."""
    lines = ["#include <stdio.h>", "#include <stdint.h>", ""]
    params = [p for p in f.placeholders if p.direction != "temp"]
    for p in params:
        dims = "".join(f"[{e}]" for e in p.shape)
        decl = f"static {c_type(p.dtype)} g_{p.name}{dims}"
        if p.name in inputs:
            lines.append(f"{decl} = {_initializer(np.asarray(inputs[p.name]), p.dtype)};")
        else:
            lines.append(f"{decl};")
    proto = ", ".join(f"{c_type(p.dtype)} {p.name}{''.join(f'[{e}]' for e in p.shape)}" for p in params)
    lines.append(f"void {f.name}({proto or 'void'});")
    lines.append("")
    lines.append("int main(void) {")
    lines.append(f"  {f.name}({', '.join('g_' + p.name for p in params)});")
    for p in params:
        if p.direction not in ("out", "inout"):
            continue
        n = int(np.prod(p.shape))
        ptr = f"(({c_type(p.dtype)} *)g_{p.name})"
        if p.dtype.is_float:
            fmt, cast = "%a", "(double)"
        elif p.dtype.kind == "int":
            fmt, cast = "%lld", "(long long)"
        else:
            fmt, cast = "%llu", "(unsigned long long)"
        lines.append(f"  for (long k = 0; k < {n}; k++) printf(\"{fmt}\\n\", {cast}{ptr}[k]);")
    lines.append("  return 0;")
    lines.append("}")
    return "\n".join(lines) + "\n"


STRICT_FLAGS = ["-std=c99", "-pedantic", "-Wall", "-Wextra", "-Wno-unknown-pragmas", "-Wno-unused-parameter",
                "-Werror", "-fwrapv", "-O1"]


def find_compiler() -> str | None:
    for cc in ("gcc", "clang", "cc"):
        if shutil.which(cc):
            return cc
    return None


def compile_and_run(code: str, f: Function, inputs: Mapping[str, np.ndarray], cc: str | None = None) -> dict[str, np.ndarray]:
    """Build kernel + driver with strict flags, run it and parse outputs."""
    cc = cc or find_compiler()
    if cc is None:
        raise EmitError("no C compiler found")
    from .interp import np_dtype
    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        (d / "kernel.c").write_text(code)
        (d / "main.c").write_text(emit_test_driver(f, inputs))
        exe = d / "run"
        r = subprocess.run([cc, *STRICT_FLAGS, "-o", str(exe), str(d / "kernel.c"), str(d / "main.c")],
                           capture_output=True, text=True)
        if r.returncode != 0:
            raise EmitError(f"C compilation failed:\n{r.stderr}")
        r = subprocess.run([str(exe)], capture_output=True, text=True, timeout=60)
        if r.returncode != 0:
            raise EmitError(f"compiled kernel exited with {r.returncode}")
    tokens = r.stdout.split()
    out: dict[str, np.ndarray] = {}
    pos = 0
    for p in f.placeholders:
        if p.direction not in ("out", "inout"):
            continue
        n = int(np.prod(p.shape))
        chunk = tokens[pos:pos + n]
        pos += n
        if p.dtype.is_float:
            vals = [float.fromhex(t) for t in chunk]
        else:
            vals = [int(t) for t in chunk]
        out[p.name] = np.array(vals, dtype=np_dtype(p.dtype)).reshape(p.shape)
    return out
