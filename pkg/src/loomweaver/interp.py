"""Reference interpreter for source programs and for loop IR.

Both entry points share one statement evaluator, so any difference in
their outputs comes from instance order alone.
"""

from __future__ import annotations

import itertools
from typing import Callable, Mapping, Sequence

import numpy as np

from .affine import eval_bound
from .depgraph import compute_statics, instance_key
from .frontend import BinOp, Const, DataType, Expr, Function, IterRef, Load, Neg
from .loopir import IfNode_, LoopIR, LoopNode, Node, StmtNode
from .semantics import common_type, expr_type, literal_type, promote


class ExecError(Exception):
    pass


NP_TYPES = {
    ("int", 8): np.int8, ("int", 16): np.int16, ("int", 32): np.int32, ("int", 64): np.int64,
    ("uint", 8): np.uint8, ("uint", 16): np.uint16, ("uint", 32): np.uint32, ("uint", 64): np.uint64,
    ("float", 32): np.float32, ("float", 64): np.float64,
}


def np_dtype(t: DataType):
    return NP_TYPES[(t.kind, t.bits)]


def wrap_int(v: int, t: DataType) -> int:
    v &= (1 << t.bits) - 1
    if t.kind == "int" and v >= 1 << (t.bits - 1):
        v -= 1 << t.bits
    return v


def convert(v, src: DataType, dst: DataType):
    if dst.is_float:
        return np_dtype(dst)(v)
    if src.is_float:
        if not np.isfinite(v):
            raise ExecError(f"conversion of non-finite value {v} to {dst}")
        return wrap_int(int(v), dst)
    return wrap_int(int(v), dst)


def _div_trunc(a: int, b: int) -> int:
    if b == 0:
        raise ExecError("integer division by zero")
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


Env = Mapping[str, int]
Loader = Callable[[str, tuple[int, ...]], object]


def compile_expr(e: Expr, dtypes: Mapping[str, DataType], dest: DataType,
                 iter_value: Callable[[str, Env], int], load: Loader) -> Callable[[Env], object]:
    """Closure computing ``e`` under C typing; returns values of
    ``expr_type(e)``."""
    if isinstance(e, Const):
        t = literal_type(e.value, dest)
        v = np_dtype(t)(e.value) if t.is_float else e.value
        return lambda env: v
    if isinstance(e, IterRef):
        name = e.name
        return lambda env: iter_value(name, env)
    if isinstance(e, Load):
        arr, idx = e.array, e.indices
        t = dtypes[arr]
        if t.is_float:
            return lambda env: load(arr, tuple(ix.evaluate(env) for ix in idx))
        return lambda env: int(load(arr, tuple(ix.evaluate(env) for ix in idx)))
    if isinstance(e, Neg):
        src = expr_type(e.operand, dtypes, dest)
        rt = promote(src)
        inner = compile_expr(e.operand, dtypes, dest, iter_value, load)
        if rt.is_float:
            return lambda env: -inner(env)
        return lambda env: wrap_int(-convert(inner(env), src, rt), rt)
    return _compile_binop(e, dtypes, dest, iter_value, load)


def _compile_binop(e: BinOp, dtypes, dest, iter_value, load):
    lt, rt = expr_type(e.lhs, dtypes, dest), expr_type(e.rhs, dtypes, dest)
    t = common_type(lt, rt)
    lf = compile_expr(e.lhs, dtypes, dest, iter_value, load)
    rf = compile_expr(e.rhs, dtypes, dest, iter_value, load)
    op = e.op
    if t.is_float:
        cast = np_dtype(t)
        if op == "+":
            return lambda env: cast(lf(env)) + cast(rf(env))
        if op == "-":
            return lambda env: cast(lf(env)) - cast(rf(env))
        if op == "*":
            return lambda env: cast(lf(env)) * cast(rf(env))
        return lambda env: cast(lf(env)) / cast(rf(env))

    def ints(env):
        return convert(lf(env), lt, t), convert(rf(env), rt, t)

    if op == "+":
        return lambda env: wrap_int(sum(ints(env)), t)
    if op == "-":
        def sub(env):
            a, b = ints(env)
            return wrap_int(a - b, t)
        return sub
    if op == "*":
        def mul(env):
            a, b = ints(env)
            return wrap_int(a * b, t)
        return mul

    def div(env):
        a, b = ints(env)
        return wrap_int(_div_trunc(a, b), t)
    return div


class _Machine:
    """Array store with bounds-checked access."""

    def __init__(self, f: Function, inputs: Mapping[str, np.ndarray]):
        self.f = f
        self.dtypes = {p.name: p.dtype for p in f.placeholders}
        self.arrays: dict[str, np.ndarray] = {}
        for p in f.placeholders:
            want = np_dtype(p.dtype)
            if p.name in inputs:
                a = np.asarray(inputs[p.name])
                if a.shape != p.shape:
                    raise ExecError(f"array '{p.name}' has shape {a.shape}, expected {p.shape}")
                self.arrays[p.name] = a.astype(want, copy=True)
            elif p.direction in ("in", "inout"):
                raise ExecError(f"missing input array '{p.name}'")
            else:
                self.arrays[p.name] = np.zeros(p.shape, dtype=want)
        self.where = ""

    def check(self, arr: str, idx: tuple[int, ...]):
        shape = self.arrays[arr].shape
        if any(not 0 <= v < n for v, n in zip(idx, shape)):
            raise ExecError(f"out-of-bounds access {arr}{list(idx)} (shape {list(shape)}) at {self.where}")

    def load(self, arr: str, idx: tuple[int, ...]):
        self.check(arr, idx)
        return self.arrays[arr][idx]

    def outputs(self) -> dict[str, np.ndarray]:
        return {p.name: self.arrays[p.name].copy() for p in self.f.placeholders if p.direction in ("out", "inout")}


class _Stmt:
    def __init__(self, m: _Machine, name: str, dest: str, dest_indices, op: str, rhs: Expr,
                 iter_value: Callable[[str, Env], int]):
        self.m, self.name, self.dest, self.idx = m, name, dest, dest_indices
        dt = m.dtypes[dest]
        self.dt = dt
        if op == "accumulate":
            rhs = BinOp("+", Load(dest, tuple(dest_indices)), rhs)
        self.src = expr_type(rhs, m.dtypes, dt)
        self.fn = compile_expr(rhs, m.dtypes, dt, iter_value, m.load)

    def run(self, env: Env, where: str):
        m = self.m
        m.where = where
        v = self.fn(env)
        idx = tuple(e.evaluate(env) for e in self.idx)
        m.check(self.dest, idx)
        m.arrays[self.dest][idx] = convert(v, self.src, self.dt)


def run_reference(f: Function, inputs: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Execute computes in lexicographic iterator order, interleaved by
    their `after`-adjusted static order."""
    m = _Machine(f, inputs)
    statics = compute_statics(f)
    width = max((c.depth for c in f.computes), default=0)
    inst = []
    for k, c in enumerate(f.computes):
        for p in itertools.product(*(range(v.lower, v.upper) for v in c.iters)):
            inst.append((instance_key(statics[c.name], p, width), k, p))
    inst.sort(key=lambda t: (t[0], t[1]))
    runners = [_Stmt(m, c.name, c.dest, c.dest_indices, c.op, c.rhs, lambda n, env: env[n])
               for c in f.computes]
    with np.errstate(all="ignore"):
        for _, k, p in inst:
            c = f.computes[k]
            env = dict(zip(c.iter_names, p))
            runners[k].run(env, f"{c.name}{p}")
    return m.outputs()


def run_loopir(ir: LoopIR, f: Function, inputs: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Execute the loop nests as written; pragmas carry no semantics."""
    m = _Machine(f, inputs)
    cache: dict[int, _Stmt] = {}

    def runner(s: StmtNode) -> _Stmt:
        key = id(s)
        if key not in cache:
            vals = dict(s.iter_values)
            cache[key] = _Stmt(m, s.name, s.dest, s.dest_indices, s.op, s.rhs,
                               lambda n, env: vals[n].evaluate(env))
        return cache[key]

    env: dict[str, int] = {}

    def execute(nodes: Sequence[Node]):
        for n in nodes:
            if isinstance(n, LoopNode):
                lo, hi = eval_bound(n.lower, env), eval_bound(n.upper, env)
                for v in range(lo, hi + 1):
                    env[n.iv] = v
                    execute(n.body)
                env.pop(n.iv, None)
            elif isinstance(n, IfNode_):
                if all(eval_bound(c.lower, env) <= env[c.iv] <= eval_bound(c.upper, env) for c in n.conds):
                    execute(n.body)
            else:
                r = runner(n)
                point = tuple(e.evaluate(env) for _, e in n.iter_values)
                r.run(env, f"{n.name}{point}")

    with np.errstate(all="ignore"):
        execute(ir.roots)
    return m.outputs()


def random_inputs(f: Function, seed: int) -> dict[str, np.ndarray]:
    """Uniform values in [-1, 1] for floats and [-8, 8] for ints ([0, 8]
    for unsigned) for every in/inout array."""
    rng = np.random.default_rng(seed)
    out = {}
    for p in f.placeholders:
        if p.direction not in ("in", "inout"):
            continue
        if p.dtype.is_float:
            out[p.name] = rng.uniform(-1.0, 1.0, p.shape).astype(np_dtype(p.dtype))
        else:
            lo = 0 if p.dtype.kind == "uint" else -8
            out[p.name] = rng.integers(lo, 9, p.shape).astype(np_dtype(p.dtype))
    return out


def outputs_match(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray], rtol: float = 0.0) -> bool:
    """Exact equality for ints; relative tolerance (scaled by the array's
    magnitude) for floats when ``rtol`` > 0."""
    if a.keys() != b.keys():
        return False
    for k in a:
        x, y = a[k], b[k]
        if x.shape != y.shape:
            return False
        if x.dtype.kind == "f" and rtol > 0:
            scale = max(1.0, float(np.max(np.abs(x))) if x.size else 1.0)
            if not np.all(np.abs(x.astype(np.float64) - y.astype(np.float64)) <= rtol * scale):
                return False
        elif not np.array_equal(x, y, equal_nan=x.dtype.kind == "f"):
            return False
    return True
