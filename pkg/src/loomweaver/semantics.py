"""C-like static typing of statement expressions.

The interpreter, the C emitter and the cost model all agree on these rules:
integer operands narrower than 32 bits promote to i32, mixed signedness
follows the usual arithmetic conversions, any float operand makes the
operation floating point, and float literals take the destination's float
type (f64 when the destination is an integer).
"""

from __future__ import annotations

from typing import Mapping

from .frontend import BinOp, Const, DataType, Expr, IterRef, Load, Neg

I32 = DataType("int", 32)
I64 = DataType("int", 64)
F32 = DataType("float", 32)
F64 = DataType("float", 64)


def promote(t: DataType) -> DataType:
    if t.is_float or t.bits >= 32:
        return t
    return I32


def common_type(a: DataType, b: DataType) -> DataType:
    if a.is_float or b.is_float:
        if a.is_float and b.is_float:
            return a if a.bits >= b.bits else b
        return a if a.is_float else b
    a, b = promote(a), promote(b)
    if a.kind == b.kind:
        return a if a.bits >= b.bits else b
    u, s = (a, b) if a.kind == "uint" else (b, a)
    if u.bits >= s.bits:
        return u
    return s


def literal_type(value, dest: DataType) -> DataType:
    if isinstance(value, float):
        return dest if dest.is_float else F64
    return I32 if -(1 << 31) <= value < (1 << 31) else I64


def expr_type(e: Expr, dtypes: Mapping[str, DataType], dest: DataType) -> DataType:
    if isinstance(e, Const):
        return literal_type(e.value, dest)
    if isinstance(e, IterRef):
        return I32
    if isinstance(e, Load):
        return dtypes[e.array]
    if isinstance(e, Neg):
        return promote(expr_type(e.operand, dtypes, dest))
    return common_type(expr_type(e.lhs, dtypes, dest), expr_type(e.rhs, dtypes, dest))


def accumulate_expr(dest: Load, rhs: Expr) -> Expr:
    """``dest += rhs`` evaluates as ``dest = dest + rhs``."""
    return BinOp("+", dest, rhs)
