"""Compile driver: directives to polyhedral statements to loop IR."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .depgraph import DepGraph, build_dep_graph
from .frontend import (After, Diagnostic, DslError, Function, Interchange, Partition, Pipeline, Skew,
                       Split, Tile, Unroll, validate)
from .loopir import LoopIR, LoweringError, lower_ast
from .polyhedral import PolyError, PolyStmt, ScheduleMap, annotate, build_ast, interchange, lift, order_after, skew, split, tile


@dataclass
class Compiled:
    function: Function
    graph: DepGraph
    stmts: list[PolyStmt]
    ir: LoopIR
    warnings: list[str] = field(default_factory=list)
    report: dict | None = None


def place_after(stmts: dict[str, PolyStmt], name: str, other: str, level: str | None) -> PolyStmt:
    """``order_after`` plus a bump past any third statement already sitting
    at the same static slot."""
    s1, _ = order_after(stmts[name], stmts[other], level)
    n = -1 if level is None else s1.dims.index(level)
    st = s1.schedule.statics
    peers = [s for k, s in stmts.items() if k != name
             and s.schedule.statics[:n + 1] == st[:n + 1] and s.dims[:n + 1] == s1.dims[:n + 1]]
    if any(p.schedule.statics[n + 1] == st[n + 1] for p in peers):
        new = list(st)
        new[n + 1] = max(p.schedule.statics[n + 1] for p in peers) + 1
        s1 = replace(s1, schedule=ScheduleMap(tuple(new), s1.dims))
    return s1


def schedule_program(f: Function, hardware: bool = True) -> list[PolyStmt]:
    """Apply the schedule block to lifted statements, in source order."""
    stmts = {c.name: lift(c, None, k) for k, c in enumerate(f.computes)}
    for d in f.directives:
        try:
            if isinstance(d, Interchange):
                stmts[d.compute] = interchange(stmts[d.compute], d.i, d.j)
            elif isinstance(d, Split):
                stmts[d.compute] = split(stmts[d.compute], d.dim, d.factor, d.outer, d.inner)
            elif isinstance(d, Tile):
                stmts[d.compute] = tile(stmts[d.compute], d.i, d.j, d.fi, d.fj, d.i0, d.j0, d.i1, d.j1)
            elif isinstance(d, Skew):
                stmts[d.compute] = skew(stmts[d.compute], d.i, d.j, d.fi, d.fj, d.ni, d.nj)
            elif isinstance(d, After):
                stmts[d.compute] = place_after(stmts, d.compute, d.other, d.level)
            elif hardware and isinstance(d, Pipeline):
                stmts[d.compute] = annotate(stmts[d.compute], "pipeline", d.dim, d.ii)
            elif hardware and isinstance(d, Unroll):
                stmts[d.compute] = annotate(stmts[d.compute], "unroll", d.dim, d.factor)
        except PolyError as exc:
            raise DslError([Diagnostic(str(exc), d.line)]) from None
    return list(stmts.values())


def lower_program(f: Function, stmts: list[PolyStmt], partitions=(), warnings: list[str] | None = None) -> LoopIR:
    try:
        ast = build_ast(stmts, warnings)
        return lower_ast(ast, f, partitions)
    except (PolyError, LoweringError) as exc:
        raise DslError([Diagnostic(str(exc))]) from None


def check(f: Function) -> None:
    errs = [d for d in validate(f) if d.severity == "error"]
    if errs:
        raise DslError(errs)


def compile_function(f: Function, dse: bool | None = None, cfg=None) -> Compiled:
    """Validate, schedule and lower; runs the explorer when requested by
    ``dse`` or by an auto_dse directive."""
    check(f)
    graph = build_dep_graph(f)
    warnings = [d.message for d in graph.diagnostics]
    if dse is None:
        dse = f.wants_dse
    if dse:
        from .dse import DseConfig, auto_dse
        result = auto_dse(f, cfg or DseConfig(), graph)
        return Compiled(f, graph, result.stmts, result.ir, warnings + result.warnings, result.report)
    stmts = schedule_program(f)
    parts = [d for d in f.directives if isinstance(d, Partition)]
    ir = lower_program(f, stmts, parts, warnings)
    return Compiled(f, graph, stmts, ir, warnings)
