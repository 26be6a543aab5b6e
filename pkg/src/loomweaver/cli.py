"""Command-line driver.

    loomweaver INPUT.lw [-o OUT] [--emit hlsc|loopir|ast|deps|json] [--dse]
                         [--budget dsp=..,lut=..,ff=..] [--allow-reassoc]
                         [--reuse] [--seed N] [--check] [--config FILE]

Exit status is 0 on success, 1 when the input produced diagnostics (or an
equivalence check failed) and 2 on internal errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import traceback
from dataclasses import replace
from pathlib import Path

from .depgraph import build_dep_graph, deps_json
from .dse import DseConfig
from .emit import EmitError, compile_and_run, emit_hls_c, find_compiler
from .frontend import AutoDse, Diagnostic, DslError, Function, parse_program
from .interp import ExecError, outputs_match, random_inputs, run_loopir, run_reference
from .loopir import format_loopir
from .perfmodel import DEFAULT_BUDGET, PerfModel, Resources, estimate_function, load_config
from .pipeline import compile_function
from .polyhedral import build_ast, format_ast

COST_TABLE_ENV = "LOOMWEAVER_COST_TABLE"
EMIT_MODES = ("hlsc", "loopir", "ast", "deps", "json")


class UsageError(Exception):
    pass


def parse_budget(text: str, base: Resources = DEFAULT_BUDGET) -> Resources:
    """``dsp=220,lut=53200,ff=106400[,bram=280]`` on top of ``base``."""
    vals = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip().lower()
        if not sep or key not in ("dsp", "lut", "ff", "bram"):
            raise UsageError(f"bad budget entry '{item}'")
        try:
            vals[key] = int(value)
        except ValueError:
            raise UsageError(f"budget value for {key} must be an integer") from None
        if vals[key] < 0:
            raise UsageError(f"budget value for {key} must be non-negative")
    return replace(base, **vals)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loomweaver", description="Compile a loop DSL program to HLS C.")
    p.add_argument("input", help="program file (.lw), or - for stdin")
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--emit", choices=EMIT_MODES, default="hlsc")
    p.add_argument("--dse", action="store_true", help="run automatic design-space exploration")
    p.add_argument("--budget", help="resource budget, e.g. dsp=220,lut=53200,ff=106400")
    p.add_argument("--allow-reassoc", dest="allow_reassoc", action="store_true", default=None,
                   help="allow unrolling floating-point reductions")
    p.add_argument("--no-allow-reassoc", dest="allow_reassoc", action="store_false")
    p.add_argument("--reuse", action="store_true", help="model DSP reuse across sequential nodes")
    p.add_argument("--seed", type=int, default=0, help="input seed for --check")
    p.add_argument("--check", action="store_true", help="compare compiled program against the reference")
    p.add_argument("--config", help=f"cost table / budget file (default: ${COST_TABLE_ENV})")
    return p


def _atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _tolerance(f: Function) -> float:
    if any(p.dtype.is_float and p.dtype.bits == 32 for p in f.placeholders):
        return 1e-5
    return 1e-12


def run_check(f: Function, ir, code: str | None, seed: int) -> dict:
    """Reference vs loop IR (and vs compiled C when a compiler exists)."""
    inputs = random_inputs(f, seed)
    ref = run_reference(f, inputs)
    rtol = _tolerance(f)
    out = {"seed": seed, "rtol": rtol, "loopir": outputs_match(ref, run_loopir(ir, f, inputs), rtol), "c": None}
    if code is not None and find_compiler() is not None:
        out["c"] = outputs_match(ref, compile_and_run(code, f, inputs), rtol)
    out["passed"] = out["loopir"] and out["c"] is not False
    return out


def _configure(args) -> tuple[DseConfig, dict]:
    costs = None
    budget = DEFAULT_BUDGET
    cfg_path = args.config or os.environ.get(COST_TABLE_ENV)
    if cfg_path:
        try:
            costs, bud = load_config(cfg_path)
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from None
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        budget = replace(budget, **bud)
    if args.budget:
        budget = parse_budget(args.budget, budget)
    return DseConfig(budget=budget, reuse=args.reuse, allow_reassoc=args.allow_reassoc, costs=costs), costs


def _diag_lines(name: str, diags) -> list[str]:
    return [f"{name}:{d}" if d.line is not None else f"{name}: {d}" for d in diags]


def _compile(args, name: str, text: str, report: dict) -> str:
    f = parse_program(text)
    cfg, costs = _configure(args)
    if args.emit == "deps":
        from .pipeline import check
        check(f)
        report["deps"] = deps_json(build_dep_graph(f), f)
        return json.dumps(report["deps"], indent=2) + "\n"
    comp = compile_function(f, dse=True if args.dse else None, cfg=cfg)
    for w in comp.warnings:
        report["diagnostics"].append(Diagnostic(w, severity="warning").to_json())
        print(f"{name}: warning: {w}", file=sys.stderr)
    report["deps"] = deps_json(comp.graph, f)
    model = PerfModel({p.name: p.dtype for p in f.placeholders}, comp.graph.attrs, costs)
    report["estimate"] = estimate_function(comp.ir, comp.graph, model, cfg.reuse).to_json()
    if comp.report is not None:
        report["dse"] = comp.report
        base = Path(name).parent if name != "-" else Path(".")
        for d in f.directives:
            if isinstance(d, AutoDse) and d.path:
                _atomic_write(base / d.path, json.dumps(comp.report, indent=2) + "\n")
    code = emit_hls_c(comp.ir, f)
    if args.check:
        report["check"] = run_check(f, comp.ir, code, args.seed)
    if args.emit == "hlsc":
        return code
    if args.emit == "loopir":
        return format_loopir(comp.ir) + "\n"
    if args.emit == "ast":
        return format_ast(build_ast(comp.stmts)) + "\n"
    report["code"] = code
    return json.dumps(report, indent=2) + "\n"


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; that code is reserved for crashes
        return 0 if exc.code == 0 else 1
    name = args.input
    report = {"input": name, "diagnostics": [], "deps": None, "dse": None, "estimate": None,
              "check": None, "code": None, "output": args.output}
    try:
        text = sys.stdin.read() if name == "-" else Path(name).read_text()
    except OSError as exc:
        print(f"loomweaver: cannot read {name}: {exc.strerror}", file=sys.stderr)
        return 1
    try:
        out = _compile(args, name, text, report)
    except DslError as exc:
        for line in _diag_lines(name, exc.diagnostics):
            print(line, file=sys.stderr)
        if args.emit == "json":
            report["diagnostics"].extend(d.to_json() for d in exc.diagnostics)
            print(json.dumps(report, indent=2))
        return 1
    except UsageError as exc:
        print(f"loomweaver: {exc}", file=sys.stderr)
        return 1
    except (ExecError, EmitError) as exc:
        print(f"{name}: error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2
    if args.output:
        try:
            _atomic_write(args.output, out)
        except OSError as exc:
            print(f"loomweaver: cannot write {args.output}: {exc.strerror}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(out)
    if report["check"] is not None:
        c = report["check"]
        print(f"check seed={c['seed']}: loopir={'ok' if c['loopir'] else 'MISMATCH'} "
              f"c={'skipped' if c['c'] is None else 'ok' if c['c'] else 'MISMATCH'}", file=sys.stderr)
        if not c["passed"]:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
