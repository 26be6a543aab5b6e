"""Optimizing compiler from a loop DSL with a separate schedule block to HLS C."""

from .depgraph import DepGraph, analyze_node, build_dep_graph
from .dse import DseConfig, DseResult, auto_dse
from .emit import emit_hls_c
from .frontend import Diagnostic, DslError, Function, parse_program, validate
from .interp import random_inputs, run_loopir, run_reference
from .loopir import LoopIR, format_loopir
from .perfmodel import PerfModel, Resources
from .pipeline import Compiled, compile_function

__version__ = "0.1.0"

__all__ = [
    "Compiled", "DepGraph", "Diagnostic", "DseConfig", "DseResult", "DslError", "Function", "LoopIR",
    "PerfModel", "Resources", "analyze_node", "auto_dse", "build_dep_graph", "compile_function",
    "emit_hls_c", "format_loopir", "parse_program", "random_inputs", "run_loopir", "run_reference",
    "validate",
]
