from fractions import Fraction

import pytest

from corpus import load
from loomweaver.depgraph import build_dep_graph
from loomweaver.frontend import parse_program
from loomweaver.loopir import LoopIR
from loomweaver.perfmodel import (DEFAULT_COSTS, PerfModel, Resources, array_memory, estimate_function,
                                  estimate_roots, load_config, parallelism)
from loomweaver.pipeline import compile_function


def _model(f, g=None, costs=None):
    g = g or build_dep_graph(f)
    return PerfModel({p.name: p.dtype for p in f.placeholders}, g.attrs, costs), g


def _estimate(src, costs=None):
    f = parse_program(src)
    comp = compile_function(f)
    model, g = _model(f, comp.graph, costs)
    return estimate_function(comp.ir, g, model)


ACC = """func acc { iter i = 0..32; iter j = 0..32;
  array A: f32[32][32] in; array s: f32[32] out;
  compute S (i, j) { s[i] += A[i][j]; }
  schedule { %s } }"""


def test_pipeline_formula():
    est = _estimate("""func f { iter i = 0..64; array A: f32[64] in; array B: f32[64] out;
      compute S (i) { B[i] = A[i] * 2.0 + 1.0; } schedule { S.pipeline(i, 1); } }""")
    assert est.latency == 63 * 1 + 7
    assert list(est.ii.values()) == [1]


def test_recurrence_raises_ii():
    est = _estimate(ACC % "S.pipeline(j, 1);")
    assert list(est.ii.values()) == [DEFAULT_COSTS["f32.add"].latency] == [4]
    assert est.latency == 32 * (31 * 4 + 4)


def test_interchange_restores_ii_one():
    est = _estimate(ACC % "S.interchange(i, j); S.pipeline(i, 1);")
    assert list(est.ii.values()) == [1]
    assert est.latency == 32 * (31 + 4)


def test_recurrence_follows_cost_table():
    costs = dict(DEFAULT_COSTS)
    costs["f32.add"] = DEFAULT_COSTS["f32.add"].__class__(7, 2, 200, 200)
    est = _estimate(ACC % "S.pipeline(j, 1);", costs)
    assert list(est.ii.values()) == [7]


def test_pipeline_outer_flattens_inner():
    est = _estimate(ACC % "S.interchange(i, j); S.pipeline(j, 1);")
    # the j-carried reduction sits 32 flattened iterations apart
    assert list(est.ii.values()) == [1]
    assert est.latency == 1023 + 4


def test_unroll_replicates_resources():
    base = _estimate(ACC % "S.interchange(i, j); S.pipeline(j, 1);")
    unrolled = _estimate(ACC % "S.interchange(i, j); S.pipeline(j, 1); S.unroll(i, 4);")
    assert unrolled.resources.dsp == 4 * base.resources.dsp
    assert unrolled.latency < base.latency


@pytest.mark.parametrize("tiles, ii, want", [([1, 2, 16], 1, 32), ([1, 32], 2, 16), ([1, 1, 1], 1, 1)])
def test_parallelism(tiles, ii, want):
    assert parallelism(tiles, ii) == want


def test_parallelism_fraction():
    assert parallelism([1, 2], 4) == Fraction(1, 2)


def test_single_node_latency():
    f = load("gemm")
    comp = compile_function(f)
    model, g = _model(f, comp.graph)
    roots = estimate_roots(comp.ir, model)
    assert estimate_function(comp.ir, g, model).latency == roots[0].latency


def test_chain_of_equal_nodes():
    f = parse_program("""func f { iter i = 0..16; array A: f32[16] in; array T: f32[16] temp; array B: f32[16] out;
      compute S1 (i) { T[i] = A[i] * 2.0; } compute S2 (i) { B[i] = T[i] * 2.0; } }""")
    comp = compile_function(f)
    model, g = _model(f, comp.graph)
    roots = estimate_roots(comp.ir, model)
    assert roots[0].latency == roots[1].latency
    assert estimate_function(comp.ir, g, model).latency == 2 * roots[0].latency


def test_3mm_longest_path():
    f = load("3mm")
    comp = compile_function(f)
    model, g = _model(f, comp.graph)
    r = [e.latency for e in estimate_roots(comp.ir, model)]
    assert estimate_function(comp.ir, g, model).latency == max(r[0], r[1]) + r[2]


def test_reuse_takes_max_dsp():
    f = load("2mm")
    comp = compile_function(f)
    model, g = _model(f, comp.graph)
    summed = estimate_function(comp.ir, g, model).resources.dsp
    reused = estimate_function(comp.ir, g, model, reuse=True).resources.dsp
    assert reused * 2 == summed


def test_array_memory_banks():
    f = load("gemm")
    ir = compile_function(f).ir
    # three 8x8 f32 arrays, one 18 Kbit block each
    assert array_memory(ir).bram == 3


def test_fully_partitioned_array_uses_registers():
    f = parse_program("""func f { iter i = 0..4; array A: f32[4] out;
      compute S (i) { A[i] = 0.0; } schedule { A.partition({4}, "complete"); } }""")
    ir = compile_function(f).ir
    assert array_memory(ir) == Resources(ff=128)


def test_budget_fits():
    assert Resources(220, 53200, 106400, 280).fits(Resources(220, 53200, 106400, 280))
    assert not Resources(221, 0, 0, 0).fits(Resources(220, 53200, 106400, 280))


def test_load_config(tmp_path):
    p = tmp_path / "costs.cfg"
    p.write_text("# table\nf32.add.latency = 6\nbudget.dsp = 100\n")
    costs, budget = load_config(p)
    assert costs["f32.add"].latency == 6 and costs["f32.add"].dsp == DEFAULT_COSTS["f32.add"].dsp
    assert budget == {"dsp": 100}


@pytest.mark.parametrize("text", ["f32.add.latency = x", "nonsense", "f32.add.speed = 3", "f32.add.latency = 0"])
def test_load_config_errors(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text + "\n")
    with pytest.raises(ValueError):
        load_config(p)


def test_empty_ir_costs_nothing():
    f = parse_program("func e { }")
    model, g = _model(f)
    est = estimate_function(LoopIR("e", (), ()), g, model)
    assert est.latency == 0 and est.resources == Resources()
