import pytest

from corpus import load
from loomweaver.affine import Max
from loomweaver.frontend import DslError, Partition, Pipeline, Unroll, parse_program
from loomweaver.loopir import (LoopNode, LoweringError, PartitionAttr, PipelineAttr, UnrollAttr, attach_hw,
                               format_loopir, lower_ast, statements, walk)
from loomweaver.pipeline import compile_function
from loomweaver.polyhedral import BlockNode

FIG8 = """func f { iter t = 0..32; iter i = 0..32; array A: f32[32][32] inout;
  compute S3 (t, i) { A[t][i] = A[t][i] * 2.0; }
  schedule { S3.split(i, 8, i0, i1); S3.pipeline(i1, 1); } }"""


def _loops(ir):
    return [n for n, _, _ in walk(ir.roots) if isinstance(n, LoopNode)]


def test_split_pipeline_nest():
    ir = compile_function(parse_program(FIG8)).ir
    loops = _loops(ir)
    assert [lp.iv for lp in loops] == ["t", "i0", "i1"]
    assert loops[2].attrs == (PipelineAttr(1),)
    assert loops[0].attrs == () and loops[1].attrs == ()
    assert [s.name for s in statements(ir.roots)] == ["S3"]


def test_empty_ast_gives_no_roots():
    f = parse_program("func e { }")
    ir = lower_ast(BlockNode(()), f)
    assert ir.roots == ()


def test_skewed_bound_is_max():
    ir = compile_function(load("seidel")).ir
    inner = _loops(ir)[1]
    assert isinstance(inner.lower, Max) and len(inner.lower.args) == 2


def test_attach_pipeline():
    f = parse_program(FIG8.replace(" S3.pipeline(i1, 1);", ""))
    ir = compile_function(f).ir
    ir2 = attach_hw(ir, Pipeline("S3", "i0", 1))
    assert _loops(ir2)[1].pipeline == PipelineAttr(1)
    assert _loops(ir)[1].attrs == ()


def test_attach_partition_skips_unit_factors():
    ir = compile_function(load("gemm")).ir
    ir2 = attach_hw(ir, Partition("A", (1, 4), "cyclic"))
    assert ir2.array("A").partitions == (PartitionAttr("A", "cyclic", 4, 2),)
    assert ir2.array("A").banks(2) == 4 and ir2.array("A").banks(1) == 1


def test_unroll_full_and_partial():
    ir = compile_function(load("gemm")).ir
    assert _loops(attach_hw(ir, Unroll("S1", "k", 8)))[2].unroll == UnrollAttr(8, True)
    assert _loops(attach_hw(ir, Unroll("S1", "k", 2)))[2].unroll == UnrollAttr(2, False)


def test_unroll_exceeding_trip_count():
    ir = compile_function(load("gemm")).ir
    with pytest.raises(LoweringError):
        attach_hw(ir, Unroll("S1", "k", 9))
    src = FIG8.replace("S3.pipeline(i1, 1);", "S3.unroll(i1, 16);")
    with pytest.raises(DslError):
        compile_function(parse_program(src))


def test_directive_on_eliminated_dim():
    src = FIG8.replace("S3.pipeline(i1, 1);", "S3.pipeline(i, 1);")
    with pytest.raises(DslError):
        compile_function(parse_program(src))


def test_conflicting_attributes():
    src = FIG8.replace("S3.pipeline(i1, 1);", "S3.pipeline(i1, 1); S3.pipeline(i1, 2);")
    with pytest.raises(DslError):
        compile_function(parse_program(src))


def test_format_is_stable(tiled_gemm_src):
    f = parse_program(tiled_gemm_src)
    a = format_loopir(compile_function(f).ir)
    b = format_loopir(compile_function(parse_program(tiled_gemm_src)).ir)
    assert a == b
    assert "for j0 in [0, 7] @pipeline(II=1) {" in a
    assert "for i1 in [0, 3] @unroll(full) {" in a
    assert "array A: f32[32][32] in @partition(cyclic, factor=4, dim=2)" in a
