import pytest

from loomweaver.frontend import (AutoDse, DataType, DslError, Load, Partition, Split, Tile, format_function,
                                 parse_program, validate)


def _errors(src):
    return [d for d in validate(parse_program(src)) if d.severity == "error"]


def test_gemm_parses(tiled_gemm_src):
    f = parse_program(tiled_gemm_src)
    assert f.name == "gemm"
    assert [p.name for p in f.placeholders] == ["A", "B", "C"]
    assert len(f.computes) == 1
    c = f.computes[0]
    assert c.iter_names == ("i", "j", "k")
    assert c.op == "accumulate"
    assert isinstance(f.directives[0], Tile)
    assert isinstance(f.directives[-1], Partition) and f.directives[-1].factors == (1, 4)
    assert validate(f) == []


def test_empty_function_is_valid():
    f = parse_program("func nothing { }")
    assert f.computes == () and validate(f) == []


def test_iter_range_is_half_open():
    f = parse_program("func f { iter i = 2..10; array A: i32[10] out; compute S (i) { A[i] = i; } }")
    assert (f.iters[0].lower, f.iters[0].upper) == (2, 10)


@pytest.mark.parametrize("index", ["i*i", "A[i]", "1.5"])
def test_non_affine_index_rejected(index):
    src = f"func f {{ iter i = 0..4; array A: i32[4] in; array B: i32[16] out; compute S (i) {{ B[{index}] = A[i]; }} }}"
    with pytest.raises(DslError) as exc:
        parse_program(src)
    assert "non-affine" in str(exc.value) or "affine" in str(exc.value)


def test_syntax_error_has_position():
    with pytest.raises(DslError) as exc:
        parse_program("func f {\n  iter i = 0..4\n  array A: i32[4] out; }")
    d = exc.value.diagnostics[0]
    assert d.line == 3


def test_unknown_compute_in_directive():
    src = """func f { iter i = 0..4; array A: f32[4] out;
      compute S1 (i) { A[i] = 1.0; }
      schedule { S9.unroll(i, 4); } }"""
    errs = _errors(src)
    assert errs and "unknown compute" in errs[0].message
    assert errs[0].line == 3


def test_partition_factor_list_longer_than_rank():
    src = """func f { iter i = 0..4; array A: f32[4] out;
      compute S1 (i) { A[i] = 1.0; }
      schedule { A.partition({1, 2}, "cyclic"); } }"""
    assert _errors(src)


def test_dtypes_and_literals():
    src = """func f { iter i = 0..4; array A: u8[4] in; array B: f64[4] out;
      compute S (i) { B[i] = A[i] * 0.5 + -2; } }"""
    f = parse_program(src)
    assert f.array("A").dtype == DataType("uint", 8)
    assert f.array("B").dtype == DataType("float", 64)


def test_comments_and_whitespace():
    src = "// head\nfunc f{iter i=0..4;array A:i32[4]out;compute S(i){A[i]=i+1;}// tail\n}"
    assert len(parse_program(src).computes) == 1


def test_auto_dse_directive():
    src = """func f { iter i = 0..4; array A: f32[4] out;
      compute S1 (i) { A[i] = 1.0; }
      schedule { f.auto_dse("report.json"); } }"""
    f = parse_program(src)
    assert f.wants_dse and f.directives == (AutoDse("f", "report.json"),)


def test_loads_keep_affine_indices():
    f = parse_program("func f { iter i = 1..4; array A: i32[8] in; array B: i32[8] out;"
                      " compute S (i) { B[i] = A[2*i - 1]; } }")
    ld = f.computes[0].rhs
    assert isinstance(ld, Load)
    assert ld.indices[0].evaluate({"i": 3}) == 5


def test_format_round_trip(kernel):
    again = parse_program(format_function(kernel))
    assert again == kernel


def test_split_directive_fields():
    f = parse_program("""func f { iter i = 0..8; array A: f32[8] out;
      compute S (i) { A[i] = 0.0; } schedule { S.split(i, 4, i0, i1); } }""")
    assert f.directives[0] == Split("S", "i", 4, "i0", "i1")


def test_invalid_utf8():
    with pytest.raises(DslError):
        parse_program(b"func f { \xff }")
