import numpy as np
import pytest

from corpus import load, rtol_for
from loomweaver.frontend import parse_program
from loomweaver.interp import ExecError, outputs_match, random_inputs, run_loopir, run_reference
from loomweaver.pipeline import compile_function

GEMM4 = """func gemm { iter i = 0..4; iter j = 0..4; iter k = 0..4;
  array A: %(t)s[4][4] in; array B: %(t)s[4][4] in; array C: %(t)s[4][4] out;
  compute S1 (i, j, k) { C[i][j] += A[i][k] * B[k][j]; } %(sched)s }"""


def _gemm(t="f32", sched=""):
    return parse_program(GEMM4 % {"t": t, "sched": sched})


def test_identity_gemm():
    f = _gemm()
    b = np.arange(16, dtype=np.float32).reshape(4, 4)
    out = run_reference(f, {"A": np.eye(4, dtype=np.float32), "B": b})
    assert np.array_equal(out["C"], b)


def test_bicg_closed_form():
    f = parse_program("""func bicg { iter i = 0..4; iter j = 0..4;
      array A: f32[4][4] in; array r: f32[4] in; array p: f32[4] in; array s: f32[4] out; array q: f32[4] out;
      compute S1 (i, j) { s[j] += r[i] * A[i][j]; }
      compute S2 (i, j) { q[i] += A[i][j] * p[j]; } }""")
    a = np.arange(16, dtype=np.float32).reshape(4, 4)
    ones = np.ones(4, dtype=np.float32)
    out = run_reference(f, {"A": a, "r": ones, "p": ones})
    assert np.array_equal(out["s"], a.sum(axis=0)) and np.array_equal(out["q"], a.sum(axis=1))


def test_out_of_bounds_names_instance():
    f = parse_program("""func f { iter i = 0..4; array A: i32[4] in; array B: i32[4] out;
      compute S (i) { B[i] = A[i + 1]; } }""")
    with pytest.raises(ExecError) as exc:
        run_reference(f, {"A": np.zeros(4, dtype=np.int32)})
    assert "S(3,)" in str(exc.value)


def test_shape_mismatch_and_missing_input():
    f = _gemm()
    with pytest.raises(ExecError):
        run_reference(f, {"A": np.zeros((3, 4)), "B": np.zeros((4, 4))})
    with pytest.raises(ExecError):
        run_reference(f, {"A": np.zeros((4, 4))})


def test_untransformed_loopir_equals_reference(kernel):
    ir = compile_function(kernel).ir
    for seed in range(3):
        x = random_inputs(kernel, seed)
        assert outputs_match(run_reference(kernel, x), run_loopir(ir, kernel, x))


def test_tiled_interchanged_int_gemm_exact():
    f = _gemm("i32", "schedule { S1.tile(i, j, 2, 2, i0, j0, i1, j1); S1.interchange(i1, k); }")
    ir = compile_function(f).ir
    x = random_inputs(f, 4)
    assert outputs_match(run_reference(f, x), run_loopir(ir, f, x))


def test_skewed_jacobi1d_close():
    f = load("jacobi1d")
    from dataclasses import replace
    from loomweaver.frontend import Skew
    g = replace(f, directives=f.directives + (Skew("S1", "t", "i", 1, 1, "t", "w"),
                                              Skew("S2", "t", "i", 1, 1, "t", "w")))
    ir = compile_function(g).ir
    x = random_inputs(f, 0)
    assert outputs_match(run_reference(f, x), run_loopir(ir, g, x), rtol_for(f))


def test_integer_division_truncates():
    f = parse_program("""func f { iter i = 0..4; array A: i32[4] in; array B: i32[4] out;
      compute S (i) { B[i] = A[i] / 2; } }""")
    out = run_reference(f, {"A": np.array([-3, -1, 1, 3], dtype=np.int32)})
    assert out["B"].tolist() == [-1, 0, 0, 1]


def test_division_by_zero():
    f = parse_program("""func f { iter i = 0..2; array A: i32[2] in; array B: i32[2] out;
      compute S (i) { B[i] = 1 / A[i]; } }""")
    with pytest.raises(ExecError):
        run_reference(f, {"A": np.zeros(2, dtype=np.int32)})


def test_signed_wraparound():
    f = parse_program("""func f { iter i = 0..1; array A: i32[1] in; array B: i32[1] out;
      compute S (i) { B[i] = A[i] + 1; } }""")
    out = run_reference(f, {"A": np.array([2**31 - 1], dtype=np.int32)})
    assert out["B"][0] == -2**31


def test_f32_arithmetic_is_single_precision():
    f = parse_program("""func f { iter i = 0..10; array A: f32[1] out;
      compute S (i) { A[0] += 0.1; } }""")
    got = run_reference(f, {})["A"][0]
    want = np.float32(0)
    for _ in range(10):
        want = np.float32(want + np.float32(0.1))
    assert got == want and got.dtype == np.float32


def test_deterministic(kernel):
    x = random_inputs(kernel, 7)
    a, b = run_reference(kernel, x), run_reference(kernel, x)
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_random_input_ranges():
    f = load("blur")
    for arr in random_inputs(f, 1).values():
        assert arr.min() >= -8 and arr.max() <= 8
    for arr in random_inputs(load("gemm"), 1).values():
        assert arr.min() >= -1 and arr.max() <= 1


def test_outputs_match_tolerance():
    a = {"x": np.array([1.0, 2.0], dtype=np.float32)}
    b = {"x": np.array([1.0, 2.00001], dtype=np.float32)}
    assert not outputs_match(a, b)
    assert outputs_match(a, b, 1e-5)
