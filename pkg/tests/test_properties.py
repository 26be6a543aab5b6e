"""Randomized properties: text round-trip, parser totality, and point
preservation / schedule totality under random directive sequences."""

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from corpus import KERNELS, load
from loomweaver.frontend import DslError, format_function, parse_program
from loomweaver.pipeline import schedule_program
from loomweaver.polyhedral import PolyError, ast_instances, build_ast, interchange, skew, split, tile

NAMES = st.sampled_from(["i", "j", "k"])


@st.composite
def programs(draw):
    n = draw(st.integers(1, 3))
    iters = ["i", "j", "k"][:n]
    ext = [draw(st.integers(1, 6)) for _ in iters]
    dtype = draw(st.sampled_from(["f32", "f64", "i32", "i8", "u16", "i64"]))
    lines = [f"func p{draw(st.integers(0, 99))} {{"]
    for it, e in zip(iters, ext):
        lines.append(f"  iter {it} = 0..{e};")
    shape = "".join(f"[{2 * e + 2}]" for e in ext)
    lines.append(f"  array A: {dtype}{shape} in;")
    lines.append(f"  array B: {dtype}{shape} out;")

    def index():
        it = draw(st.sampled_from(iters))
        c = draw(st.integers(0, 2))
        return f"{it} + {c}" if c else it

    def expr(depth=0):
        kind = draw(st.integers(0, 4 if depth < 3 else 1))
        if kind == 0:
            return "A" + "".join(f"[{index()}]" for _ in iters)
        if kind == 1:
            lit = draw(st.integers(0, 9))
            return f"{lit}.5" if dtype.startswith("f") else str(lit)
        if kind == 2:
            return f"-{expr(depth + 1)}"
        op = draw(st.sampled_from(["+", "-", "*"]))
        return f"({expr(depth + 1)} {op} {expr(depth + 1)})"

    op = draw(st.sampled_from(["=", "+="]))
    dest = "B" + "".join(f"[{it}]" for it in iters)
    lines.append(f"  compute S ({', '.join(iters)}) {{ {dest} {op} {expr()}; }}")
    if n >= 2 and draw(st.booleans()):
        lines.append(f"  schedule {{ S.interchange({iters[0]}, {iters[1]}); S.pipeline({iters[1]}, 1); }}")
    lines.append("}")
    return "\n".join(lines)


@settings(max_examples=200, deadline=None)
@given(programs())
def test_format_parse_round_trip(src):
    f = parse_program(src)
    assert parse_program(format_function(f)) == f
    assert format_function(parse_program(format_function(f))) == format_function(f)


TOKENS = st.sampled_from(["func", "f", "{", "}", "iter", "i", "=", "0", "..", "4", ";", "array", "A", ":",
                          "f32", "[", "]", "in", "out", "compute", "S", "(", ")", "+=", "+", "*", "schedule",
                          ".", "split", ",", "\"cyclic\"", "1.5", "-", "/", "//x\n"])


@settings(max_examples=300, deadline=None)
@given(st.one_of(st.text(max_size=80), st.lists(TOKENS, max_size=40).map(" ".join)))
def test_parser_is_total(text):
    try:
        parse_program(text)
    except DslError as exc:
        assert exc.diagnostics


@st.composite
def transformed(draw):
    f = load(draw(st.sampled_from(KERNELS)))
    stmts = schedule_program(f, hardware=False)
    k = draw(st.integers(0, len(stmts) - 1))
    s = stmts[k]
    fresh = iter(f"h{n}" for n in range(100))
    for _ in range(draw(st.integers(1, 4))):
        op = draw(st.sampled_from(["split", "tile", "skew", "interchange"]))
        dims = s.dims
        try:
            if op == "split":
                d = draw(st.sampled_from(dims))
                s = split(s, d, draw(st.integers(2, 5)), next(fresh), next(fresh))
            elif len(dims) >= 2:
                a = draw(st.integers(0, len(dims) - 2))
                x, y = dims[a], dims[a + 1]
                if op == "tile":
                    s = tile(s, x, y, draw(st.integers(1, 4)), draw(st.integers(1, 4)),
                             next(fresh), next(fresh), next(fresh), next(fresh))
                elif op == "skew":
                    s = skew(s, x, y, draw(st.integers(0, 2)), 1, next(fresh), next(fresh))
                else:
                    s = interchange(s, x, dims[draw(st.integers(0, len(dims) - 1))])
        except PolyError:
            pass
    stmts[k] = s
    return f, stmts


def _original_points(c):
    import itertools
    return sorted(itertools.product(*(range(v.lower, v.upper) for v in c.iters)))


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(transformed())
def test_points_preserved_and_schedule_total(case):
    f, stmts = case
    width = max(s.depth for s in stmts)
    times = {}
    for s in stmts:
        got = []
        for p in s.domain.points():
            env = dict(zip(s.dims, p))
            got.append(tuple(s.subst[n].evaluate(env) for n in s.compute.iter_names))
        # bijection between transformed and original instances
        assert sorted(got) == _original_points(s.compute)
        for p in _original_points(s.compute):
            t = s.time(dict(zip(s.compute.iter_names, p)), width)
            assert t not in times
            times[t] = (s.name, p)
    # the generated AST visits instances exactly in schedule order
    seen = [(name, tuple(env[n] for n in f.compute(name).iter_names))
            for name, env in ast_instances(build_ast(stmts))]
    assert seen == [times[t] for t in sorted(times)]
