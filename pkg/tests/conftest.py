import pytest

from corpus import KERNELS, load

GEMM_SRC = """
func gemm {
  iter i = 0..32; iter j = 0..32; iter k = 0..32;
  array A: f32[32][32] in;  array B: f32[32][32] in;  array C: f32[32][32] out;
  compute S1 (i, j, k) { C[i][j] += A[i][k] * B[k][j]; }
  schedule {
    S1.tile(i, j, 4, 4, i0, j0, i1, j1);
    S1.pipeline(j0, 1);
    S1.unroll(i1, 4);  S1.unroll(j1, 4);
    A.partition({1, 4}, "cyclic");
  }
}
"""


@pytest.fixture
def tiled_gemm_src():
    return GEMM_SRC


@pytest.fixture(params=KERNELS)
def kernel(request):
    return load(request.param)


# one PASS/FAIL line per acceptance criterion at the end of the run

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    n, title = mark.args
    if call.excinfo is not None:
        _CRITERIA[n] = (title, "FAIL")
    elif call.when == "call" and _CRITERIA.get(n, ("", "PASS"))[1] != "FAIL":
        _CRITERIA[n] = (title, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")
