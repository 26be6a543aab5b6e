import json
import shutil
from pathlib import Path

import pytest

from corpus import KERNEL_DIR
from loomweaver.cli import main, parse_budget, UsageError
from loomweaver.perfmodel import Resources

GOLDEN = Path(__file__).parent / "golden"


def _kernel(name):
    return str(KERNEL_DIR / f"{name}.lw")


def test_writes_c_file(tmp_path):
    out = tmp_path / "gemm.c"
    assert main([_kernel("gemm"), "--emit", "hlsc", "-o", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("#include <stdint.h>") and "void gemm(" in text
    assert [p.name for p in tmp_path.iterdir()] == ["gemm.c"]


def test_stdout_default(capsys):
    assert main([_kernel("seidel")]) == 0
    assert "void seidel(int32_t A[16])" in capsys.readouterr().out


def test_syntax_error_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.lw"
    bad.write_text("func f {\n  iter i = 0..4\n}")
    out = tmp_path / "bad.c"
    assert main([str(bad), "-o", str(out)]) == 1
    err = capsys.readouterr().err
    assert f"{bad}:3:" in err and "error" in err
    assert not out.exists() and list(tmp_path.iterdir()) == [bad]


def test_invalid_input_json_diagnostics(tmp_path, capsys):
    bad = tmp_path / "bad.lw"
    bad.write_text("""func f { iter i = 0..4; array A: f32[4] out;
      compute S1 (i) { A[i] = 1.0; } schedule { S9.unroll(i, 4); } }""")
    assert main([str(bad), "--emit", "json"]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report["diagnostics"][0]["line"] == 2
    assert report["code"] is None


def test_failure_keeps_existing_output(tmp_path):
    out = tmp_path / "keep.c"
    out.write_text("old")
    bad = tmp_path / "bad.lw"
    bad.write_text("func")
    assert main([str(bad), "-o", str(out)]) == 1
    assert out.read_text() == "old"


def test_missing_file():
    assert main(["/nonexistent/x.lw"]) == 1


def test_bad_flag():
    assert main(["--no-such-flag"]) == 1


def test_deps_mode(capsys):
    assert main([_kernel("2mm"), "--emit", "deps"]) == 0
    deps = json.loads(capsys.readouterr().out)
    assert deps["edges"] == [{"from": "S1", "to": "S2", "array": "tmp"}]
    assert deps["nodes"][0]["selfDeps"][0]["distance"] == [0, 0, 1]
    assert deps["paths"] == [["S1", "S2"]]


def test_json_sections_null_when_not_run(capsys):
    assert main([_kernel("gemm"), "--emit", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["dse"] is None and report["check"] is None
    assert report["deps"]["nodes"][0]["name"] == "S1"
    assert report["estimate"]["latency"] > 0 and "void gemm(" in report["code"]


@pytest.mark.parametrize("name", ["bicg", "gemm"])
def test_dse_report_matches_golden(name, capsys):
    assert main([_kernel(name), "--dse", "--emit", "json"]) == 0
    report = json.loads(capsys.readouterr().out)
    golden = json.loads((GOLDEN / f"{name}_dse.json").read_text())
    assert report["dse"]["stage1Trace"] == golden["stage1Trace"]
    assert report["dse"]["final"] == golden["final"]


def test_gemm_report_has_one_node(capsys):
    main([_kernel("gemm"), "--dse", "--emit", "json"])
    final = json.loads(capsys.readouterr().out)["dse"]["final"]
    assert list(final["tiles"]) == ["S1"] and final["ii"]["S1"] >= 1


def test_auto_dse_directive_writes_report(tmp_path):
    # the kernel has no schedule block; append one before the final brace
    src = (KERNEL_DIR / "gemm.lw").read_text().rstrip()
    assert src.endswith("}")
    src = src[:-1] + '  schedule { gemm.auto_dse("r.json"); }\n}\n'
    p = tmp_path / "g.lw"
    p.write_text(src)
    assert main([str(p), "-o", str(tmp_path / "g.c")]) == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert "stage1Trace" in report and report["final"]["tiles"]["S1"]


def test_budget_flag(capsys):
    assert main([_kernel("gemm"), "--dse", "--emit", "json", "--budget", "dsp=0"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["dse"]["budget"]["dsp"] == 0
    assert not any(s["accepted"] for s in report["dse"]["steps"])


def test_cost_table_env(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "costs.cfg"
    cfg.write_text("f32.add.latency = 9\n")
    src = tmp_path / "acc.lw"
    src.write_text("""func acc { iter i = 0..8; iter j = 0..8; array A: f32[8][8] in; array s: f32[8] out;
      compute S (i, j) { s[i] += A[i][j]; } schedule { S.pipeline(j, 1); } }""")
    monkeypatch.setenv("LOOMWEAVER_COST_TABLE", str(cfg))
    assert main([str(src), "--emit", "json"]) == 0
    assert list(json.loads(capsys.readouterr().out)["estimate"]["ii"].values()) == [9]


def test_bad_config_is_diagnostic(tmp_path, monkeypatch):
    cfg = tmp_path / "costs.cfg"
    cfg.write_text("garbage\n")
    monkeypatch.setenv("LOOMWEAVER_COST_TABLE", str(cfg))
    assert main([_kernel("gemm")]) == 1


def test_check_flag(capsys):
    assert main([_kernel("blur"), "--check", "--seed", "2", "--dse"]) == 0
    assert "loopir=ok" in capsys.readouterr().err


@pytest.mark.parametrize("mode", ["loopir", "ast"])
def test_text_modes(mode, capsys):
    assert main([_kernel("jacobi1d"), "--emit", mode]) == 0
    assert "for t in [0, 3]" in capsys.readouterr().out


def test_parse_budget():
    assert parse_budget("dsp=10,lut=20,ff=30") == Resources(10, 20, 30, 280)
    with pytest.raises(UsageError):
        parse_budget("dsp=ten")
    with pytest.raises(UsageError):
        parse_budget("watts=3")


def test_console_script():
    exe = shutil.which("loomweaver")
    if exe is None:
        pytest.skip("console script not on PATH")
    import subprocess
    r = subprocess.run([exe, _kernel("gemm"), "--emit", "ast"], capture_output=True, text=True)
    assert r.returncode == 0 and "S1(i, j, k)" in r.stdout


def test_internal_error_exit_two(monkeypatch, capsys):
    import loomweaver.cli as cli

    def boom(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(cli, "compile_function", boom)
    assert main([_kernel("gemm")]) == 2
    assert "RuntimeError" in capsys.readouterr().err
