import subprocess
import sys

import pytest

from tpilu import CSRMatrix, write_matrix_market
from tpilu.cli import (
    EXIT_BREAKDOWN,
    EXIT_NO_INPUT,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_USAGE,
    main,
)

VOLATILE = ("time_", "run.0.time_", "run.1.time_", "run.2.time_")


def parse(text):
    out = {}
    for line in text.splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


def run(capsys, *argv):
    code = main(list(argv))
    return code, parse(capsys.readouterr().out)


def test_stencil_then_solve(tmp_path, capsys):
    mtx = str(tmp_path / "m.mtx")
    code, rep = run(capsys, "stencil", "--grid", "2", "--out", mtx)
    assert code == EXIT_OK and rep["n"] == "8" and rep["nnz"] == "64"
    code, rep = run(capsys, "solve", "--matrix", mtx, "--k", "0", "--method", "base")
    assert code == EXIT_OK
    assert rep["n"] == "8" and rep["outcome"] == "converged" and rep["method"] == "base"
    assert float(rep["true_residual"]) <= 1e-7


def test_solve_report_fields(capsys):
    code, rep = run(capsys, "solve", "--grid", "6", "--k", "1", "--threads", "3", "--band-size", "20")
    assert code == EXIT_OK
    for key in ("format_version", "tool_version", "n", "nnz", "k", "threads", "band_size",
                "method", "outcome", "iterations", "residual_history", "output_entries",
                "fpa_factor", "fpa_linv", "fpa_uinv", "fpa_total", "time_symbolic",
                "time_numeric", "time_inverse", "time_iterations", "failfast_engaged",
                "entry_count_convention"):
        assert key in rep, key
    assert rep["threads"] == "3" and rep["threads_source"] == "flag" and rep["band_size"] == "20"
    assert len(rep["residual_history"].split(",")) == int(rep["iterations"]) + 1
    total = sum(int(rep[k]) for k in ("fpa_factor", "fpa_linv", "fpa_uinv"))
    assert total == int(rep["fpa_total"])


def test_report_schema_stable(capsys):
    argv = ("solve", "--grid", "5", "--k", "2", "--method", "auto")
    _, first = run(capsys, *argv)
    _, second = run(capsys, *argv)
    strip = lambda r: {k: v for k, v in r.items() if not k.startswith(VOLATILE)}
    assert strip(first) == strip(second)


def test_threads_from_env(capsys, monkeypatch):
    monkeypatch.setenv("TPILU_THREADS", "2")
    _, rep = run(capsys, "solve", "--grid", "3")
    assert rep["threads"] == "2" and rep["threads_source"] == "env"
    monkeypatch.setenv("TPILU_THREADS", "zero")
    with pytest.raises(SystemExit) as info:
        main(["solve", "--grid", "3"])
    assert info.value.code == EXIT_USAGE


def test_default_band_size(capsys):
    _, rep = run(capsys, "solve", "--grid", "3")
    assert rep["band_size"] == "16" and rep["k"] == "1" and rep["method_requested"] == "auto"


def test_report_to_file_and_human(tmp_path, capsys):
    out = tmp_path / "r.txt"
    assert main(["solve", "--grid", "3", "--report", str(out)]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert parse(out.read_text())["n"] == "27"
    main(["solve", "--grid", "3", "--format", "human"])
    text = capsys.readouterr().out
    assert "outcome" in text and "=" not in text


def test_solution_written(tmp_path, capsys):
    sol = tmp_path / "x.txt"
    main(["solve", "--grid", "3", "--solution", str(sol)])
    vals = [float(v) for v in sol.read_text().split()]
    assert len(vals) == 27 and all(abs(v - 1.0) < 1e-6 for v in vals)


def test_pipeline_sim(capsys):
    code, rep = run(capsys, "pipeline-sim", "--bands", "4", "--nodes", "4")
    assert code == EXIT_OK and rep["messages"] == "12"
    for i in range(12):
        fields = dict(kv.split("=") for kv in rep[f"msg.{i}"].split())
        assert int(fields["to"]) == (int(fields["from"]) + 1) % 4


def test_bench_consistent(capsys):
    code, rep = run(capsys, "bench", "--grid", "6", "--k", "2", "--threads", "1,2,4", "--band-size", "10")
    assert code == EXIT_OK and rep["sequentially_consistent"] == "true"
    assert rep["run.0.fpa_total"] == rep["run.2.fpa_total"]
    assert rep["run.0.iterations"] == rep["run.1.iterations"]


def test_missing_file(capsys):
    assert main(["solve", "--matrix", "/nonexistent/m.mtx"]) == EXIT_NO_INPUT


def test_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.mtx"
    bad.write_text("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n")
    assert main(["solve", "--matrix", str(bad)]) == EXIT_PARSE
    assert "line 1" in capsys.readouterr().err


def test_breakdown(tmp_path, capsys):
    m = tmp_path / "z.mtx"
    write_matrix_market(CSRMatrix.from_dense([[0.0, 1.0], [1.0, 0.0]]), m)
    code, rep = run(capsys, "solve", "--matrix", str(m), "--k", "0")
    assert code == EXIT_BREAKDOWN and rep["breakdown_row"] == "0"
    code, rep = run(capsys, "solve", "--matrix", str(m), "--k", "0", "--pivot-perturb", "1e-3",
                    "--max-iters", "5")
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED)


def test_not_converged(capsys):
    code, rep = run(capsys, "solve", "--grid", "8", "--k", "0", "--method", "base", "--max-iters", "1")
    assert code == EXIT_NOT_CONVERGED and rep["outcome"] == "max-iters"


@pytest.mark.parametrize(
    "argv",
    [
        ["solve"],
        ["solve", "--grid", "3", "--matrix", "m.mtx"],
        ["solve", "--grid", "0"],
        ["solve", "--grid", "3", "--rtol", "0"],
        ["solve", "--grid", "3", "--method", "gmres"],
        ["solve", "--grid", "3", "--bogus"],
        ["bench", "--grid", "3", "--threads", "1,x"],
        ["stencil", "--grid", "0", "--out", "x.mtx"],
        ["pipeline-sim", "--bands", "0", "--nodes", "2"],
        [],
    ],
)
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_USAGE


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "tpilu", "pipeline-sim", "--bands", "1", "--nodes", "4"],
                         capture_output=True, text=True, check=True)
    assert "messages=3" in res.stdout
