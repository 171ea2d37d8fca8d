import csv
import subprocess
import sys

import numpy as np
import pytest

from gegenopt.benchmarks import BENCHMARK_SETTINGS, breakwell, breakwell_control, registered_names, registry_get
from gegenopt.cli import build_parser, main, quadcheck_rows, run_sweep
from gegenopt.config import auto_L, load_config, parse_config
from gegenopt.errors import ConfigurationError
from gegenopt.io import element_samples, read_solution, write_csv_samples, write_solution
from gegenopt.nlp import solve
from gegenopt.transcription import Mesh, SpectralSolution, Transcription

# ---------------------------------------------------------------- registry


def test_registry_examples():
    assert registered_names() == ["breakwell", "example1", "example3"]
    b = registry_get("breakwell")
    assert (b.n_x, b.n_u, b.t0, b.tf, b.n_C) == (2, 1, 0.0, 1.0, 1)
    assert b.path_upper[0] == 0.1
    e3 = registry_get("example3")
    assert e3.boundary(np.array([0.1]), 0.0, np.array([0.0]), 2.0) == [0.0]
    assert (e3.x_lower[0], e3.x_upper[0], e3.u_lower[0], e3.u_upper[0], e3.tf) == (0.0, 1.0, -1.0, 1.0, 2.0)
    e1 = registry_get("example1")
    assert e1.n_psi == 2 and e1.u_upper[0] == 1.0
    with pytest.raises(ConfigurationError, match="breakwell, example1, example3"):
        registry_get("nope")


def test_breakwell_exact_control():
    assert breakwell_control(0.0) == pytest.approx(-20 / 3)
    np.testing.assert_allclose(breakwell_control([0.5, 1.0]), [0.0, -200 / 9 + 140 / 9])


def test_benchmark_settings_cover_registry():
    assert sorted(BENCHMARK_SETTINGS) == registered_names()


# ---------------------------------------------------------------- io


@pytest.fixture(scope="module")
def bw_solution():
    p = breakwell()
    mesh = Mesh.from_interfaces([-0.4, 0.4], 6, 5, 5, 8, 4, 0.5)
    T = Transcription(p, mesh)
    r = solve(T.to_nlp(), T.initial_guess(0.0))
    return SpectralSolution(p, mesh, r.z, r.objective, r.status, ["example warning"])


def test_solution_round_trip_is_bitwise(bw_solution, tmp_path):
    path = tmp_path / "bw.sol"
    write_solution(bw_solution, path, ["iter=1 line"])
    rec = read_solution(path)
    assert rec.problem == "breakwell" and rec.mesh == bw_solution.mesh
    for (A0, B0), (A1, B1) in zip(bw_solution.blocks, rec.blocks):
        assert np.array_equal(A0, A1) and np.array_equal(B0, B1)
    assert rec.objective == bw_solution.objective
    assert rec.trace == ["iter=1 line"] and rec.warnings == ["example warning"]
    assert np.array_equal(rec.to_solution(breakwell()).z, bw_solution.z)
    text = path.read_text().splitlines()
    assert text[0] == "gegenopt-solution 1"
    assert [l for l in text if l.startswith("[")] == ["[MESH]", "[COEFFS]", "[OBJECTIVE]", "[TRACE]", "[WARNINGS]"]


def test_solution_reader_rejects_garbage(tmp_path):
    bad = tmp_path / "x.sol"
    bad.write_text("hello\n")
    with pytest.raises(ConfigurationError):
        read_solution(bad)
    bad.write_text("gegenopt-solution 7\n")
    with pytest.raises(ConfigurationError, match="version"):
        read_solution(bad)
    bad.write_text("gegenopt-solution 1\n[MESH]\n")
    with pytest.raises(ConfigurationError, match="missing"):
        read_solution(bad)


def test_csv_samples(bw_solution, tmp_path):
    path = tmp_path / "bw.csv"
    write_csv_samples(bw_solution, path, 20)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["t", "x1", "x2", "u1"]
    assert len(rows) - 1 == 3 * 20
    assert float(rows[1][0]) == 0.0
    assert float(rows[1][3]) == pytest.approx(-20 / 3, abs=0.05)
    with pytest.raises(ConfigurationError):
        element_samples(bw_solution, 1)


def test_interface_samples_continuous(bw_solution):
    t, x, _ = element_samples(bw_solution, 5)
    # last sample of an element and first of the next coincide in time
    for j in (4, 9):
        assert t[j] == pytest.approx(t[j + 1])
        np.testing.assert_allclose(x[:, j], x[:, j + 1], atol=1e-7)


# ---------------------------------------------------------------- config


def test_config_defaults_from_settings():
    cfg = parse_config("[problem]\nname = breakwell\n")
    assert (cfg.alpha, cfg.N, cfg.Lx, cfg.Lu, cfg.M, cfg.Mbar) == (0.5, 18, 17, 17, 16, 4)
    assert (cfg.adapt.eps_R, cfg.adapt.eps_coeff, cfg.adapt.rho, cfg.adapt.eps_ES) == (1e-2, 1e-3, 1.5, 0.1)
    assert cfg.init == 0.0 and cfg.adapt_enabled and cfg.samples_per_element == 20
    assert parse_config("[problem]\nname = example1\n").init == 1.0


def test_config_overrides():
    cfg = parse_config(
        "[problem]\nname = example3\n[mesh]\nalpha = 0.25\nK = 2\nMbar = 5\nrow_mode = bound-min\n"
        "[adapt]\nenabled = no\nrho = 4\nk_max = 3\n[solver]\nfeas_tol = 1e-9\n"
        "[output]\nsamples_per_element = 7\n[sweep]\nalphas = 0, 0.5\nN = 4, 6\nL = auto\n"
    )
    assert cfg.alpha == 0.25 and cfg.K == 2 and cfg.row_mode == "bound-min"
    assert cfg.Mbar == 5 and cfg.adapt.Mbar == 5
    assert not cfg.adapt_enabled and cfg.adapt.rho == 4.0 and cfg.adapt.k_max == 3
    assert cfg.nlp.feas_tol == 1e-9 and cfg.samples_per_element == 7
    assert cfg.sweep.alphas == [0.0, 0.5] and cfg.sweep.N == [4, 6] and cfg.sweep.L is None
    assert cfg.sweep.L_for(0, 4) == 3 and cfg.sweep.L_for(1, 6) == 4
    mesh = cfg.initial_mesh(0.0, 2.0)
    assert mesh.K == 2


def test_auto_degree():
    assert [auto_L(n) for n in (6, 7, 16)] == [4, 5, 9]


@pytest.mark.parametrize(
    "text, match",
    [
        ("[problem]\nname = nope\n", "registered"),
        ("[problem]\nname = breakwell\n[mesh]\nalpha = -0.5\n", "alpha"),
        ("[problem]\nname = breakwell\n[mesh]\nN = many\n", "cannot parse"),
        ("[problem]\nname = breakwell\n[mesh]\nrow_mode = other\n", "row_mode"),
        ("[problem]\nname = breakwell\n[adapt]\nrho = 0.5\n", "rho"),
        ("[problem]\nname = breakwell\n[solver]\nname = snopt\n", "unknown solver"),
        ("[problem]\nname = breakwell\n[extra]\n", "unknown sections"),
        ("[problem]\nname = breakwell\n[mesh]\nn_typo = 3\n", "unknown keys"),
        ("[problem]\nname = breakwell\n[sweep]\nN = 4, 6\nL = 3\n", "one degree"),
        ("[problem]\nname = breakwell\n[output]\nsamples_per_element = 1\n", "samples"),
        ("no section header", "config"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigurationError, match=match):
        parse_config(text, "config")


def test_config_interfaces(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[problem]\nname = example3\n[mesh]\ninterfaces = 0.5, 1.5\n")
    cfg = load_config(path)
    mesh = cfg.initial_mesh(0.0, 2.0)
    np.testing.assert_allclose(mesh.points, [-1.0, -0.5, 0.5, 1.0])
    cfg.interfaces = [2.5]
    with pytest.raises(ConfigurationError):
        cfg.initial_mesh(0.0, 2.0)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.ini")


# ---------------------------------------------------------------- cli


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_cli_solve_breakwell(tmp_path, capsys):
    ini = write(tmp_path, "[problem]\nname = breakwell\n")
    out = tmp_path / "bw.sol"
    code = main(["solve", "--config", str(ini), "--out", str(out)])
    assert code == 0
    rec = read_solution(out)
    assert rec.objective == pytest.approx(40 / 9, abs=1e-3)
    assert (tmp_path / "bw.csv").exists()
    assert "objective" in capsys.readouterr().out


def test_cli_solve_is_deterministic(tmp_path):
    ini = write(tmp_path, "[problem]\nname = example3\n[adapt]\nenabled = false\n")
    a, b = tmp_path / "a.sol", tmp_path / "b.sol"
    assert main(["solve", "--config", str(ini), "--out", str(a)]) == 0
    assert main(["solve", "--config", str(ini), "--out", str(b)]) in (0, 1)
    assert a.read_text() == b.read_text()


def test_cli_solve_trace_and_inline_comments(tmp_path):
    trace = tmp_path / "run.trace"
    ini = write(
        tmp_path,
        "[problem]\nname = example3  ; golden splits\n[adapt]\nenabled = false\n"
        f"[output]\nsolution = {tmp_path / 'e3.sol'}\ntrace = {trace}\n",
    )
    assert main(["solve", "--config", str(ini)]) == 0
    lines = trace.read_text().splitlines()
    assert len(lines) == 1 and lines[0] == read_solution(tmp_path / "e3.sol").trace[0]


def test_cli_malformed_config_writes_nothing(tmp_path, capsys):
    ini = write(tmp_path, "[problem]\nname = breakwell\n[mesh]\nN = x\n")
    out = tmp_path / "never.sol"
    assert main(["solve", "--config", str(ini), "--out", str(out)]) == 2
    assert not out.exists() and not out.with_suffix(".csv").exists()
    assert "configuration error" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "absent.ini")]) == 2


def test_cli_solver_failure_exit_code(tmp_path):
    ini = write(tmp_path, "[problem]\nname = breakwell\n[adapt]\nenabled = false\n[solver]\nmax_iter = 1\nmax_inner = 1\n")
    assert main(["solve", "--config", str(ini), "--out", str(tmp_path / "f.sol")]) == 1


def test_sweep_rows_sorted_and_counted(tmp_path):
    cfg = parse_config("[problem]\nname = breakwell\n[mesh]\nM = 4\n[sweep]\nN = 6, 4\nL = 4, 3\n")
    rows = run_sweep(cfg, [1.0, 0.5], [0.3, 0.7])
    assert [(r["alpha"], r["N"]) for r in rows] == [(0.5, 4), (0.5, 6), (1.0, 4), (1.0, 6)]
    assert [r["L"] for r in rows] == [3, 4, 3, 4]
    for r in rows:
        assert r["J"] == pytest.approx(40 / 9, abs=5e-3)
        assert len(r["last"]) == 3 and len(r["last"][0]) == 3
    with pytest.raises(ConfigurationError):
        run_sweep(cfg, [])
    with pytest.raises(ConfigurationError):
        run_sweep(cfg, [0.5], [0.7, 0.3])


def test_cli_sweep_table(tmp_path):
    ini = write(tmp_path, "[problem]\nname = breakwell\n[mesh]\nM = 4\n[sweep]\nN = 4\nL = 3\nworkers = 2\n")
    out = tmp_path / "t.csv"
    code = main(["sweep", "--config", str(ini), "--alphas", "0.5,0", "--fixed-edges", "0.3,0.7", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(r["alpha"]) for r in rows] == [0.0, 0.5]
    assert "last_e3_u1" in rows[0]
    assert main(["sweep", "--config", str(ini), "--alphas", ""]) == 2


def test_quadcheck(capsys):
    rows = quadcheck_rows(8, 0.5)
    assert len(rows) == 4 and all(r[-1] for r in rows)
    assert main(["quadcheck", "--m", "6", "--alpha", "0"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4
    assert main(["quadcheck", "--m", "0", "--alpha", "0"]) == 2


def test_quadcheck_dump(tmp_path):
    path = tmp_path / "P.txt"
    assert main(["quadcheck", "--m", "4", "--alpha", "0.5", "--dump", str(path)]) == 0
    lines = path.read_text().splitlines()
    assert len(lines) == 8 and len(lines[0].split(",")) == 5


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "gegenopt.cli", "quadcheck", "--m", "4", "--alpha", "0.5"], capture_output=True, text=True)
    assert r.returncode == 0 and "PASS" in r.stdout
