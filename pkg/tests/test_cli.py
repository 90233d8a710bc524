import os
import subprocess
import sys

import numpy as np
import pytest

from signorini.cli import EXIT_MESH, EXIT_OK, EXIT_OUTPUT, EXIT_SOLVER, EXIT_USAGE, main
from signorini.mesh import BoundaryClass, build_unit_square, paper_tagging, read_mesh, write_mesh
from signorini.output import read_records_csv, read_vtk


def summary(text):
    return dict(line.split(None, 1) for line in text.splitlines() if line.strip())


def test_solve_zero_load(tmp_path, capsys):
    assert main(["solve", "--problem", "zero-load", "--output", str(tmp_path)]) == EXIT_OK
    s = summary(capsys.readouterr().out)
    assert float(s["eta"]) == 0 and float(s["S"]) == 0
    assert int(s["N"]) == 72
    for name in ("mesh.txt", "solution.vtk", "indicators.csv"):
        assert (tmp_path / name).exists()


def test_solve_csv_only(tmp_path, capsys):
    assert main(["solve", "--csv-only", "--output", str(tmp_path), "--degree", "1"]) == EXIT_OK
    assert sorted(os.listdir(tmp_path)) == ["indicators.csv"]
    s = summary(capsys.readouterr().out)
    assert float(s["eta"]) > 0 and int(s["active"]) > 0


def test_adapt_dumps_every_step(tmp_path, capsys):
    assert main(["adapt", "--steps", "8", "--output", str(tmp_path)]) == EXIT_OK
    files = sorted(os.listdir(tmp_path))
    assert [f for f in files if f.startswith("mesh_")] == [f"mesh_{i:02d}.txt" for i in range(9)]
    assert [f for f in files if f.startswith("solution_")] == \
        [f"solution_{i:02d}.vtk" for i in range(9)]
    recs = read_records_csv(tmp_path / "convergence.csv")
    assert [r.step for r in recs] == list(range(9))
    last = read_mesh(tmp_path / "mesh_08.txt")
    assert len(read_vtk(tmp_path / "solution_08.vtk").points) == recs[-1].N + \
        np.count_nonzero(np.isclose(last.p[:, 0], 0)) * 2 - 1
    assert "fitted slope" in capsys.readouterr().out


def test_convergence_writes_tables_and_plot(tmp_path):
    args = ["convergence", "--max-dofs", "1500", "--output", str(tmp_path)]
    assert main(args) == EXIT_OK
    assert {"convergence_uniform.csv", "convergence_adaptive.csv",
            "convergence.svg"} <= set(os.listdir(tmp_path))


def test_estimate_ci(capsys):
    assert main(["estimate-ci", "--levels", "2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("C_I") == 2 and "ok" in out


def test_bad_arguments(tmp_path):
    assert main(["solve", "--degree", "3"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["solve", "--load-expr", "x"]) == EXIT_USAGE
    assert main(["solve", "--mesh-file", "m.txt"]) == EXIT_USAGE
    assert main(["adapt", "--theta", "0", "--output", str(tmp_path)]) == EXIT_USAGE


def test_bad_expression(tmp_path):
    write_mesh(build_unit_square(2), tmp_path / "m.txt")
    code = main(["solve", "--mesh-file", str(tmp_path / "m.txt"), "--load-expr", "x +",
                 "--output", str(tmp_path)])
    assert code == EXIT_USAGE


def test_mesh_errors(tmp_path):
    assert main(["solve", "--mesh-file", str(tmp_path / "nope.txt"), "--load-expr", "1"]) == EXIT_MESH
    (tmp_path / "bad.txt").write_text("vertices 3 / triangles 1 / boundary 3\n0 0\n")
    assert main(["solve", "--mesh-file", str(tmp_path / "bad.txt"), "--load-expr", "1"]) == EXIT_MESH


def test_solver_failure(tmp_path):
    with pytest.warns(UserWarning):
        assert main(["solve", "--alpha", "5", "--output", str(tmp_path)]) == EXIT_SOLVER


def test_output_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["solve", "--output", str(blocker / "sub")]) == EXIT_OUTPUT


def test_multi_side_contact_warns(tmp_path):
    def two_sided(x, y):
        tag = paper_tagging(x, y)
        tag[np.abs(y - 1) < 1e-12] = BoundaryClass.CONTACT
        tag[(np.abs(x) < 1e-12) & (y > 0.5)] = BoundaryClass.NEUMANN
        return tag

    write_mesh(build_unit_square(4, two_sided), tmp_path / "m.txt")
    with pytest.warns(UserWarning, match="2 straight sides"):
        code = main(["solve", "--mesh-file", str(tmp_path / "m.txt"), "--load-expr",
                     "x*cos(2*pi*y)", "--output", str(tmp_path), "--csv-only"])
    assert code == EXIT_OK


def run_module(args, env=None):
    return subprocess.run([sys.executable, "-m", "signorini", *args], capture_output=True,
                          text=True, env={**os.environ, **(env or {})})


def test_thread_limit_environment(tmp_path):
    ok = run_module(["solve", "--csv-only", "--output", str(tmp_path)],
                    {"SIGNORINI_THREADS": "1"})
    assert ok.returncode == EXIT_OK, ok.stderr
    bad = run_module(["solve", "--output", str(tmp_path)], {"SIGNORINI_THREADS": "zero"})
    assert bad.returncode == EXIT_USAGE and "SIGNORINI_THREADS" in bad.stderr


def test_help_exits_cleanly():
    assert run_module(["--help"]).returncode == 0
