import numpy as np
import pytest

from nsmpb.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_INPUT, EXIT_OK, ConfigError, main, parse_config
from nsmpb.mesh import read_tetgen
from nsmpb.post import read_vtk

BORN = """model = {model}
molecule.charge = 1.0
mesh.born.divisions = 8
output.prefix = {prefix}
output.timings = false
{extra}
"""


def run(tmp_path, prefix="run", model="nsmpb", extra=""):
    cfg = tmp_path / f"{prefix}.cfg"
    cfg.write_text(BORN.format(model=model, prefix=prefix, extra=extra))
    return main(["solve", str(cfg)])


def test_solve_writes_artifacts(tmp_path):
    assert run(tmp_path) == EXIT_OK
    report = (tmp_path / "run.report.txt").read_text()
    assert "newton_iterations" in report and "mesh.born.divisions = 8" in report
    res = np.loadtxt(tmp_path / "run.trace.csv", delimiter=",", skiprows=1, usecols=1)
    assert np.all(np.diff(res) < 0)
    _, _, cells, points = read_vtk((tmp_path / "run.vtk").read_text())
    assert {"u", "phi_t", "zeta", "psi", "c1", "c4"} <= set(points)
    assert set(np.unique(cells["region"])) == {1, 2}


def test_solve_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert run(a) == EXIT_OK and run(b) == EXIT_OK
    for suffix in (".vtk", ".report.txt", ".trace.csv"):
        assert (a / f"run{suffix}").read_bytes() == (b / f"run{suffix}").read_bytes()


def test_nmpb_equals_nsmpb_with_point_ions(tmp_path):
    point_ions = "solvent.species = -1:0.1:0, -1:0.1:0, 1:0.1:0, 1:0.1:0"
    assert run(tmp_path, "p", "nmpb") == EXIT_OK
    assert run(tmp_path, "s", "nsmpb", point_ions) == EXIT_OK
    up = read_vtk((tmp_path / "p.vtk").read_text())[3]["u"]
    us = read_vtk((tmp_path / "s.vtk").read_text())[3]["u"]
    assert np.array_equal(up, us, equal_nan=True)


def test_eps_inf_above_eps_s_rejected(tmp_path, capsys):
    assert run(tmp_path, extra="solvent.eps_inf = 90") == EXIT_CONFIG
    assert "eps_inf < eps_s violated" in capsys.readouterr().err
    assert not (tmp_path / "run.vtk").exists()


def test_config_errors_listed_together():
    with pytest.raises(ConfigError) as info:
        parse_config("bogus = 1\nsolvent.eps_p = abc\nnewton.eta = 5\n")
    keys = " ".join(info.value.problems)
    for part in ("bogus", "solvent.eps_p", "molecule", "mesh", "newton"):
        assert part in keys


def test_config_exclusive_sources(tmp_path):
    (tmp_path / "m.pqr").write_text("ATOM 1 N ALA 1 0 0 0 1 1\n")
    with pytest.raises(ConfigError, match="exclusive"):
        parse_config("molecule.pqr = m.pqr\nmolecule.charge = 1\nmesh.born.divisions = 8\n",
                     tmp_path)
    with pytest.raises(ConfigError, match="not found"):
        parse_config("molecule.pqr = missing.pqr\nmesh.born.divisions = 8\n", tmp_path)


def test_overrides_recorded():
    cfg = parse_config("molecule.charge = 1\nmesh.born.divisions = 8\nsolvent.lambda = 10\n")
    assert cfg.overrides["solvent.lambda"] == "10"
    assert cfg.solvent().lam == 10.0
    assert cfg.newton().selection_order == (2, 1, 3, 4)


def test_pqr_and_tetgen_sources(tmp_path):
    assert main(["gen-mesh", "--divisions", "8", "--out", str(tmp_path / "box")]) == EXIT_OK
    (tmp_path / "ion.pqr").write_text("ATOM 1 NA NA 1 0.0 0.0 0.0 1.0 1.0\n")
    cfg = tmp_path / "t.cfg"
    cfg.write_text("molecule.pqr = ion.pqr\nmesh.node = box.node\nmesh.ele = box.ele\n"
                   "output.prefix = t\n")
    assert main(["solve", str(cfg)]) == EXIT_OK
    assert "Total CPU time" in (tmp_path / "t.report.txt").read_text()


def test_gen_mesh_reloads(tmp_path):
    out = tmp_path / "b4"
    assert main(["gen-mesh", "--halfwidth", "20", "--radius", "5", "--divisions", "4",
                 "--out", str(out)]) == EXIT_OK
    m = read_tetgen(f"{out}.node", f"{out}.ele")
    assert m.n_vertices == 125 and m.n_tets == 384


def test_gen_mesh_radius_too_large(tmp_path):
    assert main(["gen-mesh", "--halfwidth", "5", "--radius", "6",
                 "--out", str(tmp_path / "x")]) == EXIT_INPUT


def test_validate_exit_codes(tmp_path, capsys):
    out = tmp_path / "b"
    main(["gen-mesh", "--divisions", "8", "--out", str(out)])
    assert main(["validate", f"{out}.node", f"{out}.ele"]) == EXIT_OK
    assert "Number of vertices" in capsys.readouterr().out

    node = "5 3 0 0\n1 0 0 0\n2 1 0 0\n3 0 1 0\n4 0 0 1\n5 1 1 1\n"
    (tmp_path / "s.node").write_text(node)
    (tmp_path / "s.ele").write_text("2 4 1\n1 1 2 3 4 2\n2 2 3 4 5 2\n")
    assert main(["validate", str(tmp_path / "s.node"), str(tmp_path / "s.ele")]) == EXIT_FAILED

    # swap two vertices of the first tetrahedron of a valid mesh
    lines = (tmp_path / "b.ele").read_text().splitlines()
    f = lines[1].split()
    f[2], f[3] = f[3], f[2]
    lines[1] = " ".join(f)
    (tmp_path / "r.ele").write_text("\n".join(lines) + "\n")
    assert main(["validate", f"{out}.node", str(tmp_path / "r.ele")]) == EXIT_OK
    assert "orientation_repairs = 1" in capsys.readouterr().out


def test_validate_missing_file(tmp_path):
    assert main(["validate", str(tmp_path / "a.node"), str(tmp_path / "a.ele")]) == EXIT_INPUT
