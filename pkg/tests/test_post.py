import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import born_mesh
from nsmpb.mesh import TetMesh
from nsmpb.model import build_solvent_model
from nsmpb.post import (
    PointLocator,
    average_error,
    concentrations,
    format_vtk,
    interpolate,
    read_vtk,
    trace_csv,
    write_vtk,
)
from nsmpb.solver import NewtonStep, NewtonTrace

GOLDEN_1TET = """# vtk DataFile Version 3.0
nsmpb solution
ASCII
DATASET UNSTRUCTURED_GRID
POINTS 4 double
0 0 0
1 0 0
0 1 0
0 0 1
CELLS 1 5
4 0 1 2 3
CELL_TYPES 1
10
CELL_DATA 1
SCALARS region int 1
LOOKUP_TABLE default
2
POINT_DATA 4
SCALARS f double 1
LOOKUP_TABLE default
0
1
2
3
"""


def one_tet():
    return TetMesh([(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)], [(0, 1, 2, 3)], [2])


def test_concentrations_at_zero_potential():
    c = concentrations(np.zeros(3), build_solvent_model())
    assert c.shape == (3, 4)
    assert np.allclose(c, 0.095923, atol=1e-6)


def test_cation_vanishes_at_large_potential():
    s = build_solvent_model()
    c = concentrations(np.array([60.0]), s)[0]
    cations = np.array(s.charges) > 0
    assert np.all(c[cations] < 1e-20)


@settings(max_examples=60, deadline=None)
@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_saturation_bound_holds_for_every_potential(u):
    s = build_solvent_model()
    c = concentrations(np.array([u]), s)
    assert np.all(c > 0) or u > 700 or u < -700
    assert s.size_factor * c.sum() < 1


def test_vtk_golden_one_tet():
    assert format_vtk(one_tet(), {"f": np.array([0.0, 1.0, 2.0, 3.0])}) == GOLDEN_1TET


def test_vtk_length_mismatch():
    with pytest.raises(ValueError, match="3 values"):
        format_vtk(one_tet(), {"f": np.zeros(3)})


def test_vtk_nan_sentinel_and_round_trip(tmp_path):
    m = born_mesh(8)
    rng = np.random.default_rng(5)
    f = rng.standard_normal(m.n_vertices) * 1e3
    g = f.copy()
    g[::7] = np.nan
    path = write_vtk(m, {"f": f, "g": g}, tmp_path / "out.vtk")
    pts, cells, cell_data, point_data = read_vtk(path.read_text())
    assert np.array_equal(pts, m.vertices)
    assert np.array_equal(cells, m.tets)
    assert set(np.unique(cell_data["region"])) == {1, 2}
    assert np.array_equal(point_data["f"], f)
    assert np.array_equal(np.isnan(point_data["g"]), np.isnan(g))


def test_interpolate_at_vertices_exact():
    m = born_mesh(8)
    f = np.sin(m.vertices[:, 0])
    samples, flags = interpolate(m, f, m.vertices[::13])
    assert np.allclose(samples, f[::13], atol=1e-12) and not flags.any()


def test_interpolate_linear_exact(rng):
    m = born_mesh(8)
    f = m.vertices @ [1.0, 2.0, -3.0] + 4.0
    pts = rng.uniform(-19.9, 19.9, (200, 3))
    samples, flags = interpolate(m, f, pts)
    assert np.allclose(samples, pts @ [1.0, 2.0, -3.0] + 4.0, atol=1e-10)
    assert not flags.any()


def test_interpolate_outside_flagged():
    m = born_mesh(8)
    f = m.vertices[:, 0]
    samples, flags = interpolate(m, f, [[20.01, 0.0, 0.0]])
    assert flags[0]
    assert samples[0] == pytest.approx(20.01)


def test_locator_reuse():
    m = born_mesh(8)
    loc = PointLocator(m)
    a, _ = interpolate(m, m.vertices[:, 1], [[1.0, 2.0, 3.0]], locator=loc)
    assert a[0] == pytest.approx(2.0)


def test_average_error_identical_is_zero():
    m = born_mesh(8)
    f = np.cos(m.vertices[:, 2] / 5)
    assert average_error(m, f, m, f) < 1e-13


def test_average_error_linear_field_is_zero():
    coarse, ref = born_mesh(8), born_mesh(12)
    lin = [0.3, -1.0, 2.0]
    assert average_error(coarse, coarse.vertices @ lin, ref, ref.vertices @ lin) < 1e-12


def test_average_error_homogeneous():
    coarse, ref = born_mesh(8), born_mesh(12)
    a = np.sin(coarse.vertices[:, 0] / 4)
    b = np.zeros(ref.n_vertices)
    e1 = average_error(coarse, a, ref, b)
    assert average_error(coarse, -3 * a, ref, b) == pytest.approx(3 * e1, rel=1e-12)


def test_average_error_disjoint_domains():
    m = one_tet()
    far = TetMesh(m.vertices + 10, m.tets, m.labels)
    with pytest.raises(ValueError):
        average_error(m, np.zeros(4), far, np.zeros(4))


def test_trace_csv_columns():
    tr = NewtonTrace()
    tr.initial_residual = 10.0
    tr.selection = 2
    tr.steps.append(NewtonStep(1, 1.0, 0.1, 0.5, 1.0, 0, 3, 1e-9, 0.0, 2))
    lines = trace_csv(tr).splitlines()
    assert lines[0].startswith("iteration,abs_residual,rel_residual,difference,omega")
    assert len(lines) == 3
    assert lines[2].split(",")[4] == "1"
