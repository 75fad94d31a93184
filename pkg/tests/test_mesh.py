import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CUBE_TETS, CUBE_VERTICES, born_mesh, two_tet_mesh, unit_cube_mesh
from nsmpb.mesh import (
    MeshError,
    MeshFormatError,
    RegionLabel,
    TetMesh,
    format_tetgen,
    gen_born_mesh,
    load_tetgen,
    read_tetgen,
    signed_volumes,
    validate,
    write_tetgen,
)

NODE_5 = """5 3 0 0
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
5 1 1 1
"""


def test_two_tet_interface():
    m = two_tet_mesh()
    assert len(m.interface_tris) == 1
    assert sorted(m.interface_tris[0]) == [1, 2, 3]
    assert np.allclose(m.interface_normals[0], np.ones(3) / np.sqrt(3))
    r = validate(m)
    assert (r.n_tets_protein, r.n_tets_solvent, r.n_interface_tris) == (1, 1, 1)


def test_cube_single_region():
    m = unit_cube_mesh()
    assert len(m.interface_tris) == 0
    assert sorted(m.boundary_vertices) == list(range(8))
    assert m.volumes.sum() == pytest.approx(1.0, abs=1e-14)
    assert not validate(m).ok


def test_load_tetgen_two_tets():
    ele = "2 4 1\n1 1 2 3 4 1\n2 2 3 4 5 2\n"
    m = load_tetgen(NODE_5, ele)
    assert m.n_vertices == 5 and m.n_tets == 2
    assert list(m.labels) == [RegionLabel.PROTEIN, RegionLabel.SOLVENT]


def test_load_tetgen_out_of_range_names_line():
    node = "10 3 0 0\n" + "".join(f"{i} {i} 0 0\n" for i in range(1, 11))
    ele = "1 4 1\n# comment\n1 1 2 3 999 2\n"
    with pytest.raises(MeshFormatError, match="line 3"):
        load_tetgen(node, ele)


def test_load_tetgen_bad_attribute():
    with pytest.raises(MeshFormatError, match="attribute"):
        load_tetgen(NODE_5, "1 4 1\n1 1 2 3 4 3\n")


def test_load_tetgen_missing_attribute():
    with pytest.raises(MeshFormatError):
        load_tetgen(NODE_5, "1 4 0\n1 1 2 3 4\n")


def test_inverted_tet_repaired_and_reported():
    ele = "2 4 1\n1 1 3 2 4 1\n2 2 3 4 5 2\n"
    m = load_tetgen(NODE_5, ele)
    assert m.n_repaired == 1
    assert np.all(signed_volumes(m.vertices, m.tets) > 0)
    assert validate(m).orientation_repairs == 1


def test_tetgen_round_trip(tmp_path):
    m = gen_born_mesh(20, 5, 4)
    node, ele = write_tetgen(m, tmp_path / "born")
    back = read_tetgen(node, ele)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.tets, m.tets)
    assert np.array_equal(back.labels, m.labels)
    assert format_tetgen(back) == format_tetgen(m)


def test_born_counts():
    m = gen_born_mesh(20, 5, 4)
    assert (m.n_vertices, m.n_tets) == (125, 384)


@pytest.mark.parametrize("n", [8, 12, 16])
def test_born_interface_on_sphere_and_closed(n):
    m = born_mesh(n)
    r = np.linalg.norm(m.vertices[m.interface_vertices], axis=1)
    assert np.allclose(r, 5.0, atol=1e-12)
    rep = validate(m)
    assert rep.ok and rep.interface_closed and rep.interface_orientable
    assert rep.interface_euler == 2
    assert rep.orientation_repairs == 0


def test_born_normals_point_outward():
    m = born_mesh(8)
    centers = m.vertices[m.interface_tris].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", centers, m.interface_normals) > 0)


def test_born_box_preserved():
    m = born_mesh(8)
    lo, hi = m.box
    assert np.allclose(lo, -20) and np.allclose(hi, 20)
    assert m.volumes.sum() == pytest.approx(40.0**3, rel=1e-12)


def test_born_tiny_sphere_rejected():
    with pytest.raises(MeshError, match="interface empty"):
        gen_born_mesh(20, 1.0, 8)


@pytest.mark.parametrize("a", [20.0, 25.0, 0.0])
def test_born_radius_out_of_range(a):
    with pytest.raises(MeshError):
        gen_born_mesh(20, a, 8)


def test_born_snap_method():
    m = gen_born_mesh(20, 5, 16, snap_fraction=0.3, method="snap")
    assert (m.n_vertices, m.n_tets) == (17**3, 6 * 16**3)
    assert validate(m).interface_closed


def test_validation_report_text():
    text = validate(born_mesh(8)).to_text()
    assert "Number of vertices" in text and "orientation_repairs = 0" in text


def test_non_manifold_rejected():
    v = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1), (-1, -1, -1)]
    with pytest.raises(MeshError):
        TetMesh(v, [(0, 1, 2, 3), (1, 2, 3, 4), (3, 2, 1, 5)], [1, 2, 2])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.booleans(), min_size=6, max_size=6))
def test_repair_count_matches_flips(flips):
    tets = [list(t) for t in CUBE_TETS]
    before = TetMesh(CUBE_VERTICES, tets, [2] * 6).tets
    oriented = [list(t) for t in before]
    for t, f in zip(oriented, flips):
        if f:
            t[0], t[1] = t[1], t[0]
    m = TetMesh(CUBE_VERTICES, oriented, [2] * 6)
    assert m.n_repaired == sum(flips)
    assert np.all(signed_volumes(m.vertices, m.tets) > 0)
