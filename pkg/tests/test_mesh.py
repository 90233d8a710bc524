import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signorini.mesh import (BoundaryClass, Mesh, MeshError, build_unit_square,
                            make_mesh, mesh_statistics, min_angles, paper_tagging,
                            read_mesh, refine_marked, refine_uniform, write_mesh)


def assert_conforming(m):
    # every edge has one or two triangles; boundary edges are exactly the tagged ones
    counts = np.bincount(m.t2e.ravel(), minlength=m.ne)
    assert set(np.unique(counts)) <= {1, 2}
    assert np.all(m.area > 0)
    assert np.array_equal(np.sort(m.boundary_edges), np.flatnonzero(counts == 1))
    assert np.all(m.edge_tag[m.boundary_edges] >= 0)
    # no hanging nodes: no vertex lies in the interior of an edge
    for e in range(m.ne):
        a, b = m.p[m.edges[e]]
        d = b - a
        s = ((m.p - a) @ d) / (d @ d)
        dist = np.abs((m.p - a) @ np.array([d[1], -d[0]])) / np.hypot(*d)
        inside = (s > 1e-12) & (s < 1 - 1e-12) & (dist < 1e-12)
        assert not inside.any()
    assert m.euler_characteristic() == 1


def test_unit_square_n1():
    m = build_unit_square(1)
    assert (m.nv, m.nt, len(m.boundary_edges)) == (4, 2, 4)
    assert m.nv - m.ne + m.nt == 1
    s = mesh_statistics(m)
    assert s.h_max == pytest.approx(np.sqrt(2), abs=1e-15)
    assert s.min_angle == pytest.approx(45.0, abs=1e-12)


def test_unit_square_rejects_zero():
    with pytest.raises(ValueError):
        build_unit_square(0)


def test_paper_tagging_n4(square4):
    c = square4.edges_with_tag(BoundaryClass.CONTACT)
    assert len(c) == 4
    np.testing.assert_allclose(square4.edge_length[c], 0.25, atol=1e-15)
    np.testing.assert_allclose(square4.p[square4.edges[c]][..., 0], 1.0)
    lengths = square4.tag_lengths()
    assert lengths[BoundaryClass.DIRICHLET] == pytest.approx(1.0)
    assert lengths[BoundaryClass.NEUMANN] == pytest.approx(2.0)


def test_refinement_edge_is_longest(square4):
    L = square4.edge_length[square4.t2e]
    assert np.all(L[:, 0] >= L.max(axis=1) - 1e-14)


def test_boundary_normals_point_outward(square4):
    e = square4.boundary_edges
    n = square4.boundary_normals(e)
    mid = square4.p[square4.edges[e]].mean(axis=1)
    assert np.all(((mid - 0.5) * n).sum(axis=1) > 0)
    np.testing.assert_allclose(np.hypot(*n.T), 1.0)


def test_refine_uniform():
    m = build_unit_square(1)
    r = refine_uniform(m)
    assert r.nt == 8
    assert mesh_statistics(r).h_max == pytest.approx(np.sqrt(2) / 2)
    assert min_angles(r).min() == pytest.approx(min_angles(m).min())
    assert_conforming(r)


def test_refine_uniform_vertices_match_p2_nodes(square4):
    from signorini.element import DofMap

    r = refine_uniform(square4)
    np.testing.assert_array_equal(r.p, DofMap(square4, 2).coordinates())


def test_refine_marked_all_and_none(square4):
    r = refine_marked(square4, np.arange(square4.nt))
    assert r.nt >= 2 * square4.nt
    assert_conforming(r)
    same = refine_marked(square4, [])
    assert same.nt == square4.nt
    np.testing.assert_array_equal(same.t, square4.t)


def test_refine_marked_bisects_each_marked_element(square4):
    marked = [0, 5, 17]
    r = refine_marked(square4, marked)
    # every child centroid lies in a parent; marked parents own at least two children
    from signorini.assembly import to_reference

    parents = []
    for c in r.centroids:
        xi = to_reference(square4, np.arange(square4.nt), np.broadcast_to(c, (square4.nt, 2)))
        inside = (xi >= -1e-12).all(axis=1) & (xi.sum(axis=1) <= 1 + 1e-12)
        parents.append(np.flatnonzero(inside)[0])
    counts = np.bincount(parents, minlength=square4.nt)
    assert np.all(counts[marked] >= 2)
    np.testing.assert_allclose(np.bincount(parents, r.area, minlength=square4.nt),
                               square4.area, rtol=1e-12)


def test_corner_refinement_keeps_angles():
    m = build_unit_square(4)
    theta0 = min_angles(m).min()
    corner = int(np.argmin(np.hypot(*(m.centroids - [1.0, 0.0]).T)))
    for _ in range(10):
        m = refine_marked(m, [corner])
        assert min_angles(m).min() >= theta0 / 2 - 1e-9
        corner = int(np.argmin(np.hypot(*(m.centroids - [1.0, 0.0]).T)))
    assert_conforming(m)


@settings(max_examples=25)
@given(st.lists(st.lists(st.integers(0, 10_000), min_size=1, max_size=6),
                min_size=1, max_size=6))
def test_random_refinement_invariants(rounds):
    m = build_unit_square(2)
    lengths = m.tag_lengths()
    theta0 = min_angles(m).min()
    for picks in rounds:
        m = refine_marked(m, [i % m.nt for i in picks])
    assert_conforming(m)
    assert min_angles(m).min() >= theta0 / 2 - 1e-9
    for c, v in m.tag_lengths().items():
        assert v == pytest.approx(lengths[c], abs=1e-12)
    m2 = refine_uniform(m)
    assert m2.euler_characteristic() == 1


def test_make_mesh_reorients_and_picks_longest_edge():
    p = [[0, 0], [1, 0], [0, 1]]
    m = make_mesh(p, [[0, 2, 1]], [[0, 1], [1, 2], [2, 0]], [1, 1, 1])
    assert m.area[0] == pytest.approx(0.5)
    # the hypotenuse (1, 2) comes first
    assert set(m.t[0, :2]) == {1, 2}


def test_validation_errors():
    p = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float)
    t = [[0, 1, 3], [0, 3, 2]]
    bnd = [[0, 1], [1, 3], [3, 2], [2, 0]]
    Mesh(p, t, bnd, [1, 2, 1, 0])
    with pytest.raises(MeshError, match="orientation"):
        Mesh(p, [[0, 3, 1], [0, 3, 2]], bnd, [1, 2, 1, 0])
    with pytest.raises(MeshError, match="cover"):
        Mesh(p, t, bnd[:3], [1, 2, 1])
    with pytest.raises(MeshError, match="share a vertex"):
        Mesh(p, t, bnd, [0, 2, 1, 1])
    with pytest.raises(MeshError, match="range"):
        Mesh(p, [[0, 1, 7], [0, 3, 2]], bnd, [1, 2, 1, 0])


def test_text_format_roundtrip(tmp_path, square4):
    m = refine_marked(square4, [3, 9])
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    text = path.read_text()
    assert text.startswith(f"vertices {m.nv} / triangles {m.nt} / boundary ")
    r = read_mesh(path)
    np.testing.assert_array_equal(r.p, m.p)
    assert r.nt == m.nt
    assert sorted(map(tuple, np.sort(r.t, axis=1))) == sorted(map(tuple, np.sort(m.t, axis=1)))
    for c, v in m.tag_lengths().items():
        assert r.tag_lengths()[c] == pytest.approx(v)


def test_text_format_comments_and_errors(tmp_path):
    good = """# two triangles
vertices 4 / triangles 2 / boundary 4
0 0
1 0
0 1
1 1   # top right
0 1 3
0 3 2
0 1 neumann
1 3 contact
3 2 neumann
2 0 dirichlet
"""
    (tmp_path / "a.txt").write_text(good)
    m = read_mesh(tmp_path / "a.txt")
    assert m.nt == 2 and m.contact_sides() == 1
    (tmp_path / "b.txt").write_text(good.replace("contact", "sticky"))
    with pytest.raises(MeshError):
        read_mesh(tmp_path / "b.txt")
    (tmp_path / "c.txt").write_text(good.replace("boundary 4", "boundary 5"))
    with pytest.raises(MeshError):
        read_mesh(tmp_path / "c.txt")


def test_contact_sides():
    def two_sided(x, y):
        tag = paper_tagging(x, y)
        tag[np.abs(y - 1) < 1e-12] = BoundaryClass.CONTACT
        tag[(np.abs(x) < 1e-12) & (y > 0.5)] = BoundaryClass.NEUMANN
        return tag

    m = build_unit_square(4, two_sided)
    assert m.contact_sides() == 2
    assert build_unit_square(3).contact_sides() == 1
