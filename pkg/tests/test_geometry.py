"""Polygon primitives, mesh validation, and the text round trip."""

import numpy as np
import pytest

from polyseep.errors import (
    DanglingVertexError,
    DegenerateCellError,
    MeshError,
    NonConformingError,
    SelfIntersectingError,
)
from polyseep.geometry import (
    PolyMesh,
    build_poly_mesh,
    edge_incidence,
    is_simple_polygon,
    point_in_polygon,
    polygon_area,
    polygon_centroid,
    read_mesh_text,
    tag_boundary_edges,
    write_mesh_text,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def two_quad_mesh():
    """Two unit squares side by side, bottom edges tagged."""
    verts = np.array(
        [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [0.0, 1.0]]
    )
    cells = [[0, 1, 4, 5], [1, 2, 3, 4]]
    tags = {(0, 1): "floor", (1, 2): "floor"}
    return build_poly_mesh(verts, cells, boundary_tags=tags)


class TestPolygonArea:
    def test_unit_square(self):
        assert polygon_area(UNIT_SQUARE) == pytest.approx(1.0)

    def test_triangle(self):
        tri = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 3.0]])
        assert polygon_area(tri) == pytest.approx(6.0)

    def test_clockwise_is_negative(self):
        assert polygon_area(UNIT_SQUARE[::-1]) == pytest.approx(-1.0)

    def test_collinear_vertex_does_not_change_area(self):
        with_hanging = np.array(
            [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
        )
        assert polygon_area(with_hanging) == pytest.approx(1.0)


class TestPolygonCentroid:
    def test_square(self):
        c = polygon_centroid(UNIT_SQUARE + np.array([2.0, 3.0]))
        assert c == pytest.approx([2.5, 3.5])

    def test_triangle_matches_vertex_mean(self):
        rng = np.random.default_rng(3)
        tri = rng.uniform(-1, 1, size=(3, 2))
        if polygon_area(tri) < 0:
            tri = tri[::-1]
        assert polygon_centroid(tri) == pytest.approx(tri.mean(axis=0))

    def test_translation_equivariance(self):
        pent = np.array([[0, 0], [2, 0], [2.5, 1], [1, 2], [-0.5, 1]], dtype=float)
        shift = np.array([10.0, -4.0])
        assert polygon_centroid(pent + shift) == pytest.approx(
            polygon_centroid(pent) + shift
        )


class TestSimplePolygon:
    def test_square_is_simple(self):
        assert is_simple_polygon(UNIT_SQUARE)

    def test_bowtie_is_not(self):
        bowtie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
        assert not is_simple_polygon(bowtie)


class TestPointInPolygon:
    def test_interior_and_exterior(self):
        assert point_in_polygon(UNIT_SQUARE, (0.3, 0.7))
        assert not point_in_polygon(UNIT_SQUARE, (1.3, 0.7))

    def test_boundary_needs_tolerance(self):
        on_edge = (1.0, 0.5)
        assert point_in_polygon(UNIT_SQUARE, on_edge, tol=1e-9)


class TestBuildPolyMesh:
    def test_two_quads(self):
        mesh = two_quad_mesh()
        assert mesh.num_cells == 2
        assert mesh.num_vertices == 6
        assert mesh.total_area() == pytest.approx(2.0)

    def test_clockwise_loop_is_reversed(self):
        mesh = build_poly_mesh(UNIT_SQUARE, [[3, 2, 1, 0]])
        assert polygon_area(mesh.cell_points(0)) == pytest.approx(1.0)

    def test_interior_edge_shared_by_two_cells(self):
        mesh = two_quad_mesh()
        inc = edge_incidence(mesh.cells)
        assert sorted(inc[(1, 4)]) == [0, 1]

    def test_too_few_vertices(self):
        with pytest.raises(DegenerateCellError):
            build_poly_mesh(UNIT_SQUARE, [[0, 1]])

    def test_repeated_vertex(self):
        with pytest.raises(DegenerateCellError):
            build_poly_mesh(UNIT_SQUARE, [[0, 1, 1, 2]])

    def test_self_intersecting(self):
        with pytest.raises(SelfIntersectingError):
            build_poly_mesh(UNIT_SQUARE, [[0, 2, 1, 3]])

    def test_zero_area_cell(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        with pytest.raises(DegenerateCellError):
            build_poly_mesh(verts, [[0, 1, 3, 4], [0, 1, 2]])

    def test_dangling_vertex(self):
        verts = np.vstack([UNIT_SQUARE, [[5.0, 5.0]]])
        with pytest.raises(DanglingVertexError):
            build_poly_mesh(verts, [[0, 1, 2, 3]])

    def test_edge_shared_three_times(self):
        verts = np.array(
            [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, -1.0], [0.5, 2.0]]
        )
        cells = [[0, 1, 2, 3], [0, 1, 4], [1, 0, 5]]
        with pytest.raises(NonConformingError):
            build_poly_mesh(verts, cells)

    def test_tag_on_interior_edge_rejected(self):
        verts = np.array(
            [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [0.0, 1.0]]
        )
        with pytest.raises(MeshError):
            build_poly_mesh(
                verts, [[0, 1, 4, 5], [1, 2, 3, 4]], boundary_tags={(1, 4): "oops"}
            )

    def test_tag_on_missing_edge_rejected(self):
        with pytest.raises(MeshError):
            build_poly_mesh(UNIT_SQUARE, [[0, 1, 2, 3]], boundary_tags={(0, 2): "x"})

    def test_non_finite_vertices_rejected(self):
        verts = UNIT_SQUARE.copy()
        verts[2, 0] = np.nan
        with pytest.raises(MeshError):
            build_poly_mesh(verts, [[0, 1, 2, 3]])


class TestPolyMeshQueries:
    def test_boundary_nodes_by_tag(self):
        mesh = two_quad_mesh()
        assert mesh.boundary_nodes("floor").tolist() == [0, 1, 2]
        assert len(mesh.boundary_nodes()) == 6

    def test_boundary_tags(self):
        mesh = two_quad_mesh()
        assert mesh.boundary_tags() == {"floor", ""}

    def test_locate_point(self):
        mesh = two_quad_mesh()
        assert mesh.locate_point((0.5, 0.5)) == 0
        assert mesh.locate_point((1.5, 0.5)) == 1
        assert mesh.locate_point((3.0, 0.5)) == -1

    def test_locate_point_shared_edge_lowest_id(self):
        mesh = two_quad_mesh()
        assert mesh.locate_point((1.0, 0.5)) == 0

    def test_centroids_and_bboxes(self):
        mesh = two_quad_mesh()
        assert mesh.centroids()[1] == pytest.approx([1.5, 0.5])
        assert mesh.bboxes()[0] == pytest.approx([0.0, 0.0, 1.0, 1.0])

    def test_retag_boundary_edges(self):
        mesh = two_quad_mesh()
        tag_boundary_edges(mesh, lambda mid, edge: "lo" if mid[1] < 0.5 else "hi")
        assert mesh.boundary_tags() == {"lo", "hi"}


class TestTextRoundTrip:
    def test_bit_exact_round_trip(self, tmp_path):
        mesh = two_quad_mesh()
        # irrational coordinates exercise the repr-based float formatting
        mesh.vertices[4] = [1.0 + np.sqrt(2.0) * 1e-13, 1.0]
        path = tmp_path / "mesh.txt"
        write_mesh_text(mesh, path)
        back = read_mesh_text(path)
        assert np.array_equal(back.vertices, mesh.vertices)
        assert back.num_cells == mesh.num_cells
        for a, b in zip(back.cells, mesh.cells):
            assert a.vertex_ids.tolist() == b.vertex_ids.tolist()
            assert a.region_id == b.region_id
        assert back.boundary_edges == mesh.boundary_edges

    def test_rewrite_is_byte_identical(self, tmp_path):
        mesh = two_quad_mesh()
        p1 = tmp_path / "a.txt"
        p2 = tmp_path / "b.txt"
        write_mesh_text(mesh, p1)
        write_mesh_text(read_mesh_text(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not a mesh\n")
        with pytest.raises(MeshError):
            read_mesh_text(path)

    def test_region_ids_survive(self, tmp_path):
        verts = np.array(
            [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [0.0, 1.0]]
        )
        mesh = build_poly_mesh(verts, [[0, 1, 4, 5], [1, 2, 3, 4]], region_ids=[0, 7])
        path = tmp_path / "mesh.txt"
        write_mesh_text(mesh, path)
        back = read_mesh_text(path)
        assert [c.region_id for c in back.cells] == [0, 7]
