"""Free-surface machinery: wet/dry classification, seepage-face updates,
isoline extraction, refinement marking, solution transfer, and the
fixed-mesh / adaptive drives on the small rectangular-dam meshes."""

import numpy as np
import pytest

from polyseep.benchmarks import (
    RECT_DAM_DOMAIN,
    RECT_DAM_EXIT_ANALYTIC,
    patch_polygonal_mesh,
    patch_problem,
    patch_quadtree_mesh,
    rect_dam_coarse,
    rect_dam_config,
    rect_dam_problem,
    rect_dam_tags,
    rect_dam_voronoi,
)
from polyseep.errors import (
    MeshError,
    MissingGamma4Error,
    NodeOutsideOldMeshError,
)
from polyseep.freesurface import (
    classify_wet_dry,
    element_gradients,
    extract_free_surface,
    FreeSurfaceConfig,
    gamma_chain,
    mark_band,
    overflow_point,
    permeability_field,
    run_adaptive,
    run_fixed_mesh,
    transfer_solution,
    update_seepage_face,
)
from polyseep.geometry import build_poly_mesh
from polyseep.quadtree import generate_quadtree, quadtree_to_mesh
from polyseep.seepage import HeadField, solve_steady
from polyseep.smoothing import precompute_elements

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def strip_mesh():
    """Four stacked unit squares; the right wall is the atmospheric face."""
    verts = np.array(
        [
            [0.0, 0.0], [1.0, 0.0],
            [1.0, 1.0], [0.0, 1.0],
            [1.0, 2.0], [0.0, 2.0],
            [1.0, 3.0], [0.0, 3.0],
            [1.0, 4.0], [0.0, 4.0],
        ]
    )
    cells = [[0, 1, 2, 3], [3, 2, 4, 5], [5, 4, 6, 7], [7, 6, 8, 9]]
    tags = {(1, 2): "gamma4", (2, 4): "gamma4", (4, 6): "gamma4", (6, 8): "gamma4"}
    return build_poly_mesh(verts, cells, boundary_tags=tags)


def unit_grid_mesh(size=0.125):
    qt = generate_quadtree(UNIT_SQUARE, size, max_depth=6)
    return quadtree_to_mesh(qt, UNIT_SQUARE)


class TestPermeabilityField:
    def test_values(self):
        wet = np.array([True, False, True])
        assert permeability_field(wet, 1e-3) == pytest.approx([1.0, 1e-3, 1.0])

    @pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5, 2.0])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            permeability_field(np.array([True]), alpha)


class TestClassifyWetDry:
    def test_uniform_head(self):
        mesh = patch_quadtree_mesh()  # lower pentagon + two upper squares
        head = HeadField(h=np.full(mesh.num_vertices, 0.6))
        wet, psi = classify_wet_dry(head, mesh)
        assert psi == pytest.approx(0.6 - mesh.vertices[:, 1])
        assert wet.tolist() == [True, False, False]

    def test_all_wet_and_all_dry(self):
        mesh = patch_quadtree_mesh()
        y = mesh.vertices[:, 1]
        wet, _ = classify_wet_dry(HeadField(h=y + 0.5), mesh)
        assert wet.all()
        wet, _ = classify_wet_dry(HeadField(h=y - 0.5), mesh)
        assert not wet.any()


class TestGammaChain:
    def test_ordered_from_bottom(self):
        chain = gamma_chain(strip_mesh(), "gamma4")
        assert chain == [1, 2, 4, 6, 8]

    def test_missing_tag(self):
        with pytest.raises(MissingGamma4Error):
            gamma_chain(strip_mesh(), "gamma9")

    def test_disconnected_chain_rejected(self):
        verts = strip_mesh().vertices
        cells = [[0, 1, 2, 3], [3, 2, 4, 5], [5, 4, 6, 7], [7, 6, 8, 9]]
        tags = {(1, 2): "gamma4", (4, 6): "gamma4"}  # gap between them
        mesh = build_poly_mesh(verts, cells, boundary_tags=tags)
        with pytest.raises(MeshError):
            gamma_chain(mesh, "gamma4")


class TestUpdateSeepageFace:
    def test_prefix_below_crossing(self):
        mesh = strip_mesh()
        psi = np.zeros(mesh.num_vertices)
        psi[[1, 2, 4, 6, 8]] = [0.5, 0.1, -0.05, -1.0, -2.0]
        active, patch = update_seepage_face(psi, mesh, "gamma4")
        assert active == [1, 2]
        assert patch == {1: 0.0, 2: 1.0}

    def test_skip_nodes_are_transparent(self):
        mesh = strip_mesh()
        psi = np.zeros(mesh.num_vertices)
        psi[[1, 2, 4, 6, 8]] = [-9.0, 0.1, 0.2, -1.0, -2.0]
        # node 1 belongs to a static fixed-head boundary: ignored, not a stop
        active, _ = update_seepage_face(psi, mesh, "gamma4", skip={1})
        assert active == [2, 4]

    def test_dry_face(self):
        mesh = strip_mesh()
        psi = np.full(mesh.num_vertices, -1.0)
        active, patch = update_seepage_face(psi, mesh, "gamma4")
        assert active == [] and patch == {}


class TestOverflowPoint:
    def test_vertical_face_interpolation(self):
        mesh = strip_mesh()
        psi = np.zeros(mesh.num_vertices)
        psi[[1, 2, 4, 6, 8]] = [0.5, 0.1, -0.05, -1.0, -2.0]
        res = overflow_point(psi, mesh, "gamma4")
        assert res.crossed
        assert res.value == pytest.approx(1.0 + 0.1 / 0.15)
        assert res.point == pytest.approx([1.0, 1.0 + 0.1 / 0.15])

    def test_entirely_wet_face(self):
        mesh = strip_mesh()
        psi = np.ones(mesh.num_vertices)
        res = overflow_point(psi, mesh, "gamma4")
        assert not res.crossed
        assert res.value == pytest.approx(4.0)

    def test_entirely_dry_face(self):
        mesh = strip_mesh()
        psi = np.full(mesh.num_vertices, -1.0)
        res = overflow_point(psi, mesh, "gamma4")
        assert not res.crossed
        assert res.value == pytest.approx(0.0)

    def test_sloped_face_reports_x(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 1.0], [0.0, 1.0]])
        mesh = build_poly_mesh(verts, [[0, 1, 2, 3]], boundary_tags={(1, 2): "gamma4"})
        psi = np.zeros(4)
        psi[1], psi[2] = 0.3, -0.1
        res = overflow_point(psi, mesh, "gamma4")
        assert res.crossed
        assert res.value == pytest.approx(1.75)  # x of the crossing
        assert res.point == pytest.approx([1.75, 0.75])


class TestExtractFreeSurface:
    def test_horizontal_isoline(self):
        mesh = unit_grid_mesh()
        psi = 0.7 - mesh.vertices[:, 1]
        line = extract_free_surface(mesh, psi)
        assert len(line) == 9
        assert np.abs(line[:, 1] - 0.7).max() < 1e-12
        assert np.all(np.diff(line[:, 0]) > 0)
        assert line[0, 0] == pytest.approx(0.0)
        assert line[-1, 0] == pytest.approx(1.0)

    def test_tilted_isoline(self):
        mesh = unit_grid_mesh()
        psi = (mesh.vertices[:, 0] + mesh.vertices[:, 1]) - 1.05
        line = extract_free_surface(mesh, psi)
        assert len(line) > 10
        assert np.abs(line.sum(axis=1) - 1.05).max() < 1e-9
        assert np.all(np.diff(line[:, 0]) > 0)

    def test_no_crossing_yields_empty(self):
        mesh = unit_grid_mesh()
        line = extract_free_surface(mesh, np.ones(mesh.num_vertices))
        assert line.shape == (0, 2)


class TestElementGradients:
    def test_linear_field(self):
        mesh = patch_polygonal_mesh()
        problem = patch_problem(mesh)
        elements = precompute_elements(mesh, problem)
        h = 2.0 * mesh.vertices[:, 0] - 3.0 * mesh.vertices[:, 1] + 1.0
        grads = element_gradients(mesh, h, elements)
        assert np.abs(grads - [2.0, -3.0]).max() < 1e-10


class TestMarkBand:
    def test_sign_change_band(self):
        mesh = unit_grid_mesh()
        psi = 0.2 - 0.5 * mesh.vertices[:, 1]  # zero at y = 0.4
        cents = mesh.centroids()
        narrow = mark_band(psi, mesh, band_width=0.01)
        assert narrow == {ci for ci in range(mesh.num_cells) if 0.375 < cents[ci][1] < 0.5}
        wide = mark_band(psi, mesh, band_width=0.05)
        assert narrow < wide
        assert wide == {ci for ci in range(mesh.num_cells) if 0.25 < cents[ci][1] < 0.5}

    def test_gradient_trigger(self):
        mesh = unit_grid_mesh()
        # no sign change and far outside any band; |grad h| grows with x
        psi = mesh.vertices[:, 0] ** 2 + 10.0
        cents = mesh.centroids()
        marked = mark_band(psi, mesh, grad_threshold=1.4)
        assert marked == {ci for ci in range(mesh.num_cells) if cents[ci][0] > 0.9}
        assert mark_band(psi, mesh, grad_threshold=10.0) == set()


class TestTransferSolution:
    def test_linear_field_exact(self):
        coarse = unit_grid_mesh(0.5)
        fine = unit_grid_mesh(0.25)
        f = lambda v: 2.0 * v[:, 0] + 3.0 * v[:, 1] - 1.0
        h_new = transfer_solution(HeadField(h=f(coarse.vertices), t=4.0), coarse, fine)
        assert h_new.t == 4.0
        assert np.abs(h_new.h - f(fine.vertices)).max() < 1e-9

    def test_new_node_outside_old_mesh(self):
        coarse = unit_grid_mesh(0.5)
        far = build_poly_mesh(UNIT_SQUARE + 5.0, [[0, 1, 2, 3]])
        with pytest.raises(NodeOutsideOldMeshError):
            transfer_solution(HeadField(h=np.zeros(coarse.num_vertices)), coarse, far)


class TestConfig:
    def test_alpha_validated(self):
        with pytest.raises(ValueError):
            FreeSurfaceConfig(alpha=1.5)


class TestRunFixedMesh:
    def test_rect_dam_coarse(self):
        mesh, _ = rect_dam_coarse()
        problem = rect_dam_problem(mesh)
        head, state, line = run_fixed_mesh(problem, rect_dam_config())

        assert state.converged
        assert state.iter <= 100
        assert len(state.log) == state.iter
        rel = abs(state.x_o - RECT_DAM_EXIT_ANALYTIC) / RECT_DAM_EXIT_ANALYTIC
        assert rel < 0.05, f"exit point {state.x_o:.4f} off by {100 * rel:.2f}%"

        # the free surface is a function of x, non-increasing, anchored at
        # the upstream water level within one element size
        assert np.all(np.diff(line[:, 0]) > 0)
        assert np.all(np.diff(line[:, 1]) <= 1e-12)
        assert abs(line[0, 0] - 0.0) <= 0.05 + 1e-9
        assert abs(line[0, 1] - 1.0) <= 0.05 + 1e-9

        # active face nodes sit on the downstream wall and read h = y
        y = mesh.vertices[:, 1]
        for v in state.seepage_active:
            assert mesh.vertices[v][0] == pytest.approx(0.5)
            assert head.h[v] == pytest.approx(y[v], abs=1e-9)

        # upstream boundary keeps its reservoir head
        upstream = mesh.boundary_nodes("gamma1")
        assert np.abs(head.h[sorted(upstream)] - 1.0).max() < 1e-9

    def test_dry_elements_lose_conductivity(self):
        mesh, _ = rect_dam_coarse()
        problem = rect_dam_problem(mesh)
        _, state, _ = run_fixed_mesh(problem, rect_dam_config())
        assert 0 < state.wet.sum() < mesh.num_cells
        assert sorted(np.unique(state.k_mult)) == pytest.approx([1e-3, 1.0])
        assert np.all((state.k_mult == 1.0) == state.wet)


class TestRunAdaptive:
    def test_single_refinement_cycle(self):
        mesh, qt = rect_dam_coarse()
        problem = rect_dam_problem(mesh)
        cfg = rect_dam_config(max_outer=1)
        fine_mesh, head, state, stats = run_adaptive(
            problem, cfg, quadtree=qt, domain=RECT_DAM_DOMAIN, tag_rule=rect_dam_tags
        )
        assert len(stats) == 2
        assert stats[1]["dofs"] > stats[0]["dofs"]
        assert stats[1]["elements"] == fine_mesh.num_cells
        assert state.converged
        # a single cycle only halves the background size; the shipped
        # two-cycle configuration is what meets the 5% figure
        rel = abs(state.x_o - RECT_DAM_EXIT_ANALYTIC) / RECT_DAM_EXIT_ANALYTIC
        assert rel < 0.10
        assert len(head.h) == fine_mesh.num_vertices

    def test_requires_quadtree(self):
        mesh, _ = rect_dam_coarse()
        with pytest.raises(MeshError):
            run_adaptive(rect_dam_problem(mesh), rect_dam_config())

    def test_requires_source_keys(self):
        mesh = rect_dam_voronoi()
        _, qt = rect_dam_coarse()
        with pytest.raises(MeshError):
            run_adaptive(
                rect_dam_problem(mesh),
                rect_dam_config(),
                quadtree=qt,
                domain=RECT_DAM_DOMAIN,
                tag_rule=rect_dam_tags,
            )
