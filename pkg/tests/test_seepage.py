"""Steady and transient Darcy solves: linear-field exactness, backward-Euler
behavior, interpolation, and discrete flux balance."""

import numpy as np
import pytest

from polyseep.benchmarks import (
    patch_exact,
    patch_polygonal_mesh,
    patch_problem,
    patch_quadtree_mesh,
    patch_voronoi_mesh,
)
from polyseep.errors import (
    ProbeOutsideDomainError,
    SingularSystemError,
    ZeroReferenceError,
)
from polyseep.seepage import (
    HeadField,
    SeepageProblem,
    TimeGrid,
    darcy_flux,
    interpolate_at,
    relative_error_l2,
    run_transient,
    solve_steady,
    step_transient,
)

MESH_BUILDERS = [patch_polygonal_mesh, patch_quadtree_mesh, patch_voronoi_mesh]


class TestTimeGrid:
    def test_times(self):
        grid = TimeGrid(t0=1.0, dt=0.5, n_steps=4)
        assert grid.times() == pytest.approx([1.0, 1.5, 2.0, 2.5, 3.0])

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            TimeGrid(t0=0.0, dt=0.0, n_steps=1)


class TestSteady:
    @pytest.mark.parametrize("build", MESH_BUILDERS)
    def test_linear_head_reproduced_exactly(self, build):
        mesh = build()
        head = solve_steady(patch_problem(mesh))
        err = relative_error_l2(head.h, patch_exact(mesh))
        assert err < 1e-7, f"{build.__name__}: e={err:.3e}"

    def test_needs_a_prescribed_head(self):
        mesh = patch_quadtree_mesh()
        problem = SeepageProblem(mesh=mesh, conductivity={0: 1.0})
        with pytest.raises(SingularSystemError):
            solve_steady(problem)

    def test_neumann_driven_column(self):
        # prescribed inflow 2k on top, head 0 at bottom -> h = 2 y
        mesh = patch_quadtree_mesh()
        k = 1e-5
        problem = SeepageProblem(
            mesh=mesh,
            conductivity={0: k},
            dirichlet={"bottom": 0.0},
            neumann={"top": 2.0 * k},
        )
        head = solve_steady(problem)
        assert relative_error_l2(head.h, 2.0 * mesh.vertices[:, 1]) < 1e-7

    def test_extra_dirichlet_nodes(self):
        mesh = patch_quadtree_mesh()
        problem = SeepageProblem(mesh=mesh, conductivity={0: 1.0})
        extra = {i: 5.0 for i in range(mesh.num_vertices)}
        head = solve_steady(problem, extra_dirichlet=extra)
        assert head.h == pytest.approx(np.full(mesh.num_vertices, 5.0))


class TestInterpolation:
    def test_linear_reproduction_at_interior_points(self):
        mesh = patch_voronoi_mesh()
        head = solve_steady(patch_problem(mesh))
        rng = np.random.default_rng(5)
        for p in rng.uniform(0.05, 0.95, size=(20, 2)):
            assert interpolate_at(mesh, head.h, p) == pytest.approx(
                1.0 + 2.0 * p[1], abs=1e-6
            )

    def test_probe_outside_domain(self):
        mesh = patch_quadtree_mesh()
        with pytest.raises(ProbeOutsideDomainError):
            interpolate_at(mesh, np.zeros(mesh.num_vertices), (2.0, 2.0))


class TestRelativeErrorL2:
    def test_value(self):
        assert relative_error_l2(np.array([1.0, 2.0]), np.array([1.0, 1.0])) == (
            pytest.approx(1.0 / np.sqrt(2.0))
        )

    def test_accepts_head_fields(self):
        a = HeadField(h=np.array([2.0]))
        b = HeadField(h=np.array([1.0]))
        assert relative_error_l2(a, b) == pytest.approx(1.0)

    def test_zero_reference(self):
        with pytest.raises(ZeroReferenceError):
            relative_error_l2(np.ones(3), np.zeros(3))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            relative_error_l2(np.ones(3), np.ones(4))


def transient_patch_problem(n_steps, t_end=0.5, top=None, storage=1.0):
    mesh = patch_quadtree_mesh()
    return SeepageProblem(
        mesh=mesh,
        conductivity={0: 1.0},
        storage={0: storage},
        dirichlet={"top": top if top is not None else 3.0, "bottom": 1.0},
        time=TimeGrid(t0=0.0, dt=t_end / n_steps, n_steps=n_steps),
    )


class TestTransient:
    def test_steady_state_is_a_fixed_point(self):
        problem = transient_patch_problem(10)
        history, _ = run_transient(problem)
        h0 = history[0].h
        for fld in history[1:]:
            assert np.abs(fld.h - h0).max() < 1e-9

    def test_zero_storage_step_collapses_to_steady(self):
        mesh = patch_quadtree_mesh()
        problem = SeepageProblem(
            mesh=mesh,
            conductivity={0: 1.0},
            storage={0: 0.0},
            dirichlet={"top": 3.0, "bottom": 1.0},
        )
        h_prev = HeadField(h=np.zeros(mesh.num_vertices), t=0.0)
        stepped = step_transient(problem, h_prev, t_next=1.0)
        steady = solve_steady(problem)
        assert np.abs(stepped.h - steady.h).max() < 1e-10

    def test_non_positive_step_rejected(self):
        problem = transient_patch_problem(4)
        h_prev = HeadField(h=np.zeros(problem.mesh.num_vertices), t=1.0)
        with pytest.raises(ValueError):
            step_transient(problem, h_prev, t_next=1.0)

    def test_first_order_self_convergence(self):
        # time-varying top head; errors measured against the next refinement
        # should halve with the step (backward Euler)
        def top(t):
            return 3.0 + 0.5 * np.sin(2.0 * t)

        finals = []
        for n in (16, 32, 64):
            problem = transient_patch_problem(n, top=top)
            history, _ = run_transient(problem, keep_history=False)
            finals.append(history[-1].h)
        e1 = np.linalg.norm(finals[0] - finals[1])
        e2 = np.linalg.norm(finals[1] - finals[2])
        order = np.log2(e1 / e2)
        assert 0.8 <= order <= 1.2, f"observed order {order:.3f}"

    def test_probe_table(self):
        problem = transient_patch_problem(5)
        _, rows = run_transient(problem, probes=[(0.5, 0.5), (0.25, 0.25)])
        assert rows.shape == (6, 3)
        assert rows[:, 0] == pytest.approx(problem.time.times())
        # constant BCs from a consistent start: heads stay at the steady values
        assert rows[:, 1] == pytest.approx(np.full(6, 2.0), abs=1e-8)
        assert rows[:, 2] == pytest.approx(np.full(6, 1.5), abs=1e-8)

    def test_keep_history_false_returns_endpoints(self):
        problem = transient_patch_problem(7)
        history, rows = run_transient(problem, keep_history=False)
        assert len(history) == 2
        assert history[-1].t == pytest.approx(0.5)
        assert rows.shape[0] == 8

    def test_missing_time_grid(self):
        mesh = patch_quadtree_mesh()
        problem = SeepageProblem(mesh=mesh, conductivity={0: 1.0}, dirichlet={"top": 1.0})
        with pytest.raises(ValueError):
            run_transient(problem)


class TestDarcyFlux:
    def test_uniform_downward_velocity(self):
        mesh = patch_polygonal_mesh()
        k = 1e-5
        problem = patch_problem(mesh, k=k)
        head = solve_steady(problem)
        flux = darcy_flux(problem, head)
        expected = np.array([0.0, -2.0 * k])
        assert np.abs(flux.velocities - expected).max() < 1e-11
        assert len(flux.cell_ids) == len(flux.centroids) == len(flux.velocities)

    @pytest.mark.parametrize("build", MESH_BUILDERS)
    def test_boundary_discharge_balances(self, build):
        mesh = build()
        k = 1e-5
        problem = patch_problem(mesh, k=k)
        head = solve_steady(problem)
        net = darcy_flux(problem, head).boundary_net
        # inflow through the top face equals k * gradient * width
        assert net["top"] == pytest.approx(2.0 * k, rel=1e-6)
        assert net["bottom"] == pytest.approx(-2.0 * k, rel=1e-6)
        total = sum(net.values())
        largest = max(abs(v) for v in net.values())
        assert abs(total) <= 1e-6 * largest

    def test_neumann_tag_carries_imposed_discharge(self):
        mesh = patch_quadtree_mesh()
        k = 1e-5
        problem = SeepageProblem(
            mesh=mesh,
            conductivity={0: k},
            dirichlet={"bottom": 0.0},
            neumann={"top": 2.0 * k},
        )
        head = solve_steady(problem)
        net = darcy_flux(problem, head).boundary_net
        assert net["top"] == pytest.approx(2.0 * k, rel=1e-9)
        assert net["bottom"] == pytest.approx(-2.0 * k, rel=1e-6)
