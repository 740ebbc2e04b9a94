"""Finite-volume machinery: grids, cell averages, CFL steps, full runs."""

import numpy as np
import pytest

from probeflow import (
    CFL_DEFAULT,
    DomainError,
    ExogenousSpeed,
    FluxModel,
    Greenshields,
    Grid,
    ModelCoupled,
    PiecewiseConstant,
    ProbeStateError,
    ProbeTrajectory,
    StabilityError,
    advance_probes,
    boundary_flux_rates,
    cfl_dt,
    init_field,
    l1_distance,
    lxf_step,
    resolve_probe_speeds,
    run,
    solve_riemann,
    trace_density,
)


def quarter_grid():
    return Grid.from_extent(0.0, 1.0, 0.25)


class TestGrid:
    def test_from_extent(self):
        grid = quarter_grid()
        assert grid.n_cells == 4
        assert grid.dx == 0.25
        np.testing.assert_allclose(grid.edges, [0.0, 0.25, 0.5, 0.75, 1.0])
        np.testing.assert_allclose(grid.centers, [0.125, 0.375, 0.625, 0.875])

    def test_validation(self):
        with pytest.raises(DomainError):
            Grid.from_extent(0.0, 1.0, 0.3)  # not a whole number of cells
        with pytest.raises(DomainError):
            Grid.from_extent(0.0, 1.0, -0.1)
        with pytest.raises(DomainError):
            Grid.from_extent(0.0, 1.0, 0.5)  # only 2 cells
        with pytest.raises(DomainError):
            Grid(x_min=1.0, x_max=0.0, n_cells=8)


class TestInitField:
    def test_straddling_cell_averages_the_overlap(self):
        field = init_field(quarter_grid(), PiecewiseConstant([0.3], [1.0, 0.0]))
        np.testing.assert_allclose(field, [1.0, 0.2, 0.0, 0.0], atol=1e-15)

    def test_jump_on_an_edge_splits_cleanly(self):
        field = init_field(quarter_grid(), PiecewiseConstant([0.25], [1.0, 0.0]))
        np.testing.assert_array_equal(field, [1.0, 0.0, 0.0, 0.0])

    def test_two_jumps_inside_one_cell(self):
        field = init_field(
            quarter_grid(), PiecewiseConstant([0.3, 0.35], [0.0, 1.0, 0.0])
        )
        np.testing.assert_allclose(field, [0.0, 0.2, 0.0, 0.0], atol=1e-15)

    def test_constant_pieces_copy_bitwise(self):
        value = 1.0 / 3.0
        field = init_field(quarter_grid(), PiecewiseConstant([], [value]))
        assert np.all(field == value)

    def test_block_list_form(self):
        field = init_field(quarter_grid(), [((0.25, 0.5), 1.0)], background=0.5)
        np.testing.assert_array_equal(field, [0.5, 1.0, 0.5, 0.5])


class TestL1Distance:
    def test_hand_value(self):
        grid = quarter_grid()
        a = np.array([0.0, 0.5, 1.0, 0.25])
        b = np.array([0.0, 0.25, 0.5, 0.25])
        assert l1_distance(grid, a, b) == 0.25 * 0.75

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DomainError):
            l1_distance(quarter_grid(), np.zeros(4), np.zeros(5))


class TestTraceDensity:
    def test_sides(self):
        grid = quarter_grid()
        field = np.array([0.1, 0.2, 0.3, 0.4])
        assert trace_density(grid, field, 0.2, "right") == 0.2
        assert trace_density(grid, field, 0.2, "left") == 0.1
        # a probe exactly on a centre reads that cell from either side
        assert trace_density(grid, field, 0.375, "right") == 0.2
        assert trace_density(grid, field, 0.375, "left") == 0.2

    def test_clamped_at_domain_ends(self):
        grid = quarter_grid()
        field = np.array([0.1, 0.2, 0.3, 0.4])
        assert trace_density(grid, field, -5.0, "right") == 0.1
        assert trace_density(grid, field, -5.0, "left") == 0.1
        assert trace_density(grid, field, 5.0, "right") == 0.4
        assert trace_density(grid, field, 5.0, "left") == 0.4

    def test_bad_side(self):
        with pytest.raises(DomainError):
            trace_density(quarter_grid(), np.zeros(4), 0.5, "middle")


class TestCflDt:
    def test_probe_free_linear_law(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        model = FluxModel(speed_law=Greenshields(1.0))
        assert cfl_dt(model, grid, 0.0) == CFL_DEFAULT * grid.dx

    def test_quadratic_law_steepest_at_full_density(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        from probeflow import EpsilonLaw

        model = FluxModel(speed_law=EpsilonLaw(1.0 / 3.0))
        # |f'(1)| = 4/3 dominates the probe-free characteristic speed
        assert cfl_dt(model, grid, 0.0) == pytest.approx(
            CFL_DEFAULT * grid.dx * 0.75, rel=1e-12
        )

    def test_moving_probe_halves_the_step(self):
        # inside the cutoff plateau the flux slope at full density doubles
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        probe = ProbeTrajectory(0.5, (ExogenousSpeed(0.0, None, 0.5),))
        model = FluxModel(speed_law=Greenshields(1.0), probes=(probe,))
        assert cfl_dt(model, grid, 0.0) == CFL_DEFAULT * grid.dx / 2.0

    def test_distant_probe_does_not_restrict(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        probe = ProbeTrajectory(10.0, (ExogenousSpeed(0.0, None, 0.5),))
        model = FluxModel(speed_law=Greenshields(1.0), probes=(probe,))
        assert cfl_dt(model, grid, 0.0) == CFL_DEFAULT * grid.dx

    def test_cfl_number_validated(self):
        grid = quarter_grid()
        model = FluxModel(speed_law=Greenshields(1.0))
        with pytest.raises(DomainError):
            cfl_dt(model, grid, 0.0, cfl=0.0)
        with pytest.raises(DomainError):
            cfl_dt(model, grid, 0.0, cfl=1.5)


class TestLxfStep:
    def test_uniform_field_is_a_bitwise_fixed_point(self):
        grid = Grid.from_extent(0.0, 1.0, 0.125)
        model = FluxModel(speed_law=Greenshields(1.0))
        field = np.full(grid.n_cells, 0.3)
        out = lxf_step(model, grid, 0.0, field, 0.9 * grid.dx)
        assert np.all(out == 0.3)

    def test_probe_at_law_speed_leaves_uniform_field_alone(self):
        grid = Grid.from_extent(0.0, 1.0, 0.125)
        probe = ProbeTrajectory(0.5, (ExogenousSpeed(0.0, None, 0.5),))
        model = FluxModel(speed_law=Greenshields(1.0), probes=(probe,))
        field = np.full(grid.n_cells, 0.5)
        out = lxf_step(model, grid, 0.0, field, 0.4 * grid.dx)
        assert np.all(out == 0.5)

    def test_cfl_violation_raises(self):
        grid = Grid.from_extent(0.0, 1.0, 0.125)
        model = FluxModel(speed_law=Greenshields(1.0))
        field = init_field(grid, PiecewiseConstant([0.5], [0.1, 0.5]))
        with pytest.raises(StabilityError):
            lxf_step(model, grid, 0.0, field, 10.0 * grid.dx)

    def test_mass_change_matches_boundary_rates(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        model = FluxModel(speed_law=Greenshields(1.0))
        field = init_field(grid, PiecewiseConstant([0.5], [0.1, 0.7]))
        dt = cfl_dt(model, grid, 0.0)
        rate_in, rate_out = boundary_flux_rates(model, grid, 0.0, field)
        new = lxf_step(model, grid, 0.0, field, dt)
        change = grid.dx * (float(np.sum(new)) - float(np.sum(field)))
        assert change == pytest.approx(dt * (rate_in - rate_out), abs=1e-15)

    def test_boundary_rates_on_uniform_field(self):
        grid = quarter_grid()
        model = FluxModel(speed_law=Greenshields(1.0))
        rate_in, rate_out = boundary_flux_rates(
            model, grid, 0.0, np.full(4, 0.5)
        )
        assert rate_in == 0.25 and rate_out == 0.25


class TestProbeStepping:
    def test_coupled_probe_reads_the_trace_ahead(self):
        grid = quarter_grid()
        field = np.array([0.1, 0.2, 0.3, 0.4])
        probe = ProbeTrajectory(0.2, (ModelCoupled(0.0, None),))
        model = FluxModel(speed_law=Greenshields(1.0), probes=(probe,))
        resolve_probe_speeds(model, grid, 0.0, field)
        assert probe.state_at(0.0) == (0.2, 0.8)  # v(0.2) on the right trace

    def test_trace_side_left(self):
        grid = quarter_grid()
        field = np.array([0.1, 0.2, 0.3, 0.4])
        probe = ProbeTrajectory(0.2, (ModelCoupled(0.0, None),))
        model = FluxModel(
            speed_law=Greenshields(1.0), probes=(probe,), trace_side="left"
        )
        resolve_probe_speeds(model, grid, 0.0, field)
        assert probe.state_at(0.0) == (0.2, 0.9)

    def test_advance_records_pre_step_state(self):
        grid = quarter_grid()
        field = np.array([0.1, 0.2, 0.3, 0.4])
        probe = ProbeTrajectory(0.2, (ModelCoupled(0.0, None),))
        model = FluxModel(speed_law=Greenshields(1.0), probes=(probe,))
        resolve_probe_speeds(model, grid, 0.0, field)
        advance_probes(model, grid, field, 0.1)
        assert probe.realized_path == [(0.0, 0.2, 0.8, 0.2)]
        assert probe._runtime.p == pytest.approx(0.2 + 0.8 * 0.1)

    def test_advance_requires_resolved_speeds(self):
        grid = quarter_grid()
        probe = ProbeTrajectory(0.2, (ModelCoupled(0.0, None),))
        model = FluxModel(speed_law=Greenshields(1.0), probes=(probe,))
        with pytest.raises(ProbeStateError):
            advance_probes(model, grid, np.zeros(4), 0.1)


class TestRun:
    @staticmethod
    def _bump_datum():
        return PiecewiseConstant.from_blocks(0.2, [(0.4, 0.6, 0.6)])

    def test_snapshot_cadence_and_diagnostics(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        model = FluxModel(speed_law=Greenshields(1.0))
        result = run(model, grid, self._bump_datum(), 0.2, n_snapshots=5)
        np.testing.assert_allclose(result.snapshot_times, np.linspace(0.0, 0.2, 5))
        assert len(result.diagnostics) == len(result.boundary_flux)
        assert result.diagnostics[-1][0] == len(result.diagnostics)
        assert result.diagnostics[-1][1] == pytest.approx(0.2)
        assert result.field_at(0.1).shape == (grid.n_cells,)
        with pytest.raises(DomainError):
            result.field_at(0.123)

    def test_mass_conserved_with_matched_boundaries(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        model = FluxModel(speed_law=Greenshields(1.0))
        result = run(model, grid, self._bump_datum(), 0.1, n_snapshots=2)
        assert result.mass_drift() <= 1e-13

    def test_balance_residual_tracks_outflow(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        model = FluxModel(speed_law=Greenshields(1.0))
        datum = PiecewiseConstant([0.5], [0.1, 0.7])
        result = run(model, grid, datum, 0.3, n_snapshots=2)
        assert result.mass_drift() > 1e-4  # mass genuinely leaves
        assert result.mass_balance_residual() <= 1e-13

    def test_discrete_max_principle(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        model = FluxModel(speed_law=Greenshields(1.0))
        result = run(model, grid, self._bump_datum(), 0.3, n_snapshots=2)
        for _, _, _, _, lo, hi in result.diagnostics:
            assert lo >= 0.2 - 1e-12
            assert hi <= 0.6 + 1e-12

    def test_probes_are_cloned_and_paths_recorded(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        probe = ProbeTrajectory(0.3, (ExogenousSpeed(0.0, None, 0.4),))
        model = FluxModel(speed_law=Greenshields(1.0), probes=(probe,))
        result = run(model, grid, self._bump_datum(), 0.2, n_snapshots=2)
        assert probe.realized_path == []  # caller's probe untouched
        path = result.probe_path(0)
        assert len(path) == len(result.diagnostics)
        assert path[0][0] == 0.0 and path[0][1] == 0.3
        # exogenous probes ride their closed-form trajectory
        t_last, x_last = path[-1][0], path[-1][1]
        assert x_last == pytest.approx(0.3 + 0.4 * t_last, abs=1e-14)

    def test_steps_land_on_program_boundaries(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        probe = ProbeTrajectory(
            0.3, (ExogenousSpeed(0.0, 0.1234, 0.4), ExogenousSpeed(0.1234, None, 0.0))
        )
        model = FluxModel(speed_law=Greenshields(1.0), probes=(probe,))
        result = run(model, grid, self._bump_datum(), 0.2, n_snapshots=2)
        times = [row[1] for row in result.diagnostics]
        assert any(abs(t - 0.1234) <= 1e-12 for t in times)

    def test_validation(self):
        grid = Grid.from_extent(0.0, 1.0, 0.01)
        model = FluxModel(speed_law=Greenshields(1.0))
        with pytest.raises(DomainError):
            run(model, grid, self._bump_datum(), 0.0)
        with pytest.raises(DomainError):
            run(model, grid, self._bump_datum(), 0.1, n_snapshots=0)
        with pytest.raises(StabilityError):
            run(model, grid, self._bump_datum(), 0.1, max_steps=1)

    def test_refinement_shrinks_the_shock_error(self):
        law = Greenshields(1.0)
        exact = solve_riemann(law, 0.125, 0.375)
        model = FluxModel(speed_law=law)
        t_end = 0.3
        errors = {}
        for dx in (0.01, 0.005):
            grid = Grid.from_extent(0.0, 1.0, dx)
            datum = PiecewiseConstant([0.3], [0.125, 0.375])
            result = run(model, grid, datum, t_end, n_snapshots=2)
            reference = exact.profile(t_end, grid.centers - 0.3)
            errors[dx] = l1_distance(grid, result.final_field, reference)
        assert errors[0.01] / errors[0.005] >= 1.25
        assert errors[0.005] <= 0.02
