"""Tests for the rescaling ladder and the log-determinant flatness check."""
import numpy as np
import pytest

from cmalab.linalg import FieldSpec, ScalarField
from cmalab.liouville import (
    LadderRung,
    center_block_hessian_gap,
    fit_decay_exponent,
    rescaled_problem,
    ricci_flat_check,
    run_ladder,
    write_ladder_csv,
)
from cmalab.solver import BoundaryProfile, NotPSH, SolveOptions


class TestRescaledProblem:
    def test_unit_box_at_grid_resolution(self):
        prob = rescaled_problem(BoundaryProfile.linear(0.3), 4.0, FieldSpec(2, 9))
        assert prob.spec.n == 2
        assert prob.spec.points_per_axis == 9
        assert np.allclose(prob.spec.halfwidth, 1.0)
        assert prob.f == 1.0

    def test_boundary_carries_rescaled_perturbation(self):
        profile = BoundaryProfile.power(0.1, 1.5)
        prob = rescaled_problem(profile, 4.0, FieldSpec(1, 9))
        g = prob.boundary_array()
        grids = prob.spec.meshgrid()
        base = 0.5 * sum(x**2 for x in grids)
        expected = base + profile.with_scale(4.0).perturbation(*grids)
        assert np.max(np.abs(g - expected)) == 0.0

    def test_scale_below_one_rejected(self):
        with pytest.raises(ValueError):
            rescaled_problem(BoundaryProfile.linear(0.1), 0.5, FieldSpec(1, 9))


class TestLadder:
    def test_linear_profile_solved_exactly(self):
        # the linear perturbation survives rescaling as an exact affine
        # correction: sup_wR = a sqrt(2n) / R and no Hessian gap.
        report = run_ladder(
            BoundaryProfile.linear(0.3), [1.0, 2.0, 4.0], FieldSpec(1, 17)
        )
        for rung in report.rungs:
            assert rung.error is None
            assert rung.sup_w == pytest.approx(0.3 * np.sqrt(2.0) / rung.R, rel=1e-12)
            assert rung.hessian_gap <= 1e-8
            assert rung.newton_iters <= 5

    def test_power_profile_gaps_decay(self):
        report = run_ladder(
            BoundaryProfile.power(0.1, 1.5), [1.0, 2.0], FieldSpec(2, 9)
        )
        clean = [r for r in report.rungs if r.error is None]
        assert len(clean) == 2
        assert clean[0].hessian_gap > clean[1].hessian_gap > 0.0
        assert clean[0].sup_w > clean[1].sup_w
        assert np.isfinite(report.decay_exponent)

    def test_thread_count_does_not_change_results(self):
        profile = BoundaryProfile.power(0.1, 1.5)
        a = run_ladder(profile, [1.0, 2.0], FieldSpec(2, 9), threads=1)
        b = run_ladder(profile, [1.0, 2.0], FieldSpec(2, 9), threads=3)
        for ra, rb in zip(a.rungs, b.rungs):
            assert ra.sup_w == rb.sup_w
            assert ra.hessian_gap == rb.hessian_gap

    def test_failed_rungs_recorded_not_raised(self):
        report = run_ladder(
            BoundaryProfile.power(0.1, 1.5),
            [1.0, 2.0],
            FieldSpec(2, 9),
            opts=SolveOptions(max_iterations=1),
        )
        assert all(r.error is not None for r in report.rungs)
        assert all(r.error.startswith("MaxIterations") for r in report.rungs)
        assert np.isnan(report.decay_exponent)

    def test_scale_list_validated(self):
        profile = BoundaryProfile.linear(0.1)
        with pytest.raises(ValueError):
            run_ladder(profile, [], FieldSpec(1, 9))
        with pytest.raises(ValueError):
            run_ladder(profile, [1.0, 1.0], FieldSpec(1, 9))
        with pytest.raises(ValueError):
            run_ladder(profile, [0.5, 2.0], FieldSpec(1, 9))

    def test_csv_bytes_stable(self, tmp_path):
        profile = BoundaryProfile.power(0.1, 1.5)
        paths = []
        for tag in ("a", "b"):
            report = run_ladder(profile, [1.0, 2.0], FieldSpec(2, 9), threads=2)
            path = tmp_path / f"ladder_{tag}.csv"
            write_ladder_csv(report, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()
        lines = paths[0].read_text().strip().splitlines()
        assert lines[0] == "R,sup_wR,hessian_gap,iters,residual,h"
        assert len(lines) == 3


class TestDecayFit:
    def test_recovers_synthetic_slope(self):
        rungs = [
            LadderRung(R=r, hessian_gap=0.37 * r**-1.5) for r in (1.0, 2.0, 4.0, 8.0)
        ]
        assert fit_decay_exponent(rungs) == pytest.approx(1.5, abs=1e-12)

    def test_needs_two_clean_rungs(self):
        assert np.isnan(fit_decay_exponent([]))
        assert np.isnan(fit_decay_exponent([LadderRung(R=1.0, hessian_gap=0.1)]))
        rungs = [
            LadderRung(R=1.0, hessian_gap=0.1),
            LadderRung(R=2.0, error="MaxIterations: gave up"),
            LadderRung(R=4.0, hessian_gap=0.0),
        ]
        assert np.isnan(fit_decay_exponent(rungs))

    def test_error_rungs_excluded(self):
        rungs = [
            LadderRung(R=r, hessian_gap=r**-2.0) for r in (1.0, 2.0, 4.0)
        ] + [LadderRung(R=8.0, hessian_gap=1e6, error="NotPSHInitial: bad")]
        assert fit_decay_exponent(rungs) == pytest.approx(2.0, abs=1e-12)


class TestCenterBlock:
    def test_block_gap_bounds_center_gap(self):
        spec = FieldSpec(1, 17)
        u = ScalarField.from_function(
            spec,
            lambda x, y: 0.5 * (x**2 + y**2) + 0.05 * (x**2 + y**2) ** 2,
        )
        gap, gap_center = center_block_hessian_gap(u, window=1)
        assert gap >= gap_center
        assert gap > 0.0

    def test_richardson_cancels_quartic_error_at_center(self):
        # the centered second difference of a quartic has an exactly-h^2
        # error term, which the 4 H_h - H_2h extrapolation removes.
        spec = FieldSpec(1, 17)
        u = ScalarField.from_function(
            spec,
            lambda x, y: 0.5 * (x**2 + y**2) + 0.05 * (x**2 + y**2) ** 2,
        )
        _, plain = center_block_hessian_gap(u, window=1, richardson=False)
        _, extrap = center_block_hessian_gap(u, window=1, richardson=True)
        assert plain > 1e-4
        assert extrap <= 1e-12


class TestRicciFlatCheck:
    def test_quadratic_potential_flat(self):
        # dyadic grid: the discrete log-determinant is exactly constant
        spec = FieldSpec(1, 33, halfwidth=1.0)
        phi = ScalarField.from_function(spec, lambda x, y: 0.5 * (x**2 + y**2))
        assert ricci_flat_check(phi) == (0.0, 0.0)

    def test_quadratic_potential_flat_nondyadic(self):
        spec = FieldSpec(1, 13, halfwidth=1.0)
        phi = ScalarField.from_function(spec, lambda x, y: 0.5 * (x**2 + y**2))
        lap, osc = ricci_flat_check(phi)
        assert lap <= 1e-12
        assert osc <= 1e-12

    def test_two_dimensional_potential_flat(self):
        spec = FieldSpec(2, 9)
        phi = ScalarField.from_function(
            spec, lambda *xs: 0.5 * sum(np.asarray(x) ** 2 for x in xs)
        )
        lap, osc = ricci_flat_check(phi)
        assert lap <= 1e-12
        assert osc <= 1e-12

    def test_scaling_shifts_log_det_by_constant(self):
        spec = FieldSpec(1, 17)
        phi = ScalarField.from_function(spec, lambda x, y: 0.5 * (x**2 + y**2))
        scaled = phi.with_values(3.0 * phi.values)
        base = ricci_flat_check(phi)
        after = ricci_flat_check(scaled)
        assert after[0] == pytest.approx(base[0], abs=1e-13)
        assert after[1] == pytest.approx(base[1], abs=1e-13)

    def test_oscillatory_potential_detected(self):
        spec = FieldSpec(1, 33)
        phi = ScalarField.from_function(
            spec, lambda x, y: 0.5 * (x**2 + y**2) + 0.01 * np.sin(x)
        )
        lap, osc = ricci_flat_check(phi)
        assert lap > 1e-4
        assert osc > 1e-4

    def test_non_psh_potential_rejected(self):
        spec = FieldSpec(1, 9)
        phi = ScalarField.from_function(spec, lambda x, y: 0.5 * (x**2 - y**2))
        with pytest.raises(NotPSH):
            ricci_flat_check(phi)

    def test_minimum_grid_size(self):
        spec = FieldSpec(1, 3)
        phi = ScalarField.from_function(spec, lambda x, y: 0.5 * (x**2 + y**2))
        with pytest.raises(ValueError):
            ricci_flat_check(phi)
