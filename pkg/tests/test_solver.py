"""Tests for the Dirichlet solver det(2 u_{z zbar}) = f in log-det Newton
form: boundary profiles, exact recoveries, convergence order, the
linearization, covariances, and the comparison property."""
import numpy as np
import pytest

from cmalab import kernels
from cmalab.linalg import FieldSpec, ScalarField, complex_hessian
from cmalab.solver import (
    BoundaryProfile,
    DirichletProblem,
    GridMismatch,
    MaxIterations,
    NotPSHInitial,
    SolveOptions,
    _assemble_linearized,
    comparison_check,
    comparison_slack,
    harmonic_extension,
    hessian_at_center,
    newton_step,
    residual,
    solve_dirichlet,
    write_solve_report_csv,
)


def square_norm_half(*xs):
    return 0.5 * sum(np.asarray(x) ** 2 for x in xs)


class TestBoundaryProfile:
    def test_linear_perturbation(self):
        p = BoundaryProfile.linear(0.3, b=0.1)
        # 2n = 2 coordinates here: a * (x + y)/sqrt(2) + b
        val = p.perturbation(1.0, 1.0)
        assert val == pytest.approx(0.3 * 2.0 / np.sqrt(2.0) + 0.1)

    def test_linear_scaling_degree_one(self):
        p = BoundaryProfile.linear(0.3).with_scale(4.0)
        assert p.perturbation(1.0, 1.0) == pytest.approx(
            0.3 * 2.0 / np.sqrt(2.0) / 4.0
        )

    def test_power_scaling(self):
        p = BoundaryProfile.power(0.1, 1.5)
        pr = p.with_scale(4.0)
        # c R^{alpha-2} |x|^alpha = 0.1 * 4^{-0.5} |x|^{1.5}
        assert pr.perturbation(1.0, 0.0) == pytest.approx(0.1 * 0.5)
        assert pr.perturbation(3.0, 4.0) == pytest.approx(0.1 * 0.5 * 5.0**1.5)

    def test_quadratic_excess_scale_invariant(self):
        p = BoundaryProfile.quadratic_excess(0.2)
        for r in (1.0, 2.0, 8.0):
            assert p.with_scale(r).perturbation(0.6, 0.8) == pytest.approx(0.2)

    def test_logdamped_decays_under_scaling(self):
        p = BoundaryProfile.logdamped(0.3)
        vals = [p.with_scale(r).perturbation(1.0, 1.0) for r in (1.0, 4.0, 16.0)]
        assert vals[0] > vals[1] > vals[2] > 0.0

    def test_alpha_range_enforced(self):
        with pytest.raises(ValueError):
            BoundaryProfile.power(0.1, 2.5)
        with pytest.raises(ValueError):
            BoundaryProfile.power(0.1, 0.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            BoundaryProfile("cubic")

    def test_scale_positive(self):
        with pytest.raises(ValueError):
            BoundaryProfile.linear(0.1).with_scale(0.0)

    def test_perturbation_sup_matches_grid_max(self):
        rng = np.random.default_rng(6)
        spec = FieldSpec(2, 9, halfwidth=1.0)
        grids = spec.meshgrid()
        profiles = [
            BoundaryProfile.linear(0.3, b=-0.2),
            BoundaryProfile.power(0.1, 1.5),
            BoundaryProfile.logdamped(0.25),
            BoundaryProfile.quadratic_excess(0.15),
        ]
        for p in profiles:
            for r in (1.0, 3.0):
                ps = p.with_scale(r)
                dense = float(np.max(np.abs(ps.perturbation(*grids))))
                assert ps.perturbation_sup(spec) == pytest.approx(dense, rel=1e-12)

    def test_linear_sup_closed_form(self):
        # sup over the unit box is |a| sqrt(2n) / R
        spec = FieldSpec(2, 5)
        for r in (1.0, 2.0, 8.0):
            p = BoundaryProfile.linear(0.3).with_scale(r)
            assert p.perturbation_sup(spec) == pytest.approx(0.3 * 2.0 / r)


class TestDirichletProblem:
    def test_dimension_limit(self):
        with pytest.raises(ValueError):
            DirichletProblem(FieldSpec(3, 5))

    def test_rhs_positive(self):
        with pytest.raises(ValueError):
            DirichletProblem(FieldSpec(1, 5), f=0.0)
        with pytest.raises(ValueError):
            DirichletProblem(FieldSpec(1, 5), f=-1.0)

    def test_rhs_field_grid_checked(self):
        spec = FieldSpec(1, 5)
        other = ScalarField.from_function(FieldSpec(1, 7), lambda x, y: 1.0 + 0.0 * x)
        with pytest.raises(GridMismatch):
            DirichletProblem(spec, f=other)

    def test_default_boundary_is_quadratic_base(self):
        prob = DirichletProblem(FieldSpec(1, 5))
        g = prob.boundary_array()
        spec = prob.spec
        exact = square_norm_half(*spec.meshgrid())
        assert np.max(np.abs(g - exact)) == 0.0

    def test_callable_boundary(self):
        prob = DirichletProblem(FieldSpec(1, 5), boundary=lambda x, y: x + y)
        g = prob.boundary_array()
        assert g[0, 0] == pytest.approx(-2.0)


class TestHarmonicExtension:
    def test_matches_boundary_exactly(self):
        spec = FieldSpec(1, 9)
        g = np.cos(spec.meshgrid()[0]) * 2.0
        v = harmonic_extension(spec, g)
        mask = np.ones((9, 9), dtype=bool)
        mask[1:-1, 1:-1] = False
        assert np.array_equal(v[mask], g[mask])

    def test_interior_discretely_harmonic(self):
        spec = FieldSpec(1, 9)
        rng = np.random.default_rng(8)
        g = rng.standard_normal((9, 9))
        v = harmonic_extension(spec, g)
        h = spec.spacing
        lap = (
            (v[2:, 1:-1] - 2.0 * v[1:-1, 1:-1] + v[:-2, 1:-1]) / h[0] ** 2
            + (v[1:-1, 2:] - 2.0 * v[1:-1, 1:-1] + v[1:-1, :-2]) / h[1] ** 2
        )
        assert np.max(np.abs(lap)) <= 1e-9

    def test_reproduces_harmonic_polynomials(self):
        spec = FieldSpec(1, 9)
        exact = ScalarField.from_function(spec, lambda x, y: x**2 - y**2 + 3.0 * x * y)
        v = harmonic_extension(spec, exact.values)
        assert np.max(np.abs(v - exact.values)) <= 1e-10


class TestExactRecovery:
    def test_quadratic_n1_is_exact(self):
        prob = DirichletProblem(FieldSpec(1, 65))
        u, report = solve_dirichlet(prob)
        exact = square_norm_half(*prob.spec.meshgrid())
        assert np.max(np.abs(u.values - exact)) == 0.0
        assert report.iterations == 0
        assert report.final_residual <= 1e-12

    def test_quadratic_n2_is_exact(self):
        prob = DirichletProblem(FieldSpec(2, 9))
        u, report = solve_dirichlet(prob)
        exact = square_norm_half(*prob.spec.meshgrid())
        assert np.max(np.abs(u.values - exact)) <= 1e-12
        assert report.iterations <= 1

    def test_linear_boundary_n2(self):
        # |x|^2/2 + linear is an exact solution (the linear part drops out
        # of every Hessian).
        prob = DirichletProblem(
            FieldSpec(2, 9), boundary=BoundaryProfile.linear(0.3, b=0.5)
        )
        u, report = solve_dirichlet(prob)
        spec = prob.spec
        grids = spec.meshgrid()
        exact = square_norm_half(*grids) + 0.3 * sum(grids) / 2.0 + 0.5
        assert np.max(np.abs(u.values - exact)) <= 1e-8
        assert report.iterations <= 5

    def test_constant_rhs_scaling(self):
        # det(2 u_{z zbar}) = f with u = c|x|^2/2 needs c^n = f.
        f = 2.25
        prob = DirichletProblem(
            FieldSpec(1, 17),
            f=f,
            boundary=lambda x, y: 0.5 * f * (x**2 + y**2),
        )
        u, _ = solve_dirichlet(prob)
        exact = f * square_norm_half(*prob.spec.meshgrid())
        assert np.max(np.abs(u.values - exact)) <= 1e-10


class TestSolveProperties:
    def test_power_profile_converges(self):
        prob = DirichletProblem(
            FieldSpec(2, 13), boundary=BoundaryProfile.power(0.1, 1.5)
        )
        u, report = solve_dirichlet(prob)
        assert report.final_residual <= 1e-10
        assert report.iterations <= 5
        assert report.min_complex_eigen > 0.0
        res = residual(u, 1.0)
        assert np.max(np.abs(res.values)) <= 1e-10

    def test_solution_psh_everywhere(self):
        prob = DirichletProblem(
            FieldSpec(2, 9), boundary=BoundaryProfile.logdamped(0.3)
        )
        u, report = solve_dirichlet(prob)
        spec = prob.spec
        for p in [(4, 4, 4, 4), (1, 1, 1, 1), (7, 2, 5, 3)]:
            eigs = complex_hessian(u, p).eigenvalues()
            assert eigs[0] > 0.0

    def test_hessian_at_center(self):
        prob = DirichletProblem(FieldSpec(2, 9))
        u, _ = solve_dirichlet(prob)
        real_h, cplx_h = hessian_at_center(u)
        assert np.max(np.abs(real_h.array - np.eye(4))) <= 1e-11
        assert np.max(np.abs(cplx_h.array - np.eye(2))) <= 1e-11

    def test_newton_contraction_order(self):
        # Kick a solved iterate and watch the residual contract faster
        # than linearly (the clean quadratic rate shows once the kick
        # dominates the converged residual).
        prob = DirichletProblem(
            FieldSpec(2, 9), boundary=BoundaryProfile.power(0.12, 1.2)
        )
        u, _ = solve_dirichlet(prob)
        bump = np.zeros(u.values.shape)
        bump[2:-2, 2:-2, 2:-2, 2:-2] = 1e-3
        v = u.with_values(u.values + bump)
        norms = [float(np.max(np.abs(residual(v, 1.0).values)))]
        for _ in range(2):
            delta, _ = newton_step(v, 1.0)
            v = v.with_values(v.values + delta.values)
            norms.append(float(np.max(np.abs(residual(v, 1.0).values))))
        assert norms[1] <= 0.05 * norms[0]
        assert norms[2] <= 0.05 * norms[1]

    def test_report_csv(self, tmp_path):
        prob = DirichletProblem(FieldSpec(1, 17))
        u, report = solve_dirichlet(prob)
        path = tmp_path / "report.csv"
        write_solve_report_csv(path, prob, report)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("n,points_per_axis,iterations")
        fields = lines[1].split(",")
        assert fields[0] == "1"
        assert fields[1] == "17"
        assert int(fields[2]) == report.iterations


class TestLinearization:
    def test_matches_directional_difference(self):
        # the assembled matrix is -dG for G(u) = log det(2 u_h) - log f.
        rng = np.random.default_rng(17)
        spec = FieldSpec(2, 7)
        u = ScalarField.from_function(
            spec,
            lambda *xs: square_norm_half(*xs)
            + 0.05 * np.prod([np.cos(np.asarray(x)) for x in xs], axis=0),
        )
        entries = kernels.hermitian_entries(u.values, spec.spacing, spec.n)
        diag_w, pairs, mixed = kernels.linearized_stencil_weights(entries, spec.n)
        mat = _assemble_linearized(diag_w, pairs, mixed, spec.spacing)

        v = np.zeros(u.values.shape)
        inner = (slice(1, -1),) * spec.dim
        v[inner] = rng.standard_normal(v[inner].shape)
        t = 1e-5
        plus = residual(u.with_values(u.values + t * v), 1.0).values[inner]
        minus = residual(u.with_values(u.values - t * v), 1.0).values[inner]
        directional = (plus - minus) / (2.0 * t)
        applied = -(mat @ v[inner].ravel()).reshape(directional.shape)
        denom = np.max(np.abs(directional))
        assert np.max(np.abs(applied - directional)) <= 1e-5 * denom


class TestCovariances:
    def test_rescaling_matches_large_domain_solve(self):
        from cmalab.liouville import rescaled_problem

        profile = BoundaryProfile.power(0.1, 1.5)
        grid = FieldSpec(2, 9)
        u_unit, _ = solve_dirichlet(rescaled_problem(profile, 2.0, grid))
        big = DirichletProblem(FieldSpec(2, 9, halfwidth=2.0), boundary=profile)
        u_big, _ = solve_dirichlet(big)
        assert np.max(np.abs(u_unit.values - u_big.values / 4.0)) <= 1e-8

    def test_translation_equivariance(self):
        profile = BoundaryProfile.power(0.1, 1.5)
        base = DirichletProblem(FieldSpec(2, 9), boundary=profile)
        u0, _ = solve_dirichlet(base)

        shift = np.array([0.3, -0.2, 0.1, 0.4])

        def shifted_boundary(*xs):
            moved = [np.asarray(x) - s for x, s in zip(xs, shift)]
            return profile.boundary_values(*moved)

        moved = DirichletProblem(
            FieldSpec(2, 9, center=shift), boundary=shifted_boundary
        )
        u1, _ = solve_dirichlet(moved)
        assert np.max(np.abs(u1.values - u0.values)) <= 1e-9


class TestComparison:
    def test_ordered_pairs_within_slack(self):
        rng = np.random.default_rng(19)
        spec = FieldSpec(2, 9)
        slack = comparison_slack(spec)
        for _ in range(3):
            lower = BoundaryProfile.power(rng.uniform(0.05, 0.15), rng.uniform(1.0, 1.8))
            c0 = rng.uniform(0.0, 0.2)

            def upper(*xs, lower=lower, c0=c0):
                return lower.boundary_values(*xs) + c0

            u1, _ = solve_dirichlet(DirichletProblem(spec, boundary=lower))
            u2, _ = solve_dirichlet(DirichletProblem(spec, boundary=upper))
            interior_gap, boundary_gap = comparison_check(u1, u2)
            assert interior_gap <= boundary_gap + slack
            # constant boundary shifts pass through the equation untouched
            assert interior_gap == pytest.approx(c0, abs=1e-8)

    def test_grid_mismatch_rejected(self):
        a, _ = solve_dirichlet(DirichletProblem(FieldSpec(1, 9)))
        b, _ = solve_dirichlet(DirichletProblem(FieldSpec(1, 11)))
        with pytest.raises(GridMismatch):
            comparison_check(a, b)


class TestFailureModes:
    def test_iteration_cap(self):
        prob = DirichletProblem(
            FieldSpec(2, 9), boundary=BoundaryProfile.power(0.1, 1.5)
        )
        with pytest.raises(MaxIterations):
            solve_dirichlet(prob, SolveOptions(max_iterations=1))

    def test_non_psh_boundary_detected(self):
        def wavy(x1, x2, y1, y2):
            return square_norm_half(x1, x2, y1, y2) + 0.3 * np.sin(4.0 * x1)

        prob = DirichletProblem(FieldSpec(2, 9), boundary=wavy)
        with pytest.raises(NotPSHInitial):
            solve_dirichlet(prob)

    def test_options_validated(self):
        with pytest.raises(ValueError):
            SolveOptions(linear_method="fancy")
