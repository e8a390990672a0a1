"""Backend-agreement and oracle tests for the stencil kernels."""
import subprocess
import sys

import numpy as np
import pytest

from cmalab import kernels
from cmalab.kernels import fallback
from cmalab.linalg import FieldSpec, ScalarField, complex_hessian

try:
    from cmalab.kernels import _core
except ImportError:
    _core = None

needs_compiled = pytest.mark.skipif(_core is None, reason="compiled backend not built")


def random_fields(seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for n, m, halfwidth in [(1, 17, 1.0), (1, 12 + 1, 0.7), (2, 9, 1.0), (2, 7, 1.3)]:
        spec = FieldSpec(n, m, halfwidth=halfwidth)
        vals = rng.standard_normal((m,) * (2 * n))
        out.append(ScalarField(spec, vals))
    return out


class TestBackendSelection:
    def test_name_is_known(self):
        assert kernels.BACKEND_NAME in ("compiled", "fallback")

    def test_env_forces_fallback(self):
        code = "from cmalab import kernels; print(kernels.BACKEND_NAME)"
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"CMALAB_KERNELS": "fallback", "PATH": "/usr/bin:/bin"},
            capture_output=True,
            text=True,
        )
        assert out.stdout.strip() == "fallback"

    def test_env_rejects_unknown_value(self):
        code = "import cmalab.kernels"
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"CMALAB_KERNELS": "turbo", "PATH": "/usr/bin:/bin"},
            capture_output=True,
            text=True,
        )
        assert out.returncode != 0
        assert "CMALAB_KERNELS" in out.stderr


@needs_compiled
class TestBackendParity:
    """The compiled kernels mirror the fallback's operation order, so
    results agree bitwise, not just to rounding."""

    def test_hermitian_entries_identical(self):
        for u in random_fields(1):
            a = fallback.hermitian_entries(u.values, u.spec.spacing, u.spec.n)
            b = _core.hermitian_entries(u.values, u.spec.spacing, u.spec.n)
            assert np.array_equal(a, b)

    def test_det_and_min_eig_identical(self):
        for u in random_fields(2):
            e = fallback.hermitian_entries(u.values, u.spec.spacing, u.spec.n)
            da, ma = fallback.det_and_min_eig(e, u.spec.n)
            db, mb = _core.det_and_min_eig(e, u.spec.n)
            assert np.array_equal(da, db)
            assert np.array_equal(ma, mb)

    def test_stencil_weights_identical(self):
        for u in random_fields(3):
            n = u.spec.n
            e = fallback.hermitian_entries(u.values, u.spec.spacing, n)
            diag_a, pairs_a, mixed_a = fallback.linearized_stencil_weights(e, n)
            diag_b, pairs_b, mixed_b = _core.linearized_stencil_weights(e, n)
            assert np.array_equal(diag_a, diag_b)
            assert list(pairs_a) == list(pairs_b)
            assert np.array_equal(mixed_a, mixed_b)

    def test_read_only_input_accepted(self):
        u = random_fields(4)[2]
        vals = u.values  # ScalarField freezes its buffer
        assert not vals.flags.writeable
        _core.hermitian_entries(vals, u.spec.spacing, u.spec.n)


class TestAgainstMatrixOracle:
    def test_entries_match_pointwise_complex_hessian(self):
        rng = np.random.default_rng(11)
        for u in random_fields(5):
            spec = u.spec
            entries = kernels.hermitian_entries(u.values, spec.spacing, spec.n)
            for _ in range(8):
                p = tuple(rng.integers(1, spec.points_per_axis - 1, spec.dim))
                hmat = complex_hessian(u, p).array
                idx = tuple(i - 1 for i in p)
                assert entries[(0,) + idx] == pytest.approx(hmat[0, 0].real, rel=1e-12, abs=1e-12)
                if spec.n == 2:
                    assert entries[(1,) + idx] == pytest.approx(hmat[1, 1].real, rel=1e-12, abs=1e-12)
                    assert entries[(2,) + idx] == pytest.approx(hmat[0, 1].real, rel=1e-12, abs=1e-12)
                    assert entries[(3,) + idx] == pytest.approx(hmat[0, 1].imag, rel=1e-12, abs=1e-12)

    def test_det_min_eig_match_numpy(self):
        rng = np.random.default_rng(12)
        for u in random_fields(6):
            spec = u.spec
            if spec.n != 2:
                continue
            entries = kernels.hermitian_entries(u.values, spec.spacing, spec.n)
            det, mineig = kernels.det_and_min_eig(entries, spec.n)
            for _ in range(8):
                idx = tuple(rng.integers(0, s) for s in det.shape)
                h = np.array(
                    [
                        [entries[(0,) + idx], entries[(2,) + idx] + 1j * entries[(3,) + idx]],
                        [entries[(2,) + idx] - 1j * entries[(3,) + idx], entries[(1,) + idx]],
                    ]
                )
                assert det[idx] == pytest.approx(np.linalg.det(h).real, rel=1e-10, abs=1e-12)
                assert mineig[idx] == pytest.approx(
                    np.linalg.eigvalsh(h)[0], rel=1e-10, abs=1e-12
                )

    def test_one_dim_det_equals_entry(self):
        u = random_fields(7)[0]
        entries = kernels.hermitian_entries(u.values, u.spec.spacing, 1)
        det, mineig = kernels.det_and_min_eig(entries, 1)
        assert np.array_equal(det, entries[0])
        assert np.array_equal(mineig, entries[0])

    def test_weights_match_inverse_trace_formula(self):
        # the log-det derivative is tr(H^-1 dH); spot-check the stencil
        # coefficients against the explicitly inverted complex matrix.
        rng = np.random.default_rng(13)
        spec = FieldSpec(2, 7)
        u = ScalarField.from_function(
            spec,
            lambda *xs: 0.5 * sum(np.asarray(x) ** 2 for x in xs)
            + 0.05 * np.cos(xs[0]) * np.sin(xs[3]),
        )
        entries = kernels.hermitian_entries(u.values, spec.spacing, 2)
        diag_w, pairs, mixed_w = kernels.linearized_stencil_weights(entries, 2)
        assert pairs == [(0, 1), (2, 3), (0, 3), (1, 2)]
        for _ in range(5):
            idx = tuple(rng.integers(0, s) for s in entries.shape[1:])
            h = np.array(
                [
                    [entries[(0,) + idx], entries[(2,) + idx] + 1j * entries[(3,) + idx]],
                    [entries[(2,) + idx] - 1j * entries[(3,) + idx], entries[(1,) + idx]],
                ]
            )
            p = np.linalg.inv(h)
            assert diag_w[(0,) + idx] == pytest.approx(0.5 * p[0, 0].real, rel=1e-10)
            assert diag_w[(1,) + idx] == pytest.approx(0.5 * p[1, 1].real, rel=1e-10)
            assert diag_w[(2,) + idx] == pytest.approx(0.5 * p[0, 0].real, rel=1e-10)
            assert diag_w[(3,) + idx] == pytest.approx(0.5 * p[1, 1].real, rel=1e-10)
            assert mixed_w[(0,) + idx] == pytest.approx(p[0, 1].real, rel=1e-10)
            assert mixed_w[(2,) + idx] == pytest.approx(p[0, 1].imag, rel=1e-10)
            assert mixed_w[(3,) + idx] == pytest.approx(-p[0, 1].imag, rel=1e-10)

    def test_unsupported_dimension(self):
        with pytest.raises(ValueError):
            kernels.hermitian_entries(np.zeros((3,) * 6), np.ones(6), 3)
        with pytest.raises(ValueError):
            kernels.det_and_min_eig(np.zeros((9, 5, 5)), 3)
        with pytest.raises(ValueError):
            kernels.linearized_stencil_weights(np.zeros((9, 5, 5)), 3)
