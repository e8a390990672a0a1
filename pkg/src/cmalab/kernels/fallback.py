"""Vectorized numpy backend for the stencil kernels.

Axis order on the grid is (x_1, ..., x_n, y_1, ..., y_n).  All functions
work on interior nodes only (one cell in from every face); the returned
arrays have shape (m-2,)*2n, matching C-order enumeration of the interior
lattice.
"""
import numpy as np

BACKEND = "fallback"


def _shifted(values, offsets):
    """View of `values` on the interior lattice displaced by `offsets`."""
    idx = []
    for o in offsets:
        if o == -1:
            idx.append(slice(0, -2))
        elif o == 0:
            idx.append(slice(1, -1))
        elif o == 1:
            idx.append(slice(2, None))
        else:
            raise ValueError(f"offset out of range: {o}")
    return values[tuple(idx)]


def _d2_axis(values, a, spacing):
    d = values.ndim
    plus = [0] * d
    minus = [0] * d
    plus[a] = 1
    minus[a] = -1
    return (
        _shifted(values, plus) - 2.0 * _shifted(values, [0] * d) + _shifted(values, minus)
    ) / spacing[a] ** 2


def _d2_mixed(values, a, b, spacing):
    d = values.ndim
    pp = [0] * d
    pm = [0] * d
    mp = [0] * d
    mm = [0] * d
    pp[a] = pp[b] = 1
    pm[a] = 1
    pm[b] = -1
    mp[a] = -1
    mp[b] = 1
    mm[a] = mm[b] = -1
    return (
        _shifted(values, pp)
        - _shifted(values, pm)
        - _shifted(values, mp)
        + _shifted(values, mm)
    ) / (4.0 * spacing[a] * spacing[b])


def hermitian_entries(values, spacing, n):
    """Entries of the matrix 2 u_{z_j zbar_k} at all interior nodes.

    Returns a stacked array: for n=1 the single component [h00]; for n=2
    the components [h00, h11, Re h01, Im h01].
    """
    values = np.asarray(values)
    spacing = np.asarray(spacing, dtype=float)
    if n == 1:
        h00 = 0.5 * (_d2_axis(values, 0, spacing) + _d2_axis(values, 1, spacing))
        return np.stack([h00])
    if n == 2:
        h00 = 0.5 * (_d2_axis(values, 0, spacing) + _d2_axis(values, 2, spacing))
        h11 = 0.5 * (_d2_axis(values, 1, spacing) + _d2_axis(values, 3, spacing))
        re01 = 0.5 * (_d2_mixed(values, 0, 1, spacing) + _d2_mixed(values, 2, 3, spacing))
        im01 = 0.5 * (_d2_mixed(values, 0, 3, spacing) - _d2_mixed(values, 2, 1, spacing))
        return np.stack([h00, h11, re01, im01])
    raise ValueError(f"kernels support complex dimension 1 or 2, got n={n}")


def det_and_min_eig(entries, n):
    """Determinant and smallest eigenvalue of the 2 u_{z zbar} matrix,
    nodewise over the interior."""
    if n == 1:
        return entries[0].copy(), entries[0].copy()
    if n == 2:
        h00, h11, re01, im01 = entries
        off2 = re01 ** 2 + im01 ** 2
        det = h00 * h11 - off2
        half_tr = 0.5 * (h00 + h11)
        disc = np.sqrt(0.25 * (h00 - h11) ** 2 + off2)
        return det, half_tr - disc
    raise ValueError(f"kernels support complex dimension 1 or 2, got n={n}")


def linearized_stencil_weights(entries, n):
    """Coefficients of the linearized log-det operator at interior nodes.

    The derivative of u -> log det(2 u_{z zbar}) in direction v is
    sum_a diag_w[a] * v_aa + sum_p mixed_w[p] * v_{ab}, with v_aa / v_ab
    centered second differences.  Returns (diag_w, mixed_pairs, mixed_w);
    mixed_w rows follow mixed_pairs order.
    """
    if n == 1:
        p00 = 1.0 / entries[0]
        w = 0.5 * p00
        diag = np.stack([w, w])
        return diag, [], np.empty((0,) + entries[0].shape)
    if n == 2:
        h00, h11, re01, im01 = entries
        det = h00 * h11 - re01 ** 2 - im01 ** 2
        p00 = h11 / det
        p11 = h00 / det
        p01 = -re01 / det
        q01 = -im01 / det
        diag = np.stack([0.5 * p00, 0.5 * p11, 0.5 * p00, 0.5 * p11])
        pairs = [(0, 1), (2, 3), (0, 3), (1, 2)]
        mixed = np.stack([p01, p01, q01, -q01])
        return diag, pairs, mixed
    raise ValueError(f"kernels support complex dimension 1 or 2, got n={n}")
