# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled stencil kernels.

Same API and same arithmetic (operation order included) as the numpy
backend in fallback.py; see that module for the reference formulas.  The
extension is built with floating-point contraction disabled so both
backends produce identical bits.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "compiled"


def hermitian_entries(values, spacing, n):
    """Entries of 2 u_{z_j zbar_k} at all interior nodes; see fallback."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    spacing = np.asarray(spacing, dtype=np.float64)
    if n == 1:
        if values.ndim != 2:
            raise ValueError(f"n=1 needs a 2-d grid, got ndim={values.ndim}")
        return _entries_n1(values, float(spacing[0]), float(spacing[1]))
    if n == 2:
        if values.ndim != 4:
            raise ValueError(f"n=2 needs a 4-d grid, got ndim={values.ndim}")
        return _entries_n2(
            values,
            float(spacing[0]), float(spacing[1]),
            float(spacing[2]), float(spacing[3]),
        )
    raise ValueError(f"kernels support complex dimension 1 or 2, got n={n}")


cdef _entries_n1(const double[:, ::1] v, double h0, double h1):
    cdef Py_ssize_t m0 = v.shape[0], m1 = v.shape[1]
    cdef Py_ssize_t i, j
    cdef double c, dxx, dyy
    cdef double h0sq = h0 * h0, h1sq = h1 * h1
    out = np.empty((1, m0 - 2, m1 - 2), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    for i in range(1, m0 - 1):
        for j in range(1, m1 - 1):
            c = v[i, j]
            dxx = (v[i + 1, j] - 2.0 * c + v[i - 1, j]) / h0sq
            dyy = (v[i, j + 1] - 2.0 * c + v[i, j - 1]) / h1sq
            o[0, i - 1, j - 1] = 0.5 * (dxx + dyy)
    return out


cdef _entries_n2(const double[:, :, :, ::1] v, double h0, double h1, double h2, double h3):
    cdef Py_ssize_t m0 = v.shape[0], m1 = v.shape[1]
    cdef Py_ssize_t m2 = v.shape[2], m3 = v.shape[3]
    cdef Py_ssize_t i, j, k, l
    cdef double c
    cdef double d00, d11, d22, d33, d01, d23, d03, d21
    cdef double h0sq = h0 * h0, h1sq = h1 * h1, h2sq = h2 * h2, h3sq = h3 * h3
    cdef double q01 = 4.0 * h0 * h1, q23 = 4.0 * h2 * h3
    cdef double q03 = 4.0 * h0 * h3, q21 = 4.0 * h2 * h1
    out = np.empty((4, m0 - 2, m1 - 2, m2 - 2, m3 - 2), dtype=np.float64)
    cdef double[:, :, :, :, ::1] o = out
    for i in range(1, m0 - 1):
        for j in range(1, m1 - 1):
            for k in range(1, m2 - 1):
                for l in range(1, m3 - 1):
                    c = v[i, j, k, l]
                    d00 = (v[i + 1, j, k, l] - 2.0 * c + v[i - 1, j, k, l]) / h0sq
                    d11 = (v[i, j + 1, k, l] - 2.0 * c + v[i, j - 1, k, l]) / h1sq
                    d22 = (v[i, j, k + 1, l] - 2.0 * c + v[i, j, k - 1, l]) / h2sq
                    d33 = (v[i, j, k, l + 1] - 2.0 * c + v[i, j, k, l - 1]) / h3sq
                    d01 = (
                        v[i + 1, j + 1, k, l] - v[i + 1, j - 1, k, l]
                        - v[i - 1, j + 1, k, l] + v[i - 1, j - 1, k, l]
                    ) / q01
                    d23 = (
                        v[i, j, k + 1, l + 1] - v[i, j, k + 1, l - 1]
                        - v[i, j, k - 1, l + 1] + v[i, j, k - 1, l - 1]
                    ) / q23
                    d03 = (
                        v[i + 1, j, k, l + 1] - v[i + 1, j, k, l - 1]
                        - v[i - 1, j, k, l + 1] + v[i - 1, j, k, l - 1]
                    ) / q03
                    d21 = (
                        v[i, j + 1, k + 1, l] - v[i, j - 1, k + 1, l]
                        - v[i, j + 1, k - 1, l] + v[i, j - 1, k - 1, l]
                    ) / q21
                    o[0, i - 1, j - 1, k - 1, l - 1] = 0.5 * (d00 + d22)
                    o[1, i - 1, j - 1, k - 1, l - 1] = 0.5 * (d11 + d33)
                    o[2, i - 1, j - 1, k - 1, l - 1] = 0.5 * (d01 + d23)
                    o[3, i - 1, j - 1, k - 1, l - 1] = 0.5 * (d03 - d21)
    return out


def det_and_min_eig(entries, n):
    """Determinant and smallest eigenvalue nodewise; see fallback."""
    entries = np.ascontiguousarray(entries, dtype=np.float64)
    if n == 1:
        return entries[0].copy(), entries[0].copy()
    if n == 2:
        shape = entries.shape[1:]
        flat = entries.reshape(4, -1)
        det = np.empty(flat.shape[1], dtype=np.float64)
        mineig = np.empty(flat.shape[1], dtype=np.float64)
        _det_min_n2(flat, det, mineig)
        return det.reshape(shape), mineig.reshape(shape)
    raise ValueError(f"kernels support complex dimension 1 or 2, got n={n}")


cdef void _det_min_n2(
    const double[:, ::1] e, double[::1] det, double[::1] mineig
):
    cdef Py_ssize_t size = e.shape[1]
    cdef Py_ssize_t i
    cdef double h00, h11, re01, im01, off2, diff
    for i in range(size):
        h00 = e[0, i]
        h11 = e[1, i]
        re01 = e[2, i]
        im01 = e[3, i]
        off2 = re01 * re01 + im01 * im01
        det[i] = h00 * h11 - off2
        diff = h00 - h11
        mineig[i] = 0.5 * (h00 + h11) - sqrt(0.25 * (diff * diff) + off2)


def linearized_stencil_weights(entries, n):
    """Linearized log-det stencil coefficients; see fallback."""
    entries = np.ascontiguousarray(entries, dtype=np.float64)
    shape = entries.shape[1:]
    if n == 1:
        flat = entries.reshape(1, -1)
        diag = np.empty((2, flat.shape[1]), dtype=np.float64)
        _weights_n1(flat, diag)
        return diag.reshape((2,) + shape), [], np.empty((0,) + shape)
    if n == 2:
        flat = entries.reshape(4, -1)
        diag = np.empty((4, flat.shape[1]), dtype=np.float64)
        mixed = np.empty((4, flat.shape[1]), dtype=np.float64)
        _weights_n2(flat, diag, mixed)
        pairs = [(0, 1), (2, 3), (0, 3), (1, 2)]
        return diag.reshape((4,) + shape), pairs, mixed.reshape((4,) + shape)
    raise ValueError(f"kernels support complex dimension 1 or 2, got n={n}")


cdef void _weights_n1(const double[:, ::1] e, double[:, ::1] diag):
    cdef Py_ssize_t size = e.shape[1]
    cdef Py_ssize_t i
    cdef double w
    for i in range(size):
        w = 0.5 * (1.0 / e[0, i])
        diag[0, i] = w
        diag[1, i] = w
    return


cdef void _weights_n2(const double[:, ::1] e, double[:, ::1] diag, double[:, ::1] mixed):
    cdef Py_ssize_t size = e.shape[1]
    cdef Py_ssize_t i
    cdef double h00, h11, re01, im01, det, p00, p11, p01, q01
    for i in range(size):
        h00 = e[0, i]
        h11 = e[1, i]
        re01 = e[2, i]
        im01 = e[3, i]
        det = h00 * h11 - re01 * re01 - im01 * im01
        p00 = h11 / det
        p11 = h00 / det
        p01 = -re01 / det
        q01 = -im01 / det
        diag[0, i] = 0.5 * p00
        diag[1, i] = 0.5 * p11
        diag[2, i] = 0.5 * p00
        diag[3, i] = 0.5 * p11
        mixed[0, i] = p01
        mixed[1, i] = p01
        mixed[2, i] = q01
        mixed[3, i] = -q01
    return
