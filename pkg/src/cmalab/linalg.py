"""Matrix algebra for the identification of C^n with R^2n.

Real coordinates are ordered (x_1, ..., x_n, y_1, ..., y_n) with
z_j = x_j + i*y_j, so the complex structure J and the embedding of
Hermitian matrices into Sym(2n) have literal block form.  Also holds the
uniform-grid scalar field container used by the whole package.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

# An eigenvalue >= -PSD_TOL * max(1, scale) counts as nonnegative; symmetric
# eigensolvers jitter at this level for O(1)-sized matrices.
PSD_TOL = 1e-10

HERMITIAN_TOL = 1e-12
SYMMETRY_TOL = 1e-12


class DimensionMismatch(ValueError):
    pass


class NotJInvariant(ValueError):
    pass


class NotPSD(ValueError):
    pass


class BoundaryTooClose(ValueError):
    pass


@functools.lru_cache(maxsize=None)
def complex_structure_matrix(n):
    """The 2n x 2n matrix [[0, -I], [I, 0]] representing multiplication by i."""
    j = np.zeros((2 * n, 2 * n))
    j[:n, n:] = -np.eye(n)
    j[n:, :n] = np.eye(n)
    j.flags.writeable = False
    return j


@dataclass(frozen=True)
class ComplexStructure:
    """Multiplication by i on R^2n; J^2 = -I and J^T J = I."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DimensionMismatch(f"n must be positive, got {self.n}")

    @property
    def matrix(self):
        return complex_structure_matrix(self.n)


class HermitianMatrix:
    """n x n Hermitian matrix stored as symmetric real part A and
    antisymmetric imaginary part B, so H = A + iB holds structurally."""

    __slots__ = ("n", "_a", "_b")

    def __init__(self, real_part, imag_part):
        a = np.atleast_2d(np.asarray(real_part, dtype=float))
        b = np.atleast_2d(np.asarray(imag_part, dtype=float))
        if a.shape != b.shape or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(
                f"real/imag parts must be square and matching, got {a.shape}, {b.shape}"
            )
        self.n = a.shape[0]
        # enforce A = A^T, B = -B^T structurally
        self._a = 0.5 * (a + a.T)
        self._b = 0.5 * (b - b.T)
        self._a.flags.writeable = False
        self._b.flags.writeable = False

    @classmethod
    def from_array(cls, h, tol=HERMITIAN_TOL):
        h = np.atleast_2d(np.asarray(h, dtype=complex))
        if h.shape[0] != h.shape[1]:
            raise DimensionMismatch(f"expected square matrix, got {h.shape}")
        scale = np.linalg.norm(h)
        if np.linalg.norm(h - h.conj().T) > tol * max(1.0, scale):
            raise ValueError("matrix is not Hermitian within tolerance")
        return cls(h.real, h.imag)

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n), np.zeros((n, n)))

    @property
    def real_part(self):
        return self._a

    @property
    def imag_part(self):
        return self._b

    @property
    def array(self):
        return self._a + 1j * self._b

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.array)

    def spectral_norm(self):
        eigs = self.eigenvalues()
        return float(np.max(np.abs(eigs))) if eigs.size else 0.0

    def scaled(self, c):
        return HermitianMatrix(c * self._a, c * self._b)

    def __repr__(self):
        return f"HermitianMatrix(n={self.n})"


class SymMatrix:
    """2n x 2n real symmetric matrix; the upper triangle is the storage of
    record, so M = M^T holds exactly."""

    __slots__ = ("dim", "_m")

    def __init__(self, entries, tol=SYMMETRY_TOL):
        m = np.atleast_2d(np.asarray(entries, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"expected square matrix, got {m.shape}")
        scale = np.linalg.norm(m)
        if np.linalg.norm(m - m.T) > tol * max(1.0, scale):
            raise ValueError("matrix is not symmetric within tolerance")
        self.dim = m.shape[0]
        upper = np.triu(m)
        self._m = upper + np.triu(m, 1).T
        self._m.flags.writeable = False

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim))

    @classmethod
    def zeros(cls, dim):
        return cls(np.zeros((dim, dim)))

    @property
    def array(self):
        return self._m

    def eigenvalues(self):
        return np.linalg.eigvalsh(self._m)

    def __add__(self, other):
        if isinstance(other, SymMatrix):
            return SymMatrix(self._m + other._m)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SymMatrix):
            return SymMatrix(self._m - other._m)
        return NotImplemented

    def __mul__(self, c):
        return SymMatrix(float(c) * self._m)

    __rmul__ = __mul__

    def __neg__(self):
        return SymMatrix(-self._m)

    def __repr__(self):
        return f"SymMatrix(dim={self.dim})"


def spectral_norm(m):
    """max |lambda_i| via the symmetric eigensolver."""
    arr = m.array if isinstance(m, (SymMatrix, HermitianMatrix)) else np.asarray(m)
    if arr.size == 0:
        return 0.0
    eigs = np.linalg.eigvalsh(arr)
    return float(np.max(np.abs(eigs)))


def embed(h: HermitianMatrix) -> SymMatrix:
    """Embed H = A + iB into Sym(2n) as [[A, -B], [B, A]].

    The image is symmetric, commutes with J, and carries each eigenvalue of
    H with doubled multiplicity.
    """
    a, b = h.real_part, h.imag_part
    n = h.n
    out = np.empty((2 * n, 2 * n))
    out[:n, :n] = a
    out[:n, n:] = -b
    out[n:, :n] = b
    out[n:, n:] = a
    return SymMatrix(out)


def j_project(m: SymMatrix) -> SymMatrix:
    """The J-invariant projection M -> (M + J^T M J) / 2.

    Idempotent, linear, and the result commutes with J; annihilates
    pluriharmonic Hessians.
    """
    if m.dim % 2 != 0:
        raise DimensionMismatch(f"dim must be even, got {m.dim}")
    j = complex_structure_matrix(m.dim // 2)
    arr = m.array
    return SymMatrix(0.5 * (arr + j.T @ arr @ j))


def inverse_embed(m: SymMatrix, tol=None) -> HermitianMatrix:
    """Invert the embedding on J-invariant symmetric matrices.

    Raises NotJInvariant when ||MJ - JM|| exceeds the tolerance
    (default PSD_TOL * max(1, max|entry|)).
    """
    if m.dim % 2 != 0:
        raise DimensionMismatch(f"dim must be even, got {m.dim}")
    n = m.dim // 2
    j = complex_structure_matrix(n)
    arr = m.array
    comm = arr @ j - j @ arr
    scale = float(np.max(np.abs(arr))) if arr.size else 0.0
    if tol is None:
        tol = PSD_TOL * max(1.0, scale)
    if np.max(np.abs(comm)) > tol:
        raise NotJInvariant(
            f"commutator norm {np.max(np.abs(comm)):.3e} exceeds tolerance {tol:.3e}"
        )
    a = 0.5 * (arr[:n, :n] + arr[n:, n:])
    b = 0.5 * (arr[n:, :n] - arr[:n, n:])
    return HermitianMatrix(a, b)


@dataclass(frozen=True)
class FieldSpec:
    """Uniform grid over a box in R^2n: center and half-width per real axis,
    odd points_per_axis so the box center is a grid node."""

    n: int
    points_per_axis: int
    center: np.ndarray = None
    halfwidth: np.ndarray = None

    def __post_init__(self):
        d = 2 * self.n
        if self.points_per_axis < 3 or self.points_per_axis % 2 == 0:
            raise ValueError(
                f"points_per_axis must be odd and >= 3, got {self.points_per_axis}"
            )
        center = np.zeros(d) if self.center is None else np.broadcast_to(
            np.asarray(self.center, dtype=float), (d,)
        ).copy()
        halfwidth = np.ones(d) if self.halfwidth is None else np.broadcast_to(
            np.asarray(self.halfwidth, dtype=float), (d,)
        ).copy()
        if np.any(halfwidth <= 0):
            raise ValueError("halfwidths must be positive")
        center.flags.writeable = False
        halfwidth.flags.writeable = False
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "halfwidth", halfwidth)

    @property
    def dim(self):
        return 2 * self.n

    @property
    def spacing(self):
        return 2.0 * self.halfwidth / (self.points_per_axis - 1)

    def axis_coords(self, a):
        m = self.points_per_axis
        return self.center[a] - self.halfwidth[a] + self.spacing[a] * np.arange(m)

    def meshgrid(self):
        axes = [self.axis_coords(a) for a in range(self.dim)]
        return np.meshgrid(*axes, indexing="ij")

    @property
    def center_index(self):
        return (self.points_per_axis // 2,) * self.dim

    def same_grid(self, other):
        return (
            self.n == other.n
            and self.points_per_axis == other.points_per_axis
            and np.allclose(self.center, other.center, atol=1e-14)
            and np.allclose(self.halfwidth, other.halfwidth, atol=1e-14)
        )


class ScalarField:
    """Real values on the uniform grid of a FieldSpec, row-major order.

    Values are frozen after construction; fields may be shared read-only
    across workers.
    """

    __slots__ = ("spec", "values")

    def __init__(self, spec: FieldSpec, values):
        values = np.asarray(values, dtype=float)
        shape = (spec.points_per_axis,) * spec.dim
        if values.size != spec.points_per_axis ** spec.dim:
            raise DimensionMismatch(
                f"expected {spec.points_per_axis ** spec.dim} values, got {values.size}"
            )
        self.spec = spec
        self.values = np.ascontiguousarray(values).reshape(shape).copy()
        self.values.flags.writeable = False

    @classmethod
    def from_function(cls, spec: FieldSpec, fn):
        """Sample fn on the grid; fn receives the tuple of coordinate arrays."""
        return cls(spec, fn(*spec.meshgrid()))

    @property
    def n(self):
        return self.spec.n

    @property
    def points_per_axis(self):
        return self.spec.points_per_axis

    @property
    def spacing(self):
        return self.spec.spacing

    def node_coords(self, idx):
        return np.array(
            [self.spec.axis_coords(a)[idx[a]] for a in range(self.spec.dim)]
        )

    def with_values(self, values):
        return ScalarField(self.spec, values)

    def dump(self, path):
        """Plain-text dump: header `n points_per_axis center... halfwidth...`,
        then one value per line in row-major order, 17 significant digits."""
        spec = self.spec
        header = " ".join(
            [str(spec.n), str(spec.points_per_axis)]
            + [f"{c:.17g}" for c in spec.center]
            + [f"{w:.17g}" for w in spec.halfwidth]
        )
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for v in self.values.ravel(order="C"):
                fh.write(f"{v:.17g}\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            header = fh.readline().split()
            n = int(header[0])
            m = int(header[1])
            d = 2 * n
            if len(header) != 2 + 2 * d:
                raise ValueError(f"malformed field header: expected {2 + 2 * d} tokens")
            center = np.array([float(t) for t in header[2 : 2 + d]])
            halfwidth = np.array([float(t) for t in header[2 + d : 2 + 2 * d]])
            values = np.loadtxt(fh)
        spec = FieldSpec(n, m, center, halfwidth)
        return cls(spec, values)

    def __repr__(self):
        return f"ScalarField(n={self.n}, points_per_axis={self.points_per_axis})"


def _second_difference(values, p, a, b, spacing, stride=1):
    """Centered second difference d^2 u / dx_a dx_b at multi-index p,
    sampled `stride` cells apart (stride 2 gives the coarsened stencil)."""
    p = tuple(p)
    s = int(stride)
    if a == b:
        up = list(p)
        up[a] += s
        dn = list(p)
        dn[a] -= s
        return (values[tuple(up)] - 2.0 * values[p] + values[tuple(dn)]) / (
            s * spacing[a]
        ) ** 2
    pp = list(p)
    pm = list(p)
    mp = list(p)
    mm = list(p)
    pp[a] += s
    pp[b] += s
    pm[a] += s
    pm[b] -= s
    mp[a] -= s
    mp[b] += s
    mm[a] -= s
    mm[b] -= s
    return (
        values[tuple(pp)] - values[tuple(pm)] - values[tuple(mp)] + values[tuple(mm)]
    ) / (4.0 * s * s * spacing[a] * spacing[b])


def real_hessian_at(u: ScalarField, p, stride=1) -> SymMatrix:
    """Centered-difference real Hessian D^2 u at grid node p."""
    spec = u.spec
    d = spec.dim
    m = spec.points_per_axis
    p = tuple(int(i) for i in p)
    s = int(stride)
    if any(i < s or i > m - 1 - s for i in p):
        raise BoundaryTooClose(
            f"node {p} has no full stride-{s} stencil on a {m}-point axis"
        )
    h = spec.spacing
    out = np.empty((d, d))
    for a in range(d):
        for b in range(a, d):
            out[a, b] = out[b, a] = _second_difference(u.values, p, a, b, h, s)
    return SymMatrix(out)


def complex_hessian(u: ScalarField, p) -> HermitianMatrix:
    """Matrix of 2 u_{z_j zbar_k} at grid node p by centered differences.

    Exact to rounding when u is a quadratic polynomial sampled on the grid.
    """
    spec = u.spec
    n = spec.n
    m = spec.points_per_axis
    p = tuple(int(i) for i in p)
    if any(i < 1 or i > m - 2 for i in p):
        raise BoundaryTooClose(f"node {p} has no full stencil on a {m}-point axis")
    h = spec.spacing
    a = np.empty((n, n))
    b = np.empty((n, n))
    for j in range(n):
        for k in range(n):
            xx = _second_difference(u.values, p, j, k, h)
            yy = _second_difference(u.values, p, n + j, n + k, h)
            xy = _second_difference(u.values, p, j, n + k, h)
            yx = _second_difference(u.values, p, n + j, k, h)
            # 2 u_{z_j zbar_k} = ((u_xjxk + u_yjyk) + i (u_xjyk - u_yjxk)) / 2
            a[j, k] = 0.5 * (xx + yy)
            b[j, k] = 0.5 * (xy - yx)
    return HermitianMatrix(a, b)


def det_identity_check(h: HermitianMatrix):
    """Return (det(2H), det^{1/2}(embed(2H))); the pair agrees on the PSD cone.

    Raises NotPSD when an eigenvalue of 2H falls below the PSD tolerance.
    """
    two_h = 2.0 * h.array
    eigs = np.linalg.eigvalsh(two_h)
    scale = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    if eigs.size and eigs.min() < -PSD_TOL * max(1.0, scale):
        raise NotPSD(f"2H has eigenvalue {eigs.min():.3e} below PSD tolerance")
    lhs = float(np.linalg.det(two_h).real)
    embedded = embed(HermitianMatrix(two_h.real, two_h.imag))
    rhs = float(np.sqrt(max(np.linalg.det(embedded.array), 0.0)))
    return lhs, rhs
