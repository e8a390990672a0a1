"""Dirichlet solver for det(2 u_{z_j zbar_k}) = f on box domains in R^2n.

The discrete equation is solved in log-determinant form
G(u) = log det(2 u_{z zbar, h}) - log f, which is concave on the cone of
discretely plurisubharmonic grid functions, by damped Newton iteration.
Each step solves the sparse linearized system (an elliptic operator with
coefficients from the inverse complex Hessian) with an algebraic-multigrid
preconditioned Krylov method, falling back to a direct factorization.

Boundary values are held fixed; the boundary profiles bundled here are the
quadratic base |x|^2/2 plus sub-quadratic perturbations, parameterized by a
rescaling factor so that profile(Rx)/R^2 on the unit box is one object.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field, replace

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .linalg import FieldSpec, ScalarField, complex_hessian, real_hessian_at

logger = logging.getLogger(__name__)

# The interior complex Hessian must stay above this multiple of the
# identity along the whole Newton path.
PSH_FLOOR = 1e-8

# Direct factorization below this many unknowns; AMG-preconditioned
# BiCGStab above.
DIRECT_SOLVE_LIMIT = 4096

# The multigrid setup draws a random start vector for its spectral-radius
# power iteration from the process-global legacy numpy RNG, which would make
# solve output bits vary run to run (and with thread interleaving).  Every
# hierarchy is built under this lock with that RNG pinned and restored.
_AMG_SETUP_LOCK = threading.Lock()
_AMG_SETUP_SEED = 1185362529

BOUNDARY_KINDS = (
    "quadratic_base",
    "linear",
    "power",
    "logdamped",
    "quadratic_excess",
)


class SolverError(RuntimeError):
    pass


class NewtonStalled(SolverError):
    pass


class NotPSHInitial(SolverError):
    pass


class MaxIterations(SolverError):
    pass


class LinearSolveDiverged(SolverError):
    pass


class NotPSH(SolverError):
    pass


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryProfile:
    """Boundary data g(x) = |x|^2/2 + perturbation(x) at rescaling `scale`.

    The perturbation of the profile at scale R is pert(Rx)/R^2 with pert
    the scale-1 shape, so rescaled profiles live on the same unit box:

      quadratic_base:            0
      linear(a, b):              a * sum(x)/sqrt(2n) + b
      power(c, alpha):           c * |x|^alpha          (0 < alpha < 2)
      logdamped(c):              c * |x|^2 / log(e + |x|^2)
      quadratic_excess(c):       c * |x|^2              (scale-invariant)
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    alpha: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "power" and not 0.0 < self.alpha < 2.0:
            raise ValueError(
                f"power profile needs 0 < alpha < 2, got alpha={self.alpha}"
            )
        if self.scale <= 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @classmethod
    def quadratic_base(cls):
        return cls("quadratic_base")

    @classmethod
    def linear(cls, a, b=0.0):
        return cls("linear", a=a, b=b)

    @classmethod
    def power(cls, c, alpha):
        return cls("power", c=c, alpha=alpha)

    @classmethod
    def logdamped(cls, c):
        return cls("logdamped", c=c)

    @classmethod
    def quadratic_excess(cls, c):
        return cls("quadratic_excess", c=c)

    def with_scale(self, scale):
        return replace(self, scale=float(scale))

    def perturbation(self, *coords):
        """The perturbation at this profile's scale, vectorized over grids."""
        r = self.scale
        sq = sum(np.asarray(x) ** 2 for x in coords)
        if self.kind == "quadratic_base":
            return np.zeros_like(sq)
        if self.kind == "linear":
            d = len(coords)
            lin = sum(np.asarray(x) for x in coords) / np.sqrt(d)
            return (self.a / r) * lin + self.b / r ** 2
        if self.kind == "power":
            return self.c * r ** (self.alpha - 2.0) * sq ** (0.5 * self.alpha)
        if self.kind == "logdamped":
            return self.c * sq / np.log(np.e + r ** 2 * sq)
        # quadratic_excess
        return self.c * sq

    def boundary_values(self, *coords):
        sq = sum(np.asarray(x) ** 2 for x in coords)
        return 0.5 * sq + self.perturbation(*coords)

    def perturbation_sup(self, spec: FieldSpec):
        """Exact sup of |perturbation| over the box of `spec` by corner
        enumeration (every bundled shape attains its max at a corner)."""
        d = spec.dim
        best = 0.0
        for mask in range(1 << d):
            corner = [
                spec.center[a] + (spec.halfwidth[a] if (mask >> a) & 1 else -spec.halfwidth[a])
                for a in range(d)
            ]
            val = abs(float(self.perturbation(*corner)))
            best = max(best, val)
        return best


@dataclass(frozen=True)
class DirichletProblem:
    """det(2 u_{z zbar}) = f on the box of `spec` with boundary data from
    `boundary` (a BoundaryProfile, or any callable of the coordinate
    arrays returning g on the grid)."""

    spec: FieldSpec
    f: object = 1.0
    boundary: object = None

    def __post_init__(self):
        if self.spec.n not in (1, 2):
            raise ValueError(f"solver supports n = 1 or 2, got n={self.spec.n}")
        if self.boundary is None:
            object.__setattr__(self, "boundary", BoundaryProfile.quadratic_base())
        if isinstance(self.f, ScalarField):
            if not self.f.spec.same_grid(self.spec):
                raise GridMismatch("rhs grid does not match the problem grid")
            fmin = float(self.f.values.min())
        else:
            fmin = float(self.f)
        if not fmin > 0.0:
            raise ValueError(f"rhs must be strictly positive, min is {fmin:g}")

    def boundary_array(self):
        """Boundary data evaluated on the full grid (interior values are
        meaningful too; only the boundary ring constrains the solve)."""
        coords = self.spec.meshgrid()
        g = self.boundary
        if hasattr(g, "boundary_values"):
            vals = g.boundary_values(*coords)
        else:
            vals = g(*coords)
        return np.broadcast_to(np.asarray(vals, dtype=float), coords[0].shape).copy()

    def log_rhs(self):
        """log f on interior nodes: scalar for constant f, array otherwise."""
        if isinstance(self.f, ScalarField):
            return np.log(_interior(self.f.values))
        return float(np.log(self.f))


@dataclass(frozen=True)
class SolveOptions:
    tolerance: float = 1e-10
    max_iterations: int = 50
    min_step: float = 2.0 ** -30
    psh_floor: float = PSH_FLOOR
    linear_rtol: float = 1e-12
    linear_maxiter: int = 500
    linear_method: str = "auto"  # auto | iterative | direct

    def __post_init__(self):
        if self.linear_method not in ("auto", "iterative", "direct"):
            raise ValueError(f"unknown linear_method {self.linear_method!r}")


@dataclass(frozen=True)
class LinearSolveReport:
    method: str
    iterations: int
    relative_residual: float


@dataclass
class SolveReport:
    iterations: int = 0
    final_residual: float = np.inf
    min_complex_eigen: float = -np.inf
    damping_events: int = 0
    linear_solves: list = field(default_factory=list)


def _interior(values):
    return values[(slice(1, -1),) * values.ndim]


def _boundary_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    for a in range(len(shape)):
        idx_lo = [slice(None)] * len(shape)
        idx_hi = [slice(None)] * len(shape)
        idx_lo[a] = 0
        idx_hi[a] = -1
        mask[tuple(idx_lo)] = True
        mask[tuple(idx_hi)] = True
    return mask


def _offset_slices(shape, offsets):
    """(src, dst) slice tuples so arr[dst] is the neighbor of arr[src]
    displaced by `offsets`, both staying inside `shape`."""
    src = []
    dst = []
    for extent, o in zip(shape, offsets):
        if o == 1:
            src.append(slice(0, extent - 1))
            dst.append(slice(1, extent))
        elif o == -1:
            src.append(slice(1, extent))
            dst.append(slice(0, extent - 1))
        elif o == 0:
            src.append(slice(0, extent))
            dst.append(slice(0, extent))
        else:
            raise ValueError(f"offset out of range: {o}")
    return tuple(src), tuple(dst)


def _assemble_linearized(diag_w, mixed_pairs, mixed_w, spacing):
    """Sparse matrix of -dG over interior unknowns, boundary columns
    dropped (Newton corrections vanish on the boundary).

    dG[v] = sum_a diag_w[a] v_aa + sum_p mixed_w[p] v_ab with centered
    second differences; the negation makes the assembled operator positive
    (elliptic with PSD coefficient blocks at a plurisubharmonic iterate).
    """
    shape = diag_w.shape[1:]
    d = len(shape)
    size = int(np.prod(shape))
    ids = np.arange(size).reshape(shape)
    rows = []
    cols = []
    data = []

    center = np.zeros(shape)
    for a in range(d):
        w = diag_w[a] / spacing[a] ** 2
        center += 2.0 * w
        for o in (1, -1):
            offsets = [0] * d
            offsets[a] = o
            src, dst = _offset_slices(shape, offsets)
            rows.append(ids[src].ravel())
            cols.append(ids[dst].ravel())
            data.append(-w[src].ravel())

    for (a, b), w_ab in zip(mixed_pairs, mixed_w):
        w = w_ab / (4.0 * spacing[a] * spacing[b])
        for oa, ob, sign in ((1, 1, -1.0), (-1, -1, -1.0), (1, -1, 1.0), (-1, 1, 1.0)):
            offsets = [0] * d
            offsets[a] = oa
            offsets[b] = ob
            src, dst = _offset_slices(shape, offsets)
            rows.append(ids[src].ravel())
            cols.append(ids[dst].ravel())
            data.append(sign * w[src].ravel())

    rows.append(ids.ravel())
    cols.append(ids.ravel())
    data.append(center.ravel())

    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    )
    return mat.tocsr()


def _solve_linear(mat, rhs, opts: SolveOptions):
    """Solve mat x = rhs to relative residual linear_rtol; AMG-
    preconditioned BiCGStab with a direct fallback."""
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs), LinearSolveReport("trivial", 0, 0.0)

    method = opts.linear_method
    if method == "auto":
        method = "direct" if mat.shape[0] <= DIRECT_SOLVE_LIMIT else "iterative"

    if method == "iterative":
        with _AMG_SETUP_LOCK:
            state = np.random.get_state()
            np.random.seed(_AMG_SETUP_SEED)
            try:
                ml = pyamg.smoothed_aggregation_solver(
                    mat, symmetry="nonsymmetric", max_coarse=32
                )
            finally:
                np.random.set_state(state)
        counter = {"it": 0}

        def _count(_):
            counter["it"] += 1

        x, info = spla.bicgstab(
            mat,
            rhs,
            rtol=opts.linear_rtol,
            atol=0.0,
            maxiter=opts.linear_maxiter,
            M=ml.aspreconditioner(cycle="V"),
            callback=_count,
        )
        rel = float(np.linalg.norm(mat @ x - rhs)) / rhs_norm
        if info == 0 and rel <= 10.0 * opts.linear_rtol:
            return x, LinearSolveReport("amg-bicgstab", counter["it"], rel)
        logger.warning(
            "iterative linear solve stalled (info=%s, rel=%.3e); retrying direct",
            info,
            rel,
        )

    x = spla.spsolve(mat.tocsc(), rhs)
    rel = float(np.linalg.norm(mat @ x - rhs)) / rhs_norm
    if not np.isfinite(rel) or rel > 1e-8:
        raise LinearSolveDiverged(f"direct solve left relative residual {rel:.3e}")
    return x, LinearSolveReport("direct", 1, rel)


def _laplace_matrix(shape, spacing):
    """Positive-definite discrete -Laplace over interior unknowns (the
    generic assembler with unit diagonal weights)."""
    diag_w = np.ones((len(shape),) + shape)
    return _assemble_linearized(diag_w, [], np.empty((0,) + shape), spacing)


def harmonic_extension(spec: FieldSpec, boundary_values, opts: SolveOptions = None):
    """Grid function equal to `boundary_values` on the boundary ring and
    discretely harmonic inside."""
    opts = opts or SolveOptions()
    shape = (spec.points_per_axis,) * spec.dim
    g = np.asarray(boundary_values, dtype=float).reshape(shape)
    mask = _boundary_mask(shape)
    v0 = np.where(mask, g, 0.0)

    d = spec.dim
    h = spec.spacing
    inner_shape = tuple(s - 2 for s in shape)
    rhs = np.zeros(inner_shape)
    for a in range(d):
        for o in (1, -1):
            offsets = [0] * d
            offsets[a] = o
            idx = []
            for ax, oo in enumerate(offsets):
                if oo == 1:
                    idx.append(slice(2, None))
                elif oo == -1:
                    idx.append(slice(0, -2))
                else:
                    idx.append(slice(1, -1))
            rhs += v0[tuple(idx)] / h[a] ** 2

    mat = _laplace_matrix(inner_shape, h)
    x, _ = _solve_linear(mat, rhs.ravel(), opts)
    out = v0.copy()
    _interior(out)[...] = x.reshape(inner_shape)
    return out


def _residual_arrays(values, spec, log_f):
    """(entries, det, mineig, residual) over interior nodes; residual is
    NaN where the complex Hessian is not positive definite."""
    entries = kernels.hermitian_entries(values, spec.spacing, spec.n)
    det, mineig = kernels.det_and_min_eig(entries, spec.n)
    with np.errstate(invalid="ignore", divide="ignore"):
        res = np.where(det > 0.0, np.log(np.where(det > 0.0, det, 1.0)), np.nan)
    res = res - log_f
    res = np.where(mineig > 0.0, res, np.nan)
    return entries, det, mineig, res


def residual(u: ScalarField, f) -> ScalarField:
    """G(u) = log det(2 u_{z zbar, h}) - log f on interior nodes, 0 on the
    boundary; NaN marks nodes where the complex Hessian is not positive
    definite (logged, not fatal)."""
    if isinstance(f, ScalarField):
        if not f.spec.same_grid(u.spec):
            raise GridMismatch("rhs grid does not match the field grid")
        log_f = np.log(_interior(f.values))
    else:
        if not float(f) > 0.0:
            raise ValueError(f"rhs must be strictly positive, got {f}")
        log_f = float(np.log(f))
    _, _, mineig, res = _residual_arrays(u.values, u.spec, log_f)
    bad = int(np.count_nonzero(~np.isfinite(res)))
    if bad:
        logger.warning(
            "complex Hessian not positive definite at %d interior node(s)", bad
        )
    out = np.zeros_like(u.values)
    _interior(out)[...] = res
    return u.with_values(out)


def newton_step(u: ScalarField, f, opts: SolveOptions = None):
    """One undamped Newton correction delta (zero on the boundary) and the
    linear-solve report; u + delta is the next full-step iterate."""
    opts = opts or SolveOptions()
    spec = u.spec
    if isinstance(f, ScalarField):
        log_f = np.log(_interior(f.values))
    else:
        log_f = float(np.log(f))
    entries, det, mineig, res = _residual_arrays(u.values, spec, log_f)
    if not np.all(mineig >= opts.psh_floor):
        raise NotPSH(
            f"complex Hessian below the floor {opts.psh_floor:g} "
            f"(min eigenvalue {float(mineig.min()):.3e})"
        )
    diag_w, pairs, mixed_w = kernels.linearized_stencil_weights(entries, spec.n)
    mat = _assemble_linearized(diag_w, pairs, mixed_w, spec.spacing)
    x, rep = _solve_linear(mat, res.ravel(), opts)
    delta = np.zeros_like(u.values)
    _interior(delta)[...] = x.reshape(res.shape)
    return u.with_values(delta), rep


def solve_dirichlet(problem: DirichletProblem, opts: SolveOptions = None):
    """Damped Newton solve; returns (ScalarField, SolveReport).

    The initial iterate is |x|^2/2 plus the discrete harmonic extension of
    the boundary excess, which matches the boundary data exactly.  Steps
    are halved until the complex Hessian stays above psh_floor at every
    interior node and the residual max-norm strictly decreases.
    """
    opts = opts or SolveOptions()
    spec = problem.spec
    log_f = problem.log_rhs()

    coords = spec.meshgrid()
    base = 0.5 * sum(x ** 2 for x in coords)
    g = problem.boundary_array()
    u = base + harmonic_extension(spec, g - base, opts)

    entries, det, mineig, res = _residual_arrays(u, spec, log_f)
    min_eig = float(mineig.min())
    if min_eig < opts.psh_floor:
        raise NotPSHInitial(
            f"initial iterate has complex-Hessian eigenvalue {min_eig:.3e} "
            f"below the floor {opts.psh_floor:g}; boundary data is too far "
            "from plurisubharmonic"
        )
    norm = float(np.max(np.abs(res)))

    report = SolveReport()
    while norm > opts.tolerance:
        if report.iterations >= opts.max_iterations:
            raise MaxIterations(
                f"residual {norm:.3e} after {report.iterations} iterations"
            )
        diag_w, pairs, mixed_w = kernels.linearized_stencil_weights(entries, spec.n)
        mat = _assemble_linearized(diag_w, pairs, mixed_w, spec.spacing)
        x, lin_rep = _solve_linear(mat, res.ravel(), opts)
        report.linear_solves.append(lin_rep)
        delta = x.reshape(res.shape)

        t = 1.0
        while True:
            trial = u.copy()
            _interior(trial)[...] += t * delta
            entries_t, det_t, mineig_t, res_t = _residual_arrays(trial, spec, log_f)
            if float(mineig_t.min()) >= opts.psh_floor:
                norm_t = float(np.max(np.abs(res_t)))
                if norm_t < norm:
                    break
            t *= 0.5
            report.damping_events += 1
            if t < opts.min_step:
                raise NewtonStalled(
                    f"step underflowed below {opts.min_step:g} at residual {norm:.3e}"
                )

        u = trial
        entries, det, mineig, res = entries_t, det_t, mineig_t, res_t
        norm = norm_t
        report.iterations += 1

    report.final_residual = norm
    report.min_complex_eigen = float(mineig.min())
    return ScalarField(spec, u), report


def comparison_check(u1: ScalarField, u2: ScalarField):
    """(interior_gap, boundary_gap) = max |u1 - u2| over interior and
    boundary nodes; solutions of the same equation should satisfy
    interior_gap <= boundary_gap + comparison_slack(spec)."""
    if not u1.spec.same_grid(u2.spec):
        raise GridMismatch("fields live on different grids")
    diff = np.abs(u1.values - u2.values)
    mask = _boundary_mask(diff.shape)
    return float(diff[~mask].max()), float(diff[mask].max())


def comparison_slack(spec: FieldSpec):
    """Truncation allowance 10 h^2 for the comparison property; the
    centered scheme is consistent but not monotone."""
    return 10.0 * float(np.max(spec.spacing)) ** 2


def hessian_at_center(u: ScalarField):
    """(real Hessian, complex Hessian as 2 u_{z zbar}) at the box center,
    by centered second differences."""
    p = u.spec.center_index
    return real_hessian_at(u, p), complex_hessian(u, p)


def write_solve_report_csv(path, problem: DirichletProblem, report: SolveReport):
    """Single-row CSV with the solve summary (17 significant digits)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "n",
                "points_per_axis",
                "iterations",
                "final_residual",
                "min_complex_eigen",
                "damping_events",
            ]
        )
        writer.writerow(
            [
                str(problem.spec.n),
                str(problem.spec.points_per_axis),
                str(report.iterations),
                f"{report.final_residual:.17g}",
                f"{report.min_complex_eigen:.17g}",
                str(report.damping_events),
            ]
        )
