"""Discrete touching-polynomial probes for viscosity sub/supersolutions of
det(2 u_{z zbar}) = 1, and the built-in degenerate example
u = |z|(1 + |w|^2) on C^2 with its closed-form derivative identities.

A quadratic touches the field from above (below) at a node when it matches
the value there and stays >= u (<= u) at every grid node within a small
Euclidean ball.  The operator value attached to a touching quadratic q is
F(D^2 q - I): subsolutions must not see values < 0 from above-touching
quadratics, supersolutions none > 0 from below-touching ones, up to the
1e-8 reporting threshold.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .linalg import ScalarField, SymMatrix, real_hessian_at
from .operator_f import eval_F

# Violations are operator values beyond this threshold on the wrong side.
VIOLATION_TOL = 1e-8

# Touching equality/one-sidedness tolerance at grid nodes.
TOUCH_TOL = 1e-12

DEFAULT_BUMP = 0.1


class RadiusExceedsGrid(ValueError):
    pass


class TooCloseToSingularSet(ValueError):
    pass


@dataclass(frozen=True)
class QuadraticPolynomial:
    """q(x) = constant + linear . x + x^T hessian x / 2 on R^2n."""

    constant: float
    linear: np.ndarray
    hessian: SymMatrix

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=float).reshape(-1).copy()
        if lin.size != self.hessian.dim:
            raise ValueError(
                f"linear part has size {lin.size}, hessian dim {self.hessian.dim}"
            )
        lin.flags.writeable = False
        object.__setattr__(self, "linear", lin)

    @classmethod
    def from_taylor(cls, value, gradient, hessian: SymMatrix, point):
        """The quadratic with the given 2-jet at `point`, in absolute
        coordinates."""
        point = np.asarray(point, dtype=float).reshape(-1)
        gradient = np.asarray(gradient, dtype=float).reshape(-1)
        hp = hessian.array @ point
        constant = float(value - gradient @ point + 0.5 * point @ hp)
        return cls(constant, gradient - hp, hessian)

    def __call__(self, points):
        """Evaluate at points of shape (..., 2n)."""
        x = np.asarray(points, dtype=float)
        quad = 0.5 * np.einsum("...a,ab,...b->...", x, self.hessian.array, x)
        return self.constant + x @ self.linear + quad


@dataclass(frozen=True)
class TouchingReport:
    point: tuple
    coords: tuple
    direction: str  # "above" or "below"
    polynomial: QuadraticPolynomial
    gap: float
    operator_value: float
    trial_seed: int


def _ball_offsets(spec, radius):
    """Integer node offsets within Euclidean distance `radius` of a node."""
    reach = [int(np.floor(radius / h + 1e-12)) for h in spec.spacing]
    offsets = []
    for o in itertools.product(*(range(-k, k + 1) for k in reach)):
        dist2 = sum((oi * hi) ** 2 for oi, hi in zip(o, spec.spacing))
        if dist2 <= radius ** 2 + 1e-12:
            offsets.append(o)
    return offsets, reach


def _check_ball_inside(spec, p, reach):
    m = spec.points_per_axis
    for i, k in zip(p, reach):
        if i - k < 0 or i + k > m - 1:
            raise RadiusExceedsGrid(
                f"ball of reach {reach} around node {tuple(p)} leaves the "
                f"{m}-point grid"
            )


def default_radius(spec):
    """Three grid cells: small enough to stay local, wide enough to pin
    the quadratic against all axis and diagonal directions."""
    return 3.0 * float(np.max(spec.spacing))


def _neighborhood(u, p, radius):
    """(coords, values) of the grid nodes within `radius` of node p."""
    spec = u.spec
    offsets, reach = _ball_offsets(spec, radius)
    _check_ball_inside(spec, p, reach)
    nodes = np.array([[pi + oi for pi, oi in zip(p, o)] for o in offsets], dtype=int)
    coords = np.stack(
        [spec.axis_coords(a)[nodes[:, a]] for a in range(spec.dim)], axis=-1
    )
    return coords, u.values[tuple(nodes.T)]


def _one_sided_gap(u, q, p, radius, direction):
    """min over the ball of (q - u) for `above`, (u - q) for `below`,
    plus the centering mismatch |q(p) - u(p)|."""
    coords, uvals = _neighborhood(u, p, radius)
    diff = q(coords) - uvals
    if direction == "below":
        diff = -diff
    mismatch = abs(float(q(u.node_coords(p))) - float(u.values[tuple(p)]))
    return float(diff.min()), mismatch


def touches(u: ScalarField, q: QuadraticPolynomial, p, radius, direction) -> bool:
    """True when q matches u at node p (within 1e-12) and stays on the
    `direction` side of u at every grid node within `radius`."""
    if direction not in ("above", "below"):
        raise ValueError(f"direction must be above or below, got {direction!r}")
    gap, mismatch = _one_sided_gap(u, q, tuple(int(i) for i in p), radius, direction)
    return mismatch <= TOUCH_TOL and gap >= -TOUCH_TOL


def _draw_bump(rng, dim, bump, direction):
    """Random symmetric bump with spectral norm <= bump.

    Even trials draw a signed Gaussian bump (adversarial: it touches only
    when the draw happens to be one-sided on the node ball); odd trials a
    definite one, pushed away from zero and signed with the direction, so
    that touching succeeds often."""
    g = rng.standard_normal((dim, dim))
    g = 0.5 * (g + g.T)
    if rng.integers(0, 2) == 0:
        norm = float(np.max(np.abs(np.linalg.eigvalsh(g))))
        return g * (bump * rng.uniform(0.0, 1.0) / max(norm, 1e-300))
    w = g @ g.T
    w *= bump * rng.uniform(0.0, 0.5) / max(float(np.linalg.eigvalsh(w)[-1]), 1e-300)
    s = w + bump * rng.uniform(0.25, 0.5) * np.eye(dim)
    return s if direction == "above" else -s


def _probe(u, p, trials, direction, seed, radius, bump):
    spec = u.spec
    p = tuple(int(i) for i in p)
    if radius is None:
        radius = default_radius(spec)
    h = spec.spacing
    value = float(u.values[p])
    gradient = np.empty(spec.dim)
    for a in range(spec.dim):
        up = list(p)
        dn = list(p)
        up[a] += 1
        dn[a] -= 1
        gradient[a] = (u.values[tuple(up)] - u.values[tuple(dn)]) / (2.0 * h[a])
    hess = real_hessian_at(u, p).array
    point = u.node_coords(p)
    eye = np.eye(spec.dim)
    coords, uvals = _neighborhood(u, p, radius)
    sign = 1.0 if direction == "above" else -1.0

    reports = []
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))
        s = _draw_bump(rng, spec.dim, bump, direction)
        q = QuadraticPolynomial.from_taylor(value, gradient, SymMatrix(hess + s), point)
        diff = sign * (q(coords) - uvals)
        gap = float(diff.min())
        mismatch = abs(float(q(point)) - value)
        if mismatch > TOUCH_TOL or gap < -TOUCH_TOL:
            continue
        shifted = eval_F(SymMatrix(q.hessian.array - eye))
        if direction == "below" and shifted.branch == "degenerate":
            # automatically nonpositive; carries no supersolution information
            continue
        reports.append(
            TouchingReport(
                point=p,
                coords=tuple(float(c) for c in point),
                direction=direction,
                polynomial=q,
                gap=gap,
                operator_value=shifted.value,
                trial_seed=trial,
            )
        )
    return reports


def subsolution_probe(u: ScalarField, p, trials, seed=0, radius=None, bump=DEFAULT_BUMP):
    """Random quadratics touching u from above at node p; each report
    carries F(D^2 q - I), which a discrete subsolution keeps >= -1e-8."""
    return _probe(u, p, trials, "above", seed, radius, bump)


def supersolution_probe(u: ScalarField, p, trials, seed=0, radius=None, bump=DEFAULT_BUMP):
    """Random quadratics touching u from below at node p; degenerate-
    branch quadratics are skipped, the rest must keep F(D^2 q - I) <= 1e-8."""
    return _probe(u, p, trials, "below", seed, radius, bump)


def violations(reports):
    """The reports whose operator value crosses the threshold on the wrong
    side for their direction."""
    out = []
    for r in reports:
        if r.direction == "above" and r.operator_value < -VIOLATION_TOL:
            out.append(r)
        elif r.direction == "below" and r.operator_value > VIOLATION_TOL:
            out.append(r)
    return out


def write_violation_csv(reports, path, dim):
    """Violation rows: point coordinates, direction, gap, operator value,
    trial seed."""
    coord_names = [f"x{a + 1}" for a in range(dim // 2)] + [
        f"y{a + 1}" for a in range(dim // 2)
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(coord_names + ["direction", "gap", "operator_value", "seed"])
        for r in reports:
            writer.writerow(
                [f"{c:.17g}" for c in r.coords]
                + [
                    r.direction,
                    f"{r.gap:.17g}",
                    f"{r.operator_value:.17g}",
                    str(r.trial_seed),
                ]
            )


# ---------------------------------------------------------------------------
# The hinge example u = |z|(1 + |w|^2): plurisubharmonic, solves
# det(2 u_{z zbar}) = 1 away from {z = 0}, fails to be C^2 there, and grows
# like |x|^3 along z = w.

SINGULAR_MARGIN = 1e-6


def blocki_value(z, w):
    """u(z, w) = |z| (1 + |w|^2)."""
    return np.abs(z) * (1.0 + np.abs(w) ** 2)


def blocki_field(spec) -> ScalarField:
    """The example sampled on a grid in C^2 (axis order x1, x2, y1, y2
    with z = x1 + i y1, w = x2 + i y2)."""
    if spec.n != 2:
        raise ValueError(f"the example lives on C^2; got n={spec.n}")

    def sample(x1, x2, y1, y2):
        return blocki_value(x1 + 1j * y1, x2 + 1j * y2)

    return ScalarField.from_function(spec, sample)


def blocki_complex_hessian(z, w):
    """Closed-form matrix 2 u_{j kbar} at a smooth point:
    u_{z zbar} = (1+|w|^2)/(4|z|), u_{w wbar} = |z|,
    u_{z wbar} = zbar w / (2|z|)."""
    r = abs(z)
    if r < SINGULAR_MARGIN:
        raise TooCloseToSingularSet(f"|z| = {r:.3e} is inside the margin {SINGULAR_MARGIN:g}")
    h = np.empty((2, 2), dtype=complex)
    h[0, 0] = 2.0 * (1.0 + abs(w) ** 2) / (4.0 * r)
    h[1, 1] = 2.0 * r
    h[0, 1] = 2.0 * np.conj(z) * w / (2.0 * r)
    h[1, 0] = np.conj(h[0, 1])
    return h


def blocki_det_check(z, w):
    """det(2 u_{j kbar}) from the closed-form derivatives; identically 1
    at smooth points."""
    h = blocki_complex_hessian(z, w)
    return float((h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]).real)


def blocki_det_fd(z, w, step=1e-3):
    """The same determinant from a centered finite-difference real Hessian
    of the formula (step in every coordinate)."""
    if abs(z) < SINGULAR_MARGIN:
        raise TooCloseToSingularSet(f"|z| = {abs(z):.3e} is inside the margin {SINGULAR_MARGIN:g}")
    x0 = np.array([z.real, w.real, z.imag, w.imag], dtype=float)

    def f(x):
        return float(blocki_value(x[0] + 1j * x[2], x[1] + 1j * x[3]))

    d = 4
    hess = np.empty((d, d))
    for a in range(d):
        ea = np.zeros(d)
        ea[a] = step
        hess[a, a] = (f(x0 + ea) - 2.0 * f(x0) + f(x0 - ea)) / step ** 2
        for b in range(a + 1, d):
            eb = np.zeros(d)
            eb[b] = step
            hess[a, b] = hess[b, a] = (
                f(x0 + ea + eb) - f(x0 + ea - eb) - f(x0 - ea + eb) + f(x0 - ea - eb)
            ) / (4.0 * step ** 2)

    n = 2
    a_part = np.empty((n, n))
    b_part = np.empty((n, n))
    for j in range(n):
        for k in range(n):
            a_part[j, k] = 0.5 * (hess[j, k] + hess[n + j, n + k])
            b_part[j, k] = 0.5 * (hess[j, n + k] - hess[n + j, k])
    h = a_part + 1j * b_part
    return float(np.linalg.det(h).real)


def c2_blowup_probe(h, w):
    """[u(h, w) - 2 u(0, w) + u(-h, w)] / h^2 = 2 (1 + |w|^2) / h: the
    second difference across the hinge diverges as h -> 0."""
    if not h > 0.0:
        raise ValueError(f"step must be positive, got {h}")
    return (blocki_value(h, w) - 2.0 * blocki_value(0.0, w) + blocki_value(-h, w)) / h ** 2


def blocki_growth_probe(t):
    """u(t, t)/t^3 = (1 + t^2)/t^2 -> 1: cubic growth along z = w."""
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t}")
    return float(blocki_value(t, t)) / t ** 3
