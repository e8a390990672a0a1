"""The scalar operator F on symmetric 2n x 2n matrices.

F(M) = det^{1/2}((M + J^T M J)/2 + I) - 1 when M + J^T M J >= -I, and -1
otherwise.  The branch condition is deliberately the literal one: the
determinant itself would stay nonnegative down to M + J^T M J >= -2I, but
matrices in that gap still evaluate to -1, and no continuity across the
branch boundary is claimed.  On the regular branch every eigenvalue of
(M + J^T M J)/2 + I is >= 1/2, so the square root of the determinant is
computed stably as the product of square roots of eigenvalues.

Also holds sampled estimates of the structure constants of the family
F_delta(M) = F(M + P) - F(M) over ||M|| <= delta, P >= 0: the ratio bounds
theta, theta^{-1} against ||P|| and the second-derivative bound K.
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass

import numpy as np

from .linalg import (
    PSD_TOL,
    SymMatrix,
    complex_structure_matrix,
    j_project,
)

# Margin on the smallest eigenvalue of M + J^T M J, relative to the branch
# cut at -1, inside which grad_F refuses to differentiate.
GRADIENT_MARGIN = 1e-6


class DegenerateBranch(ValueError):
    pass


class PNotPSD(ValueError):
    pass


class InvalidDelta(ValueError):
    pass


@dataclass(frozen=True)
class OperatorValue:
    """Value of F together with the branch that produced it."""

    value: float
    branch: str  # "regular" or "degenerate"

    def __post_init__(self):
        if self.branch not in ("regular", "degenerate"):
            raise ValueError(f"unknown branch {self.branch!r}")
        if self.branch == "degenerate" and self.value != -1.0:
            raise ValueError("degenerate branch must carry the value -1")
        if self.branch == "regular" and not self.value > -1.0:
            raise ValueError("regular branch values exceed -1")


@dataclass(frozen=True)
class FamilyConstants:
    """Sampled structure constants of the increment family at radius delta.

    k_hat is 0.0 until a curvature sweep fills it in (certify does both)."""

    delta: float
    theta_hat: float
    theta_inv_hat: float
    k_hat: float
    sample_count: int
    master_seed: int

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0 / 3.0:
            raise InvalidDelta(f"delta must lie in (0, 1/3), got {self.delta}")
        if not 0.0 < self.theta_hat <= self.theta_inv_hat:
            raise ValueError(
                f"need 0 < theta_hat <= theta_inv_hat, got "
                f"{self.theta_hat}, {self.theta_inv_hat}"
            )
        if not self.k_hat >= 0.0:
            raise ValueError(f"k_hat must be nonnegative, got {self.k_hat}")


def _projected_shift_eigs(m: SymMatrix):
    """Eigenvalues of M + J^T M J (each doubled by J-invariance)."""
    if m.dim % 2 != 0:
        raise ValueError(f"dim must be even, got {m.dim}")
    j = complex_structure_matrix(m.dim // 2)
    arr = m.array
    t = arr + j.T @ arr @ j
    return np.linalg.eigvalsh(0.5 * (t + t.T))


def eval_F(m: SymMatrix) -> OperatorValue:
    """Evaluate F at a symmetric matrix, reporting the branch taken.

    The branch test tolerates eigenvalues of M + J^T M J down to
    -1 - PSD_TOL * max(1, spectral scale).
    """
    eigs = _projected_shift_eigs(m)
    scale = float(np.max(np.abs(eigs)))
    if eigs[0] < -1.0 - PSD_TOL * max(1.0, scale):
        return OperatorValue(-1.0, "degenerate")
    shifted = 0.5 * eigs + 1.0
    value = float(np.exp(0.5 * np.sum(np.log(shifted)))) - 1.0
    return OperatorValue(value, "regular")


def eval_F_batch(ms):
    """Vectorized eval_F over a stack of symmetric matrices (..., 2n, 2n).

    Returns plain values with -1 on the degenerate branch; used by the
    sampling sweeps where the branch label is not needed.
    """
    ms = np.asarray(ms, dtype=float)
    n = ms.shape[-1] // 2
    j = complex_structure_matrix(n)
    t = ms + j.T @ ms @ j
    t = 0.5 * (t + np.swapaxes(t, -1, -2))
    eigs = np.linalg.eigvalsh(t)
    scale = np.maximum(1.0, np.max(np.abs(eigs), axis=-1))
    degenerate = eigs[..., 0] < -1.0 - PSD_TOL * scale
    shifted = np.maximum(0.5 * eigs + 1.0, PSD_TOL)
    values = np.exp(0.5 * np.sum(np.log(shifted), axis=-1)) - 1.0
    return np.where(degenerate, -1.0, values)


def grad_F(m: SymMatrix) -> SymMatrix:
    """Gradient of F at a regular point, as the symmetric matrix G with
    dF(M)[V] = <G, V>.

    G = (1/2) det^{1/2}(N) * N^{-1} projected back onto the J-invariant
    subspace, where N = (M + J^T M J)/2 + I.  Raises DegenerateBranch when
    the smallest eigenvalue of M + J^T M J comes within GRADIENT_MARGIN of
    the branch cut at -1.
    """
    if m.dim % 2 != 0:
        raise ValueError(f"dim must be even, got {m.dim}")
    j = complex_structure_matrix(m.dim // 2)
    arr = m.array
    t = arr + j.T @ arr @ j
    t = 0.5 * (t + t.T)
    w, v = np.linalg.eigh(t)
    if w[0] <= -1.0 + GRADIENT_MARGIN:
        raise DegenerateBranch(
            f"smallest eigenvalue {w[0]:.6e} of M + J^T M J is within "
            f"{GRADIENT_MARGIN:g} of the branch cut at -1"
        )
    shifted = 0.5 * w + 1.0
    det_half = np.exp(0.5 * np.sum(np.log(shifted)))
    inv = (v / shifted) @ v.T
    g = 0.5 * det_half * inv
    return j_project(SymMatrix(0.5 * (g + g.T)))


def check_H1(m: SymMatrix, p: SymMatrix, tol=1e-12) -> bool:
    """Monotonicity probe: F(M + P) >= F(M) - tol for PSD P.

    Raises PNotPSD when P has an eigenvalue below the PSD tolerance.
    """
    eigs = p.eigenvalues()
    scale = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    if eigs.size and eigs[0] < -PSD_TOL * max(1.0, scale):
        raise PNotPSD(f"P has eigenvalue {eigs[0]:.3e} below PSD tolerance")
    return eval_F(m + p).value >= eval_F(m).value - tol


def pluriharmonic_hessian(a, b) -> SymMatrix:
    """Symmetric matrix [[A, B], [B, -A]] (A, B symmetric n x n) lying in
    the kernel of the J-invariant projection; F(M + Q) = F(M) for such Q."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n = a.shape[0]
    if a.shape != (n, n) or b.shape != (n, n):
        raise ValueError(f"blocks must be square and matching, got {a.shape}, {b.shape}")
    a = 0.5 * (a + a.T)
    b = 0.5 * (b + b.T)
    out = np.empty((2 * n, 2 * n))
    out[:n, :n] = a
    out[:n, n:] = b
    out[n:, :n] = b
    out[n:, n:] = -a
    return SymMatrix(out)


def _random_symmetric_ball(rng, dim, radius, count):
    """Stack of symmetric matrices with spectral norm <= radius, radius
    attained in distribution (uniform scaling of normalized Gaussians)."""
    g = rng.standard_normal((count, dim, dim))
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    norms = np.max(np.abs(np.linalg.eigvalsh(g)), axis=-1)
    norms = np.maximum(norms, 1e-300)
    scales = radius * rng.uniform(0.0, 1.0, size=count)
    return g * (scales / norms)[:, None, None]


def _random_psd_ball(rng, dim, radius, count):
    """Stack of PSD matrices with spectral norm <= radius (Wishart shape,
    rescaled by a uniform radius fraction)."""
    g = rng.standard_normal((count, dim, dim))
    psd = g @ np.swapaxes(g, -1, -2)
    norms = np.max(np.linalg.eigvalsh(psd), axis=-1)
    norms = np.maximum(norms, 1e-300)
    scales = radius * rng.uniform(0.0, 1.0, size=count)
    return psd * (scales / norms)[:, None, None]


def _axis_rank_one(dim):
    """The rank-one directions e_i e_i^T, stacked."""
    out = np.zeros((dim, dim, dim))
    for i in range(dim):
        out[i, i, i] = 1.0
    return out


def _check_sampling_args(delta, samples):
    if not 0.0 < delta < 1.0 / 3.0:
        raise InvalidDelta(f"delta must lie in (0, 1/3), got {delta}")
    if samples < 1:
        raise ValueError(f"samples must be positive, got {samples}")


def estimate_theta(delta, samples, n=2, seed=0) -> FamilyConstants:
    """Sampled bounds on the ratio (F(M+P) - F(M)) / ||P||.

    Sweeps ||M|| <= delta against one random PSD bump per sample plus the
    deterministic axis directions delta * e_i e_i^T.  Returns constants
    with theta_hat = min ratio, theta_inv_hat = max ratio and k_hat left
    at 0 (only certify runs the curvature sweep).
    """
    _check_sampling_args(delta, samples)
    dim = 2 * n
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    ms = _random_symmetric_ball(rng, dim, delta, samples)
    ps = _random_psd_ball(rng, dim, delta, samples)
    anchors = delta * _axis_rank_one(dim)

    base = eval_F_batch(ms)
    lo = np.inf
    hi = -np.inf
    p_norm = np.max(np.linalg.eigvalsh(ps), axis=-1)
    keep = p_norm > 1e-12
    if np.any(keep):
        ratios = (eval_F_batch(ms[keep] + ps[keep]) - base[keep]) / p_norm[keep]
        lo = min(lo, float(ratios.min()))
        hi = max(hi, float(ratios.max()))
    for k in range(dim):
        ratios = (eval_F_batch(ms + anchors[k]) - base) / delta
        lo = min(lo, float(ratios.min()))
        hi = max(hi, float(ratios.max()))
    return FamilyConstants(
        delta=delta,
        theta_hat=lo,
        theta_inv_hat=hi,
        k_hat=0.0,
        sample_count=samples,
        master_seed=seed,
    )


def estimate_K(delta, samples, n=2, seed=0, step=1e-3):
    """Sampled bound on |D^2 F(M)[V, W]| over ||M|| <= delta and spectral-
    unit symmetric directions V, W, by central second difference quotients.

    The sweep always includes the anchors M = 0 with V = W = I and
    V = W = e_i e_i^T, so the estimate cannot drift below the identity
    direction value n(n-1) under reseeding.
    """
    _check_sampling_args(delta, samples)
    dim = 2 * n
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    ms = _random_symmetric_ball(rng, dim, delta, samples)
    vs = _random_symmetric_ball(rng, dim, 1.0, samples)
    ws = _random_symmetric_ball(rng, dim, 1.0, samples)
    # unit spectral norm directions (discard the uniform radius fraction)
    for stack in (vs, ws):
        norms = np.max(np.abs(np.linalg.eigvalsh(stack)), axis=-1)
        stack /= np.maximum(norms, 1e-300)[:, None, None]

    t = step
    quot = (
        eval_F_batch(ms + t * (vs + ws))
        - eval_F_batch(ms + t * (vs - ws))
        - eval_F_batch(ms - t * (vs - ws))
        + eval_F_batch(ms - t * (vs + ws))
    ) / (4.0 * t * t)
    best = float(np.max(np.abs(quot)))

    zero = np.zeros((dim, dim))
    anchors = np.concatenate([np.eye(dim)[None], _axis_rank_one(dim)])
    for v in anchors:
        second = (
            eval_F_batch(zero + 2.0 * t * v)
            - 2.0 * eval_F_batch(zero)
            + eval_F_batch(zero - 2.0 * t * v)
        ) / (4.0 * t * t)
        best = max(best, abs(float(second)))
    return best


def certify(delta, samples, n=2, seed=0, step=1e-3) -> FamilyConstants:
    """Run both sampling sweeps and package the constants."""
    constants = estimate_theta(delta, samples, n=n, seed=seed)
    k_hat = estimate_K(delta, samples, n=n, seed=seed, step=step)
    return dataclasses.replace(constants, k_hat=k_hat)


def write_certification_csv(constants, path):
    """One row per FamilyConstants, 17 significant digits."""
    rows = constants if isinstance(constants, (list, tuple)) else [constants]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["delta", "theta_hat", "theta_inv_hat", "K_hat", "samples", "master_seed"]
        )
        for c in rows:
            writer.writerow(
                [
                    f"{c.delta:.17g}",
                    f"{c.theta_hat:.17g}",
                    f"{c.theta_inv_hat:.17g}",
                    f"{c.k_hat:.17g}",
                    str(c.sample_count),
                    str(c.master_seed),
                ]
            )
