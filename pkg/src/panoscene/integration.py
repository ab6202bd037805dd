"""Closed-form fusion of coarse layout depth with affine-ambiguous view estimates.

The objective over the fused depth ``x`` and per-view affine pairs
``s_n = (scale, offset)`` is::

    L(x, s) = sum_p phi0 (x - d0)^2 + sum_n sum_p phi_n (x - scale_n est_n - offset_n)^2

with nonnegative per-pixel weights.  Setting the gradient in ``x`` to zero
gives ``x`` as a per-pixel weighted mean; substituting back leaves a
2N x 2N block system in the affine pairs, assembled per pixel so that zero
weights need no inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .geometry import CameraSpec, ErpGrid, perspective_to_erp

# ----------------------------------------------------------------- types


class IntegrationError(ValueError):
    pass


class AnchoringError(IntegrationError):
    """No pixel ties the affine coefficients to the coarse depth."""


class SingularSystemError(IntegrationError):
    def __init__(self, view: int, message: str):
        super().__init__(message)
        self.view = view


@dataclass(frozen=True)
class IntegrationConfig:
    eta_low: float = 0.0
    eta_high: float = 2.0
    alpha: float = 1e-3
    epsilon: float = 1e-8
    ridge: float = 1e-10

    def __post_init__(self):
        if not 0 <= self.eta_low <= self.eta_high:
            raise ValueError("need 0 <= eta_low <= eta_high")
        if self.alpha <= 0 or self.epsilon <= 0:
            raise ValueError("alpha and epsilon must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")

    @classmethod
    def from_dict(cls, doc: dict) -> "IntegrationConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in doc.items()})


class AffineCoeff(NamedTuple):
    scale: float
    offset: float


@dataclass
class ViewEstimate:
    """One view's depth estimate in ERP layout and its per-pixel weight."""

    estimate: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        self.estimate = np.asarray(self.estimate, dtype=np.float64)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        if self.estimate.shape != self.weight.shape:
            raise ValueError("estimate and weight shapes differ")
        if np.any(self.weight < 0) or np.any(np.isnan(self.weight)):
            raise ValueError("weights must be nonnegative")
        if np.any((self.weight > 0) & ~np.isfinite(self.estimate)):
            raise ValueError("estimate must be finite wherever its weight is positive")


@dataclass
class NormalSystem:
    """Block normal equations ``matrix @ [s_1; ...; s_N] = rhs``.

    ``matrix[2k:2k+2, 2k:2k+2]`` is D_k, ``matrix[2k:2k+2, 2l:2l+2]`` is U_{k,l}.
    """

    matrix: np.ndarray
    rhs: np.ndarray

    @property
    def n_views(self) -> int:
        return self.rhs.size // 2

    def diagonal_block(self, k: int) -> np.ndarray:
        return self.matrix[2 * k : 2 * k + 2, 2 * k : 2 * k + 2]

    def off_block(self, k: int, l: int) -> np.ndarray:
        return self.matrix[2 * k : 2 * k + 2, 2 * l : 2 * l + 2]

    def rhs_block(self, k: int) -> np.ndarray:
        return self.rhs[2 * k : 2 * k + 2]


# ----------------------------------------------------------------- weights


def tangent_weight_map(height: int, width: int) -> np.ndarray:
    """Separable parabolic weight, 1 at the center row/column and 0 at index 0."""
    if height < 2 or width < 2:
        raise ValueError("tangent image must be at least 2x2")
    return _weight_lattice(height, width)[:height, :width]


def _weight_lattice(height: int, width: int) -> np.ndarray:
    # (H+1) x (W+1) samples at edge coordinates 0..H, 0..W; last row/col is 0
    i = np.arange(height + 1, dtype=np.float64)
    j = np.arange(width + 1, dtype=np.float64)
    wi = 1.0 - (2.0 * i / height - 1.0) ** 2
    wj = 1.0 - (2.0 * j / width - 1.0) ** 2
    return wi[:, None] * wj[None, :]


def erp_view_weight(cam: CameraSpec, grid: ErpGrid) -> np.ndarray:
    """Tangent weight of one camera resampled onto the ERP grid (0 outside)."""
    dirs = grid.directions().reshape(-1, 3)
    x, y, inside = cam.project(dirs)
    lattice = _weight_lattice(cam.height, cam.width)[:, :, None]
    out = np.zeros(dirs.shape[0])
    if inside.any():
        out[inside] = kernels.sample_bilinear(lattice, y[inside], x[inside], False)[:, 0]
    return np.clip(out, 0.0, 1.0).reshape(grid.shape)


def erp_view_weights(rig: Sequence[CameraSpec], grid: ErpGrid) -> list[np.ndarray]:
    return [erp_view_weight(cam, grid) for cam in rig]


def tangent_estimate_to_view(depth, cam: CameraSpec, grid: ErpGrid) -> ViewEstimate:
    """Reproject a tangent-image depth estimate to ERP and attach its weight."""
    est, mask = perspective_to_erp(depth, cam, grid)
    weight = erp_view_weight(cam, grid) * (mask > 0)
    return ViewEstimate(np.where(weight > 0, est, 0.0), weight)


def coarse_weight_floorplan(partial_mask, semantic_channels, cfg: IntegrationConfig) -> np.ndarray:
    """Low weight where the partial image or any object is specified, high elsewhere."""
    partial_mask = np.asarray(partial_mask)
    sem = np.asarray(semantic_channels)
    if sem.ndim == 2:
        sem = sem[:, :, None]
    if sem.shape[:2] != partial_mask.shape:
        raise ValueError(f"mask {partial_mask.shape} and semantic map {sem.shape[:2]} differ")
    covered = partial_mask > 0
    if sem.shape[2]:
        covered |= np.any(sem > 0, axis=2)
    return np.where(covered, cfg.eta_low, cfg.eta_high).astype(np.float64)


def coarse_weight_terrain(d0, cfg: IntegrationConfig) -> np.ndarray:
    """Inverse-square weight on depth normalized by its finite maximum; 0 at +inf."""
    d0 = np.asarray(d0, dtype=np.float64)
    finite = np.isfinite(d0)
    if not finite.any():
        raise AnchoringError("coarse depth is infinite everywhere")
    scale = d0[finite].max()
    if scale <= 0:
        raise ValueError("coarse depth must be positive")
    norm = np.where(finite, d0 / scale, 0.0)
    return np.where(finite, cfg.alpha / (norm**2 + cfg.epsilon), 0.0)


# ----------------------------------------------------------------- objective


def _stack(views: Sequence[ViewEstimate], shape) -> tuple[np.ndarray, np.ndarray]:
    if not views:
        return np.zeros((0, int(np.prod(shape)))), np.zeros((0, int(np.prod(shape))))
    for n, v in enumerate(views):
        if v.estimate.shape != tuple(shape):
            raise ValueError(f"view {n + 1} has shape {v.estimate.shape}, expected {tuple(shape)}")
    phi = np.stack([v.weight.ravel() for v in views])
    est = np.stack([np.where(v.weight > 0, v.estimate, 0.0).ravel() for v in views])
    return est, phi


def _check_anchor_inputs(d0, phi0):
    d0 = np.asarray(d0, dtype=np.float64)
    phi0 = np.asarray(phi0, dtype=np.float64)
    if d0.shape != phi0.shape:
        raise ValueError(f"coarse depth {d0.shape} and weight {phi0.shape} differ")
    if np.any(phi0 < 0) or np.any(np.isnan(phi0)):
        raise ValueError("coarse weights must be nonnegative")
    if np.any((phi0 > 0) & ~np.isfinite(d0)):
        raise IntegrationError("positive coarse weight on a non-finite coarse depth")
    return d0, phi0


def depth_loss(x, d0, phi0, views: Sequence[ViewEstimate], coeffs: Sequence[AffineCoeff]) -> float:
    """Weighted squared error of ``x`` against the coarse depth and mapped estimates."""
    d0, phi0 = _check_anchor_inputs(d0, phi0)
    x = np.asarray(x, dtype=np.float64)
    if x.shape != d0.shape:
        raise ValueError("x and d0 shapes differ")
    if len(coeffs) != len(views):
        raise ValueError(f"{len(coeffs)} coefficient pairs for {len(views)} views")
    total_weight = phi0.copy()
    for v in views:
        total_weight = total_weight + v.weight
    if np.any((total_weight > 0) & ~np.isfinite(x)):
        raise IntegrationError("positive weight on a non-finite fused depth")

    used = phi0 > 0
    loss = float(np.sum(phi0[used] * (x[used] - d0[used]) ** 2))
    for v, (a, b) in zip(views, coeffs):
        used = v.weight > 0
        r = x[used] - (a * v.estimate[used] + b)
        loss += float(np.sum(v.weight[used] * r * r))
    return loss


# ----------------------------------------------------------------- closed form


def assemble_normal_system(d0, phi0, views: Sequence[ViewEstimate]) -> NormalSystem:
    d0, phi0 = _check_anchor_inputs(d0, phi0)
    if not views:
        raise IntegrationError("at least one view estimate is required")
    est, phi = _stack(views, d0.shape)
    if not np.any(phi0 > 0):
        raise AnchoringError("coarse weight is zero everywhere; affine coefficients are unanchored")
    if not np.any(phi > 0):
        raise AnchoringError("all view weights are zero")
    p0 = phi0.ravel()
    base = np.where(p0 > 0, d0.ravel(), 0.0)
    mat, rhs = kernels.accumulate_normal(base, p0, est, phi)
    return NormalSystem(np.asarray(mat), np.asarray(rhs))


PIVOT_TOLERANCE = 1e-13


def gauss_solve(matrix, rhs, pivot_tol: float = PIVOT_TOLERANCE) -> np.ndarray:
    """Dense Gaussian elimination with partial pivoting.

    Raises ``ZeroDivisionError`` carrying the failing column index when a
    pivot falls below ``pivot_tol`` times the largest diagonal magnitude.
    """
    a = np.array(matrix, dtype=np.float64)
    b = np.array(rhs, dtype=np.float64)
    n = b.size
    scale = float(np.max(np.abs(np.diag(a)))) if n else 0.0
    if scale == 0:
        scale = 1.0
    perm = np.arange(n)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[piv, col]) <= pivot_tol * scale:
            raise ZeroDivisionError(int(perm[col]))
        if piv != col:
            a[[col, piv]] = a[[piv, col]]
            b[[col, piv]] = b[[piv, col]]
            perm[[col, piv]] = perm[[piv, col]]
        factors = a[col + 1 :, col] / a[col, col]
        a[col + 1 :, col:] -= factors[:, None] * a[col, col:]
        b[col + 1 :] -= factors * b[col]
    x = np.empty(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1 :] @ x[row + 1 :]) / a[row, row]
    return x


def solve_affine_coeffs(system: NormalSystem, ridge: float = IntegrationConfig.ridge) -> list[AffineCoeff]:
    mat = system.matrix.copy()
    n = mat.shape[0]
    if ridge > 0:
        mat[np.diag_indices(n)] += ridge * float(np.mean(np.diag(mat)))
    # a view with no support has an all-zero block; report it by name
    for k in range(system.n_views):
        if not np.any(system.diagonal_block(k)) and ridge == 0:
            raise SingularSystemError(k + 1, f"view {k + 1} has no weight; system is singular")
    try:
        sol = gauss_solve(mat, system.rhs)
    except ZeroDivisionError as exc:
        view = int(exc.args[0]) // 2 + 1
        raise SingularSystemError(
            view, f"normal system is singular at view {view} (constant or unsupported estimate?)"
        ) from None
    if not np.all(np.isfinite(sol)):
        raise SingularSystemError(0, "solution is not finite")
    return [AffineCoeff(float(sol[2 * k]), float(sol[2 * k + 1])) for k in range(system.n_views)]


def fuse_depth(d0, phi0, views: Sequence[ViewEstimate], coeffs: Sequence[AffineCoeff]) -> np.ndarray:
    """Per-pixel weighted mean of the coarse depth and the mapped estimates."""
    d0, phi0 = _check_anchor_inputs(d0, phi0)
    num = np.where(phi0 > 0, phi0 * np.where(np.isfinite(d0), d0, 0.0), 0.0)
    den = phi0.copy()
    for v, (a, b) in zip(views, coeffs):
        used = v.weight > 0
        mapped = np.where(used, a * np.where(used, v.estimate, 0.0) + b, 0.0)
        num = num + v.weight * mapped
        den = den + v.weight
    out = np.full(d0.shape, np.inf)
    live = den > 0
    out[live] = num[live] / den[live]
    return out


@dataclass
class IntegrationResult:
    depth: np.ndarray
    coeffs: list[AffineCoeff]
    loss: float
    history: list[float] = field(default_factory=list, repr=False)

    def __iter__(self):
        return iter((self.depth, self.coeffs, self.loss))


def integrate(d0, phi0, views: Sequence[ViewEstimate], cfg: IntegrationConfig | None = None) -> IntegrationResult:
    cfg = cfg or IntegrationConfig()
    system = assemble_normal_system(d0, phi0, views)
    coeffs = solve_affine_coeffs(system, cfg.ridge)
    x = fuse_depth(d0, phi0, views, coeffs)
    return IntegrationResult(x, coeffs, depth_loss(x, d0, phi0, views, coeffs))


# ----------------------------------------------------------------- oracle


def _fit_affine(x, est, w) -> AffineCoeff:
    """Weighted least squares ``x ~ a * est + b`` (2x2 normal equations)."""
    sw = w.sum()
    if sw <= 0:
        return AffineCoeff(1.0, 0.0)
    me = np.dot(w, est) / sw
    mx = np.dot(w, x) / sw
    ce = est - me
    var = np.dot(w, ce * ce)
    if var <= 1e-300:
        return AffineCoeff(0.0, mx)
    a = np.dot(w, ce * (x - mx)) / var
    return AffineCoeff(float(a), float(mx - a * me))


def oracle_integrate(
    d0, phi0, views: Sequence[ViewEstimate], iters: int = 200_000, tol: float = 1e-16
) -> IntegrationResult:
    """Alternating minimization of the same objective (test oracle).

    Alternates the per-pixel weighted mean for ``x`` with an independent
    2x2 weighted least-squares fit per view, stopping when the relative loss
    decrease falls below ``tol``.
    """
    d0, phi0 = _check_anchor_inputs(d0, phi0)
    coeffs = [AffineCoeff(1.0, 0.0) for _ in views]
    fits = []
    for v in views:
        used = v.weight > 0
        fits.append((used, v.estimate[used], v.weight[used]))
    anchor = np.where(phi0 > 0, d0, 0.0)
    # start each view from its own fit to the coarse depth where both are weighted
    for n, (used, est, w) in enumerate(fits):
        ww = w * (phi0[used] > 0)
        if ww.sum() > 0:
            coeffs[n] = _fit_affine(anchor[used], est, ww)

    loss = math.inf
    history = []
    x = fuse_depth(d0, phi0, views, coeffs)
    for _ in range(iters):
        x = fuse_depth(d0, phi0, views, coeffs)
        new = [_fit_affine(x[used], est, w) for used, est, w in fits]
        coeffs = new
        current = depth_loss(x, d0, phi0, views, coeffs)
        history.append(current)
        if loss - current <= tol * max(current, 1e-300) and math.isfinite(loss):
            loss = current
            break
        loss = current
    x = fuse_depth(d0, phi0, views, coeffs)
    return IntegrationResult(x, coeffs, depth_loss(x, d0, phi0, views, coeffs), history)
