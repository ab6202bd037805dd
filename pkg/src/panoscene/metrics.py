"""Depth evaluation after per-image affine alignment, and masked PSNR."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

PSNR_PEAK = 255.0


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    absrel: float
    scale: float
    offset: float
    valid_pixels: int

    def to_dict(self) -> dict:
        return asdict(self)


def valid_pixels(est, gt) -> np.ndarray:
    """Pixels where both maps are finite."""
    return np.isfinite(np.asarray(est, dtype=np.float64)) & np.isfinite(np.asarray(gt, dtype=np.float64))


def align_affine(est, gt) -> tuple[float, float]:
    """Least-squares ``(scale, offset)`` minimizing ``sum (scale * est + offset - gt)^2``.

    A constant estimate gets ``scale = 1`` and an offset-only fit.
    """
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {gt.shape}")
    ok = valid_pixels(est, gt)
    if ok.sum() < 2:
        raise ValueError("affine alignment needs at least 2 finite pixels")
    e = est[ok]
    g = gt[ok]
    me = e.mean()
    mg = g.mean()
    ce = e - me
    var = float(np.dot(ce, ce))
    if var <= 1e-24 * max(1.0, float(np.dot(e, e))):
        return 1.0, float(mg - me)
    scale = float(np.dot(ce, g - mg) / var)
    return scale, float(mg - scale * me)


def _paired(est, gt):
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {gt.shape}")
    ok = valid_pixels(est, gt)
    if not ok.any():
        raise ValueError("no valid pixels")
    return est[ok], gt[ok]


def absrel(est, gt) -> float:
    e, g = _paired(est, gt)
    if np.any(g <= 0):
        raise ValueError("ground-truth depth must be positive on valid pixels")
    return float(np.mean(np.abs(e - g) / g))


def rmse(est, gt) -> float:
    e, g = _paired(est, gt)
    return float(np.sqrt(np.mean((e - g) ** 2)))


def evaluate(est, gt) -> EvalReport:
    """Align ``est`` to ``gt`` affinely, then score RMSE and AbsRel."""
    scale, offset = align_affine(est, gt)
    est = np.asarray(est, dtype=np.float64)
    aligned = scale * est + offset
    return EvalReport(
        rmse=rmse(aligned, gt),
        absrel=absrel(aligned, gt),
        scale=scale,
        offset=offset,
        valid_pixels=int(valid_pixels(est, gt).sum()),
    )


def psnr(a, b, mask=None) -> float:
    """PSNR in dB of two 8-bit images, optionally restricted to ``mask``.

    Identical inputs give ``inf``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    if mask is not None:
        mask = np.asarray(mask).astype(bool)
        if mask.shape != a.shape[:2]:
            raise ValueError("mask must match the image height and width")
        if not mask.any():
            raise ValueError("mask selects no pixels")
        diff = diff[mask]
    mse = float(np.mean(diff * diff))
    return psnr_from_mse(mse)


def psnr_from_mse(mse: float) -> float:
    if mse < 0:
        raise ValueError("MSE must be nonnegative")
    if mse == 0:
        return math.inf
    return 20 * math.log10(PSNR_PEAK) - 10 * math.log10(mse)
