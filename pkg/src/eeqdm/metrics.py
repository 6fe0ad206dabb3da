"""MSE, global SSIM, PSNR and the Frechet distance between Gaussian fits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .encoding import ImageTensor
from .qsim import StructureError

PSNR_CAP_DB = 100.0
SQRTM_EPS = 1e-10


def _pair(a: ImageTensor, b: ImageTensor):
    if a.shape != b.shape:
        raise StructureError(f"shape mismatch {a.shape} vs {b.shape}")
    return a.pixels, b.pixels


def minmax(pixels: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; constant inputs are only clipped into range."""
    lo, hi = pixels.min(), pixels.max()
    if hi > lo:
        return (pixels - lo) / (hi - lo)
    return np.clip(pixels, 0.0, 1.0)


def mse(a: ImageTensor, b: ImageTensor) -> float:
    x, y = _pair(a, b)
    return float(np.mean((x - y) ** 2))


def ssim_global(a: ImageTensor, b: ImageTensor, rescale: bool = True, data_range: float = 1.0) -> float:
    """Single-window SSIM over whole-image statistics."""
    x, y = _pair(a, b)
    if rescale:
        x, y = minmax(x), minmax(y)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy, cov = np.mean(dx * dx), np.mean(dy * dy), np.mean(dx * dy)
    num = (2 * mx * my + c1) * (2 * cov + c2)
    den = (mx**2 + my**2 + c1) * (vx + vy + c2)
    return float(num / den)


def psnr(a: ImageTensor, b: ImageTensor, rescale: bool = True, max_value: float = 1.0) -> float:
    x, y = _pair(a, b)
    if rescale:
        x, y = minmax(x), minmax(y)
    err = float(np.mean((x - y) ** 2))
    if err == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 20.0 * np.log10(max_value / np.sqrt(err)))


@dataclass
class FeatureStats:
    mean: np.ndarray
    covariance: np.ndarray
    sample_count: int

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        d = self.mean.size
        if self.covariance.shape != (d, d):
            raise StructureError(f"covariance shape {self.covariance.shape} vs mean length {d}")
        if not np.all(np.isfinite(self.covariance)) or not np.all(np.isfinite(self.mean)):
            raise StructureError("non-finite feature statistics")
        if not np.allclose(self.covariance, self.covariance.T, rtol=0, atol=1e-12):
            raise StructureError("covariance is not symmetric")


def pixel_feature_stats(images: Sequence[ImageTensor]) -> FeatureStats:
    if len(images) < 2:
        raise StructureError("need at least two images for a covariance")
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise StructureError(f"images have mixed shapes {sorted(shapes)}")
    feats = np.stack([im.pixels for im in images])
    mu = feats.mean(axis=0)
    centered = feats - mu
    cov = centered.T @ centered / (len(images) - 1)
    return FeatureStats(mu, (cov + cov.T) / 2, len(images))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(real: FeatureStats, gen: FeatureStats) -> float:
    """||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^(1/2)).

    Tr (S_r S_g)^(1/2) is the sum of square roots of the eigenvalues of
    S_r^(1/2) S_g S_r^(1/2). Those roots are taken as the singular values of
    S_g^(1/2) S_r^(1/2), which avoids squaring the rounding error of
    near-zero eigenvalues.
    """
    if real.mean.shape != gen.mean.shape:
        raise StructureError(f"dimension mismatch {real.mean.size} vs {gen.mean.size}")
    if real.sample_count < 2 or gen.sample_count < 2:
        raise StructureError("each side needs at least two samples")
    d = real.mean.size
    # regularize both covariances everywhere they appear so identical inputs cancel exactly
    reg = SQRTM_EPS * np.eye(d)
    cov_r, cov_g = real.covariance + reg, gen.covariance + reg
    tr_cross = float(np.sum(np.linalg.svd(_psd_sqrt(cov_g) @ _psd_sqrt(cov_r), compute_uv=False)))
    diff = real.mean - gen.mean
    value = float(diff @ diff + np.trace(cov_r) + np.trace(cov_g) - 2.0 * tr_cross)
    return max(value, 0.0)


@dataclass
class MetricsReport:
    mse: float
    ssim: float
    psnr_db: float
    frechet: float
    per_class: Optional[dict] = None


def evaluate_pairs(generated: Sequence[ImageTensor], reference: Sequence[ImageTensor]) -> MetricsReport:
    """Mean MSE/SSIM/PSNR over aligned pairs plus the pixel Frechet distance of the two sets."""
    if len(generated) != len(reference) or not generated:
        raise StructureError("need equally many generated and reference images")
    m = float(np.mean([mse(g, r) for g, r in zip(generated, reference)]))
    s = float(np.mean([ssim_global(g, r) for g, r in zip(generated, reference)]))
    p = float(np.mean([psnr(g, r) for g, r in zip(generated, reference)]))
    fd = frechet_distance(pixel_feature_stats(reference), pixel_feature_stats(generated))
    return MetricsReport(m, s, p, fd)
