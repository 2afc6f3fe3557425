"""Evaluation suite: SSIM, Gaussian Fréchet distance core, and re-detection
metrics (detection rate plus landmark/pose/blink errors) over generated faces.

The Fréchet embedder is pluggable; the built-in pixel-statistics embedder
(downsampled image, flattened) exercises the path without a pretrained
classifier.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

COV_SYMMETRY_TOL = 1e-8
EIG_CLIP_TOL = -1e-8


@dataclass
class DetectionResult:
    detected: bool
    landmarks: Optional[np.ndarray] = None
    pose: Optional[np.ndarray] = None
    blink: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.detected and any(v is not None for v in (self.landmarks, self.pose, self.blink)):
            raise ValueError("failed detections must not carry outputs")


DetectorInterface = Callable[[np.ndarray], DetectionResult]


@dataclass
class MetricsReport:
    n_samples: int
    dr: float
    ale: Optional[float] = None
    ape: Optional[float] = None
    abe: Optional[float] = None
    ssim: Optional[float] = None
    frechet: Optional[float] = None
    flags: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if not 0.0 <= self.dr <= 1.0:
            raise ValueError("dr must lie in [0, 1]")
        if self.ssim is not None and not -1.0 <= self.ssim <= 1.0 + 1e-12:
            raise ValueError("ssim out of range")
        if self.frechet is not None and self.frechet < 0.0:
            raise ValueError("frechet must be non-negative")

    def to_json_dict(self):
        def opt(v):
            return None if v is None else float(v)

        return {
            "n_samples": int(self.n_samples),
            "dr": float(self.dr),
            "ale": opt(self.ale),
            "ape": opt(self.ape),
            "abe": opt(self.abe),
            "ssim": opt(self.ssim),
            "frechet": opt(self.frechet),
            "flags": list(self.flags),
        }


def _gaussian_kernel(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def _filter_valid(img, kernel):
    size = kernel.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(img, (size, size))
    return np.tensordot(windows, kernel, axes=([2, 3], [0, 1]))


def _image_array(x):
    arr = np.asarray(getattr(x, "pixels", x), dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    return arr


def ssim(a, b, data_range=2.0):
    """Mean structural similarity over 11x11 Gaussian windows, per channel.

    ``data_range`` is the nominal dynamic range R; stabilizers are
    C1=(0.01R)^2 and C2=(0.03R)^2.
    """
    x, y = _image_array(a), _image_array(b)
    if x.shape != y.shape:
        raise ValueError(f"resolution mismatch {x.shape} vs {y.shape}")
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ValueError("image smaller than the SSIM window")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    kernel = _gaussian_kernel()
    values = []
    for ch in range(x.shape[2]):
        xa, yb = x[:, :, ch], y[:, :, ch]
        mu_x = _filter_valid(xa, kernel)
        mu_y = _filter_valid(yb, kernel)
        var_x = _filter_valid(xa * xa, kernel) - mu_x * mu_x
        var_y = _filter_valid(yb * yb, kernel) - mu_y * mu_y
        cov = _filter_valid(xa * yb, kernel) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


def _sym_sqrt(mat, name):
    vals, vecs = np.linalg.eigh(mat)
    if vals.min() < EIG_CLIP_TOL:
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {vals.min():.3e})")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _check_cov(cov, name):
    cov = np.asarray(cov, dtype=np.float64)
    scale = max(1.0, float(np.abs(cov).max()))
    if np.abs(cov - cov.T).max() > COV_SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return 0.5 * (cov + cov.T)


def frechet_distance(mu1, cov1, mu2, cov2):
    """Squared 2-Wasserstein distance between two Gaussians.

    ||mu1-mu2||^2 + tr(C1 + C2 - 2 (C1 C2)^{1/2}), with the cross term
    computed as tr sqrt(S1 C2 S1) for S1 = sqrt(C1) via symmetric
    eigendecomposition.
    """
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    c1 = _check_cov(cov1, "cov1")
    c2 = _check_cov(cov2, "cov2")
    s1 = _sym_sqrt(c1, "cov1")
    inner = _check_cov(s1 @ c2 @ s1, "cross term")
    vals = np.linalg.eigvalsh(inner)
    if vals.min() < EIG_CLIP_TOL * max(1.0, float(np.abs(vals).max())):
        raise ValueError("cross term is not positive semidefinite")
    tr_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    diff = mu1 - mu2
    return float(max(diff @ diff + np.trace(c1) + np.trace(c2) - 2.0 * tr_sqrt, 0.0))


def gaussian_stats(features):
    """Mean vector and covariance of row-stacked feature vectors."""
    features = np.asarray(features, dtype=np.float64)
    mu = features.mean(axis=0)
    cov = np.cov(features, rowvar=False)
    return mu, np.atleast_2d(cov)


def pixel_embedder(images, out_size=4):
    """Downsample each image to out_size^2 and flatten: a stand-in embedder
    that exercises the Fréchet path end to end."""
    from .data import resize_bilinear

    rows = [resize_bilinear(_image_array(img), out_size, out_size).reshape(-1) for img in images]
    return np.stack(rows)


def frechet_from_images(real_images, generated_images, embedder=pixel_embedder):
    mu_r, cov_r = gaussian_stats(embedder(real_images))
    mu_g, cov_g = gaussian_stats(embedder(generated_images))
    return frechet_distance(mu_r, cov_r, mu_g, cov_g)


def evaluate_generated(samples, detector, resolution):
    """Re-detect attributes on generated faces and score them.

    ``samples``: iterable of (generated face, gt landmarks, gt pose, gt blink).
    DR is the detected fraction; ALE is the mean absolute landmark deviation
    in pixels (normalized-coordinate L1 times the resolution); APE and ABE are
    mean absolute pose / blink component errors over detected samples.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("no samples to evaluate")
    det_lm, gt_lm, det_pose, gt_pose, det_blink, gt_blink = [], [], [], [], [], []
    detected = 0
    for face, lm, pose, blink in samples:
        result = detector(_image_array(face))
        if not result.detected:
            continue
        detected += 1
        det_lm.append(np.asarray(result.landmarks, dtype=np.float64))
        gt_lm.append(np.asarray(getattr(lm, "points", lm), dtype=np.float64))
        det_pose.append(np.asarray(result.pose, dtype=np.float64))
        gt_pose.append(np.asarray(getattr(pose, "as_array", lambda: pose)(), dtype=np.float64))
        det_blink.append(np.asarray(result.blink, dtype=np.float64))
        gt_blink.append(np.asarray(getattr(blink, "as_array", lambda: blink)(), dtype=np.float64))
    n = len(samples)
    if detected == 0:
        return MetricsReport(n_samples=n, dr=0.0, flags=["no_detections"])
    ale = float(np.mean(np.abs(np.stack(det_lm) - np.stack(gt_lm)))) * resolution
    ape = float(np.mean(np.abs(np.stack(det_pose) - np.stack(gt_pose))))
    abe = float(np.mean(np.abs(np.stack(det_blink) - np.stack(gt_blink))))
    return MetricsReport(n_samples=n, dr=detected / n, ale=ale, ape=ape, abe=abe)
