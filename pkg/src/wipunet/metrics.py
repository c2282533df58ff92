"""PSNR and SSIM as used for the result tables, plus dataset-level evaluation.

Both metrics are computed in float64 regardless of input dtype. PSNR is
capped at 99 dB so zero-error pairs stay finite in CSVs. SSIM uses an 11x11
Gaussian window (std 1.5) over valid positions only (no padding), averaged
over channels; a uniform window mode exists for cross-checking against naive
per-window implementations, and windows larger than the image fall back to
the largest odd size that fits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_noise import ImageSet, add_awgn
from .engine import ShapeError, Tensor
from .layers import make_sigma_channel
from .rng import Rng

PSNR_CAP = 99.0


@dataclass
class MetricRow:
    """Aggregated scores for one (model, sigma) cell of a results table."""

    model: str
    sigma: float
    psnr_db: float
    ssim: float
    n_images: int


def _as_array(x) -> np.ndarray:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return data.astype(np.float64)


def psnr(a, b, data_range: float = 1.0, clamp: bool = True) -> float:
    """10*log10(data_range^2 / MSE), capped at 99 dB.

    clamp=True (the table protocol) clips both inputs to [0, data_range]
    first; clamp=False measures raw signals, which is what calibration
    against the analytic noisy-input baseline needs.
    """
    av, bv = _as_array(a), _as_array(b)
    if av.shape != bv.shape:
        raise ShapeError(f"psnr needs matching shapes, got {av.shape} and {bv.shape}")
    if clamp:
        av = np.clip(av, 0.0, data_range)
        bv = np.clip(bv, 0.0, data_range)
    mse = float(np.mean((av - bv) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(10.0 * np.log10(data_range * data_range / mse), PSNR_CAP)


def _window_1d(size: int, kind: str, sigma: float) -> np.ndarray:
    if kind == "uniform":
        return np.full(size, 1.0 / size)
    if kind == "gaussian":
        half = (size - 1) / 2.0
        g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma * sigma))
        return g / g.sum()
    raise ValueError(f"unknown ssim window {kind!r}")


def _filter_valid(x: np.ndarray, k1d: np.ndarray) -> np.ndarray:
    """Separable valid-mode filtering of the spatial axes of (n,c,h,w)."""
    v = np.lib.stride_tricks.sliding_window_view(x, len(k1d), axis=2)
    x = v @ k1d
    v = np.lib.stride_tricks.sliding_window_view(x, len(k1d), axis=3)
    return v @ k1d


def ssim(
    a,
    b,
    data_range: float = 1.0,
    window: str = "gaussian",
    window_size: int = 11,
    window_sigma: float = 1.5,
) -> float:
    """Mean SSIM over channels and valid window positions."""
    av, bv = _as_array(a), _as_array(b)
    if av.shape != bv.shape:
        raise ShapeError(f"ssim needs matching shapes, got {av.shape} and {bv.shape}")
    h, w = av.shape[2], av.shape[3]
    size = min(window_size, h, w)
    if size % 2 == 0:
        size -= 1
    k1d = _window_1d(size, window, window_sigma)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a = _filter_valid(av, k1d)
    mu_b = _filter_valid(bv, k1d)
    ea2 = _filter_valid(av * av, k1d)
    eb2 = _filter_valid(bv * bv, k1d)
    eab = _filter_valid(av * bv, k1d)
    va = ea2 - mu_a * mu_a
    vb = eb2 - mu_b * mu_b
    cov = eab - mu_a * mu_b
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)
    )
    return float(score.mean())


def evaluate(
    model,
    image_set: ImageSet,
    sigma: float,
    rng: Rng,
    clamp_outputs: bool = True,
    max_images=None,
    batch_size: int = 64,
    model_name=None,
) -> MetricRow:
    """Corrupt each image from its own substream, denoise, and average metrics.

    Noise for image i comes from rng.split(i), so the score of an image does
    not depend on how many others are evaluated alongside it. Outputs are
    clamped to [0,1] before metrics unless clamp_outputs=False (calibration).
    """
    images = image_set.images if max_images is None else image_set.images[: int(max_images)]
    if not images:
        raise ValueError("evaluate needs at least one image")
    psnr_sum = 0.0
    ssim_sum = 0.0
    done = 0
    while done < len(images):
        # batch a run of same-shaped images for one forward pass
        shape = images[done].shape
        hi = done
        while hi < len(images) and hi - done < batch_size and images[hi].shape == shape:
            hi += 1
        batch = images[done:hi]
        pairs = [add_awgn(img, sigma, rng.split(done + off)) for off, img in enumerate(batch)]
        y = Tensor(np.concatenate([p.noisy.data for p in pairs]))
        smap = (
            make_sigma_channel(y.shape[0], y.shape[2], y.shape[3], sigma)
            if model.sigma_aware
            else None
        )
        s_hat = model(y, sigma_map=smap).s_hat.data
        if clamp_outputs:
            s_hat = np.clip(s_hat, 0.0, 1.0)
        for off, pair in enumerate(pairs):
            out = s_hat[off : off + 1]
            psnr_sum += psnr(out, pair.clean.data, clamp=False)
            ssim_sum += ssim(out, pair.clean.data)
        done = hi
    n = len(images)
    name = model_name if model_name is not None else getattr(model, "arch", model.spec.arch)
    return MetricRow(
        model=name,
        sigma=float(sigma),
        psnr_db=psnr_sum / n,
        ssim=ssim_sum / n,
        n_images=n,
    )
