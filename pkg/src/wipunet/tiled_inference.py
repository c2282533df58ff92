"""Full-image denoising from overlapping tiles.

Images of any size are reflection-padded so both dims reach the tile size,
covered by stride-stepped tile windows (the last row/column clamps to the
boundary), denoised tile by tile, and blended back with a floored Hann
weight so overlapping predictions fade into each other instead of leaving
stitch seams. Accumulation runs in float64 and is normalized by the
accumulated weight, so regions covered once reproduce the tile output
exactly.
"""

from dataclasses import dataclass

import numpy as np

from .engine import ShapeError, Tensor, pad_reflect
from .layers import make_sigma_channel


@dataclass(frozen=True)
class TilePlan:
    tile: int
    stride: int
    windows: list  # (top, left) origins on the padded canvas
    pad: tuple  # (top, bottom, left, right)
    weight: Tensor  # (1,1,tile,tile) blend map


def blend_window(tile: int) -> Tensor:
    """Separable Hann window, floored at 1e-3 so tile borders keep a say.

    The 1d window is symmetrized before flooring so the map equals its own
    mirror bit for bit.
    """
    w1 = np.hanning(tile)
    w1 = 0.5 * (w1 + w1[::-1])
    w1 = np.maximum(w1, 1e-3)
    return Tensor(np.outer(w1, w1).astype(np.float32).reshape(1, 1, tile, tile))


def _axis_origins(length: int, tile: int, stride: int) -> list:
    origins = list(range(0, length - tile + 1, stride))
    if origins[-1] != length - tile:
        origins.append(length - tile)
    return origins


def plan_tiles(h: int, w: int, tile: int = 128, stride: int = 64) -> TilePlan:
    """Choose window origins and padding for an h-by-w image."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if tile < stride:
        raise ValueError(f"tile ({tile}) must be >= stride ({stride})")
    hp, wp = max(h, tile), max(w, tile)
    pad = (0, hp - h, 0, wp - w)
    windows = [(top, left)
               for top in _axis_origins(hp, tile, stride)
               for left in _axis_origins(wp, tile, stride)]
    return TilePlan(tile=tile, stride=stride, windows=windows, pad=pad,
                    weight=blend_window(tile))


def denoise_full(model, image: Tensor, sigma: float, tile: int = 128,
                 stride: int = 64) -> Tensor:
    """Denoise one (1,3,H,W) image of arbitrary size; output clamped to [0,1]."""
    if image.shape[0] != 1 or image.shape[1] != 3:
        raise ShapeError(f"denoise_full expects one (1,3,H,W) image, got {image.shape}")
    divisor = getattr(model, "divisor", 1)
    if tile % divisor:
        raise ValueError(f"tile {tile} is not divisible by the model's factor {divisor}")
    n, c, h, w = image.shape
    plan = plan_tiles(h, w, tile, stride)
    padded = pad_reflect(image, plan.pad).data
    hp, wp = padded.shape[2], padded.shape[3]
    weight = plan.weight.data.astype(np.float64)
    canvas = np.zeros((1, 3, hp, wp), dtype=np.float64)
    wsum = np.zeros((1, 1, hp, wp), dtype=np.float64)
    smap = make_sigma_channel(1, tile, tile, sigma) if model.sigma_aware else None
    for top, left in plan.windows:
        crop = Tensor(np.ascontiguousarray(padded[:, :, top:top + tile, left:left + tile]))
        out = model(crop, sigma_map=smap).s_hat.data
        canvas[:, :, top:top + tile, left:left + tile] += out * weight
        wsum[:, :, top:top + tile, left:left + tile] += weight
    out = canvas / wsum
    out = out[:, :, :h, :w]
    return Tensor(np.clip(out, 0.0, 1.0).astype(np.float32))
