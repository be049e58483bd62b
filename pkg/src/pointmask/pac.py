"""Parameter-free pixel-adaptive convolution refinement.

Each output location gets its own kernel computed from local statistics of
the guidance image (color standard deviation and center-to-tap color
distances) and of the previous layer's features (window mean). The default
`exp-ratio` kernel is an edge-aware smoother: taps whose color differs from
the window center are exponentially down-weighted, then weights are
L1-normalized. The `literal` variant keeps the raw ratio weights
(-delta/sigma * mu) without normalization and is retained for diagnostics.

There are no learned parameters anywhere in this module; refinement is a
pure function of (image, scores, layer configuration).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import errors
from .raster import RasterImage, ScoreStack

KERNEL_EPS = 1e-6
VARIANTS = ("exp-ratio", "literal")

_KERNEL_SIZES = (3, 5, 7)
_STRIDES = (1, 2)


@dataclass(frozen=True)
class PacLayerSpec:
    """One adaptive-convolution layer: odd kernel, dilation, stride."""

    kernel_size: int
    dilation: int = 1
    stride: int = 1

    def __post_init__(self):
        if self.kernel_size not in _KERNEL_SIZES:
            raise ValueError(f"kernel_size must be one of {_KERNEL_SIZES}")
        if self.stride not in _STRIDES:
            raise ValueError(f"stride must be one of {_STRIDES}")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")


DEFAULT_PAC_LAYERS = tuple(
    PacLayerSpec(kernel_size=k, dilation=d, stride=s)
    for k, d, s in zip(
        (7, 7, 5, 5, 3, 3, 3, 3, 3, 3, 3, 3),
        (1, 1, 2, 2, 4, 4, 8, 8, 16, 16, 32, 32),
        (2, 2, 2, 2, 1, 1, 1, 1, 1, 1, 1, 1),
    )
)


def max_effective_dilation(height: int, width: int, kernel_size: int) -> int:
    """Largest dilation whose taps still reach distinct in-bounds pixels."""
    return max(1, (min(height, width) - 1) // (kernel_size - 1))


def compute_kernel(guidance_window, feature_window, variant: str = "exp-ratio"):
    """Adaptive tap weights for one (k, k) window.

    guidance_window is (k, k, 3) with values in [0, 1]; feature_window is the
    matching (k, k) patch of the current class plane. The exp-ratio variant
    returns weights normalized to sum 1; the literal variant returns the raw
    -delta/sigma * mu products.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    g = np.asarray(guidance_window, dtype=np.float64)
    f = np.asarray(feature_window, dtype=np.float64)
    if g.ndim != 3 or g.shape[2] != 3 or g.shape[0] != g.shape[1]:
        raise ValueError(f"guidance window must be (k, k, 3), got {g.shape}")
    if f.shape != g.shape[:2]:
        raise errors.DimensionMismatch(
            f"feature window {f.shape} does not match guidance {g.shape[:2]}")
    k = g.shape[0]
    if k % 2 == 0:
        raise ValueError("kernel size must be odd")
    center = g[k // 2, k // 2]
    delta = np.sqrt(((g - center) ** 2).sum(axis=2))
    scale = g.std() + KERNEL_EPS
    mu = f.mean()
    if variant == "literal":
        return -(delta / scale) * mu
    weights = np.exp(-delta / scale) * mu
    total = weights.sum()
    if total > 0.0:
        return weights / total
    # all-zero feature window: any convex weights produce output 0
    return np.full((k, k), 1.0 / (k * k))


def pac_layer(planes, guidance, spec: PacLayerSpec, variant: str = "exp-ratio",
              cap_dilation: bool = True):
    """Apply one adaptive-convolution layer to a (P, h, w) plane stack.

    Borders are padded by edge replication of width dilation*(k-1)/2 and the
    output is ceil(h/stride) x ceil(w/stride). With cap_dilation the dilation
    is clamped so kernels never consist entirely of padding.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    planes = np.asarray(planes, dtype=np.float64)
    guidance = np.asarray(guidance, dtype=np.float64)
    if planes.ndim != 3:
        raise ValueError(f"expected (P, h, w) planes, got {planes.shape}")
    nplanes, h, w = planes.shape
    if guidance.shape != (h, w, 3):
        raise errors.DimensionMismatch(
            f"guidance {guidance.shape} does not match features {(h, w)}")
    if h < 1 or w < 1:
        raise errors.ImageTooSmall(f"feature map {h}x{w}")

    k = spec.kernel_size
    radius = k // 2
    stride = spec.stride
    dil = spec.dilation
    if cap_dilation:
        dil = min(dil, max_effective_dilation(h, w, k))
    pad = dil * radius
    out_h = -(-h // stride)
    out_w = -(-w // stride)

    gpad = np.pad(guidance, ((pad, pad), (pad, pad), (0, 0)), mode="edge")
    fpad = np.pad(planes, ((0, 0), (pad, pad), (pad, pad)), mode="edge")

    def rows(offset):
        return slice(pad + offset, pad + offset + stride * (out_h - 1) + 1, stride)

    def cols(offset):
        return slice(pad + offset, pad + offset + stride * (out_w - 1) + 1, stride)

    offsets = [(dil * (a - radius), dil * (b - radius))
               for a in range(k) for b in range(k)]
    center = gpad[rows(0), cols(0)]

    # window statistics over all taps and channels
    sum1 = np.zeros((out_h, out_w))
    sum2 = np.zeros((out_h, out_w))
    deltas = []
    for oy, ox in offsets:
        tap = gpad[rows(oy), cols(ox)]
        sum1 += tap.sum(axis=2)
        sum2 += (tap * tap).sum(axis=2)
        diff = tap - center
        deltas.append(np.sqrt((diff * diff).sum(axis=2)))
    count = k * k * 3
    mean = sum1 / count
    sigma = np.sqrt(np.maximum(sum2 / count - mean * mean, 0.0))
    scale = sigma + KERNEL_EPS

    out = np.zeros((nplanes, out_h, out_w))
    if variant == "exp-ratio":
        # mu is constant across taps, so it cancels under L1 normalization;
        # windows with mu = 0 are all-zero and yield 0 under any weights.
        taps = [np.exp(-delta / scale) for delta in deltas]
        denom = np.zeros((out_h, out_w))
        for tap in taps:
            denom += tap
        for (oy, ox), tap in zip(offsets, taps):
            out += (tap / denom) * fpad[:, rows(oy), cols(ox)]
    else:
        feat_sum = np.zeros((nplanes, out_h, out_w))
        for (oy, ox), delta in zip(offsets, deltas):
            feat = fpad[:, rows(oy), cols(ox)]
            feat_sum += feat
            out += (-delta / scale) * feat
        out *= feat_sum / (k * k)
    return out


def _pool_average(arr, out_h: int, out_w: int):
    """Adaptive average pooling of an (H, W, C) array to (out_h, out_w, C)."""
    h, w = arr.shape[:2]
    if out_h > h or out_w > w:
        raise ValueError("pooling cannot upsample")
    row_starts = (np.arange(out_h) * h) // out_h
    col_starts = (np.arange(out_w) * w) // out_w
    row_counts = np.diff(np.append(row_starts, h))
    col_counts = np.diff(np.append(col_starts, w))
    pooled = np.add.reduceat(arr, row_starts, axis=0) / row_counts[:, None, None]
    pooled = np.add.reduceat(pooled, col_starts, axis=1) / col_counts[None, :, None]
    return pooled


def _resize_bilinear(planes, out_h: int, out_w: int):
    """Bilinear resize of (P, h, w) planes with half-pixel alignment."""
    _, h, w = planes.shape

    def coords(n_in, n_out):
        src = np.clip((np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    r0, r1, rf = coords(h, out_h)
    c0, c1, cf = coords(w, out_w)
    rows = planes[:, r0, :] * (1.0 - rf)[None, :, None] + planes[:, r1, :] * rf[None, :, None]
    return rows[:, :, c0] * (1.0 - cf)[None, None, :] + rows[:, :, c1] * cf[None, None, :]


def refine_planes(planes, image: RasterImage, layers=DEFAULT_PAC_LAYERS,
                  variant: str = "exp-ratio"):
    """Run the layer chain on raw (P, H, W) planes and restore H x W output.

    Guidance is average-pooled from the image to each layer's input
    resolution; the final stack is bilinearly upsampled back to full size.
    """
    planes = np.asarray(planes, dtype=np.float64)
    height, width = image.height, image.width
    if planes.shape[1:] != (height, width):
        raise errors.DimensionMismatch(
            f"planes {planes.shape[1:]} do not match image {(height, width)}")
    guidance_full = image.normalized
    current = planes
    for spec in layers:
        h, w = current.shape[1:]
        if h < 1 or w < 1:
            raise errors.ImageTooSmall("intermediate resolution collapsed to zero")
        if (h, w) == (height, width):
            guidance = guidance_full
        else:
            guidance = _pool_average(guidance_full, h, w)
        current = pac_layer(current, guidance, spec, variant)
    if current.shape[1:] != (height, width):
        current = _resize_bilinear(current, height, width)
    return current


def refine(stack: ScoreStack, image: RasterImage, layers=DEFAULT_PAC_LAYERS,
           variant: str = "exp-ratio") -> ScoreStack:
    """Refine a score stack with the full layer chain.

    Note the literal variant usually leaves [0, 1] and cannot be wrapped in a
    ScoreStack; use refine_planes() for it.
    """
    out = refine_planes(stack.planes, image, layers, variant)
    if variant == "exp-ratio":
        out = np.clip(out, 0.0, 1.0)
    return ScoreStack(out)
