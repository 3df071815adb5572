"""Grayscale conversion, Gaussian smoothing, and Canny edge detection.

All images are 2-D float64 arrays with intensities in [0, 1], row-major
(index [y, x], origin top-left, x right, y down). Borders are handled by
edge replication throughout so the frame boundary never generates
spurious gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError, FormatError, ParameterError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


@dataclass(frozen=True)
class Frame:
    """One grayscale video frame, intensities in [0, 1]."""

    data: np.ndarray
    index: int = 0

    def __post_init__(self):
        d = self.data
        if d.ndim != 2 or d.shape[0] < 3 or d.shape[1] < 3:
            raise ParameterError(f"frame must be 2-D and at least 3x3, got shape {d.shape}")
        if not np.isfinite(d).all():
            bad = np.argwhere(~np.isfinite(d))[0]
            raise DataError(f"non-finite intensity at pixel (x={bad[1]}, y={bad[0]})")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ParameterError(
                f"frame intensities must lie in [0, 1], got [{d.min():.4g}, {d.max():.4g}]"
            )

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class EdgeMap:
    """Binary edge map plus the gradient field it was derived from.

    ``gradient_angle`` is stored modulo pi (an edge normal has no sign);
    ``gradient_magnitude`` is the raw Sobel magnitude of the blurred frame.
    """

    edge: np.ndarray
    gradient_angle: np.ndarray
    gradient_magnitude: np.ndarray

    @property
    def width(self) -> int:
        return self.edge.shape[1]

    @property
    def height(self) -> int:
        return self.edge.shape[0]


def to_grayscale(raw: np.ndarray, index: int = 0) -> Frame:
    """Convert a 1- or 3-channel 8/16-bit image to a [0, 1] grayscale frame.

    3-channel input is combined with the usual luma weights (0.299, 0.587,
    0.114); 1-channel input is only rescaled.
    """
    raw = np.asarray(raw)
    if raw.ndim == 3:
        if raw.shape[2] != 3:
            raise FormatError(f"unsupported channel count {raw.shape[2]} (expected 1 or 3)")
    elif raw.ndim != 2:
        raise FormatError(f"unsupported array rank {raw.ndim} (expected 2-D or 3-D)")

    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"unsupported sample depth {raw.dtype} (expected uint8 or uint16)")

    data = raw.astype(np.float64) / scale
    if data.ndim == 3:
        w = LUMA_WEIGHTS
        data = w[0] * data[:, :, 0] + w[1] * data[:, :, 1] + w[2] * data[:, :, 2]
    return Frame(np.clip(data, 0.0, 1.0), index=index)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian kernel with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(frame: Frame, sigma: float) -> Frame:
    """Separable Gaussian blur with replicated borders."""
    k = gaussian_kernel(sigma)
    out = ndimage.convolve1d(frame.data, k, axis=0, mode="nearest")
    out = ndimage.convolve1d(out, k, axis=1, mode="nearest")
    return Frame(np.clip(out, 0.0, 1.0), index=frame.index)


def sobel_gradients(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel derivatives (gx, gy) with replicated borders."""
    gx = ndimage.correlate(data, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(data, _SOBEL_Y, mode="nearest")
    return gx, gy


def _nonmax_suppress(mag: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Keep pixels that are local maxima along the gradient direction.

    The angle (mod pi) is quantized into four sectors; each pixel is
    compared against its two neighbors along the quantized direction.
    """
    sector = np.floor_divide(np.mod(angle + np.pi / 8.0, np.pi), np.pi / 4.0).astype(np.int8)
    p = np.pad(mag, 1, mode="edge")
    h, w = mag.shape
    # neighbor pairs per sector: 0 = horizontal gradient, 1 = down-right
    # diagonal, 2 = vertical, 3 = down-left diagonal
    n1 = np.empty_like(mag)
    n2 = np.empty_like(mag)
    shifts = {
        0: ((0, 1), (0, -1)),
        1: ((1, 1), (-1, -1)),
        2: ((1, 0), (-1, 0)),
        3: ((1, -1), (-1, 1)),
    }
    for s, ((dy1, dx1), (dy2, dx2)) in shifts.items():
        m = sector == s
        n1[m] = p[1 + dy1 : 1 + dy1 + h, 1 + dx1 : 1 + dx1 + w][m]
        n2[m] = p[1 + dy2 : 1 + dy2 + h, 1 + dx2 : 1 + dx2 + w][m]
    return (mag >= n1) & (mag >= n2)


def canny_edges(frame: Frame, low: float = 0.1, high: float = 0.25, sigma: float = 1.4) -> EdgeMap:
    """Canny edge detection: blur, Sobel, NMS, double-threshold hysteresis.

    Thresholds are absolute on the Sobel magnitude of a [0, 1]-intensity
    frame. Hysteresis keeps every weak pixel 8-connected to a strong one.
    """
    if not (0.0 < low < high):
        raise ParameterError(f"thresholds must satisfy 0 < low < high, got low={low} high={high}")
    blurred = gaussian_blur(frame, sigma)
    gx, gy = sobel_gradients(blurred.data)
    mag = np.hypot(gx, gy)
    angle = np.mod(np.arctan2(gy, gx), np.pi)

    ridge = _nonmax_suppress(mag, angle)
    weak = ridge & (mag > low)
    strong = ridge & (mag >= high)

    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=np.int8))
    keep = np.unique(labels[strong])
    keep = keep[keep > 0]
    edge = np.isin(labels, keep)
    return EdgeMap(edge=edge, gradient_angle=angle, gradient_magnitude=mag)
