"""Lucas-Kanade velocity estimation and tanh normalization.

Velocities are expressed in pixels/frame with vx positive to the right
and vy positive downward, matching image coordinates. A pixel is valid
when its windowed structure tensor is well conditioned; invalid pixels
carry exactly zero velocity so downstream code never sees NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError, ParameterError, ShapeError
from .imgproc import Frame


@dataclass(frozen=True)
class FlowParams:
    window_radius: int = 2
    min_eigenvalue: float = 1e-4
    lambda1: float = 0.5
    pyramid_levels: int = 1

    def __post_init__(self):
        if self.window_radius < 1:
            raise ParameterError(f"window_radius must be >= 1, got {self.window_radius}")
        if self.min_eigenvalue <= 0:
            raise ParameterError(f"min_eigenvalue must be positive, got {self.min_eigenvalue}")
        if self.lambda1 <= 0:
            raise ParameterError(f"lambda1 must be positive, got {self.lambda1}")
        if self.pyramid_levels < 1:
            raise ParameterError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")


@dataclass(frozen=True)
class VelocityField:
    vx: np.ndarray
    vy: np.ndarray
    valid: np.ndarray

    @property
    def width(self) -> int:
        return self.vx.shape[1]

    @property
    def height(self) -> int:
        return self.vx.shape[0]


def _lk_level(prev: np.ndarray, nxt: np.ndarray, p: FlowParams) -> VelocityField:
    """Single-level LK: 2x2 normal equations over a square window."""
    ix = np.gradient(prev, axis=1)
    iy = np.gradient(prev, axis=0)
    it = nxt - prev

    size = 2 * p.window_radius + 1
    area = float(size * size)

    def wsum(a):
        return ndimage.uniform_filter(a, size=size, mode="nearest") * area

    sxx = wsum(ix * ix)
    sxy = wsum(ix * iy)
    syy = wsum(iy * iy)
    bx = -wsum(ix * it)
    by = -wsum(iy * it)

    half_trace = 0.5 * (sxx + syy)
    half_gap = np.sqrt(np.square(0.5 * (sxx - syy)) + np.square(sxy))
    min_eig = half_trace - half_gap
    valid = min_eig >= p.min_eigenvalue

    det = sxx * syy - sxy * sxy
    safe_det = np.where(valid, det, 1.0)
    vx = np.where(valid, (syy * bx - sxy * by) / safe_det, 0.0)
    vy = np.where(valid, (sxx * by - sxy * bx) / safe_det, 0.0)
    return VelocityField(vx=vx, vy=vy, valid=valid)


def _downsample(data: np.ndarray) -> np.ndarray:
    blurred = ndimage.uniform_filter(data, size=2, mode="nearest")
    return blurred[::2, ::2]


def _warp(data: np.ndarray, vx: np.ndarray, vy: np.ndarray) -> np.ndarray:
    h, w = data.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return ndimage.map_coordinates(data, [yy + vy, xx + vx], order=1, mode="nearest")


def lk_velocity(prev: Frame, nxt: Frame, p: FlowParams | None = None) -> VelocityField:
    """Estimate per-pixel velocity from ``prev`` to ``nxt``.

    Spatial gradients are central differences of ``prev``; the temporal
    derivative is ``nxt - prev``. Pixels whose structure-tensor minimum
    eigenvalue falls below ``p.min_eigenvalue`` are marked invalid and
    zeroed. With ``pyramid_levels > 1`` a coarse-to-fine estimate handles
    displacements beyond ~2 px; the default is single-level.
    """
    p = p or FlowParams()
    if prev.data.shape != nxt.data.shape:
        raise ShapeError(
            f"frame dimensions differ: {prev.data.shape} vs {nxt.data.shape}"
        )

    if p.pyramid_levels == 1:
        return _lk_level(prev.data, nxt.data, p)

    pyr_prev = [prev.data]
    pyr_next = [nxt.data]
    for _ in range(p.pyramid_levels - 1):
        if min(pyr_prev[-1].shape) < 2 * (2 * p.window_radius + 1):
            break
        pyr_prev.append(_downsample(pyr_prev[-1]))
        pyr_next.append(_downsample(pyr_next[-1]))

    vx = np.zeros_like(pyr_prev[-1])
    vy = np.zeros_like(pyr_prev[-1])
    valid = np.zeros(pyr_prev[-1].shape, dtype=bool)
    for level in range(len(pyr_prev) - 1, -1, -1):
        a, b = pyr_prev[level], pyr_next[level]
        if vx.shape != a.shape:
            vx = 2.0 * np.kron(vx, np.ones((2, 2)))[: a.shape[0], : a.shape[1]]
            vy = 2.0 * np.kron(vy, np.ones((2, 2)))[: a.shape[0], : a.shape[1]]
        warped = _warp(b, vx, vy)
        upd = _lk_level(a, warped, p)
        vx = np.where(upd.valid, vx + upd.vx, vx)
        vy = np.where(upd.valid, vy + upd.vy, vy)
        valid = upd.valid
    vx = np.where(valid, vx, 0.0)
    vy = np.where(valid, vy, 0.0)
    return VelocityField(vx=vx, vy=vy, valid=valid)


def normalize_velocity(v: VelocityField, lambda1: float) -> VelocityField:
    """Map each velocity component through tanh(lambda1 * x).

    The result is dimensionless and strictly inside (-1, 1); validity
    flags are preserved and invalid pixels stay exactly zero.
    """
    if lambda1 <= 0:
        raise ParameterError(f"lambda1 must be positive, got {lambda1}")
    for name, comp in (("vx", v.vx), ("vy", v.vy)):
        if not np.isfinite(comp).all():
            bad = np.argwhere(~np.isfinite(comp))[0]
            raise DataError(f"non-finite {name} at pixel (x={bad[1]}, y={bad[0]})")
    return VelocityField(
        vx=np.tanh(lambda1 * v.vx),
        vy=np.tanh(lambda1 * v.vy),
        valid=v.valid.copy(),
    )
