"""Contour readout, glottal area, and the glottal-area waveform.

The contour is read from the solved network by backtracking from the
globally most salient element. If that trace does not close on itself,
a second trace is started in the opposite direction from the same pixel
and the two arcs are joined; contours that still fail to close are
reported as open rather than force-closed, so the area waveform never
contains invented geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ParameterError
from .lattice import N_DIRS, ElementLattice
from .solver import SaliencyState, backtrack

STATUS_OK = "ok"
STATUS_OPEN = "open_curve"
STATUS_NO_CURVE = "no_salient_curve"


@dataclass(frozen=True)
class GlottisResult:
    """Per-frame extraction outcome. ``contour`` pixels are (x, y)."""

    frame_index: int
    contour: tuple[tuple[int, int], ...]
    closed: bool
    area: float
    peak_saliency: float
    status: str


@dataclass(frozen=True)
class GawSeries:
    """Glottal area per frame; failed frames carry area 0 and are listed."""

    frame_indices: tuple[int, ...]
    areas: tuple[float, ...]
    frame_rate: float
    failed_frames: tuple[int, ...] = field(default_factory=tuple)


def polygon_area(polyline) -> float:
    """Shoelace area of a closed polyline (implicit last-to-first edge).

    The polyline must have at least 3 vertices and its endpoints must be
    within 2 px of each other, otherwise it is rejected as open.
    """
    pts = [(float(p[0]), float(p[1])) for p in polyline]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]
    if len(pts) < 3:
        raise ContractError(f"need at least 3 vertices, got {len(pts)}")
    gap = math.dist(pts[0], pts[-1])
    if gap > 2.0:
        raise ContractError(f"polyline is not closed (endpoint gap {gap:.2f} px)")
    total = 0.0
    for (x1, y1), (x2, y2) in zip(pts, pts[1:] + pts[:1]):
        total += x1 * y2 - x2 * y1
    return abs(total) / 2.0


def fill_polygon(polyline, width: int, height: int) -> np.ndarray:
    """Boolean mask of pixels inside a closed polyline (plus the outline).

    Even-odd scanline fill sampled at integer pixel centers; the outline
    pixels themselves are included in the region.
    """
    xs = np.array([float(p[0]) for p in polyline])
    ys = np.array([float(p[1]) for p in polyline])
    x2 = np.roll(xs, -1)
    y2 = np.roll(ys, -1)
    mask = np.zeros((height, width), dtype=bool)
    for y in range(height):
        lower = (ys <= y) & (y2 > y)
        upper = (y2 <= y) & (ys > y)
        crossing = lower | upper
        if not crossing.any():
            continue
        xi = xs[crossing] + (y - ys[crossing]) * (x2[crossing] - xs[crossing]) / (
            y2[crossing] - ys[crossing]
        )
        xi.sort()
        for i in range(0, len(xi) - 1, 2):
            lo = max(0, math.ceil(xi[i]))
            hi = min(width - 1, math.floor(xi[i + 1]))
            if hi >= lo:
                mask[y, lo : hi + 1] = True
    ix = np.clip(np.round(xs).astype(int), 0, width - 1)
    iy = np.clip(np.round(ys).astype(int), 0, height - 1)
    mask[iy, ix] = True
    return mask


def dice(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """Dice overlap 2|A&B| / (|A| + |B|); two empty masks count as 1."""
    a = int(mask_a.sum())
    b = int(mask_b.sum())
    if a + b == 0:
        return 1.0
    return 2.0 * int((mask_a & mask_b).sum()) / (a + b)


def _cut_on_hit(a_pixels, b_pixels):
    """Index pairs of the first pixel of ``b_pixels[1:]`` found in ``a_pixels``."""
    where_a = {p: i for i, p in enumerate(a_pixels)}
    for t in range(1, len(b_pixels)):
        m = where_a.get(b_pixels[t])
        if m is not None:
            return m, t
    return None


def _trace_and_close(state, lat, start, max_steps, min_loop):
    """Bidirectional trace from one start element.

    Returns (pixels, closed). A forward trace that loops over at least
    ``min_loop`` pixels is a contour by itself; a shorter loop is a
    parasitic orbit (the additive motion channel rewards re-circling the
    locally best few pixels), so the trace is treated as an open arc and
    combined with the opposite-direction arc from the same pixel.
    """
    fwd = backtrack(state, lat, start, max_steps)
    if fwd.closed:
        loop = fwd.pixels[fwd.revisit_index :]
        if len(loop) >= min_loop:
            return loop, True

    rev_dir = (int(lat.direction[start]) + 4) % N_DIRS
    fx, fy = lat.from_pixels()
    rev_start = (int(fy[start]) * lat.width + int(fx[start])) * N_DIRS + rev_dir
    if not (0 <= rev_start < lat.capacity and lat.present[rev_start]):
        return list(fwd.pixels), False
    bwd = backtrack(state, lat, rev_start, max_steps)

    hit = _cut_on_hit(fwd.pixels, bwd.pixels)
    if hit is not None:
        m, t = hit
        loop = fwd.pixels[: m + 1] + bwd.pixels[1:t][::-1]
        if len(loop) >= max(min_loop, 3):
            return loop, True
        return bwd.pixels[1:t][::-1] + fwd.pixels, False

    joined = bwd.pixels[1:][::-1] + fwd.pixels
    end_gap = max(abs(joined[0][0] - joined[-1][0]), abs(joined[0][1] - joined[-1][1]))
    if len(joined) >= max(min_loop, 3) and end_gap <= 1:
        return joined, True
    return joined, False


def extract_contour(
    state: SaliencyState,
    lat: ElementLattice,
    min_peak: float,
    frame_index: int = 0,
    max_steps: int | None = None,
    max_starts: int = 256,
    min_loop: int = 8,
) -> GlottisResult:
    """Read the dominant closed contour out of a solved saliency state.

    Starts are tried in decreasing saliency order, beginning with the
    global maximum; each start is traced in both directions and closed
    where the arcs meet. Among all closed candidates the largest
    enclosed area wins: saliency alone cannot rank them because curves
    may revisit pixels, which lets the motion channel concentrate on
    degenerate orbits (see ``_trace_and_close``). With no closed
    candidate the first arc is reported open; peaks below ``min_peak``
    report no salient curve at all.
    """
    if max_steps is None:
        max_steps = 8 * max(lat.width, lat.height)

    masked_phi = np.where(lat.present, state.phi, -np.inf)
    peak = float(masked_phi.max())
    if not np.isfinite(peak) or peak < min_peak:
        return GlottisResult(frame_index, (), False, 0.0, max(peak, 0.0), STATUS_NO_CURVE)

    fx, fy = lat.from_pixels()
    order = np.argsort(-masked_phi, kind="stable")
    best_loop = None
    best_area = -1.0
    first_open = None
    visited: set[tuple[int, int]] = set()
    tried = 0
    for eid in order:
        eid = int(eid)
        if tried >= max_starts or not np.isfinite(masked_phi[eid]) or masked_phi[eid] < min_peak:
            break
        px = (int(fx[eid]), int(fy[eid]))
        if px in visited:
            continue
        tried += 1
        pixels, closed = _trace_and_close(state, lat, eid, max_steps, min_loop)
        visited.update(pixels)
        if closed:
            area = polygon_area(pixels)
            if area > best_area:
                best_area = area
                best_loop = pixels
        elif first_open is None:
            first_open = pixels

    if best_loop is not None:
        return GlottisResult(frame_index, tuple(best_loop), True, best_area, peak, STATUS_OK)
    polyline = first_open if first_open is not None else []
    return GlottisResult(frame_index, tuple(polyline), False, 0.0, peak, STATUS_OPEN)


def build_gaw(results, fps: float) -> GawSeries:
    """Fold per-frame results into the glottal-area waveform."""
    results = list(results)
    if not results:
        raise ParameterError("cannot build a waveform from zero frames")
    results.sort(key=lambda r: r.frame_index)
    indices = []
    areas = []
    failed = []
    for r in results:
        indices.append(r.frame_index)
        if r.status == STATUS_OK:
            areas.append(r.area)
        else:
            areas.append(0.0)
            failed.append(r.frame_index)
    if len(set(indices)) != len(indices):
        raise ParameterError("duplicate frame indices in results")
    return GawSeries(
        frame_indices=tuple(indices),
        areas=tuple(areas),
        frame_rate=fps,
        failed_frames=tuple(failed),
    )


def dominant_period(series: GawSeries) -> float:
    """Dominant oscillation period of the waveform, in frames (DFT peak)."""
    a = np.asarray(series.areas, dtype=np.float64)
    if a.size < 4:
        raise ParameterError("need at least 4 frames to estimate a period")
    spectrum = np.abs(np.fft.rfft(a - a.mean()))
    spectrum[0] = 0.0
    k = int(np.argmax(spectrum))
    if k == 0:
        raise ParameterError("waveform has no oscillating component")
    return a.size / k
