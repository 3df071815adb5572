"""Directed orientation elements between 8-adjacent pixels.

An element is a directed edge from a pixel to one of its 8 neighbors;
its orientation is a multiple of pi/4 in the (x right, y down) frame.
Element ids are dense: ``id = (y * width + x) * 8 + direction``; ids
whose head pixel or target pixel falls outside the grid are absent and
masked out of ``present``.

Elements whose tail pixel lies on a detected edge and whose orientation
aligns with the local edge tangent are *active* (local saliency 1,
attenuation ``rho_active``); everything else is *virtual* (saliency 0,
attenuation ``rho_virtual``), which is what lets curves bridge gaps in
the edge evidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, TopologyError
from .imgproc import EdgeMap

N_DIRS = 8
DX = np.array([1, 1, 0, -1, -1, -1, 0, 1], dtype=np.int64)
DY = np.array([0, 1, 1, 1, 0, -1, -1, -1], dtype=np.int64)
ORIENTATIONS = np.arange(N_DIRS) * (math.pi / 4.0)

MS_FORM_ADJACENT = "adjacent"
MS_FORM_HEAD_ANCHORED = "head_anchored"


@dataclass(frozen=True)
class NetworkParams:
    """Tunable knobs of the saliency network.

    ``front_cap`` bounds the per-element trade-off front kept by the
    combined-measure solver; 0 means unbounded (exact, small lattices
    only). ``angle_tolerance`` widens the tangent-alignment test for
    active elements; the default 0 keeps exactly the two orientations
    nearest the edge tangent.
    """

    rho_active: float = 1.0
    rho_virtual: float = 0.7
    curvature_scale: float = 1.0
    iterations: int = 60
    alpha: float = 0.3
    beta: float = 0.7
    ms_form: str = MS_FORM_ADJACENT
    normalize_maps: bool = True
    clamp_ms: bool = True
    angle_tolerance: float = 0.0
    front_cap: int = 8
    lambda2: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.rho_virtual <= self.rho_active <= 1.0):
            raise ParameterError(
                f"need 0 < rho_virtual <= rho_active <= 1, got "
                f"rho_virtual={self.rho_virtual} rho_active={self.rho_active}"
            )
        if self.curvature_scale <= 0:
            raise ParameterError(f"curvature_scale must be positive, got {self.curvature_scale}")
        if self.iterations < 1:
            raise ParameterError(f"iterations must be >= 1, got {self.iterations}")
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ParameterError(
                f"need alpha >= 0, beta >= 0, alpha + beta > 0, got "
                f"alpha={self.alpha} beta={self.beta}"
            )
        if self.ms_form not in (MS_FORM_ADJACENT, MS_FORM_HEAD_ANCHORED):
            raise ParameterError(f"unknown ms_form {self.ms_form!r}")
        if self.angle_tolerance < 0:
            raise ParameterError(f"angle_tolerance must be >= 0, got {self.angle_tolerance}")
        if self.front_cap < 0:
            raise ParameterError(f"front_cap must be >= 0, got {self.front_cap}")
        if self.lambda2 <= 0:
            raise ParameterError(f"lambda2 must be positive, got {self.lambda2}")


@dataclass(frozen=True)
class Element:
    """Read-only view of one lattice element. Pixels are (x, y)."""

    id: int
    from_pixel: tuple[int, int]
    to_pixel: tuple[int, int]
    orientation: float
    active: bool
    sigma: float
    rho: float


def wrap_angle(delta: float) -> float:
    """Wrap an angle difference into (-pi, pi]."""
    wrapped = math.fmod(delta, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


class ElementLattice:
    """Immutable element lattice over a ``height x width`` pixel grid."""

    def __init__(self, width: int, height: int, active: np.ndarray, params: NetworkParams):
        self.width = width
        self.height = height
        self.params = params
        n = width * height * N_DIRS

        ids = np.arange(n)
        d = ids % N_DIRS
        pix = ids // N_DIRS
        x = pix % width
        y = pix // width
        tx = x + DX[d]
        ty = y + DY[d]
        self.present = (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height)

        self.active = active & self.present
        self.sigma = np.where(self.active, 1.0, 0.0)
        self.rho = np.where(self.active, params.rho_active, params.rho_virtual)
        self.orientation = ORIENTATIONS[d]
        self.direction = d.astype(np.int8)
        self._from_x = x
        self._from_y = y
        self._to_x = tx
        self._to_y = ty

        # succ_all[e, d2] = element (to_pixel(e), d2), or -1 when either
        # element is absent; includes the reversal of e.
        to_pix = np.where(self.present, ty * width + tx, 0)
        cand = to_pix[:, None] * N_DIRS + np.arange(N_DIRS)[None, :]
        ok = self.present[:, None] & self.present[np.clip(cand, 0, n - 1)]
        self.succ_all = np.where(ok, cand, -1).astype(np.int64)

    @property
    def n_elements(self) -> int:
        """Number of present elements (ordered 8-adjacent pixel pairs)."""
        return int(self.present.sum())

    @property
    def capacity(self) -> int:
        """Size of the dense id space, including absent slots."""
        return self.present.shape[0]

    def element_ids(self) -> np.ndarray:
        return np.flatnonzero(self.present)

    def element(self, eid: int) -> Element:
        if not (0 <= eid < self.capacity) or not self.present[eid]:
            raise TopologyError(f"element {eid} does not exist")
        return Element(
            id=int(eid),
            from_pixel=(int(self._from_x[eid]), int(self._from_y[eid])),
            to_pixel=(int(self._to_x[eid]), int(self._to_y[eid])),
            orientation=float(self.orientation[eid]),
            active=bool(self.active[eid]),
            sigma=float(self.sigma[eid]),
            rho=float(self.rho[eid]),
        )

    def successors(self, eid: int) -> np.ndarray:
        """Ids of all elements starting at ``eid``'s head pixel, ascending."""
        if not (0 <= eid < self.capacity) or not self.present[eid]:
            raise TopologyError(f"element {eid} does not exist")
        row = self.succ_all[eid]
        return row[row >= 0]

    def reversal_of(self, eid: int) -> int:
        """Id of the element traversing ``eid``'s pixel pair backwards."""
        d = int(self.direction[eid])
        tx, ty = int(self._to_x[eid]), int(self._to_y[eid])
        return (ty * self.width + tx) * N_DIRS + ((d + 4) % N_DIRS)

    def from_pixels(self) -> tuple[np.ndarray, np.ndarray]:
        return self._from_x, self._from_y

    def to_pixels(self) -> tuple[np.ndarray, np.ndarray]:
        return self._to_x, self._to_y


def build_lattice(edge_map: EdgeMap, params: NetworkParams | None = None) -> ElementLattice:
    """Construct the element lattice for an edge map.

    An element is active iff its tail pixel is an edge pixel and its
    orientation, taken modulo pi, lies within ``pi/4 + angle_tolerance``
    (strictly) of the edge tangent there. The tangent is the gradient
    angle rotated by a quarter turn, so elements crossing an edge
    perpendicularly stay virtual.
    """
    params = params or NetworkParams()
    h, w = edge_map.edge.shape
    if h < 3 or w < 3:
        raise ParameterError(f"edge map must be at least 3x3, got {w}x{h}")

    tangent = np.mod(edge_map.gradient_angle + np.pi / 2.0, np.pi)
    line_angle = np.mod(ORIENTATIONS, np.pi)  # per direction
    # distance between undirected orientations, in [0, pi/2]
    diff = np.abs(line_angle[None, None, :] - tangent[:, :, None])
    diff = np.minimum(diff, np.pi - diff)
    aligned = diff < (np.pi / 4.0 + params.angle_tolerance)
    active = (edge_map.edge[:, :, None] & aligned).reshape(-1)
    return ElementLattice(width=w, height=h, active=active, params=params)


def curvature_factor(e_i: Element, e_j: Element, kappa: float) -> float:
    """Per-step curvature penalty exp(-kappa * dtheta^2) for a successor pair.

    ``dtheta`` is the orientation change wrapped into (-pi, pi]; collinear
    continuation gives 1.0 and a full reversal gives exp(-kappa * pi^2).
    """
    if kappa <= 0:
        raise ParameterError(f"kappa must be positive, got {kappa}")
    if e_i.to_pixel != e_j.from_pixel:
        raise TopologyError(
            f"element {e_j.id} does not start at the head of element {e_i.id}"
        )
    dtheta = wrap_angle(e_j.orientation - e_i.orientation)
    return math.exp(-kappa * dtheta * dtheta)


def curvature_table(kappa: float) -> np.ndarray:
    """8x8 table of curvature factors indexed by (direction, next direction)."""
    d = np.arange(N_DIRS)
    delta = (d[None, :] - d[:, None]) % N_DIRS
    dtheta = np.where(delta > 4, delta - 8, delta) * (np.pi / 4.0)
    return np.exp(-kappa * dtheta * dtheta)


def attenuation_along(curve, lat: ElementLattice) -> float:
    """Product of element attenuation factors past the curve head.

    The head element contributes no factor (an empty product is 1), so a
    single-element curve returns exactly 1.0.
    """
    ids = list(curve.elements) if hasattr(curve, "elements") else list(curve)
    if not ids:
        raise TopologyError("empty curve")
    total = 1.0
    prev = ids[0]
    if not (0 <= prev < lat.capacity) or not lat.present[prev]:
        raise TopologyError(f"element {prev} does not exist")
    for eid in ids[1:]:
        if not (0 <= eid < lat.capacity) or not lat.present[eid]:
            raise TopologyError(f"element {eid} does not exist")
        if lat._to_x[prev] != lat._from_x[eid] or lat._to_y[prev] != lat._from_y[eid]:
            raise TopologyError(f"elements {prev} -> {eid} are not connected")
        total *= lat.rho[eid]
        prev = eid
    return float(total)
