"""Curve-level saliency measures.

These direct evaluations on explicit curves define what the dynamic
programming solver must reproduce; the solver and the brute-force oracle
are both checked against them.

The structural measure of a curve (e_0 .. e_N) is

    sum_k  C_k * rho_k * sigma(e_k)

where C_k is the product of per-step curvature factors from the head to
e_k, rho_k the product of attenuation factors past the head (both empty
products for k = 0), and sigma is 1 on active elements, 0 on virtual
ones.

The motion measure combines, per step, the velocity magnitude at the
entered pixel with the angular closeness (cosine) and spatial closeness
(sech of the absolute-component distance) of the two pixels' normalized
velocities. In the default ``adjacent`` form consecutive pixels are
compared; the ``head_anchored`` form compares every pixel against the
curve head instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError, ShapeError, TopologyError
from .flow import VelocityField
from .lattice import (
    MS_FORM_ADJACENT,
    MS_FORM_HEAD_ANCHORED,
    ElementLattice,
    NetworkParams,
    curvature_factor,
)


@dataclass(frozen=True)
class Curve:
    """An ordered, connected, non-backtracking sequence of element ids."""

    elements: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.elements)


def validate_curve(curve: Curve, lat: ElementLattice) -> None:
    ids = curve.elements
    if not ids:
        raise TopologyError("curve is empty")
    for eid in ids:
        if not (0 <= eid < lat.capacity) or not lat.present[eid]:
            raise TopologyError(f"element {eid} does not exist")
    for a, b in zip(ids, ids[1:]):
        if lat._to_x[a] != lat._from_x[b] or lat._to_y[a] != lat._from_y[b]:
            raise TopologyError(f"elements {a} -> {b} are not connected")
        if b == lat.reversal_of(a):
            raise TopologyError(f"curve backtracks immediately at element {a}")


def angular_distance(v_i, v_j) -> float:
    """Cosine of the angle between two velocity vectors, in [-1, 1].

    A zero vector has no direction; the comparison is then neutral (0),
    which is how textureless pixels with zeroed velocity behave.
    """
    xi, yi = float(v_i[0]), float(v_i[1])
    xj, yj = float(v_j[0]), float(v_j[1])
    ni = np.hypot(xi, yi)
    nj = np.hypot(xj, yj)
    if ni == 0.0 or nj == 0.0:
        return 0.0
    return float(np.clip((xi * xj + yi * yj) / (ni * nj), -1.0, 1.0))


def spatial_distance(v_i, v_j, lambda2: float = 0.5) -> float:
    """sech(lambda2 * D) where D compares absolute velocity components.

    Equal vectors give exactly 1.0 and the value decays towards 0 as the
    componentwise magnitudes diverge; the sign of each component is
    ignored (direction is the angular distance's job).
    """
    if lambda2 <= 0:
        raise ParameterError(f"lambda2 must be positive, got {lambda2}")
    comps = (float(v_i[0]), float(v_i[1]), float(v_j[0]), float(v_j[1]))
    if not all(np.isfinite(c) for c in comps):
        raise DataError(f"non-finite velocity component in {v_i!r} / {v_j!r}")
    d = np.hypot(abs(comps[0]) - abs(comps[2]), abs(comps[1]) - abs(comps[3]))
    return float(2.0 / (np.exp(-lambda2 * d) + np.exp(lambda2 * d)))


def magnitude(v) -> float:
    """Euclidean norm of a velocity vector."""
    return float(np.hypot(float(v[0]), float(v[1])))


def _velocity_at(vf: VelocityField, lat: ElementLattice, eid: int) -> tuple[float, float]:
    x = int(lat._from_x[eid])
    y = int(lat._from_y[eid])
    return float(vf.vx[y, x]), float(vf.vy[y, x])


def su_measure(curve: Curve, lat: ElementLattice, p: NetworkParams | None = None) -> float:
    """Structural saliency of an explicit curve."""
    p = p or NetworkParams()
    validate_curve(curve, lat)
    ids = curve.elements
    total = lat.sigma[ids[0]]
    weight = 1.0
    prev = lat.element(ids[0])
    for eid in ids[1:]:
        cur = lat.element(eid)
        weight *= curvature_factor(prev, cur, p.curvature_scale) * cur.rho
        total += weight * cur.sigma
        prev = cur
    return float(total)


def ms_measure(
    curve: Curve,
    lat: ElementLattice,
    vf: VelocityField,
    p: NetworkParams | None = None,
) -> float:
    """Motion saliency of an explicit curve.

    Velocities are sampled at each element's tail pixel. With
    ``p.clamp_ms`` (the default) negative per-step contributions, which
    arise from antiparallel velocities, are floored at zero.
    """
    p = p or NetworkParams()
    validate_curve(curve, lat)
    if (vf.vx.shape[0], vf.vx.shape[1]) != (lat.height, lat.width):
        raise ShapeError(
            f"velocity field {vf.vx.shape} does not cover the {lat.width}x{lat.height} lattice"
        )
    ids = curve.elements
    vels = [_velocity_at(vf, lat, eid) for eid in ids]

    if p.ms_form == MS_FORM_ADJACENT:
        total = magnitude(vels[0])
        for k in range(1, len(ids)):
            step = (
                magnitude(vels[k])
                * angular_distance(vels[k - 1], vels[k])
                * spatial_distance(vels[k - 1], vels[k], p.lambda2)
            )
            if p.clamp_ms and step < 0.0:
                step = 0.0
            total += step
        return float(total)

    if p.ms_form == MS_FORM_HEAD_ANCHORED:
        head = vels[0]
        m0 = magnitude(head)
        total = 0.0
        for k in range(len(ids)):
            term = m0 * angular_distance(head, vels[k]) * spatial_distance(head, vels[k], p.lambda2)
            if p.clamp_ms and term < 0.0:
                term = 0.0
            total += term
        return float(total)

    raise ParameterError(f"unknown ms_form {p.ms_form!r}")


def combined_measure(
    curve: Curve,
    lat: ElementLattice,
    vf: VelocityField,
    p: NetworkParams | None = None,
    normalizers: tuple[float, float] | None = None,
) -> float:
    """Weighted blend alpha * structural + beta * motion.

    ``normalizers`` are optional per-frame channel divisors (structural,
    motion). They are a frame-level quantity that a single curve cannot
    know, so callers that want normalized blending (the solver and the
    oracle) compute and pass them explicitly; by default the blend is
    raw, independent of ``p.normalize_maps``.
    """
    p = p or NetworkParams()
    su = su_measure(curve, lat, p)
    ms = ms_measure(curve, lat, vf, p)
    if normalizers is not None:
        su_div, ms_div = normalizers
        su = su / su_div if su_div > 0 else su
        ms = ms / ms_div if ms_div > 0 else ms
    return float(p.alpha * su + p.beta * ms)


def angular_distance_fields(vx_i, vy_i, vx_j, vy_j) -> np.ndarray:
    """Vectorized ``angular_distance`` over component arrays."""
    ni = np.hypot(vx_i, vy_i)
    nj = np.hypot(vx_j, vy_j)
    denom = ni * nj
    dot = vx_i * vx_j + vy_i * vy_j
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0.0, dot / np.where(denom > 0.0, denom, 1.0), 0.0)
    return np.clip(cos, -1.0, 1.0)


def spatial_distance_fields(vx_i, vy_i, vx_j, vy_j, lambda2: float = 0.5) -> np.ndarray:
    """Vectorized ``spatial_distance`` over component arrays."""
    d = np.hypot(np.abs(vx_i) - np.abs(vx_j), np.abs(vy_i) - np.abs(vy_j))
    return 2.0 / (np.exp(-lambda2 * d) + np.exp(lambda2 * d))
