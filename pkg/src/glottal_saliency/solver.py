"""Dynamic-programming maximization of the blended saliency measure.

Semantics: after ``run_dp`` with ``p.iterations = N``, ``phi[e]`` is the
maximum blended measure over all connected, non-backtracking curves of
at most N elements starting at element ``e``. Curves may revisit pixels
and elements; only an immediate reversal is forbidden, matching the
curve definition in :mod:`glottal_saliency.measures`.

The structural channel composes multiplicatively (each step discounts
the whole continuation by attenuation times the curvature factor) while
the motion channel composes additively, so no single scalar recurrence
maximizes their weighted sum. The solver therefore keeps, per element,
the Pareto staircase of (structural value, motion step sum) pairs that
curves from that element can realize. Every later composition applies a
nonnegative linear functional to such a pair, so keeping the staircase
is lossless: maxima over it equal maxima over all curves. ``front_cap``
bounds the staircase per element; 0 keeps it exact (small lattices),
and a positive cap keeps the points with the best final blend, which is
a documented approximation used for full frames.

Pure-channel runs (alpha == 0 or beta == 0) use exact scalar
recurrences, which also supply the per-frame channel maxima used when
``normalize_maps`` is on.

``brute_force_max`` is the independent correctness oracle: it
enumerates every admissible curve up to a length bound with arithmetic
built from the scalar measure primitives, never touching the solver's
vectorized tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CapacityError, NumericError, ParameterError, ShapeError, TopologyError
from .flow import VelocityField
from .lattice import (
    MS_FORM_ADJACENT,
    N_DIRS,
    ElementLattice,
    NetworkParams,
    curvature_factor,
    curvature_table,
)
from .measures import (
    Curve,
    angular_distance,
    angular_distance_fields,
    magnitude,
    spatial_distance,
    spatial_distance_fields,
)


@dataclass
class SaliencyState:
    """Solved per-element saliency and the pointers to read curves back.

    ``head_orientation`` is the per-element orientation memo the
    recurrence conditions on (the curvature factor depends only on
    consecutive orientations). ``phi_su`` / ``phi_ms`` are the raw
    single-channel maxima; ``phi`` is the blended, optionally
    normalized, objective. ``best_next[e]`` is -1 where stopping at
    ``e`` is optimal.
    """

    phi: np.ndarray
    best_next: np.ndarray
    head_orientation: np.ndarray
    iteration: int
    phi_su: np.ndarray
    phi_ms: np.ndarray
    su_divisor: float
    ms_divisor: float
    max_front_width: int = 1
    front_trimmed: bool = False


@dataclass(frozen=True)
class BacktrackResult:
    """A traced curve plus its pixel path and closure information."""

    curve: Curve
    pixels: list[tuple[int, int]]
    closed: bool
    revisit_index: int | None


def _dp_successors(lat: ElementLattice) -> np.ndarray:
    """Successor table with the immediate reversal masked out."""
    succ = lat.succ_all.copy()
    d = lat.direction.astype(np.int64)
    rev_col = (d + 4) % N_DIRS
    succ[np.arange(succ.shape[0]), rev_col] = -1
    return succ


def _solver_tables(lat: ElementLattice, vf: VelocityField, p: NetworkParams):
    """Vectorized per-element quantities used by the DP kernels."""
    fx, fy = lat.from_pixels()
    tx, ty = lat.to_pixels()
    tx = np.clip(tx, 0, lat.width - 1)
    ty = np.clip(ty, 0, lat.height - 1)

    v_fx = vf.vx[fy, fx]
    v_fy = vf.vy[fy, fx]
    v_tx = vf.vx[ty, tx]
    v_ty = vf.vy[ty, tx]

    mloc = np.hypot(v_fx, v_fy)
    ang = angular_distance_fields(v_fx, v_fy, v_tx, v_ty)
    spat = spatial_distance_fields(v_fx, v_fy, v_tx, v_ty, p.lambda2)
    mag_to = np.hypot(v_tx, v_ty)
    step = mag_to * ang * spat
    step = np.where(lat.present, step, 0.0)
    if p.clamp_ms:
        step = np.maximum(step, 0.0)

    curv = curvature_table(p.curvature_scale)
    dp_succ = _dp_successors(lat)
    d = lat.direction.astype(np.int64)
    # succ_all columns are absolute directions, so curv[d] is already the
    # [E, 8] table of factors from each element to every successor slot.
    rho_succ = lat.rho[np.clip(dp_succ, 0, lat.capacity - 1)]
    g = np.where(dp_succ >= 0, curv[d] * rho_succ, 0.0)
    return dp_succ, g, lat.sigma.copy(), mloc, step


@njit(cache=True, nogil=True)
def _sweep_su(phi_in, phi_out, dp_succ, g, sigma, present):
    for e in range(phi_in.shape[0]):
        if not present[e]:
            phi_out[e] = 0.0
            continue
        best = 0.0
        for s in range(8):
            j = dp_succ[e, s]
            if j < 0:
                continue
            v = g[e, s] * phi_in[j]
            if v > best:
                best = v
        phi_out[e] = sigma[e] + best


@njit(cache=True, nogil=True)
def _sweep_su_record(phi_in, phi_out, bn_out, dp_succ, g, sigma, present):
    for e in range(phi_in.shape[0]):
        if not present[e]:
            phi_out[e] = 0.0
            bn_out[e] = -1
            continue
        best = 0.0
        bj = np.int64(-1)
        for s in range(8):
            j = dp_succ[e, s]
            if j < 0:
                continue
            v = g[e, s] * phi_in[j]
            if v > best:
                best = v
                bj = j
        phi_out[e] = sigma[e] + best
        bn_out[e] = bj


@njit(cache=True, nogil=True)
def _sweep_ms(t_in, t_out, dp_succ, step, present):
    for e in range(t_in.shape[0]):
        if not present[e]:
            t_out[e] = 0.0
            continue
        best = 0.0
        for s in range(8):
            j = dp_succ[e, s]
            if j < 0:
                continue
            v = step[e] + t_in[j]
            if v > best:
                best = v
        t_out[e] = best


@njit(cache=True, nogil=True)
def _sweep_ms_record(t_in, t_out, bn_out, dp_succ, step, present):
    for e in range(t_in.shape[0]):
        if not present[e]:
            t_out[e] = 0.0
            bn_out[e] = -1
            continue
        best = 0.0
        bj = np.int64(-1)
        for s in range(8):
            j = dp_succ[e, s]
            if j < 0:
                continue
            v = step[e] + t_in[j]
            if v > best:
                best = v
                bj = j
        t_out[e] = best
        bn_out[e] = bj


@njit(cache=True, nogil=True)
def _sweep_front(
    su_in,
    tm_in,
    cnt_in,
    su_out,
    tm_out,
    nxt_out,
    cnt_out,
    dp_succ,
    g,
    sigma,
    step,
    present,
    cap,
    ahat,
    bhat,
    cand_su,
    cand_tm,
    cand_nxt,
    stair_su,
    stair_tm,
    stair_nxt,
    keep,
):
    """One synchronous front sweep; returns the widest front written.

    Candidate order is: stop first, then successors by ascending id,
    then front slot; exact-tie winners are therefore deterministic
    (stop beats extension, lower successor id beats higher).
    """
    e_count = su_in.shape[0]
    k_out = su_out.shape[1]
    widest = 0
    for e in range(e_count):
        if not present[e]:
            cnt_out[e] = 0
            continue
        c = 1
        cand_su[0] = sigma[e]
        cand_tm[0] = 0.0
        cand_nxt[0] = np.int64(-1)
        se = step[e]
        for s in range(8):
            j = dp_succ[e, s]
            if j < 0:
                continue
            ge = g[e, s]
            for k in range(cnt_in[j]):
                cand_su[c] = sigma[e] + ge * su_in[j, k]
                cand_tm[c] = se + tm_in[j, k]
                cand_nxt[c] = j
                c += 1

        # Pareto staircase: strictly decreasing su, strictly increasing tm.
        n_st = 0
        best_tm = -1.0e300
        while True:
            m_su = -1.0e300
            m_tm = -1.0e300
            m_idx = -1
            for i in range(c):
                if cand_tm[i] > best_tm:
                    if cand_su[i] > m_su or (cand_su[i] == m_su and cand_tm[i] > m_tm):
                        m_su = cand_su[i]
                        m_tm = cand_tm[i]
                        m_idx = i
            if m_idx < 0:
                break
            stair_su[n_st] = m_su
            stair_tm[n_st] = m_tm
            stair_nxt[n_st] = cand_nxt[m_idx]
            n_st += 1
            best_tm = m_tm

        n_keep = n_st
        if 0 < cap < n_st:
            n_keep = cap
            for i in range(n_st):
                keep[i] = False
            for _ in range(cap):
                bb = -1.0e300
                bi = -1
                for i in range(n_st):
                    if not keep[i]:
                        v = ahat * stair_su[i] + bhat * stair_tm[i]
                        if v > bb:
                            bb = v
                            bi = i
                keep[bi] = True
            t = 0
            for i in range(n_st):
                if keep[i]:
                    su_out[e, t] = stair_su[i]
                    tm_out[e, t] = stair_tm[i]
                    nxt_out[e, t] = stair_nxt[i]
                    t += 1
        else:
            if n_keep > k_out:
                n_keep = k_out
            for i in range(n_keep):
                su_out[e, i] = stair_su[i]
                tm_out[e, i] = stair_tm[i]
                nxt_out[e, i] = stair_nxt[i]
        cnt_out[e] = n_keep
        if n_st > widest:
            widest = n_st
    return widest


def _run_scalar_su(tables, present, iterations):
    dp_succ, g, sigma, _, _ = tables
    phi = np.where(present, sigma, 0.0)
    bn = np.full(phi.shape[0], -1, dtype=np.int64)
    if iterations == 1:
        return phi, bn
    buf = np.empty_like(phi)
    for it in range(iterations - 1):
        if it == iterations - 2:
            _sweep_su_record(phi, buf, bn, dp_succ, g, sigma, present)
        else:
            _sweep_su(phi, buf, dp_succ, g, sigma, present)
        phi, buf = buf, phi
    return phi, bn


def _run_scalar_ms(tables, present, iterations):
    dp_succ, _, _, mloc, step = tables
    t = np.zeros(step.shape[0])
    bn = np.full(step.shape[0], -1, dtype=np.int64)
    if iterations > 1:
        buf = np.empty_like(t)
        for it in range(iterations - 1):
            if it == iterations - 2:
                _sweep_ms_record(t, buf, bn, dp_succ, step, present)
            else:
                _sweep_ms(t, buf, dp_succ, step, present)
            t, buf = buf, t
    phi = np.where(present, mloc + t, 0.0)
    return phi, bn


def _run_front(tables, present, p, ahat, bhat):
    dp_succ, g, sigma, _, step = tables
    e_count = sigma.shape[0]
    su = np.where(present, sigma, 0.0).reshape(e_count, 1).copy()
    tm = np.zeros((e_count, 1))
    nxt = np.full((e_count, 1), -1, dtype=np.int64)
    cnt = np.where(present, 1, 0).astype(np.int64)
    max_width = 1
    trimmed = False

    for _ in range(p.iterations - 1):
        k_in = su.shape[1]
        c_max = 1 + 7 * k_in
        k_out = c_max if p.front_cap == 0 else min(p.front_cap, c_max)
        if e_count * k_out > 50_000_000:
            raise CapacityError(
                f"uncapped front would need {e_count * k_out} slots; set front_cap"
            )
        su_out = np.zeros((e_count, k_out))
        tm_out = np.zeros((e_count, k_out))
        nxt_out = np.full((e_count, k_out), -1, dtype=np.int64)
        cnt_out = np.zeros(e_count, dtype=np.int64)
        widest = _sweep_front(
            su, tm, cnt, su_out, tm_out, nxt_out, cnt_out,
            dp_succ, g, sigma, step, present,
            p.front_cap, ahat, bhat,
            np.empty(c_max), np.empty(c_max), np.empty(c_max, dtype=np.int64),
            np.empty(c_max), np.empty(c_max), np.empty(c_max, dtype=np.int64),
            np.empty(c_max, dtype=np.bool_),
        )
        if p.front_cap and widest > p.front_cap:
            trimmed = True
        max_width = max(max_width, int(widest))
        k_used = int(cnt_out.max()) if cnt_out.size else 1
        k_used = max(k_used, 1)
        su, tm, nxt, cnt = su_out[:, :k_used], tm_out[:, :k_used], nxt_out[:, :k_used], cnt_out
    return su, tm, nxt, cnt, max_width, trimmed


def run_dp(lat: ElementLattice, vf: VelocityField, p: NetworkParams | None = None) -> SaliencyState:
    """Solve the saliency network over the lattice.

    Runs the exact scalar recurrences for both channels (these also
    provide the normalization divisors), then, when both weights are
    positive, the joint front recurrence for the blended objective.
    Updates are synchronous and double-buffered; ``best_next`` holds the
    argmax recorded at the final horizon, with exact ties broken in
    favor of stopping, then of the lowest successor id.
    """
    p = p or lat.params
    if (vf.vx.shape[0], vf.vx.shape[1]) != (lat.height, lat.width):
        raise ShapeError(
            f"velocity field {vf.vx.shape} does not cover the {lat.width}x{lat.height} lattice"
        )
    if p.ms_form != MS_FORM_ADJACENT:
        raise ParameterError(
            "run_dp supports only ms_form='adjacent'; the head-anchored form has no "
            "finite-state recurrence and is available through brute_force_max only"
        )

    present = lat.present
    tables = _solver_tables(lat, vf, p)
    phi_su, bn_su = _run_scalar_su(tables, present, p.iterations)
    phi_ms, bn_ms = _run_scalar_ms(tables, present, p.iterations)

    su_div = 1.0
    ms_div = 1.0
    if p.normalize_maps:
        su_max = float(phi_su[present].max()) if present.any() else 0.0
        ms_max = float(phi_ms[present].max()) if present.any() else 0.0
        su_div = su_max if su_max > 0.0 else 1.0
        ms_div = ms_max if ms_max > 0.0 else 1.0
    ahat = p.alpha / su_div
    bhat = p.beta / ms_div

    max_width = 1
    trimmed = False
    if p.beta == 0.0:
        phi = ahat * phi_su
        best_next = bn_su
    elif p.alpha == 0.0:
        phi = bhat * phi_ms
        best_next = bn_ms
    else:
        su, tm, nxt, cnt, max_width, trimmed = _run_front(tables, present, p, ahat, bhat)
        k = su.shape[1]
        blend = ahat * su + bhat * tm
        blend[np.arange(k)[None, :] >= cnt[:, None]] = -np.inf
        best_k = np.argmax(blend, axis=1)
        rows = np.arange(blend.shape[0])
        mloc = tables[3]
        phi = np.where(present, blend[rows, best_k] + bhat * mloc, 0.0)
        best_next = np.where(present, nxt[rows, best_k], -1)

    if not np.isfinite(phi[present]).all():
        bad = int(np.flatnonzero(present & ~np.isfinite(phi))[0])
        raise NumericError(f"non-finite saliency accumulated at element {bad}")

    return SaliencyState(
        phi=phi,
        best_next=best_next.astype(np.int64),
        head_orientation=lat.orientation.copy(),
        iteration=p.iterations,
        phi_su=phi_su,
        phi_ms=phi_ms,
        su_divisor=su_div,
        ms_divisor=ms_div,
        max_front_width=max_width,
        front_trimmed=trimmed,
    )


def backtrack(state: SaliencyState, lat: ElementLattice, start: int, max_steps: int) -> BacktrackResult:
    """Follow best-successor pointers from ``start``.

    Stops at a missing pointer, after ``max_steps`` elements, or when
    the path would revisit a pixel; the latter is reported as a closed
    loop together with the index at which the path first touched the
    revisited pixel.
    """
    if not (0 <= start < lat.capacity) or not lat.present[start]:
        raise TopologyError(f"element {start} does not exist")
    fx, fy = lat.from_pixels()
    tx, ty = lat.to_pixels()

    ids = [int(start)]
    pixels = [(int(fx[start]), int(fy[start]))]
    seen = {pixels[0]: 0}
    e = int(start)
    closed = False
    revisit = None
    while True:
        q = (int(tx[e]), int(ty[e]))
        if q in seen:
            closed = True
            revisit = seen[q]
            break
        pixels.append(q)
        seen[q] = len(pixels) - 1
        nxt = int(state.best_next[e])
        if nxt < 0 or len(ids) >= max_steps:
            break
        ids.append(nxt)
        e = nxt
    return BacktrackResult(curve=Curve(tuple(ids)), pixels=pixels, closed=closed, revisit_index=revisit)


def _oracle_tables(lat: ElementLattice, vf: VelocityField, p: NetworkParams):
    """Per-element tables built from the scalar measure primitives.

    Deliberately independent of the solver's vectorized tables: every
    entry comes from individual ``measures`` calls, so the oracle and
    the solver share only the measure definitions.
    """
    ids = lat.element_ids()
    index_of = {int(e): i for i, e in enumerate(ids)}
    n = len(ids)
    succ = np.full((n, 7), -1, dtype=np.int64)
    g = np.zeros((n, 7))
    step = np.zeros(n)
    mloc = np.zeros(n)
    sigma = np.zeros(n)

    for i, eid in enumerate(ids):
        el = lat.element(int(eid))
        sigma[i] = el.sigma
        v_from = (vf.vx[el.from_pixel[1], el.from_pixel[0]], vf.vy[el.from_pixel[1], el.from_pixel[0]])
        v_to = (vf.vx[el.to_pixel[1], el.to_pixel[0]], vf.vy[el.to_pixel[1], el.to_pixel[0]])
        mloc[i] = magnitude(v_from)
        s = magnitude(v_to) * angular_distance(v_from, v_to) * spatial_distance(v_from, v_to, p.lambda2)
        if p.clamp_ms and s < 0.0:
            s = 0.0
        step[i] = s
        rev = lat.reversal_of(int(eid))
        col = 0
        for j in lat.successors(int(eid)):
            if int(j) == rev:
                continue
            sj = lat.element(int(j))
            g[i, col] = curvature_factor(el, sj, p.curvature_scale) * sj.rho
            succ[i, col] = index_of[int(j)]
            col += 1
    return ids, succ, g, step, mloc, sigma


def _oracle_head_terms(lat: ElementLattice, vf: VelocityField, p: NetworkParams):
    """term[head_pixel, pixel] for the head-anchored motion form."""
    n_pix = lat.width * lat.height
    vx = vf.vx.reshape(-1)
    vy = vf.vy.reshape(-1)
    term = np.zeros((n_pix, n_pix))
    for hp in range(n_pix):
        vh = (vx[hp], vy[hp])
        m0 = magnitude(vh)
        for q in range(n_pix):
            vq = (vx[q], vy[q])
            t = m0 * angular_distance(vh, vq) * spatial_distance(vh, vq, p.lambda2)
            if p.clamp_ms and t < 0.0:
                t = 0.0
            term[hp, q] = t
    return term


def brute_force_max(
    lat: ElementLattice,
    vf: VelocityField,
    p: NetworkParams | None = None,
    max_len: int = 5,
) -> tuple[float, Curve]:
    """Exhaustive maximum of the blended measure over short curves.

    Enumerates every connected, non-backtracking curve of 1..max_len
    elements from every element and returns the best blended value with
    a witnessing curve. Guarded against combinatorial blow-up; intended
    for small lattices as the solver's correctness oracle.
    """
    p = p or lat.params
    if max_len < 1:
        raise ParameterError(f"max_len must be >= 1, got {max_len}")
    n = lat.n_elements
    if n * (7 ** max_len) > 10_000_000:
        raise CapacityError(
            f"{n} elements with curves up to {max_len} exceeds the enumeration guard"
        )

    ids, succ, g, step, mloc, sigma = _oracle_tables(lat, vf, p)
    head_anchored = p.ms_form != MS_FORM_ADJACENT
    if head_anchored:
        term = _oracle_head_terms(lat, vf, p)
        fx, fy = lat.from_pixels()
        pix_of = (fy[ids] * lat.width + fx[ids]).astype(np.int64)
        tx, ty = lat.to_pixels()
        to_pix_of = (ty[ids] * lat.width + tx[ids]).astype(np.int64)

    n0 = len(ids)
    levels = []
    last = np.arange(n0)
    su = sigma.copy()
    att = np.ones(n0)
    if head_anchored:
        head = np.arange(n0)
        ms = term[pix_of, pix_of]
    else:
        head = None
        ms = mloc.copy()
    parent = np.full(n0, -1, dtype=np.int64)
    levels.append((last, su, ms, parent))

    for _ in range(1, max_len):
        rows = succ[last]  # [P, 7]
        ok = rows >= 0
        pi, si = np.nonzero(ok)
        if pi.size == 0:
            break
        child = rows[pi, si]
        att_new = att[pi] * g[last[pi], si]
        su_new = su[pi] + att_new * sigma[child]
        if head_anchored:
            head_new = head[pi]
            ms_new = ms[pi] + term[pix_of[head_new], to_pix_of[last[pi]]]
        else:
            head_new = None
            ms_new = ms[pi] + step[last[pi]]
        levels.append((child, su_new, ms_new, pi))
        last, su, ms, att = child, su_new, ms_new, att_new
        if head_anchored:
            head = head_new

    su_div = 1.0
    ms_div = 1.0
    if p.normalize_maps:
        su_max = max(float(lv[1].max()) for lv in levels)
        ms_max = max(float(lv[2].max()) for lv in levels)
        su_div = su_max if su_max > 0.0 else 1.0
        ms_div = ms_max if ms_max > 0.0 else 1.0
    ahat = p.alpha / su_div
    bhat = p.beta / ms_div

    best_val = -np.inf
    best_level = -1
    best_idx = -1
    for li, (_, su_l, ms_l, _) in enumerate(levels):
        vals = ahat * su_l + bhat * ms_l
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_level = li
            best_idx = i

    chain = []
    li, i = best_level, best_idx
    while li >= 0:
        chain.append(int(levels[li][0][i]))
        i = int(levels[li][3][i])
        li -= 1
    chain.reverse()
    witness = Curve(tuple(int(ids[c]) for c in chain))
    return best_val, witness


def random_instance(
    width: int,
    height: int,
    seed: int,
    params: NetworkParams | None = None,
    edge_density: float = 0.3,
    invalid_fraction: float = 0.1,
) -> tuple[ElementLattice, VelocityField]:
    """Seeded random edge map and velocity field for oracle checks."""
    from .imgproc import EdgeMap
    from .lattice import build_lattice

    params = params or NetworkParams()
    rng = np.random.default_rng(seed)
    edge = rng.random((height, width)) < edge_density
    angle = rng.uniform(0.0, np.pi, size=(height, width))
    mag = np.where(edge, rng.uniform(0.2, 1.0, size=(height, width)), 0.0)
    lat = build_lattice(EdgeMap(edge=edge, gradient_angle=angle, gradient_magnitude=mag), params)

    valid = rng.random((height, width)) >= invalid_fraction
    vx = np.where(valid, rng.uniform(-0.9, 0.9, size=(height, width)), 0.0)
    vy = np.where(valid, rng.uniform(-0.9, 0.9, size=(height, width)), 0.0)
    vf = VelocityField(vx=vx, vy=vy, valid=valid)
    return lat, vf
