"""The reference region: membership, ray exits, flat intervals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial.distance import pdist

from .errors import NoExit, TangentRay
from .geometry_core import (ArcCurve, CircleArc, PiecewiseCurve, Segment, SampledCurve, as_params,
                            cross2, darboux_reference, dot, periodic_gap, points_in_polygon, rot90)

TANGENT_TOL = 1e-8
SCAN_SAMPLES = 2048

RAY_OK, RAY_TANGENT, RAY_NO_EXIT = 0, 1, 2


@dataclass(frozen=True)
class Membership:
    kind: str                    # "interior", "boundary" or "exterior"
    alpha: float | None = None   # nearest boundary parameter when kind == "boundary"
    distance: float = 0.0


class BoundaryRegion:
    """Simply connected planar region bounded by a counterclockwise :class:`ArcCurve`."""

    def __init__(self, boundary: ArcCurve, scan_samples: int = SCAN_SAMPLES, check_simple: bool = True):
        if boundary.dim != 2:
            raise ValueError("region boundary must be planar")
        self.boundary = boundary
        self.length = boundary.length
        self.corners = boundary.corners
        joints = getattr(boundary, "joints", boundary.corners)
        grid = boundary.grid(scan_samples)
        self._scan_alpha = np.unique(np.concatenate([grid, np.asarray(joints, dtype=float)]))
        self._scan_pts = boundary.point(self._scan_alpha, 1)
        pts = self._scan_pts
        self.bbox = (pts.min(axis=0), pts.max(axis=0))
        sub = pts[:: max(1, len(pts) // 1024)]
        extremes = np.vstack([sub, boundary.point(np.asarray(joints, dtype=float), 1)]) if len(joints) else sub
        self.diameter = float(pdist(extremes).max())
        area = 0.5 * float(np.sum(cross2(pts, np.roll(pts, -1, axis=0))))
        if area <= 0.0:
            raise ValueError("boundary must be traversed counterclockwise")
        self.area_estimate = area
        if check_simple and not _polyline_simple(sub):
            raise ValueError("boundary is self-intersecting at sample resolution")
        self.eps_boundary = 1e-9 * self.diameter
        self.eps_flat = (1e-8 / self.diameter) if boundary.analytic else 1e-4
        self.tangent_tol = TANGENT_TOL
        self._sag = self._chord_sag()

    # -- inventories -------------------------------------------------------

    def _chord_sag(self) -> float:
        a = self._scan_alpha
        mids = 0.5 * (a + np.roll(a, -1))
        mids[-1] = 0.5 * (a[-1] + self.length)
        p0 = self._scan_pts
        p1 = np.roll(p0, -1, axis=0)
        pm = self.boundary.point(mids, 1)
        return float(np.max(np.abs(cross2(p1 - p0, pm - p0)) / np.maximum(np.linalg.norm(p1 - p0, axis=1), 1e-300)))

    def flat_intervals(self) -> list[tuple[float, float]]:
        """Maximal arclength intervals on which the boundary curvature vanishes.

        Intervals are split at corners.  An interval that wraps past the
        origin is returned with its right end beyond ``length``.
        """
        curve = self.boundary
        if isinstance(curve, PiecewiseCurve):
            flags = [isinstance(p, Segment) for p in curve.pieces]
            starts = list(curve.starts)
            ends = [s + p.length for s, p in zip(starts, curve.pieces)]
            breaks = set(np.round(curve.corners, 12))
            return _merge_runs(flags, starts, ends, breaks, self.length)
        alpha = np.arange(len(curve.samples)) * curve.h if isinstance(curve, SampledCurve) else curve.grid(SCAN_SAMPLES)
        kappa = np.maximum(np.abs(darboux_reference(curve, alpha, 1).curvature),
                           np.abs(darboux_reference(curve, alpha, -1).curvature))
        flags = list(kappa < self.eps_flat)
        step = self.length / len(alpha)
        starts = list(alpha)
        ends = list(alpha + step)
        # a sample run covers [first, last]; the cell-based merge adds one step
        runs = _merge_runs(flags, starts, ends, set(np.round(curve.corners, 12)), self.length)
        return [(a, b - step) for a, b in runs if b - step > a]

    # -- membership ---------------------------------------------------------

    def nearest(self, x) -> tuple[float, float]:
        """Nearest boundary parameter and distance for a single point."""
        x = np.asarray(x, dtype=float)
        d2 = np.sum((self._scan_pts - x) ** 2, axis=1)
        i = int(np.argmin(d2))
        a = self._scan_alpha
        n = len(a)
        best = (float(a[i]), float(np.sqrt(d2[i])))
        for lo, hi in ((a[i - 1] if i > 0 else a[-1] - self.length, a[i]),
                       (a[i], a[i + 1] if i + 1 < n else self.length)):
            side = 1

            def dist2(s):
                return float(np.sum((self.boundary.point(s, side)[0] - x) ** 2))

            res = minimize_scalar(dist2, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-14 * max(self.length, 1.0)})
            for s in (res.x, lo, hi):
                dist = np.sqrt(dist2(s))
                if dist < best[1]:
                    best = (float(np.mod(s, self.length)), float(dist))
        return best

    def contains(self, x) -> Membership:
        alpha, dist = self.nearest(x)
        if dist < self.eps_boundary:
            return Membership("boundary", alpha, dist)
        inside = self._inside_polygon(np.asarray(x, dtype=float)[None, :])[0]
        if dist <= 4.0 * self._sag + self.eps_boundary:
            inside = self._inside_by_normal(np.asarray(x, dtype=float), alpha)
        return Membership("interior" if inside else "exterior", None, dist)

    def _inside_polygon(self, xs: np.ndarray) -> np.ndarray:
        return points_in_polygon(xs, self._scan_pts)

    def _inside_by_normal(self, x: np.ndarray, alpha: float) -> bool:
        curve = self.boundary
        if curve.is_corner(alpha, 1e-9 * self.length)[0]:
            t_in = curve.tangent(alpha, -1)[0]
            t_out = curve.tangent(alpha, 1)[0]
            # nearest point at a vertex: exterior for convex corners, interior for reflex ones
            return bool(cross2(t_in, t_out) < 0)
        tan = curve.tangent(alpha, 1)[0]
        return bool(dot(x - curve.point(alpha, 1)[0], rot90(tan)) > 0)

    # -- rays -----------------------------------------------------------------

    def ray_exit(self, alpha0: float, direction, side: int = 1) -> tuple[float, float]:
        beta, exit_alpha, status = self.ray_exit_many(np.array([alpha0]), np.asarray(direction, dtype=float)[None, :], side)
        if status[0] == RAY_TANGENT:
            raise TangentRay(f"direction is tangent to the boundary at alpha={alpha0}")
        if status[0] == RAY_NO_EXIT:
            raise NoExit(f"no boundary exit found from alpha={alpha0}")
        return float(beta[0]), float(exit_alpha[0])

    def ray_exit_many(self, alpha0, directions: np.ndarray, side: int = 1, chunk: int = 256):
        """Vectorized ray exits; returns ``(beta, exit_alpha, status)`` arrays."""
        alpha0 = as_params(alpha0)
        directions = np.asarray(directions, dtype=float)
        count = len(alpha0)
        beta = np.full(count, np.nan)
        exit_alpha = np.full(count, np.nan)
        status = np.full(count, RAY_NO_EXIT, dtype=int)
        frame = darboux_reference(self.boundary, alpha0, side)
        origin = self.boundary.point(alpha0, side)
        tangent_like = dot(directions, frame.inward) <= self.tangent_tol
        status[tangent_like] = RAY_TANGENT
        todo = np.flatnonzero(~tangent_like)
        for start in range(0, len(todo), chunk):
            idx = todo[start:start + chunk]
            b, a, ok = self._exit_chunk(alpha0[idx], origin[idx], directions[idx])
            beta[idx], exit_alpha[idx] = b, a
            status[idx] = np.where(ok, RAY_OK, RAY_NO_EXIT)
        return beta, exit_alpha, status

    def _exit_chunk(self, alpha0, origin, dirs):
        sa = self._scan_alpha
        pts = self._scan_pts
        # lateral offset of each scan point for each ray
        lat = (dirs[:, 0:1] * (pts[None, :, 1] - origin[:, 1:2])
               - dirs[:, 1:2] * (pts[None, :, 0] - origin[:, 0:1]))
        sgn = np.sign(lat)
        sgn_next = np.empty_like(sgn)
        sgn_next[:, :-1] = sgn[:, 1:]
        sgn_next[:, -1] = sgn[:, 0]
        lo_a = sa
        hi_a = np.append(sa[1:], self.length)
        change = (sgn * sgn_next <= 0) & ~((sgn == 0) & (sgn_next == 0))
        # brackets touching the foot are excluded: the cell holding it, plus a
        # neighbour when the foot sits on a scan node
        m = len(sa)
        foot = np.mod(alpha0, self.length)
        cell = np.clip(np.searchsorted(sa, foot, side="right") - 1, 0, m - 1)
        snap = 1e-12 * self.length
        rows = np.arange(len(alpha0))
        change[rows, cell] = False
        at_lo = periodic_gap(sa[cell], foot, self.length) < snap
        change[rows[at_lo], (cell[at_lo] - 1) % m] = False
        at_hi = periodic_gap(hi_a[cell], foot, self.length) < snap
        change[rows[at_hi], (cell[at_hi] + 1) % m] = False
        rays, cells = np.nonzero(change)
        nxt = (cells + 1) % m
        fwd = np.einsum("ri,ri->r", pts[cells] - origin[rays], dirs[rays])
        fwd_next = np.einsum("ri,ri->r", pts[nxt] - origin[rays], dirs[rays])
        ahead = np.maximum(fwd, fwd_next) > 1e-12 * self.diameter
        rays, cells, nxt = rays[ahead], cells[ahead], nxt[ahead]
        lat_cells, lat_next_cells = lat[rays, cells], lat[rays, nxt]
        n_rays = len(alpha0)
        beta = np.full(n_rays, np.inf)
        exit_alpha = np.full(n_rays, np.nan)
        if rays.size == 0:
            return beta, exit_alpha, np.zeros(n_rays, dtype=bool)
        root, resid = self._polish(origin[rays], dirs[rays], lo_a[cells], hi_a[cells],
                                   lat_cells, lat_next_cells)
        side_pts = self.boundary.point(root, 1)
        b = np.einsum("ri,ri->r", side_pts - origin[rays], dirs[rays])
        good = (resid < 1e-12 * self.diameter) & (b > 1e-12 * self.diameter)
        good &= periodic_gap(root, alpha0[rays], self.length) > 1e-10 * self.length
        for r, bb, aa, g in zip(rays, b, root, good):
            if g and bb < beta[r]:
                beta[r] = bb
                exit_alpha[r] = aa
        ok = np.isfinite(beta)
        return beta, np.mod(exit_alpha, self.length), ok

    def _polish(self, origin, dirs, lo, hi, f_lo, f_hi, iters: int = 80):
        """Safeguarded Newton on the lateral offset inside each bracket."""
        lo = lo.copy()
        hi = hi.copy()
        f_lo = f_lo.copy()
        x = np.where(f_hi != f_lo, lo - f_lo * (hi - lo) / np.where(f_hi != f_lo, f_hi - f_lo, 1.0), 0.5 * (lo + hi))
        x = np.clip(x, lo, hi)
        exact_lo = f_lo == 0
        exact_hi = f_hi == 0
        x[exact_lo] = lo[exact_lo]
        x[exact_hi] = hi[exact_hi]
        active = ~(exact_lo | exact_hi)
        mid_side = 1
        for _ in range(iters):
            if not np.any(active):
                break
            pos, vel, _ = self.boundary.jet(x, mid_side)
            val = cross2(dirs, pos - origin)
            der = cross2(dirs, vel)
            # shrink the bracket
            same = np.sign(val) == np.sign(f_lo)
            lo = np.where(active & same, x, lo)
            f_lo = np.where(active & same, val, f_lo)
            hi = np.where(active & ~same, x, hi)
            step = np.where(der != 0, val / np.where(der != 0, der, 1.0), np.inf)
            cand = x - step
            bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
            cand = np.where(bad, 0.5 * (lo + hi), cand)
            done = (np.abs(val) < 1e-15 * self.diameter) | (hi - lo < 1e-15 * self.length)
            x = np.where(active & ~done, cand, x)
            active &= ~done
        pos = self.boundary.point(x, 1)
        resid = np.abs(cross2(dirs, pos - origin))
        return x, resid


def _merge_runs(flags, starts, ends, breaks, length):
    """Merge consecutive flagged cells, splitting at ``breaks`` and wrapping around."""
    n = len(flags)
    if n == 0 or not any(flags):
        return []
    if all(flags) and not breaks:
        return [(0.0, length)]
    runs = []
    cur = None
    for k in range(n):
        if flags[k]:
            if cur is not None and round(starts[k], 12) not in breaks:
                cur[1] = ends[k]
            else:
                if cur is not None:
                    runs.append(cur)
                cur = [starts[k], ends[k]]
        else:
            if cur is not None:
                runs.append(cur)
                cur = None
    if cur is not None:
        runs.append(cur)
    if len(runs) > 1 and flags[0] and flags[-1] and round(0.0, 12) not in breaks and runs[0][0] == starts[0]:
        first = runs.pop(0)
        runs[-1][1] = first[1] + length
    return [(float(a), float(b)) for a, b in runs]


def _polyline_simple(pts: np.ndarray, chunk: int = 256) -> bool:
    p0 = pts
    p1 = np.roll(pts, -1, axis=0)
    n = len(pts)
    idx = np.arange(n)
    for s in range(0, n, chunk):
        a0, a1 = p0[s:s + chunk, None, :], p1[s:s + chunk, None, :]
        b0, b1 = p0[None, :, :], p1[None, :, :]
        o1 = cross2(a1 - a0, b0 - a0)
        o2 = cross2(a1 - a0, b1 - a0)
        o3 = cross2(b1 - b0, a0 - b0)
        o4 = cross2(b1 - b0, a1 - b0)
        hit = (o1 * o2 < 0) & (o3 * o4 < 0)
        i = idx[s:s + chunk, None]
        j = idx[None, :]
        adjacent = (np.abs(i - j) <= 1) | (np.abs(i - j) == n - 1)
        if np.any(hit & ~adjacent):
            return False
    return True


# convenience constructors used by presets and tests

def polygon(vertices) -> PiecewiseCurve:
    v = [np.asarray(p, dtype=float) for p in vertices]
    return PiecewiseCurve([Segment(v[k], v[(k + 1) % len(v)]) for k in range(len(v))])


def rectangle(length: float, width: float) -> PiecewiseCurve:
    return polygon([(0, 0), (length, 0), (length, width), (0, width)])


def circle(radius: float, center=(0.0, 0.0), start_angle: float = 0.0) -> PiecewiseCurve:
    return PiecewiseCurve([CircleArc(center, radius, start_angle, 2 * np.pi)])
