"""Arclength curves with their Darboux frames, plus small vector helpers.

Every curve is parameterized by arclength on a periodic interval ``[0, length)``.
Evaluators are vectorized: they accept a scalar or a 1-D array of arclengths and
return arrays whose leading axis runs over the requested parameters.  At a
corner the caller picks a side: ``side=+1`` gives the limit from above (the
piece that starts there), ``side=-1`` the limit from below.

Sign conventions: the reference plane is ``z = 0`` with unit normal ``+e_z``.
Boundaries run counterclockwise, so the inward conormal is ``e_z x T``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import CornerPoint

UP = np.array([0.0, 0.0, 1.0])
CORNER_ANGLE = 1e-3
CURVATURE_SLACK = 4.0
UNIT_TOL_ANALYTIC = 1e-10
UNIT_TOL_SAMPLED = 1e-6


# --------------------------------------------------------------------------
# small vector algebra on stacked arrays
# --------------------------------------------------------------------------

def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", a, b)


def norm(a: np.ndarray) -> np.ndarray:
    return np.sqrt(dot(a, a))


def unit(a: np.ndarray) -> np.ndarray:
    return a / norm(a)[..., None]


def cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Scalar cross product of planar vectors."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def rot90(v: np.ndarray) -> np.ndarray:
    """Planar rotation by +90 degrees, i.e. ``e_z x v``."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def lift(v: np.ndarray) -> np.ndarray:
    """Embed planar vectors into 3-space at ``z = 0``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3,))
    out[..., :2] = v
    return out


def as_params(alpha) -> np.ndarray:
    return np.atleast_1d(np.asarray(alpha, dtype=float))


def periodic_gap(a: np.ndarray, b: np.ndarray, length: float) -> np.ndarray:
    """Unsigned distance between arclengths on a circle of the given length."""
    d = np.mod(np.asarray(a) - np.asarray(b), length)
    return np.minimum(d, length - d)


def signed_gap(a: np.ndarray, b: np.ndarray, length: float) -> np.ndarray:
    """Representative of ``a - b`` in ``[-length/2, length/2)``."""
    return np.mod(np.asarray(a) - np.asarray(b) + 0.5 * length, length) - 0.5 * length


# --------------------------------------------------------------------------
# analytic pieces
# --------------------------------------------------------------------------

class Segment:
    """Straight piece from ``start`` to ``end`` traversed at unit speed."""

    def __init__(self, start: Sequence[float], end: Sequence[float]):
        self.start = np.asarray(start, dtype=float)
        self.end = np.asarray(end, dtype=float)
        delta = self.end - self.start
        self.length = float(np.linalg.norm(delta))
        if self.length <= 0.0:
            raise ValueError("degenerate segment")
        self.direction = delta / self.length

    def jet(self, u: np.ndarray):
        pos = self.start + u[:, None] * self.direction
        vel = np.broadcast_to(self.direction, pos.shape).copy()
        return pos, vel, np.zeros_like(pos)


class CircleArc:
    """Planar circular piece.

    ``sweep`` is the signed turning angle: positive runs counterclockwise
    around ``center``.
    """

    def __init__(self, center: Sequence[float], radius: float, start_angle: float, sweep: float):
        if radius <= 0.0 or sweep == 0.0:
            raise ValueError("degenerate arc")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.start_angle = float(start_angle)
        self.orient = 1.0 if sweep > 0 else -1.0
        self.length = self.radius * abs(float(sweep))

    def jet(self, u: np.ndarray):
        th = self.start_angle + self.orient * u / self.radius
        radial = np.stack([np.cos(th), np.sin(th)], axis=-1)
        pos = self.center + self.radius * radial
        vel = self.orient * rot90(radial)
        acc = -radial / self.radius
        return pos, vel, acc


# --------------------------------------------------------------------------
# curves
# --------------------------------------------------------------------------

class ArcCurve:
    """Closed arclength curve with finitely many corners.

    Subclasses implement :meth:`jet`, returning the position together with
    its first two derivatives.  ``corners`` is a sorted array of arclengths; ``analytic``
    records whether derivatives are exact or come from difference stencils.
    """

    periodic = True

    def __init__(self, length: float, corners: Sequence[float], analytic: bool, dim: int):
        self.length = float(length)
        self.corners = np.sort(np.asarray(corners, dtype=float))
        self.analytic = analytic
        self.dim = dim

    @property
    def unit_tol(self) -> float:
        return UNIT_TOL_ANALYTIC if self.analytic else UNIT_TOL_SAMPLED

    def wrap(self, alpha) -> np.ndarray:
        a = np.mod(as_params(alpha), self.length)
        return np.where(a >= self.length, 0.0, a)

    def jet(self, alpha, side: int = 1):
        raise NotImplementedError

    def point(self, alpha, side: int = 1) -> np.ndarray:
        return self.jet(alpha, side)[0]

    def tangent(self, alpha, side: int = 1) -> np.ndarray:
        return self.jet(alpha, side)[1]

    def corner_distance(self, alpha) -> np.ndarray:
        a = as_params(alpha)
        if self.corners.size == 0:
            return np.full(a.shape, np.inf)
        return periodic_gap(a[:, None], self.corners[None, :], self.length).min(axis=1)

    def is_corner(self, alpha, tol: float | None = None) -> np.ndarray:
        if tol is None:
            tol = 1e-12 * self.length
        return self.corner_distance(alpha) <= tol

    def grid(self, n: int) -> np.ndarray:
        return np.arange(n) * (self.length / n)


class PiecewiseCurve(ArcCurve):
    """Concatenation of analytic pieces, closed end to start.

    Corners are the joints where the tangent turns by more than
    ``CORNER_ANGLE``; smaller turns are treated as smooth joints.
    """

    def __init__(self, pieces: Sequence, close_tol: float = 1e-9):
        self.pieces = list(pieces)
        lengths = np.array([p.length for p in self.pieces])
        self.starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
        total = float(lengths.sum())
        first = self.pieces[0].jet(np.array([0.0]))
        last = self.pieces[-1].jet(np.array([self.pieces[-1].length]))
        if np.linalg.norm(first[0][0] - last[0][0]) > close_tol * max(total, 1.0):
            raise ValueError("pieces do not close up")
        dim = first[0].shape[1]
        corners = []
        for k, p in enumerate(self.pieces):
            prev = self.pieces[k - 1]
            t_in = prev.jet(np.array([prev.length]))[1][0]
            t_out = p.jet(np.array([0.0]))[1][0]
            if _turn_angle(t_in, t_out) > CORNER_ANGLE:
                corners.append(self.starts[k])
        super().__init__(total, corners, analytic=True, dim=dim)
        self.joints = self.starts.copy()

    def _locate(self, a: np.ndarray, side: int):
        n = len(self.pieces)
        if side >= 0:
            idx = np.searchsorted(self.starts, a, side="right") - 1
            u = a - self.starts[idx]
        else:
            idx = np.searchsorted(self.starts, a, side="left") - 1
            u = np.where(idx < 0, a + self.length - self.starts[-1], a - self.starts[np.maximum(idx, 0)])
            idx = np.where(idx < 0, n - 1, idx)
        return idx, u

    def jet(self, alpha, side: int = 1):
        a = self.wrap(alpha)
        idx, u = self._locate(a, side)
        pos = np.empty((a.size, self.dim))
        vel = np.empty_like(pos)
        acc = np.empty_like(pos)
        for k, piece in enumerate(self.pieces):
            sel = idx == k
            if np.any(sel):
                uu = np.clip(u[sel], 0.0, piece.length)
                pos[sel], vel[sel], acc[sel] = piece.jet(uu)
        return pos, vel, acc


def _turn_angle(t_in: np.ndarray, t_out: np.ndarray) -> float:
    a = np.asarray(t_in, dtype=float)
    b = np.asarray(t_out, dtype=float)
    if a.size == 2:
        return abs(float(np.arctan2(cross2(a, b), dot(a, b))))
    return float(np.arctan2(np.linalg.norm(np.cross(a, b)), dot(a, b)))


class SampledCurve(ArcCurve):
    """Curve given by uniform samples ``points[i] = c(i * length / N)``.

    Derivatives use fourth-order central differences, switching to
    second-order stencils that do not reach across a corner.  Between samples
    the position is a cubic Hermite interpolant of the sampled values and
    derivatives; second derivatives are interpolated linearly.
    """

    def __init__(self, points: np.ndarray, length: float, corners: Sequence[float] | None = None):
        pts = np.asarray(points, dtype=float)
        n = pts.shape[0]
        if n < 8:
            raise ValueError("need at least 8 samples")
        self.samples = pts
        self.h = float(length) / n
        if corners is None:
            corner_idx = detect_corners(pts, self.h)
        else:
            corner_idx = _snap_corners(np.asarray(corners, dtype=float), self.h, n)
        self.corner_index = np.array(sorted(set(int(i) for i in corner_idx)), dtype=int)
        super().__init__(length, self.corner_index * self.h, analytic=False, dim=pts.shape[1])
        self._build_derivatives()

    def _build_derivatives(self) -> None:
        p = self.samples
        n = p.shape[0]
        h = self.h
        ext = lambda i: p[np.mod(i, n)]
        d1 = (ext(np.arange(n) - 2) - 8 * ext(np.arange(n) - 1)
              + 8 * ext(np.arange(n) + 1) - ext(np.arange(n) + 2)) / (12 * h)
        d2 = (-ext(np.arange(n) - 2) + 16 * ext(np.arange(n) - 1) - 30 * p
              + 16 * ext(np.arange(n) + 1) - ext(np.arange(n) + 2)) / (12 * h * h)
        d1p, d1m, d2p, d2m = d1.copy(), d1.copy(), d2.copy(), d2.copy()
        cidx = self.corner_index
        for k, a in enumerate(cidx):
            b = cidx[(k + 1) % len(cidx)]
            if b <= a:
                b += n
            if b - a < 4:
                raise ValueError("fewer than four samples between corners")
            fwd1 = (-3 * ext(a) + 4 * ext(a + 1) - ext(a + 2)) / (2 * h)
            fwd2 = (2 * ext(a) - 5 * ext(a + 1) + 4 * ext(a + 2) - ext(a + 3)) / (h * h)
            bwd1 = (3 * ext(b) - 4 * ext(b - 1) + ext(b - 2)) / (2 * h)
            bwd2 = (2 * ext(b) - 5 * ext(b - 1) + 4 * ext(b - 2) - ext(b - 3)) / (h * h)
            d1p[a % n], d2p[a % n] = fwd1, fwd2
            d1m[b % n], d2m[b % n] = bwd1, bwd2
            for j in (a + 1, b - 1):
                jj = j % n
                c1 = (ext(j + 1) - ext(j - 1)) / (2 * h)
                c2 = (ext(j + 1) - 2 * ext(j) + ext(j - 1)) / (h * h)
                d1p[jj] = d1m[jj] = c1
                d2p[jj] = d2m[jj] = c2
        self._d1p, self._d1m, self._d2p, self._d2m = d1p, d1m, d2p, d2m

    def jet(self, alpha, side: int = 1):
        a = self.wrap(alpha)
        n = self.samples.shape[0]
        s = a / self.h
        i0 = np.floor(s).astype(int)
        frac = s - i0
        on_sample = frac < 1e-12
        near_next = frac > 1 - 1e-12
        i0 = np.where(near_next, i0 + 1, i0)
        frac = np.where(near_next | on_sample, 0.0, frac)
        exact = near_next | on_sample
        if side < 0:
            # at an exact sample the limit from below belongs to the previous cell
            i0 = np.where(exact, i0 - 1, i0)
            frac = np.where(exact, 1.0, frac)
        i0 = np.mod(i0, n)
        i1 = np.mod(i0 + 1, n)
        p0, p1 = self.samples[i0], self.samples[i1]
        m0, m1 = self._d1p[i0] * self.h, self._d1m[i1] * self.h
        f = frac[:, None]
        h00 = 2 * f**3 - 3 * f**2 + 1
        h10 = f**3 - 2 * f**2 + f
        h01 = -2 * f**3 + 3 * f**2
        h11 = f**3 - f**2
        pos = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1
        dh00 = 6 * f**2 - 6 * f
        dh10 = 3 * f**2 - 4 * f + 1
        dh01 = -6 * f**2 + 6 * f
        dh11 = 3 * f**2 - 2 * f
        vel = (dh00 * p0 + dh10 * m0 + dh01 * p1 + dh11 * m1) / self.h
        acc = (1 - f) * self._d2p[i0] + f * self._d2m[i1]
        # exact samples use the stencil values directly
        hit0 = frac == 0.0
        hit1 = frac == 1.0
        vel[hit0] = self._d1p[i0[hit0]]
        acc[hit0] = self._d2p[i0[hit0]]
        vel[hit1] = self._d1m[i1[hit1]]
        acc[hit1] = self._d2m[i1[hit1]]
        return pos, vel, acc


def detect_corners(points: np.ndarray, h: float, angle: float = CORNER_ANGLE) -> np.ndarray:
    """Sample indices where one-sided tangents disagree by more than ``angle``.

    Each sample gets a backward and a forward second-order tangent.  At a
    smooth point they agree to second order in the spacing, but across a jump
    in curvature they disagree by up to about ``h`` times the curvature, so a
    sample only counts as a corner when the disagreement also exceeds
    ``CURVATURE_SLACK * h`` times the chord curvature seen three and four
    samples away on either side, outside the reach of the stencils.  Flagged
    samples within three of a larger disagreement are dropped, which leaves
    one sample per corner.
    """
    p = np.asarray(points, dtype=float)
    n = p.shape[0]
    ext = lambda i: p[np.mod(i, n)]
    idx = np.arange(n)
    back = (3 * p - 4 * ext(idx - 1) + ext(idx - 2)) / (2 * h)
    fwd = (-3 * p + 4 * ext(idx + 1) - ext(idx + 2)) / (2 * h)
    chord_in = p - ext(idx - 1)
    chord_out = ext(idx + 1) - p
    if p.shape[1] == 2:
        turn = np.abs(np.arctan2(cross2(back, fwd), dot(back, fwd)))
        chord_turn = np.abs(np.arctan2(cross2(chord_in, chord_out), dot(chord_in, chord_out)))
    else:
        turn = np.arctan2(norm(np.cross(back, fwd)), dot(back, fwd))
        chord_turn = np.arctan2(norm(np.cross(chord_in, chord_out)), dot(chord_in, chord_out))
    nearby = np.max([chord_turn[np.mod(idx + k, n)] for k in (-4, -3, 3, 4)], axis=0) / h
    flagged = (turn > angle) & (turn > CURVATURE_SLACK * h * nearby)
    keep = []
    for i in np.flatnonzero(flagged):
        window = turn[np.mod(np.arange(i - 3, i + 4), n)]
        # strict maximum over the stencil reach, ties going to the first sample
        if turn[i] == window.max() and np.argmax(window) == 3:
            keep.append(i)
    return np.array(keep, dtype=int)


def _snap_corners(corners: np.ndarray, h: float, n: int) -> np.ndarray:
    idx = np.rint(corners / h).astype(int)
    if np.any(np.abs(idx * h - corners) > 1e-6 * h):
        raise ValueError("corner arclengths must coincide with sample positions")
    return np.mod(idx, n)


# --------------------------------------------------------------------------
# frames
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceFrame:
    """Darboux frame of a boundary curve in the reference plane."""

    tangent: np.ndarray      # (k, 2)
    inward: np.ndarray       # (k, 2), equals e_z x tangent
    normal: np.ndarray       # (3,), constant
    curvature: np.ndarray    # (k,), signed: tangent' = curvature * inward


@dataclass(frozen=True)
class ImageFrame:
    """Darboux frame of the image curve relative to the surface normal field."""

    tangent: np.ndarray
    conormal: np.ndarray
    normal: np.ndarray
    geodesic_curvature: np.ndarray
    normal_curvature: np.ndarray
    geodesic_torsion: np.ndarray


def _check_side(curve: ArcCurve, alpha: np.ndarray, side: int | None) -> int:
    if side is None:
        if np.any(curve.is_corner(alpha)):
            raise CornerPoint("frame requested at a corner; pass side=+1 or side=-1")
        return 1
    return side


def darboux_reference(curve: ArcCurve, alpha, side: int | None = None) -> ReferenceFrame:
    a = as_params(alpha)
    side = _check_side(curve, a, side)
    _, vel, acc = curve.jet(a, side)
    inward = rot90(vel)
    return ReferenceFrame(vel, inward, UP.copy(), dot(acc, inward))


def darboux_image(framed, alpha, side: int | None = None) -> ImageFrame:
    """Image frame of a framed curve (any object exposing ``jet`` and ``corners``)."""
    a = as_params(alpha)
    if side is None:
        if framed.corners.size and np.any(
                periodic_gap(a[:, None], framed.corners[None, :], framed.length).min(axis=1)
                <= 1e-12 * framed.length):
            raise CornerPoint("frame requested at a corner; pass side=+1 or side=-1")
        side = 1
    jet = framed.jet(a, side)
    tan, acc, nrm, nrm_rate = jet.velocity, jet.acceleration, jet.normal, jet.normal_rate
    conormal = np.cross(nrm, tan)
    kg = dot(np.cross(tan, acc), nrm)
    kn = dot(acc, nrm)
    tau = -dot(nrm_rate, conormal)
    return ImageFrame(tan, conormal, nrm, kg, kn, tau)


def exterior_angle(curve: ArcCurve, normal: np.ndarray | Callable[[np.ndarray], np.ndarray], alpha) -> np.ndarray:
    """Signed turning angle at ``alpha`` about ``normal`` from the incoming to the outgoing tangent.

    ``normal`` is a fixed 3-vector or a callable returning one 3-vector per
    parameter.  Smooth points give exactly zero.
    """
    a = as_params(alpha)
    t_in = curve.jet(a, -1)[1]
    t_out = curve.jet(a, 1)[1]
    if t_in.shape[1] == 2:
        t_in, t_out = lift(t_in), lift(t_out)
    nrm = normal(a) if callable(normal) else np.broadcast_to(np.asarray(normal, dtype=float), t_in.shape)
    return np.arctan2(dot(np.cross(t_in, t_out), nrm), dot(t_in, t_out))


# --------------------------------------------------------------------------
# polygons
# --------------------------------------------------------------------------

def points_in_polygon(points: np.ndarray, poly: np.ndarray, chunk: int = 2_000_000) -> np.ndarray:
    """Even-odd test of many points against one closed polygon (vertices in order, not repeated)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p0 = np.asarray(poly, dtype=float)
    p1 = np.roll(p0, -1, axis=0)
    out = np.zeros(len(pts), dtype=bool)
    step = max(1, chunk // max(len(p0), 1))
    for s in range(0, len(pts), step):
        x = pts[s:s + step]
        y0 = p0[None, :, 1] - x[:, None, 1]
        y1 = p1[None, :, 1] - x[:, None, 1]
        crosses = (y0 > 0) != (y1 > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(crosses, y0 / np.where(crosses, y0 - y1, 1.0), 0.0)
        xi = p0[None, :, 0] + t * (p1[None, :, 0] - p0[None, :, 0])
        out[s:s + step] = (np.count_nonzero(crosses & (xi > x[:, None, 0]), axis=1) % 2) == 1
    return out


def polygon_distance(points: np.ndarray, poly: np.ndarray, chunk: int = 2_000_000) -> np.ndarray:
    """Distance from each point to the closed polyline through ``poly``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p0 = np.asarray(poly, dtype=float)
    edge = np.roll(p0, -1, axis=0) - p0
    len2 = np.maximum(dot(edge, edge), 1e-300)
    out = np.empty(len(pts))
    step = max(1, chunk // max(len(p0), 1))
    for s in range(0, len(pts), step):
        r = pts[s:s + step, None, :] - p0[None]
        t = np.clip(dot(r, edge[None]) / len2[None], 0.0, 1.0)
        out[s:s + step] = norm(r - t[..., None] * edge[None]).min(axis=1)
    return out


def polygon_area(poly: np.ndarray) -> float:
    p = np.asarray(poly, dtype=float)
    return 0.5 * float(np.sum(cross2(p, np.roll(p, -1, axis=0))))
