"""Isometric immersion of the region assembled from ruled cells and rigid planar pieces.

A ruled cell belongs to a pair of regular intervals whose rulings coincide.
Its points are written as ``c(alpha) + beta * f(alpha)`` with ``alpha`` in the
cell's interval and are sent to ``d(alpha) + beta * g(alpha)``.  What is left
of the region splits into loops made of boundary gaps joined by limiting
rulings.  Each loop is carried by one rigid motion, anchored at a gap endpoint
and checked along the whole loop.  Loops enclosing no area (the straight
edges of a wrapped rectangle, say) are kept as remainders so that every point
of the closed region can still be evaluated.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.spatial import Delaunay, cKDTree

from .boundary_region import RAY_OK, BoundaryRegion
from .errors import GapMismatch, LocationFailure, NonPlanarGap, UndefinedOnCorneredRuling
from .framed_curve import FrameData, FramedCurve, frame_data
from .geometry_core import (UP, cross2, dot, lift, norm, points_in_polygon, polygon_area, polygon_distance,
                            rot90)
from .rulings import CORNER_OR_TANGENT, FLAT_FOOT, BoundaryRuling, RulingField, sample_rulings

ZERO_AREA = 1e-6       # loops below this fraction of diameter^2 are remainders, not components
END_OFFSET = 1e-12     # cell tables stop this fraction of the interval short of each end
BRACKET_SLACK = 1e-5   # times diameter, ruling-length slack when bracketing a point in a cell
EDGE_SLACK = 1e-9      # times diameter, boundary slack for planar pieces
FALLBACK_DIST = 1e-6   # times diameter, farthest a point may sit from its nearest piece
GAP_SAMPLES = 256      # boundary samples per full boundary length in planar loops
FIT_DEGREE = 4
FIT_RCOND = 1e-9       # singular-value cutoff of the local curvature fit (coordinates scaled to unit spread)

KIND_NONE, KIND_CELL, KIND_PLANAR = -1, 0, 1


@dataclass
class RuledCell:
    """Table of rulings for one pair of regular intervals (``alpha`` is unwrapped)."""

    index: int
    interval: tuple[float, float]
    partner: tuple[float, float]
    alpha: np.ndarray
    foot: np.ndarray
    direction: np.ndarray
    length: np.ndarray
    polygon: np.ndarray

    def to_dict(self) -> dict:
        return {"index": self.index, "interval": list(self.interval), "partner": list(self.partner),
                "table_size": int(len(self.alpha))}


@dataclass
class PlanarComponent:
    """A loop of boundary gaps carried by one rigid motion ``x -> rotation @ x + offset``."""

    index: int
    gaps: list[tuple[float, float]]
    rotation: np.ndarray
    offset: np.ndarray
    polygon: np.ndarray
    area: float
    anchor: float
    fit_residual: float
    normal_residual: float
    zero_area: bool
    has_arc: bool

    def apply(self, xs: np.ndarray) -> np.ndarray:
        return lift(xs) @ self.rotation.T + self.offset

    def to_dict(self) -> dict:
        return {"index": self.index, "gaps": [list(g) for g in self.gaps], "area": self.area, "anchor": self.anchor,
                "rotation": self.rotation.tolist(), "offset": self.offset.tolist(),
                "fit_residual": self.fit_residual, "normal_residual": self.normal_residual,
                "zero_area": self.zero_area, "has_arc": self.has_arc}


@dataclass
class Location:
    kind: np.ndarray
    piece: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray


class Immersion:
    """Evaluable immersion of the closed region; see :func:`build_immersion`."""

    def __init__(self, fc: FramedCurve, region: BoundaryRegion, field_: RulingField, cells: list[RuledCell],
                 planar: list[PlanarComponent], fit_tol: float):
        self.fc = fc
        self.region = region
        self.field = field_
        self.cells = cells
        self.pieces = planar
        self.fit_tol = fit_tol
        # positive-area components first so that remainders only catch what is left
        self._planar_order = sorted(range(len(planar)), key=lambda i: (planar[i].zero_area, i))

    @property
    def components(self) -> list[PlanarComponent]:
        """Planar components of positive area."""
        return [p for p in self.pieces if not p.zero_area]

    @property
    def remainders(self) -> list[PlanarComponent]:
        """Loops of zero area (flat strips of no width along the boundary)."""
        return [p for p in self.pieces if p.zero_area]

    @property
    def boundary_rulings(self) -> list[BoundaryRuling]:
        return self.field.boundary_rulings

    def to_dict(self) -> dict:
        return {"cells": [c.to_dict() for c in self.cells],
                "planar_components": [p.to_dict() for p in self.components],
                "flat_remainders": [p.to_dict() for p in self.remainders],
                "boundary_rulings": [r.to_dict() for r in self.boundary_rulings],
                "fit_tolerance": self.fit_tol}

    # -- frames along cells --------------------------------------------------

    def frame(self, alpha) -> FrameData:
        a = np.atleast_1d(np.asarray(alpha, dtype=float))
        return frame_data(self.fc, self.region, np.mod(a, self.region.length), 1)

    def chart(self, alpha, beta):
        """Plane point, image point, normal and rotation pair at ruling coordinates."""
        fd = self.frame(alpha)
        beta = np.asarray(beta, dtype=float)
        x = fd.point + beta[:, None] * fd.f
        p = fd.position + beta[:, None] * fd.g
        return x, p, fd.normal, rotation_pair(fd), fd

    def _solve(self, xs: np.ndarray, lo: np.ndarray, hi: np.ndarray, iters: int = 100):
        """Foot parameter of the ruling through each point, bracketed in ``[lo, hi]`` (safeguarded Newton)."""
        lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
        s_lo = self._offset(xs, lo)
        a = 0.5 * (lo + hi)
        active = np.ones(len(xs), dtype=bool)
        tol = 4e-16 * max(self.region.length, 1.0)
        for _ in range(iters):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            fd = self.frame(a[idx])
            r = xs[idx] - fd.point
            s = cross2(r, fd.f)
            ds = cross2(-fd.tangent_ref, fd.f) + cross2(r, fd.f_rate)
            same = np.sign(s) == np.sign(s_lo[idx])
            lo[idx] = np.where(same, a[idx], lo[idx])
            s_lo[idx] = np.where(same, s, s_lo[idx])
            hi[idx] = np.where(same, hi[idx], a[idx])
            with np.errstate(invalid="ignore", divide="ignore"):
                newton = a[idx] - s / ds
            bad = ~np.isfinite(newton) | (newton <= lo[idx]) | (newton >= hi[idx])
            new = np.where(bad, 0.5 * (lo[idx] + hi[idx]), newton)
            done = (np.abs(new - a[idx]) <= tol) | (s == 0) | (hi[idx] - lo[idx] <= tol)
            a[idx] = np.where(s == 0, a[idx], new)
            active[idx[done]] = False
        fd = self.frame(a)
        beta = dot(xs - fd.point, fd.f)
        return a, beta

    def _offset(self, xs, alpha):
        fd = self.frame(alpha)
        return cross2(xs - fd.point, fd.f)

    # -- point location --------------------------------------------------------

    def _brackets(self, cell: RuledCell, xs: np.ndarray, chunk: int = 2_000_000) -> list[np.ndarray]:
        """Candidate table brackets for each point, ordered by how close the point sits to a foot."""
        slack = BRACKET_SLACK * self.region.diameter
        c, f, ln = cell.foot, cell.direction, cell.length
        step = max(1, chunk // len(c))
        per_point: list[np.ndarray] = []
        for s0 in range(0, len(xs), step):
            r = xs[s0:s0 + step, None, :] - c[None]
            s = cross2(r, f[None])
            b = dot(r, f[None])
            change = s[:, :-1] * s[:, 1:] <= 0
            b_hi = np.maximum(b[:, :-1], b[:, 1:])
            b_lo = np.minimum(b[:, :-1], b[:, 1:])
            ok = change & (b_hi >= -slack) & (b_lo <= np.maximum(ln[:-1], ln[1:])[None] + slack)
            rows, cols = np.nonzero(ok)
            split = np.searchsorted(rows, np.arange(len(r) + 1))
            key = np.abs(b_lo[rows, cols])
            for p in range(len(r)):
                ks, kk = cols[split[p]:split[p + 1]], key[split[p]:split[p + 1]]
                per_point.append(ks[np.argsort(kk, kind="stable")])
        return per_point

    def locate(self, xs, strict: bool = True) -> Location:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        n = len(xs)
        kind = np.full(n, KIND_NONE)
        piece = np.full(n, -1)
        alpha = np.full(n, np.nan)
        beta = np.full(n, np.nan)
        diam = self.region.diameter
        for cell in self.cells:
            todo = np.flatnonzero(kind == KIND_NONE)
            if todo.size == 0:
                break
            lo_box = cell.polygon.min(axis=0) - BRACKET_SLACK * diam
            hi_box = cell.polygon.max(axis=0) + BRACKET_SLACK * diam
            inbox = todo[np.all((xs[todo] >= lo_box) & (xs[todo] <= hi_box), axis=1)]
            if inbox.size == 0:
                continue
            cands = self._brackets(cell, xs[inbox])
            depth = max((len(cnd) for cnd in cands), default=0)
            slack = BRACKET_SLACK * diam
            for rank in range(depth):
                sel = np.array([j for j, cnd in enumerate(cands) if len(cnd) > rank and kind[inbox[j]] == KIND_NONE],
                               dtype=int)
                if sel.size == 0:
                    break
                hit = inbox[sel]
                k = np.array([cands[j][rank] for j in sel], dtype=int)
                a, b = self._solve(xs[hit], cell.alpha[k], cell.alpha[k + 1])
                cap = np.interp(a, cell.alpha, cell.length)
                good = (b >= -slack) & (b <= cap + slack)
                hit, a, b = hit[good], a[good], b[good]
                kind[hit], piece[hit], alpha[hit], beta[hit] = KIND_CELL, cell.index, a, b
        for i in self._planar_order:
            todo = np.flatnonzero(kind == KIND_NONE)
            if todo.size == 0:
                break
            poly = self.pieces[i].polygon
            inside = points_in_polygon(xs[todo], poly)
            near = ~inside
            if near.any():
                near_idx = np.flatnonzero(near)
                inside[near_idx] = polygon_distance(xs[todo[near_idx]], poly) <= EDGE_SLACK * diam
            hit = todo[inside]
            kind[hit], piece[hit] = KIND_PLANAR, i
        left = np.flatnonzero(kind == KIND_NONE)
        if left.size:
            self._fallback(xs, left, kind, piece, alpha, beta, strict)
        return Location(kind, piece, alpha, beta)

    def _fallback(self, xs, left, kind, piece, alpha, beta, strict):
        """Assign stragglers (discretization cracks) to the nearest piece."""
        diam = self.region.diameter
        cands = [(KIND_CELL, c.index, c.polygon) for c in self.cells]
        cands += [(KIND_PLANAR, i, p.polygon) for i, p in enumerate(self.pieces)]
        if not cands:
            if strict:
                raise LocationFailure("immersion has no pieces")
            return
        dist = np.stack([polygon_distance(xs[left], poly) for _, _, poly in cands], axis=1)
        best = np.argmin(dist, axis=1)
        ok = dist[np.arange(len(left)), best] <= FALLBACK_DIST * diam
        if strict and not ok.all():
            bad = xs[left[~ok][0]]
            raise LocationFailure(f"point {bad.tolist()} lies in no piece of the immersion")
        for j in np.flatnonzero(ok):
            p = left[j]
            kd, idx, _ = cands[best[j]]
            kind[p], piece[p] = kd, idx
            if kd == KIND_CELL:
                cell = self.cells[idx]
                ends = np.array([cell.alpha[0], cell.alpha[-1]])
                off = np.abs(self._offset(np.repeat(xs[p][None], 2, axis=0), ends))
                a = ends[int(np.argmin(off))]
                fd = self.frame(np.array([a]))
                b = float(np.clip(dot(xs[p] - fd.point[0], fd.f[0]), 0.0, np.interp(a, cell.alpha, cell.length)))
                alpha[p], beta[p] = a, b

    # -- evaluation -----------------------------------------------------------

    def _evaluate_located(self, xs, loc: Location):
        n = len(xs)
        pos = np.empty((n, 3))
        nrm = np.empty((n, 3))
        grad = np.empty((n, 3, 2))
        cell = loc.kind == KIND_CELL
        if cell.any():
            _, p, nv, q, _ = self.chart(loc.alpha[cell], loc.beta[cell])
            pos[cell], nrm[cell], grad[cell] = p, nv, q
        for i in np.unique(loc.piece[loc.kind == KIND_PLANAR]):
            sel = (loc.kind == KIND_PLANAR) & (loc.piece == i)
            comp = self.pieces[i]
            pos[sel] = comp.apply(xs[sel])
            nrm[sel] = comp.rotation[:, 2]
            grad[sel] = comp.rotation[:, :2]
        return pos, nrm, grad

    def evaluate(self, xs) -> np.ndarray:
        """Image of plane points in the closed region."""
        x = np.asarray(xs, dtype=float)
        pts = np.atleast_2d(x)
        pos = self._evaluate_located(pts, self.locate(pts))[0]
        return pos[0] if x.ndim == 1 else pos

    def normal(self, xs) -> np.ndarray:
        x = np.asarray(xs, dtype=float)
        pts = np.atleast_2d(x)
        nrm = self._evaluate_located(pts, self.locate(pts))[1]
        return nrm[0] if x.ndim == 1 else nrm

    def gradient(self, xs) -> np.ndarray:
        """Derivative of the immersion, a 3x2 matrix per point with columns ``t`` and ``m`` against ``T`` and ``M``."""
        x = np.asarray(xs, dtype=float)
        pts = np.atleast_2d(x)
        grad = self._evaluate_located(pts, self.locate(pts))[2]
        return grad[0] if x.ndim == 1 else grad

    def pulled_normal_gradient(self, xs) -> np.ndarray:
        """Derivative of the normal as a function on the plane (3x2 per point).

        Zero on planar pieces and on rulings with a flat foot; undefined on
        rulings whose feet are all corners or tangencies.
        """
        x = np.asarray(xs, dtype=float)
        pts = np.atleast_2d(x)
        tol = EDGE_SLACK * self.region.diameter
        for r in self.boundary_rulings:
            if r.category == CORNER_OR_TANGENT and np.any(_segment_distance(pts, r.start, r.end) <= tol):
                raise UndefinedOnCorneredRuling(f"normal gradient undefined on the ruling from alpha={r.foot}")
        flat = np.zeros(len(pts), dtype=bool)
        for r in self.boundary_rulings:
            if r.category == FLAT_FOOT:
                flat |= _segment_distance(pts, r.start, r.end) <= tol
        loc = self.locate(pts)
        out = np.zeros((len(pts), 3, 2))
        cell = (loc.kind == KIND_CELL) & ~flat
        if cell.any():
            fd = self.frame(loc.alpha[cell])
            jac = fd.g_m - loc.beta[cell] * fd.spread
            out[cell] = fd.normal_rate[:, :, None] * fd.f_perp[:, None, :] / jac[:, None, None]
        return out[0] if x.ndim == 1 else out


def rotation_pair(fd: FrameData) -> np.ndarray:
    """``t T^T + m M^T`` per parameter, shape ``(k, 3, 2)``."""
    return fd.tangent[:, :, None] * fd.tangent_ref[:, None, :] + fd.conormal[:, :, None] * fd.inward[:, None, :]


def _segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    e = b - a
    t = np.clip(dot(pts - a, e) / max(float(dot(e, e)), 1e-300), 0.0, 1.0)
    return norm(pts - a - t[:, None] * e)


# --------------------------------------------------------------------------
# construction
# --------------------------------------------------------------------------

def _unwrap(alpha, lo, length):
    return lo + np.mod(np.asarray(alpha) - lo, length)


def _pair_intervals(fc, region, intervals) -> list[int]:
    length = region.length
    partner = []
    for k, (lo, hi) in enumerate(intervals):
        s = sample_rulings(fc, region, np.array([np.mod(0.5 * (lo + hi), length)]))
        far_foot = float(s.opposite_foot[0])
        match = [j for j, (l2, h2) in enumerate(intervals) if np.mod(far_foot - l2, length) < h2 - l2]
        if not match:
            raise GapMismatch(f"the ruling from the middle of interval {k} lands outside the regular set")
        partner.append(match[0])
    return partner


def _make_cell(fc, region, field_, index, interval, partner) -> RuledCell:
    length = region.length
    lo, hi = interval
    width = hi - lo
    rel = np.mod(field_.alpha - lo, length)
    inner = lo + rel[(rel > 2 * END_OFFSET * width) & (rel < (1 - 2 * END_OFFSET) * width)]
    extra = lo + width * np.linspace(END_OFFSET, 1 - END_OFFSET, 65)
    a = np.unique(np.concatenate([inner, extra]))
    s = sample_rulings(fc, region, np.mod(a, length))
    keep = s.in_regular & (s.ray_status == RAY_OK)
    keep[0] = keep[-1] = True
    s = s.take(keep)
    a = a[keep]
    foot, direction, ln = s.frame.point, s.frame.f, s.ruling_length
    poly = np.vstack([foot, (foot + ln[:, None] * direction)[::-1]])
    return RuledCell(index, (float(lo), float(hi)), tuple(map(float, partner)), a, foot, direction, ln, poly)


def _gap_loops(intervals, partner, length) -> list[list[tuple[float, float]]]:
    n = len(intervals)
    if n == 0:
        return [[(0.0, float(length))]]
    gaps = []
    for k in range(n):
        start = intervals[k][1]
        end = intervals[(k + 1) % n][0] + (length if k == n - 1 else 0.0)
        end = start + max(np.mod(end - start + 1e-12 * length, length) - 1e-12 * length, 0.0)
        gaps.append((float(start), float(end)))
    seen = [False] * n
    loops = []
    for k0 in range(n):
        if seen[k0]:
            continue
        loop, k = [], k0
        while not seen[k]:
            seen[k] = True
            loop.append(gaps[k])
            k = partner[(k + 1) % n]
        loops.append(loop)
    return loops


def _loop_samples(region, fc, gaps):
    length = region.length
    joints = np.unique(np.concatenate([np.asarray(getattr(region.boundary, "joints", region.corners), dtype=float),
                                       fc.joints, region.corners]))
    out = []
    for a0, a1 in gaps:
        m = max(2, int(math.ceil(GAP_SAMPLES * (a1 - a0) / length)) + 1)
        a = np.linspace(a0, a1, m)
        if joints.size:
            j = _unwrap(joints, a0, length)
            a = np.unique(np.concatenate([a, j[(j > a0) & (j < a1)]]))
        out.append(a)
    return out


def _make_planar(fc, region, index, gaps, fit_tol, normal_tol) -> PlanarComponent:
    length = region.length
    diam = region.diameter
    params = _loop_samples(region, fc, gaps)
    poly = np.vstack([region.boundary.point(np.mod(a, length), 1) for a in params])
    area = abs(polygon_area(poly))
    widths = [a1 - a0 for a0, a1 in gaps]
    has_arc = max(widths) > 1e-12 * length
    anchor = float(gaps[int(np.argmax(widths))][0])
    fd = frame_data(fc, region, np.array([np.mod(anchor, length)]), 1)
    image = np.column_stack([fd.tangent[0], fd.conormal[0], fd.normal[0]])
    ref = np.column_stack([lift(fd.tangent_ref[0]), lift(fd.inward[0]), UP])
    rotation = image @ ref.T
    offset = fd.position[0] - rotation @ lift(fd.point[0])
    fit, nres = 0.0, 0.0
    for a in params:
        for side, sel in ((1, slice(0, -1)), (-1, slice(-1, None))):
            aa = np.mod(a[sel], length)
            if aa.size == 0:
                continue
            j = fc.jet(aa, side)
            c = region.boundary.point(aa, side)
            fit = max(fit, float(np.max(norm(lift(c) @ rotation.T + offset - j.position))))
            nres = max(nres, float(np.max(norm(j.normal - rotation[:, 2]))))
    zero = area < ZERO_AREA * diam**2
    if not zero:
        if nres > normal_tol:
            raise NonPlanarGap(f"normal varies by {nres:.3e} along planar loop {index}")
        if fit > fit_tol:
            raise GapMismatch(f"rigid motion misses the boundary data of loop {index} by {fit:.3e}")
    return PlanarComponent(index, gaps, rotation, offset, poly, area, anchor, fit, nres, zero, has_arc)


def build_immersion(fc: FramedCurve, region: BoundaryRegion, field_: RulingField | None = None,
                    n_alpha: int = 4096, fit_tol: float | None = None) -> Immersion:
    """Assemble ruled cells and rigid planar pieces; the input should already pass the admissibility check."""
    field_ = field_ if field_ is not None else RulingField(fc, region, n_alpha)
    analytic = fc.analytic and region.boundary.analytic
    rel = 1e-8 if analytic else 1e-4
    fit_tol = fit_tol if fit_tol is not None else rel * region.diameter
    intervals = sorted(field_.intervals)
    partner = _pair_intervals(fc, region, intervals) if intervals else []
    cells = []
    for k, iv in enumerate(intervals):
        if partner[k] < k:
            continue
        cells.append(_make_cell(fc, region, field_, len(cells), iv, intervals[partner[k]]))
    planar = [_make_planar(fc, region, i, loop, fit_tol, rel)
              for i, loop in enumerate(_gap_loops(intervals, partner, region.length))]
    return Immersion(fc, region, field_, cells, planar, fit_tol)


# --------------------------------------------------------------------------
# sampled triangulation
# --------------------------------------------------------------------------

@dataclass
class Mesh:
    """Triangulated sample of the immersion; vertex arrays are stacked over all pieces."""

    plane: np.ndarray
    image: np.ndarray
    normal: np.ndarray
    kind: np.ndarray
    piece: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    triangles: np.ndarray
    blocks: list = field(default_factory=list)   # (kind, piece, vertex slice, triangle slice)


def _grid_triangles(n_along: int, n_across: int, base: int) -> np.ndarray:
    j, k = np.meshgrid(np.arange(n_along - 1), np.arange(n_across - 1), indexing="ij")
    v00 = base + j * n_across + k
    v10 = v00 + n_across
    v11 = v10 + 1
    v01 = v00 + 1
    tri = np.concatenate([np.stack([v00, v10, v11], -1).reshape(-1, 3),
                          np.stack([v00, v11, v01], -1).reshape(-1, 3)])
    return tri


def sample_mesh(imm: Immersion, n_along: int = 200, n_across: int = 50) -> Mesh:
    """Ruled cells on an ``n_along x n_across`` grid of ruling coordinates; planar components by Delaunay."""
    planes, images, normals, kinds, pieces, alphas, betas, tris, blocks = [], [], [], [], [], [], [], [], []
    nv = nt = 0
    fc, region = imm.fc, imm.region
    for cell in imm.cells:
        lo, hi = cell.alpha[0], cell.alpha[-1]
        a = np.linspace(lo, hi, n_along)
        s = sample_rulings(fc, region, np.mod(a, region.length))
        ln = np.where(np.isfinite(s.ruling_length), s.ruling_length, np.interp(a, cell.alpha, cell.length))
        frac = np.linspace(0.0, 1.0, n_across)
        aa = np.repeat(a, n_across)
        bb = (ln[:, None] * frac[None, :]).ravel()
        x, p, nrm, _, _ = imm.chart(aa, bb)
        tri = _grid_triangles(n_along, n_across, nv)
        planes.append(x); images.append(p); normals.append(nrm)
        kinds.append(np.full(len(x), KIND_CELL)); pieces.append(np.full(len(x), cell.index))
        alphas.append(aa); betas.append(bb); tris.append(tri)
        blocks.append((KIND_CELL, cell.index, slice(nv, nv + len(x)), slice(nt, nt + len(tri))))
        nv += len(x)
        nt += len(tri)
    for comp in imm.components:
        x, tri = _planar_points(comp, n_along * n_across)
        tri = tri + nv
        planes.append(x); images.append(comp.apply(x)); normals.append(np.tile(comp.rotation[:, 2], (len(x), 1)))
        kinds.append(np.full(len(x), KIND_PLANAR)); pieces.append(np.full(len(x), comp.index))
        alphas.append(np.full(len(x), np.nan)); betas.append(np.full(len(x), np.nan)); tris.append(tri)
        blocks.append((KIND_PLANAR, comp.index, slice(nv, nv + len(x)), slice(nt, nt + len(tri))))
        nv += len(x)
        nt += len(tri)
    if not planes:
        empty = np.zeros((0, 3))
        return Mesh(np.zeros((0, 2)), empty, empty, np.zeros(0, int), np.zeros(0, int), np.zeros(0), np.zeros(0),
                    np.zeros((0, 3), int), [])
    return Mesh(np.vstack(planes), np.vstack(images), np.vstack(normals), np.concatenate(kinds),
                np.concatenate(pieces), np.concatenate(alphas), np.concatenate(betas), np.vstack(tris), blocks)


def _planar_points(comp: PlanarComponent, target: int):
    poly = comp.polygon
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    h = math.sqrt(comp.area / target)
    # boundary resampled at the lattice spacing so the triangulation hugs the loop
    seg = np.roll(poly, -1, axis=0) - poly
    pts = [poly]
    for p0, e in zip(poly, seg):
        m = int(norm(e) // h)
        if m > 1:
            pts.append(p0 + np.outer(np.arange(1, m) / m, e))
    gx = np.arange(lo[0] + h / 2, hi[0], h)
    gy = np.arange(lo[1] + h / 2, hi[1], h)
    grid = np.stack(np.meshgrid(gx, gy, indexing="ij"), -1).reshape(-1, 2)
    grid = grid[points_in_polygon(grid, poly)]
    grid = grid[polygon_distance(grid, poly) > 0.25 * h]
    x = np.vstack(pts + [grid])
    x = np.unique(np.round(x / (1e-12 * max(abs(hi - lo).max(), 1.0))), axis=0, return_index=True)[1]
    x = np.vstack(pts + [grid])[np.sort(x)]
    tri = Delaunay(x).simplices
    keep = points_in_polygon(x[tri].mean(axis=1), poly)
    return x, tri[keep]


def mesh_edges(triangles: np.ndarray) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    return np.unique(e, axis=0)


def to_obj(mesh: Mesh) -> str:
    """Wavefront OBJ text with per-vertex normals; floats carry 17 significant digits."""
    lines = ["# isometric immersion sample"]
    lines += [f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in mesh.image]
    lines += [f"vn {n[0]:.17g} {n[1]:.17g} {n[2]:.17g}" for n in mesh.normal]
    lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in mesh.triangles]
    return "\n".join(lines) + "\n"


def write_obj(path, mesh: Mesh) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_obj(mesh))


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------

@dataclass
class RegularityReport:
    metric_error: float
    chord_distortion: float
    chord_bound: float
    normal_jump: float
    position_jump: float
    gradient_jump: float
    gaussian_curvature_max: float
    mean_curvature_max: float
    gaussian_ratio: float
    mean_curvature_jumps: list
    c2_failure_sites: list
    failures_on_cornered_rulings: bool
    q_consistency: float
    gradient_fd: float
    gradient_orthonormality: float
    collinearity: float
    two_to_one: float
    normal_gradient: dict
    counts: dict
    grid: dict

    @property
    def passed(self) -> bool:
        return self.checks()["all"]

    def checks(self, metric_tol: float = 1e-6, jump_tol: float = 1e-8, k_tol: float = 1e-4,
               collinear_tol: float = 1e-10, fd_tol: float = 1e-8, q_tol: float = 1e-6) -> dict:
        out = {
            "metric": self.metric_error < metric_tol,
            "normal_continuity": self.normal_jump < jump_tol,
            "gradient_continuity": self.gradient_jump < q_tol,
            "flatness": self.gaussian_ratio < k_tol,
            "collinearity": self.collinearity < collinear_tol,
            "gradient_fd": self.gradient_fd < fd_tol,
            "q_consistency": self.q_consistency < q_tol,
            "c2_failures_on_cornered_rulings": self.failures_on_cornered_rulings,
        }
        out["all"] = all(out.values())
        return out

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["checks"] = self.checks()
        return _jsonable(d)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "nan")
    return v


def _threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    try:
        return max(1, int(os.environ.get("UNROLL_THREADS", "1")))
    except ValueError:
        return 1


def _edge_metric_block(imm: Immersion, mesh: Mesh, kind: int, piece: int, vs: slice, ts: slice):
    """Richardson-extrapolated image length of each straight plane edge against its plane length."""
    edges = mesh_edges(mesh.triangles[ts])
    a, b = edges[:, 0], edges[:, 1]
    xa, xb = mesh.plane[a], mesh.plane[b]
    ell = norm(xb - xa)
    fracs = (0.25, 0.5, 0.75)
    subs = [xa + t * (xb - xa) for t in fracs]
    if kind == KIND_PLANAR:
        comp = imm.pieces[piece]
        img = [comp.apply(x) for x in subs]
    else:
        aa, ab = mesh.alpha[a], mesh.alpha[b]
        ba, bb = mesh.beta[a], mesh.beta[b]
        lo, hi = np.minimum(aa, ab), np.maximum(aa, ab)
        along = hi > lo
        img = []
        for t, x in zip(fracs, subs):
            p = np.empty((len(x), 3))
            same = ~along
            if same.any():
                p[same] = imm.chart(aa[same], ba[same] + t * (bb[same] - ba[same]))[1]
            if along.any():
                al, be = imm._solve(x[along], lo[along], hi[along])
                p[along] = imm.chart(al, be)[1]
            img.append(p)
    pa, pb = mesh.image[a], mesh.image[b]
    chain = [pa, img[0], img[1], img[2], pb]
    s4 = sum(norm(chain[i + 1] - chain[i]) for i in range(4))
    s2 = norm(img[1] - pa) + norm(pb - img[1])
    length = (4 * s4 - s2) / 3
    metric = np.abs(length / ell - 1)
    chord = np.abs(norm(pb - pa) / ell - 1)
    return float(metric.max(initial=0.0)), float(chord.max(initial=0.0)), float(ell.max(initial=0.0)), len(edges)


def mesh_neighbors(triangles: np.ndarray, points: np.ndarray, k: int) -> np.ndarray:
    """The ``k`` nearest vertices of each vertex by hop count in the triangulation, ties by distance."""
    n = len(points)
    e = mesh_edges(triangles)
    adj = coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n)).tocsr()
    reach = adj.copy()
    hops = adj.copy()
    ring = 1
    while True:
        counts = np.diff(reach.indptr) - (reach.diagonal() != 0)
        if counts.min(initial=k) >= k or ring >= 8:
            break
        reach = (reach + reach @ adj).tocsr()
        ring += 1
        hops = hops + (reach != 0).astype(float)
    hops = hops.tocsr()
    out = np.empty((n, k), dtype=int)
    for i in range(n):
        cols = reach.indices[reach.indptr[i]:reach.indptr[i + 1]]
        cols = cols[cols != i]
        level = -np.asarray(hops[i, cols].todense()).ravel()
        dist = norm(points[cols] - points[i])
        order = np.lexsort((dist, level))
        pick = cols[order[:k]]
        if len(pick) < k:
            pick = np.concatenate([pick, np.full(k - len(pick), pick[-1] if len(pick) else i)])
        out[i] = pick
    return out


def _shape_fit(mesh: Mesh, vs: slice, ts: slice, frames, k: int = 12):
    """Per-vertex fit of the height over the tangent plane from ``k`` nearest neighbours.

    The local model holds every monomial of degree two to four.  Each neighbour contributes its
    height and the two slopes read off its normal, which keeps the fit well
    posed on one-sided and strongly anisotropic neighbourhoods.  Returns the
    Gaussian and mean curvature estimates.
    """
    p = mesh.image[vs]
    nv = mesh.normal[vs]
    n_v = len(p)
    if n_v < k + 1:
        return np.zeros(n_v), np.zeros(n_v)
    e1, e2, nrm = frames
    nb = mesh_neighbors(mesh.triangles[ts] - vs.start, p, k)
    r = p[nb] - p[:, None, :]
    u = dot(r, e1[:, None, :])
    v = dot(r, e2[:, None, :])
    w = dot(r, nrm[:, None, :])
    h = np.sqrt(np.mean(u**2 + v**2, axis=1))[:, None]
    u, v, w = u / h, v / h, w / h
    nn = nv[nb]
    nz = dot(nn, nrm[:, None, :])
    su = -dot(nn, e1[:, None, :]) / nz
    sv = -dot(nn, e2[:, None, :]) / nz
    # monomials u^i v^j with 2 <= i + j <= 4 and their partial derivatives
    powers = [(i, d - i) for d in range(2, FIT_DEGREE + 1) for i in range(d, -1, -1)]
    rows_w = np.stack([u**i * v**j for i, j in powers], axis=-1)
    rows_u = np.stack([i * u**max(i - 1, 0) * v**j for i, j in powers], axis=-1)
    rows_v = np.stack([j * u**i * v**max(j - 1, 0) for i, j in powers], axis=-1)
    design = np.concatenate([rows_w, rows_u, rows_v], axis=1)
    rhs = np.concatenate([w, su, sv], axis=1)
    coef = np.einsum("vij,vj->vi", np.linalg.pinv(design, rcond=FIT_RCOND), rhs)
    a, b, c = coef[:, 0] / h[:, 0], coef[:, 1] / h[:, 0], coef[:, 2] / h[:, 0]
    return 4 * a * c - b * b, a + c


def _vertex_frames(imm: Immersion, mesh: Mesh, kind: int, piece: int, vs: slice):
    if kind == KIND_CELL:
        fd = imm.frame(mesh.alpha[vs])
        return fd.tangent, fd.conormal, fd.normal
    rot = imm.pieces[piece].rotation
    n = vs.stop - vs.start
    return np.tile(rot[:, 0], (n, 1)), np.tile(rot[:, 1], (n, 1)), np.tile(rot[:, 2], (n, 1))


def _piece_formula(imm: Immersion, kind: int, piece: int, xs: np.ndarray):
    """Image and normal of one piece's own formula (with its gradient), extended up to its closure."""
    if kind == KIND_PLANAR:
        comp = imm.pieces[piece]
        n = len(xs)
        return comp.apply(xs), np.tile(comp.rotation[:, 2], (n, 1)), np.repeat(comp.rotation[None, :, :2], n, 0)
    cell = imm.cells[piece]
    ends = np.array([cell.alpha[0], cell.alpha[-1]])
    off = imm._offset(np.repeat(xs, 2, axis=0), np.tile(ends, len(xs))).reshape(-1, 2)
    inside = off[:, 0] * off[:, 1] < 0
    alpha = np.where(np.abs(off[:, 0]) <= np.abs(off[:, 1]), ends[0], ends[1])
    if inside.any():
        sol = imm._solve(xs[inside], np.full(inside.sum(), ends[0]), np.full(inside.sum(), ends[1]))[0]
        alpha[inside] = sol
    fd = imm.frame(alpha)
    beta = dot(xs - fd.point, fd.f)
    return fd.position + beta[:, None] * fd.g, fd.normal, rotation_pair(fd)


def _ruling_sides(imm: Immersion, r: BoundaryRuling, n_points: int, offset: float):
    """Sample points on a limiting ruling with the pieces found just across it on each side."""
    diam = imm.region.diameter
    if r.length <= 1e-9 * diam:
        return []
    nrm = rot90(r.direction)
    out = []
    for t in (np.arange(n_points) + 0.5) / n_points:
        p = r.start + t * r.length * r.direction
        pair = []
        for sgn in (1.0, -1.0):
            q = p + sgn * offset * nrm
            if imm.region.contains(q).kind != "interior":
                break
            loc = imm.locate(q[None], strict=False)
            if loc.kind[0] == KIND_NONE:
                break
            pair.append((int(loc.kind[0]), int(loc.piece[0]), q))
        if len(pair) == 2 and pair[0][:2] != pair[1][:2]:
            out.append((p, pair[0], pair[1]))
    return out


def verify_isometry(imm: Immersion, n_along: int = 200, n_across: int = 50, k_neighbors: int = 12,
                    fd_step: float | None = None, jump_tol: float | None = None, threads: int | None = None,
                    mesh: Mesh | None = None) -> RegularityReport:
    """Sampled isometry and regularity checks of a built immersion."""
    region, fc = imm.region, imm.fc
    diam, length = region.diameter, region.length
    mesh = mesh if mesh is not None else sample_mesh(imm, n_along, n_across)
    with ThreadPoolExecutor(_threads(threads)) as pool:
        metrics = list(pool.map(lambda blk: _edge_metric_block(imm, mesh, *blk), mesh.blocks))
    metric = max((m[0] for m in metrics), default=0.0)
    chord = max((m[1] for m in metrics), default=0.0)
    longest = max((m[2] for m in metrics), default=0.0)
    n_edges = sum(m[3] for m in metrics)

    # curvature fits, block by block (neighbours never straddle two pieces)
    K = np.zeros(len(mesh.plane))
    H = np.zeros(len(mesh.plane))
    H_exact = np.zeros(len(mesh.plane))
    for kind, piece, vs, ts in mesh.blocks:
        frames = _vertex_frames(imm, mesh, kind, piece, vs)
        K[vs], H[vs] = _shape_fit(mesh, vs, ts, frames, k_neighbors)
        if kind == KIND_CELL:
            fd = imm.frame(mesh.alpha[vs])
            H_exact[vs] = fd.kappa_n / (2 * fd.g_m * (fd.g_m - mesh.beta[vs] * fd.spread))
    h_max = float(np.max(np.abs(H), initial=0.0))
    k_max = float(np.max(np.abs(K), initial=0.0))
    ratio = k_max / h_max**2 if h_max > 0 else 0.0
    chord_bound = longest**2 * (2 * float(np.max(np.abs(H_exact), initial=0.0)))**2 / 24

    # one-sided limits and curvature jumps across limiting rulings
    jump_tol = jump_tol if jump_tol is not None else 0.05 * max(h_max, 1e-300)
    trees = {(kind, piece): (cKDTree(mesh.plane[vs]), vs) for kind, piece, vs, _ in mesh.blocks}
    n_jump = p_jump = q_jump = 0.0
    jumps, sites = [], []
    for i, r in enumerate(imm.boundary_rulings):
        sides = _ruling_sides(imm, r, 9, 1e-3 * diam)
        worst_h = worst_tr = 0.0
        for p, (ka, ia, qa), (kb, ib, qb) in sides:
            pa, na, ga = _piece_formula(imm, ka, ia, p[None])
            pb, nb, gb = _piece_formula(imm, kb, ib, p[None])
            n_jump = max(n_jump, float(norm(na - nb)[0]))
            p_jump = max(p_jump, float(norm(pa - pb)[0]))
            q_jump = max(q_jump, float(np.linalg.norm(ga - gb)))
            if (ka, ia) in trees and (kb, ib) in trees:
                ha = _nearby_mean(trees[(ka, ia)], H, qa)
                hb = _nearby_mean(trees[(kb, ib)], H, qb)
                worst_h = max(worst_h, abs(ha - hb))
        worst_tr = 2 * worst_h
        flagged = bool(sides) and worst_h > jump_tol
        jumps.append({"ruling": i, "foot": r.foot, "category": r.category, "sampled_points": len(sides),
                      "mean_curvature_jump": worst_h, "trace_jump": worst_tr, "flagged": flagged})
        if flagged:
            sites.append(i)
    subset = all(imm.boundary_rulings[i].category == CORNER_OR_TANGENT for i in sites)

    q_res = _q_consistency(imm)
    fd_res, orth = _gradient_check(imm, mesh, fd_step if fd_step is not None else 1e-5 * diam)
    collinear, two_to_one = _ruling_checks(imm)
    ngrad = _normal_gradient_summary(imm, mesh)
    counts = {"vertices": int(len(mesh.plane)), "triangles": int(len(mesh.triangles)), "edges": int(n_edges),
              "cells": len(imm.cells), "planar_components": len(imm.components),
              "flat_remainders": len(imm.remainders)}
    grid = {"n_along": n_along, "n_across": n_across, "k_neighbors": k_neighbors,
            "fd_step": fd_step if fd_step is not None else 1e-5 * diam, "jump_tol": jump_tol,
            "statement": "all checks are made at the stated sample resolution"}
    return RegularityReport(metric, chord, chord_bound, n_jump, p_jump, q_jump, k_max, h_max, ratio, jumps, sites,
                            subset, q_res, fd_res, orth, collinear, two_to_one, ngrad, counts, grid)


def _nearby_mean(tree_vs, values, q, k: int = 4) -> float:
    tree, vs = tree_vs
    _, idx = tree.query(q, k)
    return float(np.mean(values[vs][np.atleast_1d(idx)]))


def _q_consistency(imm: Immersion) -> float:
    """Finite-difference residual of ``Q' + n (Q^T n')^T`` on each cell's table."""
    length = imm.region.length
    h = 1e-5 * length
    joints = np.unique(np.concatenate([np.asarray(getattr(imm.region.boundary, "joints", imm.region.corners)),
                                       imm.fc.joints]))
    worst = 0.0
    for cell in imm.cells:
        a = cell.alpha[(cell.alpha > cell.alpha[0] + 2 * h) & (cell.alpha < cell.alpha[-1] - 2 * h)]
        if joints.size and a.size:
            a = a[np.min(np.abs(np.mod(a[:, None] - joints[None, :] + length / 2, length) - length / 2), axis=1) > 2 * h]
        if a.size == 0:
            continue
        q_plus = rotation_pair(imm.frame(a + h))
        q_minus = rotation_pair(imm.frame(a - h))
        fd = imm.frame(a)
        q = rotation_pair(fd)
        dq = (q_plus - q_minus) / (2 * h)
        qn = np.einsum("kij,ki->kj", q, fd.normal_rate)
        res = dq + fd.normal[:, :, None] * qn[:, None, :]
        worst = max(worst, float(np.max(np.linalg.norm(res, axis=(1, 2)))))
    return worst


def _gradient_check(imm: Immersion, mesh: Mesh, h: float, per_block: int = 64):
    """Central differences of :meth:`Immersion.evaluate` against the analytic gradient at interior samples."""
    pts = []
    for kind, piece, vs, _ in mesh.blocks:
        x = mesh.plane[vs]
        if kind == KIND_CELL:
            n_across = int(np.count_nonzero(mesh.alpha[vs] == mesh.alpha[vs][0]))
            n_along = len(x) // max(n_across, 1)
            j, k = np.divmod(np.arange(len(x)), n_across)
            ok = (j >= 2) & (j <= n_along - 3) & (k >= 2) & (k <= n_across - 3)
        else:
            ok = polygon_distance(x, imm.pieces[piece].polygon) > 1e-2 * imm.region.diameter
        cand = np.flatnonzero(ok)
        if cand.size:
            pick = cand[np.linspace(0, cand.size - 1, min(per_block, cand.size)).astype(int)]
            pts.append(x[pick])
    if not pts:
        return 0.0, 0.0
    x = np.vstack(pts)
    grad = imm.gradient(x)
    fd = np.empty_like(grad)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd[:, :, i] = (imm.evaluate(x + e) - imm.evaluate(x - e)) / (2 * h)
    orth = np.einsum("kij,kil->kjl", grad, grad) - np.eye(2)[None]
    return float(np.max(np.abs(fd - grad))), float(np.max(np.abs(orth)))


def _ruling_checks(imm: Immersion):
    """Straightness of image rulings and the two-to-one covering, both through :meth:`Immersion.evaluate`."""
    s = imm.field.samples
    ok = s.in_regular & (s.ray_status == RAY_OK)
    if not ok.any():
        return 0.0, 0.0
    s = s.take(ok)
    fd = s.frame
    bh = s.ruling_length
    x0 = fd.point
    x1 = x0 + 0.5 * bh[:, None] * fd.f
    x2 = x0 + bh[:, None] * fd.f
    p0, p1, p2 = imm.evaluate(x0), imm.evaluate(x1), imm.evaluate(x2)
    chord = p2 - p0
    dev = norm(np.cross(chord, p1 - p0)) / np.maximum(norm(chord), 1e-300)
    collinear = float(np.max(dev / bh))
    far = frame_data(imm.fc, imm.region, s.opposite_foot, 1)
    beta = bh / 3
    xa = x0 + beta[:, None] * fd.f
    xb = far.point + (bh - beta)[:, None] * far.f
    two = float(np.max(norm(imm.evaluate(xa) - imm.evaluate(xb))))
    return collinear, two


def _normal_gradient_summary(imm: Immersion, mesh: Mesh) -> dict:
    """Norms of the pulled-back normal gradient, including limits toward rulings with flat feet."""
    out: dict = {"cell_min": None, "cell_max": None, "flat_foot_limits": []}
    norms = []
    for kind, piece, vs, _ in mesh.blocks:
        if kind != KIND_CELL:
            continue
        fd = imm.frame(mesh.alpha[vs])
        jac = fd.g_m - mesh.beta[vs] * fd.spread
        norms.append(norm(fd.normal_rate) * norm(fd.f_perp) / np.abs(jac))
    if norms:
        allv = np.concatenate(norms)
        out["cell_min"], out["cell_max"] = float(allv.min()), float(allv.max())
    for r in imm.boundary_rulings:
        if r.category != FLAT_FOOT:
            continue
        cell = next((c for c in imm.cells if abs(np.mod(c.alpha[0] - r.foot, imm.region.length)) < 1e-6
                     or abs(np.mod(r.foot - c.alpha[-1], imm.region.length)) < 1e-6
                     or abs(np.mod(c.alpha[0] - r.opposite, imm.region.length)) < 1e-6
                     or abs(np.mod(r.opposite - c.alpha[-1], imm.region.length)) < 1e-6), None)
        if cell is None:
            continue
        width = cell.alpha[-1] - cell.alpha[0]
        steps = width * np.array([1e-1, 1e-2, 1e-3, 1e-4])
        start = _unwrap(r.foot, cell.alpha[0] - 1e-6, imm.region.length)
        a = start + r.side * steps
        fd = imm.frame(a)
        out["flat_foot_limits"].append({"foot": r.foot, "distances": steps.tolist(),
                                        "norms": (norm(fd.normal_rate) / np.abs(fd.g_m)).tolist()})
    return out
