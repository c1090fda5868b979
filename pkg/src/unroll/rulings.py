"""The ruling field of a framed curve over its reference region.

For each boundary parameter with non-vanishing normal curvature the ruling
leaves the foot ``c(alpha)`` along ``f(alpha)`` and lands at the opposite foot
``opposite_foot`` after ``ruling_length``.  The field records where rulings
exist (``in_ruled``) and where both feet are regular (``in_regular``).  It also
holds the maximal regular intervals together with the limiting rulings at
their ends.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boundary_region import RAY_OK, BoundaryRegion
from .errors import LimitDivergence, TangentRay
from .framed_curve import FrameData, FramedCurve, frame_data
from .geometry_core import as_params, cross2, dot, lift, norm, periodic_gap, signed_gap

CORNER_TIE = 1e-6        # relative to the boundary length
TANGENT_TIE = 1e-6
CROSSING_PAIR_CAP = 1_000_000

CURVED_FOOT = "curved_foot"          # a regular endpoint with turning normal
FLAT_FOOT = "flat_foot"              # a regular endpoint with constant normal
FLAT_RATE_FACTOR = 10.0
CORNER_OR_TANGENT = "corner_or_tangent"


@dataclass
class RulingSample:
    """Ruling data at arbitrary parameters (one entry per parameter)."""

    frame: FrameData
    ruling_length: np.ndarray
    opposite_foot: np.ndarray
    ray_status: np.ndarray
    in_ruled: np.ndarray
    in_regular: np.ndarray
    far_kappa_n: np.ndarray

    def take(self, mask):
        fd = self.frame
        sub = FrameData(**{k: (v[mask] if isinstance(v, np.ndarray) and v.ndim and v.shape[0] == len(fd.alpha) else v)
                           for k, v in fd.__dict__.items()})
        return RulingSample(sub, self.ruling_length[mask], self.opposite_foot[mask], self.ray_status[mask],
                            self.in_ruled[mask], self.in_regular[mask], self.far_kappa_n[mask])


@dataclass
class BoundaryRuling:
    """Limiting ruling at an end of a regular interval."""

    foot: float
    opposite: float
    side: int                   # +1: limit from above the foot, -1: from below
    start: np.ndarray
    end: np.ndarray
    length: float
    direction: np.ndarray
    image_direction: np.ndarray
    category: str
    endpoints: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"foot": self.foot, "opposite": self.opposite, "side": self.side,
                "start": self.start.tolist(), "end": self.end.tolist(), "length": self.length,
                "direction": self.direction.tolist(), "category": self.category, "endpoints": self.endpoints}


def sample_rulings(fc: FramedCurve, region: BoundaryRegion, alpha, side: int = 1) -> RulingSample:
    a = as_params(alpha)
    fd = frame_data(fc, region, a, side)
    length = region.length
    corner = region.boundary.is_corner(a, 1e-12 * length)
    if fc.corners.size:
        corner |= periodic_gap(a[:, None], fc.corners[None, :], length).min(axis=1) <= 1e-12 * length
    in_ruled = ~corner & fd.ruled & (np.abs(fd.kappa_n) >= fc.eps_kappa)
    beta = np.full(a.shape, np.nan)
    far_foot = np.full(a.shape, np.nan)
    status = np.full(a.shape, -1, dtype=int)
    idx = np.flatnonzero(in_ruled)
    if idx.size:
        b, m, s = region.ray_exit_many(a[idx], fd.f[idx], side)
        beta[idx], far_foot[idx], status[idx] = b, m, s
    ok = in_ruled & (status == RAY_OK)
    far_kn = np.full(a.shape, np.nan)
    good = np.flatnonzero(ok)
    in_regular = np.zeros(a.shape, dtype=bool)
    if good.size:
        far_corner = region.boundary.is_corner(far_foot[good], 1e-12 * length)
        far = frame_data(fc, region, far_foot[good], 1)
        far_kn[good] = far.kappa_n
        in_regular[good] = ~far_corner & far.ruled & (np.abs(far.kappa_n) >= fc.eps_kappa)
    return RulingSample(fd, beta, far_foot, status, in_ruled, in_regular, far_kn)


class RulingField:
    """Ruling data on a uniform grid plus refined regular intervals and limiting rulings."""

    def __init__(self, fc: FramedCurve, region: BoundaryRegion, n_alpha: int = 4096,
                 refine_iters: int = 48, limit_step: float | None = None):
        self.fc = fc
        self.region = region
        self.length = region.length
        self.n_alpha = int(n_alpha)
        self.alpha = np.arange(self.n_alpha) * (self.length / self.n_alpha)
        self.samples = sample_rulings(fc, region, self.alpha)
        self.in_corner = region.boundary.is_corner(self.alpha, 1e-12 * self.length)
        self.in_ruled = self.samples.in_ruled
        self.in_regular = self.samples.in_regular
        self.ruling_length = self.samples.ruling_length
        self.opposite_foot = self.samples.opposite_foot
        self.f = self.samples.frame.f
        self.g = self.samples.frame.g
        self.spread = self.samples.frame.spread
        self._refine_iters = refine_iters
        self.intervals = self._regular_intervals()
        self.limit_step = limit_step if limit_step is not None else 1e-4 * self.length
        self.boundary_rulings = self._boundary_rulings()

    # -- regular intervals -------------------------------------------------

    def _membership(self, alpha) -> np.ndarray:
        return sample_rulings(self.fc, self.region, alpha).in_regular

    def _regular_intervals(self) -> list[tuple[float, float]]:
        region = self.region
        joints = np.concatenate([np.asarray(getattr(region.boundary, "joints", region.corners), dtype=float),
                                 self.fc.joints])
        extra = np.unique(np.mod(joints, self.length))
        extra = extra[periodic_gap(extra[:, None], self.alpha[None, :], self.length).min(axis=1) > 1e-12 * self.length] \
            if extra.size else extra
        pts = np.concatenate([self.alpha, extra])
        member = np.concatenate([self.in_regular, self._membership(extra) if extra.size else np.zeros(0, bool)])
        order = np.argsort(pts)
        pts, member = pts[order], member[order]
        if member.all():
            return [(0.0, self.length)]
        if not member.any():
            return []
        n = len(pts)
        nxt = np.roll(np.arange(n), -1)
        starts = np.flatnonzero(~member & member[nxt])   # out -> in
        ends = np.flatnonzero(member & ~member[nxt])     # in -> out
        lo_out = pts[starts]
        lo_in = np.where(nxt[starts] == 0, pts[0] + self.length, pts[nxt[starts]])
        hi_in = pts[ends]
        hi_out = np.where(nxt[ends] == 0, pts[0] + self.length, pts[nxt[ends]])
        left = self._bisect(lo_in, lo_out)
        right = self._bisect(hi_in, hi_out)
        out = []
        for a in left:
            # the matching right end is the first one at or after a
            gaps = np.mod(right - a, self.length)
            b = a + gaps.min()
            out.append((float(np.mod(a, self.length)), float(np.mod(a, self.length) + (b - a))))
        return sorted(out)

    def _bisect(self, inside: np.ndarray, outside: np.ndarray) -> np.ndarray:
        a = inside.astype(float).copy()
        b = outside.astype(float).copy()
        for _ in range(self._refine_iters):
            mid = 0.5 * (a + b)
            m = self._membership(np.mod(mid, self.length))
            a = np.where(m, mid, a)
            b = np.where(m, b, mid)
        return 0.5 * (a + b)

    def in_regular_at(self, alpha) -> np.ndarray:
        a = np.mod(as_params(alpha), self.length)
        inside = np.zeros(a.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= (np.mod(a - lo, self.length) > 0) & (np.mod(a - lo, self.length) < hi - lo)
        return inside

    # -- limiting rulings ---------------------------------------------------

    def _boundary_rulings(self) -> list[BoundaryRuling]:
        if not self.intervals or (len(self.intervals) == 1 and self.intervals[0][1] - self.intervals[0][0] >= self.length):
            return []
        ends = []
        for lo, hi in self.intervals:
            ends.append((lo, 1, hi - lo))
            ends.append((hi, -1, hi - lo))
        found = []
        for foot, side, width in ends:
            found.append(self._limit_ruling(float(np.mod(foot, self.length)), side, width))
        return _dedupe(found, 1e-9 * self.region.diameter)

    def _extrapolate(self, foot: float, side: int, step: float):
        offsets = side * step * np.array([1.0, 2.0, 3.0])
        s = sample_rulings(self.fc, self.region, np.mod(foot + offsets, self.length))
        if not np.all(s.ray_status == RAY_OK):
            raise LimitDivergence(f"rulings near alpha={foot} have no boundary exit")
        far_foot = s.opposite_foot
        # unwrap the opposite foot around the first sample
        far_foot = far_foot[0] + signed_gap(far_foot, far_foot[0], self.length)
        w = np.array([3.0, -3.0, 1.0])
        f = w @ s.frame.f
        g = w @ s.frame.g
        return f, g, float(w @ far_foot), float(w @ s.ruling_length)

    def _limit_ruling(self, foot: float, side: int, width: float) -> BoundaryRuling:
        step = min(self.limit_step, width / 8)
        f1, g1, far_foot1, b1 = self._extrapolate(foot, side, step)
        f2, g2, far_foot2, b2 = self._extrapolate(foot, side, step / 2)
        scale = self.length
        drift = max(np.linalg.norm(f1 - f2), np.linalg.norm(g1 - g2),
                    abs(signed_gap(far_foot1, far_foot2, scale)) / scale, abs(b1 - b2) / scale)
        if drift > 1e-5:
            raise LimitDivergence(f"one-sided ruling limits at alpha={foot} do not settle (drift {drift:.2e})")
        f = f2 / np.linalg.norm(f2)
        g = g2 / np.linalg.norm(g2)
        far_foot = float(np.mod(far_foot2, self.length))
        beta = max(b2, 0.0)
        start = self.region.boundary.point(foot, side)[0]
        end = start + beta * f
        endpoints = [self._endpoint(foot, side, f), self._endpoint(far_foot, -side, -f)]
        regular = [e for e in endpoints if not e["corner"] and not e["tangent"]]
        if any(e["turning_normal"] for e in regular):
            cat = CURVED_FOOT
        elif regular:
            cat = FLAT_FOOT
        else:
            cat = CORNER_OR_TANGENT
        return BoundaryRuling(foot, far_foot, side, start, end, float(beta), f, g, cat, endpoints)

    def _endpoint(self, alpha: float, side: int, direction: np.ndarray) -> dict:
        boundary = self.region.boundary
        corner = bool(boundary.corner_distance(alpha)[0] <= CORNER_TIE * self.length)
        inward = np.array([-boundary.tangent(alpha, side)[0][1], boundary.tangent(alpha, side)[0][0]])
        tangent = bool(abs(dot(direction, inward)) < TANGENT_TIE)
        rate = float(norm(self.fc.jet(alpha, side).normal_rate)[0])
        # limiting feet sit on the curvature cutoff, so a rate at that scale counts as constant normal
        flat_rate = max(self.fc.eps_normal, FLAT_RATE_FACTOR * self.fc.eps_kappa)
        return {"alpha": float(alpha), "corner": corner, "tangent": tangent,
                "turning_normal": bool(rate >= flat_rate), "normal_rate": rate}

    # -- convenience ---------------------------------------------------------

    @property
    def regular_index(self) -> np.ndarray:
        return np.flatnonzero(self.in_regular)

    def interior_regular_index(self, margin: int = 1) -> np.ndarray:
        """Grid indices in the regular set whose ``margin`` neighbours are too."""
        ok = self.in_regular.copy()
        for k in range(1, margin + 1):
            ok &= np.roll(self.in_regular, k) & np.roll(self.in_regular, -k)
        return np.flatnonzero(ok)


def _dedupe(rulings: list[BoundaryRuling], tol: float) -> list[BoundaryRuling]:
    out: list[BoundaryRuling] = []
    for r in rulings:
        dup = False
        for q in out:
            same = np.linalg.norm(r.start - q.start) < tol and np.linalg.norm(r.end - q.end) < tol
            flipped = np.linalg.norm(r.start - q.end) < tol and np.linalg.norm(r.end - q.start) < tol
            if same or flipped:
                dup = True
                break
        if not dup:
            out.append(r)
    return out


# --------------------------------------------------------------------------
# pointwise queries
# --------------------------------------------------------------------------

def ruling_length(fc: FramedCurve, region: BoundaryRegion, alpha, side: int = 1) -> np.ndarray:
    s = sample_rulings(fc, region, alpha, side)
    if np.any(s.in_ruled & (s.ray_status != RAY_OK)) or not np.all(s.in_ruled):
        raise TangentRay("no regular ruling at the requested parameter")
    return s.ruling_length


def opposite_foot(fc: FramedCurve, region: BoundaryRegion, alpha, side: int = 1) -> np.ndarray:
    s = sample_rulings(fc, region, alpha, side)
    if not np.all(s.in_ruled & (s.ray_status == RAY_OK)):
        raise TangentRay("no regular ruling at the requested parameter")
    return s.opposite_foot


def admissible_sets(fc: FramedCurve, region: BoundaryRegion, n_alpha: int = 4096):
    """Ruled and regular sets as interval lists over the grid (regular intervals refined)."""
    field_ = RulingField(fc, region, n_alpha)
    return _runs(field_.alpha, field_.in_ruled, region.length), field_.intervals


def _runs(alpha: np.ndarray, mask: np.ndarray, length: float) -> list[tuple[float, float]]:
    if mask.all():
        return [(0.0, length)]
    out = []
    n = len(alpha)
    h = length / n
    start = None
    first = int(np.argmin(mask))  # begin scanning at an excluded sample
    for k in range(first, first + n + 1):
        i = k % n
        if mask[i] and start is None:
            start = alpha[i] + (length if k >= n else 0.0)
        if not mask[i] and start is not None:
            end = alpha[(k - 1) % n] + (length if k - 1 >= n else 0.0)
            out.append((float(start), float(end)))
            start = None
    return sorted((float(np.mod(a, length)), float(np.mod(a, length) + (b - a))) for a, b in out)


def check_closure(fc: FramedCurve, region: BoundaryRegion, alpha, side: int = 1) -> np.ndarray:
    """Distance between the image of the opposite foot and the tip of the image ruling."""
    s = sample_rulings(fc, region, alpha, side)
    if not np.all(s.in_ruled & (s.ray_status == RAY_OK)):
        raise TangentRay("no regular ruling at the requested parameter")
    return closure_residual(fc, s)


def closure_residual(fc: FramedCurve, s: RulingSample) -> np.ndarray:
    far = fc.jet(s.opposite_foot, 1).position
    return norm(far - s.frame.position - s.ruling_length[:, None] * s.frame.g)


def crossing_witness(c_i, f_i, beta_i, c_j, f_j) -> np.ndarray:
    """Sign witness for ruling j's line cutting ruling i strictly between its feet.

    With ``num = (f_j x N).(c_j - c_i)`` and ``den = (f_j x N).f_i`` the line of
    ruling j meets ruling i at distance ``num/den`` from its foot.  The witness
    ``den^2 * (num - beta_i*den) * num`` is negative exactly when that distance
    lies strictly inside ``(0, beta_i)``.
    """
    delta = c_j - c_i
    num = cross2(delta, f_j)
    den = cross2(f_i, f_j)
    return den**2 * (num - beta_i * den) * num


def check_crossing_pair(fc: FramedCurve, region: BoundaryRegion, alpha, alpha_other, tol: float | None = None) -> dict:
    s = sample_rulings(fc, region, np.array([alpha, alpha_other], dtype=float))
    if not np.all(s.in_ruled & (s.ray_status == RAY_OK)):
        raise TangentRay("both parameters need regular rulings")
    c, f, b = s.frame.point, s.frame.f, s.ruling_length
    w = float(crossing_witness(c[0], f[0], b[0], c[1], f[1]))
    if tol is None:
        tol = 1e-10 * region.diameter**2
    return {"ok": bool(w >= -tol), "witness": w}


def non_crossing(field_: RulingField, exhaustive: bool = False, pair_cap: int = CROSSING_PAIR_CAP,
                 tol: float | None = None, chunk: int = 512) -> dict:
    """Pairwise crossing test over ruled grid samples.

    By default every k-th sample is used with k chosen so the pair count stays
    under ``pair_cap``; samples next to the regular-interval ends are always
    tested against every ruled sample.
    """
    region = field_.region
    if tol is None:
        tol = 1e-10 * region.diameter**2
    s = field_.samples
    usable = np.flatnonzero(s.in_ruled & (s.ray_status == RAY_OK))
    report = {"pairs_checked": 0, "violations": 0, "worst_witness": 0.0, "stride": 1,
              "exhaustive": bool(exhaustive), "tolerance": tol, "worst_pair": None,
              "shared_endpoint_regular": 0, "shared_endpoint_warnings": 0}
    if usable.size == 0:
        return report
    if exhaustive:
        rows = usable
        stride = 1
    else:
        stride = max(1, int(np.ceil(usable.size / np.sqrt(pair_cap))))
        rows = usable[::stride]
    report["stride"] = int(stride)
    near_end = _near_interval_ends(field_, usable)
    blocks = [(rows, rows), (near_end, usable)] if near_end.size else [(rows, rows)]
    c, f, b, far_foot = s.frame.point, s.frame.f, s.ruling_length, s.opposite_foot
    tips = region.boundary.point(far_foot[usable], 1) if usable.size else np.zeros((0, 2))
    tip_of = dict(zip(usable.tolist(), range(len(usable))))
    worst = 0.0
    shared_tol = 1e-9 * region.diameter
    for rset, cset in blocks:
        for start in range(0, len(rset), chunk):
            ri = rset[start:start + chunk]
            w = crossing_witness(c[ri][:, None, :], f[ri][:, None, :], b[ri][:, None], c[cset][None, :, :], f[cset][None, :, :])
            report["pairs_checked"] += int(w.size)
            bad = w < -tol
            report["violations"] += int(np.count_nonzero(bad))
            if w.size and w.min() < worst:
                worst = float(w.min())
                k = np.unravel_index(np.argmin(w), w.shape)
                report["worst_pair"] = [float(field_.alpha[ri[k[0]]]), float(field_.alpha[cset[k[1]]])]
            # distinct rulings landing on the same boundary point
            ti = tips[[tip_of[i] for i in ri]]
            tj = tips[[tip_of[j] for j in cset]]
            close = norm(ti[:, None, :] - tj[None, :, :]) < shared_tol
            close &= ri[:, None] != cset[None, :]
            reg = field_.in_regular[ri][:, None] & field_.in_regular[cset][None, :]
            report["shared_endpoint_regular"] += int(np.count_nonzero(close & reg))
            report["shared_endpoint_warnings"] += int(np.count_nonzero(close & ~reg))
    report["worst_witness"] = worst
    return report


def _near_interval_ends(field_: RulingField, usable: np.ndarray) -> np.ndarray:
    if not field_.intervals:
        return np.zeros(0, dtype=int)
    h = field_.length / field_.n_alpha
    ends = np.array([e for iv in field_.intervals for e in iv])
    gap = periodic_gap(field_.alpha[usable][:, None], ends[None, :], field_.length).min(axis=1)
    return usable[gap <= 2.5 * h]


# --------------------------------------------------------------------------
# structural properties of the field
# --------------------------------------------------------------------------

def ruling_properties(field_: RulingField, fd_step: float | None = None) -> dict:
    """Residuals of the involution, antisymmetry, monotonicity and regularity properties."""
    fc, region = field_.fc, field_.region
    L = field_.length
    idx = field_.interior_regular_index(margin=1)
    out = {"samples": int(idx.size)}
    if idx.size == 0:
        out.update({"involution": 0.0, "f_antisymmetry": 0.0, "g_antisymmetry": 0.0, "length_symmetry": 0.0,
                    "normal_match": 0.0, "max_opposite_derivative": None, "opposite_derivative_negative": True,
                    "velocity_condition": 0.0, "margin_regular_min": None, "margin_ruled_min": None,
                    "small_g_m_count": 0})
        return out
    s = field_.samples.take(idx)
    far_foot = s.opposite_foot
    back = sample_rulings(fc, region, far_foot)
    ok_back = back.in_ruled & (back.ray_status == RAY_OK)
    out["unreturned"] = int(np.count_nonzero(~ok_back))
    out["involution"] = float(np.max(periodic_gap(back.opposite_foot[ok_back], s.frame.alpha[ok_back], L))) if ok_back.any() else 0.0
    out["f_antisymmetry"] = float(np.max(norm(back.frame.f[ok_back] + s.frame.f[ok_back])))
    out["g_antisymmetry"] = float(np.max(norm(back.frame.g[ok_back] + s.frame.g[ok_back])))
    out["length_symmetry"] = float(np.max(np.abs(back.ruling_length[ok_back] - s.ruling_length[ok_back])))
    out["normal_match"] = float(np.max(norm(back.frame.normal[ok_back] - s.frame.normal[ok_back])))
    h = fd_step if fd_step is not None else 1e-5 * L
    a = s.frame.alpha
    plus = sample_rulings(fc, region, np.mod(a + h, L))
    minus = sample_rulings(fc, region, np.mod(a - h, L))
    fine = (plus.in_ruled & minus.in_ruled & (plus.ray_status == RAY_OK) & (minus.ray_status == RAY_OK))
    dmu = signed_gap(plus.opposite_foot, minus.opposite_foot, L) / (2 * h)
    out["max_opposite_derivative"] = float(np.max(dmu[fine])) if fine.any() else None
    out["opposite_derivative_negative"] = bool(np.all(dmu[fine] < 0))
    far_t = fc.jet(far_foot, 1).velocity
    lhs = np.abs(dmu) * norm(np.cross(far_t, s.frame.g))
    margin = s.frame.g_m - s.ruling_length * s.frame.spread
    rel = np.abs(lhs - np.abs(margin)) / np.maximum(np.abs(margin), 1e-300)
    out["velocity_condition"] = float(np.max(rel[fine])) if fine.any() else 0.0
    out["margin_regular_min"] = float(np.min(margin))
    all_reg = field_.samples.take(field_.in_regular)
    out["margin_regular_min"] = float(np.min(all_reg.frame.g_m - all_reg.ruling_length * all_reg.frame.spread))
    ruled_ok = field_.samples.in_ruled & (field_.samples.ray_status == RAY_OK)
    rs = field_.samples.take(ruled_ok)
    out["margin_ruled_min"] = float(np.min(rs.frame.g_m - rs.ruling_length * rs.frame.spread)) if ruled_ok.any() else None
    out["small_g_m_count"] = int(np.count_nonzero(field_.samples.frame.g_m[field_.in_ruled] < 1e-6))
    return out
