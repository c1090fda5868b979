"""Framed boundary curves (image curve plus surface normal) and the per-parameter ruling data."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ZeroNormalDerivative
from .geometry_core import (CORNER_ANGLE, ArcCurve, SampledCurve, _turn_angle, as_params, darboux_reference,
                            dot, norm, periodic_gap, rot90)

EPS_PERP = 1e-8


@dataclass(frozen=True)
class CurveJet:
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    normal: np.ndarray
    normal_rate: np.ndarray
    normal_accel: np.ndarray


class FramedCurve:
    """Pair of an image curve and a unit normal field, both on ``[0, length)``.

    Subclasses implement :meth:`jet`.  ``corners`` lists the parameters where
    the image curve has a tangent discontinuity; ``joints`` additionally lists
    parameters where second derivatives may jump.
    """

    analytic = True

    def __init__(self, length: float, corners, joints=None):
        self.length = float(length)
        self.corners = np.sort(np.asarray(corners, dtype=float))
        self.joints = self.corners if joints is None else np.sort(np.asarray(joints, dtype=float))

    def jet(self, alpha, side: int = 1) -> CurveJet:
        raise NotImplementedError

    @property
    def eps_normal(self) -> float:
        return 1e-8 / self.length if self.analytic else 1e-4

    @property
    def eps_kappa(self) -> float:
        return 1e-8 if self.analytic else 1e-4

    @property
    def curve(self) -> ArcCurve:
        return _ImageCurve(self)

    def normal(self, alpha, side: int = 1) -> np.ndarray:
        return self.jet(alpha, side).normal


class _ImageCurve(ArcCurve):
    """:class:`ArcCurve` view of the image curve of a framed curve."""

    def __init__(self, framed: FramedCurve):
        super().__init__(framed.length, framed.corners, framed.analytic, 3)
        self._framed = framed

    def jet(self, alpha, side: int = 1):
        j = self._framed.jet(alpha, side)
        return j.position, j.velocity, j.acceleration


def _image_corners(jet_fn, candidates, length) -> np.ndarray:
    out = []
    for a in np.asarray(candidates, dtype=float):
        t_in = jet_fn(np.array([a]), -1).velocity[0]
        t_out = jet_fn(np.array([a]), 1).velocity[0]
        if _turn_angle(t_in, t_out) > CORNER_ANGLE:
            out.append(a)
    return np.array(out)


class SurfaceFramedCurve(FramedCurve):
    """Boundary of a planar region pushed through an analytic surface map."""

    def __init__(self, boundary: ArcCurve, surface, extra_joints=()):
        self.boundary = boundary
        self.surface = surface
        joints = np.unique(np.concatenate([np.asarray(getattr(boundary, "joints", boundary.corners), dtype=float),
                                           np.asarray(extra_joints, dtype=float)]))
        FramedCurve.__init__(self, boundary.length, [], joints)
        self.corners = _image_corners(self.jet, joints, self.length)

    def jet(self, alpha, side: int = 1) -> CurveJet:
        pos, vel, acc = self.boundary.jet(alpha, side)
        return CurveJet(*self.surface.lift(pos, vel, acc, side))


class JetFramedCurve(FramedCurve):
    """Framed curve given by a callable ``fn(alpha, side) -> CurveJet``."""

    def __init__(self, length: float, fn: Callable[[np.ndarray, int], CurveJet], joints=(), analytic: bool = True):
        FramedCurve.__init__(self, length, [], joints)
        self._fn = fn
        self.analytic = analytic
        self.corners = _image_corners(self.jet, self.joints, self.length)

    def jet(self, alpha, side: int = 1) -> CurveJet:
        a = np.mod(as_params(alpha), self.length)
        return self._fn(a, side)


class FlippedFramedCurve(FramedCurve):
    """Same image curve with the normal field reversed."""

    def __init__(self, base: FramedCurve):
        FramedCurve.__init__(self, base.length, base.corners, base.joints)
        self.base = base
        self.analytic = base.analytic

    def jet(self, alpha, side: int = 1) -> CurveJet:
        j = self.base.jet(alpha, side)
        return CurveJet(j.position, j.velocity, j.acceleration, -j.normal, -j.normal_rate, -j.normal_accel)


class TiltedFramedCurve(FramedCurve):
    """Normal rotated by a fixed angle toward the image tangent.

    The tilted normal is no longer orthogonal to the tangent, so this only
    serves to exercise validation.  Its second derivative drops the term that
    would need the third derivative of the image curve.
    """

    def __init__(self, base: FramedCurve, angle: float):
        FramedCurve.__init__(self, base.length, base.corners, base.joints)
        self.base = base
        self.analytic = base.analytic
        self.angle = float(angle)

    def jet(self, alpha, side: int = 1) -> CurveJet:
        j = self.base.jet(alpha, side)
        c, s = np.cos(self.angle), np.sin(self.angle)
        return CurveJet(j.position, j.velocity, j.acceleration, c * j.normal + s * j.velocity,
                        c * j.normal_rate + s * j.acceleration, c * j.normal_accel)


class SampledFramedCurve(FramedCurve):
    """Framed curve from uniform samples of the image curve and the normal field."""

    analytic = False

    def __init__(self, positions: np.ndarray, normals: np.ndarray, length: float, corners=None):
        self.image = SampledCurve(positions, length, corners)
        corner_params = self.image.corners
        self.normals = SampledCurve(normals, length, corner_params)
        FramedCurve.__init__(self, length, corner_params)

    @property
    def spacing(self) -> float:
        return self.image.h

    def jet(self, alpha, side: int = 1) -> CurveJet:
        pos, vel, acc = self.image.jet(alpha, side)
        nrm, nrm1, nrm2 = self.normals.jet(alpha, side)
        return CurveJet(pos, vel, acc, nrm / norm(nrm)[:, None], nrm1, nrm2)


# --------------------------------------------------------------------------
# per-parameter ruling data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameData:
    """Image and reference frames, with the ruling quantities, at a batch of parameters.

    Ruling quantities are NaN where the normal derivative vanishes (``ruled``
    is False there).  ``spread`` uses the image geodesic curvature and
    ``spread_alt`` the reference curvature; their difference is a diagnostic.
    """

    alpha: np.ndarray
    side: int
    point: np.ndarray            # c, (k, 2)
    tangent_ref: np.ndarray      # T
    inward: np.ndarray           # M_in
    kappa_c: np.ndarray
    position: np.ndarray         # d
    tangent: np.ndarray          # t
    conormal: np.ndarray         # m
    normal: np.ndarray           # n
    normal_rate: np.ndarray      # n'
    kappa_g: np.ndarray
    kappa_n: np.ndarray
    tau_g: np.ndarray
    ruled: np.ndarray
    g: np.ndarray
    g_t: np.ndarray
    g_m: np.ndarray
    g_rate: np.ndarray
    g_t_rate: np.ndarray
    g_m_rate: np.ndarray
    spread: np.ndarray
    spread_alt: np.ndarray
    f: np.ndarray
    f_perp: np.ndarray
    f_rate: np.ndarray

    @property
    def normal_rate_norm(self) -> np.ndarray:
        return norm(self.normal_rate)


def frame_data(fc: FramedCurve, region, alpha, side: int = 1) -> FrameData:
    a = as_params(alpha)
    ref = darboux_reference(region.boundary, a, side)
    c = region.boundary.point(a, side)
    j = fc.jet(a, side)
    t, dd, n, n1, n2 = j.velocity, j.acceleration, j.normal, j.normal_rate, j.normal_accel
    m = np.cross(n, t)
    kg = dot(np.cross(t, dd), n)
    kn = dot(dd, n)
    tau = -dot(n1, m)
    speed = norm(n1)
    ruled = speed >= fc.eps_normal
    with np.errstate(invalid="ignore", divide="ignore"):
        sgn = np.where(kn >= 0, 1.0, -1.0)
        inv = np.where(ruled, 1.0 / speed, np.nan)
        cr = np.cross(n1, n)
        g = (sgn * inv)[:, None] * cr
        g1 = (sgn * inv)[:, None] * (np.cross(n2, n) - cr * (dot(n1, n2) * inv**2)[:, None])
        g_t = dot(g, t)
        g_m = dot(g, m)
        m1 = np.cross(n1, t) + np.cross(n, dd)
        g_t1 = dot(g1, t) + dot(g, dd)
        g_m1 = dot(g1, m) + dot(g, m1)
        spread = kg - g_m * g_t1 + g_t * g_m1
        T, M, kc = ref.tangent, ref.inward, ref.curvature
        f = g_t[:, None] * T + g_m[:, None] * M
        f_perp = g_m[:, None] * T - g_t[:, None] * M
        f1 = ((g_t1 - g_m * kc)[:, None] * T + (g_t * kc + g_m1)[:, None] * M)
        spread_alt = -dot(f1, f_perp)
    return FrameData(a, side, c, T, M, kc, j.position, t, m, n, n1, kg, kn, tau, ruled,
                     g, g_t, g_m, g1, g_t1, g_m1, spread, spread_alt, f, f_perp, f1)


def _single(fc, region, alpha, side):
    fd = frame_data(fc, region, alpha, side)
    if not np.all(fd.ruled):
        raise ZeroNormalDerivative(f"normal derivative vanishes at alpha={np.asarray(alpha)}")
    return fd


def image_ruling_direction(fc: FramedCurve, alpha, region=None, side: int = 1) -> np.ndarray:
    """Unit image ruling direction; raises :class:`ZeroNormalDerivative` off the ruled set."""
    a = as_params(alpha)
    j = fc.jet(a, side)
    speed = norm(j.normal_rate)
    if np.any(speed < fc.eps_normal):
        raise ZeroNormalDerivative(f"normal derivative vanishes at alpha={a[speed < fc.eps_normal]}")
    kn = dot(j.acceleration, j.normal)
    sgn = np.where(kn >= 0, 1.0, -1.0)
    return (sgn / speed)[:, None] * np.cross(j.normal_rate, j.normal)


def reference_ruling_direction(fc: FramedCurve, region, alpha, side: int = 1) -> np.ndarray:
    return _single(fc, region, alpha, side).f


def spread(fc: FramedCurve, region, alpha, side: int = 1) -> np.ndarray:
    return _single(fc, region, alpha, side).spread


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass
class ValidationReport:
    residuals: dict
    tolerances: dict
    passed: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self) -> dict:
        return {"residuals": self.residuals, "tolerances": self.tolerances, "passed": self.passed, "ok": self.ok}


def validate_framed(fc: FramedCurve, region, n_samples: int = 4096) -> ValidationReport:
    """Residuals of the framed-curve requirements on a uniform grid plus every joint."""
    a = np.unique(np.concatenate([np.arange(n_samples) * (fc.length / n_samples), fc.joints]))
    res = {}
    worst = {k: 0.0 for k in ("unit_speed", "tangency", "unit_normal")}
    for side in (1, -1):
        j = fc.jet(a, side)
        worst["unit_speed"] = max(worst["unit_speed"], float(np.max(np.abs(norm(j.velocity) - 1.0))))
        worst["tangency"] = max(worst["tangency"], float(np.max(np.abs(dot(j.velocity, j.normal)))))
        worst["unit_normal"] = max(worst["unit_normal"], float(np.max(np.abs(norm(j.normal) - 1.0))))
    res.update(worst)
    if fc.joints.size:
        jump = norm(fc.jet(fc.joints, 1).normal - fc.jet(fc.joints, -1).normal)
        res["normal_continuity"] = float(jump.max())
    else:
        res["normal_continuity"] = 0.0
    # difference quotients of the normal-derivative direction on smooth stretches
    grid = np.arange(n_samples) * (fc.length / n_samples)
    h = fc.length / n_samples
    rate = fc.jet(grid, 1).normal_rate
    speed = norm(rate)
    ok = speed >= fc.eps_normal
    direction = np.where(ok[:, None], rate / np.where(ok, speed, 1.0)[:, None], 0.0)
    nxt = np.roll(np.arange(n_samples), -1)
    pair = ok & ok[nxt]
    if fc.joints.size:
        # skip pairs that straddle a joint
        lo, hi = grid, grid + h
        straddle = np.zeros(n_samples, dtype=bool)
        for b in fc.joints:
            straddle |= (lo <= b) & (b <= hi) | (periodic_gap(lo, b, fc.length) < 1e-12)
        pair &= ~straddle
    quotient = norm(direction[nxt] - direction) / h
    res["normal_direction_quotient"] = float(quotient[pair].max()) if np.any(pair) else 0.0
    tol_unit = 1e-10 if fc.analytic else 1e-6
    tol = {
        "unit_speed": tol_unit,
        "tangency": EPS_PERP if fc.analytic else 1e-6,
        "unit_normal": tol_unit,
        "normal_continuity": 1e-8 if fc.analytic else 1e-4,
        "normal_direction_quotient": 1e6 / fc.length,
    }
    passed = {k: bool(res[k] <= tol[k]) for k in tol}
    return ValidationReport(res, tol, passed)
