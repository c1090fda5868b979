"""Catalog of analytic (region, framed curve) pairs, admissible ones and defect-injected ones."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .boundary_region import BoundaryRegion, circle, polygon, rectangle
from .framed_curve import CurveJet, FramedCurve, JetFramedCurve, SurfaceFramedCurve
from .geometry_core import CircleArc, PiecewiseCurve, Segment, lift, rot90
from .surfaces import ConeMap, PlaneMap, ProfileCylinderMap


@dataclass
class Preset:
    name: str
    params: dict
    region: BoundaryRegion
    framed: FramedCurve
    expected: dict = field(default_factory=dict)
    admissible: bool = True
    # clause expected to fail for defect presets
    defect: str | None = None


def plane_identity(L: float = 2.0, W: float = 1.0) -> Preset:
    boundary = rectangle(L, W)
    region = BoundaryRegion(boundary)
    return Preset("plane_identity", {"L": L, "W": W}, region, SurfaceFramedCurve(boundary, PlaneMap()),
                  {"energy": 0.0})


def cylinder_wrap(L: float = 2.0, W: float = 1.0, R: float = 0.5, axial_scale: float = 1.0) -> Preset:
    if R <= 0:
        raise ValueError("radius must be positive")
    boundary = rectangle(L, W)
    region = BoundaryRegion(boundary)
    surf = ProfileCylinderMap([], [1.0 / R], axial_scale=axial_scale)
    return Preset("cylinder_wrap", {"L": L, "W": W, "R": R}, region, SurfaceFramedCurve(boundary, surf),
                  {"energy": L * W / (2 * R**2), "mean_curvature": 1 / (2 * R)})


def cone_sector(gamma: float = np.pi / 6, rho0: float = 1.0, rho1: float = 2.0, theta: float = 1.0) -> Preset:
    """Annular sector of flat angle ``theta`` about the apex, wrapped on a cone of half-angle ``gamma``."""
    if not (0 < rho0 < rho1) or not (0 < theta < np.pi):
        raise ValueError("need 0 < rho0 < rho1 and 0 < theta < pi")
    u = np.array([np.cos(theta), np.sin(theta)])
    pieces = [
        Segment((rho0, 0.0), (rho1, 0.0)),
        CircleArc((0.0, 0.0), rho1, 0.0, theta),
        Segment(rho1 * u, rho0 * u),
        CircleArc((0.0, 0.0), rho0, theta, -theta),
    ]
    boundary = PiecewiseCurve(pieces)
    region = BoundaryRegion(boundary)
    fc = SurfaceFramedCurve(boundary, ConeMap(gamma))
    cot = 1.0 / np.tan(gamma)
    return Preset("cone_sector", {"gamma": gamma, "rho0": rho0, "rho1": rho1, "theta": theta}, region, fc,
                  {"energy": theta * cot**2 / 2 * np.log(rho1 / rho0)})


def two_cylinder(a: float = 1.0, b: float = 1.0, R1: float = 0.5, R2: float = 0.25, shift: float | None = None) -> Preset:
    """Two squares side by side, each wrapped on its own cylinder; the second is raised by ``shift``.

    The shared vertical segment is a ruling of both families with corners at
    both ends.
    """
    if shift is None:
        shift = (a - b) / 2 if a > b else a / 2
    if not (0 < shift < a) or shift + b <= a:
        raise ValueError("shift must place the second square's bottom inside the first square's right edge")
    verts = [(0, 0), (a, 0), (a, shift), (a + b, shift), (a + b, shift + b), (a, shift + b), (a, a), (0, a)]
    boundary = polygon(verts)
    region = BoundaryRegion(boundary)
    surf = ProfileCylinderMap([a], [1.0 / R1, 1.0 / R2])
    return Preset("two_cylinder", {"a": a, "b": b, "R1": R1, "R2": R2, "shift": shift}, region,
                  SurfaceFramedCurve(boundary, surf),
                  {"energy": a**2 / (2 * R1**2) + b**2 / (2 * R2**2),
                   "mean_curvature_jump": abs(1 / R1 - 1 / R2) / 2})


def stadium_curve(r: float, s: float, center=(0.0, 0.0)) -> PiecewiseCurve:
    """Stadium with vertical straights of length ``s`` and semicircular caps of radius ``r``."""
    cx, cy = center
    pieces = [
        Segment((cx + r, cy - s / 2), (cx + r, cy + s / 2)),
        CircleArc((cx, cy + s / 2), r, 0.0, np.pi),
        Segment((cx - r, cy + s / 2), (cx - r, cy - s / 2)),
        CircleArc((cx, cy - s / 2), r, np.pi, np.pi),
    ]
    return PiecewiseCurve(pieces)


def stadium_roll(r: float = 0.5, s: float = 1.0, R: float = 1.0) -> Preset:
    boundary = stadium_curve(r, s)
    region = BoundaryRegion(boundary)
    surf = ProfileCylinderMap([], [1.0 / R])
    return Preset("stadium_roll", {"r": r, "s": s, "R": R}, region, SurfaceFramedCurve(boundary, surf),
                  {"energy": (np.pi * r**2 + 2 * r * s) / (2 * R**2)})


def disk_roll(rho: float = 0.5, R: float = 1.0) -> Preset:
    boundary = circle(rho)
    region = BoundaryRegion(boundary)
    surf = ProfileCylinderMap([], [1.0 / R])
    return Preset("disk_roll", {"rho": rho, "R": R}, region, SurfaceFramedCurve(boundary, surf),
                  {"energy": np.pi * rho**2 / (2 * R**2)})


def ramp_roll(a: float = 0.5, b: float = 1.0, W: float = 1.0, rate: float = 1.0) -> Preset:
    """Rectangle ``[-a, b] x [0, W]`` on a surface that is flat for ``x < 0`` and bends for ``x > 0``.

    The profile curvature grows linearly, ``rate * x``, so the normal is
    continuously differentiable across ``x = 0`` and the rulings there end on
    feet where the normal derivative vanishes.  The flat part is a planar
    component of positive area.
    """
    if a <= 0 or b <= 0 or rate * b**2 / 2 >= np.pi / 2:
        raise ValueError("need a, b > 0 and a profile turning less than a right angle")
    boundary = polygon([(-a, 0.0), (b, 0.0), (b, W), (-a, W)])
    region = BoundaryRegion(boundary)
    surf = ProfileCylinderMap([0.0], [0.0, 0.0], [0.0, rate])
    return Preset("ramp_roll", {"a": a, "b": b, "W": W, "rate": rate}, region, SurfaceFramedCurve(boundary, surf),
                  {"energy": W * rate**2 * b**3 / 6})


# --------------------------------------------------------------------------
# defect-injected variants
# --------------------------------------------------------------------------

def cylinder_rim_stretch(L: float = 2.0, W: float = 1.0, R: float = 0.5, stretch: float = 0.01) -> Preset:
    p = cylinder_wrap(L, W, R, axial_scale=1.0 + stretch)
    p.name = "cylinder_rim_stretch"
    p.params = {"L": L, "W": W, "R": R, "stretch": stretch}
    p.admissible, p.defect = False, "ruling_closure"
    return p


def crossing_rulings(radius: float = 1.0, tilt: float = 0.3) -> Preset:
    """Flat circle whose normal leans outward by ``tilt``: every ruling is a diameter."""
    boundary = circle(radius)
    region = BoundaryRegion(boundary)
    ct, st = np.cos(tilt), np.sin(tilt)

    def fn(alpha, side):
        th = alpha / radius
        out = np.column_stack([np.cos(th), np.sin(th), np.zeros_like(th)])
        tan = np.column_stack([-np.sin(th), np.cos(th), np.zeros_like(th)])
        up = np.zeros_like(out)
        up[:, 2] = 1.0
        pos = radius * out
        n = ct * up + st * out
        return CurveJet(pos, tan, -out / radius, n, st * tan / radius, -st * out / radius**2)

    fc = JetFramedCurve(boundary.length, fn)
    return Preset("crossing_rulings", {"radius": radius, "tilt": tilt}, region, fc, {},
                  admissible=False, defect="non_crossing")


def corner_angle_defect(side: float = 1.0, skew: float = 0.01) -> Preset:
    """Square mapped onto a rhombus whose corner angles differ from right angles by ``skew``."""
    boundary = rectangle(side, side)
    region = BoundaryRegion(boundary)
    phi = np.pi / 2 - skew
    surf = PlaneMap([[1.0, np.cos(phi)], [0.0, np.sin(phi)]])
    return Preset("corner_angle_defect", {"side": side, "skew": skew}, region, SurfaceFramedCurve(boundary, surf),
                  {}, admissible=False, defect="corner_angles")


def curvature_mismatch(r: float = 0.8) -> Preset:
    """Stadium of perimeter 2*pi mapped onto the unit circle with a constant normal."""
    s = np.pi - np.pi * r
    boundary = stadium_curve(r, s)
    region = BoundaryRegion(boundary)

    def fn(alpha, side):
        th = alpha
        out = np.column_stack([np.cos(th), np.sin(th), np.zeros_like(th)])
        tan = np.column_stack([-np.sin(th), np.cos(th), np.zeros_like(th)])
        n = np.zeros_like(out)
        n[:, 2] = 1.0
        return CurveJet(out, tan, -out, n, np.zeros_like(n), np.zeros_like(n))

    fc = JetFramedCurve(boundary.length, fn)
    return Preset("curvature_mismatch", {"r": r}, region, fc, {}, admissible=False, defect="curvature_match")


ADMISSIBLE: dict[str, Callable[..., Preset]] = {
    "plane_identity": plane_identity,
    "cylinder_wrap": cylinder_wrap,
    "cone_sector": cone_sector,
    "two_cylinder": two_cylinder,
    "stadium_roll": stadium_roll,
    "disk_roll": disk_roll,
    "ramp_roll": ramp_roll,
}

DEFECTS: dict[str, Callable[..., Preset]] = {
    "cylinder_rim_stretch": cylinder_rim_stretch,
    "crossing_rulings": crossing_rulings,
    "corner_angle_defect": corner_angle_defect,
    "curvature_mismatch": curvature_mismatch,
}

CATALOG: dict[str, Callable[..., Preset]] = {**ADMISSIBLE, **DEFECTS}


def make_preset(name: str, **params) -> Preset:
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**params)
