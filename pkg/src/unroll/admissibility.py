"""Admissibility verdict for a framed curve over a region, with a machine-readable report."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .boundary_region import RAY_OK, BoundaryRegion
from .energy import EnergyReport, reduced_energy
from .framed_curve import FramedCurve, frame_data, validate_framed
from .geometry_core import UP, exterior_angle, norm, periodic_gap
from .rulings import RulingField, closure_residual, non_crossing

REPORT_VERSION = "1.0"

CLAUSES = ("framed_curve", "curvature_match", "corner_angles", "flatness", "ruling_closure", "non_crossing",
           "finite_energy")


@dataclass
class Options:
    """Every tolerance used by the verdict; ``None`` picks the documented default."""

    n_alpha: int = 4096
    closure_tol: float | None = None    # times the region diameter; 1e-8 analytic, 1e-4 sampled
    curvature_tol: float | None = None  # 1e-8 analytic, 1e-4 sampled
    angle_tol: float | None = None      # 1e-8 analytic, 1e-4 sampled
    flatness_tol: float | None = None   # 1e-3/length analytic, 1e-1/length sampled
    margin_tol: float = 0.0
    exhaustive_crossing: bool = False
    crossing_pair_cap: int = 1_000_000
    modulus: float = 1.0
    quad_epsabs: float = 1e-10
    quad_epsrel: float = 1e-8
    direct_oracle: bool = True

    def resolved(self, fc: FramedCurve, region: BoundaryRegion) -> dict:
        d = asdict(self)
        analytic = fc.analytic and region.boundary.analytic
        d["curvature_tol"] = self.curvature_tol if self.curvature_tol is not None else (1e-8 if analytic else 1e-4)
        d["angle_tol"] = self.angle_tol if self.angle_tol is not None else (1e-8 if analytic else 1e-4)
        d["flatness_tol"] = self.flatness_tol if self.flatness_tol is not None else (
            (1e-3 if analytic else 1e-1) / region.length)
        d["closure_tol"] = self.closure_tol if self.closure_tol is not None else (1e-8 if analytic else 1e-4)
        d["closure_tol_abs"] = d["closure_tol"] * region.diameter
        d["eps_normal"] = fc.eps_normal
        d["eps_kappa"] = fc.eps_kappa
        d["eps_flat"] = region.eps_flat
        d["crossing_tol"] = 1e-10 * region.diameter**2
        return d


@dataclass
class AdmissibilityReport:
    clauses: dict
    tolerances: dict
    grid: dict
    energy: dict | None
    diagnostics: dict = field(default_factory=dict)
    ruling_field: RulingField | None = field(default=None, repr=False)
    energy_report: EnergyReport | None = field(default=None, repr=False)

    @property
    def overall(self) -> bool:
        return all(c["passed"] for c in self.clauses.values())

    @property
    def failed(self) -> list[str]:
        return [k for k, c in self.clauses.items() if not c["passed"]]

    def to_dict(self) -> dict:
        return {"schema_version": REPORT_VERSION, "overall": self.overall, "failed": self.failed,
                "clauses": self.clauses, "tolerances": self.tolerances, "grid": self.grid,
                "energy": self.energy, "diagnostics": self.diagnostics}


def _clause(passed: bool, residual, tolerance, **extra) -> dict:
    out = {"passed": bool(passed), "residual": _clean(residual), "tolerance": _clean(tolerance)}
    out.update({k: _clean(v) for k, v in extra.items()})
    return out


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if not math.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        return v
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _probe_params(fc: FramedCurve, region: BoundaryRegion, n: int):
    grid = np.arange(n) * (region.length / n)
    joints = np.unique(np.concatenate([np.asarray(getattr(region.boundary, "joints", region.corners), dtype=float),
                                       fc.joints]))
    return grid, joints


def check_compatibility(fc: FramedCurve, region: BoundaryRegion, n_alpha: int = 4096) -> dict:
    """Compatibility residuals: curvature and corner-angle mismatch, plus flatness."""
    grid, joints = _probe_params(fc, region, n_alpha)
    corner_tol = 1e-9 * region.length if region.boundary.analytic else 0.5 * region.length / n_alpha
    all_corners = np.unique(np.concatenate([region.corners, fc.corners]))
    off = grid
    if all_corners.size:
        off = grid[periodic_gap(grid[:, None], all_corners[None, :], region.length).min(axis=1) > 1e-12 * region.length]
    kres, flat = 0.0, 0.0
    probes = [(off, 1)] + ([(joints, 1), (joints, -1)] if joints.size else [])
    eps_k = fc.eps_kappa
    for params, side in probes:
        if params.size == 0:
            continue
        fd = frame_data(fc, region, params, side)
        kres = max(kres, float(np.max(np.abs(fd.kappa_g - fd.kappa_c))))
        small = np.abs(fd.kappa_n) < eps_k
        if np.any(small):
            flat = max(flat, float(np.max(norm(fd.normal_rate[small]))))
    # corner sets and exterior angles
    rc, ic = region.corners, fc.corners
    unmatched_region = [float(a) for a in rc if ic.size == 0 or periodic_gap(ic, a, region.length).min() > corner_tol]
    unmatched_image = [float(a) for a in ic if rc.size == 0 or periodic_gap(rc, a, region.length).min() > corner_tol]
    angle_res = 0.0
    worst_corner = None
    if all_corners.size:
        th_c = exterior_angle(region.boundary, UP, all_corners)
        th_d = exterior_angle(fc.curve, lambda a: fc.normal(a, 1), all_corners)
        diff = np.abs(th_c - th_d)
        angle_res = float(diff.max())
        worst_corner = float(all_corners[int(np.argmax(diff))])
    return {"curvature": kres, "angles": angle_res, "flatness": flat, "worst_corner": worst_corner,
            "unmatched_region_corners": unmatched_region, "unmatched_image_corners": unmatched_image}


def check_admissible(fc: FramedCurve, region: BoundaryRegion, opts: Options | None = None) -> AdmissibilityReport:
    opts = opts or Options()
    tol = opts.resolved(fc, region)
    clauses: dict = {}
    validation = validate_framed(fc, region, opts.n_alpha)
    worst_key = max(validation.residuals, key=lambda k: validation.residuals[k] / validation.tolerances[k])
    clauses["framed_curve"] = _clause(validation.ok, validation.residuals[worst_key], validation.tolerances[worst_key],
                                      worst=worst_key, residuals=validation.residuals,
                                      tolerances=validation.tolerances)
    comp = check_compatibility(fc, region, opts.n_alpha)
    clauses["curvature_match"] = _clause(comp["curvature"] <= tol["curvature_tol"], comp["curvature"], tol["curvature_tol"])
    sets_match = not comp["unmatched_region_corners"] and not comp["unmatched_image_corners"]
    clauses["corner_angles"] = _clause(sets_match and comp["angles"] <= tol["angle_tol"], comp["angles"], tol["angle_tol"],
                                       corner_sets_match=sets_match, worst_corner=comp["worst_corner"],
                                       unmatched_region_corners=comp["unmatched_region_corners"],
                                       unmatched_image_corners=comp["unmatched_image_corners"])
    clauses["flatness"] = _clause(comp["flatness"] <= tol["flatness_tol"], comp["flatness"], tol["flatness_tol"])

    field_ = RulingField(fc, region, opts.n_alpha)
    s = field_.samples
    usable = s.in_ruled & (s.ray_status == RAY_OK)
    closure = float(np.max(closure_residual(fc, s.take(usable)))) if usable.any() else 0.0
    no_exit = int(np.count_nonzero(s.in_ruled & (s.ray_status != RAY_OK)))
    clauses["ruling_closure"] = _clause(closure <= tol["closure_tol_abs"], closure, tol["closure_tol_abs"],
                                        samples=int(np.count_nonzero(usable)), rays_without_exit=no_exit)
    crossings = non_crossing(field_, exhaustive=opts.exhaustive_crossing, pair_cap=opts.crossing_pair_cap,
                             tol=tol["crossing_tol"])
    crossing_ok = crossings["violations"] == 0 and crossings["shared_endpoint_regular"] == 0
    clauses["non_crossing"] = _clause(crossing_ok, crossings["worst_witness"], tol["crossing_tol"],
                                      **{k: v for k, v in crossings.items() if k != "tolerance"})
    energy = reduced_energy(field_, opts.modulus, opts.quad_epsabs, opts.quad_epsrel, direct=opts.direct_oracle)
    reg = field_.in_regular
    margin = float(np.min(s.frame.g_m[reg] - s.ruling_length[reg] * s.frame.spread[reg])) if reg.any() else None
    finite = math.isfinite(energy.energy)
    margin_ok = margin is None or margin > opts.margin_tol
    clauses["finite_energy"] = _clause(finite and margin_ok, energy.energy, "finite", margin=margin,
                                       margin_tol=opts.margin_tol, infinite_count=energy.infinite_count)
    grid = {"n_alpha": opts.n_alpha, "length": region.length, "diameter": region.diameter,
            "regular_intervals": [list(iv) for iv in field_.intervals],
            "boundary_rulings": [r.to_dict() for r in field_.boundary_rulings],
            "statement": "all checks are made at the stated grid resolution"}
    diagnostics = {"spread_route_disagreement": float(np.nanmax(np.abs(s.frame.spread - s.frame.spread_alt)[usable]))
                   if usable.any() else 0.0,
                   "shared_endpoint_warnings": crossings["shared_endpoint_warnings"]}
    return AdmissibilityReport(_clean(clauses), _clean(tol), _clean(grid), _clean(energy.to_dict()),
                               _clean(diagnostics), field_, energy)
