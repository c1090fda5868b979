"""Acceptance criteria 1-9, one test each.

Every test prints a single ``PASS``/``FAIL`` line naming its criterion,
whether or not pytest captures output, and then asserts the same checks.
Run with ``pytest tests/test_acceptance.py -v``.
"""
import math
import time
from functools import lru_cache

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from unroll import (ADMISSIBLE, DEFECTS, RulingField, build_immersion, check_admissible, make_preset,
                    reduced_energy, verify_isometry)
from unroll.energy import mean_curvature_from
from unroll.rulings import ruling_properties

from conftest import cylinder_descent, field, oracle_values, preset, regularity

RULED = ["cylinder_wrap", "cone_sector", "two_cylinder", "stadium_roll", "disk_roll", "ramp_roll"]


def rel(a, b):
    return abs(a - b) / abs(b)


def verdict(capsys, number: int, title: str, checks: dict) -> None:
    ok = all(v for v, _ in checks.values())
    failed = [k for k, (v, _) in checks.items() if not v]
    detail = "; ".join(f"{k}={d}" for k, (_, d) in checks.items())
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} [{detail}]"
    if failed:
        line += f" failed: {', '.join(failed)}"
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


@lru_cache(maxsize=None)
def timed_regularity(name: str):
    """Construction plus verification from scratch, with the wall time."""
    t0 = time.perf_counter()
    p = make_preset(name)
    rep = verify_isometry(build_immersion(p.framed, p.region, RulingField(p.framed, p.region, 4096)))
    return rep, time.perf_counter() - t0


def test_criterion_1_cylinder_closed_form(capsys):
    t0 = time.perf_counter()
    p = make_preset("cylinder_wrap", L=2.0, W=1.0, R=0.5)
    rep = reduced_energy(RulingField(p.framed, p.region, 4096))
    seconds = time.perf_counter() - t0
    exact = 2.0 * 1.0 / (2 * 0.5**2)
    frozen = oracle_values()["energy"]["cylinder_wrap"]
    verdict(capsys, 1, "cylinder closed form", {
        "oracle": (exact == frozen, f"{frozen}"),
        "energy": (rel(rep.energy, exact) < 1e-8, f"{rep.energy:.12g}"),
        "direct": (rel(rep.energy, rep.energy_direct) < 1e-6, f"{rel(rep.energy, rep.energy_direct):.2e}"),
        "runtime": (seconds < 5.0, f"{seconds:.2f}s"),
    })


def test_criterion_2_cone_log_branch(capsys):
    p = make_preset("cone_sector", gamma=math.pi / 6, rho0=1.0, rho1=2.0, theta=1.0)
    rep = reduced_energy(RulingField(p.framed, p.region, 4096))
    exact = 0.5 / math.tan(math.pi / 6) ** 2 * math.log(2.0)
    frozen = oracle_values()["energy"]["cone_sector"]
    verdict(capsys, 2, "cone logarithmic branch", {
        "oracle": (rel(frozen, exact) < 1e-12, f"{frozen:.12g}"),
        "energy": (rel(rep.energy, exact) < 1e-6, f"{rep.energy:.12g}"),
        "log_fraction": (rep.log_fraction_regular == 1.0, f"{rep.log_fraction_regular}"),
        "direct": (rel(rep.energy, rep.energy_direct) < 1e-4, f"{rel(rep.energy, rep.energy_direct):.2e}"),
    })


def test_criterion_3_two_cylinder_composite(capsys):
    p = make_preset("two_cylinder", a=1.0, b=1.0, R1=0.5, R2=0.25)
    energy = reduced_energy(RulingField(p.framed, p.region, 4096)).energy
    reg = regularity("two_cylinder")
    flagged = [j for j in reg.mean_curvature_jumps if j["flagged"]]
    h_jump = abs(1 / 0.5 - 1 / 0.25) / 2
    verdict(capsys, 3, "two-cylinder composite", {
        "energy": (rel(energy, 10.0) < 1e-6 and oracle_values()["energy"]["two_cylinder"] == 10.0, f"{energy:.12g}"),
        "normal_jump": (reg.normal_jump < 1e-8, f"{reg.normal_jump:.2e}"),
        "flagged": (len(flagged) > 0, f"{len(flagged)}"),
        "H_jump": (bool(flagged) and all(rel(j["mean_curvature_jump"], h_jump) < 0.05 for j in flagged),
                   ",".join(f"{j['mean_curvature_jump']:.4f}" for j in flagged)),
        "trace_jump": (bool(flagged) and all(rel(j["trace_jump"], 2 * h_jump) < 0.05 for j in flagged),
                       ",".join(f"{j['trace_jump']:.4f}" for j in flagged)),
    })


def test_criterion_4_isometry_suite(capsys):
    checks = {}
    for name in sorted(ADMISSIBLE):
        rep, seconds = timed_regularity(name)
        ok = (rep.metric_error < 1e-6 and rep.gaussian_ratio < 1e-4 and rep.collinearity < 1e-10 and seconds < 30)
        checks[name] = (ok, f"metric {rep.metric_error:.1e} K {rep.gaussian_ratio:.1e} "
                            f"collinear {rep.collinearity:.1e} {seconds:.1f}s")
    verdict(capsys, 4, "isometry suite on a 200x50 grid", checks)


def test_criterion_5_ruling_field(capsys):
    checks = {}
    for name in RULED:
        f = field(name)
        r = ruling_properties(f)
        worst = max(r["f_antisymmetry"], r["g_antisymmetry"], r["normal_match"])
        ok = (r["involution"] < 1e-7 * f.length and r["unreturned"] == 0 and r["opposite_derivative_negative"]
              and worst < 1e-7 and r["margin_regular_min"] > 0 and r["margin_ruled_min"] >= -1e-10)
        checks[name] = (ok, f"involution {r['involution']:.1e} antisym {worst:.1e} "
                            f"margin {r['margin_regular_min']:.2e}/{r['margin_ruled_min']:.2e}")
    verdict(capsys, 5, "ruling field at 4096 samples", checks)


def test_criterion_6_boundary_identity(capsys):
    checks = {}
    for name in RULED:
        f = field(name)
        s = f.samples.take(f.in_regular)
        fd = s.frame
        h0 = mean_curvature_from(s, np.zeros(len(fd.alpha)))
        scale = float(np.max(fd.kappa_n**2))
        resid = float(np.max(np.abs(2 * fd.kappa_n * h0 - fd.kappa_n**2 - fd.tau_g**2)))
        checks[name] = (resid < 1e-8 * scale, f"{resid / scale:.1e}")
    verdict(capsys, 6, "boundary mean-curvature identity", checks)


def test_criterion_7_defect_detection(capsys):
    checks = {}
    for name in sorted(DEFECTS):
        p = preset(name)
        rep = check_admissible(p.framed, p.region)
        checks[name] = (not rep.overall and p.defect in rep.failed, f"failed {'+'.join(rep.failed)}")
    false_rejections = []
    for name in sorted(ADMISSIBLE):
        p = preset(name)
        if not check_admissible(p.framed, p.region).overall:
            false_rejections.append(name)
    checks["false_rejections"] = (not false_rejections, f"{len(false_rejections)}")
    verdict(capsys, 7, "defect detection", checks)


def test_criterion_8_gradient_checks(capsys):
    checks = {}
    for name in sorted(ADMISSIBLE):
        rep, _ = timed_regularity(name)
        ok = rep.gradient_fd < 1e-8 and rep.q_consistency < 1e-6
        checks[name] = (ok, f"fd {rep.gradient_fd:.1e} q {rep.q_consistency:.1e}")
    diam = preset("cylinder_wrap").region.diameter
    step = timed_regularity("cylinder_wrap")[0].grid.get("fd_step")
    checks["step"] = (step is not None and step == pytest.approx(1e-5 * diam), f"{step}")
    verdict(capsys, 8, "gradient checks", checks)


def test_criterion_9_optimizer(capsys):
    family, p, trace = cylinder_descent()
    golden = minimize_scalar(lambda r: family.reference([r]), bracket=(0.5, 1.0, 3.0), method="golden",
                             tol=1e-12).x
    frozen = oracle_values()["cylinder_radius_optimum"]
    verdict(capsys, 9, "optimizer sanity", {
        "oracle": (rel(golden, frozen) < 1e-8, f"golden {golden:.10f} root {frozen:.10f}"),
        "optimum": (rel(float(p[0]), golden) < 1e-6, f"{float(p[0]):.10f}"),
        "evaluations": (trace.evaluations < 200, f"{trace.evaluations}"),
        "monotone": (trace.monotone(), f"{len(trace.iterates)} iterates"),
    })
