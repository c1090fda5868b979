"""Mean curvature along rulings and the bending energy as a boundary line integral.

The energy of the ruled part is ``2 * integral(H^2)`` over the region.  Each
ruling is covered twice by the boundary parameterization, once from each
foot, so integrating ``H^2 J`` over every foot and every distance along its
ruling gives the energy directly.  Along a ruling the distance integral has a
closed form, which turns the energy into ``integral(energy_density)`` over the
boundary.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad, quad_vec

from .errors import DivergentEnergy, SingularRuling
from .geometry_core import cross2, dot, norm
from .rulings import RulingField, RulingSample, sample_rulings

LIMIT_SWITCH = 1e-6
SERIES_SWITCH = 1e-3
SINGULAR_TOL = 1e-12
# longest run of infinite-density samples, as a fraction of the boundary
# length, still read as the threshold window around an isolated zero of kappa_n
NULL_RUN_FRACTION = 1e-2

BRANCH_LOG, BRANCH_SERIES, BRANCH_LIMIT, BRANCH_FLAT, BRANCH_INFINITE = "log", "series", "limit", "flat", "infinite"


def mean_curvature(fc, region, alpha, beta, side: int = 1) -> np.ndarray:
    """Mean curvature at distance ``beta`` along the ruling from ``alpha`` (regular feet only)."""
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    b = np.broadcast_to(np.asarray(beta, dtype=float), a.shape)
    s = sample_rulings(fc, region, a, side)
    if not np.all(s.in_regular):
        raise SingularRuling("mean curvature along rulings needs regular feet")
    if np.any((b < 0) | (b > s.ruling_length * (1 + 1e-12))):
        raise ValueError("beta outside [0, ruling length]")
    return mean_curvature_from(s, b)


def mean_curvature_from(s: RulingSample, beta) -> np.ndarray:
    fd = s.frame
    jac = fd.g_m - beta * fd.spread
    if np.any(jac <= SINGULAR_TOL):
        raise SingularRuling("rulings are singular at the requested point")
    return fd.kappa_n / (2 * fd.g_m * jac)


def mean_curvature_direct(s: RulingSample, beta) -> np.ndarray:
    """Mean curvature of the ruled surface from its first and second fundamental forms."""
    fd = s.frame
    beta = np.asarray(beta, dtype=float)
    t = fd.tangent
    if beta.ndim == 2:
        r_a = t[:, None, :] + beta[..., None] * fd.g_rate[:, None, :]
        n1 = fd.normal_rate[:, None, :]
        tg = fd.g_t[:, None]
    else:
        r_a = t + beta[:, None] * fd.g_rate
        n1 = fd.normal_rate
        tg = fd.g_t
    return -dot(n1, r_a) / (2 * (dot(r_a, r_a) - tg**2))


@dataclass
class DensitySample:
    alpha: np.ndarray
    phi: np.ndarray
    branch: np.ndarray


def energy_density(field_: RulingField | None, alpha=None, modulus: float = 1.0, sample: RulingSample | None = None,
                   fc=None, region=None) -> DensitySample:
    """Energy density per unit boundary length with the branch that produced each value.

    Regular feet use the logarithmic form, switching to a series for small
    ``x = ruling_length * spread / g_m`` and to the G = 0 limit (with its
    first-order correction) for very small ``x``.  Off the regular set the
    density is 0 where the normal is constant and infinite otherwise.
    """
    if sample is None:
        if field_ is not None and alpha is None:
            sample = field_.samples
        else:
            fc = fc if fc is not None else field_.fc
            region = region if region is not None else field_.region
            sample = sample_rulings(fc, region, alpha)
    fd = sample.frame
    n = len(fd.alpha)
    phi = np.zeros(n)
    branch = np.full(n, BRANCH_FLAT, dtype=object)
    reg = sample.in_regular
    flat = ~reg & (fd.normal_rate_norm < _eps_normal(field_, fc))
    branch[~reg & ~flat] = BRANCH_INFINITE
    phi[~reg & ~flat] = np.inf
    if np.any(reg):
        kn, gm, G, b = fd.kappa_n[reg], fd.g_m[reg], fd.spread[reg], sample.ruling_length[reg]
        x = b * G / gm
        base = modulus * b * kn**2 / (4 * gm**3)
        val = np.empty_like(x)
        br = np.empty(x.shape, dtype=object)
        lim = np.abs(x) < LIMIT_SWITCH
        ser = ~lim & (np.abs(x) < SERIES_SWITCH)
        lg = ~lim & ~ser
        val[lim] = base[lim] * (1 + x[lim] / 2)
        br[lim] = BRANCH_LIMIT
        xs = x[ser]
        val[ser] = base[ser] * (1 + xs / 2 + xs**2 / 3 + xs**3 / 4)
        br[ser] = BRANCH_SERIES
        with np.errstate(invalid="ignore", divide="ignore"):
            arg = 1.0 - x[lg]
            logv = np.where(arg > 0, -np.log(np.where(arg > 0, arg, 1.0)), np.inf)
            val[lg] = np.where(arg > 0, modulus * kn[lg]**2 / (4 * G[lg] * gm[lg]**2) * logv, np.inf)
        br[lg] = np.where(np.isfinite(val[lg]), BRANCH_LOG, BRANCH_INFINITE)
        phi[reg] = val
        branch[reg] = br
    return DensitySample(fd.alpha, phi, branch)


def _eps_normal(field_, fc) -> float:
    return (fc if fc is not None else field_.fc).eps_normal


@dataclass
class EnergyReport:
    energy: float
    energy_direct: float | None
    modulus: float
    flat_length: float
    infinite_count: int
    branch_counts: dict
    log_fraction_regular: float
    alpha: np.ndarray
    phi: np.ndarray
    quadrature: dict = field(default_factory=dict)

    @property
    def relative_agreement(self) -> float | None:
        if self.energy_direct is None:
            return None
        if not (math.isfinite(self.energy) and math.isfinite(self.energy_direct)):
            return None if self.energy != self.energy_direct else 0.0
        return abs(self.energy - self.energy_direct) / max(abs(self.energy_direct), 1e-300)

    def to_dict(self) -> dict:
        return {
            "energy_reduced": _num(self.energy),
            "energy_direct": _num(self.energy_direct),
            "relative_agreement": _num(self.relative_agreement),
            "modulus": self.modulus,
            "flat_length": self.flat_length,
            "infinite_count": self.infinite_count,
            "branch_counts": self.branch_counts,
            "log_fraction_regular": self.log_fraction_regular,
            "quadrature": self.quadrature,
        }


def _num(v):
    if v is None:
        return None
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else "nan"
    return float(v)


def _circular_runs(mask: np.ndarray) -> list[np.ndarray]:
    """Index runs of a periodic boolean mask."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    if idx.size == len(mask):
        return [idx]
    breaks = np.flatnonzero(np.diff(idx) > 1) + 1
    runs = np.split(idx, breaks)
    if len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == len(mask) - 1:
        runs[0] = np.concatenate([runs.pop(), runs[0]])
    return runs


def _interval_quad(fn, intervals, epsabs, epsrel, limit):
    pieces, errors, evals = [], [], 0
    for lo, hi in intervals:
        with warnings.catch_warnings():
            warnings.simplefilter("error", IntegrationWarning)
            try:
                val, err, info = quad(fn, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit, full_output=1)[:3]
            except IntegrationWarning as exc:
                raise DivergentEnergy(f"adaptive quadrature did not converge on [{lo}, {hi}]: {exc}") from None
        if not math.isfinite(val):
            raise DivergentEnergy(f"infinite contribution on [{lo}, {hi}]")
        pieces.append(val)
        errors.append(err)
        evals += info["neval"]
    return math.fsum(pieces), math.fsum(errors), evals


def _panels(intervals, spacing):
    """Sample cells clipped to the intervals, as (left ends, widths)."""
    lefts, widths = [], []
    for lo, hi in intervals:
        inner = np.arange(np.floor(lo / spacing) + 1, np.ceil(hi / spacing)) * spacing
        nodes = np.concatenate([[lo], inner[(inner > lo) & (inner < hi)], [hi]])
        lefts.append(nodes[:-1])
        widths.append(np.diff(nodes))
    return np.concatenate(lefts), np.concatenate(widths)


def _panel_quad(fn_many, intervals, spacing, epsabs, epsrel, limit):
    """Adaptive Gauss-Kronrod over every sample cell at once.

    Sampled curves are only piecewise smooth at the sample nodes, so a scalar
    adaptive rule spends its effort rediscovering the grid.  Mapping each cell
    to [0, 1] turns the whole integral into one vector-valued adaptive
    integration whose integrand is evaluated in a single batch.
    """
    if not intervals:
        return 0.0, 0.0, 0
    lefts, widths = _panels(intervals, spacing)
    n = len(lefts)

    def vec(u):
        return widths * fn_many(lefts + u * widths)

    res, err, info = quad_vec(vec, 0.0, 1.0, epsabs=epsabs / n, epsrel=epsrel, norm="max", limit=limit,
                              quadrature="gk21", full_output=True)
    if not np.all(np.isfinite(res)):
        raise DivergentEnergy("infinite contribution on a sample cell")
    if not info.success:
        raise DivergentEnergy(f"vectorized adaptive quadrature did not converge: {info.message}")
    return math.fsum(res), float(err) * n, int(info.neval) * n


def reduced_energy(field_: RulingField, modulus: float = 1.0, epsabs: float = 1e-10, epsrel: float = 1e-8,
                   limit: int = 200, direct: bool = True) -> EnergyReport:
    """Energy as a boundary integral over the regular intervals, with the direct area oracle on request."""
    ds = energy_density(field_, modulus=modulus)
    counts = {k: int(np.count_nonzero(ds.branch == k))
              for k in (BRANCH_LOG, BRANCH_SERIES, BRANCH_LIMIT, BRANCH_FLAT, BRANCH_INFINITE)}
    reg = field_.in_regular
    log_frac = float(np.count_nonzero(ds.branch[reg] == BRANCH_LOG) / max(np.count_nonzero(reg), 1))
    h = field_.length / field_.n_alpha
    flat_length = float(np.count_nonzero(ds.branch == BRANCH_FLAT) * h)
    inf_mask = ds.branch == BRANCH_INFINITE
    infinite_count = int(np.count_nonzero(inf_mask))
    meta = {"intervals": [list(iv) for iv in field_.intervals], "epsabs": epsabs, "epsrel": epsrel,
            "rule": "adaptive Gauss-Kronrod (21 point), compensated summation", "n_alpha": field_.n_alpha}
    runs = _circular_runs(inf_mask)
    window = [r for r in runs if 1 < len(r) and len(r) * h <= NULL_RUN_FRACTION * field_.length]
    meta["excluded_windows"] = len(window)
    meta["excluded_length"] = float(sum(len(r) for r in window) * h)
    # longer runs of infinite samples mean a set of positive measure
    if any(len(r) * h > NULL_RUN_FRACTION * field_.length for r in runs) or np.any(inf_mask & reg):
        return EnergyReport(math.inf, math.inf if direct else None, modulus, flat_length, infinite_count, counts,
                            log_frac, ds.alpha, ds.phi, {**meta, "diverged": "infinite density on a set of positive measure"})
    fc, region = field_.fc, field_.region

    def phi(a):
        return float(energy_density(None, np.array([a]), modulus, fc=fc, region=region).phi[0])

    def phi_many(a):
        return energy_density(None, a, modulus, fc=fc, region=region).phi

    spacing = getattr(fc, "spacing", None)
    if spacing is not None:
        meta["rule"] = "vectorized adaptive Gauss-Kronrod (21 point) over sample cells, compensated summation"
    try:
        if spacing is None:
            energy, err, evals = _interval_quad(phi, field_.intervals, epsabs, epsrel, limit)
        else:
            energy, err, evals = _panel_quad(phi_many, field_.intervals, spacing, epsabs, epsrel, limit)
    except DivergentEnergy as exc:
        return EnergyReport(math.inf, math.inf if direct else None, modulus, flat_length, infinite_count, counts,
                            log_frac, ds.alpha, ds.phi, {**meta, "diverged": str(exc)})
    meta.update({"error_estimate": err, "evaluations": evals})
    e_direct = None
    if direct:
        e_direct, derr, devals = direct_energy(field_, modulus, epsabs, epsrel, limit)
        meta.update({"direct_error_estimate": derr, "direct_evaluations": devals, "direct_inner_rule": "Gauss-Legendre 48"})
    return EnergyReport(energy, e_direct, modulus, flat_length, infinite_count, counts, log_frac,
                        ds.alpha, ds.phi, meta)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(48)


def direct_energy(field_: RulingField, modulus: float = 1.0, epsabs: float = 1e-10, epsrel: float = 1e-8,
                  limit: int = 200, inner_nodes: int = 48):
    """Area quadrature of ``H^2 J`` over feet and ruling distances.

    ``H`` comes from the fundamental forms of the ruled surface and ``J`` from
    the planar Jacobian of ``(alpha, beta) -> c + beta f``; neither uses the
    closed-form distance integral.
    """
    fc, region = field_.fc, field_.region
    if inner_nodes == 48:
        nodes, weights = _GL_NODES, _GL_WEIGHTS
    else:
        nodes, weights = np.polynomial.legendre.leggauss(inner_nodes)

    def inner_many(a):
        s = sample_rulings(fc, region, np.asarray(a, dtype=float))
        out = np.zeros(len(s.frame.alpha))
        reg = s.in_regular
        if not reg.any():
            return out
        s = s.take(reg)
        b_hat = s.ruling_length
        beta = 0.5 * b_hat[:, None] * (nodes[None, :] + 1.0)
        H = mean_curvature_direct(s, beta)
        fd = s.frame
        dx = fd.tangent_ref[:, None, :] + beta[..., None] * fd.f_rate[:, None, :]
        jac = np.abs(cross2(dx, fd.f[:, None, :]))
        out[reg] = modulus * 0.5 * b_hat * np.sum(weights * H**2 * jac, axis=1)
        return out

    spacing = getattr(fc, "spacing", None)
    if spacing is not None:
        return _panel_quad(inner_many, field_.intervals, spacing, epsabs, epsrel, limit)
    return _interval_quad(lambda a: float(inner_many(np.array([a]))[0]), field_.intervals, epsabs, epsrel, limit)


def density_csv(report: EnergyReport) -> str:
    lines = ["alpha,phi"]
    for a, p in zip(report.alpha, report.phi):
        lines.append(f"{a:.17g},{'inf' if not math.isfinite(p) else format(p, '.17g')}")
    return "\n".join(lines) + "\n"
