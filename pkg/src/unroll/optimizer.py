"""Penalty descent over finite-dimensional families of framed curves.

The objective is the reduced energy plus weighted squares of the
admissibility residuals.  The descent is a projected gradient method on
central-difference gradients; trial steps follow Barzilai-Borwein and are
backtracked until the Armijo condition holds.  It promises descent and feasibility, not a global minimum.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .admissibility import check_compatibility
from .boundary_region import RAY_OK
from .energy import reduced_energy
from .errors import GeneratorFailure, UnrollError
from .immersion import _threads
from .presets import Preset, cylinder_rim_stretch, cylinder_wrap, plane_identity
from .rulings import RulingField, closure_residual, non_crossing


@dataclass
class CurveFamily:
    """Parameterized family ``p -> (region, framed curve)`` with box bounds.

    ``regularizer`` adds a smooth term in ``p`` to the objective (a spring,
    say) and ``reference`` returns the closed-form objective where one is
    known, for use as an oracle.
    """

    name: str
    generator: Callable[[np.ndarray], Preset]
    lower: np.ndarray
    upper: np.ndarray
    description: str
    regularizer: Callable[[np.ndarray], float] | None = None
    reference: Callable[[np.ndarray], float] | None = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.evaluations = 0

    @property
    def dim(self) -> int:
        return len(self.lower)

    def project(self, p) -> np.ndarray:
        return np.clip(np.asarray(p, dtype=float), self.lower, self.upper)

    def make(self, p) -> Preset:
        try:
            return self.generator(np.asarray(p, dtype=float))
        except (ValueError, ArithmeticError, UnrollError) as exc:
            raise GeneratorFailure(f"family {self.name} failed at p={np.asarray(p).tolist()}: {exc}") from exc


def cylinder_radius_family(L: float = 2.0, W: float = 1.0, spring: float = 1.0, rest: float = 1.0,
                           bounds=(0.2, 3.0)) -> CurveFamily:
    """Rectangle wrapped on a cylinder of radius ``p[0]`` with the spring ``spring * (R - rest)^2``."""
    return CurveFamily(
        "cylinder_radius",
        lambda p: cylinder_wrap(L, W, float(p[0])),
        [bounds[0]], [bounds[1]],
        f"rectangle {L} x {W} wrapped on a cylinder of free radius; spring weight {spring}, rest radius {rest}",
        regularizer=lambda p: spring * (float(p[0]) - rest) ** 2,
        reference=lambda p: L * W / (2 * float(p[0]) ** 2) + spring * (float(p[0]) - rest) ** 2,
    )


def rim_stretch_family(L: float = 2.0, W: float = 1.0, R: float = 0.5, max_stretch: float = 0.05) -> CurveFamily:
    """Cylinder whose image is stretched along the generators by ``p[0]``; only ``p = 0`` closes the rulings."""
    return CurveFamily(
        "rim_stretch",
        lambda p: cylinder_rim_stretch(L, W, R, float(p[0])),
        [0.0], [max_stretch],
        "wrapped rectangle with an axial stretch of the image; infeasible for positive stretch",
    )


def plane_width_family(L: float = 2.0, bounds=(0.5, 2.0)) -> CurveFamily:
    """Flat rectangle of width ``p[0]``; energy and penalties vanish identically."""
    return CurveFamily("plane_width", lambda p: plane_identity(L, float(p[0])), [bounds[0]], [bounds[1]],
                       "flat rectangle of free width", reference=lambda p: 0.0)


FAMILIES: dict[str, Callable[..., CurveFamily]] = {
    "cylinder_radius": cylinder_radius_family,
    "rim_stretch": rim_stretch_family,
    "plane_width": plane_width_family,
}


@dataclass
class PenaltyWeights:
    compatibility: float = 1e3
    closure: float = 1e3
    crossing: float = 1e3
    margin: float = 1e3


@dataclass
class ObjectiveTerms:
    value: float
    energy: float
    penalty: float
    regularizer: float
    residuals: dict


def objective_terms(family: CurveFamily, p, weights: PenaltyWeights | None = None, n_alpha: int = 512,
                    epsabs: float = 1e-13, epsrel: float = 1e-12) -> ObjectiveTerms:
    """Objective at ``p`` split into its terms; generator failures give an infinite value."""
    weights = weights or PenaltyWeights()
    family.evaluations += 1
    p = np.asarray(p, dtype=float)
    try:
        preset = family.make(p)
        fc, region = preset.framed, preset.region
        field_ = RulingField(fc, region, n_alpha)
    except (GeneratorFailure, UnrollError) as exc:
        return ObjectiveTerms(math.inf, math.inf, math.inf, math.nan, {"failure": str(exc)})
    comp = check_compatibility(fc, region, n_alpha)
    s = field_.samples
    usable = s.in_ruled & (s.ray_status == RAY_OK)
    closure = float(np.max(closure_residual(fc, s.take(usable)))) if usable.any() else 0.0
    crossings = non_crossing(field_)
    crossing = max(0.0, -float(crossings["worst_witness"]))
    reg = field_.in_regular
    margin = 0.0
    if reg.any():
        margin = max(0.0, -float(np.min(s.frame.g_m[reg] - s.ruling_length[reg] * s.frame.spread[reg])))
    residuals = {"curvature": comp["curvature"], "angles": comp["angles"], "flatness": comp["flatness"],
                 "closure": closure, "crossing": crossing, "margin": margin}
    penalty = (weights.compatibility * (comp["curvature"] ** 2 + comp["angles"] ** 2 + comp["flatness"] ** 2)
               + weights.closure * closure ** 2 + weights.crossing * crossing ** 2 + weights.margin * margin ** 2)
    energy = reduced_energy(field_, 1.0, epsabs, epsrel, direct=False).energy
    extra = family.regularizer(p) if family.regularizer is not None else 0.0
    return ObjectiveTerms(energy + penalty + extra, energy, penalty, extra, residuals)


def penalty_objective(family: CurveFamily, p, weights: PenaltyWeights | None = None, n_alpha: int = 512) -> float:
    return objective_terms(family, p, weights, n_alpha).value


@dataclass
class DescentOptions:
    g_tol: float = 1e-8
    s_tol: float = 1e-12
    max_iter: int = 100
    armijo: float = 1e-4
    max_backtracks: int = 40
    n_alpha: int = 512
    weights: PenaltyWeights = field(default_factory=PenaltyWeights)
    threads: int | None = None


@dataclass
class DescentTrace:
    iterates: list = field(default_factory=list)
    termination: str = ""
    evaluations: int = 0

    def record(self, it: int, p, terms: ObjectiveTerms, step: float, grad_norm: float, evaluations: int):
        self.iterates.append({"iteration": it, "p": [float(v) for v in p], "objective": terms.value,
                              "energy": terms.energy, "penalty": terms.penalty, "step": step,
                              "grad_norm": grad_norm, "evaluations": evaluations})

    @property
    def objectives(self) -> list[float]:
        return [r["objective"] for r in self.iterates]

    def monotone(self) -> bool:
        obj = self.objectives
        return all(b <= a for a, b in zip(obj, obj[1:]))

    def to_json(self) -> str:
        return json.dumps({"iterates": self.iterates, "termination": self.termination,
                           "evaluations": self.evaluations}, indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        dim = len(self.iterates[0]["p"]) if self.iterates else 0
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration"] + [f"p{i}" for i in range(dim)]
                   + ["objective", "energy", "penalty", "step", "grad_norm", "evaluations"])
        for r in self.iterates:
            w.writerow([r["iteration"]] + [format(v, ".17g") for v in r["p"]]
                       + [format(r[k], ".17g") for k in ("objective", "energy", "penalty", "step", "grad_norm")]
                       + [r["evaluations"]])
        return buf.getvalue()


def fd_gradient(family: CurveFamily, p: np.ndarray, opts: DescentOptions) -> np.ndarray:
    """Central differences with step ``1e-6 * (1 + |p_i|)``, one-sided against a bound."""
    jobs = []
    for i in range(family.dim):
        h = 1e-6 * (1 + abs(p[i]))
        up = min(p[i] + h, family.upper[i])
        down = max(p[i] - h, family.lower[i])
        for v in (up, down):
            q = p.copy()
            q[i] = v
            jobs.append(q)
    with ThreadPoolExecutor(_threads(opts.threads)) as pool:
        vals = list(pool.map(lambda q: objective_terms(family, q, opts.weights, opts.n_alpha).value, jobs))
    grad = np.empty(family.dim)
    for i in range(family.dim):
        q_up, q_down = jobs[2 * i][i], jobs[2 * i + 1][i]
        grad[i] = (vals[2 * i] - vals[2 * i + 1]) / (q_up - q_down)
    return grad


def descend(family: CurveFamily, p0, opts: DescentOptions | None = None):
    """Projected gradient descent; returns the final parameters and the trace."""
    opts = opts or DescentOptions()
    family.evaluations = 0
    trace = DescentTrace()
    p = family.project(p0)
    terms = objective_terms(family, p, opts.weights, opts.n_alpha)
    if not math.isfinite(terms.value):
        trace.record(0, p, terms, 0.0, math.nan, family.evaluations)
        trace.termination = "infeasible_start"
        trace.evaluations = family.evaluations
        return p, trace
    step = None
    prev_p = prev_g = None
    for it in range(opts.max_iter + 1):
        g = fd_gradient(family, p, opts)
        pg = family.project(p - g) - p
        gnorm = float(np.linalg.norm(pg))
        trace.record(it, p, terms, 0.0 if step is None else step, gnorm, family.evaluations)
        if gnorm < opts.g_tol:
            trace.termination = "gradient"
            break
        if it == opts.max_iter:
            trace.termination = "max_iterations"
            break
        # Barzilai-Borwein trial step, falling back to a scale-aware first step
        if prev_p is not None:
            dp, dg = p - prev_p, g - prev_g
            curv = float(dp @ dg)
            step = float(dp @ dp) / curv if curv > 0 else 2 * step
        else:
            span = float(np.max(family.upper - family.lower))
            step = min(1.0, 0.1 * span / max(float(np.linalg.norm(g)), 1e-300))
        accepted = False
        for _ in range(opts.max_backtracks):
            q = family.project(p - step * g)
            trial = objective_terms(family, q, opts.weights, opts.n_alpha)
            if math.isfinite(trial.value) and trial.value <= terms.value + opts.armijo * float(g @ (q - p)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            trace.termination = "line_search"
            break
        move = float(np.linalg.norm(q - p))
        prev_p, prev_g = p, g
        p, terms = q, trial
        if move < opts.s_tol * (1 + float(np.linalg.norm(p))):
            g_last = float(np.linalg.norm(family.project(p - g) - p))
            trace.record(it + 1, p, terms, step, g_last, family.evaluations)
            trace.termination = "step"
            break
    trace.evaluations = family.evaluations
    return p, trace


def trace_dict(trace: DescentTrace) -> dict:
    return asdict(trace)
