import csv
import io
import json

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from unroll.optimizer import (FAMILIES, DescentOptions, cylinder_radius_family, descend, objective_terms,
                              plane_width_family, rim_stretch_family)

from conftest import cylinder_descent, oracle_values


def golden_optimum(family):
    res = minimize_scalar(lambda r: family.reference([r]), bracket=(0.5, 1.0, 3.0), method="golden", tol=1e-12)
    return res.x


def test_golden_section_oracle_matches_the_frozen_root():
    assert golden_optimum(cylinder_radius_family()) == pytest.approx(oracle_values()["cylinder_radius_optimum"],
                                                                     rel=1e-8)


def test_descent_reaches_the_oracle_optimum():
    family, p, trace = cylinder_descent()
    target = golden_optimum(family)
    assert p[0] == pytest.approx(target, rel=1e-6)
    assert trace.evaluations < 200
    assert trace.termination in ("gradient", "step")
    assert trace.monotone()


def test_objective_matches_the_closed_form():
    family = cylinder_radius_family()
    for r in (0.4, 1.0, 2.2):
        terms = objective_terms(family, [r])
        assert terms.value == pytest.approx(family.reference([r]), rel=1e-10)
        assert terms.penalty < 1e-12


def test_stationary_flat_start_stops_at_once():
    p, trace = descend(plane_width_family(), [1.0])
    assert trace.termination == "gradient"
    assert len(trace.iterates) == 1
    assert p[0] == 1.0


def test_infeasible_start_recovers_feasibility():
    family = rim_stretch_family()
    p, trace = descend(family, [0.03])
    assert trace.monotone()
    penalties = [r["penalty"] for r in trace.iterates]
    assert all(b <= a for a, b in zip(penalties, penalties[1:]))
    # recompute the residuals at the end point instead of trusting the trace
    terms = objective_terms(family, p)
    assert terms.residuals["closure"] < 1e-8
    assert terms.penalty < 1e-12


def test_penalty_tracks_the_stretch():
    family = rim_stretch_family()
    terms = objective_terms(family, [0.02])
    # the image generators are 2 percent longer than the unit-width rulings
    assert terms.residuals["closure"] == pytest.approx(0.02, rel=1e-6)
    assert terms.penalty == pytest.approx(1e3 * 0.02**2, rel=1e-5)


def test_projection_keeps_bounds():
    family = cylinder_radius_family()
    np.testing.assert_array_equal(family.project([10.0]), [3.0])
    np.testing.assert_array_equal(family.project([-1.0]), [0.2])


def test_trace_exports():
    _, _, trace = cylinder_descent()
    data = json.loads(trace.to_json())
    assert data["termination"] == trace.termination
    rows = list(csv.reader(io.StringIO(trace.to_csv())))
    assert rows[0][:2] == ["iteration", "p0"]
    assert len(rows) == len(trace.iterates) + 1
    assert float(rows[-1][1]) == trace.iterates[-1]["p"][0]


def test_iteration_cap_is_respected():
    family = cylinder_radius_family()
    p, trace = descend(family, [0.5], DescentOptions(max_iter=2))
    assert trace.termination == "max_iterations"
    assert len(trace.iterates) == 3


def test_registered_families():
    assert sorted(FAMILIES) == ["cylinder_radius", "plane_width", "rim_stretch"]
