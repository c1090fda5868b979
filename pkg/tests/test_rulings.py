import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unroll import RulingField, make_preset, sample_rulings
from unroll.boundary_region import RAY_OK
from unroll.geometry_core import norm, periodic_gap
from unroll.rulings import (CORNER_OR_TANGENT, CURVED_FOOT, FLAT_FOOT, check_crossing_pair, closure_residual,
                            crossing_witness, non_crossing, ruling_properties)

from conftest import field, preset

RULED_PRESETS = ["cylinder_wrap", "cone_sector", "two_cylinder", "stadium_roll", "disk_roll", "ramp_roll"]


@pytest.fixture(scope="module", params=RULED_PRESETS)
def props(request):
    return request.param, ruling_properties(field(request.param))


def test_opposite_foot_is_an_involution(props):
    name, r = props
    assert r["samples"] > 1000
    assert r["unreturned"] == 0
    assert r["involution"] < 1e-7 * field(name).length


def test_antisymmetry_and_normal_match(props):
    _, r = props
    for key in ("f_antisymmetry", "g_antisymmetry", "normal_match", "length_symmetry"):
        assert r[key] < 1e-7, key


def test_opposite_foot_decreases(props):
    _, r = props
    assert r["opposite_derivative_negative"]
    assert r["max_opposite_derivative"] < 0


def test_velocity_condition(props):
    _, r = props
    assert r["velocity_condition"] < 1e-6


def test_margins(props):
    _, r = props
    assert r["margin_regular_min"] > 0
    assert r["margin_ruled_min"] >= -1e-10


def test_cylinder_rulings_match_closed_form():
    f = field("cylinder_wrap")
    s = f.samples
    bottom = (f.alpha > 0) & (f.alpha < 2.0)
    np.testing.assert_allclose(s.ruling_length[bottom], 1.0, atol=1e-12)
    # bottom point (x, 0) meets the top edge at (x, 1), i.e. arclength 5 - x
    np.testing.assert_allclose(s.opposite_foot[bottom], 5.0 - f.alpha[bottom], atol=1e-12)
    assert not np.any(s.in_ruled[(f.alpha > 2.0) & (f.alpha < 3.0)])


def test_cone_rulings_are_radial():
    f = field("cone_sector")
    s = f.samples
    outer = (f.alpha > 1.0) & (f.alpha < 3.0)
    np.testing.assert_allclose(s.ruling_length[outer], 1.0, atol=1e-12)
    # outer arc angle (alpha - 1)/2 maps to inner arc angle, at arclength 4 + (1 - angle)
    np.testing.assert_allclose(s.opposite_foot[outer], 5.0 - (f.alpha[outer] - 1.0) / 2, atol=1e-12)


def test_regular_intervals_are_disjoint_and_sorted():
    for name in RULED_PRESETS:
        iv = field(name).intervals
        for (a0, b0), (a1, b1) in zip(iv, iv[1:]):
            assert a0 < b0 <= a1 < b1


def test_boundary_ruling_categories():
    cats = {name: sorted({b.category for b in field(name).boundary_rulings}) for name in RULED_PRESETS}
    assert cats["cylinder_wrap"] == [CORNER_OR_TANGENT]
    assert cats["two_cylinder"] == [CORNER_OR_TANGENT]
    assert cats["stadium_roll"] == [CURVED_FOOT]
    assert cats["disk_roll"] == [CURVED_FOOT]
    assert cats["ramp_roll"] == [CORNER_OR_TANGENT, FLAT_FOOT]
    assert field("plane_identity").boundary_rulings == []


def test_two_cylinder_junction_is_a_boundary_ruling_of_both_families():
    f = field("two_cylinder")
    on_junction = [b for b in f.boundary_rulings if abs(b.start[0] - 1.0) < 1e-9 and abs(b.end[0] - 1.0) < 1e-9]
    # the left square's right edge and the raised right square's left edge
    spans = sorted((round(b.start[1], 9), round(b.end[1], 9)) for b in on_junction)
    assert spans == [(0.0, 1.0), (0.5, 1.5)]
    assert all(b.category == CORNER_OR_TANGENT for b in on_junction)


def test_stadium_limit_rulings_sit_on_the_straight_edges():
    f = field("stadium_roll")
    # regular intervals stop one curvature-threshold window short of the straights
    window = np.sqrt(f.fc.eps_kappa)
    for b in f.boundary_rulings:
        assert abs(abs(b.start[0]) - 0.5) < 1e-6 and abs(abs(b.end[0]) - 0.5) < 1e-6
        assert b.length == pytest.approx(1.0, abs=4 * window)


@pytest.mark.parametrize("name", RULED_PRESETS)
def test_closure_on_admissible_presets(name):
    f = field(name)
    s = f.samples.take(f.in_ruled & (f.samples.ray_status == RAY_OK))
    assert np.max(closure_residual(f.fc, s)) < 1e-8 * f.region.diameter


@given(st.floats(1e-3, 0.05))
def test_rim_stretch_closure_grows_with_the_stretch(stretch):
    p = make_preset("cylinder_rim_stretch", stretch=stretch)
    a = np.linspace(0.1, 1.9, 9)
    s = sample_rulings(p.framed, p.region, a)
    res = closure_residual(p.framed, s)
    # the image ruling has length (1 + stretch) times the flat one
    np.testing.assert_allclose(res, stretch * 1.0, rtol=1e-6)


def test_crossing_witness_sign():
    c0, f0 = np.array([[0.0, 0.0]]), np.array([[1.0, 1.0]]) / np.sqrt(2)
    c1, f1 = np.array([[1.0, 0.0]]), np.array([[-1.0, 1.0]]) / np.sqrt(2)
    assert crossing_witness(c0, f0, np.array([2.0]), c1, f1)[0] < 0
    assert crossing_witness(c0, f0, np.array([0.3]), c1, f1)[0] > 0


def test_non_crossing_flags_the_tilted_disk():
    r = non_crossing(field("crossing_rulings"))
    assert r["violations"] > 0
    assert r["worst_witness"] < 0
    pair = check_crossing_pair(preset("crossing_rulings").framed, preset("crossing_rulings").region, 0.0, 1.0)
    assert not pair["ok"]
    assert pair["witness"] < 0


@pytest.mark.parametrize("name", RULED_PRESETS)
def test_non_crossing_holds_on_admissible_presets(name):
    r = non_crossing(field(name))
    assert r["violations"] == 0
    assert r["pairs_checked"] > 0


def test_exhaustive_non_crossing_on_a_coarse_grid():
    f = RulingField(preset("disk_roll").framed, preset("disk_roll").region, 512)
    r = non_crossing(f, exhaustive=True)
    assert r["exhaustive"] and r["stride"] == 1
    assert r["violations"] == 0


def test_field_is_deterministic():
    p = preset("stadium_roll")
    a = RulingField(p.framed, p.region, 1024)
    b = RulingField(p.framed, p.region, 1024)
    np.testing.assert_array_equal(a.opposite_foot, b.opposite_foot)
    assert a.intervals == b.intervals
    assert [x.to_dict() for x in a.boundary_rulings] == [x.to_dict() for x in b.boundary_rulings]


@given(st.floats(0.01, 0.99))
def test_sampled_ruling_endpoint_lies_on_the_boundary(u):
    p = preset("stadium_roll")
    s = sample_rulings(p.framed, p.region, [u * p.region.length])
    if not (s.in_ruled[0] and s.ray_status[0] == RAY_OK):
        return
    end = s.frame.point + s.ruling_length[:, None] * s.frame.f
    far = p.region.boundary.point(s.opposite_foot)
    assert norm(end - far)[0] < 1e-9 * p.region.diameter
    back = sample_rulings(p.framed, p.region, s.opposite_foot)
    assert periodic_gap(back.opposite_foot[0], u * p.region.length, p.region.length) < 1e-9
