import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unroll import ADMISSIBLE, make_preset, validate_framed
from unroll.framed_curve import FlippedFramedCurve, TiltedFramedCurve, frame_data
from unroll.geometry_core import norm

from conftest import preset


def interior_params(p, n=256):
    """Grid that keeps a margin from every joint so one-sided data agree."""
    a = (np.arange(n) + 0.5) * p.region.length / n
    joints = np.asarray(p.framed.joints, dtype=float)
    if joints.size:
        gap = np.abs(a[:, None] - joints[None, :]).min(axis=1)
        a = a[gap > 1e-3 * p.region.length]
    return a


@pytest.mark.parametrize("name", sorted(ADMISSIBLE))
def test_validate_framed_passes_on_admissible_presets(name):
    p = preset(name)
    report = validate_framed(p.framed, p.region)
    assert report.ok, report.to_dict()


def test_tilted_normal_fails_tangency():
    p = make_preset("cylinder_wrap")
    report = validate_framed(TiltedFramedCurve(p.framed, 1e-3), p.region)
    assert not report.passed["tangency"]
    assert report.residuals["tangency"] == pytest.approx(np.sin(1e-3), rel=1e-6)


@pytest.mark.parametrize("name", sorted(ADMISSIBLE))
def test_image_frame_is_orthonormal_and_matches_reference_curvature(name):
    p = preset(name)
    fd = frame_data(p.framed, p.region, interior_params(p))
    frame = np.stack([fd.tangent, fd.conormal, fd.normal], axis=1)
    gram = np.einsum("kij,klj->kil", frame, frame)
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(3), gram.shape), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(frame), 1.0, atol=1e-12)
    np.testing.assert_allclose(fd.kappa_g, fd.kappa_c, atol=1e-10)


@pytest.mark.parametrize("name", ["disk_roll", "stadium_roll", "cone_sector", "ramp_roll"])
def test_flip_of_the_normal(name):
    p = preset(name)
    a = interior_params(p)
    A = frame_data(p.framed, p.region, a)
    B = frame_data(FlippedFramedCurve(p.framed), p.region, a)
    np.testing.assert_array_equal(B.kappa_n, -A.kappa_n)
    np.testing.assert_array_equal(B.kappa_g, -A.kappa_g)
    np.testing.assert_allclose(B.tau_g, A.tau_g, atol=1e-15)
    np.testing.assert_array_equal(B.conormal, -A.conormal)
    ruled = A.ruled
    np.testing.assert_array_equal(B.ruled, ruled)
    # a line through d has no orientation: the flip reverses g and keeps g_m
    np.testing.assert_allclose(B.g[ruled], -A.g[ruled], atol=1e-15)
    np.testing.assert_allclose(B.g_m[ruled], A.g_m[ruled], atol=1e-15)
    np.testing.assert_allclose(B.g_t[ruled], -A.g_t[ruled], atol=1e-15)


def test_flip_leaves_f_unchanged_where_rulings_are_normal_to_the_boundary():
    p = preset("cone_sector")
    a = interior_params(p)
    A = frame_data(p.framed, p.region, a)
    B = frame_data(FlippedFramedCurve(p.framed), p.region, a)
    r = A.ruled
    np.testing.assert_allclose(A.g_t[r], 0.0, atol=1e-14)
    np.testing.assert_allclose(B.f[r], A.f[r], atol=1e-14)


def test_cylinder_rulings_are_parallel():
    p = preset("cylinder_wrap")
    fd = frame_data(p.framed, p.region, interior_params(p))
    r = fd.ruled
    assert r.sum() > 0
    np.testing.assert_allclose(fd.spread[r], 0.0, atol=1e-12)
    np.testing.assert_allclose(np.abs(fd.f[r]), np.broadcast_to([0.0, 1.0], fd.f[r].shape), atol=1e-12)


def test_cone_outer_arc_spread():
    p = preset("cone_sector")
    rho0, rho1, theta = 1.0, 2.0, 1.0
    a = 1.0 + np.linspace(0.05, 0.95, 9) * rho1 * theta
    fd = frame_data(p.framed, p.region, a)
    np.testing.assert_allclose(np.abs(fd.spread), 1 / rho1, rtol=1e-12)
    beta = p.region.ray_exit_many(a, fd.f)[0]
    np.testing.assert_allclose(beta, rho1 - rho0, rtol=1e-12)
    np.testing.assert_allclose(fd.g_m - beta * fd.spread, rho0 / rho1, rtol=1e-12)


@pytest.mark.parametrize("name", ["cone_sector", "disk_roll", "stadium_roll", "ramp_roll", "two_cylinder"])
def test_spread_formulas_agree(name):
    p = preset(name)
    fd = frame_data(p.framed, p.region, interior_params(p))
    r = fd.ruled
    np.testing.assert_allclose(fd.spread[r], fd.spread_alt[r], atol=1e-9)


@pytest.mark.parametrize("name", ["cone_sector", "disk_roll", "stadium_roll", "ramp_roll"])
def test_ruling_derivative_and_developability(name):
    p = preset(name)
    fc = p.framed
    a = interior_params(p, 128)
    fd = frame_data(fc, p.region, a)
    h = 1e-6 * p.region.length
    plus = frame_data(fc, p.region, a + h)
    minus = frame_data(fc, p.region, a - h)
    ok = fd.ruled & plus.ruled & minus.ruled
    assert ok.sum() > 10
    g_fd = (plus.g[ok] - minus.g[ok]) / (2 * h)
    predicted = -fd.spread[ok][:, None] * (fd.g_m[ok][:, None] * fd.tangent[ok] - fd.g_t[ok][:, None] * fd.conormal[ok])
    np.testing.assert_allclose(g_fd, predicted, atol=1e-6)
    np.testing.assert_allclose(fd.g_rate[ok], g_fd, atol=1e-6)
    kn_ok = ok & (np.abs(fd.kappa_n) > 1e-6)
    np.testing.assert_allclose(fd.tau_g[kn_ok] + fd.kappa_n[kn_ok] * fd.g_t[kn_ok] / fd.g_m[kn_ok], 0.0, atol=1e-10)


@pytest.mark.parametrize("name", sorted(ADMISSIBLE))
def test_flat_boundary_pieces_have_constant_normal(name):
    p = preset(name)
    fd = frame_data(p.framed, p.region, interior_params(p))
    small = np.abs(fd.kappa_n) < p.framed.eps_kappa
    assert np.all(norm(fd.normal_rate[small]) < 1e-3 / p.region.length)


@given(st.floats(0.2, 3.0), st.floats(0.05, 0.95))
def test_cylinder_frame_scales_with_radius(R, u):
    p = make_preset("cylinder_wrap", R=R)
    # bottom edge: rulings run up the axis
    fd = frame_data(p.framed, p.region, [u * 2.0])
    assert fd.kappa_n[0] == pytest.approx(1 / R, rel=1e-12)
    assert fd.tau_g[0] == pytest.approx(0.0, abs=1e-12)
    assert fd.g_m[0] == pytest.approx(1.0, rel=1e-12)
