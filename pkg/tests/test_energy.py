import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unroll import ADMISSIBLE, RulingField, energy_density, make_preset, mean_curvature, reduced_energy
from unroll.energy import (BRANCH_FLAT, BRANCH_LIMIT, BRANCH_LOG, BRANCH_SERIES, density_csv,
                           mean_curvature_direct, mean_curvature_from)
from unroll.errors import SingularRuling
from unroll.rulings import sample_rulings

from conftest import energy, field, oracle_values, preset


@pytest.mark.parametrize("name", sorted(ADMISSIBLE))
def test_reduced_energy_matches_the_area_oracle(name):
    frozen = oracle_values()["energy"][name]
    rep = energy(name)
    if frozen == 0:
        assert rep.energy == 0.0
    else:
        assert rep.energy == pytest.approx(frozen, rel=1e-6)
    # the frozen area integrals also confirm the preset closed forms
    assert preset(name).expected["energy"] == pytest.approx(frozen, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("name", sorted(ADMISSIBLE))
def test_reduced_and_direct_routes_agree(name):
    rep = energy(name)
    assert rep.energy >= 0 and rep.energy_direct >= 0
    assert rep.relative_agreement is None or rep.relative_agreement < 1e-4 or rep.energy_direct == 0


def test_cone_uses_the_logarithmic_branch_everywhere():
    rep = energy("cone_sector")
    assert rep.log_fraction_regular == 1.0
    assert rep.branch_counts[BRANCH_SERIES] == 0 and rep.branch_counts[BRANCH_LIMIT] == 0


def test_parallel_rulings_use_the_limit_branch():
    rep = energy("cylinder_wrap")
    assert rep.branch_counts[BRANCH_LOG] == 0
    assert rep.branch_counts[BRANCH_LIMIT] > 0
    # straight sides are flat pieces, its corners carry the infinite samples
    assert rep.flat_length == pytest.approx(2.0, rel=1e-2)


@pytest.mark.parametrize("name", sorted(ADMISSIBLE))
def test_density_is_nonnegative_and_vanishes_on_flat_pieces(name):
    f = field(name)
    ds = energy_density(f)
    finite = np.isfinite(ds.phi)
    assert np.all(ds.phi[finite] >= 0)
    flat = ds.branch == BRANCH_FLAT
    assert np.all(ds.phi[flat] == 0)
    const_normal = f.samples.frame.normal_rate_norm < f.fc.eps_normal
    np.testing.assert_array_equal(flat, const_normal & ~f.in_regular)


def exact_log_density(kn, gm, G, b):
    x = mp.mpf(b) * G / gm
    return mp.mpf(kn) ** 2 / (4 * mp.mpf(G) * mp.mpf(gm) ** 2) * -mp.log(1 - x)


@pytest.mark.parametrize("x", [3e-7, 9.9e-7, 1.01e-6, 3e-5, 9.9e-4, 1.01e-3, 1e-2])
def test_density_branches_are_continuous(x):
    mp.mp.dps = 40
    rho1 = 1 / x
    p = make_preset("cone_sector", rho0=rho1 - 1.0, rho1=rho1, theta=1.0 / rho1)
    a = np.array([1.5])
    s = sample_rulings(p.framed, p.region, a)
    ds = energy_density(None, a, fc=p.framed, region=p.region)
    fd = s.frame
    expected = exact_log_density(fd.kappa_n[0], fd.g_m[0], fd.spread[0], s.ruling_length[0])
    assert abs(s.ruling_length[0] * fd.spread[0] / fd.g_m[0]) == pytest.approx(x, rel=1e-6)
    assert float(abs(ds.phi[0] - expected) / expected) < 1e-8


def test_mean_curvature_routes_agree():
    for name in ["cone_sector", "disk_roll", "ramp_roll", "stadium_roll"]:
        f = field(name)
        # the fundamental-form route cancels like 1/g_m^2 near tangential rulings
        s = f.samples.take(f.in_regular & (f.samples.frame.g_m > 0.1))
        assert len(s.frame.alpha) > 1000
        for frac in (0.0, 0.3, 0.9):
            beta = frac * s.ruling_length
            np.testing.assert_allclose(mean_curvature_from(s, beta), mean_curvature_direct(s, beta), rtol=1e-9,
                                       atol=1e-12)


def test_cone_mean_curvature_closed_form():
    p = preset("cone_sector")
    a = np.linspace(1.1, 2.9, 7)
    beta = np.full_like(a, 0.4)
    # outer arc at flat radius 2: a point beta inwards sits at radius 2 - beta
    np.testing.assert_allclose(mean_curvature(p.framed, p.region, a, beta), np.sqrt(3) / (2 * (2 - beta)),
                               rtol=1e-12)
    # a foot on a straight radial edge carries no regular ruling
    with pytest.raises(SingularRuling):
        mean_curvature(p.framed, p.region, [0.5], [0.0])
    with pytest.raises(ValueError):
        mean_curvature(p.framed, p.region, [1.5], [1.5])


@pytest.mark.parametrize("name", ["cone_sector", "disk_roll", "stadium_roll", "ramp_roll", "two_cylinder"])
def test_boundary_mean_curvature_identity(name):
    f = field(name)
    s = f.samples.take(f.in_regular)
    fd = s.frame
    H0 = mean_curvature_from(s, np.zeros(len(fd.alpha)))
    scale = float(np.max(fd.kappa_n**2))
    assert np.max(np.abs(2 * fd.kappa_n * H0 - fd.kappa_n**2 - fd.tau_g**2)) < 1e-8 * scale


@settings(max_examples=12)
@given(st.floats(0.3, 3.0))
def test_uniform_dilation_leaves_the_energy_unchanged(scale):
    base = reduced_energy(RulingField(preset("cone_sector").framed, preset("cone_sector").region, 1024),
                          direct=False).energy
    p = make_preset("cone_sector", rho0=scale, rho1=2 * scale)
    scaled = reduced_energy(RulingField(p.framed, p.region, 1024), direct=False).energy
    assert scaled == pytest.approx(base, rel=1e-8)


@settings(max_examples=12)
@given(st.floats(0.2, 3.0), st.floats(0.5, 3.0), st.floats(0.2, 2.0))
def test_cylinder_energy_scales_with_area_over_radius_squared(R, L, W):
    p = make_preset("cylinder_wrap", L=L, W=W, R=R)
    e = reduced_energy(RulingField(p.framed, p.region, 1024), direct=False).energy
    assert e == pytest.approx(L * W / (2 * R**2), rel=1e-8)


@settings(max_examples=8)
@given(st.floats(0.2, 0.6), st.floats(0.2, 1.5))
def test_two_cylinder_energy_is_additive(R1, R2):
    p = make_preset("two_cylinder", R1=R1, R2=R2)
    e = reduced_energy(RulingField(p.framed, p.region, 1024), direct=False).energy
    assert e == pytest.approx(1 / (2 * R1**2) + 1 / (2 * R2**2), rel=1e-8)


def test_crossing_rulings_energy_diverges():
    p = preset("crossing_rulings")
    rep = reduced_energy(RulingField(p.framed, p.region, 1024))
    assert math.isinf(rep.energy)
    assert "diverged" in rep.quadrature


def test_analytic_disk_needs_no_excluded_windows():
    rep = energy("disk_roll")
    assert rep.quadrature["excluded_windows"] == 0
    assert rep.infinite_count == 0


def test_density_csv():
    text = density_csv(energy("cylinder_wrap"))
    lines = text.splitlines()
    assert lines[0] == "alpha,phi"
    assert len(lines) == 4097
    assert "inf" in text
    a, phi = lines[101].split(",")
    assert float(a) == pytest.approx(100 * 6.0 / 4096)


def test_modulus_scales_linearly():
    f = field("cone_sector")
    assert reduced_energy(f, modulus=2.5, direct=False).energy == pytest.approx(2.5 * energy("cone_sector").energy,
                                                                                 rel=1e-12)
