import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import c

from rydthz.doppler import VaporSpec
from rydthz.errors import ConfigurationError, NonPassiveMediumError
from rydthz.levels import TWO_PI, DriveField, default_fields, rb87_scheme, with_field
from rydthz.mixing import (
    MixingConfig,
    alpha_bar,
    analytic_beta,
    coupled_mode_propagate,
    coupling_constant,
    coupling_constants,
    eta_qe_analytic,
    phase_mismatch,
)

from conftest import MHZ, typical_fields


def ceiling_config(ratio, abl, length=5e-3, g=1e5, gamma_th=2e9):
    """MixingConfig with G_S/G_T = ratio and alpha_bar L = abl."""
    big_g_t = 1.0
    big_g_s = ratio * big_g_t
    # alpha_bar = 2 g_s^2 (G_S^2 + G_T^2) / (c Gamma G_S^2)
    g_s = math.sqrt(abl / length * c * gamma_th * big_g_s**2 / (2 * (big_g_s**2 + big_g_t**2)))
    return MixingConfig(g_s, g, length, gamma_th, big_g_s, big_g_t)


# -- phase matching ------------------------------------------------------------------

def test_collinear_vacuum_closure(scheme):
    _, dk = phase_mismatch(default_fields(scheme))
    assert dk < 1e-9


def test_thz_tilt(scheme):
    theta = 1e-3
    f = with_field(default_fields(scheme), "T", direction=np.array([math.sin(theta), 0, math.cos(theta)]))
    _, dk = phase_mismatch(f)
    k_t = TWO_PI * scheme.transition("T").frequency / c
    assert dk == pytest.approx(k_t * theta, rel=0.01)


def test_reversed_a4(scheme):
    base = default_fields(scheme)
    flip = [DriveField(f.label, f.rabi, f.detuning, f.frequency, -f.direction) if f.label == "A4" else f
            for f in base]
    v0, _ = phase_mismatch(base)
    v1, _ = phase_mismatch(flip)
    k4 = TWO_PI * scheme.transition("A4").frequency / c
    assert np.linalg.norm(v1 - v0) == pytest.approx(2 * k4, rel=1e-12)


# -- couplings -------------------------------------------------------------------------

def test_coupling_density_scaling():
    assert coupling_constant(2e15, 2.5e-29, 0.0) == 0.0
    a = coupling_constant(2e15, 2.5e-29, 1e18)
    b = coupling_constant(2e15, 2.5e-29, 2e18)
    assert b**2 == pytest.approx(2 * a**2, rel=1e-14)


def test_cross_section_oracle():
    """Resonant two-level absorption 2 g^2/(c Gamma) vs sigma_0 N."""
    lam = 780e-9
    omega = TWO_PI * c / lam
    d = 2.5e-29
    n = 1e18
    # natural linewidth implied by the dipole: Gamma = omega^3 d^2 / (3 pi eps0 hbar c^3)
    from scipy.constants import epsilon_0, hbar
    gam = omega**3 * d**2 / (3 * math.pi * epsilon_0 * hbar * c**3)
    g = coupling_constant(omega, d, n)
    # the width in 2 g^2 / (c Gamma) is the optical coherence damping, Gamma/2 here
    alpha = 2 * g**2 / (c * gam / 2)
    sigma = 3 * lam**2 / (2 * math.pi)
    assert alpha == pytest.approx(sigma * n, rel=0.05)


def test_coupling_constants_order(scheme):
    gs, gt = coupling_constants(scheme, VaporSpec(393, density=1e18))
    s = scheme.transition("S")
    assert gs == pytest.approx(coupling_constant(s.omega, s.dipole, 1e18))
    assert gt > 0


def test_alpha_bar_limits():
    assert alpha_bar(1e5, 1.0, 0.0, 2e9) == pytest.approx(2 * 1e10 / (c * 2e9))
    assert alpha_bar(1e5, 1.0, 0.5, 4e9) == pytest.approx(alpha_bar(1e5, 1.0, 0.5, 2e9) / 2)
    with pytest.raises(ZeroDivisionError):
        alpha_bar(1e5, 0.0, 1.0, 2e9)


def test_typical_scale_alpha_bar(scheme):
    """Typical couplings give a build-up length far below the cell length."""
    from rydthz.spectra import ConverterSetup
    setup = ConverterSetup(scheme, typical_fields(scheme), VaporSpec(393, density=4.6e18))
    mc = setup.mixing_config()
    direct = 2 * mc.g_s**2 * (mc.big_g_s**2 + mc.big_g_t**2) / (c * mc.gamma_th * mc.big_g_s**2)
    assert mc.alpha_bar == pytest.approx(direct, rel=1e-12)
    assert 1 - math.exp(-mc.alpha_bar * mc.length) == pytest.approx(1.0, abs=1e-6)


def test_mixing_config_consistency(scheme):
    f = typical_fields(scheme)
    mc = MixingConfig(2.0, 3.0, 5e-3, 1e9, fields=f)
    by = {x.label: x for x in f}
    assert mc.big_g_s == pytest.approx(2.0 * abs(by["A2"].rabi) * abs(by["A3"].rabi), rel=1e-12)
    assert mc.big_g_t == pytest.approx(3.0 * abs(by["A1"].rabi) * abs(by["A4"].rabi), rel=1e-12)
    with pytest.raises(ConfigurationError):
        MixingConfig(2.0, 3.0, 5e-3, 1e9, big_g_s=1.0, fields=f)
    with pytest.raises(ConfigurationError):
        MixingConfig(2.0, 3.0, 0.0, 1e9, 1.0, 1.0)


# -- closed-form efficiency -----------------------------------------------------------------

def test_eta_zero_length_limit():
    cfg = ceiling_config(1.0, 1e-12)
    assert eta_qe_analytic(cfg) == pytest.approx(0.0, abs=1e-20)


def test_eta_symmetric_saturated():
    assert eta_qe_analytic(ceiling_config(1.0, 50.0)) == pytest.approx(0.25, abs=1e-3)


def test_eta_no_coupling():
    assert eta_qe_analytic(MixingConfig(1.0, 1.0, 1e-3, 1e9, 0.0, 0.0)) == 0.0


@settings(max_examples=200, deadline=None)
@given(r=st.floats(1e-3, 1e3), abl=st.floats(1e-3, 200))
def test_eta_ceiling(r, abl):
    assert 0.0 <= eta_qe_analytic(ceiling_config(r, abl)) <= 0.25 + 1e-15


@settings(max_examples=50, deadline=None)
@given(r=st.floats(1e-2, 1e2), l1=st.floats(1e-4, 1e-2), l2=st.floats(1e-4, 1e-2))
def test_eta_monotone_in_length(r, l1, l2):
    a = ceiling_config(r, 1.0)
    lo, hi = sorted((l1, l2))
    from dataclasses import replace
    assert eta_qe_analytic(replace(a, length=lo)) <= eta_qe_analytic(replace(a, length=hi)) + 1e-15


# -- propagation ---------------------------------------------------------------------------

@pytest.mark.parametrize("ratio", [0.25, 0.5, 1, 2, 4])
@pytest.mark.parametrize("abl", [0.1, 0.5, 1, 2, 5, 10])
@pytest.mark.parametrize("method", ["expm", "ode"])
def test_propagation_matches_closed_form(ratio, abl, method):
    cfg = ceiling_config(ratio, abl)
    res = coupled_mode_propagate(analytic_beta(cfg), cfg, method=method)
    assert res.eta_qe == pytest.approx(eta_qe_analytic(cfg), rel=0.01)


def test_no_cross_coupling():
    cfg = ceiling_config(1.0, 2.0)
    beta = np.diag(np.diag(analytic_beta(cfg)))
    res = coupled_mode_propagate(beta, cfg)
    assert res.a_s == 0 and res.eta_qe == 0


def test_large_mismatch():
    from dataclasses import replace
    cfg = ceiling_config(1.0, 1.0)
    beta = analytic_beta(cfg)
    matched = coupled_mode_propagate(beta, cfg).eta_qe
    off = replace(cfg, delta_k=1e3 / cfg.length)
    for method in ("expm", "ode"):
        assert coupled_mode_propagate(beta, off, method=method).eta_qe < 1e-3 * matched


def test_expm_vs_ode_with_mismatch():
    from dataclasses import replace
    cfg = replace(ceiling_config(0.7, 3.0), delta_k=800.0, loss_s=5.0)
    beta = analytic_beta(cfg)
    a = coupled_mode_propagate(beta, cfg, method="expm", n_profile=11)
    b = coupled_mode_propagate(beta, cfg, method="ode", n_profile=11)
    np.testing.assert_allclose(a.profile, b.profile, atol=1e-8)


def test_gain_rejected():
    cfg = ceiling_config(1.0, 1.0)
    with pytest.raises(NonPassiveMediumError):
        coupled_mode_propagate(-analytic_beta(cfg), cfg)


def test_bad_input():
    cfg = ceiling_config(1.0, 1.0)
    with pytest.raises(ConfigurationError):
        coupled_mode_propagate(analytic_beta(cfg), cfg, a_t_in=0.0)
    with pytest.raises(ConfigurationError):
        coupled_mode_propagate(np.zeros((3, 3)), cfg)


def test_flux_bound_profile():
    cfg = ceiling_config(2.0, 4.0)
    res = coupled_mode_propagate(analytic_beta(cfg), cfg, n_profile=50)
    flux = np.abs(res.profile) ** 2
    assert np.all(flux.sum(axis=1) <= 1 + 1e-9)
    assert res.flux_out <= 1 + 1e-9
