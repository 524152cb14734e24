import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydthz.doppler import VaporSpec, thermal_state
from rydthz.errors import ConfigurationError
from rydthz.levels import (
    SIGNAL_TRANSITION,
    THZ_TRANSITION,
    TWO_PI,
    default_fields,
    solve_steady_state,
    with_field,
)
from rydthz.spectra import (
    BoundaryPeakError,
    ConverterSetup,
    NoPeakError,
    SpectrumTrace,
    extract_bandwidth,
    linear_response_coefficients,
    nonlinear_response_curve,
    propagate_nonlinear,
    signal_spectrum,
    transmission_spectrum,
)

from conftest import MHZ, typical_fields, random_fields

THIN = VaporSpec(393.0, density=1e15)


def lorentz(x, x0, hw):
    return hw**2 / ((x - x0) ** 2 + hw**2)


def converter_setup(scheme, density=5e16):
    f = default_fields(scheme, rabi={"A1": 50 * MHZ, "A2": 100 * MHZ, "A3": 200 * MHZ,
                                     "A4": 100 * MHZ}, detuning={"A1": 50 * MHZ})
    return ConverterSetup(scheme, f, VaporSpec(393.0, density=density))


# -- SpectrumTrace -------------------------------------------------------------------

def test_trace_invariants():
    with pytest.raises(ConfigurationError):
        SpectrumTrace("detuning", [0, 0, 1], [1, 2, 3])
    with pytest.raises(ConfigurationError):
        SpectrumTrace("detuning", [0, 1], [1, np.inf])
    with pytest.raises(ConfigurationError):
        SpectrumTrace("intensity", [0, 1], [1, -1])


# -- linear response -------------------------------------------------------------------

def test_beta_aux_off_two_level(scheme):
    """With the auxiliaries off each probe sees a bare two-level transition."""
    cold = VaporSpec(1e-13)
    beta = linear_response_coefficients(scheme, default_fields(scheme), cold)
    assert abs(beta[0, 1]) < 1e-12 * abs(beta[0, 0])
    assert abs(beta[1, 0]) < 1e-12 * abs(beta[0, 0])
    # rho_61 = Omega_S / (2 (Delta_S... )) with only the signal line populated: i/(Gamma_6)
    gam6 = TWO_PI * 6e6
    gam_coh = gam6 / 2
    assert beta[0, 0] == pytest.approx(-0.5j / gam_coh, rel=1e-9)
    assert beta[1, 1] == pytest.approx(0.0, abs=1e-20)  # |4>, |5> both empty


def test_beta_phase_covariance(scheme):
    f = typical_fields(scheme)
    b0 = linear_response_coefficients(scheme, f, THIN)
    phi = 0.9
    g = with_field(f, "A2", rabi=f[1].rabi * np.exp(1j * phi))
    b1 = linear_response_coefficients(scheme, g, THIN)
    np.testing.assert_allclose(np.diag(b1), np.diag(b0), rtol=1e-9)
    assert b1[0, 1] == pytest.approx(b0[0, 1] * np.exp(1j * phi), rel=1e-9)
    assert b1[1, 0] == pytest.approx(b0[1, 0] * np.exp(-1j * phi), rel=1e-9)


@pytest.mark.parametrize("v", [0.0, 150.0])
def test_beta_finite_difference_single_velocity(scheme, v):
    f = typical_fields(scheme)
    beta = linear_response_coefficients(scheme, f, VaporSpec(1e-13))
    h = 1e-4 * TWO_PI * 6e6
    for col, lab in enumerate(("S", "T")):
        plus = solve_steady_state(scheme, with_field(f, lab, rabi=h)).rho
        minus = solve_steady_state(scheme, with_field(f, lab, rabi=-h)).rho
        for row, (i, j) in enumerate((SIGNAL_TRANSITION, THZ_TRANSITION)):
            fd = (plus[i, j] - minus[i, j]) / (2 * h)
            if abs(beta[row, col]) > 1e-30:
                assert beta[row, col] == pytest.approx(fd, rel=1e-6)


def test_beta_finite_difference_thermal(scheme):
    f = typical_fields(scheme)
    beta = linear_response_coefficients(scheme, f, THIN)
    h = 1e-4 * TWO_PI * 6e6
    for col, lab in enumerate(("S", "T")):
        plus = thermal_state(scheme, with_field(f, lab, rabi=h), THIN)
        minus = thermal_state(scheme, with_field(f, lab, rabi=-h), THIN)
        for row, (i, j) in enumerate((SIGNAL_TRANSITION, THZ_TRANSITION)):
            fd = (plus[i, j] - minus[i, j]) / (2 * h)
            assert beta[row, col] == pytest.approx(fd, rel=1e-6)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), logn=st.floats(14, 18.5))
def test_model_beta_is_passive(scheme, seed, logn):
    rng = np.random.default_rng(seed)
    f = random_fields(scheme, rng, probes=False)
    setup = ConverterSetup(scheme, f, VaporSpec(393.0, density=10**logn))
    res = setup.efficiency()
    assert 0 <= res.eta_qe <= 1
    assert res.flux_out <= 1 + 1e-9


# -- spectra -------------------------------------------------------------------------------

def test_spectrum_all_aux_off(scheme):
    setup = ConverterSetup(scheme, default_fields(scheme), THIN)
    tr = signal_spectrum(setup, TWO_PI * np.linspace(-1e8, 1e8, 11))
    assert np.all(tr.y == 0)


def test_spectrum_nonnegative_and_threads(scheme):
    setup = converter_setup(scheme)
    grid = TWO_PI * np.linspace(-3e8, 3e8, 9)
    a = signal_spectrum(setup, grid, "T")
    b = signal_spectrum(setup, grid, "T", workers=3)
    assert np.all(a.y >= 0)
    np.testing.assert_array_equal(a.y, b.y)


def test_spectrum_rejects_unsorted(scheme):
    with pytest.raises(ConfigurationError):
        signal_spectrum(converter_setup(scheme), [1.0, 0.0])


def test_transmission_no_atoms(scheme):
    tr = transmission_spectrum(scheme, typical_fields(scheme), VaporSpec(393, density=0.0),
                               TWO_PI * np.linspace(-1e9, 1e9, 5), 5e-3)
    assert np.all(tr.y == 1.0)


def test_transmission_far_detuned(scheme):
    tr = transmission_spectrum(scheme, typical_fields(scheme), VaporSpec(393, density=1e16),
                               TWO_PI * np.array([-20e9, 20e9]), 5e-3)
    assert np.all(np.abs(tr.y - 1) < 1e-3)
    assert np.all(tr.y <= 1) and np.all(tr.y > 0)


def test_eit_window(scheme):
    """Strong A2 coupling opens a transparency window at two-photon resonance."""
    f = default_fields(scheme, rabi={"A1": 1 * MHZ, "A2": 20 * MHZ})
    vap = VaporSpec(393, density=1e16)
    grid = np.array([0.0])
    on = transmission_spectrum(scheme, f, vap, grid, 5e-3).y[0]
    off = transmission_spectrum(scheme, with_field(f, "A2", rabi=0.0), vap, grid, 5e-3).y[0]
    assert on > off


# -- nonlinear response ----------------------------------------------------------------------

def test_nonlinear_zero_input(scheme):
    tr = nonlinear_response_curve(converter_setup(scheme), [0.0], 1e-6)
    assert tr.y[0] == 0.0


def test_nonlinear_matches_linearised(scheme):
    setup = converter_setup(scheme)
    p = propagate_nonlinear(setup, TWO_PI * 1e3)
    assert p.eta == pytest.approx(setup.efficiency().eta_qe, rel=0.02)


def test_nonlinear_small_signal_linear(scheme):
    setup = converter_setup(scheme)
    om = TWO_PI * np.array([1e3, 2e3])
    tr = nonlinear_response_curve(setup, om, 1e-6)
    assert tr.y[1] / tr.y[0] == pytest.approx(tr.x[1] / tr.x[0], rel=0.01)


def test_nonlinear_grid_validation(scheme):
    with pytest.raises(ConfigurationError):
        nonlinear_response_curve(converter_setup(scheme), [2.0, 1.0], 1e-6)


# -- bandwidth extraction -------------------------------------------------------------------

def test_lorentzian_fwhm():
    x = np.linspace(-20, 20, 4001)
    bw = extract_bandwidth(SpectrumTrace("detuning", x, lorentz(x, 0.3, 1.0)))
    assert bw.shape == "single"
    assert abs(bw.fwhm - 2.0) <= x[1] - x[0]


def test_double_lorentzian_envelope():
    hw = 1.0
    x = np.linspace(-15, 15, 3001)
    y = lorentz(x, -3, hw) + lorentz(x, 3, hw)
    bw = extract_bandwidth(SpectrumTrace("detuning", x, y))
    dense = np.linspace(-15, 15, 1_000_001)
    yd = lorentz(dense, -3, hw) + lorentz(dense, 3, hw)
    above = dense[yd >= yd.max() / 2]
    ref = above[-1] - above[0]
    assert bw.shape == "split-beyond-half"
    assert bw.fwhm == pytest.approx(ref, rel=0.005)


def test_split_above_half():
    x = np.linspace(-15, 15, 3001)
    y = lorentz(x, -1.2, 1.0) + lorentz(x, 1.2, 1.0)
    bw = extract_bandwidth(SpectrumTrace("detuning", x, y))
    assert bw.shape == "split"
    assert len(bw.peaks) == 2


def test_no_peak_and_boundary():
    x = np.linspace(0, 1, 11)
    with pytest.raises(NoPeakError):
        extract_bandwidth(SpectrumTrace("detuning", x, np.zeros(11)))
    with pytest.raises(BoundaryPeakError):
        extract_bandwidth(SpectrumTrace("detuning", x, np.exp(x)))
    with pytest.raises(ConfigurationError):
        extract_bandwidth(SpectrumTrace("detuning", x[:4], np.ones(4)))


@settings(max_examples=50, deadline=None)
@given(scale=st.floats(1e-20, 1e20), sep=st.floats(0, 6), hw=st.floats(0.3, 2))
def test_bandwidth_scale_invariant(scale, sep, hw):
    x = np.linspace(-30, 30, 1201)
    y = lorentz(x, -sep, hw) + lorentz(x, sep, hw)
    a = extract_bandwidth(SpectrumTrace("detuning", x, y))
    b = extract_bandwidth(SpectrumTrace("detuning", x, scale * y))
    assert a.shape == b.shape
    assert b.fwhm == pytest.approx(a.fwhm, rel=1e-9)
