import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rydthz.errors import ConfigurationError, EmptyStreamError, InsufficientDataError
from rydthz.photons import (
    MIN_OCCUPIED_BINS,
    PhotonStream,
    apply_dead_time,
    dead_time_reference,
    detect,
    g2_cross,
    g2_single_autocorr,
    gen_coherent,
    gen_thermal,
    hbt_split,
)


def brute_dead_time(times, tau):
    out, last = [], -np.inf
    for t in times:
        if t - last >= tau:
            out.append(t)
            last = t
    return np.array(out)


# -- streams -----------------------------------------------------------------------

def test_stream_invariants():
    with pytest.raises(ConfigurationError):
        PhotonStream(np.array([0.2, 0.1]), 1.0, "x")
    with pytest.raises(ConfigurationError):
        PhotonStream(np.array([0.5, 1.5]), 1.0, "x")


def test_coherent_empty_and_mean():
    assert len(gen_coherent(0.0, 1.0, 1)) == 0
    s = gen_coherent(1e6, 1.0, 2)
    assert abs(len(s) - 1e6) < 5 * 1e3
    assert np.all(np.diff(s.times) > 0)


def test_coherent_exponential_gaps():
    s = gen_coherent(1e4, 1.0, 3)
    p = stats.kstest(np.diff(s.times), "expon", args=(0, 1e-4)).pvalue
    assert p > 0.01


def test_reproducible():
    a = gen_thermal(1e6, 1e-6, 0.01, seed=11)
    b = gen_thermal(1e6, 1e-6, 0.01, seed=11)
    c = gen_thermal(1e6, 1e-6, 0.01, seed=12)
    np.testing.assert_array_equal(a.times, b.times)
    assert len(a) != len(c) or not np.array_equal(a.times, c.times)
    d1, d2 = detect(a, 0.5, 100.0, 32e-9, 4), detect(a, 0.5, 100.0, 32e-9, 4)
    np.testing.assert_array_equal(d1.times, d2.times)


def test_thermal_frozen_field_is_poisson():
    # one intensity draw for the whole record: counts are Poisson given that draw
    s = gen_thermal(1e5, np.inf, 1.0, seed=5)
    gaps = np.diff(s.times)
    p = stats.kstest(gaps, "expon", args=(0, gaps.mean())).pvalue
    assert p > 0.01


def test_thermal_mean_rate():
    # the record-average rate fluctuates with the field; over many coherence times it is close
    s = gen_thermal(1e6, 1e-6, 0.2, seed=6)
    assert s.rate == pytest.approx(1e6, rel=0.02)


# -- detector ------------------------------------------------------------------------

def test_detect_identity():
    s = gen_coherent(1e5, 0.1, 7)
    d = detect(s, 1.0, 0.0, 0.0, 7)
    np.testing.assert_array_equal(d.times, s.times)


def test_detect_pure_dark():
    s = gen_coherent(1e5, 1.0, 8)
    d = detect(s, 0.0, 2000.0, 0.0, 8)
    assert abs(len(d) - 2000) < 5 * np.sqrt(2000)


def test_non_paralyzable_rate():
    eta, r, d, tau = 0.5, 4e6, 1e4, 5e-8   # eta R tau = 0.1
    s = gen_coherent(r, 0.5, 9)
    out = detect(s, eta, d, tau, 9)
    r1 = eta * r + d
    assert out.rate == pytest.approx(r1 / (1 + r1 * tau), rel=0.02)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), tau=st.floats(1e-9, 1e-6))
def test_dead_time_matches_brute_force(seed, tau):
    t = np.sort(np.random.default_rng(seed).uniform(0, 1e-4, 400))
    t = t[np.concatenate(([True], np.diff(t) > 0))]
    out = apply_dead_time(t, tau)
    np.testing.assert_array_equal(out, brute_dead_time(t, tau))
    assert np.all(np.diff(out) >= tau)


# -- HBT --------------------------------------------------------------------------

def test_split_empty_and_union():
    a, b = hbt_split(PhotonStream(np.array([]), 1.0, "x"), 1)
    assert len(a) == len(b) == 0
    s = gen_coherent(1e5, 1.0, 10)
    a, b = hbt_split(s, 10)
    np.testing.assert_array_equal(np.sort(np.concatenate((a.times, b.times))), s.times)
    assert abs(len(a) - len(s) / 2) < 5 * np.sqrt(len(s) / 4)


def test_cross_empty_raises():
    e = PhotonStream(np.array([]), 1.0, "x")
    with pytest.raises(EmptyStreamError):
        g2_cross(e, gen_coherent(10, 1.0), 1e-6, 1e-5)


def test_cross_bin_validation():
    s = gen_coherent(1e3, 1.0)
    with pytest.raises(ConfigurationError):
        g2_cross(s, s, 0.0, 1e-6)
    with pytest.raises(ConfigurationError):
        g2_cross(s, s, 1e-6, 1e-7)


def test_pair_histogram_brute_force():
    rng = np.random.default_rng(12)
    a = np.sort(rng.uniform(0, 1e-3, 300))
    b = np.sort(rng.uniform(0, 1e-3, 300))
    h = g2_cross(PhotonStream(a, 1e-3, "x"), PhotonStream(b, 1e-3, "x"), 1e-5, 5e-5)
    tau = (b[None, :] - a[:, None]).ravel()
    ref, _ = np.histogram(tau, h.edges)
    np.testing.assert_array_equal(h.counts, ref)
    assert np.all(np.diff(h.edges) > 0) and np.all(h.g2 >= 0)


def test_independent_coherent():
    a = gen_coherent(1e6, 1.0, 13)
    b = gen_coherent(1e6, 1.0, 14)
    h = g2_cross(a, b, 1e-6, 5e-6)
    assert np.all(np.abs(h.g2 - 1) < 0.02)


def test_split_coherent():
    a, b = hbt_split(gen_coherent(2e6, 1.0, 15), 15)
    h = g2_cross(a, b, 1e-6, 5e-6)
    assert h.g2_zero == pytest.approx(1.0, abs=0.02)


def test_split_thermal_and_chain():
    tau_c = 1e-6
    s = gen_thermal(1e7, tau_c, 0.1, seed=16)
    d = detect(s, 0.5, 10.0, 0.0, 16)
    a, b = hbt_split(d, 16)
    h = g2_cross(a, b, tau_c / 20, 4 * tau_c)
    assert h.g2_zero == pytest.approx(2.0, abs=0.1)
    far = h.g2[np.abs(h.centers) > 3 * tau_c]
    assert np.all(np.abs(far - 1) < 0.05)


# -- single-detector autocorrelation -------------------------------------------------------

def test_dead_time_zero_at_short_resolution():
    s = detect(gen_coherent(5e6, 0.05, 17), 1.0, 0.0, 32e-9, 17)
    e = g2_single_autocorr(s, 16e-9, 32e-9)
    assert e.raw == 0.0


def test_coherent_autocorr_one():
    s = gen_coherent(1e7, 0.2, 18)
    e = g2_single_autocorr(s, 1e-8)   # rate * resolution = 0.1
    assert e.raw == pytest.approx(1.0, abs=0.02)


def test_thermal_autocorr_two():
    s = gen_thermal(2e6, 1e-6, 0.5, seed=19)
    e = g2_single_autocorr(s, 2e-8)
    assert e.raw == pytest.approx(2.0, abs=0.1)


def test_corrected_estimate_recovers():
    s = detect(gen_coherent(5e6, 0.2, 20), 1.0, 0.0, 32e-9, 20)
    for res in (64e-9, 128e-9, 1e-6):
        e = g2_single_autocorr(s, res, 32e-9)
        assert e.corrected == pytest.approx(1.0, abs=0.05)
        assert e.value == e.corrected


def test_dead_time_reference_against_simulation():
    rate_in = 5e6
    s = detect(gen_coherent(rate_in, 0.5, 21), 1.0, 0.0, 32e-9, 21)
    e = g2_single_autocorr(s, 80e-9)
    assert dead_time_reference(s.rate, 80e-9, 32e-9) == pytest.approx(e.raw, abs=4 * e.stderr + 1e-3)
    assert dead_time_reference(s.rate, 16e-9, 32e-9) == 0.0
    assert dead_time_reference(s.rate, 1e-6, 0.0) == 1.0


def test_insufficient_bins():
    s = gen_coherent(50, 1.0, 22)
    with pytest.raises(InsufficientDataError):
        g2_single_autocorr(s, 1e-3)
    assert MIN_OCCUPIED_BINS == 100


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), kind=st.sampled_from(["coherent", "thermal"]))
def test_classical_lower_bound(seed, kind):
    s = (gen_coherent(2e6, 0.05, seed) if kind == "coherent"
         else gen_thermal(2e6, 1e-6, 0.05, seed=seed))
    e = g2_single_autocorr(s, 5e-8)
    assert e.raw >= 1 - 3 * e.stderr
