"""Photon-stream Monte Carlo and second-order coherence estimators.

Streams are arrays of arrival times (s).  Every generator takes an integer
seed and derives its own Philox stream from it, keyed by the operation, so
runs are bit-reproducible and independent operations never share random
numbers even when given the same seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter
from scipy.special import gammainc

from .errors import ConfigurationError, EmptyStreamError, InsufficientDataError

DEFAULT_DEAD_TIME = 32e-9
MIN_OCCUPIED_BINS = 100

# operation keys for seed derivation
_OP_COHERENT, _OP_THERMAL, _OP_DETECT, _OP_SPLIT, _OP_DARK = range(1, 6)

_CHUNK_STEPS = 1 << 20
_PAIR_CHUNK = 1 << 23


def make_rng(seed: int | None, op: int = 0) -> np.random.Generator:
    """Counter-based generator for ``(seed, op)``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(op,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class PhotonStream:
    times: np.ndarray
    duration: float
    source: str
    seed: int | None = None

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=float)
        if self.times.ndim != 1:
            raise ConfigurationError("arrival times must be one-dimensional")
        if not self.duration >= 0:
            raise ConfigurationError("duration must be >= 0")
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise ConfigurationError("arrival times must be strictly increasing")
            if self.times[0] < 0 or self.times[-1] > self.duration:
                raise ConfigurationError("arrival times outside [0, duration]")

    def __len__(self):
        return self.times.size

    @property
    def rate(self) -> float:
        return self.times.size / self.duration if self.duration > 0 else 0.0


def _strict(times: np.ndarray) -> np.ndarray:
    # exact float ties have probability ~1e-10 per run; merge them
    t = np.sort(times)
    if t.size > 1 and np.any(t[1:] == t[:-1]):
        t = np.unique(t)
    return t


def _check_rate(rate, duration):
    if not (rate >= 0 and np.isfinite(rate)):
        raise ConfigurationError(f"rate must be finite and >= 0, got {rate}")
    if not (duration >= 0 and np.isfinite(duration)):
        raise ConfigurationError(f"duration must be finite and >= 0, got {duration}")


def _poisson_times(rng, rate, duration):
    n = rng.poisson(rate * duration) if rate > 0 and duration > 0 else 0
    return _strict(rng.uniform(0.0, duration, n))


def gen_coherent(rate: float, duration: float, seed: int | None = 0) -> PhotonStream:
    """Homogeneous Poisson arrivals."""
    _check_rate(rate, duration)
    rng = make_rng(seed, _OP_COHERENT)
    return PhotonStream(_poisson_times(rng, rate, duration), duration, "coherent", seed)


def gen_thermal(rate: float, tau_c: float, duration: float, seed: int | None = 0,
                steps_per_tau: int = 100) -> PhotonStream:
    """Cox process driven by the intensity of a complex Ornstein-Uhlenbeck field.

    The field has first-order coherence exp(-|tau|/tau_c), so the photon
    stream has g2(tau) = 1 + exp(-2|tau|/tau_c).  The field is advanced with
    the exact AR(1) update on a grid of tau_c / steps_per_tau and the
    intensity is held constant inside each step.  ``tau_c = inf`` freezes a
    single field draw for the whole record.
    """
    _check_rate(rate, duration)
    if not tau_c > 0:
        raise ConfigurationError("coherence time must be > 0")
    rng = make_rng(seed, _OP_THERMAL)
    e0 = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
    if rate == 0 or duration == 0:
        return PhotonStream(np.empty(0), duration, "thermal", seed)
    if np.isinf(tau_c):
        times = _poisson_times(rng, rate * abs(e0) ** 2, duration)
        return PhotonStream(times, duration, "thermal", seed)

    dt = tau_c / steps_per_tau
    n_steps = int(np.ceil(duration / dt))
    a = np.exp(-dt / tau_c)
    b = np.sqrt(1.0 - a * a)
    cur = e0  # field at the start of the next step
    out = []
    for start in range(0, n_steps, _CHUNK_STEPS):
        m = min(_CHUNK_STEPS, n_steps - start)
        xi = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2.0)
        nxt = lfilter([b], [1.0, -a], xi, zi=np.array([a * cur]))[0]
        e = np.concatenate(([cur], nxt[:-1]))
        cur = nxt[-1]
        lo = (start + np.arange(m)) * dt
        widths = np.minimum(lo + dt, duration) - lo
        counts = rng.poisson(rate * (e.real**2 + e.imag**2) * widths)
        idx = np.repeat(np.arange(m), counts)
        out.append(lo[idx] + rng.random(idx.size) * widths[idx])
    times = _strict(np.concatenate(out)) if out else np.empty(0)
    return PhotonStream(times, duration, "thermal", seed)


def apply_dead_time(times: np.ndarray, dead_time: float) -> np.ndarray:
    """Non-paralyzable dead time: drop events within dead_time of the last kept one."""
    if dead_time <= 0 or times.size < 2:
        return times
    gaps = np.diff(times)
    if np.all(gaps >= dead_time):
        return times
    keep = np.ones(times.size, dtype=bool)
    # an event whose raw gap is >= dead_time is always kept, so only the
    # stretches of short gaps need the sequential scan
    suspect = np.flatnonzero(gaps < dead_time) + 1
    last = times[0]
    prev = -1
    for i in suspect.tolist():
        if i - 1 != prev:
            last = times[i - 1]  # kept, its own raw gap was long
        if times[i] - last < dead_time:
            keep[i] = False
        else:
            last = times[i]
        prev = i
    return times[keep]


def detect(stream: PhotonStream, eta: float, dark_rate: float = 0.0,
           dead_time: float = DEFAULT_DEAD_TIME, seed: int | None = 0) -> PhotonStream:
    """Thinning with probability eta, Poisson dark counts, non-paralyzable dead time."""
    if not 0.0 <= eta <= 1.0:
        raise ConfigurationError(f"detection efficiency must be in [0, 1], got {eta}")
    if not dark_rate >= 0:
        raise ConfigurationError("dark rate must be >= 0")
    if not dead_time >= 0:
        raise ConfigurationError("dead time must be >= 0")
    rng = make_rng(seed, _OP_DETECT)
    kept = stream.times[rng.random(stream.times.size) < eta]
    dark = _poisson_times(make_rng(seed, _OP_DARK), dark_rate, stream.duration)
    times = _strict(np.concatenate((kept, dark))) if dark.size else kept
    times = apply_dead_time(times, dead_time)
    return PhotonStream(times, stream.duration, "detected", seed)


def hbt_split(stream: PhotonStream, seed: int | None = 0) -> tuple[PhotonStream, PhotonStream]:
    """50:50 beam splitter: each photon goes to either output independently."""
    rng = make_rng(seed, _OP_SPLIT)
    to_a = rng.random(stream.times.size) < 0.5
    return (PhotonStream(stream.times[to_a], stream.duration, stream.source, seed),
            PhotonStream(stream.times[~to_a], stream.duration, stream.source, seed))


@dataclass
class CoincidenceHistogram:
    edges: np.ndarray
    counts: np.ndarray
    g2: np.ndarray
    n_a: int
    n_b: int
    duration: float
    expected: np.ndarray = field(repr=False, default=None)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def g2_zero(self) -> float:
        return float(self.g2[np.argmin(np.abs(self.centers))])


def _pair_histogram(a: np.ndarray, b: np.ndarray, lo: float, hi: float,
                    n_bins: int) -> np.ndarray:
    # all ordered pairs with tau = t_b - t_a in [lo, hi)
    width = (hi - lo) / n_bins
    first = np.searchsorted(b, a + lo, side="left")
    last = np.searchsorted(b, a + hi, side="left")
    per = last - first
    counts = np.zeros(n_bins, dtype=np.int64)
    cum = np.cumsum(per)
    start = 0
    while start < a.size:
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + _PAIR_CHUNK, side="right"))
        stop = max(stop, start + 1)
        n = per[start:stop]
        tot = int(n.sum())
        if tot:
            ia = np.repeat(np.arange(start, stop), n)
            offs = np.arange(tot) - np.repeat(np.cumsum(n) - n, n)
            tau = b[first[ia] + offs] - a[ia]
            k = np.floor((tau - lo) / width).astype(np.int64)
            k = k[(k >= 0) & (k < n_bins)]
            counts += np.bincount(k, minlength=n_bins)
        start = stop
    return counts


def g2_cross(a: PhotonStream, b: PhotonStream, bin_width: float,
             tau_max: float) -> CoincidenceHistogram:
    """Full pair cross-correlation histogram of two streams.

    Bins are centred on multiples of ``bin_width`` out to the largest one not
    exceeding ``tau_max``.  Counts are normalised by the uncorrelated
    expectation N_A N_B bin (T - |tau|) / T^2.
    """
    if not bin_width > 0:
        raise ConfigurationError("bin width must be > 0")
    if not tau_max >= bin_width:
        raise ConfigurationError("tau_max must be >= bin width")
    if len(a) == 0 or len(b) == 0:
        raise EmptyStreamError("g2 needs two non-empty streams")
    if not np.isclose(a.duration, b.duration, rtol=1e-12, atol=0):
        raise ConfigurationError("streams must share the same duration")
    duration = a.duration
    k = int(np.floor(tau_max / bin_width * (1 + 1e-12)))
    edges = (np.arange(-k, k + 2) - 0.5) * bin_width
    counts = _pair_histogram(a.times, b.times, edges[0], edges[-1], 2 * k + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    overlap = np.clip(duration - np.abs(centers), 0.0, None)
    expected = len(a) * len(b) * bin_width * overlap / duration**2
    with np.errstate(divide="ignore", invalid="ignore"):
        g2 = np.where(expected > 0, counts / expected, 0.0)
    return CoincidenceHistogram(edges, counts, g2, len(a), len(b), duration, expected)


def dead_time_reference(rate: float, resolution: float, dead_time: float) -> float:
    """g2(0) estimate expected for Poisson light seen through dead time.

    The filtered stream is a renewal process with intervals dead_time +
    Exp(lam), lam = rate / (1 - rate dead_time), where ``rate`` is the
    observed count rate.  The mean number of ordered pairs inside a window
    of length W is 2 rate sum_k [Y_k P(k, lam Y_k) - (k/lam) P(k+1, lam Y_k)]
    with Y_k = W - k dead_time over Y_k > 0.
    """
    if dead_time <= 0:
        return 1.0
    if rate <= 0:
        raise InsufficientDataError("no counts to build a reference from")
    if rate * dead_time >= 1:
        raise ConfigurationError("observed rate incompatible with the dead time")
    lam = rate / (1.0 - rate * dead_time)
    k_max = int(np.ceil(resolution / dead_time))
    k_max = min(k_max, int(lam * resolution + 40.0 * np.sqrt(lam * resolution + 1.0) + 50))
    k = np.arange(1, k_max + 1, dtype=float)
    y = resolution - k * dead_time
    k, y = k[y > 0], y[y > 0]
    if k.size == 0:
        return 0.0
    s = np.sum(y * gammainc(k, lam * y) - (k / lam) * gammainc(k + 1, lam * y))
    return float(2.0 * s / (rate * resolution**2))


@dataclass
class AutocorrEstimate:
    raw: float
    corrected: float
    stderr: float
    n_bins: int
    occupied: int
    resolution: float
    dead_time: float

    @property
    def value(self) -> float:
        """Dead-time-corrected estimate when defined, raw otherwise."""
        return self.corrected if np.isfinite(self.corrected) else self.raw


def g2_single_autocorr(stream: PhotonStream, resolution: float,
                       dead_time: float = 0.0) -> AutocorrEstimate:
    """Single-detector g2(0) from counting statistics in bins of ``resolution``.

    raw = <n(n-1)> / <n>^2 over complete bins.  ``corrected`` divides by the
    value expected for Poisson light through the given dead time, so a
    coherent source reads 1 at any resolution; it is NaN where that
    reference vanishes (resolution <= dead time).
    """
    if not resolution > 0:
        raise ConfigurationError("resolution must be > 0")
    if not dead_time >= 0:
        raise ConfigurationError("dead time must be >= 0")
    n_bins = int(np.floor(stream.duration / resolution))
    if n_bins < 1:
        raise InsufficientDataError("record shorter than one resolution bin")
    idx = np.floor(stream.times / resolution).astype(np.int64)
    idx = idx[idx < n_bins]
    if idx.size == 0:
        raise InsufficientDataError("no counts in complete bins")
    # run lengths of the (sorted) bin indices give the occupied-bin counts
    change = np.flatnonzero(np.diff(idx)) + 1
    occ = np.diff(np.concatenate(([0], change, [idx.size]))).astype(float)
    if occ.size < MIN_OCCUPIED_BINS:
        raise InsufficientDataError(
            f"only {occ.size} occupied bins (need {MIN_OCCUPIED_BINS})")
    mean = idx.size / n_bins
    fact = occ * (occ - 1.0)
    m2 = fact.sum() / n_bins
    raw = m2 / mean**2
    var = (np.sum(fact**2) / n_bins - m2**2)
    stderr = float(np.sqrt(max(var, 0.0) / n_bins) / mean**2)
    ref = dead_time_reference(idx.size / (n_bins * resolution), resolution, dead_time)
    corrected = raw / ref if ref > 0 else float("nan")
    return AutocorrEstimate(float(raw), float(corrected), stderr, n_bins, int(occ.size),
                            resolution, dead_time)
