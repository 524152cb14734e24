"""Detector figures of merit: count rates, NEP, SNR and dynamic range."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import h as PLANCK

from .errors import ConfigurationError, InsufficientDataError, PhysicsError
from .spectra import SpectrumTrace


class UndefinedNEPError(PhysicsError):
    pass


class BelowNoiseError(InsufficientDataError):
    pass


class UnsaturatedCurveError(InsufficientDataError):
    """No -3 dB point on the curve; ``result`` holds the range up to the last point."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass(frozen=True)
class DetectorSpec:
    eta_qe: float = 0.043
    eta_loss: float = 0.11
    dark_rate: float = 2000.0
    dead_time: float = 32e-9
    s_eff: float = 1e-6
    nu_t: float = 0.107e12

    def __post_init__(self):
        for name in ("eta_qe", "eta_loss"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")
        for name in ("dark_rate", "dead_time"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"{name} must be >= 0")
        for name in ("s_eff", "nu_t"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")

    @property
    def eta(self) -> float:
        return total_efficiency(self.eta_qe, self.eta_loss)


def thz_count_rate(i_t, spec: DetectorSpec):
    """THz photon rate (1/s) through S_eff for intensity I_T (W/m^2)."""
    i_t = np.asarray(i_t, dtype=float)
    if np.any(i_t < 0):
        raise ConfigurationError("THz intensity must be >= 0")
    r = i_t * spec.s_eff / (PLANCK * spec.nu_t)
    return float(r) if r.ndim == 0 else r


def thz_intensity(rate, spec: DetectorSpec):
    """Inverse of ``thz_count_rate``."""
    r = np.asarray(rate, dtype=float) * PLANCK * spec.nu_t / spec.s_eff
    return float(r) if r.ndim == 0 else r


def total_efficiency(eta_qe: float, eta_loss: float) -> float:
    for name, v in (("eta_qe", eta_qe), ("eta_loss", eta_loss)):
        if not 0.0 <= v <= 1.0:
            raise ConfigurationError(f"{name} must be in [0, 1], got {v}")
    return eta_qe * eta_loss


def nep(spec: DetectorSpec, eta: float | None = None) -> float:
    """Noise-equivalent power h nu_T sqrt(2 D) / eta (W/sqrt(Hz))."""
    eta = spec.eta if eta is None else eta
    if not eta > 0:
        raise UndefinedNEPError("NEP undefined for zero detection efficiency")
    return PLANCK * spec.nu_t * math.sqrt(2.0 * spec.dark_rate) / eta


def snr(r_s, dark_rate: float, tau: float = 1.0):
    """Counting SNR: R_S tau / sqrt((R_S + 2D) tau)."""
    if not tau > 0:
        raise ConfigurationError("integration time must be > 0")
    r_s = np.asarray(r_s, dtype=float)
    num = r_s * tau
    den = np.sqrt((r_s + 2.0 * dark_rate) * tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class DynamicRange:
    db: float
    i_min: float
    i_max: float
    plateau: float
    saturated: bool


def _crossing(x, y, level, rising):
    """First interpolated crossing of ``level`` in log-x."""
    above = y >= level if rising else y <= level
    hits = np.flatnonzero(above)
    if hits.size == 0:
        return None
    k = hits[0]
    if k == 0:
        return float(x[0])
    lx0, lx1 = math.log(x[k - 1]), math.log(x[k])
    f = (level - y[k - 1]) / (y[k] - y[k - 1])
    return math.exp(lx0 + f * (lx1 - lx0))


def dynamic_range(curve: SpectrumTrace, spec: DetectorSpec, tau: float = 1.0) -> DynamicRange:
    """Dynamic range (dB) of an R_S vs I_T curve.

    Lower end: SNR = 1.  Upper end: efficiency R_S / R_T drops to half of the
    median efficiency over the lowest decade of the curve.
    """
    x = np.asarray(curve.x, dtype=float)
    y = np.asarray(curve.y, dtype=float)
    if x.size < 3 or np.any(x <= 0):
        raise ConfigurationError("dynamic range needs >= 3 points at positive intensity")
    s = snr(y, spec.dark_rate, tau)
    i_min = _crossing(x, s, 1.0, rising=True)
    if i_min is None:
        raise BelowNoiseError("curve never reaches SNR = 1")
    eff = y / thz_count_rate(x, spec)
    plateau = float(np.median(eff[x <= 10.0 * x[0]]))
    i_max = _crossing(x, eff, 0.5 * plateau, rising=False)
    saturated = i_max is not None
    if not saturated:
        i_max = float(x[-1])
    res = DynamicRange(10.0 * math.log10(i_max / i_min), i_min, i_max, plateau, saturated)
    if not saturated:
        raise UnsaturatedCurveError("no -3 dB point within the curve", res)
    return res


def saturable_curve(i_t, spec: DetectorSpec, eta0: float, i_sat: float) -> SpectrumTrace:
    """Synthetic R_S = eta0 R_T / (1 + I/I_sat)."""
    i_t = np.asarray(i_t, dtype=float)
    r = eta0 * thz_count_rate(i_t, spec) / (1.0 + i_t / i_sat)
    return SpectrumTrace("intensity", i_t, r, {"eta0": eta0, "i_sat": i_sat})


def saturable_dynamic_range(spec: DetectorSpec, eta0: float, i_sat: float,
                            tau: float = 1.0) -> float:
    """Closed-form dynamic range of ``saturable_curve`` with an exact plateau eta0."""
    d = spec.dark_rate
    r_min = (1.0 + math.sqrt(1.0 + 8.0 * d * tau)) / (2.0 * tau)
    c = spec.s_eff / (PLANCK * spec.nu_t)
    i_min = r_min / (eta0 * c - r_min / i_sat)
    return 10.0 * math.log10(i_sat / i_min)
