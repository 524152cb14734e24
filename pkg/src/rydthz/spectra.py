"""Spectra and response curves of the converter.

* ``linear_response_coefficients`` -- Doppler-averaged 2x2 probe response beta.
* ``ConverterSetup`` -- beta plus linear two-mode propagation for one drive setting.
* ``signal_spectrum`` / ``transmission_spectrum`` -- detuning sweeps.
* ``nonlinear_response_curve`` -- full steady state along z for finite THz input.
* ``extract_bandwidth`` -- FWHM and peak-shape classification of a trace.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT, epsilon_0, h as PLANCK, hbar
from scipy.integrate import solve_ivp
from scipy.signal import find_peaks

from .doppler import DopplerResolvent, VaporSpec, effective_linewidth
from .errors import ConfigurationError, PhysicsError, SolverError, SpectrumError
from .levels import (
    N_LEVELS,
    PROBE_TRANSITION,
    SIGNAL_TRANSITION,
    THZ_TRANSITION,
    DriveField,
    LevelScheme,
    _by_label,
    commutator_superop,
    with_field,
)
from .mixing import (
    ConversionResult,
    MixingConfig,
    coupled_mode_propagate,
    coupling_constants,
    phase_mismatch,
)

INTENSITY_LABELS = ("intensity",)


class NoPeakError(SpectrumError):
    pass


class BoundaryPeakError(SpectrumError):
    pass


@dataclass
class SpectrumTrace:
    """Sampled curve; ``xlabel`` is ``detuning`` (rad/s) or ``intensity`` (W/m^2)."""

    xlabel: str
    x: np.ndarray
    y: np.ndarray
    params: dict = field(default_factory=dict)
    ylabel: str = ""

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.y.shape:
            raise ConfigurationError("trace x and y must be 1-D arrays of equal length")
        if self.x.size > 1 and np.any(np.diff(self.x) <= 0):
            raise ConfigurationError("trace abscissa must be strictly increasing")
        if not np.all(np.isfinite(self.y)):
            raise ConfigurationError("trace ordinate must be finite")
        if self.xlabel in INTENSITY_LABELS and np.any(self.y < 0):
            raise ConfigurationError("intensity-like trace has negative values")

    def __len__(self):
        return self.x.size


def _perturbation(upper: int, lower: int) -> np.ndarray:
    # d L / d Omega for H[upper, lower] = Omega / 2, conjugate held fixed
    e = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    e[upper, lower] = 0.5
    return commutator_superop(e)


_P_S = _perturbation(*SIGNAL_TRANSITION)
_P_T = _perturbation(*THZ_TRANSITION)


def _probes_off(fields: Sequence[DriveField]) -> list[DriveField]:
    return [f if f.label not in ("S", "T") else _zero(f) for f in fields]


def _zero(f: DriveField) -> DriveField:
    return replace(f, rabi=0.0)


def linear_response_coefficients(scheme: LevelScheme, fields: Sequence[DriveField],
                                 vapor: VaporSpec, method: str = "exact",
                                 n_nodes: int = 64) -> np.ndarray:
    """beta with (rho_61, rho_54) = beta @ (Omega_S, Omega_T) to first order.

    The probe-free steady state is perturbed by the derivative of the
    Liouvillian with respect to each probe amplitude and the linear response
    solved directly, then thermally averaged.
    """
    res = DopplerResolvent(scheme, _probes_off(fields), vapor, method=method, n_nodes=n_nodes)
    rs = res.mean_response(_P_S)
    rt = res.mean_response(_P_T)
    (si, sj), (ti, tj) = SIGNAL_TRANSITION, THZ_TRANSITION
    return np.array([[rs[si, sj], rt[si, sj]], [rs[ti, tj], rt[ti, tj]]])


@dataclass
class ConverterSetup:
    """Everything needed to turn a drive setting into a conversion efficiency."""

    scheme: LevelScheme
    fields: list[DriveField]
    vapor: VaporSpec
    length: float = 5e-3
    loss_s: float = 0.0
    loss_t: float = 0.0
    method: str = "exact"
    n_nodes: int = 64

    def mixing_config(self, fields: Sequence[DriveField] | None = None) -> MixingConfig:
        fields = list(self.fields if fields is None else fields)
        g_s, g_t = coupling_constants(self.scheme, self.vapor)
        _, dk = phase_mismatch(fields)
        gamma_th = effective_linewidth(self.vapor, _by_label(fields)["A1"])
        return MixingConfig(g_s, g_t, self.length, gamma_th, delta_k=dk,
                            loss_s=self.loss_s, loss_t=self.loss_t,
                            fields=fields, vapor=self.vapor)

    def beta(self, fields: Sequence[DriveField] | None = None) -> np.ndarray:
        fields = self.fields if fields is None else fields
        return linear_response_coefficients(self.scheme, fields, self.vapor,
                                            self.method, self.n_nodes)

    def efficiency(self, fields: Sequence[DriveField] | None = None,
                   propagation: str = "expm") -> ConversionResult:
        fields = self.fields if fields is None else fields
        return coupled_mode_propagate(self.beta(fields), self.mixing_config(fields),
                                      method=propagation)


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _sweep_fields(fields, sweep, detuning):
    if sweep not in ("T", "A1"):
        raise ConfigurationError(f"sweep must be 'T' or 'A1', got {sweep!r}")
    return with_field(fields, sweep, detuning=float(detuning))


def signal_spectrum(setup: ConverterSetup, detunings: Sequence[float], sweep: str = "T",
                    workers: int = 1) -> SpectrumTrace:
    """Linearised eta_QE as a function of the THz (or A1) detuning."""
    grid = np.asarray(detunings, dtype=float)
    if grid.size and np.any(np.diff(grid) <= 0):
        raise ConfigurationError("detuning grid must be strictly increasing")
    aux_off = all(abs(f.rabi) == 0 for f in setup.fields if f.label in ("A1", "A2", "A3", "A4"))

    def point(d):
        if aux_off:
            return 0.0
        fl = _sweep_fields(setup.fields, sweep, d)
        try:
            return setup.efficiency(fl).eta_qe
        except PhysicsError as exc:
            raise type(exc)(f"signal_spectrum at {sweep} detuning {d:.6g} rad/s: {exc}") from exc

    eta = np.array(_map(point, list(grid), workers), dtype=float)
    return SpectrumTrace("detuning", grid, eta, {"sweep": sweep}, ylabel="eta_qe")


def probe_absorption(scheme: LevelScheme, fields: Sequence[DriveField], vapor: VaporSpec,
                     method: str = "exact", n_nodes: int = 64) -> float:
    """Intensity absorption coefficient (1/m) of the A1 probe."""
    fl = _by_label(fields)
    omega1 = fl["A1"].rabi
    if omega1 == 0:
        raise ConfigurationError("transmission needs a nonzero A1 Rabi frequency")
    if vapor.density == 0:
        return 0.0
    t = scheme.transition("A1")
    kappa = t.omega * t.dipole**2 * vapor.density / (epsilon_0 * hbar * SPEED_OF_LIGHT)
    rho = DopplerResolvent(scheme, fields, vapor, method=method, n_nodes=n_nodes).mean_state()
    r21 = rho[PROBE_TRANSITION]
    return float(-2.0 * kappa * (np.conj(omega1) * r21).imag / abs(omega1) ** 2)


def transmission_spectrum(scheme: LevelScheme, fields: Sequence[DriveField], vapor: VaporSpec,
                          detunings: Sequence[float], length: float, method: str = "exact",
                          n_nodes: int = 64, workers: int = 1) -> SpectrumTrace:
    """Probe transmission exp(-alpha(Delta_1) L) across an A1 detuning grid."""
    if not length > 0:
        raise ConfigurationError("medium length must be > 0")
    grid = np.asarray(detunings, dtype=float)

    def point(d):
        fl = _sweep_fields(fields, "A1", d)
        return math.exp(-probe_absorption(scheme, fl, vapor, method, n_nodes) * length)

    tr = np.array(_map(point, list(grid), workers), dtype=float)
    return SpectrumTrace("detuning", grid, tr, {"length": length}, ylabel="transmission")


def thz_intensity_from_rabi(omega_t, dipole: float):
    """I_T = c eps0 hbar^2 |Omega_T|^2 / (2 d_T^2) (W/m^2)."""
    return SPEED_OF_LIGHT * epsilon_0 * hbar**2 * np.abs(omega_t) ** 2 / (2.0 * dipole**2)


@dataclass
class NonlinearPoint:
    omega_t: float
    intensity: float
    eta: float
    omega_s_out: complex
    omega_t_out: complex


def propagate_nonlinear(setup: ConverterSetup, omega_t_in: float, rtol: float = 1e-7,
                        atol_rel: float = 1e-10) -> NonlinearPoint:
    """Integrate the field equations with the full thermally averaged steady state.

    dOmega_S/dz = -i kappa_S rho_61 e^{i dk z}, dOmega_T/dz = -i kappa_T rho_54,
    with the atoms seeing Omega_S e^{-i dk z}.
    """
    if not omega_t_in > 0:
        raise ConfigurationError("input THz Rabi frequency must be > 0")
    cfg = setup.mixing_config()
    g_s, g_t = cfg.g_s, cfg.g_t
    kap_s = 2.0 * g_s**2 / SPEED_OF_LIGHT
    kap_t = 2.0 * g_t**2 / SPEED_OF_LIGHT
    dk = cfg.delta_k
    base = list(setup.fields)
    si, ti = SIGNAL_TRANSITION, THZ_TRANSITION

    def rhs(z, y):
        om_s = complex(y[0], y[1])
        om_t = complex(y[2], y[3])
        ph = np.exp(1j * dk * z)
        fl = [replace(f, rabi=om_s / ph) if f.label == "S"
              else replace(f, rabi=om_t) if f.label == "T" else f for f in base]
        rho = DopplerResolvent(setup.scheme, fl, setup.vapor, method=setup.method,
                               n_nodes=setup.n_nodes).mean_state()
        ds = -1j * kap_s * rho[si] * ph - setup.loss_s * om_s
        dt = -1j * kap_t * rho[ti] - setup.loss_t * om_t
        return [ds.real, ds.imag, dt.real, dt.imag]

    # the signal amplitude can be many decades below the THz one; scale its
    # absolute tolerance by the linearised estimate
    eta_lin = setup.efficiency().eta_qe
    s_scale = max(math.sqrt(eta_lin), 1e-12) * omega_t_in * g_s / g_t
    atol = atol_rel * np.array([s_scale, s_scale, omega_t_in, omega_t_in])
    sol = solve_ivp(rhs, (0.0, setup.length), [0.0, 0.0, omega_t_in, 0.0], method="RK45",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise SolverError(f"nonlinear propagation failed: {sol.message}")
    y = sol.y[:, -1]
    om_s, om_t = complex(y[0], y[1]), complex(y[2], y[3])
    eta = (abs(om_s) ** 2 / g_s**2) / (omega_t_in**2 / g_t**2)
    return NonlinearPoint(omega_t_in, float(thz_intensity_from_rabi(omega_t_in,
                          setup.scheme.transition("T").dipole)), float(eta), om_s, om_t)


def nonlinear_response_curve(setup: ConverterSetup, omega_t: Sequence[float], s_eff: float,
                             workers: int = 1) -> SpectrumTrace:
    """Signal photon rate R_S (1/s) versus input THz intensity (W/m^2).

    R_S = eta(Omega_T) R_T with R_T = I_T S_eff / (h nu_T); Omega_T = 0 gives 0.
    """
    grid = np.asarray(omega_t, dtype=float)
    if grid.size and (np.any(np.diff(grid) <= 0) or grid[0] < 0):
        raise ConfigurationError("Omega_T grid must be increasing and >= 0")
    if not s_eff > 0:
        raise ConfigurationError("effective area must be > 0")
    t = setup.scheme.transition("T")

    def point(om):
        if om == 0:
            return 0.0, 0.0
        p = propagate_nonlinear(setup, om)
        r_t = p.intensity * s_eff / (PLANCK * t.frequency)
        return p.intensity, p.eta * r_t

    pts = _map(point, list(grid), workers)
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    return SpectrumTrace("intensity", x, y, {"s_eff": s_eff}, ylabel="R_S")


@dataclass
class Bandwidth:
    fwhm: float
    shape: str
    peaks: np.ndarray
    dip_ratio: float | None
    left: float
    right: float


def extract_bandwidth(trace: SpectrumTrace, rel_prominence: float = 1e-3) -> Bandwidth:
    """FWHM from the outermost half-maximum crossings plus a shape flag.

    ``single``: one local maximum.  ``split``: two maxima with the dip
    between the two highest at or above half maximum.  ``split-beyond-half``:
    the dip falls below half maximum; the FWHM then spans the outer envelope.
    """
    x, y = trace.x, trace.y
    if x.size < 5:
        raise ConfigurationError("bandwidth extraction needs at least 5 points")
    ymax = float(y.max())
    if not ymax > 0:
        raise NoPeakError("trace has no positive maximum")
    imax = int(np.argmax(y))
    if imax == 0 or imax == y.size - 1:
        raise BoundaryPeakError("maximum lies on the grid boundary")
    half = 0.5 * ymax
    above = np.flatnonzero(y >= half)
    lo, hi = above[0], above[-1]
    if lo == 0 or hi == y.size - 1:
        raise BoundaryPeakError("half-maximum crossing lies outside the grid")
    left = x[lo - 1] + (half - y[lo - 1]) * (x[lo] - x[lo - 1]) / (y[lo] - y[lo - 1])
    right = x[hi] + (y[hi] - half) * (x[hi + 1] - x[hi]) / (y[hi] - y[hi + 1])

    ypad = np.concatenate(([-np.inf], y, [-np.inf]))
    peaks, _ = find_peaks(ypad, prominence=rel_prominence * ymax)
    peaks = peaks - 1
    if peaks.size < 2:
        return Bandwidth(float(right - left), "single", x[peaks], None, float(left), float(right))
    top = np.sort(peaks[np.argsort(y[peaks])[-2:]])
    dip = float(y[top[0]:top[1] + 1].min()) / ymax
    shape = "split" if dip >= 0.5 else "split-beyond-half"
    return Bandwidth(float(right - left), shape, x[peaks], dip, float(left), float(right))
