"""Six-wave-mixing conversion: matching conditions, coupling constants, the
closed-form weak-excitation efficiency and linear two-mode propagation.

Propagation uses photon-flux amplitudes a_X = Omega_X / g_X, so |a|^2 is
proportional to photon flux with the same factor for both modes and the
conversion efficiency is |a_S(L)|^2 / |a_T(0)|^2.  The mode equations are

    d a/dz = i K a,    K = -(2/c) diag(g) beta diag(g) + i diag(loss)

with the phase mismatch entering the S <-> T cross terms as exp(+-i dk z).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.constants import c as SPEED_OF_LIGHT, epsilon_0, hbar
from scipy.integrate import solve_ivp

from .doppler import VaporSpec
from .errors import ConfigurationError, NonPassiveMediumError, SolverError
from .levels import DriveField, LevelScheme, signal_frequency  # noqa: F401  (re-export)

PASSIVE_TOL = 1e-6


def phase_mismatch(fields: Sequence[DriveField]) -> tuple[np.ndarray, float]:
    """Wavevector mismatch dk = k_T + k_1 + k_2 + k_3 - k_4 - k_S (rad/m).

    Components are accumulated from frequencies with ``math.fsum`` so that
    vacuum collinear closure is exact to rounding of the inputs.
    """
    by = {f.label: f for f in fields}
    missing = {"A1", "A2", "A3", "T", "A4", "S"} - set(by)
    if missing:
        raise ConfigurationError(f"phase_mismatch needs all six fields; missing {sorted(missing)}")
    signs = {"T": 1, "A1": 1, "A2": 1, "A3": 1, "A4": -1, "S": -1}
    scale = 2.0 * math.pi / SPEED_OF_LIGHT
    dk = np.array([
        scale * math.fsum(s * by[lab].frequency * by[lab].direction[i] for lab, s in signs.items())
        for i in range(3)
    ])
    return dk, float(np.linalg.norm(dk))


def coupling_constant(omega: float, dipole: float, density: float) -> float:
    """g with g^2 = omega d^2 N / (2 eps0 hbar) (1/s)."""
    return math.sqrt(omega * dipole**2 * density / (2.0 * epsilon_0 * hbar))


def coupling_constants(scheme: LevelScheme, vapor: VaporSpec) -> tuple[float, float]:
    """(g_S, g_T) of the signal and THz transitions."""
    s = scheme.transition("S")
    t = scheme.transition("T")
    return (coupling_constant(s.omega, s.dipole, vapor.density),
            coupling_constant(t.omega, t.dipole, vapor.density))


def alpha_bar(g_s: float, big_g_s: float, big_g_t: float, gamma_th: float) -> float:
    """Build-up rate of the mixing process (1/m)."""
    if big_g_s == 0:
        raise ZeroDivisionError("alpha_bar undefined for G_S = 0 (no signal-side coupling)")
    if gamma_th <= 0:
        raise ConfigurationError("Doppler linewidth must be > 0")
    return 2.0 * g_s**2 * (big_g_s**2 + big_g_t**2) / (SPEED_OF_LIGHT * gamma_th * big_g_s**2)


@dataclass
class MixingConfig:
    """Parameters of the two-mode conversion problem.

    G_S and G_T default to g_S |Omega_2||Omega_3| and g_T |Omega_1||Omega_4|
    when ``fields`` is given.  ``loss_s`` and ``loss_t`` are extra amplitude
    attenuation rates (1/m) not captured by the atomic response.
    """

    g_s: float
    g_t: float
    length: float
    gamma_th: float
    big_g_s: float | None = None
    big_g_t: float | None = None
    delta_k: float = 0.0
    loss_s: float = 0.0
    loss_t: float = 0.0
    fields: list[DriveField] | None = None
    vapor: VaporSpec | None = None

    def __post_init__(self):
        if self.fields is not None:
            by = {f.label: f for f in self.fields}
            gs = self.g_s * abs(by["A2"].rabi) * abs(by["A3"].rabi)
            gt = self.g_t * abs(by["A1"].rabi) * abs(by["A4"].rabi)
            if self.big_g_s is None:
                self.big_g_s = gs
            if self.big_g_t is None:
                self.big_g_t = gt
            for name, val, ref in (("G_S", self.big_g_s, gs), ("G_T", self.big_g_t, gt)):
                if abs(val - ref) > 1e-12 * max(abs(ref), 1e-300):
                    raise ConfigurationError(f"{name} inconsistent with its field definition")
        if self.big_g_s is None or self.big_g_t is None:
            raise ConfigurationError("G_S and G_T are required when fields are not given")
        if not self.length > 0:
            raise ConfigurationError("medium length must be > 0")
        if not self.gamma_th > 0:
            raise ConfigurationError("Doppler linewidth must be > 0")
        if self.big_g_s < 0 or self.big_g_t < 0:
            raise ConfigurationError("effective couplings must be >= 0")
        if self.g_s < 0 or self.g_t < 0 or self.loss_s < 0 or self.loss_t < 0:
            raise ConfigurationError("coupling constants and losses must be >= 0")

    @property
    def alpha_bar(self) -> float:
        return alpha_bar(self.g_s, self.big_g_s, self.big_g_t, self.gamma_th)


def eta_qe_analytic(cfg: MixingConfig) -> float:
    """Closed-form weak-excitation quantum efficiency (at most 1/4)."""
    gs2, gt2 = cfg.big_g_s**2, cfg.big_g_t**2
    if gs2 == 0 or gt2 == 0:
        return 0.0
    ab = cfg.alpha_bar
    return gs2 * gt2 * math.expm1(-ab * cfg.length) ** 2 / (gs2 + gt2) ** 2


def analytic_beta(cfg: MixingConfig) -> np.ndarray:
    """Response matrix whose propagation reproduces ``eta_qe_analytic``.

    The medium absorbs the bright combination (G_S a_S + G_T a_T) at the
    amplitude rate alpha_bar and leaves the orthogonal dark combination
    untouched.
    """
    gs, gt = cfg.big_g_s, cfg.big_g_t
    norm = gs**2 + gt**2
    if norm == 0:
        return np.zeros((2, 2), dtype=complex)
    rate = cfg.alpha_bar if gs > 0 else 0.0
    k = 1j * rate / norm * np.array([[gs * gs, gs * gt], [gs * gt, gt * gt]], dtype=complex)
    g = np.array([cfg.g_s, cfg.g_t])
    if np.any(g == 0):
        raise ConfigurationError("analytic_beta needs nonzero g_S and g_T")
    return -(SPEED_OF_LIGHT / 2.0) * k / np.outer(g, g)


def coupling_matrix(beta: np.ndarray, cfg: MixingConfig) -> np.ndarray:
    """K of d a/dz = i K a in the frame co-rotating with the mismatch."""
    beta = np.asarray(beta, dtype=complex)
    if beta.shape != (2, 2):
        raise ConfigurationError("beta must be 2x2")
    g = np.array([cfg.g_s, cfg.g_t])
    k = -(2.0 / SPEED_OF_LIGHT) * np.outer(g, g) * beta
    k = k + 1j * np.diag([cfg.loss_s, cfg.loss_t])
    return k


@dataclass
class ConversionResult:
    eta_qe: float
    a_s: complex
    a_t: complex
    a_t_in: float
    z: np.ndarray | None = None
    profile: np.ndarray | None = field(default=None, repr=False)

    @property
    def flux_out(self) -> float:
        return abs(self.a_s) ** 2 + abs(self.a_t) ** 2


def coupled_mode_propagate(beta: np.ndarray, cfg: MixingConfig, a_t_in: float = 1.0,
                           method: str = "expm", n_profile: int = 0,
                           rtol: float = 1e-9, atol: float = 1e-12) -> ConversionResult:
    """Propagate (a_S, a_T) through the medium with a_S(0) = 0.

    ``method="expm"`` uses the constant-coefficient solution in the frame
    co-rotating with the mismatch; ``method="ode"`` integrates the
    lab-frame equations with z-dependent cross terms (adaptive RK, DOP853).
    A profile on ``n_profile`` points is returned when requested.
    """
    if not a_t_in > 0:
        raise ConfigurationError("input THz amplitude must be > 0")
    k = coupling_matrix(beta, cfg)
    length = cfg.length
    dk = cfg.delta_k
    a0 = np.array([0.0, a_t_in], dtype=complex)
    z = np.linspace(0.0, length, n_profile) if n_profile else None
    profile = None
    if method == "expm":
        kr = k - np.diag([dk, 0.0])
        out = scipy.linalg.expm(1j * kr * length) @ a0
        out[0] *= np.exp(1j * dk * length)
        if z is not None:
            profile = np.array([scipy.linalg.expm(1j * kr * zi) @ a0 for zi in z])
            profile[:, 0] *= np.exp(1j * dk * z)
    elif method == "ode":
        def rhs(zz, a):
            ph = np.exp(1j * dk * zz)
            return 1j * np.array([
                k[0, 0] * a[0] + k[0, 1] * ph * a[1],
                k[1, 0] / ph * a[0] + k[1, 1] * a[1],
            ])
        sol = solve_ivp(rhs, (0.0, length), a0, method="DOP853", rtol=rtol,
                        atol=atol * a_t_in, t_eval=z, dense_output=False)
        if not sol.success:
            raise SolverError(f"coupled-mode integration failed: {sol.message}")
        out = sol.y[:, -1] if z is None else None
        if z is not None:
            profile = sol.y.T
            out = profile[-1]
    else:
        raise ConfigurationError(f"unknown propagation method {method!r}")
    flux_in = a_t_in**2
    flux_out = abs(out[0]) ** 2 + abs(out[1]) ** 2
    if flux_out > flux_in * (1.0 + PASSIVE_TOL):
        raise NonPassiveMediumError(
            f"output photon flux exceeds input by {flux_out / flux_in - 1:.3g} (net gain)")
    eta = min(abs(out[0]) ** 2 / flux_in, 1.0)
    return ConversionResult(eta, complex(out[0]), complex(out[1]), a_t_in, z, profile)
