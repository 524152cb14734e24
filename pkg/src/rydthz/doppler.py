"""Thermal-velocity averaging for a warm vapour.

Two routes are provided:

* ``velocity_grid`` / ``doppler_average`` -- a weighted sum over quadrature
  nodes for an arbitrary velocity-dependent observable.
* ``DopplerResolvent`` -- exact averaging of steady states.  The
  row-replaced Liouvillian is affine in v with a diagonal Doppler part,
  A(v) = A0 + v diag(d), so the steady state is rational in v.  Expanding
  it in the finite eigenvalues of the pencil (A0, -diag(d)) turns the
  Maxwell-Boltzmann average into a sum of plasma-dispersion functions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.constants import k as K_B
from scipy.special import roots_hermite, wofz

from .errors import ConfigurationError, DegenerateSteadyStateError, PropagationError, SolverError
from .levels import (
    DriveField,
    LevelScheme,
    N_LEVELS,
    build_liouvillian,
    commutator_superop,
    hamiltonian_parts,
    trace_row,
)

log = logging.getLogger(__name__)

RB87_MASS = 1.443160648e-25  # kg
TRAPEZOID_HALF_WIDTH = 8.0   # nodes span +-8 u


@dataclass(frozen=True)
class VaporSpec:
    """Temperature (K), atomic mass (kg) and number density (m^-3)."""

    temperature: float
    mass: float = RB87_MASS
    density: float = 1e18

    def __post_init__(self):
        for name in ("temperature", "mass"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ConfigurationError(f"vapor {name} must be > 0, got {val}")
        if not (math.isfinite(self.density) and self.density >= 0):
            raise ConfigurationError(f"vapor density must be >= 0, got {self.density}")

    @property
    def u(self) -> float:
        """Most probable speed sqrt(2 k_B T / m) (m/s)."""
        return math.sqrt(2.0 * K_B * self.temperature / self.mass)


def velocity_grid(spec: VaporSpec, n_nodes: int = 64,
                  method: str = "gauss-hermite") -> tuple[np.ndarray, np.ndarray]:
    """Nodes (m/s) and normalised weights for the axial velocity distribution.

    ``gauss-hermite`` is exact for polynomial observables; ``trapezoid`` is a
    uniform grid over +-8 u with Gaussian weights, which converges
    geometrically for observables with narrow resonances once the spacing
    is below the resonance width.
    """
    n = int(n_nodes)
    if n < 1:
        raise ConfigurationError("n_nodes must be >= 1")
    if method == "gauss-hermite":
        x, w = roots_hermite(n)
        x = 0.5 * (x - x[::-1])
        w = 0.5 * (w + w[::-1])
    elif method == "trapezoid":
        if n == 1:
            x, w = np.zeros(1), np.ones(1)
        else:
            x = np.linspace(-TRAPEZOID_HALF_WIDTH, TRAPEZOID_HALF_WIDTH, n)
            x = 0.5 * (x - x[::-1])
            w = np.exp(-x * x)
            w[0] *= 0.5
            w[-1] *= 0.5
    else:
        raise ConfigurationError(f"unknown quadrature method {method!r}")
    w = w / math.fsum(w)
    return spec.u * x, w


def doppler_average(f: Callable[[float], object], spec: VaporSpec, n_nodes: int = 64,
                    method: str = "gauss-hermite"):
    """Maxwell-Boltzmann average of ``f(v)``; scalar or array valued."""
    v, w = velocity_grid(spec, n_nodes, method)
    vals = []
    for i, vi in enumerate(v):
        val = np.asarray(f(float(vi)))
        if not np.all(np.isfinite(val)):
            raise PropagationError(f"non-finite value at velocity node {i} (v = {vi:.6g} m/s)")
        vals.append(val)
    out = np.tensordot(w, np.stack(vals), axes=1)
    return out.item() if out.ndim == 0 else out


def effective_linewidth(spec: VaporSpec, field: DriveField) -> float:
    """Doppler linewidth k u of ``field`` (rad/s)."""
    return field.k * spec.u


def plasma_dispersion(zeta) -> np.ndarray:
    """Z(zeta) = pi^-1/2 int exp(-t^2) / (t - zeta) dt, off the real axis."""
    z = np.asarray(zeta, dtype=complex)
    up = z.imag >= 0
    out = np.empty_like(z)
    out[up] = 1j * math.sqrt(math.pi) * wofz(z[up])
    out[~up] = np.conj(1j * math.sqrt(math.pi) * wofz(np.conj(z[~up])))
    return out


def _mean_inverse(lam: np.ndarray, u: float) -> np.ndarray:
    """<1/(v - lam)> over the axial Maxwell-Boltzmann distribution."""
    return plasma_dispersion(lam / u) / u


def _mean_inverse_pair(lam: np.ndarray, u: float) -> np.ndarray:
    """Matrix of <1/((v - lam_p)(v - lam_q))>, divided differences of the above."""
    phi = _mean_inverse(lam, u)
    dl = lam[:, None] - lam[None, :]
    num = phi[:, None] - phi[None, :]
    close = np.abs(dl) <= 1e-7 * (np.abs(lam[:, None]) + np.abs(lam[None, :]) + u)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(close, 0.0, num / np.where(close, 1.0, dl))
    if np.any(close):
        mid = 0.5 * (lam[:, None] + lam[None, :])
        zeta = mid[close] / u
        dphi = -2.0 * (1.0 + zeta * plasma_dispersion(zeta)) / u**2
        out[close] = dphi
    return out


def _replaced(lv: np.ndarray) -> np.ndarray:
    a = lv.copy()
    a[0, :] = trace_row(int(math.isqrt(lv.shape[0])))
    return a


class DopplerResolvent:
    """Velocity-resolved and thermally averaged steady states of one drive setting.

    Parameters
    ----------
    scheme, fields : the atom and its drives (velocity-independent part).
    vapor : velocity distribution.
    method : ``exact`` (pole expansion, default), ``trapezoid`` or
        ``gauss-hermite`` (quadrature over ``n_nodes``).  ``exact`` falls back
        to a ``fallback_nodes`` trapezoid grid if the pencil is too ill
        conditioned to reproduce direct solves at probe velocities.
    """

    def __init__(self, scheme: LevelScheme, fields: Sequence[DriveField], vapor: VaporSpec,
                 method: str = "exact", n_nodes: int = 64, fallback_nodes: int = 40001,
                 check_tol: float = 1e-6):
        h0, slope = hamiltonian_parts(scheme, fields)
        self.scheme = scheme
        self.vapor = vapor
        self.u = vapor.u
        self.a0 = _replaced(build_liouvillian(h0, scheme))
        self.d = np.diag(commutator_superop(np.diag(slope))).copy()
        self.d[0] = 0.0
        self.b = np.zeros(self.a0.shape[0], dtype=complex)
        self.b[0] = 1.0
        self.method = method
        self.n_nodes = n_nodes
        self.check_tol = check_tol
        if method == "exact":
            if not self._setup_poles():
                log.warning("pole expansion ill conditioned; using %d-node trapezoid grid",
                            fallback_nodes)
                self.method = "trapezoid"
                self.n_nodes = fallback_nodes
        elif method not in ("trapezoid", "gauss-hermite"):
            raise ConfigurationError(f"unknown Doppler method {method!r}")
        if self.method != "exact":
            self._setup_grid()

    # -- direct solves -------------------------------------------------------
    def solve_at(self, v: float, rhs: np.ndarray | None = None) -> np.ndarray:
        """Direct dense solve of A(v) x = rhs (rhs defaults to the trace vector)."""
        a = self.a0 + np.diag(v * self.d)
        try:
            return scipy.linalg.solve(a, self.b if rhs is None else rhs)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"steady-state solve failed at v = {v:.6g} m/s: {exc}") from exc

    def response_at(self, v: float, pert: np.ndarray) -> np.ndarray:
        x0 = self.solve_at(v)
        return self.solve_at(v, -(pert @ x0))

    # -- pole expansion ------------------------------------------------------
    def _setup_poles(self) -> bool:
        a0, d = self.a0, self.d
        try:
            (alpha, beta), vr = scipy.linalg.eig(a0, -np.diag(d), homogeneous_eigvals=True)
        except (scipy.linalg.LinAlgError, ValueError):
            return False
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = alpha / beta
        finite = np.isfinite(lam) & (np.abs(lam) < 1e10 * (1.0 + self.u))
        g = np.empty_like(vr)
        g[:, finite] = d[:, None] * vr[:, finite]
        g[:, ~finite] = a0 @ vr[:, ~finite]
        try:
            lu = scipy.linalg.lu_factor(g, check_finite=True)
        except (scipy.linalg.LinAlgError, ValueError):
            return False
        self._finite = finite
        self._lam = np.where(finite, lam, 0.0)
        self._vr = vr
        self._lu = lu
        self._c = scipy.linalg.lu_solve(lu, self.b)
        phi = np.ones(len(lam), dtype=complex)
        phi[finite] = _mean_inverse(self._lam[finite], self.u)
        self._phi = phi
        # verify against direct solves at a few velocities
        for v in (0.0, 0.7 * self.u, -0.7 * self.u, 2.1 * self.u, -2.9 * self.u):
            ref = self.solve_at(v)
            got = self._vr @ (self._e(v) * self._c)
            if not np.all(np.isfinite(got)):
                return False
            if np.abs(got - ref).max() > self.check_tol * max(1.0, np.abs(ref).max()):
                return False
        return True

    def _e(self, v: float) -> np.ndarray:
        e = np.ones(len(self._lam), dtype=complex)
        f = self._finite
        e[f] = 1.0 / (v - self._lam[f])
        return e

    # -- quadrature grid -----------------------------------------------------
    def _setup_grid(self) -> None:
        self._v, self._w = velocity_grid(self.vapor, self.n_nodes, self.method)
        s, t, q, z = scipy.linalg.qz(self.a0, np.diag(self.d), output="complex")
        self._qz = (s, t, q, z)

    def _batch_solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A(v) x = rhs for every grid velocity; rhs is (n,) or (n, nv)."""
        s, t, q, z = self._qz
        vs = self._v
        y = q.conj().T @ rhs
        if y.ndim == 1:
            y = np.repeat(y[:, None], len(vs), axis=1)
        n = s.shape[0]
        w = np.empty((n, len(vs)), dtype=complex)
        for i in range(n - 1, -1, -1):
            acc = y[i] - (s[i, i + 1:] @ w[i + 1:] + vs * (t[i, i + 1:] @ w[i + 1:]))
            w[i] = acc / (s[i, i] + vs * t[i, i])
        x = z @ w
        if not np.all(np.isfinite(x)):
            bad = int(np.nonzero(~np.all(np.isfinite(x), axis=0))[0][0])
            raise PropagationError(f"non-finite steady state at velocity node {bad} "
                                   f"(v = {vs[bad]:.6g} m/s)")
        return x

    # -- public averages -----------------------------------------------------
    def mean_state(self) -> np.ndarray:
        """Thermally averaged steady state as a 6x6 matrix."""
        if self.method == "exact":
            x = self._vr @ (self._phi * self._c)
        else:
            x = self._batch_solve(self.b) @ self._w
        return x.reshape(N_LEVELS, N_LEVELS)

    def mean_response(self, pert: np.ndarray) -> np.ndarray:
        """Average first-order change of the state for a perturbation superoperator.

        ``pert`` is the derivative of the Liouvillian with respect to a probe
        amplitude.  Its trace row is ignored, so the response is traceless.
        """
        p = np.array(pert, dtype=complex)
        p[0, :] = 0.0
        if self.method == "exact":
            h = scipy.linalg.lu_solve(self._lu, p @ self._vr)
            f = self._finite
            phi2 = np.ones(h.shape, dtype=complex)
            lam = self._lam[f]
            pair = _mean_inverse_pair(lam, self.u)
            idx = np.nonzero(f)[0]
            phi2[np.ix_(idx, idx)] = pair
            phi2[np.ix_(idx, ~f)] = self._phi[f][:, None]
            phi2[np.ix_(~f, idx)] = self._phi[f][None, :]
            x = -self._vr @ ((phi2 * h) @ self._c)
        else:
            x0 = self._batch_solve(self.b)
            x = self._batch_solve(-(p @ x0)) @ self._w
        return x.reshape(N_LEVELS, N_LEVELS)

    def state_at(self, v: float) -> np.ndarray:
        return self.solve_at(v).reshape(N_LEVELS, N_LEVELS)


def thermal_state(scheme: LevelScheme, fields: Sequence[DriveField], vapor: VaporSpec,
                  method: str = "exact", n_nodes: int = 64) -> np.ndarray:
    """Doppler-averaged steady-state density matrix."""
    return DopplerResolvent(scheme, fields, vapor, method, n_nodes).mean_state()
