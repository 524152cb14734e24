"""Six-level loop atom: rotating-frame Hamiltonian, Lindblad generator and
steady states.

Levels are indexed 0..5 for |1>..|6>.  The loop is traversed in the order
A1, A2, A3, T, A4, S starting from the ground state::

    |1> --A1--> |2> --A2--> |3> --A3--> |4> --T--> |5>
     ^                                              |
     +------------- S ---------- |6> <---- A4 ------+

A1, A2, A3 and T are absorbed (loop sign +1); A4 and S are emitted (-1).

Conventions
-----------
* Frequencies are angular (rad/s) everywhere except ``DriveField.frequency``
  and ``Transition.frequency`` which are in Hz.
* H[upper, lower] = Omega / 2 for every transition, H[lower, upper] its
  conjugate.
* Detuning is Delta = omega_laser - omega_atom.  The diagonal is
  H[j, j] = -delta_j where delta_j is the cumulative signed detuning
  along the loop from the ground state.  An atom moving with axial
  velocity v sees each detuning shifted to Delta - k_z v.
* Density matrices are vectorised row-major, vec(rho)[i*n + j] = rho[i, j],
  so vec(A rho B) = kron(A, B.T) vec(rho).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.constants import c as SPEED_OF_LIGHT

from .errors import ConfigurationError, DegenerateSteadyStateError, SolverError

N_LEVELS = 6
FIELD_LABELS = ("A1", "A2", "A3", "T", "A4", "S")
LOOP_SIGNS = {"A1": +1, "A2": +1, "A3": +1, "T": +1, "A4": -1, "S": -1}
TWO_PI = 2.0 * math.pi

# level indices of the two propagating modes
SIGNAL_TRANSITION = (5, 0)   # rho_61
THZ_TRANSITION = (4, 3)      # rho_54
PROBE_TRANSITION = (1, 0)    # rho_21


@dataclass(frozen=True)
class Transition:
    """One leg of the loop; ``frequency`` in Hz, ``dipole`` in C m."""

    label: str
    lower: int
    upper: int
    sign: int
    frequency: float
    dipole: float

    @property
    def omega(self) -> float:
        return TWO_PI * self.frequency


@dataclass(eq=False)
class LevelScheme:
    """Level structure, loop transitions and relaxation rates.

    ``decays`` holds (from, to, rate) population-decay channels and
    ``dephasing`` the symmetric matrix of extra coherence decay rates
    gamma_ij (rad/s); rho_ij decays at gamma_ij on top of the Lindblad
    contribution of the population decays.
    """

    labels: tuple[str, ...]
    roles: tuple[str, ...]
    transitions: tuple[Transition, ...]
    decays: tuple[tuple[int, int, float], ...]
    dephasing: np.ndarray

    def __post_init__(self):
        self.dephasing = np.asarray(self.dephasing, dtype=float)
        self.validate()

    def validate(self, freq_tol_hz: float = 1.0) -> None:
        n = N_LEVELS
        if len(self.labels) != n or len(self.roles) != n:
            raise ConfigurationError("a loop scheme needs exactly 6 levels")
        bad = set(self.roles) - {"ground", "intermediate", "rydberg"}
        if bad:
            raise ConfigurationError(f"unknown level roles {sorted(bad)}")
        if len(self.transitions) != n:
            raise ConfigurationError("a loop scheme needs exactly 6 transitions")
        seen = [t.label for t in self.transitions]
        if len(set(seen)) != len(seen):
            raise ConfigurationError(f"duplicate transition labels {seen}")
        # walk the loop from the ground state
        visited = [0]
        here = 0
        for t in self.transitions:
            if t.sign not in (+1, -1):
                raise ConfigurationError(f"{t.label}: loop sign must be +1 or -1")
            if not (0 <= t.lower < n and 0 <= t.upper < n) or t.lower == t.upper:
                raise ConfigurationError(f"{t.label}: bad level indices")
            start, end = (t.lower, t.upper) if t.sign > 0 else (t.upper, t.lower)
            if start != here:
                raise ConfigurationError(
                    f"{t.label}: loop broken, expected to leave level {here}")
            here = end
            visited.append(here)
            if t.dipole <= 0 or not math.isfinite(t.dipole):
                raise ConfigurationError(f"{t.label}: dipole moment must be > 0")
            if t.frequency <= 0:
                raise ConfigurationError(f"{t.label}: transition frequency must be > 0")
        if here != 0 or sorted(visited[:-1]) != list(range(n)):
            raise ConfigurationError("transitions must visit every level once and close on the ground state")
        closure = math.fsum(t.sign * t.frequency for t in self.transitions)
        if abs(closure) > freq_tol_hz:
            raise ConfigurationError(
                f"loop energy not conserved: signed frequency sum {closure:.6g} Hz")
        for i, j, rate in self.decays:
            if rate < 0 or not math.isfinite(rate):
                raise ConfigurationError(f"decay {i}->{j}: negative rate {rate}")
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ConfigurationError(f"decay {i}->{j}: bad level indices")
        g = self.dephasing
        if g.shape != (n, n):
            raise ConfigurationError("dephasing must be a 6x6 matrix")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ConfigurationError("dephasing rates must be finite and >= 0")
        if not np.allclose(g, g.T) or np.any(np.diag(g) != 0):
            raise ConfigurationError("dephasing must be symmetric with zero diagonal")

    def transition(self, label: str) -> Transition:
        for t in self.transitions:
            if t.label == label:
                return t
        raise ConfigurationError(f"no transition labelled {label!r}")

    @cached_property
    def dissipator(self) -> np.ndarray:
        """36x36 superoperator of all relaxation terms."""
        return _dissipator(self.decays, self.dephasing)


def rb87_scheme(
    frequencies: dict[str, float] | None = None,
    dipoles: dict[str, float] | None = None,
    gamma_intermediate: float = TWO_PI * 6e6,
    gamma_rydberg: float = TWO_PI * 10e3,
    gamma_collision: float = TWO_PI * 1e6,
) -> LevelScheme:
    """Six-level 87Rb loop with order-of-magnitude default rates.

    ``frequencies`` maps A1, A2, A3, T, A4 to transition frequencies in Hz;
    the signal transition frequency is derived from energy conservation.
    Rydberg levels |3>, |5> decay to the neighbouring intermediate levels and
    |4> to |2>; every coherence involving a Rydberg level gets the
    collisional dephasing rate.
    """
    nu = dict(DEFAULT_FREQUENCIES)
    nu.update(frequencies or {})
    d = dict(DEFAULT_DIPOLES)
    d.update(dipoles or {})
    nu_s = signal_frequency(nu["T"], nu["A1"], nu["A2"], nu["A3"], nu["A4"])
    legs = [
        Transition("A1", 0, 1, +1, nu["A1"], d["A1"]),
        Transition("A2", 1, 2, +1, nu["A2"], d["A2"]),
        Transition("A3", 2, 3, +1, nu["A3"], d["A3"]),
        Transition("T", 3, 4, +1, nu["T"], d["T"]),
        Transition("A4", 5, 4, -1, nu["A4"], d["A4"]),
        Transition("S", 0, 5, -1, nu_s, d["S"]),
    ]
    roles = ("ground", "intermediate", "rydberg", "rydberg", "rydberg", "intermediate")
    decays = (
        (1, 0, gamma_intermediate),
        (5, 0, gamma_intermediate),
        (2, 1, gamma_rydberg),
        (3, 1, gamma_rydberg),
        (4, 5, gamma_rydberg),
    )
    deph = np.zeros((N_LEVELS, N_LEVELS))
    ryd = [i for i, r in enumerate(roles) if r == "rydberg"]
    for i in range(N_LEVELS):
        for j in range(N_LEVELS):
            if i != j and (i in ryd or j in ryd):
                deph[i, j] = gamma_collision
    return LevelScheme(
        labels=("5S1/2", "5P1/2", "nRyd1", "nRyd2", "nRyd3", "5P3/2"),
        roles=roles,
        transitions=tuple(legs),
        decays=decays,
        dephasing=deph,
    )


# 795 nm, 476 nm, 62.3 GHz, 0.107 THz; A4 fixed so the signal lands on D2
_D1 = 377.107463380e12
_D2 = 384.230484468e12
_NU2 = SPEED_OF_LIGHT / 476.0e-9
DEFAULT_FREQUENCIES = {
    "A1": _D1,
    "A2": _NU2,
    "A3": 62.3e9,
    "T": 0.107e12,
    "A4": _D1 + _NU2 + 62.3e9 + 0.107e12 - _D2,
}
DEFAULT_DIPOLES = {
    "A1": 2.5e-29,
    "A2": 1.0e-31,
    "A3": 8.0e-27,
    "T": 8.5e-27,
    "A4": 1.0e-31,
    "S": 2.5e-29,
}


def signal_frequency(nu_t: float, nu_1: float, nu_2: float, nu_3: float, nu_4: float) -> float:
    """Frequency of the generated signal from energy conservation (Hz)."""
    for name, val in (("nu_T", nu_t), ("nu_1", nu_1), ("nu_2", nu_2),
                      ("nu_3", nu_3), ("nu_4", nu_4)):
        if not math.isfinite(val) or val < 0:
            raise ConfigurationError(f"{name} must be a finite non-negative frequency")
    nu_s = math.fsum((nu_t, nu_1, nu_2, nu_3, -nu_4))
    if nu_s <= 0:
        raise ConfigurationError(
            f"loop configuration gives non-positive signal frequency {nu_s:.6g} Hz")
    return nu_s


@dataclass
class DriveField:
    """A classical field driving one loop transition.

    ``rabi`` and ``detuning`` are angular (rad/s), ``frequency`` in Hz.
    """

    label: str
    rabi: complex
    detuning: float
    frequency: float
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    sign: int | None = None

    def __post_init__(self):
        if self.label not in FIELD_LABELS:
            raise ConfigurationError(f"unknown field label {self.label!r}")
        if self.sign is None:
            self.sign = LOOP_SIGNS[self.label]
        self.rabi = complex(self.rabi)
        if not (math.isfinite(self.rabi.real) and math.isfinite(self.rabi.imag)):
            raise ConfigurationError(f"{self.label}: Rabi frequency must be finite")
        if not math.isfinite(self.detuning):
            raise ConfigurationError(f"{self.label}: detuning must be finite")
        if self.frequency <= 0:
            raise ConfigurationError(f"{self.label}: frequency must be > 0")
        d = np.asarray(self.direction, dtype=float)
        norm = np.linalg.norm(d)
        if norm == 0 or not np.isfinite(norm):
            raise ConfigurationError(f"{self.label}: direction must be a nonzero vector")
        self.direction = d / norm

    @property
    def k(self) -> float:
        """Vacuum wavevector magnitude (rad/m)."""
        return TWO_PI * self.frequency / SPEED_OF_LIGHT

    @property
    def wavevector(self) -> np.ndarray:
        return self.k * self.direction

    @property
    def k_axial(self) -> float:
        """Collinear projection used for Doppler shifts: +-|k| along z."""
        return math.copysign(self.k, self.direction[2]) if self.direction[2] != 0 else 0.0


def default_fields(scheme: LevelScheme, rabi: dict[str, complex] | None = None,
                   detuning: dict[str, float] | None = None) -> list[DriveField]:
    """Co-propagating fields on every transition with the loop closed."""
    rabi = rabi or {}
    detuning = detuning or {}
    fields = [
        DriveField(t.label, rabi.get(t.label, 0.0), detuning.get(t.label, 0.0), t.frequency)
        for t in scheme.transitions
    ]
    return close_loop(fields)


def close_loop(fields: Sequence[DriveField]) -> list[DriveField]:
    """Set the S detuning so the signed detuning sum vanishes."""
    fields = list(fields)
    by = _by_label(fields)
    if "S" not in by:
        raise ConfigurationError("field S missing")
    total = math.fsum(f.sign * f.detuning for f in fields if f.label != "S")
    s = by["S"]
    new_s = replace(s, detuning=-total * s.sign)
    return [new_s if f.label == "S" else f for f in fields]


def with_field(fields: Sequence[DriveField], label: str, **changes) -> list[DriveField]:
    """Copy of ``fields`` with one field modified and the loop re-closed."""
    out = [replace(f, **changes) if f.label == label else f for f in fields]
    return close_loop(out)


def _by_label(fields: Sequence[DriveField]) -> dict[str, DriveField]:
    by: dict[str, DriveField] = {}
    for f in fields:
        if f.label in by:
            raise ConfigurationError(f"field {f.label} assigned twice")
        by[f.label] = f
    return by


def _assign(scheme: LevelScheme, fields: Sequence[DriveField]) -> list[tuple[Transition, DriveField]]:
    by = _by_label(fields)
    pairs = []
    for t in scheme.transitions:
        if t.label not in by:
            raise ConfigurationError(f"transition {t.label} has no assigned field")
        f = by.pop(t.label)
        if f.sign != t.sign:
            raise ConfigurationError(f"field {f.label} loop sign disagrees with its transition")
        pairs.append((t, f))
    if by:
        raise ConfigurationError(f"fields without a transition: {sorted(by)}")
    return pairs


def hamiltonian_parts(scheme: LevelScheme, fields: Sequence[DriveField]) -> tuple[np.ndarray, np.ndarray]:
    """Split H(v) = H0 + v * diag(slope).

    Returns the velocity-independent 6x6 Hamiltonian and the per-level
    Doppler slope of the diagonal (rad/s per m/s).
    """
    pairs = _assign(scheme, fields)
    n = N_LEVELS
    h = np.zeros((n, n), dtype=complex)
    delta = np.zeros(n)
    slope = np.zeros(n)
    here = 0
    terms = []
    for t, f in pairs:
        end = t.upper if t.sign > 0 else t.lower
        step = t.sign * f.detuning
        dstep = -t.sign * f.k_axial
        terms.append((step, dstep))
        if end == 0:
            # last leg closes on the ground state
            res = delta[here] + step
            dres = slope[here] + dstep
            scale = sum(abs(a) for a, _ in terms)
            dscale = sum(abs(b) for _, b in terms)
            if abs(res) > TWO_PI * 1.0 + 1e-9 * scale:
                raise ConfigurationError(
                    f"detunings do not close the loop (residual {res:.6g} rad/s); "
                    "use close_loop() to set the signal detuning")
            if abs(dres) > 1e-9 * dscale + 1e-9:
                raise ConfigurationError(
                    f"wavevectors do not close the loop along z (residual {dres:.6g} rad/m)")
        else:
            delta[end] = delta[here] + step
            slope[end] = slope[here] + dstep
        h[t.upper, t.lower] = f.rabi / 2.0
        h[t.lower, t.upper] = np.conj(f.rabi) / 2.0
        here = end
    h[np.diag_indices(n)] = -delta
    return h, -slope


def build_hamiltonian(scheme: LevelScheme, fields: Sequence[DriveField], v: float = 0.0) -> np.ndarray:
    """Rotating-frame Hamiltonian (rad/s) for an atom with axial velocity ``v``."""
    h0, slope = hamiltonian_parts(scheme, fields)
    return h0 + np.diag(v * slope)


def commutator_superop(h: np.ndarray) -> np.ndarray:
    """Superoperator of rho -> -i [h, rho]."""
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def _dissipator(decays, dephasing) -> np.ndarray:
    n = N_LEVELS
    eye = np.eye(n)
    out = np.zeros((n * n, n * n), dtype=complex)
    for i, j, rate in decays:
        if rate < 0:
            raise ConfigurationError(f"decay {i}->{j}: negative rate")
        if rate == 0:
            continue
        jump = np.zeros((n, n))
        jump[j, i] = math.sqrt(rate)
        jj = jump.T @ jump
        out += np.kron(jump, jump) - 0.5 * np.kron(jj, eye) - 0.5 * np.kron(eye, jj.T)
    g = np.asarray(dephasing, dtype=float)
    if np.any(g < 0):
        raise ConfigurationError("negative dephasing rate")
    out[np.diag_indices(n * n)] -= g.reshape(-1)
    return out


def build_liouvillian(h: np.ndarray, scheme: LevelScheme) -> np.ndarray:
    """36x36 generator with d vec(rho)/dt = L vec(rho)."""
    if not np.allclose(h, h.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(h).max())):
        raise ConfigurationError("Hamiltonian is not Hermitian")
    return commutator_superop(h) + scheme.dissipator


def trace_row(n: int = N_LEVELS) -> np.ndarray:
    """Row-vectorised identity: trace(rho) = trace_row @ vec(rho)."""
    return np.eye(n).reshape(-1)


@dataclass
class DensityMatrix:
    rho: np.ndarray
    velocity: float = 0.0
    params: dict = field(default_factory=dict)

    def check(self, herm_tol: float = 1e-10, trace_tol: float = 1e-10, eig_tol: float = 1e-8) -> None:
        """Raise SolverError unless the state is a valid density matrix."""
        r = self.rho
        herm = np.abs(r - r.conj().T).max()
        tr = abs(np.trace(r) - 1.0)
        lam = np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min()
        if herm > herm_tol or tr > trace_tol or lam < -eig_tol:
            raise SolverError(
                f"invalid density matrix: hermiticity {herm:.3g}, trace error {tr:.3g}, "
                f"min eigenvalue {lam:.3g}")

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho))


def steady_state(liouvillian: np.ndarray, velocity: float = 0.0, params: dict | None = None,
                 check: bool = True) -> DensityMatrix:
    """Unique trace-one kernel element of ``liouvillian``.

    The equation for rho_11 is replaced by the trace condition and the
    resulting square system solved directly.
    """
    lv = np.asarray(liouvillian)
    nn = lv.shape[0]
    n = math.isqrt(nn)
    sv = scipy.linalg.svdvals(lv)
    if sv[0] == 0 or (sv[-2] < 1e6 * sv[-1] and sv[-2] <= 1e-6 * sv[0]):
        raise DegenerateSteadyStateError(
            f"steady state not unique: smallest singular values {sv[-1]:.3g}, {sv[-2]:.3g}")
    a = lv.copy()
    a[0, :] = trace_row(n)
    b = np.zeros(nn, dtype=complex)
    b[0] = 1.0
    try:
        x = scipy.linalg.solve(a, b)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SolverError(f"steady-state solve failed: {exc}") from exc
    rho = x.reshape(n, n)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    resid = np.abs(lv @ rho.reshape(-1)).max()
    if resid > 1e-10 * np.abs(lv).sum(axis=1).max():
        raise SolverError(f"steady-state residual {resid:.3g} too large")
    out = DensityMatrix(rho, velocity, dict(params or {}))
    if check:
        out.check()
    return out


def solve_steady_state(scheme: LevelScheme, fields: Sequence[DriveField], v: float = 0.0) -> DensityMatrix:
    """Convenience wrapper: Hamiltonian -> Liouvillian -> steady state."""
    h = build_hamiltonian(scheme, fields, v)
    return steady_state(build_liouvillian(h, scheme), velocity=v)


def coherence(rho: DensityMatrix | np.ndarray, i: int, j: int) -> complex:
    """Matrix element rho[i, j] (0-based level indices)."""
    r = rho.rho if isinstance(rho, DensityMatrix) else np.asarray(rho)
    n = r.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"level index out of range: ({i}, {j})")
    return complex(r[i, j])
