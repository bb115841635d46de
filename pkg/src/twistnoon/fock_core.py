"""Exact two-mode, N-photon Fock-space algebra for the {+ell, -ell} OAM mode pair.

Conventions
-----------
A two-mode state of N photons is stored as ``amplitudes[n]`` = amplitude of
``|n, N-n>``, where the first occupation counts photons in the ``+ell`` mode
and the second those in the ``-ell`` mode.  For a single photon this means
``amplitudes = [c_minus, c_plus]``.

A :class:`ModeUnitary` acts on creation operators column-wise::

    a1^dag -> u11 a1^dag + u21 a2^dag
    a2^dag -> u12 a1^dag + u22 a2^dag

so column ``j`` of the matrix is the image of mode ``j``, written in
``(+ell, -ell)`` coordinates.  All angles are radians.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

MAX_PHOTONS = 8
UNITARITY_TOL = 1e-9
NORM_TOL = 1e-9

_COMB = np.array([[math.comb(n, k) for k in range(MAX_PHOTONS + 1)]
                  for n in range(MAX_PHOTONS + 1)], dtype=float)
_SQRT_FACT = np.array([math.sqrt(math.factorial(n)) for n in range(MAX_PHOTONS + 1)])


def _check_ell(ell):
    if int(ell) != ell or ell == 0:
        raise DomainError(f"ell must be a non-zero integer, got {ell!r}")


def _check_photons(n_photons, minimum=1):
    if int(n_photons) != n_photons or not minimum <= n_photons <= MAX_PHOTONS:
        raise DomainError(
            f"n_photons must be an integer in [{minimum}, {MAX_PHOTONS}], got {n_photons!r}")


class ModeKind(enum.Enum):
    OAM_PLUS = "oam_plus"
    OAM_MINUS = "oam_minus"
    PETAL_M1 = "petal_m1"
    PETAL_M2 = "petal_m2"


@dataclass(frozen=True)
class ModeLabel:
    """One of the four single-photon structures used by the scheme."""

    kind: ModeKind
    ell: int

    def __post_init__(self):
        _check_ell(self.ell)

    def coordinates(self) -> np.ndarray:
        """Mode vector in (+ell, -ell) coordinates."""
        s = 1 / math.sqrt(2)
        return {
            ModeKind.OAM_PLUS: np.array([1.0, 0.0], dtype=complex),
            ModeKind.OAM_MINUS: np.array([0.0, 1.0], dtype=complex),
            ModeKind.PETAL_M1: np.array([s, s], dtype=complex),
            ModeKind.PETAL_M2: np.array([s, -s], dtype=complex),
        }[self.kind]

    def single_photon(self) -> "TwoModeFockState":
        c_plus, c_minus = self.coordinates()
        return TwoModeFockState(1, np.array([c_minus, c_plus]), self.ell)


@dataclass(frozen=True, eq=False)
class TwoModeFockState:
    n_photons: int
    amplitudes: np.ndarray
    ell: int

    def __post_init__(self):
        _check_photons(self.n_photons, minimum=0)
        _check_ell(self.ell)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (self.n_photons + 1,):
            raise DomainError(
                f"expected {self.n_photons + 1} amplitudes for N={self.n_photons}, got {amps.size}")
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"state is not normalized (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, n_plus: int, n_minus: int, ell: int) -> "TwoModeFockState":
        """The Fock basis state ``|n_plus, n_minus>``."""
        amps = np.zeros(n_plus + n_minus + 1, dtype=complex)
        amps[n_plus] = 1.0
        return cls(n_plus + n_minus, amps, ell)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def inner(self, other: "TwoModeFockState") -> complex:
        """``<self|other>``."""
        _check_compatible(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def to_json(self) -> dict:
        return {
            "n_photons": int(self.n_photons),
            "ell": int(self.ell),
            "re": [float(v) for v in self.amplitudes.real],
            "im": [float(v) for v in self.amplitudes.imag],
        }

    @classmethod
    def from_json(cls, data: dict) -> "TwoModeFockState":
        amps = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
        return cls(int(data["n_photons"]), amps, int(data["ell"]))


def _check_compatible(a: TwoModeFockState, b: TwoModeFockState):
    if a.n_photons != b.n_photons:
        raise DomainError(f"photon numbers differ ({a.n_photons} vs {b.n_photons})")
    if abs(a.ell) != abs(b.ell):
        raise DomainError(f"states live in different mode pairs (ell={a.ell} vs ell={b.ell})")


@dataclass(frozen=True, eq=False)
class ModeUnitary:
    entries: np.ndarray = field(repr=True)

    def __post_init__(self):
        u = np.array(self.entries, dtype=complex)
        if u.shape != (2, 2):
            raise DomainError(f"mode unitary must be 2x2, got shape {u.shape}")
        err = unitarity_error(u)
        if err > UNITARITY_TOL:
            raise DomainError(f"matrix is not unitary (||U^dag U - I|| = {err:.3e})")
        u.setflags(write=False)
        object.__setattr__(self, "entries", u)

    def __matmul__(self, other: "ModeUnitary") -> "ModeUnitary":
        return ModeUnitary(self.entries @ other.entries)

    def dagger(self) -> "ModeUnitary":
        return ModeUnitary(self.entries.conj().T)


def unitarity_error(u) -> float:
    u = np.asarray(u, dtype=complex)
    return float(np.linalg.norm(u.conj().T @ u - np.eye(2)))


def rotation_entries(ell, phi):
    """Stack of rotation matrices diag(e^{i ell phi}, e^{-i ell phi}); ``phi`` may be an array."""
    phi = np.asarray(phi, dtype=float)
    out = np.zeros(phi.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(1j * ell * phi)
    out[..., 1, 1] = np.exp(-1j * ell * phi)
    return out


def rotation_unitary(ell: int, phi: float) -> ModeUnitary:
    """Mode transformation induced by rotating the field by ``phi`` radians."""
    _check_ell(ell)
    return ModeUnitary(rotation_entries(ell, float(phi)))


def hadamard_mub() -> ModeUnitary:
    """Maps +ell -> petal M1 and -ell -> petal M2."""
    s = 1 / math.sqrt(2)
    return ModeUnitary(np.array([[s, s], [s, -s]], dtype=complex))


def basis_unitary(first, second) -> ModeUnitary:
    """Unitary whose columns are the two (orthonormal) mode vectors ``first`` and ``second``."""
    return ModeUnitary(np.column_stack([np.asarray(first, complex), np.asarray(second, complex)]))


def lift_matrix(entries, n_photons: int) -> np.ndarray:
    """Matrix of a 2x2 mode unitary on the (N+1)-dimensional N-photon space.

    ``entries`` may carry leading batch dimensions, ``(..., 2, 2)``; the result
    then has shape ``(..., N+1, N+1)``.  Column ``n`` holds the image of
    ``|n, N-n>``, obtained by expanding the binomials of the transformed
    creation operators.
    """
    _check_photons(n_photons, minimum=0)
    u = np.asarray(entries, dtype=complex)
    u11, u21 = u[..., 0, 0], u[..., 1, 0]
    u12, u22 = u[..., 0, 1], u[..., 1, 1]
    n_tot = n_photons
    out = np.zeros(u.shape[:-2] + (n_tot + 1, n_tot + 1), dtype=complex)
    for n in range(n_tot + 1):
        m = n_tot - n
        col_norm = _SQRT_FACT[n] * _SQRT_FACT[m]
        for j in range(n + 1):
            first = _COMB[n, j] * u11 ** j * u21 ** (n - j)
            for k in range(m + 1):
                second = _COMB[m, k] * u12 ** k * u22 ** (m - k)
                p = j + k
                out[..., p, n] += first * second * (_SQRT_FACT[p] * _SQRT_FACT[n_tot - p] / col_norm)
    return out


def lift_and_apply(u: ModeUnitary, state: TwoModeFockState) -> TwoModeFockState:
    if not isinstance(u, ModeUnitary):
        u = ModeUnitary(u)
    amps = lift_matrix(u.entries, state.n_photons) @ state.amplitudes
    return TwoModeFockState(state.n_photons, amps, state.ell)


def make_noon(n_photons: int, ell: int, phi: float) -> TwoModeFockState:
    """Rotated N00N state (|N,0> - e^{-2iN ell phi}|0,N>)/sqrt(2)."""
    _check_photons(n_photons)
    _check_ell(ell)
    amps = np.zeros(n_photons + 1, dtype=complex)
    amps[n_photons] = 1 / math.sqrt(2)
    amps[0] = -np.exp(-2j * n_photons * ell * phi) / math.sqrt(2)
    return TwoModeFockState(n_photons, amps, ell)


def projection_probability(state: TwoModeFockState, target: TwoModeFockState) -> float:
    """|<target|state>|^2."""
    _check_compatible(state, target)
    p = abs(np.vdot(target.amplitudes, state.amplitudes)) ** 2
    return float(min(max(p, 0.0), 1.0))


def projection_state(n_photons: int, ell: int) -> TwoModeFockState:
    """(|N,0> + |0,N>)/sqrt(2), the state each copy is projected onto."""
    _check_photons(n_photons)
    amps = np.zeros(n_photons + 1, dtype=complex)
    amps[0] = amps[n_photons] = 1 / math.sqrt(2)
    return TwoModeFockState(n_photons, amps, ell)


@dataclass(frozen=True)
class AnalyticPrediction:
    """Closed-form detection statistics for M independent rotated N00N copies."""

    m_repetitions: int
    n_photons: int
    ell: int

    def expectation(self, phi):
        return 0.5 * self.m_repetitions * (1 - np.cos(2 * self.n_photons * self.ell * np.asarray(phi)))

    def variance(self, phi):
        s2 = np.sin(self.n_photons * self.ell * np.asarray(phi)) ** 2
        return self.m_repetitions * s2 * (1 - s2)

    def slope(self, phi):
        """d expectation / d phi."""
        nl = self.n_photons * self.ell
        return self.m_repetitions * nl * np.sin(2 * nl * np.asarray(phi))

    @property
    def delta_phi(self) -> float:
        return 1.0 / (2 * math.sqrt(self.m_repetitions) * self.n_photons * abs(self.ell))


def analytic_prediction(m: int, n_photons: int, ell: int) -> AnalyticPrediction:
    if int(m) != m or m < 1:
        raise DomainError(f"M must be a positive integer, got {m!r}")
    _check_photons(n_photons)
    _check_ell(ell)
    return AnalyticPrediction(int(m), int(n_photons), int(ell))
