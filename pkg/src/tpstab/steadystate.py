"""Stationary lasing states of the two-photon ring laser.

Intensities are ``I = |F|^2`` in the normalized field units of the
Maxwell-Bloch model; positions are fractions ``z/L`` of the medium length.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import ParameterError, ScaledParams, Violation


class Branch(enum.Enum):
    TRIVIAL = "Trivial"
    LOWER = "Lower"
    UPPER = "Upper"

    @classmethod
    def parse(cls, name: str) -> "Branch":
        for b in cls:
            if b.value.lower() == str(name).lower():
                return b
        raise ValueError(f"unknown branch {name!r}; expected one of "
                         f"{', '.join(b.value for b in cls)}")


@dataclass(frozen=True)
class SteadyStateSolution:
    branch: Branch
    exit_intensity: float
    entry_intensity: float
    Delta: float = 0.0
    mode_index: int = 0
    omega_offset: float = 0.0


@dataclass(frozen=True)
class AtomicSteady:
    P: complex
    D: float


def _require_leaky(s: ScaledParams):
    if not s.R < 1:
        raise ParameterError([Violation("R", "R < 1 for a finite threshold", s.R)])


def threshold_gain(s: ScaledParams, Delta: float = 0.0) -> float:
    """Smallest gain ``alpha*L`` with a nontrivial stationary state.

    At threshold the two nontrivial roots merge at ``I = sqrt(1+Delta^2)/R``,
    so the intensity jumps there rather than growing from zero.
    """
    _require_leaky(s)
    return (1.0 - s.R**2) * math.sqrt(1.0 + Delta**2) / s.R


def intensity_quadratic(s: ScaledParams, Delta: float = 0.0) -> tuple[float, float]:
    """Coefficients ``(b, c)`` of ``I**2 - b*I + c = 0`` for the exit intensity."""
    _require_leaky(s)
    return 2.0 * s.gain / (1.0 - s.R**2), (1.0 + Delta**2) / s.R**2


def output_intensities(s: ScaledParams, Delta: float = 0.0, *, j: int = 0) -> list[SteadyStateSolution]:
    """All stationary solutions at detuning parameter ``Delta``.

    The trivial solution is always first; the Lower and Upper branches
    follow when the exit-intensity quadratic has real roots.
    """
    b, c = intensity_quadratic(s, Delta)
    R2 = s.R**2
    omega = 0.5 * (s.delta_ac_bar - Delta)
    out = [SteadyStateSolution(Branch.TRIVIAL, 0.0, 0.0, Delta, j, omega)]
    disc = b * b - 4.0 * c
    if disc < 0:
        return out
    upper = 0.5 * (b + math.sqrt(disc))
    lower = c / upper
    for branch, I in ((Branch.LOWER, lower), (Branch.UPPER, upper)):
        out.append(SteadyStateSolution(branch, I, R2 * I, Delta, j, omega))
    return out


def select_branch(s: ScaledParams, branch: Branch | str, Delta: float = 0.0) -> SteadyStateSolution | None:
    """The requested branch, or None when it does not exist at these parameters."""
    branch = Branch.parse(branch) if isinstance(branch, str) else branch
    for sol in output_intensities(s, Delta):
        if sol.branch is branch:
            return sol
    return None


def atomic_steady(intensity, Delta: float = 0.0):
    """Stationary polarization and inversion for a real field of the given intensity.

    Accepts scalars or arrays; returns an :class:`AtomicSteady` for scalars
    and a ``(P, D)`` tuple of arrays otherwise.
    """
    I = np.asarray(intensity, dtype=float)
    den = 1.0 + Delta**2 + I**2
    D = (1.0 + Delta**2) / den
    P = -I * (1.0 - 1j * Delta) / den
    if I.ndim == 0:
        return AtomicSteady(complex(P), float(D))
    return P, D


def steady_residuals(F, P, D, Delta: float = 0.0, delta_ac_bar: float = 0.0):
    """Residuals of the polarization and inversion equations in the co-rotating frame.

    The stationary field and polarization rotate as ``exp(-i w t)`` and
    ``exp(-2i w t)`` with ``w = (delta_ac_bar - Delta)/2``; returns the
    (complex, real) right-hand-side mismatch, per unit ``gamma1`` and ``gamma2``.
    """
    F, P, D = np.asarray(F), np.asarray(P), np.asarray(D)
    omega = 0.5 * (delta_ac_bar - Delta)
    res_p = -(1.0 + 1j * delta_ac_bar) * P - F**2 * D + 2j * omega * P
    res_d = np.real(P * np.conj(F) ** 2) - D + 1.0
    return res_p, res_d


def profile(s: ScaledParams, sol: SteadyStateSolution, z_frac):
    """Field modulus ``|F|`` at ``z = z_frac * L`` inside the medium.

    Inverts the separated-variables integral of the modulus equation,
    ``gain*z = (F^2 - I0)/2 + ((1+Delta^2)/2) (1/I0 - 1/F^2)``, which is
    a quadratic in ``F^2``. Vectorized over ``z_frac``.
    """
    z = np.asarray(z_frac, dtype=float)
    if np.any((z < 0) | (z > 1)) or not np.all(np.isfinite(z)):
        raise ValueError("z_frac must lie in [0, 1]")
    if sol.branch is Branch.TRIVIAL:
        return np.zeros_like(z) if z.ndim else 0.0
    c = 1.0 + sol.Delta**2
    I0, IL = sol.entry_intensity, sol.exit_intensity
    b = 2.0 * s.gain * z + I0 - c / I0
    root = np.sqrt(b * b + 4.0 * c)
    # positive root of y**2 - b*y - c = 0 without cancellation for b < 0
    y = np.where(b >= 0, 0.5 * (b + root), 2.0 * c / (root - b))
    y = np.where(z == 0, I0, np.where(z == 1, IL, y))
    F = np.sqrt(y)
    return float(F) if F.ndim == 0 else F


def profile_ode_oracle(s: ScaledParams, F0: float, Delta: float = 0.0, steps: int = 10_000) -> float:
    """Exit field modulus from classical RK4 integration of the modulus equation.

    Independent of :func:`profile`; used to check the closed-form steady
    state by shooting from the entrance face.
    """
    if not F0 > 0:
        raise ValueError("F0 must be positive")
    G, c = s.gain, 1.0 + Delta**2
    h = 1.0 / steps

    def rhs(F):
        F2 = F * F
        return G * F * F2 / (c + F2 * F2)

    F = float(F0)
    for i in range(steps):
        k1 = rhs(F)
        k2 = rhs(F + 0.5 * h * k1)
        k3 = rhs(F + 0.5 * h * k2)
        k4 = rhs(F + h * k3)
        F += h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if not math.isfinite(F):
            raise FloatingPointError(f"profile ODE diverged at z/L={(i + 1) * h:.6g}")
    return F
