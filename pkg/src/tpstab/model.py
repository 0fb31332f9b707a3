"""Laser parameters, nondimensionalization and derived cavity quantities.

Every rate is measured in units of the polarization decay rate ``gamma1``;
physical units only appear at the ingestion boundary (:class:`PhysicalParams`).
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, NamedTuple

SPEED_OF_LIGHT = 299_792_458.0

PHYSICAL_KEYS = ("gamma1", "gamma2", "alpha", "L", "Lambda", "R", "delta_ac", "c")
SCALED_KEYS = ("gamma_ratio", "k", "R", "gain", "fill", "delta_ac_bar")
ENV_PREFIX = "TPSTAB_"


class Violation(NamedTuple):
    field: str
    bound: str
    value: float

    def __str__(self):
        return f"{self.field}={self.value!r} violates {self.bound}"


class ParameterError(ValueError):
    """Raised for invalid or inconsistent laser parameters.

    ``violations`` lists every failed bound, ``field`` names the first one.
    """

    def __init__(self, violations, message=None):
        self.violations = list(violations)
        self.field = self.violations[0].field if self.violations else None
        if message is None:
            message = "; ".join(str(v) for v in self.violations)
        super().__init__(message)


def _check(report, name, value, ok, bound):
    if not math.isfinite(value):
        report.append(Violation(name, "finite", value))
    elif not ok:
        report.append(Violation(name, bound, value))


@dataclass(frozen=True)
class PhysicalParams:
    """Laser parameters in SI units (rates in 1/s, lengths in m)."""

    gamma1: float
    gamma2: float
    alpha: float
    L: float
    Lambda: float
    R: float
    delta_ac: float = 0.0
    c: float = SPEED_OF_LIGHT


def validate(p: PhysicalParams) -> list[Violation]:
    """Return every violated invariant of ``p``; empty iff ``p`` is valid."""
    report: list[Violation] = []
    _check(report, "gamma1", p.gamma1, p.gamma1 > 0, "gamma1 > 0")
    _check(report, "gamma2", p.gamma2, p.gamma2 >= 0, "gamma2 >= 0")
    _check(report, "alpha", p.alpha, p.alpha >= 0, "alpha >= 0")
    _check(report, "L", p.L, p.L > 0, "L > 0")
    _check(report, "Lambda", p.Lambda, p.Lambda > 0, "Lambda > 0")
    _check(report, "R", p.R, 0 < p.R <= 1, "0 < R <= 1")
    _check(report, "delta_ac", p.delta_ac, True, "")
    _check(report, "c", p.c, p.c > 0, "c > 0")
    if math.isfinite(p.L) and math.isfinite(p.Lambda) and p.L > p.Lambda > 0:
        report.append(Violation("L", "geometry L <= Lambda", p.L))
    return report


@dataclass(frozen=True)
class ScaledParams:
    """Dimensionless laser parameters.

    Attributes
    ----------
    gamma_ratio : float
        gamma2 / gamma1.
    k : float
        c / (Lambda * gamma1), the inverse round-trip time in units of 1/gamma1.
    R : float
        Amplitude feedback (reflectivity) from exit to entrance face.
    gain : float
        Unsaturated single-pass gain alpha * L.
    fill : float
        Fraction L / Lambda of the ring occupied by the medium.
    delta_ac_bar : float
        Two-photon atom-cavity detuning over gamma1.
    """

    gamma_ratio: float
    k: float
    R: float
    gain: float
    fill: float = 1.0
    delta_ac_bar: float = 0.0

    def __post_init__(self):
        report: list[Violation] = []
        _check(report, "gamma_ratio", self.gamma_ratio, self.gamma_ratio >= 0, "gamma_ratio >= 0")
        _check(report, "k", self.k, self.k > 0, "k > 0")
        _check(report, "R", self.R, 0 < self.R <= 1, "0 < R <= 1")
        _check(report, "gain", self.gain, self.gain >= 0, "gain >= 0")
        _check(report, "fill", self.fill, 0 < self.fill <= 1, "0 < fill <= 1")
        _check(report, "delta_ac_bar", self.delta_ac_bar, True, "")
        if report:
            raise ParameterError(report)

    def replace(self, **changes) -> "ScaledParams":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ScaledParams(**values)

    @property
    def log_loss(self) -> float:
        """|ln R|, the single-pass logarithmic amplitude loss."""
        return abs(math.log(self.R))


@dataclass(frozen=True)
class DerivedCavity:
    K: float
    alpha1: float

    def alpha_n(self, n) -> float:
        return n * self.alpha1


def from_physical(p: PhysicalParams) -> ScaledParams:
    report = validate(p)
    if report:
        raise ParameterError(report)
    return ScaledParams(
        gamma_ratio=p.gamma2 / p.gamma1,
        k=p.c / (p.Lambda * p.gamma1),
        R=p.R,
        gain=p.alpha * p.L,
        fill=p.L / p.Lambda,
        delta_ac_bar=p.delta_ac / p.gamma1,
    )


def derived_cavity(s: ScaledParams) -> DerivedCavity:
    """Scaled cold-cavity field decay rate and intermode spacing."""
    return DerivedCavity(K=s.k * s.log_loss, alpha1=2.0 * math.pi * s.k)


def mode_pulling(s: ScaledParams, j: int = 0) -> tuple[float, float]:
    """Operating-frequency offset of cavity mode ``j`` and its detuning parameter.

    Returns ``(omega_offset, Delta)`` where ``omega_offset`` is the scaled
    offset of the laser line from the reference cavity mode and
    ``Delta = delta_ac_bar - 2 * omega_offset``. The ``2K`` in the
    denominator is the two-photon signature.
    """
    cav = derived_cavity(s)
    omega = (cav.K * s.delta_ac_bar + cav.alpha1 * j) / (1.0 + 2.0 * cav.K)
    return omega, s.delta_ac_bar - 2.0 * omega


# --- parameter files ---------------------------------------------------------

def parse_param_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError([], f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParameterError([], f"line {lineno}: empty key")
        out[key] = value
    return out


def params_from_mapping(values: Mapping[str, str | float]) -> ScaledParams:
    """Build :class:`ScaledParams` from either the physical or the scaled key set."""
    keys = set(values)
    phys = keys & set(PHYSICAL_KEYS) - {"R"}
    scaled = keys & set(SCALED_KEYS) - {"R"}
    unknown = keys - set(PHYSICAL_KEYS) - set(SCALED_KEYS)
    if unknown:
        raise ParameterError([], f"unknown key(s): {', '.join(sorted(unknown))}")
    if phys and scaled:
        raise ParameterError(
            [], f"mixed physical ({', '.join(sorted(phys))}) and scaled "
                f"({', '.join(sorted(scaled))}) keys")

    def num(key):
        try:
            return float(values[key])
        except ValueError:
            raise ParameterError([Violation(key, "a number", values[key])],
                                 f"key {key!r}: not a number: {values[key]!r}") from None

    if phys:
        required, optional = ("gamma1", "gamma2", "alpha", "L", "Lambda", "R"), {"delta_ac": 0.0}
    else:
        required, optional = ("gamma_ratio", "k", "R", "gain"), {"fill": 1.0, "delta_ac_bar": 0.0}
    missing = [k for k in required if k not in values]
    if missing:
        raise ParameterError([], f"missing required key(s): {', '.join(missing)}")
    kwargs = {k: num(k) for k in required}
    kwargs.update({k: num(k) if k in values else v for k, v in optional.items()})
    if phys:
        if "c" in values:
            kwargs["c"] = num("c")
        return from_physical(PhysicalParams(**kwargs))
    return ScaledParams(**kwargs)


def load_params(path: str | os.PathLike, env: Mapping[str, str] | None = None) -> ScaledParams:
    """Read a parameter file, applying ``TPSTAB_<KEY>`` environment overrides.

    Overrides match keys case-insensitively, so ``TPSTAB_LAMBDA`` sets
    ``Lambda``. An override from the other key set is a mixed-set error.
    """
    values: dict[str, str | float] = parse_param_text(Path(path).read_text(encoding="utf-8"))
    env = os.environ if env is None else env
    by_upper = {k.upper(): k for k in PHYSICAL_KEYS + SCALED_KEYS}
    for name, value in env.items():
        if name.startswith(ENV_PREFIX):
            key = by_upper.get(name[len(ENV_PREFIX):])
            if key is not None:
                values[key] = value
    return params_from_mapping(values)
