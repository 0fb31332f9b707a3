"""Linear stability of the resonant steady state.

Fluctuations on the n-th cavity mode grow as ``exp(lam * t)`` where ``lam``
(in units of gamma1) is a root of a transcendental characteristic function.
Two forms of that function are available:

``"standard"``
    The standard characteristic equation, scaled to gamma1, with the
    ``(lam + 3)`` factor on the loss term and exponent ``p`` (default 2) on
    ``R`` inside the logarithm.
``"rederived"``
    The result of integrating the linearized field equation across the
    medium with the stationary profile as independent variable and
    imposing the ring feedback condition. It has exponent 4 on ``R`` (the
    entrance intensity is ``R**2 * I_L``), a removable singularity at
    ``lam = -1``, and a zero root for n = 0 exactly at the lasing threshold.
    This is the form the time-domain integrator agrees with. ``I_L = 0``
    denotes the off (trivial) state, whose only root per mode is
    ``-K - i*alpha_n``.
"""
from __future__ import annotations

import cmath
import enum
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.ndimage import minimum_filter

from .model import ScaledParams
from .steadystate import Branch, select_branch

FORMS = ("standard", "rederived")
DEFAULT_EXPONENT = {"standard": 2, "rederived": 4}

POLE_GUARD = 1e-14
POLE_RETRY = 1e-10
BRANCH_MARGIN = 0.1
MARGINAL = 1e-10


class CharEvalError(ArithmeticError):
    """The characteristic function is undefined at the requested point."""


class BranchCutWarning(RuntimeWarning):
    """The logarithm argument is close to the negative real axis."""


class SeedOrigin(enum.Enum):
    ITERATIVE = "Iterative"
    QUADRATIC_LIMIT = "QuadraticLimit"
    GRID_MIN = "GridMin"
    WARM_START = "WarmStart"


class Classification(enum.Enum):
    STABLE = "Stable"
    SINGLE_MODE_UNSTABLE = "SingleModeUnstable"
    MULTIMODE_UNSTABLE = "MultimodeUnstable"


@dataclass(frozen=True)
class CharParams:
    """Inputs of the characteristic function for one cavity mode.

    ``alpha_n`` is the scaled mode offset; it equals ``2*pi*k*n`` for a real
    cavity mode but may be set freely for continuous scans.
    """

    alpha_n: float
    gamma_ratio: float
    k: float
    R: float
    I_L: float
    n: int = 0
    boundary_exponent: int | None = None
    form: str = "standard"

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}, got {self.form!r}")
        if self.boundary_exponent is None:
            object.__setattr__(self, "boundary_exponent", DEFAULT_EXPONENT[self.form])
        if self.boundary_exponent not in (2, 4):
            raise ValueError("boundary_exponent must be 2 or 4")
        if not self.I_L >= 0:
            raise ValueError("I_L must be >= 0")
        if not 0 < self.R <= 1:
            raise ValueError("R must satisfy 0 < R <= 1")
        if not self.k > 0 or not self.gamma_ratio >= 0:
            raise ValueError("need k > 0 and gamma_ratio >= 0")

    @classmethod
    def from_scaled(cls, s: ScaledParams, I_L: float, n: int = 0, *, alpha_n: float | None = None,
                    form: str = "standard", boundary_exponent: int | None = None) -> "CharParams":
        if alpha_n is None:
            alpha_n = 2.0 * math.pi * s.k * n
        return cls(alpha_n=alpha_n, gamma_ratio=s.gamma_ratio, k=s.k, R=s.R, I_L=I_L, n=n,
                   boundary_exponent=boundary_exponent, form=form)

    @property
    def log_loss(self) -> float:
        return abs(math.log(self.R))

    @property
    def K(self) -> float:
        return self.k * self.log_loss

    def mirrored(self) -> "CharParams":
        return replace(self, alpha_n=-self.alpha_n, n=-self.n)


@dataclass(frozen=True)
class Root:
    value: complex
    residual: float
    seed_origin: SeedOrigin
    near_branch_cut: bool = False


@dataclass
class EigenvalueSet:
    n: int
    alpha_n: float
    roots: list[Root] = field(default_factory=list)
    flag: str | None = None
    grid_min: tuple[complex, float] | None = None

    @property
    def max_re(self) -> float:
        return max((r.value.real for r in self.roots), default=math.nan)

    @property
    def dominant(self) -> complex:
        if not self.roots:
            return complex(math.nan, math.nan)
        return max(self.roots, key=lambda r: r.value.real).value

    @property
    def classification(self) -> Classification | None:
        if not self.roots:
            return None
        if self.max_re <= MARGINAL:
            return Classification.STABLE
        if self.n == 0:
            return Classification.SINGLE_MODE_UNSTABLE
        return Classification.MULTIMODE_UNSTABLE

    def conjugated(self) -> "EigenvalueSet":
        roots = [replace(r, value=r.value.conjugate()) for r in self.roots]
        gm = None if self.grid_min is None else (self.grid_min[0].conjugate(), self.grid_min[1])
        return EigenvalueSet(-self.n, -self.alpha_n, roots, self.flag, gm)


# --- characteristic function -------------------------------------------------

def _log_ratio(lam, cp: CharParams):
    """Principal log of the intensity-dependent ratio, plus the ratio itself."""
    g = cp.gamma_ratio
    if cp.I_L == 0 or g == 0:
        return 0.0 * lam, 1.0 + 0.0 * lam
    a = (lam + 1.0) * (lam + g)
    s = g * cp.I_L**2
    ratio = (a + s) / (a + s * cp.R**cp.boundary_exponent)
    return np.log(ratio), ratio


def _evaluate(lam, cp: CharParams):
    log_term, _ = _log_ratio(lam, cp)
    lp1 = lam + 1.0
    if cp.form == "standard":
        return (lam + 1j * cp.alpha_n
                + 0.5 * cp.k * cp.log_loss * (lam + 3.0) / lp1
                + 0.25 * cp.k * (lam + 2.0) / lp1 * log_term)
    if cp.I_L == 0:
        # off state: no linear two-photon gain, the field sees only the cavity loss
        return lam + 1j * cp.alpha_n + cp.K
    return (lam + 1j * cp.alpha_n
            - 2.0 * cp.K / lp1
            + 0.5 * cp.k * (lam + 2.0) / lp1 * log_term)


def _log_active(cp: CharParams) -> bool:
    return bool(cp.I_L and cp.gamma_ratio)


def _check_point(lam: complex, cp: CharParams):
    # -gamma_ratio is only excluded while the log term is present
    if abs(lam + 1.0) < POLE_GUARD or (_log_active(cp) and abs(lam + cp.gamma_ratio) < POLE_GUARD):
        raise CharEvalError(f"lambda={lam} is at a pole of the characteristic function")
    if _log_active(cp):
        a = (lam + 1.0) * (lam + cp.gamma_ratio)
        s = cp.gamma_ratio * cp.I_L**2
        num, den = a + s, a + s * cp.R**cp.boundary_exponent
        scale = abs(a) + s
        if abs(num) < POLE_GUARD * scale or abs(den) < POLE_GUARD * scale:
            raise CharEvalError(f"logarithm argument vanishes at lambda={lam}")


def near_branch_cut(lam: complex, cp: CharParams) -> bool:
    """True when the logarithm argument lies within the branch margin of the cut."""
    _, ratio = _log_ratio(complex(lam), cp)
    return abs(cmath.phase(complex(ratio))) > math.pi - BRANCH_MARGIN


def char_fn(lam, cp: CharParams, *, warn: bool = True):
    """Characteristic function of mode ``cp``; its zeros are the eigenvalues.

    Scalars are checked for poles (``lam = -1``, and ``-gamma_ratio`` while the
    log term is present) and a
    vanishing log argument, raising :class:`CharEvalError`; proximity to
    the principal-log cut emits :class:`BranchCutWarning`. Arrays are
    evaluated without checks, with NaN at singular points.
    """
    if np.ndim(lam) == 0:
        lam = complex(lam)
        _check_point(lam, cp)
        if warn and near_branch_cut(lam, cp):
            warnings.warn(f"log argument near branch cut at lambda={lam}", BranchCutWarning,
                          stacklevel=2)
        return complex(_evaluate(lam, cp))
    lam = np.asarray(lam, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.asarray(_evaluate(lam, cp), dtype=complex)
    out[~np.isfinite(out)] = np.nan
    return out


def char_fn_unscaled(lam: complex, alpha_n: float, gamma1: float, gamma2: float,
                     c_over_Lambda: float, R: float, I_L: float, *,
                     form: str = "standard", boundary_exponent: int | None = None) -> complex:
    """Characteristic function in physical rates (1/s); admits ``gamma1 = 0``."""
    p = DEFAULT_EXPONENT[form] if boundary_exponent is None else boundary_exponent
    lam = complex(lam)
    loss = abs(math.log(R))
    a = (lam + gamma1) * (lam + gamma2)
    s = gamma1 * gamma2 * I_L**2
    log_term = 0.0 if s == 0 else cmath.log((a + s) / (a + s * R**p))
    if form == "standard":
        return (lam + 1j * alpha_n
                + 0.5 * c_over_Lambda * loss * (lam + 3 * gamma1) / (lam + gamma1)
                + 0.25 * c_over_Lambda * (lam + 2 * gamma1) / (lam + gamma1) * log_term)
    if I_L == 0:
        return lam + 1j * alpha_n + c_over_Lambda * loss
    return (lam + 1j * alpha_n
            - 2.0 * c_over_Lambda * loss * gamma1 / (lam + gamma1)
            + 0.5 * c_over_Lambda * (lam + 2 * gamma1) / (lam + gamma1) * log_term)


# --- analytic limits and seeds -----------------------------------------------

def limit_perfect_reflectivity(cp: CharParams) -> complex:
    """Running-wave root ``-i*alpha_n`` of the lossless (R = 1) cavity."""
    if cp.R != 1:
        raise ValueError("perfect-reflectivity limit requires R == 1")
    return complex(0.0, -cp.alpha_n)


def limit_zero_polarization_decay(alpha_n: float, c_over_Lambda: float, R: float) -> complex:
    """Root of the standard form for ``gamma1 -> 0``, in physical units."""
    return complex(-0.5 * c_over_Lambda * abs(math.log(R)), -alpha_n)


def zero_population_decay_quadratic(cp: CharParams) -> np.ndarray:
    """Coefficients of the quadratic left when ``gamma_ratio = 0`` drops the log term."""
    a, K = cp.alpha_n, cp.K
    if cp.form == "standard":
        return np.array([1.0, 1.0 + 1j * a + 0.5 * K, 1j * a + 1.5 * K])
    return np.array([1.0, 1.0 + 1j * a, 1j * a - 2.0 * K])


def zero_population_decay_re(alpha_n, k, R, form: str = "standard"):
    """Closed-form real part of the larger root of the ``gamma_ratio = 0`` quadratic.

    Vectorized over its arguments.
    """
    a = np.asarray(alpha_n, dtype=float)
    K = np.asarray(k, dtype=float) * np.abs(np.log(R))
    if form == "standard":
        h = 0.5 * K
        A = (1.0 + h) ** 2 / 4.0 - a**2 / 4.0 - 3.0 * h
        B = a * (1.0 + h) / 2.0 - a
        shift = -0.5 - 0.5 * h
    else:
        A = (1.0 - a**2 + 8.0 * K) / 4.0
        B = -a / 2.0
        shift = -0.5
    h = np.hypot(A, B)
    with np.errstate(divide="ignore", invalid="ignore"):
        # A + h cancels for A < 0; use B**2 / (h - A) there
        top = np.where(A >= 0, A + h, B * B / (h - A))
    top = np.where(h == 0, 0.0, top)
    out = shift + np.sqrt(top / 2.0)
    return out if out.ndim else float(out)


def limit_zero_population_decay(cp: CharParams) -> tuple[np.ndarray, float]:
    """Both roots (companion-matrix eigenvalues) and the closed-form real part."""
    if cp.gamma_ratio != 0:
        raise ValueError("zero-population-decay limit requires gamma_ratio == 0")
    roots = np.roots(zero_population_decay_quadratic(cp))
    return roots, float(zero_population_decay_re(cp.alpha_n, cp.k, cp.R, cp.form))


@dataclass(frozen=True)
class IterativeSeed:
    value: complex
    residual: float
    hit_pole: bool = False


def seed_iterative(cp: CharParams, iters: int = 1) -> IterativeSeed:
    """Fixed-point iterate ``lam <- lam - G(lam)`` started at ``-i*alpha_n``.

    Not a solver: no convergence is implied. ``residual`` is ``|G|`` at
    the returned iterate.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    lam = complex(0.0, -cp.alpha_n)
    for _ in range(iters):
        try:
            nxt = lam - char_fn(lam, cp, warn=False)
        except CharEvalError:
            return IterativeSeed(lam, math.inf, True)
        if not cmath.isfinite(nxt):
            return IterativeSeed(lam, math.inf, True)
        lam = nxt
    try:
        res = abs(char_fn(lam, cp, warn=False))
    except CharEvalError:
        return IterativeSeed(lam, math.inf, True)
    return IterativeSeed(lam, res)


def heuristic_unstable(cp: CharParams) -> bool:
    """Rough instability predictor from the iterative argument; ties count as stable."""
    lhs = cp.gamma_ratio * cp.I_L**2
    rhs = abs(complex(1.0, -cp.alpha_n)) * abs(complex(cp.gamma_ratio, -cp.alpha_n))
    return lhs > rhs


def essential_max_re(cp: CharParams) -> float:
    """Largest real part of the local atomic relaxation continuum.

    Atoms at a point with intensity ``x`` relax at the roots of
    ``(lam+1)(lam+g) + g*x**2 = 0``; across the medium these fill the
    branch cut of the logarithm and are not zeros of the characteristic
    function. The least damped one sits at the entrance, ``x = R**2 * I_L``.
    """
    g = cp.gamma_ratio
    x0 = cp.R**2 * cp.I_L
    disc = (1.0 - g) ** 2 - 4.0 * g * x0**2
    if disc >= 0:
        return 0.5 * (-(1.0 + g) + math.sqrt(disc))
    return -0.5 * (1.0 + g)


# --- root finding -------------------------------------------------------------

def _newton(cp: CharParams, z: complex, tol: float, max_iter: int):
    """Damped Newton with a centered-difference derivative; returns (z, |G|) or None."""
    try:
        f = char_fn(z, cp, warn=False)
    except CharEvalError:
        return None
    for _ in range(max_iter):
        r = abs(f)
        if r < tol:
            return z, r
        h = 1e-6 * max(1.0, abs(z))
        try:
            d = (char_fn(z + h, cp, warn=False) - char_fn(z - h, cp, warn=False)) / (2 * h)
        except CharEvalError:
            return None
        if d == 0 or not cmath.isfinite(d):
            return None
        step = f / d
        t = 1.0
        for _ in range(30):
            znew = z - t * step
            try:
                fnew = char_fn(znew, cp, warn=False)
            except CharEvalError:
                fnew = None
            if fnew is not None and cmath.isfinite(fnew) and abs(fnew) < r:
                break
            t *= 0.5
        else:
            return None
        z, f = znew, fnew
    return (z, abs(f)) if abs(f) < tol else None


def _near_pole(z: complex, cp: CharParams) -> bool:
    return abs(z + 1.0) < POLE_RETRY or (_log_active(cp) and abs(z + cp.gamma_ratio) < POLE_RETRY)


def default_region(cp: CharParams) -> tuple[float, float, float, float]:
    return (-3.0, 2.0, -cp.alpha_n - 5.0, -cp.alpha_n + 5.0)


def grid_minima(cp: CharParams, region=None, grid=(80, 80)):
    """Local minima of ``|G|`` on a rectangular grid, best first, and the global minimum."""
    re0, re1, im0, im1 = default_region(cp) if region is None else region
    nx, ny = grid
    X, Y = np.meshgrid(np.linspace(re0, re1, nx), np.linspace(im0, im1, ny), indexing="ij")
    Z = X + 1j * Y
    A = np.abs(char_fn(Z, cp))
    A = np.where(np.isfinite(A), A, np.inf)
    imin = np.unravel_index(np.argmin(A), A.shape)
    gmin = (complex(Z[imin]), float(A[imin]))
    is_min = (A == minimum_filter(A, size=3, mode="nearest")) & np.isfinite(A)
    idx = np.argwhere(is_min)
    order = np.argsort(A[is_min])
    return [complex(Z[tuple(idx[i])]) for i in order], gmin


def find_roots(cp: CharParams, region=None, grid=(80, 80), *, tol: float = 1e-12,
               max_iter: int = 100, dedup: float = 1e-8, extra_seeds: Sequence[complex] = (),
               max_grid_seeds: int = 40) -> EigenvalueSet:
    """Locate the zeros of the characteristic function near ``-i*alpha_n``.

    Seeds come from the fixed-point iterate, the ``gamma_ratio = 0``
    quadratic roots, ``extra_seeds`` (warm starts) and local minima of
    ``|G|`` on the grid; each is polished by damped Newton. Completeness is
    not certified.
    """
    seeds: list[tuple[complex, SeedOrigin]] = []
    it = seed_iterative(cp, 3)
    if cmath.isfinite(it.value):
        seeds.append((it.value, SeedOrigin.ITERATIVE))
    for q in np.roots(zero_population_decay_quadratic(cp)):
        seeds.append((complex(q), SeedOrigin.QUADRATIC_LIMIT))
    seeds.extend((complex(z), SeedOrigin.WARM_START) for z in extra_seeds)
    minima, gmin = grid_minima(cp, region, grid)
    seeds.extend((z, SeedOrigin.GRID_MIN) for z in minima[:max_grid_seeds])

    roots: list[Root] = []
    for z0, origin in seeds:
        found = None
        for attempt in range(4):
            start = z0 + attempt * 1e-3 * (1 + 1j)
            found = _newton(cp, start, tol, max_iter)
            if found is None or not _near_pole(found[0], cp):
                break
            found = None
        if found is None:
            continue
        z, res = found
        if any(abs(z - r.value) < dedup for r in roots):
            continue
        roots.append(Root(z, res, origin, near_branch_cut(z, cp)))
    roots.sort(key=lambda r: -r.value.real)
    return EigenvalueSet(cp.n, cp.alpha_n, roots, None if roots else "no_roots", gmin)


def spectrum(s: ScaledParams, I_L: float, n_range: tuple[int, int], *, mirror: bool = True,
             form: str = "standard", boundary_exponent: int | None = None,
             grid=(80, 80)) -> list[EigenvalueSet]:
    """Eigenvalue sets for every cavity mode ``n_min <= n <= n_max``.

    With ``mirror`` the sets for ``n < 0`` are conjugates of ``-n``.
    Per-mode failures become flagged empty sets.
    """
    if s.delta_ac_bar != 0:
        raise ValueError("stability analysis covers the resonant case only (delta_ac_bar = 0)")
    n_min, n_max = n_range
    if n_min > n_max:
        raise ValueError("empty n_range")
    cache: dict[int, EigenvalueSet] = {}

    def solve(n):
        if n not in cache:
            cp = CharParams.from_scaled(s, I_L, n, form=form, boundary_exponent=boundary_exponent)
            try:
                cache[n] = find_roots(cp, grid=grid)
            except Exception as exc:  # flagged, the scan continues
                cache[n] = EigenvalueSet(n, cp.alpha_n, flag=f"error: {exc}")
        return cache[n]

    out = []
    for n in range(n_min, n_max + 1):
        if mirror and n < 0:
            out.append(solve(-n).conjugated())
        else:
            out.append(solve(n))
    return out


def classify_spectrum(sets: Sequence[EigenvalueSet]) -> str:
    """Overall behaviour from the sign pattern of ``max_re`` across modes."""
    single = any(e.n == 0 and e.max_re > MARGINAL for e in sets)
    multi = any(e.n != 0 and e.max_re > MARGINAL for e in sets)
    if single and multi:
        return "SingleAndMultimodeUnstable"
    if single:
        return Classification.SINGLE_MODE_UNSTABLE.value
    if multi:
        return Classification.MULTIMODE_UNSTABLE.value
    return Classification.STABLE.value


# --- parameter scans ----------------------------------------------------------

SCAN_AXES = ("alpha_n", "R", "gain")


@dataclass(frozen=True)
class StabilityMapSample:
    axis1: float
    axis2: float
    max_re: float
    dominant: complex
    n_roots: int
    I_L: float
    flag: str | None = None


def _steady_intensity(s: ScaledParams, branch: Branch | str) -> tuple[float, str | None]:
    if branch in (Branch.TRIVIAL, "Trivial"):
        return 0.0, None
    if s.R >= 1:
        return 0.0, "no_threshold"
    sol = select_branch(s, branch)
    if sol is None:
        return 0.0, "below_threshold"
    return sol.exit_intensity, None


def _scan_line(base: ScaledParams, fixed: dict, alphas: Sequence[float], branch, form,
               boundary_exponent, grid) -> list[tuple[float, EigenvalueSet, float, str | None]]:
    """Sweep ``alphas`` at fixed other parameters, warm-starting each point."""
    s = base.replace(**fixed) if fixed else base
    I_L, flag = _steady_intensity(s, branch)
    out, warm, prev = [], [], None
    for a in alphas:
        cp = CharParams(alpha_n=a, gamma_ratio=s.gamma_ratio, k=s.k, R=s.R, I_L=I_L,
                        boundary_exponent=boundary_exponent, form=form)
        if prev is not None:
            warm = [z - 1j * (a - prev) for z in warm]
        try:
            es = find_roots(cp, grid=grid, extra_seeds=warm)
            f = flag or es.flag
        except Exception as exc:  # flagged, the scan continues
            es, f = EigenvalueSet(0, a), f"error: {exc}"
        warm = [r.value for r in es.roots]
        prev = a
        out.append((a, es, I_L, f))
    return out


def _scan_line_star(args):
    return _scan_line(*args)


def stability_map(base: ScaledParams, axes: Sequence[tuple[str, Sequence[float]]], *,
                  branch: Branch | str = Branch.UPPER, form: str = "standard",
                  boundary_exponent: int | None = None, grid=(80, 80), alpha_n: float = 0.0,
                  jobs: int = 1) -> list[StabilityMapSample]:
    """Largest eigenvalue real part over a one- or two-axis parameter grid.

    ``axes`` pairs names from ``("alpha_n", "R", "gain")`` with grids;
    ``axis1``/``axis2`` of each sample follow that order (``axis2`` is NaN
    for a single axis). An ``alpha_n`` axis is swept innermost with warm
    starts; lines at distinct values of the other axis are independent and
    run in ``jobs`` worker processes. Without an ``alpha_n`` axis the mode
    offset is fixed at ``alpha_n``. ``I_L`` comes from the requested steady
    branch; where that branch does not exist the trivial state is analysed
    and the sample is flagged.
    """
    names = [a for a, _ in axes]
    if not 1 <= len(axes) <= 2 or len(set(names)) != len(names):
        raise ValueError("need one or two distinct axes")
    for name in names:
        if name not in SCAN_AXES:
            raise ValueError(f"unknown scan axis {name!r}; expected one of {SCAN_AXES}")
    grids = {name: [float(v) for v in vals] for name, vals in axes}
    for name, vals in grids.items():
        if not vals or not all(math.isfinite(v) for v in vals):
            raise ValueError(f"axis {name!r} must be a non-empty finite grid")

    alphas = grids.get("alpha_n", [alpha_n])
    others = [n for n in names if n != "alpha_n"]
    fixed_points = [{}]
    for name in others:
        fixed_points = [dict(fp, **{name: v}) for fp in fixed_points for v in grids[name]]

    args = [(base, fp, alphas, branch, form, boundary_exponent, grid) for fp in fixed_points]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            lines = list(pool.map(_scan_line_star, args))
    else:
        lines = [_scan_line(*a) for a in args]

    samples = []
    for fp, line in zip(fixed_points, lines):
        for a, es, I_L, flag in line:
            coords = dict(fp, alpha_n=a)
            axis1 = coords[names[0]]
            axis2 = coords[names[1]] if len(names) == 2 else math.nan
            samples.append(StabilityMapSample(axis1, axis2, es.max_re, es.dominant,
                                              len(es.roots), I_L, flag))
    if len(names) == 2:
        # rows ordered by axis2 then axis1, independent of the sweep order
        pos = {v: i for i, v in enumerate(grids[names[0]])}
        samples.sort(key=lambda smp: (grids[names[1]].index(smp.axis2), pos[smp.axis1]))
    return samples
