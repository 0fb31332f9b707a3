"""Space-time integration of the resonant Maxwell-Bloch ring laser.

The field is advected exactly along characteristics: the time step equals
the transit time of one medium cell, so each step shifts the field one
node toward the exit. In scaled time (units 1/gamma1) a cell of length
``L/m`` is crossed in

    dt = (L/m)/c * gamma1 = fill / (m * k)

since ``k = c/(Lambda*gamma1)`` and ``fill = L/Lambda``. The passive part of
the ring is a delay line of ``d = round(m*(1-fill)/fill)`` samples; the
round trip is therefore ``m + d`` steps. To keep the round trip exactly
``1/k`` the medium fraction is taken as ``m/(m+d)`` (reported as
``fill_effective``).

Gain along a characteristic is integrated with the trapezoidal rule
(Euler predictor, one corrector); the polarization and inversion at every
node advance by one classical RK4 step with the node field interpolated
linearly in time. The global order is two.

Arrays carry an optional leading batch axis, so a reference and a
perturbed copy can be stepped together.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .model import ScaledParams
from .steadystate import Branch, SteadyStateSolution, atomic_steady, intensity_quadratic, profile


class SimulationError(FloatingPointError):
    """Non-finite values appeared during integration."""


@dataclass(frozen=True)
class SimConfig:
    m: int = 512
    t_max: float = 50.0
    eps: float = 1e-5
    mode: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if self.m < 16:
            raise ValueError("m must be >= 16")
        if not self.eps >= 0:
            raise ValueError("eps must be >= 0")
        if not self.t_max > 0:
            raise ValueError("t_max must be > 0")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass
class SimState:
    """Field, polarization and inversion on the ``m + 1`` medium nodes.

    ``delay`` holds the last ``d`` exit samples; ``delay[head]`` is the
    oldest one, due to re-enter the medium on the next step.
    """

    F: np.ndarray
    P: np.ndarray
    D: np.ndarray
    delay: np.ndarray
    head: int
    dt: float
    t: float = 0.0
    steps: int = 0

    @property
    def m(self) -> int:
        return self.F.shape[-1] - 1

    @property
    def d(self) -> int:
        return self.delay.shape[0]

    @property
    def fill_effective(self) -> float:
        return self.m / (self.m + self.d)

    @property
    def round_trip_steps(self) -> int:
        return self.m + self.d

    @property
    def exit_field(self) -> np.ndarray:
        return self.F[..., -1]

    def copy(self) -> "SimState":
        return SimState(self.F.copy(), self.P.copy(), self.D.copy(), self.delay.copy(),
                        self.head, self.dt, self.t, self.steps)

    def stacked(self, count: int) -> "SimState":
        """``count`` independent copies along a new leading batch axis."""
        def rep(a):
            return np.repeat(a[None, ...], count, axis=0).copy()
        delay = np.repeat(self.delay[:, None, ...], count, axis=1).copy()
        return SimState(rep(self.F), rep(self.P), rep(self.D), delay, self.head, self.dt,
                        self.t, self.steps)


def delay_length(fill: float, m: int) -> int:
    return int(round(m * (1.0 - fill) / fill))


def time_step(s: ScaledParams, m: int) -> float:
    """Scaled cell transit time for the effective medium fraction."""
    d = delay_length(s.fill, m)
    return (m / (m + d)) / (m * s.k)


def _check_resonant(s: ScaledParams):
    if s.delta_ac_bar != 0:
        raise ValueError("the time-domain integrator covers the resonant case only")


def init_grid(s: ScaledParams, sol: SteadyStateSolution | None, cfg: SimConfig,
              rng: np.random.Generator | None = None) -> SimState:
    """Initial state: the analytic steady profile or a cold start.

    ``sol=None`` selects the cold start: real Gaussian field noise of
    standard deviation ``cfg.eps``, no polarization, full inversion and an
    empty delay line apart from its newest sample, which repeats the exit field.
    """
    _check_resonant(s)
    m = cfg.m
    d = delay_length(s.fill, m)
    dt = time_step(s, m)
    z = np.linspace(0.0, 1.0, m + 1)
    if sol is None or sol.branch is Branch.TRIVIAL:
        rng = np.random.default_rng() if rng is None else rng
        noise = rng.standard_normal(m + 1) * cfg.eps if sol is None else np.zeros(m + 1)
        F = noise.astype(complex)
        P = np.zeros(m + 1, dtype=complex)
        D = np.ones(m + 1)
        delay = np.zeros(d, dtype=complex)
        # the newest delay sample (or, without one, the entrance) mirrors the exit node
        if d:
            delay[-1] = F[-1]
        else:
            F[0] = s.R * F[-1]
        return SimState(F, P, D, delay, 0, dt)
    if sol.Delta != 0:
        raise ValueError("steady initialization requires a resonant solution (Delta = 0)")
    if not s.R < 1:
        raise ValueError("steady initialization requires R < 1")
    b, c = intensity_quadratic(s, sol.Delta)
    I = sol.exit_intensity
    if abs(I * I - b * I + c) > 1e-9 * max(I * I, c) or abs(sol.entry_intensity - s.R**2 * I) > 1e-12 * I:
        raise ValueError("steady solution is inconsistent with the parameters")
    Fr = profile(s, sol, z)
    P, D = atomic_steady(Fr**2)
    delay = np.full(d, Fr[-1], dtype=complex)
    return SimState(Fr.astype(complex), np.asarray(P, dtype=complex), np.asarray(D, float),
                    delay, 0, dt)


def _atom_rhs(P, D, F, g):
    F2 = F * F
    dP = -P - F2 * D
    dD = g * (np.real(P * np.conj(F2)) - D + 1.0)
    return dP, dD


def step(state: SimState, s: ScaledParams) -> SimState:
    """Advance ``state`` in place by one cell transit time and return it."""
    F, P, D = state.F, state.P, state.D
    m, dt, R, G, g = state.m, state.dt, s.R, s.gain, s.gamma_ratio
    h = 1.0 / m
    with np.errstate(over="ignore", invalid="ignore"):
        Fn, Pn, Dn = _advance(state, F, P, D, h, dt, R, G, g)

    if not (np.all(np.isfinite(Fn)) and np.all(np.isfinite(Pn)) and np.all(np.isfinite(Dn))):
        bad = np.argwhere(~(np.isfinite(Fn) & np.isfinite(Pn) & np.isfinite(Dn)))[0]
        raise SimulationError(f"non-finite state at cell {int(bad[-1])}, t={state.t + dt:.6g}")
    if state.d:
        state.delay[state.head] = Fn[..., -1]
        state.head = (state.head + 1) % state.d
    state.F, state.P, state.D = Fn, Pn, Dn
    state.t += dt
    state.steps += 1
    return state


def _advance(state, F, P, D, h, dt, R, G, g):
    gain_old = -G * P[..., :-1] * np.conj(F[..., :-1])
    Fp = np.empty_like(F)
    Fp[..., 1:] = F[..., :-1] + h * gain_old
    if state.d:
        entering = R * state.delay[state.head]
        Fp[..., 0] = entering
    else:
        Fp[..., 0] = R * Fp[..., -1]

    Fh = 0.5 * (F + Fp)
    k1p, k1d = _atom_rhs(P, D, F, g)
    k2p, k2d = _atom_rhs(P + 0.5 * dt * k1p, D + 0.5 * dt * k1d, Fh, g)
    k3p, k3d = _atom_rhs(P + 0.5 * dt * k2p, D + 0.5 * dt * k2d, Fh, g)
    k4p, k4d = _atom_rhs(P + dt * k3p, D + dt * k3d, Fp, g)
    Pn = P + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
    Dn = D + dt / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d)

    Fn = np.empty_like(F)
    Fn[..., 1:] = F[..., :-1] + 0.5 * h * (gain_old - G * Pn[..., 1:] * np.conj(Fp[..., 1:]))
    Fn[..., 0] = entering if state.d else R * Fn[..., -1]
    return Fn, Pn, Dn


@dataclass
class Series:
    t: list = field(default_factory=list)
    exit: list = field(default_factory=list)
    D_mean: list = field(default_factory=list)

    def record(self, state: SimState):
        self.t.append(state.t)
        self.exit.append(np.array(state.exit_field, copy=True))
        self.D_mean.append(np.mean(state.D, axis=-1))

    def arrays(self):
        return np.asarray(self.t), np.asarray(self.exit), np.asarray(self.D_mean)


def run(state: SimState, s: ScaledParams, t_end: float, record_stride: int = 1,
        series: Series | None = None) -> tuple[SimState, Series]:
    """Step until ``state.t >= t_end``, recording the exit field every ``record_stride`` steps."""
    series = Series() if series is None else series
    if not series.t:
        series.record(state)
    n_steps = max(0, int(math.ceil((t_end - state.t) / state.dt - 1e-9)))
    for i in range(1, n_steps + 1):
        step(state, s)
        if i % record_stride == 0:
            series.record(state)
    return state, series


def run_to_steady(state: SimState, s: ScaledParams, tol: float = 1e-8, t_max: float = 200.0,
                  record_stride: int = 1, zero_tol: float = 1e-16):
    """Integrate until the exit intensity changes by less than ``tol`` over a round trip.

    A field whose largest intensity drops below ``zero_tol`` counts as
    converged to the trivial state. Returns ``(state, converged, series)``.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    series = Series()
    series.record(state)
    if t_max <= 0:
        return state, False, series
    rt = state.round_trip_steps
    last = float(np.max(np.abs(state.exit_field) ** 2))
    i = 0
    while state.t < t_max:
        step(state, s)
        i += 1
        if i % record_stride == 0:
            series.record(state)
        if i % rt == 0:
            if float(np.max(np.abs(state.F) ** 2)) < zero_tol:
                return state, True, series
            now = float(np.max(np.abs(state.exit_field) ** 2))
            if abs(now - last) <= tol * max(now, last):
                return state, True, series
            last = now
    return state, False, series


# --- perturbation growth ---------------------------------------------------------

def ring_positions(state: SimState) -> tuple[np.ndarray, np.ndarray]:
    """Ring-position fractions of the medium nodes and of the delay samples.

    The newest delay sample (index ``head - 1``) duplicates the exit node;
    a sample of age ``a`` sits ``a`` cells past the exit.
    """
    m, d = state.m, state.d
    N = m + d
    ages = (state.head - 1 - np.arange(d)) % d if d else np.zeros(0, int)
    return np.arange(m + 1) / N, (m + ages) / N


def ring_samples(state: SimState) -> tuple[np.ndarray, np.ndarray]:
    """Field at the ``m + d`` distinct ring positions (batch axis first) and the positions."""
    x_med, x_del = ring_positions(state)
    if state.d == 0:
        return state.F[..., :-1], x_med[:-1]
    fresh = np.ones(state.d, bool)
    fresh[(state.head - 1) % state.d] = False
    passive = np.moveaxis(state.delay[fresh], 0, -1)
    return np.concatenate([state.F, passive], axis=-1), np.concatenate([x_med, x_del[fresh]])


def perturbation_profile(state: SimState, mode: int) -> tuple[np.ndarray, np.ndarray]:
    """``cos(2*pi*mode*x)`` over ring position ``x`` for medium nodes and delay samples."""
    x_med, x_del = ring_positions(state)
    return np.cos(2 * np.pi * mode * x_med), np.cos(2 * np.pi * mode * x_del)


def _fit(t, y, mode, min_gap):
    """Slope of ln|y| (through its peaks when ``y`` oscillates) and the angular frequency."""
    e = np.abs(y)
    if mode != 0:
        phase = np.unwrap(np.angle(y))
        freq = abs(float(np.polyfit(t, phase, 1)[0]))
        tt, yy = t, np.log(e)
    else:
        peaks, _ = find_peaks(e, distance=max(1, min_gap))
        if len(peaks) >= 4:
            tt, yy = t[peaks], np.log(e[peaks])
            freq = math.pi / float(np.mean(np.diff(tt)))
        else:
            tt, yy, freq = t, np.log(e), 0.0
    coef = np.polyfit(tt, yy, 1)
    resid = yy - np.polyval(coef, tt)
    return float(coef[0]), freq, float(np.sqrt(np.mean(resid**2)))


@dataclass(frozen=True)
class GrowthFit:
    rate: float
    freq: float
    t: np.ndarray
    signal: np.ndarray
    window: tuple[float, float]
    rms_residual: float
    nonlinear: bool
    truncated: bool
    final_state: SimState | None = None


def measure_growth_rate(state: SimState, s: ScaledParams, eps: float = 1e-5, mode: int = 0,
                        t_fit: float = 20.0, fit_start: float | None = None,
                        nonlinear_frac: float = 1e-2, rms_limit: float = 0.05,
                        amplitude: float | None = None, series: Series | None = None,
                        record_stride: int = 1) -> GrowthFit:
    """Growth (or decay) rate of a small field perturbation applied to ``state``.

    The unperturbed state is integrated alongside as the reference, so the
    difference isolates the linear response even when the starting point is
    only a discrete approximation of the steady state. The perturbation is
    ``eps * amplitude * cos(2*pi*mode*x)`` around the ring (field only);
    ``amplitude`` defaults to the reference exit amplitude and must be given
    for the trivial state.

    The signal is the ring projection ``sum(dF * exp(-2i*pi*mode*x)) / N``,
    which follows modes with that spatial winding. After discarding one
    round trip (or ``fit_start``) the rate is the least-squares slope of its
    log modulus, through peaks at least one round trip apart when it
    oscillates; ``freq`` is the angular frequency of the projection. The fit
    stops early (``truncated``) when the exit deviation reaches
    ``nonlinear_frac`` of the amplitude; ``nonlinear`` flags a log-linear
    fit residual above ``rms_limit``.
    """
    amp = float(abs(state.exit_field)) if amplitude is None else float(amplitude)
    if not amp > 0:
        raise ValueError("perturbation needs a nonzero reference amplitude")
    ref_amp = float(abs(state.exit_field))
    if ref_amp > 0 and eps * amp > 1e-4 * ref_amp:
        raise ValueError("perturbation must be <= 1e-4 of the steady amplitude")
    pair = state.stacked(2)
    med, dly = perturbation_profile(state, mode)
    pair.F[1] += eps * amp * med
    if pair.d:
        pair.delay[:, 1] += eps * amp * dly
    rt = pair.round_trip_steps * pair.dt
    t0 = pair.t
    start = t0 + (rt if fit_start is None else fit_start)
    t_end = start + t_fit
    ts, ys = [], []
    truncated = False
    i = 0
    if series is not None:
        series.record(_member(pair, 1))
    while pair.t < t_end:
        step(pair, s)
        i += 1
        if series is not None and i % record_stride == 0:
            series.record(_member(pair, 1))
        if pair.t >= start:
            field_, x = ring_samples(pair)
            ts.append(pair.t - t0)
            ys.append(np.mean((field_[1] - field_[0]) * np.exp(-2j * np.pi * mode * x)))
        if abs(pair.F[1, -1] - pair.F[0, -1]) > nonlinear_frac * amp:
            truncated = True
            break
    t, y = np.asarray(ts), np.asarray(ys)
    if len(t) < 8 or not np.all(np.abs(y) > 0):
        raise SimulationError("too few usable samples in the fit window")
    rate, freq, rms = _fit(t, y, mode, pair.round_trip_steps)
    return GrowthFit(rate, freq, t, y, (float(t[0]), float(t[-1])), rms, rms > rms_limit,
                     truncated, _member(pair, 1))


def _member(batch: SimState, i: int) -> SimState:
    return SimState(batch.F[i].copy(), batch.P[i].copy(), batch.D[i].copy(),
                    batch.delay[:, i].copy(), batch.head, batch.dt, batch.t, batch.steps)


# --- checkpoints -------------------------------------------------------------------

MAGIC = b"TPSTCHK\0"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQ6dddQ")


def save_checkpoint(path: str | Path, state: SimState, s: ScaledParams):
    """Header (magic, version, m, d, scaled params, t, dt, steps, head) then F, P, D, delay.

    All floats little-endian float64; complex arrays as interleaved re/im.
    """
    if state.F.ndim != 1:
        raise ValueError("checkpoints hold a single (unbatched) state")
    header = _HEADER.pack(MAGIC, VERSION, 0, state.m, state.d, s.gamma_ratio, s.k, s.R, s.gain,
                          s.fill, s.delta_ac_bar, state.t, state.dt, state.steps)
    delay = np.roll(state.delay, -state.head)
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (state.F, state.P):
            fh.write(np.asarray(arr, "<c16").tobytes())
        fh.write(np.asarray(state.D, "<f8").tobytes())
        fh.write(np.asarray(delay, "<c16").tobytes())


def load_checkpoint(path: str | Path) -> tuple[SimState, ScaledParams]:
    raw = Path(path).read_bytes()
    magic, version, _, m, d, *vals = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError("not a checkpoint file")
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    g, k, R, gain, fill, dac, t, dt, steps = vals
    off = _HEADER.size
    n = m + 1
    F = np.frombuffer(raw, "<c16", n, off).astype(complex)
    off += 16 * n
    P = np.frombuffer(raw, "<c16", n, off).astype(complex)
    off += 16 * n
    D = np.frombuffer(raw, "<f8", n, off).astype(float)
    off += 8 * n
    delay = np.frombuffer(raw, "<c16", d, off).astype(complex)
    if off + 16 * d != len(raw):
        raise ValueError("checkpoint size mismatch")
    s = ScaledParams(g, k, R, gain, fill, dac)
    return SimState(F, P, D, delay, 0, dt, t, int(steps)), s
