"""Command-line front end: ``tpstab steady|spectrum|scan|simulate``.

Exit codes: 0 success, 1 configuration/validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .model import ParameterError, ScaledParams, load_params, mode_pulling
from .stability import (CharEvalError, CharParams, FORMS, classify_spectrum, find_roots,
                        spectrum, stability_map)
from .steadystate import Branch, atomic_steady, output_intensities, profile, select_branch
from .timedomain import (SimConfig, SimulationError, init_grid, measure_growth_rate, run,
                         run_to_steady, save_checkpoint, Series)

SCHEMA_VERSION = 1

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

ALPHA_GRID = np.round(np.linspace(0.0, 30.0, 121), 10)
PRESETS = {
    "fig1": dict(params=dict(gamma_ratio=0.0, k=3.55, R=0.8, gain=1.0),
                 axes=[("alpha_n", ALPHA_GRID), ("R", np.round(np.arange(0.10, 0.951, 0.05), 10))]),
    "fig2": dict(params=dict(gamma_ratio=0.1, k=3.55, R=0.8, gain=1.0),
                 axes=[("alpha_n", ALPHA_GRID), ("gain", [1.0, 3.0, 5.0])]),
    "fig3": dict(params=dict(gamma_ratio=0.1, k=0.07, R=0.8, gain=5.0),
                 axes=[("alpha_n", ALPHA_GRID), ("R", [0.3, 0.6, 0.95])]),
}


class CliError(Exception):
    def __init__(self, message, code=EXIT_VALIDATION):
        super().__init__(message)
        self.code = code


# --- output ----------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def render(columns, rows, fmt, manifest):
    if fmt == "json":
        doc = {"schema_version": SCHEMA_VERSION, "command": manifest["command"],
               "columns": list(columns),
               "rows": [{c: _jsonable(v) for c, v in zip(columns, row)} for row in rows]}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def emit(args, columns, rows, manifest):
    text = render(columns, rows, args.format, manifest)
    if args.out:
        out = Path(args.out)
        out.write_text(text, encoding="utf-8")
        manifest.setdefault("outputs", []).insert(0, str(out))
        Path(str(out) + ".manifest.json").write_text(
            json.dumps(manifest, indent=1, default=_jsonable) + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text)


def make_manifest(command, s: ScaledParams | None, **extra):
    return {"command": command, "tool_version": __version__, "schema_version": SCHEMA_VERSION,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "params": None if s is None else asdict(s), **extra}


def info(msg):
    print(msg, file=sys.stderr)


# --- argument helpers --------------------------------------------------------------

def parse_grid(spec: str):
    """``start:stop:num`` (inclusive linspace) or a comma list."""
    try:
        if ":" in spec:
            a, b, n = spec.split(":")
            return list(np.round(np.linspace(float(a), float(b), int(n)), 12))
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"bad grid {spec!r}; use start:stop:num or v1,v2,...") from None


def parse_axes(spec: str):
    axes = []
    for part in spec.split(";"):
        if "=" not in part:
            raise CliError(f"bad axis {part!r}; use name=grid")
        name, grid = part.split("=", 1)
        axes.append((name.strip(), parse_grid(grid.strip())))
    return axes


def parse_n_range(spec: str):
    try:
        a, b = spec.replace(",", ":").split(":")
        return int(a), int(b)
    except ValueError:
        raise CliError(f"bad --n-range {spec!r}; use NMIN:NMAX") from None


def parse_perturb(spec: str):
    out = {"n": 0, "eps": 1e-5}
    for part in spec.split(","):
        if not part.strip():
            continue
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in out:
            raise CliError(f"bad --perturb key {key!r}; use n=..,eps=..")
        try:
            out[key] = int(value) if key == "n" else float(value)
        except ValueError:
            raise CliError(f"bad --perturb value {part!r}") from None
    return out


def require_config(args) -> ScaledParams:
    if not args.config:
        raise CliError("--config is required")
    try:
        return load_params(args.config)
    except FileNotFoundError:
        raise CliError(f"config file not found: {args.config}") from None


def exit_intensity(s: ScaledParams, branch: str, override: float | None):
    """``(I_L, note)`` for the analysed state."""
    if override is not None:
        return override, "intensity override"
    if Branch.parse(branch) is Branch.TRIVIAL:
        return 0.0, None
    if s.R >= 1:
        return 0.0, "R = 1: no finite threshold, analysing I_L = 0"
    sol = select_branch(s, branch)
    if sol is None:
        return 0.0, f"{branch} branch absent below threshold, analysing the trivial state"
    return sol.exit_intensity, None


# --- commands ------------------------------------------------------------------------

def cmd_steady(args):
    s = require_config(args)
    if not s.R < 1:
        raise CliError("steady states need R < 1 (key 'R')")
    _, Delta = mode_pulling(s, args.mode)
    sols = output_intensities(s, Delta, j=args.mode)
    z = np.linspace(0.0, 1.0, args.samples)
    columns = ["branch", "G", "R", "Delta", "I_L", "I_0", "z_frac", "F", "P_re", "P_im", "D"]
    rows = []
    for sol in sols:
        head = [sol.branch.value, s.gain, s.R, sol.Delta, sol.exit_intensity, sol.entry_intensity]
        if sol.branch is Branch.TRIVIAL:
            rows.append(head + [None] * 5)
            continue
        F = profile(s, sol, z)
        P, D = atomic_steady(F**2, sol.Delta)
        for zi, Fi, Pi, Di in zip(z, F, P, D):
            rows.append(head + [zi, Fi, Pi.real, Pi.imag, Di])
    manifest = make_manifest("steady", s, mode_index=args.mode, Delta=Delta,
                             branches=[sol.branch.value for sol in sols])
    emit(args, columns, rows, manifest)
    return EXIT_OK


def cmd_spectrum(args):
    s = require_config(args)
    if s.delta_ac_bar != 0:
        raise CliError("spectrum covers the resonant case only (key 'delta_ac_bar' must be 0)")
    I_L, note = exit_intensity(s, args.branch, args.intensity)
    if note:
        info(f"note: {note}")
    sets = spectrum(s, I_L, parse_n_range(args.n_range), form=args.form,
                    boundary_exponent=args.boundary_exponent)
    columns = ["n", "alpha_n_bar", "root_index", "re", "im", "residual", "seed_origin"]
    rows = []
    for es in sets:
        if not es.roots:
            rows.append([es.n, es.alpha_n, None, None, None, None, es.flag or "no_roots"])
        for i, r in enumerate(es.roots):
            rows.append([es.n, es.alpha_n, i, r.value.real, r.value.imag, r.residual,
                         r.seed_origin.value])
    overall = classify_spectrum(sets)
    info(f"classification: {overall}; max_re by n: "
         + ", ".join(f"{es.n}:{es.max_re:.4g}" for es in sets))
    manifest = make_manifest("spectrum", s, branch=args.branch, I_L=I_L, note=note,
                             n_range=list(parse_n_range(args.n_range)), form=args.form,
                             boundary_exponent=args.boundary_exponent,
                             classification=overall)
    emit(args, columns, rows, manifest)
    return EXIT_OK


def cmd_scan(args):
    if args.preset:
        if args.preset not in PRESETS:
            raise CliError(f"unknown preset {args.preset!r}; expected one of {', '.join(PRESETS)}")
        preset = PRESETS[args.preset]
        s = ScaledParams(**preset["params"])
        axes = [(name, list(grid)) for name, grid in preset["axes"]]
        if args.axes:
            axes = parse_axes(args.axes)
    else:
        s = require_config(args)
        if not args.axes:
            raise CliError("scan needs --preset or --axes")
        axes = parse_axes(args.axes)
    if s.delta_ac_bar != 0:
        raise CliError("scan covers the resonant case only (key 'delta_ac_bar' must be 0)")
    try:
        samples = stability_map(s, axes, branch=args.branch, form=args.form,
                                boundary_exponent=args.boundary_exponent, jobs=args.jobs)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    columns = ["axis1", "axis2", "max_re", "dominant_re", "dominant_im", "n_roots", "flag"]
    rows = [[x.axis1, x.axis2, x.max_re, x.dominant.real, x.dominant.imag, x.n_roots, x.flag]
            for x in samples]
    manifest = make_manifest("scan", s, preset=args.preset,
                             axes=[{"name": n, "grid": [float(v) for v in g]} for n, g in axes],
                             branch=args.branch, form=args.form,
                             boundary_exponent=args.boundary_exponent,
                             I_L_by_point=sorted({float(x.I_L) for x in samples}))
    emit(args, columns, rows, manifest)
    return EXIT_OK


def cmd_simulate(args):
    s = require_config(args)
    if s.delta_ac_bar != 0:
        raise CliError("simulation covers the resonant case only (key 'delta_ac_bar' must be 0)")
    cfg = SimConfig(m=args.m, t_max=args.t_max, eps=args.eps, record_stride=args.record_stride)
    rng = np.random.default_rng(args.seed)
    extra = {"init": args.init, "m": args.m, "t_max": args.t_max}
    if args.init == "steady":
        if not s.R < 1:
            raise CliError("steady initialization needs R < 1 (key 'R')")
        sol = select_branch(s, args.branch)
        if sol is None:
            raise CliError(f"{args.branch} branch does not exist at gain {s.gain} (key 'gain')")
        state = init_grid(s, sol, cfg)
        extra.update(branch=args.branch, I_L=sol.exit_intensity)
        if sol.branch is Branch.TRIVIAL and args.perturb is None:
            raise CliError("the Trivial branch is only meaningful with --perturb")
    else:
        sol = None
        state = init_grid(s, None, cfg, rng)
        extra.update(seed=args.seed, noise=args.eps)
    extra["fill_effective"] = state.fill_effective
    extra["delay_cells"] = state.d

    if args.perturb is not None:
        pert = parse_perturb(args.perturb)
        amp = None if abs(state.exit_field) > 0 else 1.0
        series = Series()
        fit = measure_growth_rate(state, s, eps=pert["eps"], mode=pert["n"], t_fit=args.t_max,
                                  amplitude=amp, series=series, record_stride=args.record_stride)
        I_L = 0.0 if sol is None else sol.exit_intensity
        preds = {}
        for form in FORMS:
            es = find_roots(CharParams.from_scaled(s, I_L, pert["n"], form=form))
            preds[form] = es.max_re
        info(f"fitted growth rate {fit.rate:.6g} (freq {fit.freq:.6g}, window "
             f"{fit.window[0]:.4g}..{fit.window[1]:.4g}, nonlinear={fit.nonlinear})")
        for form, v in preds.items():
            rel = abs(fit.rate - v) / abs(v) if v else math.inf
            info(f"  predicted max Re lambda (n={pert['n']}, {form}): {v:.6g}  rel diff {rel:.3g}")
        extra.update(perturb=pert, fitted_rate=fit.rate, fitted_freq=fit.freq,
                     predicted=preds, fit_nonlinear=fit.nonlinear)
        state = fit.final_state
    elif args.init == "steady":
        state, series = run(state, s, args.t_max, record_stride=args.record_stride)
        t, ex, _ = series.arrays()
        F0 = math.sqrt(sol.exit_intensity)
        drift = float(np.max(np.abs(ex - F0)) / F0)
        verdict = "within" if drift <= args.drift_tol else "exceeds"
        info(f"steady drift (max relative exit deviation over t={args.t_max}): {drift:.3e}, "
             f"{verdict} tolerance {args.drift_tol:g}")
        extra.update(drift=drift, drift_tol=args.drift_tol)
    else:
        state, converged, series = run_to_steady(state, s, tol=args.tol, t_max=args.t_max,
                                                 record_stride=args.record_stride)
        final = float(abs(state.exit_field) ** 2)
        info(f"converged={converged} final exit intensity {final:.6g}")
        extra.update(converged=converged, final_intensity=final)

    t, ex, Dm = series.arrays()
    columns = ["t_bar", "exit_re", "exit_im", "exit_intensity", "D_mean"]
    rows = [[ti, e.real, e.imag, abs(e) ** 2, d] for ti, e, d in zip(t, ex, Dm)]
    manifest = make_manifest("simulate", s, **extra)
    if args.out:
        chk = args.checkpoint or str(args.out) + ".chk"
        save_checkpoint(chk, state, s)
        manifest["outputs"] = [chk]
    elif args.checkpoint:
        save_checkpoint(args.checkpoint, state, s)
        manifest["outputs"] = [args.checkpoint]
    emit(args, columns, rows, manifest)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors (exit 1); 2 is reserved for numerical failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="parameter file (key = value lines)")
    common.add_argument("--out", help="output file; a .manifest.json is written next to it")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--seed", type=int, default=0, help="noise seed for cold starts")

    stab = _Parser(add_help=False)
    stab.add_argument("--branch", default="Upper", choices=[b.value for b in Branch])
    stab.add_argument("--form", default="standard", choices=FORMS)
    stab.add_argument("--boundary-exponent", type=int, choices=(2, 4), default=None)

    parser = _Parser(prog="tpstab", description=__doc__.splitlines()[0],
                                     parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("steady", parents=[common], help="stationary branches and profiles")
    p.add_argument("--mode", type=int, default=0, help="cavity mode index j")
    p.add_argument("--samples", type=int, default=11)
    p.set_defaults(func=cmd_steady)

    p = sub.add_parser("spectrum", parents=[common, stab], help="eigenvalues per cavity mode")
    p.add_argument("--n-range", default="-10:10",
                   help="NMIN:NMAX; write --n-range=-3:3 for negative bounds")
    p.add_argument("--intensity", type=float, default=None, help="override I_L")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("scan", parents=[common, stab], help="stability map over parameters")
    p.add_argument("--preset", help="fig1, fig2 or fig3")
    p.add_argument("--axes", help="e.g. 'alpha_n=0:30:121;gain=1,3,5'")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("simulate", parents=[common], help="time-domain integration")
    p.add_argument("--init", choices=("steady", "cold"), default="steady")
    p.add_argument("--branch", default="Upper", choices=[b.value for b in Branch])
    p.add_argument("--perturb", help="n=INT,eps=FLOAT")
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--t-max", type=float, default=50.0)
    p.add_argument("--eps", type=float, default=1e-3, help="cold-start noise amplitude")
    p.add_argument("--tol", type=float, default=1e-8, help="cold-start convergence tolerance")
    p.add_argument("--drift-tol", type=float, default=1e-6, help="steady-start drift tolerance")
    p.add_argument("--record-stride", type=int, default=16)
    p.add_argument("--checkpoint", help="checkpoint path (default OUT.chk)")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        info(f"error: {exc}")
        return exc.code
    except ParameterError as exc:
        info(f"error: invalid parameters: {exc}")
        return EXIT_VALIDATION
    except (SimulationError, CharEvalError, FloatingPointError) as exc:
        info(f"numerical failure: {exc}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
