"""Compare time-domain growth rates with each characteristic-function variant.

A small perturbation is added to a steady state (or to the off state) and its
projection on one ring mode is fitted to an exponential. The fitted rate is
printed next to the dominant Re lambda of the standard form with boundary
exponent 2 and 4 and of the rederived form.

    python3 scripts/adjudicate_char_eq.py --m 128
"""
import argparse

from tpstab.model import ScaledParams
from tpstab.stability import CharParams, find_roots
from tpstab.steadystate import output_intensities, select_branch
from tpstab.timedomain import SimConfig, init_grid, measure_growth_rate

POINTS = [
    # gain, branch, mode, fit window
    (1.0, "Upper", 0, 20.0),
    (1.0, "Lower", 0, 8.0),
    (3.0, "Upper", 1, 20.0),
    (5.0, "Upper", 1, 20.0),
    (5.0, "Lower", 0, 8.0),
    (5.0, "Trivial", 0, 6.0),
]
VARIANTS = [("standard", 2), ("standard", 4), ("rederived", 4)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=64, help="medium cells")
    ap.add_argument("--gamma-ratio", type=float, default=0.1)
    ap.add_argument("--k", type=float, default=3.55)
    ap.add_argument("--R", type=float, default=0.8)
    ap.add_argument("--tol", type=float, default=0.05, help="relative agreement threshold")
    args = ap.parse_args(argv)

    base = ScaledParams(args.gamma_ratio, args.k, args.R, 1.0)
    hits = {v: 0 for v in VARIANTS}
    header = f"{'point':<18}{'measured':>10}" + "".join(f"{f'{f} p={p}':>16}" for f, p in VARIANTS)
    print(header)
    for gain, branch, mode, t_fit in POINTS:
        s = base.replace(gain=gain)
        sol = output_intensities(s)[0] if branch == "Trivial" else select_branch(s, branch)
        if sol is None:
            continue
        state = init_grid(s, sol, SimConfig(m=args.m))
        fit = measure_growth_rate(state, s, eps=1e-6, mode=mode, t_fit=t_fit,
                                  amplitude=1.0 if branch == "Trivial" else None)
        cells = []
        for form, p in VARIANTS:
            cp = CharParams.from_scaled(s, sol.exit_intensity, mode, form=form, boundary_exponent=p)
            lam = find_roots(cp).max_re
            ok = abs(fit.rate - lam) <= args.tol * abs(lam)
            hits[(form, p)] += ok
            cells.append(f"{lam:+.4f}{' ' if ok else '*':<1}")
        label = f"G={gain:g} {branch} n={mode}"
        print(f"{label:<18}{fit.rate:>+10.4f}" + "".join(f"{c:>16}" for c in cells))
    print("* outside the relative tolerance")
    for (form, p), n in hits.items():
        print(f"{form} p={p}: {n} agreeing points")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
