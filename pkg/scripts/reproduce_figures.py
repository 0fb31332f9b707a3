"""Regenerate the three stability-map presets as CSV tables.

Each preset is scanned with both characteristic-function forms so the
standard-form curves and the rederived ones can be compared side by side.

    python3 scripts/reproduce_figures.py --out-dir figures --jobs 4
"""
import argparse
import csv
import math
import pathlib

from tpstab.cli import PRESETS
from tpstab.model import ScaledParams
from tpstab.stability import stability_map


def positive_range(samples):
    """Map each outer-axis value to the last alpha_n with positive max_re."""
    out = {}
    for smp in samples:
        key = smp.axis2
        if smp.max_re > 0:
            out[key] = max(out.get(key) or 0.0, smp.axis1)
        else:
            out.setdefault(key, None)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=pathlib.Path, default=pathlib.Path("figures"))
    ap.add_argument("--presets", nargs="+", default=sorted(PRESETS), choices=sorted(PRESETS))
    ap.add_argument("--forms", nargs="+", default=["standard", "rederived"],
                    choices=["standard", "rederived"])
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name in args.presets:
        preset = PRESETS[name]
        base = ScaledParams(**preset["params"])
        for form in args.forms:
            samples = stability_map(base, preset["axes"], form=form, jobs=args.jobs)
            path = args.out_dir / f"{name}_{form}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["axis1", "axis2", "max_re", "dominant_re", "dominant_im", "flag"])
                for smp in samples:
                    w.writerow([smp.axis1, smp.axis2, smp.max_re, smp.dominant.real,
                                smp.dominant.imag, smp.flag or ""])
            ranges = {k: v for k, v in positive_range(samples).items() if not math.isnan(k)}
            print(f"{path}: last positive alpha_n by {preset['axes'][1][0]}: {ranges}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
