"""HOM dip and HWP2 calibration scans.

Usage: python3 scripts/calibration.py [--out DIR] [--xi2 0.97] [--phi 0.2] [--step 0.01]

Writes hom.csv and hwp2_phi0.csv / hwp2_phi<phi>.csv and prints the dip
visibility and the located HWP2 extrema.  With a birefringent partial PBS
(``--phi``) and HWP2 left at 0, the extrema move by phi/4.
"""

from __future__ import annotations

import argparse
import csv
import math
from pathlib import Path

import numpy as np

from noonsim.analysis import hom_scan, hom_visibility, hwp2_calibration_scan, hwp2_extrema
from noonsim.elements import Noon3Params, preset_noon3
from noonsim.sources import OverlapModel, PairDistribution


def write(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows((repr(float(a)), repr(float(b))) for a, b in rows)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/calibration")
    ap.add_argument("--xi2", type=float, default=0.97, help="squared wave-packet overlap")
    ap.add_argument("--phi", type=float, default=0.2, help="PPBS birefringence (rad)")
    ap.add_argument("--step", type=float, default=0.01, help="HWP2 grid step (deg)")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    delays = np.round(np.arange(-3.0, 3.0001, 0.1), 10)
    scan = hom_scan(OverlapModel(math.sqrt(args.xi2)), delays)
    write(out / "hom.csv", ("delay", "p_coincidence"), scan)
    print(f"hom_visibility = {hom_visibility(scan):.12f}")

    src = PairDistribution("fixed-n", n=2)
    grid = np.arange(0.0, 90.0001, 0.5)
    for phi in (0.0, args.phi):
        preset = preset_noon3(Noon3Params(birefringence_phi=phi, hwp2=0.0, source=src))
        write(out / f"hwp2_phi{phi:g}.csv", ("hwp2_deg", "p_fourfold"), hwp2_calibration_scan(preset, grid))
        found = hwp2_extrema(preset, 0.0, 90.0, args.step)
        listing = ", ".join(f"{d:.9f} ({k})" for d, k in found)
        print(f"phi = {phi:g} rad: extrema at {listing}; expected shift {math.degrees(phi) / 4:.6f} deg")


if __name__ == "__main__":
    main()
