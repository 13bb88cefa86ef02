"""Sweep the angle between the two spin directions and tabulate P(++) and E.

    python3 scripts/correlation_sweep.py --step 5 > sweep.csv
"""

import argparse
import csv
import sys

import numpy as np

from bellsim.lhv import quantum_correlation
from bellsim.scenarios import EprConfig, run_epr


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--step", type=float, default=5.0, help="degrees")
    ap.add_argument("--with-m3", action="store_true")
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["theta_deg", "p_plus_plus", "closed_form", "expectation", "locality_deviation"])
    for deg in np.arange(0.0, 360.0 + 1e-9, args.step):
        rep = run_epr(EprConfig.coplanar(0.0, np.deg2rad(deg), with_m3=args.with_m3))
        w.writerow([
            format(deg, ".17g"),
            format(rep.p_plus_plus, ".17g"),
            format(quantum_correlation(np.deg2rad(deg)), ".17g"),
            format(rep.expectation, ".17g"),
            format(rep.locality_deviation, ".3g"),
        ])


if __name__ == "__main__":
    main()
