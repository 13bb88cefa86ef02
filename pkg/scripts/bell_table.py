"""Bell check for coplanar triples (theta, theta, 2 theta), with and without M3."""

import argparse
import csv
import sys

import numpy as np

from bellsim.scenarios import run_bell_triple


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--step", type=float, default=7.5, help="degrees")
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["theta_deg", "with_m3", "lhs", "rhs", "margin", "satisfied"])
    for deg in np.arange(0.0, 90.0 + 1e-9, args.step):
        t = np.deg2rad(deg)
        for m3 in (False, True):
            c = run_bell_triple((t, t, 2 * t), with_m3=m3).check
            w.writerow([format(deg, "g"), str(m3).lower(), format(c.lhs, ".17g"), format(c.rhs, ".17g"),
                        format(c.margin, ".17g"), str(c.satisfied).lower()])


if __name__ == "__main__":
    main()
