"""How close the coplanar grid search gets to 2 sqrt 2 as the grid is refined."""

import csv
import sys

import numpy as np

from bellsim.lhv import chsh_scan
from bellsim.scenarios import SINGLET, build_epr_state

RESOLUTIONS_DEG = (60, 45, 30, 15, 10, 5, 2, 1, 0.5)


def main():
    psi = build_epr_state(*SINGLET)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["resolution_deg", "grid_points", "max_abs_s", "gap_to_tsirelson", "a_deg", "a_prime_deg", "b_deg", "b_prime_deg"])
    for res in RESOLUTIONS_DEG:
        r = chsh_scan(psi, np.deg2rad(res))
        angles = np.rad2deg([r.a, r.a_prime, r.b, r.b_prime])
        w.writerow([res, r.grid_points, format(r.max_abs_s, ".17g"), format(2 * np.sqrt(2) - r.max_abs_s, ".3e")]
                   + [format(x, ".6g") for x in angles])


if __name__ == "__main__":
    main()
