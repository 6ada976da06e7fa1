"""Effective velocity of the layered flows over a range of horizons.

For layered2d the return time through one period is exactly 2, so from a
seed x the estimate X(T, x)/T differs from xi = (0, 1/2) by exactly |x|/T
at even T. The bound column is (|x| + 2 sup|Wsharp|)/|T|.
"""

import argparse
import sys

from isoflow.catalog import catalog_get
from isoflow.torus import build_transport_matrix
from isoflow.asymptotics import effective_velocity_flow


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--field", default="layered2d", choices=("layered2d", "layered3d", "harmonic1d"))
    p.add_argument("--seed", default=None, help="comma-separated seed point")
    p.add_argument("--horizons", default="10,31.6,100,316,1000,-1000")
    args = p.parse_args(argv)

    e = catalog_get(args.field)
    seed = [float(v) for v in args.seed.split(",")] if args.seed else [0.3, 0.1, 0.2][: e.dim]
    crit = build_transport_matrix(e.frame, 64 if e.dim <= 2 else 24)
    horizons = [float(v) for v in args.horizons.split(",")]
    rep = effective_velocity_flow(e.field, seed, horizons, criterium=crit)
    sys.stdout.write(rep.to_csv())


if __name__ == "__main__":
    main()
