"""Loss surface around a trained network along two filter-normalised random directions.

    python scripts/landscape.py --checkpoint net.json --data data.csv --out landscape.csv
"""

import argparse

import numpy as np

from setsens import io
from setsens.trainer import landscape_slice, random_directions, write_landscape


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--data", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--span", type=float, default=1.0)
    ap.add_argument("--grid", type=int, default=41)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    net = io.load_checkpoint(args.checkpoint)
    data = io.load_dataset(args.data)
    d1, d2 = random_directions(net, np.random.default_rng(args.seed))
    ticks = np.linspace(-args.span, args.span, args.grid)
    write_landscape(args.out, ticks, ticks, landscape_slice(net, data, d1, d2, ticks, ticks))


if __name__ == "__main__":
    main()
