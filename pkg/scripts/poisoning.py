"""Poisoning experiment: perturb 1 and 10 training points of a
trained 3-layer ReLU net along sign(grad_x L) and compare losses before and after
moving to the estimated solutions.

    python scripts/poisoning.py                       # step 0.2% of ||x||
    python scripts/poisoning.py --steps 0.002 0.005 0.01 0.02
"""

import argparse

import numpy as np

from setsens import io
from setsens.net import flatten
from setsens.experiments import poisoning_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=float, nargs="+", default=[0.002])
    ap.add_argument("--counts", type=int, nargs="+", default=[1, 10])
    ap.add_argument("--samples", type=int, default=1)
    ap.add_argument("--out", default=None, help="JSON report path")
    args = ap.parse_args()

    res = poisoning_experiment(args.seed, steps=tuple(args.steps), counts=tuple(args.counts), n_samples=args.samples)
    print(f"trained {res.train.epochs} epochs, grad norm {res.train.grad_norm:.2e}, loss {res.train.loss:.3e}")
    w_norm = np.linalg.norm(flatten(res.train.net))
    print(f"{'points':>6} {'step':>6} {'loss at w_bar':>14} {'loss at est.':>13} {'factor':>10} {'|v|/|w|':>9}")
    for key, rep in res.reports.items():
        c, step = key.split("@")
        after = rep.loss_after.max()
        rel = rep.norms.max() / w_norm
        print(f"{c:>6} {float(step):>6.1%} {rep.loss_before:>14.4e} {after:>13.4e} {rep.loss_before / after:>10.3g} {rel:>9.2e}")
    print(f"{res.seconds:.1f}s")
    if args.out:
        io.write_json(args.out, {"seed": args.seed, "epochs": res.train.epochs, "grad_norm": res.train.grad_norm,
                                 "reports": {k: r.to_dict() for k, r in res.reports.items()}})


if __name__ == "__main__":
    main()
