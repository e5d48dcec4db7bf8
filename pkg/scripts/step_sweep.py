"""Step-size sweep (0.2% to 2% of ||x||): estimated solutions should stay better than
w_bar at every step while degrading as the step grows.

    python scripts/step_sweep.py --out results/step_sweep.json
"""

import argparse

from setsens import io
from setsens.experiments import poisoning_experiment

STEPS = (0.002, 0.005, 0.01, 0.02)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    res = poisoning_experiment(args.seed, steps=STEPS)
    rows = []
    for c in (1, 10):
        for step in STEPS:
            rep = res.reports[f"{c}@{step}"]
            rows.append({"points": c, "step": step, "loss_w_bar": rep.loss_before,
                         "loss_estimated": float(rep.loss_after.max())})
            print(f"{c:>3} points  step {step:>5.1%}  w_bar {rep.loss_before:.4e}  estimated {rep.loss_after.max():.4e}")
    for c in (1, 10):
        est = [r["loss_estimated"] for r in rows if r["points"] == c]
        better = all(r["loss_estimated"] < r["loss_w_bar"] for r in rows if r["points"] == c)
        print(f"{c} points: always better {better}, monotone {all(a <= b for a, b in zip(est, est[1:]))}")
    if args.out:
        io.write_json(args.out, {"seed": args.seed, "rows": rows})


if __name__ == "__main__":
    main()
