"""Command-line entry point: ``setsens {train,kappa,estimate,verify,toy}``.

Every command writes a JSON report (to ``--out`` or stdout) that embeds the
resolved configuration. On failure a JSON error object goes to stderr and the
exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .diff import grad_w_mean_loss, input_jacobian, layer_jacobian
from .lipschitz import DegeneratePointError, kappa_table, verify_inclusion
from .net import InvalidInputError, flatten, random_network
from .sensitivity import (NonStationaryError, PerturbationSpec, SingularHessianError, algorithm1,
                          graphical_derivative, rhs)
from .trainer import DivergenceError, TrainConfig, sgd_train, write_landscape
from .verify import (away_from_kinks, fd_grad, fd_input_jacobian, fd_layer_jacobian, rel_err)

EXIT_ERROR = 2


def _emit(report: dict, out: str | None) -> None:
    text = io.dumps(report)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


def _require(args, *names):
    missing = [f"--{n}" for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise InvalidInputError(f"missing required option(s): {', '.join(missing)}")


def cmd_train(args) -> dict:
    _require(args, "data", "out")
    data = io.load_dataset(args.data)
    rng = np.random.default_rng(args.seed)
    net = random_network(args.depth, args.width, data.dim, rng)
    cfg = TrainConfig(lr=args.lr, max_epochs=args.max_epochs, batch_size=args.batch_size, tol=args.tol, seed=args.seed)
    res = sgd_train(net, data, cfg)
    io.save_checkpoint(args.out, res.net)
    return {"config": _config(args), "epochs": res.epochs, "grad_norm": res.grad_norm,
            "loss": res.loss, "converged": res.converged, "checkpoint": args.out}


def cmd_kappa(args) -> dict:
    _require(args, "data", "checkpoint")
    data = io.load_dataset(args.data)
    net = io.load_checkpoint(args.checkpoint)
    if args.layer is None:
        certs = kappa_table(net, data)
    else:
        from .lipschitz import kappa_global
        certs = {args.layer: kappa_global(net, data, args.layer)}
    return {
        "config": _config(args),
        "kappa_per_layer": {str(h): c.aggregate for h, c in certs.items()},
        "kappa_global": max(c.aggregate for c in certs.values()),
        "certificates": [c.to_dict() for c in certs.values()],
    }


def _load_spec(args, n: int, d: int) -> PerturbationSpec:
    if args.spec:
        spec = PerturbationSpec.from_dict(io.read_json(args.spec))
    else:
        # default: first point along +e_1
        D = np.zeros((1, d))
        D[0, 0] = 1.0
        spec = PerturbationSpec((0,), D, 1e-3)
    if args.delta is not None:
        spec = spec.scaled(args.delta)
    return spec


def cmd_estimate(args) -> dict:
    _require(args, "data", "checkpoint")
    data = io.load_dataset(args.data)
    net = io.load_checkpoint(args.checkpoint)
    spec = _load_spec(args, data.n, data.dim)
    rep = algorithm1(net, data, spec, args.samples, seed=args.seed, tol=args.tol, normalization=args.normalization)
    out = rep.to_dict()
    out["config"] = _config(args)
    if args.estimates:
        io.write_json(args.estimates, io.solution_set_to_dict(rep.estimated))
    return out


def _oracle_suite(net, data, spec, seed: int) -> dict:
    g = grad_w_mean_loss(net, data)
    out = {"away_from_kinks": away_from_kinks(net, data.X)}
    if net.n_params <= 2000:
        # the gradient vanishes at a minimiser, so compare absolutely below unit norm
        out["grad_rel_err"] = rel_err(g, fd_grad(net, data), floor=1.0)
        x0 = data.X[0]
        out["layer_jacobian_rel_err"] = {str(h): rel_err(layer_jacobian(net, x0, h), fd_layer_jacobian(net, x0, h))
                                         for h in range(1, net.depth + 1)}
        out["input_jacobian_rel_err"] = rel_err(input_jacobian(net, x0), fd_input_jacobian(net, x0))
    if net.n_params <= 10:
        from .diff import dense_hessian
        Hd = dense_hessian(net, data)
        b = rhs(net, data, spec)
        oracle = -np.linalg.pinv(Hd, rcond=1e-10) @ b
        gd = graphical_derivative(net, data, spec, 1, seed=seed, require_stationary=False, tol=1e-14)
        err = rel_err(gd.min_norm, oracle) if np.linalg.norm(oracle) > 0 else float(np.linalg.norm(gd.min_norm))
        out["pinv_rel_err"] = err
        out["pinv_equivalent"] = bool(err <= 1e-6)
    return out


def cmd_verify(args) -> dict:
    _require(args, "data", "checkpoint")
    data = io.load_dataset(args.data)
    net = io.load_checkpoint(args.checkpoint)
    cfg = TrainConfig(lr=args.lr, tol=args.train_tol, max_epochs=args.max_epochs)
    layers = None if args.layer is None else [args.layer]
    rep = verify_inclusion(net, data, cfg, trials=args.trials, delta=args.delta if args.delta is not None else 1e-3,
                           layers=layers, seed=args.seed)
    spec = _load_spec(args, data.n, data.dim)
    return {"config": _config(args), "inclusion": rep.to_dict(), "oracles": _oracle_suite(net, data, spec, args.seed)}


def cmd_toy(args) -> dict:
    from .experiments import run_toy

    bundle = run_toy(seed=args.seed, n_samples=args.samples)
    report = bundle["report"]
    report["config"] = _config(args)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "toy_report.json", report)
        for name, pts in bundle["sets"].items():
            np.savetxt(out / f"solution_set_{name}.csv", pts, delimiter=",", header="w1,w2", comments="", fmt="%.17g")
        np.savetxt(out / "estimates.csv", np.asarray(report["estimates"]), delimiter=",", header="w1,w2",
                   comments="", fmt="%.17g")
        ls = bundle["landscape"]
        write_landscape(out / "landscape_poisoned.csv", ls["alphas"], ls["betas"], ls["loss"])
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="setsens", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, data=True, checkpoint=True):
        p.add_argument("--config", help="JSON file; its keys override command-line flags")
        if data:
            p.add_argument("--data", help="CSV dataset with header x_1..x_d,y")
        if checkpoint:
            p.add_argument("--checkpoint", help="JSON network checkpoint")
        p.add_argument("--out", help="output path (report goes to stdout if omitted)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a DFCNN by gradient descent")
    common(p, checkpoint=False)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--width", type=int, default=16)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--max-epochs", type=int, default=200_000)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("kappa", help="closed-form Lipschitz-like moduli")
    common(p)
    p.add_argument("--layer", type=int, default=None)
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("estimate", help="estimate the perturbed solution set (graphical derivative)")
    common(p)
    p.add_argument("--spec", help="JSON perturbation spec {indices, directions, delta, normalization}")
    p.add_argument("--delta", type=float, default=None, help="override the spec's magnitude")
    p.add_argument("--samples", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--normalization", choices=("dataset", "subset"), default="dataset")
    p.add_argument("--estimates", help="also write the estimated solution set here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("verify", help="empirical inclusion check plus derivative oracles")
    common(p)
    p.add_argument("--spec")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--layer", type=int, default=None)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--train-tol", type=float, default=1e-8)
    p.add_argument("--max-epochs", type=int, default=200_000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("toy", help="two-parameter toy reproduction bundle")
    common(p, data=False, checkpoint=False)
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--out-dir", help="directory for the report and plot data files")
    p.set_defaults(func=cmd_toy)
    return parser


def _apply_config(args) -> None:
    if not getattr(args, "config", None):
        return
    for key, val in io.read_json(args.config).items():
        key = key.replace("-", "_")
        if not hasattr(args, key) or key in ("func", "command"):
            raise InvalidInputError(f"unknown config key {key!r}")
        setattr(args, key, val)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        _apply_config(args)
        report = args.func(args)
        _emit(report, args.out if args.command != "train" else None)
    except FileNotFoundError as e:
        return _fail("FileNotFound", str(e))
    except (InvalidInputError, NonStationaryError, SingularHessianError, DegeneratePointError, DivergenceError) as e:
        return _fail(type(e).__name__, str(e))
    return 0


def _fail(kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
