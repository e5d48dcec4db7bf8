"""File formats: JSON checkpoints, solution sets and reports; CSV datasets.

Floats are written with Python's shortest round-trip repr, so reading a file
back reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .net import Dataset, InvalidInputError, Network
from .sets import SolutionSet


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{path}: not valid JSON ({e})") from None


def network_to_dict(net: Network) -> dict:
    return {
        "depth": net.depth,
        "width": net.width,
        "input_dim": net.input_dim,
        "layers": [W.tolist() for W in net.layers],
        "output_vector": net.output_vector.tolist(),
    }


def network_from_dict(d: dict) -> Network:
    try:
        net = Network(tuple(np.asarray(W, dtype=np.float64) for W in d["layers"]),
                      np.asarray(d["output_vector"], dtype=np.float64))
    except KeyError as e:
        raise InvalidInputError(f"checkpoint missing field {e}") from None
    for key, val in (("depth", net.depth), ("width", net.width), ("input_dim", net.input_dim)):
        if key in d and int(d[key]) != val:
            raise InvalidInputError(f"checkpoint {key}={d[key]} disagrees with layers ({val})")
    return net


def save_checkpoint(path, net: Network) -> None:
    write_json(path, network_to_dict(net))


def load_checkpoint(path) -> Network:
    return network_from_dict(read_json(path))


def save_dataset(path, data: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{j + 1}" for j in range(data.dim)] + ["y"])
        for x, y in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def load_dataset(path) -> Dataset:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise InvalidInputError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if header[-1] != "y" or any(h != f"x_{j + 1}" for j, h in enumerate(header[:-1])):
        raise InvalidInputError(f"{path}: header must be x_1..x_d,y")
    try:
        vals = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as e:
        raise InvalidInputError(f"{path}: {e}") from None
    if vals.shape[1] != len(header):
        raise InvalidInputError(f"{path}: ragged rows")
    return Dataset(vals[:, :-1], vals[:, -1])


def solution_set_to_dict(S: SolutionSet) -> dict:
    return {"dim": S.dim, "provenance": S.provenance, "samples": S.samples.tolist()}


def solution_set_from_dict(d: dict) -> SolutionSet:
    S = SolutionSet(np.asarray(d["samples"], dtype=np.float64), d.get("provenance", ""))
    if "dim" in d and int(d["dim"]) != S.dim:
        raise InvalidInputError(f"solution set dim={d['dim']} but samples have {S.dim}")
    return S
