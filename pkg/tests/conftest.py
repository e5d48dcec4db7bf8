import sys

import numpy as np
import pytest

from setsens import toy
from setsens.experiments import teacher_instance
from setsens.net import Dataset, Network, forward, random_network
from setsens.verify import away_from_kinks


@pytest.fixture
def toy_net():
    return toy.toy_network()


@pytest.fixture
def toy_data():
    return toy.toy_dataset()


def random_instance(seed, depth=2, width=4, input_dim=3, n=5, guard=1e-3):
    """Random net, random data and random labels, every pre-activation at least ``guard`` from zero."""
    for attempt in range(1000):
        rng = np.random.default_rng([seed, attempt])
        net = random_network(depth, width, input_dim, rng)
        X = rng.normal(size=(n, input_dim))
        if away_from_kinks(net, X, guard):
            return net, Dataset(X, rng.normal(size=n))
    raise RuntimeError("could not draw a kink-free instance")


def zero_loss_instance(seed, depth=2, width=4, input_dim=3, n=3, guard=1e-3):
    """Teacher-labelled instance (exact zero loss) with no kinks and no dead layer."""
    for attempt in range(1000):
        net, data = teacher_instance(depth, width, input_dim, n, seed * 1000 + attempt)
        alive = all(m.any() for m in forward(net, data.X).masks)
        if alive and away_from_kinks(net, data.X, guard):
            return net, data
    raise RuntimeError("could not draw a kink-free instance")


def linear_instance(seed, d, n=None, margin=0.1):
    """One-unit ReLU layer whose least-squares fit keeps every pre-activation positive,
    so around the fit the model is plain linear regression."""
    n = 2 * d + 5 if n is None else n
    for attempt in range(1000):
        rng = np.random.default_rng([seed, attempt])
        w_true = rng.normal(size=d)
        X = rng.normal(size=(n, d))
        X *= np.sign(X @ w_true)[:, None]
        X += 0.5 * w_true / np.linalg.norm(w_true)
        y = X @ w_true + 0.1 * rng.normal(size=n)
        w_ls = np.linalg.lstsq(X, y, rcond=None)[0]
        if np.min(X @ w_ls) > margin:
            return Network((w_ls[None, :],), np.array([1.0])), Dataset(X, y)
    raise RuntimeError("no valid linear instance")


def regression_influence(X, y, w, K, dX):
    """Textbook least-squares influence: -H^{-1} (1/n) sum_K (x_i w^T + r_i I) dx_i."""
    n, d = X.shape
    H = X.T @ X / n
    b = np.zeros(d)
    for i, dx in zip(K, dX):
        r = X[i] @ w - y[i]
        b += (np.outer(X[i], w) + r * np.eye(d)) @ dx
    return -np.linalg.solve(H, b / n)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
