import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, zero_loss_instance
from setsens.lipschitz import (DegeneratePointError, kappa_global, kappa_layer, kappa_table, inclusion_radius,
                               verify_inclusion)
from setsens.net import Dataset, Network
from setsens.sensitivity import PerturbationSpec
from setsens.trainer import TrainConfig
from setsens.verify import fd_input_jacobian, fd_layer_jacobian


# f = w1 w2 x at (1, 2): df/dx = 2, df/dw1 = 2x, df/dw2 = x
@pytest.mark.parametrize("x,h,want", [(1.0, 1, 1.0), (1.0, 2, 2.0), (2.0, 1, 0.5), (2.0, 2, 1.0)])
def test_toy_kappa(toy_net, x, h, want):
    assert kappa_layer(toy_net, np.array([x]), h) == pytest.approx(want, rel=1e-15)


def test_toy_aggregate(toy_net, toy_data):
    table = kappa_table(toy_net, toy_data)
    assert table[1].aggregate == pytest.approx(np.sqrt(2), rel=1e-15)
    assert table[2].aggregate == pytest.approx(2 * np.sqrt(2), rel=1e-15)
    assert table[1].argmax == 0 and table[2].argmax == 0
    assert table[1].to_dict()["kappa_per_point"] == [1.0, 0.5]


def test_single_point_aggregate_is_pointwise(toy_net):
    data = Dataset(np.array([[1.0]]), np.array([2.0]))
    assert kappa_global(toy_net, data, 2).aggregate == 2.0


def test_duplicate_point_scales_by_sqrt_n(toy_net):
    one = Dataset(np.array([[1.0]]), np.array([2.0]))
    dup = Dataset(np.array([[1.0], [1.0], [1.0]]), np.array([2.0, 2.0, 2.0]))
    assert kappa_global(toy_net, dup).aggregate == pytest.approx(np.sqrt(3) * kappa_global(toy_net, one).aggregate)


def test_aggregate_never_decreases_when_points_are_added():
    net, data = random_instance(0, depth=2, width=4, input_dim=3, n=8)
    prev = 0.0
    for m in range(1, data.n + 1):
        k = kappa_global(net, Dataset(data.X[:m], data.y[:m]), 1).aggregate
        assert k >= prev
        prev = k


def test_zero_input_is_degenerate(toy_net):
    with pytest.raises(DegeneratePointError):
        kappa_layer(toy_net, np.array([0.0]), 1)
    data = Dataset(np.array([[1.0], [0.0]]), np.array([2.0, 0.0]))
    with pytest.raises(DegeneratePointError) as info:
        kappa_global(toy_net, data, 1)
    assert info.value.index == 1


def test_dead_hidden_layer_is_degenerate():
    net = Network((np.array([[1.0], [1.0]]), -np.eye(2)), np.array([1.0, 1.0]))
    with pytest.raises(DegeneratePointError) as info:
        kappa_layer(net, np.array([1.0]), 1)
    assert info.value.layer == 2


@pytest.mark.parametrize("seed", range(5))
def test_output_vector_scale_invariance(seed):
    net, data = random_instance(seed, depth=3, width=4, input_dim=3, n=3)
    scaled = net.with_output_vector(-3.7 * net.output_vector)
    for h in (1, 2, 3):
        assert kappa_layer(scaled, data.X[0], h) == pytest.approx(kappa_layer(net, data.X[0], h), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 500), h=st.integers(1, 3))
def test_kappa_matches_finite_difference_ratio(seed, h):
    net, data = zero_loss_instance(seed, depth=3, width=3, input_dim=4, n=1)
    x = data.X[0]
    want = np.linalg.norm(fd_input_jacobian(net, x)) / np.linalg.norm(fd_layer_jacobian(net, x, h))
    assert kappa_layer(net, x, h) == pytest.approx(want, rel=1e-5)


def test_radius_uses_pointwise_kappa_for_one_point(toy_net, toy_data):
    spec = PerturbationSpec((1,), [[1.0]], 0.1)
    k, r = inclusion_radius(toy_net, toy_data, spec, 1)
    assert (k, r) == (0.5, pytest.approx(0.05))
    spec2 = PerturbationSpec((0, 1), [[1.0], [1.0]], 0.1)
    k2, _ = inclusion_radius(toy_net, toy_data, spec2, 1)
    assert k2 == pytest.approx(np.sqrt(2))


def test_zero_perturbation_passes_trivially(toy_net, toy_data):
    specs = [PerturbationSpec((0,), [[1.0]], 0.0)]
    rep = verify_inclusion(toy_net, toy_data, specs=specs)
    t = rep.trials[0]
    assert t.converged and t.distance == 0.0 and t.passed(1) and t.passed(2)
    assert rep.pass_fraction() == 1.0


def test_toy_inclusion(toy_net, toy_data):
    rep = verify_inclusion(toy_net, toy_data, TrainConfig(lr=0.05, tol=1e-8), trials=10, seed=1)
    assert len(rep.counted()) >= 9
    assert rep.pass_fraction() >= 0.9
    d = rep.to_dict()
    assert d["n_trials"] == 10 and set(d["pass_fraction"]) == {"1", "2"}


@pytest.mark.slow
def test_random_network_inclusion():
    net, data = zero_loss_instance(3, depth=2, width=5, input_dim=3, n=3)
    rep = verify_inclusion(net, data, TrainConfig(lr=0.05, tol=1e-8), trials=10, seed=0)
    assert rep.pass_fraction() >= 0.9


def test_inclusion_needs_trials(toy_net, toy_data):
    with pytest.raises(ValueError):
        verify_inclusion(toy_net, toy_data, trials=0)
