import itertools

import numpy as np
import pytest

from conftest import TOY_POINT
from oracles import dividends_bruteforce, mask_to_set, shapley_bruteforce, toy_game
from subset_shapley.dataset import Dataset, Partition, partition_blocks
from subset_shapley.errors import ArgumentError, CapacityError
from subset_shapley.games import prediction_game, squared_error_game
from subset_shapley.models import ModelSpec
from subset_shapley.shapley.exact import build_value_table, exact_shapley, harsanyi

METHODS = ["permutation", "weighted", "harsanyi"]

TOY_PHI = {
    "one_nn": np.array([-19, 11, 14]) / 48,
    "all_mean": np.array([-43, 92, 119]) / 288,
}


def toy_table(toy, model):
    ds, p = toy
    return build_value_table(prediction_game(ds, p, ModelSpec(model), TOY_POINT))


@pytest.mark.parametrize("method", METHODS)
@pytest.mark.parametrize("model", ["one_nn", "all_mean"])
def test_toy_exact(toy, model, method):
    phi = exact_shapley(toy_table(toy, model), method).phi
    assert np.max(np.abs(phi - TOY_PHI[model])) <= 1e-12


@pytest.mark.parametrize("model", ["one_nn", "all_mean"])
def test_toy_matches_bruteforce_oracle(toy, model):
    oracle = [float(v) for v in shapley_bruteforce(toy_game(model), 3)]
    assert np.allclose(exact_shapley(toy_table(toy, model)).phi, oracle, atol=1e-15)


def test_toy_tables(toy):
    # coalition values by mask: {}, {1}, {2}, {1,2}, {3}, {1,3}, {2,3}, {1,2,3}
    one = [0, 1 / 8, 6 / 8, 1 / 8, 7 / 8, 1 / 8, 6 / 8, 1 / 8]
    allm = [0, 1 / 8, 6 / 8, 7 / 16, 7 / 8, 1 / 2, 13 / 16, 7 / 12]
    assert np.allclose(toy_table(toy, "one_nn"), one, atol=1e-15)
    assert np.allclose(toy_table(toy, "all_mean"), allm, atol=1e-15)


@pytest.mark.parametrize(
    "model, coalition, expected",
    [
        ("one_nn", (0,), 1 / 8),
        ("one_nn", (1,), 6 / 8),
        ("one_nn", (0, 1), -6 / 8),
        ("one_nn", (0, 2), -7 / 8),
        ("one_nn", (1, 2), -7 / 8),
        ("one_nn", (0, 1, 2), 7 / 8),
        ("all_mean", (0, 1), -7 / 16),
        ("all_mean", (0, 2), -1 / 2),
        ("all_mean", (1, 2), -13 / 16),
        ("all_mean", (0, 1, 2), 7 / 12),
    ],
)
def test_toy_dividends(toy, model, coalition, expected):
    d = harsanyi(toy_table(toy, model))
    assert d[coalition] == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("model", ["one_nn", "all_mean"])
def test_dividends_match_recursion(toy, model):
    d = harsanyi(toy_table(toy, model))
    oracle = dividends_bruteforce(toy_game(model), 3)
    for S, val in oracle.items():
        assert d[sorted(S)] == pytest.approx(float(val), abs=1e-15)


def test_efficiency_toy(toy):
    for model, total in (("one_nn", 1 / 8), ("all_mean", 7 / 12)):
        for method in METHODS:
            res = exact_shapley(toy_table(toy, model), method)
            assert abs(res.phi.sum() - total) <= 1e-10
            assert res.efficiency_residual() <= 1e-10


def test_additive_game():
    K = 4
    c = np.array([0.5, -1.0, 2.0, 3.5])
    table = np.array([sum(c[k] for k in range(K) if m >> k & 1) for m in range(1 << K)])
    for method in METHODS:
        assert np.allclose(exact_shapley(table, method).phi, c, atol=1e-12)
    d = harsanyi(table)
    for m in range(1, 1 << K):
        expected = c[m.bit_length() - 1] if bin(m).count("1") == 1 else 0.0
        assert d[m] == pytest.approx(expected, abs=1e-12)
    counting = np.array([bin(m).count("1") for m in range(1 << K)], dtype=float)
    assert np.allclose(exact_shapley(counting).phi, 1.0)


def test_random_tables_against_oracle():
    rng = np.random.default_rng(0)
    for K in (1, 2, 4, 5):
        table = rng.normal(size=1 << K)
        table[0] = 0.0
        oracle = shapley_bruteforce(lambda S: table[sum(1 << k for k in S)], K)
        for method in METHODS:
            assert np.allclose(exact_shapley(table, method).phi, oracle, atol=1e-12)


def test_multi_output_tables():
    rng = np.random.default_rng(1)
    table = rng.normal(size=(16, 3))
    table[0] = 0
    for method in METHODS:
        multi = exact_shapley(table, method).phi
        for c in range(3):
            assert np.allclose(multi[:, c], exact_shapley(table[:, c], method).phi, atol=1e-12)


def test_harsanyi_reconstruction():
    rng = np.random.default_rng(2)
    table = rng.normal(size=64)
    assert np.allclose(harsanyi(table).reconstruct(), table, atol=1e-12)


def test_capacity_errors():
    with pytest.raises(CapacityError, match="10"):
        exact_shapley(np.zeros(1 << 11), "permutation")
    with pytest.raises(CapacityError, match="20"):
        exact_shapley(np.zeros(1 << 21))
    with pytest.raises(ArgumentError):
        exact_shapley(np.zeros(6))
    with pytest.raises(ArgumentError):
        exact_shapley(np.zeros(4), "banzhaf")


def test_build_table_capacity():
    ds = Dataset(np.arange(21.0).reshape(-1, 1), np.arange(21.0), np.arange(21), ("x",))
    p = partition_blocks(ds, 21)
    with pytest.raises(CapacityError):
        build_value_table(prediction_game(ds, p, ModelSpec("one_nn"), [[0.0]]))


def test_zero_model_table(sinusoid):
    ds, p = sinusoid
    assert np.all(build_value_table(prediction_game(ds, p, ModelSpec("zero"), ds.features[:1])) == 0)


def test_table_matches_direct_values(sinusoid):
    ds, p = sinusoid
    g = prediction_game(ds, p, ModelSpec("knn", k=3), ds.features[[50]])
    table = build_value_table(g)
    fresh = prediction_game(ds, p, ModelSpec("knn", k=3), ds.features[[50]])
    assert table[0b00111] == fresh.value([0, 1, 2])


def test_own_subset_lowers_error():
    # train = test point, 1-NN: including the point's own subset zeroes the error
    x = np.array([[0.1], [0.5], [0.9]])
    ds = Dataset(x, np.array([1.0, 2.0, 3.0]), np.arange(3), ("x",))
    p = Partition(np.arange(3), ("a", "b", "c"))
    phi = exact_shapley(build_value_table(squared_error_game(ds, p, ModelSpec("one_nn"), x[[1]], [2.0]))).phi
    assert phi[1] < 0


def test_corrupted_duplicate_raises_error():
    # six points, K=3; subset 2 holds a mislabelled copy of the test point
    X = np.array([[0.0], [1.0], [2.0], [2.5], [3.0], [4.0]])
    y = np.array([0.0, 1.0, 9.0, 2.5, 3.0, 4.0])
    ds = Dataset(X, y, np.arange(6), ("x",))
    p = Partition(np.array([0, 0, 1, 1, 2, 2]), ("1", "2", "3"))
    phi = exact_shapley(build_value_table(squared_error_game(ds, p, ModelSpec("one_nn"), [[2.0]], [2.0]))).phi
    assert phi[1] > 0 and phi[1] == phi.max()


def test_to_dict_lists_table(toy):
    d = exact_shapley(toy_table(toy, "one_nn"), "harsanyi").to_dict(["a", "b", "c"])
    assert d["labels"] == ["a", "b", "c"]
    assert d["value_table"][3]["coalition"] == ["a", "b"]
    assert len(d["value_table"]) == 8


def test_permutation_walk_covers_all_orders():
    K = 4
    rng = np.random.default_rng(3)
    table = rng.normal(size=1 << K)
    table[0] = 0
    phi = np.zeros(K)
    for perm in itertools.permutations(range(K)):
        mask = 0
        for k in perm:
            phi[k] += table[mask | 1 << k] - table[mask]
            mask |= 1 << k
    phi /= 24
    assert np.allclose(exact_shapley(table, "permutation").phi, phi, atol=1e-14)
    assert mask_to_set(5) == {0, 2}
