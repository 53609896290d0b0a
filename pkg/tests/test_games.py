from fractions import Fraction

import numpy as np
import pytest

from conftest import TOY_POINT
from subset_shapley.dataset import Dataset, partition_blocks
from subset_shapley.errors import ArgumentError
from subset_shapley.games import BaselinePolicy, Game, grand_value, mse_game, prediction_game, squared_error_game, value
from subset_shapley.models import CoalitionCache, ModelSpec


@pytest.mark.parametrize(
    "model, coalition, expected",
    [
        ("one_nn", [1], Fraction(6, 8)),
        ("one_nn", [0, 1], Fraction(1, 8)),
        ("all_mean", [0, 1], Fraction(7, 16)),
        ("all_mean", [1, 2], Fraction(13, 16)),
        ("all_mean", [0, 1, 2], Fraction(7, 12)),
    ],
)
def test_toy_values(toy, model, coalition, expected):
    ds, p = toy
    g = prediction_game(ds, p, ModelSpec(model), TOY_POINT)
    assert g.value(coalition) == pytest.approx(float(expected), abs=1e-15)


@pytest.mark.parametrize("model, expected", [("one_nn", 1 / 8), ("all_mean", 7 / 12)])
def test_toy_grand_value(toy, model, expected):
    ds, p = toy
    assert grand_value(prediction_game(ds, p, ModelSpec(model), TOY_POINT)) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("kind", ["prediction", "squared_error", "mse"])
@pytest.mark.parametrize("baseline", [BaselinePolicy(), BaselinePolicy("training_mean"), BaselinePolicy("constant", -3.0)])
def test_empty_coalition_is_zero(sinusoid, kind, baseline):
    ds, p = sinusoid
    g = Game(kind, ds, p, ModelSpec("knn", k=3), ds.features[:4], ds.response[:4], baseline)
    assert np.all(g.values([0]) == 0.0)


def test_zero_model_prediction_game_is_zero(sinusoid):
    ds, p = sinusoid
    g = prediction_game(ds, p, ModelSpec("zero"), ds.features[:3])
    assert np.all(g.values(range(32)) == 0.0)


def test_mse_game_is_mean_of_squared_error_games(sinusoid):
    ds, p = sinusoid
    test = ds.take(np.arange(0, 500, 37))
    cache = CoalitionCache()
    sq = squared_error_game(ds, p, ModelSpec("knn", k=3), test.features, test.response, cache=cache)
    mse = mse_game(ds, p, ModelSpec("knn", k=3), test, cache=cache)
    masks = np.arange(32)
    a = sq.values(masks).mean(axis=1)
    b = mse.values(masks)[:, 0]
    assert np.allclose(a, b, rtol=1e-12, atol=1e-15)


def test_squared_error_zero_baseline_matches_definition(toy):
    ds, p = toy
    g = squared_error_game(ds, p, ModelSpec("one_nn"), TOY_POINT, [0.3])
    # f_{2,3}(2/8) = 6/8
    assert g.value([1, 2]) == pytest.approx((0.3 - 0.75) ** 2 - 0.3**2, abs=1e-15)
    assert g.phi0[0] == pytest.approx(0.09)


@pytest.mark.parametrize("spec", ["allnn", "lm"])
def test_baseline_shift_equivariance(sinusoid, spec):
    ds, p = sinusoid
    c = 1.7
    shifted = Dataset(ds.features, ds.response - c, ds.row_ids, ds.feature_names)
    pts = ds.features[::50]
    a = prediction_game(ds, p, ModelSpec.parse(spec), pts, BaselinePolicy("constant", c))
    b = prediction_game(shifted, p, ModelSpec.parse(spec), pts)
    masks = np.arange(1, 32)
    assert np.allclose(a.values(masks), b.values(masks), atol=1e-9)


def test_baseline_parse():
    assert BaselinePolicy.parse("zero") == BaselinePolicy()
    assert BaselinePolicy.parse("mean") == BaselinePolicy("training_mean")
    assert BaselinePolicy.parse("const:2.5") == BaselinePolicy("constant", 2.5)
    for bad in ("median", "const:x"):
        with pytest.raises(ArgumentError):
            BaselinePolicy.parse(bad)


def test_phi0_reports_baseline(sinusoid):
    ds, p = sinusoid
    g = prediction_game(ds, p, ModelSpec("knn", k=3), ds.features[:2], BaselinePolicy("training_mean"))
    assert np.allclose(g.phi0, ds.response.mean())


def test_values_independent_of_jobs(sinusoid):
    ds, p = sinusoid
    masks = np.random.default_rng(0).integers(0, 32, size=60)
    a = prediction_game(ds, p, ModelSpec("knn", k=3), ds.features[:5]).values(masks, jobs=1)
    b = prediction_game(ds, p, ModelSpec("knn", k=3), ds.features[:5]).values(masks, jobs=4)
    assert np.array_equal(a, b)


def test_cache_disabled_same_values(sinusoid):
    ds, p = sinusoid
    masks = [3, 3, 17, 31, 0]
    on = prediction_game(ds, p, ModelSpec("knn", k=3), ds.features[:5])
    off = prediction_game(ds, p, ModelSpec("knn", k=3), ds.features[:5], cache=CoalitionCache(enabled=False))
    assert np.array_equal(on.values(masks), off.values(masks))
    assert off.cache.stats()["trainings"] == 5


def test_game_argument_checks(toy):
    ds, p = toy
    with pytest.raises(ArgumentError):
        Game("absolute", ds, p, ModelSpec("one_nn"), TOY_POINT)
    with pytest.raises(ArgumentError):
        squared_error_game(ds, p, ModelSpec("one_nn"), TOY_POINT, None)
    with pytest.raises(ArgumentError):
        prediction_game(ds, p, ModelSpec("one_nn"), np.zeros((1, 2)))
    with pytest.raises(ArgumentError):
        prediction_game(ds, partition_blocks(ds.take([0, 1]), 2), ModelSpec("one_nn"), TOY_POINT)
    g = prediction_game(ds, p, ModelSpec("one_nn"), TOY_POINT)
    with pytest.raises(ArgumentError):
        g.values([8])
    with pytest.raises(ArgumentError):
        value(g, [0], cache=CoalitionCache())
