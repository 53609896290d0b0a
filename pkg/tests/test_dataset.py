import numpy as np
import pytest

from subset_shapley.dataset import (
    BiasScenario,
    Dataset,
    Partition,
    SinusoidConfig,
    center_response,
    coalition_data,
    coalition_mask,
    corrupt_response,
    generate_bias,
    generate_sinusoid,
    load_csv,
    load_partition_csv,
    mask_members,
    partition_blocks,
    partition_category,
    partition_quantiles,
)
from subset_shapley.errors import (
    ArgumentError,
    CardinalityError,
    EmptyInputError,
    ParseError,
    SchemaError,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def _ds(n, J=1, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(n, J)), rng.normal(size=n), np.arange(n), tuple(f"f{j}" for j in range(J)))


# ----------------------------------------------------------------- loading


def test_load_three_rows(tmp_path):
    ds = load_csv(write(tmp_path, "t,x,y\n1,0.5,2\n2,0.25,3\n3,1e-3,4\n"), "y")
    assert (ds.n, ds.J) == (3, 2)
    assert ds.feature_names == ("t", "x")
    assert ds.response.tolist() == [2, 3, 4]
    assert ds.row_ids.tolist() == [0, 1, 2]


def test_parse_error_names_row(tmp_path):
    rows = "".join(f"{i},{i}\n" for i in range(4)) + "5,oops\n"
    with pytest.raises(ParseError, match="row 5"):
        load_csv(write(tmp_path, "x,y\n" + rows), "y")


def test_bike_shaped_columns(tmp_path):
    header = "season,weekday,weathersit,temperature,humidity,count\n"
    ds = load_csv(write(tmp_path, header + "1,0,2,0.3,0.8,985\n2,6,1,0.5,0.4,4000\n"), "count")
    assert ds.J == 5
    assert ds.feature_names == ("season", "weekday", "weathersit", "temperature", "humidity")


@pytest.mark.parametrize(
    "text, err",
    [
        ("", EmptyInputError),
        ("x,y\n", EmptyInputError),
        ("x,z\n1,2\n", SchemaError),
        ("x,y\n1,nan\n", ParseError),
        ("x,y\n1,inf\n", ParseError),
        ("x,y\n1\n", ParseError),
    ],
)
def test_load_errors(tmp_path, text, err):
    with pytest.raises(err):
        load_csv(write(tmp_path, text), "y")


def test_row_id_and_aux_columns(tmp_path):
    ds = load_csv(write(tmp_path, "row_id,g,x,y\n10,A,1,2\n11,B,3,4\n"), "y", aux_cols=["g"])
    assert ds.row_ids.tolist() == [10, 11]
    assert ds.feature_names == ("x",)
    assert ds.aux["g"].tolist() == ["A", "B"]


def test_duplicate_row_ids_rejected(tmp_path):
    with pytest.raises(ArgumentError):
        load_csv(write(tmp_path, "row_id,x,y\n1,1,2\n1,3,4\n"), "y")


def test_csv_round_trip(tmp_path):
    ds, part = generate_bias(BiasScenario("c", per_group=5, seed=3))
    ds.to_csv(tmp_path / "b.csv")
    part.to_csv(tmp_path / "p.csv", ds)
    back = load_csv(tmp_path / "b.csv", "y", aux_cols=["x_D"])
    assert back.equals(ds)
    p2 = load_partition_csv(tmp_path / "p.csv", back)
    assert np.array_equal(p2.assignment, part.assignment)
    assert p2.labels == part.labels


def test_dataset_is_immutable():
    ds = _ds(3)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 1.0


# -------------------------------------------------------------- partitions


@pytest.mark.parametrize("n, K, sizes", [(400, 4, [100] * 4), (5, 5, [1] * 5), (10, 3, [4, 3, 3])])
def test_blocks(n, K, sizes):
    p = partition_blocks(_ds(n), K)
    assert p.sizes().tolist() == sizes
    assert np.all(np.diff(p.assignment) >= 0)


def test_blocks_rejects_more_subsets_than_rows():
    with pytest.raises(ArgumentError):
        partition_blocks(_ds(3), 4)


def test_quantiles_order():
    ds = Dataset(np.array([[3.0], [1.0], [2.0]]), np.zeros(3), np.arange(3), ("v",))
    assert partition_quantiles(ds, "v", 3).assignment.tolist() == [2, 0, 1]


def test_quantiles_temperature_blocks():
    rng = np.random.default_rng(1)
    ds = Dataset(rng.uniform(0, 1, size=(700, 2)), rng.normal(size=700), np.arange(700), ("temperature", "h"))
    p = partition_quantiles(ds, "temperature", 7)
    assert p.sizes().tolist() == [100] * 7
    t = ds.column("temperature")
    for k in range(6):
        assert t[p.members(k)].max() <= t[p.members(k + 1)].min()


def test_quantiles_single_subset():
    ds = _ds(20)
    p = partition_quantiles(ds, "f0", 1)
    assert coalition_data(ds, p, [0]).equals(ds)


def test_category_bias_groups():
    ds, _ = generate_bias(BiasScenario("a"))
    p = partition_category(ds, "x_D")
    assert p.K == 3 and p.sizes().tolist() == [100, 100, 100]


def test_category_constant_and_many():
    ds = _ds(40)
    const = Dataset(ds.features, ds.response, ds.row_ids, ds.feature_names, {"c": np.ones(40)})
    assert partition_category(const, "c").K == 1
    states = Dataset(ds.features, ds.response, ds.row_ids, ds.feature_names, {"s": np.arange(40) % 33})
    assert partition_category(states, "s").K == 33
    many = Dataset(_ds(70).features, _ds(70).response, np.arange(70), ("f0",), {"s": np.arange(70)})
    with pytest.raises(CardinalityError):
        partition_category(many, "s")


def test_partition_rejects_empty_subset():
    with pytest.raises(ArgumentError):
        Partition(np.array([0, 2, 2]), ("a", "b", "c"))


def test_partition_csv_requires_all_rows(tmp_path):
    ds = _ds(3)
    with pytest.raises(SchemaError):
        load_partition_csv(write(tmp_path, "row_id,subset\n0,1\n1,1\n", "p.csv"), ds)


# -------------------------------------------------------------- coalitions


def test_coalition_data_toy(toy):
    ds, p = toy
    sub = coalition_data(ds, p, [1, 2])
    assert sub.features[:, 0].tolist() == [6 / 8, 7 / 8]
    assert coalition_data(ds, p, []).n == 0
    assert coalition_data(ds, p, (1 << p.K) - 1).equals(ds)


def test_mask_helpers():
    assert coalition_mask([0, 2], 3) == 5
    assert mask_members(5) == [0, 2]
    with pytest.raises(ArgumentError):
        coalition_mask([3], 3)


# -------------------------------------------------------------- generators


def test_sinusoid_defaults():
    ds, p = generate_sinusoid(SinusoidConfig(seed=7))
    assert ds.n == 500 and p.K == 5
    assert p.sizes().tolist() == [100] * 5
    a, b = coalition_data(ds, p, [3]), coalition_data(ds, p, [4])
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.response, b.response)
    assert "t" in ds.aux and "t" not in ds.feature_names


def test_sinusoid_noiseless():
    cfg = SinusoidConfig(feature_noise_sd=0, response_noise_sd=0, omegas=(7.0, 11.0, 13.0, 17.0), seed=1)
    ds, _ = generate_sinusoid(cfg)
    X = ds.features
    assert np.array_equal(ds.response, X[:, 0] * X[:, 1] + X[:, 2] * X[:, 3])


def test_generators_deterministic():
    a, _ = generate_sinusoid(SinusoidConfig(seed=3))
    b, _ = generate_sinusoid(SinusoidConfig(seed=3))
    assert a.equals(b)
    c, _ = generate_bias(BiasScenario("c", seed=3))
    d, _ = generate_bias(BiasScenario("c", seed=3))
    assert c.equals(d)


def test_bias_scenario_a_independent():
    ds, _ = generate_bias(BiasScenario("a", per_group=3334, seed=5))
    xd = ds.aux["x_D"]
    for j in range(ds.J):
        assert abs(np.corrcoef(ds.features[:, j], xd)[0, 1]) < 0.05


def test_bias_scenario_b_group_means():
    ds, p = generate_bias(BiasScenario("b", per_group=2000, seed=5))
    means = [ds.response[p.members(k)].mean() for k in range(3)]
    assert np.allclose(means, [-1, 0, 1], atol=0.1)
    for j in range(ds.J):
        assert abs(np.corrcoef(ds.features[:, j], ds.aux["x_D"])[0, 1]) < 0.05


def test_bias_scenario_c_feature_shift():
    ds, p = generate_bias(BiasScenario("c", per_group=2000, seed=5))
    means = [ds.features[p.members(k), 2].mean() for k in range(3)]
    assert np.allclose(means, [-2, 0, 2], atol=0.1)
    assert "x_D" not in ds.feature_names


def test_bias_bad_scenario():
    with pytest.raises(ArgumentError):
        BiasScenario("d")
    with pytest.raises(ArgumentError):
        SinusoidConfig.from_dict({"n_point": 3})


# -------------------------------------------------------------- transforms


def test_corrupt_two_rows():
    ds = _ds(10)
    bad = corrupt_response(ds, [3, 7], [100.0, -100.0])
    diff = np.flatnonzero(bad.response != ds.response)
    assert diff.tolist() == [3, 7]
    assert corrupt_response(ds, [], []).equals(ds)
    back = corrupt_response(bad, [3, 7], [ds.response[3], ds.response[7]])
    assert back.equals(ds)


def test_center_response():
    ds = Dataset(np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]), np.arange(3), ("x",))
    c, off = center_response(ds)
    assert off == 2.0 and c.response.tolist() == [-1.0, 0.0, 1.0]
    _, off2 = center_response(c)
    assert abs(off2) < 1e-15
    bike = Dataset(np.zeros((2, 1)), np.array([3405.762 - 1, 3405.762 + 1]), np.arange(2), ("x",))
    assert center_response(bike)[1] == pytest.approx(3405.762)
