"""Budgeted training-data acquisition guided by subset importance.

Three allocation rules over the K subsets of a data pool:

* ``equal``: the same number of rows from every subset;
* ``one``: every row from a single subset. Without an origin, one model per
  subset is trained and each test row is predicted by the model of its own
  subset;
* ``max``: rows proportional to the average error-reducing importance of
  each subset over the L largest predictions.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Dataset, Partition
from .errors import ArgumentError, DegeneratePlanError, InfeasiblePlanError
from .games import BaselinePolicy, squared_error_game
from .models import CoalitionCache, ModelSpec, train
from .shapley.sampling import estimate_mc_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AcquisitionPlan:
    counts: np.ndarray
    budget: int
    strategy: str

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(counts < 0):
            raise ArgumentError("plan counts must be non-negative")
        if int(counts.sum()) != self.budget:
            raise ArgumentError(f"plan sums to {int(counts.sum())}, budget is {self.budget}")
        object.__setattr__(self, "counts", counts)

    @property
    def K(self) -> int:
        return self.counts.shape[0]

    def check_feasible(self, pool_sizes) -> "AcquisitionPlan":
        pool_sizes = np.asarray(pool_sizes)
        if pool_sizes.shape[0] != self.K:
            raise ArgumentError(f"plan has {self.K} subsets, pool has {pool_sizes.shape[0]}")
        short = np.flatnonzero(self.counts > pool_sizes)
        if short.size:
            detail = ", ".join(
                f"subset {k + 1} needs {self.counts[k]} but has {pool_sizes[k]}" for k in short
            )
            raise InfeasiblePlanError(f"{self.strategy} plan is infeasible: {detail}")
        return self

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "budget": self.budget, "counts": self.counts.tolist()}


def _sizes(pool) -> tuple[int, np.ndarray | None]:
    if isinstance(pool, Partition):
        return pool.K, pool.sizes()
    return int(pool), None


def plan_equal(pool: Partition | int, budget: int) -> AcquisitionPlan:
    """floor(N/K) rows per subset; the remainder goes to the lowest indices."""
    K, sizes = _sizes(pool)
    if budget < K:
        raise ArgumentError(f"budget {budget} is smaller than the number of subsets {K}")
    base, rem = divmod(budget, K)
    counts = np.full(K, base)
    counts[:rem] += 1
    plan = AcquisitionPlan(counts, budget, "equal")
    return plan.check_feasible(sizes) if sizes is not None else plan


def plan_one(origin: int, pool: Partition | int, budget: int) -> AcquisitionPlan:
    K, sizes = _sizes(pool)
    if not 0 <= origin < K:
        raise ArgumentError(f"origin {origin} outside 0..{K - 1}")
    counts = np.zeros(K, dtype=np.int64)
    counts[origin] = budget
    plan = AcquisitionPlan(counts, budget, f"one:{origin + 1}")
    return plan.check_feasible(sizes) if sizes is not None else plan


def largest_remainder(weights, total: int) -> np.ndarray:
    """Integer apportionment of ``total`` proportional to ``weights``.

    Leftover units go to the largest fractional parts, ties to the lower
    index.
    """
    w = np.asarray(weights, dtype=float)
    quotas = w / w.sum() * total
    counts = np.floor(quotas).astype(np.int64)
    left = total - int(counts.sum())
    if left:
        frac = quotas - counts
        order = np.lexsort((np.arange(w.size), -frac))
        counts[order[:left]] += 1
    return counts


def plan_max(avg_phi, budget: int, pool: Partition | None = None, label: str = "max") -> AcquisitionPlan:
    """Allocate proportionally to importance; negative importance counts as 0."""
    w = np.clip(np.asarray(avg_phi, dtype=float), 0.0, None)
    if not np.any(w > 0):
        raise DegeneratePlanError("no subset has positive importance; fall back to the equal plan")
    plan = AcquisitionPlan(largest_remainder(w, budget), budget, label)
    if pool is not None:
        if pool.K != w.size:
            raise ArgumentError(f"{w.size} importances for {pool.K} subsets")
        plan.check_feasible(pool.sizes())
    return plan


def average_top_L_shapley(estimates: Sequence, predictions, L: int) -> np.ndarray:
    """Negated mean squared-error Shapley vector over the L largest predictions.

    A negative squared-error value means the subset lowers the error, so the
    negation turns it into an importance weight.
    """
    if L <= 0:
        raise ArgumentError("L must be positive")
    predictions = np.asarray(predictions, dtype=float)
    if len(estimates) != predictions.shape[0]:
        raise ArgumentError("one prediction per estimate is required")
    if L > len(estimates):
        raise ArgumentError(f"L={L} exceeds the {len(estimates)} explained points")
    top = np.argsort(-predictions, kind="stable")[:L]
    return -np.mean(np.stack([np.asarray(estimates[i].phi, dtype=float) for i in top]), axis=0)


def importance_from_initial(
    initial_train: Dataset,
    initial_partition: Partition,
    initial_test: Dataset,
    model: ModelSpec,
    L: int,
    M: int = 100,
    seed: int = 0,
    mode: str = "per_subset",
    cache: CoalitionCache | None = None,
) -> np.ndarray:
    """Importance weights for ``max``: squared-error Shapley values of the
    ``L`` points of ``initial_test`` with the largest predictions of the model
    trained on all of ``initial_train``."""
    if L > initial_test.n:
        raise ArgumentError(f"L={L} exceeds the {initial_test.n} initial test points")
    cache = cache if cache is not None else CoalitionCache()
    full = (1 << initial_partition.K) - 1
    grand = cache.get(model, initial_train, initial_partition, full)
    preds = grand.predict_many(initial_test.features)
    top = np.argsort(-preds, kind="stable")[:L]
    game = squared_error_game(
        initial_train,
        initial_partition,
        model,
        initial_test.features[top],
        initial_test.response[top],
        BaselinePolicy(),
        cache,
        point_ids=initial_test.row_ids[top].tolist(),
    )
    estimates = estimate_mc_batch(game, M, seed, mode)
    return average_top_L_shapley(estimates, preds[top], L)


# ------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class Strategy:
    """``kind`` is equal, one or max. ``origin`` pins ``one`` to a subset;
    ``L`` and ``weights`` parameterise ``max``."""

    kind: str
    origin: int | None = None
    L: int | None = None
    weights: tuple[float, ...] | None = None

    @property
    def name(self) -> str:
        if self.kind == "one" and self.origin is not None:
            return f"one:{self.origin + 1}"
        if self.kind == "max" and self.L is not None:
            return f"max:{self.L}"
        return self.kind

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        """``equal``, ``one``, ``one:<k>`` (1-based subset) or ``max:<L>``."""
        head, _, arg = text.strip().partition(":")
        try:
            if head == "equal" and not arg:
                return cls("equal")
            if head == "one":
                return cls("one", origin=int(arg) - 1 if arg else None)
            if head == "max" and arg:
                return cls("max", L=int(arg))
        except ValueError:
            pass
        raise ArgumentError(f"strategy must be equal, one, one:<k> or max:<L>, got {text!r}")


@dataclass
class StrategyComparison:
    rows: list[dict] = field(default_factory=list)
    per_subset: list[dict] = field(default_factory=list)
    plans: dict[str, list[dict]] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def mean_relative(self) -> dict[str, float]:
        out: dict[str, list[float]] = {}
        for r in self.rows:
            out.setdefault(r["strategy"], []).append(r["relative_mse"])
        return {k: float(np.mean(v)) for k, v in out.items()}

    def mean_mse(self) -> dict[str, float]:
        out: dict[str, list[float]] = {}
        for r in self.rows:
            out.setdefault(r["strategy"], []).append(r["mse"])
        return {k: float(np.mean(v)) for k, v in out.items()}

    def write_csv(self, path, per_subset_path=None) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, ["strategy", "repeat", "mse", "relative_mse"])
            w.writeheader()
            for r in self.rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        if per_subset_path is not None:
            with open(per_subset_path, "w", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, ["strategy", "subset", "n_target", "mse"])
                w.writeheader()
                for r in self.per_subset:
                    w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def sample_plan(plan: AcquisitionPlan, pool: Dataset, partition: Partition, rng: np.random.Generator) -> Dataset:
    """Stratified draw without replacement, exactly ``plan.counts`` per subset."""
    plan.check_feasible(partition.sizes())
    rows = [
        rng.choice(partition.members(k), size=int(c), replace=False)
        for k, c in enumerate(plan.counts)
        if c > 0
    ]
    return pool.take(np.sort(np.concatenate(rows)))


def _resolve_plans(strategy: Strategy, partition: Partition, budget: int) -> list[AcquisitionPlan]:
    if strategy.kind == "equal":
        return [plan_equal(partition, budget)]
    if strategy.kind == "one":
        if strategy.origin is not None:
            return [plan_one(strategy.origin, partition, budget)]
        return [plan_one(k, partition, budget) for k in range(partition.K)]
    if strategy.kind == "max":
        if strategy.weights is None:
            raise ArgumentError(f"{strategy.name} needs importance weights (see importance_from_initial)")
        return [plan_max(strategy.weights, budget, partition, strategy.name)]
    raise ArgumentError(f"unknown strategy {strategy.kind!r}")


def top_response_rows(test: Dataset, groups=None, fraction: float | None = None, per_group: int | None = None) -> np.ndarray:
    """Indices of the largest true responses, overall or per group."""
    y = test.response
    if per_group is not None:
        groups = np.asarray(groups)
        out = []
        for g in np.unique(groups):
            idx = np.flatnonzero(groups == g)
            out.append(idx[np.argsort(-y[idx], kind="stable")[:per_group]])
        return np.sort(np.concatenate(out))
    fraction = 0.1 if fraction is None else fraction
    n = max(1, int(round(fraction * test.n)))
    return np.sort(np.argsort(-y, kind="stable")[:n])


def evaluate_strategies(
    pool: Dataset,
    pool_partition: Partition,
    test: Dataset,
    test_groups,
    strategies: Sequence[Strategy],
    model: ModelSpec,
    budget: int,
    repeats: int = 1,
    seed: int = 0,
    target_rows=None,
) -> StrategyComparison:
    """Train on data acquired by each strategy and compare test MSE.

    ``test_groups`` gives the pool subset index each test row originates
    from. MSE is measured on ``target_rows`` (all rows by default), and each
    repeat's MSE is divided by the equal strategy's MSE in that repeat.
    Repeat ``r`` draws from ``default_rng([seed, r])``.
    """
    if repeats < 1:
        raise ArgumentError("repeats must be >= 1")
    test_groups = np.asarray(test_groups, dtype=np.int64)
    if test_groups.shape[0] != test.n:
        raise ArgumentError("one group per test row is required")
    target = np.arange(test.n) if target_rows is None else np.asarray(target_rows, dtype=np.int64)
    strategies = list(strategies)
    if not any(s.kind == "equal" for s in strategies):
        strategies.insert(0, Strategy("equal"))
    result = StrategyComparison()
    plans: dict[str, list[AcquisitionPlan]] = {}
    for s in strategies:
        try:
            plans[s.name] = _resolve_plans(s, pool_partition, budget)
            result.plans[s.name] = [p.to_dict() for p in plans[s.name]]
        except (InfeasiblePlanError, DegeneratePlanError, ArgumentError) as exc:
            if s.kind == "equal":
                raise
            log.warning("strategy %s skipped: %s", s.name, exc)
            result.errors[s.name] = str(exc)

    Xt, yt, gt = test.features[target], test.response[target], test_groups[target]
    sq_sums: dict[str, np.ndarray] = {name: np.zeros(pool_partition.K) for name in plans}
    counts = np.bincount(gt, minlength=pool_partition.K)
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        mse = {}
        for s in strategies:
            if s.name not in plans:
                continue
            per_origin = s.kind == "one" and s.origin is None
            pred = np.empty(target.size)
            if per_origin:
                for k, plan in enumerate(plans[s.name]):
                    fitted = train(model, sample_plan(plan, pool, pool_partition, rng))
                    rows = np.flatnonzero(gt == k)
                    if rows.size:
                        pred[rows] = fitted.predict_many(Xt[rows])
            else:
                fitted = train(model, sample_plan(plans[s.name][0], pool, pool_partition, rng))
                pred = fitted.predict_many(Xt)
            err = (yt - pred) ** 2
            mse[s.name] = float(err.mean())
            sq_sums[s.name] += np.bincount(gt, weights=err, minlength=pool_partition.K)
        for name, m in mse.items():
            result.rows.append(
                {"strategy": name, "repeat": r, "mse": m, "relative_mse": m / mse["equal"]}
            )
    for name, sums in sq_sums.items():
        for k in range(pool_partition.K):
            if counts[k]:
                result.per_subset.append(
                    {
                        "strategy": name,
                        "subset": pool_partition.labels[k],
                        "n_target": int(counts[k]),
                        "mse": float(sums[k] / (counts[k] * repeats)),
                    }
                )
    return result
