"""Value functions played by the Shapley estimators.

Every game is normalised so that the empty coalition is worth exactly 0:

* prediction:     v(S) = f_S(x) - f_0(x)
* squared error:  v(S) = (y - f_S(x))**2 - (y - f_0(x))**2
* mse:            v(S) = mean over test rows of the squared-error values

``f_0`` is the baseline model (see :class:`BaselinePolicy`). Under the zero
baseline these are the plain prediction game and the ``(y - f_S)**2 - y**2``
error game. The quantity that was subtracted is reported as ``phi0``.

A :class:`Game` may hold many test points at once; they are evaluated
together because one trained coalition model serves them all.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataset import Dataset, Partition, coalition_mask
from .errors import ArgumentError
from .models import CoalitionCache, ModelSpec

GAME_KINDS = ("prediction", "squared_error", "mse")


@dataclass(frozen=True)
class BaselinePolicy:
    kind: str = "zero"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "training_mean", "constant"):
            raise ArgumentError(f"unknown baseline {self.kind!r}")

    def constant(self, train: Dataset) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "training_mean":
            return float(np.mean(train.response))
        return float(self.value)

    @classmethod
    def parse(cls, text: str) -> "BaselinePolicy":
        text = text.strip()
        if text == "zero":
            return cls()
        if text in ("mean", "training_mean"):
            return cls("training_mean")
        if text.startswith("const:"):
            try:
                return cls("constant", float(text[6:]))
            except ValueError:
                raise ArgumentError(f"bad baseline constant in {text!r}") from None
        raise ArgumentError(f"baseline must be zero, mean or const:<c>, got {text!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value} if self.kind == "constant" else {"kind": self.kind}


class Game:
    """A coalitional game over the ``K`` subsets of ``partition``."""

    def __init__(
        self,
        kind: str,
        train: Dataset,
        partition: Partition,
        model: ModelSpec,
        points: np.ndarray,
        responses: np.ndarray | None = None,
        baseline: BaselinePolicy = BaselinePolicy(),
        cache: CoalitionCache | None = None,
        point_ids: Sequence | None = None,
    ):
        if kind not in GAME_KINDS:
            raise ArgumentError(f"unknown game {kind!r}; expected one of {GAME_KINDS}")
        if len(partition.assignment) != train.n:
            raise ArgumentError("partition does not match the training data")
        X = np.asarray(points, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != train.J:
            raise ArgumentError(f"points have {X.shape[1]} features, training data has {train.J}")
        if X.shape[0] == 0:
            raise ArgumentError("a game needs at least one point")
        if kind != "prediction":
            if responses is None:
                raise ArgumentError(f"{kind} game needs observed responses")
            responses = np.asarray(responses, dtype=float).reshape(-1)
            if responses.shape[0] != X.shape[0]:
                raise ArgumentError("one response per point is required")
        self.kind = kind
        self.train = train
        self.partition = partition
        self.model = model
        self.points = X
        self.responses = responses
        self.baseline = baseline
        self.cache = cache if cache is not None else CoalitionCache()
        self.point_ids = list(point_ids) if point_ids is not None else list(range(X.shape[0]))
        self.base_value = baseline.constant(train)
        self._preds: dict[int, np.ndarray] = {}
        base_pred = np.full(X.shape[0], self.base_value)
        self._base_pred = base_pred
        if kind == "prediction":
            self.phi0 = base_pred.copy()
        else:
            err0 = (responses - base_pred) ** 2
            self.phi0 = err0 if kind == "squared_error" else np.array([err0.mean()])

    @property
    def K(self) -> int:
        return self.partition.K

    @property
    def n_outputs(self) -> int:
        """Independent games held: one per point, or one for the mse game."""
        return 1 if self.kind == "mse" else self.points.shape[0]

    def describe(self) -> dict:
        return {
            "game": self.kind,
            "model": self.model.to_dict(),
            "baseline": self.baseline.to_dict(),
            "K": self.K,
            "partition": self.partition.fingerprint(),
            "train": self.train.fingerprint(),
        }

    # -- evaluation ---------------------------------------------------------

    def predictions(self, mask: int) -> np.ndarray:
        """f_S at every point; memoised when the cache is enabled."""
        mask = int(mask)
        if self.cache.enabled:
            hit = self._preds.get(mask)
            if hit is not None:
                return hit
        model = self.cache.get(self.model, self.train, self.partition, mask, self.base_value)
        pred = model.predict_many(self.points)
        if self.cache.enabled:
            self._preds[mask] = pred
        return pred

    def _from_predictions(self, pred: np.ndarray) -> np.ndarray:
        if self.kind == "prediction":
            return pred - self._base_pred
        sq = (self.responses - pred) ** 2 - (self.responses - self._base_pred) ** 2
        return sq if self.kind == "squared_error" else np.array([sq.mean()])

    def values(self, masks: Iterable[int], jobs: int = 1) -> np.ndarray:
        """Game values for each mask, shape ``(len(masks), n_outputs)``.

        Models are trained in a thread pool of ``jobs`` workers; the result
        does not depend on ``jobs``.
        """
        masks = np.asarray(list(masks) if not isinstance(masks, np.ndarray) else masks, dtype=np.int64)
        if masks.size and (masks.min() < 0 or masks.max() >> self.K):
            raise ArgumentError(f"coalition mask outside the {self.K}-subset range")
        out = np.empty((masks.size, self.n_outputs))
        if masks.size == 0:
            return out
        if self.cache.enabled:
            uniq, inverse = np.unique(masks, return_inverse=True)
            todo = [int(m) for m in uniq if int(m) not in self._preds]
            if jobs > 1 and len(todo) > 1:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    list(pool.map(self.predictions, todo))
            rows = np.stack([self._from_predictions(self.predictions(m)) for m in uniq])
            return rows[inverse.reshape(-1)]
        flat = [int(m) for m in masks]
        if jobs > 1 and len(flat) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                preds = list(pool.map(self.predictions, flat))
        else:
            preds = [self.predictions(m) for m in flat]
        for i, pred in enumerate(preds):
            out[i] = self._from_predictions(pred)
        return out

    def value(self, coalition: Iterable[int] | int):
        """v(S) for one coalition; a float for single-output games."""
        mask = (
            int(coalition)
            if isinstance(coalition, (int, np.integer))
            else coalition_mask(coalition, self.K)
        )
        row = self.values([mask])[0]
        return float(row[0]) if row.size == 1 else row

    def grand_value(self):
        return self.value((1 << self.K) - 1)


def prediction_game(train, partition, model, points, baseline=BaselinePolicy(), cache=None, point_ids=None) -> Game:
    return Game("prediction", train, partition, model, points, None, baseline, cache, point_ids)


def squared_error_game(
    train, partition, model, points, responses, baseline=BaselinePolicy(), cache=None, point_ids=None
) -> Game:
    return Game("squared_error", train, partition, model, points, responses, baseline, cache, point_ids)


def mse_game(train, partition, model, test: Dataset, baseline=BaselinePolicy(), cache=None) -> Game:
    return Game("mse", train, partition, model, test.features, test.response, baseline, cache, ["mse"])


def value(game: Game, coalition, cache: CoalitionCache | None = None):
    """Functional form of :meth:`Game.value`; ``cache`` must be the game's own if given."""
    if cache is not None and cache is not game.cache:
        raise ArgumentError("value() got a cache different from the game's")
    return game.value(coalition)


def grand_value(game: Game):
    return game.grand_value()
