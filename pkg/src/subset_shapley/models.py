"""Retrainable regressors and the coalition-keyed model cache."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import pickle
import threading
from concurrent.futures import Future
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .dataset import Dataset, Partition, coalition_data, coalition_mask
from .errors import ArgumentError

log = logging.getLogger(__name__)

KINDS = ("one_nn", "knn", "all_mean", "linear", "forest", "zero")
CACHE_DIR_ENV = "SUBSET_SHAPLEY_CACHE_DIR"


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    k: int | None = None
    n_trees: int | None = None
    max_leaf_nodes: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "knn":
            if self.k is None or self.k < 1:
                raise ArgumentError("knn needs k >= 1")
        elif self.k is not None:
            raise ArgumentError(f"k is only valid for knn, not {self.kind}")
        if self.kind == "forest":
            object.__setattr__(self, "n_trees", 100 if self.n_trees is None else self.n_trees)
            object.__setattr__(
                self, "max_leaf_nodes", 30 if self.max_leaf_nodes is None else self.max_leaf_nodes
            )
            object.__setattr__(self, "seed", 0 if self.seed is None else self.seed)
            if self.n_trees < 1:
                raise ArgumentError("forest needs n_trees >= 1")
            if self.max_leaf_nodes < 2:
                raise ArgumentError("forest needs max_leaf_nodes >= 2")
        elif self.n_trees is not None or self.max_leaf_nodes is not None or self.seed is not None:
            raise ArgumentError(f"forest parameters are not valid for {self.kind}")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        unknown = set(d) - {"kind", "k", "n_trees", "max_leaf_nodes", "seed"}
        if unknown:
            raise ArgumentError(f"unknown model field(s): {sorted(unknown)}")
        if "kind" not in d:
            raise ArgumentError("model spec needs a 'kind'")
        return cls(**d)

    @classmethod
    def parse(cls, text: str) -> "ModelSpec":
        """Accept JSON (``{"kind":"knn","k":10}``) or the short forms
        ``knn:10``, ``forest:100:30[:seed]``, ``one_nn``, ``1nn``, ``allnn``."""
        text = text.strip()
        if text.startswith("{"):
            try:
                return cls.from_dict(json.loads(text))
            except json.JSONDecodeError as exc:
                raise ArgumentError(f"bad model JSON: {exc}") from None
        head, *rest = text.split(":")
        head = {"1nn": "one_nn", "allnn": "all_mean", "lm": "linear"}.get(head.lower(), head.lower())
        try:
            nums = [int(r) for r in rest]
        except ValueError:
            raise ArgumentError(f"bad model spec {text!r}") from None
        if head == "knn":
            if len(nums) != 1:
                raise ArgumentError("knn needs one parameter, e.g. knn:10")
            return cls("knn", k=nums[0])
        if head == "forest":
            if len(nums) > 3:
                raise ArgumentError("forest takes at most n_trees:max_leaf_nodes:seed")
            return cls("forest", *([None] + nums + [None] * (3 - len(nums))))
        if nums:
            raise ArgumentError(f"{head} takes no parameters")
        return cls(head)


# ------------------------------------------------------------------- models


class TrainedModel:
    """A fitted regressor; immutable once built."""

    n_train: int = 0

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        return float(self.predict_many(x.reshape(1, -1))[0])

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.J:
            raise ArgumentError(f"expected {self.J} features, got {X.shape[1]}")
        return X


class ConstantModel(TrainedModel):
    def __init__(self, value: float, J: int, n_train: int = 0):
        self.value = float(value)
        self.J = J
        self.n_train = n_train

    def predict_many(self, X):
        X = self._check(X)
        return np.full(X.shape[0], self.value)


class NeighborsModel(TrainedModel):
    """k nearest neighbours under Euclidean distance; ``k=None`` averages all rows.

    Training rows are held in row-id order and the neighbour sort is stable,
    so distance ties resolve to the smallest row id.
    """

    def __init__(self, X, y, k: int | None):
        self.X, self.y, self.k = X, y, k
        self.J = X.shape[1]
        self.n_train = X.shape[0]
        self._mean = float(np.mean(y))

    def predict_many(self, X):
        X = self._check(X)
        n = self.n_train
        if self.k is None or self.k >= n:
            return np.full(X.shape[0], self._mean)
        out = np.empty(X.shape[0])
        # chunked to bound the distance matrix size
        step = max(1, 2_000_000 // max(n, 1))
        for s in range(0, X.shape[0], step):
            d = ((X[s : s + step, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            if self.k == 1:
                out[s : s + step] = self.y[np.argmin(d, axis=1)]
            else:
                idx = np.argsort(d, axis=1, kind="stable")[:, : self.k]
                out[s : s + step] = self.y[idx].mean(axis=1)
        return out


class LinearModel(TrainedModel):
    def __init__(self, intercept: float, coef: np.ndarray, n_train: int):
        self.intercept = float(intercept)
        self.coef = coef
        self.J = coef.shape[0]
        self.n_train = n_train

    def predict_many(self, X):
        X = self._check(X)
        return self.intercept + X @ self.coef


def _fit_linear(X: np.ndarray, y: np.ndarray) -> LinearModel:
    A = np.hstack([np.ones((X.shape[0], 1)), X])
    gram = A.T @ A
    rhs = A.T @ y
    if X.shape[0] < A.shape[1] or np.linalg.cond(gram) >= 1e12:
        # singular coalition: tiny ridge, scaled to the problem
        lam = 1e-10 * max(np.trace(gram), 1.0)
        gram = gram + lam * np.eye(gram.shape[0])
    beta = np.linalg.solve(gram, rhs)
    return LinearModel(beta[0], beta[1:], X.shape[0])


# -------------------------------------------------------------- CART forest


class _Tree:
    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = X[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active[rows] = self.feature[node[rows]] >= 0
        return self.value[node]


def _best_split(X, y, idx, features):
    """Largest reduction in within-node squared error over the candidate features."""
    yy = y[idx]
    n = idx.size
    total = yy.sum()
    parent = total * total / n
    best = (0.0, -1, 0.0)
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        ys = yy[order]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        left_sum = np.cumsum(ys)[:-1]
        n_left = np.arange(1, n)
        right_sum = total - left_sum
        gain = left_sum**2 / n_left + right_sum**2 / (n - n_left) - parent
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0] * (1 + 1e-12) + 1e-15:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if thr >= xs[i + 1]:  # adjacent floats
                thr = xs[i]
            best = (float(gain[i]), int(f), thr)
    return best


def _grow_tree(X, y, rng: np.random.Generator, mtry: int, max_leaves: int) -> _Tree:
    """Best-first growth until ``max_leaves`` leaves or no node can be split."""
    J = X.shape[1]
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [float(y.mean())]
    node_rows = {0: np.arange(X.shape[0])}
    frontier: dict[int, tuple] = {}

    def consider(node):
        rows = node_rows[node]
        if rows.size < 2 or np.all(y[rows] == y[rows[0]]):
            return
        feats = rng.choice(J, size=mtry, replace=False) if mtry < J else np.arange(J)
        gain, f, thr = _best_split(X, y, rows, feats)
        if f >= 0 and gain > 0:
            frontier[node] = (gain, f, thr)

    consider(0)
    leaves = 1
    while leaves < max_leaves and frontier:
        node = max(frontier, key=lambda nd: (frontier[nd][0], -nd))
        _, f, thr = frontier.pop(node)
        rows = node_rows.pop(node)
        mask = X[rows, f] <= thr
        for child_rows in (rows[mask], rows[~mask]):
            node_rows[len(feature)] = child_rows
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(y[child_rows].mean()))
        lc, rc = len(feature) - 2, len(feature) - 1
        feature[node], threshold[node], left[node], right[node] = f, thr, lc, rc
        leaves += 1
        consider(lc)
        consider(rc)
    return _Tree(feature, threshold, left, right, value)


class ForestModel(TrainedModel):
    def __init__(self, trees: list[_Tree], J: int, n_train: int):
        self.trees = trees
        self.J = J
        self.n_train = n_train

    def predict_many(self, X):
        X = self._check(X)
        acc = np.zeros(X.shape[0])
        for tree in self.trees:
            acc += tree.predict(X)
        return acc / len(self.trees)


def _fit_forest(spec: ModelSpec, X, y) -> ForestModel:
    n, J = X.shape
    mtry = max(1, math.ceil(J / 3))
    trees = []
    for child in np.random.SeedSequence(spec.seed).spawn(spec.n_trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X[boot], y[boot], rng, mtry, spec.max_leaf_nodes))
    return ForestModel(trees, J, n)


def train(spec: ModelSpec, ds: Dataset, baseline: float = 0.0) -> TrainedModel:
    """Fit ``spec`` on ``ds``. With no rows the model predicts ``baseline`` everywhere."""
    J = ds.J
    if ds.n == 0 or spec.kind == "zero":
        value = baseline if ds.n == 0 else 0.0
        return ConstantModel(value, J, ds.n)
    order = np.argsort(ds.row_ids, kind="stable")
    X, y = ds.features[order], ds.response[order]
    if spec.kind == "one_nn":
        return NeighborsModel(X, y, 1)
    if spec.kind == "knn":
        return NeighborsModel(X, y, spec.k)
    if spec.kind == "all_mean":
        return NeighborsModel(X, y, None)
    if spec.kind == "linear":
        return _fit_linear(X, y)
    return _fit_forest(spec, X, y)


# ------------------------------------------------------------ model cache


class CoalitionCache:
    """Trained models keyed by ``(spec, dataset+partition fingerprint, baseline, mask)``.

    Concurrent misses on one key train once; the other callers wait for that
    result. With ``enabled=False`` every request trains afresh (useful to
    measure what caching saves). ``directory`` adds a pickle store on disk;
    it defaults to ``$SUBSET_SHAPLEY_CACHE_DIR`` when that is set.
    """

    def __init__(self, enabled: bool = True, directory: str | os.PathLike | None = None):
        self.enabled = enabled
        if directory is None:
            directory = os.environ.get(CACHE_DIR_ENV) or None
        self.directory = Path(directory) if directory else None
        self._store: dict[tuple, Future] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.disk_hits = 0
        self.trainings = 0

    def __len__(self):
        return len(self._store)

    def keys(self):
        return list(self._store)

    def coalitions(self, spec: ModelSpec, ds: Dataset, p: Partition) -> list[int]:
        """Distinct coalition masks trained for this model, data and partition."""
        fd, fp = ds.fingerprint(), p.fingerprint()
        with self._lock:
            masks = {k[4] for k in self._store if k[0] == spec and k[1] == fd and k[2] == fp}
        return sorted(masks)

    def stats(self) -> dict:
        return {
            "entries": len(self._store),
            "hits": self.hits,
            "misses": self.misses,
            "trainings": self.trainings,
            "disk_hits": self.disk_hits,
        }

    def get(self, spec: ModelSpec, ds: Dataset, p: Partition, mask: int, baseline: float = 0.0):
        if not self.enabled:
            with self._lock:
                self.misses += 1
                self.trainings += 1
            return train(spec, coalition_data(ds, p, mask), baseline)
        key = (spec, ds.fingerprint(), p.fingerprint(), float(baseline) if mask == 0 else 0.0, mask)
        with self._lock:
            fut = self._store.get(key)
            if fut is not None:
                self.hits += 1
                owner = False
            else:
                self.misses += 1
                fut = Future()
                self._store[key] = fut
                owner = True
        if not owner:
            return fut.result()
        try:
            model = self._load(key)
            if model is None:
                model = train(spec, coalition_data(ds, p, mask), baseline)
                with self._lock:
                    self.trainings += 1
                self._save(key, model)
            fut.set_result(model)
        except BaseException as exc:
            fut.set_exception(exc)
            with self._lock:
                self._store.pop(key, None)
            raise
        return model

    def _path(self, key) -> Path:
        digest = hashlib.sha256(repr((key[0].to_json(),) + key[1:]).encode()).hexdigest()
        return self.directory / f"{digest}.pkl"

    def _load(self, key):
        if self.directory is None:
            return None
        path = self._path(key)
        if not path.exists():
            return None
        try:
            with open(path, "rb") as fh:
                model = pickle.load(fh)
        except (OSError, pickle.UnpicklingError, EOFError):
            log.warning("ignoring unreadable cache file %s", path)
            return None
        with self._lock:
            self.disk_hits += 1
        return model

    def _save(self, key, model):
        if self.directory is None:
            return
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = self._path(key).with_suffix(f".{threading.get_ident()}.tmp")
        with open(tmp, "wb") as fh:
            pickle.dump(model, fh)
        os.replace(tmp, self._path(key))


def train_cached(
    cache: CoalitionCache,
    spec: ModelSpec,
    ds: Dataset,
    p: Partition,
    coalition: Iterable[int] | int,
    baseline: float = 0.0,
) -> TrainedModel:
    if p.K > 64:
        raise ArgumentError("coalition cache supports at most 64 subsets")
    mask = int(coalition) if isinstance(coalition, (int, np.integer)) else coalition_mask(coalition, p.K)
    return cache.get(spec, ds, p, mask, baseline)
