"""Feature Shapley values and the combined feature-by-subset values.

Features are assumed mutually independent: absent features are filled in
from a background row drawn uniformly from ``background``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..dataset import Dataset, Partition
from ..errors import ArgumentError
from ..games import BaselinePolicy
from ..models import CoalitionCache, ModelSpec, TrainedModel
from .sampling import sample_permutations


@dataclass
class FeatureEstimate:
    phi: np.ndarray
    se: np.ndarray
    M: int
    seed: int
    feature_names: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "features": list(self.feature_names),
            "phi": self.phi.tolist(),
            "se": _nan_to_none(self.se),
            "M": self.M,
            "seed": self.seed,
        }


@dataclass
class CombinedEstimate:
    """``phi[k, j]``: joint importance of subset ``k`` and feature ``j``."""

    phi: np.ndarray
    se: np.ndarray
    M: int
    seed: int
    subset_labels: tuple[str, ...] = ()
    feature_names: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "rows": list(self.subset_labels),
            "columns": list(self.feature_names),
            "phi": self.phi.tolist(),
            "se": [_nan_to_none(r) for r in self.se],
            "M": self.M,
            "seed": self.seed,
        }


def _nan_to_none(a):
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(a).ravel()]


def _background_matrix(background) -> np.ndarray:
    Z = background.features if isinstance(background, Dataset) else np.asarray(background, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(1, -1)
    if Z.shape[0] == 0:
        raise ArgumentError("background data must not be empty")
    return Z


def _feature_draws(rng: np.random.Generator, M: int, J: int, n_background: int):
    perms = sample_permutations(rng, (M,), J)
    z_idx = rng.integers(0, n_background, size=M)
    return perms, z_idx


def _composites(x: np.ndarray, Z: np.ndarray, perms: np.ndarray, z_idx: np.ndarray) -> np.ndarray:
    """``out[m, b]`` takes ``x`` on the first ``b`` features of ordering ``m``
    and the background row elsewhere; shape ``(M, J + 1, J)``."""
    M, J = perms.shape
    pos = np.argsort(perms, axis=1)
    from_x = pos[:, None, :] < np.arange(J + 1)[None, :, None]
    return np.where(from_x, x[None, None, :], Z[z_idx][:, None, :])


def _mean_se(contrib: np.ndarray):
    M = contrib.shape[0]
    phi = contrib.mean(axis=0)
    se = contrib.std(axis=0, ddof=1) / math.sqrt(M) if M > 1 else np.full(phi.shape, np.nan)
    return phi, se


def feature_shapley_mc(
    model: TrainedModel,
    background,
    x,
    M: int,
    seed: int = 0,
    feature_names=(),
) -> FeatureEstimate:
    """Sampling estimate of each feature's contribution to ``model(x)``.

    Each iteration draws one feature ordering and one background row ``z``
    and credits every feature with
    ``f(x on Pre+j, z elsewhere) - f(x on Pre, z elsewhere)``.
    """
    if M < 1:
        raise ArgumentError("M must be >= 1")
    Z = _background_matrix(background)
    x = np.asarray(x, dtype=float).reshape(-1)
    J = x.shape[0]
    if Z.shape[1] != J or model.J != J:
        raise ArgumentError(f"dimension mismatch: x has {J} features, background {Z.shape[1]}, model {model.J}")
    rng = np.random.default_rng(seed)
    perms, z_idx = _feature_draws(rng, M, J, Z.shape[0])
    C = _composites(x, Z, perms, z_idx)
    F = model.predict_many(C.reshape(-1, J)).reshape(M, J + 1)
    pos = np.argsort(perms, axis=1)
    contrib = np.take_along_axis(F, pos + 1, axis=1) - np.take_along_axis(F, pos, axis=1)
    phi, se = _mean_se(contrib)
    if isinstance(background, Dataset) and not feature_names:
        feature_names = background.feature_names
    return FeatureEstimate(phi, se, M, seed, tuple(feature_names))


def combined_shapley_mc(
    spec: ModelSpec,
    train: Dataset,
    partition: Partition,
    background,
    x,
    M: int,
    seed: int = 0,
    baseline: BaselinePolicy = BaselinePolicy(),
    cache: CoalitionCache | None = None,
) -> CombinedEstimate:
    """Joint subset-and-feature importance, a ``K x J`` matrix.

    Each iteration draws a feature ordering and background row (in the same
    stream order as :func:`feature_shapley_mc`), then a subset ordering, and
    credits pair ``(k, j)`` with
    ``f_{Pre_k + k}(tau(Pre_j + j)) - f_{Pre_k}(tau(Pre_j))``. The model
    trained on no subsets predicts the baseline constant whatever the
    feature mask.
    """
    if M < 1:
        raise ArgumentError("M must be >= 1")
    cache = cache if cache is not None else CoalitionCache()
    Z = _background_matrix(background)
    x = np.asarray(x, dtype=float).reshape(-1)
    J, K = x.shape[0], partition.K
    if Z.shape[1] != J or train.J != J:
        raise ArgumentError(f"dimension mismatch: x has {J} features, background {Z.shape[1]}, training {train.J}")
    base = baseline.constant(train)

    rng = np.random.default_rng(seed)
    fperms, z_idx = _feature_draws(rng, M, J, Z.shape[0])
    sperms = sample_permutations(rng, (M,), K)
    C = _composites(x, Z, fperms, z_idx)

    # F[m, a, b]: model on the first a subsets of ordering m, at composite b
    F = np.empty((M, K + 1, J + 1))
    F[:, 0, :] = base
    prefix = np.cumsum(np.left_shift(1, sperms), axis=1)  # (M, K) after a+1 subsets
    for mask in np.unique(prefix):
        rows, cols = np.nonzero(prefix == mask)
        model = cache.get(spec, train, partition, int(mask), base)
        F[rows, cols + 1, :] = model.predict_many(C[rows].reshape(-1, J)).reshape(rows.size, J + 1)

    fpos = np.argsort(fperms, axis=1)  # (M, J)
    spos = np.argsort(sperms, axis=1)  # (M, K)
    m_idx = np.arange(M)[:, None, None]
    a = spos[:, :, None]
    b = fpos[:, None, :]
    contrib = F[m_idx, a + 1, b + 1] - F[m_idx, a, b]  # (M, K, J)
    phi, se = _mean_se(contrib)
    names = background.feature_names if isinstance(background, Dataset) else train.feature_names
    return CombinedEstimate(phi, se, M, seed, partition.labels, tuple(names))
