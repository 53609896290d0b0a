"""Monte Carlo estimation of subset Shapley values by permutation sampling.

Stream discipline: every permutation of a run is drawn up front from
``numpy.random.default_rng(seed)`` in one block, before any model is trained.
``per_subset`` draws a ``(K, M, K)`` block (row ``[k, m]`` is the ordering
used for subset ``k`` at iteration ``m``); ``telescoping`` draws ``(M, K)``.
The coalitions those orderings need are then trained (in parallel if asked),
so the result never depends on scheduling.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ArgumentError
from ..games import Game

log = logging.getLogger(__name__)

MODES = ("per_subset", "telescoping")


@dataclass
class ShapleyEstimate:
    """Estimated subset importance for one explained quantity.

    ``trace[m]`` is the running mean after ``m + 1`` iterations, so the last
    row equals ``phi``. ``grand_value`` is v(N), the efficiency target.
    """

    phi: np.ndarray
    phi0: float
    se: np.ndarray
    M: int
    seed: int
    mode: str
    grand_value: float
    trace: np.ndarray | None = None
    point: object = None
    labels: tuple[str, ...] = ()
    game: dict = field(default_factory=dict)
    first_seen: dict[int, int] = field(default_factory=dict, repr=False)

    @property
    def K(self) -> int:
        return self.phi.shape[0]

    def efficiency_residual(self) -> float:
        return abs(float(self.phi.sum()) - self.grand_value)

    def efficiency_tolerance(self, n_se: float = 3.0) -> float:
        if self.mode == "telescoping":
            return 1e-10 * max(1.0, abs(self.grand_value))
        return n_se * math.sqrt(float(np.nansum(self.se**2)))

    def to_dict(self, include_trace: bool = False) -> dict:
        d = {
            "point": _jsonable(self.point),
            "labels": list(self.labels),
            "phi": self.phi.tolist(),
            "phi0": self.phi0,
            "se": [None if not np.isfinite(s) else float(s) for s in self.se],
            "M": self.M,
            "seed": self.seed,
            "mode": self.mode,
            "grand_value": self.grand_value,
            "game": self.game,
        }
        if include_trace and self.trace is not None:
            d["trace"] = self.trace.tolist()
        return d

    def to_json(self, include_trace: bool = False) -> str:
        return json.dumps(self.to_dict(include_trace), sort_keys=True)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def sample_permutations(rng: np.random.Generator, shape: tuple[int, ...], K: int) -> np.ndarray:
    """Uniform i.i.d. permutations of ``range(K)``, one per leading index."""
    return np.argsort(rng.random(shape + (K,)), axis=-1, kind="stable")


def _coalition_masks(seed: int, K: int, M: int, mode: str):
    """Masks of the preceding players (``minus``) for each (subset, iteration)."""
    rng = np.random.default_rng(seed)
    if mode == "per_subset":
        perms = sample_permutations(rng, (K, M), K)
        bits = np.left_shift(1, perms)
        before = np.cumsum(bits, axis=-1) - bits
        pos = np.argsort(perms, axis=-1)  # position of each player in each ordering
        own = pos[np.arange(K)[:, None], np.arange(M)[None, :], np.arange(K)[:, None]]
        minus = np.take_along_axis(before, own[..., None], axis=2)[..., 0]
    elif mode == "telescoping":
        perms = sample_permutations(rng, (M,), K)
        bits = np.left_shift(1, perms)
        before = np.cumsum(bits, axis=-1) - bits
        pos = np.argsort(perms, axis=-1)
        minus = np.take_along_axis(before, pos, axis=1).T  # (K, M)
    else:
        raise ArgumentError(f"unknown sampling mode {mode!r}; expected one of {MODES}")
    plus = minus | (1 << np.arange(K))[:, None]
    return minus.astype(np.int64), plus.astype(np.int64)


def _running_mean(contrib: np.ndarray):
    """Mean along axis 1 accumulated as offsets from the first draw.

    A constant sequence therefore averages to exactly its value.
    """
    first = contrib[:, :1]
    csum = np.cumsum(contrib - first, axis=1)
    counts = np.arange(1, contrib.shape[1] + 1).reshape((1, -1) + (1,) * (contrib.ndim - 2))
    trace = first + csum / counts
    return trace[:, -1], trace


def estimate_mc_batch(
    game: Game,
    M: int,
    seed: int = 0,
    mode: str = "per_subset",
    trace: bool = False,
    jobs: int = 1,
) -> list[ShapleyEstimate]:
    """Estimate subset Shapley values for every output of ``game``.

    All outputs share one permutation stream, so for the squared-error game
    the mean of the per-point estimates equals the mse-game estimate.
    """
    if M < 1:
        raise ArgumentError("M must be >= 1")
    if mode not in MODES:
        raise ArgumentError(f"unknown sampling mode {mode!r}; expected one of {MODES}")
    K = game.K
    minus, plus = _coalition_masks(seed, K, M, mode)
    full = (1 << K) - 1
    all_masks = np.concatenate([minus.ravel(), plus.ravel()])
    vals = game.values(all_masks, jobs=jobs)
    n = minus.size
    contrib = (vals[n:] - vals[:n]).reshape(K, M, -1)
    phi, tr = _running_mean(contrib)
    if M > 1:
        se = contrib.std(axis=1, ddof=1) / math.sqrt(M)
    else:
        se = np.full(phi.shape, np.nan)
    seen_full = np.flatnonzero(all_masks == full)
    grand = vals[seen_full[0]] if seen_full.size else game.values([full])[0]

    first_seen: dict[int, int] = {}
    iters = np.concatenate([np.tile(np.arange(1, M + 1), K)] * 2)
    order = np.lexsort((iters, all_masks))
    sm, si = all_masks[order], iters[order]
    starts = np.flatnonzero(np.r_[True, sm[1:] != sm[:-1]])
    for s in starts:
        first_seen[int(sm[s])] = int(si[s])
    first_seen.setdefault(full, M)

    meta = game.describe()
    out = []
    for p in range(game.n_outputs):
        out.append(
            ShapleyEstimate(
                phi=phi[:, p].copy(),
                phi0=float(game.phi0[p]),
                se=se[:, p].copy(),
                M=M,
                seed=seed,
                mode=mode,
                grand_value=float(grand[p]),
                trace=tr[:, :, p].T.copy() if trace else None,
                point=game.point_ids[p],
                labels=game.partition.labels,
                game=meta,
                first_seen=first_seen,
            )
        )
    return out


def estimate_mc(
    game: Game,
    M: int,
    seed: int = 0,
    mode: str = "per_subset",
    trace: bool = False,
    jobs: int = 1,
) -> ShapleyEstimate:
    """Monte Carlo subset Shapley values for a single-output game.

    ``per_subset`` follows the one-subset-at-a-time sampler: each subset gets
    its own M orderings and is credited ``v(Pre + k) - v(Pre)``.
    ``telescoping`` draws one ordering per iteration and credits every subset
    along it, which makes the estimates sum exactly to v(N) - v(empty).
    """
    if game.n_outputs != 1:
        raise ArgumentError(
            f"game holds {game.n_outputs} points; use estimate_mc_batch for several"
        )
    return estimate_mc_batch(game, M, seed, mode, trace, jobs)[0]


def explain_squared_error(train, partition, model, x, y, M, seed=0, mode="per_subset", baseline=None, cache=None, trace=False):
    """Subset importance for the squared error at one point.

    Negative values mean the subset lowers the error.
    """
    from ..games import BaselinePolicy, squared_error_game

    game = squared_error_game(
        train, partition, model, np.atleast_2d(x), [y], baseline or BaselinePolicy(), cache
    )
    return estimate_mc(game, M, seed, mode, trace)


def global_mse_shapley(per_point: Sequence) -> np.ndarray:
    """Mean of per-point squared-error Shapley vectors.

    For exact inputs this equals the Shapley value of the mse game. For
    Monte Carlo inputs the equality holds when every estimate came from the
    same permutation stream (same seed, M and mode).
    """
    if not per_point:
        raise ArgumentError("need at least one estimate")
    Ks = {np.asarray(e.phi).shape[0] for e in per_point}
    if len(Ks) != 1:
        raise ArgumentError(f"estimates disagree on K: {sorted(Ks)}")
    runs = {(e.seed, e.M, e.mode) for e in per_point if isinstance(e, ShapleyEstimate)}
    if len(runs) > 1:
        log.warning("Monte Carlo estimates come from different runs %s; the mean is not the exact mse-game estimate", runs)
    return np.mean(np.stack([np.asarray(e.phi, dtype=float) for e in per_point]), axis=0)


def average_group_shapley(estimates: Sequence, groups: Sequence, expected: Sequence | None = None) -> dict:
    """Mean phi per test-point group, keyed by group label.

    Groups listed in ``expected`` that have no estimates are skipped with a
    warning.
    """
    if len(estimates) != len(groups):
        raise ArgumentError("one group label per estimate is required")
    Ks = {np.asarray(e.phi).shape[0] for e in estimates}
    if len(Ks) > 1:
        raise ArgumentError(f"estimates disagree on K: {sorted(Ks)}")
    buckets: dict = defaultdict(list)
    for e, g in zip(estimates, groups):
        buckets[g].append(np.asarray(e.phi, dtype=float))
    out = {}
    for g in list(expected or []) + [g for g in buckets if g not in (expected or [])]:
        rows = buckets.get(g, [])
        if not rows:
            log.warning("group %r has no test points; skipped", g)
            continue
        out[g] = np.mean(np.stack(rows), axis=0)
    return out
