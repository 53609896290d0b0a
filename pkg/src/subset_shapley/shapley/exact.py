"""Exact Shapley values from a full coalition value table.

The table is indexed by coalition bitmask: ``table[mask]`` is v(S) where bit
``k`` of ``mask`` is set iff subset ``k`` is in S. A 2-D table holds several
games side by side (one column each) and every routine vectorises over them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..dataset import coalition_mask
from ..errors import ArgumentError, CapacityError

MAX_TABLE_K = 20
MAX_PERMUTATION_K = 10
METHODS = ("permutation", "weighted", "harsanyi")


def popcounts(K: int) -> np.ndarray:
    masks = np.arange(1 << K)
    out = np.zeros(1 << K, dtype=np.int64)
    for i in range(K):
        out += (masks >> i) & 1
    return out


def _table_K(table: np.ndarray) -> int:
    n = table.shape[0]
    K = n.bit_length() - 1
    if n < 1 or (1 << K) != n:
        raise ArgumentError(f"value table length {n} is not a power of two")
    if K > MAX_TABLE_K:
        raise CapacityError(f"K={K} exceeds the exact-method limit of {MAX_TABLE_K} subsets")
    return K


@dataclass
class ExactShapley:
    phi: np.ndarray
    method: str
    table: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return self.phi.shape[0]

    def efficiency_residual(self):
        return np.abs(self.phi.sum(axis=0) - (self.table[-1] - self.table[0]))

    def to_dict(self, labels=None) -> dict:
        labels = list(labels) if labels is not None else [str(k + 1) for k in range(self.K)]
        return {
            "method": self.method,
            "labels": labels,
            "phi": self.phi.tolist(),
            "value_table": [
                {"mask": m, "coalition": [labels[k] for k in range(self.K) if m >> k & 1], "value": v}
                for m, v in enumerate(self.table.tolist())
            ],
        }


@dataclass
class HarsanyiDividends:
    """Dividend per coalition bitmask.

    ``dividends[0]`` equals v(empty), which is 0 for every game built here.
    """

    dividends: np.ndarray

    @property
    def K(self) -> int:
        return self.dividends.shape[0].bit_length() - 1

    def __getitem__(self, coalition):
        mask = coalition if isinstance(coalition, (int, np.integer)) else coalition_mask(coalition, self.K)
        return self.dividends[int(mask)]

    def reconstruct(self) -> np.ndarray:
        """v(S) = sum of d(T) over T subset of S, for every S."""
        v = np.array(self.dividends, dtype=float, copy=True)
        masks = np.arange(v.shape[0])
        for i in range(self.K):
            hi = masks[(masks >> i) & 1 == 1]
            v[hi] += v[hi ^ (1 << i)]
        return v

    def shapley(self) -> np.ndarray:
        K = self.K
        sizes = popcounts(K)
        share = self.dividends.copy()
        share[1:] = share[1:] / sizes[1:].reshape((-1,) + (1,) * (share.ndim - 1))
        masks = np.arange(1 << K)
        return np.stack([share[(masks >> k) & 1 == 1].sum(axis=0) for k in range(K)])


def harsanyi(table) -> HarsanyiDividends:
    """Dividends d(S) = v(S) - sum of d(T) over proper subsets T of S.

    Computed with the subset-sum (Moebius) transform, which yields the same
    numbers as the size-ordered recursion in O(K 2^K) operations.
    """
    d = np.array(table, dtype=float, copy=True)
    K = _table_K(d)
    masks = np.arange(1 << K)
    for i in range(K):
        hi = masks[(masks >> i) & 1 == 1]
        d[hi] -= d[hi ^ (1 << i)]
    return HarsanyiDividends(d)


def _weighted(table: np.ndarray, K: int) -> np.ndarray:
    sizes = popcounts(K)
    w = np.array(
        [math.factorial(s) * math.factorial(K - s - 1) / math.factorial(K) for s in range(K)]
    )
    masks = np.arange(1 << K)
    phi = []
    for k in range(K):
        without = masks[(masks >> k) & 1 == 0]
        weights = w[sizes[without]].reshape((-1,) + (1,) * (table.ndim - 1))
        phi.append((weights * (table[without | (1 << k)] - table[without])).sum(axis=0))
    return np.stack(phi)


def _permutation(table: np.ndarray, K: int, chunk: int = 40_320) -> np.ndarray:
    if K > MAX_PERMUTATION_K:
        raise CapacityError(
            f"K={K} exceeds the permutation-method limit of {MAX_PERMUTATION_K} subsets"
        )
    phi = np.zeros((K,) + table.shape[1:])
    perms = itertools.permutations(range(K))
    n_total = math.factorial(K)
    done = 0
    while done < n_total:
        block = np.array(list(itertools.islice(perms, chunk)), dtype=np.int64)
        done += block.shape[0]
        bits = 1 << block
        before = np.cumsum(bits, axis=1) - bits
        contrib = table[before + bits] - table[before]
        for k in range(K):
            phi[k] += contrib[block == k].sum(axis=0)
    return phi / n_total


def exact_shapley(table, method: str = "weighted") -> ExactShapley:
    """Shapley values of every subset from a ``2**K`` value table.

    ``permutation`` averages marginal contributions over all ``K!`` orderings
    (K <= 10); ``weighted`` uses the coalition-size weights
    ``|S|!(K-|S|-1)!/K!`` and ``harsanyi`` splits each coalition's dividend
    equally among its members (both K <= 20).
    """
    table = np.asarray(table, dtype=float)
    K = _table_K(table)
    if method == "permutation":
        phi = _permutation(table, K)
    elif method == "weighted":
        phi = _weighted(table, K)
    elif method == "harsanyi":
        phi = harsanyi(table).shapley()
    else:
        raise ArgumentError(f"unknown exact method {method!r}; expected one of {METHODS}")
    return ExactShapley(phi, method, table)


def build_value_table(game, jobs: int = 1) -> np.ndarray:
    """v(S) for every coalition of ``game``; trains up to ``2**K`` models.

    Returns shape ``(2**K,)`` for single-output games and
    ``(2**K, n_outputs)`` otherwise.
    """
    if game.K > MAX_TABLE_K:
        raise CapacityError(f"K={game.K} exceeds the exact-method limit of {MAX_TABLE_K} subsets")
    table = game.values(np.arange(1 << game.K), jobs=jobs)
    return table[:, 0] if table.shape[1] == 1 else table
