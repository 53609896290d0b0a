"""Slow, obviously-correct reference implementations used as test oracles."""

import itertools
from fractions import Fraction
from math import factorial


def shapley_bruteforce(v, K):
    """Shapley values straight from the subset-sum definition.

    ``v`` maps a frozenset of players to its worth.
    """
    players = range(K)
    phi = []
    for k in players:
        others = [p for p in players if p != k]
        total = 0
        for r in range(K):
            for S in itertools.combinations(others, r):
                S = frozenset(S)
                w = Fraction(factorial(len(S)) * factorial(K - len(S) - 1), factorial(K))
                total += w * (v(S | {k}) - v(S))
        phi.append(total)
    return phi


def dividends_bruteforce(v, K):
    """Harsanyi dividends by the size-ordered recursion."""
    d = {}
    for r in range(K + 1):
        for S in itertools.combinations(range(K), r):
            S = frozenset(S)
            d[S] = v(S) - sum(d[T] for T in d if T < S)
    return d


def toy_game(kind):
    """Exact value functions of the appendix toy at x = 2/8 (zero baseline)."""
    xs = {0: Fraction(1, 8), 1: Fraction(6, 8), 2: Fraction(7, 8)}
    x = Fraction(2, 8)

    def one_nn(S):
        if not S:
            return Fraction(0)
        return xs[min(S, key=lambda k: (abs(xs[k] - x), k))]

    def all_mean(S):
        if not S:
            return Fraction(0)
        return sum(xs[k] for k in S) / len(S)

    return {"one_nn": one_nn, "all_mean": all_mean}[kind]


def mask_to_set(mask):
    return frozenset(k for k in range(mask.bit_length()) if mask >> k & 1)


def combined_expectation(f, K, x, Z):
    """Expected combined contribution matrix by enumerating every subset
    ordering, feature ordering and background row.

    ``f(mask, point)`` is the coalition model's prediction; ``mask == 0`` is
    the baseline.
    """
    J = len(x)
    out = [[0.0] * J for _ in range(K)]
    sperms = list(itertools.permutations(range(K)))
    fperms = list(itertools.permutations(range(J)))
    n = len(sperms) * len(fperms) * len(Z)
    for sp in sperms:
        for fp in fperms:
            for z in Z:
                for a, k in enumerate(sp):
                    pre = sum(1 << s for s in sp[:a])
                    for b, j in enumerate(fp):
                        with_j = [x[i] if i in fp[: b + 1] else z[i] for i in range(J)]
                        without = [x[i] if i in fp[:b] else z[i] for i in range(J)]
                        out[k][j] += (f(pre | 1 << k, with_j) - f(pre, without)) / n
    return out
