"""Axiom checks on Shapley results and extended learning curves.

A learning curve here is the test MSE of every coalition model that an
estimator trained anyway, plotted against the number of subsets used.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import Dataset, Partition, coalition_data, mask_members
from .errors import ArgumentError
from .games import BaselinePolicy
from .models import CoalitionCache, ModelSpec
from .shapley.exact import ExactShapley, exact_shapley
from .shapley.sampling import ShapleyEstimate

# ------------------------------------------------------------------ curves


@dataclass(frozen=True)
class CurvePoint:
    mask: int
    coalition_size: int
    excluded_subsets: tuple[int, ...]
    metric: float
    iteration: int = 0

    def __post_init__(self):
        if self.coalition_size != bin(self.mask).count("1"):
            raise ArgumentError("coalition size does not match the mask")
        if any(self.mask >> k & 1 for k in self.excluded_subsets):
            raise ArgumentError("an excluded subset is in the coalition")


def collect_curve(
    train: Dataset,
    partition: Partition,
    model: ModelSpec,
    test: Dataset,
    coalitions: Mapping[int, int] | Iterable[int] | None = None,
    cache: CoalitionCache | None = None,
    baseline: BaselinePolicy = BaselinePolicy(),
) -> list[CurvePoint]:
    """Test MSE of each distinct coalition model, sorted by mask.

    ``coalitions`` is either a mapping from mask to the iteration that first
    needed it (``ShapleyEstimate.first_seen``) or plain masks. When omitted,
    the masks already trained in ``cache`` for this model and data are used,
    so the curve costs no extra training.
    """
    if test.J != train.J:
        raise ArgumentError("test and training data have different features")
    cache = cache if cache is not None else CoalitionCache()
    K = partition.K
    if coalitions is None:
        coalitions = cache.coalitions(model, train, partition)
    first = dict(coalitions) if isinstance(coalitions, Mapping) else {int(m): 0 for m in coalitions}
    base = baseline.constant(train)
    out = []
    for mask in sorted(first):
        if not 0 <= mask < 1 << K:
            raise ArgumentError(f"mask {mask} outside the {K}-subset range")
        pred = cache.get(model, train, partition, mask, base).predict_many(test.features)
        mse = float(np.mean((test.response - pred) ** 2))
        members = set(mask_members(mask))
        excluded = tuple(k for k in range(K) if k not in members)
        out.append(CurvePoint(mask, len(members), excluded, mse, int(first[mask])))
    return out


def curve_from_estimates(estimates: Sequence[ShapleyEstimate]) -> dict[int, int]:
    """Union of the coalitions the estimates needed, with earliest iteration."""
    seen: dict[int, int] = {}
    for e in estimates:
        for m, it in e.first_seen.items():
            seen[m] = min(it, seen.get(m, it))
    return seen


@dataclass
class CurveSummary:
    by_size: dict[int, float]
    by_excluded: dict[int, dict[int, float]]

    def to_dict(self, labels: Sequence[str] | None = None) -> dict:
        name = (lambda k: labels[k]) if labels else (lambda k: str(k + 1))
        return {
            "mean_mse_by_size": {str(s): v for s, v in self.by_size.items()},
            "mean_mse_by_excluded_subset": {
                name(k): {str(s): v for s, v in d.items()} for k, d in self.by_excluded.items()
            },
        }


def summarize_curve(points: Sequence[CurvePoint]) -> CurveSummary:
    """Mean MSE per coalition size, overall and among points missing each subset."""
    if not points:
        raise ArgumentError("no curve points to summarise")
    sizes: dict[int, list[float]] = {}
    excl: dict[int, dict[int, list[float]]] = {}
    for p in points:
        sizes.setdefault(p.coalition_size, []).append(p.metric)
        for k in p.excluded_subsets:
            excl.setdefault(k, {}).setdefault(p.coalition_size, []).append(p.metric)
    return CurveSummary(
        {s: float(np.mean(v)) for s, v in sorted(sizes.items())},
        {k: {s: float(np.mean(v)) for s, v in sorted(d.items())} for k, d in sorted(excl.items())},
    )


def write_curve_csv(path, points: Sequence[CurvePoint], one_based: bool = True) -> None:
    """Columns coalition_bitmask, size, excluded_list, mse, iteration.

    ``excluded_list`` is space-separated, 1-based by default.
    """
    off = 1 if one_based else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["coalition_bitmask", "size", "excluded_list", "mse", "iteration"])
        for p in points:
            w.writerow(
                [p.mask, p.coalition_size, " ".join(str(k + off) for k in p.excluded_subsets), repr(p.metric), p.iteration]
            )


# ------------------------------------------------------------- detection


def find_identical_subsets(ds: Dataset, partition: Partition) -> list[tuple[int, int]]:
    """Pairs of subsets whose rows match bit for bit, in the same order."""
    blobs = []
    for k in range(partition.K):
        sub = coalition_data(ds, partition, 1 << k)
        blobs.append((sub.features.tobytes(), sub.response.tobytes(), sub.features.shape))
    return [
        (i, j)
        for i in range(partition.K)
        for j in range(i + 1, partition.K)
        if blobs[i] == blobs[j]
    ]


def null_subsets(table, atol: float = 0.0) -> list[int]:
    """Players whose marginal contribution is zero against every coalition."""
    table = np.asarray(table, dtype=float)
    K = table.shape[0].bit_length() - 1
    masks = np.arange(1 << K)
    out = []
    for k in range(K):
        without = masks[(masks >> k) & 1 == 0]
        if np.all(np.abs(table[without | (1 << k)] - table[without]) <= atol):
            out.append(k)
    return out


def symmetric_pairs(table, atol: float = 0.0) -> list[tuple[int, int]]:
    """Player pairs interchangeable in ``table``: v(S + i) = v(S + j) for all S without both."""
    table = np.asarray(table, dtype=float)
    K = table.shape[0].bit_length() - 1
    masks = np.arange(1 << K)
    out = []
    for i in range(K):
        for j in range(i + 1, K):
            rest = masks[((masks >> i) & 1 == 0) & ((masks >> j) & 1 == 0)]
            if np.all(np.abs(table[rest | (1 << i)] - table[rest | (1 << j)]) <= atol):
                out.append((i, j))
    return out


# ---------------------------------------------------------------- axioms


@dataclass(frozen=True)
class AxiomCheck:
    name: str
    residual: float
    tolerance: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def to_dict(self) -> dict:
        return {
            "axiom": self.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "detail": self.detail,
        }


@dataclass
class PropertyReport:
    checks: list[AxiomCheck] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AxiomCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def names(self) -> list[str]:
        return [c.name for c in self.checks]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks], "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _scale(*xs) -> float:
    return max([1.0] + [float(np.max(np.abs(x))) for x in xs])


def check_axioms(
    result: ExactShapley | ShapleyEstimate,
    identical_pairs: Sequence[tuple[int, int]] | None = None,
    tol: float = 1e-10,
    n_se: float = 3.0,
    seed: int = 0,
) -> PropertyReport:
    """Check the Shapley axioms on an exact or Monte Carlo result.

    Exact results get efficiency, symmetry, null player, linearity (against a
    random table drawn from ``seed``) and agreement between the exact methods,
    each at ``tol`` relative to the size of the values involved. Monte Carlo
    results get efficiency and symmetry at ``n_se`` standard errors.

    ``identical_pairs`` are the subset pairs to test for symmetry, usually
    from :func:`find_identical_subsets`. For exact results, pairs are also
    detected from the value table when none are given.
    """
    report = PropertyReport()
    if isinstance(result, ExactShapley):
        _check_exact(report, result, identical_pairs, tol, seed)
    elif isinstance(result, ShapleyEstimate):
        _check_mc(report, result, identical_pairs, n_se)
    else:
        raise ArgumentError(f"cannot check {type(result).__name__}")
    return report


def _check_exact(report, result: ExactShapley, pairs, tol, seed):
    table, phi, K = result.table, result.phi, result.K
    if table.ndim != 1:
        raise ArgumentError("axiom checks take a single-output value table")
    scale = _scale(table)
    report.metadata = {"kind": "exact", "method": result.method, "K": K, "tolerance_scale": scale}
    report.checks.append(
        AxiomCheck(
            "efficiency",
            float(result.efficiency_residual()),
            tol * scale,
            f"sum(phi)={float(phi.sum())!r}, v(N)-v(empty)={float(table[-1] - table[0])!r}",
        )
    )
    if pairs is None:
        pairs = symmetric_pairs(table, atol=tol * scale)
    gap = max((abs(phi[i] - phi[j]) for i, j in pairs), default=0.0)
    report.checks.append(
        AxiomCheck("symmetry", float(gap), tol * scale, f"pairs={[(i + 1, j + 1) for i, j in pairs]}")
    )
    nulls = null_subsets(table, atol=tol * scale)
    report.checks.append(
        AxiomCheck(
            "null_player",
            float(max((abs(phi[k]) for k in nulls), default=0.0)),
            tol * scale,
            f"null subsets={[k + 1 for k in nulls]}",
        )
    )
    rng = np.random.default_rng(seed)
    w = rng.normal(size=table.shape)
    w[0] = 0.0
    a = float(rng.uniform(-2.0, 2.0))
    combo = exact_shapley(a * table + w, result.method).phi
    parts = a * phi + exact_shapley(w, result.method).phi
    report.checks.append(
        AxiomCheck(
            "linearity",
            float(np.max(np.abs(combo - parts))),
            tol * _scale(table, w, combo),
            f"a={a!r}, random table seed={seed}",
        )
    )
    methods = ["weighted", "harsanyi"] + (["permutation"] if K <= 10 else [])
    others = [exact_shapley(table, m).phi for m in methods if m != result.method]
    report.checks.append(
        AxiomCheck(
            "method_agreement",
            float(max((np.max(np.abs(o - phi)) for o in others), default=0.0)),
            tol * scale,
            f"methods={methods}",
        )
    )


def _check_mc(report, est: ShapleyEstimate, pairs, n_se):
    report.metadata = {"kind": "monte_carlo", "mode": est.mode, "M": est.M, "seed": est.seed, "K": est.K}
    report.checks.append(
        AxiomCheck(
            "efficiency",
            est.efficiency_residual(),
            est.efficiency_tolerance(n_se),
            f"sum(phi)={float(est.phi.sum())!r}, v(N)={float(est.grand_value)!r}",
        )
    )
    if pairs:
        gaps = [
            (abs(est.phi[i] - est.phi[j]), n_se * float(np.sqrt(est.se[i] ** 2 + est.se[j] ** 2)), i, j)
            for i, j in pairs
        ]
        # report the pair closest to failing
        g, t, i, j = max(gaps, key=lambda r: r[0] - r[1])
        report.checks.append(
            AxiomCheck("symmetry", float(g), float(t) if np.isfinite(t) else 0.0, f"worst pair=({i + 1}, {j + 1})")
        )
