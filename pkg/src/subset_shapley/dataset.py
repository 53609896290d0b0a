"""Datasets, partitions of training rows into subsets, and synthetic generators.

Subset indices are zero-based inside the library (``0 .. K-1``); partition
files and reports carry the human-readable ``labels`` instead.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, CardinalityError, EmptyInputError, ParseError, SchemaError

MAX_SUBSETS = 64


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, response vector and stable row identifiers.

    Aux columns (for instance a sensitive attribute) travel with the rows but
    are never part of ``features``.
    """

    features: np.ndarray
    response: np.ndarray
    row_ids: np.ndarray
    feature_names: tuple[str, ...]
    aux: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.asarray(self.response, dtype=float).reshape(-1)
        ids = np.asarray(self.row_ids, dtype=np.int64).reshape(-1)
        n = X.shape[0]
        if y.shape[0] != n or ids.shape[0] != n:
            raise ArgumentError(
                f"row count mismatch: features={n}, response={y.shape[0]}, row_ids={ids.shape[0]}"
            )
        names = tuple(str(c) for c in self.feature_names)
        if len(names) != X.shape[1]:
            raise ArgumentError(f"{len(names)} feature names for {X.shape[1]} columns")
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names: {names}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ArgumentError("features and response must be finite")
        if len(np.unique(ids)) != n:
            raise ArgumentError("row_ids must be unique")
        aux = {}
        for key, col in dict(self.aux).items():
            col = np.asarray(col).reshape(-1)
            if col.shape[0] != n:
                raise ArgumentError(f"aux column {key!r} has {col.shape[0]} rows, expected {n}")
            col.setflags(write=False)
            aux[str(key)] = col
        for arr in (X, y, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "row_ids", ids)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "aux", aux)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def J(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.n

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.features[rows],
            self.response[rows],
            self.row_ids[rows],
            self.feature_names,
            {k: v[rows] for k, v in self.aux.items()},
        )

    def row_index(self, row_id) -> int:
        hits = np.flatnonzero(self.row_ids == int(row_id))
        if hits.size == 0:
            raise ArgumentError(f"unknown row id {row_id}")
        return int(hits[0])

    def column(self, name: str) -> np.ndarray:
        if name in self.feature_names:
            return self.features[:, self.feature_names.index(name)]
        if name in self.aux:
            return self.aux[name]
        raise SchemaError(f"unknown column {name!r}")

    def equals(self, other: "Dataset") -> bool:
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.response, other.response)
            and np.array_equal(self.row_ids, other.row_ids)
            and self.aux.keys() == other.aux.keys()
            and all(np.array_equal(self.aux[k], other.aux[k]) for k in self.aux)
        )

    def fingerprint(self) -> str:
        fp = self.__dict__.get("_fingerprint")
        if fp is None:
            h = hashlib.sha256()
            h.update(json.dumps(self.feature_names).encode())
            for arr in (self.features, self.response, self.row_ids):
                h.update(np.ascontiguousarray(arr).tobytes())
            fp = h.hexdigest()[:16]
            object.__setattr__(self, "_fingerprint", fp)
        return fp

    def to_csv(self, path, extra: dict[str, Sequence] | None = None) -> None:
        extra = extra or {}
        header = ["row_id", *self.feature_names, *self.aux, "y", *extra]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(self.n):
                w.writerow(
                    [int(self.row_ids[i])]
                    + [repr(float(v)) for v in self.features[i]]
                    + [_cell(self.aux[k][i]) for k in self.aux]
                    + [repr(float(self.response[i]))]
                    + [extra[k][i] for k in extra]
                )


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of each row to one of ``K`` non-empty, disjoint subsets."""

    assignment: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=np.int64).reshape(-1)
        labels = tuple(str(s) for s in self.labels)
        K = len(labels)
        if K < 1:
            raise ArgumentError("a partition needs at least one subset")
        if K > MAX_SUBSETS:
            raise CardinalityError(f"K={K} exceeds the {MAX_SUBSETS}-subset limit")
        if a.size and (a.min() < 0 or a.max() >= K):
            raise ArgumentError(f"subset indices must lie in 0..{K - 1}")
        counts = np.bincount(a, minlength=K)
        if np.any(counts == 0):
            empty = [labels[k] for k in np.flatnonzero(counts == 0)]
            raise ArgumentError(f"empty subsets: {empty}")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "labels", labels)

    @property
    def K(self) -> int:
        return len(self.labels)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.K)

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def fingerprint(self) -> str:
        fp = self.__dict__.get("_fingerprint")
        if fp is None:
            h = hashlib.sha256(np.ascontiguousarray(self.assignment).tobytes())
            h.update(json.dumps(self.labels).encode())
            fp = h.hexdigest()[:16]
            object.__setattr__(self, "_fingerprint", fp)
        return fp

    def to_csv(self, path, ds: Dataset) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["row_id", "subset", "label"])
            for rid, k in zip(ds.row_ids, self.assignment):
                w.writerow([int(rid), int(k) + 1, self.labels[k]])


def coalition_mask(coalition: Iterable[int], K: int) -> int:
    mask = 0
    for k in coalition:
        k = int(k)
        if not 0 <= k < K:
            raise ArgumentError(f"subset index {k} outside 0..{K - 1}")
        mask |= 1 << k
    return mask


def mask_members(mask: int) -> list[int]:
    out, k = [], 0
    while mask:
        if mask & 1:
            out.append(k)
        mask >>= 1
        k += 1
    return out


# ---------------------------------------------------------------- ingestion


def load_csv(
    path,
    response_col: str,
    feature_cols: Sequence[str] | None = None,
    aux_cols: Sequence[str] | None = None,
    id_col: str | None = None,
) -> Dataset:
    """Read a headered, comma-separated UTF-8 file.

    When ``feature_cols`` is omitted every column that is not the response,
    the id column or an aux column becomes a feature. Without ``id_col`` the
    zero-based data-row position is used as row id (a ``row_id`` column is
    picked up automatically).
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise EmptyInputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise EmptyInputError(f"{path}: no data rows")
    aux_cols = list(aux_cols or [])
    if id_col is None and "row_id" in header:
        id_col = "row_id"
    reserved = {response_col, *aux_cols} | ({id_col} if id_col else set())
    if feature_cols is None:
        feature_cols = [h for h in header if h not in reserved]
    for col in [response_col, *feature_cols, *aux_cols, *([id_col] if id_col else [])]:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    pos = {h: i for i, h in enumerate(header)}

    def num(r, line, col):
        try:
            cell = r[pos[col]]
        except IndexError:
            raise ParseError(f"{path}: row {line}: missing value for column {col!r}") from None
        try:
            v = float(cell)
        except ValueError:
            raise ParseError(f"{path}: row {line}, column {col!r}: cannot parse {cell!r}") from None
        if not math.isfinite(v):
            raise ParseError(f"{path}: row {line}, column {col!r}: non-finite value {cell!r}")
        return v

    X = np.empty((len(body), len(feature_cols)))
    y = np.empty(len(body))
    ids = np.arange(len(body), dtype=np.int64)
    aux = {c: [] for c in aux_cols}
    for i, r in enumerate(body):
        line = i + 1  # 1-based data row, header excluded
        for j, col in enumerate(feature_cols):
            X[i, j] = num(r, line, col)
        y[i] = num(r, line, response_col)
        if id_col:
            v = num(r, line, id_col)
            if v != int(v):
                raise ParseError(f"{path}: row {line}: row id {v} is not an integer")
            ids[i] = int(v)
        for col in aux_cols:
            aux[col].append(_parse_aux(r[pos[col]]))
    return Dataset(X, y, ids, tuple(feature_cols), {k: np.asarray(v) for k, v in aux.items()})


def _parse_aux(cell: str):
    try:
        v = float(cell)
    except ValueError:
        return cell
    return int(v) if v == int(v) else v


def load_partition_csv(path, ds: Dataset) -> Partition:
    """Read a ``row_id,subset[,label]`` file; subsets are 1-based in the file."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"row_id", "subset"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: partition file needs row_id and subset columns")
        by_id, labels = {}, {}
        for line, rec in enumerate(reader, start=1):
            try:
                rid, k = int(rec["row_id"]), int(rec["subset"])
            except ValueError:
                raise ParseError(f"{path}: row {line}: non-integer row_id/subset") from None
            by_id[rid] = k
            if rec.get("label"):
                labels[k] = rec["label"]
    missing = [int(r) for r in ds.row_ids if int(r) not in by_id]
    if missing:
        raise SchemaError(f"{path}: no subset for row ids {missing[:5]}")
    raw = np.array([by_id[int(r)] for r in ds.row_ids])
    K = int(raw.max())
    if raw.min() < 1:
        raise ArgumentError(f"{path}: subset numbers start at 1")
    return Partition(raw - 1, tuple(labels.get(k, str(k)) for k in range(1, K + 1)))


# ------------------------------------------------------------- partitioners


def _block_assignment(n: int, K: int) -> np.ndarray:
    if K < 1 or K > n:
        raise ArgumentError(f"need 1 <= K <= N, got K={K}, N={n}")
    base, rem = divmod(n, K)
    sizes = [base + 1 if k < rem else base for k in range(K)]
    return np.repeat(np.arange(K), sizes)


def partition_blocks(ds: Dataset, K: int) -> Partition:
    """Contiguous blocks in row order; earlier blocks absorb the remainder."""
    return Partition(_block_assignment(ds.n, K), tuple(str(k + 1) for k in range(K)))


def partition_quantiles(ds: Dataset, feature: str, K: int) -> Partition:
    values = ds.column(feature)
    order = np.argsort(values, kind="stable")
    assignment = np.empty(ds.n, dtype=np.int64)
    assignment[order] = _block_assignment(ds.n, K)
    return Partition(assignment, tuple(str(k + 1) for k in range(K)))


def partition_category(ds: Dataset, column: str) -> Partition:
    values = ds.column(column)
    uniq = np.unique(values)
    if uniq.size > MAX_SUBSETS:
        raise CardinalityError(
            f"column {column!r} has {uniq.size} distinct values (limit {MAX_SUBSETS}); "
            "use partition_quantiles instead"
        )
    assignment = np.searchsorted(uniq, values)
    return Partition(assignment, tuple(_label(v) for v in uniq))


def _label(v) -> str:
    if isinstance(v, (float, np.floating)) and float(v) == int(v):
        return str(int(v))
    return str(v.item() if hasattr(v, "item") else v)


def coalition_data(ds: Dataset, p: Partition, coalition: Iterable[int] | int) -> Dataset:
    """Rows whose subset is in ``coalition`` (a set of indices or a bitmask)."""
    if isinstance(coalition, (int, np.integer)):
        mask = int(coalition)
        if mask < 0 or mask >> p.K:
            raise ArgumentError(f"coalition mask {mask} has bits outside 0..{p.K - 1}")
    else:
        mask = coalition_mask(coalition, p.K)
    if len(p.assignment) != ds.n:
        raise ArgumentError("partition does not match the dataset")
    rows = np.flatnonzero((mask >> p.assignment) & 1)
    return ds.take(rows)


# --------------------------------------------------------------- transforms


def corrupt_response(ds: Dataset, row_ids: Sequence, new_values: Sequence[float]) -> Dataset:
    if len(row_ids) != len(new_values):
        raise ArgumentError("row_ids and new_values differ in length")
    y = ds.response.copy()
    for rid, v in zip(row_ids, new_values):
        y[ds.row_index(rid)] = float(v)
    return Dataset(ds.features, y, ds.row_ids, ds.feature_names, ds.aux)


def center_response(ds: Dataset) -> tuple[Dataset, float]:
    if ds.n == 0:
        raise EmptyInputError("cannot center an empty dataset")
    offset = float(np.mean(ds.response))
    return Dataset(ds.features, ds.response - offset, ds.row_ids, ds.feature_names, ds.aux), offset


# --------------------------------------------------------------- generators


@dataclass(frozen=True)
class SinusoidConfig:
    """Four noisy sinusoid features, response ``x1*x2 + x3*x4 + noise``.

    Time runs over ``t/N`` for ``t = 1..N`` so an angular frequency in
    ``[omega_low, omega_high]`` completes 1 to 20 cycles over the series.
    """

    n_points: int = 100
    n_subsets: int = 4
    feature_noise_sd: float = 0.1
    response_noise_sd: float = 0.1
    omega_low: float = 2 * math.pi
    omega_high: float = 40 * math.pi
    omegas: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_points < 1 or self.n_subsets < 1:
            raise ArgumentError("n_points and n_subsets must be >= 1")
        if self.feature_noise_sd < 0 or self.response_noise_sd < 0:
            raise ArgumentError("noise sd must be >= 0")
        if not self.omega_low < self.omega_high:
            raise ArgumentError("omega_low must be < omega_high")
        if self.omegas is not None and len(self.omegas) != 4:
            raise ArgumentError("omegas needs four entries")

    @classmethod
    def from_dict(cls, d: dict) -> "SinusoidConfig":
        return _from_dict(cls, d)


@dataclass(frozen=True)
class BiasScenario:
    scenario: str = "a"
    groups: tuple[tuple[str, float], ...] = (("A", -1.0), ("B", 0.0), ("C", 1.0))
    per_group: int = 100
    J: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in ("a", "b", "c"):
            raise ArgumentError(f"scenario must be a, b or c, got {self.scenario!r}")
        groups = tuple((str(g), float(v)) for g, v in self.groups)
        if len(groups) < 2:
            raise ArgumentError("need at least two groups")
        if len({v for _, v in groups}) != len(groups):
            raise ArgumentError("group x_D values must be distinct")
        if self.per_group < 1 or self.J < 1:
            raise ArgumentError("per_group and J must be >= 1")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def from_dict(cls, d: dict) -> "BiasScenario":
        d = dict(d)
        if "groups" in d:
            d["groups"] = tuple(tuple(g) for g in d["groups"])
        return _from_dict(cls, d)


def _from_dict(cls, d: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ArgumentError(f"unknown config field(s): {sorted(unknown)}")
    if "omegas" in d and d["omegas"] is not None:
        d = {**d, "omegas": tuple(d["omegas"])}
    return cls(**d)


def generate_sinusoid(cfg: SinusoidConfig = SinusoidConfig()) -> tuple[Dataset, Partition]:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_points * cfg.n_subsets
    omegas = (
        np.asarray(cfg.omegas, dtype=float)
        if cfg.omegas is not None
        else rng.uniform(cfg.omega_low, cfg.omega_high, size=4)
    )
    t = np.arange(1, n + 1) / n
    X = np.sin(np.outer(t, omegas)) + rng.normal(0.0, 1.0, size=(n, 4)) * cfg.feature_noise_sd
    y = X[:, 0] * X[:, 1] + X[:, 2] * X[:, 3] + rng.normal(0.0, 1.0, size=n) * cfg.response_noise_sd
    assignment = _block_assignment(n, cfg.n_subsets)
    last = np.flatnonzero(assignment == cfg.n_subsets - 1)
    X = np.vstack([X, X[last]])
    y = np.concatenate([y, y[last]])
    assignment = np.concatenate([assignment, np.full(last.size, cfg.n_subsets)])
    t_all = np.concatenate([np.arange(1, n + 1), np.arange(n + 1, n + 1 + last.size)])
    ds = Dataset(X, y, np.arange(X.shape[0]), ("x1", "x2", "x3", "x4"), {"t": t_all})
    return ds, Partition(assignment, tuple(str(k + 1) for k in range(cfg.n_subsets + 1)))


def _bias_loadings(J: int) -> np.ndarray:
    # 1, -1, 2, -2, 3, -3, ...
    return np.array([(j // 2 + 1) * (1 if j % 2 == 0 else -1) for j in range(J)], dtype=float)


def generate_bias(sc: BiasScenario = BiasScenario()) -> tuple[Dataset, Partition]:
    rng = np.random.default_rng(sc.seed)
    G, n = len(sc.groups), sc.per_group
    xd = np.repeat([v for _, v in sc.groups], n)
    X = rng.normal(size=(G * n, sc.J))
    eps = rng.normal(size=G * n)
    if sc.scenario == "c":
        X = X + np.outer(xd, _bias_loadings(sc.J))
    y = eps if sc.scenario == "a" else xd + eps
    names = tuple(f"x{j + 1}" for j in range(sc.J))
    ds = Dataset(X, y, np.arange(G * n), names, {"x_D": xd})
    return ds, Partition(np.repeat(np.arange(G), n), tuple(g for g, _ in sc.groups))
