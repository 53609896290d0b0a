"""Command-line front end.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
Reports are JSON, tables meant for plotting are CSV. Exit status is 0 on
success, 1 when some points failed or an axiom check did not pass, and 2 on
usage or input errors.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import logging
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np

from . import __version__
from .acquisition import Strategy, evaluate_strategies, importance_from_initial, top_response_rows
from .dataset import (
    BiasScenario,
    Dataset,
    Partition,
    SinusoidConfig,
    generate_bias,
    generate_sinusoid,
    load_csv,
    load_partition_csv,
    partition_blocks,
    partition_category,
    partition_quantiles,
)
from .diagnostics import (
    check_axioms,
    collect_curve,
    curve_from_estimates,
    find_identical_subsets,
    summarize_curve,
    write_curve_csv,
)
from .errors import ArgumentError, CapacityError, SubsetShapleyError
from .games import BaselinePolicy, Game
from .models import CoalitionCache, ModelSpec, train
from .shapley.exact import MAX_PERMUTATION_K, MAX_TABLE_K, build_value_table, exact_shapley, harsanyi
from .shapley.features import combined_shapley_mc, feature_shapley_mc
from .shapley.sampling import MODES, estimate_mc_batch

log = logging.getLogger("subset_shapley")

GAMES = {"prediction": "prediction", "sqerr": "squared_error", "squared_error": "squared_error", "mse": "mse"}


# ------------------------------------------------------------------ helpers


class RunContext:
    """Collects what the manifest records while a command runs."""

    def __init__(self, command: str, params: dict, out: Path):
        self.command = command
        self.params = params
        self.out = out
        self.inputs: dict[str, str] = {}
        self.cache: CoalitionCache | None = None
        self.errors: list[dict] = []
        self.started = time.perf_counter()
        self.started_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        out.mkdir(parents=True, exist_ok=True)

    def add_input(self, path) -> Path:
        path = Path(path)
        self.inputs[str(path)] = _sha256(path)
        return path

    def write_json(self, name: str, obj) -> Path:
        path = self.out / name
        path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def manifest(self, status: str) -> dict:
        return {
            "command": self.command,
            "flags": {k: _clean(v) for k, v in sorted(self.params.items())},
            "seed": self.params.get("seed"),
            "inputs": self.inputs,
            "version": __version__,
            "started_at": self.started_at,
            "wall_clock_seconds": round(time.perf_counter() - self.started, 6),
            "cache": self.cache.stats() if self.cache is not None else None,
            "errors": self.errors,
            "status": status,
        }


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def run_command(fn):
    """Wrap a command: set up the run directory, map errors to exit codes and
    always write the manifest."""

    @functools.wraps(fn)
    def wrapper(**params):
        ctx = RunContext(click.get_current_context().command.name, params, Path(params["out"]))
        status, code = "ok", 0
        try:
            code = fn(ctx, **params) or 0
            if code:
                status = "failed"
        except SubsetShapleyError as exc:
            ctx.errors.append({"error": type(exc).__name__, "message": str(exc)})
            status, code = "error", 2
            click.echo(f"error: {exc}", err=True)
        finally:
            ctx.write_json("manifest.json", ctx.manifest(status))
        sys.exit(code)

    return wrapper


def _split(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [s.strip() for s in text.split(",") if s.strip()]


def _load(ctx: RunContext, path, response, features, aux) -> Dataset:
    return load_csv(ctx.add_input(path), response, _split(features), _split(aux))


def _partition(ctx: RunContext, ds: Dataset, partition, blocks, quantiles, category) -> Partition:
    given = [x is not None for x in (partition, blocks, quantiles, category)]
    if sum(given) != 1:
        raise click.UsageError("give exactly one of --partition, --blocks, --quantiles or --category")
    if partition is not None:
        return load_partition_csv(ctx.add_input(partition), ds)
    if blocks is not None:
        return partition_blocks(ds, blocks)
    if quantiles is not None:
        name, _, k = quantiles.rpartition(":")
        if not name or not k.isdigit():
            raise click.UsageError("--quantiles takes FEATURE:K")
        return partition_quantiles(ds, name, int(k))
    return partition_category(ds, category)


def _points(ds: Dataset, ids: str | None) -> tuple[list[int], list[dict]]:
    """Row positions of the requested ids; unknown ids become error entries."""
    if ids is None or ids == "all":
        return list(range(ds.n)), []
    rows, errors = [], []
    for tok in _split(ids):
        try:
            rows.append(ds.row_index(int(tok)))
        except (ValueError, KeyError, SubsetShapleyError) as exc:
            errors.append({"point": tok, "error": f"unknown test point: {exc}"})
    return rows, errors


def data_options(fn):
    for opt in reversed(
        [
            click.option("--train", "train_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Training CSV."),
            click.option("--response", default="y", show_default=True, help="Response column."),
            click.option("--features", default=None, help="Comma-separated feature columns (default: all others)."),
            click.option("--aux", default=None, help="Comma-separated non-feature columns to carry along."),
        ]
    ):
        fn = opt(fn)
    return fn


def partition_options(fn):
    for opt in reversed(
        [
            click.option("--partition", type=click.Path(exists=True, dir_okay=False), default=None, help="Partition CSV (row_id,subset[,label])."),
            click.option("--blocks", type=int, default=None, help="K contiguous blocks in row order."),
            click.option("--quantiles", default=None, help="FEATURE:K quantile bins."),
            click.option("--category", default=None, help="One subset per distinct value of this column."),
        ]
    ):
        fn = opt(fn)
    return fn


def common_options(fn):
    for opt in reversed(
        [
            click.option("--model", "model_spec", default="knn:3", show_default=True, help="1nn, allnn, knn:K, lm, forest:TREES:LEAVES[:SEED], zero or JSON."),
            click.option("--baseline", default="zero", show_default=True, help="zero, mean or const:C."),
            click.option("--seed", type=int, default=0, show_default=True),
            click.option("--jobs", type=int, default=None, help="Worker threads (default: CPU count)."),
            click.option("--cache-dir", type=click.Path(file_okay=False), default=None, help="On-disk model cache (default: $SUBSET_SHAPLEY_CACHE_DIR)."),
            click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory."),
        ]
    ):
        fn = opt(fn)
    return fn


def _jobs(jobs: int | None) -> int:
    return jobs if jobs and jobs > 0 else (os.cpu_count() or 1)


def _game(kind, train_ds, part, spec, test, rows, baseline, cache) -> Game:
    kind = GAMES.get(kind)
    if kind is None:
        raise click.UsageError("--game must be prediction, sqerr or mse")
    ids = [int(test.row_ids[r]) for r in rows]
    return Game(kind, train_ds, part, spec, test.features[rows], test.response[rows], baseline, cache, ids)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


# ----------------------------------------------------------------- commands


@click.group()
@click.version_option(__version__, prog_name="subset-shapley")
@click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug).")
def main(verbose):
    """Shapley values for the importance of training-data subsets."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.argument("kind", type=click.Choice(["sinusoid", "bias"]))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON with generator fields.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
@run_command
def generate(ctx: RunContext, kind, config_path, out):
    """Write train.csv, test.csv and partition.csv for a synthetic fixture.

    The sinusoid test set is the training series itself. The bias test set
    is a fresh draw with seed + 1.
    """
    cfg = {}
    if config_path:
        try:
            raw = Path(config_path).read_bytes()
            ctx.inputs[str(config_path)] = hashlib.sha256(raw).hexdigest()
            cfg = json.loads(raw.decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise click.UsageError(f"config is not valid JSON: {exc}") from None
    try:
        if kind == "sinusoid":
            sc = SinusoidConfig.from_dict(cfg)
            train_ds, part = generate_sinusoid(sc)
            test_ds, extra = train_ds, ["t"]
            resolved = {**sc.__dict__}
        else:
            sc = BiasScenario.from_dict(cfg)
            train_ds, part = generate_bias(sc)
            test_ds, _ = generate_bias(BiasScenario(**{**sc.__dict__, "seed": sc.seed + 1}))
            extra = ["x_D"]
            resolved = {**sc.__dict__}
    except (TypeError, ArgumentError) as exc:
        raise click.UsageError(f"bad {kind} config: {exc}") from None
    out = Path(out)
    train_ds.to_csv(out / "train.csv")
    test_ds.to_csv(out / "test.csv")
    part.to_csv(out / "partition.csv", train_ds)
    ctx.params["resolved_config"] = resolved
    ctx.params["feature_columns"] = list(train_ds.feature_names)
    ctx.params["aux_columns"] = extra
    click.echo(f"wrote {train_ds.n} training rows, {test_ds.n} test rows, K={part.K} to {out}")
    click.echo(f"pass --aux {','.join(extra)} so the non-feature columns stay out of the model")


@main.command()
@data_options
@partition_options
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@common_options
@click.option("--game", default="prediction", show_default=True, type=click.Choice(["prediction", "sqerr", "mse"]))
@click.option("-M", "--iterations", type=int, default=250, show_default=True)
@click.option("--mode", type=click.Choice(MODES), default="per_subset", show_default=True)
@click.option("--points", default=None, help="Comma-separated test row ids (default: all).")
@click.option("--trace", is_flag=True, help="Also write the running-mean trace CSV.")
@click.option("--curve", is_flag=True, help="Also write the learning curve of the trained coalitions.")
@click.option("--no-cache", is_flag=True, help="Retrain for every coalition request.")
@run_command
def explain(ctx, train_path, response, features, aux, partition, blocks, quantiles, category, test_path,
            model_spec, baseline, seed, jobs, cache_dir, out, game, iterations, mode, points, trace, curve, no_cache):
    """Monte Carlo subset importance for test points."""
    train_ds = _load(ctx, train_path, response, features, aux)
    part = _partition(ctx, train_ds, partition, blocks, quantiles, category)
    test = _load(ctx, test_path, response, ",".join(train_ds.feature_names), aux)
    spec, base = ModelSpec.parse(model_spec), BaselinePolicy.parse(baseline)
    ctx.cache = CoalitionCache(enabled=not no_cache, directory=cache_dir)
    rows, errors = _points(test, points)
    ctx.errors.extend(errors)
    if game == "mse":
        rows = list(range(test.n)) if points is None else rows
    if not rows:
        raise ArgumentError("no valid test points to explain")
    g = _game(game, train_ds, part, spec, test, rows, base, ctx.cache)
    estimates = estimate_mc_batch(g, iterations, seed, mode, trace=trace, jobs=_jobs(jobs))
    ctx.write_json("estimates.json", {"estimates": [e.to_dict() for e in estimates], "errors": errors})
    _write_rows(
        Path(out) / "phi.csv",
        ["point", "subset", "phi", "se"],
        [(e.point, lab, float(p), float(s)) for e in estimates for lab, p, s in zip(part.labels, e.phi, e.se)],
    )
    if trace:
        _write_rows(
            Path(out) / "trace.csv",
            ["point", "iteration", *part.labels],
            [(e.point, m + 1, *map(float, row)) for e in estimates for m, row in enumerate(e.trace)],
        )
    if curve:
        _emit_curve(ctx, train_ds, part, spec, test, base, curve_from_estimates(estimates))
    for e in estimates:
        click.echo(f"point {e.point}: " + " ".join(f"{lab}={p:+.6g}" for lab, p in zip(part.labels, e.phi)))
    return 1 if errors else 0


def _emit_curve(ctx, train_ds, part, spec, test, base, coalitions):
    pts = collect_curve(train_ds, part, spec, test, coalitions, ctx.cache, base)
    write_curve_csv(ctx.out / "curve.csv", pts)
    ctx.write_json("curve_summary.json", summarize_curve(pts).to_dict(part.labels))
    return pts


def _check_capacity(K: int, method: str):
    if K > MAX_TABLE_K:
        raise CapacityError(f"K={K} exceeds the exact-method limit of {MAX_TABLE_K} subsets")
    if method == "permutation" and K > MAX_PERMUTATION_K:
        raise CapacityError(f"K={K} exceeds the permutation-method limit of {MAX_PERMUTATION_K} subsets")


@main.command()
@data_options
@partition_options
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@common_options
@click.option("--game", default="prediction", show_default=True, type=click.Choice(["prediction", "sqerr", "mse"]))
@click.option("--method", type=click.Choice(["permutation", "weighted", "harsanyi"]), default="weighted", show_default=True)
@click.option("--points", "--point", "points", default=None, help="Comma-separated test row ids (default: all).")
@click.option("--curve", is_flag=True, help="Also write the learning curve of all 2^K coalitions.")
@run_command
def exact(ctx, train_path, response, features, aux, partition, blocks, quantiles, category, test_path,
          model_spec, baseline, seed, jobs, cache_dir, out, game, method, points, curve):
    """Exact subset Shapley values from the full coalition table."""
    train_ds = _load(ctx, train_path, response, features, aux)
    part = _partition(ctx, train_ds, partition, blocks, quantiles, category)
    _check_capacity(part.K, method)
    test = _load(ctx, test_path, response, ",".join(train_ds.feature_names), aux)
    spec, base = ModelSpec.parse(model_spec), BaselinePolicy.parse(baseline)
    ctx.cache = CoalitionCache(directory=cache_dir)
    rows, errors = _points(test, points)
    ctx.errors.extend(errors)
    if game == "mse":
        rows = list(range(test.n)) if points is None else rows
    if not rows:
        raise ArgumentError("no valid test points")
    g = _game(game, train_ds, part, spec, test, rows, base, ctx.cache)
    table = build_value_table(g, jobs=_jobs(jobs)).reshape(1 << part.K, -1)
    pairs = find_identical_subsets(train_ds, part)
    results, failed = [], False
    for p in range(g.n_outputs):
        col = np.ascontiguousarray(table[:, p])
        res = exact_shapley(col, method)
        report = check_axioms(res, pairs or None, seed=seed)
        failed |= not report.passed
        d = res.to_dict(part.labels)
        d.update(
            point=g.point_ids[p],
            phi0=float(g.phi0[p]),
            dividends={str(m): float(v) for m, v in enumerate(harsanyi(col).dividends)},
            axioms=report.to_dict(),
        )
        results.append(d)
        click.echo(f"point {g.point_ids[p]}: " + " ".join(f"{lab}={v:+.12g}" for lab, v in zip(part.labels, res.phi)))
    ctx.write_json("exact.json", {"game": g.describe(), "results": results, "errors": errors})
    if curve:
        _emit_curve(ctx, train_ds, part, spec, test, base, range(1 << part.K))
    return 1 if errors or failed else 0


@main.command()
@data_options
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--background", "background_path", type=click.Path(exists=True, dir_okay=False), default=None, help="Background CSV (default: training data).")
@common_options
@click.option("-M", "--iterations", type=int, default=250, show_default=True)
@click.option("--points", default=None)
@run_command
def features(ctx, train_path, response, features, aux, test_path, background_path,
             model_spec, baseline, seed, jobs, cache_dir, out, iterations, points):
    """Feature importance of the model trained on all data."""
    train_ds = _load(ctx, train_path, response, features, aux)
    cols = ",".join(train_ds.feature_names)
    test = _load(ctx, test_path, response, cols, aux)
    bg = _load(ctx, background_path, response, cols, aux) if background_path else train_ds
    spec = ModelSpec.parse(model_spec)
    fitted = train(spec, train_ds, BaselinePolicy.parse(baseline).constant(train_ds))
    rows, errors = _points(test, points)
    ctx.errors.extend(errors)
    results = []
    for r in rows:
        est = feature_shapley_mc(fitted, bg, test.features[r], iterations, seed, train_ds.feature_names)
        results.append({"point": int(test.row_ids[r]), "prediction": fitted.predict(test.features[r]), **est.to_dict()})
    ctx.write_json("features.json", {"results": results, "errors": errors})
    return 1 if errors else 0


@main.command()
@data_options
@partition_options
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--background", "background_path", type=click.Path(exists=True, dir_okay=False), default=None)
@common_options
@click.option("-M", "--iterations", type=int, default=250, show_default=True)
@click.option("--points", default=None)
@run_command
def combined(ctx, train_path, response, features, aux, partition, blocks, quantiles, category, test_path,
             background_path, model_spec, baseline, seed, jobs, cache_dir, out, iterations, points):
    """Joint subset-by-feature importance (a K x J matrix per point)."""
    train_ds = _load(ctx, train_path, response, features, aux)
    part = _partition(ctx, train_ds, partition, blocks, quantiles, category)
    cols = ",".join(train_ds.feature_names)
    test = _load(ctx, test_path, response, cols, aux)
    bg = _load(ctx, background_path, response, cols, aux) if background_path else train_ds
    spec, base = ModelSpec.parse(model_spec), BaselinePolicy.parse(baseline)
    ctx.cache = CoalitionCache(directory=cache_dir)
    rows, errors = _points(test, points)
    ctx.errors.extend(errors)
    results = []
    for r in rows:
        est = combined_shapley_mc(spec, train_ds, part, bg, test.features[r], iterations, seed, base, ctx.cache)
        results.append({"point": int(test.row_ids[r]), **est.to_dict()})
    ctx.write_json("combined.json", {"results": results, "errors": errors})
    return 1 if errors else 0


@main.command()
@click.option("--pool", "pool_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Pool CSV to acquire from.")
@click.option("--response", default="y", show_default=True)
@click.option("--features", default=None)
@click.option("--aux", default=None)
@partition_options
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--test-partition", required=True, type=click.Path(exists=True, dir_okay=False), help="Subset of origin for each test row.")
@click.option("--initial-train", type=click.Path(exists=True, dir_okay=False), default=None, help="Data for max weights (default: pool).")
@click.option("--initial-partition", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--initial-test", type=click.Path(exists=True, dir_okay=False), default=None, help="Points for max weights (default: test).")
@common_options
@click.option("--budget", type=int, required=True)
@click.option("--strategy", "strategies", default="equal,one,max:100", show_default=True, help="Comma list of equal, one, one:K, max:L.")
@click.option("--repeats", type=int, default=20, show_default=True)
@click.option("--target", default="all", show_default=True, help="all, top:FRACTION or top-per-subset:N (largest true responses).")
@click.option("--shapley-iterations", type=int, default=100, show_default=True, help="M for the max weights.")
@run_command
def acquire(ctx, pool_path, response, features, aux, partition, blocks, quantiles, category, test_path, test_partition,
            initial_train, initial_partition, initial_test, model_spec, baseline, seed, jobs, cache_dir, out,
            budget, strategies, repeats, target, shapley_iterations):
    """Compare budgeted acquisition strategies by test MSE relative to equal."""
    pool = _load(ctx, pool_path, response, features, aux)
    part = _partition(ctx, pool, partition, blocks, quantiles, category)
    cols = ",".join(pool.feature_names)
    test = _load(ctx, test_path, response, cols, aux)
    groups = load_partition_csv(ctx.add_input(test_partition), test).assignment
    spec = ModelSpec.parse(model_spec)
    ctx.cache = CoalitionCache(directory=cache_dir)

    if target == "all":
        target_rows = None
    elif target.startswith("top:"):
        target_rows = top_response_rows(test, fraction=float(target[4:]))
    elif target.startswith("top-per-subset:"):
        target_rows = top_response_rows(test, groups, per_group=int(target.split(":", 1)[1]))
    else:
        raise click.UsageError("--target must be all, top:FRACTION or top-per-subset:N")

    parsed = [Strategy.parse(s) for s in _split(strategies)]
    if any(s.kind == "max" for s in parsed):
        itrain = _load(ctx, initial_train, response, cols, aux) if initial_train else pool
        ipart = load_partition_csv(ctx.add_input(initial_partition), itrain) if initial_partition else part
        itest = _load(ctx, initial_test, response, cols, aux) if initial_test else test
        resolved = []
        for s in parsed:
            if s.kind == "max":
                w = importance_from_initial(itrain, ipart, itest, spec, s.L, shapley_iterations, seed, cache=ctx.cache)
                s = Strategy("max", L=s.L, weights=tuple(float(v) for v in w))
            resolved.append(s)
        parsed = resolved

    res = evaluate_strategies(pool, part, test, groups, parsed, spec, budget, repeats, seed, target_rows)
    res.write_csv(Path(out) / "strategies.csv", Path(out) / "per_subset.csv")
    ctx.write_json(
        "plans.json",
        {
            "plans": res.plans,
            "weights": {s.name: list(s.weights) for s in parsed if s.weights is not None},
            "mean_relative_mse": res.mean_relative(),
            "errors": res.errors,
        },
    )
    ctx.errors.extend({"strategy": k, "error": v} for k, v in res.errors.items())
    for name, rel in res.mean_relative().items():
        click.echo(f"{name}: {rel:.4f}")
    return 1 if res.errors else 0


@main.command()
@data_options
@partition_options
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@common_options
@click.option("--source", type=click.Choice(["exact", "mc"]), default="exact", show_default=True)
@click.option("-M", "--iterations", type=int, default=250, show_default=True)
@click.option("--mode", type=click.Choice(MODES), default="per_subset", show_default=True)
@run_command
def curve(ctx, train_path, response, features, aux, partition, blocks, quantiles, category, test_path,
          model_spec, baseline, seed, jobs, cache_dir, out, source, iterations, mode):
    """Extended learning curve: test MSE of the coalition models a run trains."""
    train_ds = _load(ctx, train_path, response, features, aux)
    part = _partition(ctx, train_ds, partition, blocks, quantiles, category)
    test = _load(ctx, test_path, response, ",".join(train_ds.feature_names), aux)
    spec, base = ModelSpec.parse(model_spec), BaselinePolicy.parse(baseline)
    ctx.cache = CoalitionCache(directory=cache_dir)
    g = _game("mse", train_ds, part, spec, test, list(range(test.n)), base, ctx.cache)
    if source == "exact":
        _check_capacity(part.K, "weighted")
        build_value_table(g, jobs=_jobs(jobs))
        coalitions = range(1 << part.K)
    else:
        coalitions = curve_from_estimates(estimate_mc_batch(g, iterations, seed, mode, jobs=_jobs(jobs)))
    pts = _emit_curve(ctx, train_ds, part, spec, test, base, coalitions)
    for size, m in summarize_curve(pts).by_size.items():
        click.echo(f"size {size}: mean mse {m:.6g}")


@main.command()
@data_options
@partition_options
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@common_options
@click.option("--game", default="prediction", show_default=True, type=click.Choice(["prediction", "sqerr", "mse"]))
@click.option("--source", type=click.Choice(["exact", "mc"]), default="exact", show_default=True)
@click.option("--method", type=click.Choice(["permutation", "weighted", "harsanyi"]), default="weighted", show_default=True)
@click.option("-M", "--iterations", type=int, default=250, show_default=True)
@click.option("--mode", type=click.Choice(MODES), default="per_subset", show_default=True)
@click.option("--points", "--point", "points", default=None)
@click.option("--tol", type=float, default=1e-10, show_default=True, help="Tolerance for exact results.")
@run_command
def check(ctx, train_path, response, features, aux, partition, blocks, quantiles, category, test_path,
          model_spec, baseline, seed, jobs, cache_dir, out, game, source, method, iterations, mode, points, tol):
    """Check the Shapley axioms on an exact or Monte Carlo run."""
    train_ds = _load(ctx, train_path, response, features, aux)
    part = _partition(ctx, train_ds, partition, blocks, quantiles, category)
    test = _load(ctx, test_path, response, ",".join(train_ds.feature_names), aux)
    spec, base = ModelSpec.parse(model_spec), BaselinePolicy.parse(baseline)
    ctx.cache = CoalitionCache(directory=cache_dir)
    rows, errors = _points(test, points)
    ctx.errors.extend(errors)
    if game == "mse":
        rows = list(range(test.n)) if points is None else rows
    if not rows:
        raise ArgumentError("no valid test points")
    g = _game(game, train_ds, part, spec, test, rows, base, ctx.cache)
    pairs = find_identical_subsets(train_ds, part)
    reports = []
    if source == "exact":
        _check_capacity(part.K, method)
        table = build_value_table(g, jobs=_jobs(jobs)).reshape(1 << part.K, -1)
        for p in range(g.n_outputs):
            rep = check_axioms(exact_shapley(np.ascontiguousarray(table[:, p]), method), pairs or None, tol=tol, seed=seed)
            reports.append((g.point_ids[p], rep))
    else:
        for e in estimate_mc_batch(g, iterations, seed, mode, jobs=_jobs(jobs)):
            reports.append((e.point, check_axioms(e, pairs, seed=seed)))
    ok = all(r.passed for _, r in reports)
    ctx.write_json(
        "axioms.json",
        {"passed": ok, "identical_pairs": [(i + 1, j + 1) for i, j in pairs],
         "reports": [{"point": pid, **r.to_dict()} for pid, r in reports], "errors": errors},
    )
    for pid, r in reports:
        status = "PASS" if r.passed else "FAIL"
        click.echo(f"point {pid}: {status} " + " ".join(f"{c.name}={c.residual:.3g}/{c.tolerance:.3g}" for c in r.checks))
    return 0 if ok and not errors else 1


if __name__ == "__main__":  # pragma: no cover
    main()
