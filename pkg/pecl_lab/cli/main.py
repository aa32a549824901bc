import logging
from functools import wraps
from pathlib import Path

import click
import numpy as np

from ..config.config import ConfigManager, ExperimentConfig, default_seed
from ..contrastive.pairing import similarity_histogram
from ..dataset import io
from ..dataset.observations import (
    encounter_rates,
    filter_locations,
    species_prevalence,
    visit_distribution,
)
from ..dataset.spatial import SplitAssignment, check_split_safety, dbscan_clusters, split
from ..dataset.synthetic import synth_generate
from ..exceptions import ConfigError, DataError, GradientCheckError, PeclLabError
from ..utils.logging_config import resolve_log_level, setup_exception_logging, setup_logging

logger = logging.getLogger(__name__)


def exit_on_error(func):
    """Report library errors on stderr and exit with the error family's code."""

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PeclLabError as e:
            logger.debug(f"{func.__name__} failed", exc_info=True)
            click.echo(f"Error ({e.error_type}): {e}", err=True)
            for detail in getattr(e, "errors", [])[:20]:
                click.echo(f"  {detail}", err=True)
            click.get_current_context().exit(e.exit_code)

    return wrapper


def _load_config(ctx, overrides=None) -> ExperimentConfig:
    overrides = dict(overrides or {})
    out_dir = ctx.obj.get("out_dir")
    if out_dir:
        overrides["paths.output_dir"] = out_dir
    return ConfigManager(ctx.obj.get("config_path")).load_config(overrides)


def _resolve_seed(seed):
    """Explicit --seed, else PECL_LAB_SEED, else None (use the config)."""
    return seed if seed is not None else default_seed(fallback=None)


def _output_dir(config: ExperimentConfig) -> Path:
    path = Path(config.paths.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(value, flag: str):
    if not value:
        raise ConfigError(f"{flag} is required (flag or config paths)")
    return value


def _load_table(config: ExperimentConfig):
    return io.load_location_table(
        _require(config.paths.features, "--features"),
        _require(config.paths.labels, "--labels"),
        config.paths.locations,
        planar=config.prep.planar,
    )


def _load_assignment(config: ExperimentConfig, table) -> SplitAssignment:
    """Splits from --splits, else computed from the table's coordinates."""
    if config.paths.splits:
        return io.read_splits_json(config.paths.splits)
    if table.coordinates is None:
        raise ConfigError("either --splits or --locations is required")
    clusters = dbscan_clusters(table.coordinates, config.split.eps_metres, config.split.min_pts)
    assignment = split(table.location_ids, clusters, config.split.fractions, config.split.seed)
    check_split_safety(table.location_ids, table.coordinates, assignment, config.split.eps_metres)
    return assignment


def _echo_rows(rows):
    click.echo(f"{'model':<10} {'split':<5} {'metric':<13} {'mean':>12} {'sem':>12} {'n':>3}")
    for row in rows:
        click.echo(
            f"{row.model:<10} {row.split:<5} {row.metric:<13} {row.mean:>12.6g} {row.sem:>12.6g} {row.n_seeds:>3}"
        )


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML or JSON settings file")
@click.option("--out-dir", type=click.Path(file_okay=False), help="Output directory")
@click.option("--debug", is_flag=True, help="Verbose logging")
@click.pass_context
def cli(ctx, config_path, out_dir, debug):
    """Species-presence prediction with a paired-embeddings contrastive regulariser."""
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["out_dir"] = out_dir
    setup_logging(resolve_log_level(debug))


@cli.command()
@click.option("--observations", type=click.Path(dir_okay=False), help="observations.csv")
@click.option("--locations", type=click.Path(dir_okay=False), help="locations.csv")
@click.option("--min-obs", type=int, help="Minimum observation records per location")
@click.option("--species-count", type=int, help="Number of species (default: max index + 1)")
@click.option("--lenient", is_flag=True, help="Skip malformed rows instead of aborting")
@click.pass_context
@exit_on_error
def prep(ctx, observations, locations, min_obs, species_count, lenient):
    """Turn observation records into encounter-rate labels and summary tables."""
    config = _load_config(
        ctx,
        {
            "paths.observations": observations,
            "paths.locations": locations,
            "prep.min_observations": min_obs,
            "prep.species_count": species_count,
        },
    )
    records, errors = io.read_observations(_require(config.paths.observations, "--observations"), lenient=lenient)
    if errors:
        click.echo(f"Skipped {len(errors)} malformed rows")

    coordinates = None
    if config.paths.locations:
        coordinates = io.read_locations(config.paths.locations, planar=config.prep.planar)
    n_species = config.prep.species_count or max(r.species_id for r in records) + 1

    locations_all = encounter_rates(records, n_species, coordinates=coordinates)
    kept = filter_locations(locations_all, config.prep.min_observations)
    if not kept:
        raise DataError(
            f"no location has >= {config.prep.min_observations} observations "
            f"({len(locations_all)} locations before filtering)"
        )

    out = _output_dir(config)
    ids = [loc.location_id for loc in kept]
    labels = np.stack([loc.label for loc in kept])
    names = [f"species_{s}" for s in range(n_species)]
    io.write_labels_csv(out / "labels.csv", ids, labels, names)
    io.write_location_stats(out / "location_stats.csv", kept)
    if coordinates is not None:
        io.write_locations_csv(out / "locations.csv", ids, [(loc.x, loc.y) for loc in kept])

    io.write_rows_csv(
        out / "visit_distribution.csv",
        [{"n_visits": v, "n_locations": c} for v, c in visit_distribution(kept).items()],
        ["n_visits", "n_locations"],
    )
    io.write_rows_csv(
        out / "species_prevalence.csv",
        [{"species": name, "mean_rate": rate} for name, rate in zip(names, species_prevalence(kept))],
        ["species", "mean_rate"],
    )

    present = labels[labels.sum(axis=1) > 0]
    if len(present) >= 2:
        hist = similarity_histogram(present, config.prep.histogram_bins)
        columns = ["bin_lo", "bin_hi", "count_cosine", "count_cosine_squared"]
        rows = [dict(zip(columns, values)) for values in zip(*(hist[key].tolist() for key in columns))]
        io.write_rows_csv(out / "label_similarity_histogram.csv", rows, columns)
        click.echo(
            f"Mean label similarity {hist['mean_cosine']:.4f} (squared {hist['mean_cosine_squared']:.4f})"
        )

    click.echo(f"Kept {len(kept)} of {len(locations_all)} locations, {n_species} species")
    click.echo(f"Outputs written to {out}")


@cli.command("split")
@click.option("--labels", type=click.Path(dir_okay=False), help="labels.csv")
@click.option("--locations", type=click.Path(dir_okay=False), help="locations.csv")
@click.option("--eps", type=float, help="Cluster radius in metres")
@click.option("--fractions", type=(float, float, float), default=None, help="train val test fractions")
@click.option("--seed", type=int, help="Shuffle seed (default: PECL_LAB_SEED or config)")
@click.pass_context
@exit_on_error
def split_cmd(ctx, labels, locations, eps, fractions, seed):
    """Cluster locations and assign whole clusters to train/val/test."""
    config = _load_config(
        ctx,
        {
            "paths.labels": labels,
            "paths.locations": locations,
            "split.eps_metres": eps,
            "split.fractions": list(fractions) if fractions else None,
            "split.seed": _resolve_seed(seed),
        },
    )
    label_ids, _, _ = io.read_labels_csv(_require(config.paths.labels, "--labels"))
    coords = io.read_locations(_require(config.paths.locations, "--locations"), planar=config.prep.planar)
    missing = [loc for loc in label_ids if loc not in coords]
    if missing:
        raise DataError(f"{len(missing)} labelled locations lack coordinates, e.g. {missing[:3]}")

    xy = np.array([coords[loc] for loc in label_ids])
    clusters = dbscan_clusters(xy, config.split.eps_metres, config.split.min_pts)
    assignment = split(label_ids, clusters, config.split.fractions, config.split.seed)
    closest = check_split_safety(label_ids, xy, assignment, config.split.eps_metres)

    path = io.write_splits_json(_output_dir(config) / "splits.json", assignment)
    n_clusters = len(set(int(c) for c in clusters if c >= 0))
    click.echo(f"{n_clusters} clusters, {int(np.sum(clusters < 0))} isolated locations")
    for name, count in assignment.counts().items():
        click.echo(f"  {name}: {count}")
    click.echo(f"Closest cross-split pair: {closest:.1f} m")
    click.echo(f"Splits written to {path}")


@cli.command()
@click.option("--seed", type=int, help="Generator seed (default: PECL_LAB_SEED or config)")
@click.option("--n-locations", type=int, help="Number of locations")
@click.option("--species-count", type=int, help="Number of species")
@click.option("--n-habitats", type=int, help="Number of habitat prototypes")
@click.option("--noise", type=float, help="Feature noise scale")
@click.option("--features-format", type=click.Choice(["csv", "bin"]), default="csv")
@click.pass_context
@exit_on_error
def synth(ctx, seed, n_locations, species_count, n_habitats, noise, features_format):
    """Generate a synthetic dataset with known structure."""
    config = _load_config(
        ctx,
        {
            "synth.seed": _resolve_seed(seed),
            "synth.n_locations": n_locations,
            "synth.species_count": species_count,
            "synth.n_habitats": n_habitats,
            "synth.noise": noise,
        },
    )
    dataset = synth_generate(config.synth)
    table = dataset.table()
    out = _output_dir(config)

    if features_format == "bin":
        io.write_features_bin(out / "features.bin", table.location_ids, table.features)
    else:
        io.write_features_csv(out / "features.csv", table.location_ids, table.features)
    io.write_labels_csv(out / "labels.csv", table.location_ids, table.labels, table.species_names)
    io.write_locations_csv(out / "locations.csv", table.location_ids, table.coordinates)
    click.echo(
        f"Wrote {len(table)} locations, {table.species_count} species, {table.feature_dim} features to {out}"
    )


def _data_options(func):
    for option in reversed(
        [
            click.option("--features", type=click.Path(dir_okay=False), help="features.csv or features.bin"),
            click.option("--labels", type=click.Path(dir_okay=False), help="labels.csv"),
            click.option("--locations", type=click.Path(dir_okay=False), help="locations.csv"),
            click.option("--splits", type=click.Path(dir_okay=False), help="splits.json"),
        ]
    ):
        func = option(func)
    return func


def _data_overrides(features, labels, locations, splits):
    return {
        "paths.features": features,
        "paths.labels": labels,
        "paths.locations": locations,
        "paths.splits": splits,
    }


@cli.command()
@_data_options
@click.option("--seed", type=int, help="Train a single seed instead of the configured list")
@click.option("--epochs", type=int, help="Maximum epochs")
@click.option("--alpha", type=float, help="Contrastive weight")
@click.option("--baseline-only", is_flag=True, help="Only evaluate the mean-rate baseline")
@click.option("--workers", type=int, help="Parallel seed workers")
@click.pass_context
@exit_on_error
def train(ctx, features, labels, locations, splits, seed, epochs, alpha, baseline_only, workers):
    """Fit one model per seed and report mean and SEM of the test metrics."""
    from ..experiments.runner import ExperimentRunner
    from ..reporting.generator import ReportGenerator

    seed = _resolve_seed(seed)
    overrides = _data_overrides(features, labels, locations, splits)
    overrides.update(
        {
            "training.seeds": [seed] if seed is not None else None,
            "training.epochs": epochs,
            "training.workers": workers,
            "loss.alpha": alpha,
        }
    )
    config = _load_config(ctx, overrides)
    table = _load_table(config)
    assignment = _load_assignment(config, table)
    out = _output_dir(config)

    runner = ExperimentRunner(config, table, assignment, progress_callback=click.echo)
    result = runner.run(
        hyperparams=None if baseline_only else config.hyperparams(config.training.seeds[0]),
        baseline_only=baseline_only,
        checkpoint_dir=None if baseline_only else out / "checkpoints",
        name="baseline" if baseline_only else "train",
    )
    _echo_rows(result.rows)

    files = ReportGenerator(out, config.reporting.formats).generate_experiment_report(result)
    click.echo("\nReport files generated:")
    for fmt, paths in files.items():
        for path in paths:
            click.echo(f"  {fmt.upper()}: {path}")


@cli.command()
@_data_options
@click.option("--mode", type=click.Choice(["grid", "random"]), help="Search mode")
@click.option("--n-samples", type=int, help="Random-search candidates")
@click.option("--seed", type=int, help="Random-search sampler seed")
@click.option("--workers", type=int, help="Parallel seed workers")
@click.pass_context
@exit_on_error
def search(ctx, features, labels, locations, splits, mode, n_samples, seed, workers):
    """Train every candidate on all seeds and rank by validation MSE."""
    from ..experiments.search import HyperparameterSearch
    from ..reporting.generator import ReportGenerator

    overrides = _data_overrides(features, labels, locations, splits)
    overrides.update(
        {
            "search.mode": mode,
            "search.n_samples": n_samples,
            "search.seed": _resolve_seed(seed),
            "training.workers": workers,
        }
    )
    config = _load_config(ctx, overrides)
    table = _load_table(config)
    assignment = _load_assignment(config, table)
    out = _output_dir(config)

    ranked = HyperparameterSearch(config, table, assignment, out, progress_callback=click.echo).run()
    ReportGenerator(out, config.reporting.formats).generate_search_report(ranked)
    best = next((r for r in ranked if r.get("success")), None)
    if best is None:
        raise DataError(f"all {len(ranked)} candidates failed; see {out / 'search_results.jsonl'}")
    click.echo(
        f"Best of {len(ranked)}: lr={best['learning_rate']:.3g} batch={best['batch_size']} "
        f"k={best['k']} alpha={best['alpha']:.3g} tau={best['tau']:.3g} "
        f"val MSE {best['val_mse_mean']:.6g}"
    )


@cli.command()
@click.option("--trials", type=int, default=100, show_default=True, help="Random instances per suite")
@click.option("--seed", type=int, help="Instance seed (default: PECL_LAB_SEED or 0)")
@click.option("--suite", "suites", multiple=True, help="Restrict to these suites")
@click.pass_context
@exit_on_error
def gradcheck(ctx, trials, seed, suites):
    """Compare every analytic gradient with central finite differences."""
    from ..verification.gradcheck import GradientChecker

    seed = _resolve_seed(seed)
    config = _load_config(ctx)
    try:
        checker = GradientChecker(trials=trials, seed=seed or 0, progress_callback=click.echo)
        report = checker.run(suites=list(suites) or None, raise_on_failure=False)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    path = _output_dir(config) / "gradcheck.json"
    path.write_text(report.model_dump_json(indent=2) + "\n")
    if report.vacuous:
        click.echo("No trials run; nothing verified")
    if not report.passed:
        raise GradientCheckError(f"{len(report.failures())} gradient checks failed; details in {path}")
    click.echo(f"All gradient checks passed ({path})")


@cli.command("eval")
@_data_options
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False), help="Checkpoint JSON")
@click.option("--split", "split_name", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.pass_context
@exit_on_error
def eval_cmd(ctx, features, labels, locations, splits, checkpoint, split_name):
    """Evaluate a saved checkpoint on one split against the mean-rate baseline."""
    from ..evaluation.metrics import build_metric_report
    from ..experiments.runner import build_augmenter, split_tables
    from ..model.baseline import mean_rate_fit, mean_rate_predict
    from ..model.checkpoint import load_checkpoint
    from ..model.projector import predict

    config = _load_config(ctx, _data_overrides(features, labels, locations, splits))
    table = _load_table(config)
    tables = split_tables(table, _load_assignment(config, table))
    target = tables[split_name]
    if len(target) == 0:
        raise DataError(f"{split_name} split is empty")
    if len(tables["train"]) == 0:
        raise DataError("train split is empty; no baseline")

    loaded = load_checkpoint(checkpoint)
    x = target.features
    augmenter = build_augmenter(config, target.feature_dim)
    if augmenter is not None:
        x = augmenter(x, None, training=False)
    preds = predict(loaded.encoder, loaded.projector, x)
    baseline = mean_rate_predict(mean_rate_fit(tables["train"].labels), len(target))
    report = build_metric_report(
        target.labels,
        preds,
        baseline,
        location_ids=target.location_ids,
        species_names=target.species_names,
    )

    path = _output_dir(config) / f"eval_{split_name}.json"
    path.write_text(report.model_dump_json(indent=2) + "\n")
    for key, value in report.headline().items():
        click.echo(f"{key:<13} {'-' if value is None else format(value, '.6g')}")
    click.echo(f"Metrics written to {path}")


def main(argv=None) -> int:
    """Console entry point; maps failures onto exit codes 0/1/2/3."""
    setup_exception_logging()
    try:
        rv = cli.main(args=argv, prog_name="pecl-lab", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return ConfigError.exit_code
    except click.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except PeclLabError as e:
        click.echo(f"Error ({e.error_type}): {e}", err=True)
        return e.exit_code
    except OSError as e:
        click.echo(f"Error (data_error): {e}", err=True)
        return DataError.exit_code
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    raise SystemExit(main())
