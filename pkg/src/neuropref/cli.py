"""Command-line interface.

Subcommands: synth, validate, preprocess, features, select, train,
predict, cv, report, session-replay. Exit codes: 0 ok, 1 domain error,
2 usage error.
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd

from . import pipeline as pl
from .classify import TrainedModel, cross_validate, predict as predict_one, train_model
from .config import PipelineConfig, config_to_dict, load_config
from .core import BinaryLabel, validate_session
from .errors import NeuroprefError
from .features import FeatureMatrix, canonical_feature_names
from .selection import rank_features, select_top_k
from .session_io import load_session, save_session
from .synth import GeneratorConfig, generate_corpus, generate_session


def _load_pipeline_config(config_path: str | None, seed: int | None) -> PipelineConfig:
    config = load_config(config_path) if config_path else PipelineConfig()
    if seed is not None:
        config = dataclasses.replace(config, seed=seed)
    return config


def domain_errors(fn):
    """Map domain errors to exit code 1 (usage errors stay click's 2)."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except NeuroprefError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
    help="Pipeline config JSON (defaults apply when omitted).",
)
seed_option = click.option("--seed", type=int, default=None, help="Override the config seed.")


@click.group()
def main():
    """Attraction recognition pipeline for EEG + eye-tracking sessions."""


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--corpus", is_flag=True, help="Write a multi-subject corpus tree.")
@click.option("--subjects", type=int, default=13, show_default=True)
@click.option("--effect-size", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trials", type=str, default="30,30,30,54", show_default=True,
              help="face,cloth,color,composite event counts.")
@click.option("--eeg-rate", type=click.Choice(["250", "500"]), default="250", show_default=True)
@domain_errors
def synth(out_dir, corpus, subjects, effect_size, seed, trials, eeg_rate):
    """Generate synthetic session(s) with a planted affect signature."""
    try:
        n_face, n_cloth, n_color, n_composite = (int(v) for v in trials.split(","))
    except ValueError:
        raise click.UsageError("--trials expects four comma-separated ints")
    config = GeneratorConfig(
        n_face=n_face,
        n_cloth=n_cloth,
        n_color=n_color,
        n_composite=n_composite,
        effect_size=effect_size,
        eeg_rate_hz=float(eeg_rate),
        seed=seed,
    )
    if corpus:
        paths = generate_corpus(config, out_dir, n_subjects=subjects)
        click.echo(f"wrote {len(paths)} sessions under {out_dir}")
    else:
        session, truth = generate_session(config)
        save_session(session, out_dir)
        with open(Path(out_dir) / "truth.json", "w") as fh:
            json.dump(truth, fh, indent=2, sort_keys=True)
            fh.write("\n")
        click.echo(f"wrote session with {len(session.events)} events to {out_dir}")


@main.command()
@click.argument("session_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--allow-any-rate", is_flag=True, help="Accept nonstandard sampling rates.")
@domain_errors
def validate(session_dirs, allow_any_rate):
    """Check session directories against every ingest invariant."""
    total = 0
    for sdir in session_dirs:
        session = load_session(sdir, allow_any_rate=allow_any_rate)
        diags = validate_session(session, allow_any_rate=allow_any_rate)
        for d in diags:
            click.echo(f"{sdir}: {d}")
        total += len(diags)
        if not diags:
            click.echo(f"{sdir}: ok ({len(session.events)} events)")
    if total:
        click.echo(f"{total} diagnostics", err=True)
        sys.exit(1)


@main.command()
@click.argument("session_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@config_option
@seed_option
@click.option("--no-ica", is_flag=True, help="Skip independent-component rejection.")
@click.option("--no-despike", is_flag=True, help="Skip wavelet despiking.")
@click.option("--no-plr", is_flag=True, help="Skip pupil light-reflex removal.")
@domain_errors
def preprocess(session_dir, out_dir, config_path, seed, no_ica, no_despike, no_plr):
    """Write a cleaned copy of a session plus its artifact report."""
    config = _apply_ablations(_load_pipeline_config(config_path, seed), no_ica, no_despike, no_plr)
    session = load_session(session_dir, config.ingest.allow_any_rate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = pl.RunLog(out / "run.log")
    clean, report = pl.preprocess_session(session, config, log)
    save_session(clean, out)
    with open(out / "artifact_report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"preprocessed session written to {out_dir}")


def _apply_ablations(config: PipelineConfig, no_ica: bool, no_despike: bool,
                     no_plr: bool) -> PipelineConfig:
    if no_ica:
        config = dataclasses.replace(config, ica=dataclasses.replace(config.ica, enabled=False))
    if no_despike:
        config = dataclasses.replace(
            config, despike=dataclasses.replace(config.despike, enabled=False)
        )
    if no_plr:
        config = dataclasses.replace(config, plr=dataclasses.replace(config.plr, enabled=False))
    return config


@main.command()
@click.argument("session_dir", required=False,
                type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--layout", is_flag=True, help="Print the canonical column list and exit.")
@config_option
@seed_option
@click.option("--no-ica", is_flag=True)
@click.option("--no-despike", is_flag=True)
@click.option("--no-plr", is_flag=True)
@domain_errors
def features(session_dir, out_dir, layout, config_path, seed, no_ica, no_despike, no_plr):
    """Extract the per-trial feature matrix from a session."""
    if layout:
        names, modalities = canonical_feature_names()
        for name, modality in zip(names, modalities):
            click.echo(f"{name},{modality}")
        return
    if session_dir is None or out_dir is None:
        raise click.UsageError("SESSION_DIR and --out are required unless --layout is given")
    config = _apply_ablations(_load_pipeline_config(config_path, seed), no_ica, no_despike, no_plr)
    session = load_session(session_dir, config.ingest.allow_any_rate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrix, report, trials = pl.session_feature_matrix(
        session, config, pl.RunLog(out / "run.log")
    )
    matrix.to_csv(out / "features.csv")
    pl._save_meta_csv(matrix, trials, out / "features_meta.csv")
    with open(out / "artifact_report.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"{matrix.n_trials} trials x {matrix.n_features} features -> {out / 'features.csv'}")


@main.command()
@click.argument("features_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--top-k", type=int, default=None, help="Report the top-k selection.")
@click.option("--alpha", type=float, default=None, help="Relevance/redundancy mixing weight.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the ranking JSON here instead of stdout.")
@config_option
@seed_option
@domain_errors
def select(features_csv, top_k, alpha, out_path, config_path, seed):
    """Rank features on a saved matrix and print/save the selection."""
    config = _load_pipeline_config(config_path, seed)
    alpha = config.selection.alpha if alpha is None else alpha
    top_k = config.selection.top_k if top_k is None else top_k
    matrix = FeatureMatrix.from_csv(features_csv)
    ranking = rank_features(matrix.x, matrix.labels, alpha=alpha)
    chosen = select_top_k(ranking, min(top_k, matrix.n_features))
    payload = {
        "ranking": ranking.to_dict(),
        "top_k": [{"index": i, "name": matrix.names[i]} for i in chosen],
    }
    if out_path:
        with open(out_path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        click.echo(f"ranking written to {out_path}")
    else:
        for entry in payload["top_k"]:
            click.echo(f"{entry['index']}\t{entry['name']}")


@main.command()
@click.argument("features_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "model_path", required=True, type=click.Path(dir_okay=False))
@click.option("--features", "feature_override", type=str, default=None,
              help="Comma-separated column names/globs; bypasses ranking.")
@config_option
@seed_option
@domain_errors
def train(features_csv, model_path, feature_override, config_path, seed):
    """Train a calibrated polynomial-kernel model on a feature matrix."""
    config = _load_pipeline_config(config_path, seed)
    settings = pl.train_settings_from_config(config)
    if feature_override:
        settings = dataclasses.replace(
            settings, feature_override=tuple(v.strip() for v in feature_override.split(","))
        )
    matrix = FeatureMatrix.from_csv(features_csv)
    model = train_model(matrix, settings)
    model.save(model_path)
    click.echo(
        f"model on {matrix.n_trials} trials, features: {', '.join(model.selected_names[:4])}"
        + ("..." if len(model.selected_names) > 4 else "")
    )


@main.command()
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("features_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@domain_errors
def predict(model_path, features_csv, out_path):
    """Predict like/dislike with posteriors for every matrix row."""
    model = TrainedModel.load(model_path)
    matrix = FeatureMatrix.from_csv(features_csv)
    rows = []
    for i in range(matrix.n_trials):
        p = predict_one(model, matrix.row(i))
        rows.append(
            {
                "row": i,
                "decision_value": p.decision_value,
                "posterior": p.posterior,
                "predicted": 1 if p.label == BinaryLabel.LIKE else -1,
                "label": int(matrix.labels[i]),
            }
        )
    df = pd.DataFrame(rows)
    accuracy = float(np.mean(df["predicted"] == df["label"]))
    if out_path:
        df.to_csv(out_path, index=False)
        click.echo(f"{len(rows)} predictions -> {out_path} (accuracy {accuracy:.3f})")
    else:
        click.echo(df.to_string(index=False))
        click.echo(f"accuracy {accuracy:.3f}")


@main.command()
@click.argument("features_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--folds", type=int, default=None)
@click.option("--repeats", type=int, default=None)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@config_option
@seed_option
@domain_errors
def cv(features_csv, folds, repeats, out_path, config_path, seed):
    """Repeated stratified cross-validation on a saved feature matrix."""
    config = _load_pipeline_config(config_path, seed)
    folds = config.cv.n_folds if folds is None else folds
    repeats = config.cv.n_repeats if repeats is None else repeats
    matrix = FeatureMatrix.from_csv(features_csv)
    result = cross_validate(
        matrix, pl.train_settings_from_config(config), folds, repeats, config.seed
    )
    click.echo(
        f"accuracy {result.mean_accuracy:.4f} +- {result.std_accuracy:.4f} "
        f"({folds}-fold x {repeats} repeats)"
    )
    if out_path:
        with open(out_path, "w") as fh:
            json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@main.command()
@click.argument("session_dirs", nargs=-1, required=True,
                type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@config_option
@seed_option
@click.option("--no-ica", is_flag=True)
@click.option("--no-despike", is_flag=True)
@click.option("--no-plr", is_flag=True)
@click.option("--echo-log", is_flag=True, help="Mirror run.log lines to stdout.")
@domain_errors
def report(session_dirs, out_dir, config_path, seed, no_ica, no_despike, no_plr, echo_log):
    """Run the full pipeline and write model + accuracy/factor reports."""
    config = _apply_ablations(_load_pipeline_config(config_path, seed), no_ica, no_despike, no_plr)
    pl.run_pipeline(config, list(session_dirs), out_dir, echo=echo_log)
    click.echo(f"run complete -> {out_dir}")


@main.command("session-replay")
@click.argument("session_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--schedule", type=str, default=None,
              help='Comma-separated retrain positions; "" disables retraining.')
@click.option("--train-count", type=int, default=None,
              help="Arrival-ordered trials forming the initial training set.")
@config_option
@seed_option
@domain_errors
def session_replay(session_dir, out_dir, schedule, train_count, config_path, seed):
    """Replay a session through the incremental prediction protocol."""
    config = _load_pipeline_config(config_path, seed)
    parsed_schedule = None
    if schedule is not None:
        parsed_schedule = tuple(int(v) for v in schedule.split(",") if v.strip())
    result = pl.session_replay(
        config, session_dir, out_dir, schedule=parsed_schedule, train_count=train_count
    )
    click.echo(
        f"{len(result.records)} prediction trials, {result.n_versions} model versions, "
        f"agreement {result.agreement_rate:.3f}"
    )


@main.command("show-config")
@config_option
def show_config(config_path):
    """Print the effective configuration (defaults merged with --config)."""
    config = load_config(config_path) if config_path else PipelineConfig()
    click.echo(json.dumps(config_to_dict(config), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
