"""End-to-end orchestration: preprocess -> features -> model -> reports.

A run is a pure function of (config, seed, input sessions); everything a
stage produces is persisted under the run directory, and rerunning with
the same inputs reproduces ``report.json`` byte for byte. Failures leave
a machine-readable ``FAILED.json`` marker naming the stage.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .analysis import (
    AccuracyReport,
    accuracy_report,
    aggregate_gaze_ratios,
    factor_correlation,
    gaze_ratio,
    write_bar_chart_svg,
)
from .classify import (
    ReplayRecord,
    TrainSettings,
    TrainedModel,
    incremental_session,
    predict,
    train_model,
)
from .config import PipelineConfig
from .core import (
    Category,
    Session,
    StreamKind,
    Trial,
    epoch_extract,
    validate_session,
)
from .errors import (
    InsufficientLuminanceError,
    NeuroprefError,
    PipelineStageError,
    TooShortError,
)
from .features import (
    BLOCKING_FLAGS,
    FeatureMatrix,
    FeatureParams,
    build_feature_matrix,
)
from .preprocess import (
    ArtifactReport,
    FilterSpec,
    bandpass_notch,
    despike_channels,
    ica_artifact_reject,
    pupil_light_reflex_remove,
)
from .session_io import load_session
from .svm import KernelParams


def filter_spec_from_config(config: PipelineConfig) -> FilterSpec:
    f = config.filter
    return FilterSpec(f.band_low_hz, f.band_high_hz, f.notch_hz, f.notch_q, f.filter_order)


def feature_params_from_config(config: PipelineConfig) -> FeatureParams:
    f = config.features
    return FeatureParams(
        fd_k_max=f.fd_k_max,
        hoc_max_order=f.hoc_max_order,
        dwt_levels=f.dwt_levels,
        idt_max_dispersion=f.idt_max_dispersion,
        idt_min_duration_s=f.idt_min_duration_s,
        pupil_psd_nfft=f.pupil_psd_nfft,
    )


def train_settings_from_config(config: PipelineConfig) -> TrainSettings:
    s = config.svm
    sel = config.selection
    return TrainSettings(
        kernel=KernelParams(degree=s.degree, gamma=s.gamma, coef0=s.coef0, C=s.C),
        selection_alpha=sel.alpha,
        top_k=sel.top_k,
        feature_override=sel.features,
        seed=config.seed,
    )


class RunLog:
    """Append-only run log; lines go to the file and optionally stdout."""

    def __init__(self, path: Path | None, echo: bool = False):
        self.path = path
        self.echo = echo
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.touch()

    def line(self, message: str) -> None:
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(message + "\n")
        if self.echo:
            print(message)


def preprocess_session(
    session: Session, config: PipelineConfig, log: RunLog | None = None
) -> tuple[Session, ArtifactReport]:
    """Filter, ICA-clean, and despike the EEG stream of one session."""
    log = log or RunLog(None)
    report = ArtifactReport(ica_enabled=config.ica.enabled, despike_enabled=config.despike.enabled)
    eeg = session.stream_of(StreamKind.EEG)
    spec = filter_spec_from_config(config)

    t0 = time.perf_counter()
    data = bandpass_notch(eeg.samples, eeg.sample_rate_hz, spec)
    log.line(f"filter: band {spec.band_low_hz}-{spec.band_high_hz} Hz, "
             f"notch {spec.notch_hz} Hz ({time.perf_counter() - t0:.2f}s)")

    if config.ica.enabled:
        min_samples = config.ica.min_fit_seconds * eeg.sample_rate_hz
        if data.shape[0] >= min_samples:
            data, _, ica_report = ica_artifact_reject(
                data,
                eeg.sample_rate_hz,
                seed=config.seed,
                corr_threshold=config.ica.corr_threshold,
                kurtosis_threshold=config.ica.kurtosis_threshold,
                max_iter=config.ica.max_iter,
                tol=config.ica.tol,
                eog_lowpass_hz=config.ica.eog_lowpass_hz,
            )
            report.n_components_removed = ica_report.n_components_removed
            report.removed_indices = ica_report.removed_indices
            report.ica_converged = ica_report.ica_converged
            log.line(
                f"ica: removed {report.n_components_removed} components "
                f"{report.removed_indices} (converged={report.ica_converged})"
            )
        else:
            report.ica_converged = True
            log.line("ica: skipped (recording shorter than min_fit_seconds)")

    if config.despike.enabled:
        data, counts = despike_channels(
            data, eeg.channel_names, config.despike.levels, config.despike.threshold_scale
        )
        report.despiked_coefficients = counts
        log.line(f"despike: clamped coefficients per channel {counts}")

    return session.with_streams(
        tuple(
            s.with_samples(data) if s.kind == StreamKind.EEG else s
            for s in session.streams
        )
    ), report


def extract_trials(
    session: Session, config: PipelineConfig, report: ArtifactReport, log: RunLog | None = None
) -> list[Trial]:
    """Epoch every event, apply pupil reflex correction, drop blocked trials."""
    log = log or RunLog(None)
    trials: list[Trial] = []
    skipped = 0
    for event in session.events:
        trial = epoch_extract(session, event)
        if trial.quality_flags & BLOCKING_FLAGS:
            skipped += 1
            log.line(
                f"trial {event.event_id}: skipped "
                f"(flags {sorted(f.value for f in trial.quality_flags)})"
            )
            continue
        trials.append(trial)
    if skipped:
        log.line(f"epoching: skipped {skipped}/{len(session.events)} flagged trials")

    if config.plr.enabled and trials:
        try:
            trials, fit = pupil_light_reflex_remove(trials, config.plr.min_trials)
            report.plr_slope = fit.slope
            report.plr_applied = True
            log.line(f"plr: corrected with slope {fit.slope:.4f} mm/lum over {fit.n_trials} trials")
        except InsufficientLuminanceError as exc:
            report.plr_applied = False
            log.line(f"plr: skipped ({exc})")
    return trials


def session_feature_matrix(
    session: Session, config: PipelineConfig, log: RunLog | None = None
) -> tuple[FeatureMatrix, ArtifactReport, list[Trial]]:
    """Preprocess + epoch + extract features for one session."""
    clean, report = preprocess_session(session, config, log)
    trials = extract_trials(clean, config, report, log)
    matrix = build_feature_matrix(trials, feature_params_from_config(config))
    return matrix, report, trials


def _check_session(session: Session, config: PipelineConfig) -> None:
    diags = validate_session(session, allow_any_rate=config.ingest.allow_any_rate)
    if diags:
        summary = "; ".join(str(d) for d in diags[:5])
        raise PipelineStageError(
            "validate", f"{len(diags)} diagnostics for {session.session_id!r}: {summary}"
        )


def _save_meta_csv(matrix: FeatureMatrix, trials: list[Trial], path: Path) -> None:
    by_id = {t.event_id: t for t in trials}
    rows = []
    for i, event_id in enumerate(matrix.event_ids):
        t = by_id[event_id]
        rows.append(
            {
                "event_id": event_id,
                "category": matrix.categories[i],
                "label": int(matrix.labels[i]),
                "luminance": t.luminance,
            }
        )
    pd.DataFrame(rows).to_csv(path, index=False)


def _factor_analysis_inputs(session: Session) -> tuple[dict[str, dict[str, str]], dict[str, str]]:
    """Composite composition map and grouping keys from event metadata."""
    composition: dict[str, dict[str, str]] = {}
    groups: dict[str, str] = {}
    for ev in session.events:
        if ev.category != Category.COMPOSITE:
            continue
        parts = {
            factor: ev.metadata.get(f"{factor}_id", "")
            for factor in ("face", "cloth", "color")
        }
        if all(parts.values()):
            composition[ev.event_id] = parts
            viewer = ev.metadata.get("viewer_sex", "unknown")
            image = ev.metadata.get("image_sex", "unknown")
            groups[ev.event_id] = f"{viewer}_watching_{image}"
    return composition, groups


def _gaze_and_factors(
    session: Session,
    trials: list[Trial],
    matrix: FeatureMatrix,
    model: TrainedModel,
) -> tuple[dict, dict]:
    """ROI gaze ratios and posterior factor correlations for the report."""
    by_id = {ev.event_id: ev for ev in session.events}
    gaze_stats = []
    for t in trials:
        ev = by_id[t.event_id]
        if not ev.rois:
            continue
        viewer = ev.metadata.get("viewer_sex", "unknown")
        image = ev.metadata.get("image_sex", "unknown")
        try:
            gaze_stats.append(gaze_ratio(t, ev.rois, group=f"{viewer}_watching_{image}"))
        except NeuroprefError:
            continue
    gaze_section = aggregate_gaze_ratios(gaze_stats) if gaze_stats else {}

    posteriors: dict[str, float] = {}
    for i, event_id in enumerate(matrix.event_ids):
        posteriors[event_id] = predict(model, matrix.row(i)).posterior
    composition, groups = _factor_analysis_inputs(session)
    factor_section: dict = {}
    if composition:
        try:
            results = factor_correlation(posteriors, composition, groups)
            factor_section = {
                group: {
                    "factors": fc.factors,
                    "n_pairs": fc.n_pairs,
                    "n_dropped": fc.n_dropped,
                    "max_factor": fc.max_factor(),
                }
                for group, fc in results.items()
            }
        except NeuroprefError:
            factor_section = {}
    return gaze_section, factor_section


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _report_svgs(out_dir: Path, acc: AccuracyReport, gaze_section: dict) -> None:
    if acc.per_category or acc.pooled:
        labels = sorted(acc.per_category)
        values = [acc.per_category[k].mean_accuracy for k in labels]
        if acc.pooled:
            labels.append("all")
            values.append(acc.pooled.mean_accuracy)
        write_bar_chart_svg(out_dir / "report_accuracy.svg", "CV accuracy", labels, values)
    if gaze_section:
        first_group = sorted(gaze_section)[0]
        rois = sorted(gaze_section[first_group])
        values = [gaze_section[first_group][r] for r in rois]
        write_bar_chart_svg(
            out_dir / "report_gaze.svg", f"Gaze ratio ({first_group})", rois, values
        )


def run_report_for_session(
    session: Session, config: PipelineConfig, out_dir: Path, log: RunLog
) -> dict:
    """Full single-session run; returns the report payload it wrote."""
    _check_session(session, config)
    matrix, artifact_report, trials = session_feature_matrix(session, config, log)
    matrix.to_csv(out_dir / "features.csv")
    _save_meta_csv(matrix, trials, out_dir / "features_meta.csv")
    _write_json(out_dir / "artifact_report.json", artifact_report.to_dict())

    settings = train_settings_from_config(config)
    model = train_model(matrix, settings)
    model.save(out_dir / "model.json")
    log.line(f"model: trained on {matrix.n_trials} trials, "
             f"{len(model.selected_names)} selected features")

    acc = accuracy_report(
        matrix,
        settings,
        n_folds=config.cv.n_folds,
        n_repeats=config.cv.n_repeats,
        seed=config.seed,
        train_size_fractions=config.report.train_size_fractions,
        sweep_category=config.report.sweep_category,
    )
    gaze_section, factor_section = _gaze_and_factors(session, trials, matrix, model)

    ablated = []
    if not config.ica.enabled:
        ablated.append("ica")
    if not config.despike.enabled:
        ablated.append("despike")
    if not config.plr.enabled:
        ablated.append("plr")
    payload = {
        "session_id": session.session_id,
        "subject_id": session.subject_id,
        "seed": config.seed,
        "n_trials": matrix.n_trials,
        "ablated_stages": ablated,
        "accuracy": acc.to_dict(),
        "gaze_ratio": gaze_section,
        "factor_correlation": factor_section,
        "artifacts": artifact_report.to_dict(),
    }
    _write_json(out_dir / "report.json", payload)
    pd.DataFrame(acc.to_csv_rows()).to_csv(out_dir / "report.csv", index=False)
    if config.report.svg:
        _report_svgs(out_dir, acc, gaze_section)
    return payload


def run_pipeline(
    config: PipelineConfig,
    session_paths: list[str | Path],
    out_dir: str | Path,
    echo: bool = False,
) -> dict:
    """Run the full pipeline over one or more session directories.

    One session writes at the run-directory root; several write one
    subdirectory per session plus a summary. Any failure writes
    ``FAILED.json`` with the stage name and re-raises.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log = RunLog(out / "run.log", echo=echo)
    stage = "load"
    try:
        sessions = [load_session(p, config.ingest.allow_any_rate) for p in session_paths]
        stage = "run"
        if len(sessions) == 1:
            log.line(f"session {sessions[0].session_id}: starting")
            payload = run_report_for_session(sessions[0], config, out, log)
            log.line("done")
            return payload
        summary = {"sessions": {}}
        for session in sessions:
            sub = out / session.session_id
            sub.mkdir(parents=True, exist_ok=True)
            log.line(f"session {session.session_id}: starting")
            payload = run_report_for_session(session, config, sub, log)
            pooled = payload["accuracy"]["pooled"]
            summary["sessions"][session.session_id] = {
                "mean_accuracy": pooled["mean_accuracy"] if pooled else None,
                "n_trials": payload["n_trials"],
            }
        accs = [
            s["mean_accuracy"]
            for s in summary["sessions"].values()
            if s["mean_accuracy"] is not None
        ]
        summary["mean_accuracy_across_sessions"] = float(np.mean(accs)) if accs else None
        _write_json(out / "summary.json", summary)
        log.line("done")
        return summary
    except NeuroprefError as exc:
        _write_json(out / "FAILED.json", {"stage": stage, "error": str(exc)})
        log.line(f"FAILED at {stage}: {exc}")
        raise


@dataclass
class ReplayResult:
    records: list[ReplayRecord]
    n_versions: int
    agreement_rate: float

    def to_dict(self) -> dict:
        return {
            "n_versions": self.n_versions,
            "agreement_rate": self.agreement_rate,
            "records": [r.to_dict() for r in self.records],
        }


def session_replay(
    config: PipelineConfig,
    session_path: str | Path,
    out_dir: str | Path | None = None,
    schedule: tuple[int, ...] | None = None,
    train_count: int | None = None,
) -> ReplayResult:
    """Replay a recorded session against the incremental classifier.

    The first ``train_count`` labeled trials (arrival order) form the
    initial training set; every later trial is predicted before its
    label is revealed, and the model is retrained after the scheduled
    trial positions.
    """
    schedule = config.replay.schedule if schedule is None else schedule
    train_count = config.replay.train_count if train_count is None else train_count

    session = load_session(session_path, config.ingest.allow_any_rate)
    _check_session(session, config)
    log = RunLog(Path(out_dir) / "run.log" if out_dir else None)
    matrix, _, _ = session_feature_matrix(session, config, log)
    if matrix.n_trials <= train_count:
        raise TooShortError(
            f"session has {matrix.n_trials} labeled trials; "
            f"need more than train_count={train_count}"
        )
    initial = matrix.subset_rows(np.arange(train_count))
    arrivals = matrix.subset_rows(np.arange(train_count, matrix.n_trials))
    records, n_versions = incremental_session(
        initial, arrivals, schedule, train_settings_from_config(config)
    )
    agreement = float(np.mean([r.correct for r in records if r.correct is not None]))
    result = ReplayResult(records, n_versions, agreement)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "replay.json", result.to_dict())
        pd.DataFrame([r.to_dict() for r in records]).to_csv(out / "replay.csv", index=False)
    return result
