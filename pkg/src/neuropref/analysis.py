"""Accuracy reporting and factor analysis.

Covers per-category cross-validated accuracy with modality ablation and
a training-size sweep, region-of-interest gaze ratios, and Pearson
correlation between composite-image posteriors and their component
images' posteriors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classify import CvResult, TrainSettings, cross_validate
from .core import Roi, Trial
from .errors import InsufficientPairsError, NoValidGazeError
from .features import FeatureMatrix

#: Published benchmark accuracies used purely as a display banner in
#: reports; they are not reproducible from synthetic data.
REFERENCE_ACCURACY = {
    "face": 0.644,
    "cloth": 0.645,
    "color": 0.605,
    "composite": 0.744,
    "all": 0.692,
}


def pearson_two_pass(x: np.ndarray, y: np.ndarray) -> float:
    """Textbook two-pass Pearson correlation."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        return float("nan")
    return float(xc @ yc) / denom


def pearson_streaming(x: np.ndarray, y: np.ndarray) -> float:
    """Single-pass running-sums Pearson (must agree with two-pass)."""
    n = sx = sy = sxx = syy = sxy = 0.0
    for xi, yi in zip(x, y):
        n += 1.0
        sx += xi
        sy += yi
        sxx += xi * xi
        syy += yi * yi
        sxy += xi * yi
    cov = sxy - sx * sy / n
    vx = sxx - sx * sx / n
    vy = syy - sy * sy / n
    if vx <= 0.0 or vy <= 0.0:
        return float("nan")
    return cov / math.sqrt(vx * vy)


@dataclass(frozen=True)
class RoiStat:
    name: str
    count: int
    ratio: float


@dataclass(frozen=True)
class GazeStats:
    """Valid-sample counts and ratios per ROI for one trial."""

    event_id: str
    n_valid: int
    n_total: int
    rois: tuple[RoiStat, ...]
    group: str = "all"

    def ratio_of(self, name: str) -> float:
        for r in self.rois:
            if r.name == name:
                return r.ratio
        raise KeyError(name)


def gaze_ratio(trial: Trial, rois: tuple[Roi, ...], group: str = "all") -> GazeStats:
    """Fraction of the trial's valid gaze samples inside each ROI.

    Ratios are count-based (not area-based); boundary points count as
    inside. Invalid samples are excluded from the denominator.
    """
    names = trial.eye_channel_names
    eye = trial.eye_epoch
    gx = eye[:, names.index("gaze_x")]
    gy = eye[:, names.index("gaze_y")]
    valid = (eye[:, names.index("valid_left")] > 0.5) | (
        eye[:, names.index("valid_right")] > 0.5
    )
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise NoValidGazeError(f"trial {trial.event_id!r} has no valid gaze samples")
    stats = []
    for roi in rois:
        inside = (
            (gx[valid] >= roi.x)
            & (gx[valid] <= roi.x + roi.w)
            & (gy[valid] >= roi.y)
            & (gy[valid] <= roi.y + roi.h)
        )
        count = int(inside.sum())
        stats.append(RoiStat(roi.name, count, count / n_valid))
    return GazeStats(trial.event_id, n_valid, len(gx), tuple(stats), group)


def aggregate_gaze_ratios(stats: list[GazeStats]) -> dict[str, dict[str, float]]:
    """Mean per-trial ROI ratio per group (group -> roi -> mean ratio)."""
    out: dict[str, dict[str, list[float]]] = {}
    for st in stats:
        for roi in st.rois:
            out.setdefault(st.group, {}).setdefault(roi.name, []).append(roi.ratio)
    return {
        g: {name: float(np.mean(vals)) for name, vals in rois.items()}
        for g, rois in out.items()
    }


@dataclass(frozen=True)
class FactorCorrelation:
    """Pearson r between composite and component posteriors, per factor."""

    group: str
    factors: dict[str, float | None]  # factor -> r (None when undefined)
    n_pairs: dict[str, int]
    n_dropped: dict[str, int]

    def max_factor(self) -> str | None:
        defined = {f: r for f, r in self.factors.items() if r is not None}
        if not defined:
            return None
        return max(defined, key=lambda f: defined[f])


FACTORS = ("face", "cloth", "color")


def factor_correlation(
    posteriors: dict[str, float],
    composition: dict[str, dict[str, str]],
    groups: dict[str, str] | None = None,
    min_pairs: int = 3,
) -> dict[str, FactorCorrelation]:
    """Correlate composite posteriors with their components' posteriors.

    ``composition`` maps a composite event id to its component ids per
    factor. Pairs with a missing posterior are dropped and counted. An r
    on fewer than ``min_pairs`` pairs is reported as undefined (None);
    if every factor of every group is undefined this raises.
    """
    by_group: dict[str, dict[str, list[tuple[float, float]]]] = {}
    dropped: dict[str, dict[str, int]] = {}
    for comp_id, parts in composition.items():
        group = (groups or {}).get(comp_id, "all")
        for factor in FACTORS:
            comp_post = posteriors.get(comp_id)
            part_post = posteriors.get(parts.get(factor, ""))
            bucket = by_group.setdefault(group, {f: [] for f in FACTORS})
            drops = dropped.setdefault(group, {f: 0 for f in FACTORS})
            if comp_post is None or part_post is None:
                drops[factor] += 1
                continue
            bucket[factor].append((comp_post, part_post))

    results: dict[str, FactorCorrelation] = {}
    any_defined = False
    for group, buckets in by_group.items():
        factors: dict[str, float | None] = {}
        n_pairs: dict[str, int] = {}
        for factor in FACTORS:
            pairs = buckets[factor]
            n_pairs[factor] = len(pairs)
            if len(pairs) < min_pairs:
                factors[factor] = None
                continue
            a = np.array([p[0] for p in pairs])
            b = np.array([p[1] for p in pairs])
            r = pearson_two_pass(a, b)
            factors[factor] = None if math.isnan(r) else float(r)
            if factors[factor] is not None:
                any_defined = True
        results[group] = FactorCorrelation(group, factors, n_pairs, dropped[group])
    if not any_defined:
        raise InsufficientPairsError(
            f"no factor reached {min_pairs} pairs with defined correlation"
        )
    return results


@dataclass
class AccuracyReport:
    """Cross-validated accuracy per category plus ablations and sweep."""

    per_category: dict[str, CvResult] = field(default_factory=dict)
    pooled: CvResult | None = None
    by_modality: dict[str, CvResult] = field(default_factory=dict)
    training_size_sweep: dict[str, CvResult] = field(default_factory=dict)
    reference_accuracy: dict[str, float] = field(default_factory=lambda: dict(REFERENCE_ACCURACY))
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "reference_accuracy": dict(sorted(self.reference_accuracy.items())),
            "per_category": {k: v.to_dict() for k, v in sorted(self.per_category.items())},
            "pooled": self.pooled.to_dict() if self.pooled else None,
            "by_modality": {k: v.to_dict() for k, v in sorted(self.by_modality.items())},
            "training_size_sweep": {
                k: v.to_dict() for k, v in sorted(self.training_size_sweep.items())
            },
            "notes": list(self.notes),
        }

    def to_csv_rows(self) -> list[dict]:
        rows = []
        for section, results in (
            ("category", self.per_category),
            ("modality", self.by_modality),
            ("train_size", self.training_size_sweep),
        ):
            for key, res in sorted(results.items()):
                rows.append(
                    {
                        "section": section,
                        "key": key,
                        "mean_accuracy": res.mean_accuracy,
                        "std_accuracy": res.std_accuracy,
                        "n_folds": res.n_folds,
                        "n_repeats": res.n_repeats,
                    }
                )
        if self.pooled:
            rows.append(
                {
                    "section": "pooled",
                    "key": "all",
                    "mean_accuracy": self.pooled.mean_accuracy,
                    "std_accuracy": self.pooled.std_accuracy,
                    "n_folds": self.pooled.n_folds,
                    "n_repeats": self.pooled.n_repeats,
                }
            )
        return rows


def _stratifiable(labels: np.ndarray, n_folds: int) -> bool:
    """Every fold can hold both classes iff each class has >= n_folds members."""
    classes, counts = np.unique(labels, return_counts=True)
    return len(classes) == 2 and counts.min() >= n_folds


def _capped_settings(settings: TrainSettings, n_features: int) -> TrainSettings:
    if settings.feature_override or settings.top_k <= n_features:
        return settings
    return TrainSettings(
        kernel=settings.kernel,
        selection_alpha=settings.selection_alpha,
        top_k=n_features,
        feature_override=settings.feature_override,
        seed=settings.seed,
        smo_tol=settings.smo_tol,
        smo_max_steps=settings.smo_max_steps,
    )


def _subsampled_cv(
    matrix: FeatureMatrix,
    settings: TrainSettings,
    fraction: float,
    n_folds: int,
    n_repeats: int,
    seed: int,
) -> CvResult:
    """CV where each training fold is stratified-subsampled to a fraction."""
    from .classify import fit_fold, stratified_folds, _predict_rows

    repeat_acc: list[float] = []
    fold_acc_all: list[list[float]] = []
    seq = np.random.SeedSequence((seed, int(round(fraction * 1000))))
    for rep_seq in seq.spawn(n_repeats):
        rng = np.random.default_rng(rep_seq)
        folds = stratified_folds(matrix.labels, n_folds, rng)
        accs = []
        for held_out in range(n_folds):
            test_idx = folds[held_out]
            train_idx = np.concatenate([folds[j] for j in range(n_folds) if j != held_out])
            if fraction < 1.0:
                keep = []
                for cls in np.unique(matrix.labels[train_idx]):
                    cls_idx = train_idx[matrix.labels[train_idx] == cls]
                    n_keep = max(2, int(round(fraction * len(cls_idx))))
                    keep.append(rng.choice(cls_idx, size=min(n_keep, len(cls_idx)), replace=False))
                train_idx = np.sort(np.concatenate(keep))
            model = fit_fold(matrix, train_idx, settings)
            pred = _predict_rows(model, matrix, test_idx)
            accs.append(float(np.mean(pred == matrix.labels[test_idx])))
        fold_acc_all.append(accs)
        repeat_acc.append(float(np.mean(accs)))
    return CvResult(
        mean_accuracy=float(np.mean(repeat_acc)),
        std_accuracy=float(np.std(repeat_acc)),
        repeat_accuracies=repeat_acc,
        fold_accuracies=fold_acc_all,
        n_folds=n_folds,
        n_repeats=n_repeats,
    )


def accuracy_report(
    matrix: FeatureMatrix,
    settings: TrainSettings = TrainSettings(),
    n_folds: int = 10,
    n_repeats: int = 10,
    seed: int = 0,
    train_size_fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0),
    sweep_category: str = "composite",
) -> AccuracyReport:
    """Full accuracy evaluation of a feature matrix with category tags.

    Runs per-category CV, the pooled all-categories run, the modality
    ablation (eeg / eye / both), and a training-size sweep on the
    category with the most trials available (``sweep_category`` when
    present). Pure given (matrix, settings, seed).
    """
    report = AccuracyReport()
    if not matrix.categories:
        raise ValueError("matrix lacks category tags")
    cats = np.array(matrix.categories)

    for cat in sorted(set(matrix.categories)):
        idx = np.flatnonzero(cats == cat)
        sub = matrix.subset_rows(idx)
        if not _stratifiable(sub.labels, n_folds):
            report.notes.append(f"category {cat!r} skipped: too few rows per class for CV")
            continue
        report.per_category[cat] = cross_validate(sub, settings, n_folds, n_repeats, seed)

    report.pooled = cross_validate(matrix, settings, n_folds, n_repeats, seed)

    for modality in ("eeg", "eye"):
        sub = matrix.subset_modality(modality)
        msettings = _capped_settings(settings, sub.n_features)
        report.by_modality[modality] = cross_validate(sub, msettings, n_folds, n_repeats, seed)
    report.by_modality["both"] = report.pooled

    sweep_idx = (
        np.flatnonzero(cats == sweep_category)
        if sweep_category in set(matrix.categories)
        else np.arange(matrix.n_trials)
    )
    sweep_matrix = matrix.subset_rows(sweep_idx)
    if _stratifiable(sweep_matrix.labels, n_folds):
        for frac in train_size_fractions:
            report.training_size_sweep[f"{frac:g}"] = _subsampled_cv(
                sweep_matrix, settings, frac, n_folds, n_repeats, seed
            )
    else:
        report.notes.append("training-size sweep skipped: too few rows")
    return report


def write_bar_chart_svg(
    path,
    title: str,
    labels: list[str],
    values: list[float],
    y_max: float = 1.0,
    width: int = 480,
    height: int = 280,
) -> None:
    """Minimal static SVG bar chart (deterministic output, no deps)."""
    margin = 44
    plot_w = width - 2 * margin
    plot_h = height - 2 * margin
    n = max(len(values), 1)
    bar_w = plot_w / (1.5 * n + 0.5)
    gap = 0.5 * bar_w
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = height - margin - frac * plot_h
        parts.append(
            f'<text x="{margin - 6}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="10">{frac * y_max:g}</text>'
        )
        parts.append(
            f'<line x1="{margin - 3}" y1="{y:.1f}" x2="{margin}" y2="{y:.1f}" stroke="black"/>'
        )
    for i, (label, value) in enumerate(zip(labels, values)):
        x = margin + gap + i * (bar_w + gap)
        h = max(0.0, min(value / y_max, 1.0)) * plot_h
        y = height - margin - h
        parts.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" '
            f'fill="#4878a8"/>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.1f}" y="{height - margin + 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{label}</text>'
        )
        parts.append(
            f'<text x="{x + bar_w / 2:.1f}" y="{y - 4:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{value:.3f}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
