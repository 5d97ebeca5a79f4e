"""Model training, calibrated prediction, cross-validation, and the
incremental retraining schedule.

A trained model bundles the feature subset it was fitted on, the
per-column standardizer, the SVM dual solution, and a sigmoid mapping
from decision values to posterior probabilities. Everything needed to
reproduce a prediction serializes to a versioned JSON document.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BinaryLabel
from .errors import (
    ColumnMismatchError,
    DegenerateLabelsError,
    NeuroprefError,
    SingleClassError,
    TooFewSamplesError,
    UnstratifiableFoldsError,
)
from .features import FeatureMatrix, FeatureVector
from .selection import (
    FeatureRanking,
    rank_features,
    resolve_feature_override,
    select_top_k,
)
from .svm import KernelParams, SmoSolution, polynomial_kernel, smo_solve

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainSettings:
    kernel: KernelParams = KernelParams()
    selection_alpha: float = 0.5
    top_k: int = 20
    feature_override: tuple[str, ...] | None = None
    seed: int = 0
    smo_tol: float = 1e-4
    smo_max_steps: int = 100_000


def platt_calibrate(
    decision_values: np.ndarray,
    labels: np.ndarray,
    max_iter: int = 200,
    tol: float = 1e-10,
) -> tuple[float, float]:
    """Fit p(y=+1 | f) = 1 / (1 + exp(A f + B)) by regularized MLE.

    Targets are the smoothed frequencies (N+ + 1)/(N+ + 2) and
    1/(N- + 2) rather than raw 0/1 labels; optimization is Newton's
    method with backtracking line search. A is negative whenever larger
    decision values mean 'like' more often than chance.
    """
    f = np.asarray(decision_values, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int(np.sum(y > 0))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("calibration requires both classes")
    t = np.where(y > 0, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(a: float, b: float) -> float:
        z = a * f + b
        pos = z >= 0
        val = np.empty_like(z)
        val[pos] = t[pos] * z[pos] + np.log1p(np.exp(-z[pos]))
        val[~pos] = (t[~pos] - 1.0) * z[~pos] + np.log1p(np.exp(z[~pos]))
        return float(val.sum())

    sigma = 1e-12  # Hessian ridge
    a, b = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = objective(a, b)
    for _ in range(max_iter):
        z = a * f + b
        pos = z >= 0
        p = np.empty_like(z)
        q = np.empty_like(z)
        ez_neg = np.exp(-z[pos])
        p[pos] = ez_neg / (1.0 + ez_neg)
        q[pos] = 1.0 / (1.0 + ez_neg)
        ez = np.exp(z[~pos])
        p[~pos] = 1.0 / (1.0 + ez)
        q[~pos] = ez / (1.0 + ez)
        d2 = p * q
        h11 = sigma + float(np.sum(f * f * d2))
        h22 = sigma + float(np.sum(d2))
        h21 = float(np.sum(f * d2))
        d1 = t - p
        g1 = float(np.sum(f * d1))
        g2 = float(np.sum(d1))
        if abs(g1) < tol and abs(g2) < tol:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            na, nb = a + step * da, b + step * db
            nf = objective(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            break  # line search exhausted; current point is the answer
    return float(a), float(b)


def _posterior(a: float, b: float, decision_value: float) -> float:
    z = a * decision_value + b
    if z >= 0:
        return float(math.exp(-z) / (1.0 + math.exp(-z)))
    return float(1.0 / (1.0 + math.exp(z)))


@dataclass(frozen=True)
class Prediction:
    decision_value: float
    posterior: float
    label: BinaryLabel

    @staticmethod
    def from_posterior(decision_value: float, posterior: float) -> "Prediction":
        # strict inequality: exactly 0.5 is not attraction
        label = BinaryLabel.LIKE if posterior > 0.5 else BinaryLabel.DISLIKE
        return Prediction(decision_value, posterior, label)


@dataclass
class TrainedModel:
    selected_indices: list[int]
    selected_names: tuple[str, ...]
    scaler_mean: np.ndarray
    scaler_std: np.ndarray
    support_vectors: np.ndarray  # standardized feature rows
    dual_coef: np.ndarray  # alpha_i * y_i at the support points
    bias: float
    kernel: KernelParams
    gamma: float  # resolved value actually used
    calibration_a: float
    calibration_b: float
    seed: int
    n_train: int
    ranking: dict | None = None
    schema_version: int = MODEL_SCHEMA_VERSION

    def decision_values(self, x_selected: np.ndarray) -> np.ndarray:
        z = (np.atleast_2d(x_selected) - self.scaler_mean) / self.scaler_std
        k = polynomial_kernel(z, self.support_vectors, self.gamma,
                              self.kernel.degree, self.kernel.coef0)
        return k @ self.dual_coef + self.bias

    def select_columns(self, values: np.ndarray, names: tuple[str, ...]) -> np.ndarray:
        if names == self.selected_names:
            return np.asarray(values, dtype=np.float64)
        index = {n: i for i, n in enumerate(names)}
        missing = [n for n in self.selected_names if n not in index]
        if missing:
            raise ColumnMismatchError(f"vector lacks model columns: {missing[:5]}")
        cols = [index[n] for n in self.selected_names]
        return np.asarray(values, dtype=np.float64)[..., cols]

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "selected_indices": [int(i) for i in self.selected_indices],
            "selected_names": list(self.selected_names),
            "scaler_mean": self.scaler_mean.tolist(),
            "scaler_std": self.scaler_std.tolist(),
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "kernel": self.kernel.to_dict(),
            "gamma": self.gamma,
            "calibration": {"a": self.calibration_a, "b": self.calibration_b},
            "seed": self.seed,
            "n_train": self.n_train,
            "ranking": self.ranking,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise NeuroprefError(
                f"unsupported model schema {d.get('schema_version')!r}"
            )
        kp = d["kernel"]
        return cls(
            selected_indices=[int(i) for i in d["selected_indices"]],
            selected_names=tuple(d["selected_names"]),
            scaler_mean=np.array(d["scaler_mean"], dtype=np.float64),
            scaler_std=np.array(d["scaler_std"], dtype=np.float64),
            support_vectors=np.array(d["support_vectors"], dtype=np.float64).reshape(
                len(d["dual_coef"]), -1
            ),
            dual_coef=np.array(d["dual_coef"], dtype=np.float64),
            bias=float(d["bias"]),
            kernel=KernelParams(
                degree=int(kp["degree"]),
                gamma=kp["gamma"],
                coef0=float(kp["coef0"]),
                C=float(kp["C"]),
            ),
            gamma=float(d["gamma"]),
            calibration_a=float(d["calibration"]["a"]),
            calibration_b=float(d["calibration"]["b"]),
            seed=int(d["seed"]),
            n_train=int(d["n_train"]),
            ranking=d.get("ranking"),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def train_model(matrix: FeatureMatrix, settings: TrainSettings = TrainSettings()) -> TrainedModel:
    """Standardize, select, solve the dual, and calibrate on one dataset.

    All fitted statistics (scaler, ranking, calibration) come from the
    rows of ``matrix`` only, so callers can enforce no-leakage simply by
    passing the training fold.
    """
    x, y = matrix.x, matrix.labels.astype(np.float64)
    if len(np.unique(y)) < 2:
        raise SingleClassError("training set contains a single class")
    if len(y) < 4:
        raise TooFewSamplesError(f"need >= 4 training rows, got {len(y)}")

    ranking_dict: dict | None = None
    if settings.feature_override:
        selected = resolve_feature_override(matrix.names, list(settings.feature_override))
    else:
        ranking = rank_features(x, y, alpha=settings.selection_alpha)
        k = min(settings.top_k, matrix.n_features)
        selected = select_top_k(ranking, k)
        ranking_dict = ranking.to_dict()

    x_sel = x[:, selected]
    mean = x_sel.mean(axis=0)
    std = x_sel.std(axis=0)
    keep = std > 1e-12
    if not keep.all():
        dropped = [matrix.names[selected[i]] for i in np.flatnonzero(~keep)]
        warnings.warn(f"dropping zero-variance selected columns: {dropped}")
        selected = [s for s, k_ in zip(selected, keep) if k_]
        x_sel, mean, std = x_sel[:, keep], mean[keep], std[keep]
    if x_sel.shape[1] == 0:
        raise NeuroprefError("every selected feature is constant on the training set")

    z = (x_sel - mean) / std
    gamma = settings.kernel.resolve_gamma(z.shape[1])
    kernel_matrix = polynomial_kernel(z, z, gamma, settings.kernel.degree, settings.kernel.coef0)
    solution: SmoSolution = smo_solve(
        kernel_matrix,
        y,
        c=settings.kernel.C,
        tol=settings.smo_tol,
        max_steps=settings.smo_max_steps,
        seed=settings.seed,
    )
    decisions = kernel_matrix @ (solution.alpha * y) + solution.bias
    cal_a, cal_b = platt_calibrate(decisions, y)

    support = solution.alpha > 1e-10
    return TrainedModel(
        selected_indices=[int(s) for s in selected],
        selected_names=tuple(matrix.names[s] for s in selected),
        scaler_mean=mean,
        scaler_std=std,
        support_vectors=z[support],
        dual_coef=(solution.alpha * y)[support],
        bias=solution.bias,
        kernel=settings.kernel,
        gamma=gamma,
        calibration_a=cal_a,
        calibration_b=cal_b,
        seed=settings.seed,
        n_train=len(y),
        ranking=ranking_dict,
    )


def predict(model: TrainedModel, vector: FeatureVector | np.ndarray,
            names: tuple[str, ...] | None = None) -> Prediction:
    """Calibrated prediction for one feature vector.

    Accepts a FeatureVector, or raw values plus their column names, or
    raw values already restricted to the model's columns.
    """
    if isinstance(vector, FeatureVector):
        values, names = vector.values, vector.names
    else:
        values = np.asarray(vector, dtype=np.float64)
        if names is None:
            if len(values) != len(model.selected_names):
                raise ColumnMismatchError(
                    f"bare vector of {len(values)} values does not match "
                    f"{len(model.selected_names)} model columns"
                )
            names = model.selected_names
    x_sel = model.select_columns(values, names)
    f = float(model.decision_values(x_sel)[0])
    p = _posterior(model.calibration_a, model.calibration_b, f)
    return Prediction.from_posterior(f, p)


def _predict_rows(model: TrainedModel, matrix: FeatureMatrix, rows: np.ndarray) -> np.ndarray:
    x_sel = model.select_columns(matrix.x[rows], matrix.names)
    f = model.decision_values(x_sel)
    p = np.array([_posterior(model.calibration_a, model.calibration_b, v) for v in f])
    return np.where(p > 0.5, 1, -1)


def stratified_folds(
    labels: np.ndarray, n_folds: int, rng: np.random.Generator, max_redeals: int = 100
) -> list[np.ndarray]:
    """Shuffle and deal indices into near-equal folds, both classes in each.

    Re-deals with fresh shuffles up to ``max_redeals`` times before
    giving up (which can only happen when a class has fewer members
    than folds).
    """
    labels = np.asarray(labels)
    n = len(labels)
    if n < n_folds:
        raise TooFewSamplesError(f"{n} samples < {n_folds} folds")
    classes = np.unique(labels)
    for _ in range(max_redeals):
        folds: list[list[int]] = [[] for _ in range(n_folds)]
        cursor = 0
        for cls in classes:
            idx = np.flatnonzero(labels == cls)
            rng.shuffle(idx)
            for i in idx:
                folds[cursor % n_folds].append(int(i))
                cursor += 1
        ok = all(len(np.unique(labels[np.array(f)])) == len(classes) for f in folds)
        if ok:
            return [np.array(sorted(f)) for f in folds]
    raise UnstratifiableFoldsError(
        f"could not deal {n_folds} folds with all classes present after {max_redeals} tries"
    )


def fit_fold(matrix: FeatureMatrix, train_idx: np.ndarray, settings: TrainSettings) -> TrainedModel:
    """Train on a row subset; the model never sees the other rows."""
    return train_model(matrix.subset_rows(train_idx), settings)


@dataclass
class CvResult:
    mean_accuracy: float
    std_accuracy: float
    repeat_accuracies: list[float]
    fold_accuracies: list[list[float]]
    n_folds: int
    n_repeats: int
    fold_sizes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mean_accuracy": self.mean_accuracy,
            "std_accuracy": self.std_accuracy,
            "repeat_accuracies": self.repeat_accuracies,
            "fold_accuracies": self.fold_accuracies,
            "n_folds": self.n_folds,
            "n_repeats": self.n_repeats,
            "fold_sizes": self.fold_sizes,
        }


def cross_validate(
    matrix: FeatureMatrix,
    settings: TrainSettings = TrainSettings(),
    n_folds: int = 10,
    n_repeats: int = 10,
    seed: int = 0,
) -> CvResult:
    """Repeated stratified k-fold accuracy.

    Standardization, feature selection, and calibration are all fitted
    inside each training fold (via :func:`train_model` on the fold's
    rows only). Mean and std are taken over the repeat averages.
    """
    repeat_acc: list[float] = []
    fold_acc_all: list[list[float]] = []
    fold_sizes: list[int] = []
    seq = np.random.SeedSequence(seed)
    for rep_seq in seq.spawn(n_repeats):
        rng = np.random.default_rng(rep_seq)
        folds = stratified_folds(matrix.labels, n_folds, rng)
        if not fold_sizes:
            fold_sizes = [len(f) for f in folds]
        accs: list[float] = []
        for held_out in range(n_folds):
            test_idx = folds[held_out]
            train_idx = np.concatenate(
                [folds[j] for j in range(n_folds) if j != held_out]
            )
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
        fold_sizes=fold_sizes,
    )


@dataclass(frozen=True)
class ReplayRecord:
    index: int  # 1-based arrival position
    event_id: str
    model_version: int
    decision_value: float
    posterior: float
    predicted: int  # +1 / -1
    truth: int | None
    correct: bool | None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "event_id": self.event_id,
            "model_version": self.model_version,
            "decision_value": self.decision_value,
            "posterior": self.posterior,
            "predicted": self.predicted,
            "truth": self.truth,
            "correct": self.correct,
        }


def incremental_session(
    initial: FeatureMatrix,
    arrivals: FeatureMatrix,
    schedule: tuple[int, ...] = (3, 6, 9),
    settings: TrainSettings = TrainSettings(),
) -> tuple[list[ReplayRecord], int]:
    """Predict arriving trials, retraining after the scheduled positions.

    The model starts from the initial training set; after predicting the
    trial at each schedule position it is retrained from scratch on the
    initial set plus every arrival acquired so far. Returns the per-trial
    records and the number of model versions trained.
    """
    schedule_set = set(schedule)
    model = train_model(initial, settings)
    version = 0
    records: list[ReplayRecord] = []
    for t in range(arrivals.n_trials):
        pos = t + 1
        pred = predict(model, arrivals.row(t))
        truth = int(arrivals.labels[t])
        predicted = 1 if pred.label == BinaryLabel.LIKE else -1
        records.append(
            ReplayRecord(
                index=pos,
                event_id=arrivals.event_ids[t] if arrivals.event_ids else str(t),
                model_version=version,
                decision_value=pred.decision_value,
                posterior=pred.posterior,
                predicted=predicted,
                truth=truth,
                correct=predicted == truth,
            )
        )
        if pos in schedule_set:
            grown = FeatureMatrix(
                np.vstack([initial.x, arrivals.x[: pos]]),
                initial.names,
                initial.modalities,
                np.concatenate([initial.labels, arrivals.labels[: pos]]),
            )
            model = train_model(grown, settings)
            version += 1
    return records, version + 1
