"""Single pipeline configuration covering every stage's parameters.

The on-disk form is one JSON document mirroring the dataclass tree.
Unknown keys are rejected (typos should fail loudly) and a loaded file
re-serializes to the same logical content.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import InvalidConfigError


@dataclass(frozen=True)
class IngestConfig:
    allow_any_rate: bool = False


@dataclass(frozen=True)
class FilterConfig:
    band_low_hz: float = 0.01
    band_high_hz: float = 120.0
    notch_hz: float = 60.0
    notch_q: float = 30.0
    filter_order: int = 4


@dataclass(frozen=True)
class IcaConfig:
    enabled: bool = True
    corr_threshold: float = 0.7
    kurtosis_threshold: float = 5.0
    max_iter: int = 500
    tol: float = 1e-6
    eog_lowpass_hz: float = 4.0
    min_fit_seconds: float = 10.0


@dataclass(frozen=True)
class DespikeConfig:
    enabled: bool = True
    levels: int = 5
    threshold_scale: float = 4.0


@dataclass(frozen=True)
class PlrConfig:
    enabled: bool = True
    min_trials: int = 5


@dataclass(frozen=True)
class FeatureConfig:
    fd_k_max: int = 8
    hoc_max_order: int = 10
    dwt_levels: int = 5
    idt_max_dispersion: float = 0.04
    idt_min_duration_s: float = 0.1
    pupil_psd_nfft: int = 4096


@dataclass(frozen=True)
class SelectionConfig:
    alpha: float = 0.5
    top_k: int = 20
    features: tuple[str, ...] | None = None  # manual override, exact names or globs


@dataclass(frozen=True)
class SvmConfig:
    degree: int = 4
    gamma: float | None = None  # None -> 1 / n_selected_features
    coef0: float = 1.0
    C: float = 1.0


@dataclass(frozen=True)
class CvConfig:
    n_folds: int = 10
    n_repeats: int = 10


@dataclass(frozen=True)
class ReplayConfig:
    schedule: tuple[int, ...] = (3, 6, 9)
    train_count: int = 30


@dataclass(frozen=True)
class ReportConfig:
    train_size_fractions: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    sweep_category: str = "composite"
    svg: bool = True


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    ingest: IngestConfig = field(default_factory=IngestConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    ica: IcaConfig = field(default_factory=IcaConfig)
    despike: DespikeConfig = field(default_factory=DespikeConfig)
    plr: PlrConfig = field(default_factory=PlrConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    cv: CvConfig = field(default_factory=CvConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    report: ReportConfig = field(default_factory=ReportConfig)


def _to_jsonable(value: Any) -> Any:
    if dataclasses.is_dataclass(value):
        return {f.name: _to_jsonable(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, tuple):
        return [_to_jsonable(v) for v in value]
    return value


def _from_dict(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise InvalidConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise InvalidConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        raw = data[name]
        sub = path + "." + name if path else name
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type in _SECTION_TYPES
        ):
            section_cls = _SECTION_TYPES.get(f.type, f.type) if isinstance(f.type, str) else f.type
            kwargs[name] = _from_dict(section_cls, raw, sub)
        elif isinstance(raw, list):
            kwargs[name] = tuple(raw)
        else:
            kwargs[name] = raw
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc


_SECTION_TYPES = {
    "IngestConfig": IngestConfig,
    "FilterConfig": FilterConfig,
    "IcaConfig": IcaConfig,
    "DespikeConfig": DespikeConfig,
    "PlrConfig": PlrConfig,
    "FeatureConfig": FeatureConfig,
    "SelectionConfig": SelectionConfig,
    "SvmConfig": SvmConfig,
    "CvConfig": CvConfig,
    "ReplayConfig": ReplayConfig,
    "ReportConfig": ReportConfig,
}


def config_to_dict(config: PipelineConfig) -> dict:
    return _to_jsonable(config)


def config_from_dict(data: dict) -> PipelineConfig:
    return _from_dict(PipelineConfig, data, "")


def load_config(path: str | Path) -> PipelineConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def save_config(config: PipelineConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
