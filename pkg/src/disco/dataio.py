"""Line-delimited JSON interchange, run configuration, and report writers.

A dataset file is one header line followed by one JSON object per image.
Grouping is implicit: images sharing a prompt_id form one group, and every
member must agree on the prompt's target count. All validation failures
report the 1-based line number they occurred on.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .curriculum import CurriculumConfig
from .embeddings import NORM_TOLERANCE, FaceRecord
from .grpo import TrainConfig
from .metrics import MetricsConfig, MetricsReport, MetricsSlice
from .rewards import (
    WEIGHT_PRESETS,
    AGGREGATIONS,
    GroupRecord,
    ImageRecord,
    RewardBreakdown,
    RewardWeights,
)

FORMAT_VERSION = "disco/1"

_HEADER_KEYS = {"format_version", "embedding_dim", "det_threshold", "producer"}
_RECORD_KEYS = {"image_id", "prompt_id", "target_count", "faces", "tag", "quality_raw"}
_FACE_KEYS = {"embedding", "confidence", "bbox"}


class SchemaError(ValueError):
    """A line failed structural validation."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class NormError(ValueError):
    """An embedding's norm is too far from 1 to be trusted."""

    def __init__(self, line: int, norm: float):
        self.line = line
        self.norm = norm
        super().__init__(f"line {line}: embedding norm {norm!r} outside unit tolerance")


class GroupInconsistency(ValueError):
    """Images sharing a prompt_id disagree on the prompt's target count."""

    def __init__(self, prompt_id: str):
        self.prompt_id = prompt_id
        super().__init__(f"group {prompt_id!r} mixes different target_count values")


class ConfigError(ValueError):
    """A run-configuration file contains an unknown or malformed entry."""


@dataclass(frozen=True)
class DatasetHeader:
    """First line of every dataset file."""

    format_version: str = FORMAT_VERSION
    embedding_dim: int = 8
    det_threshold: float = 0.7
    producer: str = "disco"


def _require(condition: bool, line: int, reason: str) -> None:
    if not condition:
        raise SchemaError(line, reason)


def _parse_header(obj: object, line: int) -> DatasetHeader:
    _require(isinstance(obj, dict), line, "header must be a JSON object")
    unknown = set(obj) - _HEADER_KEYS
    _require(not unknown, line, f"unknown header keys: {sorted(unknown)}")
    missing = _HEADER_KEYS - set(obj)
    _require(not missing, line, f"missing header keys: {sorted(missing)}")
    _require(
        obj["format_version"] == FORMAT_VERSION,
        line,
        f"unsupported format_version {obj['format_version']!r}",
    )
    dim = obj["embedding_dim"]
    _require(isinstance(dim, int) and dim >= 2, line, "embedding_dim must be an int >= 2")
    det = obj["det_threshold"]
    _require(
        isinstance(det, (int, float)) and 0.0 <= det <= 1.0,
        line,
        "det_threshold must be a number in [0, 1]",
    )
    _require(isinstance(obj["producer"], str), line, "producer must be a string")
    return DatasetHeader(
        format_version=obj["format_version"],
        embedding_dim=dim,
        det_threshold=float(det),
        producer=obj["producer"],
    )


def _parse_face(obj: object, line: int, header: DatasetHeader) -> FaceRecord:
    _require(isinstance(obj, dict), line, "face must be a JSON object")
    unknown = set(obj) - _FACE_KEYS
    _require(not unknown, line, f"unknown face keys: {sorted(unknown)}")
    _require("embedding" in obj and "confidence" in obj, line,
             "face needs embedding and confidence")

    emb = obj["embedding"]
    _require(
        isinstance(emb, list) and all(isinstance(x, (int, float)) for x in emb),
        line,
        "embedding must be a list of numbers",
    )
    _require(
        len(emb) == header.embedding_dim,
        line,
        f"embedding has dimension {len(emb)}, header says {header.embedding_dim}",
    )
    vec = np.asarray(emb, dtype=np.float64)
    _require(bool(np.all(np.isfinite(vec))), line, "embedding must be finite")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > NORM_TOLERANCE:
        raise NormError(line, norm)
    vec = vec / norm

    conf = obj["confidence"]
    _require(
        isinstance(conf, (int, float)) and 0.0 <= conf <= 1.0,
        line,
        "confidence must be a number in [0, 1]",
    )
    _require(
        conf >= header.det_threshold,
        line,
        f"confidence {conf} below header det_threshold {header.det_threshold}",
    )

    bbox = obj.get("bbox")
    if bbox is not None:
        _require(
            isinstance(bbox, list)
            and len(bbox) == 4
            and all(isinstance(x, (int, float)) for x in bbox),
            line,
            "bbox must be a list of 4 numbers",
        )
        x0, y0, x1, y1 = bbox
        _require(x0 < x1 and y0 < y1, line, "bbox must satisfy x0<x1 and y0<y1")
        bbox = tuple(float(x) for x in bbox)

    return FaceRecord(embedding=vec, confidence=float(conf), bbox=bbox)


def _parse_record(obj: object, line: int, header: DatasetHeader) -> ImageRecord:
    _require(isinstance(obj, dict), line, "record must be a JSON object")
    unknown = set(obj) - _RECORD_KEYS
    _require(not unknown, line, f"unknown record keys: {sorted(unknown)}")
    for key in ("image_id", "prompt_id", "target_count", "faces"):
        _require(key in obj, line, f"record missing key {key!r}")
    _require(isinstance(obj["image_id"], str), line, "image_id must be a string")
    _require(isinstance(obj["prompt_id"], str), line, "prompt_id must be a string")
    tc = obj["target_count"]
    _require(isinstance(tc, int) and tc >= 1, line, "target_count must be an int >= 1")
    _require(isinstance(obj["faces"], list), line, "faces must be a list")
    tag = obj.get("tag")
    _require(tag is None or isinstance(tag, str), line, "tag must be a string")
    quality = obj.get("quality_raw")
    _require(
        quality is None or isinstance(quality, (int, float)),
        line,
        "quality_raw must be a number",
    )
    faces = [_parse_face(face, line, header) for face in obj["faces"]]
    return ImageRecord(
        image_id=obj["image_id"],
        prompt_id=obj["prompt_id"],
        target_count=tc,
        faces=faces,
        quality_raw=None if quality is None else float(quality),
        tag=tag,
    )


def read_dataset(path: str | Path) -> tuple[DatasetHeader, list[GroupRecord]]:
    """Parse and validate a dataset file, returning its header and groups."""
    path = Path(path)
    header: Optional[DatasetHeader] = None
    order: list[str] = []
    by_prompt: dict[str, list[ImageRecord]] = {}

    with path.open("r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise SchemaError(line_no, f"invalid JSON: {exc.msg}") from exc
            if header is None:
                header = _parse_header(obj, line_no)
                continue
            record = _parse_record(obj, line_no, header)
            if record.prompt_id not in by_prompt:
                order.append(record.prompt_id)
                by_prompt[record.prompt_id] = []
            else:
                if by_prompt[record.prompt_id][0].target_count != record.target_count:
                    raise GroupInconsistency(record.prompt_id)
            by_prompt[record.prompt_id].append(record)

    if header is None:
        raise SchemaError(1, "file is empty; expected a header line")

    groups = [GroupRecord(prompt_id=pid, images=by_prompt[pid]) for pid in order]
    return header, groups


def read_groups(path: str | Path) -> list[GroupRecord]:
    """Parse and validate a dataset file, returning its groups."""
    return read_dataset(path)[1]


def _face_to_json(face: FaceRecord) -> dict:
    out: dict = {"embedding": face.embedding.tolist(), "confidence": face.confidence}
    if face.bbox is not None:
        out["bbox"] = list(face.bbox)
    return out


def _image_to_json(img: ImageRecord) -> dict:
    out: dict = {
        "image_id": img.image_id,
        "prompt_id": img.prompt_id,
        "target_count": img.target_count,
    }
    if img.tag is not None:
        out["tag"] = img.tag
    if img.quality_raw is not None:
        out["quality_raw"] = img.quality_raw
    out["faces"] = [_face_to_json(f) for f in img.faces]
    return out


def write_groups(
    path: str | Path, groups: Iterable[GroupRecord], header: DatasetHeader
) -> None:
    """Serialize groups in the interchange format (lossless float round-trip)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(dataclasses.asdict(header)) + "\n")
        for group in groups:
            for img in group.images:
                fh.write(json.dumps(_image_to_json(img)) + "\n")


# --- run configuration ------------------------------------------------------


@dataclass
class FlowCheckConfig:
    """Setup for the stochastic-sampler consistency check."""

    mu0: float = 2.0
    s0: float = 0.5
    dim: int = 1
    steps: int = 200
    n_paths: int = 50_000
    sigmas: tuple[float, ...] = (0.2, 0.5)
    check_times: tuple[float, ...] = (0.75, 0.5, 0.25)


@dataclass
class ToySetup:
    """Initial toy-policy shape for the training command."""

    dim: int = 8
    n_min: int = 2
    n_max: int = 4
    n_slots: Optional[int] = None
    log_sigma: float = math.log(0.1)
    steps: int = 500
    fixed_target: Optional[int] = None
    quality_stub: Optional[float] = None


@dataclass
class RunConfig:
    """Everything a CLI run needs, assembled from a config file plus flags."""

    seed: int = 0
    weights: RewardWeights = field(default_factory=RewardWeights)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    flow: FlowCheckConfig = field(default_factory=FlowCheckConfig)
    toy: ToySetup = field(default_factory=ToySetup)
    output_dir: Optional[str] = None


def _parse_scalar(raw: str, kind: type, key: str):
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {raw!r} as {kind.__name__}") from exc


def _parse_list(raw: str, kind: type, key: str) -> tuple:
    return tuple(_parse_scalar(part.strip(), kind, key) for part in raw.split(","))


# key -> (section, field, parser kind, is_list)
_CONFIG_KEYS: dict[str, tuple[str, str, type, bool]] = {
    "seed": ("", "seed", int, False),
    "output.dir": ("", "output_dir", str, False),
    "rewards.preset": ("", "preset", str, False),
    "rewards.alpha": ("weights", "alpha", float, False),
    "rewards.beta": ("weights", "beta", float, False),
    "rewards.gamma": ("weights", "gamma", float, False),
    "rewards.zeta": ("weights", "zeta", float, False),
    "rewards.lambda_sigmoid": ("weights", "lambda_sigmoid", float, False),
    "rewards.q_min": ("weights", "q_min", float, False),
    "rewards.q_max": ("weights", "q_max", float, False),
    "rewards.agg": ("weights", "intra_aggregation", str, False),
    "rewards.single_face_intra": ("weights", "single_face_intra", float, False),
    "metrics.dup_threshold": ("metrics", "dup_threshold", float, False),
    "metrics.det_threshold": ("metrics", "det_threshold", float, False),
    "curriculum.n_min": ("curriculum", "n_min", int, False),
    "curriculum.n_max": ("curriculum", "n_max", int, False),
    "curriculum.simple_set": ("curriculum", "simple_set", int, True),
    "curriculum.t_curriculum": ("curriculum", "t_curriculum", int, False),
    "curriculum.gamma_c": ("curriculum", "gamma_c", float, False),
    "train.group_size": ("train", "group_size", int, False),
    "train.beta_kl": ("train", "beta_kl", float, False),
    "train.learning_rate": ("train", "learning_rate", float, False),
    "train.epsilon_adv": ("train", "epsilon_adv", float, False),
    "train.max_steps": ("train", "max_steps", int, False),
    "train.groups_per_step": ("train", "groups_per_step", int, False),
    "flow.mu0": ("flow", "mu0", float, False),
    "flow.s0": ("flow", "s0", float, False),
    "flow.dim": ("flow", "dim", int, False),
    "flow.steps": ("flow", "steps", int, False),
    "flow.n_paths": ("flow", "n_paths", int, False),
    "flow.sigmas": ("flow", "sigmas", float, True),
    "flow.check_times": ("flow", "check_times", float, True),
    "toy.dim": ("toy", "dim", int, False),
    "toy.n_min": ("toy", "n_min", int, False),
    "toy.n_max": ("toy", "n_max", int, False),
    "toy.n_slots": ("toy", "n_slots", int, False),
    "toy.log_sigma": ("toy", "log_sigma", float, False),
    "toy.steps": ("toy", "steps", int, False),
    "toy.fixed_target": ("toy", "fixed_target", int, False),
    "toy.quality_stub": ("toy", "quality_stub", float, False),
}


def parse_config(path: str | Path) -> RunConfig:
    """Read the flat dotted key-value config format; unknown keys are rejected.

    A weight preset, when named, is applied first and explicit rewards.* keys
    override individual fields on top of it.
    """
    sections: dict[str, dict] = {"": {}, "weights": {}, "metrics": {},
                                 "curriculum": {}, "train": {}, "flow": {}, "toy": {}}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        section, name, kind, is_list = _CONFIG_KEYS[key]
        parsed = _parse_list(value, kind, key) if is_list else _parse_scalar(value, kind, key)
        sections[section][name] = parsed

    top = sections[""]
    preset = top.pop("preset", None)
    if preset is not None:
        if preset not in WEIGHT_PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; available: {sorted(WEIGHT_PRESETS)}"
            )
        base = dataclasses.asdict(WEIGHT_PRESETS[preset])
    else:
        base = dataclasses.asdict(RewardWeights())
    base.update(sections["weights"])
    if base["intra_aggregation"] not in AGGREGATIONS:
        raise ConfigError(f"rewards.agg must be one of {AGGREGATIONS}")

    cur_kwargs = dict(sections["curriculum"])
    if "simple_set" in cur_kwargs:
        cur_kwargs["simple_set"] = frozenset(cur_kwargs["simple_set"])

    seed = top.get("seed", 0)
    train_kwargs = dict(sections["train"])
    train_kwargs["seed"] = seed

    try:
        return RunConfig(
            seed=seed,
            weights=RewardWeights(**base),
            metrics=MetricsConfig(**sections["metrics"]),
            curriculum=CurriculumConfig(**cur_kwargs),
            train=TrainConfig(**train_kwargs),
            flow=FlowCheckConfig(**sections["flow"]),
            toy=ToySetup(**sections["toy"]),
            output_dir=top.get("output_dir"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# --- report writers ----------------------------------------------------------


def write_breakdowns(path: str | Path, breakdowns: Iterable[RewardBreakdown],
                     prompt_ids: Iterable[str]) -> None:
    """One JSON line per image with all four components, total, and delta."""
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for b, pid in zip(breakdowns, prompt_ids):
            fh.write(
                json.dumps(
                    {
                        "image_id": b.image_id,
                        "prompt_id": pid,
                        "intra": b.intra,
                        "group": b.group,
                        "count": b.count,
                        "quality": b.quality,
                        "total": b.total,
                        "delta_i": b.delta_i,
                    }
                )
                + "\n"
            )


def _slice_to_json(s: MetricsSlice) -> dict:
    return dataclasses.asdict(s)


def report_to_json(report: MetricsReport) -> dict:
    out = {
        "count_accuracy_pct": report.count_accuracy_pct,
        "ufa_pct": report.ufa_pct,
        "gis_pct": report.gis_pct,
        "n_images": report.n_images,
        "n_clusters": report.n_clusters,
        "total_requested": report.total_requested,
        "per_count": {str(k): _slice_to_json(v) for k, v in report.per_count.items()},
    }
    if report.per_tag is not None:
        out["per_tag"] = {k: _slice_to_json(v) for k, v in report.per_tag.items()}
    return out


def write_report_json(path: str | Path, report: MetricsReport) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(report_to_json(report), indent=2, sort_keys=True) + "\n")


def write_report_csv(path: str | Path, report: MetricsReport) -> None:
    """Flat rows: aggregate first, then per-count and per-tag slices."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["scope", "key", "n_images", "count_accuracy_pct", "ufa_pct",
             "gis_pct", "n_clusters", "total_requested"]
        )
        writer.writerow(
            ["aggregate", "", report.n_images, repr(report.count_accuracy_pct),
             repr(report.ufa_pct), repr(report.gis_pct), report.n_clusters,
             report.total_requested]
        )
        for n, s in report.per_count.items():
            writer.writerow(
                ["per_count", n, s.n_images, repr(s.count_accuracy_pct),
                 repr(s.ufa_pct), repr(s.gis_pct), s.n_clusters, s.total_requested]
            )
        for tag, s in (report.per_tag or {}).items():
            writer.writerow(
                ["per_tag", tag, s.n_images, repr(s.count_accuracy_pct),
                 repr(s.ufa_pct), repr(s.gis_pct), s.n_clusters, s.total_requested]
            )


def write_train_log_csv(path: str | Path, log: list[dict]) -> None:
    if not log:
        raise ValueError("empty training log")
    keys = list(log[0])
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys)
        for row in log:
            writer.writerow(
                [repr(float(row[k])) if isinstance(row[k], float) else row[k]
                 for k in keys]
            )


def write_json(path: str | Path, payload: dict) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
