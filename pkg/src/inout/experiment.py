"""Grid experiments: compose datasets, train, score, and report.

A run sweeps (policy x n_aug x seed). The diffusion model is fine-tuned once
per experiment (the scenario preset fixes the instance set and epochs), while
augmentation images are regenerated for every grid seed. Completed stages are
content-addressed: the adapter and every grid cell live in directories keyed
by a digest of their exact inputs, so re-running a finished experiment is a
no-op and re-running a config tweak only recomputes what changed.

Grid cells may run on a small thread pool (``workers``); every cell derives
all of its randomness from its own seeds, so scheduling cannot change results.
"""

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .classifier import TrainConfig, predict_scores, train_classifier
from .diffusion import (
    SCENARIO_PRESETS,
    FinetuneConfig,
    GenerationRequest,
    adapter_digest,
    finetune,
    generate,
    get_backend,
)
from .errors import ConfigurationError, ExperimentError, InOutError
from .ingest import LayoutSpec, load_dataset, load_entry_pixels
from .lora import load_adapter, save_adapter
from .manifest import LABEL_NEGATIVE, SPLIT_TRAIN, DatasetManifest
from .metrics import average_precision, precision_recall_at
from .mixer import AugmentationPlan, build_training_set, make_region_source, select_n_shot_ids
from .region import PerlinMaskSpec, TransformSpec
from .report import MetricsReport, build_row, emit_report, render_report_figures
from .seeding import derive_seed
from .synthetic import make_toy_dataset


def _from_mapping(cls, data: dict, where: str):
    """Build a dataclass from a mapping, rejecting unknown keys."""
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigurationError(f"unknown {where} config keys: {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "toy"  # "toy" (procedural) or "disk" (ingest from root)
    root: str = ""
    target_resolution: tuple = (32, 96)
    image_glob: str = "*/*.png"
    mask_suffix: str = "_GT"
    toy: dict = field(default_factory=dict)  # make_toy_dataset overrides

    def validate(self) -> None:
        if self.kind not in ("toy", "disk"):
            raise ConfigurationError(f"dataset kind must be toy or disk, got {self.kind!r}")
        if self.kind == "disk" and not self.root:
            raise ConfigurationError("disk datasets need a root path")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    output_dir: str = "runs/experiment"
    scenario: str = "few_shot"
    policies: tuple = ("inout",)
    n_aug: tuple = (0,)
    seeds: tuple = (0, 1, 2, 3)
    workers: int = 1
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    backend: dict = field(default_factory=lambda: {"name": "toy"})
    finetune: dict = field(default_factory=dict)  # FinetuneConfig overrides
    generation: dict = field(default_factory=dict)  # prompts / alpha overrides
    region: dict = field(default_factory=dict)  # PerlinMaskSpec overrides
    transforms: dict = field(default_factory=dict)  # TransformSpec overrides
    classifier: dict = field(default_factory=dict)  # TrainConfig overrides
    evaluation: dict = field(default_factory=lambda: {"threshold": 0.5})

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        data = dict(raw)
        if "dataset" in data:
            ds = dict(data["dataset"])
            if "target_resolution" in ds:
                ds["target_resolution"] = tuple(ds["target_resolution"])
            data["dataset"] = _from_mapping(DatasetSpec, ds, "dataset")
        for key in ("policies", "n_aug", "seeds"):
            if key in data:
                data[key] = tuple(data[key])
        cfg = _from_mapping(cls, data, "experiment")
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigurationError(f"cannot read experiment config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigurationError(f"experiment config {path} must be a mapping")
        return cls.from_dict(raw)

    def validate(self) -> None:
        if self.scenario not in SCENARIO_PRESETS:
            raise ConfigurationError(
                f"unknown scenario {self.scenario!r} (have: {sorted(SCENARIO_PRESETS)})"
            )
        if not self.policies or not self.n_aug or not self.seeds:
            raise ConfigurationError("policies, n_aug, and seeds must all be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be distinct")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        self.dataset.validate()

    def resolved_finetune(self) -> FinetuneConfig:
        preset = SCENARIO_PRESETS[self.scenario]
        overrides = dict(self.finetune)
        overrides.setdefault("epochs", preset.epochs)
        return _from_mapping(FinetuneConfig, overrides, "finetune")

    def resolved_alpha(self) -> float:
        return float(self.generation.get("alpha", SCENARIO_PRESETS[self.scenario].merge_alpha))

    def resolved_prompts(self) -> tuple:
        from .diffusion import DEFAULT_GENERATION_PROMPTS

        return tuple(self.generation.get("prompts", DEFAULT_GENERATION_PROMPTS))

    def resolved_region(self) -> PerlinMaskSpec:
        raw = dict(self.region)
        for key in ("grid_period_range", "coverage_bounds"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return _from_mapping(PerlinMaskSpec, raw, "region")

    def resolved_transforms(self) -> TransformSpec:
        raw = dict(self.transforms)
        for key in ("rotation_degrees", "brightness_range", "saturation_range", "hue_shift_range"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return _from_mapping(TransformSpec, raw, "transforms")

    def resolved_classifier(self, seed: int) -> TrainConfig:
        overrides = dict(self.classifier)
        overrides["seed"] = seed
        return _from_mapping(TrainConfig, overrides, "classifier")


def _digest_payload(payload) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _prepare_source_manifest(config: ExperimentConfig, out_dir: Path) -> DatasetManifest:
    spec = config.dataset
    layout = LayoutSpec(image_glob=spec.image_glob, mask_suffix=spec.mask_suffix)
    if spec.kind == "toy":
        toy_args = dict(spec.toy)
        toy_args.setdefault("width", spec.target_resolution[0])
        toy_args.setdefault("height", spec.target_resolution[1])
        root = out_dir / "dataset"
        marker = root / ".complete"
        if not marker.is_file():
            make_toy_dataset(root, **toy_args)
            marker.write_text(_digest_payload(toy_args))
        return load_dataset(root, layout, spec.target_resolution)
    return load_dataset(spec.root, layout, spec.target_resolution)


def _select_instance_entries(manifest: DatasetManifest, preset, ft_config: FinetuneConfig):
    if preset.n_positives > 0:
        ids = select_n_shot_ids(manifest, preset.n_positives, seed=ft_config.seed)
    else:
        negatives = sorted(
            e.sample_id
            for e in manifest.split_entries(SPLIT_TRAIN)
            if e.label == LABEL_NEGATIVE
        )
        take = min(preset.instance_negatives, len(negatives))
        rng = np.random.default_rng(derive_seed(ft_config.seed, "select-instance-neg"))
        picked = rng.choice(len(negatives), size=take, replace=False)
        ids = sorted(negatives[i] for i in picked)
    by_id = {e.sample_id: e for e in manifest.entries}
    images = [load_entry_pixels(manifest, by_id[i]) for i in ids]
    return ids, images


def _finetune_stage(config, backend, manifest, out_dir: Path):
    """Fine-tune once per experiment; cached by a digest of the exact inputs."""
    preset = SCENARIO_PRESETS[config.scenario]
    ft = config.resolved_finetune()
    ids, images = _select_instance_entries(manifest, preset, ft)
    key = _digest_payload(
        {
            "backend": backend.model_id,
            "finetune": ft.digest(),
            "instances": ids,
            "manifest": manifest.content_hash,
        }
    )
    adapter_path = out_dir / "adapters" / f"adapter-{key}.npz"
    history_path = adapter_path.with_suffix(".history.json")
    if adapter_path.is_file():
        return load_adapter(adapter_path), ids, adapter_path
    result = finetune(backend, images, ft, reg_cache_dir=out_dir / "cache", instance_ids=ids)
    save_adapter(result.adapter, adapter_path)
    history_path.write_text(
        json.dumps({"loss_history": result.loss_history, "instance_ids": ids}, indent=2)
    )
    return result.adapter, ids, adapter_path


def _evaluate_cell(scores, labels, threshold: float):
    ap = average_precision(scores, labels)
    pr = precision_recall_at(scores, labels, threshold=threshold)
    return ap, pr.precision, pr.recall


def _run_cell(config, backend, adapter, adapter_dig, source_manifest, n_shot_ids,
              policy, n_aug, seed, out_dir: Path):
    preset = SCENARIO_PRESETS[config.scenario]
    threshold = float(config.evaluation.get("threshold", 0.5))
    scenario = "zero_shot" if preset.n_positives == 0 else "n_shot"
    # Zero-shot instance ids are fine-tune negatives, not composition picks.
    pinned = tuple(n_shot_ids) if preset.n_positives > 0 else ()
    plan = AugmentationPlan(
        scenario=scenario,
        n_positives=preset.n_positives,
        n_aug=n_aug,
        policy=policy,
        seed=seed,
        n_shot_ids=pinned,
    )
    cell_inputs = {
        "manifest": source_manifest.content_hash,
        "adapter": adapter_dig,
        "plan": asdict(plan),
        "alpha": config.resolved_alpha(),
        "prompts": list(config.resolved_prompts()),
        "region": asdict(config.resolved_region()),
        "transforms": asdict(config.resolved_transforms()),
        "classifier": asdict(config.resolved_classifier(seed)),
        "threshold": threshold,
    }
    key = _digest_payload(cell_inputs)
    cell_dir = out_dir / "cells" / f"{policy}-naug{n_aug}-seed{seed}-{key}"
    result_path = cell_dir / "result.json"
    if result_path.is_file():
        cached = json.loads(result_path.read_text())
        return cached, cell_dir

    stage = "compose"
    try:
        alpha = config.resolved_alpha()
        prompts = config.resolved_prompts()

        def diffusion_source(count, src_seed):
            request = GenerationRequest(
                prompts=prompts,
                count=count,
                seed=src_seed,
                resolution=tuple(source_manifest.target_resolution),
            )
            return generate(backend, adapter, alpha, request)

        region_source = make_region_source(
            source_manifest, config.resolved_region(), config.resolved_transforms()
        )
        built = build_training_set(
            source_manifest, plan, diffusion_source, region_source, cell_dir / "dataset"
        )

        stage = "train"
        model = train_classifier(built, config.resolved_classifier(seed))
        checkpoint = model.save(cell_dir / "classifier.pt")

        stage = "score"
        run = predict_scores(model, built)
        scores_path = cell_dir / "scores.csv"
        with open(scores_path, "w") as fh:
            fh.write("sample_id|label|score\n")
            for sid, label, score in zip(run.sample_ids, run.labels, run.scores):
                fh.write(f"{sid}|{int(label)}|{float(score)!r}\n")

        stage = "evaluate"
        ap, precision, recall = _evaluate_cell(run.scores, run.labels, threshold)
    except InOutError as exc:
        raise ExperimentError(
            f"stage {stage!r} failed for policy={policy} n_aug={n_aug} seed={seed}: {exc}"
        ) from exc

    record = {
        "policy": policy,
        "n_aug": n_aug,
        "seed": seed,
        "ap": ap,
        "precision": precision,
        "recall": recall,
        "scores": [float(s) for s in run.scores],
        "sample_ids": run.sample_ids,
        "labels": [int(v) for v in run.labels],
        "provenance": {
            "cell_key": key,
            "built_manifest_hash": built.content_hash,
            "adapter_digest": adapter_dig,
            "checkpoint_sha256": _file_sha(checkpoint),
            "scores_sha256": _file_sha(scores_path),
            "plan": asdict(plan),
        },
    }
    result_path.write_text(json.dumps(record, sort_keys=True, indent=2))
    return record, cell_dir


def _file_sha(path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()[:16]


def run_experiment(config: ExperimentConfig, out_dir=None):
    """Execute the full grid; returns (MetricsReport, output_dir)."""
    config.validate()
    out_dir = Path(out_dir if out_dir is not None else config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(yaml.safe_dump(_config_to_raw(config), sort_keys=True))

    source_manifest = _prepare_source_manifest(config, out_dir)
    source_manifest.save(out_dir / "source_manifest.jsonl")

    backend_args = dict(config.backend)
    backend = get_backend(backend_args.pop("name", "toy"), **backend_args)
    adapter, n_shot_ids, adapter_path = _finetune_stage(config, backend, source_manifest, out_dir)
    adapter_dig = adapter_digest(adapter)

    cells = [
        (policy, n_aug, seed)
        for policy in config.policies
        for n_aug in config.n_aug
        for seed in config.seeds
    ]

    def work(cell):
        policy, n_aug, seed = cell
        return _run_cell(
            config, backend, adapter, adapter_dig, source_manifest, n_shot_ids,
            policy, n_aug, seed, out_dir,
        )

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, cells))
    else:
        results = [work(cell) for cell in cells]

    by_cell = {(r["policy"], r["n_aug"], r["seed"]): (r, d) for (r, d) in results}
    rows = []
    provenance = {"adapter": adapter_dig, "adapter_path": str(adapter_path), "cells": {}}
    for policy in config.policies:
        for n_aug in config.n_aug:
            triples = []
            for seed in config.seeds:
                record, cell_dir = by_cell[(policy, n_aug, seed)]
                triples.append((record["ap"], record["precision"], record["recall"]))
                provenance["cells"][f"{policy}-naug{n_aug}-seed{seed}"] = {
                    **record["provenance"],
                    "cell_dir": str(cell_dir.relative_to(out_dir)),
                }
            rows.append(build_row(policy, n_aug, triples))

    report = MetricsReport(
        rows=rows,
        metadata={
            "name": config.name,
            "scenario": config.scenario,
            "seeds": list(config.seeds),
            "threshold": float(config.evaluation.get("threshold", 0.5)),
            "std": "population",
            "source_manifest_hash": source_manifest.content_hash,
            "adapter_digest": adapter_dig,
        },
    )
    (out_dir / "report.csv").write_text(emit_report(report, fmt="csv"))
    (out_dir / "report.txt").write_text(emit_report(report, fmt="table"))
    render_report_figures(report, out_dir / "figures")
    (out_dir / "provenance.json").write_text(json.dumps(provenance, sort_keys=True, indent=2))
    return report, out_dir


def _config_to_raw(config: ExperimentConfig) -> dict:
    raw = asdict(config)
    raw["dataset"]["target_resolution"] = list(config.dataset.target_resolution)
    for key in ("policies", "n_aug", "seeds"):
        raw[key] = list(raw[key])
    return raw
