"""Command-line entry points for the augmentation toolkit.

Every subcommand is a thin wrapper over the library; anything scriptable here
is equally reachable from Python. Exit codes: 0 on success, 1 when a library
contract is violated (the diagnostic goes to stderr), 2 on usage errors.
"""

import argparse
import json
import sys
from pathlib import Path

from .classifier import TrainConfig, load_model, predict_scores, train_classifier
from .diffusion import (
    DEFAULT_GENERATION_PROMPTS,
    SCENARIO_PRESETS,
    FinetuneConfig,
    GenerationRequest,
    finetune,
    generate,
    get_backend,
)
from .errors import InOutError
from .experiment import ExperimentConfig, _select_instance_entries, run_experiment
from .imgio import file_digest, write_image, write_mask
from .ingest import LayoutSpec, load_dataset, load_entry_pixels
from .lora import load_adapter, save_adapter
from .manifest import (
    LABEL_NEGATIVE,
    LABEL_POSITIVE,
    SOURCE_DIFFUSION,
    SPLIT_TEST,
    SPLIT_TRAIN,
    DatasetManifest,
    ManifestEntry,
)
from .metrics import average_precision, precision_recall_at
from .mixer import AugmentationPlan, build_training_set, make_region_source
from .region import PerlinMaskSpec, TransformSpec, augment_negative
from .report import MetricsReport, build_row, emit_report, render_report_figures
from .seeding import derive_seed


def _cmd_ingest(args) -> int:
    layout = LayoutSpec(image_glob=args.image_glob, mask_suffix=args.mask_suffix)
    manifest = load_dataset(
        args.root, layout, (args.width, args.height), workers=args.workers
    )
    manifest.save(args.out)
    print(f"ingested {len(manifest.entries)} samples -> {args.out}")
    print(f"counts: {json.dumps(manifest.counts, sort_keys=True)}")
    print(f"content_hash: {manifest.content_hash}")
    return 0


def _cmd_finetune(args) -> int:
    manifest = DatasetManifest.load(args.dataset)
    preset = SCENARIO_PRESETS[args.scenario]
    config = FinetuneConfig(
        rank=args.rank,
        epochs=preset.epochs if args.epochs is None else args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        num_regularization_images=args.reg_images,
        seed=args.seed,
    )
    backend = get_backend(args.backend)
    ids, images = _select_instance_entries(manifest, preset, config)
    result = finetune(
        backend, images, config, reg_cache_dir=args.reg_cache, instance_ids=ids
    )
    save_adapter(result.adapter, args.out)
    first = result.loss_history[0] if result.loss_history else float("nan")
    last = result.loss_history[-1] if result.loss_history else float("nan")
    print(f"fine-tuned on {len(ids)} instances ({args.scenario})")
    print(f"loss: {first:.4f} -> {last:.4f} over {len(result.loss_history)} epochs")
    print(f"adapter -> {args.out}")
    return 0


def _cmd_generate(args) -> int:
    backend = get_backend(args.backend)
    adapter = load_adapter(args.adapter) if args.adapter else None
    resolution = None
    if args.width is not None or args.height is not None:
        if args.width is None or args.height is None:
            raise InOutError("pass both --width and --height or neither")
        resolution = (args.width, args.height)
    request = GenerationRequest(
        prompts=tuple(args.prompt) if args.prompt else DEFAULT_GENERATION_PROMPTS,
        count=args.count,
        seed=args.seed,
        resolution=resolution,
    )
    samples = generate(backend, adapter, args.alpha, request)
    out = Path(args.out)
    entries = []
    for s in samples:
        rel = f"{s.sample_id}.png"
        write_image(out / rel, s.pixels)
        entries.append(
            ManifestEntry(
                sample_id=s.sample_id,
                path=rel,
                label=LABEL_POSITIVE,
                source=SOURCE_DIFFUSION,
                split=SPLIT_TRAIN,
                digest=file_digest(out / rel),
            )
        )
    if samples:
        h, w = samples[0].pixels.shape[:2]
        built = DatasetManifest.build(root=out, target_resolution=(w, h), entries=entries)
        built.save(out / "manifest.jsonl")
    print(f"generated {len(samples)} images -> {out}")
    return 0


def _cmd_augment_region(args) -> int:
    manifest = DatasetManifest.load(args.dataset)
    mask_spec = PerlinMaskSpec(
        threshold=args.threshold,
        coverage_bounds=(args.coverage_min, args.coverage_max),
        max_retries=args.max_retries,
    )
    transform_spec = TransformSpec()
    negatives = sorted(
        (e for e in manifest.split_entries(SPLIT_TRAIN) if e.label == LABEL_NEGATIVE),
        key=lambda e: e.sample_id,
    )
    if not negatives:
        raise InOutError("region augmentation needs at least one train negative")
    out = Path(args.out)
    for k in range(args.count):
        base = load_entry_pixels(manifest, negatives[k % len(negatives)])
        pixels, mask, beta = augment_negative(
            base, mask_spec, transform_spec, seed=derive_seed(args.seed, "sample", k)
        )
        write_image(out / f"region-{args.seed}-{k:04d}.png", pixels)
        write_mask(out / f"region-{args.seed}-{k:04d}_mask.png", mask)
    print(f"wrote {args.count} region-augmented images (and masks) -> {out}")
    return 0


def _cmd_build_dataset(args) -> int:
    manifest = DatasetManifest.load(args.dataset)
    plan = AugmentationPlan(
        scenario=args.scenario,
        n_positives=args.n_positives,
        n_aug=args.n_aug,
        policy=args.policy,
        seed=args.seed,
    )
    backend = get_backend(args.backend)
    adapter = load_adapter(args.adapter) if args.adapter else None

    def diffusion_source(count, seed):
        request = GenerationRequest(
            prompts=tuple(args.prompt) if args.prompt else DEFAULT_GENERATION_PROMPTS,
            count=count,
            seed=seed,
            resolution=tuple(manifest.target_resolution),
        )
        return generate(backend, adapter, args.alpha, request)

    region_source = make_region_source(manifest, PerlinMaskSpec(), TransformSpec())
    built = build_training_set(manifest, plan, diffusion_source, region_source, args.out)
    print(f"built dataset -> {args.out}")
    print(f"counts: {json.dumps(built.counts, sort_keys=True)}")
    print(f"content_hash: {built.content_hash}")
    return 0


def _cmd_train(args) -> int:
    manifest = DatasetManifest.load(args.dataset)
    config = TrainConfig(
        backbone=args.backbone,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    model = train_classifier(manifest, config)
    model.save(args.out)
    print(f"trained {args.backbone} for {args.epochs} epochs -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    manifest = DatasetManifest.load(args.dataset)
    model = load_model(args.model)
    run = predict_scores(model, manifest, split=SPLIT_TEST)
    ap = average_precision(run.scores, run.labels)
    pr = precision_recall_at(run.scores, run.labels, threshold=args.threshold)
    n_aug = int(manifest.meta.get("plan", {}).get("n_aug", 0))
    row = build_row(args.label, n_aug, [(ap, pr.precision, pr.recall)])
    report = MetricsReport(
        rows=[row],
        metadata={"threshold": args.threshold, "manifest_hash": manifest.content_hash},
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(emit_report(report, fmt="csv"))
    (out / "report.txt").write_text(emit_report(report, fmt="table"))
    render_report_figures(report, out / "figures")
    with open(out / "scores.csv", "w") as fh:
        fh.write("sample_id|label|score\n")
        for sid, label, score in zip(run.sample_ids, run.labels, run.scores):
            fh.write(f"{sid}|{int(label)}|{float(score)!r}\n")
    print(f"AP={ap:.4f} precision={pr.precision:.4f} recall={pr.recall:.4f}")
    print(f"report -> {out}")
    return 0


def _cmd_run_experiment(args) -> int:
    config = ExperimentConfig.from_yaml(args.config)
    if args.workers is not None:
        from dataclasses import replace

        config = replace(config, workers=args.workers)
    report, out_dir = run_experiment(config, out_dir=args.out)
    print(emit_report(report, fmt="table"))
    print(f"artifacts -> {out_dir}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .review import build_app

    backend = get_backend(args.backend)
    adapter = load_adapter(args.adapter) if args.adapter else None
    app = build_app(state_dir=args.state_dir, backend=backend, adapter=adapter,
                    alpha=args.alpha)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="inout",
        description="Defect-image augmentation: diffusion + region noise.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scan a dataset directory into a manifest")
    p.add_argument("root")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--image-glob", default="*/*.png")
    p.add_argument("--mask-suffix", default="_GT")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("finetune", help="fine-tune a diffusion backend on a scenario")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scenario", choices=sorted(SCENARIO_PRESETS), default="few_shot")
    p.add_argument("--backend", default="toy")
    p.add_argument("--out", required=True)
    p.add_argument("--rank", type=int, default=8)
    p.add_argument("--epochs", type=int, default=None,
                   help="override the scenario preset epoch count")
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--reg-images", type=int, default=50)
    p.add_argument("--reg-cache", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("generate", help="sample defect images from a backend")
    p.add_argument("--backend", default="toy")
    p.add_argument("--adapter", default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--prompt", action="append", default=None)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("augment-region", help="superimpose noise regions on negatives")
    p.add_argument("--dataset", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=PerlinMaskSpec().threshold)
    p.add_argument("--coverage-min", type=float, default=0.005)
    p.add_argument("--coverage-max", type=float, default=0.25)
    p.add_argument("--max-retries", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_augment_region)

    p = sub.add_parser("build-dataset", help="compose originals plus synthetics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scenario", choices=("zero_shot", "n_shot"), required=True)
    p.add_argument("--n-positives", type=int, default=0)
    p.add_argument("--n-aug", type=int, required=True)
    p.add_argument("--policy", choices=("inout", "diffusion_only", "region_only"),
                   default="inout")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", default="toy")
    p.add_argument("--adapter", default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--prompt", action="append", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_dataset)

    p = sub.add_parser("train", help="train the defect classifier on a manifest")
    p.add_argument("--dataset", required=True)
    p.add_argument("--backbone", choices=("tiny_cnn", "resnet50"), default="tiny_cnn")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a model on the test split and report")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--label", default="classifier")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run-experiment", help="run a (policy x n_aug x seed) grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_run_experiment)

    p = sub.add_parser("serve", help="start the human-review HTTP service")
    p.add_argument("--state-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--backend", default="toy")
    p.add_argument("--adapter", default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InOutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
