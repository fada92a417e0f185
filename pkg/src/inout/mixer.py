"""Training-set composition: originals plus generated positives.

The build rules are exact, not statistical. A zero-shot set is every original
train negative plus ``n_aug`` synthetic positives; an n-shot set additionally
keeps the N selected original positives (the same N the fine-tune stage used).
Under the ``inout`` policy the synthetic half comes evenly from the diffusion
and region sources, so ``n_aug`` must be even there; single-source policies
take the whole budget from one side. The test split passes through untouched.

A build emits a self-contained run directory: copied originals, freshly
generated augmentation images, the manifest, and the plan echoed verbatim.
"""

import json
import shutil
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .imgio import file_digest, write_image
from .ingest import load_entry_pixels
from .manifest import (
    LABEL_NEGATIVE,
    LABEL_POSITIVE,
    SOURCE_DIFFUSION,
    SOURCE_ORIGINAL,
    SOURCE_REGION,
    SPLIT_TEST,
    SPLIT_TRAIN,
    DatasetManifest,
    ImageSample,
    ManifestEntry,
)
from .region import augment_negative
from .seeding import derive_seed

POLICY_INOUT = "inout"
POLICY_DIFFUSION_ONLY = "diffusion_only"
POLICY_REGION_ONLY = "region_only"
POLICIES = (POLICY_INOUT, POLICY_DIFFUSION_ONLY, POLICY_REGION_ONLY)

SCENARIO_ZERO_SHOT = "zero_shot"
SCENARIO_N_SHOT = "n_shot"


@dataclass(frozen=True)
class AugmentationPlan:
    scenario: str
    n_positives: int
    n_aug: int
    policy: str
    seed: int
    # Pinning ids here lets a caller reuse the exact positives another stage
    # (fine-tuning) already selected; empty means select by seed at build time.
    n_shot_ids: tuple = ()

    def validate(self) -> None:
        if self.scenario not in (SCENARIO_ZERO_SHOT, SCENARIO_N_SHOT):
            raise ValidationError(f"unknown scenario {self.scenario!r}")
        if self.policy not in POLICIES:
            raise ValidationError(f"unknown policy {self.policy!r} (have: {POLICIES})")
        if self.n_aug < 0:
            raise ValidationError(f"n_aug must be >= 0, got {self.n_aug}")
        if self.n_positives < 0:
            raise ValidationError(f"n_positives must be >= 0, got {self.n_positives}")
        if self.scenario == SCENARIO_ZERO_SHOT and self.n_positives != 0:
            raise ValidationError("zero_shot implies n_positives == 0")
        if self.n_shot_ids and len(self.n_shot_ids) != self.n_positives:
            raise ValidationError(
                f"plan pins {len(self.n_shot_ids)} ids but n_positives is {self.n_positives}"
            )
        if self.policy == POLICY_INOUT and self.n_aug % 2 != 0:
            raise ValidationError(
                f"policy {POLICY_INOUT!r} splits n_aug evenly across two sources; "
                f"{self.n_aug} is odd"
            )

    def source_counts(self) -> dict:
        """How many synthetic positives each source contributes."""
        self.validate()
        if self.policy == POLICY_INOUT:
            return {SOURCE_DIFFUSION: self.n_aug // 2, SOURCE_REGION: self.n_aug // 2}
        if self.policy == POLICY_DIFFUSION_ONLY:
            return {SOURCE_DIFFUSION: self.n_aug, SOURCE_REGION: 0}
        return {SOURCE_DIFFUSION: 0, SOURCE_REGION: self.n_aug}


def select_n_shot_ids(manifest: DatasetManifest, n: int, seed: int) -> list:
    """The N original train positives a seed deterministically picks."""
    positives = sorted(
        e.sample_id
        for e in manifest.split_entries(SPLIT_TRAIN)
        if e.label == LABEL_POSITIVE and e.source == SOURCE_ORIGINAL
    )
    if n > len(positives):
        raise ValidationError(
            f"plan wants {n} original positives but the train split has {len(positives)}"
        )
    rng = np.random.default_rng(derive_seed(seed, "select-n"))
    picked = rng.choice(len(positives), size=n, replace=False)
    return sorted(positives[i] for i in picked)


def make_region_source(manifest: DatasetManifest, mask_spec, transform_spec):
    """Region-augment source: cycles the train negatives in id order."""
    negatives = sorted(
        (e for e in manifest.split_entries(SPLIT_TRAIN) if e.label == LABEL_NEGATIVE),
        key=lambda e: e.sample_id,
    )

    def source(count: int, seed: int) -> list:
        if count == 0:
            return []
        if not negatives:
            raise ValidationError("region augmentation needs at least one train negative")
        samples = []
        for k in range(count):
            base = load_entry_pixels(manifest, negatives[k % len(negatives)])
            pixels, _, _ = augment_negative(
                base, mask_spec, transform_spec, seed=derive_seed(seed, "sample", k)
            )
            samples.append(
                ImageSample(
                    sample_id=f"region-{seed}-{k:04d}",
                    pixels=pixels,
                    label=LABEL_POSITIVE,
                    source=SOURCE_REGION,
                    split=SPLIT_TRAIN,
                )
            )
        return samples

    return source


def _copy_entry(manifest: DatasetManifest, entry: ManifestEntry, out_dir: Path) -> ManifestEntry:
    rel = f"images/{entry.sample_id}.png"
    dst = out_dir / rel
    dst.parent.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(manifest.entry_path(entry), dst)
    return ManifestEntry(
        sample_id=entry.sample_id,
        path=rel,
        label=entry.label,
        source=entry.source,
        split=entry.split,
        digest=entry.digest,
    )


def _write_generated(samples, source_name: str, plan_seed: int, out_dir: Path) -> list:
    entries = []
    for k, sample in enumerate(samples):
        sample_id = f"{source_name}-{plan_seed}-{k:04d}"
        rel = f"images/aug/{sample_id}.png"
        write_image(out_dir / rel, sample.pixels)
        entries.append(
            ManifestEntry(
                sample_id=sample_id,
                path=rel,
                label=LABEL_POSITIVE,
                source=source_name,
                split=SPLIT_TRAIN,
                digest=file_digest(out_dir / rel),
            )
        )
    return entries


def build_training_set(
    manifest: DatasetManifest,
    plan: AugmentationPlan,
    diffusion_source,
    region_source,
    out_dir,
) -> DatasetManifest:
    """Compose a training dataset in ``out_dir`` per the plan.

    ``diffusion_source`` and ``region_source`` are callables
    ``(count, seed) -> list[ImageSample]``; each is invoked once with a seed
    derived from the plan seed, so rebuilding with the same inputs reproduces
    the same images and the same manifest content hash.
    """
    plan.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    wanted = plan.source_counts()
    n_shot_ids = []
    if plan.scenario == SCENARIO_N_SHOT and plan.n_positives > 0:
        if plan.n_shot_ids:
            positives = {
                e.sample_id
                for e in manifest.split_entries(SPLIT_TRAIN)
                if e.label == LABEL_POSITIVE and e.source == SOURCE_ORIGINAL
            }
            missing = set(plan.n_shot_ids) - positives
            if missing:
                raise ValidationError(
                    f"pinned n-shot ids are not original train positives: {sorted(missing)}"
                )
            n_shot_ids = sorted(plan.n_shot_ids)
        else:
            n_shot_ids = select_n_shot_ids(manifest, plan.n_positives, plan.seed)
    keep_ids = set(n_shot_ids)

    entries = []
    for entry in manifest.split_entries(SPLIT_TRAIN):
        if entry.label == LABEL_NEGATIVE:
            entries.append(_copy_entry(manifest, entry, out_dir))
        elif entry.sample_id in keep_ids:
            entries.append(_copy_entry(manifest, entry, out_dir))

    diffusion_samples = diffusion_source(wanted[SOURCE_DIFFUSION], derive_seed(plan.seed, "diffusion"))
    if len(diffusion_samples) != wanted[SOURCE_DIFFUSION]:
        raise ValidationError(
            f"diffusion source returned {len(diffusion_samples)} samples, "
            f"wanted {wanted[SOURCE_DIFFUSION]}"
        )
    region_samples = region_source(wanted[SOURCE_REGION], derive_seed(plan.seed, "region"))
    if len(region_samples) != wanted[SOURCE_REGION]:
        raise ValidationError(
            f"region source returned {len(region_samples)} samples, wanted {wanted[SOURCE_REGION]}"
        )
    entries.extend(_write_generated(diffusion_samples, SOURCE_DIFFUSION, plan.seed, out_dir))
    entries.extend(_write_generated(region_samples, SOURCE_REGION, plan.seed, out_dir))

    for entry in manifest.split_entries(SPLIT_TEST):
        entries.append(_copy_entry(manifest, entry, out_dir))

    built = DatasetManifest.build(
        root=out_dir,
        target_resolution=manifest.target_resolution,
        entries=entries,
        meta={
            "plan": asdict(plan),
            "n_shot_ids": n_shot_ids,
            "source_manifest_hash": manifest.content_hash,
        },
    )
    built.save(out_dir / "manifest.jsonl")
    (out_dir / "plan.json").write_text(json.dumps(asdict(plan), indent=2, sort_keys=True) + "\n")
    return built


def build_zero_shot(manifest, plan, diffusion_source, region_source, out_dir) -> DatasetManifest:
    if plan.scenario != SCENARIO_ZERO_SHOT:
        raise ValidationError(f"build_zero_shot got scenario {plan.scenario!r}")
    return build_training_set(manifest, plan, diffusion_source, region_source, out_dir)


def build_n_shot(manifest, plan, diffusion_source, region_source, out_dir) -> DatasetManifest:
    if plan.scenario != SCENARIO_N_SHOT:
        raise ValidationError(f"build_n_shot got scenario {plan.scenario!r}")
    return build_training_set(manifest, plan, diffusion_source, region_source, out_dir)
