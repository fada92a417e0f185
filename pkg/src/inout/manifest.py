"""Dataset manifest types and persistence.

A manifest is the unit every pipeline stage consumes and produces: an ordered
list of sample records plus the target resolution they are standardized to.
On disk it is line-delimited JSON with a single header line, so it diffs and
streams well. The header carries a content hash over the ordered records,
which downstream stages use for caching and provenance.
"""

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .errors import IngestError, ValidationError

LABEL_NEGATIVE = "negative"
LABEL_POSITIVE = "positive"
LABELS = (LABEL_NEGATIVE, LABEL_POSITIVE)

SOURCE_ORIGINAL = "original"
SOURCE_DIFFUSION = "diffusion"
SOURCE_REGION = "region"
SOURCES = (SOURCE_ORIGINAL, SOURCE_DIFFUSION, SOURCE_REGION)

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"
SPLITS = (SPLIT_TRAIN, SPLIT_TEST)

_FORMAT = "inout-manifest"
_VERSION = 1


@dataclass
class ImageSample:
    """An image held in memory, before it is written into a run directory."""

    sample_id: str
    pixels: np.ndarray  # float32 (H, W, 3) in [0, 1]
    label: str
    source: str
    split: str


@dataclass(frozen=True)
class ManifestEntry:
    """A single record: the image lives at ``path`` relative to the manifest root."""

    sample_id: str
    path: str
    label: str
    source: str
    split: str
    digest: str

    def validate(self) -> None:
        if self.label not in LABELS:
            raise ValidationError(f"sample {self.sample_id}: unknown label {self.label!r}")
        if self.source not in SOURCES:
            raise ValidationError(f"sample {self.sample_id}: unknown source {self.source!r}")
        if self.split not in SPLITS:
            raise ValidationError(f"sample {self.sample_id}: unknown split {self.split!r}")
        if not self.digest:
            raise ValidationError(f"sample {self.sample_id}: missing content digest")


def _entry_canonical(entry: ManifestEntry) -> str:
    d = asdict(entry)
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def _compute_content_hash(target_resolution, entries) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(list(target_resolution)).encode())
    for entry in entries:
        h.update(_entry_canonical(entry).encode())
        h.update(b"\n")
    return h.hexdigest()


def _compute_counts(entries) -> dict:
    counts = {split: {label: 0 for label in LABELS} for split in SPLITS}
    for entry in entries:
        counts[entry.split][entry.label] += 1
    return counts


@dataclass
class DatasetManifest:
    """Ordered samples standardized to ``target_resolution`` (width, height)."""

    root: Path
    target_resolution: tuple
    entries: list
    counts: dict = field(default_factory=dict)
    content_hash: str = ""
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, root, target_resolution, entries, meta=None) -> "DatasetManifest":
        """Assemble a manifest, computing counts and the content hash."""
        m = cls(
            root=Path(root),
            target_resolution=(int(target_resolution[0]), int(target_resolution[1])),
            entries=list(entries),
            meta=dict(meta or {}),
        )
        m.counts = _compute_counts(m.entries)
        m.content_hash = _compute_content_hash(m.target_resolution, m.entries)
        m.validate()
        return m

    def validate(self) -> None:
        tw, th = self.target_resolution
        if tw <= 0 or th <= 0:
            raise ValidationError(f"target resolution must be positive, got {self.target_resolution}")
        seen = set()
        for entry in self.entries:
            entry.validate()
            if entry.sample_id in seen:
                raise ValidationError(f"duplicate sample id {entry.sample_id!r}")
            seen.add(entry.sample_id)
        if self.counts != _compute_counts(self.entries):
            raise ValidationError("manifest counts do not match entries")
        if self.content_hash != _compute_content_hash(self.target_resolution, self.entries):
            raise ValidationError("manifest content hash does not match entries")

    def split_entries(self, split: str) -> list:
        return [e for e in self.entries if e.split == split]

    def entry_path(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        return p if p.is_absolute() else self.root / p

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        # "." keeps run directories relocatable; an absolute root lets the
        # manifest file live away from the images it indexes.
        same_dir = self.root.resolve() == path.parent.resolve()
        header = {
            "format": _FORMAT,
            "version": _VERSION,
            "root": "." if same_dir else str(self.root.resolve()),
            "target_resolution": list(self.target_resolution),
            "content_hash": self.content_hash,
            "counts": self.counts,
            "meta": self.meta,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for entry in self.entries:
                fh.write(_entry_canonical(entry) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        except OSError as exc:
            raise IngestError(f"cannot read manifest {path}: {exc}") from exc
        if not lines:
            raise IngestError(f"manifest {path} is empty")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise IngestError(f"manifest {path} has a malformed header: {exc}") from exc
        if header.get("format") != _FORMAT or header.get("version") != _VERSION:
            raise IngestError(f"manifest {path} has unknown format/version")
        entries = []
        for ln in lines[1:]:
            try:
                d = json.loads(ln)
                entries.append(ManifestEntry(**d))
            except (json.JSONDecodeError, TypeError) as exc:
                raise IngestError(f"manifest {path} has a malformed record: {exc}") from exc
        root = header.get("root", ".")
        m = cls(
            root=path.parent if root == "." else Path(root),
            target_resolution=tuple(header["target_resolution"]),
            entries=entries,
            counts=header.get("counts", {}),
            content_hash=header.get("content_hash", ""),
            meta=header.get("meta", {}),
        )
        m.validate()
        return m
