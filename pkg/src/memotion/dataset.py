"""Memotion CSV ingestion, split summaries and distribution checks."""
import csv
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple

from PIL import Image

from .labels import FINE_LABELS, SEMANTIC_CLASSES, LabelSet, UnknownLabelError, normalize_label

logger = logging.getLogger(__name__)

SKIP_POLICIES = ("strict", "skip_bad")
SPLIT_NAMES = ("train", "validation")

# CSV column -> semantic class
LABEL_COLUMNS = {
    "humour": "humour",
    "sarcasm": "sarcasm",
    "offensive": "offensive",
    "motivational": "motivational",
    "overall_sentiment": "overall",
}
TEXT_COLUMNS = ("text_ocr", "text_corrected")
IMAGE_COLUMN = "image_name"


class DatasetError(Exception):
    """Raised for malformed inputs under the strict policy (and for bad layouts)."""


@dataclass(frozen=True)
class MemeRecord:
    id: str
    image_ref: Path
    raw_text: str
    labels: Optional[LabelSet] = None

    @property
    def text_empty(self) -> bool:
        return not self.raw_text.strip()


@dataclass
class SplitSummary:
    split_name: str
    count: int = 0
    per_class_counts: Dict[str, Dict[str, int]] = field(default_factory=dict)
    skipped: int = 0

    @classmethod
    def from_records(cls, split_name: str, records, skipped: int = 0) -> "SplitSummary":
        counts: Dict[str, Dict[str, int]] = {}
        n = 0
        for rec in records:
            n += 1
            for name in SEMANTIC_CLASSES:
                label = getattr(rec.labels, name)
                per = counts.setdefault(name, {})
                per[label] = per.get(label, 0) + 1
        # canonical order so the JSON diffs cleanly
        ordered = {
            name: {lab: counts[name][lab] for lab in FINE_LABELS[name] if lab in counts[name]}
            for name in SEMANTIC_CLASSES
            if name in counts
        }
        return cls(split_name=split_name, count=n, per_class_counts=ordered, skipped=skipped)

    def to_dict(self) -> dict:
        return {
            "split_name": self.split_name,
            "count": self.count,
            "per_class_counts": self.per_class_counts,
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSummary":
        return cls(
            split_name=d["split_name"],
            count=int(d["count"]),
            per_class_counts={k: {lab: int(c) for lab, c in v.items()} for k, v in d["per_class_counts"].items()},
            skipped=int(d.get("skipped", 0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SplitSummary":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class Mismatch(NamedTuple):
    semantic_class: str
    label: Optional[str]  # None for the split total
    observed: int
    expected: int

    def __str__(self):
        what = "total" if self.label is None else f"{self.semantic_class}/{self.label}"
        return f"{what}: observed {self.observed}, expected {self.expected}"


def reference_summary(split: str) -> SplitSummary:
    """Published class distribution of the cleaned train/validation splits."""
    if split not in SPLIT_NAMES:
        raise ValueError(f"split must be one of {SPLIT_NAMES}")
    text = resources.files("memotion.data").joinpath(f"published_counts_{split}.json").read_text(encoding="utf-8")
    return SplitSummary.from_dict(json.loads(text))


def verify_distribution(summary: SplitSummary, expected: SplitSummary) -> List[Mismatch]:
    """List every (class, label) whose count differs; missing labels count as 0."""
    out = []
    if summary.count != expected.count:
        out.append(Mismatch("*", None, summary.count, expected.count))
    for name in SEMANTIC_CLASSES:
        obs = summary.per_class_counts.get(name, {})
        exp = expected.per_class_counts.get(name, {})
        if name not in summary.per_class_counts and name not in expected.per_class_counts:
            continue
        for label in FINE_LABELS[name]:
            o, e = obs.get(label, 0), exp.get(label, 0)
            if o != e:
                out.append(Mismatch(name, label, o, e))
    return out


def _check_image(path: Path) -> None:
    with Image.open(path) as im:
        # a reduced-size draft still runs the full entropy decode for JPEGs
        im.draft("RGB", (64, 64))
        im.load()


def _resolve_columns(header: List[str]) -> Dict[str, int]:
    lowered = [h.strip().lower() for h in header]
    required = (IMAGE_COLUMN,) + TEXT_COLUMNS + tuple(LABEL_COLUMNS)
    missing = [c for c in required if c not in lowered]
    if missing:
        raise DatasetError(f"CSV header lacks columns {missing}; got {header}")
    return {c: lowered.index(c) for c in required}


def load_dataset(
    csv_path,
    image_dir,
    skip_policy: str = "skip_bad",
    split: str = "train",
    check_images: bool = True,
) -> Tuple[List[MemeRecord], SplitSummary]:
    """Read one split of the memotion CSV layout.

    Rows with unparseable labels, a wrong field count, or an image that
    cannot be decoded are dropped and counted under ``skip_bad``; under
    ``strict`` the first such row raises :class:`DatasetError`.
    """
    if skip_policy not in SKIP_POLICIES:
        raise ValueError(f"skip_policy must be one of {SKIP_POLICIES}")
    csv_path, image_dir = Path(csv_path), Path(image_dir)
    if not csv_path.is_file():
        raise FileNotFoundError(f"CSV not found: {csv_path}")
    if not image_dir.is_dir():
        raise FileNotFoundError(f"image directory not found: {image_dir}")

    records: List[MemeRecord] = []
    skipped = 0
    with open(csv_path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return [], SplitSummary(split_name=split)
        cols = _resolve_columns(header)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            try:
                if len(row) != len(header):
                    raise DatasetError(f"line {line}: expected {len(header)} fields, got {len(row)}")
                try:
                    labels = LabelSet(
                        **{cls: normalize_label(cls, row[cols[col]]) for col, cls in LABEL_COLUMNS.items()}
                    )
                except UnknownLabelError as exc:
                    raise DatasetError(f"line {line}: {exc}") from exc
                name = row[cols[IMAGE_COLUMN]].strip()
                image_ref = image_dir / name
                if check_images:
                    try:
                        _check_image(image_ref)
                    except Exception as exc:
                        raise DatasetError(f"line {line}: cannot decode image {image_ref}: {exc}") from exc
                corrected = row[cols["text_corrected"]].strip()
                text = corrected if corrected else row[cols["text_ocr"]].strip()
                records.append(MemeRecord(id=name, image_ref=image_ref, raw_text=text, labels=labels))
            except DatasetError as exc:
                if skip_policy == "strict":
                    raise
                logger.warning("skipping row: %s", exc)
                skipped += 1
    empty = sum(r.text_empty for r in records)
    if empty:
        logger.info("%s: %d records have empty text", split, empty)
    return records, SplitSummary.from_records(split, records, skipped=skipped)
