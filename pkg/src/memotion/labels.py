"""Hierarchical label model for the five semantic classes.

Fine labels inside each class are ordered from weakest to strongest
expression. That order fixes the index of every position in the target and
prediction vectors used downstream.
"""
from dataclasses import dataclass, fields
from itertools import product
from typing import Dict, Iterator, Tuple

import numpy as np

SEMANTIC_CLASSES: Tuple[str, ...] = (
    "overall",
    "humour",
    "sarcasm",
    "offensive",
    "motivational",
)

FINE_LABELS: Dict[str, Tuple[str, ...]] = {
    "overall": ("positive", "negative", "neutral"),
    "humour": ("not_funny", "funny", "very_funny", "hilarious"),
    "sarcasm": ("no_sarcasm", "general", "twisted_meaning", "very_twisted"),
    "offensive": (
        "not_offensive",
        "slightly_offensive",
        "very_offensive",
        "hateful_offensive",
    ),
    "motivational": ("not_motivational", "motivational"),
}

# Categories scored as binary presence in Task B, with their "absent" label.
PRESENCE_CATEGORIES: Tuple[str, ...] = ("humour", "sarcasm", "offensive", "motivational")
ABSENT_LABEL: Dict[str, str] = {
    "humour": "not_funny",
    "sarcasm": "no_sarcasm",
    "offensive": "not_offensive",
    "motivational": "not_motivational",
}

HEAD_DIMS: Tuple[int, ...] = tuple(len(FINE_LABELS[c]) for c in SEMANTIC_CLASSES)

# Spellings found in the public memotion CSVs and in Table-style listings.
_ALIASES: Dict[str, Dict[str, str]] = {
    "overall": {"very_positive": "positive", "very_negative": "negative"},
    "humour": {"not_funny": "not_funny"},
    "sarcasm": {
        "not_sarcastic": "no_sarcasm",
        "not_sarcasm": "no_sarcasm",
        "twisted": "twisted_meaning",
    },
    "offensive": {"slight": "slightly_offensive", "hateful": "hateful_offensive"},
    "motivational": {"not_motivation": "not_motivational", "motivation": "motivational"},
}


class UnknownLabelError(ValueError):
    """A label string that does not map onto the label hierarchy."""


def normalize_label(semantic_class: str, raw: str) -> str:
    """Map a raw label string onto the canonical fine label of ``semantic_class``."""
    if semantic_class not in FINE_LABELS:
        raise KeyError(f"unknown semantic class {semantic_class!r}")
    key = "_".join(str(raw).strip().lower().replace("-", " ").split())
    if key in FINE_LABELS[semantic_class]:
        return key
    alias = _ALIASES[semantic_class].get(key)
    if alias is None:
        raise UnknownLabelError(f"{semantic_class}: unrecognised label {raw!r}")
    return alias


@dataclass(frozen=True)
class LabelSet:
    overall: str
    humour: str
    sarcasm: str
    offensive: str
    motivational: str

    def __post_init__(self):
        for name in SEMANTIC_CLASSES:
            value = getattr(self, name)
            if value not in FINE_LABELS[name]:
                raise UnknownLabelError(f"{name}: {value!r} not in {FINE_LABELS[name]}")

    def __iter__(self) -> Iterator[str]:
        return (getattr(self, f.name) for f in fields(self))

    def as_dict(self) -> Dict[str, str]:
        return {name: getattr(self, name) for name in SEMANTIC_CLASSES}

    def presence(self) -> Dict[str, int]:
        """Task B presence bits derived from the fine labels."""
        return {c: int(getattr(self, c) != ABSENT_LABEL[c]) for c in PRESENCE_CATEGORIES}

    @classmethod
    def from_strings(cls, **raw: str) -> "LabelSet":
        return cls(**{c: normalize_label(c, raw[c]) for c in SEMANTIC_CLASSES})


@dataclass(frozen=True)
class TargetVectors:
    """One-hot gold vectors for the five heads (dims 3, 4, 4, 4, 2)."""

    t1: np.ndarray
    t2: np.ndarray
    t3: np.ndarray
    t4: np.ndarray
    t5: np.ndarray

    def as_tuple(self) -> Tuple[np.ndarray, ...]:
        return (self.t1, self.t2, self.t3, self.t4, self.t5)

    def presence(self) -> Dict[str, int]:
        # index 0 is the "absent" label in every presence category
        vecs = dict(zip(PRESENCE_CATEGORIES, (self.t2, self.t3, self.t4, self.t5)))
        return {c: int(np.argmax(v) != 0) for c, v in vecs.items()}


def derive_task_targets(labels: LabelSet) -> TargetVectors:
    vectors = []
    for name, dim in zip(SEMANTIC_CLASSES, HEAD_DIMS):
        v = np.zeros(dim, dtype=np.float32)
        v[FINE_LABELS[name].index(getattr(labels, name))] = 1.0
        vectors.append(v)
    return TargetVectors(*vectors)


def labels_from_vectors(vectors) -> LabelSet:
    """Inverse of :func:`derive_task_targets`; argmax with lowest-index ties."""
    if isinstance(vectors, TargetVectors):
        vectors = vectors.as_tuple()
    values = {}
    for name, vec in zip(SEMANTIC_CLASSES, vectors):
        vec = np.asarray(vec)
        if vec.shape != (len(FINE_LABELS[name]),):
            raise ValueError(f"{name}: expected {len(FINE_LABELS[name])} entries, got {vec.shape}")
        values[name] = FINE_LABELS[name][int(np.argmax(vec))]
    return LabelSet(**values)


def all_label_sets() -> Iterator[LabelSet]:
    """Every combination of fine labels (3*4*4*4*2 = 384)."""
    for combo in product(*(FINE_LABELS[c] for c in SEMANTIC_CLASSES)):
        yield LabelSet(*combo)
