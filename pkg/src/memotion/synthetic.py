"""Small synthetic datasets in the memotion CSV layout, for tests and demos."""
import csv
from pathlib import Path
from typing import List, Optional

import numpy as np
from PIL import Image

from .labels import FINE_LABELS, SEMANTIC_CLASSES, LabelSet

HEADER = ["", "image_name", "text_ocr", "text_corrected", "humour", "sarcasm", "offensive",
          "motivational", "overall_sentiment"]

# spellings used by the public CSV
RAW_SPELLING = {
    ("sarcasm", "no_sarcasm"): "not_sarcastic",
    ("offensive", "slightly_offensive"): "slight",
}

_FILLER = ("when", "monday", "coffee", "boss", "cat", "dog", "life", "work", "friday", "meme",
           "weekend", "teacher", "exam", "pizza", "sleep", "phone", "mom", "gym", "code", "bug")
# one cue word per fine label, used when ``signal`` is on
_CUES = {(c, lab): f"{c[:3]}{lab.replace('_', '')}" for c in SEMANTIC_CLASSES for lab in FINE_LABELS[c]}
_PALETTE = {"positive": (230, 180, 40), "negative": (40, 60, 200), "neutral": (120, 120, 120)}


def raw_label(semantic_class: str, label: str) -> str:
    return RAW_SPELLING.get((semantic_class, label), label)


def random_labels(rng: np.random.Generator) -> LabelSet:
    return LabelSet(*(FINE_LABELS[c][rng.integers(len(FINE_LABELS[c]))] for c in SEMANTIC_CLASSES))


def write_csv(path, rows: List[dict]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HEADER)
        for i, r in enumerate(rows):
            lab = r["labels"]
            w.writerow([i, r["image_name"], r.get("text_ocr", r["text"]), r["text"],
                        raw_label("humour", lab.humour), raw_label("sarcasm", lab.sarcasm),
                        raw_label("offensive", lab.offensive), raw_label("motivational", lab.motivational),
                        raw_label("overall", lab.overall)])
    return path


def make_fixture(root, n: int = 64, seed: int = 0, image_size: int = 32, signal: bool = False,
                 labels: Optional[List[LabelSet]] = None, csv_name: str = "labels.csv") -> Path:
    """Write ``n`` memes (PNG + CSV row) under ``root``; returns the CSV path.

    Without ``signal`` the images are noise and the texts random filler, so a
    model can only memorize them. With ``signal`` the image colour encodes
    the overall sentiment and every text carries one cue word per label.
    """
    root = Path(root)
    img_dir = root / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        lab = labels[i] if labels is not None else random_labels(rng)
        if signal:
            base = np.array(_PALETTE[lab.overall], dtype=np.float64)
            pixels = np.clip(base + rng.normal(0, 20, (image_size, image_size, 3)), 0, 255)
            words = [_CUES[(c, getattr(lab, c))] for c in SEMANTIC_CLASSES]
            words += list(rng.choice(_FILLER, size=3))
            rng.shuffle(words)
        else:
            pixels = rng.integers(0, 256, (image_size, image_size, 3))
            words = list(rng.choice(_FILLER, size=int(rng.integers(3, 9))))
        name = f"image_{i:04d}.png"
        Image.fromarray(pixels.astype(np.uint8), "RGB").save(img_dir / name)
        rows.append({"image_name": name, "text": " ".join(words), "labels": lab})
    return write_csv(root / csv_name, rows)
