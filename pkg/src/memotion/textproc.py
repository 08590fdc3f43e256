"""Meme text cleaning and a corpus-fitted SentencePiece subword tokenizer."""
import hashlib
import io
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np
import sentencepiece as spm

PAD_ID = 0
UNK_ID = 1
RESERVED_IDS = (PAD_ID, UNK_ID)
ALGORITHMS = ("unigram", "bpe")
# SentencePiece's whitespace marker always occupies one piece
_META_PIECES = 1

_URL_RE = re.compile(r"(?:[a-z][a-z0-9+.\-]*://|www\.)")


@lru_cache(maxsize=None)
def _read_stopwords(path: Optional[str]) -> frozenset:
    if path is None:
        text = resources.files("memotion.data").joinpath("stopwords_en.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def load_stopwords(path=None) -> frozenset:
    """One token per line; ``None`` selects the bundled English list."""
    return _read_stopwords(None if path is None else str(path))


def clean_text(raw: str, stopwords: Optional[Iterable[str]] = None) -> str:
    """Lowercase, drop URL tokens and stop words, collapse whitespace."""
    if stopwords is None:
        stopwords = load_stopwords()
    text = raw.lower()
    tokens = [t for t in text.split() if not _URL_RE.search(t)]
    return " ".join(t for t in tokens if t not in stopwords)


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray
    valid_len: int


@dataclass
class TokenizerModel:
    vocab_size: int
    algorithm: str
    seed: int
    model_blob: bytes = field(repr=False)
    pad_id: int = PAD_ID
    unk_id: int = UNK_ID

    @property
    def processor(self) -> spm.SentencePieceProcessor:
        sp = getattr(self, "_sp", None)
        if sp is None:
            sp = spm.SentencePieceProcessor(model_proto=self.model_blob)
            self._sp = sp
        return sp

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.model_blob).hexdigest()

    def pieces(self, text: str) -> List[int]:
        return list(self.processor.encode(text, out_type=int))

    def decode(self, ids: Sequence[int]) -> str:
        return self.processor.decode([int(i) for i in ids])

    def sidecar(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "pad_id": self.pad_id,
            "unk_id": self.unk_id,
            "algorithm": self.algorithm,
            "fit_seed": self.seed,
            "sha256": self.sha256,
        }

    def save(self, path) -> Path:
        """Write ``path`` (binary model) and ``path`` + ``.json`` (sidecar)."""
        path = Path(path)
        path.write_bytes(self.model_blob)
        sidecar_path(path).write_text(json.dumps(self.sidecar(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "TokenizerModel":
        path = Path(path)
        blob = path.read_bytes()
        meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
        model = cls(
            vocab_size=meta["vocab_size"],
            algorithm=meta["algorithm"],
            seed=meta["fit_seed"],
            model_blob=blob,
            pad_id=meta["pad_id"],
            unk_id=meta["unk_id"],
        )
        if model.sha256 != meta["sha256"]:
            raise ValueError(f"{path}: model bytes do not match sidecar hash")
        return model


def sidecar_path(model_path) -> Path:
    model_path = Path(model_path)
    return model_path.with_name(model_path.name + ".json")


def min_vocab_size(corpus: Sequence[str]) -> int:
    chars = {c for text in corpus for c in text if not c.isspace()}
    return len(RESERVED_IDS) + _META_PIECES + len(chars)


def fit_tokenizer(
    corpus: Sequence[str],
    vocab_size: int = 8000,
    algorithm: str = "unigram",
    seed: int = 0,
) -> TokenizerModel:
    """Fit a SentencePiece model with exactly ``vocab_size`` pieces."""
    corpus = [t for t in corpus]
    if not any(t.strip() for t in corpus):
        raise ValueError("cannot fit a tokenizer on an empty corpus")
    if algorithm not in ALGORITHMS:
        raise ValueError(f"algorithm must be one of {ALGORITHMS}")
    needed = min_vocab_size(corpus)
    if vocab_size < needed:
        raise ValueError(f"vocab_size {vocab_size} below character coverage minimum {needed}")

    spm.set_random_generator_seed(seed)
    buf = io.BytesIO()
    try:
        spm.SentencePieceTrainer.train(
            sentence_iterator=iter([t for t in corpus if t.strip()]),
            model_writer=buf,
            vocab_size=vocab_size,
            model_type=algorithm,
            character_coverage=1.0,
            pad_id=PAD_ID,
            unk_id=UNK_ID,
            bos_id=-1,
            eos_id=-1,
            num_threads=1,
            minloglevel=2,
        )
    except RuntimeError as exc:
        raise ValueError(f"tokenizer fit failed: {exc}") from exc
    return TokenizerModel(vocab_size=vocab_size, algorithm=algorithm, seed=seed, model_blob=buf.getvalue())


def encode(model: TokenizerModel, text: str, max_len: int = 64) -> TokenSequence:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    pieces = model.pieces(text)[:max_len]
    ids = np.full(max_len, model.pad_id, dtype=np.int64)
    ids[: len(pieces)] = pieces
    return TokenSequence(ids=ids, valid_len=len(pieces))
