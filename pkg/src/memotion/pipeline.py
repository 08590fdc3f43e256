"""Turning MemeRecords into model-ready batches, and batched inference."""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader, Dataset

from .dataset import MemeRecord
from .encoders import images_to_tensor, preprocess_image
from .fusion import MemotionNet, PredictionBundle
from .labels import TargetVectors, derive_task_targets
from .textproc import TokenizerModel, TokenSequence, clean_text, encode


@dataclass
class EncodedExample:
    index: int
    tokens: TokenSequence
    image: Optional[np.ndarray]
    targets: Optional[TargetVectors]


@dataclass
class EncodedBatch:
    indices: torch.Tensor
    token_ids: torch.Tensor
    valid_len: torch.Tensor
    images: Optional[torch.Tensor] = None
    targets: Optional[Tuple[torch.Tensor, ...]] = None

    def to(self, device) -> "EncodedBatch":
        move = lambda t: None if t is None else t.to(device)
        targets = None if self.targets is None else tuple(t.to(device) for t in self.targets)
        return EncodedBatch(self.indices, move(self.token_ids), self.valid_len, move(self.images), targets)


def collate(examples: Sequence[EncodedExample]) -> EncodedBatch:
    images = None
    if examples[0].image is not None:
        images = images_to_tensor([e.image for e in examples])
    targets = None
    if examples[0].targets is not None:
        targets = tuple(
            torch.from_numpy(np.stack([e.targets.as_tuple()[k] for e in examples])) for k in range(5)
        )
    return EncodedBatch(
        indices=torch.tensor([e.index for e in examples]),
        token_ids=torch.from_numpy(np.stack([e.tokens.ids for e in examples])),
        valid_len=torch.tensor([e.tokens.valid_len for e in examples]),
        images=images,
        targets=targets,
    )


class MemeDataset(Dataset):
    """Records with cleaned, tokenized text; images are decoded lazily.

    ``cache_images`` keeps preprocessed arrays in memory, which only makes
    sense for small fixtures. Setting ``load_images`` to False yields batches
    without pixels (used when frozen backbone activations are precomputed).
    """

    def __init__(self, records: Sequence[MemeRecord], tokenizer: TokenizerModel, max_len: int = 64,
                 stopwords=None, cache_images: bool = False):
        self.records = list(records)
        self.tokens = [encode(tokenizer, clean_text(r.raw_text, stopwords), max_len) for r in self.records]
        self.targets = [None if r.labels is None else derive_task_targets(r.labels) for r in self.records]
        self.cache_images = cache_images
        self.load_images = True
        self._image_cache = {}

    def __len__(self):
        return len(self.records)

    def image(self, i: int) -> np.ndarray:
        if i in self._image_cache:
            return self._image_cache[i]
        arr = preprocess_image(self.records[i].image_ref)
        if self.cache_images:
            self._image_cache[i] = arr
        return arr

    def __getitem__(self, i: int) -> EncodedExample:
        image = self.image(i) if self.load_images else None
        return EncodedExample(index=i, tokens=self.tokens[i], image=image, targets=self.targets[i])

    @property
    def gold_labels(self):
        return [r.labels for r in self.records]


def batch_loader(dataset: Dataset, batches: List[List[int]], num_workers: int = 0) -> DataLoader:
    """Iterate ``batches`` (lists of indices) in the given order."""
    # private generator: creating the iterator must not advance the global RNG
    return DataLoader(dataset, batch_sampler=batches, collate_fn=collate, num_workers=num_workers,
                      generator=torch.Generator().manual_seed(0))


def sequential_batches(n: int, batch_size: int) -> List[List[int]]:
    return [list(range(i, min(i + batch_size, n))) for i in range(0, n, batch_size)]


def compute_backbone_features(model: MemotionNet, dataset: MemeDataset, batch_size: int = 16,
                              device="cpu", num_workers: int = 0) -> torch.Tensor:
    """Flattened backbone activations for every example, in dataset order."""
    was_training = model.training
    model.eval()
    feats = []
    with torch.no_grad():
        for batch in batch_loader(dataset, sequential_batches(len(dataset), batch_size), num_workers):
            feats.append(model.image_encoder.backbone_features(batch.images.to(device)))
    model.train(was_training)
    return torch.cat(feats) if feats else torch.empty(0, model.image_encoder.flat_dim, device=device)


@torch.no_grad()
def predict(model: MemotionNet, dataset: MemeDataset, batch_size: int = 16, device="cpu",
            feature_bank: Optional[torch.Tensor] = None, num_workers: int = 0) -> PredictionBundle:
    """Eval-mode predictions for the whole dataset, in order."""
    was_training = model.training
    model.eval()
    prev = dataset.load_images
    dataset.load_images = feature_bank is None
    outputs = []
    try:
        for batch in batch_loader(dataset, sequential_batches(len(dataset), batch_size), num_workers):
            batch = batch.to(device)
            feats = None if feature_bank is None else feature_bank[batch.indices.to(feature_bank.device)]
            outputs.append(model(batch.images, batch.token_ids, batch.valid_len, image_features=feats).detach())
    finally:
        dataset.load_images = prev
        model.train(was_training)
    return PredictionBundle.concat(outputs)
