"""Feature aggregation: concatenation, the overall-sentiment cascade and five sigmoid heads."""
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoders import BackboneConfig, ImageEncoder, TextEncoder, TextEncoderConfig
from .labels import FINE_LABELS, HEAD_DIMS, PRESENCE_CATEGORIES, SEMANTIC_CLASSES, LabelSet

HEAD_NAMES = ("t1", "t2", "t3", "t4", "t5")


@dataclass
class FusionConfig:
    memotion_dim: int = 256
    dropout: float = 0.3

    def __post_init__(self):
        if self.memotion_dim < 1:
            raise ValueError("memotion_dim must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass
class PredictionBundle:
    """Sigmoid outputs of the five heads, each shaped (batch, dim)."""

    t1: torch.Tensor
    t2: torch.Tensor
    t3: torch.Tensor
    t4: torch.Tensor
    t5: torch.Tensor

    def as_tuple(self) -> Tuple[torch.Tensor, ...]:
        return (self.t1, self.t2, self.t3, self.t4, self.t5)

    def __len__(self):
        return self.t1.shape[0]

    def row(self, i: int) -> Dict[str, List[float]]:
        return {name: t[i].detach().cpu().tolist() for name, t in zip(HEAD_NAMES, self.as_tuple())}

    def detach(self) -> "PredictionBundle":
        return PredictionBundle(*(t.detach().cpu() for t in self.as_tuple()))

    @classmethod
    def concat(cls, bundles) -> "PredictionBundle":
        bundles = list(bundles)
        return cls(*(torch.cat([b.as_tuple()[k] for b in bundles]) for k in range(5)))


def combine(f_image: torch.Tensor, f_text: torch.Tensor, d_img: Optional[int] = None,
            d_txt: Optional[int] = None) -> torch.Tensor:
    """Concatenate image then text features along the last axis."""
    if d_img is not None and f_image.shape[-1] != d_img:
        raise ValueError(f"image feature has {f_image.shape[-1]} dims, expected {d_img}")
    if d_txt is not None and f_text.shape[-1] != d_txt:
        raise ValueError(f"text feature has {f_text.shape[-1]} dims, expected {d_txt}")
    if f_image.shape[:-1] != f_text.shape[:-1]:
        raise ValueError("image and text batches differ in shape")
    return torch.cat([f_image, f_text], dim=-1)


class FusionHead(nn.Module):
    def __init__(self, d_img: int, d_txt: int, d_mem: int = 256, dropout: float = 0.3):
        super().__init__()
        self.d_img, self.d_txt = d_img, d_txt
        d_comb = d_img + d_txt
        n_overall = HEAD_DIMS[0]
        self.overall = nn.Linear(d_comb, n_overall)
        self.memotion = nn.Linear(n_overall + d_comb, d_mem)
        self.fine = nn.ModuleList(nn.Linear(d_mem, dim) for dim in HEAD_DIMS[1:])
        self.dropout = nn.Dropout(dropout)

    def predict_overall(self, f_combined):
        return torch.sigmoid(self.overall(self.dropout(f_combined)))

    def memotion_feature(self, t1, f_combined):
        if t1.shape[-1] + f_combined.shape[-1] != self.memotion.in_features:
            raise ValueError("t1 / combined feature sizes do not match the memotion layer")
        return F.relu(self.memotion(torch.cat([t1, f_combined], dim=-1)))

    def predict_fine(self, f_memotion):
        h = self.dropout(f_memotion)
        return tuple(torch.sigmoid(head(h)) for head in self.fine)

    def forward(self, f_image, f_text) -> PredictionBundle:
        f_combined = combine(f_image, f_text, self.d_img, self.d_txt)
        t1 = self.predict_overall(f_combined)
        # the model's own t1 feeds the cascade in train and eval alike
        f_memotion = self.memotion_feature(t1, f_combined)
        return PredictionBundle(t1, *self.predict_fine(f_memotion))


class MemotionNet(nn.Module):
    """Joint image+text model emitting all five heads."""

    def __init__(self, image_cfg: BackboneConfig, text_cfg: TextEncoderConfig, fusion_cfg: FusionConfig,
                 vocab_size: int, pad_id: int = 0):
        super().__init__()
        self.image_cfg, self.text_cfg, self.fusion_cfg = image_cfg, text_cfg, fusion_cfg
        self.vocab_size, self.pad_id = vocab_size, pad_id
        self.image_encoder = ImageEncoder(image_cfg, fusion_cfg.dropout)
        self.text_encoder = TextEncoder(text_cfg, vocab_size, pad_id, fusion_cfg.dropout)
        self.fusion = FusionHead(image_cfg.feature_dim, text_cfg.feature_dim, fusion_cfg.memotion_dim,
                                 fusion_cfg.dropout)

    def config_dict(self) -> dict:
        return {
            "image_encoder": asdict(self.image_cfg),
            "text_encoder": asdict(self.text_cfg),
            "fusion": asdict(self.fusion_cfg),
            "vocab_size": self.vocab_size,
            "pad_id": self.pad_id,
        }

    @classmethod
    def from_config_dict(cls, d: dict) -> "MemotionNet":
        """Rebuild the architecture; weights are expected to be loaded afterwards."""
        image_cfg = replace(BackboneConfig(**d["image_encoder"]), pretrained=False)
        return cls(image_cfg, TextEncoderConfig(**d["text_encoder"]), FusionConfig(**d["fusion"]),
                   d["vocab_size"], d["pad_id"])

    def forward(self, images=None, token_ids=None, valid_len=None, image_features=None) -> PredictionBundle:
        """Either ``images`` (N,3,224,224) or precomputed flattened ``image_features``."""
        if image_features is None:
            if images is None:
                raise ValueError("need images or image_features")
            image_features = self.image_encoder.backbone_features(images)
        f_image = self.image_encoder.reduce_features(image_features)
        f_text = self.text_encoder(token_ids, valid_len)
        return self.fusion(f_image, f_text)


# ---------------------------------------------------------------------------
# decoding

@dataclass(frozen=True)
class DecodedPrediction:
    task_a: str
    task_b: Dict[str, int]
    task_c: Dict[str, str]

    def label_set(self) -> LabelSet:
        return LabelSet(overall=self.task_a, **self.task_c)

    def to_dict(self) -> dict:
        return {"task_a": self.task_a, "task_b": dict(self.task_b), "task_c": dict(self.task_c)}


def decode_predictions(bundle, threshold: float = 0.5) -> List[DecodedPrediction]:
    """Argmax decode of every row (lowest index wins ties).

    Task B presence is derived from the Task C decision, so ``threshold`` is
    only range-checked; it does not move any decision under the argmax rule.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    heads = bundle.as_tuple() if isinstance(bundle, PredictionBundle) else tuple(bundle)
    arrays = [np.atleast_2d(t.detach().cpu().numpy() if torch.is_tensor(t) else np.asarray(t)) for t in heads]
    out = []
    for i in range(arrays[0].shape[0]):
        # np.argmax returns the first maximal index
        picks = {name: FINE_LABELS[name][int(np.argmax(a[i]))] for name, a in zip(SEMANTIC_CLASSES, arrays)}
        task_c = {c: picks[c] for c in PRESENCE_CATEGORIES}
        task_b = {c: int(FINE_LABELS[c].index(picks[c]) != 0) for c in PRESENCE_CATEGORIES}
        out.append(DecodedPrediction(task_a=picks["overall"], task_b=task_b, task_c=task_c))
    return out
