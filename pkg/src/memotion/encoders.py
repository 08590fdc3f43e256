"""Image and text channels: CNN backbones and the recurrent attention stack."""
import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
import torchvision
from PIL import Image
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence
from torchvision.models.resnet import BasicBlock, ResNet

logger = logging.getLogger(__name__)

IMAGE_SIZE = 224
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

BACKBONE_KINDS = ("vgg", "resnet18", "resnet34", "se_resnet18")
DISPLAY_NAMES = {
    "vgg": "VGG",
    "resnet18": "ResNet18",
    "resnet34": "ResNet34",
    "se_resnet18": "SE-ResNet18",
}
# every supported backbone downsamples 224 -> 7 and ends with 512 channels
_ACTIVATION_SHAPE = (512, 7, 7)


@dataclass
class BackboneConfig:
    kind: str = "resnet18"
    pretrained: bool = True
    feature_dim: int = 256
    freeze: bool = False
    se_reduction: int = 16

    def __post_init__(self):
        if self.kind not in BACKBONE_KINDS:
            raise ValueError(f"unknown backbone kind {self.kind!r}; expected one of {BACKBONE_KINDS}")
        if self.feature_dim < 1 or self.se_reduction < 1:
            raise ValueError("feature_dim and se_reduction must be positive")


@dataclass
class TextEncoderConfig:
    embed_dim: int = 128
    lstm_widths: Tuple[int, ...] = (128,)
    gru_widths: Tuple[int, ...] = (128,)
    attention_heads: int = 4
    feature_dim: int = 256

    def __post_init__(self):
        self.lstm_widths = tuple(self.lstm_widths)
        self.gru_widths = tuple(self.gru_widths)
        if not self.lstm_widths or not self.gru_widths:
            raise ValueError("the recurrent stack needs at least one LSTM and one GRU layer")
        hidden = 2 * self.gru_widths[-1]
        if hidden % self.attention_heads:
            raise ValueError(f"attention_heads={self.attention_heads} must divide hidden width {hidden}")

    @property
    def hidden_width(self) -> int:
        return 2 * self.gru_widths[-1]


# ---------------------------------------------------------------------------
# image preprocessing

def _to_pil(source) -> Image.Image:
    if isinstance(source, Image.Image):
        return source
    if isinstance(source, (bytes, bytearray)):
        return Image.open(io.BytesIO(source))
    return Image.open(Path(source))


def resize_unit(source, size: int = IMAGE_SIZE) -> np.ndarray:
    """Decode to RGB and bilinearly resize to ``size`` x ``size``; values in [0, 1]."""
    with _to_pil(source) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    # resize in float per channel so no uint8 rounding is introduced
    channels = [
        np.asarray(Image.fromarray(np.ascontiguousarray(rgb[..., c]), mode="F").resize((size, size), Image.BILINEAR))
        for c in range(3)
    ]
    return np.stack(channels, axis=-1)


def preprocess_image(source, normalize: bool = True) -> np.ndarray:
    """Return a 224x224x3 float32 array, ImageNet-normalized by default.

    ``source`` may be encoded bytes, a path or a PIL image. Aspect ratio is
    not preserved and no augmentation of any kind is applied.
    """
    arr = resize_unit(source)
    if normalize:
        arr = (arr - IMAGENET_MEAN) / IMAGENET_STD
    return arr.astype(np.float32)


def images_to_tensor(images: Sequence[np.ndarray]) -> torch.Tensor:
    """Stack HWC arrays into an NCHW batch."""
    return torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).contiguous()


# ---------------------------------------------------------------------------
# backbones

class SEBlock(nn.Module):
    """Squeeze-and-excitation channel gate."""

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        squeezed = x.mean(dim=(2, 3))
        return torch.sigmoid(self.fc2(F.relu(self.fc1(squeezed))))

    def forward(self, x):
        return x * self.gate(x)[:, :, None, None]


class SEBasicBlock(BasicBlock):
    se_reduction = 16

    def __init__(self, inplanes, planes, *args, **kwargs):
        super().__init__(inplanes, planes, *args, **kwargs)
        self.se = SEBlock(planes, self.se_reduction)

    def forward(self, x):
        identity = x
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.se(self.bn2(self.conv2(out)))
        if self.downsample is not None:
            identity = self.downsample(x)
        return self.relu(out + identity)


def _load_weights(kind: str):
    weights = {
        "vgg": torchvision.models.VGG16_Weights.IMAGENET1K_V1,
        "resnet18": torchvision.models.ResNet18_Weights.IMAGENET1K_V1,
        "resnet34": torchvision.models.ResNet34_Weights.IMAGENET1K_V1,
        "se_resnet18": torchvision.models.ResNet18_Weights.IMAGENET1K_V1,
    }[kind]
    try:
        return weights.get_state_dict(progress=False)
    except Exception as exc:
        raise RuntimeError(
            f"could not fetch ImageNet weights for {kind!r} ({exc}); "
            "place them in the torch hub cache or set pretrained: false"
        ) from exc


def build_backbone(kind: str, pretrained: bool = False, se_reduction: int = 16) -> nn.Module:
    """Convolutional trunk producing a 512x7x7 activation map for 224x224 input."""
    if kind not in BACKBONE_KINDS:
        raise ValueError(f"unknown backbone kind {kind!r}")
    if kind == "vgg":
        net = torchvision.models.vgg16(weights=None)
    elif kind == "resnet18":
        net = torchvision.models.resnet18(weights=None)
    elif kind == "resnet34":
        net = torchvision.models.resnet34(weights=None)
    else:
        block = type("SEBasicBlock", (SEBasicBlock,), {"se_reduction": se_reduction})
        net = ResNet(block, [2, 2, 2, 2])
    if pretrained:
        missing, unexpected = net.load_state_dict(_load_weights(kind), strict=False)
        if unexpected or any(".se." not in k for k in missing):
            raise RuntimeError(f"pretrained weights do not fit {kind}: {missing[:3]} {unexpected[:3]}")
    if kind == "vgg":
        return net.features
    # drop global pooling and the classifier
    return nn.Sequential(*list(net.children())[:-2])


class ImageEncoder(nn.Module):
    """Backbone -> flatten -> dense reduction to ``feature_dim``."""

    def __init__(self, cfg: BackboneConfig, dropout: float = 0.3):
        super().__init__()
        self.cfg = cfg
        self.backbone = build_backbone(cfg.kind, cfg.pretrained, cfg.se_reduction)
        self.flat_dim = int(np.prod(_ACTIVATION_SHAPE))
        self.reduce = nn.Linear(self.flat_dim, cfg.feature_dim)
        self.dropout = nn.Dropout(dropout)
        if cfg.freeze:
            self.backbone.requires_grad_(False)

    @property
    def frozen(self) -> bool:
        return self.cfg.freeze

    def train(self, mode: bool = True):
        super().train(mode)
        if self.frozen:
            # frozen trunk keeps its batch-norm statistics
            self.backbone.eval()
        return self

    def backbone_features(self, images: torch.Tensor) -> torch.Tensor:
        if self.frozen:
            with torch.no_grad():
                return torch.flatten(self.backbone(images), 1)
        return torch.flatten(self.backbone(images), 1)

    def reduce_features(self, flat: torch.Tensor) -> torch.Tensor:
        return self.dropout(F.relu(self.reduce(flat)))

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.reduce_features(self.backbone_features(images))


# ---------------------------------------------------------------------------
# text channel

def contextual_attention(
    hidden: torch.Tensor, mask: torch.Tensor, context: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Multi-head attention driven by one learned context vector per head.

    ``hidden`` is (B, L, h), ``mask`` (B, L) booleans with True on valid steps,
    ``context`` (heads, h // heads). Returns the reweighted hidden states
    (B, L, h) and the weights (B, heads, L). Weights are exactly zero on
    masked steps; a sequence with no valid step gets all-zero weights.
    """
    batch, length, width = hidden.shape
    heads, head_dim = context.shape
    if width % heads or width // heads != head_dim:
        raise ValueError(f"hidden width {width} incompatible with {heads} heads of size {head_dim}")
    split = hidden.reshape(batch, length, heads, head_dim)
    scores = torch.einsum("blkd,kd->bkl", split, context)
    valid = mask[:, None, :].to(torch.bool)
    scores = scores.masked_fill(~valid, torch.finfo(scores.dtype).min)
    weights = torch.softmax(scores, dim=-1) * valid.to(scores.dtype)
    out = split * weights.permute(0, 2, 1).unsqueeze(-1)
    return out.reshape(batch, length, width), weights


class ContextualAttention(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        if width % heads:
            raise ValueError(f"width {width} not divisible by heads {heads}")
        self.heads = heads
        self.context = nn.Parameter(torch.empty(heads, width // heads))
        nn.init.normal_(self.context, std=(width // heads) ** -0.5)

    def forward(self, hidden, mask):
        return contextual_attention(hidden, mask, self.context)


def masked_mean_max(x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Concatenate masked average and max pooling over time; zeros when nothing is valid."""
    m = mask.to(x.dtype).unsqueeze(-1)
    count = m.sum(dim=1)
    mean = (x * m).sum(dim=1) / count.clamp(min=1.0)
    filled = x.masked_fill(~mask.to(torch.bool).unsqueeze(-1), torch.finfo(x.dtype).min)
    mx = filled.max(dim=1).values
    mx = torch.where(count > 0, mx, torch.zeros_like(mx))
    return torch.cat([mean, mx], dim=-1)


class TextEncoder(nn.Module):
    """Embedding -> BiLSTM stack -> BiGRU stack -> attention -> pooling -> dense."""

    def __init__(self, cfg: TextEncoderConfig, vocab_size: int, pad_id: int = 0, dropout: float = 0.3):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.embedding = nn.Embedding(vocab_size, cfg.embed_dim, padding_idx=pad_id)
        layers = []
        in_dim = cfg.embed_dim
        for width in cfg.lstm_widths:
            layers.append(nn.LSTM(in_dim, width, batch_first=True, bidirectional=True))
            in_dim = 2 * width
        for width in cfg.gru_widths:
            layers.append(nn.GRU(in_dim, width, batch_first=True, bidirectional=True))
            in_dim = 2 * width
        self.recurrent = nn.ModuleList(layers)
        self.attention = ContextualAttention(in_dim, cfg.attention_heads)
        self.reduce = nn.Linear(2 * in_dim, cfg.feature_dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, token_ids: torch.Tensor, valid_len: torch.Tensor, return_attention: bool = False):
        if token_ids.numel() and (int(token_ids.min()) < 0 or int(token_ids.max()) >= self.vocab_size):
            raise ValueError(f"token id outside [0, {self.vocab_size})")
        length = token_ids.shape[1]
        valid_len = valid_len.to(torch.long).cpu()
        mask = torch.arange(length)[None, :] < valid_len[:, None]
        mask = mask.to(token_ids.device)
        x = self.embedding(token_ids)
        # pack so the backward direction never reads padding; empty rows run one step and are masked
        lengths = valid_len.clamp(min=1)
        for rnn in self.recurrent:
            packed = pack_padded_sequence(x, lengths, batch_first=True, enforce_sorted=False)
            out, _ = rnn(packed)
            x, _ = pad_packed_sequence(out, batch_first=True, total_length=length)
        attended, weights = self.attention(x, mask)
        pooled = masked_mean_max(attended, mask)
        features = self.dropout(F.relu(self.reduce(pooled)))
        if return_attention:
            return features, weights
        return features
