# %% [markdown]
# # Training on a synthetic set
#
# The real memotion-7k data is not bundled. This script writes a small set
# of memes whose colour encodes the overall sentiment and whose text carries
# one cue word per label, trains a small model on it and scores the result.

# %%
import tempfile
from pathlib import Path

import torch

from memotion.dataset import load_dataset
from memotion.encoders import BackboneConfig, TextEncoderConfig
from memotion.evaluation import evaluate_tasks, render_table
from memotion.fusion import FusionConfig, MemotionNet
from memotion.pipeline import MemeDataset, predict
from memotion.synthetic import make_fixture
from memotion.textproc import clean_text, fit_tokenizer
from memotion.training import TrainConfig, train

root = Path(tempfile.mkdtemp())
train_csv = make_fixture(root / "train", n=96, seed=1, signal=True)
val_csv = make_fixture(root / "val", n=48, seed=2, signal=True)
train_recs, train_summary = load_dataset(train_csv, root / "train" / "images")
val_recs, _ = load_dataset(val_csv, root / "val" / "images", split="validation")
print(train_summary.to_json())

# %%
tok = fit_tokenizer([clean_text(r.raw_text) for r in train_recs], vocab_size=60)
train_ds = MemeDataset(train_recs, tok, max_len=12, cache_images=True)
val_ds = MemeDataset(val_recs, tok, max_len=12, cache_images=True)

torch.manual_seed(0)
model = MemotionNet(
    BackboneConfig("resnet18", pretrained=False, freeze=True, feature_dim=32),
    TextEncoderConfig(embed_dim=32, lstm_widths=(32,), gru_widths=(32,), attention_heads=4, feature_dim=32),
    FusionConfig(memotion_dim=32),
    tok.vocab_size,
)

# %% [markdown]
# A frozen backbone has its activations computed once, which keeps CPU training quick.

# %%
cfg = TrainConfig(batch_size=16, lr_initial=3e-3, lr_decay_per_epoch=0.98, max_epochs=30, patience=5)
result = train(model, train_ds, val_ds, cfg, output_dir=root / "run")
print("stopped after epoch", result.state.epoch, "best epoch", result.state.best_epoch)

# %%
model.load_state_dict(result.best_checkpoint["model_state"])
report = evaluate_tasks(val_recs, predict(model, val_ds), backbone="resnet18")
print(render_table(report))
