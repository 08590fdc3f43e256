"""Joint training: summed BCE over the five heads, Adam, per-epoch LR decay, early stopping."""
import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .evaluation import MetricsReport, evaluate_tasks
from .fusion import HEAD_NAMES, MemotionNet, PredictionBundle
from .pipeline import MemeDataset, batch_loader, compute_backbone_features, predict

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "memotion-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 16
    lr_initial: float = 1e-4
    lr_decay_per_epoch: float = 0.95
    max_epochs: int = 50
    patience: Optional[int] = 5  # None disables early stopping
    seed: int = 0
    head_loss_weights: Tuple[float, ...] = (1.0, 1.0, 1.0, 1.0, 1.0)
    # optional BCE positive-class weights, one list per head
    positive_class_weights: Optional[Tuple[Tuple[float, ...], ...]] = None
    cache_frozen_features: bool = True
    num_workers: int = 0
    save_per_task_best: bool = False

    def __post_init__(self):
        self.head_loss_weights = tuple(float(w) for w in self.head_loss_weights)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_initial <= 0:
            raise ValueError("lr_initial must be > 0")
        if not 0 < self.lr_decay_per_epoch <= 1:
            raise ValueError("lr_decay_per_epoch must lie in (0, 1]")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 or null")
        if len(self.head_loss_weights) != 5:
            raise ValueError("head_loss_weights needs five entries")
        if self.positive_class_weights is not None:
            self.positive_class_weights = tuple(tuple(float(x) for x in w) for w in self.positive_class_weights)
            if len(self.positive_class_weights) != 5:
                raise ValueError("positive_class_weights needs one list per head")


@dataclass
class TrainState:
    epoch: int = 0  # completed epochs
    step: int = 0
    step_in_epoch: int = 0
    current_lr: float = 0.0
    best_val_metric: float = -math.inf
    best_epoch: int = 0
    epochs_without_improvement: int = 0
    loss_history: List[float] = field(default_factory=list)
    epoch_metrics: List[dict] = field(default_factory=list)
    per_task_best: Dict[str, float] = field(default_factory=dict)
    stopped_early: bool = False


def lr_at(config: TrainConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.lr_initial * config.lr_decay_per_epoch ** epoch


def joint_loss(bundle: PredictionBundle, targets, weights: Optional[Sequence[float]] = None,
               positive_weights=None, eps: float = 1e-7, return_per_head: bool = False):
    """Sum over heads of weight * mean-over-classes BCE, averaged over the batch."""
    preds = bundle.as_tuple() if isinstance(bundle, PredictionBundle) else tuple(bundle)
    targets = targets.as_tuple() if hasattr(targets, "as_tuple") else tuple(targets)
    if len(preds) != 5 or len(targets) != 5:
        raise ValueError("expected five heads")
    weights = (1.0,) * 5 if weights is None else tuple(weights)
    total = 0.0
    per_head = []
    for k, (p, y) in enumerate(zip(preds, targets)):
        y = torch.as_tensor(y, dtype=p.dtype, device=p.device)
        if p.shape != y.shape:
            raise ValueError(f"head {HEAD_NAMES[k]}: prediction {tuple(p.shape)} vs target {tuple(y.shape)}")
        if not torch.isfinite(p).all():
            raise ValueError(f"head {HEAD_NAMES[k]}: non-finite prediction")
        p = p.clamp(eps, 1 - eps)
        pos = y * torch.log(p)
        if positive_weights is not None:
            pos = pos * torch.as_tensor(positive_weights[k], dtype=p.dtype, device=p.device)
        bce = -(pos + (1 - y) * torch.log1p(-p))
        head = bce.mean(dim=-1)
        per_head.append(head.mean())
        total = total + weights[k] * head
    loss = total.mean()
    if return_per_head:
        return loss, per_head
    return loss


def head_accuracy(bundle: PredictionBundle, targets) -> Dict[str, float]:
    """Argmax accuracy per head."""
    targets = targets.as_tuple() if hasattr(targets, "as_tuple") else tuple(targets)
    out = {}
    for name, p, y in zip(HEAD_NAMES, bundle.as_tuple(), targets):
        y = torch.as_tensor(y)
        out[name] = float((p.argmax(dim=-1).cpu() == y.argmax(dim=-1).cpu()).float().mean())
    return out


def dataset_targets(dataset: MemeDataset) -> Tuple[torch.Tensor, ...]:
    return tuple(torch.from_numpy(np.stack([t.as_tuple()[k] for t in dataset.targets])) for k in range(5))


def epoch_order(n: int, seed: int, epoch: int) -> List[int]:
    """Shuffled example order; depends only on the seed and epoch index."""
    g = torch.Generator().manual_seed(seed * 100_003 + epoch)
    return torch.randperm(n, generator=g).tolist()


# ---------------------------------------------------------------------------
# checkpoints

def make_checkpoint(model: MemotionNet, state: TrainState, run_config: Optional[dict] = None,
                    tokenizer_sha256: Optional[str] = None, optimizer=None) -> dict:
    ckpt = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": model.config_dict(),
        "model_state": copy.deepcopy(model.state_dict()),
        "run_config": run_config or {},
        "tokenizer_sha256": tokenizer_sha256,
        "train_state": asdict(state),
    }
    if optimizer is not None:
        ckpt["optimizer_state"] = copy.deepcopy(optimizer.state_dict())
        ckpt["rng_state"] = torch.get_rng_state()
    return ckpt


def save_checkpoint(ckpt: dict, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        torch.save(ckpt, tmp)
        tmp.replace(path)
    except OSError as exc:
        raise TrainingError(f"could not write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    ckpt = torch.load(path, map_location="cpu", weights_only=False)
    if ckpt.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a memotion checkpoint")
    return ckpt


def model_from_checkpoint(ckpt: dict) -> MemotionNet:
    model = MemotionNet.from_config_dict(ckpt["model_config"])
    model.load_state_dict(ckpt["model_state"])
    model.eval()
    return model


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainResult:
    state: TrainState
    best_checkpoint: dict
    best_checkpoint_path: Optional[Path] = None
    last_report: Optional[MetricsReport] = None


def _validation_metric(model, val_data, config, device, feature_bank):
    bundle = predict(model, val_data, config.batch_size, device, feature_bank, config.num_workers)
    report = evaluate_tasks(val_data.gold_labels, bundle, backbone=model.image_cfg.kind)
    return report.mean_macro(), report


def train(
    model: MemotionNet,
    train_data: MemeDataset,
    val_data: Optional[MemeDataset],
    config: TrainConfig,
    output_dir=None,
    resume_from=None,
    max_steps: Optional[int] = None,
    metric_fn: Optional[Callable[[MemotionNet, int], float]] = None,
    device="cpu",
    run_config: Optional[dict] = None,
    tokenizer_sha256: Optional[str] = None,
) -> TrainResult:
    """Train ``model`` in place and return the best checkpoint with the final state.

    After every epoch the selection metric is the mean of the Task A, B and
    C macro-F1 on ``val_data``; ``metric_fn(model, epoch)`` overrides it, and
    without either the negated mean epoch loss is used. ``max_steps`` ends the
    run after that many optimizer steps (total, counting resumed ones) and
    leaves a resumable ``last.pt`` in ``output_dir``.
    """
    if len(train_data) == 0:
        raise TrainingError("empty training set")
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    device = torch.device(device)
    model.to(device)

    torch.manual_seed(config.seed)
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(params, lr=lr_at(config, 0))
    state = TrainState(current_lr=lr_at(config, 0))

    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, dict) else load_checkpoint(resume_from)
        model.load_state_dict(ckpt["model_state"])
        optimizer.load_state_dict(ckpt["optimizer_state"])
        state = TrainState(**ckpt["train_state"])
        torch.set_rng_state(ckpt["rng_state"])

    log_fh = open(out / "train_log.jsonl", "a", encoding="utf-8") if out is not None else None

    def log(record):
        if log_fh is not None:
            log_fh.write(json.dumps(record) + "\n")
            log_fh.flush()

    feature_bank = val_bank = None
    if model.image_encoder.frozen and config.cache_frozen_features:
        feature_bank = compute_backbone_features(model, train_data, config.batch_size, device, config.num_workers)
        if val_data is not None and len(val_data):
            val_bank = compute_backbone_features(model, val_data, config.batch_size, device, config.num_workers)
    train_data.load_images = feature_bank is None

    best_ckpt = make_checkpoint(model, state, run_config, tokenizer_sha256)
    best_path = out / "best.pt" if out is not None else None
    last_report = None

    def save_last():
        if out is not None:
            save_checkpoint(make_checkpoint(model, state, run_config, tokenizer_sha256, optimizer), out / "last.pt")

    try:
        while state.epoch < config.max_epochs:
            lr = lr_at(config, state.epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr
            state.current_lr = lr
            order = epoch_order(len(train_data), config.seed, state.epoch)
            batches = [order[i:i + config.batch_size] for i in range(0, len(order), config.batch_size)]
            remaining = batches[state.step_in_epoch:]
            epoch_losses = []
            model.train()
            for batch in batch_loader(train_data, remaining, config.num_workers):
                if max_steps is not None and state.step >= max_steps:
                    save_last()
                    return TrainResult(state, best_ckpt, best_path if best_path and best_path.exists() else None,
                                       last_report)
                batch = batch.to(device)
                feats = None if feature_bank is None else feature_bank[batch.indices.to(feature_bank.device)]
                bundle = model(batch.images, batch.token_ids, batch.valid_len, image_features=feats)
                bad = [n for n, t in zip(HEAD_NAMES, bundle.as_tuple()) if not torch.isfinite(t).all()]
                if bad:
                    raise TrainingError(f"non-finite predictions in heads {bad} at step {state.step} "
                                        f"(epoch {state.epoch + 1}, lr {lr})")
                loss, per_head = joint_loss(bundle, batch.targets, config.head_loss_weights,
                                            config.positive_class_weights, return_per_head=True)
                per_head = [float(h.detach()) for h in per_head]
                if not torch.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss at step {state.step} (epoch {state.epoch + 1}): "
                        f"per-head {per_head}, lr {lr}"
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                value = float(loss.detach())
                state.loss_history.append(value)
                epoch_losses.append(value)
                state.step += 1
                state.step_in_epoch += 1
                log({
                    "type": "step", "step": state.step, "epoch": state.epoch + 1, "lr": lr, "loss": value,
                    "head_loss": dict(zip(HEAD_NAMES, per_head)),
                })
            if max_steps is not None and state.step >= max_steps and state.step_in_epoch < len(batches):
                save_last()
                return TrainResult(state, best_ckpt, best_path if best_path and best_path.exists() else None,
                                   last_report)

            state.epoch += 1
            state.step_in_epoch = 0
            state.current_lr = lr_at(config, state.epoch)
            record = {"type": "epoch", "epoch": state.epoch, "lr": lr,
                      "mean_loss": float(np.mean(epoch_losses)) if epoch_losses else None}
            report = None
            if metric_fn is not None:
                metric = float(metric_fn(model, state.epoch))
            elif val_data is not None and len(val_data):
                metric, report = _validation_metric(model, val_data, config, device, val_bank)
                last_report = report
                record["val"] = {"task_a_macro": report.task_a["macro_f1"],
                                 "task_b_macro": report.task_b["mean"]["macro_f1"],
                                 "task_c_macro": report.task_c["mean"]["macro_f1"]}
            else:
                metric = -record["mean_loss"] if epoch_losses else -math.inf
            record["metric"] = metric
            state.epoch_metrics.append(record)

            if metric > state.best_val_metric:
                state.best_val_metric = metric
                state.best_epoch = state.epoch
                state.epochs_without_improvement = 0
                best_ckpt = make_checkpoint(model, state, run_config, tokenizer_sha256)
                if best_path is not None:
                    save_checkpoint(best_ckpt, best_path)
            else:
                state.epochs_without_improvement += 1
            if report is not None and config.save_per_task_best and out is not None:
                _save_per_task_best(model, state, report, out, run_config, tokenizer_sha256)
            log(record)
            save_last()
            if config.patience is not None and state.epochs_without_improvement >= config.patience:
                state.stopped_early = True
                logger.info("early stop after epoch %d (best %d)", state.epoch, state.best_epoch)
                break
    finally:
        train_data.load_images = True
        if log_fh is not None:
            log_fh.close()
    return TrainResult(state, best_ckpt, best_path, last_report)


def _save_per_task_best(model, state, report, out, run_config, tokenizer_sha256):
    scores = {
        "task_a": report.task_a["macro_f1"],
        "task_b": report.task_b["mean"]["macro_f1"],
        "task_c": report.task_c["mean"]["macro_f1"],
    }
    for task, score in scores.items():
        if score > state.per_task_best.get(task, -math.inf):
            state.per_task_best[task] = score
            save_checkpoint(make_checkpoint(model, state, run_config, tokenizer_sha256), out / f"best_{task}.pt")


def training_accuracy(model: MemotionNet, data: MemeDataset, batch_size: int = 16, device="cpu",
                      feature_bank: Optional[torch.Tensor] = None) -> Dict[str, float]:
    bundle = predict(model, data, batch_size, device, feature_bank)
    return head_accuracy(bundle, dataset_targets(data))
