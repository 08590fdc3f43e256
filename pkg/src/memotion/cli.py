"""Command-line entry point: prepare, fit-tokenizer, train, evaluate, predict.

Every command prints a single JSON status line as its last line of stdout.
Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""
import argparse
import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional

import torch
from filelock import FileLock, Timeout

from .config import ConfigError, RunConfig, dump_config, load_config
from .dataset import SplitSummary, load_dataset, reference_summary, verify_distribution
from .encoders import images_to_tensor, preprocess_image
from .evaluation import emit_report, evaluate_tasks, render_table
from .fusion import MemotionNet, decode_predictions
from .pipeline import MemeDataset, predict
from .textproc import TokenizerModel, clean_text, encode, fit_tokenizer, load_stopwords
from .training import (
    TrainingError,
    load_checkpoint,
    model_from_checkpoint,
    train,
    training_accuracy,
)

logger = logging.getLogger("memotion")

DEVICE_ENV = "MEMOTION_DEVICE"
TOKENIZER_FILE = "tokenizer.model"


class UsageError(Exception):
    pass


def select_device() -> torch.device:
    name = os.environ.get(DEVICE_ENV)
    if name:
        return torch.device(name)
    return torch.device("cuda" if torch.cuda.is_available() else "cpu")


@contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(out / ".memotion.lock"))
    try:
        lock.acquire(timeout=0)
    except Timeout:
        raise RuntimeError(f"another memotion process holds {out}") from None
    try:
        yield
    finally:
        lock.release()


def _require(value, what):
    if value is None:
        raise ConfigError(f"config is missing {what}")
    return value


def _load_split(cfg: RunConfig, split: str):
    d = cfg.dataset
    csv_path = _require(getattr(d, f"{split}_csv"), f"dataset.{split}_csv")
    image_dir = _require(getattr(d, f"{split}_image_dir"), f"dataset.{split}_image_dir")
    return load_dataset(csv_path, image_dir, d.skip_policy, split=split)


def _has_split(cfg: RunConfig, split: str) -> bool:
    return getattr(cfg.dataset, f"{split}_csv") is not None


def _tokenizer(cfg: RunConfig) -> TokenizerModel:
    path = Path(cfg.output_dir) / TOKENIZER_FILE
    if not path.is_file():
        raise FileNotFoundError(f"{path} not found; run fit-tokenizer first")
    return TokenizerModel.load(path)


def cmd_prepare(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    result = {}
    for split in ("train", "validation"):
        if not _has_split(cfg, split):
            continue
        _, summary = _load_split(cfg, split)
        summary.save(out / f"summary_{split}.json")
        mismatches = verify_distribution(summary, reference_summary(split))
        for m in mismatches:
            logger.warning("%s distribution differs from the published counts: %s", split, m)
        result[split] = {"count": summary.count, "skipped": summary.skipped, "mismatches": len(mismatches)}
    if not result:
        raise ConfigError("config names no dataset split")
    return result


def cmd_fit_tokenizer(cfg: RunConfig) -> dict:
    stopwords = load_stopwords(cfg.textproc.stopwords_path)
    records, _ = _load_split(cfg, "train")
    if cfg.textproc.fit_on == "train+validation":
        records = records + _load_split(cfg, "validation")[0]
    corpus = [clean_text(r.raw_text, stopwords) for r in records]
    model = fit_tokenizer(corpus, cfg.textproc.vocab_size, cfg.textproc.algorithm, cfg.seed)
    path = model.save(Path(cfg.output_dir) / TOKENIZER_FILE)
    return {"tokenizer": str(path), "vocab_size": model.vocab_size, "sha256": model.sha256}


def _datasets(cfg: RunConfig, tokenizer):
    stopwords = load_stopwords(cfg.textproc.stopwords_path)
    make = lambda recs: MemeDataset(recs, tokenizer, cfg.textproc.max_len, stopwords, cfg.dataset.cache_images)
    train_ds = make(_load_split(cfg, "train")[0])
    val_ds = make(_load_split(cfg, "validation")[0]) if _has_split(cfg, "validation") else None
    return train_ds, val_ds


def cmd_train(cfg: RunConfig) -> dict:
    out = Path(cfg.output_dir)
    device = select_device()
    tokenizer = _tokenizer(cfg)
    train_ds, val_ds = _datasets(cfg, tokenizer)
    model = MemotionNet(cfg.image_encoder, cfg.text_encoder, cfg.fusion, tokenizer.vocab_size, tokenizer.pad_id)
    dump_config(cfg, out / "run_config.yaml")
    result = train(model, train_ds, val_ds, cfg.train_config(), output_dir=out, device=device,
                   run_config=cfg.to_dict(), tokenizer_sha256=tokenizer.sha256)
    model.load_state_dict(result.best_checkpoint["model_state"])
    acc = training_accuracy(model, train_ds, cfg.training.batch_size, device)
    with open(out / "train_log.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"type": "final", "best_epoch": result.state.best_epoch,
                             "epochs": result.state.epoch, "train_accuracy": acc}) + "\n")
    status = {"best_epoch": result.state.best_epoch, "epochs": result.state.epoch,
              "checkpoint": str(out / "best.pt"), "train_accuracy": acc}
    if val_ds is not None and len(val_ds):
        bundle = predict(model, val_ds, cfg.training.batch_size, device)
        report = evaluate_tasks(val_ds.gold_labels, bundle, cfg.evaluation.threshold, cfg.image_encoder.kind)
        emit_report(report, out / "report.json")
        sys.stderr.write(render_table(report))
        status["report"] = str(out / "report.json")
        status["task_a_macro_f1"] = report.task_a["macro_f1"]
    return status


def _checkpoint_model(cfg: RunConfig, checkpoint: Optional[str], tokenizer: TokenizerModel):
    path = Path(checkpoint) if checkpoint else Path(cfg.output_dir) / "best.pt"
    ckpt = load_checkpoint(path)
    if ckpt.get("tokenizer_sha256") not in (None, tokenizer.sha256):
        raise RuntimeError(f"{path} was trained with a different tokenizer")
    return model_from_checkpoint(ckpt), path


def cmd_evaluate(cfg: RunConfig, checkpoint: Optional[str] = None) -> dict:
    device = select_device()
    tokenizer = _tokenizer(cfg)
    model, path = _checkpoint_model(cfg, checkpoint, tokenizer)
    model.to(device)
    stopwords = load_stopwords(cfg.textproc.stopwords_path)
    records, _ = _load_split(cfg, "validation")
    ds = MemeDataset(records, tokenizer, cfg.textproc.max_len, stopwords)
    bundle = predict(model, ds, cfg.training.batch_size, device)
    report = evaluate_tasks(records, bundle, cfg.evaluation.threshold, model.image_cfg.kind)
    target = Path(cfg.output_dir) / "report.json"
    emit_report(report, target)
    sys.stderr.write(render_table(report))
    return {"checkpoint": str(path), "report": str(target), "task_a_macro_f1": report.task_a["macro_f1"]}


def cmd_predict(cfg: RunConfig, image: str, text: str, checkpoint: Optional[str] = None) -> dict:
    tokenizer = _tokenizer(cfg)
    model, _ = _checkpoint_model(cfg, checkpoint, tokenizer)
    try:
        pixels = preprocess_image(Path(image))
    except Exception as exc:
        raise RuntimeError(f"cannot read image {image}: {exc}") from exc
    seq = encode(tokenizer, clean_text(text, load_stopwords(cfg.textproc.stopwords_path)), cfg.textproc.max_len)
    with torch.no_grad():
        bundle = model(images_to_tensor([pixels]), torch.from_numpy(seq.ids)[None], torch.tensor([seq.valid_len]))
    decoded = decode_predictions(bundle, cfg.evaluation.threshold)[0]
    return {"probabilities": bundle.row(0), "labels": decoded.to_dict()}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memotion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("prepare", "fit-tokenizer", "train", "evaluate", "predict"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--output", help="override the output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("evaluate", "predict"):
            p.add_argument("--checkpoint", help="defaults to <output>/best.pt")
        if name == "predict":
            p.add_argument("--image", required=True)
            p.add_argument("--text", required=True)
    return parser


def _status(command: str, **fields) -> None:
    print(json.dumps({"status": fields.pop("status", "ok"), "command": command, **fields}))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.output:
            cfg.output_dir = args.output
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _status(args.command, status="error", error=str(exc))
        return 1

    torch.manual_seed(cfg.seed)
    out = Path(cfg.output_dir)
    try:
        with output_lock(out):
            if args.command == "prepare":
                result = cmd_prepare(cfg)
            elif args.command == "fit-tokenizer":
                result = cmd_fit_tokenizer(cfg)
            elif args.command == "train":
                result = cmd_train(cfg)
            elif args.command == "evaluate":
                result = cmd_evaluate(cfg, args.checkpoint)
            else:
                result = cmd_predict(cfg, args.image, args.text, args.checkpoint)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        _status(args.command, status="error", error=str(exc))
        return 1
    except (OSError, RuntimeError, ValueError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _status(args.command, status="error", error=str(exc))
        return 2
    _status(args.command, **result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
