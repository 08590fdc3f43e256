"""Macro/micro F1 for Tasks A, B and C, and report serialization."""
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Hashable, NamedTuple, Sequence

from .encoders import DISPLAY_NAMES
from .fusion import decode_predictions
from .labels import FINE_LABELS, PRESENCE_CATEGORIES

SCHEMA_VERSION = 1
CATEGORY_CODES = {"humour": "H", "sarcasm": "S", "offensive": "O", "motivational": "M"}


class F1Result(NamedTuple):
    macro_f1: float
    micro_f1: float
    per_class_f1: Dict[Hashable, float]


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1_scores(gold: Sequence, predicted: Sequence, classes: Sequence) -> F1Result:
    """Per-class F1 = 2TP/(2TP+FP+FN), 0 when undefined.

    Macro averages over every entry of ``classes``, including classes with no
    support; micro uses the summed counts.
    """
    if len(gold) != len(predicted):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(predicted)} predicted")
    classes = list(classes)
    index = {c: i for i, c in enumerate(classes)}
    tp = [0] * len(classes)
    fp = [0] * len(classes)
    fn = [0] * len(classes)
    for g, p in zip(gold, predicted):
        if g not in index or p not in index:
            raise ValueError(f"label outside class list: {g!r} / {p!r}")
        if g == p:
            tp[index[g]] += 1
        else:
            fp[index[p]] += 1
            fn[index[g]] += 1
    per_class = {c: _f1(tp[i], fp[i], fn[i]) for c, i in index.items()}
    macro = sum(per_class.values()) / len(classes) if classes else 0.0
    micro = _f1(sum(tp), sum(fp), sum(fn))
    return F1Result(macro, micro, per_class)


@dataclass
class MetricsReport:
    backbone: str
    task_a: Dict[str, float]
    task_b: Dict[str, Dict[str, float]]
    task_c: Dict[str, Dict[str, float]]
    per_class_f1: Dict[str, Dict[str, float]]
    n_examples: int = 0
    schema_version: int = SCHEMA_VERSION

    def mean_macro(self) -> float:
        """Average of the Task A, B and C macro-F1 (used for model selection)."""
        return (self.task_a["macro_f1"] + self.task_b["mean"]["macro_f1"] + self.task_c["mean"]["macro_f1"]) / 3

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "backbone": self.backbone,
            "n_examples": self.n_examples,
            "task_a": self.task_a,
            "task_b": self.task_b,
            "task_c": self.task_c,
            "per_class_f1": self.per_class_f1,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
        return cls(
            backbone=d["backbone"],
            task_a=d["task_a"],
            task_b=d["task_b"],
            task_c=d["task_c"],
            per_class_f1=d["per_class_f1"],
            n_examples=d["n_examples"],
        )


def _category_block(gold_by_cat, pred_by_cat, classes_by_cat):
    block = {}
    per_class = {}
    for cat in PRESENCE_CATEGORIES:
        res = f1_scores(gold_by_cat[cat], pred_by_cat[cat], classes_by_cat[cat])
        block[cat] = {"macro_f1": res.macro_f1, "micro_f1": res.micro_f1}
        per_class[cat] = res.per_class_f1
    block["mean"] = {
        k: sum(block[c][k] for c in PRESENCE_CATEGORIES) / len(PRESENCE_CATEGORIES)
        for k in ("macro_f1", "micro_f1")
    }
    # the other aggregation order: macro over every (category, class) pair at once.
    # Pooled micro equals the mean micro because every category scores the same rows.
    pooled = [f for cat in PRESENCE_CATEGORIES for f in per_class[cat].values()]
    block["pooled"] = {"macro_f1": sum(pooled) / len(pooled), "micro_f1": block["mean"]["micro_f1"]}
    return block, per_class


def evaluate_tasks(gold_labels, bundle, threshold: float = 0.5, backbone: str = "resnet18") -> MetricsReport:
    """Score decoded predictions against gold LabelSets.

    ``gold_labels`` may hold LabelSets or MemeRecords; ``bundle`` is a
    PredictionBundle (or a list of them) aligned with it.
    """
    gold = [getattr(g, "labels", g) for g in gold_labels]
    if any(g is None for g in gold):
        raise ValueError("every evaluated example needs gold labels")
    if isinstance(bundle, (list, tuple)) and bundle and hasattr(bundle[0], "as_tuple"):
        decoded = [d for b in bundle for d in decode_predictions(b, threshold)]
    else:
        decoded = decode_predictions(bundle, threshold)
    if len(decoded) != len(gold):
        raise ValueError(f"{len(gold)} gold rows but {len(decoded)} predictions")

    a = f1_scores([g.overall for g in gold], [d.task_a for d in decoded], FINE_LABELS["overall"])
    task_b, _ = _category_block(
        {c: [g.presence()[c] for g in gold] for c in PRESENCE_CATEGORIES},
        {c: [d.task_b[c] for d in decoded] for c in PRESENCE_CATEGORIES},
        {c: (0, 1) for c in PRESENCE_CATEGORIES},
    )
    task_c, per_class_c = _category_block(
        {c: [getattr(g, c) for g in gold] for c in PRESENCE_CATEGORIES},
        {c: [d.task_c[c] for d in decoded] for c in PRESENCE_CATEGORIES},
        {c: FINE_LABELS[c] for c in PRESENCE_CATEGORIES},
    )
    return MetricsReport(
        backbone=DISPLAY_NAMES.get(backbone, backbone),
        task_a={"macro_f1": a.macro_f1, "micro_f1": a.micro_f1},
        task_b=task_b,
        task_c=task_c,
        per_class_f1={"overall": a.per_class_f1, **per_class_c},
        n_examples=len(gold),
    )


def render_table(report: MetricsReport) -> str:
    """Plain-text tables: one summary row per task, then per-category rows for B and C."""
    name = report.backbone
    lines = []
    summary = [("Task A", report.task_a), ("Task B", report.task_b["mean"]), ("Task C", report.task_c["mean"])]
    width = max(len(name), len("Method"))
    lines.append(f"{'Task':<8} {'Method':<{width}} {'Macro-F1':>9} {'Micro-F1':>9}")
    for task, scores in summary:
        lines.append(f"{task:<8} {name:<{width}} {scores['macro_f1']:>9.4f} {scores['micro_f1']:>9.4f}")
    for task, block in (("Task B", report.task_b), ("Task C", report.task_c)):
        lines.append("")
        lines.append(f"{task} class-wise")
        codes = [CATEGORY_CODES[c] for c in PRESENCE_CATEGORIES]
        head = " ".join(f"{'Macro ' + c:>8}" for c in codes) + " " + " ".join(f"{'Micro ' + c:>8}" for c in codes)
        lines.append(f"{'Method':<{width}} {head}")
        macro = " ".join(f"{block[c]['macro_f1']:>8.4f}" for c in PRESENCE_CATEGORIES)
        micro = " ".join(f"{block[c]['micro_f1']:>8.4f}" for c in PRESENCE_CATEGORIES)
        lines.append(f"{name:<{width}} {macro} {micro}")
    return "\n".join(lines) + "\n"


def emit_report(report: MetricsReport, path) -> str:
    """Write ``path`` as JSON and a ``.txt`` table next to it; returns the JSON text."""
    path = Path(path)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    path.write_text(text, encoding="utf-8")
    path.with_suffix(".txt").write_text(render_table(report), encoding="utf-8")
    return text


def load_report(path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
