# %% [markdown]
# # Scoring predictions
#
# Macro-F1 averages the per-class F1 over every class, so a model that always
# predicts the majority class scores poorly even when its accuracy looks fine.

# %%
from memotion.dataset import reference_summary
from memotion.evaluation import f1_scores

counts = reference_summary("validation").per_class_counts["overall"]
print(counts)
gold = [label for label, n in counts.items() for _ in range(n)]
always_positive = f1_scores(gold, ["positive"] * len(gold), ["positive", "negative", "neutral"])
print(f"macro {always_positive.macro_f1:.4f}  micro {always_positive.micro_f1:.4f}")
print(always_positive.per_class_f1)

# %% [markdown]
# Reports bundle Task A, the per-category Task B and C scores, and their means.
# They are written as sorted JSON next to a plain-text table.

# %%
import tempfile
from pathlib import Path

import numpy as np

from memotion.evaluation import emit_report, evaluate_tasks
from memotion.labels import FINE_LABELS, HEAD_DIMS, LabelSet

rng = np.random.default_rng(0)
labels = [LabelSet(*(FINE_LABELS[c][rng.integers(len(FINE_LABELS[c]))] for c in FINE_LABELS)) for _ in range(50)]
random_heads = [rng.uniform(size=(50, d)) for d in HEAD_DIMS]
report = evaluate_tasks(labels, random_heads, backbone="se_resnet18")
out = Path(tempfile.mkdtemp()) / "report.json"
emit_report(report, out)
print(out.with_suffix(".txt").read_text())
