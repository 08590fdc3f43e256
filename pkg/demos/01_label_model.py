# %% [markdown]
# # The label model
#
# Every meme carries five labels: an overall sentiment plus four intensity
# scales. Tasks B and C are both read off the four scales, so one set of
# one-hot vectors is enough to train all three tasks together.

# %%
from memotion.labels import FINE_LABELS, HEAD_DIMS, LabelSet, all_label_sets, derive_task_targets, normalize_label

for name, labels in FINE_LABELS.items():
    print(f"{name:13s} {labels}")
print("head sizes:", HEAD_DIMS)

# %% [markdown]
# The public CSV uses a few different spellings; they are mapped on load.

# %%
print(normalize_label("overall", "very_positive"), normalize_label("sarcasm", "not_sarcastic"))

# %%
meme = LabelSet("negative", "very_funny", "general", "not_offensive", "motivational")
targets = derive_task_targets(meme)
for name, vec in zip(("t1", "t2", "t3", "t4", "t5"), targets.as_tuple()):
    print(name, vec)
print("Task B presence:", meme.presence())

# %% [markdown]
# There are 3 * 4 * 4 * 4 * 2 = 384 distinct label combinations.

# %%
print(sum(1 for _ in all_label_sets()))
