# %% [markdown]
# # One forward pass through the joint model
#
# The image channel maps a 224x224 picture to a 256-d vector, the text channel
# maps token ids to another 256-d vector, and the fusion head predicts the
# overall sentiment first, then feeds that prediction into the four scale heads.

# %%
import torch

from memotion.encoders import BackboneConfig, TextEncoderConfig
from memotion.fusion import FusionConfig, MemotionNet, decode_predictions

torch.manual_seed(0)
# pretrained=False keeps this demo offline; training normally starts from ImageNet weights
model = MemotionNet(BackboneConfig("se_resnet18", pretrained=False), TextEncoderConfig(), FusionConfig(),
                    vocab_size=500).eval()
print(sum(p.numel() for p in model.parameters()) / 1e6, "M parameters")

# %%
images = torch.randn(2, 3, 224, 224)
ids = torch.randint(2, 500, (2, 12))
lengths = torch.tensor([12, 5])
with torch.no_grad():
    bundle = model(images, ids, lengths)
for name, t in zip(("t1", "t2", "t3", "t4", "t5"), bundle.as_tuple()):
    print(name, tuple(t.shape), t[0].numpy().round(3))

# %% [markdown]
# Decoding takes the argmax of each head; Task B presence follows from the Task C pick.

# %%
for d in decode_predictions(bundle):
    print(d.to_dict())

# %% [markdown]
# The attention weights show which tokens each context vector looked at.

# %%
with torch.no_grad():
    _, weights = model.text_encoder(ids, lengths, return_attention=True)
print(weights[1].numpy().round(3))
