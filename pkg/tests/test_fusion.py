import itertools
import math

import numpy as np
import pytest
import torch

from memotion.fusion import FusionHead, PredictionBundle, combine, decode_predictions
from memotion.labels import FINE_LABELS, HEAD_DIMS, PRESENCE_CATEGORIES, SEMANTIC_CLASSES, all_label_sets, derive_task_targets


def _sig(x):
    return 1 / (1 + math.exp(-x))


def test_combine_order_and_shape():
    out = combine(torch.tensor([[1.0, 2.0]]), torch.tensor([[3.0, 4.0, 5.0]]))
    assert out.tolist() == [[1.0, 2.0, 3.0, 4.0, 5.0]]
    assert combine(torch.zeros(4, 256), torch.ones(4, 256)).shape == (4, 512)
    with pytest.raises(ValueError):
        combine(torch.zeros(2, 3), torch.zeros(2, 4), d_img=4)
    with pytest.raises(ValueError):
        combine(torch.zeros(2, 3), torch.zeros(3, 4))


def test_predict_overall_zero_input():
    head = FusionHead(256, 256, 256, dropout=0.0)
    t1 = head.predict_overall(torch.zeros(1, 512))
    torch.testing.assert_close(t1, torch.sigmoid(head.overall.bias)[None])
    with torch.no_grad():
        head.overall.bias.zero_()
    torch.testing.assert_close(head.predict_overall(torch.zeros(1, 512)), torch.full((1, 3), 0.5))


def test_predict_overall_hand_example():
    head = FusionHead(1, 1, 4, dropout=0.0)
    with torch.no_grad():
        head.overall.weight.copy_(torch.tensor([[0.5, -1.0], [2.0, 0.0], [-0.3, 0.7]]))
        head.overall.bias.copy_(torch.tensor([0.1, 0.0, -0.2]))
    t1 = head.predict_overall(torch.tensor([[1.0, 2.0]]))
    expected = [_sig(-1.4), _sig(2.0), _sig(0.9)]
    np.testing.assert_allclose(t1[0].detach().numpy(), expected, atol=1e-6)
    assert ((t1 > 0) & (t1 < 1)).all()


def test_memotion_feature_hand_example():
    head = FusionHead(1, 1, 2, dropout=0.0)
    with torch.no_grad():
        head.memotion.weight.copy_(torch.tensor([[1.0, 0, 0, 2, 0], [0, 1, -1, 0, 3]]))
        head.memotion.bias.copy_(torch.tensor([0.25, 0.0]))
    # row 1: 0.5 + 2*1 + 0.25 = 2.75; row 2: 0.5 - 0.5 - 3 = -3 -> 0
    out = head.memotion_feature(torch.tensor([[0.5, 0.5, 0.5]]), torch.tensor([[1.0, -1.0]]))
    np.testing.assert_allclose(out[0].detach().numpy(), [2.75, 0.0], atol=1e-6)
    with pytest.raises(ValueError):
        head.memotion_feature(torch.zeros(1, 3), torch.zeros(1, 3))


def test_zero_heads_give_half():
    head = FusionHead(3, 3, 4, dropout=0.0)
    for layer in head.fine:
        torch.nn.init.zeros_(layer.weight)
        torch.nn.init.zeros_(layer.bias)
    fine = head.predict_fine(torch.randn(5, 4))
    assert [t.shape[1] for t in fine] == list(HEAD_DIMS[1:])
    for t in fine:
        assert torch.equal(t, torch.full_like(t, 0.5))


def test_forward_bundle_shapes():
    head = FusionHead(6, 4, 8)
    bundle = head(torch.randn(7, 6), torch.randn(7, 4))
    assert [t.shape for t in bundle.as_tuple()] == [(7, d) for d in HEAD_DIMS]
    assert len(bundle) == 7
    assert all(((t >= 0) & (t <= 1)).all() for t in bundle.as_tuple())


def test_cascade_gradient_reaches_both_channels():
    torch.manual_seed(0)
    head = FusionHead(3, 3, 4, dropout=0.0)
    f_img = torch.randn(2, 3, requires_grad=True)
    f_txt = torch.randn(2, 3, requires_grad=True)
    bundle = head(f_img, f_txt)
    # only the fine-grained heads contribute to this loss
    loss = sum(t.sum() for t in bundle.as_tuple()[1:])
    loss.backward()
    assert f_img.grad.abs().sum() > 0 and f_txt.grad.abs().sum() > 0
    # the cascade carries gradient into the overall layer
    assert head.overall.weight.grad.abs().sum() > 0


def test_fusion_head_finite_differences(fd_check):
    torch.manual_seed(0)
    head = FusionHead(3, 3, 4, dropout=0.0).double()
    f_img = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
    f_txt = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)
    weights = [torch.randn(2, d, dtype=torch.float64) for d in HEAD_DIMS]

    def f():
        return sum((t * w).sum() for t, w in zip(head(f_img, f_txt).as_tuple(), weights))

    assert fd_check(f, [f_img, f_txt] + list(head.parameters())) == []


def _bundle(*rows):
    return PredictionBundle(*(torch.tensor([r], dtype=torch.float32) for r in rows))


def test_decode_example():
    d = decode_predictions(_bundle([0.1, 0.7, 0.2], [0.9, 0.05, 0.03, 0.02], [0.1, 0.6, 0.2, 0.1],
                                   [0.4, 0.3, 0.2, 0.1], [0.2, 0.8]))[0]
    assert d.task_a == "negative"
    assert d.task_c == {"humour": "not_funny", "sarcasm": "general", "offensive": "not_offensive",
                        "motivational": "motivational"}
    assert d.task_b == {"humour": 0, "sarcasm": 1, "offensive": 0, "motivational": 1}


def test_decode_tie_breaks_to_lowest_index():
    d = decode_predictions(_bundle([0.5, 0.5, 0.5], [0.3, 0.3, 0.3, 0.3], [0.1, 0.4, 0.4, 0.1],
                                   [0.2, 0.2, 0.6, 0.6], [0.5, 0.5]))[0]
    assert d.task_a == FINE_LABELS["overall"][0]
    assert d.task_c == {"humour": "not_funny", "sarcasm": "general", "offensive": "very_offensive",
                        "motivational": "not_motivational"}


def test_decode_threshold_range():
    b = _bundle([0.1, 0.7, 0.2], [1, 0, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0], [1, 0])
    for bad in (0.0, 1.0, -0.5):
        with pytest.raises(ValueError):
            decode_predictions(b, bad)
    assert decode_predictions(b, 0.2) == decode_predictions(b, 0.8)


def test_decode_scale_invariance():
    rng = np.random.default_rng(0)
    heads = [rng.uniform(0.01, 0.99, (20, d)) for d in HEAD_DIMS]
    base = decode_predictions(heads)
    for scale in (0.3, 0.5, 0.99):
        assert decode_predictions([h * scale for h in heads]) == base


def test_decode_round_trip_all_label_sets():
    sets = list(all_label_sets())
    assert len(sets) == 384
    targets = [derive_task_targets(s) for s in sets]
    heads = [np.stack([t.as_tuple()[k] for t in targets]) for k in range(5)]
    decoded = decode_predictions(heads)
    for s, t, d in zip(sets, targets, decoded):
        assert d.label_set() == s
        assert d.task_b == t.presence() == s.presence()


def test_bundle_concat_and_row():
    a = _bundle([0.1, 0.2, 0.7], [1, 0, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0], [1, 0])
    both = PredictionBundle.concat([a, a])
    assert len(both) == 2
    assert both.row(1)["t5"] == [1.0, 0.0]
