import shutil
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image

from memotion.dataset import load_dataset
from memotion.encoders import BackboneConfig, TextEncoderConfig
from memotion.fusion import FusionConfig, MemotionNet
from memotion.synthetic import make_fixture
from memotion.textproc import clean_text, fit_tokenizer

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance = {}


@pytest.fixture
def mini_dataset(tmp_path):
    """The hand-written 12-row CSV plus generated images."""
    root = tmp_path / "mini"
    (root / "images").mkdir(parents=True)
    shutil.copy(FIXTURES / "mini" / "labels.csv", root / "labels.csv")
    rng = np.random.default_rng(7)
    for i in range(1, 13):
        pixels = rng.integers(0, 256, (40, 30, 3), dtype=np.uint8)
        Image.fromarray(pixels).save(root / "images" / f"image_{i}.png")
    return root


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory):
    """40 random synthetic memes with a fitted tokenizer."""
    root = tmp_path_factory.mktemp("small")
    csv_path = make_fixture(root, n=40, seed=3)
    records, _ = load_dataset(csv_path, root / "images")
    tok = fit_tokenizer([clean_text(r.raw_text) for r in records], vocab_size=30)
    return root, records, tok


@pytest.fixture
def tiny_text_cfg():
    return TextEncoderConfig(embed_dim=8, lstm_widths=(6,), gru_widths=(4,), attention_heads=2, feature_dim=5)


def tiny_model(vocab_size, kind="resnet18", freeze=True, dropout=0.3, seed=0):
    torch.manual_seed(seed)
    return MemotionNet(
        BackboneConfig(kind, pretrained=False, feature_dim=16, freeze=freeze),
        TextEncoderConfig(embed_dim=16, lstm_widths=(16,), gru_widths=(16,), attention_heads=4, feature_dim=16),
        FusionConfig(memotion_dim=16, dropout=dropout),
        vocab_size,
    )


def central_difference_check(f, params, rtol=1e-3, atol=1e-8, eps=1e-6, max_coords=None, seed=0):
    """Compare autograd gradients of scalar ``f()`` with central differences.

    Returns a list of failing (param index, coordinate, analytic, numeric).
    """
    loss = f()
    grads = torch.autograd.grad(loss, params)
    rng = np.random.default_rng(seed)
    failures = []
    checked = 0
    for pi, (p, g) in enumerate(zip(params, grads)):
        flat = p.data.view(-1)
        gflat = g.reshape(-1)
        coords = np.arange(flat.numel())
        if max_coords is not None and flat.numel() > max_coords:
            coords = rng.choice(flat.numel(), size=max_coords, replace=False)
        for i in coords:
            orig = flat[i].item()
            flat[i] = orig + eps
            plus = f().item()
            flat[i] = orig - eps
            minus = f().item()
            flat[i] = orig
            numeric = (plus - minus) / (2 * eps)
            analytic = gflat[i].item()
            checked += 1
            if abs(numeric - analytic) > rtol * max(abs(numeric), abs(analytic)) + atol:
                failures.append((pi, int(i), analytic, numeric))
    assert checked > 0
    return failures


@pytest.fixture
def fd_check():
    return central_difference_check


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        _acceptance[name] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        outcome, detail = _acceptance[name]
        label = name.removeprefix("test_").replace("_", " ")
        line = f"{outcome:4}  {label}"
        if detail:
            line += f"  ({detail.removeprefix('Skipped: ')})"
        terminalreporter.write_line(line)
