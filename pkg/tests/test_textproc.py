import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memotion.textproc import (
    TokenizerModel,
    clean_text,
    encode,
    fit_tokenizer,
    load_stopwords,
    min_vocab_size,
    sidecar_path,
)

WORDS = ["check", "meme", "funny", "cat", "dog", "monday", "coffee", "boss", "life", "work", "exam", "pizza"]


@pytest.fixture(scope="module")
def corpus():
    rnd = random.Random(0)
    return [" ".join(rnd.choice(WORDS) for _ in range(rnd.randint(2, 9))) for _ in range(300)]


@pytest.fixture(scope="module")
def model(corpus):
    return fit_tokenizer(corpus, vocab_size=30, seed=0)


def test_clean_text_example():
    assert clean_text("Check THIS http://x.co meme", {"this"}) == "check meme"


def test_clean_text_edge_cases():
    assert clean_text("") == ""
    assert clean_text("WWW.SITE.COM") == ""
    assert clean_text("  see   https://a.b/c?d=1  ftp://x  now ", set()) == "see now"


def test_bundled_stopwords():
    words = load_stopwords()
    assert {"the", "this", "is", "a"} <= words
    assert clean_text("This IS the Meme") == "meme"


def test_stopwords_file(tmp_path):
    (tmp_path / "stop.txt").write_text("meme\nCat\n")
    stop = load_stopwords(tmp_path / "stop.txt")
    assert stop == {"meme", "cat"}
    assert clean_text("the meme cat", stop) == "the"


@settings(max_examples=300, deadline=None)
@given(st.text())
def test_clean_text_idempotent(raw):
    once = clean_text(raw)
    assert clean_text(once) == once
    assert "://" not in once and "www." not in once
    stop = load_stopwords()
    assert not any(tok in stop for tok in once.split())


def test_fit_vocab_size(model, corpus):
    assert model.processor.get_piece_size() == 30
    assert model.vocab_size == 30
    assert model.processor.pad_id() == model.pad_id == 0
    assert model.processor.unk_id() == model.unk_id == 1
    bpe = fit_tokenizer(corpus, vocab_size=30, algorithm="bpe")
    assert bpe.processor.get_piece_size() == 30


def test_fit_errors():
    with pytest.raises(ValueError, match="empty"):
        fit_tokenizer([], vocab_size=10)
    with pytest.raises(ValueError, match="empty"):
        fit_tokenizer(["", "  "], vocab_size=10)
    with pytest.raises(ValueError, match="character coverage"):
        fit_tokenizer(["abc"], vocab_size=5)
    with pytest.raises(ValueError, match="algorithm"):
        fit_tokenizer(["abc"], vocab_size=10, algorithm="wordpiece")


def test_degenerate_vocabulary():
    size = min_vocab_size(["ab"])
    assert size == 5  # pad, unk, whitespace marker, a, b
    m = fit_tokenizer(["ab"], vocab_size=size)
    pieces = {m.processor.id_to_piece(i) for i in range(size)}
    assert all(len(p) == 1 for p in pieces - {"<pad>", "<unk>"})
    seq = encode(m, "ab ba abba", 16)
    used = {m.processor.id_to_piece(int(i)) for i in seq.ids[: seq.valid_len]}
    assert all(len(p) == 1 for p in used)


def test_encode_contracts(model):
    empty = encode(model, "", 8)
    assert empty.valid_len == 0 and (empty.ids == model.pad_id).all()
    long_text = " ".join(WORDS * 3)
    pieces = model.pieces(long_text)
    assert len(pieces) > 8
    seq = encode(model, long_text, 8)
    assert seq.valid_len == 8
    assert seq.ids.tolist() == pieces[:8]
    seq = encode(model, "check meme", 16)
    assert seq.valid_len == len(model.pieces("check meme"))
    assert model.decode(seq.ids[: seq.valid_len]) == "check meme"
    assert (seq.ids[seq.valid_len:] == model.pad_id).all()
    with pytest.raises(ValueError):
        encode(model, "x", 0)


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=60), st.integers(1, 20))
def test_encode_ids_in_range(model, text, max_len):
    seq = encode(model, text, max_len)
    assert seq.ids.shape == (max_len,)
    assert 0 <= seq.ids.min() and seq.ids.max() < model.vocab_size
    assert 0 <= seq.valid_len <= max_len


def test_round_trip_in_vocabulary(model, corpus):
    for text in corpus[:50]:
        seq = encode(model, text, 64)
        assert model.decode(seq.ids[: seq.valid_len]) == " ".join(text.split())


def test_serialization_round_trip(model, corpus, tmp_path):
    path = model.save(tmp_path / "tok.model")
    assert sidecar_path(path).exists()
    loaded = TokenizerModel.load(path)
    assert loaded.model_blob == model.model_blob
    assert loaded.sidecar() == model.sidecar()
    rnd = random.Random(1)
    for text in rnd.sample(corpus, 100):
        np.testing.assert_array_equal(encode(loaded, text, 32).ids, encode(model, text, 32).ids)


def test_sidecar_hash_guard(model, tmp_path):
    path = model.save(tmp_path / "tok.model")
    path.write_bytes(model.model_blob + b"x")
    with pytest.raises(ValueError, match="hash"):
        TokenizerModel.load(path)


def test_fit_is_deterministic(corpus):
    a = fit_tokenizer(corpus, vocab_size=30, seed=5)
    b = fit_tokenizer(corpus, vocab_size=30, seed=5)
    assert a.model_blob == b.model_blob
    for text in corpus[:20]:
        assert a.pieces(text) == b.pieces(text)
