# %% [markdown]
# # Cleaning and tokenizing meme text
#
# OCR text is lowercased, URL tokens and English stop words are removed, and
# the rest is split into subword pieces by a SentencePiece unigram model.

# %%
from memotion.textproc import clean_text, encode, fit_tokenizer

raw = [
    "When the Monday meeting could have been an EMAIL www.memes.com",
    "Me trying to fix the bug at 3am https://imgflip.com/i/xyz",
    "My cat when I open the fridge",
    "Nobody: absolutely nobody: my dog at 5am",
    "Coffee is the only reason I am still alive",
    "That moment when the exam is easier than expected",
]
cleaned = [clean_text(t) for t in raw]
for before, after in zip(raw, cleaned):
    print(f"{before!r}\n  -> {after!r}")

# %% [markdown]
# A tiny corpus only supports a tiny vocabulary; the default for real data is 8000.

# %%
tok = fit_tokenizer(cleaned, vocab_size=40, seed=0)
print("pieces:", tok.processor.encode(cleaned[0], out_type=str))
seq = encode(tok, cleaned[0], max_len=16)
print(seq.ids, "valid length", seq.valid_len)
print("decoded:", tok.decode(seq.ids[: seq.valid_len].tolist()))
