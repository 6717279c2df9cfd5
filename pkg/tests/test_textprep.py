import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gazeaeg.dataset import Essay
from gazeaeg.textprep import (
    PAD,
    PAD_INDEX,
    UNK,
    UNK_INDEX,
    EmbeddingFormatError,
    EncodingError,
    Vocabulary,
    build_vocab,
    corpus_tokens,
    encode_essay,
    load_embeddings,
    split_sentences,
    tokenize,
)


def test_split_sentences_examples():
    assert split_sentences("I agree. Computers help!") == ["I agree.", "Computers help!"]
    assert split_sentences("no punctuation") == ["no punctuation"]
    assert split_sentences("") == []
    assert split_sentences("   ") == []


def test_tokenize_examples():
    assert tokenize("Dear newspaper,") == ["dear", "newspaper", ","]
    assert tokenize("@CAPS1 said so.") == ["@CAPS1", "said", "so", "."]
    assert tokenize("don't stop") == ["don't", "stop"]
    assert tokenize('"Hello," she said...') == ['"', "hello", ",", '"', "she", "said", ".", ".", "."]
    assert tokenize("(@PERSON2's) 3.5") == ["(", "@PERSON2's", ")", "3.5"]


@given(st.text(alphabet="abcXYZ09 .,!?'\"()@-", max_size=60))
def test_tokenize_idempotent(s):
    toks = tokenize(s)
    assert tokenize(" ".join(toks)) == toks


def test_build_vocab_examples():
    v = build_vocab([Essay(1, 1, "a a b", 2)], min_count=2)
    assert v.tokens == [PAD, UNK, "a"]
    assert len(build_vocab([Essay(1, 1, "x y", 2)], min_count=1)) == 4
    with pytest.raises(ValueError):
        build_vocab([], 1)


def test_build_vocab_deterministic(small_corpus):
    a, b = build_vocab(small_corpus, 2), build_vocab(list(small_corpus), 2)
    assert a.tokens == b.tokens
    assert a.lookup(PAD) == PAD_INDEX and a.lookup("zzzzqqq") == UNK_INDEX


def test_vocab_rejects_bad_head():
    with pytest.raises(ValueError):
        Vocabulary(["a", PAD, UNK])


def test_fold_vocab_has_no_target_only_tokens(small_corpus):
    target = 2
    train = [e for e in small_corpus if e.prompt_id != target]
    only_target = corpus_tokens([e for e in small_corpus if e.prompt_id == target]) - corpus_tokens(train)
    assert only_target
    vocab = build_vocab(train, 1)
    assert not only_target & set(vocab.tokens)


def _vocab(*words):
    return Vocabulary([PAD, UNK, *words])


def test_load_embeddings(tmp_path):
    vocab = _vocab("the", "cat")
    row = np.round(np.linspace(-1, 1, 50), 4)
    path = tmp_path / "vec.txt"
    path.write_text("the " + " ".join(map(str, row)) + "\nother " + " ".join(["0.5"] * 50) + "\n")
    emb = load_embeddings(path, vocab, dim=50, seed=3)
    assert emb.shape == (4, 50)
    np.testing.assert_array_equal(emb[2], row)
    assert np.all(np.abs(emb[3]) <= 0.05)
    assert not emb[PAD_INDEX].any()


def test_load_embeddings_arity_error(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("a " + " ".join(["0.1"] * 50) + "\nthe " + " ".join(["0.1"] * 49) + "\n")
    with pytest.raises(EmbeddingFormatError, match=":2:"):
        load_embeddings(path, _vocab("the"), dim=50)


def test_load_embeddings_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_embeddings(tmp_path / "absent.txt", _vocab("the"))


def test_encode_examples():
    vocab = _vocab("one", "two", ".")
    e = encode_essay(Essay(1, 3, "one two. two one. zzzzqqq.", 3), vocab, max_sentences=4, max_tokens=5)
    assert e.sentence_mask.tolist() == [True, True, True, False]
    assert e.grid[2, 0] == UNK_INDEX
    assert e.target == 1.0
    assert e.grid.shape == (4, 5) and e.sentence_lengths == (3, 3, 2)


def test_encode_empty_essay():
    with pytest.raises(EncodingError):
        encode_essay(Essay(1, 3, "   ", 0), _vocab())


@given(st.lists(st.integers(1, 9), min_size=1, max_size=8), st.integers(1, 6), st.integers(1, 7))
def test_token_mask_count(lengths, max_s, max_t):
    text = " ".join(" ".join(["w"] * n) + "." for n in lengths)
    # every sentence gets one extra token for its full stop
    enc = encode_essay(Essay(1, 1, text, 5), _vocab("w"), max_sentences=max_s, max_tokens=max_t)
    assert enc.token_mask.sum() == sum(min(n + 1, max_t) for n in lengths[:max_s])
    assert (enc.grid[~enc.token_mask] == PAD_INDEX).all()
