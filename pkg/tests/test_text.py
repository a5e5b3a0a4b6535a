import numpy as np
import pytest

from kstm.text import CLS, PAD, UNK, Vocabulary, build_vocab, detokenize, encode_ids, tokenize


@pytest.mark.parametrize(
    "text, expected",
    [
        ("你好", ["你", "好"]),
        ("iphone 手机", ["iphone", "手", "机"]),
        ("", []),
        ("iPhone12，好吗?", ["iphone12", "，", "好", "吗", "?"]),
        ("  \t ", []),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def test_no_empty_tokens():
    assert all(tokenize("a  b\n\n c 的 d"))


def test_detokenize_round_trip():
    for text in ("你好世界", "iphone 手机 pro max", "a b"):
        assert tokenize(detokenize(tokenize(text))) == tokenize(text)


def test_empty_corpus_vocab():
    v = build_vocab([])
    assert len(v) == 3
    assert [v.token(i) for i in range(3)] == ["[UNK]", "[PAD]", "[CLS]"]
    assert (UNK, PAD, CLS) == (0, 1, 2)


def test_single_token_vocab():
    assert len(build_vocab(["aa"])) == 4


def test_vocab_ordering_matches_counting_oracle():
    rng = np.random.default_rng(0)
    alphabet = [chr(0x4E00 + i) for i in range(30)] + ["foo", "bar"]
    corpus = [" ".join(rng.choice(alphabet, size=int(rng.integers(1, 8)))) for _ in range(100)]
    counts = {}
    first = {}
    for s in corpus:
        for tok in tokenize(s):
            counts[tok] = counts.get(tok, 0) + 1
            first.setdefault(tok, len(first))
    expected = sorted(counts, key=lambda tok: (-counts[tok], first[tok]))
    assert build_vocab(corpus).tokens == expected
    kept = [t for t in expected if counts[t] >= 3]
    assert build_vocab(corpus, min_count=3).tokens == kept


def test_vocab_ids_dense():
    v = build_vocab(["abc 你好", "你"])
    assert sorted(v.id(t) for t in ["[UNK]", "[PAD]", "[CLS]", *v.tokens]) == list(range(len(v)))


def test_min_count_validation():
    with pytest.raises(ValueError):
        build_vocab(["a"], min_count=0)


def test_encode_ids():
    v = Vocabulary(["你", "好"])
    assert encode_ids(v, "你好").ids == (2, 3, 4)
    assert encode_ids(v, "再见").ids == (2, 0, 0)
    assert encode_ids(v, "").ids == (2,)
    assert len(encode_ids(v, "你" * 100, max_len=10)) == 10
    assert len(encode_ids(v, "你" * 100, max_len=None)) == 101


def test_encoded_ids_in_range():
    v = build_vocab(["今天天气不错", "hello world"])
    seq = encode_ids(v, "今天 hello 明天")
    assert all(0 <= i < len(v) for i in seq.ids)
    assert encode_ids(v, "今天 hello 明天") == seq


def test_vocab_file_round_trip(tmp_path):
    v = build_vocab(["今天天气不错", "hello world"])
    v.save(tmp_path / "v.txt")
    lines = (tmp_path / "v.txt").read_text(encoding="utf-8").splitlines()
    assert lines[:3] == ["[UNK]", "[PAD]", "[CLS]"]
    assert Vocabulary.load(tmp_path / "v.txt") == v


def test_vocab_file_requires_reserved(tmp_path):
    (tmp_path / "v.txt").write_text("a\nb\n", encoding="utf-8")
    with pytest.raises(ValueError):
        Vocabulary.load(tmp_path / "v.txt")
