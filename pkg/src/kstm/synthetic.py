"""Synthetic sentence-pair corpora for sanity and ablation runs."""

from __future__ import annotations

import numpy as np

from .knowledge import LexicalStore
from .pipeline import SentencePair

# all present in the bundled stopword list
FILLERS = ("the", "a", "of", "to", "in", "is", "it", "and", "for", "with", "on", "at", "by", "this", "that")

# CJK characters not in the bundled stopword list
_CJK_POOL = [chr(c) for c in range(0x5409, 0x5409 + 400)]


def _cjk_pool(size: int) -> list[str]:
    from .keywords import load_stopwords

    stop = load_stopwords()
    return [c for c in _CJK_POOL if c not in stop][:size]


def separable_dataset(n_pairs: int = 64, seed: int = 0, store_entries: int = 50):
    """Positives share most of their tokens; negatives use disjoint tokens.

    Returns ``(pairs, store)`` with a store of exactly ``store_entries``
    (word, related, score) entries over the same character pool.
    """
    rng = np.random.default_rng(seed)
    pool = _cjk_pool(80)
    pairs = []
    for i in range(n_pairs):
        label = i % 2
        s1 = list(rng.choice(pool, size=5, replace=False))
        if label:
            s2 = list(s1)
            s2[int(rng.integers(5))] = str(rng.choice([c for c in pool if c not in s1]))
            rng.shuffle(s2)
        else:
            s2 = list(rng.choice([c for c in pool if c not in s1], size=5, replace=False))
        pairs.append(SentencePair("".join(s1), "".join(s2), label))
    order = rng.permutation(n_pairs)
    pairs = [pairs[i] for i in order]

    entries: dict[str, list[tuple[str, float]]] = {}
    count = 0
    while count < store_entries:
        word, other = rng.choice(pool, size=2, replace=False)
        if any(o == other for o, _ in entries.get(word, [])):
            continue
        entries.setdefault(str(word), []).append((str(other), round(float(rng.uniform(0.3, 1.0)), 3)))
        count += 1
    return pairs, LexicalStore(entries)


def knowledge_bridged_dataset(n_pairs: int = 512, seed: int = 0, n_concepts: int = 20, n_noise: int = 100):
    """Pairs whose match is visible only through the knowledge store.

    Every sentence is filler words plus one keyword used nowhere else in the
    corpus. A positive pair's two keywords share a concept word in the store;
    a negative pair's keywords map to different concepts. Each keyword also
    has one noise word. Complements (supplied as dataset columns) reshuffle
    the fillers and keep the keyword, so they add no knowledge.
    """
    rng = np.random.default_rng(seed)
    concepts = [f"concept{i:03d}" for i in range(n_concepts)]
    noise = [f"noise{i:03d}" for i in range(n_noise)]
    entries: dict[str, list[tuple[str, float]]] = {}

    def sentence(keyword: str) -> str:
        words = list(rng.choice(FILLERS, size=3, replace=False))
        words.insert(int(rng.integers(4)), keyword)
        return " ".join(words)

    pairs = []
    for i in range(n_pairs):
        label = int(i % 2 == 0)
        k1, k2 = f"kw{i:04d}a", f"kw{i:04d}b"
        c1 = str(rng.choice(concepts))
        c2 = c1 if label else str(rng.choice([c for c in concepts if c != c1]))
        n1, n2 = (str(x) for x in rng.choice(noise, size=2, replace=False))
        entries[k1] = [(c1, round(float(rng.uniform(0.6, 1.0)), 3)), (n1, round(float(rng.uniform(0.2, 0.6)), 3))]
        entries[k2] = [(c2, round(float(rng.uniform(0.6, 1.0)), 3)), (n2, round(float(rng.uniform(0.2, 0.6)), 3))]
        pairs.append(
            SentencePair(sentence(k1), sentence(k2), label, columns=(sentence(k1), sentence(k2)))
        )
    order = rng.permutation(n_pairs)
    return [pairs[i] for i in order], LexicalStore(entries)


def split(pairs, fractions=(0.75, 0.125)):
    n = len(pairs)
    a = int(round(n * fractions[0]))
    b = a + int(round(n * fractions[1]))
    return pairs[:a], pairs[a:b], pairs[b:]
