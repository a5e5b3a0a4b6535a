"""File-backed lexical knowledge store and per-pair knowledge graphs."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_TOP_K = 5


class StoreParseError(ValueError):
    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.lineno = lineno


class LexicalStore:
    """word -> related words with relevance scores in (0, 1].

    Related lists are sorted by score descending, ties lexicographic.
    """

    def __init__(self, entries: dict[str, list[tuple[str, float]]] | None = None):
        self._entries: dict[str, list[tuple[str, float]]] = {}
        for word, related in (entries or {}).items():
            best: dict[str, float] = {}
            for other, score in related:
                _check_entry(word, other, score)
                best[other] = max(score, best.get(other, 0.0))
            self._entries[word] = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, word: str) -> bool:
        return word in self._entries

    def related(self, word: str) -> list[tuple[str, float]]:
        return list(self._entries.get(word, ()))

    def words(self) -> set[str]:
        """Every word mentioned on either side of an entry."""
        out = set(self._entries)
        for related in self._entries.values():
            out.update(w for w, _ in related)
        return out

    @property
    def n_entries(self) -> int:
        return sum(len(v) for v in self._entries.values())


def _check_entry(word: str, other: str, score: float) -> None:
    if word == other:
        raise ValueError(f"self entry for {word!r}")
    if not (0.0 < score <= 1.0) or score != score:
        raise ValueError(f"score {score} outside (0, 1]")


def load_store(path=None) -> LexicalStore:
    """Parse ``word<TAB>related<TAB>score`` lines; ``#`` lines and blanks are skipped.

    ``None`` loads the bundled sample store.
    """
    if path is None:
        text = resources.files("kstm").joinpath("data/sample_store.tsv").read_text(encoding="utf-8")
        path = "sample_store.tsv"
    else:
        text = Path(path).read_text(encoding="utf-8")
    entries: dict[str, list[tuple[str, float]]] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise StoreParseError(path, lineno, f"expected 3 tab-separated fields, got {len(fields)}")
        word, other, raw = (f.strip() for f in fields)
        if not word or not other:
            raise StoreParseError(path, lineno, "empty word")
        try:
            score = float(raw)
        except ValueError:
            raise StoreParseError(path, lineno, f"score {raw!r} is not a number") from None
        try:
            _check_entry(word, other, score)
        except ValueError as exc:
            raise StoreParseError(path, lineno, str(exc)) from None
        entries.setdefault(word, []).append((other, score))
    return LexicalStore(entries)


def retrieve_topk(store: LexicalStore, keyword: str, k: int = DEFAULT_TOP_K) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return store.related(keyword)[:k]


@dataclass
class KnowledgeGraph:
    """Nodes ``[k1, k2, w1, ..., wn]`` with a symmetric relevance-weighted adjacency."""

    nodes: list[str]
    adjacency: np.ndarray

    @property
    def knowledge_words(self) -> list[str]:
        return self.nodes[2:]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def build_graph(k1: str, k2: str, store: LexicalStore, k: int = DEFAULT_TOP_K) -> KnowledgeGraph:
    """Link each keyword to its top-k knowledge words.

    A knowledge word retrieved by both keywords becomes one node with two
    edges. A keyword retrieving the other keyword links the two keyword
    nodes directly (the larger score wins if both directions exist).
    """
    retrieved = [retrieve_topk(store, k1, k), retrieve_topk(store, k2, k)]
    nodes = [k1, k2]
    index: dict[str, int] = {}
    for related in retrieved:
        for word, _ in related:
            if word not in (k1, k2) and word not in index:
                index[word] = len(nodes)
                nodes.append(word)
    adj = np.zeros((len(nodes), len(nodes)))
    keywords = (k1, k2)
    for src, related in enumerate(retrieved):
        for word, score in related:
            if word in index:
                dst = index[word]
            else:
                # retrieved the other keyword
                dst = 1 - src if word == keywords[1 - src] else src
                if dst == src:
                    continue
            val = max(adj[src, dst], score)
            adj[src, dst] = adj[dst, src] = val
    return KnowledgeGraph(nodes, adj)
