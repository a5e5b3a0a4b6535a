"""TextRank keyword extraction over token co-occurrence graphs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 3
DEFAULT_DAMPING = 0.85
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 100

# scores equal to this many decimals count as tied
TIE_DECIMALS = 12


class NoKeywordError(ValueError):
    """The sentence has no tokens to rank."""


@dataclass
class CooccurrenceGraph:
    """Distinct tokens in first-occurrence order plus symmetric window counts."""

    nodes: list[str]
    weights: np.ndarray

    def weight(self, u: str, v: str) -> float:
        return float(self.weights[self.nodes.index(u), self.nodes.index(v)])

    @property
    def n_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))


@dataclass
class KeywordResult:
    keyword: str
    score: float
    ranking: list[tuple[str, float]] = field(default_factory=list)
    fallback: bool = False


def build_cooccurrence(tokens: Sequence[str], window: int = DEFAULT_WINDOW, backend=None) -> CooccurrenceGraph:
    """Tokens co-occurring within ``window`` consecutive positions share an edge.

    Each co-occurring pair of positions adds 1 to the edge weight; a token
    never links to itself.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    index: dict[str, int] = {}
    ids = [index.setdefault(t, len(index)) for t in tokens]
    weights = kernels.cooccurrence_matrix(ids, len(index), window, backend=backend)
    return CooccurrenceGraph(list(index), weights)


def textrank_scores(
    graph: CooccurrenceGraph,
    damping: float = DEFAULT_DAMPING,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    backend=None,
) -> dict[str, float]:
    if not 0 < damping < 1:
        raise ValueError("damping must lie in (0, 1)")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not graph.nodes:
        return {}
    scores, _, _ = kernels.textrank_iterate(graph.weights, damping, tol, max_iter, backend=backend)
    return dict(zip(graph.nodes, scores.tolist()))


def rank(scores: dict[str, float], order: Sequence[str]) -> list[tuple[str, float]]:
    """Sort by score descending, ties by position in ``order``."""
    first = {t: i for i, t in reversed(list(enumerate(order)))}
    return sorted(scores.items(), key=lambda kv: (-round(kv[1], TIE_DECIMALS), first[kv[0]]))


def extract_keyword(
    tokens: Sequence[str],
    stopwords: Iterable[str] = (),
    window: int = DEFAULT_WINDOW,
    damping: float = DEFAULT_DAMPING,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> KeywordResult:
    if not tokens:
        raise NoKeywordError("cannot extract a keyword from an empty sentence")
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else set(stopwords)
    candidates = [t for t in tokens if t not in stop]
    fallback = not candidates
    if fallback:
        candidates = list(tokens)
    graph = build_cooccurrence(candidates, window)
    ranking = rank(textrank_scores(graph, damping, tol, max_iter), candidates)
    best, score = ranking[0]
    return KeywordResult(best, score, ranking, fallback)


def load_stopwords(path=None) -> frozenset[str]:
    """One token per line; ``None`` loads the bundled list, a missing file gives an empty set."""
    if path is None:
        text = resources.files("kstm").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    else:
        p = Path(path)
        if not p.exists():
            log.warning("stopword file %s not found; using no stopwords", p)
            return frozenset()
        text = p.read_text(encoding="utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())
