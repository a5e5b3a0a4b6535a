"""Trainable components: shared sentence encoder, projection head, GCN and classifier."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor
from .knowledge import KnowledgeGraph
from .text import PAD, TokenSequence


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, rng, d_in: int, d_out: int, name: str):
        self.w = Tensor(xavier(rng, d_in, d_out), requires_grad=True, name=f"{name}.w")
        self.b = Tensor(np.zeros((1, d_out)), requires_grad=True, name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.w.shape[0]:
            raise DimensionError(f"{self.w.name}: input width {x.shape[-1]} != {self.w.shape[0]}")
        return ad.matmul(x, self.w) + self.b

    def parameters(self) -> list[Tensor]:
        return [self.w, self.b]


class SentenceEncoder:
    """Mean-pooled token embeddings followed by a d -> d -> d feed-forward head.

    Stands in for the [CLS] vector of a pretrained encoder. One instance is
    shared by original sentences, complements and knowledge-graph nodes.
    """

    def __init__(self, rng, vocab_size: int, dim: int):
        self.dim = dim
        self.embed = Tensor(rng.normal(0.0, 0.02, size=(vocab_size, dim)), requires_grad=True, name="encoder.embed")
        self.fc1 = Linear(rng, dim, dim, "encoder.fc1")
        self.fc2 = Linear(rng, dim, dim, "encoder.fc2")

    def parameters(self) -> list[Tensor]:
        return [self.embed, *self.fc1.parameters(), *self.fc2.parameters()]

    def encode(self, seqs: Sequence[TokenSequence]) -> Tensor:
        """Encode many sequences at once; row i belongs to ``seqs[i]``."""
        ids: list[int] = []
        lengths = []
        vocab_size = self.embed.shape[0]
        for seq in seqs:
            kept = [i for i in seq.ids if i != PAD]
            if any(i < 0 or i >= vocab_size for i in kept):
                raise DimensionError(f"token id out of range for vocabulary of {vocab_size}")
            ids.extend(kept)
            lengths.append(len(kept))
        pooled = ad.segment_mean(ad.gather_rows(self.embed, ids), lengths)
        return self.fc2(ad.relu(self.fc1(pooled)))


def encode_sentence(enc: SentenceEncoder, seq: TokenSequence) -> Tensor:
    return enc.encode([seq])


class ProjectionHead:
    """Linear -> relu -> linear map feeding the contrastive losses only."""

    def __init__(self, rng, d_in: int, d_out: int):
        self.fc1 = Linear(rng, d_in, d_out, "proj.fc1")
        self.fc2 = Linear(rng, d_out, d_out, "proj.fc2")

    def parameters(self) -> list[Tensor]:
        return [*self.fc1.parameters(), *self.fc2.parameters()]

    def __call__(self, h: Tensor) -> Tensor:
        return self.fc2(ad.relu(self.fc1(h)))


def project(head: ProjectionHead, h: Tensor) -> Tensor:
    return head(h)


class GcnStack:
    def __init__(self, rng, dims: Sequence[int]):
        self.weights = [
            Tensor(xavier(rng, dims[i], dims[i + 1]), requires_grad=True, name=f"gcn.w{i}")
            for i in range(len(dims) - 1)
        ]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[Tensor]:
        return list(self.weights)


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the row sums of A + I."""
    adj = np.asarray(adj, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise DimensionError(f"adjacency must be square, got {adj.shape}")
    a = adj + np.eye(adj.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    out = inv_sqrt[:, None] * a * inv_sqrt[None, :]
    # enforce exact symmetry against rounding in the two-sided scaling
    return 0.5 * (out + out.T)


def gcn_forward(stack: GcnStack, a_norm, h0: Tensor) -> Tensor:
    a_norm = ad.as_tensor(a_norm)
    if a_norm.shape[0] != a_norm.shape[1] or a_norm.shape[1] != h0.shape[0]:
        raise DimensionError(f"gcn: adjacency {a_norm.shape} does not fit node features {h0.shape}")
    h = h0
    for w in stack.weights:
        h = ad.relu(ad.matmul(ad.matmul(a_norm, h), w))
    return h


def graph_pool(h_last: Tensor, sizes: Sequence[int] | None = None) -> Tensor:
    """Sum node rows per graph; ``sizes`` splits stacked graphs (one graph by default)."""
    if h_last.shape[0] < 1:
        raise DimensionError("graph_pool needs at least one node")
    if sizes is None:
        sizes = [h_last.shape[0]]
    return ad.segment_sum(h_last, sizes)


def block_diagonal(blocks: Sequence[np.ndarray]) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    pos = 0
    for b in blocks:
        k = b.shape[0]
        out[pos : pos + k, pos : pos + k] = b
        pos += k
    return out


def enhance(h: Tensor, h_comp: Tensor) -> Tensor:
    if h.shape != h_comp.shape:
        raise DimensionError(f"enhance: {h.shape} vs {h_comp.shape}")
    return ad.concat([h, h_comp], axis=1)


def aggregate(h_e1: Tensor, h_e2: Tensor, h_graph: Tensor) -> Tensor:
    """[h_e1; h_e2; |h_e1 - h_e2|; h_graph] along the feature axis."""
    return ad.concat([h_e1, h_e2, ad.abs_diff(h_e1, h_e2), h_graph], axis=1)


class Classifier:
    def __init__(self, rng, d_in: int):
        self.w = Tensor(xavier(rng, d_in, 1), requires_grad=True, name="cls.w")
        self.b = Tensor(np.zeros((1, 1)), requires_grad=True, name="cls.b")

    def parameters(self) -> list[Tensor]:
        return [self.w, self.b]

    def logits(self, h_final: Tensor) -> Tensor:
        if h_final.shape[-1] != self.w.shape[0]:
            raise DimensionError(f"classifier expects {self.w.shape[0]} features, got {h_final.shape[-1]}")
        return ad.matmul(h_final, self.w) + self.b


def classify(c: Classifier, h_final: Tensor) -> Tensor:
    return ad.sigmoid(c.logits(h_final))


@dataclass
class PreparedPair:
    """Model-ready inputs for one sentence pair."""

    s1: TokenSequence
    s2: TokenSequence
    c1: TokenSequence
    c2: TokenSequence
    graph: KnowledgeGraph
    node_seqs: list[TokenSequence]
    label: int
    keywords: tuple[str, str] = ("", "")


@dataclass
class ForwardResult:
    logits: Tensor  # B x 1
    h1: Tensor
    h2: Tensor
    c1: Tensor
    c2: Tensor
    proj1: Tensor
    proj2: Tensor
    projc1: Tensor
    projc2: Tensor
    h_graph: Tensor


class KSTM:
    """Full matching model; parameter names are stable checkpoint keys."""

    def __init__(self, vocab_size: int, dim: int = 64, proj_dim: int | None = None, gcn_layers: int = 2, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.dim = dim
        self.proj_dim = proj_dim or dim
        self.encoder = SentenceEncoder(rng, vocab_size, dim)
        self.proj = ProjectionHead(rng, dim, self.proj_dim)
        self.gcn = GcnStack(rng, [dim] * (gcn_layers + 1))
        self.classifier = Classifier(rng, 6 * dim + self.gcn.out_dim)

    def encoder_parameters(self) -> list[Tensor]:
        return self.encoder.parameters()

    def head_parameters(self) -> list[Tensor]:
        return [*self.proj.parameters(), *self.gcn.parameters(), *self.classifier.parameters()]

    def parameters(self) -> list[Tensor]:
        return self.encoder_parameters() + self.head_parameters()

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(p.name, p.data) for p in self.parameters()]

    def forward(self, pairs: Sequence[PreparedPair], use_graph: bool = True) -> ForwardResult:
        b = len(pairs)
        seqs = [p.s1 for p in pairs] + [p.s2 for p in pairs] + [p.c1 for p in pairs] + [p.c2 for p in pairs]
        sizes = [len(p.node_seqs) for p in pairs]
        if use_graph:
            for p in pairs:
                seqs.extend(p.node_seqs)
        enc = self.encoder.encode(seqs)
        h1, h2, c1, c2 = (ad.gather_rows(enc, np.arange(i * b, (i + 1) * b)) for i in range(4))
        he1, he2 = enhance(h1, c1), enhance(h2, c2)

        if use_graph:
            h0 = ad.gather_rows(enc, np.arange(4 * b, 4 * b + sum(sizes)))
            a_norm = block_diagonal([normalize_adjacency(p.graph.adjacency) for p in pairs])
            h_graph = graph_pool(gcn_forward(self.gcn, a_norm, h0), sizes)
        else:
            h_graph = Tensor(np.zeros((b, self.gcn.out_dim)))

        logits = self.classifier.logits(aggregate(he1, he2, h_graph))
        proj = self.proj(ad.gather_rows(enc, np.arange(4 * b)))
        p1, p2, pc1, pc2 = (ad.gather_rows(proj, np.arange(i * b, (i + 1) * b)) for i in range(4))
        return ForwardResult(logits, h1, h2, c1, c2, p1, p2, pc1, pc2, h_graph)
