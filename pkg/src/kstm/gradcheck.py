"""Central finite-difference checks for every differentiable operation."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

STEP = 1e-5
TOLERANCE = 1e-4


@dataclass
class GradResult:
    name: str
    error: float
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} rel_err={self.error:.2e}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||); 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_grads(f: Callable[[], float], arrays: Sequence[np.ndarray], step: float = STEP) -> list[np.ndarray]:
    """Central differences of ``f`` w.r.t. each array, perturbed in place."""
    out = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f()
            flat[i] = orig - step
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * step)
        out.append(g)
    return out


def check(name: str, fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], tol: float = TOLERANCE) -> GradResult:
    """Compare backward gradients of scalar ``fn(*tensors)`` to finite differences."""
    start = time.perf_counter()
    tensors = [Tensor(x, requires_grad=True) for x in inputs]
    loss = fn(*tensors)
    ad.backward(loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def f():
        with ad.no_grad():
            return float(fn(*tensors).data)

    numeric = numeric_grads(f, [t.data for t in tensors])
    err = max(relative_error(a, n) for a, n in zip(analytic, numeric))
    return GradResult(name, err, err < tol, time.perf_counter() - start)


def check_params(name: str, loss_fn: Callable[[], Tensor], params: Sequence[Tensor], tol: float = TOLERANCE) -> list[GradResult]:
    """Finite-difference check of every parameter of a composite loss."""
    for p in params:
        p.zero_grad()
    ad.backward(loss_fn())
    analytic = [p.grad.copy() for p in params]

    def f():
        with ad.no_grad():
            return float(loss_fn().data)

    results = []
    for p, a in zip(params, analytic):
        start = time.perf_counter()
        (n,) = numeric_grads(f, [p.data])
        err = relative_error(a, n)
        results.append(GradResult(f"{name}:{p.name}", err, err < tol, time.perf_counter() - start))
    return results


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(-2, 2, size=shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)


def op_checks(seed: int = 0) -> list[GradResult]:
    from . import model as m
    from .objectives import bce, bce_with_logits, info_nce

    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-2, 2, size=shape)  # noqa: E731

    def weighted(w: np.ndarray, op: Callable[..., Tensor]) -> Callable[..., Tensor]:
        # a fixed random weighting keeps the scalar sensitive to every output entry
        return lambda *xs: ad.sum(ad.mul(op(*xs), w))

    def head_of(w1, b1, w2, b2):
        head = m.ProjectionHead.__new__(m.ProjectionHead)
        head.fc1 = m.Linear.__new__(m.Linear)
        head.fc2 = m.Linear.__new__(m.Linear)
        head.fc1.w, head.fc1.b, head.fc2.w, head.fc2.b = w1, b1, w2, b2
        return head

    def classifier_of(w, b):
        c = m.Classifier.__new__(m.Classifier)
        c.w, c.b = w, b
        return c

    def stack_of(*weights):
        stack = m.GcnStack.__new__(m.GcnStack)
        stack.weights = list(weights)
        return stack

    a_norm = m.normalize_adjacency(_random_graph(rng, 5))
    cases = [
        ("matmul", weighted(u(3, 2), ad.matmul), [u(3, 4), u(4, 2)]),
        ("add(broadcast)", weighted(u(3, 4), ad.add), [u(3, 4), u(1, 4)]),
        ("sub(broadcast)", weighted(u(3, 4), ad.sub), [u(3, 4), u(1, 4)]),
        ("mul", weighted(u(3, 4), ad.mul), [u(3, 4), u(3, 4)]),
        ("transpose", weighted(u(4, 3), ad.transpose), [u(3, 4)]),
        ("relu", weighted(u(3, 4), ad.relu), [_away_from_zero(rng, (3, 4))]),
        ("sigmoid", weighted(u(3, 4), ad.sigmoid), [u(3, 4)]),
        ("softplus", weighted(u(3, 4), ad.softplus), [u(3, 4)]),
        ("log", weighted(u(3, 4), ad.log), [rng.uniform(0.2, 2, size=(3, 4))]),
        ("concat(axis=1)", weighted(u(3, 6), lambda a, b: ad.concat([a, b], axis=1)), [u(3, 4), u(3, 2)]),
        ("concat(axis=0)", weighted(u(5, 4), lambda a, b: ad.concat([a, b], axis=0)), [u(3, 4), u(2, 4)]),
        # offset keeps a - b away from the kink at 0
        ("abs_diff", weighted(u(3, 4), ad.abs_diff), [u(3, 4), u(3, 4) + 5.0]),
        ("cosine_sim", ad.cosine_sim, [u(1, 5), u(1, 5)]),
        ("l2_normalize_rows", weighted(u(3, 4), ad.l2_normalize_rows), [u(3, 4)]),
        ("logsumexp", weighted(u(3), ad.logsumexp), [u(3, 4)]),
        ("gather_rows", weighted(u(4, 4), lambda a: ad.gather_rows(a, [2, 0, 2, 1])), [u(3, 4)]),
        ("segment_mean", weighted(u(3, 4), lambda a: ad.segment_mean(a, [2, 3, 1])), [u(6, 4)]),
        ("segment_sum", weighted(u(3, 4), lambda a: ad.segment_sum(a, [2, 3, 1])), [u(6, 4)]),
        ("diagonal", weighted(u(4), ad.diagonal), [u(4, 4)]),
        ("sum(axis=1)", weighted(u(3), lambda a: ad.sum(a, axis=1)), [u(3, 4)]),
        ("info_nce", lambda a, c: info_nce(a, c, 0.1), [u(4, 6), u(4, 6)]),
        ("info_nce(raw negatives)", lambda a, c, n: info_nce(a, c, 0.1, negatives=n), [u(4, 6), u(4, 6), u(4, 6)]),
        ("bce", lambda p: bce(p, [1, 0, 1, 0]), [rng.uniform(0.1, 0.9, size=(4, 1))]),
        ("bce_with_logits", lambda z: bce_with_logits(z, [1, 0, 1, 0]), [u(4, 1)]),
        ("enhance", weighted(u(1, 8), m.enhance), [u(1, 4), u(1, 4)]),
        # positive features and weights keep pre-activations away from the relu kink
        (
            "gcn_forward",
            weighted(u(5, 3), lambda h0, w0, w1: m.gcn_forward(stack_of(w0, w1), a_norm, h0)),
            [rng.uniform(0.1, 2, (5, 4)), rng.uniform(0.1, 1, (4, 4)), rng.uniform(0.1, 1, (4, 3))],
        ),
        ("graph_pool", weighted(u(2, 3), lambda h: m.graph_pool(h, [2, 3])), [u(5, 3)]),
        (
            "project",
            weighted(u(3, 4), lambda h, w1, b1, w2, b2: m.project(head_of(w1, b1, w2, b2), h)),
            [u(3, 4), u(4, 4), rng.uniform(0.5, 1, (1, 4)), u(4, 4), u(1, 4)],
        ),
        ("classify", weighted(u(3, 1), lambda h, w, b: m.classify(classifier_of(w, b), h)), [u(3, 6), u(6, 1), u(1, 1)]),
        ("aggregate", weighted(u(2, 11), m.aggregate), [u(2, 3), u(2, 3) + 5.0, u(2, 2)]),
    ]
    return [check(name, fn, inputs) for name, fn, inputs in cases]


def _random_graph(rng, n: int) -> np.ndarray:
    a = np.triu(rng.uniform(0, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.5), 1)
    return a + a.T


def end_to_end_checks(seed: int = 0, batch_size: int = 4, dim: int = 8) -> list[GradResult]:
    """Every parameter of the full weighted loss on one batch (2-layer GCN)."""
    from .keywords import load_stopwords
    from .model import KSTM
    from .pipeline import Preparer, RunConfig, batch_losses, make_provider, provide_complements, vocab_corpus
    from .synthetic import separable_dataset
    from .text import build_vocab

    pairs, store = separable_dataset(batch_size, seed=seed)
    config = RunConfig(d=dim, d_p=dim, gcn_layers=2, batch_size=batch_size, seed=seed)
    pairs = provide_complements(pairs, make_provider("augment", store), seed)
    vocab = build_vocab(vocab_corpus(pairs, store))
    prep = Preparer(vocab, store, load_stopwords(), config)
    batch = [prep(p) for p in pairs]
    model = KSTM(len(vocab), dim, dim, 2, seed=seed)
    # larger embeddings than the default init so the check exercises non-trivial scales
    model.encoder.embed.data = np.random.default_rng(seed + 1).normal(0, 0.5, model.encoder.embed.shape)
    return check_params("end_to_end", lambda: batch_losses(model, batch, config).total, model.parameters())


def run_suite(seed: int = 0) -> list[GradResult]:
    return op_checks(seed) + end_to_end_checks(seed)
