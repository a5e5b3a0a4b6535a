"""Independent dense reference computations shared by unit and acceptance tests."""

import numpy as np


def dense_textrank(weights, damping=0.85, tol=1e-6, max_iter=100):
    """Vectorized fixed-point iteration S <- (1-d) + d M^T S from all-ones."""
    w = np.asarray(weights, dtype=float)
    rows = w.sum(axis=1, keepdims=True)
    m = np.divide(w, rows, out=np.zeros_like(w), where=rows > 0)
    s = np.ones(len(w))
    for _ in range(max_iter):
        nxt = (1 - damping) + damping * (m.T @ s)
        delta = np.abs(nxt - s).sum()
        s = nxt
        if delta < tol:
            break
    return s


def textrank_fixed_point(weights, damping=0.85):
    """Exact solution of S = (1-d) + d M^T S by a linear solve."""
    w = np.asarray(weights, dtype=float)
    rows = w.sum(axis=1, keepdims=True)
    m = np.divide(w, rows, out=np.zeros_like(w), where=rows > 0)
    n = len(w)
    return np.linalg.solve(np.eye(n) - damping * m.T, np.full(n, 1 - damping))


def window_counts(tokens, window):
    """Co-occurrence counts by enumerating every position pair."""
    nodes = list(dict.fromkeys(tokens))
    idx = {t: i for i, t in enumerate(nodes)}
    w = np.zeros((len(nodes), len(nodes)))
    for i in range(len(tokens)):
        for j in range(len(tokens)):
            if i < j < i + window and tokens[i] != tokens[j]:
                w[idx[tokens[i]], idx[tokens[j]]] += 1
                w[idx[tokens[j]], idx[tokens[i]]] += 1
    return nodes, w


def gcn_layer_loops(a_norm, h, w):
    """relu(A H W) with explicit triple loops."""
    n, d_in = len(h), len(h[0])
    d_out = len(w[0])
    ah = [[sum(a_norm[i][k] * h[k][c] for k in range(n)) for c in range(d_in)] for i in range(n)]
    out = np.zeros((n, d_out))
    for i in range(n):
        for c in range(d_out):
            out[i, c] = max(0.0, sum(ah[i][k] * w[k][c] for k in range(d_in)))
    return out


def normalize_loops(adj):
    n = len(adj)
    a = [[adj[i][j] + (1.0 if i == j else 0.0) for j in range(n)] for i in range(n)]
    deg = [sum(row) for row in a]
    return np.array([[a[i][j] / (deg[i] ** 0.5 * deg[j] ** 0.5) for j in range(n)] for i in range(n)])


def spectral_radius(m, iters=2000, seed=0):
    """Power iteration on a symmetric matrix."""
    v = np.random.default_rng(seed).uniform(0.1, 1.0, len(m))
    lam = 0.0
    for _ in range(iters):
        u = m @ v
        lam = np.linalg.norm(u) / np.linalg.norm(v)
        if lam == 0:
            return 0.0
        v = u / np.linalg.norm(u)
    return lam


def random_symmetric(rng, n, density=0.5, low=0.05, high=1.0):
    a = np.triu(rng.uniform(low, high, (n, n)) * (rng.uniform(size=(n, n)) < density), 1)
    return a + a.T
