"""Pure-Python versions of the compiled kernels in ``_ckernels.pyx``.

Loop order and arithmetic mirror the Cython code one-for-one.
"""

import numpy as np


def cooccurrence_matrix(ids, n_nodes, window):
    ids = [int(i) for i in ids]
    n = len(ids)
    w = [[0.0] * n_nodes for _ in range(n_nodes)]
    for i in range(n):
        a = ids[i]
        for j in range(i + 1, min(i + window, n)):
            b = ids[j]
            if a != b:
                w[a][b] += 1.0
                w[b][a] += 1.0
    return np.array(w, dtype=np.float64).reshape(n_nodes, n_nodes)


def textrank_iterate(weights, damping, tol, max_iter):
    weights = np.asarray(weights, dtype=np.float64).tolist()
    n = len(weights)
    # incoming[v] = [(u, w(u,v) / sum_x w(u,x)), ...] in ascending u
    incoming = [[] for _ in range(n)]
    for u in range(n):
        row = weights[u]
        total = 0.0
        for x in row:
            total += x
        if total > 0.0:
            for v in range(n):
                if row[v] != 0.0:
                    incoming[v].append((u, row[v] / total))

    scores = [1.0] * n
    it = 0
    delta = 0.0
    while it < max_iter:
        it += 1
        delta = 0.0
        nxt = [0.0] * n
        for v in range(n):
            acc = 0.0
            for u, c in incoming[v]:
                acc += c * scores[u]
            nxt[v] = (1.0 - damping) + damping * acc
            delta += abs(nxt[v] - scores[v])
        scores = nxt
        if delta < tol:
            break
    return np.array(scores, dtype=np.float64), it, delta
