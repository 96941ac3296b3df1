"""Independent slow evaluators used to cross-check the vectorized layers.

They share no code with the package's forward passes: the spatial
recurrence is evaluated by memoized recursion with an explicit double sum
over all grid cells and a 0/1 edge indicator.
"""
import math

import numpy as np

# (row step, col step) of each scan; predecessors sit one step "behind"
CORNERS = {"tl": (1, 1), "tr": (1, -1), "bl": (-1, 1), "br": (-1, -1)}


def act(x, kind):
    if kind == "relu":
        return np.array([max(0.0, v) for v in x])
    return np.array([1.0 / (1.0 + math.exp(-v)) for v in x])


def edge(corner, i, j, k, l, occ):
    """1 if (k, l) is a predecessor of (i, j) for this scan corner."""
    di, dj = CORNERS[corner]
    if not occ[k][l]:
        return 0
    return int((k, l) in {(i, j - dj), (i - di, j - dj), (i - di, j)})


def visit_rank(corner, occ):
    di, dj = CORNERS[corner]
    cells = [(i, j) for i in range(len(occ)) for j in range(len(occ[0])) if occ[i][j]]
    cells.sort(key=lambda c: (di * c[0], dj * c[1]))
    return cells


def naive_slice(x, occ, corner, U, W, b, G, V, kind):
    """Output contribution V @ s for one direction on one slice x (H, W, D)."""
    H, Wd = len(occ), len(occ[0])
    memo = {}

    def h(i, j):
        if (i, j) not in memo:
            total = U @ x[i, j] + b
            for k in range(H):
                for l in range(Wd):
                    if edge(corner, i, j, k, l, occ):
                        total = total + W @ h(k, l)
            memo[(i, j)] = act(total, kind)
        return memo[(i, j)]

    order = visit_rank(corner, occ)
    hs = [h(i, j) for i, j in order]
    s = []
    for col in range(G.shape[1]):
        acc = np.zeros_like(hs[0])
        for row, hv in enumerate(hs):
            acc = acc + G[row, col] * hv
        s.append(acc)
    return V @ np.concatenate(s)


def naive_srnn(volume, occ, weights, kind):
    """volume (T, H, W, D); weights {corner: (U, W, b, G, V)} -> (T, out)."""
    out = []
    for t in range(volume.shape[0]):
        m = 0.0
        for corner in ("tl", "tr", "bl", "br"):
            m = m + naive_slice(volume[t], occ, corner, *weights[corner], kind)
        out.append(m)
    return np.array(out)


def naive_trnn(m, fwd, bwd, kind):
    """m (L, input); fwd/bwd = (W_ih, W_hh, b, G, V) -> logits."""
    L = len(m)

    def run(seq, W_ih, W_hh, b):
        h = np.zeros(W_hh.shape[0])
        states = []
        for t in range(L):
            h = act(W_ih @ seq[t] + W_hh @ h + b, kind)
            states.append(h)
        return states

    def project(states, G, V):
        q = [sum(G[i, p] * states[i] for i in range(L)) for p in range(G.shape[1])]
        return V @ np.concatenate(q)

    hf = run(m, *fwd[:3])
    hb = run(m[::-1], *bwd[:3])
    return project(hf, fwd[3], fwd[4]) + project(hb, bwd[3], bwd[4])
