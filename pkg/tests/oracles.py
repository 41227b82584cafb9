"""Slow, obviously-correct reference computations used only by the tests.

None of these import the code paths they check; they work on plain Python
lists and scalar arithmetic wherever that stays fast enough.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1


def brute_knn(x, k):
    """``N(i)`` lists by sorting every candidate on (-cos, j).

    Uses one matrix-vector product per node (not the all-pairs matrix) and
    Python's sort for the ranking.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    norms = [math.sqrt(float(v)) for v in np.einsum("ij,ij->i", x, x)]
    out = []
    for i in range(n):
        dots = x @ x[i]
        sims = {}
        for j in range(n):
            if j == i:
                continue
            denom = norms[i] * norms[j]
            sims[j] = 0.0 if denom == 0.0 else max(-1.0, min(1.0, float(dots[j]) / denom))
        ranked = sorted(sims, key=lambda j: (-sims[j], j))
        out.append(ranked[:k])
    return out


def naive_max_relative(x, neighbors, w, b=None):
    """Triple loop: per node, per neighbour, per feature."""
    x = [[float(v) for v in row] for row in np.asarray(x)]
    w = [[float(v) for v in row] for row in np.asarray(w)]
    n, d = len(x), len(x[0])
    out = []
    for i in range(n):
        m = [0.0] * d
        first = True
        for j in neighbors[i]:
            for f in range(d):
                diff = x[j][f] - x[i][f]
                if first or diff > m[f]:
                    m[f] = diff
            first = False
        cat = x[i] + m
        row = []
        for c in range(d):
            acc = 0.0 if b is None else float(b[c])
            for r in range(2 * d):
                acc += cat[r] * w[r][c]
            row.append(acc)
        out.append(row)
    return np.array(out)


def naive_matmul(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def edge_list(neighbors):
    return [(j, i) for i, nb in enumerate(neighbors) for j in nb]


def mean_edge_cos(neighbors, vectors):
    """One dot product per enumerated edge; norms taken per endpoint."""
    v = np.asarray(vectors, dtype=np.float64)
    edges = edge_list(neighbors)
    total = 0.0
    for j, i in edges:
        na, nb = math.sqrt(np.dot(v[j], v[j])), math.sqrt(np.dot(v[i], v[i]))
        if na > 0.0 and nb > 0.0:
            total += max(-1.0, min(1.0, float(np.dot(v[j], v[i])) / (na * nb)))
    return total / len(edges)


def mean_manhattan(neighbors, coords):
    edges = edge_list(neighbors)
    total = 0
    for j, i in edges:
        total += abs(int(coords[i][0]) - int(coords[j][0])) + abs(int(coords[i][1]) - int(coords[j][1]))
    return total / len(edges)


def brute_modularity(neighbors, mask, variant="printed"):
    """Enumerate edges once for intra counts and once per node for degrees."""
    edges = edge_list(neighbors)
    e = len(edges)
    n = len(neighbors)
    q = 0.0
    for flag in (True, False):
        members = [v for v in range(n) if bool(mask[v]) == flag]
        l_c = sum(1 for j, i in edges if bool(mask[j]) == flag and bool(mask[i]) == flag)
        k_in = sum(sum(1 for _, dst in edges if dst == v) for v in members)
        k_out = sum(sum(1 for src, _ in edges if src == v) for v in members)
        if variant == "printed":
            q += l_c / e - (k_in * k_out / (2 * e)) ** 2
        else:
            q += l_c / e - k_in * k_out / (e * e)
    return q


def scalar_bilinear(pixels, out_w, out_h):
    """Per-pixel half-pixel-centre bilinear sampling, y then x, round half up."""
    pixels = np.asarray(pixels)
    h, w, ch = pixels.shape
    out = np.zeros((out_h, out_w, ch), dtype=np.uint8)

    def coord(o, n_in, n_out):
        s = (o + 0.5) * (n_in / n_out) - 0.5
        s = min(max(s, 0.0), n_in - 1)
        lo = math.floor(s)
        return lo, min(lo + 1, n_in - 1), s - lo

    for oy in range(out_h):
        y0, y1, fy = coord(oy, h, out_h)
        for ox in range(out_w):
            x0, x1, fx = coord(ox, w, out_w)
            for c in range(ch):
                left = float(pixels[y0, x0, c]) * (1 - fy) + float(pixels[y1, x0, c]) * fy
                right = float(pixels[y0, x1, c]) * (1 - fy) + float(pixels[y1, x1, c]) * fy
                v = left * (1 - fx) + right * fx
                out[oy, ox, c] = min(255, max(0, math.floor(v + 0.5)))
    return out


def xoshiro_scalar(state, count):
    """Reference xoshiro256** on one lane of four 64-bit words."""
    s = [v & MASK64 for v in state]

    def rotl(v, k):
        return ((v << k) | (v >> (64 - k))) & MASK64

    out = []
    for _ in range(count):
        out.append((rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64)
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = rotl(s[3], 45)
    return out
