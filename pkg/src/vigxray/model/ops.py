"""Forward pass: patch stem, grapher blocks, classification head.

Features are stored as float32 ``(N, D)`` arrays. Every linear map
accumulates in float64 and rounds its result to float32 once, which keeps
outputs independent of BLAS summation order up to that final rounding.
"""

import math

import numpy as np
from scipy.special import erf

from ..errors import ValidationError
from ..imaging import PatchGrid, flatten_patches
from .graph import knn_graph

F32 = np.float32


def linear(x, w, b=None):
    out = np.asarray(x, dtype=np.float64) @ np.asarray(w, dtype=np.float64)
    if b is not None:
        out += np.asarray(b, dtype=np.float64)
    return out.astype(F32)


def gelu(x):
    x64 = np.asarray(x, dtype=np.float64)
    return (0.5 * x64 * (1.0 + erf(x64 / math.sqrt(2.0)))).astype(F32)


def _check(cond, msg):
    if not cond:
        raise ValidationError(msg)


def stem(grid, w):
    """Initial node features: linear patch projection plus positional encoding.

    ``grid`` is a :class:`PatchGrid` or an already flattened ``(N, 768)``
    matrix of [0, 1] samples.
    """
    flat = flatten_patches(grid) if isinstance(grid, PatchGrid) else np.asarray(grid, dtype=np.float64)
    _check(flat.shape == (w.pos_enc.shape[0], w.stem_w.shape[0]),
           f"stem input {flat.shape} does not match weights "
           f"({w.pos_enc.shape[0]} nodes, {w.stem_w.shape[0]} inputs)")
    proj = flat @ w.stem_w.astype(np.float64) + w.stem_b.astype(np.float64) + w.pos_enc.astype(np.float64)
    return proj.astype(F32)


def max_relative_aggregate(x, g):
    """Per node, elementwise max of ``x_j - x_i`` over ``j`` in ``N(i)``.

    Nodes without in-neighbours get the zero vector.
    """
    x = np.asarray(x, dtype=F32)
    _check(g.num_nodes == x.shape[0], f"graph has {g.num_nodes} nodes, features have {x.shape[0]}")
    src, dst = g.edges()
    m = np.zeros_like(x)
    deg = g.degrees_in()
    nonempty = deg > 0
    if nonempty.any():
        diffs = x[src] - x[dst]
        m[nonempty] = np.maximum.reduceat(diffs, g.indptr[:-1][nonempty], axis=0)
    return m


def max_relative_conv(x, g, w_update, b_update=None, num_heads=1):
    """Max-relative graph convolution ``[x_i, max_j(x_j - x_i)] W_update``.

    With ``num_heads > 1`` the feature axis is split into contiguous slices
    and head ``h`` uses only the ``W_update`` entries mapping its slice of
    both halves of the concatenation to its output slice.
    """
    x = np.asarray(x, dtype=F32)
    n, d = x.shape
    _check(w_update.shape == (2 * d, d), f"W_update shape {w_update.shape}, expected {(2 * d, d)}")
    _check(d % num_heads == 0, f"feature dim {d} not divisible by {num_heads} heads")
    m = max_relative_aggregate(x, g)
    if num_heads == 1:
        return linear(np.concatenate([x, m], axis=1), w_update, b_update)
    hd = d // num_heads
    out = np.empty_like(x)
    for h in range(num_heads):
        s = slice(h * hd, (h + 1) * hd)
        w_h = np.concatenate([w_update[s, s], w_update[d + h * hd:d + (h + 1) * hd, s]], axis=0)
        b_h = None if b_update is None else b_update[s]
        out[:, s] = linear(np.concatenate([x[:, s], m[:, s]], axis=1), w_h, b_h)
    return out


def vig_block(x, blk, k, layer=0, num_heads=1):
    """One grapher block followed by its FFN, both residual.

    The KNN graph is built on the block input before ``W_in``. Returns the
    block output and that graph.
    """
    g = knn_graph(x, k, layer=layer)
    u = linear(x, blk.w_in, blk.b_in)
    h = linear(max_relative_conv(u, g, blk.w_update, blk.b_update, num_heads), blk.w_out, blk.b_out)
    z = x + h
    y = z + linear(gelu(linear(z, blk.w1, blk.b1)), blk.w2, blk.b2)
    return y, g


def pool(x):
    """Node-mean of ``x`` with exactly rounded column sums (order independent)."""
    x = np.asarray(x, dtype=np.float64)
    return np.array([math.fsum(col) for col in x.T]) / x.shape[0]


def head_logits(x, w):
    x = np.asarray(x)
    _check(x.ndim == 2 and x.shape[1] == w.head_w.shape[0],
           f"features {x.shape} do not match head input dim {w.head_w.shape[0]}")
    pooled = pool(x).astype(F32)
    return linear(pooled[None, :], w.head_w, w.head_b)[0]


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def classify_head(x, w):
    """Global average pooling, linear head, softmax; returns float64 probabilities."""
    return softmax(head_logits(x, w))


def forward(grid, w, image_id="", label=None):
    """Run the network and record everything the analysis needs.

    Returns a :class:`~vigxray.trace.Trace` holding ``X^0 .. X^L``, the graph
    built inside each block, and the head applied after every block.
    """
    from ..trace import Trace

    cfg = w.config
    x = stem(grid, w)
    features = [x]
    graphs = []
    logits = []
    for l, blk in enumerate(w.blocks, start=1):
        x, g = vig_block(x, blk, cfg.k_at(l), layer=l, num_heads=cfg.num_heads)
        features.append(x)
        graphs.append(g)
        logits.append(head_logits(x, w))
    logits = np.stack(logits)
    probs = np.stack([softmax(z) for z in logits])
    return Trace(
        config=cfg,
        features=features,
        graphs=graphs,
        logits=logits,
        probs=probs,
        label=label,
        image_id=image_id,
    )
