"""Directed per-layer graphs and cosine KNN construction."""

from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError


@dataclass(frozen=True, eq=False)
class LayerGraph:
    """In-neighbour lists stored CSR style, grouped by destination node.

    The sources of node ``i`` (its ``N(i)``) are
    ``indices[indptr[i]:indptr[i + 1]]``; each stored entry is the edge
    ``source -> i`` and ``sims`` holds that edge's cosine similarity.
    """

    layer: int
    indptr: np.ndarray  # (N + 1,) int64
    indices: np.ndarray  # (E,) int64
    sims: np.ndarray  # (E,) float64

    @classmethod
    def from_lists(cls, layer, neighbors, sims=None):
        counts = [len(n) for n in neighbors]
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        indices = np.array([j for n in neighbors for j in n], dtype=np.int64)
        if sims is None:
            flat = np.zeros(len(indices))
        else:
            flat = np.array([s for row in sims for s in row], dtype=np.float64)
        return cls(layer, indptr, indices, flat)

    @classmethod
    def from_dense(cls, layer, neighbors, sims):
        """From an ``(N, K)`` neighbour matrix (every node has K sources)."""
        n, k = neighbors.shape
        indptr = np.arange(n + 1, dtype=np.int64) * k
        return cls(layer, indptr, neighbors.reshape(-1).astype(np.int64), sims.reshape(-1).astype(np.float64))

    @property
    def num_nodes(self):
        return len(self.indptr) - 1

    @property
    def num_edges(self):
        return len(self.indices)

    def degrees_in(self):
        return np.diff(self.indptr)

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def neighbor_sims(self, i):
        return self.sims[self.indptr[i]:self.indptr[i + 1]]

    def edges(self):
        """``(src, dst)`` arrays, one entry per directed edge ``src -> dst``."""
        dst = np.repeat(np.arange(self.num_nodes), self.degrees_in())
        return self.indices, dst

    def equal(self, other):
        return (
            self.layer == other.layer
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
            and self.sims.tobytes() == other.sims.tobytes()
        )


def cosine_matrix(x):
    """All-pairs cosine similarity in float64.

    Rows with zero norm have similarity 0 against everything, themselves
    included. Raw dot products are divided by the norm product afterwards so
    identical rows always get bitwise-identical similarities.
    """
    x = np.asarray(x, dtype=np.float64)
    gram = x @ x.T
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    denom = np.outer(norms, norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = np.where(denom > 0, gram / denom, 0.0)
    return np.clip(sims, -1.0, 1.0)


def knn_graph(x, k, layer=0):
    """Connect every node to its ``k`` most cosine-similar other nodes.

    Node ``i`` receives edges from the ``k`` nodes ``j != i`` with the largest
    ``cos(x_j, x_i)``; ties go to the smaller ``j``. ``N(i)`` is ordered by
    decreasing similarity.
    """
    x = np.asarray(x)
    n = x.shape[0]
    if not 1 <= k < n:
        raise ValidationError(f"k must satisfy 1 <= k < {n}, got {k}")
    sims = cosine_matrix(x)
    np.fill_diagonal(sims, -np.inf)
    # stable sort keeps the smaller index first among equal similarities
    order = np.argsort(-sims, axis=1, kind="stable")[:, :k]
    chosen = np.take_along_axis(sims, order, axis=1)
    return LayerGraph.from_dense(layer, order, chosen)
