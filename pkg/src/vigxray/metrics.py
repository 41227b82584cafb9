"""Layer-wise graph metrics, their aggregation and CSV/JSON reports.

Per layer ``l`` with edge set ``E`` (edge ``j -> i`` for ``j`` in ``N(i)``):

* ``S_emb`` mean cosine similarity of the embeddings at both ends of an edge,
            taken from the features the graph was built on
* ``D``     mean Manhattan distance between the grid cells of both ends
* ``S_vis`` mean cosine similarity of the two patches' raw RGB samples
* ``p``     head probability of the true class after layer ``l``
* ``Q``     two-community (object / background) modularity
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .imaging import PatchGrid, flatten_patches
from .model.ops import classify_head

VARIANTS = ("printed", "leicht-newman")
REPORT_COLUMNS = ("image_id", "layer", "S_vis", "D", "S_emb", "Q", "p", "top1_hit")
AGGREGATE_COLUMNS = ("layers", "S_vis", "D", "S_emb", "Q", "p", "acc")


@dataclass
class LayerMetrics:
    layer: int
    s_emb: float
    d: float
    s_vis: float
    p: float | None = None
    top1_hit: bool | None = None
    q: float | None = None


@dataclass(frozen=True)
class ModularityBreakdown:
    l_obj: int
    l_bg: int
    k_in_obj: int
    k_in_bg: int
    k_out_obj: int
    k_out_bg: int
    num_edges: int

    @property
    def cross_edges(self):
        return self.num_edges - self.l_obj - self.l_bg


def _require_edges(g):
    if g.num_edges == 0:
        raise ValidationError(f"layer {g.layer}: empty edge set, metric undefined")


def _mean(values):
    return math.fsum(values) / len(values)


def edge_cosines(g, vectors):
    """Cosine similarity of ``vectors[src]`` and ``vectors[dst]`` per edge.

    Zero-norm vectors are similar to nothing (cosine 0).
    """
    v = np.asarray(vectors, dtype=np.float64)
    src, dst = g.edges()
    a, b = v[src], v[dst]
    dots = np.einsum("ij,ij->i", a, b)
    denom = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(denom > 0, dots / denom, 0.0)
    return np.clip(cos, -1.0, 1.0)


def embedding_similarity(g, x):
    _require_edges(g)
    return _mean(edge_cosines(g, x))


def embedding_similarity_from_edges(g):
    """``S_emb`` from the similarities recorded when the graph was built."""
    _require_edges(g)
    return _mean(g.sims)


def spatial_distance(g, coords):
    _require_edges(g)
    coords = np.asarray(coords)
    src, dst = g.edges()
    return _mean(np.abs(coords[src] - coords[dst]).sum(axis=1).astype(np.float64))


def visual_similarity(g, grid):
    """``S_vis`` over flattened patch samples; ``grid`` may be pre-flattened."""
    _require_edges(g)
    flat = flatten_patches(grid) if isinstance(grid, PatchGrid) else grid
    return _mean(edge_cosines(g, flat))


def layer_prediction(x, w, y):
    c = w.config.num_classes
    if not 0 <= y < c:
        raise ValidationError(f"label {y} outside [0, {c})")
    probs = classify_head(x, w)
    return float(probs[y]), int(np.argmax(probs)) == y


def modularity(g, mask, variant="printed"):
    """Object/background modularity of a directed graph.

    ``printed``: ``sum_c L_c/|E| - (k_in_c * k_out_c / (2|E|))**2``.
    ``leicht-newman``: ``sum_c L_c/|E| - k_in_c * k_out_c / |E|**2``.

    An empty community contributes 0. With every node in one community the
    printed form gives ``1 - (|E|/2)**2``, which is far below zero for any
    realistic graph.
    """
    if variant not in VARIANTS:
        raise ValidationError(f"unknown modularity variant {variant!r}")
    _require_edges(g)
    bits = np.asarray(getattr(mask, "bits", mask), dtype=bool)
    if bits.shape != (g.num_nodes,):
        raise ValidationError(f"mask has {bits.shape} entries, graph has {g.num_nodes} nodes")
    src, dst = g.edges()
    s_obj, d_obj = bits[src], bits[dst]
    e = g.num_edges
    b = ModularityBreakdown(
        l_obj=int(np.sum(s_obj & d_obj)),
        l_bg=int(np.sum(~s_obj & ~d_obj)),
        k_in_obj=int(np.sum(d_obj)),
        k_in_bg=int(np.sum(~d_obj)),
        k_out_obj=int(np.sum(s_obj)),
        k_out_bg=int(np.sum(~s_obj)),
        num_edges=e,
    )
    q = 0.0
    for l_c, k_in, k_out in ((b.l_obj, b.k_in_obj, b.k_out_obj), (b.l_bg, b.k_in_bg, b.k_out_bg)):
        if variant == "printed":
            q += l_c / e - (k_in * k_out / (2 * e)) ** 2
        else:
            q += l_c / e - k_in * k_out / e**2
    return q, b


def analyze_trace(t, grid, mask=None, label=None, weights=None, variant="printed"):
    """All applicable metrics for every layer of a trace.

    ``S_emb`` for layer ``l`` uses the features its graph was built from
    (the block input ``X^(l-1)``), so it agrees with the similarities stored
    on the edges when features are elided. ``p`` comes from re-running the
    head on the block output ``X^l`` when ``weights`` and features are
    available, otherwise from the probabilities stored in the trace. Metrics
    whose inputs are missing stay ``None``.
    """
    if label is None:
        label = t.label
    if label is not None and not 0 <= label < t.config.num_classes:
        raise ValidationError(f"label {label} outside [0, {t.config.num_classes})")
    if len(grid) != t.config.num_nodes:
        raise ValidationError(f"grid has {len(grid)} patches, trace has {t.config.num_nodes} nodes")
    flat = flatten_patches(grid)
    coords = grid.coords
    rows = []
    for l, g in enumerate(t.graphs, start=1):
        if t.has_features:
            s_emb = embedding_similarity(g, t.features[l - 1])
        else:
            s_emb = embedding_similarity_from_edges(g)
        row = LayerMetrics(
            layer=l,
            s_emb=s_emb,
            d=spatial_distance(g, coords),
            s_vis=visual_similarity(g, flat),
        )
        if label is not None:
            if weights is not None and t.has_features:
                row.p, row.top1_hit = layer_prediction(t.features[l], weights, label)
            else:
                probs = t.probs[l - 1]
                row.p, row.top1_hit = float(probs[label]), int(np.argmax(probs)) == label
        if mask is not None:
            row.q, _ = modularity(g, mask, variant)
        rows.append(row)
    return rows


@dataclass
class AggregateRow:
    layers: str
    s_vis: float | None
    d: float | None
    s_emb: float | None
    q: float | None
    p: float | None
    acc: float | None


def layer_groups(num_layers, paired=True):
    if not paired:
        return [(l,) for l in range(1, num_layers + 1)]
    return [tuple(range(l, min(l + 2, num_layers + 1))) for l in range(1, num_layers + 1, 2)]


def aggregate(reports, paired=True):
    """Average per-image reports into one row per layer pair.

    Each metric is the mean over every (image, layer) in the group where it
    is present. ``acc`` is the share of labelled images whose top-1 class is
    correct at the last layer of the group.
    """
    if not reports:
        raise ValidationError("nothing to aggregate")
    num_layers = len(reports[0])
    for rep in reports:
        if len(rep) != num_layers:
            raise ValidationError(f"reports disagree on layer count ({len(rep)} vs {num_layers})")
    out = []
    for group in layer_groups(num_layers, paired):
        cells = [rep[l - 1] for rep in reports for l in group]

        def mean_of(attr):
            vals = [getattr(c, attr) for c in cells if getattr(c, attr) is not None]
            return _mean(vals) if vals else None

        hits = [rep[group[-1] - 1].top1_hit for rep in reports]
        hits = [float(h) for h in hits if h is not None]
        label = f"{group[0]}-{group[-1]}" if len(group) > 1 else str(group[0])
        out.append(AggregateRow(
            layers=label,
            s_vis=mean_of("s_vis"),
            d=mean_of("d"),
            s_emb=mean_of("s_emb"),
            q=mean_of("q"),
            p=mean_of("p"),
            acc=_mean(hits) if hits else None,
        ))
    return out


# report I/O

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_rows(image_id, rows):
    return [
        {
            "image_id": image_id,
            "layer": r.layer,
            "S_vis": r.s_vis,
            "D": r.d,
            "S_emb": r.s_emb,
            "Q": r.q,
            "p": r.p,
            "top1_hit": r.top1_hit,
        }
        for r in rows
    ]


def metrics_csv(image_id, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for rec in report_rows(image_id, rows):
        writer.writerow([_cell(rec[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()


def write_metrics_csv(path, image_id, rows):
    Path(path).write_text(metrics_csv(image_id, rows))


def write_metrics_json(path, image_id, rows):
    Path(path).write_text(json.dumps(report_rows(image_id, rows), indent=1) + "\n")


def read_metrics_csv(path):
    """Return ``(image_id, rows)`` from a per-image report CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValidationError(f"{path}: unexpected columns {reader.fieldnames}")
        recs = list(reader)
    if not recs:
        raise ValidationError(f"{path}: no metric rows")

    def num(s):
        return float(s) if s != "" else None

    image_ids = {r["image_id"] for r in recs}
    if len(image_ids) != 1:
        raise ValidationError(f"{path}: rows from several images {sorted(image_ids)}")
    rows = [
        LayerMetrics(
            layer=int(r["layer"]),
            s_emb=float(r["S_emb"]),
            d=float(r["D"]),
            s_vis=float(r["S_vis"]),
            p=num(r["p"]),
            top1_hit=None if r["top1_hit"] == "" else r["top1_hit"] == "1",
            q=num(r["Q"]),
        )
        for r in recs
    ]
    if [r.layer for r in rows] != list(range(1, len(rows) + 1)):
        raise ValidationError(f"{path}: layers are not 1..{len(rows)} in order")
    return image_ids.pop(), rows


def aggregate_csv(rows, digits=6):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGGREGATE_COLUMNS)
    for r in rows:
        vals = [r.s_vis, r.d, r.s_emb, r.q, r.p, r.acc]
        writer.writerow([r.layers] + ["" if v is None else f"{v:.{digits}f}" for v in vals])
    return buf.getvalue()


def format_table(rows):
    """Plain-text rendering in the ``1-2 | 0.700 | ...`` style."""
    lines = [" | ".join(f"{c:>6}" for c in AGGREGATE_COLUMNS)]
    for r in rows:
        vals = [r.s_vis, r.d, r.s_emb, r.q, r.p, r.acc]
        lines.append(" | ".join([f"{r.layers:>6}"] + [f"{'-':>6}" if v is None else f"{v:6.3f}" for v in vals]))
    return "\n".join(lines)


def rows_as_dicts(rows):
    return [asdict(r) for r in rows]
