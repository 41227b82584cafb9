"""Connection heatmaps and per-layer metric curves."""

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .errors import ValidationError
from .imaging import GRID_SIZE, IMAGE_SIZE, NUM_PATCHES, PATCH_SIZE, ImageRGB, encode_png
from .metrics import aggregate

RED = np.array([255.0, 0.0, 0.0])
GREEN = np.array([0.0, 255.0, 0.0])
SELECTED_ALPHA = 0.6
NORMALIZATIONS = ("minmax", "absolute")

# metric key, column label, colour
CURVES = (
    ("s_vis", "S_vis", "#1f77b4"),
    ("d", "D", "#ff7f0e"),
    ("s_emb", "S_emb", "#2ca02c"),
    ("q", "Q", "#d62728"),
    ("p", "p", "#9467bd"),
)


@dataclass(frozen=True)
class HeatmapSpec:
    patch: int
    layers: tuple = ()
    scale: int = 3
    alpha_floor: float = 0.25
    alpha_ceiling: float = 0.9
    normalization: str = "minmax"

    def __post_init__(self):
        if not 0 <= self.patch < NUM_PATCHES:
            raise ValidationError(f"patch index {self.patch} outside [0, {NUM_PATCHES})")
        if self.scale < 1:
            raise ValidationError("scale must be >= 1")
        if not 0.0 <= self.alpha_floor < self.alpha_ceiling <= 1.0:
            raise ValidationError("need 0 <= alpha_floor < alpha_ceiling <= 1")
        if self.normalization not in NORMALIZATIONS:
            raise ValidationError(f"normalization must be one of {NORMALIZATIONS}")

    @classmethod
    def at(cls, row, col, **kw):
        if not (0 <= row < GRID_SIZE and 0 <= col < GRID_SIZE):
            raise ValidationError(f"patch ({row}, {col}) outside the {GRID_SIZE}x{GRID_SIZE} grid")
        return cls(patch=row * GRID_SIZE + col, **kw)

    @property
    def row_col(self):
        return divmod(self.patch, GRID_SIZE)

    def check_layers(self, num_layers):
        for l in self.layers:
            if not 1 <= l <= num_layers:
                raise ValidationError(f"layer {l} outside [1, {num_layers}]")


def neighbor_intensities(t, layer, i, spec):
    """``(j, sim, alpha)`` for every in-neighbour ``j`` of patch ``i`` at ``layer``."""
    g = t.graph(layer)
    if not 0 <= i < g.num_nodes:
        raise ValidationError(f"patch index {i} outside [0, {g.num_nodes})")
    nbrs = g.neighbors(i)
    sims = g.neighbor_sims(i)
    lo, hi = spec.alpha_floor, spec.alpha_ceiling
    if spec.normalization == "absolute":
        alphas = lo + (sims + 1.0) / 2.0 * (hi - lo)
    elif len(sims) and sims.max() > sims.min():
        alphas = lo + (sims - sims.min()) / (sims.max() - sims.min()) * (hi - lo)
    else:
        alphas = np.full(len(sims), hi)
    alphas = np.clip(alphas, lo, hi)
    return [(int(j), float(s), float(a)) for j, s, a in zip(nbrs, sims, alphas)]


def _footprint(i, scale):
    r, c = divmod(i, GRID_SIZE)
    p = PATCH_SIZE * scale
    return slice(r * p, (r + 1) * p), slice(c * p, (c + 1) * p)


def render_heatmap(img, i, entries, spec):
    """Overlay neighbours in red and the selected patch in green.

    The base image is upscaled by nearest neighbour; each neighbour patch is
    blended toward pure red with its alpha, then the selected patch toward
    pure green at alpha 0.6 and outlined with a ``2 * scale`` pixel green
    border drawn inside its footprint. Drawing the selection last means it
    wins any overlap. Blending is done in float64 and rounded half-up once.
    """
    if (img.width, img.height) != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValidationError(f"heatmaps need a {IMAGE_SIZE}x{IMAGE_SIZE} image")
    if not 0 <= i < NUM_PATCHES:
        raise ValidationError(f"patch index {i} outside [0, {NUM_PATCHES})")
    s = spec.scale
    canvas = np.repeat(np.repeat(img.data, s, axis=0), s, axis=1).astype(np.float64)
    for j, _sim, alpha in entries:
        if not 0 <= j < NUM_PATCHES:
            raise ValidationError(f"neighbour index {j} outside [0, {NUM_PATCHES})")
        ys, xs = _footprint(j, s)
        canvas[ys, xs] = (1.0 - alpha) * canvas[ys, xs] + alpha * RED
    ys, xs = _footprint(i, s)
    canvas[ys, xs] = (1.0 - SELECTED_ALPHA) * canvas[ys, xs] + SELECTED_ALPHA * GREEN
    b = 2 * s
    sel = canvas[ys, xs]
    sel[:b] = GREEN
    sel[-b:] = GREEN
    sel[:, :b] = GREEN
    sel[:, -b:] = GREEN
    return ImageRGB(np.clip(np.floor(canvas + 0.5), 0, 255).astype(np.uint8))


def heatmap_filename(image_name, layer, row, col):
    return f"{image_name}_{layer}_{row}_{col}.png"


def write_heatmaps(img, t, spec, out_dir, image_name):
    """Render one PNG per layer in ``spec.layers``; returns the written paths."""
    spec.check_layers(t.num_layers)
    out_dir = Path(out_dir)
    row, col = spec.row_col
    paths = []
    for layer in spec.layers:
        entries = neighbor_intensities(t, layer, spec.patch, spec)
        out = render_heatmap(img, spec.patch, entries, spec)
        path = out_dir / heatmap_filename(image_name, layer, row, col)
        path.write_bytes(encode_png(out.data))
        paths.append(path)
    return paths


# metric curves

def layer_series(reports):
    """Per-layer means over images, as a list of AggregateRow."""
    return aggregate(reports, paired=False)


def curves_csv(series):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["layer"] + [label for _, label, _ in CURVES])
    for row in series:
        w.writerow([row.layers] + ["" if getattr(row, k) is None else repr(getattr(row, k)) for k, _, _ in CURVES])
    return buf.getvalue()


def curve_figure(series):
    """Build the small-multiples figure: one panel and polyline per metric.

    Metrics absent from every layer are skipped. Returns the figure and a
    ``{metric label: Line2D}`` map.
    """
    present = [(k, label, colour) for k, label, colour in CURVES
               if any(getattr(r, k) is not None for r in series)]
    fig = Figure(figsize=(6.0, 1.6 * max(len(present), 1)), dpi=100)
    FigureCanvasAgg(fig)
    layers = [int(r.layers) for r in series]
    lines = {}
    for n, (key, label, colour) in enumerate(present):
        ax = fig.add_subplot(len(present), 1, n + 1)
        pts = [(l, getattr(r, key)) for l, r in zip(layers, series) if getattr(r, key) is not None]
        xs, ys = zip(*pts)
        (line,) = ax.plot(xs, ys, color=colour, marker="o", markersize=3, linewidth=1.5, label=label)
        ax.set_xlim(0.5, max(layers) + 0.5)
        ax.set_ylabel(label)
        ax.legend(loc="upper right", fontsize=7, frameon=False)
        ax.grid(True, linewidth=0.3)
        if n == len(present) - 1:
            ax.set_xlabel("layer")
        lines[label] = line
    fig.tight_layout()
    return fig, lines


def render_metric_curves(reports, out_prefix):
    """Write ``<prefix>.csv`` (one row per layer) and ``<prefix>.png``."""
    if not reports:
        raise ValidationError("no reports to plot")
    series = layer_series(reports)
    out_prefix = Path(out_prefix)
    csv_path = out_prefix.with_name(out_prefix.name + ".csv")
    png_path = out_prefix.with_name(out_prefix.name + ".png")
    csv_path.write_text(curves_csv(series))
    fig, _ = curve_figure(series)
    fig.savefig(png_path, format="png", metadata={"Software": None})
    return csv_path, png_path
