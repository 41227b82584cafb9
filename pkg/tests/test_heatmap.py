import csv
import io
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_image
from vigxray.errors import ValidationError
from vigxray.heatmap import (
    HeatmapSpec,
    curve_figure,
    curves_csv,
    heatmap_filename,
    layer_series,
    neighbor_intensities,
    render_heatmap,
    render_metric_curves,
    write_heatmaps,
)
from vigxray.imaging import ImageRGB, load_image, partition
from vigxray.metrics import LayerMetrics
from vigxray.model import LayerGraph, forward


@pytest.fixture
def trace(small_weights, rng):
    return forward(partition(random_image(rng)), small_weights, label=1)


def graph_with_sims(i, nbrs, sims, n=196):
    lists = [[] for _ in range(n)]
    vals = [[] for _ in range(n)]
    lists[i], vals[i] = list(nbrs), list(sims)
    return LayerGraph.from_lists(1, lists, vals)


def one_layer_trace(trace, g):
    return replace(trace, graphs=[g], features=None)


def upscale(img, s):
    return np.repeat(np.repeat(img.data, s, axis=0), s, axis=1)


def test_spec_from_row_col():
    spec = HeatmapSpec.at(5, 7)
    assert spec.patch == 77 and spec.row_col == (5, 7)
    with pytest.raises(ValidationError):
        HeatmapSpec.at(14, 0)
    with pytest.raises(ValidationError):
        HeatmapSpec(patch=0, alpha_floor=0.9, alpha_ceiling=0.2)


def test_check_layers(trace):
    spec = HeatmapSpec(patch=0, layers=(1, 3))
    with pytest.raises(ValidationError, match="layer 3"):
        spec.check_layers(trace.num_layers)


def test_intensities_one_per_neighbour(seven_weights, rng):
    t = forward(partition(random_image(rng)), seven_weights)
    spec = HeatmapSpec(patch=77)
    entries = neighbor_intensities(t, 4, 77, spec)
    assert len(entries) == 9
    assert [j for j, _, _ in entries] == t.graph(4).neighbors(77).tolist()
    assert all(0.25 <= a <= 0.9 for _, _, a in entries)


def test_minmax_alphas(trace):
    t = one_layer_trace(trace, graph_with_sims(3, [1, 2, 4], [0.2, 0.6, 1.0]))
    alphas = [a for _, _, a in neighbor_intensities(t, 1, 3, HeatmapSpec(patch=3))]
    assert alphas == pytest.approx([0.25, 0.575, 0.9], abs=1e-12)


def test_equal_sims_use_ceiling(trace):
    t = one_layer_trace(trace, graph_with_sims(3, [1, 2, 4], [0.4, 0.4, 0.4]))
    alphas = [a for _, _, a in neighbor_intensities(t, 1, 3, HeatmapSpec(patch=3, alpha_ceiling=0.8))]
    assert alphas == [0.8, 0.8, 0.8]


def test_absolute_alphas(trace):
    t = one_layer_trace(trace, graph_with_sims(3, [1, 2, 4], [-1.0, 0.0, 1.0]))
    spec = HeatmapSpec(patch=3, normalization="absolute")
    alphas = [a for _, _, a in neighbor_intensities(t, 1, 3, spec)]
    assert alphas == pytest.approx([0.25, 0.575, 0.9], abs=1e-12)


def test_render_no_neighbours_only_green(rng):
    img = random_image(rng)
    spec = HeatmapSpec(patch=0, scale=2)
    out = render_heatmap(img, 0, [], spec).data
    base = upscale(img, 2)
    assert out.shape == (448, 448, 3)
    # everything outside the selected footprint is the plain upscale
    rest = np.ones((448, 448), dtype=bool)
    rest[:32, :32] = False
    assert np.array_equal(out[rest], base[rest])
    sel = out[:32, :32]
    assert np.all(sel[:4] == (0, 255, 0)) and np.all(sel[:, -4:] == (0, 255, 0))
    inner = sel[4:-4, 4:-4].astype(int)
    expected = np.floor(0.4 * base[4:28, 4:28] + 0.6 * np.array([0, 255, 0]) + 0.5)
    assert np.array_equal(inner, expected)
    assert np.all(inner[..., 1] > inner[..., 0])


def test_render_full_alpha_is_pure_red(rng):
    img = random_image(rng)
    spec = HeatmapSpec(patch=0, scale=3)
    out = render_heatmap(img, 0, [(15, 0.5, 1.0)], spec).data
    # patch 15 is row 1, col 1
    assert np.all(out[48:96, 48:96] == (255, 0, 0))


def test_render_leaves_other_patches(rng):
    img = random_image(rng)
    spec = HeatmapSpec(patch=100)
    entries = [(101, 0.9, 0.6), (87, 0.1, 0.25)]
    out = render_heatmap(img, 100, entries, spec).data
    base = upscale(img, 3)
    touched = np.zeros((672, 672), dtype=bool)
    for i in (100, 101, 87):
        r, c = divmod(i, 14)
        touched[r * 48:(r + 1) * 48, c * 48:(c + 1) * 48] = True
    assert np.array_equal(out[~touched], base[~touched])
    assert not np.array_equal(out[touched], base[touched])


def test_render_rejects_wrong_size(rng):
    with pytest.raises(ValidationError):
        render_heatmap(random_image(rng, 100, 100), 0, [], HeatmapSpec(patch=0))


def test_write_heatmaps_names_and_determinism(trace, rng, tmp_path):
    img = random_image(rng)
    spec = HeatmapSpec.at(2, 3, layers=(1, 2))
    (tmp_path / "a").mkdir()
    paths = write_heatmaps(img, trace, spec, tmp_path / "a", "pic")
    assert [p.name for p in paths] == ["pic_1_2_3.png", "pic_2_2_3.png"]
    (tmp_path / "b").mkdir()
    again = write_heatmaps(img, trace, spec, tmp_path / "b", "pic")
    assert all(p.read_bytes() == q.read_bytes() for p, q in zip(paths, again))
    assert load_image(paths[0]).data.shape == (672, 672, 3)
    assert heatmap_filename("x", 10, 0, 13) == "x_10_0_13.png"


def synthetic_reports(n_layers, fn):
    return [[LayerMetrics(layer=l, s_emb=fn(l), d=fn(l), s_vis=fn(l), p=fn(l), q=fn(l)) for l in range(1, n_layers + 1)]]


def test_curves_csv_has_row_per_layer():
    series = layer_series(synthetic_reports(16, lambda l: 0.1 * l))
    rows = list(csv.reader(io.StringIO(curves_csv(series))))
    assert rows[0] == ["layer", "S_vis", "D", "S_emb", "Q", "p"]
    assert len(rows) == 17
    assert [r[0] for r in rows[1:]] == [str(l) for l in range(1, 17)]


def _pixel_ys(fig, line):
    fig.canvas.draw()
    pts = line.axes.transData.transform(np.column_stack([line.get_xdata(), line.get_ydata()]))
    return pts[:, 1]


def test_constant_series_is_flat():
    fig, lines = curve_figure(layer_series(synthetic_reports(16, lambda l: 0.5)))
    for line in lines.values():
        ys = _pixel_ys(fig, line)
        assert np.allclose(ys, ys[0], atol=1e-6)


def test_increasing_series_rises():
    fig, lines = curve_figure(layer_series(synthetic_reports(16, lambda l: l * l / 10)))
    for line in lines.values():
        assert np.all(np.diff(_pixel_ys(fig, line)) > 0)


def test_render_metric_curves_files(tmp_path):
    csv_path, png_path = render_metric_curves(synthetic_reports(4, float), tmp_path / "img_curves")
    assert csv_path.name == "img_curves.csv" and png_path.name == "img_curves.png"
    assert png_path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    first = png_path.read_bytes()
    render_metric_curves(synthetic_reports(4, float), tmp_path / "img_curves")
    assert png_path.read_bytes() == first


def test_curves_skip_missing_metrics():
    reports = [[LayerMetrics(layer=l, s_emb=0.1, d=1.0, s_vis=0.2) for l in (1, 2)]]
    _, lines = curve_figure(layer_series(reports))
    assert set(lines) == {"S_vis", "D", "S_emb"}


def test_uniform_image_renders_at_ceiling(small_weights):
    img = ImageRGB(np.full((224, 224, 3), 128, dtype=np.uint8))
    w = replace(small_weights, pos_enc=np.zeros_like(small_weights.pos_enc))
    t = forward(partition(img), w)
    spec = HeatmapSpec(patch=50)
    entries = neighbor_intensities(t, 1, 50, spec)
    assert all(a == spec.alpha_ceiling for _, _, a in entries)
