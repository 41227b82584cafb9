import math

import numpy as np
import pytest

from oracles import brute_modularity, mean_edge_cos, mean_manhattan
from vigxray.errors import ValidationError
from vigxray.imaging import ImageRGB, PatchMask, flatten_patches, grid_coords, partition
from vigxray.metrics import (
    LayerMetrics,
    aggregate,
    aggregate_csv,
    analyze_trace,
    embedding_similarity,
    embedding_similarity_from_edges,
    layer_prediction,
    metrics_csv,
    modularity,
    read_metrics_csv,
    spatial_distance,
    visual_similarity,
    write_metrics_csv,
    write_metrics_json,
)
from vigxray.model import LayerGraph, ModelConfig, forward, init_weights, knn_graph


def lists(g):
    return [g.neighbors(i).tolist() for i in range(g.num_nodes)]


# embedding similarity

def test_s_emb_identical_nodes():
    x = np.tile([0.3, -1.2, 2.0], (5, 1))
    assert embedding_similarity(knn_graph(x, 2), x) == pytest.approx(1.0, abs=1e-12)


def test_s_emb_orthogonal():
    g = LayerGraph.from_lists(0, [[1], []])
    assert embedding_similarity(g, np.array([[1.0, 0.0], [0.0, 1.0]])) == 0.0


def test_s_emb_hand_example():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]) / np.array([[1], [1], [math.sqrt(2)]])
    g = LayerGraph.from_lists(0, [[], [], [0, 1]])
    assert embedding_similarity(g, x) == pytest.approx(0.70710678, abs=1e-8)


def test_s_emb_from_edges_matches_features(rng):
    x = rng.standard_normal((30, 6))
    g = knn_graph(x, 4)
    assert embedding_similarity_from_edges(g) == pytest.approx(embedding_similarity(g, x), abs=1e-12)


def test_empty_edge_set_errors():
    g = LayerGraph.from_lists(0, [[], []])
    with pytest.raises(ValidationError):
        embedding_similarity(g, np.ones((2, 2)))
    with pytest.raises(ValidationError):
        spatial_distance(g, grid_coords()[:2])
    with pytest.raises(ValidationError):
        modularity(g, np.array([True, False]))


# spatial distance

def test_distance_single_edge():
    coords = grid_coords()
    a, b = 0, 2 * 14 + 3
    neighbors = [[] for _ in range(196)]
    neighbors[b] = [a]
    assert spatial_distance(LayerGraph.from_lists(0, neighbors), coords) == 5.0


def test_distance_two_edges():
    coords = grid_coords()
    neighbors = [[] for _ in range(196)]
    neighbors[15] = [0]  # (1, 1)
    neighbors[2] = [0]  # (0, 2)
    assert spatial_distance(LayerGraph.from_lists(0, neighbors), coords) == 2.0


def test_distance_matches_oracle_and_bounds(rng):
    g = knn_graph(rng.standard_normal((196, 8)), 9)
    d = spatial_distance(g, grid_coords())
    assert d == pytest.approx(mean_manhattan(lists(g), grid_coords()), abs=1e-12)
    assert 1.0 <= d <= 26.0


# visual similarity

def test_s_vis_uniform_image(rng):
    grid = partition(ImageRGB(np.full((224, 224, 3), 90, np.uint8)))
    g = knn_graph(rng.standard_normal((196, 4)), 5)
    assert visual_similarity(g, grid) == pytest.approx(1.0, abs=1e-12)


def test_s_vis_black_white_is_zero():
    data = np.zeros((224, 224, 3), np.uint8)
    data[:16, 16:32] = 255  # patch 1 white, patch 0 black
    neighbors = [[] for _ in range(196)]
    neighbors[1] = [0]
    assert visual_similarity(LayerGraph.from_lists(0, neighbors), partition(ImageRGB(data))) == 0.0


def test_s_vis_random_matches_oracle(rng):
    grid = partition(ImageRGB(rng.integers(0, 256, (224, 224, 3), dtype=np.uint8)))
    g = knn_graph(rng.standard_normal((196, 8)), 3)
    flat = flatten_patches(grid)
    assert visual_similarity(g, grid) == pytest.approx(mean_edge_cos(lists(g), flat), abs=1e-9)


# layer prediction

def test_prediction_zero_head():
    w = init_weights(ModelConfig(num_layers=1, hidden_dim=4, num_classes=4))
    w.head_w[:] = 0
    x = np.random.default_rng(0).standard_normal((196, 4))
    for y in range(4):
        p, hit = layer_prediction(x, w, y)
        assert p == pytest.approx(0.25, abs=1e-12)
        assert hit == (y == 0)


def test_prediction_dominant_logit():
    w = init_weights(ModelConfig(num_layers=1, hidden_dim=4, num_classes=5))
    w.head_w[:] = 0
    w.head_b[:] = [0, 0, 50, 0, 0]
    p, hit = layer_prediction(np.zeros((196, 4)), w, 2)
    assert p > 0.999 and hit
    assert p == pytest.approx(math.exp(50) / (math.exp(50) + 4), rel=1e-12)


def test_prediction_label_range(small_weights):
    with pytest.raises(ValidationError):
        layer_prediction(np.zeros((196, 8)), small_weights, 5)


def test_prediction_matches_trace(small_weights, rng):
    grid = partition(ImageRGB(rng.integers(0, 256, (224, 224, 3), dtype=np.uint8)))
    t = forward(grid, small_weights)
    for l in (1, 2):
        p, _ = layer_prediction(t.features[l], small_weights, 3)
        assert p == pytest.approx(t.probs[l - 1][3], abs=1e-6)


# modularity

def test_modularity_two_cliques():
    g = LayerGraph.from_lists(0, [[1], [0], [3], [2]])
    q, b = modularity(g, np.array([True, True, False, False]))
    assert q == 0.5
    assert (b.l_obj, b.l_bg, b.cross_edges) == (2, 2, 0)


def test_modularity_all_cross():
    g = LayerGraph.from_lists(0, [[2], [3], [0], [1]])
    q, b = modularity(g, np.array([True, True, False, False]))
    assert q == -0.5
    assert b.cross_edges == 4


def test_modularity_all_object(rng):
    g = knn_graph(rng.standard_normal((10, 3)), 3)
    q, b = modularity(g, np.ones(10, bool))
    e = g.num_edges
    assert q == 1 - (e / 2) ** 2
    assert b.k_in_bg == b.k_out_bg == b.l_bg == 0


def test_modularity_leicht_newman_variant():
    g = LayerGraph.from_lists(0, [[1, 2], [0], [3], [2]])
    mask = np.array([True, True, False, False])
    q, _ = modularity(g, mask, "leicht-newman")
    assert q == pytest.approx(brute_modularity(lists(g), mask, "leicht-newman"), abs=1e-12)


def test_modularity_unknown_variant():
    g = LayerGraph.from_lists(0, [[1], [0]])
    with pytest.raises(ValidationError):
        modularity(g, np.array([True, False]), "newman")


def test_modularity_accepts_patch_mask(rng):
    g = knn_graph(rng.standard_normal((196, 4)), 9)
    bits = rng.integers(0, 2, 196).astype(bool)
    assert modularity(g, PatchMask(bits))[0] == modularity(g, bits)[0]


# analyze / aggregate

@pytest.fixture
def analyzed(small_weights, rng):
    grid = partition(ImageRGB(rng.integers(0, 256, (224, 224, 3), dtype=np.uint8)))
    t = forward(grid, small_weights, label=1)
    mask = PatchMask(rng.integers(0, 2, 196).astype(bool))
    return t, grid, mask


def test_analyze_all_fields(analyzed, small_weights):
    t, grid, mask = analyzed
    rows = analyze_trace(t, grid, mask=mask, label=1, weights=small_weights)
    assert len(rows) == 2
    for r in rows:
        assert None not in (r.s_emb, r.d, r.s_vis, r.p, r.top1_hit, r.q)


def test_analyze_absent_inputs(analyzed):
    t, grid, _ = analyzed
    t.label = None
    rows = analyze_trace(t, grid)
    assert all(r.q is None and r.p is None and r.top1_hit is None for r in rows)


def test_analyze_matches_standalone(analyzed, small_weights):
    t, grid, mask = analyzed
    rows = analyze_trace(t, grid, mask=mask, label=1, weights=small_weights)
    for l, r in enumerate(rows, start=1):
        g = t.graphs[l - 1]
        assert r.s_emb == embedding_similarity(g, t.features[l - 1])
        assert r.d == spatial_distance(g, grid.coords)
        assert r.s_vis == visual_similarity(g, grid)
        assert (r.p, r.top1_hit) == layer_prediction(t.features[l], small_weights, 1)
        assert r.q == modularity(g, mask)[0]


def test_analyze_without_features_uses_stored(analyzed, small_weights):
    t, grid, mask = analyzed
    full = analyze_trace(t, grid, mask=mask, label=1, weights=small_weights)
    lean = analyze_trace(t.without_features(), grid, mask=mask, label=1)
    for a, b in zip(full, lean):
        assert a.s_emb == pytest.approx(b.s_emb, abs=1e-6)
        assert a.p == pytest.approx(b.p, abs=1e-6)
        assert (a.d, a.s_vis, a.q) == (b.d, b.s_vis, b.q)


def rows_with(values, **extra):
    return [LayerMetrics(layer=l, s_emb=0.9, d=3.0, s_vis=v, **extra) for l, v in enumerate(values, start=1)]


def test_aggregate_pairs_labels():
    rows = aggregate([rows_with([0.5] * 16)])
    assert [r.layers for r in rows] == [f"{l}-{l + 1}" for l in range(1, 16, 2)]


def test_aggregate_means():
    a = rows_with([0.6, 0.6, 0.1, 0.1])
    b = rows_with([0.8, 0.8, 0.3, 0.3])
    out = aggregate([a, b])
    assert out[0].s_vis == pytest.approx(0.7, abs=1e-12)
    assert out[1].s_vis == pytest.approx(0.2, abs=1e-12)
    assert out[0].q is None and out[0].acc is None


def test_aggregate_accuracy_later_layer():
    a = rows_with([0.5, 0.5], p=0.2, top1_hit=False)
    a[1].top1_hit = True
    b = rows_with([0.5, 0.5], p=0.4, top1_hit=True)
    b[1].top1_hit = False
    c = rows_with([0.5, 0.5], p=0.6, top1_hit=True)
    out = aggregate([a, b, c])
    assert out[0].acc == pytest.approx(2 / 3)
    assert out[0].p == pytest.approx(0.4)


def test_aggregate_odd_layers_and_per_layer():
    rep = rows_with([0.1, 0.2, 0.3])
    assert [r.layers for r in aggregate([rep])] == ["1-2", "3"]
    assert [r.layers for r in aggregate([rep], paired=False)] == ["1", "2", "3"]


def test_aggregate_errors():
    with pytest.raises(ValidationError):
        aggregate([])
    with pytest.raises(ValidationError):
        aggregate([rows_with([0.1, 0.2]), rows_with([0.1])])


def test_report_csv_roundtrip(analyzed, small_weights, tmp_path):
    t, grid, mask = analyzed
    rows = analyze_trace(t, grid, mask=mask, label=1, weights=small_weights)
    p = tmp_path / "x.metrics.csv"
    write_metrics_csv(p, "x", rows)
    image_id, back = read_metrics_csv(p)
    assert image_id == "x"
    assert back == rows
    header = p.read_text().splitlines()[0]
    assert header == "image_id,layer,S_vis,D,S_emb,Q,p,top1_hit"


def test_report_json(analyzed, tmp_path):
    import json

    t, grid, _ = analyzed
    rows = analyze_trace(t, grid)
    p = tmp_path / "x.json"
    write_metrics_json(p, "x", rows)
    recs = json.loads(p.read_text())
    assert len(recs) == 2 and recs[0]["Q"] is None and recs[0]["layer"] == 1


def test_absent_cells_are_empty(analyzed):
    t, grid, _ = analyzed
    t.label = None
    line = metrics_csv("x", analyze_trace(t, grid)).splitlines()[1]
    assert line.endswith(",,,")


def test_aggregate_csv_format():
    text = aggregate_csv(aggregate([rows_with([0.6, 0.8])]))
    assert text.splitlines() == ["layers,S_vis,D,S_emb,Q,p,acc", "1-2,0.700000,3.000000,0.900000,,,"]
