"""Serialized record of one forward pass, and the dataset manifest format.

Trace file layout::

    b"VIGXRAY-TRACE <version>\\n"
    <one line of JSON header>\\n
    sections, each starting with a 4-byte tag:
      b"FEAT" u32 index, u32 n, u32 d, n*d f32          (X^index)
      b"GRPH" u32 layer, u32 n, u32 e, n*u32 in-degree,
              e*i32 source node, e*f64 edge similarity  (grouped by destination)
      b"HEAD" u32 layer, u32 c, c*f32 logits, c*f64 probabilities
      b"END\\0"

All numbers are little-endian. Sections appear as ``FEAT 0`` and then
``GRPH l, FEAT l, HEAD l`` for each layer; ``FEAT`` sections are absent when
features were elided.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConsistencyError,
    FormatError,
    TraceInvariantError,
    TruncatedError,
    ValidationError,
    VersionError,
)
from .model.config import ModelConfig
from .model.graph import LayerGraph

MAGIC = b"VIGXRAY-TRACE"
VERSION = 1
PROB_TOL = 1e-6


@dataclass(eq=False)
class Trace:
    config: ModelConfig
    features: list | None  # L + 1 float32 (N, D) arrays, or None when elided
    graphs: list  # L LayerGraph, graphs[l - 1].layer == l
    logits: np.ndarray  # (L, C) float32
    probs: np.ndarray  # (L, C) float64
    label: int | None = None
    image_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def num_layers(self):
        return len(self.graphs)

    @property
    def prediction(self):
        """Final-layer argmax, ties to the smaller class index."""
        return int(np.argmax(self.probs[-1]))

    @property
    def has_features(self):
        return self.features is not None

    def graph(self, layer):
        if not 1 <= layer <= self.num_layers:
            raise ValidationError(f"layer {layer} outside [1, {self.num_layers}]")
        return self.graphs[layer - 1]

    def without_features(self):
        return Trace(self.config, None, self.graphs, self.logits, self.probs,
                     self.label, self.image_id, dict(self.meta))

    def validate(self):
        cfg = self.config
        L = cfg.num_layers
        if len(self.graphs) != L:
            raise ConsistencyError(f"trace has {len(self.graphs)} graphs, config says {L} layers")
        if self.features is not None:
            if len(self.features) != L + 1:
                raise ConsistencyError(f"trace has {len(self.features)} feature blocks, expected {L + 1}")
            for i, x in enumerate(self.features):
                if x.shape != (cfg.num_nodes, cfg.hidden_dim):
                    raise ConsistencyError(f"features X^{i} shape {x.shape}")
                if not np.all(np.isfinite(x)):
                    raise ConsistencyError(f"features X^{i} contain non-finite values")
        if self.logits.shape != (L, cfg.num_classes) or self.probs.shape != (L, cfg.num_classes):
            raise ConsistencyError("head output shapes do not match config")
        for l, g in enumerate(self.graphs, start=1):
            validate_graph(g, l, cfg.k_at(l), cfg.num_nodes)
            row = self.probs[l - 1]
            if not np.all(np.isfinite(row)) or row.min() < 0 or abs(row.sum() - 1.0) > PROB_TOL:
                raise TraceInvariantError(f"layer {l}: probabilities do not form a distribution", layer=l)
        if self.label is not None and not 0 <= self.label < cfg.num_classes:
            raise ConsistencyError(f"label {self.label} outside [0, {cfg.num_classes})")


def validate_graph(g, layer, k, n):
    if g.layer != layer:
        raise TraceInvariantError(f"graph at position {layer} is labelled layer {g.layer}", layer=layer)
    if g.num_nodes != n:
        raise TraceInvariantError(f"layer {layer}: graph has {g.num_nodes} nodes, expected {n}", layer=layer)
    deg = g.degrees_in()
    bad = np.flatnonzero(deg != k)
    if len(bad):
        i = int(bad[0])
        raise TraceInvariantError(
            f"layer {layer}, node {i}: {int(deg[i])} in-neighbours, expected K={k}", layer=layer, node=i
        )
    for i in range(n):
        nb = g.neighbors(i)
        if np.any((nb < 0) | (nb >= n)):
            raise TraceInvariantError(f"layer {layer}, node {i}: neighbour index out of range", layer=layer, node=i)
        if np.any(nb == i):
            raise TraceInvariantError(f"layer {layer}, node {i}: self-loop", layer=layer, node=i)
        if len(np.unique(nb)) != len(nb):
            raise TraceInvariantError(f"layer {layer}, node {i}: duplicate neighbour", layer=layer, node=i)
    if not np.all(np.isfinite(g.sims)) or np.any(np.abs(g.sims) > 1.0):
        raise TraceInvariantError(f"layer {layer}: edge similarity outside [-1, 1]", layer=layer)


def _header(t):
    return {
        "version": VERSION,
        "config": t.config.to_dict(),
        "num_layers": t.num_layers,
        "num_nodes": t.config.num_nodes,
        "hidden_dim": t.config.hidden_dim,
        "num_classes": t.config.num_classes,
        "has_features": t.has_features,
        "image_id": t.image_id,
        "label": t.label,
        "prediction": t.prediction,
        "meta": t.meta,
    }


def _feat(index, x):
    n, d = x.shape
    return b"FEAT" + struct.pack("<III", index, n, d) + np.ascontiguousarray(x, dtype="<f4").tobytes()


def write_trace(t, path):
    parts = [MAGIC + b" %d\n" % VERSION, json.dumps(_header(t), sort_keys=True).encode() + b"\n"]
    if t.has_features:
        parts.append(_feat(0, t.features[0]))
    for l, g in enumerate(t.graphs, start=1):
        parts.append(b"GRPH" + struct.pack("<III", l, g.num_nodes, g.num_edges))
        parts.append(g.degrees_in().astype("<u4").tobytes())
        parts.append(g.indices.astype("<i4").tobytes())
        parts.append(g.sims.astype("<f8").tobytes())
        if t.has_features:
            parts.append(_feat(l, t.features[l]))
        c = t.logits.shape[1]
        parts.append(b"HEAD" + struct.pack("<II", l, c))
        parts.append(t.logits[l - 1].astype("<f4").tobytes())
        parts.append(t.probs[l - 1].astype("<f8").tobytes())
    parts.append(b"END\0")
    Path(path).write_bytes(b"".join(parts))


class _Cursor:
    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedError(f"{self.path}: truncated at offset {self.pos} (needed {n} more bytes)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, count):
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()

    def line(self):
        end = self.data.find(b"\n", self.pos)
        if end < 0:
            raise TruncatedError(f"{self.path}: header line not terminated")
        out = self.data[self.pos:end]
        self.pos = end + 1
        return out


def _parse_sections(cur):
    """Yield ``(tag, index, payload)`` until the END tag."""
    while True:
        tag = cur.take(4)
        if tag == b"END\0":
            return
        if tag == b"FEAT":
            idx, n, d = cur.unpack("<III")
            yield tag, idx, cur.array("<f4", n * d).astype(np.float32).reshape(n, d)
        elif tag == b"GRPH":
            layer, n, e = cur.unpack("<III")
            deg = cur.array("<u4", n).astype(np.int64)
            idx = cur.array("<i4", e).astype(np.int64)
            sims = cur.array("<f8", e).astype(np.float64)
            if deg.sum() != e:
                raise ConsistencyError(f"{cur.path}: layer {layer} degrees sum to {deg.sum()}, edge count {e}")
            indptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
            yield tag, layer, LayerGraph(layer, indptr, idx, sims)
        elif tag == b"HEAD":
            layer, c = cur.unpack("<II")
            logits = cur.array("<f4", c).astype(np.float32)
            probs = cur.array("<f8", c).astype(np.float64)
            yield tag, layer, (logits, probs)
        else:
            raise ConsistencyError(f"{cur.path}: unknown section tag {tag!r} at offset {cur.pos - 4}")


def _open(path):
    data = Path(path).read_bytes()
    cur = _Cursor(data, path)
    first = cur.line()
    if not first.startswith(MAGIC + b" "):
        raise FormatError(f"{path}: not a trace file (bad magic)")
    try:
        version = int(first[len(MAGIC) + 1:])
    except ValueError as exc:
        raise VersionError(f"{path}: unreadable version field {first!r}") from exc
    if version != VERSION:
        raise VersionError(f"{path}: trace version {version}, expected {VERSION}")
    try:
        header = json.loads(cur.line())
    except ValueError as exc:
        raise ConsistencyError(f"{path}: malformed header: {exc}") from exc
    return cur, header


def trace_sections(path):
    """List of ``(tag, index)`` pairs in file order; for inspection and tests."""
    cur, _ = _open(path)
    return [(tag.decode(), idx) for tag, idx, _ in _parse_sections(cur)]


def read_trace(path):
    cur, header = _open(path)
    try:
        cfg = ModelConfig.from_dict(header["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConsistencyError(f"{path}: invalid config in header: {exc}") from exc
    feats, graphs, heads = {}, [], []
    for tag, idx, payload in _parse_sections(cur):
        if tag == b"FEAT":
            feats[idx] = payload
        elif tag == b"GRPH":
            graphs.append(payload)
        else:
            heads.append(payload)
    if cur.pos != len(cur.data):
        raise ConsistencyError(f"{path}: {len(cur.data) - cur.pos} trailing bytes after END")
    if len(heads) != len(graphs):
        raise ConsistencyError(f"{path}: {len(graphs)} graph sections but {len(heads)} head sections")
    features = None
    if header.get("has_features", True):
        if sorted(feats) != list(range(cfg.num_layers + 1)):
            raise ConsistencyError(f"{path}: feature sections {sorted(feats)} incomplete")
        features = [feats[i] for i in range(cfg.num_layers + 1)]
    c = cfg.num_classes
    logits = np.stack([h[0] for h in heads]) if heads else np.zeros((0, c), np.float32)
    probs = np.stack([h[1] for h in heads]) if heads else np.zeros((0, c))
    t = Trace(cfg, features, graphs, logits, probs, header.get("label"), header.get("image_id", ""),
              header.get("meta", {}))
    t.validate()
    if header.get("prediction") is not None and header["prediction"] != t.prediction:
        raise ConsistencyError(f"{path}: stored prediction disagrees with final-layer probabilities")
    return t


# manifests

@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: int | None = None
    mask: Path | None = None


def read_manifest(path):
    """Parse a tab-separated manifest: ``path [label [mask]]`` per line.

    Relative paths resolve against the manifest's directory; blank lines and
    lines starting with ``#`` are skipped. An empty label field means no label.
    """
    path = Path(path)
    base = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.rstrip("\n").split("\t")
        if len(cols) > 3:
            raise ValidationError(f"{path}:{lineno}: expected at most 3 tab-separated fields")
        cols += [""] * (3 - len(cols))
        item, label, mask = (c.strip() for c in cols)
        try:
            label_v = int(label) if label else None
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: label {label!r} is not an integer") from exc
        entries.append(ManifestEntry(base / item, label_v, base / mask if mask else None))
    return entries


def write_manifest(path, entries):
    lines = []
    for e in entries:
        label = "" if e.label is None else str(e.label)
        mask = "" if e.mask is None else str(e.mask)
        lines.append("\t".join([str(e.path), label, mask]).rstrip("\t"))
    Path(path).write_text("".join(l + "\n" for l in lines))
