"""Model parameters, seeded initialisation and the ``.vxw`` container.

Container layout (all integers little-endian)::

    magic      8 bytes  b"VIGXRAYW"
    version    u32      currently 1
    cfg_len    u32      length of the JSON config that follows
    cfg        cfg_len bytes, UTF-8 JSON of ModelConfig (sorted keys)
    count      u32      number of tensors
    count x:
        name_len u16, name (UTF-8)
        ndim     u8, dims ndim x u32
        payload  prod(dims) x f32
"""

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ConsistencyError, FormatError, TruncatedError, VersionError
from .config import ModelConfig
from .rng import Xoshiro256

MAGIC = b"VIGXRAYW"
VERSION = 1

_BLOCK_FIELDS = ("w_in", "b_in", "w_update", "b_update", "w_out", "b_out", "w1", "b1", "w2", "b2")


@dataclass(frozen=True, eq=False)
class BlockWeights:
    w_in: np.ndarray  # (D, D)
    b_in: np.ndarray
    w_update: np.ndarray  # (2D, D); block structured when num_heads > 1
    b_update: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    w1: np.ndarray  # (D, ffn_ratio * D)
    b1: np.ndarray
    w2: np.ndarray  # (ffn_ratio * D, D)
    b2: np.ndarray


@dataclass(frozen=True, eq=False)
class ModelWeights:
    config: ModelConfig
    stem_w: np.ndarray  # (768, D)
    stem_b: np.ndarray  # (D,)
    pos_enc: np.ndarray  # (N, D)
    blocks: tuple
    head_w: np.ndarray  # (D, C)
    head_b: np.ndarray  # (C,)

    def tensors(self):
        """Named tensors in canonical (file and initialisation) order."""
        out = {"stem.weight": self.stem_w, "stem.bias": self.stem_b, "pos_enc": self.pos_enc}
        for l, blk in enumerate(self.blocks, start=1):
            for name in _BLOCK_FIELDS:
                out[f"blocks.{l}.{name}"] = getattr(blk, name)
        out["head.weight"] = self.head_w
        out["head.bias"] = self.head_b
        return out

    def equal(self, other):
        """Bitwise equality of config and every tensor."""
        if self.config != other.config:
            return False
        a, b = self.tensors(), other.tensors()
        return a.keys() == b.keys() and all(
            a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a
        )

    def with_zero_blocks(self):
        """Copy with every block parameter set to zero (residual-identity check)."""
        zero = tuple(
            BlockWeights(**{n: np.zeros_like(getattr(blk, n)) for n in _BLOCK_FIELDS})
            for blk in self.blocks
        )
        return replace(self, blocks=zero)


def expected_shapes(cfg):
    d, n, c, f = cfg.hidden_dim, cfg.num_nodes, cfg.num_classes, cfg.ffn_dim
    shapes = {"stem.weight": (cfg.patch_dim, d), "stem.bias": (d,), "pos_enc": (n, d)}
    block = {
        "w_in": (d, d), "b_in": (d,),
        "w_update": (2 * d, d), "b_update": (d,),
        "w_out": (d, d), "b_out": (d,),
        "w1": (d, f), "b1": (f,),
        "w2": (f, d), "b2": (d,),
    }
    for l in range(1, cfg.num_layers + 1):
        for name, shape in block.items():
            shapes[f"blocks.{l}.{name}"] = shape
    shapes["head.weight"] = (d, c)
    shapes["head.bias"] = (c,)
    return shapes


def head_mask(cfg):
    """Boolean (2D, D) pattern of the per-head update blocks.

    Head ``h`` maps rows ``[x_h ; m_h]`` (its slice of the node feature and
    of the max-relative term) to output columns ``h``.
    """
    d, hd = cfg.hidden_dim, cfg.head_dim
    mask = np.zeros((2 * d, d), dtype=bool)
    for h in range(cfg.num_heads):
        s = slice(h * hd, (h + 1) * hd)
        mask[s, s] = True
        mask[d + h * hd:d + (h + 1) * hd, s] = True
    return mask


def _from_tensors(cfg, tensors):
    blocks = tuple(
        BlockWeights(**{name: tensors[f"blocks.{l}.{name}"] for name in _BLOCK_FIELDS})
        for l in range(1, cfg.num_layers + 1)
    )
    return ModelWeights(
        config=cfg,
        stem_w=tensors["stem.weight"],
        stem_b=tensors["stem.bias"],
        pos_enc=tensors["pos_enc"],
        blocks=blocks,
        head_w=tensors["head.weight"],
        head_b=tensors["head.bias"],
    )


def init_weights(cfg):
    """Seeded initialisation.

    Matrices are uniform on [-1, 1) scaled by ``1/sqrt(fan_in)``, drawn in
    canonical tensor order from one :class:`Xoshiro256` stream; biases are
    zero. The positional encoding uses fan-in ``D``. With several heads the
    off-block entries of each update matrix are zero and its fan-in is
    ``2 * head_dim``.
    """
    rng = Xoshiro256(cfg.seed)
    mask = head_mask(cfg)
    tensors = {}
    for name, shape in expected_shapes(cfg).items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape, dtype=np.float32)
            continue
        fan_in = shape[0]
        if name == "pos_enc":
            fan_in = cfg.hidden_dim
        elif name.endswith("w_update"):
            fan_in = 2 * cfg.head_dim
        values = rng.uniform(shape[0] * shape[1]).reshape(shape) / np.sqrt(fan_in)
        if name.endswith("w_update"):
            values = np.where(mask, values, 0.0)
        tensors[name] = values.astype(np.float32)
    return _from_tensors(cfg, tensors)


def save_weights(w, path):
    cfg_bytes = json.dumps(w.config.to_dict(), sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg_bytes)), cfg_bytes]
    tensors = w.tensors()
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data, what):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"{self.what}: needed {n} bytes at offset {self.pos}, file has {len(self.data)}"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights(path):
    data = Path(path).read_bytes()
    r = _Reader(data, f"weights file {path}")
    if r.take(len(MAGIC)) != MAGIC:
        raise FormatError(f"{path}: not a weights container (bad magic)")
    version, cfg_len = r.unpack("<II")
    if version != VERSION:
        raise VersionError(f"{path}: weights version {version}, expected {VERSION}")
    try:
        cfg = ModelConfig.from_dict(json.loads(r.take(cfg_len).decode()))
    except TruncatedError:
        raise
    except Exception as exc:
        raise ConsistencyError(f"{path}: invalid config header: {exc}") from exc
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
        tensors[name] = arr
    if r.pos != len(data):
        raise ConsistencyError(f"{path}: {len(data) - r.pos} trailing bytes after tensor table")
    expected = expected_shapes(cfg)
    if tensors.keys() != expected.keys():
        missing = sorted(expected.keys() - tensors.keys())
        extra = sorted(tensors.keys() - expected.keys())
        raise ConsistencyError(f"{path}: tensor names differ (missing {missing}, extra {extra})")
    for name, shape in expected.items():
        if tensors[name].shape != shape:
            raise ConsistencyError(
                f"{path}: tensor {name} has shape {tensors[name].shape}, config implies {shape}"
            )
        if not np.all(np.isfinite(tensors[name])):
            raise ConsistencyError(f"{path}: tensor {name} has non-finite values")
    return _from_tensors(cfg, tensors)
