"""Image and mask types plus the resize / patch-grid operations."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import AmbiguousMaskError, UnsupportedFormatError, ValidationError
from .codecs import decode_png, decode_pnm, encode_png, sniff

IMAGE_SIZE = 224
PATCH_SIZE = 16
GRID_SIZE = IMAGE_SIZE // PATCH_SIZE  # 14
NUM_PATCHES = GRID_SIZE * GRID_SIZE  # 196
PATCH_DIM = PATCH_SIZE * PATCH_SIZE * 3  # 768


@dataclass(frozen=True, eq=False)
class ImageRGB:
    """8-bit RGB image; ``data`` has shape ``(height, width, 3)``."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.dtype != np.uint8 or d.ndim != 3 or d.shape[2] != 3:
            raise ValidationError(f"expected (H, W, 3) uint8 array, got {d.dtype} {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValidationError("image must be at least 1x1")

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[0]

    def __eq__(self, other):
        return isinstance(other, ImageRGB) and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class PatchGrid:
    """The 14x14 grid of 16x16 RGB patches of a 224x224 image.

    ``patches[i]`` sits at grid position ``coords[i] == (i // 14, i % 14)``.
    """

    patches: np.ndarray  # (196, 16, 16, 3) uint8
    coords: np.ndarray  # (196, 2) int64, (row, col)
    source_size: tuple = (IMAGE_SIZE, IMAGE_SIZE)

    def __len__(self):
        return len(self.patches)


@dataclass(frozen=True, eq=False)
class PixelMask:
    bits: np.ndarray  # (height, width) bool

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def height(self):
        return self.bits.shape[0]


@dataclass(frozen=True, eq=False)
class PatchMask:
    bits: np.ndarray  # (196,) bool, indexed like PatchGrid

    def __post_init__(self):
        if self.bits.shape != (NUM_PATCHES,):
            raise ValidationError(f"patch mask must have {NUM_PATCHES} entries, got {self.bits.shape}")


def grid_coords(grid_size=GRID_SIZE):
    idx = np.arange(grid_size * grid_size)
    return np.stack([idx // grid_size, idx % grid_size], axis=1)


def _decode_file(path):
    data = Path(path).read_bytes()
    kind = sniff(data)
    if kind == "png":
        return decode_png(data)
    if kind == "pnm":
        return decode_pnm(data)
    raise UnsupportedFormatError(f"{path}: not a PNG or binary PPM/PGM file")


def load_image(path):
    """Decode a PNG or binary PPM/PGM file into an :class:`ImageRGB`.

    Alpha is dropped and single-channel images are replicated to RGB.
    Missing or unreadable files raise ``OSError``.
    """
    arr = _decode_file(path)
    channels = arr.shape[2]
    if channels in (1, 2):
        arr = np.repeat(arr[..., :1], 3, axis=2)
    elif channels == 4:
        arr = arr[..., :3]
    return ImageRGB(np.ascontiguousarray(arr))


def save_image(img, path):
    Path(path).write_bytes(encode_png(img.data))


def resize_bilinear(img, out_w, out_h):
    """Bilinear resize with half-pixel-centre sampling and edge clamping.

    Interpolation runs in float64; the result is rounded half-up once.
    """
    if out_w < 1 or out_h < 1:
        raise ValidationError(f"output size must be positive, got {out_w}x{out_h}")
    src = img.data.astype(np.float64)

    def axis_weights(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0.0, n_in - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis_weights(img.height, out_h)
    x0, x1, fx = axis_weights(img.width, out_w)
    rows = src[y0] * (1 - fy)[:, None, None] + src[y1] * fy[:, None, None]
    out = rows[:, x0] * (1 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return ImageRGB(out)


def partition(img):
    if (img.width, img.height) != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValidationError(
            f"partition needs a {IMAGE_SIZE}x{IMAGE_SIZE} image, got {img.width}x{img.height}"
        )
    p = PATCH_SIZE
    patches = (
        img.data.reshape(GRID_SIZE, p, GRID_SIZE, p, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(NUM_PATCHES, p, p, 3)
    )
    return PatchGrid(np.ascontiguousarray(patches), grid_coords())


def reassemble(grid):
    p = PATCH_SIZE
    data = (
        grid.patches.reshape(GRID_SIZE, GRID_SIZE, p, p, 3)
        .transpose(0, 2, 1, 3, 4)
        .reshape(IMAGE_SIZE, IMAGE_SIZE, 3)
    )
    return ImageRGB(np.ascontiguousarray(data))


def prepare(img):
    """Resize to 224x224 (when needed) and partition."""
    if (img.width, img.height) != (IMAGE_SIZE, IMAGE_SIZE):
        img = resize_bilinear(img, IMAGE_SIZE, IMAGE_SIZE)
    return img, partition(img)


def flatten_patches(grid):
    """All patches as a ``(N, 768)`` float64 matrix in [0, 1].

    Each row is the patch read row by row, left to right, with the R, G, B
    samples of a pixel adjacent: index ``(y * 16 + x) * 3 + channel``.
    """
    return grid.patches.reshape(len(grid.patches), -1).astype(np.float64) / 255.0


def flatten_patch(grid, i):
    if not 0 <= i < len(grid.patches):
        raise IndexError(f"patch index {i} out of range [0, {len(grid.patches)})")
    return grid.patches[i].reshape(-1).astype(np.float64) / 255.0


def _parse_text_mask(data, path):
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise AmbiguousMaskError(f"{path}: not an image and not a text grid") from exc
    rows = [line.split() for line in text.splitlines() if line.strip()]
    if not rows:
        raise AmbiguousMaskError(f"{path}: empty mask file")
    width = len(rows[0])
    for r, row in enumerate(rows):
        if len(row) != width:
            raise AmbiguousMaskError(f"{path}: row {r} has {len(row)} tokens, expected {width}")
        bad = [t for t in row if t not in ("0", "1")]
        if bad:
            raise AmbiguousMaskError(f"{path}: row {r} has non-binary token {bad[0]!r}")
    return np.array([[t == "1" for t in row] for row in rows], dtype=bool)


def load_mask(path):
    """Read a binary object mask: gray PNG/PGM or a whitespace 0/1 text grid.

    Any nonzero pixel counts as object. Colour images are accepted only when
    all three channels agree, otherwise the mask is ambiguous.
    """
    data = Path(path).read_bytes()
    kind = sniff(data)
    if kind is None:
        return PixelMask(_parse_text_mask(data, path))
    arr = decode_png(data) if kind == "png" else decode_pnm(data)
    if arr.shape[2] in (2, 4):
        arr = arr[..., :-1]
    if arr.shape[2] == 3:
        if not (np.array_equal(arr[..., 0], arr[..., 1]) and np.array_equal(arr[..., 0], arr[..., 2])):
            raise AmbiguousMaskError(f"{path}: colour mask with differing channels")
    return PixelMask(arr[..., 0] != 0)


def resize_mask_nearest(mask, out_w, out_h):
    """Nearest-neighbour resize using the same half-pixel centre convention."""
    ys = np.minimum(((np.arange(out_h) + 0.5) * mask.height / out_h).astype(np.int64), mask.height - 1)
    xs = np.minimum(((np.arange(out_w) + 0.5) * mask.width / out_w).astype(np.int64), mask.width - 1)
    return PixelMask(mask.bits[np.ix_(ys, xs)])


def downsample_mask(mask, threshold=0.5):
    """Reduce a pixel mask to patch granularity.

    A 224x224 mask marks a patch as object when at least ``threshold`` of
    its 256 pixels are set; a 14x14 mask maps one bit per patch.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold must lie in [0, 1], got {threshold}")
    shape = mask.bits.shape
    if shape == (GRID_SIZE, GRID_SIZE):
        return PatchMask(mask.bits.reshape(-1).copy())
    if shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValidationError(
            f"mask must be {IMAGE_SIZE}x{IMAGE_SIZE} or {GRID_SIZE}x{GRID_SIZE}, got {shape[1]}x{shape[0]}"
        )
    p = PATCH_SIZE
    counts = mask.bits.reshape(GRID_SIZE, p, GRID_SIZE, p).sum(axis=(1, 3)).reshape(-1)
    # integer comparison avoids float rounding at the boundary
    return PatchMask(counts >= threshold * p * p)
