from .codecs import decode_png, decode_pnm, encode_png, encode_ppm
from .image import (
    GRID_SIZE,
    IMAGE_SIZE,
    NUM_PATCHES,
    PATCH_DIM,
    PATCH_SIZE,
    ImageRGB,
    PatchGrid,
    PatchMask,
    PixelMask,
    downsample_mask,
    flatten_patch,
    flatten_patches,
    grid_coords,
    load_image,
    load_mask,
    partition,
    prepare,
    reassemble,
    resize_bilinear,
    resize_mask_nearest,
    save_image,
)

__all__ = [
    "decode_png",
    "decode_pnm",
    "encode_png",
    "encode_ppm",
    "GRID_SIZE",
    "IMAGE_SIZE",
    "NUM_PATCHES",
    "PATCH_DIM",
    "PATCH_SIZE",
    "ImageRGB",
    "PatchGrid",
    "PatchMask",
    "PixelMask",
    "downsample_mask",
    "flatten_patch",
    "flatten_patches",
    "grid_coords",
    "load_image",
    "load_mask",
    "partition",
    "prepare",
    "reassemble",
    "resize_bilinear",
    "resize_mask_nearest",
    "save_image",
]
