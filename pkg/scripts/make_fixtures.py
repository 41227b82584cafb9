"""Regenerate the committed test fixtures under tests/data/.

    python scripts/make_fixtures.py            # image, masks, golden heatmaps
    python scripts/make_fixtures.py --check    # compare instead of overwrite

The golden heatmaps come from running the CLI end to end on the fixture
image with seed-7 weights (L=16, D=64, K=9, C=10), patch (5, 7), layers 4
and 10. Inspect them by eye after regenerating.
"""

import argparse
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from vigxray.cli import main as cli
from vigxray.imaging import encode_png

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"
GOLDEN_ARGS = dict(seed=7, layers=16, dim=64, k=9, classes=10, patch=(5, 7), heatmap_layers=(4, 10))


def fixture_image():
    """Sky gradient, striped ground, and a round orange 'object'."""
    h = w = 224
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w, 3), dtype=np.float64)
    sky = yy < 150
    img[..., 0] = np.where(sky, 90 + 0.4 * yy, 60 + 40 * ((xx // 12) % 2))
    img[..., 1] = np.where(sky, 140 + 0.5 * yy, 120 + 30 * ((xx // 12) % 2))
    img[..., 2] = np.where(sky, 230 - 0.3 * yy, 50)
    disk = (yy - 100) ** 2 + (xx - 120) ** 2 < 55**2
    shade = 1.0 - 0.004 * np.hypot(yy - 85, xx - 105)
    img[disk] = np.stack([250 * shade, 150 * shade, 30 * shade], axis=-1)[disk]
    return np.clip(np.rint(img), 0, 255).astype(np.uint8), disk


def write_fixtures(out):
    img, disk = fixture_image()
    (out / "fixture.png").write_bytes(encode_png(img))
    (out / "fixture_mask.png").write_bytes(encode_png(disk.astype(np.uint8) * 255))
    patch_bits = disk.reshape(14, 16, 14, 16).mean(axis=(1, 3)) >= 0.5
    (out / "fixture_mask.txt").write_text(
        "\n".join(" ".join("1" if b else "0" for b in row) for row in patch_bits) + "\n"
    )
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        a = GOLDEN_ARGS
        weights = tmp / "w.vxw"
        cli(["init-weights", "--seed", str(a["seed"]), "--layers", str(a["layers"]), "--dim", str(a["dim"]),
             "--k", str(a["k"]), "--classes", str(a["classes"]), "-o", str(weights)])
        cli(["analyze", "--image", str(out / "fixture.png"), "--weights", str(weights),
             "--mask", str(out / "fixture_mask.png"), "--label", "3", "-o", str(tmp)])
        cli(["heatmap", "--image", str(out / "fixture.png"), "--trace", str(tmp / "fixture.trace"),
             "--patch", "%d,%d" % a["patch"], "--layers", ",".join(map(str, a["heatmap_layers"])),
             "-o", str(tmp / "golden")])
        golden = out / "golden"
        golden.mkdir(exist_ok=True)
        for png in sorted((tmp / "golden").glob("*.png")):
            shutil.copyfile(png, golden / png.name)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true")
    args = ap.parse_args()
    if not args.check:
        DATA.mkdir(parents=True, exist_ok=True)
        write_fixtures(DATA)
        print(f"fixtures written to {DATA}")
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        write_fixtures(tmp)
        bad = [p.relative_to(tmp) for p in sorted(tmp.rglob("*.*"))
               if p.read_bytes() != (DATA / p.relative_to(tmp)).read_bytes()]
    for p in bad:
        print(f"differs: {p}")
    return 1 if bad else 0


if __name__ == "__main__":
    sys.exit(main())
