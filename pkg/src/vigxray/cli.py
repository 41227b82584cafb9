"""Command-line entry point.

Exit codes:

    0  success
    1  unexpected internal error
    2  invalid arguments or configuration (including usage errors)
    3  I/O failure (missing / unreadable / unwritable files)
    4  partial failure: some manifest items failed, the rest were written
    5  malformed input data (corrupt image, weights or trace container)
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .errors import (
    AmbiguousMaskError,
    ContainerError,
    CorruptStreamError,
    UnsupportedFormatError,
    ValidationError,
    VigxrayError,
)
from .heatmap import HeatmapSpec, render_metric_curves, write_heatmaps
from .imaging import (
    GRID_SIZE,
    IMAGE_SIZE,
    downsample_mask,
    load_image,
    load_mask,
    prepare,
    resize_mask_nearest,
)
from .metrics import (
    VARIANTS,
    aggregate,
    aggregate_csv,
    analyze_trace,
    format_table,
    read_metrics_csv,
    write_metrics_csv,
    write_metrics_json,
)
from .model import ModelConfig, forward, init_weights, load_weights, save_weights
from .trace import ManifestEntry, read_manifest, read_trace, write_manifest, write_trace

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_PARTIAL = 4
EXIT_DATA = 5

log = logging.getLogger("vigxray")


class PartialFailure(Exception):
    pass


def exit_code_for(exc):
    if isinstance(exc, PartialFailure):
        return EXIT_PARTIAL
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, (ContainerError, CorruptStreamError, UnsupportedFormatError, AmbiguousMaskError)):
        return EXIT_DATA
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, VigxrayError):
        return EXIT_VALIDATION
    return EXIT_INTERNAL


def _require_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _patch_rc(text):
    vals = _int_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected ROW,COL, got {text!r}")
    return vals


def _default_jobs():
    env = os.environ.get("VIGXRAY_THREADS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def _load_classes(path):
    if path is None:
        return None
    return [line.strip() for line in Path(path).read_text().splitlines()]


# init-weights

def cmd_init_weights(args):
    cfg = ModelConfig(
        num_layers=args.layers,
        hidden_dim=args.dim,
        k=args.k,
        k_max=args.k_max,
        num_classes=args.classes,
        num_heads=args.heads,
        ffn_ratio=args.ffn_ratio,
        seed=args.seed,
    )
    w = init_weights(cfg)
    save_weights(w, args.output)
    n_params = sum(a.size for a in w.tensors().values())
    print(f"wrote {args.output}")
    print(f"  layers={cfg.num_layers} dim={cfg.hidden_dim} k={cfg.k}"
          + (f"..{cfg.k_max}" if cfg.k_max is not None else "")
          + f" classes={cfg.num_classes} heads={cfg.num_heads} ffn_ratio={cfg.ffn_ratio}"
          f" seed={cfg.seed} params={n_params}")
    return EXIT_OK


# analyze

def _patch_mask_for(mask_path, source_size, threshold):
    mask = load_mask(mask_path)
    dims = (mask.width, mask.height)
    if dims not in ((IMAGE_SIZE, IMAGE_SIZE), (GRID_SIZE, GRID_SIZE)):
        if dims != source_size:
            raise ValidationError(
                f"{mask_path}: mask is {dims[0]}x{dims[1]}, expected {IMAGE_SIZE}x{IMAGE_SIZE}, "
                f"{GRID_SIZE}x{GRID_SIZE} or the source image size {source_size[0]}x{source_size[1]}"
            )
        mask = resize_mask_nearest(mask, IMAGE_SIZE, IMAGE_SIZE)
    return downsample_mask(mask, threshold)


def analyze_one(entry, image_id, weights, args):
    """Forward + metrics for one image; writes outputs and returns the report."""
    if entry.label is not None and not 0 <= entry.label < weights.config.num_classes:
        raise ValidationError(f"label {entry.label} outside [0, {weights.config.num_classes})")
    original = load_image(entry.path)
    _, grid = prepare(original)
    mask = None
    if entry.mask is not None:
        mask = _patch_mask_for(entry.mask, (original.width, original.height), args.threshold)
    t = forward(grid, weights, image_id=image_id, label=entry.label)
    rows = analyze_trace(t, grid, mask=mask, label=entry.label, weights=weights,
                         variant=args.modularity_variant)
    out = Path(args.out_dir)
    trace_path = None
    if not args.no_trace:
        trace_path = out / f"{image_id}.trace"
        write_trace(t.without_features() if args.no_features else t, trace_path)
    write_metrics_csv(out / f"{image_id}.metrics.csv", image_id, rows)
    write_metrics_json(out / f"{image_id}.metrics.json", image_id, rows)
    return t, rows, trace_path


def _image_ids(entries):
    seen = {}
    ids = []
    for e in entries:
        stem = e.path.stem
        n = seen.get(stem, 0)
        seen[stem] = n + 1
        ids.append(stem if n == 0 else f"{stem}_{n}")
    return ids


def cmd_analyze(args):
    _require_file(args.weights, "weights file")
    if args.manifest is not None:
        entries = read_manifest(_require_file(args.manifest, "manifest"))
        if args.mask is not None or args.label is not None:
            raise ValidationError("--mask/--label apply to --image runs; put them in the manifest instead")
    else:
        _require_file(args.image, "image")
        if args.mask is not None:
            _require_file(args.mask, "mask")
        entries = [ManifestEntry(Path(args.image), args.label, Path(args.mask) if args.mask else None)]
    if not entries:
        raise ValidationError("manifest lists no images")
    weights = load_weights(args.weights)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    classes = _load_classes(args.classes_file)
    ids = _image_ids(entries)

    def job(k):
        try:
            return analyze_one(entries[k], ids[k], weights, args), None
        except (VigxrayError, OSError) as exc:
            return None, exc

    jobs = args.jobs or _default_jobs()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(job, range(len(entries))))
    else:
        results = [job(k) for k in range(len(entries))]

    failures = []
    written = []
    for entry, image_id, (res, exc) in zip(entries, ids, results):
        if exc is not None:
            failures.append((entry, exc))
            continue
        t, rows, trace_path = res
        pred = t.prediction
        name = classes[pred] if classes and pred < len(classes) else str(pred)
        print(f"{image_id}: predicted {name}, {len(rows)} layers")
        if trace_path is not None:
            written.append(ManifestEntry(trace_path.resolve(), entry.label,
                                         entry.mask.resolve() if entry.mask else None))
    if written:
        write_manifest(out / "traces.tsv", written)
    if len(entries) == 1 and not failures:
        print(format_table(aggregate([results[0][0][1]], paired=False)))
    if failures:
        for entry, exc in failures:
            print(f"FAILED {entry.path}: {exc}", file=sys.stderr)
        if len(failures) == len(entries):
            raise failures[0][1]
        raise PartialFailure(f"{len(failures)} of {len(entries)} images failed")
    return EXIT_OK


# aggregate

def cmd_aggregate(args):
    directory = Path(args.directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    files = sorted(directory.glob("*.metrics.csv"))
    if not files:
        raise ValidationError(f"{directory}: no *.metrics.csv files")
    reports = [read_metrics_csv(f)[1] for f in files]
    lengths = {len(r) for r in reports}
    if len(lengths) != 1:
        raise ValidationError(f"{directory}: reports have differing layer counts {sorted(lengths)}")
    rows = aggregate(reports, paired=not args.per_layer)
    text = aggregate_csv(rows, digits=args.digits)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    print(format_table(rows), file=sys.stderr)
    return EXIT_OK


# heatmap

def cmd_heatmap(args):
    image_path = _require_file(args.image, "image")
    if args.trace is None and args.weights is None:
        raise ValidationError("need --trace or --weights")
    if args.trace is not None:
        _require_file(args.trace, "trace")
    else:
        _require_file(args.weights, "weights file")
    if args.mask is not None:
        _require_file(args.mask, "mask")
    if (args.patch is None) == (args.patch_index is None):
        raise ValidationError("give exactly one of --patch ROW,COL or --patch-index I")
    common = dict(layers=args.layers, scale=args.scale, alpha_floor=args.alpha_floor,
                  alpha_ceiling=args.alpha_ceiling, normalization=args.normalization)
    if args.patch is not None:
        spec = HeatmapSpec.at(*args.patch, **common)
    else:
        spec = HeatmapSpec(patch=args.patch_index, **common)
    original = load_image(image_path)
    img, grid = prepare(original)
    weights = None
    if args.trace is not None:
        t = read_trace(args.trace)
    else:
        weights = load_weights(args.weights)
        t = forward(grid, weights, image_id=image_path.stem, label=args.label)
    spec.check_layers(t.num_layers)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = args.name or image_path.stem
    for p in write_heatmaps(img, t, spec, out, name):
        print(f"wrote {p}")
    if args.curves:
        mask = None
        if args.mask is not None:
            mask = _patch_mask_for(args.mask, (original.width, original.height), args.threshold)
        label = args.label if args.label is not None else t.label
        rows = analyze_trace(t, grid, mask=mask, label=label, weights=weights,
                             variant=args.modularity_variant)
        for p in render_metric_curves([rows], out / f"{name}_curves"):
            print(f"wrote {p}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="vigxray", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-weights", help="write seeded random weights")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--layers", type=int, default=16)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--k-max", type=int, default=None, help="linear K schedule from --k to this value")
    p.add_argument("--heads", type=int, default=1)
    p.add_argument("--ffn-ratio", type=int, default=4)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_init_weights)

    def metric_flags(q):
        q.add_argument("--threshold", type=float, default=0.5,
                       help="fraction of object pixels that makes a patch object (default 0.5)")
        q.add_argument("--modularity-variant", choices=VARIANTS, default="printed")

    p = sub.add_parser("analyze", help="forward pass, trace and per-layer metrics")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--image")
    src.add_argument("--manifest")
    p.add_argument("--weights", required=True)
    p.add_argument("--mask")
    p.add_argument("--label", type=int)
    p.add_argument("-o", "--out-dir", default=".")
    p.add_argument("--no-trace", action="store_true")
    p.add_argument("--no-features", action="store_true", help="omit X^l from trace files")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default $VIGXRAY_THREADS or 1)")
    p.add_argument("--classes-file", help="class names, one per line (display only)")
    metric_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("aggregate", help="average per-image reports into a layer-pair table")
    p.add_argument("directory")
    p.add_argument("-o", "--output")
    p.add_argument("--per-layer", action="store_true", help="one row per layer instead of per pair")
    p.add_argument("--digits", type=int, default=6)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("heatmap", help="render connection heatmaps")
    p.add_argument("--image", required=True)
    p.add_argument("--trace")
    p.add_argument("--weights")
    p.add_argument("--patch", type=_patch_rc, help="ROW,COL on the 14x14 grid")
    p.add_argument("--patch-index", type=int)
    p.add_argument("--layers", type=_int_list, required=True, help="comma-separated, 1-based")
    p.add_argument("-o", "--out-dir", default=".")
    p.add_argument("--name", help="image name used in output files (default: image file stem)")
    p.add_argument("--scale", type=int, default=3)
    p.add_argument("--alpha-floor", type=float, default=0.25)
    p.add_argument("--alpha-ceiling", type=float, default=0.9)
    p.add_argument("--normalization", choices=("minmax", "absolute"), default="minmax")
    p.add_argument("--curves", action="store_true", help="also write per-layer metric curves")
    p.add_argument("--mask")
    p.add_argument("--label", type=int)
    metric_flags(p)
    p.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = exit_code_for(exc)
        if code == EXIT_INTERNAL:
            log.exception("internal error")
        else:
            print(f"vigxray: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
