"""Command-line front end.

Subcommands: gt-field, partition, segment, perturb, eval, viz, bench.

Exit codes: 0 success, 1 computation error, 2 usage or I/O error. Every run
writes one JSON manifest (to stderr, or to ``--manifest PATH``) with the
command, inputs, outputs, effective configuration, seed and stage timings.
Outputs are written atomically; if a run fails, outputs it already wrote are
removed.
"""
import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _backend, bench, imaging
from .errors import FieldValidationError, FormatError, SuperBPDError
from .field import gt_field, perturb
from .forest import PartitionConfig, build_forest, flatten
from .metrics import evaluate
from .segmenter import SegConfig, relabel_sequential, segment

# config-file keys -> (type, flag); the key names double as manifest keys
CONFIG_KEYS = {
    "theta_a": float,
    "s0": float,
    "theta_l": float,
    "theta_s": float,
    "a_s": int,
    "a_t": int,
    "steps": int,
    "root_guard": None,  # bool
}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class UsageError(Exception):
    """Bad flags, config values or arguments (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def read_config(path):
    """Read ``key=value`` lines (``#`` comments) or the config of a JSON manifest."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: bad JSON: {exc}") from None
        raw = raw.get("config", raw)
        items = list(raw.items())
    else:
        items = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            items.append((key.strip().replace("-", "_"), value.strip()))
    out = {}
    for key, value in items:
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}: unknown config key {key!r}")
        kind = CONFIG_KEYS[key]
        try:
            out[key] = _parse_bool(value) if kind is None else kind(value)
        except (TypeError, ValueError):
            raise UsageError(f"{path}: bad value for {key}: {value!r}") from None
    return out


def resolve_config(args):
    """Defaults < config file < flags. Returns (PartitionConfig, SegConfig)."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config(args.config))
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    part_kw = {k: values[k] for k in ("theta_a",) if k in values}
    seg_kw = {k: values[k] for k in CONFIG_KEYS if k != "theta_a" and k in values}
    for key, value in list(part_kw.items()) + list(seg_kw.items()):
        if isinstance(value, float) and not math.isfinite(value):
            raise UsageError(f"{key} must be finite, got {value}")
    try:
        return PartitionConfig(**part_kw), SegConfig(**seg_kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def config_dict(cfg_part, cfg_seg):
    return {
        "theta_a": cfg_part.theta_a,
        "s0": cfg_seg.s0,
        "theta_l": cfg_seg.theta_l,
        "theta_s": cfg_seg.theta_s,
        "a_s": cfg_seg.a_s,
        "a_t": cfg_seg.a_t,
        "steps": cfg_seg.steps,
        "root_guard": cfg_seg.root_guard,
    }


class Run:
    """Bookkeeping of one command: outputs written, timings, manifest."""

    def __init__(self, args):
        self.args = args
        self.outputs = []
        self.manifest = {
            "command": args.command,
            "version": __version__,
            "backend": _backend.backend_name(),
            "inputs": [],
            "outputs": [],
            "config": None,
            "seed": None,
            "timings_ms": {},
        }

    def input(self, path):
        self.manifest["inputs"].append(str(path))
        return path

    def write(self, path, data):
        imaging.atomic_write(path, data)
        self.outputs.append(str(path))
        self.manifest["outputs"].append(str(path))

    def rollback(self):
        for path in self.outputs:
            try:
                os.unlink(path)
            except FileNotFoundError:
                pass
        self.manifest["outputs"] = []


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _finite_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite, got {text!r}")
    return v


def _add_partition_flags(p):
    p.add_argument("--theta-a", dest="theta_a", type=_finite_float, default=None,
                   help="direction agreement threshold in degrees (default 45)")


def _add_segment_flags(p):
    _add_partition_flags(p)
    p.add_argument("--s0", type=_finite_float, default=None,
                   help="repulsion threshold in radians (default pi/18)")
    p.add_argument("--theta-l", dest="theta_l", type=_finite_float, default=None,
                   help="merge threshold for large regions, radians")
    p.add_argument("--theta-s", dest="theta_s", type=_finite_float, default=None,
                   help="merge threshold when a region is small, radians")
    p.add_argument("--a-s", dest="a_s", type=int, default=None, help="small-region area (default 1500)")
    p.add_argument("--a-t", dest="a_t", type=int, default=None, help="tiny-region area (default 200)")
    p.add_argument("--steps", type=int, default=None, help="parent steps for edge similarity (default 3)")
    p.add_argument("--no-root-guard", dest="root_guard", action="store_const", const=False, default=None,
                   help="merge nearby roots without the departing-direction check")


def build_parser():
    parser = _Parser(prog="superbpd", description="Super-BPD segmentation from direction fields.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--manifest", metavar="PATH", help="write the JSON run manifest here instead of stderr")
    common.add_argument("--config", metavar="PATH", help="key=value config file (or a previous manifest)")
    common.add_argument("--backend", choices=_backend.available_backends(), help="kernel implementation")
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="threads for the distance transform (default $SUPERBPD_NUM_THREADS or 1)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gt-field", parents=[common], help="direction field of a label map")
    p.add_argument("labels", help="16-bit PGM label map")
    p.add_argument("out_field", help="output BPDF file")
    p.add_argument("--viz", metavar="PPM", help="also write the colour-coded field")

    p = sub.add_parser("partition", parents=[common], help="super-BPDs only (forest trees as labels)")
    p.add_argument("field", help="BPDF direction field")
    p.add_argument("out_labels", help="output 16-bit PGM, labels 0..K-1 in raster order")
    p.add_argument("--viz", metavar="PPM", help="also write the tree boundaries over the field colours")
    _add_partition_flags(p)

    p = sub.add_parser("segment", parents=[common], help="full segmentation of a direction field")
    p.add_argument("field", help="BPDF direction field")
    p.add_argument("out_labels", help="output 16-bit PGM, labels 0..K-1 in raster order")
    p.add_argument("--viz", metavar="PPM", help="also write the segment boundaries over the field colours")
    p.add_argument("--timing", action="store_true", help="record per-stage wall times in the manifest")
    _add_segment_flags(p)

    p = sub.add_parser("perturb", parents=[common], help="rotate every vector by Gaussian noise")
    p.add_argument("field", help="BPDF direction field")
    p.add_argument("sigma", type=_finite_float, help="standard deviation in degrees")
    p.add_argument("seed", type=int, help="random seed")
    p.add_argument("out_field", help="output BPDF file")

    p = sub.add_parser("eval", parents=[common], help="covering, PRI and VI against ground truths")
    p.add_argument("pred", help="predicted 16-bit PGM label map")
    p.add_argument("gt", nargs="+", help="one or more ground-truth PGM label maps")
    p.add_argument("--id", dest="image_id", help="image id in the report (default: prediction file stem)")
    p.add_argument("--detail", action="store_true", help="also print one line per ground truth")

    p = sub.add_parser("viz", parents=[common], help="render a field or a segmentation as PPM")
    p.add_argument("input", help="BPDF field or PGM label map")
    p.add_argument("out_ppm", help="output PPM")
    p.add_argument("--base", metavar="PPM", help="draw label boundaries over this image (labels only)")
    p.add_argument("--color", default="255,0,0", help="boundary colour r,g,b (default 255,0,0)")

    p = sub.add_parser("bench", parents=[common], help="time the pipeline on synthetic Voronoi fields")
    p.add_argument("sizes", nargs="*", default=["192", "384", "768"], help="N or HxW (default 192 384 768)")
    p.add_argument("--repeats", type=_positive_int, default=5, help="runs per size; medians are reported")
    p.add_argument("--k", type=_positive_int, default=24, help="Voronoi seed points per map (default 24)")
    p.add_argument("--seed", type=int, default=7, help="map seed (default 7)")
    p.add_argument("--sigma", type=_finite_float, default=0.0, help="perturb the fields by this many degrees")
    p.add_argument("--out-dir", help="write each segmentation as bench-HxW.pgm here")
    _add_segment_flags(p)
    return parser


def _read_field(run, path):
    try:
        return imaging.read_field(run.input(path))
    except FieldValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _read_labels(run, path):
    return imaging.read_labels(run.input(path))


def cmd_gt_field(run, args):
    labels = _read_labels(run, args.labels)
    t0 = time.perf_counter()
    field = gt_field(labels, num_threads=args.threads)
    run.manifest["timings_ms"]["gt_field"] = (time.perf_counter() - t0) * 1e3
    run.write(args.out_field, imaging.encode_field(field))
    if args.viz:
        run.write(args.viz, imaging.encode_rgb(imaging.viz_field(field)))


def cmd_partition(run, args):
    cfg_part, _ = resolve_config(args)
    run.manifest["config"] = {"theta_a": cfg_part.theta_a}
    field = _read_field(run, args.field)
    t0 = time.perf_counter()
    forest = build_forest(field, cfg_part)
    labels = relabel_sequential(flatten(forest))
    run.manifest["timings_ms"]["total"] = (time.perf_counter() - t0) * 1e3
    run.manifest["trees"] = int(len(forest.roots))
    run.write(args.out_labels, imaging.encode_labels(labels))
    if args.viz:
        run.write(args.viz, imaging.encode_rgb(imaging.viz_boundaries(imaging.viz_field(field), labels)))


def cmd_segment(run, args):
    cfg_part, cfg_seg = resolve_config(args)
    run.manifest["config"] = config_dict(cfg_part, cfg_seg)
    field = _read_field(run, args.field)
    timings = {}
    labels = segment(field, cfg_part, cfg_seg, timings=timings)
    run.manifest["timings_ms"] = timings if args.timing else {"total": timings["total"]}
    run.manifest["regions"] = int(labels.max()) + 1
    run.write(args.out_labels, imaging.encode_labels(labels))
    if args.viz:
        run.write(args.viz, imaging.encode_rgb(imaging.viz_boundaries(imaging.viz_field(field), labels)))


def cmd_perturb(run, args):
    if args.sigma < 0:
        raise UsageError(f"sigma must be >= 0, got {args.sigma}")
    run.manifest["seed"] = args.seed
    run.manifest["config"] = {"sigma_deg": args.sigma}
    field = _read_field(run, args.field)
    out = perturb(field, args.sigma, args.seed)
    run.write(args.out_field, imaging.encode_field(out))


def cmd_eval(run, args):
    pred = _read_labels(run, args.pred)
    gts = [_read_labels(run, g) for g in args.gt]
    image_id = args.image_id or Path(args.pred).stem
    report = evaluate(pred, gts)
    print(report.tsv(image_id))
    if args.detail:
        for path, gt in zip(args.gt, gts):
            one = evaluate(pred, [gt])
            print(f"# gt={path}\tcovering={one.covering!r}\tpri={one.pri!r}\tvi={one.vi!r}")
    run.manifest["report"] = {"id": image_id, "covering": report.covering, "pri": report.pri,
                              "vi_nats": report.vi, "covering_direction": "gt->pred"}


def _parse_color(text):
    try:
        rgb = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"bad colour {text!r}; use r,g,b") from None
    if len(rgb) != 3 or not all(0 <= v <= 255 for v in rgb):
        raise UsageError(f"bad colour {text!r}; use three values in 0..255")
    return rgb


def cmd_viz(run, args):
    color = _parse_color(args.color)
    data = Path(run.input(args.input)).read_bytes()
    if data[:3] == b"BPD":
        if args.base:
            raise UsageError("--base applies to label maps only")
        rgb = imaging.viz_field(imaging.decode_field(data))
    elif data[:2] == b"P5":
        labels = imaging.decode_labels(data)
        base = imaging.read_rgb(run.input(args.base)) if args.base else None
        rgb = imaging.viz_boundaries(base, labels, color)
    else:
        raise FormatError(f"{args.input}: neither a BPDF field nor a PGM label map")
    run.write(args.out_ppm, imaging.encode_rgb(rgb))


def cmd_bench(run, args):
    cfg_part, cfg_seg = resolve_config(args)
    run.manifest["config"] = config_dict(cfg_part, cfg_seg)
    run.manifest["seed"] = args.seed
    if args.sigma < 0:
        raise UsageError(f"sigma must be >= 0, got {args.sigma}")
    try:
        sizes = [bench.parse_size(s) for s in args.sizes]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.out_dir and not os.path.isdir(args.out_dir):
        raise UsageError(f"--out-dir {args.out_dir!r} is not a directory")
    rows = bench.scaling_table(sizes, args.repeats, args.k, args.seed, args.sigma, cfg_part, cfg_seg)
    print(bench.format_table(rows))
    run.manifest["bench"] = {
        "k": args.k, "sigma_deg": args.sigma, "repeats": args.repeats,
        "rows": [{"size": [r["height"], r["width"]], "ms": r["ms"], "ratio_per_doubling": r["ratio"]}
                 for r in rows],
    }
    if args.out_dir:
        for r in rows:
            path = os.path.join(args.out_dir, f"bench-{r['height']}x{r['width']}.pgm")
            run.write(path, imaging.encode_labels(r["labels"]))


COMMANDS = {
    "gt-field": cmd_gt_field,
    "partition": cmd_partition,
    "segment": cmd_segment,
    "perturb": cmd_perturb,
    "eval": cmd_eval,
    "viz": cmd_viz,
    "bench": cmd_bench,
}


def _emit_manifest(manifest, path):
    text = json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n"
    if path:
        imaging.atomic_write(path, text.encode())
    else:
        sys.stderr.write(text)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    run = Run(args)
    code = 0
    previous = _backend.backend_name()
    try:
        if args.backend:
            _backend.set_backend(args.backend)
            run.manifest["backend"] = args.backend
        COMMANDS[args.command](run, args)
    except UsageError as exc:
        code, msg = 2, f"usage error: {exc}"
    except (OSError, FormatError) as exc:
        code, msg = 2, f"I/O error: {exc}"
    except SuperBPDError as exc:
        code, msg = 1, f"error: {exc}"
    except (ValueError, ArithmeticError, MemoryError) as exc:
        code, msg = 1, f"error: {exc}"
    finally:
        _backend.set_backend(previous)
    if code:
        run.rollback()
        print(msg, file=sys.stderr)
        run.manifest["error"] = msg
    run.manifest["exit_code"] = code
    try:
        _emit_manifest(run.manifest, getattr(args, "manifest", None))
    except OSError as exc:
        print(f"I/O error: cannot write manifest: {exc}", file=sys.stderr)
        run.rollback()
        code = 2
    return code


if __name__ == "__main__":
    sys.exit(main())
