"""Command-line interface: ``optable <command> ...``.

Every command is deterministic for a given config and seed. On failure a
single JSON line ``{"error": <code>, "message": <text>}`` goes to stderr
and the exit status is 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import plotting
from .config import DYNAMIC, STATIC, dump_config, load_config, load_manifest
from .dynamic_detect import ActionPair, ChangeMap, build_change_bank, detect_changes
from .errors import ConfigError, OptableError
from .evaluation import format_summary, write_report
from .imaging import load_image, load_probability_map, save_image, save_probability_map
from .optimize import write_trace
from .overlay import render_overlay
from .pipeline import (change_maps, dynamic_loocv, ensure_dir, load_dynamic_dataset, load_static_dataset,
                       optimize_static, optimize_wsize, static_loocv, working_image)
from .static_detect import build_reference_bank, segment
from .synth import DEFAULT_HEIGHT, DEFAULT_WIDTH, generate_synthetic_dataset


def _config(args):
    overrides = list(args.set or [])
    if getattr(args, "out", None):
        overrides.append(f"out_dir={args.out}")
    if getattr(args, "threads", None):
        overrides.append(f"threads={args.threads}")
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def _emit(msg: str) -> None:
    print(msg, flush=True)


def cmd_synth(args) -> None:
    manifest = generate_synthetic_dataset(args.kind, args.n, args.seed, args.out, args.width, args.height)
    _emit(f"wrote {len(manifest)} {args.kind} rows to {Path(args.out) / 'manifest.csv'}")


def _same_file(a: Path, b: Path) -> bool:
    return a.resolve() == b.resolve()


def cmd_segment(args) -> None:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    samples = load_static_dataset(manifest, cfg.downsample)
    target = Path(args.image)
    keep = [s for i, s in enumerate(samples) if not _same_file(manifest.path(i, "image"), target)]
    params = cfg.detect_params()
    bank = build_reference_bank(keep, params)
    result = segment(working_image(load_image(target), cfg.downsample), bank, params)
    out = ensure_dir(cfg.out_dir)
    path = out / f"{target.stem}_prob.png"
    save_probability_map(path, result.prob)
    _emit(f"wrote {path} queries={json.dumps(result.queries, sort_keys=True)}")


def cmd_detect(args) -> None:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    pairs = load_dynamic_dataset(manifest, cfg.downsample)
    before_path, after_path = Path(args.before), Path(args.after)
    keep = [p for i, p in enumerate(pairs)
            if not (_same_file(manifest.path(i, "before"), before_path)
                    and _same_file(manifest.path(i, "after"), after_path))]
    params = cfg.dynamic_params()
    banks = (build_change_bank(keep, params), build_change_bank([p.swapped() for p in keep], params))
    pair = ActionPair(working_image(load_image(before_path), cfg.downsample),
                      working_image(load_image(after_path), cfg.downsample))
    changes = detect_changes(pair, banks, params)
    out = ensure_dir(cfg.out_dir)
    save_probability_map(out / "appeared.png", changes.appeared)
    save_probability_map(out / "disappeared.png", changes.disappeared)
    save_image(out / "overlay.png", render_overlay(pair.before, pair.after, changes, cfg.overlay_threshold))
    _emit(f"wrote appeared.png, disappeared.png, overlay.png to {out}")


def cmd_loocv_static(args) -> None:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    samples = load_static_dataset(manifest, cfg.downsample)
    result = static_loocv(samples, cfg.detect_params(), cfg.threads)
    out = ensure_dir(cfg.out_dir)
    maps_dir = ensure_dir(out / "maps")
    for s, prob in zip(samples, result.maps):
        save_probability_map(maps_dir / f"{s.name}_prob.png", prob)
    summary = write_report(out / "report.csv", result.rows)
    (out / "config.cfg").write_text(dump_config(cfg))
    if cfg.figures:
        plotting.roc_figure(out / "roc.png", result.maps, result.truths, [s.name for s in samples],
                            "static segmentation ROC")
        plotting.az_figure(out / "az.png", result.rows, "static segmentation Az")
    _emit(f"static Az mean/std {format_summary(*summary) if summary else 'n/a'}")


def cmd_loocv_dynamic(args) -> None:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    pairs = load_dynamic_dataset(manifest, cfg.downsample)
    appear, disappear = dynamic_loocv(pairs, cfg.dynamic_params(), cfg.threads)
    out = ensure_dir(cfg.out_dir)
    maps_dir = ensure_dir(out / "maps")
    overlay_dir = ensure_dir(out / "overlays")
    for p, cm in zip(pairs, change_maps(appear, disappear)):
        save_probability_map(maps_dir / f"{p.name}_appeared.png", cm.appeared)
        save_probability_map(maps_dir / f"{p.name}_disappeared.png", cm.disappeared)
        save_image(overlay_dir / f"{p.name}_overlay.png",
                   render_overlay(p.before, p.after, cm, cfg.overlay_threshold))
    lines = []
    for label, res in (("appearance", appear), ("disappearance", disappear)):
        summary = write_report(out / f"report_{label}.csv", res.rows)
        if cfg.figures:
            plotting.roc_figure(out / f"roc_{label}.png", res.maps, res.truths, [p.name for p in pairs],
                                f"{label} ROC")
            plotting.az_figure(out / f"az_{label}.png", res.rows, f"{label} Az")
        lines.append(f"{label} Az mean/std {format_summary(*summary) if summary else 'n/a'}")
    (out / "config.cfg").write_text(dump_config(cfg))
    _emit("; ".join(lines))


def cmd_optimize(args) -> None:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    if args.mode == "dpso":
        if manifest.kind != STATIC:
            raise ConfigError("dpso mode tunes the static task and needs a static manifest")
        result = optimize_static(load_static_dataset(manifest, cfg.downsample), cfg)
        best_cfg = cfg.replace(**result.best)
    else:
        if manifest.kind != DYNAMIC:
            raise ConfigError("wsize-grid mode needs a dynamic manifest")
        result = optimize_wsize(load_dynamic_dataset(manifest, cfg.downsample), cfg)
        best_cfg = cfg.replace(w_size=int(result.best["value"]))
    out = ensure_dir(cfg.out_dir)
    write_trace(out / "trace.csv", result)
    (out / "best.cfg").write_text(dump_config(best_cfg))
    if cfg.figures:
        plotting.trace_figure(out / "trace.png", result, f"{args.mode} best mean Az")
    _emit(f"best {json.dumps(result.best, sort_keys=True)} score {result.best_score:.4f} "
          f"after {result.evaluations} evaluations")


def cmd_render(args) -> None:
    cfg = _config(args)
    before = working_image(load_image(args.before), cfg.downsample)
    after = working_image(load_image(args.after), cfg.downsample)
    changes = ChangeMap(load_probability_map(args.appeared), load_probability_map(args.disappeared))
    threshold = cfg.overlay_threshold if args.threshold is None else args.threshold
    target = Path(args.output)
    ensure_dir(target.parent)
    save_image(target, render_overlay(before, after, changes, threshold))
    _emit(f"wrote {target}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optable", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_opts(p, out=True):
        p.add_argument("--config", help="flat 'key = value' config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        if out:
            p.add_argument("--out", help="output directory (config key out_dir)")
        p.add_argument("--threads", type=int, help="worker threads (config key threads)")
        p.add_argument("--seed", type=int, help="random seed (config key seed)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--kind", choices=(STATIC, DYNAMIC), default=STATIC)
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=DEFAULT_WIDTH)
    p.add_argument("--height", type=int, default=DEFAULT_HEIGHT)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="segment one image against a static reference manifest")
    p.add_argument("image")
    p.add_argument("--manifest", required=True)
    run_opts(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("detect", help="detect appeared/disappeared objects in one before/after pair")
    p.add_argument("before")
    p.add_argument("after")
    p.add_argument("--manifest", required=True, help="dynamic reference manifest")
    run_opts(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("loocv-static", help="leave-one-out static segmentation report")
    p.add_argument("manifest")
    run_opts(p)
    p.set_defaults(func=cmd_loocv_static)

    p = sub.add_parser("loocv-dynamic", help="leave-one-out appearance/disappearance report")
    p.add_argument("manifest")
    run_opts(p)
    p.set_defaults(func=cmd_loocv_dynamic)

    p = sub.add_parser("optimize", help="hyperparameter search")
    p.add_argument("manifest")
    p.add_argument("--mode", choices=("dpso", "wsize-grid"), default="dpso")
    run_opts(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("render", help="overlay change maps on the 'after' image")
    p.add_argument("before")
    p.add_argument("after")
    p.add_argument("appeared", help="16-bit appeared probability map")
    p.add_argument("disappeared", help="16-bit disappeared probability map")
    p.add_argument("--threshold", type=float)
    p.add_argument("--output", required=True)
    run_opts(p, out=False)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except OptableError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        code = "io" if isinstance(exc, OSError) else "value"
        print(json.dumps({"error": code, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
