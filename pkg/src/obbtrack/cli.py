"""Command-line entry point: ``obbtrack <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 when ``validate``
reports at least one ERROR finding.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio, stem
from .cmc import EstimationError, SimilarityTransform
from .configfile import load_config
from .dataio import FormatError, ParseError
from .metrics import evaluate
from .synth import PerturbConfig, ScenarioConfig, generate, perturb
from .trackers import Algorithm, ConfigError, TrackerConfig, run_sequence

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_FINDINGS = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _cmd_synth(args) -> int:
    text = _read(args.config) if args.config else ""
    overrides = {"seed": args.seed} if args.seed is not None else {}
    cfg = load_config(ScenarioConfig, text, **overrides)
    result = generate(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "gt.txt").write_text(dataio.write_obbmot(result.gt), encoding="utf-8", newline="\n")
    (out / "transforms.csv").write_text(dataio.write_transforms(result.transforms), encoding="utf-8", newline="\n")
    if result.cubes is not None:
        cube_dir = out / "cubes"
        cube_dir.mkdir(exist_ok=True)
        for k, cube in enumerate(result.cubes, start=1):
            with open(cube_dir / f"{k:06d}.msc", "wb") as fh:
                dataio.write_cube(fh, cube)
    print(f"wrote {result.gt.num_instances()} instances over {result.gt.num_frames} frames to {out}", file=sys.stderr)
    return EXIT_OK


def _cmd_perturb(args) -> int:
    cfg = load_config(PerturbConfig, _read(args.config) if args.config else "")
    gt = dataio.parse_obbmot(_read(args.gt))
    frames = perturb(gt, cfg, seed=args.seed)
    _write(args.out, dataio.write_obbmot(dataio.detections_to_frameset(frames)))
    return EXIT_OK


def _cmd_track(args) -> int:
    cfg = load_config(TrackerConfig, _read(args.config) if args.config else "", algorithm=Algorithm(args.algo))
    dets = dataio.parse_obbmot(_read(args.dets), allow_duplicates=True)
    transforms = dataio.read_transforms(_read(args.transforms)) if args.transforms else None
    n = max(dets.num_frames, len(transforms or []), args.frames or 0)
    if transforms is not None:
        transforms = transforms + [SimilarityTransform()] * (n - len(transforms))
    frames = dataio.frames_to_detections(dets.padded(n))
    if not cfg.uses_cmc:
        transforms = None
    outputs = run_sequence(cfg, frames, transforms)
    _write(args.out, dataio.write_obbmot(outputs))
    return EXIT_OK


def _cmd_eval(args) -> int:
    gt = dataio.parse_obbmot(_read(args.gt))
    pred = dataio.parse_obbmot(_read(args.pred))
    report = evaluate(gt, pred, alpha=args.alpha, exclude_truncated=args.exclude_truncated)
    _write(args.out, report.to_csv())
    if args.out not in (None, "-"):
        sys.stdout.write(report.to_text())
    return EXIT_OK


def _cmd_stats(args) -> int:
    seqs = [dataio.parse_obbmot(_read(p)) for p in args.gt]
    transforms = None
    if args.transforms:
        if len(args.transforms) != len(seqs):
            raise UsageError("give one --transforms file per --gt file")
        transforms = [dataio.read_transforms(_read(p), num_frames=s.num_frames) for p, s in zip(args.transforms, seqs)]
    report = dataio.dataset_stats(seqs, transforms, radius=args.radius)
    _write(args.out, report.to_csv())
    return EXIT_OK


def _cmd_postprocess(args) -> int:
    records = dataio.parse_obbmot(_read(args.input))
    kept, discarded = dataio.postprocess(records, args.width, args.height)
    _write(args.out, dataio.write_obbmot(kept))
    if args.discarded:
        lines = ["frame,id,reason"] + [f"{f},{inst.track_id},{reason}" for f, inst, reason in discarded]
        Path(args.discarded).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    print(f"kept {kept.num_instances()}, discarded {len(discarded)}", file=sys.stderr)
    return EXIT_OK


def _cmd_validate(args) -> int:
    fs = dataio.parse_obbmot(_read(args.input), allow_duplicates=True)
    findings = dataio.validate(fs)
    lines = ["severity,kind,frame,track_id"] + [f"{f.severity},{f.kind},{f.frame},{f.track_id}" for f in findings]
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_FINDINGS if any(f.severity == "ERROR" for f in findings) else EXIT_OK


def _cmd_stem_check(args) -> int:
    cfg = stem.StemConfig(bands=args.bands, spectral_kernel=args.spectral_kernel,
                          spatial_kernel=args.spatial_kernel, out_channels=args.out_channels)
    counts = stem.param_count(cfg)
    d, k = cfg.out_channels, cfg.spatial_kernel
    lines = [
        f"rgb_2d_stem_params {stem.conv2d_stem_params(3, d, k):,}",
        f"msi_2d_stem_params {stem.conv2d_stem_params(cfg.bands, d, k):,}",
        f"spectral_3d_stem_conv3d_params {counts['conv3d']:,}",
        f"spectral_3d_stem_fold_params {counts['fold']:,}",
        f"spectral_3d_stem_total_params {counts['total']:,}",
    ]
    rng = np.random.default_rng(args.seed)
    size = args.size
    weights = stem.random_weights(cfg, rng)
    out, inter = stem.forward(rng.normal(size=(1, cfg.bands, size, size)), weights, cfg, return_intermediates=True)
    shape = lambda a: "x".join(str(v) for v in a.shape)  # noqa: E731
    lines.append(f"input_shape 1x{cfg.bands}x{size}x{size}")
    lines.append(f"intermediate_shape {shape(inter['stage1'])}")
    lines.append(f"folded_shape {shape(inter['stage2'])}")
    lines.append(f"output_shape {shape(out)}")
    if not args.skip_grad:
        t0 = time.perf_counter()
        err = stem.grad_check(config=cfg, seed=args.seed)
        lines.append(f"grad_check_max_rel_error {err:.3e}")
        lines.append(f"grad_check_seconds {time.perf_counter() - t0:.2f}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_rgbproxy(args) -> int:
    with open(args.input, "rb") as fh:
        cube = dataio.read_cube(fh)
    proxy = dataio.rgb_proxy(cube)
    with open(args.out, "wb") as fh:
        dataio.write_cube(fh, proxy)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="obbtrack", description="Oriented-box multi-object tracking toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic sequence with ground truth")
    s.add_argument("--config", help="scenario key = value file (defaults when omitted)")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--seed", type=int, help="override the seed from the config file")
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("perturb", help="turn ground truth into noisy detections")
    s.add_argument("--gt", required=True)
    s.add_argument("--config", help="perturbation key = value file")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_perturb)

    s = sub.add_parser("track", help="run a tracker over a detections file")
    s.add_argument("--algo", required=True, choices=[a.value for a in Algorithm])
    s.add_argument("--config", help="tracker key = value file")
    s.add_argument("--dets", required=True)
    s.add_argument("--transforms", help="per-frame platform transforms (frame,scale,rotation,tx,ty)")
    s.add_argument("--frames", type=int, help="sequence length when trailing frames have no detections")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_track)

    s = sub.add_parser("eval", help="per-class and aggregate tracking metrics")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--alpha", type=float, default=0.5, help="rIoU threshold for MOTA/IDF1")
    s.add_argument("--exclude-truncated", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_eval)

    s = sub.add_parser("stats", help="dataset statistics")
    s.add_argument("--gt", required=True, nargs="+")
    s.add_argument("--transforms", nargs="+")
    s.add_argument("--radius", type=float, default=300.0)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_stats)

    s = sub.add_parser("postprocess", help="apply the image-boundary annotation rules")
    s.add_argument("--input", required=True)
    s.add_argument("--width", type=float, required=True)
    s.add_argument("--height", type=float, required=True)
    s.add_argument("--out")
    s.add_argument("--discarded", help="write discarded records with reasons here")
    s.set_defaults(func=_cmd_postprocess)

    s = sub.add_parser("validate", help="annotation consistency checks")
    s.add_argument("--input", required=True)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_validate)

    s = sub.add_parser("stem-check", help="parameter counts, shapes and gradient check of the spectral stem")
    s.add_argument("--bands", type=int, default=8)
    s.add_argument("--spectral-kernel", type=int, default=3)
    s.add_argument("--spatial-kernel", type=int, default=7)
    s.add_argument("--out-channels", type=int, default=64)
    s.add_argument("--size", type=int, default=64, help="spatial size of the shape-check input")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--skip-grad", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_stem_check)

    s = sub.add_parser("rgbproxy", help="extract bands 5, 3, 2 of a cube as R, G, B")
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_rgbproxy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"obbtrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, FormatError, ConfigError, EstimationError, ValueError, OSError) as exc:
        print(f"obbtrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
