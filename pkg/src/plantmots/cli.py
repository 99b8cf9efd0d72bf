"""``plantmots`` command line: track, eval, synth and render subcommands.

Exit status is 0 on success, 1 for bad input (usage errors, unreadable or
malformed files, invalid configuration, frame-range mismatch) and 2 for
internal errors.
Diagnostics go to stderr; reports go to stdout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

from . import evaluation, mots_io, render, synth, tracker
from .errors import PlantMotsError


class InputError(Exception):
    """Raised for conditions that map to exit status 1."""


def _load_series(path: Path) -> mots_io.FrameSeries:
    if path.is_dir():
        return mots_io.load_mask_directory(path)
    if not path.is_file():
        raise InputError(f"no such file or directory: {path}")
    return mots_io.load_sequence_file(path)


def _tracker_config(args) -> tracker.TrackerConfig:
    cfg = tracker.TrackerConfig.from_file(args.config) if args.config else tracker.TrackerConfig()
    return cfg.override(
        s=args.s,
        t_all=args.t_all,
        t_p=args.t_p,
        fd_length=args.fd_length,
        border_margin=args.border_margin,
        feature_mode=args.feature_mode,
    )


def _atomic_write(path: Path, write) -> None:
    """Run ``write(tmp_path)`` and move the result to ``path`` only if it succeeds."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        write(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_track(args) -> int:
    t0 = time.perf_counter()
    series = _load_series(Path(args.input))
    cfg = _tracker_config(args)
    trk = tracker.Tracker(cfg)
    load_s = time.perf_counter() - t0
    frames = []
    decode_s = 0.0
    for frame_id, anns in series:
        t1 = time.perf_counter()
        plants = [a for a in anns if a.category == mots_io.VEGETABLE]
        insts = [tracker.Instance.from_annotation(a) for a in plants]
        decode_s += time.perf_counter() - t1
        height = anns[0].image_height if anns else None
        frames.append(trk.step(frame_id, insts, height))
    out = tracker.tracked_to_series(frames)
    _atomic_write(Path(args.output), lambda p: mots_io.save_sequence_file(out, p))
    total_s = time.perf_counter() - t0

    n = max(len(frames), 1)
    track_s = sum(trk.timings)
    print(f"frames        {len(frames)}")
    print(f"tracks        {trk.store.next_id}")
    print(f"{'':<14}{'total s':>10}{'ms/frame':>10}")
    for name, sec in (("segment-input", load_s + decode_s), ("tracking", track_s), ("total", total_s)):
        print(f"{name:<14}{sec:>10.3f}{1e3 * sec / n:>10.3f}")
    return 0


def cmd_eval(args) -> int:
    gt = _load_series(Path(args.gt))
    pred = _load_series(Path(args.pred))
    report = evaluation.evaluate(gt, pred)
    print(report.format_text(Path(args.pred).stem or "COMBINED"))
    if args.json:
        _atomic_write(Path(args.json), lambda p: p.write_text(report.to_json() + "\n"))
    return 0


def cmd_synth(args) -> int:
    cfg = synth.SynthConfig.from_file(args.config) if args.config else synth.SynthConfig()
    if args.seed is not None:
        cfg = synth.SynthConfig.from_mapping({**json.loads(cfg.to_json()), "seed": args.seed})
    out = synth.generate(cfg)
    path = synth.write_output(out, args.out, render_masks=args.render_masks)
    (Path(args.out) / "config.json").write_text(cfg.to_json() + "\n")
    gaps = out.longest_gaps()
    print(f"wrote {path}: {len(out.series)} frames, {len(out.plant_ids)} plants, "
          f"{sum(g > 10 for g in gaps.values())} with gaps over 10 frames")
    return 0


def cmd_render(args) -> int:
    series = _load_series(Path(args.annotations))
    written = render.render_sequence(series, args.out, args.images)
    print(f"wrote {len(written)} images to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plantmots", description="Plant instance tracking with shape-based re-identification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="assign track ids to instance masks")
    p.add_argument("--input", required=True, help="annotation text file or directory of <frame>_<index>.png masks")
    p.add_argument("--output", required=True, help="tracked annotation text file")
    p.add_argument("--config", help="key = value tracker configuration file")
    p.add_argument("--s", type=int, help="candidate window slack")
    p.add_argument("--t-all", type=float, help="overall cost threshold")
    p.add_argument("--t-p", type=float, help="position cost threshold")
    p.add_argument("--fd-length", type=int, help="Fourier descriptor length")
    p.add_argument("--border-margin", type=int, help="rows at the top/bottom edge that discard an instance")
    p.add_argument("--feature-mode", choices=("combined", "contour", "blob"))
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="HOTA-family metrics of predictions against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--json", help="also write the full report as JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic forward/backward sequence")
    p.add_argument("--config", help="JSON or key = value generator configuration")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--render-masks", action="store_true", help="also write masks/<frame>_<id>.png")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("render", help="draw tracked instances over images or a black canvas")
    p.add_argument("--annotations", required=True)
    p.add_argument("--images", help="directory of frame images, matched by trailing frame number")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage to stderr
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except (InputError, PlantMotsError, OSError, UnicodeError) as exc:
        print(f"plantmots {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - reported, not expected
        print(f"plantmots {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
