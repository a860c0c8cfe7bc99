"""Command-line entry point: ``softtrack <command> ...``.

Exit codes: 0 success, 1 failed self-check or other bad input, 2 parse
errors and dimension mismatches, 3 count mismatches between files.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import formats
from .config import Config, read_config
from .errors import (
    CountMismatch,
    DimensionMismatch,
    EmbeddingCountMismatch,
    ParseError,
    SoftTrackError,
)
from .metrics import evaluate
from .pseudo import OcclusionMask, filter_detections, generate_pseudo_labels, stereo_occlusion_masks
from .selfcheck import run_all
from .synth import SynthConfig, exact_motion, generate
from .tracker import run_sequence

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_COUNT = 0, 1, 2, 3


def track_files(dets_path, emb_path, out_path, config: Config) -> int:
    """Track one sequence; returns the number of output records."""
    dets = formats.read_detections(dets_path)
    embs = formats.read_embeddings(emb_path)
    if len(embs) != len(dets):
        raise CountMismatch(f"{len(dets)} detections but {len(embs)} embeddings")
    groups = formats.group_by_frame(dets)

    def stream():
        if not groups:
            return
        # step through empty frames too so that unmatched tracks keep aging
        for f in range(min(groups), max(groups) + 1):
            rows = groups.get(f, [])
            yield f, [dets[k] for k in rows], embs[rows].astype(float).reshape(len(rows), embs.shape[1])

    tracks = run_sequence(stream(), config.tracker())
    formats.write_tracks(out_path, tracks)
    return sum(len(v) for v in tracks.values())


def _track_job(args):
    return track_files(*args)


def cmd_track(ns, config: Config) -> int:
    n = len(ns.detections)
    if len(ns.embeddings) != n or len(ns.out) != n:
        raise CountMismatch("need one --embeddings and one --out per --detections")
    jobs = [(d, e, o, config) for d, e, o in zip(ns.detections, ns.embeddings, ns.out)]
    if ns.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            list(pool.map(_track_job, jobs))
    else:
        for job in jobs:
            _track_job(job)
    return EXIT_OK


def _read_mask(path) -> Optional[OcclusionMask]:
    if path is None:
        return None
    return OcclusionMask(formats.read_grid(path).values[:, :, 0] != 0)


def cmd_pseudolabel(ns, config: Config) -> int:
    ref = formats.read_detections(ns.ref)
    tgt = formats.read_detections(ns.tgt)
    motion = formats.read_grid(ns.motion)
    if motion.channels != 2:
        raise DimensionMismatch("motion grid must have 2 channels")
    keep_r = filter_detections(ref, config.min_conf, config.min_area, config.nms_iou)
    keep_t = filter_detections(tgt, config.min_conf, config.min_area, config.nms_iou)
    labels = generate_pseudo_labels(
        keep_r,
        keep_t,
        motion,
        config.min_match_iou,
        _read_mask(ns.ref_mask),
        _read_mask(ns.tgt_mask),
        config.occlusion_max_ratio,
    )
    # report indices of records in the input files
    pairs = [(keep_r[i].embedding_row, keep_t[j].embedding_row) for i, j in labels.pairs]
    Path(ns.out).write_text(formats.format_labels(pairs))
    report = formats.label_report(labels)
    report["filtered_ref"] = len(ref) - len(keep_r)
    report["filtered_tgt"] = len(tgt) - len(keep_t)
    Path(ns.report or f"{ns.out}.report").write_text(formats.format_report(report))
    return EXIT_OK


def cmd_occlusion(ns, config: Config) -> int:
    d_left = formats.read_grid(ns.left)
    d_right = formats.read_grid(ns.right)
    if d_left.channels != 1 or d_right.channels != 1:
        raise DimensionMismatch("disparity grids must have 1 channel")
    om_left, om_right = stereo_occlusion_masks(d_left, d_right, config.tau_occ)
    formats.write_grid(ns.out_left, om_left.bits.astype(np.float32))
    formats.write_grid(ns.out_right, om_right.bits.astype(np.float32))
    return EXIT_OK


def cmd_eval(ns, config: Config) -> int:
    pred = formats.read_tracks(ns.pred)
    gt = formats.read_tracks(ns.gt)
    text = evaluate(pred, gt, config.iou_thresh_eval).to_text()
    if ns.out:
        Path(ns.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_selfcheck(ns, config: Config) -> int:
    results = run_all(config.tracker())
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_synth(ns, config: Config) -> int:
    sc = SynthConfig(
        num_objects=ns.objects,
        num_frames=ns.frames,
        dim=ns.dim,
        separation=ns.separation,
        noise_sigma=ns.noise,
        occlusions_per_object=ns.occlusions,
        enter_exit=ns.enter_exit,
        allow_overlap=not ns.no_overlap,
    )
    s = generate(sc, ns.seed)
    out = Path(ns.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dets, embs = [], []
    for f in range(s.num_frames):
        d, e, _ = s.detections(f)
        dets.extend(d)
        embs.append(e)
    formats.write_detections(out / "detections.txt", dets)
    formats.write_embeddings(out / "embeddings.bin", np.concatenate(embs) if embs else np.zeros((0, sc.dim)))
    formats.write_tracks(out / "gt.txt", s.ground_truth())
    a, b = ns.pair
    formats.write_detections(out / "ref.txt", s.detections(a)[0])
    formats.write_detections(out / "tgt.txt", s.detections(b)[0])
    formats.write_grid(out / "motion.grid", exact_motion(s, a, b))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="softtrack", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key=value config file (defaults when omitted)")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("track", help="track detection sequences")
    t.add_argument("--detections", nargs="+", required=True)
    t.add_argument("--embeddings", nargs="+", required=True)
    t.add_argument("--out", nargs="+", required=True)
    t.add_argument("--jobs", type=int, default=1, help="sequences tracked in parallel")
    t.set_defaults(func=cmd_track)

    q = sub.add_parser("pseudolabel", help="association pseudo-labels for a frame pair")
    q.add_argument("--ref", required=True)
    q.add_argument("--tgt", required=True)
    q.add_argument("--motion", required=True, help="2-channel flow grid, ref to tgt")
    q.add_argument("--ref-mask", help="occlusion mask grid for the ref frame")
    q.add_argument("--tgt-mask", help="occlusion mask grid for the tgt frame")
    q.add_argument("--out", required=True)
    q.add_argument("--report", help="sidecar statistics (default: OUT.report)")
    q.set_defaults(func=cmd_pseudolabel)

    o = sub.add_parser("occlusion", help="stereo occlusion masks from disparity grids")
    o.add_argument("--left", required=True)
    o.add_argument("--right", required=True)
    o.add_argument("--out-left", required=True)
    o.add_argument("--out-right", required=True)
    o.set_defaults(func=cmd_occlusion)

    e = sub.add_parser("eval", help="association metrics of predicted vs ground-truth tracks")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--out", help="report path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("selfcheck", help="run the oracle battery")
    s.set_defaults(func=cmd_selfcheck)

    y = sub.add_parser("synth", help="emit a synthetic scenario as files")
    y.add_argument("--out-dir", required=True)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--objects", type=int, default=8)
    y.add_argument("--frames", type=int, default=50)
    y.add_argument("--dim", type=int, default=16)
    y.add_argument("--separation", type=float, default=0.5)
    y.add_argument("--noise", type=float, default=0.0)
    y.add_argument("--occlusions", type=int, default=0, help="occlusion windows per object")
    y.add_argument("--enter-exit", action="store_true")
    y.add_argument("--no-overlap", action="store_true")
    y.add_argument("--pair", type=int, nargs=2, default=(0, 1), metavar=("A", "B"),
                   help="frames for ref.txt/tgt.txt/motion.grid")
    y.set_defaults(func=cmd_synth)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        config = read_config(ns.config)
        return ns.func(ns, config)
    except (CountMismatch, EmbeddingCountMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COUNT
    except (ParseError, DimensionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (SoftTrackError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
