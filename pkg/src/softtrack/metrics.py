"""Association metrics: IDF1, ID switches, pairwise association precision/recall.

Predictions and ground truth share one shape: a mapping from frame to a
list of ``(id, box)``. Per-frame detection matching is a Hungarian solve
on ``1 - IoU`` restricted to pairs at or above the IoU threshold.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .assign import hungarian
from .geom import BoundingBox, iou_matrix

Tracks = Mapping[int, Sequence[tuple[int, BoundingBox]]]

IOU_THRESH = 0.5


@dataclass(frozen=True)
class FrameMatch:
    tp: tuple[tuple[int, int], ...]  # (pred index, gt index) within the frame
    fp: tuple[int, ...]
    fn: tuple[int, ...]


@dataclass(frozen=True)
class MetricReport:
    idf1: float
    id_switches: int
    assoc_precision: float
    assoc_recall: float
    tp: int
    fp: int
    fn: int

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())


def _match_one(pred, gt, iou_thresh):
    if not pred or not gt:
        return FrameMatch((), tuple(range(len(pred))), tuple(range(len(gt))))
    ious = iou_matrix([b for _, b in pred], [b for _, b in gt])
    ok = ious >= iou_thresh
    # forbidden pairs cost more than any full set of allowed pairs
    cost = np.where(ok, 1.0 - ious, 2.0 * (min(ious.shape) + 1))
    tp = tuple((i, j) for i, j in hungarian(cost).matches if ok[i, j])
    pi = {i for i, _ in tp}
    gj = {j for _, j in tp}
    return FrameMatch(
        tp,
        tuple(i for i in range(len(pred)) if i not in pi),
        tuple(j for j in range(len(gt)) if j not in gj),
    )


def match_frames(pred: Tracks, gt: Tracks, iou_thresh: float = IOU_THRESH) -> dict[int, FrameMatch]:
    if not (0.0 < iou_thresh <= 1.0):
        raise ValueError(f"iou_thresh {iou_thresh} outside (0, 1]")
    frames = sorted(set(pred) | set(gt))
    return {f: _match_one(list(pred.get(f, ())), list(gt.get(f, ())), iou_thresh) for f in frames}


def _tp_ids(pred: Tracks, gt: Tracks, iou_thresh: float):
    """``(frame, gt_id, pred_id)`` for every per-frame true positive."""
    out = []
    for f, m in sorted(match_frames(pred, gt, iou_thresh).items()):
        p, g = pred.get(f, ()), gt.get(f, ())
        out.extend((f, g[j][0], p[i][0]) for i, j in m.tp)
    return out


def idf1(pred: Tracks, gt: Tracks, iou_thresh: float = IOU_THRESH) -> float:
    """Identity F1 under the best one-to-one pred-id to gt-id mapping.

    A (gt id, pred id) pair scores one identity match for every frame in
    which both are present with IoU at or above the threshold.
    """
    n_pred = sum(len(v) for v in pred.values())
    n_gt = sum(len(v) for v in gt.values())
    if n_pred + n_gt == 0:
        return 1.0
    pred_ids = sorted({i for v in pred.values() for i, _ in v})
    gt_ids = sorted({i for v in gt.values() for i, _ in v})
    if not pred_ids or not gt_ids:
        return 0.0
    pidx = {k: n for n, k in enumerate(pred_ids)}
    gidx = {k: n for n, k in enumerate(gt_ids)}
    counts = np.zeros((len(gt_ids), len(pred_ids)))
    for f in set(pred) & set(gt):
        p, g = list(pred[f]), list(gt[f])
        if not p or not g:
            continue
        ok = iou_matrix([b for _, b in g], [b for _, b in p]) >= iou_thresh
        for a, b in zip(*np.nonzero(ok)):
            counts[gidx[g[a][0]], pidx[p[b][0]]] += 1
    idtp = -hungarian(-counts).cost(-counts)
    idfp = n_pred - idtp
    idfn = n_gt - idtp
    return float(2 * idtp / (2 * idtp + idfp + idfn))


def id_switches(pred: Tracks, gt: Tracks, iou_thresh: float = IOU_THRESH) -> int:
    last: dict[int, int] = {}
    switches = 0
    for _, g, p in _tp_ids(pred, gt, iou_thresh):
        if g in last and last[g] != p:
            switches += 1
        last[g] = p
    return switches


def _pairs(n) -> int:
    return n * (n - 1) // 2


def assoc_pr(pred: Tracks, gt: Tracks, iou_thresh: float = IOU_THRESH) -> tuple[float, float]:
    """Pairwise association precision and recall over true positives.

    Recall: of all TP pairs sharing a gt id, the share also sharing a pred
    id. Precision: of all TP pairs sharing a pred id, the share also sharing
    a gt id. A ratio with no pairs to count is 1 if there are any TPs and 0
    otherwise.
    """
    tps = _tp_ids(pred, gt, iou_thresh)
    if not tps:
        return 0.0, 0.0
    both = sum(_pairs(n) for n in Counter((g, p) for _, g, p in tps).values())
    same_gt = sum(_pairs(n) for n in Counter(g for _, g, _ in tps).values())
    same_pred = sum(_pairs(n) for n in Counter(p for _, _, p in tps).values())
    precision = both / same_pred if same_pred else 1.0
    recall = both / same_gt if same_gt else 1.0
    return precision, recall


def evaluate(pred: Tracks, gt: Tracks, iou_thresh: float = IOU_THRESH) -> MetricReport:
    matches = match_frames(pred, gt, iou_thresh)
    precision, recall = assoc_pr(pred, gt, iou_thresh)
    return MetricReport(
        idf1=idf1(pred, gt, iou_thresh),
        id_switches=id_switches(pred, gt, iou_thresh),
        assoc_precision=precision,
        assoc_recall=recall,
        tp=sum(len(m.tp) for m in matches.values()),
        fp=sum(len(m.fp) for m in matches.values()),
        fn=sum(len(m.fn) for m in matches.values()),
    )
