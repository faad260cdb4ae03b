"""Scoring of predicted change masks against ground truth.

F1 is the harmonic mean of precision and recall over change pixels; mIoU
averages the IoU of the change and no-change classes. Ground truth is
conventionally masked to the visual overlap before scoring.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np


@dataclass
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp,
                         self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class PairScore:
    pair_id: str
    confusion: Confusion
    f1: float
    miou: float
    group: Optional[str] = None


@dataclass
class EvalReport:
    """Per-pair scores plus pooled (micro) and averaged (macro) summaries."""

    per_pair: List[PairScore]
    micro: Confusion
    micro_f1: float
    micro_miou: float
    macro_f1: float
    macro_miou: float
    group_key: Optional[str] = None


def mask_gt_outside_overlap(gt: np.ndarray, overlap: np.ndarray) -> np.ndarray:
    """Drop ground-truth labels outside the visual overlap."""
    if gt.shape != overlap.shape:
        raise ValueError("ground truth and overlap shapes differ")
    return gt & overlap


def _ratio(num: int, den: int) -> float:
    return num / den if den > 0 else 0.0


def _derive(conf: Confusion) -> Tuple[float, float]:
    if conf.tp == 0 and conf.fp == 0 and conf.fn == 0:
        # a correct "no change" verdict scores perfectly
        f1 = 1.0
        iou_change = 1.0
    else:
        precision = _ratio(conf.tp, conf.tp + conf.fp)
        recall = _ratio(conf.tp, conf.tp + conf.fn)
        f1 = _ratio_f(2 * precision * recall, precision + recall)
        iou_change = _ratio(conf.tp, conf.tp + conf.fp + conf.fn)
    iou_nochange = _ratio(conf.tn, conf.tn + conf.fp + conf.fn)
    return f1, (iou_change + iou_nochange) / 2.0


def _ratio_f(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def score(pred: np.ndarray, gt: np.ndarray,
          region: Optional[np.ndarray] = None) -> Tuple[Confusion, float, float]:
    """Confusion counts, F1, and mIoU of a prediction over `region`."""
    if pred.shape != gt.shape:
        raise ValueError("prediction and ground truth shapes differ")
    if region is None:
        region = np.ones(pred.shape, dtype=bool)
    elif region.shape != pred.shape:
        raise ValueError("region shape differs")
    if not region.any():
        raise ValueError("empty region")
    p = pred[region]
    g = gt[region]
    conf = Confusion(
        tp=int(np.count_nonzero(p & g)),
        fp=int(np.count_nonzero(p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
        tn=int(np.count_nonzero(~p & ~g)),
    )
    f1, miou = _derive(conf)
    return conf, f1, miou


def score_pair(pair_id: str, pred: np.ndarray, gt: np.ndarray,
               region: Optional[np.ndarray] = None,
               group: Optional[str] = None) -> PairScore:
    conf, f1, miou = score(pred, gt, region)
    return PairScore(pair_id=pair_id, confusion=conf, f1=f1, miou=miou, group=group)


def aggregate(scores: List[PairScore], group_key: Optional[str] = None) -> EvalReport:
    """Pool confusion counts (micro) and average per-pair scores (macro)."""
    if not scores:
        raise ValueError("nothing to aggregate")
    pooled = Confusion()
    for s in scores:
        pooled = pooled + s.confusion
    micro_f1, micro_miou = _derive(pooled)
    return EvalReport(
        per_pair=list(scores),
        micro=pooled,
        micro_f1=micro_f1,
        micro_miou=micro_miou,
        macro_f1=float(np.mean([s.f1 for s in scores])),
        macro_miou=float(np.mean([s.miou for s in scores])),
        group_key=group_key,
    )


def aggregate_by_group(scores: List[PairScore],
                       group_key: str = "group") -> Dict[str, EvalReport]:
    """One aggregate per distinct group label (plus 'all')."""
    reports = {"all": aggregate(scores, group_key)}
    labels = sorted({s.group for s in scores if s.group is not None})
    for label in labels:
        members = [s for s in scores if s.group == label]
        reports[label] = aggregate(members, group_key)
    return reports
