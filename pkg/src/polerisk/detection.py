"""Detector-output evaluation: IoU matching, per-class AP, and mAP.

Detections and ground truth arrive as CSV files so any external detector can
be scored without pulling model code into this package. AP uses all-point
interpolation (exact area under the precision envelope).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .imaging import BBox

IOU_THRESHOLD_DEFAULT = 0.5

DETECTIONS_HEADER = ["image_id", "class_id", "score", "x_min", "y_min", "x_max", "y_max"]
GROUND_TRUTH_HEADER = ["image_id", "class_id", "x_min", "y_min", "x_max", "y_max"]


@dataclass(frozen=True)
class Detection:
    image_id: str
    class_id: int
    score: float
    box: BBox

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    image_id: str
    class_id: int
    box: BBox


@dataclass(frozen=True)
class EvalReport:
    per_class_ap: dict[int, float]
    n_classes: int
    map_value: float
    iou_threshold: float


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area, in [0, 1]."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def match_detections(dets: list[Detection], gts: list[GroundTruth],
                     iou_thresh: float = IOU_THRESHOLD_DEFAULT
                     ) -> list[tuple[Detection, bool]]:
    """Greedy matching: score-descending detections claim their best unmatched GT.

    Ties in score keep input order (stable sort). A detection is a true
    positive when its best same-image, same-class, unmatched ground-truth box
    reaches the IoU threshold; each ground-truth box is claimed at most once.
    """
    if not (0.0 < iou_thresh <= 1.0):
        raise ValueError("iou_thresh must be in (0, 1]")
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    claimed = [False] * len(gts)
    flagged: list[tuple[Detection, bool]] = []
    for i in order:
        det = dets[i]
        best_j = -1
        best_iou = 0.0
        for j, gt in enumerate(gts):
            if claimed[j] or gt.image_id != det.image_id or gt.class_id != det.class_id:
                continue
            value = iou(det.box, gt.box)
            if value > best_iou:
                best_iou, best_j = value, j
        if best_j >= 0 and best_iou >= iou_thresh:
            claimed[best_j] = True
            flagged.append((det, True))
        else:
            flagged.append((det, False))
    return flagged


def average_precision(matches: list[bool], n_gt: int) -> float | None:
    """All-point interpolated AP from an ordered TP/FP flag sequence.

    Returns None when the class has neither ground truth nor detections
    (undefined, excluded from the mean); zero ground truth with detections
    present scores 0.
    """
    if n_gt < 0:
        raise ValueError("n_gt must be non-negative")
    if n_gt == 0:
        return 0.0 if matches else None
    if not matches:
        return 0.0
    tp = 0
    fp = 0
    recalls = []
    precisions = []
    for flag in matches:
        if flag:
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    # Precision envelope: max precision at any recall >= r, integrated over recall.
    ap = 0.0
    prev_recall = 0.0
    for k in range(len(matches)):
        if recalls[k] == prev_recall:
            continue
        envelope = max(precisions[k:])
        ap += (recalls[k] - prev_recall) * envelope
        prev_recall = recalls[k]
    return ap


def mean_average_precision(dets: list[Detection], gts: list[GroundTruth],
                           iou_thresh: float = IOU_THRESHOLD_DEFAULT) -> EvalReport:
    """Per-class AP and their arithmetic mean over all evaluable classes."""
    flagged = match_detections(dets, gts, iou_thresh)
    classes = sorted({d.class_id for d in dets} | {g.class_id for g in gts})
    per_class: dict[int, float] = {}
    for cls in classes:
        flags = [tp for det, tp in flagged if det.class_id == cls]
        n_gt = sum(1 for g in gts if g.class_id == cls)
        ap = average_precision(flags, n_gt)
        if ap is not None:
            per_class[cls] = ap
    if not per_class:
        raise ValueError("no evaluable classes")
    map_value = sum(per_class.values()) / len(per_class)
    return EvalReport(per_class_ap=per_class, n_classes=len(per_class),
                      map_value=map_value, iou_threshold=iou_thresh)


def _read_rows(csv_text: str, expected_header: list[str]) -> list[dict[str, str]]:
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValueError("empty CSV") from None
    if [h.strip() for h in header] != expected_header:
        raise ValueError(f"expected header {','.join(expected_header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(expected_header):
            raise ValueError(f"wrong column count, line {lineno}")
        rows.append(dict(zip(expected_header, (cell.strip() for cell in row))))
    return rows


def load_detections_csv(csv_text: str) -> list[Detection]:
    return [
        Detection(image_id=r["image_id"], class_id=int(r["class_id"]),
                  score=float(r["score"]),
                  box=BBox(float(r["x_min"]), float(r["y_min"]),
                           float(r["x_max"]), float(r["y_max"])))
        for r in _read_rows(csv_text, DETECTIONS_HEADER)
    ]


def load_ground_truth_csv(csv_text: str) -> list[GroundTruth]:
    return [
        GroundTruth(image_id=r["image_id"], class_id=int(r["class_id"]),
                    box=BBox(float(r["x_min"]), float(r["y_min"]),
                             float(r["x_max"]), float(r["y_max"])))
        for r in _read_rows(csv_text, GROUND_TRUTH_HEADER)
    ]
