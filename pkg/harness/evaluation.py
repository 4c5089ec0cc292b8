"""IoU, mAP@50 against raytraced ground truth, and pseudo-label class accuracy"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from domain.constants import DEFAULT_IOU_THRESHOLD, MIN_MASK_PIXELS
from domain.errors import EvaluationError
from domain.models import Box, Detection, FrameObservation, PseudoLabel, bbox_of
from perception.detector import normalized_logits
from world.scene import Scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruthBox:
    frame_id: int
    class_id: int
    bbox: Box


@dataclass(frozen=True)
class Prediction:
    frame_id: int
    class_id: int
    score: float
    bbox: Box


@dataclass
class MapResult:
    map50: float
    per_class: dict[int, float] = field(default_factory=dict)


def iou(a, b) -> float:
    """Intersection over union of (x_min, y_min, x_max, y_max) boxes in continuous coordinates"""
    area_a = max(0.0, a[2] - a[0]) * max(0.0, a[3] - a[1])
    area_b = max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])
    iw = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    ih = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = iw * ih
    union = area_a + area_b - inter
    if union <= 0.0:
        return 1.0 if tuple(a) == tuple(b) else 0.0
    return inter / union


def pixel_box_iou(a: Box, b: Box) -> float:
    """IoU of inclusive pixel boxes: a box covers its last row and column"""
    return iou((a[0], a[1], a[2] + 1, a[3] + 1), (b[0], b[1], b[2] + 1, b[3] + 1))


def ground_truth_boxes(frames: list[FrameObservation], scene: Scene, min_pixels: int = MIN_MASK_PIXELS) -> list[GroundTruthBox]:
    """Per-frame boxes of every ground-truth object covering at least min_pixels rays"""
    boxes = []
    for obs in frames:
        for gt_id in sorted(obs.visible):
            mask = obs.object_mask(gt_id)
            if len(mask) >= min_pixels:
                boxes.append(GroundTruthBox(obs.frame_id, scene.objects_by_id[gt_id].class_id, bbox_of(mask)))
    return boxes


def average_precision(recall: np.ndarray, precision: np.ndarray) -> float:
    """All-point interpolated area under the precision/recall curve"""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    i = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def evaluate_map50(
    predictions: list[Prediction],
    ground_truth: list[GroundTruthBox],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MapResult:
    """Per-class AP with greedy score-ordered matching; mean over classes present in the ground truth"""
    if not ground_truth:
        raise EvaluationError("no ground-truth boxes to evaluate against")
    gt_by_class: dict[int, dict[int, list[Box]]] = defaultdict(lambda: defaultdict(list))
    for g in ground_truth:
        gt_by_class[g.class_id][g.frame_id].append(g.bbox)

    per_class = {}
    for class_id in sorted(gt_by_class):
        remaining = {f: list(b) for f, b in gt_by_class[class_id].items()}
        n_gt = sum(len(b) for b in remaining.values())
        preds = sorted(
            (p for p in predictions if p.class_id == class_id),
            key=lambda p: (-p.score, p.frame_id),
        )
        tp = np.zeros(len(preds))
        for k, pred in enumerate(preds):
            candidates = remaining.get(pred.frame_id, [])
            if not candidates:
                continue
            ious = [pixel_box_iou(pred.bbox, g) for g in candidates]
            best = int(np.argmax(ious))
            if ious[best] >= iou_threshold:
                tp[k] = 1.0
                candidates.pop(best)
        if len(preds) == 0:
            per_class[class_id] = 0.0
            continue
        ctp = np.cumsum(tp)
        cfp = np.cumsum(1.0 - tp)
        per_class[class_id] = average_precision(ctp / n_gt, ctp / np.maximum(ctp + cfp, np.finfo(float).eps))
    result = MapResult(map50=float(np.mean(list(per_class.values()))), per_class=per_class)
    logger.debug("mAP@%.2f = %.4f over %d classes", iou_threshold, result.map50, len(per_class))
    return result


def detection_predictions(detections: list[Detection]) -> list[Prediction]:
    """Raw detections scored by their maximum softmax probability"""
    return [
        Prediction(d.frame_id, d.class_id, float(normalized_logits(d.logits).max()), d.bbox) for d in detections
    ]


def pseudo_label_predictions(labels: list[PseudoLabel]) -> list[Prediction]:
    """Reconciled labels scored by the maximum of their aggregated softmax"""
    return [Prediction(lb.frame_id, lb.class_id, float(np.max(lb.lambda_bar)), lb.bbox) for lb in labels]


def _pixel_accuracy(items, frames_by_id: dict[int, FrameObservation], scene: Scene) -> float | None:
    correct = 0
    total = 0
    for frame_id, class_id, mask in items:
        hit = frames_by_id[frame_id].hit_label
        for col, row in mask:
            total += 1
            gt_id = int(hit[row, col])
            if gt_id >= 0 and scene.objects_by_id[gt_id].class_id == class_id:
                correct += 1
    return correct / total if total else None


def raw_class_accuracy(detections: list[Detection], frames: list[FrameObservation], scene: Scene) -> float | None:
    """Mask-pixel weighted class accuracy of the per-view detections"""
    frames_by_id = {f.frame_id: f for f in frames}
    return _pixel_accuracy(((d.frame_id, d.class_id, d.mask) for d in detections), frames_by_id, scene)


def pseudo_label_accuracy(labels: list[PseudoLabel], frames: list[FrameObservation], scene: Scene) -> float | None:
    """Mask-pixel weighted class accuracy of reconciled labels against the rendered ground truth"""
    frames_by_id = {f.frame_id: f for f in frames}
    return _pixel_accuracy(((lb.frame_id, lb.class_id, lb.mask) for lb in labels), frames_by_id, scene)
