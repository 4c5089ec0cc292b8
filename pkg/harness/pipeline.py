"""Full experiment for one seed: explore, reconcile, fine-tune, evaluate on an unseen scene"""
import logging
from dataclasses import replace

import numpy as np

from domain.constants import PERCEPTION_GT, PERCEPTION_RAW
from domain.errors import EvaluationError
from domain.models import Detection, EpisodeMetrics
from training.finetune_head import (
    HeadParams,
    TrainSample,
    evaluate_head,
    hyper_for_mode,
    init_head,
    predict_classes,
    samples_from_dataset,
    samples_from_detections,
    train,
)
from world.scene import Scene, generate_scene

from .config import RunConfig
from .episode import EpisodeResult, run_episode
from .evaluation import Prediction, detection_predictions, evaluate_map50, ground_truth_boxes

logger = logging.getLogger(__name__)


def samples_from_ground_truth(detections: list[Detection], scene: Scene, n_classes: int) -> list[TrainSample]:
    """Upper bound: detections relabelled with their true class and object identity"""
    samples = []
    for det in detections:
        class_id = scene.objects_by_id[det.hidden_gt_id].class_id
        samples.append(TrainSample(np.asarray(det.feature), class_id, np.eye(n_classes)[class_id], det.hidden_gt_id, det.frame_id))
    return samples


def training_samples(result: EpisodeResult, mode: str, n_classes: int) -> list[TrainSample]:
    if mode == PERCEPTION_RAW:
        return samples_from_detections(result.detections)
    if mode == PERCEPTION_GT:
        return samples_from_ground_truth(result.detections, result.scene, n_classes)
    return samples_from_dataset(result.dataset)


def holdout_set(result: EpisodeResult) -> list[tuple[np.ndarray, int]]:
    """(feature, true class) of every detection in a holdout episode"""
    return [(np.asarray(d.feature), result.scene.objects_by_id[d.hidden_gt_id].class_id) for d in result.detections]


def head_predictions(params: HeadParams, detections: list[Detection]) -> list[Prediction]:
    """Holdout detections with their class and score replaced by the head's"""
    if not detections:
        return []
    classes, probs = predict_classes(params, np.array([d.feature for d in detections]))
    return [
        Prediction(d.frame_id, int(c), float(p.max()), d.bbox) for d, c, p in zip(detections, classes.tolist(), probs)
    ]


def run_holdout(config: RunConfig, seed: int) -> EpisodeResult:
    holdout_seed = seed + config.eval.holdout_seed_offset
    steps = max(1, int(round(config.steps * config.eval.holdout_fraction)))
    scene = generate_scene(config.scene, holdout_seed)
    return run_episode(replace(config, steps=steps), holdout_seed, scene=scene, evaluate=False)


def run_pipeline(config: RunConfig, seed: int) -> EpisodeMetrics:
    """One complete, seeded experiment; returns its metrics fragment"""
    result = run_episode(config, seed)
    metrics = result.metrics
    metrics.extra["perception"] = config.perception
    metrics.extra["alpha"] = config.finetune.alpha
    samples = training_samples(result, config.perception, config.detector.n_classes)
    if not samples:
        logger.warning("seed=%d: no training samples for perception mode %s", seed, config.perception)
        return metrics

    hyper = hyper_for_mode(config.finetune, config.perception)
    initial = init_head(config.detector.n_classes, config.detector.feature_dim, hyper.projector_dim, seed)
    trained, curve = train(initial, samples, hyper, seed=seed)
    if curve:
        metrics.extra["final_loss"] = curve[-1]["total"]
    metrics.extra["n_train_samples"] = len(samples)

    holdout = run_holdout(config, seed)
    evaluation_set = holdout_set(holdout)
    if not evaluation_set:
        logger.warning("seed=%d: holdout episode produced no detections", seed)
        return metrics
    metrics.head_holdout_accuracy = evaluate_head(trained, evaluation_set).accuracy
    metrics.untrained_head_accuracy = evaluate_head(initial, evaluation_set).accuracy
    try:
        gt = ground_truth_boxes(holdout.frames, holdout.scene)
        threshold = config.eval.iou_threshold
        metrics.map50_holdout_raw = evaluate_map50(detection_predictions(holdout.detections), gt, threshold).map50
        metrics.map50_finetuned = evaluate_map50(head_predictions(trained, holdout.detections), gt, threshold).map50
    except EvaluationError as e:
        logger.warning("seed=%d: holdout mAP skipped: %s", seed, e)
    logger.info(
        "seed=%d perception=%s head accuracy %.4f (untrained %.4f)",
        seed, config.perception, metrics.head_holdout_accuracy, metrics.untrained_head_accuracy,
    )
    return metrics
