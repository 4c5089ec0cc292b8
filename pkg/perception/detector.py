"""Parameterised noisy detector standing in for an off-the-shelf instance segmenter

Per visible object the detector samples a class from the confusion row of the
true class, builds logits that are sharp for good views and flat for distant or
occluded ones, and emits a feature vector that identifies the object.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from domain.errors import ConfigError, NonFiniteError
from domain.models import Detection, FrameObservation, bbox_of

logger = logging.getLogger(__name__)

CLASS_SEPARATION = 2.0


def confusion_with_pairs(n_classes: int, pairs, flip: float) -> np.ndarray:
    """Identity confusion with symmetric swaps of probability `flip` for each pair"""
    if not 0.0 <= flip <= 1.0:
        raise ConfigError("flip probability must lie in [0, 1]")
    confusion = np.eye(n_classes)
    for a, b in pairs:
        if a == b or not (0 <= a < n_classes and 0 <= b < n_classes):
            raise ConfigError(f"invalid confusable pair ({a}, {b})")
        for src, dst in ((a, b), (b, a)):
            confusion[src, src] = 1.0 - flip
            confusion[src, dst] = flip
    return confusion


@dataclass(frozen=True, eq=False)
class DetectorProfile:
    """Error model of the synthetic detector

    With the default `residual_true` of 0 a view scores kappa * onehot(sampled) plus noise.
    A positive `residual_true` keeps part of the logit mass on the true class when the
    sampled class is a confusion, so confused views are less confident.
    View noise scale = dist_coeff * distance / max_range + frac_coeff * (1 - visible_fraction).
    """
    n_classes: int = 8
    confusion: np.ndarray | None = None
    kappa: float = 4.0
    miss_rate: float = 0.1
    residual_true: float = 0.0
    feature_dim: int = 16
    feature_noise_sigma: float = 0.3
    instance_sigma: float = 0.5
    dist_coeff: float = 1.0
    frac_coeff: float = 0.5
    feature_seed: int = 0
    feature_means: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.n_classes < 2:
            raise ConfigError("detector needs at least 2 classes")
        confusion = np.eye(self.n_classes) if self.confusion is None else np.asarray(self.confusion, dtype=float)
        if confusion.shape != (self.n_classes, self.n_classes):
            raise ConfigError(f"confusion must be {self.n_classes}x{self.n_classes}")
        if (confusion < 0).any() or np.abs(confusion.sum(axis=1) - 1.0).max() > 1e-9:
            raise ConfigError("confusion rows must be non-negative and sum to 1")
        if self.kappa <= 0.0:
            raise ConfigError("kappa must be positive")
        if not 0.0 <= self.miss_rate < 1.0:
            raise ConfigError("miss_rate must lie in [0, 1)")
        if not 0.0 <= self.residual_true < 1.0:
            raise ConfigError("residual_true must lie in [0, 1)")
        if self.feature_dim < 1 or self.feature_noise_sigma <= 0.0 or self.instance_sigma < 0.0:
            raise ConfigError("invalid feature parameters")
        if self.dist_coeff < 0.0 or self.frac_coeff < 0.0:
            raise ConfigError("view noise coefficients must be non-negative")
        means = self.feature_means
        if means is None:
            rng = np.random.default_rng([self.feature_seed, 1])
            means = rng.normal(0.0, CLASS_SEPARATION, size=(self.n_classes, self.feature_dim))
        means = np.asarray(means, dtype=float)
        if means.shape != (self.n_classes, self.feature_dim):
            raise ConfigError("feature_means must be n_classes x feature_dim")
        confusion.flags.writeable = False
        means.flags.writeable = False
        object.__setattr__(self, "confusion", confusion)
        object.__setattr__(self, "feature_means", means)

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorProfile":
        n_classes = int(data.get("n_classes", 8))
        confusion = data.get("confusion")
        if confusion is None and data.get("confusable_pairs"):
            confusion = confusion_with_pairs(n_classes, data["confusable_pairs"], float(data.get("flip", 0.3)))
        view_noise = data.get("view_noise", {})
        defaults = cls(n_classes=n_classes)
        return cls(
            n_classes=n_classes,
            confusion=None if confusion is None else np.asarray(confusion, dtype=float),
            kappa=float(data.get("kappa", defaults.kappa)),
            miss_rate=float(data.get("miss_rate", defaults.miss_rate)),
            residual_true=float(data.get("residual_true", defaults.residual_true)),
            feature_dim=int(data.get("feature_dim", defaults.feature_dim)),
            feature_noise_sigma=float(data.get("feature_noise_sigma", defaults.feature_noise_sigma)),
            instance_sigma=float(data.get("instance_sigma", defaults.instance_sigma)),
            dist_coeff=float(view_noise.get("dist_coeff", defaults.dist_coeff)),
            frac_coeff=float(view_noise.get("frac_coeff", defaults.frac_coeff)),
            feature_seed=int(data.get("feature_seed", defaults.feature_seed)),
        )

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "confusion": self.confusion.tolist(),
            "kappa": self.kappa,
            "miss_rate": self.miss_rate,
            "residual_true": self.residual_true,
            "feature_dim": self.feature_dim,
            "feature_noise_sigma": self.feature_noise_sigma,
            "instance_sigma": self.instance_sigma,
            "view_noise": {"dist_coeff": self.dist_coeff, "frac_coeff": self.frac_coeff},
            "feature_seed": self.feature_seed,
        }


def normalized_logits(logits) -> np.ndarray:
    """Softmax of a logit vector"""
    logits = np.asarray(logits, dtype=float)
    if not np.isfinite(logits).all():
        raise NonFiniteError(f"non-finite logits {logits}")
    shifted = np.exp(logits - logits.max())
    return shifted / shifted.sum()


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a (n, C) array"""
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def view_noise_scale(profile: DetectorProfile, distance: float, visible_fraction: float, max_range: float) -> float:
    return profile.dist_coeff * distance / max_range + profile.frac_coeff * (1.0 - visible_fraction)


def sample_logits(profile: DetectorProfile, true_class: int, noise_scale: float, rng: np.random.Generator) -> np.ndarray:
    """Sample a confused class and build its logit vector"""
    cdf = np.cumsum(profile.confusion[true_class])
    sampled = min(int(np.searchsorted(cdf, rng.random(), side="right")), profile.n_classes - 1)
    logits = np.zeros(profile.n_classes)
    logits[sampled] = profile.kappa
    if sampled != true_class:
        logits[true_class] += profile.residual_true * profile.kappa
    logits += noise_scale * rng.standard_normal(profile.n_classes)
    return logits


def instance_offset(profile: DetectorProfile, gt_id: int) -> np.ndarray:
    rng = np.random.default_rng([profile.feature_seed, 2, gt_id])
    return profile.instance_sigma * rng.standard_normal(profile.feature_dim)


def object_feature(profile: DetectorProfile, gt_id: int, class_id: int, rng: np.random.Generator) -> np.ndarray:
    return (
        profile.feature_means[class_id]
        + instance_offset(profile, gt_id)
        + profile.feature_noise_sigma * rng.standard_normal(profile.feature_dim)
    )


def detect(profile: DetectorProfile, obs: FrameObservation, rng_seed: int) -> list[Detection]:
    """Noisy detections for every visible object of a frame"""
    detections: list[Detection] = []
    for gt_id in sorted(obs.visible):
        mask = obs.object_mask(gt_id)
        if not mask:
            continue
        rng = np.random.default_rng([rng_seed, gt_id])
        if rng.random() < profile.miss_rate:
            continue
        true_class = obs.visible_classes[gt_id]
        rows, cols = np.nonzero(obs.hit_label == gt_id)
        distance = float(np.mean(obs.depth[rows, cols]))
        scale = view_noise_scale(profile, distance, obs.visible_fraction.get(gt_id, 1.0), obs.max_range)
        logits = sample_logits(profile, true_class, scale, rng)
        detections.append(
            Detection(
                frame_id=obs.frame_id,
                mask=mask,
                bbox=bbox_of(mask),
                class_id=int(np.argmax(logits)),
                logits=logits,
                feature=object_feature(profile, gt_id, true_class, rng),
                hidden_gt_id=gt_id,
                det_index=len(detections),
            )
        )
    return detections


def roi_features(profile: DetectorProfile, obs: FrameObservation, mask, rng_seed: int) -> np.ndarray:
    """Backbone feature of the object covering most of a region's rays"""
    rng = np.random.default_rng([rng_seed, 3])
    ids = [int(obs.hit_label[row, col]) for col, row in mask]
    ids = [i for i in ids if i >= 0]
    if not ids:
        return profile.feature_noise_sigma * rng.standard_normal(profile.feature_dim)
    values, counts = np.unique(ids, return_counts=True)
    gt_id = int(values[np.argmax(counts)])
    return object_feature(profile, gt_id, obs.visible_classes[gt_id], rng)
