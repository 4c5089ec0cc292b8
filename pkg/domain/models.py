"""Domain models shared by the world, perception, exploration and harness packages"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * math.pi

Voxel = tuple[int, int, int]
Cell = tuple[int, int]
Pixel = tuple[int, int]  # (column, row)
Box = tuple[int, int, int, int]  # (x_min, y_min, x_max, y_max), inclusive pixel coordinates


def normalize_heading(heading: float) -> float:
    """Wrap an angle into [0, 2*pi)"""
    wrapped = math.fmod(heading, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


def bbox_of(mask) -> Box:
    """Minimal axis-aligned rectangle containing a non-empty pixel set"""
    if not mask:
        raise ValueError("bounding box of an empty mask")
    xs = [p[0] for p in mask]
    ys = [p[1] for p in mask]
    return (min(xs), min(ys), max(xs), max(ys))


@dataclass(frozen=True)
class AgentPose:
    """Agent position in meters, heading in radians (0 = east, counter-clockwise)"""
    position: tuple[float, float]
    heading: float = 0.0
    camera_height: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "heading", normalize_heading(float(self.heading)))

    def cell(self, voxel_size: float) -> Cell:
        return (int(math.floor(self.position[0] / voxel_size)), int(math.floor(self.position[1] / voxel_size)))

    def to_dict(self) -> dict:
        return {"position": list(self.position), "heading": self.heading, "camera_height": self.camera_height}

    @classmethod
    def from_dict(cls, data: dict) -> "AgentPose":
        return cls(position=tuple(data["position"]), heading=data["heading"], camera_height=data["camera_height"])


@dataclass(frozen=True)
class CameraModel:
    """Ray-fan camera: width x height rays spread over hfov x vfov (radians)"""
    hfov: float = math.radians(90.0)
    vfov: float = math.radians(90.0)
    width: int = 64
    height: int = 64
    max_range: float = 5.0

    def __post_init__(self) -> None:
        if not (0.0 < self.hfov < math.pi) or not (0.0 < self.vfov < math.pi):
            raise ConfigError("camera field of view must lie in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise ConfigError("camera resolution must be at least 1x1")
        if self.max_range <= 0.0:
            raise ConfigError("camera max_range must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "CameraModel":
        defaults = cls()
        return cls(
            hfov=math.radians(float(data.get("hfov_deg", math.degrees(defaults.hfov)))),
            vfov=math.radians(float(data.get("vfov_deg", math.degrees(defaults.vfov)))),
            width=int(data.get("width", defaults.width)),
            height=int(data.get("height", defaults.height)),
            max_range=float(data.get("max_range", defaults.max_range)),
        )

    def to_dict(self) -> dict:
        return {
            "hfov_deg": math.degrees(self.hfov),
            "vfov_deg": math.degrees(self.vfov),
            "width": self.width,
            "height": self.height,
            "max_range": self.max_range,
        }


@dataclass(frozen=True, eq=False)
class FrameObservation:
    """One raycast frame

    Per-ray arrays are indexed [row, column]. `hit_label` holds the gt_id of the
    object hit by the ray (-1 otherwise), `hit_points` the 3D point (meters) in the
    middle of the hit voxel's ray segment, `depth` the distance to the hit (inf when
    the ray leaves the scene or exceeds max_range).
    """
    frame_id: int
    pose: AgentPose
    visible: dict[int, frozenset[Voxel]]
    depth: np.ndarray
    explored_delta: frozenset[Cell]
    hit_kind: np.ndarray
    hit_label: np.ndarray
    hit_voxel: np.ndarray
    hit_points: np.ndarray
    max_range: float = 5.0
    visible_fraction: dict[int, float] = field(default_factory=dict)
    visible_classes: dict[int, int] = field(default_factory=dict)

    def object_mask(self, gt_id: int) -> frozenset[Pixel]:
        rows, cols = np.nonzero(self.hit_label == gt_id)
        return frozenset(zip(cols.tolist(), rows.tolist()))


@dataclass(frozen=True, eq=False)
class Detection:
    """A single noisy per-frame detection of one object"""
    frame_id: int
    mask: frozenset[Pixel]
    bbox: Box
    class_id: int
    logits: np.ndarray
    feature: np.ndarray
    hidden_gt_id: int  # evaluation only
    det_index: int = 0

    def to_dict(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "det_index": self.det_index,
            "mask": sorted([list(p) for p in self.mask]),
            "bbox": list(self.bbox),
            "class_id": self.class_id,
            "logits": self.logits.tolist(),
            "feature": self.feature.tolist(),
            "hidden_gt_id": self.hidden_gt_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Detection":
        mask = frozenset((int(p[0]), int(p[1])) for p in data["mask"])
        return cls(
            frame_id=int(data["frame_id"]),
            mask=mask,
            bbox=tuple(int(v) for v in data["bbox"]),
            class_id=int(data["class_id"]),
            logits=np.asarray(data["logits"], dtype=float),
            feature=np.asarray(data["feature"], dtype=float),
            hidden_gt_id=int(data["hidden_gt_id"]),
            det_index=int(data.get("det_index", 0)),
        )


@dataclass(frozen=True)
class GoalAction:
    """Long-term goal in map coordinates (meters)"""
    target: tuple[float, float]


@dataclass(frozen=True, eq=False)
class PseudoLabel:
    """Reconciled per-frame annotation of one voxel-map instance"""
    frame_id: int
    u: int
    class_id: int
    lambda_bar: np.ndarray
    mask: frozenset[Pixel]
    bbox: Box
    feature: np.ndarray | None = None


@dataclass
class TrajectoryRecord:
    """One replanning decision in an episode log"""
    step: int
    goal: tuple[float, float]
    snapped: tuple[int, int]
    path_cost: float
    reward: float = 0.0
    total_score: float = 0.0
    replan: bool = False

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "goal": [round(self.goal[0], 6), round(self.goal[1], 6)],
            "snapped": list(self.snapped),
            "path_cost": round(self.path_cost, 9),
            "reward": round(self.reward, 9),
            "total_score": round(self.total_score, 9),
            "replan": self.replan,
        }


@dataclass
class EpisodeMetrics:
    """Per-seed metrics fragment; None marks a metric the run did not compute"""
    seed: int
    policy: str
    score_kind: str
    n_frames: int = 0
    n_detections: int = 0
    n_pseudo_labels: int = 0
    raw_class_accuracy: float | None = None
    reconciled_class_accuracy: float | None = None
    map50_raw: float | None = None
    map50_reconciled: float | None = None
    map50_finetuned: float | None = None
    map50_holdout_raw: float | None = None
    total_disagreement: float = 0.0
    explored_fraction: float = 0.0
    head_holdout_accuracy: float | None = None
    untrained_head_accuracy: float | None = None
    terminated_early: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "policy": self.policy,
            "score_kind": self.score_kind,
            "n_frames": self.n_frames,
            "n_detections": self.n_detections,
            "n_pseudo_labels": self.n_pseudo_labels,
            "raw_class_accuracy": self.raw_class_accuracy,
            "reconciled_class_accuracy": self.reconciled_class_accuracy,
            "map50_raw": self.map50_raw,
            "map50_reconciled": self.map50_reconciled,
            "map50_finetuned": self.map50_finetuned,
            "map50_holdout_raw": self.map50_holdout_raw,
            "total_disagreement": self.total_disagreement,
            "explored_fraction": self.explored_fraction,
            "head_holdout_accuracy": self.head_holdout_accuracy,
            "untrained_head_accuracy": self.untrained_head_accuracy,
            "terminated_early": self.terminated_early,
            "extra": dict(self.extra),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EpisodeMetrics":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


# Numeric metric fields aggregated by reports
METRIC_FIELDS: tuple[str, ...] = (
    "raw_class_accuracy",
    "reconciled_class_accuracy",
    "map50_raw",
    "map50_reconciled",
    "map50_finetuned",
    "map50_holdout_raw",
    "total_disagreement",
    "explored_fraction",
    "head_holdout_accuracy",
    "untrained_head_accuracy",
)


@dataclass
class CellEvent:
    """Outcome of one ablation cell, carried on the event queue"""
    type: str
    axis: str
    value: object
    seed: int
    metrics: EpisodeMetrics | None = None
    error: str = ""
