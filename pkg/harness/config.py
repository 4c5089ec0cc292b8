"""Run configuration and logging setup"""
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from domain.constants import (
    DEFAULT_GAMMA,
    DEFAULT_IOU_THRESHOLD,
    DEFAULT_K,
    DEFAULT_N_REPLANNING,
    PERCEPTION_MODES,
    PERCEPTION_RECONCILED,
    POLICY_KINDS,
    POLICY_RANDOM,
    SCORE_ENTROPY,
    SCORE_KINDS,
    PerceptionMode,
    PolicyKind,
    ScoreKind,
)
from domain.errors import ConfigError
from domain.models import CameraModel
from perception.detector import DetectorProfile
from training.finetune_head import HeadHyperParams
from world.scene import SceneGenConfig

logger = logging.getLogger(__name__)

LOG_ENV_VAR = "LOOKAROUND_LOG"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
LOG_LEVELS = {"DEBUG": logging.DEBUG, "INFO": logging.INFO, "WARNING": logging.WARNING, "ERROR": logging.ERROR}


def configure_logging(level: str | None = None) -> int:
    """Install one stream handler on the root logger; returns the level used"""
    name = level or os.environ.get(LOG_ENV_VAR) or "WARNING"
    resolved = LOG_LEVELS.get(name.upper())
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(resolved or logging.WARNING)
    if resolved is None:
        logger.warning("unknown log level %r, using WARNING", name)
        resolved = logging.WARNING
    return resolved


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = DEFAULT_IOU_THRESHOLD
    holdout_fraction: float = 0.5
    holdout_seed_offset: int = 10_000

    def __post_init__(self) -> None:
        if not 0.0 < self.iou_threshold < 1.0:
            raise ConfigError("iou_threshold must lie in (0, 1)")
        if not 0.0 < self.holdout_fraction <= 1.0:
            raise ConfigError("holdout_fraction must lie in (0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "EvalConfig":
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(f"invalid eval config: {e}") from e


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs; a pure function of this plus a seed"""
    scene: SceneGenConfig = field(default_factory=SceneGenConfig)
    scene_path: str | None = None
    detector: DetectorProfile = field(default_factory=DetectorProfile)
    camera: CameraModel = field(default_factory=CameraModel)
    policy: PolicyKind = POLICY_RANDOM
    score: ScoreKind = SCORE_ENTROPY
    steps: int = 300
    n_replanning: int = DEFAULT_N_REPLANNING
    K: int = DEFAULT_K
    gamma: float = DEFAULT_GAMMA
    seeds: tuple[int, ...] = (0,)
    eval: EvalConfig = field(default_factory=EvalConfig)
    finetune: HeadHyperParams = field(default_factory=HeadHyperParams)
    perception: PerceptionMode = PERCEPTION_RECONCILED
    camera_height: float = 0.5
    policy_params: str | None = None
    policy_lr: float = 0.01
    policy_batch: int = 4
    entropy_coef: float = 0.0
    out: str = "runs"

    def __post_init__(self) -> None:
        if self.policy not in POLICY_KINDS:
            raise ConfigError(f"unknown policy {self.policy!r}; expected one of {POLICY_KINDS}")
        if self.score not in SCORE_KINDS:
            raise ConfigError(f"unknown score {self.score!r}; expected one of {SCORE_KINDS}")
        if self.perception not in PERCEPTION_MODES:
            raise ConfigError(f"unknown perception mode {self.perception!r}; expected one of {PERCEPTION_MODES}")
        if self.steps < 0:
            raise ConfigError("steps must be non-negative")
        if self.n_replanning < 1 or self.K < 1:
            raise ConfigError("n_replanning and K must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.detector.n_classes < self.scene.n_classes:
            raise ConfigError("detector must know every scene class")

    def with_overrides(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kwargs = dict(data)
        scene = kwargs.pop("scene", None)
        if isinstance(scene, str):
            path = Path(scene)
            kwargs["scene_path"] = str(base_dir / path if base_dir and not path.is_absolute() else path)
        elif scene is not None:
            kwargs["scene"] = SceneGenConfig.from_dict(scene)
        if "detector" in kwargs:
            kwargs["detector"] = DetectorProfile.from_dict(kwargs["detector"])
        if "camera" in kwargs:
            kwargs["camera"] = CameraModel.from_dict(kwargs["camera"])
        if "eval" in kwargs:
            kwargs["eval"] = EvalConfig.from_dict(kwargs["eval"])
        if "finetune" in kwargs:
            kwargs["finetune"] = HeadHyperParams.from_dict(kwargs["finetune"])
        if "seeds" in kwargs:
            kwargs["seeds"] = tuple(int(s) for s in kwargs["seeds"])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "scene": self.scene_path if self.scene_path else self.scene.to_dict(),
            "detector": self.detector.to_dict(),
            "camera": self.camera.to_dict(),
            "policy": self.policy,
            "score": self.score,
            "steps": self.steps,
            "n_replanning": self.n_replanning,
            "K": self.K,
            "gamma": self.gamma,
            "seeds": list(self.seeds),
            "eval": {
                "iou_threshold": self.eval.iou_threshold,
                "holdout_fraction": self.eval.holdout_fraction,
                "holdout_seed_offset": self.eval.holdout_seed_offset,
            },
            "finetune": self.finetune.to_dict(),
            "perception": self.perception,
            "camera_height": self.camera_height,
            "policy_params": self.policy_params,
            "policy_lr": self.policy_lr,
            "policy_batch": self.policy_batch,
            "entropy_coef": self.entropy_coef,
            "out": self.out,
        }


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return RunConfig.from_dict(data, base_dir=path.parent)
