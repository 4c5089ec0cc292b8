"""Domain constants and type aliases"""
from typing import Literal

# Type aliases for the experiment axes
ScoreKind = Literal["entropy", "cos", "euc", "count"]
PolicyKind = Literal["random", "frontier", "greedy", "learned"]
PerceptionMode = Literal["raw", "seal", "reconciled", "gt"]
AblationAxis = Literal["score_kind", "alpha", "policy", "perception", "triplet"]
EventType = Literal["cell_completed", "cell_failed"]

# Score kinds
SCORE_ENTROPY: ScoreKind = "entropy"
SCORE_COS: ScoreKind = "cos"
SCORE_EUC: ScoreKind = "euc"
SCORE_COUNT: ScoreKind = "count"
SCORE_KINDS: tuple[ScoreKind, ...] = (SCORE_ENTROPY, SCORE_COS, SCORE_EUC, SCORE_COUNT)

# Policy kinds
POLICY_RANDOM: PolicyKind = "random"
POLICY_FRONTIER: PolicyKind = "frontier"
POLICY_GREEDY: PolicyKind = "greedy"
POLICY_LEARNED: PolicyKind = "learned"
POLICY_KINDS: tuple[PolicyKind, ...] = (POLICY_RANDOM, POLICY_FRONTIER, POLICY_GREEDY, POLICY_LEARNED)

# Perception modes
PERCEPTION_RAW: PerceptionMode = "raw"
PERCEPTION_SEAL: PerceptionMode = "seal"
PERCEPTION_RECONCILED: PerceptionMode = "reconciled"
PERCEPTION_GT: PerceptionMode = "gt"
PERCEPTION_MODES: tuple[PerceptionMode, ...] = (
    PERCEPTION_RAW, PERCEPTION_SEAL, PERCEPTION_RECONCILED, PERCEPTION_GT,
)

# Ablation axes and their default value lists
ABLATION_DEFAULTS: dict[str, tuple] = {
    "score_kind": SCORE_KINDS,
    "alpha": (0.0, 0.1, 0.7, 1.0),
    "policy": POLICY_KINDS,
    "perception": PERCEPTION_MODES,
    "triplet": ("off", "on"),
}

# Event type constants
EVENT_TYPE_CELL_COMPLETED: EventType = "cell_completed"
EVENT_TYPE_CELL_FAILED: EventType = "cell_failed"

# Explored-map cell states
CELL_UNKNOWN = -1
CELL_FREE = 0
CELL_OBSTACLE = 1

# Labels inside a raycast label volume (objects/instances start at LABEL_FIRST_ID)
LABEL_FREE = 0
LABEL_WALL = 1
LABEL_FIRST_ID = 2

# Ray outcomes recorded per pixel
RAY_NONE = 0
RAY_FLOOR = 1
RAY_WALL = 2
RAY_OBJECT = 3

# Artifact versions
SCENE_FILE_VERSION = 1
SCHEMA_VERSION = 1
LEARNED_FEATURE_SPEC_VERSION = 1

# Experiment defaults
DEFAULT_VOXEL_SIZE = 0.05
DEFAULT_N_REPLANNING = 40
DEFAULT_GAMMA = 0.99
DEFAULT_K = 128
DEFAULT_ALPHA = 0.7
DEFAULT_MARGIN = 0.3
DEFAULT_IOU_THRESHOLD = 0.5
EPS_NORM = 1e-9
MIN_MASK_PIXELS = 3
