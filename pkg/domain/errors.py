"""Exception hierarchy shared by every package"""


class LookAroundError(Exception):
    """Base class for all simulator errors"""


class ConfigError(LookAroundError, ValueError):
    """Invalid configuration value"""


class SceneGenerationError(LookAroundError):
    """Scene generation could not place every object within its retry budget"""


class SceneFormatError(LookAroundError):
    """Malformed serialized artifact; `location` points at the offending spot"""

    def __init__(self, message: str, location: str = "") -> None:
        self.location = location
        super().__init__(f"{message} (at {location})" if location else message)


class PoseError(LookAroundError, ValueError):
    """Agent pose outside the scene grid"""


class NotWalkableError(LookAroundError, ValueError):
    """Waypoint not reachable in a single step, or not walkable"""


class NonFiniteError(LookAroundError, ValueError):
    """NaN or infinite value where finite numbers are required"""


class UnknownInstanceError(LookAroundError, KeyError):
    """Instance id not present in the semantic voxel map"""


class NoFreeCellsError(LookAroundError):
    """Explored map holds no known-free cell"""


class ExplorationComplete(LookAroundError):
    """No reachable frontier remains"""


class PlanningError(LookAroundError):
    """Path planning precondition violated"""


class NoPathError(PlanningError):
    """Start and goal lie in different components of the navigation graph"""


class PolicyGradientError(LookAroundError):
    """Policy-gradient step produced non-finite values"""


class TrainingDivergedError(LookAroundError):
    """Fine-tuning loss became non-finite"""

    def __init__(self, message: str, diagnostics: dict | None = None) -> None:
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class EvaluationError(LookAroundError, ValueError):
    """Evaluation called without the data it needs"""
