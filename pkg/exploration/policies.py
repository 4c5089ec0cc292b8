"""Long-term goal selection: random, frontier, greedy disagreement and a learned linear policy"""
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from domain.constants import DEFAULT_GAMMA, LEARNED_FEATURE_SPEC_VERSION, ScoreKind
from domain.errors import ConfigError, ExplorationComplete, NoFreeCellsError, PolicyGradientError, SceneFormatError
from domain.models import AgentPose, Cell, GoalAction
from perception.detector import DetectorProfile, confusion_with_pairs, normalized_logits, sample_logits
from perception.voxel_map import SemanticVoxelMap

from .disagreement import DisagreementMap, PolicyInput, entropy, total_score
from .explored_map import ExploredMap
from .planner import NavGraph, build_nav_graph

logger = logging.getLogger(__name__)

FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)

GREEDY_RADIUS = 0.5  # meters
GREEDY_BETA = 0.1  # score units per meter of geodesic distance
FEATURE_RADII = (2, 4, 8)  # K-grid cells
N_FEATURES = 6
N_CANDIDATES = 64


def disk(radius: int) -> np.ndarray:
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return (xx * xx + yy * yy <= r * r).astype(float)


def _cell_center(cell: Cell, cell_size: float) -> tuple[float, float]:
    return ((cell[0] + 0.5) * cell_size, (cell[1] + 0.5) * cell_size)


def _agent_cell(explored: ExploredMap, pose: AgentPose) -> Cell:
    return (
        int(math.floor(pose.position[0] / explored.cell_size)),
        int(math.floor(pose.position[1] / explored.cell_size)),
    )


def _lowest_best(score: np.ndarray, valid: np.ndarray, secondary: np.ndarray | None = None) -> Cell:
    """Row-major first cell maximising (score, secondary) among valid cells"""
    masked = np.where(valid, score, -np.inf)
    best = masked.max()
    ties = valid & (masked >= best - 1e-12)
    if secondary is not None:
        sec = np.where(ties, secondary, -np.inf)
        ties = ties & (sec >= sec.max() - 1e-12)
    return tuple(np.argwhere(ties)[0].tolist())  # type: ignore[return-value]


def random_goal(explored: ExploredMap, rng: np.random.Generator) -> GoalAction:
    """Uniformly random known-free cell"""
    cells = np.argwhere(explored.free_mask())
    if len(cells) == 0:
        raise NoFreeCellsError("explored map has no known-free cell")
    cell = tuple(cells[int(rng.integers(len(cells)))].tolist())
    return GoalAction(_cell_center(cell, explored.cell_size))


def frontier_goal(explored: ExploredMap, pose: AgentPose, graph: NavGraph | None = None) -> GoalAction:
    """Geodesically nearest frontier cluster, represented by its member closest to the centroid"""
    frontier = explored.frontier_mask()
    if not frontier.any():
        raise ExplorationComplete("no frontier cell left")
    graph = graph or build_nav_graph(explored)
    dist = graph.geodesic_distances(_agent_cell(explored, pose))
    clusters, n_clusters = ndimage.label(frontier, structure=FOUR_CONNECTED)
    best: tuple[float, Cell] | None = None
    for k in range(1, n_clusters + 1):
        members = np.argwhere(clusters == k)
        centroid = members.mean(axis=0)
        d2 = ((members - centroid) ** 2).sum(axis=1)
        rep = tuple(members[int(np.argmin(d2))].tolist())
        d = float(dist[rep])
        if np.isfinite(d) and (best is None or (d, rep) < best):
            best = (d, rep)
    if best is None:
        raise ExplorationComplete("no reachable frontier left")
    return GoalAction(_cell_center(best[1], explored.cell_size))


def pool_to_grid(H: DisagreementMap, shape: tuple[int, int], cell_size: float) -> np.ndarray:
    """Sum H cells into the grid cell that contains each H cell's centre"""
    centres = (np.arange(H.K) + 0.5) * H.cell_size
    idx = np.floor(centres / cell_size).astype(np.int64)
    pooled = np.zeros(shape)
    ok_i = np.flatnonzero(idx < shape[0])
    ok_j = np.flatnonzero(idx < shape[1])
    ii, jj = np.meshgrid(ok_i, ok_j, indexing="ij")
    np.add.at(pooled, (idx[ii], idx[jj]), H.grid[ii, jj])
    return pooled


def greedy_disagreement_goal(
    H: DisagreementMap,
    explored: ExploredMap,
    pose: AgentPose,
    radius: float = GREEDY_RADIUS,
    beta: float = GREEDY_BETA,
    rng: np.random.Generator | None = None,
) -> GoalAction:
    """Reachable cell maximising local disagreement minus beta times geodesic distance

    The agent's own cell is never the goal; when the peak is underfoot the next best cell wins.
    """
    if not H.grid.any():
        logger.debug("disagreement map is empty, falling back to frontier goal")
        try:
            return frontier_goal(explored, pose)
        except ExplorationComplete:
            return random_goal(explored, rng or np.random.default_rng(0))
    graph = build_nav_graph(explored)
    start = _agent_cell(explored, pose)
    dist = graph.geodesic_distances(start)
    reachable = np.isfinite(dist)
    if graph.is_node(start):
        reachable[start] = False
    if not reachable.any():
        return random_goal(explored, rng or np.random.default_rng(0))
    pooled = pool_to_grid(H, explored.shape, explored.cell_size)
    local = ndimage.convolve(pooled, disk(int(round(radius / explored.cell_size))), mode="constant")
    score = local - beta * np.where(reachable, dist, 0.0) * explored.cell_size
    cell = _lowest_best(score, reachable, secondary=pooled)
    return GoalAction(_cell_center(cell, explored.cell_size))


@dataclass
class LearnedPolicyParams:
    """Linear score over per-cell features; softmax with temperature over candidates"""
    weights: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    temperature: float = 1.0
    feature_spec_version: int = LEARNED_FEATURE_SPEC_VERSION

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (N_FEATURES,):
            raise ConfigError(f"policy weights must have {N_FEATURES} entries")
        if not np.isfinite(self.weights).all():
            raise ConfigError("policy weights must be finite")
        if self.temperature <= 0.0:
            raise ConfigError("policy temperature must be positive")

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "temperature": self.temperature,
            "feature_spec_version": self.feature_spec_version,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LearnedPolicyParams":
        version = data.get("feature_spec_version")
        if version != LEARNED_FEATURE_SPEC_VERSION:
            raise SceneFormatError(f"unsupported feature_spec_version {version!r}", "feature_spec_version")
        return cls(weights=np.asarray(data["weights"], dtype=float), temperature=float(data["temperature"]))


def save_policy(params: LearnedPolicyParams) -> bytes:
    return json.dumps(params.to_dict(), indent=2).encode("utf-8")


def load_policy(raw: bytes) -> LearnedPolicyParams:
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid JSON: {e.msg}", f"line {e.lineno} column {e.colno}") from e
    return LearnedPolicyParams.from_dict(data)


def feature_maps(pinput: PolicyInput) -> dict[str, np.ndarray]:
    """Per-cell feature planes over the K x K policy input"""
    h = pinput.channels[0]
    explored = pinput.channels[1] > 0.0
    planes = {f"h_sum_{r}": ndimage.convolve(h, disk(r), mode="constant") for r in FEATURE_RADII}
    neighbourhood = disk(FEATURE_RADII[1])
    area = ndimage.convolve(np.ones_like(h), neighbourhood, mode="constant")
    planes["explored_fraction"] = ndimage.convolve(explored.astype(float), neighbourhood, mode="constant") / area
    planes["frontier"] = (explored & ndimage.binary_dilation(~explored, structure=FOUR_CONNECTED)).astype(float)
    return planes


def cell_features(pinput: PolicyInput, candidates: list[Cell]) -> np.ndarray:
    """(n, 6) features: H sums at three radii, distance to agent, explored fraction, frontier flag"""
    planes = feature_maps(pinput)
    K = pinput.channels.shape[1]
    idx = np.asarray(candidates, dtype=np.int64).reshape(-1, 2)
    ii, jj = idx[:, 0], idx[:, 1]
    agent = np.asarray(pinput.agent_cell, dtype=float)
    distance = np.hypot(idx[:, 0] - agent[0], idx[:, 1] - agent[1]) / K
    return np.column_stack(
        [planes[f"h_sum_{r}"][ii, jj] for r in FEATURE_RADII]
        + [distance, planes["explored_fraction"][ii, jj], planes["frontier"][ii, jj]]
    )


def policy_probs(params: LearnedPolicyParams, features: np.ndarray) -> np.ndarray:
    return normalized_logits(features @ params.weights / params.temperature)


def choose_candidate(
    params: LearnedPolicyParams, features: np.ndarray, rng: np.random.Generator, greedy: bool = False
) -> int:
    if len(features) == 0:
        raise ConfigError("learned policy needs at least one candidate")
    scores = features @ params.weights
    if greedy:
        return int(np.argmax(scores))
    probs = policy_probs(params, features)
    return min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), len(probs) - 1)


def sample_candidates(
    explored: ExploredMap, pinput: PolicyInput, rng: np.random.Generator, n: int = N_CANDIDATES
) -> list[Cell]:
    """Distinct K-grid cells under uniformly sampled known-free cells"""
    free = np.argwhere(explored.free_mask())
    if len(free) == 0:
        raise NoFreeCellsError("explored map has no known-free cell")
    picks = free[rng.choice(len(free), size=min(n, len(free)), replace=False)]
    K = pinput.channels.shape[1]
    cells = []
    for cell in picks.tolist():
        centre = _cell_center(tuple(cell), explored.cell_size)
        k = (min(K - 1, int(centre[0] / pinput.cell_size)), min(K - 1, int(centre[1] / pinput.cell_size)))
        if k not in cells:
            cells.append(k)
    return cells


def learned_goal(
    params: LearnedPolicyParams,
    pinput: PolicyInput,
    candidates: list[Cell],
    rng: np.random.Generator,
    greedy: bool = False,
) -> GoalAction:
    index = choose_candidate(params, cell_features(pinput, candidates), rng, greedy=greedy)
    return GoalAction(_cell_center(candidates[index], pinput.cell_size))


@dataclass(frozen=True, eq=False)
class PolicyStep:
    """One decision of a learned-policy trajectory"""
    features: np.ndarray
    action: int
    reward: float


def policy_gradient(params: LearnedPolicyParams, features: np.ndarray, action: int) -> np.ndarray:
    """Gradient of log pi(action) with respect to the weights"""
    probs = policy_probs(params, features)
    return (features[action] - probs @ features) / params.temperature


def entropy_gradient(params: LearnedPolicyParams, features: np.ndarray) -> np.ndarray:
    probs = policy_probs(params, features)
    h = entropy(probs)
    with np.errstate(divide="ignore"):
        log_p = np.where(probs > 0.0, np.log(probs), 0.0)
    dz = -probs * (log_p + h)
    return dz @ features / params.temperature


def discounted_returns(rewards: list[float], gamma: float = DEFAULT_GAMMA) -> np.ndarray:
    returns = np.zeros(len(rewards))
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


def _apply_gradient(params: LearnedPolicyParams, grad: np.ndarray, lr: float) -> LearnedPolicyParams:
    if not np.isfinite(grad).all():
        raise PolicyGradientError(f"non-finite policy gradient {grad}")
    return LearnedPolicyParams(
        weights=params.weights + lr * grad,
        temperature=params.temperature,
        feature_spec_version=params.feature_spec_version,
    )


def reinforce_batch_update(
    params: LearnedPolicyParams,
    trajectories: list[list[PolicyStep]],
    gamma: float = DEFAULT_GAMMA,
    lr: float = 0.01,
    baseline: float | None = None,
    entropy_coef: float = 0.0,
) -> LearnedPolicyParams:
    """REINFORCE over several trajectories, in the given order, with a shared baseline"""
    trajectories = [t for t in trajectories if t]
    if not trajectories:
        raise PolicyGradientError("empty trajectory batch")
    for trajectory in trajectories:
        if not all(math.isfinite(step.reward) for step in trajectory):
            raise PolicyGradientError("non-finite reward in trajectory")
    returns = [discounted_returns([s.reward for s in t], gamma) for t in trajectories]
    b = float(np.mean(np.concatenate(returns))) if baseline is None else baseline
    grad = np.zeros_like(params.weights)
    for trajectory, G in zip(trajectories, returns):
        for step, g in zip(trajectory, G):
            grad += policy_gradient(params, step.features, step.action) * (g - b)
            if entropy_coef:
                grad += entropy_coef * entropy_gradient(params, step.features)
    return _apply_gradient(params, grad, lr)


def reinforce_update(
    params: LearnedPolicyParams,
    trajectory: list[PolicyStep],
    gamma: float = DEFAULT_GAMMA,
    lr: float = 0.01,
    baseline: float | None = None,
    entropy_coef: float = 0.0,
) -> LearnedPolicyParams:
    """w <- w + lr * sum_t grad log pi(a_t|s_t) * (G_t - baseline); baseline defaults to the mean return"""
    if not trajectory:
        raise PolicyGradientError("empty trajectory")
    return reinforce_batch_update(params, [trajectory], gamma, lr, baseline, entropy_coef)


def compute_step_reward(before: SemanticVoxelMap, after: SemanticVoxelMap, score_kind: ScoreKind) -> float:
    """Change of the summed disagreement score between two snapshots of one episode's map"""
    return total_score(after, score_kind) - total_score(before, score_kind)


class ConfusableBandit:
    """Two regions; the first holds an object whose class the detector confuses

    Each pull renders `n_views` detections of the region's object and pays the
    entropy of their mean softmax, the same reward an episode collects.
    """

    def __init__(
        self,
        n_classes: int = 8,
        confusable: tuple[int, int] = (2, 5),
        flip: float = 0.4,
        n_views: int = 5,
        noise_scale: float = 0.0,
        plain_class: int = 0,
    ) -> None:
        self.profile = DetectorProfile(
            n_classes=n_classes, confusion=confusion_with_pairs(n_classes, [confusable], flip), miss_rate=0.0
        )
        self.region_classes = (confusable[0], plain_class)
        self.n_views = n_views
        self.noise_scale = noise_scale
        self.features = np.array(
            [
                [1.0, 1.0, 1.0, 0.5, 0.5, 0.0],
                [0.0, 0.0, 0.0, 0.5, 0.5, 0.0],
            ]
        )

    def pull(self, arm: int, rng: np.random.Generator) -> float:
        true_class = self.region_classes[arm]
        probs = [
            normalized_logits(sample_logits(self.profile, true_class, self.noise_scale, rng))
            for _ in range(self.n_views)
        ]
        return entropy(np.mean(probs, axis=0))

    def train(
        self,
        params: LearnedPolicyParams,
        episodes: int = 200,
        batch_size: int = 8,
        lr: float = 0.1,
        seed: int = 0,
    ) -> tuple[LearnedPolicyParams, list[float]]:
        """REINFORCE on single-decision episodes; returns params and P(confusable region) per batch"""
        history = [float(policy_probs(params, self.features)[0])]
        for start in range(0, episodes, batch_size):
            batch = []
            for episode in range(start, min(episodes, start + batch_size)):
                rng = np.random.default_rng([seed, episode])
                arm = choose_candidate(params, self.features, rng)
                batch.append([PolicyStep(self.features, arm, self.pull(arm, rng))])
            params = reinforce_batch_update(params, batch, lr=lr)
            history.append(float(policy_probs(params, self.features)[0]))
        return params, history
