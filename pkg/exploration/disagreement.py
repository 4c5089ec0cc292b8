"""Per-instance disagreement scores and the top-down disagreement map H"""
import csv
import io
import logging
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from domain.constants import DEFAULT_K, EPS_NORM, SCORE_COS, SCORE_COUNT, SCORE_ENTROPY, SCORE_EUC, ScoreKind
from domain.errors import ConfigError
from domain.models import AgentPose, Cell
from perception.voxel_map import SemanticVoxelMap

from .explored_map import ExploredMap

logger = logging.getLogger(__name__)

EXPLORED_VALUE = 0.5
AGENT_VALUE = 1.0


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def score_entropy(vmap: SemanticVoxelMap, u: int) -> float:
    """Entropy (nats) of the instance's mean softmax"""
    return max(0.0, entropy(vmap.aggregated_softmax(u)))


def _pairwise_mean(vmap: SemanticVoxelMap, u: int, distance) -> float:
    logits = vmap.logit_set(u)
    values = []
    for a, b in combinations(logits, 2):
        d = distance(a, b)
        if d is None:
            vmap.diagnostics["zero_norm_pairs"] += 1
            logger.debug("instance %d: zero-norm logit pair skipped", u)
            continue
        values.append(d)
    return float(np.mean(values)) if values else 0.0


def _cosine_distance(a: np.ndarray, b: np.ndarray) -> float | None:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return None
    return max(0.0, 1.0 - float(np.dot(a, b) / (na * nb)))


def score_cos(vmap: SemanticVoxelMap, u: int) -> float:
    """Mean cosine distance over all unordered pairs of raw logits in Q(u)"""
    return _pairwise_mean(vmap, u, _cosine_distance)


def score_euc(vmap: SemanticVoxelMap, u: int) -> float:
    """Mean Euclidean distance over all unordered pairs of raw logits in Q(u)"""
    return _pairwise_mean(vmap, u, lambda a, b: float(np.linalg.norm(a - b)))


def score_count(vmap: SemanticVoxelMap, u: int) -> float:
    """Distinct argmax classes in Q(u), minus one"""
    classes = {int(np.argmax(row)) for row in vmap.logit_set(u)}
    return float(len(classes) - 1)


SCORE_FUNCTIONS = {
    SCORE_ENTROPY: score_entropy,
    SCORE_COS: score_cos,
    SCORE_EUC: score_euc,
    SCORE_COUNT: score_count,
}


def score_function(kind: ScoreKind):
    try:
        return SCORE_FUNCTIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown score kind {kind!r}; expected one of {sorted(SCORE_FUNCTIONS)}") from None


def instance_scores(vmap: SemanticVoxelMap, kind: ScoreKind) -> dict[int, float]:
    if vmap.dirty:
        vmap.resolve_instances()
    fn = score_function(kind)
    return {u: fn(vmap, u) for u in sorted(vmap.instances)}


def total_score(vmap: SemanticVoxelMap, kind: ScoreKind) -> float:
    return float(sum(instance_scores(vmap, kind).values()))


@dataclass
class DisagreementMap:
    """K x K top-down grid; each instance adds its score to its footprint-centroid cell"""
    grid: np.ndarray
    K: int
    cell_size: float

    @property
    def normalization(self) -> float:
        return float(self.grid.max()) if self.grid.size else 0.0

    def cell_of(self, point: tuple[float, float]) -> Cell:
        i = min(self.K - 1, max(0, int(math.floor(point[0] / self.cell_size))))
        j = min(self.K - 1, max(0, int(math.floor(point[1] / self.cell_size))))
        return (i, j)

    def cell_center(self, cell: Cell) -> tuple[float, float]:
        return ((cell[0] + 0.5) * self.cell_size, (cell[1] + 0.5) * self.cell_size)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        for row in self.grid:
            writer.writerow([f"{v:.9g}" for v in row])
        return out.getvalue()


def build_disagreement_map(
    vmap: SemanticVoxelMap, score_kind: ScoreKind, K: int = DEFAULT_K, extent: tuple[float, float] = (3.2, 3.2)
) -> DisagreementMap:
    if K < 1:
        raise ConfigError("K must be positive")
    H = DisagreementMap(grid=np.zeros((K, K)), K=K, cell_size=max(extent) / K)
    for u, score in instance_scores(vmap, score_kind).items():
        centroid = vmap.instances[u].footprint_centroid(vmap.voxel_size)
        H.grid[H.cell_of(centroid)] += score
    return H


@dataclass(frozen=True, eq=False)
class PolicyInput:
    """Two K x K channels in [0, 1] plus the agent's heading

    Channel 0 is the normalised disagreement map. Channel 1 marks explored
    cells with 0.5 and the agent's cell with 1.
    """
    channels: np.ndarray
    orientation: float
    cell_size: float
    agent_cell: Cell


def resample_explored(explored: ExploredMap, K: int, cell_size: float) -> np.ndarray:
    """Nearest-cell sampling of the explored mask at the K-grid cell centres"""
    centres = (np.arange(K) + 0.5) * cell_size
    idx = np.floor(centres / explored.cell_size).astype(np.int64)
    known = explored.known_mask()
    out = np.zeros((K, K))
    ok_i = idx < known.shape[0]
    ok_j = idx < known.shape[1]
    sampled = known[np.ix_(idx[ok_i], idx[ok_j])]
    out[np.ix_(np.flatnonzero(ok_i), np.flatnonzero(ok_j))] = sampled
    return out


def assemble_policy_input(H: DisagreementMap, explored: ExploredMap, pose: AgentPose) -> PolicyInput:
    channels = np.zeros((2, H.K, H.K))
    channels[0] = np.clip(H.grid / max(H.normalization, EPS_NORM), 0.0, 1.0)
    channels[1] = EXPLORED_VALUE * resample_explored(explored, H.K, H.cell_size)
    agent = H.cell_of(pose.position)
    channels[1][agent] = AGENT_VALUE
    return PolicyInput(channels=channels, orientation=pose.heading, cell_size=H.cell_size, agent_cell=agent)
