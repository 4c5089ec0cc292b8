"""Seeded exploration episodes and REINFORCE training of the learned goal policy"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from domain.constants import POLICY_FRONTIER, POLICY_GREEDY, POLICY_LEARNED, POLICY_RANDOM
from domain.errors import ExplorationComplete, PlanningError
from domain.models import Detection, EpisodeMetrics, FrameObservation, GoalAction, TrajectoryRecord
from exploration.disagreement import assemble_policy_input, build_disagreement_map, total_score
from exploration.explored_map import ExploredMap
from exploration.planner import astar, build_nav_graph, follow, path_cost, snap_goal
from exploration.policies import (
    LearnedPolicyParams,
    PolicyStep,
    cell_features,
    choose_candidate,
    compute_step_reward,
    frontier_goal,
    greedy_disagreement_goal,
    load_policy,
    random_goal,
    reinforce_batch_update,
    sample_candidates,
)
from perception.detector import detect
from perception.reconciliation import PseudoDataset, reconcile
from perception.voxel_map import SemanticVoxelMap
from world.raycast import raycast_frame
from world.scene import Scene, generate_scene, spawn_pose, turn_agent
from world.scene_io import load_scene

from .config import RunConfig
from .evaluation import (
    detection_predictions,
    evaluate_map50,
    ground_truth_boxes,
    pseudo_label_accuracy,
    pseudo_label_predictions,
    raw_class_accuracy,
)

logger = logging.getLogger(__name__)

LOOK_AROUND_HEADINGS = 4


@dataclass
class EpisodeResult:
    scene: Scene
    trajectory: list[TrajectoryRecord] = field(default_factory=list)
    frames: list[FrameObservation] = field(default_factory=list)
    detections: list[Detection] = field(default_factory=list)
    voxel_map: SemanticVoxelMap | None = None
    dataset: PseudoDataset | None = None
    metrics: EpisodeMetrics | None = None
    policy_steps: list[PolicyStep] = field(default_factory=list)


def resolve_scene(config: RunConfig, seed: int) -> Scene:
    if config.scene_path:
        return load_scene(Path(config.scene_path).read_bytes())
    return generate_scene(config.scene, seed)


def resolve_policy_params(config: RunConfig) -> LearnedPolicyParams:
    if config.policy_params:
        return load_policy(Path(config.policy_params).read_bytes())
    return LearnedPolicyParams()


def detection_seed(seed: int, frame_id: int) -> int:
    return seed * 1_000_003 + frame_id


class Episode:
    """Mutable state of one exploration run"""

    def __init__(self, config: RunConfig, scene: Scene, seed: int) -> None:
        self.config = config
        self.scene = scene
        self.seed = seed
        self.pose = spawn_pose(scene, seed, config.camera_height)
        self.explored = ExploredMap(scene.dims[:2], scene.voxel_size)
        self.vmap = SemanticVoxelMap(scene.voxel_size)
        self.frames: list[FrameObservation] = []
        self.detections: list[Detection] = []
        self.trajectory: list[TrajectoryRecord] = []
        self.policy_steps: list[PolicyStep] = []
        self.rng = np.random.default_rng([seed, 11])

    @property
    def steps_taken(self) -> int:
        return len(self.frames)

    def observe(self, obs: FrameObservation) -> None:
        self.frames.append(obs)
        self.explored.update(obs, self.scene.walkable)
        dets = detect(self.config.detector, obs, detection_seed(self.seed, obs.frame_id))
        for det in dets:
            self.vmap.insert_detection(det, obs)
        self.detections.extend(dets)

    def turn(self, heading: float) -> None:
        self.pose = turn_agent(self.pose, heading)
        self.observe(raycast_frame(self.scene, self.pose, self.config.camera, frame_id=len(self.frames)))

    def look_around(self) -> None:
        """In-place scan at four headings before the first goal"""
        start = self.pose.heading
        for k in range(LOOK_AROUND_HEADINGS):
            if self.steps_taken >= self.config.steps:
                return
            self.turn(start + k * math.pi / 2.0)

    def choose_goal(self, params: LearnedPolicyParams | None, greedy: bool) -> tuple[GoalAction, PolicyStep | None]:
        config = self.config
        policy = config.policy
        if policy == POLICY_RANDOM:
            return random_goal(self.explored, self.rng), None
        if policy == POLICY_FRONTIER:
            return frontier_goal(self.explored, self.pose), None
        H = build_disagreement_map(self.vmap, config.score, config.K, self.scene.extent)
        if policy == POLICY_GREEDY:
            return greedy_disagreement_goal(H, self.explored, self.pose, rng=self.rng), None
        pinput = assemble_policy_input(H, self.explored, self.pose)
        candidates = sample_candidates(self.explored, pinput, self.rng)
        features = cell_features(pinput, candidates)
        index = choose_candidate(params or LearnedPolicyParams(), features, self.rng, greedy=greedy)
        goal = GoalAction(((candidates[index][0] + 0.5) * pinput.cell_size, (candidates[index][1] + 0.5) * pinput.cell_size))
        return goal, PolicyStep(features, index, 0.0)

    def plan(self, goal: GoalAction) -> tuple[tuple[int, int], list[tuple[int, int]]]:
        start = self.scene.cell_of(self.pose.position)
        graph = build_nav_graph(self.explored)
        try:
            snapped = snap_goal(graph, goal, start)
            return snapped, astar(graph, start, snapped)
        except PlanningError as e:
            logger.debug("planning from %s failed: %s", start, e)
            return start, [start]

    def replan_period(self, params: LearnedPolicyParams | None, greedy: bool) -> None:
        config = self.config
        goal, decision = self.choose_goal(params, greedy)
        snapped, path = self.plan(goal)
        before = self.vmap.copy()
        budget = min(config.n_replanning, config.steps - self.steps_taken)
        pose, frames, replan = follow(self.scene, self.pose, path, budget, config.camera, len(self.frames))
        if frames:
            self.pose = pose
            for obs in frames:
                self.observe(obs)
        else:
            # goal is the current cell or unreachable: rotate in place for one step
            self.turn(self.pose.heading + math.pi / 2.0)
        self.vmap.resolve_instances()
        reward = compute_step_reward(before, self.vmap, config.score)
        record = TrajectoryRecord(
            step=self.steps_taken,
            goal=goal.target,
            snapped=snapped,
            path_cost=path_cost(path),
            reward=reward,
            total_score=total_score(self.vmap, config.score),
            replan=replan,
        )
        self.trajectory.append(record)
        if decision is not None:
            self.policy_steps.append(PolicyStep(decision.features, decision.action, reward))
        logger.info(
            "seed=%d step=%d goal=(%.3f, %.3f) snapped=%s cost=%.3f reward=%.6f",
            self.seed, record.step, goal.target[0], goal.target[1], snapped, record.path_cost, reward,
        )

    def run(self, params: LearnedPolicyParams | None = None, greedy: bool = False) -> bool:
        """Explore until the step budget is spent; True when exploration ended early"""
        if self.config.steps == 0:
            return False
        self.look_around()
        self.vmap.resolve_instances()
        while self.steps_taken < self.config.steps:
            try:
                self.replan_period(params, greedy)
            except ExplorationComplete:
                logger.info("seed=%d exploration complete after %d steps", self.seed, self.steps_taken)
                return True
        return False


def run_episode(
    config: RunConfig,
    seed: int,
    scene: Scene | None = None,
    params: LearnedPolicyParams | None = None,
    greedy: bool = False,
    evaluate: bool = True,
) -> EpisodeResult:
    """Explore, map, reconcile and score one seeded episode"""
    scene = scene if scene is not None else resolve_scene(config, seed)
    if params is None and config.policy == POLICY_LEARNED:
        params = resolve_policy_params(config)
    episode = Episode(config, scene, seed)
    terminated = episode.run(params, greedy)
    vmap = episode.vmap.resolve_instances()
    dataset = reconcile(
        scene,
        vmap,
        [(f.frame_id, f.pose) for f in episode.frames],
        config.camera,
        profile=config.detector,
        feature_seed=seed,
        provenance={"seed": seed, "policy": config.policy, "score_kind": config.score},
    )
    metrics = EpisodeMetrics(
        seed=seed,
        policy=config.policy,
        score_kind=config.score,
        n_frames=len(episode.frames),
        n_detections=len(episode.detections),
        n_pseudo_labels=len(dataset.labels()),
        total_disagreement=total_score(vmap, config.score),
        explored_fraction=episode.explored.explored_fraction(),
        terminated_early=terminated,
    )
    if evaluate and episode.frames:
        metrics.raw_class_accuracy = raw_class_accuracy(episode.detections, episode.frames, scene)
        metrics.reconciled_class_accuracy = pseudo_label_accuracy(dataset.labels(), episode.frames, scene)
        gt = ground_truth_boxes(episode.frames, scene)
        if gt:
            threshold = config.eval.iou_threshold
            metrics.map50_raw = evaluate_map50(detection_predictions(episode.detections), gt, threshold).map50
            metrics.map50_reconciled = evaluate_map50(pseudo_label_predictions(dataset.labels()), gt, threshold).map50
    return EpisodeResult(
        scene=scene,
        trajectory=episode.trajectory,
        frames=episode.frames,
        detections=episode.detections,
        voxel_map=vmap,
        dataset=dataset,
        metrics=metrics,
        policy_steps=episode.policy_steps,
    )


def train_policy(
    config: RunConfig,
    episodes: int,
    params: LearnedPolicyParams | None = None,
    batch_size: int | None = None,
) -> tuple[LearnedPolicyParams, list[float]]:
    """REINFORCE over seeded episodes; one update per batch, merged in episode-seed order"""
    config = config.with_overrides(policy=POLICY_LEARNED)
    params = params or LearnedPolicyParams()
    batch_size = batch_size or config.policy_batch
    returns: list[float] = []
    base = config.seeds[0]
    for start in range(0, episodes, batch_size):
        seeds = [base + k for k in range(start, min(episodes, start + batch_size))]
        trajectories = []
        for seed in sorted(seeds):
            result = run_episode(config, seed, params=params, evaluate=False)
            trajectories.append(result.policy_steps)
            returns.append(float(sum(s.reward for s in result.policy_steps)))
        if not any(trajectories):
            continue
        params = reinforce_batch_update(
            params, trajectories, gamma=config.gamma, lr=config.policy_lr, entropy_coef=config.entropy_coef
        )
        logger.info("policy update after %d episodes: weights=%s", len(returns), np.round(params.weights, 6).tolist())
    return params, returns
