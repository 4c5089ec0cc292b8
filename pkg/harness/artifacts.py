"""Episode artifact files and the re-reconciliation of a saved episode"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from domain.constants import SCHEMA_VERSION
from domain.errors import SceneFormatError
from domain.models import AgentPose, Detection, FrameObservation
from exploration.disagreement import build_disagreement_map
from perception.reconciliation import PseudoDataset, reconcile
from perception.voxel_map import SemanticVoxelMap
from world.raycast import raycast_frame
from world.scene import Scene
from world.scene_io import load_scene, save_scene

from .config import RunConfig
from .episode import EpisodeResult

logger = logging.getLogger(__name__)

SCENE_FILE = "scene.json"
FRAMES_FILE = "frames.jsonl"
TRAJECTORY_FILE = "trajectory.jsonl"
VOXEL_MAP_FILE = "voxel_map.json"
DISAGREEMENT_FILE = "disagreement.csv"
METRICS_FILE = "metrics.json"


def _jsonl(header: dict, records: list[dict]) -> str:
    lines = [json.dumps({"schema_version": SCHEMA_VERSION, **header}, sort_keys=True)]
    lines.extend(json.dumps(r, sort_keys=True) for r in records)
    return "\n".join(lines) + "\n"


def write_episode(result: EpisodeResult, config: RunConfig, seed: int, out_dir: str | Path) -> list[Path]:
    """Write the episode's artifact set; identical (config, seed) gives identical bytes"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_frame: dict[int, list[Detection]] = {}
    for det in result.detections:
        by_frame.setdefault(det.frame_id, []).append(det)
    header = {"seed": seed, "config": config.to_dict()}
    frames = [
        {"frame_id": f.frame_id, "pose": f.pose.to_dict(), "detections": [d.to_dict() for d in by_frame.get(f.frame_id, [])]}
        for f in result.frames
    ]
    H = build_disagreement_map(result.voxel_map, config.score, config.K, result.scene.extent)
    contents = {
        SCENE_FILE: save_scene(result.scene),
        FRAMES_FILE: _jsonl(header, frames).encode("utf-8"),
        TRAJECTORY_FILE: _jsonl(header, [r.to_dict() for r in result.trajectory]).encode("utf-8"),
        VOXEL_MAP_FILE: json.dumps(result.voxel_map.to_dict(), sort_keys=True).encode("utf-8"),
        DISAGREEMENT_FILE: H.to_csv().encode("utf-8"),
        METRICS_FILE: json.dumps({"schema_version": SCHEMA_VERSION, **result.metrics.to_dict()}, sort_keys=True).encode("utf-8"),
    }
    paths = []
    for name, data in contents.items():
        path = out_dir / name
        path.write_bytes(data)
        paths.append(path)
    logger.info("wrote episode artifacts for seed %d to %s", seed, out_dir)
    return paths


@dataclass
class SavedFrame:
    frame_id: int
    pose: AgentPose
    detections: list[Detection] = field(default_factory=list)


@dataclass
class SavedEpisode:
    scene: Scene
    seed: int
    config: dict
    frames: list[SavedFrame] = field(default_factory=list)


def read_episode(episode_dir: str | Path) -> SavedEpisode:
    episode_dir = Path(episode_dir)
    scene = load_scene((episode_dir / SCENE_FILE).read_bytes())
    rows = [line for line in (episode_dir / FRAMES_FILE).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not rows:
        raise SceneFormatError("empty frames file", f"{FRAMES_FILE} line 1")
    try:
        header = json.loads(rows[0])
        if header.get("schema_version") != SCHEMA_VERSION:
            raise SceneFormatError(f"unsupported schema_version {header.get('schema_version')!r}", f"{FRAMES_FILE} line 1")
        saved = SavedEpisode(scene=scene, seed=int(header["seed"]), config=header["config"])
        for lineno, row in enumerate(rows[1:], start=2):
            record = json.loads(row)
            saved.frames.append(
                SavedFrame(
                    frame_id=int(record["frame_id"]),
                    pose=AgentPose.from_dict(record["pose"]),
                    detections=[Detection.from_dict(d) for d in record["detections"]],
                )
            )
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"invalid JSON: {e.msg}", f"{FRAMES_FILE} column {e.colno}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise SceneFormatError(f"invalid frame record: {e}", FRAMES_FILE) from e
    return saved


def rebuild_voxel_map(saved: SavedEpisode, config: RunConfig) -> tuple[SemanticVoxelMap, list[FrameObservation]]:
    """Re-raycast every recorded pose and re-insert the recorded detections"""
    vmap = SemanticVoxelMap(saved.scene.voxel_size)
    observations = []
    for frame in saved.frames:
        obs = raycast_frame(saved.scene, frame.pose, config.camera, frame_id=frame.frame_id)
        for det in frame.detections:
            vmap.insert_detection(det, obs)
        observations.append(obs)
    return vmap.resolve_instances(), observations


def reconcile_episode(episode_dir: str | Path, config: RunConfig | None = None) -> PseudoDataset:
    saved = read_episode(episode_dir)
    config = config or RunConfig.from_dict(saved.config)
    vmap, _ = rebuild_voxel_map(saved, config)
    return reconcile(
        saved.scene,
        vmap,
        [(f.frame_id, f.pose) for f in saved.frames],
        config.camera,
        profile=config.detector,
        feature_seed=saved.seed,
        provenance={"seed": saved.seed, "policy": config.policy, "score_kind": config.score},
    )
