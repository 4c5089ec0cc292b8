"""Pytest configuration and shared fixtures for all tests"""
import asyncio
import math

import numpy as np
import pytest

from database.results_database import ResultsDatabase
from domain.models import AgentPose, CameraModel
from events.consumer import EventConsumer
from events.publisher import EventPublisher
from harness.config import EvalConfig, RunConfig
from perception.detector import DetectorProfile
from training.finetune_head import HeadHyperParams
from world.raycast import raycast_frame
from world.scene import GroundTruthObject, Scene, SceneGenConfig, generate_scene

pytest_plugins = ("pytest_asyncio",)


@pytest.fixture
def small_scene_config():
    """A 24x24x12 room with two objects; agent height 6 voxels"""
    return SceneGenConfig(
        dims=(24, 24, 12),
        n_objects=2,
        object_size=(2, 3),
        object_height=(2, 4),
        agent_height=0.3,
        object_classes=(2, 5),
    )


@pytest.fixture
def tiny_scene(small_scene_config):
    """Generated scene for seed 0"""
    return generate_scene(small_scene_config, 0)


@pytest.fixture
def noise_free_profile():
    """Detector that always reports the true class with sharp logits"""
    return DetectorProfile(
        miss_rate=0.0,
        dist_coeff=0.0,
        frac_coeff=0.0,
        instance_sigma=0.0,
        feature_noise_sigma=1e-3,
    )


@pytest.fixture
def camera():
    """Low resolution ray fan, 90 degree field of view"""
    return CameraModel(hfov=math.radians(90.0), vfov=math.radians(90.0), width=16, height=16, max_range=3.0)


@pytest.fixture
def small_run_config(small_scene_config, camera):
    """Short episodes on the small room"""
    return RunConfig(
        scene=small_scene_config,
        camera=camera,
        steps=24,
        n_replanning=8,
        K=24,
        camera_height=0.25,
        eval=EvalConfig(holdout_fraction=0.5),
        finetune=HeadHyperParams(epochs=2, batch_size=8, max_triplets=8),
    )


@pytest.fixture
def centre_pose(tiny_scene):
    """Agent at the first walkable cell found scanning from the room centre"""
    nx, ny, _ = tiny_scene.dims
    for radius in range(max(nx, ny)):
        for i in range(nx // 2 - radius, nx // 2 + radius + 1):
            for j in range(ny // 2 - radius, ny // 2 + radius + 1):
                if tiny_scene.is_walkable((i, j)):
                    return AgentPose(position=tiny_scene.cell_center((i, j)), heading=0.0, camera_height=0.25)
    raise AssertionError("scene has no walkable cell")


@pytest.fixture
async def event_queue():
    """Create a new event queue for each test"""
    return asyncio.Queue()


@pytest.fixture
async def in_memory_db():
    """Create an in-memory SQLite results database for testing"""
    db = ResultsDatabase(":memory:")
    await db.init()
    yield db
    await db.close()


@pytest.fixture
async def event_publisher(event_queue):
    """Create an EventPublisher instance for testing"""
    return EventPublisher(event_queue)


@pytest.fixture
async def event_consumer(event_queue, in_memory_db):
    """Create an EventConsumer writing to the in-memory database"""
    return EventConsumer(event_queue, in_memory_db)


@pytest.fixture
def box_room():
    """10x10x6 room of 0.5 m voxels with one 2x2x3 object (class 3) at x=6..7, y=4..5"""
    occupancy = np.zeros((10, 10, 6), dtype=bool)
    occupancy[0, :, :] = occupancy[-1, :, :] = True
    occupancy[:, 0, :] = occupancy[:, -1, :] = True
    voxels = frozenset((x, y, z) for x in (6, 7) for y in (4, 5) for z in range(3))
    return Scene(
        dims=(10, 10, 6),
        voxel_size=0.5,
        occupancy=occupancy,
        objects=(GroundTruthObject(gt_id=0, class_id=3, voxels=voxels),),
        seed=0,
        agent_height_voxels=3,
    )


@pytest.fixture
def narrow_camera():
    """9x9 rays so the middle ray looks straight ahead"""
    return CameraModel(hfov=math.radians(60.0), vfov=math.radians(60.0), width=9, height=9, max_range=10.0)


@pytest.fixture
def box_frame(box_room, narrow_camera):
    """Frame looking east at the box from (1.25, 2.25)"""
    pose = AgentPose(position=(1.25, 2.25), heading=0.0, camera_height=0.75)
    return raycast_frame(box_room, pose, narrow_camera, frame_id=0)
