"""Synthetic desk-scale data: motions, scenes, and ready-made corpora.

Real mocap archives are licensed, so everything here is generated: smooth
articulated motions around a 17-joint template, flat textured reference
frames, and cameras with realistic focal lengths.  World frames are z-up
with the ground at z = 0.  These sources drive the demos, the tests, and the
regime experiment corpus.
"""

from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from .fusion import MotionSample, SceneSample
from .geometry import CameraModel, HandednessCorrection, project, save_camera, world_to_camera
from .poseio import Manifest, ManifestSample, save_manifest, sha256_file, write_pose
from .skeleton import H36M_17, WORLD, JointSchema, Pose3DSequence
from .synth import DetectorNoiseConfig, stable_seed, synth_detect

# Rest pose in a z-up person frame facing +x: (lateral toward +y = left, mm).
TEMPLATE_POSE = np.array([
    [0, 0, 1000],       # pelvis
    [0, -130, 990],     # right_hip
    [10, -140, 560],    # right_knee
    [30, -150, 80],     # right_ankle
    [0, 130, 990],      # left_hip
    [10, 140, 560],     # left_knee
    [30, 150, 80],      # left_ankle
    [0, 0, 1230],       # spine
    [0, 0, 1460],       # neck
    [40, 0, 1560],      # head
    [20, 0, 1680],      # head_top
    [0, 190, 1430],     # left_shoulder
    [30, 230, 1180],    # left_elbow
    [60, 250, 950],     # left_wrist
    [0, -190, 1430],    # right_shoulder
    [30, -230, 1180],   # right_elbow
    [60, -250, 950],    # right_wrist
], dtype=np.float64)


def _yaw_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def synthetic_motion(rng: np.random.Generator, frames: int = 30,
                     schema: JointSchema = H36M_17,
                     start: np.ndarray | None = None,
                     yaw: float | None = None,
                     speed_mm: float = 20.0) -> Pose3DSequence:
    """A smooth articulated walk: template + sinusoidal limb motion + drift."""
    if schema is not H36M_17:
        raise NotImplementedError("the synthetic motion template is h36m-17")
    j = len(schema)
    t = np.arange(frames)[:, None, None]
    amp = rng.uniform(20.0, 140.0, size=(1, j, 3))
    amp[0, schema.root_index] = 0.0
    freq = rng.uniform(0.02, 0.12, size=(1, j, 3))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(1, j, 3))
    local = TEMPLATE_POSE[None] + amp * np.sin(2.0 * np.pi * freq * t + phase)

    yaw = rng.uniform(-np.pi, np.pi) if yaw is None else yaw
    rot = _yaw_matrix(yaw)
    posed = local @ rot.T

    start = np.array([0.0, 0.0, 0.0]) if start is None else np.asarray(start, float)
    heading = rot @ np.array([1.0, 0.0, 0.0])
    track = start[None] + heading[None] * (speed_mm * np.arange(frames))[:, None]
    track = track + np.cumsum(rng.normal(0.0, 4.0, size=(frames, 3)), axis=0)
    track[:, 2] = 0.0  # walk on the ground plane
    return Pose3DSequence(posed + track[:, None, :], schema, WORLD)


def default_camera(image_width: int = 2000, image_height: int = 1500,
                   height_mm: float = 1000.0,
                   focal_px: float | None = None) -> CameraModel:
    """A camera at the world origin looking along +y, z-up world, y-down image."""
    rotation = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 0.0, -1.0],
        [0.0, 1.0, 0.0],
    ])
    position = np.array([0.0, 0.0, height_mm])
    focal = focal_px if focal_px is not None else 1.145 * image_width
    return CameraModel(
        rotation=rotation,
        translation=-rotation @ position,
        fx=focal, fy=focal,
        cx=image_width / 2.0, cy=image_height / 2.0,
        image_width=image_width, image_height=image_height,
    )


def write_reference_frame(path: str | Path, camera: CameraModel,
                          rng: np.random.Generator, gray: int = 110) -> Path:
    """A deterministic, lightly textured background image at camera resolution."""
    h, w = camera.image_height, camera.image_width
    img = np.full((h, w, 3), gray, np.uint8)
    for _ in range(6):
        x0, y0 = rng.integers(0, w), rng.integers(0, h)
        dw, dh = rng.integers(w // 8, w // 3), rng.integers(h // 8, h // 3)
        shade = int(rng.integers(60, 160))
        cv2.rectangle(img, (int(x0), int(y0)), (int(x0 + dw), int(y0 + dh)),
                      (shade, shade, shade), -1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cv2.imwrite(str(path), img)
    return path


def make_toy_scene(out_dir: str | Path, dataset_id: str, sample_id: str,
                   rng: np.random.Generator,
                   camera: CameraModel | None = None) -> SceneSample:
    """A scene sample placed comfortably inside the camera frustum."""
    camera = camera or default_camera()
    out_dir = Path(out_dir)
    frame = write_reference_frame(out_dir / f"{dataset_id}.{sample_id}.png", camera, rng)
    depth = rng.uniform(3500.0, 6000.0)
    max_lateral = 0.25 * depth * camera.image_width / camera.fx
    lateral = rng.uniform(-max_lateral, max_lateral)
    angle = rng.uniform(-np.pi, np.pi)
    facing = np.array([np.cos(angle), np.sin(angle), 0.0])
    return SceneSample(
        dataset_id=dataset_id,
        sample_id=sample_id,
        reference_frame_paths=(str(frame),),
        camera=camera,
        root_pose=np.array([lateral, depth, 1000.0]),
        facing=facing,
        ground_height=0.0,
    )


def make_toy_motion(dataset_id: str, sample_id: str, rng: np.random.Generator,
                    frames: int = 6,
                    handedness: HandednessCorrection = HandednessCorrection()) -> MotionSample:
    motion = synthetic_motion(rng, frames=frames)
    return MotionSample.from_motion(dataset_id, sample_id, motion, handedness)


def make_toy_sources(out_dir: str | Path, n_scenes: int, n_motions: int,
                     seed: int = 0, frames: int = 6,
                     scene_dataset: str = "scenes-a", motion_dataset: str = "motions-b",
                     camera: CameraModel | None = None
                     ) -> tuple[list[SceneSample], list[MotionSample]]:
    """In-memory toy sources: scenes from one dataset, motions from another."""
    camera = camera or default_camera()
    scenes, motions = [], []
    for i in range(n_scenes):
        rng = np.random.default_rng(stable_seed(seed, scene_dataset, i))
        scenes.append(make_toy_scene(Path(out_dir) / "refs", scene_dataset, f"s{i:03d}",
                                     rng, camera))
    for i in range(n_motions):
        rng = np.random.default_rng(stable_seed(seed, motion_dataset, i))
        motions.append(make_toy_motion(motion_dataset, f"m{i:03d}", rng, frames))
    return scenes, motions


def write_source_manifest(out_dir: str | Path, scenes: list[SceneSample],
                          motions: list[MotionSample]) -> Path:
    """Materialize sources as the on-disk layout the pipeline config consumes."""
    out_dir = Path(out_dir)
    (out_dir / "cameras").mkdir(parents=True, exist_ok=True)
    (out_dir / "motions").mkdir(parents=True, exist_ok=True)
    datasets: dict[str, dict] = {}

    def dataset_entry(dataset_id: str, schema_name: str) -> dict:
        if dataset_id not in datasets:
            datasets[dataset_id] = {"dataset_id": dataset_id, "schema": schema_name,
                                    "handedness": None, "scenes": [], "motions": []}
        return datasets[dataset_id]

    for scene in scenes:
        cam_rel = f"cameras/{scene.dataset_id}.{scene.sample_id}.json"
        save_camera(scene.camera, out_dir / cam_rel)
        refs = []
        for p in scene.reference_frame_paths:
            p = Path(p)
            rel = p.relative_to(out_dir) if p.is_relative_to(out_dir) else p
            refs.append(str(rel))
        dataset_entry(scene.dataset_id, "h36m-17")["scenes"].append({
            "sample_id": scene.sample_id,
            "camera": cam_rel,
            "reference_frames": refs,
            "root_pose": [float(x) for x in scene.root_pose],
            "facing": [float(x) for x in scene.facing],
            "ground_height": scene.ground_height,
        })
    for motion in motions:
        rel = f"motions/{motion.dataset_id}.{motion.sample_id}.pseq"
        write_pose(out_dir / rel, motion.motion)
        entry = dataset_entry(motion.dataset_id, motion.motion.schema.name)
        entry["motions"].append({"sample_id": motion.sample_id, "motion": rel})
        if motion.handedness.flip_axis is not None:
            entry["handedness"] = motion.handedness.flip_axis

    path = out_dir / "sources.json"
    path.write_text(json.dumps({"datasets": list(datasets.values())}, indent=2, sort_keys=True))
    return path


def make_synthetic_corpus(out_dir: str | Path, n_sequences: int,
                          frames_per_sequence: int = 30, seed: int = 0,
                          camera: CameraModel | None = None,
                          noise: DetectorNoiseConfig | None = DetectorNoiseConfig(),
                          schema: JointSchema = H36M_17) -> Manifest:
    """A lifting corpus with clean projected 2D and a stored detector channel.

    Every sample carries camera-frame 3D ground truth, its exact projection
    (the clean 2D channel), and, unless ``noise`` is None, a simulated
    detection channel.  All samples are marked kept.  This is the corpus
    format the regime harness consumes.
    """
    out_dir = Path(out_dir)
    camera = camera or default_camera()
    (out_dir / "cameras").mkdir(parents=True, exist_ok=True)
    cam_rel = "cameras/default.json"
    save_camera(camera, out_dir / cam_rel)

    manifest = Manifest(root_dir=out_dir)
    manifest.source_datasets.append({
        "dataset_id": "synthetic", "schema": schema.name, "handedness": None,
    })
    for i in range(n_sequences):
        sid = f"synthetic.seq{i:04d}"
        rng = np.random.default_rng(stable_seed(seed, "corpus", i))
        depth = rng.uniform(3200.0, 6500.0)
        max_lateral = 0.22 * depth * camera.image_width / camera.fx
        start = np.array([rng.uniform(-max_lateral, max_lateral), depth, 0.0])
        motion = synthetic_motion(rng, frames=frames_per_sequence, schema=schema,
                                  start=start, speed_mm=rng.uniform(0.0, 25.0))
        gt_cam = world_to_camera(motion, camera)
        guidance = project(gt_cam, camera)

        sample_dir = out_dir / "samples" / sid
        sample_dir.mkdir(parents=True, exist_ok=True)
        files = {
            "camera": cam_rel,
            "gt_3d_world": f"samples/{sid}/gt_3d_world.pseq",
            "gt_3d_camera": f"samples/{sid}/gt_3d_camera.pseq",
            "guidance_2d": f"samples/{sid}/guidance_2d.pseq",
        }
        write_pose(out_dir / files["gt_3d_world"], motion)
        write_pose(out_dir / files["gt_3d_camera"], gt_cam)
        write_pose(out_dir / files["guidance_2d"], guidance)
        if noise is not None:
            detected = synth_detect(guidance, noise, camera.image_width,
                                    seed=stable_seed(seed, "detect", sid))
            files["detected_2d"] = f"samples/{sid}/detected_2d.pseq"
            write_pose(out_dir / files["detected_2d"], detected)
        hashes = {rel: sha256_file(out_dir / rel) for rel in files.values()}
        manifest.samples.append(ManifestSample(
            id=sid, scene_ref=("synthetic", sid), motion_ref=("synthetic", sid),
            files=files, hashes=hashes, kept=True,
        ))
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
