"""Fusing motion sequences into foreign scenes.

A scene sample contributes appearance (reference frames), a camera, and a
root anchor; a motion sample contributes the full pose sequence.  Alignment
re-roots the motion at the scene anchor with a rotation restricted to the
gravity axis, then adds a vertical offset so the lowest foot over the whole
sequence touches the scene's ground plane.  Restricting the transform to a
rigid motion keeps bone lengths intact, so the re-rooted sequence remains
exact 3D ground truth for the synthesized video.

World frames are z-up: the gravity axis is +Z and the ground plane is
z = ground_height.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCorpusError, InvalidInputError, PlacementError
from .geometry import (
    CameraModel,
    HandednessCorrection,
    apply_handedness,
    check_rotation,
    project,
    rotation_about_axis,
    world_to_camera,
)
from .skeleton import WORLD, Pose2DSequence, Pose3DSequence, SchemaMapping, map_schema_2d

UP_AXIS = 2
UP = np.array([0.0, 0.0, 1.0])

DEGENERATE_FACING_TOL = 1e-6


class DegenerateFacingWarning(UserWarning):
    """Facing direction could not be derived; identity rotation used."""


@dataclass(frozen=True, eq=False)
class SceneSample:
    """Appearance anchor: reference frames, camera, and root placement."""

    dataset_id: str
    sample_id: str
    reference_frame_paths: tuple[str, ...]
    camera: CameraModel
    root_pose: np.ndarray      # (3,) mm, world
    facing: np.ndarray         # unit 3-vector, world
    ground_height: float = 0.0

    def __post_init__(self):
        if len(self.reference_frame_paths) < 1:
            raise InvalidInputError(f"scene {self.sample_id!r} has no reference frames")
        object.__setattr__(self, "root_pose",
                           np.asarray(self.root_pose, dtype=np.float64).reshape(3))
        facing = np.asarray(self.facing, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(facing) - 1.0) > 1e-6:
            raise InvalidInputError(
                f"scene {self.sample_id!r}: facing direction must be unit norm"
            )
        object.__setattr__(self, "facing", facing)


@dataclass
class MotionSample:
    """Pose-sequence source with its root track and handedness convention."""

    dataset_id: str
    sample_id: str
    motion: Pose3DSequence
    root_trajectory: np.ndarray
    handedness: HandednessCorrection = HandednessCorrection()

    def __post_init__(self):
        self.root_trajectory = np.asarray(self.root_trajectory, dtype=np.float64)
        if not np.array_equal(self.root_trajectory, self.motion.root_track()):
            raise InvalidInputError(
                f"motion {self.sample_id!r}: root trajectory does not equal the "
                f"root joint track"
            )

    @classmethod
    def from_motion(cls, dataset_id: str, sample_id: str, motion: Pose3DSequence,
                    handedness: HandednessCorrection = HandednessCorrection()) -> "MotionSample":
        return cls(dataset_id, sample_id, motion, motion.root_track(), handedness)

    def corrected(self) -> "MotionSample":
        """Return a copy with the handedness correction applied and cleared."""
        if self.handedness.flip_axis is None:
            return self
        fixed = apply_handedness(self.motion, self.handedness)
        return MotionSample(self.dataset_id, self.sample_id, fixed,
                            fixed.root_track(), HandednessCorrection())


@dataclass(frozen=True, eq=False)
class AlignmentTransform:
    """Gravity-axis rotation plus translation residual applied after re-rooting."""

    rotation_w: np.ndarray   # (3, 3), rotation about the vertical axis only
    translation: np.ndarray  # (3,) mm

    def __post_init__(self):
        r = check_rotation(self.rotation_w)
        if np.abs(r @ UP - UP).max() > 1e-6:
            raise InvalidInputError("alignment rotation must fix the gravity axis")
        object.__setattr__(self, "rotation_w", r)
        object.__setattr__(self, "translation",
                           np.asarray(self.translation, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls) -> "AlignmentTransform":
        return cls(np.eye(3), np.zeros(3))


@dataclass
class FusedSample:
    """One synthetic datum: provenance plus the materialized tensors.

    Tensor fields start empty when emitted as a pairing spec and are filled
    by the pipeline.  A sample is cross-domain when scene and motion come
    from different datasets, in-domain when the dataset matches but the
    sample differs.
    """

    id: str
    scene_ref: tuple[str, str]
    motion_ref: tuple[str, str]
    gt_3d_world: Pose3DSequence | None = None
    gt_3d_camera: Pose3DSequence | None = None
    guidance_2d: Pose2DSequence | None = None
    generated_frames_path: str | None = None
    detected_2d: Pose2DSequence | None = None
    quality_score: float | None = None

    @property
    def is_cross_domain(self) -> bool:
        return self.scene_ref[0] != self.motion_ref[0]


def _ground_facing(vec: np.ndarray) -> np.ndarray | None:
    """Project to the ground plane and normalize; None when degenerate."""
    flat = vec.astype(np.float64).copy()
    flat[UP_AXIS] = 0.0
    norm = np.linalg.norm(flat)
    if norm < DEGENERATE_FACING_TOL:
        return None
    return flat / norm


def motion_facing(frame: np.ndarray, schema) -> np.ndarray | None:
    """Facing of a single (J, 3) pose: hip-to-hip crossed with the up axis.

    Returns None when the hip vector is (nearly) vertical.
    """
    hip_l = frame[schema.index("left_hip")]
    hip_r = frame[schema.index("right_hip")]
    return _ground_facing(np.cross(hip_l - hip_r, UP))


def compute_alignment(motion: MotionSample, scene: SceneSample) -> AlignmentTransform:
    """Derive the scene-placement transform for a motion.

    The rotation turns the motion's frame-0 facing onto the scene facing
    (about the vertical axis only); the translation is the vertical offset
    that puts the lowest foot over all frames exactly on the ground plane.
    Degenerate facing falls back to the identity rotation with a warning.
    """
    if motion.motion.num_frames < 1:
        raise InvalidInputError("motion has no frames")
    schema = motion.motion.schema
    f_motion = motion_facing(motion.motion.data[0], schema)
    f_scene = _ground_facing(scene.facing)
    if f_motion is None or f_scene is None:
        which = "motion hip axis" if f_motion is None else "scene facing"
        warnings.warn(
            f"{motion.sample_id!r} -> {scene.sample_id!r}: {which} is degenerate "
            f"(vertical); using identity rotation",
            DegenerateFacingWarning,
            stacklevel=2,
        )
        rot = np.eye(3)
    else:
        angle = np.arctan2(
            f_motion[0] * f_scene[1] - f_motion[1] * f_scene[0],
            float(f_motion @ f_scene),
        )
        rot = rotation_about_axis(UP, angle)

    # vertical residual: lowest foot over all frames lands on the ground plane
    root0 = motion.motion.data[0, schema.root_index]
    placed = motion.motion.data @ rot.T + (scene.root_pose - rot @ root0)
    feet = schema.foot_indices if schema.foot_indices else tuple(range(len(schema)))
    min_height = placed[:, list(feet), UP_AXIS].min()
    dz = scene.ground_height - min_height
    translation = np.array([0.0, 0.0, dz])
    return AlignmentTransform(rot, translation)


def align(motion: MotionSample, scene: SceneSample,
          xf: AlignmentTransform) -> Pose3DSequence:
    """Re-root the motion at the scene anchor: p' = W (p - root_0) + anchor + t.

    Expects the handedness correction to have been applied already.  The
    rotate-then-translate pair realizes the alignment as a rigid transform,
    so all inter-joint distances are preserved.  Raises ``PlacementError``
    when any aligned joint falls behind the scene camera.
    """
    root0 = motion.motion.data[0, motion.motion.schema.root_index]
    # single affine form keeps the collapse case (identity W, equal roots) exact
    offset = scene.root_pose + xf.translation - xf.rotation_w @ root0
    out = motion.motion.data @ xf.rotation_w.T + offset

    cam = scene.camera
    z = (out @ cam.rotation.T + cam.translation)[..., 2]
    behind = z <= 0
    if behind.any():
        t, j = np.argwhere(behind)[0]
        raise PlacementError(
            f"aligned joint {int(j)} of frame {int(t)} lies behind the scene "
            f"camera (z={float(z[t, j]):.1f} mm); sample rejected"
        )
    return Pose3DSequence(out, motion.motion.schema, WORLD)


def validate_placement(pose_world: Pose3DSequence, cam: CameraModel,
                       max_outside_fraction: float = 0.2):
    """Reject placements where too many joints project outside the image."""
    kps = project(world_to_camera(pose_world, cam), cam)
    u, v = kps.data[..., 0], kps.data[..., 1]
    outside = (u < 0) | (u >= cam.image_width) | (v < 0) | (v >= cam.image_height)
    fraction = float(outside.mean())
    if fraction > max_outside_fraction:
        raise PlacementError(
            f"{fraction:.0%} of joints project outside the "
            f"{cam.image_width}x{cam.image_height} image "
            f"(limit {max_outside_fraction:.0%})"
        )


def make_guidance(gt_3d_world: Pose3DSequence, cam: CameraModel,
                  mapping: SchemaMapping) -> Pose2DSequence:
    """Project aligned ground truth and convert it to the generator schema."""
    return map_schema_2d(project(world_to_camera(gt_3d_world, cam), cam), mapping)


@dataclass(frozen=True)
class PairingPolicy:
    """How scenes and motions pair up.

    Kinds: ``all-pairs``, ``cross-only`` (different datasets),
    ``in-domain-only`` (same dataset, different sample), and ``random-k``
    (seeded subsample of the all-pairs set).  Self-pairs (same dataset and
    sample) are always excluded.
    """

    kind: str = "all-pairs"
    k: int | None = None
    seed: int = 0

    _KINDS = ("all-pairs", "cross-only", "in-domain-only", "random-k")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise InvalidInputError(f"unknown pairing policy {self.kind!r}")
        if self.kind == "random-k" and (self.k is None or self.k < 1):
            raise InvalidInputError("random-k policy needs k >= 1")


def sample_id_for(scene: SceneSample, motion: MotionSample) -> str:
    return f"{scene.dataset_id}.{scene.sample_id}+{motion.dataset_id}.{motion.sample_id}"


def cross_fuse(scenes: list[SceneSample], motions: list[MotionSample],
               policy: PairingPolicy = PairingPolicy()) -> list[FusedSample]:
    """Emit fused-sample specs (ids and provenance) for a pairing policy.

    Output is sorted by id, so downstream processing order is deterministic.
    """
    if not scenes or not motions:
        raise EmptyCorpusError("cross_fuse needs at least one scene and one motion")
    pairs = []
    for scene in scenes:
        for motion in motions:
            same_dataset = scene.dataset_id == motion.dataset_id
            if same_dataset and scene.sample_id == motion.sample_id:
                continue  # self-pair
            if policy.kind == "cross-only" and same_dataset:
                continue
            if policy.kind == "in-domain-only" and not same_dataset:
                continue
            pairs.append(FusedSample(
                id=sample_id_for(scene, motion),
                scene_ref=(scene.dataset_id, scene.sample_id),
                motion_ref=(motion.dataset_id, motion.sample_id),
            ))
    pairs.sort(key=lambda s: s.id)
    if policy.kind == "random-k":
        rng = np.random.default_rng(policy.seed)
        k = min(policy.k, len(pairs))
        idx = sorted(rng.choice(len(pairs), size=k, replace=False).tolist())
        pairs = [pairs[i] for i in idx]
    if not pairs:
        raise EmptyCorpusError(
            f"pairing policy {policy.kind!r} left no samples "
            f"({len(scenes)} scenes x {len(motions)} motions)"
        )
    return pairs
