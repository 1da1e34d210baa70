"""Camera models, world/camera transforms, and pinhole projection.

Conventions (also recorded in every manifest so files are self-describing):

* camera frame is right handed, +Z forward; a point is visible only if z > 0
* image origin is the top-left corner, u right, v down, units are pixels
* 3D is in millimeters, rotations are world->camera
* no lens distortion; intrinsics are pure pinhole

2D scoring happens in a normalized camera plane rescaled to a 2000 px width
(aspect ratio preserved), so errors from cameras of different resolutions are
comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BehindCameraError, InvalidInputError
from .skeleton import CAMERA, WORLD, Pose2DSequence, Pose3DSequence, _first_nonfinite

NORMALIZED_WIDTH = 2000.0
CONVENTION = "rh-z-forward"

ORTHONORMAL_TOL = 1e-6


def check_rotation(rotation: np.ndarray, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    """Validate a proper rotation matrix (orthonormal, det +1) within ``tol``."""
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3):
        raise InvalidInputError(f"rotation must be 3x3, got {r.shape}")
    if not np.isfinite(r).all():
        raise InvalidInputError("rotation contains non-finite entries")
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err > tol:
        raise InvalidInputError(f"rotation is not orthonormal (max deviation {err:.3e})")
    det = np.linalg.det(r)
    if abs(det - 1.0) > tol:
        raise InvalidInputError(f"rotation determinant {det:.9f} is not +1")
    return r


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Pinhole intrinsics plus rigid world->camera extrinsics."""

    rotation: np.ndarray      # (3, 3), world -> camera
    translation: np.ndarray   # (3,), mm, camera frame
    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int

    def __post_init__(self):
        object.__setattr__(self, "rotation", check_rotation(self.rotation))
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.isfinite(t).all():
            raise InvalidInputError("camera translation contains non-finite entries")
        object.__setattr__(self, "translation", t)
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidInputError("focal lengths must be positive")
        if not (self.image_width > 0 and self.image_height > 0):
            raise InvalidInputError("image dimensions must be positive")
        if not (0 <= self.cx < self.image_width and 0 <= self.cy < self.image_height):
            raise InvalidInputError(
                f"principal point ({self.cx}, {self.cy}) outside image "
                f"{self.image_width}x{self.image_height}"
            )


@dataclass(frozen=True)
class HandednessCorrection:
    """Axis negation reconciling left-/right-handed coordinate conventions.

    Applying the same correction twice is the identity.
    """

    flip_axis: int | None = None

    def __post_init__(self):
        if self.flip_axis is not None and self.flip_axis not in (0, 1, 2):
            raise InvalidInputError(f"flip axis must be 0, 1, 2 or None, got {self.flip_axis}")


def _require_finite(pose_data: np.ndarray, what: str):
    loc = _first_nonfinite(pose_data)
    if loc is not None:
        raise InvalidInputError(f"non-finite {what} at frame {loc[0]}, joint {loc[1]}")


def world_to_camera(pose: Pose3DSequence, cam: CameraModel) -> Pose3DSequence:
    """Apply the rigid extrinsics: p_cam = R p_world + t."""
    if pose.frame_tag != WORLD:
        raise InvalidInputError(f"expected a world-frame pose, got tag {pose.frame_tag!r}")
    _require_finite(pose.data, "world coordinate")
    out = pose.data @ cam.rotation.T + cam.translation
    return Pose3DSequence(out, pose.schema, CAMERA)


def project(pose: Pose3DSequence, cam: CameraModel) -> Pose2DSequence:
    """Pinhole projection u = fx*x/z + cx, v = fy*y/z + cy.

    Any joint with depth z <= 0 raises; points behind the camera are never
    silently clamped.
    """
    if pose.frame_tag != CAMERA:
        raise InvalidInputError(f"expected a camera-frame pose, got tag {pose.frame_tag!r}")
    z = pose.data[..., 2]
    behind = z <= 0
    if behind.any():
        t, j = np.argwhere(behind)[0]
        raise BehindCameraError(int(t), int(j), float(z[t, j]))
    u = cam.fx * pose.data[..., 0] / z + cam.cx
    v = cam.fy * pose.data[..., 1] / z + cam.cy
    return Pose2DSequence(np.stack([u, v], axis=-1), pose.schema)


def apply_handedness(pose: Pose3DSequence, corr: HandednessCorrection) -> Pose3DSequence:
    """Negate the configured axis of every joint; no-op without a flip axis."""
    if corr.flip_axis is None:
        return Pose3DSequence(pose.data.copy(), pose.schema, pose.frame_tag)
    out = pose.data.copy()
    out[..., corr.flip_axis] = -out[..., corr.flip_axis]
    return Pose3DSequence(out, pose.schema, pose.frame_tag)


def normalize_2d(kps: Pose2DSequence, cam: CameraModel) -> Pose2DSequence:
    """Rescale keypoints to the 2000 px wide scoring plane (aspect preserved)."""
    scale = NORMALIZED_WIDTH / cam.image_width
    return Pose2DSequence(kps.data * scale, kps.schema, kps.confidence.copy())


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(a)
    if norm < 1e-12:
        raise InvalidInputError("rotation axis has zero length")
    a = a / norm
    k = np.array([
        [0.0, -a[2], a[1]],
        [a[2], 0.0, -a[0]],
        [-a[1], a[0], 0.0],
    ])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


# --- camera files -----------------------------------------------------------

def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "rotation": [float(x) for x in cam.rotation.reshape(-1)],
        "translation": [float(x) for x in cam.translation],
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "image_width": cam.image_width, "image_height": cam.image_height,
        "convention": CONVENTION,
    }


def camera_from_dict(d: dict) -> CameraModel:
    try:
        if d.get("convention", CONVENTION) != CONVENTION:
            raise InvalidInputError(
                f"unsupported camera convention {d['convention']!r}; expected {CONVENTION!r}"
            )
        rotation = np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3)
        return CameraModel(
            rotation=rotation,
            translation=np.asarray(d["translation"], dtype=np.float64),
            fx=float(d["fx"]), fy=float(d["fy"]),
            cx=float(d["cx"]), cy=float(d["cy"]),
            image_width=int(d["image_width"]), image_height=int(d["image_height"]),
        )
    except KeyError as exc:
        raise InvalidInputError(f"camera file misses key {exc}") from exc


def save_camera(cam: CameraModel, path: str | Path):
    Path(path).write_text(json.dumps(camera_to_dict(cam), indent=2, sort_keys=True))


def load_camera(path: str | Path) -> CameraModel:
    return camera_from_dict(json.loads(Path(path).read_text()))
