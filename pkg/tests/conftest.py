"""Shared helpers: independent rotation construction and random pose makers.

The rotation/camera builders here deliberately avoid the package's own
rotation helpers, so tests that compare against them are true cross-checks.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from posefuse.geometry import CameraModel
from posefuse.skeleton import H36M_17, Pose2DSequence, Pose3DSequence


def rodrigues(axis, angle: float) -> np.ndarray:
    """Independent axis-angle rotation (explicit component formula)."""
    x, y, z = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    c, s, t = math.cos(angle), math.sin(angle), 1.0 - math.cos(angle)
    return np.array([
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-6:
        axis = rng.normal(size=3)
    return rodrigues(axis, rng.uniform(0.0, 2.0 * math.pi))


def make_camera(rng: np.random.Generator | None = None, **overrides) -> CameraModel:
    """A valid camera; random extrinsics when an rng is given."""
    params = dict(
        rotation=np.eye(3),
        translation=np.zeros(3),
        fx=1150.0, fy=1148.0, cx=500.0, cy=500.0,
        image_width=1000, image_height=1000,
    )
    if rng is not None:
        params["rotation"] = random_rotation(rng)
        params["translation"] = rng.uniform(-500.0, 500.0, size=3)
        params["fx"] = rng.uniform(800.0, 2400.0)
        params["fy"] = rng.uniform(800.0, 2400.0)
        params["cx"] = rng.uniform(100.0, 900.0)
        params["cy"] = rng.uniform(100.0, 900.0)
    params.update(overrides)
    return CameraModel(**params)


def random_pose3d(rng: np.random.Generator, frames: int = 4,
                  frame_tag: str = "world", spread: float = 800.0) -> Pose3DSequence:
    data = rng.uniform(-spread, spread, size=(frames, len(H36M_17), 3))
    return Pose3DSequence(data, H36M_17, frame_tag)


def random_pose2d(rng: np.random.Generator, frames: int = 4,
                  lo: float = 100.0, hi: float = 900.0) -> Pose2DSequence:
    data = rng.uniform(lo, hi, size=(frames, len(H36M_17), 2))
    return Pose2DSequence(data, H36M_17)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
