"""Cameras and projection basics.

Builds a pinhole camera, pushes a 3D pose through the world-to-camera
transform and the projection, and shows the two conventions that matter
everywhere else: millimeters/pixels, and the 2000 px normalized scoring
plane that makes errors comparable across cameras.
"""

import numpy as np

from posefuse import (
    HandednessCorrection,
    NORMALIZED_WIDTH,
    apply_handedness,
    normalize_2d,
    project,
    world_to_camera,
)
from posefuse.skeleton import H36M_17, Pose3DSequence
from posefuse.toydata import TEMPLATE_POSE, default_camera

camera = default_camera(image_width=1000, image_height=1000)
print(f"camera: {camera.image_width}x{camera.image_height}, fx={camera.fx:.0f}, "
      f"principal point ({camera.cx:.0f}, {camera.cy:.0f})")

# a person standing 4 m in front of the camera, facing +x
standing = TEMPLATE_POSE + np.array([0.0, 4000.0, 0.0])
pose = Pose3DSequence(standing[None], H36M_17, "world")

cam_frame = world_to_camera(pose, camera)
print(f"\npelvis in world:  {pose.data[0, 0]} mm")
print(f"pelvis in camera: {cam_frame.data[0, 0]} mm (depth = {cam_frame.data[0, 0, 2]:.0f})")

kps = project(cam_frame, camera)
for name in ("pelvis", "neck", "left_ankle", "right_wrist"):
    j = H36M_17.index(name)
    print(f"{name:>12}: ({kps.data[0, j, 0]:7.1f}, {kps.data[0, j, 1]:7.1f}) px")

# scoring happens in a width-normalized plane so camera resolution drops out
normalized = normalize_2d(kps, camera)
scale = NORMALIZED_WIDTH / camera.image_width
print(f"\nnormalization scale for this camera: x{scale:.2f}")
print(f"pelvis normalized: ({normalized.data[0, 0, 0]:.1f}, {normalized.data[0, 0, 1]:.1f}) px")

# datasets with mirrored axes get a handedness correction before alignment
mirrored = apply_handedness(pose, HandednessCorrection(flip_axis=1))
print(f"\nafter flipping axis 1: pelvis y {pose.data[0, 0, 1]:.0f} -> "
      f"{mirrored.data[0, 0, 1]:.0f} (applying twice restores the original: "
      f"{(apply_handedness(mirrored, HandednessCorrection(1)).data == pose.data).all()})")
