"""Evaluation metric suite: MPJPE and its aligned variants.

MPJPE is the mean Euclidean distance over frames and joints, in mm; by
default both poses are made root-relative per frame first (the standard
protocol for the datasets this targets; pass ``root_relative=False`` for the
raw positional error).  P-MPJPE removes a per-frame similarity transform
(rotation, translation, and uniform scale by default) before measuring;
N-MPJPE removes only the least-squares optimal per-frame scale.  Velocity
error applies the positional error to first-order temporal differences and is
reported per frame.  Corpus-level numbers are unweighted per-sequence
averages, never frame-weighted.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, SchemaMismatchError
from .geometry import CameraModel
from .quality import per_frame_px_error
from .skeleton import Pose2DSequence, Pose3DSequence


class DegenerateFrameWarning(UserWarning):
    """An alignment step fell back to a reduced transform for some frame."""


def _check_pair(gt: Pose3DSequence, pred: Pose3DSequence):
    if gt.schema != pred.schema:
        raise SchemaMismatchError(
            f"schemas differ: {gt.schema.name!r} vs {pred.schema.name!r}"
        )
    if gt.data.shape != pred.data.shape:
        raise InvalidInputError(
            f"pose shapes differ: {gt.data.shape} vs {pred.data.shape}"
        )


def _root_centered(pose: Pose3DSequence) -> np.ndarray:
    root = pose.data[:, pose.schema.root_index:pose.schema.root_index + 1]
    return pose.data - root


def _mean_norm(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(a - b, axis=-1)))


def mpjpe(gt: Pose3DSequence, pred: Pose3DSequence, root_relative: bool = True) -> float:
    """Mean per-joint position error in mm."""
    _check_pair(gt, pred)
    if root_relative:
        return _mean_norm(_root_centered(gt), _root_centered(pred))
    return _mean_norm(gt.data, pred.data)


def similarity_align(gt_frame: np.ndarray, pred_frame: np.ndarray,
                     with_scale: bool = True) -> tuple[np.ndarray, dict]:
    """Align one (J, 3) frame to another with the optimal similarity.

    Returns the aligned prediction and the transform parameters.  The
    rotation is the SVD solution with the smallest singular direction
    sign-corrected so det(R) = +1.  When the prediction is degenerate (all
    joints coincident) the scale is undefined; the alignment falls back to
    rotation+translation and marks the frame.
    """
    mu_gt = gt_frame.mean(axis=0)
    mu_pred = pred_frame.mean(axis=0)
    x0 = gt_frame - mu_gt
    y0 = pred_frame - mu_pred

    h = y0.T @ x0
    u, d, vt = np.linalg.svd(h)
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    if sign == 0:
        sign = 1.0
    flip = np.ones(3)
    flip[-1] = sign
    rot = vt.T @ np.diag(flip) @ u.T

    denom = float((y0 * y0).sum())
    degenerate = denom < 1e-12
    if with_scale and not degenerate:
        scale = float((d * flip).sum()) / denom
    else:
        scale = 1.0
    if degenerate:
        warnings.warn("prediction frame is degenerate (all joints coincident); "
                      "aligned without scale", DegenerateFrameWarning, stacklevel=2)
    t = mu_gt - scale * rot @ mu_pred
    aligned = scale * pred_frame @ rot.T + t
    return aligned, {"scale": scale, "rotation": rot, "translation": t,
                     "degenerate": degenerate}


def p_mpjpe(gt: Pose3DSequence, pred: Pose3DSequence, with_scale: bool = True) -> float:
    """MPJPE after per-frame Procrustes alignment of the prediction, in mm."""
    _check_pair(gt, pred)
    errs = []
    for t in range(gt.num_frames):
        aligned, _ = similarity_align(gt.data[t], pred.data[t], with_scale)
        errs.append(np.linalg.norm(aligned - gt.data[t], axis=-1).mean())
    return float(np.mean(errs))


def n_mpjpe(gt: Pose3DSequence, pred: Pose3DSequence) -> float:
    """MPJPE after the per-frame least-squares optimal uniform scale, in mm."""
    _check_pair(gt, pred)
    dots = (pred.data * gt.data).sum(axis=(1, 2))
    norms = (pred.data * pred.data).sum(axis=(1, 2))
    degenerate = norms < 1e-12
    if degenerate.any():
        warnings.warn(f"{int(degenerate.sum())} prediction frame(s) have zero norm; "
                      "using scale 1", DegenerateFrameWarning, stacklevel=2)
    scales = np.where(degenerate, 1.0, dots / np.where(degenerate, 1.0, norms))
    return _mean_norm(gt.data, scales[:, None, None] * pred.data)


def velocity_error(gt: Pose3DSequence, pred: Pose3DSequence) -> float:
    """Positional error of first-order temporal differences, mm per frame.

    Differences are taken on the coordinates as given, so any constant
    per-sequence offset of the prediction cancels exactly.
    """
    _check_pair(gt, pred)
    if gt.num_frames < 2:
        raise InvalidInputError("velocity error needs at least two frames")
    return _mean_norm(np.diff(gt.data, axis=0), np.diff(pred.data, axis=0))


def pos2d_error(gt2d: Pose2DSequence, pred2d: Pose2DSequence, cam: CameraModel) -> float:
    """Image-plane MPJPE in normalized px; same semantics as quality scoring."""
    return float(per_frame_px_error(gt2d, pred2d, cam).mean())


def per_sequence_average(values) -> float:
    """Unweighted mean over sequences (never weighted by sequence length)."""
    values = list(values)
    if not values:
        raise InvalidInputError("no per-sequence values to average")
    return float(np.mean(values))


@dataclass
class MetricReport:
    """Corpus-level metric values plus the per-sequence breakdown."""

    mpjpe: float
    p_mpjpe: float
    n_mpjpe: float
    velocity_error: float
    per_sequence: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("mpjpe", "p_mpjpe", "n_mpjpe", "velocity_error"):
            v = getattr(self, name)
            if v < 0 or not np.isfinite(v):
                raise InvalidInputError(f"{name} must be finite and >= 0, got {v}")

    def to_dict(self) -> dict:
        return {
            "mpjpe_mm": self.mpjpe,
            "p_mpjpe_mm": self.p_mpjpe,
            "n_mpjpe_mm": self.n_mpjpe,
            "velocity_error_mm_per_frame": self.velocity_error,
            "per_sequence": {k: list(v) for k, v in self.per_sequence.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate_suite(gts: list[Pose3DSequence], preds: list[Pose3DSequence]) -> MetricReport:
    """Run the full metric suite over matched sequences, root-relative.

    Sequence values are averaged unweighted, so short and long sequences
    count equally.
    """
    if len(gts) != len(preds):
        raise InvalidInputError(f"{len(gts)} ground-truth vs {len(preds)} predicted sequences")
    if not gts:
        raise InvalidInputError("no sequences to evaluate")
    per = {"mpjpe": [], "p_mpjpe": [], "n_mpjpe": [], "velocity_error": []}
    for gt, pred in zip(gts, preds):
        gt_c = Pose3DSequence(_root_centered(gt), gt.schema, gt.frame_tag)
        pred_c = Pose3DSequence(_root_centered(pred), pred.schema, pred.frame_tag)
        per["mpjpe"].append(mpjpe(gt_c, pred_c, root_relative=False))
        per["p_mpjpe"].append(p_mpjpe(gt_c, pred_c))
        per["n_mpjpe"].append(n_mpjpe(gt_c, pred_c))
        per["velocity_error"].append(velocity_error(gt_c, pred_c))
    return MetricReport(
        mpjpe=per_sequence_average(per["mpjpe"]),
        p_mpjpe=per_sequence_average(per["p_mpjpe"]),
        n_mpjpe=per_sequence_average(per["n_mpjpe"]),
        velocity_error=per_sequence_average(per["velocity_error"]),
        per_sequence={k: tuple(v) for k, v in per.items()},
    )


def format_metric_table(report: MetricReport) -> str:
    """Aligned table with the conventional column names."""
    headers = ("MPJPE", "P-MPJPE", "Vel. Err.")
    values = (report.mpjpe, report.p_mpjpe, report.velocity_error)
    cells = [f"{v:.2f}" for v in values]
    widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
    head = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    row = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    return head + "\n" + row
