"""2D-consistency scoring of generated samples and the top-fraction filter.

A sample's score is the mean distance, in the 2000 px normalized plane,
between detected keypoints and the projected 2D ground truth.  Joints whose
confidence is zero on either side (deliberately dropped guidance points, or
joints the detector never found) are excluded.  Filtering keeps the lowest
scoring fraction of a corpus; real generator error distributions are heavy
tailed, so a small retained fraction removes most of the error mass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyCorpusError, InvalidInputError, SchemaMismatchError
from .geometry import CameraModel, normalize_2d
from .skeleton import Pose2DSequence


@dataclass
class QualityReport:
    """Per-sample 2D-consistency score in normalized pixels."""

    sample_id: str
    score: float
    per_frame_scores: np.ndarray
    kept: bool = False

    def __post_init__(self):
        self.per_frame_scores = np.asarray(self.per_frame_scores, dtype=np.float64)
        if self.score < 0 or not np.isfinite(self.score):
            raise InvalidInputError(f"score must be finite and >= 0, got {self.score}")
        if abs(self.score - self.per_frame_scores.mean()) > 1e-9:
            raise InvalidInputError("score must equal the mean of per-frame scores")

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "score": self.score,
            "per_frame_scores": [float(x) for x in self.per_frame_scores],
            "kept": self.kept,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QualityReport":
        return cls(d["sample_id"], float(d["score"]),
                   np.asarray(d["per_frame_scores"]), bool(d.get("kept", False)))


def _check_comparable(a: Pose2DSequence, b: Pose2DSequence):
    if a.schema != b.schema:
        raise SchemaMismatchError(
            f"cannot compare keypoints in schema {a.schema.name!r} with {b.schema.name!r}"
        )
    if a.data.shape != b.data.shape:
        raise InvalidInputError(
            f"keypoint shapes differ: {a.data.shape} vs {b.data.shape}"
        )


def per_frame_px_error(a: Pose2DSequence, b: Pose2DSequence,
                       cam: CameraModel) -> np.ndarray:
    """Mean normalized distance per frame over jointly confident joints.

    Symmetric in its two arguments: a joint is excluded when either side has
    confidence zero.
    """
    _check_comparable(a, b)
    include = (a.confidence > 0) & (b.confidence > 0)
    if not include.any():
        raise InvalidInputError("no jointly confident joints to score")
    an = normalize_2d(a, cam)
    bn = normalize_2d(b, cam)
    dist = np.linalg.norm(an.data - bn.data, axis=-1)
    counts = include.sum(axis=1)
    if (counts == 0).any():
        t = int(np.argwhere(counts == 0)[0][0])
        raise InvalidInputError(f"frame {t} has no jointly confident joints")
    return (dist * include).sum(axis=1) / counts


def score_sample(detected: Pose2DSequence, truth: Pose2DSequence,
                 cam: CameraModel, sample_id: str = "") -> QualityReport:
    """Score a generated sample by its detected-vs-truth 2D position error."""
    per_frame = per_frame_px_error(detected, truth, cam)
    return QualityReport(sample_id, float(per_frame.mean()), per_frame)


def filter_top(reports: list[QualityReport], fraction: float = 0.10) -> list[str]:
    """Keep the ceil(fraction * n) lowest-scoring samples.

    Ties break lexicographically by sample id, so the kept set is a
    deterministic function of the reports regardless of input order.  Updates
    the ``kept`` flag on every report and returns the kept ids in id order.
    """
    if not reports:
        raise EmptyCorpusError("no quality reports to filter")
    if not 0.0 < fraction <= 1.0:
        raise InvalidInputError(f"fraction must lie in (0, 1], got {fraction}")
    n_keep = math.ceil(fraction * len(reports))
    ranked = sorted(reports, key=lambda r: (r.score, r.sample_id))
    kept_ids = {r.sample_id for r in ranked[:n_keep]}
    for r in reports:
        r.kept = r.sample_id in kept_ids
    return sorted(kept_ids)


def summary_stats(scores) -> dict:
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size == 0:
        return {"count": 0}
    return {
        "count": int(scores.size),
        "mean": float(scores.mean()),
        "median": float(np.median(scores)),
        "p90": float(np.quantile(scores, 0.90)),
        "p99": float(np.quantile(scores, 0.99)),
    }


def write_reports(reports: list[QualityReport], path: str | Path):
    """Serialize reports as JSON lines, one object per sample."""
    with open(path, "w") as f:
        for r in sorted(reports, key=lambda r: r.sample_id):
            f.write(json.dumps(r.to_dict()) + "\n")


def read_reports(path: str | Path) -> list[QualityReport]:
    reports = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                reports.append(QualityReport.from_dict(json.loads(line)))
    return reports
