"""Video generator and 2D detector adapters, plus deterministic built-in mocks.

Real generators and detectors are neural models that run out of process: an
external adapter writes a JSON request file, invokes a command, and validates
the declared outputs.  The built-in mock generator renders a stick figure
over the scene's reference frame and records the positions it actually drew
(including any simulated generation drift) in a sidecar tensor, so the
synthetic detector measures generation error rather than only detector noise.
Everything is replayable: a (request, seed) pair always produces identical
bytes.

Noise magnitudes (detector sigma, outlier radii, drift sigma) are specified
in the 2000 px normalized plane and scaled to image pixels internally, so the
same config produces the same normalized error on any camera.
"""

from __future__ import annotations

import hashlib
import json
import subprocess
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .errors import (
    AdapterFailedError,
    FrameCountError,
    InvalidInputError,
    SchemaMismatchError,
    UnreadableOutputError,
)
from .geometry import NORMALIZED_WIDTH
from .skeleton import JointSchema, Pose2DSequence
from . import poseio

FRAME_PATTERN = "frame_{:06d}.png"
FRAME_GLOB = "frame_*.png"
SIDECAR_NAME = "realized_2d.pseq"


def stable_seed(*parts) -> int:
    """Derive a reproducible RNG seed from arbitrary labels.

    Independent of process hash randomization, so per-sample randomness is a
    pure function of (corpus seed, sample id, stage) no matter how work is
    scheduled across workers or runs.
    """
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class DetectorNoiseConfig:
    """Synthetic 2D detector noise, calibrated to real-detector error scales.

    All magnitudes are post-normalization (2000 px plane).  Defaults yield a
    mean error of roughly 20 px, sitting between the published real-data
    anchors of ~17 and ~25 px, with a heavy tail from sporadic outliers.
    Missed joints keep the previous frame's position at confidence 0.1.
    """

    gaussian_sigma: float = 14.0
    outlier_prob: float = 0.05
    outlier_radius: tuple[float, float] = (30.0, 120.0)
    miss_prob: float = 0.01
    miss_confidence: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (self.gaussian_sigma >= 0 and np.isfinite(self.gaussian_sigma)):
            raise InvalidInputError("gaussian_sigma must be finite and >= 0")
        for name in ("outlier_prob", "miss_prob", "miss_confidence"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {v}")
        lo, hi = self.outlier_radius
        if not (0 <= lo < hi):
            raise InvalidInputError(f"outlier radius range must satisfy 0 <= min < max, got {lo}, {hi}")

    def to_dict(self) -> dict:
        return {
            "gaussian_sigma": self.gaussian_sigma,
            "outlier_prob": self.outlier_prob,
            "outlier_radius": list(self.outlier_radius),
            "miss_prob": self.miss_prob,
            "miss_confidence": self.miss_confidence,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorNoiseConfig":
        kwargs = dict(d)
        if "outlier_radius" in kwargs:
            kwargs["outlier_radius"] = tuple(kwargs["outlier_radius"])
        return cls(**kwargs)


#: noise config used by zero-noise / degenerate-regime checks
NO_NOISE = DetectorNoiseConfig(gaussian_sigma=0.0, outlier_prob=0.0, miss_prob=0.0)


@dataclass(frozen=True)
class CorruptionKnob:
    """Simulated generation artifacts for the mock generator.

    With probability ``failure_prob`` a sequence renders with an AR(1) pose
    drift of stationary deviation ``pose_drift_sigma`` (normalized px) per
    coordinate; other sequences render exactly at the guidance.  This gives
    the quality filter a heavy-tailed error distribution to act on.
    """

    pose_drift_sigma: float = 100.0
    drift_correlation: float = 0.9
    failure_prob: float = 0.0

    def __post_init__(self):
        if not (self.pose_drift_sigma >= 0 and np.isfinite(self.pose_drift_sigma)):
            raise InvalidInputError("pose_drift_sigma must be finite and >= 0")
        if not 0.0 <= self.drift_correlation < 1.0:
            raise InvalidInputError("drift_correlation must lie in [0, 1)")
        if not 0.0 <= self.failure_prob <= 1.0:
            raise InvalidInputError("failure_prob must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "pose_drift_sigma": self.pose_drift_sigma,
            "drift_correlation": self.drift_correlation,
            "failure_prob": self.failure_prob,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorruptionKnob":
        return cls(**d)


@dataclass
class GeneratorRequest:
    """One generation job: appearance anchors, pose guidance, output slot."""

    reference_frame_paths: tuple[str, ...]
    guidance: Pose2DSequence
    output_dir: Path
    seed: int = 0

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        self.reference_frame_paths = tuple(str(p) for p in self.reference_frame_paths)


def joint_colors(schema: JointSchema) -> np.ndarray:
    """Deterministic, well-separated BGR disc colors, one per joint."""
    j = len(schema)
    hues = np.round(np.arange(j) * 180.0 / j).astype(np.uint8)
    hsv = np.stack([hues, np.full(j, 255, np.uint8), np.full(j, 255, np.uint8)], axis=-1)
    return cv2.cvtColor(hsv[None], cv2.COLOR_HSV2BGR)[0].astype(np.int32)


def _ar1_drift(rng: np.random.Generator, t: int, j: int,
               sigma: float, rho: float) -> np.ndarray:
    """Stationary AR(1) process, per joint and coordinate, std ``sigma``."""
    eps = rng.normal(0.0, 1.0, size=(t, j, 2))
    drift = np.empty((t, j, 2))
    drift[0] = sigma * eps[0]
    innov = sigma * np.sqrt(1.0 - rho * rho)
    for k in range(1, t):
        drift[k] = rho * drift[k - 1] + innov * eps[k]
    return drift


class MockGeneratorAdapter:
    """Stick-figure renderer standing in for a pose-conditioned video model.

    Renders each frame onto the first readable reference frame (or a flat
    gray canvas), drawing schema bones as anti-aliased segments and joints as
    color-coded discs at the guidance positions, optionally perturbed by the
    corruption knob's drift.  The realized positions are written to a sidecar
    tensor (``realized_2d.pseq``) next to the frames.
    """

    def __init__(self, knob: CorruptionKnob = CorruptionKnob(),
                 guidance_schema_name: str | None = None,
                 fallback_size: tuple[int, int] = (640, 480),
                 background_gray: int = 96):
        self.knob = knob
        self.guidance_schema_name = guidance_schema_name
        self.fallback_size = fallback_size
        self.background_gray = background_gray

    def _background(self, req: GeneratorRequest) -> np.ndarray:
        if req.reference_frame_paths:
            img = cv2.imread(str(req.reference_frame_paths[0]), cv2.IMREAD_COLOR)
            if img is not None:
                return img
        w, h = self.fallback_size
        return np.full((h, w, 3), self.background_gray, np.uint8)

    def generate(self, req: GeneratorRequest) -> Path:
        background = self._background(req)
        width = background.shape[1]
        kps = req.guidance
        t, j = kps.data.shape[:2]

        rng = np.random.default_rng(req.seed)
        failed = rng.random() < self.knob.failure_prob
        if failed and self.knob.pose_drift_sigma > 0:
            sigma_px = self.knob.pose_drift_sigma * width / NORMALIZED_WIDTH
            drift = _ar1_drift(rng, t, j, sigma_px, self.knob.drift_correlation)
        else:
            drift = np.zeros((t, j, 2))
        realized = kps.data + drift

        req.output_dir.mkdir(parents=True, exist_ok=True)
        colors = joint_colors(kps.schema)
        shift = 4
        scale = 1 << shift
        for ti in range(t):
            frame = background.copy()
            pts = realized[ti]
            visible = kps.confidence[ti] > 0
            for parent, child in kps.schema.bones:
                if visible[parent] and visible[child]:
                    p0 = tuple(np.round(pts[parent] * scale).astype(int))
                    p1 = tuple(np.round(pts[child] * scale).astype(int))
                    cv2.line(frame, p0, p1, (230, 230, 230), 2, cv2.LINE_AA, shift)
            for ji in range(j):
                if visible[ji]:
                    center = tuple(np.round(pts[ji] * scale).astype(int))
                    color = tuple(int(c) for c in colors[ji])
                    cv2.circle(frame, center, 5 * scale, color, -1, cv2.LINE_AA, shift)
            cv2.imwrite(str(req.output_dir / FRAME_PATTERN.format(ti)), frame)

        sidecar = Pose2DSequence(realized, kps.schema, kps.confidence.copy())
        poseio.write_pose(req.output_dir / SIDECAR_NAME, sidecar)
        return req.output_dir


def mock_generate(req: GeneratorRequest, knob: CorruptionKnob = CorruptionKnob()) -> Path:
    """Render a mock frame sequence; see ``MockGeneratorAdapter``."""
    return MockGeneratorAdapter(knob).generate(req)


class ExternalGeneratorAdapter:
    """Run a generator command out of process.

    The command is invoked with a single argument, the path of a request JSON
    ``{reference_frames, guidance_file, output_dir, seed}``; the guidance is
    materialized as a pose-tensor file next to it.  The command must write
    ``frame_%06d.png`` files into the output directory and exit 0.
    """

    def __init__(self, command: list[str], guidance_schema_name: str | None = None):
        self.command = list(command)
        self.guidance_schema_name = guidance_schema_name

    def generate(self, req: GeneratorRequest) -> Path:
        req.output_dir.mkdir(parents=True, exist_ok=True)
        guidance_file = req.output_dir / "guidance_2d.pseq"
        poseio.write_pose(guidance_file, req.guidance)
        request_file = req.output_dir / "request.json"
        request_file.write_text(json.dumps({
            "reference_frames": list(req.reference_frame_paths),
            "guidance_file": str(guidance_file),
            "output_dir": str(req.output_dir),
            "seed": req.seed,
        }, indent=2))
        proc = subprocess.run(
            self.command + [str(request_file)],
            capture_output=True, text=True,
        )
        if proc.returncode != 0:
            raise AdapterFailedError(
                f"generator command exited {proc.returncode}: {proc.stderr.strip()[-500:]}"
            )
        return req.output_dir


def list_frames(frames_dir: str | Path) -> list[Path]:
    return sorted(Path(frames_dir).glob(FRAME_GLOB))


def generate(req: GeneratorRequest, adapter) -> Path:
    """Invoke a generator adapter and validate its outputs.

    Distinct failures: adapter error, frame-count mismatch with the guidance
    length, and unreadable frame files.
    """
    declared = getattr(adapter, "guidance_schema_name", None)
    if declared is not None and req.guidance.schema.name != declared:
        raise SchemaMismatchError(
            f"guidance uses schema {req.guidance.schema.name!r} but the generator "
            f"declares {declared!r}"
        )
    for p in req.reference_frame_paths:
        if not Path(p).is_file():
            raise InvalidInputError(f"reference frame not readable: {p}")
    out_dir = adapter.generate(req)
    frames = list_frames(out_dir)
    expected = req.guidance.num_frames
    if len(frames) != expected:
        raise FrameCountError(
            f"generator produced {len(frames)} frames, guidance has {expected}"
        )
    for p in frames:
        if p.stat().st_size == 0:
            raise UnreadableOutputError(f"generated frame is empty: {p}")
    if cv2.imread(str(frames[0])) is None:
        raise UnreadableOutputError(f"generated frame is not a decodable image: {frames[0]}")
    return Path(out_dir)


def synth_detect(truth_2d: Pose2DSequence, cfg: DetectorNoiseConfig,
                 image_width: float, seed: int | None = None) -> Pose2DSequence:
    """Simulated 2D detector: truth plus calibrated heavy-tailed noise.

    Gaussian jitter on every joint, a uniform-direction offset of radius
    ``outlier_radius`` with probability ``outlier_prob``, and occasional
    misses that freeze the previous frame's position at low confidence.
    Deterministic for a given seed; magnitudes scale with ``image_width`` so
    the configured values hold in the normalized plane.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    t, j = truth_2d.data.shape[:2]
    scale = image_width / NORMALIZED_WIDTH

    gauss = rng.normal(0.0, 1.0, size=(t, j, 2))
    outlier_mask = rng.random(size=(t, j)) < cfg.outlier_prob
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(t, j))
    radius = rng.uniform(cfg.outlier_radius[0], cfg.outlier_radius[1], size=(t, j))
    miss_mask = rng.random(size=(t, j)) < cfg.miss_prob

    out = truth_2d.data + cfg.gaussian_sigma * scale * gauss
    offset = (radius * scale)[..., None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    out = out + outlier_mask[..., None] * offset

    conf = truth_2d.confidence.copy()
    miss_mask &= truth_2d.confidence > 0
    for ti in range(1, t):
        frozen = miss_mask[ti]
        out[ti][frozen] = out[ti - 1][frozen]
    conf[miss_mask] = cfg.miss_confidence
    return Pose2DSequence(out, truth_2d.schema, conf)


class PixelDetectorAdapter:
    """Reads mock frames back by locating each joint's color-coded disc."""

    def __init__(self, schema: JointSchema, color_tolerance: int = 10):
        self.schema = schema
        self.color_tolerance = color_tolerance

    def detect(self, frames_dir: str | Path) -> Pose2DSequence:
        frames = list_frames(frames_dir)
        colors = joint_colors(self.schema)
        j = len(self.schema)
        data = np.zeros((len(frames), j, 2))
        conf = np.zeros((len(frames), j))
        for ti, path in enumerate(frames):
            img = cv2.imread(str(path), cv2.IMREAD_COLOR)
            if img is None:
                raise UnreadableOutputError(f"frame is not a decodable image: {path}")
            pixels = img.astype(np.int32)
            for ji in range(j):
                mask = (np.abs(pixels - colors[ji]) <= self.color_tolerance).all(axis=-1)
                ys, xs = np.nonzero(mask)
                if len(xs) > 0:
                    data[ti, ji] = (xs.mean(), ys.mean())
                    conf[ti, ji] = 1.0
        return Pose2DSequence(data, self.schema, conf)


class SyntheticDetectorAdapter:
    """Applies the synthetic noise model to the mock generator's sidecar truth."""

    def __init__(self, noise: DetectorNoiseConfig = DetectorNoiseConfig(),
                 image_width: float | None = None, seed: int | None = None,
                 schemas: dict[str, JointSchema] | None = None):
        self.noise = noise
        self.image_width = image_width
        self.seed = seed
        self.schemas = schemas

    def detect(self, frames_dir: str | Path) -> Pose2DSequence:
        sidecar = Path(frames_dir) / SIDECAR_NAME
        if not sidecar.is_file():
            raise InvalidInputError(
                f"no sidecar truth at {sidecar}; the synthetic detector only "
                f"reads mock-generated sequences"
            )
        truth = poseio.read_pose(sidecar, self.schemas)
        width = self.image_width
        if width is None:
            frames = list_frames(frames_dir)
            if not frames:
                raise InvalidInputError(
                    f"cannot infer image width: no frames in {frames_dir}"
                )
            img = cv2.imread(str(frames[0]))
            if img is None:
                raise UnreadableOutputError(f"frame is not a decodable image: {frames[0]}")
            width = img.shape[1]
        return synth_detect(truth, self.noise, width, seed=self.seed)


class ExternalDetectorAdapter:
    """Run a detector command out of process.

    The command receives a request JSON ``{frames_dir, output_file, seed}``
    and must write the detections as a pose-tensor file to ``output_file``.
    """

    def __init__(self, command: list[str], schemas: dict[str, JointSchema] | None = None,
                 seed: int = 0):
        self.command = list(command)
        self.schemas = schemas
        self.seed = seed

    def detect(self, frames_dir: str | Path) -> Pose2DSequence:
        frames_dir = Path(frames_dir)
        output_file = frames_dir / "detected_2d.pseq"
        request_file = frames_dir / "detect_request.json"
        request_file.write_text(json.dumps({
            "frames_dir": str(frames_dir),
            "output_file": str(output_file),
            "seed": self.seed,
        }, indent=2))
        proc = subprocess.run(
            self.command + [str(request_file)],
            capture_output=True, text=True,
        )
        if proc.returncode != 0:
            raise AdapterFailedError(
                f"detector command exited {proc.returncode}: {proc.stderr.strip()[-500:]}"
            )
        if not output_file.is_file():
            raise AdapterFailedError(f"detector wrote no output file at {output_file}")
        return poseio.read_pose(output_file, self.schemas)


def detect(frames_path: str | Path, adapter) -> Pose2DSequence:
    """Run a detector adapter over a frame directory."""
    frames_path = Path(frames_path)
    if not frames_path.is_dir() or not list_frames(frames_path):
        raise InvalidInputError(f"no frames to detect in {frames_path}")
    kps = adapter.detect(frames_path)
    if kps.confidence.min() < 0.0 or kps.confidence.max() > 1.0:
        raise InvalidInputError("detector returned confidences outside [0, 1]")
    return kps
