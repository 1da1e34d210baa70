"""Closed-form 2D-to-3D lifting baseline and the train/test regime harness.

The lifter is ridge regression from normalized 2D keypoints to root-relative
camera-frame 3D.  Input features are root-centered 2D joints divided by the
per-frame 2D torso scale (root-to-neck distance) plus a constant bias, which
removes trivial translation and scale variation; targets are root-centered.
The solve is a direct factorization of the (2J+1)-square normal matrix.

The regime harness fits the lifter with either projected ground-truth 2D or
simulated detector 2D as training input, evaluates against both input kinds,
and reports MPJPE for the four train/test combinations.  Training the lifter
on detector-like inputs attenuates its weights toward the noise level, which
costs a little on clean test inputs but avoids the large error amplification
a clean-trained model suffers on noisy test inputs; that mechanism is what
produces the characteristic regime ordering.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    InvalidInputError,
    MissingChannelError,
    RankDeficiencyError,
    SchemaMismatchError,
)
from .geometry import load_camera
from .metrics import mpjpe, per_sequence_average
from .poseio import Manifest, load_manifest, read_pose
from .skeleton import CAMERA, JointSchema, Pose2DSequence, Pose3DSequence
from .synth import DetectorNoiseConfig, stable_seed, synth_detect


class DegenerateScaleWarning(UserWarning):
    """A frame's 2D torso scale was too small to normalize reliably."""


@dataclass(frozen=True)
class InputNormalization:
    """Per-frame feature normalization: center on root, divide by torso scale."""

    root_index: int
    scale_index: int
    min_scale: float = 1e-6


@dataclass
class LifterModel:
    """Affine map from normalized 2D features (2J+1) to root-relative 3D (3J)."""

    weights: np.ndarray
    lam: float
    schema: JointSchema
    input_norm: InputNormalization

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        j = len(self.schema)
        if self.weights.shape != (2 * j + 1, 3 * j):
            raise InvalidInputError(
                f"weights must be ({2 * j + 1}, {3 * j}) for schema "
                f"{self.schema.name!r}, got {self.weights.shape}"
            )
        if self.lam < 0 or not np.isfinite(self.lam):
            raise InvalidInputError(f"lambda must be finite and >= 0, got {self.lam}")
        if not np.isfinite(self.weights).all():
            raise InvalidInputError("weights contain non-finite values")


def feature_rows(kps: Pose2DSequence, norm: InputNormalization,
                 drop_degenerate: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Build the (T, 2J+1) feature matrix and a per-frame validity mask.

    With ``drop_degenerate`` the returned matrix keeps only valid frames
    (fit-time behavior); otherwise degenerate frames are normalized with the
    scale clamped to ``min_scale`` so the row count is preserved
    (predict-time behavior).
    """
    t = kps.num_frames
    root = kps.data[:, norm.root_index]
    scale = np.linalg.norm(kps.data[:, norm.scale_index] - root, axis=-1)
    valid = scale >= norm.min_scale
    if not valid.all():
        warnings.warn(
            f"{int((~valid).sum())} frame(s) have degenerate 2D torso scale",
            DegenerateScaleWarning, stacklevel=2,
        )
    safe = np.maximum(scale, norm.min_scale)
    centered = (kps.data - root[:, None, :]) / safe[:, None, None]
    rows = np.concatenate([centered.reshape(t, -1), np.ones((t, 1))], axis=1)
    if drop_degenerate:
        return rows[valid], valid
    return rows, valid


def _root_feature_columns(norm: InputNormalization) -> np.ndarray:
    return np.array([2 * norm.root_index, 2 * norm.root_index + 1])


def fit(inputs: list[Pose2DSequence], targets: list[Pose3DSequence],
        lam: float = 0.0, scale_joint: str = "neck") -> LifterModel:
    """Solve the ridge problem (AtA + lambda I) W = AtB over all frames.

    The root's two feature columns are structurally zero after centering, so
    the solve runs on the remaining columns and the returned weight matrix
    carries zero rows there; this keeps lambda = 0 well posed on
    well-conditioned data.  A genuinely singular unregularized system raises
    with a suggestion to use lambda > 0.
    """
    if len(inputs) != len(targets) or not inputs:
        raise InvalidInputError(
            f"need matching non-empty input/target lists, got {len(inputs)}/{len(targets)}"
        )
    schema = inputs[0].schema
    norm = InputNormalization(schema.root_index, schema.index(scale_joint))
    a_blocks, b_blocks = [], []
    for kps, pose in zip(inputs, targets):
        if kps.schema != schema or pose.schema != schema:
            raise SchemaMismatchError(
                f"all sequences must share schema {schema.name!r}; got "
                f"{kps.schema.name!r}/{pose.schema.name!r}"
            )
        if kps.num_frames != pose.num_frames:
            raise InvalidInputError(
                f"input has {kps.num_frames} frames but target has {pose.num_frames}"
            )
        rows, valid = feature_rows(kps, norm)
        root = pose.data[:, schema.root_index:schema.root_index + 1]
        centered = (pose.data - root).reshape(pose.num_frames, -1)
        a_blocks.append(rows)
        b_blocks.append(centered[valid])
    a = np.concatenate(a_blocks)
    b = np.concatenate(b_blocks)
    if a.shape[0] == 0:
        raise InvalidInputError("no usable frames after dropping degenerate scales")

    j = len(schema)
    keep = np.setdiff1d(np.arange(2 * j + 1), _root_feature_columns(norm))
    a_red = a[:, keep]
    m = a_red.T @ a_red + lam * np.eye(len(keep))
    if lam == 0.0 and np.linalg.matrix_rank(m) < len(keep):
        raise RankDeficiencyError(
            "normal matrix is rank deficient with lambda = 0; supply lambda > 0"
        )
    try:
        w_red = np.linalg.solve(m, a_red.T @ b)
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            f"normal equations are singular ({exc}); supply lambda > 0"
        ) from exc
    weights = np.zeros((2 * j + 1, 3 * j))
    weights[keep] = w_red
    return LifterModel(weights, lam, schema, norm)


def predict(model: LifterModel, kps: Pose2DSequence) -> Pose3DSequence:
    """Lift 2D keypoints to root-relative camera-frame 3D."""
    if kps.schema != model.schema:
        raise SchemaMismatchError(
            f"keypoints use schema {kps.schema.name!r} but the model expects "
            f"{model.schema.name!r}"
        )
    rows, _ = feature_rows(kps, model.input_norm, drop_degenerate=False)
    out = (rows @ model.weights).reshape(kps.num_frames, len(model.schema), 3)
    return Pose3DSequence(out, model.schema, CAMERA)


def ridge_objective(model: LifterModel, inputs: list[Pose2DSequence],
                    targets: list[Pose3DSequence]) -> float:
    """Training objective value: sum of squared residuals + lambda ||W||^2."""
    total = 0.0
    for kps, pose in zip(inputs, targets):
        rows, valid = feature_rows(kps, model.input_norm)
        root = pose.data[:, model.schema.root_index:model.schema.root_index + 1]
        b = (pose.data - root).reshape(pose.num_frames, -1)[valid]
        resid = rows @ model.weights - b
        total += float((resid * resid).sum())
    return total + model.lam * float((model.weights * model.weights).sum())


# --- train/test regime harness ------------------------------------------------

GT = "GT"
HPE = "HPE"


@dataclass(frozen=True)
class Regime:
    """One train/test combination of 2D input kinds."""

    train_input: str
    test_input: str

    def __post_init__(self):
        for v in (self.train_input, self.test_input):
            if v not in (GT, HPE):
                raise InvalidInputError(f"regime inputs must be GT or HPE, got {v!r}")

    @property
    def label(self) -> str:
        return f"{self.train_input}-{self.test_input}"


REGIMES = (Regime(GT, GT), Regime(HPE, GT), Regime(HPE, HPE), Regime(GT, HPE))


@dataclass
class _CorpusChannels:
    """In-memory view of a corpus: clean 2D, optional stored detections, 3D GT."""

    ids: list
    guidance: list
    detected: list          # entries may be None
    gt_camera: list
    image_widths: list


def _load_channels(corpus: Manifest | str | Path,
                   schemas: dict[str, JointSchema] | None) -> _CorpusChannels:
    manifest = corpus if isinstance(corpus, Manifest) else load_manifest(corpus)
    if manifest.root_dir is None:
        raise InvalidInputError("corpus manifest must be loaded from disk")
    root = manifest.root_dir
    ch = _CorpusChannels([], [], [], [], [])
    for sample in manifest.kept_samples():
        files = sample.files
        if "guidance_2d" not in files or "gt_3d_camera" not in files:
            raise MissingChannelError(
                f"sample {sample.id!r} lacks the projected-2D or 3D ground-truth channel"
            )
        if "camera" not in files:
            raise MissingChannelError(f"sample {sample.id!r} has no camera file")
        cam = load_camera(root / files["camera"])
        ch.ids.append(sample.id)
        ch.guidance.append(read_pose(root / files["guidance_2d"], schemas))
        ch.gt_camera.append(read_pose(root / files["gt_3d_camera"], schemas, frame_tag=CAMERA))
        det = None
        if "detected_2d" in files:
            det = read_pose(root / files["detected_2d"], schemas)
        ch.detected.append(det)
        ch.image_widths.append(cam.image_width)
    if not ch.ids:
        raise MissingChannelError("corpus has no kept samples")
    return ch


def _hpe_inputs(ch: _CorpusChannels, noise: DetectorNoiseConfig | None,
                seed: int, split: str) -> list[Pose2DSequence]:
    if noise is None:
        missing = [i for i, d in zip(ch.ids, ch.detected) if d is None]
        if missing:
            raise MissingChannelError(
                f"no stored detections for {missing[:3]}...; either store a "
                f"detected channel or pass a detector noise config"
            )
        return list(ch.detected)
    return [
        synth_detect(x, noise, w, seed=stable_seed(seed, split, sid))
        for sid, x, w in zip(ch.ids, ch.guidance, ch.image_widths)
    ]


@dataclass
class RegimeResult:
    """Per-regime MPJPE across seeds plus the induced ordering."""

    lam: float
    seeds: tuple
    per_regime: dict            # label -> {"per_seed": [...], "mean": float}
    ordering: tuple             # labels sorted by mean, best first

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "seeds": list(self.seeds),
            "per_regime": {k: {"per_seed": list(v["per_seed"]), "mean": v["mean"]}
                           for k, v in self.per_regime.items()},
            "ordering": list(self.ordering),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def format_table(self) -> str:
        lines = [f"{'regime':<10} {'mean MPJPE':>12}  per-seed (mm)"]
        for regime in REGIMES:
            row = self.per_regime[regime.label]
            seeds = ", ".join(f"{v:.2f}" for v in row["per_seed"])
            lines.append(f"{regime.label:<10} {row['mean']:>12.2f}  {seeds}")
        lines.append("ordering: " + " < ".join(self.ordering))
        return "\n".join(lines)


def run_regimes(train_corpus: Manifest | str | Path,
                test_corpus: Manifest | str | Path,
                lam: float = 1e-4,
                seeds: tuple = (0, 1, 2, 3, 4),
                noise: DetectorNoiseConfig | None = None,
                scale_joint: str = "neck",
                schemas: dict[str, JointSchema] | None = None) -> RegimeResult:
    """Fit and evaluate the baseline lifter under all four input regimes.

    For each seed the detector channel is re-simulated from the clean
    projected 2D with the given noise config (seeded per sample, so results
    are a deterministic function of corpora, lambda, and seeds).  Without a
    noise config the corpus' stored detections are used and seeds only
    replicate the evaluation.  Reported values are per-sequence averaged
    root-relative MPJPE in mm against the 3D ground truth.
    """
    if not seeds:
        raise InvalidInputError("need at least one seed")
    train = _load_channels(train_corpus, schemas)
    test = _load_channels(test_corpus, schemas)

    model_gt = fit(train.guidance, train.gt_camera, lam, scale_joint)
    test_gt_err_cache: dict[str, float] | None = None

    per_regime = {r.label: {"per_seed": [], "mean": 0.0} for r in REGIMES}
    for seed in seeds:
        train_hpe = _hpe_inputs(train, noise, seed, "train")
        test_hpe = _hpe_inputs(test, noise, seed, "test")
        model_hpe = fit(train_hpe, train.gt_camera, lam, scale_joint)
        models = {GT: model_gt, HPE: model_hpe}
        test_inputs = {GT: test.guidance, HPE: test_hpe}
        for regime in REGIMES:
            preds = [predict(models[regime.train_input], x)
                     for x in test_inputs[regime.test_input]]
            errs = [mpjpe(gt, pred) for gt, pred in zip(test.gt_camera, preds)]
            per_regime[regime.label]["per_seed"].append(per_sequence_average(errs))

    for row in per_regime.values():
        row["mean"] = float(np.mean(row["per_seed"]))
    ordering = tuple(sorted(per_regime, key=lambda k: per_regime[k]["mean"]))
    return RegimeResult(lam, tuple(seeds), per_regime, ordering)
