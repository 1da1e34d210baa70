"""Acceptance suite: one test per release criterion, each printing a pass line.

Run with  pytest tests/test_acceptance.py -v -s  to see the measured values.
Tolerances are fixed here, not calibrated elsewhere.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from posefuse.errors import BadMagicError, NonFinitePayloadError, TruncatedFileError
from posefuse.fusion import (
    AlignmentTransform,
    MotionSample,
    PairingPolicy,
    SceneSample,
    align,
    compute_alignment,
)
from posefuse.geometry import project, world_to_camera
from posefuse.lifter import run_regimes
from posefuse.metrics import mpjpe, n_mpjpe, p_mpjpe, similarity_align, velocity_error
from posefuse.pipeline import PipelineConfig, run_pipeline
from posefuse.poseio import read_pose, write_pose
from posefuse.skeleton import H36M_17, Pose3DSequence, bone_lengths
from posefuse.synth import NO_NOISE, CorruptionKnob, DetectorNoiseConfig, synth_detect
from posefuse.toydata import (
    default_camera,
    make_synthetic_corpus,
    make_toy_sources,
    synthetic_motion,
)

from conftest import make_camera, random_pose3d, rodrigues
from test_geometry import oracle_project_point
from test_metrics import apply_similarity, random_similarity, triple_loop_mpjpe
from test_poseio import independent_file


def report(criterion: int, message: str):
    print(f"\nACCEPTANCE {criterion} PASS: {message}")


class TestCriterion1Geometry:
    def test_projection_chain_oracle_equivalence(self, rng):
        from posefuse.skeleton import JointSchema
        points_per_camera = 50
        cloud = JointSchema("cloud", tuple(f"p{i}" for i in range(points_per_camera)),
                            0, tuple((0, i) for i in range(1, points_per_camera)))
        start = time.monotonic()
        worst = 0.0
        for _ in range(1000 // points_per_camera):
            cam = make_camera(rng)
            cam_pts = rng.uniform(-1500.0, 1500.0, size=(points_per_camera, 3))
            cam_pts[:, 2] = rng.uniform(500.0, 6000.0, size=points_per_camera)
            world = (cam_pts - cam.translation) @ cam.rotation
            kps = project(world_to_camera(Pose3DSequence(world[None], cloud, "world"),
                                          cam), cam)
            for j in range(points_per_camera):
                u, v, _ = oracle_project_point(world[j], cam)
                worst = max(worst, abs(kps.data[0, j, 0] - u),
                            abs(kps.data[0, j, 1] - v))
        elapsed = time.monotonic() - start
        assert worst < 1e-9
        assert elapsed < 1.0
        report(1, f"1000 camera/point pairs, max |chain - oracle| = "
                  f"{worst:.2e} px in {elapsed:.2f}s")


def _random_scene(rng, camera) -> SceneSample:
    angle = rng.uniform(-np.pi, np.pi)
    return SceneSample(
        dataset_id="scenes", sample_id="s",
        reference_frame_paths=("unused.png",), camera=camera,
        root_pose=np.array([rng.uniform(-500, 500), rng.uniform(3500, 6000),
                            rng.uniform(800, 1200)]),
        facing=np.array([np.cos(angle), np.sin(angle), 0.0]),
        ground_height=rng.uniform(-100.0, 100.0),
    )


class TestCriterion2Alignment:
    def test_rigidity_identity_and_ground_contact(self, rng):
        camera = default_camera()
        worst_bone = 0.0
        worst_ground = 0.0
        for _ in range(200):
            motion = MotionSample.from_motion(
                "mocap", "m", synthetic_motion(rng, frames=4))
            scene = _random_scene(rng, camera)
            xf = compute_alignment(motion, scene)
            out = align(motion, scene, xf)
            for f in range(out.num_frames):
                gap = np.abs(bone_lengths(out, f) - bone_lengths(motion.motion, f)).max()
                worst_bone = max(worst_bone, gap)
            feet = out.data[:, list(H36M_17.foot_indices), 2]
            worst_ground = max(worst_ground, abs(feet.min() - scene.ground_height))
        assert worst_bone < 1e-9
        assert worst_ground < 1e-6

        # identity collapse: same roots, identity transform, zero residual
        motion = MotionSample.from_motion(
            "mocap", "m", synthetic_motion(rng, 4, start=np.array([0.0, 4500.0, 0.0])))
        scene = SceneSample(
            "scenes", "s", ("unused.png",), camera,
            root_pose=motion.motion.data[0, H36M_17.root_index].copy(),
            facing=np.array([1.0, 0.0, 0.0]))
        out = align(motion, scene, AlignmentTransform(np.eye(3), np.zeros(3)))
        assert (out.data == motion.motion.data).all()
        report(2, f"200 pairs: max bone-length drift {worst_bone:.2e} mm, "
                  f"max ground gap {worst_ground:.2e} mm, identity collapse exact")


class TestCriterion3Metrics:
    def test_metric_suite_oracles(self, rng):
        # MPJPE vs triple loop
        worst = 0.0
        for _ in range(5):
            gt = random_pose3d(rng, frame_tag="camera")
            pred = random_pose3d(rng, frame_tag="camera")
            worst = max(worst, abs(mpjpe(gt, pred, root_relative=False)
                                   - triple_loop_mpjpe(gt.data, pred.data)))
        assert worst < 1e-9

        # P-MPJPE: planted similarity removed
        worst_planted = 0.0
        for _ in range(10):
            gt = random_pose3d(rng, frame_tag="camera")
            s, r, t = random_similarity(rng)
            pred = Pose3DSequence(apply_similarity(gt.data, s, r, t), H36M_17, "camera")
            worst_planted = max(worst_planted, p_mpjpe(gt, pred))
        assert worst_planted < 1e-6

        # P-MPJPE: 10k-sample randomized search cannot beat the closed form
        # (evaluated under the least-squares objective the solver optimizes)
        gt = random_pose3d(rng, frames=1, frame_tag="camera")
        pred = Pose3DSequence(gt.data + rng.normal(0, 50, gt.data.shape),
                              H36M_17, "camera")
        aligned, info = similarity_align(gt.data[0], pred.data[0])
        closed = float(np.sqrt(((aligned - gt.data[0]) ** 2).sum(axis=-1).mean()))
        best = np.inf
        for _ in range(10_000):
            if rng.random() < 0.5:
                s, r, t = random_similarity(rng)
            else:
                s = info["scale"] * (1.0 + rng.normal(0, 1e-3))
                r = info["rotation"] @ rodrigues(rng.normal(size=3), rng.normal(0, 1e-3))
                t = info["translation"] + rng.normal(0, 1e-2, 3)
            cand = apply_similarity(pred.data[0], s, r, t)
            best = min(best, float(np.sqrt(((cand - gt.data[0]) ** 2)
                                           .sum(axis=-1).mean())))
        assert best >= closed - 1e-6

        # N-MPJPE scale invariance
        gt = random_pose3d(rng, frame_tag="camera")
        noisy = Pose3DSequence(gt.data + rng.normal(0, 30, gt.data.shape),
                               H36M_17, "camera")
        base = n_mpjpe(gt, noisy)
        worst_scale = max(abs(n_mpjpe(gt, Pose3DSequence(c * noisy.data, H36M_17,
                                                         "camera")) - base)
                          for c in (0.2, 5.0, 77.0))
        assert worst_scale < 1e-9

        # velocity error: constant offset cancels exactly
        shifted = Pose3DSequence(gt.data + np.array([55.0, -21.0, 8.0]),
                                 H36M_17, "camera")
        assert velocity_error(gt, shifted) == 0.0
        report(3, f"MPJPE oracle gap {worst:.1e}; planted-similarity P-MPJPE "
                  f"{worst_planted:.1e}; search-closed = {best - closed:+.1e}; "
                  f"N-MPJPE scale gap {worst_scale:.1e}; velocity offset exact")


class TestCriterion4Filtering:
    def test_corrupted_corpus_filtering_direction(self, tmp_path):
        start = time.monotonic()
        camera = default_camera(image_width=512, image_height=384)
        scenes, motions = make_toy_sources(tmp_path / "src", 10, 10, seed=4,
                                           frames=4, camera=camera)
        cfg = PipelineConfig(
            out_dir=tmp_path / "out",
            scenes=scenes, motions=motions,
            policy=PairingPolicy("cross-only"),
            generator="mock",
            corruption=CorruptionKnob(pose_drift_sigma=100.0, failure_prob=0.5),
            detector="synthetic",
            noise=DetectorNoiseConfig(),
            filter_fraction=0.10,
            seed=99,
        )
        manifest, n_failed = run_pipeline(cfg)
        assert len(manifest.samples) == 100 and n_failed == 0
        scores = {s.id: s.quality_score for s in manifest.ok_samples()}
        kept = [scores[s.id] for s in manifest.kept_samples()]
        unfiltered_mean = float(np.mean(list(scores.values())))
        kept_mean = float(np.mean(kept))
        elapsed = time.monotonic() - start
        assert len(kept) == 10  # ceil(0.1 * 100)
        assert kept_mean < 0.5 * unfiltered_mean
        assert elapsed < 120.0
        report(4, f"100-sample corpus: mean {unfiltered_mean:.1f} -> "
                  f"{kept_mean:.1f} normalized px after top-10% filter "
                  f"({elapsed:.0f}s)")


class TestCriterion5DetectorCalibration:
    def test_default_noise_in_real_data_band(self, rng):
        truth_data = rng.uniform(200, 1800, size=(100, 17, 2))
        from posefuse.skeleton import Pose2DSequence
        truth = Pose2DSequence(truth_data, H36M_17)
        out = synth_detect(truth, DetectorNoiseConfig(), image_width=2000.0, seed=12)
        err = np.linalg.norm(out.data - truth.data, axis=-1)
        mean = float(err.mean())
        assert err.size >= 1000
        assert 15.0 <= mean <= 35.0
        report(5, f"default synthetic detector: mean normalized error "
                  f"{mean:.2f} px over {err.size} joint-frames (band [15, 35])")


class TestCriterion6Regimes:
    def test_ordering_direction_and_zero_noise_collapse(self, tmp_path):
        start = time.monotonic()
        camera = default_camera()
        train = make_synthetic_corpus(tmp_path / "train", n_sequences=200,
                                      frames_per_sequence=24, seed=31, camera=camera)
        test = make_synthetic_corpus(tmp_path / "test", n_sequences=80,
                                     frames_per_sequence=24, seed=32, camera=camera)

        result = run_regimes(train, test, lam=1e-4, seeds=(0, 1, 2, 3, 4),
                             noise=DetectorNoiseConfig())
        means = {label: row["mean"] for label, row in result.per_regime.items()}
        assert result.ordering[0] == "GT-GT"
        assert means["HPE-HPE"] < means["GT-HPE"]

        collapse = run_regimes(train, test, lam=1e-4, seeds=(0,), noise=NO_NOISE)
        cvals = [row["mean"] for row in collapse.per_regime.values()]
        spread = max(cvals) - min(cvals)
        assert spread < 1e-6

        elapsed = time.monotonic() - start
        assert elapsed < 300.0
        report(6, "mean MPJPE mm: "
                  + ", ".join(f"{k}={v:.1f}" for k, v in means.items())
                  + f"; zero-noise spread {spread:.1e}; {elapsed:.0f}s")


class TestCriterion7FileFormat:
    def test_round_trip_independent_writer_and_errors(self, rng, tmp_path):
        # bit-exact round trip of float32-representable data
        data = rng.uniform(-900, 900, (5, 17, 3)).astype(np.float32).astype(np.float64)
        pose = Pose3DSequence(data, H36M_17, "camera")
        path = tmp_path / "pose.pseq"
        write_pose(path, pose)
        assert (read_pose(path, frame_tag="camera").data == data).all()

        # independently written minimal file reads back identically
        ind_path, payload = independent_file(tmp_path)
        loaded = read_pose(ind_path)
        assert (loaded.data.reshape(-1) == payload.astype(np.float64)).all()

        # corrupted files raise their distinct error types
        blob = path.read_bytes()
        bad_magic = tmp_path / "bad_magic.pseq"
        bad_magic.write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(BadMagicError):
            read_pose(bad_magic)
        truncated = tmp_path / "truncated.pseq"
        truncated.write_bytes(blob[:-7])
        with pytest.raises(TruncatedFileError):
            read_pose(truncated)
        nan_payload = np.full(5 * 17 * 3, np.nan, dtype="<f4")
        nan_path, _ = independent_file(tmp_path, t=5, kind=3, payload=nan_payload,
                                       with_conf=False)
        with pytest.raises(NonFinitePayloadError):
            read_pose(nan_path)
        report(7, "round trip bit-exact; independent writer accepted; "
                  "bad-magic/truncation/NaN raise distinct errors")


class TestCriterion8Determinism:
    def test_pipeline_determinism_and_counts(self, tmp_path):
        camera = default_camera(image_width=512, image_height=384)

        def build(where: Path):
            scenes, motions = make_toy_sources(where / "src", 2, 2, seed=8,
                                               frames=4, camera=camera)
            cfg = PipelineConfig(
                out_dir=where / "out", scenes=scenes, motions=motions,
                policy=PairingPolicy("cross-only"), generator="mock",
                corruption=CorruptionKnob(pose_drift_sigma=80.0, failure_prob=0.5),
                detector="synthetic", noise=DetectorNoiseConfig(),
                filter_fraction=0.10, seed=2024)
            return run_pipeline(cfg), cfg

        (manifest_a, failed_a), cfg_a = build(tmp_path / "a")
        (manifest_b, failed_b), cfg_b = build(tmp_path / "b")
        assert failed_a == failed_b == 0
        assert manifest_a.to_dict() == manifest_b.to_dict()
        bytes_a = (cfg_a.out_dir / "manifest.json").read_bytes()
        bytes_b = (cfg_b.out_dir / "manifest.json").read_bytes()
        assert bytes_a == bytes_b
        assert len(manifest_a.samples) == 4
        assert len(manifest_a.kept_samples()) == 1
        report(8, "2x2 cross-only: 4 attempted, 1 kept; two runs with the "
                  "same seed produced byte-identical manifests")


class TestCriterion9FullScaleAnchors:
    def test_full_scale_gains_documented_not_reproduced(self):
        """Absolute full-scale improvements need neural components and are
        documented as anchors; criteria 4-6 verify the mechanism instead."""
        readme = Path(__file__).resolve().parents[1] / "README.md"
        text = readme.read_text()
        assert "77.07" in text and "144.50" in text
        assert "15-20 mm" in text
        assert "anchors" in text
        report(9, "full-scale anchor values documented in README; "
                  "mechanism verified by criteria 4-6")
