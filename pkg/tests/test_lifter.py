"""Ridge lifter: planted-map recovery, optimality spot checks, regimes."""

import numpy as np
import pytest

from posefuse.errors import (
    InvalidInputError,
    MissingChannelError,
    RankDeficiencyError,
    SchemaMismatchError,
)
from posefuse.lifter import (
    REGIMES,
    DegenerateScaleWarning,
    InputNormalization,
    LifterModel,
    Regime,
    feature_rows,
    fit,
    predict,
    ridge_objective,
    run_regimes,
)
from posefuse.skeleton import COCO_BODY_17, H36M_17, Pose2DSequence, Pose3DSequence
from posefuse.synth import NO_NOISE, DetectorNoiseConfig
from posefuse.toydata import default_camera, make_synthetic_corpus

J = len(H36M_17)
NORM = InputNormalization(H36M_17.root_index, H36M_17.index("neck"))


def spread_pose2d(rng, frames=40) -> Pose2DSequence:
    """2D sequences with healthy torso scales (non-degenerate features)."""
    root = rng.uniform(300, 700, size=(frames, 1, 2))
    offsets = rng.uniform(-200, 200, size=(frames, J, 2))
    offsets[:, H36M_17.root_index] = 0
    offsets[:, H36M_17.index("neck")] = rng.uniform(120, 260, (frames, 2))
    return Pose2DSequence(root + offsets, H36M_17)


def planted_targets(inputs, weights) -> list:
    """3D targets generated by a known affine map of the features."""
    targets = []
    for kps in inputs:
        rows, _ = feature_rows(kps, NORM, drop_degenerate=False)
        targets.append(Pose3DSequence((rows @ weights).reshape(-1, J, 3),
                                      H36M_17, "camera"))
    return targets


def random_planted_weights(rng) -> np.ndarray:
    w = rng.normal(0, 50, size=(2 * J + 1, 3 * J))
    w[2 * H36M_17.root_index:2 * H36M_17.root_index + 2] = 0.0  # root features are zero
    w[:, 3 * H36M_17.root_index:3 * H36M_17.root_index + 3] = 0.0  # root target is zero
    return w


class TestFit:
    def test_recovers_planted_affine_map(self, rng):
        w_true = random_planted_weights(rng)
        inputs = [spread_pose2d(rng) for _ in range(4)]
        model = fit(inputs, planted_targets(inputs, w_true), lam=0.0)
        rel = np.abs(model.weights - w_true).max() / np.abs(w_true).max()
        assert rel < 1e-6

    def test_huge_lambda_shrinks_to_zero(self, rng):
        inputs = [spread_pose2d(rng) for _ in range(2)]
        targets = planted_targets(inputs, random_planted_weights(rng))
        model = fit(inputs, targets, lam=1e9)
        assert np.abs(model.weights).max() < 1e-3
        out = predict(model, inputs[0])
        assert np.abs(out.data).max() < 1.0  # collapses to the zero pose

    def test_fitted_weights_beat_100_perturbations(self, rng):
        inputs = [spread_pose2d(rng) for _ in range(3)]
        w_true = random_planted_weights(rng)
        targets = []
        for kps in inputs:
            rows, _ = feature_rows(kps, NORM, drop_degenerate=False)
            noisy = rows @ w_true + rng.normal(0, 20, (kps.num_frames, 3 * J))
            noisy[:, 3 * H36M_17.root_index:3 * H36M_17.root_index + 3] = 0.0
            targets.append(Pose3DSequence(noisy.reshape(-1, J, 3), H36M_17, "camera"))
        lam = 1e-3
        model = fit(inputs, targets, lam=lam)
        base = ridge_objective(model, inputs, targets)
        for _ in range(100):
            perturbed = LifterModel(
                model.weights + rng.normal(0, 1e-3, model.weights.shape),
                lam, H36M_17, model.input_norm)
            assert ridge_objective(perturbed, inputs, targets) >= base - 1e-9

    def test_rank_deficiency_reported_at_lambda_zero(self, rng):
        kps = spread_pose2d(rng, frames=3)  # far fewer frames than features
        target = Pose3DSequence(np.zeros((3, J, 3)), H36M_17, "camera")
        with pytest.raises(RankDeficiencyError, match="lambda"):
            fit([kps], [target], lam=0.0)

    def test_permutation_invariance(self, rng):
        inputs = [spread_pose2d(rng) for _ in range(3)]
        targets = planted_targets(inputs, random_planted_weights(rng))
        a = fit(inputs, targets, lam=1e-2)
        order = [2, 0, 1]
        b = fit([inputs[i] for i in order], [targets[i] for i in order], lam=1e-2)
        assert np.abs(a.weights - b.weights).max() < 1e-9

    def test_training_mse_monotone_in_lambda(self, rng):
        inputs = [spread_pose2d(rng) for _ in range(3)]
        w = random_planted_weights(rng)
        targets = []
        for kps in inputs:
            rows, _ = feature_rows(kps, NORM, drop_degenerate=False)
            noisy = rows @ w + rng.normal(0, 30, (kps.num_frames, 3 * J))
            targets.append(Pose3DSequence(noisy.reshape(-1, J, 3), H36M_17, "camera"))

        def train_mse(lam):
            model = fit(inputs, targets, lam=lam)
            model_zero_reg = LifterModel(model.weights, 0.0, H36M_17, model.input_norm)
            return ridge_objective(model_zero_reg, inputs, targets)

        lambdas = [0.0, 1e-2, 1.0, 1e2, 1e4]
        mses = [train_mse(l) for l in lambdas]
        for lo, hi in zip(mses, mses[1:]):
            assert hi >= lo - 1e-9

    def test_degenerate_torso_scale_frames_dropped_with_warning(self, rng):
        kps = spread_pose2d(rng, frames=10)
        data = kps.data.copy()
        data[4, H36M_17.index("neck")] = data[4, H36M_17.root_index]  # zero scale
        bad = Pose2DSequence(data, H36M_17)
        with pytest.warns(DegenerateScaleWarning):
            rows, valid = feature_rows(bad, NORM)
        assert rows.shape[0] == 9 and not valid[4]

    def test_mismatched_schema_and_counts(self, rng):
        kps = spread_pose2d(rng, frames=4)
        wrong = Pose3DSequence(np.zeros((4, 17, 3)), COCO_BODY_17, "camera")
        with pytest.raises(SchemaMismatchError):
            fit([kps], [wrong], lam=1.0)
        short = Pose3DSequence(np.zeros((3, J, 3)), H36M_17, "camera")
        with pytest.raises(InvalidInputError):
            fit([kps], [short], lam=1.0)


class TestPredict:
    def test_zero_weights_zero_output(self, rng):
        model = LifterModel(np.zeros((2 * J + 1, 3 * J)), 1.0, H36M_17, NORM)
        out = predict(model, spread_pose2d(rng, frames=5))
        assert out.frame_tag == "camera"
        assert (out.data == 0.0).all()

    def test_exact_on_training_frames_of_planted_fit(self, rng):
        w_true = random_planted_weights(rng)
        inputs = [spread_pose2d(rng) for _ in range(3)]
        targets = planted_targets(inputs, w_true)
        model = fit(inputs, targets, lam=0.0)
        out = predict(model, inputs[0])
        assert np.abs(out.data - targets[0].data).max() < 1e-6

    def test_prediction_is_root_relative(self, rng):
        inputs = [spread_pose2d(rng) for _ in range(2)]
        targets = planted_targets(inputs, random_planted_weights(rng))
        model = fit(inputs, targets, lam=1e-3)
        out = predict(model, inputs[1])
        assert (out.data[:, H36M_17.root_index] == 0.0).all()

    def test_deterministic(self, rng):
        inputs = [spread_pose2d(rng) for _ in range(2)]
        targets = planted_targets(inputs, random_planted_weights(rng))
        a = fit(inputs, targets, lam=1e-2)
        b = fit(inputs, targets, lam=1e-2)
        kps = spread_pose2d(rng, frames=7)
        assert (predict(a, kps).data == predict(b, kps).data).all()


class TestRegimeType:
    def test_four_values_only(self):
        assert len(REGIMES) == 4
        assert {r.label for r in REGIMES} == {"GT-GT", "HPE-GT", "GT-HPE", "HPE-HPE"}
        with pytest.raises(InvalidInputError):
            Regime("GT", "2D")


@pytest.fixture(scope="module")
def small_corpora(tmp_path_factory):
    base = tmp_path_factory.mktemp("corpora")
    camera = default_camera()
    train = make_synthetic_corpus(base / "train", n_sequences=30,
                                  frames_per_sequence=20, seed=1, camera=camera)
    test = make_synthetic_corpus(base / "test", n_sequences=12,
                                 frames_per_sequence=20, seed=2, camera=camera)
    return train, test


class TestRunRegimes:
    def test_zero_noise_collapses_all_regimes(self, small_corpora):
        train, test = small_corpora
        result = run_regimes(train, test, lam=1e-4, seeds=(0, 1), noise=NO_NOISE)
        means = [result.per_regime[r.label]["mean"] for r in REGIMES]
        assert max(means) - min(means) < 1e-6

    def test_deterministic_function_of_inputs(self, small_corpora):
        train, test = small_corpora
        noise = DetectorNoiseConfig()
        a = run_regimes(train, test, lam=1e-4, seeds=(3, 4), noise=noise)
        b = run_regimes(train, test, lam=1e-4, seeds=(3, 4), noise=noise)
        assert a.to_dict() == b.to_dict()

    def test_ordering_direction_smoke(self, small_corpora):
        """Desk-scale smoke check; the acceptance suite runs the full size."""
        train, test = small_corpora
        result = run_regimes(train, test, lam=1e-4, seeds=(0, 1, 2),
                             noise=DetectorNoiseConfig())
        means = {r.label: result.per_regime[r.label]["mean"] for r in REGIMES}
        assert result.ordering[0] == "GT-GT"
        assert means["HPE-HPE"] < means["GT-HPE"]

    def test_stored_channel_used_without_noise_config(self, small_corpora):
        train, test = small_corpora
        result = run_regimes(train, test, lam=1e-4, seeds=(0, 1), noise=None)
        per_seed = result.per_regime["HPE-HPE"]["per_seed"]
        assert per_seed[0] == per_seed[1]  # same stored detections every seed

    def test_missing_detected_channel_raises(self, tmp_path):
        corpus = make_synthetic_corpus(tmp_path / "c", n_sequences=3,
                                       frames_per_sequence=8, seed=0, noise=None)
        with pytest.raises(MissingChannelError):
            run_regimes(corpus, corpus, seeds=(0,), noise=None)

    def test_table_lists_all_regimes(self, small_corpora):
        train, test = small_corpora
        result = run_regimes(train, test, lam=1e-4, seeds=(0,),
                             noise=DetectorNoiseConfig())
        table = result.format_table()
        for regime in REGIMES:
            assert regime.label in table
