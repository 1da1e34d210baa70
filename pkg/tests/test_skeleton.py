"""Schema container and mapping tests, including the built-in format pair."""

import numpy as np
import pytest

from posefuse.errors import InvalidInputError, SchemaError, SchemaMismatchError
from posefuse.geometry import world_to_camera
from posefuse.skeleton import (
    COCO_BODY_17,
    COCO_BODY_TO_H36M,
    COPY,
    DROP,
    H36M_17,
    H36M_TO_COCO_BODY,
    JointSchema,
    MIDPOINT,
    Pose2DSequence,
    Pose3DSequence,
    SchemaMapping,
    bone_lengths,
    load_mapping,
    load_schema,
    map_schema_2d,
    map_schema_3d,
    save_mapping,
    save_schema,
)

from conftest import make_camera, random_pose2d, random_pose3d


class TestJointSchema:
    def test_builtins_are_valid_trees(self):
        assert len(H36M_17) == 17
        assert len(COCO_BODY_17) == 17
        assert len(H36M_17.bones) == 16

    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError, match="duplicate"):
            JointSchema("bad", ("a", "a"), 0, ((0, 1),))

    def test_out_of_range_index_rejected(self):
        with pytest.raises(SchemaError):
            JointSchema("bad", ("a", "b"), 0, ((0, 2),))

    def test_cycle_rejected(self):
        with pytest.raises(SchemaError):
            JointSchema("bad", ("a", "b", "c"), 0, ((0, 1), (1, 2), (2, 1)))

    def test_disconnected_rejected(self):
        with pytest.raises(SchemaError, match="reachable"):
            JointSchema("bad", ("a", "b", "c", "d"), 0, ((0, 1), (2, 3), (3, 2)))

    def test_unknown_joint_lookup(self):
        with pytest.raises(SchemaError, match="no joint"):
            H36M_17.index("tail")

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "schema.json"
        save_schema(H36M_17, path)
        assert load_schema(path) == H36M_17


class TestPoseContainers:
    def test_3d_shape_validation(self):
        with pytest.raises(InvalidInputError):
            Pose3DSequence(np.zeros((2, 17, 2)), H36M_17)

    def test_joint_count_must_match_schema(self):
        with pytest.raises(SchemaMismatchError):
            Pose3DSequence(np.zeros((2, 16, 3)), H36M_17)

    def test_nonfinite_rejected_with_location(self):
        data = np.zeros((3, 17, 3))
        data[1, 4, 2] = np.inf
        with pytest.raises(InvalidInputError, match="frame 1, joint 4"):
            Pose3DSequence(data, H36M_17)

    def test_confidence_bounds(self):
        data = np.zeros((1, 17, 2))
        with pytest.raises(InvalidInputError, match=r"\[0, 1\]"):
            Pose2DSequence(data, H36M_17, np.full((1, 17), 1.5))

    def test_default_confidence_is_ones(self):
        kps = Pose2DSequence(np.zeros((2, 17, 2)), H36M_17)
        assert (kps.confidence == 1.0).all()


class TestMapSchema2D:
    def test_identity_mapping(self, rng):
        kps = random_pose2d(rng)
        out = map_schema_2d(kps, SchemaMapping.identity(H36M_17))
        np.testing.assert_array_equal(out.data, kps.data)
        np.testing.assert_array_equal(out.confidence, kps.confidence)

    def test_midpoint_of_shoulders(self):
        data = np.zeros((1, 17, 2))
        data[0, COCO_BODY_17.index("left_shoulder")] = [100.0, 200.0]
        data[0, COCO_BODY_17.index("right_shoulder")] = [300.0, 200.0]
        kps = Pose2DSequence(data, COCO_BODY_17)
        out = map_schema_2d(kps, COCO_BODY_TO_H36M)
        np.testing.assert_allclose(out.data[0, H36M_17.index("neck")], [200.0, 200.0])

    def test_dropped_joints_zeroed(self, rng):
        kps = random_pose2d(rng)
        out = map_schema_2d(kps, H36M_TO_COCO_BODY)
        for name in ("left_eye", "right_eye", "left_ear", "right_ear"):
            idx = COCO_BODY_17.index(name)
            assert (out.data[:, idx] == 0.0).all()
            assert (out.confidence[:, idx] == 0.0).all()

    def test_round_trip_recovers_shared_joints(self, rng):
        """Joints named in both schemas and copied both ways survive exactly."""
        shared = []
        for tgt_idx, entry in enumerate(H36M_TO_COCO_BODY.assignments):
            tgt_name = COCO_BODY_17.joints[tgt_idx]
            if entry[0] == COPY and H36M_17.joints[entry[1]] == tgt_name:
                back = COCO_BODY_TO_H36M.assignments[H36M_17.index(tgt_name)]
                if back[0] == COPY and COCO_BODY_17.joints[back[1]] == tgt_name:
                    shared.append(tgt_name)
        assert len(shared) == 12  # shoulders, elbows, wrists, hips, knees, ankles

        kps = random_pose2d(rng)
        back = map_schema_2d(map_schema_2d(kps, H36M_TO_COCO_BODY), COCO_BODY_TO_H36M)
        for name in shared:
            idx = H36M_17.index(name)
            np.testing.assert_array_equal(back.data[:, idx], kps.data[:, idx])

    def test_schema_mismatch_names_both(self, rng):
        kps = random_pose2d(rng)  # h36m-17
        with pytest.raises(SchemaMismatchError, match="h36m-17.*coco-body"):
            map_schema_2d(kps, COCO_BODY_TO_H36M)

    def test_unused_source_joints_never_read(self, rng):
        """Poison every source joint outside the assignment table."""
        used = set()
        for entry in H36M_TO_COCO_BODY.assignments:
            used.update(entry[1:])
        kps = random_pose2d(rng)
        poisoned = kps.data.copy()
        for j in range(len(H36M_17)):
            if j not in used:
                poisoned[:, j] = 7.7e30
        out_clean = map_schema_2d(kps, H36M_TO_COCO_BODY)
        out_poisoned = map_schema_2d(
            Pose2DSequence(poisoned, H36M_17, kps.confidence), H36M_TO_COCO_BODY)
        np.testing.assert_array_equal(out_clean.data, out_poisoned.data)

    def test_pure_permutation_inverts_exactly(self, rng):
        perm = rng.permutation(len(H36M_17))
        names = tuple(H36M_17.joints[i] for i in perm)
        # renamed joints, same tree re-indexed through the permutation
        inv = np.argsort(perm)
        bones = tuple((int(inv[p]), int(inv[c])) for p, c in H36M_17.bones)
        shuffled = JointSchema("shuffled", names, int(inv[H36M_17.root_index]), bones)
        fwd = SchemaMapping(H36M_17, shuffled,
                            tuple((COPY, int(perm[i])) for i in range(17)))
        back = SchemaMapping(shuffled, H36M_17,
                             tuple((COPY, int(inv[i])) for i in range(17)))
        kps = random_pose2d(rng)
        out = map_schema_2d(map_schema_2d(kps, fwd), back)
        np.testing.assert_array_equal(out.data, kps.data)


class TestMapSchema3D:
    def test_identity(self, rng):
        pose = random_pose3d(rng)
        out = map_schema_3d(pose, SchemaMapping.identity(H36M_17))
        np.testing.assert_array_equal(out.data, pose.data)
        assert out.frame_tag == pose.frame_tag

    def test_midpoint(self):
        data = np.zeros((1, 17, 3))
        data[0, COCO_BODY_17.index("left_hip")] = [0.0, 0.0, 0.0]
        data[0, COCO_BODY_17.index("right_hip")] = [2.0, 4.0, 6.0]
        mapping = SchemaMapping.from_names(
            COCO_BODY_17, COCO_BODY_17,
            {name: name for name in COCO_BODY_17.joints} | {"nose": ("left_hip", "right_hip")})
        out = map_schema_3d(Pose3DSequence(data, COCO_BODY_17), mapping)
        np.testing.assert_allclose(out.data[0, COCO_BODY_17.index("nose")], [1.0, 2.0, 3.0])

    def test_drop_disallowed(self, rng):
        pose = random_pose3d(rng)
        with pytest.raises(SchemaError, match="drop"):
            map_schema_3d(pose, H36M_TO_COCO_BODY)

    def test_composition_matches_composed_table(self, rng):
        """Mapping twice equals mapping once by the composed assignment table."""
        perm1 = rng.permutation(17)
        perm2 = rng.permutation(17)
        names1 = tuple(f"a{i}" for i in range(17))
        names2 = tuple(f"b{i}" for i in range(17))
        chain = tuple((0, i + 1) for i in range(16))
        s1 = JointSchema("s1", names1, 0, chain)
        s2 = JointSchema("s2", names2, 0, chain)
        m1 = SchemaMapping(H36M_17, s1, tuple((COPY, int(perm1[i])) for i in range(17)))
        m2 = SchemaMapping(s1, s2, tuple((COPY, int(perm2[i])) for i in range(17)))
        # composed: target i of s2 <- s1 joint perm2[i] <- h36m joint perm1[perm2[i]]
        composed = SchemaMapping(
            H36M_17, s2, tuple((COPY, int(perm1[perm2[i]])) for i in range(17)))
        pose = random_pose3d(rng)
        two_step = map_schema_3d(map_schema_3d(pose, m1), m2)
        one_step = map_schema_3d(pose, composed)
        np.testing.assert_array_equal(two_step.data, one_step.data)


class TestBoneLengths:
    def test_all_zero(self):
        pose = Pose3DSequence(np.zeros((1, 17, 3)), H36M_17)
        assert (bone_lengths(pose) == 0.0).all()

    def test_three_four_five(self):
        schema = JointSchema("pair", ("a", "b"), 0, ((0, 1),))
        data = np.array([[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]])
        assert bone_lengths(Pose3DSequence(data, schema))[0] == pytest.approx(5.0)

    def test_invariant_under_world_to_camera(self, rng):
        pose = random_pose3d(rng)
        cam = make_camera(rng)
        moved = world_to_camera(pose, cam)
        for f in range(pose.num_frames):
            a = bone_lengths(pose, f)
            b = bone_lengths(moved, f)
            assert np.abs(a - b).max() < 1e-9


class TestMappingFiles:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "mapping.json"
        save_mapping(H36M_TO_COCO_BODY, path)
        loaded = load_mapping(path)
        assert loaded == H36M_TO_COCO_BODY

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "mapping.json"
        path.write_text('{"source": "h36m-17"}')
        with pytest.raises(SchemaError):
            load_mapping(path)

    def test_every_target_assigned_exactly_once(self):
        with pytest.raises(SchemaError):
            SchemaMapping(H36M_17, COCO_BODY_17, ((COPY, 0),) * 16)  # one short
