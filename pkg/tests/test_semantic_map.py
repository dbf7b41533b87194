import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semmap.errors import ClassMismatch, EmptyCloud, UnknownKeyframe
from semmap.geometry import PointCloud, RigidPose
from semmap.semantic_map import (
    SemanticMap,
    chamfer_distance,
    overlap_ratio,
)

from conftest import brute_force_chamfer, random_pose


def world(points):
    return PointCloud(points, "world")


class TestChamfer:
    def test_identical_clouds(self):
        a = world([[0, 0, 0], [1, 2, 3]])
        assert chamfer_distance(a, a) == 0.0

    def test_single_points(self):
        assert chamfer_distance(world([[0, 0, 0]]), world([[1, 0, 0]])) == 1.0

    def test_hand_case(self):
        a = world([[0, 0, 0], [1, 0, 0]])
        b = world([[0, 0, 0]])
        assert chamfer_distance(a, b) == pytest.approx(0.25)

    def test_empty_raises(self):
        with pytest.raises(EmptyCloud):
            chamfer_distance(world(np.empty((0, 3))), world([[0, 0, 0]]))

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_matches_brute_force_exactly(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-2, 2, (rng.integers(1, 80), 3))
        b = rng.uniform(-2, 2, (rng.integers(1, 80), 3))
        assert chamfer_distance(world(a), world(b)) == brute_force_chamfer(a, b)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_symmetric_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        a = world(rng.uniform(-1, 1, (rng.integers(1, 40), 3)))
        b = world(rng.uniform(-1, 1, (rng.integers(1, 40), 3)))
        d = chamfer_distance(a, b)
        assert d >= 0
        assert chamfer_distance(b, a) == d


def make_map(**kw):
    m = SemanticMap(**kw)
    m.add_keyframe(0, RigidPose.identity())
    return m


def cube_cloud(center, n=60, half=0.05, seed=0):
    rng = np.random.default_rng(seed)
    return world(np.asarray(center) + rng.uniform(-half, half, (n, 3)))


class TestAssociate:
    def test_empty_registry(self):
        m = make_map()
        assert m.associate(cube_cloud([0, 0, 1]), "cup") is None

    def test_close_same_class_matches(self):
        m = make_map()
        obj_id = m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
        assert m.associate(cube_cloud([0.05, 0, 1], seed=1), "cup") == obj_id

    def test_class_gating(self):
        m = make_map()
        m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
        assert m.associate(cube_cloud([0, 0, 1]), "book") is None


class TestRegisterCandidate:
    def test_second_sighting_extends_object(self):
        m = make_map()
        m.add_keyframe(1, RigidPose(np.eye(3), [0.1, 0, 0]))
        a = m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
        b = m.register_candidate(cube_cloud([0, 0, 1], seed=1), "cup", 1)
        assert a == b
        assert len(m.objects) == 1
        assert len(m.objects[a].observations) == 2

    def test_distant_same_class_is_new_object(self):
        m = make_map()
        m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
        m.register_candidate(cube_cloud([5, 0, 1]), "cup", 0)
        assert len(m.objects) == 2

    def test_first_registration(self):
        m = make_map()
        obj_id = m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
        assert len(m.objects) == 1
        assert len(m.objects[obj_id].observations) == 1

    def test_unknown_keyframe(self):
        m = make_map()
        with pytest.raises(UnknownKeyframe):
            m.register_candidate(cube_cloud([0, 0, 1]), "cup", 99)

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_size_law(self, seed):
        rng = np.random.default_rng(seed)
        m = make_map()
        for _ in range(6):
            cloud = cube_cloud(rng.uniform(-2, 2, 3), seed=int(rng.integers(1e6)))
            before = len(m.objects)
            was_new = m.associate(cloud, "cup") is None
            m.register_candidate(cloud, "cup", 0)
            assert len(m.objects) == before + int(was_new)


class TestMerge:
    def test_merge_with_copy_keeps_centroid(self):
        m = make_map()
        a = m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
        obj = m.objects[a]
        centroid = obj.centroid.copy()
        other = m.objects[m.register_candidate(cube_cloud([5, 0, 1]), "cup", 0)]
        other.observations = list(obj.observations)
        other.rebuild(m.keyframes, m.voxel_leaf, m.max_cloud_points)
        merged = m.merge_objects(obj, other)
        np.testing.assert_allclose(merged.centroid, centroid, atol=1e-12)

    def test_two_point_merge_geometry(self):
        m = make_map()
        a = m.register_candidate(world([[0, 0, 0]]), "cup", 0)
        b = m.register_candidate(world([[1, 0, 0]]), "cup", 0)
        assert a != b  # 1 m apart, beyond the association threshold
        merged = m.merge_objects(m.objects[a], m.objects[b])
        np.testing.assert_allclose(merged.centroid, [0.5, 0, 0])
        np.testing.assert_allclose(merged.aabb[0], [0, 0, 0])
        np.testing.assert_allclose(merged.aabb[1], [1, 0, 0])
        assert len(merged.observations) == 2

    def test_class_mismatch(self):
        m = make_map()
        a = m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
        b = m.register_candidate(cube_cloud([5, 0, 1]), "book", 0)
        with pytest.raises(ClassMismatch):
            m.merge_objects(m.objects[a], m.objects[b])


class TestTrajectoryCorrection:
    def test_identity_correction_is_noop(self):
        m = make_map()
        m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
        centroid = m.objects[0].centroid.copy()
        report = m.apply_trajectory_correction([(0, RigidPose.identity())])
        assert report.pairs == []
        np.testing.assert_allclose(m.objects[0].centroid, centroid,
                                   atol=1e-12)

    def test_translation_moves_centroid(self):
        m = make_map()
        m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
        centroid = m.objects[0].centroid.copy()
        m.apply_trajectory_correction([(0, RigidPose(np.eye(3), [1, 0, 0]))])
        np.testing.assert_allclose(m.objects[0].centroid - centroid,
                                   [1, 0, 0], atol=1e-12)

    def test_drift_duplicates_merge_after_correction(self):
        m = make_map()
        drifted = RigidPose(np.eye(3), [0.5, 0, 0])
        m.add_keyframe(1, drifted)
        cloud = cube_cloud([0, 0, 1], n=120)
        a = m.register_candidate(cloud, "cup", 0)
        # same physical points observed under a drifted keyframe pose
        b = m.register_candidate(
            cloud.transformed(drifted, "world"), "cup", 1)
        assert a != b
        report = m.apply_trajectory_correction([(1, RigidPose.identity())])
        assert report.pairs == [(a, b)]
        assert len(m.objects) == 1

    def test_unknown_keyframe(self):
        m = make_map()
        with pytest.raises(UnknownKeyframe):
            m.apply_trajectory_correction([(42, RigidPose.identity())])

    def test_correction_round_trip_restores_centroids(self):
        rng = np.random.default_rng(8)
        m = make_map()
        m.add_keyframe(1, random_pose(rng))
        m.register_candidate(cube_cloud([0, 0, 2]), "cup", 0)
        m.register_candidate(cube_cloud([4, 0, 2]), "book", 1)
        centroids = {i: o.centroid.copy() for i, o in m.objects.items()}
        perturb = random_pose(rng, trans_scale=0.5)
        original = dict(m.keyframes)
        m.apply_trajectory_correction(
            [(i, perturb.compose(p)) for i, p in original.items()])
        m.apply_trajectory_correction(list(original.items()))
        for i, c in centroids.items():
            assert np.abs(m.objects[i].centroid - c).max() < 1e-9

    def test_fixpoint_no_salient_overlap_remains(self):
        from semmap.semantic_map import SemanticObject
        m = make_map()
        base = cube_cloud([0, 0, 1], n=100)
        # seed overlapping objects directly, bypassing association
        for i, dx in enumerate([0.0, 0.02, 0.04, 5.0]):
            obj = SemanticObject(i, "cup")
            obj.observations.append((0, base.points + [dx, 0, 0]))
            obj.rebuild(m.keyframes, m.voxel_leaf, m.max_cloud_points)
            m.objects[i] = obj
        m.apply_trajectory_correction([(0, RigidPose.identity())])
        ids = sorted(m.objects)
        for i, id_a in enumerate(ids):
            for id_b in ids[i + 1:]:
                r = overlap_ratio(m.objects[id_a].world_points,
                                  m.objects[id_b].world_points,
                                  m.overlap_radius)
                assert r < m.merge_overlap

    def test_world_cache_matches_fresh_recompute(self):
        rng = np.random.default_rng(5)
        m = make_map()
        for i in range(1, 4):
            m.add_keyframe(i, random_pose(rng))
        for i in range(4):
            m.register_candidate(cube_cloud(rng.uniform(-3, 3, 3),
                                            seed=i), "cup", i)
        m.apply_trajectory_correction(
            [(i, random_pose(rng)) for i in range(4)])
        for obj in m.objects.values():
            fresh = np.concatenate([
                m.keyframes[kf].transform(pts)
                for kf, pts in obj.observations
            ])
            assert np.abs(np.sort(fresh, axis=0)
                          - np.sort(obj.world_points, axis=0)).max() < 1e-9


def test_export_schema():
    m = make_map()
    m.register_candidate(cube_cloud([0, 0, 1]), "cup", 0)
    out = m.export()
    obj = out["objects"][0]
    assert set(obj) == {"id", "class", "centroid", "aabb", "num_points",
                        "num_observations"}
    assert obj["class"] == "cup"
    assert set(obj["aabb"]) == {"min", "max"}
