"""3D semantic object registry with recognition and correction-driven merging.

Object geometry is stored as keyframe-local observations so that a corrected
trajectory can re-derive world geometry retroactively. Re-sightings are
recognized by comparing whole point clouds (symmetric average nearest
neighbor distance), not centroids, so object extent participates in the
association decision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClassMismatch, EmptyCloud, UnknownKeyframe
from .geometry import KEYFRAME, WORLD, PointCloud, RigidPose, voxel_downsample
from .nn_grid import GridIndex


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    """Symmetric mean nearest-neighbor distance between two clouds, meters."""
    if len(a) == 0 or len(b) == 0:
        raise EmptyCloud("chamfer distance needs non-empty clouds")
    if a.frame != b.frame:
        raise ValueError(f"frame mismatch: {a.frame!r} vs {b.frame!r}")
    idx_b = GridIndex(b.points)
    d_ab = np.array([idx_b.nearest_distance(p) for p in a.points])
    idx_a = GridIndex(a.points)
    d_ba = np.array([idx_a.nearest_distance(p) for p in b.points])
    return 0.5 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


def overlap_ratio(a: np.ndarray, b: np.ndarray, radius: float) -> float:
    """Fraction of the smaller cloud's points within `radius` of the larger."""
    small, large = (a, b) if len(a) <= len(b) else (b, a)
    idx = GridIndex(large, cell=radius)
    hits = sum(idx.has_within(p, radius) for p in small)
    return hits / len(small)


@dataclass
class SemanticObject:
    object_id: int
    class_label: str
    observations: list = field(default_factory=list)  # (keyframe_id, local pts)
    world_points: np.ndarray | None = None
    centroid: np.ndarray | None = None
    aabb: tuple | None = None  # (min 3-vector, max 3-vector)

    @property
    def world_cloud(self) -> PointCloud:
        return PointCloud(self.world_points, WORLD)

    def rebuild(self, keyframes: dict, leaf: float, max_points: int):
        """Recompute the cached world cloud from keyframe-local observations."""
        parts = [
            keyframes[kf_id].transform(pts) for kf_id, pts in self.observations
        ]
        world = np.concatenate(parts, axis=0)
        if len(world) > max_points:
            world = voxel_downsample(PointCloud(world, WORLD), leaf).points
        self.world_points = world
        self.centroid = world.mean(axis=0)
        self.aabb = (world.min(axis=0), world.max(axis=0))


@dataclass
class MergeReport:
    pairs: list  # (survivor_id, absorbed_id)
    objects_before: int
    objects_after: int

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "objects_before": self.objects_before,
            "objects_after": self.objects_after,
        }


class SemanticMap:
    """Registry of keyframes and semantic objects. Single-writer."""

    def __init__(self, assoc_dist: float = 0.3, merge_overlap: float = 0.5,
                 overlap_radius: float = 0.05, voxel_leaf: float = 0.01,
                 max_cloud_points: int = 50000):
        self.assoc_dist = assoc_dist
        self.merge_overlap = merge_overlap
        self.overlap_radius = overlap_radius
        self.voxel_leaf = voxel_leaf
        self.max_cloud_points = max_cloud_points
        self.keyframes: dict[int, RigidPose] = {}
        self.objects: dict[int, SemanticObject] = {}
        self._next_object_id = 0

    def add_keyframe(self, keyframe_id: int, pose: RigidPose):
        self.keyframes[keyframe_id] = pose

    def associate(self, candidate: PointCloud, class_label: str) -> int | None:
        """Nearest same-class object by chamfer distance, if close enough."""
        candidate.require_frame(WORLD)
        if len(candidate) == 0:
            raise EmptyCloud("empty candidate cloud")
        best_id = None
        best_dist = np.inf
        for obj_id in sorted(self.objects):
            obj = self.objects[obj_id]
            if obj.class_label != class_label:
                continue
            d = chamfer_distance(candidate, obj.world_cloud)
            if d < best_dist:
                best_dist = d
                best_id = obj_id
        if best_id is not None and best_dist <= self.assoc_dist:
            return best_id
        return None

    def register_candidate(self, candidate: PointCloud, class_label: str,
                           keyframe_id: int) -> int:
        """Add a confirmed detection's cloud: extend a recognized object or
        create a new one."""
        if keyframe_id not in self.keyframes:
            raise UnknownKeyframe(f"keyframe {keyframe_id} not registered")
        if len(candidate) == 0:
            raise EmptyCloud("empty candidate cloud")
        candidate.require_frame(WORLD)
        local = self.keyframes[keyframe_id].inverse().transform(candidate.points)
        match = self.associate(candidate, class_label)
        if match is not None:
            obj = self.objects[match]
            obj.observations.append((keyframe_id, local))
            obj.rebuild(self.keyframes, self.voxel_leaf, self.max_cloud_points)
            return match
        obj = SemanticObject(self._next_object_id, class_label)
        self._next_object_id += 1
        obj.observations.append((keyframe_id, local))
        obj.rebuild(self.keyframes, self.voxel_leaf, self.max_cloud_points)
        self.objects[obj.object_id] = obj
        return obj.object_id

    def merge_objects(self, survivor: SemanticObject,
                      absorbed: SemanticObject) -> SemanticObject:
        if survivor.class_label != absorbed.class_label:
            raise ClassMismatch(
                f"{survivor.class_label!r} vs {absorbed.class_label!r}"
            )
        survivor.observations.extend(absorbed.observations)
        survivor.rebuild(self.keyframes, self.voxel_leaf, self.max_cloud_points)
        return survivor

    def _find_overlapping_pair(self):
        ids = sorted(self.objects)
        for i, id_a in enumerate(ids):
            a = self.objects[id_a]
            for id_b in ids[i + 1:]:
                b = self.objects[id_b]
                if a.class_label != b.class_label:
                    continue
                lo_a, hi_a = a.aabb
                lo_b, hi_b = b.aabb
                if np.any(lo_a > hi_b + self.overlap_radius) or \
                        np.any(lo_b > hi_a + self.overlap_radius):
                    continue
                ratio = overlap_ratio(a.world_points, b.world_points,
                                      self.overlap_radius)
                if ratio >= self.merge_overlap:
                    return id_a, id_b
        return None

    def apply_trajectory_correction(self, corrected) -> MergeReport:
        """Replace keyframe poses, re-derive all object geometry, then merge
        same-class objects whose corrected clouds saliently overlap."""
        for kf_id, _pose in corrected:
            if kf_id not in self.keyframes:
                raise UnknownKeyframe(f"keyframe {kf_id} not registered")
        for kf_id, pose in corrected:
            self.keyframes[kf_id] = pose
        for obj in self.objects.values():
            obj.rebuild(self.keyframes, self.voxel_leaf, self.max_cloud_points)
        before = len(self.objects)
        pairs = []
        while True:
            hit = self._find_overlapping_pair()
            if hit is None:
                break
            survivor_id, absorbed_id = hit
            self.merge_objects(self.objects[survivor_id],
                               self.objects[absorbed_id])
            del self.objects[absorbed_id]
            pairs.append((survivor_id, absorbed_id))
        return MergeReport(pairs, before, len(self.objects))

    def export(self) -> dict:
        objs = []
        for obj_id in sorted(self.objects):
            obj = self.objects[obj_id]
            objs.append({
                "id": obj.object_id,
                "class": obj.class_label,
                "centroid": [float(c) for c in obj.centroid],
                "aabb": {
                    "min": [float(c) for c in obj.aabb[0]],
                    "max": [float(c) for c in obj.aabb[1]],
                },
                "num_points": int(len(obj.world_points)),
                "num_observations": len(obj.observations),
            })
        return {"objects": objs}


def local_observation(candidate: PointCloud, keyframe_pose: RigidPose) -> PointCloud:
    """Convert a world-frame candidate cloud into keyframe-local coordinates."""
    candidate.require_frame(WORLD)
    return candidate.transformed(keyframe_pose.inverse(), KEYFRAME)
