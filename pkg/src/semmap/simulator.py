"""Deterministic scenario engine and end-to-end pipeline runner.

Replaces the robot, cameras, and neural detectors with a seeded synthetic
world: box-shaped objects sampled on their surfaces, persons with scripted
attention windows, a scripted camera trajectory with optional pose drift,
and correction events that hand the pipeline the true keyframe poses.
All randomness derives from the scenario seed, so runs are reproducible
byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .errors import EmptyCloud, FrameOutOfRange, ScenarioError
from .geometry import (
    CameraIntrinsics,
    DepthImage,
    RigidPose,
    extract_object_cloud,
)
from .headpose import (
    FaceModel3D,
    LandmarkSet2D,
    is_attending,
    lm_solve_pose,
    project_model,
    rotation_from_euler,
)
from .semantic_map import SemanticMap
from .tracker import KIND_OBJECT, KIND_PERSON, Detection2D, IoUTracker
from .willingness import PersonWillingnessMap

NEAR_PLANE = 0.05
MIN_VISIBLE_SAMPLES = 5

_face_model_cache = None


def _default_face_model() -> FaceModel3D:
    global _face_model_cache
    if _face_model_cache is None:
        _face_model_cache = FaceModel3D.default()
    return _face_model_cache


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> RigidPose:
    """Camera-to-world pose at `position` with the optical axis on `target`."""
    position = np.asarray(position, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - position
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise ScenarioError("look_at target coincides with camera position")
    z = fwd / norm
    down = -np.asarray(up, dtype=np.float64)
    x = np.cross(down, z)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross((0.0, 1.0, 0.0), z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidPose(np.column_stack([x, y, z]), position)


@dataclass(frozen=True)
class WorldObject:
    class_label: str
    centroid: tuple
    extents: tuple
    sample_count: int = 400


@dataclass(frozen=True)
class PersonSpec:
    position: tuple  # head center, world frame
    attention_windows: tuple  # ((t_start, t_end), ...) seconds
    away_yaw_deg: float = 60.0


@dataclass(frozen=True)
class NoiseModel:
    bbox_jitter_px: float = 0.0
    dropout_prob: float = 0.0
    false_positive_rate: float = 0.0
    depth_noise_m: float = 0.0
    landmark_jitter_px: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ScenarioError("dropout_prob must be in [0, 1]")
        if self.false_positive_rate < 0:
            raise ScenarioError("false_positive_rate must be >= 0")


@dataclass(frozen=True)
class DriftModel:
    start_frame: int = 0
    translation_per_frame: tuple = (0.0, 0.0, 0.0)
    rotation_deg_per_frame: tuple = (0.0, 0.0, 0.0)  # axis-angle, degrees


@dataclass(frozen=True)
class CorrectionEvent:
    frame: int
    poses: object = "true"  # "true" or {keyframe_id: RigidPose}


def _sample_box_surface(centroid, extents, count, rng) -> np.ndarray:
    """Uniform points on the surface of an axis-aligned box."""
    c = np.asarray(centroid, dtype=np.float64)
    e = np.asarray(extents, dtype=np.float64)
    areas = np.array([e[1] * e[2], e[0] * e[2], e[0] * e[1]])
    face_areas = np.repeat(areas, 2)
    probs = face_areas / face_areas.sum()
    faces = rng.choice(6, size=count, p=probs)
    uv = rng.uniform(-0.5, 0.5, size=(count, 2))
    pts = np.empty((count, 3))
    for i, f in enumerate(faces):
        axis = f // 2
        sign = 1.0 if f % 2 == 0 else -1.0
        others = [a for a in range(3) if a != axis]
        p = np.empty(3)
        p[axis] = sign * 0.5 * e[axis]
        p[others[0]] = uv[i, 0] * e[others[0]]
        p[others[1]] = uv[i, 1] * e[others[1]]
        pts[i] = c + p
    return pts


def _build_trajectory(spec, fps: float) -> list:
    if isinstance(spec, list):
        return [RigidPose.from_dict(p) if isinstance(p, dict) else p
                for p in spec]
    kind = spec.get("kind")
    if kind == "orbit":
        center = np.asarray(spec["center"], dtype=np.float64)
        radius = float(spec["radius"])
        height = float(spec.get("height", center[2]))
        frames = int(spec["frames"])
        start = np.radians(float(spec.get("start_deg", 0.0)))
        sweep = np.radians(float(spec.get("sweep_deg", 360.0)))
        poses = []
        for i in range(frames):
            ang = start + sweep * i / max(frames, 1)
            pos = center + np.array([radius * np.cos(ang),
                                     radius * np.sin(ang),
                                     height - center[2]])
            poses.append(look_at(pos, center))
        return poses
    if kind == "segments":
        poses = []
        for seg in spec["segments"]:
            pose = look_at(seg["position"], seg["look_at"])
            poses.extend([pose] * int(seg["frames"]))
        return poses
    if kind == "poses":
        out = []
        for p in spec["poses"]:
            if "look_at" in p:
                out.append(look_at(p["position"], p["look_at"]))
            else:
                out.append(RigidPose.from_dict(p))
        return out
    raise ScenarioError(f"unknown trajectory kind {kind!r}")


@dataclass
class Scenario:
    seed: int
    intrinsics: CameraIntrinsics
    world_objects: list
    trajectory: list  # RigidPose per frame (true camera poses)
    persons: list = field(default_factory=list)
    fps: float = 10.0
    max_range: float = 15.0
    background_depth: float = 0.0  # 0 = invalid background pixels
    drift: DriftModel | None = None
    correction_events: list = field(default_factory=list)
    noise: NoiseModel = field(default_factory=NoiseModel)
    object_samples: list = field(init=False)

    def __post_init__(self):
        if not self.trajectory:
            raise ScenarioError("trajectory must be non-empty")
        self.object_samples = []
        for idx, obj in enumerate(self.world_objects):
            rng = np.random.default_rng([self.seed, 7, idx])
            self.object_samples.append(
                _sample_box_surface(obj.centroid, obj.extents,
                                    obj.sample_count, rng))

    @property
    def num_frames(self) -> int:
        return len(self.trajectory)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            intr = CameraIntrinsics.from_dict(d["intrinsics"])
            objs = [
                WorldObject(
                    class_label=o["class"],
                    centroid=tuple(o["centroid"]),
                    extents=tuple(o["extents"]),
                    sample_count=int(o.get("sample_count", 400)),
                )
                for o in d.get("world_objects", [])
            ]
            persons = [
                PersonSpec(
                    position=tuple(p["position"]),
                    attention_windows=tuple(
                        tuple(w) for w in p.get("attention_windows", [])),
                    away_yaw_deg=float(p.get("away_yaw_deg", 60.0)),
                )
                for p in d.get("persons", [])
            ]
            fps = float(d.get("fps", 10.0))
            trajectory = _build_trajectory(d["trajectory"], fps)
            drift = None
            if d.get("drift"):
                dd = d["drift"]
                drift = DriftModel(
                    start_frame=int(dd.get("start_frame", 0)),
                    translation_per_frame=tuple(
                        dd.get("translation_per_frame", (0, 0, 0))),
                    rotation_deg_per_frame=tuple(
                        dd.get("rotation_deg_per_frame", (0, 0, 0))),
                )
            corrections = []
            for ev in d.get("correction_events", []):
                poses = ev.get("poses", "true")
                if isinstance(poses, dict):
                    poses = {int(k): RigidPose.from_dict(v)
                             for k, v in poses.items()}
                elif poses != "true":
                    raise ScenarioError(
                        "correction poses must be 'true' or a mapping")
                corrections.append(CorrectionEvent(int(ev["frame"]), poses))
            noise = NoiseModel(**d.get("noise", {}))
            return cls(
                seed=int(d["seed"]),
                intrinsics=intr,
                world_objects=objs,
                trajectory=trajectory,
                persons=persons,
                fps=fps,
                max_range=float(d.get("max_range", 15.0)),
                background_depth=float(d.get("background_depth", 0.0)),
                drift=drift,
                correction_events=corrections,
                noise=noise,
            )
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f"bad scenario schema: {e!r}") from e

    @classmethod
    def from_json(cls, path) -> "Scenario":
        try:
            with open(path) as f:
                d = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"malformed scenario JSON: {e}") from e
        if not isinstance(d, dict):
            raise ScenarioError("scenario root must be a JSON object")
        return cls.from_dict(d)

    def drift_pose(self, frame_idx: int) -> RigidPose:
        """Accumulated world-frame drift perturbation at a frame."""
        if self.drift is None or frame_idx < self.drift.start_frame:
            return RigidPose.identity()
        n = frame_idx - self.drift.start_frame + 1
        t = np.asarray(self.drift.translation_per_frame) * n
        w = np.radians(np.asarray(self.drift.rotation_deg_per_frame)) * n
        from .headpose import rodrigues
        return RigidPose(rodrigues(w), t)

    def estimated_pose(self, frame_idx: int) -> RigidPose:
        return self.drift_pose(frame_idx).compose(self.trajectory[frame_idx])

    def attending_gt(self, person_idx: int, frame_idx: int) -> bool:
        t = frame_idx / self.fps
        return any(t0 <= t < t1
                   for t0, t1 in self.persons[person_idx].attention_windows)


@dataclass
class FrameData:
    detections: list
    depth: DepthImage
    pose_estimate: RigidPose
    provenance: list  # per detection: ("object"|"person"|"fp", index)
    landmarks: dict  # person index -> LandmarkSet2D
    attending_gt: dict  # person index -> bool


def _project_points_cam(points, pose: RigidPose):
    return pose.inverse().transform(points)


def _jittered_bbox(bbox, rng, sigma, width, height):
    x0, y0, x1, y1 = bbox
    if sigma > 0:
        dx0, dy0, dx1, dy1 = rng.normal(0.0, sigma, 4)
        x0, y0, x1, y1 = x0 + dx0, y0 + dy0, x1 + dx1, y1 + dy1
    else:
        rng.normal(0.0, 1.0, 4)  # keep the stream position fixed
    x0, x1 = sorted((x0, x1))
    y0, y1 = sorted((y0, y1))
    x0 = float(np.clip(x0, 0, width - 2))
    y0 = float(np.clip(y0, 0, height - 2))
    x1 = float(np.clip(x1, x0 + 1.0, width))
    y1 = float(np.clip(y1, y0 + 1.0, height))
    return (x0, y0, x1, y1)


def _splat_depth(depth_min, us, vs, ds, footprint, width, height):
    half = footprint // 2
    flat = depth_min.ravel()
    for dy in range(-half, footprint - half):
        for dx in range(-half, footprint - half):
            uu = us + dx
            vv = vs + dy
            ok = (uu >= 0) & (uu < width) & (vv >= 0) & (vv < height)
            if not np.any(ok):
                continue
            np.minimum.at(flat, vv[ok] * width + uu[ok], ds[ok])


def synthesize_frame(scenario: Scenario, frame_idx: int):
    """Detections, depth image, and (possibly drifted) pose estimate."""
    data = synthesize_frame_data(scenario, frame_idx)
    return data.detections, data.depth, data.pose_estimate


def synthesize_frame_data(scenario: Scenario, frame_idx: int) -> FrameData:
    if not 0 <= frame_idx < scenario.num_frames:
        raise FrameOutOfRange(f"frame {frame_idx} of {scenario.num_frames}")
    k = scenario.intrinsics
    true_pose = scenario.trajectory[frame_idx]
    noise = scenario.noise
    rng_det = np.random.default_rng([scenario.seed, 2, frame_idx])
    rng_depth = np.random.default_rng([scenario.seed, 3, frame_idx])
    rng_fp = np.random.default_rng([scenario.seed, 4, frame_idx])
    rng_lmk = np.random.default_rng([scenario.seed, 5, frame_idx])

    detections = []
    provenance = []
    depth_min = np.full((k.height, k.width), np.inf)

    for oi, obj in enumerate(scenario.world_objects):
        cam = _project_points_cam(scenario.object_samples[oi], true_pose)
        z = cam[:, 2]
        vis = (z > NEAR_PLANE) & (z <= scenario.max_range)
        if np.any(vis):
            u = k.cx + k.fx * cam[vis, 0] / z[vis]
            v = k.cy + k.fy * cam[vis, 1] / z[vis]
            inb = (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
            u, v = u[inb], v[inb]
            d = z[vis][inb]
        else:
            u = v = d = np.empty(0)
        # depth comes from geometry regardless of detection dropout
        if d.size:
            if noise.depth_noise_m > 0:
                d = d + rng_depth.normal(0.0, noise.depth_noise_m, d.size)
                d = np.maximum(d, 0.01)
            else:
                rng_depth.normal(0.0, 1.0, d.size)
            e = np.asarray(obj.extents)
            area = 2 * (e[0] * e[1] + e[1] * e[2] + e[0] * e[2])
            spacing = np.sqrt(max(area, 1e-9) / obj.sample_count)
            fpx = int(np.clip(np.ceil(k.fx * spacing / np.median(d)), 1, 9))
            _splat_depth(depth_min, u.astype(np.int64), v.astype(np.int64),
                         d, fpx, k.width, k.height)
        if u.size >= MIN_VISIBLE_SAMPLES:
            bbox = (u.min() - 0.5, v.min() - 0.5, u.max() + 0.5, v.max() + 0.5)
            bbox = _jittered_bbox(bbox, rng_det, noise.bbox_jitter_px,
                                  k.width, k.height)
            dropped = rng_det.uniform() < noise.dropout_prob
            if not dropped:
                detections.append(Detection2D(bbox, obj.class_label,
                                              score=1.0, kind=KIND_OBJECT))
                provenance.append(("object", oi))

    face_model = _default_face_model()
    landmarks = {}
    attending_gt = {}
    for pi, person in enumerate(scenario.persons):
        attending = scenario.attending_gt(pi, frame_idx)
        attending_gt[pi] = attending
        head_cam = _project_points_cam(
            np.asarray(person.position, dtype=np.float64), true_pose)
        if not (NEAR_PLANE < head_cam[2] <= scenario.max_range):
            continue
        hc = np.asarray(person.position)
        corners = np.array([
            hc + (sx * 0.25, sy * 0.25, dz)
            for sx in (-1, 1) for sy in (-1, 1) for dz in (-1.5, 0.15)
        ])
        cam = _project_points_cam(corners, true_pose)
        zc = np.maximum(cam[:, 2], NEAR_PLANE)
        u = k.cx + k.fx * cam[:, 0] / zc
        v = k.cy + k.fy * cam[:, 1] / zc
        bbox = (u.min(), v.min(), u.max(), v.max())
        bbox = _jittered_bbox(bbox, rng_det, noise.bbox_jitter_px,
                              k.width, k.height)
        dropped = rng_det.uniform() < noise.dropout_prob
        if not dropped:
            detections.append(Detection2D(bbox, "person", score=1.0,
                                          kind=KIND_PERSON))
            provenance.append(("person", pi))
        head_rot = np.eye(3) if attending else rotation_from_euler(
            person.away_yaw_deg, 0.0, 0.0)
        try:
            lmks = project_model(face_model, head_rot, head_cam, k)
        except Exception:
            continue
        inside = all(0 <= uu < k.width and 0 <= vv < k.height
                     for uu, vv in lmks.values())
        if not inside:
            continue
        if noise.landmark_jitter_px > 0:
            lmks = {
                n: (uu + rng_lmk.normal(0, noise.landmark_jitter_px),
                    vv + rng_lmk.normal(0, noise.landmark_jitter_px))
                for n, (uu, vv) in lmks.items()
            }
        landmarks[pi] = LandmarkSet2D(lmks, face_id=pi)

    if noise.false_positive_rate > 0:
        n_fp = int(rng_fp.poisson(noise.false_positive_rate))
        class_pool = sorted({o.class_label for o in scenario.world_objects}) \
            or ["clutter"]
        for j in range(n_fp):
            cls = class_pool[int(rng_fp.integers(len(class_pool)))]
            cx_ = rng_fp.uniform(0, k.width)
            cy_ = rng_fp.uniform(0, k.height)
            w = rng_fp.uniform(10, 80)
            h = rng_fp.uniform(10, 80)
            x0 = float(np.clip(cx_ - w / 2, 0, k.width - 2))
            y0 = float(np.clip(cy_ - h / 2, 0, k.height - 2))
            x1 = float(np.clip(cx_ + w / 2, x0 + 1, k.width))
            y1 = float(np.clip(cy_ + h / 2, y0 + 1, k.height))
            detections.append(Detection2D((x0, y0, x1, y1), cls, score=0.3,
                                          kind=KIND_OBJECT))
            provenance.append(("fp", j))

    if scenario.background_depth > 0:
        depth = np.minimum(depth_min, scenario.background_depth)
    else:
        depth = np.where(np.isinf(depth_min), 0.0, depth_min)
    depth = np.where(np.isinf(depth), scenario.background_depth, depth)

    return FrameData(
        detections=detections,
        depth=DepthImage(depth),
        pose_estimate=scenario.estimated_pose(frame_idx),
        provenance=provenance,
        landmarks=landmarks,
        attending_gt=attending_gt,
    )


@dataclass
class MetricsReport:
    gt_object_count: int
    registered_count: int
    duplicate_count: int
    precision: float
    recall: float
    centroid_rmse_m: float
    willingness_trigger_times: list
    attention_windows: list
    match_radius_m: float = 0.5

    def to_dict(self) -> dict:
        return {
            "gt_object_count": self.gt_object_count,
            "registered_count": self.registered_count,
            "duplicate_count": self.duplicate_count,
            "precision": self.precision,
            "recall": self.recall,
            "centroid_rmse_m": self.centroid_rmse_m,
            "willingness_trigger_times": self.willingness_trigger_times,
            "attention_windows": self.attention_windows,
            "match_radius_m": self.match_radius_m,
        }


def compute_map_metrics(scenario: Scenario, registry: SemanticMap,
                        trigger_events: list,
                        match_radius: float = 0.5) -> MetricsReport:
    """Greedy class-gated centroid matching of registered objects to ground
    truth; a registered object whose only nearby ground truth is already
    claimed counts as a duplicate."""
    gt = [(o.class_label, np.asarray(o.centroid, dtype=np.float64))
          for o in scenario.world_objects]
    claimed = [False] * len(gt)
    matched_sq = []
    duplicates = 0
    for obj_id in sorted(registry.objects):
        obj = registry.objects[obj_id]
        cands = [
            (float(np.linalg.norm(obj.centroid - c)), gi)
            for gi, (cls, c) in enumerate(gt)
            if cls == obj.class_label
            and np.linalg.norm(obj.centroid - c) <= match_radius
        ]
        cands.sort()
        free = [(d, gi) for d, gi in cands if not claimed[gi]]
        if free:
            d, gi = free[0]
            claimed[gi] = True
            matched_sq.append(d * d)
        elif cands:
            duplicates += 1
    registered = len(registry.objects)
    matched = len(matched_sq)
    precision = matched / registered if registered else 1.0
    recall = sum(claimed) / len(gt) if gt else 1.0
    rmse = float(np.sqrt(np.mean(matched_sq))) if matched_sq else 0.0
    windows = [
        {"person": pi, "windows": [list(w) for w in p.attention_windows]}
        for pi, p in enumerate(scenario.persons)
    ]
    return MetricsReport(
        gt_object_count=len(gt),
        registered_count=registered,
        duplicate_count=duplicates,
        precision=precision,
        recall=recall,
        centroid_rmse_m=rmse,
        willingness_trigger_times=trigger_events,
        attention_windows=windows,
    )


def run_scenario(scenario: Scenario, config: PipelineConfig | None = None):
    """Stream every frame through tracking, registration, head pose, and
    willingness; returns (map export dict, MetricsReport, event log list)."""
    registry, metrics, events = run_scenario_detailed(scenario, config)
    return registry.export(), metrics, events


def run_scenario_detailed(scenario: Scenario,
                          config: PipelineConfig | None = None):
    """Like run_scenario but returns the live SemanticMap for inspection."""
    config = config or PipelineConfig()
    k = scenario.intrinsics
    tracker = IoUTracker(config.iou_threshold, config.min_track_length,
                         config.track_ttl)
    registry = SemanticMap(
        assoc_dist=config.assoc_dist_m,
        merge_overlap=config.merge_overlap_ratio,
        overlap_radius=config.overlap_radius_m,
        voxel_leaf=config.voxel_leaf_m,
        max_cloud_points=config.max_cloud_points,
    )
    willing = PersonWillingnessMap(config.willingness_rate_up,
                                   config.willingness_rate_down,
                                   config.willingness_reset)
    face_model = _default_face_model()
    corrections_by_frame = {}
    for ev in scenario.correction_events:
        corrections_by_frame.setdefault(ev.frame, []).append(ev)

    events = []
    trigger_events = []
    for i in range(scenario.num_frames):
        data = synthesize_frame_data(scenario, i)
        registry.add_keyframe(i, data.pose_estimate)
        confirmations = tracker.step(data.detections, i)

        registered = []
        for track_id, det in confirmations:
            if det.kind != KIND_OBJECT:
                continue
            try:
                cloud = extract_object_cloud(
                    det.bbox, data.depth, data.pose_estimate, k,
                    stride=config.extraction_stride)
            except EmptyCloud:
                continue
            obj_id = registry.register_candidate(cloud, det.class_label, i)
            registered.append({"track": track_id, "object": obj_id,
                               "class": det.class_label})

        person_rows = []
        observations = []
        for track in tracker.tracks:
            if track.kind != KIND_PERSON or track.last_frame != i \
                    or track.last_detection_index is None:
                continue
            src = data.provenance[track.last_detection_index]
            if src[0] != "person":
                continue
            pi = src[1]
            lmks = data.landmarks.get(pi)
            if lmks is None:
                continue
            pose = lm_solve_pose(
                lmks, face_model, k,
                lambda_init=config.lm_lambda_init,
                step_tol=config.lm_step_tol,
                cost_tol=config.lm_cost_tol,
                max_iterations=config.lm_max_iterations,
                accept_rms=config.lm_accept_rms_px,
            )
            attending = is_attending(pose, config.attention_cone_deg)
            observations.append((track.track_id, attending))
            person_rows.append({
                "track": track.track_id, "person": pi,
                "yaw": pose.yaw, "pitch": pose.pitch, "roll": pose.roll,
                "rms": pose.rms_residual, "attending": attending,
            })

        t_now = i / scenario.fps
        triggers = willing.step_frame(observations, t_now)
        live_person_ids = [t.track_id for t in tracker.tracks
                           if t.kind == KIND_PERSON]
        willing.prune(live_person_ids)
        track_to_person = {row["track"]: row["person"] for row in person_rows}
        for pid in triggers:
            trigger_events.append({
                "t": t_now, "track_id": pid,
                "person_index": track_to_person.get(pid),
            })
        for row in person_rows:
            state = willing.states.get(row["track"])
            row["value"] = state.value if state else 0.0
            row["triggered"] = state.triggered if state else False

        merges = []
        for ev in corrections_by_frame.get(i, []):
            if ev.poses == "true":
                corrected = [(kf_id, scenario.trajectory[kf_id])
                             for kf_id in sorted(registry.keyframes)]
            else:
                corrected = sorted(ev.poses.items())
            report = registry.apply_trajectory_correction(corrected)
            merges.append(report.to_dict())

        events.append({
            "frame": i,
            "t": t_now,
            "num_detections": len(data.detections),
            "confirmations": [
                {"track": tid, "class": det.class_label, "kind": det.kind}
                for tid, det in confirmations
            ],
            "registered": registered,
            "registry_size": len(registry.objects),
            "merges": merges,
            "persons": person_rows,
            "triggers": triggers,
        })

    metrics = compute_map_metrics(scenario, registry, trigger_events)
    return registry, metrics, events
