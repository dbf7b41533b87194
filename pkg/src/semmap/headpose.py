"""Head pose from 2D facial landmarks via Levenberg-Marquardt model fitting.

A rigid 3D landmark model (canonical head frame: origin between the eyes,
x right, y down, z forward) is aligned to observed pixel landmarks by
minimizing reprojection error over an axis-angle + translation 6-vector.
Identity rotation corresponds to a head facing the camera.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import DegenerateConfiguration, NoConvergence, PointBehindCamera
from .geometry import CameraIntrinsics


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rodrigues(w: np.ndarray) -> np.ndarray:
    """Axis-angle 3-vector -> rotation matrix."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3) + skew(w)
    k = w / theta
    kx = skew(k)
    return np.eye(3) + np.sin(theta) * kx + (1 - np.cos(theta)) * (kx @ kx)


def _rotation_point_jacobian(w: np.ndarray, rot: np.ndarray,
                             x: np.ndarray) -> np.ndarray:
    """d(R(w) x)/dw, 3x3 (Gallego-Yezzi closed form)."""
    theta2 = float(w @ w)
    rx = rot @ x
    if theta2 < 1e-16:
        return -skew(x)
    jac = np.empty((3, 3))
    eye = np.eye(3)
    for i in range(3):
        vi = np.cross(w, (eye - rot) @ eye[:, i])
        jac[:, i] = ((w[i] * skew(w) + skew(vi)) @ rx) / theta2
    return jac


@dataclass(frozen=True)
class FaceModel3D:
    """Named 3D landmark positions in the canonical head frame, meters."""

    names: tuple
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if len(self.names) != len(pts):
            raise ValueError("names and points length mismatch")
        if len(self.names) != len(set(self.names)):
            raise ValueError("landmark names must be unique")
        if len(pts) < 6:
            raise DegenerateConfiguration("face model needs >= 6 landmarks")
        centered = pts - pts.mean(axis=0)
        sv = np.linalg.svd(centered, compute_uv=False)
        if sv[2] < 1e-3 * sv[0]:
            raise DegenerateConfiguration("face model is coplanar-degenerate")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_dict(cls, d: dict) -> "FaceModel3D":
        names = tuple(d.keys())
        return cls(names, np.array([d[n] for n in names], dtype=np.float64))

    @classmethod
    def from_json(cls, path) -> "FaceModel3D":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    @classmethod
    def default(cls) -> "FaceModel3D":
        text = resources.files("semmap.data").joinpath(
            "face_model.json").read_text()
        return cls.from_dict(json.loads(text))

    def subset(self, names) -> "FaceModel3D":
        index = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in names if n not in index]
        if missing:
            raise KeyError(f"model lacks landmarks: {missing}")
        return FaceModel3D(tuple(names),
                           self.points[[index[n] for n in names]])


@dataclass(frozen=True)
class LandmarkSet2D:
    """Observed pixel landmarks for one face, keyed by model landmark name."""

    landmarks: dict  # name -> (u, v)
    face_id: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "landmarks",
            {n: (float(u), float(v)) for n, (u, v) in self.landmarks.items()},
        )

    def __len__(self) -> int:
        return len(self.landmarks)

    def array_for(self, names) -> np.ndarray:
        return np.array([self.landmarks[n] for n in names], dtype=np.float64)


@dataclass(frozen=True)
class HeadPose:
    rotation: np.ndarray  # model-to-camera
    translation: np.ndarray
    yaw: float
    pitch: float
    roll: float
    rms_residual: float


def residuals_and_jacobian(params: np.ndarray, model_points: np.ndarray,
                           observed: np.ndarray, k: CameraIntrinsics):
    """Reprojection residuals (2N,) and analytic Jacobian (2N, 6).

    params = [axis-angle rotation (3), translation (3)], model-to-camera.
    Residual ordering: (u_i - u_obs_i, v_i - v_obs_i) per landmark.
    """
    w = np.asarray(params[:3], dtype=np.float64)
    t = np.asarray(params[3:6], dtype=np.float64)
    rot = rodrigues(w)
    cam = model_points @ rot.T + t
    if np.any(cam[:, 2] <= 1e-9):
        raise PointBehindCamera("model point at non-positive camera depth")
    n = len(model_points)
    res = np.empty(2 * n)
    jac = np.empty((2 * n, 6))
    for i, x in enumerate(model_points):
        px, py, pz = cam[i]
        u = k.cx + k.fx * px / pz
        v = k.cy + k.fy * py / pz
        res[2 * i] = u - observed[i, 0]
        res[2 * i + 1] = v - observed[i, 1]
        du_dp = np.array([k.fx / pz, 0.0, -k.fx * px / (pz * pz)])
        dv_dp = np.array([0.0, k.fy / pz, -k.fy * py / (pz * pz)])
        dp_dw = _rotation_point_jacobian(w, rot, x)
        jac[2 * i, :3] = du_dp @ dp_dw
        jac[2 * i, 3:] = du_dp
        jac[2 * i + 1, :3] = dv_dp @ dp_dw
        jac[2 * i + 1, 3:] = dv_dp
    return res, jac


def _initial_params(model: FaceModel3D, obs: LandmarkSet2D,
                    k: CameraIntrinsics) -> np.ndarray:
    """Frontal rotation; depth from the interocular scale when available."""
    z0 = 1.0
    eye_names = [n for n in model.names if "eye" in n]
    if len(eye_names) >= 2 and all(n in obs.landmarks for n in eye_names[:2]):
        a, b = eye_names[:2]
        idx = {n: i for i, n in enumerate(model.names)}
        model_d = np.linalg.norm(model.points[idx[a]] - model.points[idx[b]])
        pix_d = np.linalg.norm(
            np.subtract(obs.landmarks[a], obs.landmarks[b]))
        if pix_d > 1e-6:
            z0 = float(np.clip(k.fx * model_d / pix_d, 0.05, 50.0))
    uv = obs.array_for(model.names)
    tx = (uv[:, 0].mean() - k.cx) * z0 / k.fx
    ty = (uv[:, 1].mean() - k.cy) * z0 / k.fy
    return np.array([0.0, 0.0, 0.0, tx, ty, z0])


def _lm_minimize(params, points, observed, k, lambda_init, step_tol,
                 cost_tol, max_iterations):
    """One damped Gauss-Newton descent; returns (params, cost).

    Damping exhaustion (a stall) terminates the descent; only a singular
    system that damping cannot regularize raises.
    """
    params = params.copy()
    res, jac = residuals_and_jacobian(params, points, observed, k)
    cost = float(res @ res)
    lam = lambda_init
    for _ in range(max_iterations):
        jtj = jac.T @ jac
        jtr = jac.T @ res
        step = None
        while lam <= 1e12:
            try:
                step = np.linalg.solve(jtj + lam * np.eye(6), -jtr)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                break
            step = None
            lam *= 10.0
        if step is None:
            raise DegenerateConfiguration(
                "normal equations singular beyond damping rescue")
        trial = params + step
        try:
            trial_res, trial_jac = residuals_and_jacobian(
                trial, points, observed, k)
            trial_cost = float(trial_res @ trial_res)
        except PointBehindCamera:
            trial_cost = np.inf
        if trial_cost < cost:
            decrease = cost - trial_cost
            params, res, jac, cost = trial, trial_res, trial_jac, trial_cost
            lam = max(lam / 10.0, 1e-12)
            if np.linalg.norm(step) < step_tol or decrease < cost_tol:
                break
        else:
            lam *= 10.0
            if lam > 1e12:
                break  # stalled; caller judges the residual
    return params, cost


# deterministic restart rotations (yaw, pitch) tried when the first descent
# lands in a poor local minimum
_RESTART_ANGLES = (
    (40.0, 0.0), (-40.0, 0.0), (0.0, 30.0), (0.0, -30.0),
    (40.0, -30.0), (-40.0, 30.0), (80.0, 0.0), (-80.0, 0.0),
)


def lm_solve_pose(obs: LandmarkSet2D, model: FaceModel3D, k: CameraIntrinsics,
                  init: np.ndarray | None = None, lambda_init: float = 1e-3,
                  step_tol: float = 1e-8, cost_tol: float = 1e-12,
                  max_iterations: int = 100,
                  accept_rms: float = 100.0) -> HeadPose:
    """Fit the model pose by damped Gauss-Newton on reprojection error."""
    names = tuple(n for n in model.names if n in obs.landmarks)
    if len(names) < 6:
        raise DegenerateConfiguration(
            f"need >= 6 aligned landmarks, got {len(names)}")
    sub = model.subset(names)
    observed = obs.array_for(names)
    params0 = np.asarray(init, dtype=np.float64).copy() if init is not None \
        else _initial_params(sub, obs, k)
    params, cost = _lm_minimize(params0, sub.points, observed, k,
                                lambda_init, step_tol, cost_tol,
                                max_iterations)
    if np.sqrt(cost / len(names)) > 3.0 and init is None:
        for yaw, pitch in _RESTART_ANGLES:
            alt = params0.copy()
            rot = rotation_from_euler(yaw, pitch, 0.0)
            theta = np.arccos(np.clip((np.trace(rot) - 1) / 2, -1.0, 1.0))
            axis = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0],
                             rot[1, 0] - rot[0, 1]])
            norm = np.linalg.norm(axis)
            alt[:3] = theta * axis / norm if norm > 1e-12 else 0.0
            cand, cand_cost = _lm_minimize(alt, sub.points, observed, k,
                                           lambda_init, step_tol, cost_tol,
                                           max_iterations)
            if cand_cost < cost:
                params, cost = cand, cand_cost
            if np.sqrt(cost / len(names)) <= 3.0:
                break
    rms = float(np.sqrt(cost / len(names)))
    if rms > accept_rms:
        raise NoConvergence(f"rms {rms:.2f} px above accept bound {accept_rms}")
    rot = rodrigues(params[:3])
    yaw, pitch, roll = euler_from_rotation(rot)
    return HeadPose(rot, params[3:6].copy(), yaw, pitch, roll, rms)


def rotation_from_euler(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """R = Ry(yaw) Rx(pitch) Rz(roll), angles in degrees."""
    a, b, c = np.radians([yaw, pitch, roll])
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    ry = np.array([[ca, 0, sa], [0, 1, 0], [-sa, 0, ca]])
    rx = np.array([[1, 0, 0], [0, cb, -sb], [0, sb, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return ry @ rx @ rz


def euler_from_rotation(rot: np.ndarray):
    """Decompose R = Ry(yaw) Rx(pitch) Rz(roll); degrees.

    yaw in (-180, 180], pitch in [-90, 90], roll in (-180, 180].
    At gimbal lock (|pitch| = 90) roll is fixed to 0 by convention.
    """
    rot = np.asarray(rot, dtype=np.float64)
    sb = -rot[1, 2]
    sb = float(np.clip(sb, -1.0, 1.0))
    pitch = np.degrees(np.arcsin(sb))
    cb = np.sqrt(max(0.0, 1.0 - sb * sb))
    if cb < 1e-12:
        roll = 0.0
        if sb > 0:
            yaw = np.degrees(np.arctan2(rot[0, 1], rot[0, 0]))
        else:
            yaw = np.degrees(np.arctan2(-rot[0, 1], rot[0, 0]))
    else:
        yaw = np.degrees(np.arctan2(rot[0, 2], rot[2, 2]))
        roll = np.degrees(np.arctan2(rot[1, 0], rot[1, 1]))
    if yaw <= -180.0:
        yaw += 360.0
    if roll <= -180.0:
        roll += 360.0
    return float(yaw), float(pitch), float(roll)


def is_attending(pose: HeadPose, cone_deg: float = 15.0) -> bool:
    """Facing test: combined yaw/pitch deviation inside the cone; roll ignored."""
    return float(np.hypot(pose.yaw, pose.pitch)) <= cone_deg


def project_model(model: FaceModel3D, rotation: np.ndarray,
                  translation: np.ndarray, k: CameraIntrinsics) -> dict:
    """Pixel positions of all model landmarks under a model-to-camera pose."""
    cam = model.points @ np.asarray(rotation).T + np.asarray(translation)
    if np.any(cam[:, 2] <= 1e-9):
        raise PointBehindCamera("model point at non-positive camera depth")
    u = k.cx + k.fx * cam[:, 0] / cam[:, 2]
    v = k.cy + k.fy * cam[:, 1] / cam[:, 2]
    return {n: (float(u[i]), float(v[i])) for i, n in enumerate(model.names)}
