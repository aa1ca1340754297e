"""Deterministic micro-frame event simulator with ground truth.

``Simulator`` advances in stream time and can take a camera-frame
acceleration between calls, which is how the closed-loop runs perturb the
trajectory. ``simulate`` is the open-loop one-shot wrapper.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from ..detection import RobotKinematicState
from ..events import EVENT_DTYPE, empty_events
from .render import BOX, OB_COLS, SPHERE, emit_kernel, render_kernel
from .script import SceneScript

LABEL_BG = -1
LABEL_NOISE = -2

GT_DTYPE = np.dtype([
    ("t", "<i8"), ("obj", "<i4"), ("cx", "<f8"), ("cy", "<f8"),
    ("xmin", "<i4"), ("ymin", "<i4"), ("xmax", "<i4"), ("ymax", "<i4"),
    ("z", "<f8"), ("visible", "?"), ("dir", "<f8"), ("isv", "?"), ("truncated", "?"),
])


def pitch_rotation(pitch: float) -> np.ndarray:
    """Camera-to-world rotation for a nose-up positive pitch about the x axis."""
    c, s = math.cos(pitch), math.sin(pitch)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


@dataclass(frozen=True)
class CameraPose:
    position: np.ndarray
    rotation: np.ndarray   # camera -> world


def project(point, pose: CameraPose, geometry) -> tuple[float, float] | None:
    """Pinhole projection of a world point; None if behind the camera or off-sensor."""
    pc = pose.rotation.T @ (np.asarray(point, dtype=float) - pose.position)
    if pc[2] <= 0:
        return None
    u = geometry.cx + geometry.lam * pc[0] / pc[2]
    v = geometry.cy + geometry.lam * pc[1] / pc[2]
    if not (-0.5 <= u < geometry.width - 0.5 and -0.5 <= v < geometry.height - 0.5):
        return None
    return float(u), float(v)


def _project_unbounded(point, pose: CameraPose, geometry):
    pc = pose.rotation.T @ (np.asarray(point, dtype=float) - pose.position)
    if pc[2] <= 1e-6:
        return None, pc[2]
    return (geometry.cx + geometry.lam * pc[0] / pc[2],
            geometry.cy + geometry.lam * pc[1] / pc[2]), pc[2]


def nominal_state(script: SceneScript, t: float) -> RobotKinematicState:
    """Robot kinematic state on the unperturbed trajectory at time ``t`` (s)."""
    cs = script.camera
    rot = pitch_rotation(cs.pitch(t))
    v_body = rot.T @ np.array([0.0, 0.0, cs.v_z])
    return RobotKinematicState(v_z=float(v_body[2]), omega_x=cs.pitch_rate_at(t),
                               attitude=(0.0, cs.pitch(t), 0.0),
                               v_body=tuple(float(v) for v in v_body))


def box_sphere_distance(center, box_center, half) -> float:
    d = np.maximum(np.abs(np.asarray(center) - np.asarray(box_center)) - np.asarray(half), 0.0)
    return float(np.sqrt((d * d).sum()))


def safety_box(cam_pos, safety):
    """Centre and half extents of the robot safety box (camera at its front face)."""
    c = np.array([cam_pos[0], cam_pos[1], cam_pos[2] - safety.length / 2.0])
    return c, np.array([safety.W, safety.H, safety.length / 2.0])


def intersects(cam_pos, obstacle_pos, obstacle_radius, safety, eps=1e-9) -> bool:
    c, half = safety_box(cam_pos, safety)
    return box_sphere_distance(obstacle_pos, c, half) <= obstacle_radius + safety.b + eps


def isv_trace(script: SceneScript) -> np.ndarray:
    """Per-frame flag: safety box on the unperturbed trajectory meets some R' sphere."""
    n = script.n_frames + 1
    out = np.zeros(n, dtype=bool)
    for k in range(n):
        t = k * script.micro_step * 1e-6
        cam = script.camera.position_at(t)
        out[k] = any(intersects(cam, ob.position_at(t), ob.radius, script.safety)
                     for ob in script.obstacles)
    return out


def make_texture(script: SceneScript) -> tuple[np.ndarray, float, float, float]:
    bg = script.background
    rng = np.random.default_rng([script.seed, 7])
    n = int(round(bg.extent / bg.texel))
    white = rng.standard_normal((n, n))
    tex = gaussian_filter(white, sigma=bg.feature_size / bg.texel, mode="wrap")
    fine = gaussian_filter(rng.standard_normal((n, n)), sigma=0.3 * bg.feature_size / bg.texel,
                           mode="wrap")
    tex = tex / tex.std() + 0.35 * fine / fine.std()
    tex *= bg.contrast / tex.std()
    half = bg.extent / 2.0
    return np.ascontiguousarray(tex), -half, -half, bg.texel


@dataclass
class SimChunk:
    events: np.ndarray
    labels: np.ndarray          # obstacle index, LABEL_BG or LABEL_NOISE per event
    ground_truth: np.ndarray    # GT_DTYPE rows, one per obstacle per frame
    collided: bool = False      # safety box met an R' sphere on the actual trajectory


class Simulator:
    def __init__(self, script: SceneScript):
        self.script = script
        g = script.geometry
        self.geometry = g
        self.tex, self.tex_x0, self.tex_y0, self.texel = make_texture(script)
        self.wall_z = script.camera.position[2] + script.background.depth
        self.rng = np.random.default_rng([script.seed, 11])
        self.frame = 0
        self.dp = np.zeros(3)        # trajectory perturbation (world), m
        self.dv = np.zeros(3)        # perturbation velocity, m/s
        self.L_prev = np.empty((g.height, g.width))
        self.L_new = np.empty((g.height, g.width))
        self.lab_prev = np.empty((g.height, g.width), dtype=np.int64)
        self.lab_new = np.empty((g.height, g.width), dtype=np.int64)
        self.bboxes = np.zeros((len(script.obstacles), 4), dtype=np.int64)
        self._alloc(g.width * g.height * 4)
        self.isv_nominal = isv_trace(script)
        self.collided = False
        self._render(0, self.L_prev, self.lab_prev)
        self.L_ref = self.L_prev.copy()

    @property
    def t_us(self) -> int:
        return self.frame * self.script.micro_step

    def pose(self, t: float) -> CameraPose:
        cam = np.array(self.script.camera.position_at(t)) + self.dp
        return CameraPose(cam, pitch_rotation(self.script.camera.pitch(t)))

    def robot_state(self):
        t = self.t_us * 1e-6
        cs = self.script.camera
        rot = pitch_rotation(cs.pitch(t))
        v_world = np.array([0.0, 0.0, cs.v_z]) + self.dv
        v_body = rot.T @ v_world
        return RobotKinematicState(v_z=float(v_body[2]), omega_x=cs.pitch_rate_at(t),
                                   attitude=(0.0, cs.pitch(t), 0.0), v_body=tuple(v_body))

    def perturbation_state(self):
        """State of the deviation from the nominal path, as seen by the surrogate dynamics.

        The nominal flight is assumed to be held by the baseline controller, so
        the surrogate only acts on the commanded deviation: its velocity in the
        camera frame, with zero attitude offset.
        """
        rot = pitch_rotation(self.script.camera.pitch(self.t_us * 1e-6))
        v = rot.T @ self.dv
        return RobotKinematicState(v_z=float(v[2]), v_body=tuple(float(a) for a in v))

    def _obstacle_rows(self, t: float, pose: CameraPose):
        g = self.geometry
        obs = self.script.obstacles
        rows = np.zeros((len(obs), OB_COLS))
        rects = np.zeros((len(obs), 4), dtype=np.int64)
        rects[:, 0] = 1
        rects[:, 2] = 0   # empty rectangle by default
        dist = []
        for k, ob in enumerate(obs):
            p = ob.position_at(t)
            rows[k, 0] = SPHERE if ob.shape == "sphere" else BOX
            rows[k, 1:4] = p
            if ob.shape == "sphere":
                rows[k, 4] = ob.size[0]
            else:
                rows[k, 4:7] = np.asarray(ob.size) / 2.0
            rows[k, 7] = ob.albedo
            rows[k, 8] = ob.texture
            uv, zc = _project_unbounded(p, pose, g)
            dist.append(-float(np.linalg.norm(np.asarray(p) - pose.position)))
            if uv is None or zc <= ob.radius:
                if zc > -ob.radius:
                    rects[k] = (0, 0, g.width - 1, g.height - 1)
                continue
            r_px = g.lam * ob.radius / (zc - ob.radius * 0.999) * 1.5 + 3
            x0 = max(int(math.floor(uv[0] - r_px)), 0)
            x1 = min(int(math.ceil(uv[0] + r_px)), g.width - 1)
            y0 = max(int(math.floor(uv[1] - r_px)), 0)
            y1 = min(int(math.ceil(uv[1] + r_px)), g.height - 1)
            if x0 <= x1 and y0 <= y1:
                rects[k] = (x0, y0, x1, y1)
        order = np.argsort(dist, kind="stable")   # far to near
        return rows[order], rects[order], order

    def _render(self, frame: int, L, lab):
        g = self.geometry
        t = frame * self.script.micro_step * 1e-6
        pose = self.pose(t)
        rows, rects, order = self._obstacle_rows(t, pose)
        bb = np.zeros((len(order), 4), dtype=np.int64)
        render_kernel(L, lab, pose.rotation, pose.position, g.lam, g.cx, g.cy, self.wall_z,
                      self.tex, self.tex_x0, self.tex_y0, self.texel, rows, rects, bb)
        if len(order):
            # kernel labels are in draw order; map back to script indices
            remap = np.asarray(order, dtype=np.int64)
            mask = lab >= 0
            lab[mask] = remap[lab[mask]]
            self.bboxes[order] = bb
        return pose

    def _ground_truth(self, frame: int, pose: CameraPose) -> np.ndarray:
        sc = self.script
        g = self.geometry
        t = frame * sc.micro_step * 1e-6
        h = sc.micro_step * 1e-6
        rows = np.zeros(len(sc.obstacles), dtype=GT_DTYPE)
        isv = bool(self.isv_nominal[frame]) if frame < len(self.isv_nominal) else False
        for k, ob in enumerate(sc.obstacles):
            p = ob.position_at(t)
            uv, zc = _project_unbounded(p, pose, g)
            bb = self.bboxes[k]
            # visible: silhouette on the sensor and projected centre inside the image
            visible = bool(bb[2] >= 0 and zc > 0 and uv is not None
                           and 0 <= uv[0] <= g.width - 1 and 0 <= uv[1] <= g.height - 1)
            cx, cy = uv if uv is not None else (math.nan, math.nan)
            a, _ = _project_unbounded(ob.position_at(t - h), self.pose(t - h), g)
            b, _ = _project_unbounded(ob.position_at(t + h), self.pose(t + h), g)
            direction = math.atan2(b[1] - a[1], b[0] - a[0]) if a is not None and b is not None else math.nan
            # silhouette cut by the image border: only part of the object is in view
            truncated = bool(bb[2] >= 0 and (bb[0] <= 0 or bb[1] <= 0 or bb[2] >= g.width - 1
                                             or bb[3] >= g.height - 1))
            rows[k] = (frame * sc.micro_step, k, cx, cy, bb[0], bb[1], bb[2], bb[3],
                       zc, visible, direction, isv, truncated)
        return rows

    def _alloc(self, cap: int):
        self._buf_ts = np.empty(cap, dtype=np.int64)
        self._buf_x = np.empty(cap, dtype=np.int64)
        self._buf_y = np.empty(cap, dtype=np.int64)
        self._buf_p = np.empty(cap, dtype=np.int64)
        self._buf_l = np.empty(cap, dtype=np.int64)

    def _emit(self, t_prev: int, t_cur: int) -> int:
        """Run the emission kernel, growing the buffers when a frame overflows them."""
        ref = self.L_ref.copy()
        while True:
            n = emit_kernel(self.L_prev, self.L_new, self.L_ref, self.lab_prev, self.lab_new,
                            t_prev, t_cur, self.script.contrast_threshold, self._buf_ts,
                            self._buf_x, self._buf_y, self._buf_p, self._buf_l)
            if n >= 0:
                return n
            self.L_ref[...] = ref
            self._alloc(2 * len(self._buf_ts))

    def _noise(self, t_prev: int, t_cur: int):
        sc = self.script
        g = self.geometry
        lam = sc.noise_rate * g.width * g.height * (t_cur - t_prev) * 1e-6
        n = int(self.rng.poisson(lam)) if lam > 0 else 0
        ts = t_prev + 1 + self.rng.integers(0, t_cur - t_prev, n)
        xs = self.rng.integers(0, g.width, n)
        ys = self.rng.integers(0, g.height, n)
        ps = self.rng.choice(np.array([-1, 1]), n)
        return ts, xs, ys, ps

    def advance(self, t_target_us: int, accel=(0.0, 0.0, 0.0)) -> SimChunk:
        """Render frames up to ``t_target_us`` with a constant camera-frame acceleration."""
        sc = self.script
        chunks_ev, chunks_lab, gts = [], [], []
        accel = np.asarray(accel, dtype=float)
        dt = sc.micro_step * 1e-6
        last = sc.n_frames
        while self.frame < last and (self.frame + 1) * sc.micro_step <= t_target_us:
            t_prev = self.t_us
            rot = pitch_rotation(sc.camera.pitch(t_prev * 1e-6))
            self.dv += (rot @ accel) * dt
            self.dp += self.dv * dt
            self.frame += 1
            t_cur = self.t_us
            pose = self._render(self.frame, self.L_new, self.lab_new)
            n = self._emit(t_prev, t_cur)
            nts, nx, ny, npol = self._noise(t_prev, t_cur)
            ev = np.empty(n + len(nts), dtype=EVENT_DTYPE)
            ev["ts"][:n] = self._buf_ts[:n]
            ev["x"][:n] = self._buf_x[:n]
            ev["y"][:n] = self._buf_y[:n]
            ev["p"][:n] = self._buf_p[:n]
            ev["ts"][n:] = nts
            ev["x"][n:] = nx
            ev["y"][n:] = ny
            ev["p"][n:] = npol
            lab = np.empty(len(ev), dtype=np.int32)
            lab[:n] = self._buf_l[:n]
            lab[n:] = LABEL_NOISE
            order = np.argsort(ev["ts"], kind="stable")
            chunks_ev.append(ev[order])
            chunks_lab.append(lab[order])
            gts.append(self._ground_truth(self.frame, pose))
            for ob in sc.obstacles:
                t = t_cur * 1e-6
                if intersects(pose.position, ob.position_at(t), ob.radius, sc.safety):
                    self.collided = True
            self.L_prev, self.L_new = self.L_new, self.L_prev
            self.lab_prev, self.lab_new = self.lab_new, self.lab_prev
        events = np.concatenate(chunks_ev) if chunks_ev else empty_events()
        labels = np.concatenate(chunks_lab) if chunks_lab else np.empty(0, dtype=np.int32)
        gt = np.concatenate(gts) if gts else np.empty(0, dtype=GT_DTYPE)
        return SimChunk(events, labels, gt, self.collided)

    @property
    def done(self) -> bool:
        return self.frame >= self.script.n_frames


def simulate(script: SceneScript) -> SimChunk:
    """Open-loop run of the whole script: events, per-event labels and ground truth."""
    sim = Simulator(script)
    return sim.advance(script.n_frames * script.micro_step)
