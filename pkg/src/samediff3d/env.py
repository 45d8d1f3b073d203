"""The simulated 3m x 4m room: viewpoint grids, episode mechanics, rewards.

Two placed objects sit ``object_separation`` apart at ``object_height``,
centered in the room and separated along the width (x) axis; object A is on
the negative-x side.  Discrete agents teleport between grid viewpoints and
always gaze at one of the two objects, so penalties are structurally
impossible there; continuous agents integrate clamped pose deltas and are
penalized -0.01 for gazing at neither object and -0.01 for stepping out of
bounds (stacking to -0.02).  Episodes end with an answer (+1 correct, -1
incorrect) or time out after ``max_steps_per_episode`` steps (reward 0).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .objects import CUBE_SIDE, Label, ROTATIONS, Trial
from .render import Camera, PlacedObject, Scene, look_at, render

SUPPORTED_GRID_SIZES = (6, 12, 24, 48, 72, 96)

# Viewpoint ring semi-axes (x, z) in meters, chosen to keep every location
# inside the walls with margin and clear of both objects.
OUTER_RING = (1.30, 1.80)
INNER_RING = (1.00, 1.40)
MIN_OBJECT_CLEARANCE = 0.3  # to object centers

#: movement step bounds enforced by the continuous environment
MAX_TRANSLATION = 0.05  # meters per step
MAX_ROTATION = 5.0  # degrees per step

PENALTY = -0.01


class EnvError(RuntimeError):
    pass


class GazeTarget(Enum):
    A = 0
    B = 1


class Outcome(Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class ViewAction:
    location: int
    target: GazeTarget


@dataclass(frozen=True)
class AnswerAction:
    answer: Label


@dataclass(frozen=True)
class ContinuousAction:
    """Pose deltas (meters / degrees); the env clamps magnitudes itself."""

    dx: float = 0.0
    dy: float = 0.0
    dz: float = 0.0
    dpitch: float = 0.0
    dyaw: float = 0.0
    answer: Label | None = None


@dataclass(frozen=True)
class RoomConfig:
    width: float = 3.0
    depth: float = 4.0
    wall_height: float = 2.5
    object_separation: float = 1.2
    object_height: float = 1.5
    cube_side: float = CUBE_SIDE
    image_width: int = 64
    image_height: int = 64
    fov: float = 60.0
    max_steps_per_episode: int = 256
    history_len: int = 8

    def __post_init__(self):
        if min(self.width, self.depth, self.wall_height, self.object_separation,
               self.object_height, self.cube_side) <= 0:
            raise EnvError("room dimensions must be positive")
        if not (0 < self.image_width <= 512 and 0 < self.image_height <= 512):
            raise EnvError("image dimensions must be in (0, 512]")
        if self.max_steps_per_episode <= 0:
            raise EnvError("max_steps_per_episode must be positive")

    def object_center(self, target: GazeTarget) -> np.ndarray:
        x = self.object_separation / 2.0
        x = -x if target is GazeTarget.A else x
        return np.array([x, self.object_height, self.depth / 2.0])

    def pair_midpoint(self) -> np.ndarray:
        return np.array([0.0, self.object_height, self.depth / 2.0])

    def room_size(self) -> np.ndarray:
        return np.array([self.width, self.wall_height, self.depth])

    def fingerprint(self) -> tuple:
        return (self.width, self.depth, self.wall_height, self.object_separation,
                self.object_height, self.cube_side, self.image_width,
                self.image_height, self.fov)


@dataclass(frozen=True)
class ViewpointGrid:
    n_locations: int
    locations: np.ndarray  # (n, 3)
    ring_index: np.ndarray  # (n,) 0 = outer, 1 = inner
    height_tier: np.ndarray  # (n,) 0 = lower/only tier, 1 = upper

    @property
    def n_view_actions(self) -> int:
        return 2 * self.n_locations


def _ellipse_ring(a: float, b: float, count: int, height: float, zc: float) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(count) / count
    return np.stack([a * np.sin(theta), np.full(count, height), zc - b * np.cos(theta)], axis=1)


def build_grid(n: int, cfg: RoomConfig) -> ViewpointGrid:
    """Viewpoint layouts: one ring for 6/12/24, two concentric rings for
    48 (2x24) and 72 (2x36), and 96 = two rings of 24 at heights 1.2/1.8 m.
    Location 0 sits front-center (minimum z on the outer ring)."""
    if n not in SUPPORTED_GRID_SIZES:
        raise EnvError(f"unsupported grid size {n}; pick one of {SUPPORTED_GRID_SIZES}")
    zc = cfg.depth / 2.0
    eye = cfg.object_height
    rings: list[tuple[np.ndarray, int, int]] = []
    if n in (6, 12, 24):
        rings.append((_ellipse_ring(*OUTER_RING, n, eye, zc), 0, 0))
    elif n == 48:
        rings.append((_ellipse_ring(*OUTER_RING, 24, eye, zc), 0, 0))
        rings.append((_ellipse_ring(*INNER_RING, 24, eye, zc), 1, 0))
    elif n == 72:
        rings.append((_ellipse_ring(*OUTER_RING, 36, eye, zc), 0, 0))
        rings.append((_ellipse_ring(*INNER_RING, 36, eye, zc), 1, 0))
    else:  # 96
        for tier, h in enumerate((1.2, 1.8)):
            rings.append((_ellipse_ring(*OUTER_RING, 24, h, zc), 0, tier))
            rings.append((_ellipse_ring(*INNER_RING, 24, h, zc), 1, tier))
    locations = np.concatenate([r[0] for r in rings], axis=0)
    ring_index = np.concatenate([np.full(len(r[0]), r[1]) for r in rings])
    height_tier = np.concatenate([np.full(len(r[0]), r[2]) for r in rings])

    assert len(locations) == n
    if np.unique(np.round(locations, 9), axis=0).shape[0] != n:
        raise EnvError("grid locations are not pairwise distinct")
    half_w = cfg.width / 2.0
    if (np.abs(locations[:, 0]) >= half_w).any() or (locations[:, 2] <= 0).any() \
            or (locations[:, 2] >= cfg.depth).any() or (locations[:, 1] >= cfg.wall_height).any():
        raise EnvError("grid location outside room bounds")
    for target in GazeTarget:
        d = np.linalg.norm(locations - cfg.object_center(target), axis=1)
        if (d < MIN_OBJECT_CLEARANCE).any():
            raise EnvError("grid location too close to an object")
    return ViewpointGrid(n, locations, ring_index, height_tier)


# --- action index encoding (policy-facing) ---------------------------------
#
# Discrete env with n locations: indices [0, 2n) are view actions
# (location = i // 2, target = A if i even else B); 2n answers Same and
# 2n + 1 answers Different.


def index_to_action(index: int, n_locations: int):
    if 0 <= index < 2 * n_locations:
        return ViewAction(index // 2, GazeTarget.A if index % 2 == 0 else GazeTarget.B)
    if index == 2 * n_locations:
        return AnswerAction(Label.SAME)
    if index == 2 * n_locations + 1:
        return AnswerAction(Label.DIFFERENT)
    raise EnvError(f"action index {index} out of range")


def action_to_index(action, n_locations: int) -> int:
    if isinstance(action, ViewAction):
        if not 0 <= action.location < n_locations:
            raise EnvError(f"location {action.location} out of range")
        return 2 * action.location + action.target.value
    if isinstance(action, AnswerAction):
        return 2 * n_locations + (0 if action.answer is Label.SAME else 1)
    raise EnvError(f"not a discrete action: {action!r}")


# Continuous control exposed to categorical policies as 12 motion primitives:
# +/- full translation step on each axis, +/- full rotation step on pitch and
# yaw, and the two answers.
CONTINUOUS_PRIMITIVES: tuple[ContinuousAction, ...] = (
    ContinuousAction(dx=MAX_TRANSLATION), ContinuousAction(dx=-MAX_TRANSLATION),
    ContinuousAction(dy=MAX_TRANSLATION), ContinuousAction(dy=-MAX_TRANSLATION),
    ContinuousAction(dz=MAX_TRANSLATION), ContinuousAction(dz=-MAX_TRANSLATION),
    ContinuousAction(dpitch=MAX_ROTATION), ContinuousAction(dpitch=-MAX_ROTATION),
    ContinuousAction(dyaw=MAX_ROTATION), ContinuousAction(dyaw=-MAX_ROTATION),
    ContinuousAction(answer=Label.SAME), ContinuousAction(answer=Label.DIFFERENT),
)


@dataclass
class Observation:
    frame: np.ndarray  # (H, W, 4) uint8
    history: np.ndarray  # float32, history_len * n_actions


@dataclass
class EnvState:
    trial: Trial
    position: np.ndarray
    pitch: float
    yaw: float
    step_count: int = 0
    action_history: tuple = ()  # last history_len action indices
    done: bool = False
    outcome: Outcome | None = None


class FrameCache:
    """Byte-budgeted LRU for rendered frames keyed by exact scene + camera."""

    def __init__(self, max_bytes: int = 1_500_000_000):
        self.max_bytes = int(max_bytes)
        self._store: OrderedDict = OrderedDict()
        self._bytes = 0
        self.hits = 0
        self.misses = 0

    def get(self, key):
        frame = self._store.get(key)
        if frame is None:
            self.misses += 1
            return None
        self._store.move_to_end(key)
        self.hits += 1
        return frame

    def put(self, key, frame: np.ndarray):
        if key in self._store:
            return
        self._store[key] = frame
        self._bytes += frame.nbytes
        while self._bytes > self.max_bytes and self._store:
            _, old = self._store.popitem(last=False)
            self._bytes -= old.nbytes


GLOBAL_FRAME_CACHE = FrameCache()


def build_scene(trial: Trial, cfg: RoomConfig) -> Scene:
    rot_b = ROTATIONS[trial.rotation_index].astype(np.float64)
    obj_a = PlacedObject.from_cells(trial.object_a.cells, np.eye(3),
                                    cfg.object_center(GazeTarget.A), cfg.cube_side)
    obj_b = PlacedObject.from_cells(trial.object_b.cells, rot_b,
                                    cfg.object_center(GazeTarget.B), cfg.cube_side)
    return Scene(room_size=cfg.room_size(), objects=[obj_a, obj_b])


def _scene_key(trial: Trial, cfg: RoomConfig) -> tuple:
    return (trial.object_a.cells, trial.object_b.cells, trial.rotation_index, cfg.fingerprint())


class _EnvBase:
    """Shared episode bookkeeping for the discrete and continuous variants."""

    def __init__(self, cfg: RoomConfig, cache: FrameCache | None):
        self.cfg = cfg
        self.cache = cache
        self.state: EnvState | None = None
        self.scene: Scene | None = None
        self.episode_actions: list = []
        self._scene_key = None
        self._frame: np.ndarray | None = None

    @property
    def n_actions(self) -> int:
        raise NotImplementedError

    def _start(self, trial: Trial, position, pitch, yaw):
        self.scene = build_scene(trial, self.cfg)
        self._scene_key = _scene_key(trial, self.cfg)
        self.state = EnvState(trial=trial, position=np.asarray(position, dtype=np.float64),
                              pitch=float(pitch), yaw=float(yaw))
        self.episode_actions = []
        return self._observe(render_key=self._pose_key())

    def _pose_key(self):
        s = self.state
        return ("pose", round(float(s.position[0]), 9), round(float(s.position[1]), 9),
                round(float(s.position[2]), 9), round(s.pitch, 9), round(s.yaw, 9))

    def _render_frame(self, render_key) -> np.ndarray:
        key = (self._scene_key, render_key)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return cached
        cam = Camera(self.state.position.copy(), self.state.pitch, self.state.yaw,
                     self.cfg.image_width, self.cfg.image_height, self.cfg.fov)
        frame = render(self.scene, cam)
        if self.cache is not None:
            self.cache.put(key, frame)
        return frame

    def _observe(self, render_key=None) -> Observation:
        if render_key is not None:
            self._frame = self._render_frame(render_key)
        hist = np.zeros(self.cfg.history_len * self.n_actions, dtype=np.float32)
        n = self.n_actions
        for slot, a in enumerate(self.state.action_history):
            hist[slot * n + a] = 1.0
        return Observation(frame=self._frame, history=hist)

    def _record(self, action, index: int):
        self.episode_actions.append(action)
        hist = (self.state.action_history + (index,))[-self.cfg.history_len:]
        self.state.action_history = hist

    def _check_not_done(self):
        if self.state is None:
            raise EnvError("reset() must be called before step()")
        if self.state.done:
            raise EnvError("cannot step a finished episode")

    def _finish_or_timeout(self):
        s = self.state
        s.step_count += 1
        if not s.done and s.step_count >= self.cfg.max_steps_per_episode:
            s.done = True
            s.outcome = Outcome.TIMEOUT

    def _answer(self, answer: Label) -> float:
        s = self.state
        correct = answer is s.trial.label
        s.outcome = Outcome.CORRECT if correct else Outcome.INCORRECT
        s.done = True
        return 1.0 if correct else -1.0

    def metrics(self) -> dict:
        return episode_metrics(self.episode_actions, self.state.outcome if self.state else None)


class DiscreteEnv(_EnvBase):
    """Grid-viewpoint environment: teleport views plus the two answers."""

    def __init__(self, cfg: RoomConfig, grid: ViewpointGrid,
                 cache: FrameCache | None = GLOBAL_FRAME_CACHE):
        super().__init__(cfg, cache)
        self.grid = grid

    @property
    def n_actions(self) -> int:
        return 2 * self.grid.n_locations + 2

    def reset(self, trial: Trial) -> Observation:
        pos = self.grid.locations[0]
        pitch, yaw = look_at(pos, self.cfg.object_center(GazeTarget.A))
        return self._start(trial, pos, pitch, yaw)

    def step(self, action) -> tuple[Observation, float, bool, dict]:
        self._check_not_done()
        if isinstance(action, (int, np.integer)):
            action = index_to_action(int(action), self.grid.n_locations)
        index = action_to_index(action, self.grid.n_locations)
        s = self.state
        if isinstance(action, AnswerAction):
            reward = self._answer(action.answer)
            self._record(action, index)
            s.step_count += 1
            return self._observe(), reward, True, {"outcome": s.outcome}
        # View action: teleport and gaze at the chosen object; grid geometry
        # keeps these in bounds and on target, so the reward is exactly 0.
        s.position = self.grid.locations[action.location].copy()
        s.pitch, s.yaw = look_at(s.position, self.cfg.object_center(action.target))
        self._record(action, index)
        self._finish_or_timeout()
        obs = self._observe(render_key=("view", action.location, action.target.value))
        return obs, 0.0, s.done, {"outcome": s.outcome}


class ContinuousEnv(_EnvBase):
    """Free-motion environment with clamped per-step pose deltas."""

    def __init__(self, cfg: RoomConfig, cache: FrameCache | None = None):
        super().__init__(cfg, cache)

    @property
    def n_actions(self) -> int:
        return len(CONTINUOUS_PRIMITIVES)

    def reset(self, trial: Trial) -> Observation:
        pos = np.array([0.0, self.cfg.object_height, 0.3])
        pitch, yaw = look_at(pos, self.cfg.pair_midpoint())
        return self._start(trial, pos, pitch, yaw)

    def _gazing_at_an_object(self) -> bool:
        cam = Camera(self.state.position, self.state.pitch, self.state.yaw,
                     self.cfg.image_width, self.cfg.image_height, self.cfg.fov)
        _, _, forward = cam.basis()
        for obj in self.scene.objects:
            radius = obj.bounding_radius() * 1.1
            rel = obj.center - self.state.position
            t = rel @ forward
            if t <= 0:
                continue
            if np.linalg.norm(rel - t * forward) <= radius:
                return True
        return False

    def step(self, action) -> tuple[Observation, float, bool, dict]:
        self._check_not_done()
        if isinstance(action, (int, np.integer)):
            index = int(action)
            action = CONTINUOUS_PRIMITIVES[index]
        else:
            index = self._nearest_primitive(action)
        s = self.state
        if action.answer is not None:
            reward = self._answer(action.answer)
            self._record(action, index)
            s.step_count += 1
            return self._observe(), reward, True, {"outcome": s.outcome}

        d = np.clip([action.dx, action.dy, action.dz], -MAX_TRANSLATION, MAX_TRANSLATION)
        s.position = s.position + d
        s.pitch = float(np.clip(s.pitch + np.clip(action.dpitch, -MAX_ROTATION, MAX_ROTATION), -89.0, 89.0))
        s.yaw = float(s.yaw + np.clip(action.dyaw, -MAX_ROTATION, MAX_ROTATION))

        reward = 0.0
        lo = np.array([-self.cfg.width / 2 + 0.05, 0.1, 0.05])
        hi = np.array([self.cfg.width / 2 - 0.05, self.cfg.wall_height - 0.1, self.cfg.depth - 0.05])
        if (s.position < lo).any() or (s.position > hi).any():
            reward += PENALTY
            s.position = np.clip(s.position, lo, hi)
        if not self._gazing_at_an_object():
            reward += PENALTY

        self._record(action, index)
        self._finish_or_timeout()
        obs = self._observe(render_key=self._pose_key())
        return obs, reward, s.done, {"outcome": s.outcome}

    @staticmethod
    def _nearest_primitive(action: ContinuousAction) -> int:
        """History-encoding slot for a raw (non-primitive) action."""
        if action.answer is not None:
            return 10 if action.answer is Label.SAME else 11
        mags = [action.dx, -action.dx, action.dy, -action.dy, action.dz, -action.dz,
                action.dpitch / 100.0, -action.dpitch / 100.0,
                action.dyaw / 100.0, -action.dyaw / 100.0]
        return int(np.argmax(mags))


def episode_metrics(actions, outcome) -> dict:
    """Per-episode viewpoint statistics; requires a finished episode."""
    if outcome is None:
        raise EnvError("episode_metrics requires a finished episode")
    histogram: dict[int, int] = {}
    n_viewpoints = 0
    for a in actions:
        if isinstance(a, ViewAction):
            n_viewpoints += 1
            histogram[a.location] = histogram.get(a.location, 0) + 1
    return {
        "correct": outcome is Outcome.CORRECT,
        "n_viewpoints": n_viewpoints,
        "viewpoint_histogram": histogram,
    }


def dominant_viewpoint_share(histogram: dict[int, int]) -> float:
    """max(histogram) / sum(histogram); 0.0 for episodes without views."""
    total = sum(histogram.values())
    return max(histogram.values()) / total if total else 0.0
