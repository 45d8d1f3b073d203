"""Deterministic CPU raycaster for the two-object room scenes.

Per-pixel rays are cast against the room box (flat-gray floor, walls and
ceiling, one distinct shade per face) and against each object's cube set via
a vectorized 3D DDA voxel traversal in the object's local frame.  Objects are
shaded white with a single fixed directional light plus an ambient term, so
every object pixel is strictly brighter than any background pixel.
No sampling, no anti-aliasing: identical inputs produce identical bytes.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

# Flat shades for the six room faces: x-, x+, floor, ceiling, z-, z+.
FACE_SHADES = np.array([0.24, 0.30, 0.18, 0.40, 0.34, 0.38], dtype=np.float32)

# Object shading: ambient + diffuse * max(0, n.L).  The minimum object shade
# (0.45) stays above every background shade (max 0.40), which makes
# object-pixel counting trivial for tests and analysis tools.
OBJECT_AMBIENT = 0.45
OBJECT_DIFFUSE = 0.55
OBJECT_PIXEL_THRESHOLD = 110  # uint8; strictly between 0.40*255 and 0.45*255

LIGHT_DIR = np.array([0.4, 0.7, -0.35])
LIGHT_DIR = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)


class RenderError(ValueError):
    pass


@dataclass
class Camera:
    """Pinhole camera; yaw/pitch in degrees, fov is the horizontal field of view.

    At pitch = yaw = 0 the optical axis points along +z; positive pitch looks
    up, positive yaw turns toward +x.
    """

    position: np.ndarray
    pitch: float
    yaw: float
    width: int
    height: int
    fov: float = 60.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        if not (10.0 < self.fov < 120.0):
            raise RenderError(f"fov {self.fov} outside (10, 120)")
        if not (-89.0 <= self.pitch <= 89.0):
            raise RenderError(f"pitch {self.pitch} outside [-89, 89]")
        if self.width <= 0 or self.height <= 0:
            raise RenderError("zero-area image")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward) unit vectors in world space."""
        p = np.radians(self.pitch)
        y = np.radians(self.yaw)
        forward = np.array([np.sin(y) * np.cos(p), np.sin(p), np.cos(y) * np.cos(p)])
        right = np.array([np.cos(y), 0.0, -np.sin(y)])
        up = np.cross(forward, right)
        return right, up, forward


def look_at(position, target) -> tuple[float, float]:
    """Pitch/yaw (degrees) aiming the optical axis at target from position."""
    d = np.asarray(target, dtype=np.float64) - np.asarray(position, dtype=np.float64)
    if np.allclose(d, 0.0):
        raise RenderError("camera position and target coincide")
    yaw = np.degrees(np.arctan2(d[0], d[2]))
    pitch = np.degrees(np.arctan2(d[1], np.hypot(d[0], d[2])))
    return float(np.clip(pitch, -89.0, 89.0)), float(yaw)


@dataclass
class PlacedObject:
    """A cube set posed in the world.

    Local cell coordinates u live in [0, extent]; a point converts to world
    space as ``center + rot @ ((u - extent/2) * cube_side)``.
    """

    occupancy: np.ndarray  # bool, shape = extent
    rot: np.ndarray  # 3x3, object-to-world
    center: np.ndarray  # 3, world meters
    cube_side: float

    @classmethod
    def from_cells(cls, cells, rot, center, cube_side) -> "PlacedObject":
        arr = np.asarray(list(cells), dtype=np.int64)
        extent = arr.max(axis=0) + 1
        occ = np.zeros(tuple(extent), dtype=bool)
        occ[arr[:, 0], arr[:, 1], arr[:, 2]] = True
        return cls(occ, np.asarray(rot, dtype=np.float64), np.asarray(center, dtype=np.float64), float(cube_side))

    def bounding_radius(self) -> float:
        half = np.asarray(self.occupancy.shape, dtype=np.float64) / 2.0
        return float(np.linalg.norm(half)) * self.cube_side


@dataclass
class Scene:
    room_size: np.ndarray  # (width, height, depth): x in [-w/2, w/2], y in [0, h], z in [0, d]
    objects: list[PlacedObject] = field(default_factory=list)
    light_dir: np.ndarray = field(default_factory=lambda: LIGHT_DIR.copy())


_ray_grid_cache: dict[tuple[int, int, float], np.ndarray] = {}


def _camera_ray_grid(width: int, height: int, fov: float) -> np.ndarray:
    """(H*W, 3) unit directions in camera space, row-major pixel order."""
    key = (width, height, fov)
    grid = _ray_grid_cache.get(key)
    if grid is None:
        t = np.tan(np.radians(fov) / 2.0)
        aspect = height / width
        u = (np.arange(width) + 0.5) / width * 2.0 - 1.0
        v = 1.0 - (np.arange(height) + 0.5) / height * 2.0
        uu, vv = np.meshgrid(u * t, v * t * aspect)
        dirs = np.stack([uu, vv, np.ones_like(uu)], axis=-1).reshape(-1, 3)
        grid = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        _ray_grid_cache[key] = grid
    return grid


def _room_hits(origin, dirs, room_size):
    """Exit parameter and face shade for rays cast from inside the room box."""
    w, h, d = room_size
    lo = np.array([-w / 2.0, 0.0, 0.0])
    hi = np.array([w / 2.0, h, d])
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(dirs > 0, hi, lo)
        t_ax = (bound - origin) / dirs
    t_ax[~np.isfinite(t_ax)] = np.inf
    axis = np.argmin(t_ax, axis=1)
    t = t_ax[np.arange(len(dirs)), axis]
    face = axis * 2 + (dirs[np.arange(len(dirs)), axis] > 0)
    return t, FACE_SHADES[face]


def _object_hits(origin, dirs, obj: PlacedObject, best_t, light_dir):
    """Nearest-hit t and Lambertian shade against one object via DDA.

    Returns (hit_mask, t, shade) where entries are valid only under hit_mask.
    Voxels are visited in strictly nondecreasing ray-parameter order.
    """
    ext = np.asarray(obj.occupancy.shape, dtype=np.float64)
    half = ext / 2.0
    rot_t = obj.rot.T
    o_u = rot_t @ (origin - obj.center) / obj.cube_side + half
    d_u = dirs @ obj.rot / obj.cube_side  # row-vectors: rot^T applied to each dir

    n = len(dirs)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d_u
    t_lo = (0.0 - o_u) * inv
    t_hi = (ext - o_u) * inv
    t_near = np.minimum(t_lo, t_hi)
    t_far = np.maximum(t_lo, t_hi)
    # Degenerate axes (d == 0): inside the slab iff 0 <= o_u < ext.
    zero = d_u == 0.0
    inside_slab = (o_u >= 0.0) & (o_u <= ext)
    t_near[zero] = -np.inf
    t_far[zero] = np.inf
    t_far[zero & ~inside_slab] = -np.inf

    t0 = t_near.max(axis=1)
    entry_axis = t_near.argmax(axis=1)
    t1 = t_far.min(axis=1)
    t_start = np.maximum(t0, 0.0)
    cand = (t1 > t_start + 1e-12) & (t_start < best_t)
    idx = np.nonzero(cand)[0]
    hit_mask = np.zeros(n, dtype=bool)
    hit_t = np.full(n, np.inf)
    hit_shade = np.zeros(n, dtype=np.float32)
    if len(idx) == 0:
        return hit_mask, hit_t, hit_shade

    d_a = d_u[idx]
    t_start_a, t1_a = t_start[idx], np.minimum(t1[idx], best_t[idx])
    p = o_u + d_a * (t_start_a + 1e-9)[:, None]
    voxel = np.clip(np.floor(p).astype(np.int64), 0, (ext - 1).astype(np.int64))
    step = np.sign(d_a).astype(np.int64)
    with np.errstate(divide="ignore"):
        t_delta = np.abs(inv[idx])
    next_bound = voxel + (step > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_max = (next_bound - o_u) * inv[idx]
    t_max[d_a == 0.0] = np.inf
    t_enter = t_start_a.copy()
    axis_enter = entry_axis[idx].copy()
    # Rays starting inside the box have no entry face; fall back to the
    # dominant direction axis for the normal (camera inside the bbox).
    started_inside = t0[idx] < 0.0
    axis_enter[started_inside] = np.argmax(np.abs(d_a[started_inside]), axis=1)

    active = np.arange(len(idx))
    occ = obj.occupancy
    light_local = rot_t @ np.asarray(light_dir)
    ext_i = np.asarray(obj.occupancy.shape, dtype=np.int64)
    while len(active):
        v = voxel[active]
        hits = occ[v[:, 0], v[:, 1], v[:, 2]]
        if hits.any():
            h = active[hits]
            gi = idx[h]
            hit_mask[gi] = True
            hit_t[gi] = t_enter[h]
            # Normal in local frame: opposite the step direction on the entry axis.
            ax = axis_enter[h]
            sgn = -step[h, ax].astype(np.float64)
            lam = np.maximum(0.0, sgn * light_local[ax])
            hit_shade[gi] = (OBJECT_AMBIENT + OBJECT_DIFFUSE * lam).astype(np.float32)
            active = active[~hits]
            if not len(active):
                break
        a = np.argmin(t_max[active], axis=1)
        rows = active
        t_enter[rows] = t_max[rows, a]
        axis_enter[rows] = a
        voxel[rows, a] += step[rows, a]
        t_max[rows, a] += t_delta[rows, a]
        out = (voxel[rows, a] < 0) | (voxel[rows, a] >= ext_i[a]) | (t_enter[rows] > t1_a[rows])
        active = rows[~out]
    return hit_mask, hit_t, hit_shade


def render(scene: Scene, camera: Camera) -> np.ndarray:
    """RGBA uint8 frame of shape (height, width, 4), alpha 255 everywhere."""
    dirs_cam = _camera_ray_grid(camera.width, camera.height, camera.fov)
    right, up, forward = camera.basis()
    basis = np.stack([right, up, forward], axis=0)  # rows
    dirs = dirs_cam @ basis

    t_best, shade = _room_hits(camera.position, dirs, scene.room_size)
    for obj in scene.objects:
        mask, t_obj, s_obj = _object_hits(camera.position, dirs, obj, t_best, scene.light_dir)
        closer = mask & (t_obj < t_best)
        t_best = np.where(closer, t_obj, t_best)
        shade = np.where(closer, s_obj, shade)

    gray = np.clip(shade * 255.0, 0, 255).astype(np.uint8)
    img = np.empty((camera.height, camera.width, 4), dtype=np.uint8)
    img[..., 0] = img[..., 1] = img[..., 2] = gray.reshape(camera.height, camera.width)
    img[..., 3] = 255
    return img


def count_object_pixels(frame: np.ndarray) -> int:
    """Pixels shaded as object surface (strictly brighter than any background)."""
    return int((frame[..., 0] >= OBJECT_PIXEL_THRESHOLD).sum())


def frame_to_png_bytes(frame: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()
