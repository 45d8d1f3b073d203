"""Procedural block objects, the cube rotation group, congruence, and trials.

Objects are rigid assemblies of unit cubes ("polycubes") stored as integer
cell coordinates in a canonical pose (translated so the minimum corner sits
at the origin, cells sorted lexicographically).  Two objects are the "same"
iff one can be mapped onto the other by a proper rotation from the 24-element
rotation group of the cube; mirror images of chiral objects are different.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

Cell = tuple[int, int, int]

# World edge length of one cube, in meters.  Chosen so a 9-cube object spans
# roughly half a meter and covers a useful number of pixels at the default
# 64x64 training resolution from ring-distance viewpoints.
CUBE_SIDE = 0.12


class Difficulty(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


class Label(Enum):
    SAME = "same"
    DIFFERENT = "different"


#: cubes per object at each difficulty tier
CUBE_COUNTS = {Difficulty.EASY: 7, Difficulty.MEDIUM: 9, Difficulty.HARD: 11}

#: bounding-box cap (cells per axis) so objects keep clear of viewpoint rings
MAX_EXTENT = 5

#: relative-orientation values exercised by trials, in degrees
RO_VALUES = (0, 90, 180)


def _build_rotation_group() -> tuple[np.ndarray, ...]:
    """All 24 proper rotations of the cube as integer matrices.

    Generated by closure from quarter turns about x and z.  The identity is
    placed at index 0; the rest are ordered by their flattened entries so the
    indexing is stable across runs.
    """
    rx = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=np.int64)
    rz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], dtype=np.int64)
    seen = {tuple(np.eye(3, dtype=np.int64).ravel())}
    frontier = [np.eye(3, dtype=np.int64)]
    while frontier:
        m = frontier.pop()
        for g in (rx, rz):
            n = g @ m
            key = tuple(n.ravel())
            if key not in seen:
                seen.add(key)
                frontier.append(n)
    keys = sorted(seen)
    ident = tuple(np.eye(3, dtype=np.int64).ravel())
    keys.remove(ident)
    keys.insert(0, ident)
    mats = tuple(np.array(k, dtype=np.int64).reshape(3, 3) for k in keys)
    assert len(mats) == 24
    return mats


ROTATIONS: tuple[np.ndarray, ...] = _build_rotation_group()
_ROTATION_INDEX = {tuple(m.ravel()): i for i, m in enumerate(ROTATIONS)}


def rotation_index(matrix: np.ndarray) -> int:
    """Index of a group element, or KeyError if not one of the 24."""
    return _ROTATION_INDEX[tuple(np.asarray(matrix, dtype=np.int64).ravel())]


def relative_orientation(matrix: np.ndarray) -> int:
    """Rotation angle in degrees from trace(R) = 1 + 2 cos(theta)."""
    tr = int(np.trace(np.asarray(matrix, dtype=np.int64)))
    angle = {3: 0, 1: 90, 0: 120, -1: 180}.get(tr)
    if angle is None:
        raise ValueError(f"trace {tr} does not belong to the cube rotation group")
    return angle


def rotations_with_angle(deg: int) -> list[int]:
    """Indices of all group elements with the given rotation angle."""
    return [i for i, m in enumerate(ROTATIONS) if relative_orientation(m) == deg]


def canonicalize(cells) -> tuple[Cell, ...]:
    """Translate so the per-axis minimum is 0 and sort cells."""
    arr = np.asarray(sorted(set(map(tuple, cells))), dtype=np.int64)
    if arr.size == 0:
        raise ValueError("empty cell set")
    arr = arr - arr.min(axis=0)
    return tuple(map(tuple, sorted(map(tuple, arr.tolist()))))


def rotate_cells(cells, rot: np.ndarray) -> tuple[Cell, ...]:
    """Apply a group rotation to a cell set and re-canonicalize."""
    arr = np.asarray(list(cells), dtype=np.int64)
    return canonicalize((np.asarray(rot, dtype=np.int64) @ arr.T).T)


def mirror_cells(cells) -> tuple[Cell, ...]:
    """Reflect through the yz-plane and re-canonicalize."""
    arr = np.asarray(list(cells), dtype=np.int64)
    arr[:, 0] *= -1
    return canonicalize(arr)


def is_face_connected(cells) -> bool:
    cellset = set(map(tuple, cells))
    if not cellset:
        return False
    stack = [next(iter(cellset))]
    seen = {stack[0]}
    while stack:
        x, y, z = stack.pop()
        for dx, dy, dz in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
            nb = (x + dx, y + dy, z + dz)
            if nb in cellset and nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(cellset)


@dataclass(frozen=True)
class PolycubeObject:
    """A rigid unit-cube assembly in canonical pose."""

    id: int
    cells: tuple[Cell, ...]
    difficulty: Difficulty

    def __post_init__(self):
        canon = canonicalize(self.cells)
        if canon != tuple(self.cells):
            raise ValueError(f"object {self.id} is not in canonical pose")
        if len(set(self.cells)) != len(self.cells):
            raise ValueError(f"object {self.id} has duplicate cells")
        if not is_face_connected(self.cells):
            raise ValueError(f"object {self.id} is not face-connected")

    @property
    def n_cubes(self) -> int:
        return len(self.cells)

    def extent(self) -> np.ndarray:
        """Bounding-box size in cells (max corner + 1, since min corner is 0)."""
        return np.asarray(self.cells, dtype=np.int64).max(axis=0) + 1

    def circumradius(self) -> float:
        """Max distance (in meters) from the bbox center to any cube corner."""
        half = self.extent().astype(float) / 2.0
        corners = np.asarray(self.cells, dtype=float)  # min corner of each cube
        d = np.maximum(np.abs(corners - half), np.abs(corners + 1.0 - half))
        return float(np.sqrt((d**2).sum(axis=1).max())) * CUBE_SIDE

    def mirrored(self) -> "PolycubeObject":
        return PolycubeObject(self.id, mirror_cells(self.cells), self.difficulty)

    def rotated(self, rot_index: int) -> "PolycubeObject":
        return PolycubeObject(self.id, rotate_cells(self.cells, ROTATIONS[rot_index]), self.difficulty)


def congruence_check(a: PolycubeObject | tuple, b: PolycubeObject | tuple) -> bool:
    """True iff some proper rotation maps b's cells onto a's."""
    cells_a = a.cells if isinstance(a, PolycubeObject) else canonicalize(a)
    cells_b = b.cells if isinstance(b, PolycubeObject) else canonicalize(b)
    if len(cells_a) != len(cells_b):
        return False
    target = set(cells_a)
    arr_b = np.asarray(cells_b, dtype=np.int64)
    for rot in ROTATIONS:
        rotated = (rot @ arr_b.T).T
        rotated = rotated - rotated.min(axis=0)
        if set(map(tuple, rotated.tolist())) == target:
            return True
    return False


def is_chiral(obj: PolycubeObject) -> bool:
    return not congruence_check(obj, PolycubeObject(obj.id, mirror_cells(obj.cells), obj.difficulty))


class GenerationError(RuntimeError):
    """Raised when rejection sampling cannot satisfy the object-set constraints."""


_AXES = [np.array(v) for v in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))]


def _random_arm_polycube(n_cubes: int, rng: np.random.Generator) -> tuple[Cell, ...] | None:
    """One self-avoiding chain of straight runs (length 2-4) joined at right angles."""
    pos = np.zeros(3, dtype=np.int64)
    cells = [tuple(pos)]
    direction = _AXES[rng.integers(6)]
    while len(cells) < n_cubes:
        run = int(rng.integers(2, 5))
        run = min(run, n_cubes - len(cells) + 1)
        if run < 2:
            return None
        for _ in range(run - 1):
            pos = pos + direction
            cell = tuple(int(v) for v in pos)
            if cell in cells:
                return None  # self-intersection; reject the attempt
            cells.append(cell)
        perp = [a for a in _AXES if a @ direction == 0]
        direction = perp[rng.integers(len(perp))]
    return canonicalize(cells)


def generate_object_set(seed: int = 42, max_attempts: int = 20000) -> list[PolycubeObject]:
    """Twelve deterministic stimuli: 4 each at 7/9/11 cubes, all chiral,
    pairwise non-congruent."""
    rng = np.random.default_rng(seed)
    objects: list[PolycubeObject] = []
    next_id = 0
    for difficulty in (Difficulty.EASY, Difficulty.MEDIUM, Difficulty.HARD):
        accepted = 0
        attempts = 0
        while accepted < 4:
            attempts += 1
            if attempts > max_attempts:
                raise GenerationError(
                    f"could not build 4 {difficulty.value} objects in {max_attempts} attempts"
                )
            cells = _random_arm_polycube(CUBE_COUNTS[difficulty], rng)
            if cells is None:
                continue
            if max(np.asarray(cells).max(axis=0) + 1) > MAX_EXTENT:
                continue
            candidate = PolycubeObject(next_id, cells, difficulty)
            if not is_chiral(candidate):
                continue
            if any(congruence_check(o, candidate) for o in objects):
                continue
            objects.append(candidate)
            next_id += 1
            accepted += 1
    return objects


def object_set_to_json(objects: list[PolycubeObject]) -> str:
    doc = {
        "objects": [
            {"id": o.id, "difficulty": o.difficulty.value, "cells": [list(c) for c in o.cells]}
            for o in objects
        ]
    }
    return json.dumps(doc, indent=2)


def object_set_from_json(text: str) -> list[PolycubeObject]:
    doc = json.loads(text)
    return [
        PolycubeObject(
            int(entry["id"]),
            canonicalize([tuple(c) for c in entry["cells"]]),
            Difficulty(entry["difficulty"]),
        )
        for entry in doc["objects"]
    ]


@dataclass(frozen=True)
class Trial:
    """An ordered pair of placed objects plus ground truth.

    Object A is always placed with the identity pose; ``rotation_index``
    selects the group element posing object B, and its rotation angle is the
    trial's relative orientation.
    """

    object_a: PolycubeObject
    object_b: PolycubeObject
    rotation_index: int
    ro_deg: int
    label: Label
    difficulty: Difficulty
    b_mirrored: bool = False

    def __post_init__(self):
        if relative_orientation(ROTATIONS[self.rotation_index]) != self.ro_deg:
            raise ValueError("rotation_index angle does not match ro_deg")
        if self.ro_deg not in RO_VALUES:
            raise ValueError(f"unsupported relative orientation {self.ro_deg}")

    def descriptor(self) -> dict:
        """JSON-ready summary sufficient to reconstruct the trial."""
        return {
            "object_a": self.object_a.id,
            "object_b": self.object_b.id,
            "b_mirrored": self.b_mirrored,
            "rotation_index": self.rotation_index,
            "ro_deg": self.ro_deg,
            "label": self.label.value,
            "difficulty": self.difficulty.value,
        }


def trial_from_descriptor(desc: dict, objects: list[PolycubeObject]) -> Trial:
    by_id = {o.id: o for o in objects}
    obj_a = by_id[desc["object_a"]]
    obj_b = by_id[desc["object_b"]]
    if desc.get("b_mirrored"):
        obj_b = obj_b.mirrored()
    return Trial(
        object_a=obj_a,
        object_b=obj_b,
        rotation_index=int(desc["rotation_index"]),
        ro_deg=int(desc["ro_deg"]),
        label=Label(desc["label"]),
        difficulty=Difficulty(desc["difficulty"]),
        b_mirrored=bool(desc.get("b_mirrored", False)),
    )


def make_trial(
    objects: list[PolycubeObject],
    difficulty: Difficulty,
    ro_deg: int,
    label: Label,
    rng: np.random.Generator,
    mirror_prob: float = 0.5,
) -> Trial:
    """Sample one trial.

    Same trials reuse one object; Different trials use either the mirror
    image of object A (probability ``mirror_prob``) or a distinct object of
    the same difficulty.  In both cases object B is posed at the requested
    relative orientation.
    """
    if ro_deg not in RO_VALUES:
        raise ValueError(f"unsupported relative orientation {ro_deg}")
    pool = [o for o in objects if o.difficulty == difficulty]
    if len(pool) < 2:
        raise ValueError(f"need at least two {difficulty.value} objects")
    rot_choices = rotations_with_angle(ro_deg)
    rot_index = int(rot_choices[rng.integers(len(rot_choices))])
    obj_a = pool[rng.integers(len(pool))]
    if label is Label.SAME:
        obj_b, mirrored = obj_a, False
    elif rng.random() < mirror_prob:
        obj_b, mirrored = obj_a.mirrored(), True
    else:
        others = [o for o in pool if o.id != obj_a.id]
        obj_b, mirrored = others[rng.integers(len(others))], False
    return Trial(obj_a, obj_b, rot_index, ro_deg, label, difficulty, b_mirrored=mirrored)
