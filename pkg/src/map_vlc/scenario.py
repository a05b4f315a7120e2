"""Sampled world states: room, ceiling track, user trajectory and blockers.

Each realization draws from three independent RNG streams spawned from its
seed (user motion, device orientation, blockers), so changing the blocker
count never perturbs the user path and blocker sets for n and n+1 blockers
share their first n cylinders.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import (
    BlockerArrays, CylinderBlocker, OrientationModel, Pose, Vec3, sample_device_orientations, vec3,
)
from .utils import ConfigError

LAYOUTS = ("grid", "linear", "t_shape", "u_shape", "circular")
MIN_RESOLUTION = {"grid": 1, "linear": 1, "t_shape": 2, "u_shape": 3, "circular": 3}
ANCHORS = ("cell", "corner")


@dataclass(frozen=True)
class Room:
    width: float = 10.0
    depth: float = 10.0
    height: float = 3.0

    @property
    def ceiling_center(self) -> Vec3:
        return vec3(self.width / 2, self.depth / 2, self.height)

    def contains_xy(self, x, y) -> np.ndarray:
        return (x >= 0.0) & (x <= self.width) & (y >= 0.0) & (y <= self.depth)


@dataclass(frozen=True, eq=False)
class TrackGrid:
    layout: str
    candidate_points: np.ndarray

    def __len__(self) -> int:
        return int(self.candidate_points.shape[0])

    def with_points(self, extra: Sequence[Vec3]) -> "TrackGrid":
        if not len(extra):
            return self
        return TrackGrid(self.layout, np.vstack([self.candidate_points, np.asarray(extra, dtype=float)]))


def _grid_axis(length: float, n: int, anchor: str) -> np.ndarray:
    if anchor == "corner" and n > 1:
        return np.array([i * length / (n - 1) for i in range(n)])
    return (np.arange(n) + 0.5) * length / n


def _points_along(segments: List[Tuple[Tuple[float, float], Tuple[float, float]]], n: int) -> np.ndarray:
    """n points evenly spaced by arc length over a list of segments (midpoint rule)."""
    starts = np.array([s for s, _ in segments], dtype=float)
    ends = np.array([e for _, e in segments], dtype=float)
    lengths = np.hypot(*(ends - starts).T)
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    out = []
    for k in range(n):
        s = (k + 0.5) * cum[-1] / n
        i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(segments) - 1)
        f = (s - cum[i]) / lengths[i]
        out.append(starts[i] + f * (ends[i] - starts[i]))
    return np.array(out)


def build_track(layout: str, room: Room, resolution: int, anchor: str = "cell") -> TrackGrid:
    """Candidate MAP positions on the ceiling plane."""
    if layout not in LAYOUTS:
        raise ConfigError([("track", "layout", f"unknown layout {layout!r}, expected one of {LAYOUTS}")])
    if resolution < MIN_RESOLUTION[layout]:
        raise ConfigError([("track", "resolution",
                            f"{layout} layout needs resolution >= {MIN_RESOLUTION[layout]}, got {resolution}")])
    W, D, H = room.width, room.depth, room.height
    if layout == "grid":
        xs, ys = _grid_axis(W, resolution, anchor), _grid_axis(D, resolution, anchor)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        xy = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    elif layout == "circular":
        radius = min(W, D) / 3.0
        ang = 2.0 * np.pi * np.arange(resolution) / resolution
        xy = np.stack([W / 2 + radius * np.cos(ang), D / 2 + radius * np.sin(ang)], axis=-1)
    else:
        if layout == "linear":
            segments = [((0.0, D / 2), (W, D / 2))]
        elif layout == "t_shape":
            bar = 0.75 * D
            segments = [((0.0, bar), (W, bar)), ((W / 2, bar), (W / 2, 0.0))]
        else:
            m = min(W, D) / 10.0
            segments = [((m, D - m), (m, m)), ((m, m), (W - m, m)), ((W - m, m), (W - m, D - m))]
        xy = _points_along(segments, resolution)
    points = np.column_stack([xy, np.full(len(xy), H)])
    return TrackGrid(layout, points)


@dataclass(frozen=True)
class ScenarioSettings:
    slots: int = 10
    slot_duration: float = 1.0
    speed_min: float = 0.5
    speed_max: float = 2.0
    blockers: int = 16
    blocker_diameter: float = 0.30
    blocker_height: float = 1.65
    device_height: float = 0.75
    device_offset: float = 0.36
    wall_margin: float = 0.5
    resample_blockers: bool = False
    max_attempts: int = 10000
    corner: Tuple[float, float] = (0.5, 0.5)
    orientation: OrientationModel = field(default_factory=OrientationModel)


@dataclass(frozen=True, eq=False)
class UserState:
    body: CylinderBlocker
    device_position: Vec3
    device_normal: Vec3
    speed: float
    waypoint: Vec3
    facing: Vec3

    @property
    def position(self) -> Vec3:
        return self.body.base_center

    @property
    def device_pose(self) -> Pose:
        return Pose(self.device_position, self.device_normal)


@dataclass(frozen=True, eq=False)
class SlotWorld:
    """Everything the channel needs for one slot: device pose and every occluder (body included)."""
    slot: int
    user: UserState
    blockers: BlockerArrays
    obstacles: Tuple[CylinderBlocker, ...]


@dataclass(frozen=True, eq=False)
class ScenarioRealization:
    room: Room
    track: TrackGrid
    user_states: List[UserState]
    blockers: List[CylinderBlocker]
    seed: int
    blockers_per_slot: Optional[List[List[CylinderBlocker]]] = None

    @property
    def slots(self) -> int:
        return len(self.user_states)

    def blockers_at(self, slot: int) -> List[CylinderBlocker]:
        if self.blockers_per_slot is not None:
            return self.blockers_per_slot[slot]
        return self.blockers

    def world(self, slot: int) -> SlotWorld:
        user = self.user_states[slot]
        obstacles = tuple(self.blockers_at(slot)) + (user.body,)
        return SlotWorld(slot, user, BlockerArrays.of(obstacles), obstacles)

    def to_dict(self) -> Dict:
        def cyl(c):
            return [*c.base_center.tolist(), c.diameter, c.height]
        return {
            "seed": self.seed,
            "users": [
                {"position": u.position.tolist(), "device": u.device_position.tolist(),
                 "normal": u.device_normal.tolist(), "speed": u.speed, "waypoint": u.waypoint.tolist()}
                for u in self.user_states
            ],
            "blockers": [cyl(c) for c in self.blockers],
            "blockers_per_slot": None if self.blockers_per_slot is None
            else [[cyl(c) for c in slot] for slot in self.blockers_per_slot],
        }


def _streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    user_ss, orient_ss, block_ss = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(user_ss), np.random.default_rng(orient_ss), np.random.default_rng(block_ss))


def _random_heading(rng: np.random.Generator) -> np.ndarray:
    a = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([math.cos(a), math.sin(a)])


def _random_waypoint_path(rng: np.random.Generator, room: Room, sc: ScenarioSettings):
    """Floor positions, facings, speeds and waypoints for each slot."""
    lo = sc.wall_margin

    def draw_point():
        return np.array([rng.uniform(lo, room.width - lo), rng.uniform(lo, room.depth - lo)])

    pos = draw_point()
    waypoint = draw_point()
    speed = rng.uniform(sc.speed_min, sc.speed_max)
    facing = None
    out = []
    for _ in range(sc.slots):
        gap = waypoint - pos
        dist = float(np.hypot(*gap))
        if dist > 0.0:
            facing = gap / dist
        elif facing is None:
            facing = _random_heading(rng)
        out.append((pos.copy(), facing.copy(), speed, waypoint.copy()))
        step = speed * sc.slot_duration
        if dist <= step:
            # arrive and wait out the slot, then start a new leg
            pos = waypoint
            waypoint = draw_point()
            speed = rng.uniform(sc.speed_min, sc.speed_max)
        else:
            pos = pos + facing * step
    return out


def _corner_path(room: Room, sc: ScenarioSettings):
    corner = np.array(sc.corner, dtype=float)
    center = np.array([room.width / 2, room.depth / 2])
    gap = center - corner
    length = float(np.hypot(*gap))
    facing = gap / length
    n = sc.slots
    step = length / (n - 1)
    out = []
    for k in range(n):
        pos = center.copy() if k == n - 1 else corner + gap * (k / (n - 1))
        out.append((pos, facing.copy(), step / sc.slot_duration, center.copy()))
    return out


def _sample_blockers(rng: np.random.Generator, room: Room, sc: ScenarioSettings,
                     avoid: np.ndarray) -> List[CylinderBlocker]:
    r = sc.blocker_diameter / 2
    clearance = sc.device_offset + sc.blocker_diameter
    centers: List[np.ndarray] = []
    for k in range(sc.blockers):
        for _ in range(sc.max_attempts):
            c = np.array([rng.uniform(r, room.width - r), rng.uniform(r, room.depth - r)])
            if len(avoid) and np.min(np.hypot(*(avoid - c).T)) < clearance:
                continue
            if centers and np.min(np.hypot(*(np.array(centers) - c).T)) < sc.blocker_diameter:
                continue
            centers.append(c)
            break
        else:
            raise ConfigError([("scenario", "blockers",
                                f"could not place blocker {k + 1} of {sc.blockers} after "
                                f"{sc.max_attempts} attempts; room too crowded")])
    return [CylinderBlocker(vec3(c[0], c[1], 0.0), sc.blocker_diameter, sc.blocker_height) for c in centers]


def _build(room: Room, track: TrackGrid, sc: ScenarioSettings, seed: int, path, orient_rng, block_rng):
    normals = sample_device_orientations(orient_rng, sc.orientation, len(path))
    states = []
    for (pos, facing, speed, waypoint), normal in zip(path, normals):
        device_xy = pos + sc.device_offset * facing
        states.append(UserState(
            body=CylinderBlocker(vec3(pos[0], pos[1], 0.0), sc.blocker_diameter, sc.blocker_height),
            device_position=vec3(device_xy[0], device_xy[1], sc.device_height),
            device_normal=normal,
            speed=float(speed),
            waypoint=vec3(waypoint[0], waypoint[1], 0.0),
            facing=vec3(facing[0], facing[1], 0.0),
        ))
    positions = np.array([p for p, *_ in path])
    if sc.resample_blockers:
        per_slot = [_sample_blockers(block_rng, room, sc, positions[k:k + 1]) for k in range(len(path))]
        return ScenarioRealization(room, track, states, per_slot[0], seed, per_slot)
    blockers = _sample_blockers(block_rng, room, sc, positions)
    return ScenarioRealization(room, track, states, blockers, seed)


def generate_realization(system, seed: int) -> ScenarioRealization:
    """Random-waypoint user with per-slot device orientation and static blockers."""
    user_rng, orient_rng, block_rng = _streams(seed)
    path = _random_waypoint_path(user_rng, system.room, system.scenario)
    return _build(system.room, system.track_grid, system.scenario, seed, path, orient_rng, block_rng)


def corner_to_center_path(system, seed: int) -> ScenarioRealization:
    """User walks in evenly spaced slots from the corner to the room centre."""
    if system.scenario.slots < 2:
        raise ConfigError([("scenario", "slots", "corner-to-center path needs at least 2 slots")])
    _, orient_rng, block_rng = _streams(seed)
    path = _corner_path(system.room, system.scenario)
    return _build(system.room, system.track_grid, system.scenario, seed, path, orient_rng, block_rng)
