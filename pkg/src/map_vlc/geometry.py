"""Vector math, segment occlusion tests and random orientation sampling.

Vectors are numpy arrays whose last axis has length 3. Every batched helper
broadcasts over leading axes so one call can test thousands of segments.
Norms and dot products are spelled out component-wise so a given input gives
bit-identical output whatever the batch it is evaluated in.
"""
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

Vec3 = np.ndarray

UNIT_TOL = 1e-9
_EPS = 1e-12
_OVERLAP_EPS = 1e-12


def vec3(x: float, y: float, z: float) -> Vec3:
    return np.array([x, y, z], dtype=float)


def as_vec3(v) -> Vec3:
    a = np.asarray(v, dtype=float)
    if a.shape[-1:] != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack([
        a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
        a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
        a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
    ], axis=-1)


def norm(v: np.ndarray) -> np.ndarray:
    return np.sqrt(dot(v, v))


def normalize(v: np.ndarray) -> np.ndarray:
    n = norm(v)
    if np.any(n < _EPS):
        raise ValueError("cannot normalize a zero-length vector")
    return v / n[..., None]


def is_unit(v: np.ndarray, tol: float = UNIT_TOL) -> bool:
    return bool(np.all(np.abs(norm(v) - 1.0) <= tol))


def angle_between(a: np.ndarray, b: np.ndarray):
    """Angle in radians between unit vectors, clamped so rounding never yields NaN."""
    c = np.clip(dot(np.asarray(a, dtype=float), np.asarray(b, dtype=float)), -1.0, 1.0)
    out = np.arccos(c)
    return float(out) if np.ndim(out) == 0 else out


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    k = normalize(as_vec3(axis))
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def _frozen(v) -> Vec3:
    a = as_vec3(v).copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    position: Vec3
    boresight: Vec3

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position))
        object.__setattr__(self, "boresight", _frozen(self.boresight))
        if not is_unit(self.boresight):
            raise ValueError(f"boresight must be unit length, got {self.boresight.tolist()}")


DOWN = vec3(0.0, 0.0, -1.0)
UP = vec3(0.0, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class CylinderBlocker:
    """Solid z-aligned cylinder standing on the floor (base_center z = 0)."""
    base_center: Vec3
    diameter: float = 0.30
    height: float = 1.65

    def __post_init__(self):
        object.__setattr__(self, "base_center", _frozen(self.base_center))
        if self.diameter <= 0 or self.height <= 0:
            raise ValueError("cylinder diameter and height must be positive")

    @property
    def radius(self) -> float:
        return 0.5 * self.diameter


@dataclass(frozen=True, eq=False)
class RectPatch:
    center: Vec3
    normal: Vec3
    tangent: Vec3
    half_width: float
    half_height: float

    def __post_init__(self):
        for name in ("center", "normal", "tangent"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not (is_unit(self.normal) and is_unit(self.tangent)):
            raise ValueError("patch normal and tangent must be unit vectors")
        if abs(float(dot(self.normal, self.tangent))) > UNIT_TOL:
            raise ValueError("patch tangent must be perpendicular to its normal")

    @property
    def bitangent(self) -> Vec3:
        return cross(self.normal, self.tangent)


@dataclass(frozen=True)
class BlockerArrays:
    """Column view of a blocker list for batched occlusion tests."""
    cx: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    radius: np.ndarray = field(default_factory=lambda: np.zeros(0))
    height: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def of(cls, blockers: Sequence[CylinderBlocker]) -> "BlockerArrays":
        if not blockers:
            return cls()
        return cls(
            cx=np.array([b.base_center[0] for b in blockers]),
            cy=np.array([b.base_center[1] for b in blockers]),
            radius=np.array([b.radius for b in blockers]),
            height=np.array([b.height for b in blockers]),
        )

    def __len__(self) -> int:
        return int(self.cx.shape[0])

    def offset(self, margin: float) -> "BlockerArrays":
        """Cylinders grown by `margin` on every side and both ends (shrunk when negative).

        The base stays at z = 0, so callers raise their segments by `margin`.
        Cylinders that vanish are dropped.
        """
        keep = (self.radius + margin > 0.0) & (self.height + 2.0 * margin > 0.0)
        return BlockerArrays(self.cx[keep], self.cy[keep], self.radius[keep] + margin,
                             self.height[keep] + 2.0 * margin)


def _cylinder_overlap(p0: np.ndarray, p1: np.ndarray, cx, cy, radius, height) -> np.ndarray:
    """Length (in segment parameter t) of the part of p0->p1 inside each cylinder.

    p0/p1 carry a trailing cylinder axis before the coordinate axis; the
    cylinder columns broadcast against it.
    """
    d = p1 - p0
    with np.errstate(divide="ignore", invalid="ignore"):
        # z slab [0, height]
        z0, dz = p0[..., 2], d[..., 2]
        flat_z = np.abs(dz) < _EPS
        inside_z = (z0 >= 0.0) & (z0 <= height)
        ta = (0.0 - z0) / np.where(flat_z, 1.0, dz)
        tb = (height - z0) / np.where(flat_z, 1.0, dz)
        z_lo = np.where(flat_z, np.where(inside_z, -np.inf, np.inf), np.minimum(ta, tb))
        z_hi = np.where(flat_z, np.where(inside_z, np.inf, -np.inf), np.maximum(ta, tb))

        # infinite vertical tube of the given radius
        wx, wy = p0[..., 0] - cx, p0[..., 1] - cy
        dx, dy = d[..., 0], d[..., 1]
        a = dx * dx + dy * dy
        b = 2.0 * (wx * dx + wy * dy)
        c = wx * wx + wy * wy - radius * radius
        vertical = a < _EPS
        disc = b * b - 4.0 * a * c
        sq = np.sqrt(np.maximum(disc, 0.0))
        safe_a = np.where(vertical, 1.0, a)
        r_lo = (-b - sq) / (2.0 * safe_a)
        r_hi = (-b + sq) / (2.0 * safe_a)
        r_lo = np.where(vertical, np.where(c <= 0.0, -np.inf, np.inf), np.where(disc < 0.0, np.inf, r_lo))
        r_hi = np.where(vertical, np.where(c <= 0.0, np.inf, -np.inf), np.where(disc < 0.0, -np.inf, r_hi))

    lo = np.maximum(np.maximum(z_lo, r_lo), 0.0)
    hi = np.minimum(np.minimum(z_hi, r_hi), 1.0)
    return hi - lo


def segments_blocked(p0, p1, blockers) -> np.ndarray:
    """True where the open segment p0->p1 passes through any blocker.

    `blockers` may be a list of CylinderBlocker or a prebuilt BlockerArrays.
    The result has the broadcast shape of p0/p1 without the coordinate axis.
    """
    arr = blockers if isinstance(blockers, BlockerArrays) else BlockerArrays.of(blockers)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    shape = np.broadcast_shapes(p0.shape, p1.shape)[:-1]
    if len(arr) == 0:
        return np.zeros(shape, dtype=bool)
    overlap = _cylinder_overlap(p0[..., None, :], p1[..., None, :], arr.cx, arr.cy, arr.radius, arr.height)
    return np.any(overlap > _OVERLAP_EPS, axis=-1)


def segment_hits_cylinder(p0, p1, c: CylinderBlocker) -> bool:
    """Open segment vs closed solid cylinder; touching at an endpoint does not block."""
    p0, p1 = as_vec3(p0), as_vec3(p1)
    if np.array_equal(p0, p1):
        raise ValueError("segment endpoints must differ")
    return bool(segments_blocked(p0, p1, [c]))


def segments_cross_patches(p0, p1, center, normal, tangent, half_width, half_height):
    """Batched plane-then-bounds test. Returns (crosses, hit_point, t)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    denom = dot(d, normal)
    parallel = np.abs(denom) < _EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        t = dot(center - p0, normal) / np.where(parallel, 1.0, denom)
    hit = p0 + t[..., None] * d
    rel = hit - center
    u = dot(rel, tangent)
    v = dot(rel, cross(normal, tangent))
    crosses = (~parallel) & (t >= 0.0) & (t <= 1.0) & (np.abs(u) <= half_width) & (np.abs(v) <= half_height)
    return crosses, hit, t


def segment_hits_rect(p0, p1, r: RectPatch) -> Tuple[bool, Vec3]:
    """Segment vs rectangle. Hit point is returned only when the segment crosses the patch."""
    p0, p1 = as_vec3(p0), as_vec3(p1)
    if np.array_equal(p0, p1):
        raise ValueError("segment endpoints must differ")
    crosses, hit, _ = segments_cross_patches(p0, p1, r.center, r.normal, r.tangent, r.half_width, r.half_height)
    if not bool(crosses):
        return False, None
    return True, hit


POLAR_MODELS = ("uniform", "fixed", "gaussian")


@dataclass(frozen=True)
class OrientationModel:
    """Device normal distribution: polar angle from vertical per `polar`, azimuth uniform."""
    polar: str = "uniform"
    polar_min_deg: float = 0.0
    polar_max_deg: float = 45.0
    polar_mean_deg: float = 0.0
    polar_std_deg: float = 0.0

    def violations(self) -> List[Tuple[str, str]]:
        out = []
        if self.polar not in POLAR_MODELS:
            out.append(("polar", f"unknown polar model {self.polar!r}, expected one of {POLAR_MODELS}"))
        if not (0.0 <= self.polar_min_deg <= self.polar_max_deg <= 90.0):
            out.append(("polar_min_deg/polar_max_deg", "polar support must satisfy 0 <= min <= max <= 90 degrees"))
        if self.polar == "fixed" and not (0.0 <= self.polar_mean_deg <= 90.0):
            out.append(("polar_mean_deg", "fixed polar angle must lie in [0, 90] degrees"))
        if self.polar == "gaussian" and self.polar_std_deg < 0:
            out.append(("polar_std_deg", "standard deviation must be non-negative"))
        return out


def _sample_polar(rng: np.random.Generator, model: OrientationModel, n: int) -> np.ndarray:
    if model.polar == "fixed":
        return np.full(n, np.radians(model.polar_mean_deg))
    lo, hi = np.radians(model.polar_min_deg), np.radians(model.polar_max_deg)
    if model.polar == "uniform":
        return rng.uniform(lo, hi, n)
    if model.polar_std_deg == 0.0:
        return np.full(n, np.clip(np.radians(model.polar_mean_deg), lo, hi))
    out = np.full(n, np.clip(np.radians(model.polar_mean_deg), lo, hi))
    filled = 0
    # truncated normal by rejection; a support far in the tail falls back to the clipped mean
    for _ in range(1000):
        if filled >= n:
            break
        draw = rng.normal(np.radians(model.polar_mean_deg), np.radians(model.polar_std_deg), n - filled)
        keep = draw[(draw >= lo) & (draw <= hi)]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


def sample_device_orientations(rng: np.random.Generator, model: OrientationModel, n: int) -> np.ndarray:
    theta = _sample_polar(rng, model, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    s = np.sin(theta)
    return np.stack([s * np.cos(phi), s * np.sin(phi), np.cos(theta)], axis=-1)


def sample_device_orientation(rng: np.random.Generator, model: OrientationModel) -> Vec3:
    return sample_device_orientations(rng, model, 1)[0]
