"""Optical channel gains, electrical SNR and achievable rate.

LoS paths use the Lambertian point-source model with a non-imaging
concentrator at the photodetector. Mirror paths use the image-source
construction: the LED is reflected across the mirror plane and the straight
image->receiver path must cross the mirror aperture. Two magnitude laws are
available for a mirror path (`PATH_MODELS`):

- ``image_source``: rho times the Lambertian gain from the image over d1 + d2;
- ``double_path_loss``: the mirror as a small reflecting element of area A_m,
  rho (m+1) A T g A_m cos^m(phi) cos(alpha) cos(beta) cos(psi) / (2 pi^2 d1^2 d2^2).

Every function here is pure; scene objects are frozen dataclasses.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import (
    UP, BlockerArrays, CylinderBlocker, Pose, RectPatch, Vec3, as_vec3, cross, dot, norm,
    segments_blocked, segments_cross_patches,
)

PATH_MODELS = ("image_source", "double_path_loss")
RATE_FORMULAS = ("imdd", "shannon")
_NO_PATH_MISS = 1e3


def lambertian_order(semi_angle_deg: float) -> float:
    """m = -ln 2 / ln cos(semi-angle)."""
    if not (0.0 < semi_angle_deg < 90.0):
        raise ValueError("semi-angle must lie in (0, 90) degrees")
    m = -math.log(2.0) / math.log(math.cos(math.radians(semi_angle_deg)))
    # cos(60 deg) evaluates one ulp above 0.5
    return float(round(m)) if abs(m - round(m)) < 1e-9 else m


def concentrator_gain(refractive_index: float, fov_deg: float) -> float:
    return refractive_index ** 2 / math.sin(math.radians(fov_deg)) ** 2


@dataclass(frozen=True, eq=False)
class LedSource:
    pose: Pose
    transmit_power: float = 1.0
    semi_angle: float = 60.0
    lambertian_order: float = field(init=False)

    def __post_init__(self):
        if self.transmit_power < 0:
            raise ValueError("transmit power must be non-negative")
        object.__setattr__(self, "lambertian_order", lambertian_order(self.semi_angle))

    def moved(self, position=None, boresight=None, transmit_power=None) -> "LedSource":
        pose = Pose(self.pose.position if position is None else position,
                    self.pose.boresight if boresight is None else boresight)
        power = self.transmit_power if transmit_power is None else transmit_power
        return LedSource(pose, power, self.semi_angle)


@dataclass(frozen=True, eq=False)
class Receiver:
    pose: Pose
    pd_area: float = 1e-4
    fov: float = 70.0
    responsivity: float = 0.53
    filter_gain: float = 1.0
    refractive_index: float = 1.5

    def __post_init__(self):
        if not (0.0 < self.fov <= 90.0):
            raise ValueError("FoV must lie in (0, 90] degrees")

    @property
    def concentrator_gain(self) -> float:
        return concentrator_gain(self.refractive_index, self.fov)

    @property
    def collection(self) -> float:
        """pd_area * filter_gain * concentrator gain."""
        return self.pd_area * self.filter_gain * self.concentrator_gain

    def at(self, pose: Pose) -> "Receiver":
        return replace(self, pose=pose)


@dataclass(frozen=True)
class NoiseModel:
    thermal_psd: float = 1e-21
    bandwidth: float = 2e8

    @property
    def noise_power(self) -> float:
        return self.thermal_psd * self.bandwidth


def mirror_frame(wall_normal, wall_tangent, yaw, roll) -> Tuple[np.ndarray, np.ndarray]:
    """Mirror normal and horizontal tangent after yawing about vertical and rolling about the tangent."""
    wall_normal = np.asarray(wall_normal, dtype=float)
    wall_tangent = np.asarray(wall_tangent, dtype=float)
    yaw = np.asarray(yaw, dtype=float)[..., None]
    roll = np.asarray(roll, dtype=float)[..., None]
    horizontal = np.cos(yaw) * wall_normal + np.sin(yaw) * wall_tangent
    normal = np.cos(roll) * horizontal + np.sin(roll) * UP
    tangent = -np.sin(yaw) * wall_normal + np.cos(yaw) * wall_tangent
    return normal, tangent


@dataclass(frozen=True, eq=False)
class MirrorElement:
    """One specular mirror; (yaw, roll) are radians relative to the wall plane."""
    center: Vec3
    wall_normal: Vec3
    wall_tangent: Vec3
    half_size: float = 0.05
    yaw: float = 0.0
    roll: float = 0.0
    reflectivity: float = 0.95
    max_angle: float = math.radians(60.0)
    wall: str = ""

    def __post_init__(self):
        for name in ("center", "wall_normal", "wall_tangent"):
            object.__setattr__(self, name, as_vec3(getattr(self, name)))
        if not (0.0 <= self.reflectivity <= 1.0):
            raise ValueError("reflectivity must lie in [0, 1]")
        if abs(self.yaw) > self.max_angle + 1e-12 or abs(self.roll) > self.max_angle + 1e-12:
            raise ValueError("mirror orientation outside its mounting range")

    @property
    def orientation(self) -> Tuple[float, float]:
        return self.yaw, self.roll

    @property
    def patch(self) -> RectPatch:
        normal, tangent = mirror_frame(self.wall_normal, self.wall_tangent, self.yaw, self.roll)
        return RectPatch(self.center, normal, tangent, self.half_size, self.half_size)

    def oriented(self, yaw: float, roll: float) -> "MirrorElement":
        return replace(self, yaw=float(yaw), roll=float(roll))


@dataclass(frozen=True, eq=False)
class RisArray:
    """Mirrors sharing one wall; per-mirror orientations are stored column-wise."""
    wall: str
    centers: np.ndarray
    wall_normal: Vec3
    wall_tangent: Vec3
    half_size: float = 0.05
    reflectivity: float = 0.95
    max_angle: float = math.radians(60.0)
    yaw: Optional[np.ndarray] = None
    roll: Optional[np.ndarray] = None

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "wall_normal", as_vec3(self.wall_normal))
        object.__setattr__(self, "wall_tangent", as_vec3(self.wall_tangent))
        for name in ("yaw", "roll"):
            v = getattr(self, name)
            v = np.zeros(len(centers)) if v is None else np.asarray(v, dtype=float).reshape(-1)
            if v.shape != (len(centers),):
                raise ValueError(f"{name} must hold one angle per mirror")
            object.__setattr__(self, name, v)

    def __len__(self) -> int:
        return int(self.centers.shape[0])

    def frames(self) -> Tuple[np.ndarray, np.ndarray]:
        return mirror_frame(self.wall_normal, self.wall_tangent, self.yaw, self.roll)

    def with_orientations(self, yaw, roll) -> "RisArray":
        return replace(self, yaw=np.asarray(yaw, dtype=float), roll=np.asarray(roll, dtype=float))

    def mirrors(self) -> List[MirrorElement]:
        return [
            MirrorElement(c, self.wall_normal, self.wall_tangent, self.half_size, float(y), float(r),
                          self.reflectivity, self.max_angle, self.wall)
            for c, y, r in zip(self.centers, self.yaw, self.roll)
        ]

    @classmethod
    def of_mirror(cls, mirror: MirrorElement) -> "RisArray":
        return cls(mirror.wall, mirror.center[None, :], mirror.wall_normal, mirror.wall_tangent,
                   mirror.half_size, mirror.reflectivity, mirror.max_angle,
                   np.array([mirror.yaw]), np.array([mirror.roll]))


# wall name -> (inward normal, horizontal tangent, point on wall as a function of room dims)
WALLS = {
    "x0": ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    "x1": ((-1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
    "y0": ((0.0, 1.0, 0.0), (1.0, 0.0, 0.0)),
    "y1": ((0.0, -1.0, 0.0), (1.0, 0.0, 0.0)),
}


def wall_anchor(wall: str, width: float, depth: float, z: float) -> Vec3:
    return {
        "x0": np.array([0.0, depth / 2, z]),
        "x1": np.array([width, depth / 2, z]),
        "y0": np.array([width / 2, 0.0, z]),
        "y1": np.array([width / 2, depth, z]),
    }[wall]


def build_ris_arrays(width: float, depth: float, walls: Sequence[str], rows: int, cols: int,
                     mirror_size: float, center_height: float, reflectivity: float,
                     max_angle_deg: float) -> List[RisArray]:
    """One rows x cols mirror array centred on each listed wall."""
    arrays = []
    across = (np.arange(cols) - (cols - 1) / 2.0) * mirror_size
    up = (np.arange(rows) - (rows - 1) / 2.0) * mirror_size
    for wall in walls:
        normal, tangent = (np.array(v) for v in WALLS[wall])
        anchor = wall_anchor(wall, width, depth, center_height)
        grid_t, grid_z = np.meshgrid(across, up)
        centers = anchor + grid_t.reshape(-1, 1) * tangent + grid_z.reshape(-1, 1) * UP
        arrays.append(RisArray(wall, centers, normal, tangent, mirror_size / 2.0, reflectivity,
                               math.radians(max_angle_deg)))
    return arrays


def _blockers(blockers) -> BlockerArrays:
    return blockers if isinstance(blockers, BlockerArrays) else BlockerArrays.of(blockers or [])


def _flat(shape, *vectors) -> List[np.ndarray]:
    return [np.broadcast_to(np.asarray(v, dtype=float), shape + (3,)).reshape(-1, 3) for v in vectors]


def los_gain_batch(tx_pos, tx_bore, m: float, rx: Receiver, blockers) -> np.ndarray:
    """LoS gains from many transmitter poses (leading axes) to one receiver."""
    shape = np.broadcast_shapes(np.shape(tx_pos), np.shape(tx_bore))[:-1]
    tx_pos, tx_bore = _flat(shape, tx_pos, tx_bore)
    return _los_gain_flat(tx_pos, tx_bore, m, rx, blockers).reshape(shape)


def _los_gain_flat(tx_pos: np.ndarray, tx_bore: np.ndarray, m: float, rx: Receiver, blockers) -> np.ndarray:
    rx_pos = rx.pose.position
    v = rx_pos - tx_pos
    d = norm(v)
    if np.any(d <= 0.0):
        raise ValueError("transmitter and receiver positions coincide")
    u = v / d[..., None]
    cos_phi = dot(tx_bore, u)
    cos_psi = -dot(rx.pose.boresight, u)
    cos_fov = math.cos(math.radians(rx.fov))
    ok = (cos_phi >= 0.0) & (cos_psi >= 0.0) & (cos_psi >= cos_fov)
    gain = np.where(
        ok,
        (m + 1.0) * rx.collection * np.maximum(cos_phi, 0.0) ** m * cos_psi / (2.0 * np.pi * d * d),
        0.0,
    )
    arr = _blockers(blockers)
    if len(arr) and np.any(ok):
        idx = np.nonzero(ok)
        blocked = segments_blocked(tx_pos[idx], rx_pos, arr)
        gain[idx] = np.where(blocked, 0.0, gain[idx])
    return gain


def los_gain(src: LedSource, rx: Receiver, blockers: Sequence[CylinderBlocker] = ()) -> float:
    return float(los_gain_batch(src.pose.position, src.pose.boresight, src.lambertian_order, rx, blockers))


def mirror_path_gains(src: LedSource, rx: Receiver, centers, normals, tangents, half_size, reflectivity,
                      blockers=(), path_model: str = "image_source", reflect: str = "source",
                      with_miss: bool = False):
    """Batched mirror-path gains over the broadcast leading axes of centers/normals/tangents.

    With `with_miss`, also returns how far (metres, in the mirror plane) the
    image path misses the aperture; 0 where it crosses.
    """
    if path_model not in PATH_MODELS:
        raise ValueError(f"unknown RIS path model {path_model!r}")
    shape = np.broadcast_shapes(np.shape(centers), np.shape(normals), np.shape(tangents))[:-1]
    centers, normals, tangents = _flat(shape, centers, normals, tangents)
    rho = np.broadcast_to(np.asarray(reflectivity, dtype=float), shape).reshape(-1)
    out = _mirror_path_flat(src, rx, centers, normals, tangents, half_size, rho, blockers, path_model,
                            reflect, with_miss)
    if not with_miss:
        return out.reshape(shape)
    return out[0].reshape(shape), out[1].reshape(shape)


def _mirror_path_flat(src, rx, centers, normals, tangents, half_size, rho, blockers, path_model, reflect,
                      with_miss):
    s, b = src.pose.position, src.pose.boresight
    r, rb = rx.pose.position, rx.pose.boresight
    m = src.lambertian_order

    h_src = dot(s - centers, normals)
    h_rx = dot(r - centers, normals)
    front = (h_src > 0.0) & (h_rx > 0.0)
    if reflect == "source":
        image = s - 2.0 * h_src[..., None] * normals
        crosses, q, t = segments_cross_patches(image, r, centers, normals, tangents, half_size, half_size)
    elif reflect == "receiver":
        image = r - 2.0 * h_rx[..., None] * normals
        crosses, q, t = segments_cross_patches(s, image, centers, normals, tangents, half_size, half_size)
    else:
        raise ValueError("reflect must be 'source' or 'receiver'")

    to_q = q - s
    d1 = norm(to_q)
    from_q = r - q
    d2 = norm(from_q)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_phi = dot(b, to_q) / d1
        cos_psi = dot(rb, -from_q) / d2
    cos_fov = math.cos(math.radians(rx.fov))
    geometric = crosses & front & (d1 > 0.0) & (d2 > 0.0)
    ok = geometric & (cos_phi >= 0.0) & (cos_psi >= 0.0) & (cos_psi >= cos_fov)
    cos_phi = np.where(ok, cos_phi, 0.0)
    cos_psi = np.where(ok, cos_psi, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        if path_model == "image_source":
            total = d1 + d2
            gain = rho * (m + 1.0) * rx.collection * cos_phi ** m * cos_psi / (2.0 * np.pi * total * total)
        else:
            cos_alpha = dot(normals, -to_q) / d1
            cos_beta = dot(normals, from_q) / d2
            area = (2.0 * half_size) ** 2
            gain = (rho * (m + 1.0) * rx.collection * area * cos_phi ** m * cos_alpha * cos_beta * cos_psi
                    / (2.0 * np.pi ** 2 * d1 * d1 * d2 * d2))
    gain = np.where(ok, gain, 0.0)

    arr = _blockers(blockers)
    if len(arr) and np.any(ok):
        idx = np.nonzero(ok)
        qi = q[idx]
        blocked = segments_blocked(s, qi, arr) | segments_blocked(qi, r, arr)
        gain[idx] = np.where(blocked, 0.0, gain[idx])

    if not with_miss:
        return gain
    rel = q - centers
    u = np.abs(dot(rel, tangents)) - half_size
    v = np.abs(dot(rel, cross(normals, tangents))) - half_size
    miss = np.sqrt(np.maximum(u, 0.0) ** 2 + np.maximum(v, 0.0) ** 2)
    usable = front & np.isfinite(miss) & (t >= 0.0) & (t <= 1.0)
    miss = np.where(usable, miss, _NO_PATH_MISS)
    return gain, np.where(geometric, 0.0, miss)


def ris_path_gain(src: LedSource, mirror: MirrorElement, rx: Receiver,
                  blockers: Sequence[CylinderBlocker] = (), path_model: str = "image_source",
                  reflect: str = "source") -> float:
    patch = mirror.patch
    return float(mirror_path_gains(src, rx, patch.center, patch.normal, patch.tangent, mirror.half_size,
                                   mirror.reflectivity, blockers, path_model, reflect))


def _as_arrays(mirrors) -> List[RisArray]:
    return [m if isinstance(m, RisArray) else RisArray.of_mirror(m) for m in mirrors]


def ris_gain_matrix(src: LedSource, arrays: Sequence[RisArray], rx: Receiver, blockers=(),
                    path_model: str = "image_source") -> List[np.ndarray]:
    """Per-mirror path gains, one vector per array."""
    arr = _blockers(blockers)
    out = []
    for a in arrays:
        normals, tangents = a.frames()
        out.append(mirror_path_gains(src, rx, a.centers, normals, tangents, a.half_size, a.reflectivity,
                                     arr, path_model))
    return out


def ris_gain_by_wall(src: LedSource, arrays: Sequence[RisArray], rx: Receiver, blockers=(),
                     path_model: str = "image_source") -> Dict[str, float]:
    gains = ris_gain_matrix(src, arrays, rx, blockers, path_model)
    out: Dict[str, float] = {}
    for a, g in zip(arrays, gains):
        out[a.wall] = out.get(a.wall, 0.0) + float(np.sum(g))
    return out


def total_gain(src: LedSource, mirrors: Sequence[Union[MirrorElement, RisArray]], rx: Receiver,
               blockers: Sequence[CylinderBlocker] = (), include_los: bool = True,
               path_model: str = "image_source") -> float:
    """Intensity channel: LoS and every mirror path add."""
    arr = _blockers(blockers)
    h = los_gain(src, rx, arr) if include_los else 0.0
    for g in ris_gain_matrix(src, _as_arrays(mirrors), rx, arr, path_model):
        h += float(np.sum(g))
    return h


def electrical_snr(H, transmit_power: float, rx: Receiver, noise: NoiseModel):
    return (rx.responsivity * transmit_power * np.asarray(H, dtype=float)) ** 2 / noise.noise_power


def rate_from_snr(snr, bandwidth: float, formula: str = "imdd"):
    snr = np.asarray(snr, dtype=float)
    if formula == "imdd":
        rate = 0.5 * bandwidth * np.log2(1.0 + (math.e / (2.0 * math.pi)) * snr)
    elif formula == "shannon":
        rate = bandwidth * np.log2(1.0 + snr)
    else:
        raise ValueError(f"unknown rate formula {formula!r}")
    return float(rate) if rate.ndim == 0 else rate


def achievable_rate(H, src: LedSource, rx: Receiver, noise: NoiseModel, formula: str = "imdd"):
    """Bits/s for gain H (scalar or array); a zero gain yields a zero rate."""
    if np.any(np.asarray(H) < 0):
        raise ValueError("channel gain must be non-negative")
    return rate_from_snr(electrical_snr(H, src.transmit_power, rx, noise), noise.bandwidth, formula)


def specular_orientation(src_pos, rx_pos, center, wall_normal, wall_tangent) -> Tuple[float, float]:
    """(yaw, roll) whose mirror normal bisects the directions to source and receiver."""
    a = as_vec3(src_pos) - center
    c = as_vec3(rx_pos) - center
    bis = a / norm(a) + c / norm(c)
    n = bis / norm(bis)
    roll = math.asin(float(np.clip(n[2], -1.0, 1.0)))
    yaw = math.atan2(float(dot(n, wall_tangent)), float(dot(n, wall_normal)))
    return yaw, roll
