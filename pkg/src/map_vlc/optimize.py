"""MAP placement over the ceiling track and sine-cosine search of mirror orientations."""
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .channel import (
    LedSource, Receiver, RisArray, achievable_rate, los_gain_batch, mirror_frame, mirror_path_gains,
)
from .geometry import DOWN, BlockerArrays, Vec3, dot, norm, segments_blocked
from .logs import get_logger
from .scenario import ScenarioRealization, SlotWorld, TrackGrid

logger = get_logger(__name__)


@dataclass(frozen=True)
class ScaParams:
    population: int = 30
    iterations: int = 100
    a: float = 2.0
    bounds: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("SCA population must be at least 2")
        if self.iterations < 1:
            raise ValueError("SCA needs at least one iteration")
        if self.a <= 0:
            raise ValueError("SCA amplitude a must be positive")
        if self.bounds is not None:
            for lo, hi in self.bounds:
                if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                    raise ValueError(f"invalid SCA bound ({lo}, {hi})")

    def with_bounds(self, bounds: Sequence[Tuple[float, float]]) -> "ScaParams":
        return ScaParams(self.population, self.iterations, self.a, tuple((float(lo), float(hi)) for lo, hi in bounds))

    def limits(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.bounds is None:
            raise ValueError("SCA bounds are not set")
        b = np.asarray(self.bounds, dtype=float)
        return b[:, 0], b[:, 1]


@dataclass
class ScaResult:
    best_vector: np.ndarray
    best_value: float
    history: List[float] = field(default_factory=list)
    evaluations: int = 0

    def __iter__(self) -> Iterator:
        yield self.best_vector
        yield self.best_value


def sca_optimize_batch(params: ScaParams, objective: Callable[[np.ndarray], np.ndarray],
                       rng: np.random.Generator, batch: int, initial: Optional[np.ndarray] = None):
    """Maximise `batch` independent problems at once.

    `objective` maps positions of shape (batch, population, dim) to values of
    shape (batch, population). `initial`, shape (batch, dim), replaces the first
    population member. Returns (best_x, best_f, history) with history of
    shape (iterations + 1, batch).
    """
    lb, ub = params.limits()
    dim = lb.shape[0]
    P, T = params.population, params.iterations
    X = lb + (ub - lb) * rng.random((batch, P, dim))
    if initial is not None:
        X[:, 0, :] = np.clip(np.broadcast_to(initial, (batch, dim)), lb, ub)
    fit = objective(X)
    rows = np.arange(batch)
    j = np.argmax(fit, axis=1)
    best_x = X[rows, j].copy()
    best_f = fit[rows, j].copy()
    history = [best_f.copy()]
    for t in range(T):
        r1 = params.a - t * params.a / T
        r2 = 2.0 * np.pi * rng.random((batch, P, dim))
        r3 = 2.0 * rng.random((batch, P, dim))
        r4 = rng.random((batch, P, dim))
        wave = np.where(r4 < 0.5, np.sin(r2), np.cos(r2))
        X = np.clip(X + r1 * wave * np.abs(r3 * best_x[:, None, :] - X), lb, ub)
        fit = objective(X)
        j = np.argmax(fit, axis=1)
        better = fit[rows, j] > best_f
        best_x[better] = X[rows, j][better]
        best_f[better] = fit[rows, j][better]
        history.append(best_f.copy())
    return best_x, best_f, np.array(history)


def sca_optimize(params: ScaParams, objective: Callable[[np.ndarray], float], rng: np.random.Generator,
                 initial: Optional[np.ndarray] = None, vectorized: bool = False) -> ScaResult:
    """Sine-cosine maximisation of a scalar objective over the box in `params.bounds`.

    With `vectorized`, the objective receives the whole population (P, dim)
    and returns P values; otherwise it is called once per member.
    """
    if vectorized:
        def batch_objective(X):
            return np.asarray(objective(X[0]), dtype=float)[None, :]
    else:
        def batch_objective(X):
            return np.array([[float(objective(x)) for x in X[0]]])
    init = None if initial is None else np.asarray(initial, dtype=float)[None, :]
    best_x, best_f, history = sca_optimize_batch(params, batch_objective, rng, 1, init)
    return ScaResult(best_x[0], float(best_f[0]), history[:, 0].tolist(),
                     params.population * (params.iterations + 1))


@dataclass(frozen=True, eq=False)
class PlacementResult:
    chosen_index: int
    chosen_point: Vec3
    objective: float
    evaluations: int
    elapsed: float


def place_map_exhaustive(track: TrackGrid, world, objective: Callable) -> PlacementResult:
    """Evaluate every candidate; the lowest index wins ties.

    `objective(points, world)` returns one rate per candidate row.
    """
    if len(track) == 0:
        raise ValueError("track has no candidate points")
    start = time.perf_counter()
    rates = np.asarray(objective(track.candidate_points, world), dtype=float)
    idx = int(np.argmax(rates))
    elapsed = time.perf_counter() - start
    return PlacementResult(idx, track.candidate_points[idx].copy(), float(rates[idx]), len(track), elapsed)


def map_boresights(points: np.ndarray, world: SlotWorld, orientation: str) -> np.ndarray:
    if orientation == "down":
        return np.broadcast_to(DOWN, points.shape)
    if orientation == "toward_user":
        v = world.user.device_position - points
        return v / norm(v)[..., None]
    raise ValueError(f"unknown MAP orientation {orientation!r}")


def map_gains(points: np.ndarray, world: SlotWorld, led: LedSource, rx: Receiver, orientation: str = "down"):
    receiver = rx.at(world.user.device_pose)
    return los_gain_batch(points, map_boresights(points, world, orientation), led.lambertian_order,
                          receiver, world.blockers)


def map_gain_objective(system) -> Callable:
    """Channel gain at each candidate; same argmax as the rate at any positive power."""
    def objective(points, world):
        return map_gains(points, world, system.led, system.receiver, system.track.map_orientation)
    return objective


def map_rate_objective(system) -> Callable:
    """Rate of a MAP at each candidate point for the slot's world."""
    def objective(points, world):
        gains = map_gains(points, world, system.led, system.receiver, system.track.map_orientation)
        return achievable_rate(gains, system.led, system.receiver, system.noise, system.rate_formula)
    return objective


def place_map_per_slot(track: TrackGrid, realization: ScenarioRealization, system) -> List[PlacementResult]:
    """Independent exhaustive placement in every slot; moving the MAP costs nothing."""
    objective = map_rate_objective(system)
    return [place_map_exhaustive(track, realization.world(k), objective) for k in range(realization.slots)]


@dataclass(frozen=True, eq=False)
class RisConfiguration:
    arrays: List[RisArray]
    gains: List[np.ndarray]
    evaluations: int = 0

    @property
    def total(self) -> float:
        return float(sum(np.sum(g) for g in self.gains))

    def by_wall(self) -> dict:
        out = {}
        for a, g in zip(self.arrays, self.gains):
            out[a.wall] = out.get(a.wall, 0.0) + float(np.sum(g))
        return out


def _bisector_angles(src_pos, rx_pos, centers, wall_normals, wall_tangents) -> np.ndarray:
    a = src_pos - centers
    c = rx_pos - centers
    bis = a / norm(a)[:, None] + c / norm(c)[:, None]
    n = bis / norm(bis)[:, None]
    roll = np.arcsin(np.clip(n[:, 2], -1.0, 1.0))
    yaw = np.arctan2(dot(n, wall_tangents), dot(n, wall_normals))
    return np.stack([yaw, roll], axis=-1)


def _reachable(src: LedSource, rx: Receiver, centers: np.ndarray, half_size: float) -> np.ndarray:
    """Mirrors whose aperture could possibly appear inside the receiver FoV and the LED hemisphere."""
    to_c = centers - rx.pose.position
    d = norm(to_c)
    slack = np.arcsin(np.clip(half_size * np.sqrt(2.0) / np.maximum(d, 1e-12), 0.0, 1.0))
    psi = np.arccos(np.clip(dot(to_c, rx.pose.boresight) / d, -1.0, 1.0))
    from_src = centers - src.pose.position
    ds = norm(from_src)
    slack_src = np.arcsin(np.clip(half_size * np.sqrt(2.0) / np.maximum(ds, 1e-12), 0.0, 1.0))
    phi = np.arccos(np.clip(dot(from_src, src.pose.boresight) / ds, -1.0, 1.0))
    return (psi <= np.radians(rx.fov) + slack) & (phi <= np.pi / 2 + slack_src)


def _specular_in_range(src_pos, rx_pos, centers, wall_normals, wall_tangents, half_size: float,
                       limit: float) -> np.ndarray:
    """Mirrors whose specular normal, anywhere on the patch, could lie inside the tilt box.

    A path through patch point q needs the mirror normal on the bisector of
    q->src and q->rx. Moving q off the centre turns each leg by at most the
    angle the patch subtends, which bounds how far that bisector can sit
    from the one at the centre.
    """
    m = half_size * np.sqrt(2.0)
    a = src_pos - centers
    c = rx_pos - centers
    da, dc = norm(a), norm(c)
    turn = (np.arcsin(np.clip(m / np.maximum(da, 1e-12), 0.0, 1.0))
            + np.arcsin(np.clip(m / np.maximum(dc, 1e-12), 0.0, 1.0)))
    bis = a / da[:, None] + c / dc[:, None]
    span = norm(bis)
    # chord between bisector directions before normalising
    ratio = turn / np.maximum(span, 1e-12)
    eps = np.where(ratio < 1.0, np.arcsin(np.clip(ratio, 0.0, 1.0)), np.pi)
    with np.errstate(invalid="ignore", divide="ignore"):
        yaw, roll = _bisector_angles(src_pos, rx_pos, centers, wall_normals, wall_tangents).T
    rho = np.cos(min(limit, np.pi / 2))
    yaw_slack = np.where(eps < rho, np.arcsin(np.clip(eps / max(rho, 1e-12), 0.0, 1.0)), np.pi)
    # a degenerate (NaN) bisector never rules a mirror out
    return ~((np.abs(roll) > limit + eps) | (np.abs(yaw) > limit + yaw_slack))


def _legs_blocked(src_pos, rx_pos, centers, blockers: BlockerArrays, margin: float) -> np.ndarray:
    """Centre legs src->mirror->rx tested against blockers offset by `margin`.

    With margin = -d a hit means every leg through a patch point within d of
    the centre is blocked; with margin = +d a miss means none of them is.
    """
    arr = blockers.offset(margin)
    if len(arr) == 0:
        return np.zeros(len(centers), dtype=bool)
    lift = np.array([0.0, 0.0, margin])
    c = centers + lift
    return segments_blocked(src_pos + lift, c, arr) | segments_blocked(c, rx_pos + lift, arr)


def configure_ris(arrays: Sequence[RisArray], world: SlotWorld, rx: Receiver, params: ScaParams, src: LedSource,
                  rng: np.random.Generator, path_model: str = "image_source",
                  warm_start: bool = False) -> RisConfiguration:
    """Orient every mirror to maximise its own path gain to `rx`.

    Per-mirror gains add without interacting, so all mirrors are searched as
    independent 2-angle problems in one batched SCA run. Outside the aperture
    the search maximises minus the miss distance, which steers the population
    toward orientations whose image path crosses the mirror. Mirrors that end
    up with no usable path keep the default orientation.
    """
    if not arrays:
        return RisConfiguration([], [], 0)
    sizes = [len(a) for a in arrays]
    centers = np.vstack([a.centers for a in arrays])
    wall_n = np.vstack([np.broadcast_to(a.wall_normal, (len(a), 3)) for a in arrays])
    wall_t = np.vstack([np.broadcast_to(a.wall_tangent, (len(a), 3)) for a in arrays])
    rho = np.concatenate([np.full(len(a), a.reflectivity) for a in arrays])
    half = arrays[0].half_size
    if params.bounds is None:
        limit = min(a.max_angle for a in arrays)
        params = params.with_bounds([(-limit, limit), (-limit, limit)])
    box = float(np.max(np.abs(np.asarray(params.bounds, dtype=float))))

    zeros = np.zeros(len(centers))
    n0, t0 = mirror_frame(wall_n, wall_t, zeros, zeros)
    default_gain = mirror_path_gains(src, rx, centers, n0, t0, half, rho, world.blockers, path_model)

    yaw, roll, gain = zeros.copy(), zeros.copy(), default_gain.copy()
    s_pos, r_pos = src.pose.position, rx.pose.position
    reach = half * np.sqrt(2.0)
    candidate = _reachable(src, rx, centers, half) & (rho > 0.0)
    candidate &= _specular_in_range(s_pos, r_pos, centers, wall_n, wall_t, half, box)
    candidate &= ~_legs_blocked(s_pos, r_pos, centers, world.blockers, -reach)
    live = np.nonzero(candidate)[0]
    evaluations = len(centers)
    if live.size:
        c, wn, wt, r = centers[live], wall_n[live], wall_t[live], rho[live]
        # rows whose legs clear every blocker skip the occlusion test
        near = _legs_blocked(s_pos, r_pos, c, world.blockers, reach)
        groups = [(rows, blk) for rows, blk in ((np.nonzero(~near)[0], ()), (np.nonzero(near)[0], world.blockers))
                  if rows.size]

        def objective(X):
            normals, tangents = mirror_frame(wn[:, None, :], wt[:, None, :], X[..., 0], X[..., 1])
            g = np.empty(X.shape[:-1])
            miss = np.empty(X.shape[:-1])
            for rows, blk in groups:
                g[rows], miss[rows] = mirror_path_gains(src, rx, c[rows, None, :], normals[rows], tangents[rows],
                                                        half, r[rows, None], blk, path_model, with_miss=True)
            return np.where(miss > 0.0, -miss, g)

        initial = None
        if warm_start:
            initial = _bisector_angles(s_pos, r_pos, c, wn, wt)
        best_x, best_f, _ = sca_optimize_batch(params, objective, rng, live.size, initial)
        evaluations += live.size * params.population * (params.iterations + 1)
        improved = best_f > default_gain[live]
        pick = live[improved]
        yaw[pick] = best_x[improved, 0]
        roll[pick] = best_x[improved, 1]
        gain[pick] = best_f[improved]
        logger.debug("configured %d of %d mirrors (%d searched, %d near a blocker)", pick.size, len(centers),
                     live.size, int(np.count_nonzero(near)))

    out_arrays, out_gains = [], []
    start = 0
    for a, n in zip(arrays, sizes):
        sl = slice(start, start + n)
        out_arrays.append(a.with_orientations(yaw[sl], roll[sl]))
        out_gains.append(gain[sl])
        start += n
    return RisConfiguration(out_arrays, out_gains, evaluations)
