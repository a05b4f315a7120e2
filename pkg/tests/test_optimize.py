import math
from types import SimpleNamespace

import numpy as np
import pytest

from map_vlc.channel import (
    LedSource, Receiver, RisArray, achievable_rate, los_gain, mirror_frame, mirror_path_gains,
    ris_gain_matrix, specular_orientation,
)
from map_vlc.geometry import DOWN, UP, BlockerArrays, CylinderBlocker, Pose, vec3
from map_vlc.optimize import (
    PlacementResult, ScaParams, _legs_blocked, _specular_in_range, configure_ris, map_rate_objective,
    place_map_exhaustive, place_map_per_slot, sca_optimize,
)
from map_vlc.scenario import Room, ScenarioRealization, SlotWorld, TrackGrid, UserState, build_track
from map_vlc.scenario import generate_realization


def sphere(x):
    return -float(np.sum(x ** 2))


def box(params=None, dim=2):
    return (params or ScaParams()).with_bounds([(-1.0, 1.0)] * dim)


# ---------------------------------------------------------------- sine cosine

def test_sca_finds_origin_of_negative_sphere():
    for seed in range(20):
        result = sca_optimize(box(), sphere, np.random.default_rng(seed))
        assert result.best_value >= -1e-2
        assert result.evaluations == 30 * 101


def test_sca_keeps_known_optimum_in_population():
    params = box(ScaParams(population=5, iterations=1))
    best, value = sca_optimize(params, sphere, np.random.default_rng(0), initial=np.zeros(2))
    np.testing.assert_array_equal(best, [0.0, 0.0])
    assert value == 0.0


def test_sca_is_seeded():
    a = sca_optimize(box(), sphere, np.random.default_rng(7))
    b = sca_optimize(box(), sphere, np.random.default_rng(7))
    np.testing.assert_array_equal(a.best_vector, b.best_vector)
    assert a.history == b.history


def test_sca_history_is_monotone():
    for seed in range(10):
        h = sca_optimize(box(dim=3), sphere, np.random.default_rng(seed)).history
        assert all(b >= a for a, b in zip(h, h[1:]))


def test_sca_vectorized_objective_matches_scalar():
    scalar = sca_optimize(box(), sphere, np.random.default_rng(3))
    vector = sca_optimize(box(), lambda X: -np.sum(X ** 2, axis=-1), np.random.default_rng(3), vectorized=True)
    assert vector.best_value == pytest.approx(scalar.best_value, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("kwargs", [dict(population=1), dict(iterations=0), dict(a=0.0)])
def test_sca_params_validated(kwargs):
    with pytest.raises(ValueError):
        ScaParams(**kwargs)


def test_sca_requires_bounds():
    with pytest.raises(ValueError):
        sca_optimize(ScaParams(), sphere, np.random.default_rng(0))


# ---------------------------------------------------------------- MAP placement

def centre_world(device=(5.0, 5.0), blockers=()):
    body = CylinderBlocker(vec3(device[0], device[1] - 0.36, 0.0))
    user = UserState(body, vec3(device[0], device[1], 0.75), UP.copy(), 1.0, vec3(5, 5, 0), vec3(0, 1, 0))
    return SlotWorld(0, user, BlockerArrays.of(list(blockers)), tuple(blockers))


def test_single_candidate(default_system):
    track = TrackGrid("grid", np.array([[1.0, 1.0, 3.0]]))
    result = place_map_exhaustive(track, centre_world(), map_rate_objective(default_system))
    assert isinstance(result, PlacementResult)
    assert result.chosen_index == 0 and result.evaluations == 1


def test_centre_user_picks_nearest_overhead_point(default_system):
    track = build_track("grid", Room(), 10)
    result = place_map_exhaustive(track, centre_world(), map_rate_objective(default_system))
    d = np.hypot(track.candidate_points[:, 0] - 5.0, track.candidate_points[:, 1] - 5.0)
    assert d[result.chosen_index] == pytest.approx(d.min())
    assert result.evaluations == 100


def test_all_blocked_ties_to_lowest_index(default_system):
    track = build_track("grid", Room(), 4)
    result = place_map_exhaustive(track, centre_world(), lambda pts, world: np.zeros(len(pts)))
    assert result.chosen_index == 0 and result.objective == 0.0


def test_empty_track_rejected(default_system):
    with pytest.raises(ValueError):
        place_map_exhaustive(TrackGrid("grid", np.zeros((0, 3))), centre_world(), map_rate_objective(default_system))


def test_placement_matches_independent_max_scan(default_system):
    system = default_system
    objective = map_rate_objective(system)
    for seed in range(100):
        world = generate_realization(system, seed).world(seed % system.scenario.slots)
        rx = system.receiver.at(world.user.device_pose)
        best_i, best_rate = 0, -1.0
        for i, p in enumerate(system.track_grid.candidate_points):
            h = los_gain(system.led.moved(position=p), rx, list(world.obstacles))
            rate = achievable_rate(h, system.led, rx, system.noise)
            if rate > best_rate:
                best_i, best_rate = i, rate
        result = place_map_exhaustive(system.track_grid, world, objective)
        assert result.chosen_index == best_i
        assert result.objective == pytest.approx(best_rate, rel=1e-12)


def test_objective_equals_reevaluated_rate(default_system):
    system = default_system
    world = generate_realization(system, 5).world(2)
    result = place_map_exhaustive(system.track_grid, world, map_rate_objective(system))
    rx = system.receiver.at(world.user.device_pose)
    h = los_gain(system.led.moved(position=result.chosen_point), rx, world.blockers)
    assert result.objective == pytest.approx(achievable_rate(h, system.led, rx, system.noise), rel=1e-9)


def test_static_world_keeps_the_same_point(default_system):
    world = centre_world((3.2, 6.1))
    realization = ScenarioRealization(Room(), default_system.track_grid, [world.user] * 10, [], 0)
    placements = place_map_per_slot(default_system.track_grid, realization, default_system)
    assert len({p.chosen_index for p in placements}) == 1


def test_per_slot_placement_beats_holding_the_first_point(default_system):
    system = default_system
    objective = map_rate_objective(system)
    for seed in range(10):
        realization = generate_realization(system, seed)
        placements = place_map_per_slot(system.track_grid, realization, system)
        held = placements[0].chosen_point[None, :]
        for k, p in enumerate(placements):
            assert p.objective >= float(objective(held, realization.world(k))[0])


def test_nested_tracks_never_lose(default_system):
    objective = map_rate_objective(default_system)
    tracks = [build_track("grid", Room(), r, anchor="corner") for r in (5, 9, 17)]
    for seed in range(20):
        world = generate_realization(default_system, seed).world(0)
        values = [place_map_exhaustive(t, world, objective).objective for t in tracks]
        assert values[0] <= values[1] <= values[2]


def test_injected_fixed_ap_dominates_fixed_ap():
    from map_vlc.config import load_system
    system = load_system(override={"track": {"include_fixed_ap": True}})
    objective = map_rate_objective(system)
    for seed in range(20):
        world = generate_realization(system, seed).world(0)
        rx = system.receiver.at(world.user.device_pose)
        fixed = achievable_rate(los_gain(system.led, rx, world.blockers), system.led, rx, system.noise)
        assert place_map_exhaustive(system.track_grid, world, objective).objective >= fixed


def test_toward_user_orientation_never_worse_overhead(default_system):
    from map_vlc.config import load_system
    tilted = load_system(override={"track": {"map_orientation": "toward_user"}})
    world = centre_world((2.0, 7.0))
    down = place_map_exhaustive(default_system.track_grid, world, map_rate_objective(default_system))
    aimed = place_map_exhaustive(tilted.track_grid, world, map_rate_objective(tilted))
    assert aimed.objective >= down.objective


# ---------------------------------------------------------------- mirror configuration

def facing(frm, to):
    d = np.asarray(to, float) - np.asarray(frm, float)
    return d / np.linalg.norm(d)


def single_mirror(center):
    return RisArray("x0", np.asarray(center, float)[None, :], vec3(1, 0, 0), vec3(0, 1, 0), 0.05, 0.95,
                    math.radians(60.0))


NO_BLOCKERS = SimpleNamespace(blockers=BlockerArrays())


def oracle_cases(n, seed=99):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        s = np.array([rng.uniform(2, 8), rng.uniform(2, 8), 3.0])
        r = np.array([rng.uniform(0.8, 4.0), rng.uniform(2, 8), 0.75])
        c = np.array([0.0, rng.uniform(4, 6), rng.uniform(1.3, 1.7)])
        yaw, roll = specular_orientation(s, r, c, np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
        if max(abs(yaw), abs(roll)) > math.radians(50):
            continue
        out.append((s, r, c))
    return out


def grid_oracle(src, rx, c, steps=360):
    lim = math.radians(60.0)
    axis = np.linspace(-lim, lim, steps)
    Y, R = np.meshgrid(axis, axis, indexing="ij")
    normals, tangents = mirror_frame(vec3(1, 0, 0), vec3(0, 1, 0), Y, R)
    return float(np.max(mirror_path_gains(src, rx, c, normals, tangents, 0.05, 0.95)))


def test_symmetric_mirror_stays_flat():
    src = LedSource(Pose(vec3(2, 5, 2.25), DOWN))
    r = vec3(2, 5, 0.75)
    c = vec3(0, 5, 1.5)
    rx = Receiver(Pose(r, facing(r, c)))
    config = configure_ris([single_mirror(c)], NO_BLOCKERS, rx, ScaParams(), src, np.random.default_rng(1))
    yaw, roll = config.arrays[0].yaw[0], config.arrays[0].roll[0]
    assert abs(yaw) <= math.radians(2) and abs(roll) <= math.radians(2)
    assert config.total >= 0.95 * grid_oracle(src, rx, c)
    assert config.total > 0


@pytest.mark.slow
def test_sca_matches_angle_grid_oracle():
    for k, (s, r, c) in enumerate(oracle_cases(20)):
        src = LedSource(Pose(s, DOWN))
        rx = Receiver(Pose(r, facing(r, c)))
        config = configure_ris([single_mirror(c)], NO_BLOCKERS, rx, ScaParams(), src, np.random.default_rng(k))
        assert config.total >= 0.95 * grid_oracle(src, rx, c)


def test_blocked_mirror_reports_zero():
    src = LedSource(Pose(vec3(5, 5, 3), DOWN))
    r = vec3(2, 5, 0.75)
    c = vec3(0, 5, 1.5)
    rx = Receiver(Pose(r, facing(r, c)))
    blocker = [CylinderBlocker(vec3(1.0, 5.0, 0.0))]
    world = SimpleNamespace(blockers=BlockerArrays.of(blocker))
    config = configure_ris([single_mirror(c)], world, rx, ScaParams(), src, np.random.default_rng(0))
    assert config.total == 0.0
    assert config.arrays[0].yaw[0] == 0.0 and config.arrays[0].roll[0] == 0.0
    # shadowed for every patch point, so never searched
    assert config.evaluations == 1


def test_configured_gain_beats_default_and_random_orientations(small_system):
    system = small_system
    world = generate_realization(system, 4).world(0)
    rx = system.receiver.at(world.user.device_pose)
    arrays = system.ris_arrays
    config = configure_ris(arrays, world, rx, system.optimizer, system.led, np.random.default_rng(0),
                           "image_source", warm_start=True)
    default = sum(float(np.sum(g)) for g in ris_gain_matrix(system.led, arrays, rx, world.blockers))
    assert config.total >= default
    configured = ris_gain_matrix(system.led, config.arrays, rx, world.blockers)
    assert sum(float(np.sum(g)) for g in configured) == pytest.approx(config.total, rel=1e-12)
    rng = np.random.default_rng(5)
    lim = math.radians(60.0)
    for _ in range(100):
        drawn = [a.with_orientations(rng.uniform(-lim, lim, len(a)), rng.uniform(-lim, lim, len(a)))
                 for a in arrays]
        total = sum(float(np.sum(g)) for g in ris_gain_matrix(system.led, drawn, rx, world.blockers))
        assert config.total >= total


def test_by_wall_sums_to_total(small_system):
    system = small_system
    world = generate_realization(system, 6).world(1)
    rx = system.receiver.at(world.user.device_pose)
    config = configure_ris(system.ris_arrays, world, rx, system.optimizer, system.led, np.random.default_rng(2),
                           system.ris.path_model, system.ris.warm_start)
    assert set(config.by_wall()) == {"x0", "x1", "y0", "y1"}
    assert sum(config.by_wall().values()) == pytest.approx(config.total, rel=1e-12, abs=0.0)


def test_mirror_needing_too_much_tilt_is_never_searched():
    # source and receiver both far along the wall: the specular yaw is past 80 degrees
    c = vec3(0, 5, 1.5)
    src = LedSource(Pose(vec3(0.5, 9, 3), DOWN))
    r = vec3(0.5, 8, 0.75)
    rx = Receiver(Pose(r, facing(r, c)))
    assert grid_oracle(src, rx, c) == 0.0
    config = configure_ris([single_mirror(c)], NO_BLOCKERS, rx, ScaParams(), src, np.random.default_rng(0))
    assert config.total == 0.0
    assert config.evaluations == 1


def tilt_grid(a, limit, steps=41):
    axis = np.linspace(-limit, limit, steps)
    Y, R = np.meshgrid(axis, axis, indexing="ij")
    return mirror_frame(a.wall_normal, a.wall_tangent, Y, R)


@pytest.mark.parametrize("limit_deg", [10.0, 60.0])
def test_skipped_mirrors_have_no_path_inside_the_tilt_box(small_system, limit_deg):
    system = small_system.with_blockers(12)
    limit = math.radians(limit_deg)
    src = system.led.pose.position
    skipped = 0
    for seed in range(4):
        world = generate_realization(system, seed).world(seed % system.scenario.slots)
        rx = system.receiver.at(world.user.device_pose)
        for a in system.ris_arrays:
            wn = np.broadcast_to(a.wall_normal, a.centers.shape)
            wt = np.broadcast_to(a.wall_tangent, a.centers.shape)
            keep = _specular_in_range(src, rx.pose.position, a.centers, wn, wt, a.half_size, limit)
            keep &= ~_legs_blocked(src, rx.pose.position, a.centers, world.blockers, -a.half_size * math.sqrt(2))
            out = np.nonzero(~keep)[0]
            if not out.size:
                continue
            skipped += out.size
            normals, tangents = tilt_grid(a, limit)
            g = mirror_path_gains(system.led, rx, a.centers[out][:, None, None, :], normals[None], tangents[None],
                                  a.half_size, a.reflectivity, world.blockers)
            np.testing.assert_array_equal(g, 0.0)
    if limit_deg == 10.0:
        assert skipped > 0


def test_mirrors_clear_of_grown_blockers_ignore_them(small_system):
    system = small_system.with_blockers(12)
    src = system.led.pose.position
    lim = math.radians(60.0)
    for seed in range(3):
        world = generate_realization(system, seed).world(0)
        rx = system.receiver.at(world.user.device_pose)
        for a in system.ris_arrays:
            near = _legs_blocked(src, rx.pose.position, a.centers, world.blockers, a.half_size * math.sqrt(2))
            clear = np.nonzero(~near)[0]
            normals, tangents = tilt_grid(a, lim, steps=21)
            args = (system.led, rx, a.centers[clear][:, None, None, :], normals[None], tangents[None],
                    a.half_size, a.reflectivity)
            np.testing.assert_array_equal(mirror_path_gains(*args, world.blockers), mirror_path_gains(*args))


def test_configured_total_matches_full_occlusion_check(small_system):
    system = small_system.with_blockers(12)
    for seed in range(3):
        world = generate_realization(system, seed).world(1)
        rx = system.receiver.at(world.user.device_pose)
        config = configure_ris(system.ris_arrays, world, rx, system.optimizer, system.led,
                               np.random.default_rng(seed), "image_source", warm_start=True)
        configured = ris_gain_matrix(system.led, config.arrays, rx, world.blockers)
        assert sum(float(np.sum(g)) for g in configured) == pytest.approx(config.total, rel=1e-12, abs=0.0)
