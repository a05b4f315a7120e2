import copy
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

from .channel import PATH_MODELS, RATE_FORMULAS, WALLS, LedSource, NoiseModel, Receiver
from .geometry import DOWN, UP, OrientationModel, Pose, vec3
from .optimize import ScaParams
from .scenario import ANCHORS, LAYOUTS, MIN_RESOLUTION, Room, ScenarioSettings, TrackGrid, build_track
from .utils import ConfigError, ConfigParseError, content_hash, read_json

SYSTEM_MODELS = ("map_aided", "ris_aided", "fixed_ap", "ris_only")
MAP_ORIENTATIONS = ("down", "toward_user")

# Reference scenario; an empty config file reproduces it.
CONFIG = {
    "room": {"width": 10.0, "depth": 10.0, "height": 3.0},
    "channel": {
        "transmit_power": 1.0,
        "semi_angle_deg": 60.0,
        "fixed_ap": None,
        "pd_area": 1e-4,
        "fov_deg": 70.0,
        "responsivity": 0.53,
        "filter_gain": 1.0,
        "refractive_index": 1.5,
        "thermal_psd": 1e-21,
        "bandwidth": 2e8,
        "rate_formula": "imdd",
    },
    "ris": {
        "walls": ["x0", "x1", "y0", "y1"],
        "rows": 10,
        "cols": 40,
        "mirror_size": 0.1,
        "center_height": 1.5,
        "reflectivity": 0.95,
        "max_angle_deg": 60.0,
        "path_model": "double_path_loss",
        "warm_start": True,
    },
    "track": {
        "layout": "grid",
        "resolution": 10,
        "anchor": "cell",
        "map_orientation": "down",
        "include_fixed_ap": False,
    },
    "scenario": {
        "slots": 10,
        "slot_duration": 1.0,
        "speed_min": 0.5,
        "speed_max": 2.0,
        "blockers": 16,
        "blocker_diameter": 0.30,
        "blocker_height": 1.65,
        "device_height": 0.75,
        "device_offset": 0.36,
        "wall_margin": 0.5,
        "resample_blockers": False,
        "max_attempts": 10000,
        "corner": [0.5, 0.5],
        "orientation": {
            "polar": "uniform",
            "polar_min_deg": 0.0,
            "polar_max_deg": 45.0,
            "polar_mean_deg": 0.0,
            "polar_std_deg": 0.0,
        },
    },
    "optimizer": {"population": 30, "iterations": 100, "a": 2.0},
    "experiment": {
        "models": list(SYSTEM_MODELS),
        "instances": 500,
        "master_seed": 20250101,
        "power_values": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
        "blocker_values": [1, 2, 4, 8, 16, 32],
        "blockers_power": 2.0,
        "mobility_power": 1.0,
        "mobility_include_fixed_ap": True,
        "grid_resolutions": [5, 10, 20, 50, 100],
        "grid_anchor": "cell",
    },
}


def deep_update(d: dict, u: dict) -> dict:
    for k, v in u.items():
        if isinstance(v, dict) and isinstance(d.get(k), dict):
            deep_update(d[k], v)
        else:
            d[k] = v
    return d


def merged_config(override: Optional[dict] = None) -> dict:
    tree = copy.deepcopy(CONFIG)
    if override:
        deep_update(tree, copy.deepcopy(override))
    return tree


def load_config_file(path: Optional[str]) -> dict:
    """Raw user tree from a JSON file (empty when no path is given)."""
    if not path:
        return {}
    tree = read_json(path, what=f"config {path}")
    if not isinstance(tree, dict):
        raise ConfigParseError(f"config {path} must hold a JSON object at top level")
    return tree


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _unknown_keys(tree: dict, defaults: dict, section: str, out: List):
    for k, v in tree.items():
        if k not in defaults:
            out.append((section, k, "unknown field"))
        elif isinstance(defaults[k], dict):
            if not isinstance(v, dict):
                out.append((section, k, "must be an object"))
            else:
                _unknown_keys(v, defaults[k], f"{section}.{k}", out)


def validate_config(tree: dict) -> List[Tuple[str, str, str]]:
    """Every invariant violation of a merged config tree as (section, field, message)."""
    out: List[Tuple[str, str, str]] = []
    for section, body in tree.items():
        if section not in CONFIG:
            out.append((section, "*", "unknown section"))
        elif not isinstance(body, dict):
            out.append((section, "*", "must be an object"))
        else:
            _unknown_keys(body, CONFIG[section], section, out)
    if out:
        return out

    def need(ok: bool, section: str, name: str, message: str):
        if not ok:
            out.append((section, name, message))

    def positive(section: str, name: str):
        v = tree[section][name]
        need(_is_num(v) and v > 0, section, name, f"must be a positive number, got {v!r}")

    room = tree["room"]
    for name in ("width", "depth", "height"):
        positive("room", name)
    room_ok = all(_is_num(room[n]) and room[n] > 0 for n in ("width", "depth", "height"))

    ch = tree["channel"]
    v = ch["semi_angle_deg"]
    need(_is_num(v) and 0 < v < 90, "channel", "semi_angle_deg", f"semi-angle must lie in (0, 90) degrees, got {v!r}")
    v = ch["fov_deg"]
    need(_is_num(v) and 0 < v <= 90, "channel", "fov_deg", f"FoV must be in (0, 90] degrees, got {v!r}")
    for name in ("pd_area", "responsivity", "filter_gain", "refractive_index", "thermal_psd", "bandwidth"):
        positive("channel", name)
    v = ch["transmit_power"]
    need(_is_num(v) and v >= 0, "channel", "transmit_power", f"must be non-negative, got {v!r}")
    need(ch["rate_formula"] in RATE_FORMULAS, "channel", "rate_formula", f"expected one of {RATE_FORMULAS}")
    ap = ch["fixed_ap"]
    if ap is not None:
        ok = isinstance(ap, list) and len(ap) == 2 and all(_is_num(c) for c in ap)
        if ok and room_ok:
            ok = 0 <= ap[0] <= room["width"] and 0 <= ap[1] <= room["depth"]
        need(ok, "channel", "fixed_ap", "must be null or [x, y] inside the room footprint")

    ris = tree["ris"]
    walls = ris["walls"]
    need(isinstance(walls, list) and all(w in WALLS for w in walls) and len(set(walls)) == len(walls),
         "ris", "walls", f"must be a list of distinct walls from {tuple(WALLS)}")
    for name in ("rows", "cols"):
        need(_is_int(ris[name]) and ris[name] >= 1, "ris", name, "must be an integer >= 1")
    positive("ris", "mirror_size")
    v = ris["reflectivity"]
    need(_is_num(v) and 0 <= v <= 1, "ris", "reflectivity", f"must lie in [0, 1], got {v!r}")
    v = ris["max_angle_deg"]
    need(_is_num(v) and 0 < v < 90, "ris", "max_angle_deg", f"must lie in (0, 90) degrees, got {v!r}")
    need(ris["path_model"] in PATH_MODELS, "ris", "path_model", f"expected one of {PATH_MODELS}")
    need(isinstance(ris["warm_start"], bool), "ris", "warm_start", "must be true or false")
    if room_ok and _is_int(ris["rows"]) and _is_int(ris["cols"]) and _is_num(ris["mirror_size"]) \
            and _is_num(ris["center_height"]):
        span_w = ris["cols"] * ris["mirror_size"]
        span_h = ris["rows"] * ris["mirror_size"]
        need(span_w <= min(room["width"], room["depth"]), "ris", "cols", "mirror array wider than a wall")
        need(span_h / 2 <= ris["center_height"] <= room["height"] - span_h / 2, "ris", "center_height",
             "mirror array must fit between floor and ceiling")

    tr = tree["track"]
    need(tr["layout"] in LAYOUTS, "track", "layout", f"expected one of {LAYOUTS}")
    need(tr["anchor"] in ANCHORS, "track", "anchor", f"expected one of {ANCHORS}")
    need(tr["map_orientation"] in MAP_ORIENTATIONS, "track", "map_orientation", f"expected one of {MAP_ORIENTATIONS}")
    need(isinstance(tr["include_fixed_ap"], bool), "track", "include_fixed_ap", "must be true or false")
    res = tr["resolution"]
    if tr["layout"] in LAYOUTS:
        need(_is_int(res) and res >= MIN_RESOLUTION[tr["layout"]], "track", "resolution",
             f"{tr['layout']} layout needs an integer resolution >= {MIN_RESOLUTION[tr['layout']]}, got {res!r}")

    sc = tree["scenario"]
    need(_is_int(sc["slots"]) and sc["slots"] >= 1, "scenario", "slots", "must be an integer >= 1")
    need(_is_int(sc["blockers"]) and sc["blockers"] >= 0, "scenario", "blockers",
         f"must be a non-negative integer, got {sc['blockers']!r}")
    need(_is_int(sc["max_attempts"]) and sc["max_attempts"] >= 1, "scenario", "max_attempts", "must be an integer >= 1")
    for name in ("slot_duration", "speed_min", "speed_max", "blocker_diameter", "blocker_height", "device_height"):
        positive("scenario", name)
    for name in ("device_offset", "wall_margin"):
        v = sc[name]
        need(_is_num(v) and v >= 0, "scenario", name, f"must be non-negative, got {v!r}")
    if _is_num(sc["speed_min"]) and _is_num(sc["speed_max"]):
        need(sc["speed_min"] <= sc["speed_max"], "scenario", "speed_min", "must not exceed speed_max")
    need(isinstance(sc["resample_blockers"], bool), "scenario", "resample_blockers", "must be true or false")
    if room_ok and _is_num(sc["wall_margin"]):
        need(2 * sc["wall_margin"] < min(room["width"], room["depth"]), "scenario", "wall_margin",
             "leaves no room for the user")
        if _is_num(sc["device_offset"]):
            need(sc["device_offset"] <= sc["wall_margin"], "scenario", "device_offset",
                 "device would leave the room; keep device_offset <= wall_margin")
    corner = sc["corner"]
    ok = isinstance(corner, list) and len(corner) == 2 and all(_is_num(c) for c in corner)
    if ok and room_ok:
        ok = 0 <= corner[0] <= room["width"] and 0 <= corner[1] <= room["depth"]
    need(ok, "scenario", "corner", "must be [x, y] inside the room footprint")
    o = sc["orientation"]
    if all(_is_num(o[n]) for n in ("polar_min_deg", "polar_max_deg", "polar_mean_deg", "polar_std_deg")):
        for name, message in OrientationModel(**o).violations():
            out.append(("scenario.orientation", name, message))
    else:
        out.append(("scenario.orientation", "*", "polar angles must be numbers"))

    op = tree["optimizer"]
    need(_is_int(op["population"]) and op["population"] >= 2, "optimizer", "population", "must be an integer >= 2")
    need(_is_int(op["iterations"]) and op["iterations"] >= 1, "optimizer", "iterations", "must be an integer >= 1")
    positive("optimizer", "a")

    ex = tree["experiment"]
    models = ex["models"]
    need(isinstance(models, list) and models and all(m in SYSTEM_MODELS for m in models)
         and len(set(models)) == len(models), "experiment", "models",
         f"must be a non-empty list of distinct models from {SYSTEM_MODELS}")
    need(_is_int(ex["instances"]) and ex["instances"] >= 1, "experiment", "instances", "must be an integer >= 1")
    need(_is_int(ex["master_seed"]) and ex["master_seed"] >= 0, "experiment", "master_seed",
         "must be a non-negative integer")
    for name, check, message in (
        ("power_values", lambda x: _is_num(x) and x >= 0, "non-negative numbers"),
        ("blocker_values", lambda x: _is_int(x) and x >= 0, "non-negative integers"),
        ("grid_resolutions", lambda x: _is_int(x) and x >= 1, "integers >= 1"),
    ):
        vals = ex[name]
        need(isinstance(vals, list) and vals and all(check(x) for x in vals), "experiment", name,
             f"must be a non-empty list of {message}")
    for name in ("blockers_power", "mobility_power"):
        v = ex[name]
        need(_is_num(v) and v >= 0, "experiment", name, f"must be non-negative, got {v!r}")
    need(isinstance(ex["mobility_include_fixed_ap"], bool), "experiment", "mobility_include_fixed_ap",
         "must be true or false")
    grids = ex["grid_resolutions"]
    if tr["layout"] in LAYOUTS and isinstance(grids, list) and all(_is_int(x) and x >= 1 for x in grids):
        floor = MIN_RESOLUTION[tr["layout"]]
        need(all(x >= floor for x in grids), "experiment", "grid_resolutions",
             f"{tr['layout']} layout needs every resolution >= {floor}, got {grids!r}")
    need(ex["grid_anchor"] in ANCHORS, "experiment", "grid_anchor", f"expected one of {ANCHORS}")
    return out


@dataclass(frozen=True)
class TrackSettings:
    layout: str = "grid"
    resolution: int = 10
    anchor: str = "cell"
    map_orientation: str = "down"
    include_fixed_ap: bool = False


@dataclass(frozen=True)
class RisSettings:
    walls: Tuple[str, ...] = ("x0", "x1", "y0", "y1")
    rows: int = 10
    cols: int = 40
    mirror_size: float = 0.1
    center_height: float = 1.5
    reflectivity: float = 0.95
    max_angle_deg: float = 60.0
    path_model: str = "double_path_loss"
    warm_start: bool = True


@dataclass(frozen=True)
class ExperimentSettings:
    models: Tuple[str, ...] = SYSTEM_MODELS
    instances: int = 500
    master_seed: int = 20250101
    power_values: Tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
    blocker_values: Tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    blockers_power: float = 2.0
    mobility_power: float = 1.0
    mobility_include_fixed_ap: bool = True
    grid_resolutions: Tuple[int, ...] = (5, 10, 20, 50, 100)
    grid_anchor: str = "cell"


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Typed, validated view of a config tree; `tree` is kept for hashing and manifests."""
    room: Room
    led: LedSource
    receiver: Receiver
    noise: NoiseModel
    rate_formula: str
    ris: RisSettings
    track: TrackSettings
    scenario: ScenarioSettings
    optimizer: ScaParams
    experiment: ExperimentSettings
    tree: Dict[str, Any] = field(default_factory=dict)

    @cached_property
    def track_grid(self) -> TrackGrid:
        grid = build_track(self.track.layout, self.room, self.track.resolution, self.track.anchor)
        if self.track.include_fixed_ap:
            grid = grid.with_points([self.led.pose.position])
        return grid

    @cached_property
    def ris_arrays(self):
        from .channel import build_ris_arrays
        r = self.ris
        return build_ris_arrays(self.room.width, self.room.depth, r.walls, r.rows, r.cols, r.mirror_size,
                                r.center_height, r.reflectivity, r.max_angle_deg)

    @property
    def config_hash(self) -> str:
        return content_hash(self.tree)

    def _with_tree(self, section: str, key: str, value, **changes) -> "SystemConfig":
        tree = copy.deepcopy(self.tree)
        tree.setdefault(section, {})[key] = value
        return replace(self, tree=tree, **changes)

    def with_power(self, power: float) -> "SystemConfig":
        return self._with_tree("channel", "transmit_power", power,
                               led=self.led.moved(transmit_power=power))

    def with_blockers(self, count: int) -> "SystemConfig":
        return self._with_tree("scenario", "blockers", count, scenario=replace(self.scenario, blockers=count))

    def with_track(self, resolution: int, anchor: Optional[str] = None) -> "SystemConfig":
        track = replace(self.track, resolution=resolution, anchor=anchor or self.track.anchor)
        sys_ = self._with_tree("track", "resolution", resolution, track=track)
        sys_.tree["track"]["anchor"] = track.anchor
        return sys_

    def with_fixed_ap_candidate(self, include: bool) -> "SystemConfig":
        return self._with_tree("track", "include_fixed_ap", include,
                               track=replace(self.track, include_fixed_ap=include))

    def with_instances(self, instances: int) -> "SystemConfig":
        return self._with_tree("experiment", "instances", instances,
                               experiment=replace(self.experiment, instances=instances))

    def with_seed(self, seed: int) -> "SystemConfig":
        return self._with_tree("experiment", "master_seed", seed,
                               experiment=replace(self.experiment, master_seed=seed))


def build_system(tree: dict) -> SystemConfig:
    """Typed system from a merged tree; raises ConfigError listing every violation."""
    violations = validate_config(tree)
    if violations:
        raise ConfigError(violations)
    room_t, ch, ris, tr, sc, op, ex = (tree[k] for k in
                                       ("room", "channel", "ris", "track", "scenario", "optimizer", "experiment"))
    room = Room(float(room_t["width"]), float(room_t["depth"]), float(room_t["height"]))
    ap = ch["fixed_ap"] or [room.width / 2, room.depth / 2]
    led = LedSource(Pose(vec3(ap[0], ap[1], room.height), DOWN), float(ch["transmit_power"]),
                    float(ch["semi_angle_deg"]))
    receiver = Receiver(Pose(vec3(room.width / 2, room.depth / 2, float(sc["device_height"])), UP),
                        float(ch["pd_area"]), float(ch["fov_deg"]), float(ch["responsivity"]),
                        float(ch["filter_gain"]), float(ch["refractive_index"]))
    noise = NoiseModel(float(ch["thermal_psd"]), float(ch["bandwidth"]))
    scenario = ScenarioSettings(
        slots=sc["slots"], slot_duration=float(sc["slot_duration"]), speed_min=float(sc["speed_min"]),
        speed_max=float(sc["speed_max"]), blockers=sc["blockers"], blocker_diameter=float(sc["blocker_diameter"]),
        blocker_height=float(sc["blocker_height"]), device_height=float(sc["device_height"]),
        device_offset=float(sc["device_offset"]), wall_margin=float(sc["wall_margin"]),
        resample_blockers=sc["resample_blockers"], max_attempts=sc["max_attempts"],
        corner=(float(sc["corner"][0]), float(sc["corner"][1])),
        orientation=OrientationModel(**sc["orientation"]),
    )
    return SystemConfig(
        room=room,
        led=led,
        receiver=receiver,
        noise=noise,
        rate_formula=ch["rate_formula"],
        ris=RisSettings(tuple(ris["walls"]), ris["rows"], ris["cols"], float(ris["mirror_size"]),
                        float(ris["center_height"]), float(ris["reflectivity"]), float(ris["max_angle_deg"]),
                        ris["path_model"], ris["warm_start"]),
        track=TrackSettings(tr["layout"], tr["resolution"], tr["anchor"], tr["map_orientation"],
                            tr["include_fixed_ap"]),
        scenario=scenario,
        optimizer=ScaParams(op["population"], op["iterations"], float(op["a"])),
        experiment=ExperimentSettings(tuple(ex["models"]), ex["instances"], ex["master_seed"],
                                      tuple(float(p) for p in ex["power_values"]), tuple(ex["blocker_values"]),
                                      float(ex["blockers_power"]), float(ex["mobility_power"]),
                                      ex["mobility_include_fixed_ap"], tuple(ex["grid_resolutions"]), ex["grid_anchor"]),
        tree=copy.deepcopy(tree),
    )


def load_system(path: Optional[str] = None, override: Optional[dict] = None) -> SystemConfig:
    """Defaults <- config file <- override, validated and typed."""
    tree = merged_config(load_config_file(path))
    if override:
        deep_update(tree, copy.deepcopy(override))
    return build_system(tree)


def derived_parameters(system: SystemConfig) -> Dict[str, float]:
    """Quantities implied by the parameter list (echoed by `validate`)."""
    return {
        "lambertian_order": system.led.lambertian_order,
        "concentrator_gain": system.receiver.concentrator_gain,
        "noise_power": system.noise.noise_power,
        "candidates": len(system.track_grid),
        "mirrors": len(system.ris.walls) * system.ris.rows * system.ris.cols,
    }
