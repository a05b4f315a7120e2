"""Seeded Monte Carlo campaigns over the four downlink systems.

Channel gains do not depend on transmit power, and neither does MAP placement
or mirror configuration, so every (instance, slot) is solved once and mapped
to rates for each power level. Instances run in a process pool and are merged
by index; the worker count never changes an output byte.
"""
import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .channel import electrical_snr, los_gain, rate_from_snr, ris_gain_by_wall, ris_gain_matrix
from .config import SystemConfig
from .geometry import segments_blocked
from .logs import get_logger
from .optimize import configure_ris, map_gain_objective, place_map_exhaustive
from .scenario import corner_to_center_path, generate_realization
from .utils import ConfigError, OutputError, TraceIndexError, ensure_dir, sanitize_name

logger = get_logger(__name__)

EXPERIMENTS = ("power", "blockers", "mobility", "grid")
PATHS = ("random_waypoint", "corner")


class SystemModel(str, Enum):
    MAP_AIDED = "map_aided"
    RIS_AIDED = "ris_aided"
    FIXED_AP = "fixed_ap"
    RIS_ONLY = "ris_only"


RIS_MODELS = (SystemModel.RIS_AIDED, SystemModel.RIS_ONLY)


def _models(models: Sequence) -> Tuple[SystemModel, ...]:
    return tuple(SystemModel(m) for m in models)


def instance_seed(master_seed: int, index: int) -> int:
    """Seed of the index-th instance; depends only on (master_seed, index)."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _sca_rng(seed: int, slot: int) -> np.random.Generator:
    # stream 3 of the realization seed; 0-2 drive user, orientation and blockers
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3, slot)))


def _realize(system: SystemConfig, seed: int, path: str):
    if path == "corner":
        return corner_to_center_path(system, seed)
    if path == "random_waypoint":
        return generate_realization(system, seed)
    raise ValueError(f"unknown user path {path!r}, expected one of {PATHS}")


@dataclass
class InstanceGains:
    """Per-slot channel gains of one instance, keyed by model."""
    gains: Dict[SystemModel, np.ndarray]
    placement_elapsed: Optional[np.ndarray] = None


def instance_gains(system: SystemConfig, seed: int, models: Sequence, path: str = "random_waypoint") -> InstanceGains:
    models = _models(models)
    realization = _realize(system, seed, path)
    S = realization.slots
    gains = {m: np.zeros(S) for m in models}
    elapsed = np.zeros(S) if SystemModel.MAP_AIDED in models else None
    objective = map_gain_objective(system)
    for k in range(S):
        world = realization.world(k)
        rx = system.receiver.at(world.user.device_pose)
        los = None
        if SystemModel.FIXED_AP in models or SystemModel.RIS_AIDED in models:
            los = los_gain(system.led, rx, world.blockers)
        if SystemModel.FIXED_AP in models:
            gains[SystemModel.FIXED_AP][k] = los
        if SystemModel.MAP_AIDED in models:
            placement = place_map_exhaustive(system.track_grid, world, objective)
            gains[SystemModel.MAP_AIDED][k] = placement.objective
            elapsed[k] = placement.elapsed
        if any(m in models for m in RIS_MODELS):
            config = configure_ris(system.ris_arrays, world, rx, system.optimizer, system.led, _sca_rng(seed, k),
                                   system.ris.path_model, system.ris.warm_start)
            if SystemModel.RIS_AIDED in models:
                gains[SystemModel.RIS_AIDED][k] = los + config.total
            if SystemModel.RIS_ONLY in models:
                gains[SystemModel.RIS_ONLY][k] = config.total
    return InstanceGains(gains, elapsed)


def gains_to_rates(gains, power: float, system: SystemConfig) -> np.ndarray:
    snr = electrical_snr(gains, power, system.receiver, system.noise)
    return np.asarray(rate_from_snr(snr, system.noise.bandwidth, system.rate_formula), dtype=float)


def run_instance(model, system: SystemConfig, seed: int, path: str = "random_waypoint") -> np.ndarray:
    """Per-slot rates (bits/s) of one model on one seeded realization."""
    model = SystemModel(model)
    g = instance_gains(system, seed, [model], path).gains[model]
    return gains_to_rates(g, system.led.transmit_power, system)


def _variant_task(args) -> List[InstanceGains]:
    variants, seed, models, path = args
    return [instance_gains(v, seed, models, path) for v in variants]


def resolve_workers(override: Optional[int] = None) -> int:
    if override is not None:
        n = override
    else:
        raw = os.getenv("MAPVLC_WORKERS")
        if raw is None:
            return os.cpu_count() or 1
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError([("environment", "MAPVLC_WORKERS", f"must be an integer, got {raw!r}")])
    if n < 1:
        raise ConfigError([("environment", "workers", f"worker count must be >= 1, got {n}")])
    return n


def _map(fn: Callable, items: List, workers: int) -> List:
    """Ordered map; inline for one worker or one item."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def _campaign(system: SystemConfig, variants: Sequence[SystemConfig], models, path: str,
              workers: int) -> List[List[InstanceGains]]:
    """[instance][variant] gains for every instance of the campaign."""
    ex = system.experiment
    seeds = [instance_seed(ex.master_seed, i) for i in range(ex.instances)]
    items = [(tuple(variants), s, tuple(m.value for m in models), path) for s in seeds]
    start = time.perf_counter()
    out = _map(_variant_task, items, workers)
    logger.info("%d instances x %d sweep points solved in %.1f s (%d workers)",
                len(seeds), len(variants), time.perf_counter() - start, workers)
    return out


@dataclass
class SweepResult:
    """Per-instance rates of a sweep; rates[model] has shape (values, instances, slots)."""
    experiment: str
    sweep_name: str
    sweep_values: Tuple
    models: Tuple[str, ...]
    rates: Dict[str, np.ndarray]
    provenance: Dict = field(default_factory=dict)
    values_are_slots: bool = False
    timing: Optional[Dict] = None

    def per_instance(self, model: str, value_index: int) -> np.ndarray:
        """Instance means (over slots) at one sweep point."""
        return self.rates[model][value_index].mean(axis=1)

    def mean(self, model: str, value_index: int) -> float:
        return float(np.mean(self.per_instance(model, value_index)))

    def stderr(self, model: str, value_index: int) -> float:
        x = self.per_instance(model, value_index)
        if x.size < 2:
            return 0.0
        return float(np.std(x, ddof=1) / np.sqrt(x.size))

    def means(self, model: str) -> np.ndarray:
        return np.array([self.mean(model, i) for i in range(len(self.sweep_values))])

    def summary_rows(self) -> List[Tuple[str, object, float, float]]:
        return [(m, v, self.mean(m, i), self.stderr(m, i))
                for m in self.models for i, v in enumerate(self.sweep_values)]


def _provenance(system: SystemConfig) -> Dict:
    return {
        "config_hash": system.config_hash,
        "master_seed": system.experiment.master_seed,
        "instances": system.experiment.instances,
        "version": __version__,
    }


def _stack(per_instance: List[List[InstanceGains]], model: SystemModel) -> np.ndarray:
    """(variants, instances, slots) gains."""
    return np.stack([np.stack([v.gains[model] for v in inst]) for inst in per_instance], axis=1)


def sweep_power(system: SystemConfig, workers: Optional[int] = None) -> SweepResult:
    """Same realizations at every power level; placement and mirror angles are reused."""
    models = _models(system.experiment.models)
    powers = system.experiment.power_values
    logger.info("power sweep: %s W, models %s", list(powers), [m.value for m in models])
    solved = _campaign(system, [system], models, "random_waypoint", resolve_workers(workers))
    rates = {}
    for m in models:
        g = _stack(solved, m)[0]
        rates[m.value] = np.stack([gains_to_rates(g, p, system) for p in powers])
    return SweepResult("power", "power_w", tuple(powers), tuple(m.value for m in models), rates,
                       _provenance(system))


def sweep_blockers(system: SystemConfig, workers: Optional[int] = None) -> SweepResult:
    ex = system.experiment
    models = _models(ex.models)
    counts = ex.blocker_values
    logger.info("blocker sweep: %s blockers at %.2f W", list(counts), ex.blockers_power)
    variants = [system.with_blockers(n) for n in counts]
    solved = _campaign(system, variants, models, "random_waypoint", resolve_workers(workers))
    rates = {m.value: gains_to_rates(_stack(solved, m), ex.blockers_power, system) for m in models}
    return SweepResult("blockers", "blockers", tuple(counts), tuple(m.value for m in models), rates,
                       _provenance(system))


def _mobility_variant(system: SystemConfig) -> SystemConfig:
    """The corner walk keeps the fixed AP position among the MAP candidates unless switched off."""
    if system.experiment.mobility_include_fixed_ap:
        return system.with_fixed_ap_candidate(True)
    return system


def sweep_mobility(system: SystemConfig, workers: Optional[int] = None) -> SweepResult:
    """Corner-to-centre walk; the sweep value is the slot index."""
    ex = system.experiment
    models = _models(ex.models)
    if system.scenario.slots < 2:
        raise ConfigError([("scenario", "slots", "corner-to-center path needs at least 2 slots")])
    logger.info("mobility sweep: %d slots from corner %s at %.2f W",
                system.scenario.slots, list(system.scenario.corner), ex.mobility_power)
    solved = _campaign(system, [_mobility_variant(system)], models, "corner", resolve_workers(workers))
    rates = {}
    for m in models:
        g = _stack(solved, m)[0]
        r = gains_to_rates(g, ex.mobility_power, system)
        rates[m.value] = np.transpose(r)[:, :, None]
    slots = tuple(range(system.scenario.slots))
    return SweepResult("mobility", "slot", slots, tuple(m.value for m in models), rates,
                       _provenance(system), values_are_slots=True)


def sweep_grid(system: SystemConfig, workers: Optional[int] = None) -> SweepResult:
    """MAP rate and placement time against track resolution, on shared realizations."""
    ex = system.experiment
    models = (SystemModel.MAP_AIDED,)
    resolutions = ex.grid_resolutions
    logger.info("grid sweep: resolutions %s (%s anchor)", list(resolutions), ex.grid_anchor)
    variants = [system.with_track(r, ex.grid_anchor) for r in resolutions]
    solved = _campaign(system, variants, models, "random_waypoint", resolve_workers(workers))
    gains = _stack(solved, SystemModel.MAP_AIDED)
    rates = {SystemModel.MAP_AIDED.value: gains_to_rates(gains, system.led.transmit_power, system)}
    timing = {}
    for j, (r, v) in enumerate(zip(resolutions, variants)):
        elapsed = np.concatenate([inst[j].placement_elapsed for inst in solved])
        timing[r] = (len(v.track_grid), float(np.mean(elapsed)))
    return SweepResult("grid", "resolution", tuple(resolutions), (SystemModel.MAP_AIDED.value,), rates,
                       _provenance(system), timing=timing)


SWEEPS: Dict[str, Callable[..., SweepResult]] = {
    "power": sweep_power,
    "blockers": sweep_blockers,
    "mobility": sweep_mobility,
    "grid": sweep_grid,
}


def run_experiment(name: str, system: SystemConfig, workers: Optional[int] = None) -> SweepResult:
    if name not in SWEEPS:
        raise ValueError(f"unknown experiment {name!r}, expected one of {EXPERIMENTS}")
    return SWEEPS[name](system, workers)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def output_paths(out_dir: str, experiment: str) -> Dict[str, str]:
    base = os.path.join(out_dir, sanitize_name(experiment))
    return {
        "rates": base + "_rates.csv",
        "summary": base + "_summary.csv",
        "timing": base + "_timing.csv",
        "manifest": base + "_manifest.json",
        "report": base + "_report.pdf",
    }


def write_csvs(result: SweepResult, out_dir: str) -> Dict[str, str]:
    """Rates, summary and (grid only) timing CSVs; returns the paths written."""
    paths = output_paths(out_dir, result.experiment)
    written = {}
    try:
        ensure_dir(out_dir)
        with open(paths["rates"], "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["model", "sweep_value", "instance", "slot", "rate_bps"])
            for m in result.models:
                arr = result.rates[m]
                for i, v in enumerate(result.sweep_values):
                    for inst in range(arr.shape[1]):
                        for s in range(arr.shape[2]):
                            slot = v if result.values_are_slots else s
                            w.writerow([m, _fmt(v), inst, slot, _fmt(arr[i, inst, s])])
        written["rates"] = paths["rates"]
        with open(paths["summary"], "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["model", "sweep_value", "mean_bps", "stderr_bps", "mean_mbps"])
            for m, v, mean, err in result.summary_rows():
                w.writerow([m, _fmt(v), _fmt(mean), _fmt(err), f"{mean / 1e6:.6f}"])
        written["summary"] = paths["summary"]
        if result.timing is not None:
            with open(paths["timing"], "w", newline="", encoding="utf-8") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(["sweep_value", "candidates", "mean_elapsed_s"])
                for v, (n, t) in result.timing.items():
                    w.writerow([_fmt(v), n, f"{t:.9f}"])
            written["timing"] = paths["timing"]
    except OSError as e:
        raise OutputError(f"cannot write results to {out_dir}: {e}") from e
    return written


def trace_slot(system: SystemConfig, instance: int, slot: int, models: Optional[Sequence] = None,
               path: str = "random_waypoint") -> Dict:
    """Every channel and optimizer decision for one slot of one instance."""
    ex = system.experiment
    if not 0 <= instance < ex.instances:
        raise TraceIndexError(f"instance {instance} out of range [0, {ex.instances})")
    if not 0 <= slot < system.scenario.slots:
        raise TraceIndexError(f"slot {slot} out of range [0, {system.scenario.slots})")
    models = _models(models or ex.models)
    seed = instance_seed(ex.master_seed, instance)
    if path == "corner":
        system = _mobility_variant(system)
    world = _realize(system, seed, path).world(slot)
    rx = system.receiver.at(world.user.device_pose)
    power = system.led.transmit_power
    out = {
        "instance": instance,
        "slot": slot,
        "seed": seed,
        "user_position": world.user.position.tolist(),
        "device_position": world.user.device_position.tolist(),
        "device_normal": world.user.device_normal.tolist(),
        "blockers": len(world.obstacles) - 1,
        "models": {},
    }
    fixed_pos = system.led.pose.position
    fixed_blocked = bool(segments_blocked(fixed_pos, rx.pose.position, world.blockers))
    fixed_los = los_gain(system.led, rx, world.blockers)
    config = None
    for m in models:
        entry: Dict = {}
        if m is SystemModel.MAP_AIDED:
            placement = place_map_exhaustive(system.track_grid, world, map_gain_objective(system))
            entry["map_point"] = placement.chosen_point.tolist()
            entry["candidates"] = placement.evaluations
            entry["los_gain"] = placement.objective
            entry["los_blocked"] = bool(segments_blocked(placement.chosen_point, rx.pose.position, world.blockers))
            h = placement.objective
        elif m is SystemModel.FIXED_AP:
            entry["los_gain"] = fixed_los
            entry["los_blocked"] = fixed_blocked
            h = fixed_los
        else:
            if config is None:
                config = configure_ris(system.ris_arrays, world, rx, system.optimizer, system.led,
                                       _sca_rng(seed, slot), system.ris.path_model, system.ris.warm_start)
            open_gains = ris_gain_matrix(system.led, config.arrays, rx, (), system.ris.path_model)
            blocked_links = {}
            for a, g_open, g in zip(config.arrays, open_gains, config.gains):
                blocked_links[a.wall] = int(np.count_nonzero((g_open > 0.0) & (g <= 0.0)))
            entry["ris_gain_by_wall"] = config.by_wall()
            entry["flat_ris_gain_by_wall"] = ris_gain_by_wall(system.led, system.ris_arrays, rx, world.blockers,
                                                              system.ris.path_model)
            entry["mirror_links_blocked"] = blocked_links
            if m is SystemModel.RIS_AIDED:
                entry["los_gain"] = fixed_los
                entry["los_blocked"] = fixed_blocked
                h = fixed_los + config.total
            else:
                entry["los_gain"] = 0.0
                entry["los_blocked"] = None
                h = config.total
        snr = float(electrical_snr(h, power, rx, system.noise))
        entry["total_gain"] = float(h)
        entry["snr"] = snr
        entry["rate_bps"] = float(rate_from_snr(snr, system.noise.bandwidth, system.rate_formula))
        out["models"][m.value] = entry
    return out

