"""Campaign-level bands at full physics, fewer instances than the published runs."""
import time
import warnings

import numpy as np
import pytest

from map_vlc.config import load_system
from map_vlc.montecarlo import (
    instance_gains, instance_seed, resolve_workers, sweep_blockers, sweep_grid, sweep_mobility, sweep_power,
)

pytestmark = pytest.mark.slow

# full default power campaign, wall clock
RUNTIME_BUDGET_S = 600.0


def system(**experiment):
    ex = {"instances": 16, "master_seed": 2025}
    ex.update(experiment)
    return load_system(override={"experiment": ex})


def test_model_ordering_at_one_watt():
    result = sweep_power(system(power_values=[1.0]))
    mean = {m: result.mean(m, 0) for m in result.models}
    assert mean["map_aided"] > mean["ris_aided"] >= mean["fixed_ap"] > mean["ris_only"]
    assert 2.0 <= mean["map_aided"] / mean["fixed_ap"] <= 10.0
    assert mean["fixed_ap"] / mean["ris_only"] >= 5.0


def test_map_shrugs_off_blockers():
    result = sweep_blockers(system(models=["map_aided", "ris_aided"]))
    assert result.sweep_values == (1, 2, 4, 8, 16, 32)
    map_rates = result.means("map_aided")
    ris_rates = result.means("ris_aided")
    assert (map_rates[0] - map_rates[-1]) / map_rates[0] <= 0.10
    assert np.all(np.diff(ris_rates) < 0.0)
    assert map_rates[-1] / ris_rates[-1] > map_rates[0] / ris_rates[0]


def test_corner_walk():
    result = sweep_mobility(system(models=["map_aided", "ris_aided"]))
    map_slots = result.means("map_aided")
    ris_slots = result.means("ris_aided")
    assert np.std(map_slots) / np.mean(map_slots) < 0.10
    assert ris_slots[-1] > ris_slots[0]
    assert map_slots[-1] >= ris_slots[-1]


def test_grid_refinement_saturates():
    result = sweep_grid(system(grid_resolutions=[5, 9, 17, 33], grid_anchor="corner"))
    rates = result.rates["map_aided"]
    for coarse, fine in zip(rates, rates[1:]):
        assert np.all(fine >= coarse)
    means = result.means("map_aided")
    assert means[-1] - means[-2] < means[1] - means[0]
    candidates = [result.timing[r][0] for r in (5, 9, 17, 33)]
    assert candidates == [25, 81, 289, 1089]
    assert result.timing[33][1] > result.timing[5][1]


def test_placement_time_scales_with_candidates():
    result = sweep_grid(system(instances=8, grid_resolutions=[10, 100]))
    coarse, fine = result.timing[10], result.timing[100]
    assert (coarse[0], fine[0]) == (100, 10000)
    # the vectorized scan carries a fixed per-call overhead, so 100x the candidates costs well under 100x
    assert fine[1] / coarse[1] >= 20.0


def test_default_campaign_fits_the_runtime_budget():
    defaults = load_system()
    ex = defaults.experiment
    start = time.perf_counter()
    instance_gains(defaults, instance_seed(ex.master_seed, 0), ex.models)
    per_instance = time.perf_counter() - start
    projected = per_instance * ex.instances / resolve_workers()
    if projected > RUNTIME_BUDGET_S:
        warnings.warn(f"default campaign projected at {projected / 60:.1f} min on this machine "
                      f"({per_instance:.2f} s per instance)")
    # hard ceiling: a regression of this size is not a slow machine
    assert per_instance < 60.0
