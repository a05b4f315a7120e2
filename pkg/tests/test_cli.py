import json

import pytest
from colorama import Fore

from conftest import SMALL
from map_vlc import __version__
from map_vlc.cli import RunManifest, main
from map_vlc.config import deep_update, load_system, merged_config
from map_vlc.utils import ManifestError


def write_config(tmp_path, tree, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(tree), encoding="utf-8")
    return str(path)


def small_config(tmp_path, **sections):
    tree = merged_config(SMALL)
    deep_update(tree, sections)
    # only keep the sections that differ from defaults; the loader merges the rest
    return write_config(tmp_path, {k: tree[k] for k in ("ris", "optimizer", "scenario", "experiment")})


# ---------------------------------------------------------------- validate

def test_validate_defaults_echoes_derived_parameters(capsys):
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "lambertian order m   = 1" in out
    assert "concentrator gain g  = 2.5481" in out
    assert "noise power sigma^2  = 2.000e-13" in out
    assert "MAP candidates       = 100" in out
    assert "RIS mirrors          = 1600" in out


@pytest.mark.parametrize("tree", [
    {"channel": {"fov_deg": 95}},
    {"scenario": {"blockers": -1}},
    {"ris": {"walls": ["x0", "x0"]}},
    {"track": {"layout": "spiral"}},
    {"bogus": {}},
    {"channel": {"fov": 70}},
])
def test_validate_rejects_invalid_config(tmp_path, capsys, tree):
    assert main(["validate", "--config", write_config(tmp_path, tree)]) == 4
    assert "problem(s)" in capsys.readouterr().out


def test_validate_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"room": {', encoding="utf-8")
    assert main(["validate", "--config", str(path)]) == 3


def test_validate_non_object_json(tmp_path):
    assert main(["validate", "--config", write_config(tmp_path, [1, 2, 3])]) == 3


def test_validate_missing_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.json")]) == 5


def test_usage_errors():
    assert main([]) == 2
    assert main(["run", "weather"]) == 2
    assert main(["run", "power", "--instances", "two"]) == 2


def test_version(capsys):
    assert main(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


# ---------------------------------------------------------------- run

def test_run_power_writes_outputs_and_manifest(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "out"
    code = main(["--quiet", "run", "power", "--config", cfg, "--out", str(out), "--instances", "2",
                 "--workers", "1"])
    assert code == 0
    rates = (out / "power_rates.csv").read_text(encoding="utf-8").splitlines()
    assert len(rates) - 1 == 4 * 2 * 2 * 3
    assert (out / "power_summary.csv").exists()
    manifest = RunManifest.load(str(out / "power_manifest.json"))
    assert manifest.experiment == "power"
    assert manifest.master_seed == 5
    assert manifest.config["experiment"]["instances"] == 2
    assert manifest.config_hash == load_system(cfg, {"experiment": {"instances": 2}}).config_hash


def test_same_seed_runs_are_byte_identical(tmp_path):
    cfg = small_config(tmp_path, experiment={"models": ["map_aided", "fixed_ap"]})
    for name in ("a", "b"):
        assert main(["--quiet", "run", "power", "--config", cfg, "--out", str(tmp_path / name),
                     "--seed", "99", "--workers", "1"]) == 0
    for f in ("power_rates.csv", "power_summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_override_changes_rates(tmp_path):
    cfg = small_config(tmp_path, experiment={"models": ["fixed_ap"]})
    for name, seed in (("a", "1"), ("b", "2")):
        main(["--quiet", "run", "power", "--config", cfg, "--out", str(tmp_path / name), "--seed", seed,
              "--workers", "1"])
    assert (tmp_path / "a" / "power_rates.csv").read_bytes() != (tmp_path / "b" / "power_rates.csv").read_bytes()


def test_invalid_run_writes_nothing(tmp_path):
    cfg = write_config(tmp_path, {"room": {"width": -1}})
    out = tmp_path / "out"
    assert main(["run", "power", "--config", cfg, "--out", str(out)]) == 4
    assert not out.exists()


def test_unwritable_output_dir(tmp_path):
    cfg = small_config(tmp_path, experiment={"models": ["fixed_ap"], "instances": 1})
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    assert main(["--quiet", "run", "power", "--config", cfg, "--out", str(blocker / "sub"),
                 "--workers", "1"]) == 5


def test_bad_worker_env(tmp_path, monkeypatch):
    cfg = small_config(tmp_path, experiment={"models": ["fixed_ap"], "instances": 1})
    monkeypatch.setenv("MAPVLC_WORKERS", "lots")
    assert main(["run", "power", "--config", cfg, "--out", str(tmp_path / "out")]) == 4


def test_unplaceable_blockers_in_workers_exit_invalid(tmp_path, capsys):
    cfg = small_config(tmp_path, scenario={"blockers": 500, "blocker_diameter": 1.0, "max_attempts": 50},
                       experiment={"models": ["fixed_ap"], "instances": 2})
    out = tmp_path / "out"
    assert main(["--quiet", "run", "power", "--config", cfg, "--out", str(out), "--workers", "2"]) == 4
    assert "blockers" in capsys.readouterr().err
    assert not (out / "power_rates.csv").exists()


def test_pdf_report(tmp_path):
    cfg = small_config(tmp_path, experiment={"models": ["map_aided", "fixed_ap"], "instances": 1,
                                             "grid_resolutions": [2, 3]})
    out = tmp_path / "out"
    assert main(["--quiet", "run", "grid", "--config", cfg, "--out", str(out), "--workers", "1", "--pdf"]) == 0
    assert (out / "grid_report.pdf").read_bytes().startswith(b"%PDF")
    assert (out / "grid_timing.csv").exists()
    assert "report" in RunManifest.load(str(out / "grid_manifest.json")).outputs


def test_tampered_manifest_rejected(tmp_path):
    cfg = small_config(tmp_path, experiment={"models": ["fixed_ap"], "instances": 1})
    out = tmp_path / "out"
    main(["--quiet", "run", "power", "--config", cfg, "--out", str(out), "--workers", "1"])
    path = out / "power_manifest.json"
    data = json.loads(path.read_text(encoding="utf-8"))
    data["config"]["experiment"]["master_seed"] = 6
    path.write_text(json.dumps(data), encoding="utf-8")
    with pytest.raises(ManifestError):
        RunManifest.load(str(path))


# ---------------------------------------------------------------- trace

def test_trace_ris_only_has_no_direct_path(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["--quiet", "trace", "--config", cfg, "--instance", "1", "--slot", "2",
                 "--model", "ris_only"]) == 0
    out = capsys.readouterr().out
    assert "ris_only" in out
    assert "LoS gain         0.000000e+00" in out
    assert "LoS link" not in out


def test_trace_index_out_of_range(tmp_path):
    cfg = small_config(tmp_path)
    assert main(["trace", "--config", cfg, "--instance", "99"]) == 6
    assert main(["trace", "--config", cfg, "--slot", "3"]) == 6


def test_trace_without_tall_obstacles_reports_clear_links(tmp_path, capsys):
    # blockers and the body stay below the device, so nothing can occlude a link
    cfg = small_config(tmp_path, scenario={"blocker_height": 0.5})
    assert main(["--quiet", "trace", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert Fore.RED + "blocked" not in out
    assert out.count("clear") == 3
    mirror_lines = [line for line in out.splitlines() if "mirror links blocked" in line]
    # one line per wall for ris_aided and for ris_only
    assert len(mirror_lines) == 8
    assert all(", 0 mirror links blocked" in line for line in mirror_lines)


def test_trace_follows_the_corner_walk(tmp_path, capsys):
    cfg = small_config(tmp_path, scenario={"blockers": 0})
    assert main(["--quiet", "trace", "--config", cfg, "--path", "corner", "--slot", "2",
                 "--model", "fixed_ap"]) == 0
    out = capsys.readouterr().out
    assert "corner path" in out
    # the walk ends next to the room centre, under the fixed AP
    user = next(line for line in out.splitlines() if line.strip().startswith("user"))
    x, y, _ = (float(v) for v in user.split("(")[1].rstrip(")").split(","))
    assert abs(x - 5.0) < 1.0 and abs(y - 5.0) < 1.0


def test_trace_rejects_unknown_path(tmp_path):
    assert main(["trace", "--config", small_config(tmp_path), "--path", "spiral"]) == 2
