"""map-vlc command line: validate a config, run a sweep, trace one slot."""
import argparse
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional

from colorama import Fore, Style, just_fix_windows_console

from . import __version__
from .config import build_system, deep_update, derived_parameters, load_config_file, merged_config, validate_config
from .logs import critical, get_logger, setup_logging
from .montecarlo import EXPERIMENTS, PATHS, SweepResult, output_paths, run_experiment, trace_slot, write_csvs
from .utils import (
    ConfigError, ConfigParseError, ConfigReadError, ManifestError, OutputError, TraceIndexError,
    content_hash, read_json, write_json_atomic,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INVALID = 4
EXIT_IO = 5
EXIT_TRACE_INDEX = 6


@dataclass
class RunManifest:
    experiment: str
    config_path: Optional[str]
    config_hash: str
    master_seed: int
    timestamp: str
    outputs: Dict[str, str] = field(default_factory=dict)
    version: str = __version__
    config: Dict = field(default_factory=dict)

    def save(self, path: str):
        write_json_atomic(path, asdict(self))

    @classmethod
    def load(cls, path: str) -> "RunManifest":
        data = read_json(path, what=f"manifest {path}")
        try:
            manifest = cls(**data)
        except TypeError as e:
            raise ManifestError(f"{path} is not a run manifest: {e}") from e
        actual = content_hash(manifest.config)
        if actual != manifest.config_hash:
            raise ManifestError(f"{path}: stored config hash {manifest.config_hash[:12]} "
                                f"does not match recomputed {actual[:12]}")
        return manifest


def _resolve(config_path: Optional[str], seed: Optional[int] = None, instances: Optional[int] = None):
    """Load, override and validate; raises before anything is computed."""
    tree = merged_config(load_config_file(config_path))
    override: Dict = {}
    if seed is not None:
        override.setdefault("experiment", {})["master_seed"] = seed
    if instances is not None:
        override.setdefault("experiment", {})["instances"] = instances
    deep_update(tree, override)
    return build_system(tree)


def _print_violations(violations):
    for section, name, message in violations:
        print(Fore.RED + f"  [{section}] {name}: {message}" + Style.RESET_ALL)


def print_summary(result: SweepResult, stream=None):
    """Models x sweep values table of mean rates in Mbps; the best model per column is highlighted."""
    out = stream or sys.stdout
    values = [str(v) for v in result.sweep_values]
    width = max(10, max(len(v) for v in values) + 2)
    name_w = max(len(m) for m in result.models) + 2
    header = f"{result.sweep_name:<{name_w}}" + "".join(f"{v:>{width}}" for v in values)
    print(Style.BRIGHT + header + Style.RESET_ALL, file=out)
    means = {m: result.means(m) for m in result.models}
    best = [max(result.models, key=lambda m: means[m][i]) for i in range(len(values))]
    for m in result.models:
        cells = []
        for i, x in enumerate(means[m]):
            cell = f"{x / 1e6:>{width}.2f}"
            cells.append(Fore.GREEN + cell + Style.RESET_ALL if best[i] == m and len(result.models) > 1 else cell)
        print(f"{m:<{name_w}}" + "".join(cells), file=out)
    print(Style.DIM + "mean rate, Mbps" + Style.RESET_ALL, file=out)


def cmd_validate(config_path: Optional[str]) -> int:
    try:
        tree = merged_config(load_config_file(config_path))
    except ConfigReadError as e:
        print(Fore.RED + str(e) + Style.RESET_ALL)
        return EXIT_IO
    except ConfigParseError as e:
        print(Fore.RED + str(e) + Style.RESET_ALL)
        return EXIT_PARSE
    violations = validate_config(tree)
    if violations:
        print(Fore.RED + f"{config_path or 'defaults'}: {len(violations)} problem(s)" + Style.RESET_ALL)
        _print_violations(violations)
        return EXIT_INVALID
    try:
        system = build_system(tree)
        derived = derived_parameters(system)
    except ConfigError as e:
        _print_violations(e.violations)
        return EXIT_INVALID
    print(Fore.GREEN + f"{config_path or 'defaults'}: valid" + Style.RESET_ALL)
    print(f"  lambertian order m   = {derived['lambertian_order']:g}")
    print(f"  concentrator gain g  = {derived['concentrator_gain']:.4f}")
    print(f"  noise power sigma^2  = {derived['noise_power']:.3e} A^2")
    print(f"  MAP candidates       = {derived['candidates']}")
    print(f"  RIS mirrors          = {derived['mirrors']}")
    print(f"  config hash          = {system.config_hash[:16]}")
    return EXIT_OK


def cmd_run(experiment: str, config_path: Optional[str], seed: Optional[int], out_dir: str,
            instances: Optional[int] = None, workers: Optional[int] = None, pdf: bool = False) -> int:
    system = _resolve(config_path, seed, instances)
    result = run_experiment(experiment, system, workers)
    written = write_csvs(result, out_dir)
    paths = output_paths(out_dir, experiment)
    if pdf:
        from .report import assemble_pdf
        written["report"] = assemble_pdf(paths["report"], result, {
            "config": config_path or "defaults",
            "models": ", ".join(result.models),
        })
    manifest = RunManifest(
        experiment=experiment,
        config_path=os.path.abspath(config_path) if config_path else None,
        config_hash=system.config_hash,
        master_seed=system.experiment.master_seed,
        timestamp=datetime.now(timezone.utc).isoformat(),
        outputs=written,
        config=system.tree,
    )
    manifest.save(paths["manifest"])
    print_summary(result)
    for kind, path in written.items():
        logger.info("%s -> %s", kind, path)
    return EXIT_OK


def _fmt_vec(v: List[float]) -> str:
    return "(" + ", ".join(f"{x:.3f}" for x in v) + ")"


def cmd_trace(config_path: Optional[str], seed: Optional[int], instance: int, slot: int,
              models: Optional[List[str]] = None, path: str = "random_waypoint") -> int:
    system = _resolve(config_path, seed)
    trace = trace_slot(system, instance, slot, models, path)
    print(Style.BRIGHT + f"instance {trace['instance']} slot {trace['slot']} (seed {trace['seed']}, {path} path)"
          + Style.RESET_ALL)
    print(f"  user        {_fmt_vec(trace['user_position'])}")
    print(f"  device      {_fmt_vec(trace['device_position'])} normal {_fmt_vec(trace['device_normal'])}")
    print(f"  blockers    {trace['blockers']}")
    for name, e in trace["models"].items():
        print(Fore.CYAN + f"  {name}" + Style.RESET_ALL)
        if "map_point" in e:
            print(f"    MAP point        {_fmt_vec(e['map_point'])} of {e['candidates']} candidates")
        print(f"    LoS gain         {e['los_gain']:.6e}")
        if e["los_blocked"] is not None:
            verdict = Fore.RED + "blocked" if e["los_blocked"] else Fore.GREEN + "clear"
            print(f"    LoS link         {verdict}{Style.RESET_ALL}")
        if "ris_gain_by_wall" in e:
            for wall, g in e["ris_gain_by_wall"].items():
                print(f"    RIS {wall:<4}         {g:.6e} (flat {e['flat_ris_gain_by_wall'][wall]:.6e}, "
                      f"{e['mirror_links_blocked'][wall]} mirror links blocked)")
        print(f"    total gain       {e['total_gain']:.6e}")
        print(f"    SNR              {e['snr']!r}")
        print(f"    rate             {e['rate_bps']!r} bit/s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="map-vlc", description="Indoor VLC downlink simulator (MAP vs RIS vs fixed AP).")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--quiet", action="store_true", help="Only warnings and errors on stderr.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="Check every config section and echo derived parameters.")
    v.add_argument("--config", help="JSON config (omitted: defaults).")

    r = sub.add_parser("run", help="Run one sweep and write CSV, manifest and optional PDF.")
    r.add_argument("experiment", choices=EXPERIMENTS)
    r.add_argument("--config", help="JSON config (omitted: defaults).")
    r.add_argument("--seed", type=int, help="Master seed override.")
    r.add_argument("--out", default="results", help="Output directory (default: results).")
    r.add_argument("--instances", type=int, help="Instance count override.")
    r.add_argument("--workers", type=int, help="Worker processes (default: MAPVLC_WORKERS or CPU count).")
    r.add_argument("--pdf", action="store_true", help="Also write a PDF run report.")

    t = sub.add_parser("trace", help="Dump every channel and optimizer decision for one slot.")
    t.add_argument("--config", help="JSON config (omitted: defaults).")
    t.add_argument("--seed", type=int, help="Master seed override.")
    t.add_argument("--instance", type=int, default=0)
    t.add_argument("--slot", type=int, default=0)
    t.add_argument("--path", choices=PATHS, default="random_waypoint",
                   help="User path the slot is taken from (default: random_waypoint).")
    t.add_argument("--model", action="append", choices=("map_aided", "ris_aided", "fixed_ap", "ris_only"),
                   help="Restrict to a model (repeatable).")
    return p


def main(argv: Optional[List[str]] = None) -> int:
    just_fix_windows_console()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    setup_logging(quiet=args.quiet)
    try:
        if args.command == "validate":
            return cmd_validate(args.config)
        if args.command == "run":
            return cmd_run(args.experiment, args.config, args.seed, args.out, args.instances, args.workers,
                           args.pdf)
        return cmd_trace(args.config, args.seed, args.instance, args.slot, args.model, args.path)
    except ConfigReadError as e:
        logger.error(str(e))
        return EXIT_IO
    except ConfigParseError as e:
        logger.error(str(e))
        return EXIT_PARSE
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_INVALID
    except (OutputError, ManifestError, OSError) as e:
        logger.error(str(e))
        return EXIT_IO
    except TraceIndexError as e:
        logger.error(str(e))
        return EXIT_TRACE_INDEX
    except Exception as e:
        critical(f"unexpected error in '{args.command}': {e}", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
