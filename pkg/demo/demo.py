import os
import tempfile

from map_vlc import load_system
from map_vlc.cli import print_summary
from map_vlc.logs import setup_logging
from map_vlc.montecarlo import sweep_blockers, sweep_power, trace_slot, write_csvs
from map_vlc.report import assemble_pdf


def main():
    setup_logging()

    # Small arrays and a short SCA schedule keep this under a minute on one core.
    system = load_system(override={
        "ris": {"rows": 3, "cols": 8},
        "optimizer": {"population": 12, "iterations": 25},
        "scenario": {"slots": 4},
        "experiment": {
            "instances": 6,
            "master_seed": 11,
            "power_values": [0.5, 1.0, 2.0],
            "blocker_values": [1, 8, 32],
        },
    })
    out_dir = os.path.join(tempfile.gettempdir(), "map_vlc_demo")

    power = sweep_power(system, workers=2)
    print_summary(power)
    write_csvs(power, out_dir)
    assemble_pdf(os.path.join(out_dir, "power_report.pdf"), power, {"note": "demo campaign"})

    blockers = sweep_blockers(system, workers=2)
    print_summary(blockers)
    write_csvs(blockers, out_dir)

    trace = trace_slot(system, instance=0, slot=0)
    for name, entry in trace["models"].items():
        print(f"{name:>10}: H = {entry['total_gain']:.3e}, rate = {entry['rate_bps'] / 1e6:.1f} Mbps")

    print(f"CSV files written to {out_dir}")


# process pool workers re-import this module under spawn
if __name__ == "__main__":
    main()
