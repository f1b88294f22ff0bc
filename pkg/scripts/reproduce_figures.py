#!/usr/bin/env python3
"""Regenerate the survey data tables for all bundled example networks.

Writes, under --out-dir:
  gap_<name>.csv        spectral gap on the section boundary (64 directions)
  rate_<name>.csv       rate function and anomaly on a flux grid
  cgf_<name>.csv        radial scan of g through the section
  simulate_<name>.csv   Monte Carlo vs analytic comparison (smaller configs)

Everything is driven through the CLI so the emitted files carry manifests
and are byte-reproducible.
"""

import argparse
import importlib.resources
import pathlib
import sys

from fluxnet.cli import main as fluxnet_main

GAP_SCANS = [
    "lozenge_eq", "lozenge_1_2_4", "lozenge_1_2_64",
    "triangular_eq", "triangular_1_2_4", "triangular_1_2_64",
    "heatpump_10_3.6_7_6.8", "heatpump_20_3.6_7_6.8", "heatpump_40_3.6_7_6.8",
]
RATE_GRIDS = ["lozenge_1_2_4", "lozenge_1_2_64", "heatpump_10_3.6_7_6.8"]
SIMULATIONS = ["lozenge_1_2_4"]


def config_path(name: str) -> str:
    return str(importlib.resources.files("fluxnet") / "configs" / f"{name}.json")


def run(argv: list[str]) -> None:
    print("fluxnet " + " ".join(argv))
    code = fluxnet_main(argv)
    if code != 0:
        sys.exit(code)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out")
    parser.add_argument("--dirs", type=int, default=64)
    parser.add_argument("--seed", type=int, default=20240801)
    parser.add_argument("--traj", type=int, default=10_000)
    args = parser.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    for name in GAP_SCANS:
        run(["gap-scan", config_path(name), "--dirs", str(args.dirs),
             "--out", str(out / f"gap_{name}.csv")])

    for name in RATE_GRIDS:
        run(["rate", config_path(name), "--grid", "5",
             "--out", str(out / f"rate_{name}.csv")])

    for name in GAP_SCANS[:3]:
        run(["cgf", config_path(name), "--dirs", "16", "--radii", "5",
             "--out", str(out / f"cgf_{name}.csv")])

    for name in SIMULATIONS:
        run(["simulate", config_path(name), "--seed", str(args.seed),
             "--traj", str(args.traj), "--T", "200", "--h", "0.02",
             "--out", str(out / f"simulate_{name}.csv")])

    print(f"tables written under {out}/")


if __name__ == "__main__":
    main()
