"""Membership map of finite-n and asymptotic union regions on a rate grid."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from macid.bounds import InputSearchPolicy
from macid.channel_core import builtin_channel
from macid.regions import membership_grid, union_region


@dataclass
class RegionConfig:
    channel: str = "binary-adder"
    n: int = 2
    epsilon: float = 0.05
    grid: int = 6
    rmax: float = 1.5
    steps: int = 31


def run(cfg: RegionConfig, out=sys.stdout) -> None:
    w = builtin_channel(cfg.channel)
    axis = np.linspace(0.0, cfg.rmax, cfg.steps)
    pol = InputSearchPolicy(grid_resolution=cfg.grid)
    maps = {which: membership_grid(union_region(w, cfg.n, cfg.epsilon, pol, which), axis, axis)
            for which in ("inf", "sup", "prime")}
    maps["asymptotic"] = membership_grid(union_region(w, 1, policy=pol, which="prime", asymptotic=True), axis, axis)
    out.write("r1 r2 " + " ".join(maps) + "\n")
    for i, a in enumerate(axis):
        for j, b in enumerate(axis):
            out.write(f"{a!r} {b!r} " + " ".join(str(int(m[i, j])) for m in maps.values()) + "\n")
    for name, m in maps.items():
        print(f"# {name}: {int(m.sum())} of {m.size} grid points inside", file=sys.stderr)


def main(argv=None) -> None:
    cfg = RegionConfig()
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--channel", default=cfg.channel)
    ap.add_argument("--n", type=int, default=cfg.n)
    ap.add_argument("--epsilon", type=float, default=cfg.epsilon)
    ap.add_argument("--grid", type=int, default=cfg.grid)
    ns = ap.parse_args(argv)
    run(RegionConfig(ns.channel, ns.n, ns.epsilon, ns.grid, cfg.rmax, cfg.steps))


if __name__ == "__main__":
    main()
