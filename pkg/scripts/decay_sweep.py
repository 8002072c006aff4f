"""Searched Omega against block length for rate points inside and outside the region."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field

from macid.bounds import InputSearchPolicy
from macid.channel_core import builtin_channel
from macid.regions import strong_converse_sweep


@dataclass
class DecayConfig:
    channel: str = "binary-adder"
    points: list = field(default_factory=lambda: [(0.8, 0.8), (0.3, 0.3), (1.2, 0.2)])
    gamma: float = 0.02
    n_max: int = 6
    grid: int = 10
    threads: int = 1


def run(cfg: DecayConfig, out=sys.stdout) -> None:
    w = builtin_channel(cfg.channel)
    sweep = strong_converse_sweep(w, cfg.points, cfg.gamma, range(1, cfg.n_max + 1),
                                  InputSearchPolicy(grid_resolution=cfg.grid), threads=cfg.threads)
    writer = csv.writer(out)
    writer.writerow(["r1", "r2", "class", "n", "omega"])
    for pt in sweep:
        for n, v in zip(pt.n_list, pt.omegas):
            writer.writerow([pt.r1, pt.r2, pt.classification, n, repr(v)])
    for pt in sweep:
        print(f"# ({pt.r1}, {pt.r2}) {pt.classification}: strictly decreasing={pt.strictly_decreasing} "
              f"ratio={pt.decay_ratio:.4f}", file=sys.stderr)


def main(argv=None) -> None:
    cfg = DecayConfig()
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--channel", default=cfg.channel)
    ap.add_argument("--gamma", type=float, default=cfg.gamma)
    ap.add_argument("--n-max", type=int, default=cfg.n_max)
    ap.add_argument("--grid", type=int, default=cfg.grid)
    ap.add_argument("--threads", type=int, default=cfg.threads)
    ns = ap.parse_args(argv)
    run(DecayConfig(ns.channel, cfg.points, ns.gamma, ns.n_max, ns.grid, ns.threads))


if __name__ == "__main__":
    main()
