"""Exact approximation error of selected M-type codebooks versus block length."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field

from macid.channel_core import SequenceDistribution, builtin_channel
from macid.resolvability import resolvability_sweep, summarize_sweep


@dataclass
class ResolveConfig:
    channel: str = "binary-adder"
    n_list: tuple = (1, 2, 3, 4)
    rates: list = field(default_factory=lambda: [(0.9, 0.9), (1.1, 1.1), (1.5, 1.5)])
    gamma: float = 0.05
    seeds: int = 16
    max_trials: int = 200
    threads: int = 1


def run(cfg: ResolveConfig, out=sys.stdout) -> None:
    w = builtin_channel(cfg.channel)
    rows = resolvability_sweep(lambda n: SequenceDistribution.uniform(w.in1, n),
                               lambda n: SequenceDistribution.uniform(w.in2, n),
                               w, cfg.n_list, cfg.rates, cfg.gamma, range(cfg.seeds), cfg.max_trials, cfg.threads)
    writer = csv.writer(out)
    writer.writerow(["n", "r1", "r2", "t", "mean_d", "min_d", "max_d", "bound", "acceptance"])
    for s in summarize_sweep(rows):
        writer.writerow([s.n, s.r1, s.r2, s.t, repr(s.mean_d), repr(s.min_d), repr(s.max_d), repr(s.bound),
                         s.acceptance_rate])


def main(argv=None) -> None:
    cfg = ResolveConfig()
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--channel", default=cfg.channel)
    ap.add_argument("--n", default=",".join(map(str, cfg.n_list)))
    ap.add_argument("--gamma", type=float, default=cfg.gamma)
    ap.add_argument("--seeds", type=int, default=cfg.seeds)
    ap.add_argument("--threads", type=int, default=cfg.threads)
    ns = ap.parse_args(argv)
    n_list = tuple(int(v) for v in ns.n.split(","))
    run(ResolveConfig(ns.channel, n_list, cfg.rates, ns.gamma, ns.seeds, cfg.max_trials, ns.threads))


if __name__ == "__main__":
    main()
