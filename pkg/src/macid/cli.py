"""Command-line harness: ``macid {region,spectrum,omega,resolve,idcode,props}``.

Every run is determined by its ``RunConfig``.  CSV outputs start with ``#``
comment lines echoing the resolved config (``threads`` and ``out`` are
excluded so thread count never changes the bytes).  Wall time goes to a
``<out>.meta.json`` sidecar.  Exit codes: 0 ok, 1 usage, 2 validation,
3 cap exceeded, 4 property violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from macid import __version__
from macid.bounds import InputSearchPolicy, PropertyInstance, check_omega_identities, omega_channel, random_instances
from macid.channel_core import MacChannel, SequenceDistribution, load_channel, random_distribution
from macid.errors import MacIdError, PropertyViolation, UsageError
from macid.id_converse import IdCode, check_max_converse, check_avg_converse
from macid.regions import membership_grid, union_region
from macid.resolvability import resolvability_sweep
from macid.spectrum import DEFAULT_EPSILON, DensityKind, law_from_table, joint_table, spectral_rates_from_table

SUBCOMMANDS = ("region", "spectrum", "omega", "resolve", "idcode", "props")
PLOT_KINDS = ("decay-curve", "region-map", "resolvability-curve")
_NOT_ECHOED = ("threads", "out", "plot", "plot_out", "dump_channel")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    channel: str
    options: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None
    fmt: str = "csv"
    threads: int = 1
    units: str = "nats"

    def echo(self) -> dict:
        d = {"subcommand": self.subcommand, "channel": self.channel, "seed": self.seed,
             "format": self.fmt, "units": self.units}
        d.update({k: v for k, v in self.options.items() if k not in _NOT_ECHOED})
        return dict(sorted(d.items()))


@dataclass
class ResultEnvelope:
    """``payload`` holds ``kind`` plus either ``columns``/``rows`` or ``data``."""

    config: RunConfig
    version: str
    wall_time: float
    payload: dict
    exit_code: int = 0


# -- formatting --------------------------------------------------------------


def fmt_float(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "{:.16e}".format(v)


def render_csv(config: RunConfig, columns, rows) -> str:
    lines = [f"# macid {config.subcommand}"]
    lines += [f"# {k}={json.dumps(v, sort_keys=True)}" for k, v in config.echo().items()]
    lines.append(",".join(columns))
    lines += [",".join(fmt_float(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def render_json(config: RunConfig, payload: dict) -> str:
    return json.dumps({"config": config.echo(), "payload": _jsonable(payload)}, indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".macid-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _scale(config: RunConfig) -> float:
    return 1.0 / math.log(2) if config.units == "bits" else 1.0


def _unit(config: RunConfig) -> str:
    return config.units


# -- input helpers -----------------------------------------------------------


def _floats(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}")


def _ints(text) -> list[int]:
    if isinstance(text, int):
        return [text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}")


def _rate_pairs(r1, r2) -> list[tuple[float, float]]:
    a, b = _floats(r1), _floats(r2)
    if len(b) == 1 and len(a) > 1:
        b = b * len(a)
    if len(a) != len(b):
        raise UsageError(f"--r1 and --r2 lists differ in length ({len(a)} vs {len(b)})")
    return list(zip(a, b))


def _letter(text, size: int) -> np.ndarray:
    if text is None:
        return np.full(size, 1.0 / size)
    vals = _floats(text)
    if len(vals) != size:
        raise UsageError(f"per-letter law needs {size} entries, got {len(vals)}")
    return np.array(vals)


def _inputs(w: MacChannel, opts: dict, n: int):
    return (SequenceDistribution.iid(w.in1, _letter(opts.get("px"), w.in1.size), n),
            SequenceDistribution.iid(w.in2, _letter(opts.get("py"), w.in2.size), n))


def _policy(opts: dict, seed: int = 0) -> InputSearchPolicy:
    ascent = int(opts.get("ascent") or 0)
    mode = "iid-grid-plus-ascent" if ascent > 0 else "iid-grid"
    return InputSearchPolicy(mode, int(opts.get("grid", 10)), ascent, seed)


# -- subcommands -------------------------------------------------------------


def _run_spectrum(config, w):
    o = config.options
    n = int(o["n"])
    kind = DensityKind.parse(o.get("kind", "Joint"))
    eps = float(o.get("epsilon", DEFAULT_EPSILON))
    px, py = _inputs(w, o, n)
    table = joint_table(px, py, w, n)
    law = law_from_table(table, kind)
    sr = spectral_rates_from_table(table, eps)
    s = _scale(config)
    rates = {"n": n, "epsilon": eps, "units": _unit(config),
             "inf_rates": {k.name: v * s for k, v in sr.inf_rates.items()},
             "sup_rates": {k.name: v * s for k, v in sr.sup_rates.items()}}
    rows = [(v * s, p) for v, p in zip(law.values, law.probs)]
    return {"kind": "spectrum", "columns": [f"value_{_unit(config)}", "prob"], "rows": rows, "data": rates}


def _run_omega(config, w):
    o = config.options
    s = _scale(config)
    policy, gamma = _policy(o, config.seed), float(o.get("gamma", 0.0))
    rows = []
    for n in _ints(o["n"]):
        for r1, r2 in _rate_pairs(o["r1"], o["r2"]):
            res = omega_channel((r1, r2), gamma, w, n, policy, config.threads)
            for b in res.breakdown.branches:
                rows.append((n, r1 * s, r2 * s, gamma, b.t, b.omega1, b.omega2, b.omega, res.value))
    u = _unit(config)
    cols = ["n", f"r1_{u}", f"r2_{u}", "gamma", "t", "omega1", "omega2", "omega", "omega_min"]
    return {"kind": "omega", "columns": cols, "rows": rows}


def _run_resolve(config, w):
    o = config.options
    s = _scale(config)
    seeds = list(range(config.seed, config.seed + int(o.get("seeds", 1))))
    rows_in = resolvability_sweep(
        lambda n: _inputs(w, o, n)[0], lambda n: _inputs(w, o, n)[1], w, _ints(o["n"]),
        _rate_pairs(o["r1"], o["r2"]), float(o.get("gamma", 0.0)), seeds,
        int(o.get("trials", 200)), config.threads)
    rows = [(r.n, r.r1 * s, r.r2 * s, r.t, r.d_exact, r.bound, r.accepted, r.trials_used, r.seed) for r in rows_in]
    return {"kind": "resolve",
            "columns": ["n", "r1", "r2", "t", "d_exact", "bound", "accepted", "trials_used", "seed"], "rows": rows}


def _region_shape(shape, s):
    if hasattr(shape, "base"):
        return {"base": {"c1": shape.base.c1 * s, "c2": shape.base.c2 * s, "c12": shape.base.c12 * s},
                "corner1": {"r1": shape.corner1.a * s, "r2": shape.corner1.b * s},
                "corner2": {"r1": shape.corner2.a * s, "r2": shape.corner2.b * s}}
    return {"c1": shape.c1 * s, "c2": shape.c2 * s, "c12": shape.c12 * s}


def _run_region(config, w):
    o = config.options
    s = _scale(config)
    n = int(o.get("n", 1))
    asym = bool(o.get("asymptotic", False))
    region = union_region(w, n, float(o.get("epsilon", DEFAULT_EPSILON)), _policy(o, config.seed), o.get("which", "inf"), asym)
    rmax, steps = float(o.get("rmax", 1.5)), int(o.get("steps", 50))
    axis = np.linspace(0.0, rmax, steps)
    grid = membership_grid(region, axis, axis)
    rows = [(a * s, b * s, int(grid[i, j])) for i, a in enumerate(axis) for j, b in enumerate(axis)]
    data = {"which": region.which, "asymptotic": asym, "n": n, "units": _unit(config),
            "shapes": [_region_shape(sh, s) for sh in region.shapes]}
    return {"kind": "region", "columns": ["r1", "r2", "in01"], "rows": rows, "data": data}


def _run_idcode(config, w):
    o = config.options
    if not o.get("code"):
        raise UsageError("idcode needs --code PATH")
    with open(o["code"]) as fh:
        code = IdCode.from_json(fh.read(), w)
    pair = _floats(o.get("rates", "0,0"))
    if len(pair) != 2:
        raise UsageError("--rates expects 'r1,r2'")
    gamma, crit = float(o.get("gamma", 0.0)), o.get("criterion", "max")
    if crit == "max":
        v = check_max_converse(code, w, tuple(pair), gamma, _policy(o, config.seed))
    elif crit == "avg":
        v = check_avg_converse(code, w, tuple(pair), gamma, float(o.get("tau", 0.1)), _policy(o, config.seed))
    else:
        raise UsageError(f"--criterion must be max or avg, got {crit!r}")
    r = v.report
    data = {"status": v.status, "lhs": v.lhs, "rhs": v.rhs, "omega": v.omega, "nu": v.nu, "slack": v.slack,
            "mu_max": r.mu_max, "lambda_max": r.lambda_max, "mu_avg": r.mu_avg, "lambda_avg": r.lambda_avg,
            "r1": r.r1, "r2": r.r2, "sizes": list(r.sizes), "degenerate": r.degenerate,
            "rate_margins": None if v.rate_check is None else [v.rate_check.margin1, v.rate_check.margin2]}
    return {"kind": "idcode", "data": data}, (4 if v.status == "violated" else 0)


def _run_props(config, w):
    o = config.options
    n = int(o.get("n", 2))
    count = int(o.get("count", 100))
    rng = np.random.default_rng(config.seed)
    instances = random_instances(rng, count)
    for k in range(int(o.get("channel_count", 10))):
        px = random_distribution(rng, w.in1, n, iid=bool(k % 2))
        py = random_distribution(rng, w.in2, n, iid=bool(k % 2))
        r1, r2 = (float(v) for v in rng.uniform(0, 1.5, size=2))
        instances.append(PropertyInstance(px, py, w, n, r1, r2, label=f"{w.name}#{k}"))
    gap = float(o.get("tau_gap", 0.05))
    summary, violations = [], []
    for g in _floats(o.get("gammas", "0,0.05,0.1")):
        rep = check_omega_identities(instances, g + gap, g)
        summary.append({"gamma": g, "tau": g + gap, "instances": rep.instances, "checks": rep.checks,
                        "violations": len(rep.violations),
                        "omega_max": max(rep.omega_values) if rep.omega_values else 0.0})
        violations += [{"gamma": g, "instance": v.instance, "label": v.label, "check": v.check,
                        "lhs": v.lhs, "rhs": v.rhs, "margin": v.margin} for v in rep.violations]
    data = {"runs": summary, "violations": violations}
    return {"kind": "props", "data": data}, (PropertyViolation.exit_code if violations else 0)


_DISPATCH = {"spectrum": _run_spectrum, "omega": _run_omega, "resolve": _run_resolve,
             "region": _run_region, "idcode": _run_idcode, "props": _run_props}


def render_payload(config: RunConfig, payload: dict) -> str:
    if config.fmt == "csv" and "columns" in payload:
        return render_csv(config, payload["columns"], payload["rows"])
    return render_json(config, payload)


def run(config: RunConfig) -> ResultEnvelope:
    """Dispatch, then write payload (and sidecars) atomically when ``out`` is set."""
    if config.subcommand not in _DISPATCH:
        raise UsageError(f"unknown subcommand {config.subcommand!r}")
    if config.fmt not in ("csv", "json"):
        raise UsageError(f"format must be csv or json, got {config.fmt!r}")
    start = time.perf_counter()
    w = load_channel(config.channel)
    result = _DISPATCH[config.subcommand](config, w)
    payload, code = result if isinstance(result, tuple) else (result, 0)
    env = ResultEnvelope(config, __version__, time.perf_counter() - start, payload, code)
    if config.out:
        atomic_write(config.out, render_payload(config, payload))
        if payload.get("data") is not None and "columns" in payload and config.fmt == "csv":
            atomic_write(config.out + ".json", render_json(config, payload["data"]))
        meta = {"version": env.version, "wall_time_s": env.wall_time, "exit_code": code}
        atomic_write(config.out + ".meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return env


# -- plot data ---------------------------------------------------------------


def emit_plotdata(envelope: ResultEnvelope, kind: str, path: str) -> None:
    """Write whitespace-separated columns with a ``#`` header line.

    decay-curve (n, omega) needs an omega payload with one rate point;
    region-map (r1, r2, in01) a region payload; resolvability-curve
    (n, mean_d, bound) a resolve payload, averaged over seeds and branches.
    """
    p = envelope.payload
    if kind == "decay-curve" and p.get("kind") == "omega":
        seen = {}
        for row in p["rows"]:
            key = (row[0], row[1], row[2])
            seen.setdefault(key, row[8])
        if len({k[1:] for k in seen}) > 1:
            raise UsageError("decay-curve needs a single rate point")
        cols, rows = ("n", "omega"), [(k[0], v) for k, v in seen.items()]
    elif kind == "region-map" and p.get("kind") == "region":
        cols, rows = ("r1", "r2", "in01"), p["rows"]
    elif kind == "resolvability-curve" and p.get("kind") == "resolve":
        acc: dict = {}
        for row in p["rows"]:
            acc.setdefault(row[0], []).append((row[4], row[5]))
        cols = ("n", "mean_d", "bound")
        rows = [(n, float(np.mean([a for a, _ in v])), float(np.mean([b for _, b in v]))) for n, v in sorted(acc.items())]
    else:
        raise UsageError(f"plot kind {kind!r} does not match a {p.get('kind')!r} payload")
    text = "# " + " ".join(cols) + "\n" + "".join(" ".join(fmt_float(v) for v in r) + "\n" for r in rows)
    atomic_write(path, text)


# -- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--channel", required=True, help="built-in name or channel JSON path")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out")
    common.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--units", choices=("nats", "bits"), default="nats")
    common.add_argument("--dump-channel", help="also write the resolved channel JSON here")
    common.add_argument("--plot", choices=PLOT_KINDS)
    common.add_argument("--plot-out")

    ap = _Parser(prog="macid", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def grid_flags(p):
        p.add_argument("--grid", type=int, default=10)
        p.add_argument("--ascent", type=int, default=0)

    p = sub.add_parser("spectrum", parents=[common])
    p.add_argument("--n", required=True)
    p.add_argument("--kind", default="Joint")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--px")
    p.add_argument("--py")

    p = sub.add_parser("omega", parents=[common])
    p.add_argument("--n", required=True, help="block length or comma list")
    p.add_argument("--r1", required=True)
    p.add_argument("--r2", required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    grid_flags(p)

    p = sub.add_parser("resolve", parents=[common])
    p.add_argument("--n", required=True)
    p.add_argument("--r1", required=True)
    p.add_argument("--r2", required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--px")
    p.add_argument("--py")

    p = sub.add_parser("region", parents=[common])
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--which", choices=("inf", "sup", "prime"), default="inf")
    p.add_argument("--asymptotic", action="store_true")
    p.add_argument("--rmax", type=float, default=1.5)
    p.add_argument("--steps", type=int, default=50)
    grid_flags(p)

    p = sub.add_parser("idcode", parents=[common])
    p.add_argument("--code", required=True)
    p.add_argument("--rates", default="0,0")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--criterion", choices=("max", "avg"), default="max")
    grid_flags(p)

    p = sub.add_parser("props", parents=[common])
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--gammas", default="0,0.05,0.1")
    p.add_argument("--tau-gap", type=float, default=0.05)
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    opts = {k: v for k, v in vars(ns).items()
            if k not in ("subcommand", "channel", "seed", "out", "fmt", "threads", "units") and v is not None}
    if ns.threads < 1:
        raise UsageError(f"--threads must be >= 1, got {ns.threads}")
    return RunConfig(ns.subcommand, ns.channel, opts, ns.seed, ns.out, ns.fmt, ns.threads, ns.units)


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        config = config_from_args(ns)
        if config.options.get("dump_channel"):
            atomic_write(config.options["dump_channel"], load_channel(config.channel).to_json() + "\n")
        env = run(config)
        if not config.out:
            sys.stdout.write(render_payload(config, env.payload))
        if config.options.get("plot"):
            if not config.options.get("plot_out"):
                raise UsageError("--plot needs --plot-out PATH")
            emit_plotdata(env, config.options["plot"], config.options["plot_out"])
        return env.exit_code
    except MacIdError as exc:
        print(f"macid: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
