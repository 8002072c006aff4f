"""Threshold sets, the zeta / Omega bound functions, and the Omega input search.

Branch ``t`` is 1, 2 or 3.  Branches 1 and 2 threshold the conditional
densities ``i(x;z|y)`` and ``i(y;z|x)``; branch 3 intersects thresholds on
``i(x;z)``, ``i(y;z)`` and ``i(xy;z)``.  Triples of zero joint probability
are outside every threshold set and contribute nothing to any sum.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from macid.channel_core import (
    Alphabet,
    MacChannel,
    SequenceDistribution,
    TripleSet,
    random_distribution,
    random_kernel,
)
from macid.errors import DimensionError, UsageError, ValidationError
from macid.spectrum import DensityKind, JointTable, joint_table

OMEGA_CLAIMED_MAX = 73.0 / 16.0
OMEGA_CRUDE_MAX = 7.0
BRANCHES = (1, 2, 3)


@dataclass(frozen=True)
class RatePoint:
    r1: float
    r2: float

    def __post_init__(self):
        if not (self.r1 >= 0 and self.r2 >= 0):
            raise ValidationError(f"rates must be nonnegative, got ({self.r1}, {self.r2})")


def _rates(rates) -> tuple[float, float]:
    if isinstance(rates, RatePoint):
        return rates.r1, rates.r2
    r1, r2 = rates
    return float(r1), float(r2)


@dataclass(frozen=True)
class OmegaBranch:
    t: int
    omega1: float
    omega2: float
    omega: float


@dataclass(frozen=True)
class OmegaBreakdown:
    r1: float
    r2: float
    gamma: float
    n: int
    branches: tuple[OmegaBranch, OmegaBranch, OmegaBranch]
    min_branch: int
    omega_min: float

    def branch(self, t: int) -> OmegaBranch:
        return self.branches[t - 1]


# -- threshold sets and zeta -------------------------------------------------


def threshold_mask(table: JointTable, t: int, r1: float, r2: float, gamma: float) -> np.ndarray:
    """Membership of each table triple in ``T_{t,gamma}``.

    The sum threshold of branch 3 is formed as ``(r1-gamma) + (r2-gamma)``
    so that shifting rates by gamma reproduces the same floats exactly.
    """
    n = table.n
    a1, a2 = r1 - gamma, r2 - gamma
    if t == 1:
        return table.density(DensityKind.XgivenY) / n <= a1
    if t == 2:
        return table.density(DensityKind.YgivenX) / n <= a2
    if t == 3:
        return (
            (table.density(DensityKind.Xonly) / n <= a1)
            & (table.density(DensityKind.Yonly) / n <= a2)
            & (table.density(DensityKind.Joint) / n <= a1 + a2)
        )
    raise UsageError(f"branch must be 1, 2 or 3, got {t}")


def zeta_terms(table: JointTable, t: int, r1: float, r2: float) -> np.ndarray:
    """Per-triple integrand of zeta, already weighted by the joint probability."""
    n, p = table.n, table.p
    with np.errstate(over="ignore"):
        if t == 1:
            return p * np.exp(table.density(DensityKind.XgivenY) - n * r1)
        if t == 2:
            return p * np.exp(table.density(DensityKind.YgivenX) - n * r2)
        if t == 3:
            return p * (
                np.exp(table.density(DensityKind.Xonly) - n * r1)
                + np.exp(table.density(DensityKind.Yonly) - n * r2)
                + np.exp(table.density(DensityKind.Joint) - n * (r1 + r2))
            )
    raise UsageError(f"branch must be 1, 2 or 3, got {t}")


def zeta_on_mask(table: JointTable, t: int, r1: float, r2: float, mask: np.ndarray) -> float:
    return float(np.sum(zeta_terms(table, t, r1, r2)[mask]))


def _mask_on_table(table: JointTable, s: TripleSet) -> np.ndarray:
    if s.n != table.n or s.shape != table.shape:
        raise DimensionError(f"triple set at n={s.n}, shape {s.shape} does not match n={table.n}, shape {table.shape}")
    return s.mask[table.flat]


def t_set(t: int, rates, gamma: float, px, py, w: MacChannel, n: int) -> TripleSet:
    r1, r2 = _rates(rates)
    table = joint_table(px, py, w, n)
    mask = np.zeros(int(np.prod(table.shape)), dtype=bool)
    mask[table.flat[threshold_mask(table, t, r1, r2, gamma)]] = True
    return TripleSet(n, table.shape, mask)


def zeta(t: int, rates, s: TripleSet, px, py, w: MacChannel, n: int) -> float:
    r1, r2 = _rates(rates)
    table = joint_table(px, py, w, n)
    return zeta_on_mask(table, t, r1, r2, _mask_on_table(table, s))


# -- Omega -------------------------------------------------------------------


def omega_from_table(table: JointTable, r1: float, r2: float, gamma: float) -> OmegaBreakdown:
    branches = []
    for t in BRANCHES:
        inside = threshold_mask(table, t, r1, r2, gamma)
        omega1 = float(np.sum(table.p[~inside]))
        omega2 = zeta_on_mask(table, t, r1, r2, inside)
        branches.append(OmegaBranch(t, omega1, omega2, 4.0 * omega1 + 3.0 * math.sqrt(omega2)))
    best = min(branches, key=lambda b: b.omega)
    return OmegaBreakdown(r1, r2, gamma, table.n, tuple(branches), best.t, best.omega)


def omega_point(rates, gamma: float, px, py, w: MacChannel, n: int) -> OmegaBreakdown:
    if gamma < 0:
        raise UsageError(f"gamma must be >= 0, got {gamma}")
    r1, r2 = _rates(rates)
    return omega_from_table(joint_table(px, py, w, n), r1, r2, gamma)


# -- search over inputs ------------------------------------------------------


def simplex_grid(k: int, resolution: int) -> list[np.ndarray]:
    """Per-letter laws with masses in multiples of ``1/resolution``.

    Lexicographic in the coordinates.  The grid at resolution ``r`` contains
    the grid at every divisor of ``r``.
    """
    if resolution < 1:
        raise UsageError(f"grid resolution must be >= 1, got {resolution}")
    out = []
    for head in itertools.product(range(resolution + 1), repeat=k - 1):
        rest = resolution - sum(head)
        if rest >= 0:
            out.append(np.array(head + (rest,), dtype=np.float64) / resolution)
    return out


@dataclass(frozen=True)
class InputSearchPolicy:
    """How the sup over input pairs is approximated.

    ``iid-grid`` searches i.i.d. product inputs on a per-letter simplex
    grid; ``iid-grid-plus-ascent`` refines the best grid point by coordinate
    ascent; ``explicit-list`` evaluates only ``explicit`` (pairs of
    arbitrary n-letter laws).  Any mode also evaluates ``explicit``.
    """

    mode: str = "iid-grid"
    grid_resolution: int = 10
    ascent_iters: int = 0
    seed: int = 0
    explicit: tuple = ()

    def __post_init__(self):
        if self.mode not in ("iid-grid", "iid-grid-plus-ascent", "explicit-list"):
            raise UsageError(f"unknown search mode {self.mode!r}")
        if self.mode != "explicit-list" and self.grid_resolution < 2:
            raise UsageError(f"grid_resolution must be >= 2, got {self.grid_resolution}")
        if self.mode == "explicit-list" and not self.explicit:
            raise UsageError("explicit-list policy needs at least one input pair")

    def with_pairs(self, pairs) -> "InputSearchPolicy":
        return InputSearchPolicy(self.mode, self.grid_resolution, self.ascent_iters, self.seed,
                                 tuple(self.explicit) + tuple(pairs))


@dataclass(frozen=True, eq=False)
class OmegaSearchResult:
    """Best Omega over the searched inputs: a lower bound on the true sup."""

    value: float
    px: SequenceDistribution
    py: SequenceDistribution
    breakdown: OmegaBreakdown
    evaluated: int


def _eval_pair(args):
    px, py, w, n, r1, r2, gamma = args
    return omega_from_table(joint_table(px, py, w, n), r1, r2, gamma)


def _iid_value(lx, ly, w, n, r1, r2, gamma) -> float:
    px = SequenceDistribution.iid(w.in1, lx, n)
    py = SequenceDistribution.iid(w.in2, ly, n)
    return _eval_pair((px, py, w, n, r1, r2, gamma)).omega_min


def _ascent(lx, ly, value, w, n, r1, r2, gamma, iters, seed):
    rng = np.random.default_rng(seed)
    step = 0.05
    for _ in range(iters):
        improved = False
        for side in rng.permutation(2):
            letter = lx if side == 0 else ly
            k = letter.shape[0]
            for a, b in rng.permutation(list(itertools.permutations(range(k), 2))):
                delta = min(step, letter[a])
                if delta <= 0:
                    continue
                trial = letter.copy()
                trial[a] -= delta
                trial[b] += delta
                cand = (trial, ly) if side == 0 else (lx, trial)
                v = _iid_value(cand[0], cand[1], w, n, r1, r2, gamma)
                if v > value:
                    lx, ly, value, letter = cand[0], cand[1], v, trial
                    improved = True
        if not improved:
            step /= 2
            if step < 1e-4:
                break
    return lx, ly, value


def omega_channel(rates, gamma: float, w: MacChannel, n: int,
                  policy: InputSearchPolicy = InputSearchPolicy(), threads: int = 1) -> OmegaSearchResult:
    """Max of ``omega_min`` over the policy's input family.

    Grid ties keep the lexicographically smallest grid point; explicit
    pairs are evaluated after the grid and win only when strictly larger.
    """
    if gamma < 0:
        raise UsageError(f"gamma must be >= 0, got {gamma}")
    r1, r2 = _rates(rates)
    candidates = []
    if policy.mode != "explicit-list":
        gx = simplex_grid(w.in1.size, policy.grid_resolution)
        gy = simplex_grid(w.in2.size, policy.grid_resolution)
        for lx in gx:
            for ly in gy:
                candidates.append((SequenceDistribution.iid(w.in1, lx, n),
                                   SequenceDistribution.iid(w.in2, ly, n)))
    for px, py in policy.explicit:
        if px.n != n or py.n != n:
            raise DimensionError(f"explicit input pair at n=({px.n}, {py.n}), expected {n}")
        candidates.append((px, py))
    jobs = [(px, py, w, n, r1, r2, gamma) for px, py in candidates]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_eval_pair, jobs))
    else:
        results = [_eval_pair(j) for j in jobs]
    best = 0
    for i, res in enumerate(results):
        if res.omega_min > results[best].omega_min:
            best = i
    px, py = candidates[best]
    out = OmegaSearchResult(results[best].omega_min, px, py, results[best], len(results))
    if policy.mode == "iid-grid-plus-ascent" and policy.ascent_iters > 0 and px.letter is not None:
        lx, ly, value = _ascent(px.letter.copy(), py.letter.copy(), out.value, w, n, r1, r2, gamma,
                                policy.ascent_iters, policy.seed)
        if value > out.value:
            px = SequenceDistribution.iid(w.in1, lx, n)
            py = SequenceDistribution.iid(w.in2, ly, n)
            bd = omega_from_table(joint_table(px, py, w, n), r1, r2, gamma)
            out = OmegaSearchResult(bd.omega_min, px, py, bd, out.evaluated)
    return out


# -- shift identities and range checks ---------------------------------------


@dataclass(frozen=True, eq=False)
class PropertyInstance:
    px: SequenceDistribution
    py: SequenceDistribution
    w: MacChannel
    n: int
    r1: float
    r2: float
    label: str = ""


@dataclass(frozen=True)
class Violation:
    instance: int
    label: str
    check: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs


@dataclass
class OmegaIdentityReport:
    tau: float
    gamma: float
    instances: int = 0
    checks: int = 0
    violations: list = field(default_factory=list)
    omega_values: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_omega_identities(instances: Sequence[PropertyInstance], tau: float, gamma: float,
                    tol: float = 1e-10) -> OmegaIdentityReport:
    """Verify the shift identities, exponential bounds and ranges on each instance.

    Equalities are checked to absolute ``tol``; inequalities as
    ``lhs <= rhs + tol``.  ``omega_values`` collects ``omega_min`` at gamma
    and tau for the range check on the supremized quantity.
    """
    if not 0 <= gamma < tau:
        raise UsageError(f"need 0 <= gamma < tau, got gamma={gamma}, tau={tau}")
    report = OmegaIdentityReport(tau=tau, gamma=gamma)
    for idx, inst in enumerate(instances):
        table = joint_table(inst.px, inst.py, inst.w, inst.n)
        n, r1, r2 = inst.n, inst.r1, inst.r2
        at_g = omega_from_table(table, r1, r2, gamma)
        at_t = omega_from_table(table, r1, r2, tau)
        shifted = omega_from_table(table, r1 - gamma, r2 - gamma, 0.0)
        eg, et = math.exp(-n * gamma), math.exp(-n * tau)
        checks = []
        for t in BRANCHES:
            g, s, u = at_g.branch(t), shifted.branch(t), at_t.branch(t)
            mult = 1.0 if t < 3 else 3.0
            checks.append((f"t={t} omega1 shift identity", "eq", g.omega1, s.omega1))
            if t < 3:
                checks.append((f"t={t} omega2 shift identity", "eq", g.omega2, eg * s.omega2))
            else:
                checks.append((f"t={t} omega2 shift inequality", "le", g.omega2, eg * s.omega2))
            checks.append((f"t={t} omega2 exponential bound", "le", g.omega2, mult * eg))
            checks.append((f"t={t} omega2 tau-difference bound", "le", g.omega2,
                           mult * et + u.omega1 - g.omega1))
            for name, val in ((f"t={t} omega1(gamma)", g.omega1), (f"t={t} omega1(tau)", u.omega1)):
                checks.append((name + " >= 0", "le", 0.0, val))
                checks.append((name + " <= 1", "le", val, 1.0))
            checks.append((f"t={t} omega2 >= 0", "le", 0.0, g.omega2))
        for name, kind, lhs, rhs in checks:
            report.checks += 1
            bad = abs(lhs - rhs) > tol if kind == "eq" else lhs > rhs + tol
            if bad:
                report.violations.append(Violation(idx, inst.label, name, lhs, rhs))
        report.omega_values.extend([at_g.omega_min, at_t.omega_min])
        report.instances += 1
    return report


def random_instances(rng: np.random.Generator, count: int, max_n: int = 3, max_alphabet: int = 3,
                     max_rate: float = 1.5) -> list[PropertyInstance]:
    """Random (channel, inputs, rates) draws; alphabets >= 2 and sizes capped small."""
    out = []
    while len(out) < count:
        a, b, c = (int(v) for v in rng.integers(2, max_alphabet + 1, size=3))
        n = int(rng.integers(1, max_n + 1))
        if (a * b * c) ** n > 2**16:
            continue
        zero = float(rng.choice([0.0, 0.3]))
        w = MacChannel.memoryless(random_kernel(rng, a, b, c, zero_prob=zero))
        iid = bool(rng.random() < 0.5)
        px = random_distribution(rng, Alphabet(a), n, zero_prob=0.2 * (not iid), iid=iid)
        py = random_distribution(rng, Alphabet(b), n, zero_prob=0.2 * (not iid), iid=iid)
        r1, r2 = (float(v) for v in rng.uniform(0, max_rate, size=2))
        out.append(PropertyInstance(px, py, w, n, r1, r2, label=f"random#{len(out)}"))
    return out
