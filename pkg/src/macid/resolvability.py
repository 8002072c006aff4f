"""Random M-type codebooks approximating a MAC output distribution.

A codebook of ``M`` sequences induces the empirical input law with masses in
multiples of ``1/M``.  Three approximate responses are formed by replacing
the X input, the Y input, or both.  ``derandomization_record`` evaluates the
acceptance criterion that certifies a drawn codebook, and ``select_code``
rejection-samples until it holds.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from macid.bounds import _rates, threshold_mask, zeta_on_mask
from macid.channel_core import (
    KernelSupport,
    MacChannel,
    ResponseMeasure,
    SequenceDistribution,
    TripleSet,
    _check_inputs,
    response,
)
from macid.errors import DimensionError, UsageError
from macid.spectrum import joint_table

DEFAULT_MAX_TRIALS = 200
BRANCHES = (1, 2, 3)


def count_m_types(k: int, m: int) -> int:
    """Number of m-types on a k-point space, ``C(m+k-1, k-1)``."""
    if k < 1 or m < 1:
        raise UsageError(f"need k >= 1 and m >= 1, got k={k}, m={m}")
    return math.comb(m + k - 1, k - 1)


def m_type_bound(k: int, m: int) -> int:
    """Crude count bound ``k**m`` (one choice of point per codeword)."""
    return k**m


def codebook_size(rate: float, n: int) -> int:
    if not math.isfinite(rate):
        raise UsageError(f"codebook rate must be finite, got {rate}")
    return max(1, math.ceil(math.exp(n * rate)))


@dataclass(frozen=True, eq=False)
class ResolvabilityCode:
    """Codeword lists as dense sequence indices; ``seed`` is ``None`` for deterministic codes."""

    n: int
    m1: int
    m2: int
    codewords1: np.ndarray
    codewords2: np.ndarray
    seed: int | None

    def counts(self, side: int, space: int) -> np.ndarray:
        words = self.codewords1 if side == 1 else self.codewords2
        return np.bincount(words, minlength=space)

    def induced(self, px: SequenceDistribution, py: SequenceDistribution):
        """Empirical laws ``P~_X`` and ``P~_Y`` on the inputs' sequence spaces."""
        tx = SequenceDistribution(px.alphabet, self.n, self.counts(1, px.size) / self.m1)
        ty = SequenceDistribution(py.alphabet, self.n, self.counts(2, py.size) / self.m2)
        return tx, ty


def _draw(probs: np.ndarray, m: int, seed: int, side: int) -> np.ndarray:
    # Philox is counter based: draw j depends only on (seed, side, j).
    gen = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), side]))
    u = gen.random(m)
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, u * cdf[-1], side="right")
    return np.minimum(idx, probs.shape[0] - 1).astype(np.int64)


def sample_code(px: SequenceDistribution, py: SequenceDistribution, m1: int, m2: int, n: int,
                seed: int) -> ResolvabilityCode:
    """Draw ``m1`` i.i.d. codewords from ``px`` and ``m2`` from ``py`` by inverse CDF."""
    if m1 < 1 or m2 < 1:
        raise UsageError(f"codebook sizes must be >= 1, got ({m1}, {m2})")
    if px.n != n or py.n != n:
        raise DimensionError(f"inputs have block lengths ({px.n}, {py.n}), expected {n}")
    return ResolvabilityCode(n, m1, m2, _draw(px.probs, m1, seed, 1), _draw(py.probs, m2, seed, 2), seed)


def exact_type_codewords(probs: np.ndarray, m: int) -> np.ndarray | None:
    """Codewords realizing ``probs`` exactly when it is an m-type, else ``None``."""
    counts = probs * m
    rounded = np.rint(counts)
    if not np.allclose(counts, rounded, atol=1e-9, rtol=0):
        return None
    return np.repeat(np.arange(probs.shape[0]), rounded.astype(np.int64))


def perfect_type_code(px, py, m1: int, m2: int, n: int) -> ResolvabilityCode | None:
    c1, c2 = exact_type_codewords(px.probs, m1), exact_type_codewords(py.probs, m2)
    if c1 is None or c2 is None:
        return None
    return ResolvabilityCode(n, m1, m2, c1, c2, None)


@dataclass(frozen=True, eq=False)
class ApproxResponses:
    q1: ResponseMeasure
    q2: ResponseMeasure
    q3: ResponseMeasure

    def branch(self, t: int) -> ResponseMeasure:
        return (self.q1, self.q2, self.q3)[t - 1]


def approx_responses(code: ResolvabilityCode, px, py, w: MacChannel, n: int) -> ApproxResponses:
    _check_inputs(px, py, w, n)
    if code.n != n:
        raise DimensionError(f"code has block length {code.n}, expected {n}")
    tx, ty = code.induced(px, py)
    return ApproxResponses(response(tx, py, w, n), response(px, ty, w, n), response(tx, ty, w, n))


def _branch_inputs(t: int, px, py, tx, ty):
    return {1: (tx.probs, py.probs), 2: (px.probs, ty.probs), 3: (tx.probs, ty.probs)}[t]


def _partial(ks: KernelSupport, a: np.ndarray, b: np.ndarray, inside: np.ndarray) -> np.ndarray:
    return np.bincount(ks.z, weights=a[ks.x] * b[ks.y] * ks.w * inside, minlength=ks.nz)


# -- derandomization ---------------------------------------------------------


@dataclass(frozen=True)
class BranchRecord:
    """Per-branch audit: ``theta = out_prob + sqrt(zeta)``; ``bound = 4*out_prob + 3*sqrt(zeta)``."""

    t: int
    lam: float
    phi: float
    theta: float
    out_prob: float
    zeta: float
    d_exact: float
    bound: float
    vacuous: bool

    @property
    def ratio(self) -> float:
        if self.bound == 0:
            return 0.0 if self.d_exact == 0 else math.inf
        return self.d_exact / self.bound


@dataclass(frozen=True)
class DerandomizationRecord:
    branches: tuple[BranchRecord, BranchRecord, BranchRecord]
    criterion: float
    accepted: bool

    def branch(self, t: int) -> BranchRecord:
        return self.branches[t - 1]


def default_sets(px, py, w: MacChannel, n: int, rates, gamma: float) -> tuple[TripleSet, TripleSet, TripleSet]:
    """``S_t = T_{t,gamma}`` for t = 1, 2, 3."""
    r1, r2 = _rates(rates)
    table = joint_table(px, py, w, n)
    size = int(np.prod(table.shape))
    out = []
    for t in BRANCHES:
        mask = np.zeros(size, dtype=bool)
        mask[table.flat[threshold_mask(table, t, r1, r2, gamma)]] = True
        out.append(TripleSet(n, table.shape, mask))
    return tuple(out)


def derandomization_record(code: ResolvabilityCode, px, py, w: MacChannel, n: int,
                           sets: Sequence[TripleSet], rates) -> DerandomizationRecord:
    """Evaluate ``sum_t (Lambda_t + Phi_t) / Theta_t`` and the exact distances.

    ``Lambda_t`` is the total mass of the approximate partial response on
    ``S_t^c`` and ``Phi_t`` the L1 gap of the partial responses on ``S_t``.
    A branch with ``Theta_t = 0`` is vacuous: it is dropped when
    ``Lambda_t + Phi_t = 0`` and forces rejection otherwise.
    """
    _check_inputs(px, py, w, n)
    if code.n != n:
        raise DimensionError(f"code has block length {code.n}, expected {n}")
    r1, r2 = _rates(rates)
    ks = w.support(n)
    table = joint_table(px, py, w, n)
    tx, ty = code.induced(px, py)
    q = np.bincount(ks.z, weights=px.probs[ks.x] * py.probs[ks.y] * ks.w, minlength=ks.nz)
    branches, criterion = [], 0.0
    for t, s in zip(BRANCHES, sets):
        if s.n != n or s.shape != (ks.nx, ks.ny, ks.nz):
            raise DimensionError(f"set S_{t} does not live on the n={n} triple space")
        inside = s.mask[ks.flat]
        a, b = _branch_inputs(t, px, py, tx, ty)
        q_in = _partial(ks, px.probs, py.probs, inside)
        qt_in = _partial(ks, a, b, inside)
        qt_out = _partial(ks, a, b, ~inside)
        lam = float(np.sum(qt_out))
        phi = float(np.sum(np.abs(qt_in - q_in)))
        out_prob = float(np.sum(table.p[~s.mask[table.flat]]))
        z = zeta_on_mask(table, t, r1, r2, s.mask[table.flat])
        theta = out_prob + math.sqrt(z)
        d = float(np.sum(np.abs(qt_in + qt_out - q)))
        vacuous = theta == 0
        if vacuous:
            if lam + phi > 0:
                criterion = math.inf
        else:
            criterion += (lam + phi) / theta
        branches.append(BranchRecord(t, lam, phi, theta, out_prob, z, d, 4 * out_prob + 3 * math.sqrt(z), vacuous))
    return DerandomizationRecord(tuple(branches), criterion, criterion <= 3.0)


@dataclass(frozen=True, eq=False)
class Selection:
    """Outcome of ``select_code``; ``code``/``record`` are the accepted or best-seen draw."""

    code: ResolvabilityCode
    record: DerandomizationRecord
    accepted: bool
    trials_used: int
    best_criterion: float

    @property
    def certificate_holds(self) -> bool:
        return all(b.d_exact <= b.bound for b in self.record.branches)


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1, dtype=np.uint64)[0])


def select_code(px, py, w: MacChannel, n: int, rates, gamma: float, max_trials: int = DEFAULT_MAX_TRIALS,
                seed: int = 0, sets: Sequence[TripleSet] | None = None,
                perfect_type: bool = False) -> Selection:
    """Rejection-sample codebooks with ``M_t = ceil(e^{n R_t})`` until accepted.

    With ``perfect_type`` the first trial is the deterministic codebook that
    realizes the inputs exactly, when they are M-types.
    """
    if max_trials < 1:
        raise UsageError(f"max_trials must be >= 1, got {max_trials}")
    r1, r2 = _rates(rates)
    m1, m2 = codebook_size(r1, n), codebook_size(r2, n)
    if sets is None:
        sets = default_sets(px, py, w, n, (r1, r2), gamma)
    best = None
    for trial in range(max_trials):
        code = perfect_type_code(px, py, m1, m2, n) if perfect_type and trial == 0 else None
        if code is None:
            code = sample_code(px, py, m1, m2, n, trial_seed(seed, trial))
        rec = derandomization_record(code, px, py, w, n, sets, (r1, r2))
        if best is None or rec.criterion < best[1].criterion:
            best = (code, rec)
        if rec.accepted:
            return Selection(code, rec, True, trial + 1, rec.criterion)
    return Selection(best[0], best[1], False, max_trials, best[1].criterion)


# -- sweeps ------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    n: int
    r1: float
    r2: float
    t: int
    seed: int
    d_exact: float
    bound: float
    accepted: bool
    trials_used: int


@dataclass(frozen=True)
class SweepSummary:
    n: int
    r1: float
    r2: float
    t: int
    mean_d: float
    min_d: float
    max_d: float
    bound: float
    acceptance_rate: float


def resolvability_sweep(px_of_n, py_of_n, w: MacChannel, n_list, rate_grid, gamma: float, seeds,
                        max_trials: int = DEFAULT_MAX_TRIALS, threads: int = 1) -> list[SweepRow]:
    """One row per (n, rate point, seed, branch); rows are in input order.

    ``px_of_n`` / ``py_of_n`` map a block length to the input law.
    """
    jobs = []
    for n in n_list:
        px, py = px_of_n(n), py_of_n(n)
        for r1, r2 in rate_grid:
            for s in seeds:
                jobs.append((n, float(r1), float(r2), int(s), px, py))

    def run(job):
        n, r1, r2, s, px, py = job
        return job, select_code(px, py, w, n, (r1, r2), gamma, max_trials, s)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    rows = []
    for (n, r1, r2, s, _, _), sel in results:
        for b in sel.record.branches:
            rows.append(SweepRow(n, r1, r2, b.t, s, b.d_exact, b.bound, sel.accepted, sel.trials_used))
    return rows


def summarize_sweep(rows: Sequence[SweepRow]) -> list[SweepSummary]:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.n, r.r1, r.r2, r.t), []).append(r)
    out = []
    for (n, r1, r2, t), rs in groups.items():
        d = np.array([r.d_exact for r in rs])
        out.append(SweepSummary(n, r1, r2, t, float(d.mean()), float(d.min()), float(d.max()),
                                float(np.mean([r.bound for r in rs])),
                                float(np.mean([r.accepted for r in rs]))))
    return out


def q3_variance(px, py, w: MacChannel, n: int, m1: int, m2: int) -> np.ndarray:
    """Exact per-z variance of ``Q~^{(3)}(z)`` under i.i.d. codeword draws."""
    _check_inputs(px, py, w, n)
    f = w.kernel_n(n)
    pxv, pyv = px.probs, py.probs
    mean = np.einsum("x,y,xyz->z", pxv, pyv, f)
    second = np.einsum("x,y,xyz->z", pxv, pyv, f**2)
    ey = np.einsum("y,xyz->xz", pyv, f)
    ex = np.einsum("x,xyz->yz", pxv, f)
    v = second - mean**2
    a = pxv @ ey**2 - mean**2
    b = pyv @ ex**2 - mean**2
    return np.maximum((v + (m2 - 1) * a + (m1 - 1) * b) / (m1 * m2), 0.0)
