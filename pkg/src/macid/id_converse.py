"""Identification codes for a MAC: exact error evaluation and converse checks.

An ID code assigns message pair ``(i, j)`` the input pair
``(P_{X|i}, P_{Y|j})`` and a decoding set ``D_{i,j}`` of output sequences.
Missed identification is ``mu_ij = Q_ij(D_ij^c)``; false identification is
``lambda_ij = max_{(k,l) != (i,j)} Q_kl(D_ij)``.

Evaluation deduplicates identical input vectors and identical decoders, so
codes with millions of message pairs but few distinct rows stay cheap.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from macid.bounds import InputSearchPolicy, OmegaSearchResult, _rates, omega_channel
from macid.channel_core import KernelSupport, MacChannel, SequenceDistribution
from macid.errors import DimensionError, UsageError, ValidationError
from macid.resolvability import select_code

MAX_OPTIMIZED_OUTPUTS = 12


@dataclass(frozen=True, eq=False)
class IdCode:
    """``decoders`` is a bool array of shape ``(N1, N2, |Z|^n)``."""

    n: int
    inputs1: tuple
    inputs2: tuple
    decoders: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inputs1", tuple(self.inputs1))
        object.__setattr__(self, "inputs2", tuple(self.inputs2))
        if not self.inputs1 or not self.inputs2:
            raise ValidationError("an ID code needs at least one input on each side")
        dec = np.asarray(self.decoders, dtype=bool)
        if dec.ndim != 3 or dec.shape[:2] != (len(self.inputs1), len(self.inputs2)):
            raise DimensionError(f"decoders have shape {dec.shape}, expected ({len(self.inputs1)}, {len(self.inputs2)}, |Z|^n)")
        for p in self.inputs1 + self.inputs2:
            if p.n != self.n:
                raise DimensionError(f"input at block length {p.n}, expected {self.n}")
        dec.setflags(write=False)
        object.__setattr__(self, "decoders", dec)

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.inputs1), len(self.inputs2)

    def to_dict(self) -> dict:
        n1, n2 = self.sizes
        return {
            "n": self.n,
            "inputs1": [p.probs.tolist() for p in self.inputs1],
            "inputs2": [p.probs.tolist() for p in self.inputs2],
            "decoders": [[np.flatnonzero(self.decoders[i, j]).tolist() for j in range(n2)] for i in range(n1)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, w: MacChannel) -> "IdCode":
        for key in ("n", "inputs1", "inputs2", "decoders"):
            if key not in d:
                raise ValidationError(f"code JSON: missing field {key!r}")
        n = d["n"]
        if not isinstance(n, int) or n < 1:
            raise ValidationError("code JSON: field 'n' must be a positive integer")
        in1 = [SequenceDistribution(w.in1, n, p) for p in d["inputs1"]]
        in2 = [SequenceDistribution(w.in2, n, p) for p in d["inputs2"]]
        nz = w.out.space_size(n)
        rows = d["decoders"]
        if len(rows) != len(in1) or any(len(r) != len(in2) for r in rows):
            raise ValidationError(f"code JSON: 'decoders' must be a {len(in1)} x {len(in2)} array of index lists")
        dec = np.zeros((len(in1), len(in2), nz), dtype=bool)
        for i, row in enumerate(rows):
            for j, idx in enumerate(row):
                idx = np.asarray(idx, dtype=np.int64)
                if idx.size and (idx.min() < 0 or idx.max() >= nz):
                    raise ValidationError(f"code JSON: decoder ({i}, {j}) has an index outside 0..{nz - 1}")
                dec[i, j, idx] = True
        return cls(n, in1, in2, dec)

    @classmethod
    def from_json(cls, text: str, w: MacChannel) -> "IdCode":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"code JSON: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}")
        return cls.from_dict(d, w)


# -- responses and errors ----------------------------------------------------


def _unique_rows(dists: Sequence[SequenceDistribution]):
    mat = np.stack([p.probs for p in dists])
    uniq, inv = np.unique(mat, axis=0, return_inverse=True)
    return uniq, inv.reshape(-1)


def _pair_responses(u1: np.ndarray, u2: np.ndarray, ks: KernelSupport) -> np.ndarray:
    """Responses of every distinct input pair, shape ``(U1, U2, |Z|^n)``."""
    out = np.empty((u1.shape[0], u2.shape[0], ks.nz))
    for a in range(u1.shape[0]):
        # A[y, z] = sum_x P_a(x) W(z|x,y)
        part = np.bincount(ks.y * ks.nz + ks.z, weights=u1[a][ks.x] * ks.w, minlength=ks.ny * ks.nz)
        out[a] = u2 @ part.reshape(ks.ny, ks.nz)
    return out


@dataclass(frozen=True, eq=False)
class CodeResponses:
    """Distinct-pair responses with the cell -> distinct-pair map and multiplicities."""

    values: np.ndarray
    cell: np.ndarray
    mult: np.ndarray

    def of(self, i: int, j: int) -> np.ndarray:
        return self.values[self.cell[i, j]]


def code_responses(code: IdCode, w: MacChannel) -> CodeResponses:
    w.check_n(code.n)
    if code.inputs1[0].alphabet != w.in1 or code.inputs2[0].alphabet != w.in2:
        raise DimensionError("code input alphabets do not match the channel")
    ks = w.support(code.n)
    if code.decoders.shape[2] != ks.nz:
        raise DimensionError(f"decoders cover {code.decoders.shape[2]} outputs, channel has {ks.nz}")
    u1, inv1 = _unique_rows(code.inputs1)
    u2, inv2 = _unique_rows(code.inputs2)
    vals = _pair_responses(u1, u2, ks).reshape(-1, ks.nz)
    cell = inv1[:, None] * u2.shape[0] + inv2[None, :]
    mult = np.bincount(cell.reshape(-1), minlength=vals.shape[0])
    return CodeResponses(vals, cell, mult)


def _top_two(scores: np.ndarray, mult: np.ndarray):
    """Per column: best distinct-pair index, best value, best value among other cells."""
    best = np.argmax(scores, axis=0)
    cols = np.arange(scores.shape[1])
    v1 = scores[best, cols]
    masked = scores.copy()
    masked[best, cols] = -np.inf
    v2 = masked.max(axis=0) if scores.shape[0] > 1 else np.full(scores.shape[1], -np.inf)
    v2 = np.where(mult[best] >= 2, v1, v2)
    return best, v1, v2


def _unique_decoders(flat_dec: np.ndarray):
    nz = flat_dec.shape[1]
    if nz <= 62:
        keys = flat_dec.astype(np.int64) @ (np.int64(1) << np.arange(nz, dtype=np.int64))
        ukeys, inv = np.unique(keys, return_inverse=True)
        udec = ((ukeys[:, None] >> np.arange(nz)[None, :]) & 1).astype(bool)
        return udec, inv.reshape(-1)
    udec, inv = np.unique(flat_dec, axis=0, return_inverse=True)
    return udec, inv.reshape(-1)


@dataclass(frozen=True, eq=False)
class IdErrorReport:
    mu_matrix: np.ndarray
    lambda_matrix: np.ndarray
    mu_max: float
    lambda_max: float
    mu_avg: float
    lambda_avg: float
    r1: float | None
    r2: float | None
    n: int
    sizes: tuple[int, int]
    degenerate: bool

    @property
    def sum_max(self) -> float:
        return self.mu_max + self.lambda_max

    @property
    def sum_avg(self) -> float:
        return self.mu_avg + self.lambda_avg


def id_rate(count: int, n: int) -> float | None:
    """``(1/n) log log N`` in nats, or ``None`` when ``N < 3``."""
    if count < 3:
        return None
    return math.log(math.log(count)) / n


def evaluate_id_code(code: IdCode, w: MacChannel, responses: CodeResponses | None = None) -> IdErrorReport:
    """Exact ``mu`` and ``lambda`` matrices with max and average summaries.

    For a single message pair ``lambda`` is the empty maximum, set to 0 and
    flagged ``degenerate``.
    """
    cr = responses if responses is not None else code_responses(code, w)
    n1, n2 = code.sizes
    flat_dec = code.decoders.reshape(n1 * n2, -1)
    cells = cr.cell.reshape(-1)
    hit = np.einsum("cz,cz->c", cr.values[cells], flat_dec)
    mu = np.clip(1.0 - hit, 0.0, 1.0)
    udec, dinv = _unique_decoders(flat_dec)
    degenerate = n1 * n2 == 1
    if degenerate:
        lam = np.zeros(1)
    else:
        scores = cr.values @ udec.T.astype(np.float64)
        best, v1, v2 = _top_two(scores, cr.mult)
        lam = np.where(cells == best[dinv], v2[dinv], v1[dinv])
        lam = np.clip(lam, 0.0, 1.0)
    mu, lam = mu.reshape(n1, n2), lam.reshape(n1, n2)
    return IdErrorReport(mu, lam, float(mu.max()), float(lam.max()), float(mu.mean()), float(lam.mean()),
                         id_rate(n1, code.n), id_rate(n2, code.n), code.n, (n1, n2), degenerate)


# -- rate conditions and nu --------------------------------------------------


@dataclass(frozen=True)
class RateCondition:
    kind: str
    r1_required: float
    r2_required: float
    tau: float | None = None


def required_rates(kind: str, rates, n: int, x_size: int, y_size: int, tau: float | None = None) -> RateCondition:
    """Lower bounds on ``r_{i,n}``; ``log log(3|X|)^2`` is read as ``log log((3|X|)^2)``."""
    r1, r2 = _rates(rates)
    base = math.log(n) / n
    if kind == "max":
        f = lambda r, k: r + base + math.log(math.log((3 * k) ** 2)) / n  # noqa: E731
        return RateCondition("max", f(r1, x_size), f(r2, y_size))
    if kind == "avg":
        if tau is None or tau <= 0:
            raise UsageError(f"the average criterion needs tau > 0, got {tau}")
        if min(x_size, y_size) < 2:
            raise UsageError("the average criterion needs alphabets of size >= 2")
        f = lambda r, k: r + tau + base + math.log(math.log(k**2)) / n  # noqa: E731
        return RateCondition("avg", f(r1, x_size), f(r2, y_size), tau)
    raise UsageError(f"criterion must be 'max' or 'avg', got {kind!r}")


def min_messages(required: float, n: int) -> int:
    """Smallest ``N >= 3`` with ``(1/n) log log N >= required``."""
    target = math.exp(math.exp(n * required))
    cand = max(3, math.floor(target) - 1)
    while math.log(math.log(cand)) / n < required:
        cand += 1
    return cand


@dataclass(frozen=True)
class RateCheck:
    ok: bool
    margin1: float
    margin2: float
    condition: RateCondition


def check_rate_condition(report: IdErrorReport, rates, kind: str, tau: float | None,
                         x_size: int, y_size: int, n: int) -> RateCheck:
    if report.r1 is None or report.r2 is None:
        raise ValidationError(f"ID rate undefined for message counts {report.sizes}; need N_i >= 3")
    cond = required_rates(kind, rates, n, x_size, y_size, tau)
    m1, m2 = report.r1 - cond.r1_required, report.r2 - cond.r2_required
    return RateCheck(m1 >= 0 and m2 >= 0, m1, m2, cond)


def _nu_term(size: int, n: int, tau: float, rate: float) -> float:
    expo = 2.0 * n * math.expm1(n * tau) * math.exp(n * rate) * math.log(size)
    return math.exp(-expo)


def nu(n: int, tau: float, r1: float, r2: float, x_size: int, y_size: int) -> float:
    """Three-term correction ``A + B + A*B`` of the average-criterion bound."""
    a, b = _nu_term(x_size, n, tau, r1), _nu_term(y_size, n, tau, r2)
    return a + b + a * b


def nu_relaxed(n: int, tau: float, r1: float, r2: float, x_size: int, y_size: int) -> float:
    """Upper bound on ``nu`` from ``e^{n tau} - 1 >= n tau``."""
    a = math.exp(-2.0 * n * n * tau * math.exp(n * r1) * math.log(x_size))
    b = math.exp(-2.0 * n * n * tau * math.exp(n * r2) * math.log(y_size))
    return a + b + a * b


# -- converse checks ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Verdict:
    """``status`` is one of holds, violated, vacuous, rate-condition-unmet."""

    status: str
    lhs: float
    rhs: float
    omega: float
    nu: float
    rate_check: RateCheck | None
    report: IdErrorReport

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def counted(self) -> bool:
        return self.status in ("holds", "violated")


def code_input_pairs(code: IdCode) -> list:
    seen, out = set(), []
    for p in code.inputs1:
        for q in code.inputs2:
            key = (p.probs.tobytes(), q.probs.tobytes())
            if key not in seen:
                seen.add(key)
                out.append((p, q))
    return out


def _distinct_pairs(code: IdCode, limit: int = 4096) -> list:
    u1 = list({p.probs.tobytes(): p for p in code.inputs1}.values())
    u2 = list({q.probs.tobytes(): q for q in code.inputs2}.values())
    if len(u1) * len(u2) > limit:
        raise UsageError(f"code has {len(u1) * len(u2)} distinct input pairs; injection limit is {limit}")
    return [(p, q) for p in u1 for q in u2]


def _check(code, w, rates, gamma, policy, kind, tau, report):
    x_size, y_size = w.in1.size, w.in2.size
    report = report if report is not None else evaluate_id_code(code, w)
    try:
        rc = check_rate_condition(report, rates, kind, tau, x_size, y_size, code.n)
    except ValidationError:
        rc = None
    total = report.sum_max if kind == "max" else report.sum_avg
    lhs = 1.0 - total
    extra = nu(code.n, tau, *_rates(rates), x_size, y_size) if kind == "avg" else 0.0
    if rc is None or not rc.ok:
        return Verdict("rate-condition-unmet", lhs, math.nan, math.nan, extra, rc, report)
    if total >= 1.0:
        return Verdict("vacuous", lhs, math.nan, math.nan, extra, rc, report)
    res: OmegaSearchResult = omega_channel(rates, gamma, w, code.n, policy.with_pairs(_distinct_pairs(code)))
    rhs = res.value + extra
    return Verdict("holds" if lhs <= rhs else "violated", lhs, rhs, res.value, extra, rc, report)


def check_max_converse(code: IdCode, w: MacChannel, rates, gamma: float,
                       policy: InputSearchPolicy = InputSearchPolicy(), report: IdErrorReport | None = None) -> Verdict:
    """Test ``1 - mu_n - lambda_n <= Omega`` with the code's own inputs added to the search."""
    return _check(code, w, rates, gamma, policy, "max", None, report)


def check_avg_converse(code: IdCode, w: MacChannel, rates, gamma: float, tau: float,
                       policy: InputSearchPolicy = InputSearchPolicy(), report: IdErrorReport | None = None) -> Verdict:
    """Test ``1 - mu_avg - lambda_avg <= Omega + nu``."""
    return _check(code, w, rates, gamma, policy, "avg", tau, report)


# -- collision demonstrator --------------------------------------------------


@dataclass(frozen=True)
class Collision:
    cell_a: tuple[int, int]
    cell_b: tuple[int, int]
    center: int
    distance: float
    implied: float


@dataclass(frozen=True, eq=False)
class CollisionReport:
    eta: float
    assigned: np.ndarray
    cluster_sizes: dict
    collisions: list = field(default_factory=list)

    @property
    def found(self) -> bool:
        return bool(self.collisions)


def collision_demo(code: IdCode, w: MacChannel, n: int, rates, gamma: float, seed: int = 0,
                   eta: float | None = None, policy: InputSearchPolicy = InputSearchPolicy(),
                   max_trials: int = 50) -> CollisionReport:
    """Quantize each cell's response to an M-type approximate response and list collisions.

    Centers are ``Q~^{(3)}`` of codebooks selected per distinct input pair.
    A cell joins its nearest center when within ``eta``; two cells on one
    center are within ``2 eta`` of each other.  ``implied`` is
    ``2 (1 - mu_ij - lambda_ij)``, which never exceeds their distance.
    ``eta`` defaults to the searched Omega with the code's inputs injected.
    """
    if code.n != n:
        raise DimensionError(f"code has block length {code.n}, expected {n}")
    if eta is None:
        eta = omega_channel(rates, gamma, w, n, policy.with_pairs(_distinct_pairs(code))).value
    cr = code_responses(code, w)
    report = evaluate_id_code(code, w, cr)
    ks = w.support(n)
    centers = []
    for idx, (p, q) in enumerate(_distinct_pairs(code)):
        sel = select_code(p, q, w, n, rates, gamma, max_trials, seed + idx)
        tx, ty = sel.code.induced(p, q)
        centers.append(np.bincount(ks.z, weights=tx.probs[ks.x] * ty.probs[ks.y] * ks.w, minlength=ks.nz))
    centers = np.unique(np.stack(centers), axis=0)
    n1, n2 = code.sizes
    resp = cr.values[cr.cell.reshape(-1)]
    dist = np.abs(resp[:, None, :] - centers[None, :, :]).sum(axis=2)
    near = np.argmin(dist, axis=1)
    assigned = np.where(dist[np.arange(n1 * n2), near] <= eta, near, -1)
    members: dict = {}
    for c, a in enumerate(assigned):
        if a >= 0:
            members.setdefault(int(a), []).append(c)
    collisions = []
    for center, cells in members.items():
        for u in range(len(cells)):
            for v in range(u + 1, len(cells)):
                a, b = divmod(cells[u], n2), divmod(cells[v], n2)
                d = float(np.abs(resp[cells[u]] - resp[cells[v]]).sum())
                implied = 2.0 * (1.0 - report.mu_matrix[a] - report.lambda_matrix[a])
                collisions.append(Collision(a, b, center, d, implied))
    sizes = {c: len(v) for c, v in members.items()}
    return CollisionReport(eta, assigned.reshape(n1, n2), sizes, collisions)


# -- toy code generators -----------------------------------------------------


def _subset_matrix(nz: int) -> np.ndarray:
    if nz > MAX_OPTIMIZED_OUTPUTS:
        raise UsageError(f"decoder optimization enumerates 2^{nz} subsets; limit is 2^{MAX_OPTIMIZED_OUTPUTS}")
    idx = np.arange(2**nz)
    return ((idx[:, None] >> np.arange(nz)[None, :]) & 1).astype(bool)


def optimized_decoders(cr: CodeResponses, shape: tuple[int, int]) -> np.ndarray:
    """Per cell, the subset maximizing ``Q_ij(D) - max_{other} Q_kl(D)``.

    Ties go to the smallest subset index, so a cell that cannot beat every
    other cell gets the empty decoder.
    """
    subsets = _subset_matrix(cr.values.shape[1])
    scores = cr.values @ subsets.T.astype(np.float64)
    best, v1, v2 = _top_two(scores, cr.mult)
    # gap for distinct pair u on subset s
    other = np.where(np.arange(scores.shape[0])[:, None] == best[None, :], v2[None, :], v1[None, :])
    gap = scores - other
    choice = np.argmax(gap, axis=1)
    return subsets[choice][cr.cell]


def support_decoders(cr: CodeResponses) -> np.ndarray:
    return cr.values[cr.cell] > 0


def random_decoders(rng: np.random.Generator, shape: tuple[int, int], nz: int, density: float = 0.5) -> np.ndarray:
    return rng.random((shape[0], shape[1], nz)) < density


def build_code(w: MacChannel, n: int, inputs1, inputs2, decoders: str = "optimized",
               rng: np.random.Generator | None = None) -> IdCode:
    """Attach decoders chosen by rule ``optimized``, ``support`` or ``random``."""
    nz = w.out.space_size(n)
    shape = (len(inputs1), len(inputs2))
    placeholder = IdCode(n, inputs1, inputs2, np.zeros(shape + (nz,), dtype=bool))
    if decoders == "random":
        return IdCode(n, inputs1, inputs2, random_decoders(rng or np.random.default_rng(0), shape, nz))
    cr = code_responses(placeholder, w)
    if decoders == "optimized":
        return IdCode(n, inputs1, inputs2, optimized_decoders(cr, shape))
    if decoders == "support":
        return IdCode(n, inputs1, inputs2, support_decoders(cr))
    raise UsageError(f"unknown decoder rule {decoders!r}")


def point_mass_grid_code(w: MacChannel, n: int, n1: int, n2: int, decoders: str = "optimized") -> IdCode:
    """Message ``i`` sends the point mass on sequence ``i mod |X|^n``."""
    in1 = [SequenceDistribution.point_mass(w.in1, n, i % w.in1.space_size(n)) for i in range(n1)]
    in2 = [SequenceDistribution.point_mass(w.in2, n, j % w.in2.space_size(n)) for j in range(n2)]
    return build_code(w, n, in1, in2, decoders)


def perturbed_duplicate_code(w: MacChannel, n: int, base1, base2, copies: int, eps: float,
                             rng: np.random.Generator, decoders: str = "optimized") -> IdCode:
    """Each base input repeated ``copies`` times, mixed with weight ``eps`` into a random law."""

    def expand(base, alphabet):
        out = []
        for p in base:
            for _ in range(copies):
                noise = rng.dirichlet(np.ones(p.size))
                out.append(SequenceDistribution(alphabet, n, (1 - eps) * p.probs + eps * noise))
        return out

    return build_code(w, n, expand(base1, w.in1), expand(base2, w.in2), decoders, rng)


def prototype_code(w: MacChannel, n: int, n1: int, n2: int, k: int, planted: int,
                   rng: np.random.Generator, decoders: str = "optimized") -> IdCode:
    """Messages share ``k`` random full-support prototypes per side.

    The first ``planted`` messages on each side instead send distinct point
    masses, giving a few cells a response no other cell can match.
    """

    def side(alphabet, count):
        size = alphabet.space_size(n)
        protos = [rng.dirichlet(np.ones(size)) for _ in range(k)]
        out = []
        for i in range(count):
            if i < min(planted, size):
                out.append(SequenceDistribution.point_mass(alphabet, n, i))
            else:
                out.append(SequenceDistribution(alphabet, n, protos[i % k]))
        return out

    return build_code(w, n, side(w.in1, n1), side(w.in2, n2), decoders, rng)
