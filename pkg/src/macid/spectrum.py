"""Information densities, their exact finite-n laws, and quantile proxies.

All densities are natural-log likelihood ratios.  ``density_at`` returns the
unnormalized value; laws are of ``density / n`` (nats per symbol).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from macid.channel_core import (
    MacChannel,
    SequenceDistribution,
    _check_inputs,
    conditional_marginals,
)
from macid.errors import UnsupportedError, UsageError

ATOM_MERGE_TOL = 1e-12
DEFAULT_EPSILON = 0.05


class DensityKind(enum.Enum):
    XgivenY = "x;z|y"
    YgivenX = "y;z|x"
    Joint = "xy;z"
    Xonly = "x;z"
    Yonly = "y;z"

    @classmethod
    def parse(cls, text: str) -> "DensityKind":
        for kind in cls:
            if text in (kind.name, kind.value, kind.name.lower()):
                return kind
        raise UsageError(f"unknown density kind {text!r}; choose from {[k.name for k in cls]}")


PENTAGON_KINDS = (DensityKind.XgivenY, DensityKind.YgivenX, DensityKind.Joint)


@dataclass(frozen=True, eq=False)
class JointTable:
    """Positive-probability triples of ``px * py * W^n`` with their marginals.

    Arrays are parallel and ordered by flat ``(x, y, z)`` index.  ``zy``,
    ``zx`` and ``pz`` hold ``P_{Z|Y}(z|y)``, ``P_{Z|X}(z|x)`` and ``P_Z(z)``
    evaluated at each triple.
    """

    n: int
    shape: tuple[int, int, int]
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    p: np.ndarray
    zy: np.ndarray
    zx: np.ndarray
    pz: np.ndarray
    _dens: dict = field(default_factory=dict, repr=False)

    @property
    def flat(self) -> np.ndarray:
        _, ny, nz = self.shape
        return (self.x * ny + self.y) * nz + self.z

    def density(self, kind: DensityKind) -> np.ndarray:
        if kind not in self._dens:
            logs = {
                "w": np.log(self.w),
                "zy": np.log(self.zy),
                "zx": np.log(self.zx),
                "pz": np.log(self.pz),
            }
            num, den = {
                DensityKind.XgivenY: ("w", "zy"),
                DensityKind.YgivenX: ("w", "zx"),
                DensityKind.Joint: ("w", "pz"),
                DensityKind.Xonly: ("zx", "pz"),
                DensityKind.Yonly: ("zy", "pz"),
            }[kind]
            self._dens[kind] = logs[num] - logs[den]
        return self._dens[kind]


def joint_table(px: SequenceDistribution, py: SequenceDistribution, w: MacChannel, n: int) -> JointTable:
    _check_inputs(px, py, w, n)
    ks = w.support(n)
    zy = np.bincount(ks.y * ks.nz + ks.z, weights=px.probs[ks.x] * ks.w, minlength=ks.ny * ks.nz)
    zx = np.bincount(ks.x * ks.nz + ks.z, weights=py.probs[ks.y] * ks.w, minlength=ks.nx * ks.nz)
    pz = np.bincount(ks.z, weights=px.probs[ks.x] * py.probs[ks.y] * ks.w, minlength=ks.nz)
    p = px.probs[ks.x] * py.probs[ks.y] * ks.w
    sel = p > 0
    x, y, z = ks.x[sel], ks.y[sel], ks.z[sel]
    return JointTable(
        n=n,
        shape=(ks.nx, ks.ny, ks.nz),
        x=x,
        y=y,
        z=z,
        w=ks.w[sel],
        p=p[sel],
        zy=zy[y * ks.nz + z],
        zx=zx[x * ks.nz + z],
        pz=pz[z],
    )


def _log_ratio(num: float, den: float) -> float:
    if num <= 0:
        return -math.inf
    if den <= 0:
        return math.inf
    return math.log(num) - math.log(den)


def density_at(kind: DensityKind, x_seq, y_seq, z_seq, px, py, w: MacChannel, n: int) -> float:
    """Unnormalized density in nats at one triple.

    Sequences may be given as symbol tuples or as dense indices.  Zero
    numerator gives ``-inf``; zero denominator with positive numerator gives
    ``+inf``.
    """
    xi = x_seq if isinstance(x_seq, (int, np.integer)) else w.in1.index(x_seq)
    yi = y_seq if isinstance(y_seq, (int, np.integer)) else w.in2.index(y_seq)
    zi = z_seq if isinstance(z_seq, (int, np.integer)) else w.out.index(z_seq)
    zy, zx, pz = conditional_marginals(px, py, w, n)
    wv = float(w.prob(w.out.sequence(zi, n), w.in1.sequence(xi, n), w.in2.sequence(yi, n)))
    q = float(pz.mass[zi])
    if kind is DensityKind.XgivenY:
        return _log_ratio(wv, zy[yi, zi])
    if kind is DensityKind.YgivenX:
        return _log_ratio(wv, zx[xi, zi])
    if kind is DensityKind.Joint:
        return _log_ratio(wv, q)
    if kind is DensityKind.Xonly:
        return _log_ratio(zx[xi, zi], q)
    return _log_ratio(zy[yi, zi], q)


@dataclass(frozen=True, eq=False)
class DensityLaw:
    """Exact law of ``density / n``: ascending atom values with probabilities."""

    kind: DensityKind
    n: int
    values: np.ndarray
    probs: np.ndarray

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probs.tolist()))

    @property
    def mean(self) -> float:
        return float(np.sum(self.values * self.probs))

    def cdf(self, alpha: float) -> float:
        return float(np.sum(self.probs[self.values <= alpha]))


def merge_atoms(values: np.ndarray, probs: np.ndarray, tol: float = ATOM_MERGE_TOL):
    """Sort atoms and merge runs whose consecutive values differ by <= tol."""
    order = np.argsort(values, kind="stable")
    v, p = values[order], probs[order]
    if v.shape[0] == 0:
        return v, p
    starts = np.concatenate(([0], np.nonzero(np.diff(v) > tol)[0] + 1))
    return v[starts], np.add.reduceat(p, starts)


def law_from_table(table: JointTable, kind: DensityKind) -> DensityLaw:
    values, probs = merge_atoms(table.density(kind) / table.n, table.p)
    return DensityLaw(kind, table.n, values, probs)


def density_law(kind: DensityKind, px, py, w: MacChannel, n: int) -> DensityLaw:
    return law_from_table(joint_table(px, py, w, n), kind)


def lower_quantile(law: DensityLaw, epsilon: float) -> float:
    """``sup{a : Pr[A <= a] <= eps}``, which is the first atom with CDF > eps."""
    cum = np.cumsum(law.probs)
    idx = int(np.searchsorted(cum, epsilon, side="right"))
    return float(law.values[min(idx, law.values.shape[0] - 1)])


def upper_quantile(law: DensityLaw, epsilon: float) -> float:
    """``inf{a : Pr[A >= a] <= eps}``, which is the last atom with tail > eps."""
    tail = np.cumsum(law.probs[::-1])
    idx = int(np.searchsorted(tail, epsilon, side="right"))
    return float(law.values[::-1][min(idx, law.values.shape[0] - 1)])


@dataclass(frozen=True)
class SpectralRates:
    """Finite-n quantile proxies for the p-liminf / p-limsup rates.

    These are proxies at one block length, not the asymptotic quantities.
    ``inf_rates`` / ``sup_rates`` map every ``DensityKind`` to nats/symbol.
    """

    n: int
    epsilon: float
    inf_rates: dict
    sup_rates: dict

    @property
    def inf_triple(self) -> tuple[float, float, float]:
        return tuple(self.inf_rates[k] for k in PENTAGON_KINDS)

    @property
    def sup_triple(self) -> tuple[float, float, float]:
        return tuple(self.sup_rates[k] for k in PENTAGON_KINDS)


def spectral_rates_from_table(table: JointTable, epsilon: float = DEFAULT_EPSILON) -> SpectralRates:
    if not 0 < epsilon < 0.5:
        raise UsageError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    inf, sup = {}, {}
    for kind in DensityKind:
        law = law_from_table(table, kind)
        inf[kind] = lower_quantile(law, epsilon)
        sup[kind] = upper_quantile(law, epsilon)
    return SpectralRates(table.n, epsilon, inf, sup)


def spectral_rates(px, py, w: MacChannel, n: int, epsilon: float = DEFAULT_EPSILON) -> SpectralRates:
    return spectral_rates_from_table(joint_table(px, py, w, n), epsilon)


def _letter(p, alphabet) -> SequenceDistribution:
    if isinstance(p, SequenceDistribution):
        if p.n != 1:
            raise UsageError("single-letter mutual information needs n=1 input laws")
        return p
    return SequenceDistribution(alphabet, 1, np.asarray(p, dtype=np.float64))


def single_letter_mi(kind: DensityKind, px1, py1, w: MacChannel) -> float:
    """Mutual information of ``kind`` in nats for per-letter inputs."""
    if w.kind != "memoryless":
        raise UnsupportedError("single-letter mutual information is defined for memoryless channels only")
    return density_law(kind, _letter(px1, w.in1), _letter(py1, w.in2), w, 1).mean
