"""Rate-region geometry: pentagons, the augmented outer region, unions, sweeps.

Finite-n pentagons come from the quantile proxies of ``spectrum``; the
asymptotic reference for memoryless channels uses single-letter mutual
information.  A union over searched inputs is an inner approximation of
the union over all independent input pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from macid.bounds import InputSearchPolicy, _rates, omega_channel, simplex_grid
from macid.channel_core import MacChannel, SequenceDistribution
from macid.errors import UsageError
from macid.spectrum import DEFAULT_EPSILON, DensityKind, single_letter_mi, spectral_rates

BOUNDARY_TOL = 1e-9
INSIDE, OUTSIDE, BOUNDARY = "inside", "outside", "boundary"


@dataclass(frozen=True)
class Pentagon:
    """``{R >= 0 : R1 <= c1, R2 <= c2, R1 + R2 <= c12}``."""

    c1: float
    c2: float
    c12: float

    def margin(self, r1: float, r2: float) -> float:
        return min(self.c1 - r1, self.c2 - r2, self.c12 - r1 - r2)

    def corners(self) -> list[tuple[float, float]]:
        a, b = min(self.c1, self.c12), min(self.c2, self.c12)
        return [(0.0, 0.0), (a, 0.0), (a, max(0.0, min(b, self.c12 - a))),
                (max(0.0, min(a, self.c12 - b)), b), (0.0, b)]

    def deviation(self, other: "Pentagon") -> float:
        return max(abs(self.c1 - other.c1), abs(self.c2 - other.c2), abs(self.c12 - other.c12))

    def subset_of(self, other: "Pentagon", tol: float = 0.0) -> bool:
        return self.c1 <= other.c1 + tol and self.c2 <= other.c2 + tol and self.c12 <= other.c12 + tol


@dataclass(frozen=True)
class Rectangle:
    a: float
    b: float

    def margin(self, r1: float, r2: float) -> float:
        return min(self.a - r1, self.b - r2)


@dataclass(frozen=True)
class AugmentedOuterRegion:
    """Base pentagon united with two corner rectangles."""

    base: Pentagon
    corner1: Rectangle
    corner2: Rectangle

    def margin(self, r1: float, r2: float) -> float:
        return max(self.base.margin(r1, r2), self.corner1.margin(r1, r2), self.corner2.margin(r1, r2))


@dataclass(frozen=True)
class Region:
    """Union of shapes; each shape exposes ``margin(r1, r2)``."""

    shapes: tuple
    which: str = ""

    def margin(self, r1: float, r2: float) -> float:
        return max(s.margin(r1, r2) for s in self.shapes)


def _classify(m: float, tol: float) -> str:
    if m > tol:
        return INSIDE
    if m >= -tol:
        return BOUNDARY
    return OUTSIDE


def membership(rates, region, tol: float = BOUNDARY_TOL) -> str:
    r1, r2 = _rates(rates)
    if r1 < 0 or r2 < 0:
        return OUTSIDE
    return _classify(region.margin(r1, r2), tol)


def contains(rates, region, tol: float = BOUNDARY_TOL) -> bool:
    return membership(rates, region, tol) != OUTSIDE


# -- construction ------------------------------------------------------------


def _from_rates(rates: dict) -> Pentagon:
    return Pentagon(rates[DensityKind.XgivenY], rates[DensityKind.YgivenX], rates[DensityKind.Joint])


def pentagon_for_inputs(px, py, w: MacChannel, n: int, epsilon: float = DEFAULT_EPSILON,
                        which: str = "inf") -> Pentagon:
    """Finite-n proxy pentagon from lower (``inf``) or upper (``sup``) quantiles."""
    sr = spectral_rates(px, py, w, n, epsilon)
    if which == "inf":
        return _from_rates(sr.inf_rates)
    if which == "sup":
        return _from_rates(sr.sup_rates)
    raise UsageError(f"which must be 'inf' or 'sup', got {which!r}")


def augmented_for_inputs(px, py, w: MacChannel, n: int, epsilon: float = DEFAULT_EPSILON) -> AugmentedOuterRegion:
    s = spectral_rates(px, py, w, n, epsilon).sup_rates
    return AugmentedOuterRegion(
        _from_rates(s),
        Rectangle(s[DensityKind.Xonly], s[DensityKind.YgivenX]),
        Rectangle(s[DensityKind.XgivenY], s[DensityKind.Yonly]),
    )


def _mi(w, px1, py1) -> dict:
    return {k: single_letter_mi(k, px1, py1, w) for k in DensityKind}


def asymptotic_pentagon(px1, py1, w: MacChannel) -> Pentagon:
    """Single-letter pentagon of a memoryless channel for per-letter inputs."""
    return _from_rates(_mi(w, px1, py1))


def asymptotic_augmented(px1, py1, w: MacChannel) -> AugmentedOuterRegion:
    m = _mi(w, px1, py1)
    return AugmentedOuterRegion(
        _from_rates(m),
        Rectangle(m[DensityKind.Xonly], m[DensityKind.YgivenX]),
        Rectangle(m[DensityKind.XgivenY], m[DensityKind.Yonly]),
    )


def _policy_pairs(w: MacChannel, n: int, policy: InputSearchPolicy):
    pairs = []
    if policy.mode != "explicit-list":
        for lx in simplex_grid(w.in1.size, policy.grid_resolution):
            for ly in simplex_grid(w.in2.size, policy.grid_resolution):
                pairs.append((lx, ly))
    return pairs


def union_region(w: MacChannel, n: int, epsilon: float = DEFAULT_EPSILON,
                 policy: InputSearchPolicy = InputSearchPolicy(), which: str = "inf",
                 asymptotic: bool = False) -> Region:
    """Union over the policy's inputs; ``which`` is ``inf``, ``sup`` or ``prime``.

    ``asymptotic`` uses single-letter quantities (memoryless channels; the
    grid letters are the per-letter laws).  Explicit pairs are always added.
    """
    if which not in ("inf", "sup", "prime"):
        raise UsageError(f"which must be 'inf', 'sup' or 'prime', got {which!r}")
    shapes = []
    for lx, ly in _policy_pairs(w, n, policy):
        if asymptotic:
            shapes.append(asymptotic_augmented(lx, ly, w) if which == "prime" else asymptotic_pentagon(lx, ly, w))
        else:
            px = SequenceDistribution.iid(w.in1, lx, n)
            py = SequenceDistribution.iid(w.in2, ly, n)
            shapes.append(augmented_for_inputs(px, py, w, n, epsilon) if which == "prime"
                          else pentagon_for_inputs(px, py, w, n, epsilon, which))
    for px, py in policy.explicit:
        if asymptotic:
            if px.n != 1 or py.n != 1:
                raise UsageError("asymptotic unions take per-letter (n=1) explicit inputs")
            shapes.append(asymptotic_augmented(px, py, w) if which == "prime" else asymptotic_pentagon(px, py, w))
        else:
            shapes.append(augmented_for_inputs(px, py, w, n, epsilon) if which == "prime"
                          else pentagon_for_inputs(px, py, w, n, epsilon, which))
    if not shapes:
        raise UsageError("input policy produced no inputs")
    return Region(tuple(shapes), which)


def membership_grid(region, r1_values: Sequence[float], r2_values: Sequence[float],
                    tol: float = BOUNDARY_TOL) -> np.ndarray:
    """Bool map ``[i, j]`` of ``(r1_values[i], r2_values[j])`` in the closed region."""
    return np.array([[contains((a, b), region, tol) for b in r2_values] for a in r1_values], dtype=bool)


# -- strong converse sweep ---------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    r1: float
    r2: float
    classification: str
    n_list: tuple
    omegas: tuple

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.omegas, self.omegas[1:]))

    @property
    def decay_ratio(self) -> float:
        first = self.omegas[0]
        return self.omegas[-1] / first if first > 0 else math.nan

    def decays(self, ratio: float = 0.5) -> bool:
        return self.strictly_decreasing and self.decay_ratio < ratio


def strong_converse_sweep(w: MacChannel, rate_points, gamma: float, n_list: Sequence[int],
                          policy: InputSearchPolicy = InputSearchPolicy(), reference: Region | None = None,
                          threads: int = 1) -> list[SweepPoint]:
    """Searched Omega for each rate point and block length.

    ``reference`` classifies points; it defaults to the asymptotic augmented
    union over the same grid.
    """
    if reference is None:
        reference = union_region(w, 1, policy=InputSearchPolicy(grid_resolution=policy.grid_resolution),
                                 which="prime", asymptotic=True)
    out = []
    for rp in rate_points:
        r1, r2 = _rates(rp)
        omegas = tuple(omega_channel((r1, r2), gamma, w, n, policy, threads).value for n in n_list)
        out.append(SweepPoint(r1, r2, membership((r1, r2), reference), tuple(n_list), omegas))
    return out
