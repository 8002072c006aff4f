import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from macid.bounds import (
    OMEGA_CLAIMED_MAX,
    InputSearchPolicy,
    PropertyInstance,
    RatePoint,
    check_omega_identities,
    omega_channel,
    omega_point,
    random_instances,
    simplex_grid,
    t_set,
    zeta,
)
from macid.channel_core import SequenceDistribution, TripleSet, binary_adder
from macid.errors import UsageError, ValidationError
from test_channel_core import random_instance, seeds

LN2 = math.log(2)
rates = st.floats(0.0, 2.0)
gammas = st.floats(0.0, 0.3)


class TestTSet:
    def test_infinite_rate_full(self, adder, uniform1):
        s = t_set(1, (math.inf, 0.0), 0.1, uniform1, uniform1, adder, 1)
        assert s.cardinality == 4

    def test_zero_rate_empty(self, adder, uniform1):
        assert t_set(1, (0.0, 0.0), 0.0, uniform1, uniform1, adder, 1).cardinality == 0

    def test_t3_by_enumeration(self, adder, uniform1):
        s = t_set(3, (LN2, LN2), 0.0, uniform1, uniform1, adder, 1)
        expected = {(t["x"], t["y"], t["z"]) for t in oracles.triples(uniform1.probs, uniform1.probs, adder.kernel)
                    if t["Xonly"] <= LN2 and t["Yonly"] <= LN2 and t["Joint"] <= 2 * LN2}
        got = {(x, y, z) for x in range(2) for y in range(2) for z in range(3) if s.contains(x, y, z)}
        assert got == expected and len(got) == 4

    def test_rate_point_validation(self):
        with pytest.raises(ValidationError):
            RatePoint(-0.1, 0.0)


class TestZeta:
    def test_empty(self, adder, uniform1):
        assert zeta(1, (0.3, 0.3), TripleSet.empty(1, (2, 2, 3)), uniform1, uniform1, adder, 1) == 0.0

    def test_full_adder(self, adder, uniform1):
        z = zeta(1, (LN2, 0.0), TripleSet.full(1, (2, 2, 3)), uniform1, uniform1, adder, 1)
        assert z == pytest.approx(1.0, abs=1e-12)

    @given(seeds, rates, rates, gammas)
    def test_bound_on_threshold_set(self, seed, r1, r2, g):
        _, w, px, py, n = random_instance(seed)
        for t, mult in ((1, 1), (2, 1), (3, 3)):
            s = t_set(t, (r1, r2), g, px, py, w, n)
            assert 0 <= zeta(t, (r1, r2), s, px, py, w, n) <= mult * math.exp(-n * g) + 1e-12


class TestOmegaPoint:
    @given(seeds, rates, rates, gammas)
    def test_matches_oracle(self, seed, r1, r2, g):
        _, w, px, py, n = random_instance(seed)
        bd = omega_point((r1, r2), g, px, py, w, n)
        branches, best = oracles.omega(px.probs, py.probs, w.kernel_n(n), n, r1, r2, g)
        for b, (o1, o2) in zip(bd.branches, branches):
            assert b.omega1 == pytest.approx(o1, abs=1e-12)
            assert b.omega2 == pytest.approx(o2, rel=1e-9, abs=1e-12)
            assert b.omega == 4 * b.omega1 + 3 * math.sqrt(b.omega2)
        assert bd.omega_min == pytest.approx(best, abs=1e-9)
        assert bd.omega_min == min(b.omega for b in bd.branches)
        assert bd.branch(bd.min_branch).omega == bd.omega_min
        assert 0 <= bd.omega_min <= OMEGA_CLAIMED_MAX + 1e-12

    def test_large_rates_vanish(self, adder, uniform1):
        bd = omega_point((50.0, 50.0), 0.0, uniform1, uniform1, adder, 1)
        assert all(b.omega1 == 0 for b in bd.branches)
        assert bd.omega_min < 1e-10

    def test_low_rate_branch1(self, adder, uniform1):
        assert omega_point((0.5, 0.5), 0.0, uniform1, uniform1, adder, 1).branch(1).omega1 == 1.0

    @given(seeds, st.floats(0.3, 2.0), st.floats(0.3, 2.0), st.floats(0.0, 0.3))
    def test_shift(self, seed, r1, r2, g):
        _, w, px, py, n = random_instance(seed)
        a = omega_point((r1, r2), g, px, py, w, n)
        b = omega_point((r1 - g, r2 - g), 0.0, px, py, w, n)
        for t in (1, 2, 3):
            assert abs(a.branch(t).omega1 - b.branch(t).omega1) <= 1e-12

    def test_negative_gamma(self, adder, uniform1):
        with pytest.raises(UsageError):
            omega_point((0.1, 0.1), -0.1, uniform1, uniform1, adder, 1)


class TestSearch:
    def test_simplex_grid(self):
        g = simplex_grid(2, 10)
        assert len(g) == 11 and np.allclose(g[0], [0, 1])
        assert len(simplex_grid(3, 4)) == 15
        fine = {tuple(np.round(v, 12)) for v in simplex_grid(3, 8)}
        assert {tuple(np.round(v, 12)) for v in simplex_grid(3, 4)} <= fine

    def test_singleton_explicit(self, adder):
        px = SequenceDistribution.iid(adder.in1, [0.3, 0.7], 2)
        py = SequenceDistribution.iid(adder.in2, [0.6, 0.4], 2)
        res = omega_channel((0.5, 0.6), 0.05, adder, 2, InputSearchPolicy("explicit-list", explicit=((px, py),)))
        assert res.value == omega_point((0.5, 0.6), 0.05, px, py, adder, 2).omega_min
        assert res.evaluated == 1

    def test_empty_explicit(self):
        with pytest.raises(UsageError):
            InputSearchPolicy("explicit-list")

    @pytest.mark.parametrize("point", [(0.5, 0.5), (0.9, 0.4), (1.2, 1.2)])
    def test_monotone_in_resolution(self, adder, point):
        vals = [omega_channel(point, 0.05, adder, 2, InputSearchPolicy(grid_resolution=k)).value for k in (2, 4, 8)]
        assert vals[0] <= vals[1] <= vals[2]

    def test_decreasing_outside(self, adder):
        v1 = omega_channel((1.2, 1.2), 0.05, adder, 1).value
        v2 = omega_channel((1.2, 1.2), 0.05, adder, 2).value
        assert v2 < v1

    @pytest.mark.parametrize("point", [(0.0, 0.0), (0.8, 0.8)])
    def test_ties_keep_first_grid_point(self, adder, point):
        res = omega_channel(point, 0.02, adder, 2, InputSearchPolicy(grid_resolution=4))
        grid = simplex_grid(2, 4)
        vals = [(omega_point(point, 0.02, SequenceDistribution.iid(adder.in1, a, 2),
                             SequenceDistribution.iid(adder.in2, b, 2), adder, 2).omega_min, a, b)
                for a in grid for b in grid]
        top = max(v for v, _, _ in vals)
        first = next((a, b) for v, a, b in vals if v == top)
        assert res.value == top
        assert np.array_equal(res.px.letter, first[0]) and np.array_equal(res.py.letter, first[1])

    def test_ascent_never_worse(self, adder):
        base = omega_channel((0.8, 0.8), 0.02, adder, 3).value
        asc = omega_channel((0.8, 0.8), 0.02, adder, 3, InputSearchPolicy("iid-grid-plus-ascent", 10, 5, 1)).value
        assert asc >= base

    def test_threads_identical(self, adder):
        a = omega_channel((0.8, 0.8), 0.02, adder, 3, threads=1)
        b = omega_channel((0.8, 0.8), 0.02, adder, 3, threads=4)
        assert a.value == b.value and a.px == b.px


class TestOmegaIdentities:
    def test_random_instances_clean(self):
        inst = random_instances(np.random.default_rng(0), 30)
        u = SequenceDistribution.uniform(binary_adder().in1, 2)
        inst.append(PropertyInstance(u, u, binary_adder(), 2, 0.7, 0.4, "adder"))
        for g in (0.0, 0.05):
            rep = check_omega_identities(inst, g + 0.05, g)
            assert rep.ok, rep.violations[:3]
            assert rep.instances == 31
            assert max(rep.omega_values) <= OMEGA_CLAIMED_MAX

    def test_violations_are_reported(self):
        inst = random_instances(np.random.default_rng(1), 2)
        rep = check_omega_identities(inst, 0.1, 0.05, tol=-1.0)
        assert not rep.ok and all(v.margin > -1.0 or "eq" for v in rep.violations)
        assert {v.instance for v in rep.violations} == {0, 1}

    def test_bad_gamma_tau(self):
        with pytest.raises(UsageError):
            check_omega_identities([], 0.05, 0.05)
