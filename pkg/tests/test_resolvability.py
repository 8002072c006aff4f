import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from helpers import point
from macid.bounds import t_set
from macid.channel_core import SequenceDistribution, TripleSet, partial_response, response, variational_distance
from macid.errors import DimensionError, UsageError
from macid.resolvability import (
    ResolvabilityCode,
    approx_responses,
    codebook_size,
    count_m_types,
    default_sets,
    derandomization_record,
    m_type_bound,
    perfect_type_code,
    q3_variance,
    resolvability_sweep,
    sample_code,
    select_code,
    summarize_sweep,
)
from test_channel_core import random_instance, seeds


class TestMTypes:
    @pytest.mark.parametrize("k,m,count", [(2, 2, 3), (5, 1, 5), (4, 3, 20)])
    def test_examples(self, k, m, count):
        assert count_m_types(k, m) == count == len(oracles.m_types(k, m))
        assert count <= m_type_bound(k, m)

    @given(st.integers(1, 5), st.integers(1, 6))
    def test_formula_vs_enumeration(self, k, m):
        assert count_m_types(k, m) == len(oracles.m_types(k, m)) <= m_type_bound(k, m)

    def test_big(self):
        assert count_m_types(2**10, 200) == math.comb(200 + 2**10 - 1, 2**10 - 1)

    def test_invalid(self):
        with pytest.raises(UsageError):
            count_m_types(0, 1)

    def test_codebook_size(self):
        assert codebook_size(0.0, 5) == 1
        assert codebook_size(math.log(2), 3) == 8
        assert codebook_size(1.0, 2) == 8


class TestSampling:
    def test_reproducible(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 3)
        a, b = sample_code(u, u, 50, 20, 3, 7), sample_code(u, u, 50, 20, 3, 7)
        assert np.array_equal(a.codewords1, b.codewords1) and np.array_equal(a.codewords2, b.codewords2)
        assert not np.array_equal(a.codewords1, sample_code(u, u, 50, 20, 3, 8).codewords1)

    def test_prefix_stable(self, adder):
        # counter-based draws: a longer codebook extends a shorter one
        u = SequenceDistribution.uniform(adder.in1, 2)
        short, long = sample_code(u, u, 10, 4, 2, 3), sample_code(u, u, 40, 4, 2, 3)
        assert np.array_equal(long.codewords1[:10], short.codewords1)

    def test_point_mass_source(self, adder):
        px = point(2, 2, 3)
        py = SequenceDistribution.uniform(adder.in2, 2)
        code = sample_code(px, py, 16, 5, 2, 0)
        assert set(code.codewords1) == {3}
        ar = approx_responses(code, px, py, adder, 2)
        np.testing.assert_array_equal(ar.q1.mass, response(px, py, adder, 2).mass)

    def test_point_mass_both(self, adder):
        code = ResolvabilityCode(2, 1, 1, np.array([2]), np.array([1]), None)
        u = SequenceDistribution.uniform(adder.in1, 2)
        ar = approx_responses(code, u, u, adder, 2)
        np.testing.assert_array_equal(ar.q3.mass, adder.kernel_n(2)[2, 1])

    def test_multinomial_concentration(self):
        probs = np.array([0.1, 0.2, 0.3, 0.4])
        px = SequenceDistribution(point(2, 2, 0).alphabet, 2, probs)
        m = 2**16
        code = sample_code(px, px, m, 1, 2, 12)
        freq = code.counts(1, 4) / m
        sigma = np.sqrt(probs * (1 - probs) / m)
        assert np.all(np.abs(freq - probs) <= 3 * sigma)

    @given(seeds, st.integers(1, 40))
    def test_m_type_property(self, seed, m):
        _, w, px, py, n = random_instance(seed)
        code = sample_code(px, py, m, m + 1, n, seed)
        tx, ty = code.induced(px, py)
        np.testing.assert_allclose(tx.probs * m, np.rint(tx.probs * m), atol=1e-9)
        assert code.counts(1, px.size).sum() == m
        # zero-probability sequences are never drawn
        assert np.all(px.probs[code.codewords1] > 0) and np.all(py.probs[code.codewords2] > 0)

    def test_dimension_errors(self, adder, uniform1):
        with pytest.raises(UsageError):
            sample_code(uniform1, uniform1, 0, 1, 1, 0)
        with pytest.raises(DimensionError):
            sample_code(uniform1, uniform1, 1, 1, 2, 0)


class TestPerfectType:
    def test_uniform_every_sequence(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 2)
        code = perfect_type_code(u, u, 4, 4, 2)
        assert sorted(code.codewords1) == [0, 1, 2, 3]
        ar = approx_responses(code, u, u, adder, 2)
        assert variational_distance(ar.q1, response(u, u, adder, 2)) == 0

    def test_not_a_type(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 2)
        assert perfect_type_code(u, u, 3, 4, 2) is None

    def test_full_sets_zero_error(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 2)
        full = TripleSet.full(2, adder.sizes(2))
        rec = derandomization_record(perfect_type_code(u, u, 4, 4, 2), u, u, adder, 2, (full,) * 3, (1.0, 1.0))
        assert rec.accepted
        for b in rec.branches:
            assert b.lam == 0 and b.phi == 0 and b.d_exact == 0

    def test_immediate_acceptance(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 2)
        sel = select_code(u, u, adder, 2, (math.log(4), math.log(4)), 0.05, perfect_type=True)
        assert sel.accepted and sel.trials_used == 1
        assert sel.record.branch(1).d_exact == 0 and sel.code.seed is None


class TestDerandomization:
    @given(seeds)
    def test_decomposition(self, seed):
        rng, w, px, py, n = random_instance(seed)
        code = sample_code(px, py, 3, 2, n, seed)
        tx, ty = code.induced(px, py)
        s = TripleSet(n, w.sizes(n), rng.random(int(np.prod(w.sizes(n)))) < 0.4)
        a, b = partial_response(tx, ty, w, s, n), partial_response(tx, ty, w, s.complement(), n)
        np.testing.assert_allclose(a.mass + b.mass, response(tx, ty, w, n).mass, rtol=0, atol=1e-12)

    @given(seeds, st.floats(0.0, 1.5), st.floats(0.0, 1.5))
    def test_record_consistency(self, seed, r1, r2):
        _, w, px, py, n = random_instance(seed)
        code = sample_code(px, py, codebook_size(r1, n), codebook_size(r2, n), n, seed)
        sets = default_sets(px, py, w, n, (r1, r2), 0.05)
        rec = derandomization_record(code, px, py, w, n, sets, (r1, r2))
        ar = approx_responses(code, px, py, w, n)
        q = response(px, py, w, n)
        for t, b in zip((1, 2, 3), rec.branches):
            assert b.d_exact == pytest.approx(variational_distance(ar.branch(t), q), abs=1e-12)
            # triangle inequality: d <= Lambda + Phi + P(S^c)
            assert b.d_exact <= b.lam + b.phi + b.out_prob + 1e-12
            assert b.theta == b.out_prob + math.sqrt(b.zeta)
        if rec.accepted:
            for b in rec.branches:
                assert b.lam + b.phi <= 3 * b.theta + 1e-12
                assert b.d_exact <= b.bound

    def test_sets_match_t(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 2)
        sets = default_sets(u, u, adder, 2, (0.9, 0.9), 0.05)
        for t, s in zip((1, 2, 3), sets):
            assert np.array_equal(s.mask, t_set(t, (0.9, 0.9), 0.05, u, u, adder, 2).mask)

    def test_vacuous_branch(self, constant):
        # input-free channel with S = full: Q~ = Q on every branch
        u = SequenceDistribution.uniform(constant.in1, 1)
        code = sample_code(u, u, 1, 1, 1, 0)
        full = TripleSet.full(1, constant.sizes(1))
        rec = derandomization_record(code, u, u, constant, 1, (full,) * 3, (50.0, 50.0))
        assert rec.accepted and all(b.d_exact == 0 for b in rec.branches)
        empty_zeta = derandomization_record(code, u, u, constant, 1, (full,) * 3, (math.inf, math.inf))
        assert all(b.vacuous for b in empty_zeta.branches) and empty_zeta.accepted

    def test_vacuous_rejects_error(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 1)
        code = ResolvabilityCode(1, 1, 1, np.array([0]), np.array([0]), None)
        full = TripleSet.full(1, adder.sizes(1))
        rec = derandomization_record(code, u, u, adder, 1, (full,) * 3, (math.inf, math.inf))
        assert rec.criterion == math.inf and not rec.accepted

    def test_mean_criterion_bounded(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 2)
        rates = (0.9, 0.9)
        sets = default_sets(u, u, adder, 2, rates, 0.05)
        crit = []
        for s in range(1000):
            code = sample_code(u, u, codebook_size(0.9, 2), codebook_size(0.9, 2), 2, s)
            crit.append(derandomization_record(code, u, u, adder, 2, sets, rates).criterion)
        crit = np.array(crit)
        assert crit.mean() <= 3 + 3 * crit.std() / math.sqrt(crit.size)
        assert np.mean(crit <= 3) > 0


class TestSelect:
    def test_spec_instance(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 2)
        sel = select_code(u, u, adder, 2, (1.0, 1.0), 0.05, max_trials=50, seed=3)
        assert sel.accepted and sel.certificate_holds
        assert all(b.ratio <= 1 for b in sel.record.branches)

    def test_exhausted_reports_best(self, adder, monkeypatch):
        import macid.resolvability as res
        real, crits = res.derandomization_record, iter([5.0, 3.5, 4.0])

        def rejecting(*args):
            rec = real(*args)
            return res.DerandomizationRecord(rec.branches, next(crits), False)

        monkeypatch.setattr(res, "derandomization_record", rejecting)
        u = SequenceDistribution.uniform(adder.in1, 1)
        sel = select_code(u, u, adder, 1, (0.5, 0.5), 0.0, max_trials=3, seed=4)
        assert not sel.accepted and sel.trials_used == 3 and sel.best_criterion == 3.5
        assert sel.code.seed == res.trial_seed(4, 1)

    def test_bad_trials(self, adder, uniform1):
        with pytest.raises(UsageError):
            select_code(uniform1, uniform1, adder, 1, (0.5, 0.5), 0.0, max_trials=0)


class TestUnbiased:
    def test_q3_mean(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 2)
        q = response(u, u, adder, 2).mass
        acc = np.zeros_like(q)
        seeds_ = 600
        for s in range(seeds_):
            acc += approx_responses(sample_code(u, u, 8, 8, 2, s), u, u, adder, 2).q3.mass
        sd = np.sqrt(q3_variance(u, u, adder, 2, 8, 8) / seeds_)
        assert np.all(np.abs(acc / seeds_ - q) <= 3 * sd + 1e-15)

    def test_variance_vs_monte_carlo(self, adder):
        u = SequenceDistribution.uniform(adder.in1, 1)
        samples = np.array([approx_responses(sample_code(u, u, 3, 2, 1, s), u, u, adder, 1).q3.mass
                            for s in range(4000)])
        np.testing.assert_allclose(samples.var(axis=0), q3_variance(u, u, adder, 1, 3, 2), rtol=0.1)


class TestSweep:
    def run(self, adder, seeds_, threads=1, n_list=(1, 2), grid=((1.0, 1.0),)):
        return resolvability_sweep(lambda n: SequenceDistribution.uniform(adder.in1, n),
                                   lambda n: SequenceDistribution.uniform(adder.in2, n),
                                   adder, n_list, grid, 0.05, seeds_, threads=threads)

    def test_duplicate_seeds(self, adder):
        rows = self.run(adder, [5, 5])
        by_seed = [r for r in rows if r.n == 2]
        assert by_seed[:3] == by_seed[3:]

    def test_threads(self, adder):
        assert self.run(adder, [1, 2, 3]) == self.run(adder, [1, 2, 3], threads=3)

    def test_zero_rates_large_distance(self, adder):
        rows = self.run(adder, [0, 1], n_list=(2,), grid=((0.0, 0.0),))
        assert min(r.d_exact for r in rows if r.t == 3) > 0.5

    def test_decreasing_with_n(self, adder):
        rows = self.run(adder, range(16), n_list=(1, 2, 3, 4), grid=((1.5, 1.5),))
        means = [s.mean_d for s in summarize_sweep(rows) if s.t == 3]
        assert means[-1] < means[0]
        assert all(s.acceptance_rate > 0 for s in summarize_sweep(rows))
