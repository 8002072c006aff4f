import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from helpers import constant_channel, point
from macid.channel_core import (
    Alphabet,
    MacChannel,
    ResponseMeasure,
    SequenceDistribution,
    TripleSet,
    binary_adder,
    builtin_channel,
    conditional_marginals,
    load_channel,
    noisy_adder,
    partial_response,
    random_distribution,
    random_kernel,
    response,
    variational_distance,
)
from macid.errors import CapExceededError, DimensionError, UsageError, ValidationError


def random_instance(seed, max_n=3, max_alpha=3):
    rng = np.random.default_rng(seed)
    while True:
        a, b, c = (int(v) for v in rng.integers(1, max_alpha + 1, size=3))
        n = int(rng.integers(1, max_n + 1))
        if (a * b * c) ** n <= 5000:
            break
    w = MacChannel.memoryless(random_kernel(rng, a, b, c, zero_prob=0.3))
    px = random_distribution(rng, Alphabet(a), n, zero_prob=0.2)
    py = random_distribution(rng, Alphabet(b), n, zero_prob=0.2)
    return rng, w, px, py, n


seeds = st.integers(0, 2**32 - 1)


class TestAlphabet:
    def test_index_roundtrip(self):
        a = Alphabet(3)
        for i in range(27):
            assert a.index(a.sequence(i, 3)) == i

    def test_first_symbol_most_significant(self):
        assert Alphabet(2).index((1, 0, 0)) == 4
        np.testing.assert_array_equal(Alphabet(2).digits(2), [[0, 0], [0, 1], [1, 0], [1, 1]])

    def test_invalid(self):
        with pytest.raises(ValidationError):
            Alphabet(0)
        with pytest.raises(DimensionError):
            Alphabet(2).index((0, 2))


class TestSequenceDistribution:
    def test_normalization_enforced(self):
        with pytest.raises(ValidationError):
            SequenceDistribution(Alphabet(2), 1, [0.5, 0.6])
        with pytest.raises(DimensionError):
            SequenceDistribution(Alphabet(2), 2, [0.5, 0.5])

    def test_iid_matches_product(self):
        p = SequenceDistribution.iid(Alphabet(3), [0.2, 0.3, 0.5], 2)
        assert p.probs[Alphabet(3).index((2, 1))] == pytest.approx(0.5 * 0.3, abs=1e-15)

    def test_equality_by_value(self):
        a = SequenceDistribution.uniform(Alphabet(2), 2)
        b = SequenceDistribution(Alphabet(2), 2, np.full(4, 0.25))
        assert a == b


class TestChannel:
    def test_bad_row_named(self):
        k = np.zeros((2, 2, 2))
        k[..., 0] = 1.0
        k[1, 0] = [0.5, 0.4]
        with pytest.raises(ValidationError, match=r"x=1, y=0"):
            MacChannel.memoryless(k)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_product_consistency(self, n):
        rng = np.random.default_rng(n)
        kern = random_kernel(rng, 2, 2, 2)
        w = MacChannel.memoryless(kern)
        np.testing.assert_allclose(w.kernel_n(n), oracles.dense_kernel(kern, n), rtol=0, atol=1e-12)

    def test_prob_matches_dense(self):
        w = noisy_adder(0.2)
        dense = w.kernel_n(2)
        assert w.prob((1, 2), (0, 1), (1, 1)) == pytest.approx(dense[1, 3, w.out.index((1, 2))], abs=1e-15)

    def test_explicit_kernel_bound_to_n(self):
        w = MacChannel.explicit(binary_adder().kernel_n(2), 2, 2, 2, 3)
        u = SequenceDistribution.uniform(w.in1, 2)
        np.testing.assert_allclose(response(u, u, w, 2).mass, response(u, u, binary_adder(), 2).mass, atol=1e-15)
        with pytest.raises(DimensionError):
            w.check_n(1)

    def test_json_roundtrip_bit_identical(self):
        w = noisy_adder(0.1)
        back = MacChannel.from_json(w.to_json())
        assert back.kernel.tobytes() == w.kernel.tobytes()

    def test_json_errors(self):
        with pytest.raises(ValidationError, match="line 1"):
            MacChannel.from_json("{bad")
        with pytest.raises(ValidationError, match="kernel"):
            MacChannel.from_dict({"x_size": 1, "y_size": 1, "z_size": 1, "kind": "memoryless"})

    def test_builtins(self, tmp_path):
        assert builtin_channel("noisy-adder(0.25)").kernel[0, 0, 1] == pytest.approx(0.125)
        with pytest.raises(UsageError):
            builtin_channel("not-a-channel")
        path = tmp_path / "c.json"
        path.write_text(json.dumps(binary_adder().to_dict()))
        assert load_channel(str(path)).kernel.tobytes() == binary_adder().kernel.tobytes()

    def test_cap(self, monkeypatch):
        monkeypatch.setenv("MACID_MAX_STATES", "50")
        with pytest.raises(CapExceededError, match="8\\*8\\*27"):
            binary_adder().support(3)


class TestResponse:
    def test_point_masses(self, adder):
        q = response(point(2, 1, 0), point(2, 1, 1), adder, 1)
        np.testing.assert_array_equal(q.mass, [0, 1, 0])

    def test_uniform_adder(self, adder, uniform1):
        np.testing.assert_allclose(response(uniform1, uniform1, adder, 1).mass, [0.25, 0.5, 0.25], atol=1e-15)

    def test_input_free_channel(self):
        w = constant_channel([0.1, 0.7, 0.2])
        rng = np.random.default_rng(3)
        px = random_distribution(rng, w.in1, 2)
        py = random_distribution(rng, w.in2, 2)
        q2 = np.kron([0.1, 0.7, 0.2], [0.1, 0.7, 0.2])
        np.testing.assert_allclose(response(px, py, w, 2).mass, q2, atol=1e-12)

    def test_mismatch(self, adder):
        with pytest.raises(DimensionError):
            response(SequenceDistribution.uniform(Alphabet(3), 1), point(2, 1, 0), adder, 1)
        with pytest.raises(DimensionError):
            response(point(2, 2, 0), point(2, 2, 0), adder, 1)

    @given(seeds)
    def test_matches_oracle(self, seed):
        _, w, px, py, n = random_instance(seed)
        q = response(px, py, w, n)
        np.testing.assert_allclose(q.mass, oracles.response(px.probs, py.probs, oracles.dense_kernel(w.kernel, n)),
                                   rtol=0, atol=1e-12)
        assert abs(q.total - 1) <= 1e-12


class TestMarginals:
    def test_adder_example(self, adder, uniform1):
        zy, _, _ = conditional_marginals(uniform1, uniform1, adder, 1)
        np.testing.assert_allclose(zy[0], [0.5, 0.5, 0.0])

    def test_point_mass_x(self):
        w = noisy_adder(0.3)
        zy, _, _ = conditional_marginals(point(2, 2, 2), SequenceDistribution.uniform(w.in2, 2), w, 2)
        np.testing.assert_allclose(zy, w.kernel_n(2)[2], atol=0)

    @given(seeds)
    def test_consistency_and_rows(self, seed):
        _, w, px, py, n = random_instance(seed)
        zy, zx, q = conditional_marginals(px, py, w, n)
        np.testing.assert_allclose(py.probs @ zy, q.mass, atol=1e-12)
        np.testing.assert_allclose(px.probs @ zx, q.mass, atol=1e-12)
        np.testing.assert_allclose(zy.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(zx.sum(axis=1), 1.0, atol=1e-12)
        ozy, ozx, _ = oracles.marginals(px.probs, py.probs, oracles.dense_kernel(w.kernel, n))
        np.testing.assert_allclose(zy, ozy, atol=1e-12)
        np.testing.assert_allclose(zx, ozx, atol=1e-12)


class TestPartialResponse:
    def test_full_and_empty(self, adder, uniform1):
        shape = (2, 2, 3)
        full = partial_response(uniform1, uniform1, adder, TripleSet.full(1, shape), 1)
        empty = partial_response(uniform1, uniform1, adder, TripleSet.empty(1, shape), 1)
        np.testing.assert_array_equal(full.mass, response(uniform1, uniform1, adder, 1).mass)
        assert empty.total == 0

    @given(seeds)
    def test_decomposition(self, seed):
        rng, w, px, py, n = random_instance(seed)
        shape = w.sizes(n)
        s = TripleSet(n, shape, rng.random(int(np.prod(shape))) < 0.5)
        a = partial_response(px, py, w, s, n)
        b = partial_response(px, py, w, s.complement(), n)
        np.testing.assert_allclose(a.mass + b.mass, response(px, py, w, n).mass, rtol=0, atol=1e-12)
        assert a.total <= 1 + 1e-12

    def test_predicate_cardinality(self):
        s = TripleSet.from_predicate(1, (2, 2, 3), lambda x, y, z: z == x + y)
        assert s.cardinality == 4
        assert s.contains(1, 1, 2) and not s.contains(1, 1, 1)


prob_vectors = st.integers(1, 6).flatmap(
    lambda k: st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k).map(lambda v: np.array(v) / sum(v)))


class TestVariationalDistance:
    def measure(self, v):
        return ResponseMeasure(Alphabet(len(v)), 1, v)

    def test_examples(self):
        a, b = self.measure([0.25, 0.5, 0.25]), self.measure([0.5, 0.5, 0.0])
        assert variational_distance(a, b) == pytest.approx(0.5)
        assert variational_distance(self.measure([1, 0]), self.measure([0, 1])) == 2
        assert variational_distance(a, a) == 0

    @given(st.integers(1, 5).flatmap(lambda k: st.tuples(*[
        st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k) for _ in range(3)])))
    def test_metric(self, vecs):
        p, q, r = (self.measure(np.array(v) / sum(v)) for v in vecs)
        d = variational_distance
        assert d(p, q) >= 0
        assert d(p, q) == pytest.approx(d(q, p), abs=1e-15)
        assert d(p, r) <= d(p, q) + d(q, r) + 1e-12
        assert d(p, q) <= 2 + 1e-12
        assert d(p, p) == 0

    def test_dimension_check(self):
        with pytest.raises(DimensionError):
            variational_distance(self.measure([1.0]), self.measure([0.5, 0.5]))


def test_random_kernel_rows():
    rng = np.random.default_rng(1)
    k = random_kernel(rng, 3, 2, 4, zero_prob=0.6)
    np.testing.assert_allclose(k.sum(axis=2), 1.0, atol=1e-12)
    assert math.isclose(float(np.min(k)), 0.0)
