"""
Unit tests for ocms.hashing.

Coverage areas
--------------
- Sampling and evaluating members of the affine family
- Exact collision statistics and the effective range
- Bit accounting for the family and for fixed assignments
- Adversarial datasets against a fixed assignment
- Monte-Carlo collision helpers
"""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from ocms.exceptions import ConfigurationError, DomainError
from ocms.field import FieldSpec
from ocms.hashing import (
    HashFn,
    adversarial_dataset,
    api_stats,
    assignment_bits,
    collision_rate,
    family_bits,
    hash_eval,
    hash_eval_batch,
    independent_family_collisions,
    sample_coefficients,
    sample_hash,
)


# ---------------------------------------------------------------------------
# Sampling and evaluation
# ---------------------------------------------------------------------------


class TestSampling:
    def test_deterministic_for_a_seed(self):
        spec = FieldSpec.prime(5)
        first = sample_hash(spec, 3, np.random.default_rng(11))
        second = sample_hash(spec, 3, np.random.default_rng(11))
        assert (first.a0, first.a1) == (second.a0, second.a1)

    def test_coefficients_are_uniform(self, rng, tiny_prime_field):
        a0, a1 = sample_coefficients(tiny_prime_field, 100_000, rng)
        assert a0.dtype == np.uint64
        counts = np.bincount(a0.astype(np.int64), minlength=7)
        sigma = math.sqrt(100_000 * (1 / 7) * (6 / 7))
        assert counts.size == 7
        assert np.all(np.abs(counts - 100_000 / 7) < 4 * sigma)
        assert int(a1.max()) <= 6

    def test_range_larger_than_field_raises(self, rng):
        with pytest.raises(ConfigurationError):
            sample_hash(FieldSpec.binary(3), 9, rng)

    def test_range_below_two_raises(self, rng, tiny_prime_field):
        with pytest.raises(ConfigurationError):
            sample_hash(tiny_prime_field, 1, rng)


class TestHashEval:
    def test_hand_evaluation_gf5(self):
        h = HashFn(a0=2, a1=3, field=FieldSpec.prime(5), m=5)
        assert hash_eval(h, 4) == 4

    def test_hand_evaluation_gf7(self, tiny_prime_field):
        h = HashFn(a0=6, a1=1, field=tiny_prime_field, m=3)
        assert h(5) == 1

    def test_constant_when_multiplier_is_zero(self, tiny_prime_field):
        h = HashFn(a0=5, a1=0, field=tiny_prime_field, m=3)
        assert {h(x) for x in range(7)} == {2}

    def test_input_outside_field_raises(self, tiny_prime_field):
        h = HashFn(a0=1, a1=1, field=tiny_prime_field, m=3)
        with pytest.raises(DomainError):
            hash_eval(h, 7)

    def test_coefficients_outside_field_raise(self, tiny_prime_field):
        with pytest.raises(DomainError):
            HashFn(a0=7, a1=1, field=tiny_prime_field, m=3)

    @pytest.mark.parametrize("spec", [FieldSpec.prime(), FieldSpec.prime(7), FieldSpec.binary(10)])
    def test_batch_agrees_with_scalar(self, spec, rng):
        m = 5
        a0, a1 = sample_coefficients(spec, 200, rng)
        xs = rng.integers(0, min(spec.size, 10**6), size=200)
        buckets = hash_eval_batch(spec, m, a0, a1, xs)
        assert buckets.dtype == np.int64
        for i in range(200):
            h = HashFn(a0=int(a0[i]), a1=int(a1[i]), field=spec, m=m)
            assert buckets[i] == hash_eval(h, int(xs[i]))

    def test_batch_broadcasts_values_against_reports(self, rng, tiny_prime_field):
        a0, a1 = sample_coefficients(tiny_prime_field, 4, rng)
        buckets = hash_eval_batch(tiny_prime_field, 3, a0, a1, np.arange(5)[:, None])
        assert buckets.shape == (5, 4)

    def test_batch_input_outside_field_raises(self, tiny_prime_field):
        with pytest.raises(DomainError):
            hash_eval_batch(tiny_prime_field, 3, np.uint64(1), np.uint64(1), [0, 7])


# ---------------------------------------------------------------------------
# Collision statistics
# ---------------------------------------------------------------------------


class TestApiStats:
    def test_size_seven_range_three(self, tiny_prime_field):
        stats = api_stats(tiny_prime_field, 3)
        assert (stats.q, stats.r) == (2, 1)
        assert stats.collision == Fraction(17, 49)
        assert stats.m_prime == pytest.approx(49 / 17, rel=1e-15)

    def test_exhaustive_enumeration_matches(self, tiny_prime_field):
        for x1, x2 in [(0, 1), (2, 5), (6, 3)]:
            collisions = sum(
                HashFn(a0=a0, a1=a1, field=tiny_prime_field, m=3)(x1)
                == HashFn(a0=a0, a1=a1, field=tiny_prime_field, m=3)(x2)
                for a0, a1 in itertools.product(range(7), repeat=2)
            )
            assert collisions == 17

    def test_exact_divisibility(self):
        stats = api_stats(FieldSpec.binary(3), 4)
        assert stats.r == 0
        assert stats.collision == Fraction(1, 4)
        assert stats.m_prime == 4.0

    def test_quality_threshold(self):
        assert api_stats(FieldSpec.prime(), 4).quality_ok(0.01)
        assert not api_stats(FieldSpec.prime(7), 3).quality_ok(0.01)

    def test_sampled_collision_rate_on_large_field(self, rng):
        spec = FieldSpec.prime()
        expected = api_stats(spec, 4).c_bar
        draws = 1_000_000
        rate = collision_rate(spec, 4, draws, rng, x1=3, x2=1000)
        assert abs(rate - expected) < 4 * math.sqrt(expected * (1 - expected) / draws)


# ---------------------------------------------------------------------------
# Bit accounting
# ---------------------------------------------------------------------------


class TestBits:
    @pytest.mark.parametrize(("d", "m", "bits"), [(10**6, 40, 40), (1, 2, 8), (2**20 - 1, 2, 40)])
    def test_family_bits(self, d, m, bits):
        assert family_bits(d, m) == bits

    @pytest.mark.parametrize(("n", "k", "bits"), [(1000, 256, 20), (1, 1, 2), (2**16, 2**20, 42)])
    def test_assignment_bits(self, n, k, bits):
        assert assignment_bits(n, k) == bits

    def test_invalid_arguments_raise(self):
        with pytest.raises(DomainError):
            family_bits(0, 4)
        with pytest.raises(DomainError):
            assignment_bits(0, 1)


# ---------------------------------------------------------------------------
# Fixed assignments
# ---------------------------------------------------------------------------


class TestAdversarialDataset:
    def test_target_never_appears(self, rng):
        spec = FieldSpec.prime(17)
        assignments = [sample_hash(spec, 2, rng) for _ in range(200)]
        dataset = adversarial_dataset(3, assignments, 16)
        assert len(dataset.values) == 200
        assert 3 not in dataset.values
        separated = sum(h(value) != h(3) for h, value in zip(assignments, dataset.values, strict=True))
        assert separated == dataset.failures

    def test_injective_hash_counts_a_failure(self):
        h = HashFn(a0=0, a1=1, field=FieldSpec.prime(5), m=2)
        dataset = adversarial_dataset(0, [h], 2)
        assert dataset.failures == 1
        assert dataset.values == (1,)

    def test_invalid_target_raises(self, tiny_prime_field):
        h = HashFn(a0=0, a1=1, field=tiny_prime_field, m=2)
        with pytest.raises(DomainError):
            adversarial_dataset(5, [h], 4)


class TestIndependentFamily:
    def test_matrix_shape_and_diagonal(self, rng):
        c = independent_family_collisions(4, 2, 16, rng)
        assert c.shape == (4, 4)
        assert np.all(np.diag(c) == 1.0)
        assert np.allclose(c, c.T)

    def test_entries_are_multiples_of_one_over_k(self, rng):
        c = independent_family_collisions(5, 3, 8, rng)
        assert np.allclose(c * 8, np.round(c * 8))
