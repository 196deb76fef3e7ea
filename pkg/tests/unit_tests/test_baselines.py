"""
Unit tests for ocms.baselines.

Coverage areas
--------------
- Walsh-Hadamard helpers
- Hadamard encoding: exact moments by enumeration and the CMS+RR equivalence
- Recursive Hadamard response: parameter choice and exact unbiasedness
- OLH parameters and the recursive range formula
- CMS+HE: exact moments by enumeration and its limit towards HE
"""

import itertools
import math

import numpy as np
import pytest

from ocms.baselines import (
    CmsHeReports,
    HadamardIndex,
    HadamardReports,
    RhrParams,
    cms_he_encode,
    cms_he_encode_batch,
    cms_he_estimate,
    cms_he_estimate_batch,
    cms_he_variance,
    hadamard_entry,
    hadamard_entry_batch,
    hadamard_order,
    he_encode,
    he_encode_batch,
    he_estimate,
    he_estimate_batch,
    he_variance,
    olh_params,
    recursive_equivalent_m,
    rhr_encode,
    rhr_encode_batch,
    rhr_estimate,
    rhr_estimate_batch,
)
from ocms.cms import EstimatorMode, predict_variance
from ocms.exceptions import ConfigurationError, DomainError
from ocms.field import FieldSpec
from ocms.hashing import HashFn, api_stats


def _flip_probability(epsilon: float) -> float:
    return 1.0 / (math.exp(epsilon) + 1.0)


# ---------------------------------------------------------------------------
# Hadamard helpers
# ---------------------------------------------------------------------------


class TestHadamard:
    @pytest.mark.parametrize(("size", "order"), [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (1025, 11)])
    def test_order(self, size, order):
        assert hadamard_order(size) == order

    def test_entry_reference(self):
        assert hadamard_entry(3, 5) == -1
        assert hadamard_entry(0, 7) == 1

    def test_rows_are_orthogonal(self):
        size = 16
        matrix = np.array([[hadamard_entry(r, c) for c in range(size)] for r in range(size)])
        assert np.array_equal(matrix @ matrix.T, size * np.eye(size, dtype=np.int64))

    def test_batch_agrees_with_scalar(self):
        rows, cols = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
        batch = hadamard_entry_batch(rows, cols)
        assert all(batch[r, c] == hadamard_entry(r, c) for r in range(32) for c in range(32))

    def test_index(self):
        assert HadamardIndex(L=3, row=3, col=5).entry == -1
        with pytest.raises(DomainError):
            HadamardIndex(L=2, row=4, col=0)

    def test_negative_entry_raises(self):
        with pytest.raises(DomainError):
            hadamard_entry(-1, 0)


# ---------------------------------------------------------------------------
# Hadamard encoding
# ---------------------------------------------------------------------------


class TestHadamardEncoding:
    @pytest.mark.parametrize(("true_value", "query"), [(0, 0), (0, 1), (4, 2), (5, 5)])
    @pytest.mark.parametrize("epsilon", [0.5, 2.0])
    def test_exact_moments_match_m2_sketch(self, true_value, query, epsilon):
        d = 6
        order = hadamard_order(d + 1)
        flip = _flip_probability(epsilon)
        mean = second = 0.0
        for j, flipped in itertools.product(range(1 << order), (False, True)):
            sign = hadamard_entry(true_value + 1, j)
            z = -sign if flipped else sign
            weight = (flip if flipped else 1 - flip) / (1 << order)
            value = he_estimate(query, HadamardReports(j=[j], z=[z]), d, epsilon)
            mean += weight * value
            second += weight * value * value
        f = 1.0 if true_value == query else 0.0
        assert mean == pytest.approx(f, abs=1e-12)
        assert second - mean * mean == pytest.approx(predict_variance(f, epsilon, 2, 1), rel=1e-9)
        assert he_variance(f, epsilon, 1) == pytest.approx(second - mean * mean, rel=1e-9)

    def test_flip_rate(self, rng):
        epsilon = 1.0
        reports = he_encode_batch(np.full(50_000, 3), 10, epsilon, rng)
        truth = hadamard_entry_batch(4, reports.j)
        rate = float(np.mean(reports.z != truth))
        p = _flip_probability(epsilon)
        assert abs(rate - p) < 4 * math.sqrt(p * (1 - p) / 50_000)

    def test_statistical_estimate(self, rng):
        epsilon, n = 3.0, 40_000
        values = rng.choice(4, size=n, p=[0.5, 0.3, 0.2, 0.0])
        estimates = he_estimate_batch(range(4), he_encode_batch(values, 4, epsilon, rng), 4, epsilon)
        sigma = math.sqrt(he_variance(0.0, epsilon, n))
        assert np.all(np.abs(estimates - [0.5, 0.3, 0.2, 0.0]) < 5 * sigma)

    def test_single_client(self, rng):
        j, z = he_encode(2, 5, 1.0, rng)
        assert 0 <= j < 8
        assert z in (-1, 1)

    def test_value_outside_dictionary_raises(self, rng):
        with pytest.raises(DomainError):
            he_encode(5, 5, 1.0, rng)

    def test_no_reports_raises(self):
        with pytest.raises(DomainError):
            he_estimate(0, HadamardReports(j=[], z=[]), 4, 1.0)


# ---------------------------------------------------------------------------
# Recursive Hadamard response
# ---------------------------------------------------------------------------


class TestRhrParams:
    @pytest.mark.parametrize(("epsilon", "b"), [(0.4, 1), (1.0, 1), (2.0, 2), (2.5, 3), (5.0, 5)])
    def test_default_block_bits(self, epsilon, b):
        assert RhrParams.create(epsilon, 100).b == b

    def test_derived_sizes(self):
        params = RhrParams.create(2.0, 6)
        assert params.block == 2
        assert params.alphabet == 4
        assert params.order == 3
        assert params.mechanism.m == 4

    def test_invalid_bits_raise(self):
        with pytest.raises(ConfigurationError):
            RhrParams(epsilon=1.0, d=10, b=0)


class TestRhr:
    @pytest.mark.parametrize(("epsilon", "b"), [(2.0, None), (1.0, 3)])
    def test_exact_unbiasedness(self, epsilon, b):
        params = RhrParams.create(epsilon, 6, b)
        mechanism = params.mechanism
        keep = mechanism.keep_probability
        other = (1 - keep) / (params.alphabet - 1)
        columns = 1 << params.order
        for true_value, query in itertools.product(range(6), repeat=2):
            quotient, residue = divmod(true_value, params.block)
            mean = 0.0
            for j in range(columns):
                sign_bit = 1 if hadamard_entry(quotient + 1, j) < 0 else 0
                symbol = sign_bit * params.block + residue
                for z in range(params.alphabet):
                    weight = (keep if z == symbol else other) / columns
                    mean += weight * rhr_estimate(query, HadamardReports(j=[j], z=[z]), params)
            assert mean == pytest.approx(1.0 if true_value == query else 0.0, abs=1e-12)

    def test_statistical_estimate(self, rng):
        params = RhrParams.create(3.0, 64)
        n = 40_000
        values = rng.choice([0, 9, 33], size=n, p=[0.6, 0.3, 0.1])
        estimates = rhr_estimate_batch([0, 9, 33, 50], rhr_encode_batch(values, params, rng), params)
        assert estimates == pytest.approx([0.6, 0.3, 0.1, 0.0], abs=0.05)

    def test_single_client(self, rng):
        params = RhrParams.create(2.0, 10)
        j, z = rhr_encode(7, params, rng)
        assert 0 <= j < 1 << params.order
        assert 0 <= z < params.alphabet

    def test_query_outside_dictionary_raises(self, rng):
        params = RhrParams.create(2.0, 10)
        with pytest.raises(DomainError):
            rhr_estimate_batch([10], rhr_encode_batch([1], params, rng), params)


# ---------------------------------------------------------------------------
# OLH and the recursive range
# ---------------------------------------------------------------------------


class TestOlh:
    @pytest.mark.parametrize(("epsilon", "m"), [(1.0, 4), (2.0, 8), (0.1, 2)])
    def test_range(self, epsilon, m):
        params = olh_params(epsilon, 1000)
        assert params.m == m
        assert params.mode is EstimatorMode.FIXED

    def test_clip_forwarded(self):
        assert olh_params(1.0, 10, clip=True).clip


class TestRecursiveRange:
    def test_reference(self):
        assert recursive_equivalent_m(1024, 2) == pytest.approx(2048 / 1025)

    def test_symmetric(self):
        assert recursive_equivalent_m(3, 7) == recursive_equivalent_m(7, 3)

    def test_degenerate_range_raises(self):
        with pytest.raises(DomainError):
            recursive_equivalent_m(1, 4)


# ---------------------------------------------------------------------------
# CMS+HE
# ---------------------------------------------------------------------------


class TestCmsHe:
    @pytest.mark.parametrize(("field", "m1"), [(FieldSpec.prime(5), 2), (FieldSpec.prime(7), 3)])
    @pytest.mark.parametrize(("true_value", "query"), [(1, 1), (1, 4), (0, 3)])
    def test_exact_moments(self, field, m1, true_value, query):
        epsilon = 1.5
        order = hadamard_order(m1 + 1)
        flip = _flip_probability(epsilon)
        size = field.size
        mean = second = 0.0
        for a0, a1 in itertools.product(range(size), repeat=2):
            bucket = HashFn(a0=a0, a1=a1, field=field, m=m1)(true_value)
            for j, flipped in itertools.product(range(1 << order), (False, True)):
                sign = hadamard_entry(bucket + 1, j)
                stage_two = HadamardReports(j=[j], z=[-sign if flipped else sign])
                reports = CmsHeReports(
                    a0=np.array([a0], dtype=np.uint64), a1=np.array([a1], dtype=np.uint64), stage_two=stage_two
                )
                weight = (flip if flipped else 1 - flip) / ((1 << order) * size * size)
                value = cms_he_estimate(query, reports, m1, field, epsilon)
                mean += weight * value
                second += weight * value * value
        f = 1.0 if true_value == query else 0.0
        assert mean == pytest.approx(f, abs=1e-12)
        m1_prime = api_stats(field, m1).m_prime
        assert second - mean * mean == pytest.approx(cms_he_variance(f, epsilon, m1_prime, 1), rel=1e-9)

    @pytest.mark.parametrize("f", [0.0, 0.3, 1.0])
    def test_wide_first_stage_approaches_he(self, f):
        m1_prime = api_stats(FieldSpec.prime(), 1024).m_prime
        assert cms_he_variance(f, 2.0, m1_prime, 1000) == pytest.approx(he_variance(f, 2.0, 1000), rel=5e-3)

    def test_statistical_estimate(self, rng):
        field, epsilon, n = FieldSpec.prime(), 3.0, 40_000
        values = rng.choice([2, 7], size=n, p=[0.7, 0.3])
        reports = cms_he_encode_batch(values, 1024, field, epsilon, rng)
        estimates = cms_he_estimate_batch([2, 7, 11], reports, 1024, field, epsilon)
        sigma = math.sqrt(cms_he_variance(0.0, epsilon, api_stats(field, 1024).m_prime, n))
        assert np.all(np.abs(estimates - [0.7, 0.3, 0.0]) < 5 * sigma)

    def test_single_client(self, rng):
        reports = cms_he_encode(5, 16, FieldSpec.prime(), 1.0, rng)
        assert len(reports) == 1
        assert 0 <= int(reports.stage_two.j[0]) < 32

    def test_invalid_variance_arguments_raise(self):
        with pytest.raises(DomainError):
            cms_he_variance(0.5, 1.0, 1.0, 10)
