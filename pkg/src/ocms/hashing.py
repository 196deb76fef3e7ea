"""
Affine hashing family over a finite field.

A member of the family is h(x) = (a0 + a1 * x) mod m, where the addition and
multiplication are field operations and the final reduction maps the field
element onto the hash range. When m does not divide the field size the family
is only approximately pairwise independent; :func:`api_stats` gives the exact
collision probability and the effective range that removes the resulting bias.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

import ocms._constants as consts
from .exceptions import ConfigurationError, DomainError
from .field import FieldSpec, ff_add, ff_add_batch, ff_mul, ff_mul_batch

logger = logging.getLogger(__name__)


def _check_range(field: FieldSpec, m: int) -> None:
    if m < 2 or m > field.size:
        logger.error("Hash range %d invalid for a field of size %d", m, field.size)
        raise ConfigurationError(f"hash range m must lie in [2, {field.size}], got {m}")


@dataclass(frozen=True, kw_only=True)
class HashFn:
    """
    One member of the affine hashing family.

    Attributes:
        a0 (int): Additive coefficient, a field element.
        a1 (int): Multiplicative coefficient, a field element.
        field (FieldSpec): Field the coefficients live in.
        m (int): Hash range.
    """

    a0: int
    a1: int
    field: FieldSpec
    m: int

    def __post_init__(self):
        """Check the coefficients and range against the field."""
        _check_range(self.field, self.m)
        if not (self.field.contains(self.a0) and self.field.contains(self.a1)):
            logger.error("Hash coefficients (%d, %d) outside field", self.a0, self.a1)
            raise DomainError("hash coefficients must be field elements")

    def __call__(self, x: int) -> int:
        """Evaluate the hash at x."""
        return hash_eval(self, x)


@dataclass(frozen=True, kw_only=True)
class ApiStats:
    """
    Collision statistics of the affine family reduced onto ``m`` buckets.

    Attributes:
        q (int): Field size divided by m, rounded down.
        r (int): Field size modulo m.
        collision (Fraction): Exact probability that two distinct inputs collide.
        c_bar (float): ``collision`` as a float.
        m_prime (float): Effective range 1 / c_bar.
    """

    q: int
    r: int
    collision: Fraction
    c_bar: float
    m_prime: float

    def quality_ok(self, tau: float) -> bool:
        """Return True when the field is large enough for a relative collision error ``tau``."""
        if tau <= 0:
            raise DomainError("tau must be positive")
        return 2 * self.q + 1 > math.sqrt(1 / tau)


def sample_coefficients(field: FieldSpec, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` independent uniform (a0, a1) pairs as uint64 arrays."""
    high = np.uint64(field.size - 1)
    a0 = rng.integers(0, high, size=size, dtype=np.uint64, endpoint=True)
    a1 = rng.integers(0, high, size=size, dtype=np.uint64, endpoint=True)
    return a0, a1


def sample_hash(field: FieldSpec, m: int, rng: np.random.Generator) -> HashFn:
    """
    Sample a hash function uniformly from the affine family.

    Args:
        field (FieldSpec): Field for the coefficients.
        m (int): Hash range.
        rng (np.random.Generator): Caller-owned random source.

    Returns:
        The sampled hash function.

    Raises:
        ConfigurationError: If ``m`` is below 2 or exceeds the field size.
    """
    _check_range(field, m)
    a0, a1 = sample_coefficients(field, 1, rng)
    return HashFn(a0=int(a0[0]), a1=int(a1[0]), field=field, m=m)


def hash_eval(h: HashFn, x: int) -> int:
    """
    Evaluate ``h`` at ``x``.

    Raises:
        DomainError: If ``x`` is not a field element.
    """
    if not h.field.contains(x):
        logger.error("Hash input %d outside a field of size %d", x, h.field.size)
        raise DomainError(f"hash input {x} outside [0, {h.field.size})")
    return ff_add(h.a0, ff_mul(h.a1, x, h.field), h.field) % h.m


def hash_eval_batch(field: FieldSpec, m: int, a0, a1, x) -> np.ndarray:
    """
    Vectorised :func:`hash_eval` over arrays of coefficients and/or inputs.

    Args:
        field (FieldSpec): Field of the coefficients.
        m (int): Hash range.
        a0: Additive coefficients (uint64 array-like).
        a1: Multiplicative coefficients, broadcastable with ``a0``.
        x: Input value(s), broadcastable with the coefficients.

    Returns:
        int64 array of buckets in [0, m).
    """
    xs = np.asarray(x)
    if xs.size and (int(xs.min()) < 0 or int(xs.max()) >= field.size):
        logger.error("Hash input outside a field of size %d", field.size)
        raise DomainError(f"hash inputs must lie in [0, {field.size})")
    values = ff_add_batch(a0, ff_mul_batch(a1, xs.astype(np.uint64), field), field)
    return (values % np.uint64(m)).astype(np.int64)


def api_stats(field: FieldSpec, m: int) -> ApiStats:
    """
    Exact collision statistics of the family on ``m`` buckets.

    For q = size // m and r = size % m the collision probability of two distinct
    inputs is ((2q + 1) r + m q^2) / (m q + r)^2, and the effective range is its
    reciprocal.
    """
    _check_range(field, m)
    q, r = divmod(field.size, m)
    collision = Fraction((2 * q + 1) * r + m * q * q, (m * q + r) ** 2)
    stats = ApiStats(q=q, r=r, collision=collision, c_bar=float(collision), m_prime=float(1 / collision))
    logger.debug("api_stats size=%d m=%d -> c_bar=%.17g m'=%.17g", field.size, m, stats.c_bar, stats.m_prime)
    return stats


def family_bits(d: int, m: int) -> int:
    """Bits needed to name one member of the family: 2 * ceil(log2(max(d + 1, 5m)))."""
    if d < 1 or m < 2:
        raise DomainError("family_bits requires d >= 1 and m >= 2")
    needed = max(d + 1, consts.FIELD_OVERSAMPLING * m)
    return 2 * (needed - 1).bit_length()


def assignment_bits(n: int, k: int) -> int:
    """Random bits sufficient to assign n clients to k hash functions pairwise independently."""
    if n < 1 or k < 1:
        raise DomainError("assignment_bits requires n >= 1 and k >= 1")
    return 2 * max(n, k).bit_length()


@dataclass(frozen=True, kw_only=True)
class AdversarialDataset:
    """
    Dataset built against a fixed hash assignment.

    Attributes:
        values (tuple[int, ...]): One value per client, never equal to the target.
        failures (int): Clients for which no colliding value exists.
    """

    values: tuple[int, ...]
    failures: int


def adversarial_dataset(target_x: int, assignments: list[HashFn], d: int) -> AdversarialDataset:
    """
    Build a dataset whose every value collides with ``target_x`` under its client's hash.

    Candidates are scanned in increasing order and the first collision is taken.
    Clients whose hash separates ``target_x`` from every other value get the
    smallest value different from ``target_x`` and are counted as failures.

    Args:
        target_x (int): Value the dataset must avoid while colliding with it.
        assignments (list[HashFn]): Fixed hash function of each client.
        d (int): Dictionary size, at least 2.

    Returns:
        The dataset and the failure count.
    """
    if d < 2 or not 0 <= target_x < d:
        logger.error("adversarial_dataset called with d=%d target=%d", d, target_x)
        raise DomainError("adversarial_dataset requires d >= 2 and target_x in [0, d)")
    candidates = np.arange(d, dtype=np.int64)
    fallback = 1 if target_x == 0 else 0
    values = []
    failures = 0
    for h in assignments:
        buckets = hash_eval_batch(h.field, h.m, np.uint64(h.a0), np.uint64(h.a1), candidates)
        hits = np.flatnonzero((buckets == buckets[target_x]) & (candidates != target_x))
        if hits.size:
            values.append(int(hits[0]))
        else:
            values.append(fallback)
            failures += 1
    if failures:
        logger.warning("%d of %d clients have no value colliding with %d", failures, len(assignments), target_x)
    return AdversarialDataset(values=tuple(values), failures=failures)


def independent_family_collisions(d: int, m: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """
    Average collision matrix of ``k`` fully random functions [d] -> [m].

    Entry (x, x') is the fraction of the k functions mapping x and x' to the same
    bucket; the diagonal is 1. This models the independently drawn hash functions
    of the original count-mean sketch.
    """
    if d < 1 or m < 2 or k < 1:
        raise DomainError("independent_family_collisions requires d >= 1, m >= 2, k >= 1")
    tables = rng.integers(0, m, size=(k, d))
    same = tables[:, :, None] == tables[:, None, :]
    return same.mean(axis=0)


def collision_rate(field: FieldSpec, m: int, draws: int, rng: np.random.Generator, x1: int = 0, x2: int = 1) -> float:
    """Fraction of ``draws`` random family members with h(x1) == h(x2)."""
    _check_range(field, m)
    a0, a1 = sample_coefficients(field, draws, rng)
    same = hash_eval_batch(field, m, a0, a1, x1) == hash_eval_batch(field, m, a0, a1, x2)
    return float(same.mean())
