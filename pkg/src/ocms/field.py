"""
Finite-field arithmetic for the affine hashing family.

Two field kinds are supported: prime fields (by default the field of order
2^64 - 59) and binary extension fields GF(2^l) for 3 <= l <= 64 with one
fixed irreducible reduction polynomial per degree.
Scalar operations run on Python integers and are the exact reference for the
vectorised uint64 operations used by the batch encoders.
"""

import logging
from dataclasses import dataclass
from enum import Enum, unique
from functools import lru_cache

import numpy as np

import ocms._constants as consts
from .exceptions import DomainError, SingularityError

logger = logging.getLogger(__name__)

# A field element is a plain integer in [0, FieldSpec.size)
FieldElement = int

_ONE = np.uint64(1)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_PRIME = np.uint64(consts.PRIME)
_PRIME_FOLD = np.uint64(consts.PRIME_FOLD)


@unique
class FieldKind(Enum):
    """Kinds of hashing field."""

    PRIME = "prime"
    BINARY = "binary"


@unique
class FieldOp(Enum):
    """Binary field operations understood by :func:`ff_arith`."""

    ADD = "add"
    MUL = "mul"


@lru_cache(maxsize=64)
def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin primality test for integers below 2^64.

    Args:
        n (int): Candidate.

    Returns:
        True when ``n`` is prime.
    """
    if n < 2:
        return False
    for p in consts.MILLER_RABIN_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in consts.MILLER_RABIN_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _poly_mod(value: int, poly: int) -> int:
    """Remainder of ``value`` divided by ``poly`` in GF(2)[x]."""
    degree = poly.bit_length() - 1
    while value.bit_length() > degree:
        value ^= poly << (value.bit_length() - 1 - degree)
    return value


def _poly_mulmod(a: int, b: int, poly: int) -> int:
    product = 0
    while b:
        if b & 1:
            product ^= a
        a <<= 1
        b >>= 1
    return _poly_mod(product, poly)


def _poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, _poly_mod(a, b)
    return a


@lru_cache(maxsize=128)
def is_irreducible(poly: int) -> bool:
    """Ben-Or irreducibility test for a polynomial over GF(2).

    Args:
        poly (int): Polynomial as a bitmask, bit k holding the coefficient of x^k.

    Returns:
        True when ``poly`` has no factor of degree between 1 and half its degree.
    """
    degree = poly.bit_length() - 1
    if degree < 1:
        return False
    power = 0b10  # x
    for _ in range(degree // 2):
        power = _poly_mulmod(power, power, poly)
        if _poly_gcd(poly, power ^ 0b10) != 1:
            return False
    return True


def reduction_polynomial(degree: int) -> int:
    """Return the tabulated irreducible polynomial of GF(2^degree) as a bitmask."""
    if degree not in consts.IRREDUCIBLE_TERMS:
        logger.error("No reduction polynomial for degree %d", degree)
        raise DomainError(
            f"binary field degree must lie in [{consts.MIN_BINARY_DEGREE}, {consts.MAX_BINARY_DEGREE}], got {degree}"
        )
    poly = (1 << degree) | 1
    for k in consts.IRREDUCIBLE_TERMS[degree]:
        poly |= 1 << k
    return poly


@dataclass(frozen=True, kw_only=True)
class FieldSpec:
    """
    Description of a hashing field.

    Attributes:
        kind (FieldKind): Prime field or binary extension field.
        modulus (int): The prime p for prime fields; the full reduction polynomial
            bitmask (including the x^degree term) for binary fields.
        degree (int): Extension degree l; always 1 for prime fields.
    """

    kind: FieldKind
    modulus: int
    degree: int = 1

    def __post_init__(self):
        """Validate the modulus against the field kind."""
        match self.kind:
            case FieldKind.PRIME:
                if self.degree != 1:
                    logger.error("Prime field given degree %d", self.degree)
                    raise DomainError("prime fields have degree 1")
                if not 2 <= self.modulus <= consts.PRIME or not is_prime(self.modulus):
                    logger.error("Rejected prime field modulus %d", self.modulus)
                    raise DomainError(f"modulus must be a prime in [2, 2^64 - 59], got {self.modulus}")
            case FieldKind.BINARY:
                if not consts.MIN_BINARY_DEGREE <= self.degree <= consts.MAX_BINARY_DEGREE:
                    logger.error("Rejected binary field degree %d", self.degree)
                    raise DomainError(
                        f"binary field degree must lie in [{consts.MIN_BINARY_DEGREE}, {consts.MAX_BINARY_DEGREE}]"
                    )
                if self.modulus.bit_length() != self.degree + 1 or not is_irreducible(self.modulus):
                    logger.error("Reduction polynomial %#x is not irreducible of degree %d", self.modulus, self.degree)
                    raise DomainError("reduction polynomial must be irreducible of the field degree")
            case _:
                raise TypeError(f"unsupported field kind {self.kind!r}")

    @classmethod
    def prime(cls, modulus: int = consts.PRIME) -> "FieldSpec":
        """Prime field of order ``modulus`` (default 2^64 - 59)."""
        return cls(kind=FieldKind.PRIME, modulus=modulus)

    @classmethod
    def binary(cls, degree: int) -> "FieldSpec":
        """GF(2^degree) with the tabulated reduction polynomial."""
        return cls(kind=FieldKind.BINARY, modulus=reduction_polynomial(degree), degree=degree)

    @property
    def size(self) -> int:
        """Number of elements in the field."""
        if self.kind is FieldKind.PRIME:
            return self.modulus
        return 1 << self.degree

    def contains(self, value: int) -> bool:
        """Return True when ``value`` is a valid element of this field."""
        return 0 <= value < self.size


def _check_element(value: int, spec: FieldSpec) -> None:
    if not spec.contains(value):
        logger.error("Value %d is outside a field of size %d", value, spec.size)
        raise DomainError(f"field element {value} outside [0, {spec.size})")


def ff_arith(op: FieldOp | str, a: FieldElement, b: FieldElement, spec: FieldSpec) -> FieldElement:
    """
    Add or multiply two field elements.

    Args:
        op (FieldOp | str): ``"add"`` or ``"mul"``.
        a (FieldElement): Left operand.
        b (FieldElement): Right operand.
        spec (FieldSpec): Field to compute in.

    Returns:
        The result as a field element.

    Raises:
        DomainError: If an operand is not an element of the field.
    """
    op = FieldOp(op)
    _check_element(a, spec)
    _check_element(b, spec)
    if spec.kind is FieldKind.PRIME:
        if op is FieldOp.ADD:
            return (a + b) % spec.modulus
        return (a * b) % spec.modulus
    if op is FieldOp.ADD:
        return a ^ b
    return _poly_mulmod(a, b, spec.modulus)


def ff_add(a: FieldElement, b: FieldElement, spec: FieldSpec) -> FieldElement:
    """Add two field elements."""
    return ff_arith(FieldOp.ADD, a, b, spec)


def ff_mul(a: FieldElement, b: FieldElement, spec: FieldSpec) -> FieldElement:
    """Multiply two field elements."""
    return ff_arith(FieldOp.MUL, a, b, spec)


def ff_inverse(a: FieldElement, spec: FieldSpec) -> FieldElement:
    """
    Multiplicative inverse of a non-zero field element.

    Raises:
        SingularityError: If ``a`` is zero.
    """
    _check_element(a, spec)
    if a == 0:
        logger.error("Attempted to invert zero")
        raise SingularityError("zero has no multiplicative inverse")
    if spec.kind is FieldKind.PRIME:
        return pow(a, spec.modulus - 2, spec.modulus)
    # a^(2^l - 2) by square-and-multiply
    result, base, exponent = 1, a, spec.size - 2
    while exponent:
        if exponent & 1:
            result = _poly_mulmod(result, base, spec.modulus)
        base = _poly_mulmod(base, base, spec.modulus)
        exponent >>= 1
    return result


def finite_field_size(d: int, m: int) -> FieldSpec:
    """
    Pick the hashing field for a dictionary of ``d`` values and a range of ``m`` buckets.

    The field must hold at least max(d + 1, 5m) elements. The 2^64 - 59 prime field
    is used whenever it is large enough, otherwise the smallest binary field that is.

    Args:
        d (int): Dictionary size, at least 1.
        m (int): Hash range, at least 2.

    Returns:
        The selected field.

    Raises:
        DomainError: If no supported field is large enough.
    """
    if d < 1 or m < 2:
        logger.error("finite_field_size called with d=%d m=%d", d, m)
        raise DomainError("finite_field_size requires d >= 1 and m >= 2")
    needed = max(d + 1, consts.FIELD_OVERSAMPLING * m)
    if needed <= consts.PRIME:
        return FieldSpec.prime()
    degree = (needed - 1).bit_length()
    if degree > consts.MAX_BINARY_DEGREE:
        logger.error("No supported field holds %d elements", needed)
        raise DomainError(f"a field with {needed} elements exceeds GF(2^{consts.MAX_BINARY_DEGREE})")
    logger.debug("Using GF(2^%d) for d=%d m=%d", degree, d, m)
    return FieldSpec.binary(degree)


# ---------------------------------------------------------------------------
# Vectorised arithmetic on uint64 arrays
# ---------------------------------------------------------------------------


def _as_u64(values) -> np.ndarray:
    return np.atleast_1d(np.asarray(values, dtype=np.uint64))


def _mul_wide(a: np.ndarray, b) -> tuple[np.ndarray, np.ndarray]:
    """Full 128-bit products of uint64 operands as (high, low) words."""
    a_lo, a_hi = a & _MASK32, a >> _SHIFT32
    b_lo, b_hi = b & _MASK32, b >> _SHIFT32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _SHIFT32) + (lh & _MASK32) + (hl & _MASK32)
    lo = (ll & _MASK32) | (mid << _SHIFT32)
    hi = hh + (lh >> _SHIFT32) + (hl >> _SHIFT32) + (mid >> _SHIFT32)
    return hi, lo


def _mulmod_default_prime(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # hi * 2^64 + lo == hi * 59 + lo  (mod 2^64 - 59)
    hi, lo = _mul_wide(a, b)
    fold_hi, fold_lo = _mul_wide(hi, _PRIME_FOLD)
    s = fold_lo + lo
    top = fold_hi + (s < lo).astype(np.uint64)
    t = s + top * _PRIME_FOLD
    t = np.where(t < s, t + _PRIME_FOLD, t)
    return np.where(t >= _PRIME, t - _PRIME, t)


def _clmul_batch(a: np.ndarray, b: np.ndarray, spec: FieldSpec) -> np.ndarray:
    low_terms = np.uint64(spec.modulus ^ (1 << spec.degree))
    mask = np.uint64((1 << spec.degree) - 1)
    top_bit = np.uint64(spec.degree - 1)
    a, b = (np.array(arr, dtype=np.uint64) for arr in np.broadcast_arrays(a, b))
    result = np.zeros_like(a)
    for _ in range(spec.degree):
        result ^= np.where((b & _ONE).astype(bool), a, np.uint64(0))
        carry = (a >> top_bit) & _ONE
        a = ((a << _ONE) & mask) ^ (carry * low_terms)
        b >>= _ONE
    return result


def ff_add_batch(a, b, spec: FieldSpec) -> np.ndarray:
    """Element-wise field addition of uint64 arrays; agrees with :func:`ff_arith`."""
    a, b = _as_u64(a), _as_u64(b)
    if spec.kind is FieldKind.BINARY:
        return a ^ b
    modulus = np.uint64(spec.modulus)
    s = a + b
    # operands are below the modulus, so one subtraction suffices (wrapping covers overflow)
    return np.where((s < a) | (s >= modulus), s - modulus, s)


def ff_mul_batch(a, b, spec: FieldSpec) -> np.ndarray:
    """Element-wise field multiplication of uint64 arrays; agrees with :func:`ff_arith`."""
    a, b = _as_u64(a), _as_u64(b)
    if spec.kind is FieldKind.BINARY:
        return _clmul_batch(a, b, spec)
    if spec.modulus == consts.PRIME:
        return _mulmod_default_prime(a, b)
    if spec.modulus < 1 << 32:
        return (a * b) % np.uint64(spec.modulus)
    products = (a.astype(object) * b.astype(object)) % spec.modulus
    return np.asarray(products, dtype=np.uint64)
