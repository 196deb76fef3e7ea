"""
Baseline frequency oracles expressed as count-mean sketches.

* Hadamard encoding (HE): CMS+RR with m = 2 where the hash of x is the sign of
  Walsh-Hadamard entry H[x + 1, j] for a uniformly drawn column j.
* Recursive Hadamard response (RHR): the value is split into a quotient coded
  by a Hadamard sign and a residue; the (sign, residue) symbol is perturbed
  with RR over 2^b symbols.
* Optimized local hashing (OLH): CMS+RR with m = round(1 + e^eps).
* CMS+HE: an affine hash onto m1 buckets followed by HE on the bucket, which
  behaves like a single CMS with range m1 m2 / (m1 + m2 - 1).
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .cms import EstimatorMode, EstimatorParams, predict_variance, round_half_away
from .exceptions import ConfigurationError, DomainError
from .field import FieldSpec
from .hashing import api_stats, hash_eval_batch, sample_coefficients
from .ldp import MechanismKind, MechanismSpec, rr_perturb_batch

logger = logging.getLogger(__name__)


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0 or not math.isfinite(epsilon):
        logger.error("Invalid privacy factor %s", epsilon)
        raise ConfigurationError(f"epsilon must be a positive finite number, got {epsilon}")


def _he_scale(epsilon: float) -> float:
    return (math.exp(epsilon) + 1) / math.expm1(epsilon)


# ---------------------------------------------------------------------------
# Walsh-Hadamard helpers
# ---------------------------------------------------------------------------


def hadamard_order(size: int) -> int:
    """Smallest L with 2^L >= size."""
    if size < 1:
        raise DomainError("size must be positive")
    return (size - 1).bit_length()


def hadamard_entry(row: int, col: int) -> int:
    """Entry of the Sylvester Hadamard matrix: (-1)^popcount(row & col)."""
    if row < 0 or col < 0:
        raise DomainError("Hadamard indices must be non-negative")
    return -1 if (row & col).bit_count() & 1 else 1


def hadamard_entry_batch(row, col) -> np.ndarray:
    """Vectorised :func:`hadamard_entry`; returns an int64 array of +1/-1."""
    parity = np.bitwise_count(np.asarray(row, dtype=np.int64) & np.asarray(col, dtype=np.int64)) & 1
    return 1 - 2 * parity.astype(np.int64)


@dataclass(frozen=True, kw_only=True)
class HadamardIndex:
    """
    Position in a 2^L x 2^L Hadamard matrix.

    Attributes:
        L (int): Matrix order exponent.
        row (int): Row index.
        col (int): Column index.
    """

    L: int
    row: int
    col: int

    def __post_init__(self):
        """Check the indices fit the matrix."""
        if self.L < 0 or not (0 <= self.row < 1 << self.L and 0 <= self.col < 1 << self.L):
            raise DomainError(f"index ({self.row}, {self.col}) outside a 2^{self.L} Hadamard matrix")

    @property
    def entry(self) -> int:
        """The +1 or -1 entry of this cell."""
        return hadamard_entry(self.row, self.col)


@dataclass(frozen=True, kw_only=True, eq=False)
class HadamardReports:
    """
    Reports of the Hadamard-based baselines.

    Attributes:
        j (np.ndarray): Sampled column per client (int64).
        z (np.ndarray): Perturbed sign (HE, +1/-1) or symbol (RHR) per client (int64).
    """

    j: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        """Normalise dtypes."""
        object.__setattr__(self, "j", np.asarray(self.j, dtype=np.int64).ravel())
        object.__setattr__(self, "z", np.asarray(self.z, dtype=np.int64).ravel())
        if self.j.shape != self.z.shape:
            raise DomainError("report columns must have equal length")

    def __len__(self) -> int:
        """Number of reports."""
        return int(self.z.size)


def _require_reports(reports) -> int:
    n = len(reports)
    if n == 0:
        logger.error("Estimate requested without reports")
        raise DomainError("at least one report is required")
    return n


# ---------------------------------------------------------------------------
# Hadamard encoding
# ---------------------------------------------------------------------------


def he_encode_batch(values, d: int, epsilon: float, rng: np.random.Generator) -> HadamardReports:
    """
    Hadamard-encode many clients.

    Each client draws a column j from [0, 2^L), 2^L >= d + 1, takes the sign
    H[x + 1, j] and flips it with probability 1 / (e^eps + 1).
    """
    _check_epsilon(epsilon)
    values = np.asarray(values, dtype=np.int64).ravel()
    if values.size and (int(values.min()) < 0 or int(values.max()) >= d):
        raise DomainError(f"values must lie in [0, {d})")
    order = hadamard_order(d + 1)
    j = rng.integers(0, 1 << order, size=values.size, dtype=np.int64)
    signs = hadamard_entry_batch(values + 1, j)
    flip = rng.random(values.size) < 1.0 / (math.exp(epsilon) + 1.0)
    return HadamardReports(j=j, z=np.where(flip, -signs, signs))


def he_encode(x: int, d: int, epsilon: float, rng: np.random.Generator) -> tuple[int, int]:
    """Hadamard-encode one value; returns ``(j, z)`` with z in {+1, -1}."""
    reports = he_encode_batch([x], d, epsilon, rng)
    return int(reports.j[0]), int(reports.z[0])


def he_estimate_batch(x_set: Sequence[int], reports: HadamardReports, d: int, epsilon: float) -> np.ndarray:
    """Vectorised :func:`he_estimate` over several queried values."""
    _check_epsilon(epsilon)
    n = _require_reports(reports)
    xs = np.asarray(x_set, dtype=np.int64).ravel()
    if xs.size and (int(xs.min()) < 0 or int(xs.max()) >= d):
        raise DomainError(f"queried values must lie in [0, {d})")
    agreement = np.array([int(np.sum(reports.z * hadamard_entry_batch(x + 1, reports.j))) for x in xs])
    return _he_scale(epsilon) * agreement / n


def he_estimate(x: int, reports: HadamardReports, d: int, epsilon: float) -> float:
    """
    HE frequency estimate: (e^eps + 1)/(e^eps - 1) * mean(z_i * H[j_i, x + 1]).

    Raises:
        DomainError: If there are no reports.
    """
    return float(he_estimate_batch([x], reports, d, epsilon)[0])


def he_variance(f: float, epsilon: float, n: int) -> float:
    """Exact variance of the HE estimate; identical to CMS+RR with m = 2."""
    return predict_variance(f, epsilon, 2, n)


# ---------------------------------------------------------------------------
# Recursive Hadamard response
# ---------------------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class RhrParams:
    """
    Parameters of recursive Hadamard response.

    Attributes:
        epsilon (float): Privacy factor.
        d (int): Dictionary size.
        b (int): Bits per perturbed symbol; the symbol alphabet has 2^b entries.
    """

    epsilon: float
    d: int
    b: int

    def __post_init__(self):
        """Validate the block bits."""
        _check_epsilon(self.epsilon)
        if self.b < 1 or self.d < 1:
            raise ConfigurationError("RHR requires b >= 1 and d >= 1")

    @classmethod
    def create(cls, epsilon: float, d: int, b: int | None = None) -> "RhrParams":
        """Choose b = max(1, round(eps)) unless given explicitly."""
        if b is None:
            b = max(1, round_half_away(epsilon))
        return cls(epsilon=epsilon, d=d, b=b)

    @property
    def block(self) -> int:
        """Residue block size B = 2^(b - 1)."""
        return 1 << (self.b - 1)

    @property
    def alphabet(self) -> int:
        """Size of the block alphabet, 2^b."""
        return 1 << self.b

    @property
    def order(self) -> int:
        """Hadamard exponent L with 2^L >= d // B + 2."""
        return hadamard_order(self.d // self.block + 2)

    @property
    def mechanism(self) -> MechanismSpec:
        """Randomized response over the block alphabet."""
        return MechanismSpec(kind=MechanismKind.RR, epsilon=self.epsilon, m=self.alphabet)


def rhr_encode_batch(values, params: RhrParams, rng: np.random.Generator) -> HadamardReports:
    """Encode many clients with recursive Hadamard response."""
    values = np.asarray(values, dtype=np.int64).ravel()
    if values.size and (int(values.min()) < 0 or int(values.max()) >= params.d):
        raise DomainError(f"values must lie in [0, {params.d})")
    quotient, residue = np.divmod(values, params.block)
    j = rng.integers(0, 1 << params.order, size=values.size, dtype=np.int64)
    sign_bit = (hadamard_entry_batch(quotient + 1, j) < 0).astype(np.int64)
    symbols = sign_bit * params.block + residue
    return HadamardReports(j=j, z=rr_perturb_batch(symbols, params.mechanism, rng))


def rhr_encode(x: int, params: RhrParams, rng: np.random.Generator) -> tuple[int, int]:
    """Encode one value; returns ``(j, z)`` with z a symbol in [0, 2^b)."""
    reports = rhr_encode_batch([x], params, rng)
    return int(reports.j[0]), int(reports.z[0])


def rhr_estimate_batch(x_set: Sequence[int], reports: HadamardReports, params: RhrParams) -> np.ndarray:
    """Vectorised :func:`rhr_estimate` over several queried values."""
    n = _require_reports(reports)
    matched, unmatched = params.mechanism.decode_values()
    estimates = []
    for x in np.asarray(x_set, dtype=np.int64).ravel():
        if not 0 <= x < params.d:
            raise DomainError(f"queried value {x} outside [0, {params.d})")
        quotient, residue = divmod(int(x), params.block)
        sign_bit = (hadamard_entry_batch(quotient + 1, reports.j) < 0).astype(np.int64)
        match = sign_bit * params.block + residue
        antimatch = (1 - sign_bit) * params.block + residue
        net = np.count_nonzero(reports.z == match) - np.count_nonzero(reports.z == antimatch)
        estimates.append((matched - unmatched) * net / n)
    return np.asarray(estimates, dtype=float)


def rhr_estimate(x: int, reports: HadamardReports, params: RhrParams) -> float:
    """
    RHR frequency estimate: mean of decode(z, match) - decode(z, antimatch).

    The match symbol carries x's residue and the sign H[x // B + 1, j]; the
    antimatch symbol carries the opposite sign.
    """
    return float(rhr_estimate_batch([x], reports, params)[0])


# ---------------------------------------------------------------------------
# OLH and the recursive sketch
# ---------------------------------------------------------------------------


def olh_params(epsilon: float, d: int, *, field: FieldSpec | None = None, clip: bool = False) -> EstimatorParams:
    """OCMS parameters with the fixed range m = round(1 + e^eps) used by OLH."""
    _check_epsilon(epsilon)
    m = max(2, round_half_away(1 + math.exp(epsilon)))
    return EstimatorParams.create(epsilon=epsilon, d=d, mode=EstimatorMode.FIXED, m=m, field=field, clip=clip)


def recursive_equivalent_m(m1: float, m2: float) -> float:
    """Range of the single sketch equivalent to hashing onto m1 and then m2 buckets."""
    if m1 <= 1 or m2 <= 1:
        raise DomainError("recursive_equivalent_m requires both ranges above 1")
    return m1 * m2 / (m1 + m2 - 1)


@dataclass(frozen=True, kw_only=True, eq=False)
class CmsHeReports:
    """
    Reports of CMS+HE: the stage-one hash and the stage-two HE report.

    Attributes:
        a0 (np.ndarray): Additive stage-one coefficients (uint64).
        a1 (np.ndarray): Multiplicative stage-one coefficients (uint64).
        stage_two (HadamardReports): HE reports of the stage-one buckets.
    """

    a0: np.ndarray
    a1: np.ndarray
    stage_two: HadamardReports

    def __len__(self) -> int:
        """Number of reports."""
        return len(self.stage_two)


def cms_he_encode_batch(values, m1: int, field: FieldSpec, epsilon: float, rng: np.random.Generator) -> CmsHeReports:
    """Hash every value onto [m1] with its own affine hash, then Hadamard-encode the bucket."""
    values = np.asarray(values, dtype=np.int64).ravel()
    a0, a1 = sample_coefficients(field, values.size, rng)
    buckets = hash_eval_batch(field, m1, a0, a1, values)
    return CmsHeReports(a0=a0, a1=a1, stage_two=he_encode_batch(buckets, m1, epsilon, rng))


def cms_he_encode(x: int, m1: int, field: FieldSpec, epsilon: float, rng: np.random.Generator) -> CmsHeReports:
    """Encode a single value; the result holds one report."""
    return cms_he_encode_batch([x], m1, field, epsilon, rng)


def cms_he_estimate_batch(
    x_set: Sequence[int], reports: CmsHeReports, m1: int, field: FieldSpec, epsilon: float
) -> np.ndarray:
    """
    CMS+HE estimates for several queried values.

    The HE reconstruction t_i = c z_i H[j_i, h_i(x) + 1] gives an unbiased
    stage-two indicator y_i = (1 + t_i) / 2, which is debiased as a single
    sketch with range recursive_equivalent_m(m1', 2).
    """
    _check_epsilon(epsilon)
    n = _require_reports(reports)
    m_eff = recursive_equivalent_m(api_stats(field, m1).m_prime, 2)
    scale = _he_scale(epsilon)
    estimates = []
    for x in np.asarray(x_set, dtype=np.int64).ravel():
        buckets = hash_eval_batch(field, m1, reports.a0, reports.a1, int(x))
        agreement = int(np.sum(reports.stage_two.z * hadamard_entry_batch(buckets + 1, reports.stage_two.j)))
        indicator_mean = (n + scale * agreement) / (2 * n)
        estimates.append(m_eff / (m_eff - 1) * indicator_mean - 1 / (m_eff - 1))
    return np.asarray(estimates, dtype=float)


def cms_he_estimate(x: int, reports: CmsHeReports, m1: int, field: FieldSpec, epsilon: float) -> float:
    """Scalar form of :func:`cms_he_estimate_batch`."""
    return float(cms_he_estimate_batch([x], reports, m1, field, epsilon)[0])


def cms_he_variance(f: float, epsilon: float, m1_prime: float, n: int) -> float:
    """
    Exact variance of the CMS+HE estimate for a value of frequency ``f``.

    (m1'/(m1'-1))^2 / n * [c^2 - f - (1 - f) / m1'^2] with c = (e^eps + 1)/(e^eps - 1).
    """
    _check_epsilon(epsilon)
    if not 0.0 <= f <= 1.0 or m1_prime <= 1 or n < 1:
        raise DomainError("cms_he_variance requires f in [0, 1], m1' > 1 and n >= 1")
    c = _he_scale(epsilon)
    return (m1_prime / (m1_prime - 1)) ** 2 / n * (c * c - f - (1 - f) / m1_prime**2)
