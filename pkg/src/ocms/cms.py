"""
Optimized count-mean sketch with randomized response (OCMS+RR).

Each client hashes its value with an independently sampled affine hash onto
``m`` buckets, perturbs the bucket with randomized response and reports the
perturbed bucket together with the hash coefficients. The server decodes every
report at the bucket of each queried value and debiases the sum with the
effective range m' of the hashing family.

The module also holds the analytic side: the hash-range optimizers, the
variance and expectation predictors, worst-case MSE and loss formulas, the
concentration bound and the bias of the original (fixed-family) sketch.
"""

import logging
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field as dataclass_field
from enum import Enum, unique

import numpy as np

import ocms._constants as consts
from .exceptions import ConfigurationError, DomainError
from .field import FieldSpec, finite_field_size
from .hashing import api_stats, hash_eval_batch, sample_coefficients
from .ldp import MechanismKind, MechanismSpec, rr_perturb_batch

logger = logging.getLogger(__name__)

# Upper bound on the size of one (queried values x reports) block in server_estimate
_ESTIMATE_BLOCK_ELEMENTS = 1 << 22


@unique
class EstimatorMode(Enum):
    """How the hash range m is chosen."""

    MSE_OPT = "mse"
    L_OPT = "l"
    FIXED = "fixed"


def round_half_away(value: float) -> int:
    """Round to the nearest integer, halves away from zero."""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0 or not math.isfinite(epsilon):
        logger.error("Invalid privacy factor %s", epsilon)
        raise ConfigurationError(f"epsilon must be a positive finite number, got {epsilon}")


def _check_frequency(f: float, name: str = "f") -> None:
    if not 0.0 <= f <= 1.0:
        logger.error("%s=%s outside [0, 1]", name, f)
        raise DomainError(f"{name} must lie in [0, 1], got {f}")


def _delta_mse(epsilon: float, f_star: float) -> float:
    e = math.exp(epsilon)
    return math.exp(epsilon / 2) * math.sqrt(((1 - f_star) * e + f_star) * (f_star * e + 1 - f_star))


def _delta_l(epsilon: float, d: int) -> float:
    e = math.exp(epsilon)
    return math.exp(epsilon / 2) * math.sqrt((e + d - 1) * (d * e - e + 1))


# ---------------------------------------------------------------------------
# Analytic predictors
# ---------------------------------------------------------------------------


def predict_variance(f: float, epsilon: float, m: float, n: int) -> float:
    """
    Variance of f_hat(x) for a value of true frequency ``f`` under pairwise-independent hashing.

    Args:
        f (float): True frequency of the queried value.
        epsilon (float): Privacy factor.
        m (float): Hash range (real values are accepted for equivalent ranges).
        n (int): Number of reports.

    Returns:
        (1-f)/(n(m-1)) + m[(1-f)(e^eps-1)(2-m) + m e^eps] / (n(m-1)(e^eps-1)^2)
    """
    _check_frequency(f)
    _check_epsilon(epsilon)
    if m <= 1 or n < 1:
        raise DomainError("predict_variance requires m > 1 and n >= 1")
    e, em1 = math.exp(epsilon), math.expm1(epsilon)
    return (1 - f) / (n * (m - 1)) + m * ((1 - f) * em1 * (2 - m) + m * e) / (n * (m - 1) * em1**2)


def mse_objective(epsilon: float, m: float, f_star: float, n: int = 1) -> float:
    """Worst variance over frequencies in [0, f_star]; the quantity MSE_OPT minimises."""
    return max(predict_variance(f_star, epsilon, m, n), predict_variance(0.0, epsilon, m, n))


def l2_objective(epsilon: float, m: float, d: int, n: int = 1) -> float:
    """Worst-case l2 loss over the dictionary; the quantity L_OPT minimises."""
    return (d - 1) * predict_variance(0.0, epsilon, m, n) + predict_variance(1.0, epsilon, m, n)


def predict_variance_general(
    f_vec: Sequence[float],
    var_eq: float,
    var_neq: float,
    c_bar: float,
    m: float,
    n: int,
    x: int = 0,
) -> float:
    """
    Variance of f_hat(x) for any unbiased reconstruction with uniform collision probability.

    Args:
        f_vec (Sequence[float]): Frequencies of the whole dictionary, summing to 1.
        var_eq (float): Reconstruction variance when queried and true symbol agree.
        var_neq (float): Reconstruction variance when they differ.
        c_bar (float): Collision probability of two distinct values.
        m (float): Calibration range of the estimator (1/c_bar for the debiased estimator).
        n (int): Number of reports.
        x (int): Index of the queried value in ``f_vec``.

    Returns:
        The predicted variance.
    """
    f_vec = np.asarray(f_vec, dtype=float)
    if not math.isclose(float(f_vec.sum()), 1.0, abs_tol=1e-9):
        raise DomainError("f_vec must sum to 1")
    if not 0.0 < c_bar < 1.0:
        raise DomainError(f"c_bar must lie in (0, 1), got {c_bar}")
    fx = float(f_vec[x])
    others = 1.0 - fx
    per_report = others * (c_bar * var_eq + (1 - c_bar) * var_neq + c_bar * (1 - c_bar)) + fx * var_eq
    return m * m / ((m - 1) ** 2 * n) * per_report


def predict_expectation(collision_avg, f_vec: Sequence[float], m: float) -> np.ndarray:
    """
    Expected f_hat for every value given the average pairwise collision matrix.

    E[f_hat(x)] = m/(m-1) [f(x) + sum_{x' != x} c(x, x') f(x')] - 1/(m-1)
    """
    c = np.asarray(collision_avg, dtype=float)
    f_vec = np.asarray(f_vec, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] != f_vec.size:
        raise DomainError("collision matrix must be square and match f_vec")
    if not np.allclose(c, c.T) or not np.allclose(np.diag(c), 1.0) or (c < 0).any() or (c > 1).any():
        logger.error("Collision matrix violates symmetry, unit diagonal or [0, 1] bounds")
        raise DomainError("collision matrix must be symmetric with unit diagonal and entries in [0, 1]")
    return m / (m - 1) * (c @ f_vec) - 1 / (m - 1)


def worst_case_mse(epsilon: float, n: int, f_star: float = 1.0, delta: float = 0.0) -> float:
    """
    Worst-case MSE of OCMS+RR with the MSE-optimal hash range.

    Args:
        epsilon (float): Privacy factor.
        n (int): Number of reports.
        f_star (float): Prior upper bound on any frequency.
        delta (float): Amount by which the real maximum frequency may exceed ``f_star``;
            only used when f_star <= 1/2.

    Returns:
        The worst-case MSE including the prior-error penalty.
    """
    _check_epsilon(epsilon)
    _check_frequency(f_star, "f_star")
    if delta < 0:
        raise DomainError("delta must be non-negative")
    if f_star > 0.5:
        half = math.exp(epsilon / 2)
        return half / (n * math.expm1(epsilon / 2) ** 2)
    e, em1 = math.exp(epsilon), math.expm1(epsilon)
    delta_mse = _delta_mse(epsilon, f_star)
    base = 2 * (delta_mse + e) / (n * em1**2)
    return base + delta * (1 - 2 * f_star) * e / (n * delta_mse)


@dataclass(frozen=True, kw_only=True)
class OptimalLosses:
    """
    Losses of OCMS+RR with the loss-optimal hash range.

    Attributes:
        l2_star (float): Exact worst-case l2 loss.
        l1_upper (float): Upper bound on the l1 loss, sqrt(d * l2_star).
        l2_limit (float): Limit of l2_star for d much larger than e^eps.
        l1_limit (float): Limit of l1_upper for d much larger than e^eps.
    """

    l2_star: float
    l1_upper: float
    l2_limit: float
    l1_limit: float


def optimal_losses(epsilon: float, n: int, d: int) -> OptimalLosses:
    """Worst-case l2 and l1 losses at the loss-optimal hash range."""
    _check_epsilon(epsilon)
    if d < 2 or n < 1:
        raise DomainError("optimal_losses requires d >= 2 and n >= 1")
    e, em1 = math.exp(epsilon), math.expm1(epsilon)
    l2_star = 2 * (_delta_l(epsilon, d) + d * e) / (n * em1**2)
    return OptimalLosses(
        l2_star=l2_star,
        l1_upper=math.sqrt(d * l2_star),
        l2_limit=4 * d * e / (n * em1**2),
        l1_limit=2 * d * math.exp(epsilon / 2) / (math.sqrt(n) * em1),
    )


def concentration_bound(alpha: float, epsilon: float, m: int, n: int) -> float:
    """
    Bound on Pr(|f_hat - f| >= alpha * sqrt(Var)) for pairwise-independent hashing.

    Raises:
        DomainError: If alpha is outside [0, sqrt(e^eps n / (m - 1))].
    """
    _check_epsilon(epsilon)
    e = math.exp(epsilon)
    limit = math.sqrt(e * n / (m - 1))
    if not 0 <= alpha <= limit:
        logger.error("alpha=%s outside [0, %s]", alpha, limit)
        raise DomainError(f"alpha must lie in [0, {limit}], got {alpha}")
    return 2 * math.exp(-(alpha**2) / 3 * (m - 1) / (e + m - 1))


def contribution_range(epsilon: float, m: float) -> tuple[float, float]:
    """
    Smallest and largest value a single report contributes to f_hat.

    These are m/(m-1) times the unmatched / matched decode values, minus 1/(m-1).
    """
    _check_epsilon(epsilon)
    em1 = math.expm1(epsilon)
    scale, shift = m / (m - 1), 1 / (m - 1)
    low = scale * (-1 / em1) - shift
    high = scale * (math.exp(epsilon) + m - 2) / em1 - shift
    return low, high


@dataclass(frozen=True, kw_only=True)
class BiasStats:
    """
    Distribution of the constant bias of the original count-mean sketch.

    Attributes:
        mean (float): Mean of the bias over the draw of the hash family.
        variance (float): Variance of the bias over the draw of the hash family.
    """

    mean: float
    variance: float


def original_cms_bias_stats(f_vec: Sequence[float], m: int, k: int, x: int = 0) -> BiasStats:
    """Bias of a fixed family of ``k`` independently drawn hash functions for value ``x``."""
    if k < 1 or m < 2:
        raise DomainError("original_cms_bias_stats requires k >= 1 and m >= 2")
    f_vec = np.asarray(f_vec, dtype=float)
    others = np.delete(f_vec, x)
    return BiasStats(mean=0.0, variance=float(np.sum(others**2)) / ((m - 1) * k))


# ---------------------------------------------------------------------------
# Hash range selection and estimator parameters
# ---------------------------------------------------------------------------


def _real_optimum(epsilon: float, d: int, f_star: float, mode: EstimatorMode) -> float:
    e = math.exp(epsilon)
    if mode is EstimatorMode.L_OPT:
        return 1 + _delta_l(epsilon, d) / (e + d - 1)
    if f_star > 0.5:
        return 1 + math.exp(epsilon / 2)
    return 1 + _delta_mse(epsilon, f_star) / (f_star * e + 1 - f_star)


def hash_range(
    epsilon: float,
    d: int,
    f_star: float = 1.0,
    mode: EstimatorMode | str = EstimatorMode.MSE_OPT,
    *,
    exact: bool = True,
) -> int:
    """
    Optimal hash range for the MSE or the l1/l2 losses.

    The real-valued optimum has a closed form. With ``exact`` the two
    neighbouring integers are compared on the objective being optimised and
    the better one is returned, which is the integer argmin since the objective
    is unimodal in m; exact ties fall back to rounding half away from zero.
    Without ``exact`` the rounded optimum is returned directly. The result is
    never below 2.

    Args:
        epsilon (float): Privacy factor.
        d (int): Dictionary size.
        f_star (float): Prior upper bound on any frequency (MSE_OPT only).
        mode (EstimatorMode | str): MSE_OPT or L_OPT.
        exact (bool): Compare the neighbouring integers instead of plain rounding.

    Returns:
        The hash range m.
    """
    mode = EstimatorMode(mode)
    _check_epsilon(epsilon)
    _check_frequency(f_star, "f_star")
    if mode is EstimatorMode.FIXED:
        raise ConfigurationError("hash_range is undefined for a fixed hash range")
    if mode is EstimatorMode.L_OPT and d < 2:
        raise DomainError("L_OPT requires d >= 2")
    optimum = _real_optimum(epsilon, d, f_star, mode)
    rounded = max(2, round_half_away(optimum))
    lower, upper = max(2, math.floor(optimum)), max(2, math.ceil(optimum))
    if not exact or lower == upper:
        return rounded

    def objective(m: int) -> float:
        if mode is EstimatorMode.L_OPT:
            return l2_objective(epsilon, m, d)
        return mse_objective(epsilon, m, f_star)

    lower_value, upper_value = objective(lower), objective(upper)
    if math.isclose(lower_value, upper_value, rel_tol=consts.TIE_RTOL):
        return rounded
    return lower if lower_value < upper_value else upper


@dataclass(frozen=True, kw_only=True)
class EstimatorParams:
    """
    Resolved parameters shared by the OCMS+RR client and server.

    Build instances with :meth:`create`, which resolves the hash range, the field
    and the effective range.

    Attributes:
        epsilon (float): Privacy factor.
        d (int): Dictionary size.
        mode (EstimatorMode): How ``m`` was chosen.
        m (int): Hash range.
        field (FieldSpec): Hashing field.
        m_prime (float): Effective range of the hashing family on ``m`` buckets.
        f_star (float): Prior upper bound on any frequency.
        clip (bool): Clamp estimates to [0, 1].
    """

    epsilon: float
    d: int
    mode: EstimatorMode
    m: int
    field: FieldSpec
    m_prime: float
    f_star: float = 1.0
    clip: bool = False

    def __post_init__(self):
        """Check the parameter invariants."""
        _check_epsilon(self.epsilon)
        _check_frequency(self.f_star, "f_star")
        if self.d < 1:
            raise ConfigurationError(f"d must be at least 1, got {self.d}")
        if self.m < 2:
            raise ConfigurationError(f"m must be at least 2, got {self.m}")
        if self.field.size < max(self.d, self.m):
            logger.error("Field of size %d too small for d=%d m=%d", self.field.size, self.d, self.m)
            raise ConfigurationError("field must hold every value and every bucket")
        if not self.m_prime > 1:
            raise ConfigurationError(f"m_prime must exceed 1, got {self.m_prime}")
        if self.field.size < max(self.d + 1, consts.FIELD_OVERSAMPLING * self.m):
            logger.warning(
                "Field of size %d is below max(d + 1, %dm); collision statistics are coarse",
                self.field.size,
                consts.FIELD_OVERSAMPLING,
            )

    @classmethod
    def create(
        cls,
        *,
        epsilon: float,
        d: int,
        mode: EstimatorMode | str = EstimatorMode.MSE_OPT,
        f_star: float = 1.0,
        m: int | None = None,
        field: FieldSpec | None = None,
        clip: bool = False,
    ) -> "EstimatorParams":
        """
        Resolve estimator parameters.

        Args:
            epsilon (float): Privacy factor.
            d (int): Dictionary size.
            mode (EstimatorMode | str): MSE_OPT, L_OPT or FIXED.
            f_star (float): Prior upper bound on any frequency.
            m (int | None): Hash range; required for FIXED and rejected otherwise.
            field (FieldSpec | None): Explicit hashing field; chosen by
                :func:`finite_field_size` when omitted.
            clip (bool): Clamp estimates to [0, 1].

        Returns:
            The resolved parameters.

        Raises:
            ConfigurationError: If the mode and ``m`` disagree or a value is invalid.
        """
        mode = EstimatorMode(mode)
        if mode is EstimatorMode.FIXED:
            if m is None:
                raise ConfigurationError("m is required when mode is FIXED")
        elif m is not None:
            raise ConfigurationError(f"m must not be given with mode {mode.name}")
        else:
            m = hash_range(epsilon, d, f_star, mode)
        if m < 2:
            raise ConfigurationError(f"m must be at least 2, got {m}")
        field = field or finite_field_size(d, m)
        stats = api_stats(field, m)
        logger.debug(
            "Estimator eps=%s d=%d mode=%s -> m=%d field=%d m'=%.17g",
            epsilon,
            d,
            mode.name,
            m,
            field.size,
            stats.m_prime,
        )
        return cls(
            epsilon=epsilon,
            d=d,
            mode=mode,
            m=m,
            field=field,
            m_prime=stats.m_prime,
            f_star=f_star,
            clip=clip,
        )

    @property
    def mechanism(self) -> MechanismSpec:
        """Randomized response over the hash range."""
        return MechanismSpec(kind=MechanismKind.RR, epsilon=self.epsilon, m=self.m)


# ---------------------------------------------------------------------------
# Client and server
# ---------------------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class Report:
    """
    What one client sends to the server.

    Attributes:
        z (int): Perturbed bucket.
        a0 (int): Additive hash coefficient.
        a1 (int): Multiplicative hash coefficient.
    """

    z: int
    a0: int
    a1: int


@dataclass(frozen=True, kw_only=True, eq=False)
class ReportBatch:
    """
    Column-wise storage of many reports.

    Attributes:
        z (np.ndarray): Perturbed buckets (int64).
        a0 (np.ndarray): Additive coefficients (uint64).
        a1 (np.ndarray): Multiplicative coefficients (uint64).
    """

    z: np.ndarray
    a0: np.ndarray
    a1: np.ndarray

    def __post_init__(self):
        """Normalise dtypes and check the columns line up."""
        object.__setattr__(self, "z", np.asarray(self.z, dtype=np.int64))
        object.__setattr__(self, "a0", np.asarray(self.a0, dtype=np.uint64))
        object.__setattr__(self, "a1", np.asarray(self.a1, dtype=np.uint64))
        if not self.z.shape == self.a0.shape == self.a1.shape or self.z.ndim != 1:
            raise DomainError("report columns must be one-dimensional and of equal length")

    @classmethod
    def from_reports(cls, reports: Sequence[Report]) -> "ReportBatch":
        """Stack single reports into columns."""
        return cls(
            z=[r.z for r in reports],
            a0=np.array([r.a0 for r in reports], dtype=np.uint64),
            a1=np.array([r.a1 for r in reports], dtype=np.uint64),
        )

    def __len__(self) -> int:
        """Number of reports."""
        return int(self.z.size)

    def __getitem__(self, index: int) -> Report:
        """The report at index."""
        return Report(z=int(self.z[index]), a0=int(self.a0[index]), a1=int(self.a1[index]))

    def __iter__(self) -> Iterator[Report]:
        """Iterate over the reports in order."""
        for index in range(len(self)):
            yield self[index]


def _check_values(values: np.ndarray, d: int) -> None:
    if values.size and (int(values.min()) < 0 or int(values.max()) >= d):
        logger.error("Values outside the dictionary [0, %d)", d)
        raise DomainError(f"values must lie in [0, {d})")


def client_encode_batch(values, params: EstimatorParams, rng: np.random.Generator) -> ReportBatch:
    """
    Encode many clients at once; client i uses element i of every random draw.

    Args:
        values: True values, one per client.
        params (EstimatorParams): Shared estimator parameters.
        rng (np.random.Generator): Random source.

    Returns:
        One report per value.
    """
    values = np.asarray(values, dtype=np.int64).ravel()
    _check_values(values, params.d)
    a0, a1 = sample_coefficients(params.field, values.size, rng)
    buckets = hash_eval_batch(params.field, params.m, a0, a1, values)
    z = rr_perturb_batch(buckets, params.mechanism, rng)
    return ReportBatch(z=z, a0=a0, a1=a1)


def client_encode(x: int, params: EstimatorParams, rng: np.random.Generator) -> Report:
    """
    Encode one client value.

    Raises:
        DomainError: If ``x`` is outside the dictionary.
    """
    return client_encode_batch([x], params, rng)[0]


@dataclass(frozen=True, kw_only=True, eq=False)
class FrequencyEstimates:
    """
    Server output.

    Attributes:
        n (int): Number of reports aggregated.
        x_set (tuple[int, ...]): Queried values.
        values (np.ndarray): Estimate for each queried value, in order.
    """

    n: int
    x_set: tuple[int, ...]
    values: np.ndarray = dataclass_field(repr=False)

    def as_dict(self) -> dict[int, float]:
        """Estimates keyed by value."""
        return {x: float(v) for x, v in zip(self.x_set, self.values, strict=True)}


def server_estimate(
    x_set: Sequence[int], reports: ReportBatch | Sequence[Report], params: EstimatorParams
) -> FrequencyEstimates:
    """
    Estimate the frequency of every value in ``x_set``.

    For each x the reports are decoded at bucket h_i(x); since a decode only
    takes two values, the sum is formed from the exact count of matching reports.
    The result is m'/(n(m'-1)) * sum - 1/(m'-1), clamped to [0, 1] when
    ``params.clip`` is set.

    Args:
        x_set (Sequence[int]): Values to estimate.
        reports (ReportBatch | Sequence[Report]): Client reports.
        params (EstimatorParams): Parameters the reports were produced with.

    Returns:
        The estimates together with the number of reports.

    Raises:
        DomainError: If there are no reports or a value or bucket is out of range.
    """
    batch = reports if isinstance(reports, ReportBatch) else ReportBatch.from_reports(reports)
    n = len(batch)
    if n == 0:
        logger.error("server_estimate called without reports")
        raise DomainError("at least one report is required")
    if int(batch.z.min()) < 0 or int(batch.z.max()) >= params.m:
        raise DomainError(f"reported buckets must lie in [0, {params.m})")
    xs = np.asarray(x_set, dtype=np.int64).ravel()
    _check_values(xs, params.d)

    matched, unmatched = params.mechanism.decode_values()
    scale = params.m_prime / (params.m_prime - 1)
    shift = 1 / (params.m_prime - 1)
    block = max(1, _ESTIMATE_BLOCK_ELEMENTS // n)
    hits = np.empty(xs.size, dtype=np.int64)
    for start in range(0, xs.size, block):
        chunk = xs[start : start + block, None]
        buckets = hash_eval_batch(params.field, params.m, batch.a0, batch.a1, chunk)
        hits[start : start + block] = np.count_nonzero(buckets == batch.z, axis=1)
    totals = hits * matched + (n - hits) * unmatched
    estimates = scale * totals / n - shift
    if params.clip:
        estimates = np.clip(estimates, 0.0, 1.0)
    logger.debug("Estimated %d values from %d reports", xs.size, n)
    return FrequencyEstimates(n=n, x_set=tuple(int(x) for x in xs), values=estimates)
