"""
Loss metrics, theoretical reference values and communication accounting.

The empirical side folds repeated trials into the worst-case MSE over the
evaluated values and the mean l1 / l2 losses. The analytic side evaluates the
closed-form precision of every compared algorithm, the statistical upper bound
on the worst-case MSE estimator and the per-client communication cost.
"""

import csv
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import astuple, dataclass, fields
from enum import Enum, unique
from pathlib import Path

import numpy as np
import scipy.stats

import ocms._constants as consts
from .cms import EstimatorParams, optimal_losses, worst_case_mse
from .codec import unpack_reports
from .exceptions import ConfigurationError, DomainError
from .hashing import family_bits

logger = logging.getLogger(__name__)


@unique
class Algorithm(Enum):
    """Frequency-estimation algorithms known to the analysis and the runner."""

    HE = "HE"
    RHR = "RHR"
    OLH = "OLH"
    OCMS_MSE = "OCMS_MSE"
    OCMS_L = "OCMS_L"
    CMSHE = "CMSHE"
    SS = "SS"
    ARP = "aRP"
    RP = "RP"

    @classmethod
    def parse(cls, label: "str | Algorithm") -> "Algorithm":
        """
        Look up an algorithm by name or by one of its common aliases.

        Raises:
            ConfigurationError: If the label is unknown.
        """
        if isinstance(label, cls):
            return label
        key = str(label).strip().upper()
        if key in _ALIASES:
            return _ALIASES[key]
        logger.error("Unknown algorithm label %r", label)
        raise ConfigurationError(f"unknown algorithm label {label!r}")

    @property
    def runnable(self) -> bool:
        """True for algorithms with a client/server implementation."""
        return self in _RUNNABLE


_ALIASES = {
    "HE": Algorithm.HE,
    "RHR": Algorithm.RHR,
    "OLH": Algorithm.OLH,
    "OCMS_MSE": Algorithm.OCMS_MSE,
    "MSE-OCMS": Algorithm.OCMS_MSE,
    "MSE-OCMS+RR": Algorithm.OCMS_MSE,
    "OCMS_L": Algorithm.OCMS_L,
    "L-OCMS": Algorithm.OCMS_L,
    "L-OCMS+RR": Algorithm.OCMS_L,
    "CMSHE": Algorithm.CMSHE,
    "CMS+HE": Algorithm.CMSHE,
    "CMS": Algorithm.CMSHE,
    "SS": Algorithm.SS,
    "ARP": Algorithm.ARP,
    "RP": Algorithm.RP,
    "RAPPOR": Algorithm.RP,
}

_RUNNABLE = frozenset(
    {Algorithm.HE, Algorithm.RHR, Algorithm.OLH, Algorithm.OCMS_MSE, Algorithm.OCMS_L, Algorithm.CMSHE}
)


# ---------------------------------------------------------------------------
# Empirical metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class TrialMetrics:
    """
    Estimates of one trial.

    Attributes:
        algorithm (Algorithm): Algorithm that produced the estimates.
        epsilon (float): Privacy factor.
        trial (int): Trial index.
        estimates (dict[int, float]): Estimate per value.
        truth (dict[int, float]): True frequency per value.
        x_set (tuple[int, ...]): Values the losses are evaluated on.
    """

    algorithm: Algorithm
    epsilon: float
    trial: int
    estimates: dict[int, float]
    truth: dict[int, float]
    x_set: tuple[int, ...]

    def __post_init__(self):
        """Every evaluated value needs an estimate and a true frequency."""
        missing = [x for x in self.x_set if x not in self.estimates or x not in self.truth]
        if missing:
            raise DomainError(f"x_set values without estimate or truth: {missing[:5]}")

    def errors(self) -> np.ndarray:
        """Estimate minus truth for every value of x_set, in order."""
        return np.array([self.estimates[x] - self.truth[x] for x in self.x_set])


@dataclass(frozen=True, kw_only=True)
class LossSummary:
    """
    Empirical and theoretical losses of one algorithm at one privacy factor.

    Attributes:
        algorithm (str): Algorithm label.
        epsilon (float): Privacy factor.
        worst_mse (float): Largest mean squared error over the evaluated values.
        l1 (float): Mean over trials of the summed absolute errors.
        l2 (float): Mean over trials of the summed squared errors.
        theory_mse (float): Theoretical worst-case MSE.
        theory_l1_upper (float): Theoretical upper bound on the l1 loss.
        theory_l2 (float): Theoretical l2 loss.
        mse_upper_bound (float): High-probability upper bound on ``worst_mse``.
    """

    algorithm: str
    epsilon: float
    worst_mse: float
    l1: float
    l2: float
    theory_mse: float = 0.0
    theory_l1_upper: float = 0.0
    theory_l2: float = 0.0
    mse_upper_bound: float = 0.0

    def __post_init__(self):
        """Losses are non-negative."""
        if min(astuple(self)[2:]) < 0:
            raise DomainError("losses must be non-negative")


SUMMARY_FIELDS = tuple(f.name for f in fields(LossSummary))


@dataclass(frozen=True, kw_only=True)
class TheoryValues:
    """
    Theoretical reference values for one summary row.

    Attributes:
        mse (float): Worst-case MSE.
        l1_upper (float): Upper bound on the l1 loss.
        l2 (float): l2 loss.
    """

    mse: float
    l1_upper: float
    l2: float


def mse_upper_bound(V: float, t: int, x_count: int) -> float:
    """
    Upper bound on the worst-case MSE estimated from ``t`` trials over ``x_count`` values.

    Returns [1 + 2/t (sqrt(t ln(20 |x|)) + ln(20 |x|))] V.
    """
    if V < 0 or t < 1 or x_count < 1:
        raise DomainError("mse_upper_bound requires V >= 0, t >= 1 and x_count >= 1")
    log_term = math.log(20 * x_count)
    return (1 + 2 / t * (math.sqrt(t * log_term) + log_term)) * V


def empirical_metrics(trials: Sequence[TrialMetrics], theory: TheoryValues | None = None) -> LossSummary:
    """
    Fold repeated trials of one algorithm and privacy factor into a summary.

    Args:
        trials (Sequence[TrialMetrics]): At least one trial; all share x_set and truth.
        theory (TheoryValues | None): Theoretical values to attach; zeros when omitted.

    Returns:
        The loss summary.

    Raises:
        DomainError: If there are no trials or they disagree on x_set or truth.
    """
    if not trials:
        raise DomainError("empirical_metrics needs at least one trial")
    first = trials[0]
    for trial in trials[1:]:
        if trial.x_set != first.x_set or any(trial.truth[x] != first.truth[x] for x in first.x_set):
            logger.error("Trial %d disagrees with trial %d on x_set or truth", trial.trial, first.trial)
            raise DomainError("trials must share x_set and truth")
    errors = np.vstack([trial.errors() for trial in trials])
    theory = theory or TheoryValues(mse=0.0, l1_upper=0.0, l2=0.0)
    return LossSummary(
        algorithm=first.algorithm.value,
        epsilon=first.epsilon,
        worst_mse=float(np.max(np.mean(errors**2, axis=0))),
        l1=float(np.mean(np.sum(np.abs(errors), axis=1))),
        l2=float(np.mean(np.sum(errors**2, axis=1))),
        theory_mse=theory.mse,
        theory_l1_upper=theory.l1_upper,
        theory_l2=theory.l2,
        mse_upper_bound=mse_upper_bound(theory.mse, len(trials), len(first.x_set)),
    )


def paired_difference_ci(a, b, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """
    Mean and confidence half-width of the paired difference a - b along axis 0.

    Args:
        a: Trials x values array.
        b: Array of the same shape.
        level (float): Confidence level.

    Returns:
        ``(mean_difference, half_width)``, one entry per value.
    """
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    t = diff.shape[0]
    if t < 2:
        raise DomainError("a paired confidence interval needs at least two trials")
    quantile = scipy.stats.t.ppf((1 + level) / 2, df=t - 1)
    half_width = quantile * diff.std(axis=0, ddof=1) / math.sqrt(t)
    return diff.mean(axis=0), half_width


# ---------------------------------------------------------------------------
# Closed-form precision and communication
# ---------------------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class TheoryRow:
    """
    Closed-form precision of one algorithm.

    Attributes:
        algorithm (Algorithm): Algorithm evaluated.
        d (int): Dictionary size.
        epsilon (float): Privacy factor.
        n (int): Number of clients.
        l1 (float): l1 loss.
        l2 (float): l2 loss.
        mse_hat (float): Worst-case MSE.
        mse_lower_bound (bool): ``mse_hat`` is only a lower bound.
        asymptotic (bool): Values hold up to a constant factor.
        small_d (bool): d < 10 e^eps, where the closed forms are loose.
    """

    algorithm: Algorithm
    d: int
    epsilon: float
    n: int
    l1: float
    l2: float
    mse_hat: float
    mse_lower_bound: bool = False
    asymptotic: bool = False
    small_d: bool = False


def theory_table(algorithm: Algorithm | str, d: int, epsilon: float, n: int, f_star: float = 1.0) -> TheoryRow:
    """
    Closed-form l1, l2 and worst-case MSE of an algorithm for n clients.

    The n-free table values are scaled by 1/sqrt(n) (l1) or 1/n (l2, MSE).

    Args:
        algorithm (Algorithm | str): Algorithm label.
        d (int): Dictionary size.
        epsilon (float): Privacy factor.
        n (int): Number of clients.
        f_star (float): Largest frequency assumed by the asymmetric RAPPOR MSE.

    Returns:
        The evaluated row.
    """
    algorithm = Algorithm.parse(algorithm)
    if d < 2 or n < 1 or not epsilon > 0:
        raise DomainError("theory_table requires d >= 2, n >= 1 and epsilon > 0")
    e, em1 = math.exp(epsilon), math.expm1(epsilon)
    s, sm1 = math.exp(epsilon / 2), math.expm1(epsilon / 2)
    root_n = math.sqrt(n)
    he_mse = ((e + 1) / em1) ** 2
    unary_l1 = 2 * d * s / em1
    unary_l2 = 4 * d * e / em1**2
    rappor_mse = s / sm1**2
    lower_bound = asymptotic = False
    match algorithm:
        case Algorithm.HE | Algorithm.CMSHE:
            l1, l2, mse = d * (e + 1) / em1, d * (e + 1) ** 2 / em1**2, he_mse
        case Algorithm.OLH | Algorithm.SS | Algorithm.OCMS_L:
            l1, l2, mse = unary_l1, unary_l2, he_mse
        case Algorithm.ARP:
            l1, l2, mse = unary_l1, unary_l2, (f_star * em1**2 + 4 * e) / em1**2
        case Algorithm.OCMS_MSE | Algorithm.RP:
            l1, l2, mse = d * math.exp(epsilon / 4) / sm1, d * rappor_mse, rappor_mse
        case Algorithm.RHR:
            rate = min(epsilon, epsilon**2)
            l1, l2, mse = d / math.sqrt(rate), d / rate, he_mse
            lower_bound = asymptotic = True
    return TheoryRow(
        algorithm=algorithm,
        d=d,
        epsilon=epsilon,
        n=n,
        l1=l1 / root_n,
        l2=l2 / n,
        mse_hat=mse / n,
        mse_lower_bound=lower_bound,
        asymptotic=asymptotic,
        small_d=d < consts.SMALL_D_FACTOR * e,
    )


def theory_values(
    algorithm: Algorithm | str,
    epsilon: float,
    n: int,
    x_count: int,
    *,
    f_star: float = 1.0,
    f_max: float | None = None,
) -> TheoryValues:
    """
    Theoretical values attached to an experiment summary, with d replaced by |x|.

    OCMS_MSE uses the worst-case MSE for its prior ``f_star``, penalised by how far
    the largest true frequency ``f_max`` exceeds it; OCMS_L uses the exact optimal
    losses instead of their large-d limits.
    """
    algorithm = Algorithm.parse(algorithm)
    size = max(2, x_count)
    row = theory_table(algorithm, size, epsilon, n, f_star=f_star)
    mse, l1, l2 = row.mse_hat, row.l1, row.l2
    if algorithm is Algorithm.OCMS_MSE:
        delta = max(0.0, f_max - f_star) if f_max is not None and f_star <= 0.5 else 0.0
        mse = worst_case_mse(epsilon, n, f_star, delta)
    elif algorithm is Algorithm.OCMS_L:
        losses = optimal_losses(epsilon, n, size)
        l1, l2 = losses.l1_upper, losses.l2_star
    return TheoryValues(mse=mse, l1_upper=l1, l2=l2)


@dataclass(frozen=True, kw_only=True)
class CommCost:
    """
    Bits one client sends.

    Attributes:
        bits (float): Communication cost.
        lower_bound (bool): ``bits`` is an order-of-magnitude lower bound.
    """

    bits: float
    lower_bound: bool = False


def comm_cost(
    algorithm: Algorithm | str, d: int, epsilon: float, m: int = consts.ORIGINAL_CMS_WIDTH
) -> CommCost:
    """
    Per-client communication cost of an algorithm.

    Args:
        algorithm (Algorithm | str): Algorithm label.
        d (int): Dictionary size.
        epsilon (float): Privacy factor.
        m (int): Sketch width of the original count-mean sketch (CMS+HE only).

    Returns:
        The cost in bits.
    """
    algorithm = Algorithm.parse(algorithm)
    if d < 2:
        raise DomainError("comm_cost requires d >= 2")
    log_d = math.log2(d)
    match algorithm:
        case Algorithm.HE:
            return CommCost(bits=log_d)
        case Algorithm.RHR:
            return CommCost(bits=log_d + epsilon)
        case Algorithm.OLH:
            return CommCost(bits=d * epsilon)
        case Algorithm.OCMS_MSE:
            return CommCost(bits=max(2 * log_d + epsilon / 2, 1.5 * epsilon + 6))
        case Algorithm.OCMS_L:
            return CommCost(bits=max(2 * log_d + epsilon, 3 * epsilon + 6))
        case Algorithm.SS:
            return CommCost(bits=d / (1 + math.exp(epsilon)))
        case Algorithm.RP | Algorithm.ARP:
            return CommCost(bits=float(d))
        case Algorithm.CMSHE:
            return CommCost(bits=d * math.log2(m), lower_bound=True)
    raise ConfigurationError(f"no communication cost for {algorithm}")


@dataclass(frozen=True, kw_only=True)
class ReportAudit:
    """
    Measured size of serialized OCMS reports.

    Attributes:
        count (int): Number of reports.
        information_bits (int): Bits needed to name the hash function plus the bucket.
        packed_bits (float): Actual bits per packed record.
    """

    count: int
    information_bits: int
    packed_bits: float


def audit_report_bits(packed: bytes, params: EstimatorParams) -> ReportAudit:
    """Compare the packed report size with the information-theoretic payload."""
    count = len(unpack_reports(packed))
    if count == 0:
        raise DomainError("audit_report_bits needs at least one report")
    information = family_bits(params.d, params.m) + (params.m - 1).bit_length()
    return ReportAudit(count=count, information_bits=information, packed_bits=8 * len(packed) / count)


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

TRIAL_FIELDS = ("algorithm", "epsilon", "trial", "n", "max_sq_error", "l1", "l2")
ESTIMATE_FIELDS = ("algorithm", "epsilon", "trial", "x", "estimate", "truth")


def write_summary_csv(path: str | Path, summaries: Iterable[LossSummary]) -> None:
    """Write one CSV row per summary."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SUMMARY_FIELDS)
        for summary in summaries:
            writer.writerow(astuple(summary))


def read_summary_csv(path: str | Path) -> list[LossSummary]:
    """Read a summary CSV written by :func:`write_summary_csv`."""
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    return [
        LossSummary(**{name: (row[name] if name == "algorithm" else float(row[name])) for name in SUMMARY_FIELDS})
        for row in rows
    ]


def write_trials_csv(path: str | Path, trials: Iterable[TrialMetrics], n: int) -> None:
    """One row per trial with its largest squared error and its l1 / l2 losses."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(TRIAL_FIELDS)
        for trial in trials:
            errors = trial.errors()
            writer.writerow(
                (
                    trial.algorithm.value,
                    trial.epsilon,
                    trial.trial,
                    n,
                    float(np.max(errors**2)),
                    float(np.sum(np.abs(errors))),
                    float(np.sum(errors**2)),
                )
            )


def write_estimates_csv(path: str | Path, trials: Iterable[TrialMetrics]) -> None:
    """One row per trial and evaluated value."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(ESTIMATE_FIELDS)
        for trial in trials:
            for x in trial.x_set:
                row = (trial.algorithm.value, trial.epsilon, trial.trial, x, trial.estimates[x], trial.truth[x])
                writer.writerow(row)


def read_estimates_csv(path: str | Path) -> list[TrialMetrics]:
    """Rebuild the trials written by :func:`write_estimates_csv`, in file order."""
    grouped: dict[tuple[str, float, int], list[dict[str, str]]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            key = (row["algorithm"], float(row["epsilon"]), int(row["trial"]))
            grouped.setdefault(key, []).append(row)
    trials = []
    for (label, epsilon, trial), rows in grouped.items():
        x_set = tuple(int(row["x"]) for row in rows)
        trials.append(
            TrialMetrics(
                algorithm=Algorithm.parse(label),
                epsilon=epsilon,
                trial=trial,
                estimates={int(row["x"]): float(row["estimate"]) for row in rows},
                truth={int(row["x"]): float(row["truth"]) for row in rows},
                x_set=x_set,
            )
        )
    return trials
