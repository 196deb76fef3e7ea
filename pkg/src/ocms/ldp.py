"""
Local differential privacy mechanisms and the generic reconstruction process.

Randomized response (RR) is implemented end to end. The symmetric and
asymmetric RAPPOR mechanisms only contribute their decode variances, which the
analytic comparisons need. Any other mechanism given as a column-stochastic
transition matrix P can be decoded with Q = (P^T P)^-1 P^T.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum, unique

import numpy as np
import scipy.linalg

import ocms._constants as consts
from .exceptions import ConfigurationError, DomainError, SingularityError

logger = logging.getLogger(__name__)


@unique
class MechanismKind(Enum):
    """Supported perturbation mechanisms."""

    RR = "rr"
    SRAPPOR = "srappor"
    ARAPPOR = "arappor"


@dataclass(frozen=True, kw_only=True)
class MechanismSpec:
    """
    Parameters of an LDP mechanism.

    Attributes:
        kind (MechanismKind): Mechanism family.
        epsilon (float): Privacy factor, strictly positive.
        m (int): Input cardinality, at least 2.
    """

    kind: MechanismKind = MechanismKind.RR
    epsilon: float
    m: int

    def __post_init__(self):
        """Validate epsilon and m."""
        if not self.epsilon > 0 or not math.isfinite(self.epsilon):
            logger.error("Invalid privacy factor %s", self.epsilon)
            raise ConfigurationError(f"epsilon must be a positive finite number, got {self.epsilon}")
        if self.m < 2:
            logger.error("Invalid mechanism cardinality %s", self.m)
            raise ConfigurationError(f"m must be at least 2, got {self.m}")

    @property
    def keep_probability(self) -> float:
        """Probability that RR reports its input unchanged: e^eps / (e^eps + m - 1)."""
        return 1.0 / (1.0 + (self.m - 1) * math.exp(-self.epsilon))

    def decode_values(self) -> tuple[float, float]:
        """Unbiased RR reconstruction values (matched, unmatched)."""
        denominator = math.expm1(self.epsilon)
        matched = (math.exp(self.epsilon) + self.m - 2) / denominator
        return matched, -1.0 / denominator


def _require_rr(spec: MechanismSpec) -> None:
    if spec.kind is not MechanismKind.RR:
        logger.error("Randomized response requested with mechanism %s", spec.kind)
        raise ConfigurationError(f"operation defined for RR only, got {spec.kind.name}")


def rr_perturb(y: int, spec: MechanismSpec, rng: np.random.Generator) -> int:
    """
    Apply randomized response to one symbol.

    Keeps ``y`` with probability e^eps / (e^eps + m - 1) and otherwise reports one
    of the other m - 1 symbols uniformly.
    """
    _require_rr(spec)
    if not 0 <= y < spec.m:
        raise DomainError(f"symbol {y} outside [0, {spec.m})")
    return int(rr_perturb_batch(np.asarray([y]), spec, rng)[0])


def rr_perturb_batch(y: np.ndarray, spec: MechanismSpec, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`rr_perturb`; returns an int64 array of reported symbols."""
    _require_rr(spec)
    y = np.asarray(y, dtype=np.int64)
    keep = rng.random(y.shape) < spec.keep_probability
    # shift by 1..m-1 so a replaced symbol never equals the input
    offset = rng.integers(1, spec.m, size=y.shape)
    return np.where(keep, y, (y + offset) % spec.m)


def rr_decode(z: int, v: int, spec: MechanismSpec) -> float:
    """
    Unbiased reconstruction of the indicator of ``v`` from report ``z``.

    Returns (e^eps + m - 2) / (e^eps - 1) when ``z == v`` and -1 / (e^eps - 1) otherwise.
    """
    _require_rr(spec)
    matched, unmatched = spec.decode_values()
    return matched if z == v else unmatched


def rr_decode_batch(z: np.ndarray, v: np.ndarray, spec: MechanismSpec) -> np.ndarray:
    """Vectorised :func:`rr_decode`."""
    _require_rr(spec)
    matched, unmatched = spec.decode_values()
    return np.where(np.asarray(z) == np.asarray(v), matched, unmatched)


def mechanism_variances(spec: MechanismSpec) -> tuple[float, float]:
    """
    Variance of the reconstruction when the queried symbol equals / differs from the input.

    Args:
        spec (MechanismSpec): Mechanism to evaluate.

    Returns:
        ``(var_eq, var_neq)``.
    """
    e = math.exp(spec.epsilon)
    match spec.kind:
        case MechanismKind.RR:
            scale = math.expm1(spec.epsilon) ** 2
            return e * (spec.m - 1) / scale, (e + spec.m - 2) / scale
        case MechanismKind.SRAPPOR:
            half = math.exp(spec.epsilon / 2)
            value = half / math.expm1(spec.epsilon / 2) ** 2
            return value, value
        case MechanismKind.ARAPPOR:
            scale = math.expm1(spec.epsilon) ** 2
            return (e + 1) ** 2 / scale, 4 * e / scale
    raise TypeError(f"unsupported mechanism {spec.kind!r}")


def rr_transition_matrix(spec: MechanismSpec) -> np.ndarray:
    """The m x m RR transition matrix, entry (u, v) = Pr(report u | input v)."""
    _require_rr(spec)
    keep = spec.keep_probability
    other = (1.0 - keep) / (spec.m - 1)
    matrix = np.full((spec.m, spec.m), other)
    np.fill_diagonal(matrix, keep)
    return matrix


def ldp_ratio(P: np.ndarray) -> float:
    """
    Largest likelihood ratio between two inputs for a common output.

    Rows mixing zero and positive probabilities yield infinity.
    """
    P = np.asarray(P, dtype=float)
    worst = 1.0
    for row in P:
        positive = row[row > 0]
        if positive.size == 0:
            continue
        if positive.size < row.size:
            return math.inf
        worst = max(worst, float(positive.max() / positive.min()))
    return worst


def satisfies_ldp(P: np.ndarray, epsilon: float) -> bool:
    """Return True when the mechanism with transition matrix ``P`` is epsilon-LDP."""
    return ldp_ratio(P) <= math.exp(epsilon) * (1 + 1e-12)


@dataclass(frozen=True, kw_only=True, eq=False)
class TransitionMatrix:
    """
    A mechanism's transition matrix and its decoder.

    Attributes:
        P (np.ndarray): |U| x |V| matrix, column v the output distribution for input v.
        Q (np.ndarray): |V| x |U| left inverse of P.
    """

    P: np.ndarray
    Q: np.ndarray

    def decode_column(self, u: int) -> np.ndarray:
        """Unbiased indicator vector over the inputs for observed output ``u``."""
        if not 0 <= u < self.Q.shape[1]:
            raise DomainError(f"output index {u} outside [0, {self.Q.shape[1]})")
        return self.Q[:, u].copy()


def build_decoder(P) -> TransitionMatrix:
    """
    Build the reconstruction matrix Q = (P^T P)^-1 P^T of a mechanism.

    Q is obtained from a least-squares solve of P Q = I rather than by forming
    P^T P explicitly.

    Args:
        P: Column-stochastic |U| x |V| matrix with |U| >= |V|.

    Returns:
        The transition matrix paired with its decoder.

    Raises:
        ConfigurationError: If P is not column-stochastic or has fewer rows than columns.
        SingularityError: If P does not have full column rank.
    """
    P = np.array(P, dtype=float)
    if P.ndim != 2 or P.shape[0] < P.shape[1]:
        logger.error("Transition matrix has shape %s", P.shape)
        raise ConfigurationError("transition matrix must be 2-D with at least as many rows as columns")
    if (P < 0).any() or not np.allclose(P.sum(axis=0), 1.0, atol=consts.STOCHASTIC_ATOL):
        logger.error("Transition matrix columns sum to %s", P.sum(axis=0))
        raise ConfigurationError("transition matrix must be non-negative and column-stochastic")
    solution, _, rank, _ = scipy.linalg.lstsq(P, np.eye(P.shape[0]))
    if rank < P.shape[1]:
        logger.error("Transition matrix rank %d below %d columns", rank, P.shape[1])
        raise SingularityError("rank-deficient transition matrix cannot be reconstructed")
    P.setflags(write=False)
    solution.setflags(write=False)
    return TransitionMatrix(P=P, Q=solution)
