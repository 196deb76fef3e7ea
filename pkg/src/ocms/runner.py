"""
Experiment orchestration.

Every runnable algorithm is wrapped in a :class:`FrequencyOracle` so that the
runner can encode a dataset and query estimates without knowing which sketch
sits underneath. :func:`run` executes all (algorithm, epsilon, trial) cells on a
thread pool and writes the result files; :func:`analyze` rebuilds the summary
from those files alone.
"""

import csv
import json
import logging
import platform
from abc import ABC, abstractmethod
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Any, TextIO

import numpy as np

import ocms._constants as consts
from .analysis import (
    Algorithm,
    LossSummary,
    TrialMetrics,
    comm_cost,
    empirical_metrics,
    read_estimates_csv,
    theory_table,
    theory_values,
    write_estimates_csv,
    write_summary_csv,
    write_trials_csv,
)
from .baselines import (
    RhrParams,
    cms_he_encode_batch,
    cms_he_estimate_batch,
    he_encode_batch,
    he_estimate_batch,
    olh_params,
    rhr_encode_batch,
    rhr_estimate_batch,
)
from .cms import EstimatorMode, EstimatorParams, client_encode_batch, server_estimate
from .config import DatasetConfig, ExperimentConfig, GaussianConfig, KosarakConfig, XSetKind, ZipfConfig
from .datasets import Dataset, gen_gaussian, gen_zipf, ingest_kosarak, save_dataset
from .exceptions import ConfigurationError
from .field import finite_field_size

logger = logging.getLogger(__name__)

DATASET_FILE = "dataset.txt"
TRIALS_FILE = "trials.csv"
ESTIMATES_FILE = "estimates.csv"
SUMMARY_FILE = "summary.csv"
MANIFEST_FILE = "manifest.json"

TABLE_FIELDS = (
    "algorithm",
    "epsilon",
    "d",
    "n",
    "l1",
    "l2",
    "mse_hat",
    "mse_lower_bound",
    "asymptotic",
    "small_d",
    "comm_bits",
    "comm_lower_bound",
)


# ---------------------------------------------------------------------------
# Frequency oracles
# ---------------------------------------------------------------------------


class FrequencyOracle(ABC):
    """
    Client encoder and server estimator of one algorithm at one privacy factor.

    Subclasses provide :meth:`encode` and :meth:`estimate`; :meth:`query`
    applies the optional clamping to [0, 1].
    """

    algorithm: Algorithm

    def __init__(self, *, epsilon: float, d: int, clip: bool = False):
        """Store the privacy factor, dictionary size and clipping flag."""
        self.epsilon = epsilon
        self.d = d
        self.clip = clip

    @abstractmethod
    def encode(self, values: np.ndarray, rng: np.random.Generator) -> Any:
        """Encode one report per client value."""

    @abstractmethod
    def estimate(self, x_set: Sequence[int], reports: Any) -> np.ndarray:
        """Unclipped frequency estimate of every value in ``x_set``."""

    def query(self, x_set: Sequence[int], reports: Any) -> np.ndarray:
        """Estimate, then clamp to [0, 1] when the oracle clips."""
        estimates = self.estimate(x_set, reports)
        return np.clip(estimates, 0.0, 1.0) if self.clip else estimates


class OcmsOracle(FrequencyOracle):
    """OCMS+RR with the MSE- or loss-optimal range, or OLH's fixed range."""

    def __init__(self, *, algorithm: Algorithm, epsilon: float, d: int, f_star: float = 1.0, clip: bool = False):
        """Resolve the estimator parameters of algorithm."""
        super().__init__(epsilon=epsilon, d=d, clip=clip)
        self.algorithm = algorithm
        match algorithm:
            case Algorithm.OCMS_MSE:
                self.params = EstimatorParams.create(epsilon=epsilon, d=d, mode=EstimatorMode.MSE_OPT, f_star=f_star)
            case Algorithm.OCMS_L:
                self.params = EstimatorParams.create(epsilon=epsilon, d=d, mode=EstimatorMode.L_OPT)
            case Algorithm.OLH:
                self.params = olh_params(epsilon, d)
            case _:
                raise ConfigurationError(f"{algorithm.value} is not a count-mean sketch with randomized response")
        logger.debug("%s at eps=%s uses m=%d", algorithm.value, epsilon, self.params.m)

    def encode(self, values, rng):
        """Hash and perturb every value with its own hash function."""
        return client_encode_batch(values, self.params, rng)

    def estimate(self, x_set, reports):
        """Decode the reports at each queried value."""
        return server_estimate(x_set, reports, self.params).values


class HadamardOracle(FrequencyOracle):
    """Hadamard encoding: one perturbed coefficient per client."""

    algorithm = Algorithm.HE

    def encode(self, values, rng):
        """Send one perturbed Hadamard coefficient per client."""
        return he_encode_batch(values, self.d, self.epsilon, rng)

    def estimate(self, x_set, reports):
        """Average the signed reports that match each queried column."""
        return he_estimate_batch(x_set, reports, self.d, self.epsilon)


class RhrOracle(FrequencyOracle):
    """Recursive Hadamard response over blocks of max(1, round(eps)) bits."""

    algorithm = Algorithm.RHR

    def __init__(self, *, epsilon: float, d: int, clip: bool = False):
        """Resolve the block bits for this privacy factor."""
        super().__init__(epsilon=epsilon, d=d, clip=clip)
        self.params = RhrParams.create(epsilon, d)

    def encode(self, values, rng):
        """Perturb each block symbol with randomized response."""
        return rhr_encode_batch(values, self.params, rng)

    def estimate(self, x_set, reports):
        """Decode the block and Hadamard coordinates of every report."""
        return rhr_estimate_batch(x_set, reports, self.params)


class CmsHeOracle(FrequencyOracle):
    """CMS+HE with a first-stage range of ``m1`` buckets."""

    algorithm = Algorithm.CMSHE

    def __init__(self, *, epsilon: float, d: int, m1: int = consts.ORIGINAL_CMS_WIDTH, clip: bool = False):
        """Choose the field of the first-stage hashing family."""
        super().__init__(epsilon=epsilon, d=d, clip=clip)
        self.m1 = m1
        self.field = finite_field_size(d, m1)

    def encode(self, values, rng):
        """Hash into m1 buckets, then Hadamard-encode the bucket."""
        return cms_he_encode_batch(values, self.m1, self.field, self.epsilon, rng)

    def estimate(self, x_set, reports):
        """Debias both stages at every queried value."""
        return cms_he_estimate_batch(x_set, reports, self.m1, self.field, self.epsilon)


def make_oracle(
    algorithm: Algorithm | str, epsilon: float, d: int, *, f_star: float = 1.0, clip: bool = False
) -> FrequencyOracle:
    """
    Build the oracle of a runnable algorithm.

    Raises:
        ConfigurationError: If the algorithm has no client/server implementation.
    """
    algorithm = Algorithm.parse(algorithm)
    match algorithm:
        case Algorithm.OCMS_MSE | Algorithm.OCMS_L | Algorithm.OLH:
            return OcmsOracle(algorithm=algorithm, epsilon=epsilon, d=d, f_star=f_star, clip=clip)
        case Algorithm.HE:
            return HadamardOracle(epsilon=epsilon, d=d, clip=clip)
        case Algorithm.RHR:
            return RhrOracle(epsilon=epsilon, d=d, clip=clip)
        case Algorithm.CMSHE:
            return CmsHeOracle(epsilon=epsilon, d=d, clip=clip)
    logger.error("No oracle for %s", algorithm.value)
    raise ConfigurationError(f"{algorithm.value} has no client/server implementation")


# ---------------------------------------------------------------------------
# Datasets and randomness
# ---------------------------------------------------------------------------


def trial_rng(seed: int, algorithm: Algorithm, eps_index: int, trial: int) -> np.random.Generator:
    """
    Counter-based stream of one trial; client i consumes element i of every vectorised draw.

    The stream depends only on its key, so trials can run in any order and on any thread.
    """
    key = (list(Algorithm).index(algorithm), eps_index, trial)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def materialize_dataset(config: DatasetConfig, seed: int) -> Dataset:
    """
    Generate or load the dataset a configuration describes.

    Raises:
        TypeError: If ``config`` is not a supported dataset configuration.
    """
    match config:
        case ZipfConfig():
            return gen_zipf(config.d, config.n, mod_aligned=config.mod_aligned, seed=seed)
        case GaussianConfig():
            return gen_gaussian(config.n, seed=seed, sigma=config.sigma)
        case KosarakConfig():
            return ingest_kosarak(config.kosarak_path, subsample_rate=config.subsample_rate, seed=seed)
    logger.error("Unsupported dataset configuration: %s", type(config).__name__)
    raise TypeError("Error, dataset configuration is not supported")


def resolve_x_set(config: ExperimentConfig, dataset: Dataset) -> tuple[int, ...]:
    """Values the losses are evaluated on."""
    match config.x_set:
        case XSetKind.TOP_K:
            return tuple(dataset.top_k(config.top_k))
        case XSetKind.ALL:
            return tuple(range(dataset.d))
        case XSetKind.EXPLICIT:
            if max(config.x_values) >= dataset.d:
                raise ConfigurationError(f"x_values: values must lie in [0, {dataset.d})")
            return config.x_values
    raise TypeError(f"unsupported x_set kind {config.x_set!r}")


def datagen(config: ExperimentConfig, out_dir: Path | None = None) -> Path:
    """Materialise the configured dataset into ``dataset.txt``."""
    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / DATASET_FILE
    save_dataset(path, materialize_dataset(config.dataset, config.seed))
    return path


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True, kw_only=True)
class RunResult:
    """
    Outcome of :func:`run`.

    Attributes:
        out_dir (Path): Directory holding the result files.
        trials (list[TrialMetrics]): Every trial, ordered by algorithm, epsilon and trial.
        summaries (list[LossSummary]): One row per algorithm and epsilon.
    """

    out_dir: Path
    trials: list[TrialMetrics]
    summaries: list[LossSummary]


def _run_trial(
    oracle: FrequencyOracle,
    values: np.ndarray,
    x_set: tuple[int, ...],
    truth: dict[int, float],
    rng: np.random.Generator,
    trial: int,
) -> TrialMetrics:
    reports = oracle.encode(values, rng)
    estimates = oracle.query(x_set, reports)
    return TrialMetrics(
        algorithm=oracle.algorithm,
        epsilon=oracle.epsilon,
        trial=trial,
        estimates={x: float(v) for x, v in zip(x_set, estimates, strict=True)},
        truth=truth,
        x_set=x_set,
    )


def _summarize(trials: list[TrialMetrics], n: int, f_max: float, f_star: float) -> list[LossSummary]:
    groups: dict[tuple[Algorithm, float], list[TrialMetrics]] = {}
    for trial in trials:
        groups.setdefault((trial.algorithm, trial.epsilon), []).append(trial)
    summaries = []
    for (algorithm, epsilon), group in groups.items():
        theory = theory_values(algorithm, epsilon, n, len(group[0].x_set), f_star=f_star, f_max=f_max)
        summaries.append(empirical_metrics(group, theory))
    return summaries


def _versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for package in ("ocms-ldp", "numpy", "scipy"):
        try:
            versions[package] = version(package)
        except PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def run(config: ExperimentConfig) -> RunResult:
    """
    Run every (algorithm, epsilon, trial) cell of an experiment and write the result files.

    Args:
        config (ExperimentConfig): The experiment.

    Returns:
        The trials and summaries that were written.

    Raises:
        TypeError: If ``config`` is not an ExperimentConfig.
        ConfigurationError: If the configuration does not fit the dataset.
    """
    if not isinstance(config, ExperimentConfig):
        logger.error("Unsupported configuration type passed to run: %s", type(config).__name__)
        raise TypeError("Error, run expects an ExperimentConfig")
    dataset = materialize_dataset(config.dataset, config.seed)
    x_set = resolve_x_set(config, dataset)
    frequencies = dataset.frequencies()
    truth = {x: float(frequencies[x]) for x in x_set}
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(out_dir / DATASET_FILE, dataset)

    cells = []
    for algorithm in config.algorithms:
        for eps_index, epsilon in enumerate(config.epsilons):
            oracle = make_oracle(algorithm, epsilon, dataset.d, f_star=config.f_star, clip=config.clip)
            cells.extend((oracle, eps_index, trial) for trial in range(config.trials))
    logger.info("Running %d trials on %s with %d workers", len(cells), dataset.name, config.workers)

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        futures = {
            (oracle.algorithm, eps_index, trial): pool.submit(
                _run_trial,
                oracle,
                dataset.values,
                x_set,
                truth,
                trial_rng(config.seed, oracle.algorithm, eps_index, trial),
                trial,
            )
            for oracle, eps_index, trial in cells
        }
        trials = [futures[key].result() for key in futures]

    summaries = _summarize(trials, dataset.n, float(frequencies.max()), config.f_star)
    write_trials_csv(out_dir / TRIALS_FILE, trials, dataset.n)
    write_estimates_csv(out_dir / ESTIMATES_FILE, trials)
    write_summary_csv(out_dir / SUMMARY_FILE, summaries)
    manifest = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "dataset": {"name": dataset.name, "d": dataset.d, "n": dataset.n, "f_max": float(frequencies.max())},
        "versions": _versions(),
        "files": [DATASET_FILE, TRIALS_FILE, ESTIMATES_FILE, SUMMARY_FILE],
    }
    (out_dir / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("Wrote %d trials and %d summary rows to %s", len(trials), len(summaries), out_dir)
    return RunResult(out_dir=out_dir, trials=trials, summaries=summaries)


def analyze(out_dir: str | Path) -> list[LossSummary]:
    """
    Recompute ``summary.csv`` from ``estimates.csv`` and ``manifest.json``.

    Raises:
        ConfigurationError: If the manifest is missing or malformed.
    """
    out_dir = Path(out_dir)
    try:
        manifest = json.loads((out_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
        config = ExperimentConfig.from_dict(manifest["config"])
        dataset = manifest["dataset"]
    except (FileNotFoundError, json.JSONDecodeError, KeyError) as err:
        logger.error("Cannot read the manifest in %s: %s", out_dir, err)
        raise ConfigurationError(f"manifest: {out_dir / MANIFEST_FILE} is missing or malformed") from None
    trials = read_estimates_csv(out_dir / ESTIMATES_FILE)
    summaries = _summarize(trials, dataset["n"], dataset["f_max"], config.f_star)
    write_summary_csv(out_dir / SUMMARY_FILE, summaries)
    logger.info("Recomputed %d summary rows in %s", len(summaries), out_dir)
    return summaries


def tables(
    d: int, epsilons: Sequence[float], n: int, algorithms: Sequence[Algorithm | str] | None = None
) -> list[dict]:
    """One row of closed-form precision and communication cost per algorithm and epsilon."""
    rows = []
    for label in algorithms or list(Algorithm):
        algorithm = Algorithm.parse(label)
        for epsilon in epsilons:
            row = theory_table(algorithm, d, epsilon, n)
            cost = comm_cost(algorithm, d, epsilon)
            rows.append(
                {
                    "algorithm": algorithm.value,
                    "epsilon": epsilon,
                    "d": d,
                    "n": n,
                    "l1": row.l1,
                    "l2": row.l2,
                    "mse_hat": row.mse_hat,
                    "mse_lower_bound": row.mse_lower_bound,
                    "asymptotic": row.asymptotic,
                    "small_d": row.small_d,
                    "comm_bits": cost.bits,
                    "comm_lower_bound": cost.lower_bound,
                }
            )
    return rows


def write_tables_csv(stream: TextIO, rows: Sequence[dict]) -> None:
    """Write table rows as CSV with a header line."""
    writer = csv.DictWriter(stream, fieldnames=TABLE_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
