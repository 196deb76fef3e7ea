"""
Experiment configurations.

An experiment is described by one flat JSON document. The dataset keys are
gathered into a dataset configuration whose class selects the source, the
remaining keys fill :class:`ExperimentConfig`.
"""

import hashlib
import json
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from enum import Enum, unique
from pathlib import Path
from typing import Any, ClassVar

import ocms._constants as consts
from .analysis import Algorithm
from .datasets import DatasetKind
from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)


@unique
class XSetKind(Enum):
    """Which values the losses are evaluated on."""

    TOP_K = "top_k"
    ALL = "all"
    EXPLICIT = "explicit"


@dataclass(kw_only=True)
class DatasetConfig:
    """
    Generic dataset configuration.

    Attributes:
        kind (DatasetKind): Dataset source, fixed by the subclass.
    """

    kind: ClassVar[DatasetKind]

    def to_dict(self) -> dict[str, Any]:
        """Flat mapping of the dataset keys, as accepted by ExperimentConfig.from_dict."""
        raise NotImplementedError


@dataclass(kw_only=True)
class ZipfConfig(DatasetConfig):
    """
    Zipf(1/r^2) dataset.

    Attributes:
        d (int): Dictionary size.
        n (int): Number of clients.
        mod_aligned (bool): Place every rank in residue class 0 mod 16.
    """

    kind: ClassVar[DatasetKind] = DatasetKind.ZIPF
    d: int
    n: int
    mod_aligned: bool = False

    def to_dict(self) -> dict[str, Any]:
        """Flat mapping of the dataset keys."""
        return {"dataset": self.kind.value, "d": self.d, "n": self.n, "mod_aligned": self.mod_aligned}


@dataclass(kw_only=True)
class GaussianConfig(DatasetConfig):
    """
    Rounded Gaussian dataset over [0, 10000].

    Attributes:
        n (int): Number of clients.
        sigma (float): Standard deviation.
    """

    kind: ClassVar[DatasetKind] = DatasetKind.GAUSSIAN
    n: int
    sigma: float = consts.GAUSSIAN_SIGMA

    def to_dict(self) -> dict[str, Any]:
        """Flat mapping of the dataset keys."""
        return {"dataset": self.kind.value, "n": self.n, "sigma": self.sigma}


@dataclass(kw_only=True)
class KosarakConfig(DatasetConfig):
    """
    Subsampled Kosarak click-stream.

    Attributes:
        kosarak_path (Path): Transaction file.
        subsample_rate (float): Probability of keeping an item occurrence.
    """

    kind: ClassVar[DatasetKind] = DatasetKind.KOSARAK
    kosarak_path: Path
    subsample_rate: float = consts.KOSARAK_SUBSAMPLE_RATE

    def to_dict(self) -> dict[str, Any]:
        """Flat mapping of the dataset keys."""
        return {
            "dataset": self.kind.value,
            "kosarak_path": str(self.kosarak_path),
            "subsample_rate": self.subsample_rate,
        }


_DATASET_KEYS = {
    DatasetKind.ZIPF: ("d", "n", "mod_aligned"),
    DatasetKind.GAUSSIAN: ("n", "sigma"),
    DatasetKind.KOSARAK: ("kosarak_path", "subsample_rate"),
}
_EXPERIMENT_KEYS = (
    "algorithms",
    "epsilons",
    "trials",
    "x_set",
    "top_k",
    "x_values",
    "f_star",
    "seed",
    "clip",
    "output_dir",
    "workers",
)


def _fail(key: str, reason: str) -> ConfigurationError:
    logger.error("Invalid configuration field %s: %s", key, reason)
    return ConfigurationError(f"{key}: {reason}")


def _integer(mapping: Mapping[str, Any], key: str, minimum: int) -> int:
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise _fail(key, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _real(mapping: Mapping[str, Any], key: str) -> float:
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise _fail(key, f"expected a finite number, got {value!r}")
    return float(value)


def _flag(mapping: Mapping[str, Any], key: str) -> bool:
    value = mapping[key]
    if not isinstance(value, bool):
        raise _fail(key, f"expected true or false, got {value!r}")
    return value


def _dataset_from_dict(mapping: Mapping[str, Any]) -> DatasetConfig:
    try:
        kind = DatasetKind(mapping["dataset"])
    except KeyError:
        raise _fail("dataset", "missing") from None
    except ValueError:
        raise _fail("dataset", f"expected one of {[k.value for k in DatasetKind]}") from None
    for key in _DATASET_KEYS[kind]:
        if key not in mapping and key in ("d", "n", "kosarak_path"):
            raise _fail(key, f"required for the {kind.value} dataset")
    match kind:
        case DatasetKind.ZIPF:
            return ZipfConfig(
                d=_integer(mapping, "d", 1),
                n=_integer(mapping, "n", 1),
                mod_aligned=_flag(mapping, "mod_aligned") if "mod_aligned" in mapping else False,
            )
        case DatasetKind.GAUSSIAN:
            sigma = _real(mapping, "sigma") if "sigma" in mapping else consts.GAUSSIAN_SIGMA
            if sigma < 0:
                raise _fail("sigma", "must be non-negative")
            return GaussianConfig(n=_integer(mapping, "n", 1), sigma=sigma)
        case DatasetKind.KOSARAK:
            rate = _real(mapping, "subsample_rate") if "subsample_rate" in mapping else consts.KOSARAK_SUBSAMPLE_RATE
            return KosarakConfig(kosarak_path=Path(mapping["kosarak_path"]), subsample_rate=rate)
    raise TypeError(f"unsupported dataset kind {kind!r}")


@dataclass(kw_only=True)
class ExperimentConfig:
    """
    A complete experiment.

    Attributes:
        dataset (DatasetConfig): Dataset source and its parameters.
        algorithms (tuple[Algorithm, ...]): Algorithms to compare.
        epsilons (tuple[float, ...]): Privacy factors.
        trials (int): Repetitions per algorithm and privacy factor.
        x_set (XSetKind): How the evaluated values are chosen.
        top_k (int): K for ``XSetKind.TOP_K``.
        x_values (tuple[int, ...]): Values for ``XSetKind.EXPLICIT``.
        f_star (float): Prior upper bound on any frequency for MSE-optimal sketches.
        seed (int): Unsigned 64-bit seed of every random stream.
        clip (bool): Clamp estimates to [0, 1].
        output_dir (Path): Where result files are written.
        workers (int): Size of the trial thread pool.
    """

    dataset: DatasetConfig
    algorithms: tuple[Algorithm, ...]
    epsilons: tuple[float, ...] = consts.DEFAULT_EPSILONS
    trials: int = consts.DEFAULT_TRIALS
    x_set: XSetKind = XSetKind.TOP_K
    top_k: int = consts.DEFAULT_TOP_K
    x_values: tuple[int, ...] = field(default=())
    f_star: float = 1.0
    seed: int = 0
    clip: bool = False
    output_dir: Path = Path("results")
    workers: int = 1

    def __post_init__(self):
        """Check the cross-field invariants."""
        if not isinstance(self.dataset, DatasetConfig):
            raise TypeError("dataset must be a DatasetConfig")
        if not self.algorithms:
            raise _fail("algorithms", "at least one algorithm is required")
        for algorithm in self.algorithms:
            if not algorithm.runnable:
                raise _fail("algorithms", f"{algorithm.value} has no client/server implementation")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise _fail("algorithms", f"duplicate entries in {[a.value for a in self.algorithms]}")
        if not self.epsilons or any(not (eps > 0 and math.isfinite(eps)) for eps in self.epsilons):
            raise _fail("epsilons", "a non-empty list of positive finite numbers is required")
        if len(set(self.epsilons)) != len(self.epsilons):
            raise _fail("epsilons", f"duplicate entries in {list(self.epsilons)}")
        if self.trials < 1:
            raise _fail("trials", "must be at least 1")
        if self.top_k < 1:
            raise _fail("top_k", "must be at least 1")
        if isinstance(self.dataset, ZipfConfig) and self.x_set is XSetKind.TOP_K and self.top_k > self.dataset.d:
            raise _fail("top_k", f"K={self.top_k} exceeds d={self.dataset.d}")
        if self.x_set is XSetKind.EXPLICIT and not self.x_values:
            raise _fail("x_values", "required when x_set is explicit")
        if not 0.0 <= self.f_star <= 1.0:
            raise _fail("f_star", "must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise _fail("seed", "must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise _fail("workers", "must be at least 1")

    @classmethod
    def from_dict(cls, mapping: Mapping[str, Any]) -> "ExperimentConfig":
        """
        Build a configuration from flat keys.

        Raises:
            ConfigurationError: On unknown keys or invalid values; the message names the key.
        """
        dataset = _dataset_from_dict(mapping)
        allowed = {"dataset", *_DATASET_KEYS[dataset.kind], *_EXPERIMENT_KEYS}
        for key in mapping:
            if key not in allowed:
                raise _fail(key, "unknown key")
        if "algorithms" not in mapping:
            raise _fail("algorithms", "missing")
        labels = mapping["algorithms"]
        if isinstance(labels, str) or not isinstance(labels, list):
            raise _fail("algorithms", "expected a list of labels")
        try:
            algorithms = tuple(Algorithm.parse(label) for label in labels)
        except ConfigurationError as err:
            raise _fail("algorithms", str(err)) from None
        options: dict[str, Any] = {}
        if "epsilons" in mapping:
            epsilons = mapping["epsilons"]
            if not isinstance(epsilons, list):
                raise _fail("epsilons", "expected a list of numbers")
            options["epsilons"] = tuple(_real({"epsilons": eps}, "epsilons") for eps in epsilons)
        if "x_set" in mapping:
            try:
                options["x_set"] = XSetKind(mapping["x_set"])
            except ValueError:
                raise _fail("x_set", f"expected one of {[k.value for k in XSetKind]}") from None
        if "x_values" in mapping:
            values = mapping["x_values"]
            if not isinstance(values, list):
                raise _fail("x_values", "expected a list of integers")
            options["x_values"] = tuple(_integer({"x_values": x}, "x_values", 0) for x in values)
        for key, minimum in (("trials", 1), ("top_k", 1), ("seed", 0), ("workers", 1)):
            if key in mapping:
                options[key] = _integer(mapping, key, minimum)
        if "f_star" in mapping:
            options["f_star"] = _real(mapping, "f_star")
        if "clip" in mapping:
            options["clip"] = _flag(mapping, "clip")
        if "output_dir" in mapping:
            options["output_dir"] = Path(mapping["output_dir"])
        return cls(dataset=dataset, algorithms=algorithms, **options)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        """Load a configuration file; a malformed document raises ConfigurationError."""
        try:
            document = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise _fail("config", f"{path} is not valid JSON ({err.msg} at line {err.lineno})") from None
        if not isinstance(document, dict):
            raise _fail("config", f"{path} must hold a JSON object")
        logger.info("Loaded experiment configuration from %s", path)
        return cls.from_dict(document)

    def to_dict(self) -> dict[str, Any]:
        """Canonical flat mapping, suitable for JSON and accepted by :meth:`from_dict`."""
        mapping = self.dataset.to_dict()
        mapping.update(
            algorithms=[a.value for a in self.algorithms],
            epsilons=list(self.epsilons),
            trials=self.trials,
            x_set=self.x_set.value,
            top_k=self.top_k,
            x_values=list(self.x_values),
            f_star=self.f_star,
            seed=self.seed,
            clip=self.clip,
            output_dir=str(self.output_dir),
            workers=self.workers,
        )
        return mapping

    def config_hash(self) -> str:
        """sha256 of the sorted-key compact JSON of the result-determining keys."""
        mapping = self.to_dict()
        del mapping["output_dir"], mapping["workers"]
        canonical = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
