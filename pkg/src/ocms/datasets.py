"""
Datasets for the frequency-estimation experiments.

Three sources are available: a Zipf(1/r^2) generator (optionally placing all
values in one residue class mod 16), a rounded and clamped Gaussian generator
and an ingester for the Kosarak click-stream transaction file. Datasets can be
stored in and read back from a small text format:

    d=<uint> n=<uint> name=<token>
    <value>
    ...
"""

import logging
import re
from dataclasses import dataclass
from enum import Enum, unique
from pathlib import Path

import numpy as np

import ocms._constants as consts
from .exceptions import ConfigurationError, DatasetError

logger = logging.getLogger(__name__)

_HEADER = re.compile(r"^d=(\d+) n=(\d+) name=(\S+)$")


@unique
class DatasetKind(Enum):
    """Dataset sources understood by the experiment runner."""

    ZIPF = "zipf"
    GAUSSIAN = "gaussian"
    KOSARAK = "kosarak"


@dataclass(frozen=True, kw_only=True, eq=False)
class Dataset:
    """
    Values held by n clients over a dictionary [0, d).

    Attributes:
        d (int): Dictionary size.
        values (np.ndarray): One value per client (int64).
        name (str): Label without whitespace.
    """

    d: int
    values: np.ndarray
    name: str

    def __post_init__(self):
        """Check the dataset invariants."""
        values = np.array(self.values, dtype=np.int64).ravel()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.d < 1 or values.size < 1:
            raise DatasetError("a dataset needs d >= 1 and at least one value")
        if int(values.min()) < 0 or int(values.max()) >= self.d:
            raise DatasetError(f"dataset values must lie in [0, {self.d})")
        if not self.name or re.search(r"\s", self.name):
            raise DatasetError(f"dataset name must be a non-empty token, got {self.name!r}")

    @property
    def n(self) -> int:
        """Number of values."""
        return int(self.values.size)

    def counts(self) -> np.ndarray:
        """Occurrences of every value in [0, d)."""
        return np.bincount(self.values, minlength=self.d)

    def frequencies(self) -> np.ndarray:
        """counts / n for every value in [0, d)."""
        return self.counts() / self.n

    def top_k(self, k: int) -> list[int]:
        """The k most frequent values, ties broken towards the smaller value."""
        if not 1 <= k <= self.d:
            raise ConfigurationError(f"top_k requires 1 <= k <= d, got k={k}")
        counts = self.counts()
        order = np.lexsort((np.arange(self.d), -counts))
        return [int(v) for v in order[:k]]


def gen_zipf(
    d: int, n: int, mod_aligned: bool = False, seed: int = 0, ranks: int | None = None
) -> Dataset:
    """
    Sample values whose rank r has probability proportional to 1/r^2.

    Rank r is placed at value r - 1, or at 16 (r - 1) when ``mod_aligned`` so that
    every value shares residue 0 for any block size up to 16.

    Args:
        d (int): Dictionary size.
        n (int): Number of values.
        mod_aligned (bool): Spread ranks 16 apart.
        seed (int): Random seed.
        ranks (int | None): Number of ranks; defaults to every rank whose value fits in [0, d).

    Returns:
        The dataset.

    Raises:
        ConfigurationError: If the ranks do not fit in the dictionary.
    """
    if d < 1 or n < 1:
        raise ConfigurationError("gen_zipf requires d >= 1 and n >= 1")
    stride = consts.MOD_ALIGNMENT if mod_aligned else 1
    if ranks is None:
        ranks = (d - 1) // stride + 1
    if ranks < 1 or stride * (ranks - 1) >= d:
        logger.error("%d ranks with stride %d do not fit in d=%d", ranks, stride, d)
        raise ConfigurationError(f"{ranks} ranks spaced {stride} apart exceed dictionary size {d}")
    weights = 1.0 / np.arange(1, ranks + 1, dtype=float) ** consts.ZIPF_EXPONENT
    rng = np.random.default_rng(seed)
    drawn = rng.choice(ranks, size=n, p=weights / weights.sum())
    name = f"zipf-aligned-d{d}" if mod_aligned else f"zipf-d{d}"
    logger.info("Generated %s with n=%d over %d ranks", name, n, ranks)
    return Dataset(d=d, values=drawn * stride, name=name)


def gen_gaussian(n: int, seed: int = 0, sigma: float = consts.GAUSSIAN_SIGMA) -> Dataset:
    """
    Sample rounded normals around a hidden integer mean, clamped to [0, 10000].

    The mean is drawn uniformly from [1000, 9000] with the same seed; the
    dictionary has 10001 values.
    """
    if n < 1 or sigma < 0:
        raise ConfigurationError("gen_gaussian requires n >= 1 and sigma >= 0")
    rng = np.random.default_rng(seed)
    mean = int(rng.integers(consts.GAUSSIAN_MEAN_LOW, consts.GAUSSIAN_MEAN_HIGH, endpoint=True))
    samples = np.rint(rng.normal(mean, sigma, size=n))
    values = np.clip(samples, 0, consts.GAUSSIAN_DOMAIN - 1).astype(np.int64)
    logger.info("Generated gaussian dataset with n=%d", n)
    return Dataset(d=consts.GAUSSIAN_DOMAIN, values=values, name="gaussian")


def ingest_kosarak(
    path: str | Path, subsample_rate: float = consts.KOSARAK_SUBSAMPLE_RATE, seed: int = 0
) -> Dataset:
    """
    Read a transaction file and keep each item occurrence with probability ``subsample_rate``.

    Item IDs are remapped to a dense dictionary in increasing ID order; d counts
    the distinct items of the whole file, sampled or not.

    Raises:
        ConfigurationError: If the rate is outside (0, 1].
        DatasetError: If a line does not parse or nothing is kept.
    """
    if not 0 < subsample_rate <= 1:
        raise ConfigurationError(f"subsample_rate must lie in (0, 1], got {subsample_rate}")
    entries: list[int] = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            try:
                items = [int(token) for token in line.split()]
            except ValueError:
                logger.error("Unparseable transaction on line %d of %s", line_number, path)
                raise DatasetError(f"line {line_number}: expected whitespace-separated integers") from None
            if any(item < 1 for item in items):
                raise DatasetError(f"line {line_number}: item IDs must be positive integers")
            entries.extend(items)
    stream = np.asarray(entries, dtype=np.int64)
    if stream.size == 0:
        raise DatasetError(f"{path} holds no items")
    distinct, dense = np.unique(stream, return_inverse=True)
    keep = np.random.default_rng(seed).random(stream.size) < subsample_rate
    if not keep.any():
        raise DatasetError("subsampling kept no entries")
    logger.info("Kept %d of %d entries over %d distinct items", int(keep.sum()), stream.size, distinct.size)
    return Dataset(d=int(distinct.size), values=dense[keep], name="kosarak")


def save_dataset(path: str | Path, dataset: Dataset) -> None:
    """Write ``dataset`` in the text format described in the module docstring."""
    lines = [f"d={dataset.d} n={dataset.n} name={dataset.name}"]
    lines.extend(str(int(v)) for v in dataset.values)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote dataset %s to %s", dataset.name, path)


def load_dataset(path: str | Path) -> Dataset:
    """
    Read a dataset written by :func:`save_dataset`.

    Raises:
        DatasetError: If the header or a value line is malformed or n disagrees.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = _HEADER.match(lines[0]) if lines else None
    if header is None:
        raise DatasetError(f"{path}: line 1 must read 'd=<uint> n=<uint> name=<token>'")
    d, n, name = int(header.group(1)), int(header.group(2)), header.group(3)
    values = []
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.isdigit():
            raise DatasetError(f"{path}: line {line_number} is not an unsigned integer")
        values.append(int(line))
    if len(values) != n:
        raise DatasetError(f"{path}: header announces {n} values, found {len(values)}")
    return Dataset(d=d, values=np.asarray(values, dtype=np.int64), name=name)
