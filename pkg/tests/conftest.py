"""Shared pytest fixtures for the ocms-ldp test suite.

Fixtures
--------
rng
    A seeded ``numpy.random.Generator``.  Every test that draws random
    numbers takes it so that runs are reproducible.

tiny_prime_field / tiny_binary_field
    The prime field of order 7 and GF(2^3).  Small enough for exhaustive
    enumeration of the hashing family.

small_params
    OCMS+RR parameters for a 100-value dictionary at epsilon = 2.

zipf_config
    A minimal ``ExperimentConfig`` writing into ``tmp_path``.

kosarak_path
    Path to the Kosarak transaction file.  The test is skipped when the
    ``KOSARAK_PATH`` environment variable is not set.
"""

from os import getenv
from pathlib import Path

import numpy as np
import pytest

from ocms import Algorithm, EstimatorMode, EstimatorParams, ExperimentConfig, FieldSpec, ZipfConfig


# ---------------------------------------------------------------------------
# Randomness and fields
# ---------------------------------------------------------------------------


@pytest.fixture()
def rng():
    """Return a Generator with a fixed seed."""
    return np.random.default_rng(20240607)


@pytest.fixture()
def tiny_prime_field():
    return FieldSpec.prime(7)


@pytest.fixture()
def tiny_binary_field():
    return FieldSpec.binary(3)


# ---------------------------------------------------------------------------
# Estimator parameters and configurations
# ---------------------------------------------------------------------------


@pytest.fixture()
def small_params():
    """MSE-optimal parameters for d = 100 at epsilon = 2 on the default prime field."""
    return EstimatorParams.create(epsilon=2.0, d=100, mode=EstimatorMode.MSE_OPT)


@pytest.fixture()
def zipf_config(tmp_path):
    """Two trials of one algorithm at one epsilon on a 100-value Zipf dataset."""
    return ExperimentConfig(
        dataset=ZipfConfig(d=100, n=1000),
        algorithms=(Algorithm.OCMS_MSE,),
        epsilons=(2.0,),
        trials=2,
        top_k=10,
        seed=7,
        output_dir=tmp_path / "out",
    )


# ---------------------------------------------------------------------------
# Dataset fixture, requires the Kosarak file
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def kosarak_path():
    """Return the Kosarak transaction file.

    The test module is skipped entirely when ``KOSARAK_PATH`` is not set in
    the environment.  Run the Kosarak reproduction with::

        KOSARAK_PATH=/data/kosarak.dat uv run pytest -m kosarak
    """
    path = getenv("KOSARAK_PATH")
    if not path:
        pytest.skip("KOSARAK_PATH environment variable not set; skipping Kosarak tests")
    return Path(path)
