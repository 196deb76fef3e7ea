"""
Unit tests for ocms.runner.

Coverage areas
--------------
- Oracle construction for every runnable algorithm
- Keyed trial random streams
- Dataset materialisation and x_set resolution
- Experiment runs: result files, determinism, manifest and re-analysis
- Closed-form tables
"""

import csv
import io
import json

import numpy as np
import pytest

from ocms.analysis import Algorithm, read_summary_csv
from ocms.config import DatasetConfig, ExperimentConfig, GaussianConfig, KosarakConfig, XSetKind, ZipfConfig
from ocms.datasets import Dataset, load_dataset
from ocms.exceptions import ConfigurationError
from ocms.runner import (
    DATASET_FILE,
    ESTIMATES_FILE,
    MANIFEST_FILE,
    SUMMARY_FILE,
    TABLE_FIELDS,
    TRIALS_FILE,
    CmsHeOracle,
    HadamardOracle,
    OcmsOracle,
    RhrOracle,
    analyze,
    datagen,
    make_oracle,
    materialize_dataset,
    resolve_x_set,
    run,
    tables,
    trial_rng,
    write_tables_csv,
)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class TestOracles:
    @pytest.mark.parametrize(
        ("label", "cls"),
        [
            ("MSE-OCMS+RR", OcmsOracle),
            ("L-OCMS+RR", OcmsOracle),
            ("OLH", OcmsOracle),
            ("HE", HadamardOracle),
            ("RHR", RhrOracle),
            ("CMS+HE", CmsHeOracle),
        ],
    )
    def test_every_runnable_algorithm(self, label, cls, rng):
        oracle = make_oracle(label, 3.0, 64)
        assert isinstance(oracle, cls)
        assert cls.__doc__
        assert oracle.algorithm is Algorithm.parse(label)
        values = rng.choice([1, 2], size=20_000, p=[0.8, 0.2])
        estimates = oracle.query([1, 2, 3], oracle.encode(values, rng))
        assert estimates == pytest.approx([0.8, 0.2, 0.0], abs=0.08)

    @pytest.mark.parametrize(("epsilon", "bits"), [(0.4, 1), (1.0, 1), (2.6, 3), (4.0, 4)])
    def test_rhr_block_bits(self, epsilon, bits):
        assert make_oracle(Algorithm.RHR, epsilon, 64).params.b == bits

    def test_ranges_follow_the_algorithm(self):
        assert make_oracle(Algorithm.OCMS_MSE, 2.0, 100).params.m == 4
        assert make_oracle(Algorithm.OLH, 2.0, 100).params.m == 8

    def test_clip(self, rng):
        oracle = make_oracle(Algorithm.HE, 0.5, 16, clip=True)
        estimates = oracle.query(range(16), oracle.encode(rng.integers(0, 16, size=50), rng))
        assert np.all((estimates >= 0.0) & (estimates <= 1.0))

    @pytest.mark.parametrize("algorithm", [Algorithm.SS, Algorithm.RP, Algorithm.ARP])
    def test_analytic_only_algorithms_raise(self, algorithm):
        with pytest.raises(ConfigurationError):
            make_oracle(algorithm, 1.0, 10)

    def test_ocms_oracle_rejects_other_algorithms(self):
        with pytest.raises(ConfigurationError):
            OcmsOracle(algorithm=Algorithm.HE, epsilon=1.0, d=10)


class TestTrialRng:
    def test_same_key_same_stream(self):
        first = trial_rng(3, Algorithm.HE, 0, 5).random(4)
        second = trial_rng(3, Algorithm.HE, 0, 5).random(4)
        assert np.array_equal(first, second)

    @pytest.mark.parametrize("other", [(4, Algorithm.HE, 0, 5), (3, Algorithm.RHR, 0, 5), (3, Algorithm.HE, 1, 5)])
    def test_different_keys_differ(self, other):
        assert not np.array_equal(trial_rng(3, Algorithm.HE, 0, 5).random(4), trial_rng(*other).random(4))


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


class TestMaterialize:
    def test_zipf(self):
        dataset = materialize_dataset(ZipfConfig(d=50, n=100), seed=1)
        assert (dataset.d, dataset.n) == (50, 100)

    def test_gaussian(self):
        assert materialize_dataset(GaussianConfig(n=10), seed=1).d == 10001

    def test_kosarak(self, tmp_path):
        path = tmp_path / "k.dat"
        path.write_text("1 2\n3\n", encoding="utf-8")
        dataset = materialize_dataset(KosarakConfig(kosarak_path=path, subsample_rate=1.0), seed=1)
        assert dataset.n == 3

    def test_unsupported_config_raises(self):
        with pytest.raises(TypeError):
            materialize_dataset(DatasetConfig(), seed=1)

    def test_datagen_writes_dataset(self, zipf_config, tmp_path):
        path = datagen(zipf_config, tmp_path / "data")
        assert path.name == DATASET_FILE
        assert load_dataset(path).n == 1000


class TestResolveXSet:
    @pytest.fixture()
    def dataset(self):
        return Dataset(d=6, values=[5, 5, 2, 2, 2, 0], name="toy")

    def test_top_k(self, zipf_config, dataset):
        zipf_config.top_k = 2
        assert resolve_x_set(zipf_config, dataset) == (2, 5)

    def test_all(self, zipf_config, dataset):
        zipf_config.x_set = XSetKind.ALL
        assert resolve_x_set(zipf_config, dataset) == tuple(range(6))

    def test_explicit(self, zipf_config, dataset):
        zipf_config.x_set = XSetKind.EXPLICIT
        zipf_config.x_values = (4, 1)
        assert resolve_x_set(zipf_config, dataset) == (4, 1)

    def test_explicit_outside_dictionary_raises(self, zipf_config, dataset):
        zipf_config.x_set = XSetKind.EXPLICIT
        zipf_config.x_values = (6,)
        with pytest.raises(ConfigurationError):
            resolve_x_set(zipf_config, dataset)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


class TestRun:
    def test_writes_result_files(self, zipf_config):
        result = run(zipf_config)
        out = zipf_config.output_dir
        for name in (DATASET_FILE, TRIALS_FILE, ESTIMATES_FILE, SUMMARY_FILE, MANIFEST_FILE):
            assert (out / name).is_file()
        with open(out / TRIALS_FILE, newline="", encoding="utf-8") as handle:
            assert len(list(csv.DictReader(handle))) == 2
        summaries = read_summary_csv(out / SUMMARY_FILE)
        assert summaries == result.summaries
        assert len(summaries) == 1
        summary = summaries[0]
        assert summary.algorithm == "OCMS_MSE"
        assert summary.theory_mse > 0
        assert summary.mse_upper_bound > summary.theory_mse

    def test_manifest(self, zipf_config):
        run(zipf_config)
        manifest = json.loads((zipf_config.output_dir / MANIFEST_FILE).read_text(encoding="utf-8"))
        assert manifest["config_hash"] == zipf_config.config_hash()
        assert manifest["seed"] == 7
        assert manifest["dataset"]["n"] == 1000
        assert {"python", "numpy", "scipy"} <= set(manifest["versions"])
        assert ExperimentConfig.from_dict(manifest["config"]) == zipf_config

    def test_same_seed_same_summary_regardless_of_workers(self, zipf_config, tmp_path):
        zipf_config.algorithms = (Algorithm.OCMS_MSE, Algorithm.HE)
        run(zipf_config)
        first = (zipf_config.output_dir / SUMMARY_FILE).read_bytes()
        zipf_config.output_dir = tmp_path / "again"
        zipf_config.workers = 3
        run(zipf_config)
        assert (zipf_config.output_dir / SUMMARY_FILE).read_bytes() == first

    def test_trials_are_ordered(self, zipf_config):
        zipf_config.epsilons = (1.0, 2.0)
        zipf_config.workers = 2
        result = run(zipf_config)
        keys = [(t.epsilon, t.trial) for t in result.trials]
        assert keys == [(1.0, 0), (1.0, 1), (2.0, 0), (2.0, 1)]

    def test_analyze_recomputes_summary(self, zipf_config):
        result = run(zipf_config)
        summary_path = zipf_config.output_dir / SUMMARY_FILE
        written = summary_path.read_bytes()
        summary_path.unlink()
        assert analyze(zipf_config.output_dir) == result.summaries
        assert summary_path.read_bytes() == written

    def test_analyze_without_manifest_raises(self, tmp_path):
        with pytest.raises(ConfigurationError):
            analyze(tmp_path)

    def test_wrong_config_type_raises(self):
        with pytest.raises(TypeError):
            run({"dataset": "zipf"})


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------


class TestTables:
    def test_every_algorithm_and_epsilon(self):
        rows = tables(10**4, [1.0, 2.0], 1000)
        assert len(rows) == 2 * len(Algorithm)
        assert all(tuple(row) == TABLE_FIELDS for row in rows)

    def test_selected_algorithms(self):
        rows = tables(2**20, [2.0], 1, ["MSE-OCMS+RR", "RHR"])
        assert [row["comm_bits"] for row in rows] == pytest.approx([41.0, 22.0])

    def test_csv_output(self):
        stream = io.StringIO()
        write_tables_csv(stream, tables(100, [1.0], 10, ["HE"]))
        lines = stream.getvalue().splitlines()
        assert lines[0] == ",".join(TABLE_FIELDS)
        assert lines[1].startswith("HE,1.0,100,10,")
