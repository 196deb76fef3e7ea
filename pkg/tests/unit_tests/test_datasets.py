"""
Unit tests for ocms.datasets.

Coverage areas
--------------
- Dataset invariants, counts and top-k selection
- Zipf, Gaussian and Kosarak sources
- The text file format
"""

import math

import numpy as np
import pytest

from ocms.datasets import Dataset, gen_gaussian, gen_zipf, ingest_kosarak, load_dataset, save_dataset
from ocms.exceptions import ConfigurationError, DatasetError


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


class TestDataset:
    def test_counts_and_frequencies(self):
        dataset = Dataset(d=4, values=[0, 2, 2, 3], name="toy")
        assert dataset.n == 4
        assert dataset.counts().tolist() == [1, 0, 2, 1]
        assert dataset.frequencies().tolist() == [0.25, 0.0, 0.5, 0.25]

    def test_top_k_breaks_ties_towards_smaller_value(self):
        dataset = Dataset(d=5, values=[4, 4, 1, 3, 3, 0], name="toy")
        assert dataset.top_k(3) == [3, 4, 0]
        assert dataset.top_k(5) == [3, 4, 0, 1, 2]

    def test_values_are_copied_and_read_only(self):
        source = np.array([1, 2, 3])
        dataset = Dataset(d=4, values=source, name="toy")
        source[0] = 0
        assert dataset.values[0] == 1
        with pytest.raises(ValueError):
            dataset.values[0] = 2

    @pytest.mark.parametrize(
        ("d", "values", "name"),
        [(4, [4], "toy"), (4, [-1], "toy"), (4, [], "toy"), (0, [0], "toy"), (4, [1], "two words"), (4, [1], "")],
    )
    def test_invalid_dataset_raises(self, d, values, name):
        with pytest.raises(DatasetError):
            Dataset(d=d, values=values, name=name)

    def test_top_k_out_of_range_raises(self):
        with pytest.raises(ConfigurationError):
            Dataset(d=3, values=[0], name="toy").top_k(4)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


class TestZipf:
    def test_first_rank_probability(self):
        n = 100_000
        dataset = gen_zipf(3, n, seed=4)
        p = 36 / 49
        rate = float(np.mean(dataset.values == 0))
        assert abs(rate - p) < 3 * math.sqrt(p * (1 - p) / n)

    def test_same_seed_same_values(self):
        assert np.array_equal(gen_zipf(100, 500, seed=9).values, gen_zipf(100, 500, seed=9).values)

    def test_aligned_values_share_residue(self):
        dataset = gen_zipf(1000, 5000, mod_aligned=True, seed=1)
        assert dataset.name == "zipf-aligned-d1000"
        assert np.all(dataset.values % 16 == 0)

    def test_name_and_size(self):
        dataset = gen_zipf(50, 20, seed=1)
        assert (dataset.name, dataset.d, dataset.n) == ("zipf-d50", 50, 20)

    def test_explicit_ranks(self):
        dataset = gen_zipf(100, 1000, seed=2, ranks=3)
        assert set(np.unique(dataset.values)) <= {0, 1, 2}

    def test_ranks_exceeding_dictionary_raise(self):
        with pytest.raises(ConfigurationError):
            gen_zipf(40, 10, mod_aligned=True, ranks=4)


class TestGaussian:
    def test_values_cluster_around_hidden_mean(self):
        dataset = gen_gaussian(10_000, seed=3)
        assert dataset.d == 10001
        assert dataset.name == "gaussian"
        centre = float(np.mean(dataset.values))
        assert 1000 - 5 <= centre <= 9000 + 5
        assert float(np.std(dataset.values)) == pytest.approx(50.0, rel=0.05)

    def test_zero_spread_gives_single_value(self):
        dataset = gen_gaussian(100, seed=3, sigma=0.0)
        assert np.unique(dataset.values).size == 1

    def test_invalid_arguments_raise(self):
        with pytest.raises(ConfigurationError):
            gen_gaussian(0)


class TestKosarak:
    def test_full_rate_keeps_every_entry(self, tmp_path):
        path = tmp_path / "kosarak.dat"
        path.write_text("1 2 3\n2 4\n", encoding="utf-8")
        dataset = ingest_kosarak(path, subsample_rate=1.0)
        assert (dataset.n, dataset.d) == (5, 4)
        assert dataset.values.tolist() == [0, 1, 2, 1, 3]

    def test_ids_are_remapped_densely(self, tmp_path):
        path = tmp_path / "kosarak.dat"
        path.write_text("1000 7\n\n7\n", encoding="utf-8")
        dataset = ingest_kosarak(path, subsample_rate=1.0)
        assert dataset.d == 2
        assert dataset.values.tolist() == [1, 0, 0]

    def test_subsampling_rate(self, tmp_path):
        path = tmp_path / "kosarak.dat"
        path.write_text("\n".join(" ".join(str(i) for i in range(1, 101)) for _ in range(100)), encoding="utf-8")
        dataset = ingest_kosarak(path, subsample_rate=0.1, seed=5)
        assert abs(dataset.n - 1000) < 4 * math.sqrt(10_000 * 0.1 * 0.9)
        assert dataset.d == 100

    def test_malformed_line_raises(self, tmp_path):
        path = tmp_path / "kosarak.dat"
        path.write_text("1 2\n3 x\n", encoding="utf-8")
        with pytest.raises(DatasetError, match="line 2"):
            ingest_kosarak(path, subsample_rate=1.0)

    def test_non_positive_id_raises(self, tmp_path):
        path = tmp_path / "kosarak.dat"
        path.write_text("0 1\n", encoding="utf-8")
        with pytest.raises(DatasetError):
            ingest_kosarak(path, subsample_rate=1.0)

    @pytest.mark.parametrize("rate", [0.0, 1.5])
    def test_invalid_rate_raises(self, tmp_path, rate):
        with pytest.raises(ConfigurationError):
            ingest_kosarak(tmp_path / "missing.dat", subsample_rate=rate)

    def test_empty_file_raises(self, tmp_path):
        path = tmp_path / "kosarak.dat"
        path.write_text("\n", encoding="utf-8")
        with pytest.raises(DatasetError):
            ingest_kosarak(path)


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


class TestDatasetFile:
    def test_save_then_load(self, tmp_path):
        original = gen_zipf(100, 300, seed=6)
        path = tmp_path / "dataset.txt"
        save_dataset(path, original)
        assert path.read_text(encoding="utf-8").splitlines()[0] == "d=100 n=300 name=zipf-d100"
        loaded = load_dataset(path)
        assert (loaded.d, loaded.name) == (original.d, original.name)
        assert np.array_equal(loaded.values, original.values)

    @pytest.mark.parametrize(
        "content",
        ["", "d=4 n=2\n1\n2\n", "d=4 n=2 name=toy\n1\n", "d=4 n=2 name=toy\n1\n-2\n", "d=4 n=1 name=toy\n9\n"],
    )
    def test_malformed_file_raises(self, tmp_path, content):
        path = tmp_path / "dataset.txt"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(DatasetError):
            load_dataset(path)
