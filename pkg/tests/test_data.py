import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from qvit import data
from qvit import train as tr


class TestGeneration:
    def test_balanced_classes(self):
        _, _, labels = data.generate_samples(100, 8, seed=0)
        assert int(np.sum(labels == 0)) == 50
        assert int(np.sum(labels == 1)) == 50

    def test_images_nonnegative_with_energy(self):
        images, aux, _ = data.generate_samples(60, 16, seed=1)
        assert images.min() >= 0.0
        assert np.all(images.reshape(60, -1).max(axis=1) > 0.0)
        assert np.all(np.isfinite(aux)) and aux.min() > 0.0

    def test_generation_deterministic(self):
        a = data.generate_samples(30, 8, seed=7)
        b = data.generate_samples(30, 8, seed=7)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)

    def test_dataset_files_byte_identical_across_runs(self, tmp_path):
        data.generate_dataset(str(tmp_path / "a"), 40, 8, seed=3)
        data.generate_dataset(str(tmp_path / "b"), 40, 8, seed=3)
        for name in ("manifest", "images.bin", "aux.bin", "labels.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes()

    def test_rejects_tiny_requests(self):
        with pytest.raises(ValueError):
            data.generate_samples(5, 8, seed=0)


class TestSplits:
    def test_canonical_fractions(self):
        assert data.split_counts(100) == (70, 15, 15)

    def test_small_n_rounding(self):
        # floor the train and val fractions; the test split absorbs the rest
        assert data.split_counts(10) == (7, 1, 2)

    def test_disjoint_and_exhaustive(self):
        for n in (10, 33, 100, 257):
            idx_train, idx_val, idx_test = data.split_indices(n, seed=5)
            merged = np.concatenate([idx_train, idx_val, idx_test])
            assert len(merged) == n
            assert len(np.unique(merged)) == n

    def test_split_dataset_wrapper(self):
        train, val, test = data.split_dataset(list(range(20)), seed=2)
        assert len(train) == 14 and len(val) == 3 and len(test) == 3
        assert sorted(train + val + test) == list(range(20))

    def test_rejects_fewer_than_ten(self):
        with pytest.raises(ValueError):
            data.split_indices(9, seed=0)


class TestMinMax:
    def test_worked_example(self):
        params = data.fit_minmax(np.array([[10.0, 1.0], [20.0, 2.0], [30.0, 3.0]]))
        scaled = data.apply_minmax(np.array([[10.0, 1.0], [20.0, 2.0], [30.0, 3.0]]), params)
        np.testing.assert_allclose(scaled[:, 0], [0.0, 0.5, 1.0], atol=0)

    def test_out_of_range_not_clamped(self):
        params = data.fit_minmax(np.array([[10.0, 0.0], [30.0, 1.0]]))
        scaled = data.apply_minmax(np.array([35.0, 0.5]), params)
        assert scaled[0] == pytest.approx(1.25)

    def test_train_extremes_map_exactly(self):
        rng = np.random.default_rng(0)
        feats = rng.lognormal(3.0, 0.5, size=(50, 2))
        params = data.fit_minmax(feats)
        scaled = data.apply_minmax(feats, params)
        assert scaled.min(axis=0) == pytest.approx([0.0, 0.0], abs=0)
        assert scaled.max(axis=0) == pytest.approx([1.0, 1.0], abs=0)

    def test_constant_feature_rejected(self):
        with pytest.raises(ValueError):
            data.fit_minmax(np.array([[1.0, 5.0], [2.0, 5.0]]))


class TestOnDiskFormat:
    def test_roundtrip_bit_exact(self, tmp_path):
        out = str(tmp_path / "ds")
        manifest = data.generate_dataset(out, 50, 8, seed=11)
        ds = data.load_dataset(out)
        assert ds.manifest == manifest
        assert ds.images.dtype == np.float32
        assert ds.images.shape == (50, 8, 8, 3)
        assert ds.aux_raw.shape == (50, 2)
        # blobs reload to exactly the written bytes
        raw = np.fromfile(tmp_path / "ds" / "images.bin", dtype="<f4")
        np.testing.assert_array_equal(raw, ds.images.reshape(-1))

    def test_split_sizes_and_scaling(self, tmp_path):
        out = str(tmp_path / "ds")
        data.generate_dataset(out, 100, 8, seed=4)
        ds = data.load_dataset(out)
        images, aux, labels = ds.split("train")
        assert len(labels) == 70
        assert aux.min(axis=0) == pytest.approx([0.0, 0.0], abs=0)
        assert aux.max(axis=0) == pytest.approx([1.0, 1.0], abs=0)
        for name, count in (("val", 15), ("test", 15)):
            _, aux_s, labels_s = ds.split(name)
            assert len(labels_s) == count
            assert np.all(np.isfinite(aux_s))

    def test_truncated_blob_rejected(self, tmp_path):
        out = tmp_path / "ds"
        data.generate_dataset(str(out), 20, 8, seed=5)
        blob = (out / "images.bin").read_bytes()
        (out / "images.bin").write_bytes(blob[:-8])
        with pytest.raises(data.DatasetFormatError, match="images.bin"):
            data.load_dataset(str(out))

    def test_count_mismatch_rejected(self, tmp_path):
        out = tmp_path / "ds"
        data.generate_dataset(str(out), 20, 8, seed=6)
        manifest = (out / "manifest").read_text()
        (out / "manifest").write_text(manifest.replace("n_val = 3", "n_val = 4"))
        with pytest.raises(data.DatasetFormatError, match="split counts"):
            data.load_dataset(str(out))

    def test_unsupported_version_rejected(self, tmp_path):
        out = tmp_path / "ds"
        data.generate_dataset(str(out), 20, 8, seed=7)
        manifest = (out / "manifest").read_text()
        (out / "manifest").write_text(
            manifest.replace("format_version = 1", "format_version = 9")
        )
        with pytest.raises(data.DatasetFormatError, match="format_version"):
            data.load_dataset(str(out))

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            data.load_dataset(str(tmp_path / "missing"))


class TestLearnability:
    def test_aux_logistic_baseline_in_band(self, tmp_path):
        # generator calibration gate: the task must be learnable from the
        # aux features alone, but not perfectly so
        out = str(tmp_path / "ds")
        data.generate_dataset(out, data.DESK_SAMPLES, data.DESK_IMAGE_SIZE, seed=0)
        ds = data.load_dataset(out)
        _, aux_train, y_train = ds.split("train")
        _, aux_test, y_test = ds.split("test")
        clf = LogisticRegression(max_iter=2000).fit(aux_train, y_train)
        auc = tr.roc_auc(clf.predict_proba(aux_test)[:, 1], y_test)
        assert 0.6 <= auc <= 0.9, auc
