import struct

import numpy as np
import pytest

from qcnnlab.data import (
    BinaryDataset,
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    load_cache,
    load_idx,
    make_binary,
    resolve_data_dir,
    save_cache,
    split,
)
from qcnnlab.synthetic import generate_digits, make_synthetic_dir, write_idx_files


class TestIdx:
    def test_round_trip_through_writer(self, data_dir):
        raw = load_idx(data_dir / "train-images-idx3-ubyte",
                       data_dir / "train-labels-idx1-ubyte")
        assert raw.images.shape == (240, 28, 28)
        assert raw.images.dtype == np.uint8
        assert set(np.unique(raw.labels)) == {0, 7}
        images, labels = generate_digits(120, seed=12345)
        assert np.array_equal(raw.images, images)
        assert np.array_equal(raw.labels, labels)

    def test_bad_magic_rejected(self, tmp_path):
        images, labels = generate_digits(2, seed=0)
        ip, lp = write_idx_files(tmp_path, images, labels)
        blob = bytearray(ip.read_bytes())
        blob[:4] = struct.pack(">i", 0x0000DEAD)
        ip.write_bytes(bytes(blob))
        with pytest.raises(IdxMagicError):
            load_idx(ip, lp)

    def test_truncated_file_rejected(self, tmp_path):
        images, labels = generate_digits(2, seed=0)
        ip, lp = write_idx_files(tmp_path, images, labels)
        ip.write_bytes(ip.read_bytes()[:-100])
        with pytest.raises(IdxTruncatedError):
            load_idx(ip, lp)

    def test_count_mismatch_rejected(self, tmp_path):
        images, labels = generate_digits(2, seed=0)
        ip, _ = write_idx_files(tmp_path, images, labels)
        _, lp = write_idx_files(tmp_path / "other", images[:2], labels[:2])
        with pytest.raises(IdxCountMismatchError):
            load_idx(ip, lp)


class TestResolveDataDir:
    def test_flag_wins(self, monkeypatch, tmp_path):
        monkeypatch.setenv("QCNN_MNIST_DIR", "/elsewhere")
        assert resolve_data_dir(str(tmp_path)) == tmp_path

    def test_env_fallback(self, monkeypatch, tmp_path):
        monkeypatch.setenv("QCNN_MNIST_DIR", str(tmp_path))
        assert resolve_data_dir(None) == tmp_path

    def test_missing_both_raises(self, monkeypatch):
        monkeypatch.delenv("QCNN_MNIST_DIR", raising=False)
        with pytest.raises(FileNotFoundError):
            resolve_data_dir(None)


class TestMakeBinary:
    def test_filters_maps_and_encodes(self, data_dir):
        raw = load_idx(data_dir / "train-images-idx3-ubyte",
                       data_dir / "train-labels-idx1-ubyte")
        ds = make_binary(raw, 0, 7, 10, seed=3)
        assert len(ds.samples) == 240
        assert {s.label for s in ds.samples} == {0, 1}
        for s in ds.samples[:5]:
            assert s.amplitudes.shape == (1024,)
            assert abs(np.linalg.norm(s.amplitudes) - 1.0) < 1e-10

    def test_shuffle_is_seeded(self, data_dir):
        raw = load_idx(data_dir / "train-images-idx3-ubyte",
                       data_dir / "train-labels-idx1-ubyte")
        a = make_binary(raw, 0, 7, 10, seed=3)
        b = make_binary(raw, 0, 7, 10, seed=3)
        c = make_binary(raw, 0, 7, 10, seed=4)
        assert all(np.array_equal(x.amplitudes, y.amplitudes)
                   for x, y in zip(a.samples, b.samples))
        assert any(not np.array_equal(x.amplitudes, y.amplitudes)
                   for x, y in zip(a.samples, c.samples))

    def test_missing_class_rejected(self, data_dir):
        raw = load_idx(data_dir / "train-images-idx3-ubyte",
                       data_dir / "train-labels-idx1-ubyte")
        with pytest.raises(ValueError):
            make_binary(raw, 3, 7, 10, seed=0)
        with pytest.raises(ValueError):
            make_binary(raw, 7, 7, 10, seed=0)


class TestSplit:
    def test_partition_is_disjoint_and_covering(self, data_dir):
        raw = load_idx(data_dir / "train-images-idx3-ubyte",
                       data_dir / "train-labels-idx1-ubyte")
        ds = make_binary(raw, 0, 7, 10, seed=3)
        tr, va, te = split(ds, (0.5, 0.25, 0.25))
        sizes = [len(tr.samples), len(va.samples), len(te.samples)]
        assert sum(sizes) == len(ds.samples)
        ids = [id(s) for part in (tr, va, te) for s in part.samples]
        assert len(ids) == len(set(ids))

    def test_stratification_within_two_samples(self, data_dir):
        raw = load_idx(data_dir / "train-images-idx3-ubyte",
                       data_dir / "train-labels-idx1-ubyte")
        ds = make_binary(raw, 0, 7, 10, seed=3)
        for part, frac in zip(split(ds, (0.5, 0.3, 0.2)), (0.5, 0.3, 0.2)):
            ones = sum(s.label for s in part.samples)
            expected = frac * sum(s.label for s in ds.samples)
            assert abs(ones - expected) <= 2

    def test_bad_fractions_rejected(self, data_dir):
        raw = load_idx(data_dir / "train-images-idx3-ubyte",
                       data_dir / "train-labels-idx1-ubyte")
        ds = make_binary(raw, 0, 7, 10, seed=3)
        with pytest.raises(ValueError):
            split(ds, (0.5, 0.5, 0.5))
        with pytest.raises(ValueError):
            split(ds, (1.0, 0.0, 0.0))


class TestCache:
    def test_round_trip(self, tmp_path, data_dir):
        raw = load_idx(data_dir / "train-images-idx3-ubyte",
                       data_dir / "train-labels-idx1-ubyte")
        ds = make_binary(raw, 0, 7, 10, seed=3)
        small = BinaryDataset(ds.samples[:10], ds.class_pair, ds.split_seed)
        path = tmp_path / "cache.bin"
        save_cache(path, small)
        back = load_cache(path)
        assert len(back.samples) == 10
        for a, b in zip(small.samples, back.samples):
            assert a.label == b.label
            assert np.array_equal(a.amplitudes, b.amplitudes)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"NOTADATA" + b"\0" * 8)
        with pytest.raises(ValueError):
            load_cache(path)


class TestSynthetic:
    def test_generation_is_seeded(self):
        a, la = generate_digits(5, seed=1)
        b, lb = generate_digits(5, seed=1)
        c, _ = generate_digits(5, seed=2)
        assert np.array_equal(a, b) and np.array_equal(la, lb)
        assert not np.array_equal(a, c)

    def test_classes_are_balanced(self, tmp_path):
        make_synthetic_dir(tmp_path / "d", num_per_class=8, seed=0)
        raw = load_idx(tmp_path / "d" / "train-images-idx3-ubyte",
                       tmp_path / "d" / "train-labels-idx1-ubyte")
        assert int(np.sum(raw.labels == 0)) == 8
        assert int(np.sum(raw.labels == 7)) == 8
