import numpy as np
import pytest

from krrdistill import data, kernel
from krrdistill.data import (
    IdxCountMismatchError,
    IdxMagicError,
    IdxTruncatedError,
    binary_subset,
    gen_grf,
    gen_two_clusters,
    load_mnist_idx,
    replay,
    write_idx_images,
    write_idx_labels,
)
from krrdistill.kernel import KernelSpec
from krrdistill.numerics import chol_lower


@pytest.fixture
def spec():
    return KernelSpec(lengthscale=1.5)


class TestGenGrf:
    def test_deterministic(self, spec):
        a = gen_grf(30, 2.0, 0.01, spec, 42)
        b = gen_grf(30, 2.0, 0.01, spec, 42)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)

    def test_single_point_label_variance(self, spec):
        # y1 ~ N(0, 1 + sigma_y^2); sample variance over 1e4 seeds.
        sigma_y = 0.5
        ys = np.array([gen_grf(1, 1.0, sigma_y, spec, seed).y[0] for seed in range(10_000)])
        np.testing.assert_allclose(ys.var(), 1 + sigma_y**2, rtol=0.05)

    def test_x_marginal_std(self, spec):
        # Label sampling is O(n^3), so n is capped here; 4000 keeps the
        # sampling error of the std near 1% against the 3% tolerance.
        ld = gen_grf(4000, 2.0, 0.01, spec, 7)
        np.testing.assert_allclose(ld.X.std(axis=0), 2.0, rtol=0.03)

    def test_label_covariance_matches_prior(self, spec):
        # Fixed X; the label construction y = L z has covariance
        # K + sigma_y^2 I over repeated z draws.
        rng = np.random.default_rng(8)
        X = rng.normal(0, 2.0, (5, 2))
        sigma_y = 0.1
        K = kernel.gram(spec, X, X)
        L = chol_lower(K, jitter=sigma_y**2)
        draws = L @ rng.standard_normal((5, 10_000))
        emp = np.cov(draws)
        target = K + sigma_y**2 * np.eye(5)
        assert np.linalg.norm(emp - target) <= 0.05 * np.linalg.norm(target)

    def test_meta_records_params(self, spec):
        ld = gen_grf(5, 1.5, 0.01, spec, 3)
        assert ld.meta["generator"] == "grf"
        assert ld.meta["seed"] == 3
        assert ld.meta["gaussian"] == "box-muller"

    def test_invalid_params(self, spec):
        with pytest.raises(ValueError):
            gen_grf(0, 1.0, 0.01, spec, 0)
        with pytest.raises(ValueError):
            gen_grf(5, -1.0, 0.01, spec, 0)


class TestGenTwoClusters:
    def test_clipping_moves_stray_point(self):
        # With a huge spread some cluster-1 draws land right of -0.4 and
        # must be clamped onto the margin.
        ld = gen_two_clusters(200, 3.0, 0)
        c1 = ld.X[ld.y == -1]
        assert np.all(c1[:, 0] <= -0.4)
        assert np.any(c1[:, 0] == -0.4)  # at least one point was clamped

    def test_cluster_two_margin(self):
        ld = gen_two_clusters(200, 3.0, 1)
        c2 = ld.X[ld.y == 1]
        assert np.all(c2[:, 0] >= 0.4)

    def test_clipping_idempotent_on_satisfied_points(self):
        # Small spread: nothing reaches the margin, so no draw is moved.
        ld = gen_two_clusters(100, 0.1, 2)
        c1 = ld.X[ld.y == -1]
        assert not np.any(c1[:, 0] == -0.4)

    def test_labels_sum_to_zero(self):
        assert gen_two_clusters(50, 1.0, 3).y.sum() == 0.0

    def test_second_coordinate_unclipped(self):
        ld = gen_two_clusters(400, 3.0, 4)
        assert np.any(np.abs(ld.X[:, 1]) > 3.0)

    def test_odd_n_rejected(self):
        with pytest.raises(ValueError, match="even"):
            gen_two_clusters(7, 1.0, 0)

    def test_deterministic(self):
        a = gen_two_clusters(20, 1.5, 9)
        b = gen_two_clusters(20, 1.5, 9)
        np.testing.assert_array_equal(a.X, b.X)


class TestReplay:
    def test_grf_replay_bit_identical(self, spec):
        ld = gen_grf(25, 1.5, 0.01, spec, 11)
        again = replay(ld.meta)
        np.testing.assert_array_equal(ld.X, again.X)
        np.testing.assert_array_equal(ld.y, again.y)

    def test_clusters_replay_bit_identical(self):
        ld = gen_two_clusters(30, 2.0, 12)
        again = replay(ld.meta)
        np.testing.assert_array_equal(ld.X, again.X)
        np.testing.assert_array_equal(ld.y, again.y)

    def test_unknown_generator(self):
        with pytest.raises(ValueError, match="replay"):
            replay({"generator": "mystery"})


class TestIdx:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        images = rng.integers(0, 256, size=(7, 28, 28), dtype=np.uint8)
        labels = rng.integers(0, 10, size=7, dtype=np.uint8)
        ipath = tmp_path / "images-idx3-ubyte"
        lpath = tmp_path / "labels-idx1-ubyte"
        write_idx_images(ipath, images)
        write_idx_labels(lpath, labels)
        flat, back = load_mnist_idx(ipath, lpath)
        np.testing.assert_array_equal(back, labels)
        np.testing.assert_allclose(flat, images.reshape(7, 784) / 255.0, rtol=0)
        assert flat.shape == (7, 784)

    def test_pixel_255_scales_to_one(self, tmp_path):
        images = np.full((1, 2, 2), 255, dtype=np.uint8)
        write_idx_images(tmp_path / "i", images)
        write_idx_labels(tmp_path / "l", np.zeros(1, dtype=np.uint8))
        flat, _ = load_mnist_idx(tmp_path / "i", tmp_path / "l")
        assert np.all(flat == 1.0)

    def test_header_fields(self, tmp_path):
        # Headers carry the standard magics and big-endian dimensions.
        import struct

        write_idx_images(tmp_path / "i", np.zeros((3, 4, 5), dtype=np.uint8))
        with open(tmp_path / "i", "rb") as handle:
            magic, count, rows, cols = struct.unpack(">IIII", handle.read(16))
        assert (magic, count, rows, cols) == (2051, 3, 4, 5)
        write_idx_labels(tmp_path / "l", np.zeros(3, dtype=np.uint8))
        with open(tmp_path / "l", "rb") as handle:
            magic, count = struct.unpack(">II", handle.read(8))
        assert (magic, count) == (2049, 3)

    def test_bad_image_magic(self, tmp_path):
        write_idx_labels(tmp_path / "i", np.zeros(30, dtype=np.uint8))  # wrong container
        write_idx_labels(tmp_path / "l", np.zeros(30, dtype=np.uint8))
        with pytest.raises(IdxMagicError, match="bad image magic"):
            load_mnist_idx(tmp_path / "i", tmp_path / "l")

    def test_bad_label_magic(self, tmp_path):
        write_idx_images(tmp_path / "i", np.zeros((1, 2, 2), dtype=np.uint8))
        write_idx_images(tmp_path / "l", np.zeros((1, 2, 2), dtype=np.uint8))
        with pytest.raises(IdxMagicError, match="bad label magic"):
            load_mnist_idx(tmp_path / "i", tmp_path / "l")

    def test_truncated_payload(self, tmp_path):
        write_idx_images(tmp_path / "i", np.zeros((2, 3, 3), dtype=np.uint8))
        raw = (tmp_path / "i").read_bytes()
        (tmp_path / "i").write_bytes(raw[:-5])
        write_idx_labels(tmp_path / "l", np.zeros(2, dtype=np.uint8))
        with pytest.raises(IdxTruncatedError, match="expected"):
            load_mnist_idx(tmp_path / "i", tmp_path / "l")

    def test_count_mismatch(self, tmp_path):
        write_idx_images(tmp_path / "i", np.zeros((2, 2, 2), dtype=np.uint8))
        write_idx_labels(tmp_path / "l", np.zeros(3, dtype=np.uint8))
        with pytest.raises(IdxCountMismatchError, match="2 != label count 3"):
            load_mnist_idx(tmp_path / "i", tmp_path / "l")


class TestBinarySubset:
    def make_raw(self):
        images = np.arange(40, dtype=float).reshape(10, 4) / 40.0
        labels = np.array([0, 1, 0, 1, 0, 1, 0, 1, 2, 2], dtype=np.uint8)
        return images, labels

    def test_balanced_split(self):
        ld = binary_subset(self.make_raw(), 0, 1, 4, seed=0)
        assert (ld.y == -1).sum() == 2
        assert (ld.y == 1).sum() == 2

    def test_deterministic(self):
        a = binary_subset(self.make_raw(), 0, 1, 4, seed=5)
        b = binary_subset(self.make_raw(), 0, 1, 4, seed=5)
        np.testing.assert_array_equal(a.X, b.X)

    def test_rows_distinct(self):
        ld = binary_subset(self.make_raw(), 0, 1, 8, seed=1)
        assert len({tuple(row) for row in ld.X}) == 8

    def test_insufficient_examples(self):
        with pytest.raises(ValueError, match="insufficient"):
            binary_subset(self.make_raw(), 0, 2, 6, seed=0)

    def test_odd_n_rejected(self):
        with pytest.raises(ValueError, match="even"):
            binary_subset(self.make_raw(), 0, 1, 5, seed=0)
