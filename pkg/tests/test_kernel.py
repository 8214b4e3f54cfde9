import numpy as np
import pytest

from krrdistill import kernel
from krrdistill.kernel import KernelSpec
from krrdistill.numerics import sym_eigvals


@pytest.fixture
def spec():
    return KernelSpec(lengthscale=1.5)


class TestSpec:
    def test_bad_lengthscale(self):
        with pytest.raises(ValueError, match="lengthscale"):
            KernelSpec(lengthscale=0.0)

    def test_bad_family(self):
        with pytest.raises(ValueError, match="family"):
            KernelSpec(lengthscale=1.0, family="matern")


class TestEval:
    def test_zero_distance(self, spec):
        assert kernel.eval(spec, [1.0, 2.0], [1.0, 2.0]) == 1.0

    def test_hand_value(self, spec):
        # ||x - x'|| = 3, l = 1.5 -> exp(-9 / (2 * 2.25)) = exp(-2)
        val = kernel.eval(spec, [0.0, 0.0], [3.0, 0.0])
        np.testing.assert_allclose(val, np.exp(-2.0), rtol=1e-15)

    def test_mnist_lengthscale(self):
        spec = KernelSpec(lengthscale=13.9)
        val = kernel.eval(spec, [0.0], [13.9])
        np.testing.assert_allclose(val, np.exp(-0.5), rtol=1e-15)

    def test_symmetry_exact(self, spec):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x, xp = rng.normal(size=3), rng.normal(size=3)
            assert kernel.eval(spec, x, xp) == kernel.eval(spec, xp, x)

    def test_shift_invariance_exact(self, spec):
        # Dyadic coordinates and integer shifts make x + t exact in floats.
        rng = np.random.default_rng(1)
        x = rng.integers(-8, 8, size=2) / 4.0
        xp = rng.integers(-8, 8, size=2) / 4.0
        for t in ([1.0, -3.0], [16.0, 5.0], [-2.25, 0.5]):
            t = np.asarray(t)
            assert kernel.eval(spec, x + t, xp + t) == kernel.eval(spec, x, xp)

    def test_dimension_mismatch(self, spec):
        with pytest.raises(ValueError, match="dimension"):
            kernel.eval(spec, [1.0], [1.0, 2.0])

    def test_non_finite(self, spec):
        with pytest.raises(ValueError, match="non-finite"):
            kernel.eval(spec, [np.nan], [0.0])


class TestGram:
    def test_unit_diagonal_exact(self, spec):
        rng = np.random.default_rng(2)
        A = rng.normal(size=(10, 3))
        G = kernel.gram(spec, A, A)
        assert np.all(np.diag(G) == 1.0)

    def test_matches_eval_entrywise(self, spec):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(6, 2))
        B = rng.normal(size=(4, 2))
        G = kernel.gram(spec, A, B)
        oracle = np.array([[kernel.eval(spec, a, b) for b in B] for a in A])
        np.testing.assert_allclose(G, oracle, rtol=1e-12)

    def test_duplicated_rows_identical(self, spec):
        rng = np.random.default_rng(4)
        A = rng.normal(size=(5, 2))
        A[3] = A[1]
        G = kernel.gram(spec, A, A)
        np.testing.assert_array_equal(G[1], G[3])

    def test_symmetric_exact(self, spec):
        rng = np.random.default_rng(5)
        A = rng.normal(size=(30, 2))
        G = kernel.gram(spec, A, A)
        np.testing.assert_array_equal(G, G.T)

    def test_psd_up_to_500(self, spec):
        rng = np.random.default_rng(6)
        for n in (50, 200, 500):
            A = rng.normal(0, 2.0, size=(n, 2))
            eigs = sym_eigvals(kernel.gram(spec, A, A))
            assert eigs[-1] >= -1e-10

    def test_dimension_mismatch(self, spec):
        with pytest.raises(ValueError, match="dimension"):
            kernel.gram(spec, np.ones((2, 2)), np.ones((2, 3)))


class TestGradFirst:
    def test_zero_at_coincidence(self, spec):
        np.testing.assert_array_equal(kernel.grad_first(spec, [1.0, 2.0], [1.0, 2.0]), [0.0, 0.0])

    def test_hand_value(self):
        spec = KernelSpec(lengthscale=1.0)
        val = kernel.grad_first(spec, [1.0], [0.0])
        np.testing.assert_allclose(val, [-np.exp(-0.5)], rtol=1e-15)

    def test_finite_difference(self, spec):
        rng = np.random.default_rng(7)
        h = 1e-5
        for _ in range(10):
            s, x = rng.normal(size=2), rng.normal(size=2)
            g = kernel.grad_first(spec, s, x)
            fd = np.zeros(2)
            for j in range(2):
                sp, sm = s.copy(), s.copy()
                sp[j] += h
                sm[j] -= h
                fd[j] = (kernel.eval(spec, sp, x) - kernel.eval(spec, sm, x)) / (2 * h)
            np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-12)

    def test_second_argument_antisymmetry(self, spec):
        # d k / d x' equals -d k / d s; checked by finite differences on x'.
        rng = np.random.default_rng(8)
        s, x = rng.normal(size=2), rng.normal(size=2)
        h = 1e-5
        fd_x = np.zeros(2)
        for j in range(2):
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            fd_x[j] = (kernel.eval(spec, s, xp) - kernel.eval(spec, s, xm)) / (2 * h)
        np.testing.assert_allclose(fd_x, -kernel.grad_first(spec, s, x), rtol=1e-6, atol=1e-12)


class TestSpectralSample:
    def test_deterministic(self, spec):
        f1, p1 = kernel.spectral_sample(spec, 100, 3, np.random.default_rng(9))
        f2, p2 = kernel.spectral_sample(spec, 100, 3, np.random.default_rng(9))
        np.testing.assert_array_equal(f1, f2)
        np.testing.assert_array_equal(p1, p2)

    def test_variance(self):
        spec = KernelSpec(lengthscale=2.0)
        freqs, _ = kernel.spectral_sample(spec, 100_000, 2, np.random.default_rng(10))
        var = freqs.var(axis=0)
        np.testing.assert_allclose(var, 0.25, rtol=0.03)

    def test_large_lengthscale_concentrates(self):
        spec = KernelSpec(lengthscale=1e3)
        freqs, _ = kernel.spectral_sample(spec, 100_000, 1, np.random.default_rng(11))
        np.testing.assert_allclose(freqs.std(), 1e-3, rtol=0.03)

    def test_phases_in_range(self, spec):
        _, phases = kernel.spectral_sample(spec, 1000, 2, np.random.default_rng(12))
        assert np.all((phases >= 0.0) & (phases < 2 * np.pi))

    def test_bad_count(self, spec):
        with pytest.raises(ValueError, match="count"):
            kernel.spectral_sample(spec, 0, 2, np.random.default_rng(0))
