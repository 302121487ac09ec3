import numpy as np
import pytest
from numpy.testing import assert_allclose

from errors import AllZero, DimensionMismatch, MaxIterationsExceeded, SpectrumMismatch
from estimators import SampleSet, krr
from graph_core import erdos_renyi
from kernels import KernelMatrix, kernel_sqrt
from mkl import (
    KernelDictionary,
    bandlimited_dictionary,
    diffusion_dictionary,
    ks_iia,
    ks_iia_smoothing,
    ks_reconstruct,
    naive_bandwidth,
    rs_admm,
    rs_objective,
    rs_reconstruct,
    soft_threshold,
    sparsity_path,
    support_size,
)
from spectral import graph_spectrum
from synthdata import bandlimited_instance, sample_uniform


@pytest.fixture
def instance():
    rng = np.random.default_rng(11)
    spec = graph_spectrum(erdos_renyi(30, 0.3, rng))
    inst = bandlimited_instance(spec, range(4), 20.0, rng)
    samples = SampleSet.from_signal(sample_uniform(30, 15, rng), inst.noisy_full)
    return spec, samples, inst


class TestSoftThreshold:
    def test_shrinks(self):
        assert_allclose(soft_threshold(np.array([3.0, 4.0]), 1.0), [2.4, 3.2])

    @pytest.mark.parametrize("zeta", [5.0, 6.0])
    def test_kills_small_blocks(self, zeta):
        assert_allclose(soft_threshold(np.array([3.0, 4.0]), zeta), [0.0, 0.0])


class TestDictionary:
    def test_trace_normalized(self, instance):
        spec, _, _ = instance
        d = bandlimited_dictionary(spec, (2, 4, 6), 1e4)
        assert d.size == 3 and d.n_vertices == 30
        assert_allclose([k.trace for k in d.kernels], 1.0)
        assert d.labels == (2, 4, 6)

    def test_trace_target(self, instance):
        spec, _, _ = instance
        d = bandlimited_dictionary(spec, (2, 4, 6), 1e4, trace=900.0)
        assert_allclose([k.trace for k in d.kernels], 900.0)
        d = diffusion_dictionary(spec, (0.5, 2.0), trace=900.0)
        assert_allclose([k.trace for k in d.kernels], 900.0)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            KernelDictionary((), ())

    def test_rejects_label_mismatch(self):
        with pytest.raises(DimensionMismatch):
            KernelDictionary((KernelMatrix(np.eye(3)),), (1, 2))

    def test_rejects_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            KernelDictionary((KernelMatrix(np.eye(3)), KernelMatrix(np.eye(4))), (1, 2))


class TestRsAdmm:
    def test_contract(self, instance):
        spec, samples, _ = instance
        d = bandlimited_dictionary(spec, (2, 4, 6), 1e4)
        mu = 0.1
        sol = rs_admm(d, samples, mu, eps=1e-6, max_iter=20000)
        assert sol.converged
        assert sol.final_residual <= 1e-6
        assert sol.alpha_bar.shape == (3, 15)
        assert_allclose(sol.norms, np.linalg.norm(sol.alpha_bar, axis=1))

        k_bars = d.restricted(samples)
        zero = rs_objective(k_bars, samples, mu, np.zeros_like(sol.alpha_bar))
        assert rs_objective(k_bars, samples, mu, sol.alpha_bar) <= zero

        est = rs_reconstruct(d, samples, sol)
        assert est.values.shape == (30,)
        assert est.method == "mkl_rs"

    def test_huge_mu_selects_nothing(self, instance):
        spec, samples, _ = instance
        d = bandlimited_dictionary(spec, (2, 4, 6), 1e4)
        sol = rs_admm(d, samples, 1e4, max_iter=20000)
        assert support_size(sol.norms) == 0
        with pytest.raises(AllZero):
            naive_bandwidth(sol.norms ** 2, d.labels)

    def test_strict_iteration_limit(self, instance):
        spec, samples, _ = instance
        d = bandlimited_dictionary(spec, (2, 4), 1e4)
        with pytest.raises(MaxIterationsExceeded) as info:
            rs_admm(d, samples, 0.1, eps=1e-12, max_iter=1, strict=True)
        assert info.value.best is not None
        assert not info.value.best.converged

    def test_best_iterate_without_strict(self, instance):
        spec, samples, _ = instance
        d = bandlimited_dictionary(spec, (2, 4), 1e4)
        sol = rs_admm(d, samples, 0.1, eps=1e-12, max_iter=3)
        assert not sol.converged
        assert 1 <= sol.iterations <= 3

    @pytest.mark.parametrize("kwargs", [{"mu": 0.0}, {"mu": 0.1, "rho": 0.0}, {"mu": 0.1, "eps": -1.0}])
    def test_rejects_bad_parameters(self, instance, kwargs):
        spec, samples, _ = instance
        d = bandlimited_dictionary(spec, (2,), 1e4)
        with pytest.raises(ValueError):
            rs_admm(d, samples, **kwargs)


    def test_penalty_scale_needs_large_trace(self):
        # N=100, B=20, 10 dB, μ=0.1：单位迹核全部被阈值置零，迹 N² 时能选出核
        rng = np.random.default_rng(2017)
        spec = graph_spectrum(erdos_renyi(100, 0.25, rng))
        inst = bandlimited_instance(spec, range(20), 10.0, rng)
        samples = SampleSet.from_signal(sample_uniform(100, 60, rng), inst.noisy_full)
        bandwidths = (10, 15, 20, 25, 30)

        unit = rs_admm(bandlimited_dictionary(spec, bandwidths, 1e4), samples, 0.1, max_iter=2000)
        assert support_size(unit.norms) == 0

        d = bandlimited_dictionary(spec, bandwidths, 1e4, trace=100.0 ** 2)
        sol = rs_admm(d, samples, 0.1, max_iter=5000)
        assert support_size(sol.norms) >= 1
        est = rs_reconstruct(d, samples, sol).values
        err = np.sum((est - inst.truth) ** 2) / np.sum(inst.truth ** 2)
        assert err < 0.5

    def test_single_kernel_stationarity(self, instance):
        spec, samples, _ = instance
        d = bandlimited_dictionary(spec, (4,), 1e4, trace=900.0)
        mu = 0.1
        sol = rs_admm(d, samples, mu, eps=1e-9, max_iter=20000)
        assert sol.converged and support_size(sol.norms) == 1
        root = kernel_sqrt(d.restricted(samples)[0])
        grad = root @ (samples.observations - root @ sol.alpha_bar[0])
        assert_allclose(np.linalg.norm(grad), samples.size * mu / 2, rtol=1e-2)


    def test_single_kernel_tiny_mu_interpolates(self):
        rng = np.random.default_rng(3)
        spec = graph_spectrum(erdos_renyi(20, 0.3, rng))
        inst = bandlimited_instance(spec, range(5), 20.0, rng)
        samples = SampleSet.from_signal(sample_uniform(20, 10, rng), inst.noisy_full)
        d = diffusion_dictionary(spec, (1.0,), trace=400.0)
        sol = rs_admm(d, samples, 1e-9, eps=1e-10, max_iter=20000)

        root = kernel_sqrt(d.restricted(samples)[0])
        y = samples.observations
        assert np.linalg.norm(root @ sol.alpha_bar[0] - y) <= 1e-4 * np.linalg.norm(y)
        fit = krr(d.kernels[0], samples, 1e-9)
        assert_allclose(rs_reconstruct(d, samples, sol).values, fit.values,
                        atol=1e-3 * np.linalg.norm(fit.values))

class TestSparsityPath:
    def test_shape_and_vanishing_tail(self, instance):
        spec, samples, _ = instance
        d = bandlimited_dictionary(spec, (2, 4, 6), 1e4)
        path = sparsity_path(d, samples, [1e-2, 1e4], max_iter=20000)
        assert path.shape == (3, 2)
        assert np.all(path >= 0)
        assert np.all(path[:, 1] == 0)

    @pytest.mark.parametrize("grid", [[1.0, 1.0], [1.0, 0.1], []])
    def test_grid_must_ascend(self, instance, grid):
        spec, samples, _ = instance
        d = bandlimited_dictionary(spec, (2,), 1e4)
        with pytest.raises(ValueError):
            sparsity_path(d, samples, grid)


class TestNaiveBandwidth:
    def test_argmax(self):
        assert naive_bandwidth(np.array([0.1, 2.0, 0.3]), [5, 10, 15]) == 10

    def test_tie_prefers_smaller(self):
        assert naive_bandwidth(np.array([1.0, 3.0, 3.0]), [5, 10, 15]) == 10

    def test_all_zero(self):
        with pytest.raises(AllZero):
            naive_bandwidth(np.zeros(3), [5, 10, 15])

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatch):
            naive_bandwidth(np.ones(2), [5, 10, 15])


class TestKsIia:
    def test_single_kernel_matches_krr(self, instance):
        spec, samples, _ = instance
        d = diffusion_dictionary(spec, (1.0,))
        radius, mu = 2.0, 1e-2
        sol = ks_iia(d, samples, mu, theta0=np.zeros(1), radius=radius, eps=1e-12, max_iter=5000)
        assert sol.converged
        assert_allclose(sol.theta, [radius])

        scaled = KernelMatrix(radius * d.kernels[0].matrix)
        expected = krr(scaled, samples, mu)
        assert_allclose(sol.alpha, expected.coefficients, atol=1e-8)
        assert_allclose(ks_reconstruct(d, samples, sol).values, expected.values, atol=1e-8)

    def test_identical_kernels_share_weight(self, instance):
        spec, samples, _ = instance
        k = diffusion_dictionary(spec, (1.0,)).kernels[0]
        sol = ks_iia(KernelDictionary((k, k), (1, 2)), samples, 1e-2, radius=1.0, max_iter=500)
        assert_allclose(sol.theta[0], sol.theta[1], rtol=1e-12)

    def test_theta_on_ball(self, instance):
        spec, samples, _ = instance
        d = diffusion_dictionary(spec, (0.5, 1.0, 2.0))
        theta0, radius = np.array([0.1, 0.2, 0.3]), 0.5
        sol = ks_iia(d, samples, 1e-2, theta0=theta0, radius=radius)
        assert np.all(sol.theta >= 0)
        assert abs(np.linalg.norm(sol.theta - theta0) - radius) < 1e-9

    def test_strict_iteration_limit(self, instance):
        spec, samples, _ = instance
        d = diffusion_dictionary(spec, (0.5, 1.0))
        with pytest.raises(MaxIterationsExceeded):
            ks_iia(d, samples, 1e-2, eps=1e-300, max_iter=1, strict=True)

    @pytest.mark.parametrize("kwargs", [{"radius": 0.0}, {"eta": 1.0}, {"theta0": np.array([-1.0, 0.0])}])
    def test_rejects_bad_parameters(self, instance, kwargs):
        spec, samples, _ = instance
        d = diffusion_dictionary(spec, (0.5, 1.0))
        with pytest.raises(ValueError):
            ks_iia(d, samples, 1e-2, **kwargs)


class TestIiaSmoothing:
    def test_matches_vertex_domain(self, instance):
        spec, _, inst = instance
        d = diffusion_dictionary(spec, (0.5, 1.0, 2.0))
        y = inst.noisy_full
        fast = ks_iia_smoothing(d, y, 1e-2, eps=1e-10, max_iter=5000)
        slow = ks_iia(d, SampleSet(np.arange(30), y), 1e-2, eps=1e-10, max_iter=5000)
        assert_allclose(fast.theta, slow.theta, atol=1e-8)
        assert_allclose(fast.alpha, slow.alpha, atol=1e-8)

    def test_requires_laplacian_kernels(self):
        d = KernelDictionary((KernelMatrix(np.eye(4)),), (1,))
        with pytest.raises(SpectrumMismatch):
            ks_iia_smoothing(d, np.ones(4), 0.1)

    def test_dimension_mismatch(self, instance):
        spec, _, _ = instance
        d = diffusion_dictionary(spec, (1.0,))
        with pytest.raises(DimensionMismatch):
            ks_iia_smoothing(d, np.ones(5), 0.1)
