import math

import numpy as np
import pytest

from _helpers import damped_cosine
from tensoma.bcpf import BcpfHyperparams, fit
from tensoma.errors import ExtractionFailure, FitFailure, UsageError
from tensoma.modal_extraction import (ModalEstimate, ModeEstimate,
                                      capacity, extract_modes,
                                      fit_damped_cosine, kruskal_ok, mac,
                                      modal_to_poles, pair_modes,
                                      poles_to_modal)
from tensoma.tensor_core import Tensor3, cp_reconstruct

TABLE_CAPACITY = {2: 2, 3: 4, 4: 6, 5: 10, 6: 15, 7: 20, 8: 26, 9: 33,
                  10: 41, 11: 49, 12: 59}


class TestCapacity:
    def test_reference_table(self):
        for m, n in TABLE_CAPACITY.items():
            assert capacity(m) == n

    def test_too_few_sensors(self):
        with pytest.raises(UsageError):
            capacity(1)


class TestKruskal:
    def test_boundary(self):
        assert kruskal_ok(2, 2, 2)          # 6 >= 6
        assert not kruskal_ok(2, 1, 2)      # 5 < 6
        assert kruskal_ok(5, 10, 9)         # 20 >= 20

    def test_negative_rejected(self):
        with pytest.raises(UsageError):
            kruskal_ok(-1, 2, 2)


class TestPoles:
    def test_undamped(self):
        f, z = poles_to_modal(0.0, 2.0 * math.pi)
        assert f == pytest.approx(1.0, abs=1e-15)
        assert z == 0.0

    def test_five_percent_round_trip(self):
        sigma, omega_d = modal_to_poles(1.0, 0.05)
        f, z = poles_to_modal(sigma, omega_d)
        assert f == pytest.approx(1.0, rel=1e-14)
        assert z == pytest.approx(0.05, rel=1e-14)

    def test_benchmark_mode1_values(self):
        sigma, omega_d = modal_to_poles(1.0, 0.05)
        assert sigma == pytest.approx(0.3142, abs=5e-5)
        assert omega_d == pytest.approx(6.2753, abs=5e-4)

    @pytest.mark.parametrize("zeta", [0.001, 0.05, 0.2, 0.49])
    @pytest.mark.parametrize("freq", [0.11, 1.0, 7.3, 49.0])
    def test_round_trip_grid(self, zeta, freq):
        f, z = poles_to_modal(*modal_to_poles(freq, zeta))
        assert abs(f - freq) <= 1e-12 * freq
        assert abs(z - zeta) <= 1e-12

    def test_invalid_inputs(self):
        with pytest.raises(UsageError):
            poles_to_modal(0.1, 0.0)
        with pytest.raises(UsageError):
            poles_to_modal(-0.1, 1.0)


class TestMac:
    def test_identical(self):
        v = np.array([1.0, -2.0, 0.5])
        assert mac(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert mac([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_half(self):
        assert mac([1.0, 0.0], [1.0, 1.0]) == pytest.approx(0.5, abs=1e-15)

    def test_symmetric_and_scale_invariant(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal(6)
        b = rng.standard_normal(6)
        assert mac(a, b) == pytest.approx(mac(b, a), rel=1e-14)
        assert mac(3.0 * a, -0.5 * b) == pytest.approx(mac(a, b), rel=1e-12)

    def test_collinear_is_one(self):
        v = np.array([0.3, -1.2, 4.0])
        assert mac(v, -2.5 * v) == pytest.approx(1.0, abs=1e-12)

    def test_zero_vector_rejected(self):
        with pytest.raises(UsageError):
            mac([0.0, 0.0], [1.0, 0.0])


class TestDampedCosineFit:
    def test_undamped_exact(self):
        tau = (np.arange(100) + 1) * 0.01
        rho = damped_cosine(tau, 1.0, 0.0, 2 * math.pi * 2.0, 0.0)
        res = fit_damped_cosine(rho, 0.01)
        assert res.sigma <= 1e-3
        assert abs(res.omega_d - 4 * math.pi) <= 1e-3 * 4 * math.pi

    def test_five_percent_mode(self):
        sigma_true, omega_true = 0.3142, 2 * math.pi * 0.99875
        tau = (np.arange(100) + 1) * 0.01
        rho = damped_cosine(tau, 0.8, sigma_true, omega_true, 0.4)
        res = fit_damped_cosine(rho, 0.01)
        f, z = poles_to_modal(res.sigma, res.omega_d)
        assert abs(f - 1.0) <= 0.01
        assert abs(z - 0.05) <= 0.01 * 0.05 + 5e-4

    def test_white_noise_rejected(self):
        rng = np.random.default_rng(123)
        with pytest.raises(FitFailure):
            fit_damped_cosine(rng.standard_normal(100), 0.01)

    def test_constant_rejected(self):
        with pytest.raises(FitFailure):
            fit_damped_cosine(np.full(100, 2.0), 0.01)

    def test_all_zero_rejected(self):
        with pytest.raises(UsageError):
            fit_damped_cosine(np.zeros(100), 0.01)

    def test_too_short_rejected(self):
        with pytest.raises(UsageError):
            fit_damped_cosine(np.ones(5), 0.01)

    @pytest.mark.parametrize("freq,zeta", [(1.2, 0.05), (4.0, 0.01),
                                           (13.0, 0.004), (2.5, 0.2)])
    def test_accuracy_noise_free(self, freq, zeta):
        # at least one full damped period inside the 1 s window
        sigma, omega_d = modal_to_poles(freq, zeta)
        tau = (np.arange(100) + 1) * 0.01
        rho = damped_cosine(tau, 1.3, sigma, omega_d, -0.7)
        res = fit_damped_cosine(rho, 0.01)
        assert abs(res.omega_d - omega_d) <= 1e-3 * omega_d
        assert abs(res.sigma - sigma) <= 1e-3 * max(sigma, 1e-3)
        assert res.residual < 1e-6


def two_mode_posterior():
    rng = np.random.default_rng(4)
    shapes = np.linalg.qr(rng.standard_normal((6, 2)))[0]
    tau = (np.arange(80) + 1) * 0.01
    rs = np.column_stack([
        damped_cosine(tau, 1.0, *modal_to_poles(2.0, 0.02)[:2], 0.2),
        damped_cosine(tau, 0.8, *modal_to_poles(5.0, 0.01)[:2], -0.3),
    ])
    t = cp_reconstruct(shapes, shapes, rs)
    post, _ = fit(Tensor3(t.data / np.sqrt(np.mean(t.data ** 2))),
                  BcpfHyperparams(d_init=4), seed=0)
    return post, shapes


class TestExtractModes:
    def test_round_trip_two_modes(self):
        post, shapes = two_mode_posterior()
        est = extract_modes(post, dt_lag=0.01)
        assert len(est.modes) == 2
        freqs = [m.freq_hz for m in est.modes]
        assert freqs[0] == pytest.approx(2.0, rel=5e-3)
        assert freqs[1] == pytest.approx(5.0, rel=5e-3)
        for mode, col in zip(est.modes, shapes.T[np.argsort([2.0, 5.0])]):
            assert mac(mode.shape, col) > 0.999
        for mode in est.modes:
            assert abs(np.linalg.norm(mode.shape) - 1.0) < 1e-12
            assert mode.shape[np.abs(mode.shape).argmax()] > 0

    def test_constant_column_rejected_others_kept(self):
        post, _ = two_mode_posterior()
        rs = post.rs_mean.copy()
        rs[:, 0] = 3.0   # kill the frequency content of one column
        broken = type(post)(
            a1_mean=post.a1_mean, a2_mean=post.a2_mean, rs_mean=rs,
            a1_cov=post.a1_cov, a2_cov=post.a2_cov, rs_cov=post.rs_cov,
            lambda_shape=post.lambda_shape, lambda_rate=post.lambda_rate,
            beta_shape=post.beta_shape, beta_rate=post.beta_rate)
        est = extract_modes(broken, dt_lag=0.01)
        assert len(est.modes) == 1
        assert len(est.rejected) == 1
        assert est.rejected[0].column == 0

    def test_all_rejected_raises(self):
        rng = np.random.default_rng(1)
        post, _ = two_mode_posterior()
        rs = np.full_like(post.rs_mean, 1.0)
        broken = type(post)(
            a1_mean=post.a1_mean, a2_mean=post.a2_mean, rs_mean=rs,
            a1_cov=post.a1_cov, a2_cov=post.a2_cov, rs_cov=post.rs_cov,
            lambda_shape=post.lambda_shape, lambda_rate=post.lambda_rate,
            beta_shape=post.beta_shape, beta_rate=post.beta_rate)
        with pytest.raises(ExtractionFailure):
            extract_modes(broken, dt_lag=0.01)

    def test_modes_sorted_by_frequency(self):
        post, _ = two_mode_posterior()
        est = extract_modes(post, dt_lag=0.01)
        freqs = [m.freq_hz for m in est.modes]
        assert freqs == sorted(freqs)

    def test_sensor_ids_carried(self):
        post, _ = two_mode_posterior()
        est = extract_modes(post, dt_lag=0.01, sensor_ids=(2, 3, 5, 7, 8, 10))
        assert est.sensor_ids == (2, 3, 5, 7, 8, 10)


def estimate_from_shapes(shapes, freqs):
    modes = tuple(
        ModeEstimate(shape=shapes[:, i] / np.linalg.norm(shapes[:, i]),
                     freq_hz=f, damping_ratio=0.01, fit_residual=0.0)
        for i, f in enumerate(freqs))
    return ModalEstimate(modes=modes, sensor_ids=tuple(range(1, shapes.shape[0] + 1)))


class TestPairModes:
    def test_identity(self):
        rng = np.random.default_rng(0)
        shapes = np.linalg.qr(rng.standard_normal((5, 3)))[0]
        est = estimate_from_shapes(shapes, [1.0, 2.0, 3.0])
        pairs, macm = pair_modes(est, est)
        assert pairs == ((0, 0), (1, 1), (2, 2))
        assert np.allclose(np.diag(macm.values), 1.0, atol=1e-12)

    def test_swapped_modes(self):
        rng = np.random.default_rng(1)
        shapes = np.linalg.qr(rng.standard_normal((5, 3)))[0]
        truth = estimate_from_shapes(shapes, [1.0, 2.0, 3.0])
        swapped = estimate_from_shapes(shapes[:, [1, 0, 2]], [1.0, 2.0, 3.0])
        pairs, _ = pair_modes(swapped, truth)
        assert pairs == ((0, 1), (1, 0), (2, 2))

    def test_perturbed_recovers_identity(self):
        rng = np.random.default_rng(2)
        shapes = np.linalg.qr(rng.standard_normal((8, 5)))[0]
        noisy = shapes + 0.05 * rng.standard_normal(shapes.shape)
        truth = estimate_from_shapes(shapes, list(range(1, 6)))
        est = estimate_from_shapes(noisy, list(range(1, 6)))
        pairs, macm = pair_modes(est, truth)
        assert pairs == tuple((i, i) for i in range(5))
        assert np.diag(macm.values).min() > 0.95

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(3)
        a = estimate_from_shapes(rng.standard_normal((6, 4)), [1, 2, 3, 4])
        b = estimate_from_shapes(rng.standard_normal((6, 3)), [1, 2, 3])
        _, macm = pair_modes(a, b)
        assert macm.values.shape == (4, 3)
        assert (macm.values >= 0).all() and (macm.values <= 1 + 1e-12).all()
