"""
Tests for the ZF / MRC receivers and the Monte Carlo rate estimator
"""

import numpy as np
import pytest
from scipy import integrate, stats

from src.analysis import rate_bound_eq20
from src.channels import StatisticalCsi, sample_realization, steering_vector
from src.detection import (Detector, RateMethod, RateReport, SingularGramError, SinrVector,
                           instantaneous_rates, monte_carlo_rate, mrc_sinr, zf_detector,
                           zf_sinr)
from src.logging_config import logger
from src.optimizer import build_objective_context, optimize_phases, random_phase_baseline
from src.scenario import RngStream, ScenarioConfig, rng_substream


def _random_q(rng, M=8, K=3):
    return (rng.standard_normal((M, K)) + 1j * rng.standard_normal((M, K))) / np.sqrt(2)


class TestZeroForcing:

    def test_orthonormal_columns(self):
        logger.info("Testing ZF detector on orthonormal columns")
        q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((6, 3)))
        np.testing.assert_allclose(zf_detector(q), q, atol=1e-12)

    def test_two_by_one(self):
        a = zf_detector(np.array([[1.0], [1.0]]))
        np.testing.assert_allclose(a, [[0.5], [0.5]])

    def test_inverse_identity(self, rng):
        q = _random_q(rng)
        residual = zf_detector(q).conj().T @ q
        assert np.max(np.abs(residual - np.eye(3))) <= 1e-9

    def test_sinr_two_by_one(self):
        sinr = zf_sinr(np.array([[1.0], [1.0]]), 1.0, 1.0)
        np.testing.assert_allclose(sinr.values, [2.0])

    def test_sinr_matches_definition(self, rng):
        q = _random_q(rng)
        expected = 2.0 / (0.5 * np.real(np.diag(np.linalg.inv(q.conj().T @ q))))
        np.testing.assert_allclose(zf_sinr(q, 2.0, 0.5).values, expected, rtol=1e-10)

    def test_rank_deficient_rejected(self):
        q = np.ones((4, 2), dtype=complex)
        with pytest.raises(SingularGramError):
            zf_sinr(q, 1.0, 1.0)

    def test_needs_more_antennas_than_users(self, rng):
        with pytest.raises(SingularGramError, match="more antennas"):
            zf_detector(_random_q(rng, M=3, K=3))


class TestMrc:

    def test_single_user_matches_matched_filter(self):
        sinr = mrc_sinr(np.array([[1.0], [1.0]]), 1.0, 1.0)
        np.testing.assert_allclose(sinr.values, [2.0])

    def test_matches_definition(self, rng):
        q = _random_q(rng)
        g = q.conj().T @ q
        k = 1
        interference = sum(abs(g[k, i]) ** 2 for i in range(3) if i != k)
        expected = abs(g[k, k]) ** 2 / (interference + 0.1 * g[k, k].real)
        assert mrc_sinr(q, 1.0, 0.1).values[k] == pytest.approx(expected, rel=1e-10)

    def test_zero_column_rejected(self):
        q = np.zeros((4, 2), dtype=complex)
        q[:, 0] = 1.0
        with pytest.raises(SingularGramError):
            mrc_sinr(q, 1.0, 1.0)

    def test_scale_equivariance(self, rng):
        q = _random_q(rng)
        for fn in (zf_sinr, mrc_sinr):
            a = fn(q, 0.3, 0.02).values
            b = fn(q, 0.3 * 1e5, 0.02 * 1e5).values
            np.testing.assert_allclose(a, b, rtol=1e-12)


class TestReports:

    def test_sinr_vector_validation(self):
        with pytest.raises(ValueError):
            SinrVector(np.array([1.0, -0.1]))

    def test_rates_from_sinr(self):
        np.testing.assert_allclose(instantaneous_rates(SinrVector(np.array([0.0, 1.0, 3.0]))),
                                   [0.0, 1.0, 2.0])

    def test_report_frame(self):
        report = RateReport(per_user=np.array([1.0, 2.5]), method=RateMethod.CLOSED_FORM)
        assert report.sum_rate == pytest.approx(3.5)
        frame = report.to_frame()
        assert list(frame["user"]) == ["1", "2", "sum"]
        assert frame["rate"].iloc[-1] == pytest.approx(3.5)
        assert report.to_dict()["method"] == "closed-form"

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            RateReport(per_user=np.array([-1.0]), method=RateMethod.RIS_FREE)


def _direct_only_csi(M: int, gamma: float = 1.0) -> StatisticalCsi:
    return StatisticalCsi(h1_bar=steering_vector(4, 0.2, 0.4).entries[:, None],
                          a_M=np.ones(M, dtype=complex), a_N=steering_vector(4, 1.0, 2.0).entries,
                          alpha=np.ones(1), beta=0.0, delta=1.0, gamma=np.array([gamma]))


class TestMonteCarlo:

    def test_direct_link_quadrature_oracle(self):
        logger.info("Testing Monte Carlo against the Gamma-law quadrature")
        M = 8
        cfg = ScenarioConfig(M=M, N=4, K=1, p_dbm=0.0, noise_dbm=0.0, mc_trials=4000, seed=3)
        csi = _direct_only_csi(M)
        report = monte_carlo_rate(csi, random_phase_baseline(4, np.random.default_rng(0)),
                                  Detector.ZF, cfg)
        # ||d||^2 ~ Gamma(M, 1) when gamma = 1
        oracle, _ = integrate.quad(lambda x: np.log2(1 + x) * stats.gamma.pdf(x, M), 0, np.inf)
        assert abs(report.per_user[0] - oracle) <= 3 * report.std_err[0]
        assert report.trials == 4000 and report.excluded == 0
        assert report.method is RateMethod.MONTE_CARLO_ZF

    def test_single_trial_equals_instantaneous(self, default_csi):
        cfg = ScenarioConfig(mc_trials=1, seed=11)
        phases = random_phase_baseline(64, np.random.default_rng(2))
        report = monte_carlo_rate(default_csi, phases, Detector.ZF, cfg)
        q = sample_realization(default_csi, phases, rng_substream(11, RngStream.TRIALS, 0)).q
        expected = instantaneous_rates(zf_sinr(q, cfg.p_watts, cfg.noise_watts))
        np.testing.assert_allclose(report.per_user, expected, rtol=1e-10)
        np.testing.assert_array_equal(report.std_err, np.zeros(4))

    def test_independent_of_worker_count(self, default_csi):
        cfg = ScenarioConfig(mc_trials=1200, seed=5)
        phases = random_phase_baseline(64, np.random.default_rng(3))
        serial = monte_carlo_rate(default_csi, phases, Detector.MRC, cfg, n_jobs=1)
        parallel = monte_carlo_rate(default_csi, phases, Detector.MRC, cfg, n_jobs=2)
        np.testing.assert_allclose(serial.per_user, parallel.per_user, rtol=1e-13)
        np.testing.assert_allclose(serial.std_err, parallel.std_err, rtol=1e-10)

    @pytest.mark.slow
    def test_bound_tightness_at_operating_point(self, default_cfg, default_csi):
        logger.info("Testing closed-form tightness against 10^4 Monte Carlo trials")
        p, noise = default_cfg.p_watts, default_cfg.noise_watts
        ctx = build_objective_context(default_csi, p, noise, 64, 4)
        phases = optimize_phases(ctx, default_cfg.seed).final_phases
        bound = rate_bound_eq20(default_csi, phases, p, noise, 64, 4).per_user
        report = monte_carlo_rate(default_csi, phases, Detector.ZF, default_cfg)
        assert np.all(bound <= report.per_user + 3 * report.std_err)
        assert np.all(np.abs(report.per_user - bound) / report.per_user <= 0.03)

    @pytest.mark.slow
    def test_zf_beats_mrc_at_high_power(self, default_cfg, default_csi):
        cfg = default_cfg.with_overrides(p_dbm=default_cfg.p_dbm + 20.0, mc_trials=2000)
        ctx = build_objective_context(default_csi, cfg.p_watts, cfg.noise_watts, 64, 4)
        phases = optimize_phases(ctx, cfg.seed).final_phases
        zf = monte_carlo_rate(default_csi, phases, Detector.ZF, cfg)
        mrc = monte_carlo_rate(default_csi, phases, Detector.MRC, cfg)
        assert zf.sum_rate > 1.2 * mrc.sum_rate
