"""Reward algebra: compression metrics and the F1-style episode reward."""

from fractions import Fraction

import numpy as np
import pytest

from edgeplan.reward import compression_metrics, episode_reward, harmonic, score_plan


def reward_fraction(kappa, nu, rho, beta):
    """Arbitrary-precision scalar evaluation used as the independent oracle."""
    kappa, nu, rho, beta = (Fraction(x) for x in (kappa, nu, rho, beta))

    def h(x, y):
        return Fraction(0) if x + y == 0 else 2 * x * y / (x + y)

    return (h(kappa, nu) + h(kappa, rho) + beta * h(nu, rho)) / 3


class TestCompressionMetrics:
    def test_uncompressed_plan_scores_zero(self):
        m = compression_metrics(1000, 1000, 1024, 1024)
        assert (m.nu, m.rho) == (0.0, 0.0)
        assert not m.nu_clamped and not m.rho_clamped

    def test_direct_arithmetic(self):
        m = compression_metrics(500, 1000, 128, 1024)
        assert m.nu == pytest.approx(0.5, abs=1e-12)
        assert m.rho == pytest.approx(0.875, abs=1e-12)

    def test_encoder_overhead_clamps_with_flag(self):
        m = compression_metrics(1200, 1000, 10, 1024)
        assert m.nu == 0.0
        assert m.nu_clamped and not m.rho_clamped

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            compression_metrics(1, 0, 1, 10)
        with pytest.raises(ValueError):
            compression_metrics(1, 10, 1, 0)


class TestEpisodeReward:
    def test_perfect_plan_scores_one(self):
        assert episode_reward(1.0, 1.0, 1.0, 1.0).reward == pytest.approx(1.0, abs=1e-12)

    def test_zero_sparsity_kills_two_terms(self):
        terms = episode_reward(1.0, 0.0, 1.0, 1.0)
        assert terms.r1 == 0.0 and terms.r3 == 0.0 and terms.r2 == 1.0
        assert terms.reward == pytest.approx(1.0 / 3.0, abs=1e-12)

    def test_against_exact_fraction_oracle(self):
        expected = float(reward_fraction("0.92", "0.5", "0.8", "0.5"))
        got = episode_reward(0.92, 0.5, 0.8, 0.5).reward
        assert got == pytest.approx(expected, abs=1e-9)
        assert got == pytest.approx(0.6037978617, abs=1e-9)

    def test_arguments_outside_unit_interval_rejected(self):
        for bad in ((1.2, 0.5, 0.5, 0.5), (0.5, -0.1, 0.5, 0.5),
                    (0.5, 0.5, 1.5, 0.5), (0.5, 0.5, 0.5, 2.0)):
            with pytest.raises(ValueError):
                episode_reward(*bad)

    def test_zero_denominator_convention(self):
        assert harmonic(0.0, 0.0) == 0.0
        assert episode_reward(0.0, 0.0, 0.0, 1.0).reward == 0.0


class TestRewardProperties:
    def test_range_monotonicity_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(2000):
            kappa, nu, rho, beta = rng.uniform(0.0, 1.0, size=4)
            terms = episode_reward(kappa, nu, rho, beta)
            assert 0.0 <= terms.reward <= 1.0
            # strictly increasing in kappa while nu, rho > 0
            if nu > 1e-9 and rho > 1e-9 and kappa < 0.99:
                higher = episode_reward(min(1.0, kappa + 0.01), nu, rho, beta)
                assert higher.reward > terms.reward
            # swapping nu and rho at beta = 1 leaves R unchanged
            swapped = episode_reward(kappa, rho, nu, 1.0)
            base = episode_reward(kappa, nu, rho, 1.0)
            assert swapped.reward == pytest.approx(base.reward, abs=1e-12)

    def test_beta_zero_removes_accuracy_independent_reward(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            nu, rho = rng.uniform(0.0, 1.0, size=2)
            assert episode_reward(0.0, nu, rho, 0.0).reward == 0.0

    def test_harmonic_below_arithmetic_mean(self):
        rng = np.random.default_rng(2)
        xs, ys = rng.uniform(0, 1, 500), rng.uniform(0, 1, 500)
        for x, y in zip(xs, ys):
            assert harmonic(x, y) <= (x + y) / 2 + 1e-15


class TestScorePlan:
    def test_composes_metrics_and_reward(self):
        terms = score_plan(kappa=0.9, lam=500, capital_lambda=1000,
                           omega=128, capital_omega=1024, beta=1.0)
        assert terms.nu == pytest.approx(0.5)
        assert terms.rho == pytest.approx(0.875)
        assert terms.lam == 500.0 and terms.capital_omega == 1024.0
        expected = float(reward_fraction("0.9", "0.5", Fraction(7, 8), 1))
        assert terms.reward == pytest.approx(expected, abs=1e-12)
