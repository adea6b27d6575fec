import math
import unittest

import numpy as np
from scipy import stats

from simulation_errors import ParameterError
from stats_distributions import (
    PowerSpec,
    anova_power,
    anova_power_required_n,
    f_cdf,
    f_ppf,
    f_sf,
    noncentral_f_cdf,
    power_curve,
    t_two_sided_p,
)
from stats_models import cohens_f

# (eta squared, Cohen's f, reported n per group) for the three bot types
REPORTED_POWER_ROWS = [
    (0.85, 2.39, 1.96),
    (0.83, 2.22, 2.09),
    (0.89, 2.85, 1.74),
    (0.87, 2.57, 1.86),
    (0.84, 2.28, 2.02),
    (0.81, 2.06, 2.21),
]


class TestCentralDistributions(unittest.TestCase):
    def test_f_matches_scipy(self):
        for x, df1, df2 in ((0.5, 1, 1), (2.0, 3, 10), (7.5, 9, 2.5), (0.01, 20, 40)):
            with self.subTest(x=x, df1=df1, df2=df2):
                self.assertAlmostEqual(f_cdf(x, df1, df2), stats.f.cdf(x, df1, df2), places=10)
                self.assertAlmostEqual(f_sf(x, df1, df2), stats.f.sf(x, df1, df2), places=10)

    def test_f_ppf_inverts_cdf(self):
        for q in (0.05, 0.5, 0.95, 0.999):
            x = f_ppf(q, 2, 7)
            self.assertAlmostEqual(f_cdf(x, 2, 7), q, places=9)
            self.assertAlmostEqual(x, stats.f.ppf(q, 2, 7), places=7)
        self.assertEqual(f_ppf(1.0, 2, 7), math.inf)
        self.assertEqual(f_cdf(0.0, 2, 7), 0.0)

    def test_t_two_sided(self):
        for t, df in ((0.0, 5), (2.0, 10), (-3.5, 3), (1.96, 1000)):
            self.assertAlmostEqual(t_two_sided_p(t, df), 2 * stats.t.sf(abs(t), df), places=10)

    def test_bad_degrees_of_freedom(self):
        with self.assertRaises(ParameterError):
            f_cdf(1.0, 0, 3)


class TestNoncentralF(unittest.TestCase):
    def test_zero_noncentrality_is_central(self):
        for x in (0.1, 1.0, 4.0, 30.0):
            self.assertAlmostEqual(noncentral_f_cdf(x, 2, 9, 0.0), f_cdf(x, 2, 9), delta=1e-10)

    def test_matches_scipy(self):
        for x, df1, df2, lam in ((2.0, 2, 9, 5.0), (4.26, 2, 9, 20.0), (1.0, 5, 3.5, 60.0), (10.0, 1, 30, 200.0)):
            with self.subTest(x=x, lam=lam):
                self.assertAlmostEqual(noncentral_f_cdf(x, df1, df2, lam), stats.ncf.cdf(x, df1, df2, lam), places=8)

    def test_monte_carlo(self):
        rng = np.random.default_rng(12345)
        samples = rng.noncentral_f(2, 9, 5.0, size=1_000_000)
        expected = noncentral_f_cdf(2.0, 2, 9, 5.0)
        sigma = math.sqrt(expected * (1 - expected) / samples.size)
        self.assertLess(abs(np.mean(samples <= 2.0) - expected), 4 * sigma)

    def test_monotone(self):
        xs = [0.5, 1.0, 2.0, 4.0, 8.0]
        values = [noncentral_f_cdf(x, 2, 9, 5.0) for x in xs]
        self.assertEqual(values, sorted(values))
        lams = [0.0, 1.0, 5.0, 20.0, 80.0]
        values = [noncentral_f_cdf(2.0, 2, 9, lam) for lam in lams]
        self.assertEqual(values, sorted(values, reverse=True))

    def test_rejects_negative_inputs(self):
        with self.assertRaises(ParameterError):
            noncentral_f_cdf(-1.0, 2, 9, 1.0)
        with self.assertRaises(ParameterError):
            noncentral_f_cdf(1.0, 2, 9, -1.0)


class TestAnovaPower(unittest.TestCase):
    def test_reported_sample_sizes(self):
        for eta2, f, n in REPORTED_POWER_ROWS:
            with self.subTest(f=f):
                self.assertGreaterEqual(f, cohens_f(eta2 - 0.005) - 1e-9)
                self.assertLessEqual(f, cohens_f(eta2 + 0.005) + 1e-9)
                solution = anova_power_required_n(PowerSpec(effect_size=f, groups=3))
                self.assertLess(abs(solution.n_continuous - n), 0.3)
                self.assertEqual(solution.n_per_group, math.ceil(solution.n_continuous))
                self.assertGreaterEqual(solution.achieved_power, 0.8 - 1e-6)

    def test_power_at_solution_hits_target(self):
        solution = anova_power_required_n(PowerSpec(effect_size=0.5, groups=4))
        self.assertAlmostEqual(anova_power(0.5, 4, solution.n_continuous), 0.8, places=4)

    def test_more_groups_need_fewer_runs_each(self):
        three = anova_power_required_n(PowerSpec(effect_size=2.39, groups=3))
        ten = anova_power_required_n(PowerSpec(effect_size=2.39, groups=10))
        self.assertLess(ten.n_continuous, three.n_continuous)

    def test_larger_effect_never_needs_more(self):
        for f in (0.25, 0.5, 1.0):
            small = anova_power_required_n(PowerSpec(effect_size=f, groups=3))
            large = anova_power_required_n(PowerSpec(effect_size=2 * f, groups=3))
            self.assertLessEqual(large.n_continuous, small.n_continuous)

    def test_simulated_rejection_rate(self):
        f, k, n, trials = 1.0, 3, 2, 10_000
        rng = np.random.default_rng(99)
        means = f * math.sqrt(1.5) * np.array([-1.0, 0.0, 1.0])
        data = rng.normal(size=(trials, k, n)) + means[None, :, None]
        group_means = data.mean(axis=2)
        grand = group_means.mean(axis=1, keepdims=True)
        between = n * ((group_means - grand) ** 2).sum(axis=1) / (k - 1)
        within = ((data - group_means[:, :, None]) ** 2).sum(axis=(1, 2)) / (k * (n - 1))
        critical = stats.f.ppf(0.95, k - 1, k * (n - 1))
        rate = float(np.mean(between / within > critical))
        expected = anova_power(f, k, n)
        sigma = math.sqrt(expected * (1 - expected) / trials)
        self.assertLess(abs(rate - expected), 4 * sigma)

    def test_unattainable_and_invalid(self):
        with self.assertRaises(ParameterError) as ctx:
            anova_power_required_n(PowerSpec(effect_size=0.0, groups=3))
        self.assertEqual(ctx.exception.field, "effect_size")
        for spec, field in ((PowerSpec(1.0, 1), "groups"), (PowerSpec(1.0, 3, alpha=1.0), "alpha"),
                            (PowerSpec(1.0, 3, power=0.0), "power"), (PowerSpec(-1.0, 3), "effect_size")):
            with self.assertRaises(ParameterError) as ctx:
                spec.validate()
            self.assertEqual(ctx.exception.field, field)

    def test_power_curve(self):
        curve = power_curve(0.5, 3, ns=[2, 5, 10, 20])
        self.assertEqual(list(curve.columns), ["n", "power"])
        self.assertTrue(curve["power"].is_monotonic_increasing)
        self.assertTrue(((curve["power"] > 0.05) & (curve["power"] < 1)).all())


if __name__ == '__main__':
    unittest.main()
