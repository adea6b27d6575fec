"""
t, F and noncentral F distribution functions, all evaluated through the
regularized incomplete beta function, plus the one-way ANOVA power solver
used to size replications per condition.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import optimize, special, stats

from simulation_errors import ParameterError

SERIES_TAIL = 1e-12
N_BRACKET = (1.01, 1e6)
N_XTOL = 1e-6


def regularized_incomplete_beta(x, a, b):
    """I_x(a, b); accepts scalars or arrays."""
    return special.betainc(a, b, np.clip(x, 0.0, 1.0))


def t_two_sided_p(t, df):
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    t = np.asarray(t, dtype=float)
    p = regularized_incomplete_beta(df / (df + t * t), df / 2.0, 0.5)
    return float(p) if p.ndim == 0 else p


def _check_df(df1, df2):
    if not (df1 > 0 and df2 > 0):
        raise ParameterError(f"degrees of freedom must be positive, got ({df1}, {df2})", field="df")


def f_cdf(x, df1, df2):
    _check_df(df1, df2)
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return float(regularized_incomplete_beta(df1 * x / (df1 * x + df2), df1 / 2.0, df2 / 2.0))


def f_sf(x, df1, df2):
    _check_df(df1, df2)
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return float(regularized_incomplete_beta(df2 / (df2 + df1 * x), df2 / 2.0, df1 / 2.0))


def f_ppf(q, df1, df2):
    _check_df(df1, df2)
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"quantile must be within [0, 1], got {q}", field="q")
    if q == 1.0:
        return math.inf
    # invert the complementary tail: 1 - y underflows to 0 for tiny df2
    y_c = float(special.betaincinv(df2 / 2.0, df1 / 2.0, 1.0 - q))
    if y_c == 0.0:
        return math.inf
    return df2 * (1.0 - y_c) / (df1 * y_c)


def noncentral_f_cdf(x, df1, df2, lam):
    """CDF of the noncentral F as a Poisson(lam/2)-weighted sum of incomplete beta terms.

    Terms are kept over the central Poisson range whose two tails each weigh
    less than half of SERIES_TAIL.
    """
    _check_df(df1, df2)
    if x < 0:
        raise ParameterError(f"x must be non-negative, got {x}", field="x")
    if lam < 0:
        raise ParameterError(f"noncentrality must be non-negative, got {lam}", field="lambda")
    if lam == 0:
        return f_cdf(x, df1, df2)
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0

    y = df1 * x / (df1 * x + df2)
    mu = lam / 2.0
    lo = max(0, int(stats.poisson.ppf(SERIES_TAIL / 2, mu)))
    hi = int(stats.poisson.isf(SERIES_TAIL / 2, mu))
    j = np.arange(lo, hi + 1)
    weights = stats.poisson.pmf(j, mu)
    terms = regularized_incomplete_beta(y, df1 / 2.0 + j, df2 / 2.0)
    return float(min(1.0, max(0.0, np.dot(weights, terms))))


@dataclass(frozen=True)
class PowerSpec:
    effect_size: float
    groups: int
    alpha: float = 0.05
    power: float = 0.8

    def validate(self):
        if not self.effect_size >= 0:
            raise ParameterError(f"effect size f must be >= 0, got {self.effect_size}", field="effect_size")
        if self.groups < 2:
            raise ParameterError(f"power analysis needs at least 2 groups, got {self.groups}", field="groups")
        if not 0 < self.alpha < 1:
            raise ParameterError(f"alpha must be within (0, 1), got {self.alpha}", field="alpha")
        if not 0 < self.power < 1:
            raise ParameterError(f"target power must be within (0, 1), got {self.power}", field="power")
        return self


@dataclass(frozen=True)
class PowerSolution:
    n_continuous: float
    n_per_group: int
    achieved_power: float
    effect_size: float
    groups: int
    alpha: float
    target_power: float

    def to_dict(self):
        return {
            "effect_size": self.effect_size,
            "groups": self.groups,
            "alpha": self.alpha,
            "target_power": self.target_power,
            "n_continuous": self.n_continuous,
            "n_per_group": self.n_per_group,
            "achieved_power": self.achieved_power,
        }


def anova_power(f, k, n, alpha=0.05):
    """Power of the one-way fixed-effects ANOVA F test with n (possibly fractional) runs per group."""
    df1 = k - 1
    df2 = k * (n - 1)
    if df2 <= 0:
        raise ParameterError(f"within-group degrees of freedom k(n-1) must be positive, got {df2}", field="n")
    critical = f_ppf(1.0 - alpha, df1, df2)
    return 1.0 - noncentral_f_cdf(critical, df1, df2, f * f * k * n)


def anova_power_required_n(spec):
    """Smallest per-group n reaching the target power, with the continuous solution."""
    spec.validate()
    f, k, alpha, target = spec.effect_size, spec.groups, spec.alpha, spec.power
    lo, hi = N_BRACKET

    def shortfall(n):
        return anova_power(f, k, n, alpha) - target

    if shortfall(hi) < 0:
        raise ParameterError(
            f"power {target} is unattainable for f={f}, k={k}, alpha={alpha} with up to {hi:g} runs per group",
            field="effect_size",
        )
    if shortfall(lo) >= 0:
        n_continuous = lo
    else:
        n_continuous = optimize.bisect(shortfall, lo, hi, xtol=N_XTOL)

    n_per_group = math.ceil(n_continuous)
    checkpoints = np.linspace(lo, n_per_group, 8)
    powers = [anova_power(f, k, n, alpha) for n in checkpoints]
    if any(b < a - 1e-9 for a, b in zip(powers, powers[1:])):
        logging.warning(f"Power is not monotone in n for f={f}, k={k}, alpha={alpha}: {powers}")

    solution = PowerSolution(
        n_continuous=float(n_continuous),
        n_per_group=n_per_group,
        achieved_power=anova_power(f, k, n_per_group, alpha),
        effect_size=f,
        groups=k,
        alpha=alpha,
        target_power=target,
    )
    logging.debug(f"Power solution: {solution}")
    return solution


def power_curve(f, k, alpha=0.05, ns=range(2, 11)):
    """Power at each per-group n, as a DataFrame with columns n and power."""
    ns = list(ns)
    return pd.DataFrame({
        "n": ns,
        "power": [anova_power(f, k, n, alpha) for n in ns],
    })
