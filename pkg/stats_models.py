"""
Least-squares regression, sequential two-way ANOVA, effect sizes and the
bootstrap comparison of mean outcomes, over run tables produced by sweeps.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg, stats

from simulation_errors import ParameterError, SingularDesignError
from stats_distributions import f_sf, t_two_sided_p

RANK_TOL = 1e-10

BOT_TYPE_TERM = "C(bot_type)"
PROPORTION_TERM = "proportion"
INTERACTION_TERM = "C(bot_type):proportion"

BAD_BOT = "bad_bot"
INFO_CORRECTION_BOT = "info_correction_bot"
GOOD_BOT = "good_bot"


@dataclass(frozen=True, eq=False)
class LinearFit:
    names: tuple
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    r_squared: float
    adj_r_squared: float
    f_statistic: float
    f_p_value: float
    rss: float
    df_model: int
    df_residual: int
    n_obs: int
    intercept: bool
    residuals: np.ndarray

    def coefficient(self, name):
        return float(self.coefficients[self.names.index(name)])

    def to_dict(self):
        return {
            "n_obs": self.n_obs,
            "df_model": self.df_model,
            "df_residual": self.df_residual,
            "r_squared": self.r_squared,
            "adj_r_squared": self.adj_r_squared,
            "f_statistic": self.f_statistic,
            "f_p_value": self.f_p_value,
            "rss": self.rss,
            "terms": [
                {
                    "name": name,
                    "coef": float(coef),
                    "std_err": float(se),
                    "t": float(t),
                    "p": float(p),
                }
                for name, coef, se, t, p in zip(
                    self.names, self.coefficients, self.std_errors, self.t_values, self.p_values
                )
            ],
        }


def ols_fit(rows, response, intercept=True, names=None):
    """Least-squares fit through a QR decomposition of the design matrix.

    ``rows`` holds one predictor vector per observation; with ``intercept`` a
    constant column named "const" is prepended. A column that is (numerically)
    a combination of the columns before it raises SingularDesignError naming it.
    """
    X = np.asarray(rows, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(response, dtype=float)
    n = X.shape[0]
    if y.shape != (n,):
        raise ParameterError(f"response has {y.size} values for {n} design rows", field="response")
    names = [f"x{i + 1}" for i in range(X.shape[1])] if names is None else list(names)
    if len(names) != X.shape[1]:
        raise ParameterError(f"{len(names)} names given for {X.shape[1]} predictors", field="names")
    if intercept:
        X = np.column_stack([np.ones(n), X])
        names = ["const"] + names
    p = X.shape[1]
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ParameterError("design and response must be finite", field="response")
    if n < p + 1:
        raise ParameterError(f"need at least {p + 1} rows for {p} coefficients, got {n}", field="rows")

    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    scale = max(diag.max(), 1.0)
    for j in range(p):
        if diag[j] <= RANK_TOL * scale:
            raise SingularDesignError(f"design is rank deficient at column {names[j]!r}", column=names[j])

    beta = linalg.solve_triangular(R, Q.T @ y)
    residuals = y - X @ beta
    rss = float(residuals @ residuals)
    df_residual = n - p
    df_model = p - 1 if intercept else p
    r_inv = linalg.solve_triangular(R, np.eye(p))
    sigma2 = rss / df_residual
    std_errors = np.sqrt(sigma2 * np.sum(r_inv * r_inv, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_values = beta / std_errors
    p_values = t_two_sided_p(t_values, df_residual)

    tss = float(((y - y.mean()) ** 2).sum()) if intercept else float(y @ y)
    if tss == 0.0:
        # constant response
        r_squared, adj_r_squared = 0.0, 0.0
        f_statistic, f_p_value = 0.0, 1.0
    else:
        r_squared = min(1.0, max(0.0, 1.0 - rss / tss))
        dof_total = n - 1 if intercept else n
        adj_r_squared = 1.0 - (1.0 - r_squared) * dof_total / df_residual
        if df_model == 0:
            f_statistic, f_p_value = math.nan, math.nan
        elif rss == 0.0:
            f_statistic, f_p_value = math.inf, 0.0
        else:
            f_statistic = ((tss - rss) / df_model) / (rss / df_residual)
            f_p_value = f_sf(f_statistic, df_model, df_residual)

    return LinearFit(
        names=tuple(names),
        coefficients=beta,
        std_errors=std_errors,
        t_values=t_values,
        p_values=np.asarray(p_values, dtype=float),
        r_squared=r_squared,
        adj_r_squared=adj_r_squared,
        f_statistic=f_statistic,
        f_p_value=f_p_value,
        rss=rss,
        df_model=df_model,
        df_residual=df_residual,
        n_obs=n,
        intercept=intercept,
        residuals=residuals,
    )


@dataclass(frozen=True)
class AnovaRow:
    name: str
    sum_sq: float
    df: int
    F: object = None
    p: object = None


@dataclass(frozen=True)
class AnovaTable:
    terms: tuple
    residual: AnovaRow

    @property
    def total_sum_sq(self):
        return sum(row.sum_sq for row in self.terms) + self.residual.sum_sq

    def term(self, name):
        for row in self.terms:
            if row.name == name:
                return row
        raise ParameterError(f"no ANOVA term named {name!r}", field="term")

    def to_dict(self):
        rows = [dataclasses.asdict(row) for row in self.terms + (self.residual,)]
        return {"rows": rows, "total_sum_sq": self.total_sum_sq}


def _rss_and_rank(X, y):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    residuals = y - X @ beta
    return float(residuals @ residuals), int(rank)


def anova_two_way(data):
    """Type-I ANOVA of outcome ~ C(bot_type) + proportion + C(bot_type):proportion.

    ``data`` is a DataFrame (or a list of mappings) with bot_type, proportion
    and outcome columns. Proportion enters as a single continuous regressor.
    """
    frame = pd.DataFrame(data)
    missing = [c for c in ("bot_type", "proportion", "outcome") if c not in frame.columns]
    if missing:
        raise ParameterError(f"ANOVA data is missing columns: {', '.join(missing)}", field=missing[0])
    y = frame["outcome"].to_numpy(dtype=float)
    proportion = frame["proportion"].to_numpy(dtype=float)
    if not (np.isfinite(y).all() and np.isfinite(proportion).all()):
        raise ParameterError("ANOVA outcome and proportion must be finite", field="outcome")

    levels = sorted(frame["bot_type"].astype(str).unique())
    if len(levels) < 2:
        raise ParameterError(
            f"factor bot_type needs at least 2 levels, got {levels}", field="bot_type"
        )
    counts = frame["bot_type"].astype(str).value_counts()
    thin = [level for level in levels if counts[level] < 2]
    if thin:
        raise ParameterError(f"bot_type levels with fewer than 2 rows: {thin}", field="bot_type")

    bot_type = frame["bot_type"].astype(str).to_numpy()
    dummies = np.column_stack([(bot_type == level).astype(float) for level in levels[1:]])
    blocks = [
        (BOT_TYPE_TERM, dummies),
        (PROPORTION_TERM, proportion[:, None]),
        (INTERACTION_TERM, dummies * proportion[:, None]),
    ]

    X = np.ones((len(y), 1))
    rss_prev, rank_prev = _rss_and_rank(X, y)
    steps = []
    for name, block in blocks:
        X = np.column_stack([X, block])
        rss, rank = _rss_and_rank(X, y)
        steps.append((name, max(0.0, rss_prev - rss), rank - rank_prev))
        rss_prev, rank_prev = rss, rank

    df_residual = len(y) - rank_prev
    if df_residual <= 0:
        raise ParameterError(f"no residual degrees of freedom left ({len(y)} rows)", field="outcome")
    ms_residual = rss_prev / df_residual

    rows = []
    for name, sum_sq, df in steps:
        if df == 0:
            rows.append(AnovaRow(name=name, sum_sq=sum_sq, df=0))
            continue
        if ms_residual == 0.0:
            F = math.inf if sum_sq > 0 else 0.0
        else:
            F = (sum_sq / df) / ms_residual
        rows.append(AnovaRow(name=name, sum_sq=sum_sq, df=df, F=F, p=f_sf(F, df, df_residual)))

    table = AnovaTable(terms=tuple(rows), residual=AnovaRow(name="Residual", sum_sq=rss_prev, df=df_residual))
    logging.debug(f"Two-way ANOVA over {len(y)} rows and levels {levels}: {table}")
    return table


def eta_squared(table, term):
    total = table.total_sum_sq
    if total == 0:
        return 0.0
    return table.term(term).sum_sq / total


def cohens_f(eta2):
    if not 0.0 <= eta2 < 1.0:
        raise ParameterError(f"eta squared must be within [0, 1), got {eta2}", field="eta2")
    return math.sqrt(eta2 / (1.0 - eta2))


def eta_squared_from_f(f):
    return f * f / (1.0 + f * f)


@dataclass(frozen=True)
class MeanComparison:
    mean_a: float
    mean_b: float
    difference: float
    ci_low: float
    ci_high: float
    confidence: float
    n_a: int
    n_b: int

    @property
    def b_exceeds_a(self):
        return self.ci_low > 0

    def to_dict(self):
        return {**dataclasses.asdict(self), "b_exceeds_a": self.b_exceeds_a}


def compare_means_bootstrap(a, b, confidence=0.99, seed=0, n_resamples=9999):
    """Percentile bootstrap interval for mean(b) - mean(a)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ParameterError(f"bootstrap needs at least 2 values per sample, got {len(a)} and {len(b)}", field="samples")

    def mean_difference(x, y, axis):
        return np.mean(y, axis=axis) - np.mean(x, axis=axis)

    result = stats.bootstrap(
        (a, b),
        mean_difference,
        n_resamples=n_resamples,
        vectorized=True,
        paired=False,
        confidence_level=confidence,
        method="percentile",
        rng=np.random.default_rng(seed),
    )
    return MeanComparison(
        mean_a=float(a.mean()),
        mean_b=float(b.mean()),
        difference=float(b.mean() - a.mean()),
        ci_low=float(result.confidence_interval.low),
        ci_high=float(result.confidence_interval.high),
        confidence=confidence,
        n_a=len(a),
        n_b=len(b),
    )


BOT_INTERACTION_TERMS = (
    "good_bots_present",
    "info_correction_bots_present",
    "bad_bots",
    "good_bots",
    "info_correction_bots",
    "bad_bots_x_good_bots_present",
    "bad_bots_x_info_correction_bots_present",
    "bad_bots_x_good_bots",
    "bad_bots_x_info_correction_bots",
)


def _ratios(frame):
    missing = [c for c in ("alpha1", "alpha2", "alpha3") if c not in frame.columns]
    if missing:
        raise ParameterError(f"missing columns: {', '.join(missing)}", field=missing[0])
    return (frame[c].to_numpy(dtype=float) for c in ("alpha1", "alpha2", "alpha3"))


def bot_interaction_design(frame):
    """Predictor table of the bot-interaction model (Bad Bots present is always 1 and omitted)."""
    bad, info, good = _ratios(frame)
    good_present = (good > 0).astype(float)
    info_present = (info > 0).astype(float)
    return pd.DataFrame({
        "good_bots_present": good_present,
        "info_correction_bots_present": info_present,
        "bad_bots": bad,
        "good_bots": good,
        "info_correction_bots": info,
        "bad_bots_x_good_bots_present": bad * good_present,
        "bad_bots_x_info_correction_bots_present": bad * info_present,
        "bad_bots_x_good_bots": bad * good,
        "bad_bots_x_info_correction_bots": bad * info,
    }, columns=list(BOT_INTERACTION_TERMS))


def proportions_design(frame):
    bad, info, good = _ratios(frame)
    return pd.DataFrame({"bad_bots": bad, "info_correction_bots": info, "good_bots": good})


def _converged(frame, outcome_column):
    if outcome_column not in frame.columns:
        raise ParameterError(f"missing column: {outcome_column}", field=outcome_column)
    ticks = pd.to_numeric(frame[outcome_column], errors="coerce")
    kept = frame.loc[ticks.notna()].copy()
    kept[outcome_column] = ticks[ticks.notna()]
    dropped = len(frame) - len(kept)
    if dropped:
        logging.info(f"Dropped {dropped} runs without a {outcome_column} (did not converge)")
    return kept


def fit_runs(frame, outcome_column, model="interaction"):
    """OLS of an outcome tick on the bot ratios; ``model`` is 'interaction' or 'proportions'."""
    frame = _converged(frame, outcome_column)
    if model == "interaction":
        design = bot_interaction_design(frame)
    elif model == "proportions":
        design = proportions_design(frame)
    else:
        raise ParameterError(f"unknown model {model!r}; expected 'interaction' or 'proportions'", field="model")
    return ols_fit(design.to_numpy(), frame[outcome_column].to_numpy(dtype=float), names=list(design.columns))


def anova_rows_from_runs(frame, outcome_column):
    """(bot_type, proportion, outcome) rows from single-variation runs.

    A run with no defenders counts as bad_bot at its alpha1; a run with only
    Info-Correction Bots or only Good Bots counts as that type at alpha2 or
    alpha3. Runs mixing both defender types, and unconverged runs, are left out.
    """
    frame = _converged(frame, outcome_column)
    bad, info, good = _ratios(frame)
    bot_type = np.full(len(frame), "", dtype=object)
    bot_type[(info == 0) & (good == 0)] = BAD_BOT
    bot_type[(info > 0) & (good == 0)] = INFO_CORRECTION_BOT
    bot_type[(info == 0) & (good > 0)] = GOOD_BOT
    proportion = np.select([bot_type == BAD_BOT, bot_type == INFO_CORRECTION_BOT], [bad, info], default=good)
    rows = pd.DataFrame({
        "bot_type": bot_type,
        "proportion": proportion,
        "outcome": frame[outcome_column].to_numpy(dtype=float),
    })
    return rows[rows["bot_type"] != ""].reset_index(drop=True)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    return f"{value:.6g}"


def format_linear_fit(fit, title="OLS"):
    lines = [
        title,
        f"R^2 = {_cell(fit.r_squared)}   adj. R^2 = {_cell(fit.adj_r_squared)}   "
        f"F({fit.df_model},{fit.df_residual}) = {_cell(fit.f_statistic)}   p = {_cell(fit.f_p_value)}",
        f"{'term':<42}{'coef':>14}{'std err':>14}{'t':>14}{'p':>14}",
    ]
    for name, coef, se, t, p in zip(fit.names, fit.coefficients, fit.std_errors, fit.t_values, fit.p_values):
        lines.append(f"{name:<42}{_cell(float(coef)):>14}{_cell(float(se)):>14}{_cell(float(t)):>14}{_cell(float(p)):>14}")
    return "\n".join(lines)


def format_anova_table(table, title="ANOVA"):
    lines = [title, f"{'term':<28}{'sum_sq':>14}{'df':>6}{'F':>14}{'p':>14}"]
    for row in table.terms + (table.residual,):
        lines.append(f"{row.name:<28}{_cell(row.sum_sq):>14}{row.df:>6}{_cell(row.F):>14}{_cell(row.p):>14}")
    return "\n".join(lines)
