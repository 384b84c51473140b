"""Monte-Carlo predictive distributions, VaR extraction, scores, backtests.

A forecast draws M h-step factor paths from the fitted vine conditional on
the most recent pseudo-observations, maps them back to factor space with the
empirical margin quantiles, and assembles observation paths as
``loadings_rotated @ factors + resampled residual rows``.  Whole residual
rows are resampled jointly so the cross-sectional dependence of the
idiosyncratic component survives.

In the expanding-window backtest the parameters and the rotation stay fixed
after the initial fit; only the conditioning history and the empirical
margin samples grow (a ``fixed_margins`` switch keeps the training margins
instead).  New factor values come from projecting the incoming observation
rows on the frozen loadings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .factors import project_factors
from .margins import ecdf, empirical_quantile, pseudo_observations
from .mvine import simulate_conditional
from .rotation import build_h

_RESIDUAL_STREAM = 1_000_003  # offset separating residual draws from vine draws


@dataclass
class ForecastEnsemble:
    """M simulated h-step paths of observations and factors."""

    horizon: int
    paths: np.ndarray  # (M, h, N)
    factor_paths: np.ndarray  # (M, h, K)
    seed: int

    def __post_init__(self):
        if self.paths.shape[0] < 1:
            raise DataError("ensemble needs at least one path")
        if not np.isfinite(self.paths).all():
            raise DataError("ensemble contains non-finite entries")


def _factor_paths_from_u(u_paths, margin_samples):
    m, h, k = u_paths.shape
    out = np.empty_like(u_paths)
    for j in range(k):
        out[:, :, j] = empirical_quantile(margin_samples[j], u_paths[:, :, j])
    return out


def _residual_rows(residuals, n_paths, horizon, seed):
    t = residuals.shape[0]
    idx = np.empty((n_paths, horizon), dtype=int)
    for m in range(n_paths):
        rng = np.random.default_rng(
            np.random.SeedSequence((int(seed), _RESIDUAL_STREAM, int(m)))
        )
        idx[m] = rng.integers(0, t, size=horizon)
    return idx


def forecast(model, horizon, n_paths, seed=0, series_indices=None):
    """Monte-Carlo predictive ensemble for the fitted model.

    Parameters
    ----------
    model : FittedModel
    horizon : int
    n_paths : int
    seed : int
        Path m draws from streams derived from (seed, m), so individual
        paths do not depend on the batch size.
    series_indices : sequence of int, optional
        Restrict the observation paths to these columns (all by default).

    Returns
    -------
    ForecastEnsemble
    """
    if horizon < 1:
        raise DataError("horizon must be >= 1")
    if n_paths < 1:
        raise DataError("n_paths must be >= 1")
    u_hist = pseudo_observations(model.rotated_factors)
    u_paths = simulate_conditional(
        model.mvine, u_hist[-model.p :], horizon, n_paths, seed=seed
    )
    margin_samples = [m.sorted_sample for m in model.margins]
    f_paths = _factor_paths_from_u(u_paths, margin_samples)

    loadings = model.loadings_rotated
    residuals = model.decomposition.residuals
    if series_indices is not None:
        series_indices = list(series_indices)
        loadings = loadings[series_indices]
        residuals = residuals[:, series_indices]
    idx = _residual_rows(residuals, n_paths, horizon, seed)
    x_paths = np.einsum("mhk,nk->mhn", f_paths, loadings) + residuals[idx]
    return ForecastEnsemble(horizon=horizon, paths=x_paths, factor_paths=f_paths, seed=seed)


def quantile_score(y_forecast, x_realized, alpha):
    """Consistent quantile (pinball) scoring rule for an alpha-quantile
    forecast ``y`` against the realization ``x``:

        S(y, x) = |1{x <= y} - alpha| * |y - x|

    which charges ``alpha`` per unit of under-forecast and ``1 - alpha`` per
    unit of over-forecast, so the expected score is minimized by the true
    alpha-quantile.
    """
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie in (0, 1)")
    indicator = 1.0 * (np.asarray(x_realized) <= np.asarray(y_forecast))
    return np.abs(indicator - alpha) * np.abs(np.asarray(y_forecast) - np.asarray(x_realized))


def mean_quantile_score(var_series, realized, alpha):
    """Arithmetic mean of the quantile scores over a test window."""
    var_series = np.asarray(var_series, dtype=float)
    realized = np.asarray(realized, dtype=float)
    if var_series.shape != realized.shape:
        raise DataError("forecast and realized series must have equal length")
    return float(np.mean(quantile_score(var_series, realized, alpha)))


def var_from_ensemble(ensemble, series_index, step, alpha):
    """Empirical alpha-quantile across the ensemble at one (step, series)."""
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie in (0, 1)")
    draws = np.sort(ensemble.paths[:, step, series_index])
    return float(empirical_quantile(draws, alpha))


def var_from_absolute_returns(ensemble_of_abs, series_index, step, alpha):
    """VaR of a signed return from a forecast of its absolute value.

    Under the equal-probability assumption for the return sign, the
    lower-tail VaR is -Q(1 - 2 alpha) and the upper tail +Q(2 alpha - 1),
    with Q the ensemble quantile of the absolute return.
    """
    if alpha == 0.5:
        raise DataError("alpha = 0.5 has no tail under the symmetry assumption")
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie in (0, 1)")
    if alpha < 0.5:
        return -var_from_ensemble(ensemble_of_abs, series_index, step, 1.0 - 2.0 * alpha)
    return var_from_ensemble(ensemble_of_abs, series_index, step, 2.0 * alpha - 1.0)


def count_violations(var_series, realized, alpha):
    """Lower tails (alpha < 0.5) count realized < VaR; upper tails the reverse."""
    var_series = np.asarray(var_series, dtype=float)
    realized = np.asarray(realized, dtype=float)
    if var_series.shape != realized.shape:
        raise DataError("forecast and realized series must have equal length")
    if not 0.0 < alpha < 1.0 or alpha == 0.5:
        raise DataError("alpha must lie in (0, 1) and name a tail")
    if alpha < 0.5:
        return int(np.sum(realized < var_series))
    return int(np.sum(realized > var_series))


@dataclass
class BacktestRow:
    step: int
    alpha: float
    var: float
    realized: float
    score: float
    violation: bool


def expanding_backtest(
    model,
    values,
    train_end,
    alphas,
    n_paths=1000,
    seed=0,
    series_index=0,
    fixed_margins=False,
    abs_returns=False,
    realized_returns=None,
):
    """One-step-ahead VaR backtest over rows train_end..T-1 of ``values``.

    The model's parameters and rotation are frozen; each step projects the
    newly observed rows onto the fixed loadings, re-ranks the grown factor
    sample (unless ``fixed_margins``), simulates one step ahead, and scores
    the VaR forecasts against the realized value.

    With ``abs_returns`` the panel is understood as absolute returns and the
    VaR is mapped to signed returns by the symmetry rule; ``realized_returns``
    then supplies the signed series to score against (defaults to the target
    column of ``values``).
    """
    values = np.asarray(values, dtype=float)
    t_total = values.shape[0]
    if not model.p < train_end < t_total:
        raise DataError("train_end must leave both a training and a test window")
    h = build_h(model.angles) * model.signs
    base_factors = model.rotated_factors
    t_train = base_factors.shape[0]
    if t_train != train_end:
        raise DataError("model was not fitted on the first train_end rows")

    new_rot = project_factors(model.decomposition, values[train_end:]) @ h
    all_rot = np.vstack([base_factors, new_rot])
    lam_row = model.loadings_rotated[series_index]
    resid_col = model.decomposition.residuals[:, series_index]
    if realized_returns is None:
        realized_returns = values[:, series_index]

    rows = []
    for t in range(train_end, t_total):
        if fixed_margins:
            sample = all_rot[:train_end]
            u_hist = np.column_stack(
                [ecdf(sample[:, j], all_rot[t - model.p : t, j]) for j in range(model.k)]
            )
            u_hist = np.clip(u_hist, 1e-10, 1 - 1e-10)
        else:
            sample = all_rot[:t]
            u_hist = pseudo_observations(sample)[-model.p :]
        u_path = simulate_conditional(model.mvine, u_hist, 1, n_paths, seed=(seed + t))
        f_path = np.empty((n_paths, model.k))
        for j in range(model.k):
            sorted_col = np.sort(sample[:, j])
            f_path[:, j] = empirical_quantile(sorted_col, u_path[:, 0, j])
        rng = np.random.default_rng(np.random.SeedSequence((int(seed + t), _RESIDUAL_STREAM)))
        draws = f_path @ lam_row + resid_col[rng.integers(0, resid_col.size, size=n_paths)]
        draws.sort()
        realized = realized_returns[t]
        for alpha in alphas:
            if abs_returns:
                if alpha < 0.5:
                    var = -float(empirical_quantile(draws, 1.0 - 2.0 * alpha))
                else:
                    var = float(empirical_quantile(draws, 2.0 * alpha - 1.0))
            else:
                var = float(empirical_quantile(draws, alpha))
            score = float(quantile_score(var, realized, alpha))
            if alpha < 0.5:
                violation = bool(realized < var)
            else:
                violation = bool(realized > var)
            rows.append(
                BacktestRow(
                    step=t,
                    alpha=alpha,
                    var=var,
                    realized=realized,
                    score=score,
                    violation=violation,
                )
            )
    return rows
