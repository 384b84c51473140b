"""Input validation helpers shared by the estimator API and the CLI."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def check_panel_array(x, min_rows=2):
    """Coerce to a finite 2-D float array of shape (T, N)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DataError(f"expected a 2-D panel, got ndim={x.ndim}")
    if x.shape[0] < min_rows:
        raise DataError(f"panel needs at least {min_rows} rows, got {x.shape[0]}")
    if x.shape[1] < 1:
        raise DataError("panel needs at least one column")
    if not np.isfinite(x).all():
        raise DataError("panel contains non-finite entries")
    return x


def check_fitted(estimator, attribute="result_"):
    if getattr(estimator, attribute, None) is None:
        raise DataError(
            f"{type(estimator).__name__} is not fitted yet; call fit(X) first"
        )


def check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DataError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha
