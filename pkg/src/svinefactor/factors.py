"""Principal-component estimation of the approximate factor model.

Factors are sqrt(T) times the top-K eigenvectors of X X^T / (T N), so
F^T F / T = I; loadings are X^T F / T.  The eigendecomposition runs on the
T x T Gram matrix when T <= N and on the N x N matrix otherwise (same
spectrum, converted through the SVD duality).  Eigenvector signs are fixed
so the first nonzero entry of each eigenvector is positive.

``select_k`` implements the information criterion

    IC(k) = log(SSR(k)) + k * ((T + N)/(T N)) * log(min(T, N))

with the residual sum taken over all (t, i) entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericsError

_TIE_TOL = 1e-12
_SSR_FLOOR = 1e-300


@dataclass
class FactorDecomposition:
    """PCA estimate: factors (T x K), loadings (N x K), eigenvalues, residuals."""

    factors: np.ndarray
    loadings: np.ndarray
    eigenvalues: np.ndarray
    residuals: np.ndarray
    k: int


def _as_matrix(data):
    values = data.values if hasattr(data, "values") else data
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise DataError("panel must be a 2-D array (time x series)")
    if not np.isfinite(values).all():
        raise NumericsError("eigensolver failure on non-finite input")
    return values


def _fix_signs(vectors):
    vectors = vectors.copy()
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        nz = np.nonzero(np.abs(col) > _TIE_TOL)[0]
        if nz.size and col[nz[0]] < 0:
            vectors[:, j] = -col
    return vectors


def _order_with_ties(eigvals, eigvecs):
    """Descending eigenvalue order; ties broken lexicographically on the
    sign-fixed eigenvectors (degenerate under the model's assumptions)."""
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    i = 0
    while i < eigvals.size - 1:
        j = i + 1
        while j < eigvals.size and abs(eigvals[j] - eigvals[i]) < _TIE_TOL:
            j += 1
        if j - i > 1:
            block = _fix_signs(eigvecs[:, i:j])
            keys = sorted(range(j - i), key=lambda c: tuple(block[:, c]))
            eigvecs[:, i:j] = block[:, keys]
        i = j
    return eigvals, eigvecs


def pca_factors(data, k):
    """Estimate k factors by principal components.

    Parameters
    ----------
    data : PanelData or (T, N) array
    k : int
        Number of factors, 1 <= k <= min(T, N).

    Returns
    -------
    FactorDecomposition
    """
    x = _as_matrix(data)
    t, n = x.shape
    if not 1 <= k <= min(t, n):
        raise DataError(f"k exceeds min(T, N): k={k}, T={t}, N={n}")

    if t <= n:
        gram = x @ x.T / (t * n)
        eigvals, eigvecs = np.linalg.eigh(gram)
        eigvals, eigvecs = _order_with_ties(eigvals, eigvecs)
        u = _fix_signs(eigvecs[:, :k])
        eigvals = eigvals[:k]
    else:
        gram = x.T @ x / (t * n)
        eigvals, eigvecs = np.linalg.eigh(gram)
        eigvals, eigvecs = _order_with_ties(eigvals, eigvecs)
        w = eigvecs[:, :k]
        eigvals = eigvals[:k]
        if np.any(eigvals < _TIE_TOL * max(eigvals[0], 1.0)):
            raise NumericsError("requested factor count exceeds the numerical rank")
        u = (x @ w) / np.sqrt(t * n * eigvals)
        u /= np.linalg.norm(u, axis=0)  # remove fp drift from the duality map
        u = _fix_signs(u)

    factors = np.sqrt(t) * u
    loadings = x.T @ factors / t
    residuals = x - factors @ loadings.T
    return FactorDecomposition(
        factors=factors,
        loadings=loadings,
        eigenvalues=np.asarray(eigvals, dtype=float),
        residuals=residuals,
        k=k,
    )


def project_factors(decomposition, x_new):
    """Factor values for new observation rows under fixed loadings.

    ``x L V^{-1} / N`` reproduces the PCA factors exactly on the training
    rows, so this is the natural out-of-sample extension.
    """
    x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
    n = decomposition.loadings.shape[0]
    return x_new @ decomposition.loadings / (n * decomposition.eigenvalues)


def select_k(data, k_max):
    """Number of factors minimizing the information criterion over 1..k_max."""
    x = _as_matrix(data)
    t, n = x.shape
    if not 1 <= k_max <= min(t, n):
        raise DataError(f"k_max must be in [1, min(T, N)], got {k_max}")
    gram = (x @ x.T if t <= n else x.T @ x) / (t * n)
    eigvals = np.sort(np.linalg.eigvalsh(gram))[::-1]
    total_ss = float(np.sum(x * x))
    penalty = (t + n) / (t * n) * np.log(min(t, n))
    best_k, best_ic = 1, np.inf
    for k in range(1, k_max + 1):
        ssr = max(total_ss - t * n * float(np.sum(eigvals[:k])), _SSR_FLOOR)
        ic = np.log(ssr) + k * penalty
        if ic < best_ic:
            best_k, best_ic = k, ic
    return best_k
