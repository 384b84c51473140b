"""Oblique rotation matrices parameterized by spherical angles.

Column ``i`` of the K x K matrix ``H`` is the unit vector

    (sin t_i1, cos t_i1 sin t_i2, ..., cos t_i1 ... cos t_i,K-1)

built from the i-th row of a K x (K-1) angle matrix, with
``t_i1 in [0, pi]`` and ``t_ij in [0, 2 pi)`` for ``j >= 2``.  Every column
has unit Euclidean norm by construction, which pins down the scale of the
rotated factors; the remaining reflection ambiguity (the parameterization
only reaches columns whose first entry is nonnegative) is handled by an
explicit sign-flip search in the estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, SingularRotationError

SINGULARITY_TOL = 1e-12


@dataclass(frozen=True)
class RotationAngles:
    """Validated angle matrix of shape (K, K-1), reduced to canonical ranges."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        k = vals.shape[0]
        if vals.shape != (k, max(k - 1, 0)):
            raise DataError(f"angle matrix must be K x (K-1), got {vals.shape}")
        if k == 0:
            raise DataError("need at least one factor")
        vals = np.mod(vals, 2.0 * np.pi)
        if k > 1 and np.any(vals[:, 0] > np.pi + 1e-12):
            raise DataError("first angle of each column must lie in [0, pi]")
        if k > 1:
            vals[:, 0] = np.minimum(vals[:, 0], np.pi)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def k(self):
        return self.values.shape[0]

    def flat(self):
        return self.values.ravel().copy()


def identity_angles(k):
    """Angles for which H is the identity matrix."""
    vals = np.zeros((k, max(k - 1, 0)))
    for i in range(k - 1):
        vals[i, i] = 0.5 * np.pi
    return RotationAngles(vals)


def build_h_raw(values):
    """H from an unvalidated (K, K-1) angle array; trig handles any reals."""
    vals = np.atleast_2d(np.asarray(values, dtype=float))
    k = vals.shape[0]
    h = np.empty((k, k))
    for i in range(k):
        row = vals[i]
        h[0, i] = np.sin(row[0]) if k > 1 else 1.0
        cosprod = 1.0
        for r in range(1, k):
            cosprod *= np.cos(row[r - 1])
            h[r, i] = cosprod * np.sin(row[r]) if r < k - 1 else cosprod
    return h


def build_h(angles):
    """Rotation matrix H(angles); every column has unit norm by construction."""
    return build_h_raw(angles.values)


def log_det_h(angles):
    """log |det H(angles)|.

    Raises
    ------
    SingularRotationError
        If |det H| falls below 1e-12; the estimator treats this as a
        rejected point rather than clamping.
    """
    h = build_h(angles)
    sign, logabs = np.linalg.slogdet(h)
    if sign == 0 or logabs < np.log(SINGULARITY_TOL):
        raise SingularRotationError("rotation matrix is numerically singular")
    return float(logabs)


def apply_rotation(factors, angles):
    """Rotated factors F H; the companion loading transform is L (H^-1)^T."""
    factors = np.asarray(factors, dtype=float)
    h = build_h(angles)
    if abs(np.linalg.det(h)) < SINGULARITY_TOL:
        raise SingularRotationError("rotation matrix is numerically singular")
    return factors @ h


def loading_transform(loadings, angles):
    """Companion loadings L (H^-1)^T, preserving the common component:
    (F H)(L (H^-1)^T)^T = F L^T."""
    h = build_h(angles)
    if abs(np.linalg.det(h)) < SINGULARITY_TOL:
        raise SingularRotationError("rotation matrix is numerically singular")
    return np.asarray(loadings, dtype=float) @ np.linalg.inv(h).T


def enumerate_sign_flips(k):
    """All 2^K sign vectors in {-1, +1}^K, +1-first lexicographic order."""
    flips = []
    for mask in range(2**k):
        flips.append(tuple(-1.0 if (mask >> i) & 1 else 1.0 for i in range(k)))
    return flips


def angles_from_matrix(h):
    """Recover canonical angles and column signs from a unit-column matrix.

    Each column is flipped, if needed, so its first nonzero entry is
    positive (the parameterization only reaches that half-sphere); the
    returned sign vector records the flips.

    Returns
    -------
    (RotationAngles, ndarray of +-1 signs) with
    ``build_h(angles) @ diag(signs) ~= h``.
    """
    h = np.asarray(h, dtype=float)
    k = h.shape[0]
    if h.shape != (k, k):
        raise DataError("H must be square")
    norms = np.linalg.norm(h, axis=0)
    if not np.allclose(norms, 1.0, atol=1e-8):
        raise DataError("columns of H must have unit norm")
    signs = np.ones(k)
    vals = np.zeros((k, max(k - 1, 0)))
    for i in range(k):
        col = h[:, i].copy()
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            signs[i] = -1.0
            col = -col
        for j in range(k - 1):
            tail = np.linalg.norm(col[j + 1 :])
            if j < k - 2:
                theta = np.arctan2(col[j], tail)
            else:
                theta = np.arctan2(col[j], col[j + 1])
            vals[i, j] = np.mod(theta, 2.0 * np.pi)
        if k > 1 and vals[i, 0] > np.pi:
            # cannot happen after the sign flip, but guard fp noise
            vals[i, 0] = np.pi
    return RotationAngles(vals), signs
