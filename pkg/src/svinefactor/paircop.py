"""Bivariate pair copulas: densities, h-functions, inverses, Kendall's tau, MLE.

Families: independence, gaussian, frank, clayton, joe.  Clayton and joe only
reach positive dependence on their base parameter range; negative dependence
is obtained through the 90/270-degree reflections.  All evaluation routines
are vectorized over numpy arrays and clamp their (0,1) arguments away from
the boundary, since chained h-functions can push pseudo-observations to
machine limits.

Conventions
-----------
``hfunc(u, v)`` is the conditional distribution ``P(U <= u | V = v)``
(the partial derivative of the copula in its second argument), and
``hfunc_inv(w, v)`` is its inverse in the first argument.

Reflections act on the arguments:

* 90:  ``(u, v) -> (1 - u, v)``
* 180: ``(u, v) -> (1 - u, 1 - v)``
* 270: ``(u, v) -> (u, 1 - v)``

so Kendall's tau is negated under 90/270 and preserved under 180.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate, optimize, stats
from scipy.special import ndtr, ndtri

from .errors import DataError, NumericsError

EPS = 1e-10

FAMILIES = ("independence", "gaussian", "frank", "clayton", "joe")
REFLECTIONS = (0, 90, 180, 270)

# base-parameter search boxes used by the maximum-likelihood fit
_PARAM_BOUNDS = {
    "gaussian": (-1.0 + 1e-6, 1.0 - 1e-6),
    "frank": (-35.0, 35.0),
    "clayton": (1e-4, 28.0),
    "joe": (1.0 + 1e-6, 30.0),
}

_FRANK_SMALL = 1e-5  # below this |theta| the Taylor branch takes over


def _clamp(u):
    return np.clip(np.asarray(u, dtype=float), EPS, 1.0 - EPS)


def _validate_parameter(family, parameter):
    if family == "independence":
        return
    if family == "gaussian":
        if not -1.0 < parameter < 1.0:
            raise DataError(f"gaussian parameter must be in (-1, 1), got {parameter}")
    elif family == "frank":
        if parameter == 0.0:
            raise DataError("frank parameter must be nonzero (0 is independence)")
    elif family == "clayton":
        if parameter <= 0.0:
            raise DataError(f"clayton parameter must be positive, got {parameter}")
    elif family == "joe":
        if parameter < 1.0:
            raise DataError(f"joe parameter must be >= 1, got {parameter}")
    else:
        raise DataError(f"unknown copula family {family!r}")


# ---------------------------------------------------------------------------
# family implementations on the base (unreflected) parameterization
# ---------------------------------------------------------------------------


def _indep_logpdf(th, u, v):
    return np.zeros(np.broadcast(u, v).shape)


def _indep_hfunc(th, u, v):
    return np.broadcast_arrays(u, v)[0].copy()


def _indep_hinv(th, w, v):
    return np.broadcast_arrays(w, v)[0].copy()


def _gaussian_logpdf(rho, u, v):
    x = ndtri(u)
    y = ndtri(v)
    r2 = 1.0 - rho * rho
    return -0.5 * np.log(r2) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * r2)


def _gaussian_hfunc(rho, u, v):
    x = ndtri(u)
    y = ndtri(v)
    return ndtr((x - rho * y) / np.sqrt(1.0 - rho * rho))


def _gaussian_hinv(rho, w, v):
    y = ndtri(v)
    return ndtr(ndtri(w) * np.sqrt(1.0 - rho * rho) + rho * y)


def _frank_logpdf(th, u, v):
    if abs(th) < _FRANK_SMALL:
        # second-order expansion around independence; exact to ~1e-10 here
        s = (2.0 * u - 1.0) * (2.0 * v - 1.0)
        return np.log1p(0.5 * th * s + th * th * (0.25 * s * s - 1.0 / 12.0))
    a = -np.expm1(-th)  # 1 - e^{-theta}
    den = a - np.expm1(-th * u) * np.expm1(-th * v)
    c = th * a * np.exp(-th * (u + v)) / (den * den)
    return np.log(np.maximum(c, 1e-300))


def _frank_hfunc(th, u, v):
    if abs(th) < _FRANK_SMALL:
        return np.clip(u + 0.5 * th * u * (1.0 - u) * (1.0 - 2.0 * v), EPS, 1 - EPS)
    gu = np.expm1(-th * u)
    gv = np.expm1(-th * v)
    g1 = np.expm1(-th)
    return gu * np.exp(-th * v) / (g1 + gu * gv)


def _frank_hinv(th, w, v):
    if abs(th) < _FRANK_SMALL:
        return np.clip(w - 0.5 * th * w * (1.0 - w) * (1.0 - 2.0 * v), EPS, 1 - EPS)
    gv = np.expm1(-th * v)
    g1 = np.expm1(-th)
    ratio = w * g1 / (np.exp(-th * v) - w * gv)
    return np.clip(-np.log1p(ratio) / th, EPS, 1 - EPS)


def _clayton_logS(th, u, v):
    # log(u^-th + v^-th - 1), computed stably for large th
    a = -th * np.log(u)
    b = -th * np.log(v)
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


def _clayton_logpdf(th, u, v):
    logS = _clayton_logS(th, u, v)
    return np.log1p(th) - (th + 1.0) * (np.log(u) + np.log(v)) - (2.0 + 1.0 / th) * logS


def _clayton_hfunc(th, u, v):
    logS = _clayton_logS(th, u, v)
    return np.exp(-(th + 1.0) * np.log(v) - (1.0 + 1.0 / th) * logS)


def _clayton_hinv(th, w, v):
    q = -th * np.log(v)
    r = -th / (th + 1.0) * np.log(w)
    logS = q + r + np.log1p(-np.exp(-r) + np.exp(-(q + r)))
    return np.clip(np.exp(-logS / th), EPS, 1 - EPS)


def _joe_logA(th, u, v):
    # log(x + y - x y) with x = (1-u)^th, y = (1-v)^th
    lx = th * np.log1p(-u)
    ly = th * np.log1p(-v)
    m = np.maximum(lx, ly)
    return m + np.log(np.exp(lx - m) + np.exp(ly - m) - np.exp(lx + ly - m))


def _joe_logpdf(th, u, v):
    lx = th * np.log1p(-u)
    ly = th * np.log1p(-v)
    logA = _joe_logA(th, u, v)
    return (
        (1.0 / th - 2.0) * logA
        + (th - 1.0) * (np.log1p(-u) + np.log1p(-v))
        + np.log(th - 1.0 + np.exp(logA))
    )


def _joe_hfunc(th, u, v):
    lx = th * np.log1p(-u)
    logA = _joe_logA(th, u, v)
    one_minus_x = -np.expm1(lx)
    return np.exp(
        (1.0 / th - 1.0) * logA
        + (th - 1.0) * np.log1p(-v)
        + np.log(np.maximum(one_minus_x, 1e-300))
    )


_BASE = {
    "independence": (_indep_logpdf, _indep_hfunc, _indep_hinv),
    "gaussian": (_gaussian_logpdf, _gaussian_hfunc, _gaussian_hinv),
    "frank": (_frank_logpdf, _frank_hfunc, _frank_hinv),
    "clayton": (_clayton_logpdf, _clayton_hfunc, _clayton_hinv),
    "joe": (_joe_logpdf, _joe_hfunc, None),  # joe h-inverse is numeric
}


def _numeric_hinv(th, w, v, hfunc, logpdf, tol=1e-10, max_iter=200):
    """Safeguarded Newton inversion of u -> hfunc(u, v) at targets w.

    dh/du is the copula density, which supplies the Newton slope; bisection
    bounds keep every iterate bracketed.  Convergence requires the residual
    scaled by the local slope to be small, so the error is controlled in u
    even where the density is tiny.
    """
    w, v = np.broadcast_arrays(np.asarray(w, float), np.asarray(v, float))
    lo = np.full(w.shape, EPS)
    hi = np.full(w.shape, 1.0 - EPS)
    u = np.clip(w.copy(), EPS, 1 - EPS)
    for _ in range(max_iter):
        h = hfunc(th, u, v)
        resid = h - w
        dens = np.exp(logpdf(th, u, v))
        # |resid|/slope bounds the error in u; the bracket covers flat spots
        done = (np.abs(resid) < tol * dens) | (hi - lo < 1e-13)
        if done.all():
            break
        lo = np.where(resid < 0, u, lo)
        hi = np.where(resid >= 0, u, hi)
        step = np.where(dens > 1e-12, resid / np.maximum(dens, 1e-12), 0.0)
        cand = u - step
        bad = (cand <= lo) | (cand >= hi) | ~np.isfinite(cand) | (dens <= 1e-12)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        u = np.where(done, u, cand)
    else:
        if not (np.abs(hfunc(th, u, v) - w) < 1e-6).all():
            raise NumericsError("h-function inversion did not converge")
    return u


def _joe_hinv(th, w, v):
    return _numeric_hinv(th, w, v, _joe_hfunc, _joe_logpdf)


_BASE["joe"] = (_joe_logpdf, _joe_hfunc, _joe_hinv)


# ---------------------------------------------------------------------------
# Kendall's tau maps
# ---------------------------------------------------------------------------


def _debye1(x):
    """First Debye function D1(x) = (1/x) * int_0^x t/(e^t - 1) dt for x > 0."""

    def integrand(t):
        return t / np.expm1(t) if t > 0 else 1.0

    val, _ = integrate.quad(integrand, 0.0, x, epsabs=1e-12, epsrel=1e-12, limit=200)
    return val / x


def _frank_tau(th):
    if abs(th) < _FRANK_SMALL:
        return th / 9.0
    sign = 1.0 if th > 0 else -1.0
    a = abs(th)
    return sign * (1.0 - 4.0 / a * (1.0 - _debye1(a)))


def _joe_tau(th):
    if th == 1.0:
        return 0.0

    def integrand(t):
        # phi(t)/phi'(t) for the joe generator phi(t) = -log(1 - (1-t)^th)
        s = 1.0 - t
        g = -np.expm1(th * np.log(s)) if s > 0 else 1.0
        if g <= 0.0 or g >= 1.0:
            return 0.0
        return g * np.log(g) / (th * s ** (th - 1.0))

    with warnings.catch_warnings():
        # the integrand's derivative is mildly singular at the endpoints;
        # accuracy to ~1e-10 is verified against the series form in tests
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=1e-10, epsrel=1e-10, limit=200)
    return 1.0 + 4.0 * val


def _base_tau(family, parameter):
    if family == "independence":
        return 0.0
    if family == "gaussian":
        return 2.0 / np.pi * np.arcsin(parameter)
    if family == "frank":
        return _frank_tau(parameter)
    if family == "clayton":
        return parameter / (parameter + 2.0)
    if family == "joe":
        return _joe_tau(parameter)
    raise DataError(f"unknown copula family {family!r}")


# ---------------------------------------------------------------------------
# public value type
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairCopula:
    """An immutable bivariate copula: family, scalar parameter, reflection.

    Parameters
    ----------
    family : str
        One of ``independence``, ``gaussian``, ``frank``, ``clayton``, ``joe``.
    parameter : float
        Family parameter on the base (unreflected) domain.
    reflection : int
        0, 90, 180 or 270 degrees.
    """

    family: str
    parameter: float = 0.0
    reflection: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DataError(f"unknown copula family {self.family!r}")
        if self.reflection not in REFLECTIONS:
            raise DataError(f"reflection must be one of {REFLECTIONS}")
        _validate_parameter(self.family, self.parameter)

    # -- reflection plumbing -------------------------------------------------

    def _args(self, u, v):
        u = _clamp(u)
        v = _clamp(v)
        if self.reflection == 0:
            return u, v
        if self.reflection == 90:
            return 1.0 - u, v
        if self.reflection == 180:
            return 1.0 - u, 1.0 - v
        return u, 1.0 - v  # 270

    def log_density(self, u, v):
        logpdf = _BASE[self.family][0]
        ub, vb = self._args(u, v)
        return logpdf(self.parameter, ub, vb)

    def density(self, u, v):
        """Copula density at (u, v), reflection applied."""
        return np.exp(self.log_density(u, v))

    def hfunc(self, u, v):
        """Conditional distribution P(U <= u | V = v)."""
        hf = _BASE[self.family][1]
        ub, vb = self._args(u, v)
        if self.reflection == 0:
            out = hf(self.parameter, ub, vb)
        elif self.reflection == 90:
            out = 1.0 - hf(self.parameter, ub, vb)
        elif self.reflection == 180:
            out = 1.0 - hf(self.parameter, ub, vb)
        else:  # 270
            out = hf(self.parameter, ub, vb)
        return np.clip(out, EPS, 1.0 - EPS)

    def hfunc_inv(self, w, v):
        """Inverse of ``hfunc`` in its first argument: hfunc(hfunc_inv(w,v), v) = w."""
        hinv = _BASE[self.family][2]
        w = _clamp(w)
        v = _clamp(v)
        if self.reflection == 0:
            out = hinv(self.parameter, w, v)
        elif self.reflection == 90:
            out = 1.0 - hinv(self.parameter, 1.0 - w, v)
        elif self.reflection == 180:
            out = 1.0 - hinv(self.parameter, 1.0 - w, 1.0 - v)
        else:  # 270
            out = hinv(self.parameter, w, 1.0 - v)
        return np.clip(out, EPS, 1.0 - EPS)

    def tau(self):
        """Kendall's tau implied by the copula (negated under 90/270)."""
        base = _base_tau(self.family, self.parameter)
        return -base if self.reflection in (90, 270) else base

    def n_params(self):
        return 0 if self.family == "independence" else 1

    def loglik(self, u, v):
        return float(np.sum(self.log_density(u, v)))

    def aic(self, u, v):
        return 2.0 * self.n_params() - 2.0 * self.loglik(u, v)


def density(copula, u, v):
    return copula.density(u, v)


def hfunc(copula, u, v):
    return copula.hfunc(u, v)


def hfunc_inv(copula, w, v):
    return copula.hfunc_inv(w, v)


def tau(copula):
    return copula.tau()


# ---------------------------------------------------------------------------
# parameter from tau, and maximum-likelihood fitting
# ---------------------------------------------------------------------------


def tau_range(family):
    """Attainable Kendall-tau interval on the base parameter box."""
    if family == "independence":
        return (0.0, 0.0)
    lo, hi = _PARAM_BOUNDS[family]
    return (_base_tau(family, lo), _base_tau(family, hi))


def param_from_tau(family, tau_value):
    """Invert the tau map: closed form where available, bisection otherwise.

    Raises
    ------
    DataError
        If ``tau_value`` is outside the family's attainable range on the
        base (unreflected) parameter domain.
    """
    if family == "independence":
        if abs(tau_value) > 1e-12:
            raise DataError("independence copula only attains tau = 0")
        return 0.0
    if family == "gaussian":
        if not -1.0 < tau_value < 1.0:
            raise DataError(f"gaussian tau must be in (-1, 1), got {tau_value}")
        return float(np.sin(0.5 * np.pi * tau_value))
    if family == "clayton":
        if not 0.0 < tau_value < 1.0:
            raise DataError(f"clayton tau must be in (0, 1), got {tau_value}")
        par = 2.0 * tau_value / (1.0 - tau_value)
        lo, hi = _PARAM_BOUNDS["clayton"]
        if not lo <= par <= hi:
            raise DataError(f"clayton tau {tau_value} outside supported range")
        return par
    if family == "frank":
        lo, hi = _PARAM_BOUNDS["frank"]
        if abs(tau_value) < 1e-9:
            return 9.0 * tau_value if tau_value != 0.0 else 1e-9
        if not _base_tau("frank", lo) < tau_value < _base_tau("frank", hi):
            raise DataError(f"frank tau {tau_value} outside supported range")
        a = abs(tau_value)
        par = optimize.brentq(lambda t: _frank_tau(t) - a, 1e-8, hi, xtol=1e-10)
        return par if tau_value > 0 else -par
    if family == "joe":
        lo, hi = _PARAM_BOUNDS["joe"]
        if not 0.0 < tau_value < _joe_tau(hi):
            raise DataError(f"joe tau {tau_value} outside supported range")
        return optimize.brentq(lambda t: _joe_tau(t) - tau_value, lo, hi, xtol=1e-10)
    raise DataError(f"unknown copula family {family!r}")


def _candidate_set(families, tau_hat):
    """(family, reflection) candidates worth fitting given the sample tau."""
    cands = []
    for fam in families:
        if fam == "independence":
            continue
        if fam in ("gaussian", "frank"):
            cands.append((fam, 0))
        else:  # clayton / joe need reflections for sign coverage
            if tau_hat >= 0:
                cands.extend([(fam, 0), (fam, 180)])
            else:
                cands.extend([(fam, 90), (fam, 270)])
    return cands


def _fit_one(family, reflection, u, v, init=None, xatol=1e-5):
    """MLE of the scalar parameter for a fixed (family, reflection)."""
    logpdf = _BASE[family][0]
    lo, hi = _PARAM_BOUNDS[family]
    if reflection == 90:
        ub, vb = 1.0 - u, v
    elif reflection == 180:
        ub, vb = 1.0 - u, 1.0 - v
    elif reflection == 270:
        ub, vb = u, 1.0 - v
    else:
        ub, vb = u, v

    def nll(th):
        val = -float(np.sum(logpdf(th, ub, vb)))
        return val if np.isfinite(val) else 1e18

    if init is not None and lo < init < hi:
        # a valid downhill bracket around the warm start converges fastest
        d = max(0.25, 0.05 * (hi - lo) / 10.0)
        a, b = max(lo, init - d), min(hi, init + d)
        if a < init < b and nll(init) <= min(nll(a), nll(b)):
            res = optimize.minimize_scalar(nll, bracket=(a, init, b), method="brent",
                                           options={"xtol": xatol})
            par = float(min(max(res.x, lo), hi))
            return par, -nll(par)
    res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded",
                                   options={"xatol": xatol})
    par = float(res.x)
    return par, -nll(par)


def fit_pair(u, v, families=FAMILIES[1:], criterion="aic", min_pairs=10, init=None,
             allow_independence=True):
    """Fit a single pair copula by per-family MLE and AIC model selection.

    Parameters
    ----------
    u, v : array_like in (0, 1)
        Pseudo-observation pairs.
    families : iterable of str
        Candidate families; independence is always a candidate (0 params)
        unless ``allow_independence`` is off.
    criterion : str
        Only ``"aic"`` is supported.
    init : PairCopula, optional
        Restricts the search to this candidate's (family, reflection) and
        warm-starts the parameter; used by the stepwise estimator when the
        family choice is frozen.
    allow_independence : bool
        Turn off to force a parametric fit on every edge (the correctly
        specified estimator of the simulation studies).

    Returns
    -------
    PairCopula
    """
    if criterion != "aic":
        raise DataError(f"unsupported selection criterion {criterion!r}")
    u = _clamp(u).ravel()
    v = _clamp(v).ravel()
    if u.size != v.size:
        raise DataError("u and v must have the same length")
    if u.size < min_pairs:
        raise DataError(f"insufficient data: {u.size} pairs < {min_pairs}")

    if init is not None:
        if init.family == "independence":
            return init
        par, ll = _fit_one(init.family, init.reflection, u, v, init=init.parameter)
        cand = replace(init, parameter=par)
        if not allow_independence or cand.aic(u, v) < 0.0:
            return cand
        return PairCopula("independence")

    tau_hat = stats.kendalltau(u, v).statistic
    if not np.isfinite(tau_hat):
        tau_hat = 0.0

    best = PairCopula("independence")
    best_aic = 0.0 if allow_independence else np.inf
    for fam, refl in _candidate_set(families, tau_hat):
        try:
            t0 = abs(tau_hat) if fam in ("clayton", "joe") else tau_hat
            lo_t, hi_t = tau_range(fam)
            t0 = min(max(t0, lo_t + 1e-3), hi_t - 1e-3)
            start = param_from_tau(fam, t0)
        except DataError:
            start = None
        try:
            par, ll = _fit_one(fam, refl, u, v, init=start)
        except (NumericsError, FloatingPointError):
            continue
        aic = 2.0 - 2.0 * ll
        if aic < best_aic:
            best_aic = aic
            best = PairCopula(fam, par, refl)
    if not allow_independence and best.family == "independence":
        raise NumericsError("every parametric candidate failed to converge")
    return best
