"""Two-step estimation: PCA factors, then a joint rotation + copula fit.

The objective maximized over the rotation angles is

    log|det H| + sum_j entropy_j(rotated factors) + (pooled copula loglik)/T

where the margins term is the leave-one-out kernel entropy of each rotated
column and the copula term is profiled: the stepwise M-vine fit is rerun at
every candidate rotation.  The angle search is a multi-start Nelder-Mead
over the K(K-1) spherical angles (the objective is non-smooth through ranks
and refitted copula parameters, so derivative-free is the right tool); all
sign flips of the rotated columns are evaluated at every candidate and the
best one kept, because asymmetric copula families are not reflection
invariant.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import factors as factors_mod
from . import margins as margins_mod
from . import mvine as mvine_mod
from . import rotation as rotation_mod
from .errors import DataError, NumericsError, SingularRotationError
from .paircop import PairCopula

NEG_INF = -np.inf
_RADIAL_FAMILIES = {"independence", "gaussian", "frank"}
_VARIANCE_ORDER_RTOL = 1e-3  # column reordering only beyond this relative gap


@dataclass
class FitOptions:
    """Knobs for the rotation search.

    ``starts`` counts the Latin-hypercube starting points in addition to the
    always-included identity rotation.  ``threads`` caps worker threads for
    the multi-start loop.
    """

    starts: int = 8
    seed: int = 0
    xatol: float = 1e-4
    maxfev: int = 200
    k_max: int = 8
    rotate: bool = True
    freeze_families: bool = True
    threads: int = 1
    near_optimum_rtol: float = 0.005


@dataclass
class FittedModel:
    """Everything the forecasting and serialization layers need."""

    decomposition: factors_mod.FactorDecomposition
    angles: rotation_mod.RotationAngles
    signs: np.ndarray
    mvine: mvine_mod.MVineModel
    rotated_factors: np.ndarray
    margins: list
    objective_value: float
    trace: list
    loadings_rotated: np.ndarray
    k: int
    p: int
    families: tuple
    series_names: list = field(default_factory=list)
    means: np.ndarray = None
    stdevs: np.ndarray = None
    standardized: bool = False

    def __post_init__(self):
        if self.means is None:
            self.means = np.zeros(self.decomposition.loadings.shape[0])
        if self.stdevs is None:
            self.stdevs = np.ones(self.decomposition.loadings.shape[0])
        if not self.series_names:
            self.series_names = [f"series_{i}" for i in range(self.decomposition.loadings.shape[0])]

    def copulas_in_order(self):
        return [(cid, self.mvine.copulas[cid]) for cid in self.mvine.structure.class_order]

    @property
    def structure(self):
        return self.mvine.structure


def normalize_families(families):
    if isinstance(families, str):
        families = ("gaussian", "frank", "clayton", "joe") if families == "all" else (families,)
    families = tuple(families)
    for fam in families:
        if fam not in ("independence", "gaussian", "frank", "clayton", "joe"):
            raise DataError(f"unknown copula family {fam!r}")
    return families


def _entropy_sum(rotated):
    return sum(margins_mod.loo_entropy(rotated[:, j]) for j in range(rotated.shape[1]))


def _effective_flips(k, families):
    """All 2^k sign vectors, halved when every family is radially symmetric
    (then s and -s give identical fits)."""
    flips = rotation_mod.enumerate_sign_flips(k)
    if set(families) <= _RADIAL_FAMILIES:
        flips = [s for s in flips if s[0] > 0]
    return flips


def _search_flips(k):
    """Flip set used inside the angle search.

    The pair-copula candidate set is closed under argument reflections
    (frank/gaussian through the parameter sign, clayton/joe through the
    90/180/270-degree rotations), so the profiled copula likelihood is
    invariant under column sign flips: searching one orientation suffices.
    The full flip set is still evaluated once at the optimum to pick the
    reported orientation.
    """
    return [tuple(1.0 for _ in range(k))]


def _profile_copula(structure, rotated, flips, families, inits_by_flip,
                    allow_independence=True):
    """Best sign flip and its stepwise fit for already-rotated factors."""
    best = (NEG_INF, None, None)
    for s in flips:
        u = margins_mod.pseudo_observations(rotated * np.asarray(s))
        inits = inits_by_flip.get(s) if inits_by_flip is not None else None
        try:
            model = mvine_mod.fit_stepwise(
                structure, u, families, inits=inits,
                allow_independence=allow_independence,
            )
        except NumericsError:
            continue
        if inits_by_flip is not None:
            inits_by_flip[s] = dict(model.copulas)
        if model.loglik_value > best[0]:
            best = (model.loglik_value, s, model)
    if best[1] is None:
        raise NumericsError("copula fit failed for every sign flip")
    return best


def eval_objective(factors, angles, signs, structure, families, inner_inits=None):
    """Objective value and fitted inner model at one rotation state.

    Returns ``(-inf, None)`` when H is numerically singular so the angle
    search can reject the point cheaply.
    """
    factors = np.asarray(factors, dtype=float)
    families = normalize_families(families)
    try:
        logdet = rotation_mod.log_det_h(angles)
    except SingularRotationError:
        return NEG_INF, None
    rotated = factors @ rotation_mod.build_h(angles)
    ent = _entropy_sum(rotated)  # sign flips leave the entropy invariant
    t_len = factors.shape[0]
    u = margins_mod.pseudo_observations(rotated * np.asarray(signs, dtype=float))
    model = mvine_mod.fit_stepwise(structure, u, families, inits=inner_inits)
    value = logdet + ent + model.loglik_value / t_len
    return value, model


class _AngleObjective:
    """Negative objective over the raw angle vector, with best-flip search
    and per-start warm starts / frozen family selection."""

    def __init__(self, factors, structure, families, flips, freeze):
        self.factors = factors
        self.structure = structure
        self.families = families
        self.flips = flips
        self.freeze = freeze
        self.k = factors.shape[1]
        self.t_len = factors.shape[0]
        self.warm = {}
        self.n_evals = 0
        self.best = (NEG_INF, None, None)  # value, raw angles, flip

    def __call__(self, raw):
        self.n_evals += 1
        vals = np.asarray(raw, dtype=float).reshape(self.k, self.k - 1)
        h = rotation_mod.build_h_raw(vals)
        sign, logabs = np.linalg.slogdet(h)
        if sign == 0 or logabs < np.log(rotation_mod.SINGULARITY_TOL):
            return 1e18
        rotated = self.factors @ h
        ent = _entropy_sum(rotated)
        # with freeze on, the first evaluation selects families per class and
        # later ones keep them (warm-started); off reselects every time.
        # the search profiles the stepwise MLE proper (no independence
        # collapse): the AIC gate would inject non-smooth jumps
        inits = self.warm if self.freeze else None
        try:
            ll, flip, model = _profile_copula(
                self.structure, rotated, self.flips, self.families, inits,
                allow_independence=False,
            )
        except NumericsError:
            return 1e18
        value = logabs + ent + ll / self.t_len
        if value > self.best[0]:
            self.best = (value, vals.copy(), flip)
        return -value


def _latin_hypercube(n, k, rng):
    """n starting angle matrices on the canonical box."""
    dim = k * (k - 1)
    if dim == 0 or n <= 0:
        return []
    grid = (rng.permuted(np.tile(np.arange(n), (dim, 1)), axis=1).T + rng.random((n, dim))) / n
    box_hi = np.full(dim, 2.0 * np.pi)
    box_hi[:: k - 1] = np.pi  # first angle of each column lives in [0, pi]
    starts = grid * box_hi
    return [starts[i].reshape(k, k - 1) for i in range(n)]


def _variance_order(rotated):
    var = rotated.var(axis=0, ddof=1)
    order = sorted(range(var.size), key=lambda j: -var[j])
    if order == list(range(var.size)):
        return None
    spread = (var.max() - var.min()) / max(var.max(), 1e-300)
    return order if spread > _VARIANCE_ORDER_RTOL else None


def fit(data, k="auto", p=1, families=("gaussian", "frank", "clayton", "joe"), opts=None):
    """Fit the full model: factor count, PCA, rotation search, copulas.

    Parameters
    ----------
    data : PanelData or (T, N) array
    k : "auto" or int
        Number of factors; "auto" selects by the information criterion.
    p : int
        Markov order of the vine.
    families : iterable of str or "all"
    opts : FitOptions

    Returns
    -------
    FittedModel
    """
    opts = opts or FitOptions()
    families = normalize_families(families)
    values = data.values if hasattr(data, "values") else np.asarray(data, dtype=float)
    t_len = values.shape[0]

    if k == "auto":
        k = factors_mod.select_k(values, min(opts.k_max, min(values.shape)))
    k = int(k)
    dec = factors_mod.pca_factors(values, k)
    structure = mvine_mod.build_structure(k, p)
    flips = _effective_flips(k, families)
    trace = []

    if k == 1 or not opts.rotate:
        angles = rotation_mod.identity_angles(k)
        rotated0 = dec.factors  # H = I
        ll, flip, model = _profile_copula(structure, rotated0, flips, families, None)
        ent = _entropy_sum(rotated0)
        value = ent + ll / t_len
        best_raw, best_flip, best_value = angles.values, flip, value
        trace.append({"start": "identity", "objective": value, "flip": list(flip), "n_evals": 1})
    else:
        rng = np.random.default_rng(opts.seed)
        search_flips = _search_flips(k)
        # screen a wider Latin hypercube with single evaluations, then run the
        # local searches from the identity and the best screened points
        screen_obj = _AngleObjective(
            dec.factors, structure, families, search_flips, opts.freeze_families
        )
        pool_pts = _latin_hypercube(4 * opts.starts, k, rng)
        screened = sorted(pool_pts, key=lambda x0: screen_obj(x0.ravel()))
        starts = [rotation_mod.identity_angles(k).values] + screened[: opts.starts]

        def _simplex(x0, scale):
            verts = [x0]
            for i in range(x0.size):
                v = x0.copy()
                v[i] += scale
                verts.append(v)
            return np.asarray(verts)

        def run_start(s_idx, x0, maxfev, scale):
            obj = _AngleObjective(
                dec.factors, structure, families, search_flips, opts.freeze_families
            )
            x0 = np.asarray(x0, dtype=float).ravel()
            res = optimize.minimize(
                obj,
                x0,
                method="Nelder-Mead",
                options={
                    "xatol": opts.xatol,
                    "fatol": 1e-9,
                    "maxfev": maxfev,
                    # angle-scale simplex: the scipy default steps are far too
                    # small to traverse the period-pi landscape
                    "initial_simplex": _simplex(x0, scale),
                },
            )
            value, raw, flip = obj.best
            entry = None
            if raw is not None:
                entry = {
                    "start": "identity" if s_idx == 0 else s_idx,
                    "objective": value,
                    "angles": raw.tolist(),
                    "flip": list(flip),
                    "n_evals": obj.n_evals,
                    "converged": bool(res.success),
                }
            return value, raw, flip, entry

        jobs = [(i, x0, opts.maxfev, 0.45) for i, x0 in enumerate(starts)]
        if opts.threads > 1:
            with ThreadPoolExecutor(max_workers=opts.threads) as pool:
                outcomes = list(pool.map(lambda a: run_start(*a), jobs))
        else:
            outcomes = [run_start(*job) for job in jobs]
        results = []
        for value, raw, flip, entry in outcomes:
            if raw is None:
                continue
            results.append((value, raw, flip))
            trace.append(entry)
        if not results:
            raise NumericsError("rotation search found no finite objective")
        results.sort(key=lambda r: -r[0])
        best_value, best_raw, best_flip = results[0]
        # one restart from the winner with a fresh small simplex guards
        # against premature simplex collapse on the non-smooth surface
        value, raw, flip, entry = run_start(
            "polish", best_raw, max(opts.maxfev // 2, 30), 0.12
        )
        if raw is not None and value > best_value:
            best_value, best_raw, best_flip = value, raw, flip
        if entry is not None:
            trace.append(entry)
        for entry in trace:
            if "objective" in entry:
                entry["near_optimum"] = bool(
                    entry["objective"] >= best_value - abs(best_value) * opts.near_optimum_rtol
                )
        # the searched orientation is value-equivalent to every sign flip;
        # evaluate the full flip set once to pick the reported orientation
        h_best = rotation_mod.build_h_raw(best_raw)
        rotated_best = dec.factors @ h_best
        _, best_flip, _ = _profile_copula(structure, rotated_best, flips, families, None)

    # canonicalize: fold optimizer flips and first-row signs into the stored
    # (angles, signs) pair, then order columns by decreasing variance
    h_opt = rotation_mod.build_h_raw(best_raw) * np.asarray(best_flip, dtype=float)
    angles, signs = rotation_mod.angles_from_matrix(h_opt)
    rotated = dec.factors @ rotation_mod.build_h(angles) * signs
    order = _variance_order(rotated)
    if order is not None:
        h_perm = rotation_mod.build_h(angles)[:, order] * signs[order]
        cand_angles, cand_signs = rotation_mod.angles_from_matrix(h_perm * 1.0)
        cand_value, _ = eval_objective(dec.factors, cand_angles, cand_signs, structure, families)
        if cand_value >= best_value - 1e-9:
            angles, signs = cand_angles, cand_signs
            rotated = dec.factors @ rotation_mod.build_h(angles) * signs

    value, model = eval_objective(dec.factors, angles, signs, structure, families)
    if not np.isfinite(value):
        raise NumericsError("objective is not finite at the selected rotation")
    margin_models = [margins_mod.MarginModel(rotated[:, j]) for j in range(k)]
    loadings_rot = rotation_mod.loading_transform(dec.loadings, angles) * signs

    meta = {}
    if hasattr(data, "series_names"):
        meta = {
            "series_names": list(data.series_names),
            "means": np.asarray(data.means, dtype=float),
            "stdevs": np.asarray(data.stdevs, dtype=float),
            "standardized": bool(np.any(data.means != 0.0) or np.any(data.stdevs != 1.0)),
        }
    return FittedModel(
        decomposition=dec,
        angles=angles,
        signs=np.asarray(signs, dtype=float),
        mvine=model,
        rotated_factors=rotated,
        margins=margin_models,
        objective_value=value,
        trace=trace,
        loadings_rotated=loadings_rot,
        k=k,
        p=p,
        families=families,
        **meta,
    )


def contour_scan(factors, grid, structure, families, warm_start=True):
    """Objective values over a grid of (theta1, theta2) pairs; K = 2 only.

    Singular grid points yield -inf entries rather than aborting.  Sign
    flips are searched at every point.  ``warm_start`` carries each flip's
    fitted copulas from one grid point to the next, which pins the family
    selection after the first point (adjacent points have nearby optima).
    """
    factors = np.asarray(factors, dtype=float)
    if factors.ndim != 2 or factors.shape[1] != 2:
        raise DataError("contour scan requires T x 2 factors (K = 2)")
    families = normalize_families(families)
    flips = _effective_flips(2, families)
    t_len = factors.shape[0]
    values = np.empty(len(grid))
    warm = {} if warm_start else None
    for idx, (th1, th2) in enumerate(grid):
        h = rotation_mod.build_h_raw(np.array([[th1], [th2]]))
        sign, logabs = np.linalg.slogdet(h)
        if sign == 0 or logabs < np.log(rotation_mod.SINGULARITY_TOL):
            values[idx] = NEG_INF
            continue
        rotated = factors @ h
        ent = _entropy_sum(rotated)
        try:
            ll, _, _ = _profile_copula(structure, rotated, flips, families, warm)
        except NumericsError:
            values[idx] = NEG_INF
            continue
        values[idx] = logabs + ent + ll / t_len
    return values


def rebuild_fitted_model(doc):
    """Reconstruct a FittedModel from its JSON document (see dataio)."""
    k = int(doc["k"])
    p = int(doc["p"])
    structure = mvine_mod.build_structure(k, p)
    copulas = {}
    for entry in doc["copulas"]:
        copulas[entry["class_id"]] = PairCopula(
            family=entry["family"],
            parameter=float(entry["parameter"]),
            reflection=int(entry["reflection"]),
        )
    missing = [cid for cid in structure.class_order if cid not in copulas]
    if missing:
        raise ValueError(f"model file lacks copulas for classes {missing}")
    dec = factors_mod.FactorDecomposition(
        factors=np.asarray(doc["factors"], dtype=float),
        loadings=np.asarray(doc["loadings"], dtype=float),
        eigenvalues=np.asarray(doc["eigenvalues"], dtype=float),
        residuals=np.asarray(doc["residuals"], dtype=float),
        k=k,
    )
    rotated = np.asarray(doc["rotated_factors"], dtype=float)
    model = mvine_mod.MVineModel(structure=structure, copulas=copulas)
    return FittedModel(
        decomposition=dec,
        angles=rotation_mod.RotationAngles(np.asarray(doc["angles"], dtype=float)),
        signs=np.asarray(doc["signs"], dtype=float),
        mvine=model,
        rotated_factors=rotated,
        margins=[margins_mod.MarginModel(rotated[:, j]) for j in range(k)],
        objective_value=float(doc["objective_value"]),
        trace=doc.get("trace", []),
        loadings_rotated=np.asarray(doc["loadings_rotated"], dtype=float),
        k=k,
        p=p,
        families=tuple(doc["families"]),
        series_names=list(doc["series_names"]),
        means=np.asarray(doc["means"], dtype=float),
        stdevs=np.asarray(doc["stdevs"], dtype=float),
        standardized=bool(doc["standardized"]),
    )
