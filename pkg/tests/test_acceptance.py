"""Acceptance suite: one test (or pair) per criterion, each printing a
pass/fail line with its measured quantities (run with ``pytest -s`` to see
them inline)."""

import time

import numpy as np
import pytest
from scipy import stats

from conftest import TAU_TABLE
from svinefactor import dgp, pipeline
from svinefactor.factors import pca_factors
from svinefactor.margins import empirical_quantile, loo_entropy, pseudo_observations
from svinefactor.mvine import (
    MVineModel,
    build_structure,
    fit_stepwise,
    loglik,
    simulate,
    simulate_conditional,
    structure_table,
)
from svinefactor.paircop import PairCopula
from svinefactor.rotation import enumerate_sign_flips

# exact Kendall tau differs from the published (sample-estimated) target by
# more than the 0.01 rounding allowance on these rows; the exact values are
# asserted instead and the gaps reported (see the decisions ledger)
DOCUMENTED_TAU_GAPS = {("joe", 1.3): 0.1456, ("joe", 1.2): 0.1026}


def _report(criterion, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")


# ---------------------------------------------------------------------------
# 1. structure exactness
# ---------------------------------------------------------------------------


def test_c1_structure_exactness():
    t0 = time.time()
    rows21 = [
        (r["tree"], r["conditioned"], r["conditioning"])
        for r in structure_table(build_structure(2, 1))
    ]
    expect21 = [
        (1, (3, 1), ()),
        (1, (2, 1), ()),
        (2, (4, 1), (3,)),
        (2, (3, 2), (1,)),
        (3, (4, 2), (1, 3)),
    ]
    rows22 = [
        (r["tree"], r["conditioned"], r["conditioning"])
        for r in structure_table(build_structure(2, 2))
    ]
    expect22 = [
        (1, (3, 1), ()),
        (1, (2, 1), ()),
        (2, (4, 1), (3,)),
        (2, (3, 2), (1,)),
        (3, (5, 1), (3, 4)),
        (3, (4, 2), (1, 3)),
        (4, (6, 1), (3, 4, 5)),
        (4, (5, 2), (1, 3, 4)),
        (5, (6, 2), (1, 3, 4, 5)),
    ]
    s65 = build_structure(6, 5)
    tree1 = s65.levels[0]
    classes = {e.class_id for e in tree1}
    spans = sorted(s65.class_info[c].span for c in classes)
    two_block_edges = [e for e in tree1 if all(n <= 12 for n in e.conditioned)]
    elapsed = time.time() - t0

    ok = (
        rows21 == expect21
        and rows22 == expect22
        and len(tree1) == 35
        and spans == [0, 0, 0, 0, 0, 1]
        and len(two_block_edges) == 11
        and elapsed < 1.0
    )
    _report(
        1,
        ok,
        f"(2,1) and (2,2) edge lists verbatim; (6,5) first tree: 35 edges, "
        f"5 cross + 1 temporal class, 11 edges per 2-block window; {elapsed:.2f}s",
    )
    assert rows21 == expect21
    assert rows22 == expect22
    assert len(tree1) == 35 and spans == [0, 0, 0, 0, 0, 1]
    assert len(two_block_edges) == 11
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# 2. Kendall-tau table
# ---------------------------------------------------------------------------


def test_c2_tau_table():
    t0 = time.time()
    within = 0
    gaps = []
    for family, param, target in TAU_TABLE:
        cop = PairCopula(family, abs(param), 90 if param < 0 else 0)
        tau = cop.tau()
        key = (family, param)
        if key in DOCUMENTED_TAU_GAPS:
            assert tau == pytest.approx(DOCUMENTED_TAU_GAPS[key], abs=1e-3)
            gaps.append((family, param, round(abs(tau - target), 4)))
        else:
            assert abs(tau - target) <= 0.0101, (family, param, tau, target)
            within += 1
    elapsed = time.time() - t0
    ok = within == len(TAU_TABLE) - len(DOCUMENTED_TAU_GAPS) and elapsed < 1.0
    _report(
        2,
        ok,
        f"{within}/{len(TAU_TABLE)} rows within 0.01; documented sample-estimate "
        f"gaps {gaps}; {elapsed:.2f}s",
    )
    assert ok


# ---------------------------------------------------------------------------
# 3. copula numerics
# ---------------------------------------------------------------------------


def test_c3_copula_numerics():
    t0 = time.time()
    nodes, weights = np.polynomial.legendre.leggauss(160)
    x = 4.0 * nodes
    w = 4.0 * weights
    gx = stats.norm.pdf(x)
    u_axis = stats.norm.cdf(x)
    uu, vv = np.meshgrid(u_axis, u_axis)
    tail = (1 - 2 * stats.norm.cdf(-4.0)) ** 2

    worst_int, worst_rt = 0.0, 0.0
    rng = np.random.default_rng(1234)
    for family, param, _ in TAU_TABLE:
        cop = PairCopula(family, abs(param), 90 if param < 0 else 0)
        dens = cop.density(uu.ravel(), vv.ravel()).reshape(uu.shape)
        integral = float(np.einsum("i,j,ij->", w * gx, w * gx, dens))
        worst_int = max(worst_int, abs(integral - tail))
        u = rng.uniform(0.001, 0.999, 1000)
        v = rng.uniform(0.001, 0.999, 1000)
        back = cop.hfunc_inv(cop.hfunc(u, v), v)
        worst_rt = max(worst_rt, float(np.max(np.abs(back - u))))

    # frank h-function against a centered finite difference of its CDF
    theta = 2.0
    cop = PairCopula("frank", theta)
    u = rng.uniform(0.05, 0.95, 500)
    v = rng.uniform(0.05, 0.95, 500)
    eps = 1e-6

    def frank_cdf(uu_, vv_):
        return -np.log1p(np.expm1(-theta * uu_) * np.expm1(-theta * vv_) / np.expm1(-theta)) / theta

    fd = (frank_cdf(u, v + eps) - frank_cdf(u, v - eps)) / (2 * eps)
    worst_fd = float(np.max(np.abs(cop.hfunc(u, v) - fd)))
    elapsed = time.time() - t0

    ok = worst_int < 1e-3 and worst_rt < 1e-8 and worst_fd < 1e-6
    _report(
        3,
        ok,
        f"density integral err {worst_int:.2e} (<1e-3); h-inverse round trip "
        f"{worst_rt:.2e} (<1e-8); frank h vs finite diff {worst_fd:.2e} (<1e-6); {elapsed:.1f}s",
    )
    assert ok


# ---------------------------------------------------------------------------
# 4. entropy estimator
# ---------------------------------------------------------------------------


def test_c4_entropy_estimator():
    t0 = time.time()
    hits = 0
    values = []
    for rep in range(100):
        rng = np.random.default_rng(9_000 + rep)
        v = loo_entropy(rng.normal(size=5000))
        values.append(v)
        hits += -1.52 <= v <= -1.32
    elapsed = time.time() - t0
    ok = hits >= 99 and elapsed < 30.0
    _report(
        4,
        ok,
        f"{hits}/100 reps in [-1.52, -1.32], mean {np.mean(values):.4f} "
        f"(truth -1.41894); {elapsed:.1f}s (<30s)",
    )
    assert ok


# ---------------------------------------------------------------------------
# 5. estimator consistency trend (desk scale)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def consistency_study():
    spec = dgp.benchmark_spec(n_reps=50, seed=20240501)
    opts = pipeline.FitOptions(starts=4, seed=1, maxfev=100, xatol=1e-3)
    t0 = time.time()
    report = dgp.run_study(spec, pipeline_opts=opts, t_values=[100, 500, 2000], d_values=[100])
    return report, time.time() - t0


def test_c5_consistency_trend(consistency_study):
    report, elapsed = consistency_study
    params = [c.rmse_params_mean for c in report.cells]
    factor1 = [c.rmse_factors_mean[0] for c in report.cells]
    monotone = params[0] > params[1] > params[2]
    in_band = abs(params[2] - 0.63) <= 0.15
    f1_band = abs(factor1[2] - 0.1588) <= 0.04
    ok = monotone and in_band and f1_band and elapsed < 1800
    _report(
        5,
        ok,
        f"rmse(params) n=100/500/2000: {params[0]:.3f}/{params[1]:.3f}/{params[2]:.3f} "
        f"(monotone={monotone}, n=2000 in 0.63+-0.15={in_band}); first-factor rmse "
        f"{factor1[2]:.4f} in 0.1588+-0.04={f1_band}; {elapsed:.0f}s (<1800s)",
    )
    assert monotone
    assert in_band
    assert f1_band
    assert elapsed < 1800


# ---------------------------------------------------------------------------
# 6. identification scan
# ---------------------------------------------------------------------------


def test_c6_identification_scan():
    t0 = time.time()
    vine = dgp.scan_vine("frank")
    u = simulate(vine, 1000, warmup=100, seed=41)
    factors = stats.t(df=4).ppf(u) / np.sqrt(2.0)
    step = np.pi / 32
    n_axis = 64  # [0, 2 pi)
    thetas = np.arange(n_axis) * step
    grid = [(a, b) for a in thetas for b in thetas]
    structure = build_structure(2, 1)
    values = pipeline.contour_scan(factors, grid, structure, ("frank",))
    vmat = values.reshape(n_axis, n_axis)

    best = np.unravel_index(np.argmax(np.where(np.isfinite(vmat), vmat, -np.inf)), vmat.shape)
    th1, th2 = thetas[best[0]], thetas[best[1]]

    def wrapped_dist(a, target):
        d = np.mod(a - target, np.pi)
        return min(d, np.pi - d)

    dist = max(wrapped_dist(th1, np.pi / 2), wrapped_dist(th2, 0.0))
    near_max = dist <= step + 1e-9

    # pi-periodicity in both directions (sign-flip search enabled)
    half = n_axis // 2
    finite = np.isfinite(vmat) & np.isfinite(np.roll(vmat, -half, axis=0))
    per1 = float(np.max(np.abs((vmat - np.roll(vmat, -half, axis=0))[finite])))
    finite2 = np.isfinite(vmat) & np.isfinite(np.roll(vmat, -half, axis=1))
    per2 = float(np.max(np.abs((vmat - np.roll(vmat, -half, axis=1))[finite2])))
    elapsed = time.time() - t0

    ok = near_max and per1 < 1e-3 and per2 < 1e-3 and elapsed < 600
    _report(
        6,
        ok,
        f"argmax at ({th1:.3f}, {th2:.3f}), within one step of (pi/2, 0) mod pi: "
        f"{near_max}; periodicity residuals {per1:.2e}/{per2:.2e}; {elapsed:.0f}s (<600s)",
    )
    assert near_max
    assert per1 < 1e-3 and per2 < 1e-3
    assert elapsed < 600


# ---------------------------------------------------------------------------
# 7. forecast scores (desk scale)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def forecast_study():
    spec = dgp.benchmark_spec(t_len=250, n_dim=100, n_reps=20, seed=42)
    opts = pipeline.FitOptions(starts=3, seed=1, maxfev=80, xatol=1e-2)
    t0 = time.time()
    res = dgp.run_forecast_study(spec, n_test=200, n_paths=1000, pipeline_opts=opts)
    return res, time.time() - t0


def test_c7a_forecast_rotation_ordering(forecast_study):
    res, elapsed = forecast_study
    sf1 = float(np.mean(res["rotated"]))
    sf2 = float(np.mean(res["unrotated"]))
    ok = sf1 <= sf2 and elapsed < 2700
    _report(
        "7a",
        ok,
        f"SF_1 mean {sf1:.4f} <= SF_2 mean {sf2:.4f}: {sf1 <= sf2} "
        f"(paired, 20 reps); {elapsed:.0f}s (<2700s)",
    )
    assert sf1 <= sf2
    assert elapsed < 2700


def test_c7b_forecast_score_level(forecast_study):
    # the published level implies a target-series scale (sigma ~ 3.8) that no
    # stated reading of the generating process produces (~2.3 with normal
    # margins, ~3.4 with raw t4); see the decisions ledger for the analysis.
    res, _ = forecast_study
    sf1 = float(np.mean(res["rotated"]))
    ok = abs(sf1 - 0.532) <= 0.05
    _report("7b", ok, f"SF_1 mean {sf1:.4f} vs published 0.532 +- 0.05: {ok}")
    assert ok


# ---------------------------------------------------------------------------
# 8. VaR coverage property
# ---------------------------------------------------------------------------


def test_c8_var_coverage():
    t0 = time.time()
    spec = dgp.benchmark_spec(t_len=400, n_dim=50, seed=88)
    panel, *_ = dgp.generate(spec, 0)
    opts = pipeline.FitOptions(starts=2, seed=2, maxfev=60, xatol=1e-2)
    model = pipeline.fit(panel, k=2, p=2, families=("frank",), opts=opts)

    # the fitted model becomes the generating process: factor pseudo-uniforms
    # from its vine, margins via its empirical quantiles, observations via
    # its loadings plus resampled residual rows
    n = 2000
    m_paths = 500
    series = 0
    u_path = simulate(model.mvine, n + model.p, warmup=100, seed=1001)
    margin_samples = [m.sorted_sample for m in model.margins]
    f_path = np.column_stack(
        [empirical_quantile(margin_samples[j], u_path[:, j]) for j in range(model.k)]
    )
    rng = np.random.default_rng(77)
    resid = model.decomposition.residuals[:, series]
    lam = model.loadings_rotated[series]
    x_path = f_path @ lam + resid[rng.integers(0, resid.size, size=n + model.p)]

    alphas = (0.05, 0.10, 0.90, 0.95)
    violations = {a: 0 for a in alphas}
    for t in range(model.p, n + model.p):
        hist = u_path[t - model.p : t]
        u_next = simulate_conditional(model.mvine, hist, 1, m_paths, seed=20_000 + t)
        f_next = np.column_stack(
            [empirical_quantile(margin_samples[j], u_next[:, 0, j]) for j in range(model.k)]
        )
        rng_t = np.random.default_rng(50_000 + t)
        draws = np.sort(f_next @ lam + resid[rng_t.integers(0, resid.size, size=m_paths)])
        realized = x_path[t]
        for a in alphas:
            var = empirical_quantile(draws, a)
            if a < 0.5:
                violations[a] += realized < var
            else:
                violations[a] += realized > var

    ok = True
    details = []
    for a in alphas:
        rate = a if a < 0.5 else 1 - a
        lo, hi = stats.binom.ppf([0.005, 0.995], n, rate)
        inside = lo <= violations[a] <= hi
        ok = ok and inside
        details.append(f"alpha={a:g}: {violations[a]} in [{int(lo)}, {int(hi)}]={inside}")
    elapsed = time.time() - t0
    _report(8, ok, "; ".join(details) + f"; {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------------------
# 9. invariant suites (consolidated)
# ---------------------------------------------------------------------------


def test_c9_invariant_suite():
    t0 = time.time()
    rng = np.random.default_rng(321)

    # rank invariance under strictly increasing transforms
    x = rng.normal(size=(60, 2))
    assert np.allclose(pseudo_observations(np.exp(x)), pseudo_observations(x))
    assert np.allclose(pseudo_observations(x**3), pseudo_observations(x))

    # pooling equivalence against unpooled edge enumeration at T = 50
    s21 = build_structure(2, 1)
    params = [1.2, 4.5, -0.8, 3.1, 0.6]
    model = MVineModel(
        structure=s21,
        copulas={cid: PairCopula("frank", th) for cid, th in zip(s21.class_order, params)},
    )
    u = rng.uniform(0.01, 0.99, size=(50, 2))
    pooled = loglik(model, u)
    cops = [model.copulas[cid] for cid in s21.class_order]
    u1, u2 = u[:, 0], u[:, 1]
    brute = cops[1].log_density(u2, u1).sum()
    brute += cops[0].log_density(u1[1:], u1[:-1]).sum()
    a41 = cops[1].hfunc(u2[1:], u1[1:])
    b41 = cops[0].hfunc(u1[:-1], u1[1:])
    a32 = cops[0].hfunc(u1[1:], u1[:-1])
    b32 = cops[1].hfunc(u2[:-1], u1[:-1])
    brute += cops[2].log_density(a41, b41).sum()
    brute += cops[3].log_density(a32, b32).sum()
    brute += cops[4].log_density(cops[2].hfunc(a41, b41), cops[3].hfunc(b32, a32)).sum()
    assert pooled == pytest.approx(float(brute), abs=1e-8)

    # sign-flip exhaustiveness and determinism of a small fit
    spec = dgp.benchmark_spec(t_len=150, n_dim=20, seed=64)
    panel, *_ = dgp.generate(spec, 0)
    opts = pipeline.FitOptions(starts=1, seed=0, maxfev=25, xatol=1e-2)
    fit_a = pipeline.fit(panel, k=2, p=1, families=("frank",), opts=opts)
    fit_b = pipeline.fit(panel, k=2, p=1, families=("frank",), opts=opts)
    assert np.array_equal(fit_a.angles.values, fit_b.angles.values)
    assert fit_a.objective_value == fit_b.objective_value
    for s in enumerate_sign_flips(2):
        value, _ = pipeline.eval_objective(
            fit_a.decomposition.factors, fit_a.angles, np.asarray(s), fit_a.structure, ("frank",)
        )
        assert fit_a.objective_value >= value - 1e-6

    # simulation determinism under a fixed seed
    sim1 = simulate(model, 30, warmup=5, seed=3)
    sim2 = simulate(model, 30, warmup=5, seed=3)
    assert np.array_equal(sim1, sim2)

    elapsed = time.time() - t0
    _report(9, True, f"rank invariance, pooling equivalence, flip exhaustiveness, determinism; {elapsed:.0f}s")
