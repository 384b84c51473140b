"""M-vine copula structures over a sliding time window, estimation, simulation.

The window holds ``(p+1)*k`` nodes laid out time-major: node
``(t-1)*k + i`` is variable ``i`` at time offset ``t``.  The first tree is a
within-time path over variables in descending index plus a temporal link
joining variable 1 at consecutive time points; higher trees follow a
deterministic recursion that joins previous-tree edges sharing a common
parent, preferring the smallest time span, which keeps every tree a valid
spanning tree under the proximity condition.

Edges related by a time shift form an equivalence class and share one pair
copula.  The pooled pseudo-likelihood sums, over classes, the pair
log-densities of the class representative slid across every admissible time
shift of the full series, so each distinct pair of observations is counted
once; this equals the exact joint log-density of the order-p Markov model.

Simulation runs the Rosenblatt inversion through each node's chain of
h-functions: the first window is drawn node by node, then the window rolls
forward one time step at a time conditioning on the last ``p`` time points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericsError
from .paircop import PairCopula, fit_pair

MIN_FIT_WINDOWS = 10
DEFAULT_WARMUP = 100


def _var_of(node, k):
    return (node - 1) % k + 1


def _time_of(node, k):
    return (node - 1) // k + 1


@dataclass(frozen=True)
class VineEdge:
    """One edge of the window vine.

    ``conditioned`` is ordered with the larger node id first; ``parent_a``
    / ``parent_b`` index the previous tree's edge list (or -1 in tree 1) and
    ``side_a`` / ``side_b`` select which conditional of the parent feeds the
    corresponding argument.
    """

    tree_level: int
    conditioned: tuple
    conditioning: frozenset
    class_id: str
    union: frozenset
    base_time: int
    span: int
    parent_a: int = -1
    parent_b: int = -1
    side_a: int = 0
    side_b: int = 0


@dataclass(frozen=True)
class ClassInfo:
    """Evaluation plan for one equivalence class (its representative edge).

    ``arg_a``/``arg_b`` locate the h-transformed arguments: either
    ``("u", var, dt)`` for a raw pseudo-observation column or
    ``("h", class_id, side, dt)`` for a parent class conditional, with
    ``dt`` the time offset from the representative's base time.
    """

    class_id: str
    tree_level: int
    span: int
    rep: VineEdge
    arg_a: tuple
    arg_b: tuple
    n_window_edges: int


@dataclass
class MVineStructure:
    k: int
    p: int
    n_nodes: int
    levels: list
    class_order: list
    class_info: dict
    sampling_chains: list = field(default_factory=list)

    @property
    def n_classes(self):
        return len(self.class_order)


@dataclass
class MVineModel:
    structure: MVineStructure
    copulas: dict
    loglik_value: float = None

    def params_vector(self):
        """Copula parameters in canonical class order (independence -> 0)."""
        return np.array(
            [self.copulas[cid].parameter for cid in self.structure.class_order]
        )


def independence_model(structure):
    cops = {cid: PairCopula("independence") for cid in structure.class_order}
    return MVineModel(structure=structure, copulas=cops)


# ---------------------------------------------------------------------------
# structure generation
# ---------------------------------------------------------------------------


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _fingerprint(level, conditioned, conditioning, k):
    times = [_time_of(x, k) for x in conditioned]
    times += [_time_of(x, k) for x in conditioning]
    t0 = min(times)
    cond = tuple((_var_of(x, k), _time_of(x, k) - t0) for x in conditioned)
    data = tuple(sorted((_var_of(x, k), _time_of(x, k) - t0) for x in conditioning))
    return f"t{level}:c{cond}|d{data}"


def _make_edge(level, k, x, y, conditioning, union, parents):
    if x < y:
        x, y = y, x
        parents = (parents[1], parents[0])
    (pa, sa), (pb, sb) = parents
    times = [_time_of(n, k) for n in union]
    return VineEdge(
        tree_level=level,
        conditioned=(x, y),
        conditioning=frozenset(conditioning),
        class_id=_fingerprint(level, (x, y), conditioning, k),
        union=frozenset(union),
        base_time=min(times),
        span=max(times) - min(times),
        parent_a=pa,
        parent_b=pb,
        side_a=sa,
        side_b=sb,
    )


def _first_tree(k, p):
    node = lambda var, t: (t - 1) * k + var
    edges = []
    for t in range(1, p + 2):
        for var in range(k - 1, 0, -1):
            edges.append(
                _make_edge(1, k, node(var + 1, t), node(var, t), (), (node(var + 1, t), node(var, t)), ((-1, 0), (-1, 0)))
            )
    for t in range(1, p + 1):
        edges.append(
            _make_edge(1, k, node(1, t + 1), node(1, t), (), (node(1, t + 1), node(1, t)), ((-1, 0), (-1, 0)))
        )
    edges.sort(key=lambda e: (e.span, e.class_id, e.base_time))
    return edges


def _next_tree(level, prev, k):
    """One tree level up: greedy spanning tree over shared-parent pairs,
    smallest time span first."""
    incidence = {}
    for idx, e in enumerate(prev):
        verts = e.conditioned if level == 2 else (e.parent_a, e.parent_b)
        for v in verts:
            incidence.setdefault(v, []).append(idx)

    candidates = {}
    for members in incidence.values():
        for ai in range(len(members)):
            for bi in range(ai + 1, len(members)):
                i, j = members[ai], members[bi]
                key = (min(i, j), max(i, j))
                if key in candidates:
                    continue
                ei, ej = prev[i], prev[j]
                shared = ei.union & ej.union
                if len(shared) != level - 1:
                    continue
                (x,) = ei.union - shared
                (y,) = ej.union - shared
                union = ei.union | ej.union
                sa = 0 if ei.conditioned[0] == x else 1
                sb = 0 if ej.conditioned[0] == y else 1
                edge = _make_edge(level, k, x, y, shared, union, ((i, sa), (j, sb)))
                candidates[key] = (edge, i, j)

    ordered = sorted(
        candidates.values(),
        key=lambda item: (item[0].span, item[0].class_id, item[0].base_time),
    )
    uf = _UnionFind(len(prev))
    edges = []
    for edge, i, j in ordered:
        if uf.union(i, j):
            edges.append(edge)
            if len(edges) == len(prev) - 1:
                break
    if len(edges) != len(prev) - 1:
        raise NumericsError(f"vine construction failed to span tree level {level}")
    edges.sort(key=lambda e: (e.span, e.class_id, e.base_time))
    return edges


def _check_translation_invariance(levels, k, p):
    n = (p + 1) * k
    for edges in levels:
        seen = {(e.conditioned, e.conditioning) for e in edges}
        for e in edges:
            for shift in (-k, k):
                nodes = list(e.conditioned) + list(e.conditioning)
                if not all(1 <= x + shift <= n for x in nodes):
                    continue
                moved = (
                    (e.conditioned[0] + shift, e.conditioned[1] + shift),
                    frozenset(x + shift for x in e.conditioning),
                )
                if moved not in seen:
                    raise NumericsError(
                        f"vine construction is not translation invariant at tree {e.tree_level}"
                    )


def _class_plan(levels, k):
    reps = {}
    counts = {}
    for edges in levels:
        for e in edges:
            counts[e.class_id] = counts.get(e.class_id, 0) + 1
            if e.class_id not in reps or e.base_time < reps[e.class_id].base_time:
                reps[e.class_id] = e

    def _arg(rep, levels, side):
        node = rep.conditioned[side]
        if rep.tree_level == 1:
            return ("u", _var_of(node, k), _time_of(node, k) - rep.base_time)
        parent_idx = rep.parent_a if side == 0 else rep.parent_b
        pside = rep.side_a if side == 0 else rep.side_b
        parent = levels[rep.tree_level - 2][parent_idx]
        return ("h", parent.class_id, pside, parent.base_time - rep.base_time)

    order = sorted(
        reps,
        key=lambda cid: (
            reps[cid].tree_level,
            -reps[cid].conditioned[0],
            -reps[cid].conditioned[1],
            cid,
        ),
    )
    info = {}
    for cid in order:
        rep = reps[cid]
        info[cid] = ClassInfo(
            class_id=cid,
            tree_level=rep.tree_level,
            span=rep.span,
            rep=rep,
            arg_a=_arg(rep, levels, 0),
            arg_b=_arg(rep, levels, 1),
            n_window_edges=counts[cid],
        )
    return order, info


def _sampling_chains(levels, k, p):
    """Per-node inversion chains: node j's chain covers exactly {1..j}."""
    n = (p + 1) * k
    chains = [[] for _ in range(n)]
    for j in range(2, n + 1):
        target = frozenset(range(1, j + 1))
        top = None
        for idx, e in enumerate(levels[j - 2]):
            if e.union == target and j in e.conditioned:
                top = (j - 2, idx)
                break
        if top is None:
            raise NumericsError(f"no sampling chain for node {j}; vine is not orderable")
        chain = []
        lvl, idx = top
        while True:
            e = levels[lvl][idx]
            side = 0 if e.conditioned[0] == j else 1
            chain.append((lvl, idx, side))
            if lvl == 0:
                break
            idx = e.parent_a if side == 0 else e.parent_b
            lvl -= 1
        chain.reverse()  # ascending tree level
        chains[j - 1] = chain
    return chains


def build_structure(k, p):
    """Generate the deterministic M-vine window structure for (k, p).

    Parameters
    ----------
    k : int
        Number of variables per time point (k >= 1).
    p : int
        Markov order (p >= 1); the window spans p+1 time points.

    Returns
    -------
    MVineStructure
    """
    if k < 1:
        raise DataError(f"k must be a positive integer, got {k}")
    if p < 1:
        raise DataError(f"p must be a positive integer, got {p}")
    levels = [_first_tree(k, p)]
    n = (p + 1) * k
    for level in range(2, n):
        levels.append(_next_tree(level, levels[-1], k))
    _check_translation_invariance(levels, k, p)
    class_order, class_info = _class_plan(levels, k)
    chains = _sampling_chains(levels, k, p)
    return MVineStructure(
        k=k,
        p=p,
        n_nodes=n,
        levels=levels,
        class_order=class_order,
        class_info=class_info,
        sampling_chains=chains,
    )


def structure_table(structure, copulas=None):
    """Rows (tree, edge, conditioned, conditioning, family, parameter, tau)
    for the class representatives in canonical order."""
    rows = []
    last_tree, edge_no = None, 0
    for cid in structure.class_order:
        info = structure.class_info[cid]
        edge_no = edge_no + 1 if info.tree_level == last_tree else 1
        last_tree = info.tree_level
        cop = copulas.get(cid) if copulas else None
        rows.append(
            {
                "tree": info.tree_level,
                "edge": edge_no,
                "conditioned": info.rep.conditioned,
                "conditioning": tuple(sorted(info.rep.conditioning)),
                "family": cop.family if cop else "",
                "parameter": cop.parameter if cop else "",
                "tau": cop.tau() if cop else "",
            }
        )
    return rows


# ---------------------------------------------------------------------------
# pooled pseudo-likelihood and stepwise fitting
# ---------------------------------------------------------------------------


def _validate_pseudo_obs(structure, pseudo_obs):
    u = np.asarray(pseudo_obs, dtype=float)
    if u.ndim != 2 or u.shape[1] != structure.k:
        raise DataError(f"pseudo-observations must be T x {structure.k}")
    if u.shape[0] <= structure.p:
        raise DataError("series shorter than the Markov order")
    if np.any(u <= 0.0) or np.any(u >= 1.0) or not np.isfinite(u).all():
        raise DataError("pseudo-observations must lie strictly inside (0, 1)")
    return u


def _children_needs(structure):
    needed = set()
    for cid in structure.class_order:
        for arg in (structure.class_info[cid].arg_a, structure.class_info[cid].arg_b):
            if arg[0] == "h":
                needed.add(arg[1])
    return needed


def _resolve_arg(arg, u, cache, span):
    m = u.shape[0] - span
    if arg[0] == "u":
        _, var, dt = arg
        return u[dt : dt + m, var - 1]
    _, cid, side, dt = arg
    return cache[cid][side][dt : dt + m]


def _sweep(structure, u, fit_cb):
    """Shared class-order sweep used by loglik and fit_stepwise.

    ``fit_cb(cid, a, b)`` returns the PairCopula for the class.
    """
    needed = _children_needs(structure)
    cache = {}
    copulas = {}
    total = 0.0
    for cid in structure.class_order:
        info = structure.class_info[cid]
        a = _resolve_arg(info.arg_a, u, cache, info.span)
        b = _resolve_arg(info.arg_b, u, cache, info.span)
        cop = fit_cb(cid, a, b)
        copulas[cid] = cop
        contrib = cop.log_density(a, b)
        if not np.isfinite(contrib).all():
            raise NumericsError(f"non-finite log-density in edge class {cid}")
        total += float(contrib.sum())
        if cid in needed:
            cache[cid] = (cop.hfunc(a, b), cop.hfunc(b, a))
    return total, copulas


def loglik(model, pseudo_obs):
    """Pooled pair log-likelihood of the M-vine over the full series.

    Each equivalence class contributes its representative edge evaluated at
    every admissible time shift (T - span terms), with parameters shared
    within the class.
    """
    u = _validate_pseudo_obs(model.structure, pseudo_obs)

    def lookup(cid, a, b):
        if cid not in model.copulas:
            raise DataError(f"model has no pair copula for edge class {cid}")
        return model.copulas[cid]

    total, _ = _sweep(model.structure, u, lookup)
    return total


def fit_stepwise(structure, pseudo_obs, families, inits=None, allow_independence=True):
    """Tree-by-tree stepwise estimator: each class pools its argument pairs
    across all time shifts, fits one pair copula, then propagates the
    h-transformed data to the next tree with lower-tree parameters frozen.

    Parameters
    ----------
    structure : MVineStructure
    pseudo_obs : (T, k) array in (0, 1)
    families : iterable of family names (candidate set for selection)
    inits : dict, optional
        class_id -> PairCopula freezing family/reflection and warm-starting
        the parameter (used inside the rotation search).
    allow_independence : bool
        Turn off to force a parametric copula on every edge class.

    Returns
    -------
    MVineModel with ``loglik_value`` set to the achieved pooled likelihood.
    """
    u = _validate_pseudo_obs(structure, pseudo_obs)
    if u.shape[0] - structure.p < MIN_FIT_WINDOWS:
        raise DataError(
            f"insufficient data: {u.shape[0] - structure.p} windows < {MIN_FIT_WINDOWS}"
        )

    def fit_cb(cid, a, b):
        init = inits.get(cid) if inits else None
        return fit_pair(a, b, families=families, init=init,
                        allow_independence=allow_independence)

    total, copulas = _sweep(structure, u, fit_cb)
    return MVineModel(structure=structure, copulas=copulas, loglik_value=total)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


class _WindowSampler:
    """Lazy evaluator of edge conditionals over one window, vectorized
    across simulation paths."""

    def __init__(self, structure, copulas, n_paths):
        self.s = structure
        self.copulas = copulas
        self.m = n_paths
        self.vals = [None] * structure.n_nodes
        self.cache = {}

    def _arg(self, lvl, idx, side):
        e = self.s.levels[lvl][idx]
        if lvl == 0:
            return self.vals[e.conditioned[side] - 1]
        parent = e.parent_a if side == 0 else e.parent_b
        pside = e.side_a if side == 0 else e.side_b
        return self._out(lvl - 1, parent, pside)

    def _out(self, lvl, idx, side):
        key = (lvl, idx)
        if key not in self.cache:
            e = self.s.levels[lvl][idx]
            cop = self.copulas[e.class_id]
            a = self._arg(lvl, idx, 0)
            b = self._arg(lvl, idx, 1)
            self.cache[key] = (cop.hfunc(a, b), cop.hfunc(b, a))
        return self.cache[key][side]

    def sample_node(self, node, w):
        w = np.clip(np.asarray(w, dtype=float), 1e-10, 1 - 1e-10)
        for lvl, idx, side in reversed(self.s.sampling_chains[node - 1]):
            e = self.s.levels[lvl][idx]
            cop = self.copulas[e.class_id]
            given = self._arg(lvl, idx, 1 - side)
            w = cop.hfunc_inv(w, given)
        self.vals[node - 1] = w

    def roll(self):
        k = self.s.k
        for i in range(self.s.n_nodes - k):
            self.vals[i] = self.vals[i + k]
        for i in range(self.s.n_nodes - k, self.s.n_nodes):
            self.vals[i] = None
        self.cache.clear()

    def last_block(self):
        k = self.s.k
        return np.stack(self.vals[-k:], axis=-1)

    def block(self, t):
        k = self.s.k
        return np.stack(self.vals[(t - 1) * k : t * k], axis=-1)


def _path_rng(seed, path, stream=0):
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(stream), int(path))))


def simulate(model, t_len, warmup=DEFAULT_WARMUP, seed=0, n_paths=1):
    """Draw stationary paths of T x k pseudo-uniform observations.

    The first window comes from the full Rosenblatt inversion; the window
    then rolls one time step at a time conditioning on the last p time
    points.  ``warmup`` initial time points are discarded.  With
    ``n_paths > 1`` the result has shape (n_paths, T, k); path m draws from
    the RNG stream derived from (seed, m) either way, so single paths are
    reproducible slices of larger batches.
    """
    s = model.structure
    if t_len < 1:
        raise DataError("t_len must be positive")
    if n_paths < 1:
        raise DataError("n_paths must be positive")
    warmup = max(int(warmup), 0)
    total_blocks = warmup + t_len
    if total_blocks < s.p + 1:
        warmup = s.p + 1 - t_len
        total_blocks = warmup + t_len
    n_rolls = total_blocks - (s.p + 1)
    n_draws = s.n_nodes + n_rolls * s.k
    uniforms = np.empty((n_paths, n_draws))
    for m in range(n_paths):
        uniforms[m] = _path_rng(seed, m).random(n_draws)

    sampler = _WindowSampler(s, model.copulas, n_paths)
    pos = 0
    for node in range(1, s.n_nodes + 1):
        sampler.sample_node(node, uniforms[:, pos])
        pos += 1
    blocks = [sampler.block(t) for t in range(1, s.p + 2)]
    for _ in range(n_rolls):
        sampler.roll()
        for node in range(s.n_nodes - s.k + 1, s.n_nodes + 1):
            sampler.sample_node(node, uniforms[:, pos])
            pos += 1
        blocks.append(sampler.last_block())
    out = np.stack(blocks, axis=1)[:, warmup:, :]
    return out[0] if n_paths == 1 else out


def simulate_conditional(model, history, horizon, n_paths, seed=0):
    """Simulate ``n_paths`` forward paths of length ``horizon`` given the
    last p rows of pseudo-observations.

    Each path owns an independent RNG stream derived from (seed, path), so
    path m is reproducible regardless of the batch size.
    """
    s = model.structure
    history = np.atleast_2d(np.asarray(history, dtype=float))
    if history.shape[0] < s.p or history.shape[1] != s.k:
        raise DataError(f"history must provide at least p={s.p} rows of {s.k} columns")
    if horizon < 1:
        raise DataError("horizon must be positive")
    if n_paths < 1:
        raise DataError("n_paths must be positive")
    hist = np.clip(history[-s.p :], 1e-10, 1 - 1e-10)

    uniforms = np.empty((n_paths, horizon, s.k))
    for m in range(n_paths):
        uniforms[m] = _path_rng(seed, m).random((horizon, s.k))

    sampler = _WindowSampler(s, model.copulas, n_paths)
    out = np.empty((n_paths, horizon, s.k))
    for step in range(horizon):
        if step == 0:
            for t in range(s.p):
                for i in range(s.k):
                    sampler.vals[t * s.k + i] = np.full(n_paths, hist[t, i])
        else:
            sampler.roll()
        for i in range(s.k):
            node = s.p * s.k + i + 1
            sampler.sample_node(node, uniforms[:, step, i])
        out[:, step, :] = sampler.last_block()
    return out
