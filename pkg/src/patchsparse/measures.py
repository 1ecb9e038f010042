"""Model-theoretic quantities: spark and its support-restricted variant,
cumulative coherence functions, isometry constants, and the allowed-support
sets they are evaluated over.

Everything here that is intractable in general is computed exhaustively
behind explicit combinatorial guards, with certified-bound fallbacks; the
module never silently approximates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (Dictionary, PatchModel, RANK_TOL, build_bundle, kernel,
                   rank_at_tol)
from .graphmodel import (CombinatorialLimitError, _closed_walks, build_graph,
                         enumerate_paths, is_realizable)

SUBSET_GUARD = 1_000_000
UNION_GUARD = 1_000_000


@dataclass(frozen=True)
class SparkResult:
    """value is exact when ``exact``; otherwise a certified lower bound
    (every smaller column subset was verified independent)."""

    value: int
    exact: bool
    witness: tuple | None


@dataclass(frozen=True)
class AllowedSupports:
    """The local supports that occur in some model representation.

    exact is True only when the realizable-path enumeration ran to
    completion; otherwise T is a subset and measures over it are bounds.
    """

    T: frozenset
    source: str
    exact: bool

    def members(self, size: int | None = None):
        sups = sorted(self.T)
        if size is None:
            return sups
        return [s for s in sups if len(s) == size]

    def unions(self, guard: int = UNION_GUARD):
        """The pairwise-union family {s1 | s2 : s1, s2 in T}, deduplicated."""
        sups = sorted(self.T)
        if len(sups) ** 2 > guard:
            raise CombinatorialLimitError(
                f"{len(sups)}^2 pairwise unions exceed the guard {guard}")
        out = set()
        for a in sups:
            sa = set(a)
            for b in sups:
                out.add(tuple(sorted(sa | set(b))))
        return sorted(out)


def allowed_supports(model: PatchModel, cap: int = 100_000,
                     tol: float = RANK_TOL) -> AllowedSupports:
    """Union of the supports along every realizable closed walk of length P."""
    D = model.dictionary
    G = build_graph(D, model.s, tol=tol)
    enum = enumerate_paths(G, model.P, cap=cap)
    T = {()}                # the zero signal always carries the empty support
    for path in enum.paths:
        ok, _ = is_realizable(path, D, model.N, tol=tol)
        if ok:
            T.update(path.supports)
    exact = not enum.truncated
    return AllowedSupports(T=frozenset(T),
                           source="exhaustive_enumeration" if exact else "graph_paths",
                           exact=exact)


def _batched_ranks(D: np.ndarray, subsets, tol: float) -> np.ndarray:
    """Numerical rank of D[:, s] for every subset in a same-size list."""
    stack = np.stack([D[:, list(s)] for s in subsets])
    sv = np.linalg.svd(stack, compute_uv=False)
    smax = sv[:, :1]
    return np.sum(sv > tol * np.maximum(smax, 1e-300), axis=1)


def spark(D: Dictionary, cap: int = SUBSET_GUARD,
          tol: float = RANK_TOL) -> SparkResult:
    """Minimal number of linearly dependent columns; n+1 when every subset of
    at most n columns is independent (full spark)."""
    A = D.atoms
    n, m = A.shape
    checked = 0
    for j in range(1, min(m, n) + 1):
        count = math.comb(m, j)
        if checked + count > cap:
            return SparkResult(value=j, exact=False, witness=None)
        checked += count
        subsets = list(itertools.combinations(range(m), j))
        for lo in range(0, len(subsets), 4096):
            chunk = subsets[lo:lo + 4096]
            ranks = _batched_ranks(A, chunk, tol)
            bad = np.nonzero(ranks < j)[0]
            if bad.size:
                return SparkResult(value=j, exact=True, witness=chunk[int(bad[0])])
    return SparkResult(value=n + 1, exact=True, witness=None)


def globalized_spark(D: Dictionary, T: AllowedSupports,
                     cap: int = UNION_GUARD, tol: float = RANK_TOL) -> SparkResult:
    """min |s1 u s2| over allowed supports with dependent union columns;
    sentinel m+1 when every union is independent."""
    if not T.exact:
        raise ValueError("globalized spark needs an exact allowed-support set")
    unions = [u for u in T.unions(guard=cap) if u]
    by_size: dict[int, list] = {}
    for u in unions:
        by_size.setdefault(len(u), []).append(u)
    for size in sorted(by_size):
        for u in by_size[size]:
            if rank_at_tol(D.atoms[:, list(u)], tol=tol) < size:
                return SparkResult(value=size, exact=True, witness=u)
    return SparkResult(value=D.m + 1, exact=True, witness=None)


def mutual_coherence(D: Dictionary) -> float:
    """Largest off-diagonal |<d_i, d_j>| over unit-normalized atoms (the
    input is normalized on an internal copy, never mutated).  Zero columns
    carry no direction and are ignored."""
    norms = np.linalg.norm(D.atoms, axis=0)
    A = np.divide(D.atoms, norms, out=np.zeros_like(D.atoms),
                  where=norms > 0.0)
    G = np.abs(A.T @ A)
    np.fill_diagonal(G, 0.0)
    return float(np.max(G))


def babel_mu1(D: Dictionary, s: int) -> float:
    """Cumulative coherence: max over atoms of the sum of the s largest
    off-diagonal |<d_i, d_j>|.  Requires normalized atoms; mu1(0) = 0."""
    if not D.normalized:
        raise ValueError("cumulative coherence is defined for normalized atoms")
    if s == 0:
        return 0.0
    if not 1 <= s <= D.m - 1:
        raise ValueError(f"need 0 <= s <= m-1, got s={s}, m={D.m}")
    G = np.abs(D.atoms.T @ D.atoms)
    np.fill_diagonal(G, 0.0)
    top = -np.partition(-G, s - 1, axis=1)[:, :s]
    return float(np.max(np.sum(top, axis=1)))


def _normalized_abs_gram(D: Dictionary) -> np.ndarray:
    A = D.atoms / np.linalg.norm(D.atoms, axis=0)
    return np.abs(A.T @ A)


def globalized_mu1star(D: Dictionary, T: AllowedSupports, s: int,
                       guard: int = UNION_GUARD) -> float:
    """Support-restricted cumulative coherence: the outer max runs only over
    size-s members of the pairwise-union family of allowed supports."""
    if not T.exact:
        raise ValueError("restricted coherence needs an exact allowed-support set")
    members = [u for u in T.unions(guard=guard) if len(u) == s]
    if not members:
        raise ValueError(f"no allowed support union has size {s}")
    G = _normalized_abs_gram(D)
    best = 0.0
    for S in members:
        sub = G[np.ix_(S, S)].copy()
        np.fill_diagonal(sub, 0.0)
        best = max(best, float(np.max(np.sum(sub, axis=1))))
    return best


def mu1star_spark_bound(D: Dictionary, T: AllowedSupports,
                        guard: int = UNION_GUARD) -> float:
    """min { s : mu1*(s) >= 1 } over the sizes where mu1* is defined,
    +inf when the restricted coherence stays below 1 everywhere (then no
    allowed union can be dependent)."""
    sizes = sorted({len(u) for u in T.unions(guard=guard) if u})
    for s in sizes:
        if globalized_mu1star(D, T, s, guard=guard) >= 1.0:
            return float(s)
    return math.inf


def eta1star(D: Dictionary, T: AllowedSupports, s: int) -> float:
    """Greedy-recovery coherence: over size-s allowed supports, the worst
    in-support cumulative coherence plus the worst out-of-support cross term."""
    if not T.exact:
        raise ValueError("restricted coherence needs an exact allowed-support set")
    members = T.members(size=s)
    if not members:
        raise ValueError(f"no allowed support has size {s}")
    G = _normalized_abs_gram(D)
    m = D.m
    best = 0.0
    for S in members:
        S = list(S)
        sub = G[np.ix_(S, S)].copy()
        np.fill_diagonal(sub, 0.0)
        inside = float(np.max(np.sum(sub, axis=1)))
        comp = [j for j in range(m) if j not in set(S)]
        outside = float(np.max(np.sum(G[np.ix_(comp, S)], axis=1))) if comp else 0.0
        best = max(best, inside + outside)
    return best


def _gram_extremes(D: np.ndarray, supports) -> float:
    worst = 0.0
    for S in supports:
        sub = D[:, list(S)]
        ev = np.linalg.eigvalsh(sub.T @ sub)
        worst = max(worst, float(max(ev[-1] - 1.0, 1.0 - ev[0])))
    return worst


def _support_pattern_walks(D: Dictionary, k: int, P: int, cap: int,
                           tol: float) -> tuple:
    """Closed walks of exact-support patterns with block sizes <= k.

    Nodes are all supports of size <= k (no independence requirement: the
    isometry constant quantifies over non-minimal representations too);
    edges use the pairwise overlap rank condition, which every exact support
    pattern of an agreeing representation satisfies.
    """
    n, m = D.n, D.m
    nodes = [()]
    for j in range(1, min(k, m) + 1):
        nodes.extend(itertools.combinations(range(m), j))
    nodes.sort()
    sbd = D.atoms[1:, :]
    std = D.atoms[:-1, :]
    ok = {}
    for a in nodes:
        for b in nodes:
            if not a and not b:
                ok[(a, b)] = True
                continue
            blocks = []
            if a:
                blocks.append(sbd[:, a])
            if b:
                blocks.append(-std[:, b])
            ok[(a, b)] = rank_at_tol(np.hstack(blocks), tol=tol) < len(a) + len(b)
    adjacency = {a: [b for b in nodes if ok[(a, b)]] for a in nodes}
    walks, truncated = _closed_walks(nodes, lambda v: adjacency[v], P, cap)
    if truncated:
        raise CombinatorialLimitError(
            f"more than {cap} support patterns at k={k}, P={P}")
    return walks


def rip_constants(D: Dictionary, k: int, variant: str = "classical",
                  model: PatchModel | None = None,
                  T: AllowedSupports | None = None,
                  cap: int = SUBSET_GUARD, tol: float = RANK_TOL) -> float:
    """Near-isometry constants.

    classical : worst Gram eigenvalue deviation over all size-k supports.
    globalized : same, restricted to allowed supports of size <= k (needs T).
    generalized : worst deviation of ||DG Gamma||^2 / ||Gamma||^2 over
        overlap-agreeing Gamma with ||Gamma||_{0,inf} <= k (needs the model;
        exhaustive over exact-support patterns, tiny N only).
    """
    if variant == "classical":
        j = min(k, D.m)
        if math.comb(D.m, j) > cap:
            raise CombinatorialLimitError(f"C({D.m},{j}) exceeds the guard {cap}")
        return _gram_extremes(D.atoms, itertools.combinations(range(D.m), j))
    if variant == "globalized":
        if T is None:
            if model is None:
                raise ValueError("globalized variant needs T or the model")
            T = allowed_supports(model)
        if not T.exact:
            raise ValueError("globalized variant needs an exact allowed-support set")
        members = [S for S in T.members() if 0 < len(S) <= k]
        if not members:
            return 0.0
        return _gram_extremes(D.atoms, members)
    if variant != "generalized":
        raise ValueError(f"unknown variant {variant!r}")
    if model is None:
        raise ValueError("generalized variant needs the model")

    P = model.P
    walks = _support_pattern_walks(D, k, P, cap, tol)
    if not walks:
        return 0.0
    bundle = build_bundle(PatchModel(D, min(model.s, D.n - 1), model.N))
    m = D.m
    worst = 0.0
    for walk in walks:
        cols = [i * m + a for i, sup in enumerate(walk) for a in sup]
        V, dim = kernel(bundle.Mstar[:, cols], tol=tol)
        if dim == 0:
            continue
        B = bundle.DG[:, cols] @ V
        ev = np.linalg.eigvalsh(B.T @ B)
        worst = max(worst, float(max(ev[-1] - 1.0, 1.0 - ev[0])))
    return worst
