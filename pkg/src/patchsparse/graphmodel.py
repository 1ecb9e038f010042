"""Support-dependency graphs: construction, walk enumeration, realizability,
signal sampling, and realization of abstract graphs as dictionaries.

Nodes are supports whose atoms are independent; a directed edge (a, b) means
consecutive patches can carry supports a then b while agreeing on their
overlap.  Support sequences of model signals are exactly closed walks in this
graph (patch P wraps back to patch 1 in the periodic model), and a walk
contributes signals iff its per-patch residual stack has a nontrivial kernel.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .core import (Dictionary, GlobalRep, RANK_TOL, SupportSequence,
                   all_patches, bottom_overlap, kernel, rank_at_tol,
                   support_residual_matrix, top_overlap)

#: Default cap on the number of candidate supports when building a graph.
NODE_GUARD = 1_000_000

#: Default cap on enumerated walks.
WALK_CAP = 100_000


class CombinatorialLimitError(RuntimeError):
    """An exhaustive enumeration would exceed its guard."""


class UnrealizableError(ValueError):
    """The support sequence admits no nonzero signal."""


class RealizationError(RuntimeError):
    """No nontrivial dictionary realizes the requested graph."""


@dataclass(frozen=True, eq=False)
class DependencyGraph:
    """Directed graph over independent supports.

    nodes : sorted tuple of supports (each a sorted index tuple; () included).
    edges : frozenset of ordered node pairs, ((), ()) always present.
    transfer : optional map edge -> nonsingular matrix C with
        S_B D_a = (S_T D_b) @ C; present only when every non-empty edge
        links equal-size supports with coinciding overlap spans.
    source : (n, m, s) provenance of the dictionary it was built from.
    """

    nodes: tuple
    edges: frozenset
    source: tuple
    transfer: dict | None = field(default=None)

    def __post_init__(self):
        adj = {v: [] for v in self.nodes}
        for a, b in self.edges:
            adj[a].append(b)
        for v in adj:
            adj[v].sort()
        object.__setattr__(self, "_adj", adj)

    def successors(self, node):
        return self._adj[node]

    @property
    def nonempty_nodes(self):
        return tuple(v for v in self.nodes if v)

    @property
    def nonempty_edges(self):
        return frozenset((a, b) for a, b in self.edges if a or b)

    def has_transfers(self) -> bool:
        return self.transfer is not None


@dataclass(frozen=True)
class PathEnumeration:
    paths: tuple
    truncated: bool

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)


def _support_count(m: int, s: int) -> int:
    total = 0
    c = 1
    for k in range(1, s + 1):
        c = c * (m - k + 1) // k
        total += c
    return total


def _edge_condition(sbd, std, a, b, bound, tol):
    """rank [S_B D_a, -S_T D_b] < bound, with rank of an empty matrix = -inf."""
    blocks = []
    if a:
        blocks.append(sbd[:, a])
    if b:
        blocks.append(-std[:, b])
    if not blocks:
        return True
    return rank_at_tol(np.hstack(blocks), tol=tol) < bound


def build_graph(D: Dictionary, s: int, tol: float = RANK_TOL,
                edge_tol: float | None = None,
                guard: int = NODE_GUARD) -> DependencyGraph:
    """Exhaustive dependency graph for supports of size at most s.

    Keeps every support with independent atoms as a node and every ordered
    pair satisfying rank [S_B D_a, -S_T D_b] < min(n-1, |a|+|b|) as an edge.
    ``edge_tol`` loosens only the edge rank tests (near-degenerate
    dictionaries are the dominant source of false negatives there).
    """
    n, m = D.n, D.m
    if not 1 <= s < n:
        raise ValueError(f"need 1 <= s < n, got s={s}, n={n}")
    count = _support_count(m, s)
    if count > guard:
        raise CombinatorialLimitError(
            f"{count} candidate supports exceed the guard {guard}")
    edge_tol = tol if edge_tol is None else edge_tol

    nodes = [()]
    for k in range(1, s + 1):
        for comb in itertools.combinations(range(m), k):
            if rank_at_tol(D.atoms[:, comb], tol=tol) == k:
                nodes.append(comb)
    nodes.sort()

    sbd = bottom_overlap(D.atoms)
    std = top_overlap(D.atoms)
    edges = set()
    for a in nodes:
        for b in nodes:
            if not a and not b:
                edges.add(((), ()))
                continue
            bound = min(n - 1, len(a) + len(b))
            if _edge_condition(sbd, std, a, b, bound, edge_tol):
                edges.add((a, b))
    return DependencyGraph(nodes=tuple(nodes), edges=frozenset(edges),
                           source=(n, m, s))


def compute_transfers(G: DependencyGraph, D: Dictionary,
                      tol: float = 1e-8) -> DependencyGraph:
    """Attach a transfer matrix to every non-empty edge, or fail.

    Each edge must link equal-size supports whose overlap spans coincide;
    the matrix C solves S_B D_a = (S_T D_b) @ C and is checked nonsingular.
    """
    sbd = bottom_overlap(D.atoms)
    std = top_overlap(D.atoms)
    transfer = {}
    for a, b in sorted(G.edges):
        if not a and not b:
            continue
        if len(a) != len(b) or not a:
            raise ValueError(f"edge {a}->{b} links unequal-size supports")
        lhs = std[:, b]
        rhs = sbd[:, a]
        C, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
        resid = np.max(np.abs(lhs @ C - rhs))
        scale = max(np.max(np.abs(rhs)), 1.0)
        if resid > tol * scale:
            raise ValueError(
                f"edge {a}->{b} has no exact transfer (residual {resid:.2e})")
        if rank_at_tol(C) < len(a):
            raise ValueError(f"edge {a}->{b} has a singular transfer matrix")
        transfer[(a, b)] = C
    return DependencyGraph(nodes=G.nodes, edges=G.edges, source=G.source,
                           transfer=transfer)


def _closed_walks(nodes, successors, P: int, cap: int, skip_all_empty: bool = True):
    """All closed node walks (v_0, ..., v_{P-1}) with every consecutive pair an
    edge and (v_{P-1}, v_0) an edge, in lexicographic order, truncated at cap.
    """
    node_index = {v: i for i, v in enumerate(nodes)}
    V = len(nodes)
    adj = np.zeros((V, V), dtype=bool)
    for v in nodes:
        for w in successors(v):
            adj[node_index[v], node_index[w]] = True
    # reach[k][i, j]: j reachable from i in exactly k edge steps
    reach = [np.eye(V, dtype=bool)]
    for _ in range(P):
        reach.append((reach[-1].astype(np.int64) @ adj.astype(np.int64)) > 0)

    walks = []
    truncated = False
    walk = []

    def dfs(v, remaining, target):
        nonlocal truncated
        if truncated:
            return
        if remaining == 0:
            if adj[v, target]:
                seq = tuple(nodes[u] for u in walk)
                if skip_all_empty and all(len(s) == 0 for s in seq):
                    return
                if len(walks) >= cap:
                    truncated = True
                    return
                walks.append(seq)
            return
        row = adj[v]
        for w in np.nonzero(row)[0]:
            # w still needs `remaining` edge steps to close the walk at target
            if reach[remaining][w, target]:
                walk.append(w)
                dfs(w, remaining - 1, target)
                walk.pop()
                if truncated:
                    return

    for start in range(V):
        if truncated:
            break
        if not reach[P][start, start]:
            continue
        walk.append(start)
        dfs(start, P - 1, start)
        walk.pop()
    return walks, truncated


def _open_walks(nodes, successors, P: int, cap: int):
    """All walks of P nodes without the wrap-around edge (literal reading)."""
    node_index = {v: i for i, v in enumerate(nodes)}
    V = len(nodes)
    adj = np.zeros((V, V), dtype=bool)
    for v in nodes:
        for w in successors(v):
            adj[node_index[v], node_index[w]] = True
    alive = [np.ones(V, dtype=bool)]        # can extend by k more steps
    for _ in range(P):
        alive.append(adj @ alive[-1])

    walks = []
    truncated = False
    walk = []

    def dfs(v, remaining):
        nonlocal truncated
        if truncated:
            return
        if remaining == 0:
            seq = tuple(nodes[u] for u in walk)
            if all(len(s) == 0 for s in seq):
                return
            if len(walks) >= cap:
                truncated = True
                return
            walks.append(seq)
            return
        for w in np.nonzero(adj[v])[0]:
            if alive[remaining - 1][w]:
                walk.append(w)
                dfs(w, remaining - 1)
                walk.pop()
                if truncated:
                    return

    for start in range(V):
        if truncated:
            break
        if alive[P - 1][start]:
            walk.append(start)
            dfs(start, P - 1)
            walk.pop()
    return walks, truncated


def enumerate_paths(G: DependencyGraph, P: int, cap: int = WALK_CAP,
                    closed: bool = True) -> PathEnumeration:
    """Support sequences of length P compatible with the graph.

    By default these are closed walks (the wrap-around edge s_P -> s_1 is
    required, since patch P+1 of a periodic signal is patch 1); pass
    closed=False for the open-path reading.  The all-empty walk is excluded.
    Deterministic lexicographic order; truncates at ``cap`` and flags it.
    """
    if P < 1:
        raise ValueError("need P >= 1")
    fn = _closed_walks if closed else _open_walks
    raw, truncated = fn(G.nodes, G.successors, P, cap)
    m = G.source[1]
    paths = tuple(SupportSequence(seq, m) for seq in raw)
    return PathEnumeration(paths=paths, truncated=truncated)


def is_realizable(S: SupportSequence, D: Dictionary, N: int,
                  tol: float = RANK_TOL):
    """(realizable?, dim ker A_S): whether some nonzero signal carries S."""
    A = support_residual_matrix(D, S, N, tol=tol)
    _, dim = kernel(A, tol=tol)
    return dim > 0, dim


def sample_signal(S: SupportSequence, D: Dictionary, N: int, rng,
                  tol: float = RANK_TOL, membership_tol: float = 1e-8):
    """Draw a uniform unit-sphere element of ker A_S and its representation.

    The representation is recovered patch-by-patch by least squares on the
    support atoms; the pair is re-checked for model membership before return.
    """
    A = support_residual_matrix(D, S, N, tol=tol)
    W, dim = kernel(A, tol=tol)
    if dim == 0:
        raise UnrealizableError("support sequence admits only the zero signal")
    g = rng.standard_normal(dim)
    x = W @ g
    x /= np.linalg.norm(x)
    gamma = representation_on_supports(x, S, D)
    U = D.atoms @ gamma.blocks.T
    resid = np.max(np.abs(U - all_patches(x, D.n)))
    if resid > membership_tol:
        raise UnrealizableError(
            f"sampled signal violates patch membership (residual {resid:.2e})")
    return x, gamma


def representation_on_supports(x, S: SupportSequence, D: Dictionary) -> GlobalRep:
    """Per-patch least-squares coefficients of x on the prescribed supports."""
    x = np.asarray(x, dtype=float).ravel()
    patches = all_patches(x, D.n)
    blocks = np.zeros((S.P, D.m))
    for i, s in enumerate(S.supports):
        if not s:
            continue
        coef, *_ = np.linalg.lstsq(D.atoms[:, list(s)], patches[:, i], rcond=None)
        blocks[i, list(s)] = coef
    return GlobalRep(blocks)


def realize_graph(G: DependencyGraph, n: int, tol: float = RANK_TOL,
                  rng=None) -> Dictionary:
    """Find a dictionary whose dependency graph contains the given graph.

    Requires transfer matrices on every non-empty edge.  Each edge (a, b)
    contributes the linear constraints S_B D_a = (S_T D_b) @ C on the entries
    of D; a random element of the constraint kernel is returned (unit
    Frobenius norm), after verifying that the rebuilt graph contains the
    input edges.
    """
    if not G.has_transfers():
        raise ValueError("realize_graph needs a graph with transfer matrices")
    rng = np.random.default_rng(0) if rng is None else rng
    m = 1 + max(j for v in G.nonempty_nodes for j in v)
    sizes = {len(v) for v in G.nonempty_nodes}
    if len(sizes) != 1:
        raise ValueError("all non-empty nodes must have the same size")
    k = sizes.pop()
    if n - 1 < k:
        raise ValueError(f"need n-1 >= node size, got n={n}, k={k}")

    def entry(row, col):
        # column-stacked vec(D)
        return col * n + row

    rows = []
    for (a, b), C in sorted(G.transfer.items()):
        # S_B D[:, a_c] = sum_{c'} D[:, b_{c'}] C[c', c], row r of the overlap
        for c in range(k):
            for r in range(n - 1):
                eq = np.zeros(n * m)
                eq[entry(r + 1, a[c])] += 1.0
                for cp in range(k):
                    eq[entry(r, b[cp])] -= C[cp, c]
                rows.append(eq)
    E = np.vstack(rows)
    basis, dim = kernel(E, tol=tol)
    if dim == 0:
        raise RealizationError("no nontrivial realization: the edge "
                               "constraints only admit D = 0")
    v = basis @ rng.standard_normal(dim)
    D = v.reshape((n, m), order="F")
    D /= np.linalg.norm(D)
    realized = Dictionary(D, kind="graph_realized", normalized=False)
    rebuilt = build_graph(realized, k, tol=tol)
    missing = G.nonempty_edges - rebuilt.nonempty_edges
    if missing:
        raise RealizationError(
            f"realization drops required edges (e.g. {sorted(missing)[0]}); "
            "the random kernel element is degenerate")
    return realized


def dim_bound_transfer(S: SupportSequence, G: DependencyGraph) -> int:
    """Certified upper bound on dim ker A_S for transfer-mode graphs: the
    common node size k."""
    if not G.has_transfers():
        raise ValueError("bound only certified for transfer-mode graphs")
    sizes = {len(s) for s in S.supports if s}
    if not sizes:
        raise ValueError("path visits only the empty support; bound is vacuous")
    if len(sizes) != 1:
        raise ValueError("path mixes support sizes; bound is not certified")
    return sizes.pop()


def conjectured_kernel_dim_bound(S: SupportSequence, D: Dictionary,
                                 tol: float = RANK_TOL) -> int:
    """Diagnostic only: |s_1| + sum_i (|s_{i+1}| - rank [S_B D_{s_i}, S_T D_{s_{i+1}}])
    around the cycle.  Conjectured (not proved) to bound dim ker A_S for
    general graphs; never returned as a certified bound.
    """
    sbd = bottom_overlap(D.atoms)
    std = top_overlap(D.atoms)
    sups = S.supports
    total = len(sups[0])
    for i in range(len(sups) - 1):
        a, b = sups[i], sups[i + 1]
        blocks = []
        if a:
            blocks.append(sbd[:, a])
        if b:
            blocks.append(std[:, b])
        r = rank_at_tol(np.hstack(blocks), tol=tol) if blocks else 0
        total += len(b) - r
    return total
