"""Recovery and denoising: greedy per-patch coding (LPA), oracle projection,
the globalized greedy pursuit on the lifted dictionary, and the operator
splitting pursuit.

The splitting pursuit and LPA run their per-patch greedy steps through a
batched Gram-domain solver, so an outer iteration costs a handful of dense
matrix products regardless of the number of patches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .core import (Dictionary, GlobalRep, NonMinimalSupportError, PatchModel,
                   RANK_TOL, SupportSequence, all_patches, average_patches,
                   bottom_overlap, build_bundle, kernel, overlap_violation,
                   projector_onto_support, support_residual_matrix, synthesize,
                   top_overlap)
from .graphmodel import representation_on_supports


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the final gap."""

    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


@dataclass
class PursuitResult:
    """Uniform output of every pursuit.

    overlap_violation is the max pairwise overlap disagreement of ``gamma``;
    when ``projected`` is True the estimate satisfies the model constraint
    (violation <= 1e-8) and xhat lies in the span prescribed by ``support``.
    """

    xhat: np.ndarray
    gamma: GlobalRep
    support: SupportSequence
    iterations: int
    residual_norm: float
    overlap_violation: float
    projected: bool


def omp(A, y, K: int, res_tol: float = 0.0):
    """Orthogonal matching pursuit on an explicit matrix.

    Selects the atom maximizing |<a_j, r>| / ||a_j|| (ties break to the
    lowest index), re-solves least squares on the selected set each step, and
    stops after K atoms or once ||r||_2 <= res_tol.  Returns the coefficient
    vector and the support in selection order.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    norms = np.linalg.norm(A, axis=0)
    norms[norms == 0.0] = np.inf
    K = min(K, *A.shape)
    sel: list[int] = []
    coef = np.zeros(A.shape[1])
    r = y.copy()
    yscale = max(np.linalg.norm(y), 1.0)
    while len(sel) < K and np.linalg.norm(r) > res_tol:
        score = np.abs(A.T @ r) / norms
        if sel:
            score[sel] = -np.inf
        j = int(np.argmax(score))
        if score[j] <= 1e-13 * yscale:
            break
        sel.append(j)
        c, *_ = np.linalg.lstsq(A[:, sel], y, rcond=None)
        r = y - A[:, sel] @ c
    coef[sel] = c if sel else 0.0
    return coef, sel


def _batch_omp_gram(G, B, norms, K, y_sq, res_tol: float = 0.0,
                    incumbent=None, margin: float = 0.0):
    """OMP on many targets sharing one dictionary, in the Gram domain.

    G : (m, m) Gram of the dictionary, B : (m, P) correlations with the
    targets, norms : column norms, y_sq : (P,) squared target norms.
    Runs exactly K selection rounds (a target drops out early when its
    residual correlations vanish or its residual energy falls below
    res_tol^2).  ``incumbent`` (an (m, P) boolean mask) marks atoms whose
    selection scores get a (1 + margin) bonus; iterative callers use it to
    keep near-tied selections from flapping between rounds.
    Returns (coefs (P, m), supports (P, K) with -1 padding).
    """
    m, P = B.shape
    coefs = np.zeros((m, P))
    sel = np.full((P, K), -1, dtype=int)
    active = np.ones(P, dtype=bool)
    if res_tol > 0.0:
        active &= y_sq > res_tol ** 2
    tiny = 1e-12 * np.sqrt(np.maximum(y_sq, 1e-300))
    for k in range(K):
        if not active.any():
            break
        corr = B - G @ coefs
        score = np.abs(corr) / norms[:, None]
        if incumbent is not None and margin > 0.0:
            score = score * (1.0 + margin * incumbent)
        if k:
            taken = sel[:, :k]
            cols = np.repeat(np.arange(P), k)
            flat = taken.ravel()
            ok = flat >= 0
            score[flat[ok], cols[ok]] = -np.inf
        best = np.argmax(score, axis=0)
        peak = score[best, np.arange(P)]
        active &= peak > tiny
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        sel[idx, k] = best[idx]
        S = sel[idx, :k + 1]
        Gs = G[S[:, :, None], S[:, None, :]]
        rhs = B[S, idx[:, None]]
        try:
            c = np.linalg.solve(Gs, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            c = np.stack([np.linalg.lstsq(Gs[t], rhs[t], rcond=None)[0]
                          for t in range(len(idx))])
        coefs[:, idx] = 0.0
        coefs[S, idx[:, None]] = c
        if res_tol > 0.0:
            resid_sq = y_sq[idx] - np.einsum("ij,ij->i", rhs, c)
            done = resid_sq <= res_tol ** 2
            active[idx[done]] = False
    return coefs.T, sel


def averaging_operator(D: Dictionary, S: SupportSequence, N: int,
                       tol: float = RANK_TOL) -> np.ndarray:
    """The patch-averaging map (1/n) sum_i R_i^T P_{s_i} R_i as an (N, N) matrix."""
    n = D.n
    MA = np.zeros((N, N))
    projectors = {}
    for i, s in enumerate(S.supports):
        if s not in projectors:
            projectors[s] = projector_onto_support(D, s, tol=tol)
        rows = (i + np.arange(n)) % N
        MA[np.ix_(rows, rows)] += projectors[s]
    return MA / n


def lpa(model: PatchModel, y, res_tol: float | None = None) -> PursuitResult:
    """Local patch averaging: per-patch greedy coding with K = s, followed by
    overlap averaging.  ``res_tol`` switches on noise-aware early stopping of
    the per-patch coding (off by default; sparsity-targeted stopping is the
    documented default)."""
    y = np.asarray(y, dtype=float).ravel()
    D = model.dictionary
    patches = all_patches(y, model.n)
    G = D.atoms.T @ D.atoms
    B = D.atoms.T @ patches
    norms = np.linalg.norm(D.atoms, axis=0)
    y_sq = np.sum(patches ** 2, axis=0)
    coefs, _ = _batch_omp_gram(G, B, norms, model.s, y_sq,
                               res_tol=res_tol or 0.0)
    gamma = GlobalRep(coefs)
    xhat = average_patches(D.atoms @ coefs.T)
    return PursuitResult(
        xhat=xhat, gamma=gamma, support=gamma.support(),
        iterations=1, residual_norm=float(np.linalg.norm(y - xhat)),
        overlap_violation=overlap_violation(gamma, D), projected=False)


def oracle_project(y, S: SupportSequence, D: Dictionary, mode: str = "direct",
                   tol: float = 1e-9, max_iters: int = 10_000,
                   rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projection onto the subspace of signals carrying S.

    direct mode projects through an orthonormal kernel basis; iterative mode
    repeats the patch-averaging map until successive iterates are within
    ``tol`` (its fixed points on the relevant subspace are the projections,
    and the map is a contraction elsewhere).
    """
    y = np.asarray(y, dtype=float).ravel()
    N = y.size
    if mode == "direct":
        A = support_residual_matrix(D, S, N, tol=rank_tol)
        W, _ = kernel(A, tol=rank_tol)
        return W @ (W.T @ y)
    if mode != "iterative":
        raise ValueError(f"unknown mode {mode!r}")
    MA = averaging_operator(D, S, N, tol=rank_tol)
    x = y.copy()
    for _ in range(max_iters):
        xn = MA @ x
        gap = float(np.linalg.norm(xn - x))
        x = xn
        if gap <= tol:
            return x
    raise ConvergenceError(
        f"averaging iteration did not reach gap <= {tol} in {max_iters} steps "
        f"(gap {gap:.3e})", gap)


def project_to_model(y, S: SupportSequence, D: Dictionary,
                     rank_tol: float = RANK_TOL) -> np.ndarray:
    """Projection of y onto the signals carrying support sequence S."""
    return oracle_project(y, S, D, mode="direct", rank_tol=rank_tol)


class QompSolver:
    """Greedy pursuit on the lifted dictionary [DG; beta * Mstar].

    The Gram matrix of the lifted dictionary is precomputed once, so repeated
    solves against the same model/beta (e.g. Monte-Carlo trials) are cheap.
    Columns are used unnormalized, exactly as constructed; the selection
    score divides by the column norm to remove the beta-induced bias.
    """

    def __init__(self, model: PatchModel, beta: float):
        if beta <= 0:
            raise ValueError("need beta > 0")
        self.model = model
        self.beta = beta
        bundle = build_bundle(model)
        self.DG = bundle.DG
        Q = np.vstack([bundle.DG, beta * bundle.Mstar])
        self.gram = Q.T @ Q
        self.norms = np.sqrt(np.diag(self.gram))
        self.norms[self.norms == 0.0] = np.inf

    def solve(self, y, K_global: int | None = None, res_tol: float = 0.0,
              patch_cap: int | None = None, project: bool = True,
              return_order: bool = False):
        """Run the pursuit on y; see :func:`qomp` for the contract."""
        model = self.model
        m, P, s = model.m, model.P, model.s
        y = np.asarray(y, dtype=float).ravel()
        K = s * P if K_global is None else min(K_global, m * P)
        cap = s if patch_cap is None else patch_cap

        b = self.DG.T @ y                      # Q^T [y; 0]
        y_sq = float(y @ y)
        blocked = np.zeros(m * P, dtype=bool)
        patch_count = np.zeros(P, dtype=int)
        order: list[int] = []
        L = np.zeros((K, K))
        Gsel = np.empty((m * P, K))            # selected Gram columns, in order
        bsel = np.empty(K)
        c = np.zeros(0)
        resid_sq = y_sq
        tiny = 1e-12 * max(np.sqrt(y_sq), 1e-150)

        corr = b.copy()
        while len(order) < K and resid_sq > res_tol ** 2:
            score = np.abs(corr) / self.norms
            score[blocked] = -np.inf
            j = int(np.argmax(score))
            if score[j] <= tiny:
                break
            # grow the Cholesky factor; a dependent column is blocked, not kept
            k = len(order)
            gj = self.gram[:, j]
            if k:
                w = solve_triangular(L[:k, :k], gj[order], lower=True,
                                     check_finite=False)
                d = gj[j] - w @ w
            else:
                w = np.zeros(0)
                d = gj[j]
            if d <= 1e-12 * gj[j]:
                blocked[j] = True
                continue
            L[k, :k] = w
            L[k, k] = np.sqrt(d)
            Gsel[:, k] = gj
            bsel[k] = b[j]
            order.append(j)
            blocked[j] = True
            p = j // m
            patch_count[p] += 1
            if patch_count[p] >= cap:
                blocked[p * m:(p + 1) * m] = True
            z = solve_triangular(L[:k + 1, :k + 1], bsel[:k + 1], lower=True,
                                 check_finite=False)
            c = solve_triangular(L[:k + 1, :k + 1].T, z, lower=False,
                                 check_finite=False)
            resid_sq = max(y_sq - bsel[:k + 1] @ c, 0.0)
            corr = b - Gsel[:, :k + 1] @ c

        coef = np.zeros(m * P)
        coef[order] = c
        gamma_raw = GlobalRep.from_vector(coef, m)
        support = gamma_raw.support()
        result = self._finalize(y, gamma_raw, support, len(order), project)
        if return_order:
            return result, order
        return result

    def _finalize(self, y, gamma_raw, support, iterations, project):
        model = self.model
        D = model.dictionary
        if project:
            try:
                W, _ = kernel(support_residual_matrix(D, support, model.N))
                xhat = W @ (W.T @ y)
                gamma = representation_on_supports(xhat, support, D)
                return PursuitResult(
                    xhat=xhat, gamma=gamma, support=support,
                    iterations=iterations,
                    residual_norm=float(np.linalg.norm(y - xhat)),
                    overlap_violation=overlap_violation(gamma, D),
                    projected=True)
            except NonMinimalSupportError:
                pass                       # fall back to the raw estimate
        xhat = synthesize(gamma_raw, D)
        return PursuitResult(
            xhat=xhat, gamma=gamma_raw, support=support, iterations=iterations,
            residual_norm=float(np.linalg.norm(y - xhat)),
            overlap_violation=overlap_violation(gamma_raw, D), projected=False)


def qomp(model: PatchModel, y, beta: float, K_global: int | None = None,
         res_tol: float = 0.0, project: bool = True) -> PursuitResult:
    """Globalized greedy pursuit: OMP on [DG; beta*Mstar] against [y; 0] with
    global budget K_global (default s*N), then projection of y onto the
    signals carrying the estimated supports.

    A patch stops acquiring atoms once it holds s of them (the global budget
    is otherwise unconstrained per patch); if the estimated supports turn out
    non-minimal the unprojected estimate is returned with projected=False.
    """
    return QompSolver(model, beta).solve(y, K_global=K_global,
                                         res_tol=res_tol, project=project)


def admm_pursuit(model: PatchModel, y, rho: float = 1.0,
                 outer_iters: int = 300, tol: float = 1e-6,
                 settle: int = 5, res_tol: float | None = None,
                 rho_growth: float = 1.0, hysteresis_after: float = 0.65,
                 hysteresis: float = 0.1, restarts: int = 1,
                 restart_seed: int = 0) -> PursuitResult:
    """Operator-splitting pursuit for the overlap-constrained denoising
    problem.

    Each outer iteration runs (a) a batched per-patch OMP on the augmented
    dictionary [D; sqrt(rho/2) A] with A = [I; S_B D], (b) the least-squares
    update of the consensus blocks (the normal equations decouple per patch),
    and (c) the scaled dual update.

    The greedy step makes the iteration nonconvex.  Once the selected
    supports stop changing (``settle`` consecutive rounds, max(|primal
    residual|, |consensus increment|) <= tol, or the ``outer_iters`` budget),
    the remaining iteration is linear and its limit has a closed form: with
    the supports fixed, the per-patch objective equals n ||y - x||^2 over the
    signals carrying them, so the limit is the orthogonal projection onto
    that subspace.  That limit is returned (it satisfies the overlap
    constraint exactly, which is why a converged run coincides with its
    projected version); if the frozen supports turn out non-minimal the last
    iterate is returned unprojected instead.

    ``res_tol`` switches on noise-aware early stopping of the per-patch
    coding (stop a patch once its augmented residual drops below res_tol,
    e.g. sigma*sqrt(n) under known noise); by default every patch takes the
    full s atoms.

    ``rho_growth`` > 1 applies the standard varying-penalty schedule (the
    scaled dual is rescaled to keep rho*u fixed), which forces the
    disagreement penalty to eventually dominate and the supports to commit.
    After a ``hysteresis_after`` fraction of the budget, near-tied selections
    prefer the incumbent atoms (score bonus ``hysteresis``), which kills the
    remaining selection limit cycles among zero-information candidates.

    The splitting is a local search on a nonconvex set; ``restarts`` > 1
    reruns it from perturbed duals (seeded, deterministic) and keeps the
    candidate with the smallest data residual.
    """
    if rho <= 0:
        raise ValueError("need rho > 0")
    y = np.asarray(y, dtype=float).ravel()
    if restarts > 1:
        results = []
        for r in range(restarts):
            results.append(admm_pursuit(
                model, y, rho=rho, outer_iters=outer_iters, tol=tol,
                settle=settle, res_tol=res_tol, rho_growth=rho_growth,
                hysteresis_after=hysteresis_after, hysteresis=hysteresis,
                restarts=1, restart_seed=restart_seed + r))
        good = [res for res in results if res.projected] or results
        return min(good, key=lambda res: res.residual_norm)
    D = model.dictionary
    n, m, P, s = model.n, model.m, model.P, model.s
    sbd = bottom_overlap(D.atoms)
    std = top_overlap(D.atoms)
    A_aug = np.vstack([np.eye(m), sbd])
    H = cho_factor(np.eye(m) + std.T @ std)

    patches = all_patches(y, n)                      # (n, P)
    alphas = np.zeros((P, m))
    Z = np.zeros((P, m))
    U = np.zeros((P, m + n - 1))
    if restart_seed:
        # tiny dual jitter moves the search into a different basin
        gen = np.random.Generator(np.random.Philox(restart_seed))
        U += 1e-6 * gen.standard_normal(U.shape)
    supports: tuple = ()
    best_supports: tuple = ()
    best_viol = np.inf
    incumbent = np.zeros((m, P), dtype=bool)
    stable = 0
    iterations = 0
    w = None
    for it in range(outer_iters):
        iterations = it + 1
        if w is None or rho_growth > 1.0:
            w = np.sqrt(rho / 2.0)
            Dtil = np.vstack([D.atoms, w * A_aug])
            Gtil = Dtil.T @ Dtil
            til_norms = np.linalg.norm(Dtil, axis=0)
        # (a) per-patch sparse coding against the consensus-augmented targets
        Bz = np.vstack([Z.T, std @ np.roll(Z, -1, axis=0).T])     # (m+n-1, P)
        target_tail = w * (Bz - U.T)
        Btil = Dtil.T @ np.vstack([patches, target_tail])
        y_sq = np.sum(patches ** 2, axis=0) + np.sum(target_tail ** 2, axis=0)
        mature = it >= hysteresis_after * outer_iters
        alphas, _ = _batch_omp_gram(Gtil, Btil, til_norms, s, y_sq,
                                    res_tol=res_tol or 0.0,
                                    incumbent=incumbent,
                                    margin=hysteresis if mature else 0.0)
        new_supports = tuple(tuple(int(j) for j in np.nonzero(row)[0])
                             for row in alphas)
        # supports count as settled only once the duals have matured
        stable = stable + 1 if (mature and new_supports == supports) else 0
        supports = new_supports
        incumbent.fill(False)
        incumbent[alphas.T != 0.0] = True
        raw_viol = overlap_violation(GlobalRep(alphas), D)
        if mature and raw_viol < best_viol:
            best_viol = raw_viol
            best_supports = new_supports

        # (b) consensus update; block-diagonal normal equations
        T = sbd @ alphas.T + U[:, m:].T                           # (n-1, P)
        rhs = (alphas + U[:, :m]).T + std.T @ np.roll(T, 1, axis=1)
        Znew = cho_solve(H, rhs).T

        # (c) scaled dual ascent on the primal residual
        R1 = alphas - Znew
        R2 = (sbd @ alphas.T - std @ np.roll(Znew, -1, axis=0).T).T
        U += np.hstack([R1, R2])

        gap = max(np.max(np.abs(R1)), np.max(np.abs(R2)),
                  np.max(np.abs(Znew - Z)))
        Z = Znew
        if gap <= tol or stable >= settle:
            best_supports = supports
            break
        if rho_growth > 1.0:
            U /= rho_growth
            rho *= rho_growth

    # commit to the most self-consistent support state visited
    support = SupportSequence(best_supports if best_supports else supports, m)
    try:
        W, _ = kernel(support_residual_matrix(D, support, model.N))
        xhat = W @ (W.T @ y)
        gamma = representation_on_supports(xhat, support, D)
        # atoms the joint constraint zeroed out drop from the reported
        # support; the cleaned projection is identical on the kept atoms
        scale = np.max(np.abs(gamma.blocks), initial=0.0)
        cleaned = gamma.support(tol=1e-9 * max(scale, 1e-300))
        if cleaned != support:
            support = cleaned
            W, _ = kernel(support_residual_matrix(D, support, model.N))
            xhat = W @ (W.T @ y)
            gamma = representation_on_supports(xhat, support, D)
        projected = True
    except NonMinimalSupportError:
        gamma = GlobalRep(alphas)
        xhat = synthesize(gamma, D)
        projected = False
    viol = overlap_violation(gamma, D)
    return PursuitResult(
        xhat=xhat, gamma=gamma, support=support, iterations=iterations,
        residual_norm=float(np.linalg.norm(y - xhat)),
        overlap_violation=viol, projected=bool(projected and viol <= 1e-8))
