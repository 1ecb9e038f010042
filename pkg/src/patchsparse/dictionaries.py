"""Constructors for the dictionary families with built-in overlap structure.

Random dictionaries almost surely generate an empty signal model (the
compatible-support graph has no edges), so models are built from structured
families: steps (piecewise-constant signals), cyclic windows of a base signal
(signature), mixed tuples of several base signals (multi-signature), and
dictionaries realized from an abstract dependency graph (see graphmodel).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dictionary, RANK_TOL, rank_at_tol, shift_operator


def heaviside(n: int) -> Dictionary:
    """The n x n upper-triangular step dictionary (unnormalized).

    Column j holds j+1 ones followed by zeros; a patch with L-1 internal
    steps has a unique representation with at most L nonzeros.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    return Dictionary(np.triu(np.ones((n, n))), kind="heaviside", normalized=False)


def signature(base, n: int) -> Dictionary:
    """Atoms are the normalized cyclic length-n windows of ``base``.

    Consecutive unnormalized atoms overlap by construction
    (S_B d_i = S_T d_{i+1}), which is what makes the model non-empty.
    """
    base = np.asarray(base, dtype=float).ravel()
    m = base.size
    idx = (np.arange(m)[None, :] + np.arange(n)[:, None]) % m
    atoms = base[idx]
    norms = np.linalg.norm(atoms, axis=0)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        raise ValueError(f"cyclic window at shift {int(bad[0])} is zero; cannot normalize")
    return Dictionary(atoms / norms, kind="signature", normalized=True,
                      column_scales=norms)


@dataclass(frozen=True)
class SignatureSpec:
    """Inputs for the multi-signature construction.

    base : (r, s) matrix whose columns are the base signals (length r = m/s),
        or a length-m vector for the single-signature reduction (s = 1).
    n : patch length.
    transfer : r nonsingular (s, s) mixing matrices, identity by default.
    """

    base: np.ndarray
    n: int
    transfer: tuple | None = None

    def __post_init__(self):
        base = np.atleast_2d(np.asarray(self.base, dtype=float))
        if base.shape[0] == 1 and base.shape[1] > 1:
            base = base.T
        object.__setattr__(self, "base", base)
        r, s = base.shape
        if self.transfer is not None:
            transfer = tuple(np.asarray(M, dtype=float) for M in self.transfer)
            if len(transfer) != r:
                raise ValueError(f"need r={r} transfer matrices, got {len(transfer)}")
            for i, M in enumerate(transfer):
                if M.shape != (s, s):
                    raise ValueError(f"transfer matrix {i} must be {s}x{s}")
                if rank_at_tol(M) < s:
                    raise ValueError(f"transfer matrix {i} is singular")
            object.__setattr__(self, "transfer", transfer)

    @property
    def r(self) -> int:
        return self.base.shape[0]

    @property
    def s(self) -> int:
        return self.base.shape[1]

    @property
    def m(self) -> int:
        return self.r * self.s


def random_signature_spec(n: int, m: int, s: int, rng) -> SignatureSpec:
    """Standard-normal base signals and random nonsingular transfer matrices."""
    if m % s:
        raise ValueError(f"s={s} must divide m={m}")
    r = m // s
    base = rng.standard_normal((r, s))
    transfer = []
    for _ in range(r):
        M = rng.standard_normal((s, s))
        while rank_at_tol(M) < s:
            M = rng.standard_normal((s, s))
        transfer.append(M)
    return SignatureSpec(base=base, n=n, transfer=tuple(transfer))


def multi_signature(spec: SignatureSpec) -> Dictionary:
    """Tuple i of s atoms is Y_i @ M_i, where Y_i stacks the i-th cyclic
    patch of every base signal.  Atoms are ordered tuple-major and normalized
    after mixing; the removed norms are kept on the result.
    """
    X = spec.base
    r, s = X.shape
    n = spec.n
    transfer = spec.transfer or tuple(np.eye(s) for _ in range(r))
    atoms = np.zeros((n, r * s))
    idx = np.arange(n)
    for i in range(r):
        Y = X[(i + idx) % r, :]              # (n, s), wraps cyclically (n > r allowed)
        atoms[:, i * s:(i + 1) * s] = Y @ transfer[i]
    norms = np.linalg.norm(atoms, axis=0)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        raise ValueError(f"atom {int(bad[0])} is zero after mixing; cannot normalize")
    return Dictionary(atoms / norms, kind="multi_signature", normalized=True,
                      column_scales=norms)


def normalize_atoms(D: Dictionary) -> Dictionary:
    """Scale every column to unit l2 norm (kind preserved)."""
    norms = np.linalg.norm(D.atoms, axis=0)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        raise ValueError(f"column {int(bad[0])} is zero; cannot normalize")
    prior = D.column_scales if D.column_scales is not None else np.ones(D.m)
    return Dictionary(D.atoms / norms, kind=D.kind, normalized=True,
                      column_scales=prior * norms)


def csc_pseudo_local(Dprime: Dictionary) -> Dictionary:
    """Lift a convolutional local dictionary to its pseudo-local form.

    All 2n-1 vertical shifts of D' side by side:
    [Z_B^(n-1) D', ..., Z_B^(1) D', D', Z_T^(1) D', ..., Z_T^(n-1) D'],
    of width (2n-1)m.  Beware: the result typically has repeated atoms
    (mutual coherence 1), e.g. whenever an atom has two equal adjacent
    sub-windows, and is a poor sparse-coding dictionary on its own.
    """
    D = Dprime.atoms
    n = Dprime.n
    blocks = [shift_operator("Z_B", k, n) @ D for k in range(n - 1, 0, -1)]
    blocks.append(D)
    blocks += [shift_operator("Z_T", k, n) @ D for k in range(1, n)]
    return Dictionary(np.hstack(blocks), kind="custom", normalized=False)


def _windows_index(n: int, m: int) -> np.ndarray:
    return (np.arange(m)[None, :] + np.arange(n)[:, None]) % m


def _signature_coherence(x: np.ndarray, idx: np.ndarray):
    """Hard mutual coherence of the signature dictionary of x, plus the
    pieces needed for the smoothed gradient."""
    U = x[idx]
    norms = np.linalg.norm(U, axis=0)
    Dn = U / norms
    G = Dn.T @ Dn
    np.fill_diagonal(G, 0.0)
    return float(np.max(np.abs(G))), U, norms, Dn, G


def optimize_signature_coherence(n: int, m: int, iterations: int = 10_000,
                                 step: float = 0.15, seed: int = 0,
                                 restarts: int = 1, temperature: float = 0.05,
                                 anneal_every: int = 1000,
                                 anneal_factor: float = 0.5):
    """First-order descent of the mutual coherence over signature dictionaries.

    The hard max over pairwise |<d_i, d_j>| is smoothed by log-sum-exp with a
    temperature annealed by ``anneal_factor`` every ``anneal_every`` steps
    (a plain subgradient of the max stalls at this scale).  The best iterate
    by the hard coherence is kept, so the reported value never increases.

    Returns (base vector, signature Dictionary, coherence).  Deterministic
    given the seed.
    """
    if not 2 <= n < m:
        raise ValueError("need 2 <= n < m")
    idx = _windows_index(n, m)
    best_mu, best_x = np.inf, None
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        x = rng.standard_normal(m)
        x /= np.linalg.norm(x)
        tau = temperature
        for it in range(iterations):
            mu, U, norms, Dn, G = _signature_coherence(x, idx)
            if mu < best_mu:
                best_mu, best_x = mu, x.copy()
            # softmax weights of |G_ij| over off-diagonal pairs, stabilized at mu
            W = np.exp((np.abs(G) - mu) / tau)
            np.fill_diagonal(W, 0.0)
            W /= W.sum()
            F = W * np.sign(G)
            grad_D = 2.0 * (Dn @ F)
            # through column normalization: d = u/||u||
            grad_U = (grad_D - Dn * np.sum(Dn * grad_D, axis=0)) / norms
            gx = np.zeros(m)
            np.add.at(gx, idx, grad_U)
            x = x - step * gx
            x /= np.linalg.norm(x)
            if anneal_every and (it + 1) % anneal_every == 0:
                tau = max(tau * anneal_factor, 1e-6)
        mu, *_ = _signature_coherence(x, idx)
        if mu < best_mu:
            best_mu, best_x = mu, x.copy()
    return best_x, signature(best_x, n), best_mu
