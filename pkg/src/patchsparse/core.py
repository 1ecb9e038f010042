"""Patch/overlap operator algebra for periodic patch-sparse models.

A signal x of length N is cut into P = N overlapping patches of length n,
extracted periodically.  Everything downstream (global dictionary, overlap
agreement constraints, per-support residual maps) is assembled here as dense
numpy matrices; the intended working range is N up to a few hundred and
m up to a few dozen atoms, where dense algebra is both simplest and fastest.

All indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Relative singular-value threshold: sigma counts as zero iff
#: sigma <= RANK_TOL * sigma_max.  Overridable per call everywhere it is used.
RANK_TOL = 1e-10

DICTIONARY_KINDS = ("heaviside", "signature", "multi_signature",
                    "graph_realized", "custom")

SHIFT_KINDS = ("S_T", "S_B", "Z_T", "Z_B", "W_T", "W_B")


class NonMinimalSupportError(ValueError):
    """A support set whose atoms are linearly dependent was used where a
    minimal (full column rank) support is required."""


@dataclass(frozen=True)
class Dictionary:
    """A local dictionary: columns of ``atoms`` are the atoms.

    Parameters
    ----------
    atoms : (n, m) ndarray
        Column j is atom j.
    kind : str
        One of DICTIONARY_KINDS; purely descriptive metadata.
    normalized : bool
        Declared unit-l2 columns; verified on construction.
    column_scales : ndarray, optional
        Norms that were divided out when a constructor normalized the atoms
        (kept so generators that need the unnormalized geometry can undo it).
    """

    atoms: np.ndarray
    kind: str = "custom"
    normalized: bool = False
    column_scales: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        object.__setattr__(self, "atoms", atoms)
        if atoms.ndim != 2:
            raise ValueError("atoms must be a 2-d array")
        if atoms.shape[0] < 2 or atoms.shape[1] < 1:
            raise ValueError(f"need n >= 2 and m >= 1, got shape {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms contain non-finite entries")
        if self.kind not in DICTIONARY_KINDS:
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        if self.normalized:
            norms = np.linalg.norm(atoms, axis=0)
            if np.max(np.abs(norms - 1.0)) > 1e-12:
                raise ValueError("normalized=True but columns are not unit norm")

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def m(self) -> int:
        return self.atoms.shape[1]

    def subdictionary(self, support) -> np.ndarray:
        """Columns indexed by ``support`` (possibly empty), as an (n, k) array."""
        return self.atoms[:, list(support)]


@dataclass(frozen=True)
class PatchModel:
    """The model tuple (D, s, N): all length-N signals whose every periodic
    patch has an s-sparse representation in D, with P = N patches."""

    dictionary: Dictionary
    s: int
    N: int

    def __post_init__(self):
        n = self.dictionary.n
        if not 1 <= self.s < n:
            raise ValueError(f"need 1 <= s < n, got s={self.s}, n={n}")
        if self.N < n:
            raise ValueError(f"need N >= n, got N={self.N}, n={n}")

    @property
    def P(self) -> int:
        # periodic patching is the only supported mode
        return self.N

    @property
    def n(self) -> int:
        return self.dictionary.n

    @property
    def m(self) -> int:
        return self.dictionary.m


@dataclass(frozen=True)
class GlobalRep:
    """Concatenation of the P local codes, stored as a (P, m) array."""

    blocks: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=float)
        if blocks.ndim != 2:
            raise ValueError("blocks must be (P, m)")
        object.__setattr__(self, "blocks", blocks)

    @property
    def P(self) -> int:
        return self.blocks.shape[0]

    @property
    def m(self) -> int:
        return self.blocks.shape[1]

    @classmethod
    def from_vector(cls, v, m: int) -> "GlobalRep":
        v = np.asarray(v, dtype=float).ravel()
        if v.size % m:
            raise ValueError(f"vector of size {v.size} is not a multiple of m={m}")
        return cls(v.reshape(-1, m))

    def vector(self) -> np.ndarray:
        """The flat mP vector (block i occupies entries i*m .. i*m+m-1)."""
        return self.blocks.reshape(-1)

    def l0inf(self, tol: float = 0.0) -> int:
        """max_i ||alpha_i||_0, counting entries with |.| > tol."""
        return int(np.max(np.count_nonzero(np.abs(self.blocks) > tol, axis=1)))

    def support(self, tol: float = 0.0) -> "SupportSequence":
        sups = tuple(tuple(np.nonzero(np.abs(row) > tol)[0]) for row in self.blocks)
        return SupportSequence(sups, self.m)


@dataclass(frozen=True)
class SupportSequence:
    """One index set per patch; the key for A_S and realizability."""

    supports: tuple
    m: int

    def __post_init__(self):
        sups = tuple(tuple(sorted(int(j) for j in s)) for s in self.supports)
        object.__setattr__(self, "supports", sups)
        for s in sups:
            if len(set(s)) != len(s):
                raise ValueError(f"repeated index in support {s}")
            if s and (s[0] < 0 or s[-1] >= self.m):
                raise ValueError(f"support {s} out of range for m={self.m}")

    @property
    def P(self) -> int:
        return len(self.supports)

    def sizes(self):
        return tuple(len(s) for s in self.supports)

    @classmethod
    def from_lists(cls, lists, m: int) -> "SupportSequence":
        return cls(tuple(tuple(s) for s in lists), m)


@dataclass(frozen=True)
class OperatorBundle:
    """Dense global matrices derived from a PatchModel.

    DG : (N, m*P) global convolutional dictionary (shifted copies of D/n).
    M : (n*P, m*P) overlap-agreement constraint; block-row i is Q_i - Omega_i.
    Mstar : ((n-1)*P, m*P) compact pairwise form; block-row i carries S_B D at
        block i and -S_T D at block (i+1) mod P.
    """

    DG: np.ndarray
    M: np.ndarray
    Mstar: np.ndarray
    built_from: tuple


def extract_patch(x, i: int, n: int) -> np.ndarray:
    """The i-th periodic patch (x[i], ..., x[i+n-1 mod N])."""
    x = np.asarray(x, dtype=float).ravel()
    N = x.size
    if n > N:
        raise ValueError(f"patch length n={n} exceeds signal length N={N}")
    if not 0 <= i < N:
        raise ValueError(f"patch index {i} out of range for N={N}")
    return x[(i + np.arange(n)) % N]


def embed_patch(p, i: int, N: int) -> np.ndarray:
    """Adjoint of extract_patch: place p at positions i..i+n-1 (mod N)."""
    p = np.asarray(p, dtype=float).ravel()
    if not 0 <= i < N:
        raise ValueError(f"patch index {i} out of range for N={N}")
    if p.size > N:
        raise ValueError(f"patch length {p.size} exceeds signal length N={N}")
    out = np.zeros(N)
    np.add.at(out, (i + np.arange(p.size)) % N, p)
    return out


def patch_matrix(i: int, n: int, N: int) -> np.ndarray:
    """The (n, N) matrix of the periodic patch extractor."""
    R = np.zeros((n, N))
    R[np.arange(n), (i + np.arange(n)) % N] = 1.0
    return R


def all_patches(x, n: int) -> np.ndarray:
    """All P = N periodic patches as columns of an (n, N) array."""
    x = np.asarray(x, dtype=float).ravel()
    N = x.size
    if n > N:
        raise ValueError(f"patch length n={n} exceeds signal length N={N}")
    idx = (np.arange(N)[None, :] + np.arange(n)[:, None]) % N
    return x[idx]


def average_patches(patches: np.ndarray) -> np.ndarray:
    """(1/n) sum_i R_i^T p_i for patches given as columns of an (n, N) array.

    Inverse of all_patches in the sense (1/n) sum_i R_i^T R_i = Id.
    """
    n, N = patches.shape
    out = np.zeros(N)
    for t in range(n):
        # row t of the patch stack lands at signal positions (i + t) mod N
        out += np.roll(patches[t], t)
    return out / n


def shift_operator(kind: str, k: int, n: int) -> np.ndarray:
    """The shift/zero-padding operators acting on length-n patches.

    S_T / S_B extract the top / bottom n-k entries ((n-k, n) matrices).
    Z_B moves the bottom n-k entries to the top, Z_T the top entries to the
    bottom; W_B / W_T keep them in place and zero the rest (all (n, n)).
    """
    if kind not in SHIFT_KINDS:
        raise ValueError(f"unknown shift operator kind {kind!r}")
    if not 0 <= k <= n - 1:
        raise ValueError(f"need 0 <= k <= n-1, got k={k}, n={n}")
    r = n - k
    st = np.hstack([np.eye(r), np.zeros((r, k))])
    sb = np.hstack([np.zeros((r, k)), np.eye(r)])
    if kind == "S_T":
        return st
    if kind == "S_B":
        return sb
    zeros = np.zeros((k, n))
    if kind == "Z_B":
        return np.vstack([sb, zeros])
    if kind == "Z_T":
        return np.vstack([zeros, st])
    if kind == "W_B":
        return np.vstack([zeros, sb])
    return np.vstack([st, zeros])  # W_T


def top_overlap(U: np.ndarray) -> np.ndarray:
    """S_T applied to every column of U."""
    return U[:-1, :]


def bottom_overlap(U: np.ndarray) -> np.ndarray:
    """S_B applied to every column of U."""
    return U[1:, :]


def build_bundle(model: PatchModel) -> OperatorBundle:
    """Materialize DG, M and Mstar for the model."""
    D = model.dictionary.atoms
    n, m, N, P = model.n, model.m, model.N, model.P

    DG = np.zeros((N, m * P))
    for i in range(P):
        rows = (i + np.arange(n)) % N
        DG[rows, i * m:(i + 1) * m] = D / n

    M = np.zeros((n * P, m * P))
    for i in range(P):
        rows = (i + np.arange(n)) % N
        omega = DG[rows, :]                      # stripe Omega_i = R_i DG
        M[i * n:(i + 1) * n, :] = -omega
        M[i * n:(i + 1) * n, i * m:(i + 1) * m] += D

    sbd = bottom_overlap(D)
    std = top_overlap(D)
    r = n - 1
    Mstar = np.zeros((r * P, m * P))
    for i in range(P):
        Mstar[i * r:(i + 1) * r, i * m:(i + 1) * m] = sbd
        j = (i + 1) % P
        Mstar[i * r:(i + 1) * r, j * m:(j + 1) * m] += -std
    return OperatorBundle(DG=DG, M=M, Mstar=Mstar, built_from=(n, m, N, P))


def synthesize(gamma: GlobalRep, D: Dictionary, N: int | None = None) -> np.ndarray:
    """x = DG @ Gamma without materializing DG."""
    P = gamma.P
    N = P if N is None else N
    if N != P:
        raise ValueError("periodic models require P = N")
    U = D.atoms @ gamma.blocks.T                 # (n, P), column i = D alpha_i
    return average_patches(U)                    # = (1/n) sum_i R_i^T D alpha_i


def overlap_violation(gamma: GlobalRep, D: Dictionary) -> float:
    """||Mstar Gamma||_inf, computed pairwise without materializing Mstar."""
    U = D.atoms @ gamma.blocks.T                 # (n, P)
    bottom = U[1:, :]
    top_next = np.roll(U[:-1, :], -1, axis=1)    # column i holds S_T D alpha_{i+1}
    if U.shape[0] == 1:
        return 0.0
    return float(np.max(np.abs(bottom - top_next)))


def check_overlap_agreement(gamma: GlobalRep, D: Dictionary, tol: float = 1e-10) -> bool:
    """True iff consecutive patch reconstructions agree on their overlaps,
    i.e. ||S_B D alpha_i - S_T D alpha_{i+1}||_inf <= tol for every i."""
    return overlap_violation(gamma, D) <= tol


def projector_onto_support(D: Dictionary, support, tol: float = RANK_TOL) -> np.ndarray:
    """Orthogonal projector onto span(D_support); the zero map for empty support.

    Raises NonMinimalSupportError when the selected atoms are linearly
    dependent (at the relative singular value tolerance ``tol``).
    """
    n = D.n
    if len(support) == 0:
        return np.zeros((n, n))
    sub = D.subdictionary(support)
    u, sv, _ = np.linalg.svd(sub, full_matrices=False)
    rank = int(np.sum(sv > tol * sv[0])) if sv.size else 0
    if rank < len(support):
        raise NonMinimalSupportError(
            f"support {tuple(support)} is non-minimal: rank {rank} < {len(support)}")
    return u[:, :rank] @ u[:, :rank].T


def support_residual_matrix(D: Dictionary, supports: SupportSequence, N: int,
                            tol: float = RANK_TOL) -> np.ndarray:
    """The (n*P, N) stack of per-patch projection residuals (I - P_{s_i}) R_i.

    Signals in its nullspace are exactly those whose every patch lies in the
    span of its prescribed support.
    """
    if supports.P != N:
        raise ValueError(f"support sequence has P={supports.P} patches, need P=N={N}")
    n = D.n
    A = np.zeros((n * N, N))
    projectors = {}
    for i, s in enumerate(supports.supports):
        if s not in projectors:
            projectors[s] = np.eye(n) - projector_onto_support(D, s, tol=tol)
        resid = projectors[s]
        cols = (i + np.arange(n)) % N
        A[i * n:(i + 1) * n, cols] = resid
    return A


def kernel(A, tol: float = RANK_TOL):
    """Orthonormal nullspace basis and its dimension.

    A singular value sigma counts as zero iff sigma <= tol * sigma_max.
    Returns (basis, dim) with basis of shape (ncols, dim).
    """
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.eye(A.shape[1]), A.shape[1]
    _, sv, vt = np.linalg.svd(A)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > tol * smax))
    basis = vt[rank:].T
    return basis, A.shape[1] - rank


def rank_at_tol(A, tol: float = RANK_TOL) -> int:
    """Numerical rank with the package-wide relative threshold."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    sv = np.linalg.svd(A, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > tol * sv[0]))
