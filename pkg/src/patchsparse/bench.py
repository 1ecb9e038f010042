"""Noise model, signal samplers, the analytic performance theory for
piecewise-constant signals, and the recovery/denoising experiment runners.

Reproducibility: all randomness flows through numpy's Philox counter-based
64-bit generator.  Per-trial generators are derived from the master seed and
the trial coordinates through SeedSequence, so trials are independent,
parallelizable, and bit-reproducible regardless of execution order.  CSV
outputs are byte-identical for identical (config, seed); wall-clock timings
are therefore kept on the in-memory records only.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from .core import (Dictionary, GlobalRep, PatchModel, SupportSequence,
                   all_patches, kernel, overlap_violation,
                   support_residual_matrix)
from .dictionaries import (heaviside, optimize_signature_coherence, signature)
from .graphmodel import representation_on_supports
from .pursuit import QompSolver, admm_pursuit, lpa, project_to_model

THREADS_ENV = "PATCHSPARSE_THREADS"


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


def derive_rng(seed: int, *path: int) -> np.random.Generator:
    """Philox generator keyed by (seed, *path); documented and stable."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, *path])))


def add_noise(x, sigma: float, seed: int | None = None, rng=None) -> np.ndarray:
    """x + i.i.d. N(0, sigma^2) from the seeded Philox generator."""
    if sigma < 0:
        raise ValueError("need sigma >= 0")
    x = np.asarray(x, dtype=float).ravel()
    if sigma == 0.0:
        return x.copy()
    if rng is None:
        rng = derive_rng(0 if seed is None else seed)
    return x + sigma * rng.standard_normal(x.size)


# ---------------------------------------------------------------------------
# Analytic theory for piecewise-constant signals under patch averaging

def pwc_pixel_coefficients(n: int, alpha: int, k: int, exact: bool = False):
    """Noise weights of the patch-averaged oracle at one pixel.

    The pixel sits at offset k (0-based) inside a constant segment of length
    alpha; patch j of the n patches covering it sees the segment on a window
    [a_j, b_j] and contributes the window average.  Returns the weights of
    the alpha segment noise values (index i+k holds the weight of z_i,
    i = -k .. alpha-k-1); they are positive, unimodal and sum to 1.
    """
    if not (0 <= k < alpha):
        raise ValueError("need 0 <= k < alpha")
    zero = Fraction(0) if exact else 0.0
    c = [zero] * alpha
    for j in range(1, n + 1):
        a = -min(k, n - j)
        b = min(alpha - k - 1, j - 1)
        w = Fraction(1, b - a + 1) if exact else 1.0 / (b - a + 1)
        for i in range(a, b + 1):
            c[i + k] += w
    if exact:
        return [v / n for v in c]
    return np.asarray(c) / n


def _harmonic2(j: int) -> float:
    return float(sum(Fraction(1, i * i) for i in range(1, j + 1)))


def _risk_closed_large_patch(n: int, alpha: int) -> float:
    # valid for n >= alpha
    h2 = _harmonic2(alpha)
    return 1.0 + (alpha * (2.0 * alpha * h2 - 3.0 * alpha + 2.0) - 1.0) / n ** 2


def _risk_closed_small_patch(n: int, alpha: int) -> float:
    # valid for n <= alpha/2 (the Appendix-D simplification; the theorem
    # statement's 2(b) display disagrees with its own construction)
    return (11.0 / 18.0 + 2.0 * alpha / (3.0 * n) - 5.0 / (18.0 * n ** 2)
            + (alpha - 1.0) / (3.0 * n ** 3))


def lpa_risk_factor(n: int, alpha: int) -> float:
    """The per-segment excess-risk factor R(n, alpha) > 1 of patch averaging
    with oracle supports over a constant segment of length alpha.

    Always computed by summing the squared pixel coefficients; where a closed
    form applies (n >= alpha, or n <= alpha/2) the two are cross-checked to
    1e-10 relative.
    """
    if n < 2 or alpha < 1:
        raise ValueError("need n >= 2 and alpha >= 1")
    total = 0.0
    for k in range(alpha):
        c = pwc_pixel_coefficients(n, alpha, k)
        total += float(np.sum(c * c))
    closed = None
    if n >= alpha:
        closed = _risk_closed_large_patch(n, alpha)
    elif 2 * n <= alpha:
        closed = _risk_closed_small_patch(n, alpha)
    if closed is not None and abs(closed - total) > 1e-10 * max(1.0, abs(total)):
        raise ArithmeticError(
            f"closed form {closed!r} and coefficient sum {total!r} disagree "
            f"at (n={n}, alpha={alpha})")
    return total


def lpa_pwc_mse(n: int, segment_lengths, sigma: float) -> float:
    """sigma^2 * sum_r R(n, l_r): exact risk of oracle-support patch
    averaging on a piecewise-constant signal (always > s * sigma^2)."""
    lengths = [int(l) for l in segment_lengths]
    if not lengths or min(lengths) < 1:
        raise ValueError("segment lengths must be positive")
    return sigma ** 2 * sum(lpa_risk_factor(n, l) for l in lengths)


# ---------------------------------------------------------------------------
# Samplers for the structured signal families

def sample_pwc_signal(N: int, n: int, rng, segments: int | None = None):
    """A periodic piecewise-constant signal with jump gaps >= n.

    Segment count defaults to uniform on [2, N // n]; heights are standard
    normal.  Returns (x, segment lengths, oracle SupportSequence); with gaps
    of at least a patch length every patch holds at most one jump, so every
    patch representation has at most 2 nonzeros (step + bias).
    """
    if N < 2 * n:
        raise ValueError("need N >= 2n for at least two segments")
    J = int(rng.integers(2, N // n + 1)) if segments is None else int(segments)
    if not 2 <= J <= N // n:
        raise ValueError(f"segment count {J} infeasible for N={N}, n={n}")
    slack = rng.multinomial(N - J * n, [1.0 / J] * J)
    lengths = (n + slack).astype(int)
    heights = rng.standard_normal(J)
    x = np.repeat(heights, lengths)
    x = np.roll(x, int(rng.integers(N)))
    return x, tuple(int(l) for l in lengths), pwc_oracle_supports(x, n)


def pwc_oracle_supports(x, n: int) -> SupportSequence:
    """Exact per-patch step-dictionary supports of a PWC signal (the
    difference-transform nonzeros of every periodic patch)."""
    patches = all_patches(np.asarray(x, dtype=float), n)
    alpha = np.empty_like(patches)
    alpha[:-1, :] = patches[:-1, :] - patches[1:, :]
    alpha[-1, :] = patches[-1, :]
    sups = [tuple(np.nonzero(alpha[:, i])[0]) for i in range(patches.shape[1])]
    return SupportSequence(tuple(sups), n)


def sample_signature_signal(base, n: int, N: int, s: int, rng):
    """Sum of s distinctly-shifted copies of the periodized base signal.

    Returns (x, GlobalRep, SupportSequence) for the signature dictionary of
    ``base``; patch i carries the atoms (i - t_j) mod m with coefficients
    omega_j times the removed window norms.
    """
    base = np.asarray(base, dtype=float).ravel()
    m = base.size
    if N % m:
        raise ValueError(f"signal length N={N} must be a multiple of m={m}")
    if not 1 <= s <= m:
        raise ValueError(f"need 1 <= s <= m={m}")
    D = signature(base, n)
    shifts = rng.choice(m, size=s, replace=False)
    omega = rng.standard_normal(s)
    b = np.tile(base, N // m)
    x = np.zeros(N)
    blocks = np.zeros((N, m))
    for t, w in zip(shifts, omega):
        x += w * np.roll(b, t)
        atoms = (np.arange(N) - t) % m
        blocks[np.arange(N), atoms] += w * D.column_scales[atoms]
    gamma = GlobalRep(blocks)
    return x, gamma, gamma.support()


def verify_membership(x, S: SupportSequence, D: Dictionary, s: int,
                      tol: float = 1e-8) -> None:
    """Raise unless every patch of x lies in the span of its support and no
    support exceeds s atoms."""
    if max(S.sizes()) > s:
        raise ValueError(f"support sizes {max(S.sizes())} exceed s={s}")
    A = support_residual_matrix(D, S, np.asarray(x).size)
    resid = float(np.max(np.abs(A @ np.asarray(x, dtype=float))))
    if resid > tol:
        raise ValueError(f"model membership violated (residual {resid:.2e})")


# ---------------------------------------------------------------------------
# Experiment configuration and runners

@dataclass(frozen=True)
class AlgorithmSpec:
    """One algorithm row: name in {lpa, qomp, admm, oracle} plus its knobs.

    noise_c switches on noise-aware stopping of the per-patch coding at
    residual c * sigma * sqrt(n) (lpa and admm); None keeps the default
    sparsity-targeted stopping.
    """

    name: str
    beta: float = 1.0          # qomp only
    rho: float = 1.0           # admm only
    rho_growth: float = 1.0    # admm varying-penalty factor per iteration
    iterations: int = 300      # admm outer iterations
    tol: float = 1e-6          # admm stopping tolerance
    restarts: int = 1          # admm multi-start count
    noise_c: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully serializable experiment description.

    kind : signature | heaviside (the two §-protocol families).
    sparsities : per-patch signal sparsity grid; the pursuit model uses the
        row's sparsity as its local bound.
    optimize_iters : when > 0, the signature base is coherence-optimized with
        this iteration budget (seeded by dict_seed).
    qomp_budget : "true" injects the signal's true global nonzero count into
        the lifted pursuit; "sN" injects s*N.
    fresh_signal_per_trial : when False, one clean signal is drawn per
        sparsity and the trials are noise realizations of it (the
        piecewise-constant protocol); when True every trial draws a new
        signal (the signature protocol).  Defaults by kind.
    """

    kind: str
    n: int
    m: int
    N: int
    sparsities: tuple = (1, 2, 3, 4)
    sigmas: tuple = ()
    trials: int = 10
    seed: int = 0
    algorithms: tuple = (AlgorithmSpec("lpa"),)
    dict_seed: int = 0
    optimize_iters: int = 0
    qomp_budget: str = "true"
    fresh_signal_per_trial: bool | None = None
    outputs: str | None = None

    def __post_init__(self):
        if self.fresh_signal_per_trial is None:
            object.__setattr__(self, "fresh_signal_per_trial",
                               self.kind != "heaviside")
        object.__setattr__(self, "sparsities", tuple(int(s) for s in self.sparsities))
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        algos = tuple(a if isinstance(a, AlgorithmSpec) else AlgorithmSpec(**a)
                      for a in self.algorithms)
        object.__setattr__(self, "algorithms", algos)
        if self.trials < 1:
            raise ConfigError("need trials >= 1")
        if any(s <= 0 for s in self.sparsities):
            raise ConfigError("sparsities must be positive")
        if any(s < 0 for s in self.sigmas):
            raise ConfigError("sigmas must be nonnegative")
        if self.kind not in ("signature", "heaviside"):
            raise ConfigError(f"unsupported experiment kind {self.kind!r}")
        if self.kind == "heaviside" and self.n != self.m:
            raise ConfigError("the step dictionary requires m = n")
        if self.qomp_budget not in ("true", "sN"):
            raise ConfigError("qomp_budget must be 'true' or 'sN'")
        for a in algos:
            if a.name not in ("lpa", "qomp", "admm", "oracle"):
                raise ConfigError(f"unknown algorithm {a.name!r}")

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        d = json.loads(text)
        d["algorithms"] = tuple(AlgorithmSpec(**a) for a in d.get("algorithms", []))
        for key in ("sparsities", "sigmas"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class ResultRecord:
    """One pursuit evaluation; runtime stays off the CSVs (determinism)."""

    algo: str
    projected: bool
    sigma: float
    sparsity: int
    trial: int
    mse: float
    gamma_error: float
    support_exact: bool
    overlap_violation: float
    runtime_ms: float


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _map_tasks(fn, items):
    workers = _thread_count()
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def build_experiment_dictionary(config: ExperimentConfig):
    """(Dictionary, base vector or None) for the configured family."""
    if config.kind == "heaviside":
        return heaviside(config.n), None
    if config.optimize_iters > 0:
        base, D, _ = optimize_signature_coherence(
            config.n, config.m, iterations=config.optimize_iters,
            seed=config.dict_seed)
        return D, base
    base = derive_rng(config.dict_seed, 99).standard_normal(config.m)
    return signature(base, config.n), base


def _sample_signal(config: ExperimentConfig, base, sparsity: int, rng):
    if config.kind == "signature":
        return sample_signature_signal(base, config.n, config.N, sparsity, rng)
    x, _, support = sample_pwc_signal(config.N, config.n, rng)
    D = heaviside(config.n)
    gamma = representation_on_supports(x, support, D)
    return x, gamma, support


def _format_float(v: float) -> str:
    return f"{v:.12g}"


def run_recovery(config: ExperimentConfig) -> str:
    """Noiseless exact-recovery protocol: per (sparsity, algorithm), the
    fraction of trials whose estimated support sequence equals the truth.

    Returns the CSV text (columns algo,beta,sparsity,success_rate,trials,seed)
    and writes it to ``<outputs>/recovery.csv`` when outputs is set.
    """
    D, base = build_experiment_dictionary(config)
    rows = []
    for sparsity in config.sparsities:
        model = PatchModel(D, sparsity, config.N)
        solvers = {a: QompSolver(model, a.beta)
                   for a in config.algorithms if a.name == "qomp"}

        def trial_outcome(trial, _sp=sparsity, _model=model, _solvers=solvers):
            rng = derive_rng(config.seed, 0, _sp, trial)
            x, gamma, support = _sample_signal(config, base, _sp, rng)
            verify_membership(x, support, D, _sp)
            outcomes = {}
            for spec in config.algorithms:
                if spec.name == "lpa":
                    got = lpa(_model, x).support
                elif spec.name == "qomp":
                    budget = (int(np.count_nonzero(gamma.blocks))
                              if config.qomp_budget == "true" else _sp * config.N)
                    got = _solvers[spec].solve(x, K_global=budget,
                                               project=False).support
                else:
                    continue
                outcomes[spec] = (got == support)
            return outcomes

        results = _map_tasks(trial_outcome, range(config.trials))
        for spec in config.algorithms:
            if spec.name not in ("lpa", "qomp"):
                continue
            wins = sum(1 for r in results if r.get(spec))
            rows.append((spec.name,
                         _format_float(spec.beta) if spec.name == "qomp" else "",
                         sparsity,
                         _format_float(wins / config.trials),
                         config.trials, config.seed))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["algo", "beta", "sparsity", "success_rate", "trials", "seed"])
    writer.writerows(rows)
    text = out.getvalue()
    _maybe_write(config, "recovery.csv", text)
    return text


def _run_one_denoise(config, D, base, sparsity, trial):
    if config.fresh_signal_per_trial:
        rng = derive_rng(config.seed, 0, sparsity, trial)
    else:
        rng = derive_rng(config.seed, 0, sparsity)     # one signal, many noises
    x, gamma0, support0 = _sample_signal(config, base, sparsity, rng)
    verify_membership(x, support0, D, sparsity)
    model = PatchModel(D, sparsity, config.N)
    W, _ = kernel(support_residual_matrix(D, support0, config.N))
    solvers = {a: QompSolver(model, a.beta)
               for a in config.algorithms if a.name == "qomp"}
    N = config.N
    records = []
    for si, sigma in enumerate(config.sigmas):
        noise_rng = derive_rng(config.seed, 1, sparsity, trial, si)
        y = add_noise(x, sigma, rng=noise_rng)

        def record(name, projected, xhat, gam, support, t_ms):
            records.append(ResultRecord(
                algo=name, projected=projected, sigma=sigma, sparsity=sparsity,
                trial=trial, mse=float(np.sum((xhat - x) ** 2)) / N,
                gamma_error=float(np.linalg.norm(
                    (gam.blocks - gamma0.blocks).ravel())),
                support_exact=bool(support == support0),
                overlap_violation=overlap_violation(gam, D),
                runtime_ms=t_ms))

        record("oracle", True, W @ (W.T @ y),
               representation_on_supports(W @ (W.T @ y), support0, D),
               support0, 0.0)
        for spec in config.algorithms:
            if spec.name == "oracle":
                continue
            stop = (spec.noise_c * sigma * np.sqrt(config.n)
                    if spec.noise_c is not None and sigma > 0 else None)
            t0 = time.perf_counter()
            if spec.name == "lpa":
                res = lpa(model, y, res_tol=stop)
            elif spec.name == "admm":
                res = admm_pursuit(model, y, rho=spec.rho,
                                   rho_growth=spec.rho_growth,
                                   outer_iters=spec.iterations, tol=spec.tol,
                                   res_tol=stop, restarts=spec.restarts)
            else:
                budget = (int(np.count_nonzero(gamma0.blocks))
                          if config.qomp_budget == "true" else sparsity * N)
                res = solvers[spec].solve(y, K_global=budget, project=False)
            t_ms = 1e3 * (time.perf_counter() - t0)
            record(spec.name, False, res.xhat, res.gamma, res.support, t_ms)
            # projected variant: force the estimate onto the model
            t0 = time.perf_counter()
            xp = project_to_model(y, res.support, D)
            gp = representation_on_supports(xp, res.support, D)
            t_ms += 1e3 * (time.perf_counter() - t0)
            record(spec.name, True, xp, gp, res.support, t_ms)
    return records


def run_denoising(config: ExperimentConfig) -> str:
    """Denoising protocol: per (algorithm, projected?, sigma, sparsity), mean
    per-sample MSE and mean representation error over the trials, plus an
    oracle row per cell.  Clean signals are membership-checked before noise.

    Returns the CSV text (schema in the header row) and writes
    ``<outputs>/denoising.csv`` when outputs is set.
    """
    if not config.sigmas:
        raise ConfigError("denoising needs a nonempty sigma grid")
    D, base = build_experiment_dictionary(config)
    tasks = [(sp, t) for sp in config.sparsities for t in range(config.trials)]
    all_records = _map_tasks(
        lambda st: _run_one_denoise(config, D, base, st[0], st[1]), tasks)
    records = [r for chunk in all_records for r in chunk]

    keys = sorted({(r.algo, r.projected, r.sigma, r.sparsity) for r in records},
                  key=lambda k: (k[0], k[1], k[3], k[2]))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["algo", "projected", "sigma", "sparsity", "trials", "mse",
                     "gamma_error", "support_exact_rate",
                     "max_overlap_violation", "seed"])
    for algo, projected, sigma, sparsity in keys:
        grp = [r for r in records
               if (r.algo, r.projected, r.sigma, r.sparsity)
               == (algo, projected, sigma, sparsity)]
        grp.sort(key=lambda r: r.trial)
        writer.writerow([
            algo, str(bool(projected)).lower(), _format_float(sigma), sparsity,
            len(grp), _format_float(float(np.mean([r.mse for r in grp]))),
            _format_float(float(np.mean([r.gamma_error for r in grp]))),
            _format_float(float(np.mean([r.support_exact for r in grp]))),
            _format_float(float(np.max([r.overlap_violation for r in grp]))),
            config.seed])
    text = out.getvalue()
    _maybe_write(config, "denoising.csv", text)
    return text


def _maybe_write(config: ExperimentConfig, filename: str, text: str) -> None:
    if config.outputs:
        os.makedirs(config.outputs, exist_ok=True)
        with open(os.path.join(config.outputs, filename), "w") as fh:
            fh.write(text)
