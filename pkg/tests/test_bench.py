import json
from fractions import Fraction

import numpy as np
import pytest

from patchsparse.bench import (AlgorithmSpec, ConfigError, ExperimentConfig,
                               add_noise, build_experiment_dictionary,
                               derive_rng, lpa_pwc_mse, lpa_risk_factor,
                               pwc_oracle_supports, pwc_pixel_coefficients,
                               run_denoising, run_recovery, sample_pwc_signal,
                               sample_signature_signal, verify_membership)
from patchsparse.core import PatchModel, kernel, support_residual_matrix
from patchsparse.dictionaries import heaviside, signature
from patchsparse.pursuit import averaging_operator


def test_add_noise_identity_and_determinism():
    x = np.arange(5, dtype=float)
    assert np.array_equal(add_noise(x, 0.0, seed=1), x)
    a = add_noise(x, 0.3, seed=42)
    b = add_noise(x, 0.3, seed=42)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, add_noise(x, 0.3, seed=43))


def test_add_noise_variance():
    x = np.zeros(100_000)
    y = add_noise(x, 0.7, seed=5)
    assert abs(np.var(y) - 0.49) <= 0.02 * 0.49


def test_pixel_coefficients_paper_example():
    c1 = pwc_pixel_coefficients(4, 3, 1, exact=True)
    assert c1 == [Fraction(7, 24), Fraction(5, 12), Fraction(7, 24)]
    c2 = pwc_pixel_coefficients(4, 3, 2, exact=True)
    assert c2 == [Fraction(1, 6), Fraction(7, 24), Fraction(13, 24)]


def test_pixel_coefficients_sum_to_one_and_unimodal():
    for (n, alpha, k) in [(5, 3, 0), (6, 9, 4), (3, 8, 7)]:
        c = pwc_pixel_coefficients(n, alpha, k, exact=True)
        assert sum(c) == 1
        arr = np.array([float(v) for v in c])
        peak = int(np.argmax(arr))
        assert np.all(np.diff(arr[:peak + 1]) >= 0)
        assert np.all(np.diff(arr[peak:]) <= 0)


def test_risk_factor_reference_value():
    assert lpa_risk_factor(4, 3) == pytest.approx(37.0 / 32.0, abs=1e-12)


def test_risk_factor_exceeds_one():
    # single-pixel segments average nothing; anything longer pays a premium
    assert lpa_risk_factor(2, 1) == pytest.approx(1.0, abs=1e-14)
    for (n, alpha) in [(2, 2), (5, 5), (8, 3), (4, 12)]:
        assert lpa_risk_factor(n, alpha) > 1.0


def test_risk_factor_closed_forms_cross_check():
    # both closed-form regimes agree with the coefficient summation
    for n in range(2, 13):
        for alpha in range(1, 2 * n + 4):
            lpa_risk_factor(n, alpha)    # raises if a closed form disagrees


def test_risk_factor_monotonicity():
    grid_n = [3, 5, 8, 12]
    for n in grid_n:
        vals = [lpa_risk_factor(n, a) for a in range(1, 15)]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    for alpha in (4, 9):
        vals = [lpa_risk_factor(n, alpha) for n in range(2, 15)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))


def test_risk_factor_limits():
    assert abs(lpa_risk_factor(200, 200) - (np.pi ** 2 / 3 - 2)) <= 1e-2
    assert abs(lpa_risk_factor(120, 240) - 35.0 / 18.0) <= 2e-2


def test_lpa_pwc_mse_matches_eigenvalue_formula():
    N, n = 40, 8
    D = heaviside(n)
    rng = derive_rng(1)
    for _ in range(5):
        x, lengths, S = sample_pwc_signal(N, n, rng)
        MA = averaging_operator(D, S, N)
        sigma = 0.37
        eig = sigma ** 2 * float(np.sum(np.linalg.eigvalsh(MA @ MA.T)))
        theory = lpa_pwc_mse(n, lengths, sigma)
        assert eig == pytest.approx(theory, abs=1e-8)
        assert theory > len(lengths) * sigma ** 2


def test_sample_pwc_signal_structure():
    rng = derive_rng(2)
    N, n = 60, 6
    D = heaviside(n)
    for _ in range(10):
        x, lengths, S = sample_pwc_signal(N, n, rng)
        assert sum(lengths) == N and min(lengths) >= n
        verify_membership(x, S, D, 2)
        _, dim = kernel(support_residual_matrix(D, S, N))
        assert dim == len(lengths)


def test_pwc_oracle_supports_detects_jumps():
    x = np.repeat([1.0, -2.0], [6, 6])
    S = pwc_oracle_supports(x, 4)
    assert S.supports[0] == (3,)          # interior constant patch
    assert S.supports[4] == (1, 3)        # jump at local position 1


def test_sample_signature_signal_membership():
    rng = derive_rng(3)
    base = rng.standard_normal(8)
    D = signature(base, 5)
    for s in (1, 2, 3):
        x, gamma, S = sample_signature_signal(base, 5, 24, s, rng)
        verify_membership(x, S, D, s)
        assert gamma.l0inf() == s
        _, dim = kernel(support_residual_matrix(D, S, 24))
        assert dim == s


def test_config_roundtrip_and_validation():
    cfg = ExperimentConfig(kind="signature", n=5, m=8, N=24,
                           sparsities=(1, 2), sigmas=(0.1,), trials=3, seed=9,
                           algorithms=(AlgorithmSpec("lpa"),
                                       AlgorithmSpec("qomp", beta=2.0)))
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig(kind="signature", n=5, m=8, N=24, trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(kind="heaviside", n=5, m=8, N=24)
    with pytest.raises(ConfigError):
        ExperimentConfig(kind="signature", n=5, m=8, N=24,
                         algorithms=(AlgorithmSpec("nope"),))


def test_run_recovery_csv_deterministic():
    cfg = ExperimentConfig(kind="signature", n=5, m=8, N=16,
                           sparsities=(1,), trials=4, seed=3,
                           algorithms=(AlgorithmSpec("lpa"),))
    a = run_recovery(cfg)
    b = run_recovery(cfg)
    assert a == b
    header, row = a.strip().splitlines()
    assert header == "algo,beta,sparsity,success_rate,trials,seed"
    fields = row.split(",")
    assert fields[0] == "lpa" and fields[3] == "1"


def test_run_denoising_csv_schema_and_oracle_row(tmp_path):
    cfg = ExperimentConfig(kind="signature", n=5, m=8, N=16,
                           sparsities=(1,), sigmas=(0.2,), trials=5, seed=4,
                           algorithms=(AlgorithmSpec("lpa"),),
                           outputs=str(tmp_path))
    text = run_denoising(cfg)
    assert (tmp_path / "denoising.csv").read_text() == text
    lines = text.strip().splitlines()
    assert lines[0].startswith("algo,projected,sigma,sparsity,trials,mse")
    rows = {tuple(l.split(",")[:2]) for l in lines[1:]}
    assert ("oracle", "true") in rows
    assert ("lpa", "false") in rows and ("lpa", "true") in rows
    # oracle mean MSE should be near dim * sigma^2 / N = 1 * 0.04 / 16
    for line in lines[1:]:
        parts = line.split(",")
        if parts[0] == "oracle":
            assert float(parts[5]) <= 4 * 0.04 / 16


def test_run_denoising_single_signal_mode():
    cfg = ExperimentConfig(kind="heaviside", n=6, m=6, N=30, sparsities=(2,),
                           sigmas=(0.1,), trials=3, seed=5,
                           algorithms=(AlgorithmSpec("lpa"),))
    assert not cfg.fresh_signal_per_trial
    text = run_denoising(cfg)
    assert "oracle" in text


def test_run_denoising_rejects_empty_grid():
    cfg = ExperimentConfig(kind="signature", n=5, m=8, N=16, trials=2)
    with pytest.raises(ConfigError):
        run_denoising(cfg)


def test_build_experiment_dictionary_kinds():
    cfg = ExperimentConfig(kind="heaviside", n=6, m=6, N=30, trials=1,
                           sigmas=(0.1,))
    D, base = build_experiment_dictionary(cfg)
    assert D.kind == "heaviside" and base is None
    cfg2 = ExperimentConfig(kind="signature", n=5, m=8, N=16, trials=1,
                            optimize_iters=100)
    D2, base2 = build_experiment_dictionary(cfg2)
    assert D2.kind == "signature" and base2 is not None
