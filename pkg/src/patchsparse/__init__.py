"""Globalized patch-sparse signal models.

Signals whose every overlapping patch admits a sparse code in a shared local
dictionary, with the codes agreeing on the overlaps: linear structure
(``core``), dictionary families that make the model non-empty
(``dictionaries``), the support-dependency graph and signal sampling
(``graphmodel``), recovery and denoising (``pursuit``), uniqueness/stability
measures (``measures``), and reproducible experiments plus the analytic
piecewise-constant theory (``bench``).
"""

from .core import (Dictionary, GlobalRep, OperatorBundle, PatchModel,
                   SupportSequence, build_bundle, check_overlap_agreement,
                   embed_patch, extract_patch, kernel, overlap_violation,
                   shift_operator, support_residual_matrix, synthesize)
from .dictionaries import (SignatureSpec, csc_pseudo_local, heaviside,
                           multi_signature, normalize_atoms,
                           optimize_signature_coherence, signature)
from .graphmodel import (DependencyGraph, build_graph, compute_transfers,
                         dim_bound_transfer, enumerate_paths, is_realizable,
                         realize_graph, sample_signal)
from .measures import (AllowedSupports, allowed_supports, babel_mu1, eta1star,
                       globalized_mu1star, globalized_spark, mutual_coherence,
                       rip_constants, spark)
from .pursuit import (PursuitResult, admm_pursuit, averaging_operator, lpa,
                      omp, oracle_project, project_to_model, qomp)
from .bench import (ExperimentConfig, add_noise, lpa_pwc_mse, lpa_risk_factor,
                    pwc_pixel_coefficients, run_denoising, run_recovery,
                    sample_pwc_signal, sample_signature_signal)

__version__ = "0.1.0"
