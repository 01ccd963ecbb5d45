"""Answering linear query workloads under (epsilon, delta)-differential privacy
with the projection mechanism and a Ky Fan-optimal noise covariance."""

from .covariance import (CovarianceDesign, DualSolution, dual_ascent, duality_gap,
                         find_threshold_t, h_k, hk_supergradient, optimize_covariance,
                         primal_from_dual)
from .harness import (BenchmarkConfig, BenchmarkReport, ErrorEstimate, estimate_error,
                      run_benchmark, write_report)
from .lower_bound import (CertificateReport, dual_certificate_bound, spec_lb_bruteforce,
                          spec_lb_greedy)
from .mechanism import (MechanismOutput, PrivacyParams, frank_wolfe_project, lmo_polytope,
                        noise_multiplier, run_plain_gaussian, run_projection_mechanism,
                        sample_gaussian, support_function_residual, top_k_projector)
from .spectral import (EigenDecomposition, ky_fan_norm, psd_power, sigma_min, sym_eig,
                       trace_norm)
from .workload import (Histogram, QueryMatrix, SensitivityPolytopeView, gen_histogram,
                       gen_interval_queries, gen_random_counting, load_histogram, load_matrix,
                       save_histogram, save_matrix)

__version__ = "0.1.0"
