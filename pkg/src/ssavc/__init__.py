"""Stationary subspace analysis for zero-mean varying-covariance processes."""

__version__ = "0.1.0"

from .errors import (BoundaryError, DegenerateEstimate, DomainError, EmptyPool, ModelError,
                     NotPositiveSemiDefinite, NumericalFailure, SSAError)
from .kernel import (KernelSpec, LocalCovarianceEstimate, Mu4Estimate, Mu4Method, TimeSeries,
                     convolution_norms, estimate_a2, estimate_m, estimate_m_grid, estimate_mu4,
                     triangle_kernel)
from .pseudonull import (Inertia, OneOnePairing, PseudoNullBasis, construct_pseudo_null_basis,
                         enumerate_11_spaces, inertia, is_pseudo_eigenvector, pseudo_nullity,
                         same_pseudo_null_space, truncated_sample_counts)
from .dimension import (GlobalDimensionResult, LocalDimensionResult, SplitTree, TestConfig,
                        global_dimension, global_dpm, global_xi, local_dimension, local_dpm,
                        local_xi, sequential_global_d0, sequential_local_d0, split_test,
                        split_statistic_identity_check)
from .subspace import (ClusterReport, Subspace, SubspaceEstimate, SubspaceGraph, build_graph,
                       canonical_angles, cluster_center, cluster_denseness,
                       estimate_stationary_subspace, walktrap_cluster)
from .simulation import (MonteCarloStudy, VCModelSpec, builtin_model, classification_features,
                         discrepancy_d1, discrepancy_d2, discrepancy_d3, run_mc_study,
                         simulate_vc)
