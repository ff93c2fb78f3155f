"""Edge-caching placement optimization and online popularity prediction.

The package splits into geometry/placement (success-probability constants
and the water-filling style optimal cache placement), constrained least
squares (simplex and ball variants plus a coefficient-space active set),
sliding-window and online predictors, a selective predictor that abstains
outside its confidence region, synthetic and trace-driven workloads, and
a Monte-Carlo experiment harness with a CLI front end.
"""

from .core import (ConfigError, DataError, NetworkParams, NumericalError,
                   PopularityProfile, RequestMatrix, SqrtProfile, ZipfSpec,
                   as_generator, mse, spawn_generators)
from .experiments import (ExperimentConfig, MetricsTable, emit_outputs,
                          run_experiment, run_sweep)
from .kwik import KwikConfig, KwikLearner, accuracy_vectors
from .learners import (AspOnline, GpmOnline, IpmOnline, PpmOnline, RpmOnline,
                       complement_weights, inverse_weights, measure_regret,
                       regret_bound_gpm, regret_bound_ipm, regret_bound_ppm,
                       regret_bound_rpm)
from .nnls import (LsSolution, solve_ball_nnls, solve_ls, solve_map_ball_nnls,
                   solve_simplex_nnls, solve_sum_one_ls, solve_sum_one_nnls)
from .placement import (AspConstants, CachePolicy, asp, asp_difference_bound,
                        compute_constants, g0, g_noisy, optimal_asp_value,
                        optimal_placement, oracle_placement)
from .predictors import (HistoryWindow, OpConfig, asppm_predict, gpm_predict,
                         ipm_predict, ppm_predict, rpm_predict)
from .workloads import (SynthConfig, export_stream_csv, generate_iid_stream,
                        generate_quasi_stream, generate_requests,
                        generate_sampled_stream, load_movielens, synth_counts)

__version__ = "0.1.0"

__all__ = [
    "AspConstants", "AspOnline", "CachePolicy", "ConfigError", "DataError",
    "ExperimentConfig", "GpmOnline", "HistoryWindow", "IpmOnline",
    "KwikConfig", "KwikLearner", "LsSolution", "MetricsTable",
    "NetworkParams", "NumericalError", "OpConfig", "PopularityProfile",
    "PpmOnline", "RequestMatrix", "RpmOnline", "SqrtProfile", "SynthConfig",
    "ZipfSpec", "accuracy_vectors", "as_generator", "asp",
    "asp_difference_bound", "asppm_predict", "complement_weights",
    "compute_constants", "emit_outputs", "export_stream_csv", "g0", "g_noisy",
    "generate_iid_stream", "generate_quasi_stream", "generate_requests",
    "generate_sampled_stream", "gpm_predict", "inverse_weights", "ipm_predict",
    "load_movielens", "measure_regret", "mse", "optimal_asp_value",
    "optimal_placement", "oracle_placement", "ppm_predict", "regret_bound_gpm",
    "regret_bound_ipm", "regret_bound_ppm", "regret_bound_rpm", "rpm_predict",
    "run_experiment", "run_sweep", "solve_ball_nnls", "solve_ls",
    "solve_map_ball_nnls", "solve_simplex_nnls", "solve_sum_one_ls",
    "solve_sum_one_nnls", "spawn_generators", "synth_counts",
]
