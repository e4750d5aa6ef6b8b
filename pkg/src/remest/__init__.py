"""Remote state estimation over a latency-reliability constrained link.

Library layout:
  system     - plant models, interval propagation, Jordan data, norms
  quantizer  - shared uncertainty tracking and sequential quantization
  coding     - erasure channel, random linear codes, finite-length curves
  analysis   - stability tests, error bounds, blocklength selection
  montecarlo - end-to-end trajectory simulation
  cli        - command-line front end (analyze | sweep | optimize | simulate)
"""

from .analysis import (
    UNBOUNDED,
    AllUnboundedError,
    CodesignResult,
    NoRootError,
    StabilityReport,
    effective_contraction,
    expected_widths,
    heuristic_blocklength,
    optimize_blocklength,
    single_shot_bound,
    stability_check,
    steady_state_bound,
    steady_state_bound_coded,
    steady_state_width,
    vector_expected_widths,
    vector_fixed_point,
    vector_stability_check,
    vector_steady_state_bound,
)
from .coding import (
    BecChannel,
    ErasedWord,
    Gf2Code,
    RateAboveCapacityError,
    code_error_prob,
    decode_erasures,
    min_feasible_blocklength,
    normal_approx_blocklength,
    normal_approx_pe,
    pack_bins,
    q_func,
    q_inv,
    random_code,
    simulated_pe_model,
    transmit,
    uncoded_error_prob,
    unpack_bins,
)
from .montecarlo import SimConfig, SimReport, TrialTrace, aggregate, run_trial, simulate
from .quantizer import (
    BitAllocation,
    Box,
    Interval,
    OutOfRangeError,
    estimator_update,
    initial_box,
    propagate_box,
    quantize,
    reconstruct,
    refine,
    refine_box,
    vector_estimator_update,
    vector_sensor_round,
)
from .system import (
    CommAbstraction,
    DegenerateDecompositionError,
    NonRealEigenvalueError,
    ScalarPlant,
    VectorPlant,
    geometric_sum,
    induced_l1_norm,
    jordan_decompose,
    noise_column_sum,
    propagate_interval,
    step_state,
)

__version__ = "0.1.0"
