"""Retrofit control: synthesis and verification of output-rectifying
retrofit controllers for interconnected linear systems.

A retrofit controller is an add-on controller for one subsystem of an
interconnected network that preserves internal stability for every
environment the subsystem could be wired to, provided the preexisting
interconnection was stable.  The output-rectifying class achieves this by
filtering the measurement through a rectifier R with R Gyv = 0, so the
internal controller never reacts to the environment; R is built either
from a direct measurement of the interaction signal or by inverting a
subset of measurement channels.
"""

from .config import DEFAULT, ToleranceConfig
from .lti import (
    Environment,
    PartitionedPlant,
    StateSpace,
    TransferMatrix,
    closed_loop_wv,
    controller_from_youla,
    internal_stability,
    normal_rank,
    plant_from_json_dict,
    plant_to_json_dict,
    preexisting_internally_stable,
    ss_to_tf,
    tf_to_ss,
    youla_parameter,
)
from .network import (
    BenchmarkResult,
    NetworkSpec,
    build_partitioned_plant,
    graph_sweep,
    l2_norm_response,
    monolithic_state_matrix,
    paper_default_spec,
    run_benchmark,
)
from .ratpoly import Polynomial, RationalFunction
from .rectifier import (
    NormalForm,
    OutputPartition,
    Rectifier,
    build_rectifier,
    build_rectifier_measured,
    check_assumption_invertibility,
    enumerate_valid_partitions,
    is_minimum_phase,
    normal_form,
    realize_coupling_nf,
    realize_rectified_plant_nf,
    rectified_plant,
    relative_degree,
    select_partition,
)
from .synthesis import (
    RetrofitController,
    SynthesisWeights,
    VerificationFailed,
    care_solve,
    invariance_residual,
    lqg_controller,
    random_admissible_environment,
    retrofit_property_holds,
    synthesize_retrofit,
    verify_internal_conditions,
    verify_output_rectifying,
    verify_retrofit_general,
)

__version__ = "0.1.0"
