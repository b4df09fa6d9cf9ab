"""qcnnlab: a desk-scale quantum convolutional network laboratory.

Statevector/density-matrix simulation, a staged conv/pool ansatz with
weight tying, parameter-shift training, tensor-network warm starts, and
deterministic experiment drivers.
"""

__version__ = "0.1.0"

from .circuit import (  # noqa: F401
    Circuit,
    EncodedSample,
    QcnnPlan,
    Stage,
    amplitude_encode,
    build_plan,
    build_qcnn,
    circuit_from_plan,
    conv_block,
    plan_from_json,
    plan_to_json,
    pool_block,
    reference_plan,
    variance_scan_plan,
)
from .sim import (  # noqa: F401
    DensityMatrix,
    GateKind,
    GateOp,
    NoiseConfig,
    StateVector,
    apply_depolarizing,
    apply_gate,
    expectation_global_projector,
    expectation_z,
    new_zero_state,
    partial_trace,
    rotation_matrix,
    to_density,
)
from .tni import (  # noqa: F401
    MpsState,
    TniConfig,
    TtnModel,
    contract_and_score,
    mps_from_vector,
    mps_to_vector,
    pseudo_loss,
    tni_pretrain,
    ttn_from_plan,
)
from .training import (  # noqa: F401
    CostKind,
    EpochMetrics,
    OptimizerState,
    TrainConfig,
    adam_step,
    cost_global,
    cost_local,
    evaluate,
    load_checkpoint,
    parameter_shift_gradient,
    predict,
    save_checkpoint,
    train,
    write_metrics_csv,
)
