//! Network types, forward passes, the stage objective and all gradients.

pub mod backward;
pub mod config;
pub mod forward;
pub mod objective;
pub mod params;

pub use backward::{network_backward, NetworkBackward};
pub use config::{NetworkConfig, StageConfig, StageSpec, MAX_STAGES};
pub use forward::{
    l2_pool_forward, lc_filter_forward, lcn_forward, network_forward, stage_forward, top_features,
    StageActivations,
};
pub use objective::{
    joint_objective, joint_objective_and_gradient, rica_stage_gradient, rica_stage_objective,
    rica_stage_objective_and_gradient, stage_inputs, JointEvaluation,
};
pub use params::{parse_learnable_key, NetworkParams, StageGrads, StageParams};
