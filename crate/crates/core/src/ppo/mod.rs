//! Clipped-surrogate policy optimization over the latent environment and the
//! round drivers built on it.

mod driver;
mod gae;
mod policy;
mod update;

pub use driver::{
    buffer_set, double_loop_schedule, run_active_learning, run_double_loop, run_predictor_guided, AblationFlags,
    CampaignResult, Evaluation, LatProtConfig, LatProtRunner, Observer, RoundKind, RoundReport, RoundSnapshot,
};
pub use gae::{compute_gae, trajectory_advantages};
pub use policy::{squashed_log_density, CategoricalPolicy, GaussianPolicy, Policy, PolicyCheckpoint};
pub use update::{clipped_surrogate, AgentCheckpoint, PpoAgent, PpoConfig, Sample, UpdateReport};
