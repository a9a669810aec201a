//! Hybrid-reward soft actor-critic training: replay streams, the SAC
//! updates and the rollout/learner pipeline.

mod pipeline;
mod replay;
mod sac;
mod transition;

pub use pipeline::{
    run_pipeline, run_pipeline_with_log, Checkpoint, FaultInjection, Phase, TrainConfig,
    TrainOutcome, LOG_HEADER,
};
pub use replay::ReplayBuffer;
pub use sac::{
    sac_update_continuous, sac_update_discrete, Batch, SacConfig, SacLosses, StreamLearner,
};
pub use transition::{MsgSet, StoredAction, Stream, Transition};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("non-finite value during training: {0}")]
    NonFinite(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("rollout worker {worker} failed repeatedly: {message}")]
    WorkerFailed { worker: usize, message: String },
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Net(#[from] crate::nets::NetError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
