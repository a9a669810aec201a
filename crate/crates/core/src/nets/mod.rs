//! Minimal differentiable function stack: tensors, a reverse-mode tape, MLPs,
//! the attention message encoder, stochastic policy heads and checkpoints.

pub mod bundle;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod network;
pub mod optim;
pub mod tensor;

pub use bundle::{BundleConfig, PolicyBundle};
pub use checkpoint::Archive;
pub use graph::{Gradients, Graph, Segments, Var};
pub use layers::{
    attention_encode, mlp_forward, Activation, AttentionEncoder, MessageEncoder, Mlp, MlpSpec,
    ParamSet,
};
pub use network::{sample_binary, sample_continuous, MessageBatch, Net, NetSpec, SquashMap};
pub use optim::Adam;
pub use tensor::{Real, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
