//! Reverse-mode differentiation and the actor/critic networks built on it.

pub mod checkpoint;
pub mod gradcheck;
mod kernels;
pub mod net;
pub mod optim;
pub mod policy;
pub mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, NetParams};
pub use net::{forward_actor, forward_critic, Activation, Bound, Census, ConvStage, EncoderSpec, HeadKind, NetInput, NetSpec, ParamVector, Part};
pub use optim::Adam;
pub use policy::{sample_squashed, squash_with_noise, squashed_log_prob, tape_squashed};
pub use tape::{BankId, Gradients, Tape, Tensor, Var};
