//! Soft actor-critic: replay, learner, discrete variant, environments and the
//! single-process training loop.

pub mod config;
pub mod discrete;
pub mod env;
pub mod learner;
pub mod obs;
pub mod replay;
pub mod trainer;

pub use config::{SacConfig, UtdScheduler};
pub use discrete::{DiscreteConfig, DiscreteLearner, DiscreteTransition, TabularMdp};
pub use env::{Environment, PointMass, StepOutcome};
pub use learner::{soft_update, ActionMode, Batch, GradReducer, Learner, LocalReducer, PolicySnapshot, UpdateGradients, UpdateStats};
pub use obs::{InputEncoding, Obs};
pub use replay::{ReplayBuffer, Transition, DEFAULT_CAPACITY};
pub use trainer::{train, ActingPolicy, EnvRunner, EpisodeRecord, TrainHooks, TrainOptions, TrainSummary, DEFAULT_BROADCAST_PERIOD};
