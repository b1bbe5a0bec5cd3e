//! Localized training: samplers for the stationary and visitation measures,
//! the localized neural TD critic, the local policy-gradient estimator and
//! the actor-critic loop.

mod actor;
mod critic;
mod ghat;
mod sampler;

pub use actor::{actor_train, monte_carlo_j, ActorConfig, ActorRecord, ActorRun};
pub use critic::{critic_train, residual, CriticConfig, CriticState};
pub use ghat::{ghat, ghat_weighted, LocalCritic, TabularLocalCritic};
pub use sampler::{Sampler, TransitionTuple, DEFAULT_BURN_IN, DEFAULT_RESTARTS};
