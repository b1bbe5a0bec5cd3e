//! Localized-training / decentralized-execution actor-critic for mean-field
//! multi-agent reinforcement learning on a network of states.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: the state network and k-hop windows.
//! * [`env`]: empirical distributions, agent- and team-level dynamics.
//! * [`policy`]: individual policies, the multinomial lift, energy policies.
//! * [`neural`]: two-layer ReLU nets, feature maps, projection.
//! * [`oracle`]: brute-force enumeration of every quantity on small instances.
//! * [`training`]: samplers, the localized TD critic, the actor-critic loop.
//! * [`config`], [`io`], [`harness`]: experiment files, run directories and
//!   the `ltde` subcommands.
//! * [`verify`]: the acceptance criteria behind `ltde verify`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combinatorics;
pub mod config;
pub mod env;
pub mod error;
pub mod graph;
pub mod harness;
pub mod io;
pub mod neural;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
