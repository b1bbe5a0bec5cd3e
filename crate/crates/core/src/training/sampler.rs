use rand::Rng;
use serde::Serialize;

use crate::combinatorics::CandidateSets;
use crate::env::{EmpiricalStateDist, InitialDist, MeanFieldEnv, TeamActionDist};
use crate::error::Result;
use crate::policy::PolicyTable;

pub const DEFAULT_BURN_IN: usize = 200;
/// Expected number of restarts before a visitation sample is emitted.
pub const DEFAULT_RESTARTS: f64 = 10.0;

/// `(mu, h, {r_s}, mu', h')` with `h' ~ Pi(. | mu')`. `rewards[s]` is the
/// team stage reward that drives `Q_s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionTuple {
    pub mu: EmpiricalStateDist,
    pub h: TeamActionDist,
    pub rewards: Vec<f64>,
    pub mu_next: EmpiricalStateDist,
    pub h_next: TeamActionDist,
}

/// Rolls the joint `(mu, h)` chain under a tabulated team policy.
#[derive(Debug, Clone, Copy)]
pub struct Sampler<'a> {
    pub env: &'a MeanFieldEnv,
    pub table: &'a PolicyTable,
    pub cands: &'a CandidateSets,
    pub initial: &'a InitialDist,
}

impl<'a> Sampler<'a> {
    pub fn new(env: &'a MeanFieldEnv, table: &'a PolicyTable, cands: &'a CandidateSets, initial: &'a InitialDist) -> Self {
        Self {
            env,
            table,
            cands,
            initial,
        }
    }

    pub fn initial_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (EmpiricalStateDist, TeamActionDist) {
        let mu = self.initial.sample(rng);
        let h = self.table.sample(&mu, self.cands, rng);
        (mu, h)
    }

    /// `mu' ~ P^N(. | mu, h)`, then `h' ~ Pi(. | mu')`.
    pub fn step<R: Rng + ?Sized>(
        &self,
        mu: &EmpiricalStateDist,
        h: &TeamActionDist,
        rng: &mut R,
    ) -> Result<(EmpiricalStateDist, TeamActionDist)> {
        let next = self.env.team_sample_step(mu, h, rng)?;
        let h_next = self.table.sample(&next, self.cands, rng);
        Ok((next, h_next))
    }

    /// Restarts from `P_0`, runs `burn_in` steps, then emits one transition.
    /// The emitted `(mu, h)` follows the chain's law after `burn_in` steps,
    /// which approximates the stationary measure up to the mixing error.
    pub fn stationary_tuple<R: Rng + ?Sized>(&self, burn_in: usize, rng: &mut R) -> Result<TransitionTuple> {
        let (mut mu, mut h) = self.initial_pair(rng);
        for _ in 0..burn_in {
            (mu, h) = self.step(&mu, &h, rng)?;
        }
        let rewards = self.env.team_rewards(&mu, &h);
        let (mu_next, h_next) = self.step(&mu, &h, rng)?;
        Ok(TransitionTuple {
            mu,
            h,
            rewards,
            mu_next,
            h_next,
        })
    }

    /// Number of restart-chain transitions before a visitation sample is emitted.
    pub fn visitation_length(gamma: f64, restarts: f64) -> usize {
        (restarts / (1.0 - gamma)).ceil().max(1.0) as usize
    }

    /// Runs the geometric-restart chain (step with probability `gamma`,
    /// restart from `P_0` otherwise) for a fixed number of transitions from
    /// `P_0` and returns the current pair. Its law is the visitation measure
    /// up to `gamma^L` in total variation, `L` the number of transitions.
    pub fn visitation_pair<R: Rng + ?Sized>(&self, restarts: f64, rng: &mut R) -> Result<(EmpiricalStateDist, TeamActionDist)> {
        let gamma = self.env.gamma();
        let (mut mu, mut h) = self.initial_pair(rng);
        for _ in 0..Self::visitation_length(gamma, restarts) {
            if rng.random::<f64>() < gamma {
                (mu, h) = self.step(&mu, &h, rng)?;
            } else {
                (mu, h) = self.initial_pair(rng);
            }
        }
        Ok((mu, h))
    }
}
