//! Brute-force ground truth on enumerable instances.
//!
//! Everything here works on dense tables over the enumerated space `Xi` of
//! `(mu, h)` pairs and is deterministic: parallel loops only ever write
//! disjoint outputs, and no float sum depends on hash-map iteration order.

mod bellman;
mod gradient;
mod kernel;
mod locality;
mod measures;
mod tables;
mod xi;

pub use bellman::{FixedPoint, DEFAULT_TOL};
pub use kernel::{exact_team_kernel, marginal};
pub use locality::{decay_bound, TruncatedQ, Weighting};
pub use measures::{MeasureReport, MEASURE_TOL};
pub use tables::{ExactTables, TablesManifest};
pub use xi::{XiSpace, DEFAULT_XI_CAP};

use crate::env::{InitialDist, MeanFieldEnv};
use crate::error::{Error, Result};
use crate::policy::PolicyTable;

/// Sparse kernel row: `(mu' index, probability)`.
pub type KernelRow = Vec<(u32, f64)>;

/// `Pi(h | mu)` for every `xi`, listed in `Xi` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyWeights(pub Vec<f64>);

#[derive(Debug, Clone)]
pub struct Oracle {
    env: MeanFieldEnv,
    xi: XiSpace,
    kernel: Vec<KernelRow>,
    team_rewards: Vec<Vec<f64>>,
    global_rewards: Vec<f64>,
    p0: Vec<f64>,
}

impl Oracle {
    pub fn new(env: MeanFieldEnv, initial: &InitialDist, cap: usize) -> Result<Self> {
        initial.validate(env.n_states(), env.n_agents())?;
        let xi = XiSpace::enumerate(env.n_states(), env.n_agents(), env.n_actions(), cap)?;
        let kernel = build_kernel(&env, &xi)?;
        let team_rewards: Vec<Vec<f64>> = (0..env.n_states())
            .map(|s| {
                (0..xi.len())
                    .map(|id| env.team_reward(s, xi.mu(xi.mu_of(id)), &xi.h(id)))
                    .collect()
            })
            .collect();
        let global_rewards = (0..xi.len())
            .map(|id| team_rewards.iter().map(|row| row[id]).sum())
            .collect();
        let mut p0 = vec![0.0; xi.n_mus()];
        for (mu, w) in initial.normalized() {
            p0[xi.mu_index(mu.counts()).ok_or_else(|| Error::Internal("initial mu not enumerated".into()))?] += w;
        }
        Ok(Self {
            env,
            xi,
            kernel,
            team_rewards,
            global_rewards,
            p0,
        })
    }

    pub fn env(&self) -> &MeanFieldEnv {
        &self.env
    }

    pub fn xi(&self) -> &XiSpace {
        &self.xi
    }

    pub fn gamma(&self) -> f64 {
        self.env.gamma()
    }

    pub fn kernel_row(&self, xi: usize) -> &[(u32, f64)] {
        &self.kernel[xi]
    }

    /// `r_s(xi)` as used by the team Q-functions.
    pub fn team_rewards(&self, s: usize) -> &[f64] {
        &self.team_rewards[s]
    }

    /// `sum_s r_s(xi)`.
    pub fn global_rewards(&self) -> &[f64] {
        &self.global_rewards
    }

    /// `P_0` over the enumerated state distributions.
    pub fn initial(&self) -> &[f64] {
        &self.p0
    }

    pub fn policy_weights(&self, table: &PolicyTable) -> PolicyWeights {
        let xi = &self.xi;
        PolicyWeights(
            (0..xi.len())
                .map(|id| {
                    let mu = xi.mu(xi.mu_of(id));
                    xi.cand_indices(id)
                        .iter()
                        .enumerate()
                        .map(|(s, &c)| table.pmf(s, mu.occupancy(s))[c as usize])
                        .product()
                })
                .collect(),
        )
    }

    /// `sum_h Pi(h | mu) f(mu, h)` for every `mu`.
    pub fn policy_average(&self, weights: &PolicyWeights, table: &[f64]) -> Vec<f64> {
        (0..self.xi.n_mus())
            .map(|m| self.xi.range(m).map(|id| weights.0[id] * table[id]).sum())
            .collect()
    }

    /// `sum_mu' P^N(mu' | xi) v(mu')` for every `xi`.
    pub fn expect_next(&self, v: &[f64]) -> Vec<f64> {
        self.kernel
            .iter()
            .map(|row| row.iter().map(|&(m, p)| p * v[m as usize]).sum())
            .collect()
    }
}

fn build_kernel(env: &MeanFieldEnv, xi: &XiSpace) -> Result<Vec<KernelRow>> {
    use rayon::prelude::*;
    (0..xi.len())
        .into_par_iter()
        .map(|id| {
            let law = exact_team_kernel(env, xi.mu(xi.mu_of(id)), &xi.h(id))?;
            let mut row: KernelRow = law
                .into_iter()
                .map(|(counts, p)| {
                    xi.mu_index(&counts)
                        .map(|m| (m as u32, p))
                        .ok_or_else(|| Error::Internal("successor outside mu-space".into()))
                })
                .collect::<Result<_>>()?;
            row.sort_by_key(|&(m, _)| m);
            Ok(row)
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::testutil::line3_oracle;
    use super::*;
    use crate::policy::{IndividualPolicy, LiftedPolicy};

    #[test]
    fn kernel_rows_are_pmfs() {
        let o = line3_oracle();
        for id in 0..o.xi().len() {
            let total: f64 = o.kernel_row(id).iter().map(|&(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!(o.initial().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn policy_weights_normalize_per_mu() {
        let o = line3_oracle();
        let table = PolicyTable::new(
            &LiftedPolicy::new(IndividualPolicy::Crowding { spread: 0.6 }),
            3,
            4,
            o.xi().candidates(),
        )
        .unwrap();
        let w = o.policy_weights(&table);
        for total in o.policy_average(&w, &vec![1.0; o.xi().len()]) {
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
