use rayon::prelude::*;

use super::locality::Weighting;
use super::{Oracle, PolicyWeights};
use crate::error::{Error, Result};
use crate::policy::{EnergyPolicy, FeatureCache, PolicyTable};

/// Everything the exact gradient needs for one policy.
struct Evaluation {
    table: PolicyTable,
    weights: PolicyWeights,
    qs: Vec<Vec<f64>>,
    sigma: Vec<f64>,
}

impl Oracle {
    pub fn policy_table(&self, policy: &EnergyPolicy) -> Result<PolicyTable> {
        if policy.nets.len() != self.env.n_states() {
            return Err(Error::DimensionMismatch {
                expected: self.env.n_states(),
                got: policy.nets.len(),
            });
        }
        PolicyTable::new(policy, self.env.n_states(), self.env.n_agents(), self.xi.candidates())
    }

    /// `J = E_{mu_0 ~ P_0}[V~(mu_0)]` with `V~` aggregated from the team Q tables.
    pub fn j(&self, weights: &PolicyWeights, tol: f64) -> Result<f64> {
        let qs = self.team_q_all(weights, tol)?;
        Ok(self.j_from_q(weights, &qs))
    }

    fn j_from_q(&self, weights: &PolicyWeights, qs: &[Vec<f64>]) -> f64 {
        let v = self.policy_average(weights, &Oracle::aggregate(qs));
        self.p0.iter().zip(&v).filter(|(p, _)| **p > 0.0).map(|(p, v)| p * v).sum()
    }

    pub fn energy_j(&self, policy: &EnergyPolicy, tol: f64) -> Result<f64> {
        let table = self.policy_table(policy)?;
        self.j(&self.policy_weights(&table), tol)
    }

    fn evaluate(&self, policy: &EnergyPolicy, tol: f64) -> Result<Evaluation> {
        let table = self.policy_table(policy)?;
        let weights = self.policy_weights(&table);
        let qs = self.team_q_all(&weights, tol)?;
        let sigma = self.visitation(&weights, super::MEASURE_TOL.min(tol));
        Ok(Evaluation {
            table,
            weights,
            qs,
            sigma,
        })
    }

    /// `(1 / (1 - gamma)) sum_xi sigma(xi) value(xi) tau Phi(theta, s, xi)`.
    fn score_gradient(&self, policy: &EnergyPolicy, eval: &Evaluation, s: usize, value: &[f64]) -> Result<Vec<f64>> {
        let cache = FeatureCache::new(policy, &eval.table, s, self.xi.candidates())?;
        let mut grad = vec![0.0; policy.nets[s].n_params()];
        for id in 0..self.xi.len() {
            let weight = eval.sigma[id] * value[id];
            if weight == 0.0 {
                continue;
            }
            let occ = self.xi.mu(self.xi.mu_of(id)).occupancy(s);
            let phi = cache.get(occ, self.xi.cand_indices(id)[s] as usize);
            for (g, p) in grad.iter_mut().zip(phi) {
                *g += weight * p;
            }
        }
        let scale = 1.0 / (1.0 - self.gamma());
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok(grad)
    }

    /// Exact `grad_{theta_s} J` from the policy gradient theorem, for every state.
    pub fn policy_grad(&self, policy: &EnergyPolicy, tol: f64) -> Result<Vec<Vec<f64>>> {
        let eval = self.evaluate(policy, tol)?;
        let q = Oracle::aggregate(&eval.qs);
        (0..self.env.n_states())
            .into_par_iter()
            .map(|s| self.score_gradient(policy, &eval, s, &q))
            .collect()
    }

    /// Localized gradient `g_s`: the total Q is replaced by
    /// `sum_{y in N^k_s} Q^_y` built from `N^k_y` windows.
    pub fn localized_grad(&self, policy: &EnergyPolicy, k: usize, uniform: bool, tol: f64) -> Result<Vec<Vec<f64>>> {
        let eval = self.evaluate(policy, tol)?;
        let nu = if uniform {
            None
        } else {
            Some(self.stationary(&eval.weights, super::MEASURE_TOL)?.0)
        };
        let weighting = match &nu {
            Some(nu) => Weighting::Conditional(nu),
            None => Weighting::Uniform,
        };
        let truncated: Vec<Vec<f64>> = (0..self.env.n_states())
            .map(|y| self.truncated_q(&eval.qs[y], y, k, weighting).map(|t| t.broadcast()))
            .collect::<Result<_>>()?;
        (0..self.env.n_states())
            .into_par_iter()
            .map(|s| {
                let window = self.env.graph().k_hop(s, k)?;
                let mut value = vec![0.0; self.xi.len()];
                for &y in &window.members {
                    for (v, t) in value.iter_mut().zip(&truncated[y]) {
                        *v += t;
                    }
                }
                self.score_gradient(policy, &eval, s, &value)
            })
            .collect()
    }

    /// Exact `J`, per-team Q tables and visitation measure for a policy.
    pub fn evaluate_policy(&self, policy: &EnergyPolicy, tol: f64) -> Result<(f64, Vec<Vec<f64>>, Vec<f64>)> {
        let eval = self.evaluate(policy, tol)?;
        let j = self.j_from_q(&eval.weights, &eval.qs);
        Ok((j, eval.qs, eval.sigma))
    }
}
