use rayon::prelude::*;

use super::{Oracle, PolicyWeights};
use crate::error::{Error, Result};

/// Default sup-norm accuracy of fixed points.
pub const DEFAULT_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub values: Vec<f64>,
    pub iterations: usize,
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterates `step` from zero until successive iterates are within
/// `tol (1 - gamma) / gamma`, which bounds the distance to the fixed point by `tol`.
fn iterate(len: usize, gamma: f64, tol: f64, mut step: impl FnMut(&[f64]) -> Vec<f64>) -> Result<FixedPoint> {
    if !(tol > 0.0) {
        return Err(Error::InvalidHyperparameter(format!("tolerance {tol} must be positive")));
    }
    let mut current = vec![0.0; len];
    if gamma == 0.0 {
        return Ok(FixedPoint {
            values: step(&current),
            iterations: 1,
        });
    }
    let threshold = tol * (1.0 - gamma) / gamma;
    for iterations in 1..=MAX_SWEEPS {
        let next = step(&current);
        let diff = sup_diff(&next, &current);
        current = next;
        if diff <= threshold {
            return Ok(FixedPoint {
                values: current,
                iterations,
            });
        }
    }
    Err(Error::NonConvergence(format!("fixed point not reached in {MAX_SWEEPS} sweeps")))
}

impl Oracle {
    fn check_table(&self, table: &[f64]) -> Result<()> {
        if table.len() != self.xi.len() {
            return Err(Error::DimensionMismatch {
                expected: self.xi.len(),
                got: table.len(),
            });
        }
        Ok(())
    }

    fn apply_with(&self, rewards: &[f64], weights: &PolicyWeights, q: &[f64]) -> Vec<f64> {
        let next_value = self.policy_average(weights, q);
        let gamma = self.gamma();
        self.expect_next(&next_value)
            .into_iter()
            .zip(rewards)
            .map(|(ev, r)| r + gamma * ev)
            .collect()
    }

    /// `(T_s q)(mu, h) = r_s(mu, h) + gamma sum_mu' P(mu' | mu, h) sum_h' Pi(h' | mu') q(mu', h')`.
    pub fn bellman_apply(&self, s: usize, weights: &PolicyWeights, q: &[f64]) -> Result<Vec<f64>> {
        self.check_table(q)?;
        self.check_table(&weights.0)?;
        let rewards = self.team_rewards.get(s).ok_or(Error::UnknownState(s))?;
        Ok(self.apply_with(rewards, weights, q))
    }

    /// Bellman operator with caller-supplied stage rewards.
    pub fn bellman_apply_rewards(&self, rewards: &[f64], weights: &PolicyWeights, q: &[f64]) -> Result<Vec<f64>> {
        self.check_table(q)?;
        self.check_table(rewards)?;
        Ok(self.apply_with(rewards, weights, q))
    }

    /// `Q_s^Pi` to sup-norm accuracy `tol`.
    pub fn team_q(&self, s: usize, weights: &PolicyWeights, tol: f64) -> Result<FixedPoint> {
        self.check_table(&weights.0)?;
        let rewards = self.team_rewards.get(s).ok_or(Error::UnknownState(s))?;
        iterate(self.xi.len(), self.gamma(), tol, |q| self.apply_with(rewards, weights, q))
    }

    pub fn team_q_all(&self, weights: &PolicyWeights, tol: f64) -> Result<Vec<Vec<f64>>> {
        (0..self.env.n_states())
            .into_par_iter()
            .map(|s| self.team_q(s, weights, tol).map(|fp| fp.values))
            .collect()
    }

    /// `Q^Pi = sum_s Q_s^Pi`.
    pub fn aggregate(tables: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; tables.first().map_or(0, Vec::len)];
        for t in tables {
            for (o, v) in out.iter_mut().zip(t) {
                *o += v;
            }
        }
        out
    }

    /// `V~^Pi(mu)` by value iteration directly on `mu`, independent of the
    /// per-team Q tables.
    pub fn value_by_mu(&self, weights: &PolicyWeights, tol: f64) -> Result<FixedPoint> {
        self.check_table(&weights.0)?;
        let expected_reward = self.policy_average(weights, &self.global_rewards);
        let gamma = self.gamma();
        iterate(self.xi.n_mus(), gamma, tol, |v| {
            let next = self.expect_next(v);
            (0..self.xi.n_mus())
                .map(|m| {
                    expected_reward[m]
                        + gamma * self.xi.range(m).map(|id| weights.0[id] * next[id]).sum::<f64>()
                })
                .collect()
        })
    }

    /// Centralized optimum `Q(xi) = rbar(xi) + gamma E[max_h' Q(mu', h')]`.
    pub fn optimal_q(&self, tol: f64) -> Result<FixedPoint> {
        let gamma = self.gamma();
        iterate(self.xi.len(), gamma, tol, |q| {
            let best: Vec<f64> = (0..self.xi.n_mus())
                .map(|m| self.xi.range(m).map(|id| q[id]).fold(f64::NEG_INFINITY, f64::max))
                .collect();
            self.expect_next(&best)
                .into_iter()
                .zip(&self.global_rewards)
                .map(|(ev, r)| r + gamma * ev)
                .collect()
        })
    }

    /// `max_h Q*(mu, h)` averaged over `P_0`: the best achievable `J`.
    pub fn optimal_j(&self, tol: f64) -> Result<f64> {
        let q = self.optimal_q(tol)?.values;
        Ok((0..self.xi.n_mus())
            .filter(|&m| self.p0[m] > 0.0)
            .map(|m| self.p0[m] * self.xi.range(m).map(|id| q[id]).fold(f64::NEG_INFINITY, f64::max))
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::line3_oracle;
    use super::super::DEFAULT_XI_CAP;
    use super::*;
    use crate::env::{InitialDist, MeanFieldEnv, ModelSpec, TeamRewardForm};
    use crate::graph::StateGraph;
    use crate::policy::{IndividualPolicy, LiftedPolicy, PolicyTable};

    fn crowding(o: &Oracle) -> PolicyWeights {
        let table = PolicyTable::new(
            &LiftedPolicy::new(IndividualPolicy::Crowding { spread: 0.5 }),
            3,
            4,
            o.xi().candidates(),
        )
        .unwrap();
        o.policy_weights(&table)
    }

    #[test]
    fn constant_rewards_give_closed_form() {
        let mut model = ModelSpec::line3();
        model.team_reward = TeamRewardForm::Constant {
            values: vec![0.2, -0.4, 1.0],
        };
        let env = MeanFieldEnv::new(StateGraph::line(3), model).unwrap();
        let o = Oracle::new(env, &InitialDist::point(vec![2, 1, 1]), DEFAULT_XI_CAP).unwrap();
        let w = crowding(&o);
        let once = o.bellman_apply(1, &w, &vec![3.0; o.xi().len()]).unwrap();
        assert!(once.iter().all(|&v| (v - (-0.4 + 1.5)).abs() < 1e-14));
        let q = o.team_q(2, &w, 1e-10).unwrap().values;
        assert!(q.iter().all(|&v| (v - 2.0).abs() <= 1e-10));
        let opt = o.optimal_q(1e-10).unwrap().values;
        assert!(opt.iter().all(|&v| (v - 1.6).abs() <= 1e-10));
    }

    #[test]
    fn lemma_one_decomposition() {
        let o = line3_oracle();
        let w = crowding(&o);
        let tol = 1e-10;
        let qs = o.team_q_all(&w, tol).unwrap();
        let bound = o.env().r_max() / (1.0 - o.gamma());
        assert!(qs.iter().flatten().all(|v| v.abs() <= bound));
        let via_q = o.policy_average(&w, &Oracle::aggregate(&qs));
        let direct = o.value_by_mu(&w, tol).unwrap().values;
        for (a, b) in via_q.iter().zip(&direct) {
            assert!((a - b).abs() <= 3.0 * 2.0 * tol, "{a} vs {b}");
        }
    }

    #[test]
    fn optimum_dominates_policy_value() {
        let o = line3_oracle();
        let w = crowding(&o);
        let q = Oracle::aggregate(&o.team_q_all(&w, 1e-10).unwrap());
        let opt = o.optimal_q(1e-10).unwrap().values;
        for (a, b) in opt.iter().zip(&q) {
            assert!(a + 2e-10 >= *b);
        }
    }

    #[test]
    fn gamma_zero_is_one_step() {
        let mut model = ModelSpec::line3();
        model.gamma = 0.0;
        let env = MeanFieldEnv::new(StateGraph::line(3), model).unwrap();
        let o = Oracle::new(env, &InitialDist::point(vec![2, 1, 1]), DEFAULT_XI_CAP).unwrap();
        assert_eq!(o.optimal_q(1e-8).unwrap().values, o.global_rewards());
    }

    #[test]
    fn bad_inputs_rejected() {
        let o = line3_oracle();
        let w = crowding(&o);
        assert!(matches!(o.bellman_apply(0, &w, &[0.0; 3]), Err(Error::DimensionMismatch { .. })));
        assert!(o.team_q(0, &w, 0.0).is_err());
    }
}
