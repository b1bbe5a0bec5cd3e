use super::{Oracle, PolicyWeights};
use crate::error::{Error, Result};

/// Default l1 tolerance for stationary and visitation measures.
pub const MEASURE_TOL: f64 = 1e-10;

const PLAIN_SWEEPS: usize = 10_000;
const MAX_SWEEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureReport {
    pub iterations: usize,
    /// Set when plain power iteration stalled and the lazy chain `(I + K) / 2`
    /// was used instead.
    pub lazy: bool,
    /// `||nu K - nu||_1` of the returned measure.
    pub residual: f64,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

impl Oracle {
    /// `rho_0(mu, h) = P_0(mu) Pi(h | mu)`.
    pub fn initial_xi(&self, weights: &PolicyWeights) -> Vec<f64> {
        (0..self.xi.len())
            .map(|id| self.p0[self.xi.mu_of(id)] * weights.0[id])
            .collect()
    }

    /// One step of the joint chain `K((mu, h) -> (mu', h')) = P(mu' | mu, h) Pi(h' | mu')`.
    pub fn push_forward(&self, weights: &PolicyWeights, nu: &[f64]) -> Vec<f64> {
        let mut next_mu = vec![0.0; self.xi.n_mus()];
        for (id, &mass) in nu.iter().enumerate() {
            if mass != 0.0 {
                for &(m, p) in &self.kernel[id] {
                    next_mu[m as usize] += mass * p;
                }
            }
        }
        (0..self.xi.len())
            .map(|id| next_mu[self.xi.mu_of(id)] * weights.0[id])
            .collect()
    }

    /// Stationary law of the joint chain reached by power iteration from
    /// `rho_0`. Periodic chains fall back to the lazy chain, whose limit from
    /// `rho_0` is the Cesaro limit of the original.
    pub fn stationary(&self, weights: &PolicyWeights, tol: f64) -> Result<(Vec<f64>, MeasureReport)> {
        let mut nu = self.initial_xi(weights);
        for iterations in 1..=PLAIN_SWEEPS {
            let next = self.push_forward(weights, &nu);
            let residual = l1(&next, &nu);
            nu = next;
            if residual <= tol {
                let residual = l1(&self.push_forward(weights, &nu), &nu);
                return Ok((
                    nu,
                    MeasureReport {
                        iterations,
                        lazy: false,
                        residual,
                    },
                ));
            }
        }
        let mut nu = self.initial_xi(weights);
        for iterations in 1..=MAX_SWEEPS {
            let stepped = self.push_forward(weights, &nu);
            let residual = l1(&stepped, &nu);
            if residual <= tol {
                return Ok((
                    nu,
                    MeasureReport {
                        iterations,
                        lazy: true,
                        residual,
                    },
                ));
            }
            nu = nu.iter().zip(&stepped).map(|(a, b)| 0.5 * (a + b)).collect();
        }
        Err(Error::NonConvergence(format!(
            "stationary measure not within {tol} after {MAX_SWEEPS} lazy sweeps"
        )))
    }

    /// `sigma = (1 - gamma) sum_t gamma^t rho_0 K^t`, truncated once
    /// `gamma^T <= tol / 2`; the tail mass `gamma^T` is assigned to the last
    /// computed law so the result sums to one.
    pub fn visitation(&self, weights: &PolicyWeights, tol: f64) -> Vec<f64> {
        let gamma = self.gamma();
        let mut law = self.initial_xi(weights);
        let mut sigma = vec![0.0; law.len()];
        let mut discount = 1.0;
        while discount > 0.5 * tol {
            for (s, l) in sigma.iter_mut().zip(&law) {
                *s += (1.0 - gamma) * discount * l;
            }
            discount *= gamma;
            law = self.push_forward(weights, &law);
        }
        for (s, l) in sigma.iter_mut().zip(&law) {
            *s += discount * l;
        }
        sigma
    }

    /// Marginal of a measure over `Xi` on the state distributions.
    pub fn mu_marginal(&self, measure: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.xi.n_mus()];
        for (id, &p) in measure.iter().enumerate() {
            out[self.xi.mu_of(id)] += p;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::line3_oracle;
    use super::super::DEFAULT_XI_CAP;
    use super::*;
    use crate::env::{InitialDist, MeanFieldEnv, ModelSpec};
    use crate::graph::StateGraph;
    use crate::policy::{IndividualPolicy, LiftedPolicy, PolicyTable};

    fn weights(o: &Oracle, pi: IndividualPolicy) -> PolicyWeights {
        let table = PolicyTable::new(&LiftedPolicy::new(pi), 3, 4, o.xi().candidates()).unwrap();
        o.policy_weights(&table)
    }

    #[test]
    fn all_stay_is_frozen() {
        let o = line3_oracle();
        let w = weights(
            &o,
            IndividualPolicy::Table {
                probs: vec![vec![1.0, 0.0]; 3],
            },
        );
        let (nu, report) = o.stationary(&w, MEASURE_TOL).unwrap();
        assert_eq!(nu, o.initial_xi(&w));
        assert_eq!(report.residual, 0.0);
    }

    #[test]
    fn measures_are_pmfs_and_invariant() {
        let o = line3_oracle();
        let w = weights(&o, IndividualPolicy::Crowding { spread: 0.7 });
        let (nu, report) = o.stationary(&w, MEASURE_TOL).unwrap();
        assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(report.residual <= MEASURE_TOL);
        let sigma = o.visitation(&w, MEASURE_TOL);
        assert!((sigma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(sigma.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn periodic_chain_uses_lazy_fallback() {
        // two agents on a two-state line always swap sides
        let mut model = ModelSpec::line3();
        model.n_agents = 2;
        let env = MeanFieldEnv::new(StateGraph::line(2), model).unwrap();
        let o = Oracle::new(env, &InitialDist::point(vec![2, 0]), DEFAULT_XI_CAP).unwrap();
        let table = PolicyTable::new(
            &LiftedPolicy::new(IndividualPolicy::Table {
                probs: vec![vec![0.0, 1.0]; 2],
            }),
            2,
            2,
            o.xi().candidates(),
        )
        .unwrap();
        let w = o.policy_weights(&table);
        let (nu, report) = o.stationary(&w, MEASURE_TOL).unwrap();
        assert!(report.lazy);
        let marginal = o.mu_marginal(&nu);
        let both_left = o.xi().mu_index(&[2, 0]).unwrap();
        let both_right = o.xi().mu_index(&[0, 2]).unwrap();
        assert!((marginal[both_left] - 0.5).abs() < 1e-9);
        assert!((marginal[both_right] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn tiny_gamma_visitation_is_initial() {
        let mut model = ModelSpec::line3();
        model.gamma = 1e-12;
        let env = MeanFieldEnv::new(StateGraph::line(3), model).unwrap();
        let o = Oracle::new(env, &InitialDist::point(vec![2, 1, 1]), DEFAULT_XI_CAP).unwrap();
        let w = weights(&o, IndividualPolicy::Uniform);
        let sigma = o.visitation(&w, MEASURE_TOL);
        assert!(l1(&sigma, &o.initial_xi(&w)) < 1e-10);
    }
}
