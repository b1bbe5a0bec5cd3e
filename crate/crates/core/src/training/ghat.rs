use super::critic::CriticState;
use crate::combinatorics::CandidateSets;
use crate::env::{window_view, EmpiricalStateDist, TeamActionDist};
use crate::error::{Error, Result};
use crate::graph::{StateGraph, Window};
use crate::oracle::TruncatedQ;
use crate::policy::FeatureCache;

/// A per-state localized Q estimate that sees only the counts inside its window.
pub trait LocalCritic: Sync {
    fn window(&self, y: usize) -> &Window;
    /// `Q_y` evaluated on a window view (see [`window_view`]).
    fn value(&self, y: usize, view: &[u32]) -> Result<f64>;
}

impl LocalCritic for CriticState {
    fn window(&self, y: usize) -> &Window {
        &self.windows[y]
    }

    fn value(&self, y: usize, view: &[u32]) -> Result<f64> {
        Ok(self.value_of_view(y, view))
    }
}

/// Exact truncated Q tables used as a critic.
#[derive(Debug, Clone)]
pub struct TabularLocalCritic {
    pub tables: Vec<TruncatedQ>,
}

impl LocalCritic for TabularLocalCritic {
    fn window(&self, y: usize) -> &Window {
        &self.tables[y].window
    }

    fn value(&self, y: usize, view: &[u32]) -> Result<f64> {
        self.tables[y]
            .get(view)
            .ok_or_else(|| Error::Incompatible(format!("window {view:?} of state {y} not tabulated")))
    }
}

/// `(1 / (1 - gamma)) sum_l w_l [sum_{y in N^k_s} Q_y(window_y(l))] tau Phi(theta, s, l)`.
///
/// `features` holds `tau Phi` for state `s`.
#[allow(clippy::too_many_arguments)]
pub fn ghat_weighted<C: LocalCritic + ?Sized>(
    critic: &C,
    features: &FeatureCache,
    graph: &StateGraph,
    cands: &CandidateSets,
    s: usize,
    k: usize,
    gamma: f64,
    batch: &[(EmpiricalStateDist, TeamActionDist)],
    weights: &[f64],
) -> Result<Vec<f64>> {
    if batch.is_empty() || batch.len() != weights.len() {
        return Err(Error::Incompatible("batch must be nonempty with one weight per sample".into()));
    }
    let team = graph.k_hop(s, k)?;
    let mut grad: Vec<f64> = Vec::new();
    for ((mu, h), &w) in batch.iter().zip(weights) {
        h.check_compatible(mu)?;
        if w == 0.0 {
            continue;
        }
        let mut total = 0.0;
        for &y in &team.members {
            total += critic.value(y, &window_view(mu, h, critic.window(y)))?;
        }
        let candidate = cands
            .position(h.row(s))
            .ok_or_else(|| Error::Incompatible("action counts outside the candidate set".into()))?;
        let phi = features.get(mu.occupancy(s), candidate);
        if grad.is_empty() {
            grad = vec![0.0; phi.len()];
        }
        let c = w * total;
        for (g, p) in grad.iter_mut().zip(phi) {
            *g += c * p;
        }
    }
    let scale = 1.0 / (1.0 - gamma);
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

/// The sample-average estimator `g^_s` over a batch of visitation samples.
#[allow(clippy::too_many_arguments)]
pub fn ghat<C: LocalCritic + ?Sized>(
    critic: &C,
    features: &FeatureCache,
    graph: &StateGraph,
    cands: &CandidateSets,
    s: usize,
    k: usize,
    gamma: f64,
    batch: &[(EmpiricalStateDist, TeamActionDist)],
) -> Result<Vec<f64>> {
    let w = vec![1.0 / batch.len().max(1) as f64; batch.len()];
    ghat_weighted(critic, features, graph, cands, s, k, gamma, batch, &w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{InitialDist, MeanFieldEnv, ModelSpec};
    use crate::neural::l2_norm;
    use crate::oracle::{Oracle, Weighting, DEFAULT_XI_CAP};
    use crate::policy::EnergyPolicy;

    struct ConstantCritic(Vec<Window>, f64);

    impl LocalCritic for ConstantCritic {
        fn window(&self, y: usize) -> &Window {
            &self.0[y]
        }
        fn value(&self, _: usize, _: &[u32]) -> Result<f64> {
            Ok(self.1)
        }
    }

    #[test]
    fn expectation_matches_localized_gradient() {
        let env = MeanFieldEnv::new(StateGraph::line(3), ModelSpec::line3()).unwrap();
        let o = Oracle::new(env.clone(), &InitialDist::point(vec![2, 1, 1]), DEFAULT_XI_CAP).unwrap();
        let policy = EnergyPolicy::init(3, 2, 5, 1.0, 2.0, 17).unwrap();
        let table = o.policy_table(&policy).unwrap();
        let (_, qs, sigma) = o.evaluate_policy(&policy, 1e-12).unwrap();
        let batch: Vec<_> = (0..o.xi().len()).map(|id| (o.xi().mu(o.xi().mu_of(id)).clone(), o.xi().h(id))).collect();
        for k in 0..=2 {
            let critic = TabularLocalCritic {
                tables: (0..3)
                    .map(|y| o.truncated_q(&qs[y], y, k, Weighting::Uniform).unwrap())
                    .collect(),
            };
            let local = o.localized_grad(&policy, k, true, 1e-12).unwrap();
            for s in 0..3 {
                let cache = FeatureCache::new(&policy, &table, s, o.xi().candidates()).unwrap();
                let g = ghat_weighted(&critic, &cache, env.graph(), o.xi().candidates(), s, k, 0.5, &batch, &sigma).unwrap();
                let diff: Vec<f64> = g.iter().zip(&local[s]).map(|(a, b)| a - b).collect();
                assert!(l2_norm(&diff) <= 1e-10, "k={k} s={s}");
            }
        }
    }

    #[test]
    fn constant_critic_scales_centered_features() {
        let env = MeanFieldEnv::new(StateGraph::line(3), ModelSpec::line3()).unwrap();
        let o = Oracle::new(env.clone(), &InitialDist::point(vec![2, 1, 1]), DEFAULT_XI_CAP).unwrap();
        let policy = EnergyPolicy::init(3, 2, 5, 1.0, 2.0, 4).unwrap();
        let table = o.policy_table(&policy).unwrap();
        let windows: Vec<Window> = (0..3).map(|y| env.graph().k_hop(y, 1).unwrap()).collect();
        let critic = ConstantCritic(windows, 0.7);
        let cache = FeatureCache::new(&policy, &table, 0, o.xi().candidates()).unwrap();
        let batch: Vec<_> = (0..o.xi().len()).map(|id| (o.xi().mu(o.xi().mu_of(id)).clone(), o.xi().h(id))).collect();
        // weights Pi(h | mu) per mu: centering makes the expectation vanish
        let w = o.policy_weights(&table);
        let g = ghat_weighted(&critic, &cache, env.graph(), o.xi().candidates(), 0, 1, 0.5, &batch, &w.0).unwrap();
        assert!(l2_norm(&g) < 1e-12);
        let one = ghat(&critic, &cache, env.graph(), o.xi().candidates(), 0, 1, 0.5, &batch[7..8]).unwrap();
        let phi = cache.get(batch[7].0.occupancy(0), o.xi().cand_indices(7)[0] as usize);
        for (a, p) in one.iter().zip(phi) {
            assert!((a - 0.7 * 2.0 * p / 0.5).abs() < 1e-12);
        }
    }
}
