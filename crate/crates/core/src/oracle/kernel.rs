use std::collections::BTreeMap;

use crate::combinatorics::{compositions, multinomial_pmf};
use crate::env::{EmpiricalStateDist, MeanFieldEnv, TeamActionDist};
use crate::error::Result;

/// Exact law of `mu'` given `(mu, h)`: for every `(s, a)` group the
/// `counts[s][a]` agents move i.i.d. under the kernel, and the resulting
/// multinomial destination counts are convolved group by group.
///
/// Returned as `(counts, probability)` pairs sorted by counts.
pub fn exact_team_kernel(env: &MeanFieldEnv, mu: &EmpiricalStateDist, h: &TeamActionDist) -> Result<Vec<(Vec<u32>, f64)>> {
    h.check_compatible(mu)?;
    let mut dist: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    dist.insert(vec![0; env.n_states()], 1.0);
    for s in 0..env.n_states() {
        for (a, &count) in h.row(s).iter().enumerate() {
            if count == 0 {
                continue;
            }
            let support: Vec<(usize, f64)> = env.kernel_pmf(s, mu, a)?.into_iter().filter(|&(_, p)| p > 0.0).collect();
            let probs: Vec<f64> = support.iter().map(|&(_, p)| p).collect();
            let moves: Vec<(Vec<u32>, f64)> = compositions(count, support.len())
                .into_iter()
                .map(|c| {
                    let p = multinomial_pmf(&c, &probs);
                    (c, p)
                })
                .filter(|&(_, p)| p > 0.0)
                .collect();
            let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            for (partial, p) in &dist {
                for (c, q) in &moves {
                    let mut key = partial.clone();
                    for (&(t, _), &k) in support.iter().zip(c) {
                        key[t] += k;
                    }
                    *next.entry(key).or_insert(0.0) += p * q;
                }
            }
            dist = next;
        }
    }
    Ok(dist.into_iter().collect())
}

/// Marginal law of `mu'(s)` as a pmf over counts `0..=N`.
pub fn marginal(kernel: &[(Vec<u32>, f64)], s: usize, n_agents: u32) -> Vec<f64> {
    let mut out = vec![0.0; n_agents as usize + 1];
    for (counts, p) in kernel {
        out[counts[s] as usize] += p;
    }
    out
}
