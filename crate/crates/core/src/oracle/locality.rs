use std::collections::BTreeMap;

use super::Oracle;
use crate::error::{Error, Result};
use crate::graph::Window;

/// Averaging weights over the completions of a window.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    Uniform,
    /// Proportional to a measure over `Xi` (typically the stationary law);
    /// windows it gives no mass fall back to uniform.
    Conditional(&'a [f64]),
}

/// `Q^_s` on the windows of `N^k_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedQ {
    pub window: Window,
    pub keys: Vec<Vec<u32>>,
    pub values: Vec<f64>,
    group_of: Vec<u32>,
    lookup: BTreeMap<Vec<u32>, u32>,
}

impl TruncatedQ {
    /// `Q^_s(window of xi)`.
    pub fn at(&self, xi: usize) -> f64 {
        self.values[self.group_of[xi] as usize]
    }

    /// Value for a window key (see [`Oracle::window_key`]).
    pub fn get(&self, key: &[u32]) -> Option<f64> {
        self.lookup.get(key).map(|&g| self.values[g as usize])
    }

    /// `Q^_s` spread back over `Xi`.
    pub fn broadcast(&self) -> Vec<f64> {
        self.group_of.iter().map(|&g| self.values[g as usize]).collect()
    }
}

impl Oracle {
    /// `(mu(t) counts, h(t) counts)` for each `t` in the window, in canonical order.
    pub fn window_key(&self, xi: usize, window: &Window) -> Vec<u32> {
        let mu = self.xi.mu(self.xi.mu_of(xi));
        let mut key = Vec::with_capacity(window.len() * (1 + self.env.n_actions()));
        for &t in &window.members {
            key.push(mu.occupancy(t));
            key.extend_from_slice(self.xi.h_row(xi, t));
        }
        key
    }

    fn groups(&self, window: &Window) -> (Vec<Vec<u32>>, Vec<u32>, BTreeMap<Vec<u32>, u32>) {
        let mut lookup: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
        let mut keys = Vec::new();
        let group_of = (0..self.xi.len())
            .map(|id| {
                let key = self.window_key(id, window);
                *lookup.entry(key.clone()).or_insert_with(|| {
                    keys.push(key);
                    keys.len() as u32 - 1
                })
            })
            .collect();
        (keys, group_of, lookup)
    }

    /// Largest `|Q_s(mu, h) - Q_s(mu', h')|` over pairs that agree on `N^k_s`.
    pub fn decay_gap(&self, q_s: &[f64], s: usize, k: usize) -> Result<f64> {
        let window = self.env.graph().k_hop(s, k)?;
        let (keys, group_of, _) = self.groups(&window);
        let mut lo = vec![f64::INFINITY; keys.len()];
        let mut hi = vec![f64::NEG_INFINITY; keys.len()];
        for (id, &g) in group_of.iter().enumerate() {
            lo[g as usize] = lo[g as usize].min(q_s[id]);
            hi[g as usize] = hi[g as usize].max(q_s[id]);
        }
        Ok(lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max))
    }

    /// Weighted average of `q_s` over the completions of each `N^k_s` window.
    pub fn truncated_q(&self, q_s: &[f64], s: usize, k: usize, weighting: Weighting<'_>) -> Result<TruncatedQ> {
        let window = self.env.graph().k_hop(s, k)?;
        let (keys, group_of, lookup) = self.groups(&window);
        let n = keys.len();
        let mut count = vec![0.0; n];
        let mut plain = vec![0.0; n];
        let mut mass = vec![0.0; n];
        let mut weighted = vec![0.0; n];
        for (id, &g) in group_of.iter().enumerate() {
            let g = g as usize;
            count[g] += 1.0;
            plain[g] += q_s[id];
            if let Weighting::Conditional(nu) = weighting {
                mass[g] += nu[id];
                weighted[g] += nu[id] * q_s[id];
            }
        }
        let values = (0..n)
            .map(|g| {
                if count[g] == 0.0 {
                    return Err(Error::Internal("window without completions".into()));
                }
                Ok(if mass[g] > 0.0 {
                    weighted[g] / mass[g]
                } else {
                    plain[g] / count[g]
                })
            })
            .collect::<Result<_>>()?;
        Ok(TruncatedQ {
            window,
            keys,
            values,
            group_of,
            lookup,
        })
    }
}

/// `c rho^(k+1)` with `c = r_max / (1 - gamma)`, `rho = sqrt(gamma)`.
pub fn decay_bound(r_max: f64, gamma: f64, k: usize) -> f64 {
    r_max / (1.0 - gamma) * gamma.powf((k as f64 + 1.0) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::line3_oracle;
    use super::super::PolicyWeights;
    use super::*;
    use crate::policy::{IndividualPolicy, LiftedPolicy, PolicyTable};

    fn setup() -> (Oracle, PolicyWeights, Vec<Vec<f64>>) {
        let o = line3_oracle();
        let table = PolicyTable::new(
            &LiftedPolicy::new(IndividualPolicy::Crowding { spread: 0.9 }),
            3,
            4,
            o.xi().candidates(),
        )
        .unwrap();
        let w = o.policy_weights(&table);
        let qs = o.team_q_all(&w, 1e-12).unwrap();
        (o, w, qs)
    }

    #[test]
    fn full_window_is_exact() {
        let (o, _, qs) = setup();
        let d = o.env().graph().diameter();
        for (s, q) in qs.iter().enumerate() {
            assert_eq!(o.decay_gap(q, s, d).unwrap(), 0.0);
            assert_eq!(&o.truncated_q(q, s, d, Weighting::Uniform).unwrap().broadcast(), q);
        }
    }

    #[test]
    fn gaps_shrink_and_respect_bound() {
        let (o, _, qs) = setup();
        for (s, q) in qs.iter().enumerate() {
            let mut last = f64::INFINITY;
            for k in 0..=2 {
                let gap = o.decay_gap(q, s, k).unwrap();
                assert!(gap <= last + 1e-15);
                assert!(gap <= decay_bound(1.0, 0.5, k) + 1e-12, "s={s} k={k} gap={gap}");
                last = gap;
            }
        }
    }

    #[test]
    fn truncation_within_bound_for_both_weightings() {
        let (o, w, qs) = setup();
        let (nu, _) = o.stationary(&w, 1e-12).unwrap();
        for (s, q) in qs.iter().enumerate() {
            for k in 0..=2 {
                let bound = decay_bound(1.0, 0.5, k);
                let u = o.truncated_q(q, s, k, Weighting::Uniform).unwrap();
                let c = o.truncated_q(q, s, k, Weighting::Conditional(&nu)).unwrap();
                for id in 0..o.xi().len() {
                    assert!((u.at(id) - q[id]).abs() <= bound + 1e-12);
                    assert!((c.at(id) - q[id]).abs() <= bound + 1e-12);
                    assert!((u.at(id) - c.at(id)).abs() <= 2.0 * bound + 1e-12);
                }
                let key = o.window_key(5, &u.window);
                assert_eq!(u.get(&key), Some(u.at(5)));
            }
        }
    }

    #[test]
    fn bound_arithmetic() {
        assert!((decay_bound(1.0, 0.25, 2) - 4.0 / 3.0 * 0.125).abs() < 1e-15);
    }
}
