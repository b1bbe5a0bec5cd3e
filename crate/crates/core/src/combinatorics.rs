//! Stars-and-bars enumeration and multinomial probabilities.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Number of ways to split `total` indistinguishable items into `parts` bins.
pub fn composition_count(total: u32, parts: usize) -> u128 {
    if parts == 0 {
        return u128::from(total == 0);
    }
    binomial(total as u64 + parts as u64 - 1, parts as u64 - 1)
}

/// All compositions of `total` into `parts` nonnegative parts, in
/// colexicographic order (the last coordinate varies slowest).
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for last in 0..=total {
        for mut prefix in compositions(total - last, parts - 1) {
            prefix.push(last);
            out.push(prefix);
        }
    }
    out
}

pub fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Multinomial probability of observing `counts` in `sum(counts)` i.i.d. draws from `probs`.
pub fn multinomial_pmf(counts: &[u32], probs: &[f64]) -> f64 {
    debug_assert_eq!(counts.len(), probs.len());
    let n: u32 = counts.iter().sum();
    let mut log_coef = ln_factorial(n);
    let mut prod = 1.0;
    for (&c, &p) in counts.iter().zip(probs) {
        if c == 0 {
            continue;
        }
        if p <= 0.0 {
            return 0.0;
        }
        log_coef -= ln_factorial(c);
        prod *= p.powi(c as i32);
    }
    // exact small coefficients: round the exponentiated log
    let coef = log_coef.exp();
    let coef = if coef < 1e15 { coef.round() } else { coef };
    coef * prod
}

/// Candidate empirical action distributions `P^n(A)` for every occupancy `n = 0..=max_total`,
/// stored as action-count vectors in colexicographic order.
#[derive(Debug, Clone)]
pub struct CandidateSets {
    n_actions: usize,
    sets: Vec<Vec<Vec<u32>>>,
    index: Vec<HashMap<Vec<u32>, usize>>,
}

impl CandidateSets {
    pub fn new(max_total: u32, n_actions: usize, cap: usize) -> Result<Self> {
        let largest = composition_count(max_total, n_actions);
        if largest > cap as u128 {
            return Err(Error::CapExceeded {
                what: "per-state candidate set",
                size: largest,
                cap: cap as u128,
            });
        }
        let sets: Vec<Vec<Vec<u32>>> = (0..=max_total).map(|n| compositions(n, n_actions)).collect();
        let index = sets
            .iter()
            .map(|set| set.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect())
            .collect();
        Ok(Self { n_actions, sets, index })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn max_total(&self) -> u32 {
        self.sets.len() as u32 - 1
    }

    pub fn get(&self, occupancy: u32) -> &[Vec<u32>] {
        &self.sets[occupancy as usize]
    }

    pub fn position(&self, counts: &[u32]) -> Option<usize> {
        let n: u32 = counts.iter().sum();
        self.index.get(n as usize)?.get(counts).copied()
    }

    /// Index of the Dirac candidate where all `occupancy` agents take `action`.
    pub fn dirac(&self, occupancy: u32, action: usize) -> usize {
        let mut counts = vec![0; self.n_actions];
        counts[action] = occupancy;
        self.position(&counts).expect("dirac candidate is always enumerated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colex_order_small() {
        assert_eq!(compositions(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert_eq!(compositions(0, 3), vec![vec![0, 0, 0]]);
        assert_eq!(compositions(1, 3), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
    }

    #[test]
    fn counts_match_stars_and_bars() {
        for total in 0..7 {
            for parts in 1..5 {
                assert_eq!(compositions(total, parts).len() as u128, composition_count(total, parts));
            }
        }
        assert_eq!(composition_count(4, 3), 15);
        assert_eq!(binomial(60, 30), 118_264_581_564_861_424);
    }

    #[test]
    fn multinomial_symmetric_binomial() {
        let p = [0.5, 0.5];
        assert_eq!(multinomial_pmf(&[2, 0], &p), 0.25);
        assert_eq!(multinomial_pmf(&[1, 1], &p), 0.5);
        assert_eq!(multinomial_pmf(&[0, 2], &p), 0.25);
        assert_eq!(multinomial_pmf(&[0, 0], &p), 1.0);
        assert_eq!(multinomial_pmf(&[1, 0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn candidate_cap_enforced() {
        assert!(matches!(
            CandidateSets::new(30, 4, 1000),
            Err(Error::CapExceeded { .. })
        ));
        let c = CandidateSets::new(3, 2, 100).unwrap();
        assert_eq!(c.dirac(3, 1), 3);
        assert_eq!(c.get(3)[c.dirac(3, 0)], vec![3, 0]);
    }
}
