use std::collections::HashMap;
use std::ops::Range;

use crate::combinatorics::{composition_count, compositions, CandidateSets};
use crate::env::{EmpiricalStateDist, TeamActionDist};
use crate::error::{Error, Result};

/// Default bound on `|Xi|`.
pub const DEFAULT_XI_CAP: usize = 200_000;

/// Dense enumeration of `Xi = {(mu, h) : h in H^N(mu)}`.
///
/// State distributions are listed in colexicographic order of their counts.
/// Within a `mu`, the `h` are ordered by mixed radix over per-state candidate
/// indices with state 0 varying fastest.
#[derive(Debug, Clone)]
pub struct XiSpace {
    n_states: usize,
    cands: CandidateSets,
    mus: Vec<EmpiricalStateDist>,
    mu_index: HashMap<Vec<u32>, usize>,
    offsets: Vec<usize>,
    xi_mu: Vec<u32>,
    xi_cands: Vec<u32>,
}

impl XiSpace {
    pub fn enumerate(n_states: usize, n_agents: u32, n_actions: usize, cap: usize) -> Result<Self> {
        let n_mus = composition_count(n_agents, n_states);
        if n_mus > cap as u128 {
            return Err(Error::CapExceeded {
                what: "state distribution space",
                size: n_mus,
                cap: cap as u128,
            });
        }
        let cands = CandidateSets::new(n_agents, n_actions, cap.max(1))?;
        let mus: Vec<EmpiricalStateDist> = compositions(n_agents, n_states)
            .into_iter()
            .map(EmpiricalStateDist::new)
            .collect::<Result<_>>()?;
        let mut offsets = Vec::with_capacity(mus.len() + 1);
        let mut total: u128 = 0;
        for mu in &mus {
            offsets.push(total as usize);
            total += mu
                .counts()
                .iter()
                .map(|&n| composition_count(n, n_actions))
                .product::<u128>();
            if total > cap as u128 {
                return Err(Error::CapExceeded {
                    what: "state-action space Xi",
                    size: Self::count(n_states, n_agents, n_actions),
                    cap: cap as u128,
                });
            }
        }
        offsets.push(total as usize);
        let total = total as usize;
        let mut xi_mu = Vec::with_capacity(total);
        let mut xi_cands = Vec::with_capacity(total * n_states);
        for (i, mu) in mus.iter().enumerate() {
            let sizes: Vec<usize> = mu.counts().iter().map(|&n| cands.get(n).len()).collect();
            let mut digits = vec![0usize; n_states];
            for _ in offsets[i]..offsets[i + 1] {
                xi_mu.push(i as u32);
                xi_cands.extend(digits.iter().map(|&d| d as u32));
                for (d, &size) in digits.iter_mut().zip(&sizes) {
                    *d += 1;
                    if *d < size {
                        break;
                    }
                    *d = 0;
                }
            }
        }
        let mu_index = mus.iter().enumerate().map(|(i, m)| (m.counts().to_vec(), i)).collect();
        Ok(Self {
            n_states,
            cands,
            mus,
            mu_index,
            offsets,
            xi_mu,
            xi_cands,
        })
    }

    /// `|Xi|` computed without enumerating `h`.
    pub fn count(n_states: usize, n_agents: u32, n_actions: usize) -> u128 {
        compositions(n_agents, n_states)
            .iter()
            .map(|c| c.iter().map(|&n| composition_count(n, n_actions)).product::<u128>())
            .sum()
    }

    pub fn len(&self) -> usize {
        self.xi_mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi_mu.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_mus(&self) -> usize {
        self.mus.len()
    }

    pub fn candidates(&self) -> &CandidateSets {
        &self.cands
    }

    pub fn mus(&self) -> &[EmpiricalStateDist] {
        &self.mus
    }

    pub fn mu(&self, i: usize) -> &EmpiricalStateDist {
        &self.mus[i]
    }

    pub fn mu_index(&self, counts: &[u32]) -> Option<usize> {
        self.mu_index.get(counts).copied()
    }

    /// Ids of all `(mu_i, h)`.
    pub fn range(&self, mu: usize) -> Range<usize> {
        self.offsets[mu]..self.offsets[mu + 1]
    }

    pub fn mu_of(&self, xi: usize) -> usize {
        self.xi_mu[xi] as usize
    }

    /// Per-state candidate indices of `h` within `P^{N mu(s)}(A)`.
    pub fn cand_indices(&self, xi: usize) -> &[u32] {
        &self.xi_cands[xi * self.n_states..(xi + 1) * self.n_states]
    }

    pub fn h_row(&self, xi: usize, s: usize) -> &[u32] {
        let n = self.mus[self.mu_of(xi)].occupancy(s);
        &self.cands.get(n)[self.cand_indices(xi)[s] as usize]
    }

    pub fn h(&self, xi: usize) -> TeamActionDist {
        TeamActionDist::new((0..self.n_states).map(|s| self.h_row(xi, s).to_vec()).collect())
    }

    pub fn index_of(&self, mu: &EmpiricalStateDist, h: &TeamActionDist) -> Option<usize> {
        let m = self.mu_index(mu.counts())?;
        let mut local = 0usize;
        let mut stride = 1usize;
        for s in 0..self.n_states {
            let n = mu.occupancy(s);
            let idx = self.cands.position(h.row(s))?;
            if h.row(s).iter().sum::<u32>() != n {
                return None;
            }
            local += idx * stride;
            stride *= self.cands.get(n).len();
        }
        Some(self.offsets[m] + local)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line3_sizes() {
        let xi = XiSpace::enumerate(3, 4, 2, DEFAULT_XI_CAP).unwrap();
        assert_eq!(xi.n_mus(), 15);
        assert_eq!(xi.len(), 126);
        assert_eq!(XiSpace::count(3, 4, 2), 126);
        let m = xi.mu_index(&[2, 1, 1]).unwrap();
        assert_eq!(xi.range(m).len(), 12);
    }

    #[test]
    fn index_round_trips() {
        let xi = XiSpace::enumerate(3, 4, 3, DEFAULT_XI_CAP).unwrap();
        for id in 0..xi.len() {
            let mu = xi.mu(xi.mu_of(id)).clone();
            let h = xi.h(id);
            h.check_compatible(&mu).unwrap();
            assert_eq!(xi.index_of(&mu, &h), Some(id));
        }
    }

    #[test]
    fn cap_reports_size() {
        match XiSpace::enumerate(3, 4, 2, 100) {
            Err(Error::CapExceeded { size, .. }) => assert_eq!(size, 126),
            other => panic!("{other:?}"),
        }
    }
}
