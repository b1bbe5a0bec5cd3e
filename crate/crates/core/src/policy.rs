//! Individual policies `pi(a | s, mu(s))`, their multinomial lift to team
//! policies over per-state action counts, Dirac-query recovery, and the
//! neural energy-based team policy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{multinomial_pmf, CandidateSets};
use crate::env::{AgentProfile, EmpiricalStateDist, TeamActionDist};
use crate::error::{Error, Result};
use crate::neural::{centered_feature, encode_into, TwoLayerNet};
use crate::rng::inverse_cdf;

/// Default bound on `|P^n(A)|` for the exact softmax.
pub const DEFAULT_CANDIDATE_CAP: usize = 20_000;

const LIFT_TOL: f64 = 1e-6;
const DRIFT_TOL: f64 = 1e-12;

/// Named individual-decentralized policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IndividualPolicy {
    Uniform,
    /// One fixed action pmf per state.
    Table { probs: Vec<Vec<f64>> },
    /// Action 0 with probability `1 - spread * mu(s)`, the rest shared evenly.
    Crowding { spread: f64 },
}

impl IndividualPolicy {
    pub fn pmf(&self, s: usize, mu_s: f64, n_actions: usize) -> Result<Vec<f64>> {
        let p = match self {
            IndividualPolicy::Uniform => vec![1.0 / n_actions as f64; n_actions],
            IndividualPolicy::Table { probs } => probs.get(s).ok_or(Error::UnknownState(s))?.clone(),
            IndividualPolicy::Crowding { spread } => {
                if n_actions == 1 {
                    vec![1.0]
                } else {
                    let away = spread * mu_s;
                    let mut p = vec![away / (n_actions - 1) as f64; n_actions];
                    p[0] = 1.0 - away;
                    p
                }
            }
        };
        check_pmf(&p, n_actions)?;
        Ok(p)
    }
}

fn check_pmf(p: &[f64], n_actions: usize) -> Result<()> {
    if p.len() != n_actions {
        return Err(Error::DimensionMismatch {
            expected: n_actions,
            got: p.len(),
        });
    }
    let total: f64 = p.iter().sum();
    if p.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > DRIFT_TOL {
        return Err(Error::InvalidPmf(format!("{p:?}")));
    }
    Ok(())
}

/// Multinomial pmf of `(occupancy, pi)` over the candidates `P^occupancy(A)`.
pub fn lift_pmf(pi: &[f64], occupancy: u32, cands: &CandidateSets) -> Result<Vec<f64>> {
    check_pmf(pi, cands.n_actions())?;
    Ok(cands.get(occupancy).iter().map(|c| multinomial_pmf(c, pi)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovered {
    pub probs: Vec<f64>,
    /// Set when the Dirac roots drifted from a unit sum by more than 1e-12
    /// and were renormalized.
    pub renormalized: bool,
}

/// Recovers `pi` from a lifted pmf via `pi(a) = Pi(delta_a n)^(1/n)`.
pub fn recover_individual(pmf: &[f64], occupancy: u32, cands: &CandidateSets) -> Result<Recovered> {
    if occupancy == 0 {
        return Err(Error::ZeroOccupancy(0));
    }
    if pmf.len() != cands.get(occupancy).len() {
        return Err(Error::DimensionMismatch {
            expected: cands.get(occupancy).len(),
            got: pmf.len(),
        });
    }
    let root = 1.0 / occupancy as f64;
    let mut probs: Vec<f64> = (0..cands.n_actions())
        .map(|a| pmf[cands.dirac(occupancy, a)].max(0.0).powf(root))
        .collect();
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > LIFT_TOL {
        return Err(Error::NotALift(format!("Dirac roots sum to {total}")));
    }
    let renormalized = (total - 1.0).abs() > DRIFT_TOL;
    if renormalized {
        probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok(Recovered { probs, renormalized })
}

/// A team-decentralized policy in product form: state `s` draws its action
/// counts from a pmf that depends only on `(s, N mu(s))`.
pub trait TeamPolicy: Sync {
    /// Pmf over `cands.get(occupancy)`.
    fn state_pmf(&self, s: usize, occupancy: u32, n_agents: u32, cands: &CandidateSets) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPolicy {
    pub pi: IndividualPolicy,
}

impl LiftedPolicy {
    pub fn new(pi: IndividualPolicy) -> Self {
        Self { pi }
    }
}

impl TeamPolicy for LiftedPolicy {
    fn state_pmf(&self, s: usize, occupancy: u32, n_agents: u32, cands: &CandidateSets) -> Result<Vec<f64>> {
        let pi = self.pi.pmf(s, occupancy as f64 / n_agents as f64, cands.n_actions())?;
        lift_pmf(&pi, occupancy, cands)
    }
}

/// Per-agent action draws for a profile, agents visited in `(state, index)` order.
pub fn sample_agent_actions<R: Rng + ?Sized>(
    pi: &IndividualPolicy,
    profile: &AgentProfile,
    n_states: usize,
    n_actions: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mu = crate::env::empirical_of(profile, n_states)?;
    let pmfs = (0..n_states)
        .map(|s| pi.pmf(s, mu.share(s), n_actions))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..profile.states.len()).collect();
    order.sort_by_key(|&i| (profile.states[i], i));
    let mut actions = vec![0; profile.states.len()];
    for i in order {
        actions[i] = inverse_cdf(&pmfs[profile.states[i]], rng.random::<f64>());
    }
    Ok(actions)
}

/// Multinomial team action drawn agent by agent; consumes the random stream
/// exactly like [`sample_agent_actions`] on a profile realizing `mu`.
pub fn sample_team_action<R: Rng + ?Sized>(
    pi: &IndividualPolicy,
    mu: &EmpiricalStateDist,
    n_actions: usize,
    rng: &mut R,
) -> Result<TeamActionDist> {
    let mut counts = vec![vec![0u32; n_actions]; mu.n_states()];
    for (s, row) in counts.iter_mut().enumerate() {
        let pmf = pi.pmf(s, mu.share(s), n_actions)?;
        for _ in 0..mu.occupancy(s) {
            row[inverse_cdf(&pmf, rng.random::<f64>())] += 1;
        }
    }
    Ok(TeamActionDist::new(counts))
}

/// Softmax team policy `Pi_s(h(s) | mu(s)) ∝ exp(tau f((mu(s), h(s)); theta_s))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyPolicy {
    pub nets: Vec<TwoLayerNet>,
    pub tau: f64,
}

impl EnergyPolicy {
    /// One net per state with input `(mu(s), h(s))`, dimension `1 + |A|`.
    pub fn init(n_states: usize, n_actions: usize, width: usize, radius: f64, tau: f64, seed: u64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidHyperparameter("tau must be positive".into()));
        }
        let nets = (0..n_states)
            .map(|s| {
                TwoLayerNet::init(
                    width,
                    1 + n_actions,
                    radius,
                    crate::rng::derive_seed(seed, &[crate::rng::tag::ACTOR_INIT, s as u64]),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { nets, tau })
    }

    /// Net inputs for every candidate at occupancy `occupancy`.
    pub fn candidate_inputs(occupancy: u32, n_agents: u32, cands: &CandidateSets) -> Vec<Vec<f64>> {
        let mu_s = [occupancy as f64 / n_agents as f64];
        cands
            .get(occupancy)
            .iter()
            .map(|c| {
                let row: Vec<f64> = if occupancy == 0 {
                    vec![0.0; c.len()]
                } else {
                    c.iter().map(|&k| k as f64 / occupancy as f64).collect()
                };
                let mut x = Vec::new();
                encode_into(&mu_s, std::iter::once(row.as_slice()), &mut x);
                x
            })
            .collect()
    }

    pub fn energies(&self, s: usize, occupancy: u32, n_agents: u32, cands: &CandidateSets) -> Result<Vec<f64>> {
        let net = self.nets.get(s).ok_or(Error::UnknownState(s))?;
        Self::candidate_inputs(occupancy, n_agents, cands)
            .iter()
            .map(|x| net.forward(x).map(|f| self.tau * f))
            .collect()
    }

    /// `tau * Phi`: gradient of `log Pi_s(h | mu(s))` in `theta_s`, where `h`
    /// is candidate `chosen`.
    pub fn log_policy_grad(
        &self,
        s: usize,
        occupancy: u32,
        n_agents: u32,
        chosen: usize,
        cands: &CandidateSets,
    ) -> Result<Vec<f64>> {
        let inputs = Self::candidate_inputs(occupancy, n_agents, cands);
        let pmf = self.state_pmf(s, occupancy, n_agents, cands)?;
        let mut phi = centered_feature(&self.nets[s], &inputs, &pmf, chosen)?;
        phi.iter_mut().for_each(|v| *v *= self.tau);
        Ok(phi)
    }
}

/// Numerically stable softmax.
pub fn softmax(energies: &[f64]) -> Vec<f64> {
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = energies.iter().map(|e| (e - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl TeamPolicy for EnergyPolicy {
    fn state_pmf(&self, s: usize, occupancy: u32, n_agents: u32, cands: &CandidateSets) -> Result<Vec<f64>> {
        Ok(softmax(&self.energies(s, occupancy, n_agents, cands)?))
    }
}

/// Pmfs `Pi_s(. | n)` precomputed for every state and occupancy.
#[derive(Debug, Clone)]
pub struct PolicyTable {
    n_agents: u32,
    pmfs: Vec<Vec<Vec<f64>>>,
}

impl PolicyTable {
    pub fn new<P: TeamPolicy + ?Sized>(policy: &P, n_states: usize, n_agents: u32, cands: &CandidateSets) -> Result<Self> {
        let pmfs = (0..n_states)
            .map(|s| {
                (0..=n_agents)
                    .map(|n| policy.state_pmf(s, n, n_agents, cands))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n_agents, pmfs })
    }

    pub fn n_agents(&self) -> u32 {
        self.n_agents
    }

    pub fn pmf(&self, s: usize, occupancy: u32) -> &[f64] {
        &self.pmfs[s][occupancy as usize]
    }

    /// Per-state inverse-CDF draw of a candidate index; one uniform per state.
    pub fn sample_indices<R: Rng + ?Sized>(&self, mu: &EmpiricalStateDist, rng: &mut R) -> Vec<usize> {
        (0..mu.n_states())
            .map(|s| inverse_cdf(self.pmf(s, mu.occupancy(s)), rng.random::<f64>()))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, mu: &EmpiricalStateDist, cands: &CandidateSets, rng: &mut R) -> TeamActionDist {
        let idx = self.sample_indices(mu, rng);
        TeamActionDist::new(
            idx.iter()
                .enumerate()
                .map(|(s, &i)| cands.get(mu.occupancy(s))[i].clone())
                .collect(),
        )
    }

    /// `Pi(h | mu)` as a product over states.
    pub fn prob(&self, mu: &EmpiricalStateDist, h: &TeamActionDist, cands: &CandidateSets) -> f64 {
        (0..mu.n_states())
            .map(|s| {
                cands
                    .position(h.row(s))
                    .map_or(0.0, |i| self.pmf(s, mu.occupancy(s))[i])
            })
            .product()
    }
}

/// `tau Phi(theta, s, mu, h)` for every occupancy and candidate of one state.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    rows: Vec<Vec<Vec<f64>>>,
}

impl FeatureCache {
    pub fn new(policy: &EnergyPolicy, table: &PolicyTable, s: usize, cands: &CandidateSets) -> Result<Self> {
        let n_agents = table.n_agents();
        let rows = (0..=n_agents)
            .map(|n| {
                let inputs = EnergyPolicy::candidate_inputs(n, n_agents, cands);
                let pmf = table.pmf(s, n);
                (0..inputs.len())
                    .map(|c| {
                        let mut phi = centered_feature(&policy.nets[s], &inputs, pmf, c)?;
                        phi.iter_mut().for_each(|v| *v *= policy.tau);
                        Ok(phi)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn get(&self, occupancy: u32, candidate: usize) -> &[f64] {
        &self.rows[occupancy as usize][candidate]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn cands() -> CandidateSets {
        CandidateSets::new(6, 2, DEFAULT_CANDIDATE_CAP).unwrap()
    }

    #[test]
    fn lift_examples() {
        let c = cands();
        assert_eq!(lift_pmf(&[0.5, 0.5], 2, &c).unwrap(), vec![0.25, 0.5, 0.25]);
        assert_eq!(lift_pmf(&[1.0, 0.0], 3, &c).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(lift_pmf(&[0.3, 0.7], 0, &c).unwrap(), vec![1.0]);
        assert!(lift_pmf(&[0.3, 0.6], 2, &c).is_err());
    }

    #[test]
    fn lift_matches_tuple_enumeration() {
        let c = cands();
        let pi = [0.3, 0.7];
        let mut brute = [0.0; 4];
        for tuple in 0..8u32 {
            let betas = tuple.count_ones();
            let p: f64 = (0..3).map(|i| pi[((tuple >> i) & 1) as usize]).product();
            brute[betas as usize] += p;
        }
        for (x, y) in lift_pmf(&pi, 3, &c).unwrap().iter().zip(brute) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn recovery_examples() {
        let c = cands();
        let r = recover_individual(&lift_pmf(&[0.5, 0.5], 2, &c).unwrap(), 2, &c).unwrap();
        assert_eq!(r.probs, vec![0.5, 0.5]);
        assert!(!r.renormalized);
        let r = recover_individual(&lift_pmf(&[1.0, 0.0], 4, &c).unwrap(), 4, &c).unwrap();
        assert_eq!(r.probs, vec![1.0, 0.0]);
        let r = recover_individual(&lift_pmf(&[0.3, 0.7], 3, &c).unwrap(), 3, &c).unwrap();
        assert!((r.probs[0] - 0.3).abs() <= 1e-12 && (r.probs[1] - 0.7).abs() <= 1e-12);
        assert!(matches!(recover_individual(&[1.0], 0, &c), Err(Error::ZeroOccupancy(_))));
        assert!(matches!(
            recover_individual(&[0.0, 1.0, 0.0], 2, &c),
            Err(Error::NotALift(_))
        ));
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 2f64.ln()]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15 && (p[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(softmax(&[1000.0, 1000.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn energy_policy_limits() {
        let c = cands();
        let mut pol = EnergyPolicy::init(3, 2, 8, 1.0, 1.0, 3).unwrap();
        for net in &mut pol.nets {
            *net = TwoLayerNet::from_parts(3, 1.0, vec![0.0; 24], net.signs().to_vec()).unwrap();
        }
        let p = pol.state_pmf(1, 3, 4, &c).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));

        let cold = EnergyPolicy::init(3, 2, 8, 1.0, 1e-8, 3).unwrap();
        let p = cold.state_pmf(0, 4, 4, &c).unwrap();
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-6));

        let single = cold.log_policy_grad(0, 0, 4, 0, &c).unwrap();
        assert!(single.iter().all(|&v| v == 0.0));
        assert!(matches!(
            EnergyPolicy::init(3, 2, 8, 1.0, 0.0, 3),
            Err(Error::InvalidHyperparameter(_))
        ));
    }

    #[test]
    fn deterministic_and_empty_sampling() {
        let c = cands();
        let mu = EmpiricalStateDist::new(vec![3, 0, 1]).unwrap();
        let pi = IndividualPolicy::Table {
            probs: vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]],
        };
        let h = sample_team_action(&pi, &mu, 2, &mut stream(1, &[])).unwrap();
        assert_eq!(h.counts(), &[vec![3, 0], vec![0, 0], vec![0, 1]]);
        let table = PolicyTable::new(&LiftedPolicy::new(pi), 3, 4, &c).unwrap();
        let h2 = table.sample(&mu, &c, &mut stream(2, &[]));
        assert_eq!(h2, h);
        assert_eq!(table.prob(&mu, &h, &c), 1.0);
    }

    #[test]
    fn agent_and_team_draws_agree() {
        let pi = IndividualPolicy::Crowding { spread: 0.8 };
        let profile = AgentProfile::new(vec![2, 0, 1, 0, 2, 2]);
        let mu = crate::env::empirical_of(&profile, 3).unwrap();
        for seed in 0..20 {
            let actions = sample_agent_actions(&pi, &profile, 3, 2, &mut stream(seed, &[])).unwrap();
            let agent_h = crate::env::team_dist_of(&profile.clone().with_actions(actions), 3, 2).unwrap();
            let team_h = sample_team_action(&pi, &mu, 2, &mut stream(seed, &[])).unwrap();
            assert_eq!(agent_h, team_h);
        }
    }

    proptest! {
        #[test]
        fn lift_properties(raw in prop::collection::vec(0.0f64..1.0, 3), n in 1u32..6) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-3);
            let total: f64 = raw.iter().sum();
            let pi: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let c = CandidateSets::new(6, 3, DEFAULT_CANDIDATE_CAP).unwrap();
            let pmf = lift_pmf(&pi, n, &c).unwrap();
            prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for a in 0..3 {
                let mean: f64 = c.get(n).iter().zip(&pmf).map(|(h, p)| p * h[a] as f64 / n as f64).sum();
                prop_assert!((mean - pi[a]).abs() <= 1e-12);
            }
            let back = recover_individual(&pmf, n, &c).unwrap();
            for (x, y) in back.probs.iter().zip(&pi) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn softmax_shift_invariant(e in prop::collection::vec(-20.0f64..20.0, 1..10), shift in -100.0f64..100.0) {
            let shifted: Vec<f64> = e.iter().map(|x| x + shift).collect();
            for (a, b) in softmax(&e).iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn log_grad_matches_finite_differences(seed in 0u64..500, occ in 1u32..5, chosen_raw in 0usize..100) {
            let c = cands();
            let pol = EnergyPolicy::init(1, 2, 6, 1.0, 1.5, seed).unwrap();
            let chosen = chosen_raw % c.get(occ).len();
            let inputs = EnergyPolicy::candidate_inputs(occ, 4, &c);
            let net = &pol.nets[0];
            let near_kink = inputs.iter().any(|x| {
                (0..net.width()).any(|m| {
                    let z: f64 = net.weights()[m * 3..m * 3 + 3].iter().zip(x).map(|(w, v)| w * v).sum();
                    z.abs() < 1e-4
                })
            });
            prop_assume!(!near_kink);
            let grad = pol.log_policy_grad(0, occ, 4, chosen, &c).unwrap();
            prop_assert!(crate::neural::l2_norm(&grad) <= 2.0 * pol.tau + 1e-12);
            let logp = |w: &[f64]| {
                let mut p = pol.clone();
                p.nets[0] = TwoLayerNet::from_parts(3, 1.0, w.to_vec(), net.signs().to_vec()).unwrap();
                p.state_pmf(0, occ, 4, &c).unwrap()[chosen].ln()
            };
            let h = 1e-6;
            let mut diff2 = 0.0;
            for i in 0..grad.len() {
                let mut plus = net.weights().to_vec();
                plus[i] += h;
                let mut minus = net.weights().to_vec();
                minus[i] -= h;
                let fd = (logp(&plus) - logp(&minus)) / (2.0 * h);
                diff2 += (fd - grad[i]).powi(2);
            }
            prop_assert!(diff2.sqrt() <= 1e-5 * crate::neural::l2_norm(&grad).max(1e-6));
        }
    }
}
