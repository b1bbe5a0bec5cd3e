use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::critic::{critic_train, CriticConfig};
use super::ghat::ghat;
use super::sampler::Sampler;
use crate::combinatorics::CandidateSets;
use crate::env::{InitialDist, MeanFieldEnv};
use crate::error::{Error, Result};
use crate::neural::l2_norm;
use crate::oracle::{Oracle, DEFAULT_TOL};
use crate::policy::{EnergyPolicy, FeatureCache, PolicyTable, DEFAULT_CANDIDATE_CAP};
use crate::rng::{derive_seed, stream, tag};

/// Missing keys take the [`Default`] values, whose step sizes follow the
/// `T^(-1/2)` schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActorConfig {
    pub width: usize,
    pub radius: f64,
    pub tau: f64,
    /// `T_actor`.
    pub iterations: usize,
    pub batch: usize,
    /// Defaults to `T_actor^(-1/2)`.
    pub eta: Option<f64>,
    pub k: usize,
    pub critic: CriticConfig,
    pub restarts: f64,
    pub candidate_cap: usize,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            width: 16,
            radius: 4.0,
            tau: 5.0,
            iterations: 50,
            batch: 256,
            eta: None,
            k: 2,
            critic: CriticConfig::default(),
            restarts: super::DEFAULT_RESTARTS,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
        }
    }
}

impl ActorConfig {
    pub fn step_size(&self) -> f64 {
        self.eta.unwrap_or_else(|| 1.0 / (self.iterations.max(1) as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorRecord {
    pub iteration: usize,
    /// Exact `J(theta(t))` when an oracle is attached, otherwise a Monte Carlo
    /// estimate every tenth iteration and at the end.
    pub j: Option<f64>,
    pub j_exact: bool,
    pub critic_loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorRun {
    pub records: Vec<ActorRecord>,
    pub thetas: Vec<EnergyPolicy>,
    /// Iterate with the largest logged `J`.
    pub best_iteration: Option<usize>,
}

impl ActorRun {
    pub fn best_j(&self) -> Option<f64> {
        self.best_iteration.and_then(|t| self.records[t].j)
    }

    pub fn final_policy(&self) -> &EnergyPolicy {
        self.thetas.last().expect("run holds the initial policy")
    }
}

/// Discounted team return averaged over `rollouts` trajectories from `P_0`.
pub fn monte_carlo_j<R: Rng + ?Sized>(
    sampler: &Sampler<'_>,
    rollouts: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let gamma = sampler.env.gamma();
    let mut returns = Vec::with_capacity(rollouts);
    for _ in 0..rollouts {
        let (mut mu, mut h) = sampler.initial_pair(rng);
        let mut total = 0.0;
        let mut discount = 1.0;
        for _ in 0..horizon {
            total += discount * sampler.env.team_rewards(&mu, &h).iter().sum::<f64>();
            discount *= gamma;
            (mu, h) = sampler.step(&mu, &h, rng)?;
        }
        returns.push(total);
    }
    let n = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

fn mc_horizon(gamma: f64) -> usize {
    if gamma <= 0.0 {
        1
    } else {
        ((1e-6f64).ln() / gamma.ln()).ceil().max(1.0) as usize
    }
}

/// Localized neural actor-critic. `J(theta(t))` is logged for `t = 0..=T_actor`.
pub fn actor_train(
    env: &MeanFieldEnv,
    initial: &InitialDist,
    cfg: &ActorConfig,
    seed: u64,
    oracle: Option<&Oracle>,
) -> Result<ActorRun> {
    if cfg.batch == 0 {
        return Err(Error::InvalidHyperparameter("batch size must be positive".into()));
    }
    if cfg.critic.k != cfg.k {
        return Err(Error::InvalidHyperparameter("critic and actor must share k".into()));
    }
    let cands = CandidateSets::new(env.n_agents(), env.n_actions(), cfg.candidate_cap)?;
    let mut theta = EnergyPolicy::init(env.n_states(), env.n_actions(), cfg.width, cfg.radius, cfg.tau, seed)?;
    let eta = cfg.step_size();
    let gamma = env.gamma();
    let mut thetas = vec![theta.clone()];
    let mut records = Vec::with_capacity(cfg.iterations + 1);
    for t in 0..=cfg.iterations {
        let table = PolicyTable::new(&theta, env.n_states(), env.n_agents(), &cands)?;
        let sampler = Sampler::new(env, &table, &cands, initial);
        let (j, j_exact) = match oracle {
            Some(o) => (Some(o.j(&o.policy_weights(&table), DEFAULT_TOL)?), true),
            None if t % 10 == 0 || t == cfg.iterations => {
                let mut rng = stream(seed, &[tag::MONTE_CARLO, t as u64]);
                (Some(monte_carlo_j(&sampler, 100, mc_horizon(gamma), &mut rng)?.0), false)
            }
            None => (None, false),
        };
        if t == cfg.iterations {
            records.push(ActorRecord {
                iteration: t,
                j,
                j_exact,
                critic_loss: Vec::new(),
                grad_norm: Vec::new(),
            });
            break;
        }
        let critic = critic_train(&sampler, &cfg.critic, derive_seed(seed, &[tag::CRITIC_INIT, t as u64]))?;
        let mut rng = stream(seed, &[tag::VISITATION, t as u64]);
        let batch = (0..cfg.batch)
            .map(|_| sampler.visitation_pair(cfg.restarts, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let grads = (0..env.n_states())
            .into_par_iter()
            .map(|s| {
                let features = FeatureCache::new(&theta, &table, s, &cands)?;
                ghat(&critic, &features, env.graph(), &cands, s, cfg.k, gamma, &batch)
            })
            .collect::<Result<Vec<_>>>()?;
        for (net, g) in theta.nets.iter_mut().zip(&grads) {
            net.step_projected(g, eta)?;
        }
        records.push(ActorRecord {
            iteration: t,
            j,
            j_exact,
            critic_loss: critic.loss.clone(),
            grad_norm: grads.iter().map(|g| l2_norm(g)).collect(),
        });
        thetas.push(theta.clone());
    }
    let best_iteration = records
        .iter()
        .filter_map(|r| r.j.map(|j| (r.iteration, j)))
        .fold(None, |best: Option<(usize, f64)>, (t, j)| match best {
            Some((_, bj)) if bj >= j => best,
            _ => Some((t, j)),
        })
        .map(|(t, _)| t);
    Ok(ActorRun {
        records,
        thetas,
        best_iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ModelSpec, TeamRewardForm};
    use crate::graph::StateGraph;
    use crate::oracle::DEFAULT_XI_CAP;

    fn small_cfg() -> ActorConfig {
        ActorConfig {
            width: 8,
            radius: 1.0,
            tau: 1.0,
            iterations: 2,
            batch: 16,
            eta: None,
            k: 1,
            critic: CriticConfig {
                width: 8,
                radius: 1.0,
                iterations: 30,
                eta: None,
                k: 1,
                burn_in: 10,
            },
            restarts: 10.0,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
        }
    }

    #[test]
    fn constant_model_keeps_flat_j() {
        let mut model = ModelSpec::line3();
        model.team_reward = TeamRewardForm::Constant {
            values: vec![0.25, 0.25, 0.25],
        };
        let env = MeanFieldEnv::new(StateGraph::line(3), model).unwrap();
        let initial = InitialDist::point(vec![2, 1, 1]);
        let oracle = Oracle::new(env.clone(), &initial, DEFAULT_XI_CAP).unwrap();
        let run = actor_train(&env, &initial, &small_cfg(), 3, Some(&oracle)).unwrap();
        assert_eq!(run.records.len(), 3);
        assert_eq!(run.thetas.len(), 3);
        for r in &run.records {
            assert!((r.j.unwrap() - 1.5).abs() < 1e-7);
        }
        for theta in &run.thetas {
            for net in &theta.nets {
                assert!(net.max_deviation() <= net.box_half_width() + 1e-15);
            }
        }
    }

    #[test]
    fn seeded_runs_repeat_without_oracle() {
        let env = MeanFieldEnv::new(StateGraph::line(3), ModelSpec::line3()).unwrap();
        let initial = InitialDist::point(vec![2, 1, 1]);
        let a = actor_train(&env, &initial, &small_cfg(), 8, None).unwrap();
        let b = actor_train(&env, &initial, &small_cfg(), 8, None).unwrap();
        assert_eq!(a, b);
        assert!(a.records[0].j.is_some() && !a.records[0].j_exact);
        assert!(a.records[1].j.is_none());
    }
}
