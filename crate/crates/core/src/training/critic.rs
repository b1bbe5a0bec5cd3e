use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{Sampler, TransitionTuple};
use crate::env::{window_view, EmpiricalStateDist, MeanFieldEnv, TeamActionDist};
use crate::error::{Error, Result};
use crate::graph::Window;
use crate::neural::{input_dim, TwoLayerNet};
use crate::rng::{derive_seed, stream, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    pub width: usize,
    pub radius: f64,
    /// `T_critic`; the loop performs `T_critic - 1` updates.
    pub iterations: usize,
    /// Defaults to `min((1 - gamma) / 8, T_critic^(-1/2))`.
    pub eta: Option<f64>,
    pub k: usize,
    pub burn_in: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            width: 512,
            radius: 2.0,
            iterations: 20_000,
            eta: None,
            k: 2,
            burn_in: super::DEFAULT_BURN_IN,
        }
    }
}

impl CriticConfig {
    pub fn step_size(&self, gamma: f64) -> f64 {
        self.eta
            .unwrap_or_else(|| ((1.0 - gamma) / 8.0).min(1.0 / (self.iterations.max(1) as f64).sqrt()))
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.iterations == 0 {
            return Err(Error::InvalidHyperparameter("critic width and iterations must be positive".into()));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::InvalidHyperparameter("critic radius must be nonnegative".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::InvalidHyperparameter("critic step size must be positive".into()));
            }
        }
        Ok(())
    }
}

/// TD residual `delta = Q(zeta) - r - gamma Q(zeta')`.
pub fn residual(q: f64, reward: f64, gamma: f64, q_next: f64) -> f64 {
    q - reward - gamma * q_next
}

/// Per-state critic nets `omega_s` with their running averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticState {
    pub windows: Vec<Window>,
    pub nets: Vec<TwoLayerNet>,
    /// Averaged weights `omega_bar_s`, kept inside the projection box by convexity.
    pub averages: Vec<TwoLayerNet>,
    pub steps: usize,
    /// Mean squared TD residual per state.
    pub loss: Vec<f64>,
    n_agents: u32,
    n_actions: usize,
}

/// Net input `zeta^k` decoded from a window view of counts.
pub(crate) fn encode_view(view: &[u32], n_agents: u32, n_actions: usize, out: &mut Vec<f64>) {
    let stride = 1 + n_actions;
    let members = view.len() / stride;
    let outer = std::f64::consts::FRAC_1_SQRT_2;
    let inner = outer / (members.max(1) as f64).sqrt();
    out.clear();
    out.extend((0..members).map(|i| view[i * stride] as f64 / n_agents as f64 * outer));
    for i in 0..members {
        let occ = view[i * stride];
        for a in 0..n_actions {
            let c = view[i * stride + 1 + a];
            out.push(if occ == 0 { 0.0 } else { c as f64 / occ as f64 * inner });
        }
    }
}

impl CriticState {
    pub fn init(env: &MeanFieldEnv, cfg: &CriticConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let windows: Vec<Window> = (0..env.n_states())
            .map(|s| env.graph().k_hop(s, cfg.k))
            .collect::<Result<_>>()?;
        let nets: Vec<TwoLayerNet> = windows
            .iter()
            .enumerate()
            .map(|(s, w)| {
                TwoLayerNet::init(
                    cfg.width,
                    input_dim(w.len(), env.n_actions()),
                    cfg.radius,
                    derive_seed(seed, &[tag::CRITIC_INIT, s as u64]),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            windows,
            averages: nets.clone(),
            nets,
            steps: 0,
            loss: vec![0.0; env.n_states()],
            n_agents: env.n_agents(),
            n_actions: env.n_actions(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.windows.len()
    }

    /// `Q_s(zeta^k_s; omega_bar_s)` from the counts visible in `N^k_s`.
    pub fn value_of_view(&self, s: usize, view: &[u32]) -> f64 {
        let mut x = Vec::new();
        encode_view(view, self.n_agents, self.n_actions, &mut x);
        self.averages[s].forward_unchecked(&x)
    }

    pub fn value(&self, s: usize, mu: &EmpiricalStateDist, h: &TeamActionDist) -> f64 {
        self.value_of_view(s, &window_view(mu, h, &self.windows[s]))
    }

    /// Runs the projected semigradient TD updates for state `s` over the
    /// shared tuples. Reads only the `N^k_s` window of each tuple.
    pub fn train_state(&mut self, s: usize, tuples: &[TransitionTuple], gamma: f64, eta: f64) {
        let window = &self.windows[s];
        let (n_agents, n_actions) = (self.n_agents, self.n_actions);
        let net = &mut self.nets[s];
        let mut avg = self.averages[s].weights().to_vec();
        let mut count = self.steps as f64 + 1.0;
        let mut loss = self.loss[s] * self.steps as f64;
        let (mut x, mut x_next) = (Vec::new(), Vec::new());
        for t in tuples {
            encode_view(&window_view(&t.mu, &t.h, window), n_agents, n_actions, &mut x);
            encode_view(&window_view(&t.mu_next, &t.h_next, window), n_agents, n_actions, &mut x_next);
            let delta = residual(net.forward_unchecked(&x), t.rewards[s], gamma, net.forward_unchecked(&x_next));
            loss += delta * delta;
            net.feature_step_projected(&x, -eta * delta);
            count += 1.0;
            for (a, w) in avg.iter_mut().zip(net.weights()) {
                *a += (w - *a) / count;
            }
        }
        let steps = self.steps + tuples.len();
        self.loss[s] = if steps == 0 { 0.0 } else { loss / steps as f64 };
        self.averages[s] = self.averages[s].project_ball(&avg).expect("average has the net's shape");
    }

    /// Applies the shared tuples to every state in parallel.
    pub fn train(&mut self, tuples: &[TransitionTuple], gamma: f64, eta: f64) {
        let snapshot: Vec<CriticState> = (0..self.n_states())
            .into_par_iter()
            .map(|s| {
                let mut single = self.clone();
                single.train_state(s, tuples, gamma, eta);
                single
            })
            .collect();
        for (s, trained) in snapshot.into_iter().enumerate() {
            self.nets[s] = trained.nets[s].clone();
            self.averages[s] = trained.averages[s].clone();
            self.loss[s] = trained.loss[s];
        }
        self.steps += tuples.len();
    }
}

/// Localized neural TD: `T_critic - 1` shared stationary tuples, one
/// projected semigradient step per state per tuple, averaged output.
pub fn critic_train(sampler: &Sampler<'_>, cfg: &CriticConfig, seed: u64) -> Result<CriticState> {
    let env = sampler.env;
    let mut state = CriticState::init(env, cfg, seed)?;
    let mut rng = stream(seed, &[tag::STATIONARY]);
    let tuples = (0..cfg.iterations - 1)
        .map(|_| sampler.stationary_tuple(cfg.burn_in, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    state.train(&tuples, env.gamma(), cfg.step_size(env.gamma()));
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::CandidateSets;
    use crate::env::{InitialDist, ModelSpec, TeamRewardForm};
    use crate::graph::StateGraph;
    use crate::neural::encode_input;
    use crate::policy::{IndividualPolicy, LiftedPolicy, PolicyTable, DEFAULT_CANDIDATE_CAP};

    #[test]
    fn residual_arithmetic() {
        assert!((residual(0.4, 0.75, 0.5, 0.2) + 0.45).abs() < 1e-15);
    }

    #[test]
    fn default_step_size() {
        let cfg = CriticConfig {
            width: 4,
            radius: 1.0,
            iterations: 20_000,
            eta: None,
            k: 1,
            burn_in: 10,
        };
        assert!((cfg.step_size(0.5) - 1.0 / 20_000f64.sqrt()).abs() < 1e-15);
        let short = CriticConfig { iterations: 4, ..cfg };
        assert_eq!(short.step_size(0.5), 0.0625);
    }

    #[test]
    fn view_encoding_matches_direct_encoding() {
        let mu = EmpiricalStateDist::new(vec![2, 1, 1]).unwrap();
        let h = TeamActionDist::new(vec![vec![1, 1], vec![0, 1], vec![1, 0]]);
        let g = StateGraph::line(3);
        let w = g.k_hop(0, 1).unwrap();
        let mut x = Vec::new();
        encode_view(&window_view(&mu, &h, &w), 4, 2, &mut x);
        let direct = encode_input(&[0.5, 0.25], &[h.proportions(0), h.proportions(1)]);
        assert_eq!(x, direct);
    }

    fn constant_setup() -> (MeanFieldEnv, CandidateSets, PolicyTable, InitialDist) {
        let mut model = ModelSpec::line3();
        model.team_reward = TeamRewardForm::Constant {
            values: vec![0.2, 0.5, 0.1],
        };
        let env = MeanFieldEnv::new(StateGraph::line(3), model).unwrap();
        let cands = CandidateSets::new(4, 2, DEFAULT_CANDIDATE_CAP).unwrap();
        let table = PolicyTable::new(&LiftedPolicy::new(IndividualPolicy::Uniform), 3, 4, &cands).unwrap();
        (env, cands, table, InitialDist::point(vec![2, 1, 1]))
    }

    #[test]
    fn averages_and_box_invariants() {
        let (env, cands, table, initial) = constant_setup();
        let sampler = Sampler::new(&env, &table, &cands, &initial);
        let cfg = CriticConfig {
            width: 8,
            radius: 0.5,
            iterations: 51,
            eta: Some(0.2),
            k: 1,
            burn_in: 5,
        };
        let mut rng = stream(1, &[]);
        let tuples: Vec<_> = (0..50).map(|_| sampler.stationary_tuple(5, &mut rng).unwrap()).collect();
        let mut state = CriticState::init(&env, &cfg, 3).unwrap();
        let mut iterates = vec![state.nets[1].weights().to_vec()];
        for chunk in tuples.chunks(1) {
            let mut probe = state.clone();
            probe.train_state(1, chunk, 0.5, 0.2);
            iterates.push(probe.nets[1].weights().to_vec());
            state.train(chunk, 0.5, 0.2);
            for net in state.nets.iter().chain(&state.averages) {
                assert!(net.max_deviation() <= net.box_half_width() + 1e-15);
            }
        }
        let mean: Vec<f64> = (0..iterates[0].len())
            .map(|i| iterates.iter().map(|w| w[i]).sum::<f64>() / iterates.len() as f64)
            .collect();
        for (a, b) in state.averages[1].weights().iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut sequential = CriticState::init(&env, &cfg, 3).unwrap();
        for s in [2, 0, 1] {
            sequential.train_state(s, &tuples, 0.5, 0.2);
        }
        let mut parallel = CriticState::init(&env, &cfg, 3).unwrap();
        parallel.train(&tuples, 0.5, 0.2);
        assert_eq!(sequential.nets, parallel.nets);
        assert_eq!(sequential.averages, parallel.averages);
    }
}
