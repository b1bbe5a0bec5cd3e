//! The networked mean-field environment: empirical distributions, the
//! individual-agent dynamics, the induced team-level step, and localized
//! team rewards.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{composition_count, compositions};
use crate::error::{Error, Result};
use crate::graph::{restrict, StateGraph, Window};
use crate::rng::inverse_cdf;

const PMF_TOL: f64 = 1e-12;

/// Occupancy counts of `N` agents over the states.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmpiricalStateDist {
    counts: Vec<u32>,
    n_agents: u32,
}

impl EmpiricalStateDist {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        let n_agents: u32 = counts.iter().sum();
        if n_agents == 0 {
            return Err(Error::Incompatible("state distribution needs at least one agent".into()));
        }
        Ok(Self { counts, n_agents })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n_agents(&self) -> u32 {
        self.n_agents
    }

    pub fn n_states(&self) -> usize {
        self.counts.len()
    }

    pub fn occupancy(&self, s: usize) -> u32 {
        self.counts[s]
    }

    /// `mu(s) = counts[s] / N`.
    pub fn share(&self, s: usize) -> f64 {
        self.counts[s] as f64 / self.n_agents as f64
    }

    pub fn shares(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|s| self.share(s)).collect()
    }
}

/// Per-state action counts of the agents currently in each state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TeamActionDist {
    counts: Vec<Vec<u32>>,
}

impl TeamActionDist {
    pub fn new(counts: Vec<Vec<u32>>) -> Self {
        Self { counts }
    }

    /// Everyone takes action `action`.
    pub fn uniform_action(mu: &EmpiricalStateDist, n_actions: usize, action: usize) -> Self {
        let counts = mu
            .counts()
            .iter()
            .map(|&c| {
                let mut row = vec![0; n_actions];
                row[action] = c;
                row
            })
            .collect();
        Self { counts }
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }

    pub fn row(&self, s: usize) -> &[u32] {
        &self.counts[s]
    }

    /// `h(s)` as proportions; all zeros for an empty state.
    pub fn proportions(&self, s: usize) -> Vec<f64> {
        let row = &self.counts[s];
        let total: u32 = row.iter().sum();
        if total == 0 {
            return vec![0.0; row.len()];
        }
        row.iter().map(|&c| c as f64 / total as f64).collect()
    }

    pub fn check_compatible(&self, mu: &EmpiricalStateDist) -> Result<()> {
        if self.counts.len() != mu.n_states() {
            return Err(Error::Incompatible(format!(
                "h covers {} states, mu covers {}",
                self.counts.len(),
                mu.n_states()
            )));
        }
        let width = self.counts.first().map_or(0, Vec::len);
        for (s, row) in self.counts.iter().enumerate() {
            let total: u32 = row.iter().sum();
            if row.len() != width || total != mu.occupancy(s) {
                return Err(Error::Incompatible(format!(
                    "state {s}: action counts sum to {total}, occupancy is {}",
                    mu.occupancy(s)
                )));
            }
        }
        Ok(())
    }
}

/// Agent-level state (and optionally action) profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub states: Vec<usize>,
    pub actions: Option<Vec<usize>>,
}

impl AgentProfile {
    pub fn new(states: Vec<usize>) -> Self {
        Self { states, actions: None }
    }

    /// Canonical profile realizing `mu`: agents listed state by state.
    pub fn from_dist(mu: &EmpiricalStateDist) -> Self {
        let states = mu
            .counts()
            .iter()
            .enumerate()
            .flat_map(|(s, &c)| std::iter::repeat_n(s, c as usize))
            .collect();
        Self::new(states)
    }

    pub fn with_actions(mut self, actions: Vec<usize>) -> Self {
        self.actions = Some(actions);
        self
    }
}

pub fn empirical_of(profile: &AgentProfile, n_states: usize) -> Result<EmpiricalStateDist> {
    let mut counts = vec![0u32; n_states];
    for &s in &profile.states {
        *counts.get_mut(s).ok_or(Error::UnknownState(s))? += 1;
    }
    EmpiricalStateDist::new(counts)
}

pub fn team_dist_of(profile: &AgentProfile, n_states: usize, n_actions: usize) -> Result<TeamActionDist> {
    let actions = profile
        .actions
        .as_ref()
        .ok_or_else(|| Error::Incompatible("profile has no actions".into()))?;
    if actions.len() != profile.states.len() {
        return Err(Error::Incompatible("state and action profiles differ in length".into()));
    }
    let mut counts = vec![vec![0u32; n_actions]; n_states];
    for (&s, &a) in profile.states.iter().zip(actions) {
        if a >= n_actions {
            return Err(Error::Incompatible(format!("action index {a} out of range")));
        }
        *counts
            .get_mut(s)
            .ok_or(Error::UnknownState(s))?
            .get_mut(a)
            .unwrap() += 1;
    }
    Ok(TeamActionDist::new(counts))
}

/// Counts visible through a window: for each member `t`, `N mu(t)` followed
/// by the action counts of `t`.
pub fn window_view(mu: &EmpiricalStateDist, h: &TeamActionDist, window: &Window) -> Vec<u32> {
    let mut view = Vec::with_capacity(window.len() * (1 + h.row(0).len()));
    for &t in &window.members {
        view.push(mu.occupancy(t));
        view.extend_from_slice(h.row(t));
    }
    view
}

fn one() -> f64 {
    1.0
}

/// Built-in individual reward functions `r(s, mu(N_s), a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RewardFn {
    /// `base - weight * mu(s)`.
    Congestion {
        #[serde(default = "one")]
        base: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    /// `base - weight * sum_{t in N_s} mu(t)`.
    LocalCrowding {
        #[serde(default = "one")]
        base: f64,
        #[serde(default = "one")]
        weight: f64,
    },
    /// `value * 1{a = action}`.
    ActionIndicator {
        action: usize,
        #[serde(default = "one")]
        value: f64,
    },
    Constant { value: f64 },
}

impl RewardFn {
    /// `center` is the position of `s` inside the 1-hop window.
    fn eval(&self, center: usize, mu_window: &[f64], action: usize) -> f64 {
        match *self {
            RewardFn::Congestion { base, weight } => base - weight * mu_window[center],
            RewardFn::LocalCrowding { base, weight } => base - weight * mu_window.iter().sum::<f64>(),
            RewardFn::ActionIndicator { action: target, value } => {
                if action == target {
                    value
                } else {
                    0.0
                }
            }
            RewardFn::Constant { value } => value,
        }
    }
}

/// Built-in individual transition kernels `P(. | s, mu(N_s), a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelFn {
    /// Action 0 stays; any other action moves uniformly to a neighbor.
    StaySpread,
    /// Action 0 stays; action `j >= 1` heads for neighbor `(j - 1) mod deg`
    /// and arrives with probability `success`.
    Drift { success: f64 },
    /// Action 0 stays; other actions move to a neighbor `t` with weight
    /// `1 - mu(t) + floor`.
    AvoidCrowd {
        #[serde(default)]
        floor: f64,
    },
    /// Uniform jump to any state. Violates locality; rejected by validation.
    Teleport,
}

impl KernelFn {
    fn eval(&self, s: usize, window: &Window, mu_window: &[f64], action: usize, n_states: usize) -> Vec<(usize, f64)> {
        let neighbors: Vec<(usize, usize)> = window
            .members
            .iter()
            .enumerate()
            .filter(|&(_, &t)| t != s)
            .map(|(pos, &t)| (pos, t))
            .collect();
        if action == 0 && !matches!(self, KernelFn::Teleport) {
            return vec![(s, 1.0)];
        }
        match *self {
            KernelFn::StaySpread => {
                if neighbors.is_empty() {
                    return vec![(s, 1.0)];
                }
                let p = 1.0 / neighbors.len() as f64;
                neighbors.iter().map(|&(_, t)| (t, p)).collect()
            }
            KernelFn::Drift { success } => {
                if neighbors.is_empty() {
                    return vec![(s, 1.0)];
                }
                let target = neighbors[(action - 1) % neighbors.len()].1;
                let mut out = vec![(s, 1.0 - success), (target, success)];
                out.sort_unstable_by_key(|&(t, _)| t);
                out
            }
            KernelFn::AvoidCrowd { floor } => {
                if neighbors.is_empty() {
                    return vec![(s, 1.0)];
                }
                let weights: Vec<f64> = neighbors.iter().map(|&(pos, _)| 1.0 - mu_window[pos] + floor).collect();
                let total: f64 = weights.iter().sum();
                neighbors.iter().zip(&weights).map(|(&(_, t), &w)| (t, w / total)).collect()
            }
            KernelFn::Teleport => {
                let p = 1.0 / n_states as f64;
                (0..n_states).map(|t| (t, p)).collect()
            }
        }
    }
}

/// How the per-team stage reward driving `Q_s` is formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TeamRewardForm {
    /// `mu(s) * r_s(mu(N_s), h(s))`; summing over teams gives the agent-average reward.
    #[default]
    Weighted,
    /// A fixed reward per team, independent of the configuration.
    Constant { values: Vec<f64> },
}

/// Distribution `P_0` over initial state distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPoint {
    pub counts: Vec<u32>,
    #[serde(default = "one")]
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InitialDist {
    pub points: Vec<InitialPoint>,
}

impl InitialDist {
    pub fn point(counts: Vec<u32>) -> Self {
        Self {
            points: vec![InitialPoint { counts, weight: 1.0 }],
        }
    }

    pub fn validate(&self, n_states: usize, n_agents: u32) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidModel("initial distribution is empty".into()));
        }
        let total: f64 = self.points.iter().map(|p| p.weight).sum();
        for p in &self.points {
            if p.counts.len() != n_states || p.counts.iter().sum::<u32>() != n_agents || p.weight < 0.0 {
                return Err(Error::InvalidModel(format!("bad initial point {:?}", p.counts)));
            }
        }
        if !(total > 0.0) {
            return Err(Error::InvalidModel("initial weights sum to zero".into()));
        }
        Ok(())
    }

    pub fn normalized(&self) -> Vec<(EmpiricalStateDist, f64)> {
        let total: f64 = self.points.iter().map(|p| p.weight).sum();
        self.points
            .iter()
            .map(|p| (EmpiricalStateDist::new(p.counts.clone()).unwrap(), p.weight / total))
            .collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> EmpiricalStateDist {
        let normalized = self.normalized();
        let weights: Vec<f64> = normalized.iter().map(|(_, w)| *w).collect();
        let idx = inverse_cdf(&weights, rng.random::<f64>());
        normalized[idx].0.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub n_agents: u32,
    pub actions: Vec<String>,
    pub gamma: f64,
    pub r_max: f64,
    pub reward: RewardFn,
    pub kernel: KernelFn,
    #[serde(default)]
    pub team_reward: TeamRewardForm,
}

impl ModelSpec {
    /// The canonical `line3` instance: stay/spread dynamics, congestion reward,
    /// `gamma = 0.5`, `N = 4`.
    pub fn line3() -> Self {
        Self {
            n_agents: 4,
            actions: vec!["stay".into(), "move".into()],
            gamma: 0.5,
            r_max: 1.0,
            reward: RewardFn::Congestion { base: 1.0, weight: 1.0 },
            kernel: KernelFn::StaySpread,
            team_reward: TeamRewardForm::Weighted,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }
}

/// A validated model bound to its state graph.
#[derive(Debug, Clone)]
pub struct MeanFieldEnv {
    graph: StateGraph,
    model: ModelSpec,
    one_hop: Vec<Window>,
}

/// Exhaustive model validation is skipped above this many state distributions.
pub const VALIDATION_CAP: u128 = 200_000;

impl MeanFieldEnv {
    pub fn new(graph: StateGraph, model: ModelSpec) -> Result<Self> {
        if !(0.0..1.0).contains(&model.gamma) {
            return Err(Error::InvalidModel(format!("gamma = {} outside [0, 1)", model.gamma)));
        }
        if !(model.r_max > 0.0) {
            return Err(Error::InvalidModel("r_max must be positive".into()));
        }
        if model.n_agents == 0 || model.actions.is_empty() || graph.n_states() == 0 {
            return Err(Error::InvalidModel("need at least one agent, action and state".into()));
        }
        match &model.reward {
            RewardFn::ActionIndicator { action, .. } if *action >= model.n_actions() => {
                return Err(Error::InvalidModel(format!("indicator action {action} out of range")));
            }
            _ => {}
        }
        match &model.kernel {
            KernelFn::Drift { success } if !(0.0..=1.0).contains(success) => {
                return Err(Error::InvalidModel("drift success must lie in [0, 1]".into()));
            }
            KernelFn::AvoidCrowd { floor } if *floor < 0.0 => {
                return Err(Error::InvalidModel("avoid-crowd floor must be nonnegative".into()));
            }
            _ => {}
        }
        if let TeamRewardForm::Constant { values } = &model.team_reward {
            if values.len() != graph.n_states() || values.iter().any(|v| v.abs() > model.r_max) {
                return Err(Error::InvalidModel("constant team rewards need one value per state, within r_max".into()));
            }
        }
        let one_hop = (0..graph.n_states()).map(|s| graph.k_hop(s, 1)).collect::<Result<_>>()?;
        let env = Self { graph, model, one_hop };
        env.validate_exhaustive()?;
        Ok(env)
    }

    /// Checks kernel support/normalization and the reward bound for every
    /// state distribution, state and action (skipped for very large instances).
    fn validate_exhaustive(&self) -> Result<()> {
        let n = self.model.n_agents;
        let n_states = self.n_states();
        if composition_count(n, n_states) > VALIDATION_CAP {
            return Ok(());
        }
        for counts in compositions(n, n_states) {
            let mu = EmpiricalStateDist::new(counts)?;
            for s in 0..n_states {
                for a in 0..self.n_actions() {
                    self.kernel_pmf(s, &mu, a)?;
                    self.checked_reward(s, &mu, a)?;
                }
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &StateGraph {
        &self.graph
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn n_states(&self) -> usize {
        self.graph.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.model.n_actions()
    }

    pub fn n_agents(&self) -> u32 {
        self.model.n_agents
    }

    pub fn gamma(&self) -> f64 {
        self.model.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.model.r_max
    }

    /// `N_s`, the 1-hop window of `s`.
    pub fn neighborhood(&self, s: usize) -> &Window {
        &self.one_hop[s]
    }

    fn mu_window(&self, s: usize, mu: &EmpiricalStateDist) -> Vec<f64> {
        restrict(&mu.shares(), &self.one_hop[s])
    }

    fn center_position(&self, s: usize) -> usize {
        self.one_hop[s].members.binary_search(&s).unwrap()
    }

    /// `r(s, mu(N_s), a)`.
    pub fn reward(&self, s: usize, mu: &EmpiricalStateDist, action: usize) -> f64 {
        self.model.reward.eval(self.center_position(s), &self.mu_window(s, mu), action)
    }

    fn checked_reward(&self, s: usize, mu: &EmpiricalStateDist, action: usize) -> Result<f64> {
        let value = self.reward(s, mu, action);
        if value.abs() > self.model.r_max + 1e-12 {
            return Err(Error::RewardOutOfBounds {
                state: s,
                action,
                value,
                r_max: self.model.r_max,
            });
        }
        Ok(value)
    }

    /// Validated destination pmf of an agent at `s` taking `action`, as
    /// `(state, probability)` pairs in canonical order.
    pub fn kernel_pmf(&self, s: usize, mu: &EmpiricalStateDist, action: usize) -> Result<Vec<(usize, f64)>> {
        let window = &self.one_hop[s];
        let pmf = self
            .model
            .kernel
            .eval(s, window, &self.mu_window(s, mu), action, self.n_states());
        let invalid = |reason: String| Error::InvalidKernel { state: s, action, reason };
        let mut total = 0.0;
        for &(t, p) in &pmf {
            if !(p >= 0.0) {
                return Err(invalid(format!("negative mass {p} at state {t}")));
            }
            if p > 0.0 && !window.contains(t) {
                return Err(invalid(format!("mass {p} on state {t} outside N_s")));
            }
            total += p;
        }
        if (total - 1.0).abs() > PMF_TOL {
            return Err(invalid(format!("pmf sums to {total}")));
        }
        Ok(pmf)
    }

    /// `r_s(mu(N_s), h(s)) = sum_a r(s, mu(N_s), a) h(s)(a)`; zero for an empty state.
    pub fn local_team_reward(&self, s: usize, mu: &EmpiricalStateDist, h_s: &[f64]) -> Result<f64> {
        if h_s.len() != self.n_actions() {
            return Err(Error::DimensionMismatch {
                expected: self.n_actions(),
                got: h_s.len(),
            });
        }
        if let Some(bad) = h_s.iter().find(|&&x| !(x >= 0.0)) {
            return Err(Error::InvalidPmf(format!("negative action proportion {bad}")));
        }
        Ok(h_s
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(a, &w)| self.reward(s, mu, a) * w)
            .sum())
    }

    /// Stage reward of team `s` used by the team Q-functions.
    pub fn team_reward(&self, s: usize, mu: &EmpiricalStateDist, h: &TeamActionDist) -> f64 {
        match &self.model.team_reward {
            TeamRewardForm::Weighted => {
                if mu.occupancy(s) == 0 {
                    return 0.0;
                }
                mu.share(s) * self.local_team_reward(s, mu, &h.proportions(s)).unwrap()
            }
            TeamRewardForm::Constant { values } => values[s],
        }
    }

    pub fn team_rewards(&self, mu: &EmpiricalStateDist, h: &TeamActionDist) -> Vec<f64> {
        (0..self.n_states()).map(|s| self.team_reward(s, mu, h)).collect()
    }

    /// `sum_s mu(s) sum_a r(s, mu(N_s), a) h(s)(a)`: the agent-average stage reward.
    pub fn global_stage_reward(&self, mu: &EmpiricalStateDist, h: &TeamActionDist) -> Result<f64> {
        h.check_compatible(mu)?;
        let mut total = 0.0;
        for s in 0..self.n_states() {
            if mu.occupancy(s) > 0 {
                total += mu.share(s) * self.local_team_reward(s, mu, &h.proportions(s))?;
            }
        }
        Ok(total)
    }

    /// One agent-level step: every agent collects `r(s_i, mu(N_{s_i}), a_i)` and
    /// moves independently under the kernel.
    ///
    /// Destinations are drawn for agents ordered by `(state, action, index)`,
    /// the same order [`MeanFieldEnv::team_sample_step`] uses for its anonymous
    /// agents, so both simulators consume a shared random stream identically.
    pub fn agent_step<R: Rng + ?Sized>(&self, profile: &AgentProfile, rng: &mut R) -> Result<(AgentProfile, Vec<f64>)> {
        let mu = empirical_of(profile, self.n_states())?;
        let actions = profile
            .actions
            .as_ref()
            .ok_or_else(|| Error::Incompatible("agent_step needs an action profile".into()))?;
        if actions.len() != profile.states.len() {
            return Err(Error::Incompatible("state and action profiles differ in length".into()));
        }
        let mut kernels: Vec<Vec<Option<Vec<(usize, f64)>>>> = vec![vec![None; self.n_actions()]; self.n_states()];
        let mut rewards = Vec::with_capacity(actions.len());
        for (&s, &a) in profile.states.iter().zip(actions) {
            if a >= self.n_actions() {
                return Err(Error::Incompatible(format!("action index {a} out of range")));
            }
            rewards.push(self.reward(s, &mu, a));
            if kernels[s][a].is_none() {
                kernels[s][a] = Some(self.kernel_pmf(s, &mu, a)?);
            }
        }
        let mut order: Vec<usize> = (0..actions.len()).collect();
        order.sort_by_key(|&i| (profile.states[i], actions[i], i));
        let mut next = profile.states.clone();
        for i in order {
            let pmf = kernels[profile.states[i]][actions[i]].as_ref().unwrap();
            next[i] = draw_destination(pmf, rng);
        }
        Ok((AgentProfile::new(next), rewards))
    }

    /// One draw of `mu' ~ P^N(. | mu, h)`: `counts[s][a]` anonymous agents at
    /// each `(s, a)` move independently under the kernel.
    pub fn team_sample_step<R: Rng + ?Sized>(
        &self,
        mu: &EmpiricalStateDist,
        h: &TeamActionDist,
        rng: &mut R,
    ) -> Result<EmpiricalStateDist> {
        h.check_compatible(mu)?;
        let mut next = vec![0u32; self.n_states()];
        for s in 0..self.n_states() {
            for (a, &count) in h.row(s).iter().enumerate() {
                if count == 0 {
                    continue;
                }
                let pmf = self.kernel_pmf(s, mu, a)?;
                for _ in 0..count {
                    next[draw_destination(&pmf, rng)] += 1;
                }
            }
        }
        EmpiricalStateDist::new(next)
    }
}

fn draw_destination<R: Rng + ?Sized>(pmf: &[(usize, f64)], rng: &mut R) -> usize {
    if pmf.len() == 1 {
        // consume a draw regardless so stream positions do not depend on support size
        let _ = rng.random::<f64>();
        return pmf[0].0;
    }
    let probs: Vec<f64> = pmf.iter().map(|&(_, p)| p).collect();
    pmf[inverse_cdf(&probs, rng.random::<f64>())].0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn line3() -> MeanFieldEnv {
        MeanFieldEnv::new(StateGraph::line(3), ModelSpec::line3()).unwrap()
    }

    fn mu211() -> EmpiricalStateDist {
        EmpiricalStateDist::new(vec![2, 1, 1]).unwrap()
    }

    #[test]
    fn empirical_and_team_counts() {
        let p = AgentProfile::new(vec![0, 0, 1, 2]).with_actions(vec![0, 1, 0, 0]);
        assert_eq!(empirical_of(&p, 3).unwrap().counts(), &[2, 1, 1]);
        let h = team_dist_of(&p, 3, 2).unwrap();
        assert_eq!(h.counts(), &[vec![1, 1], vec![1, 0], vec![1, 0]]);
        let permuted = AgentProfile::new(vec![2, 0, 1, 0]).with_actions(vec![0, 1, 0, 0]);
        assert_eq!(team_dist_of(&permuted, 3, 2).unwrap(), h);
        assert_eq!(empirical_of(&AgentProfile::new(vec![0; 5]), 3).unwrap().counts(), &[5, 0, 0]);
        let single = AgentProfile::new(vec![1]).with_actions(vec![1]);
        assert_eq!(team_dist_of(&single, 3, 2).unwrap().counts(), &[vec![0, 0], vec![0, 1], vec![0, 0]]);
    }

    #[test]
    fn local_rewards() {
        let env = line3();
        let mu = mu211();
        assert_eq!(env.local_team_reward(1, &mu, &[1.0, 0.0]).unwrap(), 0.75);
        let empty = EmpiricalStateDist::new(vec![4, 0, 0]).unwrap();
        assert_eq!(env.local_team_reward(2, &empty, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(env.local_team_reward(1, &mu, &[-0.5, 1.5]).is_err());

        let mut model = ModelSpec::line3();
        model.reward = RewardFn::ActionIndicator { action: 0, value: 1.0 };
        let env = MeanFieldEnv::new(StateGraph::line(3), model).unwrap();
        assert_eq!(env.local_team_reward(0, &mu, &[0.5, 0.5]).unwrap(), 0.5);
    }

    #[test]
    fn global_reward_arithmetic() {
        let env = line3();
        let mu = mu211();
        let h = TeamActionDist::new(vec![vec![1, 1], vec![0, 1], vec![1, 0]]);
        assert!((env.global_stage_reward(&mu, &h).unwrap() - 0.625).abs() < 1e-15);
        let solo = EmpiricalStateDist::new(vec![0, 4, 0]).unwrap();
        let h = TeamActionDist::uniform_action(&solo, 2, 1);
        assert_eq!(env.global_stage_reward(&solo, &h).unwrap(), 1.0 * 0.0);
        let bad = TeamActionDist::new(vec![vec![1, 0], vec![0, 1], vec![1, 0]]);
        assert!(matches!(env.global_stage_reward(&mu, &bad), Err(Error::Incompatible(_))));
    }

    #[test]
    fn stay_action_freezes_profile() {
        let env = line3();
        let profile = AgentProfile::new(vec![0, 0, 1, 2]).with_actions(vec![0; 4]);
        let (next, rewards) = env.agent_step(&profile, &mut stream(1, &[])).unwrap();
        assert_eq!(next.states, profile.states);
        assert_eq!(rewards, vec![0.5, 0.5, 0.75, 0.75]);
    }

    #[test]
    fn forced_moves() {
        let env = line3();
        let profile = AgentProfile::new(vec![0, 0]).with_actions(vec![1, 1]);
        for seed in 0..20 {
            let (next, _) = env.agent_step(&profile, &mut stream(seed, &[])).unwrap();
            assert_eq!(next.states, vec![1, 1]);
        }
        let mu = mu211();
        let h = TeamActionDist::new(vec![vec![0, 2], vec![1, 0], vec![1, 0]]);
        for seed in 0..20 {
            let next = env.team_sample_step(&mu, &h, &mut stream(seed, &[])).unwrap();
            assert_eq!(next.occupancy(0), 0);
            assert_eq!(next.n_agents(), 4);
        }
        let all_stay = TeamActionDist::uniform_action(&mu, 2, 0);
        assert_eq!(env.team_sample_step(&mu, &all_stay, &mut stream(3, &[])).unwrap(), mu);
    }

    #[test]
    fn teleport_kernel_rejected() {
        let mut model = ModelSpec::line3();
        model.kernel = KernelFn::Teleport;
        let err = MeanFieldEnv::new(StateGraph::line(3), model).unwrap_err();
        assert!(matches!(err, Error::InvalidKernel { .. }), "{err}");
    }

    #[test]
    fn reward_bound_enforced() {
        let mut model = ModelSpec::line3();
        model.reward = RewardFn::Constant { value: 2.0 };
        assert!(matches!(
            MeanFieldEnv::new(StateGraph::line(3), model),
            Err(Error::RewardOutOfBounds { .. })
        ));
    }

    #[test]
    fn drift_and_avoid_crowd_are_local() {
        for kernel in [KernelFn::Drift { success: 0.7 }, KernelFn::AvoidCrowd { floor: 0.1 }] {
            let mut model = ModelSpec::line3();
            model.actions.push("alt".into());
            model.kernel = kernel;
            let env = MeanFieldEnv::new(StateGraph::line(5), model).unwrap();
            let mu = EmpiricalStateDist::new(vec![1, 0, 2, 1, 0]).unwrap();
            for a in 0..3 {
                let pmf = env.kernel_pmf(2, &mu, a).unwrap();
                assert!(pmf.iter().all(|&(t, _)| (1..=3).contains(&t)));
            }
        }
    }
}
