//! The acceptance suite: twelve property and oracle checks on a desk-scale
//! instance, shared by `ltde verify` and the `acceptance` integration test.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::CandidateSets;
use crate::config::ExperimentConfig;
use crate::env::{
    empirical_of, team_dist_of, AgentProfile, EmpiricalStateDist, InitialDist, MeanFieldEnv, TeamActionDist,
    TeamRewardForm,
};
use crate::error::{Error, Result};
use crate::graph::{StateGraph, Window};
use crate::neural::TwoLayerNet;
use crate::oracle::{
    decay_bound, exact_team_kernel, marginal, Oracle, PolicyWeights, Weighting, MEASURE_TOL,
};
use crate::policy::{
    recover_individual, lift_pmf, sample_agent_actions, EnergyPolicy, FeatureCache, IndividualPolicy, LiftedPolicy,
    PolicyTable,
};
use crate::rng::{derive_seed, stream, tag};
use crate::training::{
    actor_train, critic_train, ghat, ActorConfig, CriticConfig, CriticState, Sampler, TransitionTuple,
};

pub const ALL_CRITERIA: [u8; 12] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub measured: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn new(criteria: Vec<CriterionResult>) -> Self {
        Self {
            passed: criteria.iter().all(|c| c.passed),
            criteria,
        }
    }

    pub fn lines(&self) -> Vec<String> {
        self.criteria
            .iter()
            .map(|c| {
                let values: Vec<String> = c.measured.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
                format!(
                    "{} {:>2} {}: {}{}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.id,
                    c.name,
                    values.join(" "),
                    c.note.as_ref().map(|n| format!(" ({n})")).unwrap_or_default()
                )
            })
            .collect()
    }
}

/// Pinned settings for the critic convergence check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticCheck {
    pub seed: u64,
    pub large: usize,
    pub small: usize,
    pub iterations: usize,
    pub radius: f64,
    pub eta: f64,
    pub max_rel_error: f64,
    pub constant_reward: f64,
    pub constant_tol: f64,
}

impl Default for CriticCheck {
    fn default() -> Self {
        Self {
            seed: 7,
            large: 512,
            small: 32,
            iterations: 20_000,
            radius: 2.0,
            eta: 4.0,
            max_rel_error: 0.1,
            constant_reward: 0.25,
            constant_tol: 0.05,
        }
    }
}

/// Pinned settings for the actor improvement check. `kappa` was calibrated
/// once at `seed` and is locked to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCheck {
    pub seed: u64,
    pub actor: ActorConfig,
    pub kappa: f64,
    pub k_slack: f64,
}

impl Default for ActorCheck {
    fn default() -> Self {
        Self {
            seed: 11,
            actor: crate::config::calibrated_actor(),
            kappa: 0.8,
            k_slack: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub seed: u64,
    pub critic: CriticCheck,
    pub actor: ActorCheck,
    /// Scratch space for the determinism check; defaults to the system temp dir.
    pub scratch: Option<PathBuf>,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            seed: 2024,
            critic: CriticCheck::default(),
            actor: ActorCheck::default(),
            scratch: None,
        }
    }
}

/// The model under test and its oracle.
pub struct Instance {
    pub cfg: ExperimentConfig,
    pub env: MeanFieldEnv,
    pub oracle: Oracle,
}

impl Instance {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let env = cfg.env()?;
        let oracle = Oracle::new(env.clone(), &cfg.initial, cfg.oracle.xi_cap)?;
        Ok(Self {
            cfg: cfg.clone(),
            env,
            oracle,
        })
    }

    fn initial(&self) -> &InitialDist {
        &self.cfg.initial
    }

    fn cands(&self) -> &CandidateSets {
        self.oracle.xi().candidates()
    }

    fn individual(&self) -> IndividualPolicy {
        self.cfg.policy.individual().cloned().unwrap_or(IndividualPolicy::Uniform)
    }

    fn lifted_table(&self) -> Result<PolicyTable> {
        PolicyTable::new(
            &LiftedPolicy::new(self.individual()),
            self.env.n_states(),
            self.env.n_agents(),
            self.cands(),
        )
    }

    fn energy_policy(&self, seed: u64, width: usize, radius: f64, tau: f64) -> Result<EnergyPolicy> {
        EnergyPolicy::init(self.env.n_states(), self.env.n_actions(), width, radius, tau, seed)
    }

    fn all_pairs(&self) -> Vec<(EmpiricalStateDist, TeamActionDist)> {
        let xi = self.oracle.xi();
        (0..xi.len()).map(|id| (xi.mu(xi.mu_of(id)).clone(), xi.h(id))).collect()
    }
}

struct Outcome {
    passed: bool,
    measured: Vec<(&'static str, f64)>,
    note: Option<String>,
}

impl Outcome {
    fn new(passed: bool, measured: Vec<(&'static str, f64)>) -> Self {
        Self {
            passed,
            measured,
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

pub fn criterion_name(id: u8) -> &'static str {
    match id {
        1 => "lift round trip",
        2 => "team value equals agent-level return",
        3 => "local dependence of the team kernel",
        4 => "Bellman contraction",
        5 => "exponential decay",
        6 => "truncation bound",
        7 => "policy gradient identity",
        8 => "sampler fidelity",
        9 => "critic convergence",
        10 => "actor improvement",
        11 => "locality of training",
        12 => "determinism",
        _ => "unknown",
    }
}

/// Runs one criterion. Errors inside a check are reported as a failure.
pub fn run_criterion(inst: &Instance, settings: &VerifySettings, id: u8) -> CriterionResult {
    let outcome = match id {
        1 => lift_round_trip(inst, settings),
        2 => lemma_equivalence(inst, settings),
        3 => local_dependence(inst),
        4 => contraction(inst, settings),
        5 => decay(inst, settings),
        6 => truncation(inst, settings),
        7 => gradient_identity(inst, settings),
        8 => sampler_fidelity(inst, settings),
        9 => critic_convergence(inst, settings),
        10 => actor_improvement(inst, settings),
        11 => training_locality(inst, settings),
        12 => determinism(inst, settings),
        _ => Err(Error::Config(format!("no criterion {id}"))),
    };
    let outcome = outcome.unwrap_or_else(|e| Outcome::new(false, Vec::new()).with_note(format!("error: {e}")));
    CriterionResult {
        id,
        name: criterion_name(id).to_string(),
        passed: outcome.passed,
        measured: outcome.measured.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        note: outcome.note,
    }
}

/// Builds the instance and runs the selected criteria. A model that fails
/// validation yields a single failing entry with id 0.
pub fn verify(cfg: &ExperimentConfig, settings: &VerifySettings, only: &[u8]) -> VerifyReport {
    let inst = match Instance::new(cfg) {
        Ok(inst) => inst,
        Err(e) => {
            return VerifyReport::new(vec![CriterionResult {
                id: 0,
                name: "model validation".into(),
                passed: false,
                measured: BTreeMap::new(),
                note: Some(e.to_string()),
            }])
        }
    };
    let ids: &[u8] = if only.is_empty() { &ALL_CRITERIA } else { only };
    VerifyReport::new(ids.iter().map(|&id| run_criterion(&inst, settings, id)).collect())
}

fn random_pmf<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // exponential spacings give a uniform draw from the simplex
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

fn lift_round_trip(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let n_actions = inst.env.n_actions();
    let n_agents = inst.env.n_agents();
    let cands = inst.cands();
    let mut rng = stream(settings.seed, &[tag::VERIFY, 1]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let probs: Vec<Vec<f64>> = (0..inst.env.n_states()).map(|_| random_pmf(n_actions, &mut rng)).collect();
        let pi = IndividualPolicy::Table { probs };
        for s in 0..inst.env.n_states() {
            for occ in 1..=n_agents {
                let p = pi.pmf(s, occ as f64 / n_agents as f64, n_actions)?;
                let back = recover_individual(&lift_pmf(&p, occ, cands)?, occ, cands)?;
                for (a, b) in p.iter().zip(&back.probs) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    Ok(Outcome::new(worst <= 1e-12, vec![("max_abs_error", worst)]))
}

fn lemma_equivalence(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let env = &inst.env;
    if env.model().team_reward != TeamRewardForm::Weighted {
        return Ok(Outcome::new(false, Vec::new()).with_note("needs the weighted team reward"));
    }
    let (n_states, n_actions) = (env.n_states(), env.n_actions());
    let n_agents = env.n_agents() as usize;

    // exact identity over every labelled profile
    let profiles = ((n_states * n_actions) as u128).checked_pow(n_agents as u32).unwrap_or(u128::MAX);
    if profiles > 5_000_000 {
        return Err(Error::CapExceeded {
            what: "agent profiles",
            size: profiles,
            cap: 5_000_000,
        });
    }
    let mut worst_stage: f64 = 0.0;
    let mut realized = std::collections::BTreeSet::new();
    let mut code = vec![0usize; n_agents];
    loop {
        let profile = AgentProfile::new(code.iter().map(|c| c / n_actions).collect())
            .with_actions(code.iter().map(|c| c % n_actions).collect());
        let mu = empirical_of(&profile, n_states)?;
        let h = team_dist_of(&profile, n_states, n_actions)?;
        let team = env.global_stage_reward(&mu, &h)?;
        let agents: f64 = profile
            .states
            .iter()
            .zip(profile.actions.as_ref().unwrap())
            .map(|(&s, &a)| env.reward(s, &mu, a))
            .sum::<f64>()
            / n_agents as f64;
        worst_stage = worst_stage.max((team - agents).abs());
        if let Some(id) = inst.oracle.xi().index_of(&mu, &h) {
            realized.insert(id);
        }
        // odometer over (state, action) codes
        let mut i = 0;
        while i < n_agents {
            code[i] += 1;
            if code[i] < n_states * n_actions {
                break;
            }
            code[i] = 0;
            i += 1;
        }
        if i == n_agents {
            break;
        }
    }

    // Monte Carlo over the agent-level simulator
    let pi = inst.individual();
    let table = inst.lifted_table()?;
    let exact = inst.oracle.j(&inst.oracle.policy_weights(&table), 1e-12)?;
    let gamma = env.gamma();
    let (rollouts, horizon) = (100_000usize, 40usize);
    let mut rng = stream(settings.seed, &[tag::VERIFY, 2]);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..rollouts {
        let mut profile = AgentProfile::from_dist(&inst.initial().sample(&mut rng));
        let (mut ret, mut discount) = (0.0, 1.0);
        for _ in 0..horizon {
            let actions = sample_agent_actions(&pi, &profile, n_states, n_actions, &mut rng)?;
            let (next, rewards) = env.agent_step(&profile.with_actions(actions), &mut rng)?;
            ret += discount * rewards.iter().sum::<f64>() / n_agents as f64;
            discount *= gamma;
            profile = next;
        }
        sum += ret;
        sum_sq += ret * ret;
    }
    let n = rollouts as f64;
    let mean = sum / n;
    let se = ((sum_sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt();
    let z = (mean - exact).abs() / se.max(f64::MIN_POSITIVE);
    let passed = z <= 3.0 && worst_stage <= 1e-14 && realized.len() == inst.oracle.xi().len();
    Ok(Outcome::new(
        passed,
        vec![
            ("exact_value", exact),
            ("mc_mean", mean),
            ("mc_se", se),
            ("z", z),
            ("stage_max_abs_diff", worst_stage),
            ("pairs_realized", realized.len() as f64),
        ],
    ))
}

/// Largest spread of the `mu'(s)` marginal within groups of inputs that agree
/// on `mu` over `N^2_s` and `h` over `N^1_s`.
fn kernel_dependence(env: &MeanFieldEnv, cap: usize) -> Result<(f64, usize)> {
    let xi = crate::oracle::XiSpace::enumerate(env.n_states(), env.n_agents(), env.n_actions(), cap)?;
    let n_agents = env.n_agents();
    let marginals: Vec<Vec<Vec<f64>>> = (0..xi.len())
        .map(|id| {
            let kernel = exact_team_kernel(env, xi.mu(xi.mu_of(id)), &xi.h(id))?;
            Ok((0..env.n_states()).map(|s| marginal(&kernel, s, n_agents)).collect())
        })
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    let mut nontrivial = 0;
    for s in 0..env.n_states() {
        let mu_window = env.graph().k_hop(s, 2)?;
        let h_window = env.graph().k_hop(s, 1)?;
        let mut groups: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
        for id in 0..xi.len() {
            let mu = xi.mu(xi.mu_of(id));
            let mut key: Vec<u32> = mu_window.members.iter().map(|&t| mu.occupancy(t)).collect();
            for &t in &h_window.members {
                key.extend_from_slice(xi.h_row(id, t));
            }
            groups.entry(key).or_default().push(id);
        }
        for ids in groups.values() {
            if ids.len() > 1 {
                nontrivial += 1;
            }
            let first = &marginals[ids[0]][s];
            for &id in &ids[1..] {
                for (a, b) in first.iter().zip(&marginals[id][s]) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    Ok((worst, nontrivial))
}

fn local_dependence(inst: &Instance) -> Result<Outcome> {
    let (own, own_groups) = kernel_dependence(&inst.env, inst.cfg.oracle.xi_cap)?;
    let n5 = inst.env.graph().n_states().max(5);
    let line = MeanFieldEnv::new(StateGraph::line(n5), inst.env.model().clone())?;
    let (line_gap, line_groups) = kernel_dependence(&line, inst.cfg.oracle.xi_cap)?;
    Ok(Outcome::new(
        own <= 1e-14 && line_gap <= 1e-14 && own_groups + line_groups > 0,
        vec![
            ("max_abs_diff", own),
            ("nontrivial_groups", own_groups as f64),
            ("line_max_abs_diff", line_gap),
            ("line_nontrivial_groups", line_groups as f64),
        ],
    )
    .with_note(format!("also checked on a {n5}-state line")))
}

/// The configured policy followed by `extra` seeded energy policies.
fn policy_weights(inst: &Instance, settings: &VerifySettings, id: u64, extra: usize) -> Result<Vec<PolicyWeights>> {
    let mut out = vec![inst.oracle.policy_weights(&inst.lifted_table()?)];
    for i in 0..extra {
        let policy = inst.energy_policy(derive_seed(settings.seed, &[tag::VERIFY, id, i as u64]), 16, 4.0, 5.0)?;
        out.push(inst.oracle.policy_weights(&inst.oracle.policy_table(&policy)?));
    }
    Ok(out)
}

fn contraction(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let weights = policy_weights(inst, settings, 4, 5)?;
    let gamma = inst.env.gamma();
    let scale = 2.0 * inst.env.r_max() / (1.0 - gamma);
    let mut rng = stream(settings.seed, &[tag::VERIFY, 4]);
    let n = inst.oracle.xi().len();
    let (mut violations, mut worst_ratio) = (0usize, 0.0f64);
    for pair in 0..100 {
        let s = pair % inst.env.n_states();
        let w = &weights[pair % weights.len()];
        let f: Vec<f64> = (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let tf = inst.oracle.bellman_apply(s, w, &f)?;
        let tg = inst.oracle.bellman_apply(s, w, &g)?;
        let lhs = tf.iter().zip(&tg).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let rhs = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // rounding in the two affine maps is far below this slack
        if lhs > gamma * rhs * (1.0 + 1e-12) {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(lhs / rhs);
    }
    Ok(Outcome::new(
        violations == 0,
        vec![("violations", violations as f64), ("max_ratio", worst_ratio), ("gamma", gamma)],
    ))
}

fn decay(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let weights = policy_weights(inst, settings, 5, 5)?;
    let diameter = inst.env.graph().diameter();
    let (gamma, r_max) = (inst.env.gamma(), inst.env.r_max());
    let (mut worst_slack, mut at_diameter) = (f64::INFINITY, 0.0f64);
    let mut passed = true;
    for w in &weights {
        let qs = inst.oracle.team_q_all(w, 1e-12)?;
        for (s, q) in qs.iter().enumerate() {
            for k in 0..=diameter {
                let gap = inst.oracle.decay_gap(q, s, k)?;
                let bound = decay_bound(r_max, gamma, k);
                worst_slack = worst_slack.min(bound - gap);
                passed &= gap <= bound;
                if k == diameter {
                    at_diameter = at_diameter.max(gap);
                    passed &= gap == 0.0;
                }
            }
        }
    }
    Ok(Outcome::new(
        passed,
        vec![
            ("policies", weights.len() as f64),
            ("min_bound_minus_gap", worst_slack),
            ("gap_at_diameter", at_diameter),
        ],
    ))
}

fn truncation(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let weights = policy_weights(inst, settings, 6, 5)?;
    let diameter = inst.env.graph().diameter();
    let (gamma, r_max) = (inst.env.gamma(), inst.env.r_max());
    let mut worst_slack = f64::INFINITY;
    for w in &weights {
        let qs = inst.oracle.team_q_all(w, 1e-12)?;
        let (nu, _) = inst.oracle.stationary(w, MEASURE_TOL)?;
        for (s, q) in qs.iter().enumerate() {
            for k in 0..=diameter {
                let bound = decay_bound(r_max, gamma, k);
                for weighting in [Weighting::Uniform, Weighting::Conditional(&nu)] {
                    let t = inst.oracle.truncated_q(q, s, k, weighting)?;
                    let err = q.iter().enumerate().map(|(id, v)| (t.at(id) - v).abs()).fold(0.0, f64::max);
                    worst_slack = worst_slack.min(bound - err);
                }
            }
        }
    }
    Ok(Outcome::new(worst_slack >= 0.0, vec![("min_bound_minus_error", worst_slack)]))
}

/// Smallest nonzero `|w_m . x|` over every unit and candidate input; inputs
/// that are identically zero never cross a kink.
fn kink_margin(policy: &EnergyPolicy, n_agents: u32, cands: &CandidateSets) -> f64 {
    let mut margin = f64::INFINITY;
    for net in &policy.nets {
        let d = net.in_dim();
        for occ in 0..=n_agents {
            for x in EnergyPolicy::candidate_inputs(occ, n_agents, cands) {
                if x.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for row in net.weights().chunks(d) {
                    let pre: f64 = row.iter().zip(&x).map(|(w, v)| w * v).sum();
                    margin = margin.min(pre.abs());
                }
            }
        }
    }
    margin
}

fn gradient_identity(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let step = 1e-5;
    let tol = 1e-13;
    let n_agents = inst.env.n_agents();
    let diameter = inst.env.graph().diameter();
    let (mut worst_rel, mut worst_local, mut retries) = (0.0f64, 0.0f64, 0usize);
    let mut draw = 0u64;
    for _ in 0..5 {
        let policy = loop {
            let p = inst.energy_policy(derive_seed(settings.seed, &[tag::VERIFY, 7, draw]), 6, 1.0, 2.0)?;
            draw += 1;
            // a finite difference must not straddle a ReLU kink
            if kink_margin(&p, n_agents, inst.cands()) > 10.0 * step {
                break p;
            }
            retries += 1;
            if retries > 50 {
                return Err(Error::NonConvergence("no kink-free parameter draw".into()));
            }
        };
        let exact = inst.oracle.policy_grad(&policy, tol)?;
        let mut diff_sq = 0.0;
        let mut norm_sq = 0.0;
        for (s, g) in exact.iter().enumerate() {
            let net = &policy.nets[s];
            for p in 0..net.n_params() {
                let mut j = [0.0; 2];
                for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
                    let mut w = net.weights().to_vec();
                    w[p] += sign * step;
                    let mut shifted = policy.clone();
                    shifted.nets[s] = TwoLayerNet::from_parts(net.in_dim(), net.radius(), w, net.signs().to_vec())?;
                    j[slot] = inst.oracle.energy_j(&shifted, tol)?;
                }
                let fd = (j[0] - j[1]) / (2.0 * step);
                diff_sq += (fd - g[p]).powi(2);
                norm_sq += g[p] * g[p];
            }
        }
        worst_rel = worst_rel.max((diff_sq / norm_sq).sqrt());
        for uniform in [true, false] {
            let local = inst.oracle.localized_grad(&policy, diameter, uniform, tol)?;
            for (a, b) in local.iter().zip(&exact) {
                for (x, y) in a.iter().zip(b) {
                    worst_local = worst_local.max((x - y).abs());
                }
            }
        }
    }
    Ok(Outcome::new(
        worst_rel <= 1e-4 && worst_local <= 1e-10,
        vec![
            ("max_rel_fd_error", worst_rel),
            ("localized_vs_full", worst_local),
            ("kink_retries", retries as f64),
        ],
    ))
}

fn total_variation(counts: &[usize], exact: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(exact)
        .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
        .sum::<f64>()
}

fn sampler_fidelity(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let policy = inst.energy_policy(derive_seed(settings.seed, &[tag::VERIFY, 8]), 16, 4.0, 5.0)?;
    let table = inst.oracle.policy_table(&policy)?;
    let weights = inst.oracle.policy_weights(&table);
    let (nu, _) = inst.oracle.stationary(&weights, MEASURE_TOL)?;
    let sigma = inst.oracle.visitation(&weights, MEASURE_TOL);
    let sampler = Sampler::new(&inst.env, &table, inst.cands(), inst.initial());
    let xi = inst.oracle.xi();
    let index = |mu: &EmpiricalStateDist, h: &TeamActionDist| {
        xi.index_of(mu, h)
            .ok_or_else(|| Error::Internal("sample outside the enumerated space".into()))
    };
    let n = 100_000;
    let mut rng = stream(settings.seed, &[tag::VERIFY, 8, 1]);
    let mut counts = vec![0usize; xi.len()];
    for _ in 0..n {
        let t = sampler.stationary_tuple(crate::training::DEFAULT_BURN_IN, &mut rng)?;
        counts[index(&t.mu, &t.h)?] += 1;
    }
    let tv_nu = total_variation(&counts, &nu);
    let mut rng = stream(settings.seed, &[tag::VERIFY, 8, 2]);
    let mut counts = vec![0usize; xi.len()];
    for _ in 0..n {
        let (mu, h) = sampler.visitation_pair(crate::training::DEFAULT_RESTARTS, &mut rng)?;
        counts[index(&mu, &h)?] += 1;
    }
    let tv_sigma = total_variation(&counts, &sigma);
    Ok(Outcome::new(
        tv_nu <= 0.05 && tv_sigma <= 0.05,
        vec![("tv_stationary", tv_nu), ("tv_visitation", tv_sigma)],
    ))
}

/// Relative `L^2(nu)` error of each `Q_s(.; omega_bar_s)` against exact tables.
fn critic_errors(inst: &Instance, critic: &CriticState, qs: &[Vec<f64>], nu: &[f64]) -> Vec<f64> {
    let pairs = inst.all_pairs();
    (0..inst.env.n_states())
        .map(|s| {
            let (mut num, mut den) = (0.0, 0.0);
            for (id, (mu, h)) in pairs.iter().enumerate() {
                num += nu[id] * (critic.value(s, mu, h) - qs[s][id]).powi(2);
                den += nu[id] * qs[s][id].powi(2);
            }
            (num / den).sqrt()
        })
        .collect()
}

fn critic_convergence(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let c = &settings.critic;
    let diameter = inst.env.graph().diameter();
    let table = inst.lifted_table()?;
    let weights = inst.oracle.policy_weights(&table);
    let qs = inst.oracle.team_q_all(&weights, 1e-12)?;
    let (nu, _) = inst.oracle.stationary(&weights, MEASURE_TOL)?;
    let sampler = Sampler::new(&inst.env, &table, inst.cands(), inst.initial());
    let cfg = |width| CriticConfig {
        width,
        radius: c.radius,
        iterations: c.iterations,
        eta: Some(c.eta),
        k: diameter,
        burn_in: crate::training::DEFAULT_BURN_IN,
    };
    let large = critic_errors(inst, &critic_train(&sampler, &cfg(c.large), c.seed)?, &qs, &nu);
    let small = critic_errors(inst, &critic_train(&sampler, &cfg(c.small), c.seed)?, &qs, &nu);
    let max_large = large.iter().cloned().fold(0.0, f64::max);
    let max_small = small.iter().cloned().fold(0.0, f64::max);

    // closed form: a constant team reward gives Q_s = r / (1 - gamma) everywhere
    let mut model = inst.env.model().clone();
    model.team_reward = TeamRewardForm::Constant {
        values: vec![c.constant_reward; inst.env.n_states()],
    };
    let flat = MeanFieldEnv::new(inst.env.graph().clone(), model)?;
    let flat_sampler = Sampler::new(&flat, &table, inst.cands(), inst.initial());
    let flat_critic = critic_train(&flat_sampler, &cfg(c.large), c.seed)?;
    let target = c.constant_reward / (1.0 - inst.env.gamma());
    let mut flat_err: f64 = 0.0;
    for (mu, h) in inst.all_pairs() {
        for s in 0..inst.env.n_states() {
            flat_err = flat_err.max((flat_critic.value(s, &mu, &h) - target).abs());
        }
    }
    let mut measured = vec![
        ("max_rel_error_large", max_large),
        ("max_rel_error_small", max_small),
        ("constant_model_max_abs_error", flat_err),
    ];
    let names = ["rel_error_large_s0", "rel_error_large_s1", "rel_error_large_s2"];
    for (name, e) in names.iter().zip(&large) {
        measured.push((name, *e));
    }
    Ok(Outcome::new(
        max_large <= c.max_rel_error && max_large <= max_small && flat_err <= c.constant_tol,
        measured,
    ))
}

fn actor_improvement(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let a = &settings.actor;
    let diameter = inst.env.graph().diameter();
    let j_ub = inst.oracle.optimal_j(1e-12)?;
    let run_with = |k: usize| {
        let mut cfg = a.actor.clone();
        cfg.k = k;
        cfg.critic.k = k;
        actor_train(&inst.env, inst.initial(), &cfg, a.seed, Some(&inst.oracle))
    };
    let full = run_with(diameter)?;
    let local = run_with(0)?;
    let j0 = full.records[0].j.unwrap_or(f64::NAN);
    let best_full = full.best_j().unwrap_or(f64::NAN);
    let best_local = local.best_j().unwrap_or(f64::NAN);
    let target = j0 + 0.5 * (j_ub - j0) * a.kappa;
    Ok(Outcome::new(
        best_full >= target && best_full >= best_local - a.k_slack,
        vec![
            ("j0", j0),
            ("j_ub", j_ub),
            ("kappa", a.kappa),
            ("target", target),
            ("best_j_diameter", best_full),
            ("best_j_k0", best_local),
            ("best_iteration_diameter", full.best_iteration.unwrap_or(0) as f64),
        ],
    ))
}

/// Replaces the counts outside `keep` by junk that is still a valid input.
fn scramble(mu: &EmpiricalStateDist, h: &TeamActionDist, keep: &Window) -> (EmpiricalStateDist, TeamActionDist) {
    let n_actions = h.row(0).len();
    let mut counts = mu.counts().to_vec();
    let mut rows = h.counts().to_vec();
    for (t, (c, row)) in counts.iter_mut().zip(rows.iter_mut()).enumerate() {
        if !keep.contains(t) {
            *c = 7 + t as u32;
            *row = vec![0; n_actions];
            row[n_actions - 1] = *c;
        }
    }
    (EmpiricalStateDist::new(counts).unwrap(), TeamActionDist::new(rows))
}

fn bits(net: &TwoLayerNet) -> Vec<u64> {
    net.weights().iter().map(|w| w.to_bits()).collect()
}

fn masking_check(env: &MeanFieldEnv, initial: &InitialDist, k: usize, seed: u64) -> Result<(usize, usize)> {
    let cands = CandidateSets::new(env.n_agents(), env.n_actions(), crate::policy::DEFAULT_CANDIDATE_CAP)?;
    let policy = EnergyPolicy::init(env.n_states(), env.n_actions(), 8, 2.0, 2.0, seed)?;
    let table = PolicyTable::new(&policy, env.n_states(), env.n_agents(), &cands)?;
    let sampler = Sampler::new(env, &table, &cands, initial);
    let cfg = CriticConfig {
        width: 32,
        radius: 1.0,
        iterations: 400,
        eta: None,
        k,
        burn_in: 20,
    };
    let base = CriticState::init(env, &cfg, seed)?;
    let mut rng = stream(seed, &[tag::VERIFY, 11]);
    let tuples: Vec<TransitionTuple> = (0..cfg.iterations - 1)
        .map(|_| sampler.stationary_tuple(cfg.burn_in, &mut rng))
        .collect::<Result<_>>()?;
    let (mut checks, mut mismatches) = (0, 0);
    for s in 0..env.n_states() {
        let keep = env.graph().k_hop(s, k)?;
        let masked: Vec<TransitionTuple> = tuples
            .iter()
            .map(|t| {
                let (mu, h) = scramble(&t.mu, &t.h, &keep);
                let (mu_next, h_next) = scramble(&t.mu_next, &t.h_next, &keep);
                let rewards = (0..t.rewards.len())
                    .map(|y| if y == s { t.rewards[y] } else { f64::NAN })
                    .collect();
                TransitionTuple {
                    mu,
                    h,
                    rewards,
                    mu_next,
                    h_next,
                }
            })
            .collect();
        let mut a = base.clone();
        let mut b = base.clone();
        a.train_state(s, &tuples, env.gamma(), cfg.step_size(env.gamma()));
        b.train_state(s, &masked, env.gamma(), cfg.step_size(env.gamma()));
        checks += 1;
        if bits(&a.nets[s]) != bits(&b.nets[s])
            || bits(&a.averages[s]) != bits(&b.averages[s])
            || a.loss[s].to_bits() != b.loss[s].to_bits()
        {
            mismatches += 1;
        }
    }
    let critic = {
        let mut c = base;
        c.train(&tuples, env.gamma(), cfg.step_size(env.gamma()));
        c
    };
    let batch: Vec<_> = (0..64)
        .map(|_| sampler.visitation_pair(crate::training::DEFAULT_RESTARTS, &mut rng))
        .collect::<Result<_>>()?;
    for s in 0..env.n_states() {
        let features = FeatureCache::new(&policy, &table, s, &cands)?;
        let keep = env.graph().k_hop(s, 2 * k)?;
        let masked: Vec<_> = batch.iter().map(|(mu, h)| scramble(mu, h, &keep)).collect();
        let g = ghat(&critic, &features, env.graph(), &cands, s, k, env.gamma(), &batch)?;
        let g_masked = ghat(&critic, &features, env.graph(), &cands, s, k, env.gamma(), &masked)?;
        checks += 1;
        let same = g.iter().zip(&g_masked).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            mismatches += 1;
        }
    }
    Ok((checks, mismatches))
}

fn training_locality(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let seed = derive_seed(settings.seed, &[tag::VERIFY, 11]);
    let (mut checks, mut mismatches) = masking_check(&inst.env, inst.initial(), 0, seed)?;
    let n = inst.env.n_states().max(5);
    let line = MeanFieldEnv::new(StateGraph::line(n), inst.env.model().clone())?;
    let mut counts = vec![0u32; n];
    counts[0] = line.n_agents();
    let (c, m) = masking_check(&line, &InitialDist::point(counts), 1, seed)?;
    checks += c;
    mismatches += m;
    Ok(Outcome::new(
        mismatches == 0 && checks > 0,
        vec![("checks", checks as f64), ("mismatches", mismatches as f64)],
    ))
}

fn determinism(inst: &Instance, settings: &VerifySettings) -> Result<Outcome> {
    let root = settings.scratch.clone().unwrap_or_else(std::env::temp_dir).join(format!(
        "ltde-determinism-{}-{}",
        std::process::id(),
        settings.seed
    ));
    let mut cfg = inst.cfg.clone();
    cfg.simulate.steps = 50;
    cfg.training.actor.iterations = 2;
    cfg.training.actor.batch = 32;
    cfg.training.actor.critic.width = 32;
    cfg.training.actor.critic.iterations = 200;
    cfg.training.actor.critic.burn_in = 20;
    let mut compared = 0usize;
    let mut differing = Vec::new();
    let result = (|| -> Result<()> {
        for command in ["simulate", "oracle", "train"] {
            let mut outputs = Vec::new();
            for rep in 0..2 {
                let dir = root.join(format!("{command}-{rep}"));
                crate::harness::run_command(command, &cfg, &dir, false)?;
                outputs.push(dir);
            }
            let mut names: Vec<_> = std::fs::read_dir(&outputs[0])?
                .map(|e| e.map(|e| e.file_name()))
                .collect::<std::io::Result<_>>()?;
            names.sort();
            for name in names {
                let a = std::fs::read(outputs[0].join(&name))?;
                let b = std::fs::read(outputs[1].join(&name)).unwrap_or_default();
                compared += 1;
                if a != b {
                    differing.push(format!("{command}/{}", name.to_string_lossy()));
                }
            }
        }
        Ok(())
    })();
    let _ = std::fs::remove_dir_all(&root);
    result?;
    let outcome = Outcome::new(
        differing.is_empty() && compared > 0,
        vec![("files_compared", compared as f64), ("files_differing", differing.len() as f64)],
    );
    Ok(if differing.is_empty() {
        outcome
    } else {
        outcome.with_note(differing.join(", "))
    })
}
