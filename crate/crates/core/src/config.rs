//! Experiment configuration: a single TOML file with optional dotted-path
//! overrides. Every section has line3 defaults, so an empty file is a valid run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::combinatorics::CandidateSets;
use crate::env::{InitialDist, MeanFieldEnv, ModelSpec};
use crate::error::{Error, Result};
use crate::graph::StateGraph;
use crate::oracle::{DEFAULT_TOL, DEFAULT_XI_CAP};
use crate::policy::{EnergyPolicy, IndividualPolicy, LiftedPolicy, PolicyTable, DEFAULT_CANDIDATE_CAP};
use crate::training::{ActorConfig, CriticConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Run directory; falls back to `$LTDE_OUT/<name>` and then `runs/<name>`.
    pub out: Option<PathBuf>,
    pub name: String,
    pub graph: GraphConfig,
    pub model: ModelSpec,
    pub initial: InitialDist,
    pub policy: PolicyConfig,
    pub simulate: SimulateConfig,
    pub training: TrainingConfig,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            name: "line3".into(),
            graph: GraphConfig::default(),
            model: ModelSpec::line3(),
            initial: InitialDist::point(vec![2, 1, 1]),
            policy: PolicyConfig::default(),
            simulate: SimulateConfig::default(),
            training: TrainingConfig::default(),
            oracle: OracleConfig::default(),
        }
    }
}

/// Either `line = n` or an explicit `states` / `edges` list. Only a missing
/// `[graph]` section means line3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<[u32; 2]>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            line: Some(3),
            states: None,
            edges: Vec::new(),
        }
    }
}

impl GraphConfig {
    pub fn build(&self) -> Result<StateGraph> {
        match (self.line, &self.states) {
            (Some(n), None) if self.edges.is_empty() => {
                if n == 0 {
                    return Err(Error::Config("graph.line must be positive".into()));
                }
                Ok(StateGraph::line(n))
            }
            (None, Some(states)) => {
                let edges: Vec<(u32, u32)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
                StateGraph::new(states, &edges)
            }
            _ => Err(Error::Config(
                "graph needs exactly one of `line` or `states` (with `edges`)".into(),
            )),
        }
    }
}

/// Policy used by `simulate` and `oracle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicyConfig {
    /// Multinomial lift of an individual policy.
    Lifted { individual: IndividualPolicy },
    /// Randomly initialized energy policy, seeded from the run seed.
    Energy { width: usize, radius: f64, tau: f64 },
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig::Lifted {
            individual: IndividualPolicy::Uniform,
        }
    }
}

impl PolicyConfig {
    pub fn table(&self, env: &MeanFieldEnv, cands: &CandidateSets, seed: u64) -> Result<PolicyTable> {
        match self {
            PolicyConfig::Lifted { individual } => {
                PolicyTable::new(&LiftedPolicy::new(individual.clone()), env.n_states(), env.n_agents(), cands)
            }
            PolicyConfig::Energy { width, radius, tau } => {
                let policy = EnergyPolicy::init(env.n_states(), env.n_actions(), *width, *radius, *tau, seed)?;
                PolicyTable::new(&policy, env.n_states(), env.n_agents(), cands)
            }
        }
    }

    pub fn individual(&self) -> Option<&IndividualPolicy> {
        match self {
            PolicyConfig::Lifted { individual } => Some(individual),
            PolicyConfig::Energy { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub steps: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { steps: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub actor: ActorConfig,
    /// Log exact `J` through the oracle instead of Monte Carlo estimates.
    pub use_oracle: bool,
    /// Write a checkpoint of every actor net after each iteration.
    pub checkpoints: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            actor: calibrated_actor(),
            use_oracle: true,
            checkpoints: false,
        }
    }
}

/// Step sizes that make progress within 50 actor iterations on line3. The
/// `T^(-1/2)` schedules are too timid there: averaged critic iterates stay
/// dominated by the transient and the actor barely moves.
pub fn calibrated_actor() -> ActorConfig {
    ActorConfig {
        eta: Some(CALIBRATED_ETA_ACTOR),
        critic: CriticConfig {
            eta: Some(CALIBRATED_ETA_CRITIC),
            ..CriticConfig::default()
        },
        ..ActorConfig::default()
    }
}

pub const CALIBRATED_ETA_ACTOR: f64 = 4.0;
pub const CALIBRATED_ETA_CRITIC: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub xi_cap: usize,
    pub candidate_cap: usize,
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            xi_cap: DEFAULT_XI_CAP,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            tol: DEFAULT_TOL,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !overrides.is_empty() {
            // overrides apply to the materialized config, so a leaf can be set
            // without spelling out its siblings
            let mut value = toml::Table::try_from(&cfg).map_err(|e| Error::Config(e.to_string()))?;
            for o in overrides {
                apply_override(&mut value, o)?;
            }
            cfg = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    /// Cheap structural checks; model validation happens in [`ExperimentConfig::env`].
    pub fn validate(&self) -> Result<()> {
        self.graph.build()?;
        if self.oracle.xi_cap == 0 || self.oracle.candidate_cap == 0 || !(self.oracle.tol > 0.0) {
            return Err(Error::Config("oracle caps and tolerance must be positive".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("bad run name {:?}", self.name)));
        }
        Ok(())
    }

    pub fn env(&self) -> Result<MeanFieldEnv> {
        let env = MeanFieldEnv::new(self.graph.build()?, self.model.clone())?;
        self.initial.validate(env.n_states(), env.n_agents())?;
        Ok(env)
    }

    pub fn candidates(&self, env: &MeanFieldEnv) -> Result<CandidateSets> {
        CandidateSets::new(env.n_agents(), env.n_actions(), self.oracle.candidate_cap)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Applies `a.b.c=value`. The value is parsed as a TOML literal, falling back
/// to a bare string.
pub fn apply_override(table: &mut toml::Table, arg: &str) -> Result<()> {
    let (path, raw) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {arg:?} is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad override path {path:?}")));
    }
    let value = parse_literal(raw.trim());
    let (last, parents) = keys.split_last().unwrap();
    let mut node = table;
    for key in parents {
        let entry = node
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path {path:?} crosses a non-table at {key:?}")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_line3() {
        let cfg = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let env = cfg.env().unwrap();
        assert_eq!(env.n_states(), 3);
        assert_eq!(env.n_agents(), 4);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("sede = 3", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("[model]\ngama = 0.5", &[]).is_err());
        assert!(ExperimentConfig::from_toml_str("", &["training.actor.widht=3".into()]).is_err());
    }

    #[test]
    fn dotted_overrides() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 1",
            &[
                "seed=9".into(),
                "model.gamma=0.25".into(),
                "training.actor.critic.width=8".into(),
                "name=other".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.model.gamma, 0.25);
        assert_eq!(cfg.training.actor.critic.width, 8);
        assert_eq!(cfg.name, "other");
        assert!(ExperimentConfig::from_toml_str("", &["seed".into()]).is_err());
        assert!(ExperimentConfig::from_toml_str("", &["seed.x=1".into()]).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig {
            policy: PolicyConfig::Energy {
                width: 4,
                radius: 1.0,
                tau: 2.0,
            },
            graph: GraphConfig {
                line: None,
                states: Some(vec![10, 20]),
                edges: vec![[10, 20]],
            },
            initial: InitialDist::point(vec![3, 1]),
            ..ExperimentConfig::default()
        };
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.env().unwrap().n_states(), 2);
    }

    #[test]
    fn graph_forms_are_exclusive() {
        let both = "[graph]\nline = 3\nstates = [0, 1]";
        assert!(matches!(ExperimentConfig::from_toml_str(both, &[]), Err(Error::Config(_))));
    }
}
