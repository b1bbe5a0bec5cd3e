//! The `ltde` subcommands: simulate, oracle, train, verify and export.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::ExperimentConfig;
use crate::env::AgentProfile;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, Csv, RunDir, RunManifest};
use crate::neural::input_dim;
use crate::oracle::Oracle;
use crate::policy::{sample_agent_actions, sample_team_action};
use crate::rng::{stream, tag};
use crate::training::actor_train;
use crate::verify::{verify, VerifyReport, VerifySettings};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "LTDE_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        // a model that fails validation is a bad config as far as the CLI is concerned
        Error::Config(_)
        | Error::DuplicateState(_)
        | Error::UnknownEdgeEndpoint(..)
        | Error::SelfLoop(_)
        | Error::DuplicateEdge(..)
        | Error::UnknownStateId(_)
        | Error::InvalidKernel { .. }
        | Error::RewardOutOfBounds { .. }
        | Error::InvalidModel(_)
        | Error::InvalidHyperparameter(_) => EXIT_CONFIG,
        Error::CapExceeded { .. } => EXIT_CAP,
        Error::VerificationFailed(_) => EXIT_VERIFY,
        _ => EXIT_OTHER,
    }
}

/// `--out`, then the config's `out`, then `$LTDE_OUT/<name>`, then `runs/<name>`.
pub fn resolve_out(cfg: &ExperimentConfig, cli: Option<&Path>) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.out {
        return p.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) => PathBuf::from(root).join(&cfg.name),
        None => PathBuf::from("runs").join(&cfg.name),
    }
}

struct Clock {
    enabled: bool,
    phases: BTreeMap<String, f64>,
    start: Instant,
}

impl Clock {
    fn new(enabled: bool) -> Self {
        Self {
            enabled,
            phases: BTreeMap::new(),
            start: Instant::now(),
        }
    }

    fn lap(&mut self, phase: &str) {
        let now = Instant::now();
        self.phases
            .insert(phase.to_string(), now.duration_since(self.start).as_secs_f64());
        self.start = now;
    }

    fn finish(self) -> Option<BTreeMap<String, f64>> {
        self.enabled.then_some(self.phases)
    }
}

fn manifest(command: &str, cfg: &ExperimentConfig, sizes: BTreeMap<String, u64>) -> Result<RunManifest> {
    Ok(RunManifest {
        command: command.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: serde_json::to_value(cfg)?,
        sizes,
        timings: None,
        files: BTreeMap::new(),
    })
}

/// Runs `simulate`, `oracle` or `train` into `out`.
pub fn run_command(command: &str, cfg: &ExperimentConfig, out: &Path, timings: bool) -> Result<RunManifest> {
    match command {
        "simulate" => cmd_simulate(cfg, out, timings),
        "oracle" => cmd_oracle(cfg, out, timings),
        "train" => cmd_train(cfg, out, timings),
        other => Err(Error::Config(format!("unknown command {other:?}"))),
    }
}

/// Seeded team-level trajectory, plus the coupled agent-level trajectory when
/// the policy is a lifted individual policy. Both read the same random stream,
/// so their `mu` sequences coincide.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path, timings: bool) -> Result<RunManifest> {
    let mut clock = Clock::new(timings);
    let env = cfg.env()?;
    let cands = cfg.candidates(&env)?;
    let (n_states, n_actions) = (env.n_states(), env.n_actions());
    let steps = cfg.simulate.steps;
    let mut dir = RunDir::create(out)?;

    let mut header = vec!["step".to_string()];
    header.extend((0..n_states).map(|s| format!("mu_{s}")));
    for s in 0..n_states {
        header.extend((0..n_actions).map(|a| format!("h_{s}_{a}")));
    }
    header.push("reward".into());
    let mut team = Csv::new(&header);
    let mut rng = stream(cfg.seed, &[tag::SIMULATE]);
    let mut mu = cfg.initial.sample(&mut rng);
    let table = match cfg.policy.individual() {
        Some(_) => None,
        None => Some(cfg.policy.table(&env, &cands, cfg.seed)?),
    };
    for step in 0..steps {
        let h = match (&table, cfg.policy.individual()) {
            (Some(table), _) => table.sample(&mu, &cands, &mut rng),
            (None, Some(pi)) => sample_team_action(pi, &mu, n_actions, &mut rng)?,
            (None, None) => unreachable!(),
        };
        let mut row = vec![step.to_string()];
        row.extend(mu.counts().iter().map(u32::to_string));
        for s in 0..n_states {
            row.extend(h.row(s).iter().map(u32::to_string));
        }
        row.push(fmt_f64(env.global_stage_reward(&mu, &h)?));
        team.row(&row);
        mu = env.team_sample_step(&mu, &h, &mut rng)?;
    }
    dir.write("team.csv", &team.into_bytes())?;

    if let Some(pi) = cfg.policy.individual() {
        let n_agents = env.n_agents() as usize;
        let mut header = vec!["step".to_string()];
        header.extend((0..n_agents).map(|i| format!("state_{i}")));
        header.extend((0..n_agents).map(|i| format!("action_{i}")));
        header.extend((0..n_states).map(|s| format!("mu_{s}")));
        header.push("reward".into());
        let mut agents = Csv::new(&header);
        let mut rng = stream(cfg.seed, &[tag::SIMULATE]);
        let mut profile = AgentProfile::from_dist(&cfg.initial.sample(&mut rng));
        for step in 0..steps {
            let actions = sample_agent_actions(pi, &profile, n_states, n_actions, &mut rng)?;
            let mu = crate::env::empirical_of(&profile, n_states)?;
            let acting = profile.with_actions(actions.clone());
            let (next, rewards) = env.agent_step(&acting, &mut rng)?;
            let mut row = vec![step.to_string()];
            row.extend(acting.states.iter().map(usize::to_string));
            row.extend(actions.iter().map(usize::to_string));
            row.extend(mu.counts().iter().map(u32::to_string));
            row.push(fmt_f64(rewards.iter().sum::<f64>() / n_agents as f64));
            agents.row(&row);
            profile = next;
        }
        dir.write("agents.csv", &agents.into_bytes())?;
    }
    clock.lap("simulate");
    let sizes = BTreeMap::from([("steps".to_string(), steps as u64)]);
    let mut m = manifest("simulate", cfg, sizes)?;
    m.timings = clock.finish();
    dir.finish(m)
}

/// Exact tables for the configured policy.
pub fn cmd_oracle(cfg: &ExperimentConfig, out: &Path, timings: bool) -> Result<RunManifest> {
    let mut clock = Clock::new(timings);
    let env = cfg.env()?;
    let oracle = Oracle::new(env.clone(), &cfg.initial, cfg.oracle.xi_cap)?;
    clock.lap("enumerate");
    let table = cfg.policy.table(&env, oracle.xi().candidates(), cfg.seed)?;
    let weights = oracle.policy_weights(&table);
    let (tables, tables_manifest) = oracle.exact_tables(&weights, cfg.oracle.tol)?;
    clock.lap("solve");
    let mut dir = RunDir::create(out)?;
    dir.write_json("tables.json", &tables)?;
    dir.write_json("oracle.json", &tables_manifest)?;
    dir.write("xi.csv", oracle.xi_csv(&tables).as_bytes())?;
    dir.write("mu.csv", oracle.mu_csv(&tables).as_bytes())?;
    let sizes = BTreeMap::from([
        ("xi".to_string(), oracle.xi().len() as u64),
        ("mu_space".to_string(), oracle.xi().n_mus() as u64),
    ]);
    let mut m = manifest("oracle", cfg, sizes)?;
    m.timings = clock.finish();
    dir.finish(m)
}

/// Actor-critic training with a CSV log and checkpoints of the final and
/// best actor nets.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path, timings: bool) -> Result<RunManifest> {
    let mut clock = Clock::new(timings);
    let env = cfg.env()?;
    let actor = &cfg.training.actor;
    let oracle = if cfg.training.use_oracle {
        Some(Oracle::new(env.clone(), &cfg.initial, cfg.oracle.xi_cap)?)
    } else {
        None
    };
    let run = actor_train(&env, &cfg.initial, actor, cfg.seed, oracle.as_ref())?;
    clock.lap("train");
    let n_states = env.n_states();
    let mut dir = RunDir::create(out)?;

    let mut header = vec!["iteration".to_string(), "j".into(), "j_exact".into()];
    header.extend((0..n_states).map(|s| format!("critic_loss_{s}")));
    header.extend((0..n_states).map(|s| format!("grad_norm_{s}")));
    let mut log = Csv::new(&header);
    for r in &run.records {
        let mut row = vec![
            r.iteration.to_string(),
            r.j.map(fmt_f64).unwrap_or_default(),
            r.j_exact.to_string(),
        ];
        for values in [&r.critic_loss, &r.grad_norm] {
            row.extend((0..n_states).map(|s| values.get(s).map(|&v| fmt_f64(v)).unwrap_or_default()));
        }
        log.row(&row);
    }
    dir.write("training.csv", &log.into_bytes())?;
    dir.write_json("records.json", &run.records)?;

    let mut save = |label: &str, t: usize| -> Result<()> {
        for (s, net) in run.thetas[t].nets.iter().enumerate() {
            dir.write(&format!("theta_{label}_s{s}.bin"), &net.to_bytes())?;
        }
        Ok(())
    };
    if cfg.training.checkpoints {
        for t in 0..run.thetas.len() {
            save(&format!("{t:04}"), t)?;
        }
    }
    save("final", run.thetas.len() - 1)?;
    if let Some(best) = run.best_iteration {
        save("best", best)?;
    }

    let mut sizes = BTreeMap::new();
    for s in 0..n_states {
        let window = env.graph().k_hop(s, actor.k)?;
        sizes.insert(format!("critic_in_dim_{s}"), input_dim(window.len(), env.n_actions()) as u64);
    }
    if let Some(o) = &oracle {
        sizes.insert("xi".into(), o.xi().len() as u64);
    }
    let mut m = manifest("train", cfg, sizes)?;
    if let Some(best) = run.best_iteration {
        m.sizes.insert("best_iteration".into(), best as u64);
    }
    m.timings = clock.finish();
    dir.finish(m)
}

/// Runs the acceptance criteria and writes `verify.json`. The report is
/// returned even when a criterion fails.
pub fn cmd_verify(
    cfg: &ExperimentConfig,
    settings: &VerifySettings,
    only: &[u8],
    out: &Path,
    timings: bool,
) -> Result<(VerifyReport, RunManifest)> {
    let mut clock = Clock::new(timings);
    let report = verify(cfg, settings, only);
    clock.lap("verify");
    let mut dir = RunDir::create(out)?;
    dir.write_json("verify.json", &report)?;
    let sizes = BTreeMap::from([("criteria".to_string(), report.criteria.len() as u64)]);
    let mut m = manifest("verify", cfg, sizes)?;
    m.timings = clock.finish();
    Ok((report, dir.finish(m)?))
}

/// gnuplot-ready columns: the header as a comment, then whitespace-separated
/// rows. Non-numeric cells become `?`, which gnuplot treats as missing.
pub fn export_columns(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if i == 0 {
            out.push_str("# ");
            out.push_str(&cells.join(" "));
        } else {
            let cells: Vec<String> = cells
                .iter()
                .map(|c| match *c {
                    "true" => "1".to_string(),
                    "false" => "0".to_string(),
                    c if c.parse::<f64>().is_ok() => c.to_string(),
                    _ => "?".to_string(),
                })
                .collect();
            out.push_str(&cells.join(" "));
        }
        out.push('\n');
    }
    out
}
