use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{Oracle, PolicyWeights, MEASURE_TOL};
use crate::error::Result;

/// Dense oracle tables for one policy.
#[derive(Debug, Clone, Serialize)]
pub struct ExactTables {
    /// `Q_s^Pi` per state, indexed by `xi`.
    pub q_team: Vec<Vec<f64>>,
    /// `V~^Pi` per state distribution.
    pub v: Vec<f64>,
    pub stationary: Vec<f64>,
    pub visitation: Vec<f64>,
    pub q_opt: Vec<f64>,
    pub j: f64,
    pub j_opt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TablesManifest {
    pub model_hash: String,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_agents: u32,
    pub mu_space_size: usize,
    pub xi_size: usize,
    pub q_tol: f64,
    pub measure_tol: f64,
    pub stationary_iterations: usize,
    pub stationary_lazy: bool,
    pub stationary_residual: f64,
}

impl Oracle {
    /// SHA-256 over the canonical JSON of the graph, model and initial law.
    pub fn model_hash(&self) -> String {
        let graph = self.env.graph();
        let edges: Vec<(u32, u32)> = graph
            .edges()
            .iter()
            .map(|&(a, b)| (graph.ids()[a], graph.ids()[b]))
            .collect();
        let payload = serde_json::json!({
            "states": graph.ids(),
            "edges": edges,
            "model": self.env.model(),
            "initial": self.p0,
        });
        hex::encode(Sha256::digest(payload.to_string().as_bytes()))
    }

    pub fn exact_tables(&self, weights: &PolicyWeights, tol: f64) -> Result<(ExactTables, TablesManifest)> {
        let q_team = self.team_q_all(weights, tol)?;
        let v = self.policy_average(weights, &Oracle::aggregate(&q_team));
        let j = self.p0.iter().zip(&v).filter(|(p, _)| **p > 0.0).map(|(p, v)| p * v).sum();
        let (stationary, report) = self.stationary(weights, MEASURE_TOL)?;
        let visitation = self.visitation(weights, MEASURE_TOL);
        let q_opt = self.optimal_q(tol)?.values;
        let j_opt = self.optimal_j(tol)?;
        let manifest = TablesManifest {
            model_hash: self.model_hash(),
            n_states: self.env.n_states(),
            n_actions: self.env.n_actions(),
            n_agents: self.env.n_agents(),
            mu_space_size: self.xi.n_mus(),
            xi_size: self.xi.len(),
            q_tol: tol,
            measure_tol: MEASURE_TOL,
            stationary_iterations: report.iterations,
            stationary_lazy: report.lazy,
            stationary_residual: report.residual,
        };
        Ok((
            ExactTables {
                q_team,
                v,
                stationary,
                visitation,
                q_opt,
                j,
                j_opt,
            },
            manifest,
        ))
    }

    /// One row per `xi`: id, mu counts, h counts, then every `Q_s`, `Q*`, `nu`, `sigma`.
    pub fn xi_csv(&self, tables: &ExactTables) -> String {
        let n_s = self.env.n_states();
        let n_a = self.env.n_actions();
        let mut header = vec!["xi".to_string()];
        header.extend((0..n_s).map(|s| format!("mu_{s}")));
        for s in 0..n_s {
            header.extend((0..n_a).map(|a| format!("h_{s}_{a}")));
        }
        header.extend((0..n_s).map(|s| format!("q_{s}")));
        header.extend(["q_opt", "stationary", "visitation"].map(String::from));
        let mut out = header.join(",");
        out.push('\n');
        for id in 0..self.xi.len() {
            let mut row = vec![id.to_string()];
            row.extend(self.xi.mu(self.xi.mu_of(id)).counts().iter().map(u32::to_string));
            for s in 0..n_s {
                row.extend(self.xi.h_row(id, s).iter().map(u32::to_string));
            }
            row.extend(tables.q_team.iter().map(|q| format!("{:?}", q[id])));
            row.push(format!("{:?}", tables.q_opt[id]));
            row.push(format!("{:?}", tables.stationary[id]));
            row.push(format!("{:?}", tables.visitation[id]));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// One row per state distribution: id, counts, `P_0`, `V~`.
    pub fn mu_csv(&self, tables: &ExactTables) -> String {
        let n_s = self.env.n_states();
        let mut header = vec!["mu".to_string()];
        header.extend((0..n_s).map(|s| format!("count_{s}")));
        header.extend(["p0", "v"].map(String::from));
        let mut out = header.join(",");
        out.push('\n');
        for m in 0..self.xi.n_mus() {
            let mut row = vec![m.to_string()];
            row.extend(self.xi.mu(m).counts().iter().map(u32::to_string));
            row.push(format!("{:?}", self.p0[m]));
            row.push(format!("{:?}", tables.v[m]));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::line3_oracle;
    use crate::policy::{IndividualPolicy, LiftedPolicy, PolicyTable};

    #[test]
    fn tables_are_consistent_and_reproducible() {
        let o = line3_oracle();
        let table = PolicyTable::new(&LiftedPolicy::new(IndividualPolicy::Uniform), 3, 4, o.xi().candidates()).unwrap();
        let w = o.policy_weights(&table);
        let (t, m) = o.exact_tables(&w, 1e-10).unwrap();
        assert_eq!(m.xi_size, 126);
        assert_eq!(m.mu_space_size, 15);
        assert!(t.j <= t.j_opt + 1e-9);
        let csv = o.xi_csv(&t);
        assert_eq!(csv.lines().count(), 127);
        let (t2, m2) = o.exact_tables(&w, 1e-10).unwrap();
        assert_eq!(csv, o.xi_csv(&t2));
        assert_eq!(o.mu_csv(&t), o.mu_csv(&t2));
        assert_eq!(m.model_hash, m2.model_hash);
        assert_eq!(m.model_hash.len(), 64);
    }
}
