//! line3 values checked against a labelled-agent solver written from scratch
//! here: 81 agent profiles, per-agent stay/move dynamics, congestion reward.
//! Nothing below goes through the team-level machinery except the values
//! under test.

use ltde_core::env::{InitialDist, MeanFieldEnv, ModelSpec};
use ltde_core::graph::StateGraph;
use ltde_core::oracle::{Oracle, DEFAULT_XI_CAP};
use ltde_core::policy::{IndividualPolicy, LiftedPolicy, PolicyTable};

const N: usize = 4;
const S: usize = 3;
const GAMMA: f64 = 0.5;

// frozen from the labelled solver below
const J_UNIFORM: f64 = 247.0 / 224.0;
// staying put at (2, 1, 1) earns the best possible stage reward forever
const J_OPTIMAL: f64 = 1.25;

fn oracle() -> Oracle {
    let env = MeanFieldEnv::new(StateGraph::line(3), ModelSpec::line3()).unwrap();
    Oracle::new(env, &InitialDist::point(vec![2, 1, 1]), DEFAULT_XI_CAP).unwrap()
}

fn decode(mut p: usize) -> [usize; N] {
    let mut out = [0; N];
    for slot in out.iter_mut() {
        *slot = p % S;
        p /= S;
    }
    out
}

fn encode(states: &[usize; N]) -> usize {
    states.iter().rev().fold(0, |acc, &s| acc * S + s)
}

/// Where one agent goes: stay keeps it put, move picks a line neighbor uniformly.
fn step(s: usize, mv: bool) -> Vec<(usize, f64)> {
    match (mv, s) {
        (false, _) => vec![(s, 1.0)],
        (true, 0) => vec![(1, 1.0)],
        (true, 2) => vec![(1, 1.0)],
        (true, _) => vec![(0, 0.5), (2, 0.5)],
    }
}

/// Agent-average congestion reward `1 - mu(s_i)`.
fn reward(states: &[usize; N]) -> f64 {
    states
        .iter()
        .map(|&s| 1.0 - states.iter().filter(|&&t| t == s).count() as f64 / N as f64)
        .sum::<f64>()
        / N as f64
}

/// Next-profile pmf for a joint action given as per-agent move probabilities.
fn transition(states: &[usize; N], move_prob: &[f64; N]) -> Vec<(usize, f64)> {
    let mut dist = vec![(Vec::new(), 1.0)];
    for i in 0..N {
        let mut outcomes = Vec::new();
        for (mv, pa) in [(false, 1.0 - move_prob[i]), (true, move_prob[i])] {
            if pa == 0.0 {
                continue;
            }
            for (t, pt) in step(states[i], mv) {
                outcomes.push((t, pa * pt));
            }
        }
        dist = dist
            .into_iter()
            .flat_map(|(prefix, p): (Vec<usize>, f64)| {
                outcomes.iter().map(move |&(t, q)| {
                    let mut next = prefix.clone();
                    next.push(t);
                    (next, p * q)
                })
            })
            .collect();
    }
    dist.into_iter()
        .map(|(v, p)| (encode(&v.try_into().unwrap()), p))
        .collect()
}

fn solve(optimal: bool) -> f64 {
    let profiles = S.pow(N as u32);
    let mut v = vec![0.0; profiles];
    for _ in 0..200 {
        v = (0..profiles)
            .map(|p| {
                let states = decode(p);
                let continuation = |move_prob: [f64; N]| -> f64 {
                    transition(&states, &move_prob).iter().map(|&(q, w)| w * v[q]).sum()
                };
                let best = if optimal {
                    (0..1usize << N)
                        .map(|bits| continuation(std::array::from_fn(|i| ((bits >> i) & 1) as f64)))
                        .fold(f64::NEG_INFINITY, f64::max)
                } else {
                    continuation([0.5; N])
                };
                reward(&states) + GAMMA * best
            })
            .collect();
    }
    v[encode(&[0, 0, 1, 2])]
}

#[test]
fn labelled_solver_reproduces_frozen_values() {
    assert!((solve(false) - J_UNIFORM).abs() < 1e-13, "{}", solve(false));
    assert!((solve(true) - J_OPTIMAL).abs() < 1e-13, "{}", solve(true));
}

#[test]
fn team_oracle_matches_labelled_agents() {
    let o = oracle();
    let table = PolicyTable::new(
        &LiftedPolicy::new(IndividualPolicy::Uniform),
        S,
        N as u32,
        o.xi().candidates(),
    )
    .unwrap();
    let j = o.j(&o.policy_weights(&table), 1e-14).unwrap();
    assert!((j - J_UNIFORM).abs() < 1e-12, "{j}");
    let j_star = o.optimal_j(1e-14).unwrap();
    assert!((j_star - J_OPTIMAL).abs() < 1e-12, "{j_star}");
}

#[test]
fn space_sizes() {
    let o = oracle();
    // C(6, 2) occupancies; per occupancy the product over states of (n + 1)
    let expected: usize = (0..=N)
        .flat_map(|a| (0..=N - a).map(move |b| (a + 1) * (b + 1) * (N - a - b + 1)))
        .sum();
    assert_eq!(o.xi().n_mus(), 15);
    assert_eq!(o.xi().len(), expected);
    assert_eq!(expected, 126);
}
