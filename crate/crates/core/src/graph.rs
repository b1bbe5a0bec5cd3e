//! Undirected state graph with k-hop neighborhood queries.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected graph over the finite state set.
///
/// States are addressed by their position in the construction order, which is
/// also the canonical order used by every window and window-indexed vector.
#[derive(Debug)]
pub struct StateGraph {
    ids: Vec<u32>,
    index: HashMap<u32, usize>,
    adjacency: Vec<Vec<usize>>,
    edges: Vec<(usize, usize)>,
    // BFS distance rows, filled on first use
    distances: Vec<OnceLock<Vec<Option<usize>>>>,
}

/// The k-hop neighborhood of a state (or its complement), members in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub center: usize,
    pub radius: usize,
    pub members: Vec<usize>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, s: usize) -> bool {
        self.members.binary_search(&s).is_ok()
    }
}

impl Clone for StateGraph {
    fn clone(&self) -> Self {
        Self {
            ids: self.ids.clone(),
            index: self.index.clone(),
            adjacency: self.adjacency.clone(),
            edges: self.edges.clone(),
            distances: (0..self.ids.len()).map(|_| OnceLock::new()).collect(),
        }
    }
}

impl StateGraph {
    pub fn new(states: &[u32], edges: &[(u32, u32)]) -> Result<Self> {
        let mut index = HashMap::with_capacity(states.len());
        for (i, &id) in states.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(Error::DuplicateState(id));
            }
        }
        let mut adjacency = vec![Vec::new(); states.len()];
        let mut seen = HashSet::new();
        let mut edge_list = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            let (Some(&i), Some(&j)) = (index.get(&a), index.get(&b)) else {
                return Err(Error::UnknownEdgeEndpoint(a, b));
            };
            if i == j {
                return Err(Error::SelfLoop(a));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge(a, b));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
            edge_list.push(key);
        }
        for row in &mut adjacency {
            row.sort_unstable();
        }
        Ok(Self {
            ids: states.to_vec(),
            index,
            adjacency,
            edges: edge_list,
            distances: (0..states.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Line graph `0 - 1 - ... - (n-1)`.
    pub fn line(n: usize) -> Self {
        let states: Vec<u32> = (0..n as u32).collect();
        let edges: Vec<(u32, u32)> = (1..n as u32).map(|i| (i - 1, i)).collect();
        Self::new(&states, &edges).expect("line graph is well formed")
    }

    pub fn n_states(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn index_of(&self, id: u32) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownStateId(id))
    }

    pub fn neighbors(&self, s: usize) -> Result<&[usize]> {
        self.adjacency.get(s).map(Vec::as_slice).ok_or(Error::UnknownState(s))
    }

    fn check(&self, s: usize) -> Result<()> {
        if s < self.n_states() {
            Ok(())
        } else {
            Err(Error::UnknownState(s))
        }
    }

    /// Shortest-path distances from `s`; `None` for unreachable states.
    pub fn distances_from(&self, s: usize) -> Result<&[Option<usize>]> {
        self.check(s)?;
        Ok(self.distances[s].get_or_init(|| {
            let mut dist = vec![None; self.n_states()];
            dist[s] = Some(0);
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                let d = dist[u].unwrap();
                for &v in &self.adjacency[u] {
                    if dist[v].is_none() {
                        dist[v] = Some(d + 1);
                        queue.push_back(v);
                    }
                }
            }
            dist
        }))
    }

    pub fn distance(&self, s: usize, t: usize) -> Result<Option<usize>> {
        self.check(t)?;
        Ok(self.distances_from(s)?[t])
    }

    /// `N^k_s`: every state within `k` hops of `s`, including `s`.
    pub fn k_hop(&self, s: usize, k: usize) -> Result<Window> {
        let dist = self.distances_from(s)?;
        let members = (0..self.n_states())
            .filter(|&t| matches!(dist[t], Some(d) if d <= k))
            .collect();
        Ok(Window { center: s, radius: k, members })
    }

    /// `N^{-k}_s`: the states outside the k-hop neighborhood of `s`.
    pub fn complement_k_hop(&self, s: usize, k: usize) -> Result<Window> {
        let dist = self.distances_from(s)?;
        let members = (0..self.n_states())
            .filter(|&t| !matches!(dist[t], Some(d) if d <= k))
            .collect();
        Ok(Window { center: s, radius: k, members })
    }

    /// Largest finite shortest-path distance. Once `k` reaches it, every
    /// k-hop neighborhood covers its whole connected component.
    pub fn diameter(&self) -> usize {
        (0..self.n_states())
            .map(|s| {
                self.distances_from(s)
                    .unwrap()
                    .iter()
                    .flatten()
                    .copied()
                    .max()
                    .unwrap_or(0)
            })
            .max()
            .unwrap_or(0)
    }
}

/// Entries of a per-state vector at the window members, in canonical order.
pub fn restrict<T: Clone>(values: &[T], window: &Window) -> Vec<T> {
    window.members.iter().map(|&s| values[s].clone()).collect()
}
