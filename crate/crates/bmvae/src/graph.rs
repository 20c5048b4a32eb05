//! Interaction graphs for the Boltzmann-machine prior.
//!
//! A graph fixes which spin pairs carry a coupling. Edges are stored in
//! canonical form: each pair ordered `i < j`, the list sorted
//! lexicographically, no duplicates. Gradient and coupling vectors are
//! indexed by this edge order.

use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsingGraph {
    num_spins: usize,
    edges: Vec<(usize, usize)>,
}

impl IsingGraph {
    /// Builds a graph from an arbitrary edge list, canonicalizing order.
    /// Rejects self-loops, out-of-range endpoints, and repeated edges.
    pub fn new(num_spins: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if num_spins == 0 {
            return Err(Error::InvalidArgument("graph needs at least one spin".into()));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at spin {a}")));
            }
            if a >= num_spins || b >= num_spins {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) out of range for {num_spins} spins"
                )));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        if canon.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("repeated edge".into()));
        }
        Ok(Self { num_spins, edges: canon })
    }

    pub fn num_spins(&self) -> usize {
        self.num_spins
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical order; couplings and gradients index into this.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Per-spin neighbor list as (neighbor, edge index) pairs.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.num_spins];
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            adj[i].push((j, e));
            adj[j].push((i, e));
        }
        adj
    }
}

/// Recipe for a standard topology. `RandomRegular` is deterministic in its
/// seed, so a spec names one graph, not a family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Complete { num_spins: usize },
    Grid { rows: usize, cols: usize },
    RandomRegular { num_spins: usize, degree: usize, seed: u64 },
}

pub fn build_graph(spec: &GraphSpec) -> Result<IsingGraph> {
    match *spec {
        GraphSpec::Complete { num_spins } => {
            let mut edges = Vec::new();
            for i in 0..num_spins {
                for j in (i + 1)..num_spins {
                    edges.push((i, j));
                }
            }
            IsingGraph::new(num_spins, edges)
        }
        GraphSpec::Grid { rows, cols } => {
            if rows == 0 || cols == 0 {
                return Err(Error::InvalidArgument("grid needs positive rows and cols".into()));
            }
            let at = |r: usize, c: usize| r * cols + c;
            let mut edges = Vec::new();
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        edges.push((at(r, c), at(r, c + 1)));
                    }
                    if r + 1 < rows {
                        edges.push((at(r, c), at(r + 1, c)));
                    }
                }
            }
            IsingGraph::new(rows * cols, edges)
        }
        GraphSpec::RandomRegular { num_spins, degree, seed } => {
            random_regular(num_spins, degree, seed)
        }
    }
}

/// Pairing-model construction: shuffle `degree` stubs per vertex, pair them
/// up, and retry on self-loops or duplicates. Each retry reseeds from
/// (seed, attempt), so the result depends only on the arguments.
fn random_regular(num_spins: usize, degree: usize, seed: u64) -> Result<IsingGraph> {
    if degree >= num_spins {
        return Err(Error::InvalidArgument(format!(
            "degree {degree} impossible with {num_spins} spins"
        )));
    }
    if num_spins * degree % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "no {degree}-regular graph on {num_spins} vertices (odd stub count)"
        )));
    }
    let mut stubs: Vec<usize> = (0..num_spins).flat_map(|v| std::iter::repeat(v).take(degree)).collect();
    for attempt in 0..10_000u64 {
        let mut rng = rng::stream(seed, attempt);
        stubs.shuffle(&mut rng);
        let mut edges: Vec<(usize, usize)> = stubs
            .chunks_exact(2)
            .map(|p| (p[0].min(p[1]), p[0].max(p[1])))
            .collect();
        edges.sort_unstable();
        let simple = edges.iter().all(|&(a, b)| a != b)
            && edges.windows(2).all(|w| w[0] != w[1]);
        if simple {
            return IsingGraph::new(num_spins, edges);
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not realize a {degree}-regular graph on {num_spins} vertices"
    )))
}
