//! Boltzmann machine energies over ±1 spins.
//!
//! The machine assigns `E(z) = -sum_{(i,j)} J_ij z_i z_j` over its edge set.
//! There is no built-in field term; conditioning applies a bias at sampling
//! time, which subtracts `sum_i b_i z_i` from the energy.

use crate::error::{Error, Result};
use crate::graph::IsingGraph;
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A spin assignment with every entry in {-1, +1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::InvalidArgument("empty spin configuration".into()));
        }
        if let Some(bad) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument(format!(
                "spin {bad} is {}, expected +1 or -1",
                spins[bad]
            )));
        }
        Ok(Self { spins })
    }

    /// Decodes a state index: bit i set means spin i is +1.
    pub fn from_index(index: usize, num_spins: usize) -> Self {
        let spins = (0..num_spins)
            .map(|i| if index >> i & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { spins }
    }

    /// State index with bit i set when spin i is +1. Inverse of `from_index`.
    pub fn to_index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &s)| if s == 1 { acc | 1 << i } else { acc })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| s as f64).collect()
    }

    pub(crate) fn from_raw(spins: Vec<i8>) -> Self {
        debug_assert!(spins.iter().all(|&s| s == 1 || s == -1));
        Self { spins }
    }
}

/// Per-spin bias applied when conditioning: energy gains `-sum_i b_i z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasField {
    biases: Vec<f64>,
}

impl BiasField {
    pub fn new(biases: Vec<f64>) -> Result<Self> {
        if biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("non-finite bias entry".into()));
        }
        Ok(Self { biases })
    }

    pub fn len(&self) -> usize {
        self.biases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.biases.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.biases
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoltzmannMachine {
    graph: IsingGraph,
    couplings: Vec<f64>,
    // neighbor lists as (other spin, coupling), rebuilt on construction
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl BoltzmannMachine {
    /// Couplings are indexed by the graph's canonical edge order.
    pub fn new(graph: IsingGraph, couplings: Vec<f64>) -> Result<Self> {
        if couplings.len() != graph.num_edges() {
            return Err(Error::DimensionMismatch(format!(
                "{} couplings for {} edges",
                couplings.len(),
                graph.num_edges()
            )));
        }
        if couplings.iter().any(|j| !j.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coupling".into()));
        }
        let mut adjacency = vec![Vec::new(); graph.num_spins()];
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            adjacency[i].push((j, couplings[e]));
            adjacency[j].push((i, couplings[e]));
        }
        Ok(Self { graph, couplings, adjacency })
    }

    /// Machine with couplings drawn uniformly from [-scale, scale].
    pub fn random(graph: IsingGraph, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, 0);
        let couplings = (0..graph.num_edges())
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        Self::new(graph, couplings)
    }

    pub fn graph(&self) -> &IsingGraph {
        &self.graph
    }

    pub fn num_spins(&self) -> usize {
        self.graph.num_spins()
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    /// Replaces the couplings (same edge order) and rebuilds neighbor lists.
    pub fn set_couplings(&mut self, couplings: Vec<f64>) -> Result<()> {
        *self = Self::new(self.graph.clone(), couplings)?;
        Ok(())
    }

    pub(crate) fn neighbors(&self) -> &[Vec<(usize, f64)>] {
        &self.adjacency
    }

    /// `E(z) = -sum_{(i,j)} J_ij z_i z_j`.
    pub fn energy(&self, z: &SpinConfig) -> Result<f64> {
        self.check_len(z.len())?;
        let spins = z.spins();
        let mut e = 0.0;
        for (&(i, j), &jij) in self.graph.edges().iter().zip(&self.couplings) {
            e -= jij * (spins[i] as f64) * (spins[j] as f64);
        }
        Ok(e)
    }

    /// `E(z) - sum_i b_i z_i`.
    pub fn conditioned_energy(&self, bias: &BiasField, z: &SpinConfig) -> Result<f64> {
        if bias.len() != self.num_spins() {
            return Err(Error::DimensionMismatch(format!(
                "bias length {} for {} spins",
                bias.len(),
                self.num_spins()
            )));
        }
        let mut e = self.energy(z)?;
        for (&b, &s) in bias.values().iter().zip(z.spins()) {
            e -= b * s as f64;
        }
        Ok(e)
    }

    /// Per-edge derivative of the energy: `dE/dJ_ij = -z_i z_j`.
    pub fn energy_param_gradient(&self, z: &SpinConfig) -> Result<Vec<f64>> {
        self.check_len(z.len())?;
        let spins = z.spins();
        Ok(self
            .graph
            .edges()
            .iter()
            .map(|&(i, j)| -((spins[i] as i32 * spins[j] as i32) as f64))
            .collect())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.num_spins() {
            return Err(Error::DimensionMismatch(format!(
                "{} spins for a machine over {}",
                len,
                self.num_spins()
            )));
        }
        Ok(())
    }

    /// Self-describing text form: version tag, spin count, then one
    /// `i j J` line per edge. Couplings print in shortest round-trip
    /// decimal, so parsing recovers them bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("bmvae-machine v1\n");
        out.push_str(&format!("spins {}\n", self.num_spins()));
        out.push_str(&format!("edges {}\n", self.graph.num_edges()));
        for (&(i, j), &jij) in self.graph.edges().iter().zip(&self.couplings) {
            out.push_str(&format!("{i} {j} {jij}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header != "bmvae-machine v1" {
            return Err(Error::VersionMismatch(format!("machine header {header:?}")));
        }
        let spins = parse_tagged(lines.next(), "spins")?;
        let edge_count = parse_tagged(lines.next(), "edges")?;
        let mut edges = Vec::with_capacity(edge_count);
        let mut couplings = Vec::with_capacity(edge_count);
        for _ in 0..edge_count {
            let line = lines
                .next()
                .ok_or_else(|| Error::Format { offset: text.len(), message: "truncated edge list".into() })?;
            let mut parts = line.split_whitespace();
            let i: usize = parse_field(parts.next(), "edge endpoint")?;
            let j: usize = parse_field(parts.next(), "edge endpoint")?;
            let jij: f64 = parse_field(parts.next(), "coupling")?;
            edges.push((i, j));
            couplings.push(jij);
        }
        Self::new(IsingGraph::new(spins, edges)?, couplings)
    }
}

fn parse_tagged(line: Option<&str>, tag: &str) -> Result<usize> {
    let line = line.ok_or_else(|| Error::Format { offset: 0, message: format!("missing {tag} line") })?;
    let rest = line
        .strip_prefix(tag)
        .ok_or_else(|| Error::Format { offset: 0, message: format!("expected {tag} line, got {line:?}") })?;
    rest.trim().parse().map_err(|_| Error::Format {
        offset: 0,
        message: format!("bad {tag} count in {line:?}"),
    })
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::Format { offset: 0, message: format!("missing {what}") })?
        .parse()
        .map_err(|_| Error::Format { offset: 0, message: format!("bad {what}") })
}
