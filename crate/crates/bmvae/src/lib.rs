//! Variational autoencoder with a Boltzmann-machine latent prior.
//!
//! The crate has three layers:
//!
//! * spin-model core: interaction graphs, pairwise energies, and exact
//!   enumeration oracles (`graph`, `machine`, `exact`);
//! * samplers: fixed-temperature and annealed Gibbs chains plus an exact
//!   inverse-CDF sampler, all bit-reproducible from a seed (`sampler`);
//! * model stack: hand-rolled dense networks with exact reverse-mode
//!   gradients, the training loop for the Boltzmann-prior model and its
//!   Gaussian baseline, conditional generation, and file formats
//!   (`nn`, `posterior`, `training`, `generation`, `dataset`, `checkpoint`,
//!   `image`, `config`, `cli`).

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod exact;
pub mod generation;
pub mod graph;
pub mod image;
pub mod machine;
pub mod nn;
pub mod posterior;
pub mod rng;
pub mod sampler;
pub mod training;

pub use error::{Error, Result};
