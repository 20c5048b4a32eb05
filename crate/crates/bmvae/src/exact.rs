//! Exhaustive enumeration over all 2^K spin states.
//!
//! These routines are the ground truth the samplers are validated against:
//! exact partition function, exact first and second moments, and the exact
//! state distribution. All of them walk the state space in Gray-code order
//! so each step flips one spin and updates the energy incrementally (cost
//! per state is the flipped spin's degree, not the edge count). Everything
//! here is guarded to `K <= 24`.

use crate::error::{Error, Result};
use crate::machine::{BiasField, BoltzmannMachine};

/// Hard cap on exhaustive enumeration.
pub const MAX_ENUM_SPINS: usize = 24;

/// Exact first moments `<z_i>` and per-edge correlations `<z_i z_j>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub means: Vec<f64>,
    /// Indexed by the graph's canonical edge order.
    pub correlations: Vec<f64>,
}

fn check_enumerable(bm: &BoltzmannMachine) -> Result<()> {
    let k = bm.num_spins();
    if k > MAX_ENUM_SPINS {
        return Err(Error::Capacity(format!(
            "exhaustive enumeration capped at {MAX_ENUM_SPINS} spins, got {k}"
        )));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("inverse temperature {beta} must be finite and >= 0")));
    }
    Ok(())
}

fn check_bias(bm: &BoltzmannMachine, bias: Option<&BiasField>) -> Result<()> {
    if let Some(b) = bias {
        if b.len() != bm.num_spins() {
            return Err(Error::DimensionMismatch(format!(
                "bias length {} for {} spins",
                b.len(),
                bm.num_spins()
            )));
        }
    }
    Ok(())
}

/// Visits every state once in Gray-code order. The callback receives the
/// state index (bit i set means spin i is +1) and the conditioned energy
/// `E(z) - sum_i b_i z_i` (plain energy when `bias` is None).
fn enumerate<F: FnMut(usize, f64)>(bm: &BoltzmannMachine, bias: Option<&BiasField>, mut visit: F) {
    let k = bm.num_spins();
    let neighbors = bm.neighbors();
    let biases = bias.map(BiasField::values);
    // start at index 0: all spins -1
    let mut spins = vec![-1i8; k];
    let mut energy: f64 = -bm.couplings().iter().sum::<f64>();
    if let Some(b) = biases {
        energy += b.iter().sum::<f64>();
    }
    let mut index = 0usize;
    visit(index, energy);
    for step in 1usize..1 << k {
        let i = step.trailing_zeros() as usize;
        let mut field = 0.0;
        for &(j, jij) in &neighbors[i] {
            field += jij * spins[j] as f64;
        }
        if let Some(b) = biases {
            field += b[i];
        }
        // flipping z_i changes the conditioned energy by 2 z_i (L_i + b_i)
        energy += 2.0 * spins[i] as f64 * field;
        spins[i] = -spins[i];
        index ^= 1 << i;
        visit(index, energy);
    }
}

/// `log Z` at inverse temperature `beta` via a streaming log-sum-exp.
pub fn exact_log_partition(bm: &BoltzmannMachine, beta: f64) -> Result<f64> {
    check_enumerable(bm)?;
    check_beta(beta)?;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    enumerate(bm, None, |_, e| {
        let x = -beta * e;
        if x > max {
            sum = sum * (max - x).exp() + 1.0;
            max = x;
        } else {
            sum += (x - max).exp();
        }
    });
    Ok(max + sum.ln())
}

/// Exact moments of the unconditioned Boltzmann distribution. The +/- flip
/// symmetry of the pure pairwise energy forces every `<z_i>` to zero, so the
/// means are reported as exact zeros; correlations come from enumeration.
pub fn exact_moments(bm: &BoltzmannMachine, beta: f64) -> Result<Moments> {
    let mut m = exact_moments_biased(bm, None, beta)?;
    m.means.iter_mut().for_each(|v| *v = 0.0);
    Ok(m)
}

/// Exact moments of the conditioned distribution `p ∝ exp(-beta(E - b·z))`.
pub fn exact_moments_biased(
    bm: &BoltzmannMachine,
    bias: Option<&BiasField>,
    beta: f64,
) -> Result<Moments> {
    check_enumerable(bm)?;
    check_beta(beta)?;
    check_bias(bm, bias)?;
    let k = bm.num_spins();
    let mut e_min = f64::INFINITY;
    enumerate(bm, bias, |_, e| e_min = e_min.min(e));
    let mut total = 0.0;
    let mut means = vec![0.0; k];
    let mut corr = vec![0.0; bm.graph().num_edges()];
    let edges = bm.graph().edges().to_vec();
    enumerate(bm, bias, |index, e| {
        let w = (-beta * (e - e_min)).exp();
        total += w;
        for (i, m) in means.iter_mut().enumerate() {
            *m += if index >> i & 1 == 1 { w } else { -w };
        }
        for (e_idx, &(i, j)) in edges.iter().enumerate() {
            let same = (index >> i ^ index >> j) & 1 == 0;
            corr[e_idx] += if same { w } else { -w };
        }
    });
    means.iter_mut().for_each(|m| *m /= total);
    corr.iter_mut().for_each(|c| *c /= total);
    Ok(Moments { means, correlations: corr })
}

/// Exact mean conditioned energy `<E - b·z>` under the conditioned
/// distribution at `beta` (plain `<E>` when `bias` is None).
pub fn exact_mean_energy(bm: &BoltzmannMachine, bias: Option<&BiasField>, beta: f64) -> Result<f64> {
    check_enumerable(bm)?;
    check_beta(beta)?;
    check_bias(bm, bias)?;
    let mut e_min = f64::INFINITY;
    enumerate(bm, bias, |_, e| e_min = e_min.min(e));
    let mut total = 0.0;
    let mut acc = 0.0;
    enumerate(bm, bias, |_, e| {
        let w = (-beta * (e - e_min)).exp();
        total += w;
        acc += w * e;
    });
    Ok(acc / total)
}

/// Exact probability of every state, indexed by state bits.
pub fn exact_distribution(
    bm: &BoltzmannMachine,
    bias: Option<&BiasField>,
    beta: f64,
) -> Result<Vec<f64>> {
    check_enumerable(bm)?;
    check_beta(beta)?;
    check_bias(bm, bias)?;
    let k = bm.num_spins();
    let mut e_min = f64::INFINITY;
    enumerate(bm, bias, |_, e| e_min = e_min.min(e));
    let mut probs = vec![0.0; 1 << k];
    let mut total = 0.0;
    enumerate(bm, bias, |index, e| {
        let w = (-beta * (e - e_min)).exp();
        probs[index] = w;
        total += w;
    });
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphSpec, IsingGraph};
    use crate::machine::SpinConfig;

    fn pair_machine(j: f64) -> BoltzmannMachine {
        let g = IsingGraph::new(2, vec![(0, 1)]).unwrap();
        BoltzmannMachine::new(g, vec![j]).unwrap()
    }

    #[test]
    fn incremental_energies_match_direct_evaluation() {
        let g = build_graph(&GraphSpec::RandomRegular { num_spins: 10, degree: 3, seed: 1 }).unwrap();
        let bm = BoltzmannMachine::random(g, 1.3, 21).unwrap();
        let bias = BiasField::new((0..10).map(|i| 0.3 * i as f64 - 1.0).collect()).unwrap();
        enumerate(&bm, Some(&bias), |index, e| {
            let z = SpinConfig::from_index(index, 10);
            let direct = bm.conditioned_energy(&bias, &z).unwrap();
            assert!((e - direct).abs() < 1e-9, "state {index}: {e} vs {direct}");
        });
    }

    #[test]
    fn two_spin_log_partition_hand_check() {
        let bm = pair_machine(1.0);
        // states: two aligned at E=-1, two anti-aligned at E=+1
        let expected = (2.0 * 1f64.exp() + 2.0 * (-1f64).exp()).ln();
        let got = exact_log_partition(&bm, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn log_partition_at_zero_beta_counts_states() {
        let g = build_graph(&GraphSpec::Complete { num_spins: 6 }).unwrap();
        let bm = BoltzmannMachine::random(g, 2.0, 5).unwrap();
        let got = exact_log_partition(&bm, 0.0).unwrap();
        assert!((got - 6.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn log_partition_respects_ground_state_bounds() {
        let g = build_graph(&GraphSpec::RandomRegular { num_spins: 12, degree: 3, seed: 3 }).unwrap();
        let bm = BoltzmannMachine::random(g, 1.0, 10).unwrap();
        let beta = 1.7;
        let mut e_min = f64::INFINITY;
        enumerate(&bm, None, |_, e| e_min = e_min.min(e));
        let logz = exact_log_partition(&bm, beta).unwrap();
        assert!(logz >= -beta * e_min - 1e-12);
        assert!(logz <= 12.0 * std::f64::consts::LN_2 - beta * e_min + 1e-12);
    }

    #[test]
    fn two_spin_correlation_is_tanh_beta_j() {
        let bm = pair_machine(1.0);
        let m = exact_moments(&bm, 1.0).unwrap();
        assert_eq!(m.means, vec![0.0, 0.0], "pure pairwise energy has zero means");
        assert!((m.correlations[0] - 1f64.tanh()).abs() < 1e-12);
    }

    #[test]
    fn moments_stay_in_unit_interval() {
        let g = build_graph(&GraphSpec::Grid { rows: 3, cols: 4 }).unwrap();
        let bm = BoltzmannMachine::random(g, 1.5, 6).unwrap();
        let bias = BiasField::new((0..12).map(|i| (i as f64 - 6.0) * 0.4).collect()).unwrap();
        let m = exact_moments_biased(&bm, Some(&bias), 1.2).unwrap();
        assert!(m.means.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        assert!(m.correlations.iter().all(|v| v.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn single_spin_bias_mean_is_tanh() {
        let g = IsingGraph::new(1, vec![]).unwrap();
        let bm = BoltzmannMachine::new(g, vec![]).unwrap();
        let bias = BiasField::new(vec![0.7]).unwrap();
        let m = exact_moments_biased(&bm, Some(&bias), 1.5).unwrap();
        // p ∝ exp(beta b z) so <z> = tanh(beta b)
        assert!((m.means[0] - (1.5 * 0.7f64).tanh()).abs() < 1e-12);
    }

    #[test]
    fn distribution_is_normalized_and_boltzmann() {
        let bm = pair_machine(0.8);
        let beta = 1.3;
        let p = exact_distribution(&bm, None, beta).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // aligned states are exp(2 beta J) more likely than anti-aligned
        let ratio = p[0b11] / p[0b01];
        assert!((ratio - (2.0 * beta * 0.8).exp()).abs() < 1e-9);
    }

    #[test]
    fn mean_energy_decreases_with_beta() {
        let g = build_graph(&GraphSpec::RandomRegular { num_spins: 10, degree: 3, seed: 8 }).unwrap();
        let bm = BoltzmannMachine::random(g, 1.0, 12).unwrap();
        let energies: Vec<f64> = [0.1, 0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&b| exact_mean_energy(&bm, None, b).unwrap())
            .collect();
        for w in energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "mean energy must not increase with beta: {energies:?}");
        }
    }

    #[test]
    fn enumeration_is_capped() {
        let g = build_graph(&GraphSpec::Complete { num_spins: 25 }).unwrap();
        let bm = BoltzmannMachine::random(g, 0.1, 1).unwrap();
        assert!(matches!(exact_log_partition(&bm, 1.0), Err(Error::Capacity(_))));
    }
}
