//! Boltzmann samplers: exact enumeration, fixed-temperature Gibbs, and
//! annealed Gibbs with an optional conditioning bias.
//!
//! All three target `p(z) ∝ exp(-beta (E(z) - b·z))`. The Gibbs kernel is a
//! heat-bath update swept over sites in fixed order 0..K-1; chains are
//! independent, each owning its own RNG stream derived from (seed, chain
//! index), so batches are bit-reproducible and chain results concatenate in
//! chain order.

use crate::error::{Error, Result};
use crate::exact;
use crate::machine::{BiasField, BoltzmannMachine, SpinConfig};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Settings for one sampling run.
///
/// `schedule` selects the annealed sampler: a strictly increasing list of
/// inverse temperatures ending at `beta`, with `sweeps_per_step` sweeps at
/// each. Without a schedule the sampler runs fixed-temperature Gibbs with
/// `burn_in_sweeps` followed by `thinning_sweeps` between recorded samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    pub beta: f64,
    pub bias: Option<BiasField>,
    pub num_samples: usize,
    pub chains: usize,
    pub burn_in_sweeps: usize,
    pub thinning_sweeps: usize,
    pub sweeps_per_step: usize,
    pub schedule: Option<Vec<f64>>,
    pub seed: u64,
}

impl SamplerSpec {
    /// Fast unbiased sampling near equilibrium: beta = 1, one chain per
    /// sample, 200 burn-in sweeps, thinning 5.
    pub fn mode1(num_samples: usize, seed: u64) -> Self {
        Self {
            beta: 1.0,
            bias: None,
            num_samples,
            chains: num_samples.max(1),
            burn_in_sweeps: 200,
            thinning_sweeps: 5,
            sweeps_per_step: 10,
            schedule: None,
            seed,
        }
    }

    /// Slow annealed sampling that concentrates on low-energy states:
    /// 20 geometric steps from beta 0.2 to 5, 10 sweeps per step.
    pub fn mode2(num_samples: usize, seed: u64) -> Self {
        let schedule = geometric_schedule(0.2, 5.0, 20);
        Self {
            beta: *schedule.last().unwrap(),
            bias: None,
            num_samples,
            chains: num_samples.max(1),
            burn_in_sweeps: 0,
            thinning_sweeps: 1,
            sweeps_per_step: 10,
            schedule: Some(schedule),
            seed,
        }
    }

    /// Annealed sampling under a conditioning bias.
    pub fn mode3(num_samples: usize, bias: BiasField, seed: u64) -> Self {
        let mut spec = Self::mode2(num_samples, seed);
        spec.bias = Some(bias);
        spec
    }

    pub fn with_bias(mut self, bias: Option<BiasField>) -> Self {
        self.bias = bias;
        self
    }

    fn validate(&self, num_spins: usize) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidArgument(format!("beta {} must be finite and positive", self.beta)));
        }
        if self.num_samples == 0 {
            return Err(Error::InvalidArgument("num_samples must be positive".into()));
        }
        if self.chains == 0 {
            return Err(Error::InvalidArgument("chains must be positive".into()));
        }
        if self.thinning_sweeps == 0 {
            return Err(Error::InvalidArgument("thinning_sweeps must be positive".into()));
        }
        if self.sweeps_per_step == 0 {
            return Err(Error::InvalidArgument("sweeps_per_step must be positive".into()));
        }
        if let Some(bias) = &self.bias {
            if bias.len() != num_spins {
                return Err(Error::DimensionMismatch(format!(
                    "bias length {} for {} spins",
                    bias.len(),
                    num_spins
                )));
            }
        }
        if let Some(schedule) = &self.schedule {
            if schedule.is_empty() {
                return Err(Error::InvalidArgument("empty annealing schedule".into()));
            }
            if schedule.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
                return Err(Error::InvalidArgument("schedule entries must be finite and positive".into()));
            }
            if schedule.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidArgument("schedule must be strictly increasing".into()));
            }
            let last = *schedule.last().unwrap();
            if (last - self.beta).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "schedule ends at {last} but beta is {}",
                    self.beta
                )));
            }
        }
        Ok(())
    }
}

/// Geometric ladder of `steps` inverse temperatures from `start` to `end`.
pub fn geometric_schedule(start: f64, end: f64, steps: usize) -> Vec<f64> {
    assert!(steps >= 2 && start > 0.0 && end > start, "degenerate schedule request");
    let ratio = (end / start).powf(1.0 / (steps - 1) as f64);
    let mut out: Vec<f64> = (0..steps).map(|i| start * ratio.powi(i as i32)).collect();
    *out.last_mut().unwrap() = end;
    out
}

/// A batch of drawn configurations with the spec that produced them.
/// `energies[i]` is the conditioned energy of `configs[i]` (plain energy
/// when the spec carries no bias).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub configs: Vec<SpinConfig>,
    pub energies: Vec<f64>,
    pub spec: SamplerSpec,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    /// Sample mean of `<z_i z_j>` per edge of `bm`.
    pub fn edge_correlations(&self, bm: &BoltzmannMachine) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let edges = bm.graph().edges();
        let mut acc = vec![0.0; edges.len()];
        for z in &self.configs {
            if z.len() != bm.num_spins() {
                return Err(Error::DimensionMismatch("config/machine spin count".into()));
            }
            let s = z.spins();
            for (e, &(i, j)) in edges.iter().enumerate() {
                acc[e] += (s[i] as i32 * s[j] as i32) as f64;
            }
        }
        let n = self.len() as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        Ok(acc)
    }

    /// Sample mean of `<z_i>`.
    pub fn spin_means(&self) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let k = self.configs[0].len();
        let mut acc = vec![0.0; k];
        for z in &self.configs {
            for (m, &s) in acc.iter_mut().zip(z.spins()) {
                *m += s as f64;
            }
        }
        let n = self.len() as f64;
        acc.iter_mut().for_each(|v| *v /= n);
        Ok(acc)
    }

    pub fn mean_energy(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        Ok(self.energies.iter().sum::<f64>() / self.len() as f64)
    }

    /// Plain-text export: spec echo, then one `spins... | energy` row per
    /// sample. Floats use shortest round-trip decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("bmvae-samples v1\n");
        let s = &self.spec;
        out.push_str(&format!("beta {}\n", s.beta));
        out.push_str(&format!("seed {}\n", s.seed));
        out.push_str(&format!("chains {}\n", s.chains));
        out.push_str(&format!("burn_in {}\n", s.burn_in_sweeps));
        out.push_str(&format!("thinning {}\n", s.thinning_sweeps));
        out.push_str(&format!("sweeps_per_step {}\n", s.sweeps_per_step));
        match &s.schedule {
            Some(sched) => {
                let joined: Vec<String> = sched.iter().map(|b| format!("{b}")).collect();
                out.push_str(&format!("schedule {}\n", joined.join(" ")));
            }
            None => out.push_str("schedule none\n"),
        }
        match &s.bias {
            Some(b) => {
                let joined: Vec<String> = b.values().iter().map(|v| format!("{v}")).collect();
                out.push_str(&format!("bias {}\n", joined.join(" ")));
            }
            None => out.push_str("bias none\n"),
        }
        out.push_str(&format!("samples {}\n", self.len()));
        for (z, e) in self.configs.iter().zip(&self.energies) {
            let row: Vec<String> = z.spins().iter().map(|s| format!("{s:+}")).collect();
            out.push_str(&format!("{} | {e}\n", row.join(" ")));
        }
        out
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Heat-bath conditional: probability of setting `z_i = +1` given its local
/// field `L_i + b_i`. Equal to `exp(-beta E(+)) / (exp(-beta E(+)) +
/// exp(-beta E(-)))`, which is what makes the sweep satisfy detailed balance.
pub fn heat_bath_prob_up(beta: f64, local_field: f64) -> f64 {
    sigmoid(2.0 * beta * local_field)
}

fn one_sweep(
    bm: &BoltzmannMachine,
    bias: Option<&BiasField>,
    beta: f64,
    spins: &mut [i8],
    rng: &mut rng::Stream,
) {
    let neighbors = bm.neighbors();
    let biases = bias.map(BiasField::values);
    for i in 0..spins.len() {
        let mut field = 0.0;
        for &(j, jij) in &neighbors[i] {
            field += jij * spins[j] as f64;
        }
        if let Some(b) = biases {
            field += b[i];
        }
        let p_up = heat_bath_prob_up(beta, field);
        spins[i] = if rng.gen::<f64>() < p_up { 1 } else { -1 };
    }
}

fn random_spins(k: usize, rng: &mut rng::Stream) -> Vec<i8> {
    (0..k).map(|_| if rng.gen::<f64>() < 0.5 { 1 } else { -1 }).collect()
}

/// Samples per chain: `num_samples` split as evenly as possible, earlier
/// chains taking the remainder.
fn chain_allotments(num_samples: usize, chains: usize) -> Vec<usize> {
    let base = num_samples / chains;
    let rem = num_samples % chains;
    (0..chains).map(|c| base + usize::from(c < rem)).collect()
}

fn record(
    bm: &BoltzmannMachine,
    bias: Option<&BiasField>,
    spins: &[i8],
    configs: &mut Vec<SpinConfig>,
    energies: &mut Vec<f64>,
) -> Result<()> {
    let z = SpinConfig::from_raw(spins.to_vec());
    let e = match bias {
        Some(b) => bm.conditioned_energy(b, &z)?,
        None => bm.energy(&z)?,
    };
    configs.push(z);
    energies.push(e);
    Ok(())
}

/// Fixed-temperature Gibbs sampling. Requires a spec without a schedule.
pub fn gibbs_sample(bm: &BoltzmannMachine, spec: &SamplerSpec, rng_seed: u64) -> Result<SampleBatch> {
    spec.validate(bm.num_spins())?;
    if spec.schedule.is_some() {
        return Err(Error::InvalidArgument("gibbs_sample takes a schedule-free spec".into()));
    }
    let bias = spec.bias.as_ref();
    let mut configs = Vec::with_capacity(spec.num_samples);
    let mut energies = Vec::with_capacity(spec.num_samples);
    for (chain, allotment) in chain_allotments(spec.num_samples, spec.chains).into_iter().enumerate() {
        if allotment == 0 {
            continue;
        }
        let mut rng = rng::stream(rng_seed, chain as u64);
        let mut spins = random_spins(bm.num_spins(), &mut rng);
        for _ in 0..spec.burn_in_sweeps {
            one_sweep(bm, bias, spec.beta, &mut spins, &mut rng);
        }
        for _ in 0..allotment {
            for _ in 0..spec.thinning_sweeps {
                one_sweep(bm, bias, spec.beta, &mut spins, &mut rng);
            }
            record(bm, bias, &spins, &mut configs, &mut energies)?;
        }
    }
    let mut echo = spec.clone();
    echo.seed = rng_seed;
    Ok(SampleBatch { configs, energies, spec: echo })
}

/// Annealed Gibbs sampling. Each sample starts from fresh random spins and
/// sweeps through the schedule, recording the final configuration.
pub fn annealed_sample(bm: &BoltzmannMachine, spec: &SamplerSpec, rng_seed: u64) -> Result<SampleBatch> {
    spec.validate(bm.num_spins())?;
    let schedule = spec
        .schedule
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("annealed_sample needs a schedule".into()))?
        .clone();
    let bias = spec.bias.as_ref();
    let mut configs = Vec::with_capacity(spec.num_samples);
    let mut energies = Vec::with_capacity(spec.num_samples);
    for (chain, allotment) in chain_allotments(spec.num_samples, spec.chains).into_iter().enumerate() {
        if allotment == 0 {
            continue;
        }
        let mut rng = rng::stream(rng_seed, chain as u64);
        for _ in 0..allotment {
            let mut spins = random_spins(bm.num_spins(), &mut rng);
            for &beta in &schedule {
                for _ in 0..spec.sweeps_per_step {
                    one_sweep(bm, bias, beta, &mut spins, &mut rng);
                }
            }
            record(bm, bias, &spins, &mut configs, &mut energies)?;
        }
    }
    let mut echo = spec.clone();
    echo.seed = rng_seed;
    Ok(SampleBatch { configs, energies, spec: echo })
}

/// Independent draws from the exact distribution by inverse-CDF lookup over
/// the full state table. Capped at 24 spins.
pub fn exact_sample(bm: &BoltzmannMachine, spec: &SamplerSpec, rng_seed: u64) -> Result<SampleBatch> {
    spec.validate(bm.num_spins())?;
    let probs = exact::exact_distribution(bm, spec.bias.as_ref(), spec.beta)?;
    let mut cdf = probs;
    let mut acc = 0.0;
    for p in cdf.iter_mut() {
        acc += *p;
        *p = acc;
    }
    *cdf.last_mut().unwrap() = 1.0;
    let k = bm.num_spins();
    let bias = spec.bias.as_ref();
    let mut rng = rng::stream(rng_seed, 0);
    let mut configs = Vec::with_capacity(spec.num_samples);
    let mut energies = Vec::with_capacity(spec.num_samples);
    for _ in 0..spec.num_samples {
        let u: f64 = rng.gen();
        let index = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let z = SpinConfig::from_index(index, k);
        let e = match bias {
            Some(b) => bm.conditioned_energy(b, &z)?,
            None => bm.energy(&z)?,
        };
        configs.push(z);
        energies.push(e);
    }
    let mut echo = spec.clone();
    echo.seed = rng_seed;
    Ok(SampleBatch { configs, energies, spec: echo })
}

/// Total variation distance between the batch's empirical distribution and
/// the exact conditioned distribution at `beta`. Capped at 16 spins.
pub fn tv_distance(batch: &SampleBatch, bm: &BoltzmannMachine, beta: f64) -> Result<f64> {
    let k = bm.num_spins();
    if k > 16 {
        return Err(Error::Capacity(format!("tv_distance capped at 16 spins, got {k}")));
    }
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let probs = exact::exact_distribution(bm, batch.spec.bias.as_ref(), beta)?;
    let mut counts = vec![0.0f64; 1 << k];
    for z in &batch.configs {
        if z.len() != k {
            return Err(Error::DimensionMismatch("config/machine spin count".into()));
        }
        counts[z.to_index()] += 1.0;
    }
    let n = batch.len() as f64;
    let tv = probs
        .iter()
        .zip(&counts)
        .map(|(p, c)| (p - c / n).abs())
        .sum::<f64>()
        / 2.0;
    Ok(tv)
}

/// Fits the inverse temperature whose exact mean energy matches the batch's
/// sample mean energy, by bisection on the monotone map `beta -> <E>_beta`.
/// The batch's plain (unconditioned) energies are used. Errors if the target
/// lies outside the attainable open interval `(min E, <E>_{beta -> 0})`.
pub fn effective_beta_fit(batch: &SampleBatch, bm: &BoltzmannMachine) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut target = 0.0;
    for z in &batch.configs {
        target += bm.energy(z)?;
    }
    target /= batch.len() as f64;

    // attainable range: <E> runs from the uniform average (beta -> 0) down
    // to the ground-state energy (beta -> inf)
    let e_uniform = exact::exact_mean_energy(bm, None, 0.0)?;
    let mut e_min = f64::INFINITY;
    for index in 0..1usize << bm.num_spins() {
        e_min = e_min.min(bm.energy(&SpinConfig::from_index(index, bm.num_spins()))?);
    }
    if target >= e_uniform || target <= e_min {
        return Err(Error::OutOfRange(format!(
            "mean energy {target} outside the attainable range ({e_min}, {e_uniform})"
        )));
    }

    const TOL: f64 = 1e-6;
    let mean_at = |beta: f64| exact::exact_mean_energy(bm, None, beta);
    let mut lo = 1e-9; // <E>_lo is near e_uniform > target
    let mut hi = 1.0;
    while mean_at(hi)? > target {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::OutOfRange("no finite beta reaches the target mean energy".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let e_mid = mean_at(mid)?;
        if (e_mid - target).abs() <= TOL {
            return Ok(mid);
        }
        if e_mid > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphSpec};

    fn fixture(k: usize, degree: usize, seed: u64) -> BoltzmannMachine {
        let g = build_graph(&GraphSpec::RandomRegular { num_spins: k, degree, seed }).unwrap();
        BoltzmannMachine::random(g, 1.0, seed ^ 0xbeef).unwrap()
    }

    #[test]
    fn heat_bath_probability_matches_energy_ratio() {
        let bm = fixture(8, 3, 4);
        let bias = BiasField::new((0..8).map(|i| 0.2 * i as f64 - 0.7).collect()).unwrap();
        let beta = 1.4;
        for index in [0usize, 3, 100, 200, 255] {
            let spins = SpinConfig::from_index(index, 8);
            for i in 0..8 {
                let mut up = spins.spins().to_vec();
                let mut dn = up.clone();
                up[i] = 1;
                dn[i] = -1;
                let e_up = bm
                    .conditioned_energy(&bias, &SpinConfig::new(up).unwrap())
                    .unwrap();
                let e_dn = bm
                    .conditioned_energy(&bias, &SpinConfig::new(dn).unwrap())
                    .unwrap();
                let expected = (-beta * e_up).exp() / ((-beta * e_up).exp() + (-beta * e_dn).exp());
                let mut field = 0.0;
                for &(j, jij) in &bm.neighbors()[i] {
                    field += jij * spins.spins()[j] as f64;
                }
                field += bias.values()[i];
                let got = heat_bath_prob_up(beta, field);
                assert!((got - expected).abs() < 1e-12, "site {i} of state {index}");
            }
        }
    }

    #[test]
    fn gibbs_is_deterministic_in_the_seed() {
        let bm = fixture(10, 3, 1);
        let spec = SamplerSpec {
            num_samples: 40,
            chains: 4,
            burn_in_sweeps: 20,
            thinning_sweeps: 2,
            ..SamplerSpec::mode1(40, 0)
        };
        let a = gibbs_sample(&bm, &spec, 99).unwrap();
        let b = gibbs_sample(&bm, &spec, 99).unwrap();
        let c = gibbs_sample(&bm, &spec, 100).unwrap();
        assert_eq!(a.configs, b.configs);
        assert_eq!(a.energies, b.energies);
        assert_ne!(a.configs, c.configs);
    }

    #[test]
    fn gibbs_moments_agree_with_enumeration() {
        let bm = fixture(10, 3, 7);
        let mut spec = SamplerSpec::mode1(20_000, 0);
        spec.chains = 40;
        spec.burn_in_sweeps = 100;
        spec.thinning_sweeps = 3;
        let batch = gibbs_sample(&bm, &spec, 5).unwrap();
        let exact = exact::exact_moments(&bm, 1.0).unwrap();
        let corr = batch.edge_correlations(&bm).unwrap();
        // n = 20k thinned samples: 3 SE is roughly 0.02-0.03 per edge
        for (e, (&got, &want)) in corr.iter().zip(&exact.correlations).enumerate() {
            assert!(
                (got - want).abs() < 0.05,
                "edge {e}: sampled {got:.4} vs exact {want:.4}"
            );
        }
    }

    #[test]
    fn recorded_energies_match_recomputation() {
        let bm = fixture(9, 2, 3);
        let bias = BiasField::new((0..9).map(|i| 0.1 * i as f64).collect()).unwrap();
        let mut spec = SamplerSpec::mode1(50, 0).with_bias(Some(bias.clone()));
        spec.chains = 5;
        spec.burn_in_sweeps = 10;
        let batch = gibbs_sample(&bm, &spec, 2).unwrap();
        for (z, &e) in batch.configs.iter().zip(&batch.energies) {
            let direct = bm.conditioned_energy(&bias, z).unwrap();
            assert!((e - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_schedule_equals_gibbs_without_burn_in() {
        // schedule [beta] with s sweeps consumes the same draws as a
        // schedule-free chain with burn_in 0 and thinning s, so one sample
        // per chain gives bit-identical output.
        let bm = fixture(8, 3, 11);
        let n = 64;
        let annealed_spec = SamplerSpec {
            beta: 1.3,
            bias: None,
            num_samples: n,
            chains: n,
            burn_in_sweeps: 0,
            thinning_sweeps: 1,
            sweeps_per_step: 7,
            schedule: Some(vec![1.3]),
            seed: 0,
        };
        let gibbs_spec = SamplerSpec {
            schedule: None,
            burn_in_sweeps: 0,
            thinning_sweeps: 7,
            ..annealed_spec.clone()
        };
        let a = annealed_sample(&bm, &annealed_spec, 21).unwrap();
        let g = gibbs_sample(&bm, &gibbs_spec, 21).unwrap();
        assert_eq!(a.configs, g.configs);
    }

    #[test]
    fn annealed_concentrates_on_lower_energy() {
        let bm = fixture(12, 3, 13);
        let n = 4000;
        let cold = annealed_sample(&bm, &SamplerSpec::mode2(n, 0), 3).unwrap();
        let mut warm_spec = SamplerSpec::mode1(n, 0);
        warm_spec.chains = 100;
        warm_spec.burn_in_sweeps = 100;
        let warm = gibbs_sample(&bm, &warm_spec, 3).unwrap();
        assert!(
            cold.mean_energy().unwrap() < warm.mean_energy().unwrap(),
            "annealing to beta 5 must lower the mean energy"
        );
    }

    #[test]
    fn bias_steers_toward_its_signs() {
        let bm = fixture(12, 3, 17);
        let m_plus: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 0.9 } else { -0.8 }).collect();
        let bias = BiasField::new(m_plus.iter().map(|m| 4.0 * m).collect()).unwrap();
        let spec = SamplerSpec::mode3(500, bias, 0);
        let batch = annealed_sample(&bm, &spec, 9).unwrap();
        let mut agree = 0usize;
        let mut total = 0usize;
        for z in &batch.configs {
            for (s, m) in z.spins().iter().zip(&m_plus) {
                if m.abs() > 0.5 {
                    total += 1;
                    if (*s as f64) * m > 0.0 {
                        agree += 1;
                    }
                }
            }
        }
        let frac = agree as f64 / total as f64;
        assert!(frac >= 0.95, "strong bias should pin spin signs, got {frac:.3}");
    }

    #[test]
    fn exact_sampler_tv_shrinks_with_sample_count() {
        let bm = fixture(8, 3, 19);
        let mut spec = SamplerSpec::mode1(200, 0);
        spec.beta = 1.1;
        let small = exact_sample(&bm, &spec, 1).unwrap();
        spec.num_samples = 20_000;
        let large = exact_sample(&bm, &spec, 1).unwrap();
        let tv_small = tv_distance(&small, &bm, 1.1).unwrap();
        let tv_large = tv_distance(&large, &bm, 1.1).unwrap();
        assert!(tv_large < tv_small, "TV must shrink: {tv_small:.4} -> {tv_large:.4}");
        assert!(tv_large < 0.05, "20k exact draws on K=8 should be close, got {tv_large:.4}");
    }

    #[test]
    fn geometric_schedule_is_valid_for_specs() {
        let s = geometric_schedule(0.2, 5.0, 20);
        assert_eq!(s.len(), 20);
        assert!((s[0] - 0.2).abs() < 1e-12);
        assert_eq!(*s.last().unwrap(), 5.0);
        assert!(s.windows(2).all(|w| w[1] > w[0]));
        let ratios: Vec<f64> = s.windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-9, "ratios should be constant");
        }
    }

    #[test]
    fn effective_beta_recovers_the_sampling_temperature() {
        let bm = fixture(10, 3, 23);
        let mut spec = SamplerSpec::mode1(30_000, 0);
        spec.chains = 60;
        spec.burn_in_sweeps = 100;
        spec.thinning_sweeps = 3;
        let batch = gibbs_sample(&bm, &spec, 7).unwrap();
        let fitted = effective_beta_fit(&batch, &bm).unwrap();
        assert!((fitted - 1.0).abs() < 0.05, "fitted beta {fitted:.4} should be near 1");
    }

    #[test]
    fn effective_beta_rejects_ground_state_batches() {
        let bm = fixture(8, 3, 29);
        // find a ground state by enumeration and feed it back as the batch
        let mut best = (f64::INFINITY, 0usize);
        for index in 0..256 {
            let e = bm.energy(&SpinConfig::from_index(index, 8)).unwrap();
            if e < best.0 {
                best = (e, index);
            }
        }
        let z = SpinConfig::from_index(best.1, 8);
        let batch = SampleBatch {
            energies: vec![best.0; 4],
            configs: vec![z; 4],
            spec: SamplerSpec::mode1(4, 0),
        };
        assert!(matches!(effective_beta_fit(&batch, &bm), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn spec_validation_rejects_bad_schedules() {
        let bm = fixture(6, 3, 31);
        let mut spec = SamplerSpec::mode2(10, 0);
        spec.schedule = Some(vec![0.5, 0.5, 5.0]);
        assert!(annealed_sample(&bm, &spec, 0).is_err(), "non-increasing schedule");
        let mut spec = SamplerSpec::mode2(10, 0);
        spec.schedule = Some(vec![0.5, 2.0]);
        assert!(annealed_sample(&bm, &spec, 0).is_err(), "schedule must end at beta");
        let spec = SamplerSpec::mode1(10, 0);
        assert!(annealed_sample(&bm, &spec, 0).is_err(), "annealed needs a schedule");
        let spec = SamplerSpec::mode2(10, 0);
        assert!(gibbs_sample(&bm, &spec, 0).is_err(), "gibbs rejects schedules");
    }

    #[test]
    fn batch_text_export_echoes_the_spec() {
        let bm = fixture(5, 2, 37);
        let mut spec = SamplerSpec::mode1(3, 0);
        spec.chains = 1;
        spec.burn_in_sweeps = 5;
        let batch = gibbs_sample(&bm, &spec, 41).unwrap();
        let text = batch.to_text();
        assert!(text.starts_with("bmvae-samples v1\n"));
        assert!(text.contains("seed 41"));
        assert!(text.contains("samples 3"));
        assert_eq!(text.lines().count(), 10 + 3);
    }
}
