//! Training loop for the Boltzmann-prior autoencoder and its Gaussian
//! baseline.
//!
//! Both models share the encoder/decoder architecture and differ only in
//! the latent: spins under an adaptive pairwise prior versus a diagonal
//! Gaussian under the fixed standard normal. The divergence to the prior
//! splits as `KL = <E>_q + log Z - S(q)`; the encoder sees the energy and
//! entropy terms scaled by `lambda` (log Z carries no encoder gradient),
//! while the prior couplings get the classic positive-minus-negative phase
//! update, the positive phase analytic from posterior means and the
//! negative phase estimated by fixed-temperature Gibbs sampling.
//!
//! Runs are deterministic from the config seed in everything except the
//! wall-clock `seconds` field of the metrics.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exact;
use crate::graph::{build_graph, GraphSpec};
use crate::machine::BoltzmannMachine;
use crate::nn::{Activation, MlpGrads, MlpParams};
use crate::posterior::{bce_gradient, bce_loss, GaussianPosterior, PosteriorParams, LOG_VARIANCE_CLAMP};
use crate::rng::{self, streams};
use crate::sampler::{gibbs_sample, SampleBatch, SamplerSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Which latent model to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    BoltzmannPrior,
    GaussianPrior,
}

/// How the latent is passed to the decoder during a gradient computation:
/// a stochastic draw (training) or the deterministic posterior mean, which
/// makes the whole loss differentiable for finite-difference verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentPath {
    Sampled,
    MeanField,
}

/// Architecture: prior topology plus encoder hidden widths (the decoder
/// mirrors them).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub graph: GraphSpec,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Weight of the divergence term in the encoder objective.
    pub lambda: f64,
    pub learning_rate: f64,
    pub prior_learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub batch_size: usize,
    pub epochs: usize,
    /// Template for drawing negative-phase samples each step.
    pub prior_sampler: SamplerSpec,
    pub negative_samples_per_step: usize,
    pub seed: u64,
}

impl TrainingConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            lambda: 0.01,
            learning_rate: 1e-3,
            prior_learning_rate: 1e-2,
            adam_betas: (0.9, 0.999),
            batch_size: 64,
            epochs: 30,
            prior_sampler: SamplerSpec::mode1(64, seed),
            negative_samples_per_step: 64,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda {} must be >= 0", self.lambda)));
        }
        for (name, lr) in [("learning_rate", self.learning_rate), ("prior_learning_rate", self.prior_learning_rate)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} {lr} must be positive")));
            }
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::InvalidArgument(format!("adam betas ({b1}, {b2}) must lie in [0, 1)")));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if self.negative_samples_per_step == 0 {
            return Err(Error::InvalidArgument("negative_samples_per_step must be positive".into()));
        }
        Ok(())
    }
}

/// Adam first/second moments for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl MomentPair {
    fn zeros(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub encoder: MomentPair,
    pub decoder: MomentPair,
    pub gaussian_head: Option<MomentPair>,
    pub prior: MomentPair,
}

/// Everything a run owns: networks, prior, optimizer moments, step count.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub prior: BoltzmannMachine,
    pub gaussian_head: Option<MlpParams>,
    pub step_counter: u64,
    pub opt: OptState,
}

/// Couplings are clipped into this interval after every update.
pub const COUPLING_CLIP: (f64, f64) = (-2.0, 2.0);

/// Initial couplings are uniform in ± this scale.
pub const PRIOR_INIT_SCALE: f64 = 0.01;

impl ModelState {
    /// Fresh state: encoder `input_dim -> hidden.. -> K` (tanh hidden,
    /// identity logits), mirrored decoder with a logistic output, couplings
    /// uniform in ±0.01. The Gaussian baseline adds a log-variance head of
    /// the encoder's shape, initialized after encoder and decoder so those
    /// two match across modes for the same seed.
    pub fn new(input_dim: usize, spec: &ModelSpec, mode: TrainMode, seed: u64) -> Result<Self> {
        let graph = build_graph(&spec.graph)?;
        let k = graph.num_spins();
        let mut enc_sizes = vec![input_dim];
        enc_sizes.extend_from_slice(&spec.hidden);
        enc_sizes.push(k);
        let mut enc_acts = vec![Activation::Tanh; spec.hidden.len()];
        enc_acts.push(Activation::Identity);
        let mut dec_sizes: Vec<usize> = enc_sizes.iter().rev().cloned().collect();
        dec_sizes[0] = k;
        *dec_sizes.last_mut().unwrap() = input_dim;
        let mut dec_acts = vec![Activation::Tanh; spec.hidden.len()];
        dec_acts.push(Activation::Logistic);

        let mut init = rng::stream(seed, streams::WEIGHT_INIT);
        let encoder = MlpParams::init(&enc_sizes, &enc_acts, &mut init)?;
        let decoder = MlpParams::init(&dec_sizes, &dec_acts, &mut init)?;
        let gaussian_head = match mode {
            TrainMode::BoltzmannPrior => None,
            TrainMode::GaussianPrior => Some(MlpParams::init(&enc_sizes, &enc_acts, &mut init)?),
        };
        // distinct seed so couplings never alias the weight stream
        let prior = BoltzmannMachine::random(graph, PRIOR_INIT_SCALE, seed ^ 0x9e37_79b9_97f4_a7c1)?;

        let opt = OptState {
            encoder: MomentPair::zeros(encoder.num_params()),
            decoder: MomentPair::zeros(decoder.num_params()),
            gaussian_head: gaussian_head.as_ref().map(|h| MomentPair::zeros(h.num_params())),
            prior: MomentPair::zeros(prior.couplings().len()),
        };
        Ok(Self { encoder, decoder, prior, gaussian_head, step_counter: 0, opt })
    }

    pub fn latent_dim(&self) -> usize {
        self.prior.num_spins()
    }

    fn check_shapes(&self, input_dim: usize) -> Result<()> {
        if self.encoder.input_dim() != input_dim {
            return Err(Error::DimensionMismatch(format!(
                "encoder expects {} inputs, images have {input_dim}",
                self.encoder.input_dim()
            )));
        }
        if self.encoder.output_dim() != self.prior.num_spins() {
            return Err(Error::DimensionMismatch(format!(
                "encoder emits {} logits for a prior over {} spins",
                self.encoder.output_dim(),
                self.prior.num_spins()
            )));
        }
        if self.decoder.input_dim() != self.prior.num_spins()
            || self.decoder.output_dim() != input_dim
        {
            return Err(Error::DimensionMismatch("decoder shape does not mirror the encoder".into()));
        }
        Ok(())
    }
}

/// Averaged divergence pieces for a batch of posteriors.
#[derive(Debug, Clone, PartialEq)]
pub struct KlComponents {
    pub mean_energy: f64,
    pub mean_entropy: f64,
    pub log_z: Option<f64>,
}

impl KlComponents {
    /// `KL = <E>_q + log Z - S(q)`, available when log Z was computed.
    pub fn kl(&self) -> Option<f64> {
        self.log_z.map(|lz| self.mean_energy + lz - self.mean_entropy)
    }
}

/// Batch-mean energy and entropy of factorized posteriors under `prior`,
/// with the exact log partition function when `exact` is set (K <= 24).
pub fn kl_components(
    mu_batch: &[PosteriorParams],
    prior: &BoltzmannMachine,
    exact_log_z: bool,
) -> Result<KlComponents> {
    if mu_batch.is_empty() {
        return Err(Error::InvalidArgument("empty posterior batch".into()));
    }
    let mut energy = 0.0;
    let mut entropy = 0.0;
    for q in mu_batch {
        energy += q.expected_energy(prior)?;
        entropy += q.entropy();
    }
    let n = mu_batch.len() as f64;
    let log_z = if exact_log_z { Some(exact::exact_log_partition(prior, 1.0)?) } else { None };
    Ok(KlComponents { mean_energy: energy / n, mean_entropy: entropy / n, log_z })
}

/// Divergence gradient in the couplings: positive phase `-<m_i m_j>` from
/// the posterior means (analytic under a factorized posterior), negative
/// phase `+<z_i z_j>` from prior samples.
pub fn prior_gradient(
    mu_batch: &[PosteriorParams],
    prior: &BoltzmannMachine,
    negatives: &SampleBatch,
) -> Result<Vec<f64>> {
    if mu_batch.is_empty() {
        return Err(Error::InvalidArgument("empty posterior batch".into()));
    }
    if negatives.is_empty() {
        return Err(Error::InvalidArgument("empty negative batch".into()));
    }
    let edges = prior.graph().edges();
    let mut positive = vec![0.0; edges.len()];
    for q in mu_batch {
        if q.len() != prior.num_spins() {
            return Err(Error::DimensionMismatch("posterior/prior spin count".into()));
        }
        let m = q.mean();
        for (e, &(i, j)) in edges.iter().enumerate() {
            positive[e] += m[i] * m[j];
        }
    }
    let n = mu_batch.len() as f64;
    let negative = negatives.edge_correlations(prior)?;
    Ok(positive
        .iter()
        .zip(&negative)
        .map(|(p, ng)| -(p / n) + ng)
        .collect())
}

/// Encoder/decoder (and log-variance head) gradients for one minibatch.
#[derive(Debug, Clone)]
pub struct EncDecGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
    pub gaussian_head: Option<MlpGrads>,
}

/// Per-batch statistics produced alongside the gradients.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean_bce: f64,
    pub mean_energy: Option<f64>,
    pub mean_entropy: Option<f64>,
    pub mean_gaussian_kl: Option<f64>,
    /// Posterior logits per example; feeds the prior's positive phase.
    pub posteriors: Vec<PosteriorParams>,
}

/// Reconstruction-plus-divergence gradients for the networks, averaged over
/// the batch. With `LatentPath::Sampled` the spin path uses a stochastic
/// draw and the straight-through factor `(1 - m^2)/2`; with
/// `LatentPath::MeanField` the decoder sees the posterior mean and the same
/// factor is the exact derivative, so the gradient is exact for the
/// deterministic loss.
pub fn encoder_decoder_gradient(
    images: &[&[f64]],
    state: &ModelState,
    config: &TrainingConfig,
    mode: TrainMode,
    path: LatentPath,
    rng: &mut rng::Stream,
) -> Result<(EncDecGrads, BatchStats)> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("empty minibatch".into()));
    }
    state.check_shapes(images[0].len())?;
    let mut enc_grads = MlpGrads::zeros_like(&state.encoder);
    let mut dec_grads = MlpGrads::zeros_like(&state.decoder);
    let mut head_grads = state.gaussian_head.as_ref().map(MlpGrads::zeros_like);
    let mut bce_sum = 0.0;
    let mut energy_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut gauss_kl_sum = 0.0;
    let mut posteriors = Vec::with_capacity(images.len());

    for &x in images {
        if x.len() != images[0].len() {
            return Err(Error::DimensionMismatch("ragged minibatch".into()));
        }
        let (logits, enc_tape) = state.encoder.forward(x)?;
        match mode {
            TrainMode::BoltzmannPrior => {
                let q = PosteriorParams::new(logits)?;
                let decoder_input = match path {
                    LatentPath::Sampled => q.sample(rng).as_f64(),
                    LatentPath::MeanField => q.mean(),
                };
                let (xhat, dec_tape) = state.decoder.forward(&decoder_input)?;
                bce_sum += bce_loss(x, &xhat)?;
                let d_xhat = bce_gradient(x, &xhat)?;
                let (dg, d_latent) = state.decoder.backward(&dec_tape, &d_xhat)?;
                dec_grads.add_scaled(&dg, 1.0);

                // reconstruction path into the logits, then the lambda-scaled
                // divergence terms (log Z is constant in the encoder)
                let st = q.mean_derivative();
                let d_energy = q.expected_energy_logit_gradient(&state.prior)?;
                let d_entropy = q.entropy_logit_gradient();
                let d_logits: Vec<f64> = (0..q.len())
                    .map(|i| d_latent[i] * st[i] + config.lambda * (d_energy[i] - d_entropy[i]))
                    .collect();
                let (eg, _) = state.encoder.backward(&enc_tape, &d_logits)?;
                enc_grads.add_scaled(&eg, 1.0);

                energy_sum += q.expected_energy(&state.prior)?;
                entropy_sum += q.entropy();
                posteriors.push(q);
            }
            TrainMode::GaussianPrior => {
                let head = state
                    .gaussian_head
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("Gaussian mode needs a log-variance head".into()))?;
                let (lv_raw, head_tape) = head.forward(x)?;
                let gp = GaussianPosterior::new(logits, lv_raw.clone())?;
                let (z, noise) = match path {
                    LatentPath::Sampled => gp.reparam_sample(rng),
                    LatentPath::MeanField => (gp.mean().to_vec(), vec![0.0; gp.len()]),
                };
                let (xhat, dec_tape) = state.decoder.forward(&z)?;
                bce_sum += bce_loss(x, &xhat)?;
                let d_xhat = bce_gradient(x, &xhat)?;
                let (dg, d_latent) = state.decoder.backward(&dec_tape, &d_xhat)?;
                dec_grads.add_scaled(&dg, 1.0);

                let (kl_d_mean, kl_d_lv) = gp.kl_gradients();
                let d_mean: Vec<f64> = d_latent
                    .iter()
                    .zip(&kl_d_mean)
                    .map(|(r, k)| r + config.lambda * k)
                    .collect();
                // d z / d lv = 0.5 sigma eps; gradient is gated off wherever
                // the clamp pinned the log-variance
                let d_lv: Vec<f64> = (0..gp.len())
                    .map(|i| {
                        if lv_raw[i] < LOG_VARIANCE_CLAMP.0 || lv_raw[i] > LOG_VARIANCE_CLAMP.1 {
                            0.0
                        } else {
                            let sigma = (gp.log_variance()[i] / 2.0).exp();
                            d_latent[i] * 0.5 * sigma * noise[i] + config.lambda * kl_d_lv[i]
                        }
                    })
                    .collect();
                let (eg, _) = state.encoder.backward(&enc_tape, &d_mean)?;
                enc_grads.add_scaled(&eg, 1.0);
                let (hg, _) = head.backward(&head_tape, &d_lv)?;
                head_grads.as_mut().unwrap().add_scaled(&hg, 1.0);

                gauss_kl_sum += gp.kl_to_standard();
            }
        }
    }

    let scale = 1.0 / images.len() as f64;
    enc_grads.scale(scale);
    dec_grads.scale(scale);
    if let Some(h) = head_grads.as_mut() {
        h.scale(scale);
    }
    let stats = match mode {
        TrainMode::BoltzmannPrior => BatchStats {
            mean_bce: bce_sum * scale,
            mean_energy: Some(energy_sum * scale),
            mean_entropy: Some(entropy_sum * scale),
            mean_gaussian_kl: None,
            posteriors,
        },
        TrainMode::GaussianPrior => BatchStats {
            mean_bce: bce_sum * scale,
            mean_energy: None,
            mean_entropy: None,
            mean_gaussian_kl: Some(gauss_kl_sum * scale),
            posteriors,
        },
    };
    Ok((EncDecGrads { encoder: enc_grads, decoder: dec_grads, gaussian_head: head_grads }, stats))
}

/// One bias-corrected Adam update over a flat parameter vector.
fn adam_update(
    theta: &mut [f64],
    grad: &[f64],
    moments: &mut MomentPair,
    lr: f64,
    betas: (f64, f64),
    t: u64,
) {
    const EPS: f64 = 1e-8;
    let (b1, b2) = betas;
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);
    for i in 0..theta.len() {
        moments.m[i] = b1 * moments.m[i] + (1.0 - b1) * grad[i];
        moments.v[i] = b2 * moments.v[i] + (1.0 - b2) * grad[i] * grad[i];
        let m_hat = moments.m[i] / bc1;
        let v_hat = moments.v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
}

/// Applies one optimizer step to every parameter group present. Network
/// groups use `learning_rate`, couplings use `prior_learning_rate` and are
/// clipped into [-2, 2] afterwards.
pub fn adam_step(
    state: &mut ModelState,
    grads: &EncDecGrads,
    prior_grad: Option<&[f64]>,
    config: &TrainingConfig,
) -> Result<()> {
    let t = state.step_counter + 1;
    let lr = config.learning_rate;
    let betas = config.adam_betas;

    let mut theta = state.encoder.flatten();
    let g = grads.encoder.flatten();
    if theta.len() != g.len() {
        return Err(Error::DimensionMismatch("encoder gradient shape".into()));
    }
    adam_update(&mut theta, &g, &mut state.opt.encoder, lr, betas, t);
    state.encoder.unflatten(&theta)?;

    let mut theta = state.decoder.flatten();
    let g = grads.decoder.flatten();
    if theta.len() != g.len() {
        return Err(Error::DimensionMismatch("decoder gradient shape".into()));
    }
    adam_update(&mut theta, &g, &mut state.opt.decoder, lr, betas, t);
    state.decoder.unflatten(&theta)?;

    if let (Some(head), Some(hg)) = (state.gaussian_head.as_mut(), grads.gaussian_head.as_ref()) {
        let moments = state.opt.gaussian_head.as_mut().unwrap();
        let mut theta = head.flatten();
        let g = hg.flatten();
        if theta.len() != g.len() {
            return Err(Error::DimensionMismatch("head gradient shape".into()));
        }
        adam_update(&mut theta, &g, moments, lr, betas, t);
        head.unflatten(&theta)?;
    }

    if let Some(pg) = prior_grad {
        if pg.len() != state.prior.couplings().len() {
            return Err(Error::DimensionMismatch("coupling gradient shape".into()));
        }
        let mut couplings = state.prior.couplings().to_vec();
        adam_update(&mut couplings, pg, &mut state.opt.prior, config.prior_learning_rate, betas, t);
        for j in &mut couplings {
            *j = j.clamp(COUPLING_CLIP.0, COUPLING_CLIP.1);
        }
        state.prior.set_couplings(couplings)?;
    }

    state.step_counter = t;
    Ok(())
}

/// One row of training telemetry. `seconds` is measured wall-clock time and
/// is the only non-deterministic field.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub bce: f64,
    pub energy: Option<f64>,
    pub entropy: Option<f64>,
    pub log_z: Option<f64>,
    pub kl: Option<f64>,
    pub seconds: f64,
}

pub const METRICS_CSV_HEADER: &str = "epoch, bce, energy, entropy, logz, kl, seconds";

fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Renders metrics as CSV under `METRICS_CSV_HEADER`. Floats are printed in
/// shortest round-trip form; absent components are empty fields.
pub fn metrics_to_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{}, {}, {}, {}, {}, {}, {}\n",
            r.epoch,
            r.bce,
            csv_opt(r.energy),
            csv_opt(r.entropy),
            csv_opt(r.log_z),
            csv_opt(r.kl),
            r.seconds
        ));
    }
    out
}

/// Called after each epoch with the fresh state and its metrics row.
pub type EpochHook<'a> = &'a mut dyn FnMut(&ModelState, &EpochMetrics) -> Result<()>;

/// Trains from an existing state (exposed so tests can inject pathological
/// priors); `train` is the ordinary entry point.
pub fn train_from_state(
    state: &mut ModelState,
    dataset: &Dataset,
    config: &TrainingConfig,
    mode: TrainMode,
    mut hook: Option<EpochHook>,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    state.check_shapes(dataset.image_dim())?;
    if mode == TrainMode::GaussianPrior && state.gaussian_head.is_none() {
        return Err(Error::InvalidArgument("Gaussian mode needs a log-variance head".into()));
    }

    let n = dataset.num_images();
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng::stream(config.seed, streams::SHUFFLE);
    let mut latent_rng = rng::stream(config.seed, streams::LATENT);
    let mut negative_rng = rng::stream(config.seed, streams::NEGATIVE);
    let exact_log_z = state.prior.num_spins() <= exact::MAX_ENUM_SPINS;

    let mut metrics = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut bce_sum = 0.0;
        let mut energy_sum = 0.0;
        let mut entropy_sum = 0.0;
        let mut gauss_kl_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let images: Vec<&[f64]> = chunk.iter().map(|&i| dataset.image(i)).collect();
            let (grads, stats) =
                encoder_decoder_gradient(&images, state, config, mode, LatentPath::Sampled, &mut latent_rng)?;
            let prior_grad = match mode {
                TrainMode::BoltzmannPrior => {
                    let mut spec = config.prior_sampler.clone();
                    spec.num_samples = config.negative_samples_per_step;
                    spec.chains = config.negative_samples_per_step;
                    spec.bias = None;
                    spec.schedule = None;
                    let negatives = gibbs_sample(&state.prior, &spec, negative_rng.gen())?;
                    Some(prior_gradient(&stats.posteriors, &state.prior, &negatives)?)
                }
                TrainMode::GaussianPrior => None,
            };
            adam_step(state, &grads, prior_grad.as_deref(), config)?;
            let b = images.len() as f64;
            bce_sum += stats.mean_bce * b;
            energy_sum += stats.mean_energy.unwrap_or(0.0) * b;
            entropy_sum += stats.mean_entropy.unwrap_or(0.0) * b;
            gauss_kl_sum += stats.mean_gaussian_kl.unwrap_or(0.0) * b;
            seen += images.len();
        }
        let denom = seen as f64;
        let row = match mode {
            TrainMode::BoltzmannPrior => {
                let energy = energy_sum / denom;
                let entropy = entropy_sum / denom;
                let log_z = if exact_log_z {
                    Some(exact::exact_log_partition(&state.prior, 1.0)?)
                } else {
                    None
                };
                EpochMetrics {
                    epoch,
                    bce: bce_sum / denom,
                    energy: Some(energy),
                    entropy: Some(entropy),
                    log_z,
                    kl: log_z.map(|lz| energy + lz - entropy),
                    seconds: started.elapsed().as_secs_f64(),
                }
            }
            TrainMode::GaussianPrior => EpochMetrics {
                epoch,
                bce: bce_sum / denom,
                energy: None,
                entropy: None,
                log_z: None,
                kl: Some(gauss_kl_sum / denom),
                seconds: started.elapsed().as_secs_f64(),
            },
        };
        if let Some(h) = hook.as_mut() {
            h(state, &row)?;
        }
        metrics.push(row);
    }
    Ok(metrics)
}

/// Builds a fresh model from `spec` and trains it on `dataset`.
pub fn train(
    dataset: &Dataset,
    spec: &ModelSpec,
    config: &TrainingConfig,
    mode: TrainMode,
) -> Result<(ModelState, Vec<EpochMetrics>)> {
    let mut state = ModelState::new(dataset.image_dim(), spec, mode, config.seed)?;
    let metrics = train_from_state(&mut state, dataset, config, mode, None)?;
    Ok((state, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_dataset, SynthSpec};
    use crate::graph::GraphSpec;
    use crate::machine::SpinConfig;

    fn tiny_spec(k: usize) -> ModelSpec {
        ModelSpec { graph: GraphSpec::Complete { num_spins: k }, hidden: vec![12] }
    }

    fn tiny_config(seed: u64, epochs: usize) -> TrainingConfig {
        let mut c = TrainingConfig::new(seed);
        c.epochs = epochs;
        c.batch_size = 16;
        c.negative_samples_per_step = 16;
        c.prior_sampler.burn_in_sweeps = 30;
        c.prior_sampler.thinning_sweeps = 2;
        c
    }

    fn random_posteriors(k: usize, n: usize, seed: u64) -> Vec<PosteriorParams> {
        let mut rng = rng::stream(seed, 0);
        (0..n)
            .map(|_| {
                PosteriorParams::new((0..k).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
            })
            .collect()
    }

    #[test]
    fn kl_identity_matches_brute_force() {
        // independent oracle: KL = sum_z q(z) ln(q(z)/p(z)) by direct
        // enumeration over both distributions
        let g = build_graph(&GraphSpec::RandomRegular { num_spins: 8, degree: 3, seed: 2 }).unwrap();
        let bm = BoltzmannMachine::random(g, 0.8, 3).unwrap();
        for (trial, q) in random_posteriors(8, 20, 11).into_iter().enumerate() {
            let comps = kl_components(&[q.clone()], &bm, true).unwrap();
            let decomposed = comps.kl().unwrap();

            let probs: Vec<f64> = q.logits().iter().map(|&m| crate::nn::logistic(m)).collect();
            let mut brute = 0.0;
            for index in 0..1usize << 8 {
                let z = SpinConfig::from_index(index, 8);
                let mut qz = 1.0;
                for (i, &s) in z.spins().iter().enumerate() {
                    qz *= if s == 1 { probs[i] } else { 1.0 - probs[i] };
                }
                if qz == 0.0 {
                    continue;
                }
                let e = bm.energy(&z).unwrap();
                let log_p = -e - exact::exact_log_partition(&bm, 1.0).unwrap();
                brute += qz * (qz.ln() - log_p);
            }
            assert!(
                (decomposed - brute).abs() < 1e-9,
                "trial {trial}: decomposition {decomposed} vs brute force {brute}"
            );
        }
    }

    #[test]
    fn kl_of_point_mass_on_ground_state() {
        let g = build_graph(&GraphSpec::Complete { num_spins: 4 }).unwrap();
        let bm = BoltzmannMachine::new(g, vec![0.5; 6]).unwrap();
        // all-up is a ground state of the ferromagnet; a sharply saturated
        // posterior has entropy 0 and energy E_min, so KL = E_min + log Z
        let q = PosteriorParams::new(vec![80.0; 4]).unwrap();
        let comps = kl_components(&[q], &bm, true).unwrap();
        let e_min = bm.energy(&SpinConfig::new(vec![1; 4]).unwrap()).unwrap();
        let want = e_min + exact::exact_log_partition(&bm, 1.0).unwrap();
        assert!((comps.kl().unwrap() - want).abs() < 1e-9);
        assert!(comps.mean_entropy.abs() < 1e-12);
    }

    #[test]
    fn prior_gradient_pushes_couplings_toward_posterior_correlations() {
        // uniform negatives (J = 0) and a posterior aligned on spins 0, 1:
        // the (0,1) entry is about -m^2, so descent raises that coupling
        let g = build_graph(&GraphSpec::Complete { num_spins: 4 }).unwrap();
        let bm = BoltzmannMachine::new(g, vec![0.0; 6]).unwrap();
        let mut logits = vec![0.0; 4];
        logits[0] = 6.0;
        logits[1] = 6.0;
        let q = PosteriorParams::new(logits).unwrap();
        let mut spec = SamplerSpec::mode1(4000, 0);
        spec.chains = 4000;
        spec.burn_in_sweeps = 5;
        let negatives = gibbs_sample(&bm, &spec, 3).unwrap();
        let grad = prior_gradient(&[q], &bm, &negatives).unwrap();
        assert!(grad[0] < -0.9, "edge (0,1) should pull strongly, got {}", grad[0]);
        for (e, g) in grad.iter().enumerate().skip(1) {
            assert!(g.abs() < 0.1, "edge {e} should be near zero, got {g}");
        }
    }

    #[test]
    fn prior_gradient_matches_exact_moments_within_noise() {
        let g = build_graph(&GraphSpec::RandomRegular { num_spins: 10, degree: 3, seed: 4 }).unwrap();
        let bm = BoltzmannMachine::random(g, 0.6, 7).unwrap();
        let qs = random_posteriors(10, 8, 23);
        let spec = SamplerSpec::mode1(8000, 0);
        let negatives = gibbs_sample(&bm, &spec, 17).unwrap();
        let grad = prior_gradient(&qs, &bm, &negatives).unwrap();
        let exact_m = exact::exact_moments(&bm, 1.0).unwrap();
        // exact gradient entry: -<m_i m_j>_batch + <z_i z_j>_exact
        let mut positive = vec![0.0; bm.graph().num_edges()];
        for q in &qs {
            let m = q.mean();
            for (e, &(i, j)) in bm.graph().edges().iter().enumerate() {
                positive[e] += m[i] * m[j] / qs.len() as f64;
            }
        }
        for e in 0..positive.len() {
            let want = -positive[e] + exact_m.correlations[e];
            // 8000 independent chains: 3 SE is about 0.034
            assert!(
                (grad[e] - want).abs() < 0.05,
                "edge {e}: sampled {} vs exact {want}",
                grad[e]
            );
        }
    }

    #[test]
    fn adam_first_step_moves_against_the_gradient_sign() {
        let mut theta = vec![1.0, -2.0, 0.5];
        let grad = vec![0.3, -0.7, 0.0];
        let mut moments = MomentPair::zeros(3);
        adam_update(&mut theta, &grad, &mut moments, 0.01, (0.9, 0.999), 1);
        assert!((theta[0] - (1.0 - 0.01)).abs() < 1e-6, "step is about -lr * sign(g)");
        assert!((theta[1] - (-2.0 + 0.01)).abs() < 1e-6);
        assert_eq!(theta[2], 0.5, "zero gradient leaves the parameter alone");
    }

    #[test]
    fn adam_step_clips_couplings() {
        let ds = synth_dataset(&SynthSpec::new(8, 8, 0)).unwrap();
        let spec = tiny_spec(4);
        let config = tiny_config(1, 0);
        let mut state =
            ModelState::new(ds.image_dim(), &spec, TrainMode::BoltzmannPrior, 1).unwrap();
        let images: Vec<&[f64]> = (0..4).map(|i| ds.image(i)).collect();
        let mut rng = rng::stream(0, 9);
        let (grads, _) = encoder_decoder_gradient(
            &images,
            &state,
            &config,
            TrainMode::BoltzmannPrior,
            LatentPath::Sampled,
            &mut rng,
        )
        .unwrap();
        // an absurd gradient must still land inside the clip interval
        let huge = vec![-1e6; state.prior.couplings().len()];
        adam_step(&mut state, &grads, Some(&huge), &config).unwrap();
        assert!(state
            .prior
            .couplings()
            .iter()
            .all(|j| (COUPLING_CLIP.0..=COUPLING_CLIP.1).contains(j)));
        assert_eq!(state.step_counter, 1);
    }

    #[test]
    fn small_update_from_sampled_gradient_decreases_exact_kl() {
        let g = build_graph(&GraphSpec::RandomRegular { num_spins: 8, degree: 3, seed: 6 }).unwrap();
        let mut bm = BoltzmannMachine::random(g.clone(), 0.3, 9).unwrap();
        let qs = random_posteriors(8, 6, 31);
        let spec = SamplerSpec::mode1(4000, 0);
        let kl_of = |bm: &BoltzmannMachine| kl_components(&qs, bm, true).unwrap().kl().unwrap();
        let before = kl_of(&bm);
        let negatives = gibbs_sample(&bm, &spec, 41).unwrap();
        let grad = prior_gradient(&qs, &bm, &negatives).unwrap();
        let lr = 1e-3;
        let updated: Vec<f64> =
            bm.couplings().iter().zip(&grad).map(|(j, g)| j - lr * g).collect();
        bm.set_couplings(updated).unwrap();
        assert!(kl_of(&bm) < before, "a small step along the estimate must descend");
    }

    #[test]
    fn training_is_deterministic_given_the_seed() {
        let ds = synth_dataset(&SynthSpec::new(32, 8, 5)).unwrap();
        let spec = tiny_spec(6);
        let config = tiny_config(3, 2);
        let (state_a, metrics_a) = train(&ds, &spec, &config, TrainMode::BoltzmannPrior).unwrap();
        let (state_b, metrics_b) = train(&ds, &spec, &config, TrainMode::BoltzmannPrior).unwrap();
        assert_eq!(state_a, state_b, "states must match bit for bit");
        assert_eq!(metrics_a.len(), metrics_b.len());
        for (a, b) in metrics_a.iter().zip(&metrics_b) {
            assert_eq!(a.bce, b.bce);
            assert_eq!(a.energy, b.energy);
            assert_eq!(a.entropy, b.entropy);
            assert_eq!(a.log_z, b.log_z);
            assert_eq!(a.kl, b.kl);
        }
    }

    #[test]
    fn zero_epochs_returns_initial_state_and_no_rows() {
        let ds = synth_dataset(&SynthSpec::new(8, 8, 2)).unwrap();
        let spec = tiny_spec(4);
        let config = tiny_config(7, 0);
        let fresh = ModelState::new(ds.image_dim(), &spec, TrainMode::BoltzmannPrior, 7).unwrap();
        let (state, metrics) = train(&ds, &spec, &config, TrainMode::BoltzmannPrior).unwrap();
        assert!(metrics.is_empty());
        assert_eq!(state, fresh);
    }

    #[test]
    fn gaussian_mode_never_reads_the_prior() {
        let ds = synth_dataset(&SynthSpec::new(24, 8, 9)).unwrap();
        let spec = tiny_spec(5);
        let config = tiny_config(13, 2);
        let mut plain = ModelState::new(ds.image_dim(), &spec, TrainMode::GaussianPrior, 13).unwrap();
        let mut poisoned = plain.clone();
        poisoned
            .prior
            .set_couplings(vec![1.987; poisoned.prior.couplings().len()])
            .unwrap();
        let ma = train_from_state(&mut plain, &ds, &config, TrainMode::GaussianPrior, None).unwrap();
        let mb = train_from_state(&mut poisoned, &ds, &config, TrainMode::GaussianPrior, None).unwrap();
        assert_eq!(plain.encoder, poisoned.encoder, "encoder ignores the prior");
        assert_eq!(plain.decoder, poisoned.decoder);
        assert_eq!(plain.gaussian_head, poisoned.gaussian_head);
        for (a, b) in ma.iter().zip(&mb) {
            assert_eq!(a.bce, b.bce);
            assert_eq!(a.kl, b.kl);
        }
        assert!(ma[0].energy.is_none() && ma[0].log_z.is_none());
    }

    #[test]
    fn gaussian_kl_column_is_reported() {
        let ds = synth_dataset(&SynthSpec::new(16, 8, 1)).unwrap();
        let spec = tiny_spec(4);
        let config = tiny_config(5, 1);
        let (_, metrics) = train(&ds, &spec, &config, TrainMode::GaussianPrior).unwrap();
        assert!(metrics[0].kl.unwrap() >= 0.0);
        assert!(metrics[0].bce >= 0.0);
    }

    #[test]
    fn bce_falls_during_short_training() {
        let ds = synth_dataset(&SynthSpec::new(64, 8, 8)).unwrap();
        let spec = tiny_spec(8);
        let mut config = tiny_config(2, 8);
        config.learning_rate = 3e-3;
        let (_, metrics) = train(&ds, &spec, &config, TrainMode::BoltzmannPrior).unwrap();
        let first = metrics.first().unwrap().bce;
        let last = metrics.last().unwrap().bce;
        assert!(last < first, "reconstruction should improve: {first:.4} -> {last:.4}");
        for row in &metrics {
            let k = 8.0;
            let s = row.entropy.unwrap();
            assert!(row.bce >= 0.0);
            assert!((0.0..=k * std::f64::consts::LN_2 + 1e-9).contains(&s));
        }
    }

    #[test]
    fn metrics_csv_has_pinned_header_and_empty_optionals() {
        let rows = vec![EpochMetrics {
            epoch: 0,
            bce: 0.5,
            energy: None,
            entropy: None,
            log_z: None,
            kl: Some(1.25),
            seconds: 0.125,
        }];
        let csv = metrics_to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), METRICS_CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "0, 0.5, , , , 1.25, 0.125");
    }

    #[test]
    fn epoch_hook_sees_every_epoch() {
        let ds = synth_dataset(&SynthSpec::new(8, 8, 3)).unwrap();
        let spec = tiny_spec(4);
        let config = tiny_config(11, 3);
        let mut state = ModelState::new(ds.image_dim(), &spec, TrainMode::BoltzmannPrior, 11).unwrap();
        let mut seen = Vec::new();
        let mut hook = |_: &ModelState, m: &EpochMetrics| {
            seen.push(m.epoch);
            Ok(())
        };
        train_from_state(&mut state, &ds, &config, TrainMode::BoltzmannPrior, Some(&mut hook)).unwrap();
        assert_eq!(seen, vec![0, 1, 2]);
    }
}
