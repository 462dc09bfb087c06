//! Step 2 of the pipeline: the VAE disentangler. The encoder splits into a
//! mu branch (robust, classifies) and a sigma branch (unrobust, distilled
//! toward the frozen teacher); the decoder reconstructs the backbone
//! representation from the reparameterized latent; the joint loss weighs
//! cross-entropy, ELBO and distillation.

use crate::checkpoint::{self, Container, STUDENT_MAGIC};
use crate::data::Subset;
use crate::error::{Error, Result};
use crate::numerics::{
    ops, AdamWConfig, AdamWState, Dense, DenseIds, Mlp, Tape, Tensor, ValueId,
};
use crate::teacher::TeacherBundle;
use crate::text::{sparse_batch, BackboneIds, BackboneParams, SparseFeatures};
use rand::seq::SliceRandom;
use rand::Rng;
use std::path::Path;

/// Width of z_mu, z_sigma and the teacher feature.
pub const LATENT_DIM: usize = 64;
/// Encoder hidden widths; the decoder mirrors them.
pub const ENCODER_HIDDEN: [usize; 3] = [356, 128, 64];
/// Numerical guard inside the whitening operator.
pub const WHITEN_EPS: f64 = 1e-5;

/// Which pipeline pieces a training run wires up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Full,
    /// No feature distillation; VAE only.
    NoDistill,
    /// Teacher trained on a uniformly random easy set instead of the
    /// confidence-ranked one.
    RandomTeacher,
    /// No VAE: the encoder output feeds the two linear heads directly, one
    /// for classification and one for distillation.
    NoVae,
}

impl Variant {
    pub fn uses_vae(self) -> bool {
        !matches!(self, Variant::NoVae)
    }

    pub fn uses_distill(self) -> bool {
        !matches!(self, Variant::NoDistill)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDistill => "no_distill",
            Variant::RandomTeacher => "random_teacher",
            Variant::NoVae => "no_vae",
        }
    }

    pub fn all() -> [Variant; 4] {
        [Variant::Full, Variant::NoDistill, Variant::RandomTeacher, Variant::NoVae]
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "no_distill" => Ok(Variant::NoDistill),
            "random_teacher" => Ok(Variant::RandomTeacher),
            "no_vae" => Ok(Variant::NoVae),
            other => Err(Error::Config(format!("unknown variant {other}"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Training configuration. Defaults follow the reference setting; the
/// backbone sizing knobs exist because the hashed-feature stand-in has no
/// fixed pretrained width.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub easy_fraction: f64,
    pub underfit_epochs: usize,
    pub seed: u64,
    pub variant: Variant,
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub ngram_max: usize,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch: 64,
            lr: 1e-5,
            lambda1: 0.001,
            lambda2: 0.1,
            beta: 2.0,
            easy_fraction: 0.35,
            underfit_epochs: 2,
            seed: 0,
            variant: Variant::Full,
            feature_dim: 1 << 18,
            hidden_dim: 256,
            ngram_max: 2,
            weight_decay: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::Config("lambda weights must be non-negative".into()));
        }
        if self.lambda1 + self.lambda2 >= 1.0 {
            return Err(Error::Config(format!(
                "lambda1 + lambda2 must stay below 1, got {} + {}",
                self.lambda1, self.lambda2
            )));
        }
        if self.lr <= 0.0 || self.beta <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("lr and beta must be positive, weight_decay non-negative".into()));
        }
        if self.epochs == 0 || self.batch == 0 || self.underfit_epochs == 0 {
            return Err(Error::Config("epochs, batch and underfit_epochs must be positive".into()));
        }
        if !(self.easy_fraction > 0.0 && self.easy_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "easy_fraction must be in (0, 1], got {}",
                self.easy_fraction
            )));
        }
        if !self.feature_dim.is_power_of_two() {
            return Err(Error::Config(format!(
                "feature_dim must be a power of two, got {}",
                self.feature_dim
            )));
        }
        if !(1..=2).contains(&self.ngram_max) {
            return Err(Error::Config(format!("ngram_max must be 1 or 2, got {}", self.ngram_max)));
        }
        if self.hidden_dim < 2 {
            return Err(Error::Config("hidden_dim must be at least 2".into()));
        }
        Ok(())
    }

    /// Is the reconstruction/KL path active under this config?
    pub fn vae_enabled(&self) -> bool {
        self.variant.uses_vae() && self.lambda1 > 0.0
    }

    /// Is the distillation path active under this config?
    pub fn distill_enabled(&self) -> bool {
        self.variant.uses_distill() && self.lambda2 > 0.0
    }
}

/// Per-batch (or per-epoch mean) loss components. Inactive paths report 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub ce: f64,
    pub recon: f64,
    pub kl: f64,
    pub vae: f64,
    pub distill: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Recompute the weighted total from the components, in the same
    /// association order the training tape uses.
    pub fn recombined_total(&self, lambda1: f64, lambda2: f64) -> f64 {
        ((1.0 - lambda1 - lambda2) * self.ce + lambda1 * self.vae) + lambda2 * self.distill
    }
}

/// Joint loss of the three tasks at the given weights.
pub fn loss_total(ce: f64, vae: f64, distill: f64, lambda1: f64, lambda2: f64) -> Result<f64> {
    if lambda1 < 0.0 || lambda2 < 0.0 || lambda1 + lambda2 >= 1.0 {
        return Err(Error::Config(format!(
            "invalid loss weights lambda1={lambda1} lambda2={lambda2}"
        )));
    }
    Ok(((1.0 - lambda1 - lambda2) * ce + lambda1 * vae) + lambda2 * distill)
}

/// ELBO pieces: identity-covariance Gaussian reconstruction reduces to the
/// elementwise mean squared error, and the KL term is against the standard
/// normal prior.
pub fn loss_vae(h: &[f64], h_hat: &[f64], z_mu: &[f64], z_sigma: &[f64]) -> Result<(f64, f64)> {
    if h.len() != h_hat.len() {
        return Err(Error::Dimension {
            op: "loss_vae",
            detail: format!("h length {} vs h_hat length {}", h.len(), h_hat.len()),
        });
    }
    let recon = h
        .iter()
        .zip(h_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / h.len() as f64;
    let kl = ops::kl_to_standard_normal(z_mu, z_sigma)?;
    Ok((recon, kl))
}

/// Whitened smooth-L1 between the sigma branch and the frozen teacher
/// feature.
pub fn loss_distill(z_sigma: &[f64], z_tilde: &[f64], beta: f64) -> Result<f64> {
    if z_sigma.len() != z_tilde.len() {
        return Err(Error::Dimension {
            op: "loss_distill",
            detail: format!("widths {} vs {}", z_sigma.len(), z_tilde.len()),
        });
    }
    let a = ops::whiten(z_sigma, WHITEN_EPS)?;
    let b = ops::whiten(z_tilde, WHITEN_EPS)?;
    ops::smooth_l1(&a, &b, beta)
}

/// Student parameters: backbone, encoder, the two independent heads, the
/// mirrored decoder, and the classification head on the mu branch.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentParams {
    pub backbone: BackboneParams,
    pub encoder: Mlp,
    pub mu_head: Dense,
    pub sigma_head: Dense,
    pub decoder: Mlp,
    pub class_head: Dense,
    pub num_classes: usize,
    pub ngram_max: usize,
}

pub struct StudentIds {
    pub backbone: BackboneIds,
    pub encoder: Vec<DenseIds>,
    pub mu_head: DenseIds,
    pub sigma_head: DenseIds,
    pub decoder: Vec<DenseIds>,
    pub class_head: DenseIds,
}

impl StudentParams {
    pub fn init(cfg: &TrainConfig, num_classes: usize, rng: &mut impl Rng) -> Self {
        let d = cfg.hidden_dim;
        let [h1, h2, h3] = ENCODER_HIDDEN;
        StudentParams {
            backbone: BackboneParams::student(cfg.feature_dim, d, rng),
            encoder: Mlp::relu_stack(&[d, h1, h2, h3], rng),
            mu_head: Dense::linear(h3, LATENT_DIM, rng),
            sigma_head: Dense::linear(h3, LATENT_DIM, rng),
            decoder: Mlp::linear_out_stack(&[LATENT_DIM, h2, h1, d], rng),
            class_head: Dense::linear(LATENT_DIM, num_classes, rng),
            num_classes,
            ngram_max: cfg.ngram_max,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.backbone.out_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.feature_dim
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = self.backbone.tensors();
        for (i, l) in self.encoder.layers.iter().enumerate() {
            out.push((stack_name("encoder", i, "w"), &l.w));
            out.push((stack_name("encoder", i, "b"), &l.b));
        }
        out.push(("mu_head.w", &self.mu_head.w));
        out.push(("mu_head.b", &self.mu_head.b));
        out.push(("sigma_head.w", &self.sigma_head.w));
        out.push(("sigma_head.b", &self.sigma_head.b));
        for (i, l) in self.decoder.layers.iter().enumerate() {
            out.push((stack_name("decoder", i, "w"), &l.w));
            out.push((stack_name("decoder", i, "b"), &l.b));
        }
        out.push(("class_head.w", &self.class_head.w));
        out.push(("class_head.b", &self.class_head.b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let mut out = self.backbone.tensors_mut();
        for (i, l) in self.encoder.layers.iter_mut().enumerate() {
            out.push((stack_name("encoder", i, "w"), &mut l.w));
            out.push((stack_name("encoder", i, "b"), &mut l.b));
        }
        out.push(("mu_head.w", &mut self.mu_head.w));
        out.push(("mu_head.b", &mut self.mu_head.b));
        out.push(("sigma_head.w", &mut self.sigma_head.w));
        out.push(("sigma_head.b", &mut self.sigma_head.b));
        for (i, l) in self.decoder.layers.iter_mut().enumerate() {
            out.push((stack_name("decoder", i, "w"), &mut l.w));
            out.push((stack_name("decoder", i, "b"), &mut l.b));
        }
        out.push(("class_head.w", &mut self.class_head.w));
        out.push(("class_head.b", &mut self.class_head.b));
        out
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.tensors().iter().map(|(_, t)| t.shape().to_vec()).collect()
    }

    pub fn register(&self, tape: &mut Tape) -> StudentIds {
        StudentIds {
            backbone: self.backbone.register(tape),
            encoder: self.encoder.register(tape),
            mu_head: self.mu_head.register(tape),
            sigma_head: self.sigma_head.register(tape),
            decoder: self.decoder.register(tape),
            class_head: self.class_head.register(tape),
        }
    }

    pub fn ids_in_order(ids: &StudentIds) -> Vec<ValueId> {
        let mut out = BackboneParams::ids_in_order(&ids.backbone);
        for l in &ids.encoder {
            out.push(l.w);
            out.push(l.b);
        }
        out.push(ids.mu_head.w);
        out.push(ids.mu_head.b);
        out.push(ids.sigma_head.w);
        out.push(ids.sigma_head.b);
        for l in &ids.decoder {
            out.push(l.w);
            out.push(l.b);
        }
        out.push(ids.class_head.w);
        out.push(ids.class_head.b);
        out
    }

    /// Robust-branch latent and logits for one example (inference path:
    /// no sigma branch, no decoder).
    pub fn infer_logits(&self, f: &SparseFeatures) -> Result<Vec<f64>> {
        let h = self.backbone.forward_infer(f)?;
        let enc = self.encoder.forward_infer(&h);
        let z_mu = self.mu_head.forward_infer(&enc);
        Ok(self.class_head.forward_infer(&z_mu))
    }

    /// Both latents (mu and sigma branches) for one example.
    pub fn infer_latents(&self, f: &SparseFeatures) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = self.backbone.forward_infer(f)?;
        let enc = self.encoder.forward_infer(&h);
        Ok((self.mu_head.forward_infer(&enc), self.sigma_head.forward_infer(&enc)))
    }

    fn container(&self) -> Container {
        Container {
            meta: vec![
                ("num_classes".into(), self.num_classes as u64),
                ("feature_dim".into(), self.feature_dim() as u64),
                ("hidden_dim".into(), self.hidden_dim() as u64),
                ("ngram_max".into(), self.ngram_max as u64),
            ],
            tensors: self
                .tensors()
                .iter()
                .map(|(n, t)| (n.to_string(), (*t).clone()))
                .collect(),
        }
    }

    pub fn param_hash(&self) -> String {
        checkpoint::sha256_hex(&checkpoint::container_bytes(STUDENT_MAGIC, &self.container()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::write_container(path, STUDENT_MAGIC, &self.container())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StudentParams> {
        let mut c = checkpoint::read_container(path, STUDENT_MAGIC)?;
        let num_classes = c.meta_value("num_classes")? as usize;
        let feature_dim = c.meta_value("feature_dim")? as usize;
        let ngram_max = c.meta_value("ngram_max")? as usize;
        let take_dense = |c: &mut Container, stack: &str, i: usize| -> Result<Dense> {
            Ok(Dense {
                w: c.take_tensor(&format!("{stack}.l{i}.w"))?,
                b: c.take_tensor(&format!("{stack}.l{i}.b"))?,
            })
        };
        let backbone = BackboneParams {
            feature_dim,
            embed: c.take_tensor("backbone.embed")?,
            hidden: vec![
                Dense {
                    w: c.take_tensor("backbone.hidden0.w")?,
                    b: c.take_tensor("backbone.hidden0.b")?,
                },
                Dense {
                    w: c.take_tensor("backbone.hidden1.w")?,
                    b: c.take_tensor("backbone.hidden1.b")?,
                },
            ],
            readout: None,
        };
        let encoder = Mlp {
            layers: (0..3)
                .map(|i| take_dense(&mut c, "encoder", i))
                .collect::<Result<Vec<_>>>()?,
            relu_last: true,
        };
        let decoder = Mlp {
            layers: (0..3)
                .map(|i| take_dense(&mut c, "decoder", i))
                .collect::<Result<Vec<_>>>()?,
            relu_last: false,
        };
        Ok(StudentParams {
            backbone,
            encoder,
            mu_head: Dense {
                w: c.take_tensor("mu_head.w")?,
                b: c.take_tensor("mu_head.b")?,
            },
            sigma_head: Dense {
                w: c.take_tensor("sigma_head.w")?,
                b: c.take_tensor("sigma_head.b")?,
            },
            decoder,
            class_head: Dense {
                w: c.take_tensor("class_head.w")?,
                b: c.take_tensor("class_head.b")?,
            },
            num_classes,
            ngram_max,
        })
    }
}

fn stack_name(stack: &str, i: usize, part: &str) -> &'static str {
    match (stack, i, part) {
        ("encoder", 0, "w") => "encoder.l0.w",
        ("encoder", 0, "b") => "encoder.l0.b",
        ("encoder", 1, "w") => "encoder.l1.w",
        ("encoder", 1, "b") => "encoder.l1.b",
        ("encoder", 2, "w") => "encoder.l2.w",
        ("encoder", 2, "b") => "encoder.l2.b",
        ("decoder", 0, "w") => "decoder.l0.w",
        ("decoder", 0, "b") => "decoder.l0.b",
        ("decoder", 1, "w") => "decoder.l1.w",
        ("decoder", 1, "b") => "decoder.l1.b",
        ("decoder", 2, "w") => "decoder.l2.w",
        ("decoder", 2, "b") => "decoder.l2.b",
        _ => "stack.extra",
    }
}

/// Predicted class: argmax over the mu-branch logits, ties to the lowest
/// index. Decoder and sigma branch are never touched.
pub fn predict(params: &StudentParams, f: &SparseFeatures) -> Result<usize> {
    let logits = params.infer_logits(f)?;
    Ok(argmax(&logits))
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Fraction of correct predictions over a subset.
pub fn accuracy(params: &StudentParams, data: &Subset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("cannot compute accuracy on an empty corpus".into()));
    }
    let mut correct = 0usize;
    for i in 0..data.len() {
        if predict(params, data.features(i))? == data.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Train,
    Infer,
}

/// Single-example forward pass with explicit noise (plain, non-tape path).
#[derive(Debug, Clone)]
pub struct ForwardOut {
    pub h: Vec<f64>,
    pub z_mu: Vec<f64>,
    pub z_sigma: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub h_hat: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

pub fn student_forward(
    params: &StudentParams,
    f: &SparseFeatures,
    noise: &[f64],
    mode: ForwardMode,
) -> Result<ForwardOut> {
    let h = params.backbone.forward_infer(f)?;
    let enc = params.encoder.forward_infer(&h);
    let z_mu = params.mu_head.forward_infer(&enc);
    let z_sigma = params.sigma_head.forward_infer(&enc);
    let logits = params.class_head.forward_infer(&z_mu);
    let (z, h_hat) = match mode {
        ForwardMode::Train => {
            let z = ops::reparameterize(&z_mu, &z_sigma, noise)?;
            let h_hat = params.decoder.forward_infer(&z);
            (Some(z), Some(h_hat))
        }
        ForwardMode::Infer => (None, None),
    };
    Ok(ForwardOut {
        h,
        z_mu,
        z_sigma,
        z,
        h_hat,
        logits,
    })
}

struct BatchNodes {
    h: ValueId,
    z_mu: ValueId,
    z_sigma: Option<ValueId>,
    h_hat: Option<ValueId>,
    logits: ValueId,
}

fn forward_batch(
    tape: &mut Tape,
    ids: &StudentIds,
    batch: crate::numerics::SparseBatch,
    noise: Option<Tensor>,
    need_sigma: bool,
) -> Result<BatchNodes> {
    let h = BackboneParams::apply(&ids.backbone, tape, batch)?;
    let enc = Mlp::apply(&ids.encoder, true, tape, h)?;
    let z_mu = ids.mu_head.apply(tape, enc)?;
    let z_sigma = if need_sigma {
        Some(ids.sigma_head.apply(tape, enc)?)
    } else {
        None
    };
    let h_hat = match noise {
        Some(n) => {
            let z = tape.reparameterize(z_mu, z_sigma.expect("vae path needs sigma"), n)?;
            Some(Mlp::apply(&ids.decoder, false, tape, z)?)
        }
        None => None,
    };
    let logits = ids.class_head.apply(tape, z_mu)?;
    Ok(BatchNodes {
        h,
        z_mu,
        z_sigma,
        h_hat,
        logits,
    })
}

/// Build the loss graph for one batch and return the component values plus
/// the total's tape id (for backward).
fn batch_losses(
    tape: &mut Tape,
    cfg: &TrainConfig,
    nodes: &BatchNodes,
    labels: Vec<usize>,
    z_tilde: Option<Tensor>,
) -> Result<(LossBreakdown, ValueId)> {
    let ce = tape.softmax_ce_mean(nodes.logits, labels)?;
    let mut total = tape.scale(ce, 1.0 - cfg.lambda1 - cfg.lambda2)?;
    let mut bd = LossBreakdown {
        ce: tape.value(ce).item(),
        ..LossBreakdown::default()
    };
    if let Some(h_hat) = nodes.h_hat {
        let recon = tape.mse_mean(h_hat, nodes.h)?;
        let kl = tape.kl_mean(nodes.z_mu, nodes.z_sigma.expect("vae path needs sigma"))?;
        let vae = tape.add(recon, kl)?;
        let term = tape.scale(vae, cfg.lambda1)?;
        total = tape.add(total, term)?;
        bd.recon = tape.value(recon).item();
        bd.kl = tape.value(kl).item();
        bd.vae = tape.value(vae).item();
    }
    if let Some(zt) = z_tilde {
        let z_sigma = nodes.z_sigma.expect("distill path needs sigma");
        let zt = tape.constant(zt);
        let ws = tape.row_whiten(z_sigma, WHITEN_EPS)?;
        let wt = tape.row_whiten(zt, WHITEN_EPS)?;
        let distill = tape.smooth_l1_mean(ws, wt, cfg.beta)?;
        let term = tape.scale(distill, cfg.lambda2)?;
        total = tape.add(total, term)?;
        bd.distill = tape.value(distill).item();
    }
    bd.total = tape.value(total).item();
    Ok((bd, total))
}

/// One epoch entry of the loss log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub dev_acc: f64,
}

/// Everything a finished training run hands back.
pub struct TrainOutcome {
    pub final_params: StudentParams,
    pub best_params: StudentParams,
    pub best_epoch: usize,
    pub best_dev_acc: f64,
    pub log: Vec<EpochLog>,
    /// Loss on the first training batch before any optimizer step.
    pub init_loss: LossBreakdown,
}

/// Train the student on the joint loss. The teacher stays frozen (it is
/// only read); per-epoch dev accuracy picks the checkpoint, ties to the
/// earlier epoch.
pub fn train_student(
    cfg: &TrainConfig,
    train: &Subset,
    dev: &Subset,
    teacher: Option<&TeacherBundle>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("cannot train the student on an empty corpus".into()));
    }
    if dev.is_empty() {
        return Err(Error::Data("student training needs a dev split for model selection".into()));
    }
    let distill_on = cfg.distill_enabled();
    let vae_on = cfg.vae_enabled();
    let teacher = match (distill_on, teacher) {
        (true, Some(t)) => {
            if !t.is_frozen() {
                return Err(Error::Config("teacher must be frozen before student training".into()));
            }
            Some(t)
        }
        (true, None) => {
            return Err(Error::Config(format!(
                "variant {} with lambda2 {} needs a teacher bundle",
                cfg.variant, cfg.lambda2
            )))
        }
        (false, _) => None,
    };

    let mut init_rng = crate::rng::stream(cfg.seed, &["student-init"]);
    let mut params = StudentParams::init(cfg, train.prep.num_classes, &mut init_rng);
    let mut opt = AdamWState::new(AdamWConfig::new(cfg.lr, cfg.weight_decay), &params.shapes());
    let mut shuffle_rng = crate::rng::stream(cfg.seed, &["student-shuffle"]);
    let mut noise_rng = crate::rng::stream(cfg.seed, &["student-noise"]);

    // teacher features are constant across epochs; compute them once
    let z_tilde_cache: Option<Vec<Vec<f64>>> = match teacher {
        Some(t) => {
            let mut cache = Vec::with_capacity(train.len());
            for i in 0..train.len() {
                cache.push(t.features(train.features(i))?);
            }
            Some(cache)
        }
        None => None,
    };
    let gather_z_tilde = |chunk: &[usize]| -> Option<Tensor> {
        z_tilde_cache.as_ref().map(|cache| {
            let mut data = Vec::with_capacity(chunk.len() * LATENT_DIM);
            for &i in chunk {
                data.extend_from_slice(&cache[i]);
            }
            Tensor::new(vec![chunk.len(), LATENT_DIM], data).expect("cache rows are LATENT_DIM wide")
        })
    };

    // loss at initialization, on the leading batch in corpus order
    let init_loss = {
        let chunk: Vec<usize> = (0..train.len().min(cfg.batch)).collect();
        let mut init_noise_rng = crate::rng::stream(cfg.seed, &["student-init-noise"]);
        let noise = vae_on
            .then(|| Tensor::randn(vec![chunk.len(), LATENT_DIM], 1.0, &mut init_noise_rng));
        let (bd, _) = run_batch(&params, cfg, train, &chunk, noise, gather_z_tilde(&chunk))?;
        bd
    };

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, StudentParams)> = None;
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let mut sums = LossBreakdown::default();
        let mut seen = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let noise =
                vae_on.then(|| Tensor::randn(vec![chunk.len(), LATENT_DIM], 1.0, &mut noise_rng));
            let (bd, grads_ids) = run_batch(&params, cfg, train, chunk, noise, gather_z_tilde(chunk))
                .map_err(|e| e.with_context(format!("epoch {epoch} batch {bi}")))?;
            let (mut grads, ids) = grads_ids;
            let grad_list = crate::teacher::collect_grads(&mut grads, &ids);
            let mut tensors = params.tensors_mut();
            opt.step(&mut tensors, &grad_list)
                .map_err(|e| e.with_context(format!("epoch {epoch} batch {bi}")))?;
            let m = chunk.len() as f64;
            sums.ce += bd.ce * m;
            sums.recon += bd.recon * m;
            sums.kl += bd.kl * m;
            sums.vae += bd.vae * m;
            sums.distill += bd.distill * m;
            sums.total += bd.total * m;
            seen += chunk.len();
        }
        let n = seen as f64;
        let mean = LossBreakdown {
            ce: sums.ce / n,
            recon: sums.recon / n,
            kl: sums.kl / n,
            vae: sums.vae / n,
            distill: sums.distill / n,
            total: sums.total / n,
        };
        let dev_acc = accuracy(&params, dev)?;
        log.push(EpochLog {
            epoch,
            loss: mean,
            dev_acc,
        });
        if best.as_ref().map_or(true, |(b, _, _)| dev_acc > *b) {
            best = Some((dev_acc, epoch, params.clone()));
        }
    }
    let (best_dev_acc, best_epoch, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_epoch,
        best_dev_acc,
        log,
        init_loss,
    })
}

type BatchGrads = (crate::numerics::Gradients, Vec<ValueId>);

/// Forward + losses (+ backward when training) for one batch.
fn run_batch(
    params: &StudentParams,
    cfg: &TrainConfig,
    data: &Subset,
    chunk: &[usize],
    noise: Option<Tensor>,
    z_tilde: Option<Tensor>,
) -> Result<(LossBreakdown, BatchGrads)> {
    let feats: Vec<&SparseFeatures> = chunk.iter().map(|&i| data.features(i)).collect();
    let labels: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();
    let batch = sparse_batch(&feats)?;
    let need_sigma = noise.is_some() || z_tilde.is_some();

    let mut tape = Tape::new();
    let ids = params.register(&mut tape);
    let nodes = forward_batch(&mut tape, &ids, batch, noise, need_sigma)?;
    let (bd, total) = batch_losses(&mut tape, cfg, &nodes, labels, z_tilde)?;
    let grads = tape.backward(total)?;
    Ok((bd, (grads, StudentParams::ids_in_order(&ids))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Corpus, Example, PreparedCorpus};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch: 4,
            lr: 1e-2,
            feature_dim: 256,
            hidden_dim: 8,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    fn tiny_prep(n: usize) -> PreparedCorpus {
        let examples = (0..n)
            .map(|i| Example {
                id: format!("t-{i}"),
                text: if i % 2 == 0 {
                    format!("good fine nice item{i}")
                } else {
                    format!("bad poor awful item{i}")
                },
                label: i % 2,
                domain: "t".into(),
            })
            .collect();
        PreparedCorpus::prepare(Corpus { examples }, 256, 2, 2).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let mut c = TrainConfig::default();
        c.lambda1 = 0.5;
        c.lambda2 = 0.5;
        assert!(c.validate().is_err());
        c.lambda1 = 0.0;
        c.lambda2 = 0.0;
        assert!(c.validate().is_ok());
        c.feature_dim = 1000;
        assert!(c.validate().is_err());
    }

    #[test]
    fn loss_total_hand_computed() {
        let t = loss_total(0.7, 100.0, 0.5, 0.001, 0.1).unwrap();
        assert!((t - 0.7793).abs() < 1e-12);
        assert_eq!(loss_total(0.3, 5.0, 1.0, 0.0, 0.0).unwrap(), 0.3);
        assert_eq!(loss_total(0.0, 0.0, 0.0, 0.001, 0.1).unwrap(), 0.0);
        assert!(loss_total(1.0, 1.0, 1.0, 0.6, 0.4).is_err());
    }

    #[test]
    fn loss_vae_hand_computed() {
        let (recon, kl) = loss_vae(&[1.0, 0.0], &[0.0, 0.0], &[0.0], &[0.0]).unwrap();
        assert_eq!(recon, 0.5);
        assert_eq!(kl, 0.0);
        let (recon, kl) = loss_vae(&[1.0], &[1.0], &[1.0], &[0.0]).unwrap();
        assert_eq!(recon, 0.0);
        assert!((kl - 0.5).abs() < 1e-12);
        assert!(loss_vae(&[1.0], &[1.0, 2.0], &[0.0], &[0.0]).is_err());
    }

    #[test]
    fn loss_distill_affine_invariance() {
        let z: Vec<f64> = (0..LATENT_DIM).map(|i| (i as f64 * 0.37).sin()).collect();
        assert!(loss_distill(&z, &z, 2.0).unwrap().abs() < 1e-12);
        // positive affine reparameterizations whiten to the same vector
        let affine: Vec<f64> = z.iter().map(|v| 3.5 * v - 1.25).collect();
        assert!(loss_distill(&z, &affine, 2.0).unwrap().abs() < 1e-9);
        assert!(loss_distill(&z, &z[..10], 2.0).is_err());
    }

    #[test]
    fn loss_distill_matches_bruteforce_eq() {
        // independent scalar evaluation: whiten both, then the two-branch
        // formula per element, averaged
        let a: Vec<f64> = (0..LATENT_DIM).map(|i| i as f64 + 1.0).collect();
        let b: Vec<f64> = (0..LATENT_DIM).map(|i| (LATENT_DIM - i) as f64).collect();
        let beta = 2.0;
        let got = loss_distill(&a, &b, beta).unwrap();

        let wh = |v: &[f64]| -> Vec<f64> {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            v.iter().map(|x| (x - mean) / (var + WHITEN_EPS).sqrt()).collect()
        };
        let (wa, wb) = (wh(&a), wh(&b));
        let mut total = 0.0;
        for i in 0..LATENT_DIM {
            let d = (wa[i] - wb[i]).abs();
            total += if d <= beta { d * d / (2.0 * beta) } else { d - beta / 2.0 };
        }
        let expect = total / LATENT_DIM as f64;
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn forward_shapes_and_infer_ignores_noise() {
        let cfg = tiny_cfg();
        let prep = tiny_prep(6);
        let mut rng = crate::rng::stream(1, &["init"]);
        let params = StudentParams::init(&cfg, 2, &mut rng);
        let f = prep.all();
        let noise1 = vec![0.5; LATENT_DIM];
        let noise2 = vec![-2.0; LATENT_DIM];
        let out1 = student_forward(&params, f.features(0), &noise1, ForwardMode::Train).unwrap();
        assert_eq!(out1.z_mu.len(), LATENT_DIM);
        assert_eq!(out1.z_sigma.len(), LATENT_DIM);
        assert_eq!(out1.h_hat.as_ref().unwrap().len(), cfg.hidden_dim);
        assert_eq!(out1.logits.len(), 2);
        let i1 = student_forward(&params, f.features(0), &noise1, ForwardMode::Infer).unwrap();
        let i2 = student_forward(&params, f.features(0), &noise2, ForwardMode::Infer).unwrap();
        assert_eq!(i1.logits, i2.logits);
        assert!(i1.z.is_none() && i1.h_hat.is_none());
    }

    #[test]
    fn zeroed_sigma_head_and_zero_noise_collapse_z_to_mu() {
        let cfg = tiny_cfg();
        let prep = tiny_prep(2);
        let mut rng = crate::rng::stream(2, &["init"]);
        let mut params = StudentParams::init(&cfg, 2, &mut rng);
        params.sigma_head.w = Tensor::zeros(params.sigma_head.w.shape().to_vec());
        params.sigma_head.b = Tensor::zeros(params.sigma_head.b.shape().to_vec());
        let out = student_forward(
            &params,
            prep.all().features(0),
            &vec![0.0; LATENT_DIM],
            ForwardMode::Train,
        )
        .unwrap();
        assert_eq!(out.z.unwrap(), out.z_mu);
    }

    #[test]
    fn predictions_do_not_depend_on_sigma_branch() {
        let cfg = tiny_cfg();
        let prep = tiny_prep(100);
        let mut rng = crate::rng::stream(3, &["init"]);
        let params = StudentParams::init(&cfg, 2, &mut rng);
        let mut perturbed = params.clone();
        for v in perturbed.sigma_head.w.data_mut() {
            *v += 10.0;
        }
        for v in perturbed.decoder.layers[0].w.data_mut() {
            *v -= 5.0;
        }
        let all = prep.all();
        for i in 0..all.len() {
            assert_eq!(
                predict(&params, all.features(i)).unwrap(),
                predict(&perturbed, all.features(i)).unwrap()
            );
        }
    }

    #[test]
    fn argmax_is_shift_invariant_and_deterministic() {
        let logits = vec![0.3, 1.7, -0.2];
        let shifted: Vec<f64> = logits.iter().map(|v| v + 100.0).collect();
        assert_eq!(argmax(&logits), argmax(&shifted));
        assert_eq!(argmax(&[1.0, 1.0]), 0);
    }

    #[test]
    fn training_logs_one_entry_per_epoch_and_is_deterministic() {
        let cfg = TrainConfig {
            lambda1: 0.001,
            lambda2: 0.0,
            variant: Variant::NoDistill,
            ..tiny_cfg()
        };
        let prep = tiny_prep(24);
        let train = Subset {
            prep: &prep,
            indices: (0..16).collect(),
        };
        let dev = Subset {
            prep: &prep,
            indices: (16..24).collect(),
        };
        let out1 = train_student(&cfg, &train, &dev, None).unwrap();
        assert_eq!(out1.log.len(), cfg.epochs);
        let out2 = train_student(&cfg, &train, &dev, None).unwrap();
        assert_eq!(out1.final_params, out2.final_params);
        assert_eq!(out1.log, out2.log);
    }

    #[test]
    fn breakdown_total_recombines_exactly() {
        let cfg = TrainConfig {
            lambda1: 0.001,
            lambda2: 0.0,
            variant: Variant::NoDistill,
            ..tiny_cfg()
        };
        let prep = tiny_prep(12);
        let train = Subset {
            prep: &prep,
            indices: (0..8).collect(),
        };
        let dev = Subset {
            prep: &prep,
            indices: (8..12).collect(),
        };
        let out = train_student(&cfg, &train, &dev, None).unwrap();
        for e in &out.log {
            let recombined = e.loss.recombined_total(cfg.lambda1, cfg.lambda2);
            assert!((recombined - e.loss.total).abs() <= 1e-12);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let cfg = tiny_cfg();
        let mut rng = crate::rng::stream(4, &["init"]);
        let params = StudentParams::init(&cfg, 3, &mut rng);
        let dir = std::env::temp_dir().join(format!("disentangle-stud-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.stdt1");
        params.save(&path).unwrap();
        let loaded = StudentParams::load(&path).unwrap();
        assert_eq!(params, loaded);
        assert_eq!(params.param_hash(), loaded.param_hash());
        std::fs::remove_dir_all(&dir).ok();
    }
}
