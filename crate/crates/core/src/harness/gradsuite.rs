//! Gradient verification suite: every loss term, and the joint loss through
//! the whole student, against central finite differences on tiny configs.

use crate::data::{Corpus, Example, PreparedCorpus};
use crate::error::Result;
use crate::numerics::{grad_check, GradCheckReport, Tape, Tensor};
use crate::student::{StudentParams, TrainConfig, Variant, LATENT_DIM, WHITEN_EPS};
use crate::text::sparse_batch;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct GradSuiteEntry {
    pub name: String,
    pub config_index: usize,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone)]
pub struct GradSuiteReport {
    pub entries: Vec<GradSuiteEntry>,
    pub max_rel_err: f64,
    pub rel_tol: f64,
}

impl GradSuiteReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.rel_tol
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "gradient checks (tolerance {:.1e}, finite-difference step 1e-5)\n",
            self.rel_tol
        ));
        for e in &self.entries {
            out.push_str(&format!(
                "  [{}] {:<22} max rel err {:.3e} over {} coords\n",
                e.config_index, e.name, e.report.max_rel_err, e.report.coords_checked
            ));
        }
        out.push_str(&format!(
            "overall max rel err: {:.3e} -> {}\n",
            self.max_rel_err,
            if self.passed() { "PASS" } else { "FAIL" }
        ));
        out
    }
}

const REL_TOL: f64 = 1e-4;

/// Run the whole suite over `configs` random tiny configurations.
pub fn gradient_check_suite(configs: usize, seed: u64) -> Result<GradSuiteReport> {
    let mut entries = Vec::new();
    let mut rng = crate::rng::stream(seed, &["gradsuite"]);
    for ci in 0..configs {
        entries.push(check_whiten_smooth_l1(ci, &mut rng)?);
        entries.push(check_kl(ci, &mut rng)?);
        entries.push(check_reconstruction(ci, &mut rng)?);
        entries.push(check_cross_entropy(ci, &mut rng)?);
        entries.push(check_reparameterize(ci, &mut rng)?);
        entries.push(check_joint_student_loss(ci, &mut rng)?);
    }
    let max_rel_err = entries
        .iter()
        .map(|e| e.report.max_rel_err)
        .fold(0.0f64, f64::max);
    Ok(GradSuiteReport {
        entries,
        max_rel_err,
        rel_tol: REL_TOL,
    })
}

fn check_whiten_smooth_l1(ci: usize, rng: &mut impl Rng) -> Result<GradSuiteEntry> {
    let a = Tensor::randn(vec![3, 8], 1.0, rng);
    let target = Tensor::randn(vec![3, 8], 1.0, rng);
    let params = vec![a];
    let f = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let x = tape.param(ps[0].clone());
        let t = tape.constant(target.clone());
        let wx = tape.row_whiten(x, WHITEN_EPS)?;
        let wt = tape.row_whiten(t, WHITEN_EPS)?;
        let loss = tape.smooth_l1_mean(wx, wt, 2.0)?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).item(), vec![grads.get(x).unwrap().clone()]))
    };
    let report = grad_check(f, &params, REL_TOL, 8, rng)?;
    Ok(GradSuiteEntry {
        name: "distill(whiten+smoothl1)".into(),
        config_index: ci,
        report,
    })
}

fn check_kl(ci: usize, rng: &mut impl Rng) -> Result<GradSuiteEntry> {
    let mu = Tensor::randn(vec![4, 6], 1.2, rng);
    let lv = Tensor::randn(vec![4, 6], 1.0, rng);
    let params = vec![mu, lv];
    let f = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let mu = tape.param(ps[0].clone());
        let lv = tape.param(ps[1].clone());
        let loss = tape.kl_mean(mu, lv)?;
        let grads = tape.backward(loss)?;
        Ok((
            tape.value(loss).item(),
            vec![grads.get(mu).unwrap().clone(), grads.get(lv).unwrap().clone()],
        ))
    };
    let report = grad_check(f, &params, REL_TOL, 8, rng)?;
    Ok(GradSuiteEntry {
        name: "kl".into(),
        config_index: ci,
        report,
    })
}

fn check_reconstruction(ci: usize, rng: &mut impl Rng) -> Result<GradSuiteEntry> {
    let a = Tensor::randn(vec![3, 10], 1.0, rng);
    let b = Tensor::randn(vec![3, 10], 1.0, rng);
    let params = vec![a, b];
    let f = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let a = tape.param(ps[0].clone());
        let b = tape.param(ps[1].clone());
        let loss = tape.mse_mean(a, b)?;
        let grads = tape.backward(loss)?;
        Ok((
            tape.value(loss).item(),
            vec![grads.get(a).unwrap().clone(), grads.get(b).unwrap().clone()],
        ))
    };
    let report = grad_check(f, &params, REL_TOL, 8, rng)?;
    Ok(GradSuiteEntry {
        name: "reconstruction(mse)".into(),
        config_index: ci,
        report,
    })
}

fn check_cross_entropy(ci: usize, rng: &mut impl Rng) -> Result<GradSuiteEntry> {
    let logits = Tensor::randn(vec![5, 3], 2.0, rng);
    let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..3)).collect();
    let params = vec![logits];
    let f = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let l = tape.param(ps[0].clone());
        let loss = tape.softmax_ce_mean(l, labels.clone())?;
        let grads = tape.backward(loss)?;
        Ok((tape.value(loss).item(), vec![grads.get(l).unwrap().clone()]))
    };
    let report = grad_check(f, &params, REL_TOL, 8, rng)?;
    Ok(GradSuiteEntry {
        name: "cross_entropy".into(),
        config_index: ci,
        report,
    })
}

fn check_reparameterize(ci: usize, rng: &mut impl Rng) -> Result<GradSuiteEntry> {
    let mu = Tensor::randn(vec![3, 5], 1.0, rng);
    let lv = Tensor::randn(vec![3, 5], 0.8, rng);
    let noise = Tensor::randn(vec![3, 5], 1.0, rng);
    let target = Tensor::randn(vec![3, 5], 1.0, rng);
    let params = vec![mu, lv];
    let f = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let mu = tape.param(ps[0].clone());
        let lv = tape.param(ps[1].clone());
        let z = tape.reparameterize(mu, lv, noise.clone())?;
        let t = tape.constant(target.clone());
        let loss = tape.mse_mean(z, t)?;
        let grads = tape.backward(loss)?;
        Ok((
            tape.value(loss).item(),
            vec![grads.get(mu).unwrap().clone(), grads.get(lv).unwrap().clone()],
        ))
    };
    let report = grad_check(f, &params, REL_TOL, 8, rng)?;
    Ok(GradSuiteEntry {
        name: "reparameterize".into(),
        config_index: ci,
        report,
    })
}

/// The joint loss on a 4-example batch, differentiated through every
/// parameter group of a tiny student.
fn check_joint_student_loss(ci: usize, rng: &mut impl Rng) -> Result<GradSuiteEntry> {
    let cfg = TrainConfig {
        feature_dim: 64,
        hidden_dim: 6,
        lambda1: 0.05,
        lambda2: 0.2,
        variant: Variant::Full,
        ..TrainConfig::default()
    };
    let words = ["tiny", "batch", "of", "words", "for", "a", "joint", "check"];
    let examples: Vec<Example> = (0..4)
        .map(|i| Example {
            id: format!("g-{i}"),
            text: format!("{} {} {}", words[i], words[(i + 3) % 8], words[(i + 5) % 8]),
            label: i % 2,
            domain: "g".into(),
        })
        .collect();
    let prep = PreparedCorpus::prepare(Corpus { examples }, 64, 2, 2)?;
    let template = StudentParams::init(&cfg, 2, rng);
    let noise = Tensor::randn(vec![4, LATENT_DIM], 1.0, rng);
    let z_tilde = Tensor::randn(vec![4, LATENT_DIM], 1.0, rng);
    let labels: Vec<usize> = (0..4).map(|i| prep.all().label(i)).collect();

    let params: Vec<Tensor> = template.tensors().iter().map(|(_, t)| (*t).clone()).collect();
    let f = |ps: &[Tensor]| {
        let mut model = template.clone();
        for ((_, dst), src) in model.tensors_mut().into_iter().zip(ps) {
            *dst = src.clone();
        }
        let all = prep.all();
        let feats: Vec<&crate::text::SparseFeatures> = (0..4).map(|i| all.features(i)).collect();
        let batch = sparse_batch(&feats)?;

        let mut tape = Tape::new();
        let ids = model.register(&mut tape);
        let h = crate::text::BackboneParams::apply(&ids.backbone, &mut tape, batch)?;
        let enc = crate::numerics::Mlp::apply(&ids.encoder, true, &mut tape, h)?;
        let z_mu = ids.mu_head.apply(&mut tape, enc)?;
        let z_sigma = ids.sigma_head.apply(&mut tape, enc)?;
        let z = tape.reparameterize(z_mu, z_sigma, noise.clone())?;
        let h_hat = crate::numerics::Mlp::apply(&ids.decoder, false, &mut tape, z)?;
        let logits = ids.class_head.apply(&mut tape, z_mu)?;

        let ce = tape.softmax_ce_mean(logits, labels.clone())?;
        let recon = tape.mse_mean(h_hat, h)?;
        let kl = tape.kl_mean(z_mu, z_sigma)?;
        let vae = tape.add(recon, kl)?;
        let zt = tape.constant(z_tilde.clone());
        let ws = tape.row_whiten(z_sigma, WHITEN_EPS)?;
        let wt = tape.row_whiten(zt, WHITEN_EPS)?;
        let distill = tape.smooth_l1_mean(ws, wt, cfg.beta)?;

        let mut total = tape.scale(ce, 1.0 - cfg.lambda1 - cfg.lambda2)?;
        let t1 = tape.scale(vae, cfg.lambda1)?;
        total = tape.add(total, t1)?;
        let t2 = tape.scale(distill, cfg.lambda2)?;
        total = tape.add(total, t2)?;

        let mut grads = tape.backward(total)?;
        let id_list = StudentParams::ids_in_order(&ids);
        let out: Vec<Tensor> = id_list
            .iter()
            .map(|&id| {
                grads
                    .take(id)
                    .unwrap_or_else(|| Tensor::zeros(tape.value(id).shape().to_vec()))
            })
            .collect();
        Ok((tape.value(total).item(), out))
    };
    let report = grad_check(f, &params, REL_TOL, 3, rng)?;
    Ok(GradSuiteEntry {
        name: "joint_student_loss".into(),
        config_index: ci,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_two_configs() {
        let report = gradient_check_suite(2, 123).unwrap();
        assert!(report.passed(), "{}", report.render_text());
        assert_eq!(report.entries.len(), 12);
    }
}
