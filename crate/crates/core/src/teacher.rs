//! Step 1 of the pipeline: train an underfit shallow model, rank samples by
//! confidence, keep the easy top fraction, train the teacher to convergence
//! on them, and serve frozen unrobust features.

use crate::checkpoint::{self, Container, TEACHER_MAGIC};
use crate::data::Subset;
use crate::error::{Error, Result};
use crate::numerics::{ops, AdamWConfig, AdamWState, Dense, Gradients, Tape, Tensor, ValueId};
use crate::student::{TrainConfig, LATENT_DIM};
use crate::text::{sparse_batch, BackboneParams, SparseFeatures};
use rand::seq::SliceRandom;
use std::collections::BTreeSet;
use std::path::Path;

pub const TEACHER_MAX_EPOCHS: usize = 30;
pub const TEACHER_PATIENCE: usize = 3;
/// Minimum easy dev samples for the dev-CE stopping rule; below this the
/// training CE is used instead.
pub const TEACHER_DEV_MIN: usize = 10;

/// Shallow backbone plus a classification head straight on its output.
/// Used both as the underfit ranker and as the base of the teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowClassifier {
    pub backbone: BackboneParams,
    pub head: Dense,
    pub num_classes: usize,
}

impl ShallowClassifier {
    fn init(cfg: &TrainConfig, num_classes: usize, rng: &mut impl rand::Rng) -> Self {
        let backbone = BackboneParams::teacher(cfg.feature_dim, cfg.hidden_dim, rng);
        let head = Dense::linear(backbone.out_dim(), num_classes, rng);
        ShallowClassifier {
            backbone,
            head,
            num_classes,
        }
    }

    pub fn predict_proba(&self, f: &SparseFeatures) -> Result<Vec<f64>> {
        let h = self.backbone.forward_infer(f)?;
        Ok(ops::softmax(&self.head.forward_infer(&h)))
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes: Vec<Vec<usize>> = self
            .backbone
            .tensors()
            .iter()
            .map(|(_, t)| t.shape().to_vec())
            .collect();
        shapes.push(self.head.w.shape().to_vec());
        shapes.push(self.head.b.shape().to_vec());
        shapes
    }
}

/// (example id, max softmax probability), sorted by descending confidence
/// with ties broken by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRanking {
    pub entries: Vec<(String, f64)>,
}

/// Exactly `cfg.underfit_epochs` epochs of AdamW fine-tuning with
/// cross-entropy, no early stopping. Returns the classifier and the number
/// of optimizer steps taken.
pub fn train_underfit(train: &Subset, cfg: &TrainConfig, seed: u64) -> Result<(ShallowClassifier, usize)> {
    if train.is_empty() {
        return Err(Error::Data("cannot train the underfit model on an empty corpus".into()));
    }
    let mut init_rng = crate::rng::stream(seed, &["underfit-init"]);
    let mut model = ShallowClassifier::init(cfg, train.prep.num_classes, &mut init_rng);
    let mut shuffle_rng = crate::rng::stream(seed, &["underfit-shuffle"]);
    let mut opt = AdamWState::new(AdamWConfig::new(cfg.lr, cfg.weight_decay), &model.shapes());
    let mut steps = 0;
    for epoch in 0..cfg.underfit_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            classifier_step(&mut model, &mut opt, train, chunk, None)
                .map_err(|e| e.with_context(format!("underfit epoch {epoch} batch {bi}")))?;
            steps += 1;
        }
    }
    Ok((model, steps))
}

/// One AdamW step of CE on a batch. With `proj` the logits are computed from
/// the 64-dim projection (teacher training); without it, from the backbone
/// output directly (underfit model).
fn classifier_step(
    model: &mut ShallowClassifier,
    opt: &mut AdamWState,
    data: &Subset,
    chunk: &[usize],
    mut proj: Option<&mut Dense>,
) -> Result<()> {
    let feats: Vec<&SparseFeatures> = chunk.iter().map(|&i| data.features(i)).collect();
    let labels: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();
    let batch = sparse_batch(&feats)?;

    let mut tape = Tape::new();
    let bb_ids = model.backbone.register(&mut tape);
    let proj_ids = proj.as_ref().map(|p| p.register(&mut tape));
    let head_ids = model.head.register(&mut tape);
    let mut x = BackboneParams::apply(&bb_ids, &mut tape, batch)?;
    if let Some(p) = &proj_ids {
        x = p.apply(&mut tape, x)?;
    }
    let logits = head_ids.apply(&mut tape, x)?;
    let loss = tape.softmax_ce_mean(logits, labels)?;
    let mut grads = tape.backward(loss)?;

    let mut ids = BackboneParams::ids_in_order(&bb_ids);
    if let Some(p) = &proj_ids {
        ids.push(p.w);
        ids.push(p.b);
    }
    ids.push(head_ids.w);
    ids.push(head_ids.b);
    let grad_list = collect_grads(&mut grads, &ids);

    let mut params = model.backbone.tensors_mut();
    if let Some(p) = proj.as_deref_mut() {
        params.push(("proj.w", &mut p.w));
        params.push(("proj.b", &mut p.b));
    }
    params.push(("head.w", &mut model.head.w));
    params.push(("head.b", &mut model.head.b));
    opt.step(&mut params, &grad_list)
}

pub(crate) fn collect_grads(grads: &mut Gradients, ids: &[ValueId]) -> Vec<Option<Tensor>> {
    ids.iter().map(|&id| grads.take(id)).collect()
}

/// Full ranking of a corpus by model confidence, evaluation mode only.
pub fn rank_by_confidence(model: &ShallowClassifier, corpus: &Subset) -> Result<ConfidenceRanking> {
    let mut entries = Vec::with_capacity(corpus.len());
    for i in 0..corpus.len() {
        let probs = model.predict_proba(corpus.features(i))?;
        let conf = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        entries.push((corpus.id(i).to_string(), conf));
    }
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite confidence").then(a.0.cmp(&b.0)));
    Ok(ConfidenceRanking { entries })
}

/// The first floor(fraction * N) ids of the ranking, at least one.
pub fn select_easy(ranking: &ConfidenceRanking, fraction: f64) -> Result<Vec<String>> {
    if ranking.entries.is_empty() {
        return Err(Error::Data("cannot select easy samples from an empty ranking".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("easy fraction must be in (0, 1], got {fraction}")));
    }
    let n = ((ranking.entries.len() as f64 * fraction).floor() as usize).max(1);
    Ok(ranking.entries.iter().take(n).map(|(id, _)| id.clone()).collect())
}

/// Frozen teacher: shallow backbone, 64-dim projection producing the
/// unrobust feature, and the classification head used only while training.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherBundle {
    backbone: BackboneParams,
    proj: Dense,
    head: Dense,
    num_classes: usize,
    ngram_max: usize,
    frozen: bool,
}

impl TeacherBundle {
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.feature_dim
    }

    pub fn ngram_max(&self) -> usize {
        self.ngram_max
    }

    /// Unrobust feature of one example; defined for every example, easy or
    /// not. Forward only.
    pub fn features(&self, f: &SparseFeatures) -> Result<Vec<f64>> {
        if !self.frozen {
            return Err(Error::Config("teacher bundle must be frozen before serving features".into()));
        }
        let h = self.backbone.forward_infer(f)?;
        Ok(self.proj.forward_infer(&h))
    }

    /// Features of a whole subset as an [n, 64] tensor.
    pub fn features_batch(&self, data: &Subset, chunk: &[usize]) -> Result<Tensor> {
        let mut out = Vec::with_capacity(chunk.len() * LATENT_DIM);
        for &i in chunk {
            out.extend(self.features(data.features(i))?);
        }
        Tensor::new(vec![chunk.len(), LATENT_DIM], out)
    }

    fn container(&self) -> Container {
        let mut tensors: Vec<(String, Tensor)> = self
            .backbone
            .tensors()
            .iter()
            .map(|(n, t)| (n.to_string(), (*t).clone()))
            .collect();
        tensors.push(("proj.w".into(), self.proj.w.clone()));
        tensors.push(("proj.b".into(), self.proj.b.clone()));
        tensors.push(("head.w".into(), self.head.w.clone()));
        tensors.push(("head.b".into(), self.head.b.clone()));
        Container {
            meta: vec![
                ("num_classes".into(), self.num_classes as u64),
                ("feature_dim".into(), self.backbone.feature_dim as u64),
                ("hidden_dim".into(), self.backbone.out_dim() as u64),
                ("ngram_max".into(), self.ngram_max as u64),
            ],
            tensors,
        }
    }

    /// SHA-256 of the serialized parameters; the freezing checks compare it
    /// before and after downstream training.
    pub fn param_hash(&self) -> String {
        checkpoint::sha256_hex(&checkpoint::container_bytes(TEACHER_MAGIC, &self.container()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::write_container(path, TEACHER_MAGIC, &self.container())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TeacherBundle> {
        let mut c = checkpoint::read_container(path, TEACHER_MAGIC)?;
        let num_classes = c.meta_value("num_classes")? as usize;
        let feature_dim = c.meta_value("feature_dim")? as usize;
        let ngram_max = c.meta_value("ngram_max")? as usize;
        let embed = c.take_tensor("backbone.embed")?;
        if embed.shape()[0] != feature_dim {
            return Err(Error::Checkpoint(format!(
                "embed shape {:?} does not match feature_dim {feature_dim}",
                embed.shape()
            )));
        }
        let backbone = BackboneParams {
            feature_dim,
            embed,
            hidden: vec![Dense {
                w: c.take_tensor("backbone.hidden0.w")?,
                b: c.take_tensor("backbone.hidden0.b")?,
            }],
            readout: Some(Dense {
                w: c.take_tensor("backbone.readout.w")?,
                b: c.take_tensor("backbone.readout.b")?,
            }),
        };
        Ok(TeacherBundle {
            backbone,
            proj: Dense {
                w: c.take_tensor("proj.w")?,
                b: c.take_tensor("proj.b")?,
            },
            head: Dense {
                w: c.take_tensor("head.w")?,
                b: c.take_tensor("head.b")?,
            },
            num_classes,
            ngram_max,
            frozen: true,
        })
    }
}

/// Train the teacher on the easy corpus until convergence: the head reads
/// the 64-dim projection so the projection receives gradient, and training
/// stops when the dev CE fails to improve for `TEACHER_PATIENCE` consecutive
/// epochs (capped at `TEACHER_MAX_EPOCHS`). The best-CE snapshot is kept and
/// the bundle is frozen on return.
pub fn train_teacher(
    easy_train: &Subset,
    easy_dev: Option<&Subset>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TeacherBundle> {
    if easy_train.is_empty() {
        return Err(Error::Data("cannot train the teacher on an empty easy corpus".into()));
    }
    let mut init_rng = crate::rng::stream(seed, &["teacher-init"]);
    let num_classes = easy_train.prep.num_classes;
    let backbone = BackboneParams::teacher(cfg.feature_dim, cfg.hidden_dim, &mut init_rng);
    let mut proj = Dense::linear(backbone.out_dim(), LATENT_DIM, &mut init_rng);
    let head = Dense::linear(LATENT_DIM, num_classes, &mut init_rng);
    let mut model = ShallowClassifier {
        backbone,
        head,
        num_classes,
    };

    let mut shapes = model.backbone.tensors().iter().map(|(_, t)| t.shape().to_vec()).collect::<Vec<_>>();
    shapes.push(proj.w.shape().to_vec());
    shapes.push(proj.b.shape().to_vec());
    shapes.push(model.head.w.shape().to_vec());
    shapes.push(model.head.b.shape().to_vec());
    let mut opt = AdamWState::new(AdamWConfig::new(cfg.lr, cfg.weight_decay), &shapes);
    let mut shuffle_rng = crate::rng::stream(seed, &["teacher-shuffle"]);

    let eval_ce = |model: &ShallowClassifier, proj: &Dense, data: &Subset| -> Result<f64> {
        let mut total = 0.0;
        for i in 0..data.len() {
            let h = model.backbone.forward_infer(data.features(i))?;
            let z = proj.forward_infer(&h);
            let logits = model.head.forward_infer(&z);
            total += ops::cross_entropy(&logits, data.label(i))?;
        }
        Ok(total / data.len() as f64)
    };

    let mut best: Option<(f64, ShallowClassifier, Dense)> = None;
    let mut since_improvement = 0;
    for epoch in 0..TEACHER_MAX_EPOCHS {
        let mut order: Vec<usize> = (0..easy_train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            classifier_step(&mut model, &mut opt, easy_train, chunk, Some(&mut proj))
                .map_err(|e| e.with_context(format!("teacher epoch {epoch} batch {bi}")))?;
        }
        let metric = match easy_dev {
            Some(dev) if dev.len() >= TEACHER_DEV_MIN => eval_ce(&model, &proj, dev)?,
            _ => eval_ce(&model, &proj, easy_train)?,
        };
        if best.as_ref().map_or(true, |(b, _, _)| metric < *b) {
            best = Some((metric, model.clone(), proj.clone()));
            since_improvement = 0;
        } else {
            since_improvement += 1;
            if since_improvement >= TEACHER_PATIENCE {
                break;
            }
        }
    }
    let (_, model, proj) = best.expect("at least one epoch ran");
    Ok(TeacherBundle {
        backbone: model.backbone,
        proj,
        head: model.head,
        num_classes,
        ngram_max: cfg.ngram_max,
        frozen: true,
    })
}

/// Output of step 1: the frozen bundle plus bookkeeping for tests/reports.
pub struct TeacherPipelineOutput {
    pub bundle: TeacherBundle,
    pub underfit_steps: usize,
    pub easy_ids: Vec<String>,
}

/// Run step 1 end to end. The underfit model trains on `train`; the ranking
/// covers `train` and `dev` together, so the easy set has a dev slice for
/// the teacher's stopping rule. With `random_selection` the easy set is a
/// uniformly random fraction instead of the confidence prefix.
pub fn teacher_pipeline(
    train: &Subset,
    dev: &Subset,
    cfg: &TrainConfig,
    random_selection: bool,
    seed: u64,
) -> Result<TeacherPipelineOutput> {
    if !std::ptr::eq(train.prep, dev.prep) {
        return Err(Error::Data("train and dev must view the same prepared corpus".into()));
    }
    let (underfit, underfit_steps) = train_underfit(train, cfg, seed)?;
    let pool = Subset {
        prep: train.prep,
        indices: train.indices.iter().chain(dev.indices.iter()).copied().collect(),
    };
    let easy_ids = if random_selection {
        let mut ids: Vec<String> = (0..pool.len()).map(|i| pool.id(i).to_string()).collect();
        ids.sort();
        let mut rng = crate::rng::stream(seed, &["easy-random"]);
        ids.shuffle(&mut rng);
        let n = ((ids.len() as f64 * cfg.easy_fraction).floor() as usize).max(1);
        ids.truncate(n);
        ids
    } else {
        let ranking = rank_by_confidence(&underfit, &pool)?;
        select_easy(&ranking, cfg.easy_fraction)?
    };
    let easy_set: BTreeSet<String> = easy_ids.iter().cloned().collect();
    let easy_train = train.filter_ids(&easy_set);
    let easy_dev = dev.filter_ids(&easy_set);
    if easy_train.is_empty() {
        return Err(Error::Data("easy selection left no training samples for the teacher".into()));
    }
    let bundle = train_teacher(&easy_train, Some(&easy_dev), cfg, seed)?;
    Ok(TeacherPipelineOutput {
        bundle,
        underfit_steps,
        easy_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Corpus, Example, PreparedCorpus};

    fn cfg() -> TrainConfig {
        TrainConfig {
            batch: 64,
            lr: 1e-2,
            feature_dim: 1024,
            hidden_dim: 16,
            ..TrainConfig::default()
        }
    }

    fn prep_of(examples: Vec<Example>, num_classes: usize) -> PreparedCorpus {
        PreparedCorpus::prepare(Corpus { examples }, 1024, 2, num_classes).unwrap()
    }

    fn labeled_corpus(n: usize) -> PreparedCorpus {
        let examples = (0..n)
            .map(|i| Example {
                id: format!("c-{i:05}"),
                text: if i % 2 == 0 {
                    format!("shiny happy praise token{}", i % 7)
                } else {
                    format!("dull gloomy complaint token{}", i % 7)
                },
                label: i % 2,
                domain: "c".into(),
            })
            .collect();
        prep_of(examples, 2)
    }

    #[test]
    fn underfit_takes_exactly_the_expected_steps() {
        let prep = labeled_corpus(1600);
        let all = prep.all();
        let (_, steps) = train_underfit(&all, &cfg(), 3).unwrap();
        // ceil(1600/64) = 25 batches per epoch, 2 epochs
        assert_eq!(steps, 50);
    }

    #[test]
    fn underfit_is_seed_deterministic() {
        let prep = labeled_corpus(64);
        let all = prep.all();
        let (m1, _) = train_underfit(&all, &cfg(), 11).unwrap();
        let (m2, _) = train_underfit(&all, &cfg(), 11).unwrap();
        assert_eq!(m1, m2);
        let (m3, _) = train_underfit(&all, &cfg(), 12).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn underfit_single_class_corpus_is_valid_and_confident() {
        let examples = (0..64)
            .map(|i| Example {
                id: format!("s-{i}"),
                text: "same labels all around here".into(),
                label: 0,
                domain: "s".into(),
            })
            .collect();
        let prep = prep_of(examples, 2);
        let all = prep.all();
        let fast = TrainConfig {
            lr: 0.1,
            batch: 8,
            ..cfg()
        };
        let (model, _) = train_underfit(&all, &fast, 1).unwrap();
        let ranking = rank_by_confidence(&model, &all).unwrap();
        let mean: f64 =
            ranking.entries.iter().map(|(_, c)| c).sum::<f64>() / ranking.entries.len() as f64;
        assert!(mean > 0.8, "mean confidence {mean}");
    }

    #[test]
    fn underfit_rejects_empty_corpus() {
        let prep = labeled_corpus(4);
        let empty = Subset {
            prep: &prep,
            indices: vec![],
        };
        assert!(train_underfit(&empty, &cfg(), 0).is_err());
        assert!(train_teacher(&empty, None, &cfg(), 0).is_err());
    }

    #[test]
    fn ranking_sorts_by_confidence_then_id() {
        // hand-rolled ranking semantics on a crafted model-free check:
        // exercise through the public API by sorting a known entry list
        let mut r = ConfidenceRanking {
            entries: vec![
                ("a".into(), 0.9),
                ("b".into(), 0.6),
                ("c".into(), 0.99),
            ],
        };
        r.entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let order: Vec<&str> = r.entries.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(order, ["c", "a", "b"]);
    }

    #[test]
    fn ranking_ties_break_by_ascending_id() {
        // an untrained model with zeroed head gives identical confidences
        let prep = labeled_corpus(10);
        let all = prep.all();
        let mut init_rng = crate::rng::stream(0, &["underfit-init"]);
        let mut model = ShallowClassifier::init(&cfg(), 2, &mut init_rng);
        model.head.w = Tensor::zeros(model.head.w.shape().to_vec());
        model.head.b = Tensor::zeros(model.head.b.shape().to_vec());
        let ranking = rank_by_confidence(&model, &all).unwrap();
        assert!(ranking.entries.iter().all(|(_, c)| (c - 0.5).abs() < 1e-12));
        let ids: Vec<&str> = ranking.entries.iter().map(|(id, _)| id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        // re-invocation gives the identical ranking
        assert_eq!(ranking, rank_by_confidence(&model, &all).unwrap());
    }

    #[test]
    fn select_easy_floor_and_min_rules() {
        let mk = |n: usize| ConfidenceRanking {
            entries: (0..n).map(|i| (format!("id-{i:04}"), 1.0 - i as f64 * 1e-3)).collect(),
        };
        assert_eq!(select_easy(&mk(100), 0.35).unwrap().len(), 35);
        assert_eq!(select_easy(&mk(3), 0.35).unwrap().len(), 1);
        assert_eq!(select_easy(&mk(10), 1.0).unwrap().len(), 10);
        assert!(select_easy(&mk(0), 0.35).is_err());
        assert!(select_easy(&mk(10), 0.0).is_err());
        assert!(select_easy(&mk(10), 1.5).is_err());
    }

    #[test]
    fn teacher_fits_a_separable_corpus() {
        let prep = labeled_corpus(120);
        let train = Subset {
            prep: &prep,
            indices: (0..100).collect(),
        };
        let dev = Subset {
            prep: &prep,
            indices: (100..120).collect(),
        };
        let bundle = train_teacher(&train, Some(&dev), &cfg(), 5).unwrap();
        assert!(bundle.is_frozen());
        // training accuracy of the teacher head on its easy corpus
        let mut correct = 0;
        for i in 0..train.len() {
            let h = bundle.backbone.forward_infer(train.features(i)).unwrap();
            let z = bundle.proj.forward_infer(&h);
            let logits = bundle.head.forward_infer(&z);
            if crate::student::argmax(&logits) == train.label(i) {
                correct += 1;
            }
        }
        let acc = correct as f64 / train.len() as f64;
        assert!(acc > 0.99, "teacher train accuracy {acc}");
    }

    #[test]
    fn teacher_features_are_pure_width_64_and_need_freezing() {
        let prep = labeled_corpus(60);
        let train = Subset {
            prep: &prep,
            indices: (0..40).collect(),
        };
        let dev = Subset {
            prep: &prep,
            indices: (40..60).collect(),
        };
        let out = teacher_pipeline(&train, &dev, &cfg(), false, 9).unwrap();
        let bundle = &out.bundle;
        // a non-easy example still yields a feature
        let easy: BTreeSet<String> = out.easy_ids.iter().cloned().collect();
        let all = prep.all();
        let hard_idx = (0..all.len())
            .find(|&i| !easy.contains(all.id(i)))
            .expect("some example is not easy");
        let z1 = bundle.features(all.features(hard_idx)).unwrap();
        let z2 = bundle.features(all.features(hard_idx)).unwrap();
        assert_eq!(z1.len(), LATENT_DIM);
        assert_eq!(z1, z2);

        let mut unfrozen = bundle.clone();
        unfrozen.frozen = false;
        assert!(unfrozen.features(all.features(0)).is_err());
    }

    #[test]
    fn teacher_pipeline_is_deterministic_and_respects_fraction() {
        let prep = labeled_corpus(100);
        let train = Subset {
            prep: &prep,
            indices: (0..80).collect(),
        };
        let dev = Subset {
            prep: &prep,
            indices: (80..100).collect(),
        };
        let a = teacher_pipeline(&train, &dev, &cfg(), false, 21).unwrap();
        let b = teacher_pipeline(&train, &dev, &cfg(), false, 21).unwrap();
        assert_eq!(a.bundle, b.bundle);
        assert_eq!(a.easy_ids, b.easy_ids);
        // 35% of the 100-example pool
        assert_eq!(a.easy_ids.len(), 35);
        // random selection draws from the same pool with the same size
        let r = teacher_pipeline(&train, &dev, &cfg(), true, 21).unwrap();
        assert_eq!(r.easy_ids.len(), 35);
        assert_ne!(r.easy_ids, a.easy_ids);
    }

    #[test]
    fn bundle_serialization_roundtrip_and_hash() {
        let prep = labeled_corpus(60);
        let train = Subset {
            prep: &prep,
            indices: (0..50).collect(),
        };
        let dev = Subset {
            prep: &prep,
            indices: (50..60).collect(),
        };
        let bundle = train_teacher(&train, Some(&dev), &cfg(), 2).unwrap();
        let dir = std::env::temp_dir().join(format!("disentangle-tchr-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("teacher.tchr1");
        bundle.save(&path).unwrap();
        let loaded = TeacherBundle::load(&path).unwrap();
        assert_eq!(bundle, loaded);
        assert_eq!(bundle.param_hash(), loaded.param_hash());
        assert!(loaded.is_frozen());
        std::fs::remove_dir_all(&dir).ok();
    }
}
