//! Corpus ingestion, the 5-fold/80-20 protocol, task enumeration, and the
//! synthetic shortcut-injection corpus generator.

use crate::error::{Error, Result};
use crate::text::{hash_features, tokenize, SparseFeatures};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

/// One labeled text with a domain tag; the unit of all corpora.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub text: String,
    pub label: usize,
    pub domain: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub examples: Vec<Example>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.examples.iter().map(|e| e.label + 1).max().unwrap_or(0)
    }

    /// Domain names in sorted order.
    pub fn domains(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.examples.iter().map(|e| e.domain.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Merge corpora, checking id uniqueness.
    pub fn concat(parts: &[&Corpus]) -> Result<Corpus> {
        let mut examples = Vec::new();
        for p in parts {
            examples.extend(p.examples.iter().cloned());
        }
        check_unique_ids(&examples)?;
        Ok(Corpus { examples })
    }
}

fn check_unique_ids(examples: &[Example]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for e in examples {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::Data(format!("duplicate example id {}", e.id)));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct JsonlRecord {
    #[serde(default)]
    id: Option<String>,
    text: String,
    label: usize,
    domain: String,
}

/// Load a JSONL corpus: one object per line with string `text` and `domain`,
/// integer `label`, and an optional `id` (assigned as `<domain>-<line>` when
/// absent). Order-preserving.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Corpus> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = std::io::BufReader::new(file);
    let mut examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: lineno,
            detail: e.to_string(),
        })?;
        let id = rec.id.unwrap_or_else(|| format!("{}-{}", rec.domain, lineno));
        examples.push(Example {
            id,
            text: rec.text,
            label: rec.label,
            domain: rec.domain,
        });
    }
    check_unique_ids(&examples)?;
    Ok(Corpus { examples })
}

/// Write a corpus in the same JSONL schema `load_jsonl` reads.
pub fn write_jsonl(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for e in &corpus.examples {
        let line = serde_json::to_string(e).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Per-domain development blocks for k-fold cross-validation. Block `i` of a
/// domain is fold i's dev set; its complement is the training set.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// domain -> k disjoint dev id blocks covering the domain exactly
    pub dev_blocks: BTreeMap<String, Vec<Vec<String>>>,
}

impl FoldPlan {
    pub fn dev_ids(&self, domain: &str, fold: usize) -> Result<&[String]> {
        let blocks = self
            .dev_blocks
            .get(domain)
            .ok_or_else(|| Error::Data(format!("no fold plan for domain {domain}")))?;
        blocks
            .get(fold)
            .map(|b| b.as_slice())
            .ok_or_else(|| Error::Data(format!("fold {fold} out of range (k={})", self.k)))
    }
}

/// Build the seeded per-domain fold plan. Every domain is shuffled once and
/// partitioned into k dev blocks of equal size (+-1).
pub fn make_folds(corpus: &Corpus, k: usize, dev_fraction: f64, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    if (dev_fraction * k as f64 - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "dev_fraction {dev_fraction} and k {k} must satisfy k * dev_fraction = 1 so dev blocks partition each domain"
        )));
    }
    let mut by_domain: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for e in &corpus.examples {
        by_domain.entry(e.domain.clone()).or_default().push(e.id.clone());
    }
    let mut dev_blocks = BTreeMap::new();
    for (domain, mut ids) in by_domain {
        if ids.len() < k {
            return Err(Error::Data(format!(
                "domain {domain} has {} examples, fewer than k={k}",
                ids.len()
            )));
        }
        let mut rng = crate::rng::stream(seed, &["folds", &domain]);
        ids.shuffle(&mut rng);
        let n = ids.len();
        let base = n / k;
        let rem = n % k;
        let mut blocks = Vec::with_capacity(k);
        let mut start = 0;
        for i in 0..k {
            let size = base + usize::from(i < rem);
            blocks.push(ids[start..start + size].to_vec());
            start += size;
        }
        dev_blocks.insert(domain, blocks);
    }
    Ok(FoldPlan { k, seed, dev_blocks })
}

/// A source(s) -> target generalization task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub sources: Vec<String>,
    pub target: String,
}

impl TaskSpec {
    pub fn name(&self) -> String {
        format!("{}->{}", self.sources.join("+"), self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskMode {
    Single,
    Multi,
}

impl std::str::FromStr for TaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(TaskMode::Single),
            "multi" => Ok(TaskMode::Multi),
            other => Err(Error::Config(format!("unknown task mode {other}"))),
        }
    }
}

/// Single mode: every ordered (source, target) pair. Multi mode: for each
/// target, all other domains as sources.
pub fn enumerate_tasks(domains: &[String], mode: TaskMode) -> Result<Vec<TaskSpec>> {
    if domains.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 domains to build tasks, got {}",
            domains.len()
        )));
    }
    let set: BTreeSet<&String> = domains.iter().collect();
    if set.len() != domains.len() {
        return Err(Error::Config("duplicate domain names".into()));
    }
    let mut tasks = Vec::new();
    match mode {
        TaskMode::Single => {
            for s in domains {
                for t in domains {
                    if s != t {
                        tasks.push(TaskSpec {
                            sources: vec![s.clone()],
                            target: t.clone(),
                        });
                    }
                }
            }
        }
        TaskMode::Multi => {
            for t in domains {
                let sources: Vec<String> = domains.iter().filter(|d| *d != t).cloned().collect();
                tasks.push(TaskSpec {
                    sources,
                    target: t.clone(),
                });
            }
        }
    }
    Ok(tasks)
}

/// Configuration of the synthetic shortcut benchmark corpus.
///
/// Each class owns a pool of signal tokens; examples draw their own class's
/// tokens with `signal_own_prob`, the other class's with `signal_cross_prob`
/// (overlap noise), and shared filler tokens with `filler_prob`. The
/// shortcut token is appended to positive source examples with probability
/// `source_correlation` and, with the correlation flipped, to negative
/// target examples with probability `target_correlation`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortcutConfig {
    pub shortcut_token: String,
    pub source_correlation: f64,
    pub target_correlation: f64,
    pub samples_per_class: usize,
    pub signal_tokens_per_class: usize,
    pub signal_own_prob: f64,
    pub signal_cross_prob: f64,
    pub filler_tokens: usize,
    pub filler_prob: f64,
    pub seed: u64,
}

impl Default for ShortcutConfig {
    fn default() -> Self {
        // frozen after the pilot calibration run of the benchmark
        ShortcutConfig {
            shortcut_token: "bonus".into(),
            source_correlation: 0.9,
            target_correlation: 0.9,
            samples_per_class: 1000,
            signal_tokens_per_class: 20,
            signal_own_prob: 0.3,
            signal_cross_prob: 0.15,
            filler_tokens: 10,
            filler_prob: 0.3,
            seed: 0,
        }
    }
}

impl ShortcutConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("source_correlation", self.source_correlation),
            ("target_correlation", self.target_correlation),
            ("signal_own_prob", self.signal_own_prob),
            ("signal_cross_prob", self.signal_cross_prob),
            ("filler_prob", self.filler_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {p}")));
            }
        }
        if self.samples_per_class == 0 || self.signal_tokens_per_class == 0 {
            return Err(Error::Config("sample and token counts must be positive".into()));
        }
        if self.shortcut_token.is_empty() {
            return Err(Error::Config("shortcut_token must be nonempty".into()));
        }
        Ok(())
    }
}

const SOURCE_DOMAIN: &str = "source";
const TARGET_DOMAIN: &str = "target";

/// Generate the (source, target) corpus pair: genuine class signal in both,
/// the shortcut correlated with the positive class in the source and flipped
/// onto the negative class in the target. Balanced and fully seeded.
pub fn synth_shortcut_corpus(cfg: &ShortcutConfig) -> Result<(Corpus, Corpus)> {
    cfg.validate()?;
    let source = synth_domain(cfg, SOURCE_DOMAIN, Some(ShortcutRule::OnPositives(cfg.source_correlation)))?;
    let target = synth_domain(cfg, TARGET_DOMAIN, Some(ShortcutRule::OnNegatives(cfg.target_correlation)))?;
    Ok((source, target))
}

enum ShortcutRule {
    OnPositives(f64),
    OnNegatives(f64),
}

fn synth_domain(cfg: &ShortcutConfig, domain: &str, rule: Option<ShortcutRule>) -> Result<Corpus> {
    let mut rng = crate::rng::stream(cfg.seed, &["synth", domain]);
    let mut examples = Vec::with_capacity(2 * cfg.samples_per_class);
    let mut counter = 0;
    for class in 0..2usize {
        for _ in 0..cfg.samples_per_class {
            let mut tokens: Vec<String> = Vec::new();
            for c in 0..2usize {
                let p = if c == class { cfg.signal_own_prob } else { cfg.signal_cross_prob };
                let prefix = if c == 1 { "pos" } else { "neg" };
                for t in 0..cfg.signal_tokens_per_class {
                    if rng.random_bool(p) {
                        tokens.push(format!("{prefix}{t:02}"));
                    }
                }
            }
            for t in 0..cfg.filler_tokens {
                if rng.random_bool(cfg.filler_prob) {
                    tokens.push(format!("fill{t}"));
                }
            }
            tokens.shuffle(&mut rng);
            let with_shortcut = match &rule {
                Some(ShortcutRule::OnPositives(p)) => class == 1 && rng.random_bool(*p),
                Some(ShortcutRule::OnNegatives(p)) => class == 0 && rng.random_bool(*p),
                None => false,
            };
            if with_shortcut {
                tokens.push(cfg.shortcut_token.clone());
            }
            counter += 1;
            examples.push(Example {
                id: format!("{domain}-{counter}"),
                text: tokens.join(" "),
                label: class,
                domain: domain.to_string(),
            });
        }
    }
    Ok(Corpus { examples })
}

/// Generate `names.len()` mutually hostile synthetic domains: each domain's
/// own shortcut token rides its positives, and every foreign domain's token
/// rides its negatives, so any ordered pair of domains exhibits the
/// correlation flip.
pub fn synth_domain_set(cfg: &ShortcutConfig, names: &[String]) -> Result<Vec<Corpus>> {
    cfg.validate()?;
    if names.len() < 2 {
        return Err(Error::Config("need at least 2 domain names".into()));
    }
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let mut base = synth_domain(cfg, name, None)?;
        let mut rng = crate::rng::stream(cfg.seed, &["synth-set", name]);
        for e in &mut base.examples {
            let mut extra: Vec<String> = Vec::new();
            for (j, _) in names.iter().enumerate() {
                let tok = format!("{}{}", cfg.shortcut_token, j);
                if j == i {
                    if e.label == 1 && rng.random_bool(cfg.source_correlation) {
                        extra.push(tok);
                    }
                } else if e.label == 0 && rng.random_bool(cfg.target_correlation) {
                    extra.push(tok);
                }
            }
            if !extra.is_empty() {
                e.text = format!("{} {}", e.text, extra.join(" "));
            }
        }
        out.push(base);
    }
    Ok(out)
}

/// A corpus with hashed features computed once, plus an id index.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub corpus: Corpus,
    pub features: Vec<SparseFeatures>,
    pub num_classes: usize,
    id_index: BTreeMap<String, usize>,
}

impl PreparedCorpus {
    pub fn prepare(corpus: Corpus, feature_dim: usize, n_max: usize, num_classes: usize) -> Result<Self> {
        if corpus.num_classes() > num_classes {
            return Err(Error::Data(format!(
                "corpus has labels up to {}, but {} classes declared",
                corpus.num_classes() - 1,
                num_classes
            )));
        }
        let features = corpus
            .examples
            .iter()
            .map(|e| hash_features(&tokenize(&e.text), feature_dim, n_max))
            .collect::<Result<Vec<_>>>()?;
        let id_index = corpus
            .examples
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i))
            .collect();
        Ok(PreparedCorpus {
            corpus,
            features,
            num_classes,
            id_index,
        })
    }

    pub fn len(&self) -> usize {
        self.corpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    /// View over every example.
    pub fn all(&self) -> Subset<'_> {
        Subset {
            prep: self,
            indices: (0..self.len()).collect(),
        }
    }

    /// View over the given ids, in the given order.
    pub fn by_ids<'a, I: IntoIterator<Item = &'a String>>(&self, ids: I) -> Result<Subset<'_>> {
        let indices = ids
            .into_iter()
            .map(|id| {
                self.index_of(id)
                    .ok_or_else(|| Error::Data(format!("unknown example id {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Subset { prep: self, indices })
    }
}

/// A borrowed, index-based slice of a prepared corpus.
#[derive(Debug, Clone)]
pub struct Subset<'a> {
    pub prep: &'a PreparedCorpus,
    pub indices: Vec<usize>,
}

impl<'a> Subset<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn example(&self, i: usize) -> &'a Example {
        &self.prep.corpus.examples[self.indices[i]]
    }

    pub fn features(&self, i: usize) -> &'a SparseFeatures {
        &self.prep.features[self.indices[i]]
    }

    pub fn label(&self, i: usize) -> usize {
        self.example(i).label
    }

    pub fn id(&self, i: usize) -> &'a str {
        &self.example(i).id
    }

    /// Restrict to ids in `keep`, preserving order.
    pub fn filter_ids(&self, keep: &BTreeSet<String>) -> Subset<'a> {
        Subset {
            prep: self.prep,
            indices: self
                .indices
                .iter()
                .copied()
                .filter(|&i| keep.contains(&self.prep.corpus.examples[i].id))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_corpus(domain: &str, n: usize) -> Corpus {
        let examples = (0..n)
            .map(|i| Example {
                id: format!("{domain}-{i}"),
                text: format!("text {i}"),
                label: i % 2,
                domain: domain.to_string(),
            })
            .collect();
        Corpus { examples }
    }

    #[test]
    fn jsonl_roundtrip_and_id_assignment() {
        let dir = std::env::temp_dir().join(format!("disentangle-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("tiny.jsonl");
        std::fs::write(
            &path,
            "{\"text\":\"great\",\"label\":1,\"domain\":\"books\"}\n\
             {\"id\":\"x7\",\"text\":\"meh\",\"label\":0,\"domain\":\"books\"}\n",
        )
        .unwrap();
        let c = load_jsonl(&path).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.examples[0].id, "books-1");
        assert_eq!(c.examples[1].id, "x7");
        assert_eq!(c.examples[0].label, 1);

        let out = dir.join("copy.jsonl");
        write_jsonl(&c, &out).unwrap();
        let c2 = load_jsonl(&out).unwrap();
        assert_eq!(c, c2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn jsonl_empty_file_is_empty_corpus() {
        let dir = std::env::temp_dir().join(format!("disentangle-data-e-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_jsonl(&path).unwrap().is_empty());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn jsonl_schema_errors_name_the_line() {
        let dir = std::env::temp_dir().join(format!("disentangle-data-s-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"text\":\"ok\",\"label\":1,\"domain\":\"a\"}\n{\"text\":\"bad\",\"label\":\"x\",\"domain\":\"a\"}\n",
        )
        .unwrap();
        let err = load_jsonl(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn folds_partition_each_domain() {
        let c = tiny_corpus("books", 2000);
        let plan = make_folds(&c, 5, 0.2, 11).unwrap();
        let blocks = &plan.dev_blocks["books"];
        assert_eq!(blocks.len(), 5);
        for b in blocks {
            assert_eq!(b.len(), 400);
        }
        let union: BTreeSet<&String> = blocks.iter().flatten().collect();
        assert_eq!(union.len(), 2000);
        // deterministic under the same seed
        let plan2 = make_folds(&c, 5, 0.2, 11).unwrap();
        assert_eq!(plan, plan2);
        let plan3 = make_folds(&c, 5, 0.2, 12).unwrap();
        assert_ne!(plan, plan3);
    }

    #[test]
    fn folds_handle_remainders_and_small_domains() {
        let c = tiny_corpus("a", 7);
        let plan = make_folds(&c, 5, 0.2, 1).unwrap();
        let sizes: Vec<usize> = plan.dev_blocks["a"].iter().map(|b| b.len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 7);
        assert_eq!(sizes, vec![2, 2, 1, 1, 1]);
        assert!(make_folds(&tiny_corpus("a", 4), 5, 0.2, 1).is_err());
        assert!(make_folds(&c, 5, 0.1, 1).is_err());
    }

    #[test]
    fn task_enumeration_counts() {
        let domains: Vec<String> = ["B", "D", "E", "K"].iter().map(|s| s.to_string()).collect();
        let single = enumerate_tasks(&domains, TaskMode::Single).unwrap();
        assert_eq!(single.len(), 12);
        let multi = enumerate_tasks(&domains, TaskMode::Multi).unwrap();
        assert_eq!(multi.len(), 4);
        assert_eq!(multi[0].sources.len(), 3);
        assert!(multi.iter().all(|t| !t.sources.contains(&t.target)));

        let two: Vec<String> = ["A", "B"].iter().map(|s| s.to_string()).collect();
        assert_eq!(enumerate_tasks(&two, TaskMode::Single).unwrap().len(), 2);
        assert!(enumerate_tasks(&two[..1], TaskMode::Single).is_err());
    }

    #[test]
    fn task_counts_scale_as_n_times_n_minus_1() {
        for n in 2..7usize {
            let domains: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
            assert_eq!(enumerate_tasks(&domains, TaskMode::Single).unwrap().len(), n * (n - 1));
            assert_eq!(enumerate_tasks(&domains, TaskMode::Multi).unwrap().len(), n);
        }
    }

    #[test]
    fn synth_degenerate_probabilities() {
        let cfg = ShortcutConfig {
            source_correlation: 1.0,
            target_correlation: 0.0,
            samples_per_class: 50,
            seed: 3,
            ..ShortcutConfig::default()
        };
        let (src, tgt) = synth_shortcut_corpus(&cfg).unwrap();
        let has_token = |e: &Example| e.text.split(' ').any(|t| t == cfg.shortcut_token);
        for e in &src.examples {
            assert_eq!(has_token(e), e.label == 1);
        }
        assert!(tgt.examples.iter().all(|e| !has_token(e)));
    }

    #[test]
    fn synth_counts_are_binomial_and_balanced() {
        let cfg = ShortcutConfig {
            seed: 17,
            ..ShortcutConfig::default()
        };
        let (src, tgt) = synth_shortcut_corpus(&cfg).unwrap();
        assert_eq!(src.len(), 2000);
        let pos = src.examples.iter().filter(|e| e.label == 1).count();
        assert_eq!(pos, 1000);
        let has_token = |e: &Example| e.text.split(' ').any(|t| t == cfg.shortcut_token);
        let count = src
            .examples
            .iter()
            .filter(|e| e.label == 1 && has_token(e))
            .count() as f64;
        // 900 expected, binomial sd ~ 9.5, +-60 is > 6 sd
        assert!((count - 900.0).abs() <= 60.0, "shortcut count {count}");
        // flipped in the target: only negatives carry it
        assert!(tgt.examples.iter().all(|e| e.label == 0 || !has_token(e)));
        let tcount = tgt.examples.iter().filter(|e| has_token(e)).count() as f64;
        assert!((tcount - 900.0).abs() <= 60.0);
    }

    #[test]
    fn synth_is_seed_deterministic() {
        let cfg = ShortcutConfig::default();
        let a = synth_shortcut_corpus(&cfg).unwrap();
        let b = synth_shortcut_corpus(&cfg).unwrap();
        assert_eq!(a, b);
        let c = synth_shortcut_corpus(&ShortcutConfig {
            seed: 1,
            ..ShortcutConfig::default()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synth_domain_set_flips_pairwise() {
        let cfg = ShortcutConfig {
            samples_per_class: 100,
            source_correlation: 1.0,
            target_correlation: 1.0,
            seed: 5,
            ..ShortcutConfig::default()
        };
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let doms = synth_domain_set(&cfg, &names).unwrap();
        assert_eq!(doms.len(), 3);
        // domain a's token "bonus0" rides a's positives and b's negatives
        let tok = "bonus0";
        let has = |e: &Example| e.text.split(' ').any(|t| t == tok);
        for e in &doms[0].examples {
            assert_eq!(has(e), e.label == 1);
        }
        for e in &doms[1].examples {
            assert_eq!(has(e), e.label == 0);
        }
    }

    #[test]
    fn prepared_corpus_views() {
        let c = tiny_corpus("books", 10);
        let prep = PreparedCorpus::prepare(c, 1024, 2, 2).unwrap();
        assert_eq!(prep.all().len(), 10);
        let ids: Vec<String> = vec!["books-3".into(), "books-1".into()];
        let sub = prep.by_ids(ids.iter()).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.id(0), "books-3");
        assert_eq!(sub.label(1), 1);
        assert!(prep.by_ids([&"missing".to_string()]).is_err());
    }
}
