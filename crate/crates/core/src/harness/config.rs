//! Plain-text key=value configuration files. Keys match the TrainConfig and
//! ShortcutConfig field names; `#` starts a comment.

use crate::data::ShortcutConfig;
use crate::error::{Error, Result};
use crate::student::TrainConfig;
use std::collections::BTreeMap;

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Schema {
                line: i + 1,
                detail: format!("expected key=value, got {raw:?}"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Schema {
                line: i + 1,
                detail: format!("duplicate key {key}"),
            });
        }
    }
    Ok(map)
}

fn parse_field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key}={value}")))
}

/// Keys consumed by TrainConfig.
pub const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "batch",
    "lr",
    "lambda1",
    "lambda2",
    "beta",
    "easy_fraction",
    "underfit_epochs",
    "seed",
    "variant",
    "feature_dim",
    "hidden_dim",
    "ngram_max",
    "weight_decay",
];

/// Keys consumed by ShortcutConfig (`seed` is shared with TrainConfig).
pub const SHORTCUT_KEYS: &[&str] = &[
    "shortcut_token",
    "source_correlation",
    "target_correlation",
    "samples_per_class",
    "signal_tokens_per_class",
    "signal_own_prob",
    "signal_cross_prob",
    "filler_tokens",
    "filler_prob",
    "seed",
];

pub fn apply_train(map: &BTreeMap<String, String>, cfg: &mut TrainConfig) -> Result<()> {
    for (k, v) in map {
        match k.as_str() {
            "epochs" => cfg.epochs = parse_field(k, v)?,
            "batch" => cfg.batch = parse_field(k, v)?,
            "lr" => cfg.lr = parse_field(k, v)?,
            "lambda1" => cfg.lambda1 = parse_field(k, v)?,
            "lambda2" => cfg.lambda2 = parse_field(k, v)?,
            "beta" => cfg.beta = parse_field(k, v)?,
            "easy_fraction" => cfg.easy_fraction = parse_field(k, v)?,
            "underfit_epochs" => cfg.underfit_epochs = parse_field(k, v)?,
            "seed" => cfg.seed = parse_field(k, v)?,
            "variant" => cfg.variant = v.parse()?,
            "feature_dim" => cfg.feature_dim = parse_field(k, v)?,
            "hidden_dim" => cfg.hidden_dim = parse_field(k, v)?,
            "ngram_max" => cfg.ngram_max = parse_field(k, v)?,
            "weight_decay" => cfg.weight_decay = parse_field(k, v)?,
            _ => {}
        }
    }
    Ok(())
}

pub fn apply_shortcut(map: &BTreeMap<String, String>, cfg: &mut ShortcutConfig) -> Result<()> {
    for (k, v) in map {
        match k.as_str() {
            "shortcut_token" => cfg.shortcut_token = v.clone(),
            "source_correlation" => cfg.source_correlation = parse_field(k, v)?,
            "target_correlation" => cfg.target_correlation = parse_field(k, v)?,
            "samples_per_class" => cfg.samples_per_class = parse_field(k, v)?,
            "signal_tokens_per_class" => cfg.signal_tokens_per_class = parse_field(k, v)?,
            "signal_own_prob" => cfg.signal_own_prob = parse_field(k, v)?,
            "signal_cross_prob" => cfg.signal_cross_prob = parse_field(k, v)?,
            "filler_tokens" => cfg.filler_tokens = parse_field(k, v)?,
            "filler_prob" => cfg.filler_prob = parse_field(k, v)?,
            "seed" => cfg.seed = parse_field(k, v)?,
            _ => {}
        }
    }
    Ok(())
}

/// Reject keys that belong to neither config.
pub fn check_known_keys(map: &BTreeMap<String, String>) -> Result<()> {
    for k in map.keys() {
        if !TRAIN_KEYS.contains(&k.as_str()) && !SHORTCUT_KEYS.contains(&k.as_str()) {
            return Err(Error::Config(format!("unknown config key {k}")));
        }
    }
    Ok(())
}

/// Echo a TrainConfig as key=value pairs (manifest payload).
pub fn train_to_map(cfg: &TrainConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("epochs".into(), cfg.epochs.to_string());
    m.insert("batch".into(), cfg.batch.to_string());
    m.insert("lr".into(), cfg.lr.to_string());
    m.insert("lambda1".into(), cfg.lambda1.to_string());
    m.insert("lambda2".into(), cfg.lambda2.to_string());
    m.insert("beta".into(), cfg.beta.to_string());
    m.insert("easy_fraction".into(), cfg.easy_fraction.to_string());
    m.insert("underfit_epochs".into(), cfg.underfit_epochs.to_string());
    m.insert("seed".into(), cfg.seed.to_string());
    m.insert("variant".into(), cfg.variant.as_str().to_string());
    m.insert("feature_dim".into(), cfg.feature_dim.to_string());
    m.insert("hidden_dim".into(), cfg.hidden_dim.to_string());
    m.insert("ngram_max".into(), cfg.ngram_max.to_string());
    m.insert("weight_decay".into(), cfg.weight_decay.to_string());
    m
}

pub fn shortcut_to_map(cfg: &ShortcutConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("shortcut_token".into(), cfg.shortcut_token.clone());
    m.insert("source_correlation".into(), cfg.source_correlation.to_string());
    m.insert("target_correlation".into(), cfg.target_correlation.to_string());
    m.insert("samples_per_class".into(), cfg.samples_per_class.to_string());
    m.insert("signal_tokens_per_class".into(), cfg.signal_tokens_per_class.to_string());
    m.insert("signal_own_prob".into(), cfg.signal_own_prob.to_string());
    m.insert("signal_cross_prob".into(), cfg.signal_cross_prob.to_string());
    m.insert("filler_tokens".into(), cfg.filler_tokens.to_string());
    m.insert("filler_prob".into(), cfg.filler_prob.to_string());
    m.insert("seed".into(), cfg.seed.to_string());
    m
}
