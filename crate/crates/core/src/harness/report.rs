//! Artifact writers: loss-log CSV, evaluation report CSV/JSON, projection
//! CSV, and the run manifest with content hashes.
//!
//! Floats are written with Rust's shortest-roundtrip formatting, so every
//! value parses back to the exact f64 and reruns are byte-identical.

use crate::checkpoint::sha256_hex;
use crate::error::{Error, Result};
use crate::harness::eval::EvalReport;
use crate::harness::projection::ProjectionExport;
use crate::student::EpochLog;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

pub fn write_loss_log(path: impl AsRef<Path>, log: &[EpochLog]) -> Result<()> {
    let mut out = String::from("epoch,ce,recon,kl,vae,distill,total,dev_acc\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            e.epoch, e.loss.ce, e.loss.recon, e.loss.kl, e.loss.vae, e.loss.distill, e.loss.total, e.dev_acc
        ));
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// One row per cell, one per aggregate (task means plus the Avg row).
pub fn eval_report_csv(report: &EvalReport) -> String {
    let mut out = String::from("row,task,fold,seed,variant,accuracy,note\n");
    for c in &report.cells {
        out.push_str(&format!(
            "cell,{},{},{},{},{},{}\n",
            c.task,
            c.fold,
            c.seed,
            report.variant,
            c.accuracy.map(|a| a.to_string()).unwrap_or_default(),
            c.error.clone().unwrap_or_default()
        ));
    }
    for (task, mean) in &report.task_means {
        out.push_str(&format!("task_mean,{},,,{},{},\n", task, report.variant, mean));
    }
    out.push_str(&format!("avg,Avg,,,{},{},\n", report.variant, report.grand_avg));
    out
}

pub fn write_eval_report(dir: impl AsRef<Path>, stem: &str, report: &EvalReport) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, eval_report_csv(report))?;
    let json_path = dir.join(format!("{stem}.json"));
    write_json(&json_path, report)?;
    Ok(vec![csv_path, json_path])
}

/// Re-derive the aggregate rows from the cell rows of a report CSV and check
/// that the stored aggregates match exactly.
pub fn recheck_report_csv(text: &str) -> Result<(usize, f64)> {
    let mut cells: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut task_order: Vec<String> = Vec::new();
    let mut stored_means: BTreeMap<String, f64> = BTreeMap::new();
    let mut stored_avg: Option<f64> = None;
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 6 {
            return Err(Error::Schema {
                line: i + 1,
                detail: format!("expected at least 6 fields, got {}", fields.len()),
            });
        }
        match fields[0] {
            "cell" => {
                if !fields[5].is_empty() {
                    let acc: f64 = fields[5].parse().map_err(|_| Error::Schema {
                        line: i + 1,
                        detail: format!("bad accuracy {}", fields[5]),
                    })?;
                    if !cells.contains_key(fields[1]) {
                        task_order.push(fields[1].to_string());
                    }
                    cells.entry(fields[1].to_string()).or_default().push(acc);
                }
            }
            "task_mean" => {
                let mean: f64 = fields[5].parse().map_err(|_| Error::Schema {
                    line: i + 1,
                    detail: format!("bad mean {}", fields[5]),
                })?;
                stored_means.insert(fields[1].to_string(), mean);
            }
            "avg" => {
                stored_avg = Some(fields[5].parse().map_err(|_| Error::Schema {
                    line: i + 1,
                    detail: format!("bad avg {}", fields[5]),
                })?);
            }
            other => {
                return Err(Error::Schema {
                    line: i + 1,
                    detail: format!("unknown row kind {other}"),
                })
            }
        }
    }
    let mut means = Vec::new();
    for task in &task_order {
        let accs = &cells[task];
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        means.push(mean);
        let stored = stored_means
            .get(task)
            .ok_or_else(|| Error::Data(format!("no stored mean for task {task}")))?;
        if (stored - mean).abs() > 1e-12 {
            return Err(Error::Data(format!(
                "task {task}: stored mean {stored} vs recomputed {mean}"
            )));
        }
    }
    let avg = means.iter().sum::<f64>() / means.len() as f64;
    let stored = stored_avg.ok_or_else(|| Error::Data("no Avg row".into()))?;
    if (stored - avg).abs() > 1e-12 {
        return Err(Error::Data(format!("stored Avg {stored} vs recomputed {avg}")));
    }
    Ok((task_order.len(), avg))
}

pub fn projection_csv(export: &ProjectionExport) -> String {
    let mut out = String::from("id,branch,x,y\n");
    for r in &export.rows {
        out.push_str(&format!("{},{},{},{}\n", r.id, r.branch.as_str(), r.x, r.y));
    }
    out
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    let mut f = std::fs::File::create(path.as_ref())?;
    f.write_all(text.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Run manifest: the command, its resolved configuration, the seed, and a
/// SHA-256 per artifact. Rerunning the same command reproduces every hash.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub artifacts: BTreeMap<String, String>,
}

pub fn write_manifest(
    out_dir: impl AsRef<Path>,
    command: &str,
    config: BTreeMap<String, String>,
    seed: u64,
    artifacts: &[PathBuf],
) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    let mut hashed = BTreeMap::new();
    for p in artifacts {
        let bytes = std::fs::read(p)?;
        let rel = p
            .strip_prefix(out_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .to_string();
        hashed.insert(rel, sha256_hex(&bytes));
    }
    let manifest = Manifest {
        command: command.to_string(),
        config,
        seed,
        artifacts: hashed,
    };
    let path = out_dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::eval::{CellResult, EvalReport};
    use crate::data::TaskSpec;

    fn sample_report() -> EvalReport {
        let tasks = vec![
            TaskSpec { sources: vec!["a".into()], target: "b".into() },
            TaskSpec { sources: vec!["b".into()], target: "a".into() },
        ];
        let cells = vec![
            CellResult { task: "a->b".into(), fold: 0, seed: 1, accuracy: Some(0.75), error: None },
            CellResult { task: "a->b".into(), fold: 1, seed: 1, accuracy: Some(0.85), error: None },
            CellResult { task: "b->a".into(), fold: 0, seed: 1, accuracy: Some(0.6), error: None },
            CellResult { task: "b->a".into(), fold: 1, seed: 1, accuracy: None, error: Some("boom".into()) },
        ];
        EvalReport::assemble("full", "single", &tasks, cells)
    }

    #[test]
    fn report_csv_roundtrips_and_rechecks() {
        let report = sample_report();
        assert_eq!(report.failures, 1);
        let csv = eval_report_csv(&report);
        let (tasks, avg) = recheck_report_csv(&csv).unwrap();
        assert_eq!(tasks, 2);
        assert!((avg - report.grand_avg).abs() <= 1e-12);
        // failed cell keeps its note and drops accuracy
        assert!(csv.contains("cell,b->a,1,1,full,,boom"));
    }

    #[test]
    fn tampered_aggregate_is_caught() {
        let report = sample_report();
        let tampered: String = eval_report_csv(&report)
            .lines()
            .map(|l| {
                if l.starts_with("avg,") {
                    "avg,Avg,,,full,0.999,\n".to_string()
                } else {
                    format!("{l}\n")
                }
            })
            .collect();
        assert!(recheck_report_csv(&tampered).is_err());
    }

    #[test]
    fn manifest_hashes_artifacts() {
        let dir = std::env::temp_dir().join(format!("disentangle-manifest-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let art = dir.join("out.txt");
        std::fs::write(&art, "hello").unwrap();
        let mpath = write_manifest(&dir, "test", BTreeMap::new(), 7, &[art.clone()]).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&mpath).unwrap()).unwrap();
        assert_eq!(
            manifest["artifacts"]["out.txt"],
            sha256_hex(b"hello").as_str()
        );
        std::fs::remove_dir_all(&dir).ok();
    }
}
