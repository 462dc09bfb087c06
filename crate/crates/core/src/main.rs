//! Command-line driver: corpus generation, the two training steps,
//! evaluation, the experiment grid, ablations, projection export, gradient
//! checking, and the appendix-style independence verifier. Every command
//! writes its artifacts plus a manifest with content hashes into --out.

use clap::{Parser, Subcommand};
use disentangle::data::{self, Corpus, PreparedCorpus, ShortcutConfig, TaskMode};
use disentangle::harness::config as kvcfg;
use disentangle::harness::{benchmark, eval, gradsuite, projection, report, verify};
use disentangle::student::{StudentParams, TrainConfig, Variant};
use disentangle::{Error, Result};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "disentangle", version, about = "Robust/unrobust feature disentanglement for cross-domain text classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic shortcut corpora as JSONL files.
    SynthGen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of domains (2 = the source/target pair with the flipped
        /// shortcut; more = mutually hostile domain set).
        #[arg(long, default_value_t = 2)]
        domains: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Steps 1 + 2 for one task and fold: teacher pipeline on the source
    /// train split, student training, checkpoints and loss log.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Source-domain JSONL file(s); repeat for multi-source.
        #[arg(long, required = true)]
        source: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Accuracy of a student checkpoint on a labeled JSONL corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// The full task grid for one variant.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory of <domain>.jsonl files.
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = "single")]
        mode: String,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Comma-separated seed list for the grid.
        #[arg(long, default_value = "1")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// The experiment grid for every variant plus vanilla, with a summary.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value = "single")]
        mode: String,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, default_value = "1")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the synthetic shortcut benchmark (vanilla vs variants).
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "1,2,3,4,5")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// 2D PCA export of the mu/sigma latents of a checkpoint.
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference verification of every loss gradient.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        configs: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Helmert orthogonality plus the mean/variance independence checks.
    VerifyAppendix {
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 200_000)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the aggregates of an evaluation-report CSV and verify them.
    Report {
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let msg = e.to_string();
                eprintln!("error: {}", msg.lines().next().unwrap_or("bad arguments"));
                std::process::exit(2);
            }
            // --help / --version
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_kv(config: &Option<PathBuf>) -> Result<BTreeMap<String, String>> {
    match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            let map = kvcfg::parse_kv(&text)?;
            kvcfg::check_known_keys(&map)?;
            Ok(map)
        }
        None => Ok(BTreeMap::new()),
    }
}

fn resolve_train_config(
    config: &Option<PathBuf>,
    seed: Option<u64>,
    variant: Option<&String>,
) -> Result<(TrainConfig, BTreeMap<String, String>)> {
    let map = load_kv(config)?;
    let mut cfg = TrainConfig::default();
    kvcfg::apply_train(&map, &mut cfg)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(v) = variant {
        cfg.variant = v.parse()?;
    }
    cfg.validate()?;
    let echo = kvcfg::train_to_map(&cfg);
    Ok((cfg, echo))
}

fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("bad seed {s}")))
        })
        .collect()
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn load_domains(data_dir: &Path) -> Result<Vec<(String, Corpus)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(data_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("no .jsonl files in {}", data_dir.display())));
    }
    files
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .ok_or_else(|| Error::Data(format!("bad file name {}", p.display())))?;
            Ok((name, data::load_jsonl(&p)?))
        })
        .collect()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::SynthGen { config, out, domains, seed } => {
            ensure_out(&out)?;
            let map = load_kv(&config)?;
            let mut scfg = ShortcutConfig::default();
            kvcfg::apply_shortcut(&map, &mut scfg)?;
            if let Some(s) = seed {
                scfg.seed = s;
            }
            let corpora: Vec<(String, Corpus)> = if domains <= 2 {
                let (src, tgt) = data::synth_shortcut_corpus(&scfg)?;
                vec![("source".into(), src), ("target".into(), tgt)]
            } else {
                let names: Vec<String> = (1..=domains).map(|i| format!("d{i}")).collect();
                let set = data::synth_domain_set(&scfg, &names)?;
                names.into_iter().zip(set).collect()
            };
            let mut artifacts = Vec::new();
            for (name, corpus) in &corpora {
                let path = out.join(format!("{name}.jsonl"));
                data::write_jsonl(corpus, &path)?;
                println!("wrote {} ({} examples)", path.display(), corpus.len());
                artifacts.push(path);
            }
            report::write_manifest(&out, "synth-gen", kvcfg::shortcut_to_map(&scfg), scfg.seed, &artifacts)?;
            Ok(())
        }
        Command::Train { config, source, fold, folds, out, seed, variant } => {
            ensure_out(&out)?;
            let (cfg, cfg_map) = resolve_train_config(&config, seed, variant.as_ref())?;
            let corpora: Vec<Corpus> = source
                .iter()
                .map(data::load_jsonl)
                .collect::<Result<_>>()?;
            let refs: Vec<&Corpus> = corpora.iter().collect();
            let combined = Corpus::concat(&refs)?;
            let domains = combined.domains();
            let num_classes = combined.num_classes();
            let prep = PreparedCorpus::prepare(combined, cfg.feature_dim, cfg.ngram_max, num_classes)?;
            let plan = data::make_folds(
                &prep.corpus,
                folds,
                1.0 / folds as f64,
                disentangle::rng::derive_seed(cfg.seed, &["folds"]),
            )?;
            let (train, dev) = eval::fold_split(&prep, &plan, &domains, fold)?;
            let run = eval::run_task(&cfg, &train, &dev)?;

            let mut artifacts = Vec::new();
            if let Some(teacher) = &run.teacher {
                let tpath = out.join("teacher.tchr1");
                teacher.save(&tpath)?;
                artifacts.push(tpath);
            }
            let spath = out.join("student.stdt1");
            run.outcome.best_params.save(&spath)?;
            artifacts.push(spath);
            let lpath = out.join("loss_log.csv");
            report::write_loss_log(&lpath, &run.outcome.log)?;
            artifacts.push(lpath);
            println!(
                "trained fold {fold}: best dev acc {:.4} at epoch {}",
                run.outcome.best_dev_acc, run.outcome.best_epoch
            );
            report::write_manifest(&out, "train", cfg_map, cfg.seed, &artifacts)?;
            Ok(())
        }
        Command::Eval { checkpoint, data: data_path, out } => {
            ensure_out(&out)?;
            let params = StudentParams::load(&checkpoint)?;
            let corpus = data::load_jsonl(&data_path)?;
            let prep = PreparedCorpus::prepare(
                corpus,
                params.feature_dim(),
                params.ngram_max,
                params.num_classes,
            )?;
            let acc = eval::evaluate_task(&params, &prep.all())?;
            println!("accuracy {:.4} on {} examples", acc, prep.len());
            let epath = out.join("eval.json");
            report::write_json(
                &epath,
                &serde_json::json!({
                    "checkpoint": checkpoint.display().to_string(),
                    "data": data_path.display().to_string(),
                    "examples": prep.len(),
                    "accuracy": acc,
                }),
            )?;
            report::write_manifest(&out, "eval", BTreeMap::new(), 0, &[epath])?;
            Ok(())
        }
        Command::Experiment { config, data_dir, mode, variant, folds, seeds, out, seed } => {
            ensure_out(&out)?;
            let (cfg, cfg_map) = resolve_train_config(&config, seed, variant.as_ref())?;
            let domains = load_domains(&data_dir)?;
            let spec = eval::ExperimentSpec {
                mode: mode.parse::<TaskMode>()?,
                folds,
                seeds: parse_seed_list(&seeds)?,
                cfg,
            };
            let rep = eval::run_experiment(&domains, &spec)?;
            let artifacts = report::write_eval_report(&out, "eval_report", &rep)?;
            println!(
                "{} tasks, grand avg {:.4}, {} failed cells",
                rep.task_means.len(),
                rep.grand_avg,
                rep.failures
            );
            report::write_manifest(&out, "experiment", cfg_map, spec.cfg.seed, &artifacts)?;
            Ok(())
        }
        Command::Ablate { config, data_dir, mode, folds, seeds, out, seed } => {
            ensure_out(&out)?;
            let (base_cfg, cfg_map) = resolve_train_config(&config, seed, None)?;
            let domains = load_domains(&data_dir)?;
            let seed_list = parse_seed_list(&seeds)?;
            let task_mode = mode.parse::<TaskMode>()?;
            let mut artifacts = Vec::new();
            let mut summary = Vec::new();
            // vanilla = both auxiliary weights at zero
            let mut runs: Vec<(String, TrainConfig)> = vec![{
                let mut c = base_cfg.clone();
                c.lambda1 = 0.0;
                c.lambda2 = 0.0;
                ("vanilla".to_string(), c)
            }];
            for v in Variant::all() {
                let mut c = base_cfg.clone();
                c.variant = v;
                runs.push((v.as_str().to_string(), c));
            }
            for (label, cfg) in runs {
                let spec = eval::ExperimentSpec {
                    mode: task_mode,
                    folds,
                    seeds: seed_list.clone(),
                    cfg,
                };
                let rep = eval::run_experiment(&domains, &spec)?;
                println!("{label}: grand avg {:.4} ({} failures)", rep.grand_avg, rep.failures);
                summary.push(serde_json::json!({
                    "label": label,
                    "grand_avg": rep.grand_avg,
                    "failures": rep.failures,
                }));
                artifacts.extend(report::write_eval_report(&out, &format!("eval_report_{label}"), &rep)?);
            }
            let spath = out.join("ablation_summary.json");
            report::write_json(&spath, &summary)?;
            artifacts.push(spath);
            report::write_manifest(&out, "ablate", cfg_map, base_cfg.seed, &artifacts)?;
            Ok(())
        }
        Command::Bench { config, seeds, out } => {
            ensure_out(&out)?;
            let map = load_kv(&config)?;
            let mut bc = benchmark::BenchmarkConfig::frozen_default();
            kvcfg::apply_shortcut(&map, &mut bc.shortcut)?;
            kvcfg::apply_train(&map, &mut bc.train)?;
            bc.seeds = parse_seed_list(&seeds)?;
            let rep = benchmark::shortcut_benchmark(&bc)?;
            print!("{}", rep.render_text());
            let tpath = out.join("benchmark.txt");
            std::fs::write(&tpath, rep.render_text())?;
            let jpath = out.join("benchmark.json");
            report::write_json(&jpath, &rep)?;
            let mut cfg_map = kvcfg::train_to_map(&bc.train);
            cfg_map.extend(kvcfg::shortcut_to_map(&bc.shortcut));
            report::write_manifest(&out, "bench", cfg_map, bc.train.seed, &[tpath, jpath])?;
            Ok(())
        }
        Command::Project { checkpoint, data: data_path, out } => {
            ensure_out(&out)?;
            let params = StudentParams::load(&checkpoint)?;
            let corpus = data::load_jsonl(&data_path)?;
            let prep = PreparedCorpus::prepare(
                corpus,
                params.feature_dim(),
                params.ngram_max,
                params.num_classes,
            )?;
            let export = projection::project_features(&params, &prep.all())?;
            let ppath = out.join("projection.csv");
            std::fs::write(&ppath, report::projection_csv(&export))?;
            println!(
                "projected {} rows, centroid distance {:.4}",
                export.rows.len(),
                export.branch_centroid_distance()
            );
            report::write_manifest(&out, "project", BTreeMap::new(), 0, &[ppath])?;
            Ok(())
        }
        Command::Gradcheck { configs, seed, out } => {
            ensure_out(&out)?;
            let rep = gradsuite::gradient_check_suite(configs, seed)?;
            print!("{}", rep.render_text());
            let gpath = out.join("gradcheck.txt");
            std::fs::write(&gpath, rep.render_text())?;
            report::write_manifest(&out, "gradcheck", BTreeMap::new(), seed, &[gpath])?;
            if !rep.passed() {
                return Err(Error::Data(format!(
                    "gradient check failed: max rel err {:.3e}",
                    rep.max_rel_err
                )));
            }
            Ok(())
        }
        Command::VerifyAppendix { n, trials, seed, out } => {
            ensure_out(&out)?;
            let rep = verify::verify_independence(n, trials, seed)?;
            print!("{}", rep.render_text());
            let vpath = out.join("verify_appendix.txt");
            std::fs::write(&vpath, rep.render_text())?;
            let jpath = out.join("verify_appendix.json");
            report::write_json(&jpath, &rep)?;
            let mut cfg = BTreeMap::new();
            cfg.insert("n".into(), n.to_string());
            cfg.insert("trials".into(), trials.to_string());
            report::write_manifest(&out, "verify-appendix", cfg, seed, &[vpath, jpath])?;
            Ok(())
        }
        Command::Report { cells, out } => {
            ensure_out(&out)?;
            let text = std::fs::read_to_string(&cells)?;
            let (tasks, avg) = report::recheck_report_csv(&text)?;
            println!("report verified: {tasks} tasks, Avg {avg:.4}");
            let spath = out.join("report_summary.json");
            report::write_json(
                &spath,
                &serde_json::json!({
                    "source": cells.display().to_string(),
                    "tasks": tasks,
                    "avg": avg,
                }),
            )?;
            report::write_manifest(&out, "report", BTreeMap::new(), 0, &[spath])?;
            Ok(())
        }
    }
}
