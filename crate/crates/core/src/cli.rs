//! Command-line front end. Machine-readable JSON goes to stdout, diagnostics
//! to stderr. Exit codes: 0 success, 1 usage error, 2 data or model error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::eval::{generate_synthetic_kb, loo_evaluate, OracleConfig};
use crate::kb::{InsertOutcome, KnowledgeBase, Metric, PerformanceRecord};
use crate::meta::extract_meta_features;
use crate::pipeline::{encode_pipeline, featurize_sequence, PipelineGraph};
use crate::ranker::{build_training_groups, train, RankConfig, RankModel};
use crate::tabular::{load_dataset, Task};

pub const KB_ENV: &str = "RANKML_KB";

#[derive(Parser, Debug)]
#[command(name = "pipeline-ranker", version, about = "Rank pipeline topologies for a tabular dataset without running them")]
struct Cli {
    /// Seed for training, evaluation and synthetic generation
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log progress to stderr
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the meta-feature vector of a CSV dataset
    ExtractMeta {
        file: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        task: Task,
    },
    /// Print the canonical token sequence of a pipeline
    Encode {
        pipeline: PathBuf,
        /// Pad to this many slots
        #[arg(long, required_unless_present = "model", conflicts_with = "model")]
        slots: Option<usize>,
        /// Use the slot count and vocabulary of a trained model and also print features
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Knowledge-base maintenance
    Kb {
        #[command(subcommand)]
        action: KbCommand,
    },
    /// Train a ranking model on one (task, metric) slice of a knowledge base
    Train {
        #[command(flatten)]
        kb: KbArg,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trees: Option<u64>,
    },
    /// Rank candidate pipelines for a dataset
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        /// Task of the dataset; defaults to the model's
        #[arg(long)]
        task: Option<Task>,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        /// JSON array of candidate pipelines; defaults to every topology in the knowledge base
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// Leave-one-dataset-out evaluation
    Evaluate {
        #[command(flatten)]
        kb: KbArg,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        metric: Metric,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10", value_parser = clap::value_parser!(u64).range(1..))]
        k: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trees: Option<u64>,
    },
    /// Write a synthetic knowledge base with a known score function
    Synth {
        #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(2..))]
        datasets: u64,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..))]
        pipelines: u64,
        #[arg(long, default_value_t = 0.05, value_parser = non_negative)]
        noise: f64,
        #[arg(long, default_value_t = Task::Classification)]
        task: Task,
        /// Drop meta-feature couplings and primitive-pair terms
        #[arg(long)]
        no_interactions: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
enum KbCommand {
    /// Merge JSON-lines record files into a knowledge base
    Import {
        #[command(flatten)]
        kb: KbArg,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Add one observation, extracting meta-features from the dataset
    Add {
        #[command(flatten)]
        kb: KbArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        task: Task,
        #[arg(long)]
        metric: Metric,
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long)]
        score: f64,
        /// Defaults to the data file's stem
        #[arg(long)]
        dataset_id: Option<String>,
    },
    /// Summarize a knowledge base
    Stats {
        #[command(flatten)]
        kb: KbArg,
    },
}

#[derive(Args, Debug)]
struct KbArg {
    /// Knowledge-base file; falls back to $RANKML_KB
    #[arg(long = "kb")]
    path: Option<PathBuf>,
}

impl KbArg {
    fn resolve(&self) -> Result<PathBuf, Failure> {
        resolve_kb(self.path.as_deref())
    }
}

fn resolve_kb(path: Option<&Path>) -> Result<PathBuf, Failure> {
    match path {
        Some(p) => Ok(p.to_path_buf()),
        None => std::env::var_os(KB_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| Failure::Usage(format!("no knowledge base given: pass --kb or set {KB_ENV}"))),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err("must be a finite non-negative number".into())
    }
}

enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    fn data(e: impl std::fmt::Display) -> Failure {
        Failure::Data(e.to_string())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).target(env_logger::Target::Stderr).try_init();

    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn emit(stdout: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Failure::data)?;
    writeln!(stdout, "{text}").map_err(Failure::data)
}

fn load_kb_or_empty(path: &Path) -> Result<KnowledgeBase, Failure> {
    if path.exists() {
        KnowledgeBase::load(path).map_err(Failure::data)
    } else {
        Ok(KnowledgeBase::new())
    }
}

fn read_pipeline(path: &Path) -> Result<PipelineGraph, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let g = PipelineGraph::from_json(&text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    g.validate().map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(g)
}

fn rank_config(seed: Option<u64>, trees: Option<u64>) -> RankConfig {
    let mut config = RankConfig::with_seed(seed.unwrap_or(0));
    if let Some(t) = trees {
        config.n_trees = t as usize;
    }
    config
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    let seed = cli.seed;
    match cli.command {
        Command::ExtractMeta { file, target, task } => {
            let d = load_dataset(&file, &target, task).map_err(Failure::data)?;
            let mf = extract_meta_features(&d);
            emit(out, &json!({ "schema_version": mf.schema_version, "values": mf.values.to_vec() }))
        }
        Command::Encode { pipeline, slots, model } => {
            let g = read_pipeline(&pipeline)?;
            let model = model.map(|m| RankModel::load(&m).map_err(Failure::data)).transpose()?;
            let slots = model.as_ref().map_or_else(|| slots.expect("clap requires one"), RankModel::slots);
            let seq = encode_pipeline(&g, slots).map_err(Failure::data)?;
            let names = g.emitted_names().map_err(Failure::data)?;
            let tokens: Vec<String> = seq.tokens.iter().map(ToString::to_string).collect();
            let mut value = json!({ "names": names, "tokens": tokens });
            if let Some(m) = &model {
                value["features"] = json!(featurize_sequence(&seq, &m.featurizer.vocabulary));
            }
            emit(out, &value)
        }
        Command::Kb { action } => run_kb(action, out),
        Command::Train { kb, task, metric, out: model_path, trees } => {
            check_metric(task, metric)?;
            let kb = KnowledgeBase::load(&kb.resolve()?).map_err(Failure::data)?;
            let set = build_training_groups(&kb, task, metric).map_err(Failure::data)?;
            let config = rank_config(seed, trees);
            log::info!("training on {} groups, {} features", set.groups.len(), set.width());
            let model = train(&set, &config).map_err(Failure::data)?;
            model.save(&model_path).map_err(Failure::data)?;
            emit(
                out,
                &json!({
                    "model": model_path.display().to_string(),
                    "groups": set.groups.len(),
                    "rows": set.groups.iter().map(|g| g.labels.len()).sum::<usize>(),
                    "width": model.width(),
                    "trees": model.booster.trees.len(),
                }),
            )
        }
        Command::Rank { model, data, target, task, k, candidates, kb } => {
            let model = RankModel::load(&model).map_err(Failure::data)?;
            let task = task.unwrap_or(model.task);
            if task != model.task {
                return Err(Failure::Data(format!(
                    "task mismatch: model was trained for {} but {task} was requested",
                    model.task
                )));
            }
            let candidates = match candidates {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(&path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
                    serde_json::from_str::<Vec<PipelineGraph>>(&text)
                        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?
                }
                None => {
                    let path = resolve_kb(kb.as_deref())?;
                    KnowledgeBase::load(&path).map_err(Failure::data)?.candidates(model.task, model.metric)
                }
            };
            let d = load_dataset(&data, &target, task).map_err(Failure::data)?;
            let mf = extract_meta_features(&d);
            let outcome = model.rank_candidates(&mf, &candidates).map_err(Failure::data)?;
            if !outcome.skipped.is_empty() {
                log::warn!("{} candidates could not be encoded and were skipped", outcome.skipped.len());
            }
            let top: Vec<_> = outcome.ranked.iter().take(k as usize).collect();
            emit(out, &top)
        }
        Command::Evaluate { kb, task, metric, k, out: report_path, trees } => {
            check_metric(task, metric)?;
            let kb = KnowledgeBase::load(&kb.resolve()?).map_err(Failure::data)?;
            let k_list: Vec<usize> = k.iter().map(|&k| k as usize).collect();
            let report = loo_evaluate(&kb, task, metric, &rank_config(seed, trees), &k_list).map_err(Failure::data)?;
            let text = serde_json::to_string_pretty(&report).map_err(Failure::data)?;
            std::fs::write(&report_path, text).map_err(|e| Failure::Data(format!("{}: {e}", report_path.display())))?;
            emit(out, &report.aggregate)
        }
        Command::Synth { datasets, pipelines, noise, task, no_interactions, out: kb_path } => {
            let cfg = OracleConfig {
                n_datasets: datasets as usize,
                n_pipelines: pipelines as usize,
                noise_std: noise,
                seed: seed.unwrap_or(1),
                task,
                interactions: !no_interactions,
            };
            let s = generate_synthetic_kb(&cfg).map_err(Failure::data)?;
            s.kb.save(&kb_path).map_err(Failure::data)?;
            emit(out, &s.kb.stats())
        }
    }
}

fn check_metric(task: Task, metric: Metric) -> Result<(), Failure> {
    if metric.task() != task {
        return Err(Failure::Usage(format!("metric {metric} does not apply to {task} tasks")));
    }
    Ok(())
}

fn run_kb(action: KbCommand, out: &mut dyn Write) -> Result<(), Failure> {
    match action {
        KbCommand::Import { kb, inputs } => {
            let path = kb.resolve()?;
            let mut base = load_kb_or_empty(&path)?;
            let (mut added, mut replaced, mut kept) = (0usize, 0usize, 0usize);
            for input in &inputs {
                let incoming = KnowledgeBase::load(input).map_err(Failure::data)?;
                for r in incoming.records() {
                    match base.insert(r.clone()).map_err(Failure::data)? {
                        InsertOutcome::Added => added += 1,
                        InsertOutcome::Replaced => replaced += 1,
                        InsertOutcome::KeptIncumbent => kept += 1,
                    }
                }
            }
            base.save(&path).map_err(Failure::data)?;
            emit(out, &json!({ "added": added, "replaced": replaced, "kept": kept, "stats": base.stats() }))
        }
        KbCommand::Add { kb, data, target, task, metric, pipeline, score, dataset_id } => {
            check_metric(task, metric)?;
            let path = kb.resolve()?;
            let mut base = load_kb_or_empty(&path)?;
            let d = load_dataset(&data, &target, task).map_err(Failure::data)?;
            let record = PerformanceRecord {
                dataset_id: dataset_id.unwrap_or_else(|| d.name().to_owned()),
                task,
                metric,
                pipeline: read_pipeline(&pipeline)?,
                score,
                meta_features: extract_meta_features(&d),
            };
            let outcome = base.insert(record).map_err(Failure::data)?;
            base.save(&path).map_err(Failure::data)?;
            let outcome = match outcome {
                InsertOutcome::Added => "added",
                InsertOutcome::Replaced => "replaced",
                InsertOutcome::KeptIncumbent => "kept",
            };
            emit(out, &json!({ "outcome": outcome, "stats": base.stats() }))
        }
        KbCommand::Stats { kb } => {
            let base = KnowledgeBase::load(&kb.resolve()?).map_err(Failure::data)?;
            emit(out, &base.stats())
        }
    }
}
