//! Command implementations behind the CLI.
//!
//! A training run owns one directory holding
//!
//! - `metrics.jsonl`: one JSON object per epoch,
//!   `{"epoch":…,"train_error":…,"val_error":…|null,"mean_loss":…}`
//! - `checkpoint.bin`: weights and momentum after the latest epoch
//! - `summary.json`: written last, marks the run complete.
//!
//! An interrupted run resumes from its checkpoint; epochs are keyed into the
//! random streams, so a resumed run matches an uninterrupted one byte for byte.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use qnn::checkpoint::Checkpoint;
use qnn::data::{self, RawDataset};
use qnn::inference::{evaluate, shots_curve};
use qnn::training::{training_error, Trainer};
use qnn::{Dataset, EpochRecord, Hyperparams, InferencePolicy, QuantumConfig};
use serde::{Deserialize, Serialize};

use crate::config::{DataPaths, RunConfig};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "a,g,seed,final_val_error,final_train_error,best_val_error,wall_time_s";

/// Encoded training and validation subsets.
pub struct Prepared {
    pub train: Dataset,
    pub val: Dataset,
}

fn load_raw(images: &Path, labels: &Path) -> Result<RawDataset> {
    RawDataset::load(images, labels).with_context(|| format!("loading {} / {}", images.display(), labels.display()))
}

/// Fixed subsets of `train_size` and `val_size` samples drawn with the data seed.
pub fn prepare_data(paths: &DataPaths, hyper: &Hyperparams) -> Result<Prepared> {
    let train = load_raw(&paths.train_images, &paths.train_labels)?;
    let val = load_raw(&paths.val_images, &paths.val_labels)?;
    let train = train.subset(hyper.train_size, paths.subset_seed).context("training subset")?;
    let val = val.subset(hyper.val_size, paths.subset_seed).context("validation subset")?;
    Ok(Prepared { train: train.encode(), val: val.encode() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub a: f64,
    pub g: f64,
    pub seed: u64,
    pub epochs: usize,
    pub final_val_error: Option<f64>,
    pub final_train_error: Option<f64>,
    pub best_val_error: Option<f64>,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(SUMMARY_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochRecord>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(file)
        .lines()
        .map(|line| Ok(serde_json::from_str(&line?)?))
        .collect::<Result<Vec<_>>>()
        .with_context(|| format!("parsing {}", path.display()))
}

fn write_metrics(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Train one model into `dir`, resuming from a checkpoint there if one exists.
/// Returns the stored summary untouched when the run is already complete.
pub fn run_training(hyper: &Hyperparams, policy: &InferencePolicy, data: &Prepared, dir: &Path) -> Result<RunSummary> {
    if let Some(summary) = RunSummary::load(dir)? {
        return Ok(summary);
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let metrics_path = dir.join(METRICS_FILE);
    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    let started = Instant::now();

    let mut records = Vec::new();
    let trainer = if checkpoint_path.exists() {
        let state = Checkpoint::<f64>::load(&checkpoint_path)
            .with_context(|| format!("loading {}", checkpoint_path.display()))?
            .into_state();
        records = read_metrics(&metrics_path).unwrap_or_default();
        records.truncate(state.epoch);
        if records.len() != state.epoch {
            anyhow::bail!("{} has fewer records than checkpoint epoch {}", metrics_path.display(), state.epoch);
        }
        Trainer::resume(hyper.clone(), *policy, &data.train, &data.val, state)?
    } else {
        Trainer::new(hyper.clone(), *policy, &data.train, &data.val)?
    };
    write_metrics(&metrics_path, &records)?;
    if hyper.epochs == 0 {
        Checkpoint::from_state(trainer.state()).save(&checkpoint_path)?;
    }

    let mut log = OpenOptions::new().append(true).open(&metrics_path)?;
    let run = trainer.run(|record, state| {
        writeln!(log, "{}", serde_json::to_string(record).map_err(std::io::Error::other)?)?;
        log.flush()?;
        Checkpoint::from_state(state).save(&checkpoint_path)?;
        Ok(())
    })?;
    records.extend(run.records);

    let summary = RunSummary {
        a: hyper.quantum.a,
        g: hyper.quantum.g,
        seed: hyper.seed,
        epochs: hyper.epochs,
        final_val_error: records.last().and_then(|r| r.val_error),
        final_train_error: records.last().map(|r| r.train_error),
        best_val_error: records.iter().filter_map(|r| r.val_error).reduce(f64::min),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

/// `train`: one model into `config.out_dir`.
pub fn cmd_train(config: &RunConfig) -> Result<RunSummary> {
    let data = prepare_data(&config.data, &config.hyper)?;
    fs::create_dir_all(&config.out_dir)?;
    fs::write(config.out_dir.join("config.toml"), config.to_toml()?)?;
    run_training(&config.hyper, &config.inference, &data, &config.out_dir)
}

pub fn cell_dir(out_dir: &Path, a: f64, g: f64, seed: u64) -> PathBuf {
    out_dir.join("cells").join(format!("a{a:.6}_g{g:.6}_seed{seed}"))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn sweep_csv(rows: &[RunSummary]) -> String {
    let mut rows: Vec<&RunSummary> = rows.iter().collect();
    rows.sort_by(|x, y| x.a.total_cmp(&y.a).then(x.g.total_cmp(&y.g)).then(x.seed.cmp(&y.seed)));
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.a,
            r.g,
            r.seed,
            fmt_opt(r.final_val_error),
            fmt_opt(r.final_train_error),
            fmt_opt(r.best_val_error),
            r.wall_time_s
        ));
    }
    out
}

/// `sweep`: one model per `(a, g, seed)`, all on the same data subset.
/// Completed cells are skipped, and the CSV is only rewritten when its
/// content changes.
pub fn cmd_sweep(config: &RunConfig) -> Result<Vec<RunSummary>> {
    let data = prepare_data(&config.data, &config.hyper)?;
    fs::create_dir_all(&config.out_dir)?;
    let mut rows = Vec::new();
    for &a in &config.sweep.a {
        for &g in &config.sweep.g {
            for &seed in &config.sweep.seeds {
                let hyper = Hyperparams { quantum: QuantumConfig::new(a, g)?, seed, ..config.hyper.clone() };
                let dir = cell_dir(&config.out_dir, a, g, seed);
                let summary = run_training(&hyper, &config.inference, &data, &dir)
                    .with_context(|| format!("sweep cell a={a} g={g} seed={seed}"))?;
                rows.push(summary);
            }
        }
    }
    let csv = sweep_csv(&rows);
    let path = config.out_dir.join(SWEEP_CSV);
    if fs::read_to_string(&path).ok().as_deref() != Some(csv.as_str()) {
        fs::write(&path, csv)?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub deterministic_error: f64,
    pub policy_error: f64,
    pub shots_curve: Option<Vec<f64>>,
}

/// `eval`: deterministic and policy error of a checkpoint on the validation
/// subset, optionally the error for 1..=`curve_shots` shots.
pub fn cmd_eval(config: &RunConfig, checkpoint: &Path, curve_shots: Option<usize>) -> Result<EvalReport> {
    let params = Checkpoint::<f64>::load(checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?
        .params;
    let val = load_raw(&config.data.val_images, &config.data.val_labels)?
        .subset(config.hyper.val_size, config.data.subset_seed)?
        .encode::<f64>();
    let cfg = config.hyper.quantum;
    let deterministic_error = training_error(&params, &val)?;
    let policy_error = evaluate(&params, &val, &config.inference, &cfg)?;
    let curve = curve_shots.map(|n| shots_curve(&params, &val, &cfg, n, config.inference.seed)).transpose()?;
    if let Some(curve) = &curve {
        fs::create_dir_all(&config.out_dir)?;
        let mut text = String::from("shots,val_error\n");
        for (i, e) in curve.iter().enumerate() {
            text.push_str(&format!("{},{e}\n", i + 1));
        }
        fs::write(config.out_dir.join("shots_curve.csv"), text)?;
    }
    Ok(EvalReport { deterministic_error, policy_error, shots_curve: curve })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdxCheck {
    pub path: PathBuf,
    pub kind: &'static str,
    pub count: usize,
}

/// `fetch-check`: validate magic words and sizes of the configured IDX files.
pub fn cmd_fetch_check(paths: &DataPaths) -> Result<Vec<IdxCheck>> {
    let mut out = Vec::new();
    for (path, is_images) in [
        (&paths.train_images, true),
        (&paths.train_labels, false),
        (&paths.val_images, true),
        (&paths.val_labels, false),
    ] {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let (kind, count) = if is_images {
            ("images", data::parse_idx_images(&bytes).with_context(|| path.display().to_string())?.count)
        } else {
            ("labels", data::parse_idx_labels(&bytes).with_context(|| path.display().to_string())?.len())
        };
        out.push(IdxCheck { path: path.clone(), kind, count });
    }
    Ok(out)
}
