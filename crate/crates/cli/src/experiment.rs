//! Running arms, writing artifacts and comparing finished runs.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ngcl_core::data::{load_idx, synth_blobs, Dataset};
use ngcl_core::harness::{build_task_stream, run_stream, TaskStream, TrainConfig};
use ngcl_core::metrics::{
    accuracy_series, emit_comparison, emit_csv, first_task_series, read_csv, train_time_series, write_series,
    Comparison, MetricsRecord,
};
use ngcl_core::optimizer::{OptimizerConfig, OptimizerKind};
use ngcl_core::regularizer::RegStrength;

use crate::config::{parse_config, parse_config_text, render_snapshot, DatasetSpec, ExperimentConfig};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.txt";
pub const COMPARISON_FILE: &str = "comparison.txt";

/// Train and test splits for the configured dataset.
pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    match spec {
        DatasetSpec::Synth {
            classes,
            per_class,
            dim,
            spread,
        } => Ok(synth_blobs(*classes, *per_class, *dim, *spread, seed)?.split_train_test()),
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test,
        } => {
            let train =
                load_idx(train_images, train_labels).with_context(|| format!("loading {}", train_images.display()))?;
            match test {
                None => Ok(train.split_train_test()),
                Some((images, labels)) => {
                    let test = load_idx(images, labels).with_context(|| format!("loading {}", images.display()))?;
                    if test.feature_dim != train.feature_dim {
                        bail!(
                            "train images have {} pixels, test images {}",
                            train.feature_dim,
                            test.feature_dim
                        );
                    }
                    let classes = train.num_classes.max(test.num_classes);
                    Ok((
                        Dataset::new(train.name, train.examples, classes, train.feature_dim)?,
                        Dataset::new(test.name, test.examples, classes, test.feature_dim)?,
                    ))
                }
            }
        }
    }
}

/// The task stream and input width for a config.
pub fn build_stream(cfg: &ExperimentConfig) -> Result<(TaskStream, usize)> {
    let (train, test) = load_dataset(&cfg.dataset, cfg.seed)?;
    let stream = build_task_stream(&train, &test, cfg.classes_per_task, cfg.seed, None)?;
    Ok((stream, train.feature_dim))
}

pub fn train_config(cfg: &ExperimentConfig, kind: OptimizerKind) -> Result<TrainConfig> {
    let optimizer = OptimizerConfig::new(kind, cfg.eta, cfg.damping)?;
    let mut tc = TrainConfig::new(optimizer, RegStrength::new(cfg.epsilon)?, cfg.seed);
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.fisher_max_samples = cfg.fisher_max_samples;
    tc.validate()?;
    Ok(tc)
}

/// Trains one arm over the stream and returns its records. Nothing is written.
pub fn run_arm(cfg: &ExperimentConfig, stream: &TaskStream, input_dim: usize) -> Result<Vec<MetricsRecord>> {
    let tc = train_config(cfg, cfg.optimizer)?;
    let run_id = format!("{}-seed{}", cfg.optimizer, cfg.seed);
    let state = run_stream(
        stream,
        input_dim,
        &cfg.hidden_dims,
        cfg.seed,
        &tc,
        &run_id,
        &cfg.snapshot(),
    )?;
    Ok(state.metrics)
}

/// Writes `metrics.csv`, `config.txt` and the series files into `dir`.
pub fn write_artifacts(dir: &Path, records: &[MetricsRecord]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let file = |name: &str| -> Result<BufWriter<File>> {
        let path = dir.join(name);
        Ok(BufWriter::new(
            File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        ))
    };
    emit_csv(records, file(METRICS_FILE)?)?;
    if let Some(first) = records.first() {
        fs::write(dir.join(CONFIG_FILE), render_snapshot(&first.config_snapshot))?;
    }
    write_series(
        "mean accuracy over seen tasks",
        &accuracy_series(records),
        file("accuracy.dat")?,
    )?;
    write_series(
        "accuracy on task 0",
        &first_task_series(records),
        file("first_task.dat")?,
    )?;
    write_series(
        "training seconds per task",
        &train_time_series(records),
        file("train_time.dat")?,
    )?;
    Ok(())
}

/// Reads a run directory back, attaching its `config.txt` as the snapshot.
pub fn load_run(dir: &Path) -> Result<Vec<MetricsRecord>> {
    let csv_path = dir.join(METRICS_FILE);
    let csv = File::open(&csv_path).with_context(|| format!("opening {}", csv_path.display()))?;
    let mut records = read_csv(BufReader::new(csv)).with_context(|| format!("reading {}", csv_path.display()))?;
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).with_context(|| format!("reading {}", cfg_path.display()))?;
    let pairs = parse_config_text(&text)?;
    let snapshot = parse_config(&pairs, &[])?.snapshot();
    for rec in &mut records {
        rec.config_snapshot = snapshot.clone();
    }
    Ok(records)
}

pub fn compare_runs(baseline_dir: &Path, candidate_dir: &Path) -> Result<Comparison> {
    let baseline = load_run(baseline_dir)?;
    let candidate = load_run(candidate_dir)?;
    Ok(emit_comparison(&baseline, &candidate)?)
}

/// Runs every arm in `arms` on the same stream, each into `out_dir/<arm>`,
/// then compares the second arm against the first.
pub fn run_comparison(cfg: &ExperimentConfig, arms: [OptimizerKind; 2]) -> Result<(Vec<ArmRun>, Comparison)> {
    if arms[0] == arms[1] {
        bail!("--compare needs two different optimizers");
    }
    let (stream, input_dim) = build_stream(cfg)?;
    let mut runs = Vec::new();
    for kind in arms {
        let arm_cfg = ExperimentConfig {
            optimizer: kind,
            ..cfg.clone()
        };
        let dir = cfg.out_dir.join(kind.as_str());
        let records = run_arm(&arm_cfg, &stream, input_dim).with_context(|| format!("{kind} arm"))?;
        write_artifacts(&dir, &records)?;
        runs.push(ArmRun { dir, records });
    }
    let comparison = emit_comparison(&runs[0].records, &runs[1].records)?;
    fs::write(cfg.out_dir.join(COMPARISON_FILE), comparison.summary())?;
    Ok((runs, comparison))
}

/// Runs the configured optimizer into `out_dir`.
pub fn run_single(cfg: &ExperimentConfig) -> Result<ArmRun> {
    let (stream, input_dim) = build_stream(cfg)?;
    let records = run_arm(cfg, &stream, input_dim)?;
    write_artifacts(&cfg.out_dir, &records)?;
    Ok(ArmRun {
        dir: cfg.out_dir.clone(),
        records,
    })
}

#[derive(Debug, Clone)]
pub struct ArmRun {
    pub dir: PathBuf,
    pub records: Vec<MetricsRecord>,
}

/// One row per trained task: accuracy on every task so far, then the mean.
pub fn accuracy_table(records: &[MetricsRecord]) -> String {
    let width = records.iter().map(|r| r.per_task_accuracy.len()).max().unwrap_or(0);
    let mut s = String::from("after");
    for j in 0..width {
        let _ = write!(s, "  task{j:<3}");
    }
    s.push_str("  mean\n");
    for rec in records {
        let _ = write!(s, "{:>5}", rec.task_index);
        for j in 0..width {
            match rec.per_task_accuracy.get(j) {
                Some(a) => {
                    let _ = write!(s, "  {a:<7.4}");
                }
                None => s.push_str("  -      "),
            }
        }
        let _ = writeln!(s, "  {:.4}", rec.mean_accuracy());
    }
    s
}

pub fn describe_stream(stream: &TaskStream) -> String {
    let mut s = format!("{} classes in {} tasks\n", stream.total_classes, stream.tasks.len());
    for task in &stream.tasks {
        let _ = writeln!(
            s,
            "task {}: global {:?} <- dataset classes {:?} ({} train, {} test)",
            task.task_index,
            task.class_ids,
            task.source_classes,
            task.train_set.len(),
            task.test_set.len()
        );
    }
    s
}
