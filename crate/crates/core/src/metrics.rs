//! Per-task metrics, CSV emission and SGD-vs-NGD comparison.
//!
//! CSV layout: header
//! `run_id,optimizer,task_index,eval_task,accuracy,train_seconds,eval_seconds`,
//! then one row per (record, evaluated task). Reals carry six decimals and
//! lines end in `\n`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::optimizer::OptimizerKind;

pub const CSV_HEADER: &str = "run_id,optimizer,task_index,eval_task,accuracy,train_seconds,eval_seconds";

/// Snapshot key that is allowed to differ between compared arms.
pub const OPTIMIZER_KEY: &str = "optimizer";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub run_id: String,
    pub optimizer: OptimizerKind,
    pub task_index: usize,
    /// `a_j` for every task `j <= task_index`, measured after this task.
    pub per_task_accuracy: Vec<f64>,
    pub train_seconds: f64,
    pub eval_seconds: f64,
    pub config_snapshot: BTreeMap<String, String>,
}

impl MetricsRecord {
    /// Unweighted mean of the per-task accuracies.
    pub fn mean_accuracy(&self) -> f64 {
        if self.per_task_accuracy.is_empty() {
            return 0.0;
        }
        self.per_task_accuracy.iter().sum::<f64>() / self.per_task_accuracy.len() as f64
    }
}

pub fn emit_csv<W: Write>(records: &[MetricsRecord], mut out: W) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Consistency("no metrics records to emit".into()));
    }
    let mut text = String::new();
    text.push_str(CSV_HEADER);
    text.push('\n');
    for rec in records {
        for (eval_task, acc) in rec.per_task_accuracy.iter().enumerate() {
            writeln!(
                text,
                "{},{},{},{},{:.6},{:.6},{:.6}",
                rec.run_id, rec.optimizer, rec.task_index, eval_task, acc, rec.train_seconds, rec.eval_seconds
            )
            .expect("formatting into a String");
        }
    }
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Rebuilds records from `emit_csv` output. Config snapshots are not part
/// of the CSV and come back empty.
pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<MetricsRecord>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim_end() != CSV_HEADER {
        return Err(Error::Consistency("missing or unexpected CSV header".into()));
    }
    let mut records: Vec<MetricsRecord> = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Consistency(format!("CSV row {}: {what}", n + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let optimizer: OptimizerKind = fields[1].parse()?;
        let task_index: usize = fields[2].parse().map_err(|_| bad("task_index"))?;
        let eval_task: usize = fields[3].parse().map_err(|_| bad("eval_task"))?;
        let accuracy: f64 = fields[4].parse().map_err(|_| bad("accuracy"))?;
        let train_seconds: f64 = fields[5].parse().map_err(|_| bad("train_seconds"))?;
        let eval_seconds: f64 = fields[6].parse().map_err(|_| bad("eval_seconds"))?;
        let continues = records
            .last()
            .is_some_and(|r| r.run_id == fields[0] && r.task_index == task_index);
        if !continues {
            records.push(MetricsRecord {
                run_id: fields[0].to_string(),
                optimizer,
                task_index,
                per_task_accuracy: Vec::new(),
                train_seconds,
                eval_seconds,
                config_snapshot: BTreeMap::new(),
            });
        }
        let rec = records.last_mut().expect("just pushed");
        if eval_task != rec.per_task_accuracy.len() {
            return Err(bad("eval_task out of sequence"));
        }
        rec.per_task_accuracy.push(accuracy);
    }
    Ok(records)
}

/// NGD-versus-SGD summary over matching task streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `deltas[t][j]` = NGD minus SGD accuracy on task `j` after task `t`.
    pub accuracy_deltas: Vec<Vec<f64>>,
    /// Total NGD training seconds over total SGD training seconds.
    pub time_ratio: f64,
    /// Same ratio over training plus evaluation seconds.
    pub total_time_ratio: f64,
    pub baseline_train_seconds: f64,
    pub candidate_train_seconds: f64,
}

impl Comparison {
    /// Deltas measured after the final task.
    pub fn final_deltas(&self) -> &[f64] {
        self.accuracy_deltas.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Human-readable summary; times shown in minutes and seconds.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "training time: baseline {:.3}s ({:.3} min), candidate {:.3}s ({:.3} min)",
            self.baseline_train_seconds,
            self.baseline_train_seconds / 60.0,
            self.candidate_train_seconds,
            self.candidate_train_seconds / 60.0
        );
        let _ = writeln!(
            s,
            "time ratio (candidate/baseline): {:.6} ({:+.2}%)",
            self.time_ratio,
            (self.time_ratio - 1.0) * 100.0
        );
        let _ = writeln!(s, "time ratio incl. evaluation: {:.6}", self.total_time_ratio);
        for (t, row) in self.accuracy_deltas.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|d| format!("{d:+.4}")).collect();
            let _ = writeln!(s, "after task {t}: accuracy deltas [{}]", cells.join(", "));
        }
        s
    }
}

/// Compares a baseline arm (usually SGD) against a candidate arm (usually
/// NGD). Records must cover the same tasks, and config snapshots must agree
/// on every key except `optimizer`.
pub fn emit_comparison(baseline: &[MetricsRecord], candidate: &[MetricsRecord]) -> Result<Comparison> {
    if baseline.is_empty() || candidate.is_empty() {
        return Err(Error::Comparison("both arms need at least one record".into()));
    }
    if baseline.len() != candidate.len() {
        return Err(Error::Comparison(format!(
            "arms cover {} and {} tasks",
            baseline.len(),
            candidate.len()
        )));
    }
    for (b, c) in baseline.iter().zip(candidate) {
        if b.task_index != c.task_index || b.per_task_accuracy.len() != c.per_task_accuracy.len() {
            return Err(Error::Comparison(format!(
                "task sequence differs at task {} vs {}",
                b.task_index, c.task_index
            )));
        }
        check_snapshots(&b.config_snapshot, &c.config_snapshot)?;
    }
    let accuracy_deltas = baseline
        .iter()
        .zip(candidate)
        .map(|(b, c)| {
            c.per_task_accuracy
                .iter()
                .zip(&b.per_task_accuracy)
                .map(|(x, y)| x - y)
                .collect()
        })
        .collect();
    let train = |rs: &[MetricsRecord]| rs.iter().map(|r| r.train_seconds).sum::<f64>();
    let total = |rs: &[MetricsRecord]| rs.iter().map(|r| r.train_seconds + r.eval_seconds).sum::<f64>();
    let ratio = |num: f64, den: f64| -> Result<f64> {
        if den > 0.0 {
            Ok(num / den)
        } else if num == 0.0 {
            Ok(1.0)
        } else {
            Err(Error::Comparison("baseline recorded zero time".into()))
        }
    };
    let (bt, ct) = (train(baseline), train(candidate));
    Ok(Comparison {
        accuracy_deltas,
        time_ratio: ratio(ct, bt)?,
        total_time_ratio: ratio(total(candidate), total(baseline))?,
        baseline_train_seconds: bt,
        candidate_train_seconds: ct,
    })
}

fn check_snapshots(a: &BTreeMap<String, String>, b: &BTreeMap<String, String>) -> Result<()> {
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    for key in keys {
        if key == OPTIMIZER_KEY {
            continue;
        }
        let (x, y) = (a.get(key), b.get(key));
        if x != y {
            return Err(Error::Comparison(format!(
                "config key {key:?} differs: {} vs {}",
                x.map_or("<unset>", String::as_str),
                y.map_or("<unset>", String::as_str)
            )));
        }
    }
    Ok(())
}

/// A plot-ready curve: `# title` then `x y` lines.
pub fn write_series<W: Write>(title: &str, points: &[(f64, f64)], mut out: W) -> Result<()> {
    let mut text = format!("# {title}\n");
    for (x, y) in points {
        writeln!(text, "{x} {y:.6}").expect("formatting into a String");
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

/// Mean accuracy over seen tasks after each task.
pub fn accuracy_series(records: &[MetricsRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .map(|r| (r.task_index as f64, r.mean_accuracy()))
        .collect()
}

/// Training seconds per task.
pub fn train_time_series(records: &[MetricsRecord]) -> Vec<(f64, f64)> {
    records.iter().map(|r| (r.task_index as f64, r.train_seconds)).collect()
}

/// Accuracy on the first task after each task, the usual forgetting curve.
pub fn first_task_series(records: &[MetricsRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| r.per_task_accuracy.first().map(|&a| (r.task_index as f64, a)))
        .collect()
}
