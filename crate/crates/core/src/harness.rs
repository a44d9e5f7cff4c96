//! Class-incremental task streams and the train / anchor / evaluate loop.
//!
//! Classes are shuffled by seed and chunked into tasks. Every class is then
//! relabelled by its position in the shuffled order, so task `t` owns a
//! contiguous block of global indices and the head rows appended for it line
//! up with its labels. Evaluation takes the argmax over every head row seen
//! so far; task identity is never consulted.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fisher::{estimate_diag_fisher_with, FisherDiagonal, FisherMode, DEFAULT_MAX_SAMPLES};
use crate::metrics::MetricsRecord;
use crate::nn::{LabeledExample, Network, NetworkShape};
use crate::optimizer::{natural_gradient, sgd_step_in_place, OptimizerConfig, OptimizerKind};
use crate::regularizer::{accumulate_penalty_gradient, RegStrength, TaskAnchor};
use crate::rng::SeededRng;

pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const PAPER_EPOCHS: usize = 300;
pub const PAPER_ETA: f64 = 0.001;

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub task_index: usize,
    /// Global (relabelled) class indices owned by this task, ascending.
    pub class_ids: Vec<usize>,
    /// Dataset labels these classes had before relabelling, same order.
    pub source_classes: Vec<usize>,
    pub train_set: Vec<LabeledExample>,
    pub test_set: Vec<LabeledExample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub total_classes: usize,
}

impl TaskStream {
    pub fn task_sizes(&self) -> Vec<usize> {
        self.tasks.iter().map(|t| t.class_ids.len()).collect()
    }
}

/// Shuffles `0..total_classes` by seed and chunks it; the last chunk holds
/// the remainder.
pub fn partition_classes(total_classes: usize, classes_per_task: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if total_classes == 0 {
        return Err(Error::Config("dataset has no classes".into()));
    }
    if classes_per_task == 0 {
        return Err(Error::Config("classes-per-task must be >= 1".into()));
    }
    if classes_per_task > total_classes {
        return Err(Error::Config(format!(
            "classes-per-task {classes_per_task} exceeds the {total_classes} available classes"
        )));
    }
    let mut order: Vec<usize> = (0..total_classes).collect();
    SeededRng::new(seed).shuffle(&mut order);
    Ok(order.chunks(classes_per_task).map(<[usize]>::to_vec).collect())
}

/// Builds a disjoint class-incremental stream.
///
/// With `imbalance_ratio = Some(rho)`, the class at position `j` of a task
/// with `s` classes keeps `round(n * rho^(-j / (s - 1)))` of its `n`
/// training examples (at least one), so the largest and smallest classes of
/// a task differ by a factor of `rho`. Test sets are never thinned.
pub fn build_task_stream(
    train: &Dataset,
    test: &Dataset,
    classes_per_task: usize,
    seed: u64,
    imbalance_ratio: Option<f64>,
) -> Result<TaskStream> {
    if train.num_classes != test.num_classes {
        return Err(Error::Consistency(format!(
            "train split has {} classes, test split {}",
            train.num_classes, test.num_classes
        )));
    }
    if let Some(rho) = imbalance_ratio {
        if !(rho >= 1.0 && rho.is_finite()) {
            return Err(Error::Config(format!("imbalance ratio must be >= 1, got {rho}")));
        }
    }
    let chunks = partition_classes(train.num_classes, classes_per_task, seed)?;

    let mut relabel = vec![0usize; train.num_classes];
    for (global, &source) in chunks.iter().flatten().enumerate() {
        relabel[source] = global;
    }

    let mut train_by_class: Vec<Vec<LabeledExample>> = vec![Vec::new(); train.num_classes];
    for ex in &train.examples {
        train_by_class[ex.label].push(LabeledExample::new(ex.features.clone(), relabel[ex.label]));
    }
    let mut test_by_class: Vec<Vec<LabeledExample>> = vec![Vec::new(); test.num_classes];
    for ex in &test.examples {
        test_by_class[ex.label].push(LabeledExample::new(ex.features.clone(), relabel[ex.label]));
    }

    let mut tasks = Vec::with_capacity(chunks.len());
    for (task_index, sources) in chunks.iter().enumerate() {
        let s = sources.len();
        let mut train_set = Vec::new();
        let mut test_set = Vec::new();
        for (j, &source) in sources.iter().enumerate() {
            let pool = &train_by_class[source];
            let keep = match imbalance_ratio {
                Some(rho) if s > 1 => {
                    let scale = rho.powf(-(j as f64) / (s - 1) as f64);
                    ((pool.len() as f64 * scale).round() as usize).clamp(1.min(pool.len()), pool.len())
                }
                _ => pool.len(),
            };
            train_set.extend_from_slice(&pool[..keep]);
            test_set.extend_from_slice(&test_by_class[source]);
        }
        let mut class_ids: Vec<usize> = sources.iter().map(|&c| relabel[c]).collect();
        class_ids.sort_unstable();
        tasks.push(Task {
            task_index,
            class_ids,
            source_classes: sources.clone(),
            train_set,
            test_set,
        });
    }
    Ok(TaskStream {
        tasks,
        total_classes: train.num_classes,
    })
}

/// Where NGD takes its diagonal metric from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    /// Fisher of the most recent anchor; plain gradient steps until one exists.
    LatestAnchor,
    /// Unit metric throughout.
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub epsilon: RegStrength,
    pub epochs: usize,
    pub batch_size: usize,
    pub fisher_max_samples: usize,
    pub fisher_mode: FisherMode,
    pub preconditioner: Preconditioner,
    /// Seeds the per-epoch batch order.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerConfig, epsilon: RegStrength, seed: u64) -> Self {
        Self {
            optimizer,
            epsilon,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            fisher_max_samples: DEFAULT_MAX_SAMPLES,
            fisher_mode: FisherMode::Empirical,
            preconditioner: Preconditioner::LatestAnchor,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch-size must be >= 1".into()));
        }
        if self.fisher_max_samples == 0 {
            return Err(Error::Config("fisher-max-samples must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub net: Network,
    pub anchors: Vec<TaskAnchor>,
    pub seen_classes: usize,
    pub metrics: Vec<MetricsRecord>,
    /// Wall-clock seconds spent in `train_task`, one entry per completed task.
    pub train_seconds: Vec<f64>,
}

impl RunState {
    /// Network with seeded hidden layers and no head yet.
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, seed: u64) -> Result<Self> {
        let shape = NetworkShape::new(input_dim, hidden_dims, 0)?;
        Ok(Self {
            net: Network::new(shape, seed),
            anchors: Vec::new(),
            seen_classes: 0,
            metrics: Vec::new(),
            train_seconds: Vec::new(),
        })
    }

    pub fn completed_tasks(&self) -> usize {
        self.anchors.len()
    }
}

/// Positions `0..n` in the order the given epoch visits them.
pub fn epoch_order(seed: u64, task_index: usize, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::derived(seed, &[task_index as u64, epoch as u64]).shuffle(&mut order);
    order
}

/// Expands the head for `task`, trains on it, and appends its anchor.
pub fn train_task(mut state: RunState, task: &Task, cfg: &TrainConfig) -> Result<RunState> {
    cfg.validate()?;
    let expected = state.completed_tasks();
    if task.task_index != expected {
        return Err(Error::Protocol {
            expected,
            actual: task.task_index,
        });
    }
    let s = task.class_ids.len();
    let owned: Vec<usize> = (state.seen_classes..state.seen_classes + s).collect();
    if task.class_ids != owned {
        return Err(Error::Consistency(format!(
            "task {} owns classes {:?}; the next head rows are {:?}",
            task.task_index, task.class_ids, owned
        )));
    }
    if task.train_set.is_empty() {
        return Err(Error::Consistency(format!(
            "task {} has no training data",
            task.task_index
        )));
    }

    let started = Instant::now();

    let old_shape = state.net.shape().clone();
    let mut net = state.net.expand_head(s)?;
    let anchors = state
        .anchors
        .iter()
        .map(|a| a.pad_for_head_growth(&old_shape, s))
        .collect::<Result<Vec<_>>>()?;

    let metric: Option<FisherDiagonal> = match (cfg.optimizer.kind, cfg.preconditioner) {
        (OptimizerKind::Sgd, _) => None,
        (OptimizerKind::Ngd, Preconditioner::Identity) => Some(FisherDiagonal::ones(net.parameter_count())),
        (OptimizerKind::Ngd, Preconditioner::LatestAnchor) => anchors.last().map(|a| a.fisher().clone()),
    };
    let regularize = !cfg.epsilon.is_zero() && !anchors.is_empty();
    let eps = cfg.epsilon.value();

    let mut theta = net.flatten_params();
    for epoch in 0..cfg.epochs {
        let order = epoch_order(cfg.seed, task.task_index, epoch, task.train_set.len());
        for batch in order.chunks(cfg.batch_size) {
            let (_, mut grad) = net.batch_gradient(batch.iter().map(|&i| &task.train_set[i]))?;
            if regularize {
                for anchor in &anchors {
                    accumulate_penalty_gradient(&theta, anchor, eps, &mut grad)?;
                }
            }
            match &metric {
                None => sgd_step_in_place(&mut theta, &grad, cfg.optimizer.eta)?,
                Some(fisher) => {
                    let natural = natural_gradient(&grad, fisher, cfg.optimizer.damping)?;
                    sgd_step_in_place(&mut theta, &natural, cfg.optimizer.eta)?;
                }
            }
            net.set_params(&theta)?;
        }
        if !theta.iter().all(|t| t.is_finite()) {
            return Err(Error::Diverged {
                task_index: task.task_index,
                epoch,
            });
        }
    }

    let fisher = estimate_diag_fisher_with(&net, &task.train_set, cfg.fisher_max_samples, cfg.fisher_mode)?;
    let mut anchors = anchors;
    anchors.push(TaskAnchor::new(theta, fisher, task.task_index)?);

    state.train_seconds.push(started.elapsed().as_secs_f64());
    state.net = net;
    state.anchors = anchors;
    state.seen_classes += s;
    Ok(state)
}

/// Accuracy on every trained task's test set, argmax over all seen classes.
/// A task with an empty test set scores 0.
pub fn evaluate(state: &RunState, stream: &TaskStream) -> Result<Vec<f64>> {
    stream.tasks[..state.completed_tasks().min(stream.tasks.len())]
        .iter()
        .map(|task| {
            if task.test_set.is_empty() {
                return Ok(0.0);
            }
            let correct = predict_all(&state.net, &task.test_set)?
                .iter()
                .zip(&task.test_set)
                .filter(|(p, ex)| **p == ex.label)
                .count();
            Ok(correct as f64 / task.test_set.len() as f64)
        })
        .collect()
}

pub fn predict_all(net: &Network, examples: &[LabeledExample]) -> Result<Vec<usize>> {
    examples.iter().map(|ex| net.predict(&ex.features)).collect()
}

/// Trains and evaluates every task in order, recording one metrics record
/// per task. `hidden_dims` and `init_seed` define the starting network.
pub fn run_stream(
    stream: &TaskStream,
    input_dim: usize,
    hidden_dims: &[usize],
    init_seed: u64,
    cfg: &TrainConfig,
    run_id: &str,
    config_snapshot: &BTreeMap<String, String>,
) -> Result<RunState> {
    let mut state = RunState::new(input_dim, hidden_dims.to_vec(), init_seed)?;
    for task in &stream.tasks {
        state = train_task(state, task, cfg)?;
        let started = Instant::now();
        let accuracy = evaluate(&state, stream)?;
        let eval_seconds = started.elapsed().as_secs_f64();
        let train_seconds = *state.train_seconds.last().expect("train_task records its time");
        state.metrics.push(MetricsRecord {
            run_id: run_id.to_string(),
            optimizer: cfg.optimizer.kind,
            task_index: task.task_index,
            per_task_accuracy: accuracy,
            train_seconds,
            eval_seconds,
            config_snapshot: config_snapshot.clone(),
        });
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;

    fn blobs_stream(classes: usize, per_task: usize, seed: u64) -> TaskStream {
        let d = synth_blobs(classes, 30, 2, 0.2, seed).unwrap();
        let (train, test) = d.split_train_test();
        build_task_stream(&train, &test, per_task, seed, None).unwrap()
    }

    fn sgd_cfg(eps: f64) -> TrainConfig {
        let mut cfg = TrainConfig::new(OptimizerConfig::sgd(0.1).unwrap(), RegStrength::new(eps).unwrap(), 3);
        cfg.epochs = 5;
        cfg.batch_size = 8;
        cfg
    }

    #[test]
    fn partition_251_by_35() {
        let chunks = partition_classes(251, 35, 0).unwrap();
        let sizes: Vec<usize> = chunks.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![35, 35, 35, 35, 35, 35, 35, 6]);
    }

    #[test]
    fn exact_division() {
        let stream = blobs_stream(10, 5, 1);
        assert_eq!(stream.task_sizes(), vec![5, 5]);
        assert_eq!(stream.tasks[0].class_ids, (0..5).collect::<Vec<_>>());
        assert_eq!(stream.tasks[1].class_ids, (5..10).collect::<Vec<_>>());
    }

    #[test]
    fn too_many_classes_per_task() {
        assert!(matches!(partition_classes(4, 5, 0), Err(Error::Config(_))));
        assert!(matches!(partition_classes(4, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn labels_belong_to_their_task() {
        let stream = blobs_stream(7, 3, 4);
        for task in &stream.tasks {
            for ex in task.train_set.iter().chain(&task.test_set) {
                assert!(task.class_ids.contains(&ex.label));
            }
        }
    }

    #[test]
    fn relabelling_preserves_source_class_membership() {
        let d = synth_blobs(6, 10, 2, 0.2, 8).unwrap();
        let (train, test) = d.split_train_test();
        let stream = build_task_stream(&train, &test, 2, 8, None).unwrap();
        for task in &stream.tasks {
            let want: usize = task.source_classes.iter().map(|&c| train.class_counts()[c]).sum();
            assert_eq!(task.train_set.len(), want);
        }
    }

    #[test]
    fn imbalance_thins_train_only() {
        let d = synth_blobs(4, 50, 2, 0.2, 2).unwrap();
        let (train, test) = d.split_train_test();
        let stream = build_task_stream(&train, &test, 4, 2, Some(4.0)).unwrap();
        let task = &stream.tasks[0];
        let mut counts = vec![0; 4];
        for ex in &task.train_set {
            counts[ex.label] += 1;
        }
        // Global labels follow shuffled order, so position j is label j.
        assert_eq!(counts, vec![40, 25, 16, 10]);
        assert_eq!(task.test_set.len(), 40);
        assert!(build_task_stream(&train, &test, 4, 2, Some(0.5)).is_err());
    }

    #[test]
    fn out_of_order_task_is_rejected() {
        let stream = blobs_stream(4, 2, 0);
        let state = RunState::new(2, vec![4], 0).unwrap();
        let err = train_task(state, &stream.tasks[1], &sgd_cfg(0.0));
        assert!(matches!(err, Err(Error::Protocol { expected: 0, actual: 1 })));
    }

    #[test]
    fn anchors_track_tasks_and_padding() {
        let stream = blobs_stream(6, 2, 5);
        let mut state = RunState::new(2, vec![5], 1).unwrap();
        for (t, task) in stream.tasks.iter().enumerate() {
            state = train_task(state, task, &sgd_cfg(1.0)).unwrap();
            assert_eq!(state.anchors.len(), t + 1);
            assert_eq!(state.seen_classes, state.net.output_dim());
        }
        // Head layout: hidden (2*5 + 5), head weights 6 rows x 5, head biases 6.
        let body = 15;
        for (k, anchor) in state.anchors.iter().enumerate() {
            assert_eq!(anchor.len(), state.net.parameter_count());
            let born_rows = 2 * (k + 1)..6;
            let f = anchor.fisher().values();
            for row in born_rows {
                assert!(f[body + row * 5..body + row * 5 + 5].iter().all(|&v| v == 0.0));
                assert_eq!(f[body + 30 + row], 0.0);
            }
        }
    }

    #[test]
    fn zero_network_scores_one_over_k() {
        let stream = blobs_stream(4, 4, 3);
        let mut state = RunState::new(2, vec![3], 0).unwrap();
        state.net = Network::zeros(NetworkShape::new(2, vec![3], 4).unwrap());
        state.seen_classes = 4;
        let fisher = FisherDiagonal::zeros(state.net.parameter_count());
        state
            .anchors
            .push(TaskAnchor::new(state.net.flatten_params(), fisher, 0).unwrap());
        let acc = evaluate(&state, &stream).unwrap();
        assert_eq!(acc, vec![0.25]);
    }

    #[test]
    fn evaluation_ignores_task_identity() {
        let stream = blobs_stream(4, 2, 6);
        let mut state = RunState::new(2, vec![4], 2).unwrap();
        for task in &stream.tasks {
            state = train_task(state, task, &sgd_cfg(0.0)).unwrap();
        }
        let mut pooled: Vec<LabeledExample> = stream.tasks.iter().flat_map(|t| t.test_set.iter().cloned()).collect();
        let before = predict_all(&state.net, &pooled).unwrap();
        for (i, ex) in pooled.iter_mut().enumerate() {
            ex.label = (ex.label + i) % 4;
        }
        assert_eq!(predict_all(&state.net, &pooled).unwrap(), before);
    }

    #[test]
    fn first_task_ignores_epsilon() {
        let stream = blobs_stream(4, 2, 7);
        let a = train_task(RunState::new(2, vec![4], 9).unwrap(), &stream.tasks[0], &sgd_cfg(0.0)).unwrap();
        let b = train_task(RunState::new(2, vec![4], 9).unwrap(), &stream.tasks[0], &sgd_cfg(1e3)).unwrap();
        assert_eq!(a.net, b.net);
        assert_eq!(a.anchors, b.anchors);
    }

    #[test]
    fn ngd_first_task_falls_back_to_sgd() {
        let stream = blobs_stream(4, 2, 7);
        let sgd = sgd_cfg(1.0);
        let mut ngd = sgd.clone();
        ngd.optimizer = OptimizerConfig::ngd(0.1, 1e-4).unwrap();
        let a = train_task(RunState::new(2, vec![4], 9).unwrap(), &stream.tasks[0], &sgd).unwrap();
        let b = train_task(RunState::new(2, vec![4], 9).unwrap(), &stream.tasks[0], &ngd).unwrap();
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn run_stream_records_every_task() {
        let stream = blobs_stream(6, 2, 1);
        let snapshot = BTreeMap::from([("seed".to_string(), "1".to_string())]);
        let state = run_stream(&stream, 2, &[4], 1, &sgd_cfg(0.0), "r", &snapshot).unwrap();
        assert_eq!(state.metrics.len(), 3);
        for (t, rec) in state.metrics.iter().enumerate() {
            assert_eq!(rec.task_index, t);
            assert_eq!(rec.per_task_accuracy.len(), t + 1);
            assert!(rec.per_task_accuracy.iter().all(|a| (0.0..=1.0).contains(a)));
            assert!(rec.train_seconds >= 0.0);
        }
    }
}
