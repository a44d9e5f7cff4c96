use std::collections::BTreeMap;

use ngcl_core::data::synth_blobs;
use ngcl_core::harness::{
    build_task_stream, epoch_order, run_stream, train_task, Preconditioner, RunState, TaskStream, TrainConfig,
};
use ngcl_core::optimizer::OptimizerConfig;
use ngcl_core::regularizer::{penalty, RegStrength};

const HIDDEN: &[usize] = &[8];

fn stream(seed: u64) -> TaskStream {
    let d = synth_blobs(6, 30, 3, 0.3, seed).unwrap();
    let (train, test) = d.split_train_test();
    build_task_stream(&train, &test, 2, seed, None).unwrap()
}

fn config(optimizer: OptimizerConfig, eps: f64, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::new(optimizer, RegStrength::new(eps).unwrap(), seed);
    cfg.epochs = 6;
    cfg.batch_size = 8;
    cfg
}

fn bits(values: &[f64]) -> Vec<u64> {
    values.iter().map(|v| v.to_bits()).collect()
}

fn param_trajectory(stream: &TaskStream, cfg: &TrainConfig, init_seed: u64) -> Vec<Vec<u64>> {
    let mut state = RunState::new(3, HIDDEN.to_vec(), init_seed).unwrap();
    let mut out = Vec::new();
    for task in &stream.tasks {
        state = train_task(state, task, cfg).unwrap();
        out.push(bits(&state.net.flatten_params()));
    }
    out
}

/// Plain sequential fine-tuning with no anchors, written against the
/// network API only.
fn fine_tune_reference(stream: &TaskStream, eta: f64, cfg: &TrainConfig, init_seed: u64) -> Vec<Vec<u64>> {
    let mut net = RunState::new(3, HIDDEN.to_vec(), init_seed).unwrap().net;
    let mut out = Vec::new();
    for task in &stream.tasks {
        net = net.expand_head(task.class_ids.len()).unwrap();
        let mut theta = net.flatten_params().into_inner();
        for epoch in 0..cfg.epochs {
            let order = epoch_order(cfg.seed, task.task_index, epoch, task.train_set.len());
            for batch in order.chunks(cfg.batch_size) {
                let (_, grad) = net.batch_gradient(batch.iter().map(|&i| &task.train_set[i])).unwrap();
                for (t, g) in theta.iter_mut().zip(grad.iter()) {
                    *t -= eta * g;
                }
                net.set_params(&theta).unwrap();
            }
        }
        out.push(bits(&theta));
    }
    out
}

#[test]
fn zero_epsilon_is_plain_fine_tuning() {
    for seed in 0..3 {
        let s = stream(seed);
        let cfg = config(OptimizerConfig::sgd(0.1).unwrap(), 0.0, seed);
        assert_eq!(
            param_trajectory(&s, &cfg, seed),
            fine_tune_reference(&s, 0.1, &cfg, seed)
        );
    }
}

#[test]
fn identity_metric_ngd_reproduces_sgd_runs() {
    for seed in 0..3 {
        let s = stream(seed);
        for eps in [0.0, 5.0] {
            let sgd = config(OptimizerConfig::sgd(0.1).unwrap(), eps, seed);
            let mut ngd = config(OptimizerConfig::ngd(0.1, 0.0).unwrap(), eps, seed);
            ngd.preconditioner = Preconditioner::Identity;
            assert_eq!(param_trajectory(&s, &sgd, seed), param_trajectory(&s, &ngd, seed));

            let rs = run_stream(&s, 3, HIDDEN, seed, &sgd, "r", &BTreeMap::new()).unwrap();
            let rn = run_stream(&s, 3, HIDDEN, seed, &ngd, "r", &BTreeMap::new()).unwrap();
            for (a, b) in rs.metrics.iter().zip(&rn.metrics) {
                assert_eq!(a.per_task_accuracy, b.per_task_accuracy);
            }
        }
    }
}

#[test]
fn stronger_epsilon_pulls_toward_the_anchor() {
    // Importance-weighted distance from the task-0 anchor after task 1.
    let weighted_drift = |eps: f64, seed: u64| {
        let s = stream(seed);
        let cfg = config(OptimizerConfig::sgd(0.05).unwrap(), eps, seed);
        let mut state = RunState::new(3, HIDDEN.to_vec(), seed).unwrap();
        state = train_task(state, &s.tasks[0], &cfg).unwrap();
        state = train_task(state, &s.tasks[1], &cfg).unwrap();
        // Anchors are kept in the current layout, so the first one already
        // carries zero importance on the rows task 1 added.
        penalty(&state.net.flatten_params(), &state.anchors[0]).unwrap()
    };
    for seed in 0..3 {
        let drift: Vec<f64> = [0.0, 1.0, 10.0].iter().map(|&e| weighted_drift(e, seed)).collect();
        assert!(drift[0] > drift[1] && drift[1] > drift[2], "seed {seed}: {drift:?}");
    }
}
