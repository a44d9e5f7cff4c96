//! Diagonal Fisher information estimated from per-example score vectors.

use crate::error::{check_len, Error, Result};
use crate::nn::{softmax, LabeledExample, Network, NetworkShape};
use crate::rng::SeededRng;

pub const DEFAULT_MAX_SAMPLES: usize = 1000;

/// Per-parameter importance `I_ii >= 0`, in the canonical parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherDiagonal {
    values: Vec<f64>,
    sample_count: usize,
}

impl FisherDiagonal {
    pub fn new(values: Vec<f64>, sample_count: usize) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| v.is_nan() || *v < 0.0 || v.is_infinite()) {
            return Err(Error::Estimation(format!(
                "fisher entry {i} is {} (must be finite and >= 0)",
                values[i]
            )));
        }
        Ok(Self { values, sample_count })
    }

    /// Unit metric. Used where no curvature estimate exists yet.
    pub fn ones(len: usize) -> Self {
        Self {
            values: vec![1.0; len],
            sample_count: 0,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
            sample_count: 0,
        }
    }

    /// Mean of squared score vectors, reduced in iteration order.
    pub fn from_scores<I, S>(scores: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[f64]>,
    {
        let mut acc = SquaredMean::default();
        for score in scores {
            acc.add(score.as_ref())?;
        }
        acc.finish()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// Re-lays the diagonal out for a head grown by `new_classes`; the new
    /// parameters get zero importance.
    pub fn pad_for_head_growth(&self, shape: &NetworkShape, new_classes: usize) -> Result<Self> {
        Ok(Self {
            values: crate::nn::pad_for_head_growth(shape, &self.values, new_classes, 0.0)?,
            sample_count: self.sample_count,
        })
    }
}

/// Which label the log-likelihood score is taken at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherMode {
    /// Observed label (empirical Fisher). Deterministic.
    Empirical,
    /// One label per example drawn from the model's predictive distribution.
    ModelSampled { seed: u64 },
}

/// Empirical diagonal Fisher over the first `min(max_samples, data.len())`
/// examples: the mean squared gradient of `log p(y | x)` at the true label.
pub fn estimate_diag_fisher(net: &Network, data: &[LabeledExample], max_samples: usize) -> Result<FisherDiagonal> {
    estimate_diag_fisher_with(net, data, max_samples, FisherMode::Empirical)
}

pub fn estimate_diag_fisher_with(
    net: &Network,
    data: &[LabeledExample],
    max_samples: usize,
    mode: FisherMode,
) -> Result<FisherDiagonal> {
    if data.is_empty() {
        return Err(Error::Estimation("empty data".into()));
    }
    if max_samples == 0 {
        return Err(Error::Estimation("max_samples must be >= 1".into()));
    }
    let m = max_samples.min(data.len());
    let n = net.parameter_count();
    let mut rng = match mode {
        FisherMode::Empirical => None,
        FisherMode::ModelSampled { seed } => Some(SeededRng::new(seed)),
    };

    // The gradient of -log p equals minus the score; squaring removes the sign.
    let mut acc = SquaredMean::default();
    let mut buffer = vec![0.0; n];
    for example in &data[..m] {
        buffer.iter_mut().for_each(|g| *g = 0.0);
        match rng.as_mut() {
            None => {
                net.accumulate_gradient(example, &mut buffer)?;
            }
            Some(rng) => {
                let probs = softmax(&net.forward(&example.features)?);
                let label = sample_categorical(&probs, rng.uniform());
                let resampled = LabeledExample::new(example.features.clone(), label);
                net.accumulate_gradient(&resampled, &mut buffer)?;
            }
        }
        acc.add(&buffer)?;
    }
    acc.finish()
}

#[derive(Default)]
struct SquaredMean {
    sum: Option<Vec<f64>>,
    count: usize,
}

impl SquaredMean {
    fn add(&mut self, score: &[f64]) -> Result<()> {
        let sum = self.sum.get_or_insert_with(|| vec![0.0; score.len()]);
        check_len("score vector", sum.len(), score.len())?;
        for (a, g) in sum.iter_mut().zip(score) {
            *a += g * g;
        }
        self.count += 1;
        Ok(())
    }

    fn finish(self) -> Result<FisherDiagonal> {
        let Some(mut values) = self.sum else {
            return Err(Error::Estimation("no examples to estimate from".into()));
        };
        let m = self.count as f64;
        for v in &mut values {
            *v /= m;
        }
        FisherDiagonal::new(values, self.count)
    }
}

fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
