//! Importance-weighted quadratic penalty toward per-task anchors.
//!
//! For an anchor `(theta*, I)` the penalty is `sum_i I_ii (theta_i - theta*_i)^2`
//! with no one-half factor; the regularization strength absorbs constants.

use crate::error::{check_len, Error, Result};
use crate::fisher::FisherDiagonal;
use crate::nn::{NetworkShape, ParameterVector};

/// Parameters and importances frozen at the end of a task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskAnchor {
    theta_star: ParameterVector,
    fisher: FisherDiagonal,
    task_index: usize,
}

impl TaskAnchor {
    pub fn new(theta_star: ParameterVector, fisher: FisherDiagonal, task_index: usize) -> Result<Self> {
        check_len("anchor fisher", theta_star.len(), fisher.len())?;
        Ok(Self {
            theta_star,
            fisher,
            task_index,
        })
    }

    pub fn theta_star(&self) -> &ParameterVector {
        &self.theta_star
    }

    pub fn fisher(&self) -> &FisherDiagonal {
        &self.fisher
    }

    pub fn task_index(&self) -> usize {
        self.task_index
    }

    pub fn len(&self) -> usize {
        self.theta_star.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta_star.is_empty()
    }

    /// Follows a head expansion: parameters born after this anchor get
    /// `theta* = 0` and zero importance, so the penalty never touches them.
    pub fn pad_for_head_growth(&self, shape: &NetworkShape, new_classes: usize) -> Result<Self> {
        let theta = crate::nn::pad_for_head_growth(shape, &self.theta_star, new_classes, 0.0)?;
        Ok(Self {
            theta_star: theta.into(),
            fisher: self.fisher.pad_for_head_growth(shape, new_classes)?,
            task_index: self.task_index,
        })
    }
}

/// Regularization strength `epsilon >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RegStrength(f64);

impl RegStrength {
    pub const ZERO: RegStrength = RegStrength(0.0);

    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon >= 0.0 && epsilon.is_finite() {
            Ok(Self(epsilon))
        } else {
            Err(Error::Config(format!("epsilon must be finite and >= 0, got {epsilon}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

pub fn penalty(theta: &[f64], anchor: &TaskAnchor) -> Result<f64> {
    check_len("penalty theta", anchor.len(), theta.len())?;
    Ok(theta
        .iter()
        .zip(anchor.theta_star.iter())
        .zip(anchor.fisher.values())
        .map(|((t, s), f)| {
            let d = t - s;
            f * d * d
        })
        .sum())
}

/// `2 I_ii (theta_i - theta*_i)` per coordinate.
pub fn penalty_gradient(theta: &[f64], anchor: &TaskAnchor) -> Result<ParameterVector> {
    let mut grad = vec![0.0; theta.len()];
    accumulate_penalty_gradient(theta, anchor, 1.0, &mut grad)?;
    Ok(grad.into())
}

/// Adds `scale * penalty_gradient(theta, anchor)` into `out`.
pub fn accumulate_penalty_gradient(theta: &[f64], anchor: &TaskAnchor, scale: f64, out: &mut [f64]) -> Result<()> {
    check_len("penalty theta", anchor.len(), theta.len())?;
    check_len("penalty gradient buffer", theta.len(), out.len())?;
    for (((o, t), s), f) in out
        .iter_mut()
        .zip(theta)
        .zip(anchor.theta_star.iter())
        .zip(anchor.fisher.values())
    {
        *o += scale * (2.0 * f * (t - s));
    }
    Ok(())
}

/// `original_loss + eps * sum_k penalty(theta, anchor_k)`.
pub fn regularized_loss(original_loss: f64, theta: &[f64], anchors: &[TaskAnchor], eps: RegStrength) -> Result<f64> {
    if eps.is_zero() || anchors.is_empty() {
        return Ok(original_loss);
    }
    let mut total = 0.0;
    for anchor in anchors {
        total += penalty(theta, anchor)?;
    }
    Ok(original_loss + eps.value() * total)
}
