//! Plain gradient descent and diagonal natural gradient descent.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::fisher::FisherDiagonal;
use crate::nn::ParameterVector;

pub const DEFAULT_DAMPING: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    Ngd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Ngd => "ngd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "ngd" => Ok(OptimizerKind::Ngd),
            other => Err(Error::Config(format!(
                "unknown optimizer {other:?} (expected sgd or ngd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub eta: f64,
    /// Added to every Fisher entry before inversion.
    pub damping: f64,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, eta: f64, damping: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Config(format!("eta must be > 0, got {eta}")));
        }
        if !(damping >= 0.0 && damping.is_finite()) {
            return Err(Error::Config(format!("damping must be >= 0, got {damping}")));
        }
        Ok(Self { kind, eta, damping })
    }

    pub fn sgd(eta: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, eta, DEFAULT_DAMPING)
    }

    pub fn ngd(eta: f64, damping: f64) -> Result<Self> {
        Self::new(OptimizerKind::Ngd, eta, damping)
    }
}

/// `theta - eta * grad`.
pub fn sgd_step(theta: &ParameterVector, grad: &[f64], eta: f64) -> Result<ParameterVector> {
    let mut next = theta.clone();
    sgd_step_in_place(&mut next, grad, eta)?;
    Ok(next)
}

pub fn sgd_step_in_place(theta: &mut [f64], grad: &[f64], eta: f64) -> Result<()> {
    check_len("sgd gradient", theta.len(), grad.len())?;
    for (t, g) in theta.iter_mut().zip(grad) {
        *t -= eta * g;
    }
    Ok(())
}

/// Gradient preconditioned by the damped inverse diagonal Fisher:
/// `grad_i / (I_ii + damping)`. Fails rather than clamping when any
/// denominator is not strictly positive.
pub fn natural_gradient(grad: &[f64], fisher: &FisherDiagonal, damping: f64) -> Result<ParameterVector> {
    check_len("natural gradient fisher", grad.len(), fisher.len())?;
    grad.iter()
        .zip(fisher.values())
        .enumerate()
        .map(|(index, (g, f))| {
            let curvature = f + damping;
            if curvature > 0.0 {
                Ok(g / curvature)
            } else {
                Err(Error::SingularCurvature {
                    index,
                    value: curvature,
                })
            }
        })
        .collect::<Result<Vec<f64>>>()
        .map(ParameterVector::new)
}

/// `theta - eta * natural_gradient(grad, fisher, damping)`.
pub fn ngd_step(
    theta: &ParameterVector,
    grad: &[f64],
    fisher: &FisherDiagonal,
    eta: f64,
    damping: f64,
) -> Result<ParameterVector> {
    check_len("ngd gradient", theta.len(), grad.len())?;
    let natural = natural_gradient(grad, fisher, damping)?;
    sgd_step(theta, &natural, eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fisher(v: Vec<f64>) -> FisherDiagonal {
        let n = v.len();
        FisherDiagonal::new(v, n).unwrap()
    }

    #[test]
    fn sgd_arithmetic() {
        let theta = ParameterVector::new(vec![1.0]);
        assert_eq!(sgd_step(&theta, &[2.0], 0.1).unwrap()[0], 0.8);
        assert_eq!(sgd_step(&theta, &[0.0], 0.1).unwrap(), theta);
    }

    #[test]
    fn sgd_half_steps_compose() {
        let theta = ParameterVector::new(vec![1.0, -3.0]);
        let grad = [0.5, 2.0];
        let once = sgd_step(&theta, &grad, 0.5).unwrap();
        let twice = sgd_step(&sgd_step(&theta, &grad, 0.25).unwrap(), &grad, 0.25).unwrap();
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_length_mismatch() {
        let theta = ParameterVector::new(vec![1.0, 2.0]);
        assert!(matches!(sgd_step(&theta, &[1.0], 0.1), Err(Error::Shape { .. })));
    }

    #[test]
    fn ngd_unit_metric_is_sgd() {
        let theta = ParameterVector::new(vec![0.3, -1.7, 2.9]);
        let grad = [0.11, 7.3, -0.004];
        let a = ngd_step(&theta, &grad, &FisherDiagonal::ones(3), 0.37, 0.0).unwrap();
        let b = sgd_step(&theta, &grad, 0.37).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ngd_hand_example() {
        let theta = ParameterVector::new(vec![1.0]);
        let next = ngd_step(&theta, &[2.0], &fisher(vec![4.0]), 0.1, 0.0).unwrap();
        assert!((next[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn ngd_zero_gradient_is_stationary() {
        let theta = ParameterVector::new(vec![1.0, 2.0]);
        let next = ngd_step(&theta, &[0.0, 0.0], &fisher(vec![1e-9, 30.0]), 0.5, 1e-4).unwrap();
        assert_eq!(next, theta);
    }

    #[test]
    fn natural_gradient_examples() {
        assert_eq!(
            natural_gradient(&[2.0, 3.0], &FisherDiagonal::ones(2), 0.0)
                .unwrap()
                .into_inner(),
            vec![2.0, 3.0]
        );
        assert_eq!(
            natural_gradient(&[2.0, 3.0], &fisher(vec![4.0, 0.0]), 1.0)
                .unwrap()
                .into_inner(),
            vec![0.4, 3.0]
        );
        let base = natural_gradient(&[2.0, -3.0], &fisher(vec![4.0, 0.5]), 0.25).unwrap();
        let doubled = natural_gradient(&[2.0, -3.0], &fisher(vec![8.0, 1.0]), 0.5).unwrap();
        for (b, d) in base.iter().zip(doubled.iter()) {
            assert_eq!(*d, b / 2.0);
        }
    }

    #[test]
    fn zero_curvature_is_an_error() {
        let err = natural_gradient(&[1.0, 1.0], &fisher(vec![1.0, 0.0]), 0.0);
        assert!(matches!(err, Err(Error::SingularCurvature { index: 1, .. })));
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::sgd(0.0).is_err());
        assert!(OptimizerConfig::ngd(0.1, -1.0).is_err());
        assert_eq!("NGD".parse::<OptimizerKind>().unwrap(), OptimizerKind::Ngd);
        assert!("adam".parse::<OptimizerKind>().is_err());
    }
}
