use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;

use super::layers::{LayerStack, Mode, ParamRef};
use super::loss::softmax_cross_entropy;
use super::tensor::Tensor;
use crate::error::{check_dim, Result};
use crate::rng::Rng;

/// A model bound to one fixed batch, so its loss is a function of the
/// parameters alone.
pub trait Differentiable {
    /// Forward and backward pass; gradients become visible via `params`.
    fn loss_and_grad(&mut self) -> Result<f64>;
    /// Forward pass only.
    fn loss(&mut self) -> Result<f64>;
    fn params(&mut self) -> Vec<ParamRef<'_>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Lower bound on the relative-error denominator, so entries whose true
    /// gradient is ~0 are judged on absolute error.
    pub floor: f64,
    /// Entries probed per parameter array; 0 probes all of them.
    pub samples_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            floor: 1e-5,
            samples_per_param: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_dev: f64,
    pub checked: usize,
    /// `(parameter array, entry)` of the worst deviation.
    pub worst: (usize, usize),
}

/// Compares analytic gradients against central finite differences on a
/// random subsample of parameter entries.
pub fn grad_check<M: Differentiable + ?Sized>(
    model: &mut M,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    model.loss_and_grad()?;
    let analytic: Vec<Vec<f64>> = model.params().iter().map(|p| p.grad.to_vec()).collect();
    let mut rng = Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_dev: 0.0,
        checked: 0,
        worst: (0, 0),
    };
    for (pi, grads) in analytic.iter().enumerate() {
        let n = grads.len();
        let picks: Vec<usize> = if cfg.samples_per_param == 0 || cfg.samples_per_param >= n {
            (0..n).collect()
        } else {
            index::sample(&mut rng, n, cfg.samples_per_param).into_vec()
        };
        for i in picks {
            let original = model.params()[pi].value[i];
            model.params()[pi].value[i] = original + cfg.eps;
            let plus = model.loss()?;
            model.params()[pi].value[i] = original - cfg.eps;
            let minus = model.loss()?;
            model.params()[pi].value[i] = original;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let a = grads[i];
            let dev = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.checked += 1;
            if dev > report.max_rel_dev {
                report.max_rel_dev = dev;
                report.worst = (pi, i);
            }
        }
    }
    Ok(report)
}

/// Loss attached to a [`StackProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeLoss {
    SoftmaxCrossEntropy,
    /// `Σ (y - t)² / (2B)`
    Quadratic,
}

/// A single layer stack on a fixed batch, for gradient checks.
pub struct StackProblem {
    pub stack: LayerStack,
    pub input: Tensor,
    pub targets: Tensor,
    pub loss: ProbeLoss,
    pub seed: u64,
}

impl StackProblem {
    fn eval(&mut self, backward: bool) -> Result<f64> {
        let mut rng = Rng::seed_from_u64(self.seed);
        let y = self.stack.forward(&self.input, Mode::Train, &mut rng)?;
        check_dim("targets", y.data().len(), self.targets.data().len())?;
        let (loss, grad) = match self.loss {
            ProbeLoss::SoftmaxCrossEntropy => softmax_cross_entropy(&y, &self.targets)?,
            ProbeLoss::Quadratic => {
                let b = y.rows() as f64;
                let diff: Vec<f64> = y
                    .data()
                    .iter()
                    .zip(self.targets.data())
                    .map(|(a, t)| a - t)
                    .collect();
                let loss = diff.iter().map(|d| d * d).sum::<f64>() / (2.0 * b);
                let g = diff.iter().map(|d| d / b).collect();
                (loss, Tensor::new(y.shape(), g)?)
            }
        };
        if backward {
            self.stack.backward(&grad)?;
        }
        Ok(loss)
    }
}

impl Differentiable for StackProblem {
    fn loss_and_grad(&mut self) -> Result<f64> {
        self.eval(true)
    }

    fn loss(&mut self) -> Result<f64> {
        self.eval(false)
    }

    fn params(&mut self) -> Vec<ParamRef<'_>> {
        self.stack.params()
    }
}
