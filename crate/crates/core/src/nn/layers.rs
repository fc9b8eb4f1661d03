use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{check_dim, invalid, Error, Result};
use crate::rng::Rng;

/// Forward-pass mode. Eval mode uses running batchnorm statistics and
/// disables dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable array and its gradient from the last backward pass.
pub struct ParamRef<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a [f64],
}

#[inline]
fn axpy(y: &mut [f64], x: &[f64], a: f64) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = acc.iter().sum::<f64>();
    for i in chunks * 8..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y = x·W + b` for `x: [B, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (in_dim, out_dim) = (w.rows(), w.cols());
    check_dim("dense input width", in_dim, x.cols())?;
    check_dim("dense bias", out_dim, b.data().len())?;
    let batch = x.rows();
    let mut y = Vec::with_capacity(batch * out_dim);
    for i in 0..batch {
        let start = y.len();
        y.extend_from_slice(b.data());
        let yr = &mut y[start..];
        for (p, &xv) in x.row(i).iter().enumerate() {
            if xv != 0.0 {
                axpy(yr, &w.data()[p * out_dim..(p + 1) * out_dim], xv);
            }
        }
    }
    Tensor::matrix(batch, out_dim, y)
}

/// Gradients `(dx, dW, db)` of `y = x·W + b` given `dy`.
pub fn dense_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (in_dim, out_dim) = (w.rows(), w.cols());
    check_dim("dense grad rows", x.rows(), grad_out.rows())?;
    check_dim("dense grad width", out_dim, grad_out.cols())?;
    check_dim("dense input width", in_dim, x.cols())?;
    let batch = x.rows();
    let mut gw = vec![0.0; in_dim * out_dim];
    let mut gb = vec![0.0; out_dim];
    let mut gx = Vec::with_capacity(batch * in_dim);
    for i in 0..batch {
        let g = grad_out.row(i);
        axpy(&mut gb, g, 1.0);
        for (p, &xv) in x.row(i).iter().enumerate() {
            if xv != 0.0 {
                axpy(&mut gw[p * out_dim..(p + 1) * out_dim], g, xv);
            }
        }
        for p in 0..in_dim {
            gx.push(dot(g, &w.data()[p * out_dim..(p + 1) * out_dim]));
        }
    }
    Ok((
        Tensor::matrix(batch, in_dim, gx)?,
        Tensor::matrix(in_dim, out_dim, gw)?,
        Tensor::new(&[out_dim], gb)?,
    ))
}

/// Fully connected layer with Glorot-uniform weights and zero bias.
#[derive(Debug, Clone)]
pub struct Dense {
    weight: Tensor,
    bias: Tensor,
    grad_weight: Tensor,
    grad_bias: Tensor,
    input: Option<Tensor>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let limit = libm::sqrt(6.0 / (in_dim + out_dim) as f64);
        let w = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self {
            weight: Tensor::new(&[in_dim, out_dim], w).expect("positive dims"),
            bias: Tensor::zeros(&[out_dim]),
            grad_weight: Tensor::zeros(&[in_dim, out_dim]),
            grad_bias: Tensor::zeros(&[out_dim]),
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = dense_forward(x, &self.weight, &self.bias)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| invalid("dense backward before forward"))?;
        let (gx, gw, gb) = dense_backward(x, &self.weight, grad)?;
        self.grad_weight = gw;
        self.grad_bias = gb;
        Ok(gx)
    }
}

/// Per-feature batch normalization.
///
/// Running statistics follow `new = (1 - momentum)·old + momentum·batch`;
/// the running variance uses the unbiased batch variance.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    grad_gamma: Vec<f64>,
    grad_beta: Vec<f64>,
    momentum: f64,
    eps: f64,
    // x̂ and 1/σ from the last forward, plus the mode it ran in
    cache: Option<(Tensor, Vec<f64>, Mode)>,
}

impl BatchNorm {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            grad_gamma: vec![0.0; dim],
            grad_beta: vec![0.0; dim],
            momentum: Self::MOMENTUM,
            eps: Self::EPS,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma_mut(&mut self) -> &mut [f64] {
        &mut self.gamma
    }

    pub fn beta_mut(&mut self) -> &mut [f64] {
        &mut self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    /// Eval-mode normalisation with the running statistics; no caching.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        check_dim("batchnorm width", self.dim(), x.cols())?;
        let scale: Vec<f64> = self
            .running_var
            .iter()
            .zip(&self.gamma)
            .map(|(v, g)| g / libm::sqrt(v + self.eps))
            .collect();
        let mut y = Vec::with_capacity(x.data().len());
        for i in 0..x.rows() {
            for (j, &xv) in x.row(i).iter().enumerate() {
                y.push((xv - self.running_mean[j]) * scale[j] + self.beta[j]);
            }
        }
        Tensor::matrix(x.rows(), self.dim(), y)
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let d = self.dim();
        check_dim("batchnorm width", d, x.cols())?;
        let b = x.rows();
        let (mean, var) = match mode {
            Mode::Train => {
                if b < 2 {
                    return Err(invalid("batchnorm needs a batch of at least 2 in train mode"));
                }
                let mut mean = vec![0.0; d];
                for i in 0..b {
                    axpy(&mut mean, x.row(i), 1.0);
                }
                mean.iter_mut().for_each(|m| *m /= b as f64);
                let mut var = vec![0.0; d];
                for i in 0..b {
                    for ((v, &xv), &m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                        *v += (xv - m) * (xv - m);
                    }
                }
                var.iter_mut().for_each(|v| *v /= b as f64);
                let unbias = b as f64 / (b - 1) as f64;
                for j in 0..d {
                    self.running_mean[j] =
                        (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
                    self.running_var[j] = (1.0 - self.momentum) * self.running_var[j]
                        + self.momentum * var[j] * unbias;
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + self.eps)).collect();
        let mut xhat = Vec::with_capacity(b * d);
        let mut y = Vec::with_capacity(b * d);
        for i in 0..b {
            for (j, &xv) in x.row(i).iter().enumerate() {
                let h = (xv - mean[j]) * inv_std[j];
                xhat.push(h);
                y.push(self.gamma[j] * h + self.beta[j]);
            }
        }
        self.cache = Some((Tensor::matrix(b, d, xhat)?, inv_std, mode));
        Tensor::matrix(b, d, y)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (xhat, inv_std, mode) = self
            .cache
            .as_ref()
            .ok_or_else(|| invalid("batchnorm backward before forward"))?;
        let (b, d) = (xhat.rows(), xhat.cols());
        check_dim("batchnorm grad rows", b, grad.rows())?;
        check_dim("batchnorm grad width", d, grad.cols())?;
        let mut sum_g = vec![0.0; d];
        let mut sum_gx = vec![0.0; d];
        for i in 0..b {
            for (j, (&g, &h)) in grad.row(i).iter().zip(xhat.row(i)).enumerate() {
                sum_g[j] += g;
                sum_gx[j] += g * h;
            }
        }
        self.grad_beta.copy_from_slice(&sum_g);
        self.grad_gamma.copy_from_slice(&sum_gx);
        let mut gx = Vec::with_capacity(b * d);
        for i in 0..b {
            for (j, (&g, &h)) in grad.row(i).iter().zip(xhat.row(i)).enumerate() {
                let scale = self.gamma[j] * inv_std[j];
                gx.push(match mode {
                    Mode::Train => {
                        scale * (g - sum_g[j] / b as f64 - h * sum_gx[j] / b as f64)
                    }
                    Mode::Eval => scale * g,
                });
            }
        }
        Tensor::matrix(b, d, gx)
    }
}

/// `max(0, x)`; the gradient at exactly zero is zero.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.mask = x.data().iter().map(|&v| v > 0.0).collect();
        let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        Tensor::new(x.shape(), data).expect("same shape")
    }

    pub fn backward(&self, grad: &Tensor) -> Result<Tensor> {
        check_dim("relu grad", self.mask.len(), grad.data().len())?;
        let data = grad
            .data()
            .iter()
            .zip(&self.mask)
            .map(|(&g, &m)| if m { g } else { 0.0 })
            .collect();
        Tensor::new(grad.shape(), data)
    }
}

/// Inverted dropout: survivors are scaled by `1/(1 - rate)` so eval mode is
/// the identity.
#[derive(Debug, Clone)]
pub struct Dropout {
    rate: f64,
    // per-entry multiplier (0 or 1/(1-rate)); empty after an eval pass
    scale: Vec<f64>,
    frozen: bool,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(invalid("dropout rate must lie in [0, 1)"));
        }
        Ok(Self {
            rate,
            scale: Vec::new(),
            frozen: false,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// While frozen, train-mode passes reuse the last mask. Used by gradient
    /// checks.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.scale.clear();
            return Ok(x.clone());
        }
        let n = x.data().len();
        if !(self.frozen && self.scale.len() == n) {
            let keep = 1.0 / (1.0 - self.rate);
            self.scale = (0..n)
                .map(|_| if rng.random::<f64>() < self.rate { 0.0 } else { keep })
                .collect();
        }
        let data = x.data().iter().zip(&self.scale).map(|(v, s)| v * s).collect();
        Tensor::new(x.shape(), data)
    }

    pub fn backward(&self, grad: &Tensor) -> Result<Tensor> {
        if self.scale.is_empty() {
            return Ok(grad.clone());
        }
        check_dim("dropout grad", self.scale.len(), grad.data().len())?;
        let data = grad.data().iter().zip(&self.scale).map(|(g, s)| g * s).collect();
        Tensor::new(grad.shape(), data)
    }
}

/// Serializable description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Dense { in_dim: usize, out_dim: usize },
    BatchNorm { dim: usize },
    Relu,
    Dropout { rate: f64 },
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    BatchNorm(BatchNorm),
    Relu(Relu),
    Dropout(Dropout),
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense(d) => LayerKind::Dense {
                in_dim: d.in_dim(),
                out_dim: d.out_dim(),
            },
            Layer::BatchNorm(b) => LayerKind::BatchNorm { dim: b.dim() },
            Layer::Relu(_) => LayerKind::Relu,
            Layer::Dropout(d) => LayerKind::Dropout { rate: d.rate() },
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::BatchNorm(b) => b.forward(x, mode),
            Layer::Relu(r) => Ok(r.forward(x)),
            Layer::Dropout(d) => d.forward(x, mode, rng),
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(d) => d.backward(grad),
            Layer::BatchNorm(b) => b.backward(grad),
            Layer::Relu(r) => r.backward(grad),
            Layer::Dropout(d) => d.backward(grad),
        }
    }

    fn params(&mut self) -> Vec<ParamRef<'_>> {
        match self {
            Layer::Dense(d) => vec![
                ParamRef {
                    value: d.weight.data_mut(),
                    grad: d.grad_weight.data(),
                },
                ParamRef {
                    value: d.bias.data_mut(),
                    grad: d.grad_bias.data(),
                },
            ],
            Layer::BatchNorm(b) => vec![
                ParamRef {
                    value: &mut b.gamma,
                    grad: &b.grad_gamma,
                },
                ParamRef {
                    value: &mut b.beta,
                    grad: &b.grad_beta,
                },
            ],
            _ => Vec::new(),
        }
    }

    /// Every persistent array: trainable parameters, then batchnorm running
    /// statistics.
    fn state(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(d) => vec![d.weight.data(), d.bias.data()],
            Layer::BatchNorm(b) => vec![&b.gamma, &b.beta, &b.running_mean, &b.running_var],
            _ => Vec::new(),
        }
    }

    fn state_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::Dense(d) => vec![d.weight.data_mut(), d.bias.data_mut()],
            Layer::BatchNorm(b) => vec![
                &mut b.gamma,
                &mut b.beta,
                &mut b.running_mean,
                &mut b.running_var,
            ],
            _ => Vec::new(),
        }
    }
}

/// Layers applied in order.
#[derive(Debug, Clone, Default)]
pub struct LayerStack {
    layers: Vec<Layer>,
}

impl LayerStack {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense → batchnorm → ReLU → dropout.
    pub fn push_block(&mut self, in_dim: usize, out_dim: usize, dropout: f64, rng: &mut Rng) -> Result<()> {
        self.push_dense(in_dim, out_dim, rng)?;
        self.layers.push(Layer::BatchNorm(BatchNorm::new(out_dim)));
        self.layers.push(Layer::Relu(Relu::default()));
        self.layers.push(Layer::Dropout(Dropout::new(dropout)?));
        Ok(())
    }

    pub fn push_dense(&mut self, in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<()> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Spec("dense layer widths must be positive".into()));
        }
        if let Some(prev) = self.out_dim() {
            check_dim("stacked layer input", prev, in_dim)?;
        }
        self.layers.push(Layer::Dense(Dense::new(in_dim, out_dim, rng)));
        Ok(())
    }

    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.layers.iter().map(Layer::kind).collect()
    }

    /// Input width followed by the output width of every dense layer.
    pub fn dense_widths(&self) -> Vec<usize> {
        let mut widths = Vec::new();
        for layer in &self.layers {
            if let Layer::Dense(d) = layer {
                if widths.is_empty() {
                    widths.push(d.in_dim());
                }
                widths.push(d.out_dim());
            }
        }
        widths
    }

    pub fn dense_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Dense(_)))
            .count()
    }

    pub fn in_dim(&self) -> Option<usize> {
        self.dense_widths().first().copied()
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.dense_widths().last().copied()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, mode, rng)?;
        }
        if !h.is_finite() {
            return Err(Error::NonFinite("layer stack output"));
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&mut self) -> Vec<ParamRef<'_>> {
        self.layers.iter_mut().flat_map(Layer::params).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.weight.data().len() + d.bias.data().len(),
                Layer::BatchNorm(b) => 2 * b.dim(),
                _ => 0,
            })
            .sum()
    }

    pub fn set_dropout_frozen(&mut self, frozen: bool) {
        for layer in &mut self.layers {
            if let Layer::Dropout(d) = layer {
                d.set_frozen(frozen);
            }
        }
    }

    pub fn state(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(Layer::state).collect()
    }

    pub fn state_len(&self) -> usize {
        self.state().iter().map(|s| s.len()).sum()
    }

    /// Overwrites all persistent arrays from a flat buffer laid out as
    /// [`LayerStack::state`]; returns the number of values consumed.
    pub fn load_state(&mut self, flat: &[f64]) -> Result<usize> {
        let need = self.state_len();
        if flat.len() < need {
            return Err(Error::DimensionMismatch {
                context: "layer stack state",
                expected: need,
                actual: flat.len(),
            });
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for dst in layer.state_mut() {
                let n = dst.len();
                dst.copy_from_slice(&flat[offset..offset + n]);
                offset += n;
            }
        }
        Ok(offset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::softmax_cross_entropy;
    use rand::SeedableRng;

    fn rng(seed: u64) -> Rng {
        Rng::seed_from_u64(seed)
    }

    fn random_tensor(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
        let d = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::matrix(rows, cols, d).unwrap()
    }

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Tensor, h: f64, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.data().len());
        for i in 0..x.data().len() {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            out.push((f(&p) - f(&m)) / (2.0 * h));
        }
        out
    }

    fn max_rel(a: &[f64], b: &[f64], floor: f64) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
            .fold(0.0, f64::max)
    }

    /// Weighted sum, a loss whose gradient with respect to the output is `w`.
    fn probe(y: &Tensor, w: &Tensor) -> f64 {
        y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn dense_identity_and_hand_case() {
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zero = Tensor::zeros(&[2]);
        assert_eq!(dense_forward(&x, &eye, &zero).unwrap(), x);
        let one = Tensor::new(&[2], vec![1.0, 1.0]).unwrap();
        assert_eq!(dense_forward(&x, &eye, &one).unwrap().data(), &[2.0, 3.0]);
        let bad = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
        assert!(dense_forward(&bad, &eye, &zero).is_err());
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut r = rng(1);
        let x = random_tensor(&mut r, 3, 5);
        let w = random_tensor(&mut r, 5, 4);
        let b = Tensor::new(&[4], (0..4).map(|i| i as f64 * 0.1).collect()).unwrap();
        let probe_w = random_tensor(&mut r, 3, 4);
        let (gx, gw, gb) = dense_backward(&x, &w, &probe_w).unwrap();
        let h = 1e-5;
        let nx = numeric_grad(&x, h, |x| probe(&dense_forward(x, &w, &b).unwrap(), &probe_w));
        let nw = numeric_grad(&w, h, |w| probe(&dense_forward(&x, w, &b).unwrap(), &probe_w));
        let nb = numeric_grad(&b, h, |b| probe(&dense_forward(&x, &w, b).unwrap(), &probe_w));
        assert!(max_rel(gx.data(), &nx, 1e-6) < 1e-4);
        assert!(max_rel(gw.data(), &nw, 1e-6) < 1e-4);
        assert!(max_rel(gb.data(), &nb, 1e-6) < 1e-4);
    }

    #[test]
    fn batchnorm_normalizes_and_guards() {
        let mut bn = BatchNorm::new(2);
        let x = Tensor::matrix(3, 2, vec![5.0, 1.0, 5.0, 2.0, 5.0, 6.0]).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        for i in 0..3 {
            assert!(y.row(i)[0].abs() < 1e-9);
        }
        let mut r = rng(2);
        let x = random_tensor(&mut r, 16, 3);
        let y = bn.forward(&Tensor::matrix(16, 2, x.data()[..32].to_vec()).unwrap(), Mode::Train);
        let y = y.unwrap();
        for j in 0..2 {
            let col: Vec<f64> = (0..16).map(|i| y.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / 16.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-3, "{var}"); // ε = 1e-5 shrinks it slightly
        }
        let single = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(bn.forward(&single, Mode::Train).is_err());
        assert!(bn.forward(&single, Mode::Eval).is_ok());
    }

    #[test]
    fn batchnorm_unit_variance_with_large_spread() {
        // with spread far above ε the ε effect vanishes to 1e-6
        let mut r = rng(12);
        let x = Tensor::matrix(
            32,
            1,
            (0..32).map(|_| r.random_range(-100.0..100.0)).collect(),
        )
        .unwrap();
        let y = BatchNorm::new(1).forward(&x, Mode::Train).unwrap();
        let mean = y.data().iter().sum::<f64>() / 32.0;
        let var = y.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 32.0;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn batchnorm_running_stats_update() {
        let mut bn = BatchNorm::new(1);
        let x = Tensor::matrix(2, 1, vec![1.0, 3.0]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean()[0] - 0.2).abs() < 1e-15);
        // unbiased batch variance 2: 0.9·1 + 0.1·2
        assert!((bn.running_var()[0] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let mut r = rng(3);
        let x = random_tensor(&mut r, 6, 4);
        let probe_w = random_tensor(&mut r, 6, 4);
        let mut bn = BatchNorm::new(4);
        for (i, g) in bn.gamma_mut().iter_mut().enumerate() {
            *g = 0.5 + 0.3 * i as f64;
        }
        for (i, b) in bn.beta_mut().iter_mut().enumerate() {
            *b = -0.2 * i as f64;
        }
        bn.forward(&x, Mode::Train).unwrap();
        let gx = bn.backward(&probe_w).unwrap();
        let analytic_gamma = bn.grad_gamma.clone();
        let mut f = |x: &Tensor| {
            let mut b = bn.clone();
            probe(&b.forward(x, Mode::Train).unwrap(), &probe_w)
        };
        let nx = numeric_grad(&x, 1e-5, &mut f);
        assert!(max_rel(gx.data(), &nx, 1e-6) < 1e-3);

        let gamma = Tensor::new(&[4], bn.gamma.clone()).unwrap();
        let ng = numeric_grad(&gamma, 1e-5, |g| {
            let mut b = bn.clone();
            b.gamma.copy_from_slice(g.data());
            probe(&b.forward(&x, Mode::Train).unwrap(), &probe_w)
        });
        assert!(max_rel(&analytic_gamma, &ng, 1e-6) < 1e-3);
    }

    #[test]
    fn relu_examples() {
        let mut relu = Relu::default();
        let x = Tensor::matrix(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu.forward(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu.backward(&Tensor::matrix(1, 3, vec![1.0; 3]).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 1.0]);
        let pos = Tensor::matrix(1, 2, vec![0.5, 3.0]).unwrap();
        assert_eq!(relu.forward(&pos), pos);
    }

    #[test]
    fn relu_gradient_away_from_zero() {
        let mut r = rng(4);
        let mut x = random_tensor(&mut r, 4, 5);
        for v in x.data_mut() {
            if v.abs() < 0.05 {
                *v = 0.5;
            }
        }
        let probe_w = random_tensor(&mut r, 4, 5);
        let mut relu = Relu::default();
        relu.forward(&x);
        let g = relu.backward(&probe_w).unwrap();
        let n = numeric_grad(&x, 1e-4, |x| probe(&Relu::default().forward(x), &probe_w));
        assert!(max_rel(g.data(), &n, 1e-6) < 1e-6);
    }

    #[test]
    fn dropout_modes() {
        let mut r = rng(5);
        let x = random_tensor(&mut r, 3, 4);
        let mut d = Dropout::new(0.4).unwrap();
        assert_eq!(d.forward(&x, Mode::Eval, &mut r).unwrap(), x);
        let mut d0 = Dropout::new(0.0).unwrap();
        assert_eq!(d0.forward(&x, Mode::Train, &mut r).unwrap(), x);
        assert!(Dropout::new(1.0).is_err());
        assert!(Dropout::new(-0.1).is_err());
    }

    #[test]
    fn dropout_statistics() {
        let mut r = rng(6);
        let n = 1_000_000;
        let x = Tensor::matrix(1, n, vec![1.0; n]).unwrap();
        let mut d = Dropout::new(0.4).unwrap();
        let y = d.forward(&x, Mode::Train, &mut r).unwrap();
        let survivors = y.data().iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((survivors - 0.6).abs() < 0.005, "{survivors}");
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn frozen_dropout_reuses_mask() {
        let mut r = rng(7);
        let x = random_tensor(&mut r, 4, 8);
        let mut d = Dropout::new(0.5).unwrap();
        d.set_frozen(true);
        let a = d.forward(&x, Mode::Train, &mut r).unwrap();
        let b = d.forward(&x, Mode::Train, &mut r).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stack_state_round_trip() {
        let mut r = rng(8);
        let mut s = LayerStack::new();
        s.push_block(3, 4, 0.1, &mut r).unwrap();
        s.push_dense(4, 2, &mut r).unwrap();
        assert_eq!(s.dense_widths(), vec![3, 4, 2]);
        assert!(s.push_dense(3, 2, &mut r).is_err());
        let flat: Vec<f64> = s.state().concat();
        let mut t = LayerStack::new();
        t.push_block(3, 4, 0.1, &mut rng(99)).unwrap();
        t.push_dense(4, 2, &mut rng(99)).unwrap();
        assert_eq!(t.load_state(&flat).unwrap(), flat.len());
        assert_eq!(t.state().concat(), flat);
        let x = random_tensor(&mut r, 2, 3);
        let (mut ra, mut rb) = (rng(0), rng(0));
        assert_eq!(
            s.forward(&x, Mode::Eval, &mut ra).unwrap(),
            t.forward(&x, Mode::Eval, &mut rb).unwrap()
        );
    }

    #[test]
    fn stack_softmax_gradient() {
        let mut r = rng(9);
        let mut s = LayerStack::new();
        s.push_dense(4, 3, &mut r).unwrap();
        let x = random_tensor(&mut r, 5, 4);
        let mut t = vec![0.0; 15];
        for i in 0..5 {
            t[i * 3 + i % 3] = 1.0;
        }
        let t = Tensor::matrix(5, 3, t).unwrap();
        let logits = s.forward(&x, Mode::Train, &mut r).unwrap();
        let (_, g) = softmax_cross_entropy(&logits, &t).unwrap();
        let gx = s.backward(&g).unwrap();
        let n = numeric_grad(&x, 1e-5, |x| {
            let mut c = s.clone();
            let l = c.forward(x, Mode::Train, &mut rng(0)).unwrap();
            softmax_cross_entropy(&l, &t).unwrap().0
        });
        assert!(max_rel(gx.data(), &n, 1e-6) < 1e-5);
    }
}
