//! FusionNet, the three comparison networks, the training loop and the
//! beam-prediction metrics.
//!
//! FusionNet runs an mmWave branch and a sub-6GHz branch side by side,
//! concatenates their outputs (mmWave first) and classifies the result into
//! one logit per codebook beam. Every hidden dense layer is followed by
//! batchnorm, ReLU and dropout; the final classifier layer emits raw logits.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::datapipe::{FeatureSet, RateTable};
use crate::error::{check_dim, invalid, Error, Result};
use crate::nn::{
    self, dense_forward, softmax_cross_entropy, softmax_rows, Adam, AdamConfig, Differentiable,
    Layer, LayerKind, LayerStack, LrSchedule, Mode, ParamRef, Tensor,
};
use crate::rng::{self, Stream};

/// Which architecture to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fusion,
    Shallow,
    Sub6,
    Mmwave,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Fusion,
        ModelKind::Shallow,
        ModelKind::Sub6,
        ModelKind::Mmwave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Fusion => "fusion",
            ModelKind::Shallow => "shallow",
            ModelKind::Sub6 => "sub6",
            ModelKind::Mmwave => "mmwave",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        ModelKind::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Layer counts, widths and input sizes shared by all four architectures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSpec {
    pub l_m: usize,
    pub l_s: usize,
    pub l_c: usize,
    pub width_m: usize,
    pub width_s: usize,
    /// Classifier width, equal to the codebook size.
    pub width_c: usize,
    pub dropout: f64,
    pub sub6_dim: usize,
    pub mmwave_dim: usize,
}

impl FusionSpec {
    /// The full-size configuration: 4/6/3 layers, 2048-wide branches, a
    /// 64-beam classifier, 4 sub-6GHz antennas on 32 subcarriers and 4
    /// active mmWave antennas on 512 subcarriers.
    pub fn reference() -> Self {
        Self {
            l_m: 4,
            l_s: 6,
            l_c: 3,
            width_m: 2048,
            width_s: 2048,
            width_c: 64,
            dropout: 0.4,
            sub6_dim: 2 * 4 * 32,
            mmwave_dim: 2 * 4 * 512,
        }
    }

    /// Reference depths with 256-wide branches.
    pub fn desk(sub6_dim: usize, mmwave_dim: usize, num_beams: usize) -> Self {
        Self {
            width_m: 256,
            width_s: 256,
            width_c: num_beams,
            sub6_dim,
            mmwave_dim,
            ..Self::reference()
        }
    }

    /// Dense width lists `(mmWave branch, sub-6GHz branch, head)` that
    /// `kind` would have, without allocating it.
    pub fn width_lists(&self, kind: ModelKind) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let chain = |input: usize, width: usize, depth: usize| -> Vec<usize> {
            core::iter::once(input).chain(core::iter::repeat_n(width, depth)).collect()
        };
        match kind {
            ModelKind::Fusion => {
                let mut head = chain(self.width_m + self.width_s, self.width_c, self.l_c - 1);
                head.push(self.width_c);
                (
                    chain(self.mmwave_dim, self.width_m, self.l_m),
                    chain(self.sub6_dim, self.width_s, self.l_s),
                    head,
                )
            }
            ModelKind::Sub6 => (
                Vec::new(),
                chain(self.sub6_dim, self.width_s, self.l_s),
                vec![self.width_s, self.width_c],
            ),
            ModelKind::Mmwave => (
                chain(self.mmwave_dim, self.width_m, self.l_m),
                Vec::new(),
                vec![self.width_m, self.width_c],
            ),
            ModelKind::Shallow => {
                let mut trunk = chain(self.sub6_dim + self.mmwave_dim, self.width_s, self.l_s);
                trunk.push(self.width_c);
                (Vec::new(), Vec::new(), trunk)
            }
        }
    }

    pub fn flops(&self, kind: ModelKind) -> u64 {
        let (m, s, c) = self.width_lists(kind);
        nn::flops(&m, &s, &c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l_m == 0 || self.l_c == 0 {
            return Err(Error::Spec("every sub-network needs at least one layer".into()));
        }
        if self.l_s <= self.l_m {
            return Err(Error::Spec(format!(
                "sub-6GHz branch must be deeper than the mmWave branch (L_s={} <= L_m={})",
                self.l_s, self.l_m
            )));
        }
        if [self.width_m, self.width_s, self.width_c, self.sub6_dim, self.mmwave_dim].contains(&0)
        {
            return Err(Error::Spec("widths and input dims must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Spec("dropout rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A built network: optional per-band branches feeding a head.
#[derive(Debug, Clone)]
pub struct Network {
    kind: ModelKind,
    spec: FusionSpec,
    mmwave: Option<LayerStack>,
    sub6: Option<LayerStack>,
    head: LayerStack,
}

fn branch(in_dim: usize, width: usize, depth: usize, dropout: f64, rng: &mut rng::Rng) -> Result<LayerStack> {
    let mut s = LayerStack::new();
    let mut d = in_dim;
    for _ in 0..depth {
        s.push_block(d, width, dropout, rng)?;
        d = width;
    }
    Ok(s)
}

/// FusionNet: `L_m` mmWave blocks and `L_s` sub-6GHz blocks, concatenated,
/// then `L_c` classifier layers of width `|C|`.
pub fn build_fusionnet(spec: &FusionSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = rng::derive(seed, 0, Stream::Init);
    let mmwave = branch(spec.mmwave_dim, spec.width_m, spec.l_m, spec.dropout, &mut rng)?;
    let sub6 = branch(spec.sub6_dim, spec.width_s, spec.l_s, spec.dropout, &mut rng)?;
    let mut head = LayerStack::new();
    let mut d = spec.width_m + spec.width_s;
    for _ in 0..spec.l_c - 1 {
        head.push_block(d, spec.width_c, spec.dropout, &mut rng)?;
        d = spec.width_c;
    }
    head.push_dense(d, spec.width_c, &mut rng)?;
    Ok(Network {
        kind: ModelKind::Fusion,
        spec: *spec,
        mmwave: Some(mmwave),
        sub6: Some(sub6),
        head,
    })
}

/// Single-trunk comparison networks: `L_s` blocks (sub-6GHz only, or the
/// shallow model on the concatenated input) or `L_m` blocks (mmWave only),
/// followed by one dense layer to the logits.
pub fn build_comparison(kind: ModelKind, spec: &FusionSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = rng::derive(seed, 0, Stream::Init);
    let logits = |rng: &mut rng::Rng, width: usize| -> Result<LayerStack> {
        let mut h = LayerStack::new();
        h.push_dense(width, spec.width_c, rng)?;
        Ok(h)
    };
    let (mmwave, sub6, head) = match kind {
        ModelKind::Fusion => return build_fusionnet(spec, seed),
        ModelKind::Sub6 => {
            let trunk = branch(spec.sub6_dim, spec.width_s, spec.l_s, spec.dropout, &mut rng)?;
            (None, Some(trunk), logits(&mut rng, spec.width_s)?)
        }
        ModelKind::Mmwave => {
            let trunk = branch(spec.mmwave_dim, spec.width_m, spec.l_m, spec.dropout, &mut rng)?;
            (Some(trunk), None, logits(&mut rng, spec.width_m)?)
        }
        ModelKind::Shallow => {
            let in_dim = spec.sub6_dim + spec.mmwave_dim;
            let mut trunk = branch(in_dim, spec.width_s, spec.l_s, spec.dropout, &mut rng)?;
            trunk.push_dense(spec.width_s, spec.width_c, &mut rng)?;
            (None, None, trunk)
        }
    };
    Ok(Network {
        kind,
        spec: *spec,
        mmwave,
        sub6,
        head,
    })
}

/// Builds any of the four architectures.
pub fn build(kind: ModelKind, spec: &FusionSpec, seed: u64) -> Result<Network> {
    match kind {
        ModelKind::Fusion => build_fusionnet(spec, seed),
        other => build_comparison(other, spec, seed),
    }
}

/// Pure eval-mode pass through one layer.
fn infer_layer(layer: &Layer, x: &Tensor) -> Result<Tensor> {
    match layer {
        Layer::Dense(d) => dense_forward(x, d.weight(), d.bias()),
        Layer::BatchNorm(b) => b.infer(x),
        Layer::Relu(_) => {
            let data = x.data().iter().map(|&v| v.max(0.0)).collect();
            Tensor::new(x.shape(), data)
        }
        Layer::Dropout(_) => Ok(x.clone()),
    }
}

fn infer_stack(stack: &LayerStack, x: &Tensor) -> Result<Tensor> {
    let mut h = x.clone();
    for layer in stack.layers() {
        h = infer_layer(layer, &h)?;
    }
    Ok(h)
}

impl Network {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn spec(&self) -> &FusionSpec {
        &self.spec
    }

    pub fn num_beams(&self) -> usize {
        self.spec.width_c
    }

    /// Width of the concatenated input the shallow model sees.
    pub fn input_dims(&self) -> (usize, usize) {
        (self.spec.sub6_dim, self.spec.mmwave_dim)
    }

    fn stacks(&self) -> impl Iterator<Item = &LayerStack> {
        self.mmwave.iter().chain(self.sub6.iter()).chain(core::iter::once(&self.head))
    }

    fn stacks_mut(&mut self) -> impl Iterator<Item = &mut LayerStack> {
        self.mmwave
            .iter_mut()
            .chain(self.sub6.iter_mut())
            .chain(core::iter::once(&mut self.head))
    }

    /// Dense width lists `(mmWave branch, sub-6GHz branch, head)`; absent
    /// branches give empty lists.
    pub fn width_lists(&self) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let w = |s: &Option<LayerStack>| s.as_ref().map(LayerStack::dense_widths).unwrap_or_default();
        (w(&self.mmwave), w(&self.sub6), self.head.dense_widths())
    }

    pub fn flops(&self) -> u64 {
        let (m, s, c) = self.width_lists();
        nn::flops(&m, &s, &c)
    }

    pub fn dense_layer_count(&self) -> usize {
        self.stacks().map(LayerStack::dense_count).sum()
    }

    pub fn parameter_count(&self) -> usize {
        self.stacks().map(LayerStack::parameter_count).sum()
    }

    /// Layer descriptions per stack, in `(mmWave, sub-6GHz, head)` order.
    pub fn layer_kinds(&self) -> (Vec<LayerKind>, Vec<LayerKind>, Vec<LayerKind>) {
        let k = |s: &Option<LayerStack>| s.as_ref().map(LayerStack::kinds).unwrap_or_default();
        (k(&self.mmwave), k(&self.sub6), self.head.kinds())
    }

    /// All persistent values flattened in a fixed order.
    pub fn state(&self) -> Vec<f64> {
        self.stacks().flat_map(|s| s.state()).flatten().copied().collect()
    }

    pub fn load_state(&mut self, flat: &[f64]) -> Result<()> {
        let need: usize = self.stacks().map(LayerStack::state_len).sum();
        check_dim("network state", need, flat.len())?;
        let mut offset = 0;
        for s in self.stacks_mut() {
            offset += s.load_state(&flat[offset..])?;
        }
        Ok(())
    }

    pub fn params(&mut self) -> Vec<ParamRef<'_>> {
        self.stacks_mut().flat_map(|s| s.params()).collect()
    }

    pub fn set_dropout_frozen(&mut self, frozen: bool) {
        for s in self.stacks_mut() {
            s.set_dropout_frozen(frozen);
        }
    }

    fn check_inputs(&self, sub6: &Tensor, mmwave: &Tensor) -> Result<()> {
        check_dim("sub-6GHz input width", self.spec.sub6_dim, sub6.cols())?;
        check_dim("mmWave input width", self.spec.mmwave_dim, mmwave.cols())?;
        check_dim("batch rows", sub6.rows(), mmwave.rows())
    }

    /// Training-capable forward pass returning logits `[B, |C|]`.
    pub fn forward(&mut self, sub6: &Tensor, mmwave: &Tensor, mode: Mode, rng: &mut rng::Rng) -> Result<Tensor> {
        self.check_inputs(sub6, mmwave)?;
        let head_in = match self.kind {
            ModelKind::Fusion => {
                let a = self.mmwave.as_mut().expect("fusion has both branches").forward(mmwave, mode, rng)?;
                let b = self.sub6.as_mut().expect("fusion has both branches").forward(sub6, mode, rng)?;
                Tensor::hconcat(&a, &b)?
            }
            ModelKind::Sub6 => self.sub6.as_mut().expect("sub6 trunk").forward(sub6, mode, rng)?,
            ModelKind::Mmwave => self.mmwave.as_mut().expect("mmwave trunk").forward(mmwave, mode, rng)?,
            ModelKind::Shallow => Tensor::hconcat(sub6, mmwave)?,
        };
        self.head.forward(&head_in, mode, rng)
    }

    /// Backpropagates `grad_logits` from the last [`Network::forward`].
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<()> {
        let g = self.head.backward(grad_logits)?;
        match self.kind {
            ModelKind::Fusion => {
                let (gm, gs) = g.hsplit(self.spec.width_m)?;
                self.mmwave.as_mut().expect("fusion has both branches").backward(&gm)?;
                self.sub6.as_mut().expect("fusion has both branches").backward(&gs)?;
            }
            ModelKind::Sub6 => {
                self.sub6.as_mut().expect("sub6 trunk").backward(&g)?;
            }
            ModelKind::Mmwave => {
                self.mmwave.as_mut().expect("mmwave trunk").backward(&g)?;
            }
            ModelKind::Shallow => {}
        }
        Ok(())
    }

    /// Eval-mode logits without touching any layer state.
    pub fn infer(&self, sub6: &Tensor, mmwave: &Tensor) -> Result<Tensor> {
        self.check_inputs(sub6, mmwave)?;
        let head_in = match self.kind {
            ModelKind::Fusion => {
                let a = infer_stack(self.mmwave.as_ref().expect("fusion has both branches"), mmwave)?;
                let b = infer_stack(self.sub6.as_ref().expect("fusion has both branches"), sub6)?;
                Tensor::hconcat(&a, &b)?
            }
            ModelKind::Sub6 => infer_stack(self.sub6.as_ref().expect("sub6 trunk"), sub6)?,
            ModelKind::Mmwave => infer_stack(self.mmwave.as_ref().expect("mmwave trunk"), mmwave)?,
            ModelKind::Shallow => Tensor::hconcat(sub6, mmwave)?,
        };
        let logits = infer_stack(&self.head, &head_in)?;
        if !logits.is_finite() {
            return Err(Error::NonFinite("network output"));
        }
        Ok(logits)
    }
}

/// Batch tensors for the given rows of a feature set.
pub fn batch(features: &FeatureSet, rows: &[usize]) -> Result<(Tensor, Tensor, Tensor)> {
    if rows.is_empty() {
        return Err(invalid("empty batch"));
    }
    let gather = |dim: usize, row: fn(&FeatureSet, usize) -> &[f32]| -> Result<Tensor> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for &i in rows {
            data.extend(row(features, i).iter().map(|&v| v as f64));
        }
        Tensor::matrix(rows.len(), dim, data)
    };
    Ok((
        gather(features.sub6_dim, FeatureSet::sub6_row)?,
        gather(features.mmwave_dim, FeatureSet::mmwave_row)?,
        gather(features.num_beams, FeatureSet::label_row)?,
    ))
}

/// Mini-batch training settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            epochs: 60,
            base_lr: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(invalid("batch size must be at least 2"));
        }
        LrSchedule::new(self.base_lr, self.epochs)?;
        Ok(())
    }
}

/// One line of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_top1: f64,
    pub lr: f64,
}

/// Adam on shuffled mini-batches with the step schedule. Deterministic for
/// a fixed seed. A trailing batch of one sample is skipped (batchnorm needs
/// two).
pub fn train(
    net: &mut Network,
    train_set: &FeatureSet,
    val_set: Option<&FeatureSet>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    check_dim("sub-6GHz feature width", net.spec.sub6_dim, train_set.sub6_dim)?;
    check_dim("mmWave feature width", net.spec.mmwave_dim, train_set.mmwave_dim)?;
    check_dim("label width", net.num_beams(), train_set.num_beams)?;
    if train_set.len() < 2 {
        return Err(invalid("training set needs at least two samples"));
    }
    let schedule = LrSchedule::new(cfg.base_lr, cfg.epochs)?;
    let mut adam = Adam::new(AdamConfig::default());
    let mut dropout_rng = rng::derive(cfg.seed, 0, Stream::Dropout);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at(epoch);
        order.sort_unstable();
        order.shuffle(&mut rng::derive(cfg.seed, epoch as u64, Stream::Shuffle));
        let (mut loss_sum, mut seen) = (0.0, 0usize);
        for rows in order.chunks(cfg.batch_size) {
            if rows.len() < 2 {
                continue;
            }
            let (xs, xm, t) = batch(train_set, rows)?;
            let logits = net.forward(&xs, &xm, Mode::Train, &mut dropout_rng)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &t)?;
            if !loss.is_finite() {
                return Err(Error::Degenerate(format!(
                    "non-finite training loss at epoch {epoch}"
                )));
            }
            net.backward(&grad)?;
            adam.step(net.params(), lr)?;
            loss_sum += loss * rows.len() as f64;
            seen += rows.len();
        }
        let val_top1 = match val_set {
            Some(v) if !v.is_empty() => top1_accuracy(net, v)?,
            _ => f64::NAN,
        };
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / seen as f64,
            val_top1,
            lr,
        });
    }
    Ok(history)
}

/// Beam-prediction quality on a labelled set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub samples: usize,
    pub top1: f64,
    pub top3: f64,
    /// Mean of predicted-beam rate over optimal rate.
    pub rate_ratio_mean: f64,
    /// Share of predictions within one beam (cyclically) of the label.
    pub within_one_beam: f64,
}

const EVAL_CHUNK: usize = 1024;

/// Softmax probabilities `N × |C|`, row-major, in eval mode.
pub fn predict_probabilities(net: &Network, features: &FeatureSet) -> Result<Vec<f64>> {
    check_dim("sub-6GHz feature width", net.spec.sub6_dim, features.sub6_dim)?;
    check_dim("mmWave feature width", net.spec.mmwave_dim, features.mmwave_dim)?;
    let mut probs = Vec::with_capacity(features.len() * net.num_beams());
    let rows: Vec<usize> = (0..features.len()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let (xs, xm, _) = batch(features, chunk)?;
        let p = softmax_rows(&net.infer(&xs, &xm)?)?;
        probs.extend_from_slice(p.data());
    }
    Ok(probs)
}

/// Rank of `label` when beams are ordered by probability, ties going to the
/// lower index (0 = the predicted beam).
fn rank_of(p: &[f64], label: usize) -> usize {
    let pl = p[label];
    p.iter()
        .enumerate()
        .filter(|&(c, &pc)| pc > pl || (pc == pl && c < label))
        .count()
}

/// Scores a probability matrix against the labels of `features`.
pub fn score_probabilities(probs: &[f64], features: &FeatureSet, rates: &RateTable) -> Result<Metrics> {
    let n = features.len();
    let c = features.num_beams;
    if n == 0 {
        return Err(invalid("cannot evaluate an empty dataset"));
    }
    check_dim("probability matrix", n * c, probs.len())?;
    check_dim("rate table width", c, rates.num_beams)?;
    let (mut top1, mut top3, mut near, mut ratio) = (0usize, 0usize, 0usize, 0.0);
    for i in 0..n {
        let p = &probs[i * c..(i + 1) * c];
        let label = features.label(i);
        let rank = rank_of(p, label);
        let predicted = crate::beams::argmax_first(p);
        top1 += (rank == 0) as usize;
        top3 += (rank < 3) as usize;
        let d = predicted.abs_diff(label);
        near += (d.min(c - d) <= 1) as usize;
        let user = features.source[i] as usize;
        if user >= rates.users() {
            return Err(invalid("sample source outside the rate table"));
        }
        ratio += rates.ratio(user, predicted)?;
    }
    let n_f = n as f64;
    Ok(Metrics {
        samples: n,
        top1: top1 as f64 / n_f,
        top3: top3 as f64 / n_f,
        rate_ratio_mean: ratio / n_f,
        within_one_beam: near as f64 / n_f,
    })
}

/// Top-1, top-3 and rate ratio of `net` on `features`.
pub fn evaluate(net: &Network, features: &FeatureSet, rates: &RateTable) -> Result<Metrics> {
    if features.is_empty() {
        return Err(invalid("cannot evaluate an empty dataset"));
    }
    let probs = predict_probabilities(net, features)?;
    score_probabilities(&probs, features, rates)
}

/// Fraction of rows whose arg-max beam equals the label.
pub fn top1_accuracy(net: &Network, features: &FeatureSet) -> Result<f64> {
    if features.is_empty() {
        return Err(invalid("cannot evaluate an empty dataset"));
    }
    let probs = predict_probabilities(net, features)?;
    let c = features.num_beams;
    let hits = (0..features.len())
        .filter(|&i| crate::beams::argmax_first(&probs[i * c..(i + 1) * c]) == features.label(i))
        .count();
    Ok(hits as f64 / features.len() as f64)
}

/// A network bound to a fixed batch for gradient checks. The dropout
/// generator is reseeded on every pass so masks stay fixed.
pub struct NetworkProblem {
    pub network: Network,
    pub sub6: Tensor,
    pub mmwave: Tensor,
    pub targets: Tensor,
    pub seed: u64,
}

impl NetworkProblem {
    fn eval(&mut self, backward: bool) -> Result<f64> {
        let mut rng = rng::Rng::seed_from_u64(self.seed);
        let logits = self.network.forward(&self.sub6, &self.mmwave, Mode::Train, &mut rng)?;
        let (loss, grad) = softmax_cross_entropy(&logits, &self.targets)?;
        if backward {
            self.network.backward(&grad)?;
        }
        Ok(loss)
    }
}

impl Differentiable for NetworkProblem {
    fn loss_and_grad(&mut self) -> Result<f64> {
        self.eval(true)
    }

    fn loss(&mut self) -> Result<f64> {
        self.eval(false)
    }

    fn params(&mut self) -> Vec<ParamRef<'_>> {
        self.network.params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn tiny_spec() -> FusionSpec {
        FusionSpec {
            l_m: 1,
            l_s: 2,
            l_c: 2,
            width_m: 6,
            width_s: 5,
            width_c: 4,
            dropout: 0.0,
            sub6_dim: 3,
            mmwave_dim: 4,
        }
    }

    #[test]
    fn reference_fusionnet_shape() {
        let spec = FusionSpec::reference();
        // building the full-size net allocates ~40M weights; count from widths
        assert_eq!(spec.l_m + spec.l_s + spec.l_c, 13);
        let net = build_fusionnet(&FusionSpec::desk(256, 512, 64), 1).unwrap();
        assert_eq!(net.dense_layer_count(), 13);
        let (m, s, c) = net.width_lists();
        assert_eq!(net.flops(), nn::flops(&m, &s, &c));
        assert_eq!(c, vec![512, 64, 64, 64]);
    }

    #[test]
    fn width_lists_match_built_networks() {
        let spec = FusionSpec::desk(16, 24, 8);
        for kind in ModelKind::ALL {
            let net = build(kind, &spec, 0).unwrap();
            assert_eq!(spec.width_lists(kind), net.width_lists(), "{kind:?}");
            assert_eq!(spec.flops(kind), net.flops());
        }
        let r = FusionSpec::reference();
        let ratio = r.flops(ModelKind::Fusion) as f64 / r.flops(ModelKind::Sub6) as f64;
        assert!((1.8..=2.2).contains(&ratio), "{ratio}");
    }

    #[test]
    fn spec_rejects_shallow_sub6_branch() {
        let spec = FusionSpec {
            l_s: 4,
            ..FusionSpec::reference()
        };
        assert!(matches!(build_fusionnet(&spec, 0), Err(Error::Spec(_))));
    }

    #[test]
    fn forward_shapes_for_all_kinds() {
        let spec = tiny_spec();
        let mut rng = rng::derive(0, 0, Stream::Dropout);
        let xs = Tensor::matrix(5, 3, (0..15).map(|i| i as f64 * 0.1).collect()).unwrap();
        let xm = Tensor::matrix(5, 4, (0..20).map(|i| -(i as f64) * 0.05).collect()).unwrap();
        for kind in ModelKind::ALL {
            let mut net = build(kind, &spec, 3).unwrap();
            let y = net.forward(&xs, &xm, Mode::Train, &mut rng).unwrap();
            assert_eq!(y.shape(), &[5, 4]);
            let z = net.infer(&xs, &xm).unwrap();
            assert_eq!(z.shape(), &[5, 4]);
            assert!(z.is_finite());
            let p = softmax_rows(&z).unwrap();
            for i in 0..5 {
                assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
        let shallow = build(ModelKind::Shallow, &spec, 3).unwrap();
        assert_eq!(shallow.width_lists().2[0], spec.sub6_dim + spec.mmwave_dim);
    }

    #[test]
    fn sub6_only_is_about_half_of_fusion() {
        // parameter counts from widths, for the full-size spec
        let spec = FusionSpec::reference();
        let dense = |w: &[usize]| -> usize { w.windows(2).map(|p| p[0] * p[1] + p[1]).sum() };
        let bn = |w: &[usize], hidden: usize| -> usize { w[1..=hidden].iter().map(|d| 2 * d).sum() };
        let m: Vec<usize> = [spec.mmwave_dim].into_iter().chain([spec.width_m; 4]).collect();
        let s: Vec<usize> = [spec.sub6_dim].into_iter().chain([spec.width_s; 6]).collect();
        let c = vec![spec.width_m + spec.width_s, 64, 64, 64];
        let fusion = dense(&m) + bn(&m, 4) + dense(&s) + bn(&s, 6) + dense(&c) + bn(&c, 2);
        let s_only: Vec<usize> = s.iter().copied().chain([64]).collect();
        let sub6 = dense(&s_only) + bn(&s_only, 6);
        let ratio = sub6 as f64 / fusion as f64;
        assert!((0.4..=0.6).contains(&ratio), "{ratio}");

        // the same bookkeeping agrees with built networks at a small width
        let small = FusionSpec {
            width_m: 32,
            width_s: 32,
            ..FusionSpec::desk(16, 24, 8)
        };
        let f = build(ModelKind::Fusion, &small, 0).unwrap();
        let m: Vec<usize> = [24].into_iter().chain([32; 4]).collect();
        let s: Vec<usize> = [16].into_iter().chain([32; 6]).collect();
        let c = vec![64, 8, 8, 8];
        assert_eq!(
            f.parameter_count(),
            dense(&m) + bn(&m, 4) + dense(&s) + bn(&s, 6) + dense(&c) + bn(&c, 2)
        );
    }

    #[test]
    fn state_round_trip() {
        let spec = tiny_spec();
        let a = build(ModelKind::Fusion, &spec, 1).unwrap();
        let mut b = build(ModelKind::Fusion, &spec, 2).unwrap();
        assert_ne!(a.state(), b.state());
        b.load_state(&a.state()).unwrap();
        assert_eq!(a.state(), b.state());
        assert!(b.load_state(&a.state()[1..]).is_err());
    }

    #[test]
    fn fusion_gradients_match_finite_differences() {
        let spec = FusionSpec {
            dropout: 0.3,
            ..tiny_spec()
        };
        let mut r = rng::derive(5, 0, Stream::Init);
        let b = 6;
        let mut rand_t = |rows: usize, cols: usize| {
            Tensor::matrix(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect())
                .unwrap()
        };
        let sub6 = rand_t(b, 3);
        let mmwave = rand_t(b, 4);
        let mut t = vec![0.0; b * 4];
        for i in 0..b {
            t[i * 4 + (i * 3) % 4] = 1.0;
        }
        let mut problem = NetworkProblem {
            network: build(ModelKind::Fusion, &spec, 9).unwrap(),
            sub6,
            mmwave,
            targets: Tensor::matrix(b, 4, t).unwrap(),
            seed: 4,
        };
        let report = nn::grad_check(&mut problem, &nn::GradCheckConfig::default()).unwrap();
        assert!(report.max_rel_dev < 1e-3, "{report:?}");
        assert_eq!(report.checked, problem.network.parameter_count());
    }

    fn toy_set(n: usize, seed: u64) -> FeatureSet {
        // two classes separated by the sign of the first sub-6GHz feature
        let mut r = rng::derive(seed, 0, Stream::Scene);
        let mut fs = FeatureSet {
            sub6_dim: 2,
            mmwave_dim: 2,
            num_beams: 2,
            sub6: Vec::new(),
            mmwave: Vec::new(),
            labels: Vec::new(),
            source: Vec::new(),
            omega_sub6: 1.0,
            omega_mmwave: 1.0,
        };
        for i in 0..n {
            let class = i % 2;
            let x0: f32 = if class == 0 { r.random_range(0.2..1.0) } else { r.random_range(-1.0..-0.2) };
            fs.sub6.extend([x0, r.random_range(-1.0..1.0)]);
            fs.mmwave.extend([r.random_range(-1.0..1.0), x0 * 0.5]);
            fs.labels.extend(if class == 0 { [1.0, 0.0] } else { [0.0, 1.0] });
            fs.source.push(i as u32);
        }
        fs
    }

    fn toy_spec() -> FusionSpec {
        FusionSpec {
            l_m: 1,
            l_s: 2,
            l_c: 2,
            width_m: 8,
            width_s: 8,
            width_c: 2,
            dropout: 0.0,
            sub6_dim: 2,
            mmwave_dim: 2,
        }
    }

    #[test]
    fn separable_toy_is_learned() {
        let data = toy_set(64, 1);
        let cfg = TrainConfig {
            batch_size: 64,
            epochs: 100,
            base_lr: 1e-2,
            seed: 3,
        };
        let mut net = build(ModelKind::Fusion, &toy_spec(), 1).unwrap();
        let history = train(&mut net, &data, Some(&data), &cfg).unwrap();
        assert_eq!(history.len(), 100);
        assert_eq!(top1_accuracy(&net, &data).unwrap(), 1.0);
        let smooth: Vec<f64> = history
            .windows(5)
            .map(|w| w.iter().map(|r| r.loss).sum::<f64>() / 5.0)
            .collect();
        assert!(smooth.windows(2).all(|w| w[1] <= w[0]), "{smooth:?}");
    }

    #[test]
    fn zero_epochs_and_determinism() {
        let data = toy_set(20, 2);
        let spec = toy_spec();
        let mut net = build(ModelKind::Fusion, &spec, 1).unwrap();
        let before = net.state();
        let cfg0 = TrainConfig {
            batch_size: 8,
            epochs: 0,
            base_lr: 1e-3,
            seed: 1,
        };
        assert!(train(&mut net, &data, None, &cfg0).unwrap().is_empty());
        assert_eq!(net.state(), before);

        let cfg = TrainConfig { epochs: 3, ..cfg0 };
        let mut a = build(ModelKind::Fusion, &spec, 1).unwrap();
        let mut b = build(ModelKind::Fusion, &spec, 1).unwrap();
        train(&mut a, &data, None, &cfg).unwrap();
        train(&mut b, &data, None, &cfg).unwrap();
        assert_eq!(a.state(), b.state());
    }

    #[test]
    fn rank_and_metrics_definitions() {
        let p = [0.1, 0.5, 0.2, 0.2];
        assert_eq!(rank_of(&p, 1), 0);
        assert_eq!(rank_of(&p, 2), 1);
        assert_eq!(rank_of(&p, 3), 2);
        assert_eq!(rank_of(&p, 0), 3);

        let mut fs = toy_set(1, 0);
        fs.num_beams = 4;
        fs.labels = vec![0.0, 0.0, 1.0, 0.0];
        let rates = RateTable {
            num_beams: 4,
            rates: vec![1.0, 2.0, 4.0, 3.0],
        };
        let m = score_probabilities(&p, &fs, &rates).unwrap();
        assert_eq!((m.top1, m.top3), (0.0, 1.0));
        assert_eq!(m.rate_ratio_mean, 0.5);

        let perfect = score_probabilities(&fs.labels.iter().map(|&v| v as f64).collect::<Vec<_>>(), &fs, &rates).unwrap();
        assert_eq!((perfect.top1, perfect.top3, perfect.rate_ratio_mean), (1.0, 1.0, 1.0));
    }

    #[test]
    fn evaluation_is_repeatable() {
        let data = toy_set(30, 3);
        let net = build(ModelKind::Shallow, &toy_spec(), 4).unwrap();
        let rates = RateTable {
            num_beams: 2,
            rates: (0..60).map(|i| (i % 7) as f32).collect(),
        };
        let a = evaluate(&net, &data, &rates).unwrap();
        let b = evaluate(&net, &data, &rates).unwrap();
        assert_eq!(a, b);
        assert!(a.top3 >= a.top1);
        let empty = data.select(&[]);
        assert!(evaluate(&net, &empty, &rates).is_err());
    }
}
