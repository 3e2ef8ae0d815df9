//! Desk-scale quantization-aware training: reverse-mode gradients with a
//! straight-through estimator at every round, learned step sizes, Adam,
//! cross-entropy and mean-square-error losses.

mod adam;
mod backward;

pub use adam::{adam_step, AdamState};
pub use backward::{
    quantize_act_backward,
    backward, forward_train, param_layout, params_flat, set_params_flat, Branch, FrozenOffsets,
    Gradients, ParamBlock, QuantMode, TrainForward,
};

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{SequenceSample, Target};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::quant::{LayerKind, ModelGraph, SequenceInputs};
use crate::tensor::Tensor;

/// Task loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Softmax cross-entropy on the last position's logits.
    CrossEntropy,
    /// Mean square error over all supervised positions.
    Mse,
}

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    /// Cosine annealing from the base rate to zero over the run.
    Cosine,
    Constant,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub loss: Loss,
    pub seed: u64,
    pub schedule: LrSchedule,
    /// Global-norm gradient clip, applied to recurrent models.
    pub grad_clip_norm: Option<f64>,
    /// Optional magnitude clamp on element-wise recurrent weights.
    pub recurrent_clamp: Option<f64>,
    /// Calibrate quantizer scales on the first batch before training.
    pub calibrate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            loss: Loss::CrossEntropy,
            seed: 1,
            schedule: LrSchedule::Cosine,
            grad_clip_norm: Some(1.0),
            recurrent_clamp: None,
            calibrate: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One epoch of history.
#[derive(Debug, Clone, Copy)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    /// Classification accuracy, when the task has class targets.
    pub accuracy: Option<f64>,
}

/// Training output: the trained (and quantize-flagged) model plus the
/// per-epoch history. `diverged` carries the epoch at which a non-finite
/// loss appeared; the model is then the last good checkpoint.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: ModelGraph,
    pub history: Vec<EpochMetrics>,
    pub diverged: Option<usize>,
}

/// Bind a sample's aux stream to the model's first declared aux slot.
pub fn bind_sample(model: &ModelGraph, sample: &SequenceSample) -> SequenceInputs {
    match model.aux_inputs.first() {
        Some(aux) if sample.aux.is_some() => sample.to_inputs(&aux.name),
        _ => SequenceInputs::new(sample.inputs.clone()),
    }
}

/// Loss value and per-position output gradients for one sample.
pub fn loss_and_grad(
    outputs: &[Tensor],
    target: &Target,
    loss: Loss,
) -> Result<(f64, Vec<Option<Tensor>>)> {
    match (loss, target) {
        (Loss::CrossEntropy, Target::Class(class)) => {
            let logits = outputs.last().ok_or_else(|| Error::Argument("empty sequence".into()))?;
            if *class >= logits.len() {
                return Err(Error::Argument(format!(
                    "class {class} out of range for {} logits",
                    logits.len()
                )));
            }
            let max = logits.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.data().iter().map(|&z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let loss_v = -(exps[*class] / sum).ln();
            let mut grad = Tensor::zeros(logits.shape().to_vec());
            for (i, (g, e)) in grad.data_mut().iter_mut().zip(&exps).enumerate() {
                *g = e / sum - if i == *class { 1.0 } else { 0.0 };
            }
            let mut grads: Vec<Option<Tensor>> = vec![None; outputs.len()];
            *grads.last_mut().unwrap() = Some(grad);
            Ok((loss_v, grads))
        }
        (Loss::Mse, Target::PerPosition(targets)) => {
            if targets.len() != outputs.len() {
                return Err(Error::Argument(format!(
                    "{} targets for {} positions",
                    targets.len(),
                    outputs.len()
                )));
            }
            let total: usize = outputs.iter().map(Tensor::len).sum();
            let norm = 1.0 / total as f64;
            let mut loss_v = 0.0;
            let mut grads = Vec::with_capacity(outputs.len());
            for (o, t) in outputs.iter().zip(targets) {
                let diff = o.sub(t)?;
                loss_v += diff.data().iter().map(|d| d * d).sum::<f64>() * norm;
                grads.push(Some(diff.scaled(2.0 * norm)));
            }
            Ok((loss_v, grads))
        }
        (Loss::CrossEntropy, Target::PerPosition(_)) => {
            Err(Error::Argument("cross-entropy needs class targets".into()))
        }
        (Loss::Mse, Target::Class(_)) => {
            Err(Error::Argument("mean-square error needs per-position targets".into()))
        }
    }
}

/// Mean loss (and accuracy for class targets) over a dataset, using the
/// training forward pass.
pub fn evaluate(model: &ModelGraph, dataset: &[SequenceSample], loss: Loss) -> Result<(f64, Option<f64>)> {
    if dataset.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    let mut classes = 0usize;
    for sample in dataset {
        let seq = bind_sample(model, sample);
        let fwd = forward_train(model, &seq, QuantMode::Real)?;
        let (l, _) = loss_and_grad(&fwd.outputs, &sample.target, loss)?;
        total += l;
        if let Target::Class(c) = &sample.target {
            classes += 1;
            if argmax(fwd.outputs.last().unwrap()) == *c {
                correct += 1;
            }
        }
    }
    let acc = (classes > 0).then(|| correct as f64 / classes as f64);
    Ok((total / dataset.len() as f64, acc))
}

pub fn argmax(t: &Tensor) -> usize {
    t.data()
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Learned-step-size style scale initialization: `2 * mean|u| / sqrt(n)`
/// over one calibration batch, where `u` is the pre-activation reaching
/// each quantizer. Runs the quantized forward with current (sentinel)
/// scales purely to observe magnitudes, then overwrites every scale.
pub fn calibrate_scales(model: &mut ModelGraph, batch: &[SequenceSample]) -> Result<()> {
    let sums = observe_preactivations(model, batch)?;
    let mut site = 0usize;
    for layer in &mut model.layers {
        match &mut layer.kind {
            LayerKind::QuantRelu { qp } => {
                let (sum_abs, count) = sums[site];
                if count > 0 {
                    let init = 2.0 * (sum_abs / count as f64) / (qp.levels() as f64).sqrt();
                    qp.set_scale(init.max(1e-5))?;
                }
                site += 1;
            }
            LayerKind::Recurrent(spec) => {
                if let Some(qp) = &mut spec.qp {
                    let (sum_abs, count) = sums[site];
                    if count > 0 {
                        let init = 2.0 * (sum_abs / count as f64) / (qp.levels() as f64).sqrt();
                        qp.set_scale(init.max(1e-5))?;
                    }
                }
                site += 1;
            }
            _ => {}
        }
    }
    Ok(())
}

/// Sum of |pre-activation| and element count per quantized site, observed
/// with plain ReLU pass-through at every site (the float network the
/// initialization rule is defined over).
fn observe_preactivations(
    model: &ModelGraph,
    batch: &[SequenceSample],
) -> Result<Vec<(f64, usize)>> {
    use crate::tensor;
    let mut sums = vec![(0.0, 0usize); model.spiking_depth()];
    for sample in batch {
        let seq = bind_sample(model, sample);
        seq.validate()?;
        let mut hidden: std::collections::BTreeMap<usize, Tensor> = Default::default();
        for k in 0..seq.positions() {
            let mut x = seq.steps[k].clone();
            let mut site = 0usize;
            for (li, layer) in model.layers.iter().enumerate() {
                match &layer.kind {
                    LayerKind::Linear { weight, bias } => {
                        let flat = x.reshaped(vec![x.len()])?;
                        let mut out = tensor::matvec(weight, &flat)?;
                        out.add_assign(bias)?;
                        x = out;
                    }
                    LayerKind::Conv2d { kernels, bias, stride, padding } => {
                        let mut out = tensor::conv2d(&x, kernels, *stride, *padding)?;
                        let &[f, ho, wo] = out.shape() else { unreachable!() };
                        let plane = ho * wo;
                        for ch in 0..f {
                            let b = bias.data()[ch];
                            for v in &mut out.data_mut()[ch * plane..(ch + 1) * plane] {
                                *v += b;
                            }
                        }
                        x = out;
                    }
                    LayerKind::AvgPool { k } => x = tensor::avg_pool2d(&x, *k)?,
                    LayerKind::QuantRelu { .. } => {
                        sums[site].0 += x.data().iter().map(|v| v.abs()).sum::<f64>();
                        sums[site].1 += x.len();
                        site += 1;
                        x = x.map(|v| v.max(0.0));
                    }
                    LayerKind::Recurrent(spec) => {
                        let h_prev = hidden
                            .entry(li)
                            .or_insert_with(|| Tensor::zeros(vec![spec.hidden_size()]))
                            .clone();
                        let flat = x.reshaped(vec![x.len()])?;
                        let u = crate::quant::recurrent_preactivation(&flat, &h_prev, spec)?;
                        sums[site].0 += u.data().iter().map(|v| v.abs()).sum::<f64>();
                        sums[site].1 += u.len();
                        site += 1;
                        let h = u.map(|v| v.max(0.0));
                        hidden.insert(li, h.clone());
                        x = h;
                    }
                    LayerKind::Concat { aux, clip } => {
                        let aux_t = seq
                            .aux
                            .get(aux)
                            .and_then(|s| s.get(k))
                            .ok_or_else(|| {
                                Error::Argument(format!("missing aux input '{aux}'"))
                            })?;
                        let clipped = aux_t.map(|v| v.clamp(clip.0, clip.1));
                        let flat = x.reshaped(vec![x.len()])?;
                        let aux_flat = clipped.reshaped(vec![clipped.len()])?;
                        x = tensor::concat(&[&flat, &aux_flat], 0)?;
                    }
                    other => {
                        return Err(Error::State(format!(
                            "layer '{}' ({}) is not trainable",
                            layer.name,
                            other.kind_name()
                        )));
                    }
                }
            }
        }
    }
    Ok(sums)
}

fn cosine_lr(base: f64, epoch: usize, total: usize) -> f64 {
    if total <= 1 {
        return base;
    }
    let t = epoch as f64 / total as f64;
    base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Quantization-aware training. Deterministic given the seed; returns the
/// trained model with the quantized flag set, plus loss/accuracy history.
pub fn train(model: &ModelGraph, dataset: &[SequenceSample], cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(TrainResult { model: model.clone(), history: Vec::new(), diverged: None });
    }
    if dataset.is_empty() {
        return Err(Error::Argument("empty dataset".into()));
    }
    let mut model = model.clone();
    if cfg.calibrate {
        let calib = &dataset[..dataset.len().min(cfg.batch_size)];
        calibrate_scales(&mut model, calib)?;
    }

    let mut params = params_flat(&model);
    let layout = param_layout(&model);
    let mut state = AdamState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let clip = model.has_recurrence().then_some(cfg.grad_clip_norm).flatten();
    let mut checkpoint = model.clone();

    for epoch in 0..cfg.epochs {
        let lr = match cfg.schedule {
            LrSchedule::Cosine => cosine_lr(cfg.learning_rate, epoch, cfg.epochs),
            LrSchedule::Constant => cfg.learning_rate,
        };
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        let mut classes = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad_acc = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for &idx in batch {
                let sample = &dataset[idx];
                let seq = bind_sample(&model, sample);
                let fwd = forward_train(&model, &seq, QuantMode::Real)?;
                let (l, upstream) = loss_and_grad(&fwd.outputs, &sample.target, cfg.loss)?;
                batch_loss += l;
                if let Target::Class(c) = &sample.target {
                    classes += 1;
                    if argmax(fwd.outputs.last().unwrap()) == *c {
                        correct += 1;
                    }
                }
                let grads = backward(&model, &fwd, &upstream)?;
                for (a, g) in grad_acc.iter_mut().zip(&grads.flat) {
                    *a += g;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grad_acc {
                *g *= inv;
            }
            if let Some(max_norm) = clip {
                let norm = grad_acc.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > max_norm {
                    let scale = max_norm / norm;
                    for g in &mut grad_acc {
                        *g *= scale;
                    }
                }
            }
            adam_step(
                &mut params,
                &grad_acc,
                &mut state,
                lr,
                cfg.beta1,
                cfg.beta2,
                cfg.epsilon,
            )?;
            clamp_params(&mut params, &layout, cfg.recurrent_clamp);
            set_params_flat(&mut model, &params)?;
            epoch_loss += batch_loss;
        }

        let mean_loss = epoch_loss / dataset.len() as f64;
        if !mean_loss.is_finite() {
            return Ok(TrainResult {
                model: checkpoint,
                history,
                diverged: Some(epoch),
            });
        }
        history.push(EpochMetrics {
            epoch,
            loss: mean_loss,
            accuracy: (classes > 0).then(|| correct as f64 / classes as f64),
        });
        checkpoint = model.clone();
    }

    model.mark_quantized()?;
    Ok(TrainResult { model, history, diverged: None })
}

/// Clamp quantizer scales away from zero and optionally bound element-wise
/// recurrent weights.
fn clamp_params(params: &mut [f64], layout: &[ParamBlock], recurrent_clamp: Option<f64>) {
    for block in layout {
        if block.is_scale {
            let p = &mut params[block.offset];
            if p.is_nan() || *p < 1e-5 {
                *p = 1e-5;
            }
        } else if block.field == "w_hh" {
            if let Some(c) = recurrent_clamp {
                for p in &mut params[block.offset..block.offset + block.len] {
                    *p = p.clamp(-c, c);
                }
            }
        }
    }
}

/// Write history as `epoch,loss,accuracy` (accuracy blank for regression).
pub fn write_metrics_csv(history: &[EpochMetrics], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,loss,accuracy\n");
    for m in history {
        match m.accuracy {
            Some(a) => writeln!(out, "{},{},{}", m.epoch, m.loss, a).expect("string write"),
            None => writeln!(out, "{},{},", m.epoch, m.loss).expect("string write"),
        }
    }
    write_atomic(path, out.as_bytes())
}
