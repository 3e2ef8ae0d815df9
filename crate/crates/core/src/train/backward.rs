//! Reverse-mode differentiation for the quantized graph.
//!
//! The forward pass records a tape (inputs, pre-activations, codes) per
//! sequence position; the backward pass walks positions and layers in
//! reverse, threading recurrent gradients across positions (full-sequence
//! backpropagation through time). Round operations use the straight-through
//! estimator; the learned scale follows the learned-step-size rule.
//!
//! Because the quantized forward is a staircase in its inputs, finite
//! differences are taken against the straight-through surrogate instead:
//! a forward mode with each quantizer's branch and rounding offset frozen
//! at the nominal parameters. That function is piecewise-linear and smooth
//! where the surrogate gradients live, so central differences check the
//! whole backward path exactly.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::quant::{LayerKind, ModelGraph, QuantParams, RecurrentForm, SequenceInputs};
use crate::tensor::{self, Tensor};

/// Per-element quantizer branch at the nominal parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    /// `x/s <= 0`: output 0, no gradient.
    Below,
    /// Strictly inside the clip range; payload is `round(x/s) - x/s`.
    In(f64),
    /// `x/s >= levels`: output `levels * scale`.
    Above,
}

fn classify(x: f64, qp: &QuantParams) -> Branch {
    let u = x / qp.scale();
    if u <= 0.0 {
        Branch::Below
    } else if u >= qp.levels() as f64 {
        Branch::Above
    } else {
        Branch::In(crate::quant::round_half_away(u) - u)
    }
}

/// Frozen quantizer branches for every site and position, captured from a
/// real forward pass.
#[derive(Debug, Clone, Default)]
pub struct FrozenOffsets {
    /// `[position][site] -> element branches`.
    sites: Vec<Vec<Vec<Branch>>>,
}

/// Quantizer behavior during a training forward pass.
#[derive(Clone, Copy)]
pub enum QuantMode<'a> {
    /// True quantization (staircase).
    Real,
    /// Straight-through surrogate with frozen branches.
    Frozen(&'a FrozenOffsets),
}

enum TapeEntry {
    Linear { input: Tensor },
    Conv { input: Tensor },
    Pool { in_shape: Vec<usize> },
    Quant { branches: Vec<Branch>, n: f64 },
    Recurrent { input: Tensor, h_prev: Tensor, branches: Vec<Branch>, n: f64 },
    Concat { main_len: usize },
}

/// Recorded forward pass.
pub struct TrainForward {
    tape: Vec<Vec<TapeEntry>>,
    pub outputs: Vec<Tensor>,
    /// Branches captured along the way (real mode).
    pub frozen: FrozenOffsets,
}

fn quant_value(x: f64, branch: Branch, qp: &QuantParams, mode: &QuantMode<'_>) -> f64 {
    let s = qp.scale();
    match mode {
        QuantMode::Real => match branch {
            Branch::Below => 0.0,
            Branch::Above => qp.levels() as f64 * s,
            Branch::In(_) => s * crate::quant::round_half_away(x / s),
        },
        QuantMode::Frozen(_) => match branch {
            Branch::Below => 0.0,
            Branch::Above => qp.levels() as f64 * s,
            // x + s*D is the surrogate the STE gradients differentiate;
            // at the capture point it equals s*round(x/s) exactly.
            Branch::In(d) => x + s * d,
        },
    }
}

fn apply_quant(
    x: &Tensor,
    qp: &QuantParams,
    mode: &QuantMode<'_>,
    k: usize,
    site: usize,
    captured: &mut FrozenOffsets,
) -> Result<(Tensor, Vec<Branch>)> {
    if !x.is_finite() {
        return Err(Error::Numeric("non-finite pre-activation during training".into()));
    }
    let branches: Vec<Branch> = match mode {
        QuantMode::Real => x.data().iter().map(|&v| classify(v, qp)).collect(),
        QuantMode::Frozen(frozen) => frozen
            .sites
            .get(k)
            .and_then(|row| row.get(site))
            .ok_or_else(|| Error::State("frozen offsets do not cover this site".into()))?
            .clone(),
    };
    if matches!(mode, QuantMode::Real) {
        while captured.sites.len() <= k {
            captured.sites.push(Vec::new());
        }
        captured.sites[k].push(branches.clone());
    }
    let data = x
        .data()
        .iter()
        .zip(&branches)
        .map(|(&v, &b)| quant_value(v, b, qp, mode))
        .collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, branches))
}

/// Forward pass with tape recording. Works on substituted (not yet
/// flag-marked) models; spiking layers are rejected.
pub fn forward_train(
    model: &ModelGraph,
    seq: &SequenceInputs,
    mode: QuantMode<'_>,
) -> Result<TrainForward> {
    seq.validate()?;
    let mut tape = Vec::with_capacity(seq.positions());
    let mut outputs = Vec::with_capacity(seq.positions());
    let mut captured = FrozenOffsets::default();
    let mut hidden: BTreeMap<usize, Tensor> = BTreeMap::new();

    for k in 0..seq.positions() {
        let mut entries = Vec::with_capacity(model.layers.len());
        let mut site = 0usize;
        let mut x = seq.steps[k].clone();
        for (li, layer) in model.layers.iter().enumerate() {
            match &layer.kind {
                LayerKind::Linear { weight, bias } => {
                    let flat = x.reshaped(vec![x.len()])?;
                    entries.push(TapeEntry::Linear { input: flat.clone() });
                    let mut out = tensor::matvec(weight, &flat)?;
                    out.add_assign(bias)?;
                    x = out;
                }
                LayerKind::Conv2d { kernels, bias, stride, padding } => {
                    entries.push(TapeEntry::Conv { input: x.clone() });
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
                LayerKind::AvgPool { k: kk } => {
                    entries.push(TapeEntry::Pool { in_shape: x.shape().to_vec() });
                    x = tensor::avg_pool2d(&x, *kk)?;
                }
                LayerKind::QuantRelu { qp } => {
                    let (out, branches) = apply_quant(&x, qp, &mode, k, site, &mut captured)?;
                    entries.push(TapeEntry::Quant { branches, n: x.len() as f64 });
                    site += 1;
                    x = out;
                }
                LayerKind::Recurrent(spec) => {
                    let qp = spec.qp.as_ref().ok_or_else(|| {
                        Error::State(format!("recurrent layer '{}' has no quantizer", layer.name))
                    })?;
                    let h_prev = hidden
                        .entry(li)
                        .or_insert_with(|| Tensor::zeros(vec![spec.hidden_size()]))
                        .clone();
                    let flat = x.reshaped(vec![x.len()])?;
                    let u = crate::quant::recurrent_preactivation(&flat, &h_prev, spec)?;
                    let (h_k, branches) = apply_quant(&u, qp, &mode, k, site, &mut captured)?;
                    entries.push(TapeEntry::Recurrent {
                        input: flat,
                        h_prev,
                        branches,
                        n: u.len() as f64,
                    });
                    site += 1;
                    hidden.insert(li, h_k.clone());
                    x = h_k;
                }
                LayerKind::Concat { aux, clip } => {
                    let aux_t = seq
                        .aux
                        .get(aux)
                        .and_then(|s| s.get(k))
                        .ok_or_else(|| Error::Argument(format!("missing aux input '{aux}'")))?;
                    let clipped = aux_t.map(|v| v.clamp(clip.0, clip.1));
                    let main_len = x.len();
                    entries.push(TapeEntry::Concat { main_len });
                    let flat = x.reshaped(vec![main_len])?;
                    let aux_flat = clipped.reshaped(vec![clipped.len()])?;
                    x = tensor::concat(&[&flat, &aux_flat], 0)?;
                }
                other => {
                    return Err(Error::State(format!(
                        "layer '{}' ({}) is not trainable; run the substitution pipeline first",
                        layer.name,
                        other.kind_name()
                    )));
                }
            }
        }
        tape.push(entries);
        outputs.push(x);
    }
    Ok(TrainForward { tape, outputs, frozen: captured })
}

/// Parameter gradients in flat parameter order (see `params_flat`).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub flat: Vec<f64>,
}

/// One contiguous block in the flat parameter vector.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub layer: usize,
    pub field: &'static str,
    pub offset: usize,
    pub len: usize,
    pub is_scale: bool,
}

/// Flat traversal layout of every trainable parameter (weights, biases,
/// quantizer scales).
pub fn param_layout(model: &ModelGraph) -> Vec<ParamBlock> {
    let mut blocks = Vec::new();
    let mut offset = 0usize;
    let mut push = |layer: usize, field: &'static str, len: usize, is_scale: bool| {
        blocks.push(ParamBlock { layer, field, offset, len, is_scale });
        offset += len;
    };
    for (li, layer) in model.layers.iter().enumerate() {
        match &layer.kind {
            LayerKind::Linear { weight, bias } => {
                push(li, "weight", weight.len(), false);
                push(li, "bias", bias.len(), false);
            }
            LayerKind::Conv2d { kernels, bias, .. } => {
                push(li, "kernels", kernels.len(), false);
                push(li, "bias", bias.len(), false);
            }
            LayerKind::QuantRelu { .. } => push(li, "scale", 1, true),
            LayerKind::Recurrent(spec) => {
                push(li, "w_ih", spec.w_ih.len(), false);
                push(li, "b_ih", spec.b_ih.len(), false);
                push(li, "w_hh", spec.w_hh.len(), false);
                push(li, "b_hh", spec.b_hh.len(), false);
                if spec.qp.is_some() {
                    push(li, "scale", 1, true);
                }
            }
            _ => {}
        }
    }
    blocks
}

/// All trainable parameters as one flat vector.
pub fn params_flat(model: &ModelGraph) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in &model.layers {
        match &layer.kind {
            LayerKind::Linear { weight, bias } => {
                out.extend_from_slice(weight.data());
                out.extend_from_slice(bias.data());
            }
            LayerKind::Conv2d { kernels, bias, .. } => {
                out.extend_from_slice(kernels.data());
                out.extend_from_slice(bias.data());
            }
            LayerKind::QuantRelu { qp } => out.push(qp.scale()),
            LayerKind::Recurrent(spec) => {
                out.extend_from_slice(spec.w_ih.data());
                out.extend_from_slice(spec.b_ih.data());
                out.extend_from_slice(spec.w_hh.data());
                out.extend_from_slice(spec.b_hh.data());
                if let Some(qp) = &spec.qp {
                    out.push(qp.scale());
                }
            }
            _ => {}
        }
    }
    out
}

/// Write a flat parameter vector back into the model.
pub fn set_params_flat(model: &mut ModelGraph, flat: &[f64]) -> Result<()> {
    let mut cursor = 0usize;
    let take = |data: &mut [f64], cursor: &mut usize| {
        data.copy_from_slice(&flat[*cursor..*cursor + data.len()]);
        *cursor += data.len();
    };
    for layer in &mut model.layers {
        match &mut layer.kind {
            LayerKind::Linear { weight, bias } => {
                take(weight.data_mut(), &mut cursor);
                take(bias.data_mut(), &mut cursor);
            }
            LayerKind::Conv2d { kernels, bias, .. } => {
                take(kernels.data_mut(), &mut cursor);
                take(bias.data_mut(), &mut cursor);
            }
            LayerKind::QuantRelu { qp } => {
                qp.set_scale(flat[cursor].max(1e-12))?;
                cursor += 1;
            }
            LayerKind::Recurrent(spec) => {
                take(spec.w_ih.data_mut(), &mut cursor);
                take(spec.b_ih.data_mut(), &mut cursor);
                take(spec.w_hh.data_mut(), &mut cursor);
                take(spec.b_hh.data_mut(), &mut cursor);
                if let Some(qp) = &mut spec.qp {
                    qp.set_scale(flat[cursor].max(1e-12))?;
                    cursor += 1;
                }
            }
            _ => {}
        }
    }
    if cursor != flat.len() {
        return Err(Error::Dimension(format!(
            "flat vector holds {} values, model needs {cursor}",
            flat.len()
        )));
    }
    Ok(())
}

struct GradSink {
    flat: Vec<f64>,
    layout: Vec<ParamBlock>,
}

impl GradSink {
    fn block(&mut self, layer: usize, field: &str) -> &mut [f64] {
        let b = self
            .layout
            .iter()
            .find(|b| b.layer == layer && b.field == field)
            .expect("gradient block exists for every trainable field");
        &mut self.flat[b.offset..b.offset + b.len]
    }

    fn add_scale(&mut self, layer: usize, v: f64) {
        self.block(layer, "scale")[0] += v;
    }
}

/// Straight-through gradient through a quantizer: pass-through inside the
/// clip range, zero outside; scale gradient per the learned-step-size
/// rule, with gradient scale 1/sqrt(N * levels).
fn quant_backward(
    upstream: &Tensor,
    branches: &[Branch],
    n_elems: f64,
    qp: &QuantParams,
) -> (Tensor, f64) {
    let levels = qp.levels() as f64;
    let g = 1.0 / (n_elems * levels).sqrt();
    let mut grad_x = Tensor::zeros(upstream.shape().to_vec());
    let mut grad_scale = 0.0;
    for (i, (&up, &branch)) in upstream.data().iter().zip(branches).enumerate() {
        match branch {
            Branch::Below => {}
            Branch::Above => grad_scale += up * levels * g,
            Branch::In(d) => {
                grad_x.data_mut()[i] = up;
                grad_scale += up * d * g;
            }
        }
    }
    (grad_x, grad_scale)
}

fn conv_backward(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
    g: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (c, h, w) = match input.shape()[..] {
        [h, w] => (1, h, w),
        [c, h, w] => (c, h, w),
        _ => return Err(Error::Dimension("conv backward input rank".into())),
    };
    let &[f, _, kh, kw] = kernels.shape() else {
        return Err(Error::Dimension("conv backward kernel rank".into()));
    };
    // The incoming gradient may have been flattened downstream; recover the
    // output geometry from the forward shapes.
    let ho = (h + 2 * padding - kh) / stride + 1;
    let wo = (w + 2 * padding - kw) / stride + 1;
    if g.len() != f * ho * wo {
        return Err(Error::Dimension(format!(
            "conv backward gradient of {} elements for {f}x{ho}x{wo} output",
            g.len()
        )));
    }
    let mut gk = Tensor::zeros(kernels.shape().to_vec());
    let mut gb = Tensor::zeros(vec![f]);
    let mut gin = Tensor::zeros(input.shape().to_vec());
    for of in 0..f {
        for oy in 0..ho {
            for ox in 0..wo {
                let gv = g.data()[(of * ho + oy) * wo + ox];
                if gv == 0.0 {
                    continue;
                }
                gb.data_mut()[of] += gv;
                for ic in 0..c {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let in_idx = (ic * h + iy as usize) * w + ix as usize;
                            let k_idx = ((of * c + ic) * kh + ky) * kw + kx;
                            gk.data_mut()[k_idx] += gv * input.data()[in_idx];
                            gin.data_mut()[in_idx] += gv * kernels.data()[k_idx];
                        }
                    }
                }
            }
        }
    }
    Ok((gk, gb, gin))
}

fn pool_backward(g: &Tensor, in_shape: &[usize], k: usize) -> Result<Tensor> {
    if k == 1 {
        return g.reshaped(in_shape.to_vec());
    }
    let (c, h, w) = match in_shape {
        [h, w] => (1usize, *h, *w),
        [c, h, w] => (*c, *h, *w),
        _ => return Err(Error::Dimension("pool backward input rank".into())),
    };
    let (ho, wo) = (h / k, w / k);
    let norm = 1.0 / (k * k) as f64;
    let mut gin = Tensor::zeros(in_shape.to_vec());
    for ic in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let gv = g.data()[(ic * ho + oy) * wo + ox] * norm;
                for dy in 0..k {
                    for dx in 0..k {
                        gin.data_mut()[(ic * h + oy * k + dy) * w + ox * k + dx] += gv;
                    }
                }
            }
        }
    }
    Ok(gin)
}

fn outer_add(acc: &mut [f64], g: &Tensor, x: &Tensor) {
    let cols = x.len();
    for (i, &gv) in g.data().iter().enumerate() {
        if gv == 0.0 {
            continue;
        }
        let row = &mut acc[i * cols..(i + 1) * cols];
        for (a, &xv) in row.iter_mut().zip(x.data()) {
            *a += gv * xv;
        }
    }
}

fn add_slice(acc: &mut [f64], g: &Tensor) {
    for (a, &v) in acc.iter_mut().zip(g.data()) {
        *a += v;
    }
}

/// Gradient of the quantizer output with respect to its input and scale:
/// straight-through inside the clip range, zero outside; the scale follows
/// the learned-step-size rule. Standalone form of the rule the full
/// backward pass applies at every site.
pub fn quantize_act_backward(
    x: &Tensor,
    qp: &QuantParams,
    upstream: &Tensor,
) -> Result<(Tensor, f64)> {
    if x.shape() != upstream.shape() {
        return Err(Error::Dimension(format!(
            "input shape {:?} against upstream {:?}",
            x.shape(),
            upstream.shape()
        )));
    }
    let branches: Vec<Branch> = x.data().iter().map(|&v| classify(v, qp)).collect();
    Ok(quant_backward(upstream, &branches, x.len() as f64, qp))
}

impl TrainForward {
    /// Per-site `(layer index, element count, levels)` in site order,
    /// taken from the first recorded position.
    pub fn site_counts(&self, model: &ModelGraph) -> Vec<(usize, f64, u32)> {
        let mut out = Vec::new();
        let Some(row) = self.tape.first() else { return out };
        let mut entries = row.iter();
        for (li, layer) in model.layers.iter().enumerate() {
            let entry = entries.next();
            match (&layer.kind, entry) {
                (LayerKind::QuantRelu { qp }, Some(TapeEntry::Quant { n, .. })) => {
                    out.push((li, *n, qp.levels()));
                }
                (LayerKind::Recurrent(spec), Some(TapeEntry::Recurrent { n, .. })) => {
                    if let Some(qp) = &spec.qp {
                        out.push((li, *n, qp.levels()));
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// Reverse-mode gradients for one recorded sequence. `upstream[k]` is the
/// loss gradient at position k's output (None for unsupervised positions).
pub fn backward(
    model: &ModelGraph,
    fwd: &TrainForward,
    upstream: &[Option<Tensor>],
) -> Result<Gradients> {
    let layout = param_layout(model);
    let total: usize = layout.iter().map(|b| b.len).sum();
    let mut sink = GradSink { flat: vec![0.0; total], layout };
    // Gradient flowing into each recurrent layer's hidden state from the
    // following position.
    let mut pending_rec: BTreeMap<usize, Tensor> = BTreeMap::new();

    for k in (0..fwd.tape.len()).rev() {
        let mut g = match &upstream[k] {
            Some(t) => t.clone(),
            None => Tensor::zeros(fwd.outputs[k].shape().to_vec()),
        };
        let mut entry_iter = fwd.tape[k].iter().rev();
        for (li, layer) in model.layers.iter().enumerate().rev() {
            let entry = entry_iter.next().expect("tape entry per layer");
            match (&layer.kind, entry) {
                (LayerKind::Linear { weight, .. }, TapeEntry::Linear { input }) => {
                    outer_add(sink.block(li, "weight"), &g, input);
                    add_slice(sink.block(li, "bias"), &g);
                    g = tensor::matvec_t(weight, &g)?;
                }
                (
                    LayerKind::Conv2d { kernels, stride, padding, .. },
                    TapeEntry::Conv { input },
                ) => {
                    let (gk, gb, gin) = conv_backward(input, kernels, *stride, *padding, &g)?;
                    add_slice(sink.block(li, "kernels"), &gk);
                    add_slice(sink.block(li, "bias"), &gb);
                    g = gin;
                }
                (LayerKind::AvgPool { k: kk }, TapeEntry::Pool { in_shape }) => {
                    g = pool_backward(&g, in_shape, *kk)?;
                }
                (LayerKind::QuantRelu { qp }, TapeEntry::Quant { branches, n }) => {
                    let (gx, gs) = quant_backward(&g, branches, *n, qp);
                    sink.add_scale(li, gs);
                    g = gx;
                }
                (
                    LayerKind::Recurrent(spec),
                    TapeEntry::Recurrent { input, h_prev, branches, n },
                ) => {
                    let qp = spec.qp.as_ref().expect("trainable recurrent has a quantizer");
                    let mut incoming = g;
                    if let Some(rec) = pending_rec.remove(&li) {
                        incoming.add_assign(&rec)?;
                    }
                    let (gu, gs) = quant_backward(&incoming, branches, *n, qp);
                    sink.add_scale(li, gs);
                    outer_add(sink.block(li, "w_ih"), &gu, input);
                    add_slice(sink.block(li, "b_ih"), &gu);
                    add_slice(sink.block(li, "b_hh"), &gu);
                    match spec.form {
                        RecurrentForm::Dense => {
                            outer_add(sink.block(li, "w_hh"), &gu, h_prev);
                            pending_rec.insert(li, tensor::matvec_t(&spec.w_hh, &gu)?);
                        }
                        RecurrentForm::Diagonal => {
                            let ghh = sink.block(li, "w_hh");
                            for (g, (&gv, &hv)) in
                                ghh.iter_mut().zip(gu.data().iter().zip(h_prev.data()))
                            {
                                *g += gv * hv;
                            }
                            let rec: Vec<f64> = gu
                                .data()
                                .iter()
                                .zip(spec.w_hh.data())
                                .map(|(g, w)| g * w)
                                .collect();
                            pending_rec.insert(li, Tensor::new(vec![gu.len()], rec)?);
                        }
                    }
                    g = tensor::matvec_t(&spec.w_ih, &gu)?;
                }
                (LayerKind::Concat { .. }, TapeEntry::Concat { main_len }) => {
                    // Aux inputs are data, not parameters: drop their slice.
                    g = Tensor::new(vec![*main_len], g.data()[..*main_len].to_vec())?;
                }
                _ => {
                    return Err(Error::State(format!(
                        "tape does not match layer '{}'",
                        layer.name
                    )));
                }
            }
        }
    }
    Ok(Gradients { flat: sink.flat })
}
