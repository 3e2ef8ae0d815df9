//! Quantized-graph executor and the pipeline substitution steps.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::quant::graph::{ActivationKind, LayerKind, ModelGraph, RecurrentSpec};
use crate::quant::{quantize_act, QuantParams};
use crate::tensor::{self, Codes, Tensor};

/// One model-level input: a sequence of per-position tensors plus named
/// auxiliary analog streams of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceInputs {
    pub steps: Vec<Tensor>,
    pub aux: BTreeMap<String, Vec<Tensor>>,
}

impl SequenceInputs {
    pub fn new(steps: Vec<Tensor>) -> Self {
        SequenceInputs { steps, aux: BTreeMap::new() }
    }

    pub fn with_aux(mut self, name: impl Into<String>, stream: Vec<Tensor>) -> Self {
        self.aux.insert(name.into(), stream);
        self
    }

    pub fn positions(&self) -> usize {
        self.steps.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::Argument("sequence must have at least one position".into()));
        }
        for (name, stream) in &self.aux {
            if stream.len() != self.steps.len() {
                return Err(Error::Argument(format!(
                    "aux stream '{name}' has {} positions, sequence has {}",
                    stream.len(),
                    self.steps.len()
                )));
            }
        }
        Ok(())
    }
}

/// Codes and real activations recorded at one quantized site, indexed by
/// sequence position.
#[derive(Debug, Clone)]
pub struct LayerActivations {
    pub name: String,
    pub scale: f64,
    pub codes: Vec<Codes>,
    pub values: Vec<Tensor>,
}

/// Everything the quantized executor records in one pass.
#[derive(Debug, Clone)]
pub struct ActivationRecord {
    pub layers: Vec<LayerActivations>,
    /// Final-layer output at every sequence position.
    pub outputs: Vec<Tensor>,
}

impl ActivationRecord {
    pub fn site(&self, name: &str) -> Option<&LayerActivations> {
        self.layers.iter().find(|l| l.name == name)
    }
}

/// Clip every element of `x` into `[lo, hi]`.
pub(crate) fn clip_tensor(x: &Tensor, lo: f64, hi: f64) -> Tensor {
    x.map(|v| v.clamp(lo, hi))
}

pub(crate) fn apply_linear(weight: &Tensor, bias: &Tensor, x: &Tensor) -> Result<Tensor> {
    let mut out = tensor::matvec(weight, x)?;
    out.add_assign(bias)?;
    Ok(out)
}

pub(crate) fn apply_conv(
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
    x: &Tensor,
) -> Result<Tensor> {
    let mut out = tensor::conv2d(x, kernels, stride, padding)?;
    let &[f, ho, wo] = out.shape() else { unreachable!("conv2d returns rank 3") };
    if bias.len() != f {
        return Err(Error::Dimension(format!(
            "conv bias has {} entries for {f} output channels",
            bias.len()
        )));
    }
    let plane = ho * wo;
    for ch in 0..f {
        let b = bias.data()[ch];
        for v in &mut out.data_mut()[ch * plane..(ch + 1) * plane] {
            *v += b;
        }
    }
    Ok(out)
}

pub(crate) fn fetch_aux<'a>(
    seq: &'a SequenceInputs,
    name: &str,
    k: usize,
) -> Result<&'a Tensor> {
    seq.aux
        .get(name)
        .and_then(|stream| stream.get(k))
        .ok_or_else(|| Error::Argument(format!("missing aux input '{name}' at position {k}")))
}

/// One step of the quantized recurrent cell:
/// `h_k = scale * clip(round((W_ih x_k + b_ih + W_hh h_prev + b_hh)/scale), 0, levels)`.
pub fn qrecurrent_step(
    x_k: &Tensor,
    h_prev: &Tensor,
    spec: &RecurrentSpec,
) -> Result<(Tensor, Codes)> {
    let qp = spec
        .qp
        .as_ref()
        .ok_or_else(|| Error::State("recurrent cell has no quantizer parameters".into()))?;
    let u = recurrent_preactivation(x_k, h_prev, spec)?;
    let (codes, values) = quantize_act(&u, qp)?;
    Ok((values, codes))
}

pub(crate) fn recurrent_preactivation(
    x_k: &Tensor,
    h_prev: &Tensor,
    spec: &RecurrentSpec,
) -> Result<Tensor> {
    let mut u = tensor::matvec(&spec.w_ih, x_k)?;
    u.add_assign(&spec.b_ih)?;
    u.add_assign(&spec.apply_hh(h_prev)?)?;
    u.add_assign(&spec.b_hh)?;
    Ok(u)
}

/// Execute a quantized model over a whole sequence, recording integer codes
/// and real activations at every quantized site.
pub fn qmodel_forward(model: &ModelGraph, seq: &SequenceInputs) -> Result<ActivationRecord> {
    if !model.quantized {
        return Err(Error::State(
            "model is not quantized; run substitution and training first".into(),
        ));
    }
    if model.is_converted() {
        return Err(Error::State(
            "graph holds spiking layers; use the simulator for converted models".into(),
        ));
    }
    seq.validate()?;

    let mut record: Vec<LayerActivations> = model
        .layers
        .iter()
        .filter(|l| l.kind.is_spiking_site())
        .map(|l| {
            let scale = match &l.kind {
                LayerKind::QuantRelu { qp } => qp.scale(),
                LayerKind::Recurrent(spec) => spec.qp.map(|q| q.scale()).unwrap_or(1.0),
                _ => 1.0,
            };
            LayerActivations { name: l.name.clone(), scale, codes: Vec::new(), values: Vec::new() }
        })
        .collect();
    let mut outputs = Vec::with_capacity(seq.positions());

    // Hidden state per recurrent layer, zero-initialized per sequence.
    let mut hidden: BTreeMap<usize, Tensor> = BTreeMap::new();

    for k in 0..seq.positions() {
        let mut x = seq.steps[k].clone();
        let mut site = 0usize;
        for (li, layer) in model.layers.iter().enumerate() {
            match &layer.kind {
                LayerKind::Linear { weight, bias } => {
                    x = apply_linear(weight, bias, &x)?;
                }
                LayerKind::Conv2d { kernels, bias, stride, padding } => {
                    x = apply_conv(kernels, bias, *stride, *padding, &x)?;
                }
                LayerKind::AvgPool { k } => {
                    x = tensor::avg_pool2d(&x, *k)?;
                }
                LayerKind::QuantRelu { qp } => {
                    let (codes, values) = quantize_act(&x, qp)?;
                    record[site].codes.push(codes);
                    record[site].values.push(values.clone());
                    site += 1;
                    x = values;
                }
                LayerKind::Recurrent(spec) => {
                    let h_prev = hidden
                        .entry(li)
                        .or_insert_with(|| Tensor::zeros(vec![spec.hidden_size()]))
                        .clone();
                    let flat = x.reshaped(vec![x.len()])?;
                    let (h_k, codes) = qrecurrent_step(&flat, &h_prev, spec)?;
                    record[site].codes.push(codes);
                    record[site].values.push(h_k.clone());
                    site += 1;
                    hidden.insert(li, h_k.clone());
                    x = h_k;
                }
                LayerKind::Concat { aux, clip } => {
                    let aux_t = fetch_aux(seq, aux, k)?;
                    let clipped = clip_tensor(aux_t, clip.0, clip.1);
                    let flat = x.reshaped(vec![x.len()])?;
                    let aux_flat = clipped.reshaped(vec![clipped.len()])?;
                    x = tensor::concat(&[&flat, &aux_flat], 0)?;
                }
                LayerKind::MaxPool { .. } | LayerKind::Activation(_) => {
                    return Err(Error::State(format!(
                        "layer '{}' ({}) should not survive in a quantized model",
                        layer.name,
                        layer.kind.kind_name()
                    )));
                }
                LayerKind::Bif { .. } | LayerKind::RecurrentBif { .. } => {
                    unreachable!("converted graphs are rejected above")
                }
            }
        }
        outputs.push(x);
    }

    Ok(ActivationRecord { layers: record, outputs })
}

/// Pipeline step 1, operator substitution: replace every max-pool by an
/// average pool and confirm every nonlinearity is ReLU. Returns the
/// modified copy plus a substitution log.
pub fn substitute_operators(model: &ModelGraph) -> Result<(ModelGraph, Vec<String>)> {
    let mut out = model.clone();
    let mut log = Vec::new();
    for layer in &mut out.layers {
        match &layer.kind {
            LayerKind::MaxPool { k } => {
                log.push(format!("layer '{}': max_pool({k}) -> avg_pool({k})", layer.name));
                layer.kind = LayerKind::AvgPool { k: *k };
            }
            LayerKind::Activation(ActivationKind::Relu) => {}
            LayerKind::Activation(other) => {
                return Err(Error::Convertibility(format!(
                    "layer '{}' uses {}, which has no spiking equivalent; only ReLU is supported",
                    layer.name,
                    other.name()
                )));
            }
            _ => {}
        }
    }
    Ok((out, log))
}

/// Pipeline step 2, activation substitution: every ReLU becomes a quantized
/// ReLU with `levels` levels (lower clip 0, upper clip `levels`), and every
/// recurrent cell gains quantizer parameters. Scales start at 1.0 and are
/// calibrated by the trainer; already-quantized sites are left untouched.
pub fn substitute_activation(model: &ModelGraph, levels: u32) -> Result<ModelGraph> {
    let init = QuantParams::new(1.0, levels)?;
    let mut out = model.clone();
    for layer in &mut out.layers {
        match &mut layer.kind {
            LayerKind::MaxPool { .. } => {
                return Err(Error::State(format!(
                    "layer '{}' is still max-pool; run operator substitution first",
                    layer.name
                )));
            }
            LayerKind::Activation(ActivationKind::Relu) => {
                layer.kind = LayerKind::QuantRelu { qp: init };
            }
            LayerKind::Activation(other) => {
                return Err(Error::Convertibility(format!(
                    "layer '{}' uses {}; run operator substitution first",
                    layer.name,
                    other.name()
                )));
            }
            LayerKind::Recurrent(spec)
                if spec.qp.is_none() => {
                    spec.qp = Some(init);
                }
            _ => {}
        }
    }
    Ok(out)
}
