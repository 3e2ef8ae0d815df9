//! Closed-form spike-tracer evaluation.
//!
//! At quiescence the tracer of a population equals
//! `clip(floor((drive + V(0)) / threshold), 0, tracer_max)` where `drive`
//! is the accumulated charge: the affine map of the upstream accumulated
//! output, plus the hidden-to-hidden map of the previous position's
//! accumulated output for recurrent layers. Evaluating that expression
//! layer by layer gives the converted network's steady state without
//! time-stepping, which makes it an independent oracle for the simulator.

use crate::error::{Error, Result};
use crate::quant::{LayerKind, LayerSpec, ModelGraph, SequenceInputs};
use crate::snn::NeuronConfig;
use crate::tensor::{self, Codes, Tensor};

/// Tracer codes from total drive and an expanded initial potential.
pub fn closed_form_tracer(drive: &Tensor, v_init: &Tensor, cfg: &NeuronConfig) -> Result<Codes> {
    if drive.shape() != v_init.shape() {
        return Err(Error::Dimension(format!(
            "drive shape {:?} against initial potential {:?}",
            drive.shape(),
            v_init.shape()
        )));
    }
    let max = cfg.tracer_max as f64;
    let data = drive
        .data()
        .iter()
        .zip(v_init.data())
        .map(|(&u, &v0)| ((u + v0) / cfg.threshold).floor().clamp(0.0, max) as i32)
        .collect();
    Codes::new(drive.shape().to_vec(), data)
}

/// Whether the next spiking site downstream of layer `idx` carries folded
/// biases (in which case the affine charge feeding it must stay bias-free).
/// `None` when the layer belongs to the readout tail.
fn downstream_fold(layers: &[LayerSpec], idx: usize) -> Option<bool> {
    layers[idx + 1..].iter().find_map(|l| match &l.kind {
        LayerKind::Bif { neuron } => Some(neuron.bias_folded),
        LayerKind::RecurrentBif { neuron, .. } => Some(neuron.bias_folded),
        _ => None,
    })
}

/// Evaluate the whole converted graph in closed form: per spiking layer,
/// per sequence position, the tracer codes the simulation must settle on.
/// Returned layer-major: `codes[layer][position]`.
pub fn closed_form_codes(model: &ModelGraph, seq: &SequenceInputs) -> Result<Vec<Vec<Codes>>> {
    if !model.is_converted() {
        return Err(Error::State("closed form needs a converted graph".into()));
    }
    seq.validate()?;
    let kk = seq.positions();
    let sites = model.spiking_depth();
    let mut codes: Vec<Vec<Codes>> = vec![Vec::with_capacity(kk); sites];
    // Accumulated output of each recurrent site at the previous position.
    let mut prev_upp: Vec<Option<Tensor>> = vec![None; sites];

    for k in 0..kk {
        let mut x = seq.steps[k].clone();
        let mut site = 0usize;
        for (li, layer) in model.layers.iter().enumerate() {
            match &layer.kind {
                LayerKind::Linear { weight, bias } => {
                    // A bias folded into the downstream initial potential
                    // must not be applied here as well.
                    let with_bias = !downstream_fold(&model.layers, li).unwrap_or(false);
                    let flat = x.reshaped(vec![x.len()])?;
                    x = tensor::matvec(weight, &flat)?;
                    if with_bias {
                        x.add_assign(bias)?;
                    }
                }
                LayerKind::Conv2d { kernels, bias, stride, padding } => {
                    let with_bias = !downstream_fold(&model.layers, li).unwrap_or(false);
                    let mut out = tensor::conv2d(&x, kernels, *stride, *padding)?;
                    if with_bias {
                        let &[f, ho, wo] = out.shape() else { unreachable!() };
                        let plane = ho * wo;
                        for ch in 0..f {
                            let b = bias.data()[ch];
                            for v in &mut out.data_mut()[ch * plane..(ch + 1) * plane] {
                                *v += b;
                            }
                        }
                    }
                    x = out;
                }
                LayerKind::AvgPool { k } => {
                    x = tensor::avg_pool2d(&x, *k)?;
                }
                LayerKind::Concat { aux, clip } => {
                    let aux_t = seq
                        .aux
                        .get(aux)
                        .and_then(|s| s.get(k))
                        .ok_or_else(|| Error::Argument(format!("missing aux input '{aux}'")))?;
                    let clipped = aux_t.map(|v| v.clamp(clip.0, clip.1));
                    let flat = x.reshaped(vec![x.len()])?;
                    let aux_flat = clipped.reshaped(vec![clipped.len()])?;
                    x = tensor::concat(&[&flat, &aux_flat], 0)?;
                }
                LayerKind::Bif { neuron } => {
                    let v0 = neuron.v_init.expand(x.shape())?;
                    let c = closed_form_tracer(&x, &v0, neuron)?;
                    x = c.to_values(neuron.threshold);
                    codes[site].push(c);
                    site += 1;
                }
                LayerKind::RecurrentBif { spec, neuron } => {
                    let flat = x.reshaped(vec![x.len()])?;
                    let mut drive = tensor::matvec(&spec.w_ih, &flat)?;
                    if !neuron.bias_folded {
                        drive.add_assign(&spec.b_ih)?;
                        drive.add_assign(&spec.b_hh)?;
                    }
                    if let Some(prev) = &prev_upp[site] {
                        drive.add_assign(&spec.apply_hh(prev)?)?;
                    }
                    let v0 = neuron.v_init.expand(drive.shape())?;
                    let c = closed_form_tracer(&drive, &v0, neuron)?;
                    let upp = c.to_values(neuron.threshold);
                    prev_upp[site] = Some(upp.clone());
                    x = upp;
                    codes[site].push(c);
                    site += 1;
                }
                other => {
                    return Err(Error::State(format!(
                        "layer '{}' ({}) cannot appear in a converted graph",
                        layer.name,
                        other.kind_name()
                    )));
                }
            }
        }
    }
    Ok(codes)
}
