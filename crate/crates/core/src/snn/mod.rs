//! Bipolar integrate-and-fire neuron dynamics, input encoders, the
//! sequence-by-time simulation engine, and the closed-form tracer oracle.
//!
//! A neuron integrates charge into its membrane potential `H`, fires a +1
//! spike when `H` reaches the threshold (while its spike tracer is below
//! its bound) and a -1 spike when `H` drops below zero (while the tracer is
//! positive), and resets by subtraction. The tracer records the running
//! net spike count; its final value is the quantization code the converted
//! network must reproduce.

mod closed_form;
mod sim;

pub use closed_form::{closed_form_codes, closed_form_tracer};
pub use sim::{
    simulate, LayerTrace, NonQuiescent, SimConfig, SpikeEvent, SpikeTrace,
};

use crate::error::{Error, Result};
use crate::quant::RecurrentSpec;
use crate::tensor::{Codes, Tensor};

/// How analog model inputs are charged into the first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// Charge the input only at the first time step. Prerequisite for
    /// lossless conversion.
    SAnalog,
    /// Charge the input at every time step (ablation mode only; biases are
    /// likewise applied every step to match that convention).
    MAnalog,
}

impl Encoding {
    pub fn name(&self) -> &'static str {
        match self {
            Encoding::SAnalog => "s-analog",
            Encoding::MAnalog => "m-analog",
        }
    }
}

/// Initial membrane potential of a converted population, pre-charge
/// included. Folded biases make this per-unit or per-channel; otherwise a
/// single pre-charge value serves every neuron.
#[derive(Debug, Clone, PartialEq)]
pub enum VInit {
    Uniform(f64),
    /// One value per output channel, broadcast over spatial positions.
    PerChannel(Vec<f64>),
    /// One value per neuron.
    PerUnit(Vec<f64>),
}

impl VInit {
    /// Expand to a tensor of the population's shape.
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor> {
        match self {
            VInit::Uniform(v) => Ok(Tensor::filled(shape.to_vec(), *v)),
            VInit::PerUnit(values) => Tensor::new(shape.to_vec(), values.clone()),
            VInit::PerChannel(values) => {
                let &[c, h, w] = shape else {
                    return Err(Error::Dimension(format!(
                        "per-channel initial potential needs a [C,H,W] population, got {shape:?}"
                    )));
                };
                if values.len() != c {
                    return Err(Error::Dimension(format!(
                        "{} channel potentials for {c} channels",
                        values.len()
                    )));
                }
                let mut t = Tensor::zeros(shape.to_vec());
                for (ch, &v) in values.iter().enumerate() {
                    for x in &mut t.data_mut()[ch * h * w..(ch + 1) * h * w] {
                        *x = v;
                    }
                }
                Ok(t)
            }
        }
    }
}

/// Attributes of a converted spiking population.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronConfig {
    /// Firing threshold, the source layer's quantization scale.
    pub threshold: f64,
    /// Tracer bound, the source layer's level count.
    pub tracer_max: u32,
    /// Initial potential (pre-charge of half a threshold, plus folded
    /// biases when `bias_folded`).
    pub v_init: VInit,
    /// True when affine biases were folded into `v_init`; false when the
    /// simulator must charge them at the first time step instead.
    pub bias_folded: bool,
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return Err(Error::Argument(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        if self.tracer_max < 1 {
            return Err(Error::Argument("tracer bound must be >= 1".into()));
        }
        Ok(())
    }
}

/// Firing rule for one neuron: +1 above threshold with tracer headroom,
/// -1 below zero with tracer credit, 0 otherwise.
#[inline]
pub fn fire(h: f64, s_prev: i32, cfg: &NeuronConfig) -> i8 {
    if h >= cfg.threshold && (s_prev as u32) < cfg.tracer_max {
        1
    } else if h < 0.0 && s_prev > 0 {
        -1
    } else {
        0
    }
}

/// Membrane state of one population at one sequence position.
#[derive(Debug, Clone)]
pub struct SpikeLayerState {
    /// Potential before firing at the current step.
    pub h: Tensor,
    /// Potential after firing.
    pub v: Tensor,
    /// Spike tracer.
    pub s: Codes,
    /// Spikes emitted at the current step, in {-1, 0, +1}.
    pub last_spikes: Tensor,
    /// Running sum of charge received, for the conservation identity.
    pub charge_sum: Tensor,
}

impl SpikeLayerState {
    pub fn new(v_init: Tensor) -> Self {
        let shape = v_init.shape().to_vec();
        SpikeLayerState {
            h: Tensor::zeros(shape.clone()),
            v: v_init,
            s: Codes::zeros(shape.clone()),
            last_spikes: Tensor::zeros(shape.clone()),
            charge_sum: Tensor::zeros(shape),
        }
    }

    /// True if no spike was emitted at the last step.
    pub fn quiet(&self) -> bool {
        self.last_spikes.data().iter().all(|&s| s == 0.0)
    }
}

/// One integrate-fire-reset step of a bipolar IF population:
/// `H = V + charge`, fire element-wise, `V = H - spike * threshold`,
/// tracer accumulates the spikes. `charge` must already include the
/// upstream threshold factor and synaptic weighting.
pub fn bif_step<'a>(
    state: &'a mut SpikeLayerState,
    charge: &Tensor,
    cfg: &NeuronConfig,
) -> Result<&'a Tensor> {
    if charge.shape() != state.v.shape() {
        return Err(Error::Dimension(format!(
            "charge shape {:?} against population {:?}",
            charge.shape(),
            state.v.shape()
        )));
    }
    state.charge_sum.add_assign(charge)?;
    let n = state.v.len();
    for i in 0..n {
        let h = state.v.data()[i] + charge.data()[i];
        let spike = fire(h, state.s.data()[i], cfg);
        state.h.data_mut()[i] = h;
        state.v.data_mut()[i] = h - spike as f64 * cfg.threshold;
        state.s.data_mut()[i] += spike as i32;
        state.last_spikes.data_mut()[i] = spike as f64;
    }
    Ok(&state.last_spikes)
}

/// Recurrent variant: the previous sequence position's spikes at the same
/// time step, scaled by this layer's threshold, are charged through the
/// hidden-to-hidden weights before the shared integrate-fire-reset step.
pub fn rbif_step<'a>(
    state: &'a mut SpikeLayerState,
    ff_charge: &Tensor,
    rec_spikes_prev_pos: &Tensor,
    spec: &RecurrentSpec,
    cfg: &NeuronConfig,
) -> Result<&'a Tensor> {
    let rec_charge = spec.apply_hh(&rec_spikes_prev_pos.scaled(cfg.threshold))?;
    let charge = ff_charge.add(&rec_charge)?;
    bif_step(state, &charge, cfg)
}

/// Analog input encoder. The encoded stream is treated as layer-0 spikes
/// with a unit threshold.
pub fn encode_input(x: &Tensor, t: usize, mode: Encoding) -> Tensor {
    debug_assert!(t >= 1, "time steps are 1-based");
    match mode {
        Encoding::SAnalog => {
            if t == 1 {
                x.clone()
            } else {
                Tensor::zeros(x.shape().to_vec())
            }
        }
        Encoding::MAnalog => x.clone(),
    }
}
