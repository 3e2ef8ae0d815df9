//! Typed layer descriptors and the model graph.
//!
//! A model is a topologically ordered chain of layers. Feedforward layers
//! are applied independently at every sequence position; recurrent layers
//! thread their hidden state across positions. Concat layers splice a named
//! auxiliary analog input (clipped) into the feature stream.

use crate::error::{Error, Result};
use crate::quant::QuantParams;
use crate::snn::NeuronConfig;
use crate::tensor::Tensor;

/// Nonlinearities a source network may carry before conversion. Only ReLU
/// survives operator substitution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
}

impl ActivationKind {
    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
        }
    }
}

/// Hidden-to-hidden connectivity of a recurrent cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecurrentForm {
    /// Full hidden-to-hidden matrix.
    Dense,
    /// Element-wise recurrence: `w_hh` is a length-H vector and unit `i`
    /// only sees its own previous state.
    Diagonal,
}

/// Parameters of a recurrent cell `u = W_ih x + b_ih + W_hh (*) h_prev + b_hh`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentSpec {
    pub w_ih: Tensor,
    pub b_ih: Tensor,
    pub w_hh: Tensor,
    pub b_hh: Tensor,
    pub form: RecurrentForm,
    pub qp: Option<QuantParams>,
}

impl RecurrentSpec {
    pub fn hidden_size(&self) -> usize {
        self.b_ih.len()
    }

    /// Hidden-to-hidden application, dense or element-wise.
    pub fn apply_hh(&self, h: &Tensor) -> Result<Tensor> {
        match self.form {
            RecurrentForm::Dense => crate::tensor::matvec(&self.w_hh, h),
            RecurrentForm::Diagonal => {
                if self.w_hh.len() != h.len() {
                    return Err(Error::Dimension(format!(
                        "diagonal recurrence of {} weights against {} units",
                        self.w_hh.len(),
                        h.len()
                    )));
                }
                let data = self
                    .w_hh
                    .data()
                    .iter()
                    .zip(h.data())
                    .map(|(w, h)| w * h)
                    .collect();
                Tensor::new(vec![h.len()], data)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        let &[rows, _cols] = self.w_ih.shape() else {
            return Err(Error::Dimension("recurrent w_ih must be 2-d".into()));
        };
        if rows != h || self.b_hh.len() != h {
            return Err(Error::Dimension("recurrent parameter sizes disagree".into()));
        }
        match self.form {
            RecurrentForm::Dense => {
                if self.w_hh.shape() != [h, h] {
                    return Err(Error::Dimension(format!(
                        "dense recurrence needs [{h},{h}] w_hh, got {:?}",
                        self.w_hh.shape()
                    )));
                }
            }
            RecurrentForm::Diagonal => {
                if self.w_hh.shape() != [h] {
                    return Err(Error::Dimension(format!(
                        "diagonal recurrence needs length-{h} w_hh, got {:?}",
                        self.w_hh.shape()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One layer of a model graph.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Linear {
        weight: Tensor,
        bias: Tensor,
    },
    Conv2d {
        kernels: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
    },
    AvgPool {
        k: usize,
    },
    MaxPool {
        k: usize,
    },
    Activation(ActivationKind),
    QuantRelu {
        qp: QuantParams,
    },
    Recurrent(RecurrentSpec),
    /// Splice the named auxiliary input (clipped to `clip`) onto the
    /// flattened feature vector.
    Concat {
        aux: String,
        clip: (f64, f64),
    },
    /// Bipolar integrate-and-fire population (converted quantized ReLU).
    Bif {
        neuron: NeuronConfig,
    },
    /// Recurrent bipolar integrate-and-fire population (converted
    /// recurrent cell). Biases stay stored for round-tripping but are
    /// folded into the initial potential during simulation.
    RecurrentBif {
        spec: RecurrentSpec,
        neuron: NeuronConfig,
    },
}

impl LayerKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerKind::Linear { .. } => "linear",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::AvgPool { .. } => "avg_pool",
            LayerKind::MaxPool { .. } => "max_pool",
            LayerKind::Activation(_) => "activation",
            LayerKind::QuantRelu { .. } => "quant_relu",
            LayerKind::Recurrent(_) => "recurrent",
            LayerKind::Concat { .. } => "concat",
            LayerKind::Bif { .. } => "bif",
            LayerKind::RecurrentBif { .. } => "rbif",
        }
    }

    /// True for layers that carry a quantized activation site (and after
    /// conversion a spiking population).
    pub fn is_spiking_site(&self) -> bool {
        matches!(
            self,
            LayerKind::QuantRelu { .. }
                | LayerKind::Recurrent(_)
                | LayerKind::Bif { .. }
                | LayerKind::RecurrentBif { .. }
        )
    }
}

/// Named layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec { name: name.into(), kind }
    }
}

/// Declared auxiliary analog input stream (one tensor per sequence position).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxInput {
    pub name: String,
    pub len: usize,
}

/// A topologically ordered model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    pub layers: Vec<LayerSpec>,
    pub aux_inputs: Vec<AuxInput>,
    /// Shape of one sequence-position input tensor.
    pub input_shape: Vec<usize>,
    pub quantized: bool,
    /// Free-form provenance notes (training seeds, permutation seeds, task
    /// names); carried through conversion and the container so runs stay
    /// reproducible from the manifest alone.
    pub metadata: std::collections::BTreeMap<String, String>,
}

impl ModelGraph {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, aux_inputs: Vec<AuxInput>) -> Self {
        ModelGraph {
            layers,
            aux_inputs,
            input_shape,
            quantized: false,
            metadata: Default::default(),
        }
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    /// Validate that the graph satisfies the quantized-model invariant and
    /// set the flag: every nonlinearity is a quantized ReLU, every
    /// recurrent cell carries quantizer parameters, and no max-pool is left.
    pub fn mark_quantized(&mut self) -> Result<()> {
        for layer in &self.layers {
            match &layer.kind {
                LayerKind::MaxPool { .. } => {
                    return Err(Error::State(format!(
                        "layer '{}' is max-pool; run operator substitution first",
                        layer.name
                    )));
                }
                LayerKind::Activation(a) => {
                    return Err(Error::State(format!(
                        "layer '{}' is an unquantized {} activation",
                        layer.name,
                        a.name()
                    )));
                }
                LayerKind::Recurrent(spec) if spec.qp.is_none() => {
                    return Err(Error::State(format!(
                        "recurrent layer '{}' has no quantizer parameters",
                        layer.name
                    )));
                }
                _ => {}
            }
        }
        self.quantized = true;
        Ok(())
    }

    /// True once any layer has been morphed into a spiking population.
    pub fn is_converted(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l.kind, LayerKind::Bif { .. } | LayerKind::RecurrentBif { .. }))
    }

    pub fn has_recurrence(&self) -> bool {
        self.layers
            .iter()
            .any(|l| matches!(l.kind, LayerKind::Recurrent(_) | LayerKind::RecurrentBif { .. }))
    }

    /// Number of quantized-activation / spiking sites.
    pub fn spiking_depth(&self) -> usize {
        self.layers.iter().filter(|l| l.kind.is_spiking_site()).count()
    }

    /// Largest level count (tracer bound) over all quantized sites.
    pub fn max_levels(&self) -> u32 {
        self.layers
            .iter()
            .filter_map(|l| match &l.kind {
                LayerKind::QuantRelu { qp } => Some(qp.levels()),
                LayerKind::Recurrent(spec) => spec.qp.map(|q| q.levels()),
                LayerKind::Bif { neuron } => Some(neuron.tracer_max),
                LayerKind::RecurrentBif { neuron, .. } => Some(neuron.tracer_max),
                _ => None,
            })
            .max()
            .unwrap_or(1)
    }

    pub fn aux_spec(&self, name: &str) -> Option<&AuxInput> {
        self.aux_inputs.iter().find(|a| a.name == name)
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// All parameter tensors in a fixed traversal order (weights blob order).
    pub fn param_tensors(&self) -> Vec<(&str, &Tensor)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match &layer.kind {
                LayerKind::Linear { weight, bias } => {
                    out.push(("weight", weight));
                    out.push(("bias", bias));
                }
                LayerKind::Conv2d { kernels, bias, .. } => {
                    out.push(("kernels", kernels));
                    out.push(("bias", bias));
                }
                LayerKind::Recurrent(spec) | LayerKind::RecurrentBif { spec, .. } => {
                    out.push(("w_ih", &spec.w_ih));
                    out.push(("b_ih", &spec.b_ih));
                    out.push(("w_hh", &spec.w_hh));
                    out.push(("b_hh", &spec.b_hh));
                }
                _ => {}
            }
        }
        out
    }

    pub fn all_params_finite(&self) -> bool {
        self.param_tensors().iter().all(|(_, t)| t.is_finite())
    }
}
