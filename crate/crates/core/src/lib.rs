//! Train small quantized convolutional/recurrent networks, convert them
//! losslessly into spiking networks built from bipolar integrate-and-fire
//! neurons, simulate the result, and verify exact equivalence between the
//! quantized source and its spiking counterpart.
//!
//! The pipeline has two halves. Quantization: operator substitution
//! (max-pool to average-pool, ReLU everywhere), activation substitution
//! (quantized ReLU with a learned step size), and quantization-aware
//! training. Morphing: each quantized activation becomes a BIF population
//! and each quantized recurrent cell an RBIF population, with threshold =
//! scale, tracer bound = level count, and initial potential = half a scale
//! plus the folded bias. Under single-charge analog encoding the spike
//! tracers settle on exactly the quantized integer codes, which the
//! verifier checks code-for-code.

pub mod dataio;
pub mod error;
pub mod fsutil;
pub mod modelgen;
pub mod morph;
pub mod quant;
pub mod snn;
pub mod tensor;
pub mod train;
pub mod verify;

pub use dataio::{
    load_mnist_idx, load_model, save_model, synth_collision_dataset, SeqGranularity,
    SequenceSample, SynthConfig, Target,
};
pub use error::{Error, Result};
pub use morph::{
    convert_model, roundtrip_check, validate_convertible, ConversionConfig, ConversionManifest,
};
pub use quant::{
    qmodel_forward, qrecurrent_step, quantize_act, substitute_activation, substitute_operators,
    ActivationRecord, AuxInput, LayerKind, LayerSpec, ModelGraph, QuantParams, RecurrentForm,
    RecurrentSpec, SequenceInputs,
};
pub use snn::{
    bif_step, closed_form_codes, closed_form_tracer, encode_input, fire, rbif_step, simulate,
    Encoding, NeuronConfig, SimConfig, SpikeLayerState, SpikeTrace, VInit,
};
pub use tensor::{Codes, Tensor};
pub use train::{
    adam_step, backward, forward_train, quantize_act_backward, train, Loss, TrainConfig,
    TrainResult,
};
pub use verify::{
    encoding_ablation, layerwise_l1, sweep_t, AblationCurve, EquivalenceReport, SweepResult,
};
