//! Conversion pipelines: validate a quantized graph, map its quantized
//! activation sites onto bipolar integrate-and-fire populations, and
//! configure the neuron attributes so the spiking network reproduces the
//! quantized network exactly.
//!
//! Feedforward sites become BIF populations (threshold = quantizer scale,
//! tracer bound = level count, initial potential = half a scale plus the
//! folded bias of the preceding affine layer). Recurrent sites become RBIF
//! populations with both cell biases folded in. Weights are copied
//! verbatim.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::quant::{
    qmodel_forward, LayerKind, LayerSpec, ModelGraph, SequenceInputs,
};
use crate::snn::{simulate, Encoding, NeuronConfig, NonQuiescent, SimConfig, VInit};

/// Conversion controls. Losslessness requires single-charge analog encoding,
/// so that is the only target this transformation produces; the bias fold
/// may be swapped for first-step bias charging, which is algebraically
/// identical but keeps a per-step branch in the simulator.
#[derive(Debug, Clone, Copy)]
pub struct ConversionConfig {
    pub fold_bias: bool,
}

impl Default for ConversionConfig {
    fn default() -> Self {
        ConversionConfig { fold_bias: true }
    }
}

impl ConversionConfig {
    /// The encoding every conversion targets.
    pub fn target_encoding(&self) -> Encoding {
        Encoding::SAnalog
    }
}

/// One validation finding.
#[derive(Debug, Clone)]
pub struct ConvertIssue {
    pub layer: String,
    pub reason: String,
}

/// Outcome of `validate_convertible`.
#[derive(Debug, Clone, Default)]
pub struct ConvertReport {
    pub issues: Vec<ConvertIssue>,
}

impl ConvertReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, layer: &str, reason: impl Into<String>) {
        self.issues.push(ConvertIssue { layer: layer.to_string(), reason: reason.into() });
    }

    fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            let mut msg = String::new();
            for (i, issue) in self.issues.iter().enumerate() {
                if i > 0 {
                    msg.push_str("; ");
                }
                write!(msg, "layer '{}': {}", issue.layer, issue.reason).expect("string write");
            }
            Err(Error::Convertibility(msg))
        }
    }
}

/// Per-layer record of what conversion did.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub layer: String,
    pub source_kind: String,
    pub target_kind: String,
    pub threshold: Option<f64>,
    pub tracer_max: Option<u32>,
    pub v_init_summary: Option<String>,
}

/// Full conversion record: one entry per layer plus the pipeline log.
#[derive(Debug, Clone)]
pub struct ConversionManifest {
    pub entries: Vec<ManifestEntry>,
    pub log: Vec<String>,
    pub encoding: Encoding,
    pub bias_folded: bool,
}

impl ConversionManifest {
    /// Deterministic key-value rendering, one `key = value` per line with
    /// bracketed section headers.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("[conversion]\n");
        writeln!(out, "encoding = {}", self.encoding.name()).unwrap();
        writeln!(out, "bias_folded = {}", self.bias_folded).unwrap();
        writeln!(out, "layers = {}", self.entries.len()).unwrap();
        for entry in &self.entries {
            writeln!(out, "\n[layer {}]", entry.layer).unwrap();
            writeln!(out, "source = {}", entry.source_kind).unwrap();
            writeln!(out, "target = {}", entry.target_kind).unwrap();
            if let Some(th) = entry.threshold {
                writeln!(out, "threshold = {th}").unwrap();
            }
            if let Some(sm) = entry.tracer_max {
                writeln!(out, "tracer_max = {sm}").unwrap();
            }
            if let Some(v) = &entry.v_init_summary {
                writeln!(out, "v_init = {v}").unwrap();
            }
        }
        if !self.log.is_empty() {
            out.push_str("\n[pipeline]\n");
            for (i, line) in self.log.iter().enumerate() {
                writeln!(out, "step_{i} = {line}").unwrap();
            }
        }
        out
    }
}

/// Which affine layer feeds a given activation site, looking back through
/// average pools only.
enum FoldSource {
    None,
    Linear(usize),
    Conv(usize),
}

fn fold_source(layers: &[LayerSpec], site_idx: usize) -> FoldSource {
    for (i, layer) in layers[..site_idx].iter().enumerate().rev() {
        match &layer.kind {
            LayerKind::AvgPool { .. } => continue,
            LayerKind::Linear { .. } => return FoldSource::Linear(i),
            LayerKind::Conv2d { .. } => return FoldSource::Conv(i),
            _ => return FoldSource::None,
        }
    }
    FoldSource::None
}

/// Index of the last spiking site, if any.
fn last_site(layers: &[LayerSpec]) -> Option<usize> {
    layers.iter().rposition(|l| l.kind.is_spiking_site())
}

/// Check that a model can be converted losslessly. Collects every offending
/// layer instead of stopping at the first.
pub fn validate_convertible(model: &ModelGraph) -> ConvertReport {
    let mut report = ConvertReport::default();
    if model.is_converted() {
        report.push("(model)", "already converted to a spiking graph");
        return report;
    }
    if !model.quantized {
        report.push("(model)", "not quantized; run quantization first");
    }
    let readout_from = last_site(&model.layers).map_or(0, |i| i + 1);
    for (i, layer) in model.layers.iter().enumerate() {
        match &layer.kind {
            LayerKind::MaxPool { .. } => {
                report.push(&layer.name, "max-pool has no spiking equivalent; substitute operators first");
            }
            LayerKind::Activation(kind) => {
                report.push(
                    &layer.name,
                    format!("unquantized {} activation; run quantization first", kind.name()),
                );
            }
            LayerKind::Recurrent(spec) => {
                if spec.qp.is_none() {
                    report.push(&layer.name, "recurrent cell carries no quantizer parameters");
                }
                if let Err(e) = spec.validate() {
                    report.push(&layer.name, e.to_string());
                }
            }
            LayerKind::Linear { .. } | LayerKind::Conv2d { .. } if i < readout_from => {
                // Every in-body affine layer must reach a quantized ReLU
                // through average pools only, so its bias has a
                // well-defined fold target.
                let mut j = i + 1;
                let ok = loop {
                    match model.layers.get(j).map(|l| &l.kind) {
                        Some(LayerKind::AvgPool { .. }) => j += 1,
                        Some(LayerKind::QuantRelu { .. }) => break true,
                        _ => break false,
                    }
                };
                if !ok {
                    report.push(
                        &layer.name,
                        "affine layer is not followed by a quantized activation; \
                         its bias has no fold target",
                    );
                }
            }
            _ => {}
        }
    }
    report
}

fn v_init_summary(v: &VInit) -> String {
    match v {
        VInit::Uniform(x) => format!("uniform({x})"),
        VInit::PerChannel(xs) => format!(
            "per_channel(n={}, min={}, max={})",
            xs.len(),
            xs.iter().cloned().fold(f64::INFINITY, f64::min),
            xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        ),
        VInit::PerUnit(xs) => format!(
            "per_unit(n={}, min={}, max={})",
            xs.len(),
            xs.iter().cloned().fold(f64::INFINITY, f64::min),
            xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        ),
    }
}

/// Convert a validated quantized model into its spiking counterpart.
/// Weights are mapped verbatim; every quantized ReLU becomes a BIF
/// population and every recurrent cell an RBIF population.
pub fn convert_model(
    model: &ModelGraph,
    cfg: &ConversionConfig,
) -> Result<(ModelGraph, ConversionManifest)> {
    validate_convertible(model).into_result()?;

    let mut out_layers = Vec::with_capacity(model.layers.len());
    let mut entries = Vec::with_capacity(model.layers.len());
    let mut log = vec![format!(
        "neuron configuration: threshold = scale, tracer bound = levels, \
         v_init = 0.5*scale{}",
        if cfg.fold_bias { " + folded bias" } else { "; biases charged at t=1" }
    )];

    for (i, layer) in model.layers.iter().enumerate() {
        match &layer.kind {
            LayerKind::QuantRelu { qp } => {
                let scale = qp.scale();
                let pre_charge = 0.5 * scale;
                let v_init = if cfg.fold_bias {
                    match fold_source(&model.layers, i) {
                        FoldSource::Linear(j) => {
                            let LayerKind::Linear { bias, .. } = &model.layers[j].kind else {
                                unreachable!()
                            };
                            VInit::PerUnit(bias.data().iter().map(|&b| pre_charge + b).collect())
                        }
                        FoldSource::Conv(j) => {
                            let LayerKind::Conv2d { bias, .. } = &model.layers[j].kind else {
                                unreachable!()
                            };
                            VInit::PerChannel(
                                bias.data().iter().map(|&b| pre_charge + b).collect(),
                            )
                        }
                        FoldSource::None => VInit::Uniform(pre_charge),
                    }
                } else {
                    VInit::Uniform(pre_charge)
                };
                let neuron = NeuronConfig {
                    threshold: scale,
                    tracer_max: qp.levels(),
                    v_init,
                    bias_folded: cfg.fold_bias,
                };
                entries.push(ManifestEntry {
                    layer: layer.name.clone(),
                    source_kind: "quant_relu".into(),
                    target_kind: "bif".into(),
                    threshold: Some(neuron.threshold),
                    tracer_max: Some(neuron.tracer_max),
                    v_init_summary: Some(v_init_summary(&neuron.v_init)),
                });
                log.push(format!("layer '{}': quant_relu -> bif", layer.name));
                out_layers.push(LayerSpec::new(layer.name.clone(), LayerKind::Bif { neuron }));
            }
            LayerKind::Recurrent(spec) => {
                let qp = spec.qp.expect("validated above");
                let scale = qp.scale();
                let pre_charge = 0.5 * scale;
                let v_init = if cfg.fold_bias {
                    VInit::PerUnit(
                        spec.b_ih
                            .data()
                            .iter()
                            .zip(spec.b_hh.data())
                            .map(|(&bi, &bh)| pre_charge + bi + bh)
                            .collect(),
                    )
                } else {
                    VInit::Uniform(pre_charge)
                };
                let neuron = NeuronConfig {
                    threshold: scale,
                    tracer_max: qp.levels(),
                    v_init,
                    bias_folded: cfg.fold_bias,
                };
                entries.push(ManifestEntry {
                    layer: layer.name.clone(),
                    source_kind: "recurrent".into(),
                    target_kind: "rbif".into(),
                    threshold: Some(neuron.threshold),
                    tracer_max: Some(neuron.tracer_max),
                    v_init_summary: Some(v_init_summary(&neuron.v_init)),
                });
                log.push(format!("layer '{}': recurrent -> rbif", layer.name));
                out_layers.push(LayerSpec::new(
                    layer.name.clone(),
                    LayerKind::RecurrentBif { spec: spec.clone(), neuron },
                ));
            }
            other => {
                entries.push(ManifestEntry {
                    layer: layer.name.clone(),
                    source_kind: other.kind_name().into(),
                    target_kind: other.kind_name().into(),
                    threshold: None,
                    tracer_max: None,
                    v_init_summary: None,
                });
                out_layers.push(layer.clone());
            }
        }
    }

    let converted = ModelGraph {
        layers: out_layers,
        aux_inputs: model.aux_inputs.clone(),
        input_shape: model.input_shape.clone(),
        quantized: model.quantized,
        metadata: model.metadata.clone(),
    };
    let manifest = ConversionManifest {
        entries,
        log,
        encoding: cfg.target_encoding(),
        bias_folded: cfg.fold_bias,
    };
    Ok((converted, manifest))
}

/// Result of a round-trip equivalence probe.
#[derive(Debug, Clone)]
pub struct RoundtripReport {
    /// (neuron, position) pairs where the spike tracer differed from the
    /// quantized code.
    pub mismatches: usize,
    pub pairs_checked: usize,
    /// Largest quiescence step observed over the probe batch.
    pub max_quiescence_step: Option<usize>,
    pub warning: Option<NonQuiescent>,
}

/// Run the quantized executor and the spiking simulator on the same probe
/// batch and count integer disagreements between codes and tracers.
pub fn roundtrip_check(
    model: &ModelGraph,
    converted: &ModelGraph,
    probes: &[SequenceInputs],
    sim: Option<SimConfig>,
) -> Result<RoundtripReport> {
    let cfg = sim.unwrap_or_else(|| SimConfig::for_model(converted));
    let mut mismatches = 0usize;
    let mut pairs = 0usize;
    let mut warning = None;
    let mut max_q = None;
    for probe in probes {
        let record = qmodel_forward(model, probe)?;
        let trace = simulate(converted, probe, &cfg)?;
        if record.layers.len() != trace.layers.len() {
            return Err(Error::Topology(format!(
                "{} quantized sites against {} spiking layers",
                record.layers.len(),
                trace.layers.len()
            )));
        }
        if trace.warning.is_some() && warning.is_none() {
            warning = trace.warning;
        }
        max_q = max_q.max(trace.quiescence_step);
        for (site, layer) in record.layers.iter().zip(&trace.layers) {
            for (codes, tracer) in site.codes.iter().zip(&layer.tracers) {
                if codes.shape() != tracer.shape() {
                    return Err(Error::Topology(format!(
                        "site '{}' shape {:?} against tracer shape {:?}",
                        site.name,
                        codes.shape(),
                        tracer.shape()
                    )));
                }
                pairs += codes.len();
                mismatches += codes
                    .data()
                    .iter()
                    .zip(tracer.data())
                    .filter(|(c, s)| c != s)
                    .count();
            }
        }
    }
    Ok(RoundtripReport { mismatches, pairs_checked: pairs, max_quiescence_step: max_q, warning })
}
