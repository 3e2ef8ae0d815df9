//! Equivalence verification and ablation harness: per-layer L1 conversion
//! error, activation-sum comparison, encoding ablation, and horizon-sweep
//! loss curves, plus the report/CSV emitters.
//!
//! Equivalence is judged in integer-code space (tracer against quantized
//! code); the real-valued L1 distances are diagnostics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataio::SequenceSample;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::morph::{convert_model, ConversionConfig};
use crate::quant::{qmodel_forward, ActivationRecord, ModelGraph, SequenceInputs};
use crate::snn::{simulate, Encoding, SimConfig, SpikeTrace};
use crate::train::{bind_sample, evaluate, loss_and_grad, Loss};

/// Per-layer comparison between the quantized record and the spike trace.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEquivalence {
    pub layer: String,
    /// Sum over positions and neurons of |quantized value - threshold * tracer|.
    pub l1: f64,
    /// Integer disagreements between codes and tracers.
    pub mismatches: usize,
    pub ann_sum: f64,
    pub snn_sum: f64,
}

/// Whole-model equivalence verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub layers: Vec<LayerEquivalence>,
    pub quiescence_step: Option<usize>,
    pub positions: usize,
}

impl EquivalenceReport {
    pub fn total_mismatches(&self) -> usize {
        self.layers.iter().map(|l| l.mismatches).sum()
    }

    /// Lossless exactly when every mismatch count is zero.
    pub fn lossless(&self) -> bool {
        self.total_mismatches() == 0
    }
}

/// Compare a quantized activation record against a spike trace layer by
/// layer.
pub fn layerwise_l1(record: &ActivationRecord, trace: &SpikeTrace) -> Result<EquivalenceReport> {
    if record.layers.len() != trace.layers.len() {
        return Err(Error::Topology(format!(
            "{} quantized sites against {} spiking layers",
            record.layers.len(),
            trace.layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(record.layers.len());
    let mut positions = 0;
    for (site, layer) in record.layers.iter().zip(&trace.layers) {
        if site.codes.len() != layer.tracers.len() {
            return Err(Error::Topology(format!(
                "site '{}' recorded {} positions, trace has {}",
                site.name,
                site.codes.len(),
                layer.tracers.len()
            )));
        }
        positions = site.codes.len();
        let mut l1 = 0.0;
        let mut mismatches = 0usize;
        let mut ann_sum = 0.0;
        let mut snn_sum = 0.0;
        for (k, (codes, tracer)) in site.codes.iter().zip(&layer.tracers).enumerate() {
            if codes.shape() != tracer.shape() {
                return Err(Error::Topology(format!(
                    "site '{}' position {k}: code shape {:?} against tracer {:?}",
                    site.name,
                    codes.shape(),
                    tracer.shape()
                )));
            }
            let values = &site.values[k];
            let upp = tracer.to_values(layer.threshold);
            for i in 0..values.len() {
                l1 += (values.data()[i] - upp.data()[i]).abs();
                ann_sum += values.data()[i];
                snn_sum += upp.data()[i];
                if codes.data()[i] != tracer.data()[i] {
                    mismatches += 1;
                }
            }
        }
        layers.push(LayerEquivalence { layer: site.name.clone(), l1, mismatches, ann_sum, snn_sum });
    }
    Ok(EquivalenceReport { layers, quiescence_step: trace.quiescence_step, positions })
}

/// Per-position absolute distance between the quantized activation and the
/// spiking accumulated output, for one encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCurve {
    pub encoding: Encoding,
    /// Raw mean absolute distance per sequence position, taken at the last
    /// spiking layer.
    pub distances: Vec<f64>,
}

impl AblationCurve {
    /// Least-squares slope over position index.
    pub fn slope(&self) -> f64 {
        let n = self.distances.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mean_x = (n - 1.0) / 2.0;
        let mean_y = self.distances.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &y) in self.distances.iter().enumerate() {
            let dx = i as f64 - mean_x;
            num += dx * (y - mean_y);
            den += dx * dx;
        }
        num / den
    }
}

fn distance_curve(record: &ActivationRecord, trace: &SpikeTrace, encoding: Encoding) -> AblationCurve {
    let site = record.layers.last().expect("at least one quantized site");
    let layer = trace.layers.last().expect("at least one spiking layer");
    let distances = site
        .values
        .iter()
        .zip(&layer.tracers)
        .map(|(value, tracer)| {
            let upp = tracer.to_values(layer.threshold);
            let total: f64 = value
                .data()
                .iter()
                .zip(upp.data())
                .map(|(a, b)| (a - b).abs())
                .sum();
            total / value.len() as f64
        })
        .collect();
    AblationCurve { encoding, distances }
}

/// Run both analog encodings on identical weights and return the
/// per-position distance curves (single-charge first).
pub fn encoding_ablation(
    model: &ModelGraph,
    seq: &SequenceInputs,
    horizon: usize,
) -> Result<(AblationCurve, AblationCurve)> {
    if !model.has_recurrence() {
        return Err(Error::Argument(
            "encoding ablation needs at least one recurrent layer".into(),
        ));
    }
    let (converted, _) = convert_model(model, &ConversionConfig::default())?;
    let record = qmodel_forward(model, seq)?;

    let s_cfg = SimConfig {
        horizon,
        encoding: Encoding::SAnalog,
        stop_on_quiescence: true,
        record_traces: false,
    };
    let s_trace = simulate(&converted, seq, &s_cfg)?;
    let m_cfg = SimConfig { encoding: Encoding::MAnalog, stop_on_quiescence: false, ..s_cfg };
    let m_trace = simulate(&converted, seq, &m_cfg)?;

    Ok((
        distance_curve(&record, &s_trace, Encoding::SAnalog),
        distance_curve(&record, &m_trace, Encoding::MAnalog),
    ))
}

/// Task losses of the spiking network across simulation horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// `(horizon, mean loss)` per requested horizon, in input order.
    pub rows: Vec<(usize, f64)>,
    /// Quantized reference loss on the same dataset.
    pub ann_loss: f64,
    /// Largest quiescence step measured over the dataset with the default
    /// horizon (None when any run failed to quiesce).
    pub quiescence_step: Option<usize>,
}

/// Evaluate spiking task loss at each horizon (no early stop), plus the
/// quantized reference loss and the measured quiescence step.
pub fn sweep_t(
    model: &ModelGraph,
    converted: Option<&ModelGraph>,
    dataset: &[SequenceSample],
    loss: Loss,
    horizons: &[usize],
) -> Result<SweepResult> {
    let owned;
    let converted = match converted {
        Some(c) => c,
        None => {
            owned = convert_model(model, &ConversionConfig::default())?.0;
            &owned
        }
    };
    let (ann_loss, _) = evaluate(model, dataset, loss)?;

    // Measure quiescence with the default adaptive horizon.
    let mut quiescence: Option<usize> = Some(2);
    let probe_cfg = SimConfig::for_model(converted);
    for sample in dataset {
        let seq = bind_sample(converted, sample);
        let trace = simulate(converted, &seq, &probe_cfg)?;
        match (quiescence, trace.quiescence_step) {
            (Some(q), Some(step)) => quiescence = Some(q.max(step)),
            _ => quiescence = None,
        }
    }

    let mut rows = Vec::with_capacity(horizons.len());
    for &horizon in horizons {
        let cfg = SimConfig {
            horizon,
            encoding: Encoding::SAnalog,
            stop_on_quiescence: false,
            record_traces: false,
        };
        let mut total = 0.0;
        for sample in dataset {
            let seq = bind_sample(converted, sample);
            let trace = simulate(converted, &seq, &cfg)?;
            let (l, _) = loss_and_grad(&trace.outputs, &sample.target, loss)?;
            total += l;
        }
        rows.push((horizon, total / dataset.len() as f64));
    }
    Ok(SweepResult { rows, ann_loss, quiescence_step: quiescence })
}

// ---------------------------------------------------------------------------
// Report emission: a key-value text document plus flat CSV tables.

fn report_paths(base: &Path) -> (PathBuf, PathBuf) {
    (base.with_extension("txt"), base.with_extension("csv"))
}

/// Write the equivalence report: `<base>.txt` (key-value sections) and
/// `<base>.csv` with one row per layer.
pub fn emit_equivalence(report: &EquivalenceReport, base: &Path) -> Result<(PathBuf, PathBuf)> {
    let (txt_path, csv_path) = report_paths(base);
    let mut txt = String::from("[verify]\n");
    writeln!(txt, "verdict = {}", if report.lossless() { "lossless" } else { "mismatch" }).unwrap();
    writeln!(txt, "layers = {}", report.layers.len()).unwrap();
    writeln!(txt, "positions = {}", report.positions).unwrap();
    writeln!(txt, "mismatch_total = {}", report.total_mismatches()).unwrap();
    match report.quiescence_step {
        Some(q) => writeln!(txt, "quiescence_step = {q}").unwrap(),
        None => writeln!(txt, "quiescence_step = none").unwrap(),
    }
    for layer in &report.layers {
        writeln!(txt, "\n[layer {}]", layer.layer).unwrap();
        writeln!(txt, "l1 = {:?}", layer.l1).unwrap();
        writeln!(txt, "mismatches = {}", layer.mismatches).unwrap();
        writeln!(txt, "ann_sum = {:?}", layer.ann_sum).unwrap();
        writeln!(txt, "snn_sum = {:?}", layer.snn_sum).unwrap();
    }
    write_atomic(&txt_path, txt.as_bytes())?;

    let mut csv = String::from("layer,l1,mismatches,ann_sum,snn_sum\n");
    for layer in &report.layers {
        writeln!(
            csv,
            "{},{:?},{},{:?},{:?}",
            layer.layer, layer.l1, layer.mismatches, layer.ann_sum, layer.snn_sum
        )
        .unwrap();
    }
    write_atomic(&csv_path, csv.as_bytes())?;
    Ok((txt_path, csv_path))
}

/// Write the ablation curves: `<base>.txt` and `<base>.csv` with one row
/// per sequence position.
pub fn emit_ablation(
    s_curve: &AblationCurve,
    m_curve: &AblationCurve,
    base: &Path,
) -> Result<(PathBuf, PathBuf)> {
    let (txt_path, csv_path) = report_paths(base);
    let mut txt = String::from("[ablation]\n");
    writeln!(txt, "positions = {}", s_curve.distances.len()).unwrap();
    writeln!(txt, "s_analog_max = {:?}", fold_max(&s_curve.distances)).unwrap();
    writeln!(txt, "m_analog_max = {:?}", fold_max(&m_curve.distances)).unwrap();
    writeln!(txt, "m_analog_slope = {:?}", m_curve.slope()).unwrap();
    write_atomic(&txt_path, txt.as_bytes())?;

    let mut csv = String::from("k,s_analog,m_analog\n");
    for (k, (s, m)) in s_curve.distances.iter().zip(&m_curve.distances).enumerate() {
        writeln!(csv, "{},{s:?},{m:?}", k + 1).unwrap();
    }
    write_atomic(&csv_path, csv.as_bytes())?;
    Ok((txt_path, csv_path))
}

fn fold_max(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(0.0, f64::max)
}

/// Write the horizon sweep: `<base>.txt` and `<base>.csv` with one row per
/// horizon (header-only when the sweep is empty).
pub fn emit_sweep(sweep: &SweepResult, base: &Path) -> Result<(PathBuf, PathBuf)> {
    let (txt_path, csv_path) = report_paths(base);
    let mut txt = String::from("[sweep]\n");
    writeln!(txt, "horizons = {}", sweep.rows.len()).unwrap();
    writeln!(txt, "ann_loss = {:?}", sweep.ann_loss).unwrap();
    match sweep.quiescence_step {
        Some(q) => writeln!(txt, "quiescence_step = {q}").unwrap(),
        None => writeln!(txt, "quiescence_step = none").unwrap(),
    }
    for (h, l) in &sweep.rows {
        writeln!(txt, "loss_at_{h} = {l:?}").unwrap();
    }
    write_atomic(&txt_path, txt.as_bytes())?;

    let mut csv = String::from("horizon,snn_loss,ann_loss\n");
    for (h, l) in &sweep.rows {
        writeln!(csv, "{h},{l:?},{:?}", sweep.ann_loss).unwrap();
    }
    write_atomic(&csv_path, csv.as_bytes())?;
    Ok((txt_path, csv_path))
}

/// Parse the report/config grammar: `key = value` lines grouped under
/// bracketed section headers. Returns sections in file order.
pub fn parse_key_value(text: &str) -> Result<Vec<(String, BTreeMap<String, String>)>> {
    let mut sections: Vec<(String, BTreeMap<String, String>)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push((header.to_string(), BTreeMap::new()));
        } else if let Some((k, v)) = line.split_once('=') {
            match sections.last_mut() {
                Some((_, map)) => {
                    map.insert(k.trim().to_string(), v.trim().to_string());
                }
                None => {
                    // Headerless files act as one anonymous section.
                    let mut map = BTreeMap::new();
                    map.insert(k.trim().to_string(), v.trim().to_string());
                    sections.push((String::new(), map));
                }
            }
        } else {
            return Err(Error::Parse {
                offset: ln,
                detail: format!("line {} is neither a section nor key = value", ln + 1),
            });
        }
    }
    Ok(sections)
}
