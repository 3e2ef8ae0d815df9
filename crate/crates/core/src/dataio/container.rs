//! Model container: a human-readable text manifest (layer kinds, shapes,
//! quantizer and neuron attributes, version, checksum) followed by a
//! little-endian binary blob holding every parameter tensor in manifest
//! order. Scalars are printed with shortest round-trip formatting and
//! vectors live in the blob, so a load reproduces the saved model
//! bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::quant::{
    ActivationKind, AuxInput, LayerKind, LayerSpec, ModelGraph, QuantParams, RecurrentForm,
    RecurrentSpec,
};
use crate::snn::{NeuronConfig, VInit};
use crate::tensor::Tensor;

pub const CONTAINER_VERSION: &str = "spikemorph-container v1";
const BLOB_MARKER: &[u8] = b"[blob]\n";

fn fmt_shape(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| Error::Container(format!("bad shape component '{d}'")))
        })
        .collect()
}

struct Writer {
    manifest: String,
    blob: Vec<f64>,
}

impl Writer {
    fn tensor(&mut self, key: &str, t: &Tensor) {
        writeln!(self.manifest, "{key} = {}", fmt_shape(t.shape())).unwrap();
        self.blob.extend_from_slice(t.data());
    }

    fn vector(&mut self, key: &str, kind: &str, v: &[f64]) {
        writeln!(self.manifest, "{key} = {kind}:{}", v.len()).unwrap();
        self.blob.extend_from_slice(v);
    }

    fn scalar(&mut self, key: &str, v: f64) {
        writeln!(self.manifest, "{key} = {v:?}").unwrap();
    }

    fn value(&mut self, key: &str, v: impl std::fmt::Display) {
        writeln!(self.manifest, "{key} = {v}").unwrap();
    }
}

fn write_recurrent(w: &mut Writer, spec: &RecurrentSpec) {
    w.value(
        "form",
        match spec.form {
            RecurrentForm::Dense => "dense",
            RecurrentForm::Diagonal => "diagonal",
        },
    );
    w.tensor("w_ih", &spec.w_ih);
    w.tensor("b_ih", &spec.b_ih);
    w.tensor("w_hh", &spec.w_hh);
    w.tensor("b_hh", &spec.b_hh);
    if let Some(qp) = &spec.qp {
        w.scalar("scale", qp.scale());
        w.value("levels", qp.levels());
    }
}

fn write_neuron(w: &mut Writer, neuron: &NeuronConfig) {
    w.scalar("threshold", neuron.threshold);
    w.value("tracer_max", neuron.tracer_max);
    w.value("bias_folded", neuron.bias_folded);
    match &neuron.v_init {
        VInit::Uniform(v) => w.scalar("v_init_uniform", *v),
        VInit::PerUnit(vs) => w.vector("v_init", "per_unit", vs),
        VInit::PerChannel(vs) => w.vector("v_init", "per_channel", vs),
    }
}

/// Serialize a model (quantized or converted) to a container file,
/// atomically.
pub fn save_model(model: &ModelGraph, path: &Path) -> Result<()> {
    if !model.all_params_finite() {
        return Err(Error::Numeric("refusing to save non-finite parameters".into()));
    }
    let mut w = Writer { manifest: String::new(), blob: Vec::new() };
    writeln!(w.manifest, "{CONTAINER_VERSION}").unwrap();
    w.manifest.push_str("\n[model]\n");
    w.value("input_shape", fmt_shape(&model.input_shape));
    w.value("quantized", model.quantized);
    w.value("converted", model.is_converted());
    let aux = if model.aux_inputs.is_empty() {
        "none".to_string()
    } else {
        model
            .aux_inputs
            .iter()
            .map(|a| format!("{}:{}", a.name, a.len))
            .collect::<Vec<_>>()
            .join(",")
    };
    w.value("aux", aux);
    w.value("layers", model.layers.len());

    for (i, layer) in model.layers.iter().enumerate() {
        writeln!(w.manifest, "\n[layer {i}]").unwrap();
        w.value("name", &layer.name);
        w.value("kind", layer.kind.kind_name());
        match &layer.kind {
            LayerKind::Linear { weight, bias } => {
                w.tensor("weight", weight);
                w.tensor("bias", bias);
            }
            LayerKind::Conv2d { kernels, bias, stride, padding } => {
                w.tensor("kernels", kernels);
                w.tensor("bias", bias);
                w.value("stride", stride);
                w.value("padding", padding);
            }
            LayerKind::AvgPool { k } | LayerKind::MaxPool { k } => w.value("k", k),
            LayerKind::Activation(a) => w.value("activation", a.name()),
            LayerKind::QuantRelu { qp } => {
                w.scalar("scale", qp.scale());
                w.value("levels", qp.levels());
            }
            LayerKind::Recurrent(spec) => write_recurrent(&mut w, spec),
            LayerKind::Concat { aux, clip } => {
                w.value("aux", aux);
                w.scalar("clip_lo", clip.0);
                w.scalar("clip_hi", clip.1);
            }
            LayerKind::Bif { neuron } => write_neuron(&mut w, neuron),
            LayerKind::RecurrentBif { spec, neuron } => {
                write_recurrent(&mut w, spec);
                write_neuron(&mut w, neuron);
            }
        }
    }

    if !model.metadata.is_empty() {
        w.manifest.push_str("\n[notes]\n");
        for (key, value) in &model.metadata {
            writeln!(w.manifest, "{key} = {value}").unwrap();
        }
    }

    let blob_bytes: Vec<u8> = w.blob.iter().flat_map(|v| v.to_le_bytes()).collect();
    let crc = crc32fast::hash(&blob_bytes);
    w.manifest.push_str("\n[weights]\n");
    writeln!(w.manifest, "dtype = f64").unwrap();
    writeln!(w.manifest, "count = {}", w.blob.len()).unwrap();
    writeln!(w.manifest, "crc32 = {crc:08x}").unwrap();
    w.manifest.push_str("\n[blob]\n");

    let mut bytes = w.manifest.into_bytes();
    bytes.extend_from_slice(&blob_bytes);
    write_atomic(path, &bytes)
}

struct Section {
    header: String,
    entries: BTreeMap<String, String>,
}

fn parse_manifest(text: &str) -> Result<Vec<Section>> {
    let mut lines = text.lines();
    let version = lines.next().unwrap_or_default().trim();
    if version != CONTAINER_VERSION {
        return Err(Error::Container(format!(
            "unsupported container version '{version}', expected '{CONTAINER_VERSION}'"
        )));
    }
    let mut sections = Vec::new();
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push(Section { header: header.to_string(), entries: BTreeMap::new() });
        } else if let Some((key, value)) = line.split_once('=') {
            let section = sections
                .last_mut()
                .ok_or_else(|| Error::Container(format!("entry '{line}' before any section")))?;
            section.entries.insert(key.trim().to_string(), value.trim().to_string());
        } else {
            return Err(Error::Container(format!("unparseable manifest line '{line}'")));
        }
    }
    Ok(sections)
}

struct BlobReader<'a> {
    values: &'a [f64],
    cursor: usize,
}

impl<'a> BlobReader<'a> {
    fn take(&mut self, n: usize) -> Result<Vec<f64>> {
        let end = self.cursor + n;
        let slice = self
            .values
            .get(self.cursor..end)
            .ok_or_else(|| Error::Container("weights blob shorter than manifest".into()))?;
        self.cursor = end;
        Ok(slice.to_vec())
    }

    fn tensor(&mut self, section: &Section, key: &str) -> Result<Tensor> {
        let shape = parse_shape(section.get(key)?)?;
        let n = shape.iter().product();
        Tensor::new(shape, self.take(n)?)
    }
}

impl Section {
    fn get(&self, key: &str) -> Result<&str> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Container(format!("[{}] is missing '{key}'", self.header)))
    }

    fn scalar(&self, key: &str) -> Result<f64> {
        self.get(key)?
            .parse::<f64>()
            .map_err(|_| Error::Container(format!("[{}] has non-numeric '{key}'", self.header)))
    }

    fn int(&self, key: &str) -> Result<u32> {
        self.get(key)?
            .parse::<u32>()
            .map_err(|_| Error::Container(format!("[{}] has non-integer '{key}'", self.header)))
    }
}

fn read_recurrent(section: &Section, blob: &mut BlobReader<'_>) -> Result<RecurrentSpec> {
    let form = match section.get("form")? {
        "dense" => RecurrentForm::Dense,
        "diagonal" => RecurrentForm::Diagonal,
        other => return Err(Error::Container(format!("unknown recurrent form '{other}'"))),
    };
    let w_ih = blob.tensor(section, "w_ih")?;
    let b_ih = blob.tensor(section, "b_ih")?;
    let w_hh = blob.tensor(section, "w_hh")?;
    let b_hh = blob.tensor(section, "b_hh")?;
    let qp = if section.entries.contains_key("scale") {
        Some(QuantParams::new(section.scalar("scale")?, section.int("levels")?)?)
    } else {
        None
    };
    Ok(RecurrentSpec { w_ih, b_ih, w_hh, b_hh, form, qp })
}

fn read_neuron(section: &Section, blob: &mut BlobReader<'_>) -> Result<NeuronConfig> {
    let v_init = if section.entries.contains_key("v_init_uniform") {
        VInit::Uniform(section.scalar("v_init_uniform")?)
    } else {
        let spec = section.get("v_init")?;
        let (kind, len) = spec
            .split_once(':')
            .ok_or_else(|| Error::Container(format!("bad v_init spec '{spec}'")))?;
        let n: usize = len
            .parse()
            .map_err(|_| Error::Container(format!("bad v_init length '{len}'")))?;
        match kind {
            "per_unit" => VInit::PerUnit(blob.take(n)?),
            "per_channel" => VInit::PerChannel(blob.take(n)?),
            other => return Err(Error::Container(format!("unknown v_init kind '{other}'"))),
        }
    };
    Ok(NeuronConfig {
        threshold: section.scalar("threshold")?,
        tracer_max: section.int("tracer_max")?,
        v_init,
        bias_folded: section.get("bias_folded")? == "true",
    })
}

/// Deserialize a container file. The blob checksum and length are checked
/// before any tensor is built.
pub fn load_model(path: &Path) -> Result<ModelGraph> {
    let bytes = fs::read(path)?;
    let marker = bytes
        .windows(BLOB_MARKER.len())
        .position(|w| w == BLOB_MARKER)
        .ok_or_else(|| Error::Container("missing blob marker".into()))?;
    let manifest = std::str::from_utf8(&bytes[..marker])
        .map_err(|_| Error::Container("manifest is not valid UTF-8".into()))?;
    let blob_bytes = &bytes[marker + BLOB_MARKER.len()..];

    let sections = parse_manifest(manifest)?;
    let weights = sections
        .iter()
        .find(|s| s.header == "weights")
        .ok_or_else(|| Error::Container("missing [weights] section".into()))?;
    let count: usize = weights
        .get("count")?
        .parse()
        .map_err(|_| Error::Container("bad weight count".into()))?;
    if weights.get("dtype")? != "f64" {
        return Err(Error::Container(format!("unsupported dtype '{}'", weights.get("dtype")?)));
    }
    if blob_bytes.len() != count * 8 {
        return Err(Error::Container(format!(
            "blob holds {} bytes, manifest declares {}",
            blob_bytes.len(),
            count * 8
        )));
    }
    let declared_crc = u32::from_str_radix(weights.get("crc32")?, 16)
        .map_err(|_| Error::Container("bad checksum field".into()))?;
    let actual_crc = crc32fast::hash(blob_bytes);
    if actual_crc != declared_crc {
        return Err(Error::Container(format!(
            "checksum mismatch: manifest {declared_crc:08x}, blob {actual_crc:08x}"
        )));
    }
    let values: Vec<f64> = blob_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut blob = BlobReader { values: &values, cursor: 0 };

    let model_section = sections
        .iter()
        .find(|s| s.header == "model")
        .ok_or_else(|| Error::Container("missing [model] section".into()))?;
    let input_shape = parse_shape(model_section.get("input_shape")?)?;
    let quantized = model_section.get("quantized")? == "true";
    let aux_inputs = match model_section.get("aux")? {
        "none" => Vec::new(),
        spec => spec
            .split(',')
            .map(|part| {
                let (name, len) = part
                    .split_once(':')
                    .ok_or_else(|| Error::Container(format!("bad aux spec '{part}'")))?;
                Ok(AuxInput {
                    name: name.to_string(),
                    len: len
                        .parse()
                        .map_err(|_| Error::Container(format!("bad aux length '{len}'")))?,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let layer_count: usize = model_section
        .get("layers")?
        .parse()
        .map_err(|_| Error::Container("bad layer count".into()))?;

    let mut layers = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let header = format!("layer {i}");
        let section = sections
            .iter()
            .find(|s| s.header == header)
            .ok_or_else(|| Error::Container(format!("missing [{header}] section")))?;
        let name = section.get("name")?.to_string();
        let kind = match section.get("kind")? {
            "linear" => LayerKind::Linear {
                weight: blob.tensor(section, "weight")?,
                bias: blob.tensor(section, "bias")?,
            },
            "conv2d" => LayerKind::Conv2d {
                kernels: blob.tensor(section, "kernels")?,
                bias: blob.tensor(section, "bias")?,
                stride: section.int("stride")? as usize,
                padding: section.int("padding")? as usize,
            },
            "avg_pool" => LayerKind::AvgPool { k: section.int("k")? as usize },
            "max_pool" => LayerKind::MaxPool { k: section.int("k")? as usize },
            "activation" => LayerKind::Activation(match section.get("activation")? {
                "relu" => ActivationKind::Relu,
                "sigmoid" => ActivationKind::Sigmoid,
                "tanh" => ActivationKind::Tanh,
                other => {
                    return Err(Error::Container(format!("unknown activation '{other}'")))
                }
            }),
            "quant_relu" => LayerKind::QuantRelu {
                qp: QuantParams::new(section.scalar("scale")?, section.int("levels")?)?,
            },
            "recurrent" => LayerKind::Recurrent(read_recurrent(section, &mut blob)?),
            "concat" => LayerKind::Concat {
                aux: section.get("aux")?.to_string(),
                clip: (section.scalar("clip_lo")?, section.scalar("clip_hi")?),
            },
            "bif" => LayerKind::Bif { neuron: read_neuron(section, &mut blob)? },
            "rbif" => {
                let spec = read_recurrent(section, &mut blob)?;
                let neuron = read_neuron(section, &mut blob)?;
                LayerKind::RecurrentBif { spec, neuron }
            }
            other => return Err(Error::Container(format!("unknown layer kind '{other}'"))),
        };
        layers.push(LayerSpec::new(name, kind));
    }
    if blob.cursor != values.len() {
        return Err(Error::Container(format!(
            "blob holds {} values, layers consumed {}",
            values.len(),
            blob.cursor
        )));
    }

    let metadata = sections
        .iter()
        .find(|s| s.header == "notes")
        .map(|s| s.entries.clone())
        .unwrap_or_default();

    Ok(ModelGraph { layers, aux_inputs, input_shape, quantized, metadata })
}

/// The manifest text of a container, without the binary blob.
pub fn read_manifest_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let marker = bytes
        .windows(BLOB_MARKER.len())
        .position(|w| w == BLOB_MARKER)
        .ok_or_else(|| Error::Container("missing blob marker".into()))?;
    String::from_utf8(bytes[..marker].to_vec())
        .map_err(|_| Error::Container("manifest is not valid UTF-8".into()))
}
