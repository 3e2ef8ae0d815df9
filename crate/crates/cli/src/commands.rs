//! Subcommand implementations.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spikemorph_core::dataio::{
    self, export_collision_csv, read_manifest_text, synth_collision_dataset, SeqGranularity,
    SequenceSample, SynthConfig, Target,
};
use spikemorph_core::fsutil::write_atomic;
use spikemorph_core::modelgen;
use spikemorph_core::morph::{convert_model, roundtrip_check, ConversionConfig};
use spikemorph_core::snn::{simulate, Encoding, SimConfig};
use spikemorph_core::train::{self, bind_sample, LrSchedule, TrainConfig};
use spikemorph_core::verify::{
    emit_ablation, emit_equivalence, emit_sweep, encoding_ablation, layerwise_l1, sweep_t,
    EquivalenceReport, LayerEquivalence,
};
use spikemorph_core::{
    load_model, qmodel_forward, save_model, Error, Loss, ModelGraph, Result,
};

use crate::config::ConfigFile;

/// Errors with CLI-specific exit semantics layered over the core kinds.
#[derive(Debug)]
pub enum CommandError {
    Core(Error),
    Usage(String),
    NonQuiescent(String),
    Mismatch(String),
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CommandError::Core(e) => write!(f, "{e}"),
            CommandError::Usage(m) | CommandError::NonQuiescent(m) | CommandError::Mismatch(m) => {
                write!(f, "{m}")
            }
        }
    }
}

impl From<Error> for CommandError {
    fn from(e: Error) -> Self {
        CommandError::Core(e)
    }
}

type CmdResult = std::result::Result<(), CommandError>;

#[derive(Parser)]
#[command(
    name = "spikemorph",
    version,
    about = "Train quantized networks, convert them losslessly to spiking networks, and verify the equivalence",
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskKind {
    /// Row-sequential image classification from IDX files.
    MnistRows,
    /// Synthetic collision-avoidance regression.
    Collision,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    SAnalog,
    MAnalog,
}

impl From<EncodingArg> for Encoding {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::SAnalog => Encoding::SAnalog,
            EncodingArg::MAnalog => Encoding::MAnalog,
        }
    }
}

/// Synthetic-dataset shape flags, shared by several subcommands.
#[derive(Args, Clone)]
pub struct SynthArgs {
    /// Scanner rays (>= 8).
    #[arg(long)]
    rays: Option<usize>,
    /// Sub-sequence length.
    #[arg(long)]
    sub_seq_len: Option<usize>,
    /// Number of independent traces.
    #[arg(long)]
    traces: Option<usize>,
    /// Steps simulated per trace.
    #[arg(long)]
    steps_per_trace: Option<usize>,
    /// Obstacles per trace.
    #[arg(long)]
    obstacles: Option<usize>,
}

impl SynthArgs {
    fn build(&self, cfg: &ConfigFile, seed: u64) -> Result<SynthConfig> {
        let d = SynthConfig::default();
        Ok(SynthConfig {
            rays: cfg.get_or("rays", self.rays, d.rays)?,
            sub_seq_len: cfg.get_or("sub_seq_len", self.sub_seq_len, d.sub_seq_len)?,
            traces: cfg.get_or("traces", self.traces, d.traces)?,
            steps_per_trace: cfg.get_or("steps_per_trace", self.steps_per_trace, d.steps_per_trace)?,
            obstacles: cfg.get_or("obstacles", self.obstacles, d.obstacles)?,
            seed,
        })
    }
}

/// IDX dataset flags.
#[derive(Args, Clone)]
pub struct IdxArgs {
    /// IDX image file.
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Keep only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    /// Apply a seeded pixel permutation before row slicing.
    #[arg(long)]
    permute_seed: Option<u64>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Quantization-aware training of a reference architecture.
    Train {
        #[arg(long, value_enum)]
        task: TaskKind,
        /// Output model container.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Quantization level count.
        #[arg(long)]
        levels: Option<u32>,
        /// Hidden units in the recurrent core.
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        idx: IdxArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Convert a quantized container into its spiking counterpart.
    Convert {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the conversion manifest here.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Charge biases at the first time step instead of folding them
        /// into the initial potential.
        #[arg(long)]
        no_fold_bias: bool,
    },
    /// Simulate a converted container on one sample and dump outputs.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        task: TaskKind,
        /// Sample index within the dataset.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum, default_value = "s-analog")]
        encoding: EncodingArg,
        /// Write per-position outputs here (CSV).
        #[arg(long)]
        outputs: Option<PathBuf>,
        /// Write the spike-event trace here (CSV).
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        idx: IdxArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Check exact equivalence between a quantized model and its
    /// conversion on random probes. Exit 0 means lossless.
    Verify {
        #[arg(long)]
        model: PathBuf,
        /// Converted container (converted in-process when omitted).
        #[arg(long)]
        converted: Option<PathBuf>,
        #[arg(long)]
        probes: Option<usize>,
        /// Sequence positions per probe.
        #[arg(long)]
        positions: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Report base path (writes <base>.txt and <base>.csv).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare single-charge and multi-charge analog encodings.
    Ablate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        positions: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Spiking task loss across simulation horizons.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        task: TaskKind,
        /// Comma-separated horizons, e.g. 2,4,8,16,32.
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        idx: IdxArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Write the synthetic collision-avoidance dataset as CSV.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Print a container's manifest.
    Info {
        #[arg(long)]
        model: PathBuf,
    },
}

fn mnist_dataset(idx: &IdxArgs) -> Result<Vec<SequenceSample>> {
    let (Some(images), Some(labels)) = (&idx.images, &idx.labels) else {
        return Err(Error::Argument(
            "mnist-rows needs --images and --labels IDX paths".into(),
        ));
    };
    let ds = dataio::load_mnist_idx(images, labels)?;
    let perm = idx
        .permute_seed
        .map(|seed| dataio::fixed_permutation(ds.rows * ds.cols, seed));
    let n = idx.limit.unwrap_or(ds.images.len()).min(ds.images.len());
    (0..n)
        .map(|i| {
            Ok(SequenceSample {
                inputs: dataio::to_sequence(&ds.images[i], SeqGranularity::Row, perm.as_deref())?,
                aux: None,
                target: Target::Class(ds.labels[i] as usize),
            })
        })
        .collect()
}

fn task_dataset(
    task: TaskKind,
    idx: &IdxArgs,
    synth: &SynthArgs,
    cfg: &ConfigFile,
    seed: u64,
) -> Result<(Vec<SequenceSample>, Loss)> {
    match task {
        TaskKind::MnistRows => Ok((mnist_dataset(idx)?, Loss::CrossEntropy)),
        TaskKind::Collision => {
            let sc = synth.build(cfg, seed)?;
            Ok((synth_collision_dataset(&sc)?, Loss::Mse))
        }
    }
}
#[allow(clippy::too_many_arguments)]
fn cmd_train(
    task: TaskKind,
    out: &Path,
    metrics: Option<&Path>,
    epochs: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    levels: Option<u32>,
    hidden: Option<usize>,
    seed: u64,
    config: Option<&Path>,
    idx: &IdxArgs,
    synth: &SynthArgs,
) -> CmdResult {
    let cfg = ConfigFile::load(config)?;
    let levels = cfg.get_or("levels", levels, 16u32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dataset, loss) = task_dataset(task, idx, synth, &cfg, seed)?;
    if dataset.is_empty() {
        return Err(Error::Argument("dataset is empty".into()).into());
    }

    let (mut model, train_cfg) = match task {
        TaskKind::MnistRows => {
            let row_len = dataset[0].inputs[0].len();
            let hidden = cfg.get_or("hidden", hidden, 128usize)?;
            let model = modelgen::reference_mnist_rows(&mut rng, row_len, hidden, 10, levels);
            let tc = TrainConfig {
                epochs: cfg.get_or("epochs", epochs, 15)?,
                batch_size: cfg.get_or("batch", batch, 64)?,
                learning_rate: cfg.get_or("lr", lr, 2e-3)?,
                loss,
                seed,
                schedule: LrSchedule::Cosine,
                recurrent_clamp: Some(1.0),
                ..TrainConfig::default()
            };
            (model, tc)
        }
        TaskKind::Collision => {
            let rays = dataset[0].inputs[0].len();
            let hidden = cfg.get_or("hidden", hidden, 32usize)?;
            let model = modelgen::reference_collision(&mut rng, rays, hidden, levels);
            let tc = TrainConfig {
                epochs: cfg.get_or("epochs", epochs, 30)?,
                batch_size: cfg.get_or("batch", batch, 16)?,
                learning_rate: cfg.get_or("lr", lr, 1e-3)?,
                loss,
                seed,
                schedule: LrSchedule::Constant,
                ..TrainConfig::default()
            };
            (model, tc)
        }
    };

    model.note(
        "task",
        match task {
            TaskKind::MnistRows => "mnist-rows",
            TaskKind::Collision => "collision",
        },
    );
    model.note("seed", seed);
    model.note("levels", levels);
    model.note("epochs", train_cfg.epochs);
    if let Some(permute_seed) = idx.permute_seed {
        model.note("permutation", format!("chacha8:{permute_seed}"));
    }
    let result = train::train(&model, &dataset, &train_cfg)?;
    if let Some(path) = metrics {
        train::write_metrics_csv(&result.history, path)?;
    }
    if let Some(epoch) = result.diverged {
        save_model(&result.model, out)?;
        return Err(CommandError::Core(Error::Training(format!(
            "loss became non-finite at epoch {epoch}; last good checkpoint saved to {}",
            out.display()
        ))));
    }
    save_model(&result.model, out)?;
    if let Some(last) = result.history.last() {
        match last.accuracy {
            Some(acc) => println!(
                "trained {} epochs: loss {:.6}, accuracy {:.4}",
                result.history.len(),
                last.loss,
                acc
            ),
            None => println!("trained {} epochs: loss {:.6}", result.history.len(), last.loss),
        }
    }
    println!("model written to {}", out.display());
    Ok(())
}

fn cmd_convert(model: &Path, out: &Path, manifest: Option<&Path>, no_fold_bias: bool) -> CmdResult {
    let graph = load_model(model)?;
    let cfg = ConversionConfig { fold_bias: !no_fold_bias };
    let (converted, man) = convert_model(&graph, &cfg)?;
    save_model(&converted, out)?;
    if let Some(path) = manifest {
        write_atomic(path, man.render().as_bytes())?;
    }
    println!(
        "converted {} spiking layers ({} encoding); model written to {}",
        converted.spiking_depth(),
        man.encoding.name(),
        out.display()
    );
    Ok(())
}

fn sample_inputs(model: &ModelGraph, sample: &SequenceSample) -> spikemorph_core::SequenceInputs {
    bind_sample(model, sample)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    model_path: &Path,
    task: TaskKind,
    index: usize,
    horizon: Option<usize>,
    encoding: EncodingArg,
    outputs: Option<&Path>,
    trace_path: Option<&Path>,
    seed: u64,
    config: Option<&Path>,
    idx: &IdxArgs,
    synth: &SynthArgs,
) -> CmdResult {
    let cfg_file = ConfigFile::load(config)?;
    let model = load_model(model_path)?;
    if !model.is_converted() {
        return Err(Error::State(
            "container holds a quantized model; run `convert` first".into(),
        )
        .into());
    }
    let (dataset, _) = task_dataset(task, idx, synth, &cfg_file, seed)?;
    let sample = dataset
        .get(index)
        .ok_or_else(|| Error::Argument(format!("index {index} out of {}", dataset.len())))?;
    let seq = sample_inputs(&model, sample);

    let mut sim = SimConfig::for_model(&model).with_encoding(encoding.into());
    if let Some(h) = cfg_file.resolve("horizon", horizon)? {
        sim = sim.with_horizon(h);
    }
    sim.record_traces = trace_path.is_some();
    let trace = simulate(&model, &seq, &sim)?;

    match trace.quiescence_step {
        Some(q) => println!("quiescent at step {q} (horizon {})", sim.horizon),
        None => println!("no quiescence within horizon {}", sim.horizon),
    }
    if let Some(path) = outputs {
        let mut csv = String::from("k");
        let width = trace.outputs.first().map_or(0, |o| o.len());
        for i in 0..width {
            write!(csv, ",out_{i}").expect("string write");
        }
        csv.push('\n');
        for (k, out) in trace.outputs.iter().enumerate() {
            write!(csv, "{}", k + 1).expect("string write");
            for v in out.data() {
                write!(csv, ",{v}").expect("string write");
            }
            csv.push('\n');
        }
        write_atomic(path, csv.as_bytes())?;
        println!("outputs written to {}", path.display());
    }
    if let Some(path) = trace_path {
        trace.write_events_csv(path)?;
        println!("trace written to {}", path.display());
    }
    if let Some(w) = trace.warning {
        return Err(CommandError::NonQuiescent(format!(
            "horizon {} reached with residual potential up to {:.6}",
            w.horizon, w.max_abs_residual
        )));
    }
    Ok(())
}

fn merge_reports(mut reports: Vec<EquivalenceReport>) -> EquivalenceReport {
    let mut merged = reports.remove(0);
    for r in reports {
        merged.positions += r.positions;
        merged.quiescence_step = match (merged.quiescence_step, r.quiescence_step) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        for (dst, src) in merged.layers.iter_mut().zip(r.layers) {
            dst.l1 += src.l1;
            dst.mismatches += src.mismatches;
            dst.ann_sum += src.ann_sum;
            dst.snn_sum += src.snn_sum;
        }
    }
    merged
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    model_path: &Path,
    converted_path: Option<&Path>,
    probes: Option<usize>,
    positions: Option<usize>,
    horizon: Option<usize>,
    report_base: Option<&Path>,
    seed: u64,
    config: Option<&Path>,
) -> CmdResult {
    let cfg_file = ConfigFile::load(config)?;
    let probes = cfg_file.get_or("probes", probes, 8usize)?;
    let positions = cfg_file.get_or("positions", positions, 6usize)?;
    let model = load_model(model_path)?;
    if model.is_converted() {
        return Err(Error::State(
            "--model must be the quantized source container (see --converted)".into(),
        )
        .into());
    }
    let converted = match converted_path {
        Some(p) => load_model(p)?,
        None => convert_model(&model, &ConversionConfig::default())?.0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe_seqs: Vec<_> =
        (0..probes).map(|_| modelgen::random_sequence(&model, positions, &mut rng)).collect();
    let mut sim = SimConfig::for_model(&converted);
    if let Some(h) = cfg_file.resolve("horizon", horizon)? {
        sim = sim.with_horizon(h);
    }

    let check = roundtrip_check(&model, &converted, &probe_seqs, Some(sim.clone()))?;

    let mut reports = Vec::with_capacity(probe_seqs.len());
    for seq in &probe_seqs {
        let record = qmodel_forward(&model, seq)?;
        let trace = simulate(&converted, seq, &sim)?;
        reports.push(layerwise_l1(&record, &trace)?);
    }
    let merged = if reports.is_empty() {
        EquivalenceReport {
            layers: converted
                .layers
                .iter()
                .filter(|l| l.kind.is_spiking_site())
                .map(|l| LayerEquivalence {
                    layer: l.name.clone(),
                    l1: 0.0,
                    mismatches: 0,
                    ann_sum: 0.0,
                    snn_sum: 0.0,
                })
                .collect(),
            quiescence_step: None,
            positions: 0,
        }
    } else {
        merge_reports(reports)
    };
    if let Some(base) = report_base {
        let (txt, csv) = emit_equivalence(&merged, base)?;
        println!("report written to {} and {}", txt.display(), csv.display());
    }

    println!(
        "checked {} code/tracer pairs over {} probes: {} mismatches",
        check.pairs_checked, probes, check.mismatches
    );
    if let Some(w) = check.warning {
        return Err(CommandError::NonQuiescent(format!(
            "simulation hit horizon {} without quiescence (max residual {:.6})",
            w.horizon, w.max_abs_residual
        )));
    }
    if check.mismatches > 0 {
        return Err(CommandError::Mismatch(format!(
            "{} of {} pairs disagree",
            check.mismatches, check.pairs_checked
        )));
    }
    println!("verdict: lossless");
    Ok(())
}

fn cmd_ablate(
    model_path: &Path,
    positions: Option<usize>,
    horizon: Option<usize>,
    report_base: Option<&Path>,
    seed: u64,
    config: Option<&Path>,
) -> CmdResult {
    let cfg_file = ConfigFile::load(config)?;
    let positions = cfg_file.get_or("positions", positions, 64usize)?;
    let model = load_model(model_path)?;
    if model.is_converted() {
        return Err(Error::State("--model must be the quantized source container".into()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seq = modelgen::random_sequence(&model, positions, &mut rng);
    let horizon = cfg_file.get_or(
        "horizon",
        horizon,
        4 * (model.max_levels() as usize + model.spiking_depth()),
    )?;
    let (s_curve, m_curve) = encoding_ablation(&model, &seq, horizon)?;
    println!(
        "s-analog max distance {:.9}, m-analog max distance {:.9} (slope {:.9})",
        s_curve.distances.iter().cloned().fold(0.0, f64::max),
        m_curve.distances.iter().cloned().fold(0.0, f64::max),
        m_curve.slope()
    );
    if let Some(base) = report_base {
        let (txt, csv) = emit_ablation(&s_curve, &m_curve, base)?;
        println!("report written to {} and {}", txt.display(), csv.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    model_path: &Path,
    task: TaskKind,
    horizons: &[usize],
    report_base: Option<&Path>,
    seed: u64,
    config: Option<&Path>,
    idx: &IdxArgs,
    synth: &SynthArgs,
) -> CmdResult {
    if horizons.is_empty() {
        return Err(CommandError::Usage("--horizons needs at least one value".into()));
    }
    let cfg_file = ConfigFile::load(config)?;
    let model = load_model(model_path)?;
    if model.is_converted() {
        return Err(Error::State("--model must be the quantized source container".into()).into());
    }
    let (dataset, loss) = task_dataset(task, idx, synth, &cfg_file, seed)?;
    let sweep = sweep_t(&model, None, &dataset, loss, horizons)?;
    match sweep.quiescence_step {
        Some(q) => println!("quiescence step over the dataset: {q}"),
        None => println!("some runs did not quiesce within the default horizon"),
    }
    println!("ann_loss {:?}", sweep.ann_loss);
    for (h, l) in &sweep.rows {
        println!("T={h}: loss {l:?}");
    }
    if let Some(base) = report_base {
        let (txt, csv) = emit_sweep(&sweep, base)?;
        println!("report written to {} and {}", txt.display(), csv.display());
    }
    Ok(())
}

fn cmd_synth_data(out: &Path, seed: u64, config: Option<&Path>, synth: &SynthArgs) -> CmdResult {
    let cfg_file = ConfigFile::load(config)?;
    let sc = synth.build(&cfg_file, seed)?;
    let samples = synth_collision_dataset(&sc)?;
    export_collision_csv(&samples, sc.rays, out)?;
    println!("{} sub-sequences of length {} written to {}", samples.len(), sc.sub_seq_len, out.display());
    Ok(())
}

fn cmd_info(model: &Path) -> CmdResult {
    print!("{}", read_manifest_text(model)?);
    Ok(())
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Train {
            task,
            out,
            metrics,
            epochs,
            batch,
            lr,
            levels,
            hidden,
            seed,
            config,
            idx,
            synth,
        } => cmd_train(
            task,
            &out,
            metrics.as_deref(),
            epochs,
            batch,
            lr,
            levels,
            hidden,
            seed,
            config.as_deref(),
            &idx,
            &synth,
        ),
        Command::Convert { model, out, manifest, no_fold_bias } => {
            cmd_convert(&model, &out, manifest.as_deref(), no_fold_bias)
        }
        Command::Simulate {
            model,
            task,
            index,
            horizon,
            encoding,
            outputs,
            trace,
            seed,
            config,
            idx,
            synth,
        } => cmd_simulate(
            &model,
            task,
            index,
            horizon,
            encoding,
            outputs.as_deref(),
            trace.as_deref(),
            seed,
            config.as_deref(),
            &idx,
            &synth,
        ),
        Command::Verify { model, converted, probes, positions, horizon, report, seed, config } => {
            cmd_verify(
                &model,
                converted.as_deref(),
                probes,
                positions,
                horizon,
                report.as_deref(),
                seed,
                config.as_deref(),
            )
        }
        Command::Ablate { model, positions, horizon, report, seed, config } => {
            cmd_ablate(&model, positions, horizon, report.as_deref(), seed, config.as_deref())
        }
        Command::Sweep { model, task, horizons, report, seed, config, idx, synth } => cmd_sweep(
            &model,
            task,
            &horizons,
            report.as_deref(),
            seed,
            config.as_deref(),
            &idx,
            &synth,
        ),
        Command::SynthData { out, seed, config, synth } => {
            cmd_synth_data(&out, seed, config.as_deref(), &synth)
        }
        Command::Info { model } => cmd_info(&model),
    }
}
