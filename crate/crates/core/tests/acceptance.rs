//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured evidence. Run with
//! `cargo test -p spikemorph-core --test acceptance -- --nocapture`.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikemorph_core::dataio::{
    self, write_idx_images, write_idx_labels, SeqGranularity, SequenceSample, Target,
};
use spikemorph_core::modelgen;
use spikemorph_core::morph::{convert_model, roundtrip_check, ConversionConfig};
use spikemorph_core::snn::SimConfig;
use spikemorph_core::train::{
    self, backward, forward_train, loss_and_grad, param_layout, params_flat, set_params_flat,
    LrSchedule, QuantMode, TrainConfig,
};
use spikemorph_core::verify::{encoding_ablation, layerwise_l1, sweep_t};
use spikemorph_core::{
    closed_form_codes, qmodel_forward, simulate, Loss, ModelGraph, RecurrentForm, SequenceInputs,
    Tensor,
};

fn assert_three_routes_agree(model: &ModelGraph, converted: &ModelGraph, seq: &SequenceInputs) {
    let record = qmodel_forward(model, seq).expect("quantized forward");
    let trace = simulate(converted, seq, &SimConfig::for_model(converted)).expect("simulation");
    assert!(trace.warning.is_none(), "simulation must reach quiescence");
    let closed = closed_form_codes(converted, seq).expect("closed form");
    assert_eq!(record.layers.len(), trace.layers.len());
    for (site, (sim_layer, closed_layer)) in
        record.layers.iter().zip(trace.layers.iter().zip(&closed))
    {
        for (k, codes) in site.codes.iter().enumerate() {
            assert_eq!(
                codes.data(),
                sim_layer.tracers[k].data(),
                "site '{}' position {k}: simulation diverged from quantized codes",
                site.name
            );
            assert_eq!(
                codes.data(),
                closed_layer[k].data(),
                "site '{}' position {k}: closed form diverged from quantized codes",
                site.name
            );
        }
    }
}

/// Criterion 1: lossless conversion of random quantized recurrent networks,
/// exact integer agreement for every neuron and sequence position.
#[test]
fn acceptance_1_recurrent_lossless_conversion() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let mut pairs = 0usize;
    for trial in 0..100 {
        let layers = 1 + trial % 3;
        let hidden = 4 + rng.random_range(0..29); // <= 32
        let input = 2 + rng.random_range(0..6);
        let levels = [4u32, 8, 16][trial % 3];
        let form = if trial % 2 == 0 { RecurrentForm::Dense } else { RecurrentForm::Diagonal };
        let k = 1 + rng.random_range(0..20); // <= 20
        let model = modelgen::random_recurrent_stack(&mut rng, layers, hidden, input, levels, form);
        let cfg = ConversionConfig { fold_bias: trial % 3 != 2 };
        let (converted, _) = convert_model(&model, &cfg).expect("conversion");
        let probe = modelgen::random_sequence(&model, k, &mut rng);
        let report = roundtrip_check(&model, &converted, std::slice::from_ref(&probe), None).expect("roundtrip");
        assert!(report.warning.is_none(), "trial {trial} did not quiesce");
        assert_eq!(report.mismatches, 0, "trial {trial}: {} mismatches", report.mismatches);
        pairs += report.pairs_checked;
        assert_three_routes_agree(&model, &converted, &probe);
    }
    println!(
        "acceptance 1 (recurrent lossless conversion): PASS - 100 networks, {pairs} exact \
         code/tracer pairs, {:.1}s",
        started.elapsed().as_secs_f64()
    );
}

/// Criterion 2: lossless conversion of feedforward stacks (linear, conv,
/// avg-pool, quantized ReLU) up to five activation sites deep.
#[test]
fn acceptance_2_feedforward_lossless_conversion() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB2);
    let mut pairs = 0usize;
    for trial in 0..100 {
        let sites = 1 + trial % 5;
        let width = 4 + rng.random_range(0..9);
        let levels = [4u32, 8, 16][trial % 3];
        let model = modelgen::random_feedforward(&mut rng, sites, width, levels);
        let cfg = ConversionConfig { fold_bias: trial % 3 != 2 };
        let (converted, _) = convert_model(&model, &cfg).expect("conversion");
        let probe = modelgen::random_sequence(&model, 1 + trial % 2, &mut rng);
        let report = roundtrip_check(&model, &converted, std::slice::from_ref(&probe), None).expect("roundtrip");
        assert!(report.warning.is_none(), "trial {trial} did not quiesce");
        assert_eq!(report.mismatches, 0, "trial {trial}: {} mismatches", report.mismatches);
        pairs += report.pairs_checked;
        assert_three_routes_agree(&model, &converted, &probe);
    }
    println!(
        "acceptance 2 (feedforward lossless conversion): PASS - 100 stacks, {pairs} exact \
         code/tracer pairs, {:.1}s",
        started.elapsed().as_secs_f64()
    );
}

/// Criterion 3: compound conv -> recurrent -> linear model with an
/// auxiliary concat input shows per-layer L1 of exactly zero and equal
/// activation sums at quiescence.
#[test]
fn acceptance_3_compound_crnn_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
    let model = modelgen::random_crnn(&mut rng, 16, 20, 16, 3);
    let (converted, _) = convert_model(&model, &ConversionConfig::default()).expect("conversion");
    let seq = modelgen::random_sequence(&model, 8, &mut rng);
    let record = qmodel_forward(&model, &seq).expect("quantized forward");
    let trace = simulate(&converted, &seq, &SimConfig::for_model(&converted)).expect("simulation");
    let report = layerwise_l1(&record, &trace).expect("comparison");
    assert!(report.lossless(), "integer mismatch count must be zero");
    for layer in &report.layers {
        assert!(layer.l1 < 1e-5, "layer {}: L1 {}", layer.layer, layer.l1);
        assert_eq!(layer.l1, 0.0, "layer {}: expected exact zero L1", layer.layer);
        assert_eq!(
            layer.ann_sum, layer.snn_sum,
            "layer {}: activation sums must agree exactly",
            layer.layer
        );
    }
    println!(
        "acceptance 3 (compound CRNN equivalence): PASS - {} layers, all L1 = 0, sums equal, \
         quiescence at {:?}",
        report.layers.len(),
        report.quiescence_step
    );
}

fn collision_dataset(seed: u64) -> Vec<SequenceSample> {
    dataio::synth_collision_dataset(&dataio::SynthConfig {
        rays: 16,
        sub_seq_len: 8,
        traces: 6,
        steps_per_trace: 64,
        obstacles: 6,
        seed,
    })
    .expect("surrogate dataset")
}

/// Criterion 4: on the collision surrogate with a trained quantized
/// compound network, spiking MSE across horizons {2,4,8,16,32} is
/// non-increasing and equals the quantized MSE (within 1e-7) for every
/// horizon at or past the measured quiescence step.
#[test]
fn acceptance_4_horizon_sweep_pattern() {
    let started = Instant::now();
    let dataset = collision_dataset(21);
    let mut rng = ChaCha8Rng::seed_from_u64(0xD4);
    let model = modelgen::reference_collision(&mut rng, 16, 24, 8);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 16,
        learning_rate: 1e-3,
        loss: Loss::Mse,
        seed: 4,
        schedule: LrSchedule::Constant,
        ..TrainConfig::default()
    };
    let trained = train::train(&model, &dataset, &cfg).expect("training");
    assert!(trained.diverged.is_none());

    let horizons = [2usize, 4, 8, 16, 32];
    let sweep = sweep_t(&trained.model, None, &dataset, Loss::Mse, &horizons).expect("sweep");
    for w in sweep.rows.windows(2) {
        assert!(
            w[1].1 <= w[0].1 + 1e-12,
            "loss must be non-increasing: T={} gives {}, T={} gives {}",
            w[0].0,
            w[0].1,
            w[1].0,
            w[1].1
        );
    }
    let q = sweep.quiescence_step.expect("must quiesce under the default horizon");
    let mut at_or_past = 0;
    for &(h, loss) in &sweep.rows {
        if h >= q {
            at_or_past += 1;
            assert!(
                (loss - sweep.ann_loss).abs() < 1e-7,
                "T={h} >= quiescence {q}: spiking loss {loss} vs quantized {}",
                sweep.ann_loss
            );
        }
    }
    assert!(at_or_past >= 1, "no swept horizon reached the quiescence step {q}");
    println!(
        "acceptance 4 (horizon sweep pattern): PASS - quiescence {q}, losses {:?} vs quantized \
         {:.6}, {:.1}s",
        sweep.rows.iter().map(|(_, l)| (*l * 1e6).round() / 1e6).collect::<Vec<_>>(),
        sweep.ann_loss,
        started.elapsed().as_secs_f64()
    );
}

/// Pixel-fed recurrent model whose multi-charge behavior mirrors the
/// sequential-error mechanism: a quiet prefix, then sparse bright inputs
/// whose density ramps up, each adding fresh error on top of what the
/// dense recurrence carries forward.
fn ablation_fixture() -> (ModelGraph, SequenceInputs) {
    use spikemorph_core::{LayerKind, LayerSpec, QuantParams, RecurrentSpec};
    let hidden = 24usize;
    let levels = 16u32;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = 1.2 / (hidden as f64).sqrt();
    let w_hh = Tensor::new(
        vec![hidden, hidden],
        (0..hidden * hidden).map(|_| rng.random_range(-a..a)).collect(),
    )
    .unwrap();
    let spec = RecurrentSpec {
        w_ih: modelgen::random_matrix(&mut rng, hidden, 1),
        b_ih: Tensor::zeros(vec![hidden]),
        w_hh,
        b_hh: Tensor::zeros(vec![hidden]),
        form: RecurrentForm::Dense,
        qp: Some(QuantParams::new(1.2 / levels as f64, levels).unwrap()),
    };
    let mut model = ModelGraph::new(
        vec![1],
        vec![LayerSpec::new("core", LayerKind::Recurrent(spec))],
        vec![],
    );
    model.mark_quantized().unwrap();

    let (k, quiet) = (256usize, 32usize);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let steps = (0..k)
        .map(|i| {
            let density = if i < quiet {
                0.0
            } else {
                0.05 + 0.20 * (i - quiet) as f64 / (k - quiet) as f64
            };
            let v = if rng.random_range(0.0..1.0) < density {
                rng.random_range(0.4..1.0)
            } else {
                0.0
            };
            Tensor::scalar(v)
        })
        .collect();
    (model, SequenceInputs::new(steps))
}

/// Criterion 5: on a 256-position sequence, the single-charge curve is
/// identically zero while the multi-charge curve trends upward and ends
/// strictly positive when any position carries sequential error.
#[test]
fn acceptance_5_encoding_ablation_shape() {
    let (model, seq) = ablation_fixture();
    let (s_curve, m_curve) = encoding_ablation(&model, &seq, 68).expect("ablation");
    assert_eq!(s_curve.distances.len(), 256);
    assert!(
        s_curve.distances.iter().all(|&d| d == 0.0),
        "single-charge curve must be identically zero"
    );
    let slope = m_curve.slope();
    assert!(slope >= 0.0, "multi-charge error trend must be non-negative, got {slope}");
    let has_error = m_curve.distances.iter().any(|&d| d > 0.0);
    assert!(has_error, "multi-charge encoding should show sequential error on this network");
    let last = *m_curve.distances.last().unwrap();
    assert!(last > 0.0, "final multi-charge distance must be strictly positive");
    println!(
        "acceptance 5 (encoding ablation shape): PASS - single-charge max 0 over 256 positions, \
         multi-charge slope {slope:.6}, final distance {last:.6}"
    );
}

fn synthetic_digit_images(n: usize, seed: u64) -> (Vec<Tensor>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 10) as u8;
        let dx = rng.random_range(-3i64..=3);
        let dy = rng.random_range(-3i64..=3);
        let amp: f64 = rng.random_range(0.6..1.0);
        let mut img = vec![0.0f64; 28 * 28];
        let put = |img: &mut Vec<f64>, r: i64, c: i64, v: f64| {
            if (0..28).contains(&r) && (0..28).contains(&c) {
                let idx = (r * 28 + c) as usize;
                img[idx] = img[idx].max(v);
            }
        };
        let bar_col = 3 + (5 * class as i64) % 18 + dx;
        for r in (4 + dy)..(24 + dy) {
            for c in bar_col..bar_col + 3 {
                put(&mut img, r, c, amp);
            }
        }
        let bar_row = 3 + (7 * class as i64) % 18 + dy;
        for r in bar_row..bar_row + 3 {
            for c in (4 + dx)..(24 + dx) {
                put(&mut img, r, c, amp);
            }
        }
        for v in &mut img {
            *v = (*v + rng.random_range(0.0..0.25)).clamp(0.0, 1.0);
        }
        images.push(Tensor::new(vec![28, 28], img).unwrap());
        labels.push(class);
    }
    (images, labels)
}

/// Locate real IDX training data (MNIST_DATA_DIR or ./data/mnist); fall
/// back to a synthetic ten-class digit surrogate serialized through the
/// same IDX byte format so the whole loader path is exercised either way.
fn load_digit_dataset() -> (Vec<SequenceSample>, Vec<SequenceSample>, &'static str) {
    let mut candidates: Vec<PathBuf> = Vec::new();
    if let Ok(dir) = std::env::var("MNIST_DATA_DIR") {
        candidates.push(PathBuf::from(dir));
    }
    candidates.push(PathBuf::from("../../data/mnist"));
    candidates.push(PathBuf::from("data/mnist"));
    let found = candidates.into_iter().find(|dir| {
        dir.join("train-images-idx3-ubyte").is_file() && dir.join("train-labels-idx1-ubyte").is_file()
    });

    let (ds, source) = match found {
        Some(dir) => {
            let ds = dataio::load_mnist_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
            )
            .expect("real IDX data parses");
            (ds, "real IDX data")
        }
        None => {
            let (images, labels) = synthetic_digit_images(12_000, 2024);
            let dir = std::env::temp_dir().join(format!("digits-{}", std::process::id()));
            std::fs::create_dir_all(&dir).unwrap();
            let ip = dir.join("train-images-idx3-ubyte");
            let lp = dir.join("train-labels-idx1-ubyte");
            std::fs::write(&ip, write_idx_images(&images, 28, 28)).unwrap();
            std::fs::write(&lp, write_idx_labels(&labels)).unwrap();
            let ds = dataio::load_mnist_idx(&ip, &lp).expect("synthetic IDX data parses");
            (ds, "synthetic digit surrogate (no IDX files found)")
        }
    };

    let take = |range: std::ops::Range<usize>| -> Vec<SequenceSample> {
        range
            .map(|i| SequenceSample {
                inputs: dataio::to_sequence(&ds.images[i], SeqGranularity::Row, None).unwrap(),
                aux: None,
                target: Target::Class(ds.labels[i] as usize),
            })
            .collect()
    };
    assert!(ds.images.len() >= 12_000, "need at least 12k samples for the 10k/2k split");
    (take(0..10_000), take(10_000..12_000), source)
}

/// Criterion 6: desk-scale end-to-end learning. A quantized element-wise
/// recurrent network trained on row sequences reaches at least 95% test
/// accuracy within 20 epochs on a 10k/2k split, then converts with 100%
/// prediction agreement between the quantized and spiking networks.
#[test]
fn acceptance_6_end_to_end_learning() {
    let started = Instant::now();
    let (train_set, test_set, source) = load_digit_dataset();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF6);
    let model = modelgen::reference_mnist_rows(&mut rng, 28, 128, 10, 16);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 64,
        learning_rate: 2e-3,
        loss: Loss::CrossEntropy,
        seed: 6,
        schedule: LrSchedule::Cosine,
        recurrent_clamp: Some(1.0),
        ..TrainConfig::default()
    };
    let trained = train::train(&model, &train_set, &cfg).expect("training");
    assert!(trained.diverged.is_none());
    let (test_loss, test_acc) = train::evaluate(&trained.model, &test_set, Loss::CrossEntropy)
        .expect("evaluation");
    let test_acc = test_acc.expect("classification accuracy");
    assert!(
        test_acc >= 0.95,
        "test accuracy {test_acc:.4} below the 0.95 gate (loss {test_loss:.4})"
    );

    let (converted, _) = convert_model(&trained.model, &ConversionConfig::default())
        .expect("conversion");
    let sim = SimConfig::for_model(&converted);
    let mut agree = 0usize;
    for sample in &test_set {
        let seq = train::bind_sample(&trained.model, sample);
        let record = qmodel_forward(&trained.model, &seq).expect("quantized forward");
        let trace = simulate(&converted, &seq, &sim).expect("simulation");
        assert!(trace.warning.is_none(), "test-set simulation must quiesce");
        let ann = train::argmax(record.outputs.last().unwrap());
        let snn = train::argmax(trace.outputs.last().unwrap());
        if ann == snn {
            agree += 1;
        }
    }
    assert_eq!(agree, test_set.len(), "prediction agreement must be 100%");
    println!(
        "acceptance 6 (end-to-end learning): PASS - {source}, test accuracy {:.4}, {}/{} \
         predictions agree, {:.0}s",
        test_acc,
        agree,
        test_set.len(),
        started.elapsed().as_secs_f64()
    );
}

fn fd_check(model: &ModelGraph, seq: &SequenceInputs, target: &Target, loss: Loss) -> (usize, f64) {
    let fwd = forward_train(model, seq, QuantMode::Real).unwrap();
    let (_, upstream) = loss_and_grad(&fwd.outputs, target, loss).unwrap();
    let grads = backward(model, &fwd, &upstream).unwrap();
    let frozen = &fwd.frozen;
    let p0 = params_flat(model);
    let layout = param_layout(model);
    let sites = fwd.site_counts(model);
    let h = 1e-3;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for block in &layout {
        let g_factor = if block.is_scale {
            let (_, n_elems, levels) =
                *sites.iter().find(|(li, _, _)| *li == block.layer).unwrap();
            1.0 / (n_elems * levels as f64).sqrt()
        } else {
            1.0
        };
        for i in block.offset..block.offset + block.len {
            let loss_at = |v: f64| -> f64 {
                let mut p = p0.clone();
                p[i] = v;
                let mut m = model.clone();
                set_params_flat(&mut m, &p).unwrap();
                let f = forward_train(&m, seq, QuantMode::Frozen(frozen)).unwrap();
                loss_and_grad(&f.outputs, target, loss).unwrap().0
            };
            let fd = (loss_at(p0[i] + h) - loss_at(p0[i] - h)) / (2.0 * h) * g_factor;
            let analytic = grads.flat[i];
            let denom = fd.abs().max(analytic.abs());
            if denom < 1e-9 {
                continue;
            }
            let rel = (fd - analytic).abs() / denom;
            let tol = if block.is_scale { 1e-3 } else { 1e-4 };
            assert!(
                rel < tol,
                "layer {} field {}: analytic {analytic}, fd {fd}, rel {rel}",
                block.layer,
                block.field
            );
            checked += 1;
            worst = worst.max(rel);
        }
    }
    (checked, worst)
}

/// Criterion 7: analytic gradients match central finite differences of the
/// straight-through surrogate for every layer kind (weights within 1e-4,
/// learned scales within 1e-3). The surrogate freezes each quantizer's
/// branch, so round-tie exclusions are unnecessary; the standalone scale
/// rule is additionally spot-checked on 100 random points away from ties.
#[test]
fn acceptance_7_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x07);
    let mut total = 0usize;
    let mut worst = 0.0f64;

    let ff = modelgen::random_feedforward(&mut rng, 3, 6, 8);
    let seq = modelgen::random_sequence(&ff, 1, &mut rng);
    let (n, w) = fd_check(&ff, &seq, &Target::Class(1), Loss::CrossEntropy);
    total += n;
    worst = worst.max(w);

    let dense = modelgen::random_recurrent_stack(&mut rng, 2, 5, 3, 8, RecurrentForm::Dense);
    let seq = modelgen::random_sequence(&dense, 4, &mut rng);
    let targets = (0..4)
        .map(|_| Tensor::new(vec![4], (0..4).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap())
        .collect();
    let (n, w) = fd_check(&dense, &seq, &Target::PerPosition(targets), Loss::Mse);
    total += n;
    worst = worst.max(w);

    let diag = modelgen::random_recurrent_stack(&mut rng, 1, 6, 3, 16, RecurrentForm::Diagonal);
    let seq = modelgen::random_sequence(&diag, 5, &mut rng);
    let (n, w) = fd_check(&diag, &seq, &Target::Class(2), Loss::CrossEntropy);
    total += n;
    worst = worst.max(w);

    let crnn = modelgen::random_crnn(&mut rng, 8, 5, 8, 3);
    let seq = modelgen::random_sequence(&crnn, 3, &mut rng);
    let targets = (0..3).map(|_| Tensor::scalar(rng.random_range(-0.5..0.5))).collect();
    let (n, w) = fd_check(&crnn, &seq, &Target::PerPosition(targets), Loss::Mse);
    total += n;
    worst = worst.max(w);

    assert!(total >= 100, "only {total} parameter points were exercised");

    // Standalone learned-step-size rule on random points, ties excluded.
    let mut scale_points = 0;
    while scale_points < 100 {
        let s: f64 = rng.random_range(0.05..1.0);
        let levels: u32 = [4u32, 8, 16][rng.random_range(0..3)];
        let x: f64 = rng.random_range(-0.5..(levels as f64 + 1.0)) * s;
        let u = x / s;
        if (u - u.round()).abs() < 1e-6 || u.abs() < 1e-6 || (u - levels as f64).abs() < 1e-6 {
            continue;
        }
        let qp = spikemorph_core::QuantParams::new(s, levels).unwrap();
        let (_, gs) = train::quantize_act_backward(
            &Tensor::scalar(x),
            &qp,
            &Tensor::scalar(1.0),
        )
        .unwrap();
        let g = 1.0 / (levels as f64).sqrt();
        let expected = if u <= 0.0 {
            0.0
        } else if u >= levels as f64 {
            levels as f64 * g
        } else {
            (u.round() - u) * g
        };
        let denom = expected.abs().max(gs.abs()).max(1e-9);
        assert!(((gs - expected) / denom).abs() < 1e-3, "x={x} s={s} n={levels}");
        scale_points += 1;
    }

    println!(
        "acceptance 7 (gradient correctness): PASS - {total} parameter points across all layer \
         kinds (worst rel {worst:.2e}), 100 scale points"
    );
}

/// Criterion 8: simulator conservation. The telescoped-potential identity
/// holds to 1e-9 relative for every neuron, tracer bounds are never
/// violated, and quiescence is absorbing over 1000 randomized runs.
#[test]
fn acceptance_8_simulator_conservation() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x08);
    let mut neurons_checked = 0usize;
    let mut runs = 0usize;
    while runs < 1000 {
        let recurrent = runs.is_multiple_of(2);
        let levels = [4u32, 8, 16][runs % 3];
        let model = if recurrent {
            let form = if runs.is_multiple_of(4) { RecurrentForm::Dense } else { RecurrentForm::Diagonal };
            modelgen::random_recurrent_stack(&mut rng, 1 + runs % 2, 6, 3, levels, form)
        } else {
            modelgen::random_feedforward(&mut rng, 1 + runs % 3, 5, levels)
        };
        let (converted, _) = convert_model(&model, &ConversionConfig::default()).unwrap();
        let seq = modelgen::random_sequence(&model, 1 + runs % 4, &mut rng);
        let mut cfg = SimConfig::for_model(&converted);
        cfg.stop_on_quiescence = false;
        cfg.record_traces = true;
        let trace = simulate(&converted, &seq, &cfg).unwrap();

        // Telescoped potential: V(T) - V(0) = total charge - threshold * S(T).
        for layer in &trace.layers {
            for k in 0..layer.tracers.len() {
                let tracer = &layer.tracers[k];
                for i in 0..tracer.len() {
                    let s = tracer.data()[i];
                    assert!(
                        s >= 0 && s as u32 <= layer.tracer_max,
                        "tracer bound violated: {s} not in [0, {}]",
                        layer.tracer_max
                    );
                    let lhs = layer.residual_v[k].data()[i] - layer.v_init.data()[i];
                    let rhs = layer.charge_sum[k].data()[i] - layer.threshold * s as f64;
                    let denom = lhs.abs().max(rhs.abs()).max(1.0);
                    assert!(
                        ((lhs - rhs) / denom).abs() < 1e-9,
                        "conservation violated: lhs {lhs}, rhs {rhs}"
                    );
                    neurons_checked += 1;
                }
            }
        }

        // Quiescence is absorbing: no spike at or after the detected step,
        // and spikes only ever carry unit magnitude.
        let q = trace.quiescence_step.expect("small networks quiesce inside the horizon");
        for event in trace.events.as_ref().unwrap() {
            assert!(event.t < q, "spike at t={} after quiescence step {q}", event.t);
            assert!(event.spike == 1 || event.spike == -1);
        }
        runs += 1;
    }
    println!(
        "acceptance 8 (simulator conservation): PASS - 1000 runs, {neurons_checked} neuron \
         identities, quiescence absorbing, {:.1}s",
        started.elapsed().as_secs_f64()
    );
}
