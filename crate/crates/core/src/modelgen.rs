//! Seeded random model and probe generators.
//!
//! The equivalence suites exercise conversion on ensembles of randomly
//! parameterized networks; benchmarks reuse the same builders. Everything
//! here is deterministic in the supplied RNG.

use rand::Rng;

use crate::quant::{
    ActivationKind, AuxInput, LayerKind, LayerSpec, ModelGraph, QuantParams, RecurrentForm,
    RecurrentSpec, SequenceInputs,
};
use crate::tensor::Tensor;

fn uniform(rng: &mut impl Rng, n: usize, a: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-a..a)).collect()
}

/// Fan-in scaled random weight matrix.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let a = 1.6 / (cols as f64).sqrt();
    Tensor::new(vec![rows, cols], uniform(rng, rows * cols, a)).expect("shape matches data")
}

fn random_bias(rng: &mut impl Rng, n: usize) -> Tensor {
    Tensor::new(vec![n], uniform(rng, n, 0.2)).expect("shape matches data")
}

fn random_scale(rng: &mut impl Rng, levels: u32) -> f64 {
    // Spread codes over the full range with occasional saturation.
    rng.random_range(0.6..1.8) / levels as f64
}

/// Random quantized recurrent cell.
pub fn random_recurrent_spec(
    rng: &mut impl Rng,
    input: usize,
    hidden: usize,
    levels: u32,
    form: RecurrentForm,
) -> RecurrentSpec {
    let w_hh = match form {
        RecurrentForm::Dense => {
            let a = 0.9 / (hidden as f64).sqrt();
            Tensor::new(vec![hidden, hidden], uniform(rng, hidden * hidden, a)).unwrap()
        }
        RecurrentForm::Diagonal => {
            Tensor::new(vec![hidden], uniform(rng, hidden, 0.9)).unwrap()
        }
    };
    RecurrentSpec {
        w_ih: random_matrix(rng, hidden, input),
        b_ih: random_bias(rng, hidden),
        w_hh,
        b_hh: random_bias(rng, hidden),
        form,
        qp: Some(QuantParams::new(random_scale(rng, levels), levels).unwrap()),
    }
}

/// Stack of quantized recurrent layers followed by a linear readout.
pub fn random_recurrent_stack(
    rng: &mut impl Rng,
    layers: usize,
    hidden: usize,
    input: usize,
    levels: u32,
    form: RecurrentForm,
) -> ModelGraph {
    let mut specs = Vec::new();
    let mut in_dim = input;
    for i in 0..layers {
        let spec = random_recurrent_spec(rng, in_dim, hidden, levels, form);
        specs.push(LayerSpec::new(format!("rnn{i}"), LayerKind::Recurrent(spec)));
        in_dim = hidden;
    }
    specs.push(LayerSpec::new(
        "head",
        LayerKind::Linear { weight: random_matrix(rng, 4, in_dim), bias: random_bias(rng, 4) },
    ));
    let mut model = ModelGraph::new(vec![input], specs, vec![]);
    model.mark_quantized().expect("generated stack is quantized");
    model
}

/// Random feedforward stack: a small convolutional front end (with an
/// average pool) and linear tail, one quantized ReLU per affine layer.
/// `sites` counts quantized activations, 1..=5.
pub fn random_feedforward(rng: &mut impl Rng, sites: usize, width: usize, levels: u32) -> ModelGraph {
    assert!((1..=5).contains(&sites), "feedforward depth is 1..=5 activation sites");
    let mut layers = Vec::new();
    let side = 6usize;
    let channels = 2usize;
    let mut use_conv = sites >= 2;
    let input_shape = if use_conv { vec![1, side, side] } else { vec![width] };
    let mut flat_in = if use_conv { side * side } else { width };

    let mut remaining = sites;
    let mut idx = 0;
    if use_conv {
        let k = 3;
        let a = 1.6 / ((k * k) as f64).sqrt();
        let kernels =
            Tensor::new(vec![channels, 1, k, k], uniform(rng, channels * k * k, a)).unwrap();
        layers.push(LayerSpec::new(
            format!("conv{idx}"),
            LayerKind::Conv2d { kernels, bias: random_bias(rng, channels), stride: 1, padding: 1 },
        ));
        layers.push(LayerSpec::new(
            format!("act{idx}"),
            LayerKind::QuantRelu {
                qp: QuantParams::new(random_scale(rng, levels), levels).unwrap(),
            },
        ));
        layers.push(LayerSpec::new(format!("pool{idx}"), LayerKind::AvgPool { k: 2 }));
        flat_in = channels * (side / 2) * (side / 2);
        remaining -= 1;
        idx += 1;
        use_conv = false;
        let _ = use_conv;
    }
    let mut in_dim = flat_in;
    for _ in 0..remaining {
        layers.push(LayerSpec::new(
            format!("fc{idx}"),
            LayerKind::Linear {
                weight: random_matrix(rng, width, in_dim),
                bias: random_bias(rng, width),
            },
        ));
        layers.push(LayerSpec::new(
            format!("act{idx}"),
            LayerKind::QuantRelu {
                qp: QuantParams::new(random_scale(rng, levels), levels).unwrap(),
            },
        ));
        in_dim = width;
        idx += 1;
    }
    layers.push(LayerSpec::new(
        "head",
        LayerKind::Linear { weight: random_matrix(rng, 3, in_dim), bias: random_bias(rng, 3) },
    ));
    let mut model = ModelGraph::new(input_shape, layers, vec![]);
    model.mark_quantized().expect("generated stack is quantized");
    model
}

/// Compound model: conv front end, quantized linear, auxiliary concat,
/// recurrent core, linear readout.
pub fn random_crnn(
    rng: &mut impl Rng,
    rays: usize,
    hidden: usize,
    levels: u32,
    aux_len: usize,
) -> ModelGraph {
    let channels = 4usize;
    let k = 5usize;
    let a = 1.6 / (k as f64).sqrt();
    let kernels = Tensor::new(vec![channels, 1, 1, k], uniform(rng, channels * k, a)).unwrap();
    let feat = 12usize;
    let conv_out = rays - (k - 1); // valid convolution along the ray axis
    let layers = vec![
        LayerSpec::new(
            "conv0",
            LayerKind::Conv2d { kernels, bias: random_bias(rng, channels), stride: 1, padding: 0 },
        ),
        LayerSpec::new(
            "conv0_act",
            LayerKind::QuantRelu { qp: QuantParams::new(random_scale(rng, levels), levels).unwrap() },
        ),
        LayerSpec::new(
            "fc0",
            LayerKind::Linear {
                weight: random_matrix(rng, feat, channels * conv_out),
                bias: random_bias(rng, feat),
            },
        ),
        LayerSpec::new(
            "fc0_act",
            LayerKind::QuantRelu { qp: QuantParams::new(random_scale(rng, levels), levels).unwrap() },
        ),
        LayerSpec::new("join", LayerKind::Concat { aux: "pose".into(), clip: (-1.0, 1.0) }),
        LayerSpec::new(
            "core",
            LayerKind::Recurrent(random_recurrent_spec(
                rng,
                feat + aux_len,
                hidden,
                levels,
                RecurrentForm::Dense,
            )),
        ),
        LayerSpec::new(
            "head",
            LayerKind::Linear { weight: random_matrix(rng, 1, hidden), bias: random_bias(rng, 1) },
        ),
    ];
    let mut model = ModelGraph::new(
        vec![1, 1, rays],
        layers,
        vec![AuxInput { name: "pose".into(), len: aux_len }],
    );
    model.mark_quantized().expect("generated model is quantized");
    model
}

/// Random probe sequence matching a model's input and aux declarations.
/// Inputs are non-negative (image-like), aux streams span the clip range.
pub fn random_sequence(model: &ModelGraph, k: usize, rng: &mut impl Rng) -> SequenceInputs {
    let steps = (0..k)
        .map(|_| {
            let n: usize = model.input_shape.iter().product();
            Tensor::new(
                model.input_shape.clone(),
                (0..n).map(|_| rng.random_range(0.0..1.0)).collect(),
            )
            .unwrap()
        })
        .collect();
    let mut seq = SequenceInputs::new(steps);
    for aux in &model.aux_inputs {
        let stream = (0..k)
            .map(|_| {
                Tensor::new(
                    vec![aux.len],
                    (0..aux.len).map(|_| rng.random_range(-1.2..1.2)).collect(),
                )
                .unwrap()
            })
            .collect();
        seq = seq.with_aux(aux.name.clone(), stream);
    }
    seq
}

/// Reference architecture for row-sequential image classification: one
/// element-wise recurrent layer and a linear class head. Quantizer scales
/// start at the sentinel value and are calibrated by the trainer.
pub fn reference_mnist_rows(
    rng: &mut impl Rng,
    row_len: usize,
    hidden: usize,
    classes: usize,
    levels: u32,
) -> ModelGraph {
    let w_hh = Tensor::new(vec![hidden], (0..hidden).map(|_| rng.random_range(0.5..1.0)).collect())
        .unwrap();
    let spec = RecurrentSpec {
        w_ih: random_matrix(rng, hidden, row_len),
        b_ih: Tensor::zeros(vec![hidden]),
        w_hh,
        b_hh: Tensor::zeros(vec![hidden]),
        form: RecurrentForm::Diagonal,
        qp: Some(QuantParams::new(1.0, levels).unwrap()),
    };
    ModelGraph::new(
        vec![row_len],
        vec![
            LayerSpec::new("core", LayerKind::Recurrent(spec)),
            LayerSpec::new(
                "head",
                LayerKind::Linear {
                    weight: random_matrix(rng, classes, hidden),
                    bias: Tensor::zeros(vec![classes]),
                },
            ),
        ],
        vec![],
    )
}

/// Reference architecture for the collision-avoidance task: a 1-d
/// convolutional front end over the range scan, a quantized linear
/// feature layer, the clipped pose concatenated just before the recurrent
/// core, and a scalar steering head.
pub fn reference_collision(rng: &mut impl Rng, rays: usize, hidden: usize, levels: u32) -> ModelGraph {
    let channels = 6usize;
    let k = 5usize;
    let a = 1.6 / (k as f64).sqrt();
    let kernels = Tensor::new(vec![channels, 1, 1, k], uniform(rng, channels * k, a)).unwrap();
    let conv_out = rays - (k - 1);
    let feat = 24usize;
    let qp = || QuantParams::new(1.0, levels).unwrap();
    let layers = vec![
        LayerSpec::new(
            "conv0",
            LayerKind::Conv2d { kernels, bias: Tensor::zeros(vec![channels]), stride: 1, padding: 0 },
        ),
        LayerSpec::new("conv0_act", LayerKind::QuantRelu { qp: qp() }),
        LayerSpec::new(
            "fc0",
            LayerKind::Linear {
                weight: random_matrix(rng, feat, channels * conv_out),
                bias: Tensor::zeros(vec![feat]),
            },
        ),
        LayerSpec::new("fc0_act", LayerKind::QuantRelu { qp: qp() }),
        LayerSpec::new("join", LayerKind::Concat { aux: "pose".into(), clip: (-1.0, 1.0) }),
        LayerSpec::new(
            "core",
            LayerKind::Recurrent(RecurrentSpec {
                w_ih: random_matrix(rng, hidden, feat + 3),
                b_ih: Tensor::zeros(vec![hidden]),
                w_hh: {
                    let a = 0.8 / (hidden as f64).sqrt();
                    Tensor::new(vec![hidden, hidden], uniform(rng, hidden * hidden, a)).unwrap()
                },
                b_hh: Tensor::zeros(vec![hidden]),
                form: RecurrentForm::Dense,
                qp: Some(qp()),
            }),
        ),
        LayerSpec::new(
            "head",
            LayerKind::Linear { weight: random_matrix(rng, 1, hidden), bias: Tensor::zeros(vec![1]) },
        ),
    ];
    ModelGraph::new(
        vec![1, 1, rays],
        layers,
        vec![AuxInput { name: "pose".into(), len: 3 }],
    )
}

/// A source-network variant of `random_feedforward` carrying plain ReLU and
/// max-pool layers, for exercising the substitution pipeline.
pub fn random_unquantized_cnn(rng: &mut impl Rng) -> ModelGraph {
    let side = 6usize;
    let channels = 2usize;
    let k = 3;
    let a = 1.6 / ((k * k) as f64).sqrt();
    let kernels = Tensor::new(vec![channels, 1, k, k], uniform(rng, channels * k * k, a)).unwrap();
    let flat = channels * (side / 2) * (side / 2);
    let layers = vec![
        LayerSpec::new(
            "conv0",
            LayerKind::Conv2d { kernels, bias: random_bias(rng, channels), stride: 1, padding: 1 },
        ),
        LayerSpec::new("conv0_act", LayerKind::Activation(ActivationKind::Relu)),
        LayerSpec::new("pool0", LayerKind::MaxPool { k: 2 }),
        LayerSpec::new(
            "fc0",
            LayerKind::Linear { weight: random_matrix(rng, 8, flat), bias: random_bias(rng, 8) },
        ),
        LayerSpec::new("fc0_act", LayerKind::Activation(ActivationKind::Relu)),
        LayerSpec::new(
            "head",
            LayerKind::Linear { weight: random_matrix(rng, 3, 8), bias: random_bias(rng, 3) },
        ),
    ];
    ModelGraph::new(vec![1, side, side], layers, vec![])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generators_are_seed_deterministic() {
        let a = random_recurrent_stack(
            &mut ChaCha8Rng::seed_from_u64(5),
            2,
            8,
            4,
            8,
            RecurrentForm::Dense,
        );
        let b = random_recurrent_stack(
            &mut ChaCha8Rng::seed_from_u64(5),
            2,
            8,
            4,
            8,
            RecurrentForm::Dense,
        );
        assert_eq!(a, b);
    }

    #[test]
    fn random_nets_produce_nontrivial_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_recurrent_stack(&mut rng, 2, 8, 4, 8, RecurrentForm::Dense);
        let seq = random_sequence(&model, 6, &mut rng);
        let record = crate::quant::qmodel_forward(&model, &seq).unwrap();
        let mut nonzero = 0usize;
        let mut interior = 0usize;
        for site in &record.layers {
            for codes in &site.codes {
                for &c in codes.data() {
                    if c > 0 {
                        nonzero += 1;
                    }
                    if c > 0 && (c as u32) < 8 {
                        interior += 1;
                    }
                }
            }
        }
        assert!(nonzero > 10, "codes should not all clip to zero");
        assert!(interior > 5, "some codes should land strictly inside the range");
    }
}
