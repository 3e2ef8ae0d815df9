use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use spikemorph_bench::{crnn_fixture, recurrent_fixture};
use spikemorph_core::morph::{convert_model, ConversionConfig};
use spikemorph_core::snn::SimConfig;
use spikemorph_core::{closed_form_codes, qmodel_forward, simulate};

fn bench_quantized_forward(c: &mut Criterion) {
    let (model, seq) = crnn_fixture(8);
    c.bench_function("qmodel_forward_crnn_k8", |bench| {
        bench.iter(|| qmodel_forward(black_box(&model), black_box(&seq)).unwrap())
    });
}

fn bench_convert(c: &mut Criterion) {
    let (model, _) = crnn_fixture(1);
    c.bench_function("convert_model_crnn", |bench| {
        bench.iter(|| convert_model(black_box(&model), &ConversionConfig::default()).unwrap())
    });
}

fn bench_simulate(c: &mut Criterion) {
    let (model, seq) = recurrent_fixture(2, 32, 8);
    let (converted, _) = convert_model(&model, &ConversionConfig::default()).unwrap();
    let cfg = SimConfig::for_model(&converted);
    c.bench_function("simulate_rnn2x32_k8_to_quiescence", |bench| {
        bench.iter(|| simulate(black_box(&converted), black_box(&seq), &cfg).unwrap())
    });
}

fn bench_closed_form(c: &mut Criterion) {
    let (model, seq) = recurrent_fixture(2, 32, 8);
    let (converted, _) = convert_model(&model, &ConversionConfig::default()).unwrap();
    c.bench_function("closed_form_rnn2x32_k8", |bench| {
        bench.iter(|| closed_form_codes(black_box(&converted), black_box(&seq)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_quantized_forward,
    bench_convert,
    bench_simulate,
    bench_closed_form
);
criterion_main!(benches);
