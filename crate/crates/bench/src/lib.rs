//! Shared fixtures for the benchmark targets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spikemorph_core::modelgen;
use spikemorph_core::{ModelGraph, SequenceInputs};

/// Reference compound model plus a probe sequence, deterministic.
pub fn crnn_fixture(positions: usize) -> (ModelGraph, SequenceInputs) {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let model = modelgen::random_crnn(&mut rng, 16, 24, 16, 3);
    let seq = modelgen::random_sequence(&model, positions, &mut rng);
    (model, seq)
}

/// Recurrent stack fixture for simulator throughput runs.
pub fn recurrent_fixture(
    layers: usize,
    hidden: usize,
    positions: usize,
) -> (ModelGraph, SequenceInputs) {
    let mut rng = ChaCha8Rng::seed_from_u64(5678);
    let model = modelgen::random_recurrent_stack(
        &mut rng,
        layers,
        hidden,
        8,
        16,
        spikemorph_core::RecurrentForm::Dense,
    );
    let seq = modelgen::random_sequence(&model, positions, &mut rng);
    (model, seq)
}
