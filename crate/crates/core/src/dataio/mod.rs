//! Dataset ingestion, sequence transforms, the synthetic collision
//! surrogate, and the model/weights container.

mod container;
mod idx;
mod synth;

pub use container::{load_model, read_manifest_text, save_model, CONTAINER_VERSION};
pub use idx::{load_mnist_idx, write_idx_images, write_idx_labels, MnistDataset};
pub use synth::{
    export_collision_csv, lidar_scan, steering_command, synth_collision_dataset, Obstacle,
    SynthConfig,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::quant::SequenceInputs;
use crate::tensor::Tensor;

/// Sequence-level supervision.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Class label, judged at the last position.
    Class(usize),
    /// Real target per position.
    PerPosition(Vec<Tensor>),
}

/// One supervised sequence: per-position inputs, an optional pose-like
/// auxiliary stream, and a target.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub inputs: Vec<Tensor>,
    pub aux: Option<Vec<Tensor>>,
    pub target: Target,
}

impl SequenceSample {
    pub fn positions(&self) -> usize {
        self.inputs.len()
    }

    /// View as model inputs, binding the aux stream to `aux_name`.
    pub fn to_inputs(&self, aux_name: &str) -> SequenceInputs {
        let mut seq = SequenceInputs::new(self.inputs.clone());
        if let Some(aux) = &self.aux {
            seq = seq.with_aux(aux_name.to_string(), aux.clone());
        }
        seq
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::Argument("sample must have at least one position".into()));
        }
        if let Some(aux) = &self.aux {
            if aux.len() != self.inputs.len() {
                return Err(Error::Argument(format!(
                    "aux stream has {} positions, inputs {}",
                    aux.len(),
                    self.inputs.len()
                )));
            }
        }
        if let Target::PerPosition(t) = &self.target {
            if t.len() != self.inputs.len() {
                return Err(Error::Argument(format!(
                    "target stream has {} positions, inputs {}",
                    t.len(),
                    self.inputs.len()
                )));
            }
        }
        Ok(())
    }
}

/// How an image unrolls into a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqGranularity {
    /// One scalar per step, `K = H*W`.
    Pixel,
    /// One row vector per step, `K = H`.
    Row,
}

/// Unroll an image into a sequence, optionally permuting pixel order first.
pub fn to_sequence(
    image: &Tensor,
    granularity: SeqGranularity,
    permutation: Option<&[usize]>,
) -> Result<Vec<Tensor>> {
    let &[h, w] = image.shape() else {
        return Err(Error::Dimension(format!(
            "sequence transform needs an [H,W] image, got {:?}",
            image.shape()
        )));
    };
    let n = h * w;
    let flat: Vec<f64> = match permutation {
        None => image.data().to_vec(),
        Some(perm) => {
            validate_permutation(perm, n)?;
            perm.iter().map(|&i| image.data()[i]).collect()
        }
    };
    match granularity {
        SeqGranularity::Pixel => {
            Ok(flat.into_iter().map(|v| Tensor::new(vec![1], vec![v]).unwrap()).collect())
        }
        SeqGranularity::Row => (0..h)
            .map(|r| Tensor::new(vec![w], flat[r * w..(r + 1) * w].to_vec()))
            .collect(),
    }
}

fn validate_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Argument(format!(
            "permutation of {} entries over {n} pixels",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Argument("permutation is not a bijection on pixel indices".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Reproducible pixel permutation (seeded ChaCha8 Fisher-Yates shuffle).
/// Record the seed wherever the permutation is used.
pub fn fixed_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> Tensor {
        Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap()
    }

    #[test]
    fn pixel_sequence_identity_order() {
        let seq = to_sequence(&image(), SeqGranularity::Pixel, None).unwrap();
        assert_eq!(seq.len(), 6);
        let flat: Vec<f64> = seq.iter().map(|t| t.data()[0]).collect();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn row_sequence_shapes() {
        let seq = to_sequence(&image(), SeqGranularity::Row, None).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq[0].data(), &[1.0, 2.0, 3.0]);
        assert_eq!(seq[1].data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn permuted_sequence_is_reproducible_bijection() {
        let perm = fixed_permutation(6, 42);
        let again = fixed_permutation(6, 42);
        assert_eq!(perm, again);
        let seq = to_sequence(&image(), SeqGranularity::Pixel, Some(&perm)).unwrap();
        let mut values: Vec<f64> = seq.iter().map(|t| t.data()[0]).collect();
        values.sort_by(f64::total_cmp);
        assert_eq!(values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn invalid_permutation_rejected() {
        let bad = vec![0usize, 0, 1, 2, 3, 4];
        let err = to_sequence(&image(), SeqGranularity::Pixel, Some(&bad)).unwrap_err();
        assert_eq!(err.kind(), "argument");
    }

    proptest::proptest! {
        /// Unrolling is a bijection on pixel multisets for any permutation seed.
        #[test]
        fn sequence_preserves_pixel_multiset(seed in 0u64..500) {
            let img = image();
            let perm = fixed_permutation(6, seed);
            let seq = to_sequence(&img, SeqGranularity::Row, Some(&perm)).unwrap();
            let mut values: Vec<f64> = seq.iter().flat_map(|t| t.data().to_vec()).collect();
            values.sort_by(f64::total_cmp);
            let mut orig = img.data().to_vec();
            orig.sort_by(f64::total_cmp);
            proptest::prop_assert_eq!(values, orig);
        }
    }
}
