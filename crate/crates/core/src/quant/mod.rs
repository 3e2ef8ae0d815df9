//! Quantized network layers and the quantized-graph executor.
//!
//! Activations are quantized as `code = clip(round(x / scale), 0, levels)`
//! with a zero point fixed at 0, so every recorded activation is an exact
//! integer multiple of the learned scale. The same (scale, levels) pair
//! later becomes the spiking layer's threshold and tracer bound.

mod forward;
mod graph;

pub use forward::{
    qmodel_forward, qrecurrent_step, substitute_activation, substitute_operators,
    ActivationRecord, LayerActivations, SequenceInputs,
};
pub(crate) use forward::recurrent_preactivation;
pub use graph::{
    ActivationKind, AuxInput, LayerKind, LayerSpec, ModelGraph, RecurrentForm, RecurrentSpec,
};

use crate::error::{Error, Result};
use crate::tensor::{Codes, Tensor};

/// Learned quantizer parameters. After conversion the scale doubles as the
/// spiking threshold and the level count as the tracer bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    scale: f64,
    levels: u32,
}

impl QuantParams {
    pub fn new(scale: f64, levels: u32) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Argument(format!("quantization scale must be positive, got {scale}")));
        }
        if levels < 1 {
            return Err(Error::Argument("quantization level count must be >= 1".into()));
        }
        Ok(QuantParams { scale, levels })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub(crate) fn set_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Argument(format!("quantization scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(())
    }
}

/// Round half away from zero, the tie rule shared by the quantized executor
/// and the pre-charged spiking closed form.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Quantize one pre-activation value to an integer code in `[0, levels]`.
#[inline]
pub fn quantize_scalar(x: f64, qp: &QuantParams) -> i32 {
    let c = round_half_away(x / qp.scale);
    c.clamp(0.0, qp.levels as f64) as i32
}

/// `codes = clip(round(x / scale), 0, levels)`, `values = codes * scale`.
pub fn quantize_act(x: &Tensor, qp: &QuantParams) -> Result<(Codes, Tensor)> {
    if !x.is_finite() {
        return Err(Error::Numeric("quantize_act input contains non-finite values".into()));
    }
    let codes: Vec<i32> = x.data().iter().map(|&v| quantize_scalar(v, qp)).collect();
    let codes = Codes::new(x.shape().to_vec(), codes)?;
    let values = codes.to_values(qp.scale);
    Ok((codes, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_formula_hand_case() {
        // x=1.3, s=0.5, n=4: round(2.6)=3, value 1.5
        let qp = QuantParams::new(0.5, 4).unwrap();
        let (codes, values) = quantize_act(&Tensor::scalar(1.3), &qp).unwrap();
        assert_eq!(codes.data(), &[3]);
        assert_eq!(values.data(), &[1.5]);
    }

    #[test]
    fn quantize_lower_clip() {
        let qp = QuantParams::new(0.5, 4).unwrap();
        let (codes, values) = quantize_act(&Tensor::scalar(-0.7), &qp).unwrap();
        assert_eq!(codes.data(), &[0]);
        assert_eq!(values.data(), &[0.0]);
    }

    #[test]
    fn quantize_upper_clip() {
        let qp = QuantParams::new(0.5, 4).unwrap();
        let (codes, values) = quantize_act(&Tensor::scalar(10.0), &qp).unwrap();
        assert_eq!(codes.data(), &[4]);
        assert_eq!(values.data(), &[2.0]);
    }

    #[test]
    fn quantize_rejects_non_finite() {
        let qp = QuantParams::new(0.5, 4).unwrap();
        let err = quantize_act(&Tensor::scalar(f64::NAN), &qp).unwrap_err();
        assert_eq!(err.kind(), "numeric");
    }

    #[test]
    fn round_ties_go_away_from_zero() {
        assert_eq!(round_half_away(0.5), 1.0);
        assert_eq!(round_half_away(1.5), 2.0);
        assert_eq!(round_half_away(-0.5), -1.0);
    }

    #[test]
    fn params_reject_bad_values() {
        assert!(QuantParams::new(0.0, 4).is_err());
        assert!(QuantParams::new(-1.0, 4).is_err());
        assert!(QuantParams::new(f64::NAN, 4).is_err());
        assert!(QuantParams::new(1.0, 0).is_err());
        assert!(QuantParams::new(1.0, 1).is_ok());
    }

    #[test]
    fn lattice_values_are_fixed_points() {
        let qp = QuantParams::new(0.25, 8).unwrap();
        for c in 0..=8 {
            let x = Tensor::scalar(c as f64 * 0.25);
            let (codes, values) = quantize_act(&x, &qp).unwrap();
            assert_eq!(codes.data(), &[c]);
            assert_eq!(values.data(), x.data());
        }
    }
}

#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        /// Codes stay in [0, levels] and values are exact code*scale
        /// products.
        #[test]
        fn codes_bounded_and_values_exact(
            x in -50.0f64..50.0,
            scale in 0.01f64..2.0,
            levels in 1u32..64,
        ) {
            let qp = QuantParams::new(scale, levels).unwrap();
            let (codes, values) = quantize_act(&Tensor::scalar(x), &qp).unwrap();
            let c = codes.data()[0];
            prop_assert!(c >= 0 && c as u32 <= levels);
            prop_assert_eq!(values.data()[0], c as f64 * scale);
        }

        /// Quantization is monotone non-decreasing in its input.
        #[test]
        fn quantization_is_monotone(
            a in -20.0f64..20.0,
            delta in 0.0f64..20.0,
            scale in 0.01f64..2.0,
            levels in 1u32..64,
        ) {
            let qp = QuantParams::new(scale, levels).unwrap();
            let ca = quantize_scalar(a, &qp);
            let cb = quantize_scalar(a + delta, &qp);
            prop_assert!(cb >= ca);
        }

        /// Pre-charging half a scale turns the floor form into the round
        /// form away from tie boundaries.
        #[test]
        fn pre_charge_turns_floor_into_round(
            u in -30.0f64..30.0,
            scale in 0.01f64..2.0,
        ) {
            let ratio = u / scale;
            prop_assume!((ratio - ratio.floor() - 0.5).abs() > 1e-6);
            let floored = ((u + 0.5 * scale) / scale).floor();
            prop_assert_eq!(floored, round_half_away(ratio));
        }
    }
}
