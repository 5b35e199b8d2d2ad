//! Scalar arithmetic for each numeric mode. Every kernel is generic over
//! [`Arith`], so the design and hardware stages share one code path.

use super::EngineError;
use crate::numerics::{rescale, FixedPointFormat, NumericsError};

pub(crate) trait Arith {
    /// Activation (blob element) representation.
    type Act: Copy + PartialOrd;
    type Wt: Copy;
    type Acc: Copy;

    fn act(&self, x: f64) -> Self::Act;
    fn weight(&self, w: f64) -> Self::Wt;
    fn real(&self, v: Self::Act) -> f64;
    fn zero(&self) -> Self::Act;

    /// Accumulator seeded with a bias.
    fn start(&self, bias: Self::Wt) -> Self::Acc;
    fn mac(&self, acc: Self::Acc, w: Self::Wt, x: Self::Act) -> Result<Self::Acc, EngineError>;
    fn finish(&self, acc: Self::Acc) -> Self::Act;
    fn mean(&self, window: &[Self::Act]) -> Result<Self::Act, EngineError>;

    fn flip_bit(&self, v: Self::Act, bit: u32) -> Self::Act;
}

pub(crate) struct Double;

impl Arith for Double {
    type Act = f64;
    type Wt = f64;
    type Acc = f64;

    fn act(&self, x: f64) -> f64 {
        x
    }
    fn weight(&self, w: f64) -> f64 {
        w
    }
    fn real(&self, v: f64) -> f64 {
        v
    }
    fn zero(&self) -> f64 {
        0.0
    }
    fn start(&self, bias: f64) -> f64 {
        bias
    }
    fn mac(&self, acc: f64, w: f64, x: f64) -> Result<f64, EngineError> {
        Ok(acc + w * x)
    }
    fn finish(&self, acc: f64) -> f64 {
        acc
    }
    fn mean(&self, window: &[f64]) -> Result<f64, EngineError> {
        Ok(window.iter().sum::<f64>() / window.len() as f64)
    }
    fn flip_bit(&self, v: f64, bit: u32) -> f64 {
        f64::from_bits(v.to_bits() ^ (1u64 << bit))
    }
}

pub(crate) struct Single;

impl Arith for Single {
    type Act = f32;
    type Wt = f32;
    type Acc = f32;

    fn act(&self, x: f64) -> f32 {
        x as f32
    }
    fn weight(&self, w: f64) -> f32 {
        w as f32
    }
    fn real(&self, v: f32) -> f64 {
        v as f64
    }
    fn zero(&self) -> f32 {
        0.0
    }
    fn start(&self, bias: f32) -> f32 {
        bias
    }
    fn mac(&self, acc: f32, w: f32, x: f32) -> Result<f32, EngineError> {
        Ok(acc + w * x)
    }
    fn finish(&self, acc: f32) -> f32 {
        acc
    }
    fn mean(&self, window: &[f32]) -> Result<f32, EngineError> {
        Ok(window.iter().sum::<f32>() / window.len() as f32)
    }
    fn flip_bit(&self, v: f32, bit: u32) -> f32 {
        f32::from_bits(v.to_bits() ^ (1u32 << bit))
    }
}

/// Activations are raw integers in `activations`; weights are raw integers
/// in `weights`; products accumulate at the combined fraction scale.
pub(crate) struct Fixed {
    pub weights: FixedPointFormat,
    pub activations: FixedPointFormat,
}

impl Fixed {
    fn acc_frac(&self) -> u32 {
        self.weights.frac_bits() + self.activations.frac_bits()
    }
}

impl Arith for Fixed {
    type Act = i64;
    type Wt = i64;
    type Acc = i128;

    fn act(&self, x: f64) -> i64 {
        self.activations.quantize_raw(x)
    }
    fn weight(&self, w: f64) -> i64 {
        self.weights.quantize_raw(w)
    }
    fn real(&self, v: i64) -> f64 {
        self.activations.raw_to_real(v)
    }
    fn zero(&self) -> i64 {
        0
    }
    fn start(&self, bias: i64) -> i128 {
        // frac_a < 64, and |bias| < 2^63, so this fits in i128
        (bias as i128) << self.activations.frac_bits()
    }
    fn mac(&self, acc: i128, w: i64, x: i64) -> Result<i128, EngineError> {
        (w as i128)
            .checked_mul(x as i128)
            .and_then(|p| acc.checked_add(p))
            .ok_or(EngineError::Numerics(NumericsError::AccumulatorOverflow))
    }
    fn finish(&self, acc: i128) -> i64 {
        rescale(acc, self.acc_frac(), self.activations).raw()
    }
    fn mean(&self, window: &[i64]) -> Result<i64, EngineError> {
        let fmt = self.activations;
        let sum: i128 = window.iter().map(|&v| v as i128).sum();
        let reciprocal = fmt.quantize_raw(1.0 / window.len() as f64) as i128;
        let product =
            sum.checked_mul(reciprocal).ok_or(EngineError::Numerics(NumericsError::AccumulatorOverflow))?;
        Ok(rescale(product, 2 * fmt.frac_bits(), fmt).raw())
    }
    fn flip_bit(&self, v: i64, bit: u32) -> i64 {
        let shift = 64 - self.activations.total_bits();
        let flipped = (v as u64) ^ (1u64 << bit);
        ((flipped << shift) as i64) >> shift
    }
}
