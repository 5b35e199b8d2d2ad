//! Tensors and bit-exact fixed-point arithmetic.

mod fixed;
mod tensor;

pub use fixed::{
    dequantize, fixed_mac, quantize, rescale, FixedPointFormat, Overflow, QuantizedValue, Rounding,
};
pub use tensor::{Shape, Tensor};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericsError {
    #[error("invalid fixed-point format: total_bits={total} frac_bits={frac} ({reason})")]
    InvalidFormat { total: u32, frac: u32, reason: &'static str },
    #[error("raw value {raw} outside the representable range of {format}")]
    RawOutOfRange { raw: i64, format: FixedPointFormat },
    #[error("accumulator width exceeded")]
    AccumulatorOverflow,
    #[error("tensor data length {len} does not match shape {shape} ({expected} elements)")]
    ShapeMismatch { shape: Shape, len: usize, expected: usize },
    #[error("tensor element {index} is not finite")]
    NonFinite { index: usize },
}
