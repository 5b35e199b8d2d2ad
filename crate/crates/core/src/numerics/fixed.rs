use std::fmt;

use super::NumericsError;

/// How bits below the resolution are discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rounding {
    /// Truncate toward negative infinity (arithmetic shift semantics).
    Floor,
}

/// What happens when a value leaves the representable range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Overflow {
    Saturate,
}

/// Signed two's-complement fixed-point format with `total_bits` bits, of
/// which `frac_bits` sit right of the binary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointFormat {
    total_bits: u32,
    frac_bits: u32,
    rounding: Rounding,
    overflow: Overflow,
}

impl FixedPointFormat {
    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self, NumericsError> {
        if !(2..=64).contains(&total_bits) {
            return Err(NumericsError::InvalidFormat {
                total: total_bits,
                frac: frac_bits,
                reason: "total_bits must be in 2..=64",
            });
        }
        if frac_bits >= total_bits {
            return Err(NumericsError::InvalidFormat {
                total: total_bits,
                frac: frac_bits,
                reason: "frac_bits must be below total_bits",
            });
        }
        Ok(FixedPointFormat {
            total_bits,
            frac_bits,
            rounding: Rounding::Floor,
            overflow: Overflow::Saturate,
        })
    }

    pub fn total_bits(&self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn overflow(&self) -> Overflow {
        self.overflow
    }

    pub fn min_raw(&self) -> i64 {
        i64::MIN >> (64 - self.total_bits)
    }

    pub fn max_raw(&self) -> i64 {
        i64::MAX >> (64 - self.total_bits)
    }

    /// Unit in the last place, `2^-frac_bits`.
    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.resolution()
    }

    pub fn contains_raw(&self, raw: i64) -> bool {
        (self.min_raw()..=self.max_raw()).contains(&raw)
    }

    pub(crate) fn saturate(&self, raw: i128) -> i64 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i64
    }

    /// Quantizes straight to the raw integer.
    pub fn quantize_raw(&self, x: f64) -> i64 {
        debug_assert!(x.is_finite(), "quantize of non-finite value {x}");
        // Scaling by a power of two is exact unless it overflows to infinity,
        // and the comparisons below saturate that case too.
        let scaled = (x * (self.frac_bits as f64).exp2()).floor();
        let limit = ((self.total_bits - 1) as f64).exp2();
        if scaled >= limit {
            self.max_raw()
        } else if scaled < -limit {
            self.min_raw()
        } else {
            scaled as i64
        }
    }

    pub fn raw_to_real(&self, raw: i64) -> f64 {
        raw as f64 * self.resolution()
    }
}

impl fmt::Display for FixedPointFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.total_bits, self.frac_bits)
    }
}

/// A raw integer tagged with its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantizedValue {
    raw: i64,
    format: FixedPointFormat,
}

impl QuantizedValue {
    pub fn from_raw(raw: i64, format: FixedPointFormat) -> Result<Self, NumericsError> {
        if !format.contains_raw(raw) {
            return Err(NumericsError::RawOutOfRange { raw, format });
        }
        Ok(QuantizedValue { raw, format })
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FixedPointFormat {
        self.format
    }

    pub fn to_f64(&self) -> f64 {
        self.format.raw_to_real(self.raw)
    }
}

/// `clamp(floor(x * 2^frac), min, max)`.
pub fn quantize(x: f64, fmt: FixedPointFormat) -> QuantizedValue {
    QuantizedValue { raw: fmt.quantize_raw(x), format: fmt }
}

/// `raw * 2^-frac`; exact whenever `total_bits <= 53`.
pub fn dequantize(v: QuantizedValue) -> f64 {
    v.to_f64()
}

/// Adds `raw_a * raw_b` to an accumulator held at the combined fraction
/// scale `frac_a + frac_b`.
pub fn fixed_mac(acc: i128, a: QuantizedValue, b: QuantizedValue) -> Result<i128, NumericsError> {
    (a.raw as i128)
        .checked_mul(b.raw as i128)
        .and_then(|p| acc.checked_add(p))
        .ok_or(NumericsError::AccumulatorOverflow)
}

/// Converts an accumulator at fraction scale `acc_frac` into `fmt`: arithmetic
/// shift (floor) to the target scale, then saturate.
pub fn rescale(acc: i128, acc_frac: u32, fmt: FixedPointFormat) -> QuantizedValue {
    let target = fmt.frac_bits();
    let shifted = if acc_frac >= target {
        acc >> (acc_frac - target).min(127)
    } else {
        // target - acc_frac < 64, so the factor itself cannot overflow
        acc.checked_mul(1i128 << (target - acc_frac))
            .unwrap_or(if acc < 0 { i128::MIN } else { i128::MAX })
    };
    QuantizedValue { raw: fmt.saturate(shifted), format: fmt }
}
