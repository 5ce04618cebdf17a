use super::SecAggError;

pub const DEFAULT_FRAC_BITS: u32 = 40;

/// Two's-complement fixed point in `Z/2⁶⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPointCodec {
    frac_bits: u32,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        Self {
            frac_bits: DEFAULT_FRAC_BITS,
        }
    }
}

impl FixedPointCodec {
    pub fn new(frac_bits: u32) -> Result<Self, SecAggError> {
        if frac_bits == 0 || frac_bits > 62 {
            return Err(SecAggError::InvalidCodec(format!("frac_bits {frac_bits} outside 1..=62")));
        }
        Ok(Self { frac_bits })
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    fn scale(&self) -> f64 {
        (1u64 << self.frac_bits) as f64
    }

    /// Largest magnitude (exclusive) that survives encoding.
    pub fn magnitude_limit(&self) -> f64 {
        (1u64 << (63 - self.frac_bits)) as f64
    }

    /// Worst-case rounding error of one encoded value.
    pub fn quantum(&self) -> f64 {
        0.5 / self.scale()
    }

    pub fn encode(&self, x: f64) -> Result<u64, SecAggError> {
        if !(x.abs() < self.magnitude_limit()) {
            return Err(SecAggError::OverflowRisk {
                value: x,
                limit: self.magnitude_limit(),
            });
        }
        Ok((x * self.scale()).round() as i64 as u64)
    }

    pub fn decode(&self, w: u64) -> f64 {
        (w as i64) as f64 / self.scale()
    }
}

/// How float data is turned into maskable words.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Codec {
    /// Exact cancellation in `Z/2⁶⁴` (default).
    FixedPoint(FixedPointCodec),
    /// Additive float masks in `[-1, 1)`; cancellation is only approximate.
    Float,
}

impl Default for Codec {
    fn default() -> Self {
        Codec::FixedPoint(FixedPointCodec::default())
    }
}

impl Codec {
    pub fn tag(&self) -> u8 {
        match self {
            Codec::FixedPoint(_) => 0,
            Codec::Float => 1,
        }
    }

    pub fn frac_bits(&self) -> u32 {
        match self {
            Codec::FixedPoint(c) => c.frac_bits(),
            Codec::Float => 0,
        }
    }

    pub fn from_parts(tag: u8, frac_bits: u32) -> Result<Self, SecAggError> {
        match tag {
            0 => Ok(Codec::FixedPoint(FixedPointCodec::new(frac_bits)?)),
            1 => Ok(Codec::Float),
            t => Err(SecAggError::InvalidCodec(format!("unknown codec tag {t}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_dyadic_values() {
        let c = FixedPointCodec::default();
        for x in [0.0, 1.0, -1.0, 0.5, -3.25, 1234.0625, 2f64.powi(-40), -(2f64.powi(22))] {
            assert_eq!(c.decode(c.encode(x).unwrap()), x);
        }
    }

    #[test]
    fn quantization_bound() {
        let c = FixedPointCodec::default();
        let mut s = crate::masks::SeededGaussianStream::new(1);
        for _ in 0..10_000 {
            let x = s.next_gaussian() * 100.0;
            let err = (c.decode(c.encode(x).unwrap()) - x).abs();
            assert!(err <= 2f64.powi(-41));
        }
    }

    #[test]
    fn overflow_rejected() {
        let c = FixedPointCodec::default();
        assert!(c.encode(2f64.powi(23)).is_err());
        assert!(c.encode(2f64.powi(23) - 1.0).is_ok());
        assert!(c.encode(f64::NAN).is_err());
        assert!(FixedPointCodec::new(63).is_err());
    }

    #[test]
    fn negative_wraps() {
        let c = FixedPointCodec::default();
        assert_eq!(c.encode(-1.0).unwrap(), (1u64 << 40).wrapping_neg());
    }
}
