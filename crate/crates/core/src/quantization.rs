//! Scalar min/max quantization of feature matrices.
//!
//! A feature value `x` maps to the code
//! `q = floor((x - x_min) / (x_max - x_min) * (2^b - 1))`, clamped to
//! `[0, 2^b - 1]`, and back to `x_hat = q * (x_max - x_min) / (2^b - 1) + x_min`.
//! Calibration is global: one `(x_min, x_max)` pair per matrix.
//!
//! Reconstructions are evaluated in `f64` and rounded to `f32`. The encoder
//! picks the largest code whose `f32` reconstruction does not exceed `x`,
//! which is the floor rule above carried out on the representable grid. This
//! keeps `|x_hat - x| <= (x_max - x_min) / (2^b - 1)` exact in `f32` and
//! makes `quantize(dequantize(q)) == q`.

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantError {
    #[error("cannot calibrate on an empty matrix")]
    EmptyMatrix,
    #[error("non-finite value {0}")]
    NonFinite(f32),
    #[error("bit width {0} outside 1..=16")]
    InvalidBits(u8),
    #[error("x_min {x_min} exceeds x_max {x_max}")]
    InvertedRange { x_min: f32, x_max: f32 },
    #[error("{got} codes for a {rows}x{cols} matrix")]
    LengthMismatch { rows: usize, cols: usize, got: usize },
    #[error("code {code} exceeds the {bits}-bit range")]
    CodeOutOfRange { code: u16, bits: u8 },
}

/// Codec parameters: value range and code width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    x_min: f32,
    x_max: f32,
    bits: u8,
}

impl QuantParams {
    pub fn new(x_min: f32, x_max: f32, bits: u8) -> Result<Self, QuantError> {
        if !(1..=16).contains(&bits) {
            return Err(QuantError::InvalidBits(bits));
        }
        for v in [x_min, x_max] {
            if !v.is_finite() {
                return Err(QuantError::NonFinite(v));
            }
        }
        if x_min > x_max {
            return Err(QuantError::InvertedRange { x_min, x_max });
        }
        Ok(Self { x_min, x_max, bits })
    }

    pub fn x_min(&self) -> f32 {
        self.x_min
    }

    pub fn x_max(&self) -> f32 {
        self.x_max
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    /// Largest code, `2^b - 1`.
    pub fn levels(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    /// Reconstruction step `(x_max - x_min) / (2^b - 1)`.
    pub fn step(&self) -> f64 {
        (self.x_max as f64 - self.x_min as f64) / self.levels() as f64
    }

    fn is_degenerate(&self) -> bool {
        self.x_max == self.x_min
    }

    /// Reconstruction of a single code.
    #[inline]
    pub fn decode(&self, q: u32) -> f32 {
        if self.is_degenerate() {
            return self.x_min;
        }
        (q as f64 * self.step() + self.x_min as f64) as f32
    }

    /// Code of a single value.
    #[inline]
    pub fn encode(&self, x: f32) -> u32 {
        if self.is_degenerate() || x.is_nan() {
            return 0;
        }
        let levels = self.levels();
        let range = self.x_max as f64 - self.x_min as f64;
        let scaled = (x as f64 - self.x_min as f64) / range * levels as f64;
        let mut q = scaled.floor().clamp(0.0, levels as f64) as u32;
        // settle on the largest code whose f32 reconstruction is <= x
        while q > 0 && self.decode(q) > x {
            q -= 1;
        }
        while q < levels && self.decode(q + 1) <= x {
            q += 1;
        }
        q
    }
}

/// Storage for codes; one byte per code up to 8 bits, two above.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Codes {
    U8(Vec<u8>),
    U16(Vec<u16>),
}

impl Codes {
    pub fn len(&self) -> usize {
        match self {
            Codes::U8(c) => c.len(),
            Codes::U16(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> u32 {
        match self {
            Codes::U8(c) => c[i] as u32,
            Codes::U16(c) => c[i] as u32,
        }
    }

    /// Payload size in bytes.
    pub fn byte_len(&self) -> usize {
        match self {
            Codes::U8(c) => c.len(),
            Codes::U16(c) => 2 * c.len(),
        }
    }
}

/// Quantized feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFeatures {
    n_rows: usize,
    n_cols: usize,
    codes: Codes,
    params: QuantParams,
}

impl QuantizedFeatures {
    pub fn new(n_rows: usize, n_cols: usize, codes: Codes, params: QuantParams) -> Result<Self, QuantError> {
        if codes.len() != n_rows * n_cols {
            return Err(QuantError::LengthMismatch { rows: n_rows, cols: n_cols, got: codes.len() });
        }
        let wide = matches!(codes, Codes::U16(_));
        if wide != (params.bits > 8) {
            return Err(QuantError::InvalidBits(params.bits));
        }
        let levels = params.levels();
        if let Some(i) = (0..codes.len()).find(|&i| codes.get(i) > levels) {
            return Err(QuantError::CodeOutOfRange { code: codes.get(i) as u16, bits: params.bits });
        }
        Ok(Self { n_rows, n_cols, codes, params })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn codes(&self) -> &Codes {
        &self.codes
    }

    pub fn params(&self) -> QuantParams {
        self.params
    }

    /// Bytes of the code payload, excluding any header.
    pub fn payload_bytes(&self) -> usize {
        self.codes.byte_len()
    }
}

/// Global minimum and maximum of `x`.
pub fn fit_params(x: &DenseMatrix, bits: u8) -> Result<QuantParams, QuantError> {
    if x.data().is_empty() {
        return Err(QuantError::EmptyMatrix);
    }
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in x.data() {
        if !v.is_finite() {
            return Err(QuantError::NonFinite(v));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    QuantParams::new(lo, hi, bits)
}

/// Encodes every entry of `x`. Values outside the calibrated range clamp to
/// the end codes.
pub fn quantize(x: &DenseMatrix, p: QuantParams) -> QuantizedFeatures {
    let codes = if p.bits <= 8 {
        Codes::U8(x.data().par_iter().map(|&v| p.encode(v) as u8).collect())
    } else {
        Codes::U16(x.data().par_iter().map(|&v| p.encode(v) as u16).collect())
    };
    QuantizedFeatures { n_rows: x.n_rows(), n_cols: x.n_cols(), codes, params: p }
}

pub fn dequantize(qf: &QuantizedFeatures) -> DenseMatrix {
    let p = qf.params;
    let data: Vec<f32> = match &qf.codes {
        Codes::U8(c) => c.par_iter().map(|&q| p.decode(q as u32)).collect(),
        Codes::U16(c) => c.par_iter().map(|&q| p.decode(q as u32)).collect(),
    };
    DenseMatrix::from_vec_unchecked(qf.n_rows, qf.n_cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p8(lo: f32, hi: f32) -> QuantParams {
        QuantParams::new(lo, hi, 8).unwrap()
    }

    #[test]
    fn fit_examples() {
        let c = DenseMatrix::from_fn(3, 2, |_, _| 5.0);
        let p = fit_params(&c, 8).unwrap();
        assert_eq!((p.x_min(), p.x_max()), (5.0, 5.0));

        let r = DenseMatrix::from_fn(1, 11, |_, j| j as f32 / 10.0);
        let p = fit_params(&r, 8).unwrap();
        assert_eq!((p.x_min(), p.x_max()), (0.0, 1.0));

        assert_eq!(fit_params(&DenseMatrix::zeros(0, 4), 8), Err(QuantError::EmptyMatrix));
        assert_eq!(fit_params(&r, 0), Err(QuantError::InvalidBits(0)));
    }

    #[test]
    fn encode_decode_examples() {
        let p = p8(0.0, 1.0);
        assert_eq!(p.encode(0.5), 127);
        assert_eq!(p.encode(0.0), 0);
        assert_eq!(p.encode(1.0), 255);
        assert_eq!(p.encode(-3.0), 0);
        assert_eq!(p.encode(7.0), 255);
        assert_eq!(p.decode(0), 0.0);
        assert_eq!(p.decode(255), 1.0);
        assert!((p.decode(127) - 0.498_039).abs() < 1e-6);

        let d = p8(2.5, 2.5);
        assert_eq!(d.encode(2.5), 0);
        assert_eq!(d.decode(0), 2.5);
        assert_eq!(d.decode(17), 2.5);
    }

    #[test]
    fn payload_is_one_byte_per_entry() {
        let x = DenseMatrix::from_fn(4, 3, |i, j| (i * j) as f32);
        let q = quantize(&x, fit_params(&x, 8).unwrap());
        assert_eq!(q.payload_bytes(), 12);
        assert_eq!(q.payload_bytes() * 4, std::mem::size_of_val(x.data()));
        let q = quantize(&x, fit_params(&x, 12).unwrap());
        assert_eq!(q.payload_bytes(), 24);
    }

    #[test]
    fn constructor_rejects_bad_codes() {
        let p = QuantParams::new(0.0, 1.0, 4).unwrap();
        assert!(QuantizedFeatures::new(1, 2, Codes::U8(vec![3, 16]), p).is_err());
        assert!(QuantizedFeatures::new(1, 3, Codes::U8(vec![3, 15]), p).is_err());
        assert!(QuantizedFeatures::new(1, 2, Codes::U16(vec![3, 15]), p).is_err());
        assert!(QuantizedFeatures::new(1, 2, Codes::U8(vec![3, 15]), p).is_ok());
        assert!(QuantParams::new(1.0, 0.0, 8).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_within_one_step(
            lo in -1e4f32..1e4,
            span in 1e-3f32..1e4,
            t in 0.0f64..=1.0,
            bits in 1u8..=16,
        ) {
            let hi = lo + span;
            let p = QuantParams::new(lo, hi, bits).unwrap();
            let x = (lo as f64 + t * (hi as f64 - lo as f64)) as f32;
            let x = x.clamp(lo, hi);
            let q = p.encode(x);
            prop_assert!(q <= p.levels());
            let err = (p.decode(q) as f64 - x as f64).abs();
            prop_assert!(err <= p.step(), "x={x} q={q} err={err} step={}", p.step());
        }

        #[test]
        fn codes_are_monotone(lo in -100f32..100.0, span in 1e-2f32..100.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let p = p8(lo, lo + span);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            let xa = lo + (a * span as f64) as f32;
            let xb = lo + (b * span as f64) as f32;
            prop_assert!(xa > xb || p.encode(xa) <= p.encode(xb));
        }

        #[test]
        fn codebook_is_a_fixed_point(lo in -100f32..100.0, span in 1e-2f32..100.0, x in -300f32..300.0) {
            let p = p8(lo, lo + span);
            let q = p.encode(x);
            prop_assert_eq!(p.encode(p.decode(q)), q);
        }
    }
}
