//! 16-bit signed fixed-point quantization, emulating the accelerator
//! datapath precision. Values are stored as `i16` with a per-tensor fraction
//! bit count; arithmetic elsewhere runs on dequantized reals.

use serde::{Deserialize, Serialize};

use crate::bcm::{BlockCirculantMatrix, CompressionMode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TOTAL_BITS: u32 = 16;
const RAW_MAX: i32 = i16::MAX as i32;
const RAW_MIN: i32 = i16::MIN as i32;

/// Signed Q-format with 16 total bits and `frac_bits` fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub frac_bits: u8,
}

impl FixedPointFormat {
    pub fn new(frac_bits: u8) -> Result<Self> {
        if frac_bits > 15 {
            return Err(Error::domain(format!(
                "frac_bits must be in [0, 15], got {frac_bits}"
            )));
        }
        Ok(FixedPointFormat { frac_bits })
    }

    pub fn scale(&self) -> f64 {
        (1u32 << self.frac_bits) as f64
    }

    /// Quantization step `2^(-frac_bits)`.
    pub fn resolution(&self) -> f64 {
        1.0 / self.scale()
    }

    /// Largest representable value `2^(15-frac_bits) - 2^(-frac_bits)`.
    pub fn max_value(&self) -> f64 {
        RAW_MAX as f64 * self.resolution()
    }

    /// Smallest representable value `-2^(15-frac_bits)`.
    pub fn min_value(&self) -> f64 {
        RAW_MIN as f64 * self.resolution()
    }

    fn quantize_scalar(&self, v: f64) -> i16 {
        // f64::round rounds halves away from zero; the scaled clamp keeps the
        // result inside i16 without overflow.
        let scaled = (v * self.scale()).round();
        scaled.clamp(RAW_MIN as f64, RAW_MAX as f64) as i16
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub shape: Vec<usize>,
    pub raw: Vec<i16>,
    pub format: FixedPointFormat,
}

/// Quantizes every element: clamp to the representable range, scale by
/// `2^frac_bits`, round half away from zero.
pub fn quantize(x: &Tensor, format: FixedPointFormat) -> QuantizedTensor {
    QuantizedTensor {
        shape: x.shape().to_vec(),
        raw: x
            .data()
            .iter()
            .map(|&v| format.quantize_scalar(v))
            .collect(),
        format,
    }
}

/// Reconstructs reals as `raw · 2^(-frac_bits)`.
pub fn dequantize(q: &QuantizedTensor) -> Tensor {
    let res = q.format.resolution();
    Tensor::new(
        q.shape.clone(),
        q.raw.iter().map(|&r| r as f64 * res).collect(),
    )
    .expect("quantized shape is consistent")
}

/// Largest `frac_bits` such that `max|x|` quantizes without clamping.
///
/// An all-zero tensor degenerates to maximal precision (frac_bits = 15).
pub fn choose_format(x: &Tensor) -> Result<FixedPointFormat> {
    if x.is_empty() {
        return Err(Error::domain(
            "cannot choose a format for an empty tensor".to_string(),
        ));
    }
    let max = x.data().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let min = x.data().iter().fold(f64::INFINITY, |m, &v| m.min(v));
    for frac_bits in (0..=15u8).rev() {
        let fmt = FixedPointFormat { frac_bits };
        let hi = (max * fmt.scale()).round();
        let lo = (min * fmt.scale()).round();
        if hi <= RAW_MAX as f64 && lo >= RAW_MIN as f64 {
            return Ok(fmt);
        }
    }
    Ok(FixedPointFormat { frac_bits: 0 })
}

/// Quantize with a format chosen from the tensor itself.
pub fn quantize_auto(x: &Tensor) -> Result<QuantizedTensor> {
    Ok(quantize(x, choose_format(x)?))
}

/// Quantize–dequantize emulation: the identity up to the Q-format rounding.
pub fn requantize(x: &Tensor) -> Result<Tensor> {
    Ok(dequantize(&quantize_auto(x)?))
}

/// A block-circulant matrix whose index vectors are held in fixed point.
#[derive(Debug, Clone)]
pub struct QuantizedBcm {
    pub m: usize,
    pub n: usize,
    pub b: usize,
    pub mode: CompressionMode,
    pub format: FixedPointFormat,
    pub raw: Vec<i16>,
}

impl QuantizedBcm {
    pub fn from_bcm(src: &BlockCirculantMatrix) -> Result<Self> {
        let vectors = Tensor::vector(src.index_vectors().to_vec());
        let q = quantize_auto(&vectors)?;
        Ok(QuantizedBcm {
            m: src.rows(),
            n: src.cols(),
            b: src.block_size(),
            mode: src.mode(),
            format: q.format,
            raw: q.raw,
        })
    }

    pub fn to_bcm(&self) -> Result<BlockCirculantMatrix> {
        let res = self.format.resolution();
        let vectors = self.raw.iter().map(|&r| r as f64 * res).collect();
        BlockCirculantMatrix::from_index_vectors(self.m, self.n, self.b, self.mode, vectors)
    }

    /// Record layout: the bcm header plus a frac_bits byte, then `f·g·b`
    /// little-endian `i16` raw values.
    pub fn encode_record(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(22 + 2 * self.raw.len());
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.b as u32).to_le_bytes());
        out.push(self.mode.as_byte());
        let f = self.m.div_ceil(self.b);
        let g = self.n.div_ceil(self.b);
        out.extend_from_slice(&((f * self.b - self.m) as u32).to_le_bytes());
        out.extend_from_slice(&((g * self.b - self.n) as u32).to_le_bytes());
        out.push(self.format.frac_bits);
        for &r in &self.raw {
            out.extend_from_slice(&r.to_le_bytes());
        }
        out
    }

    pub fn decode_record(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 22 {
            return Err(Error::format("quant-bcm record truncated".to_string()));
        }
        let m = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let b = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mode = CompressionMode::from_byte(bytes[12])?;
        let pad_rows = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
        let pad_cols = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
        let format = FixedPointFormat::new(bytes[21])
            .map_err(|_| Error::format("quant-bcm record has frac_bits > 15".to_string()))?;
        if b == 0 {
            return Err(Error::format(
                "quant-bcm record has zero block size".to_string(),
            ));
        }
        let f = m.div_ceil(b);
        let g = n.div_ceil(b);
        if pad_rows != f * b - m || pad_cols != g * b - n {
            return Err(Error::format(
                "quant-bcm record padding mismatch".to_string(),
            ));
        }
        let payload = &bytes[22..];
        if payload.len() != f * g * b * 2 {
            return Err(Error::format(format!(
                "quant-bcm payload has {} bytes, expected {}",
                payload.len(),
                f * g * b * 2
            )));
        }
        let raw = payload
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(QuantizedBcm {
            m,
            n,
            b,
            mode,
            format,
            raw,
        })
    }
}
