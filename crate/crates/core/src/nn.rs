//! Transformer forward-pass primitives over dense or block-circulant weights:
//! softmax (exact and piecewise-linear), scaled dot-product attention,
//! multi-head attention, layer norm, and the position-wise feed-forward
//! network. Model-level structure lives in [`model`].

pub mod model;

use serde::{Deserialize, Serialize};

use crate::bcm::BlockCirculantMatrix;
use crate::error::{Error, Result};
use crate::par;
use crate::quant::{self, QuantizedBcm, QuantizedTensor};
use crate::tensor::Tensor;

pub use model::{Model, Structure, TransformerConfig};

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Softmax evaluation strategy. The piecewise-linear variant approximates
/// `exp` by a uniform linear interpolant on `[clamp_lo, clamp_hi]` (inputs are
/// max-subtracted first, so `clamp_hi = 0` covers the whole range) and
/// renormalizes the result exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SoftmaxImpl {
    #[default]
    Exact,
    PiecewiseLinear {
        segments: usize,
        clamp_lo: f64,
        clamp_hi: f64,
    },
}

pub const PWL_DEFAULT_SEGMENTS: usize = 32;
pub const PWL_DEFAULT_RANGE: (f64, f64) = (-8.0, 0.0);

impl SoftmaxImpl {
    pub fn exact() -> Self {
        SoftmaxImpl::Exact
    }

    /// Piecewise-linear softmax with the default range [-8, 0].
    pub fn pwl(segments: usize) -> Result<Self> {
        Self::pwl_with_range(segments, PWL_DEFAULT_RANGE.0, PWL_DEFAULT_RANGE.1)
    }

    pub fn pwl_with_range(segments: usize, clamp_lo: f64, clamp_hi: f64) -> Result<Self> {
        if segments < 2 {
            return Err(Error::domain(format!(
                "piecewise-linear softmax needs >= 2 segments, got {segments}"
            )));
        }
        if clamp_lo >= clamp_hi {
            return Err(Error::domain(format!(
                "clamp range must satisfy lo < hi, got [{clamp_lo}, {clamp_hi}]"
            )));
        }
        Ok(SoftmaxImpl::PiecewiseLinear {
            segments,
            clamp_lo,
            clamp_hi,
        })
    }
}

/// Linear interpolant of `exp` on `[lo, hi]` with `segments` uniform pieces;
/// inputs outside the range are clamped to its ends.
pub fn pwl_exp(t: f64, segments: usize, lo: f64, hi: f64) -> f64 {
    let t = t.clamp(lo, hi);
    let h = (hi - lo) / segments as f64;
    let idx = (((t - lo) / h) as usize).min(segments - 1);
    let t0 = lo + idx as f64 * h;
    let y0 = t0.exp();
    let y1 = (t0 + h).exp();
    y0 + (y1 - y0) * (t - t0) / h
}

/// Numerically stable softmax; the output sums to 1.
pub fn softmax(x: &[f64], imp: &SoftmaxImpl) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::domain("softmax of an empty vector".to_string()));
    }
    let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let weights: Vec<f64> = match *imp {
        SoftmaxImpl::Exact => x.iter().map(|&v| (v - max).exp()).collect(),
        SoftmaxImpl::PiecewiseLinear {
            segments,
            clamp_lo,
            clamp_hi,
        } => x
            .iter()
            .map(|&v| pwl_exp(v - max, segments, clamp_lo, clamp_hi))
            .collect(),
    };
    let sum: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / sum).collect())
}

// ---------------------------------------------------------------------------
// Masks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    None,
    Causal,
}

/// Which key positions each query may attend to. `explicit` entries are
/// `true` for visible positions; it combines with the causal rule, so a
/// position is masked if either source masks it.
#[derive(Debug, Clone)]
pub struct AttentionMask {
    pub mode: MaskMode,
    pub explicit: Option<Vec<Vec<bool>>>,
}

impl AttentionMask {
    pub fn none() -> Self {
        AttentionMask {
            mode: MaskMode::None,
            explicit: None,
        }
    }

    pub fn causal() -> Self {
        AttentionMask {
            mode: MaskMode::Causal,
            explicit: None,
        }
    }

    pub fn with_explicit(mut self, visible: Vec<Vec<bool>>) -> Self {
        self.explicit = Some(visible);
        self
    }

    fn is_masked(&self, i: usize, j: usize) -> bool {
        if self.mode == MaskMode::Causal && j > i {
            return true;
        }
        match &self.explicit {
            Some(rows) => !rows[i][j],
            None => false,
        }
    }
}

// ---------------------------------------------------------------------------
// Linear weights
// ---------------------------------------------------------------------------

/// Arithmetic precision for forward passes. `F32` routes block-circulant
/// products through the single-precision FFT path and rounds dense results
/// through `f32`; `Q16` quantize–dequantizes activations at sublayer
/// boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
    Q16,
}

#[derive(Debug)]
pub enum WeightKind {
    Dense(Tensor),
    Bcm(BlockCirculantMatrix),
    QuantDense {
        quantized: QuantizedTensor,
        dequantized: Tensor,
    },
    QuantBcm {
        quantized: QuantizedBcm,
        dequantized: BlockCirculantMatrix,
    },
}

/// An `m×n` linear map plus optional bias. All kinds expose the same logical
/// shape and apply as `y = x·Wᵀ (+ bias)` on row-major activations.
#[derive(Debug)]
pub struct LinearWeight {
    pub kind: WeightKind,
    pub bias: Option<Vec<f64>>,
}

impl LinearWeight {
    pub fn dense(w: Tensor) -> Result<Self> {
        w.dims2()?;
        Ok(LinearWeight {
            kind: WeightKind::Dense(w),
            bias: None,
        })
    }

    pub fn bcm(m: BlockCirculantMatrix) -> Self {
        LinearWeight {
            kind: WeightKind::Bcm(m),
            bias: None,
        }
    }

    pub fn quant_dense(q: QuantizedTensor) -> Result<Self> {
        let dequantized = quant::dequantize(&q);
        dequantized.dims2()?;
        Ok(LinearWeight {
            kind: WeightKind::QuantDense {
                quantized: q,
                dequantized,
            },
            bias: None,
        })
    }

    pub fn quant_bcm(q: QuantizedBcm) -> Result<Self> {
        let dequantized = q.to_bcm()?;
        Ok(LinearWeight {
            kind: WeightKind::QuantBcm {
                quantized: q,
                dequantized,
            },
            bias: None,
        })
    }

    pub fn with_bias(mut self, bias: Vec<f64>) -> Result<Self> {
        let (m, _) = self.logical_shape();
        if bias.len() != m {
            return Err(Error::shape(format!(
                "bias length {} does not match output dim {m}",
                bias.len()
            )));
        }
        self.bias = Some(bias);
        Ok(self)
    }

    /// Logical `(m, n)` shape, identical across all kinds.
    pub fn logical_shape(&self) -> (usize, usize) {
        match &self.kind {
            WeightKind::Dense(w) => (w.shape()[0], w.shape()[1]),
            WeightKind::Bcm(m) => (m.rows(), m.cols()),
            WeightKind::QuantDense { dequantized, .. } => {
                (dequantized.shape()[0], dequantized.shape()[1])
            }
            WeightKind::QuantBcm { dequantized, .. } => (dequantized.rows(), dequantized.cols()),
        }
    }

    pub fn is_compressed(&self) -> bool {
        matches!(self.kind, WeightKind::Bcm(_) | WeightKind::QuantBcm { .. })
    }

    /// `y = x·Wᵀ + bias` for `x` of shape `s×n`.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.apply_prec(x, Precision::F64)
    }

    pub fn apply_prec(&self, x: &Tensor, precision: Precision) -> Result<Tensor> {
        let (s, xn) = x.dims2()?;
        let (m, n) = self.logical_shape();
        if xn != n {
            return Err(Error::shape(format!(
                "linear apply mismatch: weight is {m}x{n}, input is {s}x{xn}"
            )));
        }
        let mut out = match (&self.kind, precision) {
            (WeightKind::Dense(w), Precision::F32)
            | (WeightKind::QuantDense { dequantized: w, .. }, Precision::F32) => {
                dense_apply_f32(x, w)?
            }
            (WeightKind::Dense(w), _) | (WeightKind::QuantDense { dequantized: w, .. }, _) => {
                x.matmul_nt(w)?
            }
            (WeightKind::Bcm(bm), prec)
            | (
                WeightKind::QuantBcm {
                    dequantized: bm, ..
                },
                prec,
            ) => bcm_apply(x, bm, prec)?,
        };
        if let Some(bias) = &self.bias {
            for r in 0..s {
                for (c, &b) in bias.iter().enumerate() {
                    let v = out.at2(r, c) + b;
                    out.set2(
                        r,
                        c,
                        if precision == Precision::F32 {
                            v as f32 as f64
                        } else {
                            v
                        },
                    );
                }
            }
        }
        Ok(out)
    }
}

fn dense_apply_f32(x: &Tensor, w: &Tensor) -> Result<Tensor> {
    let (s, _) = x.dims2()?;
    let (m, _) = w.dims2()?;
    let rows = par::map_indexed(s, |i| {
        let a = x.row(i);
        (0..m)
            .map(|j| {
                let b = w.row(j);
                let mut acc = 0.0f32;
                for (u, v) in a.iter().zip(b) {
                    acc += (*u as f32) * (*v as f32);
                }
                acc as f64
            })
            .collect::<Vec<f64>>()
    });
    Tensor::new(vec![s, m], rows.concat())
}

fn bcm_apply(x: &Tensor, bm: &BlockCirculantMatrix, precision: Precision) -> Result<Tensor> {
    let (s, _) = x.dims2()?;
    let rows: Vec<Result<Vec<f64>>> = par::map_indexed(s, |i| {
        let row = Tensor::vector(x.row(i).to_vec());
        let y = match precision {
            Precision::F32 => bm.matvec_f32(&row)?,
            _ => bm.matvec(&row)?,
        };
        Ok(y.into_data())
    });
    let mut data = Vec::with_capacity(s * bm.rows());
    for r in rows {
        data.extend(r?);
    }
    Tensor::new(vec![s, bm.rows()], data)
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// `softmax(QKᵀ/√d_k)·V` with masked positions excluded from the softmax, so
/// they receive exactly zero weight under both softmax implementations.
pub fn scaled_dot_product_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    mask: &AttentionMask,
    imp: &SoftmaxImpl,
) -> Result<Tensor> {
    let (s_q, d_k) = q.dims2()?;
    let (s_kv, d_k2) = k.dims2()?;
    let (s_v, d_v) = v.dims2()?;
    if d_k != d_k2 || s_kv != s_v {
        return Err(Error::shape(format!(
            "attention shape mismatch: Q {s_q}x{d_k}, K {s_kv}x{d_k2}, V {s_v}x{d_v}"
        )));
    }
    if let Some(rows) = &mask.explicit {
        if rows.len() != s_q || rows.iter().any(|r| r.len() != s_kv) {
            return Err(Error::shape("explicit mask shape mismatch".to_string()));
        }
    }
    let scale = 1.0 / (d_k as f64).sqrt();
    let out_rows: Vec<Result<Vec<f64>>> = par::map_indexed(s_q, |i| {
        let qi = q.row(i);
        let visible: Vec<usize> = (0..s_kv).filter(|&j| !mask.is_masked(i, j)).collect();
        if visible.is_empty() {
            return Err(Error::domain(format!(
                "attention row {i} has every position masked"
            )));
        }
        let scores: Vec<f64> = visible
            .iter()
            .map(|&j| {
                let kj = k.row(j);
                qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale
            })
            .collect();
        let weights = softmax(&scores, imp)?;
        let mut row = vec![0.0; d_v];
        for (&j, &w) in visible.iter().zip(&weights) {
            for (d, &vv) in v.row(j).iter().enumerate() {
                row[d] += w * vv;
            }
        }
        Ok(row)
    });
    let mut data = Vec::with_capacity(s_q * d_v);
    for r in out_rows {
        data.extend(r?);
    }
    Tensor::new(vec![s_q, d_v], data)
}

#[derive(Debug)]
pub struct HeadWeights {
    pub w_q: LinearWeight,
    pub w_k: LinearWeight,
    pub w_v: LinearWeight,
}

#[derive(Debug)]
pub struct AttentionWeights {
    pub heads: Vec<HeadWeights>,
    pub w_o: LinearWeight,
}

/// Multi-head attention: `Concat(Head_1, ..., Head_h)·W^O` where
/// `Head_i = Attention(x_q·W_i^Qᵀ, x_kv·W_i^Kᵀ, x_kv·W_i^Vᵀ)`. Distinct `x_kv`
/// supports the decoder's attention over the encoder output. Heads run in
/// parallel and are concatenated in index order, so the result is identical
/// to sequential execution.
pub fn multi_head_attention(
    x_q: &Tensor,
    x_kv: &Tensor,
    weights: &AttentionWeights,
    mask: &AttentionMask,
    imp: &SoftmaxImpl,
    precision: Precision,
) -> Result<Tensor> {
    if weights.heads.is_empty() {
        return Err(Error::shape(
            "multi-head attention needs >= 1 head".to_string(),
        ));
    }
    let (s_q, _) = x_q.dims2()?;
    let d_v = weights.heads[0].w_v.logical_shape().0;
    for (i, head) in weights.heads.iter().enumerate() {
        let (dk_q, _) = head.w_q.logical_shape();
        let (dk_k, _) = head.w_k.logical_shape();
        let (dv, _) = head.w_v.logical_shape();
        if dk_q != dk_k || dv != d_v {
            return Err(Error::shape(format!(
                "head {i} projection dims disagree: d_k {dk_q}/{dk_k}, d_v {dv} vs {d_v}"
            )));
        }
    }
    let (_, wo_in) = weights.w_o.logical_shape();
    if wo_in != weights.heads.len() * d_v {
        return Err(Error::shape(format!(
            "output projection expects {} inputs, heads concatenate to {}",
            wo_in,
            weights.heads.len() * d_v
        )));
    }
    let heads: Vec<Result<Tensor>> = par::map_indexed(weights.heads.len(), |i| {
        let head = &weights.heads[i];
        let q = head.w_q.apply_prec(x_q, precision)?;
        let k = head.w_k.apply_prec(x_kv, precision)?;
        let v = head.w_v.apply_prec(x_kv, precision)?;
        scaled_dot_product_attention(&q, &k, &v, mask, imp)
    });
    let width = weights.heads.len() * d_v;
    let mut concat = vec![0.0; s_q * width];
    for (h, head) in heads.into_iter().enumerate() {
        let head = head?;
        for r in 0..s_q {
            let dst = r * width + h * d_v;
            concat[dst..dst + d_v].copy_from_slice(head.row(r));
        }
    }
    let concat = Tensor::new(vec![s_q, width], concat)?;
    weights.w_o.apply_prec(&concat, precision)
}

// ---------------------------------------------------------------------------
// Layer norm and feed-forward
// ---------------------------------------------------------------------------

/// Per-row normalization `(x - mean)/sqrt(var + eps) · gain + bias` with
/// variance computed under 1/d normalization.
pub fn layer_norm(x: &Tensor, gain: &[f64], bias: &[f64], eps: f64) -> Result<Tensor> {
    let (s, d) = x.dims2()?;
    if gain.len() != d || bias.len() != d {
        return Err(Error::shape(format!(
            "layer norm params length {}/{} do not match width {d}",
            gain.len(),
            bias.len()
        )));
    }
    let mut out = Vec::with_capacity(s * d);
    for r in 0..s {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for (c, &v) in row.iter().enumerate() {
            out.push((v - mean) * inv * gain[c] + bias[c]);
        }
    }
    Tensor::new(vec![s, d], out)
}

/// `relu(x·W1ᵀ + b1)·W2ᵀ + b2`.
pub fn feed_forward(
    x: &Tensor,
    w1: &LinearWeight,
    w2: &LinearWeight,
    precision: Precision,
) -> Result<Tensor> {
    let hidden = w1.apply_prec(x, precision)?.map(|v| v.max(0.0));
    w2.apply_prec(&hidden, precision)
}
