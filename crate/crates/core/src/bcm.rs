//! Block-circulant matrix representation and FFT-based matrix–vector
//! multiplication.
//!
//! A dense `m×n` weight matrix is partitioned into `f×g` blocks of size `b×b`
//! (zero-padded when `b` does not divide `m` or `n`). Each block is collapsed
//! to a single length-`b` *index vector* `p`, and the block acts on inputs as
//! the circulant matrix whose first column is `p`: entry `(r, c)` equals
//! `p[(r − c) mod b]`. Multiplying a circulant block by a vector is circular
//! convolution, computed as `IFFT(FFT(p) ∘ FFT(x))`, which drops the per-block
//! cost from O(b²) to O(b log b).
//!
//! Block spectra are precomputed at construction and the matrix is immutable
//! afterwards, so concurrent reads never observe a stale cache.

use std::sync::OnceLock;

use num_complex::{Complex, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::par;
use crate::tensor::Tensor;

/// How a dense block is reduced to its index vector.
///
/// `DiagonalMean` averages the `b` entries on each wrapped circulant diagonal,
/// which is the least-squares-optimal circulant fit. `RowMean` collapses each
/// block row to its mean. `FirstRow` reads the index vector off the block's
/// first row. All three are exact on blocks that are already circulant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMode {
    DiagonalMean,
    RowMean,
    FirstRow,
}

impl CompressionMode {
    pub fn as_byte(self) -> u8 {
        match self {
            CompressionMode::DiagonalMean => 0,
            CompressionMode::RowMean => 1,
            CompressionMode::FirstRow => 2,
        }
    }

    pub fn from_byte(v: u8) -> Result<Self> {
        match v {
            0 => Ok(CompressionMode::DiagonalMean),
            1 => Ok(CompressionMode::RowMean),
            2 => Ok(CompressionMode::FirstRow),
            other => Err(Error::format(format!("unknown compression mode {other}"))),
        }
    }
}

impl std::fmt::Display for CompressionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CompressionMode::DiagonalMean => "diagonal_mean",
            CompressionMode::RowMean => "row_mean",
            CompressionMode::FirstRow => "first_row",
        };
        f.write_str(s)
    }
}

/// Compressed weight matrix: an `f×g` grid of length-`b` index vectors in
/// place of the dense `m×n` entries.
#[derive(Debug, Clone)]
pub struct BlockCirculantMatrix {
    m: usize,
    n: usize,
    b: usize,
    mode: CompressionMode,
    /// f·g index vectors, flattened in row-major grid order.
    vectors: Vec<f64>,
    /// Forward FFT of every index vector, length `fft_len` per block.
    spectra: Vec<Complex64>,
    spectra32: OnceLock<Vec<Complex<f32>>>,
    fft_len: usize,
}

impl BlockCirculantMatrix {
    /// Grid rows `f = ceil(m/b)`.
    pub fn grid_rows(&self) -> usize {
        self.m.div_ceil(self.b)
    }

    /// Grid cols `g = ceil(n/b)`.
    pub fn grid_cols(&self) -> usize {
        self.n.div_ceil(self.b)
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn block_size(&self) -> usize {
        self.b
    }

    pub fn mode(&self) -> CompressionMode {
        self.mode
    }

    /// Zero rows appended so the block grid tiles the matrix.
    pub fn pad_rows(&self) -> usize {
        self.grid_rows() * self.b - self.m
    }

    pub fn pad_cols(&self) -> usize {
        self.grid_cols() * self.b - self.n
    }

    /// Total scalars stored: exactly `f·g·b`.
    pub fn stored_scalars(&self) -> usize {
        self.vectors.len()
    }

    pub fn index_vector(&self, i: usize, j: usize) -> &[f64] {
        let off = (i * self.grid_cols() + j) * self.b;
        &self.vectors[off..off + self.b]
    }

    pub fn index_vectors(&self) -> &[f64] {
        &self.vectors
    }

    /// Builds a matrix from raw index vectors and eagerly computes the
    /// per-block spectra.
    pub fn from_index_vectors(
        m: usize,
        n: usize,
        b: usize,
        mode: CompressionMode,
        vectors: Vec<f64>,
    ) -> Result<Self> {
        if b == 0 {
            return Err(Error::domain("block size must be >= 1".to_string()));
        }
        if m == 0 || n == 0 {
            return Err(Error::shape("matrix dimensions must be >= 1".to_string()));
        }
        let f = m.div_ceil(b);
        let g = n.div_ceil(b);
        if vectors.len() != f * g * b {
            return Err(Error::shape(format!(
                "expected {} index-vector scalars for {}x{} blocks of size {}, got {}",
                f * g * b,
                f,
                g,
                b,
                vectors.len()
            )));
        }
        // Power-of-two blocks convolve cyclically at length b; other sizes go
        // through a zero-padded linear convolution folded back mod b.
        let fft_len = if b.is_power_of_two() {
            b
        } else {
            fft::next_pow2(2 * b - 1)?
        };
        let mut spectra = Vec::with_capacity(f * g * fft_len);
        for block in vectors.chunks_exact(b) {
            let mut buf: Vec<Complex64> = block.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            buf.resize(fft_len, Complex64::new(0.0, 0.0));
            fft::fft_in_place(&mut buf)?;
            spectra.extend_from_slice(&buf);
        }
        Ok(BlockCirculantMatrix {
            m,
            n,
            b,
            mode,
            vectors,
            spectra,
            spectra32: OnceLock::new(),
            fft_len,
        })
    }

    /// Compresses a dense rank-2 tensor into block-circulant form.
    pub fn compress(w: &Tensor, b: usize, mode: CompressionMode) -> Result<Self> {
        if b == 0 {
            return Err(Error::domain("block size must be >= 1".to_string()));
        }
        let (m, n) = w.dims2()?;
        let f = m.div_ceil(b);
        let g = n.div_ceil(b);
        let block_at = |i: usize, j: usize, r: usize, c: usize| -> f64 {
            let row = i * b + r;
            let col = j * b + c;
            if row < m && col < n {
                w.at2(row, col)
            } else {
                0.0
            }
        };
        let mut vectors = Vec::with_capacity(f * g * b);
        for i in 0..f {
            for j in 0..g {
                match mode {
                    CompressionMode::DiagonalMean => {
                        // Wrapped diagonal k holds the entries with (r - c) mod b == k.
                        for k in 0..b {
                            let sum: f64 = (0..b).map(|c| block_at(i, j, (c + k) % b, c)).sum();
                            vectors.push(sum / b as f64);
                        }
                    }
                    CompressionMode::RowMean => {
                        for k in 0..b {
                            let sum: f64 = (0..b).map(|c| block_at(i, j, k, c)).sum();
                            vectors.push(sum / b as f64);
                        }
                    }
                    CompressionMode::FirstRow => {
                        // First-row entry (0, c) of a circulant block equals
                        // p[(b - c) mod b], so the vector is read back through
                        // that index map.
                        for k in 0..b {
                            vectors.push(block_at(i, j, 0, (b - k) % b));
                        }
                    }
                }
            }
        }
        Self::from_index_vectors(m, n, b, mode, vectors)
    }

    /// Reconstructs the dense `m×n` matrix; padding introduced at compression
    /// time is stripped.
    pub fn expand(&self) -> Tensor {
        let g = self.grid_cols();
        let mut data = vec![0.0; self.m * self.n];
        for row in 0..self.m {
            let (i, r) = (row / self.b, row % self.b);
            for col in 0..self.n {
                let (j, c) = (col / self.b, col % self.b);
                let p = &self.vectors[(i * g + j) * self.b..];
                data[row * self.n + col] = p[(r + self.b - c) % self.b];
            }
        }
        Tensor::new(vec![self.m, self.n], data).expect("expand dimensions are consistent")
    }

    /// Dense parameter count divided by stored scalar count:
    /// `(m·n) / (f·g·b)`, which equals `b` exactly when `b` divides both
    /// dimensions.
    pub fn compression_ratio(&self) -> f64 {
        (self.m * self.n) as f64 / self.stored_scalars() as f64
    }

    fn block_spectrum(&self, i: usize, j: usize) -> &[Complex64] {
        let off = (i * self.grid_cols() + j) * self.fft_len;
        &self.spectra[off..off + self.fft_len]
    }

    fn spectra32(&self) -> &[Complex<f32>] {
        self.spectra32.get_or_init(|| {
            let g = self.grid_cols();
            let f = self.grid_rows();
            let mut out = Vec::with_capacity(f * g * self.fft_len);
            for block in self.vectors.chunks_exact(self.b) {
                let mut buf: Vec<Complex<f32>> =
                    block.iter().map(|&v| Complex::new(v as f32, 0.0)).collect();
                buf.resize(self.fft_len, Complex::new(0.0, 0.0));
                fft::fft_in_place(&mut buf).expect("fft_len is a power of two");
                out.extend_from_slice(&buf);
            }
            out
        })
    }

    /// Splits `x` into `g` zero-padded blocks and transforms each.
    fn input_spectra(&self, x: &[f64]) -> Vec<Complex64> {
        let g = self.grid_cols();
        let mut out = vec![Complex64::new(0.0, 0.0); g * self.fft_len];
        for j in 0..g {
            let start = j * self.b;
            let stop = (start + self.b).min(self.n);
            let buf = &mut out[j * self.fft_len..(j + 1) * self.fft_len];
            for (k, &v) in x[start..stop].iter().enumerate() {
                buf[k] = Complex64::new(v, 0.0);
            }
            fft::fft_in_place(buf).expect("fft_len is a power of two");
        }
        out
    }

    /// FFT-based product `y = M·x`, equal to `expand(M)·x`.
    ///
    /// Per block row the spectral products are accumulated over `j` in fixed
    /// ascending order (IFFT is linear, so a single inverse transform per row
    /// suffices), which keeps the result deterministic under parallel
    /// execution.
    pub fn matvec(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 1 {
            return Err(Error::shape(format!(
                "matvec expects a rank-1 input, got shape {:?}",
                x.shape()
            )));
        }
        if x.len() != self.n {
            return Err(Error::shape(format!(
                "matvec length mismatch: matrix is {}x{}, input has {}",
                self.m,
                self.n,
                x.len()
            )));
        }
        let xs = self.input_spectra(x.data());
        let g = self.grid_cols();
        let rows = par::map_indexed(self.grid_rows(), |i| {
            let mut acc = vec![Complex64::new(0.0, 0.0); self.fft_len];
            for j in 0..g {
                let p = self.block_spectrum(i, j);
                let xj = &xs[j * self.fft_len..(j + 1) * self.fft_len];
                for ((a, pv), xv) in acc.iter_mut().zip(p).zip(xj) {
                    *a += pv * xv;
                }
            }
            fft::ifft_in_place(&mut acc).expect("fft_len is a power of two");
            self.fold_block(&acc, |z| z.re)
        });
        let mut data = rows.concat();
        data.truncate(self.m);
        Ok(Tensor::vector(data))
    }

    /// Single-precision variant of [`matvec`](Self::matvec): spectra, input
    /// transforms, and accumulation all run in `f32`, emulating a 32-bit
    /// datapath.
    pub fn matvec_f32(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 1 || x.len() != self.n {
            return Err(Error::shape(format!(
                "matvec length mismatch: matrix is {}x{}, input shape {:?}",
                self.m,
                self.n,
                x.shape()
            )));
        }
        let g = self.grid_cols();
        let mut xs = vec![Complex::<f32>::new(0.0, 0.0); g * self.fft_len];
        for j in 0..g {
            let start = j * self.b;
            let stop = (start + self.b).min(self.n);
            let buf = &mut xs[j * self.fft_len..(j + 1) * self.fft_len];
            for (k, &v) in x.data()[start..stop].iter().enumerate() {
                buf[k] = Complex::new(v as f32, 0.0);
            }
            fft::fft_in_place(buf).expect("fft_len is a power of two");
        }
        let spectra = self.spectra32();
        let rows = par::map_indexed(self.grid_rows(), |i| {
            let mut acc = vec![Complex::<f32>::new(0.0, 0.0); self.fft_len];
            for j in 0..g {
                let off = (i * g + j) * self.fft_len;
                let p = &spectra[off..off + self.fft_len];
                let xj = &xs[j * self.fft_len..(j + 1) * self.fft_len];
                for ((a, pv), xv) in acc.iter_mut().zip(p).zip(xj) {
                    *a += pv * xv;
                }
            }
            fft::ifft_in_place(&mut acc).expect("fft_len is a power of two");
            self.fold_block(&acc, |z| z.re as f64)
        });
        let mut data = rows.concat();
        data.truncate(self.m);
        Ok(Tensor::vector(data))
    }

    /// Extracts one output block from an inverse transform. For power-of-two
    /// blocks the convolution is already cyclic; otherwise the linear
    /// convolution tail wraps back onto the head.
    fn fold_block<T: Copy>(&self, z: &[T], re: impl Fn(T) -> f64) -> Vec<f64> {
        if self.b.is_power_of_two() {
            z[..self.b].iter().map(|&v| re(v)).collect()
        } else {
            (0..self.b).map(|k| re(z[k]) + re(z[k + self.b])).collect()
        }
    }

    /// Batched matvec: column `k` of the result is `matvec` applied to column
    /// `k` of `x` (shape `n×s`).
    pub fn matmul(&self, x: &Tensor) -> Result<Tensor> {
        let (xr, s) = x.dims2()?;
        if xr != self.n {
            return Err(Error::shape(format!(
                "matmul mismatch: matrix is {}x{}, input is {}x{}",
                self.m, self.n, xr, s
            )));
        }
        let cols = par::map_indexed(s, |k| {
            let col = Tensor::vector(x.column(k));
            self.matvec(&col).expect("column length already validated")
        });
        let mut data = vec![0.0; self.m * s];
        for (k, col) in cols.iter().enumerate() {
            for (r, &v) in col.data().iter().enumerate() {
                data[r * s + k] = v;
            }
        }
        Tensor::new(vec![self.m, s], data)
    }

    /// Serializes one weight record: a fixed header followed by the `f·g·b`
    /// index-vector scalars as little-endian `f32` in row-major block order.
    pub fn encode_record(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(21 + 4 * self.vectors.len());
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.b as u32).to_le_bytes());
        out.push(self.mode.as_byte());
        out.extend_from_slice(&(self.pad_rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.pad_cols() as u32).to_le_bytes());
        for &v in &self.vectors {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn decode_record(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 21 {
            return Err(Error::format("bcm record truncated".to_string()));
        }
        let m = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let b = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mode = CompressionMode::from_byte(bytes[12])?;
        let pad_rows = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
        let pad_cols = u32::from_le_bytes(bytes[17..21].try_into().unwrap()) as usize;
        if b == 0 {
            return Err(Error::format("bcm record has zero block size".to_string()));
        }
        let f = m.div_ceil(b);
        let g = n.div_ceil(b);
        if pad_rows != f * b - m || pad_cols != g * b - n {
            return Err(Error::format(format!(
                "bcm record padding mismatch: header says ({pad_rows}, {pad_cols})"
            )));
        }
        let expected = f * g * b;
        let payload = &bytes[21..];
        if payload.len() != expected * 4 {
            return Err(Error::format(format!(
                "bcm record payload has {} bytes, expected {}",
                payload.len(),
                expected * 4
            )));
        }
        let vectors = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Self::from_index_vectors(m, n, b, mode, vectors)
    }
}
