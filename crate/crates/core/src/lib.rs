//! Block-circulant compression of transformer weights with FFT-based inference
//! kernels, 16-bit fixed-point emulation, and an accelerator-side resource
//! allocator and pipeline scheduler.
//!
//! The crate is organized around the data plane (`tensor`, `fft`, `bcm`,
//! `quant`, `nn`), the persistence layer (`container`), the performance model
//! (`sched`), and deterministic fixture generation (`gen`).
//!
//! With the default `parallel` feature, data-parallel inner loops (block-row
//! spectral products, batched matvecs, per-head attention) fan out over rayon;
//! without it every loop runs sequentially with identical results.

pub mod bcm;
pub mod container;
pub mod error;
pub mod fft;
pub mod gen;
pub mod nn;
pub mod quant;
pub mod sched;
pub mod tensor;

mod par;

pub use error::{Error, Result};
pub use tensor::Tensor;
