//! Model-level structure: configuration, encoder/decoder stacks, embedding
//! lookup with sinusoidal positional encoding, and the full forward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    feed_forward, layer_norm, multi_head_attention, AttentionMask, AttentionWeights, LinearWeight,
    Precision, SoftmaxImpl,
};
use crate::quant;
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    EncoderDecoder,
    EncoderOnly,
}

fn default_true() -> bool {
    true
}

/// Model hyperparameters. `d_k` and `d_v` may be omitted in JSON, in which
/// case they derive as `d_model / num_heads`; when present they must equal
/// that quotient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    #[serde(default)]
    pub d_k: usize,
    #[serde(default)]
    pub d_v: usize,
    pub d_ffn: usize,
    pub vocab_size: usize,
    pub structure: Structure,
    pub max_seq_len: usize,
    #[serde(default = "default_true")]
    pub use_positional_encoding: bool,
    /// Generator seed recorded by `gen-toy` for replay; ignored by inference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl TransformerConfig {
    /// Fills derived fields and checks the dimensional invariants.
    pub fn normalized(mut self) -> Result<Self> {
        if self.num_heads == 0
            || self.d_model == 0
            || self.d_ffn == 0
            || self.vocab_size == 0
            || self.max_seq_len == 0
        {
            return Err(Error::domain(
                "config dimensions must all be >= 1".to_string(),
            ));
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::domain(format!(
                "d_model {} must be divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        let head_dim = self.d_model / self.num_heads;
        if self.d_k == 0 {
            self.d_k = head_dim;
        }
        if self.d_v == 0 {
            self.d_v = head_dim;
        }
        if self.d_k != head_dim || self.d_v != head_dim {
            return Err(Error::domain(format!(
                "d_k and d_v must equal d_model/num_heads = {head_dim}, got {}/{}",
                self.d_k, self.d_v
            )));
        }
        Ok(self)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TransformerConfig = serde_json::from_str(text)?;
        cfg.normalized()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Debug)]
pub struct NormParams {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
    pub eps: f64,
}

impl NormParams {
    pub fn unit(d: usize) -> Self {
        NormParams {
            gain: vec![1.0; d],
            bias: vec![0.0; d],
            eps: LAYER_NORM_EPS,
        }
    }
}

#[derive(Debug)]
pub struct FfnWeights {
    pub w1: LinearWeight,
    pub w2: LinearWeight,
}

#[derive(Debug)]
pub struct EncoderLayer {
    pub attn: AttentionWeights,
    pub norm1: NormParams,
    pub ffn: FfnWeights,
    pub norm2: NormParams,
}

#[derive(Debug)]
pub struct DecoderLayer {
    pub self_attn: AttentionWeights,
    pub norm1: NormParams,
    pub cross_attn: AttentionWeights,
    pub norm2: NormParams,
    pub ffn: FfnWeights,
    pub norm3: NormParams,
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    pub softmax: SoftmaxImpl,
    pub precision: Precision,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            softmax: SoftmaxImpl::Exact,
            precision: Precision::F64,
        }
    }
}

/// Precision emulation applied at sublayer boundaries.
fn squash(x: Tensor, precision: Precision) -> Result<Tensor> {
    match precision {
        Precision::F64 => Ok(x),
        Precision::F32 => Ok(x.round_to_f32()),
        Precision::Q16 => quant::requantize(&x),
    }
}

/// Post-norm encoder layer: `norm(x + MHA(x))` then `norm(· + FFN(·))`.
pub fn encoder_layer(x: &Tensor, layer: &EncoderLayer, opts: &ForwardOptions) -> Result<Tensor> {
    let attn = multi_head_attention(
        x,
        x,
        &layer.attn,
        &AttentionMask::none(),
        &opts.softmax,
        opts.precision,
    )?;
    let attn = squash(attn, opts.precision)?;
    let y1 = layer_norm(
        &x.add(&attn)?,
        &layer.norm1.gain,
        &layer.norm1.bias,
        layer.norm1.eps,
    )?;
    let y1 = squash(y1, opts.precision)?;
    let ffn = feed_forward(&y1, &layer.ffn.w1, &layer.ffn.w2, opts.precision)?;
    let ffn = squash(ffn, opts.precision)?;
    let y2 = layer_norm(
        &y1.add(&ffn)?,
        &layer.norm2.gain,
        &layer.norm2.bias,
        layer.norm2.eps,
    )?;
    squash(y2, opts.precision)
}

/// Decoder layer: masked self-attention, attention over the encoder output,
/// then the feed-forward block, each with residual + post-norm.
pub fn decoder_layer(
    x: &Tensor,
    memory: &Tensor,
    layer: &DecoderLayer,
    opts: &ForwardOptions,
) -> Result<Tensor> {
    let self_attn = multi_head_attention(
        x,
        x,
        &layer.self_attn,
        &AttentionMask::causal(),
        &opts.softmax,
        opts.precision,
    )?;
    let self_attn = squash(self_attn, opts.precision)?;
    let y1 = layer_norm(
        &x.add(&self_attn)?,
        &layer.norm1.gain,
        &layer.norm1.bias,
        layer.norm1.eps,
    )?;
    let y1 = squash(y1, opts.precision)?;

    let cross = multi_head_attention(
        &y1,
        memory,
        &layer.cross_attn,
        &AttentionMask::none(),
        &opts.softmax,
        opts.precision,
    )?;
    let cross = squash(cross, opts.precision)?;
    let y2 = layer_norm(
        &y1.add(&cross)?,
        &layer.norm2.gain,
        &layer.norm2.bias,
        layer.norm2.eps,
    )?;
    let y2 = squash(y2, opts.precision)?;

    let ffn = feed_forward(&y2, &layer.ffn.w1, &layer.ffn.w2, opts.precision)?;
    let ffn = squash(ffn, opts.precision)?;
    let y3 = layer_norm(
        &y2.add(&ffn)?,
        &layer.norm3.gain,
        &layer.norm3.bias,
        layer.norm3.eps,
    )?;
    squash(y3, opts.precision)
}

/// Fixed sinusoidal positional encoding added to embedded tokens.
pub fn positional_encoding(seq_len: usize, d_model: usize) -> Tensor {
    let mut data = vec![0.0; seq_len * d_model];
    for pos in 0..seq_len {
        for i in 0..d_model {
            let exponent = 2.0 * (i / 2) as f64 / d_model as f64;
            let angle = pos as f64 / 10_000f64.powf(exponent);
            data[pos * d_model + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![seq_len, d_model], data).expect("positional encoding shape")
}

/// A loaded model: embedding table plus encoder/decoder stacks. Weights are
/// immutable after construction; forward passes are read-only.
#[derive(Debug)]
pub struct Model {
    pub config: TransformerConfig,
    pub embedding: Tensor,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    /// Optional explicit logit projection; absent means tied transpose of the
    /// embedding matrix.
    pub output_proj: Option<LinearWeight>,
}

impl Model {
    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        let (vocab, d) = self.embedding.dims2()?;
        if vocab != cfg.vocab_size || d != cfg.d_model {
            return Err(Error::shape(format!(
                "embedding is {vocab}x{d}, config wants {}x{}",
                cfg.vocab_size, cfg.d_model
            )));
        }
        if self.encoder.len() != cfg.num_layers {
            return Err(Error::shape(format!(
                "encoder stack has {} layers, config wants {}",
                self.encoder.len(),
                cfg.num_layers
            )));
        }
        let expect_dec = match cfg.structure {
            Structure::EncoderDecoder => cfg.num_layers,
            Structure::EncoderOnly => 0,
        };
        if self.decoder.len() != expect_dec {
            return Err(Error::shape(format!(
                "decoder stack has {} layers, config wants {expect_dec}",
                self.decoder.len()
            )));
        }
        for layer in &self.encoder {
            if layer.attn.heads.len() != cfg.num_heads {
                return Err(Error::shape(
                    "encoder layer head count mismatch".to_string(),
                ));
            }
        }
        Ok(())
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::domain(
                "token sequence must be non-empty".to_string(),
            ));
        }
        if tokens.len() > self.config.max_seq_len {
            return Err(Error::domain(format!(
                "sequence length {} exceeds max_seq_len {}",
                tokens.len(),
                self.config.max_seq_len
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::domain(format!(
                "token id {bad} out of vocabulary (size {})",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Embedding lookup plus positional encoding (when enabled).
    pub fn embed(&self, tokens: &[usize]) -> Result<Tensor> {
        self.check_tokens(tokens)?;
        let rows: Vec<Vec<f64>> = tokens
            .iter()
            .map(|&t| self.embedding.row(t).to_vec())
            .collect();
        let embedded = Tensor::from_rows(&rows)?;
        self.embed_from_rows(embedded)
    }

    /// Applies positional encoding to already-fetched embedding rows. Used by
    /// the CLI when the table is streamed from the weight file instead of
    /// being resident.
    pub fn embed_from_rows(&self, embedded: Tensor) -> Result<Tensor> {
        let (s, d) = embedded.dims2()?;
        if d != self.config.d_model {
            return Err(Error::shape(format!(
                "embedded rows have width {d}, config wants {}",
                self.config.d_model
            )));
        }
        if self.config.use_positional_encoding {
            embedded.add(&positional_encoding(s, d))
        } else {
            Ok(embedded)
        }
    }

    pub fn encode(&self, x: &Tensor, opts: &ForwardOptions) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.encoder {
            h = encoder_layer(&h, layer, opts)?;
        }
        Ok(h)
    }

    pub fn decode(&self, x: &Tensor, memory: &Tensor, opts: &ForwardOptions) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.decoder {
            h = decoder_layer(&h, memory, layer, opts)?;
        }
        Ok(h)
    }

    /// Full forward pass from token ids to final hidden states `s×d_model`.
    ///
    /// Encoder-decoder models run the encoder over the tokens and then the
    /// decoder over the same embedded sequence with causal self-attention and
    /// cross-attention to the encoder output (one teacher-forced pass; the
    /// harness loops for generation).
    pub fn forward(&self, tokens: &[usize], opts: &ForwardOptions) -> Result<Tensor> {
        let x = self.embed(tokens)?;
        self.forward_embedded(&x, opts)
    }

    pub fn forward_embedded(&self, x: &Tensor, opts: &ForwardOptions) -> Result<Tensor> {
        let x = squash(x.clone(), opts.precision)?;
        let encoded = self.encode(&x, opts)?;
        match self.config.structure {
            Structure::EncoderOnly => Ok(encoded),
            Structure::EncoderDecoder => self.decode(&x, &encoded, opts),
        }
    }

    /// Projects hidden states to vocabulary logits through the explicit output
    /// projection when present, or the tied embedding transpose otherwise.
    pub fn logits(&self, hidden: &Tensor) -> Result<Tensor> {
        match &self.output_proj {
            Some(proj) => proj.apply(hidden),
            None => hidden.matmul_nt(&self.embedding),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcm::{BlockCirculantMatrix, CompressionMode};
    use crate::nn::HeadWeights;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn micro_config(structure: Structure, positional: bool) -> TransformerConfig {
        TransformerConfig {
            num_layers: 2,
            d_model: 16,
            num_heads: 2,
            d_k: 0,
            d_v: 0,
            d_ffn: 64,
            vocab_size: 50,
            structure,
            max_seq_len: 32,
            use_positional_encoding: positional,
            seed: None,
        }
        .normalized()
        .unwrap()
    }

    fn random_tensor(rng: &mut StdRng, r: usize, c: usize) -> Tensor {
        let scale = 1.0 / (c as f64).sqrt();
        Tensor::new(
            vec![r, c],
            (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect(),
        )
        .unwrap()
    }

    /// Builds a model whose every weight matrix is exactly circulant, returned
    /// both as a dense model and as its BCM twin.
    fn circulant_twin_models(structure: Structure, b: usize, rng: &mut StdRng) -> (Model, Model) {
        let cfg = micro_config(structure, true);
        let d = cfg.d_model;
        let dk = cfg.head_dim();
        let dff = cfg.d_ffn;

        let mk = |m: usize, n: usize, rng: &mut StdRng| -> BlockCirculantMatrix {
            let f = m.div_ceil(b);
            let g = n.div_ceil(b);
            let scale = 1.0 / (n as f64).sqrt();
            let vecs: Vec<f64> = (0..f * g * b)
                .map(|_| rng.gen_range(-scale..scale))
                .collect();
            BlockCirculantMatrix::from_index_vectors(m, n, b, CompressionMode::DiagonalMean, vecs)
                .unwrap()
        };
        let attn_pair = |rng: &mut StdRng| -> (AttentionWeights, AttentionWeights) {
            let mut dense_heads = Vec::new();
            let mut bcm_heads = Vec::new();
            for _ in 0..cfg.num_heads {
                let (q, k, v) = (mk(dk, d, rng), mk(dk, d, rng), mk(dk, d, rng));
                dense_heads.push(HeadWeights {
                    w_q: LinearWeight::dense(q.expand()).unwrap(),
                    w_k: LinearWeight::dense(k.expand()).unwrap(),
                    w_v: LinearWeight::dense(v.expand()).unwrap(),
                });
                bcm_heads.push(HeadWeights {
                    w_q: LinearWeight::bcm(q),
                    w_k: LinearWeight::bcm(k),
                    w_v: LinearWeight::bcm(v),
                });
            }
            let wo = mk(d, d, rng);
            let bias: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.05..0.05)).collect();
            (
                AttentionWeights {
                    heads: dense_heads,
                    w_o: LinearWeight::dense(wo.expand())
                        .unwrap()
                        .with_bias(bias.clone())
                        .unwrap(),
                },
                AttentionWeights {
                    heads: bcm_heads,
                    w_o: LinearWeight::bcm(wo).with_bias(bias).unwrap(),
                },
            )
        };
        let ffn_pair = |rng: &mut StdRng| -> (FfnWeights, FfnWeights) {
            let w1 = mk(dff, d, rng);
            let w2 = mk(d, dff, rng);
            let b1: Vec<f64> = (0..dff).map(|_| rng.gen_range(-0.05..0.05)).collect();
            let b2: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.05..0.05)).collect();
            (
                FfnWeights {
                    w1: LinearWeight::dense(w1.expand())
                        .unwrap()
                        .with_bias(b1.clone())
                        .unwrap(),
                    w2: LinearWeight::dense(w2.expand())
                        .unwrap()
                        .with_bias(b2.clone())
                        .unwrap(),
                },
                FfnWeights {
                    w1: LinearWeight::bcm(w1).with_bias(b1).unwrap(),
                    w2: LinearWeight::bcm(w2).with_bias(b2).unwrap(),
                },
            )
        };

        let embedding = random_tensor(rng, cfg.vocab_size, d);
        let mut dense_enc = Vec::new();
        let mut bcm_enc = Vec::new();
        for _ in 0..cfg.num_layers {
            let (da, ba) = attn_pair(rng);
            let (df, bf) = ffn_pair(rng);
            dense_enc.push(EncoderLayer {
                attn: da,
                norm1: NormParams::unit(d),
                ffn: df,
                norm2: NormParams::unit(d),
            });
            bcm_enc.push(EncoderLayer {
                attn: ba,
                norm1: NormParams::unit(d),
                ffn: bf,
                norm2: NormParams::unit(d),
            });
        }
        let mut dense_dec = Vec::new();
        let mut bcm_dec = Vec::new();
        if structure == Structure::EncoderDecoder {
            for _ in 0..cfg.num_layers {
                let (ds, bs) = attn_pair(rng);
                let (dc, bc) = attn_pair(rng);
                let (df, bf) = ffn_pair(rng);
                dense_dec.push(DecoderLayer {
                    self_attn: ds,
                    norm1: NormParams::unit(d),
                    cross_attn: dc,
                    norm2: NormParams::unit(d),
                    ffn: df,
                    norm3: NormParams::unit(d),
                });
                bcm_dec.push(DecoderLayer {
                    self_attn: bs,
                    norm1: NormParams::unit(d),
                    cross_attn: bc,
                    norm2: NormParams::unit(d),
                    ffn: bf,
                    norm3: NormParams::unit(d),
                });
            }
        }
        (
            Model {
                config: cfg.clone(),
                embedding: embedding.clone(),
                encoder: dense_enc,
                decoder: dense_dec,
                output_proj: None,
            },
            Model {
                config: cfg,
                embedding,
                encoder: bcm_enc,
                decoder: bcm_dec,
                output_proj: None,
            },
        )
    }

    #[test]
    fn config_rejects_inconsistent_head_dims() {
        let mut cfg = micro_config(Structure::EncoderOnly, true);
        cfg.d_k = 5;
        assert!(cfg.normalized().is_err());

        let bad = TransformerConfig {
            num_heads: 3,
            ..micro_config(Structure::EncoderOnly, true)
        };
        assert!(bad.normalized().is_err());
    }

    #[test]
    fn config_json_roundtrip_fills_derived_fields() {
        let text = r#"{
            "num_layers": 2, "d_model": 200, "num_heads": 4,
            "d_ffn": 800, "vocab_size": 2048,
            "structure": "encoder_decoder", "max_seq_len": 256
        }"#;
        let cfg = TransformerConfig::from_json(text).unwrap();
        assert_eq!(cfg.d_k, 50);
        assert_eq!(cfg.d_v, 50);
        assert!(cfg.use_positional_encoding);
        let back = TransformerConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn empty_stack_returns_embedded_input() {
        let mut rng = StdRng::seed_from_u64(157);
        let mut cfg = micro_config(Structure::EncoderOnly, false);
        cfg.num_layers = 0;
        let model = Model {
            embedding: random_tensor(&mut rng, cfg.vocab_size, cfg.d_model),
            config: cfg,
            encoder: vec![],
            decoder: vec![],
            output_proj: None,
        };
        let tokens = [3usize, 1, 4, 1, 5];
        let out = model.forward(&tokens, &ForwardOptions::default()).unwrap();
        for (i, &t) in tokens.iter().enumerate() {
            assert_eq!(out.row(i), model.embedding.row(t));
        }
    }

    #[test]
    fn single_position_causal_equals_unmasked() {
        let mut rng = StdRng::seed_from_u64(163);
        let (dense, _) = circulant_twin_models(Structure::EncoderOnly, 4, &mut rng);
        let x = dense.embed(&[7]).unwrap();
        let layer = &dense.encoder[0];
        let unmasked = multi_head_attention(
            &x,
            &x,
            &layer.attn,
            &AttentionMask::none(),
            &SoftmaxImpl::Exact,
            Precision::F64,
        )
        .unwrap();
        let causal = multi_head_attention(
            &x,
            &x,
            &layer.attn,
            &AttentionMask::causal(),
            &SoftmaxImpl::Exact,
            Precision::F64,
        )
        .unwrap();
        assert!(unmasked.max_abs_diff(&causal).unwrap() < 1e-15);
    }

    #[test]
    fn bcm_forward_matches_dense_forward_encoder_only() {
        let mut rng = StdRng::seed_from_u64(167);
        let (dense, bcm) = circulant_twin_models(Structure::EncoderOnly, 4, &mut rng);
        dense.validate().unwrap();
        bcm.validate().unwrap();
        let tokens = [1usize, 9, 23, 42, 7, 0, 13, 30];
        let opts = ForwardOptions::default();
        let a = dense.forward(&tokens, &opts).unwrap();
        let b = bcm.forward(&tokens, &opts).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
    }

    #[test]
    fn bcm_forward_matches_dense_forward_encoder_decoder() {
        let mut rng = StdRng::seed_from_u64(173);
        let (dense, bcm) = circulant_twin_models(Structure::EncoderDecoder, 8, &mut rng);
        let tokens = [5usize, 2, 2, 19, 48];
        let opts = ForwardOptions::default();
        let a = dense.forward(&tokens, &opts).unwrap();
        let b = bcm.forward(&tokens, &opts).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
    }

    #[test]
    fn causal_prefix_is_stable_under_suffix_changes() {
        let mut rng = StdRng::seed_from_u64(179);
        let (dense, _) = circulant_twin_models(Structure::EncoderDecoder, 4, &mut rng);
        let opts = ForwardOptions::default();
        let memory = random_tensor(&mut rng, 6, dense.config.d_model);

        let a_tokens = dense.embed(&[1, 2, 3, 4, 5, 6]).unwrap();
        let b_tokens = dense.embed(&[1, 2, 3, 9, 8, 7]).unwrap();
        let a = dense.decode(&a_tokens, &memory, &opts).unwrap();
        let b = dense.decode(&b_tokens, &memory, &opts).unwrap();
        // Positions 0..3 share their prefix, so the causal stack must agree there.
        for t in 0..3 {
            for d in 0..dense.config.d_model {
                assert!((a.at2(t, d) - b.at2(t, d)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_bad_tokens() {
        let mut rng = StdRng::seed_from_u64(181);
        let (model, _) = circulant_twin_models(Structure::EncoderOnly, 4, &mut rng);
        let opts = ForwardOptions::default();
        assert!(matches!(model.forward(&[], &opts), Err(Error::Domain(_))));
        assert!(matches!(model.forward(&[50], &opts), Err(Error::Domain(_))));
        let long = vec![0usize; 33];
        assert!(matches!(model.forward(&long, &opts), Err(Error::Domain(_))));
    }

    #[test]
    fn tied_logits_have_vocab_width() {
        let mut rng = StdRng::seed_from_u64(191);
        let (model, _) = circulant_twin_models(Structure::EncoderOnly, 4, &mut rng);
        let hidden = model
            .forward(&[1, 2, 3], &ForwardOptions::default())
            .unwrap();
        let logits = model.logits(&hidden).unwrap();
        assert_eq!(logits.shape(), &[3, model.config.vocab_size]);
    }

    #[test]
    fn precision_modes_stay_finite_and_close() {
        let mut rng = StdRng::seed_from_u64(193);
        let (dense, bcm) = circulant_twin_models(Structure::EncoderOnly, 4, &mut rng);
        let tokens = [1usize, 2, 3, 4];
        let base = dense.forward(&tokens, &ForwardOptions::default()).unwrap();
        for precision in [Precision::F32, Precision::Q16] {
            for model in [&dense, &bcm] {
                let opts = ForwardOptions {
                    softmax: SoftmaxImpl::Exact,
                    precision,
                };
                let out = model.forward(&tokens, &opts).unwrap();
                let dev = out.max_abs_diff(&base).unwrap();
                assert!(dev.is_finite());
                assert!(dev < 0.2, "precision {precision:?} deviates by {dev}");
            }
        }
    }

    #[test]
    fn positional_encoding_values() {
        let pe = positional_encoding(3, 4);
        assert_eq!(pe.at2(0, 0), 0.0);
        assert_eq!(pe.at2(0, 1), 1.0);
        assert!((pe.at2(1, 0) - 1f64.sin()).abs() < 1e-15);
        assert!((pe.at2(2, 2) - (2.0 / 100.0f64).sin()).abs() < 1e-15);
    }
}
