//! Deterministic toy-model generation. All randomness flows from one seeded
//! ChaCha12 stream, so a given (preset, seed) pair always produces
//! byte-identical configs and weight files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::container::WeightRecord;
use crate::error::{Error, Result};
use crate::nn::model::{Structure, TransformerConfig};
use crate::sched::{DeviceConfig, DeviceSpec, PeClass, PeProfile, ResourceVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Encoder-decoder model with 2 layers, hidden size 200, 4 heads.
    Shallow,
    /// CI-sized encoder-only model: 2 layers, hidden size 16, 2 heads.
    Micro,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shallow" => Ok(Preset::Shallow),
            "micro" => Ok(Preset::Micro),
            other => Err(Error::domain(format!(
                "unknown preset {other}; expected shallow or micro"
            ))),
        }
    }
}

pub fn preset_config(preset: Preset, seed: u64) -> TransformerConfig {
    let cfg = match preset {
        Preset::Shallow => TransformerConfig {
            num_layers: 2,
            d_model: 200,
            num_heads: 4,
            d_k: 0,
            d_v: 0,
            d_ffn: 800,
            vocab_size: 2048,
            structure: Structure::EncoderDecoder,
            max_seq_len: 256,
            use_positional_encoding: true,
            seed: Some(seed),
        },
        Preset::Micro => TransformerConfig {
            num_layers: 2,
            d_model: 16,
            num_heads: 2,
            d_k: 0,
            d_v: 0,
            d_ffn: 64,
            vocab_size: 50,
            structure: Structure::EncoderOnly,
            max_seq_len: 32,
            use_positional_encoding: true,
            seed: Some(seed),
        },
    };
    cfg.normalized().expect("preset configs are consistent")
}

struct RecordGen {
    rng: ChaCha12Rng,
    records: Vec<(String, WeightRecord)>,
}

impl RecordGen {
    fn matrix(&mut self, name: &str, m: usize, n: usize) {
        let scale = 1.0 / (n as f64).sqrt();
        let data: Vec<f32> = (0..m * n)
            .map(|_| self.rng.gen_range(-scale..scale) as f32)
            .collect();
        self.records.push((
            name.to_string(),
            WeightRecord::Dense {
                m: m as u32,
                n: n as u32,
                data,
            },
        ));
    }

    fn vector(&mut self, name: &str, d: usize, center: f64, spread: f64) {
        let data: Vec<f32> = (0..d)
            .map(|_| (center + self.rng.gen_range(-spread..spread)) as f32)
            .collect();
        self.records.push((
            name.to_string(),
            WeightRecord::Dense {
                m: 1,
                n: d as u32,
                data,
            },
        ));
    }

    fn attention(&mut self, prefix: &str, d: usize, dk: usize, heads: usize) {
        for h in 0..heads {
            self.matrix(&format!("{prefix}.h{h}.wq"), dk, d);
            self.matrix(&format!("{prefix}.h{h}.wk"), dk, d);
            self.matrix(&format!("{prefix}.h{h}.wv"), dk, d);
        }
        self.matrix(&format!("{prefix}.wo"), d, d);
        self.vector(&format!("{prefix}.wo.bias"), d, 0.0, 0.05);
    }

    fn norm(&mut self, prefix: &str, d: usize) {
        self.vector(&format!("{prefix}.gain"), d, 1.0, 0.05);
        self.vector(&format!("{prefix}.bias"), d, 0.0, 0.02);
    }

    fn ffn(&mut self, prefix: &str, d: usize, d_ffn: usize) {
        self.matrix(&format!("{prefix}.w1"), d_ffn, d);
        self.vector(&format!("{prefix}.w1.bias"), d_ffn, 0.0, 0.05);
        self.matrix(&format!("{prefix}.w2"), d, d_ffn);
        self.vector(&format!("{prefix}.w2.bias"), d, 0.0, 0.05);
    }
}

/// Generates the full record list for a config, in a fixed order.
pub fn generate_records(cfg: &TransformerConfig, seed: u64) -> Vec<(String, WeightRecord)> {
    let mut g = RecordGen {
        rng: ChaCha12Rng::seed_from_u64(seed),
        records: Vec::new(),
    };
    let (d, dk, dff) = (cfg.d_model, cfg.head_dim(), cfg.d_ffn);
    g.matrix("embedding", cfg.vocab_size, d);
    for l in 0..cfg.num_layers {
        g.attention(&format!("enc.{l}.attn"), d, dk, cfg.num_heads);
        g.norm(&format!("enc.{l}.norm1"), d);
        g.ffn(&format!("enc.{l}.ffn"), d, dff);
        g.norm(&format!("enc.{l}.norm2"), d);
    }
    if cfg.structure == Structure::EncoderDecoder {
        for l in 0..cfg.num_layers {
            g.attention(&format!("dec.{l}.self"), d, dk, cfg.num_heads);
            g.norm(&format!("dec.{l}.norm1"), d);
            g.attention(&format!("dec.{l}.cross"), d, dk, cfg.num_heads);
            g.norm(&format!("dec.{l}.norm2"), d);
            g.ffn(&format!("dec.{l}.ffn"), d, dff);
            g.norm(&format!("dec.{l}.norm3"), d);
        }
    }
    g.records
}

pub fn generate_model(
    preset: Preset,
    seed: u64,
) -> (TransformerConfig, Vec<(String, WeightRecord)>) {
    let cfg = preset_config(preset, seed);
    let records = generate_records(&cfg, seed);
    (cfg, records)
}

/// A generous synthetic device: ample budget for toy models, explicit PE
/// profiles, no pool cap (the scheduler defaults to full parallelism).
pub fn synthetic_device() -> DeviceConfig {
    let mut pe_profiles = std::collections::BTreeMap::new();
    pe_profiles.insert(
        PeClass::PeA,
        PeProfile {
            base_throughput: 1.0,
            resources: ResourceVector::new(800, 600, 4, 1),
        },
    );
    pe_profiles.insert(
        PeClass::PeB,
        PeProfile {
            base_throughput: 1.0,
            resources: ResourceVector::new(800, 600, 4, 1),
        },
    );
    pe_profiles.insert(
        PeClass::PeFft,
        PeProfile {
            base_throughput: 2.0,
            resources: ResourceVector::new(1200, 1000, 8, 2),
        },
    );
    pe_profiles.insert(
        PeClass::Adder,
        PeProfile {
            base_throughput: 8.0,
            resources: ResourceVector::new(200, 150, 0, 0),
        },
    );
    pe_profiles.insert(
        PeClass::Softmax,
        PeProfile {
            base_throughput: 1.0,
            resources: ResourceVector::new(400, 300, 2, 1),
        },
    );
    DeviceConfig {
        device: DeviceSpec {
            ff: 2_000_000,
            lut: 1_200_000,
            dsp: 6_840,
            bram: 4_320,
            clock_mhz: 200.0,
        },
        misc: ResourceVector::new(40_000, 25_000, 16, 64),
        replicas: 1,
        pe_profiles,
        pool: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::{encode_container, ModelBundle};
    use crate::nn::model::ForwardOptions;

    #[test]
    fn generation_is_deterministic() {
        let (c1, r1) = generate_model(Preset::Micro, 42);
        let (c2, r2) = generate_model(Preset::Micro, 42);
        assert_eq!(c1, c2);
        assert_eq!(encode_container(&r1), encode_container(&r2));
        let (_, r3) = generate_model(Preset::Micro, 43);
        assert_ne!(encode_container(&r1), encode_container(&r3));
    }

    #[test]
    fn shallow_preset_matches_reference_dimensions() {
        let cfg = preset_config(Preset::Shallow, 1);
        assert_eq!(cfg.num_layers, 2);
        assert_eq!(cfg.d_model, 200);
        assert_eq!(cfg.num_heads, 4);
        assert_eq!(cfg.structure, Structure::EncoderDecoder);
    }

    #[test]
    fn micro_model_builds_and_runs() {
        let (cfg, records) = generate_model(Preset::Micro, 7);
        let bundle = ModelBundle::new(cfg, records).unwrap();
        let model = bundle.build_model().unwrap();
        let out = model
            .forward(&[1, 2, 3, 4], &ForwardOptions::default())
            .unwrap();
        assert_eq!(out.shape(), &[4, 16]);
        assert!(out.max_abs().is_finite());
    }

    #[test]
    fn shallow_model_builds_and_runs() {
        let (cfg, records) = generate_model(Preset::Shallow, 7);
        let bundle = ModelBundle::new(cfg, records).unwrap();
        let model = bundle.build_model().unwrap();
        let out = model
            .forward(&[10, 20, 30], &ForwardOptions::default())
            .unwrap();
        assert_eq!(out.shape(), &[3, 200]);
        assert!(out.max_abs().is_finite());
    }

    #[test]
    fn synthetic_device_parses_as_json() {
        let dev = synthetic_device();
        let text = serde_json::to_string_pretty(&dev).unwrap();
        let back = DeviceConfig::from_json(&text).unwrap();
        assert_eq!(back, dev);
    }
}
