//! Binary weight container and the model bundle assembled from it.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "FTRW"
//! version u16      currently 1
//! count   u32      number of records
//! table   count × { name_len: u16, name: utf-8, kind: u8, offset: u64, length: u64 }
//! records payload bytes at the table offsets (from file start), in table order
//! ```
//!
//! Record kinds: 0 dense (`m: u32, n: u32, f32 row-major`), 1 bcm (header +
//! `f·g·b` f32 index vectors), 2 quant-dense (`m, n, frac_bits: u8, i16`),
//! 3 quant-bcm (bcm header + frac_bits + i16). The writer emits records
//! contiguously in table order, so read-then-rewrite reproduces a written
//! file byte for byte.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::bcm::BlockCirculantMatrix;
use crate::error::{Error, Result};
use crate::nn::model::{
    DecoderLayer, EncoderLayer, FfnWeights, Model, NormParams, Structure, TransformerConfig,
    LAYER_NORM_EPS,
};
use crate::nn::{AttentionWeights, HeadWeights, LinearWeight};
use crate::quant::{FixedPointFormat, QuantizedBcm, QuantizedTensor};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FTRW";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone)]
pub enum WeightRecord {
    Dense {
        m: u32,
        n: u32,
        data: Vec<f32>,
    },
    Bcm(BlockCirculantMatrix),
    QuantDense {
        m: u32,
        n: u32,
        format: FixedPointFormat,
        raw: Vec<i16>,
    },
    QuantBcm(QuantizedBcm),
}

impl WeightRecord {
    pub fn kind_byte(&self) -> u8 {
        match self {
            WeightRecord::Dense { .. } => 0,
            WeightRecord::Bcm(_) => 1,
            WeightRecord::QuantDense { .. } => 2,
            WeightRecord::QuantBcm(_) => 3,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            WeightRecord::Dense { .. } => "dense",
            WeightRecord::Bcm(_) => "bcm",
            WeightRecord::QuantDense { .. } => "quant-dense",
            WeightRecord::QuantBcm(_) => "quant-bcm",
        }
    }

    pub fn logical_shape(&self) -> (usize, usize) {
        match self {
            WeightRecord::Dense { m, n, .. } => (*m as usize, *n as usize),
            WeightRecord::Bcm(b) => (b.rows(), b.cols()),
            WeightRecord::QuantDense { m, n, .. } => (*m as usize, *n as usize),
            WeightRecord::QuantBcm(q) => (q.m, q.n),
        }
    }

    /// Stored scalar count (dense elements or index-vector entries).
    pub fn stored_scalars(&self) -> usize {
        match self {
            WeightRecord::Dense { data, .. } => data.len(),
            WeightRecord::Bcm(b) => b.stored_scalars(),
            WeightRecord::QuantDense { raw, .. } => raw.len(),
            WeightRecord::QuantBcm(q) => q.raw.len(),
        }
    }

    pub fn dense_from_tensor(t: &Tensor) -> Result<WeightRecord> {
        let (m, n) = t.dims2()?;
        Ok(WeightRecord::Dense {
            m: m as u32,
            n: n as u32,
            data: t.data().iter().map(|&v| v as f32).collect(),
        })
    }

    /// Dense view of the record's logical matrix.
    pub fn to_tensor(&self) -> Result<Tensor> {
        match self {
            WeightRecord::Dense { m, n, data } => Tensor::new(
                vec![*m as usize, *n as usize],
                data.iter().map(|&v| v as f64).collect(),
            ),
            WeightRecord::Bcm(b) => Ok(b.expand()),
            WeightRecord::QuantDense { m, n, format, raw } => {
                let res = format.resolution();
                Tensor::new(
                    vec![*m as usize, *n as usize],
                    raw.iter().map(|&r| r as f64 * res).collect(),
                )
            }
            WeightRecord::QuantBcm(q) => Ok(q.to_bcm()?.expand()),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            WeightRecord::Dense { m, n, data } => {
                let mut out = Vec::with_capacity(8 + 4 * data.len());
                out.extend_from_slice(&m.to_le_bytes());
                out.extend_from_slice(&n.to_le_bytes());
                for v in data {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out
            }
            WeightRecord::Bcm(b) => b.encode_record(),
            WeightRecord::QuantDense { m, n, format, raw } => {
                let mut out = Vec::with_capacity(9 + 2 * raw.len());
                out.extend_from_slice(&m.to_le_bytes());
                out.extend_from_slice(&n.to_le_bytes());
                out.push(format.frac_bits);
                for v in raw {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out
            }
            WeightRecord::QuantBcm(q) => q.encode_record(),
        }
    }

    pub fn decode(kind: u8, bytes: &[u8]) -> Result<WeightRecord> {
        match kind {
            0 => {
                if bytes.len() < 8 {
                    return Err(Error::format("dense record truncated".to_string()));
                }
                let m = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
                let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
                let payload = &bytes[8..];
                if payload.len() != (m as usize) * (n as usize) * 4 {
                    return Err(Error::format(format!(
                        "dense record {m}x{n} payload has {} bytes",
                        payload.len()
                    )));
                }
                let data = payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Ok(WeightRecord::Dense { m, n, data })
            }
            1 => Ok(WeightRecord::Bcm(BlockCirculantMatrix::decode_record(
                bytes,
            )?)),
            2 => {
                if bytes.len() < 9 {
                    return Err(Error::format("quant-dense record truncated".to_string()));
                }
                let m = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
                let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
                let format = FixedPointFormat::new(bytes[8])
                    .map_err(|_| Error::format("quant-dense frac_bits out of range".to_string()))?;
                let payload = &bytes[9..];
                if payload.len() != (m as usize) * (n as usize) * 2 {
                    return Err(Error::format(format!(
                        "quant-dense record {m}x{n} payload has {} bytes",
                        payload.len()
                    )));
                }
                let raw = payload
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Ok(WeightRecord::QuantDense { m, n, format, raw })
            }
            3 => Ok(WeightRecord::QuantBcm(QuantizedBcm::decode_record(bytes)?)),
            other => Err(Error::format(format!("unknown record kind {other}"))),
        }
    }
}

/// Serializes records in order into the canonical container layout.
pub fn encode_container(records: &[(String, WeightRecord)]) -> Vec<u8> {
    let mut table_len = 0usize;
    let payloads: Vec<Vec<u8>> = records.iter().map(|(_, r)| r.encode()).collect();
    for (name, _) in records {
        table_len += 2 + name.len() + 1 + 8 + 8;
    }
    let header_len = 4 + 2 + 4;
    let mut offset = (header_len + table_len) as u64;

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for ((name, record), payload) in records.iter().zip(&payloads) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(record.kind_byte());
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        offset += payload.len() as u64;
    }
    for payload in &payloads {
        out.extend_from_slice(payload);
    }
    out
}

pub fn decode_container(bytes: &[u8]) -> Result<Vec<(String, WeightRecord)>> {
    if bytes.len() < 10 || &bytes[0..4] != MAGIC {
        return Err(Error::format(
            "not a weight container (bad magic)".to_string(),
        ));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported container version {version}"
        )));
    }
    let count = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let mut cursor = 10usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        if cursor + 2 > bytes.len() {
            return Err(Error::format("record table truncated".to_string()));
        }
        let name_len = u16::from_le_bytes(bytes[cursor..cursor + 2].try_into().unwrap()) as usize;
        cursor += 2;
        if cursor + name_len + 17 > bytes.len() {
            return Err(Error::format("record table truncated".to_string()));
        }
        let name = std::str::from_utf8(&bytes[cursor..cursor + name_len])
            .map_err(|_| Error::format("record name is not utf-8".to_string()))?
            .to_string();
        cursor += name_len;
        let kind = bytes[cursor];
        cursor += 1;
        let offset = u64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap()) as usize;
        cursor += 8;
        let length = u64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap()) as usize;
        cursor += 8;
        table.push((name, kind, offset, length));
    }
    // Offsets must stay inside the file and never overlap.
    let mut spans: Vec<(usize, usize)> = table.iter().map(|&(_, _, o, l)| (o, l)).collect();
    spans.sort_unstable();
    for window in spans.windows(2) {
        let (o1, l1) = window[0];
        let (o2, _) = window[1];
        if o1 + l1 > o2 {
            return Err(Error::format("record payloads overlap".to_string()));
        }
    }
    let mut records = Vec::with_capacity(count);
    for (name, kind, offset, length) in table {
        if offset + length > bytes.len() {
            return Err(Error::format(format!(
                "record {name} extends past end of file"
            )));
        }
        let record = WeightRecord::decode(kind, &bytes[offset..offset + length])?;
        records.push((name, record));
    }
    Ok(records)
}

/// Writes the container atomically: a temp file in the same directory is
/// renamed over the destination once fully written.
pub fn write_container(path: &Path, records: &[(String, WeightRecord)]) -> Result<()> {
    let bytes = encode_container(records);
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_container(path: &Path) -> Result<Vec<(String, WeightRecord)>> {
    let bytes = std::fs::read(path)?;
    decode_container(&bytes)
}

/// An open container handle that reads individual records (or individual
/// dense rows) on demand instead of materializing the whole file.
pub struct WeightFile {
    file: File,
    table: Vec<(String, u8, u64, u64)>,
}

impl WeightFile {
    pub fn open(path: &Path) -> Result<Self> {
        let mut file = File::open(path)?;
        let mut header = [0u8; 10];
        file.read_exact(&mut header)?;
        if &header[0..4] != MAGIC {
            return Err(Error::format(
                "not a weight container (bad magic)".to_string(),
            ));
        }
        let version = u16::from_le_bytes(header[4..6].try_into().unwrap());
        if version != VERSION {
            return Err(Error::format(format!(
                "unsupported container version {version}"
            )));
        }
        let count = u32::from_le_bytes(header[6..10].try_into().unwrap()) as usize;
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            let mut len_buf = [0u8; 2];
            file.read_exact(&mut len_buf)?;
            let name_len = u16::from_le_bytes(len_buf) as usize;
            let mut name_buf = vec![0u8; name_len];
            file.read_exact(&mut name_buf)?;
            let name = String::from_utf8(name_buf)
                .map_err(|_| Error::format("record name is not utf-8".to_string()))?;
            let mut rest = [0u8; 17];
            file.read_exact(&mut rest)?;
            let kind = rest[0];
            let offset = u64::from_le_bytes(rest[1..9].try_into().unwrap());
            let length = u64::from_le_bytes(rest[9..17].try_into().unwrap());
            table.push((name, kind, offset, length));
        }
        Ok(WeightFile { file, table })
    }

    pub fn record_names(&self) -> Vec<&str> {
        self.table.iter().map(|(n, _, _, _)| n.as_str()).collect()
    }

    fn entry(&self, name: &str) -> Result<&(String, u8, u64, u64)> {
        self.table
            .iter()
            .find(|(n, _, _, _)| n == name)
            .ok_or_else(|| Error::format(format!("record {name} not found")))
    }

    pub fn read_record(&mut self, name: &str) -> Result<WeightRecord> {
        let &(_, kind, offset, length) = self.entry(name)?;
        self.file.seek(SeekFrom::Start(offset))?;
        let mut buf = vec![0u8; length as usize];
        self.file.read_exact(&mut buf)?;
        WeightRecord::decode(kind, &buf)
    }

    /// Fetches selected rows of a dense record without reading the rest of
    /// it — the lookup path for the off-chip embedding table.
    pub fn read_dense_rows(&mut self, name: &str, rows: &[usize]) -> Result<Tensor> {
        let &(_, kind, offset, _) = self.entry(name)?;
        if kind != 0 {
            return Err(Error::format(format!(
                "record {name} is not dense; row streaming needs a dense record"
            )));
        }
        self.file.seek(SeekFrom::Start(offset))?;
        let mut dims = [0u8; 8];
        self.file.read_exact(&mut dims)?;
        let m = u32::from_le_bytes(dims[0..4].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(dims[4..8].try_into().unwrap()) as usize;
        let mut data = Vec::with_capacity(rows.len() * n);
        let mut row_buf = vec![0u8; n * 4];
        for &r in rows {
            if r >= m {
                return Err(Error::domain(format!(
                    "row {r} out of range for {name} ({m} rows)"
                )));
            }
            self.file
                .seek(SeekFrom::Start(offset + 8 + (r * n * 4) as u64))?;
            self.file.read_exact(&mut row_buf)?;
            data.extend(
                row_buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64),
            );
        }
        Tensor::new(vec![rows.len(), n], data)
    }
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

/// Weight-record names that may be block-circulant compressed: the projection
/// and feed-forward matrices. Biases, norm parameters, and the embedding
/// table never qualify.
pub fn is_compressible(name: &str) -> bool {
    if name == "embedding" || name.ends_with(".bias") || name.contains(".norm") {
        return false;
    }
    name == "output_proj"
        || [".wq", ".wk", ".wv", ".wo", ".w1", ".w2"]
            .iter()
            .any(|suffix| name.ends_with(suffix))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub kind: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub stored_scalars: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
}

/// A parsed container plus its configuration: the named weight map from which
/// a [`Model`] is wired.
pub struct ModelBundle {
    pub config: TransformerConfig,
    pub records: BTreeMap<String, WeightRecord>,
}

impl ModelBundle {
    pub fn new(config: TransformerConfig, records: Vec<(String, WeightRecord)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (name, record) in records {
            if map.insert(name.clone(), record).is_some() {
                return Err(Error::format(format!("duplicate record {name}")));
            }
        }
        Ok(ModelBundle {
            config,
            records: map,
        })
    }

    /// Per-record compression manifest.
    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.records
            .iter()
            .map(|(name, record)| {
                let (rows, cols) = record.logical_shape();
                let (block_size, mode) = match record {
                    WeightRecord::Bcm(b) => (Some(b.block_size()), Some(b.mode().to_string())),
                    WeightRecord::QuantBcm(q) => (Some(q.b), Some(q.mode.to_string())),
                    _ => (None, None),
                };
                ManifestEntry {
                    name: name.clone(),
                    kind: record.kind_name(),
                    rows,
                    cols,
                    stored_scalars: record.stored_scalars(),
                    block_size,
                    mode,
                }
            })
            .collect()
    }

    fn weight(&self, name: &str, expect: (usize, usize)) -> Result<LinearWeight> {
        let record = self
            .records
            .get(name)
            .ok_or_else(|| Error::format(format!("missing weight record {name}")))?;
        let shape = record.logical_shape();
        if shape != expect {
            return Err(Error::shape(format!(
                "{name}: record is {}x{}, config wants {}x{}",
                shape.0, shape.1, expect.0, expect.1
            )));
        }
        let mut lw = match record {
            WeightRecord::Dense { .. } => LinearWeight::dense(record.to_tensor()?)?,
            WeightRecord::Bcm(b) => LinearWeight::bcm(BlockCirculantMatrix::from_index_vectors(
                b.rows(),
                b.cols(),
                b.block_size(),
                b.mode(),
                b.index_vectors().to_vec(),
            )?),
            WeightRecord::QuantDense { m, n, format, raw } => {
                LinearWeight::quant_dense(QuantizedTensor {
                    shape: vec![*m as usize, *n as usize],
                    raw: raw.clone(),
                    format: *format,
                })?
            }
            WeightRecord::QuantBcm(q) => LinearWeight::quant_bcm(q.clone())?,
        };
        if let Some(WeightRecord::Dense { n, data, .. }) = self.records.get(&format!("{name}.bias"))
        {
            let _ = n;
            lw = lw.with_bias(data.iter().map(|&v| v as f64).collect())?;
        }
        Ok(lw)
    }

    fn norm(&self, prefix: &str, d: usize) -> Result<NormParams> {
        let fetch = |suffix: &str| -> Result<Vec<f64>> {
            let name = format!("{prefix}.{suffix}");
            let record = self
                .records
                .get(&name)
                .ok_or_else(|| Error::format(format!("missing norm record {name}")))?;
            let t = record.to_tensor()?;
            if t.len() != d {
                return Err(Error::shape(format!(
                    "{name}: expected {d} values, got {}",
                    t.len()
                )));
            }
            Ok(t.data().to_vec())
        };
        Ok(NormParams {
            gain: fetch("gain")?,
            bias: fetch("bias")?,
            eps: LAYER_NORM_EPS,
        })
    }

    fn attention(&self, prefix: &str) -> Result<AttentionWeights> {
        let cfg = &self.config;
        let d = cfg.d_model;
        let dk = cfg.head_dim();
        let mut heads = Vec::with_capacity(cfg.num_heads);
        for h in 0..cfg.num_heads {
            heads.push(HeadWeights {
                w_q: self.weight(&format!("{prefix}.h{h}.wq"), (dk, d))?,
                w_k: self.weight(&format!("{prefix}.h{h}.wk"), (dk, d))?,
                w_v: self.weight(&format!("{prefix}.h{h}.wv"), (dk, d))?,
            });
        }
        Ok(AttentionWeights {
            heads,
            w_o: self.weight(&format!("{prefix}.wo"), (d, d))?,
        })
    }

    fn ffn(&self, prefix: &str) -> Result<FfnWeights> {
        let cfg = &self.config;
        Ok(FfnWeights {
            w1: self.weight(&format!("{prefix}.w1"), (cfg.d_ffn, cfg.d_model))?,
            w2: self.weight(&format!("{prefix}.w2"), (cfg.d_model, cfg.d_ffn))?,
        })
    }

    /// Wires the named records into a [`Model`], loading the embedding table
    /// from its record.
    pub fn build_model(&self) -> Result<Model> {
        let embedding = match self.records.get("embedding") {
            Some(r @ WeightRecord::Dense { .. }) => r.to_tensor()?,
            Some(_) => {
                return Err(Error::format(
                    "embedding record must be dense (it is never compressed)".to_string(),
                ))
            }
            None => return Err(Error::format("missing embedding record".to_string())),
        };
        self.build_model_with_embedding(embedding)
    }

    /// Wires a model around an externally supplied embedding table (used when
    /// the table stays on file and rows are streamed per lookup).
    pub fn build_model_with_embedding(&self, embedding: Tensor) -> Result<Model> {
        let cfg = &self.config;
        let d = cfg.d_model;
        let mut encoder = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            encoder.push(EncoderLayer {
                attn: self.attention(&format!("enc.{l}.attn"))?,
                norm1: self.norm(&format!("enc.{l}.norm1"), d)?,
                ffn: self.ffn(&format!("enc.{l}.ffn"))?,
                norm2: self.norm(&format!("enc.{l}.norm2"), d)?,
            });
        }
        let mut decoder = Vec::new();
        if cfg.structure == Structure::EncoderDecoder {
            for l in 0..cfg.num_layers {
                decoder.push(DecoderLayer {
                    self_attn: self.attention(&format!("dec.{l}.self"))?,
                    norm1: self.norm(&format!("dec.{l}.norm1"), d)?,
                    cross_attn: self.attention(&format!("dec.{l}.cross"))?,
                    norm2: self.norm(&format!("dec.{l}.norm2"), d)?,
                    ffn: self.ffn(&format!("dec.{l}.ffn"))?,
                    norm3: self.norm(&format!("dec.{l}.norm3"), d)?,
                });
            }
        }
        let output_proj = if self.records.contains_key("output_proj") {
            Some(self.weight("output_proj", (cfg.vocab_size, d))?)
        } else {
            None
        };
        let model = Model {
            config: cfg.clone(),
            embedding,
            encoder,
            decoder,
            output_proj,
        };
        model.validate()?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcm::CompressionMode;
    use crate::quant;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn sample_records(rng: &mut StdRng) -> Vec<(String, WeightRecord)> {
        let dense = Tensor::new(
            vec![4, 6],
            (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let bcm = BlockCirculantMatrix::compress(&dense, 2, CompressionMode::DiagonalMean).unwrap();
        let qd = quant::quantize_auto(&dense).unwrap();
        let qb = QuantizedBcm::from_bcm(&bcm).unwrap();
        vec![
            (
                "plain".to_string(),
                WeightRecord::dense_from_tensor(&dense).unwrap(),
            ),
            ("circ".to_string(), WeightRecord::Bcm(bcm)),
            (
                "qplain".to_string(),
                WeightRecord::QuantDense {
                    m: 4,
                    n: 6,
                    format: qd.format,
                    raw: qd.raw,
                },
            ),
            ("qcirc".to_string(), WeightRecord::QuantBcm(qb)),
        ]
    }

    #[test]
    fn container_roundtrip_is_byte_identical() {
        let mut rng = StdRng::seed_from_u64(229);
        let records = sample_records(&mut rng);
        let bytes = encode_container(&records);
        let decoded = decode_container(&bytes).unwrap();
        assert_eq!(encode_container(&decoded), bytes);
        assert_eq!(decoded.len(), 4);
        for ((n1, _), (n2, _)) in records.iter().zip(&decoded) {
            assert_eq!(n1, n2);
        }
    }

    #[test]
    fn container_rejects_corruption() {
        let mut rng = StdRng::seed_from_u64(233);
        let records = sample_records(&mut rng);
        let bytes = encode_container(&records);

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode_container(&bad_magic).is_err());

        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(decode_container(&bad_version).is_err());

        let truncated = &bytes[..bytes.len() - 5];
        assert!(decode_container(truncated).is_err());
    }

    #[test]
    fn container_rejects_overlapping_offsets() {
        let t = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let records = vec![
            (
                "a".to_string(),
                WeightRecord::dense_from_tensor(&t).unwrap(),
            ),
            (
                "b".to_string(),
                WeightRecord::dense_from_tensor(&t).unwrap(),
            ),
        ];
        let mut bytes = encode_container(&records);
        // Point record b's offset at record a's payload. Table entry layout:
        // name_len(2) + name(1) + kind(1) + offset(8) + length(8) = 20 bytes,
        // table starts at byte 10, so b's offset field begins at 10+20+4.
        let a_offset_pos = 10 + 2 + 1 + 1;
        let a_offset =
            u64::from_le_bytes(bytes[a_offset_pos..a_offset_pos + 8].try_into().unwrap());
        let b_offset_pos = 10 + 20 + 2 + 1 + 1;
        bytes[b_offset_pos..b_offset_pos + 8].copy_from_slice(&a_offset.to_le_bytes());
        let err = decode_container(&bytes).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
    }

    #[test]
    fn file_roundtrip_and_row_streaming() {
        let mut rng = StdRng::seed_from_u64(239);
        let records = sample_records(&mut rng);
        let dir = std::env::temp_dir().join(format!("ftrans-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("weights.ftrw");
        write_container(&path, &records).unwrap();
        let back = read_container(&path).unwrap();
        assert_eq!(encode_container(&back), encode_container(&records));

        let mut wf = WeightFile::open(&path).unwrap();
        assert_eq!(wf.record_names().len(), 4);
        let full = wf.read_record("plain").unwrap().to_tensor().unwrap();
        let rows = wf.read_dense_rows("plain", &[2, 0, 2]).unwrap();
        assert_eq!(rows.shape(), &[3, 6]);
        assert_eq!(rows.row(0), full.row(2));
        assert_eq!(rows.row(1), full.row(0));
        assert_eq!(rows.row(2), full.row(2));
        assert!(wf.read_dense_rows("plain", &[99]).is_err());
        assert!(wf.read_dense_rows("circ", &[0]).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn compressible_name_filter() {
        assert!(is_compressible("enc.0.attn.h0.wq"));
        assert!(is_compressible("enc.1.ffn.w2"));
        assert!(is_compressible("dec.0.cross.wo"));
        assert!(is_compressible("output_proj"));
        assert!(!is_compressible("embedding"));
        assert!(!is_compressible("enc.0.ffn.w1.bias"));
        assert!(!is_compressible("enc.0.norm1.gain"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn arbitrary_dense_records_roundtrip(seed in any::<u64>(), m in 1usize..8, n in 1usize..8) {
            let mut rng = StdRng::seed_from_u64(seed);
            let t = Tensor::new(
                vec![m, n],
                (0..m * n).map(|_| rng.gen_range(-10.0..10.0)).collect(),
            ).unwrap();
            let records = vec![("w".to_string(), WeightRecord::dense_from_tensor(&t).unwrap())];
            let bytes = encode_container(&records);
            let back = decode_container(&bytes).unwrap();
            prop_assert_eq!(encode_container(&back), bytes);
        }
    }
}
