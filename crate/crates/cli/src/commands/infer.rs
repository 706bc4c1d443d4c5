use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::ValueEnum;

use ftrans_core::container::{self, ModelBundle, WeightFile, WeightRecord};
use ftrans_core::nn::model::ForwardOptions;
use ftrans_core::nn::{Precision, SoftmaxImpl, TransformerConfig, PWL_DEFAULT_SEGMENTS};
use ftrans_core::quant::{self, QuantizedBcm};
use ftrans_core::tensor::Tensor;

use super::UsageError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SoftmaxArg {
    Exact,
    /// Piecewise-linear approximation (32 segments on [-8, 0])
    Pwl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
    Q16,
}

#[derive(clap::Args)]
pub struct Args {
    /// Model config JSON
    #[arg(long)]
    pub config: PathBuf,
    /// Weight container
    #[arg(long)]
    pub weights: PathBuf,
    /// Whitespace-separated token-id file
    #[arg(long)]
    pub input: PathBuf,
    /// Output container holding one dense record named "output"
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = SoftmaxArg::Exact)]
    pub softmax: SoftmaxArg,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    pub precision: PrecisionArg,
    /// Emit vocabulary logits instead of final hidden states
    #[arg(long)]
    pub logits: bool,
}

fn parse_tokens(text: &str) -> anyhow::Result<Vec<usize>> {
    let tokens: Result<Vec<usize>, _> = text.split_whitespace().map(str::parse).collect();
    let tokens = tokens.context("token file must contain whitespace-separated integers")?;
    if tokens.is_empty() {
        return Err(UsageError("input token sequence is empty (need s >= 1)".to_string()).into());
    }
    Ok(tokens)
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let softmax = match args.softmax {
        SoftmaxArg::Exact => SoftmaxImpl::Exact,
        SoftmaxArg::Pwl => SoftmaxImpl::pwl(PWL_DEFAULT_SEGMENTS)?,
    };
    let precision = match args.precision {
        PrecisionArg::F32 => Precision::F32,
        PrecisionArg::F64 => Precision::F64,
        PrecisionArg::Q16 => Precision::Q16,
    };
    let opts = ForwardOptions { softmax, precision };

    let t_load = Instant::now();
    let config_text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config = TransformerConfig::from_json(&config_text)?;
    let token_text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let tokens = parse_tokens(&token_text)?;

    let mut file = WeightFile::open(&args.weights)?;
    // The embedding table stays on file; every other record is materialized.
    let mut records = Vec::new();
    let names: Vec<String> = file.record_names().iter().map(|s| s.to_string()).collect();
    for name in &names {
        if name == "embedding" {
            continue;
        }
        let mut record = file.read_record(name)?;
        if precision == Precision::Q16 {
            record = quantize_record(record)?;
        }
        records.push((name.clone(), record));
    }
    let load_s = t_load.elapsed().as_secs_f64();

    // Embedding lookup is a seek-based row fetch against the weight file,
    // mirroring the table's off-chip placement.
    let t_embed = Instant::now();
    let bundle = ModelBundle::new(config.clone(), records)?;
    let model = if args.logits {
        let embedding = file.read_record("embedding")?.to_tensor()?;
        bundle.build_model_with_embedding(embedding)?
    } else {
        bundle.build_model_with_embedding(Tensor::zeros(vec![config.vocab_size, config.d_model]))?
    };
    if let Some(&bad) = tokens.iter().find(|&&t| t >= config.vocab_size) {
        anyhow::bail!(ftrans_core::Error::Domain(format!(
            "token id {bad} out of vocabulary (size {})",
            config.vocab_size
        )));
    }
    if tokens.len() > config.max_seq_len {
        anyhow::bail!(ftrans_core::Error::Domain(format!(
            "sequence length {} exceeds max_seq_len {}",
            tokens.len(),
            config.max_seq_len
        )));
    }
    let rows = file.read_dense_rows("embedding", &tokens)?;
    let embedded = model.embed_from_rows(rows)?;
    let embed_s = t_embed.elapsed().as_secs_f64();

    let t_fwd = Instant::now();
    let hidden = model.forward_embedded(&embedded, &opts)?;
    let out = if args.logits {
        model.logits(&hidden)?
    } else {
        hidden
    };
    let fwd_s = t_fwd.elapsed().as_secs_f64();

    let t_write = Instant::now();
    let record = WeightRecord::dense_from_tensor(&out)?;
    container::write_container(&args.output, &[("output".to_string(), record)])?;
    let write_s = t_write.elapsed().as_secs_f64();

    println!(
        "inference: {} tokens -> {:?} ({})",
        tokens.len(),
        out.shape(),
        if args.logits {
            "logits"
        } else {
            "hidden states"
        },
    );
    println!("phase timings: load {load_s:.4}s, embed {embed_s:.4}s, forward {fwd_s:.4}s, write {write_s:.4}s");
    println!("wrote {}", args.output.display());
    Ok(())
}

/// 16-bit emulation at load time: every weight record becomes a quantized
/// record with a per-record format.
fn quantize_record(record: WeightRecord) -> anyhow::Result<WeightRecord> {
    Ok(match record {
        WeightRecord::Dense { m, n, data } => {
            let t = Tensor::new(
                vec![m as usize, n as usize],
                data.iter().map(|&v| v as f64).collect(),
            )?;
            let q = quant::quantize_auto(&t)?;
            WeightRecord::QuantDense {
                m,
                n,
                format: q.format,
                raw: q.raw,
            }
        }
        WeightRecord::Bcm(b) => WeightRecord::QuantBcm(QuantizedBcm::from_bcm(&b)?),
        already_quant => already_quant,
    })
}
