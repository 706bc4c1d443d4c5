use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::Context;
use clap::ValueEnum;

use ftrans_core::bcm::{BlockCirculantMatrix, CompressionMode};
use ftrans_core::container::{self, is_compressible, WeightRecord};
use ftrans_core::nn::TransformerConfig;
use ftrans_core::quant::QuantizedBcm;

use super::UsageError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Average each wrapped circulant diagonal (least-squares fit, default)
    DiagonalMean,
    /// Literal row average
    RowMean,
    /// Read the index vector off the block's first row (prior-work baseline)
    FirstRow,
}

impl From<ModeArg> for CompressionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::DiagonalMean => CompressionMode::DiagonalMean,
            ModeArg::RowMean => CompressionMode::RowMean,
            ModeArg::FirstRow => CompressionMode::FirstRow,
        }
    }
}

#[derive(clap::Args)]
pub struct Args {
    /// Input weight container
    #[arg(long)]
    pub input: PathBuf,
    /// Model config JSON (validated against the container)
    #[arg(long)]
    pub config: PathBuf,
    /// Output weight container
    #[arg(long)]
    pub output: PathBuf,
    /// Circulant block size b
    #[arg(long, default_value_t = 8)]
    pub block_size: usize,
    /// Index-vector construction mode
    #[arg(long, value_enum, default_value_t = ModeArg::DiagonalMean)]
    pub mode: ModeArg,
    /// Comma-separated name fragments selecting weight records, or "all".
    /// The embedding table, biases, and norm parameters are never compressed.
    #[arg(long, default_value = "all")]
    pub layers: String,
    /// Store compressed index vectors in 16-bit fixed point
    #[arg(long)]
    pub quantize: bool,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    if args.block_size == 0 {
        return Err(UsageError("--block-size must be >= 1".to_string()).into());
    }
    let config_text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config = TransformerConfig::from_json(&config_text)?;
    let records = container::read_container(&args.input)?;

    // Validate that the container actually wires into the config.
    container::ModelBundle::new(config, records.clone())?.build_model()?;

    let compressible: Vec<&str> = records
        .iter()
        .map(|(name, _)| name.as_str())
        .filter(|name| is_compressible(name))
        .collect();

    let mut selected: BTreeSet<String> = BTreeSet::new();
    for token in args.layers.split(',').map(str::trim) {
        if token.is_empty() {
            continue;
        }
        let matches: Vec<&str> = if token == "all" {
            compressible.clone()
        } else {
            compressible
                .iter()
                .copied()
                .filter(|name| name.contains(token))
                .collect()
        };
        if matches.is_empty() {
            anyhow::bail!(ftrans_core::Error::Domain(format!(
                "layer selector {token:?} matches no compressible record; valid names: {}",
                compressible.join(", ")
            )));
        }
        selected.extend(matches.into_iter().map(String::from));
    }
    if selected.is_empty() {
        return Err(UsageError("--layers selected nothing".to_string()).into());
    }

    let mode: CompressionMode = args.mode.into();
    let mut dense_params = 0usize;
    let mut stored_params = 0usize;
    let mut output = Vec::with_capacity(records.len());
    for (name, record) in records {
        if !selected.contains(&name) {
            output.push((name, record));
            continue;
        }
        match &record {
            WeightRecord::Dense { .. } => {}
            other => {
                println!("{name}: already {}, left unchanged", other.kind_name());
                output.push((name, record));
                continue;
            }
        }
        let dense = record.to_tensor()?;
        let bcm = BlockCirculantMatrix::compress(&dense, args.block_size, mode)?;
        let ratio = bcm.compression_ratio();
        let (m, n) = (bcm.rows(), bcm.cols());
        dense_params += m * n;
        stored_params += bcm.stored_scalars();
        println!(
            "{name}: {m}x{n} -> {} index vectors of {} (ratio {ratio:.4}{})",
            bcm.grid_rows() * bcm.grid_cols(),
            args.block_size,
            if args.quantize { ", quantized" } else { "" },
        );
        let new_record = if args.quantize {
            WeightRecord::QuantBcm(QuantizedBcm::from_bcm(&bcm)?)
        } else {
            WeightRecord::Bcm(bcm)
        };
        output.push((name, new_record));
    }

    container::write_container(&args.output, &output)?;

    if stored_params > 0 {
        let total_ratio = dense_params as f64 / stored_params as f64;
        println!(
            "compressed {} records with b={} mode={}",
            selected.len(),
            args.block_size,
            mode
        );
        println!("total compression ratio over compressed layers: {total_ratio:.4}");
    } else {
        println!("no dense records were compressed (selection already compressed)");
    }
    let whole_dense: usize = output
        .iter()
        .map(|(_, r)| {
            let (m, n) = r.logical_shape();
            m * n
        })
        .sum();
    let whole_stored: usize = output.iter().map(|(_, r)| r.stored_scalars()).sum();
    println!(
        "whole container ratio (incl. embedding and uncompressed records): {:.4}",
        whole_dense as f64 / whole_stored as f64
    );
    println!("wrote {}", args.output.display());
    Ok(())
}
