use std::path::PathBuf;

use ftrans_core::container;
use ftrans_core::gen::{self, Preset};

use super::write_text_atomic;

#[derive(clap::Args)]
pub struct Args {
    /// Model preset: "shallow" (encoder-decoder, d_model 200, 4 heads) or
    /// "micro" (encoder-only, d_model 16, 2 heads; sized for CI)
    #[arg(long, default_value = "micro")]
    pub preset: String,
    /// Generator seed; identical seeds yield byte-identical files
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory for config.json, weights.ftrw, device.json
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let preset: Preset = args.preset.parse()?;
    let (config, records) = gen::generate_model(preset, args.seed);
    std::fs::create_dir_all(&args.out_dir)?;

    let config_path = args.out_dir.join("config.json");
    write_text_atomic(&config_path, &config.to_json())?;

    let weights_path = args.out_dir.join("weights.ftrw");
    container::write_container(&weights_path, &records)?;

    let device_path = args.out_dir.join("device.json");
    let device = gen::synthetic_device();
    write_text_atomic(&device_path, &serde_json::to_string_pretty(&device)?)?;

    println!("preset: {} (seed {})", args.preset, args.seed);
    println!("wrote {}", config_path.display());
    println!(
        "wrote {} ({} records)",
        weights_path.display(),
        records.len()
    );
    println!("wrote {}", device_path.display());
    Ok(())
}
