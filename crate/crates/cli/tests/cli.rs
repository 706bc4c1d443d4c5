//! End-to-end tests driving the `ftrans` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ftrans_core::container::{self, WeightRecord};
use ftrans_core::tensor::Tensor;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ftrans"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ftrans-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn gen_micro(dir: &Path, seed: u64) {
    run_ok(&[
        "gen-toy",
        "--preset",
        "micro",
        "--seed",
        &seed.to_string(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
}

fn path_str(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

fn read_output_tensor(path: &Path) -> Tensor {
    let records = container::read_container(path).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].0, "output");
    records[0].1.to_tensor().unwrap()
}

#[test]
fn gen_toy_is_deterministic() {
    let a = tmp_dir("det-a");
    let b = tmp_dir("det-b");
    gen_micro(&a, 11);
    gen_micro(&b, 11);
    assert_eq!(
        std::fs::read(a.join("weights.ftrw")).unwrap(),
        std::fs::read(b.join("weights.ftrw")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("config.json")).unwrap(),
        std::fs::read(b.join("config.json")).unwrap()
    );
    let c = tmp_dir("det-c");
    gen_micro(&c, 12);
    assert_ne!(
        std::fs::read(a.join("weights.ftrw")).unwrap(),
        std::fs::read(c.join("weights.ftrw")).unwrap()
    );
}

#[test]
fn compress_with_unit_block_preserves_logical_weights() {
    let dir = tmp_dir("b1");
    gen_micro(&dir, 3);
    let out = run_ok(&[
        "compress",
        "--input",
        &path_str(&dir, "weights.ftrw"),
        "--config",
        &path_str(&dir, "config.json"),
        "--output",
        &path_str(&dir, "b1.ftrw"),
        "--block-size",
        "1",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("total compression ratio over compressed layers: 1.0000"));

    let before = container::read_container(&dir.join("weights.ftrw")).unwrap();
    let after = container::read_container(&dir.join("b1.ftrw")).unwrap();
    for ((name_a, rec_a), (name_b, rec_b)) in before.iter().zip(&after) {
        assert_eq!(name_a, name_b);
        let ta = rec_a.to_tensor().unwrap();
        let tb = rec_b.to_tensor().unwrap();
        assert_eq!(ta, tb, "logical weights changed for {name_a}");
        if let WeightRecord::Bcm(b) = rec_b {
            assert_eq!(b.compression_ratio(), 1.0);
        }
    }
}

#[test]
fn compress_expand_compress_is_idempotent() {
    let dir = tmp_dir("idem");
    gen_micro(&dir, 5);
    run_ok(&[
        "compress",
        "--input",
        &path_str(&dir, "weights.ftrw"),
        "--config",
        &path_str(&dir, "config.json"),
        "--output",
        &path_str(&dir, "bcm.ftrw"),
        "--block-size",
        "4",
    ]);
    // Expand every compressed record back to dense and recompress.
    let compressed = container::read_container(&dir.join("bcm.ftrw")).unwrap();
    let expanded: Vec<(String, WeightRecord)> = compressed
        .iter()
        .map(|(name, rec)| {
            let rec = match rec {
                WeightRecord::Bcm(_) => {
                    WeightRecord::dense_from_tensor(&rec.to_tensor().unwrap()).unwrap()
                }
                other => other.clone(),
            };
            (name.clone(), rec)
        })
        .collect();
    container::write_container(&dir.join("expanded.ftrw"), &expanded).unwrap();
    run_ok(&[
        "compress",
        "--input",
        &path_str(&dir, "expanded.ftrw"),
        "--config",
        &path_str(&dir, "config.json"),
        "--output",
        &path_str(&dir, "bcm2.ftrw"),
        "--block-size",
        "4",
    ]);
    let again = container::read_container(&dir.join("bcm2.ftrw")).unwrap();
    for ((name_a, rec_a), (_, rec_b)) in compressed.iter().zip(&again) {
        if let (WeightRecord::Bcm(a), WeightRecord::Bcm(b)) = (rec_a, rec_b) {
            assert_eq!(
                a.encode_record(),
                b.encode_record(),
                "index vectors changed for {name_a}"
            );
        }
    }

    // Recompressing an already-compressed container leaves records untouched.
    let out = run_ok(&[
        "compress",
        "--input",
        &path_str(&dir, "bcm.ftrw"),
        "--config",
        &path_str(&dir, "config.json"),
        "--output",
        &path_str(&dir, "bcm3.ftrw"),
        "--block-size",
        "8",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("already bcm, left unchanged"));
    assert_eq!(
        std::fs::read(dir.join("bcm.ftrw")).unwrap(),
        std::fs::read(dir.join("bcm3.ftrw")).unwrap()
    );
}

#[test]
fn infer_bcm_container_matches_expanded_dense_container() {
    let dir = tmp_dir("densebcm");
    gen_micro(&dir, 9);
    std::fs::write(dir.join("tokens.txt"), "1 2 3 4 5 6").unwrap();
    run_ok(&[
        "compress",
        "--input",
        &path_str(&dir, "weights.ftrw"),
        "--config",
        &path_str(&dir, "config.json"),
        "--output",
        &path_str(&dir, "bcm.ftrw"),
        "--block-size",
        "4",
    ]);
    // Dense twin whose weights expand-identically to the compressed ones.
    let compressed = container::read_container(&dir.join("bcm.ftrw")).unwrap();
    let dense_twin: Vec<(String, WeightRecord)> = compressed
        .iter()
        .map(|(name, rec)| {
            let rec = match rec {
                WeightRecord::Bcm(_) => {
                    WeightRecord::dense_from_tensor(&rec.to_tensor().unwrap()).unwrap()
                }
                other => other.clone(),
            };
            (name.clone(), rec)
        })
        .collect();
    container::write_container(&dir.join("dense-twin.ftrw"), &dense_twin).unwrap();

    for (weights, out) in [
        ("bcm.ftrw", "out-bcm.ftrw"),
        ("dense-twin.ftrw", "out-dense.ftrw"),
    ] {
        run_ok(&[
            "infer",
            "--config",
            &path_str(&dir, "config.json"),
            "--weights",
            &path_str(&dir, weights),
            "--input",
            &path_str(&dir, "tokens.txt"),
            "--output",
            &path_str(&dir, out),
        ]);
    }
    let a = read_output_tensor(&dir.join("out-bcm.ftrw"));
    let b = read_output_tensor(&dir.join("out-dense.ftrw"));
    let dev = a.max_abs_diff(&b).unwrap();
    assert!(dev <= 1e-6, "dense vs BCM deviation {dev}");
}

#[test]
fn infer_is_deterministic_across_runs() {
    let dir = tmp_dir("inferdet");
    gen_micro(&dir, 13);
    std::fs::write(dir.join("tokens.txt"), "7 8 9").unwrap();
    for out in ["a.ftrw", "b.ftrw"] {
        run_ok(&[
            "infer",
            "--config",
            &path_str(&dir, "config.json"),
            "--weights",
            &path_str(&dir, "weights.ftrw"),
            "--input",
            &path_str(&dir, "tokens.txt"),
            "--output",
            &path_str(&dir, out),
            "--softmax",
            "pwl",
        ]);
    }
    assert_eq!(
        std::fs::read(dir.join("a.ftrw")).unwrap(),
        std::fs::read(dir.join("b.ftrw")).unwrap()
    );
}

#[test]
fn micro_forward_pass_is_fast() {
    let dir = tmp_dir("fast");
    gen_micro(&dir, 29);
    std::fs::write(dir.join("tokens.txt"), "0 1 2 3 4 5 6 7").unwrap();
    let t0 = std::time::Instant::now();
    run_ok(&[
        "infer",
        "--config",
        &path_str(&dir, "config.json"),
        "--weights",
        &path_str(&dir, "weights.ftrw"),
        "--input",
        &path_str(&dir, "tokens.txt"),
        "--output",
        &path_str(&dir, "out.ftrw"),
    ]);
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "micro forward took {elapsed:.2}s");
}

#[test]
fn infer_q16_deviation_is_finite_and_reported() {
    let dir = tmp_dir("q16");
    gen_micro(&dir, 17);
    std::fs::write(dir.join("tokens.txt"), "1 2 3 4").unwrap();
    for (precision, out) in [
        ("f64", "f64.ftrw"),
        ("q16", "q16.ftrw"),
        ("f32", "f32.ftrw"),
    ] {
        run_ok(&[
            "infer",
            "--config",
            &path_str(&dir, "config.json"),
            "--weights",
            &path_str(&dir, "weights.ftrw"),
            "--input",
            &path_str(&dir, "tokens.txt"),
            "--output",
            &path_str(&dir, out),
            "--precision",
            precision,
        ]);
    }
    let base = read_output_tensor(&dir.join("f64.ftrw"));
    for low in ["q16.ftrw", "f32.ftrw"] {
        let t = read_output_tensor(&dir.join(low));
        let dev = t.max_abs_diff(&base).unwrap();
        assert!(dev.is_finite());
        println!("{low}: max deviation vs f64 = {dev:.3e}");
    }
}

#[test]
fn infer_rejects_out_of_vocab_token() {
    let dir = tmp_dir("oov");
    gen_micro(&dir, 19);
    std::fs::write(dir.join("tokens.txt"), "1 2 5000").unwrap();
    let out = bin()
        .args([
            "infer",
            "--config",
            &path_str(&dir, "config.json"),
            "--weights",
            &path_str(&dir, "weights.ftrw"),
            "--input",
            &path_str(&dir, "tokens.txt"),
            "--output",
            &path_str(&dir, "out.ftrw"),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of vocabulary"));
}

#[test]
fn infer_empty_input_is_usage_error() {
    let dir = tmp_dir("empty");
    gen_micro(&dir, 21);
    std::fs::write(dir.join("tokens.txt"), "\n").unwrap();
    let out = bin()
        .args([
            "infer",
            "--config",
            &path_str(&dir, "config.json"),
            "--weights",
            &path_str(&dir, "weights.ftrw"),
            "--input",
            &path_str(&dir, "tokens.txt"),
            "--output",
            &path_str(&dir, "out.ftrw"),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_file_is_io_error() {
    let dir = tmp_dir("io");
    gen_micro(&dir, 23);
    let out = bin()
        .args([
            "infer",
            "--config",
            &path_str(&dir, "nope.json"),
            "--weights",
            &path_str(&dir, "weights.ftrw"),
            "--input",
            &path_str(&dir, "tokens.txt"),
            "--output",
            &path_str(&dir, "out.ftrw"),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn schedule_emits_consistent_report_and_gantt() {
    let dir = tmp_dir("sched");
    gen_micro(&dir, 25);
    run_ok(&[
        "schedule",
        "--config",
        &path_str(&dir, "config.json"),
        "--device",
        &path_str(&dir, "device.json"),
        "--seq-len",
        "16",
        "--batch",
        "4",
        "--bcm",
        "--output",
        &path_str(&dir, "report.json"),
        "--gantt",
        &path_str(&dir, "gantt.txt"),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let enc = &report["encoder"];
    let n = enc["node_count"].as_u64().unwrap();
    let max_t = enc["max_layer_time_cycles"].as_u64().unwrap();
    let freq = report["clock_freq_hz"].as_f64().unwrap();
    let steady = enc["steady_state_throughput"].as_f64().unwrap();
    assert_eq!(steady, freq / (n * max_t) as f64);
    assert_eq!(enc["pipeline_groups"].as_u64().unwrap(), 7);
    // --bcm routes FC nodes to the FFT PE.
    let layers = enc["layers"].as_array().unwrap();
    assert!(layers
        .iter()
        .any(|l| l["pe_class"] == "pe_fft" && l["name"].as_str().unwrap().contains("ffn")));
    let gantt = std::fs::read_to_string(dir.join("gantt.txt")).unwrap();
    assert!(gantt.contains("pipeline groups: 7"));
}

#[test]
fn schedule_zero_dsp_device_is_feasibility_error() {
    let dir = tmp_dir("nodsp");
    gen_micro(&dir, 27);
    let mut device: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("device.json")).unwrap()).unwrap();
    device["device"]["dsp"] = serde_json::json!(0);
    std::fs::write(dir.join("device.json"), device.to_string()).unwrap();
    let out = bin()
        .args([
            "schedule",
            "--config",
            &path_str(&dir, "config.json"),
            "--device",
            &path_str(&dir, "device.json"),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dsp"));
}

#[test]
fn verify_subcommand_passes() {
    let out = run_ok(&["verify"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all oracle suites passed"));
}

#[test]
fn shallow_schedule_reports_decoder_too() {
    let dir = tmp_dir("shallow");
    run_ok(&[
        "gen-toy",
        "--preset",
        "shallow",
        "--seed",
        "1",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["num_layers"], 2);
    assert_eq!(cfg["d_model"], 200);
    assert_eq!(cfg["num_heads"], 4);
    run_ok(&[
        "schedule",
        "--config",
        &path_str(&dir, "config.json"),
        "--device",
        &path_str(&dir, "device.json"),
        "--seq-len",
        "32",
        "--output",
        &path_str(&dir, "report.json"),
        "--gantt",
        &path_str(&dir, "gantt.txt"),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["decoder"].is_object());
    let enc_nodes = report["encoder"]["node_count"].as_u64().unwrap();
    let dec_nodes = report["decoder"]["node_count"].as_u64().unwrap();
    assert_eq!(dec_nodes, enc_nodes + 3 + 3 * 4 + 2);
    // Masked self-attention nodes surface in the decoder report.
    assert!(report["decoder"]["layers"]
        .as_array()
        .unwrap()
        .iter()
        .any(|l| l["masked"] == true));
}
