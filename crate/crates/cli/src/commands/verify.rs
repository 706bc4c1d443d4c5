//! Built-in oracle suites: independent recomputations checked against the
//! library paths, runnable in the field without the test harness.

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use ftrans_core::bcm::{BlockCirculantMatrix, CompressionMode};
use ftrans_core::fft;
use ftrans_core::gen;
use ftrans_core::nn::{self, SoftmaxImpl};
use ftrans_core::quant::{self, FixedPointFormat};
use ftrans_core::sched::{self, PeClass, PePool, ResourceVector, Schedule};
use ftrans_core::tensor::Tensor;

#[derive(clap::Args)]
pub struct Args {
    /// Seed for the randomized suites
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn check(&mut self, name: &str, outcome: Result<String, String>) {
        match outcome {
            Ok(detail) => println!("ok   {name} ({detail})"),
            Err(reason) => {
                println!("FAIL {name}: {reason}");
                self.failures += 1;
            }
        }
    }
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let mut runner = Runner { failures: 0 };
    runner.check("fft-vs-naive-dft", fft_suite(args.seed));
    runner.check("bcm-matvec-vs-dense", bcm_suite(args.seed + 1));
    runner.check("bcm-compression-exactness", compress_suite(args.seed + 2));
    runner.check("quant-roundtrip-bounds", quant_suite(args.seed + 3));
    runner.check("pwl-softmax-error", softmax_suite(args.seed + 4));
    runner.check("schedule-validity", schedule_suite(args.seed + 5));
    runner.check("allocator-vs-uniform", allocator_suite(args.seed + 6));
    runner.check("graph-structure", graph_suite());
    runner.check("report-arithmetic", report_suite());
    if runner.failures > 0 {
        anyhow::bail!(ftrans_core::Error::Format(format!(
            "{} oracle suite(s) failed",
            runner.failures
        )));
    }
    println!("all oracle suites passed");
    Ok(())
}

type Outcome = Result<String, String>;

fn naive_dft(x: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut acc = (0.0, 0.0);
            for (j, &(re, im)) in x.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                let (c, s) = (angle.cos(), angle.sin());
                acc.0 += re * c - im * s;
                acc.1 += re * s + im * c;
            }
            acc
        })
        .collect()
}

fn fft_suite(seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for n in [1usize, 2, 4, 8, 16, 32] {
        for _ in 0..100 {
            let x: Vec<(f64, f64)> = (0..n)
                .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let input: Vec<num_complex::Complex64> = x
                .iter()
                .map(|&(re, im)| num_complex::Complex64::new(re, im))
                .collect();
            let fast = match fft::fft(&input) {
                Ok(v) => v,
                Err(e) => return Err(format!("fft failed: {e}")),
            };
            let oracle = naive_dft(&x);
            for (a, (re, im)) in fast.iter().zip(&oracle) {
                worst = worst.max(((a.re - re).powi(2) + (a.im - im).powi(2)).sqrt());
            }
            let back = fft::ifft(&fast).map_err(|e| e.to_string())?;
            for (a, b) in back.iter().zip(&input) {
                worst = worst.max((a - b).norm());
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!("max error {worst:.2e}"))
    } else {
        Err(format!("max error {worst:.2e} exceeds 1e-9"))
    }
}

fn bcm_suite(seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let m: usize = rng.gen_range(4..=64);
        let n: usize = rng.gen_range(4..=64);
        let b = 1usize << rng.gen_range(1..=4);
        let f = m.div_ceil(b);
        let g = n.div_ceil(b);
        let vectors: Vec<f64> = (0..f * g * b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mat = BlockCirculantMatrix::from_index_vectors(
            m,
            n,
            b,
            CompressionMode::DiagonalMean,
            vectors,
        )
        .map_err(|e| e.to_string())?;
        let x = Tensor::vector((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let fast = mat.matvec(&x).map_err(|e| e.to_string())?;
        let dense = Tensor::vector(mat.expand().matvec(x.data()).map_err(|e| e.to_string())?);
        worst = worst.max(fast.max_abs_diff(&dense).map_err(|e| e.to_string())?);
    }
    if worst <= 1e-9 {
        Ok(format!("200 cases, max |matvec - dense| {worst:.2e}"))
    } else {
        Err(format!("max deviation {worst:.2e} exceeds 1e-9"))
    }
}

fn compress_suite(seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let b = 1usize << rng.gen_range(1..=3);
        let f = rng.gen_range(1..=3);
        let g = rng.gen_range(1..=3);
        let vectors: Vec<f64> = (0..f * g * b).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let original = BlockCirculantMatrix::from_index_vectors(
            f * b,
            g * b,
            b,
            CompressionMode::DiagonalMean,
            vectors.clone(),
        )
        .map_err(|e| e.to_string())?;
        let dense = original.expand();
        for mode in [CompressionMode::DiagonalMean, CompressionMode::FirstRow] {
            let rec = BlockCirculantMatrix::compress(&dense, b, mode).map_err(|e| e.to_string())?;
            for (a, e) in rec.index_vectors().iter().zip(&vectors) {
                worst = worst.max((a - e).abs());
            }
        }
    }
    if worst <= 1e-12 {
        Ok(format!("projection error {worst:.2e}"))
    } else {
        Err(format!("projection error {worst:.2e} exceeds 1e-12"))
    }
}

fn quant_suite(seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    for frac_bits in [0u8, 5, 10, 15] {
        let format = FixedPointFormat::new(frac_bits).map_err(|e| e.to_string())?;
        let mut values: Vec<f64> = (0..500)
            .map(|_| rng.gen_range(format.min_value()..format.max_value()))
            .collect();
        values.push(format.max_value());
        values.push(format.min_value());
        let x = Tensor::vector(values);
        let back = quant::dequantize(&quant::quantize(&x, format));
        let bound = 0.5 * format.resolution();
        for (a, b) in x.data().iter().zip(back.data()) {
            if (a - b).abs() > bound + 1e-15 {
                return Err(format!("roundtrip error {} exceeds {bound}", (a - b).abs()));
            }
        }
        let sat = quant::quantize(
            &Tensor::vector(vec![format.max_value() * 3.0, format.min_value() * 3.0]),
            format,
        );
        if sat.raw != vec![i16::MAX, i16::MIN] {
            return Err("saturation did not clamp to the extremes".to_string());
        }
    }
    Ok("bounds and saturation hold for frac_bits in {0,5,10,15}".to_string())
}

fn softmax_suite(seed: u64) -> Outcome {
    let (lo, hi) = nn::PWL_DEFAULT_RANGE;
    let grid_eps = (0..=100_000)
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / 100_000.0;
            (nn::pwl_exp(t, 32, lo, hi) - t.exp()).abs()
        })
        .fold(0.0, f64::max);
    let pwl = SoftmaxImpl::pwl(32).map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let exact = nn::softmax(&x, &SoftmaxImpl::Exact).map_err(|e| e.to_string())?;
        let approx = nn::softmax(&x, &pwl).map_err(|e| e.to_string())?;
        for (a, e) in approx.iter().zip(&exact) {
            worst = worst.max((a - e).abs());
        }
    }
    if worst <= grid_eps {
        Ok(format!(
            "softmax deviation {worst:.2e} within interpolation bound {grid_eps:.2e}"
        ))
    } else {
        Err(format!(
            "softmax deviation {worst:.2e} exceeds grid bound {grid_eps:.2e}"
        ))
    }
}

fn random_dag(rng: &mut StdRng) -> sched::ComputeGraph {
    let n = rng.gen_range(1..=12);
    let classes = [PeClass::PeA, PeClass::PeB, PeClass::Adder];
    let nodes: Vec<sched::GraphNode> = (0..n)
        .map(|id| sched::GraphNode {
            id,
            profile: sched::LayerProfile {
                name: format!("n{id}"),
                n_op: rng.gen_range(1..100),
                base_throughput: 1.0,
                base_resources: ResourceVector::ZERO,
                alloc_factor: 1,
                pe_class: classes[rng.gen_range(0..classes.len())],
            },
            group: 1,
            masked: false,
        })
        .collect();
    let mut edges = Vec::new();
    for to in 1..n {
        for from in 0..to {
            if rng.gen_bool(0.3) {
                edges.push((from, to));
            }
        }
    }
    sched::ComputeGraph { nodes, edges }
}

/// Independent validity check: every node scheduled once, dependencies
/// strictly ordered, PE occupancy intervals disjoint.
fn schedule_is_valid(graph: &sched::ComputeGraph, s: &Schedule) -> bool {
    let by_layer: BTreeMap<usize, _> = s.entries.iter().map(|e| (e.layer, e)).collect();
    if by_layer.len() != graph.nodes.len() {
        return false;
    }
    for &(from, to) in &graph.edges {
        if by_layer[&from].end_stage >= by_layer[&to].start_stage {
            return false;
        }
    }
    for (i, a) in s.entries.iter().enumerate() {
        for b in &s.entries[i + 1..] {
            if a.pe == b.pe && a.start_stage <= b.end_stage && b.start_stage <= a.end_stage {
                return false;
            }
        }
    }
    true
}

fn schedule_suite(seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    for i in 0..200 {
        let graph = random_dag(&mut rng);
        let mut counts = BTreeMap::new();
        counts.insert(PeClass::PeA, rng.gen_range(1..=3));
        counts.insert(PeClass::PeB, rng.gen_range(1..=3));
        counts.insert(PeClass::Adder, rng.gen_range(1..=3));
        let pool = PePool::from_counts(&counts);
        let s = sched::schedule(&graph, &pool).map_err(|e| e.to_string())?;
        if !schedule_is_valid(&graph, &s) {
            return Err(format!("instance {i}: invalid schedule"));
        }
        if s.makespan() as usize > graph.nodes.len() {
            return Err(format!("instance {i}: makespan exceeds serial baseline"));
        }
    }
    Ok("200 random DAGs valid, makespan <= serial".to_string())
}

fn allocator_suite(seed: u64) -> Outcome {
    let mut rng = StdRng::seed_from_u64(seed);
    for i in 0..50 {
        let n = rng.gen_range(2..=5);
        let layers: Vec<sched::LayerProfile> = (0..n)
            .map(|j| sched::LayerProfile {
                name: format!("l{j}"),
                n_op: rng.gen_range(1..2000),
                base_throughput: rng.gen_range(1..5) as f64,
                base_resources: ResourceVector::new(0, 0, rng.gen_range(1..4), 0),
                alloc_factor: 1,
                pe_class: PeClass::PeA,
            })
            .collect();
        let budget: u64 = layers.iter().map(|l| l.base_resources.dsp).sum::<u64>()
            * rng.gen_range(1..4)
            + rng.gen_range(0..5);
        let plan = sched::DevicePlan {
            device_limits: ResourceVector::new(0, 0, budget, 0),
            replicas: 1,
            misc: ResourceVector::ZERO,
            clock_freq: 1e8,
            layers,
        };
        if plan.check_feasible().is_err() {
            continue;
        }
        let out = sched::allocate(&plan).map_err(|e| e.to_string())?;
        out.check_feasible().map_err(|e| e.to_string())?;
        let final_max = out.max_layer_time().map_err(|e| e.to_string())?;
        if final_max > plan.max_layer_time().map_err(|e| e.to_string())? {
            return Err(format!("instance {i}: allocation increased max layer time"));
        }
        let mut best_uniform = plan.max_layer_time().map_err(|e| e.to_string())?;
        for k in 1..=64u32 {
            let mut probe = plan.clone();
            for l in &mut probe.layers {
                l.alloc_factor = k;
            }
            if probe.check_feasible().is_err() {
                break;
            }
            best_uniform = probe.max_layer_time().map_err(|e| e.to_string())?;
        }
        if final_max > best_uniform {
            return Err(format!(
                "instance {i}: greedy {final_max} worse than uniform {best_uniform}"
            ));
        }
    }
    Ok("50 instances: monotone and never worse than uniform".to_string())
}

fn graph_suite() -> Outcome {
    let cfg = gen::preset_config(gen::Preset::Shallow, 0);
    let g = sched::build_encoder_graph(&cfg, cfg.d_model).map_err(|e| e.to_string())?;
    if g.group_count() != 7 {
        return Err(format!(
            "encoder has {} pipeline groups, want 7",
            g.group_count()
        ));
    }
    let proj = g
        .node_by_name("attn.q_proj")
        .ok_or("missing q_proj node")?
        .profile
        .n_op as f64;
    let head = g
        .node_by_name("attn.head0.qkt")
        .ok_or("missing qkt node")?
        .profile
        .n_op as f64;
    let ratio = proj / head;
    if !(3.0..=5.0).contains(&ratio) {
        return Err(format!("projection/head op ratio {ratio} outside [3, 5]"));
    }
    let dec = sched::build_decoder_graph(&cfg, cfg.d_model).map_err(|e| e.to_string())?;
    if dec.total_ops() <= g.total_ops() {
        return Err("decoder op count does not exceed encoder".to_string());
    }
    Ok(format!("7 groups, projection/head ratio {ratio:.2}"))
}

fn report_suite() -> Outcome {
    let cfg = gen::preset_config(gen::Preset::Shallow, 0);
    let device = gen::synthetic_device();
    let graph = sched::build_encoder_graph(&cfg, 64).map_err(|e| e.to_string())?;
    let plan = sched::allocate(&device.plan_for(&[&graph])).map_err(|e| e.to_string())?;
    let pool = device.pool_for(&graph);
    let schedule = sched::schedule(&graph, &pool).map_err(|e| e.to_string())?;
    let rep = sched::report::report(&plan, &[("encoder", &graph, &schedule)], 8)
        .map_err(|e| e.to_string())?;
    let enc = &rep.encoder;
    let max_t = enc.layers.iter().map(|l| l.time_cycles).max().unwrap_or(0);
    let n = enc.node_count as u64;
    let steady = rep.clock_freq_hz / (n * max_t) as f64;
    if steady != enc.steady_state_throughput {
        return Err("steady-state throughput does not match recomputation".to_string());
    }
    let latency = (enc.makespan_stages as u64 * max_t + (enc.batch - 1) * n * max_t) as f64
        / rep.clock_freq_hz;
    if latency != enc.batch_latency_seconds {
        return Err("batch latency does not match recomputation".to_string());
    }
    Ok(format!(
        "throughput and latency recompute exactly (maxT {max_t} cycles)"
    ))
}
