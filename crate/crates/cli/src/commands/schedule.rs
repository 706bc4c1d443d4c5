use std::path::PathBuf;

use anyhow::Context;

use ftrans_core::nn::{Structure, TransformerConfig};
use ftrans_core::sched::{self, report, ComputeGraph, DeviceConfig, GraphOptions, Schedule};

use super::write_text_atomic;

#[derive(clap::Args)]
pub struct Args {
    /// Model config JSON
    #[arg(long)]
    pub config: PathBuf,
    /// Device config JSON
    #[arg(long)]
    pub device: PathBuf,
    /// Sequence length the graph is sized for
    #[arg(long, default_value_t = 64)]
    pub seq_len: usize,
    /// Batch size for the report's pipelined figures
    #[arg(long, default_value_t = 1)]
    pub batch: u64,
    /// Model FC layers as BCM-compressed (routes them to the FFT/IFFT PE)
    #[arg(long)]
    pub bcm: bool,
    /// Write the JSON report here instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Write the Gantt rendering here instead of stdout
    #[arg(long)]
    pub gantt: Option<PathBuf>,
}

pub fn run(args: Args) -> anyhow::Result<()> {
    let config_text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config = TransformerConfig::from_json(&config_text)?;
    let device_text = std::fs::read_to_string(&args.device)
        .with_context(|| format!("reading {}", args.device.display()))?;
    let device = DeviceConfig::from_json(&device_text)?;

    let opts = GraphOptions { bcm_fc: args.bcm };
    let mut graphs: Vec<(&str, ComputeGraph)> = vec![(
        "encoder",
        sched::build_encoder_graph_with(&config, args.seq_len, opts)?,
    )];
    if config.structure == Structure::EncoderDecoder {
        graphs.push((
            "decoder",
            sched::build_decoder_graph_with(&config, args.seq_len, opts)?,
        ));
    }

    // Stage one: allocation factors over the concatenated node lists.
    let graph_refs: Vec<&ComputeGraph> = graphs.iter().map(|(_, g)| g).collect();
    let plan = sched::allocate(&device.plan_for(&graph_refs))?;

    // Push the allocated profiles back into the graph nodes so scheduling
    // sees the final layer times.
    let mut offset = 0usize;
    for (_, graph) in graphs.iter_mut() {
        for node in graph.nodes.iter_mut() {
            node.profile = plan.layers[offset].clone();
            offset += 1;
        }
    }

    // Stage two: per-graph operation scheduling.
    let mut schedules: Vec<Schedule> = Vec::new();
    let mut gantt_text = String::new();
    for (name, graph) in &graphs {
        let pool = device.pool_for(graph);
        let schedule = sched::schedule(graph, &pool)?;
        gantt_text.push_str(&format!("== {name} ==\n"));
        gantt_text.push_str(&sched::render_gantt(graph, &schedule, &pool));
        gantt_text.push('\n');
        schedules.push(schedule);
    }

    let tuples: Vec<(&str, &ComputeGraph, &Schedule)> = graphs
        .iter()
        .zip(&schedules)
        .map(|((name, graph), schedule)| (*name, graph, schedule))
        .collect();
    let mut perf = report::report(&plan, &tuples, args.batch)?;
    perf.seed = config.seed;

    let json = perf.to_json();
    match &args.output {
        Some(path) => {
            write_text_atomic(path, &json)?;
            println!("wrote report to {}", path.display());
        }
        None => println!("{json}"),
    }
    match &args.gantt {
        Some(path) => {
            write_text_atomic(path, &gantt_text)?;
            println!("wrote gantt to {}", path.display());
        }
        None => print!("{gantt_text}"),
    }
    println!(
        "encoder: {} nodes, {} pipeline groups, max T = {} cycles, steady-state {:.2} inf/s",
        perf.encoder.node_count,
        perf.encoder.pipeline_groups,
        perf.encoder.max_layer_time_cycles,
        perf.encoder.steady_state_throughput,
    );
    if let Some(dec) = &perf.decoder {
        println!(
            "decoder: {} nodes, {} pipeline groups, max T = {} cycles, steady-state {:.2} inf/s",
            dec.node_count,
            dec.pipeline_groups,
            dec.max_layer_time_cycles,
            dec.steady_state_throughput,
        );
    }
    Ok(())
}
