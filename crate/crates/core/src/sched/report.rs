//! Structured performance reports and the plain-text Gantt rendering.
//!
//! Timing model: with `n` graph nodes and bottleneck layer time `maxT`, the
//! steady-state throughput is `freq / (n · maxT)` (one inference issued every
//! `n · maxT` cycles once the pipeline is primed), the single-pass latency is
//! `makespan_stages · maxT / freq`, and a batch finishes after the pipeline
//! fill plus `batch - 1` issue intervals. Every field is recomputable from the
//! reported `T_j`, `K_j`, `freq`, and `n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sched::{
    ComputeGraph, DevicePlan, LayerProfile, PeClass, PePool, ResourceVector, Schedule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub id: usize,
    pub name: String,
    pub pe_class: PeClass,
    pub group: u32,
    pub masked: bool,
    pub n_op: u64,
    pub alloc_factor: u32,
    pub time_cycles: u64,
    /// `K_j · R_j` for this layer.
    pub resources: ResourceVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSummary {
    pub used: ResourceVector,
    pub limits: ResourceVector,
    pub misc: ResourceVector,
    pub replicas: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphReport {
    pub name: String,
    pub layers: Vec<LayerReport>,
    /// `n` in the throughput formula: node count of this graph.
    pub node_count: usize,
    pub pipeline_groups: u32,
    pub max_layer_time_cycles: u64,
    /// `freq / (n · maxT)`, batch-independent.
    pub steady_state_throughput: f64,
    pub makespan_stages: u32,
    pub makespan_seconds: f64,
    pub schedule: Vec<crate::sched::ScheduleEntry>,
    pub batch: u64,
    pub batch_latency_seconds: f64,
    /// `batch / batch_latency`; approaches the steady-state bound as the
    /// batch fills the pipeline.
    pub batch_throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub clock_freq_hz: f64,
    pub resources: ResourceSummary,
    pub encoder: GraphReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder: Option<GraphReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl PerfReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Assembles the report for one scheduled graph. `layers` must be the
/// allocated profiles for `graph.nodes`, index-aligned.
pub fn graph_report(
    name: &str,
    graph: &ComputeGraph,
    layers: &[LayerProfile],
    schedule: &Schedule,
    clock_freq: f64,
    batch: u64,
) -> Result<GraphReport> {
    if layers.len() != graph.nodes.len() {
        return Err(Error::shape(format!(
            "{}: {} allocated layers for {} graph nodes",
            name,
            layers.len(),
            graph.nodes.len()
        )));
    }
    if batch == 0 {
        return Err(Error::domain("batch must be >= 1".to_string()));
    }
    let mut reports = Vec::with_capacity(layers.len());
    for (node, layer) in graph.nodes.iter().zip(layers) {
        reports.push(LayerReport {
            id: node.id,
            name: layer.name.clone(),
            pe_class: layer.pe_class,
            group: node.group,
            masked: node.masked,
            n_op: layer.n_op,
            alloc_factor: layer.alloc_factor,
            time_cycles: layer.time()?,
            resources: layer.base_resources.scale(layer.alloc_factor as u64),
        });
    }
    let n = layers.len() as u64;
    let max_t = reports.iter().map(|l| l.time_cycles).max().unwrap_or(0);
    if max_t == 0 {
        return Err(Error::domain(format!("{name}: zero-work graph")));
    }
    let makespan = schedule.makespan();
    let steady = clock_freq / (n * max_t) as f64;
    let interval_cycles = n * max_t;
    let fill_cycles = makespan as u64 * max_t;
    let batch_latency_cycles = fill_cycles + (batch - 1) * interval_cycles;
    let batch_latency_seconds = batch_latency_cycles as f64 / clock_freq;
    Ok(GraphReport {
        name: name.to_string(),
        layers: reports,
        node_count: graph.nodes.len(),
        pipeline_groups: graph.group_count() as u32,
        max_layer_time_cycles: max_t,
        steady_state_throughput: steady,
        makespan_stages: makespan,
        makespan_seconds: fill_cycles as f64 / clock_freq,
        schedule: schedule.entries.clone(),
        batch,
        batch_latency_seconds,
        batch_throughput: batch as f64 / batch_latency_seconds,
    })
}

/// Full report over an allocated plan whose layer list is the concatenation
/// of the given graphs' nodes (in order).
pub fn report(
    plan: &DevicePlan,
    graphs: &[(&str, &ComputeGraph, &Schedule)],
    batch: u64,
) -> Result<PerfReport> {
    plan.check_feasible()?;
    let total: usize = graphs.iter().map(|(_, g, _)| g.nodes.len()).sum();
    if total != plan.layers.len() {
        return Err(Error::shape(format!(
            "plan has {} layers, graphs have {total} nodes",
            plan.layers.len()
        )));
    }
    let mut offset = 0usize;
    let mut built = Vec::new();
    for (name, graph, schedule) in graphs {
        let slice = &plan.layers[offset..offset + graph.nodes.len()];
        built.push(graph_report(
            name,
            graph,
            slice,
            schedule,
            plan.clock_freq,
            batch,
        )?);
        offset += graph.nodes.len();
    }
    let mut it = built.into_iter();
    let encoder = it
        .next()
        .ok_or_else(|| Error::domain("report needs at least one graph".to_string()))?;
    Ok(PerfReport {
        clock_freq_hz: plan.clock_freq,
        resources: ResourceSummary {
            used: plan.used_resources(),
            limits: plan.device_limits,
            misc: plan.misc,
            replicas: plan.replicas,
        },
        encoder,
        decoder: it.next(),
        seed: None,
    })
}

/// Plain-text Gantt chart: one row per PE instance, one column per stage.
pub fn render_gantt(graph: &ComputeGraph, schedule: &Schedule, pool: &PePool) -> String {
    let makespan = schedule.makespan() as usize;
    let mut out = String::new();
    out.push_str(&format!(
        "pipeline groups: {}   stages: {}\n",
        graph.group_count(),
        makespan
    ));
    let cell = graph
        .nodes
        .iter()
        .map(|n| n.id.to_string().len())
        .max()
        .unwrap_or(1)
        .max(2);
    let label_width = pool
        .units
        .iter()
        .map(|u| u.to_string().len())
        .max()
        .unwrap_or(4);
    out.push_str(&format!("{:label_width$} |", ""));
    for stage in 1..=makespan {
        out.push_str(&format!(" {stage:>cell$} |"));
    }
    out.push('\n');
    for unit in &pool.units {
        out.push_str(&format!("{:label_width$} |", unit.to_string()));
        for stage in 1..=makespan {
            let stage = stage as u32;
            let occupant = schedule
                .entries
                .iter()
                .find(|e| e.pe == *unit && e.start_stage <= stage && stage <= e.end_stage);
            match occupant {
                Some(e) => out.push_str(&format!(" {:>cell$} |", e.layer)),
                None => out.push_str(&format!(" {:>cell$} |", ".")),
            }
        }
        out.push('\n');
    }
    out.push_str("legend: column = stage, cell = node id, '.' = idle\n");
    for node in &graph.nodes {
        out.push_str(&format!(
            "  {:>3}  {}{}\n",
            node.id,
            node.profile.name,
            if node.masked { "  [masked]" } else { "" }
        ));
    }
    out
}
