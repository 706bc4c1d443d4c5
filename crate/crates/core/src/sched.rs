//! Accelerator-side performance model: resource-vector accounting, the greedy
//! two-stage allocator (grow the slowest layer, reclaim from the fastest), and
//! list scheduling of computation DAGs onto a pool of processing elements.

pub mod graph;
pub mod report;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ResourceDeficit, Result};

pub use graph::{
    build_decoder_graph, build_decoder_graph_with, build_encoder_graph, build_encoder_graph_with,
    ComputeGraph, GraphNode, GraphOptions,
};
pub use report::{render_gantt, GraphReport, LayerReport, PerfReport, ResourceSummary};

// ---------------------------------------------------------------------------
// Resources and processing elements
// ---------------------------------------------------------------------------

/// Per-device counts of the four budgeted fabric resources.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceVector {
    #[serde(default)]
    pub ff: u64,
    #[serde(default)]
    pub lut: u64,
    #[serde(default)]
    pub dsp: u64,
    #[serde(default)]
    pub bram: u64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector {
        ff: 0,
        lut: 0,
        dsp: 0,
        bram: 0,
    };

    pub fn new(ff: u64, lut: u64, dsp: u64, bram: u64) -> Self {
        ResourceVector { ff, lut, dsp, bram }
    }

    pub fn add(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector {
            ff: self.ff + other.ff,
            lut: self.lut + other.lut,
            dsp: self.dsp + other.dsp,
            bram: self.bram + other.bram,
        }
    }

    pub fn scale(&self, k: u64) -> ResourceVector {
        ResourceVector {
            ff: self.ff * k,
            lut: self.lut * k,
            dsp: self.dsp * k,
            bram: self.bram * k,
        }
    }

    pub fn components(&self) -> [(&'static str, u64); 4] {
        [
            ("ff", self.ff),
            ("lut", self.lut),
            ("dsp", self.dsp),
            ("bram", self.bram),
        ]
    }

    /// Componentwise deficits of `self` (the demand) against `limit`.
    pub fn deficits_against(&self, limit: &ResourceVector) -> Vec<ResourceDeficit> {
        self.components()
            .iter()
            .zip(limit.components())
            .filter(|((_, need), (_, have))| need > have)
            .map(|((name, need), (_, have))| ResourceDeficit {
                resource: name,
                required: *need,
                available: have,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeClass {
    PeA,
    PeB,
    PeFft,
    Adder,
    Softmax,
}

impl std::fmt::Display for PeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PeClass::PeA => "pe_a",
            PeClass::PeB => "pe_b",
            PeClass::PeFft => "pe_fft",
            PeClass::Adder => "adder",
            PeClass::Softmax => "softmax",
        };
        f.write_str(s)
    }
}

/// One schedulable compute layer: operation count, empirical unit throughput
/// `F_j`, per-unit resource cost `R_j`, and the allocation factor `K_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub name: String,
    pub n_op: u64,
    pub base_throughput: f64,
    pub base_resources: ResourceVector,
    pub alloc_factor: u32,
    pub pe_class: PeClass,
}

impl LayerProfile {
    /// Execution cycles `T_j = ceil(N_op / (F_j · K_j))`, recomputed on demand.
    pub fn time(&self) -> Result<u64> {
        layer_time(self)
    }

    fn with_alloc(&self, k: u32) -> LayerProfile {
        LayerProfile {
            alloc_factor: k,
            ..self.clone()
        }
    }
}

/// `T_j = ceil(N_op / (F_j · K_j))` in cycles, through integer arithmetic
/// whenever `F_j · K_j` is integral.
pub fn layer_time(layer: &LayerProfile) -> Result<u64> {
    if layer.alloc_factor == 0 {
        return Err(Error::domain(format!(
            "layer {}: allocation factor must be >= 1",
            layer.name
        )));
    }
    if !layer.base_throughput.is_finite() || layer.base_throughput <= 0.0 {
        return Err(Error::domain(format!(
            "layer {}: base throughput must be positive",
            layer.name
        )));
    }
    if layer.n_op == 0 {
        return Ok(0);
    }
    let fk = layer.base_throughput * layer.alloc_factor as f64;
    if fk.fract() == 0.0 && fk <= u64::MAX as f64 {
        Ok(layer.n_op.div_ceil(fk as u64))
    } else {
        Ok((layer.n_op as f64 / fk).ceil() as u64)
    }
}

// ---------------------------------------------------------------------------
// Device plan: feasibility, throughput, allocation
// ---------------------------------------------------------------------------

/// Resource-allocation state for `M` replicated encoder/decoder modules on a
/// device with the given limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevicePlan {
    pub device_limits: ResourceVector,
    pub replicas: u32,
    pub misc: ResourceVector,
    /// Clock in cycles per second.
    pub clock_freq: f64,
    pub layers: Vec<LayerProfile>,
}

impl DevicePlan {
    /// `M · Σ_j K_j·R_j + R_misc`.
    pub fn used_resources(&self) -> ResourceVector {
        let per_replica = self.layers.iter().fold(ResourceVector::ZERO, |acc, l| {
            acc.add(&l.base_resources.scale(l.alloc_factor as u64))
        });
        per_replica.scale(self.replicas as u64).add(&self.misc)
    }

    pub fn check_feasible(&self) -> Result<()> {
        let deficits = self.used_resources().deficits_against(&self.device_limits);
        if deficits.is_empty() {
            Ok(())
        } else {
            Err(Error::Feasibility(deficits))
        }
    }

    pub fn layer_times(&self) -> Result<Vec<u64>> {
        self.layers.iter().map(layer_time).collect()
    }

    pub fn max_layer_time(&self) -> Result<u64> {
        Ok(self.layer_times()?.into_iter().max().unwrap_or(0))
    }
}

/// Pipeline throughput `freq / (n · max_j T_j)` in inferences per
/// second, where `n` is the number of layers in the plan.
pub fn throughput(plan: &DevicePlan) -> Result<f64> {
    if plan.layers.is_empty() {
        return Err(Error::domain("throughput of an empty plan".to_string()));
    }
    plan.check_feasible()?;
    let max_t = plan.max_layer_time()?;
    if max_t == 0 {
        return Err(Error::domain(
            "throughput undefined for a zero-work plan".to_string(),
        ));
    }
    Ok(plan.clock_freq / (plan.layers.len() as u64 * max_t) as f64)
}

fn feasible_with(plan: &DevicePlan, idx: usize, k: u32) -> bool {
    let mut probe = plan.clone();
    probe.layers[idx].alloc_factor = k;
    probe.check_feasible().is_ok()
}

/// Smallest `k' > k` with `T(k') < t`, assuming `t >= 2` and `n_op >= 1`.
fn min_alloc_strictly_faster(layer: &LayerProfile, t: u64) -> u32 {
    // T(k) <= t - 1  <=>  n / (F·k) <= t - 1  <=>  k >= n / (F·(t-1)).
    let need = layer.n_op as f64 / (layer.base_throughput * (t - 1) as f64);
    let mut k = need.ceil().max((layer.alloc_factor + 1) as f64) as u32;
    // Float slop: nudge until the ceiling really drops.
    loop {
        let probe = layer.with_alloc(k);
        if probe.time().unwrap_or(u64::MAX) < t {
            break;
        }
        k += 1;
    }
    while k > layer.alloc_factor + 1 {
        let probe = layer.with_alloc(k - 1);
        if probe.time().unwrap_or(u64::MAX) < t {
            k -= 1;
        } else {
            break;
        }
    }
    k
}

/// Index of the slowest layer, ties broken by lowest index.
fn argmax_time(times: &[u64]) -> usize {
    let mut best = 0;
    for (i, &t) in times.iter().enumerate() {
        if t > times[best] {
            best = i;
        }
    }
    best
}

fn argmin_time(times: &[u64]) -> usize {
    let mut best = 0;
    for (i, &t) in times.iter().enumerate() {
        if t < times[best] {
            best = i;
        }
    }
    best
}

/// Stage (a)+(b): repeatedly grant the slowest layer another allocation unit
/// while the resource constraint holds. Plateaus of the ceiling are crossed in
/// one step (feasibility is monotone in K, so intermediate states were
/// feasible too).
fn grow_slowest(plan: &mut DevicePlan) -> Result<()> {
    loop {
        let times = plan.layer_times()?;
        let s = argmax_time(&times);
        let t_s = times[s];
        if t_s <= 1 {
            return Ok(());
        }
        let layer = &plan.layers[s];
        if layer.base_resources == ResourceVector::ZERO {
            // Zero-cost layers jump straight to T = 1.
            let k = (layer.n_op as f64 / layer.base_throughput).ceil().max(1.0) as u32;
            plan.layers[s].alloc_factor = layer.alloc_factor.max(k);
            continue;
        }
        let target = min_alloc_strictly_faster(layer, t_s);
        if feasible_with(plan, s, target) {
            plan.layers[s].alloc_factor = target;
            continue;
        }
        // The speedup step is infeasible; take what fits (stepwise allocation
        // would stop at the same point) and stop growing.
        let (mut lo, mut hi) = (layer.alloc_factor, target);
        while lo + 1 < hi {
            let mid = lo + (hi - lo) / 2;
            if feasible_with(plan, s, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        plan.layers[s].alloc_factor = lo;
        return Ok(());
    }
}

/// Greedy two-stage allocation: grow the slowest layer while resources admit
/// it, then reclaim a unit from the fastest layer whenever its time stays at
/// or below the current maximum, and retry. Max layer time never increases;
/// the loop stops when a K-vector repeats (no move reduced the maximum).
pub fn allocate(plan: &DevicePlan) -> Result<DevicePlan> {
    if plan.layers.is_empty() {
        return Err(Error::domain("cannot allocate an empty plan".to_string()));
    }
    plan.check_feasible()?;
    for l in &plan.layers {
        if l.alloc_factor == 0 {
            return Err(Error::domain(format!(
                "layer {}: allocation factor must be >= 1",
                l.name
            )));
        }
    }
    let mut cur = plan.clone();
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    loop {
        grow_slowest(&mut cur)?;
        let state: Vec<u32> = cur.layers.iter().map(|l| l.alloc_factor).collect();
        if !seen.insert(state) {
            break;
        }
        let times = cur.layer_times()?;
        let max_t = times[argmax_time(&times)];
        let f = argmin_time(&times);
        let k_f = cur.layers[f].alloc_factor;
        if k_f <= 1 {
            break;
        }
        let decremented = cur.layers[f].with_alloc(k_f - 1).time()?;
        if decremented > max_t {
            break;
        }
        cur.layers[f].alloc_factor = k_f - 1;
    }
    cur.check_feasible()?;
    Ok(cur)
}

// ---------------------------------------------------------------------------
// PE pool and schedule
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeUnit {
    pub class: PeClass,
    pub instance: u32,
}

impl std::fmt::Display for PeUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.class, self.instance)
    }
}

/// The multiset of available processing elements.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PePool {
    pub units: Vec<PeUnit>,
}

impl PePool {
    pub fn from_counts(counts: &BTreeMap<PeClass, u32>) -> Self {
        let mut units = Vec::new();
        for (&class, &count) in counts {
            for instance in 0..count {
                units.push(PeUnit { class, instance });
            }
        }
        PePool { units }
    }

    pub fn count(&self, class: PeClass) -> usize {
        self.units.iter().filter(|u| u.class == class).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub layer: usize,
    pub start_stage: u32,
    pub end_stage: u32,
    pub pe: PeUnit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub entries: Vec<ScheduleEntry>,
}

impl Schedule {
    pub fn makespan(&self) -> u32 {
        self.entries.iter().map(|e| e.end_stage).max().unwrap_or(0)
    }
}

/// List-schedules `graph` onto `pool` with every layer bucketed to one stage.
pub fn schedule(graph: &ComputeGraph, pool: &PePool) -> Result<Schedule> {
    schedule_with_granularity(graph, pool, 1)
}

/// List scheduling with configurable stage granularity: layer durations are
/// `ceil(T_j / bucket)` stages with `bucket = ceil(max_j T_j / granularity)`,
/// minimum one stage.
///
/// Each stage, ready layers are issued onto free PEs of their class in
/// topological priority order; layers whose duration has elapsed retire at the
/// end of the stage, returning their PE and releasing successors whose
/// predecessors have all retired. Ties break on lowest node id throughout, so
/// the schedule is deterministic.
pub fn schedule_with_granularity(
    graph: &ComputeGraph,
    pool: &PePool,
    granularity: u32,
) -> Result<Schedule> {
    if granularity == 0 {
        return Err(Error::domain("granularity must be >= 1".to_string()));
    }
    graph.validate()?;
    let order = graph.topo_order()?;
    let n = graph.nodes.len();
    if n == 0 {
        return Ok(Schedule::default());
    }
    for node in &graph.nodes {
        if pool.count(node.profile.pe_class) == 0 {
            return Err(Error::Unschedulable(format!(
                "no {} unit in the pool for layer {}",
                node.profile.pe_class, node.profile.name
            )));
        }
    }

    let times: Vec<u64> = graph
        .nodes
        .iter()
        .map(|node| node.profile.time())
        .collect::<Result<_>>()?;
    let max_t = times.iter().copied().max().unwrap_or(0).max(1);
    let bucket = max_t.div_ceil(granularity as u64).max(1);
    let durations: Vec<u32> = times
        .iter()
        .map(|&t| (t.div_ceil(bucket) as u32).max(1))
        .collect();

    // Priority = position in the deterministic topological order.
    let mut rank = vec![0usize; n];
    for (pos, &id) in order.iter().enumerate() {
        rank[id] = pos;
    }
    let successors = graph.successor_lists();
    let mut pending_preds = vec![0usize; n];
    for &(_, to) in &graph.edges {
        pending_preds[to] += 1;
    }

    let mut ready: BinaryHeap<Reverse<(usize, usize)>> = (0..n)
        .filter(|&id| pending_preds[id] == 0)
        .map(|id| Reverse((rank[id], id)))
        .collect();
    let mut free: BTreeMap<PeClass, BinaryHeap<Reverse<u32>>> = BTreeMap::new();
    for unit in &pool.units {
        free.entry(unit.class)
            .or_default()
            .push(Reverse(unit.instance));
    }

    let mut executing: Vec<(usize, u32, PeUnit)> = Vec::new(); // (id, end_stage, pe)
    let mut entries = Vec::with_capacity(n);
    let mut finished = 0usize;
    let mut stage = 0u32;
    let stage_limit: u64 = durations.iter().map(|&d| d as u64).sum::<u64>() + n as u64 + 2;

    while finished < n {
        stage += 1;
        if stage as u64 > stage_limit {
            return Err(Error::Unschedulable(
                "scheduler made no progress".to_string(),
            ));
        }

        // Issue phase.
        let mut deferred = Vec::new();
        while let Some(Reverse((r, id))) = ready.pop() {
            let class = graph.nodes[id].profile.pe_class;
            let slot = free.get_mut(&class).and_then(|heap| heap.pop());
            match slot {
                Some(Reverse(instance)) => {
                    let pe = PeUnit { class, instance };
                    let end = stage + durations[id] - 1;
                    entries.push(ScheduleEntry {
                        layer: id,
                        start_stage: stage,
                        end_stage: end,
                        pe,
                    });
                    executing.push((id, end, pe));
                }
                None => deferred.push(Reverse((r, id))),
            }
        }
        ready.extend(deferred);

        // Retire phase: release PEs and successors of layers ending this stage.
        let mut retired: Vec<(usize, PeUnit)> = Vec::new();
        executing.retain(|&(id, end, pe)| {
            if end == stage {
                retired.push((id, pe));
                false
            } else {
                true
            }
        });
        retired.sort_by_key(|&(id, _)| id);
        for (id, pe) in retired {
            finished += 1;
            free.entry(pe.class).or_default().push(Reverse(pe.instance));
            for &succ in &successors[id] {
                pending_preds[succ] -= 1;
                if pending_preds[succ] == 0 {
                    ready.push(Reverse((rank[succ], succ)));
                }
            }
        }
    }

    Ok(Schedule { entries })
}

// ---------------------------------------------------------------------------
// Device configuration (external JSON interface)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub ff: u64,
    pub lut: u64,
    pub dsp: u64,
    pub bram: u64,
    pub clock_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeProfile {
    pub base_throughput: f64,
    pub resources: ResourceVector,
}

fn default_replicas() -> u32 {
    1
}

/// Device description consumed by the CLI: budget, miscellaneous overhead,
/// replica count, per-class PE profiles, and optionally explicit pool sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub device: DeviceSpec,
    #[serde(default)]
    pub misc: ResourceVector,
    #[serde(default = "default_replicas")]
    pub replicas: u32,
    #[serde(default)]
    pub pe_profiles: BTreeMap<PeClass, PeProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<BTreeMap<PeClass, u32>>,
}

impl DeviceConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn limits(&self) -> ResourceVector {
        ResourceVector::new(
            self.device.ff,
            self.device.lut,
            self.device.dsp,
            self.device.bram,
        )
    }

    pub fn clock_hz(&self) -> f64 {
        self.device.clock_mhz * 1e6
    }

    /// Per-class profile, falling back to documented defaults: matrix PEs at
    /// 1 MAC/cycle, the FFT PE at 2 butterfly-equivalents/cycle, adders at 8
    /// element ops/cycle, softmax units at 1 evaluation/cycle.
    pub fn profile_for(&self, class: PeClass) -> PeProfile {
        if let Some(p) = self.pe_profiles.get(&class) {
            return *p;
        }
        match class {
            PeClass::PeA | PeClass::PeB => PeProfile {
                base_throughput: 1.0,
                resources: ResourceVector::new(800, 600, 4, 1),
            },
            PeClass::PeFft => PeProfile {
                base_throughput: 2.0,
                resources: ResourceVector::new(1200, 1000, 8, 2),
            },
            PeClass::Adder => PeProfile {
                base_throughput: 8.0,
                resources: ResourceVector::new(200, 150, 0, 0),
            },
            PeClass::Softmax => PeProfile {
                base_throughput: 1.0,
                resources: ResourceVector::new(400, 300, 2, 1),
            },
        }
    }

    /// Builds the allocation plan for the concatenated node lists of `graphs`,
    /// every layer starting at `K_j = 1`.
    pub fn plan_for(&self, graphs: &[&ComputeGraph]) -> DevicePlan {
        let mut layers = Vec::new();
        for graph in graphs {
            for node in &graph.nodes {
                let profile = self.profile_for(node.profile.pe_class);
                layers.push(LayerProfile {
                    name: node.profile.name.clone(),
                    n_op: node.profile.n_op,
                    base_throughput: profile.base_throughput,
                    base_resources: profile.resources,
                    alloc_factor: 1,
                    pe_class: node.profile.pe_class,
                });
            }
        }
        DevicePlan {
            device_limits: self.limits(),
            replicas: self.replicas,
            misc: self.misc,
            clock_freq: self.clock_hz(),
            layers,
        }
    }

    /// Pool for scheduling one graph: explicit sizes when configured,
    /// otherwise one unit per same-class node (full parallelism).
    pub fn pool_for(&self, graph: &ComputeGraph) -> PePool {
        if let Some(counts) = &self.pool {
            return PePool::from_counts(counts);
        }
        let mut counts: BTreeMap<PeClass, u32> = BTreeMap::new();
        for node in &graph.nodes {
            *counts.entry(node.profile.pe_class).or_insert(0) += 1;
        }
        PePool::from_counts(&counts)
    }
}
