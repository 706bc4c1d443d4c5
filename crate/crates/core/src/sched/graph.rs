//! Computation-graph builders for encoder and decoder modules.
//!
//! Nodes carry multiply-accumulate (or element-op) counts derived from the
//! model dimensions, a PE class, and a pipeline-stage group label. The encoder
//! spans exactly seven groups: the fused Q/K/V projections, the per-head
//! attention core (QKᵀ, scale+softmax, ·V), the output projection, add/norm,
//! the two feed-forward matmuls, and the final add/norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::{Structure, TransformerConfig};
use crate::sched::{LayerProfile, PeClass, ResourceVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: usize,
    pub profile: LayerProfile,
    /// Logical pipeline stage group (1-based).
    pub group: u32,
    /// Set on masked-attention nodes; consumed by reporting.
    pub masked: bool,
}

/// Directed acyclic dependency graph over compute layers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComputeGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<(usize, usize)>,
}

impl ComputeGraph {
    pub fn validate(&self) -> Result<()> {
        for (pos, node) in self.nodes.iter().enumerate() {
            if node.id != pos {
                return Err(Error::format(format!(
                    "node id {} at position {pos}; ids must be dense and ordered",
                    node.id
                )));
            }
        }
        for &(from, to) in &self.edges {
            if from >= self.nodes.len() || to >= self.nodes.len() {
                return Err(Error::format(format!(
                    "edge ({from}, {to}) references a missing node"
                )));
            }
        }
        Ok(())
    }

    pub fn successor_lists(&self) -> Vec<Vec<usize>> {
        let mut succ = vec![Vec::new(); self.nodes.len()];
        for &(from, to) in &self.edges {
            succ[from].push(to);
        }
        for list in &mut succ {
            list.sort_unstable();
            list.dedup();
        }
        succ
    }

    /// Kahn's algorithm with lowest-id-first tie-breaking. A cycle is reported
    /// through one of its back edges.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        let n = self.nodes.len();
        let succ = self.successor_lists();
        let mut indegree = vec![0usize; n];
        for &(_, to) in &self.edges {
            indegree[to] += 1;
        }
        let mut heap: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(id)) = heap.pop() {
            order.push(id);
            for &s in &succ[id] {
                indegree[s] -= 1;
                if indegree[s] == 0 {
                    heap.push(Reverse(s));
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        let leftover: Vec<usize> = (0..n).filter(|&i| indegree[i] > 0).collect();
        let &(from, to) = self
            .edges
            .iter()
            .find(|(f, t)| leftover.contains(f) && leftover.contains(t))
            .expect("a cycle contains at least one edge among unresolved nodes");
        Err(Error::Cycle { from, to })
    }

    pub fn total_ops(&self) -> u64 {
        self.nodes.iter().map(|n| n.profile.n_op).sum()
    }

    /// Number of distinct pipeline-stage groups.
    pub fn group_count(&self) -> usize {
        let mut groups: Vec<u32> = self.nodes.iter().map(|n| n.group).collect();
        groups.sort_unstable();
        groups.dedup();
        groups.len()
    }

    pub fn node_by_name(&self, name: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.profile.name == name)
    }
}

/// Builder knobs: when `bcm_fc` is set the FC-style matmuls (output projection
/// and feed-forward) run on the FFT/IFFT PE instead of PE-A.
#[derive(Debug, Clone, Copy, Default)]
pub struct GraphOptions {
    pub bcm_fc: bool,
}

struct GraphBuilder {
    nodes: Vec<GraphNode>,
    edges: Vec<(usize, usize)>,
}

impl GraphBuilder {
    fn new() -> Self {
        GraphBuilder {
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    fn add(
        &mut self,
        name: String,
        n_op: u64,
        pe_class: PeClass,
        group: u32,
        masked: bool,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(GraphNode {
            id,
            profile: LayerProfile {
                name,
                n_op,
                base_throughput: 1.0,
                base_resources: ResourceVector::ZERO,
                alloc_factor: 1,
                pe_class,
            },
            group,
            masked,
        });
        id
    }

    fn edge(&mut self, from: usize, to: usize) {
        self.edges.push((from, to));
    }

    /// Emits one attention block starting at `group_base`: fused projections,
    /// per-head QKᵀ / scale+softmax / ·V chains, output projection, add/norm.
    /// Returns (add_norm node, groups consumed = 4).
    #[allow(clippy::too_many_arguments)]
    fn attention_block(
        &mut self,
        prefix: &str,
        cfg: &TransformerConfig,
        seq_len: u64,
        group_base: u32,
        masked: bool,
        fc_class: PeClass,
        input: Option<usize>,
    ) -> usize {
        let d = cfg.d_model as u64;
        let dk = cfg.head_dim() as u64;
        let proj_ops = seq_len * d * d;

        let q = self.add(
            format!("{prefix}.q_proj"),
            proj_ops,
            PeClass::PeA,
            group_base,
            false,
        );
        let k = self.add(
            format!("{prefix}.k_proj"),
            proj_ops,
            PeClass::PeA,
            group_base,
            false,
        );
        let v = self.add(
            format!("{prefix}.v_proj"),
            proj_ops,
            PeClass::PeA,
            group_base,
            false,
        );
        if let Some(src) = input {
            self.edge(src, q);
            self.edge(src, k);
            self.edge(src, v);
        }

        let mut head_outputs = Vec::new();
        for h in 0..cfg.num_heads {
            let qkt = self.add(
                format!("{prefix}.head{h}.qkt"),
                seq_len * seq_len * dk,
                PeClass::PeB,
                group_base + 1,
                masked,
            );
            self.edge(q, qkt);
            self.edge(k, qkt);
            let sm = self.add(
                format!("{prefix}.head{h}.softmax"),
                seq_len * seq_len,
                PeClass::Softmax,
                group_base + 1,
                masked,
            );
            self.edge(qkt, sm);
            let av = self.add(
                format!("{prefix}.head{h}.attn_v"),
                seq_len * seq_len * dk,
                PeClass::PeB,
                group_base + 1,
                false,
            );
            self.edge(sm, av);
            self.edge(v, av);
            head_outputs.push(av);
        }

        let wo = self.add(
            format!("{prefix}.out_proj"),
            proj_ops,
            fc_class,
            group_base + 2,
            false,
        );
        for av in head_outputs {
            self.edge(av, wo);
        }
        let an = self.add(
            format!("{prefix}.add_norm"),
            seq_len * d,
            PeClass::Adder,
            group_base + 3,
            false,
        );
        self.edge(wo, an);
        if let Some(src) = input {
            // Residual path.
            self.edge(src, an);
        }
        an
    }

    fn ffn_block(
        &mut self,
        prefix: &str,
        cfg: &TransformerConfig,
        seq_len: u64,
        group_base: u32,
        fc_class: PeClass,
        input: usize,
    ) -> usize {
        let d = cfg.d_model as u64;
        let dff = cfg.d_ffn as u64;
        let f1 = self.add(
            format!("{prefix}.ffn1"),
            seq_len * d * dff,
            fc_class,
            group_base,
            false,
        );
        self.edge(input, f1);
        let f2 = self.add(
            format!("{prefix}.ffn2"),
            seq_len * dff * d,
            fc_class,
            group_base + 1,
            false,
        );
        self.edge(f1, f2);
        let an = self.add(
            format!("{prefix}.add_norm2"),
            seq_len * d,
            PeClass::Adder,
            group_base + 2,
            false,
        );
        self.edge(f2, an);
        self.edge(input, an);
        an
    }
}

/// Encoder DAG: fused Q/K/V projections fan out to per-head attention chains,
/// which merge into the output projection, add/norm, and the feed-forward
/// pair. Node op counts are MAC counts from the configured dimensions.
pub fn build_encoder_graph(cfg: &TransformerConfig, seq_len: usize) -> Result<ComputeGraph> {
    build_encoder_graph_with(cfg, seq_len, GraphOptions::default())
}

pub fn build_encoder_graph_with(
    cfg: &TransformerConfig,
    seq_len: usize,
    opts: GraphOptions,
) -> Result<ComputeGraph> {
    if seq_len == 0 {
        return Err(Error::domain("sequence length must be >= 1".to_string()));
    }
    let fc_class = if opts.bcm_fc {
        PeClass::PeFft
    } else {
        PeClass::PeA
    };
    let mut b = GraphBuilder::new();
    let an1 = b.attention_block("attn", cfg, seq_len as u64, 1, false, fc_class, None);
    b.ffn_block("enc", cfg, seq_len as u64, 5, fc_class, an1);
    let graph = ComputeGraph {
        nodes: b.nodes,
        edges: b.edges,
    };
    graph.validate()?;
    Ok(graph)
}

/// Decoder DAG: the encoder structure extended with a masked self-attention
/// block ahead of the encoder–decoder attention.
pub fn build_decoder_graph(cfg: &TransformerConfig, seq_len: usize) -> Result<ComputeGraph> {
    build_decoder_graph_with(cfg, seq_len, GraphOptions::default())
}

pub fn build_decoder_graph_with(
    cfg: &TransformerConfig,
    seq_len: usize,
    opts: GraphOptions,
) -> Result<ComputeGraph> {
    if cfg.structure != Structure::EncoderDecoder {
        return Err(Error::domain(
            "decoder graph requires an encoder_decoder configuration".to_string(),
        ));
    }
    if seq_len == 0 {
        return Err(Error::domain("sequence length must be >= 1".to_string()));
    }
    let fc_class = if opts.bcm_fc {
        PeClass::PeFft
    } else {
        PeClass::PeA
    };
    let mut b = GraphBuilder::new();
    let self_an = b.attention_block("self", cfg, seq_len as u64, 1, true, fc_class, None);
    let cross_an = b.attention_block(
        "cross",
        cfg,
        seq_len as u64,
        5,
        false,
        fc_class,
        Some(self_an),
    );
    b.ffn_block("dec", cfg, seq_len as u64, 9, fc_class, cross_an);
    let graph = ComputeGraph {
        nodes: b.nodes,
        edges: b.edges,
    };
    graph.validate()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shallow() -> TransformerConfig {
        TransformerConfig {
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
            seed: None,
        }
        .normalized()
        .unwrap()
    }

    #[test]
    fn encoder_spans_seven_groups() {
        let g = build_encoder_graph(&shallow(), 200).unwrap();
        assert_eq!(g.group_count(), 7);
        assert_eq!(g.nodes.len(), 3 * 4 + 8);
        g.topo_order().unwrap();
    }

    #[test]
    fn single_head_encoder_is_a_chain_behind_the_projection_front() {
        let cfg = TransformerConfig {
            num_heads: 1,
            d_model: 8,
            d_ffn: 16,
            d_k: 0,
            d_v: 0,
            ..shallow()
        }
        .normalized()
        .unwrap();
        let g = build_encoder_graph(&cfg, 4).unwrap();
        assert_eq!(g.group_count(), 7);
        // Three parallel projections, then everything else has a single
        // same-group peer at most.
        let front: Vec<_> = g.nodes.iter().filter(|n| n.group == 1).collect();
        assert_eq!(front.len(), 3);
        let succ = g.successor_lists();
        // Every non-front node other than the sinks has at least one successor.
        for node in &g.nodes {
            if node.group < 7 {
                assert!(!succ[node.id].is_empty());
            }
        }
    }

    #[test]
    fn projection_op_counts_are_mac_formulas() {
        let cfg = shallow();
        let s = 1usize;
        let g = build_encoder_graph(&cfg, s).unwrap();
        // Fused all-head projection: s · d_model².
        let q = g.node_by_name("attn.q_proj").unwrap();
        assert_eq!(q.profile.n_op, (s * 200 * 200) as u64);
        let qkt = g.node_by_name("attn.head0.qkt").unwrap();
        assert_eq!(qkt.profile.n_op, (s * s * 50) as u64);
        let f1 = g.node_by_name("enc.ffn1").unwrap();
        assert_eq!(f1.profile.n_op, (s * 200 * 800) as u64);
    }

    #[test]
    fn projection_to_head_ratio_near_four_at_model_width() {
        let cfg = shallow();
        let s = cfg.d_model;
        let g = build_encoder_graph(&cfg, s).unwrap();
        let proj = g.node_by_name("attn.q_proj").unwrap().profile.n_op as f64;
        let head = g.node_by_name("attn.head0.qkt").unwrap().profile.n_op as f64;
        let ratio = proj / head;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn decoder_adds_one_attention_block() {
        let cfg = shallow();
        let enc = build_encoder_graph(&cfg, 16).unwrap();
        let dec = build_decoder_graph(&cfg, 16).unwrap();
        // One full attention block = 3 projections + 3 per-head nodes + W^O + add/norm.
        let block = 3 + 3 * cfg.num_heads + 2;
        assert_eq!(dec.nodes.len(), enc.nodes.len() + block);
        assert!(dec.total_ops() > enc.total_ops());
        dec.topo_order().unwrap();
    }

    #[test]
    fn decoder_masks_self_attention_nodes() {
        let dec = build_decoder_graph(&shallow(), 8).unwrap();
        assert!(dec.node_by_name("self.head0.qkt").unwrap().masked);
        assert!(dec.node_by_name("self.head1.softmax").unwrap().masked);
        assert!(!dec.node_by_name("cross.head0.qkt").unwrap().masked);
    }

    #[test]
    fn decoder_rejects_encoder_only_config() {
        let cfg = TransformerConfig {
            structure: Structure::EncoderOnly,
            ..shallow()
        };
        assert!(matches!(
            build_decoder_graph(&cfg, 8),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn bcm_option_moves_fc_nodes_to_fft_pe() {
        let g = build_encoder_graph_with(&shallow(), 8, GraphOptions { bcm_fc: true }).unwrap();
        assert_eq!(
            g.node_by_name("attn.out_proj").unwrap().profile.pe_class,
            PeClass::PeFft
        );
        assert_eq!(
            g.node_by_name("enc.ffn1").unwrap().profile.pe_class,
            PeClass::PeFft
        );
        // Projections stay on the matmul PEs.
        assert_eq!(
            g.node_by_name("attn.q_proj").unwrap().profile.pe_class,
            PeClass::PeA
        );
    }
}
