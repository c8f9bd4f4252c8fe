//! In-process virtual cluster: nodes of four ranks on a periodic 3D torus,
//! an intra-node copy channel, per-node injection channels for inter-node
//! sends, and message/byte/registration accounting with virtual-time
//! estimation.
//!
//! The cost model is linear: a message of `b` bytes costs
//! `alpha + beta * b` on its channel. Each node owns `tni_per_node`
//! injection channels; its outgoing messages are assigned round-robin and
//! serialize per channel. Intra-node copies serialize per ordered rank pair.
//! A phase's virtual time is the slowest node's copy time plus send time.

use crate::error::{Error, Result};
use crate::geometry::{RankId, RankTopology};

/// Link and channel parameters, microseconds and bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    /// Per-message inter-node latency (us).
    pub alpha_net: f64,
    /// Inter-node per-byte cost (us/B).
    pub beta_net: f64,
    /// Per-copy intra-node latency (us).
    pub alpha_noc: f64,
    /// Intra-node per-byte cost (us/B).
    pub beta_noc: f64,
    /// Injection channels per node.
    pub tni_per_node: usize,
    /// Communication threads each leader rank may bind (bookkeeping only).
    pub comm_threads_per_leader: usize,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            alpha_net: 0.49,
            beta_net: 1.0 / 6800.0,
            alpha_noc: 0.2,
            beta_noc: 1.0 / 100_000.0,
            tni_per_node: 6,
            comm_threads_per_leader: 6,
        }
    }
}

impl CostModel {
    /// All-zero cost coefficients; counters still accumulate.
    pub fn zero() -> Self {
        CostModel {
            alpha_net: 0.0,
            beta_net: 0.0,
            alpha_noc: 0.0,
            beta_noc: 0.0,
            ..CostModel::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_net < 0.0 || self.beta_net < 0.0 || self.alpha_noc < 0.0 || self.beta_noc < 0.0
        {
            return Err(Error::invalid_input("cost coefficients must be nonnegative"));
        }
        if self.tni_per_node == 0 {
            return Err(Error::invalid_input("tni_per_node must be >= 1"));
        }
        Ok(())
    }
}

/// Communication phase a message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    ForwardGhost,
    ReverseForce,
    Migration,
}

/// One rank-to-rank transfer. Same-node endpoints are accounted as
/// intra-node copies; different nodes go through the injection channels.
#[derive(Debug, Clone, Copy)]
pub struct Message {
    pub src: RankId,
    pub dst: RankId,
    pub bytes: u64,
    pub phase: Phase,
}

/// Explicit intra-node copy (gather/scatter legs of the node-based scheme).
#[derive(Debug, Clone, Copy)]
pub struct CopyRecord {
    pub src: RankId,
    pub dst: RankId,
    pub bytes: u64,
}

/// Buffer registration policy for the RDMA-analogue accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegistrationPolicy {
    /// One pooled region per rank regardless of neighbor count.
    Pooled,
    /// A send and a receive buffer per neighbor.
    PerNeighbor,
}

/// Cumulative counters and virtual time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimMetrics {
    /// Inter-node messages sent.
    pub messages: u64,
    /// Intra-node copies (including same-node rank messages).
    pub copies: u64,
    /// Bytes over inter-node links.
    pub net_bytes: u64,
    /// Bytes over the intra-node channel.
    pub noc_bytes: u64,
    /// Registered memory regions, summed over ranks.
    pub registered_regions: u64,
    /// Accumulated virtual time (us).
    pub virtual_time_us: f64,
    /// Per-rank accumulated phase times (us).
    pub per_rank_time_us: Vec<f64>,
}

impl SimMetrics {
    fn new(n_ranks: usize) -> Self {
        SimMetrics {
            per_rank_time_us: vec![0.0; n_ranks],
            ..SimMetrics::default()
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.net_bytes + self.noc_bytes
    }

    pub fn absorb(&mut self, delta: &SimMetrics) {
        self.messages += delta.messages;
        self.copies += delta.copies;
        self.net_bytes += delta.net_bytes;
        self.noc_bytes += delta.noc_bytes;
        self.registered_regions += delta.registered_regions;
        self.virtual_time_us += delta.virtual_time_us;
        for (a, b) in self.per_rank_time_us.iter_mut().zip(&delta.per_rank_time_us) {
            *a += b;
        }
    }
}

/// The virtual cluster: topology, cost model, cumulative metrics.
#[derive(Debug, Clone)]
pub struct Cluster {
    topo: RankTopology,
    cost: CostModel,
    metrics: SimMetrics,
}

/// Arrange the topology's nodes on a periodic 3D torus with zeroed counters.
pub fn build_cluster(topo: RankTopology, cost: CostModel) -> Result<Cluster> {
    cost.validate()?;
    Ok(Cluster {
        metrics: SimMetrics::new(topo.n_ranks()),
        topo,
        cost,
    })
}

impl Cluster {
    pub fn topology(&self) -> &RankTopology {
        &self.topo
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn metrics(&self) -> &SimMetrics {
        &self.metrics
    }

    pub fn n_nodes(&self) -> usize {
        self.topo.n_nodes()
    }

    pub fn n_ranks(&self) -> usize {
        self.topo.n_ranks()
    }

    /// Execute one communication phase: validate endpoints, account every
    /// message and copy exactly once, and advance virtual time by the
    /// slowest node. Returns the per-phase delta.
    pub fn simulate_phase(
        &mut self,
        messages: &[Message],
        copies: &[CopyRecord],
    ) -> Result<SimMetrics> {
        let n_nodes = self.topo.n_nodes();
        let n_ranks = self.topo.n_ranks();
        let mut delta = SimMetrics::new(n_ranks);

        // per node: copy lanes keyed by ordered (src, dst) rank pair
        let mut copy_lanes: Vec<std::collections::BTreeMap<(RankId, RankId), f64>> =
            vec![std::collections::BTreeMap::new(); n_nodes];
        // per node: send channels, round-robin in input order
        let mut channels: Vec<Vec<f64>> = vec![vec![0.0; self.cost.tni_per_node]; n_nodes];
        let mut next_channel = vec![0usize; n_nodes];

        let add_copy = |delta: &mut SimMetrics,
                            lanes: &mut [std::collections::BTreeMap<(RankId, RankId), f64>],
                            src: RankId,
                            dst: RankId,
                            bytes: u64|
         -> Result<()> {
            let node = self.topo.node_of_rank(src);
            if self.topo.node_of_rank(dst) != node {
                return Err(Error::Consistency(format!("copy {src}->{dst} crosses nodes")));
            }
            let t = self.cost.alpha_noc + self.cost.beta_noc * bytes as f64;
            *lanes[node].entry((src, dst)).or_insert(0.0) += t;
            delta.copies += 1;
            delta.noc_bytes += bytes;
            Ok(())
        };

        for m in messages {
            if m.src == m.dst {
                return Err(Error::Consistency(format!("message to self on rank {}", m.src)));
            }
            if m.src >= n_ranks || m.dst >= n_ranks {
                return Err(Error::Consistency(format!(
                    "message endpoint out of range: {} -> {}",
                    m.src, m.dst
                )));
            }
            let src_node = self.topo.node_of_rank(m.src);
            let dst_node = self.topo.node_of_rank(m.dst);
            if src_node == dst_node {
                add_copy(&mut delta, &mut copy_lanes, m.src, m.dst, m.bytes)?;
            } else {
                let ch = next_channel[src_node];
                next_channel[src_node] = (ch + 1) % self.cost.tni_per_node;
                channels[src_node][ch] += self.cost.alpha_net + self.cost.beta_net * m.bytes as f64;
                delta.messages += 1;
                delta.net_bytes += m.bytes;
            }
        }

        for c in copies {
            if c.src == c.dst {
                return Err(Error::Consistency(format!("copy to self on rank {}", c.src)));
            }
            add_copy(&mut delta, &mut copy_lanes, c.src, c.dst, c.bytes)?;
        }

        let mut phase_time = 0.0f64;
        let mut node_time = vec![0.0f64; n_nodes];
        for node in 0..n_nodes {
            let copy_time = copy_lanes[node].values().cloned().fold(0.0f64, f64::max);
            let send_time = channels[node].iter().cloned().fold(0.0f64, f64::max);
            node_time[node] = copy_time + send_time;
            phase_time = phase_time.max(node_time[node]);
        }
        delta.virtual_time_us = phase_time;
        for rank in 0..n_ranks {
            delta.per_rank_time_us[rank] = node_time[self.topo.node_of_rank(rank)];
        }

        self.metrics.absorb(&delta);
        Ok(delta)
    }

    /// Registered-region count per rank under a policy, given each rank's
    /// neighbor count; the pooled policy registers one region regardless.
    pub fn register_regions(
        &mut self,
        per_rank_neighbors: &[usize],
        policy: RegistrationPolicy,
    ) -> Vec<usize> {
        let counts: Vec<usize> = per_rank_neighbors
            .iter()
            .map(|&n| match policy {
                RegistrationPolicy::Pooled => 1,
                RegistrationPolicy::PerNeighbor => 2 * n,
            })
            .collect();
        self.metrics.registered_regions = counts.iter().map(|&c| c as u64).sum();
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(grid: [usize; 3]) -> Cluster {
        build_cluster(RankTopology::new(grid).unwrap(), CostModel::default()).unwrap()
    }

    fn msg(src: RankId, dst: RankId, bytes: u64) -> Message {
        Message {
            src,
            dst,
            bytes,
            phase: Phase::ForwardGhost,
        }
    }

    #[test]
    fn single_node_cluster() {
        let c = cluster([2, 2, 1]);
        assert_eq!(c.n_nodes(), 1);
        assert_eq!(c.n_ranks(), 4);
    }

    #[test]
    fn paper_scale_cluster() {
        let c = cluster([8, 12, 8]);
        assert_eq!(c.topology().node_grid(), [4, 6, 8]);
        assert_eq!(c.n_ranks(), 768);
    }

    #[test]
    fn bench_topology_is_96_nodes() {
        let c = cluster([8, 12, 4]);
        assert_eq!(c.topology().node_grid(), [4, 6, 4]);
        assert_eq!(c.n_nodes(), 96);
        assert_eq!(c.n_ranks(), 384);
    }

    #[test]
    fn one_message_costs_alpha_plus_beta() {
        let mut c = cluster([4, 2, 1]);
        let bytes = 6800;
        let d = c.simulate_phase(&[msg(0, 2, bytes)], &[]).unwrap();
        let cm = CostModel::default();
        let expect = cm.alpha_net + cm.beta_net * bytes as f64;
        assert_eq!(d.virtual_time_us, expect);
        assert_eq!(d.messages, 1);
        assert_eq!(d.net_bytes, bytes);
    }

    #[test]
    fn six_equal_messages_run_fully_parallel() {
        let mut c = cluster([4, 2, 1]);
        let s = 1000u64;
        let msgs: Vec<Message> = (0..6).map(|_| msg(0, 2, s)).collect();
        let d = c.simulate_phase(&msgs, &[]).unwrap();
        let cm = CostModel::default();
        assert_eq!(d.virtual_time_us, cm.alpha_net + cm.beta_net * s as f64);
    }

    #[test]
    fn seventh_message_serializes_on_a_channel() {
        let mut c = cluster([4, 2, 1]);
        let s = 1000u64;
        let msgs: Vec<Message> = (0..7).map(|_| msg(0, 2, s)).collect();
        let d = c.simulate_phase(&msgs, &[]).unwrap();
        let cm = CostModel::default();
        let one = cm.alpha_net + cm.beta_net * s as f64;
        assert!((d.virtual_time_us - 2.0 * one).abs() < 1e-12);
    }

    #[test]
    fn same_node_messages_become_copies() {
        let mut c = cluster([2, 2, 1]);
        let d = c.simulate_phase(&[msg(0, 1, 100)], &[]).unwrap();
        assert_eq!(d.messages, 0);
        assert_eq!(d.copies, 1);
        assert_eq!(d.noc_bytes, 100);
    }

    #[test]
    fn self_message_rejected() {
        let mut c = cluster([2, 2, 1]);
        assert!(c.simulate_phase(&[msg(1, 1, 8)], &[]).is_err());
    }

    #[test]
    fn zero_cost_model_zeroes_time_not_counters() {
        let mut c =
            build_cluster(RankTopology::new([4, 2, 1]).unwrap(), CostModel::zero()).unwrap();
        let copies = [CopyRecord {
            src: 0,
            dst: 1,
            bytes: 64,
        }];
        let d = c
            .simulate_phase(&[msg(0, 2, 100), msg(2, 0, 50)], &copies)
            .unwrap();
        assert_eq!(d.virtual_time_us, 0.0);
        assert_eq!(d.messages, 2);
        assert_eq!(d.copies, 1);
        assert_eq!(d.net_bytes, 150);
        assert_eq!(d.noc_bytes, 64);
    }

    #[test]
    fn determinism_and_monotonicity() {
        let msgs: Vec<Message> = (0..13).map(|i| msg(0, 2, 100 + i)).collect();
        let mut c1 = cluster([4, 2, 1]);
        let d1 = c1.simulate_phase(&msgs, &[]).unwrap();
        let mut c2 = cluster([4, 2, 1]);
        let d2 = c2.simulate_phase(&msgs, &[]).unwrap();
        assert_eq!(d1, d2);

        let mut c3 = cluster([4, 2, 1]);
        let more: Vec<Message> = msgs.iter().cloned().chain([msg(0, 2, 10)]).collect();
        let d3 = c3.simulate_phase(&more, &[]).unwrap();
        assert!(d3.virtual_time_us >= d1.virtual_time_us);
    }

    #[test]
    fn virtual_time_bounds_single_message_cost() {
        let mut c = cluster([4, 2, 1]);
        // ranks 0 and 6 sit on different nodes of the (2,1,1) node grid
        let msgs = [msg(0, 2, 5000), msg(0, 6, 100), msg(6, 0, 20000)];
        let d = c.simulate_phase(&msgs, &[]).unwrap();
        let cm = CostModel::default();
        let max_single = cm.alpha_net + cm.beta_net * 20000.0;
        assert!(d.virtual_time_us >= max_single);
    }

    #[test]
    fn conservation_bytes_in_equal_bytes_out() {
        let mut c = cluster([4, 2, 1]);
        // all pairs cross the node boundary of the (2,1,1) node grid
        let msgs = [msg(0, 2, 100), msg(2, 4, 300), msg(6, 1, 50)];
        let d = c.simulate_phase(&msgs, &[]).unwrap();
        let sent: u64 = msgs.iter().map(|m| m.bytes).sum();
        assert_eq!(d.net_bytes, sent);
        assert_eq!(d.messages as usize, msgs.len());
    }

    #[test]
    fn registration_policies() {
        let mut c = cluster([2, 2, 1]);
        assert_eq!(
            c.register_regions(&[26, 26, 26, 26], RegistrationPolicy::Pooled),
            vec![1, 1, 1, 1]
        );
        assert_eq!(
            c.register_regions(&[26, 124, 0, 7], RegistrationPolicy::PerNeighbor),
            vec![52, 248, 0, 14]
        );
    }
}
