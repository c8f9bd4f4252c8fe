//! Exchange planning: which peers, how many rounds, who leads.

use crate::error::{Error, Result};
use crate::geometry::{decompose, RankTopology, SimBox, NODE_LAYOUT, RANKS_PER_NODE};

/// Ghost-exchange communication pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Successive +/- shifts along x, y, z, forwarding received atoms.
    ThreeStage,
    /// Direct sends to every rank offset within the layer range.
    P2P,
    /// Node-level sends between leader ranks after intra-node gathering.
    NodeBased,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "three-stage" => Ok(Scheme::ThreeStage),
            "p2p" => Ok(Scheme::P2P),
            "node-based" => Ok(Scheme::NodeBased),
            other => Err(Error::invalid_input(format!(
                "unknown scheme '{other}' (three-stage | p2p | node-based)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ThreeStage => "three-stage",
            Scheme::P2P => "p2p",
            Scheme::NodeBased => "node-based",
        }
    }
}

/// Layer count: how many cells of side `side` are needed to cover `cutoff`.
/// Exact integer quotients stay exact; a sliver of floating noise above an
/// integer does not add a layer.
pub fn layer_count(cutoff: f64, side: f64) -> usize {
    let q = cutoff / side;
    let f = q.floor();
    if q - f < 1e-9 && f >= 1.0 {
        f as usize
    } else {
        q.ceil() as usize
    }
}

fn offsets_within(layers: [usize; 3]) -> Vec<[i32; 3]> {
    let mut v = Vec::new();
    for dz in -(layers[2] as i32)..=layers[2] as i32 {
        for dy in -(layers[1] as i32)..=layers[1] as i32 {
            for dx in -(layers[0] as i32)..=layers[0] as i32 {
                if dx == 0 && dy == 0 && dz == 0 {
                    continue;
                }
                v.push([dx, dy, dz]);
            }
        }
    }
    v
}

/// NUMA indices that act as leaders for a leader count.
pub fn leader_numas(leaders: usize) -> Result<Vec<usize>> {
    match leaders {
        1 => Ok(vec![2]),
        2 => Ok(vec![2, 3]),
        4 => Ok(vec![0, 1, 2, 3]),
        other => Err(Error::Plan(format!("leader count must be 1, 2 or 4, got {other}"))),
    }
}

/// Scheme-specific send schedule.
#[derive(Debug, Clone)]
pub struct CommPlan {
    pub scheme: Scheme,
    /// Leaders per node (NodeBased only; 4 elsewhere for bookkeeping).
    pub leaders: usize,
    /// Rank-level halo layers per dimension.
    pub layers: [usize; 3],
    /// Node-level halo layers per dimension.
    pub node_layers: [usize; 3],
    /// Direct-send offsets per rank (P2P).
    pub rank_offsets: Vec<[i32; 3]>,
    /// Node-level send offsets per node (NodeBased).
    pub node_offsets: Vec<[i32; 3]>,
}

impl CommPlan {
    /// Successive rounds of the 3-stage pattern (2 messages per rank each).
    pub fn rounds(&self) -> usize {
        self.layers.iter().sum()
    }

    pub fn p2p_peer_count(&self) -> usize {
        self.rank_offsets.len()
    }

    pub fn node_peer_count(&self) -> usize {
        self.node_offsets.len()
    }

    /// Messages one rank sends during a forward exchange, by NUMA index.
    pub fn messages_per_rank(&self) -> Result<[usize; RANKS_PER_NODE]> {
        let mut out = [0usize; RANKS_PER_NODE];
        match self.scheme {
            Scheme::ThreeStage => out = [2 * self.rounds(); RANKS_PER_NODE],
            Scheme::P2P => out = [self.rank_offsets.len(); RANKS_PER_NODE],
            Scheme::NodeBased => {
                let numas = leader_numas(self.leaders)?;
                for (i, _) in self.node_offsets.iter().enumerate() {
                    out[numas[i % numas.len()]] += 1;
                }
            }
        }
        Ok(out)
    }

    /// Exact mean messages per rank (the printed averages keep fractions).
    pub fn avg_messages_per_rank(&self) -> Result<f64> {
        let m = self.messages_per_rank()?;
        Ok(m.iter().sum::<usize>() as f64 / RANKS_PER_NODE as f64)
    }

    /// Communication partners per rank, for registration accounting:
    /// distinct sends a rank performs.
    pub fn neighbors_per_rank(&self) -> Result<[usize; RANKS_PER_NODE]> {
        match self.scheme {
            Scheme::ThreeStage => Ok([2 * self.rounds(); RANKS_PER_NODE]),
            Scheme::P2P => Ok([self.rank_offsets.len(); RANKS_PER_NODE]),
            Scheme::NodeBased => self.messages_per_rank(),
        }
    }
}

/// Build the send schedule for a scheme on a decomposed box.
///
/// Sub-box sides must cover the cutoff within at most 3 layers.
pub fn plan_exchange(
    scheme: Scheme,
    topo: &RankTopology,
    sim_box: &SimBox,
    cutoff: f64,
    leaders: usize,
) -> Result<CommPlan> {
    if !(cutoff > 0.0) {
        return Err(Error::Plan(format!("cutoff must be positive, got {cutoff}")));
    }
    leader_numas(leaders)?;
    let subboxes = decompose(sim_box, topo)?;
    let sides = subboxes[0].sides();

    let mut layers = [0usize; 3];
    let mut node_layers = [0usize; 3];
    for d in 0..3 {
        layers[d] = layer_count(cutoff, sides[d]);
        if layers[d] > 3 {
            return Err(Error::Plan(format!(
                "cutoff {cutoff} needs {} layers over sub-box side {} in dim {d}; at most 3 supported",
                layers[d], sides[d]
            )));
        }
        node_layers[d] = layer_count(cutoff, sides[d] * NODE_LAYOUT[d] as f64);
    }

    Ok(CommPlan {
        scheme,
        leaders,
        layers,
        node_layers,
        rank_offsets: offsets_within(layers),
        node_offsets: offsets_within(node_layers),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The three benchmark configurations: sub-box sides as multiples of the
    /// cutoff on the 96-node (4x6x4) cluster.
    fn bench_plan(scheme: Scheme, frac: [f64; 3]) -> CommPlan {
        let rc = 8.0;
        let topo = RankTopology::new([8, 12, 4]).unwrap();
        let sim_box = SimBox::new([
            8.0 * frac[0] * rc,
            12.0 * frac[1] * rc,
            4.0 * frac[2] * rc,
        ])
        .unwrap();
        plan_exchange(scheme, &topo, &sim_box, rc, 4).unwrap()
    }

    #[test]
    fn three_stage_round_counts() {
        assert_eq!(bench_plan(Scheme::ThreeStage, [1.0, 1.0, 1.0]).rounds(), 3);
        assert_eq!(bench_plan(Scheme::ThreeStage, [0.5, 0.5, 1.0]).rounds(), 5);
        assert_eq!(bench_plan(Scheme::ThreeStage, [0.5, 0.5, 0.5]).rounds(), 6);
    }

    #[test]
    fn p2p_peer_counts() {
        assert_eq!(bench_plan(Scheme::P2P, [1.0, 1.0, 1.0]).p2p_peer_count(), 26);
        assert_eq!(bench_plan(Scheme::P2P, [0.5, 0.5, 1.0]).p2p_peer_count(), 74);
        assert_eq!(bench_plan(Scheme::P2P, [0.5, 0.5, 0.5]).p2p_peer_count(), 124);
    }

    #[test]
    fn node_based_peer_counts() {
        assert_eq!(bench_plan(Scheme::NodeBased, [1.0, 1.0, 1.0]).node_peer_count(), 26);
        assert_eq!(bench_plan(Scheme::NodeBased, [0.5, 0.5, 1.0]).node_peer_count(), 26);
        let p = bench_plan(Scheme::NodeBased, [0.5, 0.5, 0.5]);
        assert_eq!(p.node_peer_count(), 44);
        assert_eq!(p.avg_messages_per_rank().unwrap(), 11.0);
        assert_eq!(p.messages_per_rank().unwrap(), [11, 11, 11, 11]);
    }

    #[test]
    fn two_layer_averages_keep_fractions() {
        let p = bench_plan(Scheme::NodeBased, [0.5, 0.5, 1.0]);
        assert_eq!(p.avg_messages_per_rank().unwrap(), 6.5);
        assert_eq!(p.messages_per_rank().unwrap(), [7, 7, 6, 6]);
    }

    #[test]
    fn leader_distribution() {
        let rc = 8.0;
        let topo = RankTopology::new([8, 12, 4]).unwrap();
        let sim_box = SimBox::new([8.0 * rc, 12.0 * rc, 4.0 * rc]).unwrap();
        let single = plan_exchange(Scheme::NodeBased, &topo, &sim_box, rc, 1).unwrap();
        assert_eq!(single.messages_per_rank().unwrap(), [0, 0, 26, 0]);
        let dual = plan_exchange(Scheme::NodeBased, &topo, &sim_box, rc, 2).unwrap();
        assert_eq!(dual.messages_per_rank().unwrap(), [0, 0, 13, 13]);
        assert!(plan_exchange(Scheme::NodeBased, &topo, &sim_box, rc, 3).is_err());
    }

    #[test]
    fn too_deep_halo_is_a_plan_error() {
        let topo = RankTopology::new([8, 8, 8]).unwrap();
        let sim_box = SimBox::new([16.0, 16.0, 16.0]).unwrap();
        // sub-box side 2, cutoff 8 -> 4 layers
        assert!(plan_exchange(Scheme::P2P, &topo, &sim_box, 8.0, 4).is_err());
    }

    #[test]
    fn layer_count_is_robust_to_float_noise() {
        assert_eq!(layer_count(8.0, 4.0), 2);
        assert_eq!(layer_count(8.0 + 1e-12, 4.0), 2);
        assert_eq!(layer_count(8.1, 4.0), 3);
        assert_eq!(layer_count(3.9, 4.0), 1);
    }
}
