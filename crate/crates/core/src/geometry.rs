//! Periodic box, rank/node decomposition and the analytic ghost-count model.

use crate::error::{Error, Result};

pub type RankId = usize;
pub type NodeId = usize;

/// Orthogonal simulation box, periodic in all three dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimBox {
    lengths: [f64; 3],
}

impl SimBox {
    pub fn new(lengths: [f64; 3]) -> Result<Self> {
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid_input(format!(
                "box lengths must be positive and finite, got {lengths:?}"
            )));
        }
        Ok(SimBox { lengths })
    }

    #[inline]
    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn volume(&self) -> f64 {
        self.lengths[0] * self.lengths[1] * self.lengths[2]
    }

    pub fn min_side(&self) -> f64 {
        self.lengths.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Wrap one coordinate into [0, L).
    #[inline]
    pub fn wrap1(&self, dim: usize, x: f64) -> f64 {
        let l = self.lengths[dim];
        let mut w = x % l;
        if w < 0.0 {
            w += l;
        }
        // x % l can return exactly l after the negative adjustment when x is
        // a tiny negative number; fold that back to 0.
        if w >= l {
            w = 0.0;
        }
        w
    }

    /// Wrap a position into [0, L)^3.
    pub fn wrap(&self, p: [f64; 3]) -> [f64; 3] {
        [self.wrap1(0, p[0]), self.wrap1(1, p[1]), self.wrap1(2, p[2])]
    }
}

/// Grid of ranks with four ranks per node arranged (2,2,1) inside the node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankTopology {
    rank_grid: [usize; 3],
    node_layout: [usize; 3],
    node_grid: [usize; 3],
}

pub const RANKS_PER_NODE: usize = 4;
/// Intra-node arrangement of the four ranks; reproduces the node-neighbor
/// counts 26/26/44 for cubic, (1/2,1/2,1) and (1/2,1/2,1/2) sub-boxes.
pub const NODE_LAYOUT: [usize; 3] = [2, 2, 1];

impl RankTopology {
    pub fn new(rank_grid: [usize; 3]) -> Result<Self> {
        if rank_grid.iter().any(|&p| p == 0) {
            return Err(Error::InvalidTopology(format!(
                "rank grid dimensions must be nonzero, got {rank_grid:?}"
            )));
        }
        let node_layout = NODE_LAYOUT;
        let mut node_grid = [0usize; 3];
        for d in 0..3 {
            if rank_grid[d] % node_layout[d] != 0 {
                return Err(Error::InvalidTopology(format!(
                    "rank grid {rank_grid:?} not divisible by node layout {node_layout:?} in dim {d}"
                )));
            }
            node_grid[d] = rank_grid[d] / node_layout[d];
        }
        Ok(RankTopology {
            rank_grid,
            node_layout,
            node_grid,
        })
    }

    #[inline]
    pub fn rank_grid(&self) -> [usize; 3] {
        self.rank_grid
    }

    #[inline]
    pub fn node_grid(&self) -> [usize; 3] {
        self.node_grid
    }

    #[inline]
    pub fn node_layout(&self) -> [usize; 3] {
        self.node_layout
    }

    pub fn n_ranks(&self) -> usize {
        self.rank_grid.iter().product()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_grid.iter().product()
    }

    /// Rank id from grid coordinate, x fastest.
    #[inline]
    pub fn rank_id(&self, coord: [usize; 3]) -> RankId {
        coord[0] + self.rank_grid[0] * (coord[1] + self.rank_grid[1] * coord[2])
    }

    #[inline]
    pub fn rank_coord(&self, rank: RankId) -> [usize; 3] {
        let [px, py, _] = self.rank_grid;
        [rank % px, (rank / px) % py, rank / (px * py)]
    }

    #[inline]
    pub fn node_id(&self, coord: [usize; 3]) -> NodeId {
        coord[0] + self.node_grid[0] * (coord[1] + self.node_grid[1] * coord[2])
    }

    #[inline]
    pub fn node_coord(&self, node: NodeId) -> [usize; 3] {
        let [nx, ny, _] = self.node_grid;
        [node % nx, (node / nx) % ny, node / (nx * ny)]
    }

    pub fn node_of_rank(&self, rank: RankId) -> NodeId {
        let rc = self.rank_coord(rank);
        self.node_id([
            rc[0] / self.node_layout[0],
            rc[1] / self.node_layout[1],
            rc[2] / self.node_layout[2],
        ])
    }

    /// Node-internal index of a rank (its "NUMA id"), 0..4.
    pub fn numa_index(&self, rank: RankId) -> usize {
        let rc = self.rank_coord(rank);
        let ox = rc[0] % self.node_layout[0];
        let oy = rc[1] % self.node_layout[1];
        ox + self.node_layout[0] * oy
    }

    /// The four ranks of a node ordered by NUMA index.
    pub fn ranks_in_node(&self, node: NodeId) -> [RankId; RANKS_PER_NODE] {
        let nc = self.node_coord(node);
        let base = [
            nc[0] * self.node_layout[0],
            nc[1] * self.node_layout[1],
            nc[2] * self.node_layout[2],
        ];
        let mut out = [0; RANKS_PER_NODE];
        for oy in 0..self.node_layout[1] {
            for ox in 0..self.node_layout[0] {
                out[ox + self.node_layout[0] * oy] =
                    self.rank_id([base[0] + ox, base[1] + oy, base[2]]);
            }
        }
        out
    }

    /// Periodic node-grid neighbor; also reports how many box images the
    /// offset wrapped through in each dimension.
    pub fn node_at_offset(&self, node: NodeId, offset: [i32; 3]) -> (NodeId, [i32; 3]) {
        let nc = self.node_coord(node);
        let mut coord = [0usize; 3];
        let mut image = [0i32; 3];
        for d in 0..3 {
            let n = self.node_grid[d] as i32;
            let raw = nc[d] as i32 + offset[d];
            coord[d] = raw.rem_euclid(n) as usize;
            image[d] = raw.div_euclid(n);
        }
        (self.node_id(coord), image)
    }

    /// Periodic rank-grid neighbor with image bookkeeping.
    pub fn rank_at_offset(&self, rank: RankId, offset: [i32; 3]) -> (RankId, [i32; 3]) {
        let rc = self.rank_coord(rank);
        let mut coord = [0usize; 3];
        let mut image = [0i32; 3];
        for d in 0..3 {
            let p = self.rank_grid[d] as i32;
            let raw = rc[d] as i32 + offset[d];
            coord[d] = raw.rem_euclid(p) as usize;
            image[d] = raw.div_euclid(p);
        }
        (self.rank_id(coord), image)
    }
}

/// Axis-aligned region owned by one rank (or one node).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub owner: usize,
}

impl SubBox {
    pub fn sides(&self) -> [f64; 3] {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    /// Half-open containment test: lo <= x < hi per dimension.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|d| p[d] >= self.lo[d] && p[d] < self.hi[d])
    }

    /// Per-dimension overhang of a point outside the region (0 inside).
    pub fn overhang(&self, p: [f64; 3]) -> [f64; 3] {
        let mut o = [0.0; 3];
        for d in 0..3 {
            o[d] = (self.lo[d] - p[d]).max(p[d] - self.hi[d]).max(0.0);
        }
        o
    }

    /// True when the point lies strictly within `cutoff` of the region
    /// (the box expanded by `cutoff` in each direction). A point exactly at
    /// distance `cutoff` from a face is excluded.
    pub fn within_expanded(&self, p: [f64; 3], cutoff: f64) -> bool {
        let o = self.overhang(p);
        (0..3).all(|d| o[d] < cutoff)
    }
}

/// Split coordinate for cell `i` of `p` cells along a side of length `l`.
#[inline]
pub fn split_point(l: f64, p: usize, i: usize) -> f64 {
    i as f64 * l / p as f64
}

/// Tile the box over an arbitrary cell grid with split points at `i*L/p`,
/// x fastest in the output order.
pub fn decompose_grid(sim_box: &SimBox, grid: [usize; 3]) -> Result<Vec<SubBox>> {
    if grid.iter().any(|&p| p == 0) {
        return Err(Error::InvalidTopology(format!(
            "grid dimensions must be nonzero, got {grid:?}"
        )));
    }
    let l = sim_box.lengths();
    let n = grid[0] * grid[1] * grid[2];
    let mut out = Vec::with_capacity(n);
    for cell in 0..n {
        let c = [cell % grid[0], (cell / grid[0]) % grid[1], cell / (grid[0] * grid[1])];
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for d in 0..3 {
            lo[d] = split_point(l[d], grid[d], c[d]);
            hi[d] = split_point(l[d], grid[d], c[d] + 1);
        }
        out.push(SubBox { lo, hi, owner: cell });
    }
    Ok(out)
}

/// Tile the box into one sub-box per rank of the topology.
pub fn decompose(sim_box: &SimBox, topo: &RankTopology) -> Result<Vec<SubBox>> {
    decompose_grid(sim_box, topo.rank_grid())
}

/// Grid cell of a (wrapped) coordinate. A coordinate exactly on a split point
/// belongs to the higher cell.
pub fn locate_cell(position: [f64; 3], sim_box: &SimBox, grid: [usize; 3]) -> Result<[usize; 3]> {
    if position.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid_input(format!(
            "non-finite coordinate in {position:?}"
        )));
    }
    let l = sim_box.lengths();
    let mut coord = [0usize; 3];
    for d in 0..3 {
        let x = sim_box.wrap1(d, position[d]);
        let p = grid[d];
        // floor estimate, then correct against the exact split points so the
        // ==split -> higher-cell convention holds in floating arithmetic
        let mut i = ((x * p as f64 / l[d]).floor() as isize).clamp(0, p as isize - 1) as usize;
        while i + 1 < p && x >= split_point(l[d], p, i + 1) {
            i += 1;
        }
        while i > 0 && x < split_point(l[d], p, i) {
            i -= 1;
        }
        coord[d] = i;
    }
    Ok(coord)
}

/// Owner rank of a (wrapped) position.
pub fn locate_rank(position: [f64; 3], sim_box: &SimBox, topo: &RankTopology) -> Result<RankId> {
    Ok(topo.rank_id(locate_cell(position, sim_box, topo.rank_grid())?))
}

/// Bounding box of a node's four rank sub-boxes.
pub fn node_box(sim_box: &SimBox, topo: &RankTopology, node: NodeId) -> Result<SubBox> {
    if node >= topo.n_nodes() {
        return Err(Error::InvalidTopology(format!(
            "node {node} out of range ({} nodes)",
            topo.n_nodes()
        )));
    }
    let subboxes = decompose(sim_box, topo)?;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for rank in topo.ranks_in_node(node) {
        for d in 0..3 {
            lo[d] = lo[d].min(subboxes[rank].lo[d]);
            hi[d] = hi[d].max(subboxes[rank].hi[d]);
        }
    }
    Ok(SubBox { lo, hi, owner: node })
}

/// Ghost-atom counts predicted by the volume model at unit atom density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhostCounts {
    /// Per-rank ghost count under per-rank halos: (a+2r)^3 - a^3.
    pub nghost_bs: f64,
    /// Per-rank ghost count under node-level replication:
    /// (2a+2r)*(2a+2r)*(a+2r) - a^3.
    pub nghost_lb: f64,
}

impl GhostCounts {
    pub fn ratio(&self) -> f64 {
        self.nghost_lb / self.nghost_bs
    }
}

/// Evaluate the ghost-count model for sub-box side `a` and cutoff `r`.
pub fn ghost_count_model(a: f64, r: f64) -> Result<GhostCounts> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid_input(format!("sub-box side must be positive, got {a}")));
    }
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::invalid_input(format!("cutoff must be nonnegative, got {r}")));
    }
    let bs = (a + 2.0 * r).powi(3) - a.powi(3);
    let lb = (2.0 * a + 2.0 * r) * (2.0 * a + 2.0 * r) * (a + 2.0 * r) - a.powi(3);
    Ok(GhostCounts {
        nghost_bs: bs,
        nghost_lb: lb,
    })
}
