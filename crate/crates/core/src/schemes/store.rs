//! Per-rank atom storage with the layered local/ghost layout.

use crate::geometry::{NodeId, RankId, SimBox};
use crate::neighbor::AtomKey;

/// Payload sizes used for byte accounting (position 24B, type 4B, id 8B,
/// image 4B; velocities ride along in migration).
pub const FWD_ATOM_BYTES: u64 = 40;
pub const POS_ATOM_BYTES: u64 = 24;
pub const REV_ATOM_BYTES: u64 = 32;
pub const MIG_ATOM_BYTES: u64 = 64;

/// Atoms a rank owns, kept sorted by global id.
#[derive(Debug, Clone, Default)]
pub struct RankLocals {
    pub gids: Vec<u64>,
    pub types: Vec<usize>,
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
}

impl RankLocals {
    pub fn len(&self) -> usize {
        self.gids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gids.is_empty()
    }

    pub fn push(&mut self, gid: u64, typ: usize, pos: [f64; 3], vel: [f64; 3]) {
        self.gids.push(gid);
        self.types.push(typ);
        self.positions.push(pos);
        self.velocities.push(vel);
    }

    /// Restore the gid-sorted order after migration.
    pub fn sort_by_gid(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| self.gids[i]);
        self.gids = order.iter().map(|&i| self.gids[i]).collect();
        self.types = order.iter().map(|&i| self.types[i]).collect();
        self.positions = order.iter().map(|&i| self.positions[i]).collect();
        self.velocities = order.iter().map(|&i| self.velocities[i]).collect();
    }
}

/// Materialize a periodic copy: source position plus image counts of the box
/// lengths. Every scheme and the oracle use this one formula so copies are
/// bitwise identical everywhere.
#[inline]
pub fn materialize(pos: [f64; 3], image: [i8; 3], sim_box: &SimBox) -> [f64; 3] {
    let l = sim_box.lengths();
    [
        pos[0] + image[0] as f64 * l[0],
        pos[1] + image[1] as f64 * l[1],
        pos[2] + image[2] as f64 * l[2],
    ]
}

/// One rank's working arrays: own locals first, then (in load-balance mode)
/// same-node peers' locals, then per-source-node ghost groups.
#[derive(Debug, Clone, Default)]
pub struct AtomStore {
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
    pub forces: Vec<[f64; 3]>,
    pub types: Vec<usize>,
    pub global_ids: Vec<u64>,
    pub images: Vec<[i8; 3]>,
    /// (owner rank, slot in the owner's locals) per entry.
    pub sources: Vec<(RankId, usize)>,
    /// Own local atom count.
    pub nlocal: usize,
    /// Local atoms of the whole node present in this store (== nlocal when
    /// peers' locals are not replicated).
    pub node_nlocal: usize,
    /// Ghost entries beyond the node-local segment.
    pub node_nghost: usize,
    /// Ghost segment boundaries: (source node, start, end).
    pub ghost_groups: Vec<(NodeId, usize, usize)>,
}

impl AtomStore {
    pub fn len(&self) -> usize {
        self.global_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global_ids.is_empty()
    }

    pub fn keys(&self) -> Vec<AtomKey> {
        self.global_ids
            .iter()
            .zip(&self.images)
            .map(|(&g, &im)| (g, im))
            .collect()
    }

    /// Ghost identities (gid, image) beyond own locals, sorted.
    pub fn ghost_set(&self) -> Vec<AtomKey> {
        let mut v: Vec<AtomKey> = (self.nlocal..self.len())
            .map(|i| (self.global_ids[i], self.images[i]))
            .collect();
        v.sort_unstable();
        v
    }
}
