//! Cell-indexed Verlet neighbor lists with skin distance and per-type
//! classification.
//!
//! Lists are full (every pair appears on both atoms), grouped contiguously by
//! neighbor type, and deterministically ordered by (global id, image) so the
//! downstream environment matrices are bit-reproducible no matter which
//! communication scheme materialized the ghosts.

use crate::error::{Error, Result};

/// Cutoff radii and rebuild cadence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    /// Interaction cutoff (Angstrom).
    pub rc: f64,
    /// Smoothing onset radius, 0 < rcs < rc.
    pub rcs: f64,
    /// Extra list margin allowing several steps between rebuilds.
    pub skin: f64,
    /// Rebuild the lists every this many steps.
    pub rebuild_every: usize,
}

impl CutoffSpec {
    pub fn new(rc: f64, rcs: f64, skin: f64, rebuild_every: usize) -> Result<Self> {
        if !(rcs > 0.0 && rcs < rc) {
            return Err(Error::invalid_input(format!(
                "need 0 < rcs < rc, got rcs={rcs} rc={rc}"
            )));
        }
        if !(skin >= 0.0) {
            return Err(Error::invalid_input(format!("skin must be >= 0, got {skin}")));
        }
        if rebuild_every == 0 {
            return Err(Error::invalid_input("rebuild_every must be >= 1".to_string()));
        }
        Ok(CutoffSpec {
            rc,
            rcs,
            skin,
            rebuild_every,
        })
    }

    /// Neighbor-list (and ghost-exchange) distance: rc + skin.
    #[inline]
    pub fn list_cutoff(&self) -> f64 {
        self.rc + self.skin
    }
}

/// Fixed-cadence rebuild policy.
#[inline]
pub fn needs_rebuild(step: usize, cutoff: &CutoffSpec) -> bool {
    step % cutoff.rebuild_every == 0
}

/// Spatial bucket index over an axis-aligned region.
#[derive(Debug, Clone)]
pub struct CellIndex {
    lo: [f64; 3],
    cell_size: [f64; 3],
    dims: [usize; 3],
    cells: Vec<Vec<usize>>,
}

/// Bucket `positions` into cells of side >= `min_cell` covering [lo, hi].
/// Querying a cell plus its 26 face/edge/corner neighbors covers every point
/// within `min_cell` of anywhere in the cell.
pub fn build_cell_index(
    positions: &[[f64; 3]],
    lo: [f64; 3],
    hi: [f64; 3],
    min_cell: f64,
) -> Result<CellIndex> {
    if !(min_cell > 0.0) {
        return Err(Error::invalid_input(format!(
            "cell size must be positive, got {min_cell}"
        )));
    }
    let mut dims = [1usize; 3];
    let mut cell_size = [min_cell; 3];
    for d in 0..3 {
        let extent = (hi[d] - lo[d]).max(0.0);
        dims[d] = ((extent / min_cell).floor() as usize).max(1);
        cell_size[d] = if extent > 0.0 { extent / dims[d] as f64 } else { min_cell };
    }
    let mut index = CellIndex {
        lo,
        cell_size,
        dims,
        cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
    };
    for (slot, p) in positions.iter().enumerate() {
        let id = index.cell_id(index.cell_coord(*p));
        index.cells[id].push(slot);
    }
    Ok(index)
}

impl CellIndex {
    #[inline]
    fn cell_coord(&self, p: [f64; 3]) -> [usize; 3] {
        let mut c = [0usize; 3];
        for d in 0..3 {
            let i = ((p[d] - self.lo[d]) / self.cell_size[d]).floor() as isize;
            c[d] = i.clamp(0, self.dims[d] as isize - 1) as usize;
        }
        c
    }

    #[inline]
    fn cell_id(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_members(&self, id: usize) -> &[usize] {
        &self.cells[id]
    }

    /// All slots in the cell containing `p` and its up-to-26 surrounding
    /// cells (the region is not periodic; edges clamp).
    pub fn candidates(&self, p: [f64; 3], out: &mut Vec<usize>) {
        out.clear();
        let c = self.cell_coord(p);
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let nx = c[0] as i64 + dx;
                    let ny = c[1] as i64 + dy;
                    let nz = c[2] as i64 + dz;
                    if nx < 0
                        || ny < 0
                        || nz < 0
                        || nx >= self.dims[0] as i64
                        || ny >= self.dims[1] as i64
                        || nz >= self.dims[2] as i64
                    {
                        continue;
                    }
                    out.extend_from_slice(
                        &self.cells[self.cell_id([nx as usize, ny as usize, nz as usize])],
                    );
                }
            }
        }
    }

    /// Union of all cell contents (for set-equality checks).
    pub fn all_members(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }
}

/// Identity of an atom copy: (global id, periodic image). Orders ghost
/// duplicates of the same source atom deterministically.
pub type AtomKey = (u64, [i8; 3]);

/// Full neighbor list for a set of center atoms.
#[derive(Debug, Clone)]
pub struct NeighborList {
    sel: Vec<usize>,
    centers: Vec<usize>,
    /// groups[center][type] = store slots sorted by (gid, image).
    groups: Vec<Vec<Vec<usize>>>,
}

impl NeighborList {
    pub fn sel(&self) -> &[usize] {
        &self.sel
    }

    pub fn n_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn center_slot(&self, ordinal: usize) -> usize {
        self.centers[ordinal]
    }

    /// Neighbor slots of one center, grouped by type.
    pub fn type_groups(&self, ordinal: usize) -> &[Vec<usize>] {
        &self.groups[ordinal]
    }

    pub fn neighbor_count(&self, ordinal: usize) -> usize {
        self.groups[ordinal].iter().map(Vec::len).sum()
    }

    /// Padded row count of the environment matrix: sum of sel capacities.
    pub fn padded_rows(&self) -> usize {
        self.sel.iter().sum()
    }
}

/// Build the neighbor list for `centers` over a shared pool of atom slots.
///
/// `keys` gives each slot's (global id, image); a slot never lists itself.
/// Exceeding a type's sel capacity is a hard error naming the center.
pub fn build_neighbor_list(
    positions: &[[f64; 3]],
    types: &[usize],
    keys: &[AtomKey],
    centers: &[usize],
    cutoff_dist: f64,
    sel: &[usize],
) -> Result<NeighborList> {
    if positions.len() != types.len() || positions.len() != keys.len() {
        return Err(Error::Dimension(format!(
            "positions/types/keys lengths differ: {}/{}/{}",
            positions.len(),
            types.len(),
            keys.len()
        )));
    }
    if let Some(&t) = types.iter().find(|&&t| t >= sel.len()) {
        return Err(Error::invalid_input(format!(
            "atom type {t} out of range for {} sel entries",
            sel.len()
        )));
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    if positions.is_empty() {
        lo = [0.0; 3];
        hi = [0.0; 3];
    }

    let index = build_cell_index(positions, lo, hi, cutoff_dist)?;
    let cut2 = cutoff_dist * cutoff_dist;

    let mut groups = Vec::with_capacity(centers.len());
    let mut candidates = Vec::new();
    for &center in centers {
        let cp = positions[center];
        index.candidates(cp, &mut candidates);
        let mut per_type: Vec<Vec<usize>> = vec![Vec::new(); sel.len()];
        for &slot in &candidates {
            if slot == center {
                continue;
            }
            let q = positions[slot];
            let dx = q[0] - cp[0];
            let dy = q[1] - cp[1];
            let dz = q[2] - cp[2];
            if dx * dx + dy * dy + dz * dz < cut2 {
                per_type[types[slot]].push(slot);
            }
        }
        for (t, group) in per_type.iter_mut().enumerate() {
            group.sort_unstable_by_key(|&s| keys[s]);
            if group.len() > sel[t] {
                return Err(Error::CapacityExceeded {
                    atom: center,
                    neighbor_type: t,
                    count: group.len(),
                    sel: sel[t],
                });
            }
        }
        groups.push(per_type);
    }

    Ok(NeighborList {
        sel: sel.to_vec(),
        centers: centers.to_vec(),
        groups,
    })
}

/// O(N^2) reference pair scan; the oracle the cell-list build is tested
/// against.
pub fn brute_force_neighbors(
    positions: &[[f64; 3]],
    centers: &[usize],
    cutoff_dist: f64,
) -> Vec<Vec<usize>> {
    let cut2 = cutoff_dist * cutoff_dist;
    centers
        .iter()
        .map(|&c| {
            let cp = positions[c];
            let mut v: Vec<usize> = (0..positions.len())
                .filter(|&j| {
                    if j == c {
                        return false;
                    }
                    let q = positions[j];
                    let dx = q[0] - cp[0];
                    let dy = q[1] - cp[1];
                    let dz = q[2] - cp[2];
                    dx * dx + dy * dy + dz * dz < cut2
                })
                .collect();
            v.sort_unstable();
            v
        })
        .collect()
}
