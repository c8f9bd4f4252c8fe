//! Ghost-exchange communication schemes, reverse force reduction, the
//! brute-force ghost oracle, and intra-node load balancing.

pub mod balance;
pub mod exchange;
pub mod plan;
pub mod store;

pub use balance::{balance_report, partition_node_box, sdmr, BalanceReport, SeriesStats};
pub use exchange::{assign_atoms, migrate, oracle_ghosts, ExchangeState};
pub use plan::{layer_count, leader_numas, plan_exchange, CommPlan, Scheme};
pub use store::{
    materialize, AtomStore, RankLocals, FWD_ATOM_BYTES, MIG_ATOM_BYTES, POS_ATOM_BYTES,
    REV_ATOM_BYTES,
};

use crate::error::Result;
use crate::geometry::{SimBox, SubBox};
use crate::neighbor::{build_neighbor_list, AtomKey};
use crate::potential::{evaluate_centers, reduce_contributions, ModelParams};

/// No-decomposition reference: evaluate the whole periodic system in one
/// domain, with ghosts taken from the oracle. Forces are indexed by global
/// id; the reduction order matches the distributed path exactly.
pub struct GlobalReference {
    pub e_total: f64,
    pub energies: Vec<f64>,
    pub forces: Vec<[f64; 3]>,
}

pub fn global_reference(
    positions: &[[f64; 3]],
    types: &[usize],
    sim_box: &SimBox,
    params: &ModelParams,
    rc: f64,
    rcs: f64,
    sel: &[usize],
    ghost_cutoff: f64,
) -> Result<GlobalReference> {
    let n = positions.len();
    let mut locals = RankLocals::default();
    for i in 0..n {
        locals.push(i as u64, types[i], sim_box.wrap(positions[i]), [0.0; 3]);
    }
    locals.sort_by_gid();

    let whole = SubBox {
        lo: [0.0; 3],
        hi: sim_box.lengths(),
        owner: 0,
    };
    let ghost_keys = oracle_ghosts(std::slice::from_ref(&locals), &whole, ghost_cutoff, sim_box);

    let mut pos = locals.positions.clone();
    let mut typ = locals.types.clone();
    let mut keys: Vec<AtomKey> = locals.gids.iter().map(|&g| (g, [0i8; 3])).collect();
    for &(gid, image) in &ghost_keys {
        let slot = gid as usize; // locals sorted by gid == index
        pos.push(materialize(locals.positions[slot], image, sim_box));
        typ.push(locals.types[slot]);
        keys.push((gid, image));
    }

    let centers: Vec<usize> = (0..n).collect();
    let list = build_neighbor_list(&pos, &typ, &keys, &centers, rc, sel)?;
    let out = evaluate_centers(&pos, &typ, &keys, &list, params, rc, rcs, sel)?;

    let mut energies = vec![0.0; n];
    for &(gid, e) in &out.energies {
        energies[gid as usize] = e;
    }
    // route ghost-slot contributions back onto their owners, then reduce in
    // ascending-center order exactly like the distributed reduction
    let contributions: Vec<crate::potential::ForceContribution> = out
        .contributions
        .iter()
        .map(|c| crate::potential::ForceContribution {
            center_gid: c.center_gid,
            target_slot: keys[c.target_slot].0 as usize,
            force: c.force,
        })
        .collect();
    let forces = reduce_contributions(n, &contributions);
    Ok(GlobalReference {
        e_total: energies.iter().sum(),
        energies,
        forces,
    })
}
