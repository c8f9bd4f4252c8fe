//! Execution of the ghost-exchange schemes over the virtual cluster.
//!
//! All three schemes materialize exactly the same ghost sets (the brute-force
//! oracle's), differing only in who sends what to whom. Ghost copies are
//! identified by (global id, image) and their positions come from one shared
//! materialization formula, so downstream physics is bitwise identical across
//! schemes. Message and copy records from the rebuild exchange are kept and
//! replayed for per-step position refreshes and reverse force reductions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{
    decompose, locate_rank, node_box, RankId, RankTopology, SimBox, SubBox, RANKS_PER_NODE,
};
use crate::netsim::{Cluster, CopyRecord, Message, Phase, SimMetrics};
use crate::potential::ForceContribution;
use crate::schemes::plan::{leader_numas, CommPlan, Scheme};
use crate::schemes::store::{
    materialize, AtomStore, RankLocals, FWD_ATOM_BYTES, MIG_ATOM_BYTES, POS_ATOM_BYTES,
    REV_ATOM_BYTES,
};

/// An atom copy in flight: identity, provenance, periodic image and the
/// materialized position.
#[derive(Debug, Clone, Copy)]
struct Entry {
    gid: u64,
    owner: RankId,
    owner_slot: usize,
    image: [i8; 3],
    typ: usize,
    /// Owner's (wrapped) position; `pos` is derived from it.
    src_pos: [f64; 3],
    pos: [f64; 3],
}

impl Entry {
    fn local(gid: u64, owner: RankId, slot: usize, typ: usize, pos: [f64; 3]) -> Self {
        Entry {
            gid,
            owner,
            owner_slot: slot,
            image: [0, 0, 0],
            typ,
            src_pos: pos,
            pos,
        }
    }

    /// Re-image the copy along one dimension (rank-grid wrap `w`).
    fn shifted(&self, sim_box: &SimBox, dim: usize, w: i32) -> Self {
        let mut image = self.image;
        image[dim] -= w as i8;
        Entry {
            image,
            pos: materialize(self.src_pos, image, sim_box),
            ..*self
        }
    }

    /// The copy as seen from a grid location `w` box-images away.
    fn reimaged(&self, sim_box: &SimBox, w: [i32; 3]) -> Self {
        let image = [
            self.image[0] - w[0] as i8,
            self.image[1] - w[1] as i8,
            self.image[2] - w[2] as i8,
        ];
        Entry {
            image,
            pos: materialize(self.src_pos, image, sim_box),
            ..*self
        }
    }
}

/// (src rank, dst rank, entry count); kept from the rebuild exchange and
/// replayed for refresh/reverse accounting.
type TransferRec = (RankId, RankId, usize);

/// Ghost entries a rank ends up with, split into replicated same-node peer
/// locals (load-balance mode) and true ghosts.
#[derive(Debug, Clone, Default)]
struct RankGhosts {
    peers: Vec<Entry>,
    ghosts: Vec<Entry>,
}

/// A materialized exchange: per-rank stores plus the transfer schedule.
#[derive(Debug, Clone)]
pub struct ExchangeState {
    pub plan: CommPlan,
    pub load_balance: bool,
    pub sim_box: SimBox,
    pub topo: RankTopology,
    pub subboxes: Vec<SubBox>,
    pub cutoff: f64,
    pub stores: Vec<AtomStore>,
    fwd_msgs: Vec<TransferRec>,
    fwd_copies: Vec<TransferRec>,
}

fn locals_as_entries(locals: &[RankLocals]) -> Vec<Vec<Entry>> {
    locals
        .iter()
        .enumerate()
        .map(|(rank, l)| {
            (0..l.len())
                .map(|i| Entry::local(l.gids[i], rank, i, l.types[i], l.positions[i]))
                .collect()
        })
        .collect()
}

/// Successive +/- shifts per dimension, forwarding the previous round's
/// arrivals (bucket brigade). Two messages per rank per round.
fn exchange_three_stage(
    topo: &RankTopology,
    sim_box: &SimBox,
    subboxes: &[SubBox],
    locals: &[RankLocals],
    cutoff: f64,
    layers: [usize; 3],
) -> (Vec<RankGhosts>, Vec<TransferRec>) {
    let n = topo.n_ranks();
    let mut held = locals_as_entries(locals);
    let nlocal: Vec<usize> = locals.iter().map(RankLocals::len).collect();
    let mut msgs = Vec::new();

    for dim in 0..3 {
        let mut wave_up: Vec<Vec<Entry>> = held.clone();
        let mut wave_down: Vec<Vec<Entry>> = held.clone();
        for _round in 0..layers[dim] {
            let mut recv_up: Vec<Vec<Entry>> = vec![Vec::new(); n];
            let mut recv_down: Vec<Vec<Entry>> = vec![Vec::new(); n];
            for rank in 0..n {
                let mut off = [0i32; 3];
                off[dim] = 1;
                let (dst, w) = topo.rank_at_offset(rank, off);
                let floor = subboxes[rank].hi[dim] - cutoff;
                let send: Vec<Entry> = wave_up[rank]
                    .iter()
                    .filter(|e| e.pos[dim] > floor)
                    .map(|e| e.shifted(sim_box, dim, w[dim]))
                    .collect();
                if dst != rank {
                    msgs.push((rank, dst, send.len()));
                }
                recv_up[dst].extend(send);

                off[dim] = -1;
                let (dst, w) = topo.rank_at_offset(rank, off);
                let ceiling = subboxes[rank].lo[dim] + cutoff;
                let send: Vec<Entry> = wave_down[rank]
                    .iter()
                    .filter(|e| e.pos[dim] < ceiling)
                    .map(|e| e.shifted(sim_box, dim, w[dim]))
                    .collect();
                if dst != rank {
                    msgs.push((rank, dst, send.len()));
                }
                recv_down[dst].extend(send);
            }
            for rank in 0..n {
                held[rank].extend(recv_up[rank].iter().cloned());
                held[rank].extend(recv_down[rank].iter().cloned());
            }
            wave_up = recv_up;
            wave_down = recv_down;
        }
    }

    let ghosts = held
        .into_iter()
        .enumerate()
        .map(|(rank, entries)| RankGhosts {
            peers: Vec::new(),
            ghosts: entries.into_iter().skip(nlocal[rank]).collect(),
        })
        .collect();
    (ghosts, msgs)
}

/// Direct sends to every rank offset within the layer range. A wrapped
/// offset landing back on the sender is a local image copy, not a message.
fn exchange_p2p(
    topo: &RankTopology,
    sim_box: &SimBox,
    subboxes: &[SubBox],
    locals: &[RankLocals],
    cutoff: f64,
    offsets: &[[i32; 3]],
) -> (Vec<RankGhosts>, Vec<TransferRec>) {
    let n = topo.n_ranks();
    let entries = locals_as_entries(locals);
    let mut ghosts: Vec<Vec<Entry>> = vec![Vec::new(); n];
    let mut msgs = Vec::new();

    for rank in 0..n {
        for off in offsets {
            let (dst, w) = topo.rank_at_offset(rank, *off);
            let halo = &subboxes[dst];
            let send: Vec<Entry> = entries[rank]
                .iter()
                .map(|e| e.reimaged(sim_box, w))
                .filter(|e| halo.within_expanded(e.pos, cutoff) && !halo.contains(e.pos))
                .collect();
            if dst != rank {
                msgs.push((rank, dst, send.len()));
            }
            ghosts[dst].extend(send);
        }
    }

    (
        ghosts
            .into_iter()
            .map(|g| RankGhosts {
                peers: Vec::new(),
                ghosts: g,
            })
            .collect(),
        msgs,
    )
}

/// Node-level exchange: gather locals to the leaders, one message per
/// neighboring node offset (split across leaders, same-NUMA pairing), then
/// scatter to the members.
#[allow(clippy::too_many_arguments)]
fn exchange_node_based(
    topo: &RankTopology,
    sim_box: &SimBox,
    subboxes: &[SubBox],
    locals: &[RankLocals],
    cutoff: f64,
    node_offsets: &[[i32; 3]],
    leaders: usize,
    load_balance: bool,
) -> Result<(Vec<RankGhosts>, Vec<TransferRec>, Vec<TransferRec>)> {
    let n_nodes = topo.n_nodes();
    let numas = leader_numas(leaders)?;
    let mut msgs = Vec::new();
    let mut copies = Vec::new();

    // node pools: members in NUMA order, locals gid-ascending within each
    let mut pool: Vec<Vec<Entry>> = Vec::with_capacity(n_nodes);
    let mut node_boxes = Vec::with_capacity(n_nodes);
    for node in 0..n_nodes {
        let mut p = Vec::new();
        for rank in topo.ranks_in_node(node) {
            let l = &locals[rank];
            for i in 0..l.len() {
                p.push(Entry::local(l.gids[i], rank, i, l.types[i], l.positions[i]));
            }
        }
        pool.push(p);
        node_boxes.push(node_box(sim_box, topo, node)?);
    }

    // gather: every member copies its locals to every leader
    for node in 0..n_nodes {
        let members = topo.ranks_in_node(node);
        for &member in &members {
            for &ln in &numas {
                let leader = members[ln];
                if leader != member {
                    copies.push((member, leader, locals[member].len()));
                }
            }
        }
    }

    // inter-node sends; arrivals tagged with the receiving NUMA slot
    let mut received: Vec<Vec<(usize, Entry)>> = vec![Vec::new(); n_nodes];
    for node in 0..n_nodes {
        for (i, off) in node_offsets.iter().enumerate() {
            let (dst_node, w) = topo.node_at_offset(node, *off);
            let numa = numas[i % numas.len()];
            let src_rank = topo.ranks_in_node(node)[numa];
            let dst_rank = topo.ranks_in_node(dst_node)[numa];
            let halo = &node_boxes[dst_node];
            let send: Vec<Entry> = pool[node]
                .iter()
                .map(|e| e.reimaged(sim_box, w))
                .filter(|e| halo.within_expanded(e.pos, cutoff) && !halo.contains(e.pos))
                .collect();
            if src_rank != dst_rank {
                msgs.push((src_rank, dst_rank, send.len()));
            }
            received[dst_node].extend(send.into_iter().map(|e| (numa, e)));
        }
    }

    // scatter + final per-rank sets
    let mut out: Vec<RankGhosts> = vec![RankGhosts::default(); topo.n_ranks()];
    for node in 0..n_nodes {
        let members = topo.ranks_in_node(node);
        let mut rec_by_leader: BTreeMap<usize, usize> = BTreeMap::new();
        for (numa, _) in &received[node] {
            *rec_by_leader.entry(*numa).or_insert(0) += 1;
        }

        for (mi, &member) in members.iter().enumerate() {
            let rg = &mut out[member];
            if load_balance {
                for (pi, &peer) in members.iter().enumerate() {
                    if pi == mi {
                        continue;
                    }
                    let l = &locals[peer];
                    for i in 0..l.len() {
                        rg.peers
                            .push(Entry::local(l.gids[i], peer, i, l.types[i], l.positions[i]));
                    }
                }
                rg.ghosts = received[node].iter().map(|(_, e)| *e).collect();
            } else {
                let own_box = &subboxes[member];
                let candidates = pool[node]
                    .iter()
                    .copied()
                    .chain(received[node].iter().map(|(_, e)| *e));
                rg.ghosts = candidates
                    .filter(|e| {
                        (e.owner != member || e.image != [0, 0, 0])
                            && own_box.within_expanded(e.pos, cutoff)
                            && !(e.image == [0, 0, 0] && own_box.contains(e.pos))
                    })
                    .collect();
            }
        }

        // scatter copies: each leader forwards its received share to every
        // other member; the first leader additionally supplies workers with
        // the node pool they did not gather
        for &ln in &numas {
            let leader = members[ln];
            let share = rec_by_leader.get(&ln).copied().unwrap_or(0);
            for (mi, &member) in members.iter().enumerate() {
                if member == leader {
                    continue;
                }
                let mut count = if load_balance {
                    share
                } else {
                    // only what lands in the member's halo
                    received[node]
                        .iter()
                        .filter(|(numa, e)| {
                            *numa == ln
                                && subboxes[member].within_expanded(e.pos, cutoff)
                                && !subboxes[member].contains(e.pos)
                        })
                        .count()
                };
                let member_is_worker = !numas.contains(&mi);
                if member_is_worker && ln == numas[0] {
                    let pool_for_member = pool[node].iter().filter(|e| e.owner != member);
                    if load_balance {
                        count += pool_for_member.count();
                    } else {
                        count += pool_for_member
                            .filter(|e| {
                                subboxes[member].within_expanded(e.pos, cutoff)
                                    && !subboxes[member].contains(e.pos)
                            })
                            .count();
                    }
                }
                copies.push((leader, member, count));
            }
        }
    }

    Ok((out, msgs, copies))
}

/// Assemble a rank's store: own locals, replicated peer locals, then ghosts
/// grouped by source node.
fn build_store(
    rank: RankId,
    locals: &[RankLocals],
    mut rg: RankGhosts,
    topo: &RankTopology,
) -> AtomStore {
    let own = &locals[rank];
    let mut store = AtomStore::default();
    for i in 0..own.len() {
        store.positions.push(own.positions[i]);
        store.velocities.push(own.velocities[i]);
        store.types.push(own.types[i]);
        store.global_ids.push(own.gids[i]);
        store.images.push([0, 0, 0]);
        store.sources.push((rank, i));
    }
    store.nlocal = own.len();

    // peer locals keep (numa order, gid) order from the executor
    for e in &rg.peers {
        store.positions.push(e.pos);
        store.velocities.push(locals[e.owner].velocities[e.owner_slot]);
        store.types.push(e.typ);
        store.global_ids.push(e.gid);
        store.images.push(e.image);
        store.sources.push((e.owner, e.owner_slot));
    }
    store.node_nlocal = store.len();

    rg.ghosts.sort_by_key(|e| {
        (
            topo.node_of_rank(e.owner),
            e.owner,
            e.gid,
            e.image,
        )
    });
    let ghost_start = store.len();
    let mut group_start = ghost_start;
    let mut group_node: Option<usize> = None;
    for e in &rg.ghosts {
        let node = topo.node_of_rank(e.owner);
        if group_node != Some(node) {
            if let Some(g) = group_node {
                store.ghost_groups.push((g, group_start, store.len()));
            }
            group_node = Some(node);
            group_start = store.len();
        }
        store.positions.push(e.pos);
        store.velocities.push([0.0; 3]);
        store.types.push(e.typ);
        store.global_ids.push(e.gid);
        store.images.push(e.image);
        store.sources.push((e.owner, e.owner_slot));
    }
    if let Some(g) = group_node {
        store.ghost_groups.push((g, group_start, store.len()));
    }
    store.node_nghost = store.len() - store.node_nlocal;
    store.forces = vec![[0.0; 3]; store.len()];
    store
}

impl ExchangeState {
    /// Run the full (rebuild) exchange: materialize every rank's ghosts per
    /// the plan and account the transfers on the cluster.
    pub fn build(
        plan: CommPlan,
        sim_box: SimBox,
        topo: RankTopology,
        locals: &[RankLocals],
        cutoff: f64,
        load_balance: bool,
        cluster: &mut Cluster,
    ) -> Result<(ExchangeState, SimMetrics)> {
        if load_balance && plan.scheme != Scheme::NodeBased {
            return Err(Error::Plan(
                "intra-node load balance requires the node-based scheme".into(),
            ));
        }
        let subboxes = decompose(&sim_box, &topo)?;
        let (ghosts, msgs, copies) = match plan.scheme {
            Scheme::ThreeStage => {
                let (g, m) =
                    exchange_three_stage(&topo, &sim_box, &subboxes, locals, cutoff, plan.layers);
                (g, m, Vec::new())
            }
            Scheme::P2P => {
                let (g, m) =
                    exchange_p2p(&topo, &sim_box, &subboxes, locals, cutoff, &plan.rank_offsets);
                (g, m, Vec::new())
            }
            Scheme::NodeBased => exchange_node_based(
                &topo,
                &sim_box,
                &subboxes,
                locals,
                cutoff,
                &plan.node_offsets,
                plan.leaders,
                load_balance,
            )?,
        };

        let stores: Vec<AtomStore> = ghosts
            .into_iter()
            .enumerate()
            .map(|(rank, rg)| build_store(rank, locals, rg, &topo))
            .collect();

        debug_assert!(stores.iter().all(|s| {
            let mut keys = s.keys();
            keys.sort_unstable();
            keys.windows(2).all(|w| w[0] != w[1])
        }));

        let state = ExchangeState {
            plan,
            load_balance,
            sim_box,
            topo,
            subboxes,
            cutoff,
            stores,
            fwd_msgs: msgs,
            fwd_copies: copies,
        };
        let delta = state.account(cluster, Phase::ForwardGhost, FWD_ATOM_BYTES, false)?;
        Ok((state, delta))
    }

    fn account(
        &self,
        cluster: &mut Cluster,
        phase: Phase,
        bytes_per_atom: u64,
        reverse: bool,
    ) -> Result<SimMetrics> {
        let map_msg = |&(src, dst, cnt): &TransferRec| Message {
            src: if reverse { dst } else { src },
            dst: if reverse { src } else { dst },
            bytes: cnt as u64 * bytes_per_atom,
            phase,
        };
        let map_copy = |&(src, dst, cnt): &TransferRec| CopyRecord {
            src: if reverse { dst } else { src },
            dst: if reverse { src } else { dst },
            bytes: cnt as u64 * bytes_per_atom,
        };
        let messages: Vec<Message> = self.fwd_msgs.iter().map(map_msg).collect();
        let copies: Vec<CopyRecord> = self.fwd_copies.iter().map(map_copy).collect();
        cluster.simulate_phase(&messages, &copies)
    }

    /// Per-step forward communication: re-materialize every store position
    /// from the owners' current coordinates; positions-only payload.
    pub fn refresh_positions(
        &mut self,
        locals: &[RankLocals],
        cluster: &mut Cluster,
    ) -> Result<SimMetrics> {
        for store in &mut self.stores {
            for slot in 0..store.len() {
                let (owner, oslot) = store.sources[slot];
                store.positions[slot] =
                    materialize(locals[owner].positions[oslot], store.images[slot], &self.sim_box);
            }
        }
        self.account(cluster, Phase::ForwardGhost, POS_ATOM_BYTES, false)
    }

    /// Reverse force reduction: route every contribution to the owner of its
    /// target and sum per atom in ascending evaluating-center order. The
    /// transfer schedule mirrors the forward exchange.
    pub fn reverse_force_reduce(
        &self,
        per_rank_contributions: &[Vec<ForceContribution>],
        cluster: &mut Cluster,
    ) -> Result<(Vec<Vec<[f64; 3]>>, SimMetrics)> {
        let n = self.topo.n_ranks();
        if per_rank_contributions.len() != n {
            return Err(Error::Consistency(format!(
                "contributions for {} ranks, topology has {n}",
                per_rank_contributions.len()
            )));
        }
        let mut routed: Vec<Vec<(usize, u64, [f64; 3])>> = vec![Vec::new(); n];
        for (rank, contribs) in per_rank_contributions.iter().enumerate() {
            let store = &self.stores[rank];
            for c in contribs {
                if c.target_slot >= store.len() {
                    return Err(Error::Consistency(format!(
                        "contribution targets slot {} of rank {rank} ({} entries)",
                        c.target_slot,
                        store.len()
                    )));
                }
                let (owner, oslot) = store.sources[c.target_slot];
                routed[owner].push((oslot, c.center_gid, c.force));
            }
        }

        let mut forces: Vec<Vec<[f64; 3]>> = (0..n)
            .map(|rank| vec![[0.0; 3]; self.stores[rank].nlocal])
            .collect();
        for rank in 0..n {
            let mut per_slot: Vec<Vec<(u64, [f64; 3])>> =
                vec![Vec::new(); self.stores[rank].nlocal];
            for &(slot, gid, f) in &routed[rank] {
                per_slot[slot].push((gid, f));
            }
            for (slot, mut list) in per_slot.into_iter().enumerate() {
                list.sort_by_key(|&(gid, _)| gid);
                for (_, f) in list {
                    for d in 0..3 {
                        forces[rank][slot][d] += f[d];
                    }
                }
            }
        }

        let delta = self.account(cluster, Phase::ReverseForce, REV_ATOM_BYTES, true)?;
        Ok((forces, delta))
    }

    /// Forward messages recorded for this exchange (including empty ones;
    /// a planned send happens whether or not atoms qualify).
    pub fn forward_message_count(&self) -> usize {
        self.fwd_msgs.len()
    }

    /// Validation mode: compare every rank's materialized ghost set against
    /// the brute-force oracle; a mismatch is a consistency error carrying
    /// the differing identities.
    pub fn verify_against_oracle(&self, locals: &[RankLocals]) -> Result<()> {
        for rank in 0..self.topo.n_ranks() {
            let got = self.stores[rank].ghost_set();
            let want = if self.load_balance {
                let node = self.topo.node_of_rank(rank);
                let nb = node_box(&self.sim_box, &self.topo, node)?;
                let mut v = oracle_ghosts(locals, &nb, self.cutoff, &self.sim_box);
                for &peer in self.topo.ranks_in_node(node).iter() {
                    if peer != rank {
                        v.extend(locals[peer].gids.iter().map(|&g| (g, [0i8; 3])));
                    }
                }
                v.sort_unstable();
                v
            } else {
                oracle_ghosts(locals, &self.subboxes[rank], self.cutoff, &self.sim_box)
            };
            if got != want {
                let missing: Vec<_> = want.iter().filter(|k| !got.contains(k)).take(8).collect();
                let extra: Vec<_> = got.iter().filter(|k| !want.contains(k)).take(8).collect();
                return Err(Error::Consistency(format!(
                    "rank {rank} ghost set diverges from the oracle ({} vs {} entries); \
                     missing {missing:?}, extra {extra:?}",
                    got.len(),
                    want.len()
                )));
            }
        }
        Ok(())
    }

    /// Store slots each rank evaluates as centers. Without load balance a
    /// rank evaluates its own locals; with it, the node's atoms are split
    /// into near-even contiguous slices of the canonical node list.
    pub fn centers_for_rank(&self, rank: RankId) -> Vec<usize> {
        let store = &self.stores[rank];
        if !self.load_balance {
            return (0..store.nlocal).collect();
        }
        let node = self.topo.node_of_rank(rank);
        let members = self.topo.ranks_in_node(node);
        let counts: Vec<usize> = members
            .iter()
            .map(|&m| self.stores[m].nlocal)
            .collect();
        let total: usize = counts.iter().sum();
        let slices = super::balance::partition_node_box(total, RANKS_PER_NODE);
        let numa = self.topo.numa_index(rank);
        let (start, len) = slices[numa];

        // canonical node order: members by NUMA index, gid-ascending within;
        // map canonical positions onto this rank's store slots
        let mut slots = Vec::with_capacity(len);
        for canonical in start..start + len {
            let mut idx = canonical;
            let mut member_numa = 0;
            while idx >= counts[member_numa] {
                idx -= counts[member_numa];
                member_numa += 1;
            }
            let member = members[member_numa];
            let slot = if member == rank {
                idx
            } else {
                // peer locals sit after own locals, blocks in NUMA order
                let mut offset = store.nlocal;
                for (pi, &peer) in members.iter().enumerate() {
                    if peer == rank {
                        continue;
                    }
                    if peer == member {
                        break;
                    }
                    offset += counts[pi];
                }
                offset + idx
            };
            slots.push(slot);
        }
        slots
    }
}

/// Wrap positions and re-assign atoms to the ranks owning them. Returns the
/// migration metrics (batched per rank pair).
pub fn migrate(
    locals: &mut [RankLocals],
    sim_box: &SimBox,
    topo: &RankTopology,
    cluster: &mut Cluster,
) -> Result<SimMetrics> {
    let n = topo.n_ranks();
    let mut moving: BTreeMap<(RankId, RankId), usize> = BTreeMap::new();
    let mut inbox: Vec<Vec<(u64, usize, [f64; 3], [f64; 3])>> = vec![Vec::new(); n];

    for rank in 0..n {
        let l = &mut locals[rank];
        let mut keep = RankLocals::default();
        for i in 0..l.len() {
            let wrapped = sim_box.wrap(l.positions[i]);
            let owner = locate_rank(wrapped, sim_box, topo)?;
            if owner == rank {
                keep.push(l.gids[i], l.types[i], wrapped, l.velocities[i]);
            } else {
                *moving.entry((rank, owner)).or_insert(0) += 1;
                inbox[owner].push((l.gids[i], l.types[i], wrapped, l.velocities[i]));
            }
        }
        *l = keep;
    }
    for (rank, arrivals) in inbox.into_iter().enumerate() {
        for (gid, typ, pos, vel) in arrivals {
            locals[rank].push(gid, typ, pos, vel);
        }
        locals[rank].sort_by_gid();
    }

    let messages: Vec<Message> = moving
        .iter()
        .map(|(&(src, dst), &cnt)| Message {
            src,
            dst,
            bytes: cnt as u64 * MIG_ATOM_BYTES,
            phase: Phase::Migration,
        })
        .collect();
    cluster.simulate_phase(&messages, &[])
}

/// Assign a global configuration to rank-local stores (wrapped, gid-sorted).
pub fn assign_atoms(
    gids: &[u64],
    types: &[usize],
    positions: &[[f64; 3]],
    velocities: &[[f64; 3]],
    sim_box: &SimBox,
    topo: &RankTopology,
) -> Result<Vec<RankLocals>> {
    let mut locals: Vec<RankLocals> = vec![RankLocals::default(); topo.n_ranks()];
    for i in 0..gids.len() {
        let wrapped = sim_box.wrap(positions[i]);
        let owner = locate_rank(wrapped, sim_box, topo)?;
        locals[owner].push(gids[i], types[i], wrapped, velocities[i]);
    }
    for l in &mut locals {
        l.sort_by_gid();
    }
    Ok(locals)
}

/// Brute-force ghost oracle: every periodic copy strictly within `cutoff` of
/// the sub-box (and not an interior original), by direct region test. The
/// +/-3 image range covers every plannable halo (at most 3 layers over a
/// grid dimension of 1).
pub fn oracle_ghosts(
    locals: &[RankLocals],
    subbox: &SubBox,
    cutoff: f64,
    sim_box: &SimBox,
) -> Vec<(u64, [i8; 3])> {
    let mut out = Vec::new();
    for l in locals {
        for i in 0..l.len() {
            let pos = l.positions[i];
            for iz in -3i8..=3 {
                for iy in -3i8..=3 {
                    for ix in -3i8..=3 {
                        let image = [ix, iy, iz];
                        let p = materialize(pos, image, sim_box);
                        if !subbox.within_expanded(p, cutoff) {
                            continue;
                        }
                        if image == [0, 0, 0] && subbox.contains(p) {
                            continue;
                        }
                        out.push((l.gids[i], image));
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}
