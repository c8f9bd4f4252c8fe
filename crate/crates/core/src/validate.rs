//! Oracle suites behind the `validate` command and the acceptance tests:
//! ghost-set equality, gradient checks, symmetry invariance, scheme
//! equivalence, balance statistics, GEMM oracle agreement, precision
//! deviation bounds and conservation runs.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::engine::{
    fcc_lattice, maxwell_velocities, run, water_lattice, ForceField, RdfAccumulator, RunConfig,
};
use crate::error::Result;
use crate::geometry::{decompose, ghost_count_model, RankTopology, SimBox};
use crate::neighbor::{build_neighbor_list, CutoffSpec};
use crate::netsim::{build_cluster, CostModel, RegistrationPolicy};
use crate::potential::{
    evaluate_centers, evaluate_cluster, init_params, ModelDims, ModelParams, PrecisionMode,
};
use crate::schemes::{
    assign_atoms, balance_report, global_reference, oracle_ghosts, partition_node_box,
    plan_exchange, sdmr, ExchangeState, RankLocals, Scheme,
};
use crate::tsgemm::{gemm_fp16, gemm_naive, gemm_nn, max_ulp_distance, prepack_transpose, Matrix};

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult {
            name,
            passed,
            detail,
        }
    }
}

fn desk_dims() -> ModelDims {
    ModelDims {
        fitting_width: 12,
        ..ModelDims::default()
    }
}

fn desk_params(seed: u64, mode: PrecisionMode) -> ModelParams {
    init_params(seed, &desk_dims(), mode).expect("desk dims are valid")
}

/// Uniform-density cloud: lattice sites jittered by a fraction of the
/// spacing, which keeps a minimum pair separation.
fn jittered_cloud(rng: &mut StdRng, cells: [usize; 3], spacing: f64, jitter: f64) -> Vec<[f64; 3]> {
    let mut pos = Vec::new();
    for z in 0..cells[2] {
        for y in 0..cells[1] {
            for x in 0..cells[0] {
                pos.push([
                    (x as f64 + 0.5) * spacing + rng.random_range(-jitter..jitter),
                    (y as f64 + 0.5) * spacing + rng.random_range(-jitter..jitter),
                    (z as f64 + 0.5) * spacing + rng.random_range(-jitter..jitter),
                ]);
            }
        }
    }
    pos
}

/// Ghost-count model values at (1, 2) plus the 1.44 ratio.
pub fn check_ghost_model() -> CheckResult {
    let g = match ghost_count_model(1.0, 2.0) {
        Ok(g) => g,
        Err(e) => return CheckResult::new("ghost-model", false, e.to_string()),
    };
    let passed = g.nghost_bs == 124.0 && g.nghost_lb == 179.0 && (g.ratio() - 1.4435).abs() < 5e-4;
    CheckResult::new(
        "ghost-model",
        passed,
        format!(
            "nghost_bs={} nghost_lb={} ratio={:.4}",
            g.nghost_bs,
            g.nghost_lb,
            g.ratio()
        ),
    )
}

/// Round/peer/node-neighbor counts for the three benchmark sub-box shapes
/// on the 96-node (4x6x4) cluster.
pub fn check_message_counts() -> CheckResult {
    let rc = 8.0;
    let topo = match RankTopology::new([8, 12, 4]) {
        Ok(t) => t,
        Err(e) => return CheckResult::new("message-counts", false, e.to_string()),
    };
    let cases: [([f64; 3], usize, usize, usize); 3] = [
        ([1.0, 1.0, 1.0], 3, 26, 26),
        ([0.5, 0.5, 1.0], 5, 74, 26),
        ([0.5, 0.5, 0.5], 6, 124, 44),
    ];
    let mut detail = String::new();
    for (frac, rounds, peers, node_peers) in cases {
        let sim_box = match SimBox::new([
            8.0 * frac[0] * rc,
            12.0 * frac[1] * rc,
            4.0 * frac[2] * rc,
        ]) {
            Ok(b) => b,
            Err(e) => return CheckResult::new("message-counts", false, e.to_string()),
        };
        let plan = |s| plan_exchange(s, &topo, &sim_box, rc, 4);
        let (ts, p2p, nb) =
            match (plan(Scheme::ThreeStage), plan(Scheme::P2P), plan(Scheme::NodeBased)) {
                (Ok(a), Ok(b), Ok(c)) => (a, b, c),
                _ => return CheckResult::new("message-counts", false, "planning failed".into()),
            };
        if ts.rounds() != rounds
            || p2p.p2p_peer_count() != peers
            || nb.node_peer_count() != node_peers
        {
            return CheckResult::new(
                "message-counts",
                false,
                format!(
                    "sides {frac:?}: got rounds={} peers={} node={}, want {rounds}/{peers}/{node_peers}",
                    ts.rounds(),
                    p2p.p2p_peer_count(),
                    nb.node_peer_count()
                ),
            );
        }
        detail.push_str(&format!(
            "sides {frac:?}: rounds={rounds} peers={peers} node={node_peers}; "
        ));
    }
    CheckResult::new("message-counts", true, detail)
}

struct TestSystem {
    sim_box: SimBox,
    topo: RankTopology,
    locals: Vec<RankLocals>,
    positions: Vec<[f64; 3]>,
    types: Vec<usize>,
    cutoff: f64,
    ntypes: usize,
}

fn random_system(seed: u64) -> Result<TestSystem> {
    let mut rng = StdRng::seed_from_u64(seed);
    let topo = RankTopology::new([4, 4, 2])?; // 8 nodes, 32 ranks
    let choices: [([usize; 3], f64); 4] = [
        ([8, 8, 8], 1.0),
        ([10, 10, 8], 1.0),
        ([12, 12, 8], 0.9),
        ([12, 12, 12], 1.0),
    ];
    let (cells, spacing) = choices[(seed % 4) as usize];
    let sim_box = SimBox::new([
        cells[0] as f64 * spacing,
        cells[1] as f64 * spacing,
        cells[2] as f64 * spacing,
    ])?;
    let positions = jittered_cloud(&mut rng, cells, spacing, 0.3 * spacing);
    let n = positions.len();
    let ntypes = if seed % 3 == 0 { 2 } else { 1 };
    let types: Vec<usize> = (0..n).map(|i| i % ntypes).collect();
    let gids: Vec<u64> = (0..n as u64).collect();
    let vels = vec![[0.0; 3]; n];
    let locals = assign_atoms(&gids, &types, &positions, &vels, &sim_box, &topo)?;
    // sub-box sides are >= 2 spacing; one or two halo layers by seed
    let cutoff = if seed % 2 == 0 { 1.9 * spacing } else { 2.6 * spacing };
    Ok(TestSystem {
        sim_box,
        topo,
        locals,
        positions,
        types,
        cutoff,
        ntypes,
    })
}

/// Forward ghost sets of all three schemes equal the brute-force oracle on
/// seeded random systems.
pub fn check_ghost_sets(n_systems: usize) -> CheckResult {
    let mut checked = 0usize;
    for seed in 0..n_systems as u64 {
        let sys = match random_system(seed) {
            Ok(s) => s,
            Err(e) => return CheckResult::new("ghost-sets", false, e.to_string()),
        };
        let subboxes = match decompose(&sys.sim_box, &sys.topo) {
            Ok(s) => s,
            Err(e) => return CheckResult::new("ghost-sets", false, e.to_string()),
        };
        for scheme in [Scheme::ThreeStage, Scheme::P2P, Scheme::NodeBased] {
            let mut cluster = build_cluster(sys.topo, CostModel::default()).expect("cluster");
            let plan = match plan_exchange(scheme, &sys.topo, &sys.sim_box, sys.cutoff, 4) {
                Ok(p) => p,
                Err(e) => return CheckResult::new("ghost-sets", false, e.to_string()),
            };
            let (state, _) = match ExchangeState::build(
                plan,
                sys.sim_box,
                sys.topo,
                &sys.locals,
                sys.cutoff,
                false,
                &mut cluster,
            ) {
                Ok(s) => s,
                Err(e) => return CheckResult::new("ghost-sets", false, e.to_string()),
            };
            if let Err(e) = state.verify_against_oracle(&sys.locals) {
                return CheckResult::new(
                    "ghost-sets",
                    false,
                    format!("seed {seed} scheme {scheme:?}: {e}"),
                );
            }
            for rank in 0..sys.topo.n_ranks() {
                let got = state.stores[rank].ghost_set();
                let want = oracle_ghosts(&sys.locals, &subboxes[rank], sys.cutoff, &sys.sim_box);
                checked += got.len();
                debug_assert_eq!(got, want);
            }
        }
    }
    CheckResult::new(
        "ghost-sets",
        true,
        format!("{n_systems} systems x 3 schemes, {checked} ghost entries matched"),
    )
}

/// Distributed forces from every scheme (including the load-balanced node
/// scheme) match a no-decomposition global computation within 1e-12 eV/A.
pub fn check_scheme_equivalence(n_systems: usize) -> CheckResult {
    let mut worst = 0.0f64;
    for seed in 0..n_systems as u64 {
        let sys = match random_system(seed) {
            Ok(s) => s,
            Err(e) => return CheckResult::new("scheme-equivalence", false, e.to_string()),
        };
        let dims = ModelDims {
            ntypes: sys.ntypes,
            fitting_width: 12,
            ..ModelDims::default()
        };
        let params = init_params(seed + 1000, &dims, PrecisionMode::Double).expect("dims valid");
        let rc = sys.cutoff;
        let rcs = 0.4 * rc;
        let sel = vec![128usize; sys.ntypes];

        let reference = match global_reference(
            &sys.positions,
            &sys.types,
            &sys.sim_box,
            &params,
            rc,
            rcs,
            &sel,
            sys.cutoff,
        ) {
            Ok(r) => r,
            Err(e) => return CheckResult::new("scheme-equivalence", false, e.to_string()),
        };

        for (scheme, lb) in [
            (Scheme::ThreeStage, false),
            (Scheme::P2P, false),
            (Scheme::NodeBased, false),
            (Scheme::NodeBased, true),
        ] {
            let mut cluster = build_cluster(sys.topo, CostModel::default()).expect("cluster");
            let plan =
                plan_exchange(scheme, &sys.topo, &sys.sim_box, sys.cutoff, 4).expect("plannable");
            let (state, _) = match ExchangeState::build(
                plan,
                sys.sim_box,
                sys.topo,
                &sys.locals,
                sys.cutoff,
                lb,
                &mut cluster,
            ) {
                Ok(s) => s,
                Err(e) => return CheckResult::new("scheme-equivalence", false, e.to_string()),
            };
            let mut contribs = Vec::new();
            for rank in 0..sys.topo.n_ranks() {
                let store = &state.stores[rank];
                let keys = store.keys();
                let centers = state.centers_for_rank(rank);
                let list = match build_neighbor_list(
                    &store.positions,
                    &store.types,
                    &keys,
                    &centers,
                    rc,
                    &sel,
                ) {
                    Ok(l) => l,
                    Err(e) => {
                        return CheckResult::new("scheme-equivalence", false, e.to_string())
                    }
                };
                match evaluate_centers(
                    &store.positions,
                    &store.types,
                    &keys,
                    &list,
                    &params,
                    rc,
                    rcs,
                    &sel,
                ) {
                    Ok(out) => contribs.push(out.contributions),
                    Err(e) => {
                        return CheckResult::new("scheme-equivalence", false, e.to_string())
                    }
                }
            }
            let (forces, _) = match state.reverse_force_reduce(&contribs, &mut cluster) {
                Ok(f) => f,
                Err(e) => return CheckResult::new("scheme-equivalence", false, e.to_string()),
            };
            for (rank, l) in sys.locals.iter().enumerate() {
                for i in 0..l.len() {
                    let gid = l.gids[i] as usize;
                    for d in 0..3 {
                        let diff = (forces[rank][i][d] - reference.forces[gid][d]).abs();
                        worst = worst.max(diff);
                        if diff >= 1e-12 {
                            return CheckResult::new(
                                "scheme-equivalence",
                                false,
                                format!("seed {seed} {scheme:?} lb={lb} gid {gid}: diff {diff}"),
                            );
                        }
                    }
                }
            }
        }
    }
    CheckResult::new(
        "scheme-equivalence",
        true,
        format!("{n_systems} systems, max |dF| = {worst:.3e} eV/A"),
    )
}

/// Analytic forces vs central finite differences on random 32-atom systems.
pub fn check_gradients(n_systems: usize) -> CheckResult {
    let params = desk_params(77, PrecisionMode::Double);
    let (rc, rcs) = (6.0, 2.0);
    let sel = [64usize];
    let h = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..n_systems as u64 {
        let mut rng = StdRng::seed_from_u64(seed + 5000);
        let pos = jittered_cloud(&mut rng, [4, 4, 2], 2.3, 0.75);
        debug_assert_eq!(pos.len(), 32);
        let types = vec![0usize; pos.len()];
        let base = match evaluate_cluster(&pos, &types, &params, rc, rcs, &sel) {
            Ok(b) => b,
            Err(e) => return CheckResult::new("gradients", false, e.to_string()),
        };
        let fmax = base
            .forces
            .iter()
            .flat_map(|f| f.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        for atom in 0..pos.len() {
            for d in 0..3 {
                let mut plus = pos.clone();
                plus[atom][d] += h;
                let mut minus = pos.clone();
                minus[atom][d] -= h;
                let ep = evaluate_cluster(&plus, &types, &params, rc, rcs, &sel).expect("eval");
                let em = evaluate_cluster(&minus, &types, &params, rc, rcs, &sel).expect("eval");
                let fd = -(ep.e_total - em.e_total) / (2.0 * h);
                let rel = (base.forces[atom][d] - fd).abs() / fmax.max(1e-8);
                worst = worst.max(rel);
                if rel >= 1e-6 {
                    return CheckResult::new(
                        "gradients",
                        false,
                        format!("seed {seed} atom {atom} dim {d}: rel {rel:.3e}"),
                    );
                }
            }
        }
    }
    CheckResult::new(
        "gradients",
        true,
        format!("{n_systems} x 32-atom systems, worst rel error {worst:.3e}"),
    )
}

fn random_rotation(rng: &mut StdRng) -> [[f64; 3]; 3] {
    let mut a = [[0.0f64; 3]; 3];
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    let norm = |v: [f64; 3]| {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    };
    let e0 = norm(a[0]);
    let d = a[1][0] * e0[0] + a[1][1] * e0[1] + a[1][2] * e0[2];
    let e1 = norm([a[1][0] - d * e0[0], a[1][1] - d * e0[1], a[1][2] - d * e0[2]]);
    let e2 = [
        e0[1] * e1[2] - e0[2] * e1[1],
        e0[2] * e1[0] - e0[0] * e1[2],
        e0[0] * e1[1] - e0[1] * e1[0],
    ];
    [e0, e1, e2]
}

/// Translational (bitwise), rotational (1e-10) and permutational (1e-12)
/// energy invariance on random clusters.
pub fn check_symmetries(n_systems: usize) -> CheckResult {
    let params = desk_params(99, PrecisionMode::Double);
    let (rc, rcs) = (6.0, 2.0);
    let sel = [64usize];
    for seed in 0..n_systems as u64 {
        let mut rng = StdRng::seed_from_u64(seed + 9000);
        let snap = |x: f64| (x * 1048576.0).round() / 1048576.0;
        let pos: Vec<[f64; 3]> = jittered_cloud(&mut rng, [3, 3, 3], 2.2, 0.66)
            .into_iter()
            .map(|p| [snap(p[0]), snap(p[1]), snap(p[2])])
            .collect();
        let types = vec![0usize; pos.len()];
        let base = match evaluate_cluster(&pos, &types, &params, rc, rcs, &sel) {
            Ok(b) => b,
            Err(e) => return CheckResult::new("symmetries", false, e.to_string()),
        };

        // translation: exact shift of grid-snapped coordinates, bitwise
        let shift = [129.0, -33.25, 7.5];
        let moved: Vec<[f64; 3]> = pos
            .iter()
            .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
            .collect();
        let shifted = evaluate_cluster(&moved, &types, &params, rc, rcs, &sel).expect("eval");
        if shifted.e_total.to_bits() != base.e_total.to_bits() {
            return CheckResult::new(
                "symmetries",
                false,
                format!("seed {seed}: translation changed the energy bitwise"),
            );
        }

        // rotation: random orthogonal matrix
        let q = random_rotation(&mut rng);
        let rotated: Vec<[f64; 3]> = pos
            .iter()
            .map(|p| {
                [
                    q[0][0] * p[0] + q[0][1] * p[1] + q[0][2] * p[2],
                    q[1][0] * p[0] + q[1][1] * p[1] + q[1][2] * p[2],
                    q[2][0] * p[0] + q[2][1] * p[1] + q[2][2] * p[2],
                ]
            })
            .collect();
        let rot = evaluate_cluster(&rotated, &types, &params, rc, rcs, &sel).expect("eval");
        let rot_rel = (rot.e_total - base.e_total).abs() / base.e_total.abs();
        if rot_rel >= 1e-10 {
            return CheckResult::new(
                "symmetries",
                false,
                format!("seed {seed}: rotation rel error {rot_rel:.3e}"),
            );
        }

        // permutation: shuffle the atom input order
        let mut perm: Vec<usize> = (0..pos.len()).collect();
        for i in (1..perm.len()).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let ppos: Vec<[f64; 3]> = perm.iter().map(|&i| pos[i]).collect();
        let ptypes: Vec<usize> = perm.iter().map(|&i| types[i]).collect();
        let permuted = evaluate_cluster(&ppos, &ptypes, &params, rc, rcs, &sel).expect("eval");
        let perm_rel = (permuted.e_total - base.e_total).abs() / base.e_total.abs();
        if perm_rel >= 1e-12 {
            return CheckResult::new(
                "symmetries",
                false,
                format!("seed {seed}: permutation rel error {perm_rel:.3e}"),
            );
        }
    }
    CheckResult::new(
        "symmetries",
        true,
        format!("{n_systems} systems: translation bitwise, rotation < 1e-10, permutation < 1e-12"),
    )
}

/// Uniform-density fluid-like configuration: atoms placed uniformly at
/// random with node-box totals held near their mean (small grand-canonical
/// noise). Liquids pin region counts this way — water's long-wavelength
/// structure factor is ~0.06, so a ~50-atom region fluctuates by a few
/// atoms at most — while positions inside a region stay fully random.
/// Independent placement would inflate node-scale count variance far
/// beyond what any dense fluid shows.
fn uniform_fluid_like(
    rng: &mut StdRng,
    topo: &RankTopology,
    sim_box: &SimBox,
    per_node: usize,
) -> Vec<[f64; 3]> {
    let mut pos = Vec::with_capacity(per_node * topo.n_nodes());
    for node in 0..topo.n_nodes() {
        let nb = crate::geometry::node_box(sim_box, topo, node).expect("node box");
        let count = (per_node as i64 + rng.random_range(-3i64..=3)) as usize;
        for _ in 0..count {
            pos.push([
                rng.random_range(nb.lo[0]..nb.hi[0]),
                rng.random_range(nb.lo[1]..nb.hi[1]),
                rng.random_range(nb.lo[2]..nb.hi[2]),
            ]);
        }
    }
    pos
}

/// Intra-node balancing cuts the per-rank atom-count dispersion by at least
/// 3x at ~12 atoms/rank, with the per-rank maximum bounded by the even
/// split.
pub fn check_load_balance(n_trials: usize) -> CheckResult {
    let topo = RankTopology::new([4, 4, 2]).expect("valid grid");
    let mut min_ratio = f64::INFINITY;
    for seed in 0..n_trials as u64 {
        let mut rng = StdRng::seed_from_u64(seed + 40_000);
        // 384 atoms over 32 ranks: the 12 atoms/rank regime
        let sim_box = SimBox::new([8.0, 8.0, 6.0]).expect("box");
        let pos = uniform_fluid_like(&mut rng, &topo, &sim_box, 48);
        let n = pos.len();
        let gids: Vec<u64> = (0..n as u64).collect();
        let types = vec![0usize; n];
        let vels = vec![[0.0; 3]; n];
        let locals = assign_atoms(&gids, &types, &pos, &vels, &sim_box, &topo).expect("assign");

        let unbalanced: Vec<f64> = locals.iter().map(|l| l.len() as f64).collect();
        let mut balanced = Vec::with_capacity(topo.n_ranks());
        let mut max_ok = true;
        for node in 0..topo.n_nodes() {
            let members = topo.ranks_in_node(node);
            let total: usize = members.iter().map(|&m| locals[m].len()).sum();
            for &(_, len) in &partition_node_box(total, 4) {
                balanced.push(len as f64);
                if len > total.div_ceil(4) {
                    max_ok = false;
                }
            }
        }
        let before = sdmr(&unbalanced).expect("positive mean");
        let after = sdmr(&balanced).expect("positive mean");
        let ratio = before / after.max(1e-12);
        min_ratio = min_ratio.min(ratio);
        if !(after <= before) || !max_ok || ratio < 3.0 {
            return CheckResult::new(
                "load-balance",
                false,
                format!("seed {seed}: sdmr {before:.2} -> {after:.2} ({ratio:.2}x), max_ok {max_ok}"),
            );
        }
        if seed + 1 == n_trials as u64 {
            let counts: Vec<usize> = unbalanced.iter().map(|&c| c as usize).collect();
            let report = balance_report(&counts, &unbalanced).expect("report");
            let bal_counts: Vec<usize> = balanced.iter().map(|&c| c as usize).collect();
            let bal_report = balance_report(&bal_counts, &balanced).expect("report");
            return CheckResult::new(
                "load-balance",
                true,
                format!(
                    "{n_trials} trials at 12 atoms/rank, worst sdmr reduction {min_ratio:.2}x;                      last trial natom min/avg/max {}/{:.2}/{} sdmr {:.2} -> {}/{:.2}/{} sdmr {:.2}",
                    report.natoms.min,
                    report.natoms.avg,
                    report.natoms.max,
                    report.natoms.sdmr,
                    bal_report.natoms.min,
                    bal_report.natoms.avg,
                    bal_report.natoms.max,
                    bal_report.natoms.sdmr
                ),
            );
        }
    }
    CheckResult::new(
        "load-balance",
        true,
        format!("{n_trials} trials at 12 atoms/rank, worst sdmr reduction {min_ratio:.2}x"),
    )
}

/// Replicated per-rank atom count in load-balance mode matches the ghost
/// volume model on a unit-density lattice.
pub fn check_lb_ghost_overhead() -> CheckResult {
    let topo = RankTopology::new([4, 4, 2]).expect("valid grid");
    // unit lattice: one atom per unit cell at the center, density 1
    let cells = [8usize, 8, 8];
    let sim_box = SimBox::new([8.0, 8.0, 8.0]).expect("box");
    let mut pos = Vec::new();
    for z in 0..cells[2] {
        for y in 0..cells[1] {
            for x in 0..cells[0] {
                pos.push([x as f64 + 0.5, y as f64 + 0.5, z as f64 + 0.5]);
            }
        }
    }
    let n = pos.len();
    let gids: Vec<u64> = (0..n as u64).collect();
    let types = vec![0usize; n];
    let vels = vec![[0.0; 3]; n];
    let locals = assign_atoms(&gids, &types, &pos, &vels, &sim_box, &topo).expect("assign");
    let cutoff = 2.0; // integer cutoff, no boundary ties on the half-grid
    let mut cluster = build_cluster(topo, CostModel::default()).expect("cluster");
    let plan = plan_exchange(Scheme::NodeBased, &topo, &sim_box, cutoff, 4).expect("plan");
    let (state, _) = ExchangeState::build(plan, sim_box, topo, &locals, cutoff, true, &mut cluster)
        .expect("exchange");

    // sub-boxes are (2,2,4); the volume model generalizes to the node-box
    // sides plus 2r in every dimension, minus the rank's own volume
    let subbox = decompose(&sim_box, &topo).expect("boxes")[0];
    let sides = subbox.sides();
    let node_sides = [2.0 * sides[0], 2.0 * sides[1], sides[2]];
    let expect = (node_sides[0] + 2.0 * cutoff)
        * (node_sides[1] + 2.0 * cutoff)
        * (node_sides[2] + 2.0 * cutoff)
        - sides[0] * sides[1] * sides[2];
    let layer = 2.0
        * ((node_sides[0] + 2.0 * cutoff) * (node_sides[1] + 2.0 * cutoff)
            + (node_sides[1] + 2.0 * cutoff) * (node_sides[2] + 2.0 * cutoff)
            + (node_sides[0] + 2.0 * cutoff) * (node_sides[2] + 2.0 * cutoff));
    let mut worst = 0.0f64;
    for rank in 0..topo.n_ranks() {
        let store = &state.stores[rank];
        let replicated = (store.len() - store.nlocal) as f64;
        let err = (replicated - expect).abs();
        worst = worst.max(err);
        if err > layer {
            return CheckResult::new(
                "lb-ghost-overhead",
                false,
                format!("rank {rank}: replicated {replicated} vs model {expect}"),
            );
        }
    }
    CheckResult::new(
        "lb-ghost-overhead",
        true,
        format!("replicated count vs volume model {expect}, worst |delta| = {worst}"),
    )
}

/// Mixed-precision force deviations against the double path stay within the
/// documented envelopes.
pub fn check_mixed_precision() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(31);
    let pos = jittered_cloud(&mut rng, [4, 4, 4], 2.2, 0.6);
    let types = vec![0usize; pos.len()];
    let (rc, rcs) = (6.0, 2.0);
    let sel = [128usize];
    let double =
        evaluate_cluster(&pos, &types, &desk_params(1, PrecisionMode::Double), rc, rcs, &sel)
            .expect("eval");
    let fp32 =
        evaluate_cluster(&pos, &types, &desk_params(1, PrecisionMode::MixFp32), rc, rcs, &sel)
            .expect("eval");
    let fp16 =
        evaluate_cluster(&pos, &types, &desk_params(1, PrecisionMode::MixFp16), rc, rcs, &sel)
            .expect("eval");

    let rel_rms = |a: &[[f64; 3]], b: &[[f64; 3]]| {
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in a.iter().zip(b) {
            for d in 0..3 {
                num += (x[d] - y[d]) * (x[d] - y[d]);
                den += x[d] * x[d];
            }
        }
        (num / den.max(1e-300)).sqrt()
    };
    let e32 = rel_rms(&double.forces, &fp32.forces);
    let e16 = rel_rms(&double.forces, &fp16.forces);
    let passed = e32 > 0.0 && e32 < 1e-3 && e16 > 0.0 && e16 < 1e-2;
    CheckResult::new(
        "mixed-precision",
        passed,
        format!("force rel RMS vs double: fp32 {e32:.3e} (< 1e-3), fp16 {e16:.3e} (< 1e-2)"),
    )
}

/// The three precision modes produce overlapping RDF curves over a
/// 100-step run of the water system.
pub fn check_rdf_overlap() -> CheckResult {
    let mut structure = water_lattice(3.104, [3, 3, 3]);
    let masses = vec![15.999, 1.008];
    maxwell_velocities(&mut structure, &masses, 300.0, 21).expect("masses");
    let topo = RankTopology::new([2, 2, 1]).expect("valid grid");
    let dims = ModelDims {
        ntypes: 2,
        fitting_width: 12,
        ..ModelDims::default()
    };
    let mut curves = Vec::new();
    for mode in [
        PrecisionMode::Double,
        PrecisionMode::MixFp32,
        PrecisionMode::MixFp16,
    ] {
        let ff = ForceField {
            params: init_params(300, &dims, mode).expect("dims valid"),
            cutoff: CutoffSpec::new(4.0, 1.5, 1.0, 50).expect("spec"),
            sel: vec![46, 92],
        };
        let cfg = RunConfig {
            steps: 100,
            dt: 0.5,
            masses: masses.clone(),
            scheme: Scheme::NodeBased,
            leaders: 4,
            load_balance: true,
            thermo_every: 50,
            sample_every: 2,
        };
        let out = match run(&structure, ff, cfg, topo, CostModel::default()) {
            Ok(o) => o,
            Err(e) => return CheckResult::new("rdf-overlap", false, e.to_string()),
        };
        let sim_box = SimBox::new(structure.box_lengths).expect("box");
        let mut acc = RdfAccumulator::new(4.5, 45).expect("bins");
        for frame in out.samples.iter().skip(out.samples.len() / 2) {
            acc.add_frame(frame, &sim_box).expect("frame");
        }
        curves.push(acc.finish());
    }
    let mut max_dg = 0.0f64;
    for alt in &curves[1..] {
        for ((_, a), (_, b)) in curves[0].iter().zip(alt) {
            max_dg = max_dg.max((a - b).abs());
        }
    }
    CheckResult::new(
        "rdf-overlap",
        max_dg < 0.05,
        format!("max |dg| across precision modes = {max_dg:.3e} (< 0.05)"),
    )
}

/// Fast, general and prepacked-NT GEMM paths agree with the naive oracle
/// within 8 ulps, including fitting-net shapes.
pub fn check_gemm_oracle() -> CheckResult {
    let mut rng = StdRng::seed_from_u64(4242);
    let mut random_matrix = |rows: usize, cols: usize| {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("sized")
    };
    let mut worst = 0u64;
    for trial in 0..1000usize {
        let (m, k, n) = if trial % 50 == 0 {
            (1 + trial % 3, 240, 240)
        } else {
            (1 + trial % 6, 1 + (trial * 7) % 48, 1 + (trial * 13) % 48)
        };
        let a = random_matrix(m, k);
        let b = random_matrix(k, n);
        let oracle = gemm_naive(&a, &b).expect("shapes");
        let fast = gemm_nn(&a, &b).expect("shapes");
        worst = worst.max(max_ulp_distance(&fast, &oracle));

        // prepacked NT route: x * W^T through the packed transpose
        let w = random_matrix(n, k);
        let wt = prepack_transpose(&w);
        let nt_oracle = gemm_naive(&a, &wt).expect("shapes");
        let nt = gemm_nn(&a, &wt).expect("shapes");
        worst = worst.max(max_ulp_distance(&nt, &nt_oracle));
        if worst > 8 {
            return CheckResult::new(
                "gemm-oracle",
                false,
                format!("trial {trial} ({m}x{k}x{n}): {worst} ulps"),
            );
        }
    }
    // fp16 storage path stays within its coarser envelope
    let a = random_matrix(1, 240);
    let b = random_matrix(240, 240);
    let exact = gemm_naive(&a, &b).expect("shapes");
    let approx = gemm_fp16(&a, &b).expect("shapes");
    for j in 0..240 {
        let rel = (approx.get(0, j) - exact.get(0, j)).abs() / exact.get(0, j).abs().max(1.0);
        if rel >= 1e-2 {
            return CheckResult::new("gemm-oracle", false, format!("fp16 col {j}: rel {rel:.3e}"));
        }
    }
    CheckResult::new(
        "gemm-oracle",
        true,
        format!("1000 draws + fitting shapes, max {worst} ulps (<= 8)"),
    )
}

/// Registration policies and the node-based vs p2p virtual-time comparison
/// on the two 2-layer benchmark shapes.
pub fn check_comm_accounting() -> CheckResult {
    let topo = RankTopology::new([8, 12, 4]).expect("valid grid");
    let mut cluster = build_cluster(topo, CostModel::default()).expect("cluster");
    let pooled = cluster.register_regions(&[124; 4], RegistrationPolicy::Pooled);
    let per = cluster.register_regions(&[124, 26, 0, 7], RegistrationPolicy::PerNeighbor);
    if pooled != vec![1, 1, 1, 1] || per != vec![248, 52, 0, 14] {
        return CheckResult::new("comm-accounting", false, "registration counts wrong".into());
    }

    let rc = 8.0;
    let mut detail = String::new();
    for frac in [[0.5, 0.5, 1.0], [0.5, 0.5, 0.5]] {
        let cells = [
            (8.0 * frac[0] * rc) as usize,
            (12.0 * frac[1] * rc) as usize,
            (4.0 * frac[2] * rc) as usize,
        ];
        let sim_box =
            SimBox::new([cells[0] as f64, cells[1] as f64, cells[2] as f64]).expect("box");
        let mut rng = StdRng::seed_from_u64(8);
        // ~12 atoms/rank at unit density
        let pos = jittered_cloud(&mut rng, cells, 1.0, 0.3);
        let n = pos.len();
        let gids: Vec<u64> = (0..n as u64).collect();
        let types = vec![0usize; n];
        let vels = vec![[0.0; 3]; n];
        let locals = assign_atoms(&gids, &types, &pos, &vels, &sim_box, &topo).expect("assign");

        let time_of = |scheme: Scheme, lb: bool| -> f64 {
            let mut cluster = build_cluster(topo, CostModel::default()).expect("cluster");
            let plan = plan_exchange(scheme, &topo, &sim_box, rc, 4).expect("plan");
            let (state, fwd) =
                ExchangeState::build(plan, sim_box, topo, &locals, rc, lb, &mut cluster)
                    .expect("exchange");
            let empty = vec![Vec::new(); topo.n_ranks()];
            let (_, rev) = state
                .reverse_force_reduce(&empty, &mut cluster)
                .expect("reverse");
            fwd.virtual_time_us + rev.virtual_time_us
        };
        let t_p2p = time_of(Scheme::P2P, false);
        let t_nb = time_of(Scheme::NodeBased, true);
        if !(t_nb < t_p2p) {
            return CheckResult::new(
                "comm-accounting",
                false,
                format!("sides {frac:?}: node-based {t_nb:.2}us not below p2p {t_p2p:.2}us"),
            );
        }
        detail.push_str(&format!(
            "sides {frac:?}: node-based {t_nb:.1}us < p2p {t_p2p:.1}us; "
        ));
    }
    CheckResult::new("comm-accounting", true, detail)
}

/// 1000-step NVE run: bounded energy drift, vanishing momentum drift, and
/// bitwise-identical final states across schemes.
pub fn check_nve() -> CheckResult {
    let mut structure = fcc_lattice("Cu", 3.615, [2, 2, 2]);
    maxwell_velocities(&mut structure, &[63.546], 60.0, 5).expect("masses");
    let topo = RankTopology::new([2, 2, 1]).expect("valid grid");
    let ff = || ForceField {
        params: desk_params(600, PrecisionMode::Double),
        cutoff: CutoffSpec::new(4.5, 1.5, 1.0, 50).expect("spec"),
        sel: vec![96],
    };
    let cfg = RunConfig {
        steps: 1000,
        dt: 0.2,
        masses: vec![63.546],
        scheme: Scheme::NodeBased,
        leaders: 4,
        load_balance: false,
        thermo_every: 25,
        sample_every: 0,
    };
    let out = match run(&structure, ff(), cfg.clone(), topo, CostModel::default()) {
        Ok(o) => o,
        Err(e) => return CheckResult::new("nve", false, e.to_string()),
    };
    let e0 = out.thermo[0].e_total;
    let drift = out
        .thermo
        .iter()
        .map(|t| (t.e_total - e0).abs())
        .fold(0.0f64, f64::max)
        / e0.abs();
    if drift >= 1e-4 {
        return CheckResult::new("nve", false, format!("energy drift {drift:.3e}"));
    }
    let mut pmax = 0.0f64;
    for d in 0..3 {
        let p: f64 = out.final_velocities.iter().map(|v| 63.546 * v[d]).sum();
        pmax = pmax.max(p.abs());
    }
    let p_per_step = pmax / cfg.steps as f64;
    if p_per_step >= 1e-10 {
        return CheckResult::new("nve", false, format!("momentum drift {p_per_step:.3e}/step"));
    }

    // cross-scheme determinism over a span including a rebuild
    let mut fingerprint: Option<Vec<[f64; 3]>> = None;
    for (scheme, lb) in [
        (Scheme::ThreeStage, false),
        (Scheme::P2P, false),
        (Scheme::NodeBased, false),
        (Scheme::NodeBased, true),
    ] {
        let cfg = RunConfig {
            steps: 100,
            dt: 0.5,
            scheme,
            load_balance: lb,
            ..cfg.clone()
        };
        let out = match run(&structure, ff(), cfg, topo, CostModel::default()) {
            Ok(o) => o,
            Err(e) => return CheckResult::new("nve", false, e.to_string()),
        };
        match &fingerprint {
            None => fingerprint = Some(out.final_positions),
            Some(f) => {
                if f != &out.final_positions {
                    return CheckResult::new(
                        "nve",
                        false,
                        format!("{scheme:?} lb={lb} diverged from the reference trajectory"),
                    );
                }
            }
        }
    }
    CheckResult::new(
        "nve",
        true,
        format!(
            "drift {drift:.3e} (< 1e-4), momentum {p_per_step:.3e}/step, schemes bitwise-identical"
        ),
    )
}

/// The full suite. `quick` trims the system counts for interactive use.
pub fn run_all(quick: bool) -> Vec<CheckResult> {
    run_all_filtered(quick, None)
}

/// Run the suite, optionally restricted to one named check.
pub fn run_all_filtered(quick: bool, only: Option<&str>) -> Vec<CheckResult> {
    let (systems, gradients, symmetries, trials) = if quick {
        (5, 5, 5, 5)
    } else {
        (20, 30, 10, 10)
    };
    type Check = (&'static str, Box<dyn Fn() -> CheckResult>);
    let checks: Vec<Check> = vec![
        ("ghost-model", Box::new(check_ghost_model)),
        ("message-counts", Box::new(check_message_counts)),
        ("ghost-sets", Box::new(move || check_ghost_sets(systems))),
        (
            "scheme-equivalence",
            Box::new(move || check_scheme_equivalence(systems)),
        ),
        ("gradients", Box::new(move || check_gradients(gradients))),
        ("symmetries", Box::new(move || check_symmetries(symmetries))),
        ("load-balance", Box::new(move || check_load_balance(trials))),
        ("lb-ghost-overhead", Box::new(check_lb_ghost_overhead)),
        ("mixed-precision", Box::new(check_mixed_precision)),
        ("rdf-overlap", Box::new(check_rdf_overlap)),
        ("gemm-oracle", Box::new(check_gemm_oracle)),
        ("comm-accounting", Box::new(check_comm_accounting)),
        ("nve", Box::new(check_nve)),
    ];
    checks
        .into_iter()
        .filter(|(name, _)| only.is_none_or(|o| o == *name))
        .map(|(_, f)| f())
        .collect()
}
