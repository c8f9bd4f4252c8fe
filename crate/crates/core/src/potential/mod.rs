//! Deep-Potential-style force field: smoothed environment matrix, per-type
//! embedding nets, symmetry-preserving descriptor, fitting net, and analytic
//! forces via the reverse pass.
//!
//! The descriptor is the two-factor contraction
//! `D_i = (G^T R)(R^T G_2) / N_pad^2`, which keeps translational, rotational
//! and permutational invariance. Environment rows stay in f64 no matter the
//! precision mode; the networks and the contraction run in the working
//! scalar, and the geometric projection back onto atom displacements returns
//! to f64.

pub mod mlp;
pub mod params;

pub use mlp::{Dense, Mlp, MlpCache};
pub use params::{
    init_params, load_params, params_from_text, params_to_text, save_params, ModelDims,
    ModelParams, PrecisionMode, TypedModel,
};

use crate::error::{Error, Result};
use crate::neighbor::{AtomKey, NeighborList};
use crate::scalar::Real;
use crate::tsgemm::{gemm_nn, Matrix};

/// Smooth inverse-distance weight and its derivative.
///
/// `s = 1/r` up to `rcs`, then `u(x)/r` with the quintic
/// `u(x) = x^3(-6x^2 + 15x - 10) + 1`, and 0 beyond `rc`. C2-continuous at
/// both joints.
pub fn switch_fn(r: f64, rcs: f64, rc: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::invalid_input(format!("switch_fn needs r > 0, got {r}")));
    }
    if r >= rc {
        return Ok((0.0, 0.0));
    }
    if r <= rcs {
        return Ok((1.0 / r, -1.0 / (r * r)));
    }
    let span = rc - rcs;
    let x = (r - rcs) / span;
    let u = x * x * x * (-6.0 * x * x + 15.0 * x - 10.0) + 1.0;
    let du_dx = -30.0 * x * x * (x - 1.0) * (x - 1.0);
    let s = u / r;
    let ds = du_dx / (span * r) - u / (r * r);
    Ok((s, ds))
}

/// One occupied environment-matrix row.
#[derive(Debug, Clone, Copy)]
pub struct EnvRow {
    /// Store slot of the neighbor.
    pub slot: usize,
    /// Neighbor type (group) of the row.
    pub neighbor_type: usize,
    pub r: f64,
    pub s: f64,
    pub ds_dr: f64,
    /// Unit displacement (pos_j - pos_i)/r.
    pub unit: [f64; 3],
    /// The row values s * (1, ux, uy, uz).
    pub row: [f64; 4],
}

/// Environment matrix of one center atom: occupied rows in padded order
/// (types ascending, (gid, image) ascending within a type). Rows past the
/// actual neighbor count, and neighbors at or beyond rc, are identically
/// zero and therefore not stored.
#[derive(Debug, Clone)]
pub struct EnvMatrix {
    pub rows: Vec<EnvRow>,
    /// Occupied rows per type group.
    pub group_sizes: Vec<usize>,
    /// Capacity (sel) per type group.
    pub group_caps: Vec<usize>,
    /// Total padded row count: sum of sel capacities.
    pub n_pad: usize,
}

impl EnvMatrix {
    /// Materialize the full padded n_pad x 4 matrix (zero rows included).
    pub fn padded_matrix(&self) -> Matrix<f64> {
        let mut m = Matrix::zeros(self.n_pad, 4);
        let mut offset = 0usize;
        let mut idx = 0usize;
        for (t, &gsize) in self.group_sizes.iter().enumerate() {
            for g in 0..gsize {
                let row = &self.rows[idx];
                debug_assert_eq!(row.neighbor_type, t);
                for c in 0..4 {
                    m.set(offset + g, c, row.row[c]);
                }
                idx += 1;
            }
            offset += self.group_caps[t];
        }
        m
    }
}

/// Build the environment matrix for `center_slot` from its neighbor type
/// groups. Neighbors at r >= rc contribute zero rows and are dropped here
/// (the matrix capacity sel applies to atoms inside rc, not to the wider
/// skin-padded list); overlapping atoms (r == 0) are an error, and so is
/// exceeding a type's sel rows.
pub fn build_env_matrix(
    center_slot: usize,
    type_groups: &[Vec<usize>],
    positions: &[[f64; 3]],
    rc: f64,
    rcs: f64,
    sel: &[usize],
) -> Result<EnvMatrix> {
    let cp = positions[center_slot];
    let mut rows = Vec::new();
    let mut group_sizes = vec![0usize; sel.len()];
    for (t, group) in type_groups.iter().enumerate() {
        for &slot in group {
            let q = positions[slot];
            let u = [q[0] - cp[0], q[1] - cp[1], q[2] - cp[2]];
            let r = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            if r >= rc {
                continue; // skin atom: analytically a zero row
            }
            let (s, ds_dr) = switch_fn(r, rcs, rc)?;
            let unit = [u[0] / r, u[1] / r, u[2] / r];
            rows.push(EnvRow {
                slot,
                neighbor_type: t,
                r,
                s,
                ds_dr,
                unit,
                row: [s, s * unit[0], s * unit[1], s * unit[2]],
            });
            group_sizes[t] += 1;
        }
        if group_sizes[t] > sel[t] {
            return Err(Error::CapacityExceeded {
                atom: center_slot,
                neighbor_type: t,
                count: group_sizes[t],
                sel: sel[t],
            });
        }
    }
    Ok(EnvMatrix {
        rows,
        group_sizes,
        group_caps: sel.to_vec(),
        n_pad: sel.iter().sum(),
    })
}

/// The two descriptor factors: P = G^T R (m1 x 4) and Q = R^T G2 (4 x m2),
/// accumulated over occupied rows in ascending row order.
fn contract_pq<T: Real>(
    env: &EnvMatrix,
    g: &Matrix<T>,
    m1: usize,
    m2: usize,
) -> (Matrix<T>, Matrix<T>) {
    let mut p = Matrix::<T>::zeros(m1, 4);
    let mut q = Matrix::<T>::zeros(4, m2);
    for (j, row) in env.rows.iter().enumerate() {
        let gr = g.row(j);
        let rr = [
            T::from_f64(row.row[0]),
            T::from_f64(row.row[1]),
            T::from_f64(row.row[2]),
            T::from_f64(row.row[3]),
        ];
        for a in 0..m1 {
            let ga = gr[a];
            for c in 0..4 {
                let v = p.get(a, c) + ga * rr[c];
                p.set(a, c, v);
            }
        }
        for (c, &rc_) in rr.iter().enumerate() {
            for b in 0..m2 {
                let v = q.get(c, b) + rc_ * gr[b];
                q.set(c, b, v);
            }
        }
    }
    (p, q)
}

/// Symmetry-preserving descriptor `D = (G^T R)(R^T G2) / n_pad^2`, flattened
/// row-major to 1 x (m1*m2). `g` holds one embedding-output row per occupied
/// environment row; zero rows of R contribute nothing regardless of G.
pub fn descriptor<T: Real>(
    env: &EnvMatrix,
    g: &Matrix<T>,
    m1: usize,
    m2: usize,
) -> Result<Matrix<T>> {
    if g.rows() != env.rows.len() || g.cols() < m1 || m2 > m1 {
        return Err(Error::Dimension(format!(
            "descriptor needs {} x >= {m1} embedding rows (m2 {m2} <= m1), got {} x {}",
            env.rows.len(),
            g.rows(),
            g.cols()
        )));
    }
    let (p, q) = contract_pq(env, g, m1, m2);
    let inv_n2 = T::from_f64(1.0 / (env.n_pad as f64 * env.n_pad as f64));
    let mut d = gemm_nn(&p, &q)?;
    for v in d.as_mut_slice() {
        *v *= inv_n2;
    }
    Matrix::from_vec(1, m1 * m2, d.as_slice().to_vec())
}

/// Force contribution produced while evaluating one center atom.
#[derive(Debug, Clone, Copy)]
pub struct ForceContribution {
    /// Global id of the evaluated center; reductions sum ascending in this
    /// key so results are independent of who evaluated what.
    pub center_gid: u64,
    /// Store slot the force acts on (center or one of its neighbors).
    pub target_slot: usize,
    pub force: [f64; 3],
}

/// Energies and force contributions from evaluating a set of centers.
#[derive(Debug, Clone, Default)]
pub struct EvalOutput {
    /// (center gid, atomic energy), in evaluation order.
    pub energies: Vec<(u64, f64)>,
    pub contributions: Vec<ForceContribution>,
}

/// Evaluate the centers of a neighbor list: forward energies plus reverse
/// force contributions, routed per the precision mode. `sel` is the
/// environment-matrix capacity (at rc); the list itself may be built with a
/// wider skin capacity.
pub fn evaluate_centers(
    positions: &[[f64; 3]],
    types: &[usize],
    keys: &[AtomKey],
    list: &NeighborList,
    params: &ModelParams,
    rc: f64,
    rcs: f64,
    sel: &[usize],
) -> Result<EvalOutput> {
    let mut out = EvalOutput::default();
    for ordinal in 0..list.n_centers() {
        let center_slot = list.center_slot(ordinal);
        let env = build_env_matrix(center_slot, list.type_groups(ordinal), positions, rc, rcs, sel)?;
        let center_type = types[center_slot];
        let (energy, d_du) = match params.mode {
            PrecisionMode::Double => eval_center(&env, &params.master, center_type, false)?,
            PrecisionMode::MixFp32 => eval_center(&env, &params.single, center_type, false)?,
            PrecisionMode::MixFp16 => eval_center(&env, &params.single, center_type, true)?,
        };
        let center_gid = keys[center_slot].0;
        out.energies.push((center_gid, energy));

        let mut center_force = [0.0; 3];
        for (row, g) in env.rows.iter().zip(&d_du) {
            out.contributions.push(ForceContribution {
                center_gid,
                target_slot: row.slot,
                force: [-g[0], -g[1], -g[2]],
            });
            for d in 0..3 {
                center_force[d] += g[d];
            }
        }
        out.contributions.push(ForceContribution {
            center_gid,
            target_slot: center_slot,
            force: center_force,
        });
    }
    Ok(out)
}

/// Forward + backward pass for one center in working precision `T`.
/// Returns the atomic energy and dE/d(displacement) per occupied row, both
/// in f64.
fn eval_center<T: Real>(
    env: &EnvMatrix,
    model: &TypedModel<T>,
    center_type: usize,
    fp16_first: bool,
) -> Result<(f64, Vec<[f64; 3]>)> {
    let m1 = model.m1;
    let m2 = model.m2;
    let n_occ = env.rows.len();
    let fitting = model.fitting_net(center_type);

    if n_occ == 0 {
        // all-zero environment: descriptor is zero, energy is the net's
        // value at zero, no force terms
        let d = Matrix::<T>::zeros(1, m1 * m2);
        let cache = fitting.forward(&d, fp16_first)?;
        return Ok((fitting.output(&cache).get(0, 0).into_f64(), Vec::new()));
    }

    // per-type embedding forward over the group's s column
    let mut g = Matrix::<T>::zeros(n_occ, m1);
    let mut caches = Vec::with_capacity(env.group_sizes.len());
    let mut row0 = 0usize;
    for (t, &gsize) in env.group_sizes.iter().enumerate() {
        if gsize == 0 {
            caches.push(None);
            continue;
        }
        let mut s_col = Matrix::<T>::zeros(gsize, 1);
        for j in 0..gsize {
            s_col.set(j, 0, T::from_f64(env.rows[row0 + j].s));
        }
        let net = model.embedding_net(center_type, t);
        let cache = net.forward(&s_col, false)?;
        {
            let gt = net.output(&cache);
            for j in 0..gsize {
                g.row_mut(row0 + j).copy_from_slice(gt.row(j));
            }
        }
        caches.push(Some(cache));
        row0 += gsize;
    }

    // R in working precision (kept for the backward pass)
    let mut r_mat = Matrix::<T>::zeros(n_occ, 4);
    for (j, row) in env.rows.iter().enumerate() {
        for c in 0..4 {
            r_mat.set(j, c, T::from_f64(row.row[c]));
        }
    }

    let (p, q) = contract_pq(env, &g, m1, m2);
    let inv_n2 = T::from_f64(1.0 / (env.n_pad as f64 * env.n_pad as f64));
    let mut d = gemm_nn(&p, &q)?;
    for v in d.as_mut_slice() {
        *v *= inv_n2;
    }
    let d_flat = Matrix::from_vec(1, m1 * m2, d.as_slice().to_vec())?;

    let fit_cache = fitting.forward(&d_flat, fp16_first)?;
    let energy = fitting.output(&fit_cache).get(0, 0).into_f64();

    // reverse: scalar head -> descriptor
    let ones = Matrix::from_vec(1, 1, vec![T::one()])?;
    let dd_flat = fitting.backward(&fit_cache, &ones, fp16_first)?;

    // descriptor -> P, Q
    let mut dp = Matrix::<T>::zeros(m1, 4);
    let mut dq = Matrix::<T>::zeros(4, m2);
    for a in 0..m1 {
        for b in 0..m2 {
            let dd = dd_flat.get(0, a * m2 + b) * inv_n2;
            for c in 0..4 {
                dp.set(a, c, dp.get(a, c) + dd * q.get(c, b));
                dq.set(c, b, dq.get(c, b) + dd * p.get(a, c));
            }
        }
    }

    // P, Q -> G, R
    let mut dg = Matrix::<T>::zeros(n_occ, m1);
    let mut dr = Matrix::<T>::zeros(n_occ, 4);
    for j in 0..n_occ {
        let rr = r_mat.row(j);
        let gr = g.row(j);
        for a in 0..m1 {
            let mut acc = T::zero();
            for c in 0..4 {
                acc += dp.get(a, c) * rr[c];
            }
            if a < m2 {
                for c in 0..4 {
                    acc += rr[c] * dq.get(c, a);
                }
            }
            dg.set(j, a, acc);
        }
        for c in 0..4 {
            let mut acc = T::zero();
            for a in 0..m1 {
                acc += gr[a] * dp.get(a, c);
            }
            for b in 0..m2 {
                acc += gr[b] * dq.get(c, b);
            }
            dr.set(j, c, acc);
        }
    }

    // embedding backward per type group: dE/ds per row
    let mut ds_rows = vec![T::zero(); n_occ];
    let mut row0 = 0usize;
    for (t, &gsize) in env.group_sizes.iter().enumerate() {
        if gsize == 0 {
            continue;
        }
        let cache = caches[t].as_ref().expect("cache for occupied group");
        let mut dout = Matrix::<T>::zeros(gsize, m1);
        for j in 0..gsize {
            dout.row_mut(j).copy_from_slice(dg.row(row0 + j));
        }
        let net = model.embedding_net(center_type, t);
        let dsin = net.backward(cache, &dout, false)?;
        for j in 0..gsize {
            ds_rows[row0 + j] = dsin.get(j, 0);
        }
        row0 += gsize;
    }

    // geometric projection in f64: dE/du per occupied row
    let mut d_du = Vec::with_capacity(n_occ);
    for (j, row) in env.rows.iter().enumerate() {
        let d_r0 = dr.get(j, 0).into_f64();
        let a = [
            dr.get(j, 1).into_f64(),
            dr.get(j, 2).into_f64(),
            dr.get(j, 3).into_f64(),
        ];
        let d_s = ds_rows[j].into_f64();
        let u = row.unit;
        let dot = a[0] * u[0] + a[1] * u[1] + a[2] * u[2];
        let radial = (d_r0 + d_s) * row.ds_dr + dot * row.ds_dr;
        let tangential = row.s / row.r;
        let mut grad = [0.0; 3];
        for dim in 0..3 {
            grad[dim] = radial * u[dim] + tangential * (a[dim] - dot * u[dim]);
        }
        d_du.push(grad);
    }

    Ok((energy, d_du))
}

/// Whole-system evaluation result with forces reduced onto atoms.
#[derive(Debug, Clone)]
pub struct ClusterEval {
    pub e_total: f64,
    pub energies: Vec<f64>,
    pub forces: Vec<[f64; 3]>,
}

/// Reduce force contributions onto `n_targets` atoms, summing each target's
/// list in ascending center-gid order for bit reproducibility.
pub fn reduce_contributions(n_targets: usize, contributions: &[ForceContribution]) -> Vec<[f64; 3]> {
    let mut per_target: Vec<Vec<(u64, [f64; 3])>> = vec![Vec::new(); n_targets];
    for c in contributions {
        per_target[c.target_slot].push((c.center_gid, c.force));
    }
    let mut forces = vec![[0.0; 3]; n_targets];
    for (slot, mut list) in per_target.into_iter().enumerate() {
        list.sort_by_key(|&(gid, _)| gid);
        for (_, f) in list {
            for d in 0..3 {
                forces[slot][d] += f[d];
            }
        }
    }
    forces
}

/// Evaluate an isolated (non-periodic) cluster of atoms: all atoms are
/// centers, global ids are the input indices.
pub fn evaluate_cluster(
    positions: &[[f64; 3]],
    types: &[usize],
    params: &ModelParams,
    rc: f64,
    rcs: f64,
    sel: &[usize],
) -> Result<ClusterEval> {
    let keys: Vec<AtomKey> = (0..positions.len() as u64).map(|g| (g, [0, 0, 0])).collect();
    let centers: Vec<usize> = (0..positions.len()).collect();
    let list = crate::neighbor::build_neighbor_list(positions, types, &keys, &centers, rc, sel)?;
    let out = evaluate_centers(positions, types, &keys, &list, params, rc, rcs, sel)?;

    let mut energies = vec![0.0; positions.len()];
    for &(gid, e) in &out.energies {
        energies[gid as usize] = e;
    }
    let e_total = energies.iter().sum();
    let forces = reduce_contributions(positions.len(), &out.contributions);
    Ok(ClusterEval {
        e_total,
        energies,
        forces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn desk_params(mode: PrecisionMode) -> ModelParams {
        let dims = ModelDims {
            fitting_width: 16,
            ..ModelDims::default()
        };
        init_params(1234, &dims, mode).unwrap()
    }

    /// Random cluster with a minimum pair separation (jittered lattice).
    fn random_cluster(rng: &mut StdRng, n_side: usize, spacing: f64, jitter: f64) -> Vec<[f64; 3]> {
        let mut pos = Vec::new();
        for z in 0..n_side {
            for y in 0..n_side {
                for x in 0..n_side {
                    pos.push([
                        x as f64 * spacing + rng.random_range(-jitter..jitter),
                        y as f64 * spacing + rng.random_range(-jitter..jitter),
                        z as f64 * spacing + rng.random_range(-jitter..jitter),
                    ]);
                }
            }
        }
        pos
    }

    #[test]
    fn switch_fn_branches() {
        let (rcs, rc) = (2.0, 6.0);
        assert_eq!(switch_fn(6.0, rcs, rc).unwrap(), (0.0, 0.0));
        assert_eq!(switch_fn(7.5, rcs, rc).unwrap(), (0.0, 0.0));

        let (s, ds) = switch_fn(rcs, rcs, rc).unwrap();
        assert_eq!(s, 1.0 / rcs);
        assert_eq!(ds, -1.0 / (rcs * rcs));

        // midpoint of the smoothing window: u(0.5) = 0.5
        let r = rcs + 0.5 * (rc - rcs);
        let (s, _) = switch_fn(r, rcs, rc).unwrap();
        assert!((s - 0.5 / r).abs() < 1e-15);

        assert!(switch_fn(0.0, rcs, rc).is_err());
        assert!(switch_fn(-1.0, rcs, rc).is_err());
    }

    #[test]
    fn switch_fn_is_c1_at_joints() {
        let (rcs, rc) = (2.0, 6.0);
        let h = 1e-7;
        for r0 in [rcs, rc - 1e-9] {
            let (_, ds) = switch_fn(r0, rcs, rc).unwrap();
            let (sp, _) = switch_fn(r0 + h, rcs, rc).unwrap();
            let (sm, _) = switch_fn(r0 - h, rcs, rc).unwrap();
            let fd = (sp - sm) / (2.0 * h);
            assert!((ds - fd).abs() < 1e-5, "r={r0}: {ds} vs {fd}");
        }
    }

    #[test]
    fn env_matrix_isolated_atom_is_zero() {
        let pos = [[0.0, 0.0, 0.0]];
        let env = build_env_matrix(0, &[vec![]], &pos, 6.0, 2.0, &[4]).unwrap();
        assert!(env.rows.is_empty());
        let padded = env.padded_matrix();
        assert!(padded.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(padded.rows(), 4);
    }

    #[test]
    fn env_matrix_axis_neighbor_row() {
        // neighbor on +x inside rcs: row = (1/r, 1/r, 0, 0)
        let pos = [[0.0, 0.0, 0.0], [1.5, 0.0, 0.0]];
        let env = build_env_matrix(0, &[vec![1]], &pos, 6.0, 2.0, &[4]).unwrap();
        assert_eq!(env.rows.len(), 1);
        let row = env.rows[0].row;
        assert_eq!(row[0], 1.0 / 1.5);
        assert_eq!(row[1], 1.0 / 1.5);
        assert_eq!(row[2], 0.0);
        assert_eq!(row[3], 0.0);
    }

    #[test]
    fn env_matrix_drops_skin_atoms() {
        // neighbor beyond rc but within list cutoff: zero row, not stored
        let pos = [[0.0, 0.0, 0.0], [6.5, 0.0, 0.0]];
        let env = build_env_matrix(0, &[vec![1]], &pos, 6.0, 2.0, &[4]).unwrap();
        assert!(env.rows.is_empty());
    }

    #[test]
    fn descriptor_is_zero_for_zero_environment() {
        let params = desk_params(PrecisionMode::Double);
        let pos = [[0.0, 0.0, 0.0]];
        let types = [0usize];
        let out = evaluate_cluster(&pos, &types, &params, 6.0, 2.0, &[8]).unwrap();
        assert_eq!(out.forces[0], [0.0, 0.0, 0.0]);
        // the energy is the fitting net at the zero descriptor, not zero
        assert!(out.e_total.is_finite());

        // the standalone operation on an empty environment
        let env = build_env_matrix(0, &[vec![]], &pos, 6.0, 2.0, &[8]).unwrap();
        let g = Matrix::<f64>::zeros(0, 16);
        let d = descriptor(&env, &g, 16, 4).unwrap();
        assert!(d.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(d.cols(), 64);
    }

    #[test]
    fn descriptor_row_permutation_is_bitwise_invariant_after_sorting() {
        // the canonical neighbor sort hands descriptor() rows in a fixed
        // order; feeding an externally permuted list through the sort gives
        // the identical matrix, hence a bitwise-equal descriptor
        let params = desk_params(PrecisionMode::Double);
        let model = &params.master;
        let pos = [
            [0.0, 0.0, 0.0],
            [1.9, 0.3, -0.2],
            [-1.2, 1.1, 0.9],
            [0.4, -1.7, 1.0],
        ];
        let eval_d = |group: Vec<usize>| {
            let mut sorted = group.clone();
            sorted.sort_unstable(); // canonical (gid == slot here)
            let env = build_env_matrix(0, &[sorted], &pos, 6.0, 2.0, &[8]).unwrap();
            let s_col = Matrix::from_vec(
                env.rows.len(),
                1,
                env.rows.iter().map(|r| r.s).collect(),
            )
            .unwrap();
            let net = model.embedding_net(0, 0);
            let cache = net.forward(&s_col, false).unwrap();
            let g = net.output(&cache).clone();
            descriptor(&env, &g, model.m1, model.m2).unwrap()
        };
        let base = eval_d(vec![1, 2, 3]);
        let permuted = eval_d(vec![3, 1, 2]);
        assert_eq!(base, permuted);
    }

    #[test]
    fn atom_order_permutation_keeps_energy_within_tolerance() {
        // reshuffling the atom input order (ids follow the atoms) reorders
        // the descriptor sums; energies agree to strict tolerance
        let params = desk_params(PrecisionMode::Double);
        let pos = [
            [0.0, 0.0, 0.0],
            [1.9, 0.3, -0.2],
            [-1.2, 1.1, 0.9],
            [0.4, -1.7, 1.0],
        ];
        let types = [0usize; 4];
        let base = evaluate_cluster(&pos, &types, &params, 6.0, 2.0, &[8]).unwrap();

        let perm = [0usize, 3, 1, 2];
        let ppos: Vec<[f64; 3]> = perm.iter().map(|&i| pos[i]).collect();
        let ptypes: Vec<usize> = perm.iter().map(|&i| types[i]).collect();
        let permuted = evaluate_cluster(&ppos, &ptypes, &params, 6.0, 2.0, &[8]).unwrap();

        let rel = (base.e_total - permuted.e_total).abs() / base.e_total.abs();
        assert!(rel < 1e-12, "rel = {rel}");
        for (new_idx, &old_idx) in perm.iter().enumerate() {
            let rel = (base.energies[old_idx] - permuted.energies[new_idx]).abs()
                / base.energies[old_idx].abs();
            assert!(rel < 1e-12, "atom {old_idx}: rel = {rel}");
        }
    }

    #[test]
    fn slot_permutation_with_fixed_ids_is_bitwise_invariant() {
        // same atoms, same global ids, different store slot order: the
        // canonical (gid, image) neighbor sort makes energies and per-row
        // environment matrices bitwise identical
        let params = desk_params(PrecisionMode::Double);
        let pos = [
            [0.0, 0.0, 0.0],
            [1.9, 0.3, -0.2],
            [-1.2, 1.1, 0.9],
            [0.4, -1.7, 1.0],
        ];
        let types = [0usize; 4];
        let keys: Vec<crate::neighbor::AtomKey> =
            (0..4u64).map(|g| (g, [0, 0, 0])).collect();
        let centers: Vec<usize> = (0..4).collect();
        let list =
            crate::neighbor::build_neighbor_list(&pos, &types, &keys, &centers, 6.0, &[8]).unwrap();
        let base = evaluate_centers(&pos, &types, &keys, &list, &params, 6.0, 2.0, &[8]).unwrap();

        // permute slots, keep gids attached to atoms
        let perm = [2usize, 0, 3, 1];
        let ppos: Vec<[f64; 3]> = perm.iter().map(|&i| pos[i]).collect();
        let ptypes: Vec<usize> = perm.iter().map(|&i| types[i]).collect();
        let pkeys: Vec<crate::neighbor::AtomKey> = perm.iter().map(|&i| keys[i]).collect();
        let pcenters: Vec<usize> = (0..4).collect();
        let plist =
            crate::neighbor::build_neighbor_list(&ppos, &ptypes, &pkeys, &pcenters, 6.0, &[8])
                .unwrap();
        let shuffled =
            evaluate_centers(&ppos, &ptypes, &pkeys, &plist, &params, 6.0, 2.0, &[8]).unwrap();

        let mut base_by_gid: Vec<(u64, f64)> = base.energies.clone();
        base_by_gid.sort_by_key(|&(g, _)| g);
        let mut shuf_by_gid: Vec<(u64, f64)> = shuffled.energies.clone();
        shuf_by_gid.sort_by_key(|&(g, _)| g);
        assert_eq!(base_by_gid, shuf_by_gid);
    }

    #[test]
    fn rotation_leaves_energy_invariant() {
        let params = desk_params(PrecisionMode::Double);
        let mut rng = StdRng::seed_from_u64(5);
        let pos = random_cluster(&mut rng, 3, 2.2, 0.3);
        let types = vec![0usize; pos.len()];
        let base = evaluate_cluster(&pos, &types, &params, 6.0, 2.0, &[64]).unwrap();

        // rotation by a random orthogonal matrix (Gram-Schmidt on a random basis)
        let q = {
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
        };
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
        let rot = evaluate_cluster(&rotated, &types, &params, 6.0, 2.0, &[64]).unwrap();
        let rel = (base.e_total - rot.e_total).abs() / base.e_total.abs();
        assert!(rel < 1e-10, "rel = {rel}");
    }

    #[test]
    fn translation_is_bitwise_invariant_on_grid_positions() {
        let params = desk_params(PrecisionMode::Double);
        let mut rng = StdRng::seed_from_u64(8);
        // positions snapped to 2^-20 so the shift adds exactly
        let snap = |x: f64| (x * 1048576.0).round() / 1048576.0;
        let pos: Vec<[f64; 3]> = random_cluster(&mut rng, 3, 2.2, 0.3)
            .into_iter()
            .map(|p| [snap(p[0]), snap(p[1]), snap(p[2])])
            .collect();
        let types = vec![0usize; pos.len()];
        let base = evaluate_cluster(&pos, &types, &params, 6.0, 2.0, &[64]).unwrap();
        let shift = [17.25, -3.5, 129.0];
        let moved: Vec<[f64; 3]> = pos
            .iter()
            .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
            .collect();
        let shifted = evaluate_cluster(&moved, &types, &params, 6.0, 2.0, &[64]).unwrap();
        assert_eq!(base.e_total, shifted.e_total);
        assert_eq!(base.forces, shifted.forces);
    }

    #[test]
    fn dimer_forces_are_antisymmetric() {
        let params = desk_params(PrecisionMode::Double);
        let pos = [[0.0, 0.0, 0.0], [1.3, 0.7, -0.4]];
        let types = [0usize, 0];
        let out = evaluate_cluster(&pos, &types, &params, 6.0, 2.0, &[8]).unwrap();
        for d in 0..3 {
            assert!(
                (out.forces[0][d] + out.forces[1][d]).abs() < 1e-12,
                "component {d}: {:?} vs {:?}",
                out.forces[0],
                out.forces[1]
            );
        }
    }

    #[test]
    fn analytic_forces_match_finite_differences() {
        let params = desk_params(PrecisionMode::Double);
        let mut rng = StdRng::seed_from_u64(21);
        let pos = random_cluster(&mut rng, 2, 2.4, 0.35);
        let types = vec![0usize; pos.len()];
        let sel = [64usize];
        let base = evaluate_cluster(&pos, &types, &params, 6.0, 2.0, &sel).unwrap();

        let h = 1e-5;
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
                let ep = evaluate_cluster(&plus, &types, &params, 6.0, 2.0, &sel).unwrap();
                let em = evaluate_cluster(&minus, &types, &params, 6.0, 2.0, &sel).unwrap();
                let fd = -(ep.e_total - em.e_total) / (2.0 * h);
                let rel = (base.forces[atom][d] - fd).abs() / fmax.max(1e-8);
                assert!(rel < 1e-6, "atom {atom} dim {d}: {} vs {fd}", base.forces[atom][d]);
            }
        }
    }

    #[test]
    fn forces_sum_to_zero() {
        let params = desk_params(PrecisionMode::Double);
        let mut rng = StdRng::seed_from_u64(33);
        let pos = random_cluster(&mut rng, 3, 2.1, 0.3);
        let types = vec![0usize; pos.len()];
        let out = evaluate_cluster(&pos, &types, &params, 6.0, 2.0, &[64]).unwrap();
        for d in 0..3 {
            let total: f64 = out.forces.iter().map(|f| f[d]).sum();
            assert!(total.abs() < 1e-10, "dim {d}: {total}");
        }
    }

    #[test]
    fn mixed_precision_tracks_double() {
        let mut rng = StdRng::seed_from_u64(55);
        let pos = random_cluster(&mut rng, 3, 2.1, 0.3);
        let types = vec![0usize; pos.len()];
        let double = evaluate_cluster(&pos, &types, &desk_params(PrecisionMode::Double), 6.0, 2.0, &[64]).unwrap();
        let fp32 = evaluate_cluster(&pos, &types, &desk_params(PrecisionMode::MixFp32), 6.0, 2.0, &[64]).unwrap();
        let fp16 = evaluate_cluster(&pos, &types, &desk_params(PrecisionMode::MixFp16), 6.0, 2.0, &[64]).unwrap();

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
        assert!(e32 > 0.0 && e32 < 1e-3, "fp32 rel rms {e32}");
        assert!(e16 > 0.0 && e16 < 1e-2, "fp16 rel rms {e16}");
        assert_ne!(double.e_total, fp32.e_total);
    }
}
