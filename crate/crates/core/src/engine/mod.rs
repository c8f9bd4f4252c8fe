//! Velocity-Verlet NVE integration over the decomposed system with per-step
//! ghost exchange and periodic rebuild/migration.
//!
//! Units: eV, Angstrom, femtoseconds, amu. Accelerations pick up the
//! standard conversion so that `x''[A/fs^2] = FTM2V * F[eV/A] / m[amu]`.

pub mod analysis;
pub mod structure;

pub use analysis::{rdf, RdfAccumulator};
pub use structure::{
    fcc_lattice, format_xyz, maxwell_velocities, parse_xyz_frames, read_xyz, read_xyz_frames,
    water_lattice, write_xyz, Structure,
};

use crate::error::{Error, Result};
use crate::geometry::{RankTopology, SimBox};
use crate::neighbor::{build_neighbor_list, needs_rebuild, CutoffSpec, NeighborList};
use crate::netsim::{build_cluster, Cluster, CostModel, SimMetrics};
use crate::potential::{evaluate_centers, ModelParams};
use crate::schemes::{assign_atoms, migrate, plan_exchange, ExchangeState, RankLocals, Scheme};

/// Boltzmann constant (eV/K).
pub const KB: f64 = 8.617333262e-5;
/// Kinetic-energy conversion: eV per amu*(A/fs)^2.
pub const MVV2E: f64 = 103.64269652680507;
/// Acceleration conversion: (A/fs^2) per (eV/A/amu).
pub const FTM2V: f64 = 1.0 / MVV2E;

/// Everything the engine needs about the force field.
#[derive(Debug, Clone)]
pub struct ForceField {
    pub params: ModelParams,
    pub cutoff: CutoffSpec,
    /// Per-type neighbor capacity.
    pub sel: Vec<usize>,
}

/// Run controls.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub steps: usize,
    /// Time step (fs).
    pub dt: f64,
    /// Per-type masses (amu).
    pub masses: Vec<f64>,
    pub scheme: Scheme,
    pub leaders: usize,
    pub load_balance: bool,
    pub thermo_every: usize,
    /// Collect a position snapshot every this many steps (0 = never).
    pub sample_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            steps: 0,
            dt: 1.0,
            masses: vec![1.0],
            scheme: Scheme::NodeBased,
            leaders: 4,
            load_balance: true,
            thermo_every: 10,
            sample_every: 0,
        }
    }
}

/// Per-emission thermodynamic state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoRecord {
    pub step: usize,
    pub e_potential: f64,
    pub e_kinetic: f64,
    pub e_total: f64,
    pub temperature: f64,
    /// Cumulative virtual communication time (us).
    pub comm_time_us: f64,
    /// Cumulative inter-node message count.
    pub messages: u64,
}

/// Result of a run: thermo stream, cumulative metrics, final state by
/// global id, optional trajectory samples.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub thermo: Vec<ThermoRecord>,
    pub metrics: SimMetrics,
    pub rebuild_events: usize,
    pub final_positions: Vec<[f64; 3]>,
    pub final_velocities: Vec<[f64; 3]>,
    pub samples: Vec<Vec<[f64; 3]>>,
}

/// The distributed simulation state.
pub struct Engine {
    sim_box: SimBox,
    topo: RankTopology,
    ff: ForceField,
    cfg: RunConfig,
    cluster: Cluster,
    locals: Vec<RankLocals>,
    exchange: ExchangeState,
    lists: Vec<NeighborList>,
    forces: Vec<Vec<[f64; 3]>>,
    e_potential: f64,
    n_atoms: usize,
    pub rebuild_events: usize,
}

impl Engine {
    /// Decompose the structure, run the initial exchange and compute forces.
    pub fn new(
        structure: &Structure,
        ff: ForceField,
        cfg: RunConfig,
        topo: RankTopology,
        cost: CostModel,
    ) -> Result<Self> {
        if cfg.dt <= 0.0 {
            return Err(Error::invalid_input(format!("dt must be positive, got {}", cfg.dt)));
        }
        if cfg.masses.len() < ff.sel.len() || cfg.masses.iter().any(|&m| m <= 0.0) {
            return Err(Error::invalid_input("every type needs a positive mass"));
        }
        let sim_box = SimBox::new(structure.box_lengths)?;
        let n = structure.n_atoms();
        let gids: Vec<u64> = (0..n as u64).collect();
        let locals = assign_atoms(
            &gids,
            &structure.types,
            &structure.positions,
            &structure.velocities,
            &sim_box,
            &topo,
        )?;
        let mut cluster = build_cluster(topo, cost)?;
        let cutoff = ff.cutoff.list_cutoff();
        let plan = plan_exchange(cfg.scheme, &topo, &sim_box, cutoff, cfg.leaders)?;
        let (exchange, _) = ExchangeState::build(
            plan,
            sim_box,
            topo,
            &locals,
            cutoff,
            cfg.load_balance,
            &mut cluster,
        )?;
        let mut engine = Engine {
            sim_box,
            topo,
            ff,
            cfg,
            cluster,
            locals,
            exchange,
            lists: Vec::new(),
            forces: Vec::new(),
            e_potential: 0.0,
            n_atoms: n,
            rebuild_events: 1,
        };
        engine.build_lists()?;
        engine.compute_forces()?;
        Ok(engine)
    }

    fn build_lists(&mut self) -> Result<()> {
        let cutoff = self.ff.cutoff.list_cutoff();
        // sel bounds the environment matrix at rc; the skin-padded list
        // gets the volume-scaled capacity
        let scale = (cutoff / self.ff.cutoff.rc).powi(3);
        let list_sel: Vec<usize> = self
            .ff
            .sel
            .iter()
            .map(|&s| (s as f64 * scale).ceil() as usize)
            .collect();
        let mut lists = Vec::with_capacity(self.topo.n_ranks());
        for rank in 0..self.topo.n_ranks() {
            let store = &self.exchange.stores[rank];
            let keys = store.keys();
            let centers = self.exchange.centers_for_rank(rank);
            lists.push(build_neighbor_list(
                &store.positions,
                &store.types,
                &keys,
                &centers,
                cutoff,
                &list_sel,
            )?);
        }
        self.lists = lists;
        Ok(())
    }

    /// Evaluate the potential on every rank and reduce forces onto owners.
    fn compute_forces(&mut self) -> Result<()> {
        let mut contribs = Vec::with_capacity(self.topo.n_ranks());
        let mut energies: Vec<(u64, f64)> = Vec::with_capacity(self.n_atoms);
        for rank in 0..self.topo.n_ranks() {
            let store = &self.exchange.stores[rank];
            let keys = store.keys();
            let out = evaluate_centers(
                &store.positions,
                &store.types,
                &keys,
                &self.lists[rank],
                &self.ff.params,
                self.ff.cutoff.rc,
                self.ff.cutoff.rcs,
                &self.ff.sel,
            )?;
            energies.extend(out.energies);
            contribs.push(out.contributions);
        }
        energies.sort_by_key(|&(gid, _)| gid);
        self.e_potential = energies.iter().map(|&(_, e)| e).sum();
        let (forces, _) = self
            .exchange
            .reverse_force_reduce(&contribs, &mut self.cluster)?;
        self.forces = forces;
        Ok(())
    }

    fn half_kick(&mut self) {
        let dt = self.cfg.dt;
        for rank in 0..self.topo.n_ranks() {
            let l = &mut self.locals[rank];
            for i in 0..l.len() {
                let m = self.cfg.masses[l.types[i]];
                let scale = FTM2V * dt * 0.5 / m;
                for d in 0..3 {
                    l.velocities[i][d] += scale * self.forces[rank][i][d];
                }
            }
        }
    }

    fn drift(&mut self) {
        let dt = self.cfg.dt;
        for l in &mut self.locals {
            for i in 0..l.len() {
                for d in 0..3 {
                    l.positions[i][d] += l.velocities[i][d] * dt;
                }
            }
        }
    }

    fn rebuild(&mut self) -> Result<()> {
        migrate(&mut self.locals, &self.sim_box, &self.topo, &mut self.cluster)?;
        let cutoff = self.ff.cutoff.list_cutoff();
        let (exchange, _) = ExchangeState::build(
            self.exchange.plan.clone(),
            self.sim_box,
            self.topo,
            &self.locals,
            cutoff,
            self.cfg.load_balance,
            &mut self.cluster,
        )?;
        self.exchange = exchange;
        self.rebuild_events += 1;
        self.build_lists()
    }

    /// Kinetic energy and temperature, reduced in global-id order.
    fn kinetic(&self) -> (f64, f64) {
        let mut per_atom: Vec<(u64, f64)> = Vec::with_capacity(self.n_atoms);
        for l in &self.locals {
            for i in 0..l.len() {
                let m = self.cfg.masses[l.types[i]];
                let v = l.velocities[i];
                per_atom.push((
                    l.gids[i],
                    0.5 * m * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) * MVV2E,
                ));
            }
        }
        per_atom.sort_by_key(|&(gid, _)| gid);
        let ke: f64 = per_atom.iter().map(|&(_, e)| e).sum();
        let t = if self.n_atoms == 0 {
            0.0
        } else {
            2.0 * ke / (3.0 * self.n_atoms as f64 * KB)
        };
        (ke, t)
    }

    pub fn thermo(&self, step: usize) -> ThermoRecord {
        let (ke, t) = self.kinetic();
        let m = self.cluster.metrics();
        ThermoRecord {
            step,
            e_potential: self.e_potential,
            e_kinetic: ke,
            e_total: self.e_potential + ke,
            temperature: t,
            comm_time_us: m.virtual_time_us,
            messages: m.messages,
        }
    }

    /// Positions by global id (wrapped owner coordinates).
    pub fn positions_by_gid(&self) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; self.n_atoms];
        for l in &self.locals {
            for i in 0..l.len() {
                out[l.gids[i] as usize] = l.positions[i];
            }
        }
        out
    }

    pub fn velocities_by_gid(&self) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; self.n_atoms];
        for l in &self.locals {
            for i in 0..l.len() {
                out[l.gids[i] as usize] = l.velocities[i];
            }
        }
        out
    }

    /// Forces by global id, from the last evaluation.
    pub fn forces_by_gid(&self) -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; self.n_atoms];
        for (rank, l) in self.locals.iter().enumerate() {
            for i in 0..l.len() {
                out[l.gids[i] as usize] = self.forces[rank][i];
            }
        }
        out
    }

    pub fn metrics(&self) -> &SimMetrics {
        self.cluster.metrics()
    }

    pub fn e_potential(&self) -> f64 {
        self.e_potential
    }

    pub fn set_dt(&mut self, dt: f64) {
        self.cfg.dt = dt;
    }

    /// Advance one velocity-Verlet step (step index is 1-based within a
    /// run; rebuilds trigger when the cadence says so).
    pub fn step(&mut self, step: usize) -> Result<()> {
        self.half_kick();
        self.drift();
        if needs_rebuild(step, &self.ff.cutoff) {
            self.rebuild()?;
        } else {
            self.exchange
                .refresh_positions(&self.locals, &mut self.cluster)?;
        }
        self.compute_forces()?;
        self.half_kick();
        Ok(())
    }

    /// Flip all velocities (time-reversal experiments).
    pub fn negate_velocities(&mut self) {
        for l in &mut self.locals {
            for v in &mut l.velocities {
                for d in 0..3 {
                    v[d] = -v[d];
                }
            }
        }
    }
}

/// Run a full simulation; thermo is emitted at step 0, every
/// `thermo_every` steps, and at the last step.
pub fn run(
    structure: &Structure,
    ff: ForceField,
    cfg: RunConfig,
    topo: RankTopology,
    cost: CostModel,
) -> Result<RunOutput> {
    let sample_every = cfg.sample_every;
    let thermo_every = cfg.thermo_every.max(1);
    let steps = cfg.steps;
    let mut engine = Engine::new(structure, ff, cfg, topo, cost)?;

    let mut thermo = vec![engine.thermo(0)];
    let mut samples = Vec::new();
    if sample_every > 0 {
        samples.push(engine.positions_by_gid());
    }
    for step in 1..=steps {
        engine.step(step)?;
        if step % thermo_every == 0 || step == steps {
            thermo.push(engine.thermo(step));
        }
        if sample_every > 0 && step % sample_every == 0 {
            samples.push(engine.positions_by_gid());
        }
    }
    Ok(RunOutput {
        thermo,
        metrics: engine.cluster.metrics().clone(),
        rebuild_events: engine.rebuild_events,
        final_positions: engine.positions_by_gid(),
        final_velocities: engine.velocities_by_gid(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{init_params, ModelDims, PrecisionMode};

    fn desk_ff(seed: u64) -> ForceField {
        let dims = ModelDims {
            fitting_width: 16,
            ..ModelDims::default()
        };
        ForceField {
            params: init_params(seed, &dims, PrecisionMode::Double).unwrap(),
            cutoff: CutoffSpec::new(4.5, 1.5, 1.0, 50).unwrap(),
            sel: vec![96],
        }
    }

    fn desk_structure() -> Structure {
        let mut s = fcc_lattice("Cu", 3.615, [2, 2, 2]);
        maxwell_velocities(&mut s, &[63.546], 60.0, 9).unwrap();
        s
    }

    fn desk_cfg(steps: usize) -> RunConfig {
        RunConfig {
            steps,
            dt: 1.0,
            masses: vec![63.546],
            scheme: Scheme::NodeBased,
            leaders: 4,
            load_balance: false,
            thermo_every: 10,
            sample_every: 0,
        }
    }

    #[test]
    fn zero_steps_emits_initial_thermo_only() {
        let topo = RankTopology::new([2, 2, 1]).unwrap();
        let out = run(
            &desk_structure(),
            desk_ff(3),
            desk_cfg(0),
            topo,
            CostModel::default(),
        )
        .unwrap();
        assert_eq!(out.thermo.len(), 1);
        assert_eq!(out.thermo[0].step, 0);
        assert_eq!(out.rebuild_events, 1);
    }

    #[test]
    fn free_flight_when_forces_vanish() {
        // a single atom in a periodic box sees no neighbors: F = 0
        let mut s = fcc_lattice("Cu", 20.0, [1, 1, 1]);
        s.positions.truncate(1);
        s.velocities.truncate(1);
        s.types.truncate(1);
        s.velocities[0] = [0.01, -0.02, 0.005];
        let topo = RankTopology::new([2, 2, 1]).unwrap();
        let cfg = RunConfig {
            steps: 5,
            dt: 1.0,
            ..desk_cfg(5)
        };
        let out = run(&s, desk_ff(1), cfg, topo, CostModel::default()).unwrap();
        let p = out.final_positions[0];
        for d in 0..3 {
            let expect = s.positions[0][d] + 5.0 * s.velocities[0][d];
            assert!((p[d] - expect).abs() < 1e-12, "dim {d}");
        }
        assert_eq!(out.final_velocities[0], s.velocities[0]);
    }

    #[test]
    fn kinematics_of_a_constant_force_half_step() {
        // v = 0: after one tiny step x has moved (F/m) * FTM2V * dt^2 / 2
        // under the step's initial force
        let mut s = desk_structure();
        s.velocities = vec![[0.0; 3]; s.n_atoms()];
        let topo = RankTopology::new([2, 2, 1]).unwrap();
        let ff = desk_ff(4);
        let mut engine = Engine::new(&s, ff, desk_cfg(1), topo, CostModel::default()).unwrap();
        let f0 = engine.forces_by_gid();
        let x0 = engine.positions_by_gid();
        let dt = 1e-3;
        engine.set_dt(dt);
        engine.step(1).unwrap();
        let x1 = engine.positions_by_gid();
        for (i, (a, b)) in x0.iter().zip(&x1).enumerate() {
            for d in 0..3 {
                let expect = a[d] + 0.5 * FTM2V * f0[i][d] / 63.546 * dt * dt;
                assert!(
                    (b[d] - expect).abs() < 1e-12,
                    "atom {i} dim {d}: {} vs {expect}",
                    b[d]
                );
            }
        }
    }

    #[test]
    fn rebuild_cadence_counts_events() {
        let topo = RankTopology::new([2, 2, 1]).unwrap();
        let out = run(
            &desk_structure(),
            desk_ff(5),
            desk_cfg(110),
            topo,
            CostModel::default(),
        )
        .unwrap();
        assert_eq!(out.rebuild_events, 3); // steps 0, 50, 100
    }

    #[test]
    fn nve_energy_is_conserved() {
        let topo = RankTopology::new([2, 2, 1]).unwrap();
        let cfg = RunConfig {
            dt: 0.2,
            ..desk_cfg(1000)
        };
        let out = run(&desk_structure(), desk_ff(6), cfg, topo, CostModel::default()).unwrap();
        let e0 = out.thermo.first().unwrap().e_total;
        let drift = out
            .thermo
            .iter()
            .map(|t| (t.e_total - e0).abs())
            .fold(0.0f64, f64::max);
        assert!(
            drift / e0.abs() < 1e-4,
            "relative drift {} (E0 = {e0})",
            drift / e0.abs()
        );
    }

    #[test]
    fn momentum_stays_zero() {
        let topo = RankTopology::new([2, 2, 1]).unwrap();
        let out = run(
            &desk_structure(),
            desk_ff(7),
            desk_cfg(100),
            topo,
            CostModel::default(),
        )
        .unwrap();
        for d in 0..3 {
            let p: f64 = out.final_velocities.iter().map(|v| 63.546 * v[d]).sum();
            assert!(p.abs() < 1e-10 * 100.0, "dim {d}: {p}");
        }
    }

    #[test]
    fn time_reversal_returns_home() {
        let topo = RankTopology::new([2, 2, 1]).unwrap();
        let s = desk_structure();
        let cfg = RunConfig {
            dt: 0.2,
            ..desk_cfg(0)
        };
        let mut engine = Engine::new(&s, desk_ff(8), cfg, topo, CostModel::default()).unwrap();
        let x0 = engine.positions_by_gid();
        let n = 100;
        for step in 1..=n {
            engine.step(step).unwrap();
        }
        engine.negate_velocities();
        for step in (n + 1)..=(2 * n) {
            engine.step(step).unwrap();
        }
        let x1 = engine.positions_by_gid();
        // positions may come home in an equivalent periodic image
        let l = s.box_lengths;
        let max_err = x0
            .iter()
            .zip(&x1)
            .flat_map(|(a, b)| {
                (0..3).map(move |d| {
                    let diff = a[d] - b[d];
                    (diff - l[d] * (diff / l[d]).round()).abs()
                })
            })
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-8, "max return error {max_err}");
    }

    #[test]
    fn cross_scheme_trajectories_are_bitwise_identical() {
        let topo = RankTopology::new([2, 2, 2]).unwrap();
        let mut s = fcc_lattice("Cu", 3.615, [2, 2, 2]);
        maxwell_velocities(&mut s, &[63.546], 80.0, 13).unwrap();
        let mut reference: Option<(Vec<[f64; 3]>, Vec<[f64; 3]>)> = None;
        for (scheme, lb) in [
            (Scheme::ThreeStage, false),
            (Scheme::P2P, false),
            (Scheme::NodeBased, false),
            (Scheme::NodeBased, true),
        ] {
            let cfg = RunConfig {
                steps: 60,
                dt: 0.5,
                masses: vec![63.546],
                scheme,
                leaders: 4,
                load_balance: lb,
                thermo_every: 20,
                sample_every: 0,
            };
            let out = run(&s, desk_ff(12), cfg, topo, CostModel::default()).unwrap();
            match &reference {
                None => reference = Some((out.final_positions, out.final_velocities)),
                Some((rp, rv)) => {
                    assert_eq!(&out.final_positions, rp, "{scheme:?} lb={lb} positions");
                    assert_eq!(&out.final_velocities, rv, "{scheme:?} lb={lb} velocities");
                }
            }
        }
    }
}
