//! JSON run configuration: schema, defaults, cross-field validation.
//!
//! Unknown keys are rejected. Defaults follow the benchmark setups: copper
//! gets an 8 A cutoff with sel 512 and a 1 fs step, water 6 A with sel
//! {46, 92} and 0.5 fs; both use a 2 A skin, 50-step rebuilds and a
//! (240, 240, 240) fitting net.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::Deserialize;

use dpmd_core::engine::{fcc_lattice, read_xyz, water_lattice, Structure};
use dpmd_core::geometry::RankTopology;
use dpmd_core::neighbor::CutoffSpec;
use dpmd_core::netsim::CostModel;
use dpmd_core::potential::{init_params, load_params, ModelDims, ModelParams, PrecisionMode};
use dpmd_core::schemes::Scheme;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    #[serde(default)]
    pub potential: PotentialSection,
    #[serde(default)]
    pub topology: TopologySection,
    #[serde(default)]
    pub costmodel: CostSection,
    pub run: RunSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// "fcc-copper", "water", or "file".
    pub lattice: String,
    #[serde(default)]
    pub cells: Option<[usize; 3]>,
    #[serde(default)]
    pub lattice_constant: Option<f64>,
    /// Structure file (extended XYZ) when lattice = "file".
    #[serde(default)]
    pub file: Option<PathBuf>,
    /// Per-type masses (amu); defaulted per lattice kind.
    #[serde(default)]
    pub masses: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    #[serde(default)]
    pub rc: Option<f64>,
    #[serde(default)]
    pub rcs: Option<f64>,
    #[serde(default)]
    pub skin: Option<f64>,
    #[serde(default)]
    pub sel: Option<Vec<usize>>,
    #[serde(default)]
    pub embed_widths: Option<[usize; 2]>,
    #[serde(default)]
    pub m1: Option<usize>,
    #[serde(default)]
    pub m2: Option<usize>,
    #[serde(default)]
    pub fitting_width: Option<usize>,
    #[serde(default)]
    pub fitting_hidden: Option<usize>,
    /// "double" | "mix-fp32" | "mix-fp16".
    #[serde(default)]
    pub precision: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Load weights from a parameter file instead of seeding them.
    #[serde(default)]
    pub param_file: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default)]
    pub rank_grid: Option<[usize; 3]>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(default)]
    pub alpha_net: Option<f64>,
    #[serde(default)]
    pub beta_net: Option<f64>,
    #[serde(default)]
    pub alpha_noc: Option<f64>,
    #[serde(default)]
    pub beta_noc: Option<f64>,
    #[serde(default)]
    pub tni_per_node: Option<usize>,
    #[serde(default)]
    pub comm_threads_per_leader: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub steps: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub temperature: Option<f64>,
    /// "three-stage" | "p2p" | "node-based".
    #[serde(default)]
    pub scheme: Option<String>,
    #[serde(default)]
    pub leaders: Option<usize>,
    #[serde(default)]
    pub load_balance: Option<bool>,
    #[serde(default)]
    pub rebuild_every: Option<usize>,
    #[serde(default)]
    pub thermo_every: Option<usize>,
    #[serde(default)]
    pub sample_every: Option<usize>,
    #[serde(default)]
    pub velocity_seed: Option<u64>,
    #[serde(default)]
    pub thermo_csv: Option<PathBuf>,
    #[serde(default)]
    pub metrics_csv: Option<PathBuf>,
    #[serde(default)]
    pub traj_xyz: Option<PathBuf>,
}

/// Fully validated configuration with every default applied.
pub struct Config {
    pub structure: Structure,
    pub masses: Vec<f64>,
    pub params: ModelParams,
    pub cutoff: CutoffSpec,
    pub sel: Vec<usize>,
    pub topo: RankTopology,
    pub cost: CostModel,
    pub steps: usize,
    pub dt: f64,
    pub scheme: Scheme,
    pub leaders: usize,
    pub load_balance: bool,
    pub thermo_every: usize,
    pub sample_every: usize,
    pub thermo_csv: PathBuf,
    pub metrics_csv: PathBuf,
    pub traj_xyz: Option<PathBuf>,
    pub rc: f64,
}

/// Lattice-kind defaults: (rc, sel, dt, masses, lattice constant).
struct KindDefaults {
    rc: f64,
    sel: Vec<usize>,
    dt: f64,
    masses: Vec<f64>,
    lattice_constant: f64,
}

fn kind_defaults(lattice: &str) -> anyhow::Result<KindDefaults> {
    match lattice {
        "fcc-copper" => Ok(KindDefaults {
            rc: 8.0,
            sel: vec![512],
            dt: 1.0,
            masses: vec![63.546],
            lattice_constant: 3.615,
        }),
        "water" => Ok(KindDefaults {
            rc: 6.0,
            sel: vec![46, 92], // (O, H) type order
            dt: 0.5,
            masses: vec![15.999, 1.008],
            lattice_constant: 3.104,
        }),
        "file" => Ok(KindDefaults {
            rc: 6.0,
            sel: vec![512],
            dt: 1.0,
            masses: vec![1.0],
            lattice_constant: 1.0,
        }),
        other => bail!("system.lattice: unknown kind '{other}' (fcc-copper | water | file)"),
    }
}

pub fn parse_config(path: &Path) -> anyhow::Result<Config> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let file: ConfigFile = serde_json::from_str(&text).context("parsing config JSON")?;
    build_config(file, path)
}

fn build_config(file: ConfigFile, config_path: &Path) -> anyhow::Result<Config> {
    let defaults = kind_defaults(&file.system.lattice)?;

    // system
    let cells = file.system.cells.unwrap_or([4, 4, 4]);
    if cells.iter().any(|&c| c == 0) {
        bail!("system.cells: all dimensions must be nonzero");
    }
    let a = file.system.lattice_constant.unwrap_or(defaults.lattice_constant);
    let mut structure = match file.system.lattice.as_str() {
        "fcc-copper" => fcc_lattice("Cu", a, cells),
        "water" => water_lattice(a, cells),
        "file" => {
            let rel = file
                .system
                .file
                .as_ref()
                .ok_or_else(|| anyhow!("system.file: required when lattice = \"file\""))?;
            let resolved = if rel.is_absolute() {
                rel.clone()
            } else {
                config_path.parent().unwrap_or(Path::new(".")).join(rel)
            };
            read_xyz(&resolved).map_err(|e| anyhow!("system.file: {e}"))?
        }
        _ => unreachable!("kind_defaults validated"),
    };
    let ntypes = structure
        .types
        .iter()
        .copied()
        .max()
        .map_or(1, |t| t + 1);
    let masses = file.system.masses.unwrap_or(defaults.masses);
    if masses.len() < ntypes {
        bail!(
            "system.masses: {} masses for {} types",
            masses.len(),
            ntypes
        );
    }
    if masses.iter().any(|&m| m <= 0.0) {
        bail!("system.masses: masses must be positive");
    }

    // potential
    let p = &file.potential;
    let rc = p.rc.unwrap_or(defaults.rc);
    let rcs = p.rcs.unwrap_or(2.0);
    let skin = p.skin.unwrap_or(2.0);
    let rebuild_every = file.run.rebuild_every.unwrap_or(50);
    let cutoff = CutoffSpec::new(rc, rcs, skin, rebuild_every)
        .map_err(|e| anyhow!("potential.rcs: {e}"))?;
    let sel = p.sel.clone().unwrap_or(defaults.sel);
    if sel.len() < ntypes {
        bail!("potential.sel: {} entries for {} types", sel.len(), ntypes);
    }
    let dims = ModelDims {
        ntypes,
        embed_widths: p.embed_widths.unwrap_or([8, 16]),
        m1: p.m1.unwrap_or(16),
        m2: p.m2.unwrap_or(4),
        fitting_width: p.fitting_width.unwrap_or(240),
        fitting_hidden: p.fitting_hidden.unwrap_or(3),
        ..ModelDims::default()
    };
    let precision = PrecisionMode::parse(p.precision.as_deref().unwrap_or("double"))
        .map_err(|e| anyhow!("potential.precision: {e}"))?;
    let params = match &p.param_file {
        Some(rel) => {
            let resolved = if rel.is_absolute() {
                rel.clone()
            } else {
                config_path.parent().unwrap_or(Path::new(".")).join(rel)
            };
            load_params(&resolved, precision).map_err(|e| anyhow!("potential.param_file: {e}"))?
        }
        None => init_params(p.seed.unwrap_or(1), &dims, precision)
            .map_err(|e| anyhow!("potential: {e}"))?,
    };
    if params.dims.ntypes < ntypes {
        bail!(
            "potential: model has {} types, system needs {}",
            params.dims.ntypes,
            ntypes
        );
    }

    // topology and cost model
    let rank_grid = file.topology.rank_grid.unwrap_or([2, 2, 1]);
    let topo = RankTopology::new(rank_grid).map_err(|e| anyhow!("topology.rank_grid: {e}"))?;
    let base = CostModel::default();
    let c = &file.costmodel;
    let cost = CostModel {
        alpha_net: c.alpha_net.unwrap_or(base.alpha_net),
        beta_net: c.beta_net.unwrap_or(base.beta_net),
        alpha_noc: c.alpha_noc.unwrap_or(base.alpha_noc),
        beta_noc: c.beta_noc.unwrap_or(base.beta_noc),
        tni_per_node: c.tni_per_node.unwrap_or(base.tni_per_node),
        comm_threads_per_leader: c
            .comm_threads_per_leader
            .unwrap_or(base.comm_threads_per_leader),
    };
    cost.validate().map_err(|e| anyhow!("costmodel: {e}"))?;

    // run
    let r = &file.run;
    let dt = r.dt.unwrap_or(defaults.dt);
    if dt <= 0.0 {
        bail!("run.dt: must be positive");
    }
    let temperature = r.temperature.unwrap_or(300.0);
    if temperature < 0.0 {
        bail!("run.temperature: must be nonnegative");
    }
    let scheme = Scheme::parse(r.scheme.as_deref().unwrap_or("node-based"))
        .map_err(|e| anyhow!("run.scheme: {e}"))?;
    let leaders = r.leaders.unwrap_or(4);
    if !matches!(leaders, 1 | 2 | 4) {
        bail!("run.leaders: must be 1, 2 or 4");
    }
    let load_balance = r.load_balance.unwrap_or(scheme == Scheme::NodeBased);
    if load_balance && scheme != Scheme::NodeBased {
        bail!("run.load_balance: requires scheme = \"node-based\"");
    }

    // initialize velocities when none came with the structure
    let velocity_seed = r.velocity_seed.unwrap_or(12345);
    if structure.velocities.iter().all(|v| *v == [0.0; 3]) && temperature > 0.0 {
        dpmd_core::engine::maxwell_velocities(&mut structure, &masses, temperature, velocity_seed)
            .map_err(|e| anyhow!("velocity initialization: {e}"))?;
    }

    Ok(Config {
        structure,
        masses,
        params,
        cutoff,
        sel,
        topo,
        cost,
        steps: r.steps,
        dt,
        scheme,
        leaders,
        load_balance,
        thermo_every: r.thermo_every.unwrap_or(10),
        sample_every: r.sample_every.unwrap_or(0),
        thermo_csv: r.thermo_csv.clone().unwrap_or_else(|| PathBuf::from("thermo.csv")),
        metrics_csv: r.metrics_csv.clone().unwrap_or_else(|| PathBuf::from("metrics.csv")),
        traj_xyz: r.traj_xyz.clone(),
        rc,
    })
}
