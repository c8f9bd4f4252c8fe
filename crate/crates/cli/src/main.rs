//! Command-line driver: MD runs, the communication bench, the ghost-count
//! model, the validation suites, and RDF analysis.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration error, 4 validation
//! failure, 5 runtime error.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use dpmd_core::engine::{self, ForceField, RunConfig};
use dpmd_core::geometry::{ghost_count_model, RankTopology, SimBox};
use dpmd_core::netsim::{build_cluster, RegistrationPolicy};
use dpmd_core::schemes::{assign_atoms, plan_exchange, ExchangeState, Scheme};
use dpmd_core::validate;

#[derive(Parser)]
#[command(
    name = "dpmd",
    about = "Desk-scale neural-network MD engine and communication-scheme simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full MD simulation from a JSON config; emits thermo and
    /// metrics CSV files.
    Run { config: PathBuf },
    /// One forward+reverse exchange per scheme per benchmark sub-box shape;
    /// emits a CSV comparing message counts, bytes and virtual time.
    BenchComm {
        config: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the ghost-count volume model for a sub-box side and cutoff.
    GhostModel {
        #[arg(long)]
        a: f64,
        #[arg(long)]
        r: f64,
    },
    /// Run every oracle suite (ghost sets, gradients, invariances, scheme
    /// equivalence, ...); nonzero exit on any failure.
    Validate {
        /// Optional config; parsed and validated before the suites run.
        config: Option<PathBuf>,
        /// Trim system counts for a faster pass.
        #[arg(long)]
        quick: bool,
        /// Run only the named check (e.g. "ghost-model").
        #[arg(long)]
        only: Option<String>,
    },
    /// Radial distribution function of an extended-XYZ trajectory.
    Rdf {
        trajectory: PathBuf,
        #[arg(long)]
        rmax: f64,
        #[arg(long, default_value_t = 100)]
        bins: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::BenchComm { config, out } => cmd_bench_comm(&config, out.as_deref()),
        Command::GhostModel { a, r } => cmd_ghost_model(a, r),
        Command::Validate { config, quick, only } => {
            cmd_validate(config.as_deref(), quick, only.as_deref())
        }
        Command::Rdf {
            trajectory,
            rmax,
            bins,
            out,
        } => cmd_rdf(&trajectory, rmax, bins, out.as_deref()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load_config(path: &Path) -> Result<config::Config, u8> {
    config::parse_config(path).map_err(|e| {
        eprintln!("config error: {e:#}");
        EXIT_CONFIG
    })
}

fn cmd_run(path: &Path) -> anyhow::Result<u8> {
    let cfg = match load_config(path) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    let ff = ForceField {
        params: cfg.params.clone(),
        cutoff: cfg.cutoff,
        sel: cfg.sel.clone(),
    };
    let run_cfg = RunConfig {
        steps: cfg.steps,
        dt: cfg.dt,
        masses: cfg.masses.clone(),
        scheme: cfg.scheme,
        leaders: cfg.leaders,
        load_balance: cfg.load_balance,
        thermo_every: cfg.thermo_every,
        sample_every: cfg.sample_every,
    };
    let out = engine::run(&cfg.structure, ff, run_cfg, cfg.topo, cfg.cost)
        .map_err(|e| anyhow!("run failed: {e}"))?;

    let mut thermo =
        String::from("step,e_potential,e_kinetic,e_total,temperature,comm_time_us,messages\n");
    for t in &out.thermo {
        thermo.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.step, t.e_potential, t.e_kinetic, t.e_total, t.temperature, t.comm_time_us, t.messages
        ));
    }
    std::fs::write(&cfg.thermo_csv, thermo)
        .with_context(|| format!("writing {}", cfg.thermo_csv.display()))?;

    let m = &out.metrics;
    let metrics = format!(
        "steps,rebuilds,messages,copies,net_bytes,noc_bytes,virtual_time_us\n{},{},{},{},{},{},{}\n",
        cfg.steps, out.rebuild_events, m.messages, m.copies, m.net_bytes, m.noc_bytes, m.virtual_time_us
    );
    std::fs::write(&cfg.metrics_csv, metrics)
        .with_context(|| format!("writing {}", cfg.metrics_csv.display()))?;

    if let Some(traj) = &cfg.traj_xyz {
        let mut text = String::new();
        for frame in &out.samples {
            let mut s = cfg.structure.clone();
            s.positions = frame.clone();
            s.velocities = vec![[0.0; 3]; frame.len()];
            text.push_str(&engine::format_xyz(&s));
        }
        std::fs::write(traj, text).with_context(|| format!("writing {}", traj.display()))?;
    }

    let last = out.thermo.last().expect("thermo never empty");
    println!(
        "{} steps done: E = {:.6} eV, T = {:.1} K, {} messages, {:.1} us virtual comm time",
        cfg.steps, last.e_total, last.temperature, m.messages, m.virtual_time_us
    );
    println!("thermo -> {}", cfg.thermo_csv.display());
    println!("metrics -> {}", cfg.metrics_csv.display());
    Ok(0)
}

fn cmd_bench_comm(path: &Path, out: Option<&Path>) -> anyhow::Result<u8> {
    let cfg = match load_config(path) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    let rc = cfg.rc;
    // the benchmark cluster: 96 nodes as 4x6x4
    let topo = RankTopology::new([8, 12, 4]).expect("static grid");
    let mut csv = String::from(
        "scheme,subbox_spec,rounds,peer_count,messages_per_rank,bytes,virtual_time_us,registered_regions\n",
    );
    for frac in [[1.0, 1.0, 1.0], [0.5, 0.5, 1.0], [0.5, 0.5, 0.5]] {
        let grid = topo.rank_grid();
        let sim_box = SimBox::new([
            grid[0] as f64 * frac[0] * rc,
            grid[1] as f64 * frac[1] * rc,
            grid[2] as f64 * frac[2] * rc,
        ])
        .map_err(|e| anyhow!("{e}"))?;
        // ~12 atoms per rank, uniform
        let mut rng = StdRng::seed_from_u64(20_000);
        let n = topo.n_ranks() * 12;
        let l = sim_box.lengths();
        let pos: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.random_range(0.0..l[0]),
                    rng.random_range(0.0..l[1]),
                    rng.random_range(0.0..l[2]),
                ]
            })
            .collect();
        let gids: Vec<u64> = (0..n as u64).collect();
        let types = vec![0usize; n];
        let vels = vec![[0.0; 3]; n];
        let locals =
            assign_atoms(&gids, &types, &pos, &vels, &sim_box, &topo).map_err(|e| anyhow!("{e}"))?;

        for scheme in [Scheme::ThreeStage, Scheme::P2P, Scheme::NodeBased] {
            let plan = plan_exchange(scheme, &topo, &sim_box, rc, cfg.leaders)
                .map_err(|e| anyhow!("{e}"))?;
            let rounds = match scheme {
                Scheme::ThreeStage => plan.rounds(),
                _ => 1,
            };
            let peer_count = match scheme {
                Scheme::ThreeStage => 6,
                Scheme::P2P => plan.p2p_peer_count(),
                Scheme::NodeBased => plan.node_peer_count(),
            };
            let msgs_per_rank = plan.avg_messages_per_rank().map_err(|e| anyhow!("{e}"))?;
            let neighbors = plan.neighbors_per_rank().map_err(|e| anyhow!("{e}"))?;
            let lb = scheme == Scheme::NodeBased;

            let mut cluster = build_cluster(topo, cfg.cost).expect("validated cost");
            let (state, fwd) =
                ExchangeState::build(plan, sim_box, topo, &locals, rc, lb, &mut cluster)
                    .map_err(|e| anyhow!("{e}"))?;
            let empty = vec![Vec::new(); topo.n_ranks()];
            let (_, rev) = state
                .reverse_force_reduce(&empty, &mut cluster)
                .map_err(|e| anyhow!("{e}"))?;
            let per_rank: Vec<usize> = (0..topo.n_ranks())
                .map(|r| neighbors[topo.numa_index(r)])
                .collect();
            let regions: usize = cluster
                .register_regions(&per_rank, RegistrationPolicy::PerNeighbor)
                .iter()
                .sum::<usize>()
                / topo.n_ranks();
            let bytes = fwd.net_bytes + rev.net_bytes;
            let time = fwd.virtual_time_us + rev.virtual_time_us;
            csv.push_str(&format!(
                "{},{}x{}x{},{},{},{},{},{:.3},{}\n",
                scheme.name(),
                frac[0],
                frac[1],
                frac[2],
                rounds,
                peer_count,
                msgs_per_rank,
                bytes,
                time,
                regions
            ));
        }
    }
    match out {
        Some(p) => {
            std::fs::write(p, &csv).with_context(|| format!("writing {}", p.display()))?;
            println!("bench-comm -> {}", p.display());
        }
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_ghost_model(a: f64, r: f64) -> anyhow::Result<u8> {
    match ghost_count_model(a, r) {
        Ok(g) => {
            println!("nghost_bs nghost_lb ratio");
            println!("{} {} {:.4}", g.nghost_bs, g.nghost_lb, g.ratio());
            Ok(0)
        }
        Err(e) => {
            eprintln!("config error: {e}");
            Ok(EXIT_CONFIG)
        }
    }
}

fn cmd_validate(config: Option<&Path>, quick: bool, only: Option<&str>) -> anyhow::Result<u8> {
    if let Some(path) = config {
        match load_config(path) {
            Ok(_) => println!("config OK: {}", path.display()),
            Err(code) => return Ok(code),
        }
    }
    let mut results = validate::run_all_filtered(quick, only);
    if results.is_empty() {
        eprintln!("config error: no check named '{}'", only.unwrap_or(""));
        return Ok(EXIT_CONFIG);
    }
    let results = std::mem::take(&mut results);
    let mut failed = 0usize;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {}: {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed}/{} checks failed", results.len());
        Ok(EXIT_VALIDATION)
    } else {
        println!("all {} checks passed", results.len());
        Ok(0)
    }
}

fn cmd_rdf(trajectory: &Path, rmax: f64, bins: usize, out: Option<&Path>) -> anyhow::Result<u8> {
    let frames = match engine::read_xyz_frames(trajectory) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("config error: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    let sim_box = SimBox::new(frames[0].box_lengths).map_err(|e| anyhow!("{e}"))?;
    let mut acc = match engine::RdfAccumulator::new(rmax, bins) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("config error: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    for frame in &frames {
        if let Err(e) = acc.add_frame(&frame.positions, &sim_box) {
            eprintln!("config error: {e}");
            return Ok(EXIT_CONFIG);
        }
    }
    let mut csv = String::from("r,g\n");
    for (r, g) in acc.finish() {
        csv.push_str(&format!("{r},{g}\n"));
    }
    let mut sink: Box<dyn Write> = match out {
        Some(p) => Box::new(
            std::fs::File::create(p).with_context(|| format!("writing {}", p.display()))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    sink.write_all(csv.as_bytes())?;
    Ok(0)
}
