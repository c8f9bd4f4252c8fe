//! End-to-end checks of the dpmd binary: subcommand output, exit codes,
//! CSV shapes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dpmd() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpmd"))
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dpmd-cli-test-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const SMALL_RUN: &str = r#"{
  "system": { "lattice": "fcc-copper", "cells": [2, 2, 2] },
  "potential": { "rc": 4.5, "rcs": 1.5, "skin": 1.0, "sel": [96], "fitting_width": 16, "seed": 7 },
  "topology": { "rank_grid": [2, 2, 1] },
  "run": { "steps": 5, "temperature": 60.0, "thermo_every": 5 }
}"#;

#[test]
fn ghost_model_prints_the_paper_numbers() {
    let out = dpmd().args(["ghost-model", "--a", "1", "--r", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("124 179 1.4435"), "got: {text}");
}

#[test]
fn ghost_model_rejects_bad_input() {
    let out = dpmd().args(["ghost-model", "--a", "0", "--r", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_subcommand_gives_usage_and_nonzero_exit() {
    let out = dpmd().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("Usage") || stderr(&out).contains("usage"));
}

#[test]
fn run_emits_stable_csv_outputs() {
    let dir = temp_dir("run");
    let cfg = write_config(&dir, "run.json", SMALL_RUN);
    let run = |tag: &str| {
        let out = dpmd().arg("run").arg(&cfg).current_dir(&dir).output().unwrap();
        assert!(out.status.success(), "{tag}: {}", stderr(&out));
        std::fs::read_to_string(dir.join("thermo.csv")).unwrap()
    };
    let first = run("first");
    assert!(first.starts_with("step,e_potential,e_kinetic,e_total,temperature"));
    assert!(first.lines().count() >= 2);
    // fixed seeds: identical bytes run to run
    let second = run("second");
    assert_eq!(first, second);
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("steps,rebuilds,messages,copies"));
}

#[test]
fn config_constraint_violations_name_the_field() {
    let dir = temp_dir("badcfg");
    let cfg = write_config(
        &dir,
        "bad.json",
        r#"{
  "system": { "lattice": "fcc-copper", "cells": [2, 2, 2] },
  "potential": { "rc": 4.0, "rcs": 5.0 },
  "run": { "steps": 0 }
}"#,
    );
    let out = dpmd().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("potential.rcs"), "got: {}", stderr(&out));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = temp_dir("unknown");
    let cfg = write_config(
        &dir,
        "unknown.json",
        r#"{
  "system": { "lattice": "fcc-copper", "cells": [2, 2, 2], "mystery": 1 },
  "run": { "steps": 0 }
}"#,
    );
    let out = dpmd().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("mystery"), "got: {}", stderr(&out));
}

#[test]
fn minimal_config_gets_benchmark_defaults() {
    let dir = temp_dir("minimal");
    // only system + run: cutoffs, sel, dt, masses all defaulted; 0 steps
    // keeps the 512-neighbor copper default cheap
    let cfg = write_config(
        &dir,
        "minimal.json",
        r#"{
  "system": { "lattice": "fcc-copper", "cells": [3, 3, 3] },
  "run": { "steps": 0 }
}"#,
    );
    let out = dpmd().arg("run").arg(&cfg).current_dir(&dir).output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn bench_comm_reports_the_benchmark_counts() {
    let dir = temp_dir("bench");
    let cfg = write_config(&dir, "bench.json", SMALL_RUN);
    let out = dpmd()
        .arg("bench-comm")
        .arg(&cfg)
        .current_dir(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scheme,subbox_spec,rounds,peer_count,messages_per_rank,bytes,virtual_time_us,registered_regions"
    );
    let deep_p2p = text
        .lines()
        .find(|l| l.starts_with("p2p,0.5x0.5x0.5"))
        .expect("p2p deep-halo row");
    assert_eq!(deep_p2p.split(',').nth(3), Some("124"));
    let deep_nb = text
        .lines()
        .find(|l| l.starts_with("node-based,0.5x0.5x0.5"))
        .expect("node-based deep-halo row");
    assert_eq!(deep_nb.split(',').nth(3), Some("44"));
    assert_eq!(deep_nb.split(',').nth(4), Some("11"));
}

#[test]
fn rdf_emits_a_histogram_csv() {
    let dir = temp_dir("rdf");
    let traj = dir.join("traj.xyz");
    // two frames of a 3-atom system in a 10 A box
    std::fs::write(
        &traj,
        "3\nbox 10 10 10\nCu 1 1 1\nCu 3 1 1\nCu 5 1 1\n\
         3\nbox 10 10 10\nCu 1 1 1\nCu 3.1 1 1\nCu 5 1 1\n",
    )
    .unwrap();
    let out = dpmd()
        .arg("rdf")
        .arg(&traj)
        .args(["--rmax", "4", "--bins", "8"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("r,g\n"));
    assert_eq!(text.lines().count(), 9);
    // the 2 A pair falls in the bin centered at 2.25
    let busy: Vec<&str> = text.lines().skip(1).filter(|l| !l.ends_with(",0")).collect();
    assert!(!busy.is_empty());
}

#[test]
fn validate_single_check_passes() {
    let out = dpmd()
        .args(["validate", "--only", "message-counts"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("PASS message-counts"));
}

#[test]
fn validate_unknown_check_is_a_config_error() {
    let out = dpmd().args(["validate", "--only", "nonesuch"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}
