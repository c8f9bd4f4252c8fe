//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `cargo test --test acceptance -- --nocapture` to see them all).

use dpmd_core::validate::{self, CheckResult};

fn report(criterion: &str, r: &CheckResult) {
    let status = if r.passed { "PASS" } else { "FAIL" };
    println!("{status} {criterion}: {} -- {}", r.name, r.detail);
    assert!(r.passed, "{criterion} failed: {}", r.detail);
}

#[test]
fn criterion_01_ghost_model_exactness() {
    report("criterion 1 (ghost-model exactness)", &validate::check_ghost_model());
}

#[test]
fn criterion_02_message_and_neighbor_counts() {
    report(
        "criterion 2 (message/neighbor counts)",
        &validate::check_message_counts(),
    );
}

#[test]
fn criterion_03_scheme_equivalence() {
    report("criterion 3 (ghost sets)", &validate::check_ghost_sets(20));
    report(
        "criterion 3 (forces vs global reference)",
        &validate::check_scheme_equivalence(20),
    );
}

#[test]
fn criterion_04_gradient_correctness() {
    report("criterion 4 (gradients)", &validate::check_gradients(30));
}

#[test]
fn criterion_05_symmetry_suite() {
    report("criterion 5 (symmetries)", &validate::check_symmetries(10));
}

#[test]
fn criterion_06_load_balance() {
    report("criterion 6 (load balance)", &validate::check_load_balance(10));
    report(
        "criterion 6 (replication overhead vs volume model)",
        &validate::check_lb_ghost_overhead(),
    );
}

#[test]
fn criterion_07_mixed_precision() {
    report(
        "criterion 7 (force deviation envelopes)",
        &validate::check_mixed_precision(),
    );
    report("criterion 7 (rdf overlap)", &validate::check_rdf_overlap());
}

#[test]
fn criterion_08_gemm_oracle_equivalence() {
    report("criterion 8 (gemm oracle)", &validate::check_gemm_oracle());
}

#[test]
fn criterion_09_communication_accounting() {
    report(
        "criterion 9 (registration + virtual time)",
        &validate::check_comm_accounting(),
    );
}

#[test]
fn criterion_10_nve_conservation() {
    report("criterion 10 (nve conservation)", &validate::check_nve());
}
