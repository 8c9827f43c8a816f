//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line followed by its individual checks.
//!
//! Run with `cargo test -p rfvar-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rfvar::analytic::{self, CleanVarianceForm};
use rfvar_cli::verify::{self, Check, VerifyContext};

fn verdict(criterion: u32, title: &str, checks: &[Check], started: Instant) -> bool {
    let pass = !checks.is_empty() && checks.iter().all(|c| c.pass);
    println!(
        "criterion {criterion}: {} {title} ({:.1}s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    for c in checks {
        println!("    {c}");
    }
    pass
}

#[test]
fn criterion_01_closed_form_vs_quadrature() {
    let t = Instant::now();
    let checks = verify::closed_form_vs_quadrature(&VerifyContext::default());
    let fast = t.elapsed().as_secs_f64() < 5.0;
    let mut all = checks;
    all.push(Check {
        name: "runtime-seconds".into(),
        measured: t.elapsed().as_secs_f64(),
        tol: 5.0,
        pass: fast,
    });
    assert!(verdict(1, "noise variance closed form vs quadrature", &all, t));
}

#[test]
fn criterion_02_exact_limits() {
    let t = Instant::now();
    let checks = verify::exact_limits(&VerifyContext::default());
    assert!(verdict(2, "narrow-width and ridgeless limits", &checks, t));
}

#[test]
fn criterion_03_noise_variance_anchor() {
    let t = Instant::now();
    let mut checks = verify::mc_anchor(&VerifyContext::default());
    let secs = t.elapsed().as_secs_f64();
    checks.push(Check {
        name: "runtime-seconds".into(),
        measured: secs,
        tol: 120.0,
        pass: secs <= 120.0,
    });
    // the anchor constant itself comes from the closed form
    let closed = analytic::variance_noise(0.1, 1.0, 1.0).unwrap();
    checks.push(Check {
        name: "anchor-constant".into(),
        measured: (closed - verify::NOISE_VARIANCE_ANCHOR).abs(),
        tol: 5e-7,
        pass: (closed - verify::NOISE_VARIANCE_ANCHOR).abs() <= 5e-7,
    });
    assert!(verdict(3, "Monte Carlo noise variance at the anchor point", &checks, t));
}

#[test]
fn criterion_04_full_decomposition_convergence() {
    let t = Instant::now();
    let checks = verify::mc_convergence(&VerifyContext::default());
    assert!(verdict(4, "Monte Carlo components vs closed forms", &checks, t));
}

#[test]
fn criterion_05_pruning_equivalence() {
    let t = Instant::now();
    let checks = verify::pruning_equivalence(&VerifyContext::default());
    assert!(verdict(5, "masked risk vs rescaled-ridge risk", &checks, t));
}

#[test]
fn criterion_06_operator_gap_ordering() {
    let t = Instant::now();
    let checks = verify::operator_gap_ordering();
    assert!(verdict(6, "operator gap decreasing in rho", &checks, t));
}

#[test]
fn criterion_07_shape_suite() {
    let t = Instant::now();
    let checks = verify::shape_suite(&VerifyContext {
        clean_form: CleanVarianceForm::Corrected,
        ..Default::default()
    });
    assert!(verdict(7, "curve and heatmap shapes", &checks, t));
}

#[test]
fn criterion_08_literal_form_witness() {
    let t = Instant::now();
    let mut checks = verify::literal_witness();
    // a variance can never be negative
    let lit = analytic::variance_clean(0.0, 0.25, CleanVarianceForm::Literal).unwrap();
    checks.push(Check {
        name: "literal-is-negative".into(),
        measured: lit,
        tol: 0.0,
        pass: lit < 0.0,
    });
    assert!(verdict(8, "literal clean-variance defect and corrected ridgeless value", &checks, t));
}

#[test]
fn criterion_09_estimator_sanity() {
    let t = Instant::now();
    let checks = verify::estimator_sanity();
    assert!(verdict(9, "split estimator easy case and noise response", &checks, t));
}

fn run_mc(dir: &Path, name: &str, threads: usize, extra: &[&str]) -> (Vec<u8>, Vec<u8>) {
    let out = dir.join(name);
    let status = Command::new(env!("CARGO_BIN_EXE_rfvar"))
        .args(["--threads", &threads.to_string(), "mc", "--lambda0", "0.1", "--sigma0-sq", "0.5", "--sigma0-sq", "1"])
        .args(["--gamma-grid", "0.5:2:3", "--d", "24", "--rho", "8", "--trials", "16", "--seed", "42"])
        .args(extra)
        .arg("--out")
        .arg(&out)
        .status()
        .expect("spawn rfvar");
    assert!(status.success());
    let se = out.with_file_name(format!("{name}.se.csv"));
    (std::fs::read(&out).unwrap(), std::fs::read(se).unwrap())
}

#[test]
fn criterion_10_determinism() {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();
    for (label, extra) in [("two-layer", &[][..]), ("masked", &["--alpha-grid", "0.5:1:2"][..])] {
        let a = run_mc(dir.path(), &format!("{label}-a.csv"), 1, extra);
        let b = run_mc(dir.path(), &format!("{label}-b.csv"), 1, extra);
        let c = run_mc(dir.path(), &format!("{label}-c.csv"), 8, extra);
        let same = a == b && a == c && !a.0.is_empty();
        checks.push(Check {
            name: format!("{label}-csv-identical"),
            measured: f64::from(u8::from(!same)),
            tol: 0.0,
            pass: same,
        });
    }
    assert!(verdict(10, "byte-identical Monte Carlo CSVs across runs and thread counts", &checks, t));
}
