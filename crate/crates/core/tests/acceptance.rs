//! The eleven acceptance criteria on the shipped verification config.
//! Prints one PASS/WARN/FAIL line per criterion.

use pmewaves::cli_io::{verify_suite, RunConfig};
use std::path::PathBuf;

#[test]
fn acceptance_criteria() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/verify.toml");
    let cfg = RunConfig::load(&path).expect("verify config");
    let outcome = verify_suite(&cfg).expect("verification run");
    println!();
    for c in &outcome.report.criteria {
        println!("{}", c.line());
    }
    for (what, secs) in &outcome.timings {
        println!("time {what}: {secs:.1} s");
    }
    assert_eq!(outcome.report.criteria.len(), 11);
    let failed: Vec<u8> = outcome.report.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
