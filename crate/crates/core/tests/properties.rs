mod common;

use common::*;

#[test]
fn unitarity_suite() {
    run_suite(1000, unitarity_case(), check_unitarity).unwrap();
}

#[test]
fn clipping_suite() {
    run_suite(1000, pulse_case(), check_clipping).unwrap();
}

#[test]
fn dressing_neutrality_suite() {
    run_suite(1000, pulse_case(), check_dressing_neutrality).unwrap();
}
