//! Acceptance suite: every criterion runs at its stated tolerance and
//! prints one pass/fail line. Run with `--nocapture` to see the lines:
//!
//! ```text
//! cargo test -p crlab --test acceptance -- --nocapture
//! ```

use crlab::suite::{self, CriterionResult};

fn check(result: crlab::Result<CriterionResult>) {
    let r = result.expect("criterion evaluation failed");
    println!("{}", r.line());
    assert!(
        r.passed,
        "criterion {} failed: measured {:.6e}, tolerance {:.6e}",
        r.id, r.measured, r.tolerance
    );
}

#[test]
fn criterion_01_f1_identity_is_minus_half_volume() {
    check(suite::criterion_1());
}

#[test]
fn criterion_02_projection_is_critical() {
    check(suite::criterion_2());
}

#[test]
fn criterion_03_identity_is_critical() {
    check(suite::criterion_3());
}

#[test]
fn criterion_04a_covariance_constant_factor() {
    check(suite::criterion_4a());
}

#[test]
fn criterion_04b_covariance_generic_factor() {
    check(suite::criterion_4b());
}

#[test]
fn criterion_04c_covariance_fd4_refinement_order() {
    check(suite::criterion_4c());
}

#[test]
fn criterion_05a_invariance_constant_factor() {
    check(suite::criterion_5a());
}

#[test]
fn criterion_05b_invariance_generic_factor() {
    check(suite::criterion_5b());
}

#[test]
fn criterion_06a_gradient_identity_flat_target() {
    check(suite::criterion_6a());
}

#[test]
fn criterion_06b_gradient_identity_sphere_target() {
    check(suite::criterion_6b());
}

#[test]
fn criterion_07_scalar_reduction_oracle() {
    check(suite::criterion_7());
}

#[test]
fn criterion_08a_jet_matches_p1() {
    check(suite::criterion_8a());
}

#[test]
fn criterion_08b_jet_residual_ratio_bounded() {
    check(suite::criterion_8b());
}

#[test]
fn criterion_09_self_adjointness() {
    check(suite::criterion_9());
}

#[test]
fn criterion_10_projection_jets_vanish() {
    check(suite::criterion_10());
}

#[test]
fn criterion_11_flow_descent() {
    check(suite::criterion_11());
}

#[test]
fn criterion_12a_d_squared_zero() {
    check(suite::criterion_12a());
}

#[test]
fn criterion_12b_structure_residuals() {
    check(suite::criterion_12b());
}

#[test]
fn criterion_12c_reeb_equations() {
    check(suite::criterion_12c());
}

#[test]
fn criterion_12d_sphere_tangentiality() {
    check(suite::criterion_12d());
}
