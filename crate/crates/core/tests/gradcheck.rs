mod common;

use common::grad::{adjoint_gap, run_all, SEEDS};

#[test]
fn analytic_gradients_match_central_differences() {
    let mut failed = Vec::new();
    for c in run_all() {
        let r = c.report;
        println!(
            "{:<32} worst rel err {:.3e} over {} entries ({} at kinks)",
            c.name, r.worst, r.checked, r.skipped
        );
        if !r.passes() {
            failed.push(c.name);
        }
    }
    assert!(failed.is_empty(), "gradient mismatch in {failed:?}");
}

#[test]
fn transposed_conv_is_adjoint_of_strided_conv() {
    for s in SEEDS {
        let gap = adjoint_gap(s);
        assert!(gap < 1e-10, "seed {s}: {gap}");
    }
}
