#[allow(dead_code)]
#[path = "support/oracles.rs"]
mod oracles;

use oracles::*;

#[test]
fn hungarian_matches_exhaustive_search() {
    assert_eq!(hungarian_agreement(200, 7), 200);
}

#[test]
fn exhaustive_oracle_on_a_known_table() {
    assert_eq!(exhaustive_matches(&[vec![5, 1, 0], vec![4, 0, 2]]), 7);
    assert_eq!(exhaustive_matches(&[vec![0, 3], vec![2, 9], vec![8, 0]]), 17);
}

#[test]
fn sinkhorn_conserves_marginals() {
    let (rows, cols) = sinkhorn_marginal_errors(100, 11);
    assert!(rows < 1e-9, "rows {rows}");
    assert!(cols < 1e-9, "columns {cols}");
}

#[test]
fn metrics_reproduce_worked_values() {
    let err = worked_metric_error();
    assert!(err < 1e-12, "{err}");
}

#[test]
fn overall_accuracy_blends_in_and_out_of_domain() {
    let err = blend_identity_error(100, 3);
    assert!(err < 1e-12, "{err}");
}
