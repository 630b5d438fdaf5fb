mod common;

use common::ml_oracle;
use fracctl::mlf::{ml_eval, solution_kernel, Branch, MlParams, TOLERANCE};

#[test]
fn matches_high_precision_series() {
    let mut worst = 0.0f64;
    for &alpha in &[1.1, 1.25, 1.5, 1.75, 1.9, 2.0] {
        let p = MlParams::classical(alpha).unwrap();
        for i in 0..=202 {
            let z = -100.0 + 0.5 * i as f64;
            let r = ml_eval(p, z).unwrap();
            let exact = ml_oracle(alpha, 1.0, z);
            let err = (r.value - exact).abs();
            worst = worst.max(err);
            assert!(err <= TOLERANCE, "alpha={alpha} z={z}: err {err:e} ({:?})", r.branch);
            assert!(err <= r.est_abs_error + 1e-15, "alpha={alpha} z={z}: err {err:e} > est {:e}", r.est_abs_error);
        }
    }
    eprintln!("worst error {worst:e}");
}

#[test]
fn two_parameter_values() {
    for &(alpha, beta) in &[(1.5, 2.0), (1.25, 0.5), (1.8, 1.5), (0.7, 1.0)] {
        let p = MlParams::new(alpha, beta).unwrap();
        for &z in &[-60.0, -20.0, -7.5, -1.0, 0.3, 2.0] {
            let r = ml_eval(p, z).unwrap();
            let exact = ml_oracle(alpha, beta, z);
            assert!((r.value - exact).abs() <= TOLERANCE, "({alpha},{beta}) z={z}: {} vs {exact}", r.value);
        }
    }
}

#[test]
fn kernel_example_matches_oracle() {
    let got = solution_kernel(1.5, -2.0, 1.0).unwrap();
    assert!((got - ml_oracle(1.5, 1.0, -2.0)).abs() < 1e-14);
}

#[test]
fn far_field_uses_asymptotics() {
    let p = MlParams::classical(1.5).unwrap();
    let r = ml_eval(p, -1e4).unwrap();
    assert_eq!(r.branch, Branch::Asymptotic);
    let exact = ml_oracle(1.5, 1.0, -1e4);
    assert!((r.value - exact).abs() < 1e-15, "{} vs {exact}", r.value);
}
