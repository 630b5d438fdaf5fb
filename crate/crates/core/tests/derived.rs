//! Reference values obtained from independent computations: the
//! multiprecision series, refinement of the quadrature, eigendecompositions
//! and closed-form reductions.

mod common;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use fracctl::experiment::{load_config, ExperimentConfig};
use fracctl::gramian::{assemble_gramian, regularize, sweep_regularization, ControlMap, LinearProblem};
use fracctl::mlf::solution_kernel;
use fracctl::quad::tanh_sinh;
use fracctl::semilinear::{picard_solve_nonlocal, PicardSettings};
use fracctl::spectral::{
    apply_solution_operator, operator_norm_bound, prop22b_residual, verify_decay, SpectralOperator, StateVector,
};

fn config(name: &str) -> ExperimentConfig {
    load_config(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

fn preset(n: usize) -> SpectralOperator {
    SpectralOperator::dirichlet_laplacian(n, 1.0).unwrap()
}

#[test]
fn single_mode_solution_operator() {
    let y = apply_solution_operator(&preset(1), 1.5, 1.0, &StateVector::from_vec(vec![1.0])).unwrap();
    assert!((y[0] - common::ml_oracle(1.5, 1.0, -2.0)).abs() < 1e-15);
}

#[test]
fn norm_bound_attained_at_origin() {
    let op = preset(8);
    let grid = |m: usize| -> Vec<f64> { (0..=m).map(|i| 10.0 * i as f64 / m as f64).collect() };
    let coarse = operator_norm_bound(&op, 1.5, &grid(200)).unwrap();
    let fine = operator_norm_bound(&op, 1.5, &grid(800)).unwrap();
    assert_eq!(coarse, 1.0);
    assert!((fine - coarse).abs() < 1e-9);
}

#[test]
fn residual_refinement() {
    let op = preset(4);
    let x = StateVector::from_vec(vec![0.5; 4]);
    let r64 = prop22b_residual(&op, 1.5, 1.0, &x, 64).unwrap();
    let r128 = prop22b_residual(&op, 1.5, 1.0, &x, 128).unwrap();
    assert!(r64 <= 1e-8);
    assert!((r64 - r128).abs() < 1e-10);
}

#[test]
fn decay_samples_match_oracle() {
    let op = SpectralOperator::new(vec![-1.0]).unwrap();
    let rep = verify_decay(&op, 1.5).unwrap();
    assert!(rep.max_ratio < 10.0);
    for &(t, norm) in rep.samples.iter().step_by(17).filter(|(t, _)| *t > 0.0 && *t < 30.0) {
        let exact = common::kernel_oracle(1.5, -1.0, t).abs();
        assert!((norm - exact).abs() < 1e-12, "t={t}: {norm} vs {exact}");
    }
    let rep = verify_decay(&op, 1.9).unwrap();
    assert!((rep.fitted_slope + 1.9).abs() <= 0.05);
}

#[test]
fn resolvent_contraction_on_preset() {
    let op = preset(8);
    let gram = assemble_gramian(&op, 1.5, &ControlMap::identity(8).unwrap(), 1.0, 64).unwrap();
    let a = 1e-3;
    let res = regularize(&gram, a).unwrap();
    let eig = gram.matrix().clone().symmetric_eigen();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let x = DVector::from_fn(8, |_, _| StandardNormal.sample(&mut rng));
        let ax = res.apply(&x).unwrap() * a;
        assert!(ax.norm() <= a / (a + gram.eig_min()) * x.norm() * (1.0 + 1e-12));
        // oracle: a R x = Σ a/(a + λ_i) (v_iᵀx) v_i
        let mut oracle = DVector::zeros(8);
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(i);
            oracle += v * (a / (a + l) * v.dot(&x));
        }
        assert!((ax - oracle).amax() < 1e-12);
    }
    for &a in &[1e-1, 1e-3, 1e-6] {
        let res = regularize(&gram, a).unwrap();
        let p = DVector::from_fn(8, |i, _| 1.0 / (i + 1) as f64);
        let rp = res.apply(&p).unwrap();
        assert!((&p - gram.matrix() * &rp - &rp * a).amax() <= 1e-12);
    }
}

#[test]
fn sweep_matches_eigendecomposition() {
    let n = 8;
    let problem = LinearProblem {
        op: preset(n),
        alpha: 1.5,
        control: ControlMap::identity(n).unwrap(),
        horizon: 1.0,
        x0: StateVector::from_vec((1..=n).map(|k| 1.0 / k as f64).collect()),
        xb: StateVector::unit(n, 1),
        quad_nodes: 64,
    };
    let a_values = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
    let rows = sweep_regularization(&problem, &a_values).unwrap();
    let eig = problem.gramian().unwrap().matrix().clone().symmetric_eigen();
    let p = problem.defect().unwrap();
    let coords: Vec<f64> = (0..n).map(|i| eig.eigenvectors.column(i).dot(&p.0)).collect();
    for row in &rows {
        let oracle: f64 = eig.eigenvalues.iter().zip(&coords).map(|(l, c)| (row.a / (row.a + l) * c).powi(2)).sum();
        assert!((row.error_norm - oracle.sqrt()).abs() <= 1e-12 * oracle.sqrt().max(1e-300), "{row:?}");
    }
    assert!(rows.windows(2).all(|w| w[1].error_norm < w[0].error_norm));
}

#[test]
fn semilinear_sweep_refines() {
    let base = config("diffusion.toml");
    let rows = fracctl::experiment::run_experiment(&base).unwrap();
    assert!(rows.windows(2).all(|w| w[1].terminal_error < w[0].terminal_error));
    assert!(rows.last().unwrap().terminal_error < 1e-3);
    let mut fine = base.clone();
    fine.system.n = Some(32);
    fine.numerics.grid_k = 128;
    let fine_rows = fracctl::experiment::run_experiment(&fine).unwrap();
    for (c, f) in rows.iter().zip(&fine_rows) {
        assert!(((c.terminal_error - f.terminal_error) / f.terminal_error).abs() < 0.01, "{c:?} vs {f:?}");
    }
}

#[test]
fn nonlocal_matches_reduced_linear_map() {
    // With the midpoint selection the forcing vanishes, so the trajectory is
    // affine in the initial value v:
    //   x(b/2) = S(b/2) v + M R (x_b - S(b) v),
    //   M = ∫_0^{b/2} S(b/2 - s) B Bᵀ S(b - s) ds.
    // The nonlocal condition v = x0 - c x(b/2) is then a linear system.
    let exp = config("diffusion_nonlocal.toml").build().unwrap();
    let (n, b, alpha, a) = (exp.op.dim(), exp.horizon, exp.alpha, 1e-3);
    let c = exp.nonlocal.as_ref().unwrap().coefficients()[0];
    let half = 0.5 * b;

    let mut m = DMatrix::zeros(n, n);
    for (i, &mu) in exp.op.eigenvalues().iter().enumerate() {
        let f = |s: f64| solution_kernel(alpha, mu, half - s).unwrap() * solution_kernel(alpha, mu, b - s).unwrap();
        m[(i, i)] = tanh_sinh(0.0, half, 1e-14, 12, f).0;
    }
    let gram = assemble_gramian(&exp.op, alpha, &exp.control, b, 128).unwrap();
    let r = regularize(&gram, a).unwrap().to_matrix();
    let s_half = DMatrix::from_diagonal(&DVector::from_vec(exp.op.kernel_diag(alpha, half).unwrap()));
    let s_b = DMatrix::from_diagonal(&DVector::from_vec(exp.op.kernel_diag(alpha, b).unwrap()));
    let affine = &s_half - &m * &r * &s_b;
    let offset = &m * &r * &exp.xb.0;
    let lhs = DMatrix::identity(n, n) + &affine * c;
    let rhs = &exp.x0.0 - offset * c;
    let v = lhs.lu().solve(&rhs).unwrap();

    let settings = PicardSettings { grid_k: 128, tol: 1e-12, max_iter: 100 };
    let out = picard_solve_nonlocal(&exp.semilinear_problem(), a, settings, exp.nonlocal.as_ref().unwrap()).unwrap();
    assert!(out.converged);
    let diff = (&out.trajectory.states[0].0 - v).amax();
    assert!(diff < 1e-9, "{diff:e}");
}

#[test]
fn partial_actuation_gramian_kernel() {
    let exp = config("diffusion_partial.toml").build().unwrap();
    let gram = assemble_gramian(&exp.op, exp.alpha, &exp.control, exp.horizon, 64).unwrap();
    let zeros = gram.eigenvalues().iter().filter(|&&l| l.abs() < 1e-14).count();
    assert_eq!(zeros, 6);
}
