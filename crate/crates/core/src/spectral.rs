//! Diagonal models of sectorial operators.
//!
//! An operator is stored through its eigenvalues in a fixed orthonormal basis;
//! states are coefficient vectors in that basis. `S_α(t)` then acts on mode `n`
//! as multiplication by `E_α(μ_n t^α)`.

use std::f64::consts::{FRAC_PI_8, PI};
use std::ops::{Deref, DerefMut};

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::mlf::{recip_gamma, solution_kernel};
use crate::quad;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    sector_type: f64,
    sector_angle: f64,
}

impl SpectralOperator {
    /// Eigenvalues must be finite and listed in non-increasing order. The
    /// sector type defaults to the largest eigenvalue.
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Domain("operator needs at least one eigenvalue".into()));
        }
        if let Some(bad) = eigenvalues.iter().find(|m| !m.is_finite()) {
            return Err(Error::Domain(format!("eigenvalue {bad} is not finite")));
        }
        if let Some(i) = eigenvalues.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::Domain(format!(
                "eigenvalues must be non-increasing: mu_{} = {} < mu_{} = {}",
                i + 1,
                eigenvalues[i],
                i + 2,
                eigenvalues[i + 1]
            )));
        }
        let sector_type = eigenvalues[0];
        Ok(Self { eigenvalues, sector_type, sector_angle: FRAC_PI_8 })
    }

    pub fn with_sector(mut self, sector_type: f64, sector_angle: f64) -> Result<Self> {
        if !(sector_type >= self.eigenvalues[0]) {
            return Err(Error::Domain(format!(
                "sector type {sector_type} is below the top eigenvalue {}",
                self.eigenvalues[0]
            )));
        }
        if !(sector_angle > 0.0 && sector_angle < 0.5 * PI) {
            return Err(Error::Domain(format!("sector angle {sector_angle} outside (0, pi/2)")));
        }
        self.sector_type = sector_type;
        self.sector_angle = sector_angle;
        Ok(self)
    }

    /// `∂²/∂ξ² - r` on `[0, π]` with Dirichlet conditions, truncated to the
    /// sine modes `√(2/π) sin(nξ)`, `n = 1..=n_modes`.
    pub fn dirichlet_laplacian(n_modes: usize, r: f64) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Domain("truncation dimension must be positive".into()));
        }
        Self::new((1..=n_modes).map(|n| -((n * n) as f64 + r)).collect())
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sector_type(&self) -> f64 {
        self.sector_type
    }

    pub fn sector_angle(&self) -> f64 {
        self.sector_angle
    }

    /// Diagonal of `S_α(t)`.
    pub fn kernel_diag(&self, alpha: f64, t: f64) -> Result<Vec<f64>> {
        self.eigenvalues
            .iter()
            .map(|&mu| solution_kernel(alpha, mu, t).map_err(Error::from))
            .collect()
    }

    /// `A x`.
    pub fn apply_generator(&self, x: &StateVector) -> Result<StateVector> {
        check_dim("generator", self.dim(), x.len())?;
        Ok(StateVector(x.component_mul(&DVector::from_column_slice(&self.eigenvalues))))
    }
}

/// Coordinates of a state in the operator's eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub DVector<f64>);

impl StateVector {
    pub fn from_vec(coeffs: Vec<f64>) -> Self {
        Self(DVector::from_vec(coeffs))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    /// Unit vector along mode `k` (1-based).
    pub fn unit(dim: usize, k: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[k - 1] = 1.0;
        Self(v)
    }

    pub fn coeffs(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

impl From<DVector<f64>> for StateVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// `S_α(t) x`. The operator is self-adjoint, so this is also `S_α*(t) x`.
pub fn apply_solution_operator(op: &SpectralOperator, alpha: f64, t: f64, x: &StateVector) -> Result<StateVector> {
    check_dim("solution operator", op.dim(), x.len())?;
    let diag = op.kernel_diag(alpha, t)?;
    Ok(StateVector(x.component_mul(&DVector::from_vec(diag))))
}

/// `max_t max_n |E_α(μ_n t^α)|` over the given times.
pub fn operator_norm_bound(op: &SpectralOperator, alpha: f64, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Domain("operator norm bound needs a nonempty time grid".into()));
    }
    let mut m = 0.0f64;
    for &t in grid {
        for k in op.kernel_diag(alpha, t)? {
            m = m.max(k.abs());
        }
    }
    Ok(m)
}

/// Norm of `S_α(t)x - x - ∫_0^t (t-s)^(α-1)/Γ(α) A S_α(s)x ds`.
///
/// The integrand behaves like `s^α` at `s = 0` and carries the weight
/// `(t-s)^(α-1)` at `s = t`; see [`quad::riemann_liouville`].
pub fn prop22b_residual(op: &SpectralOperator, alpha: f64, t: f64, x: &StateVector, quad_nodes: usize) -> Result<f64> {
    check_dim("residual", op.dim(), x.len())?;
    if quad_nodes < 8 {
        return Err(Error::Domain(format!("quad_nodes = {quad_nodes} < 8")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let lhs = apply_solution_operator(op, alpha, t, x)?;
    let inv_gamma = recip_gamma(alpha);
    let mut sq = 0.0;
    for (n, &mu) in op.eigenvalues().iter().enumerate() {
        let mut failure = None;
        let integral = quad::riemann_liouville(t, alpha, quad_nodes, |s| match solution_kernel(alpha, mu, s) {
            Ok(k) => mu * k,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        });
        if let Some(e) = failure {
            return Err(e.into());
        }
        let r = lhs[n] - x[n] - inv_gamma * integral * x[n];
        sq += r * r;
    }
    Ok(sq.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    /// Smallest constant `C` with `‖S_α(t)‖ ≤ C / (1 + |μ| t^α)` on the grid.
    pub fitted_c: f64,
    /// Least-squares slope of `log ‖S_α(t)‖` against `log t` over the last
    /// two decades of the grid.
    pub fitted_slope: f64,
    pub max_ratio: f64,
    /// `(t, ‖S_α(t)‖)` for every grid point, starting with `t = 0`.
    pub samples: Vec<(f64, f64)>,
}

const DECAY_T_MIN_EXP: i32 = -2;
const DECAY_T_MAX_EXP: i32 = 6;
const DECAY_PER_DECADE: usize = 20;

/// Checks `‖S_α(t)‖ ≤ C/(1 + |μ| t^α)` with `μ` the sector type, on `t = 0`
/// and a log-spaced grid over `[1e-2, 1e6]`.
pub fn verify_decay(op: &SpectralOperator, alpha: f64) -> Result<DecayReport> {
    let mu = op.sector_type();
    if !(mu < 0.0) {
        return Err(Error::Domain(format!("decay check needs a negative sector type, got {mu}")));
    }
    let decades = (DECAY_T_MAX_EXP - DECAY_T_MIN_EXP) as usize;
    let count = decades * DECAY_PER_DECADE + 1;
    let mut times = vec![0.0];
    times.extend((0..count).map(|i| 10f64.powf(DECAY_T_MIN_EXP as f64 + i as f64 / DECAY_PER_DECADE as f64)));

    let mut samples = Vec::with_capacity(times.len());
    let mut max_ratio = 0.0f64;
    for &t in &times {
        let norm = op.kernel_diag(alpha, t)?.into_iter().fold(0.0f64, |m, k| m.max(k.abs()));
        max_ratio = max_ratio.max(norm * (1.0 + mu.abs() * t.powf(alpha)));
        samples.push((t, norm));
    }

    let tail = &samples[samples.len() - 2 * DECAY_PER_DECADE - 1..];
    let fitted_slope = least_squares_slope(tail.iter().map(|&(t, n)| (t.ln(), n.ln())));
    Ok(DecayReport { fitted_c: max_ratio, fitted_slope, max_ratio, samples })
}

fn least_squares_slope(points: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points.fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset(n: usize) -> SpectralOperator {
        SpectralOperator::dirichlet_laplacian(n, 1.0).unwrap()
    }

    #[test]
    fn preset_eigenvalues() {
        let op = preset(4);
        assert_eq!(op.eigenvalues(), &[-2.0, -5.0, -10.0, -17.0]);
        assert_eq!(op.sector_type(), -2.0);
    }

    #[test]
    fn rejects_increasing_eigenvalues() {
        assert!(SpectralOperator::new(vec![-3.0, -1.0]).is_err());
        assert!(SpectralOperator::new(vec![]).is_err());
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        assert!(op.clone().with_sector(-2.0, 0.3).is_err());
        assert!(op.clone().with_sector(0.0, 2.0).is_err());
        assert!(op.with_sector(0.0, 0.3).is_ok());
    }

    #[test]
    fn identity_at_time_zero() {
        let op = preset(5);
        let x = StateVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0]);
        assert_eq!(apply_solution_operator(&op, 1.5, 0.0, &x).unwrap(), x);
    }

    #[test]
    fn zero_eigenvalue_is_identity() {
        let op = SpectralOperator::new(vec![0.0]).unwrap();
        let x = StateVector::from_vec(vec![1.0]);
        assert_eq!(apply_solution_operator(&op, 1.3, 7.0, &x).unwrap(), x);
    }

    #[test]
    fn single_mode_example() {
        let op = preset(1);
        let y = apply_solution_operator(&op, 1.5, 1.0, &StateVector::from_vec(vec![1.0])).unwrap();
        assert!((y[0] - 0.029_430_685_602_826_47).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let op = preset(3);
        let err = apply_solution_operator(&op, 1.5, 1.0, &StateVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::Dimension { expected: 3, got: 2, .. }));
    }

    #[test]
    fn norm_bound_examples() {
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let zero = SpectralOperator::new(vec![0.0]).unwrap();
        assert_eq!(operator_norm_bound(&zero, 1.5, &grid).unwrap(), 1.0);
        assert_eq!(operator_norm_bound(&preset(6), 1.5, &grid).unwrap(), 1.0);
        let osc = SpectralOperator::new(vec![-1.0]).unwrap();
        let m = operator_norm_bound(&osc, 2.0, &[0.0, PI]).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residual_trivial_cases() {
        let op = preset(3);
        let x = StateVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert_eq!(prop22b_residual(&op, 1.5, 0.0, &x, 16).unwrap(), 0.0);
        let zero = SpectralOperator::new(vec![0.0, 0.0]).unwrap();
        let r = prop22b_residual(&zero, 1.5, 2.0, &StateVector::from_vec(vec![1.0, -1.0]), 16).unwrap();
        assert!(r < 1e-15);
        assert!(prop22b_residual(&op, 1.5, 1.0, &x, 4).is_err());
    }

    #[test]
    fn residual_small_on_lattice() {
        let op = preset(4);
        let x = StateVector::from_vec(vec![0.5; 4]);
        for &alpha in &[1.25, 1.5, 1.75] {
            for &t in &[0.5, 1.0, 2.0] {
                let r64 = prop22b_residual(&op, alpha, t, &x, 64).unwrap();
                let r128 = prop22b_residual(&op, alpha, t, &x, 128).unwrap();
                assert!(r64 <= 1e-8, "alpha={alpha} t={t}: {r64:e}");
                assert!(r128 <= 2e-12, "alpha={alpha} t={t}: {r128:e}");
            }
        }
    }

    #[test]
    fn generator_commutes_with_solution_operator() {
        let op = preset(8);
        let x = StateVector::from_vec((1..=8).map(|k| 1.0 / k as f64).collect());
        let ax = op.apply_generator(&x).unwrap();
        let left = op.apply_generator(&apply_solution_operator(&op, 1.5, 0.7, &x).unwrap()).unwrap();
        let right = apply_solution_operator(&op, 1.5, 0.7, &ax).unwrap();
        for (l, r) in left.iter().zip(right.iter()) {
            assert!((l - r).abs() <= 1e-15 * l.abs().max(r.abs()));
        }
    }

    #[test]
    fn strongly_continuous() {
        let op = preset(8);
        let x = StateVector::from_vec(vec![1.0; 8]);
        let t = 0.8;
        let base = apply_solution_operator(&op, 1.5, t, &x).unwrap();
        let mut prev = f64::INFINITY;
        let mut h = 1e-2;
        while h >= 1e-6 {
            let d = (apply_solution_operator(&op, 1.5, t + h, &x).unwrap().0 - &base.0).norm();
            assert!(d <= 0.6 * prev, "h={h:e}: {d:e} vs {prev:e}");
            prev = d;
            h *= 0.5;
        }
    }

    #[test]
    fn decay_report() {
        let op = SpectralOperator::new(vec![-1.0]).unwrap();
        let rep = verify_decay(&op, 1.5).unwrap();
        assert_eq!(rep.samples[0], (0.0, 1.0));
        assert!(rep.max_ratio.is_finite() && rep.max_ratio < 10.0, "{}", rep.max_ratio);
        assert!((rep.fitted_slope + 1.5).abs() < 0.05, "{}", rep.fitted_slope);
        let rep = verify_decay(&op, 1.9).unwrap();
        assert!((rep.fitted_slope + 1.9).abs() < 0.05, "{}", rep.fitted_slope);
        assert!(verify_decay(&SpectralOperator::new(vec![0.0]).unwrap(), 1.5).is_err());
    }
}
