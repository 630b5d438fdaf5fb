//! Controllability Gramian, its regularized resolvent and the control law
//! built from them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::quad;
use crate::spectral::{apply_solution_operator, SpectralOperator, StateVector};

/// Allowed negative excursion of the smallest Gramian eigenvalue.
pub const PSD_SLACK: f64 = 1e-10;

/// Linear map from control coordinates `ℝ^m` into state coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlMap {
    matrix: DMatrix<f64>,
    norm: f64,
}

impl ControlMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::Domain("control matrix must be nonempty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("control matrix has non-finite entries".into()));
        }
        let norm = matrix.clone().svd(false, false).singular_values.max();
        Ok(Self { matrix, norm })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    /// One actuator per listed mode (1-based), in the order given.
    pub fn modes(n: usize, modes: &[usize]) -> Result<Self> {
        let mut m = DMatrix::zeros(n, modes.len());
        for (j, &k) in modes.iter().enumerate() {
            if k == 0 || k > n {
                return Err(Error::Domain(format!("mode {k} outside 1..={n}")));
            }
            m[(k - 1, j)] = 1.0;
        }
        Self::new(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Largest singular value.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn state_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// `B Bᵀ`.
    pub fn outer(&self) -> DMatrix<f64> {
        &self.matrix * self.matrix.transpose()
    }
}

#[derive(Debug, Clone)]
pub struct GramianBundle {
    matrix: DMatrix<f64>,
    horizon: f64,
    quad_nodes: usize,
    eigenvalues: Vec<f64>,
}

impl GramianBundle {
    /// Wraps an already assembled matrix: symmetrizes it and checks positive
    /// semidefiniteness.
    pub fn from_matrix(matrix: DMatrix<f64>, horizon: f64, quad_nodes: usize) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Assembly(format!("{}x{} matrix is not square", matrix.nrows(), matrix.ncols())));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly("non-finite entry".into()));
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(matrix.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        if eigenvalues[0] < -PSD_SLACK {
            return Err(Error::Assembly(format!("smallest eigenvalue {:e} is negative", eigenvalues[0])));
        }
        Ok(Self { matrix, horizon, quad_nodes, eigenvalues })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn quad_nodes(&self) -> usize {
        self.quad_nodes
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eig_min(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// `Υ = ∫_0^b S_α(b-s) B Bᵀ S_α(b-s) ds`.
///
/// With `τ = b - s` the entries are `(BBᵀ)_nm ∫_0^b e_n(τ) e_m(τ) dτ` where
/// `e_n(τ) = E_α(μ_n τ^α)`. Each `e_n` behaves like `1 + c τ^α` at `τ = 0`,
/// so the rule is graded toward that end.
pub fn assemble_gramian(
    op: &SpectralOperator,
    alpha: f64,
    control: &ControlMap,
    horizon: f64,
    quad_nodes: usize,
) -> Result<GramianBundle> {
    check_dim("control map rows", op.dim(), control.state_dim())?;
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon b = {horizon} must be positive")));
    }
    if quad_nodes < 16 {
        return Err(Error::Domain(format!("quad_nodes = {quad_nodes} < 16")));
    }
    let n = op.dim();
    let rule = quad::graded_composite(0.0, horizon, quad_nodes);
    let mut products = DMatrix::<f64>::zeros(n, n);
    for (tau, w) in rule.iter() {
        let e = DVector::from_vec(op.kernel_diag(alpha, tau)?);
        products += (&e * e.transpose()) * w;
    }
    GramianBundle::from_matrix(control.outer().component_mul(&products), horizon, quad_nodes)
}

/// Factorization of `aI + Υ`.
#[derive(Debug, Clone)]
pub struct RegularizedResolvent {
    a: f64,
    shifted: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

pub fn regularize(gram: &GramianBundle, a: f64) -> Result<RegularizedResolvent> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("regularization parameter a = {a} must be positive")));
    }
    let shifted = gram.matrix() + DMatrix::identity(gram.dim(), gram.dim()) * a;
    let factor = Cholesky::new(shifted.clone())
        .ok_or_else(|| Error::Assembly(format!("aI + Gramian is not positive definite at a = {a:e}")))?;
    Ok(RegularizedResolvent { a, shifted, factor })
}

impl RegularizedResolvent {
    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn dim(&self) -> usize {
        self.shifted.nrows()
    }

    /// `R(a, Υ) x`, with one step of iterative refinement.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("resolvent", self.dim(), x.len())?;
        let mut y = self.factor.solve(x);
        let r = x - &self.shifted * &y;
        y += self.factor.solve(&r);
        Ok(y)
    }

    /// `R(a, Υ)` as a dense matrix, column by column.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
            m.set_column(j, &self.apply(&e).expect("dimension matches"));
        }
        m
    }
}

/// `u(t) = Bᵀ S_α*(b-t) R(a,Υ) p`.
#[derive(Debug, Clone)]
pub struct ControlLaw {
    resolvent: RegularizedResolvent,
    target_defect: StateVector,
    /// `R(a,Υ) p`, cached.
    weight: StateVector,
    horizon: f64,
    alpha: f64,
}

impl ControlLaw {
    pub fn new(resolvent: RegularizedResolvent, target_defect: StateVector, horizon: f64, alpha: f64) -> Result<Self> {
        let weight = StateVector(resolvent.apply(&target_defect)?);
        Ok(Self { resolvent, target_defect, weight, horizon, alpha })
    }

    pub fn resolvent(&self) -> &RegularizedResolvent {
        &self.resolvent
    }

    pub fn target_defect(&self) -> &StateVector {
        &self.target_defect
    }

    pub fn weight(&self) -> &StateVector {
        &self.weight
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn eval_control(law: &ControlLaw, op: &SpectralOperator, control: &ControlMap, t: f64) -> Result<DVector<f64>> {
    if !(0.0..=law.horizon).contains(&t) {
        return Err(Error::Domain(format!("control time {t} outside [0, {}]", law.horizon)));
    }
    check_dim("control map rows", op.dim(), control.state_dim())?;
    let s = apply_solution_operator(op, law.alpha, law.horizon - t, &law.weight)?;
    Ok(control.matrix().transpose() * s.0)
}

/// Everything a linear (`F ≡ 0`) controllability experiment needs.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub op: SpectralOperator,
    pub alpha: f64,
    pub control: ControlMap,
    pub horizon: f64,
    pub x0: StateVector,
    pub xb: StateVector,
    pub quad_nodes: usize,
}

#[derive(Debug, Clone)]
pub struct LinearOutcome {
    pub terminal: StateVector,
    pub error_norm: f64,
    /// `qᵀ Υ q` with `q = R(a,Υ) p`.
    pub control_energy: f64,
    /// `∫_0^b ‖u(t)‖² dt` by quadrature of the evaluated control.
    pub energy_quadrature: f64,
    pub law: ControlLaw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub a: f64,
    pub error_norm: f64,
    pub control_energy: f64,
}

impl LinearProblem {
    fn check(&self) -> Result<()> {
        check_dim("x0", self.op.dim(), self.x0.len())?;
        check_dim("xb", self.op.dim(), self.xb.len())?;
        check_dim("control map rows", self.op.dim(), self.control.state_dim())
    }

    pub fn gramian(&self) -> Result<GramianBundle> {
        self.check()?;
        assemble_gramian(&self.op, self.alpha, &self.control, self.horizon, self.quad_nodes)
    }

    /// `p = x_b - S_α(b) x_0`.
    pub fn defect(&self) -> Result<StateVector> {
        self.check()?;
        let free = apply_solution_operator(&self.op, self.alpha, self.horizon, &self.x0)?;
        Ok(StateVector(&self.xb.0 - free.0))
    }

    pub fn terminal_state(&self, gram: &GramianBundle, a: f64) -> Result<LinearOutcome> {
        let p = self.defect()?;
        let law = ControlLaw::new(regularize(gram, a)?, p.clone(), self.horizon, self.alpha)?;
        // x(b) = S(b)x0 + Υ R p = x_b - a R p
        let miss = law.weight().0.clone() * a;
        let terminal = StateVector(&self.xb.0 - &miss);
        let control_energy = law.weight().dot(&(gram.matrix() * &law.weight().0)).max(0.0);
        let rule = quad::graded_composite(0.0, self.horizon, 2 * self.quad_nodes);
        let mut energy_quadrature = 0.0;
        for (tau, w) in rule.iter() {
            let t = (self.horizon - tau).max(0.0);
            energy_quadrature += w * eval_control(&law, &self.op, &self.control, t)?.norm_squared();
        }
        Ok(LinearOutcome { terminal, error_norm: miss.norm(), control_energy, energy_quadrature, law })
    }

    /// `S_α(b)x_0 + ∫_0^b S_α(b-s) B u(s) ds` integrated in time with the
    /// control evaluated pointwise, independently of the Gramian rule.
    pub fn simulate_terminal(&self, law: &ControlLaw, abs_tol: f64) -> Result<StateVector> {
        self.check()?;
        let b = self.horizon;
        let mut x = apply_solution_operator(&self.op, self.alpha, b, &self.x0)?;
        for (n, &mu) in self.op.eigenvalues().iter().enumerate() {
            let mut failure = None;
            let (v, _) = quad::tanh_sinh(0.0, b, abs_tol, 10, |s| {
                let value = eval_control(law, &self.op, &self.control, s).and_then(|u| {
                    let bu = self.control.matrix().row(n).dot(&u.transpose());
                    Ok(crate::mlf::solution_kernel(self.alpha, mu, b - s)? * bu)
                });
                value.unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    0.0
                })
            });
            if let Some(e) = failure {
                return Err(e);
            }
            x[n] += v;
        }
        Ok(x)
    }

    /// One row per `a`, computed in parallel and returned in input order.
    pub fn sweep(&self, a_values: &[f64]) -> Result<Vec<SweepRow>> {
        if let Some(w) = a_values.windows(2).find(|w| !(w[1] < w[0])) {
            return Err(Error::Domain(format!("a values must be strictly decreasing: {} then {}", w[0], w[1])));
        }
        let gram = self.gramian()?;
        a_values
            .par_iter()
            .map(|&a| {
                let out = self.terminal_state(&gram, a)?;
                Ok(SweepRow { a, error_norm: out.error_norm, control_energy: out.control_energy })
            })
            .collect()
    }
}

/// `x̂(b) = x_b - a R(a,Υ) p` for the linear system, with its error norm and
/// control energy.
pub fn linear_terminal_state(problem: &LinearProblem, a: f64) -> Result<LinearOutcome> {
    problem.terminal_state(&problem.gramian()?, a)
}

pub fn sweep_regularization(problem: &LinearProblem, a_values: &[f64]) -> Result<Vec<SweepRow>> {
    problem.sweep(a_values)
}
