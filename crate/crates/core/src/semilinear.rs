//! Picard iteration for the controlled semilinear inclusion
//!
//! `x(t) = S_α(t)(x_0 - g(x)) + ∫_0^t S_α(t-s)[f(s) + B u(s)] ds`,
//! `f(s) ∈ F(s, x(s))`, `u(s) = Bᵀ S_α*(b-s) R(a,Υ) p(x)`.
//!
//! Time is a uniform grid `τ_j = jΔ`. Selections are linear between grid
//! nodes and the convolution with the kernel is integrated exactly for that
//! interpolant (product integration); the control is evaluated at the
//! quadrature points themselves. The same cell rule produces the discrete
//! Gramian, so the terminal identity `x(b) = x_b - a R p` holds for the
//! discrete system too.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::gramian::{eval_control, regularize, ControlLaw, ControlMap, GramianBundle};
use crate::mlf::solution_kernel;
use crate::quad;
use crate::spectral::{SpectralOperator, StateVector};

/// Gauss–Legendre points per half cell in the product-integration rule.
const CELL_HALF_NODES: usize = 12;
/// Nodes per cell in the independent residual recheck.
const RECHECK_CELL_NODES: usize = 16;
const RECHECK_TIMES: usize = 5;

type BoundFn = Arc<dyn Fn(f64, &StateVector) -> StateVector + Send + Sync>;
type NormBoundFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    #[default]
    Midpoint,
    Lower,
    Upper,
    /// Clamp the previous sweep's selection into the current interval.
    Projection,
}

impl Selection {
    pub const NAMES: [&'static str; 4] = ["midpoint", "lower", "upper", "projection"];

    pub fn name(self) -> &'static str {
        match self {
            Selection::Midpoint => "midpoint",
            Selection::Lower => "lower",
            Selection::Upper => "upper",
            Selection::Projection => "projection",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "midpoint" => Some(Selection::Midpoint),
            "lower" => Some(Selection::Lower),
            "upper" => Some(Selection::Upper),
            "projection" => Some(Selection::Projection),
            _ => None,
        }
    }

    /// Picks a point of `[lo, hi]` componentwise. The result is clamped, so it
    /// lies in the interval exactly.
    pub fn pick(self, lo: &StateVector, hi: &StateVector, previous: Option<&StateVector>) -> StateVector {
        let v = DVector::from_fn(lo.len(), |i, _| {
            let (l, h) = (lo[i], hi[i]);
            let raw = match (self, previous) {
                (Selection::Lower, _) => l,
                (Selection::Upper, _) => h,
                (Selection::Projection, Some(prev)) => prev[i],
                (Selection::Midpoint, _) | (Selection::Projection, None) => 0.5 * (l + h),
            };
            raw.clamp(l, h)
        });
        StateVector(v)
    }
}

/// Interval-valued right-hand side `F(t, x) = [f_lower(t,x), f_upper(t,x)]`
/// in coefficient space, with a selection rule.
#[derive(Clone)]
pub struct InclusionRhs {
    name: String,
    lower: BoundFn,
    upper: BoundFn,
    /// Bound on `max(‖f_lower‖, ‖f_upper‖)` as a function of time.
    uniform_bound: Option<NormBoundFn>,
    pub selection: Selection,
}

impl fmt::Debug for InclusionRhs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InclusionRhs")
            .field("name", &self.name)
            .field("selection", &self.selection)
            .field("bounded", &self.uniform_bound.is_some())
            .finish()
    }
}

impl InclusionRhs {
    pub fn new<L, U>(name: impl Into<String>, lower: L, upper: U, selection: Selection) -> Self
    where
        L: Fn(f64, &StateVector) -> StateVector + Send + Sync + 'static,
        U: Fn(f64, &StateVector) -> StateVector + Send + Sync + 'static,
    {
        Self { name: name.into(), lower: Arc::new(lower), upper: Arc::new(upper), uniform_bound: None, selection }
    }

    pub fn with_uniform_bound<N: Fn(f64) -> f64 + Send + Sync + 'static>(mut self, bound: N) -> Self {
        self.uniform_bound = Some(Arc::new(bound));
        self
    }

    /// `F ≡ {0}`.
    pub fn zero(selection: Selection) -> Self {
        Self::new("zero", |_, x| StateVector::zeros(x.len()), |_, x| StateVector::zeros(x.len()), selection)
            .with_uniform_bound(|_| 0.0)
    }

    /// `[-c(1 + |sin x_n|), c(1 + |sin x_n|)]` in every mode.
    pub fn bounded_sine(c: f64, dim: usize, selection: Selection) -> Self {
        let width = move |x: &StateVector| x.map(|v| c * (1.0 + v.sin().abs()));
        let bound = 2.0 * c * (dim as f64).sqrt();
        Self::new("bounded_sine", move |_, x| StateVector(-width(x)), move |_, x| StateVector(width(x)), selection)
            .with_uniform_bound(move |_| bound)
    }

    /// `[-c, c]` in every mode.
    pub fn symmetric_constant(c: f64, dim: usize, selection: Selection) -> Self {
        let bound = c * (dim as f64).sqrt();
        Self::new(
            "symmetric_constant",
            move |_, x| StateVector(DVector::from_element(x.len(), -c)),
            move |_, x| StateVector(DVector::from_element(x.len(), c)),
            selection,
        )
        .with_uniform_bound(move |_| bound)
    }

    /// The single-valued map `F(t, x) = {k x}`.
    pub fn linear(k: f64, selection: Selection) -> Self {
        Self::new("linear", move |_, x| StateVector(&x.0 * k), move |_, x| StateVector(&x.0 * k), selection)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self, t: f64, x: &StateVector) -> (StateVector, StateVector) {
        ((self.lower)(t, x), (self.upper)(t, x))
    }

    pub fn uniform_bound(&self, t: f64) -> Option<f64> {
        self.uniform_bound.as_ref().map(|n| n(t))
    }

    pub fn select(&self, t: f64, x: &StateVector, previous: Option<&StateVector>) -> StateVector {
        let (lo, hi) = self.bounds(t, x);
        self.selection.pick(&lo, &hi, previous)
    }
}

/// `g(x) = Σ c_k x(t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlocalCondition {
    coefficients: Vec<f64>,
    times: Vec<f64>,
    lipschitz: f64,
}

impl NonlocalCondition {
    pub fn new(coefficients: Vec<f64>, times: Vec<f64>) -> Result<Self> {
        if coefficients.len() != times.len() {
            return Err(Error::Domain(format!(
                "nonlocal condition has {} coefficients but {} times",
                coefficients.len(),
                times.len()
            )));
        }
        if coefficients.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::Domain("nonlocal condition has non-finite entries".into()));
        }
        if times.first().is_some_and(|&t| t <= 0.0) || times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("nonlocal times must satisfy 0 < t_1 < ... < t_q".into()));
        }
        let lipschitz = coefficients.iter().map(|c| c.abs()).sum();
        Ok(Self { coefficients, times, lipschitz })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `Σ |c_k|`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `g` applied to grid data, each `t_k` snapped to the nearest node.
    pub fn apply(&self, grid: &[f64], states: &[StateVector]) -> StateVector {
        let delta = grid[1] - grid[0];
        let mut g = DVector::zeros(states[0].len());
        for (&c, &t) in self.coefficients.iter().zip(&self.times) {
            let j = ((t / delta).round() as usize).min(states.len() - 1);
            g.axpy(c, &states[j].0, 1.0);
        }
        StateVector(g)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub states: Vec<StateVector>,
    pub controls: Vec<DVector<f64>>,
    pub selections: Vec<StateVector>,
}

impl Trajectory {
    pub fn terminal(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least one state")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardSettings {
    pub grid_k: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl PicardSettings {
    fn check(&self) -> Result<()> {
        if self.grid_k < 16 {
            return Err(Error::Domain(format!("grid_k = {} < 16", self.grid_k)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain(format!("tol = {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SemilinearProblem {
    pub op: SpectralOperator,
    pub alpha: f64,
    pub control: ControlMap,
    pub horizon: f64,
    pub rhs: InclusionRhs,
    pub x0: StateVector,
    pub xb: StateVector,
}

impl SemilinearProblem {
    fn check(&self) -> Result<()> {
        check_dim("x0", self.op.dim(), self.x0.len())?;
        check_dim("xb", self.op.dim(), self.xb.len())?;
        check_dim("control map rows", self.op.dim(), self.control.state_dim())?;
        if !(self.horizon > 0.0) {
            return Err(Error::Domain(format!("horizon b = {} must be positive", self.horizon)));
        }
        Ok(())
    }
}

/// Kernel samples and integration weights for one `(operator, α, B, b, K)`.
/// Independent of the regularization parameter and of the right-hand side.
#[derive(Debug, Clone)]
pub struct PicardTables {
    k: usize,
    dim: usize,
    grid: Vec<f64>,
    /// `E_α(μ_n τ_j^α)`, indexed `[j][n]`.
    free: Vec<DVector<f64>>,
    /// Product-integration weights indexed `n * K + l` for lag `l = j - 1 - i`:
    /// `wl` multiplies the selection at the left node of cell `i`, `wr` the
    /// one at its right node.
    wl: Vec<f64>,
    wr: Vec<f64>,
    /// `Φ_j = ∫_0^{τ_j} S(τ_j - s) B Bᵀ S(b - s) ds`; `Φ_K` is the Gramian.
    phi: Vec<DMatrix<f64>>,
    gramian: GramianBundle,
}

impl PicardTables {
    pub fn build(op: &SpectralOperator, alpha: f64, control: &ControlMap, horizon: f64, grid_k: usize) -> Result<Self> {
        check_dim("control map rows", op.dim(), control.state_dim())?;
        let (k, dim) = (grid_k, op.dim());
        let delta = horizon / k as f64;
        let grid: Vec<f64> = (0..=k).map(|j| if j == k { horizon } else { j as f64 * delta }).collect();
        let cell = quad::two_sided_graded(0.0, 1.0, CELL_HALF_NODES);
        let nq = cell.len();

        // ker[n][l][q] = E_α(μ_n (l + η_q) Δ)
        let ker: Vec<Vec<f64>> = op
            .eigenvalues()
            .par_iter()
            .map(|&mu| {
                let mut row = Vec::with_capacity(k * nq);
                for l in 0..k {
                    for &eta in &cell.nodes {
                        row.push(solution_kernel(alpha, mu, (l as f64 + eta) * delta)?);
                    }
                }
                Ok(row)
            })
            .collect::<std::result::Result<_, crate::mlf::MlError>>()?;

        let mut wl = vec![0.0; dim * k];
        let mut wr = vec![0.0; dim * k];
        for n in 0..dim {
            for l in 0..k {
                let kr = &ker[n][l * nq..(l + 1) * nq];
                let (mut a, mut b) = (0.0, 0.0);
                for ((&w, &eta), &e) in cell.weights.iter().zip(&cell.nodes).zip(kr) {
                    a += w * e * eta;
                    b += w * e * (1.0 - eta);
                }
                wl[n * k + l] = delta * a;
                wr[n * k + l] = delta * b;
            }
        }

        let free = grid
            .iter()
            .map(|&t| op.kernel_diag(alpha, t).map(DVector::from_vec))
            .collect::<Result<Vec<_>>>()?;

        let bbt = control.outer();
        let phi: Vec<DMatrix<f64>> = (0..=k)
            .into_par_iter()
            .map(|j| {
                let mut m = DMatrix::<f64>::zeros(dim, dim);
                for i in 0..j {
                    let (l, lb) = (j - 1 - i, k - 1 - i);
                    for n in 0..dim {
                        let kn = &ker[n][l * nq..(l + 1) * nq];
                        for mm in 0..dim {
                            if bbt[(n, mm)] == 0.0 {
                                continue;
                            }
                            let km = &ker[mm][lb * nq..(lb + 1) * nq];
                            let s: f64 = cell.weights.iter().zip(kn).zip(km).map(|((w, a), b)| w * a * b).sum();
                            m[(n, mm)] += s;
                        }
                    }
                }
                m.component_mul(&bbt) * delta
            })
            .collect();
        let gramian = GramianBundle::from_matrix(phi[k].clone(), horizon, k * nq)?;
        Ok(Self { k, dim, grid, free, wl, wr, phi, gramian })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// The Gramian of the discrete system.
    pub fn gramian(&self) -> &GramianBundle {
        &self.gramian
    }

    /// `∫_0^{τ_j} S(τ_j - s) f(s) ds` for `f` linear between the given nodal
    /// values, for every `j`.
    fn convolve(&self, f: &[StateVector]) -> Vec<DVector<f64>> {
        let (k, dim) = (self.k, self.dim);
        let mut out = vec![DVector::zeros(dim); k + 1];
        for (j, o) in out.iter_mut().enumerate().skip(1) {
            for i in 0..j {
                let l = j - 1 - i;
                for n in 0..dim {
                    o[n] += self.wl[n * k + l] * f[i][n] + self.wr[n * k + l] * f[i + 1][n];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub trajectory: Trajectory,
    pub iters: usize,
    pub converged: bool,
    /// `sup_j ‖x^(k+1)(τ_j) - x^(k)(τ_j)‖` per sweep.
    pub history: Vec<f64>,
    pub law: ControlLaw,
    pub terminal_error: f64,
    pub control_energy: f64,
}

impl PicardOutcome {
    /// Largest ratio of successive sweep differences over the last `window`
    /// sweeps; ratios with a vanishing denominator are skipped.
    pub fn contraction_ratio(&self, window: usize) -> Option<f64> {
        let h = &self.history;
        let start = h.len().saturating_sub(window + 1);
        h[start..].windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).reduce(f64::max)
    }
}

pub fn picard_solve(problem: &SemilinearProblem, a: f64, settings: PicardSettings) -> Result<PicardOutcome> {
    let tables = PicardTables::build(&problem.op, problem.alpha, &problem.control, problem.horizon, settings.grid_k)?;
    picard_solve_with(&tables, problem, a, settings, None)
}

pub fn picard_solve_nonlocal(
    problem: &SemilinearProblem,
    a: f64,
    settings: PicardSettings,
    nl: &NonlocalCondition,
) -> Result<PicardOutcome> {
    let tables = PicardTables::build(&problem.op, problem.alpha, &problem.control, problem.horizon, settings.grid_k)?;
    picard_solve_with(&tables, problem, a, settings, Some(nl))
}

/// Picard iteration on prebuilt tables. Running out of iterations is reported
/// through `converged`, not as an error.
pub fn picard_solve_with(
    tables: &PicardTables,
    problem: &SemilinearProblem,
    a: f64,
    settings: PicardSettings,
    nl: Option<&NonlocalCondition>,
) -> Result<PicardOutcome> {
    problem.check()?;
    settings.check()?;
    check_dim("tables", tables.dim, problem.op.dim())?;
    if tables.k != settings.grid_k {
        return Err(Error::Domain(format!("tables built for K = {}, settings ask for {}", tables.k, settings.grid_k)));
    }
    if let Some(nl) = nl {
        if !(nl.lipschitz() < 1.0) {
            return Err(Error::Domain(format!("nonlocal coefficients need sum |c_k| < 1, got {}", nl.lipschitz())));
        }
        if nl.times().last().is_some_and(|&t| t > problem.horizon) {
            return Err(Error::Domain("nonlocal times must lie in (0, b]".into()));
        }
    }
    let resolvent = regularize(tables.gramian(), a)?;
    let k = tables.k;
    let grid = &tables.grid;
    let rhs = &problem.rhs;

    let mut states: Vec<StateVector> =
        tables.free.iter().map(|e| StateVector(e.component_mul(&problem.x0.0))).collect();
    let mut selections: Option<Vec<StateVector>> = None;
    let mut history = Vec::new();
    let mut converged = false;
    let mut defect = StateVector::zeros(tables.dim);

    while history.len() < settings.max_iter {
        let init = match nl {
            Some(nl) => StateVector(&problem.x0.0 - nl.apply(grid, &states).0),
            None => problem.x0.clone(),
        };
        let f: Vec<StateVector> = (0..=k)
            .map(|j| rhs.select(grid[j], &states[j], selections.as_ref().map(|s| &s[j])))
            .collect();
        let conv = tables.convolve(&f);
        defect = StateVector(&problem.xb.0 - tables.free[k].component_mul(&init.0) - &conv[k]);
        let q = resolvent.apply(&defect)?;
        let next: Vec<StateVector> = (0..=k)
            .map(|j| StateVector(tables.free[j].component_mul(&init.0) + &conv[j] + &tables.phi[j] * &q))
            .collect();
        let diff = states.iter().zip(&next).map(|(x, y)| (&x.0 - &y.0).norm()).fold(0.0, f64::max);
        history.push(diff);
        states = next;
        selections = Some(f);
        if diff <= settings.tol {
            converged = true;
            break;
        }
    }

    let law = ControlLaw::new(resolvent, defect, problem.horizon, problem.alpha)?;
    let controls = grid
        .iter()
        .map(|&t| eval_control(&law, &problem.op, &problem.control, t))
        .collect::<Result<Vec<_>>>()?;
    let previous = selections.expect("at least one sweep");
    let selections = (0..=k).map(|j| rhs.select(grid[j], &states[j], Some(&previous[j]))).collect();
    let terminal_error = (&states[k].0 - &problem.xb.0).norm();
    let q = &law.weight().0;
    let control_energy = q.dot(&(tables.gramian().matrix() * q)).max(0.0);
    Ok(PicardOutcome {
        trajectory: Trajectory { grid: grid.clone(), states, controls, selections },
        iters: history.len(),
        converged,
        history,
        law,
        terminal_error,
        control_energy,
    })
}

/// Re-evaluates the mild-solution formula at `RECHECK_TIMES` random grid
/// times with fresh kernel evaluations and a different quadrature, and
/// returns the largest deviation from the stored states.
pub fn mild_solution_residual(
    problem: &SemilinearProblem,
    outcome: &PicardOutcome,
    nl: Option<&NonlocalCondition>,
    seed: u64,
) -> Result<f64> {
    let traj = &outcome.trajectory;
    let k = traj.grid.len() - 1;
    let delta = traj.grid[1] - traj.grid[0];
    let alpha = problem.alpha;
    let init = match nl {
        Some(nl) => StateVector(&problem.x0.0 - nl.apply(&traj.grid, &traj.states).0),
        None => problem.x0.clone(),
    };
    let cell = quad::graded_composite(0.0, 1.0, RECHECK_CELL_NODES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..RECHECK_TIMES {
        let j = rng.gen_range(1..=k);
        let tj = traj.grid[j];
        let mut x = DVector::from_vec(problem.op.kernel_diag(alpha, tj)?).component_mul(&init.0);
        for i in 0..j {
            for (eta, w) in cell.iter() {
                // s runs backwards from τ_{i+1} so the rule is graded toward
                // the kernel's endpoint at s = τ_j and the control's at s = b
                let s = traj.grid[i + 1] - eta * delta;
                let f = &traj.selections[i + 1].0 * (1.0 - eta) + &traj.selections[i].0 * eta;
                let u = eval_control(&outcome.law, &problem.op, &problem.control, s.clamp(0.0, problem.horizon))?;
                let forcing = f + problem.control.matrix() * u;
                let e = DVector::from_vec(problem.op.kernel_diag(alpha, (tj - s).max(0.0))?);
                x += e.component_mul(&forcing) * (w * delta);
            }
        }
        worst = worst.max((x - &traj.states[j].0).norm());
    }
    Ok(worst)
}

/// `M γ (1 + M² M_B² b / α)` and whether it is below 1.
pub fn check_growth_condition(m: f64, gamma: f64, m_b: f64, alpha: f64, b: f64) -> (f64, bool) {
    let value = m * gamma * (1.0 + m * m * m_b * m_b * b / alpha);
    (value, value < 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthProfile {
    pub radii: Vec<f64>,
    /// Sampled estimate of `∫_0^b sup_{‖x‖≤r} ‖F(t,x)‖ dt`, made
    /// nondecreasing in `r`. Sampling gives lower bounds of the true sup.
    pub l_values: Vec<f64>,
    /// `l_values / radii`.
    pub ratios: Vec<f64>,
    pub ratio_monotone: bool,
    pub gamma: f64,
}

const GROWTH_TIME_NODES: usize = 8;

/// Samples `samples` states per radius (half on the sphere, half inside the
/// ball) at Gauss–Legendre times on `[0, b]`.
pub fn estimate_growth_profile(
    rhs: &InclusionRhs,
    op: &SpectralOperator,
    horizon: f64,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<GrowthProfile> {
    if radii.is_empty() || radii.windows(2).any(|w| !(w[0] < w[1])) || radii[0] <= 0.0 {
        return Err(Error::Domain("radii must be positive and increasing".into()));
    }
    if samples < 100 {
        return Err(Error::Domain(format!("samples = {samples} < 100")));
    }
    let dim = op.dim();
    let times = quad::gauss_legendre_on(0.0, horizon, GROWTH_TIME_NODES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut l_values = Vec::with_capacity(radii.len());
    let mut running = 0.0f64;
    for &r in radii {
        let points: Vec<StateVector> = (0..samples)
            .map(|i| {
                let dir = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                let scale = if i < samples / 2 { 1.0 } else { rng.gen::<f64>().powf(1.0 / dim as f64) };
                StateVector(dir.normalize() * (r * scale))
            })
            .collect();
        let mut integral = 0.0;
        for (t, w) in times.iter() {
            let sup = points.iter().fold(0.0f64, |m, x| {
                let (lo, hi) = rhs.bounds(t, x);
                m.max(lo.norm()).max(hi.norm())
            });
            integral += w * sup;
        }
        running = running.max(integral);
        l_values.push(running);
    }
    let ratios: Vec<f64> = l_values.iter().zip(radii).map(|(l, r)| l / r).collect();
    let ratio_monotone = ratios.windows(2).all(|w| w[1] <= w[0]) || ratios.windows(2).all(|w| w[1] >= w[0]);
    let gamma = *ratios.last().expect("nonempty");
    Ok(GrowthProfile { radii: radii.to_vec(), l_values, ratios, ratio_monotone, gamma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::apply_solution_operator;

    fn settings(k: usize) -> PicardSettings {
        PicardSettings { grid_k: k, tol: 1e-10, max_iter: 50 }
    }

    fn preset(n: usize, rhs: InclusionRhs) -> SemilinearProblem {
        SemilinearProblem {
            op: SpectralOperator::dirichlet_laplacian(n, 1.0).unwrap(),
            alpha: 1.5,
            control: ControlMap::identity(n).unwrap(),
            horizon: 1.0,
            rhs,
            x0: StateVector::from_vec((1..=n).map(|k| 1.0 / k as f64).collect()),
            xb: StateVector::unit(n, 1),
        }
    }

    #[test]
    fn selections() {
        let lo = StateVector::from_vec(vec![-1.0, 0.0, 2.0]);
        let hi = StateVector::from_vec(vec![1.0, 3.0, 2.0]);
        let prev = StateVector::from_vec(vec![5.0, 1.0, 0.0]);
        assert_eq!(Selection::Midpoint.pick(&lo, &hi, None).coeffs(), &[0.0, 1.5, 2.0]);
        assert_eq!(Selection::Lower.pick(&lo, &hi, None), lo);
        assert_eq!(Selection::Upper.pick(&lo, &hi, Some(&prev)), hi);
        assert_eq!(Selection::Projection.pick(&lo, &hi, Some(&prev)).coeffs(), &[1.0, 1.0, 2.0]);
        assert_eq!(Selection::Projection.pick(&lo, &hi, None).coeffs(), &[0.0, 1.5, 2.0]);
        for s in Selection::NAMES {
            assert_eq!(Selection::from_name(s).unwrap().name(), s);
        }
    }

    #[test]
    fn reachable_target_converges_at_once() {
        let mut p = preset(4, InclusionRhs::zero(Selection::Midpoint));
        p.xb = apply_solution_operator(&p.op, p.alpha, p.horizon, &p.x0).unwrap();
        let out = picard_solve(&p, 1e-3, settings(16)).unwrap();
        assert!(out.converged);
        assert_eq!(out.iters, 1);
        assert!(out.trajectory.controls.iter().all(|u| u.amax() == 0.0));
        for (j, x) in out.trajectory.states.iter().enumerate() {
            let exact = apply_solution_operator(&p.op, p.alpha, out.trajectory.grid[j], &p.x0).unwrap();
            assert!((&x.0 - exact.0).amax() < 1e-15);
        }
    }

    #[test]
    fn symmetric_interval_midpoint_matches_zero_rhs() {
        let zero = picard_solve(&preset(4, InclusionRhs::zero(Selection::Midpoint)), 1e-3, settings(16)).unwrap();
        let sym = picard_solve(&preset(4, InclusionRhs::symmetric_constant(0.7, 4, Selection::Midpoint)), 1e-3, settings(16))
            .unwrap();
        assert_eq!(zero.trajectory.states, sym.trajectory.states);
        assert_eq!(zero.iters, sym.iters);
    }

    #[test]
    fn discrete_terminal_identity() {
        let p = preset(4, InclusionRhs::zero(Selection::Midpoint));
        let out = picard_solve(&p, 1e-2, settings(32)).unwrap();
        let expect = &p.xb.0 - &out.law.weight().0 * 1e-2;
        assert!((&out.trajectory.terminal().0 - expect).amax() < 1e-14);
    }

    #[test]
    fn selections_contained_and_residual_small() {
        for sel in [Selection::Midpoint, Selection::Lower, Selection::Upper, Selection::Projection] {
            let p = preset(4, InclusionRhs::bounded_sine(0.5, 4, sel));
            let out = picard_solve(&p, 1e-3, settings(32)).unwrap();
            assert!(out.converged, "{sel:?}");
            for (j, f) in out.trajectory.selections.iter().enumerate() {
                let (lo, hi) = p.rhs.bounds(out.trajectory.grid[j], &out.trajectory.states[j]);
                for i in 0..f.len() {
                    assert!(lo[i] <= f[i] && f[i] <= hi[i]);
                }
            }
            let res = mild_solution_residual(&p, &out, None, 7).unwrap();
            assert!(res <= 1e-8, "{sel:?}: {res:e}");
        }
    }

    #[test]
    fn scalar_nonlocal_fixed_point() {
        let p = SemilinearProblem {
            op: SpectralOperator::new(vec![0.0]).unwrap(),
            alpha: 1.5,
            control: ControlMap::new(DMatrix::zeros(1, 1)).unwrap(),
            horizon: 1.0,
            rhs: InclusionRhs::zero(Selection::Midpoint),
            x0: StateVector::from_vec(vec![2.0]),
            xb: StateVector::from_vec(vec![0.0]),
        };
        let nl = NonlocalCondition::new(vec![0.25], vec![0.5]).unwrap();
        let s = PicardSettings { grid_k: 16, tol: 1e-13, max_iter: 100 };
        let out = picard_solve_nonlocal(&p, 1e-3, s, &nl).unwrap();
        assert!(out.converged);
        for x in &out.trajectory.states {
            assert!((x[0] - 2.0 / 1.25).abs() < 1e-12);
        }
        let bad = NonlocalCondition::new(vec![0.6, -0.5], vec![0.2, 0.4]).unwrap();
        assert!(picard_solve_nonlocal(&p, 1e-3, s, &bad).is_err());
    }

    #[test]
    fn zero_nonlocal_matches_classical() {
        let p = preset(4, InclusionRhs::bounded_sine(0.5, 4, Selection::Midpoint));
        let nl = NonlocalCondition::new(vec![0.0], vec![0.5]).unwrap();
        let a = picard_solve(&p, 1e-3, settings(16)).unwrap();
        let b = picard_solve_nonlocal(&p, 1e-3, settings(16), &nl).unwrap();
        assert_eq!(a.trajectory.states, b.trajectory.states);
    }

    #[test]
    fn nonlocal_condition_validation() {
        assert!(NonlocalCondition::new(vec![0.1], vec![0.0]).is_err());
        assert!(NonlocalCondition::new(vec![0.1, 0.1], vec![0.5, 0.5]).is_err());
        assert!(NonlocalCondition::new(vec![0.1], vec![0.5, 0.6]).is_err());
        let nl = NonlocalCondition::new(vec![0.1, -0.3], vec![0.2, 0.9]).unwrap();
        assert!((nl.lipschitz() - 0.4).abs() < 1e-16);
    }

    #[test]
    fn growth_condition_arithmetic() {
        assert_eq!(check_growth_condition(1.0, 0.0, 3.0, 1.5, 2.0), (0.0, true));
        let (v, ok) = check_growth_condition(1.0, 0.1, 1.0, 1.5, 1.0);
        assert!((v - 0.1 * (1.0 + 2.0 / 3.0)).abs() < 1e-15 && ok);
        let (v, ok) = check_growth_condition(1.0, 1.0, 1.0, 1.5, 1.0);
        assert!((v - 5.0 / 3.0).abs() < 1e-15 && !ok);
    }

    #[test]
    fn growth_profiles() {
        let op = SpectralOperator::dirichlet_laplacian(8, 1.0).unwrap();
        let radii = [1.0, 10.0, 100.0, 1000.0];
        let zero = estimate_growth_profile(&InclusionRhs::zero(Selection::Midpoint), &op, 1.0, &radii, 200, 1).unwrap();
        assert_eq!(zero.gamma, 0.0);
        let lin = estimate_growth_profile(&InclusionRhs::linear(1.0, Selection::Midpoint), &op, 2.0, &radii, 200, 1).unwrap();
        for r in &lin.ratios {
            assert!((r - 2.0).abs() < 1e-12, "{r}");
        }
        let c = 0.5;
        let rhs = InclusionRhs::bounded_sine(c, 8, Selection::Midpoint);
        let prof = estimate_growth_profile(&rhs, &op, 1.0, &radii, 200, 1).unwrap();
        assert!(prof.l_values.windows(2).all(|w| w[0] <= w[1]));
        assert!(prof.ratio_monotone);
        assert!(prof.gamma <= rhs.uniform_bound(0.0).unwrap() * 1.0 / 1000.0);
        assert!(prof.gamma > 0.0);
    }
}
