//! Experiment configuration, batch runner and result files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gramian::{ControlMap, LinearProblem};
use crate::quad;
use crate::semilinear::{
    check_growth_condition, estimate_growth_profile, picard_solve_with, InclusionRhs, NonlocalCondition, PicardSettings,
    PicardTables, Selection, SemilinearProblem,
};
use crate::spectral::{operator_norm_bound, SpectralOperator, StateVector};

pub const DEFAULT_MODES: usize = 16;
pub const DEFAULT_SHIFT: f64 = 1.0;
pub const CSV_HEADER: &str = "a,terminal_error,control_energy,picard_iters,converged,wall_time";
pub const RHS_PRESETS: [&str; 4] = ["zero", "bounded_sine", "symmetric_constant", "linear"];
pub const SYSTEM_PRESETS: [&str; 1] = ["dirichlet_laplacian"];

/// Radii used for the growth-profile estimate behind [`Experiment::growth_check`].
pub const GROWTH_RADII: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
const GROWTH_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemSpec,
    pub control: ControlSpec,
    pub problem: ProblemSpec,
    pub rhs: RhsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlocal: Option<NonlocalSpec>,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub numerics: NumericsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(rename = "B")]
    pub b: MatrixSpec,
}

/// `"identity"`, `"modes:[1,3]"`, or rows of an explicit matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

/// `"zero"`, `"unit:k"`, `"decay:p"` (`x_n = n^-p`), or explicit coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub x0: VectorSpec,
    pub xb: VectorSpec,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsSpec {
    pub preset: String,
    #[serde(default = "default_selection")]
    pub selection: String,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlocalSpec {
    pub c: Vec<f64>,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub a_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSpec {
    #[serde(rename = "grid_K", default = "default_grid")]
    pub grid_k: usize,
    #[serde(default = "default_quad_nodes")]
    pub quad_nodes: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Default for NumericsSpec {
    fn default() -> Self {
        Self { grid_k: default_grid(), quad_nodes: default_quad_nodes(), tol: default_tol(), max_iter: default_max_iter() }
    }
}

fn default_selection() -> String {
    Selection::default().name().to_string()
}
fn default_scale() -> f64 {
    1.0
}
fn default_grid() -> usize {
    64
}
fn default_quad_nodes() -> usize {
    64
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iter() -> usize {
    50
}

/// A validated configuration with its numerical objects built.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub op: SpectralOperator,
    pub alpha: f64,
    pub control: ControlMap,
    pub horizon: f64,
    pub x0: StateVector,
    pub xb: StateVector,
    pub rhs: InclusionRhs,
    pub nonlocal: Option<NonlocalCondition>,
    pub a_values: Vec<f64>,
    pub settings: PicardSettings,
    pub quad_nodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub a: f64,
    pub terminal_error: f64,
    pub control_energy: f64,
    pub picard_iters: usize,
    pub converged: bool,
    pub wall_time: f64,
    /// Set when the row could not be computed; not written to CSV.
    pub failure: Option<String>,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.converged && self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthCheck {
    pub m: f64,
    pub m_b: f64,
    pub gamma: f64,
    pub value: f64,
    pub satisfied: bool,
}

/// Parses and validates. All validation problems are reported together.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
    config.build()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn build(&self) -> Result<Experiment> {
        let mut errs = Vec::new();
        let sys = &self.system;

        // TOML integers are signed 64-bit
        if i64::try_from(self.seed).is_err() {
            errs.push(format!("seed: {} exceeds {}", self.seed, i64::MAX));
        }
        if !(sys.alpha > 1.0 && sys.alpha < 2.0) {
            errs.push(format!("system.alpha: {} outside (1, 2)", sys.alpha));
        }
        let op = match (&sys.preset, &sys.eigenvalues) {
            (Some(_), Some(_)) => {
                errs.push("system: give either preset or eigenvalues, not both".into());
                None
            }
            (None, None) => {
                errs.push("system: one of preset or eigenvalues is required".into());
                None
            }
            (Some(name), None) if name == SYSTEM_PRESETS[0] => {
                let n = sys.n.unwrap_or(DEFAULT_MODES);
                let r = sys.r.unwrap_or(DEFAULT_SHIFT);
                if n == 0 {
                    errs.push("system.N: must be positive".into());
                }
                if !r.is_finite() {
                    errs.push(format!("system.r: {r} is not finite"));
                }
                SpectralOperator::dirichlet_laplacian(n, r).ok()
            }
            (Some(name), None) => {
                errs.push(format!("system.preset: unknown preset '{name}' (known: {})", SYSTEM_PRESETS.join(", ")));
                None
            }
            (None, Some(eigs)) => {
                if let Some(n) = sys.n.filter(|&n| n != eigs.len()) {
                    errs.push(format!("system.N: {n} does not match {} eigenvalues", eigs.len()));
                }
                if sys.r.is_some() {
                    errs.push("system.r: only used with a preset".into());
                }
                match SpectralOperator::new(eigs.clone()) {
                    Ok(op) => Some(op),
                    Err(e) => {
                        errs.push(format!("system.eigenvalues: {e}"));
                        None
                    }
                }
            }
        };
        let dim = op.as_ref().map(|o| o.dim());

        let control = dim.and_then(|n| match build_control(&self.control.b, n) {
            Ok(c) => Some(c),
            Err(e) => {
                errs.push(format!("control.B: {e}"));
                None
            }
        });

        let p = &self.problem;
        if !(p.b > 0.0 && p.b.is_finite()) {
            errs.push(format!("problem.b: {} must be positive", p.b));
        }
        let mut vector = |field: &str, spec: &VectorSpec| {
            dim.and_then(|n| match build_vector(spec, n) {
                Ok(v) => Some(v),
                Err(e) => {
                    errs.push(format!("problem.{field}: {e}"));
                    None
                }
            })
        };
        let x0 = vector("x0", &p.x0);
        let xb = vector("xb", &p.xb);

        let selection = Selection::from_name(&self.rhs.selection);
        if selection.is_none() {
            errs.push(format!(
                "rhs.selection: unknown selection '{}' (known: {})",
                self.rhs.selection,
                Selection::NAMES.join(", ")
            ));
        }
        if !self.rhs.scale.is_finite() {
            errs.push(format!("rhs.scale: {} is not finite", self.rhs.scale));
        } else if self.rhs.scale < 0.0 && self.rhs.preset != "linear" {
            errs.push(format!("rhs.scale: {} must be nonnegative for interval presets", self.rhs.scale));
        }
        if !RHS_PRESETS.contains(&self.rhs.preset.as_str()) {
            errs.push(format!("rhs.preset: unknown preset '{}' (known: {})", self.rhs.preset, RHS_PRESETS.join(", ")));
        }
        let rhs = match (dim, selection) {
            (Some(n), Some(sel)) => build_rhs(&self.rhs.preset, self.rhs.scale, n, sel),
            _ => None,
        };

        let nonlocal = self.nonlocal.as_ref().and_then(|nl| {
            let mut ok = true;
            if nl.c.is_empty() {
                errs.push("nonlocal.c: must be nonempty".into());
                ok = false;
            }
            if nl.c.len() != nl.t.len() {
                errs.push(format!("nonlocal.t: {} times for {} coefficients", nl.t.len(), nl.c.len()));
                ok = false;
            }
            let total: f64 = nl.c.iter().map(|c| c.abs()).sum();
            if !(total < 1.0) {
                errs.push(format!("nonlocal.c: sum of |c_k| = {total} must be below 1"));
                ok = false;
            }
            if nl.t.iter().any(|&t| !(t > 0.0 && t <= p.b)) {
                errs.push("nonlocal.t: times must lie in (0, b]".into());
                ok = false;
            }
            if nl.t.windows(2).any(|w| !(w[0] < w[1])) {
                errs.push("nonlocal.t: not increasing".into());
                ok = false;
            }
            if !ok {
                return None;
            }
            NonlocalCondition::new(nl.c.clone(), nl.t.clone()).map_err(|e| errs.push(format!("nonlocal: {e}"))).ok()
        });

        let a = &self.sweep.a_values;
        if a.is_empty() {
            errs.push("sweep.a_values: empty".into());
        }
        if a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            errs.push("sweep.a_values: must be positive".into());
        }
        if a.windows(2).any(|w| !(w[1] < w[0])) {
            errs.push("sweep.a_values: not decreasing".into());
        }

        let num = &self.numerics;
        if num.grid_k < 16 {
            errs.push(format!("numerics.grid_K: {} < 16", num.grid_k));
        }
        if num.quad_nodes < 16 {
            errs.push(format!("numerics.quad_nodes: {} < 16", num.quad_nodes));
        }
        if !(num.tol > 0.0) {
            errs.push(format!("numerics.tol: {} must be positive", num.tol));
        }
        if num.max_iter == 0 {
            errs.push("numerics.max_iter: must be at least 1".into());
        }

        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let missing = || Error::Config(vec!["internal: incomplete configuration".into()]);
        Ok(Experiment {
            config: self.clone(),
            op: op.ok_or_else(missing)?,
            alpha: sys.alpha,
            control: control.ok_or_else(missing)?,
            horizon: p.b,
            x0: x0.ok_or_else(missing)?,
            xb: xb.ok_or_else(missing)?,
            rhs: rhs.ok_or_else(missing)?,
            nonlocal,
            a_values: a.clone(),
            settings: PicardSettings { grid_k: num.grid_k, tol: num.tol, max_iter: num.max_iter },
            quad_nodes: num.quad_nodes,
            seed: self.seed,
        })
    }
}

fn build_control(spec: &MatrixSpec, n: usize) -> std::result::Result<ControlMap, String> {
    match spec {
        MatrixSpec::Named(s) if s == "identity" => ControlMap::identity(n).map_err(|e| e.to_string()),
        MatrixSpec::Named(s) => {
            let list = s
                .strip_prefix("modes:")
                .map(str::trim)
                .and_then(|l| l.strip_prefix('['))
                .and_then(|l| l.strip_suffix(']'))
                .ok_or_else(|| format!("unknown control '{s}' (expected identity, modes:[...], or a matrix)"))?;
            let modes = list
                .split(',')
                .map(|m| m.trim().parse::<usize>().map_err(|_| format!("bad mode index '{}'", m.trim())))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if modes.is_empty() {
                return Err("empty mode list".into());
            }
            let mut sorted = modes.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err("repeated mode index".into());
            }
            ControlMap::modes(n, &modes).map_err(|e| e.to_string())
        }
        MatrixSpec::Rows(rows) => {
            if rows.len() != n {
                return Err(format!("{} rows for N = {n}", rows.len()));
            }
            let m = rows[0].len();
            if m == 0 || rows.iter().any(|r| r.len() != m) {
                return Err("rows must be nonempty and of equal length".into());
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            ControlMap::new(DMatrix::from_row_slice(n, m, &flat)).map_err(|e| e.to_string())
        }
    }
}

fn build_vector(spec: &VectorSpec, n: usize) -> std::result::Result<StateVector, String> {
    match spec {
        VectorSpec::Values(v) if v.len() != n => Err(format!("{} coefficients for N = {n}", v.len())),
        VectorSpec::Values(v) if v.iter().any(|x| !x.is_finite()) => Err("non-finite coefficient".into()),
        VectorSpec::Values(v) => Ok(StateVector::from_vec(v.clone())),
        VectorSpec::Named(s) if s == "zero" => Ok(StateVector::zeros(n)),
        VectorSpec::Named(s) => {
            if let Some(k) = s.strip_prefix("unit:") {
                match k.trim().parse::<usize>() {
                    Ok(k) if (1..=n).contains(&k) => Ok(StateVector::unit(n, k)),
                    _ => Err(format!("'{s}': unit index must be in 1..={n}")),
                }
            } else if let Some(p) = s.strip_prefix("decay:") {
                match p.trim().parse::<f64>() {
                    Ok(p) if p.is_finite() => Ok(StateVector::from_vec((1..=n).map(|k| (k as f64).powf(-p)).collect())),
                    _ => Err(format!("'{s}': bad exponent")),
                }
            } else {
                Err(format!("unknown vector '{s}' (expected zero, unit:k, decay:p, or coefficients)"))
            }
        }
    }
}

fn build_rhs(preset: &str, scale: f64, n: usize, sel: Selection) -> Option<InclusionRhs> {
    Some(match preset {
        "zero" => InclusionRhs::zero(sel),
        "bounded_sine" => InclusionRhs::bounded_sine(scale, n, sel),
        "symmetric_constant" => InclusionRhs::symmetric_constant(scale, n, sel),
        "linear" => InclusionRhs::linear(scale, sel),
        _ => return None,
    })
}

impl Experiment {
    /// No right-hand side and no nonlocal term: the terminal state has a
    /// closed form and no fixed-point iteration is needed.
    pub fn is_linear(&self) -> bool {
        self.config.rhs.preset == "zero" && self.nonlocal.is_none()
    }

    pub fn linear_problem(&self) -> LinearProblem {
        LinearProblem {
            op: self.op.clone(),
            alpha: self.alpha,
            control: self.control.clone(),
            horizon: self.horizon,
            x0: self.x0.clone(),
            xb: self.xb.clone(),
            quad_nodes: self.quad_nodes,
        }
    }

    pub fn semilinear_problem(&self) -> SemilinearProblem {
        SemilinearProblem {
            op: self.op.clone(),
            alpha: self.alpha,
            control: self.control.clone(),
            horizon: self.horizon,
            rhs: self.rhs.clone(),
            x0: self.x0.clone(),
            xb: self.xb.clone(),
        }
    }

    /// One row per `a`, computed in parallel, in input order. `wall_time` is
    /// only measured when `timing` is set, so that untimed output is
    /// reproducible byte for byte.
    pub fn run(&self, timing: bool) -> Result<Vec<ResultRow>> {
        let clock = |start: Instant| if timing { start.elapsed().as_secs_f64() } else { 0.0 };
        let failed = |a: f64, e: Error, wall_time: f64| ResultRow {
            a,
            terminal_error: f64::NAN,
            control_energy: f64::NAN,
            picard_iters: 0,
            converged: false,
            wall_time,
            failure: Some(e.to_string()),
        };
        if self.is_linear() {
            let problem = self.linear_problem();
            let gram = problem.gramian()?;
            return Ok(self
                .a_values
                .par_iter()
                .map(|&a| {
                    let start = Instant::now();
                    match problem.terminal_state(&gram, a) {
                        Ok(out) => ResultRow {
                            a,
                            terminal_error: out.error_norm,
                            control_energy: out.control_energy,
                            picard_iters: 0,
                            converged: true,
                            wall_time: clock(start),
                            failure: None,
                        },
                        Err(e) => failed(a, e, clock(start)),
                    }
                })
                .collect());
        }
        let problem = self.semilinear_problem();
        let tables = PicardTables::build(&self.op, self.alpha, &self.control, self.horizon, self.settings.grid_k)?;
        Ok(self
            .a_values
            .par_iter()
            .map(|&a| {
                let start = Instant::now();
                match picard_solve_with(&tables, &problem, a, self.settings, self.nonlocal.as_ref()) {
                    Ok(out) => ResultRow {
                        a,
                        terminal_error: out.terminal_error,
                        control_energy: out.control_energy,
                        picard_iters: out.iters,
                        converged: out.converged,
                        wall_time: clock(start),
                        failure: None,
                    },
                    Err(e) => failed(a, e, clock(start)),
                }
            })
            .collect())
    }

    /// Evaluates the growth condition with `M` from the kernel on a time grid,
    /// `M_B = ‖B‖` and `γ` from a sampled growth profile at `r_max = 1000`.
    pub fn growth_check(&self) -> Result<GrowthCheck> {
        let mut times = vec![0.0];
        times.extend(quad::composite_gauss_legendre(0.0, self.horizon, 64).nodes);
        times.push(self.horizon);
        let m = operator_norm_bound(&self.op, self.alpha, &times)?;
        let profile = estimate_growth_profile(&self.rhs, &self.op, self.horizon, &GROWTH_RADII, GROWTH_SAMPLES, self.seed)?;
        let m_b = self.control.norm();
        let (value, satisfied) = check_growth_condition(m, profile.gamma, m_b, self.alpha, self.horizon);
        Ok(GrowthCheck { m, m_b, gamma: profile.gamma, value, satisfied })
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.build()?.run(false)
}

pub fn format_csv(rows: &[ResultRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{},{},{:e}",
            r.a, r.terminal_error, r.control_energy, r.picard_iters, r.converged, r.wall_time
        );
    }
    s
}

pub fn format_table(rows: &[ResultRow]) -> String {
    let mut s = format!(
        "{:>10}  {:>14}  {:>14}  {:>5}  {:>9}  {:>9}\n",
        "a", "terminal_error", "control_energy", "iters", "converged", "wall_time"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>10.3e}  {:>14.6e}  {:>14.6e}  {:>5}  {:>9}  {:>9.3}",
            r.a,
            r.terminal_error,
            r.control_energy,
            r.picard_iters,
            if r.converged { "yes" } else { "no" },
            r.wall_time
        );
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_file(path, &format_csv(rows))
}

pub fn write_table(rows: &[ResultRow], path: &Path) -> Result<()> {
    write_file(path, &format_table(rows))
}

pub fn parse_results(text: &str) -> std::result::Result<Vec<ResultRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let line_no = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(format!("line {line_no}: expected 6 fields, got {}", f.len()));
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|e| format!("line {line_no}, field {}: {e}", k + 1));
            Ok(ResultRow {
                a: num(0)?,
                terminal_error: num(1)?,
                control_energy: num(2)?,
                picard_iters: f[3].parse().map_err(|e| format!("line {line_no}, field 4: {e}"))?,
                converged: f[4].parse().map_err(|e| format!("line {line_no}, field 5: {e}"))?,
                wall_time: num(5)?,
                failure: None,
            })
        })
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_results(&text).map_err(|message| Error::Parse { path: path.to_path_buf(), message })
}
