//! Mittag-Leffler functions on the real axis.
//!
//! `E_{α,β}(z) = Σ_k z^k / Γ(αk + β)`. The scalar solution operator of a
//! mode with eigenvalue `μ` is `E_α(μ t^α)`, so the arguments that matter are
//! real and mostly negative.
//!
//! Three evaluation routes are used, chosen by `T = |z|^(1/α)`:
//!
//! * **series**: the power series with the powers `z^k` carried in
//!   double-double and the sum in compensated arithmetic. Used for `z ≥ 0`
//!   and for small `T`, where cancellation between alternating terms is mild.
//! * **integral**: for `z = -T^α` the exact split into the two pole
//!   contributions `(2/α) Re[ζ^(1-β) e^ζ]`, `ζ = T e^(iπ/α)`, and a
//!   real-axis Laplace integral `∫_0^∞ e^(-rT) K(r) dr`, evaluated by
//!   tanh-sinh quadrature. Covers the middle band where the series has lost
//!   too many digits and the asymptotic expansion is not yet sharp.
//! * **asymptotic**: the pole contributions plus `-Σ z^(-k)/Γ(β - αk)`,
//!   truncated before the smallest term. For `1 < α < 2` the pole part is
//!   exponentially small but not negligible at moderate `T`.
//!
//! Every result carries an error estimate; arguments for which no route gets
//! below [`TOLERANCE`] are rejected.

use std::f64::consts::PI;

use thiserror::Error;

use crate::quad::tanh_sinh;

/// Absolute accuracy promised by [`ml_eval`].
pub const TOLERANCE: f64 = 1e-12;

const EPS: f64 = f64::EPSILON;
/// Relative error of `1/Γ` from `libm::tgamma` plus the division, in units of
/// `EPS` (measured worst case about 2.6 ulp for `tgamma`).
const RECIP_GAMMA_EPS: f64 = 4.0 * EPS;
/// Above this `T` the series cancellation costs more than two digits.
const T_SERIES: f64 = 4.0;
/// The asymptotic expansion is tried from here on.
const T_ASYMPTOTIC: f64 = 24.0;
/// Acceptance threshold for the asymptotic branch.
const ASYMPTOTIC_TARGET: f64 = 1e-14;
const MAX_SERIES_TERMS: usize = 600;
const MAX_ASYMPTOTIC_TERMS: usize = 400;
/// Upper limit of the scaled Laplace variable; `e^-50 ≈ 2e-22`.
const LAPLACE_CUTOFF: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MlError {
    #[error("invalid Mittag-Leffler parameters alpha={alpha}, beta={beta} (need 0 < alpha <= 2, beta > 0)")]
    InvalidParams { alpha: f64, beta: f64 },
    #[error("argument {0} is not finite")]
    NonFinite(f64),
    #[error("solution kernel needs t >= 0, got {0}")]
    NegativeTime(f64),
    #[error("E_{{{alpha},{beta}}}({z}): best error bound {best_bound:e} exceeds {tolerance:e}")]
    ToleranceUnreachable { alpha: f64, beta: f64, z: f64, best_bound: f64, tolerance: f64 },
    #[error("{branch:?} branch is not available for alpha={alpha}, beta={beta}, z={z}")]
    BranchUnavailable { branch: Branch, alpha: f64, beta: f64, z: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlParams {
    alpha: f64,
    beta: f64,
}

impl MlParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, MlError> {
        let ok = alpha.is_finite() && beta.is_finite() && alpha > 0.0 && alpha <= 2.0 && beta > 0.0;
        if ok {
            Ok(Self { alpha, beta })
        } else {
            Err(MlError::InvalidParams { alpha, beta })
        }
    }

    /// One-parameter function `E_α = E_{α,1}`.
    pub fn classical(alpha: f64) -> Result<Self, MlError> {
        Self::new(alpha, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Series,
    Integral,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlResult {
    pub value: f64,
    pub est_abs_error: f64,
    pub branch: Branch,
}

/// Evaluates `E_{α,β}(z)` to absolute accuracy [`TOLERANCE`].
pub fn ml_eval(params: MlParams, z: f64) -> Result<MlResult, MlError> {
    if !z.is_finite() {
        return Err(MlError::NonFinite(z));
    }
    let MlParams { alpha, beta } = params;
    let accept = |r: MlResult| -> Result<MlResult, MlError> {
        if r.est_abs_error <= TOLERANCE {
            Ok(r)
        } else {
            Err(MlError::ToleranceUnreachable { alpha, beta, z, best_bound: r.est_abs_error, tolerance: TOLERANCE })
        }
    };

    if z >= 0.0 {
        return accept(series(alpha, beta, z));
    }
    if alpha == 1.0 && beta == 1.0 {
        // E_1 is the exponential; its series sums in closed form
        let value = z.exp();
        return Ok(MlResult { value, est_abs_error: EPS * value, branch: Branch::Series });
    }

    let x = -z;
    let t = x.powf(1.0 / alpha);
    if t <= T_SERIES {
        return accept(series(alpha, beta, z));
    }
    let mut best: Option<MlResult> = None;
    if t >= T_ASYMPTOTIC {
        let r = asymptotic(alpha, beta, x);
        if r.est_abs_error <= ASYMPTOTIC_TARGET {
            return Ok(r);
        }
        best = Some(r);
    }
    if let Some(r) = integral(alpha, beta, x) {
        if r.est_abs_error <= TOLERANCE {
            return Ok(r);
        }
        best = pick_better(best, r);
    }
    best = pick_better(best, asymptotic(alpha, beta, x));
    if t < 40.0 {
        best = pick_better(best, series(alpha, beta, z));
    }
    accept(best.expect("at least one branch evaluated"))
}

/// Evaluates with a forced branch. The result is returned whatever its error
/// estimate; this is meant for diagnostics and cross-checks.
pub fn ml_eval_branch(params: MlParams, z: f64, branch: Branch) -> Result<MlResult, MlError> {
    if !z.is_finite() {
        return Err(MlError::NonFinite(z));
    }
    let MlParams { alpha, beta } = params;
    let unavailable = MlError::BranchUnavailable { branch, alpha, beta, z };
    match branch {
        Branch::Series => Ok(series(alpha, beta, z)),
        Branch::Asymptotic if z < 0.0 => Ok(asymptotic(alpha, beta, -z)),
        Branch::Integral if z < 0.0 => integral(alpha, beta, -z).ok_or(unavailable),
        _ => Err(unavailable),
    }
}

/// Scalar solution operator `s_α(t; μ) = E_α(μ t^α)`.
pub fn solution_kernel(alpha: f64, mu: f64, t: f64) -> Result<f64, MlError> {
    let params = MlParams::classical(alpha)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(MlError::NegativeTime(t));
    }
    if !mu.is_finite() {
        return Err(MlError::NonFinite(mu));
    }
    if t == 0.0 || mu == 0.0 {
        return Ok(1.0);
    }
    Ok(ml_eval(params, mu * t.powf(alpha))?.value)
}

fn pick_better(best: Option<MlResult>, candidate: MlResult) -> Option<MlResult> {
    match best {
        Some(b) if b.est_abs_error <= candidate.est_abs_error => Some(b),
        _ => Some(candidate),
    }
}

#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `sin(πx)` with exact zeros at the integers.
pub(crate) fn sinpi(x: f64) -> f64 {
    let r = x.rem_euclid(2.0);
    if r == 0.0 || r == 1.0 {
        return 0.0;
    }
    let (sign, y) = if r < 1.0 { (1.0, r) } else { (-1.0, r - 1.0) };
    let y = if y > 0.5 { 1.0 - y } else { y };
    sign * (PI * y).sin()
}

/// `cos(πx)` with exact zeros at the half integers.
pub(crate) fn cospi(x: f64) -> f64 {
    let r = x.abs().rem_euclid(2.0);
    if r == 0.5 || r == 1.5 {
        return 0.0;
    }
    sinpi(r + 0.5)
}

/// `1/Γ(x)`, zero at the poles of `Γ`.
pub(crate) fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x >= 0.5 {
        1.0 / libm::tgamma(x)
    } else {
        sinpi(x) * libm::tgamma(1.0 - x) / PI
    }
}

fn series(alpha: f64, beta: f64, z: f64) -> MlResult {
    let mut acc = Neumaier::default();
    let mut abs_sum = 0.0;
    // z^k as an unevaluated sum hi + lo
    let (mut p_hi, mut p_lo) = (1.0f64, 0.0f64);
    let mut prev_abs = f64::NAN;
    let mut tail = f64::INFINITY;
    for k in 0..MAX_SERIES_TERMS {
        let y = alpha * k as f64 + beta;
        let rg = recip_gamma(y);
        let term = p_hi * rg + p_lo * rg;
        if !term.is_finite() {
            break;
        }
        acc.add(term);
        abs_sum += term.abs();
        if k > 0 && y > 2.0 && prev_abs > 0.0 {
            let ratio = term.abs() / prev_abs;
            // past the peak the ratio |t_{k+1}/t_k| only decreases
            if ratio < 1.0 {
                let bound = term.abs() * ratio / (1.0 - ratio);
                if bound <= 1e-18 * acc.value().abs().max(1e-3) || term == 0.0 {
                    tail = bound;
                    break;
                }
            }
        }
        prev_abs = term.abs();
        let hi = p_hi * z;
        let lo = p_hi.mul_add(z, -hi) + p_lo * z;
        p_hi = hi + lo;
        p_lo = lo - (p_hi - hi);
        if !p_hi.is_finite() {
            break;
        }
    }
    let value = acc.value();
    let rounding = (RECIP_GAMMA_EPS + EPS) * abs_sum + 2.0 * EPS * value.abs();
    MlResult { value, est_abs_error: tail + rounding, branch: Branch::Series }
}

/// Sum of the two pole contributions `(2/α) Re[ζ^(1-β) e^ζ]` with
/// `ζ = t e^(iπ/α)`, present for `1 < α ≤ 2`.
fn pole_terms(alpha: f64, beta: f64, t: f64) -> f64 {
    if alpha <= 1.0 {
        return 0.0;
    }
    let c = cospi(1.0 / alpha);
    let s = sinpi(1.0 / alpha);
    let phase = t * s + (1.0 - beta) * PI / alpha;
    (2.0 / alpha) * t.powf(1.0 - beta) * (t * c).exp() * phase.cos()
}

/// Modulus of the pole contribution ignoring the oscillating phase; its
/// rounding error scales with this rather than with the (possibly tiny) value.
fn pole_envelope(alpha: f64, beta: f64, t: f64) -> f64 {
    if alpha <= 1.0 {
        return 0.0;
    }
    (2.0 / alpha) * t.powf(1.0 - beta) * (t * cospi(1.0 / alpha)).exp()
}

fn asymptotic(alpha: f64, beta: f64, x: f64) -> MlResult {
    let t = x.powf(1.0 / alpha);
    let pole = pole_terms(alpha, beta, t);
    let ln_x = x.ln();
    let mut acc = Neumaier::default();
    acc.add(pole);
    let mut abs_sum = pole.abs();
    let mut prev_env = f64::INFINITY;
    let mut omitted = f64::INFINITY;
    let envelope = |k: usize, term: f64| -> f64 {
        let y = beta - alpha * k as f64;
        // |1/Γ(y)| = |sin(πy)| Γ(1-y)/π ≤ Γ(1-y)/π for y < 1
        if y < 1.0 {
            let bound = (libm::lgamma(1.0 - y) - k as f64 * ln_x).exp() / PI;
            bound.max(term.abs())
        } else {
            term.abs()
        }
    };
    for k in 1..=MAX_ASYMPTOTIC_TERMS {
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        let term = sign * (-(k as f64) * ln_x).exp() * recip_gamma(beta - alpha * k as f64);
        let env = envelope(k, term);
        if env >= prev_env {
            omitted = env;
            break;
        }
        acc.add(term);
        abs_sum += term.abs();
        prev_env = env;
        if env <= 1e-20 {
            omitted = envelope(k + 1, 0.0);
            break;
        }
    }
    let mut est = 4.0 * omitted;
    if alpha == 1.0 {
        // the pole sits on the branch cut; its e^-x contribution is not summed
        est += x.powf(1.0 - beta) * (-x).exp();
    }
    let value = acc.value();
    let rounding = (RECIP_GAMMA_EPS + EPS) * abs_sum + 4.0 * (t + 1.0) * EPS * pole_envelope(alpha, beta, t) + 2.0 * EPS * value.abs();
    MlResult { value, est_abs_error: est + rounding, branch: Branch::Asymptotic }
}

/// Kernel of the real-axis Laplace representation:
/// `K(r) = (1/π) r^(α-β) [r^α sin(πβ) - sin(π(α-β))] / (r^(2α) + 2 r^α cos(πα) + 1)`.
fn laplace_kernel(alpha: f64, beta: f64, r: f64, sin_b: f64, sin_ab: f64, cos_a: f64) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    let ra = r.powf(alpha);
    let num = r.powf(alpha - beta) * (ra * sin_b - sin_ab);
    let den = ra * ra + 2.0 * ra * cos_a + 1.0;
    num / (PI * den)
}

fn integral(alpha: f64, beta: f64, x: f64) -> Option<MlResult> {
    if alpha == 1.0 || alpha - beta <= -1.0 {
        return None;
    }
    let t = x.powf(1.0 / alpha);
    let pole = pole_terms(alpha, beta, t);
    let sin_b = sinpi(beta);
    let sin_ab = sinpi(alpha - beta);
    let cos_a = cospi(alpha);
    // E = pole + t^(1-β) ∫_0^∞ e^(-rt) K(r) dr, and with r = v/t the
    // integral is (1/t) ∫_0^∞ e^(-v) K(v/t) dv
    let scale = t.powf(-beta);
    let tol = 1e-15 / scale;
    let f = |v: f64| (-v).exp() * laplace_kernel(alpha, beta, v / t, sin_b, sin_ab, cos_a);

    // split where the denominator is smallest, which is near the poles
    let mut breaks = vec![0.0];
    if cos_a < 0.0 {
        let vp = t * (-cos_a).powf(1.0 / alpha);
        if vp > 0.0 && vp < LAPLACE_CUTOFF {
            breaks.push(vp);
        }
    }
    breaks.push(LAPLACE_CUTOFF);
    let mut total = 0.0;
    let mut diff = 0.0;
    let mut abs_total = 0.0;
    for w in breaks.windows(2) {
        let (v, d) = tanh_sinh(w[0], w[1], tol, 9, f);
        total += v;
        abs_total += v.abs();
        diff += d;
    }
    let tail = 2.0 * (-LAPLACE_CUTOFF).exp() * laplace_kernel(alpha, beta, LAPLACE_CUTOFF / t, sin_b, sin_ab, cos_a).abs();
    let value = pole + scale * total;
    let est = scale * (diff + tail + 64.0 * EPS * abs_total) + 4.0 * (t + 1.0) * EPS * pole_envelope(alpha, beta, t) + 2.0 * EPS * value.abs();
    Some(MlResult { value, est_abs_error: est, branch: Branch::Integral })
}
