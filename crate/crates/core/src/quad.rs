//! Quadrature rules.
//!
//! Everything here is a plain node/weight table on a real interval. The
//! graded rules exist because the integrands in this crate carry algebraic
//! endpoint behaviour of the form `τ^α` (the kernel `E_α(μ τ^α)` near
//! `τ = 0`) or `(t - s)^(α-1)` (the Riemann-Liouville weight).

use std::f64::consts::PI;

/// Grading exponent for the power maps `x = h v^q` used near algebraic
/// endpoints. With `q = 3` a `τ^α` term turns into `v^(3α + 2)`, smooth
/// enough that Gauss-Legendre converges at a high algebraic rate.
pub const GRADE: i32 = 3;

/// Panel size of the composite Gauss-Legendre rules.
pub const PANEL: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    fn append(&mut self, other: Rule) {
        self.nodes.extend(other.nodes);
        self.weights.extend(other.weights);
    }
}

/// Gauss-Legendre rule with `n` points on `[-1, 1]`, by Newton iteration on
/// the three-term recurrence.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre with `n` points mapped to `[a, b]`.
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> Rule {
    let base = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Rule {
        nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
        weights: base.weights.iter().map(|w| half * w).collect(),
    }
}

/// Composite Gauss-Legendre on `[a, b]` with panels of [`PANEL`] nodes.
/// `total` is rounded up to a whole number of panels.
pub fn composite_gauss_legendre(a: f64, b: f64, total: usize) -> Rule {
    let panels = total.div_ceil(PANEL).max(1);
    let h = (b - a) / panels as f64;
    let mut rule = Rule { nodes: Vec::with_capacity(panels * PANEL), weights: Vec::with_capacity(panels * PANEL) };
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = if p + 1 == panels { b } else { lo + h };
        rule.append(gauss_legendre_on(lo, hi, PANEL));
    }
    rule
}

/// Composite Gauss-Legendre in the graded variable `v`, where the physical
/// point is `x = a + (b - a) v^GRADE`. Nodes cluster at `a`, which is where
/// the algebraic singularity is assumed to sit.
pub fn graded_composite(a: f64, b: f64, total: usize) -> Rule {
    let base = composite_gauss_legendre(0.0, 1.0, total);
    let len = b - a;
    let q = GRADE as f64;
    Rule {
        nodes: base.nodes.iter().map(|v| a + len * v.powi(GRADE)).collect(),
        weights: base
            .nodes
            .iter()
            .zip(&base.weights)
            .map(|(v, w)| w * len * q * v.powi(GRADE - 1))
            .collect(),
    }
}

/// Rule on `[a, b]` graded towards both endpoints: the interval is split in
/// half and each half carries `half_nodes` Gauss-Legendre points in a
/// power-graded variable. The rule is symmetric about the midpoint.
pub fn two_sided_graded(a: f64, b: f64, half_nodes: usize) -> Rule {
    let base = gauss_legendre_on(0.0, 1.0, half_nodes);
    let h = 0.5 * (b - a);
    let q = GRADE as f64;
    let mut nodes = Vec::with_capacity(2 * half_nodes);
    let mut weights = Vec::with_capacity(2 * half_nodes);
    for (v, w) in base.iter() {
        nodes.push(a + h * v.powi(GRADE));
        weights.push(w * h * q * v.powi(GRADE - 1));
    }
    for (v, w) in base.iter().rev() {
        nodes.push(b - h * v.powi(GRADE));
        weights.push(w * h * q * v.powi(GRADE - 1));
    }
    Rule { nodes, weights }
}

/// Gauss-Jacobi rule for the weight `(1 - x)^a (1 + x)^b` on `[-1, 1]`,
/// from the eigen-decomposition of the Jacobi matrix (Golub-Welsch).
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Rule {
    assert!(n > 0 && a > -1.0 && b > -1.0);
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n.saturating_sub(1)];
    for (k, d) in diag.iter_mut().enumerate() {
        let kf = k as f64;
        let s = 2.0 * kf + a + b;
        *d = if k == 0 { (b - a) / (a + b + 2.0) } else { (b * b - a * a) / (s * (s + 2.0)) };
    }
    for (k, o) in off.iter_mut().enumerate() {
        let kf = (k + 1) as f64;
        let s = 2.0 * kf + a + b;
        *o = (4.0 * kf * (kf + a) * (kf + b) * (kf + a + b) / (s * s * (s + 1.0) * (s - 1.0))).sqrt();
    }
    let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if i + 1 == j {
            off[i]
        } else if j + 1 == i {
            off[j]
        } else {
            0.0
        }
    });
    let mu0 = 2f64.powf(a + b + 1.0) * libm::tgamma(a + 1.0) * libm::tgamma(b + 1.0) / libm::tgamma(a + b + 2.0);
    let eig = nalgebra::SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    Rule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
}

/// `∫_0^t (t - s)^(α-1) g(s) ds` for `g` with algebraic behaviour in `s^α`
/// at `s = 0` and smooth at `s = t`.
///
/// The interval is split at `t/2`. The left half uses the graded map
/// `s = (t/2) v^q`; on the right half the weight `(t - s)^(α-1)` is
/// integrated exactly by a Gauss-Jacobi rule. Each half gets `nodes / 2`
/// points.
pub fn riemann_liouville<F: FnMut(f64) -> f64>(t: f64, alpha: f64, nodes: usize, mut g: F) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let half = (nodes / 2).max(1);
    let h = 0.5 * t;
    let q = GRADE as f64;
    let mut left = 0.0;
    for (v, w) in gauss_legendre_on(0.0, 1.0, half).iter() {
        let s = h * v.powi(GRADE);
        left += w * q * v.powi(GRADE - 1) * (t - s).powf(alpha - 1.0) * g(s);
    }
    // s = t - (h/2)(1 - x), so (t - s)^(α-1) ds = (h/2)^α (1 - x)^(α-1) dx
    let mut right = 0.0;
    for (x, w) in gauss_jacobi(half, alpha - 1.0, 0.0).iter() {
        right += w * g(t - 0.5 * h * (1.0 - x));
    }
    h * left + (0.5 * h).powf(alpha) * right
}

/// Tanh-sinh (double exponential) quadrature on `[a, b]`. Abscissae near an
/// endpoint are formed as endpoint plus distance, so singular behaviour at
/// `a = 0` is sampled without cancellation. Returns the estimate and the
/// difference between the last two refinement levels.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(a: f64, b: f64, abs_tol: f64, max_level: u32, mut f: F) -> (f64, f64) {
    let half = 0.5 * (b - a);
    // |u| beyond this makes the weights underflow relative to the result
    const U_MAX: f64 = 4.5;
    let mut eval = |u: f64| -> f64 {
        let s = 0.5 * PI * u.sinh();
        let c = 0.5 * PI * u.cosh();
        // distance from the nearer endpoint, computed without cancellation
        let e = (-2.0 * s.abs()).exp();
        let dist = 2.0 * half * e / (1.0 + e);
        let cosh_s = s.cosh();
        let w = half * c / (cosh_s * cosh_s);
        if w == 0.0 || dist == 0.0 {
            return 0.0;
        }
        let x = if s < 0.0 { a + dist } else { b - dist };
        if x <= a || x >= b {
            return 0.0;
        }
        w * f(x)
    };

    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= U_MAX {
        let u = k as f64 * h;
        sum += eval(u) + eval(-u);
        k += 1;
    }
    let mut estimate = h * sum;
    let mut diff = f64::INFINITY;
    for level in 1..=max_level {
        h *= 0.5;
        let mut k = 1;
        while (k as f64) * h <= U_MAX {
            let u = k as f64 * h;
            sum += eval(u) + eval(-u);
            k += 2;
        }
        let next = h * sum;
        diff = (next - estimate).abs();
        estimate = next;
        if level >= 3 && diff <= abs_tol {
            break;
        }
    }
    (estimate, diff)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 8, 17, 64] {
            let rule = gauss_legendre(n);
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 2.0).abs() < 1e-14, "n={n}");
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            let got = rule.integrate(|x| x.powi(deg as i32));
            assert!((got - exact).abs() < 1e-13, "n={n}: {got}");
            let even = 2 * n - 2;
            let got = rule.integrate(|x| x.powi(even as i32));
            assert!((got - 2.0 / (even as f64 + 1.0)).abs() < 1e-13);
        }
    }

    #[test]
    fn composite_rounds_to_panels() {
        let rule = composite_gauss_legendre(0.0, 2.0, 20);
        assert_eq!(rule.len(), 24);
        assert!((rule.integrate(|x| x.exp()) - (2f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn graded_rule_handles_algebraic_endpoint() {
        let alpha = 1.37;
        let exact = 1.0 / (alpha + 1.0);
        let got = graded_composite(0.0, 1.0, 32).integrate(|x| x.powf(alpha));
        assert!((got - exact).abs() < 1e-14, "{got} vs {exact}");
    }

    #[test]
    fn two_sided_rule_is_symmetric() {
        let rule = two_sided_graded(0.0, 1.0, 12);
        for i in 0..rule.len() {
            let j = rule.len() - 1 - i;
            assert!((rule.nodes[i] - (1.0 - rule.nodes[j])).abs() < 1e-15);
            assert!((rule.weights[i] - rule.weights[j]).abs() < 1e-15);
        }
        let got = rule.integrate(|x| x.powf(1.5) + (1.0 - x).powf(1.25));
        let err = (got - (1.0 / 2.5 + 1.0 / 2.25)).abs();
        assert!(err < 1e-12, "{err:e}");
    }

    #[test]
    fn riemann_liouville_of_power() {
        // ∫_0^t (t-s)^(α-1) s^β ds = t^(α+β) Γ(α)Γ(β+1)/Γ(α+β+1)
        for &(alpha, beta, t) in &[(1.5f64, 1.5f64, 1.0f64), (1.25, 2.5, 2.0), (1.75, 0.0, 0.7)] {
            let exact = t.powf(alpha + beta) * libm::tgamma(alpha) * libm::tgamma(beta + 1.0)
                / libm::tgamma(alpha + beta + 1.0);
            let got = riemann_liouville(t, alpha, 32, |s| s.powf(beta));
            assert!((got - exact).abs() < 1e-12 * exact.abs().max(1.0), "{alpha} {beta}: {got} vs {exact}");
        }
    }

    #[test]
    fn gauss_jacobi_moments() {
        // ∫_{-1}^{1} (1-x)^a x^k dx for small k, against Beta-function values
        let a = 0.5;
        let rule = gauss_jacobi(6, a, 0.0);
        let m0 = 2f64.powf(a + 1.0) / (a + 1.0);
        assert!((rule.weights.iter().sum::<f64>() - m0).abs() < 1e-14);
        // ∫ (1-x)^a (1-x) dx = 2^(a+2)/(a+2)
        let got = rule.integrate(|x| 1.0 - x);
        assert!((got - 2f64.powf(a + 2.0) / (a + 2.0)).abs() < 1e-14);
        let got = rule.integrate(|x| (1.0 - x).powi(9));
        assert!((got - 2f64.powf(a + 10.0) / (a + 10.0)).abs() < 1e-10);
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        let (v, err) = tanh_sinh(0.0, 1.0, 1e-15, 10, |x| x.powf(-0.5));
        assert!((v - 2.0).abs() < 1e-12, "{v} err {err}");
        let (v, _) = tanh_sinh(0.0, 1.0, 1e-15, 10, |x| x.powf(-0.4) * (1.0 - x).powf(0.3));
        // B(0.6, 1.3)
        let exact = libm::tgamma(1.3) * libm::tgamma(0.6) / libm::tgamma(1.9);
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
        let (v, _) = tanh_sinh(-1.0, 1.0, 1e-15, 10, |x| 1.0 / (1.0 + 25.0 * x * x));
        assert!((v - 0.4 * 5f64.atan()).abs() < 1e-13, "{v}");
    }
}
