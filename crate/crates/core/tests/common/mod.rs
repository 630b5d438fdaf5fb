//! Test-only helpers shared by the integration suites.
#![allow(dead_code)]

use rug::{ops::Pow, Float};

const PREC: u32 = 320;

/// Working precision: the largest series term is about `exp(|z|^(1/α))`, so
/// that many extra bits are lost to cancellation.
fn precision(alpha: f64, z: f64) -> u32 {
    let peak_bits = z.abs().powf(1.0 / alpha) * std::f64::consts::LOG2_E;
    PREC + peak_bits.ceil() as u32
}

/// `E_{α,β}(z)` by direct summation of the power series in multiprecision
/// arithmetic, stopping once terms drop below `1e-40`.
pub fn ml_oracle(alpha: f64, beta: f64, z: f64) -> f64 {
    let prec = precision(alpha, z);
    let a = Float::with_val(prec, alpha);
    let b = Float::with_val(prec, beta);
    let zf = Float::with_val(prec, z);
    let tiny = Float::with_val(prec, 1e-40);
    let mut sum = Float::with_val(prec, 0);
    let mut power = Float::with_val(prec, 1);
    let mut k = 0u32;
    loop {
        let arg = Float::with_val(prec, &a * k) + &b;
        let term = Float::with_val(prec, &power / arg.gamma());
        sum += &term;
        // the terms grow until k α ≈ |z|^(1/α); only stop after the peak
        let past_peak = (alpha * k as f64) > z.abs().powf(1.0 / alpha) + 10.0;
        if past_peak && term.clone().abs() < tiny {
            break;
        }
        power *= &zf;
        k += 1;
        assert!(k < 200_000, "oracle did not converge");
    }
    sum.to_f64()
}

/// `E_{α,1}(μ t^α)` by the oracle.
pub fn kernel_oracle(alpha: f64, mu: f64, t: f64) -> f64 {
    let z = Float::with_val(PREC, t).pow(Float::with_val(PREC, alpha)) * Float::with_val(PREC, mu);
    ml_oracle(alpha, 1.0, z.to_f64())
}
