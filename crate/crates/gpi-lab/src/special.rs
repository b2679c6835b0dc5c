//! Gamma function via a 15-term Lanczos approximation (g = 607/128).
//!
//! Relative accuracy is better than 2e-15 on (0, 10], which covers every use
//! in this crate: the integral representation needs Gamma(nu) and
//! Gamma(nu + 1/2) with nu in (0, 1/2), and Beta values derived from them.

use std::sync::atomic::{AtomicU64, Ordering};

const LANCZOS_G: f64 = 607.0 / 128.0;

const LANCZOS_COEF: [f64; 15] = [
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
];

// Fault-injection hook for the selftest: gamma() is scaled by this factor.
// Stored as f64 bits; 1.0 in normal operation.
static GAMMA_FAULT_SCALE: AtomicU64 = AtomicU64::new(0x3FF0_0000_0000_0000); // 1.0f64

/// Scale every subsequent `gamma` result by `scale`. Selftest-only hook used
/// to confirm that the fast acceptance subset actually detects a corrupted
/// special-function implementation.
#[doc(hidden)]
pub fn set_gamma_fault_scale(scale: f64) {
    GAMMA_FAULT_SCALE.store(scale.to_bits(), Ordering::Relaxed);
}

/// Gamma function for real arguments (poles at 0, -1, -2, ... return NaN).
pub fn gamma(x: f64) -> f64 {
    let fault = f64::from_bits(GAMMA_FAULT_SCALE.load(Ordering::Relaxed));
    fault * gamma_inner(x)
}

fn gamma_inner(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        let s = (std::f64::consts::PI * x).sin();
        if s == 0.0 {
            return f64::NAN;
        }
        return std::f64::consts::PI / (s * gamma_inner(1.0 - x));
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let w = z + LANCZOS_G + 0.5;
    (2.0 * std::f64::consts::PI).sqrt() * w.powf(z + 0.5) * (-w).exp() * acc
}

/// Natural log of the Beta function `B(a, b)` for positive arguments.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    (gamma(a) * gamma(b) / gamma(a + b)).ln()
}
