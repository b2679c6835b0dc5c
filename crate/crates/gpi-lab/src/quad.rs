//! Adaptive Gauss-Kronrod (7-15) quadrature and the transformed-axis
//! integrator for integrals of the form
//!
//! ```text
//!     int_0^inf F(s) s^(nu - 1) ds,    nu in (0, 1/2),
//! ```
//!
//! where `F` is bounded with `F(s) ~ c s^(-1/2)` as `s -> inf`. Both
//! endpoints are singular after mapping to a bounded interval, so the axis is
//! split and re-substituted piecewise:
//!
//! - `s = t/(1-t)` maps to `t in (0,1)`;
//! - on the left half the endpoint weight `t^(nu-1)` is absorbed by
//!   `u = t^nu`;
//! - on the right half the decay `(1-t)^(nu-1/2-1)` is absorbed by
//!   `w = (1-t)^(1/2-nu)`;
//! - the far tail beyond `s ~ 1e280` (which f64 cannot reach through the
//!   map for nu near 1/2) is added analytically from the `c s^(-1/2)`
//!   asymptote.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::MomentError;

/// Shared evaluation budget threaded through nested quadratures and samplers.
#[derive(Debug)]
pub struct EvalBudget {
    used: u64,
    cap: u64,
}

impl EvalBudget {
    pub fn new(cap: u64) -> Self {
        EvalBudget { used: 0, cap }
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn charge(&mut self, n: u64) -> Result<(), MomentError> {
        self.used = self.used.saturating_add(n);
        if self.used > self.cap {
            Err(MomentError::BudgetExceeded { used: self.used, budget: self.cap })
        } else {
            Ok(())
        }
    }
}

/// Value and error bound from a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOutcome {
    pub value: f64,
    pub error: f64,
}

// 15-point Kronrod abscissae (positive half) and weights, with the embedded
// 7-point Gauss weights. Standard double-precision values.
const XGK: [f64; 8] = [
    0.9914553711208126,
    0.9491079123427585,
    0.8648644233597691,
    0.7415311855993944,
    0.5860872354676911,
    0.4058451513773972,
    0.2077849550078985,
    0.0,
];
const WGK: [f64; 8] = [
    0.02293532201052922,
    0.06309209262997855,
    0.1047900103222502,
    0.1406532597155259,
    0.1690047266392679,
    0.1903505780647854,
    0.2044329400752989,
    0.2094821410847278,
];
const WG: [f64; 4] = [
    0.1294849661688697,
    0.2797053914892767,
    0.3818300505051189,
    0.4179591836734694,
];

const MAX_PANELS: usize = 4000;

struct Panel {
    err: f64,
    a: f64,
    b: f64,
    value: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<Panel, MomentError>
where
    F: FnMut(f64) -> Result<f64, MomentError>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    let mut fv = [0.0f64; 15];
    fv[7] = fc;
    for i in 0..7 {
        let dx = half * XGK[i];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        fv[i] = f1;
        fv[14 - i] = f2;
        resk += WGK[i] * (f1 + f2);
        if i % 2 == 1 {
            resg += WG[i / 2] * (f1 + f2);
        }
    }
    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for i in 0..7 {
        resasc += WGK[i] * ((fv[i] - reskh).abs() + (fv[14 - i] - reskh).abs());
    }
    resasc *= half.abs();
    let value = resk * half;
    let raw = ((resk - resg) * half).abs();
    let err = if resasc != 0.0 && raw != 0.0 {
        resasc * (1.0f64).min((200.0 * raw / resasc).powf(1.5))
    } else {
        raw
    };
    Ok(Panel { err, a, b, value })
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]` to an
/// absolute tolerance. The integrand may fail (errors propagate) and is
/// expected to charge any evaluation budget itself.
pub fn adaptive_gk15<F>(
    f: &mut F,
    a: f64,
    b: f64,
    abs_tol: f64,
    ) -> Result<QuadOutcome, MomentError>
where
    F: FnMut(f64) -> Result<f64, MomentError>,
{
    if a == b {
        return Ok(QuadOutcome { value: 0.0, error: 0.0 });
    }
    let span = (b - a).abs();
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Panel> = Vec::new();
    let first = gk15(f, a, b)?;
    let mut total_err = first.err;
    heap.push(first);
    let mut n_panels = 1usize;
    while total_err > abs_tol && n_panels < MAX_PANELS {
        let worst = match heap.pop() {
            Some(p) => p,
            None => break,
        };
        let width = (worst.b - worst.a).abs();
        if width <= 1e-15 * span || worst.err <= abs_tol * 1e-3 {
            // Cannot usefully refine further.
            frozen.push(worst);
            continue;
        }
        let mid = 0.5 * (worst.a + worst.b);
        let left = gk15(f, worst.a, mid)?;
        let right = gk15(f, mid, worst.b)?;
        total_err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
        n_panels += 1;
    }
    let mut value = 0.0;
    let mut error = 0.0;
    for p in frozen.iter().chain(heap.iter()) {
        value += p.value;
        error += p.err;
    }
    Ok(QuadOutcome { value, error })
}

/// Non-adaptive GK15 over `[a, b]` split into `panels` equal panels. Used
/// for integrands with Monte Carlo noise, where adaptive refinement chases
/// the noise floor instead of converging.
fn fixed_gk15<F>(f: &mut F, a: f64, b: f64, panels: usize) -> Result<QuadOutcome, MomentError>
where
    F: FnMut(f64) -> Result<f64, MomentError>,
{
    let mut value = 0.0;
    let mut error = 0.0;
    let step = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + step * p as f64;
        let hi = if p + 1 == panels { b } else { a + step * (p + 1) as f64 };
        let panel = gk15(f, lo, hi)?;
        value += panel.value;
        error += panel.err;
    }
    Ok(QuadOutcome { value, error })
}

/// Largest `s` reachable through the right-half substitution before f64
/// underflow; the remaining tail is patched analytically.
const S_TAIL_CUT: f64 = 1e280;

/// Integrate `F(s) s^(nu-1)` over `(0, inf)` for `nu in (0, 1/2)` and bounded
/// `F` with `F(s) sqrt(s)` convergent as `s -> inf`.
///
/// `fixed_panels = Some(p)` replaces adaptive refinement with `p` equal GK15
/// panels per transformed piece (for noisy integrands); `None` adapts to
/// `abs_tol`.
pub fn integrate_power_weighted_axis<F>(
    nu: f64,
    f: &mut F,
    abs_tol: f64,
) -> Result<QuadOutcome, MomentError>
where
    F: FnMut(f64) -> Result<f64, MomentError>,
{
    integrate_power_weighted_axis_impl(nu, f, abs_tol, None)
}

pub fn integrate_power_weighted_axis_fixed<F>(
    nu: f64,
    f: &mut F,
    panels_per_piece: usize,
) -> Result<QuadOutcome, MomentError>
where
    F: FnMut(f64) -> Result<f64, MomentError>,
{
    integrate_power_weighted_axis_impl(nu, f, 1e-8, Some(panels_per_piece.max(1)))
}

fn integrate_power_weighted_axis_impl<F>(
    nu: f64,
    f: &mut F,
    abs_tol: f64,
    fixed_panels: Option<usize>,
) -> Result<QuadOutcome, MomentError>
where
    F: FnMut(f64) -> Result<f64, MomentError>,
{
    if !(nu > 0.0 && nu < 0.5) {
        return Err(MomentError::InvalidSpec {
            reason: format!("axis exponent nu = {nu} outside (0, 1/2)"),
        });
    }
    let kappa = 0.5 - nu;

    // Left piece: s in (0, 1], i.e. t in (0, 1/2], substituted u = t^nu.
    // Integrand becomes F(s) (1-t)^(-1-nu) / nu, bounded at u = 0.
    let u_hi = 0.5f64.powf(nu);
    let mut left_f = |u: f64| -> Result<f64, MomentError> {
        if u <= 0.0 {
            return Ok(f(0.0)? / nu);
        }
        let t = u.powf(1.0 / nu).min(0.5);
        let s = t / (1.0 - t);
        let jac = (-(1.0 + nu) * (-t).ln_1p()).exp() / nu;
        Ok(f(s)? * jac)
    };
    let left = match fixed_panels {
        Some(p) => fixed_gk15(&mut left_f, 0.0, u_hi, p)?,
        None => adaptive_gk15(&mut left_f, 0.0, u_hi, 0.5 * abs_tol)?,
    };

    // Right piece: s in [1, S_TAIL_CUT], i.e. y = 1 - t in (y_min, 1/2],
    // substituted w = y^kappa. Integrand is F(s) t^(nu-1) w^(-nu/kappa - 1)
    // / kappa, bounded as w -> 0 thanks to the s^(-1/2) decay of F.
    let y_min = 1.0 / (1.0 + S_TAIL_CUT);
    let w_lo = y_min.powf(kappa);
    let w_hi = 0.5f64.powf(kappa);
    let w_exponent = -nu / kappa - 1.0;
    let mut right_f = |w: f64| -> Result<f64, MomentError> {
        let y = w.powf(1.0 / kappa).clamp(y_min, 0.5);
        let s = (1.0 - y) / y;
        let t_pow = ((nu - 1.0) * (-y).ln_1p()).exp();
        let jac = t_pow * (w_exponent * w.ln()).exp() / kappa;
        Ok(f(s)? * jac)
    };
    let right = match fixed_panels {
        Some(p) => fixed_gk15(&mut right_f, w_lo, w_hi, p)?,
        None => adaptive_gk15(&mut right_f, w_lo, w_hi, 0.5 * abs_tol)?,
    };

    // Analytic tail patch for s > S_TAIL_CUT using F(s) ~ c s^(-1/2):
    // int_S^inf c s^(nu - 3/2) ds = c S^(nu - 1/2) / kappa with
    // c = F(S) sqrt(S), i.e. patch = F(S) S^nu / kappa.
    let f_probe = f(S_TAIL_CUT)?;
    let patch = f_probe * S_TAIL_CUT.powf(nu) / kappa;
    let patch_err = patch.abs() * 1e-6;

    Ok(QuadOutcome {
        value: left.value + right.value + patch,
        error: left.error + right.error + patch_err,
    })
}
