//! Mixed-sign absolute moments of centered Gaussian vectors.
//!
//! Computes `E[prod_{j in J} |X_j|^(-2 nu_j) * prod_{i in Jc} |X_i|^(2 nu_i)]`
//! for `X ~ N_d(0, Sigma)` by four routes:
//!
//! 1. closed form for univariate factors,
//! 2. Wick pairing sums for integer exponents,
//! 3. direct Monte Carlo,
//! 4. the completely monotone integral representation
//!    `|x|^(-2 nu) = Gamma(nu)^(-1) int_0^inf e^(-s x^2) s^(nu-1) ds`,
//!    which converts the negative factors into an integral over `s`-space of
//!    a Gaussian Laplace factor times a positive-exponent moment under the
//!    renormalized covariance `(Sigma^(-1) + T_s)^(-1)`.
//!
//! Route 4 is deterministic (quadrature) for up to three negative axes and
//! switches to importance sampling beyond that. Direct Monte Carlo of the
//! negative factors has infinite variance once any `nu_j >= 1/4`, so the
//! default selector routes anything with `max nu_j >= 0.2` through route 4.

use std::collections::{BTreeMap, HashMap};

use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::MomentError;
use crate::linalg::{BlockView, CovMatrix, IndexPartition, Matrix};
use crate::quad::{integrate_power_weighted_axis, integrate_power_weighted_axis_fixed, EvalBudget, QuadOutcome};
use crate::rng::{self, domain, stream_rng, ZPanel};
use crate::special::gamma;

/// Default guard distance below the integrability boundary `nu = 1/2`.
pub const DEFAULT_DELTA_MIN: f64 = 0.01;

/// Total-degree bound for Wick pairing enumeration.
pub const WICK_MAX_DEGREE: usize = 24;

/// Selector threshold: specs with `max nu_j` at or above this go through the
/// integral representation instead of direct Monte Carlo.
pub const MC_ROUTE_NU_CAP: f64 = 0.2;

/// Minimum sample count for direct Monte Carlo.
pub const MC_MIN_SAMPLES: u64 = 1000;

/// Common-random-number panel rows and fixed panels per transformed piece
/// for Monte Carlo inner moments, scaled down with the number of nested
/// axes so the total node count stays within budget.
pub(crate) fn mc_inner_plan(k: usize) -> (usize, usize) {
    match k {
        0 | 1 => (2048, 12),
        2 => (512, 6),
        _ => (64, 2),
    }
}

/// Inner draws per importance-sampling node when the inner moment needs MC.
const IMPORTANCE_INNER_DRAWS: usize = 32;

/// Largest `s` value passed to the linear algebra; beyond this the integrand
/// is indistinguishable from its asymptote at f64 precision.
const S_CLAMP: f64 = 1e280;

/// Exponent specification: an index partition plus per-index exponent
/// magnitudes. Indices in `J` contribute `|X_j|^(-2 nu_j)` and indices in the
/// complement contribute `|X_i|^(+2 nu_i)`.
///
/// Construction moves complement indices with `nu = 0` into `J` (their factor
/// is identically 1) and enforces `nu_j <= 1/2 - delta_min` on `J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentSpec {
    part: IndexPartition,
    nu: Vec<f64>,
    delta_min: f64,
}

impl ExponentSpec {
    pub fn new(part: IndexPartition, nu: Vec<f64>) -> Result<Self, MomentError> {
        Self::with_delta_min(part, nu, DEFAULT_DELTA_MIN)
    }

    /// Construct with an explicit guard distance. Lowering `delta_min` below
    /// the default admits near-divergent exponents; estimates built from such
    /// specs carry a `near_divergence` diagnostic.
    pub fn with_delta_min(
        part: IndexPartition,
        nu: Vec<f64>,
        delta_min: f64,
    ) -> Result<Self, MomentError> {
        let d = part.dim();
        if nu.len() != d {
            return Err(MomentError::InvalidSpec {
                reason: format!("nu has {} entries for dimension {}", nu.len(), d),
            });
        }
        if !(delta_min > 0.0 && delta_min < 0.5) {
            return Err(MomentError::InvalidSpec {
                reason: format!("delta_min = {delta_min} outside (0, 1/2)"),
            });
        }
        if nu.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MomentError::InvalidSpec {
                reason: "exponent magnitudes must be finite and >= 0".into(),
            });
        }
        for &j in part.j() {
            if nu[j] > 0.5 - delta_min {
                return Err(MomentError::InvalidSpec {
                    reason: format!(
                        "nu_j = {} at index {} exceeds guard 1/2 - {delta_min}",
                        nu[j], j
                    ),
                });
            }
        }
        // Complement indices with nu = 0 contribute a constant factor 1;
        // fold them into J so the complement carries strictly positive
        // exponents.
        let mut j: Vec<usize> = part.j().to_vec();
        for &i in part.jc() {
            if nu[i] == 0.0 {
                j.push(i);
            }
        }
        let part = if j.is_empty() {
            IndexPartition::positive_only(d)
        } else {
            j.sort_unstable();
            IndexPartition::new(d, &j).map_err(MomentError::Linalg)?
        };
        Ok(ExponentSpec { part, nu, delta_min })
    }

    /// All exponents positive (empty `J`).
    pub fn positive_only(d: usize, nu: Vec<f64>) -> Result<Self, MomentError> {
        Self::new(IndexPartition::positive_only(d), nu)
    }

    pub fn dim(&self) -> usize {
        self.part.dim()
    }

    pub fn part(&self) -> &IndexPartition {
        &self.part
    }

    pub fn nu(&self, index: usize) -> f64 {
        self.nu[index]
    }

    pub fn nu_all(&self) -> &[f64] {
        &self.nu
    }

    pub fn delta_min(&self) -> f64 {
        self.delta_min
    }

    /// Indices of `J` with strictly positive exponent (the active negative
    /// axes of the integral representation).
    pub fn active_j(&self) -> Vec<(usize, f64)> {
        self.part.j().iter().filter(|&&j| self.nu[j] > 0.0).map(|&j| (j, self.nu[j])).collect()
    }

    /// Complement indices with their (strictly positive) exponents.
    pub fn jc_pairs(&self) -> Vec<(usize, f64)> {
        self.part.jc().iter().map(|&i| (i, self.nu[i])).collect()
    }

    pub fn max_nu_j(&self) -> f64 {
        self.part.j().iter().map(|&j| self.nu[j]).fold(0.0, f64::max)
    }

    pub fn sum_nu_jc(&self) -> f64 {
        self.part.jc().iter().map(|&i| self.nu[i]).sum()
    }

    pub fn all_jc_integer(&self) -> bool {
        self.part.jc().iter().all(|&i| is_positive_integer(self.nu[i]))
    }

    /// True when a `J` exponent sits above the default guard: the moment is
    /// close to its divergence boundary and estimates are fragile.
    pub fn near_divergence(&self) -> bool {
        self.max_nu_j() > 0.5 - DEFAULT_DELTA_MIN
    }
}

fn is_positive_integer(v: f64) -> bool {
    v >= 1.0 && (v - v.round()).abs() < 1e-12
}

/// How a moment estimate was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    ClosedForm,
    Wick,
    McDirect,
    SQuadrature,
    SImportance,
}

/// Nature of the reported error figure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Closed form; error is zero.
    Exact,
    /// Deterministic quadrature bound.
    Bound,
    /// Monte Carlo standard error.
    Stochastic,
}

/// A moment value with its uncertainty and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    /// Standard error for stochastic methods, quadrature error bound for the
    /// deterministic representation, 0 for exact methods.
    pub std_error: f64,
    pub n_samples: u64,
    pub method: MomentMethod,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, String>,
}

impl MomentEstimate {
    pub fn exact(value: f64, method: MomentMethod) -> Self {
        MomentEstimate {
            value,
            std_error: 0.0,
            n_samples: 0,
            method,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn error_kind(&self) -> ErrorKind {
        match self.method {
            MomentMethod::ClosedForm | MomentMethod::Wick => {
                if self.std_error == 0.0 {
                    ErrorKind::Exact
                } else {
                    ErrorKind::Bound
                }
            }
            MomentMethod::SQuadrature => {
                if self.diagnostics.get("inner").map(String::as_str) == Some("mc") {
                    ErrorKind::Stochastic
                } else {
                    ErrorKind::Bound
                }
            }
            MomentMethod::McDirect | MomentMethod::SImportance => ErrorKind::Stochastic,
        }
    }

    fn flag(&mut self, key: &str) {
        self.diagnostics.insert(key.to_string(), "true".to_string());
    }
}

/// Exact `E[|X|^(2 nu)]` for `X ~ N(0, variance)`:
/// `Gamma(nu + 1/2) / sqrt(pi) * (2 variance)^nu`. Valid for `nu > -1/2`.
pub fn univariate_abs_moment(variance: f64, nu: f64) -> Result<f64, MomentError> {
    if !(variance > 0.0) {
        return Err(MomentError::Domain {
            message: format!("variance must be positive, got {variance}"),
        });
    }
    if !(nu > -0.5) {
        return Err(MomentError::Domain {
            message: format!("moment diverges for nu = {nu} <= -1/2"),
        });
    }
    Ok(gamma(nu + 0.5) / std::f64::consts::PI.sqrt() * (2.0 * variance).powf(nu))
}

/// Exact `E[prod_i X_i^(p_i)]` by the Wick/Isserlis pairing sum, evaluated
/// with the standard covariance recursion (the pairing sum grouped by the
/// partner of the first remaining factor) and memoized on the power vector.
/// Odd total degree returns 0.
pub fn wick_moment(sigma: &CovMatrix, powers: &[usize]) -> Result<f64, MomentError> {
    if powers.len() != sigma.dim() {
        return Err(MomentError::InvalidSpec {
            reason: format!("{} powers for dimension {}", powers.len(), sigma.dim()),
        });
    }
    wick_moment_matrix(sigma.matrix(), powers)
}

pub(crate) fn wick_moment_matrix(m: &Matrix, powers: &[usize]) -> Result<f64, MomentError> {
    let degree: usize = powers.iter().sum();
    if degree > WICK_MAX_DEGREE {
        return Err(MomentError::DegreeTooLarge { degree, max: WICK_MAX_DEGREE });
    }
    if degree % 2 == 1 {
        return Ok(0.0);
    }
    let mut memo: HashMap<Vec<u8>, f64> = HashMap::new();
    let state: Vec<u8> = powers.iter().map(|&p| p as u8).collect();
    Ok(wick_rec(m, state, &mut memo))
}

fn wick_rec(m: &Matrix, state: Vec<u8>, memo: &mut HashMap<Vec<u8>, f64>) -> f64 {
    let a = match state.iter().position(|&p| p > 0) {
        Some(a) => a,
        None => return 1.0,
    };
    if let Some(&v) = memo.get(&state) {
        return v;
    }
    // E[X_a g(X)] = sum_b sigma_ab E[d g / d x_b] with g the remaining powers.
    let mut q = state.clone();
    q[a] -= 1;
    let mut total = 0.0;
    for b in 0..q.len() {
        if q[b] == 0 {
            continue;
        }
        let mult = q[b] as f64;
        let mut next = q.clone();
        next[b] -= 1;
        total += m.get(a, b) * mult * wick_rec(m, next, memo);
    }
    memo.insert(state, total);
    total
}

fn signed_exponents(spec: &ExponentSpec) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for &(j, nu) in &spec.active_j() {
        out.push((j, -2.0 * nu));
    }
    for &(i, nu) in &spec.jc_pairs() {
        out.push((i, 2.0 * nu));
    }
    out
}

#[inline]
fn abs_pow(x: f64, exponent: f64) -> f64 {
    if exponent == 2.0 {
        x * x
    } else {
        x.abs().powf(exponent)
    }
}

/// Direct Monte Carlo estimate of the mixed moment: sample mean of the
/// product over `n` draws `x = chol(Sigma) z`. Deterministic per seed and
/// independent of worker count.
pub fn mc_mixed_moment(
    sigma: &CovMatrix,
    spec: &ExponentSpec,
    n: u64,
    seed: u64,
) -> Result<MomentEstimate, MomentError> {
    if spec.dim() != sigma.dim() {
        return Err(MomentError::InvalidSpec {
            reason: format!("spec dimension {} != sigma dimension {}", spec.dim(), sigma.dim()),
        });
    }
    if n < MC_MIN_SAMPLES {
        return Err(MomentError::InvalidSpec {
            reason: format!("n = {n} below minimum {MC_MIN_SAMPLES}"),
        });
    }
    let d = sigma.dim();
    let chol = sigma.chol().clone();
    let exponents = signed_exponents(spec);
    let (mean, se) = rng::batched_normal_mc(seed, domain::MC_MIXED, n, d, move |z| {
        let mut weight = 1.0;
        for &(idx, expo) in &exponents {
            let mut x = 0.0;
            for k in 0..=idx {
                x += chol.get(idx, k) * z[k];
            }
            weight *= abs_pow(x, expo);
        }
        weight
    });
    let mut est = MomentEstimate {
        value: mean,
        std_error: se,
        n_samples: n,
        method: MomentMethod::McDirect,
        diagnostics: BTreeMap::new(),
    };
    if spec.max_nu_j() >= 0.25 {
        // Second moment of the negative factor needs 2 nu_j < 1/2 per axis.
        est.flag("infinite_variance_risk");
    }
    if spec.near_divergence() {
        est.flag("near_divergence");
    }
    if !est.std_error.is_finite() {
        est.flag("nonfinite_std_error");
        est.std_error = f64::MAX;
    }
    Ok(est)
}

/// Shared per-instance state for the integral representation: the partition
/// blocks of `Sigma` with the `s`-independent factors precomputed. Also used
/// by the bound checkers, which integrate convex-function expectations
/// against the same s-space weight.
pub(crate) struct SRepContext {
    /// J x J block in local (sorted J) order.
    a: Matrix,
    /// `a^{-1}`.
    a_inv: Matrix,
    /// `a^{-1} B` where `B` is the J x rest block.
    ainv_b: Matrix,
    /// Schur complement `C - B^T a^{-1} B` (rest x rest).
    schur: Matrix,
    /// Original indices of the rest block in local order.
    rest: Vec<usize>,
}

impl SRepContext {
    pub(crate) fn build(sigma: &CovMatrix, active_j: &[usize]) -> Result<Self, MomentError> {
        let d = sigma.dim();
        let part = IndexPartition::new(d, active_j).map_err(MomentError::Linalg)?;
        let blocks = BlockView::split(sigma.matrix(), &part);
        let la = blocks.a.cholesky().map_err(MomentError::Linalg)?;
        let a_inv = Matrix::chol_solve(&la, &Matrix::identity(blocks.a.rows())).symmetrized();
        let ainv_b = Matrix::chol_solve(&la, &blocks.b);
        let schur = blocks.c.sub(&blocks.b.transpose().matmul(&ainv_b)).symmetrized();
        let rest = part.jc().to_vec();
        Ok(SRepContext { a: blocks.a, a_inv, ainv_b, schur, rest })
    }

    /// Local positions of the given original indices within the rest block.
    pub(crate) fn rest_positions(&self, indices: &[usize]) -> Result<Vec<usize>, MomentError> {
        indices
            .iter()
            .map(|idx| {
                self.rest.iter().position(|r| r == idx).ok_or_else(|| MomentError::InvalidSpec {
                    reason: "target index not in complement".into(),
                })
            })
            .collect()
    }

    /// `E[exp(-X^T T_s X / 2)] = det(I + S^{1/2} A S^{1/2})^{-1/2}` via the
    /// k x k Cholesky log-determinant; stable for any `s >= 0`.
    fn laplace_factor(&self, s: &[f64]) -> Result<f64, MomentError> {
        let active: Vec<(usize, f64)> = s
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        if active.is_empty() {
            return Ok(1.0);
        }
        let k = active.len();
        let w = Matrix::from_fn(k, k, |r, c| {
            let (ir, sr) = active[r];
            let (ic, sc) = active[c];
            let base = if r == c { 1.0 } else { 0.0 };
            // sqrt factors separately: sr * sc overflows for s beyond 1e154
            base + 2.0 * sr.sqrt() * sc.sqrt() * self.a.get(ir, ic)
        });
        let lw = w
            .cholesky_raw()
            .map_err(|_| MomentError::Linalg(crate::error::LinalgError::SingularBlock {
                context: "Laplace factor determinant",
            }))?;
        let log_det: f64 = (0..k).map(|i| lw.get(i, i).ln()).sum::<f64>() * 2.0;
        Ok((-0.5 * log_det).exp())
    }

    /// Covariance of the rest block of `Y^(s)`:
    /// `schur + (a^{-1}B)^T (a^{-1} + S)^{-1} (a^{-1}B)`.
    fn rest_cov(&self, s: &[f64]) -> Result<Matrix, MomentError> {
        let k = self.a.rows();
        let mut g = self.a_inv.clone();
        for (i, &si) in s.iter().enumerate() {
            g.set(i, i, g.get(i, i) + 2.0 * si);
        }
        let lg = g
            .cholesky_raw()
            .map_err(|_| MomentError::Linalg(crate::error::LinalgError::SingularBlock {
                context: "renormalized covariance (A^-1 + S)",
            }))?;
        debug_assert_eq!(k, lg.rows());
        let t = Matrix::chol_solve(&lg, &self.ainv_b);
        Ok(self.schur.add(&self.ainv_b.transpose().matmul(&t)).symmetrized())
    }
}

/// Which method evaluates the positive-exponent inner moment of the
/// renormalized Gaussian inside the integral representation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    /// Pick automatically: trivial/closed form/Wick when available, else MC.
    Auto,
    /// Exact Wick sum; requires every complement exponent to be a positive
    /// integer.
    ExactWick,
    /// Common-random-number Monte Carlo panel.
    Mc,
    /// Product of univariate closed forms; requires at most one target or a
    /// diagonal complement block.
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ResolvedInner {
    Trivial,
    ClosedForm,
    Wick,
    Mc,
}

fn resolve_inner(
    inner: InnerMethod,
    targets: &[(usize, f64)],
) -> Result<ResolvedInner, MomentError> {
    if targets.is_empty() {
        return Ok(ResolvedInner::Trivial);
    }
    let all_integer = targets.iter().all(|&(_, nu)| is_positive_integer(nu));
    let degree: f64 = targets.iter().map(|&(_, nu)| 2.0 * nu).sum();
    match inner {
        InnerMethod::Auto => {
            if targets.len() <= 1 {
                Ok(ResolvedInner::ClosedForm)
            } else if all_integer && degree <= WICK_MAX_DEGREE as f64 {
                Ok(ResolvedInner::Wick)
            } else {
                Ok(ResolvedInner::Mc)
            }
        }
        InnerMethod::ExactWick => {
            if !all_integer {
                return Err(MomentError::InvalidSpec {
                    reason: "exact_wick inner requires integer complement exponents".into(),
                });
            }
            if degree > WICK_MAX_DEGREE as f64 {
                return Err(MomentError::DegreeTooLarge {
                    degree: degree as usize,
                    max: WICK_MAX_DEGREE,
                });
            }
            Ok(ResolvedInner::Wick)
        }
        InnerMethod::ClosedForm => Ok(ResolvedInner::ClosedForm),
        InnerMethod::Mc => Ok(ResolvedInner::Mc),
    }
}

/// Inner moment under the rest-block covariance for one quarter of the CRN
/// panel (`quarter = 4` means the full panel).
fn inner_moment(
    resolved: ResolvedInner,
    rest_cov: &Matrix,
    targets: &[(usize, f64)],
    panel: Option<&ZPanel>,
    quarter: usize,
) -> Result<f64, MomentError> {
    match resolved {
        ResolvedInner::Trivial => Ok(1.0),
        ResolvedInner::ClosedForm => {
            if targets.len() >= 2 {
                // Closed form factorizes only for independent targets.
                for (ai, &(ti, _)) in targets.iter().enumerate() {
                    for &(tj, _) in targets.iter().skip(ai + 1) {
                        let off = rest_cov.get(ti, tj).abs();
                        let scale = (rest_cov.get(ti, ti) * rest_cov.get(tj, tj)).sqrt();
                        if off > 1e-9 * scale {
                            return Err(MomentError::InvalidSpec {
                                reason: "closed_form inner requires a diagonal complement block"
                                    .into(),
                            });
                        }
                    }
                }
            }
            let mut prod = 1.0;
            for &(ti, nu) in targets {
                prod *= univariate_abs_moment(rest_cov.get(ti, ti), nu)?;
            }
            Ok(prod)
        }
        ResolvedInner::Wick => {
            let nt = targets.len();
            let sub = Matrix::from_fn(nt, nt, |r, c| rest_cov.get(targets[r].0, targets[c].0));
            let powers: Vec<usize> = targets.iter().map(|&(_, nu)| (2.0 * nu).round() as usize).collect();
            wick_moment_matrix(&sub, &powers)
        }
        ResolvedInner::Mc => {
            let panel = panel.expect("MC inner requires a panel");
            let nt = targets.len();
            let sub = Matrix::from_fn(nt, nt, |r, c| rest_cov.get(targets[r].0, targets[c].0));
            let l = sub.cholesky().map_err(MomentError::Linalg)?;
            let mut sum = 0.0;
            let mut count = 0u64;
            let mut y = vec![0.0f64; nt];
            for row in 0..panel.rows {
                if quarter < 4 && row % 4 != quarter {
                    continue;
                }
                let z = panel.row(row);
                for i in 0..nt {
                    let mut v = 0.0;
                    for k in 0..=i {
                        v += l.get(i, k) * z[k];
                    }
                    y[i] = v;
                }
                let mut w = 1.0;
                for (i, &(_, nu)) in targets.iter().enumerate() {
                    w *= abs_pow(y[i], 2.0 * nu);
                }
                sum += w;
                count += 1;
            }
            Ok(sum / count as f64)
        }
    }
}

/// Renormalized covariance `(Sigma^{-1} + T_s)^{-1}` assembled from the block
/// formulas (no full-dimension double inversion): top-left
/// `(A^{-1}+S)^{-1}`, off-diagonal `(A^{-1}+S)^{-1} A^{-1} B`, bottom-right
/// `Schur + B^T A^{-1} (A^{-1}+S)^{-1} A^{-1} B`.
pub fn transformed_covariance(
    sigma: &CovMatrix,
    part: &IndexPartition,
    s: &[f64],
) -> Result<CovMatrix, MomentError> {
    validate_s(part, s)?;
    let ctx = SRepContext::build(sigma, part.j())?;
    let k = part.j().len();
    let mut g = ctx.a_inv.clone();
    for (i, &si) in s.iter().enumerate() {
        g.set(i, i, g.get(i, i) + 2.0 * si);
    }
    let lg = g.cholesky_raw().map_err(|_| {
        MomentError::Linalg(crate::error::LinalgError::SingularBlock {
            context: "renormalized covariance (A^-1 + S)",
        })
    })?;
    let top_left = Matrix::chol_solve(&lg, &Matrix::identity(k)).symmetrized();
    let top_right = Matrix::chol_solve(&lg, &ctx.ainv_b);
    let bottom_right = ctx
        .schur
        .add(&ctx.ainv_b.transpose().matmul(&Matrix::chol_solve(&lg, &ctx.ainv_b)))
        .symmetrized();
    let full = BlockView { a: top_left, b: top_right, c: bottom_right }.assemble(part);
    CovMatrix::from_matrix(full).map_err(MomentError::Linalg)
}

/// `E[exp(-X^T T_s X / 2)]` via Cholesky log-determinants.
pub fn gaussian_laplace_factor(
    sigma: &CovMatrix,
    part: &IndexPartition,
    s: &[f64],
) -> Result<f64, MomentError> {
    validate_s(part, s)?;
    let ctx = SRepContext::build(sigma, part.j())?;
    ctx.laplace_factor(s)
}

fn validate_s(part: &IndexPartition, s: &[f64]) -> Result<(), MomentError> {
    if part.j().is_empty() {
        return Err(MomentError::InvalidSpec { reason: "J must be nonempty".into() });
    }
    if s.len() != part.j().len() {
        return Err(MomentError::InvalidSpec {
            reason: format!("s has {} entries for |J| = {}", s.len(), part.j().len()),
        });
    }
    if s.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(MomentError::InvalidSpec {
            reason: "s entries must be strictly positive and finite".into(),
        });
    }
    Ok(())
}

/// Inner expectation evaluated at an s-node of the quadrature: receives the
/// rest-block covariance (or `None` when the driver was told it is not
/// needed) and returns `E[...]` under it.
pub(crate) type SNodeInner<'a> = dyn FnMut(Option<&Matrix>) -> Result<f64, MomentError> + 'a;

/// Nested per-axis quadrature of
/// `int LaplaceFactor(s) * inner(rest_cov(s)) * prod_j s_j^(nu_j - 1) ds`
/// over `(0, inf)^k` (without the `1/prod Gamma(nu_j)` normalization).
/// Each evaluation charges `cost_per_eval` against the budget.
pub(crate) struct SQuadDriver<'a> {
    pub(crate) ctx: &'a SRepContext,
    pub(crate) nus: &'a [f64],
    pub(crate) tol: f64,
    pub(crate) cost_per_eval: u64,
    pub(crate) needs_rest: bool,
    /// Non-adaptive panel count per transformed piece; set for stochastic
    /// inner moments where adaptive refinement would chase the noise floor.
    pub(crate) fixed_panels: Option<usize>,
}

impl SQuadDriver<'_> {
    pub(crate) fn run(
        &self,
        budget: &mut EvalBudget,
        inner: &mut SNodeInner<'_>,
    ) -> Result<QuadOutcome, MomentError> {
        let mut s_buf = Vec::with_capacity(self.nus.len());
        self.integrate(0, &mut s_buf, budget, inner)
    }

    fn integrate(
        &self,
        depth: usize,
        s_buf: &mut Vec<f64>,
        budget: &mut EvalBudget,
        inner: &mut SNodeInner<'_>,
    ) -> Result<QuadOutcome, MomentError> {
        if depth == self.nus.len() {
            budget.charge(self.cost_per_eval)?;
            let lap = self.ctx.laplace_factor(s_buf)?;
            let value = if self.needs_rest {
                let rest = self.ctx.rest_cov(s_buf)?;
                lap * inner(Some(&rest))?
            } else {
                lap * inner(None)?
            };
            return Ok(QuadOutcome { value, error: 0.0 });
        }
        let tol = self.tol * 0.1f64.powi(depth as i32);
        let mut worst_inner = 0.0f64;
        let mut f = |s_axis: f64| -> Result<f64, MomentError> {
            s_buf.push(s_axis.min(S_CLAMP));
            let out = self.integrate(depth + 1, s_buf, budget, inner);
            s_buf.pop();
            let out = out?;
            worst_inner = worst_inner.max(out.error);
            Ok(out.value)
        };
        let outcome = match self.fixed_panels {
            Some(p) => integrate_power_weighted_axis_fixed(self.nus[depth], &mut f, p)?,
            None => integrate_power_weighted_axis(self.nus[depth], &mut f, tol)?,
        };
        let _ = tol;
        Ok(QuadOutcome { value: outcome.value, error: outcome.error + 2.0 * worst_inner })
    }
}

pub(crate) fn axis_tol(k: usize) -> f64 {
    match k {
        0 | 1 => 1e-9,
        2 => 1e-8,
        _ => 3e-7,
    }
}

/// Mixed-sign moment through the completely monotone integral representation:
///
/// `(prod_j Gamma(nu_j))^{-1} int_{(0,inf)^k} LaplaceFactor(s) * InnerMoment(s)
///  * prod_j s_j^(nu_j - 1) ds`.
///
/// Up to three active negative axes use tensorized adaptive quadrature on
/// substituted coordinates; more axes switch to importance sampling with a
/// per-axis heavy-tailed proposal. `budget` caps total inner evaluations.
pub fn s_representation_moment(
    sigma: &CovMatrix,
    spec: &ExponentSpec,
    inner: InnerMethod,
    budget: u64,
    seed: u64,
) -> Result<MomentEstimate, MomentError> {
    if spec.dim() != sigma.dim() {
        return Err(MomentError::InvalidSpec {
            reason: format!("spec dimension {} != sigma dimension {}", spec.dim(), sigma.dim()),
        });
    }
    let active = spec.active_j();
    let jc_pairs = spec.jc_pairs();
    for &(j, nu) in &active {
        if !(nu > 0.0 && nu < 0.5) {
            return Err(MomentError::InvalidSpec {
                reason: format!("nu_j = {nu} at index {j} outside (0, 1/2)"),
            });
        }
    }

    // No active negative axes: the representation degenerates to the plain
    // positive-exponent moment of Sigma itself.
    if active.is_empty() {
        return positive_moment_at_sigma(sigma, &jc_pairs, inner, budget, seed, spec);
    }

    let active_idx: Vec<usize> = active.iter().map(|&(j, _)| j).collect();
    let nus: Vec<f64> = active.iter().map(|&(_, nu)| nu).collect();
    let ctx = SRepContext::build(sigma, &active_idx)?;
    let target_indices: Vec<usize> = jc_pairs.iter().map(|&(i, _)| i).collect();
    let positions = ctx.rest_positions(&target_indices)?;
    let targets: Vec<(usize, f64)> =
        positions.into_iter().zip(jc_pairs.iter().map(|&(_, nu)| nu)).collect();
    let resolved = resolve_inner(inner, &targets)?;
    let gamma_norm: f64 = nus.iter().map(|&nu| gamma(nu)).product();

    let k = nus.len();
    if k <= 3 {
        let mut budget_ctr = EvalBudget::new(budget);
        let tol = axis_tol(k);
        let estimate = if resolved == ResolvedInner::Mc {
            // One quadrature per CRN quarter panel; the spread across
            // quarters measures the Monte Carlo part of the error.
            let (rows, panels) = mc_inner_plan(k);
            let panel = ZPanel::draw(seed, domain::Z_PANEL, rows, targets.len());
            let driver = SQuadDriver {
                ctx: &ctx,
                nus: &nus,
                tol: tol.max(1e-6),
                cost_per_eval: (rows / 4) as u64,
                needs_rest: true,
                fixed_panels: Some(panels),
            };
            let mut values = [0.0f64; 4];
            let mut bound = 0.0f64;
            for q in 0..4 {
                let mut inner_fn = |rest: Option<&Matrix>| {
                    inner_moment(resolved, rest.expect("rest"), &targets, Some(&panel), q)
                };
                let out = driver.run(&mut budget_ctr, &mut inner_fn)?;
                values[q] = out.value / gamma_norm;
                bound = bound.max(out.error / gamma_norm);
            }
            let mean = values.iter().sum::<f64>() / 4.0;
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
            let se = (var / 4.0).sqrt();
            let mut est = MomentEstimate {
                value: mean,
                std_error: se + bound,
                n_samples: budget_ctr.used(),
                method: MomentMethod::SQuadrature,
                diagnostics: BTreeMap::new(),
            };
            est.diagnostics.insert("inner".into(), "mc".into());
            est
        } else {
            let driver = SQuadDriver {
                ctx: &ctx,
                nus: &nus,
                tol,
                cost_per_eval: 1,
                needs_rest: resolved != ResolvedInner::Trivial,
                fixed_panels: None,
            };
            let mut inner_fn = |rest: Option<&Matrix>| match rest {
                None => Ok(1.0),
                Some(rc) => inner_moment(resolved, rc, &targets, None, 4),
            };
            let out = driver.run(&mut budget_ctr, &mut inner_fn)?;
            let mut est = MomentEstimate {
                value: out.value / gamma_norm,
                std_error: out.error / gamma_norm,
                n_samples: budget_ctr.used(),
                method: MomentMethod::SQuadrature,
                diagnostics: BTreeMap::new(),
            };
            est.diagnostics.insert(
                "inner".into(),
                match resolved {
                    ResolvedInner::Trivial => "trivial".into(),
                    ResolvedInner::ClosedForm => "closed_form".into(),
                    ResolvedInner::Wick => "wick".into(),
                    ResolvedInner::Mc => unreachable!(),
                },
            );
            est
        };
        return finish_srep_estimate(estimate, spec);
    }

    importance_moment(&ctx, &nus, &targets, resolved, budget, seed, spec)
}

fn positive_moment_at_sigma(
    sigma: &CovMatrix,
    jc_pairs: &[(usize, f64)],
    inner: InnerMethod,
    budget: u64,
    seed: u64,
    spec: &ExponentSpec,
) -> Result<MomentEstimate, MomentError> {
    if jc_pairs.is_empty() {
        return Ok(MomentEstimate::exact(1.0, MomentMethod::ClosedForm));
    }
    let targets: Vec<(usize, f64)> = jc_pairs.iter().map(|&(i, nu)| (i, nu)).collect();
    let resolved = resolve_inner(inner, &targets)?;
    match resolved {
        ResolvedInner::Trivial => Ok(MomentEstimate::exact(1.0, MomentMethod::ClosedForm)),
        ResolvedInner::ClosedForm => {
            let val = inner_moment(resolved, sigma.matrix(), &targets, None, 4)?;
            Ok(MomentEstimate::exact(val, MomentMethod::ClosedForm))
        }
        ResolvedInner::Wick => {
            let val = inner_moment(resolved, sigma.matrix(), &targets, None, 4)?;
            Ok(MomentEstimate::exact(val, MomentMethod::Wick))
        }
        ResolvedInner::Mc => {
            let n = budget.max(MC_MIN_SAMPLES);
            mc_mixed_moment(sigma, spec, n, seed)
        }
    }
}

/// Importance sampling over s-space for more than three negative axes.
///
/// Per axis the proposal is `s = G_nu / G_kappa` (a beta-prime variable)
/// whose density `s^(nu-1) (1+s)^(-1/2) / B(nu, kappa)` matches both the
/// endpoint singularity and the polynomial tail of the integrand, keeping
/// importance weights bounded. A Gamma-rate proposal would leave
/// exponentially unbounded weights because the integrand only decays
/// polynomially.
fn importance_moment(
    ctx: &SRepContext,
    nus: &[f64],
    targets: &[(usize, f64)],
    resolved: ResolvedInner,
    budget: u64,
    seed: u64,
    spec: &ExponentSpec,
) -> Result<MomentEstimate, MomentError> {
    let k = nus.len();
    let draw_cost = k as u64
        + match resolved {
            ResolvedInner::Mc => IMPORTANCE_INNER_DRAWS as u64,
            _ => 1,
        };
    let n = (budget / draw_cost).max(MC_MIN_SAMPLES);
    // Per-axis constant: B(nu, kappa) / Gamma(nu) = Gamma(kappa) / Gamma(1/2).
    let const_weight: f64 = nus
        .iter()
        .map(|&nu| gamma(0.5 - nu) / std::f64::consts::PI.sqrt())
        .product();
    let nt = targets.len();

    let n_batches = n.div_ceil(rng::MC_BATCH);
    let partials: Result<Vec<(f64, f64)>, MomentError> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rjg = stream_rng(seed, domain::S_IMPORTANCE, b + 1);
            let count = if (b + 1) * rng::MC_BATCH <= n { rng::MC_BATCH } else { n - b * rng::MC_BATCH };
            let gammas: Vec<(GammaDist<f64>, GammaDist<f64>)> = nus
                .iter()
                .map(|&nu| {
                    (
                        GammaDist::new(nu, 1.0).expect("valid shape"),
                        GammaDist::new(0.5 - nu, 1.0).expect("valid shape"),
                    )
                })
                .collect();
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut s = vec![0.0f64; k];
            let mut y = vec![0.0f64; nt];
            for _ in 0..count {
                let mut tail_weight = 1.0;
                for (i, (gn, gk)) in gammas.iter().enumerate() {
                    let g1: f64 = gn.sample(&mut rjg);
                    let g2: f64 = gk.sample(&mut rjg);
                    let raw = if g2 > 0.0 { g1 / g2 } else { f64::INFINITY };
                    let si = raw.min(S_CLAMP);
                    s[i] = si;
                    tail_weight *= (1.0 + si).sqrt();
                }
                let lap = ctx.laplace_factor(&s)?;
                let inner = match resolved {
                    ResolvedInner::Trivial => 1.0,
                    ResolvedInner::Mc => {
                        let rest = ctx.rest_cov(&s)?;
                        let sub = Matrix::from_fn(nt, nt, |r, c| {
                            rest.get(targets[r].0, targets[c].0)
                        });
                        let l = sub.cholesky().map_err(MomentError::Linalg)?;
                        let mut acc = 0.0;
                        let mut z = vec![0.0f64; nt];
                        for _ in 0..IMPORTANCE_INNER_DRAWS {
                            for zi in z.iter_mut() {
                                *zi = StandardNormal.sample(&mut rjg);
                            }
                            for (i, yi) in y.iter_mut().enumerate() {
                                let mut v = 0.0;
                                for c in 0..=i {
                                    v += l.get(i, c) * z[c];
                                }
                                *yi = v;
                            }
                            let mut w = 1.0;
                            for (i, &(_, nu)) in targets.iter().enumerate() {
                                w *= abs_pow(y[i], 2.0 * nu);
                            }
                            acc += w;
                        }
                        acc / IMPORTANCE_INNER_DRAWS as f64
                    }
                    _ => {
                        let rest = ctx.rest_cov(&s)?;
                        inner_moment(resolved, &rest, targets, None, 4)?
                    }
                };
                let v = lap * inner * tail_weight;
                sum += v;
                sum_sq += v * v;
            }
            Ok((sum, sum_sq))
        })
        .collect();
    let partials = partials?;
    let (sum, sum_sq) = partials.iter().fold((0.0, 0.0), |(a, b), &(s, q)| (a + s, b + q));
    let nf = n as f64;
    let mean = sum / nf * const_weight;
    let var = if n > 1 { ((sum_sq - nf * (sum / nf) * (sum / nf)) / (nf - 1.0)).max(0.0) } else { 0.0 };
    let se = (var / nf).sqrt() * const_weight;
    let mut est = MomentEstimate {
        value: mean,
        std_error: se,
        n_samples: n,
        method: MomentMethod::SImportance,
        diagnostics: BTreeMap::new(),
    };
    est.diagnostics.insert(
        "inner".into(),
        match resolved {
            ResolvedInner::Trivial => "trivial".into(),
            ResolvedInner::ClosedForm => "closed_form".into(),
            ResolvedInner::Wick => "wick".into(),
            ResolvedInner::Mc => "mc".into(),
        },
    );
    finish_srep_estimate(est, spec)
}

fn finish_srep_estimate(
    mut est: MomentEstimate,
    spec: &ExponentSpec,
) -> Result<MomentEstimate, MomentError> {
    if spec.near_divergence() {
        est.flag("near_divergence");
    }
    if !est.std_error.is_finite() {
        est.flag("nonfinite_std_error");
        est.std_error = f64::MAX;
    }
    Ok(est)
}

/// Default method selector: exact routes when available, the integral
/// representation whenever a negative exponent reaches `MC_ROUTE_NU_CAP`
/// (direct MC has unusable variance there), direct MC otherwise.
pub fn auto_mixed_moment(
    sigma: &CovMatrix,
    spec: &ExponentSpec,
    budget: u64,
    seed: u64,
) -> Result<MomentEstimate, MomentError> {
    let active = spec.active_j();
    if active.is_empty() {
        return positive_moment_at_sigma(sigma, &spec.jc_pairs(), InnerMethod::Auto, budget, seed, spec);
    }
    if spec.max_nu_j() >= MC_ROUTE_NU_CAP {
        s_representation_moment(sigma, spec, InnerMethod::Auto, budget, seed)
    } else {
        let n = budget.max(MC_MIN_SAMPLES).min(4_000_000);
        mc_mixed_moment(sigma, spec, n, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_gk15;

    fn cov2(rho: f64) -> CovMatrix {
        CovMatrix::new(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap()
    }

    #[test]
    fn univariate_closed_form() {
        // second moment equals the variance
        assert!((univariate_abs_moment(2.5, 1.0).unwrap() - 2.5).abs() < 1e-14);
        assert!((univariate_abs_moment(1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        // frozen: Gamma(1/4)/sqrt(pi) * 2^(-1/4)
        let v = univariate_abs_moment(1.0, -0.25).unwrap();
        assert!((v - 1.7200799746490390708).abs() < 1e-13, "got {v}");
        assert!(univariate_abs_moment(1.0, -0.5).is_err());
        assert!(univariate_abs_moment(0.0, 0.3).is_err());
    }

    #[test]
    fn univariate_matches_quadrature_oracle() {
        // E|X|^(-1/2) = int |x|^(-1/2) phi(x) dx, via x = u^2 to remove the
        // endpoint singularity: 2 int_0^inf phi(u^2) * 2 du ... careful:
        // int_0^inf x^(-1/2) 2 phi(x) dx with x = u^2 gives 4 int_0^inf
        // phi(u^2) du... wait, dx = 2u du, x^(-1/2) = 1/u, so integrand
        // = 2 phi(u^2) * 2 du / ... recompute in the test directly.
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        // E|X|^{2 nu} with nu = -0.25: 2 int_0^inf x^{-1/2} phi(x) dx,
        // x = u^2: = 2 int_0^inf u^{-1} phi(u^2) 2u du = 4 int_0^inf phi(u^2) du
        let mut f = |u: f64| Ok(4.0 * phi(u * u));
        let oracle = adaptive_gk15(&mut f, 0.0, 8.0, 1e-10).unwrap().value;
        let closed = univariate_abs_moment(1.0, -0.25).unwrap();
        assert!((oracle - closed).abs() <= 1e-8, "oracle {oracle} closed {closed}");
    }

    #[test]
    fn cauchy_schwarz_sanity() {
        for &nu in &[0.05, 0.15, 0.25, 0.35, 0.45] {
            let plus = univariate_abs_moment(1.0, nu).unwrap();
            let minus = univariate_abs_moment(1.0, -nu).unwrap();
            assert!(plus * minus >= 1.0, "nu = {nu}");
        }
    }

    #[test]
    fn wick_frozen_examples() {
        let sigma = cov2(0.5);
        let v = wick_moment(&sigma, &[2, 2]).unwrap();
        assert!((v - 1.5).abs() < 1e-14);

        let any = cov2(0.37);
        assert_eq!(wick_moment(&any, &[0, 0]).unwrap(), 1.0);
        assert_eq!(wick_moment(&any, &[1, 2]).unwrap(), 0.0); // odd degree

        let i3 = CovMatrix::identity(3);
        assert!((wick_moment(&i3, &[2, 2, 2]).unwrap() - 1.0).abs() < 1e-14);

        // E[X1 X2] = sigma_12
        assert!((wick_moment(&any, &[1, 1]).unwrap() - 0.37).abs() < 1e-15);
    }

    #[test]
    fn wick_degree_bound() {
        let sigma = CovMatrix::identity(2);
        let err = wick_moment(&sigma, &[20, 6]).unwrap_err();
        assert!(matches!(err, MomentError::DegreeTooLarge { .. }));
        // degree 24 itself is allowed: E[X^24] = 23!!
        let v = wick_moment(&CovMatrix::identity(1), &[24]).unwrap();
        let double_fact_23: f64 = (1..=23).step_by(2).map(|k| k as f64).product();
        assert!((v / double_fact_23 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mc_reduces_to_known_values() {
        // independence: E[X2^2] = 1
        let spec = ExponentSpec::new(
            IndexPartition::new(2, &[0]).unwrap(),
            vec![0.0, 1.0],
        )
        .unwrap();
        let est = mc_mixed_moment(&CovMatrix::identity(2), &spec, 200_000, 1).unwrap();
        assert!((est.value - 1.0).abs() < 4.0 * est.std_error, "{est:?}");

        // positive-only mode: E[X1^2 X2^2] with rho = 0.5 is 1.5 (Wick)
        let spec = ExponentSpec::positive_only(2, vec![1.0, 1.0]).unwrap();
        let est = mc_mixed_moment(&cov2(0.5), &spec, 400_000, 2).unwrap();
        assert!((est.value - 1.5).abs() < 4.0 * est.std_error, "{est:?}");

        // independence factorization with fractional exponents
        let spec = ExponentSpec::new(
            IndexPartition::new(2, &[0]).unwrap(),
            vec![0.2, 0.3],
        )
        .unwrap();
        let est = mc_mixed_moment(&CovMatrix::identity(2), &spec, 400_000, 3).unwrap();
        let exact = univariate_abs_moment(1.0, -0.2).unwrap()
            * univariate_abs_moment(1.0, 0.3).unwrap();
        assert!((est.value - exact).abs() < 4.0 * est.std_error, "{est:?} vs {exact}");
    }

    #[test]
    fn mc_determinism_and_guards() {
        let spec = ExponentSpec::new(IndexPartition::new(2, &[0]).unwrap(), vec![0.3, 1.0]).unwrap();
        let sigma = cov2(0.4);
        let a = mc_mixed_moment(&sigma, &spec, 50_000, 9).unwrap();
        let b = mc_mixed_moment(&sigma, &spec, 50_000, 9).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        assert_eq!(a.diagnostics.get("infinite_variance_risk").map(String::as_str), Some("true"));

        assert!(mc_mixed_moment(&sigma, &spec, 10, 1).is_err());
    }

    #[test]
    fn spec_construction_rules() {
        // nu above the guard is rejected by default
        let part = IndexPartition::new(2, &[0]).unwrap();
        assert!(ExponentSpec::new(part.clone(), vec![0.495, 1.0]).is_err());
        // ... and accepted with a lowered guard
        let forced = ExponentSpec::with_delta_min(part.clone(), vec![0.495, 1.0], 1e-4).unwrap();
        assert!(forced.near_divergence());
        // complement zeros are folded into J
        let spec = ExponentSpec::new(part, vec![0.1, 0.0]).unwrap();
        assert!(spec.jc_pairs().is_empty());
        assert_eq!(spec.part().j(), &[0, 1]);
    }

    #[test]
    fn transformed_covariance_examples() {
        let part = IndexPartition::new(2, &[0]).unwrap();
        // Sigma = I, s = 0.5: diag(1/2, 1)
        let tc = transformed_covariance(&CovMatrix::identity(2), &part, &[0.5]).unwrap();
        assert!((tc.entry(0, 0) - 0.5).abs() < 1e-14);
        assert!((tc.entry(1, 1) - 1.0).abs() < 1e-14);
        assert!(tc.entry(0, 1).abs() < 1e-14);

        // s -> 0 limit recovers Sigma
        let sigma = cov2(0.5);
        let tc = transformed_covariance(&sigma, &part, &[1e-12]).unwrap();
        assert!(tc.matrix().max_abs_diff(sigma.matrix()) <= 1e-8);

        // Loewner domination by Sigma
        let tc = transformed_covariance(&sigma, &part, &[1.0]).unwrap();
        assert!(crate::linalg::loewner_leq(tc.matrix(), sigma.matrix(), None).unwrap());
    }

    #[test]
    fn transformed_covariance_matches_double_inversion() {
        let sigma = crate::linalg::random_correlation(4, 17, 1e4).unwrap();
        let part = IndexPartition::new(4, &[1, 2]).unwrap();
        let s = [0.7, 2.3];
        let tc = transformed_covariance(&sigma, &part, &s).unwrap();
        // oracle: naive (Sigma^-1 + T_s)^-1
        let mut prec = sigma.inverse();
        prec.set(1, 1, prec.get(1, 1) + 2.0 * s[0]);
        prec.set(2, 2, prec.get(2, 2) + 2.0 * s[1]);
        let oracle = prec.lu_inverse().unwrap();
        assert!(tc.matrix().max_abs_diff(&oracle) <= 1e-10);
    }

    #[test]
    fn laplace_factor_examples() {
        // d = 1: (1 + 2 s)^(-1/2)
        let part = IndexPartition::new(1, &[0]).unwrap();
        let sigma1 = CovMatrix::identity(1);
        for &s in &[0.25, 1.0, 7.0] {
            let f = gaussian_laplace_factor(&sigma1, &part, &[s]).unwrap();
            assert!((f - (1.0 + 2.0 * s).powf(-0.5)).abs() < 1e-14);
        }
        // s -> 0 limit is 1
        let f = gaussian_laplace_factor(&sigma1, &part, &[1e-300]).unwrap();
        assert!((f - 1.0).abs() < 1e-12);

        // frozen 2-d value: E[exp(-X1^2)] for rho = 0.5 is 3^(-1/2)
        let part = IndexPartition::new(2, &[0]).unwrap();
        let f = gaussian_laplace_factor(&cov2(0.5), &part, &[1.0]).unwrap();
        assert!((f - 0.57735026918962576451).abs() < 1e-14, "got {f}");
    }

    #[test]
    fn laplace_factor_monotone_in_s() {
        let part = IndexPartition::new(2, &[0]).unwrap();
        let sigma = cov2(0.3);
        let mut prev = 1.0;
        for &s in &[0.1, 0.5, 1.0, 5.0, 50.0] {
            let f = gaussian_laplace_factor(&sigma, &part, &[s]).unwrap();
            assert!(f < prev);
            prev = f;
        }
    }

    #[test]
    fn srep_univariate_matches_closed_form() {
        let sigma = CovMatrix::identity(1);
        let part = IndexPartition::new(1, &[0]).unwrap();
        for &nu in &[0.05, 0.25, 0.45] {
            let spec = ExponentSpec::new(part.clone(), vec![nu]).unwrap();
            let est = s_representation_moment(&sigma, &spec, InnerMethod::Auto, 1_000_000, 1).unwrap();
            let exact = univariate_abs_moment(1.0, -nu).unwrap();
            let rel = ((est.value - exact) / exact).abs();
            assert!(rel <= 1e-6, "nu = {nu}: rel {rel:e}");
        }
    }

    #[test]
    fn srep_independence_factorization() {
        let sigma = CovMatrix::identity(2);
        let part = IndexPartition::new(2, &[0]).unwrap();
        let spec = ExponentSpec::new(part, vec![0.2, 1.0]).unwrap();
        let est = s_representation_moment(&sigma, &spec, InnerMethod::Auto, 1_000_000, 1).unwrap();
        let exact = univariate_abs_moment(1.0, -0.2).unwrap();
        let rel = ((est.value - exact) / exact).abs();
        assert!(rel <= 1e-6, "rel {rel:e}");
    }

    #[test]
    fn srep_cross_method_triangle() {
        // correlated case, Wick inner vs direct MC
        let sigma = cov2(0.5);
        let part = IndexPartition::new(2, &[0]).unwrap();
        let spec = ExponentSpec::new(part, vec![0.3, 1.0]).unwrap();
        let quad = s_representation_moment(&sigma, &spec, InnerMethod::ExactWick, 1_000_000, 1).unwrap();
        let mc = mc_mixed_moment(&sigma, &spec, 1_000_000, 5).unwrap();
        let combined = (quad.std_error.powi(2) + mc.std_error.powi(2)).sqrt();
        assert!(
            (quad.value - mc.value).abs() <= 4.0 * combined,
            "quad {} mc {} +- {}",
            quad.value,
            mc.value,
            combined
        );
    }

    #[test]
    fn srep_mc_inner_agrees_with_wick_inner() {
        let sigma = CovMatrix::new(&[
            vec![1.0, 0.5, 0.2],
            vec![0.5, 1.0, 0.3],
            vec![0.2, 0.3, 1.0],
        ])
        .unwrap();
        let part = IndexPartition::new(3, &[0]).unwrap();
        let spec = ExponentSpec::new(part, vec![0.3, 1.0, 1.0]).unwrap();
        let wick = s_representation_moment(&sigma, &spec, InnerMethod::ExactWick, 2_000_000, 1).unwrap();
        let mc = s_representation_moment(&sigma, &spec, InnerMethod::Mc, 30_000_000, 1).unwrap();
        let tol = 4.0 * (wick.std_error + mc.std_error) + 1e-9;
        assert!(
            (wick.value - mc.value).abs() <= tol,
            "wick {} mc {} se {}",
            wick.value,
            mc.value,
            mc.std_error
        );
    }

    #[test]
    fn srep_all_negative_mode() {
        // Jc empty: E[|X1|^-2a |X2|^-2b] for independent components
        let sigma = CovMatrix::identity(2);
        let part = IndexPartition::new(2, &[0, 1]).unwrap();
        let spec = ExponentSpec::new(part, vec![0.2, 0.3]).unwrap();
        let est = s_representation_moment(&sigma, &spec, InnerMethod::Auto, 2_000_000, 1).unwrap();
        let exact = univariate_abs_moment(1.0, -0.2).unwrap()
            * univariate_abs_moment(1.0, -0.3).unwrap();
        let rel = ((est.value - exact) / exact).abs();
        assert!(rel <= 1e-6, "rel {rel:e}");
    }

    #[test]
    fn importance_path_matches_factorized_truth() {
        // 5 negative axes, diagonal covariance: truth factorizes
        let sigma = CovMatrix::identity(5);
        let part = IndexPartition::new(5, &[0, 1, 2, 3]).unwrap();
        let spec = ExponentSpec::new(part, vec![0.1, 0.2, 0.15, 0.25, 1.0]).unwrap();
        let est = s_representation_moment(&sigma, &spec, InnerMethod::Auto, 2_000_000, 3).unwrap();
        assert_eq!(est.method, MomentMethod::SImportance);
        let exact: f64 = [0.1, 0.2, 0.15, 0.25]
            .iter()
            .map(|&nu| univariate_abs_moment(1.0, -nu).unwrap())
            .product::<f64>();
        assert!(
            (est.value - exact).abs() <= 4.0 * est.std_error,
            "est {} +- {} vs {}",
            est.value,
            est.std_error,
            exact
        );
    }

    #[test]
    fn budget_exceeded_is_reported() {
        let sigma = CovMatrix::identity(1);
        let part = IndexPartition::new(1, &[0]).unwrap();
        let spec = ExponentSpec::new(part, vec![0.25]).unwrap();
        let err = s_representation_moment(&sigma, &spec, InnerMethod::Auto, 10, 1).unwrap_err();
        assert!(matches!(err, MomentError::BudgetExceeded { .. }));
    }

    #[test]
    fn auto_selector_routes_by_nu() {
        let sigma = cov2(0.4);
        let part = IndexPartition::new(2, &[0]).unwrap();
        let small = ExponentSpec::new(part.clone(), vec![0.1, 1.0]).unwrap();
        let est = auto_mixed_moment(&sigma, &small, 100_000, 1).unwrap();
        assert_eq!(est.method, MomentMethod::McDirect);
        let large = ExponentSpec::new(part, vec![0.3, 1.0]).unwrap();
        let est = auto_mixed_moment(&sigma, &large, 1_000_000, 1).unwrap();
        assert_eq!(est.method, MomentMethod::SQuadrature);
    }

    #[test]
    fn wick_permutation_invariance() {
        let sigma = CovMatrix::new(&[
            vec![1.0, 0.4, 0.1],
            vec![0.4, 1.0, -0.2],
            vec![0.1, -0.2, 1.0],
        ])
        .unwrap();
        let orig = wick_moment(&sigma, &[2, 4, 2]).unwrap();
        // permute (0 1 2) -> (2 0 1)
        let perm = [2usize, 0, 1];
        let permuted = Matrix::from_fn(3, 3, |i, j| sigma.entry(perm[i], perm[j]));
        let psigma = CovMatrix::from_matrix(permuted).unwrap();
        let pv = wick_moment(&psigma, &[2, 2, 4]).unwrap();
        assert!((orig - pv).abs() <= 1e-12 * orig.abs());
    }
}
