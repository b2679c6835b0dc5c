//! Inequality bound evaluators and statistical verdicts.
//!
//! Checks the mixed-sign product inequalities for centered Gaussian vectors:
//! the Schur-complement lower bound, the convex-function upper bound and its
//! AM-GM corollary, the open small-exponent-sum regime (probe only), the
//! Gaussian convex-order comparison, and the 2-d elliptical product
//! inequality including its pointwise proof surface `H(u) <= 0`.
//!
//! Each check produces a [`BoundVerdict`]: both sides with uncertainties, a
//! signed margin (positive = inequality satisfied with slack), a z-score, and
//! a decision. The full generating context is embedded so any verdict can be
//! re-run bit-identically.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BoundError, MomentError};
use crate::linalg::{loewner_leq, schur_complement, CovMatrix, IndexPartition, Matrix};
use crate::moments::{
    auto_mixed_moment, axis_tol, mc_inner_plan, s_representation_moment, univariate_abs_moment,
    ErrorKind, ExponentSpec, InnerMethod, MomentEstimate, MomentMethod, SQuadDriver, SRepContext,
    MC_MIN_SAMPLES,
};
use crate::quad::EvalBudget;
use crate::rng::{domain, stream_rng, ZPanel, MC_BATCH};
use crate::special::gamma;

/// Verdict context schema identifier.
pub const VERDICT_SCHEMA: &str = "gpi-verdict/1";

const INNER_PANEL_ROWS: usize = 2048;

/// Whether the complement exponent pattern is covered by a proven GPI case
/// or only conjectured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenness {
    Proven,
    Conjectural,
}

/// Classify a complement exponent pattern against the known proven GPI cases:
/// at most two components always; three components when any exponent is a
/// positive integer or all are half-integers; all-ones in any dimension.
pub fn classify_gpi_pattern(nu_jc: &[f64]) -> Provenness {
    let m = nu_jc.len();
    if m <= 2 {
        return Provenness::Proven;
    }
    let all_ones = nu_jc.iter().all(|&v| (v - 1.0).abs() < 1e-12);
    if all_ones {
        return Provenness::Proven;
    }
    if m == 3 {
        let any_integer = nu_jc.iter().any(|&v| v >= 1.0 && (v - v.round()).abs() < 1e-12);
        let all_half_integer = nu_jc
            .iter()
            .all(|&v| v > 0.0 && (2.0 * v - (2.0 * v).round()).abs() < 1e-12);
        if any_integer || all_half_integer {
            return Provenness::Proven;
        }
    }
    Provenness::Conjectural
}

/// Outcome of an inequality check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Verified,
    Inconclusive,
    ViolationCandidate,
}

/// Which inequality a verdict belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Lower,
    UpperConvex,
    UpperAmgm,
    OpenProbe,
    Elliptical,
    ConvexOrder,
}

impl CheckKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckKind::Lower => "lower",
            CheckKind::UpperConvex => "upper_convex",
            CheckKind::UpperAmgm => "upper_amgm",
            CheckKind::OpenProbe => "open_probe",
            CheckKind::Elliptical => "elliptical",
            CheckKind::ConvexOrder => "convex_order",
        }
    }
}

/// Decision thresholds and evaluation budget for a check.
///
/// A verdict is verified once `z >= z_pass` and flagged as a violation
/// candidate only below `-z_fail`; the asymmetry reflects that apparent
/// violations of proven statements are almost surely numerical artifacts and
/// deserve stronger evidence. Analytic equality cases are decided by the
/// relative tolerance instead of z-scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub z_pass: f64,
    pub z_fail: f64,
    pub eq_rel_tol: f64,
    pub budget: u64,
    /// Lower bound: use the product-of-expectations (corollary) form of the
    /// negative block instead of the joint-expectation (theorem) form.
    pub corollary_rhs: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            z_pass: 2.0,
            z_fail: 4.0,
            eq_rel_tol: 1e-9,
            budget: 32_000_000,
            corollary_rhs: false,
        }
    }
}

impl CheckOptions {
    pub fn with_budget(budget: u64) -> Self {
        CheckOptions { budget, ..Default::default() }
    }
}

/// Convex test functions, closed by construction: pointwise maxima of affine
/// functions, powers (exponent >= 1) of nonnegative-weighted sums of absolute
/// values, and exponentials of linear functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexFn {
    MaxAffine { pieces: Vec<MaxAffinePiece> },
    PowerOfWeightedAbsSum { weights: Vec<f64>, exponent: f64 },
    ExpLinear { weights: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxAffinePiece {
    pub weights: Vec<f64>,
    pub offset: f64,
}

impl ConvexFn {
    pub fn constant(c: f64) -> Self {
        ConvexFn::MaxAffine { pieces: vec![MaxAffinePiece { weights: Vec::new(), offset: c }] }
    }

    pub fn validate(&self, dim: usize) -> Result<(), BoundError> {
        let bad = |reason: String| Err(BoundError::PreconditionFailed { reason });
        match self {
            ConvexFn::MaxAffine { pieces } => {
                if pieces.is_empty() {
                    return bad("max_affine needs at least one piece".into());
                }
                for p in pieces {
                    if !p.weights.is_empty() && p.weights.len() != dim {
                        return bad(format!(
                            "max_affine piece has {} weights for dimension {dim}",
                            p.weights.len()
                        ));
                    }
                }
                Ok(())
            }
            ConvexFn::PowerOfWeightedAbsSum { weights, exponent } => {
                if weights.len() != dim {
                    return bad(format!("{} weights for dimension {dim}", weights.len()));
                }
                if weights.iter().any(|&w| w < 0.0) {
                    return bad("weights must be nonnegative".into());
                }
                if *exponent < 1.0 {
                    return bad(format!("exponent {exponent} below 1 is not convex"));
                }
                Ok(())
            }
            ConvexFn::ExpLinear { weights } => {
                if weights.len() != dim {
                    return bad(format!("{} weights for dimension {dim}", weights.len()));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ConvexFn::MaxAffine { pieces } => pieces
                .iter()
                .map(|p| {
                    p.offset
                        + p.weights.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max),
            ConvexFn::PowerOfWeightedAbsSum { weights, exponent } => {
                let s: f64 = weights.iter().zip(x.iter()).map(|(w, v)| w * v.abs()).sum();
                s.powf(*exponent)
            }
            ConvexFn::ExpLinear { weights } => {
                weights.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>().exp()
            }
        }
    }
}

/// Monotone test functions on `[0, inf)` for the elliptical check, closed by
/// construction. Nonincreasing members: `exp(-a x)`, `(1+x)^(-a)`, step-down.
/// Nondecreasing members: `x^a`, `min(x, c)`, step-up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MonotoneFn {
    ExpNeg { a: f64 },
    PowerDecay { a: f64 },
    StepDown { c: f64 },
    Power { a: f64 },
    ClampUp { c: f64 },
    StepUp { c: f64 },
    Constant { c: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MonotoneDirection {
    NonIncreasing,
    NonDecreasing,
    Both,
}

impl MonotoneFn {
    pub fn direction(&self) -> MonotoneDirection {
        match self {
            MonotoneFn::ExpNeg { .. } | MonotoneFn::PowerDecay { .. } | MonotoneFn::StepDown { .. } => {
                MonotoneDirection::NonIncreasing
            }
            MonotoneFn::Power { .. } | MonotoneFn::ClampUp { .. } | MonotoneFn::StepUp { .. } => {
                MonotoneDirection::NonDecreasing
            }
            MonotoneFn::Constant { .. } => MonotoneDirection::Both,
        }
    }

    pub fn validate(&self) -> Result<(), BoundError> {
        let ok = match self {
            MonotoneFn::ExpNeg { a } | MonotoneFn::PowerDecay { a } => *a >= 0.0,
            MonotoneFn::Power { a } => *a > 0.0,
            MonotoneFn::StepDown { c } | MonotoneFn::StepUp { c } | MonotoneFn::ClampUp { c } => {
                *c >= 0.0
            }
            MonotoneFn::Constant { c } => c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(BoundError::PreconditionFailed {
                reason: format!("invalid monotone function parameters: {self:?}"),
            })
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            MonotoneFn::ExpNeg { a } => (-a * x).exp(),
            MonotoneFn::PowerDecay { a } => (1.0 + x).powf(-a),
            MonotoneFn::StepDown { c } => {
                if x <= *c {
                    1.0
                } else {
                    0.0
                }
            }
            MonotoneFn::Power { a } => x.powf(*a),
            MonotoneFn::ClampUp { c } => x.min(*c),
            MonotoneFn::StepUp { c } => {
                if x >= *c {
                    1.0
                } else {
                    0.0
                }
            }
            MonotoneFn::Constant { c } => *c,
        }
    }

    /// Polynomial growth order at infinity; the elliptical radial variable
    /// must have finite moments strictly above this order.
    fn growth_order(&self) -> f64 {
        match self {
            MonotoneFn::Power { a } => *a,
            _ => 0.0,
        }
    }
}

/// Radial part of the 2-d elliptical representation `R * Sigma^(1/2) * U`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialSpec {
    Constant { r: f64 },
    /// chi distribution with 2 degrees of freedom; makes the elliptical pair
    /// exactly bivariate Gaussian.
    Chi2,
    AbsNormal,
    /// Pareto with minimum 1 and tail index `alpha`.
    Pareto { alpha: f64 },
}

impl RadialSpec {
    pub fn validate(&self) -> Result<(), BoundError> {
        let ok = match self {
            RadialSpec::Constant { r } => *r >= 0.0 && r.is_finite(),
            RadialSpec::Pareto { alpha } => *alpha > 0.0,
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(BoundError::PreconditionFailed { reason: format!("invalid radial: {self:?}") })
        }
    }

    /// Largest `p` with `E[R^p] < inf` (exclusive for Pareto).
    fn max_finite_moment(&self) -> f64 {
        match self {
            RadialSpec::Pareto { alpha } => *alpha,
            _ => f64::INFINITY,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            RadialSpec::Constant { r } => *r,
            RadialSpec::Chi2 => {
                let u: f64 = rng.random();
                (-2.0 * (1.0 - u).ln()).sqrt()
            }
            RadialSpec::AbsNormal => {
                let z: f64 = StandardNormal.sample(rng);
                z.abs()
            }
            RadialSpec::Pareto { alpha } => {
                let u: f64 = rng.random();
                (1.0 - u).powf(-1.0 / alpha)
            }
        }
    }
}

/// Everything needed to re-run a verdict exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictContext {
    pub schema: String,
    pub code_version: String,
    pub kind: CheckKind,
    pub sigma: CovMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<CovMatrix>,
    /// 0-based indices of the negative-exponent block.
    pub j: Vec<usize>,
    /// Exponent magnitudes per index (empty when the check has none).
    pub nu: Vec<f64>,
    pub delta_min: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<ConvexFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial: Option<RadialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<MonotoneFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<MonotoneFn>,
    pub n: u64,
    pub budget: u64,
    pub seed: u64,
    pub z_pass: f64,
    pub z_fail: f64,
    pub eq_rel_tol: f64,
    pub corollary_rhs: bool,
}

impl VerdictContext {
    fn new(kind: CheckKind, sigma: &CovMatrix, opts: &CheckOptions, seed: u64) -> Self {
        VerdictContext {
            schema: VERDICT_SCHEMA.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            kind,
            sigma: sigma.clone(),
            sigma2: None,
            j: Vec::new(),
            nu: Vec::new(),
            delta_min: crate::moments::DEFAULT_DELTA_MIN,
            psi: None,
            radial: None,
            f: None,
            g: None,
            n: 0,
            budget: opts.budget,
            seed,
            z_pass: opts.z_pass,
            z_fail: opts.z_fail,
            eq_rel_tol: opts.eq_rel_tol,
            corollary_rhs: opts.corollary_rhs,
        }
    }

    fn with_spec(mut self, spec: &ExponentSpec) -> Self {
        self.j = spec.part().j().to_vec();
        self.nu = spec.nu_all().to_vec();
        self.delta_min = spec.delta_min();
        self
    }

    pub fn options(&self) -> CheckOptions {
        CheckOptions {
            z_pass: self.z_pass,
            z_fail: self.z_fail,
            eq_rel_tol: self.eq_rel_tol,
            budget: self.budget,
            corollary_rhs: self.corollary_rhs,
        }
    }

    pub fn spec(&self) -> Result<ExponentSpec, BoundError> {
        let part = if self.j.is_empty() {
            IndexPartition::positive_only(self.sigma.dim())
        } else {
            IndexPartition::new(self.sigma.dim(), &self.j).map_err(BoundError::Linalg)?
        };
        ExponentSpec::with_delta_min(part, self.nu.clone(), self.delta_min)
            .map_err(BoundError::Moment)
    }
}

mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Wire {
            Num(f64),
            Tag(String),
        }
        match Wire::deserialize(d)? {
            Wire::Num(v) => Ok(v),
            Wire::Tag(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float tag {other}"))),
            },
        }
    }
}

/// The result of checking one inequality instance: both sides, the signed
/// margin (positive = satisfied with slack), the z-score, the decision, and
/// the complete provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub lhs: MomentEstimate,
    pub rhs: MomentEstimate,
    pub margin: f64,
    #[serde(with = "extended_f64")]
    pub z: f64,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenness: Option<Provenness>,
    pub context: VerdictContext,
}

/// Margin statistics feeding a decision: the signed margin, its combined
/// uncertainty, and whether that uncertainty has a stochastic component.
struct MarginStats {
    margin: f64,
    err: f64,
    stochastic: bool,
}

impl MarginStats {
    /// Independent sides: root-sum-square of the two uncertainties.
    fn independent(margin: f64, lhs: &MomentEstimate, rhs: &MomentEstimate) -> Self {
        let err = (lhs.std_error.powi(2) + rhs.std_error.powi(2)).sqrt();
        let stochastic = lhs.error_kind() == ErrorKind::Stochastic
            || rhs.error_kind() == ErrorKind::Stochastic;
        MarginStats { margin, err, stochastic }
    }
}

fn decide(stats: &MarginStats, scale: f64, opts: &CheckOptions) -> (f64, Decision) {
    let eq_tol = opts.eq_rel_tol * scale.max(f64::MIN_POSITIVE);
    if stats.err == 0.0 {
        let z = if stats.margin > 0.0 {
            f64::INFINITY
        } else if stats.margin < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        let decision = if stats.margin >= -eq_tol {
            Decision::Verified
        } else {
            Decision::ViolationCandidate
        };
        return (z, decision);
    }
    let z = stats.margin / stats.err;
    if !stats.stochastic {
        // Deterministic error bounds: any margin inside the bound is
        // consistent with the (non-strict) inequality.
        let decision = if stats.margin >= -(stats.err + eq_tol) {
            Decision::Verified
        } else {
            Decision::ViolationCandidate
        };
        return (z, decision);
    }
    if stats.margin.abs() <= eq_tol {
        return (z, Decision::Verified);
    }
    let decision = if z >= opts.z_pass {
        Decision::Verified
    } else if z <= -opts.z_fail {
        Decision::ViolationCandidate
    } else {
        Decision::Inconclusive
    };
    (z, decision)
}

fn verdict_scale(lhs: &MomentEstimate, rhs: &MomentEstimate) -> f64 {
    lhs.value.abs().max(rhs.value.abs())
}

/// RHS of the Schur-complement lower bound:
/// `E_neg * prod_{i in Jc} ((Sigma/Sigma_JJ)_ii / Sigma_ii)^(nu_i) *
/// E[|X_i|^(2 nu_i)]`, where the negative block `E_neg` is either the joint
/// expectation (default) or, with `corollary_form`, the product of univariate
/// expectations.
pub fn lower_bound_rhs(
    sigma: &CovMatrix,
    spec: &ExponentSpec,
    corollary_form: bool,
    budget: u64,
    seed: u64,
) -> Result<MomentEstimate, BoundError> {
    if spec.dim() != sigma.dim() {
        return Err(BoundError::Moment(MomentError::InvalidSpec {
            reason: "spec/sigma dimension mismatch".into(),
        }));
    }
    if spec.part().j().is_empty() {
        return Err(BoundError::PreconditionFailed { reason: "J must be nonempty".into() });
    }
    let e_neg = negative_block_moment(sigma, spec, corollary_form, budget, seed)?;
    let jc_pairs = spec.jc_pairs();
    let mut factor = 1.0;
    if !jc_pairs.is_empty() {
        let schur = schur_complement(sigma, spec.part()).map_err(BoundError::Linalg)?;
        let jc = spec.part().jc();
        for &(i, nu) in &jc_pairs {
            let local = jc.iter().position(|&x| x == i).expect("jc index");
            let shrink = schur.get(local, local) / sigma.entry(i, i);
            factor *= shrink.powf(nu) * univariate_abs_moment(sigma.entry(i, i), nu)?;
        }
    }
    let mut est = MomentEstimate {
        value: e_neg.value * factor,
        std_error: e_neg.std_error * factor,
        n_samples: e_neg.n_samples,
        method: e_neg.method,
        diagnostics: e_neg.diagnostics,
    };
    est.diagnostics.insert(
        "rhs_form".into(),
        if corollary_form { "corollary_product" } else { "theorem_joint" }.into(),
    );
    Ok(est)
}

/// Joint or factorized expectation of the negative block
/// `E[prod_J |X_j|^(-2 nu_j)]`.
fn negative_block_moment(
    sigma: &CovMatrix,
    spec: &ExponentSpec,
    corollary_form: bool,
    budget: u64,
    seed: u64,
) -> Result<MomentEstimate, BoundError> {
    if corollary_form {
        let mut value = 1.0;
        for &(j, nu) in &spec.active_j() {
            value *= univariate_abs_moment(sigma.entry(j, j), -nu)?;
        }
        return Ok(MomentEstimate::exact(value, MomentMethod::ClosedForm));
    }
    let mut nu_neg = vec![0.0; spec.dim()];
    for &(j, nu) in &spec.active_j() {
        nu_neg[j] = nu;
    }
    let neg_spec =
        ExponentSpec::with_delta_min(spec.part().clone(), nu_neg, spec.delta_min())
            .map_err(BoundError::Moment)?;
    s_representation_moment(sigma, &neg_spec, InnerMethod::Auto, budget, seed)
        .map_err(BoundError::Moment)
}

/// Check the lower bound `E[prod_J neg * prod_Jc pos] >= lower_bound_rhs`.
/// The verdict carries a provenness flag for the complement exponent
/// pattern: the bound is conditional on the corresponding GPI case.
pub fn check_lower_bound(
    sigma: &CovMatrix,
    spec: &ExponentSpec,
    opts: &CheckOptions,
    seed: u64,
) -> Result<BoundVerdict, BoundError> {
    let lhs = auto_mixed_moment(sigma, spec, opts.budget, seed).map_err(BoundError::Moment)?;
    let rhs = lower_bound_rhs(sigma, spec, opts.corollary_rhs, opts.budget, seed)?;
    let stats = MarginStats::independent(lhs.value - rhs.value, &lhs, &rhs);
    let (z, decision) = decide(&stats, verdict_scale(&lhs, &rhs), opts);
    let nu_jc: Vec<f64> = spec.jc_pairs().iter().map(|&(_, nu)| nu).collect();
    let context = VerdictContext::new(CheckKind::Lower, sigma, opts, seed).with_spec(spec);
    Ok(BoundVerdict {
        lhs,
        rhs,
        margin: stats.margin,
        z,
        decision,
        provenness: Some(classify_gpi_pattern(&nu_jc)),
        context,
    })
}

/// Mean of `psi` over (a quarter of) the CRN panel pushed through the
/// Cholesky factor of `cov` restricted to `positions`.
fn psi_panel_mean(
    cov: &Matrix,
    positions: &[usize],
    psi: &ConvexFn,
    panel: &ZPanel,
    quarter: usize,
) -> Result<f64, MomentError> {
    let nt = positions.len();
    let sub = Matrix::from_fn(nt, nt, |r, c| cov.get(positions[r], positions[c]));
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
        sum += psi.eval(&y);
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Check the convex upper bound
/// `E[prod_J |X_j|^(-2 nu_j) * psi(X_Jc)] <= E[prod_J |X_j|^(-2 nu_j)] *
/// E[psi(X_Jc)]`.
///
/// The LHS integrates `E[psi(Y_Jc^(s))]` against the s-space weight; both
/// psi expectations reuse one common-random-number panel, run in quarters so
/// the quarter spread of the paired margin measures the Monte Carlo error.
pub fn check_upper_bound_convex(
    sigma: &CovMatrix,
    part: &IndexPartition,
    nu_j: &[f64],
    psi: &ConvexFn,
    opts: &CheckOptions,
    seed: u64,
) -> Result<BoundVerdict, BoundError> {
    if part.dim() != sigma.dim() {
        return Err(BoundError::PreconditionFailed { reason: "partition dimension mismatch".into() });
    }
    if part.j().is_empty() {
        return Err(BoundError::PreconditionFailed { reason: "J must be nonempty".into() });
    }
    if nu_j.len() != part.j().len() {
        return Err(BoundError::PreconditionFailed {
            reason: format!("{} exponents for |J| = {}", nu_j.len(), part.j().len()),
        });
    }
    let jc = part.jc();
    if jc.is_empty() {
        return Err(BoundError::PreconditionFailed {
            reason: "complement must be nonempty for a convex upper bound".into(),
        });
    }
    psi.validate(jc.len())?;

    // Full-length exponent vector: nu_j on J, zero elsewhere.
    let mut nu = vec![0.0; sigma.dim()];
    for (pos, &j) in part.j().iter().enumerate() {
        nu[j] = nu_j[pos];
    }
    let spec = ExponentSpec::new(part.clone(), nu.clone()).map_err(BoundError::Moment)?;
    let active: Vec<(usize, f64)> = spec.active_j();
    let active_idx: Vec<usize> = active.iter().map(|&(j, _)| j).collect();
    let nus: Vec<f64> = active.iter().map(|&(_, nu)| nu).collect();

    // Negative-block factor of the RHS (deterministic; exactly 1 when all
    // exponents vanish).
    let e_neg = negative_block_moment(sigma, &spec, false, opts.budget, seed)?;

    let (panel_rows, fixed_panels) = mc_inner_plan(nus.len());
    let panel = ZPanel::draw(seed, domain::PSI_MC, panel_rows, jc.len());
    let marginal_positions: Vec<usize> = (0..jc.len()).collect();

    // RHS psi factor under Sigma_JcJc, per quarter.
    let sigma_jc = Matrix::from_fn(jc.len(), jc.len(), |r, c| sigma.entry(jc[r], jc[c]));
    let mut rhs_psi = [0.0f64; 4];
    for (q, slot) in rhs_psi.iter_mut().enumerate() {
        *slot = psi_panel_mean(&sigma_jc, &marginal_positions, psi, &panel, q)
            .map_err(BoundError::Moment)?;
    }

    // LHS per quarter.
    let mut lhs_q = [0.0f64; 4];
    let mut lhs_bound = 0.0f64;
    if active.is_empty() {
        // Degenerate: no negative factors; LHS = E[psi(X_Jc)] on the same
        // panel, so the margin vanishes identically.
        lhs_q = rhs_psi;
    } else {
        let ctx = SRepContext::build(sigma, &active_idx).map_err(BoundError::Moment)?;
        let positions = ctx.rest_positions(jc).map_err(BoundError::Moment)?;
        let gamma_norm: f64 = nus.iter().map(|&v| gamma(v)).product();
        let driver = SQuadDriver {
            ctx: &ctx,
            nus: &nus,
            tol: axis_tol(nus.len()).max(1e-6),
            cost_per_eval: (panel_rows / 4) as u64,
            needs_rest: true,
            fixed_panels: Some(fixed_panels),
        };
        let mut budget_ctr = EvalBudget::new(opts.budget);
        for (q, slot) in lhs_q.iter_mut().enumerate() {
            let mut inner = |rest: Option<&Matrix>| {
                psi_panel_mean(rest.expect("rest"), &positions, psi, &panel, q)
            };
            let out = driver.run(&mut budget_ctr, &mut inner).map_err(BoundError::Moment)?;
            *slot = out.value / gamma_norm;
            lhs_bound = lhs_bound.max(out.error / gamma_norm);
        }
    }

    // Paired margins per quarter tighten the comparison.
    let margins: Vec<f64> =
        (0..4).map(|q| e_neg.value * rhs_psi[q] - lhs_q[q]).collect();
    let margin = margins.iter().sum::<f64>() / 4.0;
    let margin_sd = (margins.iter().map(|m| (m - margin) * (m - margin)).sum::<f64>() / 3.0).sqrt();
    let rhs_psi_mean = rhs_psi.iter().sum::<f64>() / 4.0;
    let margin_err = margin_sd / 2.0 + e_neg.std_error * rhs_psi_mean.abs() + lhs_bound;

    let lhs_mean = lhs_q.iter().sum::<f64>() / 4.0;
    let lhs_sd = (lhs_q.iter().map(|v| (v - lhs_mean) * (v - lhs_mean)).sum::<f64>() / 3.0).sqrt();
    let mut lhs_est = MomentEstimate {
        value: lhs_mean,
        std_error: lhs_sd / 2.0 + lhs_bound,
        n_samples: panel_rows as u64,
        method: MomentMethod::SQuadrature,
        diagnostics: BTreeMap::new(),
    };
    lhs_est.diagnostics.insert("inner".into(), "mc".into());

    let rhs_sd =
        (rhs_psi.iter().map(|v| (v - rhs_psi_mean) * (v - rhs_psi_mean)).sum::<f64>() / 3.0).sqrt();
    let rhs_est = MomentEstimate {
        value: e_neg.value * rhs_psi_mean,
        std_error: e_neg.value.abs() * rhs_sd / 2.0 + e_neg.std_error * rhs_psi_mean.abs(),
        n_samples: panel_rows as u64,
        method: MomentMethod::McDirect,
        diagnostics: BTreeMap::new(),
    };

    let stats = MarginStats { margin, err: margin_err, stochastic: true };
    let (z, decision) = decide(&stats, verdict_scale(&lhs_est, &rhs_est), opts);
    let mut context = VerdictContext::new(CheckKind::UpperConvex, sigma, opts, seed);
    context.j = part.j().to_vec();
    context.nu = nu;
    context.psi = Some(psi.clone());
    context.n = panel_rows as u64;
    Ok(BoundVerdict {
        lhs: lhs_est,
        rhs: rhs_est,
        margin,
        z,
        decision,
        provenness: None,
        context,
    })
}

/// RHS of the AM-GM upper-bound corollary:
/// `E[prod_J |X_j|^(-2 nu_j)] * E[(sum_i w_i |X_i|)^(2 sum nu_i)]` with
/// `w_i = nu_i / sum nu_i`. Requires `sum_{i in Jc} nu_i >= 1/2`.
pub fn amgm_upper_bound_rhs(
    sigma: &CovMatrix,
    spec: &ExponentSpec,
    opts: &CheckOptions,
    seed: u64,
) -> Result<MomentEstimate, BoundError> {
    let jc_pairs = spec.jc_pairs();
    let total: f64 = jc_pairs.iter().map(|&(_, nu)| nu).sum();
    if total < 0.5 {
        return Err(BoundError::HypothesisViolated {
            reason: format!(
                "sum of complement exponents {total} below 1/2; use the open-case probe"
            ),
        });
    }
    let e_neg = negative_block_moment(sigma, spec, false, opts.budget, seed)?;

    if jc_pairs.len() == 1 {
        // Single positive index: the AM-GM functional reduces to the plain
        // univariate moment.
        let (i, nu) = jc_pairs[0];
        let factor = univariate_abs_moment(sigma.entry(i, i), nu)?;
        let mut est = MomentEstimate {
            value: e_neg.value * factor,
            std_error: e_neg.std_error * factor,
            n_samples: e_neg.n_samples,
            method: e_neg.method,
            diagnostics: e_neg.diagnostics,
        };
        est.diagnostics.insert("amgm_factor".into(), "closed_form".into());
        return Ok(est);
    }

    let weights: Vec<f64> = jc_pairs.iter().map(|&(_, nu)| nu / total).collect();
    let psi = ConvexFn::PowerOfWeightedAbsSum { weights, exponent: 2.0 * total };
    let jc = spec.part().jc();
    let sigma_jc = Matrix::from_fn(jc.len(), jc.len(), |r, c| sigma.entry(jc[r], jc[c]));
    let positions: Vec<usize> = (0..jc.len()).collect();
    let panel = ZPanel::draw(seed, domain::PSI_MC, INNER_PANEL_ROWS, jc.len());
    let mut quarters = [0.0f64; 4];
    for (q, slot) in quarters.iter_mut().enumerate() {
        *slot = psi_panel_mean(&sigma_jc, &positions, &psi, &panel, q)
            .map_err(BoundError::Moment)?;
    }
    let mean = quarters.iter().sum::<f64>() / 4.0;
    let sd = (quarters.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0).sqrt();
    let mut est = MomentEstimate {
        value: e_neg.value * mean,
        std_error: e_neg.value.abs() * sd / 2.0 + e_neg.std_error * mean.abs(),
        n_samples: INNER_PANEL_ROWS as u64,
        method: MomentMethod::McDirect,
        diagnostics: BTreeMap::new(),
    };
    est.diagnostics.insert("amgm_factor".into(), "mc_panel".into());
    Ok(est)
}

/// Check the AM-GM upper bound `E[prod neg * prod pos] <= amgm_upper_bound_rhs`.
pub fn check_upper_amgm(
    sigma: &CovMatrix,
    spec: &ExponentSpec,
    opts: &CheckOptions,
    seed: u64,
) -> Result<BoundVerdict, BoundError> {
    let rhs = amgm_upper_bound_rhs(sigma, spec, opts, seed)?;
    let lhs = auto_mixed_moment(sigma, spec, opts.budget, seed).map_err(BoundError::Moment)?;
    let stats = MarginStats::independent(rhs.value - lhs.value, &lhs, &rhs);
    let (z, decision) = decide(&stats, verdict_scale(&lhs, &rhs), opts);
    let context = VerdictContext::new(CheckKind::UpperAmgm, sigma, opts, seed).with_spec(spec);
    Ok(BoundVerdict { lhs, rhs, margin: stats.margin, z, decision, provenness: None, context })
}

/// Empirical probe of the open regime `0 < sum_{i in Jc} nu_i < 1/2`: tests
/// the product-form upper bound
/// `E[prod neg * prod pos] <= E[prod neg] * prod E[|X_i|^(2 nu_i)]`.
/// No theorem covers this case; verdicts are evidence, not verification,
/// and violation candidates here are findings rather than bugs.
pub fn probe_open_case(
    sigma: &CovMatrix,
    spec: &ExponentSpec,
    opts: &CheckOptions,
    seed: u64,
) -> Result<BoundVerdict, BoundError> {
    let jc_pairs = spec.jc_pairs();
    let total: f64 = jc_pairs.iter().map(|&(_, nu)| nu).sum();
    if !(total > 0.0 && total < 0.5) {
        return Err(BoundError::HypothesisViolated {
            reason: format!("sum of complement exponents {total} outside (0, 1/2)"),
        });
    }
    let e_neg = negative_block_moment(sigma, spec, false, opts.budget, seed)?;
    let mut factor = 1.0;
    for &(i, nu) in &jc_pairs {
        factor *= univariate_abs_moment(sigma.entry(i, i), nu)?;
    }
    let rhs = MomentEstimate {
        value: e_neg.value * factor,
        std_error: e_neg.std_error * factor,
        n_samples: e_neg.n_samples,
        method: e_neg.method,
        diagnostics: e_neg.diagnostics,
    };
    let lhs = auto_mixed_moment(sigma, spec, opts.budget, seed).map_err(BoundError::Moment)?;
    let stats = MarginStats::independent(rhs.value - lhs.value, &lhs, &rhs);
    let (z, decision) = decide(&stats, verdict_scale(&lhs, &rhs), opts);
    let context = VerdictContext::new(CheckKind::OpenProbe, sigma, opts, seed).with_spec(spec);
    Ok(BoundVerdict {
        lhs,
        rhs,
        margin: stats.margin,
        z,
        decision,
        provenness: Some(Provenness::Conjectural),
        context,
    })
}

/// Convex-order comparison: for `Y ~ N(0, Sigma1)`, `X ~ N(0, Sigma2)` with
/// `Sigma1` below `Sigma2` in the Loewner order, `E[psi(Y)] <= E[psi(X)]` for
/// every convex `psi`. Verified by paired common-random-number Monte Carlo.
pub fn convex_order_check(
    sigma1: &CovMatrix,
    sigma2: &CovMatrix,
    psi_family: &[ConvexFn],
    n: u64,
    seed: u64,
    opts: &CheckOptions,
) -> Result<Vec<BoundVerdict>, BoundError> {
    if sigma1.dim() != sigma2.dim() {
        return Err(BoundError::PreconditionFailed { reason: "dimension mismatch".into() });
    }
    if !loewner_leq(sigma1.matrix(), sigma2.matrix(), None).map_err(BoundError::Linalg)? {
        return Err(BoundError::PreconditionFailed {
            reason: "sigma1 is not below sigma2 in the Loewner order".into(),
        });
    }
    let d = sigma1.dim();
    for psi in psi_family {
        psi.validate(d)?;
    }
    let n = n.max(MC_MIN_SAMPLES);
    let chol1 = sigma1.chol().clone();
    let chol2 = sigma2.chol().clone();

    let mut verdicts = Vec::with_capacity(psi_family.len());
    for psi in psi_family {
        // paired accumulation: (psi(X), psi(Y), diff, diff^2, psiX^2, psiY^2)
        let n_batches = n.div_ceil(MC_BATCH);
        let partials: Vec<[f64; 6]> = (0..n_batches)
            .into_par_iter()
            .map(|b| {
                let mut rng = stream_rng(seed, domain::CONVEX_ORDER, b + 1);
                let count = if (b + 1) * MC_BATCH <= n { MC_BATCH } else { n - b * MC_BATCH };
                let mut acc = [0.0f64; 6];
                let mut z = vec![0.0f64; d];
                let mut x = vec![0.0f64; d];
                let mut y = vec![0.0f64; d];
                for _ in 0..count {
                    for zi in z.iter_mut() {
                        *zi = StandardNormal.sample(&mut rng);
                    }
                    for i in 0..d {
                        let mut vx = 0.0;
                        let mut vy = 0.0;
                        for k in 0..=i {
                            vx += chol2.get(i, k) * z[k];
                            vy += chol1.get(i, k) * z[k];
                        }
                        x[i] = vx;
                        y[i] = vy;
                    }
                    let px = psi.eval(&x);
                    let py = psi.eval(&y);
                    let diff = px - py;
                    acc[0] += px;
                    acc[1] += py;
                    acc[2] += diff;
                    acc[3] += diff * diff;
                    acc[4] += px * px;
                    acc[5] += py * py;
                }
                acc
            })
            .collect();
        let mut acc = [0.0f64; 6];
        for p in &partials {
            for (a, v) in acc.iter_mut().zip(p.iter()) {
                *a += v;
            }
        }
        let nf = n as f64;
        let mean_x = acc[0] / nf;
        let mean_y = acc[1] / nf;
        let margin = acc[2] / nf;
        let var_diff = ((acc[3] - nf * margin * margin) / (nf - 1.0)).max(0.0);
        let se_margin = (var_diff / nf).sqrt();
        let var_x = ((acc[4] - nf * mean_x * mean_x) / (nf - 1.0)).max(0.0);
        let var_y = ((acc[5] - nf * mean_y * mean_y) / (nf - 1.0)).max(0.0);

        let lhs = MomentEstimate {
            value: mean_y,
            std_error: (var_y / nf).sqrt(),
            n_samples: n,
            method: MomentMethod::McDirect,
            diagnostics: BTreeMap::new(),
        };
        let rhs = MomentEstimate {
            value: mean_x,
            std_error: (var_x / nf).sqrt(),
            n_samples: n,
            method: MomentMethod::McDirect,
            diagnostics: BTreeMap::new(),
        };
        let stats = MarginStats { margin, err: se_margin, stochastic: true };
        let (z, decision) = decide(&stats, verdict_scale(&lhs, &rhs), opts);
        let mut context = VerdictContext::new(CheckKind::ConvexOrder, sigma1, opts, seed);
        context.sigma2 = Some(sigma2.clone());
        context.psi = Some(psi.clone());
        context.n = n;
        verdicts.push(BoundVerdict {
            lhs,
            rhs,
            margin,
            z,
            decision,
            provenness: None,
            context,
        });
    }
    Ok(verdicts)
}

/// 2-d elliptical product inequality `E[f(|X|) g(|Y|)] <= E[f(|X|)] E[g(|Y|)]`
/// for nonincreasing `f`, nondecreasing `g`, and `(X, Y) = R Sigma^(1/2) U`
/// with `U` uniform on the unit circle.
pub fn elliptical_check(
    sigma: &CovMatrix,
    radial: &RadialSpec,
    f: &MonotoneFn,
    g: &MonotoneFn,
    n: u64,
    seed: u64,
    opts: &CheckOptions,
) -> Result<BoundVerdict, BoundError> {
    if sigma.dim() != 2 {
        return Err(BoundError::PreconditionFailed {
            reason: format!("elliptical check requires d = 2, got {}", sigma.dim()),
        });
    }
    radial.validate()?;
    f.validate()?;
    g.validate()?;
    if f.direction() == MonotoneDirection::NonDecreasing {
        return Err(BoundError::PreconditionFailed {
            reason: "f must be nonincreasing".into(),
        });
    }
    if g.direction() == MonotoneDirection::NonIncreasing {
        return Err(BoundError::PreconditionFailed {
            reason: "g must be nondecreasing".into(),
        });
    }
    // f is bounded by construction; the product moment exists iff E[g(|Y|)]
    // does, which needs radial moments above g's growth order.
    if g.growth_order() >= radial.max_finite_moment() {
        return Err(BoundError::MomentDiverges {
            reason: format!(
                "radial {:?} has finite moments only below order {}, g grows at order {}",
                radial,
                radial.max_finite_moment(),
                g.growth_order()
            ),
        });
    }
    let sqrt = sigma.matrix().sym_sqrt().map_err(BoundError::Linalg)?;
    let n = n.max(MC_MIN_SAMPLES);

    // accumulate sums of f, g, fg, f^2, g^2, (fg)^2, f*g, f*fg, g*fg
    let n_batches = n.div_ceil(MC_BATCH);
    let partials: Vec<[f64; 9]> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(seed, domain::ELLIPTICAL, b + 1);
            let count = if (b + 1) * MC_BATCH <= n { MC_BATCH } else { n - b * MC_BATCH };
            let mut acc = [0.0f64; 9];
            for _ in 0..count {
                let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                let u = [theta.cos(), theta.sin()];
                let r = radial.sample(&mut rng);
                let x = r * (sqrt.get(0, 0) * u[0] + sqrt.get(0, 1) * u[1]);
                let y = r * (sqrt.get(1, 0) * u[0] + sqrt.get(1, 1) * u[1]);
                let fv = f.eval(x.abs());
                let gv = g.eval(y.abs());
                let fg = fv * gv;
                acc[0] += fv;
                acc[1] += gv;
                acc[2] += fg;
                acc[3] += fv * fv;
                acc[4] += gv * gv;
                acc[5] += fg * fg;
                acc[6] += fv * gv;
                acc[7] += fv * fg;
                acc[8] += gv * fg;
            }
            acc
        })
        .collect();
    let mut acc = [0.0f64; 9];
    for p in &partials {
        for (a, v) in acc.iter_mut().zip(p.iter()) {
            *a += v;
        }
    }
    let nf = n as f64;
    let m_f = acc[0] / nf;
    let m_g = acc[1] / nf;
    let m_fg = acc[2] / nf;
    // sample covariances of (f, g, fg)
    let c_ff = ((acc[3] - nf * m_f * m_f) / (nf - 1.0)).max(0.0);
    let c_gg = ((acc[4] - nf * m_g * m_g) / (nf - 1.0)).max(0.0);
    let c_hh = ((acc[5] - nf * m_fg * m_fg) / (nf - 1.0)).max(0.0);
    let c_fg = (acc[6] - nf * m_f * m_g) / (nf - 1.0);
    let c_fh = (acc[7] - nf * m_f * m_fg) / (nf - 1.0);
    let c_gh = (acc[8] - nf * m_g * m_fg) / (nf - 1.0);

    // margin = m_f * m_g - m_fg; delta method with gradient (m_g, m_f, -1)
    let margin = m_f * m_g - m_fg;
    let var_margin = (m_g * m_g * c_ff + m_f * m_f * c_gg + c_hh + 2.0 * m_g * m_f * c_fg
        - 2.0 * m_g * c_fh
        - 2.0 * m_f * c_gh)
        .max(0.0);
    let se_margin = (var_margin / nf).sqrt();

    let lhs = MomentEstimate {
        value: m_fg,
        std_error: (c_hh / nf).sqrt(),
        n_samples: n,
        method: MomentMethod::McDirect,
        diagnostics: BTreeMap::new(),
    };
    let var_prod =
        (m_g * m_g * c_ff + m_f * m_f * c_gg + 2.0 * m_g * m_f * c_fg).max(0.0);
    let rhs = MomentEstimate {
        value: m_f * m_g,
        std_error: (var_prod / nf).sqrt(),
        n_samples: n,
        method: MomentMethod::McDirect,
        diagnostics: BTreeMap::new(),
    };
    let stats = MarginStats { margin, err: se_margin, stochastic: true };
    let (z, decision) = decide(&stats, verdict_scale(&lhs, &rhs), opts);
    let mut context = VerdictContext::new(CheckKind::Elliptical, sigma, opts, seed);
    context.radial = Some(*radial);
    context.f = Some(*f);
    context.g = Some(*g);
    context.n = n;
    Ok(BoundVerdict { lhs, rhs, margin, z, decision, provenness: None, context })
}

/// Pointwise proof surface of the elliptical inequality:
/// `H(u) = (f(|alpha.u|) - f(|T beta.u|)) * (g(|beta.u|) - g(|T alpha.u|))`
/// with `alpha`, `beta` the unit-normalized rows of the symmetric square root
/// of `Sigma` and `T` the quarter-turn rotation. `H(u) <= 0` on the whole
/// circle.
pub fn elliptical_pointwise_h(
    sigma: &CovMatrix,
    u: [f64; 2],
    f: &MonotoneFn,
    g: &MonotoneFn,
) -> Result<f64, BoundError> {
    if sigma.dim() != 2 {
        return Err(BoundError::PreconditionFailed {
            reason: format!("requires d = 2, got {}", sigma.dim()),
        });
    }
    f.validate()?;
    g.validate()?;
    let sqrt = sigma.matrix().sym_sqrt().map_err(BoundError::Linalg)?;
    let norm0 = (sqrt.get(0, 0).powi(2) + sqrt.get(0, 1).powi(2)).sqrt();
    let norm1 = (sqrt.get(1, 0).powi(2) + sqrt.get(1, 1).powi(2)).sqrt();
    let alpha = [sqrt.get(0, 0) / norm0, sqrt.get(0, 1) / norm0];
    let beta = [sqrt.get(1, 0) / norm1, sqrt.get(1, 1) / norm1];
    // quarter-turn: T(v) = (-v_y, v_x)
    let t_alpha = [-alpha[1], alpha[0]];
    let t_beta = [-beta[1], beta[0]];
    let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
    Ok((f.eval(dot(alpha, u).abs()) - f.eval(dot(t_beta, u).abs()))
        * (g.eval(dot(beta, u).abs()) - g.eval(dot(t_alpha, u).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_correlation;

    fn cov2(rho: f64) -> CovMatrix {
        CovMatrix::new(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap()
    }

    fn spec2(nu0: f64, nu1: f64) -> ExponentSpec {
        ExponentSpec::new(IndexPartition::new(2, &[0]).unwrap(), vec![nu0, nu1]).unwrap()
    }

    #[test]
    fn classifier_matches_known_cases() {
        assert_eq!(classify_gpi_pattern(&[]), Provenness::Proven);
        assert_eq!(classify_gpi_pattern(&[0.7]), Provenness::Proven);
        assert_eq!(classify_gpi_pattern(&[0.3, 2.7]), Provenness::Proven);
        assert_eq!(classify_gpi_pattern(&[1.0, 1.0, 1.0, 1.0]), Provenness::Proven);
        assert_eq!(classify_gpi_pattern(&[2.0, 0.3, 0.7]), Provenness::Proven);
        assert_eq!(classify_gpi_pattern(&[0.5, 1.5, 2.5]), Provenness::Proven);
        assert_eq!(classify_gpi_pattern(&[0.3, 0.4, 0.6]), Provenness::Conjectural);
        assert_eq!(classify_gpi_pattern(&[1.0, 1.0, 1.0, 0.9]), Provenness::Conjectural);
    }

    #[test]
    fn lower_rhs_frozen_example() {
        // rho = 0.5, J = {0}, nu = (1/4, 1): E|X|^(-1/2) * 0.75 * 1
        let rhs = lower_bound_rhs(&cov2(0.5), &spec2(0.25, 1.0), false, 2_000_000, 1).unwrap();
        let expect = 1.2900599809867793;
        assert!(
            ((rhs.value - expect) / expect).abs() <= 1e-6,
            "rhs {} expect {expect}",
            rhs.value
        );
    }

    #[test]
    fn lower_rhs_identity_is_product_of_univariates() {
        let sigma = CovMatrix::identity(3);
        let spec = ExponentSpec::new(
            IndexPartition::new(3, &[0]).unwrap(),
            vec![0.2, 1.0, 0.5],
        )
        .unwrap();
        let rhs = lower_bound_rhs(&sigma, &spec, false, 2_000_000, 1).unwrap();
        let expect = univariate_abs_moment(1.0, -0.2).unwrap()
            * univariate_abs_moment(1.0, 1.0).unwrap()
            * univariate_abs_moment(1.0, 0.5).unwrap();
        assert!(((rhs.value - expect) / expect).abs() <= 1e-6);
    }

    #[test]
    fn lower_rhs_recovers_all_ones_special_case() {
        // J = {0}, nu_i = 1 elsewhere: shrink factors are 1 - sigma_0i^2 /
        // (sigma_00 sigma_ii).
        let sigma = random_correlation(4, 3, 1e4).unwrap();
        let spec = ExponentSpec::new(
            IndexPartition::new(4, &[0]).unwrap(),
            vec![0.3, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let rhs = lower_bound_rhs(&sigma, &spec, true, 1_000_000, 1).unwrap();
        let mut expect = univariate_abs_moment(1.0, -0.3).unwrap();
        for i in 1..4 {
            let shrink = 1.0 - sigma.entry(0, i).powi(2) / (sigma.entry(0, 0) * sigma.entry(i, i));
            expect *= shrink * univariate_abs_moment(sigma.entry(i, i), 1.0).unwrap();
        }
        assert!(((rhs.value - expect) / expect).abs() <= 1e-9, "{} vs {expect}", rhs.value);
    }

    #[test]
    fn check_lower_bound_verified_on_frozen_instance() {
        let opts = CheckOptions::default();
        let verdict = check_lower_bound(&cov2(0.5), &spec2(0.25, 1.0), &opts, 1).unwrap();
        assert_eq!(verdict.decision, Decision::Verified, "{verdict:?}");
        assert_eq!(verdict.provenness, Some(Provenness::Proven));
        assert!(verdict.margin > 0.0);
    }

    #[test]
    fn check_lower_bound_equality_on_identity() {
        let sigma = CovMatrix::identity(3);
        let spec = ExponentSpec::new(
            IndexPartition::new(3, &[0]).unwrap(),
            vec![0.2, 1.0, 1.0],
        )
        .unwrap();
        let verdict = check_lower_bound(&sigma, &spec, &CheckOptions::default(), 1).unwrap();
        // both sides are analytically equal; the deterministic path verifies
        assert_eq!(verdict.decision, Decision::Verified, "{verdict:?}");
        assert!(verdict.margin.abs() <= 1e-6 * verdict.rhs.value);
    }

    #[test]
    fn upper_convex_constant_is_equality() {
        let psi = ConvexFn::constant(2.5);
        let part = IndexPartition::new(2, &[0]).unwrap();
        let verdict = check_upper_bound_convex(
            &cov2(0.8),
            &part,
            &[0.3],
            &psi,
            &CheckOptions::default(),
            1,
        )
        .unwrap();
        assert_eq!(verdict.decision, Decision::Verified, "{verdict:?}");
        assert!(verdict.margin.abs() <= 1e-9 * verdict.rhs.value.abs());
    }

    #[test]
    fn upper_convex_square_verified() {
        // psi(x) = x^2: LHS = E[|X1|^(-0.6) X2^2] <= E[|X1|^(-0.6)] E[X2^2]
        let psi = ConvexFn::PowerOfWeightedAbsSum { weights: vec![1.0], exponent: 2.0 };
        let part = IndexPartition::new(2, &[0]).unwrap();
        let verdict = check_upper_bound_convex(
            &cov2(0.8),
            &part,
            &[0.3],
            &psi,
            &CheckOptions::default(),
            1,
        )
        .unwrap();
        assert_eq!(verdict.decision, Decision::Verified, "{verdict:?}");
        assert!(verdict.margin > 0.0);
    }

    #[test]
    fn upper_convex_max_affine_verified() {
        let psi = ConvexFn::MaxAffine {
            pieces: vec![
                MaxAffinePiece { weights: vec![1.0, 0.0], offset: 0.0 },
                MaxAffinePiece { weights: vec![-1.0, 0.5], offset: 0.0 },
                MaxAffinePiece { weights: vec![0.0, 0.0], offset: 0.5 },
            ],
        };
        let sigma = random_correlation(4, 7, 1e4).unwrap();
        let part = IndexPartition::new(4, &[0, 1]).unwrap();
        let verdict = check_upper_bound_convex(
            &sigma,
            &part,
            &[0.2, 0.35],
            &psi,
            &CheckOptions::default(),
            2,
        )
        .unwrap();
        assert_ne!(verdict.decision, Decision::ViolationCandidate, "{verdict:?}");
    }

    #[test]
    fn amgm_rhs_single_index_reduces_to_univariate() {
        let rhs = amgm_upper_bound_rhs(&cov2(0.5), &spec2(0.25, 1.0), &CheckOptions::default(), 1)
            .unwrap();
        let expect = univariate_abs_moment(1.0, -0.25).unwrap();
        assert!(((rhs.value - expect) / expect).abs() <= 1e-6, "{} vs {expect}", rhs.value);
    }

    #[test]
    fn amgm_frozen_two_index_example() {
        // Sigma = I3, J = {0} nu = 0.2, Jc = {1,2} nu = (0.5, 0.5):
        // E[(0.5|A| + 0.5|B|)^2] = 0.5 + 1/pi
        let sigma = CovMatrix::identity(3);
        let spec = ExponentSpec::new(
            IndexPartition::new(3, &[0]).unwrap(),
            vec![0.2, 0.5, 0.5],
        )
        .unwrap();
        let rhs = amgm_upper_bound_rhs(&sigma, &spec, &CheckOptions::default(), 1).unwrap();
        let expect = univariate_abs_moment(1.0, -0.2).unwrap()
            * (0.5 + 1.0 / std::f64::consts::PI);
        // MC factor: allow 4 combined standard errors
        assert!(
            (rhs.value - expect).abs() <= 4.0 * rhs.std_error + 1e-9,
            "{} vs {expect} (se {})",
            rhs.value,
            rhs.std_error
        );
    }

    #[test]
    fn amgm_hypothesis_guard() {
        let sigma = CovMatrix::identity(2);
        let spec = spec2(0.2, 0.3); // sum nu_jc = 0.3 < 1/2
        let err = amgm_upper_bound_rhs(&sigma, &spec, &CheckOptions::default(), 1).unwrap_err();
        assert!(matches!(err, BoundError::HypothesisViolated { .. }));
    }

    #[test]
    fn check_upper_amgm_verified() {
        let verdict =
            check_upper_amgm(&cov2(0.6), &spec2(0.3, 1.0), &CheckOptions::default(), 3).unwrap();
        assert_eq!(verdict.decision, Decision::Verified, "{verdict:?}");
    }

    #[test]
    fn probe_open_case_runs_and_tags() {
        let verdict =
            probe_open_case(&cov2(0.9), &spec2(0.4, 0.05), &CheckOptions::default(), 5).unwrap();
        assert_eq!(verdict.provenness, Some(Provenness::Conjectural));
        // identity special case: equality
        let eq = probe_open_case(&CovMatrix::identity(2), &spec2(0.3, 0.1), &CheckOptions::default(), 5)
            .unwrap();
        assert_eq!(eq.decision, Decision::Verified, "{eq:?}");
        // hypothesis guard
        let err =
            probe_open_case(&cov2(0.5), &spec2(0.3, 1.0), &CheckOptions::default(), 5).unwrap_err();
        assert!(matches!(err, BoundError::HypothesisViolated { .. }));
    }

    #[test]
    fn convex_order_basic() {
        let s1 = CovMatrix::identity(2);
        let s2 = CovMatrix::new(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let psi = ConvexFn::PowerOfWeightedAbsSum { weights: vec![1.0, 0.0], exponent: 2.0 };
        let verdicts =
            convex_order_check(&s1, &s2, &[psi], 200_000, 1, &CheckOptions::default()).unwrap();
        assert_eq!(verdicts.len(), 1);
        assert_eq!(verdicts[0].decision, Decision::Verified, "{:?}", verdicts[0]);
        // E[X^2] jumps from 1 to 2
        assert!((verdicts[0].margin - 1.0).abs() < 0.05);
    }

    #[test]
    fn convex_order_precondition() {
        let s1 = CovMatrix::new(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let s2 = CovMatrix::identity(2);
        let psi = ConvexFn::constant(1.0);
        let err = convex_order_check(&s1, &s2, &[psi], 10_000, 1, &CheckOptions::default())
            .unwrap_err();
        assert!(matches!(err, BoundError::PreconditionFailed { .. }));
    }

    #[test]
    fn convex_order_linear_margin_zero() {
        // linear psi: means are equal (both centered), margin ~ 0
        let s1 = CovMatrix::identity(2);
        let s2 = CovMatrix::new(&[vec![1.5, 0.2], vec![0.2, 1.5]]).unwrap();
        for sign in [1.0, -1.0] {
            let psi = ConvexFn::MaxAffine {
                pieces: vec![MaxAffinePiece { weights: vec![sign, sign * 0.5], offset: 0.0 }],
            };
            let verdicts =
                convex_order_check(&s1, &s2, &[psi], 400_000, 2, &CheckOptions::default())
                    .unwrap();
            let v = &verdicts[0];
            assert!(v.margin.abs() <= 4.0 * (v.lhs.std_error + v.rhs.std_error) + 1e-3, "{v:?}");
        }
    }

    #[test]
    fn elliptical_check_gaussian_radial() {
        let verdict = elliptical_check(
            &cov2(0.6),
            &RadialSpec::Chi2,
            &MonotoneFn::ExpNeg { a: 1.0 },
            &MonotoneFn::Power { a: 1.0 },
            400_000,
            1,
            &CheckOptions::default(),
        )
        .unwrap();
        assert_eq!(verdict.decision, Decision::Verified, "{verdict:?}");
    }

    #[test]
    fn elliptical_constant_function_margin_zero() {
        let verdict = elliptical_check(
            &cov2(0.3),
            &RadialSpec::AbsNormal,
            &MonotoneFn::Constant { c: 3.0 },
            &MonotoneFn::Power { a: 1.0 },
            50_000,
            1,
            &CheckOptions::default(),
        )
        .unwrap();
        // f constant: E[f g] = c E[g] exactly
        assert!(verdict.margin.abs() <= 1e-12, "{verdict:?}");
        assert_eq!(verdict.decision, Decision::Verified);
    }

    #[test]
    fn elliptical_moment_guard() {
        let err = elliptical_check(
            &cov2(0.3),
            &RadialSpec::Pareto { alpha: 1.5 },
            &MonotoneFn::ExpNeg { a: 1.0 },
            &MonotoneFn::Power { a: 2.0 },
            10_000,
            1,
            &CheckOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, BoundError::MomentDiverges { .. }));
    }

    #[test]
    fn elliptical_role_guards() {
        let err = elliptical_check(
            &cov2(0.3),
            &RadialSpec::Chi2,
            &MonotoneFn::Power { a: 1.0 },
            &MonotoneFn::Power { a: 1.0 },
            10_000,
            1,
            &CheckOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, BoundError::PreconditionFailed { .. }));
    }

    #[test]
    fn pointwise_h_trivial_cases() {
        // orthonormal rows: first factor vanishes
        let sigma = CovMatrix::identity(2);
        let h = elliptical_pointwise_h(
            &sigma,
            [0.6, 0.8],
            &MonotoneFn::ExpNeg { a: 1.0 },
            &MonotoneFn::Power { a: 1.0 },
        )
        .unwrap();
        assert!(h.abs() <= 1e-14);

        // constant f: H = 0
        let h = elliptical_pointwise_h(
            &cov2(0.6),
            [1.0, 0.0],
            &MonotoneFn::Constant { c: 2.0 },
            &MonotoneFn::Power { a: 1.0 },
        )
        .unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn pointwise_h_nonpositive_on_grid() {
        let sigma = cov2(0.6);
        let f = MonotoneFn::ExpNeg { a: 1.0 };
        let g = MonotoneFn::Power { a: 1.0 };
        let mut max_h = f64::NEG_INFINITY;
        for k in 0..1024 {
            let theta = std::f64::consts::TAU * (k as f64) / 1024.0;
            let h = elliptical_pointwise_h(&sigma, [theta.cos(), theta.sin()], &f, &g).unwrap();
            max_h = max_h.max(h);
        }
        assert!(max_h <= 1e-12, "max H = {max_h}");
    }

    #[test]
    fn verdict_json_round_trip() {
        let verdict =
            check_lower_bound(&cov2(0.5), &spec2(0.25, 1.0), &CheckOptions::default(), 1).unwrap();
        let js = serde_json::to_string(&verdict).unwrap();
        let back: BoundVerdict = serde_json::from_str(&js).unwrap();
        assert_eq!(back, verdict);
        // infinite z survives the round trip
        let mut v2 = verdict.clone();
        v2.z = f64::INFINITY;
        let js = serde_json::to_string(&v2).unwrap();
        let back: BoundVerdict = serde_json::from_str(&js).unwrap();
        assert_eq!(back.z, f64::INFINITY);
    }

    #[test]
    fn lower_and_upper_never_both_violated() {
        // |Jc| = 1 with sum nu >= 1/2: the interval [lower, upper] is
        // nonempty, so at most one side can ever look violated.
        for seed in 0..5u64 {
            let sigma = random_correlation(3, 100 + seed, 1e4).unwrap();
            let spec = ExponentSpec::new(
                IndexPartition::new(3, &[0, 1]).unwrap(),
                vec![0.15, 0.3, 0.8],
            )
            .unwrap();
            let opts = CheckOptions::with_budget(400_000);
            let low = check_lower_bound(&sigma, &spec, &opts, seed).unwrap();
            let up = check_upper_amgm(&sigma, &spec, &opts, seed).unwrap();
            assert!(
                !(low.decision == Decision::ViolationCandidate
                    && up.decision == Decision::ViolationCandidate),
                "both violated: {low:?} {up:?}"
            );
        }
    }
}
