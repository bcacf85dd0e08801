//! Generalized estimators and the information they utilize.
//!
//! A generalized estimator `g(y, θ̲)` is a function on the parameter space for
//! each outcome; at every parameter point it must be mean zero and orthogonal
//! to the nuisance scores. Its information is `Λ(g) = (E∇gᵗ) V⁻¹ (E∇gᵗ)ᵗ`,
//! which by the score equation also equals `E(s gᵗ) V⁻¹ E(g sᵗ)`. Both routes
//! are computed where gradients are available and must agree.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::expectation::{Draws, ExpectationEngine};
use crate::family::{self, score, BernoulliSum, FisherInfo, ModelFamily, ParamPoint, TwoBinomial};
use crate::linalg::{self, Mat};

pub type EstimatorFn = Arc<dyn Fn(&[f64], &ParamPoint) -> Vec<f64> + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&[f64], &ParamPoint) -> Mat + Send + Sync>;

/// Relative tolerance for the direct vs covariance routes in exact mode.
pub const ROUTE_TOLERANCE: f64 = 1e-6;

/// Batches used for Monte Carlo standard errors of derived quantities.
pub const SE_BATCHES: usize = 20;

#[derive(Clone)]
pub struct GeneralizedEstimator {
    label: String,
    dim: usize,
    g: EstimatorFn,
    gradient: Option<GradientFn>,
    notes: Arc<Mutex<Vec<String>>>,
}

impl std::fmt::Debug for GeneralizedEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneralizedEstimator").field("label", &self.label).field("dim", &self.dim).finish()
    }
}

impl GeneralizedEstimator {
    pub fn new<F>(label: impl Into<String>, dim: usize, g: F) -> Self
    where
        F: Fn(&[f64], &ParamPoint) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { label: label.into(), dim, g: Arc::new(g), gradient: None, notes: Arc::default() }
    }

    /// Attach an analytic gradient `G[a][b] = ∂g_a/∂θ^b` over interest coordinates.
    pub fn with_gradient<F>(mut self, gradient: F) -> Self
    where
        F: Fn(&[f64], &ParamPoint) -> Mat + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, y: &[f64], theta: &ParamPoint) -> Vec<f64> {
        (self.g)(y, theta)
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    /// Diagnostics raised while evaluating (e.g. pseudo-inverse projections).
    pub fn notes(&self) -> Vec<String> {
        self.notes.lock().map(|n| n.clone()).unwrap_or_default()
    }

    /// Derivative of every component along parameter coordinate `j` (interest
    /// coordinates first, then nuisance) by Ridders' extrapolation of central
    /// differences. The starting step shrinks until all evaluations are finite.
    fn fd_partial(&self, y: &[f64], theta: &ParamPoint, j: usize) -> Vec<f64> {
        const SHRINK: f64 = 1.4;
        const TABLE: usize = 10;
        let x = theta.coords()[j];
        let at = |t: f64| self.eval(y, &theta.with_coord(j, x + t));
        let central = |h: f64| -> Option<Vec<f64>> {
            let (p, m) = (at(h), at(-h));
            let d: Vec<f64> = p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            d.iter().all(|v| v.is_finite()).then_some(d)
        };
        let mut h = 0.05 * x.abs().max(1.0);
        let mut first = central(h);
        while first.is_none() && h > 1e-8 {
            h /= 4.0;
            first = central(h);
        }
        let Some(first) = first else {
            return vec![f64::NAN; self.dim];
        };
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        let mut best = first.clone();
        let mut err = f64::INFINITY;
        let mut prev = vec![first];
        for _ in 1..TABLE {
            h /= SHRINK;
            let Some(d) = central(h) else { break };
            let mut row = vec![d];
            let mut fac = SHRINK * SHRINK;
            for k in 1..=prev.len() {
                let next: Vec<f64> =
                    row[k - 1].iter().zip(&prev[k - 1]).map(|(a, b)| (a * fac - b) / (fac - 1.0)).collect();
                fac *= SHRINK * SHRINK;
                let e = dist(&next, &row[k - 1]).max(dist(&next, &prev[k - 1]));
                if e <= err {
                    err = e;
                    best = next.clone();
                }
                row.push(next);
            }
            let last = prev.len();
            if dist(&row[last], &prev[last - 1]) >= 2.0 * err {
                break;
            }
            prev = row;
        }
        best
    }

    /// `G[a][b] = ∂g_a/∂θ^b` over the interest coordinates.
    pub fn gradient(&self, y: &[f64], theta: &ParamPoint) -> Mat {
        if let Some(grad) = &self.gradient {
            return grad(y, theta);
        }
        let k = theta.interest.len();
        let mut m = Mat::zeros(self.dim, k);
        for b in 0..k {
            let col = self.fd_partial(y, theta, b);
            for a in 0..self.dim {
                m[(a, b)] = col[a];
            }
        }
        m
    }

    /// `G̃[a][b] = ∂g_a/∂θ̃^b` over the nuisance coordinates.
    pub fn nuisance_gradient(&self, y: &[f64], theta: &ParamPoint) -> Mat {
        let k = theta.interest.len();
        let kn = theta.nuisance.len();
        let mut m = Mat::zeros(self.dim, kn);
        for b in 0..kn {
            let col = self.fd_partial(y, theta, k + b);
            for a in 0..self.dim {
                m[(a, b)] = col[a];
            }
        }
        m
    }
}

/// A candidate estimator that may fail mean-zero or nuisance orthogonality.
#[derive(Clone)]
pub struct PreEstimator {
    label: String,
    dim: usize,
    f: EstimatorFn,
}

impl PreEstimator {
    pub fn new<F>(label: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(&[f64], &ParamPoint) -> Vec<f64> + Send + Sync + 'static,
    {
        Self { label: label.into(), dim, f: Arc::new(f) }
    }

    /// A point estimator: a statistic that does not depend on the parameter.
    pub fn statistic<F>(label: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::new(label, dim, move |y, _| f(y))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, y: &[f64], theta: &ParamPoint) -> Vec<f64> {
        (self.f)(y, theta)
    }

    /// Use as-is, without orthogonalization.
    pub fn unchecked(self) -> GeneralizedEstimator {
        GeneralizedEstimator { label: self.label, dim: self.dim, g: self.f, gradient: None, notes: Arc::default() }
    }
}

/// Mean and nuisance projection subtracted from a pre-estimator at one point.
struct Correction {
    mean: Vec<f64>,
    /// `E[f s̃ᵀ] (E[s̃ s̃ᵀ])⁻¹`, `k × k'`.
    projection: Mat,
    pseudo_inverse: bool,
}

const CORRECTION_CACHE: usize = 64;
type CorrectionCache = VecDeque<(Vec<u64>, Arc<Correction>)>;

fn correction(engine: &ExpectationEngine, family: &dyn ModelFamily, f: &PreEstimator, theta: &ParamPoint) -> Result<Correction> {
    let k = theta.interest.len();
    let kn = theta.nuisance.len();
    let draws = engine.draws(family, theta)?;
    let values = draws.map(|y| {
        let mut v = f.eval(y, theta);
        if kn > 0 {
            v.extend_from_slice(&score(family, y, theta)?[k..]);
        }
        Ok(v)
    })?;
    let d = f.dim;
    let m = draws.weighted_mean(&values, |v| {
        let (fv, sn) = v.split_at(d);
        let mut out = fv.to_vec();
        for a in 0..d {
            out.extend(sn.iter().map(|s| fv[a] * s));
        }
        for i in 0..kn {
            out.extend(sn.iter().map(|s| sn[i] * s));
        }
        out
    });
    let mean = m.value[..d].to_vec();
    if kn == 0 {
        return Ok(Correction { mean, projection: Mat::zeros(d, 0), pseudo_inverse: false });
    }
    let cross = Mat::from_row_slice(d, kn, &m.value[d..d + d * kn]);
    let gram = Mat::from_row_slice(kn, kn, &m.value[d + d * kn..]);
    let (gram_inv, pseudo_inverse) = match linalg::inverse_pd(&gram) {
        Ok(inv) => (inv, false),
        Err(_) => (linalg::pinv_psd(&gram), true),
    };
    Ok(Correction { mean, projection: cross * gram_inv, pseudo_inverse })
}

/// `f⊥ = f − E f − P̃ f`: subtract the mean and the projection onto the span of
/// the nuisance scores. The correction is evaluated lazily at each requested
/// parameter point (and cached for recent points).
pub fn orthogonalize(engine: &ExpectationEngine, family: Arc<dyn ModelFamily>, f: &PreEstimator) -> GeneralizedEstimator {
    let engine = *engine;
    let pre = f.clone();
    let cache: Arc<Mutex<CorrectionCache>> = Arc::default();
    let notes: Arc<Mutex<Vec<String>>> = Arc::default();
    let label = format!("{}⊥", f.label);
    let notes_inner = notes.clone();
    let dim = f.dim;
    let g = move |y: &[f64], theta: &ParamPoint| -> Vec<f64> {
        let key = theta.key();
        let cached = cache.lock().ok().and_then(|c| c.iter().find(|(k, _)| *k == key).map(|(_, c)| c.clone()));
        let corr = match cached {
            Some(c) => c,
            None => match correction(&engine, family.as_ref(), &pre, theta) {
                Ok(c) => {
                    let c = Arc::new(c);
                    if c.pseudo_inverse {
                        if let Ok(mut n) = notes_inner.lock() {
                            let msg = "nuisance Gram matrix singular; pseudo-inverse projection used".to_string();
                            if !n.contains(&msg) {
                                n.push(msg);
                            }
                        }
                    }
                    if let Ok(mut cache) = cache.lock() {
                        if cache.len() >= CORRECTION_CACHE {
                            cache.pop_front();
                        }
                        cache.push_back((key, c.clone()));
                    }
                    c
                }
                Err(e) => {
                    if let Ok(mut n) = notes_inner.lock() {
                        n.push(format!("orthogonalization failed at {theta}: {e}"));
                    }
                    return vec![f64::NAN; dim];
                }
            },
        };
        let mut v = pre.eval(y, theta);
        for (x, m) in v.iter_mut().zip(&corr.mean) {
            *x -= m;
        }
        if corr.projection.ncols() > 0 {
            let k = theta.interest.len();
            let Ok(s) = score(family.as_ref(), y, theta) else {
                return vec![f64::NAN; dim];
            };
            let sn = &s[k..];
            for (a, x) in v.iter_mut().enumerate() {
                *x -= sn.iter().enumerate().map(|(j, sj)| corr.projection[(a, j)] * sj).sum::<f64>();
            }
        }
        v
    };
    GeneralizedEstimator { label, dim, g: Arc::new(g), gradient: None, notes }
}

/// The interest components of `∇ℓ`, as a pre-estimator.
pub fn score_pre_estimator(family: Arc<dyn ModelFamily>) -> PreEstimator {
    let k = family.dim_interest();
    PreEstimator::new("score", k, move |y, theta| match score(family.as_ref(), y, theta) {
        Ok(s) => s[..k].to_vec(),
        Err(_) => vec![f64::NAN; k],
    })
}

/// `s = (∇ℓ)⊥`. Without nuisance parameters this is the score itself.
pub fn orthogonalized_score(engine: &ExpectationEngine, family: Arc<dyn ModelFamily>) -> GeneralizedEstimator {
    if family.dim_nuisance() == 0 {
        return score_pre_estimator(family).unchecked();
    }
    let mut g = orthogonalize(engine, family.clone(), &score_pre_estimator(family));
    g.label = "score⊥".into();
    g
}

/// `ḡ = V^{-1/2} g` frozen at one parameter point.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub theta: ParamPoint,
    pub variance: Mat,
    pub inv_sqrt: Mat,
    estimator: GeneralizedEstimator,
}

impl Standardized {
    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        let g = nalgebra::DVector::from_vec(self.estimator.eval(y, &self.theta));
        (&self.inv_sqrt * g).iter().copied().collect()
    }
}

pub fn standardize(
    engine: &ExpectationEngine,
    family: &dyn ModelFamily,
    g: &GeneralizedEstimator,
    theta: &ParamPoint,
) -> Result<Standardized> {
    let draws = engine.draws(family, theta)?;
    let values = draws.map(|y| Ok(g.eval(y, theta)))?;
    let variance = outer_mean(&draws, &values, 0..draws.len(), g.dim);
    let inv_sqrt = linalg::inv_sqrt_pd(&variance)?;
    Ok(Standardized { theta: theta.clone(), variance, inv_sqrt, estimator: g.clone() })
}

fn outer_mean(draws: &Draws, values: &[Vec<f64>], range: std::ops::Range<usize>, d: usize) -> Mat {
    let m = draws.weighted_mean_range(values, range, |v| {
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            out.extend(v.iter().map(|x| v[i] * x));
        }
        out
    });
    Mat::from_row_slice(d, d, &m.value)
}

fn ser_mat<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    linalg::to_rows(m).serialize(s)
}

fn ser_opt_mat<S: Serializer>(m: &Option<Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
    m.as_ref().map(linalg::to_rows).serialize(s)
}

/// Information utilized by an estimator at one parameter point.
#[derive(Debug, Clone, Serialize)]
pub struct InformationReport {
    pub label: String,
    pub theta: ParamPoint,
    /// `Λ(g)` by the covariance route `E(s gᵗ) V⁻¹ E(g sᵗ)`.
    #[serde(serialize_with = "ser_mat")]
    pub lambda: Mat,
    /// `λ(g) = tr Λ(g)`.
    pub lambda_scalar: f64,
    /// `Λ(g)` by the slope route `(E∇gᵗ) V⁻¹ (E∇gᵗ)ᵗ`, when gradients are usable.
    #[serde(serialize_with = "ser_opt_mat")]
    pub lambda_direct: Option<Mat>,
    /// `I⊥` (equal to `I` without nuisance parameters).
    #[serde(serialize_with = "ser_mat")]
    pub fisher_bound: Mat,
    /// `(I⊥)^{-1/2} Λ (I⊥)^{-1/2}`.
    #[serde(serialize_with = "ser_mat")]
    pub efficiency: Mat,
    /// `R = E(s̄ ḡᵗ)`.
    #[serde(serialize_with = "ser_mat")]
    pub correlation: Mat,
    /// Information for the nuisance parameter, `Λ̃(g)`, by the slope route.
    #[serde(serialize_with = "ser_opt_mat")]
    pub nuisance_lambda: Option<Mat>,
    /// Largest `|E g|` component; should be ~0 for a valid estimator.
    pub mean_abs: f64,
    pub lambda_scalar_se: Option<f64>,
    pub efficiency_trace_se: Option<f64>,
    pub notes: Vec<String>,
}

/// Per-draw scores and estimator values; moments over index ranges.
struct DrawTable {
    draws: Draws,
    scores: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    k: usize,
    dim: usize,
}

struct Moments {
    fisher: FisherInfo,
    variance: Mat,
    /// `C[b][a] = E[s_b g_a]` with the orthogonalized score.
    score_cov: Mat,
    /// `E[(∇ℓ)_b g_a]` with the raw interest score.
    raw_score_cov: Mat,
    mean: Vec<f64>,
}

impl DrawTable {
    fn build(engine: &ExpectationEngine, family: &dyn ModelFamily, g: &GeneralizedEstimator, theta: &ParamPoint) -> Result<Self> {
        let draws = engine.draws(family, theta)?;
        let scores = draws.map(|y| score(family, y, theta))?;
        let values = draws.map(|y| Ok(g.eval(y, theta)))?;
        if values.iter().flatten().any(|v| !v.is_finite()) {
            let notes = g.notes().join("; ");
            return Err(Error::InvalidArgument(format!("estimator `{}` is not finite at {theta}: {notes}", g.label())));
        }
        Ok(Self { draws, scores, values, k: family.dim_interest(), dim: g.dim() })
    }

    fn moments(&self, range: std::ops::Range<usize>) -> Moments {
        let d = self.scores[0].len();
        let (k, gd) = (self.k, self.dim);
        let idx: Vec<usize> = range.clone().collect();
        let m = self.draws.weighted_mean_range(&idx, 0..idx.len(), |&i| {
            let (s, g) = (&self.scores[i], &self.values[i]);
            let mut out = Vec::with_capacity(d * d + gd * gd + d * gd + gd);
            for a in 0..d {
                out.extend(s.iter().map(|x| s[a] * x));
            }
            for a in 0..gd {
                out.extend(g.iter().map(|x| g[a] * x));
            }
            for a in 0..d {
                out.extend(g.iter().map(|x| s[a] * x));
            }
            out.extend_from_slice(g);
            out
        });
        let v = &m.value;
        let fisher = FisherInfo::from_full(Mat::from_row_slice(d, d, &v[..d * d]), k, None);
        let variance = Mat::from_row_slice(gd, gd, &v[d * d..d * d + gd * gd]);
        let sg = Mat::from_row_slice(d, gd, &v[d * d + gd * gd..d * d + gd * gd + d * gd]);
        let mean = v[d * d + gd * gd + d * gd..].to_vec();
        let raw_score_cov = sg.rows(0, k).into_owned();
        let score_cov = if d > k {
            match linalg::inverse_pd(&fisher.nuisance) {
                Ok(inv) => &raw_score_cov - &fisher.cross * inv * sg.rows(k, d - k),
                Err(_) => &raw_score_cov - &fisher.cross * linalg::pinv_psd(&fisher.nuisance) * sg.rows(k, d - k),
            }
        } else {
            raw_score_cov.clone()
        };
        Moments { fisher, variance, score_cov, raw_score_cov, mean }
    }
}

fn sandwich(c: &Mat, v_inv: &Mat) -> Mat {
    let l = c * v_inv * c.transpose();
    (&l + l.transpose()) * 0.5
}

pub fn information(
    engine: &ExpectationEngine,
    family: &dyn ModelFamily,
    g: &GeneralizedEstimator,
    theta: &ParamPoint,
) -> Result<InformationReport> {
    let table = DrawTable::build(engine, family, g, theta)?;
    let m = table.moments(0..table.draws.len());
    let bound = m.fisher.perp_or_err()?.clone();
    let v_inv = linalg::inverse_pd(&m.variance)?;
    let lambda = sandwich(&m.score_cov, &v_inv);
    let bound_inv_sqrt = linalg::inv_sqrt_pd(&bound)?;
    let efficiency = &bound_inv_sqrt * &lambda * &bound_inv_sqrt;
    let correlation = &bound_inv_sqrt * &m.score_cov * linalg::inv_sqrt_pd(&m.variance)?;
    let mut notes = g.notes();

    let lambda_direct = if engine.is_exact() || g.has_analytic_gradient() {
        let slope = mean_slope(&table.draws, g, theta, false);
        Some(sandwich(&slope, &v_inv))
    } else {
        None
    };
    if let (Some(direct), true) = (&lambda_direct, engine.is_exact()) {
        let discrepancy = linalg::max_abs(&(direct - &lambda));
        if discrepancy > ROUTE_TOLERANCE * linalg::max_abs(&lambda).max(1.0) {
            return Err(Error::ScoreEquationViolation { label: g.label().to_string(), discrepancy });
        }
    }
    let nuisance_lambda = if engine.is_exact() && !theta.nuisance.is_empty() {
        let slope = mean_slope(&table.draws, g, theta, true);
        Some(sandwich(&slope, &v_inv))
    } else {
        None
    };

    let (mut lambda_scalar_se, mut efficiency_trace_se) = (None, None);
    if table.draws.is_monte_carlo() {
        let mut lam = Vec::with_capacity(SE_BATCHES);
        let mut eff = Vec::with_capacity(SE_BATCHES);
        for range in table.draws.batches(SE_BATCHES) {
            let bm = table.moments(range);
            let (Ok(vi), Ok(bi)) = (linalg::inverse_pd(&bm.variance), bm.fisher.perp_or_err().and_then(linalg::inverse_pd))
            else {
                continue;
            };
            let l = sandwich(&bm.score_cov, &vi);
            eff.push((&bi * &l).trace());
            lam.push(l.trace());
        }
        lambda_scalar_se = batch_se(&lam);
        efficiency_trace_se = batch_se(&eff);
        if lam.len() < SE_BATCHES {
            notes.push(format!("{} of {SE_BATCHES} SE batches were degenerate", SE_BATCHES - lam.len()));
        }
    }

    Ok(InformationReport {
        label: g.label().to_string(),
        theta: theta.clone(),
        lambda_scalar: lambda.trace(),
        lambda,
        lambda_direct,
        fisher_bound: bound,
        efficiency,
        correlation,
        nuisance_lambda,
        mean_abs: m.mean.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        lambda_scalar_se,
        efficiency_trace_se,
        notes,
    })
}

/// Standard error of the mean of batch estimates.
fn batch_se(values: &[f64]) -> Option<f64> {
    let b = values.len();
    if b < 2 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / b as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    Some((var / b as f64).sqrt())
}

/// `E[∇gᵗ]` (or `E[∇̃gᵗ]` when `nuisance`), entry `[b][a] = E ∂g_a/∂θ^b`.
fn mean_slope(draws: &Draws, g: &GeneralizedEstimator, theta: &ParamPoint, nuisance: bool) -> Mat {
    let grads: Vec<Mat> = draws
        .points()
        .iter()
        .map(|y| if nuisance { g.nuisance_gradient(y, theta) } else { g.gradient(y, theta) })
        .collect();
    let (rows, cols) = (grads[0].nrows(), grads[0].ncols());
    let m = draws.weighted_mean(&grads, |gm| gm.iter().copied().collect());
    Mat::from_column_slice(rows, cols, &m.value).transpose()
}

/// `E(∇gᵗ) + E((∇ℓ) gᵗ)`. Zero for every generalized estimator; for a
/// pre-estimator that is not mean zero it equals `∇ E(fᵗ)`.
pub fn check_score_equation(
    engine: &ExpectationEngine,
    family: &dyn ModelFamily,
    g: &GeneralizedEstimator,
    theta: &ParamPoint,
) -> Result<Mat> {
    let table = DrawTable::build(engine, family, g, theta)?;
    let m = table.moments(0..table.draws.len());
    Ok(mean_slope(&table.draws, g, theta, false) + m.raw_score_cov)
}

/// Λ-efficiency as a squared correlation matrix with batch standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyEstimate {
    #[serde(serialize_with = "ser_mat")]
    pub efficiency: Mat,
    #[serde(serialize_with = "ser_mat")]
    pub correlation: Mat,
    /// Elementwise standard errors of `efficiency` (Monte Carlo only).
    #[serde(serialize_with = "ser_opt_mat")]
    pub se: Option<Mat>,
    pub replications: usize,
}

impl EfficiencyEstimate {
    /// The scalar efficiency for one-dimensional estimators.
    pub fn scalar(&self) -> f64 {
        self.efficiency[(0, 0)]
    }

    pub fn scalar_se(&self) -> Option<f64> {
        self.se.as_ref().map(|s| s[(0, 0)])
    }
}

/// Weighted sample correlation matrix `Σ_ss^{-1/2} Σ_sg Σ_gg^{-1/2}`.
fn correlation_matrix(weights: &[f64], s: &[Vec<f64>], g: &[Vec<f64>], range: std::ops::Range<usize>) -> Result<Mat> {
    let (ks, kg) = (s[range.start].len(), g[range.start].len());
    let wsum: f64 = weights[range.clone()].iter().sum();
    let mut ms = vec![0.0; ks];
    let mut mg = vec![0.0; kg];
    for i in range.clone() {
        let w = weights[i] / wsum;
        ms.iter_mut().zip(&s[i]).for_each(|(m, x)| *m += w * x);
        mg.iter_mut().zip(&g[i]).for_each(|(m, x)| *m += w * x);
    }
    let mut css = Mat::zeros(ks, ks);
    let mut cgg = Mat::zeros(kg, kg);
    let mut csg = Mat::zeros(ks, kg);
    for i in range {
        let w = weights[i] / wsum;
        let ds: Vec<f64> = s[i].iter().zip(&ms).map(|(x, m)| x - m).collect();
        let dg: Vec<f64> = g[i].iter().zip(&mg).map(|(x, m)| x - m).collect();
        for a in 0..ks {
            for b in 0..ks {
                css[(a, b)] += w * ds[a] * ds[b];
            }
            for b in 0..kg {
                csg[(a, b)] += w * ds[a] * dg[b];
            }
        }
        for a in 0..kg {
            for b in 0..kg {
                cgg[(a, b)] += w * dg[a] * dg[b];
            }
        }
    }
    let gi = linalg::inv_sqrt_pd(&cgg).map_err(|_| Error::DegenerateVariance("estimator".into()))?;
    let si = linalg::inv_sqrt_pd(&css).map_err(|_| Error::DegenerateVariance("score".into()))?;
    Ok(si * csg * gi)
}

/// Efficiency `R Rᵗ` from paired score and estimator values with weights;
/// standard errors from `SE_BATCHES` contiguous batches when `batches` is set.
pub fn correlation_efficiency(weights: &[f64], scores: &[Vec<f64>], values: &[Vec<f64>], batches: bool) -> Result<EfficiencyEstimate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::DegenerateVariance("fewer than two draws".into()));
    }
    let r = correlation_matrix(weights, scores, values, 0..n)?;
    let efficiency = &r * r.transpose();
    let se = if batches && n >= 2 * SE_BATCHES {
        let per: Vec<Mat> = (0..SE_BATCHES)
            .filter_map(|b| {
                let range = (b * n / SE_BATCHES)..((b + 1) * n / SE_BATCHES);
                correlation_matrix(weights, scores, values, range).ok().map(|r| &r * r.transpose())
            })
            .collect();
        let (rows, cols) = (efficiency.nrows(), efficiency.ncols());
        let mut se = Mat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let v: Vec<f64> = per.iter().map(|m| m[(i, j)]).collect();
                se[(i, j)] = batch_se(&v).unwrap_or(f64::NAN);
            }
        }
        Some(se)
    } else {
        None
    };
    Ok(EfficiencyEstimate { efficiency, correlation: r, se, replications: n })
}

/// Estimates `Eff^Λ(g) = R Rᵗ` with `R = corr(s, g)` over the engine's draws.
/// Sample correlation is invariant to centering, so a raw point estimator may
/// be passed in place of its orthogonalization.
pub fn efficiency_mc(
    engine: &ExpectationEngine,
    family: &dyn ModelFamily,
    g: &GeneralizedEstimator,
    theta: &ParamPoint,
) -> Result<EfficiencyEstimate> {
    let table = DrawTable::build(engine, family, g, theta)?;
    let k = table.k;
    let scores: Vec<Vec<f64>> = if table.scores[0].len() > k {
        let m = table.moments(0..table.draws.len());
        let proj = &m.fisher.cross * linalg::pinv_psd(&m.fisher.nuisance);
        table
            .scores
            .iter()
            .map(|s| {
                (0..k)
                    .map(|a| s[a] - (0..s.len() - k).map(|j| proj[(a, j)] * s[k + j]).sum::<f64>())
                    .collect()
            })
            .collect()
    } else {
        table.scores.clone()
    };
    correlation_efficiency(table.draws.weights(), &scores, &table.values, table.draws.is_monte_carlo())
        .map_err(|e| match e {
            Error::DegenerateVariance(_) => Error::DegenerateVariance(g.label().to_string()),
            other => other,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: u32,
    pub lambda: f64,
    /// `Λ(g_(n)) / (n Λ(g_(1)))`.
    pub ratio: f64,
}

/// Tabulates `Λ(g_(n))` and its ratio to `n Λ(g_(1))`.
pub fn n_scaling_check<FB, GB>(
    engine: &ExpectationEngine,
    family_builder: FB,
    estimator_builder: GB,
    n_list: &[u32],
    theta: &ParamPoint,
) -> Result<Vec<ScalingRow>>
where
    FB: Fn(u32) -> Result<Arc<dyn ModelFamily>>,
    GB: Fn(&Arc<dyn ModelFamily>, u32) -> Result<GeneralizedEstimator>,
{
    let lambda_at = |n: u32| -> Result<f64> {
        let family = family_builder(n)?;
        let g = estimator_builder(&family, n)?;
        Ok(information(engine, family.as_ref(), &g, theta)?.lambda_scalar)
    };
    let base = lambda_at(1)?;
    n_list
        .iter()
        .map(|&n| {
            let lambda = if n == 1 { base } else { lambda_at(n)? };
            Ok(ScalingRow { n, lambda, ratio: lambda / (n as f64 * base) })
        })
        .collect()
}

/// Write-once collection of estimators evaluated together.
#[derive(Debug, Clone, Default)]
pub struct EstimatorRegistry {
    entries: Vec<GeneralizedEstimator>,
}

impl EstimatorRegistry {
    pub fn new(entries: Vec<GeneralizedEstimator>) -> Self {
        Self { entries }
    }

    pub fn iter(&self) -> impl Iterator<Item = &GeneralizedEstimator> {
        self.entries.iter()
    }

    pub fn get(&self, label: &str) -> Option<&GeneralizedEstimator> {
        self.entries.iter().find(|g| g.label() == label)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Score plus three orthogonalized point estimators for the binomial count:
/// the proportion `y/n`, the shrinkage estimate `(y+2)/(n+4)`, and the coarse
/// sign estimate `sign(y/n − 1/2)`.
pub fn bernoulli_suite(engine: &ExpectationEngine, n: u32) -> Result<EstimatorRegistry> {
    let family: Arc<dyn ModelFamily> = Arc::new(BernoulliSum::new(n)?);
    let nf = n as f64;
    let pres = [
        PreEstimator::statistic("proportion", 1, move |y| vec![y[0] / nf]),
        PreEstimator::statistic("plus-two shrinkage", 1, move |y| vec![(y[0] + 2.0) / (nf + 4.0)]),
        PreEstimator::statistic("sign", 1, move |y| vec![(y[0] / nf - 0.5).signum() * ((y[0] / nf - 0.5) != 0.0) as u8 as f64]),
    ];
    let mut entries = vec![orthogonalized_score(engine, family.clone())];
    entries.extend(pres.iter().map(|f| orthogonalize(engine, family.clone(), f)));
    Ok(EstimatorRegistry::new(entries))
}

/// `(y+2)/(n+4) − p` used directly: biased, hence not mean zero, hence not a
/// generalized estimator. Its score-equation residual is `−4/(n+4)`.
pub fn biased_bernoulli_estimator(n: u32) -> GeneralizedEstimator {
    let nf = n as f64;
    GeneralizedEstimator::new("biased plus-two (unorthogonalized)", 1, move |y, theta| {
        vec![(y[0] + 2.0) / (nf + 4.0) - theta.interest[0]]
    })
}

/// Orthogonalized score and orthogonalized difference of proportions for the
/// two-binomial family.
pub fn two_binomial_suite(engine: &ExpectationEngine, n1: u32, n2: u32) -> Result<EstimatorRegistry> {
    let family: Arc<dyn ModelFamily> = Arc::new(TwoBinomial::new(n1, n2)?);
    let (a, b) = (n1 as f64, n2 as f64);
    let diff = PreEstimator::statistic("difference of proportions", 1, move |y| vec![y[0] / a - y[1] / b]);
    Ok(EstimatorRegistry::new(vec![
        orthogonalized_score(engine, family.clone()),
        orthogonalize(engine, family, &diff),
    ]))
}

/// Re-export for callers assembling reports by hand.
pub use family::fisher_info;
