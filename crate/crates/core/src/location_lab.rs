//! Monte Carlo comparison of location estimators (sample mean, median and the
//! t₃ maximum likelihood estimate) under normal and t₃ data, with ζ-score
//! curves and Λ-efficiencies.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::correlation_efficiency;
use crate::expectation::ExpectationEngine;
use crate::family::{IidLocation, LocationKernel, ModelFamily, ParamPoint};
use crate::rng;
use crate::roots::safeguarded_newton;

pub const T3_TOLERANCE: f64 = 1e-10;
pub const T3_MAX_ITER: usize = 200;

/// Largest tolerated fraction of replications whose t₃ fit failed.
pub const MAX_FAILURE_RATE: f64 = 0.001;

/// `ζ = log₂(2 Pr(X ≤ x))` when that tail is at most 1/2, else
/// `−log₂(2 Pr(X ≥ x))`. A zero tail gives `∓∞`.
pub fn zeta(tail_low: f64, tail_high: f64) -> f64 {
    if tail_low <= 0.5 {
        (2.0 * tail_low).log2()
    } else {
        -(2.0 * tail_high).log2()
    }
}

/// Quantile with linear interpolation between order statistics of `sorted`.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let h = (m - 1) as f64 * prob.clamp(0.0, 1.0);
    let i = h.floor() as usize;
    if i + 1 >= m {
        return sorted[m - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

fn sorted_copy(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn median(x: &[f64]) -> f64 {
    let s = sorted_copy(x);
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

/// `Σ 4(x_i − a)/(3 + (x_i − a)²)` and its derivative in `a`.
pub fn t3_score(x: &[f64], a: f64) -> (f64, f64) {
    x.iter().fold((0.0, 0.0), |(f, df), xi| {
        let r = xi - a;
        let d = 3.0 + r * r;
        (f + 4.0 * r / d, df - 4.0 * (3.0 - r * r) / (d * d))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct T3Fit {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Root of the t₃ location score by safeguarded Newton from the median. The
/// bracket starts at the median ± IQR and doubles until the score changes
/// sign. On failure the median is returned with `converged = false`.
pub fn t3_mle(x: &[f64]) -> T3Fit {
    let s = sorted_copy(x);
    let med = median(x);
    let iqr = quantile(&s, 0.75) - quantile(&s, 0.25);
    let mut half = if iqr > 0.0 { iqr } else { 0.5 };
    let fail = T3Fit { value: med, converged: false, iterations: 0 };
    if t3_score(x, med).0 == 0.0 {
        return T3Fit { value: med, converged: true, iterations: 0 };
    }
    let mut bracket = None;
    for _ in 0..200 {
        let (lo, hi) = (med - half, med + half);
        if t3_score(x, lo).0 > 0.0 && t3_score(x, hi).0 < 0.0 {
            bracket = Some((lo, hi));
            break;
        }
        half *= 2.0;
        if !half.is_finite() {
            break;
        }
    }
    let Some((lo, hi)) = bracket else {
        return fail;
    };
    let r = safeguarded_newton(|a| t3_score(x, a), med, lo, hi, T3_TOLERANCE, T3_MAX_ITER);
    if r.converged && r.root.is_finite() {
        // polish to full precision; keep a step only if it shrinks the score
        let mut a = r.root;
        let mut fa = t3_score(x, a);
        for _ in 0..4 {
            let next = a - fa.0 / fa.1;
            if !(next > lo && next < hi) {
                break;
            }
            let fn_ = t3_score(x, next);
            if fn_.0.abs() >= fa.0.abs() {
                break;
            }
            (a, fa) = (next, fn_);
        }
        T3Fit { value: a, converged: true, iterations: r.iterations }
    } else {
        T3Fit { iterations: r.iterations, ..fail }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimates {
    pub mean: f64,
    pub median: f64,
    pub t3_mle: f64,
    /// False when the t₃ fit fell back to the median.
    pub t3_converged: bool,
}

pub fn estimators(sample: &[f64]) -> Result<Estimates> {
    if sample.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    let fit = t3_mle(sample);
    Ok(Estimates { mean: mean(sample), median: median(sample), t3_mle: fit.value, t3_converged: fit.converged })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFamily {
    Normal,
    T3,
}

impl DataFamily {
    pub fn kernel(self) -> LocationKernel {
        match self {
            DataFamily::Normal => LocationKernel::Normal,
            DataFamily::T3 => LocationKernel::StudentT3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DataFamily::Normal => "normal",
            DataFamily::T3 => "t3",
        }
    }

    /// Alternate sample sizes for the mean's overlay curves.
    pub fn default_overlay_sizes(self) -> Vec<u32> {
        match self {
            DataFamily::Normal => vec![7, 9],
            DataFamily::T3 => vec![15, 17],
        }
    }
}

impl std::str::FromStr for DataFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(DataFamily::Normal),
            "t3" => Ok(DataFamily::T3),
            other => Err(Error::InvalidArgument(format!("unknown data family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRunConfig {
    pub data_family: DataFamily,
    pub n: u32,
    pub reps: usize,
    pub seed: u64,
    /// Multiplies every data point before estimation.
    pub rescale: Option<f64>,
    /// Sample sizes for additional mean archives.
    pub n_overlays: Vec<u32>,
    /// Rescaling factors for additional mean archives at size `n`.
    pub rescale_overlays: Vec<f64>,
}

impl McRunConfig {
    /// The published configuration: `n = 10` with the family's overlays and
    /// the mean rescaled by `1.50^{-1/2}` and `1.78^{-1/2}`.
    pub fn standard(data_family: DataFamily, reps: usize, seed: u64) -> Self {
        Self {
            data_family,
            n: 10,
            reps,
            seed,
            rescale: None,
            n_overlays: data_family.default_overlay_sizes(),
            rescale_overlays: vec![1.50f64.powf(-0.5), 1.78f64.powf(-0.5)],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_overlays.contains(&0) {
            return Err(Error::InvalidArgument("sample sizes must be positive".into()));
        }
        if self.reps < 2 {
            return Err(Error::InvalidArgument("need at least two replications".into()));
        }
        if self.rescale.iter().chain(&self.rescale_overlays).any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument("rescale factors must be positive".into()));
        }
        Ok(())
    }
}

/// Replicated values of one estimator, in replication order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Archive {
    pub label: String,
    pub values: Vec<f64>,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl Archive {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        let sorted = sorted_copy(&values);
        Self { label: label.into(), values, sorted }
    }

    pub fn quantile(&self, prob: f64) -> f64 {
        quantile(&self.sorted, prob)
    }

    /// `(Pr(X ≤ x), Pr(X ≥ x))` under the empirical law; ties count in both.
    pub fn tails(&self, x: f64) -> (f64, f64) {
        let m = self.sorted.len() as f64;
        let le = self.sorted.partition_point(|v| *v <= x) as f64;
        let lt = self.sorted.partition_point(|v| *v < x) as f64;
        (le / m, (m - lt) / m)
    }

    pub fn zeta_at(&self, x: f64) -> f64 {
        let (lo, hi) = self.tails(x);
        zeta(lo, hi)
    }

    pub fn variance(&self) -> f64 {
        let m = mean(&self.values);
        self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (self.values.len() - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub estimator: String,
    pub data_family: DataFamily,
    /// `corr²(score, estimator)` under the data-generating family.
    pub eff: f64,
    pub se: f64,
    /// `Var(mean) / Var(estimator)`.
    pub var_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub config: McRunConfig,
    /// mean, median and t₃ MLE at size `n`.
    pub archives: Vec<Archive>,
    /// Mean archives at overlay sizes and rescalings.
    pub overlays: Vec<Archive>,
    pub efficiency: Vec<EfficiencyRow>,
    pub t3_failures: usize,
}

impl Comparison {
    pub fn archive(&self, label: &str) -> Option<&Archive> {
        self.archives.iter().chain(&self.overlays).find(|a| a.label == label)
    }
}

fn draw_samples(family: DataFamily, n: u32, reps: usize, seed: u64, label: &str) -> Result<Vec<Vec<f64>>> {
    let fam = IidLocation::new(n, family.kernel())?;
    let engine = ExpectationEngine::monte_carlo(reps, seed).with_stream(rng::tag(label));
    Ok(engine.draws(&fam, &ParamPoint::scalar(0.0))?.points().to_vec())
}

/// Runs the replications and summarizes efficiencies and variance ratios.
pub fn run_comparison(config: &McRunConfig) -> Result<Comparison> {
    config.validate()?;
    let fam_label = config.data_family.label();
    let mut samples = draw_samples(config.data_family, config.n, config.reps, config.seed, &format!("{fam_label}/n{}", config.n))?;
    if let Some(r) = config.rescale {
        samples.iter_mut().flatten().for_each(|x| *x *= r);
    }
    let family: Arc<dyn ModelFamily> = Arc::new(IidLocation::new(config.n, config.data_family.kernel())?);
    let at_zero = ParamPoint::scalar(0.0);
    let est: Vec<Estimates> = {
        use rayon::prelude::*;
        samples.par_iter().map(|s| estimators(s)).collect::<Result<_>>()?
    };
    let t3_failures = est.iter().filter(|e| !e.t3_converged).count();
    if t3_failures as f64 > MAX_FAILURE_RATE * config.reps as f64 {
        return Err(Error::TooManyFailures { failed: t3_failures, total: config.reps });
    }
    let archives = vec![
        Archive::new("mean", est.iter().map(|e| e.mean).collect()),
        Archive::new("median", est.iter().map(|e| e.median).collect()),
        Archive::new("t3-mle", est.iter().map(|e| e.t3_mle).collect()),
    ];
    let scores: Vec<Vec<f64>> = samples
        .iter()
        .map(|y| family.analytic_score(y, &at_zero).ok_or_else(|| Error::InvalidArgument("location score".into())))
        .collect::<Result<_>>()?;
    let weights = vec![1.0 / config.reps as f64; config.reps];
    let var_mean = archives[0].variance();
    let mut efficiency = Vec::new();
    for a in &archives {
        let values: Vec<Vec<f64>> = a.values.iter().map(|v| vec![*v]).collect();
        let e = correlation_efficiency(&weights, &scores, &values, true)
            .map_err(|_| Error::DegenerateVariance(a.label.clone()))?;
        efficiency.push(EfficiencyRow {
            estimator: a.label.clone(),
            data_family: config.data_family,
            eff: e.scalar(),
            se: e.scalar_se().unwrap_or(f64::NAN),
            var_ratio: var_mean / a.variance(),
        });
    }
    let mut overlays = Vec::new();
    for &m in &config.n_overlays {
        let s = draw_samples(config.data_family, m, config.reps, config.seed, &format!("{fam_label}/n{m}/overlay"))?;
        overlays.push(Archive::new(format!("mean n={m}"), s.iter().map(|x| mean(x)).collect()));
    }
    for &r in &config.rescale_overlays {
        overlays.push(Archive::new(format!("mean rescaled {r:.6}"), archives[0].values.iter().map(|v| v * r).collect()));
    }
    Ok(Comparison { config: config.clone(), archives, overlays, efficiency, t3_failures })
}

/// Probabilities `.005, .015, …, .995`.
pub fn zeta_probs() -> Vec<f64> {
    (0..99).map(|i| 0.005 + 0.01 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaCurve {
    pub estimator_label: String,
    pub reference_quantile_probs: Vec<f64>,
    pub reference_zeta: Vec<f64>,
    pub comparison_zeta: Vec<f64>,
    /// Indices dropped because a tail was empty.
    pub dropped: Vec<usize>,
    /// Least-squares slope of comparison on reference ζ.
    pub slope: f64,
}

/// ζ-curves of each comparison archive against the reference's quantiles.
pub fn zeta_curves(reference: &Archive, comparisons: &[&Archive]) -> Vec<ZetaCurve> {
    let probs = zeta_probs();
    let points: Vec<f64> = probs.iter().map(|p| reference.quantile(*p)).collect();
    comparisons
        .iter()
        .map(|comp| {
            let (mut rz, mut cz, mut keep, mut dropped) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (i, &x) in points.iter().enumerate() {
                let (r, c) = (reference.zeta_at(x), comp.zeta_at(x));
                if r.is_finite() && c.is_finite() {
                    rz.push(r);
                    cz.push(c);
                    keep.push(probs[i]);
                } else {
                    dropped.push(i);
                }
            }
            let slope = ls_slope(&rz, &cz);
            ZetaCurve {
                estimator_label: comp.label.clone(),
                reference_quantile_probs: keep,
                reference_zeta: rz,
                comparison_zeta: cz,
                dropped,
                slope,
            }
        })
        .collect()
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (sa, sb) = (sorted_copy(a), sorted_copy(b));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < sa.len() && j < sb.len() {
        let x = sa[i].min(sb[j]);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((na + nb) as f64 / (na as f64 * nb as f64)).sqrt()
}
