use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Cauchy, Distribution, StandardNormal};
use statrs::function::factorial::ln_binomial;

use super::{FiniteSupport, ModelFamily, ParamPoint, Support};
use crate::error::{Error, Result};

pub(crate) fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

pub(crate) fn ln_choose_table(n: u32) -> Vec<f64> {
    (0..=n).map(|k| ln_binomial(n as u64, k as u64)).collect()
}

fn positive_size(n: u32, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument(format!("{what} must be positive")));
    }
    Ok(())
}

/// `x·ln(p)` with the `0·ln 0 = 0` convention.
pub(crate) fn xlny(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * p.ln()
    }
}

/// Number of successes in `n` Bernoulli trials, parameterized by `p ∈ (0,1)`.
#[derive(Debug, Clone)]
pub struct BernoulliSum {
    n: u32,
    support: Support,
    ln_choose: Vec<f64>,
}

impl BernoulliSum {
    pub fn new(n: u32) -> Result<Self> {
        positive_size(n, "n")?;
        let support = Support::Finite(FiniteSupport::new((0..=n).map(|y| vec![y as f64]).collect())?);
        Ok(Self { n, support, ln_choose: ln_choose_table(n) })
    }

    pub fn n(&self) -> u32 {
        self.n
    }
}

impl ModelFamily for BernoulliSum {
    fn name(&self) -> String {
        format!("bernoulli-sum(n={})", self.n)
    }

    fn dim_interest(&self) -> usize {
        1
    }

    fn support(&self) -> &Support {
        &self.support
    }

    fn in_domain(&self, theta: &ParamPoint) -> bool {
        theta.interest.len() == 1 && theta.interest[0] > 0.0 && theta.interest[0] < 1.0
    }

    fn log_density(&self, y: &[f64], theta: &ParamPoint) -> f64 {
        let p = theta.interest[0];
        let y = y[0];
        let n = self.n as f64;
        if y < 0.0 || y > n || y.fract() != 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_choose[y as usize] + xlny(y, p) + (n - y) * (-p).ln_1p()
    }

    fn analytic_score(&self, y: &[f64], theta: &ParamPoint) -> Option<Vec<f64>> {
        let p = theta.interest[0];
        Some(vec![(y[0] - self.n as f64 * p) / (p * (1.0 - p))])
    }
}

/// [`BernoulliSum`] in the log-odds parameterization `η = log(p/(1−p))`.
#[derive(Debug, Clone)]
pub struct BernoulliSumLogit {
    inner: BernoulliSum,
}

impl BernoulliSumLogit {
    pub fn new(n: u32) -> Result<Self> {
        Ok(Self { inner: BernoulliSum::new(n)? })
    }

    fn prob(eta: f64) -> f64 {
        1.0 / (1.0 + (-eta).exp())
    }
}

impl ModelFamily for BernoulliSumLogit {
    fn name(&self) -> String {
        format!("bernoulli-sum-logit(n={})", self.inner.n)
    }

    fn dim_interest(&self) -> usize {
        1
    }

    fn support(&self) -> &Support {
        &self.inner.support
    }

    fn in_domain(&self, theta: &ParamPoint) -> bool {
        theta.interest.len() == 1 && theta.interest[0].is_finite()
    }

    fn log_density(&self, y: &[f64], theta: &ParamPoint) -> f64 {
        let eta = theta.interest[0];
        let n = self.inner.n as f64;
        if y[0] < 0.0 || y[0] > n || y[0].fract() != 0.0 {
            return f64::NEG_INFINITY;
        }
        // n·log(1+e^η) computed stably
        let softplus = eta.max(0.0) + (-eta.abs()).exp().ln_1p();
        self.inner.ln_choose[y[0] as usize] + y[0] * eta - n * softplus
    }

    fn analytic_score(&self, y: &[f64], theta: &ParamPoint) -> Option<Vec<f64>> {
        Some(vec![y[0] - self.inner.n as f64 * Self::prob(theta.interest[0])])
    }
}

/// Normal location family with unit variance, on the sufficient statistic `ȳ`.
#[derive(Debug, Clone)]
pub struct NormalMean {
    n: u32,
    support: Support,
}

impl NormalMean {
    pub fn new(n: u32) -> Result<Self> {
        positive_size(n, "n")?;
        Ok(Self { n, support: Support::Continuous { dim: 1 } })
    }
}

impl ModelFamily for NormalMean {
    fn name(&self) -> String {
        format!("normal-location(n={})", self.n)
    }

    fn dim_interest(&self) -> usize {
        1
    }

    fn support(&self) -> &Support {
        &self.support
    }

    fn in_domain(&self, theta: &ParamPoint) -> bool {
        theta.interest.len() == 1 && theta.interest[0].is_finite()
    }

    fn log_density(&self, y: &[f64], theta: &ParamPoint) -> f64 {
        let n = self.n as f64;
        let r = y[0] - theta.interest[0];
        0.5 * (n / (2.0 * PI)).ln() - 0.5 * n * r * r
    }

    fn analytic_score(&self, y: &[f64], theta: &ParamPoint) -> Option<Vec<f64>> {
        Some(vec![self.n as f64 * (y[0] - theta.interest[0])])
    }

    fn sample(&self, theta: &ParamPoint, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let z: f64 = StandardNormal.sample(rng);
        Some(vec![theta.interest[0] + z / (self.n as f64).sqrt()])
    }
}

/// Standard densities for iid location families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationKernel {
    Normal,
    Cauchy,
    /// Student t with 3 degrees of freedom, unit scale.
    StudentT3,
}

impl LocationKernel {
    pub fn log_density(self, x: f64) -> f64 {
        match self {
            Self::Normal => -0.5 * (2.0 * PI).ln() - 0.5 * x * x,
            Self::Cauchy => -PI.ln() - (x * x).ln_1p(),
            Self::StudentT3 => (2.0 / (PI * 3f64.sqrt())).ln() - 2.0 * (x * x / 3.0).ln_1p(),
        }
    }

    /// `−φ'(x)/φ(x)`, the per-observation location score at residual `x`.
    pub fn psi(self, x: f64) -> f64 {
        match self {
            Self::Normal => x,
            Self::Cauchy => 2.0 * x / (1.0 + x * x),
            Self::StudentT3 => 4.0 * x / (3.0 + x * x),
        }
    }

    pub fn draw(self, rng: &mut dyn RngCore) -> f64 {
        match self {
            Self::Normal => StandardNormal.sample(rng),
            Self::Cauchy => Cauchy::new(0.0, 1.0).expect("unit scale").sample(rng),
            Self::StudentT3 => {
                let z: f64 = StandardNormal.sample(rng);
                let chi2: f64 = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
                z / (chi2 / 3.0).sqrt()
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Normal => "normal",
            Self::Cauchy => "cauchy",
            Self::StudentT3 => "t3",
        }
    }
}

/// iid location family on the full data vector `(x_1, …, x_n)`.
#[derive(Debug, Clone)]
pub struct IidLocation {
    n: u32,
    kernel: LocationKernel,
    support: Support,
}

impl IidLocation {
    pub fn new(n: u32, kernel: LocationKernel) -> Result<Self> {
        positive_size(n, "n")?;
        Ok(Self { n, kernel, support: Support::Continuous { dim: n as usize } })
    }

    pub fn kernel(&self) -> LocationKernel {
        self.kernel
    }

    pub fn n(&self) -> u32 {
        self.n
    }
}

impl ModelFamily for IidLocation {
    fn name(&self) -> String {
        format!("{}-location(n={})", self.kernel.label(), self.n)
    }

    fn dim_interest(&self) -> usize {
        1
    }

    fn support(&self) -> &Support {
        &self.support
    }

    fn in_domain(&self, theta: &ParamPoint) -> bool {
        theta.interest.len() == 1 && theta.interest[0].is_finite()
    }

    fn log_density(&self, y: &[f64], theta: &ParamPoint) -> f64 {
        let a = theta.interest[0];
        y.iter().map(|x| self.kernel.log_density(x - a)).sum()
    }

    fn analytic_score(&self, y: &[f64], theta: &ParamPoint) -> Option<Vec<f64>> {
        let a = theta.interest[0];
        Some(vec![y.iter().map(|x| self.kernel.psi(x - a)).sum()])
    }

    fn sample(&self, theta: &ParamPoint, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let a = theta.interest[0];
        Some((0..self.n).map(|_| a + self.kernel.draw(rng)).collect())
    }
}

/// Normal scale family `{N(0, σ²) : σ > 0}` on the full data vector.
#[derive(Debug, Clone)]
pub struct NormalScale {
    n: u32,
    support: Support,
}

impl NormalScale {
    pub fn new(n: u32) -> Result<Self> {
        positive_size(n, "n")?;
        Ok(Self { n, support: Support::Continuous { dim: n as usize } })
    }
}

impl ModelFamily for NormalScale {
    fn name(&self) -> String {
        format!("normal-scale(n={})", self.n)
    }

    fn dim_interest(&self) -> usize {
        1
    }

    fn support(&self) -> &Support {
        &self.support
    }

    fn in_domain(&self, theta: &ParamPoint) -> bool {
        theta.interest.len() == 1 && theta.interest[0] > 0.0 && theta.interest[0].is_finite()
    }

    fn log_density(&self, y: &[f64], theta: &ParamPoint) -> f64 {
        let s = theta.interest[0];
        y.iter().map(|x| -0.5 * (2.0 * PI).ln() - s.ln() - 0.5 * (x / s).powi(2)).sum()
    }

    fn analytic_score(&self, y: &[f64], theta: &ParamPoint) -> Option<Vec<f64>> {
        let s = theta.interest[0];
        Some(vec![y.iter().map(|x| x * x / (s * s * s) - 1.0 / s).sum()])
    }

    fn sample(&self, theta: &ParamPoint, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let s = theta.interest[0];
        Some((0..self.n).map(|_| s * { let z: f64 = StandardNormal.sample(&mut *rng); z }).collect())
    }
}

/// Two independent binomials `x1 ~ Bin(n1, p1)`, `x2 ~ Bin(n2, p2)` with
/// interest `θ = logit p1 − logit p2` (log odds ratio) and nuisance
/// `θ̃ = n1 p1 + n2 p2`.
#[derive(Debug, Clone)]
pub struct TwoBinomial {
    n1: u32,
    n2: u32,
    support: Support,
    ln_choose1: Vec<f64>,
    ln_choose2: Vec<f64>,
}

impl TwoBinomial {
    pub fn new(n1: u32, n2: u32) -> Result<Self> {
        positive_size(n1, "n1")?;
        positive_size(n2, "n2")?;
        let outcomes = (0..=n1)
            .flat_map(|x1| (0..=n2).map(move |x2| vec![x1 as f64, x2 as f64]))
            .collect();
        Ok(Self {
            n1,
            n2,
            support: Support::Finite(FiniteSupport::new(outcomes)?),
            ln_choose1: ln_choose_table(n1),
            ln_choose2: ln_choose_table(n2),
        })
    }

    pub fn n1(&self) -> u32 {
        self.n1
    }

    pub fn n2(&self) -> u32 {
        self.n2
    }

    pub fn total(&self) -> f64 {
        (self.n1 + self.n2) as f64
    }

    /// `(p1, p2) ↦ (θ, θ̃)`.
    pub fn params_from_probs(&self, p1: f64, p2: f64) -> Result<(f64, f64)> {
        for p in [p1, p2] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidArgument(format!("probability {p} outside (0,1)")));
            }
        }
        Ok((logit(p1) - logit(p2), self.n1 as f64 * p1 + self.n2 as f64 * p2))
    }

    /// Range of `p1` compatible with `n1 p1 + n2 p2 = θ̃` and `p1, p2 ∈ [0,1]`.
    pub fn p1_range(&self, nuisance: f64) -> (f64, f64) {
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        (((nuisance - n2) / n1).max(0.0), (nuisance / n1).min(1.0))
    }

    /// `p2` on the constraint line through `θ̃`.
    pub fn p2_given_p1(&self, p1: f64, nuisance: f64) -> f64 {
        (nuisance - self.n1 as f64 * p1) / self.n2 as f64
    }

    /// `(1-ψ) n1 p1² + (n2 - θ̃ + ψ (n1 + θ̃)) p1 - ψ θ̃ = 0` with `ψ = e^θ`.
    fn p1_newton(&self, theta: f64, nuisance: f64, lo: f64, hi: f64) -> Option<f64> {
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        let psi = theta.exp();
        let (a, b, c) = ((1.0 - psi) * n1, n2 - nuisance + psi * (n1 + nuisance), -psi * nuisance);
        let mut p1 = if a.abs() <= 1e-300 * b.abs().max(1.0) {
            -c / b
        } else {
            let disc = b * b - 4.0 * a * c;
            if disc.is_nan() || disc < 0.0 {
                return None;
            }
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            let (r1, r2) = (q / a, c / q);
            if r1 > lo && r1 < hi {
                r1
            } else {
                r2
            }
        };
        if !(p1 > lo && p1 < hi) {
            return None;
        }
        for _ in 0..4 {
            let p2 = self.p2_given_p1(p1, nuisance);
            let f = logit(p1) - logit(p2) - theta;
            let df = 1.0 / (p1 * (1.0 - p1)) + (n1 / n2) / (p2 * (1.0 - p2));
            let next = p1 - f / df;
            if !(next > lo && next < hi) {
                return None;
            }
            let done = (next - p1).abs() <= 4.0 * f64::EPSILON * p1.min(1.0 - p1).max(f64::MIN_POSITIVE);
            p1 = next;
            if done {
                break;
            }
        }
        let p2 = self.p2_given_p1(p1, nuisance);
        let ok = p2 > 0.0 && p2 < 1.0 && (self.theta_given_p1(p1, nuisance) - theta).abs() <= 1e-11 * theta.abs().max(1.0);
        ok.then_some(p1)
    }

    /// Log odds ratio along the constraint line; increasing in `p1`.
    pub fn theta_given_p1(&self, p1: f64, nuisance: f64) -> f64 {
        logit(p1) - logit(self.p2_given_p1(p1, nuisance))
    }

    /// `(θ, θ̃) ↦ (p1, p2)`. `p1` is the root of a quadratic on the constraint
    /// line, polished by Newton; bisection is the fallback.
    pub fn probs(&self, theta: f64, nuisance: f64) -> Result<(f64, f64)> {
        if !(nuisance > 0.0 && nuisance < self.total()) {
            return Err(Error::InfeasibleNuisance { value: nuisance, total: self.total() });
        }
        if !theta.is_finite() {
            return Err(Error::InvalidArgument(format!("log odds ratio {theta} is not finite")));
        }
        let (mut lo, mut hi) = self.p1_range(nuisance);
        if let Some(p1) = self.p1_newton(theta, nuisance, lo, hi) {
            return Ok((p1, self.p2_given_p1(p1, nuisance)));
        }
        for _ in 0..2100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let t = self.theta_given_p1(mid, nuisance);
            if t < theta {
                lo = mid;
            } else if t > theta {
                hi = mid;
            } else {
                lo = mid;
                hi = mid;
                break;
            }
        }
        let p1 = 0.5 * (lo + hi);
        let p2 = self.p2_given_p1(p1, nuisance);
        if !(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0) {
            return Err(Error::InfeasibleNuisance { value: nuisance, total: self.total() });
        }
        Ok((p1, p2))
    }

    /// Derivatives of `(p1, p2)` with respect to `(θ, θ̃)`:
    /// `[[∂p1/∂θ, ∂p2/∂θ], [∂p1/∂θ̃, ∂p2/∂θ̃]]`.
    pub fn prob_derivatives(&self, p1: f64, p2: f64) -> [[f64; 2]; 2] {
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        let v1 = p1 * (1.0 - p1);
        let v2 = p2 * (1.0 - p2);
        let det = n2 / v1 + n1 / v2;
        [[n2 / det, -n1 / det], [1.0 / (v2 * det), 1.0 / (v1 * det)]]
    }

    fn log_mass(&self, x1: f64, x2: f64, p1: f64, p2: f64) -> f64 {
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        if x1 < 0.0 || x1 > n1 || x2 < 0.0 || x2 > n2 || x1.fract() != 0.0 || x2.fract() != 0.0 {
            return f64::NEG_INFINITY;
        }
        self.ln_choose1[x1 as usize]
            + self.ln_choose2[x2 as usize]
            + xlny(x1, p1)
            + (n1 - x1) * (-p1).ln_1p()
            + xlny(x2, p2)
            + (n2 - x2) * (-p2).ln_1p()
    }

    /// `(s, s̃)` at the given outcome and probabilities.
    pub fn scores_at_probs(&self, x1: f64, x2: f64, p1: f64, p2: f64) -> [f64; 2] {
        let d = self.prob_derivatives(p1, p2);
        let r1 = (x1 - self.n1 as f64 * p1) / (p1 * (1.0 - p1));
        let r2 = (x2 - self.n2 as f64 * p2) / (p2 * (1.0 - p2));
        [r1 * d[0][0] + r2 * d[0][1], r1 * d[1][0] + r2 * d[1][1]]
    }
}

impl ModelFamily for TwoBinomial {
    fn name(&self) -> String {
        format!("two-binomial(n1={}, n2={})", self.n1, self.n2)
    }

    fn dim_interest(&self) -> usize {
        1
    }

    fn dim_nuisance(&self) -> usize {
        1
    }

    fn support(&self) -> &Support {
        &self.support
    }

    fn in_domain(&self, theta: &ParamPoint) -> bool {
        theta.interest.len() == 1
            && theta.nuisance.len() == 1
            && theta.interest[0].is_finite()
            && theta.nuisance[0] > 0.0
            && theta.nuisance[0] < self.total()
    }

    fn log_density(&self, y: &[f64], theta: &ParamPoint) -> f64 {
        match self.probs(theta.interest[0], theta.nuisance[0]) {
            Ok((p1, p2)) => self.log_mass(y[0], y[1], p1, p2),
            Err(_) => f64::NAN,
        }
    }

    fn analytic_score(&self, y: &[f64], theta: &ParamPoint) -> Option<Vec<f64>> {
        let (p1, p2) = self.probs(theta.interest[0], theta.nuisance[0]).ok()?;
        Some(self.scores_at_probs(y[0], y[1], p1, p2).to_vec())
    }

    fn pmf(&self, theta: &ParamPoint) -> Option<Vec<f64>> {
        let (p1, p2) = self.probs(theta.interest[0], theta.nuisance[0]).ok()?;
        let Support::Finite(s) = &self.support else { unreachable!() };
        Some(s.outcomes().iter().map(|y| self.log_mass(y[0], y[1], p1, p2).exp()).collect())
    }
}

/// A named constructor in the builtin catalog; `build` takes the family's
/// size arguments in the order listed in `sizes`.
#[derive(Clone, Copy)]
pub struct FamilyConstructor {
    pub name: &'static str,
    pub sizes: &'static [&'static str],
    pub parameters: &'static str,
    pub build: fn(&[u32]) -> Result<Arc<dyn ModelFamily>>,
}

impl std::fmt::Debug for FamilyConstructor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FamilyConstructor").field("name", &self.name).field("sizes", &self.sizes).finish()
    }
}

fn one_size(sizes: &[u32]) -> Result<u32> {
    match sizes {
        [n] => Ok(*n),
        _ => Err(Error::InvalidArgument(format!("expected one size argument, got {}", sizes.len()))),
    }
}

pub fn builtin_families() -> Vec<FamilyConstructor> {
    vec![
        FamilyConstructor {
            name: "bernoulli-sum",
            sizes: &["n"],
            parameters: "p in (0,1)",
            build: |s| Ok(Arc::new(BernoulliSum::new(one_size(s)?)?)),
        },
        FamilyConstructor {
            name: "bernoulli-sum-logit",
            sizes: &["n"],
            parameters: "eta = log(p/(1-p))",
            build: |s| Ok(Arc::new(BernoulliSumLogit::new(one_size(s)?)?)),
        },
        FamilyConstructor {
            name: "normal-location",
            sizes: &["n"],
            parameters: "a (on the sample mean)",
            build: |s| Ok(Arc::new(NormalMean::new(one_size(s)?)?)),
        },
        FamilyConstructor {
            name: "normal-sample-location",
            sizes: &["n"],
            parameters: "a (on the full sample)",
            build: |s| Ok(Arc::new(IidLocation::new(one_size(s)?, LocationKernel::Normal)?)),
        },
        FamilyConstructor {
            name: "cauchy-location",
            sizes: &["n"],
            parameters: "a",
            build: |s| Ok(Arc::new(IidLocation::new(one_size(s)?, LocationKernel::Cauchy)?)),
        },
        FamilyConstructor {
            name: "t3-location",
            sizes: &["n"],
            parameters: "a",
            build: |s| Ok(Arc::new(IidLocation::new(one_size(s)?, LocationKernel::StudentT3)?)),
        },
        FamilyConstructor {
            name: "normal-scale",
            sizes: &["n"],
            parameters: "sigma > 0",
            build: |s| Ok(Arc::new(NormalScale::new(one_size(s)?)?)),
        },
        FamilyConstructor {
            name: "two-binomial",
            sizes: &["n1", "n2"],
            parameters: "theta = log odds ratio; nuisance = n1 p1 + n2 p2",
            build: |s| match s {
                [n1, n2] => Ok(Arc::new(TwoBinomial::new(*n1, *n2)?)),
                _ => Err(Error::InvalidArgument("two-binomial takes sizes n1, n2".into())),
            },
        },
    ]
}
