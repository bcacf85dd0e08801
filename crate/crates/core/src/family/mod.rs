//! Parameterized model families, scores and Fisher information.
//!
//! A family is a smooth map from a parameter point `(θ, θ̃)` (interest and
//! nuisance coordinates) to a probability law on a sample space. Outcomes are
//! passed around as `&[f64]`: a count is a one-element slice, a 2×2 table is
//! `[x1, x2]`, an iid sample is the full data vector.

mod builtin;

use std::collections::HashMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::ExpectationEngine;
use crate::linalg::{self, Mat};

pub use builtin::{
    builtin_families, BernoulliSum, BernoulliSumLogit, FamilyConstructor, IidLocation, LocationKernel, NormalMean,
    NormalScale, TwoBinomial,
};
pub(crate) use builtin::{ln_choose_table, logit, xlny};

/// A point `(θ, θ̃)` of the parameter space. Serializes as
/// `{"theta": [...], "nuisance": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    #[serde(rename = "theta")]
    pub interest: Vec<f64>,
    #[serde(default)]
    pub nuisance: Vec<f64>,
}

impl ParamPoint {
    pub fn new(interest: Vec<f64>, nuisance: Vec<f64>) -> Self {
        Self { interest, nuisance }
    }

    /// One interest coordinate, no nuisance.
    pub fn scalar(theta: f64) -> Self {
        Self { interest: vec![theta], nuisance: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.interest.len() + self.nuisance.len()
    }

    /// Interest coordinates followed by nuisance coordinates.
    pub fn coords(&self) -> Vec<f64> {
        self.interest.iter().chain(&self.nuisance).copied().collect()
    }

    pub fn from_coords(k: usize, coords: &[f64]) -> Self {
        Self { interest: coords[..k].to_vec(), nuisance: coords[k..].to_vec() }
    }

    pub(crate) fn with_coord(&self, j: usize, value: f64) -> Self {
        let k = self.interest.len();
        let mut p = self.clone();
        if j < k {
            p.interest[j] = value;
        } else {
            p.nuisance[j - k] = value;
        }
        p
    }

    pub(crate) fn key(&self) -> Vec<u64> {
        self.interest.iter().chain(&self.nuisance).map(|v| v.to_bits()).collect()
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(self).unwrap_or_default())
    }
}

/// Explicit list of outcomes of a finite sample space.
#[derive(Debug, Clone)]
pub struct FiniteSupport {
    outcomes: Vec<Vec<f64>>,
    index: HashMap<Vec<u64>, usize>,
}

impl FiniteSupport {
    pub fn new(outcomes: Vec<Vec<f64>>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidArgument("finite support must be nonempty".into()));
        }
        let mut index = HashMap::with_capacity(outcomes.len());
        for (i, y) in outcomes.iter().enumerate() {
            let key: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
            if index.insert(key, i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate outcome {y:?} in finite support")));
            }
        }
        Ok(Self { outcomes, index })
    }

    pub fn outcomes(&self) -> &[Vec<f64>] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn index_of(&self, y: &[f64]) -> Option<usize> {
        let key: Vec<u64> = y.iter().map(|v| v.to_bits()).collect();
        self.index.get(&key).copied()
    }
}

#[derive(Debug, Clone)]
pub enum Support {
    Finite(FiniteSupport),
    /// Continuous sample space of the given dimension; expectations go
    /// through the family's sampler.
    Continuous { dim: usize },
}

pub trait ModelFamily: Send + Sync {
    fn name(&self) -> String;

    fn dim_interest(&self) -> usize;

    fn dim_nuisance(&self) -> usize {
        0
    }

    fn support(&self) -> &Support;

    fn in_domain(&self, theta: &ParamPoint) -> bool;

    /// `log m(y)` at parameter point `theta`.
    fn log_density(&self, y: &[f64], theta: &ParamPoint) -> f64;

    /// Analytic score `(∇ℓ, ∇̃ℓ)` if the family provides one.
    fn analytic_score(&self, _y: &[f64], _theta: &ParamPoint) -> Option<Vec<f64>> {
        None
    }

    /// One draw from the law at `theta`; `None` when the family has no sampler.
    fn sample(&self, _theta: &ParamPoint, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }

    /// Probabilities of the finite support outcomes, in support order.
    fn pmf(&self, theta: &ParamPoint) -> Option<Vec<f64>> {
        match self.support() {
            Support::Finite(s) => Some(s.outcomes().iter().map(|y| self.log_density(y, theta).exp()).collect()),
            Support::Continuous { .. } => None,
        }
    }
}

pub(crate) fn check_domain(family: &dyn ModelFamily, theta: &ParamPoint) -> Result<()> {
    if theta.interest.len() != family.dim_interest()
        || theta.nuisance.len() != family.dim_nuisance()
        || !family.in_domain(theta)
    {
        return Err(Error::OutsideDomain(theta.to_string()));
    }
    Ok(())
}

/// Relative finite-difference step for coordinate value `x`.
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Central-difference score of the log-density.
pub fn numeric_score(family: &dyn ModelFamily, y: &[f64], theta: &ParamPoint) -> Result<Vec<f64>> {
    let coords = theta.coords();
    let mut out = Vec::with_capacity(coords.len());
    for (j, &x) in coords.iter().enumerate() {
        let h = fd_step(x);
        let up = theta.with_coord(j, x + h);
        let dn = theta.with_coord(j, x - h);
        if !family.in_domain(&up) || !family.in_domain(&dn) {
            return Err(Error::NonFiniteLogDensity(format!("{theta} (stencil leaves the domain)")));
        }
        let (lu, ld) = (family.log_density(y, &up), family.log_density(y, &dn));
        if !lu.is_finite() || !ld.is_finite() {
            return Err(Error::NonFiniteLogDensity(theta.to_string()));
        }
        // the realized step differs from h by rounding of x ± h
        out.push((lu - ld) / ((x + h) - (x - h)));
    }
    Ok(out)
}

/// Full score `(∇ℓ, ∇̃ℓ)`: analytic when available, otherwise central differences.
pub fn score(family: &dyn ModelFamily, y: &[f64], theta: &ParamPoint) -> Result<Vec<f64>> {
    check_domain(family, theta)?;
    match family.analytic_score(y, theta) {
        Some(s) => Ok(s),
        None => numeric_score(family, y, theta),
    }
}

/// Derivative of the score with respect to the parameter coordinates,
/// `H[i][j] = ∂ score_i / ∂ coord_j`, by a five-point stencil on [`score`].
pub fn score_gradient(family: &dyn ModelFamily, y: &[f64], theta: &ParamPoint) -> Result<Mat> {
    let coords = theta.coords();
    let d = coords.len();
    let mut h_mat = Mat::zeros(d, d);
    for (j, &x) in coords.iter().enumerate() {
        let h = f64::EPSILON.powf(0.2) * x.abs().max(1.0);
        let at = |t: f64| score(family, y, &theta.with_coord(j, x + t));
        let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
        for i in 0..d {
            h_mat[(i, j)] = (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * h);
        }
    }
    Ok(h_mat)
}

/// Fisher information blocks at a parameter point.
#[derive(Debug, Clone)]
pub struct FisherInfo {
    /// Full `(k+k')×(k+k')` matrix `E[score scoreᵀ]`.
    pub full: Mat,
    pub interest: Mat,
    pub cross: Mat,
    pub nuisance: Mat,
    /// Schur complement `I − I_cross I_nuis⁻¹ I_crossᵀ`; `None` when the
    /// nuisance block is singular.
    pub perp: Option<Mat>,
    /// Monte Carlo standard errors of `full`, elementwise.
    pub se: Option<Mat>,
}

impl FisherInfo {
    pub fn from_full(full: Mat, k: usize, se: Option<Mat>) -> Self {
        let d = full.nrows();
        let interest = full.view((0, 0), (k, k)).into_owned();
        let cross = full.view((0, k), (k, d - k)).into_owned();
        let nuisance = full.view((k, k), (d - k, d - k)).into_owned();
        let perp = if d == k {
            Some(interest.clone())
        } else {
            linalg::inverse_pd(&nuisance).ok().map(|inv| &interest - &cross * inv * cross.transpose())
        };
        Self { full, interest, cross, nuisance, perp, se }
    }

    /// `I⊥`, or the singular-nuisance error.
    pub fn perp_or_err(&self) -> Result<&Mat> {
        self.perp
            .as_ref()
            .ok_or_else(|| Error::SingularNuisance { min_eigenvalue: linalg::min_eigenvalue(&self.nuisance) })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "full": linalg::to_rows(&self.full),
            "interest": linalg::to_rows(&self.interest),
            "cross": linalg::to_rows(&self.cross),
            "nuisance": linalg::to_rows(&self.nuisance),
            "perp": self.perp.as_ref().map(linalg::to_rows),
        })
    }
}

/// `I = E[score scoreᵀ]`, partitioned into interest/nuisance blocks.
pub fn fisher_info(engine: &ExpectationEngine, family: &dyn ModelFamily, theta: &ParamPoint) -> Result<FisherInfo> {
    let d = theta.dim();
    let draws = engine.draws(family, theta)?;
    let scores = draws.map(|y| score(family, y, theta))?;
    let moments = draws.weighted_mean(&scores, |s| {
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(s[i] * s[j]);
            }
        }
        out
    });
    let full = Mat::from_row_slice(d, d, &moments.value);
    let se = moments.se.map(|se| Mat::from_row_slice(d, d, &se));
    Ok(FisherInfo::from_full(full, family.dim_interest(), se))
}

/// `−E[∇ score]`, the second form of the information identity.
pub fn neg_mean_score_gradient(engine: &ExpectationEngine, family: &dyn ModelFamily, theta: &ParamPoint) -> Result<Mat> {
    let d = theta.dim();
    let draws = engine.draws(family, theta)?;
    let grads = draws.map(|y| score_gradient(family, y, theta))?;
    let m = draws.weighted_mean(&grads, |g| g.iter().map(|v| -v).collect());
    // nalgebra flattens column-major
    Ok(Mat::from_column_slice(d, d, &m.value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_support_rejects_duplicates_and_empty() {
        assert!(FiniteSupport::new(vec![]).is_err());
        assert!(FiniteSupport::new(vec![vec![1.0], vec![1.0]]).is_err());
        let s = FiniteSupport::new(vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(s.index_of(&[1.0]), Some(1));
        assert_eq!(s.index_of(&[2.0]), None);
    }

    #[test]
    fn param_point_json_shape() {
        let p = ParamPoint::new(vec![0.5], vec![25.0]);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"theta":[0.5],"nuisance":[25.0]}"#);
        let back: ParamPoint = serde_json::from_str(r#"{"theta":[0.3]}"#).unwrap();
        assert_eq!(back, ParamPoint::scalar(0.3));
    }

    #[test]
    fn perp_equals_interest_without_nuisance() {
        let full = Mat::from_row_slice(1, 1, &[80.0]);
        let fi = FisherInfo::from_full(full, 1, None);
        assert_eq!(fi.perp.unwrap()[(0, 0)], 80.0);
    }

    #[test]
    fn singular_nuisance_reported() {
        let full = Mat::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let fi = FisherInfo::from_full(full, 1, None);
        assert!(fi.perp.is_none());
        assert!(matches!(fi.perp_or_err(), Err(Error::SingularNuisance { .. })));
    }
}
