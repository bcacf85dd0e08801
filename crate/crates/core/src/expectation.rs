//! Expectations `E_θ[h]` by exact enumeration or seeded Monte Carlo.
//!
//! Both modes produce a [`Draws`] set: weighted outcomes (support points with
//! their probabilities, or iid samples with weight `1/R`). Every moment of a
//! single report is computed over the same draws, so Monte Carlo moments use
//! common random numbers.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{check_domain, ModelFamily, ParamPoint, Support};
use crate::rng::{self, BLOCK_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum EngineMode {
    ExactEnumeration,
    MonteCarlo { replications: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpectationEngine {
    pub mode: EngineMode,
    pub seed: u64,
    /// Stream tag of the experiment cell this engine serves.
    pub stream: u64,
    pub estimate_se: bool,
}

/// An expectation with optional Monte Carlo standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Expectation {
    pub value: Vec<f64>,
    pub se: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Draws {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    monte_carlo: bool,
}

impl ExpectationEngine {
    pub fn exact() -> Self {
        Self { mode: EngineMode::ExactEnumeration, seed: 0, stream: 0, estimate_se: false }
    }

    pub fn monte_carlo(replications: usize, seed: u64) -> Self {
        Self { mode: EngineMode::MonteCarlo { replications }, seed, stream: 0, estimate_se: true }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, EngineMode::ExactEnumeration)
    }

    pub fn draws(&self, family: &dyn ModelFamily, theta: &ParamPoint) -> Result<Draws> {
        check_domain(family, theta)?;
        match self.mode {
            EngineMode::ExactEnumeration => {
                let Support::Finite(support) = family.support() else {
                    return Err(Error::NotEnumerable(family.name()));
                };
                let weights = family.pmf(theta).ok_or_else(|| Error::NotEnumerable(family.name()))?;
                Ok(Draws { points: support.outcomes().to_vec(), weights, monte_carlo: false })
            }
            EngineMode::MonteCarlo { replications } => {
                if replications == 0 {
                    return Err(Error::InvalidArgument("Monte Carlo needs at least one replication".into()));
                }
                let blocks = replications.div_ceil(BLOCK_SIZE);
                let per_block: Vec<Option<Vec<Vec<f64>>>> = (0..blocks)
                    .into_par_iter()
                    .map(|b| {
                        let mut rng = rng::substream(self.seed, &[self.stream, b as u64]);
                        let len = BLOCK_SIZE.min(replications - b * BLOCK_SIZE);
                        (0..len).map(|_| family.sample(theta, &mut rng)).collect()
                    })
                    .collect();
                let mut points = Vec::with_capacity(replications);
                for block in per_block {
                    points.extend(block.ok_or_else(|| Error::NoSampler(family.name()))?);
                }
                let w = 1.0 / replications as f64;
                Ok(Draws { weights: vec![w; replications], points, monte_carlo: true })
            }
        }
    }

    /// `E_θ[h]` for vector-valued `h`.
    pub fn expect<H>(&self, family: &dyn ModelFamily, theta: &ParamPoint, h: H) -> Result<Expectation>
    where
        H: Fn(&[f64]) -> Vec<f64> + Sync,
    {
        let draws = self.draws(family, theta)?;
        let values: Vec<Vec<f64>> = draws.points.par_iter().map(|y| h(y)).collect();
        let mut e = draws.weighted_mean(&values, |v| v.clone());
        if !self.estimate_se {
            e.se = None;
        }
        Ok(e)
    }
}

impl Draws {
    /// Weighted outcomes built by the caller (weights need not come from a family).
    pub fn from_parts(points: Vec<Vec<f64>>, weights: Vec<f64>, monte_carlo: bool) -> Self {
        assert_eq!(points.len(), weights.len());
        Self { points, weights, monte_carlo }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_monte_carlo(&self) -> bool {
        self.monte_carlo
    }

    /// Applies `f` to every outcome (in parallel, results in outcome order).
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&[f64]) -> Result<T> + Sync,
    {
        self.points.par_iter().map(|y| f(y)).collect()
    }

    /// Weighted mean of `f(values[i])`; sums run in outcome order so results
    /// are bit-reproducible. Monte Carlo draws also get standard errors.
    pub fn weighted_mean<T, F>(&self, values: &[T], f: F) -> Expectation
    where
        T: Sync,
        F: Fn(&T) -> Vec<f64> + Sync,
    {
        self.weighted_mean_range(values, 0..self.len(), f)
    }

    pub(crate) fn weighted_mean_range<T, F>(&self, values: &[T], range: Range<usize>, f: F) -> Expectation
    where
        T: Sync,
        F: Fn(&T) -> Vec<f64> + Sync,
    {
        let mapped: Vec<Vec<f64>> = values[range.clone()].par_iter().map(&f).collect();
        let dim = mapped.first().map_or(0, Vec::len);
        let weights = &self.weights[range];
        let wsum: f64 = weights.iter().sum();
        let mut mean = vec![0.0; dim];
        for (v, &w) in mapped.iter().zip(weights) {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += w * x;
            }
        }
        if self.monte_carlo {
            mean.iter_mut().for_each(|m| *m /= wsum);
            let r = mapped.len() as f64;
            let mut ss = vec![0.0; dim];
            for v in &mapped {
                for ((s, x), m) in ss.iter_mut().zip(v).zip(&mean) {
                    *s += (x - m) * (x - m);
                }
            }
            let se = ss.iter().map(|s| (s / (r - 1.0).max(1.0) / r).sqrt()).collect();
            Expectation { value: mean, se: Some(se) }
        } else {
            Expectation { value: mean, se: None }
        }
    }

    /// Contiguous index ranges splitting the draws into `count` batches.
    pub fn batches(&self, count: usize) -> Vec<Range<usize>> {
        let n = self.len();
        let count = count.clamp(1, n.max(1));
        (0..count).map(|b| (b * n / count)..((b + 1) * n / count)).collect()
    }
}
