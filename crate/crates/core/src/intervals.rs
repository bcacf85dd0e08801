//! Score-inversion confidence sets for the binomial count: standardized score
//! and likelihood-ratio curves, z-standard intervals, vertical slices, and
//! exact-tail intervals.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::family::{ln_choose_table, logit, xlny};
use crate::roots::bisect;

/// Which bound(s) of a score-inversion interval are constrained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// `{θ : s̄(θ) ≤ z}`: only a lower bound.
    LowerOnly,
    /// `{θ : s̄(θ) ≥ −z}`: only an upper bound.
    UpperOnly,
    /// Intersection of both one-sided sets.
    TwoSided,
}

impl Side {
    fn bounds_lower(self) -> bool {
        matches!(self, Side::LowerOnly | Side::TwoSided)
    }

    fn bounds_upper(self) -> bool {
        matches!(self, Side::UpperOnly | Side::TwoSided)
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" | "lower-only" => Ok(Side::LowerOnly),
            "upper" | "upper-only" => Ok(Side::UpperOnly),
            "two-sided" | "both" => Ok(Side::TwoSided),
            other => Err(Error::InvalidArgument(format!("unknown side `{other}`"))),
        }
    }
}

fn ser_endpoint<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_infinite() {
        s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
    } else {
        s.serialize_f64(*x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalResult {
    #[serde(serialize_with = "ser_endpoint")]
    pub lower: f64,
    #[serde(serialize_with = "ser_endpoint")]
    pub upper: f64,
    pub closed_lower: bool,
    pub closed_upper: bool,
    /// Critical value; absent for intervals defined by tail areas.
    pub z: Option<f64>,
    pub side: Side,
    /// Set when an endpoint is a boundary of the parameter domain.
    pub boundary_note: Option<String>,
    pub flags: Vec<String>,
}

impl IntervalResult {
    pub fn contains(&self, x: f64) -> bool {
        let above = if self.closed_lower { x >= self.lower } else { x > self.lower };
        let below = if self.closed_upper { x <= self.upper } else { x < self.upper };
        above && below
    }

    /// Applies an increasing reparameterization to both endpoints.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { lower: f(self.lower), upper: f(self.upper), ..self.clone() }
    }

    fn note_boundary(&mut self, msg: &str) {
        match &mut self.boundary_note {
            Some(note) => {
                note.push_str("; ");
                note.push_str(msg);
            }
            None => self.boundary_note = Some(msg.to_string()),
        }
    }
}

/// Domain of a scalar parameter: `eval` is where the statistic can be
/// evaluated safely, `edges` what an endpoint reaching `eval` is reported as.
#[derive(Debug, Clone, Copy)]
pub struct ScalarDomain {
    pub eval: (f64, f64),
    pub edges: (f64, f64),
}

impl ScalarDomain {
    /// `(0, 1)` for probabilities.
    pub fn unit() -> Self {
        Self { eval: (1e-13, 1.0 - 1e-13), edges: (0.0, 1.0) }
    }

    /// The real line for log odds.
    pub fn real_line() -> Self {
        Self { eval: (-40.0, 40.0), edges: (f64::NEG_INFINITY, f64::INFINITY) }
    }
}

/// Inverts a standardized statistic that is decreasing in the parameter:
/// the set `{θ : −z ≤ s̄(θ) ≤ z}` (or one half of it per `side`).
pub fn score_interval<F: Fn(f64) -> f64>(sbar: F, domain: ScalarDomain, z: f64, side: Side) -> IntervalResult {
    let (lo, hi) = domain.eval;
    let mut out = IntervalResult {
        lower: domain.edges.0,
        upper: domain.edges.1,
        closed_lower: false,
        closed_upper: false,
        z: Some(z),
        side,
        boundary_note: None,
        flags: Vec::new(),
    };
    if side.bounds_lower() {
        if sbar(lo) <= z {
            out.note_boundary("lower endpoint at domain boundary");
        } else if sbar(hi) > z {
            out.flags.push(format!("s̄ never falls to {z} on the domain; whole domain returned"));
            return out;
        } else if let Some(r) = bisect(|t| sbar(t) - z, lo, hi, 0.0) {
            out.lower = r;
            out.closed_lower = true;
        }
    }
    if side.bounds_upper() {
        if sbar(hi) >= -z {
            out.note_boundary("upper endpoint at domain boundary");
        } else if sbar(lo) < -z {
            out.flags.push(format!("s̄ never rises to {} on the domain; whole domain returned", -z));
            out.lower = domain.edges.0;
            out.closed_lower = false;
            return out;
        } else if let Some(r) = bisect(|t| sbar(t) + z, lo, hi, 0.0) {
            out.upper = r;
            out.closed_upper = true;
        }
    }
    verify_endpoints(&sbar, &mut out, z);
    out
}

/// Checks the statistic just outside each finite endpoint violates the bound.
fn verify_endpoints<F: Fn(f64) -> f64>(sbar: &F, out: &mut IntervalResult, z: f64) {
    let eps = |x: f64| 1e-9 * x.abs().max(1e-3);
    if out.closed_lower && sbar(out.lower - eps(out.lower)) <= z {
        out.flags.push("lower endpoint check failed".into());
    }
    if out.closed_upper && sbar(out.upper + eps(out.upper)) >= -z {
        out.flags.push("upper endpoint check failed".into());
    }
}

fn check_count(n: u32, y: u32) -> Result<()> {
    if n == 0 || y > n {
        return Err(Error::InvalidArgument(format!("need 0 ≤ y ≤ n with n ≥ 1, got y={y}, n={n}")));
    }
    Ok(())
}

/// `s̄_y(p) = (y − np)/√(np(1−p))`.
pub fn binom_sbar(n: u32, y: u32, p: f64) -> f64 {
    let n = n as f64;
    (y as f64 - n * p) / (n * p * (1.0 - p)).sqrt()
}

/// The same standardized score in the log-odds parameterization.
pub fn binom_sbar_logit(n: u32, y: u32, eta: f64) -> f64 {
    let p = 1.0 / (1.0 + (-eta).exp());
    let q = 1.0 / (1.0 + eta.exp());
    let n = n as f64;
    (y as f64 - n * p) / (n * p * q).sqrt()
}

/// `CI_z(y)` for the binomial probability.
pub fn ci_z(n: u32, y: u32, z: f64, side: Side) -> Result<IntervalResult> {
    check_count(n, y)?;
    if !(z >= 0.0 && z.is_finite()) {
        return Err(Error::InvalidArgument(format!("z must be a nonnegative number, got {z}")));
    }
    Ok(score_interval(|p| binom_sbar(n, y, p), ScalarDomain::unit(), z, side))
}

/// `CI_z(y)` computed in the log-odds parameterization.
pub fn ci_z_logit(n: u32, y: u32, z: f64, side: Side) -> Result<IntervalResult> {
    check_count(n, y)?;
    Ok(score_interval(|eta| binom_sbar_logit(n, y, eta), ScalarDomain::real_line(), z, side))
}

/// `2[sup_q ℓ_y(q) − ℓ_y(p)]`; the supremum is the boundary limit for `y ∈ {0, n}`.
pub fn llr(n: u32, y: u32, p: f64) -> f64 {
    let (nf, yf) = (n as f64, y as f64);
    let ell = |q: f64| xlny(yf, q) + xlny(nf - yf, 1.0 - q);
    let v = 2.0 * (ell(yf / nf) - ell(p));
    v.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    StandardizedScore,
    LikelihoodRatio,
}

/// One curve per outcome `y ∈ {0..n}` evaluated over a grid of `p`.
#[derive(Debug, Clone, Serialize)]
pub struct CurveGrid {
    pub kind: CurveKind,
    pub n: u32,
    pub grid: Vec<f64>,
    /// `rows[y][i]` is the curve for outcome `y` at `grid[i]`.
    pub rows: Vec<Vec<f64>>,
}

/// One CSV row of a curve grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub y: u32,
    pub p: f64,
    pub value: f64,
    pub realized: bool,
    pub slope_sign: i8,
}

impl CurveGrid {
    /// Sign of `∂/∂p` of curve `y` at `p`.
    pub fn slope_sign(&self, y: u32, p: f64) -> i8 {
        match self.kind {
            CurveKind::StandardizedScore => -1,
            CurveKind::LikelihoodRatio => {
                // d/dp of −2ℓ_y(p) is −2(y − np)/(p(1−p))
                let d = self.n as f64 * p - y as f64;
                if d > 0.0 {
                    1
                } else if d < 0.0 {
                    -1
                } else {
                    0
                }
            }
        }
    }

    /// Long-format rows, marking the curve of the observed outcome.
    pub fn points(&self, observed: Option<u32>) -> Vec<CurvePoint> {
        let mut out = Vec::with_capacity(self.rows.len() * self.grid.len());
        for (y, row) in self.rows.iter().enumerate() {
            let y = y as u32;
            for (&p, &value) in self.grid.iter().zip(row) {
                out.push(CurvePoint { y, p, value, realized: observed == Some(y), slope_sign: self.slope_sign(y, p) });
            }
        }
        out
    }
}

/// 512 equispaced points on `[1e-4, 1 − 1e-4]`.
pub fn default_grid() -> Vec<f64> {
    let (a, b, m) = (1e-4, 1.0 - 1e-4, 512);
    (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if let Some(p) = grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidArgument(format!("grid point {p} not inside (0,1)")));
    }
    Ok(())
}

pub fn score_curves(n: u32, grid: &[f64]) -> Result<CurveGrid> {
    check_count(n, 0)?;
    check_grid(grid)?;
    let rows = (0..=n).map(|y| grid.iter().map(|&p| binom_sbar(n, y, p)).collect()).collect();
    Ok(CurveGrid { kind: CurveKind::StandardizedScore, n, grid: grid.to_vec(), rows })
}

pub fn llr_curves(n: u32, grid: &[f64]) -> Result<CurveGrid> {
    check_count(n, 0)?;
    check_grid(grid)?;
    let rows = (0..=n).map(|y| grid.iter().map(|&p| llr(n, y, p)).collect()).collect();
    Ok(CurveGrid { kind: CurveKind::LikelihoodRatio, n, grid: grid.to_vec(), rows })
}

/// Binomial probabilities `Pr_p(Y = y)`, `y = 0..n`.
pub fn binomial_pmf(n: u32, p: f64) -> Vec<f64> {
    let nf = n as f64;
    ln_choose_table(n)
        .iter()
        .enumerate()
        .map(|(y, lc)| {
            let y = y as f64;
            (lc + xlny(y, p) + xlny(nf - y, 1.0 - p)).exp()
        })
        .collect()
}

/// `Pr_p(Y ≤ y)`.
pub fn binomial_cdf(n: u32, y: u32, p: f64) -> f64 {
    binomial_pmf(n, p)[..=(y.min(n) as usize)].iter().sum::<f64>().min(1.0)
}

/// `Pr_p(Y ≥ y)`, summed directly over the upper tail.
pub fn binomial_sf(n: u32, y: u32, p: f64) -> f64 {
    if y == 0 {
        return 1.0;
    }
    binomial_pmf(n, p)[(y.min(n + 1) as usize)..].iter().sum::<f64>().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceRow {
    pub y: u32,
    pub value: f64,
    pub mass: f64,
    pub slope_sign: i8,
}

/// The distribution of a curve family's values at a fixed `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerticalSlice {
    pub p: f64,
    pub rows: Vec<SliceRow>,
    pub mean: f64,
    pub variance: f64,
}

pub fn vertical_slice(curves: &CurveGrid, p: f64) -> Result<VerticalSlice> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} not inside (0,1)")));
    }
    let n = curves.n;
    let pmf = binomial_pmf(n, p);
    let rows: Vec<SliceRow> = (0..=n)
        .map(|y| {
            let value = match curves.kind {
                CurveKind::StandardizedScore => binom_sbar(n, y, p),
                CurveKind::LikelihoodRatio => llr(n, y, p),
            };
            SliceRow { y, value, mass: pmf[y as usize], slope_sign: curves.slope_sign(y, p) }
        })
        .collect();
    let mean: f64 = rows.iter().map(|r| r.mass * r.value).sum();
    let variance = rows.iter().map(|r| r.mass * (r.value - mean).powi(2)).sum();
    Ok(VerticalSlice { p, rows, mean, variance })
}

/// Tail comparison at one vertical slice for an observed count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlrTail {
    /// Other outcomes on the observed side of `np` with LLR at least the observed.
    pub outcomes_as_extreme: Vec<u32>,
    /// Probability of those outcomes plus the observed one.
    pub tail_mass: f64,
    /// One-sided score-test tail at the observed count.
    pub score_tail_mass: f64,
}

pub fn llr_tail(n: u32, y_obs: u32, p: f64) -> Result<LlrTail> {
    check_count(n, y_obs)?;
    let pmf = binomial_pmf(n, p);
    let center = n as f64 * p;
    let below = (y_obs as f64) < center;
    let l_obs = llr(n, y_obs, p);
    let outcomes_as_extreme: Vec<u32> = (0..=n)
        .filter(|&y| y != y_obs && ((y as f64) < center) == below && llr(n, y, p) >= l_obs)
        .collect();
    let tail_mass = pmf[y_obs as usize] + outcomes_as_extreme.iter().map(|&y| pmf[y as usize]).sum::<f64>();
    let score_tail_mass = if below { binomial_cdf(n, y_obs, p) } else { binomial_sf(n, y_obs, p) };
    Ok(LlrTail { outcomes_as_extreme, tail_mass, score_tail_mass })
}

/// Exact-tail interval: the lower bound solves `Pr_p(Y ≥ y) = α`, the upper
/// bound `Pr_p(Y ≤ y) = α`.
pub fn tail_z_adjusted_ci(n: u32, y: u32, alpha: f64, side: Side) -> Result<IntervalResult> {
    check_count(n, y)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("tail area {alpha} outside (0,1)")));
    }
    let (lo, hi) = ScalarDomain::unit().eval;
    let mut out = IntervalResult {
        lower: 0.0,
        upper: 1.0,
        closed_lower: false,
        closed_upper: false,
        z: None,
        side,
        boundary_note: None,
        flags: Vec::new(),
    };
    if side.bounds_lower() {
        if y == 0 {
            out.note_boundary("lower endpoint at domain boundary");
        } else if let Some(r) = bisect(|p| binomial_sf(n, y, p) - alpha, lo, hi, 0.0) {
            out.lower = r;
            out.closed_lower = true;
        } else {
            out.flags.push("lower tail equation not bracketed".into());
        }
    }
    if side.bounds_upper() {
        if y == n {
            out.note_boundary("upper endpoint at domain boundary");
        } else if let Some(r) = bisect(|p| binomial_cdf(n, y, p) - alpha, lo, hi, 0.0) {
            out.upper = r;
            out.closed_upper = true;
        } else {
            out.flags.push("upper tail equation not bracketed".into());
        }
    }
    Ok(out)
}

/// Endpoint map from probability to log odds, keeping the domain edges.
pub fn to_log_odds(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        logit(p)
    }
}
