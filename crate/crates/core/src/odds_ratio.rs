//! Log odds ratio inference for two independent binomials: the profiled
//! standardized score, its z-standard interval, Fisher's exact interval, and
//! exact coverage enumeration.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{ln_choose_table, xlny, TwoBinomial};
use crate::intervals::{IntervalResult, Side};
use crate::roots::bisect;

/// Two-sided 95% critical value.
pub const Z95: f64 = 1.959964;

/// Points in the sign scan of `s̄² − z²` along the constraint line.
pub const SCAN_POINTS: usize = 2048;

/// Shrinkage of the feasible `p1` range away from its ends.
pub const CLIP: f64 = 1e-9;

/// Endpoints this close to a clip are reported as `±∞`.
pub const CLIP_FLAG: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TwoBinomialData {
    pub x1: u32,
    pub x2: u32,
    pub n1: u32,
    pub n2: u32,
}

impl TwoBinomialData {
    pub fn new(x1: u32, x2: u32, n1: u32, n2: u32) -> Result<Self> {
        if n1 == 0 || n2 == 0 || x1 > n1 || x2 > n2 {
            return Err(Error::InvalidArgument(format!("need 0 ≤ x1 ≤ n1, 0 ≤ x2 ≤ n2, got x=({x1},{x2}) n=({n1},{n2})")));
        }
        Ok(Self { x1, x2, n1, n2 })
    }

    fn total(&self) -> f64 {
        (self.n1 + self.n2) as f64
    }

    /// Profiled log odds ratio `log[(x1/(n1−x1)) / (x2/(n2−x2))]`.
    pub fn empirical_log_odds_ratio(&self) -> f64 {
        let (x1, x2, n1, n2) = (self.x1 as f64, self.x2 as f64, self.n1 as f64, self.n2 as f64);
        (x1.ln() - (n1 - x1).ln()) - (x2.ln() - (n2 - x2).ln())
    }
}

/// How the nuisance `θ̃ = n1 p1 + n2 p2` is fixed when inverting the score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum NuisanceRule {
    /// The root of the nuisance score, `x1 + x2`.
    Profiled,
    PlusC(f64),
    Fixed(f64),
}

impl NuisanceRule {
    pub fn resolve(&self, data: &TwoBinomialData) -> f64 {
        match *self {
            NuisanceRule::Profiled => (data.x1 + data.x2) as f64,
            NuisanceRule::PlusC(c) => plus_c_nuisance(data, c),
            NuisanceRule::Fixed(v) => v,
        }
    }
}

/// `θ̃(c) = n1(x1+c)/(n1+2c) + n2(x2+c)/(n2+2c)`.
pub fn plus_c_nuisance(data: &TwoBinomialData, c: f64) -> f64 {
    let (x1, x2, n1, n2) = (data.x1 as f64, data.x2 as f64, data.n1 as f64, data.n2 as f64);
    n1 * (x1 + c) / (n1 + 2.0 * c) + n2 * (x2 + c) / (n2 + 2.0 * c)
}

/// Standardized score for `θ` at `(p1, p2)`:
/// `[1/(n1p1q1) + 1/(n2p2q2)]^{-1/2} [(x̄1−p1)/(p1q1) − (x̄2−p2)/(p2q2)]`.
pub fn sbar_at_probs(data: &TwoBinomialData, p1: f64, p2: f64) -> f64 {
    let (n1, n2) = (data.n1 as f64, data.n2 as f64);
    let (v1, v2) = (p1 * (1.0 - p1), p2 * (1.0 - p2));
    let scale = (1.0 / (n1 * v1) + 1.0 / (n2 * v2)).powf(-0.5);
    scale * ((data.x1 as f64 / n1 - p1) / v1 - (data.x2 as f64 / n2 - p2) / v2)
}

/// `s̄(θ)` with the nuisance fixed by `rule`.
pub fn profiled_sbar(data: &TwoBinomialData, theta: f64, rule: NuisanceRule) -> Result<f64> {
    let family = TwoBinomial::new(data.n1, data.n2)?;
    let (p1, p2) = family.probs(theta, rule.resolve(data))?;
    Ok(sbar_at_probs(data, p1, p2))
}

/// `I⊥ = (1/(n1p1q1) + 1/(n2p2q2))⁻¹`.
pub fn perp_information(n1: u32, n2: u32, p1: f64, p2: f64) -> f64 {
    1.0 / (1.0 / (n1 as f64 * p1 * (1.0 - p1)) + 1.0 / (n2 as f64 * p2 * (1.0 - p2)))
}

/// z-standard interval for the log odds ratio: the connected component of
/// `{θ : s̄(θ)² ≤ z²}` (or a one-sided version) containing the root of `s̄`.
/// `equal_sign` selects `≤` (closed endpoints) or `<` (open endpoints).
pub fn z_interval(data: &TwoBinomialData, z: f64, rule: NuisanceRule, side: Side, equal_sign: bool) -> Result<IntervalResult> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidArgument(format!("z must be positive, got {z}")));
    }
    let family = TwoBinomial::new(data.n1, data.n2)?;
    let nuisance = rule.resolve(data);
    if !(nuisance > 0.0 && nuisance < data.total()) {
        return Err(Error::InfeasibleNuisance { value: nuisance, total: data.total() });
    }
    let (a, b) = family.p1_range(nuisance);
    let (lo, hi) = (a + CLIP, b - CLIP);
    if lo >= hi {
        return Err(Error::InfeasibleNuisance { value: nuisance, total: data.total() });
    }
    let sbar = |p1: f64| sbar_at_probs(data, p1, family.p2_given_p1(p1, nuisance));
    // h ≤ 0 on the acceptance set
    let h = |p1: f64| {
        let s = sbar(p1);
        match side {
            Side::TwoSided => s.abs() - z,
            Side::LowerOnly => s - z,
            Side::UpperOnly => -z - s,
        }
    };
    let mut out = IntervalResult {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
        closed_lower: false,
        closed_upper: false,
        z: Some(z),
        side,
        boundary_note: None,
        flags: Vec::new(),
    };

    let anchor = if sbar(lo) <= 0.0 {
        lo
    } else if sbar(hi) >= 0.0 {
        hi
    } else {
        bisect(sbar, lo, hi, 0.0).unwrap_or(lo)
    };
    if h(anchor) > 0.0 {
        out.flags.push("root of s̄ not inside the acceptance set; whole line returned".into());
        return Ok(out);
    }

    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64).collect();
    // walk outward from the anchor to the first point outside the acceptance set
    let mut left_bracket = None;
    let mut prev = anchor;
    for &u in grid.iter().rev().filter(|&&u| u < anchor) {
        if h(u) > 0.0 {
            left_bracket = Some((u, prev));
            break;
        }
        prev = u;
    }
    let mut right_bracket = None;
    prev = anchor;
    for &u in grid.iter().filter(|&&u| u > anchor) {
        if h(u) > 0.0 {
            right_bracket = Some((prev, u));
            break;
        }
        prev = u;
    }
    let mut notes = Vec::new();
    match left_bracket.and_then(|(u, v)| bisect(h, u, v, 0.0)) {
        Some(r) if r - lo > CLIP_FLAG => {
            out.lower = family.theta_given_p1(r, nuisance);
            out.closed_lower = equal_sign;
        }
        _ => notes.push("lower endpoint −∞"),
    }
    match right_bracket.and_then(|(u, v)| bisect(h, u, v, 0.0)) {
        Some(r) if hi - r > CLIP_FLAG => {
            out.upper = family.theta_given_p1(r, nuisance);
            out.closed_upper = equal_sign;
        }
        _ => notes.push("upper endpoint +∞"),
    }
    if !notes.is_empty() && side == Side::TwoSided {
        out.boundary_note = Some(notes.join("; "));
    }
    Ok(out)
}

/// Whether the z-standard set for `data` contains `theta`. Data whose nuisance
/// rule lands on the boundary of `(0, n1+n2)` make the cleared inequality
/// `0 ≤ 0`: covered with `≤`, not covered with `<`.
pub fn z_covers(data: &TwoBinomialData, theta: f64, z: f64, rule: NuisanceRule, equal_sign: bool) -> Result<bool> {
    match z_interval(data, z, rule, Side::TwoSided, equal_sign) {
        Ok(ci) => Ok(ci.contains(theta)),
        Err(Error::InfeasibleNuisance { .. }) => Ok(equal_sign),
        Err(e) => Err(e),
    }
}

/// Noncentral hypergeometric law of `x1` given `x1 + x2 = t`.
#[derive(Debug, Clone)]
pub struct ConditionalLaw {
    pub min: u32,
    pub max: u32,
    /// `log C(n1,k) + log C(n2,t−k)` for `k = min..=max`.
    base: Vec<f64>,
}

impl ConditionalLaw {
    pub fn new(n1: u32, n2: u32, t: u32) -> Self {
        let (c1, c2) = (ln_choose_table(n1), ln_choose_table(n2));
        let min = t.saturating_sub(n2);
        let max = t.min(n1);
        let base = (min..=max).map(|k| c1[k as usize] + c2[(t - k) as usize]).collect();
        Self { min, max, base }
    }

    /// Probabilities over `min..=max` at log odds ratio `log_psi`.
    pub fn pmf(&self, log_psi: f64) -> Vec<f64> {
        let lw: Vec<f64> = self.base.iter().enumerate().map(|(i, b)| b + (self.min as usize + i) as f64 * log_psi).collect();
        let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// `Pr(X ≥ x)`.
    pub fn upper_tail(&self, x: u32, log_psi: f64) -> f64 {
        let p = self.pmf(log_psi);
        p[(x.max(self.min) - self.min) as usize..].iter().sum()
    }

    /// `Pr(X ≤ x)`.
    pub fn lower_tail(&self, x: u32, log_psi: f64) -> f64 {
        let p = self.pmf(log_psi);
        p[..=((x.min(self.max) - self.min) as usize)].iter().sum()
    }
}

/// Fisher's exact interval for the odds ratio `ψ`, inverting the two one-sided
/// conditional tests at `(1 − confidence)/2` each.
pub fn fisher_exact_interval(data: &TwoBinomialData, confidence: f64) -> Result<IntervalResult> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {confidence} outside (0,1)")));
    }
    let alpha = 0.5 * (1.0 - confidence);
    let t = data.x1 + data.x2;
    let law = ConditionalLaw::new(data.n1, data.n2, t);
    let mut out = IntervalResult {
        lower: 0.0,
        upper: f64::INFINITY,
        closed_lower: false,
        closed_upper: false,
        z: None,
        side: Side::TwoSided,
        boundary_note: None,
        flags: Vec::new(),
    };
    if law.min == law.max {
        out.flags.push("conditional support is a single point".into());
        out.boundary_note = Some("degenerate margin; interval is (0, ∞)".into());
        return Ok(out);
    }
    let mut notes = Vec::new();
    if data.x1 == law.min {
        notes.push("lower endpoint 0");
    } else {
        match bisect(|l| law.upper_tail(data.x1, l) - alpha, -50.0, 50.0, 0.0) {
            Some(l) => {
                out.lower = l.exp();
                out.closed_lower = true;
            }
            None => out.flags.push("lower tail equation not bracketed on [−50, 50]".into()),
        }
    }
    if data.x1 == law.max {
        notes.push("upper endpoint ∞");
    } else {
        match bisect(|l| law.lower_tail(data.x1, l) - alpha, -50.0, 50.0, 0.0) {
            Some(l) => {
                out.upper = l.exp();
                out.closed_upper = true;
            }
            None => out.flags.push("upper tail equation not bracketed on [−50, 50]".into()),
        }
    }
    if !notes.is_empty() {
        out.boundary_note = Some(notes.join("; "));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ZStandard,
    FisherExact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageCell {
    pub or_true: f64,
    pub p1: f64,
    pub p2: f64,
    /// Plus-c constant (`None` for Fisher's exact interval).
    pub c: Option<f64>,
    pub equal_sign: bool,
    pub method: Method,
    pub coverage: f64,
}

/// The (odds ratio, p1, p2) rows of the published coverage table, with
/// `n1 = 20`, `n2 = 30`.
pub fn table1_cells() -> Vec<(f64, f64, f64)> {
    vec![
        (1.0, 0.01, 0.01),
        (1.0, 0.20, 0.20),
        (1.0, 0.50, 0.50),
        (1.0, 0.70, 0.70),
        (1.0, 0.90, 0.90),
        (1.5, 0.015, 0.01),
        (1.5, 0.273, 0.20),
        (1.5, 0.60, 0.50),
        (1.5, 0.778, 0.70),
        (1.5, 0.931, 0.90),
        (4.0, 0.039, 0.01),
        (4.0, 0.50, 0.20),
        (4.0, 0.80, 0.50),
        (4.0, 0.903, 0.70),
        (4.0, 0.973, 0.90),
    ]
}

fn binomial_log_pmf(n: u32, p: f64) -> Vec<f64> {
    let nf = n as f64;
    ln_choose_table(n).iter().enumerate().map(|(k, lc)| lc + xlny(k as f64, p) + xlny(nf - k as f64, 1.0 - p)).collect()
}

/// `Σ exp(l)` over the selected log masses, largest first.
fn sum_log_masses(mut logs: Vec<f64>) -> f64 {
    logs.sort_by(|a, b| b.total_cmp(a));
    logs.iter().map(|l| l.exp()).sum()
}

/// Acceptance region of one interval method over all outcomes: a predicate on
/// `(x1, x2, θ)`.
struct Coverer {
    n2: u32,
    /// Per outcome: the interval in `θ`, or `Err(covers)` for degenerate data.
    intervals: Vec<std::result::Result<IntervalResult, bool>>,
}

impl Coverer {
    fn covers(&self, x1: u32, x2: u32, theta: f64) -> bool {
        match &self.intervals[(x1 * (self.n2 + 1) + x2) as usize] {
            Ok(ci) => ci.contains(theta),
            Err(c) => *c,
        }
    }
}

fn outcomes(n1: u32, n2: u32) -> Vec<TwoBinomialData> {
    (0..=n1).flat_map(|x1| (0..=n2).map(move |x2| TwoBinomialData { x1, x2, n1, n2 })).collect()
}

fn z_coverer(n1: u32, n2: u32, z: f64, c: f64, equal_sign: bool) -> Result<Coverer> {
    let rule = if c == 0.0 { NuisanceRule::Profiled } else { NuisanceRule::PlusC(c) };
    let intervals = outcomes(n1, n2)
        .par_iter()
        .map(|d| match z_interval(d, z, rule, Side::TwoSided, equal_sign) {
            Ok(ci) => Ok(Ok(ci)),
            Err(Error::InfeasibleNuisance { .. }) => Ok(Err(equal_sign)),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Coverer { n2, intervals })
}

fn fisher_coverer(n1: u32, n2: u32, confidence: f64, equal_sign: bool) -> Result<Coverer> {
    let intervals = outcomes(n1, n2)
        .par_iter()
        .map(|d| {
            let mut ci = fisher_exact_interval(d, confidence)?.map(|psi| psi.ln());
            ci.closed_lower &= equal_sign;
            ci.closed_upper &= equal_sign;
            Ok(Ok(ci))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Coverer { n2, intervals })
}

fn coverage_of(coverer: &Coverer, n1: u32, n2: u32, p1: f64, p2: f64, theta: f64) -> f64 {
    let (l1, l2) = (binomial_log_pmf(n1, p1), binomial_log_pmf(n2, p2));
    let mut logs = Vec::new();
    for x1 in 0..=n1 {
        for x2 in 0..=n2 {
            if coverer.covers(x1, x2, theta) {
                logs.push(l1[x1 as usize] + l2[x2 as usize]);
            }
        }
    }
    sum_log_masses(logs)
}

/// Exact coverage of the z-standard intervals (for each plus-c constant and
/// each `≤`/`<` convention) and of Fisher's exact interval at confidence
/// `fisher_confidence`. The true log odds ratio is `log(or_true)`.
pub fn coverage_table(
    n1: u32,
    n2: u32,
    cells: &[(f64, f64, f64)],
    c_list: &[f64],
    z: f64,
    fisher_confidence: Option<f64>,
) -> Result<Vec<CoverageCell>> {
    for &(or, p1, p2) in cells {
        if !(or > 0.0 && p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0) {
            return Err(Error::InvalidArgument(format!("cell ({or}, {p1}, {p2}) is not interior")));
        }
    }
    if let Some(c) = c_list.iter().find(|c| c.is_nan() || **c < 0.0) {
        return Err(Error::InvalidArgument(format!("plus-c constant {c} is negative")));
    }
    let mut methods: Vec<(Option<f64>, bool, Method, Coverer)> = Vec::new();
    for equal_sign in [true, false] {
        for &c in c_list {
            methods.push((Some(c), equal_sign, Method::ZStandard, z_coverer(n1, n2, z, c, equal_sign)?));
        }
        if let Some(conf) = fisher_confidence {
            methods.push((None, equal_sign, Method::FisherExact, fisher_coverer(n1, n2, conf, equal_sign)?));
        }
    }
    let mut out = Vec::with_capacity(cells.len() * methods.len());
    for &(or_true, p1, p2) in cells {
        let theta = or_true.ln();
        for (c, equal_sign, method, coverer) in &methods {
            out.push(CoverageCell {
                or_true,
                p1,
                p2,
                c: *c,
                equal_sign: *equal_sign,
                method: *method,
                coverage: coverage_of(coverer, n1, n2, p1, p2, theta),
            });
        }
    }
    Ok(out)
}

/// One-sided score-test tails at the Fisher exact endpoints for one outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndpointTails {
    pub x1: u32,
    pub x2: u32,
    /// `Pr(s̄ ≥ s̄_obs)` under the model at the lower endpoint.
    pub left_tail: f64,
    /// `Pr(s̄ ≤ s̄_obs)` under the model at the upper endpoint.
    pub right_tail: f64,
}

impl EndpointTails {
    pub fn exceeds(&self, level: f64) -> bool {
        self.left_tail > level || self.right_tail > level
    }
}

/// Tie tolerance when ordering outcomes by the standardized score.
const TIE: f64 = 1e-12;

/// For each interior outcome, the Fisher exact interval at `confidence` and
/// the one-sided score-test tail probabilities at its endpoints. At an
/// endpoint `θ_E` the model is `(θ_E, x1 + x2)`; every outcome is scored by
/// `s̄` at that model and the tail is the mass at least as extreme as the
/// observed outcome.
pub fn fisher_endpoint_tails(n1: u32, n2: u32, confidence: f64) -> Result<Vec<EndpointTails>> {
    let family = TwoBinomial::new(n1, n2)?;
    let cells: Vec<(u32, u32)> = (1..n1).flat_map(|x1| (1..n2).map(move |x2| (x1, x2))).collect();
    cells
        .par_iter()
        .map(|&(x1, x2)| {
            let data = TwoBinomialData::new(x1, x2, n1, n2)?;
            let ci = fisher_exact_interval(&data, confidence)?;
            let nuisance = (x1 + x2) as f64;
            let tail_at = |psi: f64, upper: bool| -> Result<f64> {
                if !(psi > 0.0 && psi.is_finite()) {
                    return Ok(f64::NAN);
                }
                let (p1, p2) = family.probs(psi.ln(), nuisance)?;
                let s_obs = sbar_at_probs(&data, p1, p2);
                let (l1, l2) = (binomial_log_pmf(n1, p1), binomial_log_pmf(n2, p2));
                let mut logs = Vec::new();
                for y1 in 0..=n1 {
                    for y2 in 0..=n2 {
                        let s = sbar_at_probs(&TwoBinomialData { x1: y1, x2: y2, n1, n2 }, p1, p2);
                        let extreme = if upper { s >= s_obs - TIE } else { s <= s_obs + TIE };
                        if extreme {
                            logs.push(l1[y1 as usize] + l2[y2 as usize]);
                        }
                    }
                }
                Ok(sum_log_masses(logs))
            };
            Ok(EndpointTails { x1, x2, left_tail: tail_at(ci.lower, true)?, right_tail: tail_at(ci.upper, false)? })
        })
        .collect()
}
