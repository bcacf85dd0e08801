use genestim::family::{score, TwoBinomial};
use genestim::intervals::Side;
use genestim::odds_ratio::{
    coverage_table, fisher_exact_interval, profiled_sbar, z_covers, z_interval, NuisanceRule, TwoBinomialData, Z95,
};
use genestim::ParamPoint;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Poly = Vec<f64>;

fn mul(a: &[f64], b: &[f64]) -> Poly {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn add(a: &[f64], b: &[f64]) -> Poly {
    (0..a.len().max(b.len())).map(|i| a.get(i).unwrap_or(&0.0) + b.get(i).unwrap_or(&0.0)).collect()
}

fn scale(a: &[f64], c: f64) -> Poly {
    a.iter().map(|x| x * c).collect()
}

fn eval(a: &[f64], x: f64) -> f64 {
    a.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn derivative(a: &[f64]) -> Poly {
    a.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
}

/// Real roots of a polynomial via the eigenvalues of its companion matrix,
/// each polished by Newton steps.
fn real_roots(a: &[f64]) -> Vec<f64> {
    let d = a.len() - 1;
    let lead = a[d];
    let mut c = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        c[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        c[(i, d - 1)] = -a[i] / lead;
    }
    let da = derivative(a);
    c.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-6)
        .map(|z| {
            let mut x = z.re;
            for _ in 0..5 {
                let step = eval(a, x) / eval(&da, x);
                if step.is_finite() {
                    x -= step;
                }
            }
            x
        })
        .collect()
}

/// `n1 n2 A² − z² (n1 v1 + n2 v2) v1 v2` in `p1` on the line `n1 p1 + n2 p2 = t`,
/// where `A = (x̄1 − p1) v2 − (x̄2 − p2) v1`; zero exactly where `s̄² = z²`.
fn sextic(d: &TwoBinomialData, t: f64, z: f64) -> Poly {
    let (n1, n2) = (d.n1 as f64, d.n2 as f64);
    let p1 = vec![0.0, 1.0];
    let p2 = vec![t / n2, -n1 / n2];
    let v1 = add(&p1, &scale(&mul(&p1, &p1), -1.0));
    let v2 = add(&p2, &scale(&mul(&p2, &p2), -1.0));
    let r1 = add(&[d.x1 as f64 / n1], &scale(&p1, -1.0));
    let r2 = add(&[d.x2 as f64 / n2], &scale(&p2, -1.0));
    let a = add(&mul(&r1, &v2), &scale(&mul(&r2, &v1), -1.0));
    let lhs = scale(&mul(&a, &a), n1 * n2);
    let rhs = scale(&mul(&mul(&add(&scale(&v1, n1), &scale(&v2, n2)), &v1), &v2), z * z);
    add(&lhs, &scale(&rhs, -1.0))
}

#[test]
fn endpoints_match_the_sextic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let tb = TwoBinomial::new(20, 30).unwrap();
    for _ in 0..10 {
        let data = TwoBinomialData::new(rng.random_range(1..20), rng.random_range(1..30), 20, 30).unwrap();
        let z = rng.random_range(1.0..3.0);
        let t = (data.x1 + data.x2) as f64;
        let ci = z_interval(&data, z, NuisanceRule::Profiled, Side::TwoSided, true).unwrap();
        let (lo, hi) = tb.p1_range(t);
        let roots: Vec<f64> = real_roots(&sextic(&data, t, z)).into_iter().filter(|r| *r > lo && *r < hi).collect();
        let anchor = data.x1 as f64 / 20.0;
        let below = roots.iter().copied().filter(|r| *r < anchor).fold(f64::NAN, f64::max);
        let above = roots.iter().copied().filter(|r| *r > anchor).fold(f64::NAN, f64::min);
        let expect = |r: f64| if r.is_nan() { f64::NAN } else { tb.theta_given_p1(r, t) };
        let (el, eu) = (expect(below), expect(above));
        let close = |a: f64, b: f64| (a.is_infinite() && b.is_nan()) || (a - b).abs() < 1e-7 * b.abs().max(1.0);
        assert!(close(ci.lower, el) && close(ci.upper, eu), "{data:?} z={z}: {ci:?} vs ({el}, {eu})");
    }
}

#[test]
fn intervals_agree_with_a_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..50 {
        let data = TwoBinomialData::new(rng.random_range(0..=20), rng.random_range(0..=30), 20, 30).unwrap();
        let rule = if i % 2 == 0 { NuisanceRule::PlusC(0.5) } else { NuisanceRule::Profiled };
        let Ok(ci) = z_interval(&data, Z95, rule, Side::TwoSided, true) else {
            assert!(matches!(rule, NuisanceRule::Profiled));
            continue;
        };
        let inside = |theta: f64| profiled_sbar(&data, theta, rule).map(|s| s.abs() <= Z95);
        let (a, b) = (ci.lower.max(-12.0), ci.upper.min(12.0));
        for k in 1..400 {
            let theta = a + (b - a) * k as f64 / 400.0;
            assert!(inside(theta).unwrap(), "{data:?} {rule:?}: {theta} in {ci:?}");
        }
        for edge in [ci.lower - 1e-6, ci.upper + 1e-6].into_iter().filter(|e| e.is_finite()) {
            assert!(!inside(edge).unwrap(), "{data:?} {rule:?}: {edge} outside {ci:?}");
        }
    }
}

#[test]
fn nuisance_score_root_is_total_count() {
    let tb = TwoBinomial::new(20, 30).unwrap();
    for (x1, x2) in [(3, 17), (10, 1), (19, 29)] {
        for theta in [-2.0, 0.0, 1.3] {
            let s = score(&tb, &[x1 as f64, x2 as f64], &ParamPoint::new(vec![theta], vec![(x1 + x2) as f64])).unwrap();
            assert!(s[1].abs() < 1e-10, "{x1},{x2} θ={theta}: {}", s[1]);
        }
    }
}

#[test]
fn degenerate_tables_follow_the_equal_sign() {
    for (x1, x2) in [(0, 0), (20, 30)] {
        let data = TwoBinomialData::new(x1, x2, 20, 30).unwrap();
        assert!(z_covers(&data, 0.7, Z95, NuisanceRule::Profiled, true).unwrap());
        assert!(!z_covers(&data, 0.7, Z95, NuisanceRule::Profiled, false).unwrap());
        assert!(z_covers(&data, 0.7, Z95, NuisanceRule::PlusC(0.5), false).unwrap());
    }
}

#[test]
fn closed_sets_cover_at_least_as_often() {
    let cells = [(2.0, 0.3, 0.176), (0.5, 0.05, 0.095), (1.0, 0.95, 0.95)];
    let table = coverage_table(12, 9, &cells, &[0.0, 0.25], Z95, None).unwrap();
    for row in table.chunks(4) {
        for k in 0..2 {
            assert!(row[k].equal_sign && !row[k + 2].equal_sign);
            assert!(row[k].coverage >= row[k + 2].coverage);
        }
    }
}

/// `Pr(X ≥ x)` (or `≤`) under the noncentral hypergeometric law by brute force.
fn hypergeometric_tail(n1: u32, n2: u32, t: u32, x: u32, psi: f64, upper: bool) -> f64 {
    let choose = |n: u32, k: u32| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let lo = t.saturating_sub(n2);
    let hi = t.min(n1);
    let w: Vec<(u32, f64)> = (lo..=hi).map(|k| (k, choose(n1, k) * choose(n2, t - k) * psi.powi(k as i32))).collect();
    let total: f64 = w.iter().map(|(_, v)| v).sum();
    w.iter().filter(|(k, _)| if upper { *k >= x } else { *k <= x }).map(|(_, v)| v).sum::<f64>() / total
}

#[test]
fn fisher_endpoints_have_exact_tail_mass() {
    for (x1, x2) in [(5, 10), (12, 4), (1, 20), (19, 25)] {
        let data = TwoBinomialData::new(x1, x2, 20, 30).unwrap();
        let ci = fisher_exact_interval(&data, 0.95).unwrap();
        let t = x1 + x2;
        assert!((hypergeometric_tail(20, 30, t, x1, ci.lower, true) - 0.025).abs() < 1e-8, "{ci:?}");
        assert!((hypergeometric_tail(20, 30, t, x1, ci.upper, false) - 0.025).abs() < 1e-8, "{ci:?}");
    }
}
