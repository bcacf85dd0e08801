use std::sync::Arc;

use genestim::family::{
    builtin_families, fisher_info, numeric_score, score, BernoulliSum, BernoulliSumLogit, IidLocation, LocationKernel,
    NormalMean, NormalScale, Support, TwoBinomial,
};
use genestim::{ExpectationEngine, ModelFamily, ParamPoint};
use proptest::prelude::*;

fn finite_cases() -> Vec<(Arc<dyn ModelFamily>, ParamPoint)> {
    let tb = TwoBinomial::new(4, 6).unwrap();
    let (th, nu) = tb.params_from_probs(0.3, 0.6).unwrap();
    vec![
        (Arc::new(BernoulliSum::new(7).unwrap()), ParamPoint::scalar(0.35)),
        (Arc::new(BernoulliSumLogit::new(7).unwrap()), ParamPoint::scalar(-0.4)),
        (Arc::new(tb), ParamPoint::new(vec![th], vec![nu])),
    ]
}

#[test]
fn exact_score_has_mean_zero() {
    let engine = ExpectationEngine::exact();
    for (fam, t) in finite_cases() {
        let e = engine.expect(fam.as_ref(), &t, |y| score(fam.as_ref(), y, &t).unwrap()).unwrap();
        for v in e.value {
            assert!(v.abs() < 1e-12, "{}: {v}", fam.name());
        }
    }
}

#[test]
fn probabilities_sum_to_one() {
    for (fam, t) in finite_cases() {
        let total: f64 = fam.pmf(&t).unwrap().iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "{}", fam.name());
    }
}

#[test]
fn monte_carlo_score_mean_is_within_noise() {
    let engine = ExpectationEngine::monte_carlo(40_000, 3);
    let cases: Vec<(Arc<dyn ModelFamily>, ParamPoint)> = vec![
        (Arc::new(NormalMean::new(10).unwrap()), ParamPoint::scalar(0.7)),
        (Arc::new(NormalScale::new(5).unwrap()), ParamPoint::scalar(1.3)),
        (Arc::new(IidLocation::new(4, LocationKernel::StudentT3).unwrap()), ParamPoint::scalar(-1.0)),
        (Arc::new(IidLocation::new(4, LocationKernel::Cauchy).unwrap()), ParamPoint::scalar(2.0)),
    ];
    for (fam, t) in cases {
        let e = engine.expect(fam.as_ref(), &t, |y| score(fam.as_ref(), y, &t).unwrap()).unwrap();
        let se = e.se.as_ref().expect("Monte Carlo standard error")[0];
        assert!(e.value[0].abs() < 5.0 * se, "{}: {} (se {se})", fam.name(), e.value[0]);
    }
}

#[test]
fn analytic_scores_match_numeric_differentiation() {
    let mut cases = finite_cases();
    cases.push((Arc::new(NormalScale::new(3).unwrap()), ParamPoint::scalar(0.8)));
    cases.push((Arc::new(IidLocation::new(3, LocationKernel::StudentT3).unwrap()), ParamPoint::scalar(0.2)));
    for (fam, t) in cases {
        let points: Vec<Vec<f64>> = match fam.support() {
            Support::Finite(s) => s.outcomes().to_vec(),
            _ => vec![vec![0.3, -1.2, 2.5]],
        };
        for y in points {
            let (a, b) = (fam.analytic_score(&y, &t).unwrap(), numeric_score(fam.as_ref(), &y, &t).unwrap());
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-6 * u.abs().max(1.0), "{} at {y:?}: {u} vs {v}", fam.name());
            }
        }
    }
}

#[test]
fn two_binomial_nuisance_score_is_orthogonal() {
    let engine = ExpectationEngine::exact();
    let tb = TwoBinomial::new(20, 30).unwrap();
    for (p1, p2) in [(0.05, 0.9), (0.5, 0.5), (0.77, 0.12)] {
        let (th, nu) = tb.params_from_probs(p1, p2).unwrap();
        let fi = fisher_info(&engine, &tb, &ParamPoint::new(vec![th], vec![nu])).unwrap();
        assert!(fi.cross[(0, 0)].abs() < 1e-10);
        let perp = fi.perp.unwrap()[(0, 0)];
        let formula = 1.0 / (1.0 / (20.0 * p1 * (1.0 - p1)) + 1.0 / (30.0 * p2 * (1.0 - p2)));
        assert!((perp - formula).abs() < 1e-10 * formula);
    }
}

#[test]
fn every_builtin_family_builds() {
    for ctor in builtin_families() {
        let sizes: Vec<u32> = ctor.sizes.iter().map(|_| 5).collect();
        let fam = (ctor.build)(&sizes).unwrap();
        assert_eq!(fam.dim_interest(), 1, "{}", ctor.name);
        assert!((ctor.build)(&[]).is_err());
    }
}

proptest! {
    #[test]
    fn two_binomial_parameters_round_trip(p1 in 1e-4f64..0.9999, p2 in 1e-4f64..0.9999) {
        let tb = TwoBinomial::new(20, 30).unwrap();
        let (th, nu) = tb.params_from_probs(p1, p2).unwrap();
        let (q1, q2) = tb.probs(th, nu).unwrap();
        prop_assert!((q1 - p1).abs() < 1e-12 && (q2 - p2).abs() < 1e-12, "{q1} {q2}");
    }

    #[test]
    fn logit_family_is_a_reparameterization(p in 0.01f64..0.99, y in 0u32..=12) {
        let (a, b) = (BernoulliSum::new(12).unwrap(), BernoulliSumLogit::new(12).unwrap());
        let eta = (p / (1.0 - p)).ln();
        let la = a.log_density(&[y as f64], &ParamPoint::scalar(p));
        let lb = b.log_density(&[y as f64], &ParamPoint::scalar(eta));
        prop_assert!((la - lb).abs() < 1e-10);
        let sa = score(&a, &[y as f64], &ParamPoint::scalar(p)).unwrap()[0];
        let sb = score(&b, &[y as f64], &ParamPoint::scalar(eta)).unwrap()[0];
        prop_assert!((sb - sa * p * (1.0 - p)).abs() < 1e-9);
    }
}
