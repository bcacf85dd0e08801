mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use genestim::estimation::{
    self, bernoulli_suite, biased_bernoulli_estimator, check_score_equation, information, orthogonalize,
    orthogonalized_score, two_binomial_suite, EstimatorRegistry, PreEstimator,
};
use genestim::family::{builtin_families, fisher_info, BernoulliSum, BernoulliSumLogit, TwoBinomial};
use genestim::intervals::{self, Side};
use genestim::linalg;
use genestim::location_lab::{self, DataFamily, McRunConfig};
use genestim::odds_ratio::{self, NuisanceRule, TwoBinomialData};
use genestim::{Error, ExpectationEngine, ModelFamily, ParamPoint};

use output::{num, Run};

#[derive(Parser, Debug)]
#[command(name = "genestim", version, about = "Generalized estimation toolkit")]
struct Cli {
    /// Directory for CSV/JSON artifacts and manifest.json.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Master seed for Monte Carlo work.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Standardized score and likelihood-ratio curves for a binomial count.
    BinomCurves {
        #[arg(long, default_value_t = 20)]
        n: u32,
        /// Observed count, marked as realized in the output.
        #[arg(long)]
        y: Option<u32>,
        /// Probabilities at which to emit vertical slices.
        #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.5])]
        slices: Vec<f64>,
    },
    /// z-standard and exact-tail intervals for a binomial probability.
    BinomCi {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        y: u32,
        #[arg(long, default_value_t = 1.959964)]
        z: f64,
        #[arg(long, default_value = "two-sided")]
        side: Side,
        /// Tail area for the exact-tail interval.
        #[arg(long, default_value_t = 0.025)]
        alpha: f64,
    },
    /// Fisher information and Λ-information of the registered estimators.
    InfoReport {
        #[arg(long)]
        family: String,
        /// Family sizes, e.g. `20` or `20,30`.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<u32>,
        /// Parameter point as JSON, e.g. '{"theta":[0.5]}'.
        #[arg(long)]
        point: String,
        /// Monte Carlo replications for continuous families.
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
    },
    /// Mean/median/t3-MLE comparison with ζ-curves and efficiencies.
    ZetaLab {
        #[arg(long, default_value = "normal")]
        family: DataFamily,
        #[arg(long, default_value_t = 10)]
        n: u32,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
    },
    /// z-standard and Fisher exact intervals for one 2×2 table.
    OrInterval {
        #[arg(long)]
        x1: u32,
        #[arg(long)]
        x2: u32,
        #[arg(long, default_value_t = 20)]
        n1: u32,
        #[arg(long, default_value_t = 30)]
        n2: u32,
        #[arg(long, default_value_t = odds_ratio::Z95)]
        z: f64,
        /// `profiled`, `plus-c:<c>` or `fixed:<value>`.
        #[arg(long, default_value = "profiled")]
        rule: String,
        #[arg(long, default_value = "two-sided")]
        side: Side,
        /// Use `<` instead of `≤` (open endpoints).
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Exact coverage table for the z-standard and Fisher exact intervals.
    OrTable1 {
        #[arg(long, default_value_t = 20)]
        n1: u32,
        #[arg(long, default_value_t = 30)]
        n2: u32,
        #[arg(long, default_value_t = odds_ratio::Z95)]
        z: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 1.0])]
        c: Vec<f64>,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// One-sided score tails at the Fisher exact interval endpoints.
    OrFig5 {
        #[arg(long, default_value_t = 20)]
        n1: u32,
        #[arg(long, default_value_t = 30)]
        n2: u32,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        /// Tail level reported as exceeded.
        #[arg(long, default_value_t = 0.025)]
        level: f64,
    },
    /// Runs the invariant checks and prints one line per property.
    Verify {
        /// Also check a biased, unorthogonalized estimator (expected to be flagged).
        #[arg(long)]
        with_biased: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::BinomCurves { .. } => "binom-curves",
            Command::BinomCi { .. } => "binom-ci",
            Command::InfoReport { .. } => "info-report",
            Command::ZetaLab { .. } => "zeta-lab",
            Command::OrInterval { .. } => "or-interval",
            Command::OrTable1 { .. } => "or-table1",
            Command::OrFig5 { .. } => "or-fig5",
            Command::Verify { .. } => "verify",
        }
    }
}

enum Failure {
    Schema(String),
    Numeric(String),
    Checks(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) | Error::OutsideDomain(m) => Failure::Schema(m),
            other => Failure::Numeric(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numeric(format!("i/o: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Schema(format!("json: {e}"))
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("schema", &e.to_string(), 2),
    };
    if let Ok(t) = std::env::var("GENESTIM_THREADS") {
        match t.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => return fail("schema", &format!("GENESTIM_THREADS must be a positive integer, got `{t}`"), 2),
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Schema(m)) => fail("schema", &m, 2),
        Err(Failure::Numeric(m)) => fail("numeric", &m, 3),
        Err(Failure::Checks(n)) => fail("verify", &format!("{n} properties failed"), 1),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message.trim(), "exit_code": code }));
    ExitCode::from(code)
}

fn run(cli: &Cli) -> CmdResult {
    let seed = cli.seed;
    let new_run = |params: Value| Run::new(&cli.out_dir, cli.command.name(), seed, params);
    match &cli.command {
        Command::BinomCurves { n, y, slices } => {
            let mut run = new_run(json!({ "n": n, "y": y, "slices": slices, "grid": "512 equispaced on [1e-4, 1-1e-4]" }));
            let grid = intervals::default_grid();
            let score = intervals::score_curves(*n, &grid)?;
            let llr = intervals::llr_curves(*n, &grid)?;
            for (name, curves) in [("fig1_score_curves.csv", &score), ("fig2_llr_curves.csv", &llr)] {
                let rows = curves
                    .points(*y)
                    .iter()
                    .map(|p| vec![p.y.to_string(), num(p.p), num(p.value), p.realized.to_string(), p.slope_sign.to_string()])
                    .collect();
                run.csv(name, &["y", "p", "value", "realized", "slope_sign"], rows);
            }
            let mut rows = Vec::new();
            for &p in slices {
                for (label, curves) in [("score", &score), ("llr", &llr)] {
                    let s = intervals::vertical_slice(curves, p)?;
                    for r in &s.rows {
                        rows.push(vec![
                            label.into(),
                            num(p),
                            r.y.to_string(),
                            num(r.value),
                            num(r.mass),
                            r.slope_sign.to_string(),
                        ]);
                    }
                }
            }
            run.csv("slices.csv", &["curve", "p", "y", "value", "mass", "slope_sign"], rows);
            if let Some(y) = y {
                let tails: Vec<Value> = slices
                    .iter()
                    .map(|&p| intervals::llr_tail(*n, *y, p).map(|t| json!({ "p": p, "tail": t })))
                    .collect::<genestim::Result<_>>()?;
                run.json("llr_tails.json", &tails)?;
            }
            run.finish()?;
        }
        Command::BinomCi { n, y, z, side, alpha } => {
            let mut run = new_run(json!({ "n": n, "y": y, "z": z, "side": side, "alpha": alpha }));
            let ci = intervals::ci_z(*n, *y, *z, *side)?;
            let logit = intervals::ci_z_logit(*n, *y, *z, *side)?;
            let exact = intervals::tail_z_adjusted_ci(*n, *y, *alpha, *side)?;
            run.json("interval.json", &json!({ "z_standard": ci, "z_standard_log_odds": logit, "exact_tail": exact }))?;
            run.finish()?;
        }
        Command::InfoReport { family, sizes, point, reps } => {
            let theta: ParamPoint = serde_json::from_str(point)?;
            let mut run = new_run(json!({ "family": family, "sizes": sizes, "point": theta, "reps": reps }));
            let ctor = builtin_families()
                .into_iter()
                .find(|c| c.name == family)
                .ok_or_else(|| Failure::Schema(format!("unknown family `{family}`")))?;
            let fam = (ctor.build)(sizes)?;
            let engine = if matches!(fam.support(), genestim::family::Support::Finite(_)) {
                ExpectationEngine::exact()
            } else {
                ExpectationEngine::monte_carlo(*reps, seed).with_stream(genestim::rng::tag("info-report"))
            };
            let registry = registry_for(&engine, family, sizes, fam.clone())?;
            let fisher = fisher_info(&engine, fam.as_ref(), &theta)?;
            let (mut reports, mut failures) = (Vec::new(), Vec::new());
            for g in registry.iter() {
                match information(&engine, fam.as_ref(), g, &theta) {
                    Ok(r) => reports.push(serde_json::to_value(r)?),
                    Err(e) => {
                        failures.push(format!("{}: {e}", g.label()));
                        reports.push(json!({ "label": g.label(), "error": e.to_string() }));
                    }
                }
            }
            run.note("engine", serde_json::to_value(engine)?);
            run.json("info_report.json", &json!({ "family": fam.name(), "theta": theta, "fisher": fisher.to_json(), "estimators": reports }))?;
            run.finish()?;
            if !failures.is_empty() {
                return Err(Failure::Numeric(failures.join("; ")));
            }
        }
        Command::ZetaLab { family, n, reps } => {
            let mut config = McRunConfig::standard(*family, *reps, seed);
            config.n = *n;
            let mut run = new_run(serde_json::to_value(&config)?);
            run.note(
                "conventions",
                json!({
                    "quantile_probs": ".005:.01:.995 (99 points)",
                    "quantiles": "linear interpolation between order statistics",
                    "efficiency": "corr^2 with the generating family's score at location 0",
                }),
            );
            let cmp = location_lab::run_comparison(&config)?;
            let rows = cmp
                .efficiency
                .iter()
                .map(|r| vec![r.estimator.clone(), family.label().into(), num(r.eff), num(r.se), num(r.var_ratio)])
                .collect();
            run.csv("efficiency.csv", &["estimator", "data_family", "eff", "se", "var_ratio"], rows);
            let reference = cmp.archive("mean").expect("mean archive");
            let comps: Vec<_> = cmp.archives.iter().chain(&cmp.overlays).collect();
            let mut rows = Vec::new();
            for curve in location_lab::zeta_curves(reference, &comps) {
                for ((p, r), c) in curve.reference_quantile_probs.iter().zip(&curve.reference_zeta).zip(&curve.comparison_zeta) {
                    rows.push(vec![curve.estimator_label.clone(), num(*p), num(*r), num(*c)]);
                }
            }
            run.csv("zeta_curves.csv", &["curve_label", "prob", "ref_zeta", "comp_zeta"], rows);
            if let (DataFamily::Normal, Some(small)) = (family, cmp.archive(&format!("mean n={}", n - 1))) {
                let factor = (*n as f64 / (*n - 1) as f64).sqrt();
                let scaled: Vec<f64> = reference.values.iter().map(|v| v * factor).collect();
                let statistic = location_lab::ks_two_sample(&scaled, &small.values);
                let critical = location_lab::ks_critical(0.01, scaled.len(), small.values.len());
                run.json(
                    "rescale_check.json",
                    &json!({
                        "compared": [format!("mean n={n} scaled by sqrt({n}/{})", n - 1), small.label],
                        "factor": factor,
                        "ks_statistic": statistic,
                        "critical_1pct": critical,
                        "pass": statistic < critical,
                    }),
                )?;
            }
            run.note("t3_failures", json!(cmp.t3_failures));
            run.finish()?;
        }
        Command::OrInterval { x1, x2, n1, n2, z, rule, side, strict, confidence } => {
            let rule = parse_rule(rule)?;
            let mut run = new_run(json!({
                "x1": x1, "x2": x2, "n1": n1, "n2": n2, "z": z, "rule": rule, "side": side,
                "equal_sign": !strict, "confidence": confidence,
            }));
            let data = TwoBinomialData::new(*x1, *x2, *n1, *n2)?;
            let zi = match odds_ratio::z_interval(&data, *z, rule, *side, !strict) {
                Ok(ci) => serde_json::to_value(ci)?,
                Err(Error::InfeasibleNuisance { value, total }) => json!({
                    "infeasible_nuisance": value,
                    "total": total,
                    "covers_everything": !strict,
                }),
                Err(e) => return Err(e.into()),
            };
            let fisher = odds_ratio::fisher_exact_interval(&data, *confidence)?;
            run.json("interval.json", &json!({ "z_standard_log_odds_ratio": zi, "fisher_exact_odds_ratio": fisher }))?;
            run.finish()?;
        }
        Command::OrTable1 { n1, n2, z, c, confidence } => {
            let mut run = new_run(json!({ "n1": n1, "n2": n2, "z": z, "c": c, "confidence": confidence }));
            run.note("conventions", json!({ "true_theta": "log(or)", "method": "exact enumeration" }));
            let cells = odds_ratio::coverage_table(*n1, *n2, &odds_ratio::table1_cells(), c, *z, Some(*confidence))?;
            let rows = cells
                .iter()
                .map(|cell| {
                    vec![
                        num(cell.or_true),
                        num(cell.p1),
                        num(cell.p2),
                        cell.c.map(num).unwrap_or_default(),
                        cell.equal_sign.to_string(),
                        serde_json::to_value(cell.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                        num(cell.coverage),
                    ]
                })
                .collect();
            run.csv("table1.csv", &["or", "p1", "p2", "c", "equal_sign", "method", "coverage"], rows);
            run.finish()?;
        }
        Command::OrFig5 { n1, n2, confidence, level } => {
            let mut run = new_run(json!({ "n1": n1, "n2": n2, "confidence": confidence, "level": level }));
            let tails = odds_ratio::fisher_endpoint_tails(*n1, *n2, *confidence)?;
            let exceed: Vec<Value> =
                tails.iter().filter(|t| t.exceeds(*level)).map(|t| json!([t.x1, t.x2])).collect();
            run.note("exceeding_cells", json!(exceed));
            let rows = tails.iter().map(|t| vec![t.x1.to_string(), t.x2.to_string(), num(t.left_tail), num(t.right_tail)]).collect();
            run.csv("fig5_tails.csv", &["x1", "x2", "left_tail", "right_tail"], rows);
            run.finish()?;
        }
        Command::Verify { with_biased } => {
            let failed = verify(*with_biased)?;
            if failed > 0 {
                return Err(Failure::Checks(failed));
            }
        }
    }
    Ok(())
}

fn parse_rule(s: &str) -> std::result::Result<NuisanceRule, Failure> {
    let value = |v: &str| v.parse::<f64>().map_err(|_| Failure::Schema(format!("bad number in rule `{s}`")));
    match s.split_once(':') {
        None if s == "profiled" => Ok(NuisanceRule::Profiled),
        Some(("plus-c", c)) => Ok(NuisanceRule::PlusC(value(c)?)),
        Some(("fixed", v)) => Ok(NuisanceRule::Fixed(value(v)?)),
        _ => Err(Failure::Schema(format!("rule must be profiled, plus-c:<c> or fixed:<v>, got `{s}`"))),
    }
}

fn registry_for(
    engine: &ExpectationEngine,
    name: &str,
    sizes: &[u32],
    family: Arc<dyn ModelFamily>,
) -> genestim::Result<EstimatorRegistry> {
    match name {
        "bernoulli-sum" => bernoulli_suite(engine, sizes[0]),
        "two-binomial" => two_binomial_suite(engine, sizes[0], sizes[1]),
        "normal-location" => {
            let mean = PreEstimator::statistic("mean", 1, |y| vec![y[0]]);
            Ok(EstimatorRegistry::new(vec![orthogonalized_score(engine, family.clone()), orthogonalize(engine, family, &mean)]))
        }
        "normal-sample-location" | "cauchy-location" | "t3-location" | "normal-scale" => {
            let mean = PreEstimator::statistic("mean", 1, |y| vec![location_lab::mean(y)]);
            let median = PreEstimator::statistic("median", 1, |y| vec![location_lab::median(y)]);
            Ok(EstimatorRegistry::new(vec![
                orthogonalized_score(engine, family.clone()),
                orthogonalize(engine, family.clone(), &mean),
                orthogonalize(engine, family, &median),
            ]))
        }
        _ => Ok(EstimatorRegistry::new(vec![orthogonalized_score(engine, family)])),
    }
}

fn report(ok: bool, name: &str, detail: String, failed: &mut usize) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        *failed += 1;
    }
}

/// Exact-mode identity checks on the Bernoulli and two-binomial families.
fn verify(with_biased: bool) -> std::result::Result<usize, Failure> {
    let engine = ExpectationEngine::exact();
    let mut failed = 0;
    let n = 20;
    let fam: Arc<dyn ModelFamily> = Arc::new(BernoulliSum::new(n)?);
    let suite = bernoulli_suite(&engine, n)?;
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();

    let (mut bound, mut residual, mut eff) = (0.0f64, 0.0f64, 0.0f64);
    for &p in &grid {
        let t = ParamPoint::scalar(p);
        for g in suite.iter() {
            let r = information(&engine, fam.as_ref(), g, &t)?;
            bound = bound.max(r.lambda_scalar - r.fisher_bound[(0, 0)]);
            eff = eff.max(linalg::max_abs(&(&r.efficiency - &r.correlation * r.correlation.transpose())));
            residual = residual.max(linalg::max_abs(&check_score_equation(&engine, fam.as_ref(), g, &t)?));
        }
    }
    report(bound <= 1e-8, "information bound (bernoulli-sum n=20)", format!("max Λ − I = {bound:.3e}"), &mut failed);
    report(eff <= 1e-10, "efficiency equals R Rᵗ", format!("max deviation {eff:.3e}"), &mut failed);
    report(residual <= 1e-8, "score equation residual", format!("max |residual| = {residual:.3e}"), &mut failed);

    let logit: Arc<dyn ModelFamily> = Arc::new(BernoulliSumLogit::new(n)?);
    let (s_p, s_eta) = (orthogonalized_score(&engine, fam.clone()), orthogonalized_score(&engine, logit.clone()));
    let mut inv = 0.0f64;
    for &p in &grid {
        let a = estimation::standardize(&engine, fam.as_ref(), &s_p, &ParamPoint::scalar(p))?;
        let b = estimation::standardize(&engine, logit.as_ref(), &s_eta, &ParamPoint::scalar((p / (1.0 - p)).ln()))?;
        for y in 0..=n {
            inv = inv.max((a.eval(&[y as f64])[0] - b.eval(&[y as f64])[0]).abs());
        }
    }
    report(inv <= 1e-10, "standardized score parameterization invariance", format!("max deviation {inv:.3e}"), &mut failed);

    let tb = TwoBinomial::new(20, 30)?;
    let tb_fam: Arc<dyn ModelFamily> = Arc::new(tb.clone());
    let probs = [0.1, 0.3, 0.5, 0.7, 0.9];
    let (mut orth, mut perp, mut round) = (0.0f64, 0.0f64, 0.0f64);
    let s = orthogonalized_score(&engine, tb_fam.clone());
    for &p1 in &probs {
        for &p2 in &probs {
            let (th, nu) = tb.params_from_probs(p1, p2)?;
            let (q1, q2) = tb.probs(th, nu)?;
            round = round.max((q1 - p1).abs().max((q2 - p2).abs()));
            let t = ParamPoint::new(vec![th], vec![nu]);
            let fi = fisher_info(&engine, tb_fam.as_ref(), &t)?;
            orth = orth.max(fi.cross[(0, 0)].abs());
            let r = information(&engine, tb_fam.as_ref(), &s, &t)?;
            perp = perp.max((r.lambda_scalar - odds_ratio::perp_information(20, 30, p1, p2)).abs());
        }
    }
    report(round <= 1e-10, "two-binomial reparameterization round trip", format!("max error {round:.3e}"), &mut failed);
    report(orth <= 1e-10, "two-binomial score orthogonality E[s s̃]", format!("max |E[s s̃]| = {orth:.3e}"), &mut failed);
    report(perp <= 1e-8, "two-binomial Λ(s) = I⊥", format!("max deviation {perp:.3e}"), &mut failed);

    let mut tb_residual = 0.0f64;
    for (p1, p2) in [(0.3, 0.5), (0.8, 0.4)] {
        let (th, nu) = tb.params_from_probs(p1, p2)?;
        let t = ParamPoint::new(vec![th], vec![nu]);
        for g in two_binomial_suite(&engine, 20, 30)?.iter() {
            tb_residual = tb_residual.max(linalg::max_abs(&check_score_equation(&engine, tb_fam.as_ref(), g, &t)?));
        }
    }
    report(tb_residual <= 1e-8, "two-binomial score equation residual", format!("max |residual| = {tb_residual:.3e}"), &mut failed);

    if with_biased {
        let g = biased_bernoulli_estimator(n);
        let t = ParamPoint::scalar(0.3);
        let res = check_score_equation(&engine, fam.as_ref(), &g, &t)?[(0, 0)];
        let flagged = matches!(information(&engine, fam.as_ref(), &g, &t), Err(Error::ScoreEquationViolation { .. }));
        let expected = -4.0 / (n as f64 + 4.0);
        println!("FLAG score equation residual for `{}`: {res:.6e}", g.label());
        report(
            flagged && (res - expected).abs() <= 1e-8,
            "biased estimator detected with residual ∇E f",
            format!("residual {res:.10} vs ∇E f = {expected:.10}"),
            &mut failed,
        );
    }
    Ok(failed)
}
