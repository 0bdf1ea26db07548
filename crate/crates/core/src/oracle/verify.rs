//! Checks every algorithm against its stated bound on a corpus, using the
//! exact oracles for the reference values.
//!
//! Expectation bounds are checked by Monte Carlo means with 3·stderr slack,
//! deterministic bounds with 1e-9 relative slack. Algorithm errors become
//! failing records instead of aborting the run.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{exact_fl, exact_kmedians};
use crate::error::{Error, Result};
use crate::greedy::{derandomize_fl, greedy_kmedians, greedy_potential, DerandMode, FALLBACK_SLACK};
use crate::lagrangian::{pe_fl, replay_counters, solve_frac_fl, solve_frac_kmedians};
use crate::model::{eval_fractional, CostReport, FractionalSolution, Instance, IntegralSolution};
use crate::parallel;
use crate::rounding::{
    fl_rounding_bound, kmedians_cost_threshold, round_fl, round_frac_fl, round_frac_kmedians,
    round_kmedians, RoundingTrace,
};
use crate::seed::derive_seed;

/// Relative slack for deterministic bounds.
pub const DETERMINISTIC_SLACK: f64 = 1e-9;
/// Standard errors of slack for Monte Carlo means.
pub const MONTE_CARLO_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    RoundFl,
    DerandFl,
    RoundKmedians,
    GreedyKmedians,
    RoundFracKmedians,
    FracKmedians,
    RoundFracFl,
    FracFl,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::RoundFl,
        Suite::DerandFl,
        Suite::RoundKmedians,
        Suite::GreedyKmedians,
        Suite::RoundFracKmedians,
        Suite::FracKmedians,
        Suite::RoundFracFl,
        Suite::FracFl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::RoundFl => "round-fl",
            Suite::DerandFl => "derand-fl",
            Suite::RoundKmedians => "round-kmedians",
            Suite::GreedyKmedians => "greedy-kmedians",
            Suite::RoundFracKmedians => "round-frac-kmedians",
            Suite::FracKmedians => "frac-kmedians",
            Suite::RoundFracFl => "round-frac-fl",
            Suite::FracFl => "frac-fl",
        }
    }

    /// Suites whose algorithm takes ε.
    pub fn uses_eps(self) -> bool {
        !matches!(self, Suite::RoundFl | Suite::DerandFl)
    }

    /// Suites restricted to unit facility costs.
    pub fn unit_cost_only(self) -> bool {
        matches!(self, Suite::RoundFracKmedians | Suite::FracKmedians)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = "==")]
    Equal,
    #[serde(rename = ">")]
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationRecord {
    pub instance: String,
    pub algorithm: Suite,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub bound_name: String,
    pub relation: Relation,
    pub bound: f64,
    pub achieved: f64,
    /// Slack allowed on top of the bound.
    pub slack: f64,
    pub pass: bool,
    /// Base seed and number of seeded runs, for randomized checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub trials: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerificationReport {
    pub records: Vec<VerificationRecord>,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &VerificationRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    pub fn all_pass(&self) -> bool {
        self.failures().next().is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub suites: Vec<Suite>,
    pub eps: Vec<f64>,
    pub seed: u64,
    /// Monte Carlo runs per randomized check.
    pub trials: u64,
    /// Seed count for best-of-seeds derandomization.
    pub best_of_seeds: u32,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            suites: Suite::ALL.to_vec(),
            eps: vec![0.5],
            seed: 0,
            trials: 1000,
            best_of_seeds: DerandMode::DEFAULT_SEEDS,
        }
    }
}

/// Runs the selected suites over `corpus` (pairs of instance id and
/// instance). Records are ordered by instance, then suite, then ε.
pub fn verify(corpus: &[(String, Instance)], config: &VerifyConfig) -> VerificationReport {
    let mut report = VerificationReport::default();
    for (id, instance) in corpus {
        let refs = References::new(instance);
        for &suite in &config.suites {
            if suite.unit_cost_only() && !instance.is_unit_cost() {
                continue;
            }
            let eps_list: Vec<Option<f64>> = if suite.uses_eps() {
                config.eps.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for eps in eps_list {
                let mut ctx = Check {
                    instance,
                    id,
                    suite,
                    eps,
                    config,
                    out: &mut report.records,
                };
                if let Err(e) = ctx.run(&refs) {
                    ctx.push_error(e);
                }
            }
        }
    }
    report
}

/// Oracle values shared by all suites on one instance.
struct References {
    fl: Result<(IntegralSolution, CostReport)>,
    /// exact k-medians at the budget of the facility-location optimum
    kmedians: Result<(IntegralSolution, CostReport)>,
}

impl References {
    fn new(instance: &Instance) -> Self {
        let fl = exact_fl(instance);
        let kmedians = match &fl {
            Ok((_, r)) => exact_kmedians(instance, r.facility_cost),
            Err(e) => Err(e.clone()),
        };
        Self { fl, kmedians }
    }
}

/// d > 0 is required by the k-medians algorithms; a zero-distance optimum
/// still certifies any positive d.
fn positive(d: f64) -> f64 {
    if d > 0.0 {
        d
    } else {
        1e-9
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct Check<'a> {
    instance: &'a Instance,
    id: &'a str,
    suite: Suite,
    eps: Option<f64>,
    config: &'a VerifyConfig,
    out: &'a mut Vec<VerificationRecord>,
}

impl Check<'_> {
    fn eps(&self) -> f64 {
        self.eps.expect("suite takes eps")
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        bound_name: &str,
        relation: Relation,
        bound: f64,
        achieved: f64,
        slack: f64,
        seeded: bool,
        trials: u64,
    ) {
        let pass = match relation {
            Relation::AtMost => achieved <= bound + slack,
            Relation::Below => achieved < bound + slack,
            Relation::Equal => (achieved - bound).abs() <= slack,
            Relation::Above => achieved > bound - slack,
        };
        self.out.push(VerificationRecord {
            instance: self.id.to_string(),
            algorithm: self.suite,
            eps: self.eps,
            bound_name: bound_name.to_string(),
            relation,
            bound,
            achieved,
            slack,
            pass,
            seed: seeded.then_some(self.config.seed),
            trials,
            error: None,
        });
    }

    fn exact(&mut self, name: &str, relation: Relation, bound: f64, achieved: f64) {
        let slack = DETERMINISTIC_SLACK * bound.abs().max(1.0);
        self.push(name, relation, bound, achieved, slack, false, 1);
    }

    fn push_error(&mut self, e: Error) {
        self.out.push(VerificationRecord {
            instance: self.id.to_string(),
            algorithm: self.suite,
            eps: self.eps,
            bound_name: "error".into(),
            relation: Relation::AtMost,
            bound: f64::NAN,
            achieved: f64::NAN,
            slack: 0.0,
            pass: false,
            seed: None,
            trials: 0,
            error: Some(e.to_string()),
        });
    }

    /// Runs `trials` seeded copies of `run` in parallel.
    fn monte_carlo<T: Send>(&self, run: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
        let component = format!("verify/{}", self.suite);
        let seed = self.config.seed;
        parallel::map_indexed(self.config.trials as usize, |t| {
            run(derive_seed(seed, &component, t as u64))
        })
        .into_iter()
        .collect()
    }

    fn expectation(&mut self, name: &str, bound: f64, samples: &[f64]) {
        let (mean, stderr) = mean_stderr(samples);
        let slack = MONTE_CARLO_SIGMAS * stderr + DETERMINISTIC_SLACK * bound.abs().max(1.0);
        self.push(name, Relation::AtMost, bound, mean, slack, true, samples.len() as u64);
    }

    fn run(&mut self, refs: &References) -> Result<()> {
        if self.config.trials == 0 && self.randomized() {
            return Err(Error::InvalidParameter(format!("{} needs trials ≥ 1", self.suite)));
        }
        match self.suite {
            Suite::RoundFl => self.round_fl(refs),
            Suite::DerandFl => self.derand_fl(refs),
            Suite::RoundKmedians => self.round_kmedians(refs),
            Suite::GreedyKmedians => self.greedy_kmedians(refs),
            Suite::RoundFracKmedians => self.round_frac_kmedians(refs),
            Suite::FracKmedians => self.frac_kmedians(refs),
            Suite::RoundFracFl => self.round_frac_fl(refs),
            Suite::FracFl => self.frac_fl(refs),
        }
    }

    fn randomized(&self) -> bool {
        matches!(
            self.suite,
            Suite::RoundFl | Suite::RoundKmedians | Suite::RoundFracKmedians | Suite::RoundFracFl
        )
    }

    fn fl_relaxation(&self, refs: &References) -> Result<(FractionalSolution, CostReport)> {
        let (sol, report) = refs.fl.clone()?;
        Ok((FractionalSolution::from_integral(self.instance, &sol), report))
    }

    fn round_fl(&mut self, refs: &References) -> Result<()> {
        let (x, _) = self.fl_relaxation(refs)?;
        let bound = fl_rounding_bound(self.instance, &x)?;
        let inst = self.instance;
        let totals = self.monte_carlo(|s| {
            let (sol, _) = round_fl(inst, &x, s)?;
            Ok(sol_total(inst, &sol))
        })?;
        self.expectation("expected-total", bound, &totals);
        Ok(())
    }

    fn derand_fl(&mut self, refs: &References) -> Result<()> {
        let (x, _) = self.fl_relaxation(refs)?;
        let est = derandomize_fl(self.instance, &x, DerandMode::Estimator)?;
        self.exact("estimator-total", Relation::AtMost, est.bound, est.report.total);
        let seeds = self.config.best_of_seeds;
        let best = derandomize_fl(self.instance, &x, DerandMode::BestOfSeeds { seeds })?;
        let bound = (1.0 + FALLBACK_SLACK) * best.bound;
        self.push(
            "best-of-seeds-total",
            Relation::AtMost,
            bound,
            best.report.total,
            DETERMINISTIC_SLACK * bound.abs().max(1.0),
            false,
            seeds as u64,
        );
        Ok(())
    }

    /// (k, d) certified by the exact k-medians solution.
    fn kmedians_pair(&self, refs: &References) -> Result<(IntegralSolution, f64, f64)> {
        let (sol, report) = refs.kmedians.clone()?;
        Ok((sol, report.facility_cost, report.assignment_cost))
    }

    fn round_kmedians(&mut self, refs: &References) -> Result<()> {
        let eps = self.eps();
        let (sol, k, d) = self.kmedians_pair(refs)?;
        let d = positive(d);
        let x = FractionalSolution::from_integral(self.instance, &sol);
        let inst = self.instance;
        let runs = self.monte_carlo(|s| {
            let r = round_kmedians(inst, &x, k, d, eps, s)?;
            let cost: f64 = r.chosen.iter().map(|&f| inst.cost(f)).sum();
            Ok((r.success, cost))
        })?;
        let cap = kmedians_cost_threshold(inst.customer_count(), k, eps) + inst.max_cost();
        let worst = runs.iter().map(|r| r.1).fold(0.0, f64::max);
        let trials = runs.len() as u64;
        let slack = DETERMINISTIC_SLACK * cap.max(1.0);
        self.push("facility-cost-cap", Relation::AtMost, cap, worst, slack, true, trials);
        let rate = runs.iter().filter(|r| r.0).count() as f64 / runs.len() as f64;
        self.push("success-rate", Relation::Above, 0.0, rate, 0.0, true, trials);
        Ok(())
    }

    fn greedy_kmedians(&mut self, refs: &References) -> Result<()> {
        let eps = self.eps();
        let (_, k, d) = self.kmedians_pair(refs)?;
        let d = positive(d);
        let out = greedy_kmedians(self.instance, d, eps)?;
        let n = self.instance.customer_count();
        self.exact("assignment-cost", Relation::AtMost, (1.0 + eps) * d, out.report.assignment_cost);
        let cap = kmedians_cost_threshold(n, k, eps) + self.instance.max_cost();
        self.exact("facility-cost", Relation::AtMost, cap, out.report.facility_cost);
        let rise = potential_rise(&out.trace, n, k, d, eps);
        self.exact("potential-rise", Relation::AtMost, 0.0, rise);
        let m = self.instance.facility_count() as f64;
        self.exact("iterations", Relation::AtMost, m, out.trace.len() as f64);
        Ok(())
    }

    fn unit_budget(&self, refs: &References) -> Result<(FractionalSolution, u64, f64)> {
        let (sol, k, d) = self.kmedians_pair(refs)?;
        let x = FractionalSolution::from_integral(self.instance, &sol);
        Ok((x, k.round() as u64, d))
    }

    fn round_frac_kmedians(&mut self, refs: &References) -> Result<()> {
        let eps = self.eps();
        let (x, k, d) = self.unit_budget(refs)?;
        let inst = self.instance;
        let runs = self.monte_carlo(|s| {
            let r = round_frac_kmedians(inst, &x, eps, s)?;
            let report = eval_fractional(inst, &r.solution)?;
            let covered = r.counters.min_coverage() as f64 >= r.divisor;
            let close = report.assignment_cost
                <= d / (1.0 - eps).powi(2) + DETERMINISTIC_SLACK * d.max(1.0);
            Ok((covered && close, report.facility_cost))
        })?;
        let trials = runs.len() as u64;
        let cost = k as f64 / (1.0 - eps);
        let worst = runs
            .iter()
            .map(|r| (r.1 - cost).abs())
            .fold(0.0, f64::max);
        self.push(
            "facility-cost-deviation",
            Relation::AtMost,
            0.0,
            worst,
            DETERMINISTIC_SLACK * cost.max(1.0),
            true,
            trials,
        );
        let rate = runs.iter().filter(|r| r.0).count() as f64 / runs.len() as f64;
        self.push("success-rate", Relation::Above, 0.0, rate, 0.0, true, trials);
        Ok(())
    }

    fn frac_kmedians(&mut self, refs: &References) -> Result<()> {
        let eps = self.eps();
        let (_, k, d) = self.unit_budget(refs)?;
        let d = positive(d);
        let out = solve_frac_kmedians(self.instance, k, d, eps)?;
        let report = eval_fractional(self.instance, &out.solution)?;
        self.exact("facility-cost", Relation::AtMost, k as f64 / (1.0 - eps), report.facility_cost);
        self.exact(
            "assignment-cost",
            Relation::AtMost,
            d / (1.0 - eps).powi(2),
            report.assignment_cost,
        );
        let min_cov = out
            .solution
            .coverage(self.instance.customer_count())
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        self.exact("coverage-deficit", Relation::AtMost, 0.0, 1.0 - min_cov);
        let pe = out.estimator.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
        self.push("estimator", Relation::Below, 1.0, pe, 0.0, false, 1);
        self.push(
            "iterations",
            Relation::Equal,
            out.params.rounds.total as f64,
            out.trace.len() as f64,
            0.0,
            false,
            1,
        );
        Ok(())
    }

    fn round_frac_fl(&mut self, refs: &References) -> Result<()> {
        let eps = self.eps();
        let (x, report) = self.fl_relaxation(refs)?;
        let inst = self.instance;
        let totals = self.monte_carlo(|s| {
            let r = round_frac_fl(inst, &x, eps, s)?;
            Ok(eval_fractional(inst, &r.solution)?.total)
        })?;
        self.expectation("expected-total", report.total / (1.0 - eps), &totals);
        Ok(())
    }

    fn frac_fl(&mut self, refs: &References) -> Result<()> {
        let eps = self.eps();
        let (_, opt) = refs.fl.clone()?;
        let out = solve_frac_fl(self.instance, eps)?;
        let total = eval_fractional(self.instance, &out.solution)?.total;
        self.exact("total", Relation::AtMost, opt.total / (1.0 - eps), total);
        let n_rounds = out.rounds.n();
        let cap = self.instance.customer_count() as f64 * (n_rounds.floor() + 1.0);
        self.exact("iterations", Relation::AtMost, cap, out.trace.len() as f64);
        let pes: Vec<f64> = replay_counters(self.instance, &out.trace)
            .iter()
            .map(|x| pe_fl(self.instance, x, opt.total, &out.rounds))
            .collect();
        self.exact("estimator-start", Relation::AtMost, opt.total * n_rounds, pes[0]);
        let rise = pes
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(1.0))
            .fold(0.0, f64::max);
        self.exact("estimator-rise", Relation::AtMost, 0.0, rise);
        Ok(())
    }
}

fn sol_total(instance: &Instance, sol: &IntegralSolution) -> f64 {
    let facility: f64 = sol.chosen.iter().map(|&f| instance.cost(f)).sum();
    let assignment: f64 = sol
        .assignment
        .iter()
        .enumerate()
        .map(|(c, &f)| instance.dist(f, c).expect("solutions use finite pairs"))
        .sum();
    facility + assignment
}

/// Largest increase of the greedy potential between consecutive states,
/// skipping states where it is undefined. Zero when non-increasing.
pub fn potential_rise(trace: &RoundingTrace, customers: usize, k: f64, d: f64, eps: f64) -> f64 {
    let start = greedy_potential(0.0, customers, 0.0, k, d, eps);
    let mut values = vec![start];
    values.extend(
        trace
            .records
            .iter()
            .map(|r| greedy_potential(r.facility_cost, r.unassigned, r.assignment_cost, k, d, eps)),
    );
    values
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some((b - a) / a.abs().max(1.0)),
            _ => None,
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::oracle::{gen_instance, GeneratorConfig};

    fn config(suite: Suite, trials: u64) -> VerifyConfig {
        VerifyConfig {
            suites: vec![suite],
            trials,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn empty_corpus_gives_empty_report() {
        let report = verify(&[], &VerifyConfig::default());
        assert!(report.records.is_empty());
        assert!(report.all_pass());
    }

    #[test]
    fn greedy_on_i2_passes() {
        let corpus = vec![("i2".to_string(), i2())];
        let report = verify(&corpus, &config(Suite::GreedyKmedians, 0));
        assert_eq!(report.records.len(), 4);
        assert!(report.all_pass(), "{:#?}", report.records);
    }

    #[test]
    fn frac_fl_on_generated_corpus_passes() {
        let corpus: Vec<(String, Instance)> = (0..20)
            .map(|seed| {
                let cfg = GeneratorConfig {
                    facilities: 6,
                    customers: 10,
                    seed,
                    ..GeneratorConfig::default()
                };
                (format!("g{seed}"), gen_instance(&cfg).unwrap())
            })
            .collect();
        let report = verify(&corpus, &config(Suite::FracFl, 0));
        assert_eq!(report.records.len(), 20 * 4);
        assert!(report.all_pass(), "{:#?}", report.failures().collect::<Vec<_>>());
    }

    #[test]
    fn every_suite_passes_on_i1() {
        let corpus = vec![("i1".to_string(), i1())];
        let report = verify(&corpus, &config(Suite::RoundFl, 50));
        assert!(report.all_pass());
        let mut cfg = VerifyConfig {
            trials: 50,
            ..VerifyConfig::default()
        };
        cfg.suites = Suite::ALL.to_vec();
        let report = verify(&corpus, &cfg);
        assert!(report.all_pass(), "{:#?}", report.failures().collect::<Vec<_>>());
        let suites: std::collections::BTreeSet<_> =
            report.records.iter().map(|r| r.algorithm).collect();
        assert_eq!(suites.len(), 8);
    }

    #[test]
    fn algorithm_errors_are_recorded() {
        // d below anything achievable is fine for the harness, but an
        // instance with an uncovered customer breaks the oracle
        let inst = Instance::new(
            vec![facility("f", 1.0)],
            vec!["a".into(), "b".into()],
            vec![triple("f", "a", 1.0)],
        );
        if let Ok(inst) = inst {
            let report = verify(&[("bad".into(), inst)], &config(Suite::FracFl, 0));
            assert_eq!(report.records.len(), 1);
            assert!(report.records[0].error.is_some());
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }
}
