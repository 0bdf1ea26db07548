//! Randomized rounding schemes.
//!
//! All four schemes share one iteration body: draw a facility f with
//! probability proportional to x(f), then flip an independent coin for
//! every customer c with x(f,c) > 0, succeeding with probability
//! x(f,c)/x(f). They differ in what a success does and when they stop.
//!
//! Each scheme is a pure function of `(instance, inputs, seed)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{eval_integral, CostReport, FractionalSolution, Instance, IntegralSolution};
use crate::probability::{harmonic, required_iterations_fl, required_iterations_kmedians, KMediansRounds};
use crate::seed::{self, StreamRng};

/// One iteration of a rounding, greedy or Lagrangian run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub facility: usize,
    /// Customers (re)assigned or incremented in this iteration.
    pub assigned: Vec<usize>,
    pub facility_cost: f64,
    pub assignment_cost: f64,
    pub unassigned: usize,
    /// Estimator or potential value after the iteration, when the
    /// algorithm tracks one.
    pub estimator: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundingTrace {
    pub records: Vec<TraceRecord>,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    iteration: u64,
    facility: &'a str,
    assigned: Vec<&'a str>,
    facility_cost: f64,
    assignment_cost: f64,
    unassigned: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimator: Option<f64>,
}

impl RoundingTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One JSON object per line, ids resolved against `instance`.
    pub fn to_json_lines(&self, instance: &Instance) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = TraceLine {
                iteration: r.iteration,
                facility: instance.facility_id(r.facility),
                assigned: r.assigned.iter().map(|&c| instance.customer_id(c)).collect(),
                facility_cost: r.facility_cost,
                assignment_cost: r.assignment_cost,
                unassigned: r.unassigned,
                estimator: r.estimator,
            };
            out.push_str(&serde_json::to_string(&line).expect("trace line serializes"));
            out.push('\n');
        }
        out
    }
}

/// Checks the preconditions shared by every rounding scheme: the LP
/// constraints hold, except that coverage may exceed 1.
pub(crate) fn check_roundable(instance: &Instance, x: &FractionalSolution) -> Result<()> {
    if x.open.len() != instance.facility_count() {
        return Err(Error::InvalidParameter(
            "fractional solution does not match the instance".into(),
        ));
    }
    let tol = x.tolerance;
    if let Some(f) = x.open.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InfeasibleFractional(format!(
            "x({}) = {}",
            instance.facility_id(f),
            x.open[f]
        )));
    }
    for (&(f, c), &v) in &x.assign {
        let (fid, cid) = (instance.facility_id(f), instance.customer_id(c));
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InfeasibleFractional(format!("x({fid}, {cid}) = {v}")));
        }
        if v > 0.0 && instance.dist(f, c).is_none() {
            return Err(Error::InfeasibleFractional(format!(
                "x({fid}, {cid}) = {v} on an infinite pair"
            )));
        }
        if v > x.open[f] + tol {
            return Err(Error::InfeasibleFractional(format!(
                "x({fid}, {cid}) = {v} exceeds x({fid}) = {}",
                x.open[f]
            )));
        }
    }
    for (c, cov) in x.coverage(instance.customer_count()).into_iter().enumerate() {
        if cov < 1.0 - tol {
            return Err(Error::InfeasibleFractional(format!(
                "customer {} has coverage {cov}",
                instance.customer_id(c)
            )));
        }
    }
    if !(x.size() > 0.0) {
        return Err(Error::EmptySupport);
    }
    Ok(())
}

/// Guard against pathological inputs: 64·|x|·ln(n+1), scaled by `per_customer`
/// for the fractional schemes that need many increments per customer.
fn iteration_cap(x_size: f64, n: usize, per_customer: f64) -> u64 {
    let cap = 64.0 * x_size.max(1.0) * ((n + 1) as f64).ln() * per_customer.max(1.0);
    (cap.ceil() as u64).max(64)
}

/// One draw of the shared iteration body: the chosen facility and the
/// customers whose coins came up heads.
fn draw(rng: &mut StreamRng, x: &FractionalSolution, size: f64) -> (usize, Vec<usize>) {
    let f = seed::pick_weighted(rng, &x.open, size);
    let xf = x.open[f];
    let hits = x
        .assigned_to(f)
        .filter(|&(_, v)| v > 0.0)
        .filter(|&(_, v)| seed::bernoulli(rng, v / xf))
        .map(|(c, _)| c)
        .collect();
    (f, hits)
}

fn partial_assignment_cost(instance: &Instance, assignment: &[Option<usize>]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .filter_map(|(c, f)| f.map(|f| instance.dist(f, c).expect("assigned pairs are finite")))
        .sum()
}

fn holders(assignment: &[Option<usize>]) -> BTreeSet<usize> {
    assignment.iter().flatten().copied().collect()
}

/// Shared loop of the integral schemes. `stop` sees
/// `(running facility cost, assignment cost, unassigned)` after each
/// iteration and returns `Some(flag)` to terminate.
fn integral_loop(
    instance: &Instance,
    x: &FractionalSolution,
    seed_value: u64,
    mut stop: impl FnMut(f64, f64, usize) -> Option<bool>,
) -> Result<(Vec<Option<usize>>, RoundingTrace, bool)> {
    check_roundable(instance, x)?;
    let size = x.size();
    let n = instance.customer_count();
    let cap = iteration_cap(size, n, 1.0);
    let mut rng = seed::stream(seed_value, 0);
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut unassigned = n;
    let mut facility_cost = 0.0;
    let mut trace = RoundingTrace::default();
    for iteration in 0..cap {
        let (f, hits) = draw(&mut rng, x, size);
        for &c in &hits {
            if assignment[c].is_none() {
                unassigned -= 1;
            }
            assignment[c] = Some(f);
        }
        facility_cost += instance.cost(f);
        let assignment_cost = partial_assignment_cost(instance, &assignment);
        trace.records.push(TraceRecord {
            iteration,
            facility: f,
            assigned: hits,
            facility_cost,
            assignment_cost,
            unassigned,
            estimator: None,
        });
        if let Some(flag) = stop(facility_cost, assignment_cost, unassigned) {
            return Ok((assignment, trace, flag));
        }
    }
    Err(Error::Nontermination(cap))
}

/// Facility-location rounding: repeat draws, (re)assigning customers, until
/// every customer is assigned; return the facilities holding customers.
///
/// E[dist(F) + cost(F)] ≤ dist(x) + Σ_f cost(f)·x(f)·H(Δ_fx).
pub fn round_fl(
    instance: &Instance,
    x: &FractionalSolution,
    seed_value: u64,
) -> Result<(IntegralSolution, RoundingTrace)> {
    let (assignment, trace, _) =
        integral_loop(instance, x, seed_value, |_, _, u| (u == 0).then_some(true))?;
    let (sol, _) = eval_integral(instance, &holders(&assignment))?;
    Ok((sol, trace))
}

/// dist(x) + Σ_f cost(f)·x(f)·H(Δ_fx), where Δ_fx counts the customers
/// with x(f,c) > 0. Bounds the expected total of [`round_fl`].
pub fn fl_rounding_bound(instance: &Instance, x: &FractionalSolution) -> Result<f64> {
    let report = crate::model::eval_fractional(instance, x)?;
    let facility_part: f64 = (0..instance.facility_count())
        .map(|f| instance.cost(f) * x.open[f] * harmonic(x.fractional_degree(f)))
        .sum();
    Ok(report.assignment_cost + facility_part)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMediansRounding {
    /// Facilities holding at least one customer when the scheme stopped.
    pub chosen: BTreeSet<usize>,
    /// Nearest-facility solution over `chosen`, when it covers everyone.
    pub solution: Option<(IntegralSolution, CostReport)>,
    pub trace: RoundingTrace,
    /// True iff the scheme stopped because every customer was assigned with
    /// assignment cost below d(1+ε).
    pub success: bool,
}

/// k ln(n + n/ε): the running facility cost past which the k-medians
/// rounding scheme gives up.
pub fn kmedians_cost_threshold(n: usize, k: f64, eps: f64) -> f64 {
    let n = n as f64;
    k * (n + n / eps).ln()
}

/// k-medians rounding: the facility-location loop, stopped after the first
/// iteration in which either every customer is assigned with assignment
/// cost below d(1+ε) (success) or the running facility cost exceeds
/// k·ln(n+n/ε). Always cost(F) ≤ k·ln(n+n/ε) + max_f cost(f).
pub fn round_kmedians(
    instance: &Instance,
    x: &FractionalSolution,
    k: f64,
    d: f64,
    eps: f64,
    seed_value: u64,
) -> Result<KMediansRounding> {
    if !(k > 0.0 && d > 0.0 && eps > 0.0) {
        return Err(Error::InvalidParameter("k, d and eps must be positive".into()));
    }
    let threshold = kmedians_cost_threshold(instance.customer_count(), k, eps);
    let dist_cap = d * (1.0 + eps);
    let (assignment, trace, success) =
        integral_loop(instance, x, seed_value, |cost, dist, unassigned| {
            if unassigned == 0 && dist < dist_cap {
                Some(true)
            } else if cost > threshold {
                Some(false)
            } else {
                None
            }
        })?;
    let chosen = holders(&assignment);
    let solution = if chosen.is_empty() {
        None
    } else {
        eval_integral(instance, &chosen).ok()
    };
    Ok(KMediansRounding {
        chosen,
        solution,
        trace,
        success,
    })
}

/// Integer counters accumulated by the fractional rounding schemes and the
/// Lagrangian solvers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawCounters {
    pub open: Vec<u64>,
    pub assign: BTreeMap<(usize, usize), u64>,
    pub coverage: Vec<u64>,
}

impl RawCounters {
    pub fn new(instance: &Instance) -> Self {
        Self {
            open: vec![0; instance.facility_count()],
            assign: BTreeMap::new(),
            coverage: vec![0; instance.customer_count()],
        }
    }

    /// Increment x(f) and, for each listed customer, x(f,c) and x(c).
    pub fn apply(&mut self, f: usize, customers: &[usize]) {
        self.open[f] += 1;
        for &c in customers {
            *self.assign.entry((f, c)).or_insert(0) += 1;
            self.coverage[c] += 1;
        }
    }

    pub fn min_coverage(&self) -> u64 {
        self.coverage.iter().copied().min().unwrap_or(0)
    }

    pub fn iterations(&self) -> u64 {
        self.open.iter().sum()
    }

    /// Raw Σ x(f)cost(f).
    pub fn facility_cost(&self, instance: &Instance) -> f64 {
        self.open
            .iter()
            .enumerate()
            .map(|(f, &v)| v as f64 * instance.cost(f))
            .sum()
    }

    /// Raw Σ x(f,c)dist(f,c).
    pub fn assignment_cost(&self, instance: &Instance) -> f64 {
        self.assign
            .iter()
            .map(|(&(f, c), &v)| v as f64 * instance.dist(f, c).expect("counted pairs are finite"))
            .sum()
    }

    /// x / divisor as a fractional solution.
    pub fn scaled(&self, instance: &Instance, divisor: f64) -> FractionalSolution {
        let mut x = FractionalSolution::zeros(instance);
        for (f, &v) in self.open.iter().enumerate() {
            x.open[f] = v as f64 / divisor;
        }
        for (&(f, c), &v) in &self.assign {
            x.set(f, c, v as f64 / divisor);
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionalRounding {
    /// Counters divided by (1−ε)N.
    pub solution: FractionalSolution,
    pub counters: RawCounters,
    /// (1−ε)N
    pub divisor: f64,
    pub trace: RoundingTrace,
}

fn record_fractional(
    instance: &Instance,
    counters: &RawCounters,
    iteration: u64,
    f: usize,
    hits: Vec<usize>,
    coverage_goal: f64,
) -> TraceRecord {
    TraceRecord {
        iteration,
        facility: f,
        assigned: hits,
        facility_cost: counters.facility_cost(instance),
        assignment_cost: counters.assignment_cost(instance),
        unassigned: counters
            .coverage
            .iter()
            .filter(|&&v| (v as f64) < coverage_goal)
            .count(),
        estimator: None,
    }
}

/// k = |x*| when it is a positive integer (within tolerance).
pub(crate) fn integral_budget(x: &FractionalSolution) -> Result<u64> {
    let size = x.size();
    let k = size.round();
    if k < 1.0 || (size - k).abs() > x.tolerance * x.open.len().max(1) as f64 {
        return Err(Error::InvalidParameter(format!(
            "|x*| = {size} must be a positive integer so that N·k is integral"
        )));
    }
    Ok(k as u64)
}

/// Fractional k-medians rounding: exactly N·k draws with Pr(f) = x*(f)/k,
/// output counters / (1−ε)N. The output always costs (1−ε)^{-1}·k.
pub fn round_frac_kmedians(
    instance: &Instance,
    x_star: &FractionalSolution,
    eps: f64,
    seed_value: u64,
) -> Result<FractionalRounding> {
    if !instance.is_unit_cost() {
        return Err(Error::WeightedInstance);
    }
    check_roundable(instance, x_star)?;
    let k = integral_budget(x_star)?;
    let rounds: KMediansRounds = required_iterations_kmedians(instance.customer_count(), eps, k)?;
    let divisor = (1.0 - eps) * rounds.n();
    let size = x_star.size();
    let mut rng = seed::stream(seed_value, 0);
    let mut counters = RawCounters::new(instance);
    let mut trace = RoundingTrace::default();
    for iteration in 0..rounds.total {
        let (f, hits) = draw(&mut rng, x_star, size);
        counters.apply(f, &hits);
        trace.records.push(record_fractional(
            instance, &counters, iteration, f, hits, divisor,
        ));
    }
    Ok(FractionalRounding {
        solution: counters.scaled(instance, divisor),
        counters,
        divisor,
        trace,
    })
}

/// Fractional facility-location rounding: draws with Pr(f) = x*(f)/|x*|
/// until every x(c) ≥ (1−ε)N, output counters / (1−ε)N.
///
/// E[cost(x̃) + dist(x̃)] ≤ (1−ε)^{-1}(dist(x*) + cost(x*)).
pub fn round_frac_fl(
    instance: &Instance,
    x_star: &FractionalSolution,
    eps: f64,
    seed_value: u64,
) -> Result<FractionalRounding> {
    check_roundable(instance, x_star)?;
    let rounds = required_iterations_fl(instance.customer_count(), eps)?;
    let target = rounds.target;
    let size = x_star.size();
    let cap = iteration_cap(size, instance.customer_count(), rounds.n());
    let mut rng = seed::stream(seed_value, 0);
    let mut counters = RawCounters::new(instance);
    let mut trace = RoundingTrace::default();
    let mut iteration = 0;
    while counters.min_coverage() < target {
        if iteration >= cap {
            return Err(Error::Nontermination(cap));
        }
        let (f, hits) = draw(&mut rng, x_star, size);
        counters.apply(f, &hits);
        trace.records.push(record_fractional(
            instance,
            &counters,
            iteration,
            f,
            hits,
            target as f64,
        ));
        iteration += 1;
    }
    let divisor = target as f64;
    Ok(FractionalRounding {
        solution: counters.scaled(instance, divisor),
        counters,
        divisor,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{eval_fractional, normalize_assignments, validate_fractional};
    use approx::assert_relative_eq;

    fn fully_open(instance: &Instance, pairs: &[(usize, usize)]) -> FractionalSolution {
        let mut x = FractionalSolution::zeros(instance);
        for &(f, c) in pairs {
            x.open[f] = 1.0;
            x.set(f, c, 1.0);
        }
        x
    }

    #[test]
    fn round_fl_on_i1_opens_both() {
        let inst = i1();
        let x = fully_open(&inst, &[(0, 0), (1, 1)]);
        for s in 0..20 {
            let (sol, trace) = round_fl(&inst, &x, s).unwrap();
            assert_eq!(sol.chosen, BTreeSet::from([0, 1]));
            let (_, r) = eval_integral(&inst, &sol.chosen).unwrap();
            assert_eq!(r.total, 2.0);
            assert_eq!(trace.records.last().unwrap().unassigned, 0);
        }
    }

    #[test]
    fn round_fl_integral_input_reproduces_support() {
        let inst = i2();
        // {f1} serving everyone
        let x = fully_open(&inst, &[(0, 0), (0, 1), (0, 2)]);
        let (sol, trace) = round_fl(&inst, &x, 9).unwrap();
        assert_eq!(sol.chosen, BTreeSet::from([0]));
        assert_eq!(trace.len(), 1);
        let (_, r) = eval_integral(&inst, &sol.chosen).unwrap();
        assert_eq!(r.assignment_cost, eval_fractional(&inst, &x).unwrap().assignment_cost);
    }

    #[test]
    fn round_fl_rejects_bad_input() {
        let inst = i1();
        let mut x = fully_open(&inst, &[(0, 0)]);
        assert!(matches!(
            round_fl(&inst, &x, 0),
            Err(Error::InfeasibleFractional(_))
        ));
        x = FractionalSolution::zeros(&inst);
        x.set(0, 0, 1.0);
        x.set(1, 1, 1.0);
        assert!(matches!(
            round_fl(&inst, &x, 0),
            Err(Error::InfeasibleFractional(_))
        ));
    }

    #[test]
    fn round_fl_is_deterministic() {
        let inst = i2();
        let mut x = FractionalSolution::zeros(&inst);
        x.open = vec![0.5, 0.5];
        for c in 0..3 {
            x.set(0, c, 0.5);
            x.set(1, c, 0.5);
        }
        assert_eq!(round_fl(&inst, &x, 42).unwrap(), round_fl(&inst, &x, 42).unwrap());
    }

    #[test]
    fn round_kmedians_success_on_integral_input() {
        let inst = i2();
        let x = fully_open(&inst, &[(0, 0), (0, 1), (0, 2)]);
        let out = round_kmedians(&inst, &x, 2.0, 3.0, 0.5, 1).unwrap();
        assert!(out.success);
        assert_eq!(out.chosen, BTreeSet::from([0]));
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn round_kmedians_respects_cost_cap() {
        let inst = i2();
        let mut x = FractionalSolution::zeros(&inst);
        x.open = vec![0.5, 0.5];
        for c in 0..3 {
            x.set(0, c, 0.5);
            x.set(1, c, 0.5);
        }
        // an unreachable distance target forces the cost rule to fire
        let cap = kmedians_cost_threshold(3, 1.0, 0.5) + inst.max_cost();
        for s in 0..200 {
            let out = round_kmedians(&inst, &x, 1.0, 0.1, 0.5, s).unwrap();
            assert!(!out.success);
            let cost: f64 = out.chosen.iter().map(|&f| inst.cost(f)).sum();
            assert!(cost <= cap + 1e-12);
            assert!(out.trace.records.last().unwrap().facility_cost <= cap + 1e-12);
        }
    }

    #[test]
    fn frac_kmedians_single_facility() {
        let inst = Instance::new(
            vec![facility("f", 1.0), facility("g", 1.0)],
            vec!["a".into(), "b".into(), "c".into()],
            vec![
                triple("f", "a", 0.0),
                triple("f", "b", 1.0),
                triple("f", "c", 2.0),
                triple("g", "a", 1.0),
            ],
        )
        .unwrap();
        let x = fully_open(&inst, &[(0, 0), (0, 1), (0, 2)]);
        let eps = 0.5;
        let out = round_frac_kmedians(&inst, &x, eps, 5).unwrap();
        let rounds = required_iterations_kmedians(3, eps, 1).unwrap();
        assert_eq!(out.counters.iterations(), rounds.total);
        assert_eq!(out.counters.open[1], 0);
        assert!(out.counters.coverage.iter().all(|&v| v == rounds.total));
        assert_relative_eq!(out.solution.open[0], 1.0 / (1.0 - eps), epsilon = 1e-12);
        for c in 0..3 {
            assert_relative_eq!(out.solution.get(0, c), 1.0 / (1.0 - eps), epsilon = 1e-12);
        }
    }

    #[test]
    fn frac_kmedians_rejects_weighted() {
        let inst = i2();
        let x = fully_open(&inst, &[(0, 0), (0, 1), (0, 2)]);
        assert_eq!(
            round_frac_kmedians(&inst, &x, 0.5, 0).unwrap_err(),
            Error::WeightedInstance
        );
    }

    #[test]
    fn frac_fl_single_facility_takes_exact_target() {
        let inst = Instance::new(
            vec![facility("f", 1.0)],
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            vec![
                triple("f", "a", 0.0),
                triple("f", "b", 0.0),
                triple("f", "c", 0.0),
                triple("f", "d", 0.0),
            ],
        )
        .unwrap();
        let x = fully_open(&inst, &[(0, 0), (0, 1), (0, 2), (0, 3)]);
        let out = round_frac_fl(&inst, &x, 0.5, 3).unwrap();
        let target = required_iterations_fl(4, 0.5).unwrap().target;
        assert_eq!(out.trace.len() as u64, target);
        assert_eq!(out.counters.min_coverage(), target);
        let r = eval_fractional(&inst, &out.solution).unwrap();
        assert_relative_eq!(r.facility_cost, 1.0, epsilon = 1e-12);
        let norm = normalize_assignments(&inst, &out.solution).unwrap();
        assert!(validate_fractional(&inst, &norm, 1e-6).is_empty());
    }

    #[test]
    fn counters_keep_assignment_below_open() {
        let inst = i2();
        let mut x = FractionalSolution::zeros(&inst);
        x.open = vec![0.5, 0.5];
        for c in 0..3 {
            x.set(0, c, 0.5);
            x.set(1, c, 0.5);
        }
        let out = round_frac_fl(&inst, &x, 0.3, 17).unwrap();
        for (&(f, _), &v) in &out.counters.assign {
            assert!(v <= out.counters.open[f]);
        }
        assert!(out.counters.min_coverage() >= out.divisor as u64);
    }

    #[test]
    fn trace_json_lines_use_ids() {
        let inst = i1();
        let x = fully_open(&inst, &[(0, 0), (1, 1)]);
        let (_, trace) = round_fl(&inst, &x, 0).unwrap();
        let text = trace.to_json_lines(&inst);
        assert_eq!(text.lines().count(), trace.len());
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert!(first["facility"].as_str().unwrap().starts_with('f'));
        assert!(first.get("estimator").is_none());
    }
}
