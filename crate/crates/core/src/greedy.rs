//! Deterministic algorithms obtained by derandomizing the rounding schemes:
//! the greedy weighted k-medians algorithm and a derandomized
//! facility-location rounding.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{eval_integral, CostReport, FractionalSolution, Instance, IntegralSolution};
use crate::parallel;
use crate::probability::harmonic;
use crate::rounding::{check_roundable, fl_rounding_bound, round_fl, RoundingTrace, TraceRecord};

/// Running state of the greedy k-medians algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyState {
    /// f_c for every customer; `None` while unassigned.
    pub assignment: Vec<Option<usize>>,
    pub chosen: Vec<usize>,
    /// c̃_t
    pub facility_cost: f64,
    /// ũ_t
    pub unassigned: usize,
    /// d̃_t
    pub assignment_cost: f64,
}

impl GreedyState {
    fn new(customers: usize) -> Self {
        Self {
            assignment: vec![None; customers],
            chosen: Vec::new(),
            facility_cost: 0.0,
            unassigned: customers,
            assignment_cost: 0.0,
        }
    }

    /// φ̃ = c̃/k + ln[ũ + (d̃/d − 1)/(1+ε)], or `None` once the log argument
    /// is no longer positive.
    pub fn potential(&self, k: f64, d: f64, eps: f64) -> Option<f64> {
        greedy_potential(
            self.facility_cost,
            self.unassigned,
            self.assignment_cost,
            k,
            d,
            eps,
        )
    }
}

pub fn greedy_potential(
    facility_cost: f64,
    unassigned: usize,
    assignment_cost: f64,
    k: f64,
    d: f64,
    eps: f64,
) -> Option<f64> {
    let arg = unassigned as f64 + (assignment_cost / d - 1.0) / (1.0 + eps);
    (arg > 0.0).then(|| facility_cost / k + arg.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyKMedians {
    pub solution: IntegralSolution,
    pub report: CostReport,
    /// Facilities in the order they were chosen.
    pub order: Vec<usize>,
    pub trace: RoundingTrace,
}

/// Greedy weighted k-medians.
///
/// With φ(c,f) = dist(f,c)/(d(1+ε)) and φ(c, none) = 1, each iteration picks
/// the facility maximizing Σ_{c∈C_f} [φ(c,f_c) − φ(c,f)] / cost(f) over
/// C_f = {c : φ(c,f_c) > φ(c,f)} and reassigns C_f to it. The loop ends
/// once every customer is assigned with assignment cost ≤ d(1+ε).
///
/// If some fractional solution has facility cost k and assignment cost at
/// most d, the output has dist(F) ≤ (1+ε)d and
/// cost(F) ≤ k·ln(n+n/ε) + max_f cost(f). k is not an input.
pub fn greedy_kmedians(instance: &Instance, d: f64, eps: f64) -> Result<GreedyKMedians> {
    if !(d > 0.0) || !(eps > 0.0) || !d.is_finite() || !eps.is_finite() {
        return Err(Error::InvalidParameter("d and eps must be positive".into()));
    }
    let scale = d * (1.0 + eps);
    let phi = |dist: f64| dist / scale;
    let mut state = GreedyState::new(instance.customer_count());
    let mut trace = RoundingTrace::default();

    let mut iteration = 0u64;
    while !(state.unassigned == 0 && state.assignment_cost <= scale) {
        let current = |c: usize, st: &GreedyState| match st.assignment[c] {
            None => 1.0,
            Some(g) => phi(instance.dist(g, c).expect("assigned pairs are finite")),
        };
        // (ratio, facility); strict > keeps the smallest id on ties
        let mut best: Option<(f64, usize)> = None;
        for f in 0..instance.facility_count() {
            let gain: f64 = instance
                .customers_of(f)
                .iter()
                .map(|&(c, dist)| current(c, &state) - phi(dist))
                .filter(|&g| g > 0.0)
                .sum();
            let ratio = match (gain > 0.0, instance.cost(f) > 0.0) {
                (false, _) => 0.0,
                (true, true) => gain / instance.cost(f),
                (true, false) => f64::INFINITY,
            };
            if best.is_none_or(|(r, _)| ratio > r) {
                best = Some((ratio, f));
            }
        }
        let (ratio, f) = best.expect("instances have at least one facility");
        if !(ratio > 0.0) {
            return Err(Error::GreedyStalled {
                iteration: iteration as usize,
                ratio,
            });
        }
        let moved: Vec<usize> = instance
            .customers_of(f)
            .iter()
            .filter(|&&(c, dist)| current(c, &state) > phi(dist))
            .map(|&(c, _)| c)
            .collect();
        for &c in &moved {
            if state.assignment[c].is_none() {
                state.unassigned -= 1;
            }
            state.assignment[c] = Some(f);
        }
        state.chosen.push(f);
        state.facility_cost += instance.cost(f);
        state.assignment_cost = state
            .assignment
            .iter()
            .enumerate()
            .filter_map(|(c, g)| g.map(|g| instance.dist(g, c).expect("finite")))
            .sum();
        trace.records.push(TraceRecord {
            iteration,
            facility: f,
            assigned: moved,
            facility_cost: state.facility_cost,
            assignment_cost: state.assignment_cost,
            unassigned: state.unassigned,
            estimator: None,
        });
        iteration += 1;
    }
    let chosen: BTreeSet<usize> = state.chosen.iter().copied().collect();
    if chosen.len() != state.chosen.len() {
        return Err(Error::Invariant("greedy chose a facility twice".into()));
    }
    let (solution, report) = eval_integral(instance, &chosen)?;
    Ok(GreedyKMedians {
        solution,
        report,
        order: state.chosen,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerandMode {
    /// Method of conditional probabilities with a pessimistic estimator.
    Estimator,
    /// Best of `seeds` independent randomized roundings.
    BestOfSeeds { seeds: u32 },
}

impl DerandMode {
    pub const DEFAULT_SEEDS: u32 = 64;
}

/// Slack the estimator fallback allows over the rounding bound.
pub const FALLBACK_SLACK: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct Derandomized {
    pub solution: IntegralSolution,
    pub report: CostReport,
    pub trace: RoundingTrace,
    /// dist(x) + Σ_f cost(f)·x(f)·H(Δ_fx)
    pub bound: f64,
    /// Mode that produced the output (differs from the request after a
    /// fallback).
    pub mode_used: DerandMode,
    pub diagnostics: Vec<String>,
}

/// Deterministic facility-location rounding against the bound
/// dist(x) + Σ_f cost(f)·x(f)·H(Δ_fx).
///
/// `Estimator` mode never reassigns a customer. It keeps the potential
///
/// Φ = Σ_{assigned c} dist(f_c,c) + Σ_{unassigned c} Σ_f x(f,c)dist(f,c)
///   + Σ_{f holding customers} cost(f) + Σ_{other f} cost(f)·x(f)·H(u_f)
///
/// (u_f = unassigned customers with x(f,c) > 0) from increasing. Φ starts
/// at the bound and ends at or above dist(F) + cost(F). Every step assigns
/// a nonempty set; if no non-increasing step is found the run falls back
/// to best-of-64-seeds.
pub fn derandomize_fl(
    instance: &Instance,
    x: &FractionalSolution,
    mode: DerandMode,
) -> Result<Derandomized> {
    check_roundable(instance, x)?;
    let bound = fl_rounding_bound(instance, x)?;
    match mode {
        DerandMode::BestOfSeeds { seeds } => best_of_seeds(instance, x, seeds, bound),
        DerandMode::Estimator => match estimator_walk(instance, x)? {
            Ok((solution, report, trace)) => {
                let slack = 1e-9 * bound.abs().max(1.0);
                if report.total > bound + slack {
                    return Err(Error::Invariant(format!(
                        "derandomized total {} exceeds bound {bound}",
                        report.total
                    )));
                }
                Ok(Derandomized {
                    solution,
                    report,
                    trace,
                    bound,
                    mode_used: mode,
                    diagnostics: Vec::new(),
                })
            }
            Err(diagnostic) => {
                log::warn!("{diagnostic}; falling back to best-of-seeds");
                let seeds = DerandMode::DEFAULT_SEEDS;
                let mut out = best_of_seeds(instance, x, seeds, bound)?;
                if out.report.total > (1.0 + FALLBACK_SLACK) * bound {
                    return Err(Error::FallbackExhausted(format!(
                        "{diagnostic}; best of {seeds} seeds reached {} > (1+{FALLBACK_SLACK})·{bound}",
                        out.report.total
                    )));
                }
                out.diagnostics.push(diagnostic);
                Ok(out)
            }
        },
    }
}

fn best_of_seeds(
    instance: &Instance,
    x: &FractionalSolution,
    seeds: u32,
    bound: f64,
) -> Result<Derandomized> {
    if seeds == 0 {
        return Err(Error::InvalidParameter("best-of-seeds needs at least one seed".into()));
    }
    let runs = parallel::map_indexed(seeds as usize, |s| {
        let (sol, trace) = round_fl(instance, x, s as u64)?;
        let (sol, report) = eval_integral(instance, &sol.chosen)?;
        Ok::<_, Error>((sol, report, trace))
    });
    let mut best: Option<(IntegralSolution, CostReport, RoundingTrace)> = None;
    for run in runs {
        let run = run?;
        // strict < keeps the smallest seed among equal totals
        if best.as_ref().is_none_or(|b| run.1.total < b.1.total) {
            best = Some(run);
        }
    }
    let (solution, report, trace) = best.expect("at least one seed ran");
    Ok(Derandomized {
        solution,
        report,
        trace,
        bound,
        mode_used: DerandMode::BestOfSeeds { seeds },
        diagnostics: Vec::new(),
    })
}

struct Walk<'a> {
    instance: &'a Instance,
    /// Σ_f x(f,c)dist(f,c) per customer.
    expected_dist: Vec<f64>,
    /// cost(f)·x(f)
    weight: Vec<f64>,
    /// Facilities with x(f,c) > 0 per customer.
    fractional_of: Vec<Vec<usize>>,
    assignment: Vec<Option<usize>>,
    open: Vec<bool>,
    /// u_f
    pending: Vec<usize>,
}

impl<'a> Walk<'a> {
    fn new(instance: &'a Instance, x: &'a FractionalSolution) -> Self {
        let n = instance.customer_count();
        let m = instance.facility_count();
        let mut expected_dist = vec![0.0; n];
        let mut fractional_of = vec![Vec::new(); n];
        let mut pending = vec![0; m];
        for (&(f, c), &v) in &x.assign {
            if v > 0.0 {
                expected_dist[c] += v * instance.dist(f, c).expect("checked finite");
                fractional_of[c].push(f);
                pending[f] += 1;
            }
        }
        let weight = (0..m).map(|f| instance.cost(f) * x.open[f]).collect();
        Self {
            instance,
            expected_dist,
            weight,
            fractional_of,
            assignment: vec![None; n],
            open: vec![false; m],
            pending,
        }
    }

    fn potential(&self) -> f64 {
        let mut phi = 0.0;
        for (c, a) in self.assignment.iter().enumerate() {
            phi += match a {
                Some(f) => self.instance.dist(*f, c).expect("finite"),
                None => self.expected_dist[c],
            };
        }
        for f in 0..self.open.len() {
            phi += if self.open[f] {
                self.instance.cost(f)
            } else {
                self.weight[f] * harmonic(self.pending[f])
            };
        }
        phi
    }

    /// Best subset for facility `g` under the linear upper bound on the
    /// change in Φ, together with the exact change for that subset.
    fn candidate(&self, g: usize) -> Option<(f64, Vec<usize>)> {
        let mut scored: Vec<(usize, f64)> = self
            .instance
            .customers_of(g)
            .iter()
            .filter(|&&(c, _)| self.assignment[c].is_none())
            .map(|&(c, dist)| {
                let relief: f64 = self.fractional_of[c]
                    .iter()
                    .filter(|&&f| f != g && !self.open[f])
                    .map(|&f| self.weight[f] / self.pending[f] as f64)
                    .sum();
                (c, dist - self.expected_dist[c] - relief)
            })
            .collect();
        if scored.is_empty() {
            return None;
        }
        let mut subset: Vec<usize> = scored
            .iter()
            .filter(|&&(_, l)| l < 0.0)
            .map(|&(c, _)| c)
            .collect();
        if subset.is_empty() {
            scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            subset.push(scored[0].0);
        }
        Some((self.exact_change(g, &subset), subset))
    }

    fn exact_change(&self, g: usize, subset: &[usize]) -> f64 {
        let mut delta = 0.0;
        let mut removed = vec![0usize; self.open.len()];
        for &c in subset {
            delta += self.instance.dist(g, c).expect("finite") - self.expected_dist[c];
            for &f in &self.fractional_of[c] {
                removed[f] += 1;
            }
        }
        if !self.open[g] {
            delta += self.instance.cost(g) - self.weight[g] * harmonic(self.pending[g]);
        }
        for f in 0..self.open.len() {
            if f != g && !self.open[f] && removed[f] > 0 {
                delta += self.weight[f]
                    * (harmonic(self.pending[f] - removed[f]) - harmonic(self.pending[f]));
            }
        }
        delta
    }

    fn apply(&mut self, g: usize, subset: &[usize]) {
        for &c in subset {
            self.assignment[c] = Some(g);
            for &f in &self.fractional_of[c] {
                self.pending[f] -= 1;
            }
        }
        self.open[g] = true;
    }
}

type WalkResult = std::result::Result<(IntegralSolution, CostReport, RoundingTrace), String>;

fn estimator_walk(instance: &Instance, x: &FractionalSolution) -> Result<WalkResult> {
    let mut walk = Walk::new(instance, x);
    let mut phi = walk.potential();
    let slack = |v: f64| 1e-9 * v.abs().max(1.0);
    let mut trace = RoundingTrace::default();
    let mut iteration = 0u64;
    while walk.assignment.iter().any(Option::is_none) {
        let mut best: Option<(f64, usize, Vec<usize>)> = None;
        for g in 0..instance.facility_count() {
            if let Some((delta, subset)) = walk.candidate(g) {
                if best.as_ref().is_none_or(|b| delta < b.0) {
                    best = Some((delta, g, subset));
                }
            }
        }
        let Some((delta, g, subset)) = best else {
            return Ok(Err(format!(
                "iteration {iteration}: no facility reaches an unassigned customer"
            )));
        };
        if delta > slack(phi) {
            return Ok(Err(format!(
                "iteration {iteration}: best step raises the estimator by {delta}"
            )));
        }
        walk.apply(g, &subset);
        let next = walk.potential();
        if next > phi + slack(phi) {
            return Ok(Err(format!(
                "iteration {iteration}: estimator rose from {phi} to {next}"
            )));
        }
        phi = next;
        let assignment_cost = walk
            .assignment
            .iter()
            .enumerate()
            .filter_map(|(c, a)| a.map(|f| instance.dist(f, c).expect("finite")))
            .sum();
        let facility_cost = (0..walk.open.len())
            .filter(|&f| walk.open[f])
            .map(|f| instance.cost(f))
            .sum();
        trace.records.push(TraceRecord {
            iteration,
            facility: g,
            assigned: subset,
            facility_cost,
            assignment_cost,
            unassigned: walk.assignment.iter().filter(|a| a.is_none()).count(),
            estimator: Some(phi),
        });
        iteration += 1;
    }
    let chosen: BTreeSet<usize> = (0..walk.open.len()).filter(|&f| walk.open[f]).collect();
    let (solution, report) = eval_integral(instance, &chosen)?;
    Ok(Ok((solution, report, trace)))
}
