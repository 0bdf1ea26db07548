//! Lagrangian-relaxation solvers for fractional k-medians and fractional
//! facility location.
//!
//! Both solvers repeatedly pick a "star" (a facility plus a set of
//! customers) that is best against multiplicative dual weights y(c),
//! increment the star's counters and shrink the weights of the customers
//! it served. They are the derandomized forms of the fractional rounding
//! schemes, with pessimistic estimators tracked along the way.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FractionalSolution, Instance};
use crate::probability::{
    chi, required_iterations_fl, required_iterations_kmedians, FlRounds, KMediansRounds,
};
use crate::rounding::{RawCounters, RoundingTrace, TraceRecord};

/// Per-customer weights kept in the log domain:
/// ln y(c) = offset(c) + ups·up_step + downs(c)·down_step,
/// or y(c) = 0 once the customer has been zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct DualWeights {
    log_offset: Vec<f64>,
    up_step: f64,
    down_step: f64,
    ups: u64,
    downs: Vec<u64>,
    zeroed: Vec<bool>,
}

impl DualWeights {
    /// Every customer starts at `exp(log_start)`.
    pub fn uniform(customers: usize, log_start: f64, up_step: f64, down_step: f64) -> Self {
        Self {
            log_offset: vec![log_start; customers],
            up_step,
            down_step,
            ups: 0,
            downs: vec![0; customers],
            zeroed: vec![false; customers],
        }
    }

    /// Explicit non-negative weights, mostly for tests and oracles.
    pub fn from_values(values: &[f64]) -> Self {
        Self {
            log_offset: values.iter().map(|&v| v.ln()).collect(),
            up_step: 0.0,
            down_step: 0.0,
            ups: 0,
            downs: vec![0; values.len()],
            zeroed: values.iter().map(|&v| v == 0.0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.downs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.downs.is_empty()
    }

    /// ln y(c); −∞ when zeroed.
    pub fn log_value(&self, c: usize) -> f64 {
        if self.zeroed[c] {
            return f64::NEG_INFINITY;
        }
        self.log_offset[c] + self.ups as f64 * self.up_step + self.downs[c] as f64 * self.down_step
    }

    pub fn value(&self, c: usize) -> f64 {
        self.log_value(c).exp()
    }

    pub fn is_zero(&self, c: usize) -> bool {
        self.zeroed[c]
    }

    /// Multiply every weight by exp(up_step).
    pub fn raise_all(&mut self) {
        self.ups += 1;
    }

    /// Multiply y(c) by exp(down_step).
    pub fn lower(&mut self, c: usize) {
        self.downs[c] += 1;
    }

    pub fn zero(&mut self, c: usize) {
        self.zeroed[c] = true;
    }

    /// y(c) > dist, compared in log space when the linear value is not
    /// representable.
    fn exceeds(&self, c: usize, dist: f64) -> bool {
        if self.zeroed[c] {
            return false;
        }
        if dist == 0.0 {
            return true;
        }
        let v = self.value(c);
        if v.is_finite() && v > 0.0 {
            v > dist
        } else {
            self.log_value(c) > dist.ln()
        }
    }
}

/// A facility with the customers it serves in one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Star {
    pub facility: usize,
    pub customers: Vec<usize>,
    /// Gain Σ(y − dist) for k-medians, ratio Σy / (cost + Σdist) for
    /// facility location.
    pub value: f64,
}

/// Best star for fractional k-medians: for each facility the threshold set
/// C_f = {c : y(c) > dist(f,c)} maximizes Σ_{c∈C}(y(c) − dist(f,c)); the
/// facility with the largest gain wins, smallest id on ties.
pub fn best_star_kmedians(instance: &Instance, y: &DualWeights) -> Star {
    let mut best: Option<Star> = None;
    for f in 0..instance.facility_count() {
        let mut customers = Vec::new();
        let mut gain = 0.0;
        for &(c, dist) in instance.customers_of(f) {
            if y.exceeds(c, dist) {
                customers.push(c);
                gain += y.value(c) - dist;
            }
        }
        if best.as_ref().is_none_or(|b| gain > b.value) {
            best = Some(Star {
                facility: f,
                customers,
                value: gain,
            });
        }
    }
    best.expect("instances have at least one facility")
}

fn ratio(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Best star for fractional facility location: maximizes
/// Σ_{c∈C} y(c) / (cost(f) + Σ_{c∈C} dist(f,c)).
///
/// For a fixed facility the optimum is a prefix of its customers sorted by
/// y(c)/dist(f,c) descending (distance-0 customers first), so each facility
/// costs one sort and one sweep. Ties prefer the smaller facility id, then
/// the shorter set.
pub fn best_star_ratio_fl(instance: &Instance, y: &DualWeights) -> Star {
    // a common rescaling leaves every ratio comparison unchanged and keeps
    // tiny weights out of the subnormal range
    let top = (0..y.len())
        .map(|c| y.log_value(c))
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = if top.is_finite() && top < -600.0 { -top } else { 0.0 };
    let weight = |c: usize| {
        if shift == 0.0 {
            y.value(c)
        } else {
            (y.log_value(c) + shift).exp()
        }
    };

    let mut best: Option<(f64, Star)> = None;
    for f in 0..instance.facility_count() {
        let mut cand: Vec<(usize, f64, f64)> = instance
            .customers_of(f)
            .iter()
            .filter(|&&(c, _)| !y.is_zero(c))
            .map(|&(c, dist)| (c, weight(c), dist))
            .filter(|&(_, w, _)| w > 0.0)
            .collect();
        cand.sort_by(|a, b| {
            let ka = ratio(a.1, a.2);
            let kb = ratio(b.1, b.2);
            kb.total_cmp(&ka).then(a.0.cmp(&b.0))
        });
        let cost = instance.cost(f);
        let (mut num, mut den) = (0.0, cost);
        let (mut best_len, mut best_ratio) = (0usize, 0.0);
        for (i, &(_, w, dist)) in cand.iter().enumerate() {
            num += w;
            den += dist;
            let r = ratio(num, den);
            if r > best_ratio {
                best_ratio = r;
                best_len = i + 1;
            }
        }
        let mut customers: Vec<usize> = cand[..best_len].iter().map(|&(c, _, _)| c).collect();
        customers.sort_unstable();
        // canonical value: sums in customer order, true weight scale
        let num: f64 = customers.iter().map(|&c| y.value(c)).sum();
        let den = customers
            .iter()
            .fold(cost, |acc, &c| acc + instance.dist(f, c).expect("finite"));
        let key = if shift == 0.0 { ratio(num, den) } else { best_ratio };
        if best.as_ref().is_none_or(|(k, _)| key > *k) {
            let value = if shift == 0.0 { key } else { key * (-shift).exp() };
            best = Some((
                key,
                Star {
                    facility: f,
                    customers,
                    value,
                },
            ));
        }
    }
    best.expect("instances have at least one facility").1
}

/// Parameters of a fractional k-medians run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KMediansParams {
    pub k: u64,
    pub d: f64,
    pub eps: f64,
    pub rounds: KMediansRounds,
}

impl KMediansParams {
    pub fn new(customers: usize, k: u64, d: f64, eps: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be a positive integer".into()));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidParameter(format!("d must be positive, got {d}")));
        }
        let rounds = required_iterations_kmedians(customers, eps, k)?;
        Ok(Self { k, d, eps, rounds })
    }

    /// (1−ε)N
    pub fn divisor(&self) -> f64 {
        (1.0 - self.eps) * self.rounds.n()
    }
}

/// Value of the k-medians pessimistic estimator with its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorState {
    pub value: f64,
    pub distance_term: f64,
    pub coverage_term: f64,
    pub remaining: u64,
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + v.iter().map(|&x| (x - top).exp()).sum::<f64>().ln()
}

/// pe(x,t) = (dist(x) + t·d/k) / (dN/(1−ε))
///         + Σ_c (1−ε)^{x(c)} e^{−tε/k} / (1−ε)^{(1−ε)N}
pub fn pe_kmedians(
    instance: &Instance,
    counters: &RawCounters,
    remaining: u64,
    params: &KMediansParams,
) -> EstimatorState {
    let KMediansParams { k, d, eps, rounds } = *params;
    let n_rounds = rounds.n();
    let kf = k as f64;
    let t = remaining as f64;
    let distance_term =
        (counters.assignment_cost(instance) + t * d / kf) / (d * n_rounds / (1.0 - eps));
    let ln_keep = (1.0 - eps).ln();
    let lse = log_sum_exp(counters.coverage.iter().map(|&x| x as f64 * ln_keep));
    let coverage_term = (lse - t * eps / kf - (1.0 - eps) * n_rounds * ln_keep).exp();
    EstimatorState {
        value: distance_term + coverage_term,
        distance_term,
        coverage_term,
        remaining,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FracKMedians {
    /// Counters divided by (1−ε)N.
    pub solution: FractionalSolution,
    pub counters: RawCounters,
    pub params: KMediansParams,
    /// Estimator after every iteration (index 0 is the initial state).
    pub estimator: Vec<EstimatorState>,
    pub trace: RoundingTrace,
}

/// Lagrangian relaxation for fractional unweighted k-medians.
///
/// Runs exactly N·k iterations. Each raises every weight by e^{ε/k}, picks
/// the best star, increments its counters and multiplies the weights of its
/// customers by (1−ε). The weights are the marginal savings of the
/// pessimistic estimator, starting from ε(1−ε)^{-1}Nd·e^{−χ(−ε)N}.
///
/// If a fractional solution with |x| ≤ k and dist ≤ d exists, the estimator
/// stays below 1 and the output has cost (1−ε)^{-1}k, dist ≤ (1−ε)^{-2}d and
/// coverage ≥ 1. An estimator value ≥ 1 is returned as a certificate that no
/// such solution exists.
pub fn solve_frac_kmedians(instance: &Instance, k: u64, d: f64, eps: f64) -> Result<FracKMedians> {
    if !instance.is_unit_cost() {
        return Err(Error::WeightedInstance);
    }
    let params = KMediansParams::new(instance.customer_count(), k, d, eps)?;
    let n_rounds = params.rounds.n();
    let kf = k as f64;
    let log_start = (eps * d * n_rounds / (1.0 - eps)).ln() - chi(-eps)? * n_rounds;
    let mut y = DualWeights::uniform(instance.customer_count(), log_start, eps / kf, (1.0 - eps).ln());
    let mut counters = RawCounters::new(instance);
    let total = params.rounds.total;

    let certify = |iteration: u64, pe: &EstimatorState| -> Result<()> {
        if pe.value >= 1.0 {
            return Err(Error::EstimatorCertificate {
                iteration,
                value: pe.value,
                distance_term: pe.distance_term,
                coverage_term: pe.coverage_term,
            });
        }
        Ok(())
    };
    let initial = pe_kmedians(instance, &counters, total, &params);
    certify(0, &initial)?;
    let mut estimator = vec![initial];
    let mut trace = RoundingTrace::default();
    let divisor = params.divisor();

    for iteration in 0..total {
        y.raise_all();
        let star = best_star_kmedians(instance, &y);
        counters.apply(star.facility, &star.customers);
        for &c in &star.customers {
            y.lower(c);
        }
        let pe = pe_kmedians(instance, &counters, total - iteration - 1, &params);
        certify(iteration + 1, &pe)?;
        trace.records.push(TraceRecord {
            iteration,
            facility: star.facility,
            assigned: star.customers,
            facility_cost: counters.facility_cost(instance),
            assignment_cost: counters.assignment_cost(instance),
            unassigned: counters
                .coverage
                .iter()
                .filter(|&&v| (v as f64) < divisor)
                .count(),
            estimator: Some(pe.value),
        });
        estimator.push(pe);
    }
    Ok(FracKMedians {
        solution: counters.scaled(instance, divisor),
        counters,
        params,
        estimator,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FracFl {
    /// Counters divided by (1−ε)N.
    pub solution: FractionalSolution,
    pub counters: RawCounters,
    pub rounds: FlRounds,
    pub trace: RoundingTrace,
}

/// Lagrangian relaxation for fractional facility location.
///
/// Starting from y ≡ 1, repeatedly applies the best ratio star, multiplying
/// the weight of each served customer by (1−ε) and zeroing it once its
/// count passes N, until every customer reaches (1−ε)N. The output total is
/// at most (1−ε)^{-1} times the fractional optimum.
pub fn solve_frac_fl(instance: &Instance, eps: f64) -> Result<FracFl> {
    let rounds = required_iterations_fl(instance.customer_count(), eps)?;
    let n_rounds = rounds.n();
    let target = rounds.target;
    let mut y = DualWeights::uniform(instance.customer_count(), 0.0, 0.0, (1.0 - eps).ln());
    let mut counters = RawCounters::new(instance);
    let mut trace = RoundingTrace::default();
    // every iteration increments some x(c) ≤ N
    let cap = instance.customer_count() as u64 * (n_rounds.floor() as u64 + 1);
    let mut iteration = 0u64;
    while counters.min_coverage() < target {
        if iteration >= cap {
            return Err(Error::Invariant(format!(
                "fractional facility location exceeded {cap} iterations"
            )));
        }
        let star = best_star_ratio_fl(instance, &y);
        if !(star.value > 0.0) {
            let c = (0..instance.customer_count())
                .find(|&c| counters.coverage[c] < target)
                .expect("loop runs only while someone is short");
            return Err(Error::UncoverableCustomer(instance.customer_id(c).to_string()));
        }
        counters.apply(star.facility, &star.customers);
        for &c in &star.customers {
            y.lower(c);
            if counters.coverage[c] as f64 > n_rounds {
                y.zero(c);
            }
        }
        trace.records.push(TraceRecord {
            iteration,
            facility: star.facility,
            assigned: star.customers,
            facility_cost: counters.facility_cost(instance),
            assignment_cost: counters.assignment_cost(instance),
            unassigned: counters.coverage.iter().filter(|&&v| v < target).count(),
            estimator: None,
        });
        iteration += 1;
    }
    Ok(FracFl {
        solution: counters.scaled(instance, target as f64),
        counters,
        rounds,
        trace,
    })
}

/// M̃(x) = log_{1−ε} Σ_c (1−ε)^{x(c)}
pub fn smoothed_min_coverage(coverage: &[u64], eps: f64) -> f64 {
    let ln_keep = (1.0 - eps).ln();
    log_sum_exp(coverage.iter().map(|&x| x as f64 * ln_keep)) / ln_keep
}

/// pe(x) = cost(x) + dist(x) + K·((1−ε)N − M̃(x)) / (−ε/ln(1−ε)), where K
/// is a reference total at least the fractional optimum. Along a solver
/// trace it should stay at or below K·N.
pub fn pe_fl(instance: &Instance, counters: &RawCounters, reference_total: f64, rounds: &FlRounds) -> f64 {
    let eps = rounds.eps;
    let rate = -eps / (1.0 - eps).ln();
    counters.facility_cost(instance)
        + counters.assignment_cost(instance)
        + reference_total * (rounds.target as f64 - smoothed_min_coverage(&counters.coverage, eps))
            / rate
}

/// Rebuilds the counters after each recorded iteration.
pub fn replay_counters(instance: &Instance, trace: &RoundingTrace) -> Vec<RawCounters> {
    let mut counters = RawCounters::new(instance);
    let mut out = Vec::with_capacity(trace.len() + 1);
    out.push(counters.clone());
    for r in &trace.records {
        counters.apply(r.facility, &r.assigned);
        out.push(counters.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::{eval_fractional, normalize_assignments, validate_fractional};
    use approx::assert_relative_eq;

    fn star_instance(n: usize, dist: f64) -> Instance {
        let customers: Vec<String> = (0..n).map(|c| format!("c{c}")).collect();
        let distances = customers.iter().map(|c| triple("f", c, dist)).collect();
        Instance::new(vec![facility("f", 1.0)], customers, distances).unwrap()
    }

    #[test]
    fn kmedians_star_examples() {
        let inst = star_instance(1, 1.0);
        let s = best_star_kmedians(&inst, &DualWeights::from_values(&[0.0]));
        assert!(s.value <= 0.0);
        assert!(s.customers.is_empty());
        let s = best_star_kmedians(&inst, &DualWeights::from_values(&[5.0]));
        assert_eq!(s.facility, 0);
        assert_eq!(s.customers, vec![0]);
        assert_relative_eq!(s.value, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn fl_star_examples() {
        let inst = star_instance(1, 1.0);
        let s = best_star_ratio_fl(&inst, &DualWeights::from_values(&[0.0]));
        assert_eq!(s.value, 0.0);
        assert!(s.customers.is_empty());
        let s = best_star_ratio_fl(&inst, &DualWeights::from_values(&[1.0]));
        assert_eq!(s.customers, vec![0]);
        assert_relative_eq!(s.value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn fl_star_puts_zero_distance_first() {
        let inst = Instance::new(
            vec![facility("f", 2.0)],
            vec!["a".into(), "b".into()],
            vec![triple("f", "a", 0.0), triple("f", "b", 10.0)],
        )
        .unwrap();
        let s = best_star_ratio_fl(&inst, &DualWeights::from_values(&[1.0, 1.0]));
        assert_eq!(s.customers, vec![0]);
        assert_relative_eq!(s.value, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn tiny_weights_keep_their_ratios() {
        let inst = i2();
        let big = DualWeights::from_values(&[1.0, 0.5, 0.25]);
        let mut tiny = big.clone();
        for c in 0..3 {
            tiny.log_offset[c] -= 800.0;
        }
        let a = best_star_ratio_fl(&inst, &big);
        let b = best_star_ratio_fl(&inst, &tiny);
        assert_eq!((a.facility, &a.customers), (b.facility, &b.customers));
    }

    #[test]
    fn frac_kmedians_single_zero_distance_facility() {
        let inst = star_instance(4, 0.0);
        let eps = 0.5;
        let out = solve_frac_kmedians(&inst, 1, 1.0, eps).unwrap();
        let total = out.params.rounds.total;
        assert_eq!(out.counters.open[0], total);
        assert!(out.counters.coverage.iter().all(|&v| v == total));
        for c in 0..4 {
            assert_relative_eq!(out.solution.get(0, c), 1.0 / (1.0 - eps), epsilon = 1e-12);
        }
        assert_eq!(eval_fractional(&inst, &out.solution).unwrap().assignment_cost, 0.0);
        assert!(out.estimator.iter().all(|e| e.value < 1.0));
    }

    #[test]
    fn initial_estimator_matches_closed_form() {
        let inst = star_instance(4, 1.0);
        let params = KMediansParams::new(4, 2, 3.0, 0.5).unwrap();
        assert_eq!(params.rounds.total, 28);
        let pe = pe_kmedians(&inst, &RawCounters::new(&inst), 28, &params);
        let n = 14.0f64;
        let closed = 0.5 + 4.0 * (-n * 0.5f64).exp() * 0.5f64.powf(-0.5 * n);
        assert_relative_eq!(pe.value, closed, max_relative = 1e-12);
        assert!(pe.value < 1.0);
    }

    #[test]
    fn coverage_term_drops_when_coverage_rises() {
        let inst = star_instance(3, 1.0);
        let params = KMediansParams::new(3, 1, 1.0, 0.3).unwrap();
        let mut counters = RawCounters::new(&inst);
        let before = pe_kmedians(&inst, &counters, 5, &params).coverage_term;
        counters.coverage[1] += 1;
        let after = pe_kmedians(&inst, &counters, 5, &params).coverage_term;
        assert!(after < before);
    }

    #[test]
    fn frac_kmedians_certifies_infeasibility() {
        // one customer at distance 10 but d = 0.1
        let inst = star_instance(1, 10.0);
        assert!(matches!(
            solve_frac_kmedians(&inst, 1, 0.1, 0.5),
            Err(Error::EstimatorCertificate { .. })
        ));
    }

    #[test]
    fn frac_kmedians_rejects_weighted() {
        assert_eq!(
            solve_frac_kmedians(&i2(), 2, 3.0, 0.5).unwrap_err(),
            Error::WeightedInstance
        );
    }

    #[test]
    fn frac_fl_single_facility() {
        let inst = star_instance(4, 0.0);
        let eps = 0.5;
        let out = solve_frac_fl(&inst, eps).unwrap();
        let target = out.rounds.target;
        assert_eq!(out.trace.len() as u64, target);
        let r = eval_fractional(&inst, &out.solution).unwrap();
        assert_relative_eq!(r.total, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.total, (1.0 - eps) * out.rounds.n() / target as f64, epsilon = 1e-12);
    }

    #[test]
    fn frac_fl_on_i2_is_feasible_after_normalizing() {
        let inst = i2();
        let out = solve_frac_fl(&inst, 0.5).unwrap();
        assert!(out.counters.min_coverage() >= out.rounds.target);
        let norm = normalize_assignments(&inst, &out.solution).unwrap();
        assert!(validate_fractional(&inst, &norm, 1e-6).is_empty());
        let total = eval_fractional(&inst, &out.solution).unwrap().total;
        assert!(total <= 2.0 * 5.0 + 1e-9);
    }

    #[test]
    fn initial_fl_estimator_is_within_invariant() {
        let inst = star_instance(4, 1.0);
        let rounds = required_iterations_fl(4, 0.5).unwrap();
        let pe = pe_fl(&inst, &RawCounters::new(&inst), 3.0, &rounds);
        assert!(pe <= 3.0 * rounds.n());
        assert_relative_eq!(smoothed_min_coverage(&[0, 0, 0, 0], 0.5), 4f64.ln() / 0.5f64.ln());
    }

    mod random {
        use super::*;
        use crate::oracle::{exact_fl, exact_kmedians, gen_instance, GeneratorConfig};
        use proptest::prelude::*;

        fn adjacent(inst: &Instance, f: usize) -> Vec<(usize, f64)> {
            inst.customers_of(f).to_vec()
        }

        fn subsets(adj: &[(usize, f64)]) -> impl Iterator<Item = Vec<(usize, f64)>> + '_ {
            (0u32..1 << adj.len()).map(move |mask| {
                adj.iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &p)| p)
                    .collect()
            })
        }

        fn brute_kmedians(inst: &Instance, y: &DualWeights) -> f64 {
            let mut best = f64::NEG_INFINITY;
            for f in 0..inst.facility_count() {
                for sub in subsets(&adjacent(inst, f)) {
                    best = best.max(sub.iter().map(|&(c, d)| y.value(c) - d).sum());
                }
            }
            best
        }

        fn brute_fl(inst: &Instance, y: &DualWeights) -> f64 {
            let mut best = 0.0f64;
            for f in 0..inst.facility_count() {
                for sub in subsets(&adjacent(inst, f)) {
                    let num: f64 = sub.iter().map(|&(c, _)| y.value(c)).sum();
                    let den = sub.iter().fold(inst.cost(f), |acc, &(_, d)| acc + d);
                    best = best.max(ratio(num, den));
                }
            }
            best
        }

        fn config(facilities: usize, customers: usize, unit: bool, seed: u64) -> GeneratorConfig {
            GeneratorConfig {
                facilities,
                customers,
                unit_costs: unit,
                seed,
                ..GeneratorConfig::default()
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn stars_match_exhaustive_search(
                seed in 0u64..10_000,
                weights in prop::collection::vec(0.0f64..12.0, 8),
                zeros in prop::collection::vec(any::<bool>(), 8),
            ) {
                let inst = gen_instance(&config(3, 8, false, seed)).unwrap();
                let values: Vec<f64> = weights
                    .iter()
                    .zip(&zeros)
                    .map(|(&w, &z)| if z { 0.0 } else { w })
                    .collect();
                let y = DualWeights::from_values(&values);
                let km = best_star_kmedians(&inst, &y);
                prop_assert_eq!(km.value.max(0.0), brute_kmedians(&inst, &y).max(0.0));
                let fl = best_star_ratio_fl(&inst, &y);
                prop_assert_eq!(fl.value, brute_fl(&inst, &y));
            }

            #[test]
            fn frac_kmedians_meets_its_bounds(seed in 0u64..10_000, k in 1u64..4) {
                let inst = gen_instance(&config(5, 7, true, seed)).unwrap();
                let opt = exact_kmedians(&inst, k as f64);
                prop_assume!(opt.is_ok());
                let (_, opt) = opt.unwrap();
                let eps = 0.5;
                let out = solve_frac_kmedians(&inst, k, opt.assignment_cost.max(1e-9), eps).unwrap();
                let r = eval_fractional(&inst, &out.solution).unwrap();
                prop_assert!(r.facility_cost <= k as f64 / (1.0 - eps) + 1e-9);
                prop_assert!(r.assignment_cost <= opt.assignment_cost.max(1e-9) / (1.0 - eps).powi(2) + 1e-9);
                prop_assert!(out.solution.coverage(inst.customer_count()).iter().all(|&v| v >= 1.0 - 1e-9));
                prop_assert!(out.estimator.iter().all(|e| e.value < 1.0));
            }

            #[test]
            fn frac_fl_meets_its_bounds(seed in 0u64..10_000, eps in 0.1f64..0.6) {
                let inst = gen_instance(&config(4, 6, false, seed)).unwrap();
                let (_, opt) = exact_fl(&inst).unwrap();
                let out = solve_frac_fl(&inst, eps).unwrap();
                let total = eval_fractional(&inst, &out.solution).unwrap().total;
                prop_assert!(total <= opt.total / (1.0 - eps) + 1e-9);
                let cap = inst.customer_count() as u64 * (out.rounds.n().floor() as u64 + 1);
                prop_assert!(out.trace.len() as u64 <= cap);
                let pes: Vec<f64> = replay_counters(&inst, &out.trace)
                    .iter()
                    .map(|x| pe_fl(&inst, x, opt.total, &out.rounds))
                    .collect();
                prop_assert!(pes[0] <= opt.total * out.rounds.n() + 1e-9);
                for w in pes.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
                }
            }
        }
    }
}
