//! Exact brute-force solvers, instance generation and the guarantee
//! verification harness.

mod generate;
pub mod verify;

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{eval_integral, CostReport, Instance, IntegralSolution};

pub use generate::{gen_instance, GeneratorConfig};

/// Default enumeration guard: at most 2^20 subsets.
pub const MAX_EXACT_FACILITIES: usize = 20;

fn check_guard(instance: &Instance, limit: usize) -> Result<()> {
    if limit > MAX_EXACT_FACILITIES {
        log::warn!(
            "enumeration guard raised to {limit} facilities; this enumerates up to 2^{limit} subsets"
        );
    }
    let m = instance.facility_count();
    if m > limit || m >= 64 {
        return Err(Error::GuardExceeded { count: m, limit });
    }
    Ok(())
}

/// (facility cost, assignment cost) of a subset mask, or `None` if some
/// customer is left without a finite distance.
fn evaluate_mask(instance: &Instance, mask: u64) -> Option<(f64, f64)> {
    let cost = (0..instance.facility_count())
        .filter(|&f| mask >> f & 1 == 1)
        .map(|f| instance.cost(f))
        .sum();
    let mut dist = 0.0;
    for c in 0..instance.customer_count() {
        let best = instance
            .facilities_of(c)
            .iter()
            .filter(|&&(f, _)| mask >> f & 1 == 1)
            .map(|&(_, d)| d)
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))));
        dist += best?;
    }
    Some((cost, dist))
}

fn mask_set(mask: u64, m: usize) -> BTreeSet<usize> {
    (0..m).filter(|&f| mask >> f & 1 == 1).collect()
}

/// Lexicographic order on the sorted facility list of two equal-size masks.
fn lex_less(a: u64, b: u64, m: usize) -> bool {
    let la: Vec<usize> = (0..m).filter(|&f| a >> f & 1 == 1).collect();
    let lb: Vec<usize> = (0..m).filter(|&f| b >> f & 1 == 1).collect();
    la < lb
}

/// Best mask under `objective`, breaking ties by fewer facilities and then
/// by the lexicographically smallest id list.
fn enumerate_best(
    instance: &Instance,
    objective: impl Fn(f64, f64) -> Option<f64>,
) -> Option<u64> {
    let m = instance.facility_count();
    let mut best: Option<(f64, u32, u64)> = None;
    for mask in 1..(1u64 << m) {
        let Some((cost, dist)) = evaluate_mask(instance, mask) else {
            continue;
        };
        let Some(value) = objective(cost, dist) else {
            continue;
        };
        let ones = mask.count_ones();
        let better = match best {
            None => true,
            Some((bv, bo, bm)) => {
                value < bv || (value == bv && (ones < bo || (ones == bo && lex_less(mask, bm, m))))
            }
        };
        if better {
            best = Some((value, ones, mask));
        }
    }
    best.map(|(_, _, mask)| mask)
}

/// Minimizes dist(F) + cost(F) over every nonempty facility subset.
pub fn exact_fl(instance: &Instance) -> Result<(IntegralSolution, CostReport)> {
    exact_fl_with_guard(instance, MAX_EXACT_FACILITIES)
}

pub fn exact_fl_with_guard(
    instance: &Instance,
    limit: usize,
) -> Result<(IntegralSolution, CostReport)> {
    check_guard(instance, limit)?;
    let mask = enumerate_best(instance, |cost, dist| Some(cost + dist)).ok_or_else(|| {
        // validated instances always admit the all-facilities subset
        Error::Invariant("no subset covers every customer".into())
    })?;
    eval_integral(instance, &mask_set(mask, instance.facility_count()))
}

/// Minimizes dist(F) over facility subsets with cost(F) ≤ budget.
pub fn exact_kmedians(instance: &Instance, budget: f64) -> Result<(IntegralSolution, CostReport)> {
    exact_kmedians_with_guard(instance, budget, MAX_EXACT_FACILITIES)
}

pub fn exact_kmedians_with_guard(
    instance: &Instance,
    budget: f64,
    limit: usize,
) -> Result<(IntegralSolution, CostReport)> {
    check_guard(instance, limit)?;
    let slack = 1e-12 * budget.abs().max(1.0);
    let mask = enumerate_best(instance, |cost, dist| (cost <= budget + slack).then_some(dist))
        .ok_or(Error::NoFeasibleSubset(budget))?;
    eval_integral(instance, &mask_set(mask, instance.facility_count()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;

    #[test]
    fn exact_fl_examples() {
        let (sol, r) = exact_fl(&i1()).unwrap();
        assert_eq!(sol.chosen, BTreeSet::from([0, 1]));
        assert_eq!(r.total, 2.0);
        let (sol, r) = exact_fl(&i2()).unwrap();
        assert_eq!(r.total, 5.0);
        assert_eq!(sol.chosen, BTreeSet::from([0]));
    }

    #[test]
    fn exact_kmedians_examples() {
        let inst = i2();
        let (sol, r) = exact_kmedians(&inst, 2.0).unwrap();
        assert_eq!(sol.chosen, BTreeSet::from([0]));
        assert_eq!(r.assignment_cost, 3.0);
        assert_eq!(
            exact_kmedians(&inst, 0.5).unwrap_err(),
            Error::NoFeasibleSubset(0.5)
        );
        let (_, all) = eval_integral(&inst, &BTreeSet::from([0, 1])).unwrap();
        let (_, r) = exact_kmedians(&inst, inst.total_cost()).unwrap();
        assert_eq!(r.assignment_cost, all.assignment_cost);
    }

    #[test]
    fn guard_is_enforced() {
        let cfg = GeneratorConfig {
            facilities: 21,
            customers: 3,
            ..GeneratorConfig::default()
        };
        let inst = gen_instance(&cfg).unwrap();
        assert!(matches!(exact_fl(&inst), Err(Error::GuardExceeded { count: 21, limit: 20 })));
    }
}
