//! Monte Carlo checks of the randomized schemes against their expectation
//! and positive-probability bounds, plus the per-iteration assignment
//! frequencies behind them.

use medianforge::model::{eval_fractional, eval_integral, FractionalSolution, Instance};
use medianforge::oracle::{exact_fl, exact_kmedians, gen_instance, GeneratorConfig};
use medianforge::probability::{estimate_chernoff_tail, harmonic, required_iterations_kmedians};
use medianforge::rounding::{
    fl_rounding_bound, kmedians_cost_threshold, round_fl, round_frac_fl, round_frac_kmedians,
    round_kmedians,
};

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn generated(facilities: usize, customers: usize, unit: bool, seed: u64) -> Instance {
    gen_instance(&GeneratorConfig {
        facilities,
        customers,
        unit_costs: unit,
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn i2() -> Instance {
    Instance::from_json(
        br#"{"facilities":[{"id":"f1","cost":2},{"id":"f2","cost":1}],
            "customers":["c1","c2","c3"],
            "distances":[["f1","c1",1],["f1","c2",1],["f1","c3",1],
                         ["f2","c1",0],["f2","c2",4],["f2","c3",4]]}"#,
    )
    .unwrap()
}

fn relaxed_optimum(instance: &Instance) -> FractionalSolution {
    let (sol, _) = exact_fl(instance).unwrap();
    FractionalSolution::from_integral(instance, &sol)
}

#[test]
fn round_fl_mean_is_within_its_bound() {
    let inst = generated(5, 8, false, 17);
    let x = relaxed_optimum(&inst);
    // independent evaluation of dist(x) + Σ cost(f)x(f)H(Δ)
    let mut bound = 0.0;
    for f in 0..inst.facility_count() {
        let degree = (0..inst.customer_count()).filter(|&c| x.get(f, c) > 0.0).count();
        bound += inst.cost(f) * x.open[f] * harmonic(degree);
        for c in 0..inst.customer_count() {
            if x.get(f, c) > 0.0 {
                bound += x.get(f, c) * inst.dist(f, c).unwrap();
            }
        }
    }
    approx::assert_relative_eq!(bound, fl_rounding_bound(&inst, &x).unwrap(), max_relative = 1e-12);
    let totals: Vec<f64> = (0..10_000)
        .map(|s| {
            let (sol, _) = round_fl(&inst, &x, s).unwrap();
            eval_integral(&inst, &sol.chosen).unwrap().1.total
        })
        .collect();
    let (mean, se) = mean_stderr(&totals);
    assert!(mean <= bound + 3.0 * se, "mean {mean} bound {bound} se {se}");
}

#[test]
fn assignment_frequencies_match_the_fractional_weights() {
    let inst = Instance::from_json(
        br#"{"facilities":[{"id":"f0","cost":1},{"id":"f1","cost":3}],
            "customers":["c0","c1","c2"],
            "distances":[["f0","c0",1],["f0","c1",2],["f0","c2",3],
                         ["f1","c0",1],["f1","c1",2],["f1","c2",3]]}"#,
    )
    .unwrap();
    let x = FractionalSolution::from_json(
        &inst,
        br#"{"open":{"f0":1,"f1":1},
            "assign":[["f0","c0",0.5],["f1","c0",0.5],["f0","c1",1],["f0","c2",0.3],["f1","c2",0.7]]}"#,
    )
    .unwrap();
    let size = 2.0;
    let mut iterations = 0u64;
    let mut hits = [[0u64; 3]; 2];
    for s in 0..20_000 {
        let (_, trace) = round_fl(&inst, &x, s).unwrap();
        for r in &trace.records {
            iterations += 1;
            for &c in &r.assigned {
                hits[r.facility][c] += 1;
            }
        }
    }
    for f in 0..2 {
        for c in 0..3 {
            let p = x.get(f, c) / size;
            let freq = hits[f][c] as f64 / iterations as f64;
            let se = (p * (1.0 - p) / iterations as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se + 1e-12, "f{f} c{c}: {freq} vs {p}");
        }
    }
}

#[test]
fn round_kmedians_succeeds_with_positive_probability_and_respects_the_cap() {
    let inst = i2();
    let (sol, report) = exact_kmedians(&inst, 2.0).unwrap();
    assert_eq!(report.assignment_cost, 3.0);
    let x = FractionalSolution::from_integral(&inst, &sol);
    let eps = 0.5;
    let cap = kmedians_cost_threshold(3, 2.0, eps) + 2.0;
    approx::assert_relative_eq!(cap, 2.0 * 9f64.ln() + 2.0);
    let mut successes = 0;
    for s in 0..10_000 {
        let out = round_kmedians(&inst, &x, 2.0, 3.0, eps, s).unwrap();
        let cost: f64 = out.chosen.iter().map(|&f| inst.cost(f)).sum();
        assert!(cost <= cap + 1e-9);
        successes += out.success as u32;
    }
    assert!(successes > 0);
}

#[test]
fn round_frac_kmedians_meets_its_bounds_with_positive_probability() {
    let inst = generated(3, 4, true, 5);
    let (sol, report) = exact_kmedians(&inst, 2.0).unwrap();
    let k = report.facility_cost as u64;
    let x = FractionalSolution::from_integral(&inst, &sol);
    let eps = 0.5;
    let rounds = required_iterations_kmedians(4, eps, k).unwrap();
    let divisor = (1.0 - eps) * rounds.n();
    let mut good = 0;
    for s in 0..1000 {
        let out = round_frac_kmedians(&inst, &x, eps, s).unwrap();
        assert_eq!(out.counters.open.iter().sum::<u64>(), rounds.total);
        let r = eval_fractional(&inst, &out.solution).unwrap();
        approx::assert_relative_eq!(r.facility_cost, k as f64 / (1.0 - eps), max_relative = 1e-12);
        let covered = out.counters.min_coverage() as f64 >= divisor;
        if covered && r.assignment_cost <= report.assignment_cost / (1.0 - eps).powi(2) + 1e-9 {
            good += 1;
        }
    }
    assert!(good > 0);
}

#[test]
fn round_frac_fl_mean_is_within_its_bound() {
    let inst = generated(4, 6, false, 23);
    let x = relaxed_optimum(&inst);
    let eps = 0.5;
    let reference = eval_fractional(&inst, &x).unwrap().total;
    let totals: Vec<f64> = (0..10_000)
        .map(|s| {
            let out = round_frac_fl(&inst, &x, eps, s).unwrap();
            assert!(out.counters.min_coverage() as f64 >= out.divisor);
            eval_fractional(&inst, &out.solution).unwrap().total
        })
        .collect();
    let (mean, se) = mean_stderr(&totals);
    assert!(mean <= reference / (1.0 - eps) + 3.0 * se);
}

/// Exact Pr[Binomial(k, p) ≥ threshold] by summing the pmf.
fn binomial_tail(k: u64, p: f64, threshold: f64) -> f64 {
    let mut log_choose = 0.0f64;
    let mut total = 0.0;
    for j in 0..=k {
        if j > 0 {
            log_choose += ((k - j + 1) as f64).ln() - (j as f64).ln();
        }
        if j as f64 >= threshold {
            let log_pmf = log_choose + j as f64 * p.ln() + (k - j) as f64 * (1.0 - p).ln();
            total += log_pmf.exp();
        }
    }
    total
}

#[test]
fn chernoff_tail_estimates_match_the_exact_binomial() {
    for &(k, p, eps) in &[(100u64, 0.5, 0.0), (100, 0.5, 0.2), (40, 0.1, 1.0), (200, 0.3, 0.1)] {
        let est = estimate_chernoff_tail(k, p, eps, 100_000, 99).unwrap();
        let exact = binomial_tail(k, p, k as f64 * p * (1.0 + eps));
        let se = (exact * (1.0 - exact) / 100_000.0).sqrt();
        assert!(
            (est.probability - exact).abs() <= 3.0 * se + 1e-12,
            "k={k} p={p} eps={eps}: {} vs {exact}",
            est.probability
        );
        // and the Chernoff bound itself
        let chi = (1.0 + eps) * (1.0 + eps).ln() - eps;
        assert!(exact <= (-chi * k as f64 * p).exp() + 1e-12);
    }
}
