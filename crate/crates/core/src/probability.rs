//! Concentration-bound machinery: the Chernoff exponent χ, harmonic numbers,
//! iteration-count selection for the Lagrangian solvers, the Chernoff-Wald
//! ε-solver, and Monte Carlo experiments that exercise Wald's inequality and
//! the Chernoff bound.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;
use crate::seed;

/// H_n = 1 + 1/2 + ... + 1/n, with H_0 = 0.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 / i as f64).sum()
}

/// χ(ε) = (1+ε)ln(1+ε) − ε, defined for ε > −1.
pub fn chi(eps: f64) -> Result<f64> {
    if !(eps > -1.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "chi is defined for eps > -1, got {eps}"
        )));
    }
    Ok((1.0 + eps) * eps.ln_1p() - eps)
}

fn check_open_unit(name: &str, eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must lie in (0, 1), got {eps}"
        )))
    }
}

/// Iteration budget for fractional k-medians: N is a multiple of 1/k and
/// the solver runs exactly `total = N·k` iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KMediansRounds {
    pub total: u64,
    pub k: u64,
}

impl KMediansRounds {
    /// N as a real number.
    pub fn n(&self) -> f64 {
        self.total as f64 / self.k as f64
    }
}

/// Smallest N ≥ ln(n/ε)/χ(−ε) with N·k integral.
pub fn required_iterations_kmedians(n: usize, eps: f64, k: u64) -> Result<KMediansRounds> {
    check_open_unit("eps", eps)?;
    if n == 0 || k == 0 {
        return Err(Error::InvalidParameter(
            "customer count and k must be positive".into(),
        ));
    }
    let bound = (n as f64 / eps).ln() / chi(-eps)?;
    let mut total = (bound * k as f64).ceil().max(1.0) as u64;
    // guard against ceil landing one short through rounding
    while (total as f64) / (k as f64) < bound {
        total += 1;
    }
    Ok(KMediansRounds { total, k })
}

/// Iteration target for fractional facility location: (1−ε)N is the
/// integer coverage every customer must reach.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlRounds {
    /// (1−ε)N
    pub target: u64,
    pub eps: f64,
}

impl FlRounds {
    pub fn n(&self) -> f64 {
        self.target as f64 / (1.0 - self.eps)
    }
}

/// Smallest N > 0 with N ≥ ln(n)/χ(−ε) and (1−ε)N integral.
pub fn required_iterations_fl(n: usize, eps: f64) -> Result<FlRounds> {
    check_open_unit("eps", eps)?;
    if n == 0 {
        return Err(Error::InvalidParameter("customer count must be positive".into()));
    }
    let bound = (n as f64).ln() / chi(-eps)?;
    let mut target = (bound * (1.0 - eps)).ceil().max(1.0) as u64;
    while (target as f64) / (1.0 - eps) < bound {
        target += 1;
    }
    Ok(FlRounds { target, eps })
}

/// Smallest ε ≥ 0 (to within 1e-6) with exp(−χ(ε)·bound) ≤ 1/m.
///
/// `bound` stands in for max{μE[T], E[M]/(1+ε)}. The search runs on
/// [0, 64]; if even ε = 64 is not enough the upper end is returned.
pub fn solve_chernoff_wald_epsilon(m: u64, bound: f64) -> Result<f64> {
    if m == 0 || !(bound > 0.0) {
        return Err(Error::InvalidParameter(
            "m must be >= 1 and bound > 0".into(),
        ));
    }
    let need = (m as f64).ln();
    let ok = |eps: f64| chi(eps).map(|c| c * bound >= need);
    if ok(0.0)? {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 64.0_f64);
    if !ok(hi)? {
        return Ok(hi);
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Dice total after which the dice-and-coins experiment stops.
pub const DICE_STOP_TOTAL: u64 = 3494;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct ExperimentStats {
    pub trials: u64,
    pub people: u32,
    pub mean_T: f64,
    pub mean_D: f64,
    /// Heads of person 1.
    pub mean_H: f64,
    /// Maximum heads over all people.
    pub mean_M: f64,
    pub stderr_T: f64,
    pub stderr_D: f64,
    pub stderr_H: f64,
    pub stderr_M: f64,
}

/// Integer sums over a block of trials; exact, so merge order is irrelevant.
#[derive(Default, Clone, Copy)]
struct Sums {
    t: u64,
    d: u64,
    h: u64,
    m: u64,
    t2: u64,
    d2: u64,
    h2: u64,
    m2: u64,
}

impl Sums {
    fn add_trial(&mut self, t: u64, d: u64, h: u64, m: u64) {
        self.t += t;
        self.d += d;
        self.h += h;
        self.m += m;
        self.t2 += t * t;
        self.d2 += d * d;
        self.h2 += h * h;
        self.m2 += m * m;
    }

    fn merge(mut self, o: Sums) -> Sums {
        self.t += o.t;
        self.d += o.d;
        self.h += o.h;
        self.m += o.m;
        self.t2 += o.t2;
        self.d2 += o.d2;
        self.h2 += o.h2;
        self.m2 += o.m2;
        self
    }
}

fn mean_and_stderr(sum: u64, sum_sq: u64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum as f64 / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    // exact integer numerator: n·Σx² − (Σx)²
    let num = (n as u128) * (sum_sq as u128) - (sum as u128) * (sum as u128);
    let var = num as f64 / (nf * (nf - 1.0));
    (mean, (var / nf).sqrt())
}

/// Per-person head counters stored as bit planes: bit `p` of plane `b` is
/// bit `b` of person `p`'s count within one 64-person block.
struct SlicedCounters {
    planes: Vec<[u64; 13]>,
}

impl SlicedCounters {
    fn new(blocks: usize) -> Self {
        Self {
            planes: vec![[0; 13]; blocks],
        }
    }

    #[inline]
    fn add(&mut self, block: usize, mut carry: u64) {
        for plane in self.planes[block].iter_mut() {
            if carry == 0 {
                return;
            }
            let next = *plane & carry;
            *plane ^= carry;
            carry = next;
        }
        debug_assert_eq!(carry, 0, "head counter overflow");
    }

    fn count(&self, person: usize) -> u64 {
        let (block, bit) = (person / 64, person % 64);
        self.planes[block]
            .iter()
            .enumerate()
            .map(|(b, plane)| ((plane >> bit) & 1) << b)
            .sum()
    }
}

fn wald_trial(seed_value: u64, trial: u64, people: usize) -> (u64, u64, u64, u64) {
    let mut rng = seed::stream(seed_value, trial);
    let blocks = people.div_ceil(64);
    let last_mask = match people % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    };
    let mut heads = SlicedCounters::new(blocks);
    let (mut rounds, mut dice) = (0u64, 0u64);
    while dice <= DICE_STOP_TOTAL {
        dice += rng.gen_range(1..=6u64);
        for b in 0..blocks {
            let mut word = rng.next_u64();
            if b + 1 == blocks {
                word &= last_mask;
            }
            heads.add(b, word);
        }
        rounds += 1;
    }
    let first = heads.count(0);
    let max = (0..people).map(|p| heads.count(p)).max().unwrap_or(0);
    (rounds, dice, first, max)
}

/// Dice-and-coins stopping-time experiment.
///
/// Each outer trial repeats rounds of one fair d6 roll plus one fair coin
/// flip per person, stopping after the round in which the dice total first
/// exceeds 3494. T is the number of rounds, D the dice total, H person 1's
/// heads and M the maximum heads over all people. Trial `i` draws from
/// stream `i` of `seed`, so results do not depend on the thread count.
pub fn run_wald_experiment(trials: u64, people: u32, seed_value: u64) -> Result<ExperimentStats> {
    if trials == 0 || people == 0 {
        return Err(Error::InvalidParameter(
            "trials and people must be positive".into(),
        ));
    }
    const BLOCK: u64 = 1024;
    let blocks = trials.div_ceil(BLOCK);
    let partial = parallel::map_indexed(blocks as usize, |b| {
        let start = b as u64 * BLOCK;
        let end = (start + BLOCK).min(trials);
        let mut s = Sums::default();
        for trial in start..end {
            let (t, d, h, m) = wald_trial(seed_value, trial, people as usize);
            s.add_trial(t, d, h, m);
        }
        s
    });
    let s = partial.into_iter().fold(Sums::default(), Sums::merge);
    let (mean_t, se_t) = mean_and_stderr(s.t, s.t2, trials);
    let (mean_d, se_d) = mean_and_stderr(s.d, s.d2, trials);
    let (mean_h, se_h) = mean_and_stderr(s.h, s.h2, trials);
    let (mean_m, se_m) = mean_and_stderr(s.m, s.m2, trials);
    Ok(ExperimentStats {
        trials,
        people,
        mean_T: mean_t,
        mean_D: mean_d,
        mean_H: mean_h,
        mean_M: mean_m,
        stderr_T: se_t,
        stderr_D: se_d,
        stderr_H: se_h,
        stderr_M: se_m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub probability: f64,
    pub stderr: f64,
    pub hits: u64,
    pub trials: u64,
}

/// Empirical Pr[Σ of k Bernoulli(p) ≥ k·p·(1+ε)].
pub fn estimate_chernoff_tail(
    k: u64,
    p: f64,
    eps: f64,
    trials: u64,
    seed_value: u64,
) -> Result<TailEstimate> {
    if k == 0 || !(p > 0.0 && p <= 1.0) || trials == 0 || !(eps >= 0.0) {
        return Err(Error::InvalidParameter(
            "need k >= 1, p in (0, 1], eps >= 0, trials >= 1".into(),
        ));
    }
    let threshold = k as f64 * p * (1.0 + eps);
    // Pr[u64 < cutoff] = p up to 2^-64; the float→int cast saturates at p = 1
    let always = p >= 1.0;
    let cutoff = (p * 18_446_744_073_709_551_616.0) as u64;
    const BLOCK: u64 = 1024;
    let blocks = trials.div_ceil(BLOCK);
    let hits: u64 = parallel::map_indexed(blocks as usize, |b| {
        let start = b as u64 * BLOCK;
        let end = (start + BLOCK).min(trials);
        (start..end)
            .filter(|&trial| {
                let mut rng = seed::stream(seed_value, trial);
                let successes = (0..k)
                    .filter(|_| {
                        let u = rng.next_u64();
                        always || u < cutoff
                    })
                    .count();
                successes as f64 >= threshold
            })
            .count() as u64
    })
    .into_iter()
    .sum();
    let prob = hits as f64 / trials as f64;
    Ok(TailEstimate {
        probability: prob,
        stderr: (prob * (1.0 - prob) / trials as f64).sqrt(),
        hits,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn harmonic_values() {
        assert_eq!(harmonic(0), 0.0);
        assert_eq!(harmonic(1), 1.0);
        assert_relative_eq!(harmonic(3), 1.0 + 0.5 + 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn harmonic_minus_log_stays_in_band() {
        let mut prev = 0.0;
        for n in 1..5000 {
            let h = harmonic(n);
            assert!(h > prev);
            let gap = h - (n as f64).ln();
            assert!(gap > 0.5 && gap <= 1.0, "n={n} gap={gap}");
            prev = h;
        }
    }

    #[test]
    fn chi_values() {
        assert_eq!(chi(0.0).unwrap(), 0.0);
        assert_relative_eq!(chi(1.0).unwrap(), 2.0 * 2f64.ln() - 1.0, epsilon = 1e-15);
        assert_relative_eq!(chi(1.0).unwrap(), 0.386294, epsilon = 1e-6);
        assert_relative_eq!(chi(-0.5).unwrap(), 0.5 * 0.5f64.ln() + 0.5, epsilon = 1e-15);
        assert_relative_eq!(chi(-0.5).unwrap(), 0.153426, epsilon = 1e-6);
        assert!(chi(-1.0).is_err());
        assert!(chi(-2.0).is_err());
    }

    #[test]
    fn kmedians_iteration_examples() {
        let r = required_iterations_kmedians(4, 0.5, 2).unwrap();
        assert_eq!(r, KMediansRounds { total: 28, k: 2 });
        assert_eq!(r.n(), 14.0);
        let r = required_iterations_kmedians(1, 0.5, 1).unwrap();
        assert_eq!(r.total, 5);
    }

    #[test]
    fn fl_iteration_examples() {
        let r = required_iterations_fl(4, 0.5).unwrap();
        assert_eq!(r.target, 5);
        assert_eq!(r.n(), 10.0);
        let r = required_iterations_fl(1, 0.5).unwrap();
        assert_eq!(r.target, 1);
        assert_eq!(r.n(), 2.0);
        assert!(required_iterations_fl(4, 1.0).is_err());
        assert!(required_iterations_fl(4, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn kmedians_rounds_postcondition(n in 1usize..10_000, eps in 0.01f64..0.99, k in 1u64..50) {
            let r = required_iterations_kmedians(n, eps, k).unwrap();
            let bound = (n as f64 / eps).ln() / chi(-eps).unwrap();
            prop_assert!(r.n() >= bound);
            // smallest: one fewer iteration would fall below the bound
            prop_assert!(r.total == 1 || ((r.total - 1) as f64 / k as f64) < bound);
        }

        #[test]
        fn fl_rounds_postcondition(n in 1usize..10_000, eps in 0.01f64..0.99) {
            let r = required_iterations_fl(n, eps).unwrap();
            let bound = (n as f64).ln() / chi(-eps).unwrap();
            prop_assert!(r.n() >= bound);
            prop_assert!(r.target == 1 || ((r.target - 1) as f64 / (1.0 - eps)) < bound);
        }
    }

    #[test]
    fn chernoff_wald_epsilon() {
        assert_eq!(solve_chernoff_wald_epsilon(1, 500.0).unwrap(), 0.0);
        let eps = solve_chernoff_wald_epsilon(50, 500.0).unwrap();
        assert!((eps - 0.128).abs() < 1e-3, "{eps}");
        assert!(chi(eps).unwrap() * 500.0 >= 50f64.ln());
        assert!(chi(eps - 2e-6).unwrap() * 500.0 < 50f64.ln());
    }

    #[test]
    fn wald_experiment_is_reproducible() {
        let a = run_wald_experiment(200, 5, 11).unwrap();
        let b = run_wald_experiment(200, 5, 11).unwrap();
        assert_eq!(a, b);
        let c = parallel::with_threads(0, || run_wald_experiment(200, 5, 11).unwrap());
        assert_eq!(a, c);
        assert!(a.mean_D > DICE_STOP_TOTAL as f64);
        assert!(a.mean_M >= a.mean_H);
    }

    #[test]
    fn sliced_counters_count() {
        let mut c = SlicedCounters::new(1);
        for i in 0..1500u64 {
            c.add(0, if i % 3 == 0 { 0b101 } else { 0b001 });
        }
        assert_eq!(c.count(0), 1500);
        assert_eq!(c.count(1), 0);
        assert_eq!(c.count(2), 500);
    }

    #[test]
    fn tail_degenerate_cases() {
        let r = estimate_chernoff_tail(1, 1.0, 0.5, 1000, 3).unwrap();
        assert_eq!(r.probability, 0.0);
        let r = estimate_chernoff_tail(1, 1.0, 0.0, 1000, 3).unwrap();
        assert_eq!(r.probability, 1.0);
    }
}
