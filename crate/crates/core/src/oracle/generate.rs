use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Facility, Instance};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub facilities: usize,
    pub customers: usize,
    /// Probability that any given (facility, customer) pair is finite.
    pub density: f64,
    pub cost_range: (f64, f64),
    pub distance_range: (f64, f64),
    pub unit_costs: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            facilities: 6,
            customers: 10,
            density: 0.6,
            cost_range: (1.0, 10.0),
            distance_range: (1.0, 10.0),
            unit_costs: false,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi;
        if self.facilities == 0 || self.customers == 0 {
            return Err(Error::InvalidParameter("counts must be at least 1".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if !range_ok(self.cost_range) || !range_ok(self.distance_range) {
            return Err(Error::InvalidParameter(
                "ranges must be finite, non-negative and ordered".into(),
            ));
        }
        Ok(())
    }
}

fn padded(prefix: char, i: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len();
    format!("{prefix}{i:0width$}")
}

fn in_range(rng: &mut seed::StreamRng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * seed::unit(rng)
}

/// Reproducible random instance. Each customer gets one forced finite
/// pair, so the result always validates.
pub fn gen_instance(config: &GeneratorConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = seed::stream(config.seed, 0);
    let facilities: Vec<Facility> = (0..config.facilities)
        .map(|f| Facility {
            id: padded('f', f, config.facilities),
            cost: if config.unit_costs {
                1.0
            } else {
                in_range(&mut rng, config.cost_range)
            },
        })
        .collect();
    let customers: Vec<String> = (0..config.customers)
        .map(|c| padded('c', c, config.customers))
        .collect();
    let mut distances = Vec::new();
    for c in &customers {
        let forced = (seed::unit(&mut rng) * config.facilities as f64) as usize;
        for (f, fac) in facilities.iter().enumerate() {
            let keep = seed::unit(&mut rng) < config.density || f == forced.min(config.facilities - 1);
            if keep {
                let d = in_range(&mut rng, config.distance_range);
                distances.push((fac.id.clone(), c.clone(), d));
            }
        }
    }
    Instance::new(facilities, customers, distances)
}
