//! Problem and solution data model.
//!
//! An [`Instance`] is a bipartite graph between facilities and customers in
//! which every stored edge carries a finite, non-negative distance. Missing
//! edges mean the pair is infinitely far apart; lookups return `None` for
//! them rather than an IEEE infinity.
//!
//! Facilities and customers are kept sorted by id, so index order is the
//! lexicographic id order that every tie-break in the crate relies on.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for feasibility comparisons.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub id: String,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    facilities: Vec<Facility>,
    customers: Vec<String>,
    /// Per facility: `(customer, distance)` sorted by customer index.
    by_facility: Vec<Vec<(usize, f64)>>,
    /// Per customer: `(facility, distance)` sorted by facility index.
    by_customer: Vec<Vec<(usize, f64)>>,
    facility_index: HashMap<String, usize>,
    customer_index: HashMap<String, usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    facilities: Vec<Facility>,
    customers: Vec<String>,
    distances: Vec<(String, String, f64)>,
}

fn check_nonneg(what: impl FnOnce() -> String, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeValue {
            what: what(),
            value,
        })
    }
}

impl Instance {
    /// Builds and validates an instance. Declaration order does not matter.
    pub fn new(
        mut facilities: Vec<Facility>,
        mut customers: Vec<String>,
        distances: Vec<(String, String, f64)>,
    ) -> Result<Self> {
        facilities.sort_by(|a, b| a.id.cmp(&b.id));
        customers.sort();
        for w in facilities.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::DuplicateId {
                    kind: "facility",
                    id: w[0].id.clone(),
                });
            }
        }
        for w in customers.windows(2) {
            if w[0] == w[1] {
                return Err(Error::DuplicateId {
                    kind: "customer",
                    id: w[0].clone(),
                });
            }
        }
        for f in &facilities {
            check_nonneg(|| format!("cost of facility `{}`", f.id), f.cost)?;
        }

        let facility_index: HashMap<String, usize> = facilities
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.clone(), i))
            .collect();
        let customer_index: HashMap<String, usize> = customers
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();

        let mut by_facility = vec![Vec::new(); facilities.len()];
        let mut by_customer = vec![Vec::new(); customers.len()];
        let mut seen = BTreeSet::new();
        for (f, c, d) in distances {
            let fi = *facility_index.get(&f).ok_or_else(|| Error::UnknownId {
                kind: "facility",
                id: f.clone(),
            })?;
            let ci = *customer_index.get(&c).ok_or_else(|| Error::UnknownId {
                kind: "customer",
                id: c.clone(),
            })?;
            check_nonneg(|| format!("distance ({f}, {c})"), d)?;
            if !seen.insert((fi, ci)) {
                return Err(Error::DuplicateId {
                    kind: "distance pair",
                    id: format!("({f}, {c})"),
                });
            }
            by_facility[fi].push((ci, d));
            by_customer[ci].push((fi, d));
        }
        for list in by_facility.iter_mut().chain(by_customer.iter_mut()) {
            list.sort_by_key(|&(i, _)| i);
        }
        if let Some(ci) = by_customer.iter().position(|l| l.is_empty()) {
            return Err(Error::InfeasibleInstance(customers[ci].clone()));
        }

        Ok(Self {
            facilities,
            customers,
            by_facility,
            by_customer,
            facility_index,
            customer_index,
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_slice(bytes)?;
        Self::new(doc.facilities, doc.customers, doc.distances)
    }

    /// Canonical JSON: facilities, customers and distance triples sorted
    /// lexicographically, floats in shortest round-trip form.
    pub fn to_json(&self) -> String {
        let mut distances = Vec::with_capacity(self.size());
        for (fi, list) in self.by_facility.iter().enumerate() {
            for &(ci, d) in list {
                distances.push((
                    self.facilities[fi].id.clone(),
                    self.customers[ci].clone(),
                    d,
                ));
            }
        }
        let doc = InstanceDoc {
            facilities: self.facilities.clone(),
            customers: self.customers.clone(),
            distances,
        };
        serde_json::to_string(&doc).expect("instance serialization cannot fail")
    }

    pub fn facility_count(&self) -> usize {
        self.facilities.len()
    }

    pub fn customer_count(&self) -> usize {
        self.customers.len()
    }

    /// Number of finite `(facility, customer)` pairs.
    pub fn size(&self) -> usize {
        self.by_facility.iter().map(Vec::len).sum()
    }

    pub fn facilities(&self) -> &[Facility] {
        &self.facilities
    }

    pub fn customers(&self) -> &[String] {
        &self.customers
    }

    pub fn facility_id(&self, f: usize) -> &str {
        &self.facilities[f].id
    }

    pub fn customer_id(&self, c: usize) -> &str {
        &self.customers[c]
    }

    pub fn cost(&self, f: usize) -> f64 {
        self.facilities[f].cost
    }

    pub fn max_cost(&self) -> f64 {
        self.facilities.iter().map(|f| f.cost).fold(0.0, f64::max)
    }

    pub fn total_cost(&self) -> f64 {
        self.facilities.iter().map(|f| f.cost).sum()
    }

    pub fn is_unit_cost(&self) -> bool {
        self.facilities.iter().all(|f| f.cost == 1.0)
    }

    pub fn facility_index(&self, id: &str) -> Option<usize> {
        self.facility_index.get(id).copied()
    }

    pub fn customer_index(&self, id: &str) -> Option<usize> {
        self.customer_index.get(id).copied()
    }

    fn require_facility(&self, id: &str) -> Result<usize> {
        self.facility_index(id).ok_or_else(|| Error::UnknownId {
            kind: "facility",
            id: id.to_string(),
        })
    }

    fn require_customer(&self, id: &str) -> Result<usize> {
        self.customer_index(id).ok_or_else(|| Error::UnknownId {
            kind: "customer",
            id: id.to_string(),
        })
    }

    /// Distance between facility `f` and customer `c`; `None` means +∞.
    pub fn dist(&self, f: usize, c: usize) -> Option<f64> {
        let list = &self.by_facility[f];
        list.binary_search_by_key(&c, |&(ci, _)| ci)
            .ok()
            .map(|pos| list[pos].1)
    }

    /// Finite-distance customers of facility `f`, sorted by customer index.
    pub fn customers_of(&self, f: usize) -> &[(usize, f64)] {
        &self.by_facility[f]
    }

    /// Finite-distance facilities of customer `c`, sorted by facility index.
    pub fn facilities_of(&self, c: usize) -> &[(usize, f64)] {
        &self.by_customer[c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub facility_cost: f64,
    pub assignment_cost: f64,
    pub total: f64,
}

impl CostReport {
    pub fn new(facility_cost: f64, assignment_cost: f64) -> Self {
        Self {
            facility_cost,
            assignment_cost,
            total: facility_cost + assignment_cost,
        }
    }
}

/// A point of the facility-location LP with integrality dropped.
///
/// `open[f]` is x(f) and has no upper bound. `assign` holds the non-zero
/// x(f,c) keyed by `(facility, customer)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalSolution {
    pub open: Vec<f64>,
    pub assign: BTreeMap<(usize, usize), f64>,
    pub tolerance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FractionalDoc {
    open: BTreeMap<String, f64>,
    assign: Vec<(String, String, f64)>,
}

impl FractionalSolution {
    pub fn zeros(instance: &Instance) -> Self {
        Self {
            open: vec![0.0; instance.facility_count()],
            assign: BTreeMap::new(),
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// |x| = Σ_f x(f).
    pub fn size(&self) -> f64 {
        self.open.iter().sum()
    }

    pub fn get(&self, f: usize, c: usize) -> f64 {
        self.assign.get(&(f, c)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, f: usize, c: usize, value: f64) {
        if value == 0.0 {
            self.assign.remove(&(f, c));
        } else {
            self.assign.insert((f, c), value);
        }
    }

    /// Non-zero x(f,c) for a fixed facility, ascending by customer.
    pub fn assigned_to(&self, f: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.assign
            .range((f, 0)..(f + 1, 0))
            .map(|(&(_, c), &v)| (c, v))
    }

    /// Σ_f x(f,c) for every customer.
    pub fn coverage(&self, customers: usize) -> Vec<f64> {
        let mut cov = vec![0.0; customers];
        for (&(_, c), &v) in &self.assign {
            cov[c] += v;
        }
        cov
    }

    /// Δ_fx: number of customers with x(f,c) > 0.
    pub fn fractional_degree(&self, f: usize) -> usize {
        self.assigned_to(f).filter(|&(_, v)| v > 0.0).count()
    }

    /// Embeds an integral solution.
    pub fn from_integral(instance: &Instance, sol: &IntegralSolution) -> Self {
        let mut x = Self::zeros(instance);
        for &f in &sol.chosen {
            x.open[f] = 1.0;
        }
        for (c, &f) in sol.assignment.iter().enumerate() {
            x.set(f, c, 1.0);
        }
        x
    }

    pub fn from_json(instance: &Instance, bytes: &[u8]) -> Result<Self> {
        let doc: FractionalDoc = serde_json::from_slice(bytes)?;
        let mut x = Self::zeros(instance);
        for (id, v) in doc.open {
            let f = instance.require_facility(&id)?;
            check_nonneg(|| format!("x({id})"), v)?;
            x.open[f] = v;
        }
        for (fid, cid, v) in doc.assign {
            let f = instance.require_facility(&fid)?;
            let c = instance.require_customer(&cid)?;
            check_nonneg(|| format!("x({fid}, {cid})"), v)?;
            x.set(f, c, v);
        }
        Ok(x)
    }

    pub fn to_json_value(&self, instance: &Instance) -> serde_json::Value {
        let doc = FractionalDoc {
            open: self
                .open
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(f, &v)| (instance.facility_id(f).to_string(), v))
                .collect(),
            assign: self
                .assign
                .iter()
                .map(|(&(f, c), &v)| {
                    (
                        instance.facility_id(f).to_string(),
                        instance.customer_id(c).to_string(),
                        v,
                    )
                })
                .collect(),
        };
        serde_json::to_value(doc).expect("fractional solution serialization cannot fail")
    }
}

/// A chosen facility set with its nearest-facility assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegralSolution {
    pub chosen: BTreeSet<usize>,
    /// Customer index → facility index.
    pub assignment: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IntegralDoc {
    chosen: Vec<String>,
    assignment: BTreeMap<String, String>,
}

impl IntegralSolution {
    pub fn chosen_ids<'a>(&self, instance: &'a Instance) -> Vec<&'a str> {
        self.chosen.iter().map(|&f| instance.facility_id(f)).collect()
    }

    pub fn to_json_value(&self, instance: &Instance) -> serde_json::Value {
        let doc = IntegralDoc {
            chosen: self
                .chosen
                .iter()
                .map(|&f| instance.facility_id(f).to_string())
                .collect(),
            assignment: self
                .assignment
                .iter()
                .enumerate()
                .map(|(c, &f)| {
                    (
                        instance.customer_id(c).to_string(),
                        instance.facility_id(f).to_string(),
                    )
                })
                .collect(),
        };
        serde_json::to_value(doc).expect("integral solution serialization cannot fail")
    }
}

/// cost(x) = Σ x(f)cost(f) and dist(x) = Σ x(f,c)dist(f,c).
pub fn eval_fractional(instance: &Instance, x: &FractionalSolution) -> Result<CostReport> {
    if x.open.len() != instance.facility_count() {
        return Err(Error::InvalidParameter(
            "fractional solution does not match the instance".into(),
        ));
    }
    let facility_cost: f64 = x
        .open
        .iter()
        .zip(instance.facilities())
        .map(|(&v, f)| v * f.cost)
        .sum();
    let mut assignment_cost = 0.0;
    for (&(f, c), &v) in &x.assign {
        if v <= 0.0 {
            continue;
        }
        match instance.dist(f, c) {
            Some(d) => assignment_cost += v * d,
            None => {
                return Err(Error::InfiniteAssignment {
                    facility: instance.facility_id(f).to_string(),
                    customer: instance.customer_id(c).to_string(),
                    value: v,
                })
            }
        }
    }
    Ok(CostReport::new(facility_cost, assignment_cost))
}

/// Nearest-facility assignment for a chosen set. Ties go to the smallest
/// facility id.
pub fn eval_integral(
    instance: &Instance,
    chosen: &BTreeSet<usize>,
) -> Result<(IntegralSolution, CostReport)> {
    if chosen.is_empty() {
        return Err(Error::InvalidParameter("facility set is empty".into()));
    }
    if let Some(&f) = chosen.iter().find(|&&f| f >= instance.facility_count()) {
        return Err(Error::InvalidParameter(format!("facility index {f} out of range")));
    }
    let mut assignment = Vec::with_capacity(instance.customer_count());
    let mut assignment_cost = 0.0;
    for c in 0..instance.customer_count() {
        // facilities_of is sorted by index, so strict < keeps the smallest id.
        let mut best: Option<(usize, f64)> = None;
        for &(f, d) in instance.facilities_of(c) {
            if chosen.contains(&f) && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((f, d));
            }
        }
        let (f, d) =
            best.ok_or_else(|| Error::UncoveredCustomer(instance.customer_id(c).to_string()))?;
        assignment.push(f);
        assignment_cost += d;
    }
    let facility_cost = chosen.iter().map(|&f| instance.cost(f)).sum();
    Ok((
        IntegralSolution {
            chosen: chosen.clone(),
            assignment,
        },
        CostReport::new(facility_cost, assignment_cost),
    ))
}

/// Convenience wrapper taking facility ids.
pub fn eval_integral_ids(
    instance: &Instance,
    ids: &[&str],
) -> Result<(IntegralSolution, CostReport)> {
    let chosen = ids
        .iter()
        .map(|id| instance.require_facility(id))
        .collect::<Result<BTreeSet<_>>>()?;
    eval_integral(instance, &chosen)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// Σ_f x(f,c) = 1
    Coverage,
    /// x(f,c) ≤ x(f)
    CapacityLink,
    /// x(f,c) > 0 only on finite pairs
    InfinitePair,
    /// all variables non-negative
    Nonnegativity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub facility: Option<String>,
    pub customer: Option<String>,
    pub magnitude: f64,
}

pub fn validate_fractional(
    instance: &Instance,
    x: &FractionalSolution,
    tolerance: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (f, &v) in x.open.iter().enumerate() {
        if v < -tolerance {
            out.push(Violation {
                constraint: Constraint::Nonnegativity,
                facility: Some(instance.facility_id(f).to_string()),
                customer: None,
                magnitude: -v,
            });
        }
    }
    for (&(f, c), &v) in &x.assign {
        let fid = || Some(instance.facility_id(f).to_string());
        let cid = || Some(instance.customer_id(c).to_string());
        if v < -tolerance {
            out.push(Violation {
                constraint: Constraint::Nonnegativity,
                facility: fid(),
                customer: cid(),
                magnitude: -v,
            });
        }
        if v > 0.0 && instance.dist(f, c).is_none() {
            out.push(Violation {
                constraint: Constraint::InfinitePair,
                facility: fid(),
                customer: cid(),
                magnitude: v,
            });
        }
        let excess = v - x.open[f];
        if excess > tolerance {
            out.push(Violation {
                constraint: Constraint::CapacityLink,
                facility: fid(),
                customer: cid(),
                magnitude: excess,
            });
        }
    }
    for (c, cov) in x.coverage(instance.customer_count()).into_iter().enumerate() {
        let gap = (cov - 1.0).abs();
        if gap > tolerance {
            out.push(Violation {
                constraint: Constraint::Coverage,
                facility: None,
                customer: Some(instance.customer_id(c).to_string()),
                magnitude: gap,
            });
        }
    }
    out
}

/// Scales each over-covered customer's assignments down to coverage 1.
pub fn normalize_assignments(
    instance: &Instance,
    x: &FractionalSolution,
) -> Result<FractionalSolution> {
    let cov = x.coverage(instance.customer_count());
    if let Some((c, &v)) = cov
        .iter()
        .enumerate()
        .find(|(_, &v)| v < 1.0 - x.tolerance)
    {
        return Err(Error::Undercovered {
            customer: instance.customer_id(c).to_string(),
            coverage: v,
        });
    }
    let mut out = x.clone();
    for (&(_, c), v) in out.assign.iter_mut() {
        if cov[c] > 1.0 {
            *v /= cov[c];
        }
    }
    Ok(out)
}
