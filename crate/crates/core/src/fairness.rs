//! Fairness and efficiency audits with machine-checkable witnesses.
//!
//! Comparisons use a tolerance of `1e-9` times the agent's row sum and treat
//! equality as satisfied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{assignment_count, for_each_assignment};
use crate::exec::{self, Execution};
use crate::instance::{FractionalAllocation, Instance, IntegralAllocation, Kind, Shares};
use crate::lp::{LinearProgram, Relation};

/// Relative tolerance for fairness comparisons.
pub const FAIR_TOL: f64 = 1e-9;
/// Largest LP slack still accepted as fractionally Pareto optimal.
pub const FPO_TOL: f64 = 1e-7;
/// Largest number of alternatives searched by the integral Pareto check.
pub const PO_LIMIT: u64 = 10_000_000;
const PO_STRICT: f64 = 1e-12;
const PO_WEAK: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Notion {
    #[serde(rename = "EF")]
    Ef,
    #[serde(rename = "EFk")]
    Efk,
    #[serde(rename = "PROP")]
    Prop,
    #[serde(rename = "PROPk")]
    Propk,
    #[serde(rename = "PO")]
    Po,
    #[serde(rename = "fPO")]
    Fpo,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// Evidence of a violated condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub agent: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub other: Option<usize>,
    pub items: Vec<usize>,
    /// Amount by which the condition is violated, in the agent's own units.
    pub slack: f64,
    /// A dominating allocation for the Pareto checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alternative: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub notion: Notion,
    pub params: Params,
    pub holds: bool,
    /// Smallest satisfaction margin over all checked constraints, divided by the
    /// agent's row sum. Negative when the condition fails.
    pub margin: f64,
    pub witness: Option<Witness>,
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta >= 1.0) {
        return Err(Error::Param(format!("beta must be a finite number >= 1, got {beta}")));
    }
    Ok(())
}

/// Tracks the worst constraint seen so far.
struct Worst {
    margin: f64,
    witness: Option<Witness>,
    holds: bool,
}

impl Worst {
    fn new() -> Self {
        Worst {
            margin: f64::INFINITY,
            witness: None,
            holds: true,
        }
    }

    /// `gap` is satisfied-minus-required in raw units; `scale` is the row sum.
    fn record(&mut self, gap: f64, scale: f64, make: impl FnOnce() -> Witness) {
        let normalized = gap / scale;
        let violated = gap < -FAIR_TOL * scale;
        if violated && (self.holds || normalized < self.margin) {
            let mut w = make();
            w.slack = -gap;
            self.witness = Some(w);
            self.holds = false;
        }
        self.margin = self.margin.min(normalized);
    }

    fn finish(self, notion: Notion, params: Params) -> FairnessReport {
        FairnessReport {
            notion,
            params,
            holds: self.holds,
            margin: if self.margin.is_finite() { self.margin } else { 0.0 },
            witness: self.witness,
        }
    }
}

fn support<A: Shares + ?Sized>(alloc: &A, k: usize) -> Vec<usize> {
    (0..alloc.n_items()).filter(|&j| alloc.share(k, j) > 0.0).collect()
}

/// `beta`-envy-freeness for fractional or integral allocations.
pub fn check_ef<A: Shares + ?Sized>(inst: &Instance, alloc: &A, beta: f64) -> Result<FairnessReport> {
    check_beta(beta)?;
    inst.check_allocation(alloc)?;
    let mut worst = Worst::new();
    for i in 0..inst.n() {
        let own = inst.bundle_value(alloc, i, i);
        let scale = inst.row_sum(i);
        for k in (0..inst.n()).filter(|&k| k != i) {
            let other = inst.bundle_value(alloc, i, k);
            let gap = match inst.kind() {
                Kind::Goods => own - other / beta,
                Kind::Chores => beta * other - own,
            };
            worst.record(gap, scale, || Witness {
                agent: i,
                other: Some(k),
                items: support(alloc, k),
                slack: 0.0,
                alternative: None,
            });
        }
    }
    Ok(worst.finish(Notion::Ef, Params { beta: Some(beta), k: None }))
}

/// Items of `bundle` with the `k` largest values for agent `i`.
fn top_k(inst: &Instance, i: usize, bundle: &[usize], k: usize) -> Vec<usize> {
    let mut items = bundle.to_vec();
    items.sort_by(|&a, &b| inst.value(i, b).total_cmp(&inst.value(i, a)).then(a.cmp(&b)));
    items.truncate(k);
    items
}

fn sum_over(inst: &Instance, i: usize, items: &[usize]) -> f64 {
    items.iter().map(|&j| inst.value(i, j)).sum()
}

/// `beta`-envy-freeness up to `k` items.
///
/// Goods: removing `k` items from the envied bundle. Chores: removing `k`
/// items from the envious agent's own bundle.
pub fn check_efk(inst: &Instance, alloc: &IntegralAllocation, beta: f64, k: usize) -> Result<FairnessReport> {
    check_beta(beta)?;
    check_k(k)?;
    inst.check_allocation(alloc)?;
    let bundles = alloc.bundles();
    let mut worst = Worst::new();
    for i in 0..inst.n() {
        let own = sum_over(inst, i, &bundles[i]);
        let scale = inst.row_sum(i);
        for o in (0..inst.n()).filter(|&o| o != i) {
            let other = sum_over(inst, i, &bundles[o]);
            let (gap, removed) = match inst.kind() {
                Kind::Goods => {
                    let s = top_k(inst, i, &bundles[o], k);
                    (own - (other - sum_over(inst, i, &s)) / beta, s)
                }
                Kind::Chores => {
                    let s = top_k(inst, i, &bundles[i], k);
                    (beta * other - (own - sum_over(inst, i, &s)), s)
                }
            };
            worst.record(gap, scale, || Witness {
                agent: i,
                other: Some(o),
                items: removed,
                slack: 0.0,
                alternative: None,
            });
        }
    }
    Ok(worst.finish(Notion::Efk, Params { beta: Some(beta), k: Some(k) }))
}

/// `beta`-proportionality.
pub fn check_prop<A: Shares + ?Sized>(inst: &Instance, alloc: &A, beta: f64) -> Result<FairnessReport> {
    check_beta(beta)?;
    inst.check_allocation(alloc)?;
    let mut worst = Worst::new();
    for i in 0..inst.n() {
        let own = inst.bundle_value(alloc, i, i);
        let share = inst.prop_share(i);
        let gap = match inst.kind() {
            Kind::Goods => own - share / beta,
            Kind::Chores => beta * share - own,
        };
        worst.record(gap, inst.row_sum(i), || Witness {
            agent: i,
            other: None,
            items: support(alloc, i),
            slack: 0.0,
            alternative: None,
        });
    }
    Ok(worst.finish(Notion::Prop, Params { beta: Some(beta), k: None }))
}

/// `beta`-proportionality up to `k` items.
///
/// Goods: adding `k` outside items. Chores: removing `k` own items.
pub fn check_propk(inst: &Instance, alloc: &IntegralAllocation, beta: f64, k: usize) -> Result<FairnessReport> {
    check_beta(beta)?;
    check_k(k)?;
    inst.check_allocation(alloc)?;
    let mut worst = Worst::new();
    for i in 0..inst.n() {
        let bundle = alloc.bundle(i);
        let own = sum_over(inst, i, &bundle);
        let share = inst.prop_share(i);
        let (gap, s) = match inst.kind() {
            Kind::Goods => {
                let outside: Vec<usize> = (0..inst.m()).filter(|&j| alloc.owner(j) != i).collect();
                let s = top_k(inst, i, &outside, k);
                (own + sum_over(inst, i, &s) - share / beta, s)
            }
            Kind::Chores => {
                let s = top_k(inst, i, &bundle, k);
                (beta * share - (own - sum_over(inst, i, &s)), s)
            }
        };
        worst.record(gap, inst.row_sum(i), || Witness {
            agent: i,
            other: None,
            items: s,
            slack: 0.0,
            alternative: None,
        });
    }
    Ok(worst.finish(Notion::Propk, Params { beta: Some(beta), k: Some(k) }))
}

/// Pareto optimality among integral allocations by exhaustive search.
pub fn check_po_integral(inst: &Instance, alloc: &IntegralAllocation) -> Result<FairnessReport> {
    check_po_integral_with(inst, alloc, Execution::default())
}

pub fn check_po_integral_with(inst: &Instance, alloc: &IntegralAllocation, exec: Execution) -> Result<FairnessReport> {
    inst.check_allocation(alloc)?;
    let (n, m) = (inst.n(), inst.m());
    let total = assignment_count(n, m).filter(|&t| t <= PO_LIMIT).ok_or_else(|| {
        Error::Scale(format!("{n}^{m} alternatives exceed the limit of {PO_LIMIT}"))
    })?;
    let norm = inst.normalize();
    let base = assignment_utilities(&norm, alloc.owners());
    let better = |u: &[f64]| -> Option<(usize, f64)> {
        let mut gain: Option<(usize, f64)> = None;
        for i in 0..n {
            let d = match inst.kind() {
                Kind::Goods => u[i] - base[i],
                Kind::Chores => base[i] - u[i],
            };
            if d < -PO_WEAK {
                return None;
            }
            if d > PO_STRICT && gain.is_none_or(|(_, g)| d > g) {
                gain = Some((i, d));
            }
        }
        gain
    };
    let found = exec::chunked(exec, total, 1 << 14, |range| {
        let mut hit = None;
        let mut u = vec![0.0; n];
        for_each_assignment(n, m, range, |_, owners| {
            if hit.is_some() {
                return;
            }
            fill_utilities(&norm, owners, &mut u);
            if let Some((i, d)) = better(&u) {
                hit = Some((owners.to_vec(), i, d));
            }
        });
        hit
    });
    let params = Params::default();
    match found.into_iter().flatten().next() {
        None => Ok(FairnessReport {
            notion: Notion::Po,
            params,
            holds: true,
            margin: 0.0,
            witness: None,
        }),
        Some((owners, i, d)) => {
            let alt = IntegralAllocation::new(n, owners)?;
            Ok(FairnessReport {
                notion: Notion::Po,
                params,
                holds: false,
                margin: -d,
                witness: Some(Witness {
                    agent: i,
                    other: None,
                    items: alt.bundle(i),
                    slack: d * inst.row_sum(i),
                    alternative: Some(alt.to_fractional().rows()),
                }),
            })
        }
    }
}

fn assignment_utilities(inst: &Instance, owners: &[usize]) -> Vec<f64> {
    let mut u = vec![0.0; inst.n()];
    fill_utilities(inst, owners, &mut u);
    u
}

#[inline]
fn fill_utilities(inst: &Instance, owners: &[usize], u: &mut [f64]) {
    u.iter_mut().for_each(|v| *v = 0.0);
    for (j, &o) in owners.iter().enumerate() {
        u[o] += inst.value(o, j);
    }
}

/// Fractional Pareto optimality via the LP `max sum s_i` over allocations that
/// improve every agent by `s_i >= 0`.
pub fn check_fpo<A: Shares + ?Sized>(inst: &Instance, alloc: &A) -> Result<FairnessReport> {
    inst.check_allocation(alloc)?;
    let (n, m) = (inst.n(), inst.m());
    let norm = inst.normalize();
    let own = norm.own_values(alloc);
    let y = |i: usize, j: usize| i * m + j;
    let s = |i: usize| n * m + i;
    let mut lp = LinearProgram::new(n * m + n);
    for i in 0..n {
        lp.set_objective(s(i), 1.0);
    }
    for j in 0..m {
        let col: Vec<(usize, f64)> = (0..n).map(|i| (y(i, j), 1.0)).collect();
        lp.add_constraint(&col, Relation::Eq, 1.0);
    }
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = (0..m).map(|j| (y(i, j), norm.value(i, j))).collect();
        let sign = match inst.kind() {
            Kind::Goods => -1.0,
            Kind::Chores => 1.0,
        };
        row.push((s(i), sign));
        lp.add_constraint(&row, Relation::Eq, own[i]);
    }
    let sol = lp.solve()?;
    let (agent, best) = (0..n)
        .map(|i| (i, sol.x[s(i)]))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("n >= 1");
    let holds = sol.objective <= FPO_TOL;
    let witness = (!holds).then(|| {
        let alt = FractionalAllocation::from_flat(n, m, sol.x[..n * m].to_vec());
        Witness {
            agent,
            other: None,
            items: Vec::new(),
            slack: best * inst.row_sum(agent),
            alternative: Some(alt.rows()),
        }
    });
    Ok(FairnessReport {
        notion: Notion::Fpo,
        params: Params::default(),
        holds,
        margin: -sol.objective,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goods(rows: Vec<Vec<f64>>) -> Instance {
        Instance::new(Kind::Goods, rows).unwrap()
    }

    #[test]
    fn identical_goods_split_evenly_is_ef() {
        let inst = goods(vec![vec![1.0; 4], vec![1.0; 4]]);
        let a = IntegralAllocation::new(2, vec![0, 0, 1, 1]).unwrap();
        assert!(check_ef(&inst, &a, 1.0).unwrap().holds);
        let b = IntegralAllocation::new(2, vec![0, 0, 0, 1]).unwrap();
        let r = check_ef(&inst, &b, 1.0).unwrap();
        assert!(!r.holds);
        let w = r.witness.unwrap();
        assert_eq!((w.agent, w.other), (1, Some(0)));
        assert!((w.slack - 2.0).abs() < 1e-12);
        assert!(!check_efk(&inst, &b, 1.0, 1).unwrap().holds);
        assert!(check_efk(&inst, &b, 1.0, 2).unwrap().holds);
    }

    #[test]
    fn prop_equality_holds() {
        let inst = goods(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let a = IntegralAllocation::new(2, vec![0, 1]).unwrap();
        let r = check_prop(&inst, &a, 1.0).unwrap();
        assert!(r.holds);
        assert!(r.margin.abs() < 1e-15);
    }

    #[test]
    fn chores_efk_removes_own_items() {
        let inst = Instance::new(Kind::Chores, vec![vec![1.0; 3], vec![1.0; 3]]).unwrap();
        let a = IntegralAllocation::new(2, vec![0, 0, 0]).unwrap();
        assert!(!check_efk(&inst, &a, 1.0, 1).unwrap().holds);
        assert!(!check_efk(&inst, &a, 1.0, 2).unwrap().holds);
        assert!(check_efk(&inst, &a, 1.0, 3).unwrap().holds);
        let b = IntegralAllocation::new(2, vec![0, 0, 1]).unwrap();
        assert!(check_efk(&inst, &b, 1.0, 1).unwrap().holds);
    }

    #[test]
    fn po_finds_swap() {
        let inst = goods(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let bad = IntegralAllocation::new(2, vec![1, 0]).unwrap();
        let r = check_po_integral(&inst, &bad).unwrap();
        assert!(!r.holds);
        assert!(r.witness.unwrap().alternative.is_some());
        let good = IntegralAllocation::new(2, vec![0, 1]).unwrap();
        assert!(check_po_integral(&inst, &good).unwrap().holds);
    }

    #[test]
    fn fpo_detects_improvement() {
        let inst = goods(vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        let bad = IntegralAllocation::new(2, vec![1, 0]).unwrap();
        assert!(!check_fpo(&inst, &bad).unwrap().holds);
        let good = IntegralAllocation::new(2, vec![0, 1]).unwrap();
        assert!(check_fpo(&inst, &good).unwrap().holds);
    }

    #[test]
    fn po_scale_error() {
        let inst = goods(vec![vec![1.0; 30], vec![1.0; 30]]);
        let a = IntegralAllocation::new(2, vec![0; 30]).unwrap();
        assert!(matches!(check_po_integral(&inst, &a), Err(Error::Scale(_))));
    }
}
