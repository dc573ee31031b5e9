//! Rounding of divisible market equilibria to integral ones with bounded
//! budget (or earning) deviations.
//!
//! The spending graph links agents to the items they hold. Cycles are
//! cancelled without changing any agent's spending, each tree of the remaining
//! forest is rooted at an agent, and shared items are handed down the trees.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{FractionalAllocation, Instance, IntegralAllocation, Kind};
use crate::market::{
    check_chores_equilibrium, check_goods_equilibrium, ChoresEquilibrium, EquilibriumCheck, GoodsEquilibrium,
    HOLD_TOL,
};

/// Absolute tolerance on the contract inequalities, relative to the largest price.
pub const CONTRACT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundingOutcome {
    pub allocation: IntegralAllocation,
    /// Budgets (goods) or earnings (chores) before rounding.
    pub original: Vec<f64>,
    /// Spending (goods) or earning (chores) of each agent after rounding.
    pub adjusted: Vec<f64>,
    /// Item certifying an agent's deviation from its original budget or earning.
    pub witness: Vec<Option<usize>>,
}

impl RoundingOutcome {
    pub fn max_deviation(&self) -> f64 {
        self.original
            .iter()
            .zip(&self.adjusted)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Result of checking the rounding contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractCheck {
    pub holds: bool,
    pub conservation_residual: f64,
    pub max_deviation: f64,
    pub max_price: f64,
    pub equilibrium: EquilibriumCheck,
    pub violation: Option<String>,
}

/// Rounds a goods equilibrium.
pub fn round_goods(inst: &Instance, eq: &GoodsEquilibrium) -> Result<RoundingOutcome> {
    if inst.kind() != Kind::Goods {
        return Err(Error::Precondition("goods rounding needs a goods instance".into()));
    }
    let check = check_goods_equilibrium(inst, eq)?;
    if !check.holds {
        return Err(Error::Precondition(format!("input is not a goods equilibrium: {:?}", check.witness)));
    }
    let x = &eq.allocation;
    let zero_owner = |j: usize| {
        // Largest holder, preferring agents that value the item.
        (0..inst.n())
            .max_by(|&a, &b| {
                let ka = (inst.value(a, j) > 0.0, x.get(a, j));
                let kb = (inst.value(b, j) > 0.0, x.get(b, j));
                ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(b.cmp(&a))
            })
            .expect("at least one agent")
    };
    Ok(round_core(x, &eq.prices, &eq.budgets, zero_owner))
}

/// Rounds a chores equilibrium computed for exponent `p >= 1`.
pub fn round_chores(inst: &Instance, eq: &ChoresEquilibrium, p: f64) -> Result<RoundingOutcome> {
    if inst.kind() != Kind::Chores {
        return Err(Error::Precondition("chores rounding needs a chores instance".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::Param(format!("chores rounding needs p >= 1, got {p}")));
    }
    let check = check_chores_equilibrium(inst, eq)?;
    if !check.holds {
        return Err(Error::Precondition(format!("input is not a chores equilibrium: {:?}", check.witness)));
    }
    let x = &eq.allocation;
    let zero_owner = |j: usize| {
        // A zero-cost agent, preferring the largest holder.
        (0..inst.n())
            .max_by(|&a, &b| {
                let ka = (inst.value(a, j) == 0.0, x.get(a, j));
                let kb = (inst.value(b, j) == 0.0, x.get(b, j));
                ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(b.cmp(&a))
            })
            .expect("at least one agent")
    };
    Ok(round_core(x, &eq.rewards, &eq.earnings, zero_owner))
}

fn round_core(
    x: &FractionalAllocation,
    prices: &[f64],
    targets: &[f64],
    zero_owner: impl Fn(usize) -> usize,
) -> RoundingOutcome {
    let (n, m) = (x.rows().len(), prices.len());
    let mut owner = vec![usize::MAX; m];
    if x.is_integral(HOLD_TOL) {
        for j in 0..m {
            owner[j] = (0..n).find(|&i| x.get(i, j) > 0.5).expect("columns sum to one");
        }
        let witness = vec![None; n];
        return RoundingOutcome {
            allocation: IntegralAllocation::new(n, owner).expect("valid owners"),
            original: targets.to_vec(),
            adjusted: targets.to_vec(),
            witness,
        };
    }

    // Spending on edges of positively priced items.
    let mut s = vec![0.0; n * m];
    for j in 0..m {
        if prices[j] > 0.0 {
            for i in 0..n {
                if x.get(i, j) > HOLD_TOL {
                    s[i * m + j] = x.get(i, j) * prices[j];
                }
            }
        } else {
            owner[j] = zero_owner(j);
        }
    }
    cancel_cycles(&mut s, n, m);

    let held = |i: usize, j: usize, s: &[f64]| s[i * m + j] > 0.0;
    let degree: Vec<usize> = (0..m).map(|j| (0..n).filter(|&i| held(i, j, &s)).count()).collect();
    let mut adjusted = vec![0.0; n];
    let mut witness = vec![None; n];
    let mut visited = vec![false; n];
    let mut item_done = vec![false; m];
    for j in 0..m {
        if degree[j] == 1 {
            let i = (0..n).find(|&i| held(i, j, &s)).expect("degree one");
            owner[j] = i;
            adjusted[i] += prices[j];
            item_done[j] = true;
        }
    }

    for root in 0..n {
        if visited[root] {
            continue;
        }
        // (agent, parent item, whether the parent item was handed to it)
        let mut queue = VecDeque::from([(root, None::<usize>, false)]);
        visited[root] = true;
        while let Some((i, parent, given)) = queue.pop_front() {
            if given {
                let j = parent.expect("given implies a parent");
                adjusted[i] += prices[j];
                witness[i] = Some(j);
            }
            let mut children: Vec<usize> = (0..m)
                .filter(|&j| !item_done[j] && Some(j) != parent && held(i, j, &s))
                .collect();
            children.sort_by(|&a, &b| s[i * m + b].total_cmp(&s[i * m + a]).then(a.cmp(&b)));
            for j in children {
                item_done[j] = true;
                let kids: Vec<usize> = (0..n).filter(|&k| k != i && held(k, j, &s)).collect();
                let recipient = if adjusted[i] < targets[i] - CONTRACT_TOL * prices[j] {
                    owner[j] = i;
                    adjusted[i] += prices[j];
                    witness[i] = Some(j);
                    None
                } else {
                    let k = *kids
                        .iter()
                        .max_by(|&&a, &&b| s[a * m + j].total_cmp(&s[b * m + j]).then(b.cmp(&a)))
                        .expect("shared item has another holder");
                    owner[j] = k;
                    Some(k)
                };
                for k in kids {
                    visited[k] = true;
                    queue.push_back((k, Some(j), recipient == Some(k)));
                }
            }
            // An agent left below its target points at the item it shared with its parent.
            if !given && adjusted[i] < targets[i] {
                if let Some(j) = parent {
                    witness[i] = Some(j);
                }
            }
        }
    }
    for (i, t) in targets.iter().enumerate() {
        if adjusted[i] == *t {
            witness[i] = None;
        }
    }
    RoundingOutcome {
        allocation: IntegralAllocation::new(n, owner).expect("every item is assigned"),
        original: targets.to_vec(),
        adjusted,
        witness,
    }
}

/// Removes cycles from the support of `s` by moving spending around each cycle.
fn cancel_cycles(s: &mut [f64], n: usize, m: usize) {
    while let Some(cycle) = find_cycle(s, n, m) {
        // cycle alternates agent-item edges; even positions lose, odd positions gain.
        let eps = cycle.iter().step_by(2).map(|&e| s[e]).fold(f64::INFINITY, f64::min);
        let mut zeroed = false;
        for (k, &e) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                if !zeroed && s[e] == eps {
                    s[e] = 0.0;
                    zeroed = true;
                } else {
                    s[e] = (s[e] - eps).max(0.0);
                }
            } else {
                s[e] += eps;
            }
        }
        for v in s.iter_mut() {
            if *v <= 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Edge indices `i * m + j` of a cycle in the bipartite support, in traversal order.
fn find_cycle(s: &[f64], n: usize, m: usize) -> Option<Vec<usize>> {
    // Nodes: agents 0..n, items n..n+m.
    let node_count = n + m;
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; node_count];
    let mut seen = vec![false; node_count];
    let neighbours = |v: usize| -> Vec<(usize, usize)> {
        if v < n {
            (0..m).filter(|&j| s[v * m + j] > 0.0).map(|j| (n + j, v * m + j)).collect()
        } else {
            let j = v - n;
            (0..n).filter(|&i| s[i * m + j] > 0.0).map(|i| (i, i * m + j)).collect()
        }
    };
    for start in 0..node_count {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for (w, e) in neighbours(v) {
                if parent[v].is_some_and(|(_, pe)| pe == e) {
                    continue;
                }
                if seen[w] {
                    return Some(close_cycle(&parent, v, w, e));
                }
                seen[w] = true;
                parent[w] = Some((v, e));
                stack.push(w);
            }
        }
    }
    None
}

fn close_cycle(parent: &[Option<(usize, usize)>], v: usize, w: usize, e: usize) -> Vec<usize> {
    let path_to_root = |mut u: usize| {
        let mut nodes = vec![u];
        let mut edges = Vec::new();
        while let Some((p, pe)) = parent[u] {
            edges.push(pe);
            nodes.push(p);
            u = p;
        }
        (nodes, edges)
    };
    let (nv, ev) = path_to_root(v);
    let (nw, ew) = path_to_root(w);
    let lca = *nv.iter().find(|a| nw.contains(a)).expect("same tree");
    let iv = nv.iter().position(|&a| a == lca).expect("lca on path");
    let iw = nw.iter().position(|&a| a == lca).expect("lca on path");
    // v -> lca, then lca -> w, then w -> v.
    let mut cycle: Vec<usize> = ev[..iv].to_vec();
    cycle.extend(ew[..iw].iter().rev());
    cycle.push(e);
    cycle
}

/// Checks the rounding contract for goods: spending conservation, deviations
/// bounded by the largest price, witness items for each deviation, and that
/// the rounded allocation with adjusted budgets is an equilibrium.
pub fn verify_goods_rounding(inst: &Instance, eq: &GoodsEquilibrium, out: &RoundingOutcome) -> Result<ContractCheck> {
    let rounded = GoodsEquilibrium {
        allocation: out.allocation.to_fractional(),
        prices: eq.prices.clone(),
        budgets: out.adjusted.clone(),
    };
    let equilibrium = check_goods_equilibrium(inst, &rounded)?;
    let mbb = |i: usize, j: usize| crate::market::mbb_set(inst, &eq.prices, i).contains(j);
    Ok(verify(&eq.prices, out, equilibrium, mbb))
}

/// Checks the rounding contract for chores, mirroring [`verify_goods_rounding`].
pub fn verify_chores_rounding(inst: &Instance, eq: &ChoresEquilibrium, out: &RoundingOutcome) -> Result<ContractCheck> {
    let rounded = ChoresEquilibrium {
        allocation: out.allocation.to_fractional(),
        rewards: eq.rewards.clone(),
        earnings: out.adjusted.clone(),
    };
    let equilibrium = check_chores_equilibrium(inst, &rounded)?;
    let mrc = |i: usize, j: usize| crate::market::mrc_set(inst, &eq.rewards, i).contains(j);
    Ok(verify(&eq.rewards, out, equilibrium, mrc))
}

fn verify(
    prices: &[f64],
    out: &RoundingOutcome,
    equilibrium: EquilibriumCheck,
    best: impl Fn(usize, usize) -> bool,
) -> ContractCheck {
    let max_price = prices.iter().cloned().fold(0.0, f64::max);
    let tol = CONTRACT_TOL * max_price.max(1.0);
    let total_orig: f64 = out.original.iter().sum();
    let total_adj: f64 = out.adjusted.iter().sum();
    let conservation_residual = (total_orig - total_adj).abs();
    let max_deviation = out.max_deviation();
    let mut violation = None;
    let mut note = |msg: String| {
        if violation.is_none() {
            violation = Some(msg);
        }
    };
    if conservation_residual > tol.max(1e-7 * total_orig.abs()) {
        note(format!("total changed by {conservation_residual}"));
    }
    if max_deviation > max_price + tol {
        note(format!("deviation {max_deviation} exceeds the largest price {max_price}"));
    }
    for (i, (&b, &b2)) in out.original.iter().zip(&out.adjusted).enumerate() {
        if (b - b2).abs() <= tol {
            continue;
        }
        let Some(j) = out.witness[i] else {
            note(format!("agent {i} deviates without a witness"));
            continue;
        };
        if b2 < b {
            if !best(i, j) || b2 + prices[j] < b - tol {
                note(format!("agent {i}: below target and item {j} does not cover the gap"));
            }
        } else if out.allocation.owner(j) != i || b2 - prices[j] > b + tol {
            note(format!("agent {i}: above target and item {j} does not explain the excess"));
        }
    }
    if !equilibrium.holds {
        note(format!("rounded allocation is not an equilibrium: {:?}", equilibrium.witness));
    }
    ContractCheck {
        holds: violation.is_none(),
        conservation_residual,
        max_deviation,
        max_price,
        equilibrium,
        violation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integral_input_unchanged() {
        let inst = Instance::new(Kind::Goods, vec![vec![0.6, 0.4], vec![0.4, 0.6]]).unwrap();
        let eq = GoodsEquilibrium {
            allocation: FractionalAllocation::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            prices: vec![1.0, 1.0],
            budgets: vec![1.0, 1.0],
        };
        let out = round_goods(&inst, &eq).unwrap();
        assert_eq!(out.allocation.owners(), &[0, 1]);
        assert_eq!(out.adjusted, eq.budgets);
    }

    #[test]
    fn one_shared_good() {
        // Agent 0 likes only good 0; agent 1 likes both equally.
        let inst = Instance::new(Kind::Goods, vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let eq = GoodsEquilibrium {
            allocation: FractionalAllocation::new(vec![vec![0.5, 0.0], vec![0.5, 1.0]]).unwrap(),
            prices: vec![2.0, 2.0],
            budgets: vec![1.0, 3.0],
        };
        assert!(check_goods_equilibrium(&inst, &eq).unwrap().holds);
        let out = round_goods(&inst, &eq).unwrap();
        let check = verify_goods_rounding(&inst, &eq, &out).unwrap();
        assert!(check.holds, "{check:?}");
        let loser = if out.allocation.owner(0) == 0 { 1 } else { 0 };
        assert_eq!(out.witness[loser], Some(0));
    }

    #[test]
    fn cycles_are_cancelled() {
        let mut s = vec![0.1, 0.4, 0.3, 0.2];
        cancel_cycles(&mut s, 2, 2);
        assert_eq!(s.iter().filter(|v| **v > 0.0).count(), 3);
        assert!((s[0] + s[1] - 0.5).abs() < 1e-15);
        assert!((s[2] + s[3] - 0.5).abs() < 1e-15);
        assert!((s[0] + s[2] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_equilibrium() {
        let inst = Instance::new(Kind::Goods, vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let eq = GoodsEquilibrium {
            allocation: FractionalAllocation::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            prices: vec![1.0, 1.0],
            budgets: vec![1.0, 1.0],
        };
        assert!(matches!(round_goods(&inst, &eq), Err(Error::Precondition(_))));
    }
}
