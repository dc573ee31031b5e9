//! Fisher market equilibria for goods and their duals for chores, with checkers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{FractionalAllocation, Instance};

/// Relative tolerance for bang-per-buck and reward-per-cost membership.
pub const RATIO_TOL: f64 = 1e-7;
/// Tolerance on column sums and on budget or earning residuals.
pub const MARKET_TOL: f64 = 1e-7;
/// Shares at or below this are treated as not held.
pub const HOLD_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodsEquilibrium {
    pub allocation: FractionalAllocation,
    pub prices: Vec<f64>,
    pub budgets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoresEquilibrium {
    pub allocation: FractionalAllocation,
    pub rewards: Vec<f64>,
    pub earnings: Vec<f64>,
}

/// Items attaining the best ratio for one agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSet {
    pub items: Vec<usize>,
    pub value: f64,
}

impl RatioSet {
    pub fn contains(&self, j: usize) -> bool {
        self.items.contains(&j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    MarketClears,
    BestRatio,
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketWitness {
    pub condition: Condition,
    pub agent: Option<usize>,
    pub item: Option<usize>,
}

/// Verdict of an equilibrium check with per-condition residuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumCheck {
    pub holds: bool,
    pub clearing_residual: f64,
    pub ratio_residual: f64,
    pub budget_residual: f64,
    pub witness: Option<MarketWitness>,
}

fn goods_ratio(v: f64, p: f64) -> f64 {
    if p > 0.0 {
        v / p
    } else if v > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn in_best(ratio: f64, best: f64) -> bool {
    if best.is_infinite() {
        ratio.is_infinite()
    } else {
        ratio >= best * (1.0 - RATIO_TOL)
    }
}

fn shortfall(ratio: f64, best: f64) -> f64 {
    if best.is_infinite() {
        if ratio.is_infinite() {
            0.0
        } else {
            1.0
        }
    } else if best > 0.0 {
        (1.0 - ratio / best).max(0.0)
    } else {
        0.0
    }
}

/// Maximum bang-per-buck items `argmax_j v_ij / p_j`.
///
/// A zero price with positive value gives an infinite ratio.
pub fn mbb_set(inst: &Instance, prices: &[f64], i: usize) -> RatioSet {
    let ratios: Vec<f64> = (0..inst.m()).map(|j| goods_ratio(inst.value(i, j), prices[j])).collect();
    let value = ratios.iter().cloned().fold(0.0, f64::max);
    let items = (0..inst.m())
        .filter(|&j| in_best(ratios[j], value) && (value > 0.0 || inst.value(i, j) == 0.0))
        .collect();
    RatioSet { items, value }
}

/// Maximum reward-per-cost items `argmax_j r_j / c_ij` over positive costs,
/// together with every zero-cost item.
pub fn mrc_set(inst: &Instance, rewards: &[f64], i: usize) -> RatioSet {
    let value = (0..inst.m())
        .filter(|&j| inst.value(i, j) > 0.0)
        .map(|j| rewards[j] / inst.value(i, j))
        .fold(0.0, f64::max);
    let items = (0..inst.m())
        .filter(|&j| {
            let c = inst.value(i, j);
            c == 0.0 || in_best(rewards[j] / c, value)
        })
        .collect();
    RatioSet { items, value }
}

fn check_dims(inst: &Instance, x: &FractionalAllocation, prices: &[f64], budgets: &[f64]) -> Result<()> {
    inst.check_allocation(x)?;
    if prices.len() != inst.m() || budgets.len() != inst.n() {
        return Err(Error::Dimension(format!(
            "expected {} prices and {} budgets, got {} and {}",
            inst.m(),
            inst.n(),
            prices.len(),
            budgets.len()
        )));
    }
    if let Some(v) = prices.iter().chain(budgets).find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain(format!("price or budget {v} is not finite and non-negative")));
    }
    Ok(())
}

struct Checker {
    check: EquilibriumCheck,
}

impl Checker {
    fn new() -> Self {
        Checker {
            check: EquilibriumCheck {
                holds: true,
                clearing_residual: 0.0,
                ratio_residual: 0.0,
                budget_residual: 0.0,
                witness: None,
            },
        }
    }

    fn fail(&mut self, condition: Condition, agent: Option<usize>, item: Option<usize>) {
        if self.check.holds {
            self.check.holds = false;
            self.check.witness = Some(MarketWitness { condition, agent, item });
        }
    }

    fn clearing(&mut self, x: &FractionalAllocation, prices: &[f64]) {
        for (j, &p) in prices.iter().enumerate() {
            let s = x.column_sum(j);
            let r = if p > 0.0 { (s - 1.0).abs() } else { (s - 1.0).max(0.0) };
            self.check.clearing_residual = self.check.clearing_residual.max(r);
            if r > MARKET_TOL {
                self.fail(Condition::MarketClears, None, Some(j));
            }
        }
    }

    fn budgets(&mut self, x: &FractionalAllocation, prices: &[f64], budgets: &[f64]) {
        for (i, &b) in budgets.iter().enumerate() {
            let spent: f64 = prices.iter().enumerate().map(|(j, p)| p * x.get(i, j)).sum();
            let r = (b - spent).abs() / b.max(1.0);
            self.check.budget_residual = self.check.budget_residual.max(r);
            if r > MARKET_TOL {
                self.fail(Condition::BudgetExhausted, Some(i), None);
            }
        }
    }
}

/// Checks market clearing, best bang-per-buck holdings and budget exhaustion.
pub fn check_goods_equilibrium(inst: &Instance, eq: &GoodsEquilibrium) -> Result<EquilibriumCheck> {
    let x = &eq.allocation;
    check_dims(inst, x, &eq.prices, &eq.budgets)?;
    let mut c = Checker::new();
    c.clearing(x, &eq.prices);
    for i in 0..inst.n() {
        let best = mbb_set(inst, &eq.prices, i).value;
        for j in 0..inst.m() {
            if x.get(i, j) <= HOLD_TOL || (eq.prices[j] == 0.0 && inst.value(i, j) == 0.0) {
                continue;
            }
            let r = shortfall(goods_ratio(inst.value(i, j), eq.prices[j]), best);
            c.check.ratio_residual = c.check.ratio_residual.max(r);
            if r > RATIO_TOL {
                c.fail(Condition::BestRatio, Some(i), Some(j));
            }
        }
    }
    c.budgets(x, &eq.prices, &eq.budgets);
    Ok(c.check)
}

/// Checks that every chore is assigned, holdings are best reward-per-cost and
/// earnings match.
pub fn check_chores_equilibrium(inst: &Instance, eq: &ChoresEquilibrium) -> Result<EquilibriumCheck> {
    let x = &eq.allocation;
    check_dims(inst, x, &eq.rewards, &eq.earnings)?;
    let mut c = Checker::new();
    c.clearing(x, &eq.rewards);
    for i in 0..inst.n() {
        let best = mrc_set(inst, &eq.rewards, i).value;
        for j in 0..inst.m() {
            let cost = inst.value(i, j);
            if x.get(i, j) <= HOLD_TOL || cost == 0.0 {
                continue;
            }
            let r = shortfall(eq.rewards[j] / cost, best);
            c.check.ratio_residual = c.check.ratio_residual.max(r);
            if r > RATIO_TOL {
                c.fail(Condition::BestRatio, Some(i), Some(j));
            }
        }
    }
    c.budgets(x, &eq.rewards, &eq.earnings);
    Ok(c.check)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Kind;

    fn sym() -> (Instance, GoodsEquilibrium) {
        let inst = Instance::new(Kind::Goods, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let eq = GoodsEquilibrium {
            allocation: FractionalAllocation::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            prices: vec![2.0, 2.0],
            budgets: vec![2.0, 2.0],
        };
        (inst, eq)
    }

    #[test]
    fn symmetric_passes() {
        let (inst, eq) = sym();
        assert!(check_goods_equilibrium(&inst, &eq).unwrap().holds);
    }

    #[test]
    fn perturbed_price_fails_mbb() {
        let (inst, mut eq) = sym();
        eq.prices[0] = 2.2;
        let c = check_goods_equilibrium(&inst, &eq).unwrap();
        assert!(!c.holds);
        let w = c.witness.unwrap();
        assert_eq!(w.condition, Condition::BestRatio);
        assert_eq!((w.agent, w.item), (Some(0), Some(0)));
    }

    #[test]
    fn ratio_sets() {
        let inst = Instance::new(Kind::Goods, vec![vec![0.8, 0.2]]).unwrap();
        let s = mbb_set(&inst, &[2.0, 2.0], 0);
        assert_eq!(s.items, vec![0]);
        assert!((s.value - 0.4).abs() < 1e-15);

        let inst = Instance::new(Kind::Chores, vec![vec![0.5, 0.5]]).unwrap();
        let s = mrc_set(&inst, &[1.0, 2.0], 0);
        assert_eq!(s.items, vec![1]);
        assert!((s.value - 4.0).abs() < 1e-15);

        let inst = Instance::new(Kind::Chores, vec![vec![0.0, 0.5]]).unwrap();
        assert_eq!(mrc_set(&inst, &[0.0, 2.0], 0).items, vec![0, 1]);
    }

    #[test]
    fn zero_price_positive_value_is_infinite() {
        let inst = Instance::new(Kind::Goods, vec![vec![0.5, 0.5]]).unwrap();
        let s = mbb_set(&inst, &[0.0, 1.0], 0);
        assert_eq!(s.items, vec![0]);
        assert!(s.value.is_infinite());
    }

    #[test]
    fn single_chore_consistent() {
        let inst = Instance::new(Kind::Chores, vec![vec![1.0]]).unwrap();
        let eq = ChoresEquilibrium {
            allocation: FractionalAllocation::new(vec![vec![1.0]]).unwrap(),
            rewards: vec![2.0],
            earnings: vec![2.0],
        };
        assert!(check_chores_equilibrium(&inst, &eq).unwrap().holds);
    }

    #[test]
    fn zero_reward_breaks_earnings() {
        let inst = Instance::new(Kind::Chores, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let eq = ChoresEquilibrium {
            allocation: FractionalAllocation::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            rewards: vec![0.0, 1.0],
            earnings: vec![1.0, 1.0],
        };
        let c = check_chores_equilibrium(&inst, &eq).unwrap();
        assert!(!c.holds);
    }
}
