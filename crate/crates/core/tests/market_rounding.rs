use proptest::prelude::*;

use pmean_fair::fairness::{check_fpo, check_propk};
use pmean_fair::instance::{FractionalAllocation, Instance, Kind};
use pmean_fair::market::{check_chores_equilibrium, check_goods_equilibrium, mbb_set, Condition};
use pmean_fair::rounding::{round_chores, round_goods, verify_chores_rounding, verify_goods_rounding};
use pmean_fair::sample;
use pmean_fair::solver::{extract_chores_equilibrium, extract_goods_equilibrium, solve, SolverConfig};
use pmean_fair::welfare::prop_bound;

#[test]
fn sparse_goods_pipeline() {
    let mut rng = sample::rng(31);
    let cfg = SolverConfig::default();
    for t in 0..60 {
        let inst = sample::sparse_goods(&mut rng, 2 + t % 3, 2 + t % 6);
        let p = [0.0, -1.0, -2.0][t % 3];
        let sol = solve(&inst, p, &cfg).unwrap();
        let eq = extract_goods_equilibrium(&inst, &sol.allocation, p).unwrap();
        assert!(check_goods_equilibrium(&inst, &eq).unwrap().holds, "instance {t}");
        let out = round_goods(&inst, &eq).unwrap();
        let c = verify_goods_rounding(&inst, &eq, &out).unwrap();
        assert!(c.holds, "instance {t}: {c:?}");
        assert!(check_propk(&inst, &out.allocation, 1.0, 1).unwrap().holds, "instance {t}");
        assert!(check_fpo(&inst, &out.allocation).unwrap().holds, "instance {t}");
    }
}

#[test]
fn zero_cost_chores_pipeline() {
    // Chore 0 costs nothing to agent 1; it must end with agent 1 at reward 0.
    let inst = Instance::new(Kind::Chores, vec![vec![0.5, 0.3, 0.2], vec![0.0, 0.5, 0.5]]).unwrap();
    for p in [1.0, 2.0, 3.0] {
        let sol = solve(&inst, p, &SolverConfig::default()).unwrap();
        let eq = extract_chores_equilibrium(&inst, &sol.allocation, p).unwrap();
        assert_eq!(eq.rewards[0], 0.0);
        assert!(check_chores_equilibrium(&inst, &eq).unwrap().holds);
        let out = round_chores(&inst, &eq, p).unwrap();
        assert_eq!(out.allocation.owner(0), 1);
        assert!(verify_chores_rounding(&inst, &eq, &out).unwrap().holds);
    }
}

#[test]
fn two_agent_chores_witness_in_own_bundle() {
    let mut rng = sample::rng(32);
    let mut witnessed = 0;
    for t in 0..100 {
        let inst = sample::dense(&mut rng, Kind::Chores, 2, 2 + t % 6);
        let sol = solve(&inst, 2.0, &SolverConfig::default()).unwrap();
        let eq = extract_chores_equilibrium(&inst, &sol.allocation, 2.0).unwrap();
        let out = round_chores(&inst, &eq, 2.0).unwrap();
        assert!(verify_chores_rounding(&inst, &eq, &out).unwrap().holds);
        for i in 0..2 {
            if out.adjusted[i] > out.original[i] + 1e-9 {
                let j = out.witness[i].expect("over-earner has a witness");
                assert_eq!(out.allocation.owner(j), i);
                assert!(out.adjusted[i] - eq.rewards[j] <= out.original[i] + 1e-9);
                witnessed += 1;
            }
        }
        let beta = prop_bound(2, 2.0).unwrap();
        assert!(check_propk(&inst, &out.allocation, beta, 1).unwrap().holds);
    }
    assert!(witnessed > 10);
}

#[test]
fn fpo_alternative_dominates() {
    // Agents prefer each other's goods.
    let inst = Instance::new(Kind::Goods, vec![vec![0.2, 0.8], vec![0.7, 0.3]]).unwrap();
    let x = FractionalAllocation::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let r = check_fpo(&inst, &x).unwrap();
    assert!(!r.holds);
    let alt = FractionalAllocation::new(r.witness.unwrap().alternative.unwrap()).unwrap();
    let (old, new) = (inst.own_values(&x), inst.own_values(&alt));
    assert!(old.iter().zip(&new).all(|(a, b)| b >= &(a - 1e-9)));
    assert!(old.iter().zip(&new).any(|(a, b)| b > &(a + 1e-6)));
}

fn goods_strategy() -> impl Strategy<Value = Instance> {
    (2usize..4, 2usize..5).prop_flat_map(|(n, m)| {
        prop::collection::vec(prop::collection::vec(0.05f64..1.0, m), n)
            .prop_map(|rows| Instance::new(Kind::Goods, rows).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_a_held_price_breaks_equilibrium(inst in goods_strategy(), bump in 0.01f64..0.5) {
        let sol = solve(&inst, 0.0, &SolverConfig::default()).unwrap();
        let mut eq = extract_goods_equilibrium(&inst, &sol.allocation, 0.0).unwrap();
        prop_assert!(check_goods_equilibrium(&inst, &eq).unwrap().holds);
        eq.prices[0] *= 1.0 + bump;
        let c = check_goods_equilibrium(&inst, &eq).unwrap();
        prop_assert!(!c.holds);
        let w = c.witness.unwrap();
        prop_assert!(matches!(w.condition, Condition::BestRatio | Condition::BudgetExhausted));
    }

    #[test]
    fn held_goods_are_mbb(inst in goods_strategy(), p in -3.0f64..=0.0) {
        let sol = solve(&inst, p, &SolverConfig::default()).unwrap();
        let eq = extract_goods_equilibrium(&inst, &sol.allocation, p).unwrap();
        for i in 0..inst.n() {
            let set = mbb_set(&inst, &eq.prices, i);
            for j in 0..inst.m() {
                if sol.allocation.get(i, j) > 1e-6 {
                    prop_assert!(set.contains(j));
                }
            }
        }
        let sum: f64 = eq.budgets.iter().sum();
        let spent: f64 = eq.prices.iter().sum();
        prop_assert!((sum - spent).abs() <= 1e-6 * sum.max(1.0));
    }
}
