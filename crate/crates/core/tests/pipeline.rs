use pmean_fair::fairness::{check_fpo, check_prop, check_propk, FPO_TOL};
use pmean_fair::instance::Kind;
use pmean_fair::market::{check_chores_equilibrium, check_goods_equilibrium};
use pmean_fair::rounding::{round_chores, round_goods, verify_chores_rounding, verify_goods_rounding};
use pmean_fair::sample;
use pmean_fair::solver::{extract_chores_equilibrium, extract_goods_equilibrium, solve, SolverConfig};
use pmean_fair::welfare::prop_bound;

const GOODS_P: [f64; 5] = [0.0, -0.5, -1.0, -2.0, -4.0];
const CHORES_P: [f64; 3] = [1.0, 2.0, 4.0];

#[test]
fn goods_solve_extract_round() {
    let mut rng = sample::rng(11);
    let cfg = SolverConfig::default();
    let mut worst_iters = 0;
    for t in 0..500 {
        let n = 2 + t % 3;
        let m = 2 + t % 5;
        let p = GOODS_P[t % GOODS_P.len()];
        let inst = sample::dense(&mut rng, Kind::Goods, n, m);
        let sol = solve(&inst, p, &cfg).unwrap_or_else(|e| panic!("instance {t}, p = {p}: {e}"));
        worst_iters = worst_iters.max(sol.iterations);
        assert!(sol.certificate.residual() <= 1e-8);
        let prop = check_prop(&inst, &sol.allocation, 1.0).unwrap();
        assert!(prop.margin >= -1e-6, "{prop:?}");
        let eq = extract_goods_equilibrium(&inst, &sol.allocation, p).unwrap();
        let check = check_goods_equilibrium(&inst, &eq).unwrap();
        assert!(check.holds, "instance {t}: {check:?}");
        let fpo = check_fpo(&inst, &sol.allocation).unwrap();
        assert!(fpo.holds, "{fpo:?}");

        let out = round_goods(&inst, &eq).unwrap();
        let contract = verify_goods_rounding(&inst, &eq, &out).unwrap();
        assert!(contract.holds, "instance {t}: {contract:?}");
        assert!(check_propk(&inst, &out.allocation, 1.0, 1).unwrap().holds);
        let fpo = check_fpo(&inst, &out.allocation).unwrap();
        assert!(fpo.holds && fpo.margin >= -FPO_TOL, "{fpo:?}");
    }
    eprintln!("goods: worst iteration count {worst_iters}");
}

#[test]
fn chores_solve_extract_round() {
    let mut rng = sample::rng(12);
    let cfg = SolverConfig::default();
    let mut worst_iters = 0;
    for t in 0..500 {
        let n = 2 + t % 3;
        let m = 2 + t % 5;
        let p = CHORES_P[t % CHORES_P.len()];
        let inst = sample::dense(&mut rng, Kind::Chores, n, m);
        let sol = solve(&inst, p, &cfg).unwrap_or_else(|e| panic!("instance {t}, p = {p}: {e}"));
        worst_iters = worst_iters.max(sol.iterations);
        let beta = prop_bound(n, p).unwrap();
        let prop = check_prop(&inst, &sol.allocation, beta).unwrap();
        assert!(prop.margin >= -1e-6, "{prop:?}");
        let eq = extract_chores_equilibrium(&inst, &sol.allocation, p).unwrap();
        let check = check_chores_equilibrium(&inst, &eq).unwrap();
        assert!(check.holds, "instance {t}: {check:?}");
        assert!(check_fpo(&inst, &sol.allocation).unwrap().holds);

        let out = round_chores(&inst, &eq, p).unwrap();
        let contract = verify_chores_rounding(&inst, &eq, &out).unwrap();
        assert!(contract.holds, "instance {t}: {contract:?}");
        let r = check_propk(&inst, &out.allocation, beta, 1).unwrap();
        assert!(r.holds, "instance {t}: {r:?}");
        assert!(check_fpo(&inst, &out.allocation).unwrap().holds);
    }
    eprintln!("chores: worst iteration count {worst_iters}");
}
