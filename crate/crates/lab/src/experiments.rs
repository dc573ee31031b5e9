//! One experiment per result. Each returns a report of checked claims and is
//! deterministic given the seed and the manifest.

use std::time::Instant;

use rand::Rng;

use pmean_fair::exact::{
    ef1_descent, ef1_transfer_step, enumerate_optima_with, grid_oracle_divisible_with, lemma_chores_algebra_predicate,
    lemma_goods_algebra_predicate, lemma_squeeze_predicate, two_agent_costs,
};
use pmean_fair::exec::{self, Execution};
use pmean_fair::fairness::{check_ef, check_efk, check_fpo, check_po_integral_with, check_prop, check_propk};
use pmean_fair::lp::{LinearProgram, Relation};
use pmean_fair::market::{check_chores_equilibrium, check_goods_equilibrium};
use pmean_fair::rounding::{round_chores, round_goods, verify_chores_rounding, verify_goods_rounding, RoundingOutcome};
use pmean_fair::sample::{self, SampleRng};
use pmean_fair::solver::{extract_chores_equilibrium, extract_goods_equilibrium, solve, SolverConfig};
use pmean_fair::welfare::{p_mean, prop_bound, surrogate_gradient, surrogate_objective, Surrogate};
use pmean_fair::{Error, FractionalAllocation, Instance, IntegralAllocation, Kind, PMean, Result};

use crate::discretize::{discretize, grouped_optima};
use crate::generators::{chores_split_closed_form, goods_split_closed_form, tightness_factor, Named};
use crate::manifest::Manifest;
use crate::report::ExperimentReport;

const GOODS_P: [f64; 5] = [0.0, -0.5, -1.0, -2.0, -4.0];
const CHORES_P: [f64; 3] = [1.0, 2.0, 4.0];
const TWO_AGENT_GOODS_P: [f64; 4] = [0.0, -1.0, -2.0, -5.0];
const TWO_AGENT_CHORES_P: [f64; 4] = [2.0, 3.0, 4.0, 10.0];

/// Tolerance for audits of iterative solver output.
const AUDIT_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Context {
    pub seed: u64,
    pub manifest: Manifest,
    pub exec: Execution,
}

impl Context {
    pub fn new(seed: u64) -> Self {
        Context {
            seed,
            manifest: Manifest::embedded(),
            exec: Execution::default(),
        }
    }

    fn rng(&self, salt: u64) -> SampleRng {
        sample::rng(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt))
    }
}

impl Default for Context {
    fn default() -> Self {
        Context::new(Manifest::embedded().seed)
    }
}

pub struct Experiment {
    pub id: &'static str,
    pub summary: &'static str,
    run: fn(&Context) -> Result<ExperimentReport>,
}

pub const EXPERIMENTS: &[Experiment] = &[
    Experiment { id: "thm-div-goods", summary: "divisible goods, p <= 0: optima are PROP, fPO and market equilibria", run: div_goods },
    Experiment { id: "thm-div-chore-prop", summary: "divisible chores, p >= 1: optima are n^(1/p)-PROP, fPO and market equilibria", run: div_chores },
    Experiment { id: "thm-chores-tightness", summary: "the n^(1/p) factor for chores is attained up to f(n, p)", run: chores_tightness },
    Experiment { id: "thm-div-goods-negative", summary: "divisible goods, p > 0: no optimum is PROP", run: div_goods_negative },
    Experiment { id: "thm-chores-negative-p-lt-2", summary: "divisible chores, 1 <= p < 2: no optimum is PROP", run: chores_negative },
    Experiment { id: "thm-rounding", summary: "equilibrium rounding yields PROP1 / n^(1/p)-PROP1 and fPO", run: rounding },
    Experiment { id: "thm-two-agent-ef1", summary: "two agents: all integral optima are EF1 and PO", run: two_agent_ef1 },
    Experiment { id: "ef1-failure-boundaries", summary: "outside the good regimes some optimum fails PROP1", run: ef1_boundaries },
    Experiment { id: "claim-non-norm-ef1", summary: "beta-EF allocations of I1 have c1 >= 1.5 and c2 >= m + 1", run: claim_non_norm },
    Experiment { id: "thm-non-norm-neg-res", summary: "welfarist aggregators cannot be beta-EF on both I1 and I2", run: welfarist },
    Experiment { id: "cor-neg-result-bprop", summary: "two agents: beta-PROP implies beta/(2-beta)-EF for chores", run: bprop_to_ef },
    Experiment { id: "lemma-div-to-indiv", summary: "discretization replicates divisible costs exactly", run: div_to_indiv },
    Experiment { id: "lemma-properties", summary: "algebraic lemmas hold on sampled hypotheses", run: lemma_properties },
    Experiment { id: "numerics-gradient", summary: "surrogate gradients and power-mean properties", run: numerics },
    Experiment { id: "lemma-not-ef", summary: "the maximin optimum of a three-agent instance is not EF", run: not_ef },
];

pub fn ids() -> impl Iterator<Item = &'static str> {
    EXPERIMENTS.iter().map(|e| e.id)
}

pub fn run_experiment(id: &str, ctx: &Context) -> Result<ExperimentReport> {
    let e = EXPERIMENTS
        .iter()
        .find(|e| e.id == id)
        .ok_or_else(|| Error::Param(format!("unknown experiment {id:?}; known: {:?}", ids().collect::<Vec<_>>())))?;
    (e.run)(ctx)
}

pub fn run_all(ctx: &Context) -> Result<Vec<ExperimentReport>> {
    EXPERIMENTS.iter().map(|e| (e.run)(ctx)).collect()
}

fn pm(p: f64) -> PMean {
    PMean::new(p).expect("finite exponent")
}

fn worst<I: IntoIterator<Item = f64>>(it: I, init: f64, f: fn(f64, f64) -> f64) -> f64 {
    it.into_iter().fold(init, f)
}

// ---------------------------------------------------------------------------
// divisible positive results

struct DivisibleAudit {
    prop_margin: f64,
    kkt: f64,
    equilibrium: bool,
    fpo_slack: f64,
    error: Option<String>,
}

fn audit_divisible(inst: &Instance, p: f64) -> DivisibleAudit {
    let run = || -> Result<DivisibleAudit> {
        let sol = solve(inst, p, &SolverConfig::default())?;
        let beta = match inst.kind() {
            Kind::Goods => 1.0,
            Kind::Chores => prop_bound(inst.n(), p)?,
        };
        let prop = check_prop(inst, &sol.allocation, beta)?;
        let equilibrium = match inst.kind() {
            Kind::Goods => check_goods_equilibrium(inst, &extract_goods_equilibrium(inst, &sol.allocation, p)?)?.holds,
            Kind::Chores => {
                check_chores_equilibrium(inst, &extract_chores_equilibrium(inst, &sol.allocation, p)?)?.holds
            }
        };
        let fpo = check_fpo(inst, &sol.allocation)?;
        Ok(DivisibleAudit {
            prop_margin: prop.margin,
            kkt: sol.certificate.residual(),
            equilibrium,
            fpo_slack: -fpo.margin,
            error: None,
        })
    };
    run().unwrap_or_else(|e| DivisibleAudit {
        prop_margin: f64::NEG_INFINITY,
        kkt: f64::INFINITY,
        equilibrium: false,
        fpo_slack: f64::INFINITY,
        error: Some(e.to_string()),
    })
}

fn random_shape(rng: &mut SampleRng, max_agents: usize, max_items: usize) -> (usize, usize) {
    (rng.random_range(2..=max_agents), rng.random_range(2..=max_items))
}

fn divisible_batch(ctx: &Context, id: &str, kind: Kind, ps: &[f64], salt: u64) -> ExperimentReport {
    let start = Instant::now();
    let cfg = &ctx.manifest.random;
    let mut rng = ctx.rng(salt);
    let cases: Vec<(Instance, f64)> = (0..cfg.instances)
        .map(|t| {
            let (n, m) = random_shape(&mut rng, cfg.max_agents, cfg.max_items_divisible);
            (sample::dense(&mut rng, kind, n, m), ps[t % ps.len()])
        })
        .collect();
    let audits = exec::map(ctx.exec, &cases, |(inst, p)| audit_divisible(inst, *p));
    let secs = start.elapsed().as_secs_f64();

    let mut r = ExperimentReport::new(id);
    let prop = match kind {
        Kind::Goods => "PROP(1)",
        Kind::Chores => "PROP(n^(1/p))",
    };
    r.none("solver or audit errors", audits.iter().filter(|a| a.error.is_some()).count());
    r.at_least(
        format!("min {prop} slack over {} instances", cases.len()),
        worst(audits.iter().map(|a| a.prop_margin), f64::INFINITY, f64::min),
        0.0,
        AUDIT_TOL,
    );
    r.at_most("max KKT residual", worst(audits.iter().map(|a| a.kkt), 0.0, f64::max), 1e-8, 0.0);
    r.none("extracted equilibria failing a market condition", audits.iter().filter(|a| !a.equilibrium).count());
    r.at_most(
        "max fPO improvement slack",
        worst(audits.iter().map(|a| a.fpo_slack), f64::NEG_INFINITY, f64::max),
        1e-7,
        0.0,
    );
    r.at_most("runtime seconds", secs, 60.0, 0.0);
    if let Some(e) = audits.iter().find_map(|a| a.error.clone()) {
        r.note(format!("first error: {e}"));
    }
    r
}

fn div_goods(ctx: &Context) -> Result<ExperimentReport> {
    Ok(divisible_batch(ctx, "thm-div-goods", Kind::Goods, &GOODS_P, 1))
}

fn div_chores(ctx: &Context) -> Result<ExperimentReport> {
    Ok(divisible_batch(ctx, "thm-div-chore-prop", Kind::Chores, &CHORES_P, 2))
}

/// Normalized own disutility of agent 0 and the resulting PROP ratio `n * c~_1`.
fn tightness_case(n: usize, p: f64) -> Result<(FractionalAllocation, f64, f64)> {
    let inst = Named::ChoresTightness { n, p }.generate()?;
    let sol = solve(&inst, p, &SolverConfig::default())?;
    let c1 = inst.own_values(&sol.allocation)[0] / inst.row_sum(0);
    Ok((sol.allocation, c1, n as f64 * c1))
}

fn chores_tightness(_ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("thm-chores-tightness");
    let (x, c1, ratio) = tightness_case(4, 2.0)?;
    r.near("n=4 p=2: x_12", x.get(0, 1), 0.5, 1e-4);
    r.near("n=4 p=2: normalized cost of agent 1", c1, 0.288675, 1e-4);
    r.near("n=4 p=2: PROP ratio n*c1 vs n^(1/p) f(n,p)", ratio, 2.0 * tightness_factor(4, 2.0), 5e-4);
    r.near("n=4 p=2: PROP ratio vs 1.15470", ratio, 1.15470, 5e-4);
    r.above("n=4 p=2: PROP(1) is violated (ratio > 1)", ratio, 1.0);
    for (n, p) in [(3, 1.5), (3, 2.0), (5, 2.0), (5, 3.0), (8, 2.0), (8, 4.0)] {
        let (_, _, ratio) = tightness_case(n, p)?;
        let target = (n as f64).powf(1.0 / p) * tightness_factor(n, p);
        r.near(format!("n={n} p={p}: PROP ratio vs n^(1/p) f(n,p)"), ratio, target, 5e-4);
        r.at_most(format!("n={n} p={p}: PROP ratio within n^(1/p)"), ratio, (n as f64).powf(1.0 / p), AUDIT_TOL);
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// divisible negative results

/// Every optimum of a 2x2 instance over the grid `{0, 1/r, ..., 1}^2`.
fn grid_optima_2x2(inst: &Instance, p: PMean, r: usize) -> Vec<FractionalAllocation> {
    let norm = inst.normalize();
    let kind = inst.kind();
    let mut pts = Vec::with_capacity((r + 1) * (r + 1));
    for a in 0..=r {
        for b in 0..=r {
            let (x0, x1) = (a as f64 / r as f64, b as f64 / r as f64);
            let u = [
                norm.value(0, 0) * x0 + norm.value(0, 1) * x1,
                norm.value(1, 0) * (1.0 - x0) + norm.value(1, 1) * (1.0 - x1),
            ];
            pts.push((p_mean(&u, p).expect("non-negative"), x0, x1));
        }
    }
    let best = pts
        .iter()
        .map(|t| t.0)
        .reduce(|a, b| match kind {
            Kind::Goods => a.max(b),
            Kind::Chores => a.min(b),
        })
        .expect("non-empty grid");
    pts.into_iter()
        .filter(|t| (t.0 - best).abs() <= 1e-12 * best.abs())
        .map(|(_, x0, x1)| FractionalAllocation::new(vec![vec![x0, x1], vec![1.0 - x0, 1.0 - x1]]).expect("valid"))
        .collect()
}

fn count_prop(inst: &Instance, allocs: &[FractionalAllocation]) -> Result<usize> {
    let mut k = 0;
    for a in allocs {
        if check_prop(inst, a, 1.0)?.holds {
            k += 1;
        }
    }
    Ok(k)
}

fn div_goods_negative(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("thm-div-goods-negative");
    let res = ctx.manifest.oracle.resolution;
    let grid = ctx.manifest.oracle.tie_grid;

    let (eps, delta, p) = (0.1, 0.2, 0.5);
    let inst = Named::GoodsNegPLt1 { eps, delta }.generate()?;
    let o = grid_oracle_divisible_with(&inst, pm(p), res, ctx.exec)?;
    let split = o.allocation.get(0, 0);
    r.near("p=0.5: oracle split of good 1 to agent 1 vs closed form", split, goods_split_closed_form(eps, delta, p), 1e-3);
    r.near("p=0.5: oracle split of good 1 to agent 1 vs 0.10256", split, 0.10256, 1e-3);
    r.near("p=0.5: good 2 goes fully to agent 1", o.allocation.get(0, 1), 1.0, 1e-9);
    r.below("p=0.5: closed-form split below eps/(1/2+eps)", goods_split_closed_form(eps, delta, p), eps / (0.5 + eps));
    let u1 = inst.own_values(&o.allocation)[0] / inst.row_sum(0);
    r.below("p=0.5: agent 1 normalized utility below 1/2", u1, 0.5);
    let audit = check_prop(&inst, &o.allocation, 1.0)?;
    r.flag("p=0.5: PROP audit fails for agent 1", !audit.holds && audit.witness.is_some_and(|w| w.agent == 0));
    let optima = grid_optima_2x2(&inst, pm(p), grid);
    r.none(format!("p=0.5: PROP grid optima (of {})", optima.len()), count_prop(&inst, &optima)?);

    let inst = Named::GoodsNegPEq1 { v11: 0.8, v21: 0.6 }.generate()?;
    let o = grid_oracle_divisible_with(&inst, pm(1.0), res, ctx.exec)?;
    r.flag(
        "p=1: good 1 to agent 1 and good 2 to agent 2",
        o.allocation.get(0, 0) > 1.0 - 1e-9 && o.allocation.get(1, 1) > 1.0 - 1e-9,
    );
    r.flag("p=1: PROP audit fails", !check_prop(&inst, &o.allocation, 1.0)?.holds);
    let optima = grid_optima_2x2(&inst, pm(1.0), grid);
    r.near("p=1: number of grid optima", optima.len() as f64, 1.0, 0.0);
    r.none("p=1: PROP grid optima", count_prop(&inst, &optima)?);

    let inst = Named::GoodsNegPGt1 { m: 2 }.generate()?;
    for p in [1.5, 2.0, 3.0] {
        let o = grid_oracle_divisible_with(&inst, pm(p), res, ctx.exec)?;
        r.flag(format!("p={p}: PROP audit fails on the oracle optimum"), !check_prop(&inst, &o.allocation, 1.0)?.holds);
        let optima = grid_optima_2x2(&inst, pm(p), grid);
        r.near(format!("p={p}: grid optima are the two corner allocations"), optima.len() as f64, 2.0, 0.0);
        r.none(format!("p={p}: PROP grid optima"), count_prop(&inst, &optima)?);
    }
    Ok(r)
}

fn chores_negative(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("thm-chores-negative-p-lt-2");
    let res = ctx.manifest.oracle.resolution;
    let (eps, delta, p) = (0.05, 0.1, 1.5);
    r.below("constraint delta < eps + (2 eps + 1)(1 - p/2)", delta, eps + (2.0 * eps + 1.0) * (1.0 - p / 2.0));
    let inst = Named::ChoresNegPBetween { eps, delta, p }.generate()?;
    let o = grid_oracle_divisible_with(&inst, pm(p), res, ctx.exec)?;
    let x = o.allocation.get(0, 0);
    r.near("p=1.5: chore 2 fully to agent 1", o.allocation.get(0, 1), 1.0, 1e-9);
    r.near("p=1.5: oracle x vs closed form", x, chores_split_closed_form(eps, delta, p), 1e-3);
    r.below("p=1.5: x below eps/(1/2+eps)", x, eps / (0.5 + eps));
    let c2 = inst.own_values(&o.allocation)[1] / inst.row_sum(1);
    r.above("p=1.5: agent 2 normalized cost above 1/2", c2, 0.5);
    r.flag("p=1.5: PROP audit fails", !check_prop(&inst, &o.allocation, 1.0)?.holds);
    let optima = grid_optima_2x2(&inst, pm(p), ctx.manifest.oracle.tie_grid);
    r.none(format!("p=1.5: PROP grid optima (of {})", optima.len()), count_prop(&inst, &optima)?);

    let inst = Named::ChoresDivPEq1 { c11: 0.2, c21: 0.3 }.generate()?;
    let optima = grid_optima_2x2(&inst, pm(1.0), ctx.manifest.oracle.tie_grid);
    r.near("p=1: number of grid optima", optima.len() as f64, 1.0, 0.0);
    r.none("p=1: PROP grid optima", count_prop(&inst, &optima)?);
    Ok(r)
}

// ---------------------------------------------------------------------------
// rounding

#[derive(Default)]
struct RoundingAudit {
    contract: bool,
    prop1: bool,
    fpo: bool,
    deviation_ratio: f64,
    error: Option<String>,
}

fn audit_rounding(inst: &Instance, p: f64) -> RoundingAudit {
    let run = || -> Result<RoundingAudit> {
        let sol = solve(inst, p, &SolverConfig::default())?;
        let (out, contract): (RoundingOutcome, _) = match inst.kind() {
            Kind::Goods => {
                let eq = extract_goods_equilibrium(inst, &sol.allocation, p)?;
                let out = round_goods(inst, &eq)?;
                let c = verify_goods_rounding(inst, &eq, &out)?;
                (out, c)
            }
            Kind::Chores => {
                let eq = extract_chores_equilibrium(inst, &sol.allocation, p)?;
                let out = round_chores(inst, &eq, p)?;
                let c = verify_chores_rounding(inst, &eq, &out)?;
                (out, c)
            }
        };
        let beta = match inst.kind() {
            Kind::Goods => 1.0,
            Kind::Chores => prop_bound(inst.n(), p)?,
        };
        Ok(RoundingAudit {
            contract: contract.holds,
            prop1: check_propk(inst, &out.allocation, beta, 1)?.holds,
            fpo: check_fpo(inst, &out.allocation)?.holds,
            deviation_ratio: if contract.max_price > 0.0 { contract.max_deviation / contract.max_price } else { 0.0 },
            error: None,
        })
    };
    run().unwrap_or_else(|e| RoundingAudit {
        error: Some(e.to_string()),
        deviation_ratio: f64::INFINITY,
        ..Default::default()
    })
}

fn rounding(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("thm-rounding");
    let cfg = &ctx.manifest.random;
    for (kind, ps, salt, label) in [
        (Kind::Goods, &GOODS_P[..], 3, "goods PROP1"),
        (Kind::Chores, &CHORES_P[..], 4, "chores n^(1/p)-PROP1"),
    ] {
        let mut rng = ctx.rng(salt);
        let cases: Vec<(Instance, f64)> = (0..cfg.instances)
            .map(|t| {
                let (n, m) = random_shape(&mut rng, cfg.max_agents, cfg.max_items_rounding);
                (sample::dense(&mut rng, kind, n, m), ps[t % ps.len()])
            })
            .collect();
        let audits = exec::map(ctx.exec, &cases, |(inst, p)| audit_rounding(inst, *p));
        let k = kind.as_str();
        r.none(format!("{k}: pipeline errors over {} instances", cases.len()), audits.iter().filter(|a| a.error.is_some()).count());
        r.none(format!("{k}: contract violations"), audits.iter().filter(|a| !a.contract).count());
        r.none(format!("{k}: {label} violations"), audits.iter().filter(|a| !a.prop1).count());
        r.none(format!("{k}: fPO violations"), audits.iter().filter(|a| !a.fpo).count());
        r.at_most(
            format!("{k}: max |b - b'| / max price"),
            worst(audits.iter().map(|a| a.deviation_ratio), 0.0, f64::max),
            1.0,
            1e-9,
        );
        if let Some(e) = audits.iter().find_map(|a| a.error.clone()) {
            r.note(format!("{k}: first error: {e}"));
        }
    }

    let mut rng = ctx.rng(5);
    let sparse: Vec<(Instance, f64)> = (0..cfg.instances / 5)
        .map(|t| {
            let (n, m) = random_shape(&mut rng, cfg.max_agents, cfg.max_items_rounding);
            (sample::sparse_goods(&mut rng, n, m), GOODS_P[t % GOODS_P.len()])
        })
        .collect();
    let audits = exec::map(ctx.exec, &sparse, |(inst, p)| audit_rounding(inst, *p));
    r.none(
        format!("sparse goods: failures over {} instances", sparse.len()),
        audits.iter().filter(|a| a.error.is_some() || !a.contract || !a.prop1 || !a.fpo).count(),
    );

    let a = audit_rounding(&Named::ChoresTightness { n: 4, p: 2.0 }.generate()?, 2.0);
    r.flag("tightness instance: contract and 2-PROP1 hold after rounding", a.error.is_none() && a.contract && a.prop1 && a.fpo);
    Ok(r)
}

// ---------------------------------------------------------------------------
// two agents

fn two_agent_ef1(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("thm-two-agent-ef1");
    let cfg = &ctx.manifest.random;
    for (kind, ps, salt) in [(Kind::Goods, &TWO_AGENT_GOODS_P[..], 6), (Kind::Chores, &TWO_AGENT_CHORES_P[..], 7)] {
        let mut rng = ctx.rng(salt);
        let cases: Vec<(Instance, f64)> = (0..cfg.two_agent_instances)
            .map(|t| {
                let m = rng.random_range(2..=cfg.two_agent_max_items);
                (sample::dense(&mut rng, kind, 2, m), ps[t % ps.len()])
            })
            .collect();
        // Enumeration parallelizes internally; the outer loop stays sequential.
        let mut optima = 0;
        let (mut not_ef1, mut not_po) = (0, 0);
        for (inst, p) in &cases {
            for a in enumerate_optima_with(inst, pm(*p), ctx.exec)?.optima {
                optima += 1;
                not_ef1 += usize::from(!check_efk(inst, &a, 1.0, 1)?.holds);
                not_po += usize::from(!check_po_integral_with(inst, &a, ctx.exec)?.holds);
            }
        }
        let k = kind.as_str();
        r.none(format!("{k}: optima failing EF1 (of {optima} over {} instances)", cases.len()), not_ef1);
        r.none(format!("{k}: optima failing PO"), not_po);
    }

    let mut rng = ctx.rng(8);
    let (mut bad, mut transfers) = (0, 0);
    for _ in 0..cfg.two_agent_instances {
        let m = rng.random_range(2..=cfg.two_agent_max_items);
        let inst = sample::dense(&mut rng, Kind::Chores, 2, m);
        let start = IntegralAllocation::new(2, (0..m).map(|_| rng.random_range(0..2)).collect())?;
        let path = ef1_descent(&inst, &start)?;
        let mut ok = check_efk(&inst, path.last().expect("non-empty path"), 1.0, 1)?.holds;
        for w in path.windows(2) {
            if ef1_transfer_step(&inst, &w[0]).is_ok() {
                transfers += 1;
                let (a, b) = (two_agent_costs(&inst, &w[0]), two_agent_costs(&inst, &w[1]));
                let sq = |c: [f64; 2]| c[0] * c[0] + c[1] * c[1];
                ok &= sq(b) < sq(a) && b[0].max(b[1]) < a[0].max(a[1]);
            }
        }
        bad += usize::from(!ok);
    }
    r.none("chores descent: runs not ending EF1 or with a non-decreasing transfer", bad);
    r.note(format!("{transfers} transfer steps checked"));
    Ok(r)
}

// ---------------------------------------------------------------------------
// integral negative results

fn prop1_failures(inst: &Instance, optima: &[IntegralAllocation]) -> Result<usize> {
    let mut k = 0;
    for a in optima {
        k += usize::from(!check_propk(inst, a, 1.0, 1)?.holds);
    }
    Ok(k)
}

/// Discretizes the oracle optimum and counts grouped optima that fail PROP1.
fn discretized_failures(ctx: &Context, inst: &Instance, p: f64, z: usize) -> Result<(usize, usize, f64)> {
    let o = grid_oracle_divisible_with(inst, pm(p), ctx.manifest.oracle.resolution, ctx.exec)?;
    let d = discretize(inst, &o.allocation, z)?;
    let set = grouped_optima(&d, pm(p), ctx.exec)?;
    let fails = set.optima.iter().filter(|c| d.prop1_slack(c, 1.0) < -1e-9).count();
    let piece = (0..d.n()).map(|l| d.max_normalized_piece(l)).fold(0.0, f64::max);
    Ok((fails, set.optima.len(), piece))
}

fn ef1_boundaries(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("ef1-failure-boundaries");

    let inst = Named::ChoresNegPEq1 { m: 6, eps: 0.01 }.generate()?;
    let set = enumerate_optima_with(&inst, pm(1.0), ctx.exec)?;
    let f = prop1_failures(&inst, &set.optima)?;
    r.at_least("chores p=1: optima failing PROP1", f as f64, 1.0, 0.0);
    r.near(format!("chores p=1: all {} optima fail PROP1", set.optima.len()), f as f64, set.optima.len() as f64, 0.0);

    let inst = Named::ChoresNegPLt1 { m: 5 }.generate()?;
    let set = enumerate_optima_with(&inst, pm(0.5), ctx.exec)?;
    let f = prop1_failures(&inst, &set.optima)?;
    r.near(format!("chores p=0.5: all {} optima fail PROP1", set.optima.len()), f as f64, set.optima.len() as f64, 0.0);

    let z = ctx.manifest.discretize.chores_z;
    let inst = Named::DivChoresCE { eps: 0.05, delta: 0.1 }.generate()?;
    let (f, total, piece) = discretized_failures(ctx, &inst, 1.5, z)?;
    r.at_least(format!("chores p=1.5, z={z}: discretized optima failing PROP1"), f as f64, 1.0, 0.0);
    r.near(format!("chores p=1.5, z={z}: all {total} discretized optima fail PROP1"), f as f64, total as f64, 0.0);
    r.note(format!("chores p=1.5: largest normalized piece {piece:.5}"));

    let z = ctx.manifest.discretize.goods_z;
    let inst = Named::DivGoodsCE { eps: 0.1, delta: 0.2 }.generate()?;
    let (f, total, piece) = discretized_failures(ctx, &inst, 0.5, z)?;
    r.at_least(format!("goods p=0.5, z={z}: discretized optima failing PROP1"), f as f64, 1.0, 0.0);
    r.near(format!("goods p=0.5, z={z}: all {total} discretized optima fail PROP1"), f as f64, total as f64, 0.0);
    r.note(format!("goods p=0.5: largest normalized piece {piece:.5}"));

    let eps_list = &ctx.manifest.search.goods_3x7_eps;
    for &p in &ctx.manifest.search.goods_3x7_p {
        let single = |eps: f64| -> Result<(bool, usize, usize)> {
            let inst = Named::Goods3x7 { eps }.generate()?;
            let set = enumerate_optima_with(&inst, pm(p), ctx.exec)?;
            let ok = set.optima.iter().all(|a| a.bundle(0).len() == 1);
            Ok((ok, prop1_failures(&inst, &set.optima)?, set.optima.len()))
        };
        let mut found = None;
        for (k, &eps) in eps_list.iter().enumerate() {
            let (ok, fails, total) = single(eps)?;
            // Accept once the property also holds at the next smaller eps.
            let stable = match eps_list.get(k + 1) {
                Some(&next) => single(next)?.0,
                None => true,
            };
            if ok && stable {
                found = Some((eps, fails, total));
                break;
            }
        }
        match found {
            Some((eps, fails, total)) => {
                r.near(format!("goods 3x7 p={p}, eps={eps}: all {total} optima fail PROP1"), fails as f64, total as f64, 0.0);
                r.note(format!("3x7 p={p}: single-good property first stable at eps = {eps}"));
            }
            None => r.flag(format!("goods 3x7 p={p}: eps search found the single-good property"), false),
        }
    }
    Ok(r)
}

// ---------------------------------------------------------------------------
// welfarist impossibility

/// Costs of a two-agent chores allocation in which both agents are indifferent
/// among chores `2..m`, parameterized by agent 2's share `y` of chore 1 and its
/// total share `z` of the rest.
#[derive(Clone, Copy, Debug)]
pub struct ReducedTwoAgent {
    c: [[f64; 2]; 2],
    rest: f64,
}

impl ReducedTwoAgent {
    pub fn new(inst: &Instance) -> Result<Self> {
        if inst.n() != 2 || inst.kind() != Kind::Chores || inst.m() < 2 {
            return Err(Error::Precondition("needs a two-agent chores instance with at least two chores".into()));
        }
        for i in 0..2 {
            if inst.row(i)[1..].iter().any(|&v| v != inst.value(i, 1)) {
                return Err(Error::Precondition(format!("agent {i} is not indifferent among chores 2..m")));
            }
        }
        Ok(ReducedTwoAgent {
            c: [[inst.value(0, 0), inst.value(0, 1)], [inst.value(1, 0), inst.value(1, 1)]],
            rest: (inst.m() - 1) as f64,
        })
    }

    /// `[[c1(x1), c1(x2)], [c2(x2), c2(x1)]]`.
    pub fn costs(&self, y: f64, z: f64) -> [[f64; 2]; 2] {
        let c = &self.c;
        let c1_own = c[0][0] * (1.0 - y) + c[0][1] * (self.rest - z);
        let c1_other = c[0][0] * y + c[0][1] * z;
        let c2_own = c[1][0] * y + c[1][1] * z;
        let c2_other = c[1][0] * (1.0 - y) + c[1][1] * (self.rest - z);
        [[c1_own, c1_other], [c2_own, c2_other]]
    }

    pub fn is_beta_ef(&self, y: f64, z: f64, beta: f64) -> bool {
        let k = self.costs(y, z);
        k[0][0] <= beta * k[0][1] + 1e-9 && k[1][0] <= beta * k[1][1] + 1e-9
    }

    /// Calls `f(y, z)` on the grid with spacing `step` in both coordinates.
    pub fn for_each_grid_point(&self, step: f64, mut f: impl FnMut(f64, f64)) {
        let ny = (1.0 / step).round() as usize;
        let nz = (self.rest / step).round() as usize;
        for a in 0..=ny {
            for b in 0..=nz {
                f(a as f64 / ny as f64, self.rest * b as f64 / nz as f64);
            }
        }
    }
}

fn claim_non_norm(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("claim-non-norm-ef1");
    let cfg = &ctx.manifest.welfarist;
    let beta = cfg.beta as f64;
    let inst = Named::I1 { beta: cfg.beta }.generate()?;
    let m = inst.m() as f64;
    let red = ReducedTwoAgent::new(&inst)?;
    let (mut min_c1, mut min_c2, mut count) = (f64::INFINITY, f64::INFINITY, 0usize);
    red.for_each_grid_point(cfg.step, |y, z| {
        if red.is_beta_ef(y, z, beta) {
            let k = red.costs(y, z);
            min_c1 = min_c1.min(k[0][0]);
            min_c2 = min_c2.min(k[1][0]);
            count += 1;
        }
    });
    r.at_least(format!("min c1 over {count} beta-EF grid points"), min_c1, 1.5, 0.01);
    r.at_least("min c2 over beta-EF grid points", min_c2, m + 1.0, 0.05);
    if cfg.beta == 1 {
        // With beta = 1 agent 2's constraint pins agent 1 to at least 2 - 2/m + 2/m^2 units.
        r.near("min c1 vs 2 - 2/m + 2/m^2", min_c1, 2.0 - 2.0 / m + 2.0 / (m * m), cfg.step);
    }
    r.above("beta-EF grid points found", count as f64, 0.0);
    Ok(r)
}

/// Outcome of minimizing a cost aggregator over the grids of I1 and I2.
#[derive(Clone, Debug, PartialEq)]
pub struct WelfaristOutcome {
    /// Whether some grid minimizer of I1 (resp. I2) is beta-EF.
    pub some_minimizer_ef: [bool; 2],
    /// `C(m-1, 1)` and `C(1, m-1)`.
    pub corner_costs: [f64; 2],
}

/// Grid minimizers of `aggregate(c1, c2)` on I1(beta) and I2(beta).
pub fn welfarist_conflict(beta: u32, step: f64, aggregate: &dyn Fn(f64, f64) -> f64) -> Result<WelfaristOutcome> {
    let mut some = [false; 2];
    for (k, named) in [Named::I1 { beta }, Named::I2 { beta }].into_iter().enumerate() {
        let red = ReducedTwoAgent::new(&named.generate()?)?;
        let mut pts = Vec::new();
        red.for_each_grid_point(step, |y, z| {
            let c = red.costs(y, z);
            pts.push((aggregate(c[0][0], c[1][0]), y, z));
        });
        let best = pts.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        some[k] = pts
            .iter()
            .filter(|t| t.0 <= best + 1e-12 * best.abs())
            .any(|&(_, y, z)| red.is_beta_ef(y, z, beta as f64));
    }
    let m = (2 * beta + 2) as f64;
    Ok(WelfaristOutcome {
        some_minimizer_ef: some,
        corner_costs: [aggregate(m - 1.0, 1.0), aggregate(1.0, m - 1.0)],
    })
}

type Aggregator = (&'static str, fn(f64, f64) -> f64);

pub const AGGREGATORS: [Aggregator; 5] = [
    ("sum", |a, b| a + b),
    ("max", f64::max),
    ("sum of squares", |a, b| a * a + b * b),
    ("sum of square roots", |a, b| a.sqrt() + b.sqrt()),
    ("product of (1 + c)", |a, b| (1.0 + a) * (1.0 + b)),
];

fn welfarist(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("thm-non-norm-neg-res");
    let cfg = &ctx.manifest.welfarist;
    let m = (2 * cfg.beta + 2) as f64;
    for (name, agg) in AGGREGATORS {
        let o = welfarist_conflict(cfg.beta, cfg.step, &agg)?;
        r.flag(
            format!("{name}: on I1 or I2 no grid minimizer is beta-EF"),
            !(o.some_minimizer_ef[0] && o.some_minimizer_ef[1]),
        );
        // Both implications of the claim, one per instance; they cannot hold together.
        let i1 = agg(1.5, m + 1.0) > agg(1.0, m - 1.0);
        let i2 = agg(m + 1.0, 1.5) > agg(m - 1.0, 1.0);
        r.flag(format!("{name}: C(1.5, m+1) > C(1, m-1) and C(m+1, 1.5) > C(m-1, 1)"), i1 && i2);
        r.note(format!(
            "{name}: C(m-1,1) = {:.4}, C(1,m-1) = {:.4}, beta-EF minimizer on I1/I2: {:?}",
            o.corner_costs[0], o.corner_costs[1], o.some_minimizer_ef
        ));
    }
    Ok(r)
}

fn random_fractional(rng: &mut SampleRng, n: usize, m: usize, floor: f64) -> FractionalAllocation {
    let mut x = vec![0.0; n * m];
    for j in 0..m {
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(floor..1.0)).collect();
        let s: f64 = w.iter().sum();
        for i in 0..n {
            x[i * m + j] = w[i] / s;
        }
    }
    FractionalAllocation::from_flat(n, m, x)
}

fn bprop_to_ef(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("cor-neg-result-bprop");
    let mut rng = ctx.rng(9);
    let (mut tested, mut bad) = (0, 0);
    for _ in 0..ctx.manifest.random.instances * 20 {
        let m = rng.random_range(2..=6);
        let inst = sample::dense(&mut rng, Kind::Chores, 2, m);
        let x = random_fractional(&mut rng, 2, m, 0.0);
        let beta = rng.random_range(1.0..2.0);
        if check_prop(&inst, &x, beta)?.holds {
            tested += 1;
            bad += usize::from(!check_ef(&inst, &x, beta / (2.0 - beta))?.holds);
        }
    }
    r.none(format!("beta-PROP allocations that are not beta/(2-beta)-EF (of {tested})"), bad);
    r.above("beta-PROP allocations sampled", tested as f64, 0.0);
    let inst = Instance::new(Kind::Chores, vec![vec![0.5, 0.5], vec![0.5, 0.5]])?;
    let x = FractionalAllocation::new(vec![vec![0.75, 0.0], vec![0.25, 1.0]])?;
    r.flag(
        "1.5-PROP example is 3-EF",
        check_prop(&inst, &x, 1.5)?.holds && check_ef(&inst, &x, 3.0)?.holds,
    );
    Ok(r)
}

fn div_to_indiv(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("lemma-div-to-indiv");
    let mut rng = ctx.rng(10);
    let mut err: f64 = 0.0;
    let mut piece_excess = f64::NEG_INFINITY;
    for t in 0..ctx.manifest.random.instances {
        let kind = if t % 2 == 0 { Kind::Goods } else { Kind::Chores };
        let (n, m) = random_shape(&mut rng, ctx.manifest.random.max_agents, 6);
        let inst = sample::dense(&mut rng, kind, n, m);
        let x = random_fractional(&mut rng, n, m, 0.0);
        let z = [1, 2, 5, 16][t % 4];
        let d = discretize(&inst, &x, z)?;
        let u = d.utilities(&d.replicating_counts());
        for (i, (a, b)) in u.iter().zip(inst.own_values(&x)).enumerate() {
            err = err.max((a - b).abs() / inst.row_sum(i));
        }
        let max_entry = (0..n)
            .map(|i| inst.row(i).iter().fold(0.0f64, |a, &v| a.max(v)) / inst.row_sum(i))
            .fold(0.0, f64::max);
        let piece = (0..n).map(|l| d.max_normalized_piece(l)).fold(0.0, f64::max);
        piece_excess = piece_excess.max(piece - max_entry / z as f64);
    }
    r.at_most("max normalized gap between replicating and fractional bundles", err, 0.0, 1e-12);
    r.at_most("largest piece exceeds max normalized entry / z by", piece_excess, 0.0, 1e-15);
    Ok(r)
}

// ---------------------------------------------------------------------------
// lemmas and numerics

fn lemma_properties(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("lemma-properties");
    let target = ctx.manifest.lemmas.samples;
    let budget = target * 200;
    let mut rng = ctx.rng(11);

    type Draw = Box<dyn Fn(&mut SampleRng) -> Result<bool>>;
    let suites: [(&str, Draw); 3] = [
        (
            "squeeze",
            Box::new(|rng: &mut SampleRng| {
                let mut v = || rng.random_range(1e-6..1.0);
                let (a, b, al, be) = (v(), v(), v(), v());
                let p = 50.0 - rng.random_range(0.0..48.0);
                lemma_squeeze_predicate(a, b, al, be, p)
            }),
        ),
        (
            "chores algebra",
            Box::new(|rng: &mut SampleRng| {
                let mut v = || rng.random_range(0.0..1.0);
                let (a, al, be) = (v(), v(), v());
                lemma_chores_algebra_predicate(a, al, be).map(|(x, y)| x && y)
            }),
        ),
        (
            "goods algebra",
            Box::new(|rng: &mut SampleRng| {
                let mut v = || rng.random_range(1e-6..1.0);
                let (a, b, al, be) = (v(), v(), v(), v());
                let p = if rng.random_bool(0.05) { 0.0 } else { -rng.random_range(0.0..50.0) };
                lemma_goods_algebra_predicate(a, b, al, be, p)
            }),
        ),
    ];
    for (name, draw) in suites {
        let (mut accepted, mut tries, mut bad) = (0, 0, 0);
        while accepted < target && tries < budget {
            tries += 1;
            match draw(&mut rng) {
                Ok(v) => {
                    accepted += 1;
                    bad += usize::from(!v);
                }
                Err(Error::Precondition(_)) => {}
                Err(e) => return Err(e),
            }
        }
        r.none(format!("{name}: counterexamples"), bad);
        r.at_least(format!("{name}: accepted hypothesis tuples"), accepted as f64, target as f64, 0.0);
        r.note(format!("{name}: acceptance rate {:.3}", accepted as f64 / tries as f64));
    }
    r.flag("squeeze example (1, 0.5, 0.9, 0.6), p=3", lemma_squeeze_predicate(1.0, 0.5, 0.9, 0.6, 3.0)?);
    r.flag("squeeze example (1, 0.2, 0.9, 0.5) is rejected", lemma_squeeze_predicate(1.0, 0.2, 0.9, 0.5, 3.0).is_err());
    r.flag("chores algebra example (0.1, 0.2, 0.3)", lemma_chores_algebra_predicate(0.1, 0.2, 0.3)? == (true, true));
    r.flag("goods algebra example (0.3, 0.9, 0.4, 0.8), p=-2", lemma_goods_algebra_predicate(0.3, 0.9, 0.4, 0.8, -2.0)?);
    Ok(r)
}

fn numerics(ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("numerics-gradient");
    let mut rng = ctx.rng(12);
    let mut worst_rel: f64 = 0.0;
    for t in 0..ctx.manifest.numerics.gradient_points {
        let kind = if t % 2 == 0 { Kind::Goods } else { Kind::Chores };
        let p = match kind {
            Kind::Goods => [0.0, -0.5, -1.0, -3.0][t / 2 % 4],
            Kind::Chores => [1.0, 1.5, 2.0, 4.0][t / 2 % 4],
        };
        let p = pm(p);
        let (n, m) = random_shape(&mut rng, 4, 5);
        let inst = sample::dense(&mut rng, kind, n, m).normalize();
        let x = random_fractional(&mut rng, n, m, 0.1);
        let g = surrogate_gradient(&inst, &x, p)?;
        let s = Surrogate::new(kind, p)?;
        let f = |x: &[f64]| {
            let u: Vec<f64> = (0..n).map(|i| (0..m).map(|j| x[i * m + j] * inst.value(i, j)).sum()).collect();
            s.eval(&u)
        };
        let base = x.as_slice().to_vec();
        let h = 1e-6;
        for k in 0..n * m {
            let (mut a, mut b) = (base.clone(), base.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (f(&a) - f(&b)) / (2.0 * h);
            worst_rel = worst_rel.max((fd - g[k]).abs() / g[k].abs().max(1e-8));
        }
        debug_assert!((f(&base) - surrogate_objective(&inst, &x, p)?).abs() <= 1e-12 * f(&base).abs());
    }
    r.at_most(
        format!("max relative gradient error over {} points", ctx.manifest.numerics.gradient_points),
        worst_rel,
        1e-5,
        0.0,
    );

    let (mut mono, mut homog) = (0, 0);
    for _ in 0..ctx.manifest.numerics.mean_vectors {
        let len = rng.random_range(1..8);
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(0.01..10.0)).collect();
        let p = rng.random_range(-20.0..20.0);
        let d = rng.random_range(0.0..5.0);
        let c = rng.random_range(0.01..100.0);
        let lo = p_mean(&v, pm(p))?;
        mono += usize::from(lo > p_mean(&v, pm(p + d))? * (1.0 + 1e-12));
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        homog += usize::from((p_mean(&scaled, pm(p))? - c * lo).abs() > 1e-10 * c * lo);
    }
    let k = ctx.manifest.numerics.mean_vectors;
    r.none(format!("power-mean monotonicity violations over {k} vectors"), mono);
    r.none(format!("power-mean homogeneity violations over {k} vectors"), homog);
    let v = [1.0, 2.0, 4.0];
    r.near("harmonic mean of (1, 2, 4)", p_mean(&v, pm(-1.0))?, 3.0 / 1.75, 1e-14);
    r.near("geometric mean of (1, 2, 4)", p_mean(&v, pm(0.0))?, 2.0, 1e-14);
    r.near("minimum of (1, 2, 4)", p_mean(&v, PMean::NegInf)?, 1.0, 0.0);
    Ok(r)
}

/// Egalitarian optimum of normalized utilities, as a linear program.
pub fn maximin_allocation(inst: &Instance) -> Result<(FractionalAllocation, f64)> {
    if inst.kind() != Kind::Goods {
        return Err(Error::UnsupportedRegime("maximin is implemented for goods".into()));
    }
    let norm = inst.normalize();
    let (n, m) = (inst.n(), inst.m());
    let t = n * m;
    let mut lp = LinearProgram::new(t + 1);
    lp.set_objective(t, 1.0);
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = (0..m).map(|j| (i * m + j, norm.value(i, j))).collect();
        row.push((t, -1.0));
        lp.add_constraint(&row, Relation::Ge, 0.0);
    }
    for j in 0..m {
        let col: Vec<(usize, f64)> = (0..n).map(|i| (i * m + j, 1.0)).collect();
        lp.add_constraint(&col, Relation::Eq, 1.0);
    }
    let sol = lp.solve()?;
    Ok((FractionalAllocation::from_flat(n, m, sol.x[..t].to_vec()), sol.objective))
}

fn not_ef(_ctx: &Context) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("lemma-not-ef");
    let inst = Named::NotEF3Agents.generate()?;
    let (x, value) = maximin_allocation(&inst)?;
    r.near("x_21", x.get(1, 0), 7.0 / 17.0, 1e-4);
    r.near("x_31", x.get(2, 0), 10.0 / 17.0, 1e-4);
    r.near("x_12", x.get(0, 1), 8.0 / 17.0, 1e-4);
    r.near("x_22", x.get(1, 1), 9.0 / 17.0, 1e-4);
    r.near("maximin value", value, 8.0 / 17.0, 1e-9);
    let audit = check_ef(&inst, &x, 1.0)?;
    r.flag(
        "EF audit fails with agent 1 envying agent 2",
        !audit.holds && audit.witness.as_ref().is_some_and(|w| w.agent == 0 && w.other == Some(1)),
    );
    let envy = inst.bundle_value(&x, 0, 1) - inst.bundle_value(&x, 0, 0);
    r.near("envy of agent 1 toward agent 2", envy, 1.0 / 17.0, 1e-4);
    Ok(r)
}
