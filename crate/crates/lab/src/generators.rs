//! Closed-form instances used by the experiments.
//!
//! Every generator validates its parameters and returns the exact matrix, so
//! regenerating with equal parameters gives bitwise-equal instances.

use serde::{Deserialize, Serialize};

use pmean_fair::{Error, Instance, Kind, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum Named {
    /// Two agents, `2 beta + 2` chores; agent 1 costs 1 everywhere, agent 2 costs `m` except on chore 1.
    I1 { beta: u32 },
    /// [`Named::I1`] with the agents swapped.
    I2 { beta: u32 },
    ChoresTightness { n: usize, p: f64 },
    GoodsNegPGt1 { m: usize },
    GoodsNegPEq1 { v11: f64, v21: f64 },
    GoodsNegPLt1 { eps: f64, delta: f64 },
    Goods3x7 { eps: f64 },
    DivGoodsCE { eps: f64, delta: f64 },
    DivChoresCE { eps: f64, delta: f64 },
    ChoresNegPLt1 { m: usize },
    ChoresNegPEq1 { m: usize, eps: f64 },
    ChoresNegPBetween { eps: f64, delta: f64, p: f64 },
    ChoresDivPEq1 { c11: f64, c21: f64 },
    NotEF3Agents,
}

/// Loose parameter bag, as collected from the command line.
#[derive(Clone, Debug, Default)]
pub struct Params {
    pub beta: Option<u32>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub p: Option<f64>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub v11: Option<f64>,
    pub v21: Option<f64>,
    pub c11: Option<f64>,
    pub c21: Option<f64>,
}

pub const NAMES: [&str; 14] = [
    "I1",
    "I2",
    "ChoresTightness",
    "GoodsNegPGt1",
    "GoodsNegPEq1",
    "GoodsNegPLt1",
    "Goods3x7",
    "DivGoodsCE",
    "DivChoresCE",
    "ChoresNegPLt1",
    "ChoresNegPEq1",
    "ChoresNegPBetween",
    "ChoresDivPEq1",
    "NotEF3Agents",
];

fn need<T>(v: Option<T>, name: &str, param: &str) -> Result<T> {
    v.ok_or_else(|| Error::Param(format!("{name} requires --{param}")))
}

fn check(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Param(format!("constraint violated: {what}")))
    }
}

impl Named {
    pub fn from_params(name: &str, q: &Params) -> Result<Self> {
        Ok(match name {
            "I1" => Named::I1 { beta: need(q.beta, name, "beta")? },
            "I2" => Named::I2 { beta: need(q.beta, name, "beta")? },
            "ChoresTightness" => Named::ChoresTightness {
                n: need(q.n, name, "n")?,
                p: need(q.p, name, "p")?,
            },
            "GoodsNegPGt1" => Named::GoodsNegPGt1 { m: need(q.m, name, "m")? },
            "GoodsNegPEq1" => Named::GoodsNegPEq1 {
                v11: need(q.v11, name, "v11")?,
                v21: need(q.v21, name, "v21")?,
            },
            "GoodsNegPLt1" => Named::GoodsNegPLt1 {
                eps: need(q.eps, name, "eps")?,
                delta: need(q.delta, name, "delta")?,
            },
            "Goods3x7" => Named::Goods3x7 { eps: need(q.eps, name, "eps")? },
            "DivGoodsCE" => Named::DivGoodsCE {
                eps: need(q.eps, name, "eps")?,
                delta: need(q.delta, name, "delta")?,
            },
            "DivChoresCE" => Named::DivChoresCE {
                eps: need(q.eps, name, "eps")?,
                delta: need(q.delta, name, "delta")?,
            },
            "ChoresNegPLt1" => Named::ChoresNegPLt1 { m: need(q.m, name, "m")? },
            "ChoresNegPEq1" => Named::ChoresNegPEq1 {
                m: need(q.m, name, "m")?,
                eps: need(q.eps, name, "eps")?,
            },
            "ChoresNegPBetween" => Named::ChoresNegPBetween {
                eps: need(q.eps, name, "eps")?,
                delta: need(q.delta, name, "delta")?,
                p: need(q.p, name, "p")?,
            },
            "ChoresDivPEq1" => Named::ChoresDivPEq1 {
                c11: need(q.c11, name, "c11")?,
                c21: need(q.c21, name, "c21")?,
            },
            "NotEF3Agents" => Named::NotEF3Agents,
            _ => return Err(Error::Param(format!("unknown instance name {name:?}; expected one of {NAMES:?}"))),
        })
    }

    pub fn generate(&self) -> Result<Instance> {
        match *self {
            Named::I1 { beta } => {
                let (c1, c2) = welfarist_rows(beta)?;
                Instance::new(Kind::Chores, vec![c1, c2])
            }
            Named::I2 { beta } => {
                let (c1, c2) = welfarist_rows(beta)?;
                Instance::new(Kind::Chores, vec![c2, c1])
            }
            Named::ChoresTightness { n, p } => {
                check(p > 1.0, "p > 1")?;
                check(n as f64 > p, "n > p")?;
                let c11 = 1.0 - ((p - 1.0) / (n as f64 - 1.0)).powf((p - 1.0) / p);
                let mut rows = vec![vec![c11, 1.0 - c11]];
                rows.extend((1..n).map(|_| vec![0.0, 1.0]));
                Instance::new(Kind::Chores, rows)
            }
            Named::GoodsNegPGt1 { m } => {
                check(m >= 1, "m >= 1")?;
                let v = 1.0 / m as f64;
                Instance::new(Kind::Goods, vec![vec![v; m]; 2])
            }
            Named::GoodsNegPEq1 { v11, v21 } => {
                check(v11 < 1.0, "v11 < 1")?;
                check(v11 > v21, "v11 > v21")?;
                check(v21 > 0.5, "v21 > 1/2")?;
                Instance::new(Kind::Goods, vec![vec![v11, 1.0 - v11], vec![v21, 1.0 - v21]])
            }
            Named::GoodsNegPLt1 { eps, delta } | Named::DivGoodsCE { eps, delta } => {
                check(eps > 0.0, "0 < eps")?;
                check(eps < delta, "eps < delta")?;
                check(delta <= 0.5, "delta <= 1/2")?;
                Instance::new(
                    Kind::Goods,
                    vec![vec![0.5 + eps, 0.5 - eps], vec![0.5 + delta, 0.5 - delta]],
                )
            }
            Named::Goods3x7 { eps } => {
                check(eps > 0.0, "0 < eps")?;
                check(eps < 1.0, "eps < 1")?;
                let mut second = vec![eps / 6.0; 6];
                second.push(1.0 - eps);
                let mut third = vec![0.0; 6];
                third.push(1.0);
                Instance::new(Kind::Goods, vec![vec![1.0 / 7.0; 7], second, third])
            }
            Named::DivChoresCE { eps, delta } => chores_ce(eps, delta),
            Named::ChoresNegPBetween { eps, delta, p } => {
                check(p > 1.0 && p < 2.0, "1 < p < 2")?;
                check(delta < eps + (2.0 * eps + 1.0) * (1.0 - p / 2.0), "delta < eps + (2 eps + 1)(1 - p/2)")?;
                chores_ce(eps, delta)
            }
            Named::ChoresNegPLt1 { m } => {
                check(m >= 1, "m >= 1")?;
                let c = 1.0 / m as f64;
                Instance::new(Kind::Chores, vec![vec![c; m]; 2])
            }
            Named::ChoresNegPEq1 { m, eps } => {
                check(m >= 2, "m >= 2")?;
                check(eps > 0.0, "eps > 0")?;
                let inv = 1.0 / m as f64;
                check((m as f64 - 1.0) * eps < inv, "(m - 1) eps < 1/m")?;
                let mut second = vec![inv + eps; m - 1];
                second.push(inv - (m as f64 - 1.0) * eps);
                Instance::new(Kind::Chores, vec![vec![inv; m], second])
            }
            Named::ChoresDivPEq1 { c11, c21 } => {
                check(c11 >= 0.0, "c11 >= 0")?;
                check(c11 < c21, "c11 < c21")?;
                check(c21 < 0.5, "c21 < 1/2")?;
                Instance::new(Kind::Chores, vec![vec![c11, 1.0 - c11], vec![c21, 1.0 - c21]])
            }
            Named::NotEF3Agents => Instance::new(Kind::Goods, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![0.8, 0.2]]),
        }
    }
}

fn welfarist_rows(beta: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    check(beta >= 1, "beta >= 1")?;
    let m = 2 * beta as usize + 2;
    let mut c2 = vec![m as f64; m];
    c2[0] = 1.0;
    Ok((vec![1.0; m], c2))
}

fn chores_ce(eps: f64, delta: f64) -> Result<Instance> {
    check(eps > 0.0, "0 < eps")?;
    check(eps < delta, "eps < delta")?;
    check(delta <= 0.5, "delta <= 1/2")?;
    Instance::new(
        Kind::Chores,
        vec![vec![0.5 + delta, 0.5 - delta], vec![0.5 + eps, 0.5 - eps]],
    )
}

/// Optimal fraction of good 1 kept by agent 1 in the two-good counterexample, for `0 < p < 1`.
pub fn goods_split_closed_form(eps: f64, delta: f64, p: f64) -> f64 {
    let e = p / (p - 1.0);
    let a = (0.5 + delta).powf(e);
    let b = (0.5 + eps).powf(e);
    (a - (0.5 - eps) * (0.5 + eps).powf(1.0 / (p - 1.0))) / (a + b)
}

/// Optimal fraction of chore 1 taken by agent 1 in the two-chore counterexample, for `1 < p < 2`.
pub fn chores_split_closed_form(eps: f64, delta: f64, p: f64) -> f64 {
    let e = p / (p - 1.0);
    let a = (0.5 + eps).powf(e);
    let b = (0.5 + delta).powf(e);
    (a - (0.5 - delta) * (0.5 + delta).powf(1.0 / (p - 1.0))) / (b + a)
}

/// `f(n, p)` of the chores tightness bound: `n/(n-1) (p-1)/p ((n-1)/(n(p-1)))^{1/p}`.
pub fn tightness_factor(n: usize, p: f64) -> f64 {
    let n = n as f64;
    n / (n - 1.0) * (p - 1.0) / p * ((n - 1.0) / (n * (p - 1.0))).powf(1.0 / p)
}
