//! Power means and the smooth surrogates minimized by the solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{FractionalAllocation, Instance, Kind, NormalizedInstance, Shares};

/// Exponents with magnitude above this are treated as infinite.
pub const P_CLAMP: f64 = 700.0;

/// The exponent of a power mean. Infinite exponents select max or min.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PMean {
    Finite(f64),
    NegInf,
    PosInf,
}

impl PMean {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() {
            return Err(Error::Param("p is NaN".into()));
        }
        Ok(if p > P_CLAMP {
            PMean::PosInf
        } else if p < -P_CLAMP {
            PMean::NegInf
        } else {
            PMean::Finite(p)
        })
    }

    pub fn value(self) -> f64 {
        match self {
            PMean::Finite(p) => p,
            PMean::NegInf => f64::NEG_INFINITY,
            PMean::PosInf => f64::INFINITY,
        }
    }
}

impl From<PMean> for f64 {
    fn from(p: PMean) -> f64 {
        p.value()
    }
}

/// `((1/n) sum s_i^p)^(1/p)`, the geometric mean at `p = 0`, max and min at the infinities.
pub fn p_mean(values: &[f64], p: PMean) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Dimension("p-mean of an empty vector".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("p-mean input {v} is not a finite non-negative number")));
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let n = values.len() as f64;
    let out = match p {
        PMean::PosInf => max,
        PMean::NegInf => min,
        PMean::Finite(p) if p <= 0.0 && min == 0.0 => 0.0,
        PMean::Finite(p) if p == 0.0 => (values.iter().map(|v| v.ln()).sum::<f64>() / n).exp(),
        PMean::Finite(_) if max == 0.0 => 0.0,
        PMean::Finite(p) => {
            // Scale by an extreme entry so large |p| does not overflow.
            let scale = if p > 0.0 { max } else { min };
            let mean = values.iter().map(|v| (v / scale).powf(p)).sum::<f64>() / n;
            scale * mean.powf(1.0 / p)
        }
    };
    Ok(out)
}

/// The p-mean of the agents' values under row-normalized valuations.
pub fn normalized_p_mean<A: Shares + ?Sized>(instance: &Instance, alloc: &A, p: PMean) -> Result<f64> {
    instance.check_allocation(alloc)?;
    let norm = instance.normalize();
    p_mean(&norm.own_values(alloc), p)
}

/// Approximation factor `n^(1/p)` achieved by the chores optimum.
pub fn prop_bound(n: usize, p: f64) -> Result<f64> {
    if n == 0 || !(p >= 1.0) {
        return Err(Error::Param(format!("prop_bound needs n >= 1 and p >= 1, got n = {n}, p = {p}")));
    }
    Ok((n as f64).powf(1.0 / p))
}

/// The convex surrogate whose minimizers are the p-mean optima.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Surrogate {
    /// Goods with `p = -k < 0`: `sum u_i^(-k)`.
    GoodsPower { k: f64 },
    /// Goods with `p = 0`: `-sum ln u_i`.
    GoodsLog,
    /// Chores with `p >= 1`: `sum c_i^p`.
    ChoresPower { p: f64 },
}

impl Surrogate {
    pub fn new(kind: Kind, p: PMean) -> Result<Self> {
        match (kind, p) {
            (Kind::Goods, PMean::Finite(p)) if p == 0.0 => Ok(Surrogate::GoodsLog),
            (Kind::Goods, PMean::Finite(p)) if p < 0.0 => Ok(Surrogate::GoodsPower { k: -p }),
            (Kind::Chores, PMean::Finite(p)) if p >= 1.0 => Ok(Surrogate::ChoresPower { p }),
            (Kind::Goods, p) => Err(Error::UnsupportedRegime(format!(
                "goods need a finite p <= 0, got {}",
                p.value()
            ))),
            (Kind::Chores, p) => Err(Error::UnsupportedRegime(format!(
                "chores need a finite p >= 1, got {}",
                p.value()
            ))),
        }
    }

    pub fn kind(self) -> Kind {
        match self {
            Surrogate::ChoresPower { .. } => Kind::Chores,
            _ => Kind::Goods,
        }
    }

    /// Objective from the agents' normalized values. Infinite when a goods utility is zero.
    pub fn eval(self, u: &[f64]) -> f64 {
        match self {
            Surrogate::GoodsPower { k } => u
                .iter()
                .map(|&v| if v > 0.0 { v.powf(-k) } else { f64::INFINITY })
                .sum(),
            Surrogate::GoodsLog => u
                .iter()
                .map(|&v| if v > 0.0 { -v.ln() } else { f64::INFINITY })
                .sum(),
            Surrogate::ChoresPower { p } => u.iter().map(|&c| c.powf(p)).sum(),
        }
    }

    /// Per-agent weight `w_i` such that the marginal of item `j` for agent `i` is `w_i * v_ij`.
    ///
    /// For goods this is the negated gradient factor, for chores the gradient factor.
    pub fn weight(self, u: f64) -> f64 {
        match self {
            Surrogate::GoodsPower { k } => k * u.powf(-(k + 1.0)),
            Surrogate::GoodsLog => 1.0 / u,
            Surrogate::ChoresPower { p } => {
                if p == 1.0 {
                    1.0
                } else {
                    p * u.powf(p - 1.0)
                }
            }
        }
    }

    /// Sign that turns `weight * v_ij` into the partial derivative of the objective.
    pub fn gradient_sign(self) -> f64 {
        match self {
            Surrogate::ChoresPower { .. } => 1.0,
            _ => -1.0,
        }
    }
}

/// Surrogate objective of a fractional allocation.
pub fn surrogate_objective(inst: &NormalizedInstance, x: &FractionalAllocation, p: PMean) -> Result<f64> {
    inst.check_allocation(x)?;
    let s = Surrogate::new(inst.kind(), p)?;
    Ok(s.eval(&inst.own_values(x)))
}

/// Gradient of the surrogate in row-major `n x m` layout.
pub fn surrogate_gradient(inst: &NormalizedInstance, x: &FractionalAllocation, p: PMean) -> Result<Vec<f64>> {
    inst.check_allocation(x)?;
    let s = Surrogate::new(inst.kind(), p)?;
    let u = inst.own_values(x);
    let (n, m) = (inst.n(), inst.m());
    let mut g = vec![0.0; n * m];
    for i in 0..n {
        let w = s.gradient_sign() * s.weight(u[i]);
        for j in 0..m {
            g[i * m + j] = w * inst.value(i, j);
        }
    }
    Ok(g)
}
