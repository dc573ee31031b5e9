//! Projected gradient solver for the divisible p-mean optimum and KKT certificates.
//!
//! The feasible set is a product of probability simplices, one per item column.
//! Steps use a Barzilai-Borwein trial length with non-monotone Armijo
//! backtracking. Convergence is declared on the KKT residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{FractionalAllocation, Instance, Kind, NormalizedInstance};
use crate::market::{ChoresEquilibrium, GoodsEquilibrium, HOLD_TOL, RATIO_TOL};
use crate::welfare::{PMean, Surrogate};

/// Utilities below this make a goods step infeasible.
pub const UTILITY_FLOOR: f64 = 1e-12;
const NONMONOTONE_MEMORY: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// Trial step of the first iteration.
    pub step: f64,
    pub backtrack: f64,
    pub armijo: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kkt_tolerance: 1e-8,
            max_iterations: 200_000,
            step: 1.0,
            backtrack: 0.5,
            armijo: 1e-4,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.kkt_tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Param("kkt_tolerance must be > 0 and max_iterations >= 1".into()));
        }
        if !(self.step > 0.0 && self.backtrack > 0.0 && self.backtrack < 1.0 && self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::Param("step > 0 and backtrack, armijo in (0, 1) required".into()));
        }
        Ok(())
    }
}

/// Item duals, non-negativity multipliers and the two residuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    /// Prices for goods, rewards for chores.
    pub duals_items: Vec<f64>,
    pub duals_nonneg: Vec<Vec<f64>>,
    /// Primal infeasibility plus negative parts of the multipliers.
    pub stationarity_residual: f64,
    /// `max x_ij * kappa_ij / price_j`.
    pub complementarity_residual: f64,
}

impl KktCertificate {
    pub fn residual(&self) -> f64 {
        self.stationarity_residual.max(self.complementarity_residual)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub allocation: FractionalAllocation,
    pub certificate: KktCertificate,
    pub iterations: usize,
    pub objective: f64,
}

/// Minimizes the goods surrogate for `p <= 0`.
pub fn solve_goods(inst: &Instance, p: f64, cfg: &SolverConfig) -> Result<Solution> {
    if inst.kind() != Kind::Goods {
        return Err(Error::Param("solve_goods needs a goods instance".into()));
    }
    solve(inst, p, cfg)
}

/// Minimizes the chores surrogate for `p >= 1`.
pub fn solve_chores(inst: &Instance, p: f64, cfg: &SolverConfig) -> Result<Solution> {
    if inst.kind() != Kind::Chores {
        return Err(Error::Param("solve_chores needs a chores instance".into()));
    }
    solve(inst, p, cfg)
}

/// Dispatches on the instance kind.
pub fn solve(inst: &Instance, p: f64, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let s = Surrogate::new(inst.kind(), PMean::new(p)?)?;
    let norm = inst.normalize();
    Pgd::new(&norm, s, cfg).run()
}

/// Marginal weights `w_i` and the item duals implied by them.
struct Duals {
    weights: Vec<f64>,
    prices: Vec<f64>,
}

fn duals(inst: &NormalizedInstance, s: Surrogate, u: &[f64]) -> Duals {
    let (n, m) = (inst.n(), inst.m());
    let weights: Vec<f64> = u.iter().map(|&v| s.weight(v)).collect();
    let prices = (0..m)
        .map(|j| match s.kind() {
            Kind::Goods => (0..n).map(|i| weights[i] * inst.value(i, j)).fold(0.0, f64::max),
            Kind::Chores => {
                if (0..n).any(|i| inst.value(i, j) == 0.0) {
                    0.0
                } else {
                    (0..n)
                        .map(|i| weights[i] * inst.value(i, j))
                        .fold(f64::INFINITY, f64::min)
                }
            }
        })
        .collect();
    Duals { weights, prices }
}

fn certificate_from(inst: &NormalizedInstance, s: Surrogate, x: &FractionalAllocation) -> KktCertificate {
    let (n, m) = (inst.n(), inst.m());
    let u = inst.own_values(x);
    if s.kind() == Kind::Goods && u.iter().any(|&v| v <= 0.0) {
        return KktCertificate {
            duals_items: vec![f64::INFINITY; m],
            duals_nonneg: vec![vec![f64::INFINITY; m]; n],
            stationarity_residual: f64::INFINITY,
            complementarity_residual: f64::INFINITY,
        };
    }
    let d = duals(inst, s, &u);
    let mut kappa = vec![vec![0.0; m]; n];
    let mut stat: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for j in 0..m {
        stat = stat.max((x.column_sum(j) - 1.0).abs());
        let marg_max = (0..n).map(|i| d.weights[i] * inst.value(i, j)).fold(0.0, f64::max);
        let scale = if d.prices[j] > 0.0 {
            d.prices[j]
        } else if marg_max > 0.0 {
            marg_max
        } else {
            1.0
        };
        for i in 0..n {
            let xij = x.get(i, j);
            stat = stat.max(-xij);
            let g = d.weights[i] * inst.value(i, j);
            let k = match s.kind() {
                Kind::Goods => d.prices[j] - g,
                Kind::Chores => g - d.prices[j],
            };
            kappa[i][j] = k.max(0.0);
            stat = stat.max(-k / scale);
            comp = comp.max(xij.max(0.0) * k.abs() / scale);
        }
    }
    KktCertificate {
        duals_items: d.prices,
        duals_nonneg: kappa,
        stationarity_residual: stat,
        complementarity_residual: comp,
    }
}

/// KKT certificate of `x` with duals set by the extraction formulas.
pub fn certificate(inst: &Instance, x: &FractionalAllocation, p: f64) -> Result<KktCertificate> {
    inst.check_allocation(x)?;
    let s = Surrogate::new(inst.kind(), PMean::new(p)?)?;
    Ok(certificate_from(&inst.normalize(), s, x))
}

/// Max-norm of the stationarity and complementarity violations.
pub fn kkt_residual(inst: &Instance, x: &FractionalAllocation, p: f64) -> Result<f64> {
    Ok(certificate(inst, x, p)?.residual())
}

/// Prices `max_i w_i v_ij` and budgets `w_i u_i` (all ones at `p = 0`).
pub fn extract_goods_equilibrium(inst: &Instance, x: &FractionalAllocation, p: f64) -> Result<GoodsEquilibrium> {
    inst.check_allocation(x)?;
    let s = Surrogate::new(Kind::Goods, PMean::new(p)?)?;
    if inst.kind() != Kind::Goods {
        return Err(Error::Param("goods equilibrium needs a goods instance".into()));
    }
    let norm = inst.normalize();
    let u = norm.own_values(x);
    if let Some(i) = u.iter().position(|&v| v < UTILITY_FLOOR) {
        return Err(Error::DegenerateOptimum(format!("agent {i} has utility {}", u[i])));
    }
    let d = duals(&norm, s, &u);
    let budgets = match s {
        Surrogate::GoodsLog => vec![1.0; inst.n()],
        _ => u.iter().zip(&d.weights).map(|(u, w)| u * w).collect(),
    };
    Ok(GoodsEquilibrium {
        allocation: x.clone(),
        prices: d.prices,
        budgets,
    })
}

/// Rewards `min_i w_i c_ij` (zero when some agent has zero cost) and earnings `p c_i^p`.
pub fn extract_chores_equilibrium(inst: &Instance, x: &FractionalAllocation, p: f64) -> Result<ChoresEquilibrium> {
    inst.check_allocation(x)?;
    let s = Surrogate::new(Kind::Chores, PMean::new(p)?)?;
    if inst.kind() != Kind::Chores {
        return Err(Error::Param("chores equilibrium needs a chores instance".into()));
    }
    let norm = inst.normalize();
    let c = norm.own_values(x);
    if p > 1.0 {
        if let Some(i) = c.iter().position(|&v| v <= 0.0) {
            if (0..inst.m()).all(|j| norm.value(i, j) > 0.0) {
                return Err(Error::DegenerateOptimum(format!(
                    "agent {i} bears no cost although every chore is costly for it"
                )));
            }
        }
    }
    let d = duals(&norm, s, &c);
    if let Some(r) = d.prices.iter().find(|r| !r.is_finite()) {
        return Err(Error::DegenerateOptimum(format!("reward {r} is not finite")));
    }
    let earnings = c.iter().zip(&d.weights).map(|(c, w)| c * w).collect();
    Ok(ChoresEquilibrium {
        allocation: x.clone(),
        rewards: d.prices,
        earnings,
    })
}

/// Euclidean projection of `v` onto the probability simplex, in place.
pub fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cum += s;
        let t = (cum - 1.0) / (k + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

struct Pgd<'a> {
    inst: &'a NormalizedInstance,
    s: Surrogate,
    cfg: &'a SolverConfig,
    n: usize,
    m: usize,
    /// Columns optimized by the iteration; the rest are fixed.
    active: Vec<usize>,
}

impl<'a> Pgd<'a> {
    fn new(inst: &'a NormalizedInstance, s: Surrogate, cfg: &'a SolverConfig) -> Self {
        let (n, m) = (inst.n(), inst.m());
        let active = (0..m)
            .filter(|&j| match s.kind() {
                Kind::Goods => (0..n).any(|i| inst.value(i, j) > 0.0),
                Kind::Chores => (0..n).all(|i| inst.value(i, j) > 0.0),
            })
            .collect();
        Pgd {
            inst,
            s,
            cfg,
            n,
            m,
            active,
        }
    }

    fn initial(&self) -> FractionalAllocation {
        let mut x = FractionalAllocation::uniform(self.n, self.m);
        if self.s.kind() == Kind::Chores {
            for j in 0..self.m {
                let zero = self.inst.zero_cost_agents(j);
                if !zero.is_empty() {
                    for i in 0..self.n {
                        let share = if zero.contains(&i) { 1.0 / zero.len() as f64 } else { 0.0 };
                        x.set(i, j, share);
                    }
                }
            }
        }
        x
    }

    fn objective(&self, u: &[f64]) -> f64 {
        if self.s.kind() == Kind::Goods && u.iter().any(|&v| v < UTILITY_FLOOR) {
            return f64::INFINITY;
        }
        self.s.eval(u)
    }

    fn gradient(&self, u: &[f64], g: &mut [f64]) {
        let sign = self.s.gradient_sign();
        for i in 0..self.n {
            let w = sign * self.s.weight(u[i]);
            for &j in &self.active {
                g[i * self.m + j] = w * self.inst.value(i, j);
            }
        }
    }

    fn project(&self, x: &mut [f64]) {
        let mut col = vec![0.0; self.n];
        for &j in &self.active {
            for i in 0..self.n {
                col[i] = x[i * self.m + j];
            }
            project_simplex(&mut col);
            for i in 0..self.n {
                x[i * self.m + j] = col[i];
            }
        }
    }

    fn utilities(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.m).map(|j| x[i * self.m + j] * self.inst.value(i, j)).sum())
            .collect()
    }

    /// Held entries whose marginal is outside the best ratio by more than `RATIO_TOL`.
    fn strays(&self, x: &[f64], cert: &KktCertificate) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &j in &self.active {
            let price = cert.duals_items[j];
            let scale = if price > 0.0 {
                price
            } else {
                (0..self.n).map(|i| price + cert.duals_nonneg[i][j]).fold(0.0, f64::max).max(1.0)
            };
            for i in 0..self.n {
                if x[i * self.m + j] > HOLD_TOL && cert.duals_nonneg[i][j] > RATIO_TOL * scale {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Accepts a KKT point whose support is clean, or zeroes the stray entries
    /// and accepts the result if it still certifies.
    fn clean(
        &self,
        x: &[f64],
        alloc: FractionalAllocation,
        cert: KktCertificate,
    ) -> Option<(FractionalAllocation, KktCertificate)> {
        let strays = self.strays(x, &cert);
        if strays.is_empty() {
            return Some((alloc, cert));
        }
        let mut y = x.to_vec();
        for &(i, j) in &strays {
            y[i * self.m + j] = 0.0;
        }
        for &j in &self.active {
            let sum: f64 = (0..self.n).map(|i| y[i * self.m + j]).sum();
            if sum <= 0.0 {
                return None;
            }
            for i in 0..self.n {
                y[i * self.m + j] /= sum;
            }
        }
        let snapped = FractionalAllocation::from_flat(self.n, self.m, y);
        let cert = certificate_from(self.inst, self.s, &snapped);
        let ok = cert.residual() <= self.cfg.kkt_tolerance && self.strays(snapped.as_slice(), &cert).is_empty();
        ok.then_some((snapped, cert))
    }

    fn run(&self) -> Result<Solution> {
        let (n, m) = (self.n, self.m);
        let mut x = self.initial().as_slice().to_vec();
        let mut u = self.utilities(&x);
        let mut f = self.objective(&u);
        let mut g = vec![0.0; n * m];
        self.gradient(&u, &mut g);
        let mut history = vec![f];
        let mut t = self.cfg.step;
        let mut best = (f64::INFINITY, x.clone());
        let mut y = vec![0.0; n * m];
        let mut gy = vec![0.0; n * m];
        for it in 0..self.cfg.max_iterations {
            let alloc = FractionalAllocation::from_flat(n, m, x.clone());
            let cert = certificate_from(self.inst, self.s, &alloc);
            let res = cert.residual();
            if res < best.0 {
                best = (res, x.clone());
            }
            if res <= self.cfg.kkt_tolerance {
                if let Some((alloc, cert)) = self.clean(&x, alloc, cert) {
                    let objective = self.objective(&self.utilities(alloc.as_slice()));
                    return Ok(Solution {
                        allocation: alloc,
                        certificate: cert,
                        iterations: it,
                        objective,
                    });
                }
            }
            let reference = history.iter().cloned().fold(f, f64::max);
            let slack = 8.0 * f64::EPSILON * f.abs();
            let mut accepted = false;
            let mut fy = f;
            let mut uy = u.clone();
            for _ in 0..200 {
                for k in 0..n * m {
                    y[k] = x[k] - t * g[k];
                }
                self.project(&mut y);
                uy = self.utilities(&y);
                fy = self.objective(&uy);
                let descent: f64 = (0..n * m).map(|k| g[k] * (y[k] - x[k])).sum();
                if fy.is_finite() && fy <= reference + self.cfg.armijo * descent + slack {
                    accepted = true;
                    break;
                }
                t *= self.cfg.backtrack;
            }
            if !accepted {
                break;
            }
            self.gradient(&uy, &mut gy);
            let mut ss = 0.0;
            let mut sy = 0.0;
            for k in 0..n * m {
                let dx = y[k] - x[k];
                ss += dx * dx;
                sy += dx * (gy[k] - g[k]);
            }
            if ss == 0.0 {
                // The projected step did not move: x is a fixed point up to rounding.
                let alloc = FractionalAllocation::from_flat(n, m, x.clone());
                let cert = certificate_from(self.inst, self.s, &alloc);
                if cert.residual() <= self.cfg.kkt_tolerance {
                    if let Some((alloc, cert)) = self.clean(&x, alloc, cert) {
                        let objective = self.objective(&self.utilities(alloc.as_slice()));
                        return Ok(Solution { allocation: alloc, certificate: cert, iterations: it, objective });
                    }
                }
                t = self.cfg.step;
                continue;
            }
            t = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { 1e12 };
            std::mem::swap(&mut x, &mut y);
            std::mem::swap(&mut g, &mut gy);
            u = uy;
            f = fy;
            history.push(f);
            if history.len() > NONMONOTONE_MEMORY {
                history.remove(0);
            }
        }
        Err(Error::Convergence {
            iterations: self.cfg.max_iterations,
            residual: best.0,
            best: Box::new(FractionalAllocation::from_flat(n, m, best.1)),
        })
    }
}
