//! Exhaustive integral optimization, a divisible grid oracle, and the algebraic
//! lemmas behind the two-agent results as checkable predicates.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fairness::check_efk;
use crate::instance::{FractionalAllocation, Instance, IntegralAllocation, Kind, NormalizedInstance};
use crate::welfare::{p_mean, PMean};

/// Largest number of integral allocations or grid points searched.
pub const ENUM_LIMIT: u64 = 10_000_000;
/// Relative tolerance within which two objective values tie.
pub const TIE_TOL: f64 = 1e-12;
const CHUNK: u64 = 1 << 14;

/// `n^m`, or `None` on overflow.
pub fn assignment_count(n: usize, m: usize) -> Option<u64> {
    (n as u64).checked_pow(m as u32)
}

/// Calls `f(index, owners)` for each integral assignment whose mixed-radix index
/// (item 0 is the least significant digit) lies in `range`.
pub fn for_each_assignment(n: usize, m: usize, range: Range<u64>, mut f: impl FnMut(u64, &[usize])) {
    if range.is_empty() {
        return;
    }
    let mut owners = vec![0usize; m];
    let mut rest = range.start;
    for o in owners.iter_mut() {
        *o = (rest % n as u64) as usize;
        rest /= n as u64;
    }
    for idx in range {
        f(idx, &owners);
        for o in owners.iter_mut() {
            *o += 1;
            if *o < n {
                break;
            }
            *o = 0;
        }
    }
}

fn better(kind: Kind, a: f64, b: f64) -> bool {
    match kind {
        Kind::Goods => a > b,
        Kind::Chores => a < b,
    }
}

fn ties(a: f64, best: f64) -> bool {
    (a - best).abs() <= TIE_TOL * best.abs()
}

/// All integral allocations attaining the optimal normalized p-mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimaSet {
    pub optima: Vec<IntegralAllocation>,
    pub objective: f64,
    pub tie_tolerance: f64,
}

/// Exhaustively maximizes (goods) or minimizes (chores) the normalized p-mean.
pub fn enumerate_optima(inst: &Instance, p: PMean) -> Result<OptimaSet> {
    enumerate_optima_with(inst, p, Execution::default())
}

pub fn enumerate_optima_with(inst: &Instance, p: PMean, exec: Execution) -> Result<OptimaSet> {
    let (n, m) = (inst.n(), inst.m());
    let total = assignment_count(n, m).filter(|&t| t <= ENUM_LIMIT).ok_or_else(|| {
        Error::Scale(format!("{n}^{m} allocations exceed the limit of {ENUM_LIMIT}"))
    })?;
    let norm = inst.normalize();
    let kind = inst.kind();
    let parts = exec::chunked(exec, total, CHUNK, |range| {
        let mut best = None::<f64>;
        let mut cands: Vec<(f64, Vec<usize>)> = Vec::new();
        let mut u = vec![0.0; n];
        for_each_assignment(n, m, range, |_, owners| {
            u.iter_mut().for_each(|v| *v = 0.0);
            for (j, &o) in owners.iter().enumerate() {
                u[o] += norm.value(o, j);
            }
            let v = p_mean(&u, p).expect("utilities are non-negative");
            match best {
                Some(b) if better(kind, b, v) && !ties(v, b) => {}
                Some(b) if ties(v, b) => cands.push((v, owners.to_vec())),
                _ => {
                    best = Some(v);
                    cands.retain(|(c, _)| ties(*c, v));
                    cands.push((v, owners.to_vec()));
                }
            }
        });
        (best, cands)
    });
    let best = parts
        .iter()
        .filter_map(|(b, _)| *b)
        .reduce(|a, b| if better(kind, b, a) { b } else { a })
        .expect("at least one allocation");
    let optima = parts
        .into_iter()
        .flat_map(|(_, c)| c)
        .filter(|(v, _)| ties(*v, best))
        .map(|(_, owners)| IntegralAllocation::new(n, owners))
        .collect::<Result<Vec<_>>>()?;
    Ok(OptimaSet {
        optima,
        objective: best,
        tie_tolerance: TIE_TOL,
    })
}

/// Best divisible allocation found by the grid oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub allocation: FractionalAllocation,
    pub objective: f64,
}

/// Number of ways to split one item on a grid of `resolution` steps among `n` agents.
fn compositions(n: usize, resolution: usize) -> Option<u64> {
    // C(resolution + n - 1, n - 1)
    let mut c: u128 = 1;
    for k in 1..n as u128 {
        c = c * (resolution as u128 + k) / k;
        if c > u64::MAX as u128 {
            return None;
        }
    }
    Some(c as u64)
}

fn all_compositions(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if n == 1 {
            cur.push(r);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=r {
            cur.push(k);
            rec(n - 1, r - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, r, &mut Vec::new(), &mut out);
    out
}

fn objective_of(norm: &NormalizedInstance, x: &[f64], p: PMean) -> f64 {
    let (n, m) = (norm.n(), norm.m());
    let u: Vec<f64> = (0..n).map(|i| (0..m).map(|j| x[i * m + j] * norm.value(i, j)).sum()).collect();
    p_mean(&u, p).expect("utilities are non-negative")
}

/// Best divisible allocation on the regular grid with `resolution` steps per item.
///
/// When the full grid is too large and `n = 2, m <= 3`, only allocations with at
/// most one split item are scanned, which contains every Pareto optimal
/// allocation of a two-agent instance; the best split is then refined by
/// golden-section search inside its grid cell.
pub fn grid_oracle_divisible(inst: &Instance, p: PMean, resolution: usize) -> Result<OracleResult> {
    grid_oracle_divisible_with(inst, p, resolution, Execution::default())
}

pub fn grid_oracle_divisible_with(inst: &Instance, p: PMean, resolution: usize, exec: Execution) -> Result<OracleResult> {
    if resolution == 0 {
        return Err(Error::Param("resolution must be positive".into()));
    }
    let (n, m) = (inst.n(), inst.m());
    let per_item = compositions(n, resolution);
    let total = per_item.and_then(|c| c.checked_pow(m as u32));
    match total {
        Some(t) if t <= ENUM_LIMIT => full_grid(inst, p, resolution, exec),
        _ if n == 2 && m <= 3 => two_agent_scan(inst, p, resolution, exec),
        _ => Err(Error::Scale(format!(
            "grid with resolution {resolution} for {n} agents and {m} items exceeds {ENUM_LIMIT} points"
        ))),
    }
}

fn full_grid(inst: &Instance, p: PMean, r: usize, exec: Execution) -> Result<OracleResult> {
    let (n, m) = (inst.n(), inst.m());
    let norm = inst.normalize();
    let comps = all_compositions(n, r);
    let c = comps.len() as u64;
    let total = c.pow(m as u32);
    let kind = inst.kind();
    let parts = exec::chunked(exec, total, CHUNK, |range| {
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut x = vec![0.0; n * m];
        for idx in range {
            let mut rest = idx;
            for j in 0..m {
                let comp = &comps[(rest % c) as usize];
                rest /= c;
                for i in 0..n {
                    x[i * m + j] = comp[i] as f64 / r as f64;
                }
            }
            let v = objective_of(&norm, &x, p);
            if best.as_ref().is_none_or(|(b, _)| better(kind, v, *b)) {
                best = Some((v, x.clone()));
            }
        }
        best
    });
    let (objective, x) = parts
        .into_iter()
        .flatten()
        .reduce(|a, b| if better(kind, b.0, a.0) { b } else { a })
        .expect("grid is non-empty");
    Ok(OracleResult {
        allocation: FractionalAllocation::from_flat(n, m, x),
        objective,
    })
}

fn two_agent_scan(inst: &Instance, p: PMean, r: usize, exec: Execution) -> Result<OracleResult> {
    let m = inst.m();
    let norm = inst.normalize();
    let kind = inst.kind();
    // Candidate: split item s, mask over the remaining items (bit set = agent 0).
    let combos: Vec<(usize, u32)> = (0..m).flat_map(|s| (0..1u32 << (m - 1)).map(move |mask| (s, mask))).collect();
    let eval = |s: usize, mask: u32, t: f64| -> (f64, [f64; 2]) {
        let mut u = [0.0, 0.0];
        let mut bit = 0;
        for j in 0..m {
            if j == s {
                u[0] += t * norm.value(0, j);
                u[1] += (1.0 - t) * norm.value(1, j);
            } else {
                let o = if mask >> bit & 1 == 1 { 0 } else { 1 };
                u[o] += norm.value(o, j);
                bit += 1;
            }
        }
        (p_mean(&u, p).expect("non-negative"), u)
    };
    let scans = exec::map(exec, &combos, |&(s, mask)| {
        let mut best = (f64::NAN, 0usize);
        for k in 0..=r {
            let v = eval(s, mask, k as f64 / r as f64).0;
            if best.0.is_nan() || better(kind, v, best.0) {
                best = (v, k);
            }
        }
        (best.0, s, mask, best.1)
    });
    let &(mut objective, s, mask, k) = scans
        .iter()
        .reduce(|a, b| if better(kind, b.0, a.0) { b } else { a })
        .expect("non-empty");
    // Golden-section refinement of the split inside the neighbouring cells.
    let mut lo = (k as f64 - 1.0).max(0.0) / r as f64;
    let mut hi = (k as f64 + 1.0).min(r as f64) / r as f64;
    let mut t_best = k as f64 / r as f64;
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let score = |t: f64| {
        let v = eval(s, mask, t).0;
        if kind == Kind::Goods {
            v
        } else {
            -v
        }
    };
    for _ in 0..100 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if score(a) >= score(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let t_ref = 0.5 * (lo + hi);
    let v_ref = eval(s, mask, t_ref).0;
    if better(kind, v_ref, objective) {
        objective = v_ref;
        t_best = t_ref;
    }
    let mut x = vec![0.0; 2 * m];
    let mut bit = 0;
    for j in 0..m {
        if j == s {
            x[j] = t_best;
            x[m + j] = 1.0 - t_best;
        } else {
            let o = if mask >> bit & 1 == 1 { 0 } else { 1 };
            x[o * m + j] = 1.0;
            bit += 1;
        }
    }
    Ok(OracleResult {
        allocation: FractionalAllocation::from_flat(2, m, x),
        objective,
    })
}

/// `x^p - y^p` divided by `scale^p`, accurate when `x` and `y` are close.
fn scaled_power_diff(x: f64, y: f64, p: f64, scale: f64) -> f64 {
    ((y / scale).ln() * p).exp() * (p * (x / y).ln()).exp_m1()
}

fn precondition(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition(what.into()))
    }
}

/// Returns whether `a^p + b^p > alpha^p + beta^p`.
///
/// Requires positive inputs, `p > 2`, `max(a, b) >= max(alpha, beta)` and
/// `a^2 + b^2 > alpha^2 + beta^2`.
pub fn lemma_squeeze_predicate(a: f64, b: f64, alpha: f64, beta: f64, p: f64) -> Result<bool> {
    precondition(
        [a, b, alpha, beta].iter().all(|v| v.is_finite() && *v > 0.0),
        "inputs must be positive",
    )?;
    precondition(p > 2.0 && p.is_finite(), "p must exceed 2")?;
    precondition(a.max(b) >= alpha.max(beta), "max(a, b) >= max(alpha, beta) is required")?;
    precondition(
        a * a + b * b > alpha * alpha + beta * beta,
        "a^2 + b^2 > alpha^2 + beta^2 is required",
    )?;
    let (hi, lo) = (a.max(b), a.min(b));
    let (ahi, alo) = (alpha.max(beta), alpha.min(beta));
    let d = scaled_power_diff(hi, ahi, p, hi) + scaled_power_diff(lo, alo, p, hi);
    Ok(d > 0.0)
}

/// Evaluates both inequalities of the two-agent chores algebra lemma.
///
/// Requires `0 <= a < alpha < 1`, `0 <= beta < 1 - 2 alpha`.
pub fn lemma_chores_algebra_predicate(a: f64, alpha: f64, beta: f64) -> Result<(bool, bool)> {
    precondition(
        a >= 0.0 && beta >= 0.0,
        "a and beta are normalized costs and must be non-negative",
    )?;
    precondition(a < alpha && alpha < 1.0, "a < alpha < 1 is required")?;
    precondition(beta < 1.0 - 2.0 * alpha, "beta < 1 - 2 alpha is required")?;
    let lhs = a + (1.0 - a) / (1.0 - alpha) * beta;
    let first = lhs * lhs + (1.0 - alpha - beta).powi(2) < a * a + (1.0 - alpha).powi(2);
    let second = lhs < 1.0 - alpha;
    Ok((first, second))
}

/// Returns whether `w_p(a, b) < w_p(alpha, beta)`.
///
/// Requires positive inputs, `p <= 0`, `min(a, b) <= min(alpha, beta)` and
/// `ab < alpha beta`.
pub fn lemma_goods_algebra_predicate(a: f64, b: f64, alpha: f64, beta: f64, p: f64) -> Result<bool> {
    precondition(
        [a, b, alpha, beta].iter().all(|v| v.is_finite() && *v > 0.0),
        "inputs must be positive",
    )?;
    precondition(p <= 0.0 && !p.is_nan(), "p must be at most 0")?;
    precondition(a.min(b) <= alpha.min(beta), "min(a, b) <= min(alpha, beta) is required")?;
    precondition(a * b < alpha * beta, "ab < alpha beta is required")?;
    if p == 0.0 {
        return Ok(a.ln() + b.ln() < alpha.ln() + beta.ln());
    }
    if p == f64::NEG_INFINITY {
        return Ok(a.min(b) < alpha.min(beta));
    }
    // For p < 0, w_p(a, b) < w_p(alpha, beta) iff a^p + b^p > alpha^p + beta^p.
    let (lo, hi) = (a.min(b), a.max(b));
    let (alo, ahi) = (alpha.min(beta), alpha.max(beta));
    let d = scaled_power_diff(lo, alo, p, lo) + scaled_power_diff(hi, ahi, p, lo);
    Ok(d > 0.0)
}

fn normalized_costs(norm: &NormalizedInstance, bundle: &[usize], i: usize) -> f64 {
    bundle.iter().map(|&j| norm.value(i, j)).sum()
}

/// One improving move of the two-agent chores argument: moves the chore of the
/// envious agent's bundle with the smallest cost ratio to the other agent.
///
/// Requires a two-agent chores allocation that is not EF1, and that the other
/// agent's normalized cost for its own bundle is at most the envious agent's
/// normalized cost for that bundle (otherwise swapping bundles is the move).
pub fn ef1_transfer_step(inst: &Instance, alloc: &IntegralAllocation) -> Result<IntegralAllocation> {
    let (envious, other) = ef1_roles(inst, alloc)?;
    let norm = inst.normalize();
    let bundles = alloc.bundles();
    let own_other = normalized_costs(&norm, &bundles[other], other);
    let env_other = normalized_costs(&norm, &bundles[other], envious);
    if own_other > env_other {
        return Err(Error::Precondition(
            "the other agent values its bundle above the envious agent's view; swap bundles instead".into(),
        ));
    }
    let t = bundles[envious]
        .iter()
        .copied()
        .filter(|&t| norm.value(envious, t) > 0.0)
        .min_by(|&s, &t| {
            let rs = norm.value(other, s) / norm.value(envious, s);
            let rt = norm.value(other, t) / norm.value(envious, t);
            rs.total_cmp(&rt).then(s.cmp(&t))
        })
        .ok_or_else(|| Error::Precondition("envious agent holds no costly chore".into()))?;
    let mut owners = alloc.owners().to_vec();
    owners[t] = other;
    IntegralAllocation::new(2, owners)
}

/// Envious agent and the other agent of a non-EF1 two-agent chores allocation.
fn ef1_roles(inst: &Instance, alloc: &IntegralAllocation) -> Result<(usize, usize)> {
    precondition(inst.kind() == Kind::Chores, "a chores instance is required")?;
    precondition(inst.n() == 2, "exactly two agents are required")?;
    inst.check_allocation(alloc)?;
    let report = check_efk(inst, alloc, 1.0, 1)?;
    match report.witness {
        Some(w) if !report.holds => Ok((w.agent, 1 - w.agent)),
        _ => Err(Error::Precondition("allocation is already EF1".into())),
    }
}

/// Repeats transfer or swap moves until the allocation is EF1, returning the path.
pub fn ef1_descent(inst: &Instance, start: &IntegralAllocation) -> Result<Vec<IntegralAllocation>> {
    let mut path = vec![start.clone()];
    let limit = 4 * inst.m() * inst.m() + 16;
    for _ in 0..limit {
        let cur = path.last().expect("non-empty");
        let next = match ef1_transfer_step(inst, cur) {
            Ok(a) => a,
            Err(Error::Precondition(msg)) if msg.contains("swap") => {
                let owners = cur.owners().iter().map(|&o| 1 - o).collect();
                IntegralAllocation::new(2, owners)?
            }
            Err(Error::Precondition(msg)) if msg.contains("already EF1") => return Ok(path),
            Err(e) => return Err(e),
        };
        path.push(next);
    }
    Err(Error::Numerical("EF1 descent did not terminate".into()))
}

/// Normalized costs `(c_1(a_1), c_2(a_2))` of a two-agent allocation.
pub fn two_agent_costs(inst: &Instance, alloc: &IntegralAllocation) -> [f64; 2] {
    let norm = inst.normalize();
    let b = alloc.bundles();
    [normalized_costs(&norm, &b[0], 0), normalized_costs(&norm, &b[1], 1)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignments_are_enumerated_in_order() {
        let mut seen = Vec::new();
        for_each_assignment(2, 3, 2..6, |i, o| seen.push((i, o.to_vec())));
        assert_eq!(seen[0], (2, vec![0, 1, 0]));
        assert_eq!(seen[3], (5, vec![1, 0, 1]));
    }

    #[test]
    fn unique_goods_optimum() {
        let inst = Instance::new(Kind::Goods, vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        for p in [-2.0, 0.0, 0.5, 3.0] {
            let set = enumerate_optima(&inst, PMean::new(p).unwrap()).unwrap();
            assert_eq!(set.optima.len(), 1);
            assert_eq!(set.optima[0].owners(), &[0, 1]);
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let inst = Instance::new(Kind::Chores, vec![vec![1.0, 2.0, 3.0, 1.0], vec![2.0, 1.0, 1.0, 1.0]]).unwrap();
        let p = PMean::new(2.0).unwrap();
        let a = enumerate_optima_with(&inst, p, Execution::Sequential).unwrap();
        let b = enumerate_optima_with(&inst, p, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lemma_examples() {
        assert!(matches!(
            lemma_squeeze_predicate(1.0, 0.2, 0.9, 0.5, 3.0),
            Err(Error::Precondition(_))
        ));
        assert!(lemma_squeeze_predicate(1.0, 0.5, 0.9, 0.6, 3.0).unwrap());
        assert_eq!(lemma_chores_algebra_predicate(0.1, 0.2, 0.3).unwrap(), (true, true));
        assert!(lemma_goods_algebra_predicate(0.3, 0.9, 0.4, 0.8, -2.0).unwrap());
        assert!(lemma_goods_algebra_predicate(0.3, 0.9, 0.4, 0.8, 0.0).unwrap());
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(2, 10), Some(11));
        assert_eq!(compositions(3, 2), Some(6));
        assert_eq!(all_compositions(3, 2).len(), 6);
    }

    #[test]
    fn symmetric_oracle() {
        let inst = Instance::new(Kind::Goods, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let r = grid_oracle_divisible(&inst, PMean::new(-1.0).unwrap(), 100).unwrap();
        let u = inst.normalize().own_values(&r.allocation);
        assert!((u[0] - u[1]).abs() < 1e-9);
    }
}
