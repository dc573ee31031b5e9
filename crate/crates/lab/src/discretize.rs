//! Splitting a divisible allocation into identical indivisible pieces.
//!
//! Item `t` held in share `x_kt` by agent `k` becomes a group of `z` pieces,
//! each worth `x_kt * v_lt / z` to agent `l`. Pieces in a group are identical,
//! so integral allocations of the discretized instance are described by how many
//! pieces of each group every agent receives.

use pmean_fair::exec::{self, Execution};
use pmean_fair::exact::{ENUM_LIMIT, TIE_TOL};
use pmean_fair::instance::MAX_DIM;
use pmean_fair::welfare::p_mean;
use pmean_fair::{Error, FractionalAllocation, Instance, IntegralAllocation, Kind, PMean, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Discretized {
    kind: Kind,
    n: usize,
    m: usize,
    z: usize,
    /// `piece[g * n + l]`: value of one piece of group `g` to agent `l`.
    piece: Vec<f64>,
    row_sums: Vec<f64>,
}

/// Group `g = t * n + k` collects the pieces of item `t` that agent `k` held.
pub fn discretize(inst: &Instance, x: &FractionalAllocation, z: usize) -> Result<Discretized> {
    if z == 0 {
        return Err(Error::Param("z must be a positive integer".into()));
    }
    inst.check_allocation(x)?;
    let (n, m) = (inst.n(), inst.m());
    let mut piece = Vec::with_capacity(m * n * n);
    for t in 0..m {
        for k in 0..n {
            for l in 0..n {
                piece.push(x.get(k, t) * inst.value(l, t) / z as f64);
            }
        }
    }
    Ok(Discretized {
        kind: inst.kind(),
        n,
        m,
        z,
        piece,
        row_sums: (0..n).map(|i| inst.row_sum(i)).collect(),
    })
}

impl Discretized {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn groups(&self) -> usize {
        self.n * self.m
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn piece_value(&self, group: usize, agent: usize) -> f64 {
        self.piece[group * self.n + agent]
    }

    /// Largest single-piece value to `agent`, normalized by its total.
    pub fn max_normalized_piece(&self, agent: usize) -> f64 {
        (0..self.groups()).map(|g| self.piece_value(g, agent)).fold(0.0, f64::max) / self.row_sums[agent]
    }

    /// The explicit instance with `n * m * z` items, pieces ordered by (item, holder, copy).
    pub fn to_instance(&self) -> Result<Instance> {
        let items = self.groups() * self.z;
        if items > MAX_DIM {
            return Err(Error::Dimension(format!(
                "discretized instance has {items} items, more than {MAX_DIM}"
            )));
        }
        let rows = (0..self.n)
            .map(|l| {
                (0..self.groups())
                    .flat_map(|g| std::iter::repeat_n(self.piece_value(g, l), self.z))
                    .collect()
            })
            .collect();
        Instance::new(self.kind, rows)
    }

    /// Counts that give every piece of group `(t, k)` back to `k`.
    pub fn replicating_counts(&self) -> Vec<Vec<usize>> {
        (0..self.groups())
            .map(|g| {
                let mut c = vec![0; self.n];
                c[g % self.n] = self.z;
                c
            })
            .collect()
    }

    /// Integral allocation of [`Discretized::to_instance`] with the given per-group counts.
    pub fn allocation(&self, counts: &[Vec<usize>]) -> Result<IntegralAllocation> {
        let mut owners = Vec::with_capacity(self.groups() * self.z);
        for c in counts {
            for (l, &k) in c.iter().enumerate() {
                owners.extend(std::iter::repeat_n(l, k));
            }
        }
        IntegralAllocation::new(self.n, owners)
    }

    pub fn utilities(&self, counts: &[Vec<usize>]) -> Vec<f64> {
        let mut u = vec![0.0; self.n];
        for (g, c) in counts.iter().enumerate() {
            for (l, &k) in c.iter().enumerate() {
                u[l] += k as f64 * self.piece_value(g, l);
            }
        }
        u
    }

    pub fn normalized_utilities(&self, counts: &[Vec<usize>]) -> Vec<f64> {
        let u = self.utilities(counts);
        u.iter().zip(&self.row_sums).map(|(a, s)| a / s).collect()
    }

    /// beta-PROP1 on the grouped representation. Returns the worst normalized
    /// slack; the allocation satisfies the notion iff it is at least `-tol`.
    pub fn prop1_slack(&self, counts: &[Vec<usize>], beta: f64) -> f64 {
        let share = 1.0 / self.n as f64;
        let u = self.normalized_utilities(counts);
        (0..self.n)
            .map(|l| {
                let held = |g: usize| counts[g][l] > 0;
                let outside = |g: usize| counts[g][l] < self.z;
                let s = self.row_sums[l];
                match self.kind {
                    Kind::Goods => {
                        let best_out = (0..self.groups())
                            .filter(|&g| outside(g))
                            .map(|g| self.piece_value(g, l) / s)
                            .fold(0.0, f64::max);
                        u[l] + best_out - share / beta
                    }
                    Kind::Chores => {
                        let worst_own = (0..self.groups())
                            .filter(|&g| held(g))
                            .map(|g| self.piece_value(g, l) / s)
                            .fold(0.0, f64::max);
                        beta * share - (u[l] - worst_own)
                    }
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Optimal count vectors of a discretized instance.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedOptima {
    pub optima: Vec<Vec<Vec<usize>>>,
    pub objective: f64,
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn better(kind: Kind, a: f64, b: f64) -> bool {
    match kind {
        Kind::Goods => a > b,
        Kind::Chores => a < b,
    }
}

/// Exhaustive search over per-group counts. Groups whose pieces are worthless
/// to everyone stay with their holder.
pub fn grouped_optima(d: &Discretized, p: PMean, exec: Execution) -> Result<GroupedOptima> {
    let n = d.n;
    let comps = compositions(d.z, n);
    let active: Vec<usize> = (0..d.groups()).filter(|&g| (0..n).any(|l| d.piece_value(g, l) > 0.0)).collect();
    let radix = comps.len() as u64;
    let total = radix
        .checked_pow(active.len() as u32)
        .filter(|&t| t <= ENUM_LIMIT)
        .ok_or_else(|| Error::Scale(format!("{radix}^{} count vectors exceed {ENUM_LIMIT}", active.len())))?;
    let base = d.replicating_counts();
    let ties = |a: f64, b: f64| (a - b).abs() <= TIE_TOL * b.abs();
    let parts = exec::chunked(exec, total, 1 << 14, |range| {
        let mut best = None::<f64>;
        let mut cands: Vec<(f64, u64)> = Vec::new();
        let mut counts = base.clone();
        for idx in range {
            let mut r = idx;
            for &g in &active {
                counts[g].clone_from(&comps[(r % radix) as usize]);
                r /= radix;
            }
            let v = p_mean(&d.normalized_utilities(&counts), p).expect("utilities are non-negative");
            match best {
                Some(b) if ties(v, b) => cands.push((v, idx)),
                Some(b) if !better(d.kind, v, b) => {}
                _ => {
                    best = Some(v);
                    cands.retain(|(c, _)| ties(*c, v));
                    cands.push((v, idx));
                }
            }
        }
        (best, cands)
    });
    let best = parts
        .iter()
        .filter_map(|(b, _)| *b)
        .reduce(|a, b| if better(d.kind, b, a) { b } else { a })
        .expect("at least one count vector");
    let optima = parts
        .into_iter()
        .flat_map(|(_, c)| c)
        .filter(|(v, _)| ties(*v, best))
        .map(|(_, idx)| {
            let mut counts = base.clone();
            let mut r = idx;
            for &g in &active {
                counts[g].clone_from(&comps[(r % radix) as usize]);
                r /= radix;
            }
            counts
        })
        .collect();
    Ok(GroupedOptima { optima, objective: best })
}
