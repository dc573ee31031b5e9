//! Instances, normalization and allocation containers.

use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported number of agents or items.
pub const MAX_DIM: usize = 64;

/// Tolerance used when validating that fractional columns sum to one.
pub const COLUMN_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Goods,
    Chores,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Goods => "goods",
            Kind::Chores => "chores",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct InstanceFile {
    kind: Kind,
    values: Vec<Vec<f64>>,
}

/// An `n x m` matrix of non-negative valuations (goods) or costs (chores).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct Instance {
    kind: Kind,
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        Instance::new(file.kind, file.values)
    }
}

impl From<Instance> for InstanceFile {
    fn from(inst: Instance) -> Self {
        InstanceFile {
            kind: inst.kind,
            values: inst.rows(),
        }
    }
}

impl Instance {
    /// Validates and builds an instance. The first offending entry is reported.
    pub fn new(kind: Kind, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || n > MAX_DIM {
            return Err(Error::Dimension(format!(
                "number of agents must be in 1..={MAX_DIM}, got {n}"
            )));
        }
        let m = rows[0].len();
        if m == 0 || m > MAX_DIM {
            return Err(Error::Dimension(format!(
                "number of items must be in 1..={MAX_DIM}, got {m}"
            )));
        }
        let mut values = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidInstance {
                    row: i,
                    col: row.len().min(m),
                    reason: format!("row has {} entries, expected {m}", row.len()),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidInstance {
                        row: i,
                        col: j,
                        reason: format!("entry {v} is not finite"),
                    });
                }
                if v < 0.0 {
                    return Err(Error::InvalidInstance {
                        row: i,
                        col: j,
                        reason: format!("entry {v} is negative"),
                    });
                }
                values.push(v);
            }
            if row.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidInstance {
                    row: i,
                    col: 0,
                    reason: "row sum must be positive".into(),
                });
            }
        }
        let inst = Instance { kind, n, m, values };
        if kind == Kind::Goods {
            for j in inst.zero_columns() {
                log::warn!("good {j} has zero value for every agent and will receive price 0");
            }
        }
        Ok(inst)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Goods that every agent values at zero.
    pub fn zero_columns(&self) -> Vec<usize> {
        (0..self.m)
            .filter(|&j| (0..self.n).all(|i| self.value(i, j) == 0.0))
            .collect()
    }

    /// Agents with zero cost for item `j`.
    pub fn zero_cost_agents(&self, j: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.value(i, j) == 0.0).collect()
    }

    /// Divides every row by its sum.
    pub fn normalize(&self) -> NormalizedInstance {
        let mut values = self.values.clone();
        for i in 0..self.n {
            let s = self.row_sum(i);
            for v in &mut values[i * self.m..(i + 1) * self.m] {
                *v /= s;
            }
        }
        NormalizedInstance(Instance {
            kind: self.kind,
            n: self.n,
            m: self.m,
            values,
        })
    }

    /// Proportional share `v_i(M) / n`.
    pub fn prop_share(&self, i: usize) -> f64 {
        self.row_sum(i) / self.n as f64
    }

    /// Value that agent `i` assigns to the bundle of agent `k`.
    pub fn bundle_value<A: Shares + ?Sized>(&self, alloc: &A, i: usize, k: usize) -> f64 {
        debug_assert_eq!(alloc.n_items(), self.m);
        (0..self.m)
            .map(|j| alloc.share(k, j) * self.value(i, j))
            .sum()
    }

    /// Each agent's value for its own bundle.
    pub fn own_values<A: Shares + ?Sized>(&self, alloc: &A) -> Vec<f64> {
        (0..self.n).map(|i| self.bundle_value(alloc, i, i)).collect()
    }

    pub fn check_allocation<A: Shares + ?Sized>(&self, alloc: &A) -> Result<()> {
        if alloc.n_agents() != self.n || alloc.n_items() != self.m {
            return Err(Error::Dimension(format!(
                "allocation is {}x{}, instance is {}x{}",
                alloc.n_agents(),
                alloc.n_items(),
                self.n,
                self.m
            )));
        }
        Ok(())
    }
}

/// An instance whose rows sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedInstance(Instance);

impl NormalizedInstance {
    pub fn instance(&self) -> &Instance {
        &self.0
    }

    pub fn into_instance(self) -> Instance {
        self.0
    }
}

impl Deref for NormalizedInstance {
    type Target = Instance;

    fn deref(&self) -> &Instance {
        &self.0
    }
}

/// Read access to an allocation as an `n x m` share matrix.
pub trait Shares {
    fn n_agents(&self) -> usize;
    fn n_items(&self) -> usize;
    fn share(&self, i: usize, j: usize) -> f64;
}

/// `x[i][j]` is the fraction of item `j` held by agent `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct FractionalAllocation {
    n: usize,
    m: usize,
    x: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for FractionalAllocation {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        FractionalAllocation::new(rows)
    }
}

impl From<FractionalAllocation> for Vec<Vec<f64>> {
    fn from(a: FractionalAllocation) -> Self {
        a.rows()
    }
}

impl FractionalAllocation {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if n == 0 || m == 0 {
            return Err(Error::Dimension("empty allocation".into()));
        }
        let mut x = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Dimension(format!(
                    "allocation row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(-COLUMN_TOL..=1.0 + COLUMN_TOL).contains(&v) {
                    return Err(Error::Domain(format!(
                        "share x[{i}][{j}] = {v} is outside [0, 1]"
                    )));
                }
                x.push(v.clamp(0.0, 1.0));
            }
        }
        let alloc = FractionalAllocation { n, m, x };
        for j in 0..m {
            let s = alloc.column_sum(j);
            if (s - 1.0).abs() > COLUMN_TOL {
                return Err(Error::Domain(format!("column {j} sums to {s}, expected 1")));
            }
        }
        Ok(alloc)
    }

    /// Builds an allocation from a flat row-major buffer without validation.
    pub fn from_flat(n: usize, m: usize, x: Vec<f64>) -> Self {
        assert_eq!(x.len(), n * m);
        FractionalAllocation { n, m, x }
    }

    pub fn uniform(n: usize, m: usize) -> Self {
        FractionalAllocation {
            n,
            m,
            x: vec![1.0 / n as f64; n * m],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.x[i * self.m + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.x.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    pub fn is_integral(&self, tol: f64) -> bool {
        self.x.iter().all(|&v| v <= tol || v >= 1.0 - tol)
    }
}

impl Shares for FractionalAllocation {
    fn n_agents(&self) -> usize {
        self.n
    }

    fn n_items(&self) -> usize {
        self.m
    }

    #[inline]
    fn share(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

/// `owner[j]` is the agent that receives item `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IntegralAllocation {
    n: usize,
    owner: Vec<usize>,
}

impl IntegralAllocation {
    pub fn new(n: usize, owner: Vec<usize>) -> Result<Self> {
        if n == 0 || owner.is_empty() {
            return Err(Error::Dimension("empty allocation".into()));
        }
        if let Some((j, &o)) = owner.iter().enumerate().find(|(_, &o)| o >= n) {
            return Err(Error::Domain(format!("item {j} assigned to agent {o} >= n = {n}")));
        }
        Ok(IntegralAllocation { n, owner })
    }

    pub fn from_bundles(n: usize, m: usize, bundles: &[Vec<usize>]) -> Result<Self> {
        let mut owner = vec![usize::MAX; m];
        for (i, b) in bundles.iter().enumerate() {
            for &j in b {
                if j >= m || owner[j] != usize::MAX {
                    return Err(Error::Domain(format!("item {j} is out of range or assigned twice")));
                }
                owner[j] = i;
            }
        }
        if let Some(j) = owner.iter().position(|&o| o == usize::MAX) {
            return Err(Error::Domain(format!("item {j} is unassigned")));
        }
        Self::new(n, owner)
    }

    pub fn owner(&self, j: usize) -> usize {
        self.owner[j]
    }

    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    pub fn bundle(&self, i: usize) -> Vec<usize> {
        (0..self.owner.len()).filter(|&j| self.owner[j] == i).collect()
    }

    pub fn bundles(&self) -> Vec<Vec<usize>> {
        (0..self.n).map(|i| self.bundle(i)).collect()
    }

    pub fn to_fractional(&self) -> FractionalAllocation {
        let m = self.owner.len();
        let mut x = vec![0.0; self.n * m];
        for (j, &o) in self.owner.iter().enumerate() {
            x[o * m + j] = 1.0;
        }
        FractionalAllocation::from_flat(self.n, m, x)
    }
}

impl Shares for IntegralAllocation {
    fn n_agents(&self) -> usize {
        self.n
    }

    fn n_items(&self) -> usize {
        self.owner.len()
    }

    #[inline]
    fn share(&self, i: usize, j: usize) -> f64 {
        if self.owner[j] == i {
            1.0
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_rows() {
        let inst = Instance::new(Kind::Goods, vec![vec![2.0, 2.0], vec![1.0, 3.0]]).unwrap();
        let norm = inst.normalize();
        assert_eq!(norm.row(0), &[0.5, 0.5]);
        assert_eq!(norm.row(1), &[0.25, 0.75]);
    }

    #[test]
    fn negative_entry_reports_position() {
        let err = Instance::new(Kind::Goods, vec![vec![1.0, 0.0], vec![-1.0, 2.0]]).unwrap_err();
        match err {
            Error::InvalidInstance { row, col, .. } => assert_eq!((row, col), (1, 0)),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn zero_row_rejected() {
        assert!(Instance::new(Kind::Chores, vec![vec![0.0, 0.0], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let inst = Instance::from_json(r#"{"kind":"chores","values":[[1,2],[3,4]]}"#).unwrap();
        assert_eq!(inst.kind(), Kind::Chores);
        assert_eq!(inst.value(1, 0), 3.0);
        let back = Instance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn bundle_value_and_prop_share() {
        let inst = Instance::new(Kind::Goods, vec![vec![1.0, 3.0], vec![2.0, 2.0]]).unwrap();
        let a = IntegralAllocation::new(2, vec![1, 0]).unwrap();
        assert_eq!(inst.bundle_value(&a, 0, 0), 3.0);
        assert_eq!(inst.bundle_value(&a, 0, 1), 1.0);
        assert_eq!(inst.prop_share(1), 2.0);
    }

    #[test]
    fn fractional_validation() {
        assert!(FractionalAllocation::new(vec![vec![0.5, 1.0], vec![0.5, 0.0]]).is_ok());
        assert!(FractionalAllocation::new(vec![vec![0.6, 1.0], vec![0.5, 0.0]]).is_err());
    }

    #[test]
    fn bundles_round_trip() {
        let a = IntegralAllocation::from_bundles(2, 3, &[vec![2], vec![0, 1]]).unwrap();
        assert_eq!(a.owners(), &[1, 1, 0]);
        assert_eq!(a.bundles(), vec![vec![2], vec![0, 1]]);
    }
}
