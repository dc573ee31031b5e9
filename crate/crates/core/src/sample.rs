//! Seeded random instances for tests and experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{Instance, Kind};

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[0.05, 1)`, each row scaled to sum to one.
pub fn dense(rng: &mut impl Rng, kind: Kind, n: usize, m: usize) -> Instance {
    let rows = (0..n)
        .map(|_| {
            let row: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|v| v / s).collect()
        })
        .collect();
    Instance::new(kind, rows).expect("sampled entries are positive")
}

/// Like [`dense`] but each entry is zero with probability 0.3, keeping every
/// row non-zero.
pub fn sparse_goods(rng: &mut impl Rng, n: usize, m: usize) -> Instance {
    let rows = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..m)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.05..1.0) })
                .collect();
            if row.iter().all(|v| *v == 0.0) {
                let j = rng.random_range(0..m);
                row[j] = rng.random_range(0.05..1.0);
            }
            let s: f64 = row.iter().sum();
            row.into_iter().map(|v| v / s).collect()
        })
        .collect();
    Instance::new(Kind::Goods, rows).expect("every row has a positive entry")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_normalized() {
        let a = dense(&mut rng(7), Kind::Goods, 3, 4);
        let b = dense(&mut rng(7), Kind::Goods, 3, 4);
        assert_eq!(a, b);
        for i in 0..3 {
            assert!((a.row_sum(i) - 1.0).abs() < 1e-12);
            assert!(a.row(i).iter().all(|v| *v > 0.0));
        }
        let s = sparse_goods(&mut rng(1), 4, 6);
        assert!((0..4).all(|i| s.row_sum(i) > 0.0));
    }
}
