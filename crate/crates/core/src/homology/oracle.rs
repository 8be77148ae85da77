//! Betti numbers of a single sublevel set by dense GF(2) elimination.
//!
//! Shares nothing with the persistence engines beyond the complex itself:
//! it enumerates the cells present at `t`, builds each boundary map as
//! bitsets and computes ranks directly.

use std::collections::HashMap;

use crate::cubical::{boundary, CubicalCell, FilteredCubicalComplex};
use crate::error::{Error, Result};

/// Largest complex the oracle accepts.
pub const ORACLE_CELL_CAP: usize = 10_000;

/// `(b0, b1, b2)` of the sublevel set `{value <= t}`.
pub fn betti_rank_oracle(f: &FilteredCubicalComplex, t: f64) -> Result<[usize; 3]> {
    let b = betti_rank_oracle_full(f, t)?;
    Ok([b[0], b[1], b[2]])
}

/// Like [`betti_rank_oracle`] but also reports `b3`.
pub fn betti_rank_oracle_full(f: &FilteredCubicalComplex, t: f64) -> Result<[usize; 4]> {
    if f.num_cells() > ORACLE_CELL_CAP {
        return Err(Error::OracleTooLarge {
            cells: f.num_cells(),
            cap: ORACLE_CELL_CAP,
        });
    }

    let mut by_dim: [Vec<CubicalCell>; 4] = Default::default();
    let [g0, g1, g2] = f.grid();
    for x in 0..g0 {
        for y in 0..g1 {
            for z in 0..g2 {
                let c = CubicalCell::new(x, y, z);
                if f.value_of(&c) <= t {
                    by_dim[c.dim()].push(c);
                }
            }
        }
    }
    let position: Vec<HashMap<CubicalCell, usize>> = by_dim
        .iter()
        .map(|cells| cells.iter().enumerate().map(|(i, &c)| (c, i)).collect())
        .collect();

    // rank of the boundary map from dimension k to k - 1, for k = 1..=3
    let mut ranks = [0usize; 5];
    for k in 1..=3 {
        let rows = by_dim[k - 1].len();
        let columns: Vec<Vec<u64>> = by_dim[k]
            .iter()
            .map(|c| {
                let mut bits = vec![0u64; rows.div_ceil(64)];
                for face in boundary(c) {
                    let r = position[k - 1][&face];
                    bits[r / 64] ^= 1 << (r % 64);
                }
                bits
            })
            .collect();
        ranks[k] = gf2_rank(columns);
    }

    let mut betti = [0usize; 4];
    for k in 0..=3 {
        betti[k] = by_dim[k].len() - ranks[k] - ranks[k + 1];
    }
    Ok(betti)
}

/// Rank of a set of GF(2) vectors, by insertion into an echelon basis keyed
/// on the highest set bit.
pub fn gf2_rank(vectors: Vec<Vec<u64>>) -> usize {
    let mut basis: HashMap<usize, Vec<u64>> = HashMap::new();
    for mut v in vectors {
        while let Some(lead) = highest_bit(&v) {
            match basis.get(&lead) {
                Some(b) => {
                    for (x, y) in v.iter_mut().zip(b) {
                        *x ^= y;
                    }
                }
                None => {
                    basis.insert(lead, v);
                    break;
                }
            }
        }
    }
    basis.len()
}

fn highest_bit(v: &[u64]) -> Option<usize> {
    v.iter()
        .enumerate()
        .rev()
        .find(|(_, &w)| w != 0)
        .map(|(i, &w)| i * 64 + 63 - w.leading_zeros() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_small_systems() {
        assert_eq!(gf2_rank(vec![vec![0b011], vec![0b110], vec![0b101]]), 2);
        assert_eq!(gf2_rank(vec![vec![0b001], vec![0b010], vec![0b100]]), 3);
        assert_eq!(gf2_rank(vec![vec![0], vec![0]]), 0);
        assert_eq!(gf2_rank(vec![vec![0, 1], vec![1, 1], vec![1, 0]]), 2);
    }
}
