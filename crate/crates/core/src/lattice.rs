//! Integer-lattice helpers: packed site keys and subgroup generation tests.

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 16;

/// A lattice site packed into 128 bits.
///
/// Each coordinate gets `128 / d` bits in offset encoding, so for `d <= 2`
/// every `i64` is representable and for `d = 3` coordinates up to about
/// `2^41` in magnitude are.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteKey(pub u128);

impl SiteKey {
    pub fn pack(site: &[i64]) -> Result<Self> {
        let d = site.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidInput(format!("unsupported dimension {d}")));
        }
        let bits = (128 / d).min(64) as u32;
        let mut key: u128 = 0;
        for &x in site {
            let field = if bits == 64 {
                (x as u64 ^ (1u64 << 63)) as u128
            } else {
                let half = 1i64 << (bits - 1);
                if x < -half || x >= half {
                    return Err(Error::CoordinateOverflow);
                }
                (x + half) as u128
            };
            key = if bits == 128 {
                field
            } else {
                (key << bits) | field
            };
        }
        Ok(SiteKey(key))
    }
}

/// True when the integer vectors generate all of `Z^d` as a group.
///
/// Row-reduces the vectors with Euclidean steps (a Hermite-style echelon
/// form); the generated group is `Z^d` iff there are `d` pivots, all `±1`.
#[allow(clippy::needless_range_loop, clippy::explicit_counter_loop)]
pub fn generates_full_lattice(vectors: &[Vec<i64>], d: usize) -> bool {
    let mut rows: Vec<Vec<i128>> = vectors
        .iter()
        .map(|v| v.iter().map(|&x| x as i128).collect())
        .filter(|v: &Vec<i128>| v.iter().any(|&x| x != 0))
        .collect();
    let mut pivot_row = 0;
    for col in 0..d {
        loop {
            // pick the row with the smallest nonzero entry in this column
            let mut best: Option<usize> = None;
            for r in pivot_row..rows.len() {
                let x = rows[r][col];
                if x != 0 && best.is_none_or(|b| x.abs() < rows[b][col].abs()) {
                    best = Some(r);
                }
            }
            let Some(b) = best else { return false };
            rows.swap(pivot_row, b);
            let p = rows[pivot_row][col];
            let mut reduced_all = true;
            for r in pivot_row + 1..rows.len() {
                let q = rows[r][col].div_euclid(p);
                if q != 0 {
                    for c in col..d {
                        rows[r][c] -= q * rows[pivot_row][c];
                    }
                }
                if rows[r][col] != 0 {
                    reduced_all = false;
                }
            }
            if reduced_all {
                break;
            }
        }
        if rows[pivot_row][col].abs() != 1 {
            return false;
        }
        pivot_row += 1;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packing_is_injective_on_small_box() {
        let mut keys = Vec::new();
        for x in -3..=3 {
            for y in -3..=3 {
                for z in -3..=3 {
                    keys.push(SiteKey::pack(&[x, y, z]).unwrap());
                }
            }
        }
        let n = keys.len();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), n);
    }

    #[test]
    fn packing_extremes() {
        assert_ne!(
            SiteKey::pack(&[i64::MIN]).unwrap(),
            SiteKey::pack(&[i64::MAX]).unwrap()
        );
        assert_ne!(
            SiteKey::pack(&[i64::MIN, 0]).unwrap(),
            SiteKey::pack(&[0, i64::MIN]).unwrap()
        );
        assert!(matches!(
            SiteKey::pack(&[1i64 << 50, 0, 0]),
            Err(Error::CoordinateOverflow)
        ));
    }

    #[test]
    fn lattice_generation() {
        assert!(generates_full_lattice(&[vec![1]], 1));
        assert!(generates_full_lattice(&[vec![2], vec![3]], 1));
        assert!(!generates_full_lattice(&[vec![2], vec![4]], 1));
        assert!(!generates_full_lattice(&[vec![0]], 1));
        assert!(generates_full_lattice(&[vec![1, 0], vec![0, 1]], 2));
        // (1,1), (1,-1) generate the even sublattice
        assert!(!generates_full_lattice(&[vec![1, 1], vec![1, -1]], 2));
        assert!(generates_full_lattice(
            &[vec![1, 1], vec![1, -1], vec![1, 0]],
            2
        ));
        assert!(!generates_full_lattice(&[vec![1, 0, 0], vec![0, 1, 0]], 3));
    }
}
