//! Random sceneries on `Z^d` and quantile transforms of their marks.
//!
//! A scenery never stores a box of sites: the mark at `x` is a keyed hash of
//! `(seed, x)` mapped to `[0, 1)`, so it can be recomputed anywhere. The
//! memoizing wrapper exists for callers who revisit sites often.

use std::collections::HashMap;
use std::io::Read;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::rng::mix64;
use crate::walk::Path;

const COORD_LIMIT: i64 = 1 << 62;

/// Anything that assigns a mark to a lattice site.
pub trait MarkSource: Sync {
    fn mark(&self, site: &[i64]) -> Result<f64>;
}

/// I.i.d. Uniform[0,1) scenery keyed by a 64-bit seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Scenery {
    seed: u64,
    dim: usize,
}

impl Scenery {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mark at `site`; a pure function of `(seed, site)`.
    pub fn at(&self, site: &[i64]) -> Result<f64> {
        if site.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "site has {} coordinates, scenery is {}-dimensional",
                site.len(),
                self.dim
            )));
        }
        if site
            .iter()
            .any(|&x| !(-COORD_LIMIT..COORD_LIMIT).contains(&x))
        {
            return Err(Error::CoordinateOverflow);
        }
        Ok(unit_from_bits(site_hash(self.seed, site)))
    }
}

impl MarkSource for Scenery {
    fn mark(&self, site: &[i64]) -> Result<f64> {
        self.at(site)
    }
}

#[inline]
fn site_hash(seed: u64, site: &[i64]) -> u64 {
    let mut h = mix64(seed ^ 0x6a09_e667_f3bc_c909);
    for (i, &x) in site.iter().enumerate() {
        let lane = (x as u64).wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        h = mix64(h ^ mix64(lane));
    }
    mix64(h.wrapping_add(site.len() as u64))
}

#[inline]
fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Scenery with a concurrent memo table in front of the hash.
#[derive(Debug)]
pub struct MemoScenery {
    inner: Scenery,
    cache: RwLock<HashMap<Vec<i64>, f64>>,
}

impl MemoScenery {
    pub fn new(inner: Scenery) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn cached_sites(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }
}

impl MarkSource for MemoScenery {
    fn mark(&self, site: &[i64]) -> Result<f64> {
        if let Some(&m) = self
            .cache
            .read()
            .ok()
            .and_then(|c| c.get(site).copied())
            .as_ref()
        {
            return Ok(m);
        }
        let m = self.inner.at(site)?;
        if let Ok(mut c) = self.cache.write() {
            c.insert(site.to_vec(), m);
        }
        Ok(m)
    }
}

/// Uniform scenery with marks shifted by `shift` on the half-space
/// `{x[axis] < threshold}`.
///
/// With `shift = 0.5` the marks there are Uniform[0.5, 1.5).
#[derive(Clone, Copy, Debug)]
pub struct HalfSpaceShift {
    pub base: Scenery,
    pub axis: usize,
    pub threshold: i64,
    pub shift: f64,
}

impl MarkSource for HalfSpaceShift {
    fn mark(&self, site: &[i64]) -> Result<f64> {
        let u = self.base.at(site)?;
        let x = *site
            .get(self.axis)
            .ok_or_else(|| Error::InvalidInput("shift axis exceeds dimension".into()))?;
        Ok(if x < self.threshold {
            u + self.shift
        } else {
            u
        })
    }
}

/// Marks `(ξ_{S_1}, …, ξ_{S_n})` along a path.
pub fn evaluate_along(path: &Path, scenery: &impl MarkSource) -> Result<Vec<f64>> {
    path.positions().map(|p| scenery.mark(p)).collect()
}

/// A distribution function and its generalized inverse
/// `F^{-1}(s) = inf { x : F(x) >= s }`.
pub enum QuantileTransform {
    /// Right-continuous step function: `F(x) = F_i` for `x_i <= x < x_{i+1}`,
    /// 0 below `x_0`.
    Table { xs: Vec<f64>, fs: Vec<f64> },
    /// Continuous, nondecreasing `F` on a bracket `[lo, hi]` with
    /// `F(lo) = 0` and `F(hi) = 1`; the inverse is found by bisection.
    Cdf {
        cdf: Box<dyn Fn(f64) -> f64 + Send + Sync>,
        lo: f64,
        hi: f64,
    },
}

impl std::fmt::Debug for QuantileTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Table { xs, fs } => f
                .debug_struct("Table")
                .field("xs", xs)
                .field("fs", fs)
                .finish(),
            Self::Cdf { lo, hi, .. } => f
                .debug_struct("Cdf")
                .field("lo", lo)
                .field("hi", hi)
                .finish(),
        }
    }
}

impl QuantileTransform {
    pub fn table(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != fs.len() {
            return Err(Error::InvalidInput(
                "quantile table needs matching nonempty columns".into(),
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "table x column must be strictly increasing".into(),
            ));
        }
        if fs.windows(2).any(|w| !(w[0] <= w[1])) || fs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidInput(
                "table F column must be nondecreasing in [0, 1]".into(),
            ));
        }
        if fs[fs.len() - 1] != 1.0 {
            return Err(Error::InvalidInput("table F column must end at 1".into()));
        }
        Ok(Self::Table { xs, fs })
    }

    pub fn identity() -> Self {
        Self::Cdf {
            cdf: Box::new(|x| x.clamp(0.0, 1.0)),
            lo: 0.0,
            hi: 1.0,
        }
    }

    /// Reads a table from CSV rows `x,F(x)` with a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let mut xs = Vec::new();
        let mut fs = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("bad quantile table row {rec:?}")))
            };
            xs.push(parse(0)?);
            fs.push(parse(1)?);
        }
        Self::table(xs, fs)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Table { xs, fs } => {
                let i = xs.partition_point(|&xi| xi <= x);
                if i == 0 {
                    0.0
                } else {
                    fs[i - 1]
                }
            }
            Self::Cdf { cdf, .. } => cdf(x),
        }
    }

    pub fn inverse(&self, s: f64) -> f64 {
        match self {
            Self::Table { xs, fs } => {
                let i = fs.partition_point(|&f| f < s);
                xs[i.min(xs.len() - 1)]
            }
            Self::Cdf { cdf, lo, hi } => {
                if s <= 0.0 {
                    return *lo;
                }
                let (mut a, mut b) = (*lo, *hi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    if mid <= a || mid >= b {
                        break;
                    }
                    if cdf(mid) >= s {
                        b = mid;
                    } else {
                        a = mid;
                    }
                }
                b
            }
        }
    }
}

/// Applies `F^{-1}` to each mark.
pub fn transform(marks: &[f64], qt: &QuantileTransform) -> Vec<f64> {
    marks.iter().map(|&u| qt.inverse(u)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{build_model, lazy_walk, sample_path, BuildOptions};

    #[test]
    fn marks_are_deterministic() {
        let s = Scenery::new(42, 2);
        assert_eq!(s.at(&[3, -7]).unwrap(), s.at(&[3, -7]).unwrap());
        assert_ne!(s.at(&[3, -7]).unwrap(), s.at(&[-7, 3]).unwrap());
        assert_ne!(
            s.at(&[3, -7]).unwrap(),
            Scenery::new(43, 2).at(&[3, -7]).unwrap()
        );
    }

    #[test]
    fn coordinate_range_is_enforced() {
        let s = Scenery::new(1, 1);
        assert!(matches!(s.at(&[i64::MAX]), Err(Error::CoordinateOverflow)));
        assert!(s.at(&[COORD_LIMIT - 1]).is_ok());
    }

    #[test]
    fn memo_is_transparent() {
        let base = Scenery::new(5, 3);
        let memo = MemoScenery::new(base);
        let m = build_model(lazy_walk(3), &BuildOptions::default()).unwrap();
        let path = sample_path(&m, 2000, 1).unwrap();
        let a = evaluate_along(&path, &memo).unwrap();
        let b = evaluate_along(&path, &memo).unwrap();
        let c = evaluate_along(&path, &base).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(memo.cached_sites() <= 2000);
    }

    #[test]
    fn revisits_reproduce_marks() {
        let path = Path::from_positions(1, vec![1, 0, 1], 0).unwrap();
        let marks = evaluate_along(&path, &Scenery::new(9, 1)).unwrap();
        assert_eq!(marks[0], marks[2]);
        let single = Path::from_positions(1, vec![4], 0).unwrap();
        assert_eq!(
            evaluate_along(&single, &Scenery::new(9, 1)).unwrap(),
            vec![Scenery::new(9, 1).at(&[4]).unwrap()]
        );
    }

    #[test]
    fn transform_examples() {
        let marks = [0.0, 0.25, 0.5, 0.999];
        let id = transform(&marks, &QuantileTransform::identity());
        for (a, b) in id.iter().zip(&marks) {
            assert!((a - b).abs() < 1e-15);
        }
        let point = QuantileTransform::table(vec![7.0], vec![1.0]).unwrap();
        assert!(transform(&marks, &point).iter().all(|&x| x == 7.0));
        let two = QuantileTransform::table(vec![0.0, 1.0], vec![0.3, 1.0]).unwrap();
        assert_eq!(two.inverse(0.25), 0.0);
        assert_eq!(two.inverse(0.31), 1.0);
        assert_eq!(two.inverse(0.3), 0.0);
    }

    #[test]
    fn table_validation() {
        assert!(QuantileTransform::table(vec![0.0, 0.0], vec![0.5, 1.0]).is_err());
        assert!(QuantileTransform::table(vec![0.0, 1.0], vec![0.5, 0.9]).is_err());
        assert!(QuantileTransform::table(vec![0.0, 1.0], vec![0.6, 0.5]).is_err());
        let t = QuantileTransform::from_csv("x,F\n0,0.3\n1,1\n".as_bytes()).unwrap();
        assert_eq!(t.cdf(0.5), 0.3);
        assert_eq!(t.cdf(-0.1), 0.0);
        assert_eq!(t.cdf(1.0), 1.0);
    }

    #[test]
    fn half_space_shift() {
        let base = Scenery::new(3, 3);
        let alt = HalfSpaceShift {
            base,
            axis: 0,
            threshold: 0,
            shift: 0.5,
        };
        assert_eq!(alt.mark(&[0, 4, 4]).unwrap(), base.at(&[0, 4, 4]).unwrap());
        assert_eq!(
            alt.mark(&[-1, 4, 4]).unwrap(),
            base.at(&[-1, 4, 4]).unwrap() + 0.5
        );
    }
}
