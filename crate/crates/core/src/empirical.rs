//! The sequential empirical process
//! `W_n(s, t) = sum_{k=1}^{floor(nt)} (1{ξ_{S_k} <= s} - s)`,
//! its normings, and the occupation-time statistics of the walk.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteKey;
use crate::walk::{Path, Regime};

/// `floor(n t)` with a `1e-9` guard against representation error, so that
/// e.g. `t = 0.29, n = 100` gives 29.
pub fn floor_steps(n: usize, t: f64) -> usize {
    let x = (n as f64 * t + 1e-9).floor();
    if x <= 0.0 {
        0
    } else {
        (x as usize).min(n)
    }
}

/// Norming sequence `a_n`: `sqrt(n)` in the transient regime,
/// `sqrt(n ln n)` in the recurrent ones.
pub fn norming_value(regime: Regime, n: usize) -> Result<f64> {
    match regime {
        Regime::Transient if n >= 1 => Ok((n as f64).sqrt()),
        Regime::Cauchy | Regime::Planar if n >= 2 => {
            let n = n as f64;
            Ok((n * n.ln()).sqrt())
        }
        _ => Err(Error::DomainError(format!(
            "norming for {} needs n >= {}, got {n}",
            regime.label(),
            if regime == Regime::Transient { 1 } else { 2 }
        ))),
    }
}

/// Visit counts `N_n(x)` over `k = 1..n` and their summaries.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationStats {
    pub n: usize,
    /// `Λ_n = sum_x N_n(x)^2`.
    pub lambda: u64,
    pub sup_count: u64,
    /// Sorted by key.
    counts: Vec<(SiteKey, u64)>,
}

impl OccupationStats {
    pub fn distinct_sites(&self) -> usize {
        self.counts.len()
    }

    pub fn count_at(&self, site: &[i64]) -> u64 {
        SiteKey::pack(site)
            .ok()
            .and_then(|k| self.counts.binary_search_by_key(&k, |e| e.0).ok())
            .map_or(0, |i| self.counts[i].1)
    }

    pub fn counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts.iter().map(|e| e.1)
    }

    /// `sum_x N_n(x)^p`.
    pub fn power_sum(&self, p: i32) -> f64 {
        self.counts.iter().map(|e| (e.1 as f64).powi(p)).sum()
    }

    /// `sum_x N(x) N'(x)` against another set of counts.
    pub fn cross(&self, other: &OccupationStats) -> u64 {
        merge_product(&self.counts, &other.counts)
    }

    pub fn summary(&self) -> OccupationSummary {
        OccupationSummary {
            n: self.n,
            lambda: self.lambda,
            sup: self.sup_count,
            distinct_sites: self.counts.len(),
        }
    }
}

/// JSON form `{n, lambda, sup, distinct_sites}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupationSummary {
    pub n: usize,
    pub lambda: u64,
    pub sup: u64,
    pub distinct_sites: usize,
}

fn sorted_counts(sites: impl Iterator<Item = Result<SiteKey>>) -> Result<Vec<(SiteKey, u64)>> {
    let mut keys = sites.collect::<Result<Vec<_>>>()?;
    keys.sort_unstable();
    let mut out: Vec<(SiteKey, u64)> = Vec::new();
    for k in keys {
        match out.last_mut() {
            Some((last, c)) if *last == k => *c += 1,
            _ => out.push((k, 1)),
        }
    }
    Ok(out)
}

fn prefix_counts(path: &Path, m: usize) -> Result<Vec<(SiteKey, u64)>> {
    sorted_counts(path.positions().take(m).map(SiteKey::pack))
}

/// `a_n^2`, computed without the square root.
pub fn norming_squared(regime: Regime, n: usize) -> Result<f64> {
    norming_value(regime, n)?;
    let n = n as f64;
    Ok(match regime {
        Regime::Transient => n,
        Regime::Cauchy | Regime::Planar => n * n.ln(),
    })
}

/// Occupation statistics of `S_1..S_{n_prefix}`.
pub fn occupation_stats(path: &Path, n_prefix: usize) -> Result<OccupationStats> {
    if n_prefix == 0 || n_prefix > path.len() {
        return Err(Error::InvalidInput(format!(
            "prefix {n_prefix} not in 1..={}",
            path.len()
        )));
    }
    let counts = prefix_counts(path, n_prefix)?;
    let lambda = counts.iter().map(|e| e.1 * e.1).sum();
    let sup_count = counts.iter().map(|e| e.1).max().unwrap_or(0);
    Ok(OccupationStats {
        n: n_prefix,
        lambda,
        sup_count,
        counts,
    })
}

fn merge_product(a: &[(SiteKey, u64)], b: &[(SiteKey, u64)]) -> u64 {
    let (mut i, mut j, mut acc) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// `sum_x N_{floor(ns)}(x) N_{floor(nt)}(x)`.
pub fn cross_intersection(path: &Path, s: f64, t: f64, n: usize) -> Result<u64> {
    if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput("fractions must lie in [0, 1]".into()));
    }
    if n > path.len() {
        return Err(Error::InvalidInput("n exceeds path length".into()));
    }
    let (a, b) = (floor_steps(n, s), floor_steps(n, t));
    if a == 0 || b == 0 {
        return Ok(0);
    }
    let ca = prefix_counts(path, a)?;
    if a == b {
        return Ok(ca.iter().map(|e| e.1 * e.1).sum());
    }
    let cb = prefix_counts(path, b)?;
    Ok(merge_product(&ca, &cb))
}

/// Number of pairs `0 <= k <= floor(an) < l <= floor(bn)` with `S_k = S_l`,
/// counting the origin `S_0 = 0`.
pub fn block_cross_sum(path: &Path, a: f64, b: f64, n: usize) -> Result<u64> {
    if !(0.0 <= a && a < b && b <= 1.0) || n > path.len() {
        return Err(Error::InvalidInput(
            "need 0 <= a < b <= 1 and n <= path length".into(),
        ));
    }
    let (ka, kb) = (floor_steps(n, a), floor_steps(n, b));
    let origin = vec![0i64; path.dim()];
    let first = sorted_counts(
        std::iter::once(SiteKey::pack(&origin)).chain(path.positions().take(ka).map(SiteKey::pack)),
    )?;
    let second = sorted_counts(path.positions().take(kb).skip(ka).map(SiteKey::pack))?;
    Ok(merge_product(&first, &second))
}

/// `W_n(s, t)` on a grid, stored raw with the norming kept separately.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSheet {
    pub grid_s: Vec<f64>,
    pub grid_t: Vec<f64>,
    /// Row-major: `values[i * grid_t.len() + j] = W_n(s_i, t_j)`.
    pub values: Vec<f64>,
    pub norming: f64,
    pub n: usize,
    /// `floor(n t_j)`.
    pub steps: Vec<usize>,
    /// RWRS partial sums `Z_{floor(n t_j)} = sum_k ξ_{S_k}`.
    pub partial_sums: Vec<f64>,
}

impl EmpiricalSheet {
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid_t.len() + j]
    }

    pub fn normalized(&self, i: usize, j: usize) -> f64 {
        self.value(i, j) / self.norming
    }

    pub fn normalized_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v / self.norming).collect()
    }

    /// CSV: header `s\t,<t_0>,<t_1>,...`, then one row per `s` of normalized
    /// values.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["s\\t".to_string()];
        header.extend(self.grid_t.iter().map(|t| t.to_string()));
        wr.write_record(&header)?;
        for (i, s) in self.grid_s.iter().enumerate() {
            let mut row = vec![s.to_string()];
            row.extend((0..self.grid_t.len()).map(|j| self.normalized(i, j).to_string()));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub(crate) fn check_grid(grid: &[f64], name: &'static str) -> Result<()> {
    if grid.is_empty()
        || grid.iter().any(|x| !(0.0..=1.0).contains(x))
        || grid.windows(2).any(|w| !(w[0] <= w[1]))
    {
        return Err(Error::GridUnsorted(name));
    }
    Ok(())
}

/// `W_n` on `grid_s × grid_t` in `O(n + |grid_s| |grid_t|)` (plus a binary
/// search per mark): marks are bucketed into threshold cells, counted per
/// time slab, then prefix-summed in both directions.
///
/// A mark equal to a threshold counts as `<=` it.
pub fn empirical_sheet(
    marks: &[f64],
    grid_s: &[f64],
    grid_t: &[f64],
    norming: f64,
) -> Result<EmpiricalSheet> {
    if marks.is_empty() {
        return Err(Error::InvalidInput("no marks".into()));
    }
    check_grid(grid_s, "grid_s")?;
    check_grid(grid_t, "grid_t")?;
    let n = marks.len();
    let (ns, nt) = (grid_s.len(), grid_t.len());
    let steps: Vec<usize> = grid_t.iter().map(|&t| floor_steps(n, t)).collect();
    // counts[i][j]: marks in bucket i during slab (steps[j-1], steps[j]]
    let mut counts = vec![0u64; ns * nt];
    let mut partial_sums = vec![0.0; nt];
    let mut prev = 0;
    let mut running = 0.0;
    for (j, &end) in steps.iter().enumerate() {
        for &m in &marks[prev..end] {
            let bucket = grid_s.partition_point(|&s| s < m);
            if bucket < ns {
                counts[bucket * nt + j] += 1;
            }
            running += m;
        }
        partial_sums[j] = running;
        prev = end;
    }
    for j in 1..nt {
        for i in 0..ns {
            counts[i * nt + j] += counts[i * nt + j - 1];
        }
    }
    for i in 1..ns {
        for j in 0..nt {
            counts[i * nt + j] += counts[(i - 1) * nt + j];
        }
    }
    let values = (0..ns)
        .flat_map(|i| (0..nt).map(move |j| (i, j)))
        .map(|(i, j)| counts[i * nt + j] as f64 - steps[j] as f64 * grid_s[i])
        .collect();
    Ok(EmpiricalSheet {
        grid_s: grid_s.to_vec(),
        grid_t: grid_t.to_vec(),
        values,
        norming,
        n,
        steps,
        partial_sums,
    })
}

/// `W_n(·, 1)` on the grid `{0} ∪ sorted marks ∪ {1}`, on which the sheet is
/// exact between grid points.
pub fn jump_sheet(marks: &[f64], norming: f64) -> Result<EmpiricalSheet> {
    if marks.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(Error::InvalidInput("marks must lie in [0, 1]".into()));
    }
    let mut grid: Vec<f64> = marks.to_vec();
    grid.push(0.0);
    grid.push(1.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    empirical_sheet(marks, &grid, &[1.0], norming)
}

/// `{0, 0.05, ..., 1}`.
pub fn default_grid_s() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// `{0, 1/20, ..., 1}`.
pub fn default_grid_t() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}
