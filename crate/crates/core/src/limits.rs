//! Limit constants and the Gaussian limit objects: the Kiefer–Müller sheet,
//! the Brownian pillow, and simulated quantiles of the pillow supremum.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::check_grid;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, stream_rng};
use crate::walk::{Regime, StepLaw, WalkModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// `1 + 2 g` with `g` the Green sum.
    TransientSeries,
    /// `2 / (π A)`.
    StableScale,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitConstant {
    pub c: f64,
    pub regime: Regime,
    pub provenance: Provenance,
    pub error_bound: f64,
}

/// The constant `c` in the limit `a_n^{-1} W_n => sqrt(c) W`.
pub fn limit_constant(model: &WalkModel) -> Result<LimitConstant> {
    match model.regime {
        Regime::Transient => {
            let g = model.green.ok_or(Error::MissingParameter("green"))?;
            Ok(LimitConstant {
                c: 1.0 + 2.0 * g.g,
                regime: model.regime,
                provenance: Provenance::TransientSeries,
                error_bound: 2.0 * g.error_bound,
            })
        }
        Regime::Cauchy | Regime::Planar => {
            let a = model.a_param.ok_or(Error::MissingParameter("A"))?;
            let c = 2.0 / (std::f64::consts::PI * a);
            let band = model.a_band.unwrap_or(0.0);
            Ok(LimitConstant {
                c,
                regime: model.regime,
                provenance: Provenance::StableScale,
                error_bound: c * band / a,
            })
        }
    }
}

/// Fitted `A` with a half-width uncertainty band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AEstimate {
    pub a: f64,
    pub band: f64,
    /// Slopes at the two `n` before extrapolation.
    pub slopes: [f64; 2],
}

const FIT_N: [f64; 2] = [1024.0, 2048.0];

/// Estimates `A` in `φ(u/n)^n -> exp(-A|u|)` for a one-dimensional law.
pub fn estimate_a(law: &StepLaw) -> Result<AEstimate> {
    let mut err = None;
    let est = estimate_a_from_log_modulus(|u| match law.log_char_modulus(u) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            f64::NAN
        }
    });
    match err {
        Some(e) => Err(e),
        None => est,
    }
}

/// As [`estimate_a`], from `u -> ln|φ(u)|`.
///
/// Fits `-n ln|φ(u/n)| ≈ A u` through the origin for `u` in `[0.25, 2]` at
/// two values of `n`, then removes the `O(1/n)` bias with one Richardson
/// step.
pub fn estimate_a_from_log_modulus(mut log_mod: impl FnMut(f64) -> f64) -> Result<AEstimate> {
    let us: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    let suu: f64 = us.iter().map(|u| u * u).sum();
    let mut slopes = [0.0; 2];
    let mut resid = 0.0;
    for (slot, &n) in FIT_N.iter().enumerate() {
        let ys: Vec<f64> = us.iter().map(|&u| -n * log_mod(u / n)).collect();
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::FitDiverged(
                "non-finite characteristic function".into(),
            ));
        }
        let slope = us.iter().zip(&ys).map(|(u, y)| u * y).sum::<f64>() / suu;
        slopes[slot] = slope;
        resid = (us
            .iter()
            .zip(&ys)
            .map(|(u, y)| (y - slope * u).powi(2))
            .sum::<f64>()
            / suu)
            .sqrt();
    }
    let a = 2.0 * slopes[1] - slopes[0];
    if !(slopes[0] > 0.0) || slopes[1] / slopes[0] < 0.75 || !(a > 0.0) {
        return Err(Error::FitDiverged(format!(
            "slopes {:.3e} -> {:.3e} do not stabilise",
            slopes[0], slopes[1]
        )));
    }
    Ok(AEstimate {
        a,
        band: (slopes[1] - slopes[0]).abs() + resid,
        slopes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SheetKind {
    KieferMuller,
    Pillow,
}

/// A Gaussian sheet on a grid, row-major in `s`:
/// `values[i * grid_t.len() + j]` is the value at `(s_i, t_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianSheet {
    pub grid_s: Vec<f64>,
    pub grid_t: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SheetKind,
    pub seed: u64,
}

impl GaussianSheet {
    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid_t.len() + j]
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `t∧t' (s∧s' - s s')`.
pub fn km_covariance(s: f64, t: f64, s2: f64, t2: f64) -> f64 {
    t.min(t2) * (s.min(s2) - s * s2)
}

/// `(t∧t' - t t')(s∧s' - s s')`.
pub fn pillow_covariance(s: f64, t: f64, s2: f64, t2: f64) -> f64 {
    (t.min(t2) - t * t2) * (s.min(s2) - s * s2)
}

/// Kiefer–Müller values `B(s,t) - s B(1,t)` from a Brownian sheet `B` built
/// by cumulative sums of independent cell increments.
fn km_values<R: Rng + ?Sized>(rng: &mut R, grid_s: &[f64], grid_t: &[f64]) -> Vec<f64> {
    let (ns, nt) = (grid_s.len(), grid_t.len());
    // column ns holds s = 1
    let mut widths: Vec<f64> = Vec::with_capacity(ns + 1);
    let mut prev = 0.0;
    for &s in grid_s.iter().chain(std::iter::once(&1.0)) {
        widths.push((s - prev).sqrt());
        prev = s;
    }
    let mut b = vec![0.0; ns + 1];
    let mut values = vec![0.0; ns * nt];
    let mut prev_t = 0.0;
    for (j, &t) in grid_t.iter().enumerate() {
        let dt = (t - prev_t).sqrt();
        prev_t = t;
        let mut acc = 0.0;
        for (i, w) in widths.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            acc += w * dt * z;
            b[i] += acc;
        }
        let b1 = b[ns];
        for i in 0..ns {
            values[i * nt + j] = if grid_s[i] == 1.0 {
                0.0
            } else {
                b[i] - grid_s[i] * b1
            };
        }
    }
    values
}

/// Draws a Kiefer–Müller sheet on `grid_s × grid_t`, exact in distribution
/// at the grid points.
pub fn sample_kiefer_muller(grid_s: &[f64], grid_t: &[f64], seed: u64) -> Result<GaussianSheet> {
    check_grid(grid_s, "grid_s")?;
    check_grid(grid_t, "grid_t")?;
    let values = km_values(&mut rng_from_seed(seed), grid_s, grid_t);
    Ok(GaussianSheet {
        grid_s: grid_s.to_vec(),
        grid_t: grid_t.to_vec(),
        values,
        kind: SheetKind::KieferMuller,
        seed,
    })
}

/// `P(s,t) = W(s,t) - t W(s,1)`.
pub fn pillow_from_km(sheet: &GaussianSheet) -> Result<GaussianSheet> {
    if sheet.kind != SheetKind::KieferMuller {
        return Err(Error::InvalidInput("expected a Kiefer-Müller sheet".into()));
    }
    let j1 = sheet
        .grid_t
        .iter()
        .position(|&t| t == 1.0)
        .ok_or_else(|| Error::MissingBoundary("t = 1 is not on the grid".into()))?;
    let nt = sheet.grid_t.len();
    let mut values = sheet.values.clone();
    for i in 0..sheet.grid_s.len() {
        let w1 = sheet.values[i * nt + j1];
        for (j, &t) in sheet.grid_t.iter().enumerate() {
            values[i * nt + j] = if j == j1 {
                0.0
            } else {
                sheet.values[i * nt + j] - t * w1
            };
        }
    }
    Ok(GaussianSheet {
        values,
        kind: SheetKind::Pillow,
        ..sheet.clone()
    })
}

/// `{0, 1/m, ..., 1}`.
pub fn uniform_grid(m: usize) -> Vec<f64> {
    (0..=m).map(|i| i as f64 / m as f64).collect()
}

fn pillow_sup_replicate(grid: &[f64], seed: u64, replicate: u64) -> f64 {
    let mut rng = stream_rng(seed, replicate);
    let km = km_values(&mut rng, grid, grid);
    let nt = grid.len();
    let mut sup: f64 = 0.0;
    for i in 0..grid.len() {
        let w1 = km[i * nt + nt - 1];
        for (j, &t) in grid.iter().enumerate() {
            sup = sup.max((km[i * nt + j] - t * w1).abs());
        }
    }
    sup
}

/// Sorted sups of `|P|` over `{i/m}^2` for replicates `0..r`.
pub fn pillow_sups(m: usize, r: usize, seed: u64) -> Vec<f64> {
    let grid = uniform_grid(m);
    let mut sups: Vec<f64> = (0..r as u64)
        .into_par_iter()
        .map(|i| pillow_sup_replicate(&grid, seed, i))
        .collect();
    sups.sort_by(f64::total_cmp);
    sups
}

/// Comparison against a finer grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub m: usize,
    pub replicates: usize,
    pub q95: f64,
    /// `(q95(2m) - q95(m)) / q95(m)`.
    pub relative_change: f64,
}

/// Empirical distribution of the pillow supremum.
#[derive(Clone, Debug, PartialEq)]
pub struct PillowQuantiles {
    /// Grid resolution; unknown for tables read from CSV.
    pub m: Option<usize>,
    pub seed: Option<u64>,
    sups: Vec<f64>,
    pub refinement: Option<Refinement>,
}

impl PillowQuantiles {
    pub fn from_sups(mut sups: Vec<f64>) -> Result<Self> {
        if sups.is_empty() || sups.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::MissingQuantiles("empty or invalid table".into()));
        }
        sups.sort_by(f64::total_cmp);
        Ok(Self {
            m: None,
            seed: None,
            sups,
            refinement: None,
        })
    }

    pub fn replicates(&self) -> usize {
        self.sups.len()
    }

    pub fn sups(&self) -> &[f64] {
        &self.sups
    }

    /// Lower empirical quantile; level 0 gives 0.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&level) {
            return Err(Error::MissingQuantiles(format!(
                "level {level} outside [0, 1]"
            )));
        }
        if level == 0.0 {
            return Ok(0.0);
        }
        let r = self.sups.len();
        let idx = ((level * r as f64 - 1e-9).ceil() as usize).clamp(1, r);
        Ok(self.sups[idx - 1])
    }

    /// Fraction of simulated sups strictly above `x`.
    pub fn p_value(&self, x: f64) -> f64 {
        let above = self.sups.len() - self.sups.partition_point(|&s| s <= x);
        above as f64 / self.sups.len() as f64
    }

    /// Distribution-free interval for the `level` quantile from binomial
    /// order-statistic bounds at normal quantile `z`.
    pub fn quantile_ci(&self, level: f64, z: f64) -> (f64, f64) {
        let r = self.sups.len() as f64;
        let half = z * (r * level * (1.0 - level)).sqrt();
        let at = |k: f64| self.sups[(k.round().max(1.0).min(r) as usize) - 1];
        (at(r * level - half), at(r * level + half))
    }

    /// CSV with header `level,sup_value`, one row per order statistic.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["level", "sup_value"])?;
        let r = self.sups.len();
        for (i, s) in self.sups.iter().enumerate() {
            let level = (i + 1) as f64 / r as f64;
            wr.write_record([level.to_string(), s.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut sups = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let v = rec
                .get(1)
                .and_then(|x| x.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::MissingQuantiles("malformed quantile row".into()))?;
            sups.push(v);
        }
        if sups.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::MissingQuantiles("table is not nondecreasing".into()));
        }
        Self::from_sups(sups)
    }
}

/// Simulated pillow-sup quantiles at resolution `m` with `r` replicates,
/// plus a refinement check at `2m` on `r/4` replicates.
pub fn pillow_sup_quantiles(m: usize, r: usize, seed: u64) -> Result<PillowQuantiles> {
    if m < 20 || r < 1000 {
        return Err(Error::InvalidInput(format!(
            "need m >= 20 and R >= 1000, got m = {m}, R = {r}"
        )));
    }
    let mut q = PillowQuantiles::from_sups(pillow_sups(m, r, seed))?;
    q.m = Some(m);
    q.seed = Some(seed);
    let base = q.quantile(0.95)?;
    let fine =
        PillowQuantiles::from_sups(pillow_sups(2 * m, r / 4, crate::rng::derive_seed(seed, 1)))?;
    let q95 = fine.quantile(0.95)?;
    q.refinement = Some(Refinement {
        m: 2 * m,
        replicates: r / 4,
        q95,
        relative_change: (q95 - base) / base,
    });
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{build_model, lazy_walk, BuildOptions, HeavyTailLaw, IncrementLaw};
    use std::f64::consts::PI;

    #[test]
    fn planar_constant() {
        let m = build_model(lazy_walk(2), &BuildOptions::default()).unwrap();
        let c = limit_constant(&m).unwrap();
        assert!((c.c - 5.0 / (2.0 * PI)).abs() < 1e-12);
        assert!((c.c * PI * m.a_param.unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(c.error_bound, 0.0);
    }

    #[test]
    fn cauchy_constant_from_a() {
        let mut m = build_model(HeavyTailLaw::new(0.5).unwrap(), &BuildOptions::default()).unwrap();
        m.a_param = Some(1.0);
        m.a_band = Some(0.0);
        assert!((limit_constant(&m).unwrap().c - 2.0 / PI).abs() < 1e-15);
        m.a_param = None;
        assert!(matches!(
            limit_constant(&m),
            Err(Error::MissingParameter(_))
        ));
    }

    #[test]
    fn drift_walk_constant_is_one() {
        let law = IncrementLaw::new(1, vec![vec![1], vec![2]], vec![0.5, 0.5]).unwrap();
        let m = build_model(law, &BuildOptions::default()).unwrap();
        assert_eq!(limit_constant(&m).unwrap().c, 1.0);
    }

    #[test]
    fn heavy_tail_a_matches_closed_form() {
        for c in [0.2, 0.5, 0.6] {
            let est = estimate_a(&HeavyTailLaw::new(c).unwrap().into()).unwrap();
            let exact = PI * c / 2.0;
            assert!((est.a - exact).abs() < 1e-6 * exact, "{} vs {exact}", est.a);
            assert!(est.band < 0.01 * exact);
        }
    }

    #[test]
    fn exact_cauchy_recovers_a0() {
        let est = estimate_a_from_log_modulus(|u| -1.7 * u.abs()).unwrap();
        assert!((est.a - 1.7).abs() < 1e-9);
        // lattice Cauchy law: φ(u) = cosh(σ(π-|u|)) / cosh(σπ)
        let sigma: f64 = 0.8;
        let est = estimate_a_from_log_modulus(|u| {
            ((sigma * (PI - u.abs())).cosh() / (sigma * PI).cosh()).ln()
        })
        .unwrap();
        let a0 = sigma * (PI * sigma).tanh();
        assert!((est.a - a0).abs() < 0.02 * a0);
    }

    #[test]
    fn finite_variance_diverges() {
        let law =
            IncrementLaw::new(1, vec![vec![-1], vec![0], vec![1]], vec![0.25, 0.5, 0.25]).unwrap();
        assert!(matches!(
            estimate_a(&law.into()),
            Err(Error::FitDiverged(_))
        ));
    }

    #[test]
    fn spatial_scaling_scales_a() {
        let a1 = estimate_a(&HeavyTailLaw::new(0.5).unwrap().into())
            .unwrap()
            .a;
        let a3 = estimate_a(&HeavyTailLaw::with_scale(0.5, 3).unwrap().into())
            .unwrap()
            .a;
        assert!((a3 / a1 - 3.0).abs() < 1e-4);
    }

    #[test]
    fn km_and_pillow_boundaries() {
        let g = uniform_grid(10);
        let km = sample_kiefer_muller(&g, &g, 3).unwrap();
        let p = pillow_from_km(&km).unwrap();
        for k in 0..=10 {
            assert_eq!(km.value(0, k), 0.0);
            assert_eq!(km.value(10, k), 0.0);
            assert_eq!(km.value(k, 0), 0.0);
            assert_eq!(p.value(k, 10), 0.0);
            assert_eq!(p.value(k, 0), 0.0);
        }
        assert_eq!(km, sample_kiefer_muller(&g, &g, 3).unwrap());
        let short = sample_kiefer_muller(&g, &[0.5], 3).unwrap();
        assert!(matches!(
            pillow_from_km(&short),
            Err(Error::MissingBoundary(_))
        ));
    }

    #[test]
    fn km_variance_and_covariance() {
        let gs = [0.25, 0.5, 0.75];
        let gt = [0.5, 1.0];
        let r = 5000;
        let (mut v, mut cov) = (Vec::new(), Vec::new());
        for seed in 0..r {
            let km = sample_kiefer_muller(&gs, &gt, seed).unwrap();
            v.push(km.value(1, 1));
            cov.push(km.value(0, 0) * km.value(2, 1));
        }
        let check = |xs: &[f64], target: f64| {
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!((m - target).abs() < 3.0 * sd / n.sqrt(), "{m} vs {target}");
        };
        check(&v.iter().map(|x| x * x).collect::<Vec<_>>(), 0.25);
        check(&cov, 0.03125);
    }

    #[test]
    fn quantile_table_behaviour() {
        let q = PillowQuantiles::from_sups(vec![0.3, 0.1, 0.2, 0.4]).unwrap();
        assert_eq!(q.quantile(0.0).unwrap(), 0.0);
        assert_eq!(q.quantile(0.5).unwrap(), 0.2);
        assert_eq!(q.quantile(1.0).unwrap(), 0.4);
        assert_eq!(q.p_value(0.2), 0.5);
        assert_eq!(q.p_value(0.0), 1.0);
        let mut buf = Vec::new();
        q.write_csv(&mut buf).unwrap();
        let back = PillowQuantiles::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.sups(), q.sups());
    }

    #[test]
    fn pillow_quantiles_are_deterministic_and_refine() {
        let a = pillow_sup_quantiles(20, 1000, 9).unwrap();
        let b = pillow_sup_quantiles(20, 1000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.sups().windows(2).all(|w| w[0] <= w[1]));
        let rel = a.refinement.unwrap().relative_change;
        assert!(rel.abs() < 0.1, "{rel}");
        assert!(pillow_sup_quantiles(10, 1000, 9).is_err());
    }
}
