//! Replicated Monte Carlo experiments with declared tolerances.
//!
//! Replicate `r` of an experiment with master seed `m` draws its walk and
//! scenery from [`ReplicateSeeds::new(m, r)`](crate::rng::ReplicateSeeds),
//! and aggregation folds replicate results in index order, so reports do not
//! depend on whether replicates ran in parallel.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::{
    empirical_sheet, floor_steps, norming_squared, norming_value, occupation_stats,
};
use crate::error::{Error, Result};
use crate::inference::{changepoint_statistic, degenerate_ustat, Kernel, KernelMeasure};
use crate::limits::{limit_constant, pillow_sup_quantiles, LimitConstant, PillowQuantiles};
use crate::rng::ReplicateSeeds;
use crate::scenery::{evaluate_along, HalfSpaceShift, MarkSource, Scenery};
use crate::walk::{sample_path, GreenSum, ModelSpec, Path, Regime, TheoremFlags, WalkModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Covariance,
    Lambda,
    Moment,
    Modulus,
    Calibration,
    UstatMoment,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::InvalidInput(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PillowSpec {
    pub m: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// Marks shifted by `shift` where `x[axis] < threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceSpec {
    pub axis: usize,
    pub threshold: i64,
    pub shift: f64,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub experiment: ExperimentKind,
    pub n: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_s: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_t: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Modulus window sizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    /// Modulus threshold.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pillow: Option<PillowSpec>,
    /// Alternative for the calibration experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative: Option<HalfSpaceSpec>,
    #[serde(default = "yes")]
    pub parallel: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn validate(&self, regime: Regime) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidInput("replicates must be at least 2".into()));
        }
        if self.n.is_empty() {
            return Err(Error::InvalidInput("empty n list".into()));
        }
        let min_n = if regime == Regime::Transient { 1 } else { 2 };
        if self.n.iter().any(|&n| n < min_n.max(2)) {
            return Err(Error::InvalidInput("every n must be at least 2".into()));
        }
        if self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "n list must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub regime: Regime,
    pub dim: usize,
    pub c: f64,
    pub c_error_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_param: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub green: Option<GreenSum>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum ExperimentResult {
    Covariance(Vec<CovarianceReport>),
    Lambda(LambdaReport),
    Moment(MomentReport),
    Modulus(Vec<ModulusReport>),
    Calibration(CalibrationReport),
    UstatMoment(Vec<UstatMomentReport>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub replicates: usize,
    pub model: ModelSummary,
    pub theorem_flags: TheoremFlags,
    pub result: ExperimentResult,
    /// Declared tolerances that were not met.
    pub violations: Vec<String>,
}

impl HarnessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Flat plot-ready CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        match &self.result {
            ExperimentResult::Covariance(reps) => {
                wr.write_record(["n", "s1", "t1", "s2", "t2", "empirical", "theoretical", "z"])?;
                for r in reps {
                    let k = r.points.len();
                    for a in 0..k {
                        for b in a..k {
                            let (p, q) = (r.points[a], r.points[b]);
                            wr.write_record(&[
                                r.n.to_string(),
                                p[0].to_string(),
                                p[1].to_string(),
                                q[0].to_string(),
                                q[1].to_string(),
                                r.empirical[a][b].to_string(),
                                r.theoretical[a][b].to_string(),
                                r.z[a][b].to_string(),
                            ])?;
                        }
                    }
                }
            }
            ExperimentResult::Lambda(r) => {
                wr.write_record(["n", "mean", "sd", "se", "c"])?;
                for row in &r.rows {
                    wr.write_record(&[
                        row.n.to_string(),
                        row.mean.to_string(),
                        row.sd.to_string(),
                        row.se.to_string(),
                        r.c.to_string(),
                    ])?;
                }
            }
            ExperimentResult::Moment(r) => {
                wr.write_record(["n", "design", "x", "mean", "se", "raw_mean"])?;
                for per in &r.per_n {
                    for (design, pts) in [("delta_s", &per.delta_s), ("window", &per.window)] {
                        for p in pts.points.iter() {
                            wr.write_record(&[
                                per.n.to_string(),
                                design.to_string(),
                                p.x.to_string(),
                                p.mean.to_string(),
                                p.se.to_string(),
                                p.raw_mean.to_string(),
                            ])?;
                        }
                    }
                }
            }
            ExperimentResult::Modulus(reps) => {
                wr.write_record(["n", "delta", "frequency", "mean_modulus"])?;
                for r in reps {
                    for (i, d) in r.deltas.iter().enumerate() {
                        wr.write_record(&[
                            r.n.to_string(),
                            d.to_string(),
                            r.frequencies[i].to_string(),
                            r.mean_modulus[i].to_string(),
                        ])?;
                    }
                }
            }
            ExperimentResult::Calibration(r) => {
                wr.write_record([
                    "scenario",
                    "alpha",
                    "runs",
                    "rejections",
                    "rate",
                    "ci_lo",
                    "ci_hi",
                ])?;
                for row in &r.rows {
                    wr.write_record(&[
                        row.scenario.clone(),
                        row.alpha.to_string(),
                        row.runs.to_string(),
                        row.rejections.to_string(),
                        row.rate.to_string(),
                        row.ci[0].to_string(),
                        row.ci[1].to_string(),
                    ])?;
                }
            }
            ExperimentResult::UstatMoment(reps) => {
                wr.write_record(["n", "mean", "se", "target"])?;
                for r in reps {
                    wr.write_record(&[
                        r.n.to_string(),
                        r.mean.to_string(),
                        r.se.to_string(),
                        r.target.to_string(),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Evaluates `f` on replicates `0..r`, in parallel or not; results are in
/// replicate order either way.
pub fn replicate_map<T, F>(r: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    if parallel {
        (0..r as u64).into_par_iter().map(f).collect()
    } else {
        (0..r as u64).map(f).collect()
    }
}

fn replicate_path(model: &WalkModel, n: usize, master: u64, r: u64) -> Result<(Path, Scenery)> {
    let seeds = ReplicateSeeds::new(master, r);
    let path = sample_path(model, n, seeds.walk)?;
    Ok((path, Scenery::new(seeds.scenery, model.dim())))
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Runs the configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<HarnessReport> {
    let model = config.model.build()?;
    config.validate(model.regime)?;
    let lc = limit_constant(&model)?;
    let (result, violations) = match config.experiment {
        ExperimentKind::Covariance => {
            let reps = run_covariance_experiment(config, &model, &lc)?;
            let v = reps.iter().flat_map(|r| r.violations.clone()).collect();
            (ExperimentResult::Covariance(reps), v)
        }
        ExperimentKind::Lambda => {
            let r = run_lambda_experiment(config, &model, &lc)?;
            let v = r.violations.clone();
            (ExperimentResult::Lambda(r), v)
        }
        ExperimentKind::Moment => {
            let r = run_moment_experiment(config, &model)?;
            let v = r.violations.clone();
            (ExperimentResult::Moment(r), v)
        }
        ExperimentKind::Modulus => {
            let reps = run_modulus_experiment(config, &model)?;
            let v = reps.iter().flat_map(|r| r.violations.clone()).collect();
            (ExperimentResult::Modulus(reps), v)
        }
        ExperimentKind::Calibration => {
            let r = run_test_calibration(config, &model, &lc)?;
            let v = r.violations.clone();
            (ExperimentResult::Calibration(r), v)
        }
        ExperimentKind::UstatMoment => {
            let reps = run_ustat_moment_experiment(config, &model, &lc)?;
            let v = reps.iter().flat_map(|r| r.violations.clone()).collect();
            (ExperimentResult::UstatMoment(reps), v)
        }
    };
    Ok(HarnessReport {
        experiment: config.experiment,
        seed: config.seed,
        replicates: config.replicates,
        model: ModelSummary {
            regime: model.regime,
            dim: model.dim(),
            c: lc.c,
            c_error_bound: lc.error_bound,
            a_param: model.a_param,
            green: model.green,
        },
        theorem_flags: model.flags.clone(),
        result,
        violations,
    })
}

// ---------------------------------------------------------------------------
// covariance

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCheck {
    pub empirical: f64,
    pub theoretical: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub n: usize,
    pub norming: f64,
    /// `(s, t)`.
    pub points: Vec<[f64; 2]>,
    pub empirical: Vec<Vec<f64>>,
    /// `c (t∧t')(s∧s' - s s')`.
    pub theoretical: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub max_abs_z: f64,
    /// Max |z| against the exact finite-`n` covariance
    /// `(s∧s' - s s') E[sum_x N_{nt}(x) N_{nt'}(x)] / a_n^2`, a check on the
    /// simulation itself that is free of the slow convergence of
    /// `Λ_{nt} / a_n^2` to `c t`. Informational.
    pub finite_n_max_abs_z: f64,
    /// Mean of `sum_x N_{nt}(x) N_{nt'}(x) / a_n^2` against `c (t∧t')` for
    /// `t <= t'` on the grid. Informational.
    pub cross_intersection: Vec<CrossRow>,
    /// Variance at `(0.5, 1)` when that point is on the grid.
    pub midpoint_variance: Option<PointCheck>,
    /// Covariance of increments over the first and third `t`-intervals of
    /// the grid at the middle `s`.
    pub disjoint_increments: Option<PointCheck>,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub t1: f64,
    pub t2: f64,
    pub mean: f64,
    pub se: f64,
    pub target: f64,
    pub relative_error: f64,
}

/// `(mean - target) / SE` for replicate values `xs`, with 0 when the
/// values are all exactly on target.
fn z_score(xs: &[f64], target: f64) -> PointCheck {
    let (m, sd) = mean_sd(xs);
    let se = sd / (xs.len() as f64).sqrt();
    let z = if se > 0.0 {
        (m - target) / se
    } else if m == target {
        0.0
    } else {
        f64::INFINITY
    };
    PointCheck {
        empirical: m,
        theoretical: target,
        se,
        z,
    }
}

/// Empirical covariance with replicate means subtracted (divisor `R - 1`)
/// and its z-score against `target`.
fn cov_check(x: &[f64], y: &[f64], target: f64) -> PointCheck {
    let r = x.len() as f64;
    let mx = x.iter().sum::<f64>() / r;
    let my = y.iter().sum::<f64>() / r;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let mut pc = z_score(&prods, target);
    pc.empirical *= r / (r - 1.0);
    if pc.se > 0.0 {
        pc.z = (pc.empirical - target) / pc.se;
    }
    pc
}

fn default_cov_grid_s() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}

fn default_cov_grid_t() -> Vec<f64> {
    vec![0.2, 0.4, 0.6, 0.8, 1.0]
}

const Z_TOL: f64 = 4.0;

pub fn run_covariance_experiment(
    config: &ExperimentConfig,
    model: &WalkModel,
    lc: &LimitConstant,
) -> Result<Vec<CovarianceReport>> {
    let gs = config.grid_s.clone().unwrap_or_else(default_cov_grid_s);
    let gt = config.grid_t.clone().unwrap_or_else(default_cov_grid_t);
    let mut out = Vec::new();
    for &n in &config.n {
        let a_n = norming_value(model.regime, n)?;
        let a2 = norming_squared(model.regime, n)?;
        let nt = gt.len();
        let reps = replicate_map(config.replicates, config.parallel, |r| {
            let (path, scenery) = replicate_path(model, n, config.seed, r)?;
            let marks = evaluate_along(&path, &scenery)?;
            let values = empirical_sheet(&marks, &gs, &gt, a_n)?.normalized_values();
            let occ = gt
                .iter()
                .map(|&t| match floor_steps(n, t) {
                    0 => Ok(None),
                    m => occupation_stats(&path, m).map(Some),
                })
                .collect::<Result<Vec<_>>>()?;
            let mut cross = vec![0.0; nt * nt];
            for i in 0..nt {
                for j in 0..nt {
                    if let (Some(a), Some(b)) = (&occ[i], &occ[j]) {
                        cross[i * nt + j] = a.cross(b) as f64 / a2;
                    }
                }
            }
            Ok((values, cross))
        })?;
        let sheets: Vec<&Vec<f64>> = reps.iter().map(|r| &r.0).collect();
        let points: Vec<[f64; 2]> = gs
            .iter()
            .flat_map(|&s| gt.iter().map(move |&t| [s, t]))
            .collect();
        let k = points.len();
        let column = |p: usize| sheets.iter().map(|v| v[p]).collect::<Vec<f64>>();
        let cols: Vec<Vec<f64>> = (0..k).map(column).collect();
        let mut emp = vec![vec![0.0; k]; k];
        let mut theo = vec![vec![0.0; k]; k];
        let mut z = vec![vec![0.0; k]; k];
        let mut max_abs_z: f64 = 0.0;
        let mut finite_n_max_abs_z: f64 = 0.0;
        let rf = config.replicates as f64;
        for a in 0..k {
            for b in a..k {
                let [s1, t1] = points[a];
                let [s2, t2] = points[b];
                let target = lc.c * crate::limits::km_covariance(s1, t1, s2, t2);
                let pc = cov_check(&cols[a], &cols[b], target);
                emp[a][b] = pc.empirical;
                emp[b][a] = pc.empirical;
                theo[a][b] = target;
                theo[b][a] = target;
                z[a][b] = pc.z;
                z[b][a] = pc.z;
                max_abs_z = max_abs_z.max(pc.z.abs());
                // given the walk, Cov = (s∧s' - ss') sum_x N_{nt}(x) N_{nt'}(x)
                let (ma, mb) = (mean_sd(&cols[a]).0, mean_sd(&cols[b]).0);
                let (ta, tb) = (a % nt, b % nt);
                let bridge = s1.min(s2) - s1 * s2;
                let diffs: Vec<f64> = reps
                    .iter()
                    .map(|(v, cross)| {
                        (v[a] - ma) * (v[b] - mb) * rf / (rf - 1.0) - bridge * cross[ta * nt + tb]
                    })
                    .collect();
                finite_n_max_abs_z = finite_n_max_abs_z.max(z_score(&diffs, 0.0).z.abs());
            }
        }
        let mut cross_intersection = Vec::new();
        for i in 0..nt {
            for j in i..nt {
                let xs: Vec<f64> = reps.iter().map(|r| r.1[i * nt + j]).collect();
                let (mean, sd) = mean_sd(&xs);
                let target = lc.c * gt[i].min(gt[j]);
                cross_intersection.push(CrossRow {
                    t1: gt[i],
                    t2: gt[j],
                    mean,
                    se: sd / rf.sqrt(),
                    target,
                    relative_error: if target > 0.0 {
                        (mean - target) / target
                    } else {
                        0.0
                    },
                });
            }
        }
        let idx = |s: f64, t: f64| points.iter().position(|p| p[0] == s && p[1] == t);
        let midpoint_variance = idx(0.5, 1.0).map(|p| cov_check(&cols[p], &cols[p], lc.c / 4.0));
        let disjoint_increments = (gt.len() >= 4).then(|| {
            let s = gs[gs.len() / 2];
            let col = |t: f64| &cols[idx(s, t).expect("grid point")];
            let inc = |t0: f64, t1: f64| -> Vec<f64> {
                col(t1).iter().zip(col(t0)).map(|(a, b)| a - b).collect()
            };
            cov_check(&inc(gt[0], gt[1]), &inc(gt[2], gt[3]), 0.0)
        });
        let mut violations = Vec::new();
        if max_abs_z > Z_TOL {
            violations.push(format!(
                "covariance n={n}: max |z| = {max_abs_z:.3} > {Z_TOL}"
            ));
        }
        if let Some(pc) = &midpoint_variance {
            if pc.z.abs() > Z_TOL {
                violations.push(format!("covariance n={n}: Var at (0.5,1) z = {:.3}", pc.z));
            }
        }
        if let Some(pc) = &disjoint_increments {
            if pc.z.abs() > Z_TOL {
                violations.push(format!(
                    "covariance n={n}: disjoint increments z = {:.3}",
                    pc.z
                ));
            }
        }
        out.push(CovarianceReport {
            n,
            norming: a_n,
            points,
            empirical: emp,
            theoretical: theo,
            z,
            max_abs_z,
            finite_n_max_abs_z,
            cross_intersection,
            midpoint_variance,
            disjoint_increments,
            violations,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// self-intersection local time

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    pub c: f64,
    pub tolerance: f64,
    pub rows: Vec<LambdaRow>,
    /// `|mean - c|` nonincreasing along `n` for the point estimates.
    pub monotone_toward_c: bool,
    /// No increase of `|mean - c|` along `n` larger than two standard errors
    /// of the difference.
    pub trend_consistent: bool,
    pub violations: Vec<String>,
}

/// Relative tolerance on the last mean: 20% for the log-normed regimes
/// (slow convergence), 5% otherwise.
fn lambda_tolerance(regime: Regime) -> f64 {
    match regime {
        Regime::Transient => 0.05,
        Regime::Cauchy | Regime::Planar => 0.20,
    }
}

/// `Λ_n / a_n^2` on prefixes of one path per replicate.
pub fn run_lambda_experiment(
    config: &ExperimentConfig,
    model: &WalkModel,
    lc: &LimitConstant,
) -> Result<LambdaReport> {
    let n_max = *config.n.last().expect("validated");
    let per_rep = replicate_map(config.replicates, config.parallel, |r| {
        let (path, _) = replicate_path(model, n_max, config.seed, r)?;
        config
            .n
            .iter()
            .map(|&n| {
                let st = occupation_stats(&path, n)?;
                Ok(st.lambda as f64 / norming_squared(model.regime, n)?)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let rows: Vec<LambdaRow> = config
        .n
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let xs: Vec<f64> = per_rep.iter().map(|v| v[i]).collect();
            let (mean, sd) = mean_sd(&xs);
            LambdaRow {
                n,
                mean,
                sd,
                se: sd / (xs.len() as f64).sqrt(),
                relative_error: (mean - lc.c) / lc.c,
            }
        })
        .collect();
    let monotone = rows
        .windows(2)
        .all(|w| w[1].relative_error.abs() <= w[0].relative_error.abs());
    // an increase of |mean - c| counts against the trend only when it
    // exceeds twice the standard error of the difference
    let trend_consistent = rows.windows(2).all(|w| {
        let slack = 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt() / lc.c;
        w[1].relative_error.abs() <= w[0].relative_error.abs() + slack
    });
    let tol = lambda_tolerance(model.regime);
    let mut violations = Vec::new();
    let last = rows.last().expect("nonempty");
    if last.relative_error.abs() > tol {
        violations.push(format!(
            "lambda: mean at n={} is {:.4}, off c = {:.4} by {:.1}% (> {:.0}%)",
            last.n,
            last.mean,
            lc.c,
            100.0 * last.relative_error.abs(),
            100.0 * tol
        ));
    }
    if !trend_consistent {
        violations.push("lambda: |mean - c| grows with n beyond Monte Carlo error".into());
    }
    Ok(LambdaReport {
        c: lc.c,
        tolerance: tol,
        rows,
        monotone_toward_c: monotone,
        trend_consistent,
        violations,
    })
}

// ---------------------------------------------------------------------------
// fourth moments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    pub x: f64,
    /// Mean over replicates of `E[X^4 | walk]`.
    pub mean: f64,
    pub se: f64,
    /// Mean of `X^4` with the actual scenery.
    pub raw_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub points: Vec<MomentPoint>,
    pub slope: f64,
    /// Jackknife over replicates.
    pub slope_se: f64,
    pub ci95: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentAtN {
    pub n: usize,
    /// Varying `|s1 - s2|` over the whole time window.
    pub delta_s: SlopeFit,
    /// Varying `(n2 - n1) / n` at fixed `|s1 - s2|`.
    pub window: SlopeFit,
    pub window_delta_s: f64,
    /// Mean of `sum_x N_n(x)^4 / n`.
    pub fourth_power_per_step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub slope_range: [f64; 2],
    pub per_n: Vec<MomentAtN>,
    pub violations: Vec<String>,
}

pub const SLOPE_RANGE: [f64; 2] = [1.0, 1.8];
const DS_STEPS: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
const WINDOW_FRACTIONS: [f64; 5] = [1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0, 1.0];
const WINDOW_DS_STEPS: f64 = 8.0;

/// `E[(sum_x N_x (B_x - p))^4]` for i.i.d. Bernoulli(`p`) `B_x`, given
/// `sum N^4` and `Λ = sum N^2`.
fn bernoulli_fourth(p: f64, n4: f64, lambda: f64) -> f64 {
    let v = p * (1.0 - p);
    v * (1.0 - 6.0 * v) * n4 + 3.0 * v * v * lambda * lambda
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Log-log slope of replicate means, with a leave-one-out jackknife SE.
fn fit_slope(xs: &[f64], per_rep: &[Vec<f64>], raw: &[Vec<f64>]) -> SlopeFit {
    let r = per_rep.len();
    let k = xs.len();
    let sums: Vec<f64> = (0..k).map(|j| per_rep.iter().map(|v| v[j]).sum()).collect();
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let slope_of =
        |means: &[f64]| ols_slope(&lx, &means.iter().map(|m| m.ln()).collect::<Vec<_>>());
    let means: Vec<f64> = sums.iter().map(|s| s / r as f64).collect();
    let slope = slope_of(&means);
    let loo: Vec<f64> = (0..r)
        .map(|i| {
            let m: Vec<f64> = (0..k)
                .map(|j| (sums[j] - per_rep[i][j]) / (r - 1) as f64)
                .collect();
            slope_of(&m)
        })
        .collect();
    let loo_mean = loo.iter().sum::<f64>() / r as f64;
    let slope_se = ((r - 1) as f64 / r as f64
        * loo.iter().map(|s| (s - loo_mean).powi(2)).sum::<f64>())
    .sqrt();
    let points = (0..k)
        .map(|j| {
            let col: Vec<f64> = per_rep.iter().map(|v| v[j]).collect();
            let (_, sd) = mean_sd(&col);
            MomentPoint {
                x: xs[j],
                mean: means[j],
                se: sd / (r as f64).sqrt(),
                raw_mean: raw.iter().map(|v| v[j]).sum::<f64>() / r as f64,
            }
        })
        .collect();
    SlopeFit {
        points,
        slope,
        slope_se,
        ci95: [slope - 1.96 * slope_se, slope + 1.96 * slope_se],
    }
}

struct MomentReplicate {
    ds_rb: Vec<f64>,
    ds_raw: Vec<f64>,
    win_rb: Vec<f64>,
    win_raw: Vec<f64>,
    n4_per_step: f64,
}

/// Fourth moments of `a_n^{-1} sum_{i=n1+1}^{n2} (ζ_{s1} - ζ_{s2})(S_i)`,
/// `ζ_s(x) = 1{ξ_x <= s} - s`, with `n1 = 0` (the walk has stationary
/// increments), `s1 = 1/2` and `s2 = s1 + Δs`. Each replicate contributes
/// the scenery-conditional moment, which is exact given the walk, and the
/// raw fourth power with its own scenery.
pub fn run_moment_experiment(config: &ExperimentConfig, model: &WalkModel) -> Result<MomentReport> {
    let mut per_n = Vec::new();
    let mut violations = Vec::new();
    for &n in &config.n {
        let a4 = norming_value(model.regime, n)?.powi(4);
        let ds: Vec<f64> = DS_STEPS.iter().map(|k| k / n as f64).collect();
        let w_ds = WINDOW_DS_STEPS / n as f64;
        let reps = replicate_map(config.replicates, config.parallel, |r| {
            let (path, scenery) = replicate_path(model, n, config.seed, r)?;
            let marks = evaluate_along(&path, &scenery)?;
            let raw_x4 = |len: usize, d: f64| {
                let s: f64 = marks[..len]
                    .iter()
                    .map(|&m| (m > 0.5 && m <= 0.5 + d) as u8 as f64 - d)
                    .sum();
                s.powi(4) / a4
            };
            let full = occupation_stats(&path, n)?;
            let (n4, lam) = (full.power_sum(4), full.lambda as f64);
            let ds_rb = ds
                .iter()
                .map(|&d| bernoulli_fourth(d, n4, lam) / a4)
                .collect();
            let ds_raw = ds.iter().map(|&d| raw_x4(n, d)).collect();
            let mut win_rb = Vec::new();
            let mut win_raw = Vec::new();
            for &f in &WINDOW_FRACTIONS {
                let len = floor_steps(n, f).max(1);
                let st = occupation_stats(&path, len)?;
                win_rb.push(bernoulli_fourth(w_ds, st.power_sum(4), st.lambda as f64) / a4);
                win_raw.push(raw_x4(len, w_ds));
            }
            Ok(MomentReplicate {
                ds_rb,
                ds_raw,
                win_rb,
                win_raw,
                n4_per_step: n4 / n as f64,
            })
        })?;
        let col = |f: fn(&MomentReplicate) -> &Vec<f64>| {
            reps.iter().map(|r| f(r).clone()).collect::<Vec<_>>()
        };
        let delta_s = fit_slope(&ds, &col(|r| &r.ds_rb), &col(|r| &r.ds_raw));
        let window = fit_slope(&WINDOW_FRACTIONS, &col(|r| &r.win_rb), &col(|r| &r.win_raw));
        for (name, fit) in [("delta_s", &delta_s), ("window", &window)] {
            if !(SLOPE_RANGE[0]..=SLOPE_RANGE[1]).contains(&fit.slope) {
                violations.push(format!(
                    "moment n={n}: {name} slope {:.3} outside [{}, {}]",
                    fit.slope, SLOPE_RANGE[0], SLOPE_RANGE[1]
                ));
            }
        }
        per_n.push(MomentAtN {
            n,
            delta_s,
            window,
            window_delta_s: w_ds,
            fourth_power_per_step: reps.iter().map(|r| r.n4_per_step).sum::<f64>()
                / reps.len() as f64,
        });
    }
    if model.regime == Regime::Transient && per_n.len() >= 2 {
        let first = per_n[0].fourth_power_per_step;
        let last = per_n.last().unwrap().fourth_power_per_step;
        if !(last <= 2.0 * first && first <= 2.0 * last) {
            violations.push(format!(
                "moment: sum N^4 / n moved from {first:.3} to {last:.3} (more than 2x)"
            ));
        }
    }
    Ok(MomentReport {
        slope_range: SLOPE_RANGE,
        per_n,
        violations,
    })
}

// ---------------------------------------------------------------------------
// Bickel–Wichura modulus

/// `w''_δ` of a sheet on `grid_s × grid_t` (row-major in `s`) for each
/// `δ`: the larger of the two one-directional moduli
/// `sup min(‖x(u) - x(u1)‖, ‖x(u2) - x(u)‖)` over `u1 <= u <= u2`,
/// `u2 - u1 <= δ`, with `‖·‖` the sup norm over the other coordinate.
pub fn bickel_wichura_modulus(
    values: &[f64],
    grid_s: &[f64],
    grid_t: &[f64],
    deltas: &[f64],
) -> Vec<f64> {
    let (ns, nt) = (grid_s.len(), grid_t.len());
    let row = |i: usize| &values[i * nt..(i + 1) * nt];
    let ws = directional_modulus(grid_s, deltas, |a, b| {
        row(a)
            .iter()
            .zip(row(b))
            .fold(0.0, |m: f64, (x, y)| m.max((x - y).abs()))
    });
    let wt = directional_modulus(grid_t, deltas, |a, b| {
        (0..ns).fold(0.0, |m: f64, i| {
            m.max((values[i * nt + a] - values[i * nt + b]).abs())
        })
    });
    ws.iter().zip(&wt).map(|(a, b)| a.max(*b)).collect()
}

fn directional_modulus(
    grid: &[f64],
    deltas: &[f64],
    dist: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let g = grid.len();
    let mut d = vec![0.0; g * g];
    for a in 0..g {
        for b in a + 1..g {
            let v = dist(a, b);
            d[a * g + b] = v;
            d[b * g + a] = v;
        }
    }
    deltas
        .iter()
        .map(|&delta| {
            let mut best: f64 = 0.0;
            for c in 0..g {
                // running maxima of the left and right distances as the
                // window extends, then the best split of the span
                let mut left = vec![0.0];
                let mut a = c;
                while a > 0 && grid[c] - grid[a - 1] <= delta + 1e-12 {
                    a -= 1;
                    let v: f64 = left[left.len() - 1];
                    left.push(v.max(d[a * g + c]));
                }
                let mut right = vec![0.0];
                let mut b = c;
                while b + 1 < g && grid[b + 1] - grid[c] <= delta + 1e-12 {
                    b += 1;
                    let v: f64 = right[right.len() - 1];
                    right.push(v.max(d[c * g + b]));
                }
                // the largest right extension keeping the span within δ
                // shrinks as the left one grows
                let mut j = right.len() - 1;
                for (i, &l) in left.iter().enumerate().skip(1) {
                    while j > 0 && grid[c + j] - grid[c - i] > delta + 1e-12 {
                        j -= 1;
                    }
                    if j == 0 {
                        break;
                    }
                    best = best.max(l.min(right[j]));
                }
            }
            best
        })
        .collect()
}

/// `{0, k/n, 2k/n, ..., 1}` with `k = ceil(n / 200)`.
pub fn subsampled_grid(n: usize) -> Vec<f64> {
    let step = n.div_ceil(200).max(1);
    let mut g: Vec<f64> = (0..=n / step)
        .map(|i| (i * step) as f64 / n as f64)
        .collect();
    if *g.last().unwrap() < 1.0 {
        g.push(1.0);
    }
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub n: usize,
    pub grid_points: usize,
    pub grid_description: String,
    pub epsilon: f64,
    pub deltas: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub mean_modulus: Vec<f64>,
    /// Replicates whose modulus decreased in `δ`; always 0.
    pub monotonicity_failures: usize,
    pub violations: Vec<String>,
}

pub const DEFAULT_DELTAS: [f64; 5] = [0.01, 0.05, 0.1, 0.25, 0.5];
pub const DEFAULT_EPSILON: f64 = 0.5;

pub fn run_modulus_experiment(
    config: &ExperimentConfig,
    model: &WalkModel,
) -> Result<Vec<ModulusReport>> {
    let mut deltas = config
        .deltas
        .clone()
        .unwrap_or_else(|| DEFAULT_DELTAS.to_vec());
    deltas.sort_by(f64::total_cmp);
    let eps = config.epsilon.unwrap_or(DEFAULT_EPSILON);
    let mut out = Vec::new();
    for &n in &config.n {
        let a_n = norming_value(model.regime, n)?;
        let grid = subsampled_grid(n);
        let moduli = replicate_map(config.replicates, config.parallel, |r| {
            let (path, scenery) = replicate_path(model, n, config.seed, r)?;
            let marks = evaluate_along(&path, &scenery)?;
            let sheet = empirical_sheet(&marks, &grid, &grid, a_n)?;
            Ok(bickel_wichura_modulus(
                &sheet.normalized_values(),
                &grid,
                &grid,
                &deltas,
            ))
        })?;
        let failures = moduli
            .iter()
            .filter(|w| w.windows(2).any(|p| p[1] < p[0]))
            .count();
        let r = moduli.len() as f64;
        let frequencies: Vec<f64> = (0..deltas.len())
            .map(|k| moduli.iter().filter(|w| w[k] > eps).count() as f64 / r)
            .collect();
        let mean_modulus = (0..deltas.len())
            .map(|k| moduli.iter().map(|w| w[k]).sum::<f64>() / r)
            .collect();
        let mut violations = Vec::new();
        if failures > 0 {
            violations.push(format!(
                "modulus n={n}: {failures} paths not monotone in delta"
            ));
        }
        if frequencies.windows(2).any(|p| p[1] < p[0]) {
            violations.push(format!("modulus n={n}: frequencies not monotone in delta"));
        }
        out.push(ModulusReport {
            n,
            grid_points: grid.len(),
            grid_description: format!(
                "every {}-th point of {{0, 1/n, ..., 1}} in each coordinate",
                n.div_ceil(200).max(1)
            ),
            epsilon: eps,
            deltas: deltas.clone(),
            frequencies,
            mean_modulus,
            monotonicity_failures: failures,
            violations,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// test calibration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub scenario: String,
    pub alpha: f64,
    pub runs: usize,
    pub rejections: usize,
    pub rate: f64,
    /// Wilson 95% interval.
    pub ci: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub critical_value: f64,
    pub pillow_m: Option<usize>,
    pub pillow_replicates: usize,
    pub pillow_refinement: Option<crate::limits::Refinement>,
    pub rows: Vec<CalibrationRow>,
    pub violations: Vec<String>,
}

pub const SIZE_BAND: [f64; 2] = [0.02, 0.09];
pub const MIN_POWER: f64 = 0.9;

fn wilson(k: usize, n: usize) -> [f64; 2] {
    let (k, n) = (k as f64, n as f64);
    let z = 1.96;
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    [(centre - half).max(0.0), (centre + half).min(1.0)]
}

/// Normalized statistics `T_n / (a_n sqrt(c))` over replicates.
fn normalized_statistics<S: MarkSource>(
    config: &ExperimentConfig,
    model: &WalkModel,
    lc: &LimitConstant,
    n: usize,
    seed: u64,
    wrap: impl Fn(Scenery) -> S + Sync + Send,
) -> Result<Vec<f64>> {
    let scale = norming_value(model.regime, n)? * lc.c.sqrt();
    replicate_map(config.replicates, config.parallel, |r| {
        let (path, scenery) = replicate_path(model, n, seed, r)?;
        let marks = evaluate_along(&path, &wrap(scenery))?;
        Ok(changepoint_statistic(&marks)? / scale)
    })
}

/// Rejection rates of the change-point test under the i.i.d. null and,
/// when configured, a half-space shift alternative, plus the `α = 1` case.
pub fn run_test_calibration(
    config: &ExperimentConfig,
    model: &WalkModel,
    lc: &LimitConstant,
) -> Result<CalibrationReport> {
    let n = *config.n.last().expect("validated");
    let alpha = config.alpha.unwrap_or(0.05);
    let ps = config.pillow.clone().unwrap_or(PillowSpec {
        m: 50,
        replicates: 20_000,
        seed: config.seed,
    });
    let quantiles: PillowQuantiles = pillow_sup_quantiles(ps.m, ps.replicates, ps.seed)?;
    let critical = quantiles.quantile(1.0 - alpha)?;
    let row = |scenario: &str, alpha: f64, stats: &[f64], crit: f64| {
        let rejections = stats.iter().filter(|&&x| x > crit).count();
        CalibrationRow {
            scenario: scenario.into(),
            alpha,
            runs: stats.len(),
            rejections,
            rate: rejections as f64 / stats.len() as f64,
            ci: wilson(rejections, stats.len()),
        }
    };
    let null = normalized_statistics(config, model, lc, n, config.seed, |s| s)?;
    let mut rows = vec![row("null", alpha, &null, critical)];
    let mut violations = Vec::new();
    let size = &rows[0];
    if !(SIZE_BAND[0]..=SIZE_BAND[1]).contains(&size.rate) {
        violations.push(format!(
            "calibration: null rejection rate {:.3} outside [{}, {}]",
            size.rate, SIZE_BAND[0], SIZE_BAND[1]
        ));
    }
    if let Some(alt) = &config.alternative {
        if alt.axis >= model.dim() {
            return Err(Error::InvalidInput(format!(
                "axis {} out of range",
                alt.axis
            )));
        }
        let seed = crate::rng::derive_seed(config.seed, 0xa17);
        let stats = normalized_statistics(config, model, lc, n, seed, |base| HalfSpaceShift {
            base,
            axis: alt.axis,
            threshold: alt.threshold,
            shift: alt.shift,
        })?;
        let power = row("half_space_shift", alpha, &stats, critical);
        if power.rate < MIN_POWER {
            violations.push(format!(
                "calibration: half-space power {:.3} below {MIN_POWER}",
                power.rate
            ));
        }
        rows.push(power);
    }
    let always = row("alpha_one", 1.0, &null, quantiles.quantile(0.0)?);
    let positive = null.iter().filter(|&&x| x > 0.0).count();
    if always.rejections != positive {
        violations.push("calibration: alpha = 1 did not reject every positive statistic".into());
    }
    rows.push(always);
    Ok(CalibrationReport {
        n,
        critical_value: critical,
        pillow_m: quantiles.m,
        pillow_replicates: quantiles.replicates(),
        pillow_refinement: quantiles.refinement,
        rows,
        violations,
    })
}

// ---------------------------------------------------------------------------
// U-statistic moments

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UstatMomentReport {
    pub n: usize,
    /// Mean of `(n^2 / a_n^2)(U_n - E h)`.
    pub mean: f64,
    pub se: f64,
    /// `c ∫∫ (s∧s' - s s') dg(s) dg(s')`.
    pub target: f64,
    pub z: f64,
    pub violations: Vec<String>,
}

/// Checks the first moment of the rescaled degenerate U-statistic for the
/// product kernel `(x - 1/2)(y - 1/2)`.
pub fn run_ustat_moment_experiment(
    config: &ExperimentConfig,
    model: &WalkModel,
    lc: &LimitConstant,
) -> Result<Vec<UstatMomentReport>> {
    let kernel = Kernel::centered_product();
    let Some(KernelMeasure::Product { scale, g }) = kernel.measure() else {
        unreachable!("product kernel")
    };
    let target = lc.c * scale * g.bridge_quadratic(2000);
    let eh = kernel.uniform_mean().expect("product kernel");
    let mut out = Vec::new();
    for &n in &config.n {
        let a2 = norming_squared(model.regime, n)?;
        let vals = replicate_map(config.replicates, config.parallel, |r| {
            let (path, scenery) = replicate_path(model, n, config.seed, r)?;
            let marks = evaluate_along(&path, &scenery)?;
            let u = if n <= 2000 {
                degenerate_ustat(&marks, &kernel)
            } else {
                // the product kernel factorizes; the double sum is O(n^2)
                let m = marks.iter().sum::<f64>() / n as f64;
                (m - 0.5).powi(2)
            };
            Ok((n * n) as f64 / a2 * (u - eh))
        })?;
        let pc = z_score(&vals, target);
        let mut violations = Vec::new();
        if pc.z.abs() > Z_TOL {
            violations.push(format!("ustat moment n={n}: z = {:.3}", pc.z));
        }
        out.push(UstatMomentReport {
            n,
            mean: pc.empirical,
            se: pc.se,
            target,
            z: pc.z,
            violations,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::lazy_walk;

    fn spec(law: crate::walk::IncrementLaw) -> ModelSpec {
        ModelSpec {
            d: law.dim(),
            support: Some(law.support().to_vec()),
            probs: Some(law.probs().to_vec()),
            heavy_tail: None,
            regime: None,
            allow_periodic: false,
        }
    }

    fn config(kind: ExperimentKind, n: Vec<usize>, r: usize) -> ExperimentConfig {
        ExperimentConfig {
            model: spec(lazy_walk(2)),
            experiment: kind,
            n,
            replicates: r,
            seed: 11,
            grid_s: None,
            grid_t: None,
            output: None,
            deltas: None,
            epsilon: None,
            alpha: None,
            pillow: None,
            alternative: None,
            parallel: true,
        }
    }

    /// Literal `O(g^3)` evaluation of one directional modulus.
    fn brute_directional(grid: &[f64], delta: f64, dist: impl Fn(usize, usize) -> f64) -> f64 {
        let g = grid.len();
        let mut best: f64 = 0.0;
        for a in 0..g {
            for c in a..g {
                for b in c..g {
                    if grid[b] - grid[a] <= delta + 1e-12 {
                        best = best.max(dist(a, c).min(dist(c, b)));
                    }
                }
            }
        }
        best
    }

    #[test]
    fn directional_modulus_matches_brute_force() {
        let grid: Vec<f64> = (0..=12).map(|i| i as f64 / 12.0).collect();
        let xs: Vec<f64> = (0..13).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
        let dist = |a: usize, b: usize| (xs[a] - xs[b]).abs();
        let deltas = [0.0, 0.1, 0.2, 0.3, 0.5, 1.0];
        let fast = directional_modulus(&grid, &deltas, dist);
        for (d, f) in deltas.iter().zip(&fast) {
            assert_eq!(*f, brute_directional(&grid, *d, dist));
        }
    }

    #[test]
    fn subsampled_grid_shape() {
        let g = subsampled_grid(100);
        assert_eq!(g.len(), 101);
        let g = subsampled_grid(10_000);
        assert_eq!(g.len(), 201);
        assert_eq!(g[1], 0.005);
        assert_eq!(*g.last().unwrap(), 1.0);
    }

    #[test]
    fn parallel_and_serial_reports_match() {
        let mut cfg = config(ExperimentKind::Covariance, vec![300], 20);
        let par = run_experiment(&cfg).unwrap().to_json().unwrap();
        cfg.parallel = false;
        let ser = run_experiment(&cfg).unwrap().to_json().unwrap();
        assert_eq!(par, ser);
    }

    #[test]
    fn drift_walk_lambda_is_exactly_one() {
        let law = crate::walk::IncrementLaw::new(1, vec![vec![1]], vec![1.0]).unwrap();
        let mut cfg = config(ExperimentKind::Lambda, vec![10, 100], 3);
        cfg.model = spec(law);
        cfg.model.allow_periodic = true;
        let rep = run_experiment(&cfg).unwrap();
        let ExperimentResult::Lambda(l) = &rep.result else {
            panic!()
        };
        assert!(l.rows.iter().all(|r| r.mean == 1.0 && r.sd == 0.0));
        assert!(rep.passed());
        assert!(!rep.theorem_flags.aperiodic);
    }

    #[test]
    fn huge_epsilon_never_exceeded() {
        let mut cfg = config(ExperimentKind::Modulus, vec![400], 10);
        cfg.epsilon = Some(1e6);
        let rep = run_experiment(&cfg).unwrap();
        let ExperimentResult::Modulus(m) = &rep.result else {
            panic!()
        };
        assert!(m[0].frequencies.iter().all(|&f| f == 0.0));
        assert_eq!(m[0].monotonicity_failures, 0);
    }

    #[test]
    fn config_validation() {
        let cfg = config(ExperimentKind::Lambda, vec![100], 1);
        assert!(run_experiment(&cfg).is_err());
        let cfg = config(ExperimentKind::Lambda, vec![100, 10], 5);
        assert!(run_experiment(&cfg).is_err());
        assert!("ustat-moment".parse::<ExperimentKind>().is_ok());
        assert!("bogus".parse::<ExperimentKind>().is_err());
    }

    #[test]
    fn wilson_interval_contains_rate() {
        let [lo, hi] = wilson(25, 500);
        assert!(lo < 0.05 && 0.05 < hi);
        assert_eq!(wilson(0, 10)[0], 0.0);
    }
}
