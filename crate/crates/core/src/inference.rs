//! The change-point statistic `T_n` and its test, and degenerate
//! U-statistics of the scenery seen along the walk.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::empirical::{floor_steps, norming_value, EmpiricalSheet};
use crate::error::{Error, Result};
use crate::limits::{limit_constant, PillowQuantiles};
use crate::walk::{TheoremFlags, WalkModel};

/// Dense ranks `0..m` of the values and the multiplicity-weighted count of
/// each rank.
fn dense_ranks(values: &[f64]) -> Result<(Vec<usize>, Vec<i64>)> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in values".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut mult: Vec<i64> = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if pos == 0 || values[i] != values[order[pos - 1]] {
            mult.push(0);
        }
        ranks[i] = mult.len() - 1;
        *mult.last_mut().unwrap() += 1;
    }
    Ok((ranks, mult))
}

const NEVER: i64 = i64::MAX;

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

/// Kinetic segment tree over lines `a_j + b_j x` supporting range additions
/// to `a` and monotone advances of `x`, with the maximum at the root.
struct KineticMax {
    size: usize,
    // per node: winning line, next time a comparison in the subtree flips
    a: Vec<i64>,
    b: Vec<i64>,
    melt: Vec<i64>,
    lazy: Vec<i64>,
    x: i64,
}

impl KineticMax {
    fn new(slopes: &[i64]) -> Self {
        let size = slopes.len();
        let mut t = Self {
            size,
            a: vec![0; 4 * size],
            b: vec![0; 4 * size],
            melt: vec![NEVER; 4 * size],
            lazy: vec![0; 4 * size],
            x: 0,
        };
        t.build(1, 0, size - 1, slopes);
        t
    }

    fn build(&mut self, node: usize, lo: usize, hi: usize, slopes: &[i64]) {
        if lo == hi {
            self.b[node] = slopes[lo];
            return;
        }
        let mid = (lo + hi) / 2;
        self.build(2 * node, lo, mid, slopes);
        self.build(2 * node + 1, mid + 1, hi, slopes);
        self.pull(node);
    }

    fn pull(&mut self, node: usize) {
        let (l, r) = (2 * node, 2 * node + 1);
        let x = self.x;
        let vl = self.a[l] + self.b[l] * x;
        let vr = self.a[r] + self.b[r] * x;
        let (w, o) = if vl > vr || (vl == vr && self.b[l] >= self.b[r]) {
            (l, r)
        } else {
            (r, l)
        };
        self.a[node] = self.a[w];
        self.b[node] = self.b[w];
        let mut melt = self.melt[l].min(self.melt[r]);
        if self.b[o] > self.b[w] {
            melt = melt.min(floor_div(self.a[w] - self.a[o], self.b[o] - self.b[w]) + 1);
        }
        self.melt[node] = melt;
    }

    fn apply(&mut self, node: usize, add: i64) {
        self.a[node] += add;
        self.lazy[node] += add;
    }

    fn push(&mut self, node: usize) {
        let add = std::mem::take(&mut self.lazy[node]);
        if add != 0 {
            self.apply(2 * node, add);
            self.apply(2 * node + 1, add);
        }
    }

    fn add(&mut self, node: usize, lo: usize, hi: usize, from: usize, amount: i64) {
        if hi < from {
            return;
        }
        if from <= lo {
            self.apply(node, amount);
            return;
        }
        self.push(node);
        let mid = (lo + hi) / 2;
        self.add(2 * node, lo, mid, from, amount);
        self.add(2 * node + 1, mid + 1, hi, from, amount);
        self.pull(node);
    }

    fn heaten(&mut self, node: usize, lo: usize, hi: usize) {
        if self.melt[node] > self.x || lo == hi {
            return;
        }
        self.push(node);
        let mid = (lo + hi) / 2;
        self.heaten(2 * node, lo, mid);
        self.heaten(2 * node + 1, mid + 1, hi);
        self.pull(node);
    }

    fn advance(&mut self, x: i64) {
        self.x = x;
        self.heaten(1, 0, self.size - 1);
    }

    /// Adds `amount` to the intercepts of lines `from..`.
    fn add_suffix(&mut self, from: usize, amount: i64) {
        self.add(1, 0, self.size - 1, from, amount);
    }

    fn max(&self) -> i64 {
        self.a[1] + self.b[1] * self.x
    }
}

fn check_len(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::TooShort(n));
    }
    Ok(())
}

/// `T_n = max_{1<=k<n} sup_s |sum_{i<=k} 1{x_i<=s} - (k/n) sum_{i<=n} 1{x_i<=s}|`.
///
/// The supremum over `s` is attained at the distinct sample values. With
/// `F(j)` the number of values of rank `<= j` and `R_k(j)` the same count
/// among the first `k`, `n E_k(j) = n R_k(j) - k F(j)` is a line in `k`
/// whose intercept gains `n` on a suffix of ranks at every step, so a kinetic
/// segment tree tracks `max_j` and `min_j` in `O(n log^2 n)` amortized.
pub fn changepoint_statistic(values: &[f64]) -> Result<f64> {
    let n = values.len();
    check_len(n)?;
    let (ranks, mult) = dense_ranks(values)?;
    let mut cum = 0;
    let totals: Vec<i64> = mult
        .iter()
        .map(|&c| {
            cum += c;
            cum
        })
        .collect();
    let slopes_max: Vec<i64> = totals.iter().map(|&f| -f).collect();
    let mut hi = KineticMax::new(&slopes_max);
    let mut lo = KineticMax::new(&totals);
    let n_i = n as i64;
    let mut best = 0i64;
    for (k, &r) in ranks.iter().enumerate().take(n - 1) {
        let x = k as i64 + 1;
        hi.advance(x);
        lo.advance(x);
        hi.add_suffix(r, n_i);
        lo.add_suffix(r, -n_i);
        best = best.max(hi.max()).max(lo.max());
    }
    Ok(best as f64 / n as f64)
}

/// Direct `O(n m)` evaluation of [`changepoint_statistic`], `m` the number
/// of distinct values.
pub fn changepoint_statistic_reference(values: &[f64]) -> Result<f64> {
    let n = values.len();
    check_len(n)?;
    let (ranks, mult) = dense_ranks(values)?;
    let mut cum = 0;
    let totals: Vec<i64> = mult
        .iter()
        .map(|&c| {
            cum += c;
            cum
        })
        .collect();
    let mut prefix = vec![0i64; mult.len()];
    let mut best = 0i64;
    for (k, &r) in ranks.iter().enumerate().take(n - 1) {
        for p in &mut prefix[r..] {
            *p += 1;
        }
        let k = k as i64 + 1;
        for (p, f) in prefix.iter().zip(&totals) {
            best = best.max((n as i64 * p - k * f).abs());
        }
    }
    Ok(best as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Retain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub n: usize,
    pub t_n: f64,
    /// `T_n / a_n`.
    pub raw_normalized: f64,
    /// `T_n / (a_n sqrt(c))`.
    pub normalized: f64,
    pub c: f64,
    pub c_error_bound: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub p_value: f64,
    pub decision: Decision,
    /// Whether moving `c` within its error bound could flip the decision.
    pub decision_sensitive_to_c: bool,
    pub theorem_flags: TheoremFlags,
}

/// Compares `T_n / (a_n sqrt(c))` with the `1 - α` quantile of the
/// simulated pillow supremum.
pub fn changepoint_test(
    values: &[f64],
    model: &WalkModel,
    alpha: f64,
    quantiles: &PillowQuantiles,
) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside (0, 1]")));
    }
    let t_n = changepoint_statistic(values)?;
    let n = values.len();
    let a_n = norming_value(model.regime, n)?;
    let lc = limit_constant(model)?;
    let critical_value = quantiles.quantile(1.0 - alpha)?;
    let raw = t_n / a_n;
    let normalized = raw / lc.c.sqrt();
    let reject = |c: f64| raw / c.sqrt() > critical_value;
    let lo_c = (lc.c - lc.error_bound).max(f64::MIN_POSITIVE);
    let hi_c = lc.c + lc.error_bound;
    Ok(TestReport {
        n,
        t_n,
        raw_normalized: raw,
        normalized,
        c: lc.c,
        c_error_bound: lc.error_bound,
        alpha,
        critical_value,
        p_value: quantiles.p_value(normalized),
        decision: if normalized > critical_value {
            Decision::Reject
        } else {
            Decision::Retain
        },
        decision_sensitive_to_c: reject(lo_c) != reject(hi_c),
        theorem_flags: model.flags.clone(),
    })
}

/// A finite signed measure `μ` on `[0, 1]` together with an offset, standing
/// for the left-continuous step/ramp function `g(x) = g0 + μ([0, x))`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure1D {
    pub offset: f64,
    /// `(x, weight)`.
    pub atoms: Vec<(f64, f64)>,
    /// `(a, b, density)` with `0 <= a < b <= 1`.
    pub segments: Vec<(f64, f64, f64)>,
}

impl SignedMeasure1D {
    pub fn validate(&self) -> Result<()> {
        let bad_atom = self
            .atoms
            .iter()
            .any(|&(x, w)| !(0.0..=1.0).contains(&x) || !w.is_finite());
        let bad_seg = self
            .segments
            .iter()
            .any(|&(a, b, f)| !(0.0 <= a && a < b && b <= 1.0) || !f.is_finite());
        if bad_atom || bad_seg || !self.offset.is_finite() {
            return Err(Error::MeasureNotRepresentable(
                "measure must live on [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// `g(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 < x).map(|a| a.1).sum();
        let segs: f64 = self
            .segments
            .iter()
            .map(|&(a, b, f)| f * (x.clamp(a, b) - a))
            .sum();
        self.offset + atoms + segs
    }

    /// `∫_0^1 g(x) dx = g0 + ∫ (1 - y) dμ(y)`.
    pub fn uniform_mean(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().map(|&(x, w)| w * (1.0 - x)).sum();
        let segs: f64 = self
            .segments
            .iter()
            .map(|&(a, b, f)| f * ((b - a) - (b * b - a * a) / 2.0))
            .sum();
        self.offset + atoms + segs
    }

    /// `∫∫ (s∧s' - s s') dμ(s) dμ(s')`, with density segments discretized
    /// by the midpoint rule on `cells` cells each.
    pub fn bridge_quadratic(&self, cells: usize) -> f64 {
        let mut pts: Vec<(f64, f64)> = self.atoms.clone();
        for &(a, b, f) in &self.segments {
            let h = (b - a) / cells as f64;
            pts.extend((0..cells).map(|i| (a + (i as f64 + 0.5) * h, f * h)));
        }
        let mut acc = 0.0;
        for &(s, u) in &pts {
            let row: f64 = pts.iter().map(|&(s2, u2)| u2 * (s.min(s2) - s * s2)).sum();
            acc += u * row;
        }
        acc
    }
}

/// `dh` for kernels of bounded variation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KernelMeasure {
    /// `h = λ g⊗g`, `dh = λ dg⊗dg`.
    Product { scale: f64, g: SignedMeasure1D },
    /// `dh = sum_k w_k δ_{(x_k, y_k)}`.
    Atomic2D(Vec<(f64, f64, f64)>),
}

type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A symmetric kernel on `[0, 1]^2`, optionally with its measure form.
#[derive(Clone)]
pub struct Kernel {
    h: KernelFn,
    measure: Option<KernelMeasure>,
}

impl std::fmt::Debug for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Kernel")
            .field("measure", &self.measure)
            .finish_non_exhaustive()
    }
}

impl Kernel {
    pub fn new(h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            h: Arc::new(h),
            measure: None,
        }
    }

    /// Attaches a measure form; the caller vouches that it is `dh`.
    pub fn with_measure(
        h: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        measure: KernelMeasure,
    ) -> Self {
        Self {
            h: Arc::new(h),
            measure: Some(measure),
        }
    }

    /// `h(x, y) = λ g(x) g(y)`.
    pub fn product(scale: f64, g: SignedMeasure1D) -> Result<Self> {
        g.validate()?;
        let gc = g.clone();
        Ok(Self {
            h: Arc::new(move |x, y| scale * gc.eval(x) * gc.eval(y)),
            measure: Some(KernelMeasure::Product { scale, g }),
        })
    }

    /// `(x - 1/2)(y - 1/2)`.
    pub fn centered_product() -> Self {
        Self::product(
            1.0,
            SignedMeasure1D {
                offset: -0.5,
                atoms: vec![],
                segments: vec![(0.0, 1.0, 1.0)],
            },
        )
        .expect("valid measure")
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        (self.h)(x, y)
    }

    pub fn measure(&self) -> Option<&KernelMeasure> {
        self.measure.as_ref()
    }

    /// `max |h(x,y) - h(y,x)|` on a `(m+1)^2` grid.
    pub fn symmetry_defect(&self, m: usize) -> f64 {
        let g: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        let mut worst: f64 = 0.0;
        for &x in &g {
            for &y in &g {
                worst = worst.max((self.eval(x, y) - self.eval(y, x)).abs());
            }
        }
        worst
    }

    /// `max_x |∫ h(x, y) dy|` over `x ∈ {i/100}`, by the midpoint rule on
    /// 2000 cells.
    pub fn degeneracy_certificate(&self) -> f64 {
        let cells = 2000;
        let h = 1.0 / cells as f64;
        (0..=100)
            .map(|i| {
                let x = i as f64 / 100.0;
                let s: f64 = (0..cells).map(|k| self.eval(x, (k as f64 + 0.5) * h)).sum();
                (s * h).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `E h(ξ, ξ')` for independent uniforms, when the measure form is known.
    pub fn uniform_mean(&self) -> Option<f64> {
        match &self.measure {
            Some(KernelMeasure::Product { scale, g }) => Some(scale * g.uniform_mean().powi(2)),
            _ => None,
        }
    }
}

/// `U_n(h) = n^{-2} sum_{i,j} h(x_i, x_j)`, diagonal included.
pub fn degenerate_ustat(values: &[f64], kernel: &Kernel) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = values
        .iter()
        .map(|&x| values.iter().map(|&y| kernel.eval(x, y)).sum::<f64>())
        .sum();
    total / (n * n) as f64
}

/// `W_n(·, 1)` as a function on `[0, 1]`, reconstructed from a sheet whose
/// `s`-grid covers `[0, 1]`. Between grid points the count is taken as
/// constant, which is exact when every mark is a grid point.
struct SheetLine<'a> {
    grid: &'a [f64],
    counts: Vec<f64>,
    n: f64,
}

impl<'a> SheetLine<'a> {
    fn new(sheet: &'a EmpiricalSheet) -> Result<Self> {
        let j = sheet
            .grid_t
            .iter()
            .position(|&t| floor_steps(sheet.n, t) == sheet.n)
            .ok_or_else(|| Error::MeasureNotRepresentable("sheet has no t = 1 column".into()))?;
        let g = &sheet.grid_s;
        if g.first() != Some(&0.0) || g.last() != Some(&1.0) {
            return Err(Error::MeasureNotRepresentable(
                "s-grid must span [0, 1]".into(),
            ));
        }
        let n = sheet.n as f64;
        let counts = (0..g.len())
            .map(|i| (sheet.value(i, j) + n * g[i]).round())
            .collect();
        Ok(Self { grid: g, counts, n })
    }

    fn cell(&self, x: f64) -> usize {
        self.grid.partition_point(|&s| s <= x).saturating_sub(1)
    }

    fn at(&self, x: f64) -> f64 {
        self.counts[self.cell(x)] - self.n * x
    }

    /// `∫_a^b W(x) dx`.
    fn integral(&self, a: f64, b: f64) -> f64 {
        let mut acc = 0.0;
        let mut i = self.cell(a);
        let mut lo = a;
        while lo < b {
            let hi = self.grid.get(i + 1).copied().unwrap_or(1.0).min(b);
            acc += self.counts[i] * (hi - lo) - self.n * (hi * hi - lo * lo) / 2.0;
            lo = hi;
            i += 1;
            if i >= self.grid.len() {
                break;
            }
        }
        acc
    }

    fn against(&self, mu: &SignedMeasure1D) -> f64 {
        let atoms: f64 = mu.atoms.iter().map(|&(x, w)| w * self.at(x)).sum();
        let segs: f64 = mu
            .segments
            .iter()
            .map(|&(a, b, f)| f * self.integral(a, b))
            .sum();
        atoms + segs
    }
}

/// `n^{-2} ∫∫ W_n(x,1) W_n(y,1) dh(x,y)`, which equals `U_n(h) - E h` for
/// degenerate kernels.
///
/// Exact when the sheet's `s`-grid contains every mark (see
/// [`crate::empirical::jump_sheet`]); otherwise the error is of the order of
/// the grid step.
pub fn ustat_empirical_identity(sheet: &EmpiricalSheet, kernel: &Kernel) -> Result<f64> {
    let measure = kernel
        .measure()
        .ok_or_else(|| Error::MeasureNotRepresentable("kernel has no measure form".into()))?;
    let line = SheetLine::new(sheet)?;
    let n2 = line.n * line.n;
    match measure {
        KernelMeasure::Product { scale, g } => {
            g.validate()?;
            let v = line.against(g);
            Ok(scale * v * v / n2)
        }
        KernelMeasure::Atomic2D(atoms) => {
            if atoms
                .iter()
                .any(|&(x, y, _)| !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y))
            {
                return Err(Error::MeasureNotRepresentable(
                    "atoms must lie in [0, 1]^2".into(),
                ));
            }
            Ok(atoms
                .iter()
                .map(|&(x, y, w)| w * line.at(x) * line.at(y))
                .sum::<f64>()
                / n2)
        }
    }
}
