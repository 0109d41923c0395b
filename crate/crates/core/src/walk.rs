//! Lattice random walks: increment laws, regime classification, path
//! sampling, exact return probabilities and Green-function sums.
//!
//! Three regimes are covered:
//!
//! * [`Regime::Transient`]: any transient walk on `Z^d` (non-centered, or
//!   `d >= 3`); norming `sqrt(n)`, constant `c = 1 + 2 g` with
//!   `g = sum_{k>=1} P(S_k = 0)`.
//! * [`Regime::Cauchy`]: `d = 1` with `S_n / n` converging to a Cauchy law
//!   with characteristic function `exp(-A|t|)`.
//! * [`Regime::Planar`]: centered square-integrable walks on `Z^2` with
//!   invertible covariance `Σ`, `A = 2 sqrt(det Σ)`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{generates_full_lattice, MAX_DIM};
use crate::limits;
use crate::rng::rng_from_seed;

const PROB_SUM_TOL: f64 = 1e-12;
const CENTERED_TOL: f64 = 1e-12;

/// Finite-support increment distribution on `Z^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementLaw {
    dim: usize,
    support: Vec<Vec<i64>>,
    probs: Vec<f64>,
}

impl IncrementLaw {
    pub fn new(dim: usize, support: Vec<Vec<i64>>, probs: Vec<f64>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidLaw(format!(
                "dimension {dim} not in 1..={MAX_DIM}"
            )));
        }
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::InvalidLaw(
                "support and probs must be nonempty and of equal length".into(),
            ));
        }
        if let Some(v) = support.iter().find(|v| v.len() != dim) {
            return Err(Error::InvalidLaw(format!(
                "support vector {v:?} is not {dim}-dimensional"
            )));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::InvalidLaw(format!("probability {p} not in (0, 1]")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total}")));
        }
        let mut sorted = support.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidLaw("support vectors must be distinct".into()));
        }
        if support.iter().flatten().any(|x| x.unsigned_abs() > 1 << 20) {
            return Err(Error::InvalidLaw(
                "support coordinates must be below 2^20".into(),
            ));
        }
        Ok(Self {
            dim,
            support,
            probs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &[Vec<i64>] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Largest coordinate magnitude in the support.
    pub fn radius(&self) -> i64 {
        self.support
            .iter()
            .flatten()
            .map(|x| x.abs())
            .max()
            .unwrap_or(0)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (v, &p) in self.support.iter().zip(&self.probs) {
            for (mi, &x) in m.iter_mut().zip(v) {
                *mi += p * x as f64;
            }
        }
        m
    }

    pub fn is_centered(&self) -> bool {
        self.mean().iter().all(|m| m.abs() <= CENTERED_TOL)
    }

    /// Covariance matrix, row-major `d × d`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let m = self.mean();
        let mut c = vec![0.0; d * d];
        for (v, &p) in self.support.iter().zip(&self.probs) {
            for i in 0..d {
                for j in 0..d {
                    c[i * d + j] += p * (v[i] as f64 - m[i]) * (v[j] as f64 - m[j]);
                }
            }
        }
        c
    }

    /// `E[exp(i <u, X>)]`.
    pub fn char_fn(&self, u: &[f64]) -> Complex64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(v, &p)| {
                let phase: f64 = v.iter().zip(u).map(|(&x, &ui)| x as f64 * ui).sum();
                Complex64::from_polar(p, phase)
            })
            .sum()
    }

    /// True when the support itself generates `Z^d`.
    pub fn generates_lattice(&self) -> bool {
        generates_full_lattice(&self.support, self.dim)
    }

    /// True when `P(X = x) = P(X = -x)` for every support point.
    pub fn is_symmetric(&self) -> bool {
        self.support.iter().zip(&self.probs).all(|(v, &p)| {
            let neg: Vec<i64> = v.iter().map(|x| -x).collect();
            self.support
                .iter()
                .position(|w| *w == neg)
                .is_some_and(|j| (self.probs[j] - p).abs() <= 1e-15)
        })
    }

    fn differences(&self) -> Vec<Vec<i64>> {
        let base = &self.support[0];
        self.support[1..]
            .iter()
            .map(|v| v.iter().zip(base).map(|(a, b)| a - b).collect())
            .collect()
    }
}

/// Symmetric heavy-tailed law on `m·Z` with `P(|X| = m k) = C / k^2` for
/// `k >= 1`, split evenly between the two signs, and the remaining mass at 0.
///
/// Its characteristic function is
/// `1 - C (π|v|/2 - v^2/4)` with `v = m u` reduced to `[-π, π]`, so the walk
/// lies in the domain of attraction of a Cauchy law.
#[derive(Clone, Debug, PartialEq)]
pub struct HeavyTailLaw {
    tail_constant: f64,
    scale: i64,
}

const ZETA2: f64 = PI * PI / 6.0;

impl HeavyTailLaw {
    pub fn new(tail_constant: f64) -> Result<Self> {
        Self::with_scale(tail_constant, 1)
    }

    pub fn with_scale(tail_constant: f64, scale: i64) -> Result<Self> {
        if !(tail_constant > 0.0 && tail_constant <= 1.0 / ZETA2) {
            return Err(Error::InvalidLaw(format!(
                "tail constant {tail_constant} must lie in (0, 6/π²]"
            )));
        }
        if scale < 1 {
            return Err(Error::InvalidLaw(format!("scale {scale} must be positive")));
        }
        Ok(Self {
            tail_constant,
            scale,
        })
    }

    pub fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    pub fn scale(&self) -> i64 {
        self.scale
    }

    pub fn zero_mass(&self) -> f64 {
        1.0 - self.tail_constant * ZETA2
    }

    /// `P(X = x)`.
    pub fn prob(&self, x: i64) -> f64 {
        if x == 0 {
            return self.zero_mass();
        }
        if x % self.scale != 0 {
            return 0.0;
        }
        let k = (x / self.scale).unsigned_abs() as f64;
        self.tail_constant / (2.0 * k * k)
    }

    /// `1 - φ(u)`, computed without cancellation.
    pub fn one_minus_char(&self, u: f64) -> f64 {
        let v = (self.scale as f64 * u).rem_euclid(2.0 * PI);
        let v = if v > PI { 2.0 * PI - v } else { v };
        self.tail_constant * (PI * v / 2.0 - v * v / 4.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let u: f64 = rng.random();
        let p0 = self.zero_mass();
        if u < p0 {
            return 0;
        }
        // conditional on X != 0: P(|X| >= k) = T(k) / ζ(2)
        let w = 1.0 - (u - p0) / (1.0 - p0);
        let level = w * ZETA2;
        let mut lo: u64 = 1; // T(lo) >= level
        let mut hi: u64 = 1 << 62;
        if inverse_square_tail(hi) >= level {
            lo = hi;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if inverse_square_tail(mid) >= level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let magnitude = (lo as i64).saturating_mul(self.scale);
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }
}

/// `T(k) = sum_{j >= k} 1 / j^2` (the trigamma function at integers).
fn inverse_square_tail(k: u64) -> f64 {
    if k < 16 {
        let head: f64 = (1..k).map(|j| 1.0 / (j * j) as f64).sum();
        return ZETA2 - head;
    }
    let x = k as f64;
    let x2 = x * x;
    1.0 / x + 1.0 / (2.0 * x2) + 1.0 / (6.0 * x2 * x) - 1.0 / (30.0 * x2 * x2 * x)
        + 1.0 / (42.0 * x2 * x2 * x2 * x)
}

/// Either kind of increment law.
#[derive(Clone, Debug, PartialEq)]
pub enum StepLaw {
    Finite(IncrementLaw),
    HeavyTail(HeavyTailLaw),
}

impl StepLaw {
    pub fn dim(&self) -> usize {
        match self {
            StepLaw::Finite(l) => l.dim(),
            StepLaw::HeavyTail(_) => 1,
        }
    }

    /// `ln |φ(u)|` for one-dimensional laws.
    pub fn log_char_modulus(&self, u: f64) -> Result<f64> {
        match self {
            StepLaw::HeavyTail(h) => Ok((-h.one_minus_char(u)).ln_1p()),
            StepLaw::Finite(l) if l.dim() == 1 => Ok(l.char_fn(&[u]).norm().ln()),
            StepLaw::Finite(_) => Err(Error::InvalidInput(
                "characteristic-function fit needs a one-dimensional law".into(),
            )),
        }
    }
}

impl From<IncrementLaw> for StepLaw {
    fn from(l: IncrementLaw) -> Self {
        StepLaw::Finite(l)
    }
}

impl From<HeavyTailLaw> for StepLaw {
    fn from(l: HeavyTailLaw) -> Self {
        StepLaw::HeavyTail(l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "A_TRANSIENT")]
    Transient,
    #[serde(rename = "B1_CAUCHY")]
    Cauchy,
    #[serde(rename = "B2_PLANAR")]
    Planar,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Transient => "A_TRANSIENT",
            Regime::Cauchy => "B1_CAUCHY",
            Regime::Planar => "B2_PLANAR",
        }
    }
}

/// Hypothesis bookkeeping carried into every downstream report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TheoremFlags {
    pub aperiodic: bool,
    pub hypotheses_violated: bool,
    pub notes: Vec<String>,
}

/// Green-function sum `g = sum_{k>=1} P(S_k = 0)` with its error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenSum {
    pub g: f64,
    pub error_bound: f64,
    /// Largest `k` whose return probability entered the sum exactly.
    pub truncation: usize,
    pub converged: bool,
}

/// A walk law together with its regime and regime parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct WalkModel {
    pub law: StepLaw,
    pub regime: Regime,
    /// `A` for the recurrent regimes.
    pub a_param: Option<f64>,
    /// Half-width of the uncertainty band on `A` (0 when exact).
    pub a_band: Option<f64>,
    /// Row-major 2×2 covariance for the planar regime.
    pub covariance: Option<[f64; 4]>,
    pub green: Option<GreenSum>,
    pub flags: TheoremFlags,
}

impl WalkModel {
    pub fn dim(&self) -> usize {
        self.law.dim()
    }
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub regime_hint: Option<Regime>,
    pub allow_periodic: bool,
    pub green_rel_tol: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            regime_hint: None,
            allow_periodic: false,
            green_rel_tol: 1e-6,
        }
    }
}

/// Strong aperiodicity: the differences of support points generate `Z^d`,
/// equivalently the support lies in no coset of a proper subgroup.
pub fn check_aperiodicity(law: &StepLaw) -> bool {
    match law {
        // support contains 0 and ±scale; differences generate Z iff scale = 1
        StepLaw::HeavyTail(h) => h.scale() == 1,
        StepLaw::Finite(l) => generates_full_lattice(&l.differences(), l.dim()),
    }
}

/// Classifies a law into a regime and fills in the regime parameters.
pub fn build_model(law: impl Into<StepLaw>, opts: &BuildOptions) -> Result<WalkModel> {
    let law = law.into();
    let hint_ok = |r: Regime| opts.regime_hint.is_none_or(|h| h == r);
    match &law {
        StepLaw::HeavyTail(h) => {
            if !hint_ok(Regime::Cauchy) {
                return Err(Error::RegimeUndetermined(
                    "heavy-tailed law only fits the Cauchy regime".into(),
                ));
            }
            let flags = aperiodicity_flags(&law, opts)?;
            if h.scale() != 1 && !opts.allow_periodic {
                return Err(Error::NotAperiodic);
            }
            let est = limits::estimate_a(&law)?;
            Ok(WalkModel {
                law,
                regime: Regime::Cauchy,
                a_param: Some(est.a),
                a_band: Some(est.band),
                covariance: None,
                green: None,
                flags,
            })
        }
        StepLaw::Finite(l) => {
            if !l.generates_lattice() {
                return Err(Error::RegimeUndetermined(format!(
                    "support does not generate Z^{}",
                    l.dim()
                )));
            }
            let flags = aperiodicity_flags(&law, opts)?;
            let regime = if !l.is_centered() || l.dim() >= 3 {
                Regime::Transient
            } else if l.dim() == 2 {
                Regime::Planar
            } else {
                return Err(Error::RegimeUndetermined(
                    "centered finite-variance walk on Z is recurrent with α = 2 > d".into(),
                ));
            };
            if !hint_ok(regime) {
                return Err(Error::RegimeUndetermined(format!(
                    "law classifies as {} but {:?} was requested",
                    regime.label(),
                    opts.regime_hint
                )));
            }
            match regime {
                Regime::Planar => {
                    let c = l.covariance();
                    let det = c[0] * c[3] - c[1] * c[2];
                    if !(det > 1e-15) {
                        return Err(Error::SingularCovariance(det));
                    }
                    Ok(WalkModel {
                        a_param: Some(2.0 * det.sqrt()),
                        a_band: Some(0.0),
                        covariance: Some([c[0], c[1], c[2], c[3]]),
                        green: None,
                        law,
                        regime,
                        flags,
                    })
                }
                _ => {
                    let green = green_sum_law(l, opts.green_rel_tol)?;
                    let mut flags = flags;
                    if !green.converged {
                        flags.notes.push(format!(
                            "green sum did not reach the requested tolerance (error bound {:.3e})",
                            green.error_bound
                        ));
                    }
                    Ok(WalkModel {
                        a_param: None,
                        a_band: None,
                        covariance: None,
                        green: Some(green),
                        law,
                        regime,
                        flags,
                    })
                }
            }
        }
    }
}

fn aperiodicity_flags(law: &StepLaw, opts: &BuildOptions) -> Result<TheoremFlags> {
    let aperiodic = check_aperiodicity(law);
    if !aperiodic && !opts.allow_periodic {
        return Err(Error::NotAperiodic);
    }
    let mut flags = TheoremFlags {
        aperiodic,
        hypotheses_violated: !aperiodic,
        notes: Vec::new(),
    };
    if !aperiodic {
        flags
            .notes
            .push("theorem hypotheses violated: periodic walk accepted by override".into());
    }
    Ok(flags)
}

/// A sampled trajectory `S_1..S_n` (with `S_0 = 0` implicit), stored flat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Path {
    dim: usize,
    coords: Vec<i64>,
    seed: u64,
}

impl Path {
    /// Wraps explicit positions; `coords.len()` must be a multiple of `dim`.
    pub fn from_positions(dim: usize, coords: Vec<i64>, seed: u64) -> Result<Self> {
        if dim == 0 || coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(
                "positions do not form a nonempty path".into(),
            ));
        }
        Ok(Self { dim, coords, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `S_{k+1}` for zero-based `k`.
    pub fn position(&self, k: usize) -> &[i64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn positions(&self) -> std::slice::ChunksExact<'_, i64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    /// Little-endian 64-bit coordinates, `S_1` first.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        for x in &self.coords {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    /// CSV with header `k,x1,...,xd`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x{i}")));
        wr.write_record(&header)?;
        for (k, p) in self.positions().enumerate() {
            let mut rec = vec![(k + 1).to_string()];
            rec.extend(p.iter().map(|x| x.to_string()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Reusable increment sampler.
pub struct StepSampler<'a> {
    law: &'a StepLaw,
    index: Option<WeightedIndex<f64>>,
}

impl<'a> StepSampler<'a> {
    pub fn new(law: &'a StepLaw) -> Self {
        let index = match law {
            StepLaw::Finite(l) => {
                Some(WeightedIndex::new(l.probs().iter().copied()).expect("validated weights"))
            }
            StepLaw::HeavyTail(_) => None,
        };
        Self { law, index }
    }

    /// Adds one increment to `pos`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R, pos: &mut [i64]) {
        match (self.law, &self.index) {
            (StepLaw::Finite(l), Some(idx)) => {
                let v = &l.support()[idx.sample(rng)];
                for (p, x) in pos.iter_mut().zip(v) {
                    *p += x;
                }
            }
            (StepLaw::HeavyTail(h), _) => {
                pos[0] = pos[0].wrapping_add(h.sample(rng));
            }
            _ => unreachable!(),
        }
    }
}

/// Samples `S_1..S_n`; deterministic in `(model, n, seed)`.
pub fn sample_path(model: &WalkModel, n: usize, seed: u64) -> Result<Path> {
    if n == 0 {
        return Err(Error::InvalidInput("path length must be positive".into()));
    }
    let d = model.dim();
    let sampler = StepSampler::new(&model.law);
    let mut rng = rng_from_seed(seed);
    let mut pos = vec![0i64; d];
    let mut coords = Vec::with_capacity(n * d);
    for _ in 0..n {
        sampler.step(&mut rng, &mut pos);
        coords.extend_from_slice(&pos);
    }
    Ok(Path {
        dim: d,
        coords,
        seed,
    })
}

/// Limits on exact dense convolutions.
#[derive(Clone, Copy, Debug)]
pub struct ConvolutionCap {
    pub max_steps: usize,
    pub max_radius: i64,
    pub max_cells: u128,
}

impl Default for ConvolutionCap {
    fn default() -> Self {
        Self {
            max_steps: 2048,
            max_radius: 4,
            max_cells: 1 << 24,
        }
    }
}

/// Exact `P(S_k = 0)` by `k`-fold convolution of the increment mass.
pub fn return_probability(model: &WalkModel, k: usize) -> Result<f64> {
    match &model.law {
        StepLaw::Finite(l) => return_probability_with(l, k, ConvolutionCap::default()),
        StepLaw::HeavyTail(_) => Err(Error::InvalidInput(
            "exact convolution needs a finite-support law".into(),
        )),
    }
}

pub fn return_probability_with(law: &IncrementLaw, k: usize, cap: ConvolutionCap) -> Result<f64> {
    if k == 0 {
        return Ok(1.0);
    }
    let d = law.dim();
    let r = law.radius().max(1);
    let half = k as i64 * r;
    let side = 2 * half as u128 + 1;
    let cells = side.checked_pow(d as u32).unwrap_or(u128::MAX);
    if k > cap.max_steps || r > cap.max_radius || cells > cap.max_cells {
        return Err(Error::ConvolutionTooLarge { k, cells });
    }
    let side = side as usize;
    let strides: Vec<usize> = (0..d).map(|i| side.pow(i as u32)).collect();
    let centre: usize = strides.iter().map(|s| s * half as usize).sum();
    let offsets: Vec<isize> = law
        .support()
        .iter()
        .map(|v| {
            v.iter()
                .zip(&strides)
                .map(|(&x, &s)| x as isize * s as isize)
                .sum()
        })
        .collect();
    let mut cur = vec![0.0f64; side.pow(d as u32)];
    let mut next = cur.clone();
    cur[centre] = 1.0;
    for j in 0..k {
        next.iter_mut().for_each(|x| *x = 0.0);
        let active = j as i64 * r;
        for_each_in_box(d, half, active, &strides, |idx| {
            let m = cur[idx];
            if m != 0.0 {
                for (&off, &p) in offsets.iter().zip(law.probs()) {
                    next[(idx as isize + off) as usize] += p * m;
                }
            }
        });
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur[centre])
}

/// Visits flat indices of the cube of radius `active` around the centre of a
/// box of half-width `half`.
fn for_each_in_box(d: usize, half: i64, active: i64, strides: &[usize], mut f: impl FnMut(usize)) {
    let lo = (half - active) as usize;
    let hi = (half + active) as usize;
    let mut idx = vec![lo; d];
    loop {
        f(idx.iter().zip(strides).map(|(i, s)| i * s).sum());
        let mut axis = 0;
        loop {
            if axis == d {
                return;
            }
            if idx[axis] < hi {
                idx[axis] += 1;
                break;
            }
            idx[axis] = lo;
            axis += 1;
        }
    }
}

/// Grid-size ceiling for the Fourier evaluation of partial Green sums.
pub const GREEN_MAX_CELLS: u128 = 1 << 26;
/// Hoeffding exponent for the aliasing window: each coordinate leaves the
/// window with probability at most `2 exp(-HOEFFDING_L)`.
const HOEFFDING_L: f64 = 40.0;

/// `g = sum_{k>=1} P(S_k = 0)` for a transient model.
pub fn green_sum(model: &WalkModel, rel_tol: f64) -> Result<GreenSum> {
    match &model.law {
        StepLaw::Finite(l) => green_sum_law(l, rel_tol),
        StepLaw::HeavyTail(_) => Err(Error::NotTransient),
    }
}

/// Partial sums `G_K = sum_{k=1}^K P(S_k = 0)` for each `K` in `ks`.
///
/// Evaluated on the discrete Fourier grid of side `M`:
/// `G_K = M^{-d} sum_u Re[φ(u)(1 - φ(u)^K) / (1 - φ(u))]`. The grid is exact
/// when it covers every reachable site and otherwise covers a Hoeffding
/// window whose aliasing mass is below `1e-16`.
pub fn green_partial_sums(law: &IncrementLaw, ks: &[usize]) -> Result<Vec<f64>> {
    let Some(&kmax) = ks.iter().max() else {
        return Ok(Vec::new());
    };
    if kmax == 0 {
        return Ok(vec![0.0; ks.len()]);
    }
    let d = law.dim();
    let r = law.radius().max(1) as f64;
    let drift = law.mean().iter().fold(0.0f64, |a, m| a.max(m.abs()));
    let window = r * (2.0 * kmax as f64 * HOEFFDING_L).sqrt();
    let reach = (kmax as f64 * r).min(kmax as f64 * drift + window).ceil() as usize;
    let m = 2 * reach + 1;
    let cells = (m as u128).pow(d as u32);
    if cells > GREEN_MAX_CELLS {
        return Err(Error::ConvolutionTooLarge { k: kmax, cells });
    }
    let rad = law.radius() as usize;
    // table[j][x + rad] = exp(2πi j x / M)
    let table: Vec<Vec<Complex64>> = (0..m)
        .map(|j| {
            (0..=2 * rad)
                .map(|xi| {
                    let x = xi as f64 - rad as f64;
                    let ang = 2.0 * PI * ((j as f64 * x) % m as f64) / m as f64;
                    Complex64::from_polar(1.0, ang)
                })
                .collect()
        })
        .collect();
    let shifted: Vec<Vec<usize>> = law
        .support()
        .iter()
        .map(|v| v.iter().map(|&x| (x + rad as i64) as usize).collect())
        .collect();
    let symmetric = law.is_symmetric();
    let probs = law.probs();
    let inner = m.pow(d as u32 - 1);

    // φ(-u) = conj φ(u), so first-axis frequencies j and M - j contribute
    // equal real parts.
    let partial = |j0: usize| -> Vec<f64> {
        let mut acc = vec![0.0; ks.len()];
        let mut idx = vec![0usize; d];
        idx[0] = j0;
        for flat in 0..inner {
            let mut rem = flat;
            for slot in idx.iter_mut().skip(1) {
                *slot = rem % m;
                rem /= m;
            }
            let mut phi = Complex64::new(0.0, 0.0);
            for (s, &p) in shifted.iter().zip(probs) {
                let mut e = table[idx[0]][s[0]];
                for a in 1..d {
                    e *= table[idx[a]][s[a]];
                }
                phi += e * p;
            }
            for (a, &k) in acc.iter_mut().zip(ks) {
                *a += geometric_partial(phi, k, symmetric);
            }
        }
        acc
    };
    let half_range: Vec<usize> = (1..=(m - 1) / 2).collect();
    let mut totals = partial(0);
    let rest: Vec<Vec<f64>> = half_range.par_iter().map(|&j| partial(j)).collect();
    for v in rest {
        for (t, x) in totals.iter_mut().zip(v) {
            *t += 2.0 * x;
        }
    }
    Ok(totals.into_iter().map(|t| t / cells as f64).collect())
}

/// `Re sum_{k=1}^K φ^k`.
#[inline]
fn geometric_partial(phi: Complex64, k: usize, real: bool) -> f64 {
    let one_minus = Complex64::new(1.0, 0.0) - phi;
    if one_minus.norm() < 1e-13 {
        return k as f64;
    }
    if real {
        let p = phi.re;
        p * (1.0 - p.powi(k as i32)) / (1.0 - p)
    } else {
        (phi * (Complex64::new(1.0, 0.0) - phi.powi(k as i32)) / one_minus).re
    }
}

pub(crate) fn green_sum_law(law: &IncrementLaw, rel_tol: f64) -> Result<GreenSum> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidInput("rel_tol must be positive".into()));
    }
    if law.is_centered() {
        if law.dim() <= 2 {
            return Err(Error::NotTransient);
        }
        green_sum_centered(law, rel_tol)
    } else {
        green_sum_drift(law, rel_tol)
    }
}

/// Centered walks in `d >= 3`: exact partial sums at `K/8, K/4, K/2, K`,
/// extrapolated with the expansion
/// `G_K = g + b_1 K^{1-d/2} + b_2 K^{-d/2} + b_3 K^{-1-d/2}`. The error bound
/// is the change between the two- and three-term fits.
fn green_sum_centered(law: &IncrementLaw, rel_tol: f64) -> Result<GreenSum> {
    let d = law.dim() as f64;
    let mut kmax = 64usize;
    let mut best: Option<GreenSum> = None;
    loop {
        let ks = [kmax / 8, kmax / 4, kmax / 2, kmax];
        let partial = match green_partial_sums(law, &ks) {
            Ok(p) => p,
            Err(Error::ConvolutionTooLarge { .. }) if best.is_some() => {
                let mut b = best.unwrap();
                b.converged = false;
                return Ok(b);
            }
            Err(e) => return Err(e),
        };
        let exps = [1.0 - d / 2.0, -d / 2.0, -1.0 - d / 2.0];
        let fit = |pts: &[usize], n_terms: usize| -> f64 {
            let rows: Vec<Vec<f64>> = pts
                .iter()
                .map(|&i| {
                    let k = ks[i] as f64;
                    let mut row = vec![1.0];
                    row.extend(exps[..n_terms].iter().map(|e| k.powf(*e)));
                    row.push(partial[i]);
                    row
                })
                .collect();
            solve_augmented(rows)[0]
        };
        let g3 = fit(&[0, 1, 2, 3], 3);
        let g2 = fit(&[1, 2, 3], 2);
        let eb = (g3 - g2).abs() + 1e-15 * kmax as f64;
        let cur = GreenSum {
            g: g3,
            error_bound: eb,
            truncation: kmax,
            converged: eb <= rel_tol * g3.abs().max(f64::MIN_POSITIVE),
        };
        if cur.converged {
            return Ok(cur);
        }
        best = Some(cur);
        kmax *= 2;
    }
}

/// Non-centered walks: `P(S_k = 0) <= ρ^k` with `ρ = inf_θ E exp<θ, X>`
/// (Chernoff along the drift direction), so the tail after `K` is at most
/// `ρ^{K+1} / (1 - ρ)`.
fn green_sum_drift(law: &IncrementLaw, rel_tol: f64) -> Result<GreenSum> {
    let mu = law.mean();
    // every step strictly along the drift: the walk never returns
    if law
        .support()
        .iter()
        .all(|v| v.iter().zip(&mu).map(|(&x, m)| x as f64 * m).sum::<f64>() > 0.0)
    {
        return Ok(GreenSum {
            g: 0.0,
            error_bound: 0.0,
            truncation: 0,
            converged: true,
        });
    }
    let rho = chernoff_rate(law, &mu);
    let mut k = 16usize;
    loop {
        let tail = rho.powi(k as i32 + 1) / (1.0 - rho);
        let g_k = green_partial_sums(law, &[k])
            .map_err(|_| Error::NoConvergence(format!("Chernoff rate {rho} too close to 1")))?[0];
        if tail <= rel_tol * g_k || tail < 1e-15 {
            return Ok(GreenSum {
                g: g_k + tail / 2.0,
                error_bound: tail / 2.0 + 1e-15 * k as f64,
                truncation: k,
                converged: true,
            });
        }
        k *= 2;
    }
}

fn chernoff_rate(law: &IncrementLaw, mu: &[f64]) -> f64 {
    let norm = mu.iter().map(|m| m * m).sum::<f64>().sqrt();
    let mgf = |t: f64| -> f64 {
        law.support()
            .iter()
            .zip(law.probs())
            .map(|(v, &p)| {
                let proj: f64 = v.iter().zip(mu).map(|(&x, m)| x as f64 * m).sum::<f64>() / norm;
                p * (-t * proj).exp()
            })
            .sum()
    };
    // golden-section search on a convex function
    let (mut a, mut b) = (0.0f64, 50.0f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if mgf(c) < mgf(d) {
            b = d;
        } else {
            a = c;
        }
    }
    mgf((a + b) / 2.0).min(1.0)
}

/// Solves a square system given as augmented rows; returns the solution.
#[allow(clippy::needless_range_loop)]
fn solve_augmented(mut rows: Vec<Vec<f64>>) -> Vec<f64> {
    let n = rows.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()))
            .unwrap();
        rows.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = rows[r][col] / rows[col][col];
                for c in col..=n {
                    rows[r][c] -= f * rows[col][c];
                }
            }
        }
    }
    (0..n).map(|i| rows[i][n] / rows[i][i]).collect()
}

/// JSON model specification.
///
/// `{"d":2,"support":[[1,0],[-1,0],[0,1],[0,-1],[0,0]],"probs":[0.2,0.2,0.2,0.2,0.2]}`
/// or `{"d":1,"heavy_tail":{"C":0.5}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heavy_tail: Option<HeavyTailSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_periodic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeavyTailSpec {
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: i64,
}

fn one() -> i64 {
    1
}

fn is_one(x: &i64) -> bool {
    *x == 1
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn law(&self) -> Result<StepLaw> {
        match (&self.support, &self.probs, &self.heavy_tail) {
            (Some(s), Some(p), None) => Ok(IncrementLaw::new(self.d, s.clone(), p.clone())?.into()),
            (None, None, Some(h)) => {
                if self.d != 1 {
                    return Err(Error::InvalidLaw(
                        "heavy-tailed laws are one-dimensional".into(),
                    ));
                }
                Ok(HeavyTailLaw::with_scale(h.c, h.scale)?.into())
            }
            _ => Err(Error::InvalidLaw(
                "give either support+probs or heavy_tail".into(),
            )),
        }
    }

    pub fn build(&self) -> Result<WalkModel> {
        let opts = BuildOptions {
            regime_hint: self.regime,
            allow_periodic: self.allow_periodic,
            ..BuildOptions::default()
        };
        build_model(self.law()?, &opts)
    }
}

/// Lazy nearest-neighbour walk on `Z^d`: stay or move `±e_i`, each with
/// probability `1 / (2d + 1)`.
pub fn lazy_walk(d: usize) -> IncrementLaw {
    let mut support = vec![vec![0; d]];
    for i in 0..d {
        for s in [1, -1] {
            let mut v = vec![0; d];
            v[i] = s;
            support.push(v);
        }
    }
    let n = support.len();
    IncrementLaw::new(d, support, vec![1.0 / n as f64; n]).expect("valid lazy walk")
}
