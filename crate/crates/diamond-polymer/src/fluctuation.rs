//! Rescaled fluctuation fields and the Monte Carlo experiments built on them.
//!
//! For `b = s` and `β = β̂/n` the field `R_n(g) = √n (W_n(β̂/n; g) − 1)`
//! obeys an exact recursion whose quadratic and cubic truncations are
//! `R̂_n` and `R̃_n`. For `b > s` and a small `β_n` the field
//! `(W_n(β_n; g) − 1)/β_n` is compared with its linearization, whose root
//! value is the explicit noise sum `Σ_m b^{−m} Σ_{a∈V_m} ω_a`.
//!
//! Fields are evaluated in two ways. On an address-based [`DisorderField`]
//! the evaluation is exact and reproducible per vertex. As a
//! [`Recursion`] ([`FieldStream`]) the same local rule drives exact streaming
//! trees and population pools, which are the only option at the depths
//! (hundreds to thousands of levels) where the limit theorems are visible.

use crate::disorder::{DisorderField, DisorderSpec, Placement, WeightSampler};
use crate::error::{Error, Result};
use crate::lattice::{LatticeParams, SubgraphAddress};
use crate::polymer;
use crate::population::{self, Recursion};
use crate::rgflow::{self, BeqVariant, Precision};
use crate::rng;
use crate::stats::{self, KsResult, Moments};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which local recursion defines the field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldVariant {
    /// `(W − 1)/h` from the exact partition-function recursion, with
    /// `h = 1/√n` when `b = s` and `h = β_n` when `b > s`.
    Full,
    /// Quadratic truncation (`b = s`).
    Quadratic,
    /// Cubic truncation (`b = s`).
    Cubic,
    /// Linearization for `b > s`.
    BgsLinear,
}

/// A field variant bound to lattice parameters, depth and coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationField {
    pub variant: FieldVariant,
    pub params: LatticeParams,
    pub n: usize,
    /// `β̂` when `b = s`; `β_n` when `b > s`.
    pub coupling: f64,
}

impl FluctuationField {
    pub fn new(variant: FieldVariant, params: LatticeParams, n: usize, coupling: f64) -> Result<Self> {
        let (b, s) = (params.b(), params.s());
        let ok = match variant {
            FieldVariant::Quadratic | FieldVariant::Cubic => b == s,
            FieldVariant::BgsLinear => b > s,
            FieldVariant::Full => b >= s,
        };
        if !ok {
            return Err(Error::VariantMismatch(format!("{variant:?} is not defined for b={b}, s={s}")));
        }
        if n == 0 {
            return Err(Error::Config { field: "n".into(), msg: "depth must be positive".into() });
        }
        if !coupling.is_finite() || (variant == FieldVariant::Full && b > s && coupling == 0.0) {
            return Err(Error::Config { field: "coupling".into(), msg: format!("unusable coupling {coupling}") });
        }
        Ok(Self { variant, params, n, coupling })
    }

    /// Inverse temperature of the underlying polymer.
    pub fn beta(&self) -> f64 {
        if self.params.b() == self.params.s() {
            self.coupling / self.n as f64
        } else {
            self.coupling
        }
    }

    /// Scale `h` with `W = 1 + h·R`.
    pub fn scale(&self) -> f64 {
        if self.params.b() == self.params.s() {
            1.0 / (self.n as f64).sqrt()
        } else {
            self.coupling
        }
    }

    /// Constants of the local rule, with `lambda = λ(β)` (read only by the
    /// full variant).
    pub fn kernel(&self, lambda: f64) -> Kernel {
        let b = self.params.b() as usize;
        let s = self.params.s() as usize;
        let bf = b as f64;
        let sn = (self.n as f64).sqrt();
        Kernel {
            variant: self.variant,
            b,
            s,
            inv_b: 1.0 / bf,
            h: self.scale(),
            beta: self.beta(),
            interior: (s - 1) as f64 * lambda,
            quad: 1.0 / (bf * sn),
            cubic: 1.0 / (bf * self.n as f64),
            noise: self.coupling / (bf * sn),
        }
    }

    /// One local step: `children[(i−1)s + (j−1)]` are the child values and
    /// `omega[i−1]` the sum of the `s−1` interior `ω` on branch `i`.
    pub fn combine(&self, children: &[f64], omega: &[f64], lambda: f64) -> f64 {
        self.kernel(lambda).apply(children, omega)
    }
}

/// Precomputed local rule of a [`FluctuationField`].
#[derive(Clone, Copy, Debug)]
pub struct Kernel {
    variant: FieldVariant,
    b: usize,
    s: usize,
    inv_b: f64,
    h: f64,
    beta: f64,
    interior: f64,
    quad: f64,
    cubic: f64,
    noise: f64,
}

impl Kernel {
    #[inline]
    pub fn apply(&self, children: &[f64], omega: &[f64]) -> f64 {
        let (b, s) = (self.b, self.s);
        match self.variant {
            FieldVariant::Full => {
                let mut acc = 0.0;
                for i in 0..b {
                    let mut prod = (self.beta * omega[i] - self.interior).exp();
                    for &r in &children[i * s..(i + 1) * s] {
                        prod *= 1.0 + self.h * r;
                    }
                    acc += prod;
                }
                (acc * self.inv_b - 1.0) / self.h
            }
            FieldVariant::BgsLinear => (children.iter().sum::<f64>() + omega.iter().sum::<f64>()) * self.inv_b,
            FieldVariant::Quadratic | FieldVariant::Cubic => {
                let (mut e1, mut e2, mut e3) = (0.0, 0.0, 0.0);
                for i in 0..b {
                    let (mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0);
                    for &r in &children[i * s..(i + 1) * s] {
                        a3 += a2 * r;
                        a2 += a1 * r;
                        a1 += r;
                    }
                    e1 += a1;
                    e2 += a2;
                    e3 += a3;
                }
                let noise: f64 = omega.iter().sum();
                let mut v = e1 * self.inv_b + e2 * self.quad + self.noise * noise;
                if self.variant == FieldVariant::Cubic {
                    v += e3 * self.cubic;
                }
                v
            }
        }
    }
}

fn check_field(ff: &FluctuationField, field: &DisorderField) -> Result<()> {
    if field.placement() != Placement::Vertices {
        return Err(Error::AddressMismatch("fluctuation fields need a vertex disorder field".into()));
    }
    if *field.params() != ff.params || field.depth() != ff.n {
        return Err(Error::AddressMismatch("field and disorder have different lattices".into()));
    }
    Ok(())
}

/// Value of the field on the copy `g`, evaluated over the shared vertex
/// disorder. The full variant is `(W − 1)/h` from [`polymer::w_recursive`].
pub fn evaluate_field(ff: &FluctuationField, field: &DisorderField, g: &SubgraphAddress) -> Result<f64> {
    check_field(ff, field)?;
    if g.lattice_depth() != ff.n {
        return Err(Error::AddressMismatch("copy and field have different lattice depths".into()));
    }
    if ff.variant == FieldVariant::Full {
        let w = polymer::w_recursive(field, ff.beta(), g)?;
        return Ok((w - 1.0) / ff.scale());
    }
    let rank = g.word().rank(&ff.params)?;
    Ok(local_rec(ff, field, 0.0, g.word().len(), rank, g.depth(), usize::MAX).0)
}

/// Returns `(value, average over the level-`avg_level` copies inside, scaled
/// by `b^{−(depth − avg_level)}`)`.
fn local_rec(ff: &FluctuationField, field: &DisorderField, lambda: f64, len: usize, rank: u128, k: usize, avg_level: usize) -> (f64, f64) {
    if k == 0 {
        return (0.0, 0.0);
    }
    let p = &ff.params;
    let (b, s) = (p.b() as usize, p.s() as usize);
    let mut kids = Vec::with_capacity(b * s);
    let mut kid_avg = 0.0;
    let mut omega = vec![0.0; b];
    for i in 1..=b {
        for j in 1..=s {
            let child = rank * p.bs() as u128 + ((i - 1) * s + (j - 1)) as u128;
            let (v, a) = local_rec(ff, field, lambda, len + 1, child, k - 1, avg_level);
            kids.push(v);
            kid_avg += a;
            if j < s {
                omega[i - 1] += field.value_by_key(field.vertex_key_from_parts(len + 1, rank, i as u32, j as u32));
            }
        }
    }
    let v = ff.combine(&kids, &omega, lambda);
    let avg = match k.cmp(&avg_level) {
        std::cmp::Ordering::Equal => v,
        std::cmp::Ordering::Greater => kid_avg / b as f64,
        std::cmp::Ordering::Less => 0.0,
    };
    (v, avg)
}

/// `b^{−(n−k)} Σ_{g∈G_{k,n}} R(g)` over the whole lattice.
pub fn averaged_field(ff: &FluctuationField, field: &DisorderField, k: usize) -> Result<f64> {
    check_field(ff, field)?;
    if k > ff.n {
        return Err(Error::Config { field: "k".into(), msg: format!("level {k} exceeds depth {}", ff.n) });
    }
    if k == 0 {
        return Ok(0.0);
    }
    if ff.n > polymer::DEFAULT_DEPTH_BUDGET {
        return Err(Error::DepthTooLarge { depth: ff.n, budget: polymer::DEFAULT_DEPTH_BUDGET });
    }
    let lambda = field.spec().lambda(ff.beta())?;
    Ok(local_rec(ff, field, lambda, 0, 0, ff.n, k).1)
}

/// Largest `b·s` supported by [`FieldStream`].
pub const MAX_STREAM_ARITY: usize = 32;

/// Streaming state: a primary field, an optional secondary field on the same
/// noise, and `L` level averages of the primary field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldState<const L: usize = 0> {
    pub primary: f64,
    pub secondary: f64,
    pub averages: [f64; L],
}

impl<const L: usize> Default for FieldState<L> {
    fn default() -> Self {
        Self { primary: 0.0, secondary: 0.0, averages: [0.0; L] }
    }
}

/// Distributional recursion for one or two coupled fields, drawing fresh
/// `ω` for every interior vertex, and tracking `L` level averages.
#[derive(Clone, Debug)]
pub struct FieldStream<const L: usize = 0> {
    primary: FluctuationField,
    secondary: Option<FluctuationField>,
    kernels: (Kernel, Option<Kernel>),
    spec: DisorderSpec,
    levels: [usize; L],
}

impl<const L: usize> FieldStream<L> {
    /// `levels[t] = k` makes `averages[t]` carry `b^{−(m−k)} Σ R(h)` over the
    /// level-`k` copies `h` inside each depth-`m` copy.
    pub fn new(primary: FluctuationField, secondary: Option<FluctuationField>, spec: DisorderSpec, levels: [usize; L]) -> Result<Self> {
        if let Some(sec) = &secondary {
            if sec.params != primary.params || sec.n != primary.n {
                return Err(Error::VariantMismatch("coupled fields need the same lattice and depth".into()));
            }
            if sec.variant == FieldVariant::Full && primary.variant == FieldVariant::Full && sec.beta() != primary.beta() {
                return Err(Error::VariantMismatch("two full fields need the same inverse temperature".into()));
            }
        }
        if primary.params.bs() > MAX_STREAM_ARITY {
            return Err(Error::Config { field: "params".into(), msg: format!("streaming needs b·s <= {MAX_STREAM_ARITY}") });
        }
        let full = [Some(primary), secondary].into_iter().flatten().find(|f| f.variant == FieldVariant::Full);
        let lambda = match full {
            Some(f) => spec.lambda(f.beta())?,
            None => 0.0,
        };
        let kernels = (primary.kernel(lambda), secondary.map(|f| f.kernel(lambda)));
        Ok(Self { primary, secondary, kernels, spec, levels })
    }

    pub fn params(&self) -> &LatticeParams {
        &self.primary.params
    }
}

impl<const L: usize> Recursion for FieldStream<L> {
    type State = FieldState<L>;

    fn leaf<R: Rng + ?Sized>(&self, _: &mut R) -> FieldState<L> {
        FieldState::default()
    }

    #[inline]
    fn combine<R: Rng + ?Sized>(&self, level: usize, c: &[FieldState<L>], rng: &mut R) -> FieldState<L> {
        let p = &self.primary.params;
        let (b, s) = (p.b() as usize, p.s() as usize);
        let mut omega = [0.0f64; MAX_STREAM_ARITY];
        for o in omega[..b].iter_mut() {
            for _ in 1..s {
                *o += self.spec.sample(rng);
            }
        }
        let omega = &omega[..b];
        let mut buf = [0.0f64; MAX_STREAM_ARITY];
        for (v, st) in buf.iter_mut().zip(c) {
            *v = st.primary;
        }
        let primary = self.kernels.0.apply(&buf[..c.len()], omega);
        let secondary = match &self.kernels.1 {
            Some(k) => {
                for (v, st) in buf.iter_mut().zip(c) {
                    *v = st.secondary;
                }
                k.apply(&buf[..c.len()], omega)
            }
            None => 0.0,
        };
        let mut averages = [0.0; L];
        for (t, &k) in self.levels.iter().enumerate() {
            averages[t] = match level.cmp(&k) {
                std::cmp::Ordering::Equal => primary,
                std::cmp::Ordering::Greater => c.iter().map(|st| st.averages[t]).sum::<f64>() / b as f64,
                std::cmp::Ordering::Less => 0.0,
            };
        }
        FieldState { primary, secondary, averages }
    }

    fn recenter(&self, pool: &mut [FieldState<L>]) {
        let n = pool.len() as f64;
        // Full fields restore 𝔼[W] = 1; the others restore mean zero.
        let shift = |ff: &FluctuationField, mean: f64| -> (f64, f64) {
            match ff.variant {
                FieldVariant::Full => (mean, 1.0 / (1.0 + ff.scale() * mean)),
                _ => (mean, 1.0),
            }
        };
        let (m0, f0) = shift(&self.primary, pool.iter().map(|st| st.primary).sum::<f64>() / n);
        let (m1, f1) = match &self.secondary {
            Some(sec) => shift(sec, pool.iter().map(|st| st.secondary).sum::<f64>() / n),
            None => (0.0, 1.0),
        };
        let mut means = [0.0; L];
        for (t, m) in means.iter_mut().enumerate() {
            *m = pool.iter().map(|st| st.averages[t]).sum::<f64>() / n;
        }
        for st in pool.iter_mut() {
            st.primary = (st.primary - m0) * f0;
            st.secondary = (st.secondary - m1) * f1;
            for (a, m) in st.averages.iter_mut().zip(&means) {
                *a -= m;
            }
        }
    }
}

const LABEL_CLT: u64 = 0x0c17;
const LABEL_CRITICAL: u64 = 0x0c21;
const LABEL_PROCESS: u64 = 0x0960;
const LABEL_BGS: u64 = 0x0b65;

/// Independent population pools used as batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolPlan {
    pub pool_size: usize,
    pub batches: usize,
}

fn run_pools<const L: usize>(stream: &FieldStream<L>, depth: usize, plan: PoolPlan, seed: u64, label: u64) -> Vec<Vec<FieldState<L>>> {
    let base = rng::derive_seed(seed, label);
    (0..plan.batches)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::replicate(base, i as u64);
            population::evolve_pool(stream, &stream.primary.params, depth, plan.pool_size, &mut r)
        })
        .collect()
}

/// Mean over batches of a per-batch statistic, with the batch standard error.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct BatchEstimate {
    pub value: f64,
    pub se: f64,
    pub batches: usize,
}

impl BatchEstimate {
    pub fn from_batches(xs: &[f64]) -> Self {
        let (value, se) = stats::batch_mean_se(xs);
        Self { value, se, batches: xs.len() }
    }

    /// `|value − target| ≤ k·se`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.se
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub beta_hat: f64,
    pub n: usize,
    /// `υ_b(β̂)`.
    pub limit_variance: f64,
    /// `M_n^n(0)`, the exact finite-`n` variance of `√n(W_n(β̂/n) − 1)`.
    pub flow_variance: f64,
    pub variance: BatchEstimate,
    pub skewness: BatchEstimate,
    pub kurtosis: BatchEstimate,
    /// One KS test per batch against `𝒩(0, υ_b(β̂))`.
    pub ks: Vec<KsResult>,
    /// `𝔼[(R_n − R̂_n)²]`.
    pub coupling_gap: BatchEstimate,
}

/// Samples `√n(W_n(β̂/n) − 1)` (coupled with `R̂_n`) by population dynamics.
#[allow(clippy::too_many_arguments)]
pub fn clt_experiment_beq(
    params: &LatticeParams,
    spec: &DisorderSpec,
    beta_hat: f64,
    n: usize,
    plan: PoolPlan,
    ks_samples: usize,
    alpha: f64,
    seed: u64,
) -> Result<CltReport> {
    let limit_variance = rgflow::upsilon(params.b(), beta_hat)?;
    let flow_variance = rgflow::beq_final(params, spec, beta_hat, n, BeqVariant::Exact, Precision::DoubleDouble)?;
    let full = FluctuationField::new(FieldVariant::Full, *params, n, beta_hat)?;
    let quad = FluctuationField::new(FieldVariant::Quadratic, *params, n, beta_hat)?;
    let stream = FieldStream::new(full, Some(quad), spec.clone(), [])?;
    let pools = run_pools(&stream, n, plan, seed, LABEL_CLT);
    let target_sd = limit_variance.sqrt();
    let mut var = Vec::new();
    let mut skew = Vec::new();
    let mut kurt = Vec::new();
    let mut gap = Vec::new();
    let mut ks = Vec::new();
    for pool in &pools {
        let r: Vec<f64> = pool.iter().map(|st| st.primary).collect();
        let m = Moments::from_slice(&r);
        var.push(m.variance());
        skew.push(m.skewness());
        kurt.push(m.kurtosis());
        gap.push(pool.iter().map(|st| (st.primary - st.secondary).powi(2)).sum::<f64>() / pool.len() as f64);
        let take = ks_samples.min(r.len());
        ks.push(stats::ks_one_sample(&r[..take], |x| stats::normal_cdf(x / target_sd), alpha));
    }
    Ok(CltReport {
        beta_hat,
        n,
        limit_variance,
        flow_variance,
        variance: BatchEstimate::from_batches(&var),
        skewness: BatchEstimate::from_batches(&skew),
        kurtosis: BatchEstimate::from_batches(&kurt),
        ks,
        coupling_gap: BatchEstimate::from_batches(&gap),
    })
}

/// `(log n / n)·M^n(0)` for a `b = s` flow at `β̂ = κ_b`: the finite-`n`
/// variance of `√(log n)(W_n(κ_b/n) − 1)` for the exact map.
pub fn critical_scaled_flow(params: &LatticeParams, spec: &DisorderSpec, n: usize, variant: BeqVariant) -> Result<f64> {
    let k = rgflow::kappa(params.b());
    let v = rgflow::beq_final(params, spec, k, n, variant, Precision::DoubleDouble)?;
    Ok((n as f64).ln() / n as f64 * v)
}

/// `(log n / n)·M_n^ℓ(0)` with `ℓ = ⌊n κ_b/β̂⌋`: the variance of
/// `√(log n)(W_ℓ(β̂/n) − 1)`.
pub fn shifted_size_scaled_flow(params: &LatticeParams, spec: &DisorderSpec, beta_hat: f64, n: usize) -> Result<f64> {
    let ell = (n as f64 * rgflow::kappa(params.b()) / beta_hat).floor() as usize;
    let m = rgflow::FlowMap::new(rgflow::FlowKind::MnBeq { beta_hat, n }, *params, spec.clone())?;
    let (v, _) = m.final_value(0.0, ell, Precision::DoubleDouble);
    Ok((n as f64).ln() / n as f64 * v)
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalRow {
    pub n: usize,
    /// Finite-`n` reference `(log n / n)·M_n^n(0)`.
    pub reference: f64,
    pub variance: BatchEstimate,
    pub skewness: BatchEstimate,
    pub kurtosis: BatchEstimate,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalReport {
    /// `6/(b+1)`.
    pub target: f64,
    pub rows: Vec<CriticalRow>,
}

/// Samples `√(log n)(W_n(κ_b/n) − 1)` over an `n` grid by population dynamics.
pub fn critical_experiment(params: &LatticeParams, spec: &DisorderSpec, n_grid: &[usize], plan: PoolPlan, seed: u64) -> Result<CriticalReport> {
    if params.b() != params.s() {
        return Err(Error::Regime("the critical experiment needs b = s".into()));
    }
    let kappa = rgflow::kappa(params.b());
    let mut rows = Vec::new();
    for &n in n_grid {
        let full = FluctuationField::new(FieldVariant::Full, *params, n, kappa)?;
        let stream = FieldStream::new(full, None, spec.clone(), [])?;
        let pools = run_pools(&stream, n, plan, rng::derive_seed(seed, n as u64), LABEL_CRITICAL);
        let scale = (n as f64).ln() / n as f64;
        let mut var = Vec::new();
        let mut skew = Vec::new();
        let mut kurt = Vec::new();
        for pool in &pools {
            let m = Moments::from_slice(&pool.iter().map(|st| st.primary).collect::<Vec<_>>());
            var.push(scale * m.variance());
            skew.push(m.skewness());
            kurt.push(m.kurtosis());
        }
        rows.push(CriticalRow {
            n,
            reference: critical_scaled_flow(params, spec, n, BeqVariant::Exact)?,
            variance: BatchEstimate::from_batches(&var),
            skewness: BatchEstimate::from_batches(&skew),
            kurtosis: BatchEstimate::from_batches(&kurt),
        });
    }
    Ok(CriticalReport { target: 6.0 / (params.b() as f64 + 1.0), rows })
}

/// Number of positive grid levels [`process_experiment`] tracks.
pub const PROCESS_POINTS: usize = 4;

/// Samples of `Y_r = R̂_{⌊rn⌋,n}` on a grid of `r`.
#[derive(Clone, Debug, Serialize)]
pub struct ProcessTrace {
    pub grid: Vec<f64>,
    /// `values[t]` holds the samples at `grid[t]`.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProcessPoint {
    pub r: f64,
    pub level: usize,
    pub variance: BatchEstimate,
    /// `M̂_n^{⌊rn⌋}(0)`.
    pub flow_variance: f64,
    /// `τ_r`.
    pub limit_variance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct IncrementCorrelation {
    pub first: (f64, f64),
    pub second: (f64, f64),
    pub correlation: f64,
    /// `1/√N` scale.
    pub se: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProcessReport {
    pub points: Vec<ProcessPoint>,
    pub increments: Vec<IncrementCorrelation>,
    pub trace: ProcessTrace,
}

/// Runs the averaged process of the quadratic field on a grid of `r ∈ [0, 1]`
/// (at most [`PROCESS_POINTS`] positive levels), one pool per batch.
pub fn process_experiment(
    params: &LatticeParams,
    spec: &DisorderSpec,
    beta_hat: f64,
    n: usize,
    r_grid: &[f64],
    plan: PoolPlan,
    seed: u64,
) -> Result<ProcessReport> {
    if r_grid.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
        return Err(Error::Config { field: "grid".into(), msg: "r must lie in [0, 1]".into() });
    }
    let levels: Vec<usize> = r_grid.iter().map(|&r| (r * n as f64).floor() as usize).collect();
    let mut tracked: Vec<usize> = levels.iter().copied().filter(|&k| k > 0).collect();
    tracked.sort_unstable();
    tracked.dedup();
    if tracked.len() > PROCESS_POINTS {
        return Err(Error::Config { field: "grid".into(), msg: format!("at most {PROCESS_POINTS} positive grid levels") });
    }
    let mut slots = [usize::MAX; PROCESS_POINTS];
    slots[..tracked.len()].copy_from_slice(&tracked);
    let quad = FluctuationField::new(FieldVariant::Quadratic, *params, n, beta_hat)?;
    let stream = FieldStream::new(quad, None, spec.clone(), slots)?;
    let pools = run_pools(&stream, n, plan, seed, LABEL_PROCESS);
    let column = |pool: &[FieldState<PROCESS_POINTS>], k: usize| -> Vec<f64> {
        match tracked.iter().position(|&t| t == k) {
            Some(t) => pool.iter().map(|st| st.averages[t]).collect(),
            None => vec![0.0; pool.len()],
        }
    };
    let mhat = rgflow::FlowMap::new(rgflow::FlowKind::MhatnBeq { beta_hat, n }, *params, spec.clone())?;
    let flow = mhat.iterate(n, Precision::Double);
    let points = r_grid
        .iter()
        .zip(&levels)
        .map(|(&r, &k)| {
            let vars: Vec<f64> = pools.iter().map(|p| Moments::from_slice(&column(p, k)).raw_second()).collect();
            ProcessPoint {
                r,
                level: k,
                variance: BatchEstimate::from_batches(&vars),
                flow_variance: flow.values[k],
                limit_variance: rgflow::tau(params.b(), beta_hat, r),
            }
        })
        .collect();
    let mut increments = Vec::new();
    let first_pool = &pools[0];
    let mut edges: Vec<(f64, usize)> = vec![(0.0, 0)];
    edges.extend(r_grid.iter().copied().zip(levels.iter().copied()));
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    edges.dedup_by(|a, b| a.1 == b.1);
    let inc = |a: usize, b: usize| -> Vec<f64> {
        let (x, y) = (column(first_pool, edges[a].1), column(first_pool, edges[b].1));
        y.iter().zip(&x).map(|(y, x)| y - x).collect()
    };
    for a in 0..edges.len().saturating_sub(1) {
        for c in (a + 1)..edges.len() - 1 {
            let (corr, se) = stats::correlation(&inc(a, a + 1), &inc(c, c + 1));
            increments.push(IncrementCorrelation {
                first: (edges[a].0, edges[a + 1].0),
                second: (edges[c].0, edges[c + 1].0),
                correlation: corr,
                se,
            });
        }
    }
    let trace = ProcessTrace { grid: r_grid.to_vec(), values: levels.iter().map(|&k| column(first_pool, k)).collect(), seed };
    Ok(ProcessReport { points, increments, trace })
}

#[derive(Clone, Debug, Serialize)]
pub struct BgsReport {
    pub n: usize,
    pub beta: f64,
    /// Per-replicate mean of `((W_n − 1)/β_n − noise sum)²`.
    pub mean_square_difference: BatchEstimate,
    /// Sample variance of the noise sum.
    pub noise_variance: f64,
    /// Sample variance of `(W_n − 1)/β_n`.
    pub field_variance: f64,
    /// `Σ_{m≤n} b^{−2m}|V_m|`.
    pub noise_variance_exact: f64,
    /// `(s−1)/(b−s)`.
    pub limit_variance: f64,
    pub replicates: usize,
}

/// One exact tree of depth `k`: returns `(W_k(β), Σ_{m=1}^{k} b^{−m} Σ_{a∈V_m} ω_a)`
/// computed from the same vertex noise.
pub fn coupled_w_and_noise_sum<R: Rng + ?Sized>(params: &LatticeParams, sampler: &WeightSampler, k: usize, rng: &mut R) -> (f64, f64) {
    let (b, s) = (params.b() as usize, params.s() as usize);
    let inv_b = 1.0 / b as f64;
    if k == 0 {
        return (1.0, 0.0);
    }
    let mut acc_w = 0.0;
    let mut acc_l = 0.0;
    for _ in 0..b {
        let mut prod = 1.0;
        let mut lin = 0.0;
        for j in 0..s {
            if k > 1 {
                let (w, l) = coupled_w_and_noise_sum(params, sampler, k - 1, rng);
                prod *= w;
                lin += l;
            }
            if j + 1 < s {
                let (omega, e) = sampler.sample(rng);
                prod *= e;
                lin += omega;
            }
        }
        acc_w += prod;
        acc_l += lin;
    }
    (acc_w * inv_b, acc_l * inv_b)
}

/// Exact trees of `(W_n(β_n) − 1)/β_n` and the noise sum on the same vertex
/// noise, one tree per replicate. `batches` splits the replicates for the
/// standard error.
pub fn bgs_limit_experiment(
    params: &LatticeParams,
    spec: &DisorderSpec,
    beta: f64,
    n: usize,
    replicates: usize,
    batches: usize,
    seed: u64,
) -> Result<BgsReport> {
    // Validates the regime and coupling.
    FluctuationField::new(FieldVariant::BgsLinear, *params, n, beta)?;
    FluctuationField::new(FieldVariant::Full, *params, n, beta)?;
    let sampler = WeightSampler::new(spec.clone(), beta)?;
    let base = rng::derive_seed(seed, LABEL_BGS);
    let samples: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::replicate(base, i as u64);
            let (w, l) = coupled_w_and_noise_sum(params, &sampler, n, &mut r);
            ((w - 1.0) / beta, l)
        })
        .collect();
    let diffs: Vec<f64> = samples.iter().map(|(f, l)| (f - l).powi(2)).collect();
    let batches = batches.clamp(1, replicates.max(1));
    let per: Vec<f64> = diffs.chunks(diffs.len().div_ceil(batches).max(1)).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    Ok(BgsReport {
        n,
        beta,
        mean_square_difference: BatchEstimate::from_batches(&per),
        noise_variance: Moments::from_slice(&samples.iter().map(|s| s.1).collect::<Vec<_>>()).variance(),
        field_variance: Moments::from_slice(&samples.iter().map(|s| s.0).collect::<Vec<_>>()).variance(),
        noise_variance_exact: rgflow::noise_sum_variance(params, n),
        limit_variance: rgflow::affine_fixed_point(params),
        replicates,
    })
}
