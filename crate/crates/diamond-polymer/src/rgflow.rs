//! Deterministic variance flows: scalar maps whose iterates give the exact
//! variance (or second moment) of `W_n`, their limits and blow-up diagnostics.
//!
//! Maps that are iterated up to `10^6` times run in double precision or in
//! double-double arithmetic ([`Precision::DoubleDouble`]). Every map is written
//! so that `(1+y)^p e^c − 1` is evaluated as a binomial sum plus an `expm1`
//! term, avoiding the cancellation of the naive form when increments are tiny.

use crate::disorder::DisorderSpec;
use crate::error::{Error, Result};
use crate::lattice::{self, LatticeParams};
use serde::{Deserialize, Serialize};
use std::ops::{Add, Div, Mul, Sub};
use twofloat::TwoFloat;

/// Values above this (or non-finite) count as blow-up.
pub const BLOW_UP: f64 = 1e12;

/// Arithmetic used when iterating a map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    #[default]
    Double,
    /// About 106 bits of mantissa.
    DoubleDouble,
}

/// Minimal field interface shared by `f64` and `TwoFloat`.
pub trait Real: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + PartialOrd {
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Real for TwoFloat {
    fn of(x: f64) -> Self {
        TwoFloat::from(x)
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `(1+y)^p − 1` as `Σ_{k=1}^p C(p,k) y^k` (Horner form).
fn pow1p_m1<T: Real>(y: T, p: u32) -> T {
    let mut acc = T::of(0.0);
    for k in (1..=p).rev() {
        acc = (acc + T::of(binom(p, k))) * y;
    }
    acc
}

/// `(1+y)^p e^c − 1` given `em1 = e^c − 1`.
fn pow1p_exp_m1<T: Real>(y: T, p: u32, em1: T) -> T {
    let a = pow1p_m1(y, p);
    a + (a + T::of(1.0)) * em1
}

/// Which scalar recursion to iterate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "kebab-case")]
pub enum FlowKind {
    /// `σ_{k+1} = (1/b)[(1+σ_k)^s e^{(s−1)(λ(2β)−2λ(β))} − 1]`.
    Sigma { beta: f64 },
    /// `M̂(x) = (1/b)[(1+x)^s − 1]`.
    Mhat,
    /// `σ`-map at `β_n = β̂ (b/s)^{n/2}` (b < s).
    MnBls { beta_hat: f64, n: usize },
    /// `M_n(x) = (n/b)[(1+x/n)^b e^{(b−1)(λ(2β̂/n)−2λ(β̂/n))} − 1]` (b = s).
    MnBeq { beta_hat: f64, n: usize },
    /// `M̂_n(x) = x + (b−1)x²/(2n) + β̂²(b−1)/(bn)`.
    MhatnBeq { beta_hat: f64, n: usize },
    /// `M̃_n(x) = M̂_n(x) + (b−1)(b−2)x³/(6n²)`.
    MtildenBeq { beta_hat: f64, n: usize },
    /// `M_n(x) = (1/(bβ²))[(1+xβ²)^s e^{(s−1)(λ(2β)−2λ(β))} − 1]` (b > s).
    MnBgs { beta: f64 },
    /// `M̂_n(x) = (s/b)x + (s−1)/b`.
    MhatnBgs,
    /// Edge-model variance `x_{k+1} = (1/b)[(1+x_k)^s − 1]`, started at
    /// `e^{λ(2β)−2λ(β)} − 1`.
    EdgeExact { beta: f64 },
    /// Edge-model second moment `m_{k+1} = (1/b)m_k^s + (b−1)/b`, started at
    /// `e^{λ(2β)−2λ(β)}`.
    EdgeSecondMoment { beta: f64 },
}

/// A map bound to lattice parameters and a disorder law.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub kind: FlowKind,
    pub params: LatticeParams,
    pub spec: DisorderSpec,
    /// `e^c − 1` for the map's exponential factor, precomputed.
    em1: f64,
}

impl FlowMap {
    pub fn new(kind: FlowKind, params: LatticeParams, spec: DisorderSpec) -> Result<Self> {
        let (b, s) = (params.b(), params.s());
        let em1 = match kind {
            FlowKind::Sigma { beta } => ((s - 1) as f64 * spec.lambda_gap(beta)?).exp_m1(),
            FlowKind::MnBls { beta_hat, n } => {
                if b >= s {
                    return Err(Error::Regime(format!("M_n for b < s needs b < s, got b={b}, s={s}")));
                }
                let beta = beta_hat * (b as f64 / s as f64).powf(n as f64 / 2.0);
                ((s - 1) as f64 * spec.lambda_gap(beta)?).exp_m1()
            }
            FlowKind::MnBeq { beta_hat, n } | FlowKind::MhatnBeq { beta_hat, n } | FlowKind::MtildenBeq { beta_hat, n } => {
                if b != s {
                    return Err(Error::Regime(format!("b = s maps need b = s, got b={b}, s={s}")));
                }
                let _ = beta_hat;
                match kind {
                    FlowKind::MnBeq { .. } => ((b - 1) as f64 * spec.lambda_gap(beta_hat / n as f64)?).exp_m1(),
                    _ => 0.0,
                }
            }
            FlowKind::MnBgs { beta } => {
                if b <= s {
                    return Err(Error::Regime(format!("b > s maps need b > s, got b={b}, s={s}")));
                }
                ((s - 1) as f64 * spec.lambda_gap(beta)?).exp_m1()
            }
            FlowKind::MhatnBgs => {
                if b <= s {
                    return Err(Error::Regime(format!("b > s maps need b > s, got b={b}, s={s}")));
                }
                0.0
            }
            FlowKind::EdgeExact { beta } | FlowKind::EdgeSecondMoment { beta } => spec.lambda_gap(beta)?.exp_m1(),
            FlowKind::Mhat => 0.0,
        };
        Ok(Self { kind, params, spec, em1 })
    }

    /// Starting value of the canonical iteration.
    pub fn initial(&self) -> f64 {
        match self.kind {
            FlowKind::EdgeExact { .. } => self.em1,
            FlowKind::EdgeSecondMoment { .. } => 1.0 + self.em1,
            _ => 0.0,
        }
    }

    /// One application of the map.
    pub fn apply<T: Real>(&self, x: T) -> T {
        let (b, s) = (self.params.b(), self.params.s());
        let bf = T::of(b as f64);
        let em1 = T::of(self.em1);
        match self.kind {
            FlowKind::Sigma { .. } | FlowKind::MnBls { .. } => pow1p_exp_m1(x, s, em1) / bf,
            FlowKind::Mhat | FlowKind::EdgeExact { .. } => pow1p_m1(x, s) / bf,
            FlowKind::MnBeq { n, .. } => {
                let nf = T::of(n as f64);
                nf * pow1p_exp_m1(x / nf, b, em1) / bf
            }
            FlowKind::MhatnBeq { beta_hat, n } | FlowKind::MtildenBeq { beta_hat, n } => {
                let nf = T::of(n as f64);
                let bm1 = T::of((b - 1) as f64);
                let mut y = x + bm1 * x * x / (T::of(2.0) * nf) + T::of(beta_hat * beta_hat) * bm1 / (bf * nf);
                if let FlowKind::MtildenBeq { .. } = self.kind {
                    y = y + bm1 * T::of((b as f64) - 2.0) * x * x * x / (T::of(6.0) * nf * nf);
                }
                y
            }
            FlowKind::MnBgs { beta } => {
                let b2 = T::of(beta * beta);
                pow1p_exp_m1(x * b2, s, em1) / (bf * b2)
            }
            FlowKind::MhatnBgs => T::of(s as f64) / bf * x + T::of((s - 1) as f64) / bf,
            FlowKind::EdgeSecondMoment { .. } => {
                let mut p = T::of(1.0);
                for _ in 0..s {
                    p = p * x;
                }
                p / bf + T::of((b - 1) as f64) / bf
            }
        }
    }

    /// Iterates `steps` times from `x0`, stopping at the first blow-up.
    pub fn iterate_from(&self, x0: f64, steps: usize, precision: Precision) -> FlowTrace {
        match precision {
            Precision::Double => self.iterate_generic::<f64>(x0, steps),
            Precision::DoubleDouble => self.iterate_generic::<TwoFloat>(x0, steps),
        }
    }

    pub fn iterate(&self, steps: usize, precision: Precision) -> FlowTrace {
        self.iterate_from(self.initial(), steps, precision)
    }

    fn iterate_generic<T: Real>(&self, x0: f64, steps: usize) -> FlowTrace {
        let mut values = Vec::with_capacity(steps + 1);
        values.push(x0);
        let mut x = T::of(x0);
        let mut blow_up_index = None;
        for k in 1..=steps {
            x = self.apply(x);
            let v = x.to_f64();
            values.push(v);
            if !v.is_finite() || v > BLOW_UP {
                blow_up_index = Some(k);
                break;
            }
        }
        FlowTrace { values, blow_up_index }
    }

    /// Final value after `steps` iterations without storing the trace.
    pub fn final_value(&self, x0: f64, steps: usize, precision: Precision) -> (f64, Option<usize>) {
        fn run<T: Real>(m: &FlowMap, x0: f64, steps: usize) -> (f64, Option<usize>) {
            let mut x = T::of(x0);
            for k in 1..=steps {
                x = m.apply(x);
                let v = x.to_f64();
                if !v.is_finite() || v > BLOW_UP {
                    return (v, Some(k));
                }
            }
            (x.to_f64(), None)
        }
        match precision {
            Precision::Double => run::<f64>(self, x0, steps),
            Precision::DoubleDouble => run::<TwoFloat>(self, x0, steps),
        }
    }
}

/// Iterates of a map; stops early at blow-up.
#[derive(Clone, Debug, Serialize)]
pub struct FlowTrace {
    pub values: Vec<f64>,
    pub blow_up_index: Option<usize>,
}

impl FlowTrace {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("trace holds the initial value")
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }

    /// Whether the last two iterates differ by less than `tol`.
    pub fn converged(&self, tol: f64) -> bool {
        let v = &self.values;
        v.len() >= 2 && (v[v.len() - 1] - v[v.len() - 2]).abs() < tol
    }
}

/// `σ_0 = 0, …, σ_{k_max}(β)`: exact variance of `W_k(β)`.
pub fn sigma_recursion(params: &LatticeParams, spec: &DisorderSpec, beta: f64, k_max: usize) -> Result<FlowTrace> {
    Ok(FlowMap::new(FlowKind::Sigma { beta }, *params, spec.clone())?.iterate(k_max, Precision::Double))
}

pub fn mhat(params: &LatticeParams, x: f64) -> f64 {
    pow1p_m1(x, params.s()) / params.b() as f64
}

/// `M̂^n(x (b/s)^n)`.
pub fn mhat_iterate_scaled(params: &LatticeParams, x: f64, n: usize) -> f64 {
    let mut v = x * (params.b() as f64 / params.s() as f64).powi(n as i32);
    for _ in 0..n {
        v = mhat(params, v);
    }
    v
}

/// `𝔳(x) = lim_n M̂^n(x (b/s)^n)`, iterated until successive values differ by
/// less than `tol·max(1, 𝔳)`.
pub fn limiting_variance(params: &LatticeParams, x: f64, tol: f64) -> Result<f64> {
    if params.b() >= params.s() {
        return Err(Error::Regime("the limiting variance function needs b < s".into()));
    }
    const CAP: usize = 2000;
    let mut prev = mhat_iterate_scaled(params, x, 0);
    for n in 1..=CAP {
        let cur = mhat_iterate_scaled(params, x, n);
        if !cur.is_finite() {
            return Err(Error::ToleranceNotReached { tol, iterations: n });
        }
        if (cur - prev).abs() < tol * cur.abs().max(1.0) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::ToleranceNotReached { tol, iterations: CAP })
}

/// `β_n = β̂ (b/s)^{n/2}`.
pub fn beta_bls(params: &LatticeParams, beta_hat: f64, n: usize) -> f64 {
    beta_hat * (params.b() as f64 / params.s() as f64).powf(n as f64 / 2.0)
}

/// `M_n^n(0)` for `b < s`; compare with `𝔳(β̂²(s−1)/(s−b))`.
pub fn variance_limit_bls(params: &LatticeParams, spec: &DisorderSpec, beta_hat: f64, n: usize) -> Result<f64> {
    let m = FlowMap::new(FlowKind::MnBls { beta_hat, n }, *params, spec.clone())?;
    Ok(m.final_value(0.0, n, Precision::Double).0)
}

/// `M_n^m(0)` for `b < s`.
pub fn variance_bls_partial(params: &LatticeParams, spec: &DisorderSpec, beta_hat: f64, n: usize, m: usize) -> Result<f64> {
    let map = FlowMap::new(FlowKind::MnBls { beta_hat, n }, *params, spec.clone())?;
    Ok(map.final_value(0.0, m, Precision::Double).0)
}

/// Target of [`variance_limit_bls`]: `𝔳(β̂²(s−1)/(s−b))`.
pub fn variance_limit_bls_target(params: &LatticeParams, beta_hat: f64, tol: f64) -> Result<f64> {
    let (b, s) = (params.b() as f64, params.s() as f64);
    limiting_variance(params, beta_hat * beta_hat * (s - 1.0) / (s - b), tol)
}

/// Early-iterate envelope `β̂²((s−1)/(s−b))(1−(b/s)^m)(b/s)^{n−m}`.
pub fn initial_envelope(params: &LatticeParams, beta_hat: f64, n: usize, m: usize) -> f64 {
    let (b, s) = (params.b() as f64, params.s() as f64);
    let q = b / s;
    beta_hat * beta_hat * (s - 1.0) / (s - b) * (1.0 - q.powi(m as i32)) * q.powi((n - m) as i32)
}

/// `κ_b = π√b / (√2 (b−1))`.
pub fn kappa(b: u32) -> f64 {
    assert!(b >= 2, "kappa needs b >= 2");
    std::f64::consts::PI * (b as f64).sqrt() / (std::f64::consts::SQRT_2 * (b - 1) as f64)
}

fn check_subcritical(b: u32, beta_hat: f64) -> Result<()> {
    let k = kappa(b);
    if beta_hat >= k || beta_hat < 0.0 {
        return Err(Error::AtOrBeyondCritical { beta_hat, critical: k });
    }
    Ok(())
}

/// `υ_b(β̂) = β̂ (√2/√b) tan((b−1)β̂/√(2b))`.
pub fn upsilon(b: u32, beta_hat: f64) -> Result<f64> {
    check_subcritical(b, beta_hat)?;
    Ok(tau(b, beta_hat, 1.0))
}

/// Edge-model limit `(1/β̂² − 1/κ_b²)^{−1}`.
pub fn upsilon_edge(b: u32, beta_hat: f64) -> Result<f64> {
    check_subcritical(b, beta_hat)?;
    let k = kappa(b);
    Ok(1.0 / (1.0 / (beta_hat * beta_hat) - 1.0 / (k * k)))
}

/// `τ_r = (β̂√2/√b) tan(β̂(b−1)r/√(2b))`, variance of the limiting process.
pub fn tau(b: u32, beta_hat: f64, r: f64) -> f64 {
    let bf = b as f64;
    beta_hat * std::f64::consts::SQRT_2 / bf.sqrt() * (beta_hat * (bf - 1.0) * r / (2.0 * bf).sqrt()).tan()
}

/// Variants of the `b = s` flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeqVariant {
    Exact,
    Quadratic,
    Cubic,
}

impl BeqVariant {
    pub fn kind(self, beta_hat: f64, n: usize) -> FlowKind {
        match self {
            BeqVariant::Exact => FlowKind::MnBeq { beta_hat, n },
            BeqVariant::Quadratic => FlowKind::MhatnBeq { beta_hat, n },
            BeqVariant::Cubic => FlowKind::MtildenBeq { beta_hat, n },
        }
    }
}

/// `b = s` flow at inverse temperature `β̂/n`, iterated `steps` times (`n` by
/// default). The value after `k` steps is `n·Var(W_k(β̂/n))` for the exact map.
pub fn variance_flow_beq(
    params: &LatticeParams,
    spec: &DisorderSpec,
    beta_hat: f64,
    n: usize,
    variant: BeqVariant,
    steps: Option<usize>,
    precision: Precision,
) -> Result<FlowTrace> {
    let m = FlowMap::new(variant.kind(beta_hat, n), *params, spec.clone())?;
    Ok(m.iterate(steps.unwrap_or(n), precision))
}

/// Final value `M^n(0)` of a `b = s` flow without storing the trace.
pub fn beq_final(params: &LatticeParams, spec: &DisorderSpec, beta_hat: f64, n: usize, variant: BeqVariant, precision: Precision) -> Result<f64> {
    let m = FlowMap::new(variant.kind(beta_hat, n), *params, spec.clone())?;
    Ok(m.final_value(0.0, n, precision).0)
}

/// Explosion window of the exact `b = s` flow beyond criticality.
#[derive(Clone, Debug, Serialize)]
pub struct ExplosionWindow {
    /// Largest `k` with `value/n < ε_low`.
    pub l_down: usize,
    /// Smallest `k` with `value/n > ε_high`.
    pub l_up: usize,
    /// First `k` with value above [`BLOW_UP`].
    pub blow_up_index: usize,
    /// `n κ_b / β̂`.
    pub predicted: f64,
    pub trace: FlowTrace,
}

impl ExplosionWindow {
    pub fn offsets(&self) -> (f64, f64, f64) {
        (
            self.l_down as f64 - self.predicted,
            self.l_up as f64 - self.predicted,
            self.blow_up_index as f64 - self.predicted,
        )
    }
}

pub fn explosion_window(
    params: &LatticeParams,
    spec: &DisorderSpec,
    beta_hat: f64,
    n: usize,
    eps_low: f64,
    eps_high: f64,
) -> Result<ExplosionWindow> {
    let b = params.b();
    let max_steps = 20 * n;
    let m = FlowMap::new(FlowKind::MnBeq { beta_hat, n }, *params, spec.clone())?;
    let trace = m.iterate(max_steps, Precision::Double);
    let blow = trace.blow_up_index.ok_or(Error::NoBlowUpDetected { steps: max_steps })?;
    let nf = n as f64;
    let l_down = trace.values.iter().rposition(|&v| v / nf < eps_low).unwrap_or(0);
    let l_up = trace.values.iter().position(|&v| v / nf > eps_high).unwrap_or(blow);
    Ok(ExplosionWindow { l_down, l_up, blow_up_index: blow, predicted: nf * kappa(b) / beta_hat, trace })
}

/// Exact and affine `b > s` flows and their final gap.
#[derive(Clone, Debug, Serialize)]
pub struct BgsFlow {
    pub exact: FlowTrace,
    pub affine: FlowTrace,
    pub gap: f64,
}

pub fn variance_flow_bgs(params: &LatticeParams, spec: &DisorderSpec, beta: f64, n: usize) -> Result<BgsFlow> {
    let exact = FlowMap::new(FlowKind::MnBgs { beta }, *params, spec.clone())?.iterate(n, Precision::Double);
    let affine = FlowMap::new(FlowKind::MhatnBgs, *params, spec.clone())?.iterate(n, Precision::Double);
    let gap = (exact.last() - affine.last()).abs();
    Ok(BgsFlow { exact, affine, gap })
}

/// `(s−1)/(b−s)`, fixed point of the affine `b > s` map.
pub fn affine_fixed_point(params: &LatticeParams) -> f64 {
    (params.s() - 1) as f64 / (params.b() - params.s()) as f64
}

/// `Σ_{m=1}^{depth} b^{−2m} |V_m|`, variance of the `b > s` noise sum.
pub fn noise_sum_variance(params: &LatticeParams, depth: usize) -> f64 {
    let mut acc = 0.0;
    for m in 1..=depth {
        let count = lattice::count_generation_vertices(params, m);
        let count: f64 = count.to_string().parse().expect("decimal digits parse as f64");
        acc += count * (params.b() as f64).powi(-2 * m as i32);
    }
    acc
}

/// Edge-model second moments `m_0 = e^{λ(2β)−2λ(β)}, …, m_{steps}`.
pub fn edge_second_moment_flow(params: &LatticeParams, spec: &DisorderSpec, beta: f64, steps: usize) -> Result<FlowTrace> {
    Ok(FlowMap::new(FlowKind::EdgeSecondMoment { beta }, *params, spec.clone())?.iterate(steps, Precision::Double))
}

/// `n·Var(W_n)` of the edge model at `β = β̂/√n`.
pub fn edge_scaled_variance(params: &LatticeParams, spec: &DisorderSpec, beta_hat: f64, n: usize, precision: Precision) -> Result<(f64, Option<usize>)> {
    let m = FlowMap::new(FlowKind::EdgeExact { beta: beta_hat / (n as f64).sqrt() }, *params, spec.clone())?;
    let (v, blow) = m.final_value(m.initial(), n, precision);
    Ok((v * n as f64, blow))
}

/// Sample points of the early-iterate and second-order bounds on `M̂`:
/// returns `(M̂^{N−n}(x(b/s)^N), x(b/s)^n)`.
pub fn mhat_bound_point(params: &LatticeParams, x: f64, n: usize, big_n: usize) -> (f64, f64) {
    let q = params.b() as f64 / params.s() as f64;
    let mut v = x * q.powi(big_n as i32);
    for _ in 0..(big_n - n) {
        v = mhat(params, v);
    }
    (v, x * q.powi(n as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(b: u32, s: u32) -> LatticeParams {
        LatticeParams::new(b, s).unwrap()
    }
    const G: DisorderSpec = DisorderSpec::StandardGaussian;

    #[test]
    fn sigma_one_step_and_zero_beta() {
        let t = sigma_recursion(&p(2, 2), &G, 0.5, 1).unwrap();
        assert!((t.values[1] - (0.25f64.exp() - 1.0) / 2.0).abs() < 1e-15);
        assert!((t.values[1] - 0.14201).abs() < 1e-5);
        let z = sigma_recursion(&p(2, 3), &G, 0.0, 10).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sigma_closed_exponent_variant() {
        // Gaussian: e^{(s−1)β²} directly in the naive form.
        let (b, s, beta) = (2.0f64, 3, 0.4f64);
        let t = sigma_recursion(&p(2, 3), &G, beta, 6).unwrap();
        let mut x = 0.0f64;
        for k in 1..=6 {
            x = ((1.0 + x).powi(s) * ((s - 1) as f64 * beta * beta).exp() - 1.0) / b;
            assert!((t.values[k] - x).abs() < 1e-14 * x.max(1.0));
        }
    }

    #[test]
    fn mhat_values() {
        assert_eq!(mhat(&p(2, 3), 0.0), 0.0);
        assert_eq!(mhat(&p(2, 3), 1.0), 3.5);
    }

    #[test]
    fn limiting_variance_basics() {
        let q = p(2, 3);
        assert_eq!(limiting_variance(&q, 0.0, 1e-13).unwrap(), 0.0);
        let small = limiting_variance(&q, 1e-4, 1e-14).unwrap();
        assert!((small / 1e-4 - 1.0).abs() < 1e-3);
        for i in 1..=20 {
            let x = 0.1 * i as f64;
            let lhs = limiting_variance(&q, 1.5 * x, 1e-14).unwrap();
            let rhs = mhat(&q, limiting_variance(&q, x, 1e-14).unwrap());
            assert!((lhs - rhs).abs() < 1e-8 * rhs.max(1.0), "x={x}: {lhs} vs {rhs}");
        }
        assert!(limiting_variance(&p(2, 2), 1.0, 1e-12).is_err());
    }

    #[test]
    fn scaled_iterates_increase_with_shrinking_increments() {
        let q = p(2, 3);
        let v: Vec<f64> = (0..40).map(|n| mhat_iterate_scaled(&q, 1.0, n)).collect();
        let d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.iter().all(|&x| x > 0.0));
        assert!((d[30] / d[29] - 2.0 / 3.0).abs() < 1e-2, "{d:?}");
    }

    #[test]
    fn kappa_values() {
        assert!((kappa(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((kappa(3) - 1.92382).abs() < 1e-5);
        assert!(kappa(10) < kappa(3));
    }

    #[test]
    fn upsilon_values() {
        let r = upsilon(2, 1e-3).unwrap() / 1e-6;
        assert!((r - 0.5).abs() < 1e-5);
        assert!((upsilon(2, 2.0).unwrap() - 2.0 * 1f64.tan()).abs() < 1e-14);
        assert!(matches!(upsilon(2, 3.2), Err(Error::AtOrBeyondCritical { .. })));
        assert!(upsilon_edge(2, std::f64::consts::PI).is_err());
    }

    #[test]
    fn upsilon_solves_riccati() {
        // φ(r) = τ_r solves dφ/dr = ((b−1)/2)φ² + (b−1)β̂²/b.
        for b in [2u32, 3, 5] {
            let bh = 0.8 * kappa(b);
            for i in 1..10 {
                let r = 0.1 * i as f64;
                let h = 1e-5;
                let d = (tau(b, bh, r + h) - tau(b, bh, r - h)) / (2.0 * h);
                let phi = tau(b, bh, r);
                let rhs = (b - 1) as f64 / 2.0 * phi * phi + (b - 1) as f64 * bh * bh / b as f64;
                assert!((d - rhs).abs() < 1e-6 * rhs.max(1.0), "b={b} r={r}");
            }
        }
    }

    #[test]
    fn beq_zero_beta_is_zero() {
        for v in [BeqVariant::Exact, BeqVariant::Quadratic, BeqVariant::Cubic] {
            let t = variance_flow_beq(&p(2, 2), &G, 0.0, 50, v, None, Precision::Double).unwrap();
            assert!(t.values.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn double_double_agrees_with_double_when_benign() {
        let a = beq_final(&p(2, 2), &G, 2.0, 1000, BeqVariant::Exact, Precision::Double).unwrap();
        let b = beq_final(&p(2, 2), &G, 2.0, 1000, BeqVariant::Exact, Precision::DoubleDouble).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn maps_are_monotone_on_grid() {
        let q = p(2, 2);
        let kinds = [
            FlowKind::Sigma { beta: 0.3 },
            FlowKind::Mhat,
            FlowKind::MnBeq { beta_hat: 2.0, n: 100 },
            FlowKind::MhatnBeq { beta_hat: 2.0, n: 100 },
            FlowKind::MtildenBeq { beta_hat: 2.0, n: 100 },
            FlowKind::EdgeExact { beta: 0.2 },
            FlowKind::EdgeSecondMoment { beta: 0.2 },
        ];
        for k in kinds {
            let m = FlowMap::new(k, q, G).unwrap();
            assert!(m.apply(0.0f64) >= 0.0);
            let mut prev = m.apply(0.0f64);
            for i in 1..=5000 {
                let v = m.apply(i as f64 * 1e-3);
                assert!(v >= prev, "{k:?} not monotone at {}", i as f64 * 1e-3);
                prev = v;
            }
        }
        let r = p(3, 2);
        for k in [FlowKind::MnBgs { beta: 0.1 }, FlowKind::MhatnBgs] {
            let m = FlowMap::new(k, r, G).unwrap();
            let mut prev = m.apply(0.0f64);
            for i in 1..=5000 {
                let v = m.apply(i as f64 * 1e-3);
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn affine_fixed_point_and_noise_sum() {
        assert!((affine_fixed_point(&p(3, 2)) - 1.0).abs() < 1e-15);
        assert!((noise_sum_variance(&p(3, 2), 120) - 1.0).abs() < 1e-12);
        let m = FlowMap::new(FlowKind::MhatnBgs, p(3, 2), G).unwrap();
        assert!((m.apply(1.0f64) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn edge_second_moment() {
        let one = edge_second_moment_flow(&p(2, 2), &G, 0.0, 100).unwrap();
        assert!(one.values.iter().all(|&v| v == 1.0));
        let t = edge_second_moment_flow(&p(2, 2), &G, 0.1, 100_000).unwrap();
        assert!((t.values[0] - 0.01f64.exp()).abs() < 1e-15);
        assert!(t.is_nondecreasing());
        assert!(t.values.iter().any(|&v| v > 10.0));
    }

    #[test]
    fn regime_checks() {
        assert!(FlowMap::new(FlowKind::MnBeq { beta_hat: 1.0, n: 10 }, p(2, 3), G).is_err());
        assert!(FlowMap::new(FlowKind::MnBls { beta_hat: 1.0, n: 10 }, p(3, 2), G).is_err());
        assert!(FlowMap::new(FlowKind::MhatnBgs, p(2, 2), G).is_err());
    }

    #[test]
    fn zero_temperature_never_explodes() {
        let e = explosion_window(&p(2, 2), &G, 0.0, 100, 1e-2, 1e2);
        assert!(matches!(e, Err(Error::NoBlowUpDetected { .. })));
    }
}
