//! Limit laws `L_r` of `W_n` for `b < s`, the fold operators that define them
//! and Monte Carlo property tests.
//!
//! `L_r` is approximated by folding `(bs)^depth` i.i.d. mean-one leaves with
//! `Ŵ(g) = (1/b) Σ_i Π_j Ŵ(g×(i,j))`. With leaf variance `r (b/s)^depth` the
//! folded variance is `M̂^depth(r (b/s)^depth)`, which converges to `𝔳(r)`.
//! [`LeafVariance::Matched`] instead gives the leaves variance
//! `𝔳(r (b/s)^depth)`, so the folded mean and variance equal `1` and `𝔳(r)`
//! exactly at every depth; only higher moments carry truncation error.

use crate::error::{Error, Result};
use crate::lattice::{self, LatticeParams};
use crate::population::{self, Recursion};
use crate::rgflow;
use crate::stats::{self, KsResult, Moments};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

/// Leaves of depth `k`, indexed by edge-word rank.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafArray {
    depth: usize,
    values: Vec<f64>,
}

impl LeafArray {
    pub fn new(params: &LatticeParams, depth: usize, values: Vec<f64>) -> Result<Self> {
        let expected = params.bs().pow(depth as u32);
        if values.len() != expected {
            return Err(Error::LengthMismatch { got: values.len(), expected });
        }
        Ok(Self { depth, values })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn fold_levels(params: &LatticeParams, leaves: &LeafArray, step: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let bs = params.bs();
    let mut cur = leaves.values.clone();
    for _ in 0..leaves.depth {
        cur = cur.chunks(bs).map(&step).collect();
    }
    cur
}

fn product_fold(params: &LatticeParams, c: &[f64]) -> f64 {
    let s = params.s() as usize;
    c.chunks(s).map(|br| br.iter().product::<f64>()).sum::<f64>() / params.b() as f64
}

/// Folds `levels` steps of the product recursion, returning the values on
/// the copies of `D_levels` (rank order).
pub fn fold_partial(params: &LatticeParams, values: &[f64], levels: usize) -> Vec<f64> {
    let bs = params.bs();
    let mut cur = values.to_vec();
    for _ in 0..levels {
        cur = cur.chunks(bs).map(|c| product_fold(params, c)).collect();
    }
    cur
}

/// `Ŵ(g) = (1/b) Σ_i Π_j Ŵ(g×(i,j))`, folded to the root.
pub fn fold_w(params: &LatticeParams, leaves: &LeafArray) -> f64 {
    fold_levels(params, leaves, |c| product_fold(params, c))[0]
}

/// `Ŵ(g) = 1 + (1/b) Σ_{i,j} (Ŵ(g×(i,j)) − 1)`, folded to the root.
pub fn fold_w_linear(params: &LatticeParams, leaves: &LeafArray) -> f64 {
    let b = params.b() as f64;
    fold_levels(params, leaves, |c| 1.0 + c.iter().map(|x| x - 1.0).sum::<f64>() / b)[0]
}

/// Law of the leaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafLaw {
    /// `1 + 𝒩(0, v)`.
    Gaussian,
    /// `exp{σξ − σ²/2}`; with nominal variance `σ² = r (b/s)^depth`.
    ExpGaussian,
    /// `1 ± √v` with equal probability.
    ShiftedRademacher,
    /// Gamma with mean 1 and variance `v`.
    Gamma,
}

/// How the leaf variance is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeafVariance {
    /// `r (b/s)^depth` (log-variance for [`LeafLaw::ExpGaussian`]).
    #[default]
    Nominal,
    /// `𝔳(r (b/s)^depth)`, exact variance of the leaves of a depth-`depth`
    /// tree whose root has law `L_r`.
    Matched,
}

#[derive(Clone, Copy, Debug)]
enum Leaf {
    Gaussian { sd: f64 },
    Exp { sigma: f64 },
    Rademacher { a: f64 },
    Gamma(Gamma<f64>),
    One,
}

impl Leaf {
    fn build(law: LeafLaw, nominal: f64, matched: Option<f64>) -> Result<Self> {
        let v = matched.unwrap_or(nominal);
        if v == 0.0 {
            return Ok(Leaf::One);
        }
        Ok(match law {
            LeafLaw::Gaussian => Leaf::Gaussian { sd: v.sqrt() },
            LeafLaw::ExpGaussian => {
                let s2 = match matched {
                    Some(m) => m.ln_1p(),
                    None => nominal,
                };
                Leaf::Exp { sigma: s2.sqrt() }
            }
            LeafLaw::ShiftedRademacher => Leaf::Rademacher { a: v.sqrt() },
            LeafLaw::Gamma => Leaf::Gamma(Gamma::new(1.0 / v, v).map_err(|e| Error::InvalidDisorder(e.to_string()))?),
        })
    }

    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Leaf::Gaussian { sd } => 1.0 + sd * rng.sample::<f64, _>(StandardNormal),
            Leaf::Exp { sigma } => (sigma * rng.sample::<f64, _>(StandardNormal) - 0.5 * sigma * sigma).exp(),
            Leaf::Rademacher { a } => {
                if rng.random::<bool>() {
                    1.0 + a
                } else {
                    1.0 - a
                }
            }
            Leaf::Gamma(g) => g.sample(rng),
            Leaf::One => 1.0,
        }
    }
}

/// Sampler for (a truncation of) `L_r`.
#[derive(Clone, Debug)]
pub struct LimitLawSampler {
    params: LatticeParams,
    r: f64,
    depth: usize,
    law: LeafLaw,
    variance: LeafVariance,
    leaf: Leaf,
}

/// Cap on the leaves of one default-depth tree.
pub const DEFAULT_LEAF_CAP: f64 = 1e5;

/// Truncation depth: the smallest `n` with `r (b/s)^n < 1e−4`, capped so a
/// tree has at most [`DEFAULT_LEAF_CAP`] leaves.
pub fn default_depth(params: &LatticeParams, r: f64) -> usize {
    let q = params.b() as f64 / params.s() as f64;
    let bs = params.bs() as f64;
    let mut n = 0;
    while r * q.powi(n as i32) >= 1e-4 && bs.powi(n as i32 + 1) <= DEFAULT_LEAF_CAP {
        n += 1;
    }
    n
}

impl LimitLawSampler {
    pub fn new(params: LatticeParams, r: f64, depth: usize, law: LeafLaw, variance: LeafVariance) -> Result<Self> {
        if params.b() >= params.s() {
            return Err(Error::Regime(format!("limit laws need b < s, got b={}, s={}", params.b(), params.s())));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Config { field: "r".into(), msg: format!("{r} is not a finite nonnegative number") });
        }
        let nominal = r * (params.b() as f64 / params.s() as f64).powi(depth as i32);
        let matched = match variance {
            LeafVariance::Nominal => None,
            LeafVariance::Matched => Some(rgflow::limiting_variance(&params, nominal, 1e-15)?),
        };
        let leaf = Leaf::build(law, nominal, matched)?;
        if law == LeafLaw::ShiftedRademacher && matched.unwrap_or(nominal) > 1.0 {
            return Err(Error::Config { field: "r".into(), msg: "shifted-rademacher leaves need variance <= 1 to stay nonnegative".into() });
        }
        Ok(Self { params, r, depth, law, variance, leaf })
    }

    pub fn params(&self) -> &LatticeParams {
        &self.params
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn law(&self) -> LeafLaw {
        self.law
    }

    pub fn variance_mode(&self) -> LeafVariance {
        self.variance
    }

    /// Variance of one leaf.
    pub fn leaf_variance(&self) -> f64 {
        match self.leaf {
            Leaf::Gaussian { sd } => sd * sd,
            Leaf::Exp { sigma } => (sigma * sigma).exp_m1(),
            Leaf::Rademacher { a } => a * a,
            Leaf::Gamma(_) | Leaf::One => match self.variance {
                LeafVariance::Matched => rgflow::limiting_variance(&self.params, self.nominal(), 1e-15).unwrap_or(f64::NAN),
                LeafVariance::Nominal => self.nominal(),
            },
        }
    }

    fn nominal(&self) -> f64 {
        self.r * (self.params.b() as f64 / self.params.s() as f64).powi(self.depth as i32)
    }

    /// One exact fold of `(bs)^depth` fresh leaves.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.leaf {
            Leaf::Exp { sigma } if self.depth > 0 => population::sample_tree(&BranchExp { sampler: self, sigma }, &self.params, self.depth - 1, rng),
            _ => population::sample_tree(self, &self.params, self.depth, rng),
        }
    }

    pub fn sample_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<f64> {
        (0..count).map(|_| self.sample(rng)).collect()
    }

    /// Population-dynamics approximation: a pool of `size` values per level,
    /// renormalized to mean one after every level.
    pub fn sample_pool<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<f64> {
        population::evolve_pool(self, &self.params, self.depth, size, rng)
    }
}

/// Exp-gaussian leaves with the bottom level drawn per branch: a product of
/// `s` leaves is `exp{σ√s ξ − sσ²/2}`.
struct BranchExp<'a> {
    sampler: &'a LimitLawSampler,
    sigma: f64,
}

impl Recursion for BranchExp<'_> {
    type State = f64;

    fn leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let s = self.sampler.params.s() as f64;
        let sigma = self.sigma * s.sqrt();
        let b = self.sampler.params.b();
        let mut acc = 0.0;
        for _ in 0..b {
            acc += (sigma * rng.sample::<f64, _>(StandardNormal) - 0.5 * sigma * sigma).exp();
        }
        acc / b as f64
    }

    fn combine<R: Rng + ?Sized>(&self, _: usize, c: &[f64], _: &mut R) -> f64 {
        product_fold(&self.sampler.params, c)
    }
}

impl Recursion for LimitLawSampler {
    type State = f64;

    fn leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.leaf.draw(rng)
    }

    fn combine<R: Rng + ?Sized>(&self, _: usize, c: &[f64], _: &mut R) -> f64 {
        product_fold(&self.params, c)
    }

    fn recenter(&self, pool: &mut [f64]) {
        let m = pool.iter().sum::<f64>() / pool.len() as f64;
        for v in pool.iter_mut() {
            *v /= m;
        }
    }
}

/// How samples are produced for the distributional tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum SamplingMethod {
    /// Independent exact folds.
    Direct,
    /// Population dynamics with the given pool size (at least the sample
    /// count).
    Pool { size: usize },
}

fn draw<R: Rng + ?Sized>(s: &LimitLawSampler, count: usize, method: SamplingMethod, rng: &mut R) -> Vec<f64> {
    match method {
        SamplingMethod::Direct => s.sample_many(count, rng),
        SamplingMethod::Pool { size } => {
            let mut pool = s.sample_pool(size.max(count), rng);
            pool.truncate(count);
            pool
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FixedPointReport {
    pub r: f64,
    pub depth: usize,
    pub ks: KsResult,
    /// Permutation p-value, when permutations were requested.
    pub permutation_p_value: Option<f64>,
    pub n: usize,
}

/// Compares `A ~ L_{(s/b)r}` with `B = (1/b) Σ_i Π_j X^{(i,j)}` built from
/// `b·s` independent `L_r` draws, by a two-sample KS test at level `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_test<R: Rng + ?Sized>(
    params: &LatticeParams,
    r: f64,
    depth: usize,
    n_samples: usize,
    law: LeafLaw,
    variance: LeafVariance,
    method: SamplingMethod,
    alpha: f64,
    permutations: usize,
    rng: &mut R,
) -> Result<FixedPointReport> {
    let ratio = params.s() as f64 / params.b() as f64;
    let sa = LimitLawSampler::new(*params, ratio * r, depth, law, variance)?;
    let sb = LimitLawSampler::new(*params, r, depth, law, variance)?;
    let a = draw(&sa, n_samples, method, rng);
    let bs = params.bs();
    let inner = draw(&sb, n_samples * bs, method, rng);
    let b: Vec<f64> = inner.chunks(bs).map(|c| product_fold(params, c)).collect();
    let ks = stats::ks_two_sample(&a, &b, alpha);
    let permutation_p_value = (permutations > 0).then(|| stats::ks_permutation_p_value(&a, &b, permutations, rng));
    Ok(FixedPointReport { r, depth, ks, permutation_p_value, n: n_samples })
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalityReport {
    pub r: f64,
    pub ks: KsResult,
    pub skewness: f64,
    pub kurtosis: f64,
    pub se_kurtosis: f64,
}

/// KS distance of `(X_r − 1)/√r` to `𝒩(0,1)` and its standardized moments.
pub fn small_r_normality<R: Rng + ?Sized>(
    params: &LatticeParams,
    r: f64,
    depth: usize,
    n_samples: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<NormalityReport> {
    let s = LimitLawSampler::new(*params, r, depth, LeafLaw::Gaussian, LeafVariance::Matched)?;
    let z: Vec<f64> = s.sample_many(n_samples, rng).into_iter().map(|x| (x - 1.0) / r.sqrt()).collect();
    let m = Moments::from_slice(&z);
    Ok(NormalityReport {
        r,
        ks: stats::ks_one_sample(&z, stats::normal_cdf, alpha),
        skewness: m.skewness(),
        kurtosis: m.kurtosis(),
        se_kurtosis: m.se_kurtosis(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub r: f64,
    pub mean_sqrt: f64,
    pub se: f64,
    /// `e^{(1−√r)/2}`.
    pub bound: f64,
}

/// `𝔼[X_r^{1/2}]` over a grid of `r`, exp-gaussian leaves (strictly positive).
pub fn strong_disorder_decay<R: Rng + ?Sized>(
    params: &LatticeParams,
    r_grid: &[f64],
    depth: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<DecayRow>> {
    r_grid
        .iter()
        .map(|&r| {
            let s = LimitLawSampler::new(*params, r, depth, LeafLaw::ExpGaussian, LeafVariance::Nominal)?;
            let mut m = Moments::new();
            for _ in 0..n_samples {
                m.push(s.sample(rng).sqrt());
            }
            Ok(DecayRow { r, mean_sqrt: m.mean(), se: m.se_mean(), bound: ((1.0 - r.sqrt()) / 2.0).exp() })
        })
        .collect()
}

/// Path masses `μ(p) = |Γ_k|^{−1} Π_{e∈p} Y_e / Ŵ` for all `p ∈ Γ_k`, in
/// enumeration order, from edge values `Y` on `D_k`.
pub fn path_masses(params: &LatticeParams, k: usize, edge_values: &[f64]) -> Result<Vec<f64>> {
    let paths = lattice::enumerate_paths(params, k, lattice::DEFAULT_PATH_CAP)?;
    let mut masses: Vec<f64> = paths
        .iter()
        .map(|p| {
            p.path
                .edges(params)
                .iter()
                .map(|e| edge_values[e.word.rank(params).expect("small depth") as usize])
                .product::<f64>()
        })
        .collect();
    let total: f64 = masses.iter().sum();
    for m in masses.iter_mut() {
        *m /= total;
    }
    Ok(masses)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    /// One KS result per path `p ∈ Γ_k`.
    pub marginal_ks: Vec<KsResult>,
    /// Largest absolute difference between the two correlation matrices.
    pub max_correlation_gap: f64,
    /// Largest deviation of a coarse-grained total mass from 1.
    pub max_mass_error: f64,
    pub replicates: usize,
}

/// Coarse-grains the random path measure built on `D_n` from per-edge
/// `L_{x(b/s)^n}` draws to `Γ_k` and compares it with the measure built
/// directly on `D_k` from per-edge `L_{x(b/s)^k}` draws. Each edge draw is an
/// exact fold at truncation depth `leaf_depth`.
#[allow(clippy::too_many_arguments)]
pub fn measure_consistency_test<R: Rng + ?Sized>(
    params: &LatticeParams,
    x: f64,
    k: usize,
    n: usize,
    leaf_depth: usize,
    replicates: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<ConsistencyReport> {
    if k >= n {
        return Err(Error::Config { field: "k".into(), msg: "need k < n".into() });
    }
    let count = lattice::count_paths(params, k);
    if count > num_bigint::BigUint::from(lattice::DEFAULT_PATH_CAP) {
        return Err(Error::CapExceeded { count: count.to_string(), cap: lattice::DEFAULT_PATH_CAP });
    }
    let q = params.b() as f64 / params.s() as f64;
    let fine = LimitLawSampler::new(*params, x * q.powi(n as i32), leaf_depth, LeafLaw::Gaussian, LeafVariance::Matched)?;
    let coarse = LimitLawSampler::new(*params, x * q.powi(k as i32), leaf_depth, LeafLaw::Gaussian, LeafVariance::Matched)?;
    let bs = params.bs();
    let mut coarse_grained: Vec<Vec<f64>> = Vec::with_capacity(replicates);
    let mut direct: Vec<Vec<f64>> = Vec::with_capacity(replicates);
    let mut max_mass_error: f64 = 0.0;
    for _ in 0..replicates {
        let leaves = fine.sample_many(bs.pow(n as u32), rng);
        let on_k = fold_partial(params, &leaves, n - k);
        let m = path_masses(params, k, &on_k)?;
        max_mass_error = max_mass_error.max((m.iter().sum::<f64>() - 1.0).abs());
        coarse_grained.push(m);
        let ys = coarse.sample_many(bs.pow(k as u32), rng);
        direct.push(path_masses(params, k, &ys)?);
    }
    let paths = coarse_grained.first().map_or(0, |v| v.len());
    let column = |set: &[Vec<f64>], i: usize| set.iter().map(|v| v[i]).collect::<Vec<f64>>();
    let marginal_ks = (0..paths)
        .map(|i| stats::ks_two_sample(&column(&coarse_grained, i), &column(&direct, i), alpha))
        .collect();
    let mut max_correlation_gap: f64 = 0.0;
    for i in 0..paths {
        for j in (i + 1)..paths {
            let (c1, _) = stats::correlation(&column(&coarse_grained, i), &column(&coarse_grained, j));
            let (c2, _) = stats::correlation(&column(&direct, i), &column(&direct, j));
            max_correlation_gap = max_correlation_gap.max((c1 - c2).abs());
        }
    }
    Ok(ConsistencyReport { marginal_ks, max_correlation_gap, max_mass_error, replicates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(b: u32, s: u32) -> LatticeParams {
        LatticeParams::new(b, s).unwrap()
    }

    #[test]
    fn folds_by_hand() {
        let q = p(2, 2);
        let ones = LeafArray::new(&q, 3, vec![1.0; 64]).unwrap();
        assert_eq!(fold_w(&q, &ones), 1.0);
        assert_eq!(fold_w_linear(&q, &ones), 1.0);
        let x = LeafArray::new(&q, 1, vec![1.5, 2.0, 0.5, 3.0]).unwrap();
        assert_eq!(fold_w(&q, &x), (1.5 * 2.0 + 0.5 * 3.0) / 2.0);
        assert_eq!(fold_w_linear(&q, &x), 1.0 + (0.5 + 1.0 - 0.5 + 2.0) / 2.0);
        assert!(matches!(LeafArray::new(&q, 2, vec![1.0; 15]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn fold_and_linear_agree_to_first_order() {
        let q = p(2, 3);
        let eta: Vec<f64> = (0..36).map(|i| ((i * 7919) % 13) as f64 / 6.0 - 1.0).collect();
        let mut ratios = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let l = LeafArray::new(&q, 2, eta.iter().map(|e| 1.0 + eps * e).collect()).unwrap();
            ratios.push((fold_w(&q, &l) - fold_w_linear(&q, &l)).abs() / (eps * eps));
        }
        assert!(ratios.iter().all(|&r| r < 10.0), "{ratios:?}");
        assert!((ratios[1] - ratios[2]).abs() < 0.05 * ratios[1].max(1e-12) + 1e-6);
    }

    #[test]
    fn zero_r_is_constant_one() {
        let s = LimitLawSampler::new(p(2, 3), 0.0, 3, LeafLaw::Gaussian, LeafVariance::Nominal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(s.sample_many(10, &mut rng).iter().all(|&v| v == 1.0));
        let rep = fixed_point_test(&p(2, 3), 0.0, 2, 100, LeafLaw::Gaussian, LeafVariance::Nominal, SamplingMethod::Direct, 0.01, 0, &mut rng).unwrap();
        assert_eq!(rep.ks.statistic, 0.0);
    }

    #[test]
    fn regime_and_depth() {
        assert!(LimitLawSampler::new(p(2, 2), 1.0, 3, LeafLaw::Gaussian, LeafVariance::Nominal).is_err());
        assert_eq!(default_depth(&p(2, 3), 1e-5), 0);
        assert_eq!(default_depth(&p(2, 3), 0.5), 6);
        assert_eq!(default_depth(&p(2, 3), 1e-4), 1);
    }

    #[test]
    fn exp_leaves_are_positive() {
        let s = LimitLawSampler::new(p(2, 3), 9.0, 3, LeafLaw::ExpGaussian, LeafVariance::Nominal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(s.sample_many(200, &mut rng).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn matched_leaf_variance() {
        let q = p(2, 3);
        let s = LimitLawSampler::new(q, 0.5, 4, LeafLaw::Gaussian, LeafVariance::Matched).unwrap();
        let v = rgflow::limiting_variance(&q, 0.5 * (2.0f64 / 3.0).powi(4), 1e-15).unwrap();
        assert!((s.leaf_variance() - v).abs() < 1e-15);
        let e = LimitLawSampler::new(q, 0.5, 4, LeafLaw::ExpGaussian, LeafVariance::Matched).unwrap();
        assert!((e.leaf_variance() - v).abs() < 1e-14);
    }

    #[test]
    fn branch_exp_matches_leafwise_folding() {
        let q = p(2, 3);
        let s = LimitLawSampler::new(q, 0.5, 2, LeafLaw::ExpGaussian, LeafVariance::Matched).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fast = s.sample_many(20_000, &mut rng);
        let slow: Vec<f64> = (0..20_000).map(|_| population::sample_tree(&s, &q, 2, &mut rng)).collect();
        let ks = stats::ks_two_sample(&fast, &slow, 0.001);
        assert!(ks.passes(), "{ks:?}");
        let m = Moments::from_slice(&fast);
        assert!((m.mean() - 1.0).abs() < 4.0 * m.se_mean());
    }

    #[test]
    fn path_masses_sum_to_one() {
        let q = p(2, 3);
        let m = path_masses(&q, 1, &[1.0, 2.0, 3.0, 0.5, 0.5, 0.5]).unwrap();
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((m[0] - 6.0 / 6.125).abs() < 1e-12);
    }
}
