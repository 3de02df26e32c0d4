//! Streaming moments, Kolmogorov–Smirnov tests and small regression helpers.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

/// Mergeable accumulator of the first four central moments (Pébay's
/// pairwise update), so aggregation does not depend on replicate order
/// beyond floating-point rounding.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::new();
        for &x in xs {
            m.push(x);
        }
        m
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, o: &Moments) -> Moments {
        if self.n == 0.0 {
            return *o;
        }
        if o.n == 0.0 {
            return *self;
        }
        let (na, nb) = (self.n, o.n);
        let n = na + nb;
        let d = o.mean - self.mean;
        let d2 = d * d;
        let d3 = d2 * d;
        let d4 = d2 * d2;
        let mean = self.mean + d * nb / n;
        let m2 = self.m2 + o.m2 + d2 * na * nb / n;
        let m3 = self.m3 + o.m3 + d3 * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * o.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + o.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * o.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * o.m3 - nb * self.m3) / n;
        Moments { n, mean, m2, m3, m4 }
    }

    pub fn count(&self) -> usize {
        self.n as usize
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2.0 {
            return f64::NAN;
        }
        self.m2 / (self.n - 1.0)
    }

    pub fn se_mean(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    /// Plug-in standard error of the sample variance,
    /// `sqrt((μ₄ − σ⁴·(n−3)/(n−1)) / n)`.
    pub fn se_variance(&self) -> f64 {
        let n = self.n;
        let mu4 = self.m4 / n;
        let s2 = self.variance();
        ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }

    /// Mean of `x²` and its standard error, for second-moment checks.
    pub fn raw_second(&self) -> f64 {
        self.m2 / self.n + self.mean * self.mean
    }

    pub fn skewness(&self) -> f64 {
        let n = self.n;
        (self.m3 / n) / (self.m2 / n).powf(1.5)
    }

    /// Standardized fourth moment (3 for a normal law).
    pub fn kurtosis(&self) -> f64 {
        let n = self.n;
        (self.m4 / n) / (self.m2 / n).powi(2)
    }

    /// Large-sample standard error of the skewness, `sqrt(6/n)`.
    pub fn se_skewness(&self) -> f64 {
        (6.0 / self.n).sqrt()
    }

    /// Large-sample standard error of the kurtosis, `sqrt(24/n)`.
    pub fn se_kurtosis(&self) -> f64 {
        (24.0 / self.n).sqrt()
    }
}

/// Summary of a sample: count, mean, variance with standard errors, shape.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub se_mean: f64,
    pub variance: f64,
    pub se_variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

impl From<&Moments> for Summary {
    fn from(m: &Moments) -> Self {
        Summary {
            count: m.count(),
            mean: m.mean(),
            se_mean: m.se_mean(),
            variance: m.variance(),
            se_variance: m.se_variance(),
            skewness: m.skewness(),
            kurtosis: m.kurtosis(),
        }
    }
}

/// Mean and standard error of a set of batch estimates.
pub fn batch_mean_se(xs: &[f64]) -> (f64, f64) {
    let m = Moments::from_slice(xs);
    (m.mean(), m.se_mean())
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `Q_KS(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`, the limiting
/// Kolmogorov survival function.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `c(α) = sqrt(−ln(α/2)/2)`; 1.628 at `α = 0.01`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub n1: usize,
    pub n2: usize,
    /// Rejection threshold at the requested significance.
    pub critical: f64,
    pub alpha: f64,
    /// Asymptotic p-value.
    pub p_value: f64,
}

impl KsResult {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical
    }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

fn two_sample_distance(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    d
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic critical value
/// `c(α)·sqrt((n₁+n₂)/(n₁n₂))`.
pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs non-empty samples");
    let (sa, sb) = (sorted(a), sorted(b));
    let d = two_sample_distance(&sa, &sb);
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let ne = n1 * n2 / (n1 + n2);
    let sq = ne.sqrt();
    KsResult {
        statistic: d,
        n1: a.len(),
        n2: b.len(),
        critical: ks_coefficient(alpha) / sq,
        alpha,
        p_value: kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d),
    }
}

/// One-sample test against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> KsResult {
    assert!(!xs.is_empty(), "KS needs a non-empty sample");
    let s = sorted(xs);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sq = n.sqrt();
    KsResult {
        statistic: d,
        n1: s.len(),
        n2: 0,
        critical: ks_coefficient(alpha) / sq,
        alpha,
        p_value: kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d),
    }
}

/// Permutation p-value of the two-sample KS distance.
pub fn ks_permutation_p_value<R: Rng + ?Sized>(a: &[f64], b: &[f64], permutations: usize, rng: &mut R) -> f64 {
    let observed = two_sample_distance(&sorted(a), &sorted(b));
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut exceed = 0usize;
    for _ in 0..permutations {
        pooled.shuffle(rng);
        let (x, y) = pooled.split_at(a.len());
        if two_sample_distance(&sorted(x), &sorted(y)) >= observed - 1e-15 {
            exceed += 1;
        }
    }
    (exceed as f64 + 1.0) / (permutations as f64 + 1.0)
}

/// Least-squares line `y = slope·x + intercept` with its `R²`.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    LinearFit { slope, intercept: my - slope * mx, r_squared: if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) } }
}

/// Pearson correlation with the large-sample standard error `1/sqrt(n)`
/// under the null of zero correlation.
pub fn correlation(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    (sxy / (sxx * syy).sqrt(), 1.0 / n.sqrt())
}
