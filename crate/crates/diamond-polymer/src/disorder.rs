//! Disorder families, the cumulant function `λ(β) = log 𝔼[e^{βω}]`, the
//! normalized weights `E(β) = e^{βω − λ(β)}` and address-keyed fields.

use crate::error::{Error, Result};
use crate::lattice::{self, EdgeAddress, LatticeParams, VertexAddress};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const MOMENT_TOL: f64 = 1e-12;

/// A finite discrete law with mean 0 and variance 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DiscreteRaw")]
pub struct Discrete {
    values: Vec<f64>,
    probs: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

#[derive(Deserialize)]
struct DiscreteRaw {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<DiscreteRaw> for Discrete {
    type Error = Error;
    fn try_from(r: DiscreteRaw) -> Result<Self> {
        Discrete::new(r.values, r.probs)
    }
}

impl Discrete {
    /// Validates that the law is a probability vector with mean 0 and
    /// variance 1 to within `1e−12`.
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidDisorder(m));
        if values.is_empty() || values.len() != probs.len() {
            return bad(format!("{} values vs {} probs", values.len(), probs.len()));
        }
        if values.iter().chain(&probs).any(|x| !x.is_finite()) || probs.iter().any(|&p| p < 0.0) {
            return bad("values and probs must be finite, probs nonnegative".into());
        }
        let total: f64 = probs.iter().sum();
        let mean: f64 = values.iter().zip(&probs).map(|(v, p)| v * p).sum();
        let second: f64 = values.iter().zip(&probs).map(|(v, p)| v * v * p).sum();
        if (total - 1.0).abs() > MOMENT_TOL {
            return bad(format!("probabilities sum to {total}"));
        }
        if mean.abs() > MOMENT_TOL {
            return bad(format!("mean {mean} is not 0"));
        }
        if (second - mean * mean - 1.0).abs() > MOMENT_TOL {
            return bad(format!("variance {} is not 1", second - mean * mean));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { values, probs, cumulative })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.values[self.sample_index_from(u)]
    }

    fn sample_index_from(&self, u: f64) -> usize {
        self.cumulative.partition_point(|&c| c <= u).min(self.values.len() - 1)
    }
}

/// Mean-0, variance-1 disorder law.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DisorderSpec {
    #[default]
    StandardGaussian,
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    UniformScaled,
    Discrete(Discrete),
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `log(sinh x / x)`.
fn log_sinhc(x: f64) -> f64 {
    let a = x.abs();
    if a < 1e-3 {
        let a2 = a * a;
        a2 / 6.0 - a2 * a2 / 180.0
    } else if a < 20.0 {
        (a.sinh() / a).ln()
    } else {
        a + (-(-2.0 * a).exp()).ln_1p() - std::f64::consts::LN_2 - a.ln()
    }
}

impl DisorderSpec {
    /// Parses `{"values": [...], "probs": [...]}`.
    pub fn discrete_from_json(text: &str) -> Result<Self> {
        let d: Discrete = serde_json::from_str(text).map_err(|e| Error::InvalidDisorder(e.to_string()))?;
        Ok(DisorderSpec::Discrete(d))
    }

    pub fn name(&self) -> &'static str {
        match self {
            DisorderSpec::StandardGaussian => "standard-gaussian",
            DisorderSpec::Rademacher => "rademacher",
            DisorderSpec::UniformScaled => "uniform-scaled",
            DisorderSpec::Discrete(_) => "discrete",
        }
    }

    /// `λ(β) = log 𝔼[e^{βω}]`. All supported families have finite exponential
    /// moments of every order, so only non-finite `β` is out of range.
    pub fn lambda(&self, beta: f64) -> Result<f64> {
        if !beta.is_finite() {
            return Err(Error::OutOfRange { family: self.name().into(), beta });
        }
        let v = match self {
            DisorderSpec::StandardGaussian => 0.5 * beta * beta,
            DisorderSpec::Rademacher => log_cosh(beta),
            DisorderSpec::UniformScaled => log_sinhc(3f64.sqrt() * beta),
            DisorderSpec::Discrete(d) => {
                let m = d.values.iter().map(|v| beta * v).fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = d.values.iter().zip(&d.probs).map(|(v, p)| p * (beta * v - m).exp()).sum();
                m + s.ln()
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::OutOfRange { family: self.name().into(), beta })
        }
    }

    /// `λ(2β) − 2λ(β)`, the exponent driving every variance recursion
    /// (`β²` for the gaussian family).
    pub fn lambda_gap(&self, beta: f64) -> Result<f64> {
        match self {
            DisorderSpec::StandardGaussian if beta.is_finite() => Ok(beta * beta),
            _ => Ok(self.lambda(2.0 * beta)? - 2.0 * self.lambda(beta)?),
        }
    }

    /// `E(β) = e^{βω − λ(β)}`.
    pub fn weight(&self, beta: f64, omega: f64) -> Result<f64> {
        Ok((beta * omega - self.lambda(beta)?).exp())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DisorderSpec::StandardGaussian => rng.sample(StandardNormal),
            DisorderSpec::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            DisorderSpec::UniformScaled => 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
            DisorderSpec::Discrete(d) => d.sample(rng),
        }
    }
}

/// Draws pairs `(ω, e^{βω − λ(β)})`. Finite-support laws look the weight up
/// in a precomputed table instead of calling `exp`.
#[derive(Clone, Debug)]
pub struct WeightSampler {
    spec: DisorderSpec,
    beta: f64,
    lambda: f64,
    table: Vec<f64>,
}

impl WeightSampler {
    pub fn new(spec: DisorderSpec, beta: f64) -> Result<Self> {
        let lambda = spec.lambda(beta)?;
        let table = match &spec {
            DisorderSpec::Rademacher => vec![(-beta - lambda).exp(), (beta - lambda).exp()],
            DisorderSpec::Discrete(d) => d.values.iter().map(|v| (beta * v - lambda).exp()).collect(),
            _ => Vec::new(),
        };
        Ok(Self { spec, beta, lambda, table })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match &self.spec {
            DisorderSpec::Rademacher => {
                let up = rng.random::<bool>();
                (if up { 1.0 } else { -1.0 }, self.table[up as usize])
            }
            DisorderSpec::Discrete(d) => {
                let i = d.sample_index_from(rng.random::<f64>());
                (d.values[i], self.table[i])
            }
            spec => {
                let w = spec.sample(rng);
                (w, (self.beta * w - self.lambda).exp())
            }
        }
    }
}

/// Where the disorder lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    Vertices,
    Edges,
}

/// A deterministic realization of i.i.d. `ω` over the vertices or edges of
/// `D_n`. The value at an address is drawn from a counter-based stream keyed
/// by `(master_seed, placement, address key)`, so nothing is stored.
#[derive(Clone, Debug)]
pub struct DisorderField {
    params: LatticeParams,
    n: usize,
    master_seed: u64,
    placement: Placement,
    spec: DisorderSpec,
    gen_offsets: Vec<u128>,
}

impl DisorderField {
    pub fn new(params: LatticeParams, n: usize, master_seed: u64, placement: Placement, spec: DisorderSpec) -> Result<Self> {
        // Offsets of each generation in the vertex key space; building them
        // also proves every key of D_n fits in 128 bits.
        let mut gen_offsets = Vec::with_capacity(n + 1);
        let mut acc: u128 = 0;
        let cap = Error::AddressCapacity { depth: n, bits: 128 };
        let mut per_gen: u128 = params.b() as u128 * (params.s() - 1) as u128;
        for g in 1..=n {
            gen_offsets.push(acc);
            acc = acc.checked_add(per_gen).ok_or(cap.clone())?;
            if g < n {
                per_gen = per_gen.checked_mul(params.bs() as u128).ok_or(cap.clone())?;
            }
        }
        gen_offsets.push(acc);
        if placement == Placement::Edges {
            let mut e: u128 = 1;
            for _ in 0..n {
                e = e.checked_mul(params.bs() as u128).ok_or(cap.clone())?;
            }
        }
        Ok(Self { params, n, master_seed, placement, spec, gen_offsets })
    }

    pub fn params(&self) -> &LatticeParams {
        &self.params
    }

    pub fn depth(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.master_seed
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn spec(&self) -> &DisorderSpec {
        &self.spec
    }

    fn tag(&self) -> u64 {
        match self.placement {
            Placement::Vertices => rng::tag::VERTEX_FIELD,
            Placement::Edges => rng::tag::EDGE_FIELD,
        }
    }

    /// `ω` for a raw key of this field's placement.
    pub fn value_by_key(&self, key: u128) -> f64 {
        let mut r = rng::stream(self.master_seed, self.tag(), key);
        self.spec.sample(&mut r)
    }

    /// Key of vertex `(parent rank, i, j)` of generation `gen`, computed from
    /// the parent's word rank without rebuilding the address.
    #[inline]
    pub fn vertex_key_from_parts(&self, gen: usize, parent_rank: u128, i: u32, j: u32) -> u128 {
        let b = self.params.b() as u128;
        let sm1 = (self.params.s() - 1) as u128;
        self.gen_offsets[gen - 1] + (parent_rank * b + (i - 1) as u128) * sm1 + (j - 1) as u128
    }

    pub fn vertex_value(&self, a: &VertexAddress) -> Result<f64> {
        if self.placement != Placement::Vertices {
            return Err(Error::AddressMismatch("vertex query on an edge field".into()));
        }
        if a.parent.lattice_depth() != self.n {
            return Err(Error::AddressMismatch(format!(
                "vertex of D_{} queried on a field over D_{}",
                a.parent.lattice_depth(),
                self.n
            )));
        }
        Ok(self.value_by_key(lattice::vertex_key(&self.params, a)?))
    }

    pub fn edge_value(&self, e: &EdgeAddress) -> Result<f64> {
        if self.placement != Placement::Edges {
            return Err(Error::AddressMismatch("edge query on a vertex field".into()));
        }
        if e.word.len() != self.n {
            return Err(Error::AddressMismatch(format!(
                "edge word of length {} on a field over D_{}",
                e.word.len(),
                self.n
            )));
        }
        Ok(self.value_by_key(lattice::edge_key(&self.params, e)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SubgraphAddress;
    use rand::SeedableRng;

    #[test]
    fn lambda_closed_forms() {
        let g = DisorderSpec::StandardGaussian;
        assert_eq!(g.lambda(0.0).unwrap(), 0.0);
        assert_eq!(g.lambda(1.0).unwrap(), 0.5);
        let r = DisorderSpec::Rademacher;
        assert!((r.lambda(1.0).unwrap() - 1f64.cosh().ln()).abs() < 1e-15);
        assert!((r.lambda(1.0).unwrap() - 0.43378).abs() < 1e-5);
        let as_discrete = Discrete::new(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let d = DisorderSpec::Discrete(as_discrete);
        for beta in [0.1, 1.0, 3.0, 40.0] {
            assert!((d.lambda(beta).unwrap() - r.lambda(beta).unwrap()).abs() < 1e-12);
        }
        let u = DisorderSpec::UniformScaled;
        for beta in [1e-4, 0.3, 2.0, 30.0] {
            let x = 3f64.sqrt() * beta;
            let direct = (x.sinh() / x).ln();
            assert!((u.lambda(beta).unwrap() - direct).abs() < 1e-12 * direct.abs().max(1.0));
        }
        assert!(g.lambda(f64::NAN).is_err());
    }

    #[test]
    fn weight_values() {
        let g = DisorderSpec::StandardGaussian;
        assert_eq!(g.weight(0.0, 3.7).unwrap(), 1.0);
        assert!((g.weight(0.5, 0.0).unwrap() - (-0.125f64).exp()).abs() < 1e-15);
        assert!((g.weight(0.5, 0.0).unwrap() - 0.8825).abs() < 1e-4);
    }

    #[test]
    fn discrete_validation() {
        assert!(Discrete::new(vec![-1.0, 1.0], vec![0.4, 0.6]).is_err());
        assert!(Discrete::new(vec![-2.0, 2.0], vec![0.5, 0.5]).is_err());
        assert!(Discrete::new(vec![-1.0, 1.0], vec![0.5, 0.6]).is_err());
        let spec = DisorderSpec::discrete_from_json(r#"{"values": [-2.0, 0.5], "probs": [0.2, 0.8]}"#).unwrap();
        assert_eq!(spec.name(), "discrete");
        assert!(DisorderSpec::discrete_from_json(r#"{"values": [0.0], "probs": [1.0]}"#).is_err());
    }

    #[test]
    fn lambda_gap_gaussian_is_beta_squared() {
        let g = DisorderSpec::StandardGaussian;
        for beta in [0.0, 0.3, 1.7] {
            assert_eq!(g.lambda_gap(beta).unwrap(), beta * beta);
        }
    }

    #[test]
    fn discrete_sampler_hits_support() {
        let d = Discrete::new(vec![-2.0, 0.5], vec![0.2, 0.8]).unwrap();
        let spec = DisorderSpec::Discrete(d);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let neg = (0..n).filter(|_| spec.sample(&mut r) < 0.0).count() as f64 / n as f64;
        assert!((neg - 0.2).abs() < 4.0 * (0.2f64 * 0.8 / n as f64).sqrt());
    }

    #[test]
    fn field_is_deterministic_and_checks_addresses() {
        let params = LatticeParams::new(2, 3).unwrap();
        let f = DisorderField::new(params, 3, 11, Placement::Vertices, DisorderSpec::StandardGaussian).unwrap();
        let a = SubgraphAddress::root(3).child(&params, 2, 1).interior_vertices(&params)[3].clone();
        assert_eq!(f.vertex_value(&a).unwrap(), f.vertex_value(&a).unwrap());
        let other = SubgraphAddress::root(2).interior_vertices(&params)[0].clone();
        assert!(matches!(f.vertex_value(&other), Err(Error::AddressMismatch(_))));
        let key = lattice::vertex_key(&params, &a).unwrap();
        let rank = a.parent.word().rank(&params).unwrap();
        assert_eq!(f.vertex_key_from_parts(a.generation(), rank, a.branch, a.slot), key);
        let e = SubgraphAddress::root(0);
        assert!(f.edge_value(&e.as_edge().unwrap()).is_err());
    }

    #[test]
    fn field_capacity_is_checked() {
        let params = LatticeParams::new(2, 2).unwrap();
        assert!(DisorderField::new(params, 70, 1, Placement::Vertices, DisorderSpec::StandardGaussian).is_err());
        assert!(DisorderField::new(params, 60, 1, Placement::Vertices, DisorderSpec::StandardGaussian).is_ok());
    }
}
