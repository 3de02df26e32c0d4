//! Normalized partition functions `W_n(β)` on disorder realizations.
//!
//! On a vertex field, `W(g) = (1/b) Σ_i Π_j W(g×(i,j)) Π_{j<s} E(g⋄(i,j))` with
//! `W ≡ 1` on edges. On an edge field the interior factors are absent and the
//! leaves carry `E`. Path enumeration gives an independent oracle at small `n`.

use crate::disorder::{DisorderField, DisorderSpec, Placement};
use crate::error::{Error, Result};
use crate::lattice::{self, LatticeParams, PathAddress, SubgraphAddress};
use crate::population::Recursion;
use rand::Rng;
use serde::Serialize;

/// Depth budget for exact evaluation; `(2,2)` at depth 14 is `≈ 2.7·10^8` sites.
pub const DEFAULT_DEPTH_BUDGET: usize = 14;

/// Neumaier-compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionResult {
    pub w: f64,
    pub log_w: f64,
    /// `log Z_n = log W_n + log 𝔼[Z_n]`, with `log 𝔼[Z_n] = λ(β)·(sites per path)`.
    pub log_z: f64,
    pub n: usize,
    pub beta: f64,
    pub seed: u64,
}

fn check_budget(depth: usize, budget: usize) -> Result<()> {
    if depth > budget {
        Err(Error::DepthTooLarge { depth, budget })
    } else {
        Ok(())
    }
}

fn require(field: &DisorderField, placement: Placement) -> Result<()> {
    if field.placement() != placement {
        return Err(Error::AddressMismatch(format!("field placement is {:?}, need {:?}", field.placement(), placement)));
    }
    Ok(())
}

/// `W(β; g)` by depth-first recursion over the vertex field.
pub fn w_recursive(field: &DisorderField, beta: f64, g: &SubgraphAddress) -> Result<f64> {
    w_recursive_with_budget(field, beta, g, DEFAULT_DEPTH_BUDGET)
}

pub fn w_recursive_with_budget(field: &DisorderField, beta: f64, g: &SubgraphAddress, budget: usize) -> Result<f64> {
    require(field, Placement::Vertices)?;
    if g.lattice_depth() != field.depth() {
        return Err(Error::AddressMismatch("copy and field have different lattice depths".into()));
    }
    check_budget(g.depth(), budget)?;
    let lambda = field.spec().lambda(beta)?;
    let params = *field.params();
    let rank = g.word().rank(&params)?;
    Ok(w_rec(field, &params, beta, lambda, g.word().len(), rank, g.depth()))
}

fn w_rec(field: &DisorderField, p: &LatticeParams, beta: f64, lambda: f64, len: usize, rank: u128, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let (b, s) = (p.b(), p.s());
    let mut acc = CompensatedSum::default();
    for i in 1..=b {
        let mut prod = 1.0;
        for j in 1..=s {
            let child = rank * p.bs() as u128 + ((i - 1) * s + (j - 1)) as u128;
            prod *= w_rec(field, p, beta, lambda, len + 1, child, k - 1);
            if j < s {
                let key = field.vertex_key_from_parts(len + 1, rank, i, j);
                prod *= (beta * field.value_by_key(key) - lambda).exp();
            }
        }
        acc.add(prod);
    }
    acc.value() / b as f64
}

/// `W_n(β)` over the whole lattice with provenance.
pub fn partition(field: &DisorderField, beta: f64) -> Result<PartitionResult> {
    let n = field.depth();
    let (w, sites) = match field.placement() {
        Placement::Vertices => (
            w_recursive(field, beta, &SubgraphAddress::root(n))?,
            (field.params().s() as f64).powi(n as i32) - 1.0,
        ),
        Placement::Edges => (
            w_edge_recursive(field, beta, &SubgraphAddress::root(n))?,
            (field.params().s() as f64).powi(n as i32),
        ),
    };
    let log_w = w.ln();
    Ok(PartitionResult { w, log_w, log_z: log_w + field.spec().lambda(beta)? * sites, n, beta, seed: field.seed() })
}

/// `(1/|Γ_n|) Σ_p Π_{a∈p} E_a(β)` by explicit enumeration.
pub fn w_enumerate(field: &DisorderField, beta: f64, cap: u64) -> Result<f64> {
    require(field, Placement::Vertices)?;
    let lambda = field.spec().lambda(beta)?;
    let params = field.params();
    let paths = lattice::enumerate_paths(params, field.depth(), cap)?;
    let mut acc = CompensatedSum::default();
    for p in &paths {
        let mut prod = 1.0;
        for a in &p.vertices {
            prod *= (beta * field.vertex_value(a)? - lambda).exp();
        }
        acc.add(prod);
    }
    Ok(acc.value() / paths.len() as f64)
}

/// Edge-model `W(β; g)`: `W(g) = (1/b) Σ_i Π_j W(g×(i,j))`, leaves `E(β; a)`.
pub fn w_edge_recursive(field: &DisorderField, beta: f64, g: &SubgraphAddress) -> Result<f64> {
    require(field, Placement::Edges)?;
    if g.lattice_depth() != field.depth() {
        return Err(Error::AddressMismatch("copy and field have different lattice depths".into()));
    }
    check_budget(g.depth(), DEFAULT_DEPTH_BUDGET)?;
    let lambda = field.spec().lambda(beta)?;
    let params = *field.params();
    fn rec(field: &DisorderField, p: &LatticeParams, beta: f64, lambda: f64, rank: u128, k: usize) -> f64 {
        if k == 0 {
            return (beta * field.value_by_key(rank) - lambda).exp();
        }
        let mut acc = CompensatedSum::default();
        for i in 0..p.b() {
            let mut prod = 1.0;
            for j in 0..p.s() {
                prod *= rec(field, p, beta, lambda, rank * p.bs() as u128 + (i * p.s() + j) as u128, k - 1);
            }
            acc.add(prod);
        }
        acc.value() / p.b() as f64
    }
    Ok(rec(field, &params, beta, lambda, g.word().rank(&params)?, g.depth()))
}

/// Edge-model enumeration oracle.
pub fn w_edge_enumerate(field: &DisorderField, beta: f64, cap: u64) -> Result<f64> {
    require(field, Placement::Edges)?;
    let lambda = field.spec().lambda(beta)?;
    let params = field.params();
    let paths = lattice::enumerate_paths(params, field.depth(), cap)?;
    let mut acc = CompensatedSum::default();
    for p in &paths {
        let mut prod = 1.0;
        for e in p.path.edges(params) {
            prod *= (beta * field.edge_value(&e)? - lambda).exp();
        }
        acc.add(prod);
    }
    Ok(acc.value() / paths.len() as f64)
}

/// Cached `W(g)` for every copy `g` of every depth, stored level by level in
/// rank order. Level `k` holds `(bs)^{n−k}` values.
#[derive(Clone, Debug)]
pub struct WTree {
    params: LatticeParams,
    n: usize,
    beta: f64,
    /// `log E` of every vertex, stored per generation in key order.
    log_e: Vec<Vec<f64>>,
    levels: Vec<Vec<f64>>,
}

impl WTree {
    pub fn build(field: &DisorderField, beta: f64) -> Result<Self> {
        require(field, Placement::Vertices)?;
        let n = field.depth();
        check_budget(n, DEFAULT_DEPTH_BUDGET)?;
        let p = *field.params();
        let lambda = field.spec().lambda(beta)?;
        let bs = p.bs();
        let per_copy = p.interior_per_copy();
        let mut log_e = Vec::with_capacity(n);
        let mut copies = 1usize;
        for gen in 1..=n {
            let mut v = Vec::with_capacity(copies * per_copy);
            for rank in 0..copies as u128 {
                for i in 1..=p.b() {
                    for j in 1..p.s() {
                        let key = field.vertex_key_from_parts(gen, rank, i, j);
                        v.push(beta * field.value_by_key(key) - lambda);
                    }
                }
            }
            log_e.push(v);
            copies *= bs;
        }
        let mut levels = vec![vec![1.0; copies]];
        for k in 1..=n {
            let below = &levels[k - 1];
            let count = below.len() / bs;
            let gen = n - k + 1;
            let mut cur = Vec::with_capacity(count);
            for r in 0..count {
                let mut acc = CompensatedSum::default();
                for i in 0..p.b() as usize {
                    let mut prod = 1.0;
                    for j in 0..p.s() as usize {
                        prod *= below[r * bs + i * p.s() as usize + j];
                        if j + 1 < p.s() as usize {
                            prod *= log_e[gen - 1][(r * p.b() as usize + i) * (p.s() as usize - 1) + j].exp();
                        }
                    }
                    acc.add(prod);
                }
                cur.push(acc.value() / p.b() as f64);
            }
            levels.push(cur);
        }
        Ok(Self { params: p, n, beta, log_e, levels })
    }

    pub fn w(&self) -> f64 {
        self.levels[self.n][0]
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Cached `W(g)`.
    pub fn w_at(&self, g: &SubgraphAddress) -> Result<f64> {
        let r = g.word().rank(&self.params)? as usize;
        Ok(self.levels[g.depth()][r])
    }

    /// Log of the unnormalized weight of branch `i` (0-based) at the copy of
    /// depth `k ≥ 1` with rank `r`.
    fn log_branch(&self, k: usize, r: usize, i: usize) -> f64 {
        let p = &self.params;
        let (s, bs) = (p.s() as usize, p.bs());
        let gen = self.n - k + 1;
        let mut lw = 0.0;
        for j in 0..s {
            lw += self.levels[k - 1][r * bs + i * s + j].ln();
            if j + 1 < s {
                lw += self.log_e[gen - 1][(r * p.b() as usize + i) * (s - 1) + j];
            }
        }
        lw
    }

    /// Branch probabilities at a copy.
    pub fn branch_probabilities(&self, k: usize, r: usize) -> Vec<f64> {
        let logs: Vec<f64> = (0..self.params.b() as usize).map(|i| self.log_branch(k, r, i)).collect();
        let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect()
    }
}

#[derive(Clone, Debug)]
pub struct GibbsPathSample {
    pub path: PathAddress,
    /// Branch probabilities used at each visited copy, in preorder.
    pub weight_trace: Vec<Vec<f64>>,
}

/// Exact draw from the polymer measure `μ_{β,n}`: top-down branch choices with
/// probabilities proportional to `Π_j W(g×(i,j)) Π_j E(g⋄(i,j))`.
pub fn gibbs_sample_path<R: Rng + ?Sized>(tree: &WTree, rng: &mut R) -> GibbsPathSample {
    let mut choices = Vec::new();
    let mut trace = Vec::new();
    fn rec<R: Rng + ?Sized>(t: &WTree, k: usize, r: usize, rng: &mut R, ch: &mut Vec<u32>, tr: &mut Vec<Vec<f64>>) {
        if k == 0 {
            return;
        }
        let probs = t.branch_probabilities(k, r);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        ch.push(pick as u32 + 1);
        tr.push(probs);
        let s = t.params.s() as usize;
        for j in 0..s {
            rec(t, k - 1, r * t.params.bs() + pick * s + j, rng, ch, tr);
        }
    }
    rec(tree, tree.n, 0, rng, &mut choices, &mut trace);
    GibbsPathSample {
        path: PathAddress::new(&tree.params, tree.n, choices).expect("sampler emits complete paths"),
        weight_trace: trace,
    }
}

/// Distributional recursion for `W_n` at several inverse temperatures on a
/// shared disorder stream, for exact trees and pools.
#[derive(Clone, Debug)]
pub struct WStream<const K: usize> {
    params: LatticeParams,
    spec: DisorderSpec,
    betas: [f64; K],
    lambdas: [f64; K],
}

impl<const K: usize> WStream<K> {
    pub fn new(params: LatticeParams, spec: DisorderSpec, betas: [f64; K]) -> Result<Self> {
        let mut lambdas = [0.0; K];
        for (l, &b) in lambdas.iter_mut().zip(&betas) {
            *l = spec.lambda(b)?;
        }
        Ok(Self { params, spec, betas, lambdas })
    }
}

impl<const K: usize> WStream<K> {
    /// One exact draw of `W_depth` at every inverse temperature, equal in law
    /// to [`population::sample_tree`] on this recursion but faster: level-one
    /// copies are evaluated inline, and for gaussian disorder the `s−1`
    /// interior values of a branch are drawn as their sum `√(s−1)·ξ`.
    pub fn sample_exact<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> [f64; K] {
        let consts = self.branch_constants();
        self.exact_rec(depth, &consts, rng)
    }

    fn branch_constants(&self) -> [f64; K] {
        let interior = (self.params.s() - 1) as f64;
        self.lambdas.map(|l| interior * l)
    }

    #[inline]
    fn branch_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let s = self.params.s();
        match self.spec {
            DisorderSpec::StandardGaussian => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                if s == 2 {
                    z
                } else {
                    ((s - 1) as f64).sqrt() * z
                }
            }
            _ => (1..s).map(|_| self.spec.sample(rng)).sum(),
        }
    }

    fn exact_rec<R: Rng + ?Sized>(&self, k: usize, consts: &[f64; K], rng: &mut R) -> [f64; K] {
        if k == 0 {
            return [1.0; K];
        }
        let (b, s) = (self.params.b() as usize, self.params.s() as usize);
        let mut out = [0.0; K];
        for _ in 0..b {
            let omega = self.branch_noise(rng);
            let mut prod = [0.0; K];
            for t in 0..K {
                prod[t] = (self.betas[t] * omega - consts[t]).exp();
            }
            if k > 1 {
                for _ in 0..s {
                    let c = self.exact_rec(k - 1, consts, rng);
                    for t in 0..K {
                        prod[t] *= c[t];
                    }
                }
            }
            for t in 0..K {
                out[t] += prod[t];
            }
        }
        let inv_b = 1.0 / b as f64;
        for v in out.iter_mut() {
            *v *= inv_b;
        }
        out
    }
}

impl<const K: usize> Recursion for WStream<K> {
    type State = [f64; K];

    fn leaf<R: Rng + ?Sized>(&self, _: &mut R) -> [f64; K] {
        [1.0; K]
    }

    fn combine<R: Rng + ?Sized>(&self, _: usize, c: &[[f64; K]], rng: &mut R) -> [f64; K] {
        let (b, s) = (self.params.b() as usize, self.params.s() as usize);
        let mut out = [0.0; K];
        let interior = (s - 1) as f64;
        for i in 0..b {
            let mut omega = 0.0;
            for _ in 1..s {
                omega += self.spec.sample(rng);
            }
            for k in 0..K {
                let mut prod = (self.betas[k] * omega - interior * self.lambdas[k]).exp();
                for j in 0..s {
                    prod *= c[i * s + j][k];
                }
                out[k] += prod;
            }
        }
        for v in out.iter_mut() {
            *v /= b as f64;
        }
        out
    }

    fn recenter(&self, pool: &mut [[f64; K]]) {
        for k in 0..K {
            let mean = pool.iter().map(|v| v[k]).sum::<f64>() / pool.len() as f64;
            for v in pool.iter_mut() {
                v[k] /= mean;
            }
        }
    }
}

/// Edge-model recursion: leaves `E(β)`, no interior factors.
#[derive(Clone, Debug)]
pub struct WEdgeStream {
    params: LatticeParams,
    spec: DisorderSpec,
    beta: f64,
    lambda: f64,
}

impl WEdgeStream {
    pub fn new(params: LatticeParams, spec: DisorderSpec, beta: f64) -> Result<Self> {
        let lambda = spec.lambda(beta)?;
        Ok(Self { params, spec, beta, lambda })
    }
}

impl Recursion for WEdgeStream {
    type State = f64;

    fn leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        (self.beta * self.spec.sample(rng) - self.lambda).exp()
    }

    fn combine<R: Rng + ?Sized>(&self, _: usize, c: &[f64], _: &mut R) -> f64 {
        let s = self.params.s() as usize;
        c.chunks(s).map(|br| br.iter().product::<f64>()).sum::<f64>() / self.params.b() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::DEFAULT_PATH_CAP;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vfield(b: u32, s: u32, n: usize, seed: u64) -> DisorderField {
        DisorderField::new(LatticeParams::new(b, s).unwrap(), n, seed, Placement::Vertices, DisorderSpec::StandardGaussian).unwrap()
    }

    #[test]
    fn zero_beta_gives_one() {
        let f = vfield(2, 3, 3, 5);
        assert_eq!(w_recursive(&f, 0.0, &SubgraphAddress::root(3)).unwrap(), 1.0);
        assert_eq!(w_enumerate(&f, 0.0, DEFAULT_PATH_CAP).unwrap(), 1.0);
    }

    #[test]
    fn recursion_matches_enumeration() {
        let f = vfield(2, 2, 2, 9);
        let r = w_recursive(&f, 0.7, &SubgraphAddress::root(2)).unwrap();
        let e = w_enumerate(&f, 0.7, DEFAULT_PATH_CAP).unwrap();
        assert!((r - e).abs() < 1e-12);
    }

    #[test]
    fn degenerate_single_segment() {
        let f = vfield(2, 1, 1, 1);
        assert_eq!(w_recursive(&f, 1.3, &SubgraphAddress::root(1)).unwrap(), 1.0);
        assert_eq!(w_enumerate(&f, 1.3, DEFAULT_PATH_CAP).unwrap(), 1.0);
    }

    #[test]
    fn tree_cache_matches_recursion() {
        let f = vfield(2, 3, 4, 2);
        let t = WTree::build(&f, 0.4).unwrap();
        let p = *f.params();
        let g = SubgraphAddress::root(4).child(&p, 2, 3);
        assert!((t.w() - w_recursive(&f, 0.4, &SubgraphAddress::root(4)).unwrap()).abs() < 1e-12);
        assert!((t.w_at(&g).unwrap() - w_recursive(&f, 0.4, &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn edge_model_by_hand() {
        let p = LatticeParams::new(2, 2).unwrap();
        let f = DisorderField::new(p, 1, 4, Placement::Edges, DisorderSpec::StandardGaussian).unwrap();
        let beta = 0.6;
        let e = |key: u128| (beta * f.value_by_key(key) - 0.18f64).exp();
        let hand = (e(0) * e(1) + e(2) * e(3)) / 2.0;
        let r = w_edge_recursive(&f, beta, &SubgraphAddress::root(1)).unwrap();
        assert!((r - hand).abs() < 1e-14);
        assert_eq!(w_edge_recursive(&f, 0.0, &SubgraphAddress::root(1)).unwrap(), 1.0);
    }

    #[test]
    fn budget_and_placement_errors() {
        let f = vfield(2, 2, 3, 1);
        assert!(matches!(
            w_recursive_with_budget(&f, 0.1, &SubgraphAddress::root(3), 2),
            Err(Error::DepthTooLarge { .. })
        ));
        assert!(w_edge_recursive(&f, 0.1, &SubgraphAddress::root(3)).is_err());
    }

    #[test]
    fn gibbs_at_one_level_uses_branch_weights() {
        let f = vfield(2, 2, 1, 3);
        let t = WTree::build(&f, 1.0).unwrap();
        let p = *f.params();
        let verts = SubgraphAddress::root(1).interior_vertices(&p);
        let w1 = f.spec().weight(1.0, f.vertex_value(&verts[0]).unwrap()).unwrap();
        let w2 = f.spec().weight(1.0, f.vertex_value(&verts[1]).unwrap()).unwrap();
        let probs = t.branch_probabilities(1, 0);
        assert!((probs[0] - w1 / (w1 + w2)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = gibbs_sample_path(&t, &mut rng);
        assert_eq!(s.weight_trace.len(), 1);
        assert!((s.weight_trace[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partition_log_z_consistent() {
        let f = vfield(2, 2, 3, 8);
        let r = partition(&f, 0.3).unwrap();
        assert!((r.log_z - (r.w.ln() + 0.045 * 7.0)).abs() < 1e-12);
    }
}
