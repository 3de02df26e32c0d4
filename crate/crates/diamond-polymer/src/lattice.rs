//! Diamond hierarchical lattice: parameters, address arithmetic, counting.
//!
//! `D_n` is never materialized. Edges of `D_n` are words of length `n` over
//! the alphabet `{1..b} × {1..s}`; the first letter picks the top-level branch
//! and segment. A copy `g ∈ G_{k,n}` of `D_k` inside `D_n` is a word of length
//! `n − k`. Its interior vertices `g ⋄ (i, j)`, `j ≤ s − 1`, have generation
//! `n − k + 1`, so generation 1 holds the `b(s − 1)` vertices of the top copy
//! of `D_1`.
//!
//! Generation convention: a copy `g ∈ G_{k,n}` contains exactly the vertices
//! of global generation `j ∈ (n − k, n]`.

use crate::error::{Error, Result};
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Pow, Zero};
use serde::{Deserialize, Serialize};

/// Branching number `b ≥ 2` and segment number `s ≥ 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct LatticeParams {
    b: u32,
    s: u32,
}

#[derive(Deserialize)]
struct RawParams {
    b: u32,
    s: u32,
}

impl TryFrom<RawParams> for LatticeParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        LatticeParams::new(r.b, r.s)
    }
}

impl LatticeParams {
    pub fn new(b: u32, s: u32) -> Result<Self> {
        if b < 2 {
            return Err(Error::InvalidParams(format!("b = {b}, need b >= 2")));
        }
        if s < 1 {
            return Err(Error::InvalidParams(format!("s = {s}, need s >= 1")));
        }
        if (b as u64) * (s as u64) > u16::MAX as u64 {
            return Err(Error::InvalidParams(format!("b*s = {} too large", b * s)));
        }
        Ok(Self { b, s })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    /// Number of children `b·s` of each copy of `D_1`.
    pub fn bs(&self) -> usize {
        (self.b * self.s) as usize
    }

    /// Interior vertices `b(s − 1)` of one copy of `D_1`.
    pub fn interior_per_copy(&self) -> usize {
        (self.b * (self.s - 1)) as usize
    }

    fn letter(&self, i: u32, j: u32) -> u16 {
        debug_assert!((1..=self.b).contains(&i) && (1..=self.s).contains(&j));
        ((i - 1) * self.s + (j - 1)) as u16
    }

    fn unletter(&self, c: u16) -> (u32, u32) {
        let c = c as u32;
        (c / self.s + 1, c % self.s + 1)
    }
}

/// A word of `(i, j)` letters, one per level, packed as `(i−1)·s + (j−1)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word {
    letters: Vec<u16>,
}

impl Word {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs(params: &LatticeParams, pairs: &[(u32, u32)]) -> Result<Self> {
        let mut letters = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            if !(1..=params.b).contains(&i) || !(1..=params.s).contains(&j) {
                return Err(Error::AddressMismatch(format!(
                    "pair ({i},{j}) outside 1..={} x 1..={}",
                    params.b, params.s
                )));
            }
            letters.push(params.letter(i, j));
        }
        Ok(Self { letters })
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn pairs(&self, params: &LatticeParams) -> Vec<(u32, u32)> {
        self.letters.iter().map(|&c| params.unletter(c)).collect()
    }

    pub fn letters(&self) -> &[u16] {
        &self.letters
    }

    fn extended(&self, letter: u16) -> Self {
        let mut letters = Vec::with_capacity(self.letters.len() + 1);
        letters.extend_from_slice(&self.letters);
        letters.push(letter);
        Self { letters }
    }

    /// Mixed-radix rank in `[0, (bs)^len)`, most significant letter first.
    pub fn rank(&self, params: &LatticeParams) -> Result<u128> {
        let radix = params.bs() as u128;
        let mut r: u128 = 0;
        for &c in &self.letters {
            r = r
                .checked_mul(radix)
                .and_then(|v| v.checked_add(c as u128))
                .ok_or(Error::AddressCapacity { depth: self.len(), bits: 128 })?;
        }
        Ok(r)
    }

    pub fn from_rank(params: &LatticeParams, mut rank: u128, len: usize) -> Result<Self> {
        let radix = params.bs() as u128;
        let mut letters = vec![0u16; len];
        for slot in letters.iter_mut().rev() {
            *slot = (rank % radix) as u16;
            rank /= radix;
        }
        if rank != 0 {
            return Err(Error::AddressMismatch("rank exceeds word capacity".into()));
        }
        Ok(Self { letters })
    }
}

/// An edge of `D_n`: a word of length `n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EdgeAddress {
    pub word: Word,
}

/// A copy `g ∈ G_{k,n}`: a word of length `n − k` inside `D_n`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubgraphAddress {
    n: usize,
    word: Word,
}

impl SubgraphAddress {
    /// The whole lattice `D_n` (empty word).
    pub fn root(n: usize) -> Self {
        Self { n, word: Word::empty() }
    }

    pub fn new(n: usize, word: Word) -> Result<Self> {
        if word.len() > n {
            return Err(Error::AddressMismatch(format!(
                "word length {} exceeds lattice depth {n}",
                word.len()
            )));
        }
        Ok(Self { n, word })
    }

    pub fn lattice_depth(&self) -> usize {
        self.n
    }

    /// `k` such that this copy is a `D_k`.
    pub fn depth(&self) -> usize {
        self.n - self.word.len()
    }

    pub fn word(&self) -> &Word {
        &self.word
    }

    /// `g × (i, j)`.
    pub fn child(&self, params: &LatticeParams, i: u32, j: u32) -> Self {
        assert!(self.depth() > 0, "a depth-0 copy has no children");
        Self { n: self.n, word: self.word.extended(params.letter(i, j)) }
    }

    /// The `b·s` children, branch-major (`i` outer, `j` inner). Empty at depth 0.
    pub fn children(&self, params: &LatticeParams) -> Vec<SubgraphAddress> {
        if self.depth() == 0 {
            return Vec::new();
        }
        (0..params.bs() as u16)
            .map(|c| Self { n: self.n, word: self.word.extended(c) })
            .collect()
    }

    /// The `b(s − 1)` interior vertices `g ⋄ (i, j)`. Empty at depth 0.
    pub fn interior_vertices(&self, params: &LatticeParams) -> Vec<VertexAddress> {
        if self.depth() == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(params.interior_per_copy());
        for i in 1..=params.b {
            for j in 1..params.s {
                out.push(VertexAddress { parent: self.clone(), branch: i, slot: j });
            }
        }
        out
    }

    /// All vertices inside this copy, at every nested level.
    pub fn vertices_within(&self, params: &LatticeParams) -> Vec<VertexAddress> {
        let mut out = self.interior_vertices(params);
        for c in self.children(params) {
            out.extend(c.vertices_within(params));
        }
        out
    }

    /// As an edge address (only valid at depth 0).
    pub fn as_edge(&self) -> Option<EdgeAddress> {
        (self.depth() == 0).then(|| EdgeAddress { word: self.word.clone() })
    }
}

/// An interior vertex `g ⋄ (i, j)` with `1 ≤ i ≤ b`, `1 ≤ j ≤ s − 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexAddress {
    pub parent: SubgraphAddress,
    pub branch: u32,
    pub slot: u32,
}

impl VertexAddress {
    /// `𝔤(a) = n − k + 1` for a parent copy in `G_{k,n}`.
    pub fn generation(&self) -> usize {
        self.parent.word.len() + 1
    }
}

fn pow_u128(base: u128, exp: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Number of generation-`k` vertices as `u128`, or `None` on overflow.
fn generation_count_u128(params: &LatticeParams, k: usize) -> Option<u128> {
    if k == 0 {
        return Some(0);
    }
    let bk = pow_u128(params.b as u128, k)?;
    let sk = pow_u128(params.s as u128, k - 1)?;
    bk.checked_mul(sk)?.checked_mul((params.s - 1) as u128)
}

/// Injective 128-bit key of a vertex: vertices are ranked by generation, then
/// by parent word, branch and slot.
pub fn vertex_key(params: &LatticeParams, a: &VertexAddress) -> Result<u128> {
    let gen = a.generation();
    let cap = || Error::AddressCapacity { depth: gen, bits: 128 };
    if params.s < 2 || !(1..=params.b).contains(&a.branch) || !(1..params.s).contains(&a.slot) {
        return Err(Error::AddressMismatch(format!(
            "branch {} slot {} invalid for b={}, s={}",
            a.branch, a.slot, params.b, params.s
        )));
    }
    let mut offset: u128 = 0;
    for g in 1..gen {
        offset = offset.checked_add(generation_count_u128(params, g).ok_or_else(cap)?).ok_or_else(cap)?;
    }
    let local = a
        .parent
        .word
        .rank(params)?
        .checked_mul(params.b as u128)
        .and_then(|v| v.checked_add((a.branch - 1) as u128))
        .and_then(|v| v.checked_mul((params.s - 1) as u128))
        .and_then(|v| v.checked_add((a.slot - 1) as u128))
        .ok_or_else(cap)?;
    // The top generation must itself fit so that keys of deeper vertices stay
    // distinct from this range.
    generation_count_u128(params, gen).ok_or_else(cap)?;
    offset.checked_add(local).ok_or_else(cap)
}

/// Inverse of [`vertex_key`] inside `D_n`.
pub fn vertex_from_key(params: &LatticeParams, n: usize, mut key: u128) -> Result<VertexAddress> {
    if params.s < 2 {
        return Err(Error::AddressMismatch("s = 1 lattices have no vertices".into()));
    }
    for gen in 1..=n {
        let count = generation_count_u128(params, gen)
            .ok_or(Error::AddressCapacity { depth: gen, bits: 128 })?;
        if key < count {
            let slot = (key % (params.s - 1) as u128) as u32 + 1;
            key /= (params.s - 1) as u128;
            let branch = (key % params.b as u128) as u32 + 1;
            key /= params.b as u128;
            let word = Word::from_rank(params, key, gen - 1)?;
            return Ok(VertexAddress { parent: SubgraphAddress { n, word }, branch, slot });
        }
        key -= count;
    }
    Err(Error::AddressMismatch(format!("key beyond the vertices of D_{n}")))
}

/// Injective key of an edge of `D_n` (its word rank).
pub fn edge_key(params: &LatticeParams, e: &EdgeAddress) -> Result<u128> {
    e.word.rank(params)
}

pub fn edge_from_key(params: &LatticeParams, n: usize, key: u128) -> Result<EdgeAddress> {
    Ok(EdgeAddress { word: Word::from_rank(params, key, n)? })
}

/// Injective key of any copy `g ∈ ∪_k G_{k,n}`, offset by word length.
pub fn subgraph_key(params: &LatticeParams, g: &SubgraphAddress) -> Result<u128> {
    let len = g.word.len();
    let cap = || Error::AddressCapacity { depth: len, bits: 128 };
    let mut offset: u128 = 0;
    for l in 0..len {
        offset = offset
            .checked_add(pow_u128(params.bs() as u128, l).ok_or_else(cap)?)
            .ok_or_else(cap)?;
    }
    offset.checked_add(g.word.rank(params)?).ok_or_else(cap)
}

pub fn subgraph_from_key(params: &LatticeParams, n: usize, mut key: u128) -> Result<SubgraphAddress> {
    for len in 0..=n {
        let count = pow_u128(params.bs() as u128, len)
            .ok_or(Error::AddressCapacity { depth: len, bits: 128 })?;
        if key < count {
            return Ok(SubgraphAddress { n, word: Word::from_rank(params, key, len)? });
        }
        key -= count;
    }
    Err(Error::AddressMismatch(format!("key beyond the copies inside D_{n}")))
}

/// `|Γ_n| = b^{(s^n − 1)/(s − 1)}` (exponent `n` when `s = 1`).
pub fn count_paths(params: &LatticeParams, n: usize) -> BigUint {
    BigUint::from(params.b).pow(&path_choice_count(params, n))
}

/// Number of copies of `D_1` visited by one path: `(s^n − 1)/(s − 1)`.
pub fn path_choice_count(params: &LatticeParams, n: usize) -> BigUint {
    let s = BigUint::from(params.s);
    let mut total = BigUint::zero();
    let mut term = BigUint::one();
    for _ in 0..n {
        total += &term;
        term *= &s;
    }
    total
}

/// `|V_k| = b^k s^{k−1} (s − 1)` for `k ≥ 1`.
pub fn count_generation_vertices(params: &LatticeParams, k: usize) -> BigUint {
    assert!(k >= 1, "generations start at 1");
    BigUint::from(params.b).pow(k as u32)
        * BigUint::from(params.s).pow((k - 1) as u32)
        * BigUint::from(params.s - 1)
}

/// Total interior vertex count of `D_n`.
pub fn count_vertices(params: &LatticeParams, n: usize) -> BigUint {
    (1..=n).map(|k| count_generation_vertices(params, k)).sum()
}

/// `P(a) = b^{−𝔤(a)}`: probability that a uniform path visits `a`.
pub fn vertex_on_path_probability(params: &LatticeParams, a: &VertexAddress) -> f64 {
    (params.b as f64).powi(-(a.generation() as i32))
}

pub fn vertex_on_path_probability_exact(params: &LatticeParams, a: &VertexAddress) -> BigRational {
    BigRational::new(
        1.into(),
        num_bigint::BigInt::from(params.b).pow(a.generation() as u32),
    )
}

/// `Σ_{a ∈ D_n} P(a)² = Σ_{k=1}^n ((s−1)/s)(s/b)^k`.
pub fn first_order_overlap_sum(params: &LatticeParams, n: usize) -> f64 {
    let ratio = params.s as f64 / params.b as f64;
    let c = (params.s - 1) as f64 / params.s as f64;
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 0..n {
        term *= ratio;
        sum += c * term;
    }
    sum
}

pub fn first_order_overlap_sum_exact(params: &LatticeParams, n: usize) -> BigRational {
    let ratio = BigRational::new(params.s.into(), params.b.into());
    let c = BigRational::new((params.s - 1).into(), params.s.into());
    let mut term = BigRational::one();
    let mut sum = BigRational::zero();
    for _ in 0..n {
        term *= &ratio;
        sum += &c * &term;
    }
    sum
}

/// A directed path, stored as its branch choices in preorder over the visited
/// copies of `D_1`: the choice in the top copy, then the full choice sequence
/// of segment 1's sub-path, then segment 2's, and so on.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PathAddress {
    n: usize,
    choices: Vec<u32>,
}

impl PathAddress {
    pub fn new(params: &LatticeParams, n: usize, choices: Vec<u32>) -> Result<Self> {
        let expected = path_choice_count(params, n);
        if BigUint::from(choices.len()) != expected {
            return Err(Error::AddressMismatch(format!(
                "{} choices, a path in D_{n} needs {expected}",
                choices.len()
            )));
        }
        if choices.iter().any(|&c| c < 1 || c > params.b) {
            return Err(Error::AddressMismatch("branch choice outside 1..=b".into()));
        }
        Ok(Self { n, choices })
    }

    pub fn depth(&self) -> usize {
        self.n
    }

    pub fn choices(&self) -> &[u32] {
        &self.choices
    }

    /// Visits each copy of `D_1` on the path with its chosen branch.
    fn walk(&self, params: &LatticeParams, mut visit: impl FnMut(&SubgraphAddress, u32)) {
        fn rec(
            params: &LatticeParams,
            g: SubgraphAddress,
            choices: &[u32],
            pos: &mut usize,
            visit: &mut dyn FnMut(&SubgraphAddress, u32),
        ) {
            if g.depth() == 0 {
                return;
            }
            let i = choices[*pos];
            *pos += 1;
            visit(&g, i);
            for j in 1..=params.s {
                rec(params, g.child(params, i, j), choices, pos, visit);
            }
        }
        let mut pos = 0;
        rec(params, SubgraphAddress::root(self.n), &self.choices, &mut pos, &mut visit);
    }

    /// The `s^n − 1` interior vertices on the path.
    pub fn vertices(&self, params: &LatticeParams) -> Vec<VertexAddress> {
        let mut out = Vec::new();
        self.walk(params, |g, i| {
            for j in 1..params.s {
                out.push(VertexAddress { parent: g.clone(), branch: i, slot: j });
            }
        });
        out
    }

    /// The `s^n` edges on the path, in order from root `A` to root `B`.
    pub fn edges(&self, params: &LatticeParams) -> Vec<EdgeAddress> {
        fn rec(params: &LatticeParams, g: SubgraphAddress, choices: &[u32], pos: &mut usize, out: &mut Vec<EdgeAddress>) {
            if g.depth() == 0 {
                out.push(EdgeAddress { word: g.word });
                return;
            }
            let i = choices[*pos];
            *pos += 1;
            for j in 1..=params.s {
                rec(params, g.child(params, i, j), choices, pos, out);
            }
        }
        let mut out = Vec::new();
        let mut pos = 0;
        rec(params, SubgraphAddress::root(self.n), &self.choices, &mut pos, &mut out);
        out
    }
}

/// A path together with its materialized interior vertex set.
#[derive(Clone, Debug)]
pub struct EnumeratedPath {
    pub path: PathAddress,
    pub vertices: Vec<VertexAddress>,
}

pub const DEFAULT_PATH_CAP: u64 = 1_000_000;

/// Every path of `D_n`, or `CapExceeded` when `|Γ_n| > cap`.
pub fn enumerate_paths(params: &LatticeParams, n: usize, cap: u64) -> Result<Vec<EnumeratedPath>> {
    let count = count_paths(params, n);
    if count > BigUint::from(cap) {
        return Err(Error::CapExceeded { count: count.to_string(), cap });
    }
    fn rec(params: &LatticeParams, depth: usize) -> Vec<Vec<u32>> {
        if depth == 0 {
            return vec![Vec::new()];
        }
        let sub = rec(params, depth - 1);
        let mut out = Vec::new();
        for i in 1..=params.b {
            // Cartesian product over the s segments.
            let mut partial: Vec<Vec<u32>> = vec![vec![i]];
            for _ in 0..params.s {
                let mut next = Vec::with_capacity(partial.len() * sub.len());
                for p in &partial {
                    for q in &sub {
                        let mut v = p.clone();
                        v.extend_from_slice(q);
                        next.push(v);
                    }
                }
                partial = next;
            }
            out.extend(partial);
        }
        out
    }
    Ok(rec(params, n)
        .into_iter()
        .map(|choices| {
            let path = PathAddress { n, choices };
            let vertices = path.vertices(params);
            EnumeratedPath { path, vertices }
        })
        .collect())
}

/// All copies in `G_{k,n}`, in rank order.
pub fn subgraphs_at_depth(params: &LatticeParams, n: usize, k: usize) -> Result<Vec<SubgraphAddress>> {
    assert!(k <= n);
    let len = n - k;
    let count = pow_u128(params.bs() as u128, len).ok_or(Error::AddressCapacity { depth: len, bits: 128 })?;
    (0..count)
        .map(|r| Ok(SubgraphAddress { n, word: Word::from_rank(params, r, len)? }))
        .collect()
}

/// All interior vertices of `D_n`, ordered by key.
pub fn all_vertices(params: &LatticeParams, n: usize) -> Result<Vec<VertexAddress>> {
    let mut keyed = SubgraphAddress::root(n)
        .vertices_within(params)
        .into_iter()
        .map(|a| Ok((vertex_key(params, &a)?, a)))
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, a)| a).collect())
}

/// Summary counts for `lattice info`.
#[derive(Debug, Clone, Serialize)]
pub struct LatticeInfo {
    pub b: u32,
    pub s: u32,
    pub n: usize,
    pub edges: String,
    pub vertices: String,
    pub vertices_per_generation: Vec<String>,
    pub paths: String,
    pub vertices_per_path: String,
    pub first_order_overlap_sum: f64,
}

pub fn info(params: &LatticeParams, n: usize) -> LatticeInfo {
    let paths = count_paths(params, n);
    LatticeInfo {
        b: params.b,
        s: params.s,
        n,
        edges: BigUint::from(params.bs()).pow(n as u32).to_string(),
        vertices: count_vertices(params, n).to_string(),
        vertices_per_generation: (1..=n).map(|k| count_generation_vertices(params, k).to_string()).collect(),
        paths: if paths.bits() > 4096 { format!("2^{}", paths.bits() - 1) } else { paths.to_string() },
        vertices_per_path: (BigUint::from(params.s).pow(n as u32) - 1u32).to_string(),
        first_order_overlap_sum: first_order_overlap_sum(params, n),
    }
}
