//! Generic engines for distributional recursions on the diamond lattice.
//!
//! A [`Recursion`] describes how the value on a copy of `D_k` is formed from
//! the `b·s` values on its children plus fresh local noise. Two engines
//! evaluate it:
//!
//! * [`sample_tree`] draws one exact sample by depth-first evaluation of the
//!   full tree, cost `Θ((bs)^depth)`.
//! * [`evolve_pool`] runs population dynamics: a pool of `N` values per level,
//!   each new value built from `b·s` parents drawn uniformly with replacement
//!   from the previous level. This reaches depths far beyond exact trees at
//!   cost `Θ(N·bs·depth)`, at the price of an `O(depth/N)` bias and of
//!   correlations between pool members through shared ancestors.
//!
//! Statistics from pools should use independent pools as batches when an
//! honest standard error is needed.

use crate::lattice::LatticeParams;
use rand::Rng;

pub trait Recursion: Sync {
    type State: Copy + Send + Sync;

    /// Value on a depth-0 copy (an edge).
    fn leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;

    /// Value on a copy of `D_level` from its children, branch-major
    /// (`children[(i−1)·s + (j−1)]`).
    fn combine<R: Rng + ?Sized>(&self, level: usize, children: &[Self::State], rng: &mut R) -> Self::State;

    /// Optional per-level correction applied to a whole pool, e.g. restoring
    /// a known mean. Exact trees never call it.
    fn recenter(&self, _pool: &mut [Self::State]) {}
}

/// One exact draw of the recursion at `depth`.
pub fn sample_tree<Rc: Recursion, R: Rng + ?Sized>(rc: &Rc, params: &LatticeParams, depth: usize, rng: &mut R) -> Rc::State {
    let mut scratch: Vec<Vec<Rc::State>> = (0..depth).map(|_| Vec::with_capacity(params.bs())).collect();
    tree_rec(rc, params.bs(), depth, &mut scratch, rng)
}

fn tree_rec<Rc: Recursion, R: Rng + ?Sized>(
    rc: &Rc,
    bs: usize,
    level: usize,
    scratch: &mut [Vec<Rc::State>],
    rng: &mut R,
) -> Rc::State {
    if level == 0 {
        return rc.leaf(rng);
    }
    let (lower, cur) = scratch.split_at_mut(level - 1);
    let mut buf = std::mem::take(&mut cur[0]);
    buf.clear();
    for _ in 0..bs {
        let v = tree_rec(rc, bs, level - 1, lower, rng);
        buf.push(v);
    }
    let out = rc.combine(level, &buf, rng);
    cur[0] = buf;
    out
}

/// Population dynamics up to `depth`; returns the final pool of `size`
/// values. `observe(level, pool)` sees every level's pool after recentering.
pub fn evolve_pool_observed<Rc: Recursion, R: Rng + ?Sized>(
    rc: &Rc,
    params: &LatticeParams,
    depth: usize,
    size: usize,
    rng: &mut R,
    mut observe: impl FnMut(usize, &[Rc::State]),
) -> Vec<Rc::State> {
    assert!(size > 0, "pool size must be positive");
    let bs = params.bs();
    let mut pool: Vec<Rc::State> = (0..size).map(|_| rc.leaf(rng)).collect();
    observe(0, &pool);
    let mut next: Vec<Rc::State> = Vec::with_capacity(size);
    let mut kids: Vec<Rc::State> = Vec::with_capacity(bs);
    for level in 1..=depth {
        next.clear();
        for _ in 0..size {
            kids.clear();
            for _ in 0..bs {
                kids.push(pool[rng.random_range(0..size)]);
            }
            next.push(rc.combine(level, &kids, rng));
        }
        rc.recenter(&mut next);
        std::mem::swap(&mut pool, &mut next);
        observe(level, &pool);
    }
    pool
}

pub fn evolve_pool<Rc: Recursion, R: Rng + ?Sized>(
    rc: &Rc,
    params: &LatticeParams,
    depth: usize,
    size: usize,
    rng: &mut R,
) -> Vec<Rc::State> {
    evolve_pool_observed(rc, params, depth, size, rng, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Counts leaves: the value on D_k is (bs)^k.
    struct CountLeaves;
    impl Recursion for CountLeaves {
        type State = f64;
        fn leaf<R: Rng + ?Sized>(&self, _: &mut R) -> f64 {
            1.0
        }
        fn combine<R: Rng + ?Sized>(&self, _: usize, c: &[f64], _: &mut R) -> f64 {
            c.iter().sum()
        }
    }

    #[test]
    fn exact_tree_visits_every_leaf() {
        let p = LatticeParams::new(2, 3).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_tree(&CountLeaves, &p, 4, &mut r), 1296.0);
        assert_eq!(sample_tree(&CountLeaves, &p, 0, &mut r), 1.0);
    }

    #[test]
    fn pool_of_deterministic_recursion_is_exact() {
        let p = LatticeParams::new(3, 2).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let mut seen = Vec::new();
        let pool = evolve_pool_observed(&CountLeaves, &p, 3, 10, &mut r, |k, pool| seen.push((k, pool[0])));
        assert!(pool.iter().all(|&v| v == 216.0));
        assert_eq!(seen, vec![(0, 1.0), (1, 6.0), (2, 36.0), (3, 216.0)]);
    }
}
