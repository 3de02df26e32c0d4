use diamond_polymer::lattice::{self, SubgraphAddress, VertexAddress};
use diamond_polymer::LatticeParams;
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use std::collections::{HashMap, HashSet};

const SHAPES: [(u32, u32); 3] = [(2, 2), (2, 3), (3, 2)];

fn p(b: u32, s: u32) -> LatticeParams {
    LatticeParams::new(b, s).unwrap()
}

proptest! {
    #[test]
    fn vertex_keys_round_trip(b in 2u32..5, s in 2u32..5, n in 1usize..6, seed in any::<u64>()) {
        let params = p(b, s);
        let total = lattice::count_vertices(&params, n).to_u128().unwrap();
        let key = (seed as u128) % total;
        let a = lattice::vertex_from_key(&params, n, key).unwrap();
        prop_assert_eq!(lattice::vertex_key(&params, &a).unwrap(), key);
    }

    #[test]
    fn subgraph_keys_round_trip(b in 2u32..5, s in 2u32..5, n in 1usize..6, seed in any::<u64>()) {
        let params = p(b, s);
        let total: u128 = (0..=n).map(|k| (params.bs() as u128).pow(k as u32)).sum();
        let key = (seed as u128) % total;
        let g = lattice::subgraph_from_key(&params, n, key).unwrap();
        prop_assert_eq!(lattice::subgraph_key(&params, &g).unwrap(), key);
    }

    #[test]
    fn edge_keys_round_trip(b in 2u32..5, s in 2u32..5, n in 1usize..6, seed in any::<u64>()) {
        let params = p(b, s);
        let key = (seed as u128) % (params.bs() as u128).pow(n as u32);
        let e = lattice::edge_from_key(&params, n, key).unwrap();
        prop_assert_eq!(lattice::edge_key(&params, &e).unwrap(), key);
    }

    #[test]
    fn children_partition_the_vertices_below(b in 2u32..4, s in 2u32..4, n in 1usize..4) {
        let params = p(b, s);
        let root = SubgraphAddress::root(n);
        let mut seen: HashSet<VertexAddress> = root.interior_vertices(&params).into_iter().collect();
        for c in root.children(&params) {
            for a in c.vertices_within(&params) {
                prop_assert!(seen.insert(a));
            }
        }
        prop_assert_eq!(BigUint::from(seen.len()), lattice::count_vertices(&params, n));
    }
}

#[test]
fn vertex_keys_are_a_bijection_onto_a_range() {
    for (b, s) in SHAPES {
        let params = p(b, s);
        for n in 1..=3 {
            let all = lattice::all_vertices(&params, n).unwrap();
            assert_eq!(BigUint::from(all.len()), lattice::count_vertices(&params, n));
            for (i, a) in all.iter().enumerate() {
                assert_eq!(lattice::vertex_key(&params, a).unwrap(), i as u128);
            }
        }
    }
}

#[test]
fn enumeration_matches_exact_rational_counts() {
    for (b, s) in SHAPES {
        let params = p(b, s);
        let n = 2;
        let paths = lattice::enumerate_paths(&params, n, lattice::DEFAULT_PATH_CAP).unwrap();
        assert_eq!(BigUint::from(paths.len()), lattice::count_paths(&params, n));
        let mut visits: HashMap<VertexAddress, usize> = HashMap::new();
        let mut distinct_paths = HashSet::new();
        for ep in &paths {
            assert_eq!(ep.vertices.len(), (s as usize).pow(n as u32) - 1);
            let unique: HashSet<_> = ep.vertices.iter().collect();
            assert_eq!(unique.len(), ep.vertices.len());
            assert!(distinct_paths.insert(ep.path.clone()));
            for a in &ep.vertices {
                *visits.entry(a.clone()).or_default() += 1;
            }
        }
        let all = lattice::all_vertices(&params, n).unwrap();
        assert_eq!(visits.len(), all.len());
        let total = BigRational::from_integer(paths.len().into());
        let mut overlap = BigRational::zero();
        for a in &all {
            let freq = BigRational::from_integer(visits[a].into()) / &total;
            assert_eq!(freq, lattice::vertex_on_path_probability_exact(&params, a));
            overlap += &freq * &freq;
        }
        assert_eq!(overlap, lattice::first_order_overlap_sum_exact(&params, n));
    }
}

#[test]
fn copies_at_each_depth_cover_the_edges_once() {
    for (b, s) in SHAPES {
        let params = p(b, s);
        let n = 3;
        for k in 0..=n {
            let copies = lattice::subgraphs_at_depth(&params, n, k).unwrap();
            assert_eq!(copies.len(), params.bs().pow((n - k) as u32));
            let keys: HashSet<u128> = copies.iter().map(|g| lattice::subgraph_key(&params, g).unwrap()).collect();
            assert_eq!(keys.len(), copies.len());
        }
        let paths = lattice::enumerate_paths(&params, 2, lattice::DEFAULT_PATH_CAP).unwrap();
        for ep in paths.iter().take(20) {
            let edges = ep.path.edges(&params);
            assert_eq!(edges.len(), (s as usize).pow(2));
            assert_eq!(edges.iter().collect::<HashSet<_>>().len(), edges.len());
        }
    }
}
