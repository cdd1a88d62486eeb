mod common;

use std::collections::HashSet;

use marlin::graph::action_slice_to_dag;
use marlin::{action_to_dag, dag_decompose, is_acyclic, ActionVector, AdjacencyMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_action(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d * (d + 1)).map(|_| rng.random_range(-3.0..3.0)).collect()
}

proptest! {
    #[test]
    fn decoded_actions_are_acyclic(d in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = action_slice_to_dag(d, &random_action(d, &mut rng)).unwrap();
        prop_assert!(common::dfs_acyclic(&a));
        prop_assert!(is_acyclic(&a));
    }

    #[test]
    fn is_acyclic_agrees_with_dfs(d in 1usize..7, bits in any::<u64>()) {
        let mut a = AdjacencyMatrix::zeros(d);
        let mut k = 0;
        for i in 0..d {
            for j in (0..d).filter(|&j| j != i) {
                a.set(i, j, bits >> (k % 64) & 1 == 1);
                k += 1;
            }
        }
        prop_assert_eq!(is_acyclic(&a), common::dfs_acyclic(&a));
    }

    #[test]
    fn decomposition_reassembles(d in 1usize..=10, p in 0.0f64..0.9, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = common::random_dag(d, p, &mut rng);
        let dec = dag_decompose(&a).unwrap();
        for k in 0..d {
            prop_assert_eq!((0..d).filter(|&v| dec.permutation.get(k, v) == 1).count(), 1);
            prop_assert_eq!((0..d).filter(|&v| dec.permutation.get(v, k) == 1).count(), 1);
            for l in 0..=k {
                prop_assert_eq!(dec.upper.get(k, l), 0);
            }
        }
        for i in 0..d {
            for j in 0..d {
                let mut v = 0u32;
                for k in 0..d {
                    for l in 0..d {
                        v += u32::from(dec.permutation.get(k, i) * dec.upper.get(k, l) * dec.permutation.get(l, j));
                    }
                }
                prop_assert_eq!(v == 1, a.get(i, j));
            }
        }
    }
}

#[test]
fn decomposition_rejects_cycles() {
    let a = AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2), (2, 0)]);
    assert!(dag_decompose(&a).is_err());
}

#[test]
fn every_dag_on_three_nodes_has_a_preimage() {
    let dags = common::all_dags(3);
    assert_eq!(dags.len(), 25);
    for g in &dags {
        let order = g.topological_order().unwrap();
        let mut values = vec![0.0; 12];
        for (pos, &v) in order.iter().enumerate() {
            values[v] = (3 - pos) as f64;
        }
        for i in 0..3 {
            for j in 0..3 {
                values[3 + 3 * i + j] = if g.get(i, j) { 1.0 } else { -1.0 };
            }
        }
        assert_eq!(&action_to_dag(&ActionVector::new(3, values).unwrap()), g);
    }
}

#[test]
fn random_actions_cover_all_three_node_dags() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hit: HashSet<Vec<u8>> = (0..20_000)
        .map(|_| action_slice_to_dag(3, &random_action(3, &mut rng)).unwrap().as_slice().to_vec())
        .collect();
    let all: HashSet<Vec<u8>> = common::all_dags(3).iter().map(|g| g.as_slice().to_vec()).collect();
    assert_eq!(hit, all);
}
