mod common;

use marlin::metrics::{auroc, d_separated, fdr, ranking_metrics, shd, sid, structure_metrics, summary_table, tpr};
use marlin::AdjacencyMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sid_matches_path_enumeration_on_all_three_node_pairs() {
    let dags = common::all_dags(3);
    for truth in &dags {
        for est in &dags {
            assert_eq!(sid(truth, est).unwrap(), common::sid_by_paths(truth, est), "truth {truth:?} est {est:?}");
        }
    }
}

#[test]
fn sid_matches_path_enumeration_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for d in [4, 5, 6] {
        for _ in 0..40 {
            let truth = common::random_dag(d, 0.45, &mut rng);
            let est = common::random_dag(d, 0.45, &mut rng);
            assert_eq!(sid(&truth, &est).unwrap(), common::sid_by_paths(&truth, &est));
        }
    }
}

#[test]
fn sid_is_zero_on_identity_and_counts_known_cases() {
    let chain = AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]);
    assert_eq!(sid(&chain, &chain).unwrap(), 0);
    // A reversed edge is wrong in both directions: the estimate denies the
    // effect 0 -> 1 and leaves the open path 1 <- 0 unadjusted.
    let g = AdjacencyMatrix::from_edges(2, &[(0, 1)]);
    let r = AdjacencyMatrix::from_edges(2, &[(1, 0)]);
    assert_eq!(sid(&g, &r).unwrap(), 2);
    assert_eq!(sid(&g, &AdjacencyMatrix::zeros(2)).unwrap(), 1);
}

#[test]
fn d_separation_classic_shapes() {
    let collider = AdjacencyMatrix::from_edges(3, &[(0, 2), (1, 2)]);
    assert!(d_separated(&collider, 0, 1, &[false; 3]));
    assert!(!d_separated(&collider, 0, 1, &[false, false, true]));
    let fork = AdjacencyMatrix::from_edges(3, &[(2, 0), (2, 1)]);
    assert!(!d_separated(&fork, 0, 1, &[false; 3]));
    assert!(d_separated(&fork, 0, 1, &[false, false, true]));
}

#[test]
fn counting_metrics() {
    let truth = AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]);
    let est = AdjacencyMatrix::from_edges(3, &[(0, 1), (2, 1), (0, 2)]);
    assert_eq!(tpr(&truth, &est).unwrap(), 0.5);
    assert!((fdr(&truth, &est).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    // one reversal and one extra edge
    assert_eq!(shd(&truth, &est).unwrap(), 2);
    assert_eq!(shd(&truth, &truth).unwrap(), 0);
}

#[test]
fn auroc_against_pair_counting() {
    let labels = [true, false, true, false, false, true];
    let scores = [0.9, 0.1, 0.4, 0.4, 0.8, 0.7];
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
            }
        }
    }
    assert!((auroc(&labels, &scores).unwrap() - wins / pairs).abs() < 1e-15);
}

#[test]
fn perfect_estimate_scores_perfectly() {
    let g = AdjacencyMatrix::from_edges(4, &[(0, 1), (1, 2), (0, 3)]);
    let r = structure_metrics(&g, &g, None).unwrap();
    assert_eq!((r.tpr, r.fdr, r.f1, r.auroc, r.shd, r.sid), (1.0, 0.0, 1.0, 1.0, 0, 0));
    let table = summary_table(&[(1, r), (2, r)]);
    assert!(table.lines().count() == 4 && table.contains("mean"));
}

#[test]
fn ranking_unit_cases() {
    let first = ranking_metrics(&[2, 0, 1], &[2], &[1, 3]).unwrap();
    assert_eq!(first.pr_at_k[0], 1.0);
    assert_eq!(first.mrr, 1.0);
    let second = ranking_metrics(&[0, 2, 1], &[2], &[1, 2]).unwrap();
    assert_eq!(second.mrr, 0.5);
    assert_eq!(second.pr_at_k, vec![0.0, 1.0]);
    assert_eq!(second.ap_at_k, vec![0.0, 0.5]);
    assert!(ranking_metrics(&[0, 1], &[], &[1]).is_err());
}
