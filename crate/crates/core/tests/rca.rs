use marlin::rca::{anomaly_scores, rank_root_causes, stationary, RwrConfig};
use marlin::AdjacencyMatrix;
use nalgebra::DMatrix;

/// Dense power iteration on the explicit column-stochastic matrix.
fn dense_oracle(a: &AdjacencyMatrix, scores: &[f64], r: f64) -> Vec<f64> {
    let d = a.d();
    let total: f64 = scores.iter().sum();
    let q: Vec<f64> = scores.iter().map(|s| s / total).collect();
    let mut w = DMatrix::zeros(d, d);
    for j in 0..d {
        let pa: Vec<usize> = (0..d).filter(|&i| a.get(i, j)).collect();
        if pa.is_empty() {
            for i in 0..d {
                w[(i, j)] = q[i];
            }
        } else {
            for &i in &pa {
                w[(i, j)] = 1.0 / pa.len() as f64;
            }
        }
    }
    let qv = nalgebra::DVector::from_vec(q);
    // (I - (1-r) W) pi = r q
    let m = DMatrix::identity(d, d) - w * (1.0 - r);
    m.lu().solve(&(qv * r)).unwrap().iter().copied().collect()
}

#[test]
fn matches_linear_solve() {
    let a = AdjacencyMatrix::from_edges(5, &[(0, 1), (1, 2), (0, 3), (3, 2), (4, 2)]);
    let scores = [0.1, 0.5, 2.0, 0.0, 0.7];
    for r in [0.15, 0.3, 0.6] {
        let cfg = RwrConfig { restart_prob: r, anomaly_scores: scores.to_vec(), ..Default::default() };
        let got = stationary(&a, &cfg).unwrap();
        let want = dense_oracle(&a, &scores, r);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9);
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn chain_with_leaf_restart_closed_form() {
    // Restart and dangling mass both land on the leaf: with u = 1 - r,
    // pi_2 = r / (1 - u^3), pi_1 = u pi_2, pi_0 = u^2 pi_2.
    let a = AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]);
    for r in [0.05, 0.3, 0.8] {
        let cfg = RwrConfig { restart_prob: r, anomaly_scores: vec![0.0, 0.0, 1.0], ..Default::default() };
        let pi = stationary(&a, &cfg).unwrap();
        let u = 1.0 - r;
        let leaf = r / (1.0 - u.powi(3));
        assert!((pi[2] - leaf).abs() < 1e-10);
        assert!((pi[1] - u * leaf).abs() < 1e-10);
        assert!((pi[0] - u * u * leaf).abs() < 1e-10);
        let order: Vec<usize> = rank_root_causes(&a, &cfg).unwrap().iter().map(|n| n.node).collect();
        assert_eq!(order, vec![2, 1, 0]);
    }
}

#[test]
fn anomaly_scores_pick_the_shifted_column() {
    let normal = DMatrix::from_fn(200, 3, |r, c| ((r * 7 + c * 3) % 11) as f64 - 5.0);
    let mut fault = normal.clone();
    for r in 0..200 {
        fault[(r, 1)] *= 4.0;
    }
    let s = anomaly_scores(&normal, &fault).unwrap();
    assert!(s[1] > 0.0);
    assert_eq!((s[0], s[2]), (0.0, 0.0));
    assert!(anomaly_scores(&normal, &DMatrix::zeros(3, 2)).is_err());
}
