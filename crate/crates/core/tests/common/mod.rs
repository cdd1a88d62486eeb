//! Independent reference implementations shared by the integration tests.
//! None of these call into the library's algorithms; they only use its types.

#![allow(dead_code)]

use marlin::AdjacencyMatrix;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

/// Depth-first three-colour cycle check.
pub fn dfs_acyclic(a: &AdjacencyMatrix) -> bool {
    fn visit(a: &AdjacencyMatrix, v: usize, colour: &mut [u8]) -> bool {
        colour[v] = 1;
        for w in 0..a.d() {
            if a.get(v, w) && (colour[w] == 1 || (colour[w] == 0 && !visit(a, w, colour))) {
                return false;
            }
        }
        colour[v] = 2;
        true
    }
    let mut colour = vec![0u8; a.d()];
    (0..a.d()).all(|v| colour[v] != 0 || visit(a, v, &mut colour))
}

/// Every labelled DAG on `d` nodes, by filtering all off-diagonal bit patterns.
pub fn all_dags(d: usize) -> Vec<AdjacencyMatrix> {
    let slots: Vec<(usize, usize)> = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    (0u64..1 << slots.len())
        .map(|bits| {
            let edges: Vec<(usize, usize)> = slots.iter().enumerate().filter(|(k, _)| bits >> k & 1 == 1).map(|(_, &e)| e).collect();
            AdjacencyMatrix::from_edges(d, &edges)
        })
        .filter(dfs_acyclic)
        .collect()
}

/// Random DAG: shuffled order, each forward pair an edge with probability `p`.
pub fn random_dag(d: usize, p: f64, rng: &mut impl Rng) -> AdjacencyMatrix {
    let mut order: Vec<usize> = (0..d).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            if rng.random_bool(p) {
                edges.push((order[a], order[b]));
            }
        }
    }
    AdjacencyMatrix::from_edges(d, &edges)
}

pub fn parents(a: &AdjacencyMatrix, j: usize) -> Vec<usize> {
    (0..a.d()).filter(|&i| a.get(i, j)).collect()
}

/// RSS of an ordinary least-squares fit solved through the normal equations
/// with an LU factorisation. `design` must already contain the intercept.
pub fn ols_rss(design: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let gram = design.transpose() * design;
    let rhs = design.transpose() * y;
    let beta = gram.lu().solve(&rhs).expect("singular normal equations");
    (y - design * beta).norm_squared()
}

pub fn linear_design(x: &DMatrix<f64>, pa: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), pa.len() + 1, |r, c| if c == 0 { 1.0 } else { x[(r, pa[c - 1])] })
}

/// Intercept, the parents, and every product `x_p x_q` with `p <= q`.
pub fn quadratic_design(x: &DMatrix<f64>, pa: &[usize]) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = vec![DVector::from_element(x.nrows(), 1.0)];
    for &p in pa {
        cols.push(x.column(p).into_owned());
    }
    for (k, &p) in pa.iter().enumerate() {
        for &q in &pa[k..] {
            cols.push(x.column(p).component_mul(&x.column(q)));
        }
    }
    DMatrix::from_columns(&cols)
}

/// Per-node RSS of every column under `a`.
pub fn node_rss(a: &AdjacencyMatrix, x: &DMatrix<f64>, quadratic: bool) -> Vec<f64> {
    (0..a.d())
        .map(|j| {
            let pa = parents(a, j);
            let design = if quadratic { quadratic_design(x, &pa) } else { linear_design(x, &pa) };
            ols_rss(&design, &x.column(j).into_owned())
        })
        .collect()
}

pub fn bic_per_node(a: &AdjacencyMatrix, x: &DMatrix<f64>, quadratic: bool) -> f64 {
    let n = x.nrows() as f64;
    let fit: f64 = node_rss(a, x, quadratic).iter().map(|r| n * (r / n).max(1e-12).ln()).sum();
    fit + a.edge_count() as f64 * n.ln()
}

pub fn bic_shared(a: &AdjacencyMatrix, x: &DMatrix<f64>, quadratic: bool) -> f64 {
    let n = x.nrows() as f64;
    let total = n * a.d() as f64;
    let rss: f64 = node_rss(a, x, quadratic).iter().sum();
    total * (rss / total).max(1e-12).ln() + a.edge_count() as f64 * n.ln()
}

/// All simple paths between `x` and `y` in the skeleton of `g`, as node lists.
fn skeleton_paths(g: &AdjacencyMatrix, x: usize, y: usize) -> Vec<Vec<usize>> {
    fn walk(g: &AdjacencyMatrix, y: usize, path: &mut Vec<usize>, on: &mut [bool], out: &mut Vec<Vec<usize>>) {
        let v = *path.last().unwrap();
        if v == y {
            out.push(path.clone());
            return;
        }
        for w in 0..g.d() {
            if !on[w] && (g.get(v, w) || g.get(w, v)) {
                on[w] = true;
                path.push(w);
                walk(g, y, path, on, out);
                path.pop();
                on[w] = false;
            }
        }
    }
    let mut on = vec![false; g.d()];
    on[x] = true;
    let mut out = Vec::new();
    walk(g, y, &mut vec![x], &mut on, &mut out);
    out
}

fn is_directed(g: &AdjacencyMatrix, path: &[usize]) -> bool {
    path.windows(2).all(|w| g.get(w[0], w[1]))
}

fn reach(g: &AdjacencyMatrix, src: usize) -> Vec<bool> {
    let mut seen = vec![false; g.d()];
    seen[src] = true;
    let mut frontier = vec![src];
    while let Some(v) = frontier.pop() {
        for w in 0..g.d() {
            if g.get(v, w) && !seen[w] {
                seen[w] = true;
                frontier.push(w);
            }
        }
    }
    seen
}

/// Path-wise blocking: a non-collider in `z`, or a collider with neither
/// itself nor a descendant in `z`.
fn blocked(g: &AdjacencyMatrix, path: &[usize], z: &[bool]) -> bool {
    (1..path.len() - 1).any(|k| {
        let (a, v, b) = (path[k - 1], path[k], path[k + 1]);
        let collider = g.get(a, v) && g.get(b, v);
        if collider {
            !reach(g, v).iter().zip(z).any(|(&de, &inz)| de && inz)
        } else {
            z[v]
        }
    })
}

/// Adjustment criterion checked by enumerating every path.
pub fn valid_adjustment_by_paths(g: &AdjacencyMatrix, x: usize, y: usize, z: &[bool]) -> bool {
    let paths = skeleton_paths(g, x, y);
    let mut forbidden = vec![false; g.d()];
    for p in paths.iter().filter(|p| is_directed(g, p)) {
        for &w in &p[1..] {
            for (f, de) in forbidden.iter_mut().zip(reach(g, w)) {
                *f |= de;
            }
        }
    }
    if z.iter().zip(&forbidden).any(|(&a, &b)| a && b) {
        return false;
    }
    paths.iter().filter(|p| !is_directed(g, p)).all(|p| blocked(g, p, z))
}

/// Structural intervention distance from its pairwise definition.
pub fn sid_by_paths(truth: &AdjacencyMatrix, est: &AdjacencyMatrix) -> usize {
    let d = truth.d();
    let mut errors = 0;
    for i in 0..d {
        let mut z = vec![false; d];
        for p in parents(est, i) {
            z[p] = true;
        }
        let de = reach(truth, i);
        for j in (0..d).filter(|&j| j != i) {
            let wrong = if z[j] { de[j] } else { !valid_adjustment_by_paths(truth, i, j, &z) };
            errors += usize::from(wrong);
        }
    }
    errors
}

/// Central finite differences of `f` at `theta`.
pub fn numeric_grad(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            t[k] = theta[k] + h;
            let up = f(&t);
            t[k] = theta[k] - h;
            let down = f(&t);
            t[k] = theta[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
